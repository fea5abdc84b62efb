"""Quantum Monte Carlo wave-function engine with drive-gating feedback.

Between jumps the state evolves exactly under exp(-i H_eff dt) on a fixed
dyadic grid: propagators for step sizes dt_fine * 2^k (dt_fine = dt_max/128)
are precomputed per (coupling scale, drive scale) and the monotonically
decreasing squared norm is compared against a pre-drawn uniform threshold.
A crossing is bisected down to dt_fine (well below the dt_max/100 contract),
the jump channel is drawn with probability ~ ||c psi||^2, the collapse is
applied and the threshold redrawn.  All event times therefore live on the
fine grid and get floored to integer nanoseconds in the emitted record,
like a hardware time tagger.

The feedback actuator multiplies the injected drive by attenuation_factor
inside [t_det + latency + delay, ... + window]; a retrigger during an open
window restarts (extends) it.  Atom transits pin a Gaussian coupling
envelope, discretized into piecewise-constant tiles.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
from numba import njit

from .operators import (G_MINUS, G_PLUS, G_ZERO,
                        build_effective_hamiltonian, build_operators,
                        build_space, coherent_cavity_state)
from .params import ConfigError, PhysicalParams, steady_alpha
from .records import Channel, DetectionRecord, H_DETECTORS, make_record

_LADDER_MAX = 13            # largest dyadic step: 2^13 * dt_fine = 64 * dt_max
_FINE_PER_DT_MAX = 128      # jump-time resolution relative to dt_max
_TRANSIT_TILES = 32         # piecewise-constant tiles across one transit

_LEVEL_BY_NAME = {"g_minus": G_MINUS, "g_zero": G_ZERO, "g_plus": G_PLUS}


class TrajectoryError(RuntimeError):
    """Numerical failure during trajectory integration."""


@njit(cache=True)
def _walk(psi, t, end, ladders, threshold, max_k):
    """Advance to `end` or to the first norm-threshold crossing.

    Steps with the largest dyadic propagator that fits, then bisects a
    crossing down to one fine tick.  Returns (psi, t, crossed); psi is the
    unnormalized state just past the crossing when crossed is True.
    """
    while t < end:
        remaining = end - t
        k = 0
        while (1 << (k + 1)) <= remaining and k < max_k:
            k += 1
        trial = np.dot(ladders[k], psi)
        n2 = 0.0
        for i in range(trial.shape[0]):
            n2 += trial[i].real ** 2 + trial[i].imag ** 2
        if n2 > threshold:
            psi = trial
            t += 1 << k
            continue
        while k > 0:
            k -= 1
            half = np.dot(ladders[k], psi)
            n2 = 0.0
            for i in range(half.shape[0]):
                n2 += half[i].real ** 2 + half[i].imag ** 2
            if n2 > threshold:
                psi = half
                t += 1 << k
        psi = np.dot(ladders[0], psi)
        t += 1
        return psi, t, True
    return psi, t, False


@njit(cache=True)
def _select_and_apply(channel_ops, psi, u):
    """Draw the jump channel with P ~ ||c psi||^2 and apply the collapse.

    u is a uniform(0,1) variate.  Returns (channel, normalized psi, total);
    total <= 0 signals that no channel is open.
    """
    nc, dim = channel_ops.shape[0], channel_ops.shape[1]
    projected = np.empty((nc, dim), dtype=np.complex128)
    probs = np.empty(nc)
    total = 0.0
    for c in range(nc):
        row = np.dot(channel_ops[c], psi)
        projected[c] = row
        p = 0.0
        for i in range(dim):
            p += row[i].real ** 2 + row[i].imag ** 2
        probs[c] = p
        total += p
    if not np.isfinite(total) or total <= 0.0:
        return -1, psi, total
    target = u * total
    acc = 0.0
    channel = nc - 1
    for c in range(nc):
        acc += probs[c]
        if target < acc:
            channel = c
            break
    out = projected[channel] / np.sqrt(probs[channel])
    return channel, out, total


@dataclass(frozen=True)
class FeedbackProtocol:
    """Drive-gating loop: trigger -> latency + delay -> attenuated window."""

    enabled: bool = False
    trigger_channel: str = "H"          # "H" (either detector), "H_det_A", "H_det_B"
    electronic_latency: float = 50e-9   # loop electronics, placeholder value
    delay_after_detection: float = 0.0
    window_duration: float = 3e-6
    attenuation_factor: float = 0.05

    def __post_init__(self):
        if not 0.0 <= self.attenuation_factor <= 1.0:
            raise ConfigError("attenuation_factor must lie in [0, 1]")
        if min(self.electronic_latency, self.delay_after_detection,
               self.window_duration) < 0:
            raise ConfigError("feedback durations must be non-negative")

    @property
    def trigger_channels(self) -> tuple:
        if self.trigger_channel == "H":
            return H_DETECTORS
        try:
            return (Channel[self.trigger_channel.upper()],)
        except KeyError:
            raise ConfigError(f"unknown trigger channel {self.trigger_channel!r}")


@dataclass(frozen=True)
class AtomModel:
    """Either a fixed maximally coupled atom or Gaussian transits."""

    kind: str = "fixed_max_coupled"     # or "transit"
    mean_transit: float = 5e-6
    arrival_rate: float = 0.0           # atoms/s (transit model)

    def __post_init__(self):
        if self.kind not in ("fixed_max_coupled", "transit"):
            raise ConfigError(f"unknown atom model {self.kind!r}")
        if self.kind == "transit" and self.mean_transit <= 0:
            raise ConfigError("mean_transit must be positive")


@dataclass(frozen=True)
class TrajectoryConfig:
    duration: float = 100e-6
    dt_max: float = 1e-9
    seed: int = 0
    n_max_v: int = 2
    n_max_h: int = 2
    atom_model: AtomModel = field(default_factory=AtomModel)
    initial_atom_state: str | tuple = "g_zero"  # level name or (p-, p0, p+)
    feedback: FeedbackProtocol = field(default_factory=FeedbackProtocol)
    track_flux: bool = False            # accumulate integrated <c^dag c> per channel

    def __post_init__(self):
        if self.duration <= 0 or self.dt_max <= 0:
            raise ConfigError("duration and dt_max must be positive")

    def with_(self, **kwargs) -> "TrajectoryConfig":
        return replace(self, **kwargs)


def transit_coupling(t: float, atom_arrival: float, mean_transit: float,
                     g_max: float = 1.0) -> float:
    """Gaussian coupling envelope of one transit.

    sigma = mean_transit / 4, centered half a transit after arrival, so the
    full transit spans about +-2 sigma.  The effective interaction time
    (integral of (g/g_max)^2) is sigma * sqrt(pi).
    """
    if mean_transit <= 0:
        raise ConfigError("mean_transit must be positive")
    sigma = mean_transit / 4.0
    t_center = atom_arrival + 0.5 * mean_transit
    return g_max * math.exp(-((t - t_center) ** 2) / (2.0 * sigma**2))


def feedback_envelope(protocol: FeedbackProtocol, detection_times, t: float) -> float:
    """Drive multiplier at time t given the trigger detection times.

    Pure reference implementation of the actuator (the engine maintains an
    incremental equivalent): attenuated inside the union of the per-trigger
    windows, 1 elsewhere.
    """
    if not protocol.enabled:
        return 1.0
    shift = protocol.electronic_latency + protocol.delay_after_detection
    for t_det in np.atleast_1d(np.asarray(detection_times, dtype=float)):
        if t_det + shift <= t <= t_det + shift + protocol.window_duration:
            return protocol.attenuation_factor
    return 1.0


# --------------------------------------------------------------------------
# Engine
# --------------------------------------------------------------------------


def _rate_scale(params: PhysicalParams) -> float:
    return max(params.g, params.kappa, params.gamma, abs(params.delta_g),
               abs(params.delta_e), abs(params.drive_detuning),
               params.kappa * abs(params.drive_amplitude))


class TrajectoryEngine:
    """Reusable, immutable-after-init machinery shared by all trajectories."""

    def __init__(self, params: PhysicalParams, config: TrajectoryConfig):
        if config.dt_max * _rate_scale(params) >= 0.05:
            raise ConfigError("dt_max * max(rates) must stay below 0.05")
        self.params = params
        self.config = config
        self.space = build_space(config.n_max_v, config.n_max_h)
        self.ops = build_operators(self.space, params)
        self.dt_fine = config.dt_max / _FINE_PER_DT_MAX
        self.duration_ticks = int(round(config.duration / self.dt_fine))
        self.channel_ops = self._detection_channels()
        self._ladder_cache: dict = {}
        self._max_k = 7 if config.track_flux else _LADDER_MAX

        fb = config.feedback
        self._fb_shift_ticks = self._ticks(fb.electronic_latency
                                           + fb.delay_after_detection)
        self._fb_window_ticks = self._ticks(fb.window_duration)
        self._trigger_set = ({int(c) for c in fb.trigger_channels}
                             if fb.enabled else set())

        am = config.atom_model
        self._transit = am.kind == "transit"
        if self._transit:
            self._transit_ticks = self._ticks(am.mean_transit)
            self._tile_ticks = max(self._transit_ticks // _TRANSIT_TILES, 1)

    def _ticks(self, seconds: float) -> int:
        return int(round(seconds / self.dt_fine))

    def _detection_channels(self) -> np.ndarray:
        """Dense collapse operators indexed by the Channel enum ordinals.

        The local-oscillator mixing rotates the two cavity outputs
        unitarily: the detected field is (a_H + eps a_V)/sqrt(1+|eps|^2),
        split 50/50 over the two H detectors; the undetected complement
        leaves through V_OUT.  The total sum c^dag c is unchanged.
        """
        p = self.params
        eps = complex(p.lo_mix)
        denom = math.sqrt(1.0 + abs(eps) ** 2)
        a_h = self.ops.a_h.toarray()
        a_v = self.ops.a_v.toarray()
        detected = (a_h + eps * a_v) / denom
        remainder = (a_v - np.conj(eps) * a_h) / denom
        ops = [
            math.sqrt(p.kappa) * detected,                 # H_DET_A
            math.sqrt(p.kappa) * detected,                 # H_DET_B
            math.sqrt(2.0 * p.kappa) * remainder,          # V_OUT
            self.ops.s_pi.toarray(),                       # SIDE_PI
            self.ops.s_sigma_plus.toarray(),               # SIDE_SIGMA_PLUS
            self.ops.s_sigma_minus.toarray(),              # SIDE_SIGMA_MINUS
        ]
        return np.stack(ops)

    def _ladders(self, g_scale: float, drive_scale: float) -> np.ndarray:
        """Stacked propagators exp(-i H dt_fine 2^k), k = 0..max_k.

        Built by repeated squaring of the fine-step exponential; the
        propagators are contractions, so squaring keeps the error at the
        machine-precision level.
        """
        key = (round(g_scale, 12), round(drive_scale, 12))
        cached = self._ladder_cache.get(key)
        if cached is None:
            h = build_effective_hamiltonian(self.space, self.params,
                                            drive_scale, g_scale=g_scale,
                                            ops=self.ops).toarray()
            dim = self.space.dim
            cached = np.empty((self._max_k + 1, dim, dim), dtype=np.complex128)
            cached[0] = scipy.linalg.expm(-1j * h * self.dt_fine)
            for k in range(1, self._max_k + 1):
                cached[k] = cached[k - 1] @ cached[k - 1]
            self._ladder_cache[key] = cached
        return cached

    # -- per-trajectory run ------------------------------------------------

    def run(self, traj_index: int = 0) -> DetectionRecord:
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=self.config.seed,
                                   spawn_key=(traj_index,)))
        level = self._initial_level(rng)
        drive_on = abs(self.params.drive_amplitude) > 0
        psi = coherent_cavity_state(self.space,
                                    steady_alpha(self.params) if drive_on else 0.0,
                                    level)

        arrivals = self._draw_arrivals(rng) if self._transit else None
        state = _RunState(psi=psi, rng=rng,
                          threshold=self._draw_threshold(rng))
        flux = np.zeros(len(self.channel_ops)) if self.config.track_flux else None

        t = 0
        arrival_idx = 0
        simple = not self._transit and not self.config.feedback.enabled
        ladders = self._ladders(1.0, 1.0) if simple else None
        while t < self.duration_ticks:
            if simple:
                seg_end, g_boundary, event = self.duration_ticks, None, None
            else:
                g_scale, g_boundary, event, arrival_idx = \
                    self._coupling_at(t, arrivals, arrival_idx)
                drive_scale, e_boundary = self._envelope_at(t, state)
                seg_end = min(self.duration_ticks, g_boundary, e_boundary)
                ladders = self._ladders(g_scale, drive_scale)
            t, jumped = self._advance(state, t, seg_end, ladders, flux)
            if jumped:
                self._apply_jump(state, t)
                continue
            if event is not None and t == g_boundary:
                kind, _ = event
                if kind == "arrival":
                    self._refresh_atom(state)
                else:
                    self._collapse_atom(state)

        if not np.all(np.isfinite(state.psi)):
            raise TrajectoryError("non-finite amplitudes during evolution")
        return self._build_record(state, flux, traj_index)

    def _initial_level(self, rng) -> int:
        init = self.config.initial_atom_state
        if isinstance(init, str):
            try:
                return _LEVEL_BY_NAME[init]
            except KeyError:
                raise ConfigError(f"unknown initial atom state {init!r}")
        probs = np.asarray(init, dtype=float)
        if len(probs) != 3 or probs.min() < 0 or not math.isclose(probs.sum(), 1.0,
                                                                  abs_tol=1e-9):
            raise ConfigError("initial state distribution must be 3 probabilities")
        return int(rng.choice([G_MINUS, G_ZERO, G_PLUS], p=probs / probs.sum()))

    @staticmethod
    def _draw_threshold(rng) -> float:
        r = rng.random()
        return r if r > 0.0 else np.finfo(float).tiny

    def _draw_arrivals(self, rng) -> np.ndarray:
        """Poisson arrivals, thinned so transits never overlap (one atom at
        a time; overlap effects are synthesized by record mixing instead)."""
        rate = self.config.atom_model.arrival_rate
        if rate <= 0:
            return np.empty(0, dtype=np.int64)
        arrivals = []
        t = 0.0
        blocked_until = -1.0
        while True:
            t += rng.exponential(1.0 / rate)
            if t >= self.config.duration:
                break
            if t >= blocked_until:
                arrivals.append(self._ticks(t))
                blocked_until = t + self.config.atom_model.mean_transit
        return np.asarray(arrivals, dtype=np.int64)

    def _coupling_at(self, t: int, arrivals, idx: int):
        """(g_scale, boundary tick, boundary event, atom index) at tick t.

        idx points at the atom currently in transit or the next one to
        arrive; completed transits advance it.  The event, when not None,
        is ('arrival'|'departure', tick) and fires once t reaches the
        returned boundary.
        """
        if not self._transit:
            return 1.0, self.duration_ticks, None, idx
        while True:
            if idx >= len(arrivals):
                return 0.0, self.duration_ticks, None, idx
            arr = int(arrivals[idx])
            end = arr + self._transit_ticks
            if t < arr:
                return 0.0, arr, ("arrival", arr), idx
            if t >= end:
                idx += 1
                continue
            tile = (t - arr) // self._tile_ticks
            tile_end = min(arr + (tile + 1) * self._tile_ticks, end)
            t_mid = (arr + (tile + 0.5) * self._tile_ticks) * self.dt_fine
            g_scale = transit_coupling(t_mid, arr * self.dt_fine,
                                       self.config.atom_model.mean_transit)
            event = ("departure", end) if tile_end == end else None
            return g_scale, tile_end, event, idx

    def _envelope_at(self, t: int, state) -> tuple[float, int]:
        """(drive_scale, next switch tick) from the merged trigger windows."""
        if not self.config.feedback.enabled:
            return 1.0, self.duration_ticks
        windows = state.att_windows
        while state.win_idx < len(windows) and windows[state.win_idx][1] <= t:
            state.win_idx += 1
        if state.win_idx >= len(windows):
            return 1.0, self.duration_ticks
        on, off = windows[state.win_idx]
        if t < on:
            return 1.0, on
        return self.config.feedback.attenuation_factor, off

    def _advance(self, state, t: int, end: int, ladders, flux):
        """Propagate to `end` or to the first norm-threshold crossing.

        Non-finite amplitudes surface either in the jump-channel draw (total
        not finite) or in the final state check after the run.
        """
        if flux is None:
            psi, t, crossed = _walk(state.psi, t, end, ladders,
                                    state.threshold, self._max_k)
        else:
            # diagnostics path: step at most 2^max_k ticks, integrating
            # the normalized channel flux with a rectangle rule
            psi, crossed = state.psi, False
            while t < end and not crossed:
                norm2 = np.vdot(psi, psi).real
                if norm2 <= 0:
                    raise TrajectoryError("norm underflow without jump resolution")
                step_end = min(end, t + (1 << self._max_k))
                rates = np.abs(self.channel_ops @ psi) ** 2
                flux += rates.sum(axis=1) / norm2 * ((step_end - t) * self.dt_fine)
                psi, t, crossed = _walk(psi, t, step_end, ladders,
                                        state.threshold, self._max_k)
        state.psi = psi
        return t, crossed

    def _apply_jump(self, state, t: int) -> None:
        channel, psi, total = _select_and_apply(self.channel_ops, state.psi,
                                                state.rng.random())
        if channel < 0:
            raise TrajectoryError("jump resolution failed: no open channel")
        state.psi = psi
        state.events_t.append(t)
        state.events_c.append(channel)
        state.threshold = self._draw_threshold(state.rng)
        if channel in self._trigger_set:
            self._register_trigger(state, t)

    def _register_trigger(self, state, t: int) -> None:
        on = t + self._fb_shift_ticks
        off = on + self._fb_window_ticks
        windows = state.att_windows
        if windows and on <= windows[-1][1]:
            windows[-1][1] = max(windows[-1][1], off)  # retrigger restarts
        else:
            windows.append([on, off])

    def _collapse_atom(self, state) -> int:
        """Project the departing atom onto a definite level (seeded).

        The state norm is preserved through the projection, so the pending
        no-jump threshold remains statistically exact across the boundary.
        """
        shaped = state.psi.reshape(6, -1)
        pops = np.einsum("ij,ij->i", np.abs(shaped), np.abs(shaped))
        total = pops.sum()
        if total <= 0:
            raise TrajectoryError("norm underflow at transit boundary")
        level = int(np.searchsorted(np.cumsum(pops), state.rng.random() * total,
                                    side="right"))
        level = min(level, 5)
        new = np.zeros_like(shaped)
        new[level] = shaped[level] * math.sqrt(total / pops[level])
        state.psi = new.reshape(-1)
        return level

    def _refresh_atom(self, state) -> None:
        """Swap in a fresh atom: collapse the old one, relabel the level."""
        src = self._collapse_atom(state)
        shaped = state.psi.reshape(6, -1)
        target = self._initial_level(state.rng)
        if target != src:
            new = np.zeros_like(shaped)
            new[target] = shaped[src]
            state.psi = new.reshape(-1)

    def _build_record(self, state, flux, traj_index) -> DetectionRecord:
        ns_per_fine = self.config.dt_max * 1e9 / _FINE_PER_DT_MAX
        times_ns = (np.asarray(state.events_t, dtype=np.int64)
                    * ns_per_fine).astype(np.int64)
        channels = np.asarray(state.events_c, dtype=np.uint8)
        duration_ns = int(self.duration_ticks * ns_per_fine)
        meta = {"seed": str(self.config.seed), "trajectory": str(traj_index),
                "dt_max_s": repr(self.config.dt_max)}
        if flux is not None:
            for c, value in zip(Channel, flux):
                meta[f"flux_{c.name}"] = repr(float(value))
        return make_record(times_ns, channels, duration_ns=duration_ns,
                           metadata=meta)


class _RunState:
    """Mutable per-trajectory scratch (kept out of the engine)."""

    __slots__ = ("psi", "rng", "threshold", "events_t", "events_c",
                 "att_windows", "win_idx")

    def __init__(self, psi, rng, threshold):
        self.psi = psi
        self.rng = rng
        self.threshold = threshold
        self.events_t = []
        self.events_c = []
        self.att_windows = []
        self.win_idx = 0


# --------------------------------------------------------------------------
# Public entry points
# --------------------------------------------------------------------------


def evolve_trajectory(params: PhysicalParams, config: TrajectoryConfig,
                      traj_index: int = 0,
                      engine: TrajectoryEngine | None = None) -> DetectionRecord:
    """Run one trajectory; the record carries all events with truth tags."""
    engine = engine or TrajectoryEngine(params, config)
    return engine.run(traj_index)


@dataclass(frozen=True)
class EnsembleResult:
    records: list
    metadata: dict


def _run_chunk(args) -> list:
    params, config, indices = args
    engine = TrajectoryEngine(params, config)
    return [engine.run(i) for i in indices]


def default_jobs() -> int:
    try:
        return max(int(os.environ.get("QBEATS_JOBS", "1")), 1)
    except ValueError:
        return 1


def run_ensemble(params: PhysicalParams, config: TrajectoryConfig,
                 n_traj: int, jobs: int | None = None) -> EnsembleResult:
    """Seeded ensemble: trajectory k uses substream (seed, k).

    Results are merged by trajectory index, so the output is bit-identical
    for any worker count.
    """
    if n_traj < 1:
        raise ConfigError("n_traj must be >= 1")
    jobs = default_jobs() if jobs is None else max(int(jobs), 1)
    indices = list(range(n_traj))
    if jobs == 1 or n_traj == 1:
        engine = TrajectoryEngine(params, config)
        records = [engine.run(i) for i in indices]
    else:
        chunk = max(1, math.ceil(n_traj / (jobs * 4)))
        tasks = [(params, config, indices[i:i + chunk])
                 for i in range(0, n_traj, chunk)]
        records = []
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for part in pool.map(_run_chunk, tasks):
                records.extend(part)
    metadata = {"seed": str(config.seed), "n_traj": str(n_traj),
                "duration_s": repr(config.duration)}
    return EnsembleResult(records=records, metadata=metadata)
