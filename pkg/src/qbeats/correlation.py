"""Intensity-correlation estimation, spectra, fits and post-selection filters.

g2_estimate implements the multi-stop estimator: every start-channel
detection opens a window and stop-channel detections are histogrammed at
their lag, normalized by n_starts * stop_rate * bin_width.  Starts within
tau_max of the record end are skipped so every bin sees the same number of
windows.  The post-selection filters reproduce the two record-conditioning
schemes: a cap on undetected side emissions following the conditioning
detection, and a high-pass time filter that deletes bursty stretches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .records import (Channel, DetectionRecord, H_DETECTORS, SIDE_CHANNELS,
                      make_record)
from .theory import beat_model


class AnalysisError(ValueError):
    """Degenerate or unsupported analysis input."""


class FitError(RuntimeError):
    """Fit did not converge; carries the best residual norm reached."""

    def __init__(self, message, residual_norm=None):
        self.residual_norm = residual_norm
        super().__init__(message)


@dataclass(frozen=True)
class CorrelationResult:
    """Binned g2(tau) with normalization metadata.

    tau_bins holds the n+1 bin edges in seconds; counts/g2/stderr are per
    bin.  n_starts is the number of conditioning events that contributed.
    """

    tau_bins: np.ndarray
    counts: np.ndarray
    g2: np.ndarray
    stderr: np.ndarray
    n_starts: int
    stop_rate: float
    metadata: dict = field(default_factory=dict)

    @property
    def tau(self) -> np.ndarray:
        """Bin centers in seconds."""
        return 0.5 * (self.tau_bins[:-1] + self.tau_bins[1:])

    @property
    def bin_width(self) -> float:
        return float(self.tau_bins[1] - self.tau_bins[0])


@dataclass(frozen=True)
class FitResult:
    """Damped-cosine fit parameters with covariance from the final Jacobian."""

    amplitude: float
    freq: float
    phase: float
    decay: float
    offset: float
    covariance: np.ndarray
    residual_norm: float
    n_points: int

    def as_dict(self) -> dict:
        return {"amplitude": self.amplitude, "freq": self.freq,
                "phase": self.phase, "decay": self.decay,
                "offset": self.offset,
                "covariance": self.covariance.tolist(),
                "residual_norm": self.residual_norm,
                "n_points": self.n_points}


# --------------------------------------------------------------------------
# g2 estimation
# --------------------------------------------------------------------------


def _start_times(record: DetectionRecord, start_channels) -> np.ndarray:
    if record.starts is not None:
        return np.asarray(record.starts, dtype=np.int64)
    return record.channel_times_ns(start_channels)


def g2_estimate(record: DetectionRecord,
                start_channels=(Channel.H_DET_A,),
                stop_channels=(Channel.H_DET_B,),
                bin_width: float = 10e-9,
                tau_max: float = 6e-6,
                conditioning: str = "all_pairs",
                stop_rate: float | None = None) -> CorrelationResult:
    """Multi-stop (all_pairs) or classic first-stop (start_stop) estimator.

    Cross-correlating the two H detectors avoids detector dead-time
    artifacts near tau = 0.  If the record carries post-selected
    conditioning starts (record.starts), those are used instead of the
    start-channel events.  stop_rate overrides the whole-record average
    stop rate used for normalization (needed for drive-gated records).
    """
    if bin_width <= 0 or tau_max < bin_width:
        raise AnalysisError("need bin_width > 0 and tau_max >= bin_width")
    if conditioning not in ("all_pairs", "start_stop"):
        raise AnalysisError(f"unknown conditioning {conditioning!r}")

    bin_ns = int(round(bin_width * 1e9))
    n_bins = int(round(tau_max * 1e9)) // bin_ns
    tau_max_ns = n_bins * bin_ns

    starts = _start_times(record, start_channels)
    stops = record.channel_times_ns(stop_channels)
    if len(starts) == 0 or len(stops) == 0:
        raise AnalysisError("degenerate input: empty start or stop channel")

    starts = starts[starts <= record.duration_ns - tau_max_ns]
    if len(starts) == 0:
        raise AnalysisError("degenerate input: no start event has a full window")

    counts = np.zeros(n_bins, dtype=np.int64)
    lo = np.searchsorted(stops, starts, side="left")
    hi = np.searchsorted(stops, starts + tau_max_ns, side="left")
    if conditioning == "all_pairs":
        for s, a, b in zip(starts, lo, hi):
            taus = stops[a:b] - s
            # exclude an event paired with itself (same stamp, same stream)
            if b > a and taus[0] == 0:
                n_self = _self_pair_count(record, s, start_channels, stop_channels)
                taus = taus[n_self:] if n_self else taus
            np.add.at(counts, taus // bin_ns, 1)
    else:
        for s, a, b in zip(starts, lo, hi):
            taus = stops[a:b] - s
            taus = taus[taus > 0]
            if len(taus):
                counts[taus[0] // bin_ns] += 1

    if stop_rate is None:
        stop_rate = len(stops) / record.duration
    norm = len(starts) * stop_rate * (bin_ns * 1e-9)
    g2 = counts / norm
    stderr = np.sqrt(counts) / norm
    edges = np.arange(n_bins + 1, dtype=float) * bin_ns * 1e-9
    return CorrelationResult(tau_bins=edges, counts=counts, g2=g2,
                             stderr=stderr, n_starts=len(starts),
                             stop_rate=float(stop_rate),
                             metadata={"conditioning": conditioning})


def _self_pair_count(record, t, start_channels, stop_channels) -> int:
    """Events at stamp t lying in both the start and stop streams."""
    start_set = {int(c) for c in np.atleast_1d(np.asarray(start_channels, dtype=int))}
    stop_set = {int(c) for c in np.atleast_1d(np.asarray(stop_channels, dtype=int))}
    both = start_set & stop_set
    if not both or record.starts is not None:
        return 0
    i = np.searchsorted(record.times_ns, t, side="left")
    j = np.searchsorted(record.times_ns, t, side="right")
    return int(np.isin(record.channels[i:j], list(both)).sum())


# --------------------------------------------------------------------------
# Spectrum
# --------------------------------------------------------------------------


def fft_spectrum(corr: CorrelationResult, zero_pad: int = 4,
                 window: str | None = "hann") -> tuple[np.ndarray, np.ndarray]:
    """Discrete Fourier power of (g2 - mean), frequency axis in Hz.

    A Hann window (the default) suppresses leakage for peak hunting; pass
    window=None for the plain periodogram, whose line shape for a damped
    cosine is the Lorentzian of the decay rate.  Zero padding refines the
    frequency grid for peak localization.
    """
    widths = np.diff(corr.tau_bins)
    if not np.allclose(widths, widths[0], rtol=1e-9, atol=0.0):
        raise AnalysisError("fft_spectrum requires uniform bins")
    if window not in ("hann", None):
        raise AnalysisError(f"unknown window {window!r}")
    y = corr.g2 - corr.g2.mean()
    if window == "hann":
        y = y * np.hanning(len(y))
    n_pad = int(zero_pad) * len(y)
    spectrum = np.fft.rfft(y, n=n_pad)
    freqs = np.fft.rfftfreq(n_pad, d=corr.bin_width)
    return freqs, np.abs(spectrum) ** 2


def spectrum_peak(freqs: np.ndarray, power: np.ndarray,
                  f_min: float = 0.0) -> tuple[float, float]:
    """Peak frequency by parabolic interpolation of log power (DC excluded)."""
    valid = np.nonzero(freqs > max(f_min, 0.0))[0]
    if len(valid) < 3:
        raise AnalysisError("spectrum too short for peak search")
    k = valid[np.argmax(power[valid])]
    if k == 0 or k + 1 >= len(power):
        return float(freqs[k]), float(power[k])
    logp = np.log(np.maximum(power[k - 1:k + 2], 1e-300))
    denom = logp[0] - 2.0 * logp[1] + logp[2]
    shift = 0.0 if denom == 0.0 else 0.5 * (logp[0] - logp[2]) / denom
    shift = float(np.clip(shift, -0.5, 0.5))
    df = freqs[1] - freqs[0]
    return float(freqs[k] + shift * df), float(power[k])


# --------------------------------------------------------------------------
# Damped-cosine fit
# --------------------------------------------------------------------------


def fit_damped_cosine(corr: CorrelationResult,
                      initial_guess: dict | None = None,
                      tau_range: tuple[float, float] | None = None,
                      max_nfev: int = 2000,
                      fix_freq: float | None = None) -> FitResult:
    """Least-squares fit of offset + A e^{-decay t} cos(freq t + phase).

    The fit is deterministic given the data and guess.  Without a guess,
    the frequency seed comes from the FFT peak.  tau_range restricts the
    fitted window (e.g. to skip the conditioning transient or a drive-off
    interval).  fix_freq pins the frequency (rad/s) and fits only the
    remaining four parameters, the right instrument for comparing phases
    between curves.  Raises FitError after max_nfev evaluations.
    """
    tau = corr.tau
    y = corr.g2
    # Poisson weights; empty bins keep a one-count scale instead of zero
    norm_scale = np.divide(corr.stderr, np.sqrt(np.maximum(corr.counts, 1)),
                           out=np.zeros_like(corr.stderr),
                           where=corr.counts > 0)
    unit = norm_scale[corr.counts > 0]
    unit = float(unit.mean()) if len(unit) else 1.0
    sigma = np.sqrt(np.maximum(corr.counts, 1)) * np.where(norm_scale > 0,
                                                           norm_scale, unit)
    mask = np.isfinite(y)
    if tau_range is not None:
        mask &= (tau >= tau_range[0]) & (tau <= tau_range[1])
    tau, y, sigma = tau[mask], y[mask], sigma[mask]
    if len(tau) < 5:
        raise AnalysisError("need at least 5 samples to fit")

    nyquist = math.pi / corr.bin_width
    guess = dict(initial_guess or {})
    if fix_freq is not None:
        return _fit_fixed_freq(tau, y, sigma, guess, float(fix_freq), max_nfev)
    if "freq" in guess:
        freq_seeds = [guess["freq"]]
    else:
        # seed from the plain periodogram of the fitted window (a Hann
        # window would suppress a decaying oscillation near the origin),
        # keeping the two strongest sub-Nyquist peaks
        sub = CorrelationResult(tau_bins=np.concatenate([tau - 0.5 * corr.bin_width,
                                                         [tau[-1] + 0.5 * corr.bin_width]]),
                                counts=np.zeros(len(tau), dtype=int), g2=y,
                                stderr=sigma, n_starts=corr.n_starts,
                                stop_rate=corr.stop_rate)
        freqs, power = fft_spectrum(sub, window=None)
        band = (freqs > 0) & (2 * math.pi * freqs < 0.7 * nyquist)
        order = np.argsort(power[band])[::-1]
        f_band = freqs[band]
        freq_seeds = [2 * math.pi * f_band[order[0]]]
        spacing = max(3 * (freqs[1] - freqs[0]), 0.02 * f_band[order[0]])
        for k in order[1:]:
            if abs(f_band[k] - freq_seeds[0] / (2 * math.pi)) > spacing:
                freq_seeds.append(2 * math.pi * f_band[k])
                break
    guess.setdefault("offset", float(np.mean(y)))
    guess.setdefault("amplitude", float(2.0 ** 0.5 * np.std(y)))
    guess.setdefault("phase", 0.0)
    guess.setdefault("decay", 1.0 / (tau[-1] - tau[0] + 1e-30))
    p0 = np.array([guess["amplitude"], freq_seeds[0], guess["phase"],
                   guess["decay"], guess["offset"]])
    if not np.all(np.isfinite(p0)) or not all(np.isfinite(freq_seeds)):
        raise AnalysisError("initial guess must be finite")

    def residuals(p):
        a, w, ph, d, off = p
        return (beat_model(tau, a, w, ph, abs(d), off) - y) / sigma

    # a single seed can sit on an alias at low signal-to-noise: try a few
    # deterministic variants and keep the best converged solution
    trials = []
    for base in freq_seeds:
        trials.extend([base, 0.5 * base, 2.0 * base])
    sol = None
    for w_seed in trials:
        if not 0 < w_seed < 0.95 * nyquist:
            continue
        trial_p0 = p0.copy()
        trial_p0[1] = w_seed
        trial = least_squares(residuals, trial_p0, max_nfev=max_nfev, method="lm")
        if not trial.success or not 0 < abs(trial.x[1]) < 0.95 * nyquist:
            continue
        if sol is None or trial.cost < sol.cost:
            sol = trial
    if sol is None:
        fallback = least_squares(residuals, p0, max_nfev=max_nfev, method="lm")
        raise FitError("fit did not converge to a sub-Nyquist oscillation",
                       residual_norm=float(np.linalg.norm(fallback.fun)))

    a, w, ph, d, off = sol.x
    d = abs(d)
    # canonical form: amplitude >= 0, freq > 0, phase in (-pi, pi]
    if a < 0:
        a, ph = -a, ph + math.pi
    if w < 0:
        w, ph = -w, -ph
    ph = math.remainder(ph, 2.0 * math.pi)

    m = len(sol.fun)
    dof = max(m - 5, 1)
    jtj = sol.jac.T @ sol.jac
    try:
        cov = np.linalg.inv(jtj) * (sol.fun @ sol.fun) / dof
    except np.linalg.LinAlgError:
        cov = np.full((5, 5), np.nan)
    return FitResult(amplitude=float(a), freq=float(w), phase=float(ph),
                     decay=float(d), offset=float(off), covariance=cov,
                     residual_norm=float(np.linalg.norm(sol.fun)), n_points=m)


def _fit_fixed_freq(tau, y, sigma, guess, freq, max_nfev) -> FitResult:
    """Quadrature fit at pinned frequency: y = off + e^{-d t}(a cos + b sin)."""

    def residuals(p):
        a, b, d, off = p
        envelope = np.exp(-abs(d) * tau)
        model = off + envelope * (a * np.cos(freq * tau) + b * np.sin(freq * tau))
        return (model - y) / sigma

    amp0 = guess.get("amplitude", float(2.0 ** 0.5 * np.std(y)))
    p0 = np.array([amp0, 0.0, guess.get("decay", 1.0 / (tau[-1] - tau[0] + 1e-30)),
                   guess.get("offset", float(np.mean(y)))])
    sol = least_squares(residuals, p0, max_nfev=max_nfev, method="lm")
    if not sol.success:
        raise FitError("fixed-frequency fit did not converge",
                       residual_norm=float(np.linalg.norm(sol.fun)))
    a, b, d, off = sol.x
    amplitude = math.hypot(a, b)
    phase = math.atan2(-b, a)
    m = len(sol.fun)
    dof = max(m - 4, 1)
    try:
        cov4 = np.linalg.inv(sol.jac.T @ sol.jac) * (sol.fun @ sol.fun) / dof
    except np.linalg.LinAlgError:
        cov4 = np.full((4, 4), np.nan)
    # map (a, b) covariance onto (amplitude, phase); frequency held exactly
    cov = np.zeros((5, 5))
    if amplitude > 0:
        j_amp = np.array([a / amplitude, b / amplitude])
        j_ph = np.array([b / amplitude**2, -a / amplitude**2])
        cov[0, 0] = j_amp @ cov4[:2, :2] @ j_amp
        cov[2, 2] = j_ph @ cov4[:2, :2] @ j_ph
    cov[3, 3] = cov4[2, 2]
    cov[4, 4] = cov4[3, 3]
    return FitResult(amplitude=float(amplitude), freq=float(freq),
                     phase=float(phase), decay=float(abs(d)), offset=float(off),
                     covariance=cov,
                     residual_norm=float(np.linalg.norm(sol.fun)), n_points=m)


# --------------------------------------------------------------------------
# Post-selection filters
# --------------------------------------------------------------------------


def filter_by_jump_count(records, max_jumps: float, window: float | None = None,
                         *, gamma: float | None = None,
                         start_channels=H_DETECTORS,
                         side_channels=SIDE_CHANNELS):
    """Keep conditioning starts followed by fewer than max_jumps side events.

    For every start-channel detection, the undetected side emissions (truth
    tags) within `window` after it are counted; the start survives when the
    count is strictly below max_jumps.  Default window is 300 atomic
    lifetimes (requires gamma).  Returns the records with their surviving
    conditioning starts attached, ready for g2_estimate.
    """
    single = isinstance(records, DetectionRecord)
    records = [records] if single else list(records)
    if window is None:
        if gamma is None:
            raise AnalysisError("window or gamma required")
        window = 300.0 / gamma
    window_ns = int(round(window * 1e9))

    out = []
    for rec in records:
        if rec.metadata.get("truth_stripped") == "1":
            raise AnalysisError("record lacks truth tags; jump-count filter unsupported")
        starts = _start_times(rec, start_channels)
        side_mask = np.isin(rec.truth, np.asarray(side_channels, dtype=np.uint8))
        side_times = rec.times_ns[side_mask]
        lo = np.searchsorted(side_times, starts, side="right")
        hi = np.searchsorted(side_times, starts + window_ns, side="right")
        keep = (hi - lo) < max_jumps
        out.append(rec.with_starts(starts[keep]))
    return out[0] if single else out


def strip_truth(record: DetectionRecord, keep_channels=H_DETECTORS + (Channel.V_OUT,)
                ) -> DetectionRecord:
    """Laboratory view of a record: detector clicks only, truth flagged gone."""
    mask = np.isin(record.channels, np.asarray(keep_channels, dtype=np.uint8))
    sub = record.subset(mask)
    meta = dict(sub.metadata)
    meta["truth_stripped"] = "1"
    return make_record(sub.times_ns, sub.channels, sub.channels.copy(),
                       duration_ns=record.duration_ns, metadata=meta)


def time_filter(record: DetectionRecord, coincidence_window: float,
                skip_duration: float, channels=None) -> DetectionRecord:
    """High-pass time filter enforcing single-emitter statistics.

    Scanning in time order, whenever two successive events are closer than
    coincidence_window both are discarded together with every event within
    skip_duration after the second; scanning resumes after the skipped
    region.  Events not on `channels` (default: all) are dropped from the
    output, which contains exactly the filtered analysis stream.
    """
    if coincidence_window <= 0 or skip_duration <= 0:
        raise AnalysisError("window and skip must be positive")
    window_ns = int(round(coincidence_window * 1e9))
    skip_ns = int(round(skip_duration * 1e9))

    if channels is not None:
        mask = np.isin(record.channels, np.asarray(channels, dtype=np.uint8))
        t = record.times_ns[mask]
        c = record.channels[mask]
        tr = record.truth[mask]
    else:
        t, c, tr = record.times_ns, record.channels, record.truth

    keep = np.zeros(len(t), dtype=bool)
    i = 0
    n = len(t)
    while i < n:
        if i + 1 < n and t[i + 1] - t[i] < window_ns:
            cutoff = t[i + 1] + skip_ns
            i += 2
            while i < n and t[i] <= cutoff:
                i += 1
        else:
            keep[i] = True
            i += 1

    meta = dict(record.metadata)
    meta["time_filter"] = f"window_ns={window_ns},skip_ns={skip_ns}"
    return make_record(t[keep], c[keep], tr[keep],
                       duration_ns=record.duration_ns, metadata=meta)


# --------------------------------------------------------------------------
# Feedback-epoch conditioning
# --------------------------------------------------------------------------


def feedback_windows(trigger_times_ns: np.ndarray, latency: float, delay: float,
                     window: float) -> np.ndarray:
    """Merged attenuated intervals [(on_ns, off_ns), ...] with window restart."""
    shift_ns = int(round((latency + delay) * 1e9))
    width_ns = int(round(window * 1e9))
    merged = []
    for t in np.sort(np.asarray(trigger_times_ns, dtype=np.int64)):
        on, off = int(t) + shift_ns, int(t) + shift_ns + width_ns
        if merged and on <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], off)
        else:
            merged.append([on, off])
    return np.asarray(merged, dtype=np.int64).reshape(-1, 2)


def feedback_epoch_starts(record: DetectionRecord, trigger_channels,
                          latency: float, delay: float,
                          window: float) -> np.ndarray:
    """Conditioning events for gated records: first trigger of each epoch.

    A trigger whose window would begin inside an already-open attenuated
    interval is a retrigger (it extends the window); the epoch is defined
    by its first trigger, so the drive-off interval sits at a fixed lag in
    the conditional correlation.
    """
    triggers = record.channel_times_ns(trigger_channels)
    shift_ns = int(round((latency + delay) * 1e9))
    width_ns = int(round(window * 1e9))
    starts = []
    merged_end = -1
    for t in triggers:
        on = int(t) + shift_ns
        if on > merged_end:
            starts.append(int(t))
            merged_end = on + width_ns
        else:
            merged_end = max(merged_end, on + width_ns)
    return np.asarray(starts, dtype=np.int64)


def gated_stop_rate(record: DetectionRecord, stop_channels, trigger_channels,
                    latency: float, delay: float, window: float) -> float:
    """Average stop rate over the drive-on (unattenuated) portion of a record.

    Normalizing gated correlations with this rate makes g2 -> 1 at lags
    beyond the gate, as for ungated data.
    """
    wins = feedback_windows(record.channel_times_ns(trigger_channels),
                            latency, delay, window)
    wins = np.clip(wins, 0, record.duration_ns)
    att_ns = int(np.sum(wins[:, 1] - wins[:, 0])) if len(wins) else 0
    stops = record.channel_times_ns(stop_channels)
    if len(wins):
        inside = np.zeros(len(stops), dtype=bool)
        for on, off in wins:
            inside |= (stops >= on) & (stops < off)
        n_on = int((~inside).sum())
    else:
        n_on = len(stops)
    on_time = (record.duration_ns - att_ns) * 1e-9
    if on_time <= 0:
        raise AnalysisError("record is attenuated for its whole duration")
    return n_on / on_time
