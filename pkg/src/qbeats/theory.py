"""Closed-form predictions for the conditional ground-state quantum beats.

Covers the drive-induced ground-state shifts, the per-jump phase/contraction
of the coherence under undetected Rayleigh scattering, the Poisson average
over jump number, and the damped-cosine model fitted to beat signals.

Conventions: a first H detection prepares

    c0/sqrt(2) * (e^{+i w t} |g_-> + e^{-i w t} |g_+>) + c1 |g_0>,

with w = delta_g + delta_ac.  Each undetected pi scattering event multiplies
the g_-/g_+ amplitudes, relative to g_0, by r*e^{+i phi} / r*e^{-i phi} with
phi = atan(2 delta / gamma) and r = (gamma/2)/sqrt((gamma/2)^2 + delta^2).
All formulas are lowest order in the drive intensity g^2|alpha|^2.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, asdict

import numpy as np

from .params import PhysicalParams, steady_alpha

PAIR_PLUS_MINUS = "plus_minus"  # (g_+, g_-) coherence: what the beats show for lo_mix = 0
PAIR_PM_ZERO = "pm_zero"        # (g_+/-, g_0) coherence: enters for lo_mix != 0


class TheoryDomainError(ValueError):
    """Raised when an operation is evaluated outside its domain."""


# --------------------------------------------------------------------------
# Shifts and rates
# --------------------------------------------------------------------------


def ac_stark_shift(params: PhysicalParams, alpha: complex | None = None) -> float:
    """Drive-induced shift of |g_+> (|g_-> gets the opposite sign)."""
    alpha = steady_alpha(params) if alpha is None else alpha
    d = params.delta
    hg = 0.5 * params.gamma
    return -params.g**2 * abs(alpha) ** 2 * d / (hg**2 + d**2)


def jump_rate(params: PhysicalParams, alpha: complex | None = None) -> float:
    """Rate of undetected Rayleigh scattering events, 2 g^2 |alpha|^2 / (gamma/2)."""
    if params.gamma == 0:
        raise TheoryDomainError("gamma must be nonzero")
    alpha = steady_alpha(params) if alpha is None else alpha
    return 2.0 * params.g**2 * abs(alpha) ** 2 / (0.5 * params.gamma)


def jump_shift(params: PhysicalParams, alpha: complex | None = None) -> float:
    """Frequency shift from the mean per-jump phase advance, 8 g^2 |alpha|^2 delta / gamma^2."""
    alpha = steady_alpha(params) if alpha is None else alpha
    return 8.0 * params.g**2 * abs(alpha) ** 2 * params.delta / params.gamma**2


def light_shift(params: PhysicalParams, alpha: complex | None = None) -> float:
    """Net differential ground-state shift for the (g_+/-, g_0) coherence."""
    return ac_stark_shift(params, alpha) + jump_shift(params, alpha)


def decoherence_rate(params: PhysicalParams, alpha: complex | None = None) -> float:
    """Beat damping from jump-phase diffusion, Gamma * delta^2 / (gamma/2)^2."""
    hg = 0.5 * params.gamma
    return jump_rate(params, alpha) * params.delta**2 / hg**2


def per_jump_factor(params: PhysicalParams) -> tuple[float, float]:
    """(r, phi): contraction and phase applied to g_-/g_0 per Rayleigh jump."""
    hg = 0.5 * params.gamma
    d = params.delta
    return hg / math.hypot(hg, d), math.atan2(d, hg)


@dataclass(frozen=True)
class ShiftReport:
    """All closed-form rates at one operating point (angular units, rad/s)."""

    delta_ac: float
    gamma_jump: float
    delta_jump: float
    delta_light: float
    gamma_decoh: float
    phi_per_jump: float
    r_per_jump: float

    def as_dict(self) -> dict:
        return asdict(self)


def shift_report(params: PhysicalParams, alpha: complex | None = None) -> ShiftReport:
    r, phi = per_jump_factor(params)
    return ShiftReport(
        delta_ac=ac_stark_shift(params, alpha),
        gamma_jump=jump_rate(params, alpha),
        delta_jump=jump_shift(params, alpha),
        delta_light=light_shift(params, alpha),
        gamma_decoh=decoherence_rate(params, alpha),
        phi_per_jump=phi,
        r_per_jump=r,
    )


# --------------------------------------------------------------------------
# Conditional states
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionalState:
    """Normalized ground-state amplitudes of the conditional superposition."""

    c0: complex
    c1: complex
    n_jumps: int
    time: float
    amp_g_minus: complex
    amp_g_zero: complex
    amp_g_plus: complex

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([self.amp_g_minus, self.amp_g_zero, self.amp_g_plus])


def _make_state(c0, c1, n, t, a_minus, a_zero, a_plus) -> ConditionalState:
    norm = math.sqrt(abs(a_minus) ** 2 + abs(a_zero) ** 2 + abs(a_plus) ** 2)
    if norm == 0.0:
        raise TheoryDomainError("conditional state has zero norm")
    return ConditionalState(c0=c0, c1=c1, n_jumps=n, time=t,
                            amp_g_minus=a_minus / norm,
                            amp_g_zero=a_zero / norm,
                            amp_g_plus=a_plus / norm)


def ground_state_at(c0: complex, c1: complex, t: float,
                    params: PhysicalParams,
                    alpha: complex | None = None) -> ConditionalState:
    """Jump-free conditional ground state at time t after preparation."""
    if c0 == 0 and c1 == 0:
        raise TheoryDomainError("c0 and c1 cannot both vanish")
    w = params.delta_g + ac_stark_shift(params, alpha)
    a = c0 / math.sqrt(2.0)
    return _make_state(c0, c1, 0, t,
                       a * cmath.exp(1j * w * t), c1, a * cmath.exp(-1j * w * t))


def n_jump_state(c0: complex, c1: complex, n: int, t: float,
                 params: PhysicalParams,
                 alpha: complex | None = None) -> ConditionalState:
    """Conditional ground state after n undetected Rayleigh jumps.

    Uses the (r, phi) factorization of the per-jump quotient, which is
    stable for large n; it agrees with the raw amplitude expression after
    normalization (unit tested).
    """
    if n < 0:
        raise TheoryDomainError("jump count must be non-negative")
    if c0 == 0 and c1 == 0:
        raise TheoryDomainError("c0 and c1 cannot both vanish")
    r, phi = per_jump_factor(params)
    w = params.delta_g + ac_stark_shift(params, alpha)
    z = (r * cmath.exp(1j * phi)) ** n
    a = c0 / math.sqrt(2.0)
    return _make_state(c0, c1, n, t,
                       a * z * cmath.exp(1j * w * t),
                       c1,
                       a * np.conj(z) * cmath.exp(-1j * w * t))


def excited_state_at(c0: complex, c1: complex, t: float,
                     params: PhysicalParams,
                     alpha: complex | None = None) -> tuple[complex, complex, complex]:
    """Steady excited amplitudes (e_-, e_0, e_+) driven by the ground state.

    Perturbative (weak drive) amplitudes; not normalized.
    """
    if params.gamma == 0:
        raise TheoryDomainError("gamma must be nonzero")
    alpha = steady_alpha(params) if alpha is None else alpha
    hg = 0.5 * params.gamma
    d = params.delta
    w = params.delta_g + ac_stark_shift(params, alpha)
    ga = params.g * alpha
    e_minus = c0 * ga / math.sqrt(2.0) * cmath.exp(1j * w * t) / (hg - 1j * d)
    e_plus = c0 * ga / math.sqrt(2.0) * cmath.exp(-1j * w * t) / (hg + 1j * d)
    e_zero = c1 * ga / hg
    return e_minus, e_zero, e_plus


# --------------------------------------------------------------------------
# Poisson average over the jump number
# --------------------------------------------------------------------------


def pair_jump_factor(params: PhysicalParams, pair: str) -> complex:
    """Per-jump multiplier of the normalized pair coherence."""
    r, phi = per_jump_factor(params)
    if pair == PAIR_PM_ZERO:
        return r * cmath.exp(1j * phi)
    if pair == PAIR_PLUS_MINUS:
        return cmath.exp(2j * phi)  # contraction cancels in the amplitude ratio
    raise TheoryDomainError(f"unknown coherence pair {pair!r}")


def poisson_coherence(t: float, params: PhysicalParams,
                      alpha: complex | None = None,
                      pair: str = PAIR_PLUS_MINUS) -> complex:
    """E[z^n] for n ~ Poisson(Gamma * t), z the per-jump pair factor.

    The argument grows at the jump-induced shift and the magnitude decays
    at the jump-induced decoherence rate of that coherence.
    """
    if t < 0:
        raise TheoryDomainError("time must be non-negative")
    z = pair_jump_factor(params, pair)
    return cmath.exp(jump_rate(params, alpha) * t * (z - 1.0))


def pair_rates(params: PhysicalParams, alpha: complex | None = None,
               pair: str = PAIR_PLUS_MINUS) -> tuple[float, float]:
    """(phase rate, decay rate) of the Poisson-averaged pair coherence.

    Exact rates of poisson_coherence, valid beyond first order in
    2*delta/gamma: Gamma*Im(z) and Gamma*(1 - Re(z)).
    """
    z = pair_jump_factor(params, pair)
    rate = jump_rate(params, alpha)
    return rate * z.imag, rate * (1.0 - z.real)


def beat_predictions(params: PhysicalParams,
                     alpha: complex | None = None) -> dict:
    """Predicted beat frequencies and decay rates per coherence (rad/s).

    The (g_+, g_-) coherence produces the component at twice the shifted
    Larmor frequency (the only one for lo_mix = 0); mixing drive light into
    the detector adds the (g_+/-, g_0) component at the shifted Larmor
    frequency itself.
    """
    w0 = params.delta_g + ac_stark_shift(params, alpha)
    shift_pm, decay_pm = pair_rates(params, alpha, PAIR_PLUS_MINUS)
    shift_pm0, decay_pm0 = pair_rates(params, alpha, PAIR_PM_ZERO)
    return {
        "freq_plus_minus": 2.0 * w0 + shift_pm,
        "decay_plus_minus": decay_pm,
        "freq_pm_zero": w0 + shift_pm0,
        "decay_pm_zero": decay_pm0,
    }


# --------------------------------------------------------------------------
# Beat model
# --------------------------------------------------------------------------


def beat_model(t, amplitude, freq, phase, decay, offset):
    """offset + amplitude * exp(-decay*t) * cos(freq*t + phase)."""
    if np.any(np.asarray(decay) < 0):
        raise TheoryDomainError("decay must be non-negative")
    t = np.asarray(t, dtype=float)
    return offset + amplitude * np.exp(-decay * t) * np.cos(freq * t + phase)
