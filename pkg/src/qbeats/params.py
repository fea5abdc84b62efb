"""Physical parameters of the driven two-mode cavity + six-level atom model.

All frequencies and rates are angular (rad/s) internally.  Configuration
files quote frequency-like quantities in Hz; the loader multiplies them by
2*pi (and the writer divides them back).
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field, fields, replace

TWO_PI = 2.0 * math.pi

# Default operating point of the apparatus: g/2pi = 1.5 MHz,
# kappa/2pi = 3.0 MHz, gamma/2pi = 6.07 MHz.
DEFAULT_G = TWO_PI * 1.5e6
DEFAULT_KAPPA = TWO_PI * 3.0e6
DEFAULT_GAMMA = TWO_PI * 6.07e6

# Config keys holding angular frequencies, quoted in Hz on disk.
_FREQUENCY_KEYS = ("g", "kappa", "gamma", "delta_g", "delta_e", "drive_detuning")
_COMPLEX_KEYS = ("drive_amplitude", "lo_mix")


class ConfigError(ValueError):
    """Raised for invalid parameter values or malformed config files."""


@dataclass(frozen=True)
class PhysicalParams:
    """Rates, splittings and drive settings of the model.

    Attributes
    ----------
    g : float
        Single-atom coupling to either cavity mode (rad/s).
    kappa : float
        Cavity field decay rate (rad/s); photon flux out of a mode is
        2*kappa*<n>.
    gamma : float
        Atomic excited-state decay rate (rad/s).
    delta_g, delta_e : float
        Ground / excited Zeeman splitting per unit m (rad/s).
    drive_amplitude : complex
        Coherent drive injected into the V mode; equals the steady
        intracavity amplitude of an empty resonant cavity.
    drive_detuning : float
        Drive frequency relative to the g0 -> e0 transition (rad/s).
    lo_mix : complex
        Fraction of the V output mixed into the H detection path.
    pi_branch, sigma_branch : float
        Branching weights of side (out-of-cavity) spontaneous emission
        into the pi and sigma channels; they must sum to 1.
    """

    g: float = DEFAULT_G
    kappa: float = DEFAULT_KAPPA
    gamma: float = DEFAULT_GAMMA
    delta_g: float = 0.0
    delta_e: float = 0.0
    drive_amplitude: complex = 0.0 + 0.0j
    drive_detuning: float = 0.0
    lo_mix: complex = 0.0 + 0.0j
    pi_branch: float = 1.0
    sigma_branch: float = 0.0

    def __post_init__(self):
        if self.g <= 0 or self.kappa <= 0 or self.gamma <= 0:
            raise ConfigError("g, kappa and gamma must all be positive")
        if self.pi_branch < 0 or self.sigma_branch < 0:
            raise ConfigError("branching weights must be non-negative")
        if abs(self.pi_branch + self.sigma_branch - 1.0) > 1e-12:
            raise ConfigError("pi_branch + sigma_branch must equal 1 within 1e-12")

    @property
    def delta(self) -> float:
        """Difference of excited and ground Zeeman shifts (rad/s)."""
        return self.delta_e - self.delta_g

    def with_(self, **kwargs) -> "PhysicalParams":
        """Return a copy with the given fields replaced."""
        return replace(self, **kwargs)


def steady_alpha(params: PhysicalParams) -> complex:
    """Steady V-mode amplitude used by all closed-form predictions.

    The drive enters the model as i*kappa*drive_amplitude*(a_V^dag - a_V),
    so an empty resonant cavity settles at alpha = drive_amplitude exactly.
    A coupled atom reduces the actual intracavity field below this value;
    callers comparing simulations against the closed forms should evaluate
    them at the field the atom actually sees (e.g. the measured V photon
    number).
    """
    return complex(params.drive_amplitude)


# --------------------------------------------------------------------------
# Configuration files
# --------------------------------------------------------------------------
#
# INI layout, one section per concern.  [model] keys match PhysicalParams
# field names; frequency-like keys are given in Hz.  Other sections are
# returned as raw string dictionaries for the consuming module to parse.


def _parse_complex(text: str) -> complex:
    try:
        return complex(text.replace(" ", ""))
    except ValueError as exc:
        raise ConfigError(f"cannot parse complex value {text!r}") from exc


def params_from_dict(raw: dict) -> PhysicalParams:
    """Build PhysicalParams from a {field: string} mapping (Hz convention)."""
    known = {f.name for f in fields(PhysicalParams)}
    kwargs = {}
    for key, text in raw.items():
        if key not in known:
            raise ConfigError(f"unknown model parameter {key!r}")
        if key in _COMPLEX_KEYS:
            kwargs[key] = _parse_complex(text)
        elif key in _FREQUENCY_KEYS:
            kwargs[key] = TWO_PI * float(text)
        else:
            kwargs[key] = float(text)
    return PhysicalParams(**kwargs)


def params_to_dict(params: PhysicalParams) -> dict:
    """Inverse of params_from_dict: field -> string, frequencies in Hz."""
    out = {}
    for f in fields(PhysicalParams):
        value = getattr(params, f.name)
        if f.name in _COMPLEX_KEYS:
            out[f.name] = repr(complex(value))
        elif f.name in _FREQUENCY_KEYS:
            out[f.name] = repr(value / TWO_PI)
        else:
            out[f.name] = repr(value)
    return out


def read_config(path) -> dict:
    """Read an INI config file into {section: {key: string}}.

    The [model] section (if present) is additionally validated by
    constructing PhysicalParams from it; see load_params.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return {section: dict(parser.items(section)) for section in parser.sections()}


def load_params(path) -> PhysicalParams:
    """Load PhysicalParams from the [model] section of a config file."""
    sections = read_config(path)
    return params_from_dict(sections.get("model", {}))


def write_config(path, sections: dict) -> None:
    """Write {section: {key: value}} to an INI file (values stringified)."""
    parser = configparser.ConfigParser()
    for name, content in sections.items():
        parser[name] = {k: str(v) for k, v in content.items()}
    buf = io.StringIO()
    parser.write(buf)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(buf.getvalue())
