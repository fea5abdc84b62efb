"""Truncated Hilbert space and operators for the six-level atom + two modes.

Atom basis (fixed ordering): g_minus, g_zero, g_plus, e_minus, e_zero,
e_plus, i.e. the m = -1, 0, +1 ground and excited Zeeman sublevels kept by
the reduced level scheme.  The full basis is atom x V-Fock x H-Fock with
index = level*(nv_dim*nh_dim) + n_v*nh_dim + n_h.

Pi transitions connect g_m <-> e_m (V polarization); sigma+ lowers
e_m -> g_{m-1} and sigma- lowers e_m -> g_{m+1}.  The H mode couples to
(A_sigma+ - A_sigma-)/sqrt(2); the sign convention is fixed here (the
opposite sign only flips the sign of the prepared ground superposition).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .params import ConfigError, PhysicalParams

G_MINUS, G_ZERO, G_PLUS, E_MINUS, E_ZERO, E_PLUS = range(6)
ATOM_DIM = 6
LEVEL_NAMES = ("g_minus", "g_zero", "g_plus", "e_minus", "e_zero", "e_plus")
# Magnetic quantum number of each level, in basis order.
LEVEL_M = np.array([-1, 0, 1, -1, 0, 1])


@dataclass(frozen=True)
class HilbertSpace:
    """Index bookkeeping for atom (6) x V-Fock x H-Fock."""

    n_max_v: int
    n_max_h: int

    def __post_init__(self):
        if self.n_max_v < 1 or self.n_max_h < 0:
            raise ConfigError("photon truncations must be >= 1 for V and >= 0 for H")

    @property
    def nv_dim(self) -> int:
        return self.n_max_v + 1

    @property
    def nh_dim(self) -> int:
        return self.n_max_h + 1

    @property
    def dim(self) -> int:
        return ATOM_DIM * self.nv_dim * self.nh_dim

    def index(self, level: int, n_v: int, n_h: int) -> int:
        if not (0 <= level < ATOM_DIM and 0 <= n_v <= self.n_max_v
                and 0 <= n_h <= self.n_max_h):
            raise IndexError(f"basis label out of range: {(level, n_v, n_h)}")
        return (level * self.nv_dim + n_v) * self.nh_dim + n_h

    def unindex(self, index: int) -> tuple[int, int, int]:
        if not 0 <= index < self.dim:
            raise IndexError(f"basis index out of range: {index}")
        index, n_h = divmod(index, self.nh_dim)
        level, n_v = divmod(index, self.nv_dim)
        return level, n_v, n_h

    def basis_state(self, level: int, n_v: int = 0, n_h: int = 0) -> np.ndarray:
        psi = np.zeros(self.dim, dtype=complex)
        psi[self.index(level, n_v, n_h)] = 1.0
        return psi


def build_space(n_max_v: int = 2, n_max_h: int = 2) -> HilbertSpace:
    """Construct the truncated Hilbert space (defaults resolve |alpha|^2 <= 0.55)."""
    if n_max_v < 1:
        raise ConfigError("n_max_v must be >= 1")
    return HilbertSpace(n_max_v=n_max_v, n_max_h=n_max_h)


# --------------------------------------------------------------------------
# Elementary operators
# --------------------------------------------------------------------------


def _mode_annihilator(space: HilbertSpace, mode: str) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for i in range(space.dim):
        level, n_v, n_h = space.unindex(i)
        if mode == "V" and n_v > 0:
            rows.append(space.index(level, n_v - 1, n_h))
            cols.append(i)
            vals.append(math.sqrt(n_v))
        elif mode == "H" and n_h > 0:
            rows.append(space.index(level, n_v, n_h - 1))
            cols.append(i)
            vals.append(math.sqrt(n_h))
    return sp.csr_matrix((np.asarray(vals, dtype=complex), (rows, cols)),
                         shape=(space.dim, space.dim))


def _atomic_lowering(space: HilbertSpace, pairs, weights) -> sp.csr_matrix:
    """Sum of weighted |lower><upper| over (lower, upper) level pairs."""
    rows, cols, vals = [], [], []
    for (lower, upper), w in zip(pairs, weights):
        if w == 0.0:
            continue
        for n_v in range(space.nv_dim):
            for n_h in range(space.nh_dim):
                rows.append(space.index(lower, n_v, n_h))
                cols.append(space.index(upper, n_v, n_h))
                vals.append(w)
    return sp.csr_matrix((np.asarray(vals, dtype=complex), (rows, cols)),
                         shape=(space.dim, space.dim))


def _level_projector(space: HilbertSpace, level: int) -> sp.csr_matrix:
    diag = np.zeros(space.dim)
    for n_v in range(space.nv_dim):
        for n_h in range(space.nh_dim):
            diag[space.index(level, n_v, n_h)] = 1.0
    return sp.csr_matrix(sp.diags(diag, dtype=complex))


PI_PAIRS = ((G_MINUS, E_MINUS), (G_ZERO, E_ZERO), (G_PLUS, E_PLUS))
SIGMA_PLUS_PAIRS = ((G_MINUS, E_ZERO), (G_ZERO, E_PLUS))   # e_m -> g_{m-1}
SIGMA_MINUS_PAIRS = ((G_ZERO, E_MINUS), (G_PLUS, E_ZERO))  # e_m -> g_{m+1}


@dataclass(frozen=True)
class OperatorSet:
    """All mode and atomic operators on a given space.

    a_v / a_h are the mode annihilators; a_pi, a_sigma_plus, a_sigma_minus
    the atomic lowering operators; h_coupling = (A_sigma+ - A_sigma-)/sqrt(2)
    is the combination the H mode couples to; s_pi / s_sigma_plus /
    s_sigma_minus are the side-emission collapse operators (rates included).
    """

    space: HilbertSpace
    a_v: sp.csr_matrix
    a_h: sp.csr_matrix
    a_pi: sp.csr_matrix
    a_sigma_plus: sp.csr_matrix
    a_sigma_minus: sp.csr_matrix
    h_coupling: sp.csr_matrix
    s_pi: sp.csr_matrix
    s_sigma_plus: sp.csr_matrix
    s_sigma_minus: sp.csr_matrix

    def side_channels(self) -> tuple:
        return (self.s_pi, self.s_sigma_plus, self.s_sigma_minus)


def build_operators(space: HilbertSpace, params: PhysicalParams,
                    couplings: dict | None = None) -> OperatorSet:
    """Construct all operators.

    couplings optionally overrides the per-transition weights (uniform by
    default, matching the reduced model with a single g):
    {"pi": (w_gm, w_g0, w_gp), "sigma_plus": (w_e0, w_ep),
     "sigma_minus": (w_em, w_e0)}, listed in PI_PAIRS etc. order.
    """
    couplings = couplings or {}
    w_pi = couplings.get("pi", (1.0, 1.0, 1.0))
    w_sp = couplings.get("sigma_plus", (1.0, 1.0))
    w_sm = couplings.get("sigma_minus", (1.0, 1.0))

    a_pi = _atomic_lowering(space, PI_PAIRS, w_pi)
    a_sigma_plus = _atomic_lowering(space, SIGMA_PLUS_PAIRS, w_sp)
    a_sigma_minus = _atomic_lowering(space, SIGMA_MINUS_PAIRS, w_sm)

    return OperatorSet(
        space=space,
        a_v=_mode_annihilator(space, "V"),
        a_h=_mode_annihilator(space, "H"),
        a_pi=a_pi,
        a_sigma_plus=a_sigma_plus,
        a_sigma_minus=a_sigma_minus,
        h_coupling=(a_sigma_plus - a_sigma_minus) / math.sqrt(2.0),
        s_pi=math.sqrt(params.gamma * params.pi_branch) * a_pi,
        s_sigma_plus=math.sqrt(params.gamma * params.sigma_branch / 2.0) * a_sigma_plus,
        s_sigma_minus=math.sqrt(params.gamma * params.sigma_branch / 2.0) * a_sigma_minus,
    )


def build_effective_hamiltonian(space: HilbertSpace, params: PhysicalParams,
                                drive_scale: float = 1.0, *,
                                g_scale: float = 1.0,
                                ops: OperatorSet | None = None) -> sp.csr_matrix:
    """Non-Hermitian effective Hamiltonian of the jump unraveling.

    drive_scale multiplies the injected drive (the feedback actuator);
    g_scale multiplies the atom-cavity coupling (transit envelope).
    The anti-Hermitian part is -(i/2) sum c^dag c over the side channels
    and the two mode outputs, so H - H^dag = -i sum c^dag c exactly.
    """
    if not 0.0 <= drive_scale <= 1.0:
        raise ConfigError("drive_scale must lie in [0, 1]")
    if ops is None:
        ops = build_operators(space, params)

    h = sp.csr_matrix((space.dim, space.dim), dtype=complex)

    # Zeeman ladders; the drive rotating frame shifts the excited levels.
    for level in range(ATOM_DIM):
        m = LEVEL_M[level]
        if level < E_MINUS:
            shift = m * params.delta_g
        else:
            shift = m * params.delta_e - params.drive_detuning
        if shift != 0.0:
            h = h + shift * _level_projector(space, level)

    # Atom-cavity coupling: V drives pi transitions, H the sigma combination.
    g_eff = g_scale * params.g
    if g_eff != 0.0:
        h = h + g_eff * (ops.a_v @ ops.a_pi.conj().T.tocsr()
                         + ops.a_v.conj().T.tocsr() @ ops.a_pi)
        h = h + g_eff * (ops.a_h @ ops.h_coupling.conj().T.tocsr()
                         + ops.a_h.conj().T.tocsr() @ ops.h_coupling)

    # Cavity input drive; for complex amplitude E the Hermitian form is
    # i*kappa*(E a^dag - E* a), reducing to i*E*kappa*(a^dag - a) for real E.
    drive = drive_scale * complex(params.drive_amplitude) * params.kappa
    if drive != 0.0:
        h = h + 1j * (drive * ops.a_v.conj().T.tocsr()
                      - np.conj(drive) * ops.a_v)

    # Anti-Hermitian loss: side spontaneous emission + both cavity outputs.
    loss = sp.csr_matrix((space.dim, space.dim), dtype=complex)
    for c in ops.side_channels():
        loss = loss + c.conj().T.tocsr() @ c
    loss = loss + 2.0 * params.kappa * (ops.a_v.conj().T.tocsr() @ ops.a_v)
    loss = loss + 2.0 * params.kappa * (ops.a_h.conj().T.tocsr() @ ops.a_h)
    h = h - 0.5j * loss

    if h.shape != (space.dim, space.dim):
        raise RuntimeError("operator dimension mismatch")
    return h.tocsr()


def coherent_cavity_state(space: HilbertSpace, alpha_v: complex,
                          level: int = G_ZERO) -> np.ndarray:
    """Atom in `level`, V mode in a truncated coherent state, H in vacuum.

    The truncated expansion is renormalized; keep n_max_v large enough
    that the discarded Poisson tail is negligible for the use at hand.
    """
    psi = np.zeros(space.dim, dtype=complex)
    amp = 1.0 + 0.0j
    for n in range(space.nv_dim):
        if n > 0:
            amp = amp * alpha_v / math.sqrt(n)
        psi[space.index(level, n, 0)] = amp
    return psi / np.linalg.norm(psi)
