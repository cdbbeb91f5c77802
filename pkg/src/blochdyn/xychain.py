"""Anisotropic XY chain: spin Hamiltonians, the free-fermion picture, and
propagation-bound checks.

The chain on an interval carries couplings mu_j, anisotropies gamma_j, and a
transverse field nu_j (all periodic, possibly with different periods). Its
Jordan-Wigner operators evolve through a 2x2-block Jacobi matrix whose
diagonal block at site j is 2 diag(nu_j, -nu_j) and whose coupling of site j
to j+1 is 2 [[-mu_j, -mu_j gamma_j], [mu_j gamma_j, mu_j]]. Spin site j owns
two scalar rows of that matrix, one for the annihilator and one for the
creator; the maximal band speed of the infinite matrix bounds every
propagation velocity of the spin dynamics from below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, reduce

import numpy as np

from .blockjacobi import BlockJacobiOperator, BlockSpec
from .errors import ChainTooLong, DimensionMismatch, InvalidSpec
from .floquet import q_norm

MAX_SITES = 12
SVD_SITES = 10

SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SY = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SZ = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
ID2 = np.eye(2, dtype=complex)
LOWER = 0.5 * (SX - 1j * SY)
RAISE = 0.5 * (SX + 1j * SY)


# ---------------------------------------------------------------------------
# Chain parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class XYChainSpec:
    """Periodic couplings (mu), anisotropies (gamma), transverse field (nu).

    mu_j must never vanish (the chain would decouple). gamma = +-1 is legal
    for the spin Hamiltonian itself (the Ising point) but rejected wherever
    the free-fermion matrix is needed, since the off-diagonal blocks become
    singular there.
    """

    mu: tuple
    gamma: tuple
    nu: tuple

    def __post_init__(self):
        object.__setattr__(self, "mu", tuple(float(x) for x in np.atleast_1d(self.mu)))
        object.__setattr__(self, "gamma", tuple(float(x) for x in np.atleast_1d(self.gamma)))
        object.__setattr__(self, "nu", tuple(float(x) for x in np.atleast_1d(self.nu)))
        if min(len(self.mu), len(self.gamma), len(self.nu)) < 1:
            raise InvalidSpec("mu, gamma, nu must be nonempty periodic sequences")
        if any(abs(m) <= 1e-12 for m in self.mu):
            raise InvalidSpec("all couplings mu_j must be nonzero")

    def mu_at(self, j):
        return self.mu[j % len(self.mu)]

    def gamma_at(self, j):
        return self.gamma[j % len(self.gamma)]

    def nu_at(self, j):
        return self.nu[j % len(self.nu)]

    @property
    def period(self):
        return math.lcm(len(self.mu), len(self.gamma), len(self.nu))

    def validate_free_fermion(self):
        if any(abs(g * g - 1.0) <= 1e-12 for g in self.gamma):
            raise InvalidSpec("gamma_j = +-1 makes the fermionic coupling block singular")
        return self


def single_particle_matrix(spec: XYChainSpec) -> BlockJacobiOperator:
    """Block Jacobi generator of the Jordan-Wigner operator evolution
    (m = 2, q = lcm of the three periods)."""
    spec.validate_free_fermion()
    q = spec.period
    a = np.empty((q, 2, 2), dtype=complex)
    b = np.empty((q, 2, 2), dtype=complex)
    for k in range(q):
        mu, g, nu = spec.mu_at(k), spec.gamma_at(k), spec.nu_at(k)
        b[k] = 2.0 * np.array([[nu, 0.0], [0.0, -nu]])
        a[k] = 2.0 * np.array([[-mu, -mu * g], [mu * g, mu]])
    try:
        return BlockJacobiOperator(BlockSpec(m=2, q=q, a=a, b=b))
    except Exception as exc:  # block validation failures surface as InvalidSpec
        raise InvalidSpec(str(exc)) from exc


def lr_velocity_bound(spec: XYChainSpec, grid_size: int = 512) -> float:
    """Strictly positive lower bound for any propagation velocity of the chain:
    the maximal band speed of the free-fermion matrix."""
    return q_norm(single_particle_matrix(spec), grid_size=grid_size)


def single_particle_window(spec: XYChainSpec, lam) -> np.ndarray:
    """Dense restriction of the free-fermion matrix to spin sites [lo, hi]."""
    lo, hi = lam
    return single_particle_matrix(spec).truncate_window(lo, hi).matrix


def scalar_row(lam, site, dagger=False) -> int:
    """Row of the windowed free-fermion matrix owned by c_site (or its
    adjoint): annihilators sit on even local rows, creators on odd ones."""
    lo, hi = lam
    if not lo <= site <= hi:
        raise DimensionMismatch(f"site {site} outside the interval [{lo}, {hi}]")
    return 2 * (site - lo) + (1 if dagger else 0)


# ---------------------------------------------------------------------------
# Dense spin chain
# ---------------------------------------------------------------------------


def _kron_chain(mats):
    return reduce(np.kron, mats)


class SpinChain:
    """Dense exact-diagonalization workspace for the chain on [lo, hi]."""

    def __init__(self, spec: XYChainSpec, lam):
        lo, hi = int(lam[0]), int(lam[1])
        n = hi - lo + 1
        if n < 1:
            raise DimensionMismatch(f"empty interval [{lo}, {hi}]")
        if n > MAX_SITES:
            raise ChainTooLong(f"{n} sites exceeds the dense limit of {MAX_SITES}")
        self.spec = spec
        self.lam = (lo, hi)
        self.n_sites = n
        self.dim = 2**n
        self.hamiltonian = self._build_hamiltonian()

    def _build_hamiltonian(self):
        lo, hi = self.lam
        n = self.n_sites
        H = np.zeros((self.dim, self.dim), dtype=complex)
        for j in range(lo, hi):
            i = j - lo
            mu, g = self.spec.mu_at(j), self.spec.gamma_at(j)
            bond = mu * ((1.0 + g) * np.kron(SX, SX) + (1.0 - g) * np.kron(SY, SY))
            H += _kron_chain([ID2] * i + [bond] + [ID2] * (n - 2 - i))
        for j in range(lo, hi + 1):
            H += self.spec.nu_at(j) * self.site_operator(j, SZ)
        return H

    # --- local operator factory ---

    def site_operator(self, j, mat):
        i = j - self.lam[0]
        if not 0 <= i < self.n_sites:
            raise DimensionMismatch(f"site {j} outside the interval {self.lam}")
        return _kron_chain([ID2] * i + [mat] + [ID2] * (self.n_sites - 1 - i))

    def sigma(self, j, axis):
        return self.site_operator(j, {"x": SX, "y": SY, "z": SZ}[axis])

    def lowering(self, j):
        return self.site_operator(j, LOWER)

    def raising(self, j):
        return self.site_operator(j, RAISE)

    def jw_annihilator(self, j):
        i = j - self.lam[0]
        return _kron_chain([SZ] * i + [LOWER] + [ID2] * (self.n_sites - 1 - i))

    def jw_creator(self, j):
        i = j - self.lam[0]
        return _kron_chain([SZ] * i + [RAISE] + [ID2] * (self.n_sites - 1 - i))

    def jw_vector(self):
        """All Jordan-Wigner operators ordered like the matrix rows:
        (c_lo, c_lo^*, c_lo+1, c_lo+1^*, ...)."""
        ops = []
        for j in range(self.lam[0], self.lam[1] + 1):
            ops.append(self.jw_annihilator(j))
            ops.append(self.jw_creator(j))
        return ops

    @cached_property
    def eigensystem(self):
        w, u = np.linalg.eigh(self.hamiltonian)
        w.setflags(write=False)
        u.setflags(write=False)
        return w, u

    def heisenberg(self, A, t):
        """tau_t(A) = e^{itH} A e^{-itH} through the cached spectrum."""
        w, u = self.eigensystem
        core = u.conj().T @ A @ u
        phased = np.exp(1j * t * w)[:, None] * core * np.exp(-1j * t * w)[None, :]
        return u @ phased @ u.conj().T


def build_spin_hamiltonian(spec: XYChainSpec, lam) -> SpinChain:
    return SpinChain(spec, lam)


# ---------------------------------------------------------------------------
# Norms and bound checks
# ---------------------------------------------------------------------------


def _power_norm(matvec, rmatvec, dim, tol=1e-9, max_iter=10000, seed=11):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(max_iter):
        w = rmatvec(matvec(v))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        new_sigma = math.sqrt(nw)
        v = w / nw
        if abs(new_sigma - sigma) <= tol * max(new_sigma, 1.0):
            return new_sigma
        sigma = new_sigma
    return sigma


def commutator_norm(chain: SpinChain, A, B, t) -> float:
    """Propagation indicator ||[tau_t(A), B]|| (largest singular value).

    Dense SVD up to 10 sites, power iteration beyond.
    """
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    if A.shape != (chain.dim, chain.dim) or B.shape != (chain.dim, chain.dim):
        raise DimensionMismatch(
            f"observables must be {chain.dim}x{chain.dim} matrices for this chain"
        )
    tau_a = chain.heisenberg(A, t)
    comm = tau_a @ B - B @ tau_a
    if chain.n_sites <= SVD_SITES:
        return float(np.linalg.norm(comm, 2))
    ch = comm.conj().T
    return float(_power_norm(lambda v: comm @ v, lambda v: ch @ v, chain.dim))


def _window_propagator(spec, lam, t):
    M = single_particle_window(spec, lam)
    w, u = np.linalg.eigh(M)
    return u @ (np.exp(-1j * t * w)[:, None] * u.conj().T)


def free_fermion_residual(chain: SpinChain, spec: XYChainSpec, j: int, t: float) -> float:
    """Exactness check of the quadratic reduction: spectral-norm residual of

        tau_t(c_j) = sum_k [e^{-itM}]_{row(c_j), k} C^(k)

    with M the windowed free-fermion matrix and C the Jordan-Wigner vector.
    """
    mt = _window_propagator(spec, chain.lam, t)
    ops = chain.jw_vector()
    row = scalar_row(chain.lam, j)
    rhs = np.zeros((chain.dim, chain.dim), dtype=complex)
    for k, op in enumerate(ops):
        rhs += mt[row, k] * op
    lhs = chain.heisenberg(chain.jw_annihilator(j), t)
    return float(np.linalg.norm(lhs - rhs, 2))


# case -> (A is a creator?, B is the raising operator?, entry column is a
# creator row?). The selection vector of the bound (all spins up for a
# raising B, all down for a lowering B) annihilates every Jordan-Wigner
# column except one: a raising B survives on the annihilator column, a
# lowering B on the creator column. Pairing B = raising with a creator
# column fails numerically, so the columns follow the selection vector.
_LOWER_CASES = {
    1: (False, True, False),
    2: (False, False, True),
    3: (True, False, True),
    4: (True, True, False),
}


@dataclass(frozen=True)
class LowerBoundCheck:
    commutator: float
    entry_abs: float
    ok: bool


def propagation_lower_bound(chain: SpinChain, spec: XYChainSpec, l: int, r: int,
                            t: float, case: int) -> LowerBoundCheck:
    """Commutator norm against the matching propagator entry.

    Case 1 pairs (c_l, a_r^*) with the (row c_l, row c_r) entry of e^{-itM};
    cases 2-4 run through (c_l, a_r), (c_l^*, a_r), (c_l^*, a_r^*) against
    the entries with the creator rows swapped in accordingly. The commutator
    norm must dominate the entry modulus (up to 1e-8 slack).
    """
    if case not in _LOWER_CASES:
        raise ValueError(f"case must be 1..4, got {case}")
    if not l < r:
        raise ValueError("need l < r")
    l_dag, b_raising, r_dag = _LOWER_CASES[case]
    A = chain.jw_creator(l) if l_dag else chain.jw_annihilator(l)
    B = chain.raising(r) if b_raising else chain.lowering(r)
    p_t = commutator_norm(chain, A, B, t)
    mt = _window_propagator(spec, chain.lam, t)
    entry = mt[scalar_row(chain.lam, l, l_dag), scalar_row(chain.lam, r, r_dag)]
    return LowerBoundCheck(
        commutator=float(p_t),
        entry_abs=float(abs(entry)),
        ok=bool(p_t >= abs(entry) - 1e-8),
    )


@dataclass(frozen=True)
class UpperBoundCheck:
    lhs: float
    rhs: float
    ok: bool


def propagation_upper_bound(chain: SpinChain, spec: XYChainSpec, s: int, r: int,
                            t: float, B=None) -> UpperBoundCheck:
    """Leibniz-rule upper bound for a string observable against B at site r:

        ||[tau_t(a_s), B]|| <= 8 ||B|| sum_{k <= row(c_s)} sum_{k' >= row(c_r)}
                               |[e^{-itM}]_{k, k'}|.
    """
    if not s < r:
        raise ValueError("need s < r")
    if B is None:
        B = chain.sigma(r, "x")
    B = np.asarray(B, dtype=complex)
    lhs = commutator_norm(chain, chain.lowering(s), B, t)
    mt = _window_propagator(spec, chain.lam, t)
    srow = scalar_row(chain.lam, s)
    rrow = scalar_row(chain.lam, r)
    tail_sum = float(np.sum(np.abs(mt[: srow + 1, rrow:])))
    rhs = 8.0 * float(np.linalg.norm(B, 2)) * tail_sum
    return UpperBoundCheck(lhs=float(lhs), rhs=rhs, ok=bool(lhs <= rhs + 1e-8))
