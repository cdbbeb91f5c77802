"""Bloch fibers, band structure, and the asymptotic velocity operator.

A q-periodic operator diagonalizes over quasi-momentum theta into mq x mq
fibers J_theta (and the current operator into A_theta). Band curves are the
fiber eigenvalues matched across the grid by eigenvector overlap; band
velocities are q * dlambda/dtheta, which coincide with <v, A_theta v> on the
fiber eigenvectors away from degeneracies.

The asymptotic velocity operator acts fiberwise as the part of A_theta that
is block-diagonal with respect to the spectral clusters of J_theta; its norm
is the maximal band speed and bounds every transport light cone from below.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from ._parallel import parallel_map
from .blockjacobi import BlockJacobiOperator, WavePacket
from .errors import GridTooCoarse

MIN_GRID = 16
DEGENERACY_TOL = 1e-8
_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


# ---------------------------------------------------------------------------
# Fibers
# ---------------------------------------------------------------------------


def fiber_matrices(J: BlockJacobiOperator, theta: float):
    """Assemble the mq x mq fiber matrices (J_theta, A_theta).

    The coupling of fiber slot k to k+1 carries the block a[k]; the wrap-around
    slot q-1 -> 0 carries the extra phase e^{i theta}. For q <= 2 the wrap
    lands on an already occupied entry and the contributions add.
    """
    m, q = J.m, J.q
    dim = m * q
    jf = np.zeros((dim, dim), dtype=complex)
    af = np.zeros((dim, dim), dtype=complex)
    for k in range(q):
        sl = slice(k * m, (k + 1) * m)
        jf[sl, sl] += J.spec.b[k]
    for k in range(q):
        kn = (k + 1) % q
        ph = np.exp(1j * theta) if k == q - 1 else 1.0
        sl, sr = slice(k * m, (k + 1) * m), slice(kn * m, (kn + 1) * m)
        blk = J.spec.a[k]
        jf[sl, sr] += ph * blk
        jf[sr, sl] += np.conj(ph) * blk.conj().T
        af[sl, sr] += 1j * ph * blk
        af[sr, sl] += -1j * np.conj(ph) * blk.conj().T
    return jf, af


@dataclass(frozen=True)
class FloquetFiber:
    """Fiber matrices at one quasi-momentum with their eigendecomposition."""

    theta: float
    j_matrix: np.ndarray
    a_matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def build_fiber(J: BlockJacobiOperator, theta: float) -> FloquetFiber:
    """Fiber at theta in [0, 2pi) with eigenpairs attached (ascending)."""
    if not 0.0 <= theta < 2.0 * np.pi:
        raise ValueError(f"theta must lie in [0, 2pi), got {theta}")
    jf, af = fiber_matrices(J, theta)
    w, v = np.linalg.eigh(jf)
    return FloquetFiber(theta=float(theta), j_matrix=jf, a_matrix=af, eigenvalues=w, eigenvectors=v)


def _clusters(eigenvalues, tol=DEGENERACY_TOL):
    """Split ascending eigenvalues into groups separated by gaps >= tol."""
    groups = []
    start = 0
    for i in range(1, len(eigenvalues)):
        if eigenvalues[i] - eigenvalues[i - 1] >= tol:
            groups.append(slice(start, i))
            start = i
    groups.append(slice(start, len(eigenvalues)))
    return groups


def _fiber_velocity_data(J, theta, tol=DEGENERACY_TOL):
    """Eigenpairs plus cluster-resolved band velocities at one theta.

    Inside a spectral cluster the raw diagonal <v_j, A v_j> depends on the
    arbitrary basis returned by the eigensolver; the eigenvalues of the
    compressed current matrix on the cluster are the analytic band slopes
    (times q), so those are reported instead.
    """
    jf, af = fiber_matrices(J, theta)
    w, v = np.linalg.eigh(jf)
    compressed = v.conj().T @ af @ v
    vel = np.real(np.diag(compressed)).copy()
    degenerate = False
    for sl in _clusters(w, tol):
        if sl.stop - sl.start > 1:
            degenerate = True
            vel[sl] = np.sort(np.linalg.eigvalsh(compressed[sl, sl]))
    return w, v, vel, degenerate


# ---------------------------------------------------------------------------
# Band structure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BandStructure:
    """Matched band curves on a uniform quasi-momentum grid.

    bands[g, j] is the j-th matched curve at thetas[g]; velocities carry
    q * dlambda/dtheta per curve (Hellmann-Feynman away from flagged points,
    symmetric differences of the matched curves at flagged points).
    closing_permutation maps curve labels at the last grid point to their
    continuations at theta = 2pi, which need not be the identity: curves may
    braid over one period.
    """

    thetas: np.ndarray
    bands: np.ndarray
    velocities: np.ndarray
    degenerate: np.ndarray
    gap_tol: float
    closing_permutation: np.ndarray

    @property
    def grid_size(self):
        return len(self.thetas)

    def level_crossings(self, lam: float) -> int:
        """Count sign changes of the matched curves through the level lam,
        following each curve around the full circle via the closing
        permutation."""
        signs = np.sign(self.bands - lam)
        total = int(np.sum(signs[1:] * signs[:-1] < 0))
        wrapped = signs[-1, :] * signs[0, self.closing_permutation] < 0
        return total + int(np.sum(wrapped))


def _match_order(v_prev, v_next):
    overlap = np.abs(v_prev.conj().T @ v_next)
    rows, cols = linear_sum_assignment(-overlap)
    perm = np.empty(len(rows), dtype=int)
    perm[rows] = cols
    return perm


def band_structure(J: BlockJacobiOperator, grid_size: int, gap_tol: float = DEGENERACY_TOL,
                   workers=None) -> BandStructure:
    """Compute matched bands and velocities on a uniform grid of [0, 2pi)."""
    G = int(grid_size)
    if G < MIN_GRID:
        raise GridTooCoarse(f"grid size {G} below minimum {MIN_GRID}")
    thetas = 2.0 * np.pi * np.arange(G) / G
    data = parallel_map(lambda th: _fiber_velocity_data(J, th, gap_tol), thetas, workers)

    nb = J.m * J.q
    bands = np.empty((G, nb))
    velocities = np.empty((G, nb))
    degenerate = np.zeros(G, dtype=bool)
    # col_of_label[j] = eigen-column of the current fiber carrying curve j
    col_of_label = np.arange(nb)
    vectors_prev = None
    for g, (w, v, vel, deg) in enumerate(data):
        if g > 0:
            perm = _match_order(vectors_prev, v)
            col_of_label = perm[col_of_label]
        bands[g] = w[col_of_label]
        velocities[g] = vel[col_of_label]
        degenerate[g] = deg
        vectors_prev = v

    # curve j at the last grid point continues at theta = 2pi into curve
    # closing_permutation[j] of the first grid point
    closing_permutation = _match_order(vectors_prev, data[0][1])[col_of_label]

    # flagged points: replace velocities by symmetric differences of the
    # matched curves (cyclically, honoring the closing permutation)
    dtheta = 2.0 * np.pi / G
    qf = float(J.q)
    for g in np.nonzero(degenerate)[0]:
        nxt = bands[g + 1] if g + 1 < G else bands[0][closing_permutation]
        prv = bands[g - 1] if g - 1 >= 0 else bands[-1][np.argsort(closing_permutation)]
        velocities[g] = qf * (nxt - prv) / (2.0 * dtheta)

    return BandStructure(
        thetas=thetas,
        bands=bands,
        velocities=velocities,
        degenerate=degenerate,
        gap_tol=gap_tol,
        closing_permutation=closing_permutation,
    )


# ---------------------------------------------------------------------------
# Maximal band speed
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VelocityMaximum:
    value: float
    theta: float
    band: int


def _max_speed_at(J, theta, tol=DEGENERACY_TOL):
    w, _, vel, _ = _fiber_velocity_data(J, theta % (2.0 * np.pi), tol)
    j = int(np.argmax(np.abs(vel)))
    return float(abs(vel[j])), j


def velocity_maximum(J: BlockJacobiOperator, grid_size: int = 512,
                     refine_iters: int = 80, workers=None) -> VelocityMaximum:
    """Maximal |band velocity|: coarse grid scan plus golden-section refinement
    of the winning bracket."""
    G = int(grid_size)
    if G < MIN_GRID:
        raise GridTooCoarse(f"grid size {G} below minimum {MIN_GRID}")
    thetas = 2.0 * np.pi * np.arange(G) / G
    coarse = parallel_map(lambda th: _max_speed_at(J, th), thetas, workers)
    values = np.array([c[0] for c in coarse])
    g_star = int(np.argmax(values))
    best_val = float(values[g_star])
    best_theta = float(thetas[g_star])
    best_band = coarse[g_star][1]

    # golden-section maximization on the bracketing cell around the grid argmax
    h = 2.0 * np.pi / G
    a, b = thetas[g_star] - h, thetas[g_star] + h
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, _ = _max_speed_at(J, x1)
    f2, _ = _max_speed_at(J, x2)
    for _ in range(refine_iters):
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2, _ = _max_speed_at(J, x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1, _ = _max_speed_at(J, x1)
    x_ref = 0.5 * (a + b)
    f_ref, band_ref = _max_speed_at(J, x_ref)
    if f_ref > best_val:
        best_val, best_theta, best_band = f_ref, x_ref % (2.0 * np.pi), band_ref
    return VelocityMaximum(value=best_val, theta=best_theta, band=best_band)


def q_norm(J: BlockJacobiOperator, grid_size: int = 512, workers=None) -> float:
    """Norm of the asymptotic velocity operator: sup over bands and theta of
    |q * dlambda/dtheta|."""
    return velocity_maximum(J, grid_size=grid_size, workers=workers).value


# ---------------------------------------------------------------------------
# Floquet transform and the velocity operator applied to packets
# ---------------------------------------------------------------------------


def floquet_transform(J: BlockJacobiOperator, psi: WavePacket, thetas) -> np.ndarray:
    """Sampled transform (F psi)_k(theta) = sum_l psi_{k+lq} e^{-il theta};
    returns an array of shape (len(thetas), q, m)."""
    thetas = np.asarray(thetas, dtype=float)
    out = np.zeros((len(thetas), J.q, J.m), dtype=complex)
    for i, s in enumerate(psi.sites):
        k = s % J.q
        l = s // J.q
        out[:, k, :] += np.exp(-1j * l * thetas)[:, None] * psi.coeffs[i]
    return out


def floquet_parseval_check(J: BlockJacobiOperator, psi: WavePacket, grid_size: int) -> float:
    """|trapezoid of ||F psi(theta)||^2 - ||psi||^2| on the uniform grid."""
    G = int(grid_size)
    if G < MIN_GRID:
        raise GridTooCoarse(f"grid size {G} below minimum {MIN_GRID}")
    thetas = 2.0 * np.pi * np.arange(G) / G
    hat = floquet_transform(J, psi, thetas)
    quad = float(np.mean(np.sum(np.abs(hat) ** 2, axis=(1, 2))))
    return abs(quad - psi.norm() ** 2)


def _velocity_fiber_operator(J, theta, tol=DEGENERACY_TOL, absolute=False):
    """The fiber of the asymptotic velocity operator at theta: the cluster
    block-diagonal part of A_theta in the eigenbasis of J_theta."""
    jf, af = fiber_matrices(J, theta)
    w, v = np.linalg.eigh(jf)
    compressed = v.conj().T @ af @ v
    blocked = np.zeros_like(compressed)
    for sl in _clusters(w, tol):
        blk = compressed[sl, sl]
        if absolute:
            d, u = np.linalg.eigh(0.5 * (blk + blk.conj().T))
            blk = u @ (np.abs(d)[:, None] * u.conj().T)
        blocked[sl, sl] = blk
    return v @ blocked @ v.conj().T


@dataclass(frozen=True)
class QApplication:
    """Result of applying the asymptotic velocity operator on a grid."""

    packet: WavePacket
    grid_size: int
    quadrature_error: float
    tail_mass: float


def _apply_q_raw(J, psi, G, absolute=False, workers=None):
    thetas = 2.0 * np.pi * np.arange(G) / G
    hat = floquet_transform(J, psi, thetas).reshape(G, J.q * J.m)
    fibers = parallel_map(
        lambda th: _velocity_fiber_operator(J, th, absolute=absolute), thetas, workers
    )
    y = np.stack([f @ h for f, h in zip(fibers, hat)]).reshape(G, J.q, J.m)
    ls = np.arange(-(G // 2), G - G // 2)
    phases = np.exp(1j * np.outer(ls, thetas)) / G
    coeff = np.einsum("lg,gkm->lkm", phases, y)
    blocks = coeff.reshape(len(ls) * J.q, J.m)
    base = int(ls[0]) * J.q
    return WavePacket(base, blocks)


def apply_q(J: BlockJacobiOperator, psi: WavePacket, grid_size: int = 512,
            tol: float = 1e-8, coeff_floor: float = 1e-12, workers=None) -> QApplication:
    """Apply the asymptotic velocity operator to a finitely supported packet.

    Transforms psi to the fiber grid, multiplies by the velocity fiber, and
    inverse-transforms. The quadrature error is estimated against the half
    grid; coefficients below coeff_floor are dropped and reported as tail
    mass. Raises GridTooCoarse when the error estimate exceeds tol.

    With grid_size=None the grid starts at 512 and doubles until both the
    Parseval residual and the half-grid comparison fall below tol.
    """
    if grid_size is None:
        G = 512
        while True:
            res = apply_q(J, psi, grid_size=G, tol=np.inf, coeff_floor=coeff_floor,
                          workers=workers)
            parseval = floquet_parseval_check(J, psi, G)
            if res.quadrature_error < tol and parseval < tol:
                return res
            G *= 2
            if G > 16384:
                raise GridTooCoarse(
                    f"velocity-operator quadrature did not reach {tol} by grid 16384"
                )
    G = int(grid_size)
    if G < MIN_GRID:
        raise GridTooCoarse(f"grid size {G} below minimum {MIN_GRID}")
    full = _apply_q_raw(J, psi, G, workers=workers)
    half = _apply_q_raw(J, psi, max(G // 2, 8), workers=workers)  # error estimator only
    err = (full - half).norm()
    packet = full.trimmed(coeff_floor)
    tail = max(full.norm() ** 2 - packet.norm() ** 2, 0.0)
    if err > tol:
        raise GridTooCoarse(
            f"velocity-operator quadrature error {err:.3e} exceeds tolerance {tol:.3e} at grid {G}"
        )
    return QApplication(packet=packet, grid_size=G, quadrature_error=float(err),
                        tail_mass=float(tail))


def abs_velocity_expectation(J: BlockJacobiOperator, psi: WavePacket,
                             grid_size: int = 2048, workers=None) -> float:
    """<psi, |Q| psi> by fiberwise quadrature, |Q| taken spectrally per fiber."""
    G = int(grid_size)
    if G < MIN_GRID:
        raise GridTooCoarse(f"grid size {G} below minimum {MIN_GRID}")
    thetas = 2.0 * np.pi * np.arange(G) / G
    hat = floquet_transform(J, psi, thetas).reshape(G, J.q * J.m)
    vals = parallel_map(
        lambda i: float(
            np.real(
                hat[i].conj()
                @ (_velocity_fiber_operator(J, thetas[i], absolute=True) @ hat[i])
            )
        ),
        range(G),
        workers,
    )
    return float(np.mean(vals))
