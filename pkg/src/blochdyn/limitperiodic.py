"""Transfer matrices, Lyapunov exponents, and staged quasi-ballistic
constructions for scalar Schroedinger operators.

Potentials are real 1D arrays interpreted as periodic sequences (period =
length). The n-step transfer matrix at energy E is the ordered product

    Phi(n, E, w) = [[E - w_{n-1}, -1], [1, 0]] ... [[E - w_0, -1], [1, 0]]

(rightmost factor first). Products are accumulated with running rescaling so
norms of order exp(10^4) stay representable through their logarithms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .blockjacobi import WavePacket, build_operator, scalar_spec
from .dynamics import moment_trajectory, required_half_width
from .errors import (
    NoCertificateFound,
    PsiEnvelopeViolated,
    QuadratureNotConverged,
    WindowTooShort,
)
from .floquet import fiber_matrices

DEFAULT_SEED = 20240901


# ---------------------------------------------------------------------------
# Transfer matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransferProduct:
    """Rescaled transfer-matrix product: matrix = scaled * exp(log_scale).

    Determinant drift is accumulated over restarted segments (determinants
    multiply, and each segment stays inside floating-point range even when
    the full product's condition number does not).
    """

    n: int
    energy: complex
    window: np.ndarray
    scaled: np.ndarray
    log_scale: float
    det_log_drift: float
    det_arg_drift: float

    @property
    def matrix(self):
        """The unscaled 2x2 product; overflows to inf for very long products."""
        return self.scaled * math.exp(self.log_scale) if self.log_scale < 700 else (
            self.scaled * np.inf
        )

    @property
    def log_norm(self):
        """log of the spectral norm, safe for any product length."""
        return self.log_scale + math.log(np.linalg.norm(self.scaled, 2))

    def det_deviation(self):
        """(|log|det||, |arg det|) of the full product; both vanish for an
        exact unimodular product."""
        return abs(self.det_log_drift), abs(self.det_arg_drift)


def transfer_matrix(n: int, energy, w, periodic: bool = False) -> TransferProduct:
    """Ordered product of one-step matrices over w_0 .. w_{n-1}.

    With periodic=False the window must supply at least n values; with
    periodic=True the (shorter) window is tiled.
    """
    n = int(n)
    if n < 1:
        raise WindowTooShort("need at least one step")
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if not periodic and len(w) < n:
        raise WindowTooShort(f"window of length {len(w)} cannot supply {n} steps")
    E = complex(energy)
    mat = np.eye(2, dtype=complex)
    log_scale = 0.0
    seg = np.eye(2, dtype=complex)
    det_log = 0.0
    det_arg = 0.0
    for j in range(n):
        wj = w[j % len(w)]
        step = np.array([[E - wj, -1.0], [1.0, 0.0]], dtype=complex)
        mat = step @ mat
        seg = step @ seg
        peak = np.abs(mat).max()
        if peak > 1e30 or (0.0 < peak < 1e-30):
            mat = mat / peak
            log_scale += math.log(peak)
        # restart while the segment is small: the 2x2 determinant of a large
        # ill-conditioned product cancels catastrophically
        if np.abs(seg).max() > 10.0:
            d = complex(np.linalg.det(seg))
            det_log += math.log(abs(d))
            det_arg += np.angle(d)
            seg = np.eye(2, dtype=complex)
    d = complex(np.linalg.det(seg))
    det_log += math.log(abs(d))
    det_arg += np.angle(d)
    return TransferProduct(n=n, energy=E, window=w[: min(len(w), n)].copy(),
                           scaled=mat, log_scale=log_scale,
                           det_log_drift=det_log, det_arg_drift=det_arg)


def finite_lyapunov(n: int, energy, w, periodic: bool = False) -> float:
    """(1/n) log ||Phi(n, E, w)|| with the spectral norm."""
    return transfer_matrix(n, energy, w, periodic).log_norm / n


@dataclass(frozen=True)
class PotentialFamily:
    """Finite family of periodic potentials sharing one period."""

    members: tuple
    period: int

    def __post_init__(self):
        members = tuple(np.atleast_1d(np.asarray(m, dtype=float)) for m in self.members)
        if not members:
            raise WindowTooShort("family must be nonempty")
        if any(len(m) != self.period for m in members):
            raise WindowTooShort(
                f"every member must have period {self.period}"
            )
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "period", int(self.period))


def family_lyapunov(n: int, energy, members, periodic: bool = False) -> float:
    """Average of finite_lyapunov over a family of potentials (a
    PotentialFamily or any iterable of potential arrays)."""
    if isinstance(members, PotentialFamily):
        return float(np.mean([finite_lyapunov(n, energy, w, periodic=True)
                              for w in members.members]))
    members = list(members)
    if not members:
        raise WindowTooShort("family must be nonempty")
    return float(np.mean([finite_lyapunov(n, energy, w, periodic) for w in members]))


def periodic_lyapunov(energy, w_period) -> float:
    """Exact asymptotic exponent for a periodic potential: (1/p) log of the
    spectral radius of the one-period product, branch >= 1."""
    w = np.atleast_1d(np.asarray(w_period, dtype=float))
    p = len(w)
    prod = transfer_matrix(p, energy, w)
    eigs = np.linalg.eigvals(prod.scaled)
    rho = float(np.max(np.abs(eigs)))
    return max(prod.log_scale + math.log(rho), 0.0) / p


# ---------------------------------------------------------------------------
# Thouless cross-check
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ThoulessResult:
    lhs: float
    rhs: float
    gap: float
    grid_size: int


def thouless_check(p: int, z, w, grid_size: int = 2048, quad_tol: float = 1e-4) -> ThoulessResult:
    """Two independent routes to the Lyapunov exponent at complex energy z.

    lhs: transfer-matrix route, (1/p) log(spectral radius) of the one-period
    product. rhs: density-of-states route, the log-potential of the band
    measure computed from the scalar Bloch fibers,
    (1 / (2 pi p)) integral of sum_j log|z - lambda_j(theta)|.
    Requires Im z >= 0.05 so the integrand stays smooth.
    """
    z = complex(z)
    if z.imag < 0.05:
        raise ValueError(f"need Im z >= 0.05 for a stable check, got {z.imag}")
    w = np.atleast_1d(np.asarray(w, dtype=float))
    p = int(p)
    if len(w) != p:
        raise WindowTooShort(f"potential has period {len(w)}, expected {p}")
    lhs = periodic_lyapunov(z, w)

    J = build_operator(scalar_spec(w))

    def dos_side(G):
        thetas = 2.0 * np.pi * np.arange(G) / G
        total = 0.0
        for th in thetas:
            jf, _ = fiber_matrices(J, th)
            lam = np.linalg.eigvalsh(jf)
            total += float(np.sum(np.log(np.abs(z - lam))))
        return total / (G * p)

    rhs = dos_side(grid_size)
    rhs_half = dos_side(max(grid_size // 2, 16))
    if abs(rhs - rhs_half) > quad_tol:
        raise QuadratureNotConverged(
            f"density-of-states quadrature moved by {abs(rhs - rhs_half):.2e} "
            f"between grids {grid_size // 2} and {grid_size}"
        )
    return ThoulessResult(lhs=float(lhs), rhs=float(rhs), gap=float(abs(lhs - rhs)),
                          grid_size=int(grid_size))


# ---------------------------------------------------------------------------
# Transport criterion integral
# ---------------------------------------------------------------------------


def _inverse_peak_growth(E, eta, w, n_max):
    """exp(-2 max_n log||Phi(n, E + i eta, w)||), n = 1..n_max, w periodic."""
    z = complex(E, eta)
    mat = np.eye(2, dtype=complex)
    log_scale = 0.0
    best = -np.inf
    for j in range(n_max):
        wj = w[j % len(w)]
        step = np.array([[z - wj, -1.0], [1.0, 0.0]], dtype=complex)
        mat = step @ mat
        peak = np.abs(mat).max()
        if peak > 1e100:
            mat = mat / peak
            log_scale += math.log(peak)
        best = max(best, log_scale + math.log(np.linalg.norm(mat, 2)))
    return math.exp(-2.0 * best) if best < 350 else 0.0


def _adaptive_simpson(f, a, b, rel_tol, max_depth=24):
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    scale = max(abs(whole), 1e-12)

    def recurse(a, b, fa, fm, fb, whole, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        if depth <= 0:
            raise QuadratureNotConverged(
                f"adaptive Simpson depth exhausted on [{a}, {b}]"
            )
        if abs(left + right - whole) <= 15.0 * rel_tol * scale:
            return left + right + (left + right - whole) / 15.0
        return (recurse(a, m, fa, flm, fm, left, depth - 1)
                + recurse(m, b, fm, frm, fb, right, depth - 1))

    return recurse(a, b, fa, fm, fb, whole, max_depth)


def dt_criterion(w, coupling: float, K: float, T: float, alpha: float = 1.0,
                 p_period: int | None = None, rel_tol: float = 1e-4) -> float:
    """Integral over [-K, K] of 1 / max_{1<=n<=floor(T^alpha)}
    ||Phi(n, E + i/T, coupling * w)||^2, by adaptive Simpson.

    Order-1 values signal transport (transfer matrices stay polynomially
    bounded on the spectrum); exponentially small values signal a spectral
    gap or positive Lyapunov exponent on [-K, K]. The integrand never
    exceeds 1 because every one-step factor has norm >= 1.
    """
    if K <= 0 or T <= 0 or not 0.0 < alpha <= 1.0:
        raise ValueError("need K > 0, T > 0, and alpha in (0, 1]")
    w = np.atleast_1d(np.asarray(w, dtype=float)) * float(coupling)
    if p_period is not None and len(w) != int(p_period):
        raise WindowTooShort(f"potential period {len(w)} does not match declared {p_period}")
    n_max = max(1, int(math.floor(T**alpha)))
    eta = 1.0 / T
    return float(_adaptive_simpson(
        lambda E: _inverse_peak_growth(E, eta, w, n_max), -float(K), float(K), rel_tol
    ))


# ---------------------------------------------------------------------------
# Perturbation stability and growth certificates
# ---------------------------------------------------------------------------


def schroedinger_operator(potential):
    """Discrete Schroedinger operator (hopping 1) for a periodic potential."""
    return build_operator(scalar_spec(potential))


def check_envelope(psi: WavePacket, m_env: int):
    if psi.m != 1:
        raise PsiEnvelopeViolated("envelope bound applies to scalar packets")
    sites = psi.sites
    bound = m_env * np.exp(-np.abs(sites) / m_env)
    if np.any(np.abs(psi.coeffs[:, 0]) > bound * (1.0 + 1e-12)):
        raise PsiEnvelopeViolated(
            f"packet exceeds the envelope {m_env} exp(-|n|/{m_env})"
        )


def envelope_packet(m_env: int, cutoff: int | None = None) -> WavePacket:
    """Normalized two-sided exponential at the envelope boundary."""
    if cutoff is None:
        cutoff = int(math.ceil(m_env * 40))
    ns = np.arange(-cutoff, cutoff + 1)
    vals = m_env * np.exp(-np.abs(ns) / m_env)
    vals = vals / np.linalg.norm(vals)
    return WavePacket(-cutoff, vals.reshape(-1, 1).astype(complex))


def perturbation_stability(W, V, psi: WavePacket, t: float, p: float,
                           m_env: int) -> float:
    """|moment(t; base potential) - moment(t; perturbed potential)| with both
    evolutions run on a common truncation sized for the larger norm bound."""
    check_envelope(psi, m_env)
    jw = schroedinger_operator(W)
    jv = schroedinger_operator(V)
    half = max(
        _half_width_for(jw, psi, t),
        _half_width_for(jv, psi, t),
    )
    mw = moment_trajectory(jw, psi, p, [t], half_width=half)
    mv = moment_trajectory(jv, psi, p, [t], half_width=half)
    if len(mw.values) == 0 or len(mv.values) == 0:
        raise QuadratureNotConverged("edge mass rejected the stability sample")
    return float(abs(mw.values[0] - mv.values[0]))


def _half_width_for(J, psi, t_max):
    return required_half_width(J, psi.support_radius(), t_max)


def _battery(m_env):
    return (("delta0", WavePacket.delta_scalar(0, 1)),
            ("envelope_exp", envelope_packet(m_env)))


def _threshold(T, p):
    return T**p / math.log(T)


def _tiled_sum(base, extra):
    """Pointwise sum of two periodic potentials, tiled to the lcm period."""
    base = np.atleast_1d(np.asarray(base, dtype=float))
    extra = np.atleast_1d(np.asarray(extra, dtype=float))
    period = math.lcm(len(base), len(extra))
    idx = np.arange(period)
    return base[idx % len(base)] + extra[idx % len(extra)]


@dataclass(frozen=True)
class GrowthCertificate:
    """Certified (time, radius) pair for threshold-beating moment growth.

    time is the smallest dyadic time at which every battery packet clears
    twice the threshold T^p / log T under the base potential; packet_times
    holds each packet's own smallest passing time. radius is a perturbation
    size within which sampled potentials keep every packet above the
    (unhalved) threshold at that time.
    """

    time: float
    radius: float
    moment_order: float
    envelope_m: int
    battery: tuple
    packet_times: dict
    packet_moments: dict
    seed: int


def growth_certificate(W, p: float, m_env: int, seed: int = DEFAULT_SEED,
                       time_budget: float = 4096.0, n_perturbations: int = 8,
                       radius_floor: float = 1e-6) -> GrowthCertificate:
    """Search dyadic times for moment growth beating 2 T^p / log T, then
    bisect the perturbation radius that preserves T^p / log T.

    Raises NoCertificateFound when either search exhausts its budget.
    """
    W = np.atleast_1d(np.asarray(W, dtype=float))
    jw = schroedinger_operator(W)
    battery = _battery(m_env)
    packet_times: dict = {}
    packet_moments: dict = {}

    T = 1.0
    while T < max(1, m_env):
        T *= 2.0
    certified_T = None
    while T <= time_budget:
        all_pass = T > 1.0
        for name, psi in battery:
            mom = moment_trajectory(jw, psi, p, [T],
                                    half_width=_half_width_for(jw, psi, T)).values
            if len(mom) == 0:
                all_pass = False
                continue
            packet_moments.setdefault(name, {})[T] = float(mom[0])
            passed = T > 1.0 and mom[0] > 2.0 * _threshold(T, p)
            if passed and name not in packet_times:
                packet_times[name] = T
            all_pass = all_pass and passed
        if all_pass:
            certified_T = T
            break
        T *= 2.0
    if certified_T is None:
        raise NoCertificateFound(
            f"no dyadic time up to {time_budget} beat twice the threshold"
        )

    def ball_ok(delta):
        rng = np.random.default_rng(seed)
        pr = max(16, 2 * len(W))
        for _ in range(n_perturbations):
            V = _tiled_sum(W, rng.uniform(-delta, delta, pr))
            jv = schroedinger_operator(V)
            for _, psi in battery:
                mom = moment_trajectory(jv, psi, p, [certified_T],
                                        half_width=_half_width_for(jv, psi, certified_T)).values
                if len(mom) == 0 or not mom[0] > _threshold(certified_T, p):
                    return False
        return True

    hi = 1.0
    while not ball_ok(hi):
        hi *= 0.5
        if hi < radius_floor:
            raise NoCertificateFound(
                f"no perturbation radius above {radius_floor} preserved the threshold"
            )
    lo_pass, hi_fail = hi, (2.0 * hi if hi < 1.0 else None)
    if hi_fail is not None:
        for _ in range(8):
            mid = 0.5 * (lo_pass + hi_fail)
            if ball_ok(mid):
                lo_pass = mid
            else:
                hi_fail = mid

    return GrowthCertificate(
        time=float(certified_T),
        radius=float(lo_pass),
        moment_order=float(p),
        envelope_m=int(m_env),
        battery=tuple(name for name, _ in battery),
        packet_times={k: float(v) for k, v in packet_times.items()},
        packet_moments={k: dict(v) for k, v in packet_moments.items()},
        seed=int(seed),
    )


# ---------------------------------------------------------------------------
# Staged construction of a quasi-ballistic potential
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StageRecord:
    stage: int
    potential: np.ndarray
    period: int
    delta: float
    time: float
    moment_order: float
    envelope_m: int


@dataclass(frozen=True)
class VerificationRow:
    stage: int
    time: float
    threshold: float
    worst_moment: float
    ok: bool


@dataclass(frozen=True)
class GenericConstruction:
    records: tuple
    verification: tuple
    final_potential: np.ndarray

    @property
    def all_ok(self):
        return all(row.ok for row in self.verification)


def _alternating_pattern(period, amplitude):
    """Deterministic perturbation of exact period `period`: +amplitude on the
    first half, -amplitude on the second."""
    half = period // 2
    return np.concatenate([np.full(half, amplitude), np.full(period - half, -amplitude)])


def generic_builder(stages: int, p: float, m_env: int, seed: int = DEFAULT_SEED,
                    max_attempts: int = 3) -> GenericConstruction:
    """Finite-stage realization of nested perturbation balls with certified
    moment growth.

    Stage 1 starts from the zero potential; stage k doubles the period and
    adds an alternating perturbation of size delta_{k-1}/4, then re-certifies.
    Radii are capped to enforce delta_{k+1} < delta_k / 2, so the final
    potential lies inside every stage's ball; the verification table replays
    each stage's threshold inequality with the final potential.
    """
    if not 1 <= stages <= 5:
        raise ValueError("stages must be between 1 and 5 (desk scale)")
    shrink = 1.0
    for _ in range(max_attempts):
        records = []
        potential = np.zeros(1)
        period = 1
        prev_delta = None
        try:
            for k in range(1, stages + 1):
                if k > 1:
                    period *= 2
                    eps = shrink * prev_delta / 4.0
                    potential = _tiled_sum(potential, _alternating_pattern(period, eps))
                cert = growth_certificate(potential, p, m_env, seed=seed)
                delta = cert.radius
                if prev_delta is not None:
                    delta = min(delta, 0.499 * prev_delta)
                records.append(StageRecord(
                    stage=k, potential=potential.copy(), period=period,
                    delta=float(delta), time=cert.time, moment_order=float(p),
                    envelope_m=int(m_env),
                ))
                prev_delta = delta
        except NoCertificateFound:
            shrink *= 0.5
            continue

        final_v = records[-1].potential
        jv = schroedinger_operator(final_v)
        battery = _battery(m_env)
        rows = []
        for rec in records:
            worst = math.inf
            for _, psi in battery:
                vals = moment_trajectory(jv, psi, p, [rec.time],
                                         half_width=_half_width_for(jv, psi, rec.time)).values
                worst = min(worst, float(vals[0]) if len(vals) else -math.inf)
            thr = _threshold(rec.time, p)
            rows.append(VerificationRow(stage=rec.stage, time=rec.time, threshold=thr,
                                        worst_moment=worst, ok=bool(worst > thr)))
        construction = GenericConstruction(records=tuple(records),
                                           verification=tuple(rows),
                                           final_potential=final_v)
        if construction.all_ok:
            return construction
        shrink *= 0.5
    raise NoCertificateFound(
        f"staged construction failed verification after {max_attempts} shrink attempts"
    )
