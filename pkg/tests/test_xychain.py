import numpy as np
import pytest

from blochdyn.errors import ChainTooLong, DimensionMismatch, InvalidSpec
from blochdyn.xychain import (
    SX,
    SY,
    SZ,
    XYChainSpec,
    build_spin_hamiltonian,
    commutator_norm,
    free_fermion_residual,
    lr_velocity_bound,
    propagation_lower_bound,
    propagation_upper_bound,
    scalar_row,
    single_particle_matrix,
    single_particle_window,
)

ANISO = XYChainSpec(mu=[1.0], gamma=[0.5], nu=[1.0])
ISO = XYChainSpec(mu=[1.0], gamma=[0.0], nu=[0.0])


# --- spec validation ----------------------------------------------------------


def test_zero_coupling_rejected():
    with pytest.raises(InvalidSpec):
        XYChainSpec(mu=[0.0], gamma=[0.0], nu=[0.0])


def test_ising_point_allowed_for_spin_chain_only():
    ising = XYChainSpec(mu=[1.0], gamma=[1.0], nu=[0.0])
    chain = build_spin_hamiltonian(ising, (1, 2))
    assert np.allclose(chain.hamiltonian, 2.0 * np.kron(SX, SX))
    with pytest.raises(InvalidSpec):
        single_particle_matrix(ising)
    with pytest.raises(InvalidSpec):
        single_particle_matrix(XYChainSpec(mu=[1.0], gamma=[-1.0], nu=[0.0]))


def test_mixed_periods_lcm():
    spec = XYChainSpec(mu=[1.0, 2.0], gamma=[0.1, 0.2, 0.3], nu=[0.5])
    assert spec.period == 6
    assert single_particle_matrix(spec).q == 6


# --- free-fermion matrix blocks ------------------------------------------------


def test_blocks_isotropic():
    J = single_particle_matrix(ISO)
    assert np.allclose(J.spec.a[0], 2.0 * np.diag([-1.0, 1.0]))
    assert np.allclose(J.spec.b[0], np.zeros((2, 2)))


def test_blocks_anisotropic():
    J = single_particle_matrix(ANISO)
    assert np.allclose(J.spec.b[0], np.diag([2.0, -2.0]))
    assert np.allclose(J.spec.a[0], [[-2.0, -1.0], [1.0, 2.0]])


def test_window_layout():
    # diagonal blocks on (c_j, c_j^*) rows, coupling block one step right
    M = single_particle_window(ANISO, (1, 3))
    assert M.shape == (6, 6)
    assert np.allclose(M[0:2, 0:2], np.diag([2.0, -2.0]))
    assert np.allclose(M[0:2, 2:4], [[-2.0, -1.0], [1.0, 2.0]])
    assert np.allclose(M[2:4, 0:2], np.array([[-2.0, -1.0], [1.0, 2.0]]).T)
    assert np.max(np.abs(M - M.conj().T)) < 1e-12


def test_scalar_row_convention():
    lam = (2, 6)
    assert scalar_row(lam, 2) == 0
    assert scalar_row(lam, 2, dagger=True) == 1
    assert scalar_row(lam, 4) == 4
    with pytest.raises(DimensionMismatch):
        scalar_row(lam, 7)


# --- velocity bound --------------------------------------------------------------


def test_velocity_isotropic_decoupling():
    # gamma = 0 decouples into scalar chains with hopping 2 mu: v0 = 4 |mu|
    assert lr_velocity_bound(XYChainSpec(mu=[0.5], gamma=[0.0], nu=[0.0])) == pytest.approx(
        2.0, abs=1e-6
    )
    assert lr_velocity_bound(ISO) == pytest.approx(4.0, abs=1e-6)


def test_velocity_scaling():
    base = lr_velocity_bound(ANISO)
    scaled = lr_velocity_bound(XYChainSpec(mu=[3.0], gamma=[0.5], nu=[3.0]))
    assert scaled == pytest.approx(3.0 * base, abs=1e-8)


def test_velocity_anisotropic_brute_force():
    # oracle: 1e5-point scan of the 2x2 fiber band slopes (finite differences)
    thetas = np.linspace(0, 2 * np.pi, 100001)
    diag = 2.0 - 4.0 * np.cos(thetas)
    off = 2.0 * np.sin(thetas)
    lam = np.sqrt(diag**2 + off**2)  # upper band of the anisotropic fiber
    slopes = np.abs(np.gradient(lam, thetas))
    oracle = float(np.max(slopes))
    val = lr_velocity_bound(ANISO)
    assert val == pytest.approx(oracle, abs=1e-6)
    assert val > 0


# --- spin chains ------------------------------------------------------------------


def test_single_site_field():
    chain = build_spin_hamiltonian(XYChainSpec(mu=[1.0], gamma=[0.0], nu=[3.0]), (5, 5))
    assert np.allclose(chain.hamiltonian, 3.0 * SZ)


def test_two_site_isotropic_spectrum():
    chain = build_spin_hamiltonian(ISO, (1, 2))
    assert np.allclose(np.linalg.eigvalsh(chain.hamiltonian), [-2.0, 0.0, 0.0, 2.0])


def test_chain_too_long():
    with pytest.raises(ChainTooLong):
        build_spin_hamiltonian(ISO, (1, 13))


def test_hamiltonian_hermitian():
    for spec in (ISO, ANISO, XYChainSpec(mu=[1.0, -0.5], gamma=[0.3], nu=[0.0, 1.0, 2.0])):
        chain = build_spin_hamiltonian(spec, (1, 5))
        assert np.max(np.abs(chain.hamiltonian - chain.hamiltonian.conj().T)) < 1e-10


def test_canonical_anticommutation():
    chain = build_spin_hamiltonian(ANISO, (1, 5))
    ident = np.eye(chain.dim)
    for j in range(1, 6):
        for k in range(1, 6):
            cj, ckd = chain.jw_annihilator(j), chain.jw_creator(k)
            anti = cj @ ckd + ckd @ cj
            target = ident if j == k else 0.0 * ident
            assert np.max(np.abs(anti - target)) < 1e-12
            ck = chain.jw_annihilator(k)
            assert np.max(np.abs(cj @ ck + ck @ cj)) < 1e-12


def test_sigma_z_number_identity():
    chain = build_spin_hamiltonian(ANISO, (1, 4))
    for j in range(1, 5):
        lhs = chain.sigma(j, "z")
        rhs = 2.0 * chain.jw_creator(j) @ chain.jw_annihilator(j) - np.eye(chain.dim)
        assert np.max(np.abs(lhs - rhs)) == 0.0


def test_heisenberg_automorphism():
    rng = np.random.default_rng(4)
    chain = build_spin_hamiltonian(ANISO, (1, 4))
    A = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
    B = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
    t = 0.8
    tA, tB, tAB = (chain.heisenberg(x, t) for x in (A, B, A @ B))
    assert np.linalg.norm(tAB - tA @ tB, 2) < 1e-10
    assert np.linalg.norm(chain.heisenberg(A.conj().T, t) - tA.conj().T, 2) < 1e-10


# --- commutator norms ---------------------------------------------------------------


def test_commutator_zero_at_t0_disjoint():
    chain = build_spin_hamiltonian(ANISO, (1, 5))
    assert commutator_norm(chain, chain.sigma(1, "x"), chain.sigma(4, "x"), 0.0) < 1e-14


def test_commutator_trivial_bound():
    rng = np.random.default_rng(6)
    chain = build_spin_hamiltonian(ANISO, (1, 4))
    A = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
    B = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
    for t in (0.3, 1.1):
        val = commutator_norm(chain, A, B, t)
        assert val <= 2 * np.linalg.norm(A, 2) * np.linalg.norm(B, 2) + 1e-10


def test_commutator_short_time_series():
    # P_t = t ||[i[H, A], B]|| + O(t^2)
    chain = build_spin_hamiltonian(ANISO, (1, 4))
    A, B = chain.sigma(2, "x"), chain.sigma(3, "y")
    t = 1e-3
    K = 1j * (chain.hamiltonian @ A - A @ chain.hamiltonian)
    first_order = np.linalg.norm(K @ B - B @ K, 2)
    assert abs(commutator_norm(chain, A, B, t) - t * first_order) < 100 * t**2


def test_commutator_dimension_guard():
    chain = build_spin_hamiltonian(ANISO, (1, 4))
    with pytest.raises(DimensionMismatch):
        commutator_norm(chain, np.eye(4), np.eye(16), 0.1)


def test_power_norm_matches_svd():
    from blochdyn.xychain import _power_norm

    rng = np.random.default_rng(21)
    M = rng.standard_normal((40, 40)) + 1j * rng.standard_normal((40, 40))
    Mh = M.conj().T
    est = _power_norm(lambda v: M @ v, lambda v: Mh @ v, 40)
    assert est == pytest.approx(np.linalg.norm(M, 2), rel=1e-6)


# --- free-fermion reduction ------------------------------------------------------------


def test_free_fermion_residual_t0():
    chain = build_spin_hamiltonian(ANISO, (1, 4))
    assert free_fermion_residual(chain, ANISO, 2, 0.0) < 1e-13


@pytest.mark.parametrize("spec", [ISO, ANISO, XYChainSpec(mu=[1.0], gamma=[-0.5], nu=[2.0])])
def test_free_fermion_residual_exact(spec):
    chain = build_spin_hamiltonian(spec, (1, 4))
    for j in (1, 3):
        for t in (1.0, 2.0):
            assert free_fermion_residual(chain, spec, j, t) < 1e-8


# --- propagation bounds ------------------------------------------------------------------


def test_lower_bound_t0():
    chain = build_spin_hamiltonian(ANISO, (1, 6))
    chk = propagation_lower_bound(chain, ANISO, 2, 4, 0.0, 1)
    assert chk.commutator < 1e-12 and chk.entry_abs < 1e-12 and chk.ok


def test_lower_bound_all_cases():
    chain = build_spin_hamiltonian(ANISO, (1, 6))
    for case in (1, 2, 3, 4):
        for t in (0.5, 1.5):
            chk = propagation_lower_bound(chain, ANISO, 2, 4, t, case)
            assert chk.ok


def test_lower_bound_isotropic():
    chain = build_spin_hamiltonian(ISO, (1, 6))
    for case in (1, 2, 3, 4):
        chk = propagation_lower_bound(chain, ISO, 2, 4, 1.0, case)
        assert chk.ok


def test_upper_bound_t0():
    chain = build_spin_hamiltonian(ANISO, (1, 6))
    chk = propagation_upper_bound(chain, ANISO, 2, 5, 0.0)
    assert chk.lhs < 1e-12 and chk.ok


def test_upper_bound_examples():
    chain = build_spin_hamiltonian(ANISO, (1, 6))
    chk = propagation_upper_bound(chain, ANISO, 2, 5, 1.0, B=chain.sigma(5, "x"))
    assert chk.ok
    chk2 = propagation_upper_bound(chain, ANISO, 2, 5, 1.0, B=chain.raising(5))
    assert chk2.ok
    assert chk2.lhs <= chk2.rhs


# --- light cone speed ---------------------------------------------------------------------


def _implicit_commutator_norm(chain, A, B, t, tol=1e-6, iters=400):
    """Power iteration for ||[tau_t(A), B]|| using matvecs only; fast enough
    to scan the light cone at 10 sites."""
    w, u = chain.eigensystem
    uh = u.conj().T
    ph_p, ph_m = np.exp(1j * t * w), np.exp(-1j * t * w)
    Ah, Bh = A.conj().T, B.conj().T

    def tau(mat, v):
        return u @ (ph_p * (uh @ (mat @ (u @ (ph_m * (uh @ v))))))

    def C(v):
        return tau(A, B @ v) - B @ tau(A, v)

    def Ch(v):
        return Bh @ tau(Ah, v) - tau(Ah, Bh @ v)

    rng = np.random.default_rng(5)
    v = rng.standard_normal(chain.dim) + 1j * rng.standard_normal(chain.dim)
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(iters):
        wv = Ch(C(v))
        nw = np.linalg.norm(wv)
        if nw == 0:
            return 0.0
        new_sigma = np.sqrt(nw)
        v = wv / nw
        if abs(new_sigma - sigma) < tol * max(new_sigma, 1.0):
            return new_sigma
        sigma = new_sigma
    return sigma


def test_light_cone_speed_matches_velocity_bound():
    # threshold-crossing speed of the commutator front stays within 20% of v0
    spec = ISO
    chain = build_spin_hamiltonian(spec, (1, 10))
    v0 = lr_velocity_bound(spec)
    A = chain.jw_annihilator(2)
    crossings = {}
    for r in range(5, 10):
        B = chain.raising(r)
        for t in np.arange(0.1, 2.51, 0.1):
            if _implicit_commutator_norm(chain, A, B, t) >= 0.1:
                crossings[r] = t
                break
    assert len(crossings) == 5
    dists = np.array([r - 2 for r in crossings], dtype=float)
    times = np.array(list(crossings.values()))
    speed = np.polyfit(times, dists, 1)[0]
    assert speed >= 0.8 * v0
