import numpy as np
import pytest

from blochdyn import (
    BlockSpec,
    WavePacket,
    apply,
    apply_current,
    build_operator,
    scalar_spec,
    truncate,
)
from blochdyn.errors import (
    DimensionMismatch,
    NonHermitianDiagonal,
    SingularOffDiagonal,
    SizeLimitExceeded,
    SupportOutsideWindow,
)


def free_laplacian():
    return build_operator(scalar_spec([0.0]))


def random_spec(rng, m, q, real=False):
    a = rng.standard_normal((q, m, m))
    b = rng.standard_normal((q, m, m))
    if not real:
        a = a + 1j * rng.standard_normal((q, m, m))
        b = b + 1j * rng.standard_normal((q, m, m))
    b = 0.5 * (b + np.conj(np.transpose(b, (0, 2, 1))))
    a = a + 3.0 * np.eye(m)  # keep the off-diagonal blocks well invertible
    return BlockSpec(m=m, q=q, a=a, b=b)


def random_packet(rng, m, lo=-3, width=6):
    c = rng.standard_normal((width, m)) + 1j * rng.standard_normal((width, m))
    return WavePacket(lo, c)


# --- construction -----------------------------------------------------------


def test_build_free_laplacian():
    J = free_laplacian()
    assert J.m == 1 and J.q == 1
    assert J.norm_bound == pytest.approx(2.0)


def test_singular_off_diagonal_rejected():
    with pytest.raises(SingularOffDiagonal):
        build_operator(BlockSpec(m=1, q=1, a=np.zeros((1, 1, 1)), b=np.zeros((1, 1, 1))))


def test_non_hermitian_diagonal_rejected():
    b = np.array([[[0.0, 1.0], [0.0, 0.0]]], dtype=complex)
    a = np.array([np.eye(2)], dtype=complex)
    with pytest.raises(NonHermitianDiagonal):
        build_operator(BlockSpec(m=2, q=1, a=a, b=b))


def test_dimension_mismatch_rejected():
    with pytest.raises(DimensionMismatch):
        BlockSpec(m=2, q=1, a=np.ones((1, 1, 1)), b=np.zeros((1, 2, 2)))
    with pytest.raises(DimensionMismatch):
        BlockSpec(m=0, q=1, a=np.ones((1, 1, 1)), b=np.zeros((1, 1, 1)))


def test_xy_style_blocks_accepted():
    # coupling block 2[[-mu, -mu g], [mu g, mu]] at mu=1, g=2: det = 12
    gamma = 2.0
    a = np.array([2.0 * np.array([[-1.0, -gamma], [gamma, 1.0]])], dtype=complex)
    assert abs(np.linalg.det(a[0])) == pytest.approx(12.0)
    b = np.zeros((1, 2, 2), dtype=complex)
    J = build_operator(BlockSpec(m=2, q=1, a=a, b=b))
    assert J.m == 2


def test_spec_json_round_trip():
    rng = np.random.default_rng(1)
    spec = random_spec(rng, 2, 3)
    data = spec.to_json_dict()
    back = BlockSpec.from_json_dict(data)
    assert np.allclose(back.a, spec.a)
    assert np.allclose(back.b, spec.b)


# --- apply / apply_current ---------------------------------------------------


def test_apply_free_delta():
    J = free_laplacian()
    out = apply(J, WavePacket.delta_scalar(0, 1))
    assert out.block(-1)[0] == pytest.approx(1.0)
    assert out.block(1)[0] == pytest.approx(1.0)
    assert abs(out.block(0)[0]) < 1e-15


def test_apply_constant_diagonal():
    J = build_operator(scalar_spec([3.0]))
    out = apply(J, WavePacket.delta_scalar(0, 1))
    assert out.block(0)[0] == pytest.approx(3.0)
    assert out.block(1)[0] == pytest.approx(1.0)
    assert out.block(-1)[0] == pytest.approx(1.0)


def test_apply_period2_phase_convention():
    # site 0 carries the first listed diagonal value
    v = 0.7
    J = build_operator(scalar_spec([v, -v]))
    out = apply(J, WavePacket.delta_scalar(0, 1))
    assert out.block(0)[0] == pytest.approx(v)
    assert out.block(1)[0] == pytest.approx(1.0)
    assert out.block(-1)[0] == pytest.approx(1.0)


def test_apply_current_free_delta():
    J = free_laplacian()
    out = apply_current(J, WavePacket.delta_scalar(0, 1))
    assert out.block(-1)[0] == pytest.approx(1j)
    assert out.block(1)[0] == pytest.approx(-1j)


def test_apply_current_zero_packet():
    J = free_laplacian()
    out = apply_current(J, WavePacket.zero(1))
    assert out.norm() == 0.0


def test_apply_current_xy_isotropic_blocks():
    gamma_blk = 2.0 * np.diag([-1.0, 1.0])
    a = np.array([gamma_blk], dtype=complex)
    b = np.zeros((1, 2, 2), dtype=complex)
    J = build_operator(BlockSpec(m=2, q=1, a=a, b=b))
    e1 = WavePacket.delta_block(0, 0, 2)
    out = apply_current(J, e1)
    assert np.allclose(out.block(1), -1j * gamma_blk.conj().T @ np.array([1.0, 0.0]))
    assert np.allclose(out.block(-1), 1j * gamma_blk @ np.array([1.0, 0.0]))


def test_current_is_position_commutator():
    rng = np.random.default_rng(7)
    for m, q in [(1, 1), (1, 2), (2, 3)]:
        J = build_operator(random_spec(rng, m, q))
        u = random_packet(rng, m)
        lhs = apply_current(J, u)
        rhs = 1j * (apply(J, u.position_applied()) - apply(J, u).position_applied())
        assert (lhs - rhs).norm() < 1e-12 * max(1.0, u.norm())


# --- truncation ---------------------------------------------------------------


def test_truncate_free_3x3():
    J = free_laplacian()
    tr = truncate(J, 1)
    assert np.allclose(tr.matrix.real, [[0, 1, 0], [1, 0, 1], [0, 1, 0]])
    # closed-form path-graph eigenvalues
    assert np.allclose(tr.eigenvalues, [-np.sqrt(2), 0.0, np.sqrt(2)], atol=1e-12)


def test_truncation_hermitian_and_bounded():
    rng = np.random.default_rng(3)
    for m, q in [(1, 2), (2, 2), (3, 1)]:
        J = build_operator(random_spec(rng, m, q))
        tr = J.truncate(6)
        assert np.max(np.abs(tr.matrix - tr.matrix.conj().T)) < 1e-12
        assert np.max(np.abs(tr.eigenvalues)) <= J.norm_bound + 1e-10
        _, u = tr.eigensystem
        assert np.max(np.abs(u.conj().T @ u - np.eye(tr.dim))) < 1e-10


def test_truncation_interior_matches_apply():
    rng = np.random.default_rng(11)
    J = build_operator(random_spec(rng, 2, 3))
    N = 8
    tr = J.truncate(N)
    u = random_packet(rng, 2, lo=-N + 2, width=5)
    dense = tr.matrix @ tr.embed(u)
    direct = tr.embed(apply(J, u))
    assert np.max(np.abs(dense - direct)) < 1e-12


def test_truncate_size_guard():
    J = free_laplacian()
    with pytest.raises(SizeLimitExceeded):
        J.truncate(5000)


def test_embed_rejects_outside_support():
    J = free_laplacian()
    tr = J.truncate(4)
    with pytest.raises(SupportOutsideWindow):
        tr.embed(WavePacket.delta_scalar(9, 1))


# --- wave packets --------------------------------------------------------------


def test_scalar_index_convention():
    # scalar n maps to block floor(n/m), component n mod m
    p = WavePacket.delta_scalar(-1, 2)
    assert p.support() == (-1, -1)
    assert p.block(-1)[1] == 1.0
    assert p.scalar_coefficient(-1) == 1.0
    p2 = WavePacket.delta_scalar(4, 2)
    assert p2.support() == (2, 2)
    assert p2.block(2)[0] == 1.0


def test_packet_arithmetic_and_inner():
    a = WavePacket.delta_scalar(0, 1)
    b = WavePacket.delta_scalar(3, 1)
    s = a + 2.0 * b
    assert s.norm() == pytest.approx(np.sqrt(5.0))
    assert s.inner(a) == pytest.approx(1.0)
    assert (s - a - 2.0 * b).norm() == 0.0


def test_packet_trim():
    c = np.array([[1e-20], [1.0], [0.0]], dtype=complex)
    p = WavePacket(-5, c).trimmed(1e-15)
    assert p.support() == (-4, -4)
