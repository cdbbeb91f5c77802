"""Periodic block Jacobi operators, wave packets, and dense truncations.

An operator acts on square-summable sequences of complex m-vectors by

    (J u)_n = a(n-1)^* u_{n-1} + b(n) u_n + a(n) u_{n+1},

with q-periodic blocks: site n uses the stored blocks a[n mod q], b[n mod q],
so site 0 carries the first listed pair. The associated current operator is

    (A u)_n = -i a(n-1)^* u_{n-1} + i a(n) u_{n+1},

which equals i[J, X] with X the block-site position operator.

Scalar indexing convention: scalar index n corresponds to block site
floor(n/m) and component n mod m, so X acts on the scalar basis vector
delta_n by multiplication with floor(n/m).
"""

from __future__ import annotations

import numbers
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    DimensionMismatch,
    NonHermitianDiagonal,
    SingularOffDiagonal,
    SizeLimitExceeded,
    SupportOutsideWindow,
)

DET_TOL = 1e-12
HERMITICITY_TOL = 1e-12
MAX_DENSE_DIM = 8192


# ---------------------------------------------------------------------------
# Block specification
# ---------------------------------------------------------------------------


def _block_array(blocks, m, q, name):
    try:
        arr = np.array(blocks, dtype=complex)
    except (TypeError, ValueError) as exc:
        raise DimensionMismatch(f"{name}: cannot interpret blocks as complex arrays") from exc
    if arr.shape != (q, m, m):
        raise DimensionMismatch(
            f"{name}: expected {q} blocks of shape {m}x{m}, got array of shape {arr.shape}"
        )
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class BlockSpec:
    """One period of blocks defining a q-periodic block Jacobi operator.

    Attributes
    ----------
    m : block dimension (positive)
    q : period (positive)
    a : (q, m, m) off-diagonal blocks, all invertible
    b : (q, m, m) Hermitian diagonal blocks
    """

    m: int
    q: int
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        if not (isinstance(self.m, numbers.Integral) and self.m >= 1):
            raise DimensionMismatch(f"block dimension m must be a positive integer, got {self.m!r}")
        if not (isinstance(self.q, numbers.Integral) and self.q >= 1):
            raise DimensionMismatch(f"period q must be a positive integer, got {self.q!r}")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "q", int(self.q))
        object.__setattr__(self, "a", _block_array(self.a, self.m, self.q, "a"))
        object.__setattr__(self, "b", _block_array(self.b, self.m, self.q, "b"))

    def validate(self):
        """Check the invertibility and Hermiticity invariants."""
        for j in range(self.q):
            if abs(np.linalg.det(self.a[j])) <= DET_TOL:
                raise SingularOffDiagonal(
                    f"off-diagonal block {j} has |det| = {abs(np.linalg.det(self.a[j])):.3e} <= {DET_TOL}"
                )
            dev = np.max(np.abs(self.b[j] - self.b[j].conj().T))
            if dev >= HERMITICITY_TOL:
                raise NonHermitianDiagonal(
                    f"diagonal block {j} deviates from Hermitian by {dev:.3e}"
                )
        return self

    # JSON schema: {"m": int, "q": int, "a": [block...], "b": [block...]},
    # block = row-major flat list of m*m [re, im] pairs.
    def to_json_dict(self):
        def encode(blocks):
            out = []
            for blk in blocks:
                flat = blk.reshape(-1)
                out.append([[float(z.real), float(z.imag)] for z in flat])
            return out

        return {"m": self.m, "q": self.q, "a": encode(self.a), "b": encode(self.b)}

    @classmethod
    def from_json_dict(cls, data):
        try:
            m = int(data["m"])
            q = int(data["q"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DimensionMismatch(f"spec JSON must carry integer m and q: {exc}") from exc

        def decode(entries, name):
            if not isinstance(entries, list) or len(entries) != q:
                raise DimensionMismatch(f"{name}: expected a list of {q} blocks")
            blocks = np.empty((q, m, m), dtype=complex)
            for j, blk in enumerate(entries):
                if not isinstance(blk, list) or len(blk) != m * m:
                    raise DimensionMismatch(
                        f"{name}[{j}]: expected {m * m} row-major [re, im] pairs"
                    )
                try:
                    flat = np.array([complex(re, im) for re, im in blk])
                except (TypeError, ValueError) as exc:
                    raise DimensionMismatch(f"{name}[{j}]: malformed [re, im] pair") from exc
                blocks[j] = flat.reshape(m, m)
            return blocks

        return cls(m=m, q=q, a=decode(data["a"], "a"), b=decode(data["b"], "b"))


def scalar_spec(potential, hopping=1.0):
    """Scalar (m=1) spec from a periodic potential sequence and constant hopping."""
    pot = np.atleast_1d(np.asarray(potential, dtype=float))
    q = len(pot)
    a = np.full((q, 1, 1), complex(hopping))
    b = pot.reshape(q, 1, 1).astype(complex)
    return BlockSpec(m=1, q=q, a=a, b=b)


# ---------------------------------------------------------------------------
# Wave packets
# ---------------------------------------------------------------------------


class WavePacket:
    """Finitely supported vector in l^2(Z)^m.

    Stores a contiguous run of block coefficients starting at block site
    `base`; everything outside is zero.
    """

    __slots__ = ("base", "coeffs")

    def __init__(self, base, coeffs):
        coeffs = np.atleast_2d(np.asarray(coeffs, dtype=complex))
        self.base = int(base)
        self.coeffs = coeffs

    @property
    def m(self):
        return self.coeffs.shape[1]

    @property
    def sites(self):
        return np.arange(self.base, self.base + self.coeffs.shape[0])

    def support(self):
        """Smallest and largest block site carrying any stored coefficient."""
        return self.base, self.base + self.coeffs.shape[0] - 1

    def support_radius(self):
        lo, hi = self.support()
        return max(abs(lo), abs(hi))

    def norm(self):
        return float(np.linalg.norm(self.coeffs))

    def block(self, site):
        """Coefficient vector at a block site (zero vector off support)."""
        i = site - self.base
        if 0 <= i < self.coeffs.shape[0]:
            return self.coeffs[i].copy()
        return np.zeros(self.m, dtype=complex)

    def scalar_coefficient(self, n):
        """Coefficient at scalar index n (block floor(n/m), component n mod m)."""
        return self.block(n // self.m)[n % self.m]

    @classmethod
    def delta_block(cls, site, component, m):
        c = np.zeros((1, m), dtype=complex)
        c[0, component] = 1.0
        return cls(site, c)

    @classmethod
    def delta_scalar(cls, n, m):
        """Scalar basis vector delta_n under the floor(n/m) block convention."""
        return cls.delta_block(n // m, n % m, m)

    @classmethod
    def zero(cls, m):
        return cls(0, np.zeros((1, m), dtype=complex))

    def trimmed(self, tol=0.0):
        """Drop zero-margin blocks (and blocks with norm <= tol)."""
        norms = np.linalg.norm(self.coeffs, axis=1)
        keep = np.nonzero(norms > tol)[0]
        if len(keep) == 0:
            return WavePacket.zero(self.m)
        lo, hi = keep[0], keep[-1]
        return WavePacket(self.base + lo, self.coeffs[lo : hi + 1].copy())

    def _aligned(self, other):
        if self.m != other.m:
            raise DimensionMismatch("wave packets have different block dimensions")
        lo = min(self.base, other.base)
        hi = max(self.base + len(self.coeffs), other.base + len(other.coeffs))
        out_a = np.zeros((hi - lo, self.m), dtype=complex)
        out_b = np.zeros_like(out_a)
        out_a[self.base - lo : self.base - lo + len(self.coeffs)] = self.coeffs
        out_b[other.base - lo : other.base - lo + len(other.coeffs)] = other.coeffs
        return lo, out_a, out_b

    def __add__(self, other):
        lo, x, y = self._aligned(other)
        return WavePacket(lo, x + y)

    def __sub__(self, other):
        lo, x, y = self._aligned(other)
        return WavePacket(lo, x - y)

    def __mul__(self, scalar):
        return WavePacket(self.base, self.coeffs * scalar)

    __rmul__ = __mul__

    def inner(self, other):
        """<self, other> with the convention of linearity in the second slot."""
        _, x, y = self._aligned(other)
        return complex(np.sum(x.conj() * y))

    def position_applied(self):
        """Apply X: multiply the coefficient at block site n by n."""
        weights = self.sites.astype(float)[:, None]
        return WavePacket(self.base, self.coeffs * weights)


# ---------------------------------------------------------------------------
# The operator
# ---------------------------------------------------------------------------


class BlockJacobiOperator:
    """Validated handle for a q-periodic block Jacobi operator."""

    def __init__(self, spec: BlockSpec):
        spec.validate()
        self.spec = spec

    @property
    def m(self):
        return self.spec.m

    @property
    def q(self):
        return self.spec.q

    def block_a(self, n):
        """Off-diagonal block coupling site n to site n+1."""
        return self.spec.a[n % self.spec.q]

    def block_b(self, n):
        """Diagonal block at site n."""
        return self.spec.b[n % self.spec.q]

    @cached_property
    def norm_bound(self):
        """Triangle-inequality bound max ||b|| + 2 max ||a|| on the operator norm."""
        bmax = max(np.linalg.norm(blk, 2) for blk in self.spec.b)
        amax = max(np.linalg.norm(blk, 2) for blk in self.spec.a)
        return float(bmax + 2.0 * amax)

    @cached_property
    def is_real(self):
        return bool(
            np.all(self.spec.a.imag == 0.0) and np.all(self.spec.b.imag == 0.0)
        )

    def apply(self, u: WavePacket) -> WavePacket:
        """(J u)_n = a(n-1)^* u_{n-1} + b(n) u_n + a(n) u_{n+1}."""
        L = u.coeffs.shape[0]
        out = np.zeros((L + 2, self.m), dtype=complex)
        for i in range(L):
            n = u.base + i
            c = u.coeffs[i]
            out[i] += self.block_a(n - 1) @ c
            out[i + 1] += self.block_b(n) @ c
            out[i + 2] += self.block_a(n).conj().T @ c
        return WavePacket(u.base - 1, out).trimmed()

    def apply_current(self, u: WavePacket) -> WavePacket:
        """(A u)_n = -i a(n-1)^* u_{n-1} + i a(n) u_{n+1}."""
        L = u.coeffs.shape[0]
        out = np.zeros((L + 2, self.m), dtype=complex)
        for i in range(L):
            n = u.base + i
            c = u.coeffs[i]
            out[i] += 1j * self.block_a(n - 1) @ c
            out[i + 2] += -1j * self.block_a(n).conj().T @ c
        return WavePacket(u.base - 1, out).trimmed()

    def truncate(self, N) -> "TruncatedOperator":
        """Dense restriction to block sites [-N, N] with open boundaries."""
        return self.truncate_window(-int(N), int(N))

    def truncate_window(self, lo, hi) -> "TruncatedOperator":
        return TruncatedOperator(self, int(lo), int(hi))


def build_operator(spec: BlockSpec) -> BlockJacobiOperator:
    """Validate a BlockSpec and return the operator handle."""
    return BlockJacobiOperator(spec)


def apply(J: BlockJacobiOperator, u: WavePacket) -> WavePacket:
    return J.apply(u)


def apply_current(J: BlockJacobiOperator, u: WavePacket) -> WavePacket:
    return J.apply_current(u)


def truncate(J: BlockJacobiOperator, N) -> "TruncatedOperator":
    return J.truncate(N)


# ---------------------------------------------------------------------------
# Dense truncation
# ---------------------------------------------------------------------------


class TruncatedOperator:
    """Dense Hermitian restriction of the operator to a block-site window.

    The matrix is the open-boundary (zero-padded) restriction; its spectral
    decomposition is computed lazily on first use and cached. All state is
    immutable after construction, so instances are safe to share.
    """

    def __init__(self, operator: BlockJacobiOperator, lo: int, hi: int):
        if hi < lo:
            raise DimensionMismatch(f"empty window [{lo}, {hi}]")
        m = operator.m
        dim = (hi - lo + 1) * m
        if dim > MAX_DENSE_DIM:
            raise SizeLimitExceeded(
                f"window [{lo}, {hi}] needs a {dim}x{dim} dense matrix (limit {MAX_DENSE_DIM})"
            )
        self.operator = operator
        self.window = (lo, hi)
        self.m = m
        self.dim = dim
        mat = np.zeros((dim, dim), dtype=complex)
        for i, n in enumerate(range(lo, hi + 1)):
            sl = slice(i * m, (i + 1) * m)
            mat[sl, sl] = operator.block_b(n)
            if n < hi:
                sr = slice((i + 1) * m, (i + 2) * m)
                blk = operator.block_a(n)
                mat[sl, sr] = blk
                mat[sr, sl] = blk.conj().T
        mat.setflags(write=False)
        self.matrix = mat
        self.norm_bound = operator.norm_bound

    @property
    def block_sites(self):
        lo, hi = self.window
        return np.arange(lo, hi + 1)

    @cached_property
    def position_diagonal(self):
        """Block-site value attached to each scalar row."""
        return np.repeat(self.block_sites, self.m).astype(float)

    @cached_property
    def eigensystem(self):
        """(eigenvalues, eigenvectors) of the dense truncation."""
        if self.operator.is_real:
            w, u = np.linalg.eigh(self.matrix.real)
        else:
            w, u = np.linalg.eigh(self.matrix)
        w.setflags(write=False)
        u.setflags(write=False)
        return w, u

    @property
    def eigenvalues(self):
        return self.eigensystem[0]

    def embed(self, psi: WavePacket) -> np.ndarray:
        """Flatten a packet into the window's scalar coordinates."""
        lo, hi = self.window
        slo, shi = psi.support()
        if slo < lo or shi > hi:
            raise SupportOutsideWindow(
                f"packet support [{slo}, {shi}] not inside window [{lo}, {hi}]"
            )
        vec = np.zeros(self.dim, dtype=complex)
        i0 = (psi.base - lo) * self.m
        vec[i0 : i0 + psi.coeffs.size] = psi.coeffs.reshape(-1)
        return vec

    def extract(self, vec: np.ndarray, tol=0.0) -> WavePacket:
        lo, hi = self.window
        coeffs = np.asarray(vec, dtype=complex).reshape(hi - lo + 1, self.m)
        return WavePacket(lo, coeffs).trimmed(tol)

    def propagate(self, vec: np.ndarray, t: float) -> np.ndarray:
        """exp(-i t J_window) applied to a window vector via the cached spectrum."""
        w, u = self.eigensystem
        return u @ (np.exp(-1j * t * w) * (u.conj().T @ vec))
