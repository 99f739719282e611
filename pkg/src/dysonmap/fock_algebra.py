"""Truncated Fock-space operator algebra.

Dense complex matrices on an N-level truncation, with the primitives the
rest of the library is assembled from: ladder operators, displacement and
rotation operators, a scaling-and-squaring matrix exponential valid for
non-normal input, pivoted linear solves with condition reporting, and
truncation-quality measures.

Units: hbar = 1; everything dimensionless.

The truncated ladder algebra is exact except at the top level, where
[a, a†] = I fails by construction.  All algebraic identity checks in this
package therefore restrict to the bottom block that excludes a guard band
of `guard` levels (default 6); states are kept honest separately via
`tail_mass`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack, lu_factor, lu_solve

from .errors import (
    ExponentialRangeError,
    IllConditionedError,
    InvalidDimensionError,
    UndefinedNormError,
)

DEFAULT_GUARD = 6

# Pade order-13 numerator coefficients and the scaling threshold for
# scaling-and-squaring; standard values for double precision.
_PADE13_B = (
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
)
_THETA13 = 5.371920351148152
_MAX_SQUARINGS = 60


@dataclass(frozen=True, eq=False)
class FockOperator:
    """Dense operator on a dim-level truncated Fock space."""

    mat: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mat, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidDimensionError(f"operator matrix must be square, got shape {m.shape}")
        if m.shape[0] < 2:
            raise InvalidDimensionError(f"truncation dimension must be >= 2, got {m.shape[0]}")
        if not np.all(np.isfinite(m)):
            raise InvalidDimensionError("operator entries must be finite")
        object.__setattr__(self, "mat", m)

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    def dagger(self) -> "FockOperator":
        return FockOperator(self.mat.conj().T)

    def frobenius(self) -> float:
        return float(np.linalg.norm(self.mat))

    def low_block(self, guard: int = DEFAULT_GUARD) -> np.ndarray:
        """Restriction to the bottom (dim - guard) levels; see `low_block`."""
        return low_block(self.mat, guard)

    def __matmul__(self, other):
        if isinstance(other, FockOperator):
            return FockOperator(self.mat @ other.mat)
        if isinstance(other, StateVector):
            return StateVector(self.mat @ other.vec)
        return NotImplemented

    def __add__(self, other):
        if isinstance(other, FockOperator):
            return FockOperator(self.mat + other.mat)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, FockOperator):
            return FockOperator(self.mat - other.mat)
        return NotImplemented

    def __mul__(self, scalar):
        if isinstance(scalar, (int, float, complex)):
            return FockOperator(self.mat * scalar)
        return NotImplemented

    __rmul__ = __mul__

    def __repr__(self):
        return f"FockOperator(dim={self.dim})"


@dataclass(frozen=True, eq=False)
class StateVector:
    """State on a dim-level truncated Fock space."""

    vec: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vec, dtype=complex)
        if v.ndim != 1:
            raise InvalidDimensionError(f"state must be a vector, got shape {v.shape}")
        if v.size < 2:
            raise InvalidDimensionError(f"truncation dimension must be >= 2, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise InvalidDimensionError("state amplitudes must be finite")
        object.__setattr__(self, "vec", v)

    @property
    def dim(self) -> int:
        return self.vec.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.vec))

    def __repr__(self):
        return f"StateVector(dim={self.dim})"


def low_block(mat: np.ndarray, guard: int = DEFAULT_GUARD) -> np.ndarray:
    """Top-left (dim - guard) x (dim - guard) block of a matrix.

    Low Fock indices sit at the top-left corner; the discarded band is where
    the truncated commutator defect lives.  Identity residuals evaluated on
    the full matrix pick up an O(1) corner artifact regardless of grid
    quality, so every algebraic check routes through this restriction.
    """
    d = mat.shape[0]
    if not 0 <= guard < d:
        raise InvalidDimensionError(f"guard band {guard} incompatible with dim {d}")
    k = d - guard
    return mat[:k, :k]


def ladder_operators(dim: int) -> tuple[FockOperator, FockOperator]:
    """Annihilation and creation operators: a|n> = sqrt(n)|n-1>."""
    if dim < 2:
        raise InvalidDimensionError(f"truncation dimension must be >= 2, got {dim}")
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)).astype(complex), k=1)
    return FockOperator(a), FockOperator(a.conj().T)


def number_operator(dim: int) -> FockOperator:
    """a†a: diagonal 0..dim-1."""
    return FockOperator(np.diag(np.arange(dim, dtype=float).astype(complex)))


def identity(dim: int) -> FockOperator:
    return FockOperator(np.eye(dim, dtype=complex))


def basis_state(n: int, dim: int) -> StateVector:
    """Fock basis state |n>."""
    if not 0 <= n < dim:
        raise InvalidDimensionError(f"basis index {n} outside dim {dim}")
    v = np.zeros(dim, dtype=complex)
    v[n] = 1.0
    return StateVector(v)


def _expm(m: np.ndarray) -> np.ndarray:
    """Pade order-13 scaling-and-squaring exponential.

    Chosen over eigendecomposition because the maps this library
    exponentiates (displacements with complex amplitude, non-unitary Dyson
    factors) are non-normal; backward error is bounded by the standard
    theta_13 threshold independent of normality.
    """
    norm = np.linalg.norm(m, 1)
    if norm == 0.0:
        return np.eye(m.shape[0], dtype=complex)
    s = max(0, int(np.ceil(np.log2(norm / _THETA13))))
    if s > _MAX_SQUARINGS:
        raise ExponentialRangeError(
            f"matrix 1-norm {norm:.3e} needs {s} squarings (limit {_MAX_SQUARINGS})"
        )
    a = m / (2.0**s)
    b = _PADE13_B
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a2 @ a4
    eye = np.eye(a.shape[0], dtype=complex)
    u = a @ (
        a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
        + b[7] * a6
        + b[5] * a4
        + b[3] * a2
        + b[1] * eye
    )
    v = (
        a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
        + b[6] * a6
        + b[4] * a4
        + b[2] * a2
        + b[0] * eye
    )
    r = np.linalg.solve(v - u, v + u)
    for _ in range(s):
        r = r @ r
    return r


def matrix_exponential(m: FockOperator) -> FockOperator:
    """exp(M) for a dense, possibly non-normal operator."""
    return FockOperator(_expm(m.mat))


def displacement(theta: complex, dim: int) -> FockOperator:
    """exp(theta a† - theta* a); unitary up to truncation error."""
    if not np.isfinite(theta):
        raise InvalidDimensionError(f"displacement amplitude must be finite, got {theta}")
    a, ad = ladder_operators(dim)
    return FockOperator(_expm(theta * ad.mat - np.conj(theta) * a.mat))


def rotation(angle: float, dim: int) -> FockOperator:
    """Diagonal exp(-i 2 angle a†a).

    The factor 2 is deliberate: the Hermitian counterpart's level spacing is
    twice the oscillator frequency, so the accumulated frequency phase enters
    the rotation doubled.
    """
    if not np.isfinite(angle):
        raise InvalidDimensionError(f"rotation angle must be finite, got {angle}")
    n = np.arange(dim, dtype=float)
    return FockOperator(np.diag(np.exp(-2j * angle * n)))


def _rcond_1norm(lu: np.ndarray, anorm: float) -> float:
    """Reciprocal 1-norm condition estimate from an LU factorization."""
    rcond, info = lapack.zgecon(lu, anorm, norm="1")
    if info < 0:
        raise ValueError(f"internal condition estimate failed (info={info})")
    return float(rcond)


def invert_apply(
    m: FockOperator,
    x: FockOperator | StateVector,
    *,
    rcond_floor: float = 1e-12,
):
    """Apply M^{-1} to an operator or state via pivoted LU.

    Returns (result, rcond) where rcond is the reciprocal 1-norm condition
    estimate of M.  Raises IllConditionedError below `rcond_floor`; callers
    holding a time stamp re-raise with it attached.
    """
    if m.dim != x.dim:
        raise InvalidDimensionError(f"dimension mismatch: {m.dim} vs {x.dim}")
    anorm = float(np.linalg.norm(m.mat, 1))
    lu, piv = lu_factor(m.mat)
    rcond = _rcond_1norm(lu, anorm)
    if rcond < rcond_floor:
        raise IllConditionedError(
            f"reciprocal condition estimate {rcond:.3e} below floor {rcond_floor:.1e}",
            rcond=rcond,
        )
    if isinstance(x, FockOperator):
        return FockOperator(lu_solve((lu, piv), x.mat)), rcond
    return StateVector(lu_solve((lu, piv), x.vec)), rcond


def tail_mass(v: StateVector, guard: int) -> float:
    """Fraction of |amplitude|^2 in the top `guard` levels."""
    if not 0 < guard < v.dim:
        raise InvalidDimensionError(f"guard band {guard} incompatible with dim {v.dim}")
    total = float(np.sum(np.abs(v.vec) ** 2))
    if total == 0.0:
        raise UndefinedNormError("tail mass of the zero vector is undefined")
    return float(np.sum(np.abs(v.vec[v.dim - guard :]) ** 2)) / total
