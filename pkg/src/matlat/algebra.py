"""Exact Mat(2,C) algebra: Pauli basis, projectors, conjugations, memberships.

All operations are pure functions on immutable values and accept batched
input: any array of shape (..., 2, 2) is processed sitewise.  Scalar results
(trace coefficients, membership flags) drop the trailing matrix axes.

Conventions fixed here and used everywhere else:

- ``SIGMA[mu]`` is (e, sigma^1, sigma^2, sigma^3); ``SIGMA_TILDE[mu]`` is its
  entrywise tilde, i.e. (e, -sigma^1, -sigma^2, -sigma^3).
- tilde(A) = (tr A)e - A, star(A) = tilde(A)^dagger,
  hat(A) = (det A/|det A|) star(A) for nonsingular A.
- pi_plus(A) = (tr A / 2) e, pi_minus(A) = A - pi_plus(A).
"""

from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

from . import kernels as K
from .errors import (
    DegenerateLambdaError,
    NoRealBranchError,
    NotAntiHermitianError,
    NotInAlgebraError,
    NotUnitaryError,
    SingularMatrixError,
)

DEFAULT_TOL = 1e-10

Sign = Union[int, str]


def _basis():
    e = np.eye(2, dtype=np.complex128)
    s1 = np.array([[0, 1], [1, 0]], dtype=np.complex128)
    s2 = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
    s3 = np.array([[1, 0], [0, -1]], dtype=np.complex128)
    for m in (e, s1, s2, s3):
        m.setflags(write=False)
    return e, s1, s2, s3


E, SIGMA1, SIGMA2, SIGMA3 = _basis()
SIGMA = np.stack([E, SIGMA1, SIGMA2, SIGMA3])
SIGMA_TILDE = np.stack([E, -SIGMA1, -SIGMA2, -SIGMA3])
SIGMA.setflags(write=False)
SIGMA_TILDE.setflags(write=False)

_CONJUGATIONS = ("dagger", "tilde", "star", "hat")
_MEMBERSHIP_SETS = ("u2", "su2", "u1_center", "U2", "SU2")


class PauliCoeffs(NamedTuple):
    """Coefficients in A = a0 e + a1 sigma^1 + a2 sigma^2 + a3 sigma^3."""

    a0: complex
    a1: complex
    a2: complex
    a3: complex


def _sign_value(sign: Sign) -> int:
    if sign in (1, +1, "+", "plus"):
        return 1
    if sign in (-1, "-", "minus"):
        return -1
    raise ValueError(f"sign must be +1/-1 or '+'/'-', got {sign!r}")


def _asmat(A) -> np.ndarray:
    A = np.asarray(A, dtype=np.complex128)
    if A.shape[-2:] != (2, 2):
        raise ValueError(f"expected trailing shape (2, 2), got {A.shape}")
    return A


def _site_list(mask: np.ndarray, limit: int = 8):
    idx = np.argwhere(mask)
    sites = [tuple(int(v) for v in row) for row in idx[:limit]]
    more = "" if len(idx) <= limit else f" (+{len(idx) - limit} more)"
    return sites, more


def pauli_decompose(A) -> PauliCoeffs:
    """Coefficients of A in the Pauli basis; a_k = tr(sigma^k A)/2."""
    A = _asmat(A)
    a11, a12 = A[..., 0, 0], A[..., 0, 1]
    a21, a22 = A[..., 1, 0], A[..., 1, 1]
    return PauliCoeffs(
        a0=(a11 + a22) / 2,
        a1=(a12 + a21) / 2,
        a2=(a12 - a21) * (1j / 2),
        a3=(a11 - a22) / 2,
    )


def pauli_compose(c) -> np.ndarray:
    """Rebuild the matrix a0 e + a1 sigma^1 + a2 sigma^2 + a3 sigma^3."""
    a0, a1, a2, a3 = (np.asarray(v, dtype=np.complex128) for v in c)
    shape = np.broadcast_shapes(a0.shape, a1.shape, a2.shape, a3.shape)
    out = np.empty(shape + (2, 2), dtype=np.complex128)
    out[..., 0, 0] = a0 + a3
    out[..., 0, 1] = a1 - 1j * a2
    out[..., 1, 0] = a1 + 1j * a2
    out[..., 1, 1] = a0 - a3
    return out


def proj(A, sign: Sign) -> np.ndarray:
    """Projector onto the central part (+) or the traceless part (-)."""
    A = _asmat(A)
    half_tr = K.trace(A)[..., None, None] / 2
    central = half_tr * E
    if _sign_value(sign) > 0:
        return central
    return A - central


def frobenius(A) -> np.ndarray:
    """Frobenius norm per site, shape (...,)."""
    A = _asmat(A)
    return np.sqrt(np.sum(np.abs(A) ** 2, axis=(-2, -1)))


def conjugate(A, kind: str) -> np.ndarray:
    """Apply one of the four conjugations: dagger, tilde, star, hat.

    hat requires det A != 0; sites with |det A| < 1e-13 ||A||_F^2 are rejected
    with a SingularMatrixError naming them.
    """
    A = _asmat(A)
    if kind == "dagger":
        return K.dagger(A)
    if kind == "tilde":
        return K.tilde(A)
    if kind == "star":
        return K.star(A)
    if kind == "hat":
        d = K.det(A)
        floor = 1e-13 * np.sum(np.abs(A) ** 2, axis=(-2, -1))
        bad = np.abs(d) < np.maximum(floor, np.finfo(float).tiny)
        if np.any(bad):
            sites, more = _site_list(np.atleast_1d(bad))
            raise SingularMatrixError(
                f"hat undefined at {int(np.count_nonzero(bad))} site(s), "
                f"e.g. {sites}{more}"
            )
        return K.hat(A)
    raise ValueError(f"kind must be one of {_CONJUGATIONS}, got {kind!r}")


def membership(A, set_name: str, tol: float = DEFAULT_TOL):
    """Test sitewise membership in u2, su2, u1_center, U2 or SU2.

    Returns a bool for a single matrix, a boolean array for batched input.
    Tolerance is absolute on matrix entries.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = _asmat(A)
    if set_name == "u2":
        dev = _entry_max(K.dagger(A) + A)
    elif set_name == "su2":
        dev = np.maximum(_entry_max(K.dagger(A) + A), np.abs(K.trace(A)))
    elif set_name == "u1_center":
        central = proj(A, "+")
        dev = np.maximum(_entry_max(A - central), np.abs(np.real(K.trace(A)) / 2))
    elif set_name == "U2":
        dev = _entry_max(K.mul(K.dagger(A), A) - E)
    elif set_name == "SU2":
        dev = np.maximum(
            _entry_max(K.mul(K.dagger(A), A) - E), np.abs(K.det(A) - 1.0)
        )
    else:
        raise ValueError(f"set_name must be one of {_MEMBERSHIP_SETS}, got {set_name!r}")
    ok = dev <= tol
    return bool(ok) if np.isscalar(ok) or ok.ndim == 0 else ok


def _entry_max(A) -> np.ndarray:
    return np.max(np.abs(A), axis=(-2, -1))


def exp_anti_hermitian(X) -> np.ndarray:
    """Closed-form exponential of X in u(2).

    With X = i(c0 e + c.sigma), c real: exp X = e^{i c0}(cos|c| e
    + i sin|c|/|c| c.sigma).  Validates anti-Hermiticity.
    """
    X = _asmat(X)
    if not np.all(membership(X, "u2", tol=1e-9)):
        raise NotAntiHermitianError("exp_anti_hermitian expects X in u(2)")
    a0, a1, a2, a3 = pauli_decompose(X)
    c0, c1, c2, c3 = (np.imag(a) for a in (a0, a1, a2, a3))
    r = np.sqrt(c1**2 + c2**2 + c3**2)
    r_safe = np.where(r > 0, r, 1.0)
    sinc = np.where(r > 0, np.sin(r_safe) / r_safe, 1.0)
    phase = np.exp(1j * c0)
    return pauli_compose(
        (
            phase * np.cos(r),
            1j * phase * sinc * c1,
            1j * phase * sinc * c2,
            1j * phase * sinc * c3,
        )
    )


@dataclass(frozen=True)
class NMatrix:
    """An anti-Hermitian matrix with det = 1 and tr = i rho.

    ``value`` may be a single (2, 2) matrix or a batched (..., 2, 2) array;
    ``rho`` follows the same leading shape.  rho = 0 values (lambda = +-1) are
    accepted and merely flagged by ``rho_is_zero``.
    """

    value: np.ndarray
    rho: np.ndarray

    @property
    def rho_is_zero(self):
        return np.abs(self.rho) < 1e-12


def make_N(lam, V, tol: float = DEFAULT_TOL) -> NMatrix:
    """Build N = V^{-1} diag(i lam, -i/lam) V for real nonzero lam, unitary V.

    The inverse is taken as V^dagger after validating unitarity, so the result
    is anti-Hermitian to roundoff.  Batched over lam and V jointly.
    """
    lam = np.asarray(lam, dtype=np.float64)
    if np.any(np.abs(lam) < 1e-300):
        raise DegenerateLambdaError("lambda must be nonzero")
    V = _asmat(V)
    if not np.all(membership(V, "U2", tol=tol)):
        raise NotUnitaryError("V must be unitary within tolerance")
    diag = np.zeros(lam.shape + (2, 2), dtype=np.complex128)
    diag[..., 0, 0] = 1j * lam
    diag[..., 1, 1] = -1j / lam
    value = K.mul(K.dagger(V), K.mul(diag, V))
    rho = lam - 1.0 / lam
    return NMatrix(value=value, rho=rho)


class NCheck(NamedTuple):
    ok: bool
    rho: float


def check_N(A, tol: float = DEFAULT_TOL) -> NCheck:
    """Validate the N-matrix conditions: A in u(2) and det A = 1.

    rho is reported as Im(tr A) regardless of ok.  Batched input yields array
    ok/rho.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = _asmat(A)
    in_u2 = membership(A, "u2", tol=tol)
    det_ok = np.abs(K.det(A) - 1.0) <= tol
    ok = np.logical_and(in_u2, det_ok)
    rho = np.imag(K.trace(A))
    if np.ndim(ok) == 0:
        return NCheck(ok=bool(ok), rho=float(rho))
    return NCheck(ok=ok, rho=rho)


def n_plus_from_minus(Nminus, branch: Sign, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Central part completing a traceless N- to det(N+ + N-) = 1.

    With N- = i n.sigma (n real), returns i n0 e where
    n0 = branch * sqrt(n.n - 1); requires n.n >= 1 everywhere.
    """
    Nminus = _asmat(Nminus)
    if not np.all(membership(Nminus, "su2", tol=max(tol, 1e-9))):
        raise NotInAlgebraError("n_plus_from_minus expects N- in su(2)")
    s = _sign_value(branch)
    nsq = np.real(K.det(Nminus))  # det(i n.sigma) = n.n for real n
    short = nsq < 1.0 - 1e-12
    if np.any(short):
        sites, more = _site_list(np.atleast_1d(short))
        raise NoRealBranchError(
            f"n1^2+n2^2+n3^2 < 1 at {int(np.count_nonzero(short))} site(s), "
            f"e.g. {sites}{more}"
        )
    n0 = s * np.sqrt(np.maximum(nsq - 1.0, 0.0))
    return 1j * n0[..., None, None] * E


def split_u2_potential(A, tol: float = DEFAULT_TOL):
    """Split A in u(2) as A = i a e + Adot with a real and Adot in su(2)."""
    A = _asmat(A)
    if not np.all(membership(A, "u2", tol=tol)):
        raise NotAntiHermitianError("split_u2_potential expects A in u(2)")
    a = np.imag(K.trace(A)) / 2
    Adot = A - 1j * a[..., None, None] * E
    if np.ndim(a) == 0:
        a = float(a)
    return a, Adot
