"""Residual evaluators for the conservative matrix field systems.

Each system couples some of: a left spinor field Phi, a right spinor field
Theta, a u(2) mass matrix field N with det N = 1, an su(2) scalar field
N_minus, and a gauge potential A.  This module evaluates every equation of a
chosen system as a pointwise residual field, assembles the matrix-valued
currents, and applies the closure formulas tying lambda1, lambda2, alpha to
epsilon, m, m0 and the spinor determinants.

All residuals use the central-difference operators from the fields module, so
an exact continuum solution sampled on the lattice leaves O(h^2) residuals.
"""

import enum
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import algebra as alg
from . import fields as fl
from . import kernels as K
from .errors import (
    ConstraintViolationError,
    MissingFieldError,
    SingularMatrixError,
)


class SystemKind(enum.Enum):
    LEFT_CONSERVATIVE = "left_conservative"
    RIGHT_CONSERVATIVE = "right_conservative"
    NEUTRINO2 = "neutrino2"
    ANTINEUTRINO2 = "antineutrino2"
    ELECTRON2 = "electron2"
    POSITRON2 = "positron2"
    YM_SCALAR = "ym_scalar"
    NEUTRINO3 = "neutrino3"
    ANTINEUTRINO3 = "antineutrino3"
    ELECTRON3 = "electron3"
    POSITRON3 = "positron3"

    def __str__(self):
        return self.value


def kind_from_name(name: str) -> SystemKind:
    try:
        return SystemKind(name)
    except ValueError:
        valid = ", ".join(k.value for k in SystemKind)
        raise ValueError(f"unknown system kind {name!r}; valid kinds: {valid}") from None


@dataclass(frozen=True)
class SpinorEq:
    """One spinor equation: which field, which sigma family, which lambda."""

    field_name: str  # "phi" or "theta"
    chirality: str  # "left" -> sigma-tilde contraction, "right" -> sigma
    lam_key: str  # one of "one", "lam1", "lam2", "lam1_conj", "lam2_conj"
    star_N: bool  # mass term uses star(N) instead of N


@dataclass(frozen=True)
class KindInfo:
    gauge_algebra: Optional[str]  # None, "su2" or "u2"
    spinors: tuple
    has_gauge: bool
    has_scalar: bool
    # spinor bilinear terms in the current: (field_name, sign, projection)
    # where projection is None (keep full u(2) value), "minus" or "plus"
    current_terms: tuple
    dual: str  # kind name reached by applying star to every field


def _info():
    phi1 = (SpinorEq("phi", "left", "one", False),)
    theta1s = (SpinorEq("theta", "right", "one", True),)
    pair1 = (
        SpinorEq("phi", "left", "one", False),
        SpinorEq("theta", "right", "one", False),
    )
    j_phi_full = (("phi", 1, None),)
    j_theta_full = (("theta", 1, None),)
    j_nu = (("phi", 1, "minus"),)
    j_antinu = (("theta", -1, "minus"),)
    j_electron = (("phi", 1, None), ("theta", 1, "plus"))
    j_positron = (("theta", -1, None), ("phi", -1, "plus"))
    return {
        SystemKind.LEFT_CONSERVATIVE: KindInfo(None, phi1, False, False, j_phi_full, "right_conservative"),
        SystemKind.RIGHT_CONSERVATIVE: KindInfo(None, theta1s, False, False, j_theta_full, "left_conservative"),
        SystemKind.NEUTRINO2: KindInfo("su2", phi1, True, False, j_nu, "antineutrino2"),
        SystemKind.ANTINEUTRINO2: KindInfo("su2", theta1s, True, False, j_antinu, "neutrino2"),
        SystemKind.ELECTRON2: KindInfo("u2", pair1, True, False, j_electron, "positron2"),
        SystemKind.POSITRON2: KindInfo("u2", pair1, True, False, j_positron, "electron2"),
        SystemKind.YM_SCALAR: KindInfo("su2", (), True, True, (), "ym_scalar"),
        SystemKind.NEUTRINO3: KindInfo(
            "su2", (SpinorEq("phi", "left", "lam1", False),), True, True, j_nu, "antineutrino3"
        ),
        SystemKind.ANTINEUTRINO3: KindInfo(
            "su2", (SpinorEq("theta", "right", "lam1_conj", False),), True, True, j_antinu, "neutrino3"
        ),
        SystemKind.ELECTRON3: KindInfo(
            "u2",
            (SpinorEq("phi", "left", "lam1", False), SpinorEq("theta", "right", "lam2", False)),
            True,
            True,
            j_electron,
            "positron3",
        ),
        SystemKind.POSITRON3: KindInfo(
            "u2",
            (SpinorEq("phi", "left", "lam2_conj", False), SpinorEq("theta", "right", "lam1_conj", False)),
            True,
            True,
            j_positron,
            "electron3",
        ),
    }


KIND_INFO = _info()

THIRD_APPROX = {
    SystemKind.NEUTRINO3,
    SystemKind.ANTINEUTRINO3,
    SystemKind.ELECTRON3,
    SystemKind.POSITRON3,
}


def required_fields(kind: SystemKind):
    info = KIND_INFO[kind]
    names = [eq.field_name for eq in info.spinors]
    if info.spinors:
        names.append("N")
    if info.has_gauge:
        names.append("A")
    if info.has_scalar:
        names.append("Nminus")
    return names


@dataclass(frozen=True)
class Params:
    """Masses, couplings and the per-equation unit factors lambda1, lambda2.

    signs = (branch of lambda1, branch of lambda2, branch of N_plus).
    lam1 and lam2 may be complex scalars or per-site arrays; either way their
    modulus must be 1.  lam_mode records whether they were supplied directly
    or produced by the closure formulas.
    """

    m: float = 1.0
    m0: float = 1.0
    alpha: float = 0.0
    beta: float = 0.0
    epsilon: float = 0.0
    lam1: object = None
    lam2: object = None
    signs: tuple = (1, 1, 1)
    lam_mode: str = "supplied"

    def __post_init__(self):
        if len(self.signs) != 3 or any(s not in (-1, 1) for s in self.signs):
            raise ValueError("signs must be three values from {-1, +1}")
        for name in ("lam1", "lam2"):
            lam = getattr(self, name)
            if lam is None:
                continue
            dev = np.max(np.abs(np.abs(np.asarray(lam)) - 1.0))
            if dev > 1e-9:
                raise ValueError(f"{name} must have unit modulus, off by {dev:.2e}")

    @property
    def rho1(self):
        return None if self.lam1 is None else np.real(self.lam1)

    @property
    def eps1(self):
        return None if self.lam1 is None else np.imag(self.lam1)

    @property
    def rho2(self):
        return None if self.lam2 is None else np.real(self.lam2)

    @property
    def eps2(self):
        return None if self.lam2 is None else np.imag(self.lam2)

    def to_report(self) -> dict:
        out = {
            "m": self.m,
            "m0": self.m0,
            "alpha": self.alpha,
            "beta": self.beta,
            "epsilon": self.epsilon,
            "signs": list(self.signs),
            "lam_mode": self.lam_mode,
        }
        for name in ("lam1", "lam2"):
            lam = getattr(self, name)
            if lam is None:
                out[name] = None
            elif np.isscalar(lam) or np.asarray(lam).ndim == 0:
                z = complex(lam)
                out[name] = [z.real, z.imag]
            else:
                arr = np.asarray(lam)
                out[name] = {
                    "mean": [float(np.mean(arr.real)), float(np.mean(arr.imag))],
                    "max_abs_dev_from_unit": float(np.max(np.abs(np.abs(arr) - 1.0))),
                }
        return out


def closure(
    epsilon: float,
    m: float,
    m0: float,
    det_phi_abs,
    det_theta_abs=None,
    signs=(1, 1, 1),
    beta: float = 0.0,
) -> Params:
    """Fix lambda1, lambda2 and alpha from epsilon, m, m0 and |det| data.

    lambda1 = (s1*sqrt(|detPhi|^2 - eps^2) + i eps) / |detPhi|
    lambda2 = (s2*sqrt(|detTheta|^2 - eps^2) - i eps) / |detTheta|
    alpha   = 2 m eps / m0^2

    Requires |detPhi| > |eps| and |detTheta| > |eps| strictly, everywhere.
    """
    if epsilon == 0.0:
        raise ValueError("closure requires epsilon != 0")
    if m == 0.0 or m0 == 0.0:
        raise ValueError("closure requires m != 0 and m0 != 0")
    if det_theta_abs is None:
        det_theta_abs = det_phi_abs

    def one_lam(det_abs, sign, im_sign, label):
        d = np.asarray(det_abs, dtype=float)
        bad = d <= abs(epsilon)
        if np.any(bad):
            sites = np.argwhere(np.atleast_1d(bad))[:8].tolist()
            raise ConstraintViolationError(
                f"closure needs |det {label}| > |epsilon|={abs(epsilon)}; "
                f"violated at {int(np.count_nonzero(bad))} site(s)",
                sites=sites,
            )
        lam = (sign * np.sqrt(d * d - epsilon * epsilon) + 1j * im_sign * epsilon) / d
        return complex(lam) if lam.ndim == 0 else lam

    lam1 = one_lam(det_phi_abs, signs[0], +1, "Phi")
    lam2 = one_lam(det_theta_abs, signs[1], -1, "Theta")
    alpha = 2.0 * m * epsilon / (m0 * m0)
    return Params(
        m=m,
        m0=m0,
        alpha=alpha,
        beta=beta,
        epsilon=epsilon,
        lam1=lam1,
        lam2=lam2,
        signs=tuple(signs),
        lam_mode="closure",
    )


@dataclass(frozen=True)
class FieldConfig:
    """Everything a system evaluation needs: fields plus parameters.

    Unused entries may be None; assemble() checks per kind.  J_ext is an
    optional externally supplied current for the scalar Yang-Mills system,
    one (..., 2, 2) array per spacetime axis.
    """

    params: Params
    phi: Optional[fl.MatrixField] = None
    theta: Optional[fl.MatrixField] = None
    N: Optional[fl.MatrixField] = None
    Nminus: Optional[fl.MatrixField] = None
    A: Optional[fl.GaugePotential] = None
    F: Optional[fl.FieldStrength] = None
    J_ext: Optional[tuple] = None

    @property
    def lattice(self) -> fl.Lattice:
        for f in (self.phi, self.theta, self.N, self.Nminus):
            if f is not None:
                return f.lattice
        if self.A is not None:
            return self.A.lattice
        raise MissingFieldError("configuration holds no fields")

    def require(self, kind: SystemKind) -> "FieldConfig":
        missing = [n for n in required_fields(kind) if getattr(self, n) is None]
        if missing:
            raise MissingFieldError(f"kind {kind} needs fields: {', '.join(missing)}")
        return self

    def with_(self, **kw) -> "FieldConfig":
        return replace(self, **kw)


def _as_lam_factor(lam, shape):
    """Broadcastable multiplier for the mass term: scalar or (*shape, 1, 1)."""
    if np.isscalar(lam) or np.asarray(lam).ndim == 0:
        return complex(lam)
    arr = np.asarray(lam)
    if arr.shape != shape:
        raise ValueError(f"per-site lambda shape {arr.shape} != lattice shape {shape}")
    return arr[..., None, None]


def resolve_lam(eq: SpinorEq, config: "FieldConfig") -> object:
    """The unit factor multiplying the mass term of one spinor equation.

    Supplied mode reads params.lam1 / params.lam2 (conjugated per kind);
    closure mode derives the factor from |det S| of that equation's own
    spinor, which reproduces the renaming maps between dual kinds.
    """
    p = config.params
    if eq.lam_key == "one":
        return 1.0 + 0.0j
    base_name = "lam1" if eq.lam_key.startswith("lam1") else "lam2"
    base = getattr(p, base_name)
    if base is None:
        if p.epsilon == 0.0:
            raise ValueError(
                f"{base_name} not supplied and epsilon=0: cannot apply closure"
            )
        S = getattr(config, eq.field_name)
        d = np.abs(K.det(S.values))
        sign = p.signs[0] if base_name == "lam1" else p.signs[1]
        im_sign = 1.0 if base_name == "lam1" else -1.0
        bad = d <= abs(p.epsilon)
        if np.any(bad):
            raise ConstraintViolationError(
                f"|det {eq.field_name}| must exceed |epsilon|={abs(p.epsilon)}",
                sites=np.argwhere(bad)[:8].tolist(),
            )
        base = (sign * np.sqrt(d * d - p.epsilon**2) + 1j * im_sign * p.epsilon) / d
    if eq.lam_key.endswith("_conj"):
        base = np.conj(base)
    return base


def _check_nonsingular(values: np.ndarray, label: str):
    d = np.abs(K.det(values))
    floor = 1e-13 * np.max(np.sum(np.abs(values) ** 2, axis=(-2, -1)))
    bad = d <= floor
    if np.any(bad):
        raise SingularMatrixError(
            f"{label} is singular at {int(np.count_nonzero(bad))} site(s): "
            f"{np.argwhere(bad)[:8].tolist()}"
        )


def residual_spinor(
    chirality: str,
    S: fl.MatrixField,
    A: Optional[fl.GaugePotential],
    N: fl.MatrixField,
    m: float,
    lam=1.0,
) -> fl.MatrixField:
    """sigma-contracted covariant derivative plus mass term.

    left:  sum_mu sigma_tilde^mu (d_mu S + S A_mu) + m lam hat(S) N
    right: sum_mu sigma^mu       (d_mu S + S A_mu) + m lam hat(S) N
    """
    if chirality not in ("left", "right"):
        raise ValueError("chirality must be 'left' or 'right'")
    sig = alg.SIGMA_TILDE if chirality == "left" else alg.SIGMA
    lat = S.lattice
    if A is not None:
        fl.same_lattice(S, A)
    fl.same_lattice(S, N)
    acc = np.zeros(lat.shape + (2, 2), dtype=np.complex128)
    for mu in range(lat.dim):
        acc += K.mul(sig[mu], fl.cov_spinor(S, A, mu).values)
    if m != 0.0:
        _check_nonsingular(S.values, S.label)
        factor = _as_lam_factor(lam, lat.shape)
        acc += m * factor * K.mul(K.hat(S.values), N.values)
    return fl.MatrixField(lat, acc, f"spinor_residual({S.label})")


def residual_scalar(
    Nminus: fl.MatrixField, A: Optional[fl.GaugePotential], m0: float
) -> fl.MatrixField:
    """Covariant wave operator with mass: D_mu (D^mu N-) + m0^2 N-."""
    Nminus.require_algebra("su2", tol=1e-8)
    lat = Nminus.lattice
    eta = lat.metric_diag
    acc = (m0 * m0) * Nminus.values.copy()
    for mu in range(lat.dim):
        inner = eta[mu] * fl.cov_adjoint(Nminus, A, mu).values
        inner_f = fl.MatrixField(lat, inner, "tmp")
        acc += fl.cov_adjoint(inner_f, A, mu).values
    return fl.MatrixField(lat, acc, f"scalar_residual({Nminus.label})")


@dataclass(frozen=True)
class CurrentSet:
    """Matrix current components with their algebra split.

    total[nu] is the upper-index current J^nu.  minus_part / plus_part are
    its traceless and central projections; scalar_part collects the alpha and
    beta terms sourced by N-; jdot_part is the beta commutator alone.
    """

    lattice: fl.Lattice
    total: tuple
    plus_part: tuple
    minus_part: tuple
    scalar_part: tuple
    jdot_part: tuple
    algebra: str

    def component(self, nu: int) -> np.ndarray:
        return self.total[nu]


def _cov_upper(vals: np.ndarray, A: Optional[fl.GaugePotential], lat: fl.Lattice, nu: int):
    """eta^{nu nu} (d_nu X - [A_nu, X]) for adjoint-type X."""
    out = fl.central_diff(vals, nu, lat.spacing[nu])
    if A is not None:
        out -= K.comm(A.component(nu).values, vals)
    return lat.metric_diag[nu] * out


def current(kind: SystemKind, config: FieldConfig, params: Optional[Params] = None) -> CurrentSet:
    """Assemble J^nu for the kind, split into algebra parts."""
    info = KIND_INFO[kind]
    p = config.params if params is None else params
    lat = config.lattice
    zeros = np.zeros(lat.shape + (2, 2), dtype=np.complex128)
    total, scalar_part, jdot_part = [], [], []
    for nu in range(lat.dim):
        acc = zeros.copy()
        for field_name, sign, projection in info.current_terms:
            S = getattr(config, field_name)
            if S is None:
                raise MissingFieldError(f"current for {kind} needs field {field_name}")
            sig = alg.SIGMA_TILDE if field_name == "phi" else alg.SIGMA
            bil = 1j * K.sandwich(S.values, sig[nu])
            if projection == "minus":
                bil = alg.proj(bil, "-")
            elif projection == "plus":
                bil = alg.proj(bil, "+")
            acc += sign * bil
        sc = zeros.copy()
        jd = zeros.copy()
        if info.has_scalar:
            if config.Nminus is None:
                raise MissingFieldError(f"current for {kind} needs field Nminus")
            nm = config.Nminus.values
            dn = _cov_upper(nm, config.A, lat, nu)
            sc = p.alpha * dn + p.beta * K.comm(nm, dn)
            jd = p.beta * K.comm(nm, dn)
            if kind is SystemKind.YM_SCALAR and config.J_ext is not None:
                sc = sc + np.asarray(config.J_ext[nu], dtype=np.complex128)
        total.append(acc + sc)
        scalar_part.append(sc)
        jdot_part.append(jd)
    plus = tuple(alg.proj(t, "+") for t in total)
    minus = tuple(alg.proj(t, "-") for t in total)
    algebra = info.gauge_algebra or "u2"
    return CurrentSet(
        lattice=lat,
        total=tuple(total),
        plus_part=plus,
        minus_part=minus,
        scalar_part=tuple(scalar_part),
        jdot_part=tuple(jdot_part),
        algebra=algebra,
    )


@dataclass(frozen=True)
class ResidualBundle:
    """Named residual fields for one system, plus constraint residual fields."""

    kind: Optional[SystemKind]
    lattice: fl.Lattice
    equations: dict  # name -> (..., 2, 2) residual values
    constraints: dict  # name -> real site array of pointwise violations
    params: Optional[Params] = None

    def max_norm(self, name: str) -> float:
        return fl.max_norm(self.equations[name])

    def l2_norm(self, name: str) -> float:
        return fl.l2_norm(self.equations[name], self.lattice)

    @property
    def worst(self) -> float:
        vals = [self.max_norm(n) for n in self.equations]
        vals += [float(np.max(np.abs(c))) for c in self.constraints.values()]
        return max(vals) if vals else 0.0

    def report(self) -> dict:
        return {
            "kind": self.kind.value if self.kind is not None else None,
            "equations": {
                name: {"max_norm": self.max_norm(name), "l2_norm": self.l2_norm(name)}
                for name in sorted(self.equations)
            },
            "constraints": {
                name: {"max_abs": float(np.max(np.abs(vals)))}
                for name, vals in sorted(self.constraints.items())
            },
            "parameters": self.params.to_report() if self.params else None,
        }


def residual_ym(
    A: fl.GaugePotential, F: Optional[fl.FieldStrength], J: Optional[CurrentSet]
) -> ResidualBundle:
    """Field-strength definition residuals and Yang-Mills residuals.

    fdef_{mu}{nu}: supplied F minus the curvature of A (zero when F came from
    field_strength on the same lattice).  ym_{nu}: sum_mu D_mu F^{mu nu} - J^nu.
    """
    lat = A.lattice
    eta = lat.metric_diag
    curvature = fl.field_strength(A)
    equations = {}
    Fuse = F if F is not None else curvature
    for mu, nu in curvature.pairs:
        equations[f"fdef_{mu}{nu}"] = Fuse[mu, nu] - curvature[mu, nu]
    for nu in range(lat.dim):
        acc = np.zeros(lat.shape + (2, 2), dtype=np.complex128)
        for mu in range(lat.dim):
            if mu == nu:
                continue
            fmn = Fuse[mu, nu]
            term = fl.central_diff(fmn, mu, lat.spacing[mu])
            term -= K.comm(A.component(mu).values, fmn)
            acc += eta[mu] * eta[nu] * term
        if J is not None:
            acc -= J.total[nu]
        equations[f"ym_{nu}"] = acc
    return ResidualBundle(kind=None, lattice=lat, equations=equations, constraints={})


def mass_matrix(config: FieldConfig, kind: SystemKind) -> Optional[fl.MatrixField]:
    """The N used in spinor mass terms: supplied, or N+ + N- for third-order kinds."""
    info = KIND_INFO[kind]
    if not info.spinors:
        return None
    if config.N is not None:
        return config.N
    if kind in THIRD_APPROX and config.Nminus is not None:
        nplus = alg.n_plus_from_minus(config.Nminus.values, branch=config.params.signs[2])
        return fl.MatrixField(config.lattice, nplus + config.Nminus.values, "N")
    raise MissingFieldError(f"kind {kind} needs N (or Nminus to derive it)")


def assemble(
    kind: SystemKind, config: FieldConfig, algebra_tol: float = 1e-8
) -> ResidualBundle:
    """Evaluate every equation of the kind on the configuration.

    algebra_tol bounds the gauge potential's distance from its Lie algebra;
    gauge-transformed potentials carry an O(h^2) defect from the discrete
    derivative of V, so covariance checking passes a relaxed bound here.
    """
    info = KIND_INFO[kind]
    p = config.params
    lat = config.lattice
    needed = [n for n in required_fields(kind) if n != "N"]
    missing = [n for n in needed if getattr(config, n) is None]
    if missing:
        raise MissingFieldError(f"kind {kind} needs fields: {', '.join(missing)}")

    equations = {}
    constraints = {}

    N = mass_matrix(config, kind)
    if N is not None:
        constraints["detN"] = np.abs(K.det(N.values) - 1.0)

    lam_seen = {}
    for eq in info.spinors:
        S = getattr(config, eq.field_name)
        lam = resolve_lam(eq, config)
        lam_seen[eq.lam_key] = lam
        Nmass = N.with_values(K.star(N.values)) if eq.star_N else N
        r = residual_spinor(eq.chirality, S, config.A, Nmass, p.m, lam)
        equations[eq.field_name] = r.values
        if eq.lam_key != "one":
            constraints[f"unit_{eq.lam_key}"] = np.broadcast_to(
                np.abs(np.abs(np.asarray(lam)) - 1.0), lat.shape
            ).copy()

    if info.has_scalar:
        equations["scalar"] = residual_scalar(config.Nminus, config.A, p.m0).values

    if info.has_gauge:
        for c in config.A.components:
            c.require_algebra(info.gauge_algebra, tol=algebra_tol)
        J = current(kind, config)
        ym = residual_ym(config.A, config.F, J)
        equations.update(ym.equations)

    return ResidualBundle(
        kind=kind, lattice=lat, equations=equations, constraints=constraints, params=p
    )


def star_config(config: FieldConfig, kind: Optional[SystemKind] = None) -> FieldConfig:
    """Apply the star conjugation to every field and swap the spinor roles.

    Maps a configuration of some kind onto one of its dual kind; parameters
    carry over unchanged.  When the kind (or its dual) writes star(N) inside
    its own mass term, N carries over unstarred: the conjugation is already
    part of the dual equation, and star(star(N)) would undo it.
    """
    star_N = True
    if kind is not None:
        info, dual_info = KIND_INFO[kind], KIND_INFO[dual_kind(kind)]
        internal = any(eq.star_N for eq in info.spinors + dual_info.spinors)
        star_N = not internal

    def smap(f: Optional[fl.MatrixField], label: str):
        if f is None:
            return None
        return fl.MatrixField(f.lattice, K.star(f.values), label)

    A = config.A
    if A is not None:
        comps = tuple(
            fl.MatrixField(A.lattice, K.star(c.values), c.label) for c in A.components
        )
        A = fl.GaugePotential(components=comps, algebra=A.algebra)
    F = config.F
    if F is not None:
        F = F.map_values(K.star)
    J = config.J_ext
    if J is not None:
        J = tuple(K.star(np.asarray(j)) for j in J)
    return FieldConfig(
        params=config.params,
        phi=smap(config.theta, "phi"),
        theta=smap(config.phi, "theta"),
        N=smap(config.N, "N") if star_N else config.N,
        Nminus=smap(config.Nminus, "Nminus"),
        A=A,
        F=F,
        J_ext=J,
    )


def dual_kind(kind: SystemKind) -> SystemKind:
    return SystemKind(KIND_INFO[kind].dual)


DUAL_EQUATION_NAMES = {"phi": "theta", "theta": "phi"}


def plane_wave_solution(
    lattice: fl.Lattice,
    m: float,
    k_mode: int = 2,
    amplitude: float = 1.0,
    chirality: str = "left",
):
    """Exact traveling-wave solution of the free conservative equation.

    Built for 1+1 lattices whose time extent is commensurate with the wave
    frequency (see plane_wave_lattice).  Returns (S, N, omega, k): S solves
    the free left (or right) equation with mass matrix N = i sigma1 and
    lambda = 1, up to the O(h^2) discretization error.
    """
    if lattice.dim != 2:
        raise ValueError("plane waves are built on 1+1 lattices")
    L_t, L_x = lattice.lengths
    k = 2 * np.pi * k_mode / L_x
    if k <= m:
        raise ValueError(f"need spatial wavenumber k={k:.3f} > m={m} for a real frequency")
    omega = np.sqrt(k * k - m * m)
    periods = omega * L_t / (2 * np.pi)
    if abs(periods - round(periods)) > 1e-9:
        raise ValueError(
            f"time extent {L_t:.6f} not commensurate with omega={omega:.6f}; "
            "use plane_wave_lattice"
        )
    a = amplitude
    b = omega * a / (k + m)
    t, x = lattice.grids()
    phase = np.exp(1j * (omega * t + k * x))[..., None, None]
    phi0 = a * alg.E + b * alg.SIGMA1
    phi_vals = phase * phi0
    Nvals = np.broadcast_to(1j * alg.SIGMA1, lattice.shape + (2, 2)).copy()
    if chirality == "right":
        phi_vals = K.star(phi_vals)
    S = fl.MatrixField(lattice, phi_vals, "phi" if chirality == "left" else "theta")
    N = fl.MatrixField(lattice, Nvals, "N")
    return S, N, omega, k


def plane_wave_lattice(
    n_x: int, m: float, k_mode: int = 2, n_t: Optional[int] = None, periods: int = 1
) -> fl.Lattice:
    """1+1 box of spatial length 2 pi whose time extent holds whole wave periods."""
    L_x = 2 * np.pi
    k = 2 * np.pi * k_mode / L_x
    if k <= m:
        raise ValueError("k_mode too small for this mass")
    omega = np.sqrt(k * k - m * m)
    L_t = 2 * np.pi * periods / omega
    n_t = n_x if n_t is None else n_t
    return fl.Lattice(shape=(n_t, n_x), spacing=(L_t / n_t, L_x / n_x))
