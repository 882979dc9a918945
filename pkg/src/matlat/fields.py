"""Lattices, matrix-valued fields, finite differences, covariant derivatives.

Geometry: a periodic box in 1+1 or 1+3 dimensions, axis 0 = time, metric
diag(1, -1[, -1, -1]).  All derivatives are second-order central differences
with periodic wrap; ``np.roll(f, -1, axis)`` reads f(x + h).

Field values are complex128 arrays of shape (*lattice.shape, 2, 2); one 2x2
block per site, site-major when flattened in C order.
"""

import csv
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import algebra as alg
from . import kernels as K
from .errors import LatticeMismatchError, NotInAlgebraError

MIN_EXTENT = 8


@dataclass(frozen=True)
class Lattice:
    """A periodic box: per-axis extents and spacings.

    Spacetime boxes are 1+1 or 1+3 dimensional with axis 0 = time; purely
    spatial slices (dim 1 or 3, used by the time evolution) have no time
    axis and no use for metric_diag.  Extents are at least 8 so the central
    stencil never self-overlaps twice.
    """

    shape: tuple
    spacing: tuple

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        spacing = tuple(float(h) for h in self.spacing)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "spacing", spacing)
        if not 1 <= len(shape) <= 4:
            raise ValueError(f"lattice must have 1 to 4 axes, got shape {shape}")
        if len(spacing) != len(shape):
            raise ValueError("spacing must list one value per axis")
        if any(n < MIN_EXTENT for n in shape):
            raise ValueError(f"extents must be >= {MIN_EXTENT}, got {shape}")
        if any(h <= 0 for h in spacing):
            raise ValueError("spacings must be positive")

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def lengths(self) -> tuple:
        return tuple(n * h for n, h in zip(self.shape, self.spacing))

    @property
    def metric_diag(self) -> np.ndarray:
        eta = -np.ones(self.dim)
        eta[0] = 1.0
        return eta

    @property
    def site_count(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def coords(self, axis: int) -> np.ndarray:
        return np.arange(self.shape[axis]) * self.spacing[axis]

    def grids(self):
        """Coordinate arrays broadcastable over the site grid, one per axis."""
        return np.meshgrid(*(self.coords(ax) for ax in range(self.dim)), indexing="ij")


def lattice_1p1(n: int, lengths=(2 * np.pi, 2 * np.pi), nt: Optional[int] = None) -> Lattice:
    """Square-ish 1+1 lattice with n spatial sites and matching resolution in time."""
    nt = n if nt is None else nt
    return Lattice(shape=(nt, n), spacing=(lengths[0] / nt, lengths[1] / n))


@dataclass(frozen=True)
class MatrixField:
    """One 2x2 complex matrix per lattice site, with a name tag.

    Treat instances as immutable; derived fields are new objects.
    """

    lattice: Lattice
    values: np.ndarray
    label: str = "field"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        object.__setattr__(self, "values", v)
        if v.shape != self.lattice.shape + (2, 2):
            raise ValueError(
                f"values shape {v.shape} does not match lattice {self.lattice.shape} + (2, 2)"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError(f"field {self.label!r} contains non-finite entries")

    def with_values(self, values, label: Optional[str] = None) -> "MatrixField":
        return MatrixField(self.lattice, values, self.label if label is None else label)

    def require_algebra(self, algebra_name: str, tol: float = 1e-10) -> "MatrixField":
        ok = alg.membership(self.values, algebra_name, tol=tol)
        if not np.all(ok):
            bad = int(np.count_nonzero(~np.atleast_1d(ok)))
            raise NotInAlgebraError(
                f"field {self.label!r}: {bad} site(s) outside {algebra_name}"
            )
        return self


def same_lattice(*objs):
    lat = objs[0].lattice
    for o in objs[1:]:
        if o.lattice != lat:
            raise LatticeMismatchError("operands live on different lattices")
    return lat


def central_diff(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Second-order periodic central difference along a site axis."""
    return (np.roll(values, -1, axis=axis) - np.roll(values, 1, axis=axis)) / (2.0 * h)


def partial(f: MatrixField, mu: int) -> MatrixField:
    """Discrete partial derivative along axis mu."""
    if not 0 <= mu < f.lattice.dim:
        raise ValueError(f"axis {mu} out of range for dim {f.lattice.dim}")
    vals = central_diff(f.values, mu, f.lattice.spacing[mu])
    return f.with_values(vals, label=f"d{mu}({f.label})")


@dataclass(frozen=True)
class GaugePotential:
    """Lie-algebra-valued potential: one matrix field per spacetime axis."""

    components: tuple
    algebra: str = "su2"

    def __post_init__(self):
        if self.algebra not in ("su2", "u2"):
            raise ValueError("algebra must be 'su2' or 'u2'")
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        lat = same_lattice(*comps)
        if len(comps) != lat.dim:
            raise ValueError("need one component per lattice axis")

    @property
    def lattice(self) -> Lattice:
        return self.components[0].lattice

    def component(self, mu: int) -> MatrixField:
        return self.components[mu]

    def validate(self, tol: float = 1e-10) -> "GaugePotential":
        for c in self.components:
            c.require_algebra(self.algebra, tol=tol)
        return self

    @classmethod
    def zero(cls, lattice: Lattice, algebra: str = "su2") -> "GaugePotential":
        z = np.zeros(lattice.shape + (2, 2), dtype=np.complex128)
        comps = tuple(MatrixField(lattice, z.copy(), f"A{mu}") for mu in range(lattice.dim))
        return cls(components=comps, algebra=algebra)

    @classmethod
    def from_values(cls, lattice: Lattice, values: Sequence[np.ndarray], algebra: str = "su2"):
        comps = tuple(
            MatrixField(lattice, v, f"A{mu}") for mu, v in enumerate(values)
        )
        return cls(components=comps, algebra=algebra)


def cov_adjoint(X: MatrixField, A: Optional[GaugePotential], mu: int) -> MatrixField:
    """Adjoint-representation covariant derivative d_mu X - [A_mu, X]."""
    if A is None:
        return partial(X, mu)
    same_lattice(X, A)
    vals = central_diff(X.values, mu, X.lattice.spacing[mu])
    vals -= K.comm(A.component(mu).values, X.values)
    return X.with_values(vals, label=f"D{mu}({X.label})")


def cov_spinor(S: MatrixField, A: Optional[GaugePotential], mu: int) -> MatrixField:
    """Spinor-representation covariant derivative d_mu S + S A_mu."""
    if A is None:
        return partial(S, mu)
    same_lattice(S, A)
    vals = central_diff(S.values, mu, S.lattice.spacing[mu])
    vals += K.mul(S.values, A.component(mu).values)
    return S.with_values(vals, label=f"D{mu}({S.label})")


@dataclass(frozen=True)
class FieldStrength:
    """Antisymmetric family F_{mu nu} = d_mu A_nu - d_nu A_mu - [A_mu, A_nu].

    Stores the upper triangle; indexing handles signs and the zero diagonal.
    """

    lattice: Lattice
    upper: dict
    algebra: str = "su2"

    def __getitem__(self, pair) -> np.ndarray:
        mu, nu = pair
        if mu == nu:
            return np.zeros(self.lattice.shape + (2, 2), dtype=np.complex128)
        if mu < nu:
            return self.upper[(mu, nu)]
        return -self.upper[(nu, mu)]

    @property
    def pairs(self):
        return sorted(self.upper)

    def map_values(self, fun) -> "FieldStrength":
        return FieldStrength(
            lattice=self.lattice,
            upper={p: fun(v) for p, v in self.upper.items()},
            algebra=self.algebra,
        )


def field_strength(A: GaugePotential) -> FieldStrength:
    lat = A.lattice
    upper = {}
    vals = [c.values for c in A.components]
    for mu in range(lat.dim):
        for nu in range(mu + 1, lat.dim):
            f = central_diff(vals[nu], mu, lat.spacing[mu])
            f -= central_diff(vals[mu], nu, lat.spacing[nu])
            f -= K.comm(vals[mu], vals[nu])
            upper[(mu, nu)] = f
    return FieldStrength(lattice=lat, upper=upper, algebra=A.algebra)


def max_norm(values: np.ndarray) -> float:
    """Max over sites of the Frobenius norm."""
    if values.size == 0:
        return 0.0
    return float(np.max(np.sqrt(np.sum(np.abs(values) ** 2, axis=(-2, -1)))))


def l2_norm(values: np.ndarray, lattice: Lattice) -> float:
    """Discrete L2 integral norm: sqrt(sum_sites ||.||_F^2 * cell volume)."""
    return float(np.sqrt(np.sum(np.abs(values) ** 2) * lattice.cell_volume))


# --- band-limited random fields ---------------------------------------------


def _mode_box(dim: int, cutoff: int) -> np.ndarray:
    ranges = [np.arange(-cutoff, cutoff + 1)] * dim
    grid = np.meshgrid(*ranges, indexing="ij")
    return np.stack([g.ravel() for g in grid], axis=1)  # (n_modes, dim)


def _mode_phases(modes: np.ndarray, shape, lengths):
    """exp(i k_m . x) on the grid for every mode, evaluated axis-by-axis."""
    dim = len(shape)
    out = []
    for m in modes:
        phase = np.ones(shape, dtype=np.complex128)
        for ax in range(dim):
            x = np.arange(shape[ax]) * (lengths[ax] / shape[ax])
            axis_phase = np.exp(2j * np.pi * m[ax] * x / lengths[ax])
            shape_bc = [1] * dim
            shape_bc[ax] = shape[ax]
            phase = phase * axis_phase.reshape(shape_bc)
        out.append(phase)
    return out


def band_limited_scalars(
    shape,
    lengths,
    seed: int,
    channels: int,
    cutoff: int = 2,
    amp: float = 1.0,
    real: bool = True,
):
    """Deterministic band-limited periodic scalar fields.

    The Fourier coefficients depend on (seed, channels, cutoff) only, so the
    same seed sampled at two resolutions of the same box yields samples of one
    continuum function.  Coefficients decay like amp/(1 + |m|^2).
    """
    dim = len(shape)
    if cutoff < 0:
        raise ValueError("cutoff must be >= 0")
    if any(cutoff >= n / 2 for n in shape):
        raise ValueError(f"cutoff {cutoff} must be < extent/2 for shape {shape}")
    rng = np.random.default_rng(seed)
    modes = _mode_box(dim, cutoff)
    weights = amp / (1.0 + np.sum(modes.astype(float) ** 2, axis=1))
    coeff = rng.normal(size=(channels, len(modes))) + 1j * rng.normal(
        size=(channels, len(modes))
    )
    coeff *= weights
    phases = _mode_phases(modes, shape, lengths)
    fields = []
    for ch in range(channels):
        acc = np.zeros(shape, dtype=np.complex128)
        for c, ph in zip(coeff[ch], phases):
            acc += c * ph
        fields.append(np.real(acc) if real else acc)
    return fields


def smooth_random_values(
    shape,
    lengths,
    seed: int,
    algebra: Optional[str] = None,
    cutoff: int = 2,
    amp: float = 1.0,
) -> np.ndarray:
    """Band-limited random (..., 2, 2) values; algebra in {None, 'su2', 'u2'}.

    su2 / u2 produce pointwise Lie-algebra members by construction; None gives
    a generic complex matrix field.
    """
    if algebra == "su2":
        f1, f2, f3 = band_limited_scalars(shape, lengths, seed, 3, cutoff, amp)
        zero = np.zeros(shape)
        return alg.pauli_compose((zero, 1j * f1, 1j * f2, 1j * f3))
    if algebra == "u2":
        f0, f1, f2, f3 = band_limited_scalars(shape, lengths, seed, 4, cutoff, amp)
        return alg.pauli_compose((1j * f0, 1j * f1, 1j * f2, 1j * f3))
    if algebra is None:
        c0, c1, c2, c3 = band_limited_scalars(
            shape, lengths, seed, 4, cutoff, amp, real=False
        )
        return alg.pauli_compose((c0, c1, c2, c3))
    raise ValueError(f"algebra must be None, 'su2' or 'u2', got {algebra!r}")


def smooth_random_field(
    lattice: Lattice,
    seed: int,
    algebra: Optional[str] = None,
    cutoff: int = 2,
    amp: float = 1.0,
    label: str = "random",
) -> MatrixField:
    """Band-limited periodic random MatrixField, deterministic per seed."""
    vals = smooth_random_values(lattice.shape, lattice.lengths, seed, algebra, cutoff, amp)
    return MatrixField(lattice, vals, label)


def random_gauge_potential(
    lattice: Lattice, seed: int, algebra: str = "su2", cutoff: int = 2, amp: float = 1.0
) -> GaugePotential:
    """Random band-limited potential with one independent component per axis."""
    comps = []
    for mu in range(lattice.dim):
        comps.append(
            MatrixField(
                lattice,
                smooth_random_values(
                    lattice.shape, lattice.lengths, seed + 1000 * mu, algebra, cutoff, amp
                ),
                f"A{mu}",
            )
        )
    return GaugePotential(components=tuple(comps), algebra=algebra)


# --- CSV snapshots -----------------------------------------------------------


def _csv_header(dim: int):
    return (
        ["site_index"]
        + [f"coord{d}" for d in range(dim)]
        + ["label", "re11", "im11", "re12", "im12", "re21", "im21", "re22", "im22"]
    )


def save_snapshot(path, fields: Sequence[MatrixField]):
    """Write fields to CSV, one row per site per field, site-major order."""
    lat = same_lattice(*fields)
    coords = [g.ravel() for g in lat.grids()]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_csv_header(lat.dim))
        for f in fields:
            flat = f.values.reshape(-1, 2, 2)
            for idx in range(flat.shape[0]):
                m = flat[idx]
                row = [idx]
                row += [repr(float(c[idx])) for c in coords]
                row.append(f.label)
                for i in (0, 1):
                    for j in (0, 1):
                        row.append(repr(float(m[i, j].real)))
                        row.append(repr(float(m[i, j].imag)))
                writer.writerow(row)


def load_snapshot(path, lattice: Lattice) -> dict:
    """Read a snapshot written by save_snapshot; returns {label: MatrixField}."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != _csv_header(lattice.dim):
            raise ValueError(f"unexpected snapshot header {header}")
        data = {}
        for row in reader:
            idx = int(row[0])
            label = row[1 + lattice.dim]
            vals = [float(v) for v in row[2 + lattice.dim :]]
            m = np.array(
                [
                    [vals[0] + 1j * vals[1], vals[2] + 1j * vals[3]],
                    [vals[4] + 1j * vals[5], vals[6] + 1j * vals[7]],
                ]
            )
            data.setdefault(label, np.zeros(lattice.shape + (2, 2), dtype=np.complex128))
            data[label].reshape(-1, 2, 2)[idx] = m
    return {label: MatrixField(lattice, v, label) for label, v in data.items()}
