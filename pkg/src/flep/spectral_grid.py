"""Uniform periodic grid on the box [-L/2, L/2)^d with quadrature, norms and moments.

Every field in flep lives on a Grid. Fields are immutable: operations return new
fields and never write into the sample array of their input.
"""

import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from constants import FLEP_MAGIC, FLEP_VERSION, HASH_TAG
from numpy.typing import NDArray
from scipy import fft
from utils import (
    DomainError,
    GridMismatchError,
    NoConcentrationError,
    NonFiniteFieldError,
    write_bytes_atomic,
)

NORMALIZED_TOL = 1e-12


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with n points per axis on a box of side L.

    Args:
        d --- dimension, 1 or 2.
        n --- points per axis, a power of two and at least 16.
        L --- box side length.
    """

    d: int
    n: int
    L: float

    def __post_init__(self) -> None:
        if self.d not in (1, 2):
            raise DomainError(f"dimension must be 1 or 2, got {self.d}")
        if self.n < 16 or self.n & (self.n - 1):
            raise DomainError(
                f"n must be a power of two and at least 16, got {self.n}"
            )
        if not self.L > 0:
            raise DomainError(f"box length must be positive, got {self.L}")

    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    @cached_property
    def axis(self) -> NDArray[np.float64]:
        """Coordinates of one axis, x_j = -L/2 + j*h."""
        return -self.L / 2 + np.arange(self.n) * self.h

    @cached_property
    def coordinates(self) -> tuple[NDArray[np.float64], ...]:
        """Coordinate arrays of all nodes (meshgrid, indexing "ij")."""
        return tuple(np.meshgrid(*([self.axis] * self.d), indexing="ij"))

    @cached_property
    def wavenumbers(self) -> tuple[NDArray[np.float64], ...]:
        """Wavenumber lattice (2 pi / L) Z^d of the real transform, broadcastable."""
        ks = []
        for ax in range(self.d):
            if ax == self.d - 1:
                k = 2 * np.pi * fft.rfftfreq(self.n, d=self.h)
            else:
                k = 2 * np.pi * fft.fftfreq(self.n, d=self.h)
            shape = [1] * self.d
            shape[ax] = k.size
            ks.append(k.reshape(shape))
        return tuple(ks)

    @cached_property
    def k_abs(self) -> NDArray[np.float64]:
        """|k| on the real-transform lattice."""
        k2 = sum(k**2 for k in self.wavenumbers)
        return np.sqrt(k2)

    def contains(self, point: Sequence[float]) -> bool:
        """Check if a point lies inside [-L/2, L/2)^d."""
        point = np.atleast_1d(np.asarray(point, dtype=float))
        if point.size != self.d:
            return False
        half = self.L / 2
        return bool(np.all(point >= -half) and np.all(point < half))

    def displacement(
        self, center: Sequence[float]
    ) -> tuple[NDArray[np.float64], ...]:
        """Minimal-image components of x - center for all nodes."""
        center = np.atleast_1d(np.asarray(center, dtype=float))
        out = []
        for x, c in zip(self.coordinates, center):
            dx = x - c
            dx = dx - self.L * np.round(dx / self.L)
            out.append(dx)
        return tuple(out)

    def radius(
        self, center: Sequence[float] | None = None
    ) -> NDArray[np.float64]:
        """Minimal-image distance |x - center| for all nodes."""
        if center is None:
            center = np.zeros(self.d)
        return np.sqrt(sum(dx**2 for dx in self.displacement(center)))

    def nearest_node(self, point: Sequence[float]) -> tuple[int, ...]:
        """Index of the grid node closest to a point (periodic)."""
        point = np.atleast_1d(np.asarray(point, dtype=float))
        idx = np.round((point + self.L / 2) / self.h).astype(int) % self.n
        return tuple(int(i) for i in idx)

    def node(self, index: Sequence[int]) -> NDArray[np.float64]:
        """Coordinates of the node with a given index."""
        return np.array([self.axis[i] for i in index])

    def refined(self) -> "Grid":
        """Same box with twice the points per axis."""
        return Grid(self.d, 2 * self.n, self.L)


@dataclass(frozen=True, eq=False)
class Field:
    """Real samples of a function on a Grid, row-major over the axes.

    Args:
        grid --- the grid the samples live on.
        values --- n^d real samples, any shape that reshapes to grid.shape.
        mass --- declared L2 mass when the field is tagged normalized.
    """

    grid: Grid
    values: NDArray[np.float64]
    mass: float | None = field(default=None)

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64, copy=True)
        values = values.reshape(self.grid.shape)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(
        cls, grid: Grid, func: Callable[..., NDArray[np.float64]]
    ) -> "Field":
        """Sample func(x) (d=1) or func(x, y) (d=2) on the grid nodes."""
        values = func(*grid.coordinates)
        return cls(grid, np.broadcast_to(values, grid.shape))

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "Field":
        return cls(grid, np.full(grid.shape, float(value)))

    @property
    def is_normalized(self) -> bool:
        return self.mass is not None

    def with_values(self, values: NDArray[np.float64]) -> "Field":
        """New untagged field on the same grid."""
        return Field(self.grid, values)

    def normalized(self, mass: float = 1.0) -> "Field":
        """Rescale to a prescribed L2 mass and tag the result."""
        current = lp_norm_p(self, 2.0)
        if current <= 0:
            raise DomainError("cannot normalize the zero field")
        return Field(self.grid, self.values * np.sqrt(mass / current), mass)

    def check_finite(self) -> "Field":
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteFieldError()
        return self

    def same_grid(self, other: "Field") -> None:
        if self.grid != other.grid:
            raise GridMismatchError(
                f"grid {self.grid} does not match grid {other.grid}"
            )

    def _operand(self, other: "Field | float") -> NDArray[np.float64] | float:
        if isinstance(other, Field):
            self.same_grid(other)
            return other.values
        return float(other)

    def __add__(self, other: "Field | float") -> "Field":
        return self.with_values(self.values + self._operand(other))

    def __sub__(self, other: "Field | float") -> "Field":
        return self.with_values(self.values - self._operand(other))

    def __mul__(self, other: "Field | float") -> "Field":
        return self.with_values(self.values * self._operand(other))

    __radd__ = __add__
    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return self.with_values(-self.values)

    def __abs__(self) -> "Field":
        return self.with_values(np.abs(self.values))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


def integrate(f: Field) -> float:
    """Rectangle rule h^d * sum(values), spectrally accurate for smooth periodic f."""
    f.check_finite()
    return float(f.grid.cell_volume * np.sum(f.values))


def lp_norm_p(f: Field, r: float) -> float:
    """Return the integral of |f|^r (not its r-th root)."""
    if r < 1:
        raise DomainError(f"exponent r must be >= 1, got {r}")
    f.check_finite()
    return float(f.grid.cell_volume * np.sum(np.abs(f.values) ** r))


def moment(
    f: Field, center: Sequence[float], r: float, pow: float = 2.0
) -> float:
    """Weighted moment of |x - center|^r |f|^pow with minimal-image distance."""
    if not f.grid.contains(center):
        raise DomainError(f"center {center} lies outside the box")
    if r < 0:
        raise DomainError(f"moment order must be >= 0, got {r}")
    if r == 0:
        return lp_norm_p(f, pow)
    if pow < 1:
        raise DomainError(f"power must be >= 1, got {pow}")
    f.check_finite()
    weight = f.grid.radius(center) ** r
    return float(
        f.grid.cell_volume * np.sum(weight * np.abs(f.values) ** pow)
    )


def inner(f: Field, g: Field) -> float:
    """L2 inner product of two fields on the same grid."""
    f.same_grid(g)
    return integrate(f * g)


def l2_norm(f: Field) -> float:
    return float(np.sqrt(lp_norm_p(f, 2.0)))


def fourier_shift(f: Field, shift: Sequence[float]) -> Field:
    """Exact periodic translation x -> f(x - shift) of a band-limited field."""
    shift = np.atleast_1d(np.asarray(shift, dtype=float))
    f_hat = fft.rfftn(f.values)
    phase = sum(k * a for k, a in zip(f.grid.wavenumbers, shift))
    values = fft.irfftn(f_hat * np.exp(-1j * phase), s=f.grid.shape)
    return f.with_values(values)


def _interpolation_matrix(grid: Grid, points: NDArray[np.float64]) -> NDArray:
    """Matrix evaluating the trigonometric interpolant of one axis at points."""
    k = 2 * np.pi * fft.fftfreq(grid.n, d=grid.h)
    matrix = np.exp(1j * np.outer(points + grid.L / 2, k))
    # the Nyquist mode contributes its real (cosine) part only
    nyquist = grid.n // 2
    matrix[:, nyquist] = np.cos(k[nyquist] * (points + grid.L / 2))
    return matrix / grid.n


def resample(
    f: Field,
    points: Sequence[NDArray[np.float64]],
    target: Grid | None = None,
    fill: float | None = None,
) -> Field | NDArray[np.float64]:
    """Evaluate the trigonometric interpolant of f on a tensor product of points.

    Args:
        f --- field to interpolate.
        points --- one coordinate array per axis.
        target --- if given, the result is returned as a field on this grid
            (the point arrays must then have target.n entries each).
        fill --- value used where a point lies outside the box of f. None wraps
            the point periodically.

    Returns:
        The interpolated samples, as a Field on target or a bare array.
    """
    f.check_finite()
    points = [np.asarray(p, dtype=float) for p in points]
    if len(points) != f.grid.d:
        raise DomainError("need one point array per axis")
    f_hat = fft.fftn(f.values)
    result = f_hat
    for ax, p in enumerate(points):
        matrix = _interpolation_matrix(f.grid, p)
        result = np.moveaxis(
            np.tensordot(matrix, result, axes=([1], [ax])), 0, ax
        )
    values = np.real(result)

    if fill is not None:
        outside = np.zeros(values.shape, dtype=bool)
        for ax, p in enumerate(points):
            mask = (p < -f.grid.L / 2) | (p >= f.grid.L / 2)
            shape = [1] * f.grid.d
            shape[ax] = p.size
            outside = outside | mask.reshape(shape)
        values = np.where(outside, fill, values)

    if target is not None:
        return Field(target, values)
    return values


def dilate(
    f: Field,
    scale: float,
    center: Sequence[float] | None = None,
    source_center: Sequence[float] | None = None,
    target: Grid | None = None,
    fill: float | None = 0.0,
) -> Field:
    """Sample g(x) = f(source_center + scale * (x - center)) on a grid.

    Args:
        f --- field to dilate.
        scale --- factor applied to the displacement from center.
        center --- point of the target grid that maps onto source_center.
        source_center --- point of f's box that is the image of center.
        target --- grid of the result, defaults to f.grid.
        fill --- value outside f's box, None for periodic wrap.
    """
    target = target or f.grid
    center = np.zeros(target.d) if center is None else np.asarray(center)
    if source_center is None:
        source_center = np.zeros(f.grid.d)
    source_center = np.asarray(source_center, dtype=float)
    points = []
    for ax in range(target.d):
        offset = target.axis - center[ax]
        if fill is None:
            offset = offset - target.L * np.round(offset / target.L)
        points.append(source_center[ax] + scale * offset)
    return resample(f, points, target=target, fill=fill)


def interpolated_peak(f: Field, tie_tol: float = 1e-12) -> NDArray[np.float64]:
    """Sub-grid location of the maximum of |f| by a 3-point parabola per axis.

    Ties (within tie_tol of the maximum) go to the lexicographically smallest
    grid index.
    """
    f.check_finite()
    values = np.abs(f.values)
    top = float(np.max(values))
    if top - float(np.mean(values)) <= 1e-12 * max(1.0, top):
        raise NoConcentrationError()
    candidates = np.argwhere(values >= top - tie_tol * top)
    index = tuple(int(i) for i in candidates[0])

    grid = f.grid
    peak = grid.node(index)
    for ax in range(grid.d):
        lower = list(index)
        upper = list(index)
        lower[ax] = (index[ax] - 1) % grid.n
        upper[ax] = (index[ax] + 1) % grid.n
        fm, f0, fp = values[tuple(lower)], values[index], values[tuple(upper)]
        curvature = fm - 2 * f0 + fp
        if curvature < 0:
            peak[ax] += 0.5 * grid.h * (fm - fp) / curvature
    return (peak + grid.L / 2) % grid.L - grid.L / 2


def symmetrize(f: Field) -> Field:
    """Project onto fields even in every axis (and symmetric under x <-> y)."""
    u = f.values
    for ax in range(f.grid.d):
        u = 0.5 * (u + np.roll(np.flip(u, axis=ax), 1, axis=ax))
    if f.grid.d == 2:
        u = 0.5 * (u + u.T)
    return f.with_values(u)


@dataclass(frozen=True)
class StoredField:
    """A field read back from a FLEP file."""

    field: Field
    s: float
    problem_hash: str | None


def encode_field(
    f: Field, s: float = 0.0, problem_hash: str | None = None
) -> bytes:
    """Serialize a field in the FLEP binary format.

    Layout: magic "FLEP", u32 version, u32 d, u32 n, f64 L, f64 s, then n^d
    little-endian f64 samples row-major, then an optional "HASH" trailer
    followed by 64 ascii hex characters.
    """
    f.check_finite()
    header = FLEP_MAGIC + struct.pack(
        "<IIIdd", FLEP_VERSION, f.grid.d, f.grid.n, f.grid.L, s
    )
    body = np.ascontiguousarray(f.values, dtype="<f8").tobytes(order="C")
    trailer = b""
    if problem_hash is not None:
        if len(problem_hash) != 64:
            raise DomainError("problem hash must be 64 hex characters")
        trailer = HASH_TAG + problem_hash.encode("ascii")
    return header + body + trailer


def decode_field(data: bytes) -> StoredField:
    """Parse FLEP bytes back into a field."""
    if data[:4] != FLEP_MAGIC:
        raise DomainError("not a FLEP file (bad magic)")
    version, d, n, L, s = struct.unpack_from("<IIIdd", data, 4)
    if version != FLEP_VERSION:
        raise DomainError(f"unsupported FLEP version {version}")
    grid = Grid(d, n, L)
    offset = 4 + struct.calcsize("<IIIdd")
    count = n**d
    end = offset + 8 * count
    if len(data) < end:
        raise DomainError("truncated FLEP file")
    values = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
    problem_hash = None
    trailer = data[end:]
    if trailer[:4] == HASH_TAG and len(trailer) >= 68:
        problem_hash = trailer[4:68].decode("ascii")
    stored = Field(grid, values.reshape(grid.shape)).check_finite()
    return StoredField(stored, float(s), problem_hash)


def write_field(
    path: str | Path,
    f: Field,
    s: float = 0.0,
    problem_hash: str | None = None,
) -> None:
    write_bytes_atomic(path, encode_field(f, s, problem_hash))


def read_field(path: str | Path) -> StoredField:
    return decode_field(Path(path).read_bytes())
