"""Uniform Cartesian grids, node-sampled fields, and second-order stencils.

Everything downstream (curvature, flow stepping, diagnostics) is built on
the discrete calculus in this module: a uniform node-centered grid, scalar
fields stored row-major by j then i (``data[j, i]`` sits at
``(x0 + i*h, y0 + j*h)``), and the classical second-order stencils

    laplacian : 5-point, (f_E + f_W + f_N + f_S - 4 f_C) / h^2
    gradient  : central differences, exact on affine and bilinear data
    hessian   : second differences, cross term averaged over 4 corners

Boundary handling comes in three flavors.  ``PERIODIC`` wraps (node counts
must be even, the preset convention).  ``LINEAR_EXTRAPOLATE`` mirrors ghost
nodes by odd reflection (ghost = 2*edge - inner), which zeroes the normal
second difference at the edge.  ``DIRICHLET_FROZEN`` pins the boundary ring
to stored values; derivative fields are then only defined on the interior,
so their output ring is set to 0 and consumers must evaluate sup/inf norms
with a window margin >= 1 (>= 2 for derivatives of derived fields).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class BCKind(enum.Enum):
    DIRICHLET_FROZEN = "dirichlet-frozen"
    PERIODIC = "periodic"
    LINEAR_EXTRAPOLATE = "linear-extrapolate"


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid: nx*ny nodes, spacing h, node (0,0) at (x0, y0)."""

    nx: int
    ny: int
    h: float
    x0: float = 0.0
    y0: float = 0.0

    def __post_init__(self):
        if self.nx < 8 or self.ny < 8:
            raise ValueError(f"grid needs nx, ny >= 8, got {self.nx}x{self.ny}")
        if not (self.h > 0.0 and np.isfinite(self.h)):
            raise ValueError(f"grid spacing must be positive, got {self.h}")

    @classmethod
    def centered(cls, n: int, half_width: float) -> "GridSpec":
        """n x n nodes covering [-L, L) with h = 2L/n.

        For even n the origin lands exactly on node (n/2, n/2); this is the
        convention every preset uses (and what PERIODIC requires).
        """
        h = 2.0 * half_width / n
        return cls(nx=n, ny=n, h=h, x0=-half_width, y0=-half_width)

    def x(self, i) -> float:
        return self.x0 + np.asarray(i) * self.h

    def y(self, j) -> float:
        return self.y0 + np.asarray(j) * self.h

    def meshgrid(self):
        """(X, Y) arrays of node coordinates, shape (ny, nx)."""
        xs = self.x0 + self.h * np.arange(self.nx)
        ys = self.y0 + self.h * np.arange(self.ny)
        return np.meshgrid(xs, ys, indexing="xy")

    def node_at(self, x: float, y: float, tol: float = 1e-9):
        """Indices (i, j) of the node at (x, y); error if none is there."""
        fi = (x - self.x0) / self.h
        fj = (y - self.y0) / self.h
        i, j = int(round(fi)), int(round(fj))
        if abs(fi - i) > tol or abs(fj - j) > tol:
            raise ValueError(f"({x}, {y}) is not a grid node")
        if not (0 <= i < self.nx and 0 <= j < self.ny):
            raise ValueError(f"({x}, {y}) lies outside the grid")
        return i, j

    @property
    def cell_area(self) -> float:
        return self.h * self.h


def _as_field_data(spec: GridSpec, data) -> np.ndarray:
    arr = np.array(data, dtype=float)
    if arr.shape != (spec.ny, spec.nx):
        raise ValueError(
            f"field data shape {arr.shape} does not match grid "
            f"({spec.ny}, {spec.nx})"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError("field contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ScalarField:
    """Immutable node-sampled scalar data on a GridSpec."""

    spec: GridSpec
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _as_field_data(self.spec, self.data))

    @classmethod
    def from_function(cls, spec: GridSpec, fn) -> "ScalarField":
        X, Y = spec.meshgrid()
        return cls(spec, fn(X, Y))

    @classmethod
    def constant(cls, spec: GridSpec, value: float) -> "ScalarField":
        return cls(spec, np.full((spec.ny, spec.nx), float(value)))

    def _check_compatible(self, other: "ScalarField"):
        if self.spec != other.spec:
            raise ValueError("fields live on different grids")

    def __add__(self, other):
        if isinstance(other, ScalarField):
            self._check_compatible(other)
            return ScalarField(self.spec, self.data + other.data)
        return ScalarField(self.spec, self.data + float(other))

    def __sub__(self, other):
        if isinstance(other, ScalarField):
            self._check_compatible(other)
            return ScalarField(self.spec, self.data - other.data)
        return ScalarField(self.spec, self.data - float(other))

    def __mul__(self, other):
        if isinstance(other, ScalarField):
            self._check_compatible(other)
            return ScalarField(self.spec, self.data * other.data)
        return ScalarField(self.spec, self.data * float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.spec, -self.data)

    def interior(self, margin: int) -> np.ndarray:
        """View of the nodes at least `margin` nodes from every edge."""
        if margin < 0:
            raise ValueError("margin must be >= 0")
        ny, nx = self.data.shape
        if 2 * margin >= nx or 2 * margin >= ny:
            raise ValueError(f"margin {margin} leaves an empty window")
        if margin == 0:
            return self.data
        return self.data[margin:-margin, margin:-margin]


@dataclass(frozen=True)
class VectorField:
    x: ScalarField
    y: ScalarField

    def __post_init__(self):
        if self.x.spec != self.y.spec:
            raise ValueError("vector components live on different grids")

    @property
    def spec(self) -> GridSpec:
        return self.x.spec


@dataclass(frozen=True)
class SymTensorField:
    """Symmetric 2-tensor; the xy component is stored once."""

    xx: ScalarField
    xy: ScalarField
    yy: ScalarField

    def __post_init__(self):
        if not (self.xx.spec == self.xy.spec == self.yy.spec):
            raise ValueError("tensor components live on different grids")

    @property
    def spec(self) -> GridSpec:
        return self.xx.spec


@dataclass(frozen=True)
class BoundaryCondition:
    """How stencils and the flow treat the outermost node ring.

    DIRICHLET_FROZEN carries the pinned ring values (bottom/top rows of
    length nx, left/right columns of length ny) so a stepper can assert or
    restore them.
    """

    kind: BCKind
    bottom: np.ndarray | None = None
    top: np.ndarray | None = None
    left: np.ndarray | None = None
    right: np.ndarray | None = None

    def __post_init__(self):
        if self.kind is BCKind.DIRICHLET_FROZEN:
            for name in ("bottom", "top", "left", "right"):
                edge = getattr(self, name)
                if edge is None:
                    raise ValueError("DIRICHLET_FROZEN needs all four edges")
                edge = np.array(edge, dtype=float)
                if not np.all(np.isfinite(edge)):
                    raise ValueError("frozen boundary values must be finite")
                edge.setflags(write=False)
                object.__setattr__(self, name, edge)
        else:
            if any(getattr(self, n) is not None
                   for n in ("bottom", "top", "left", "right")):
                raise ValueError(f"{self.kind} takes no frozen values")

    @classmethod
    def periodic(cls) -> "BoundaryCondition":
        return cls(BCKind.PERIODIC)

    @classmethod
    def linear_extrapolate(cls) -> "BoundaryCondition":
        return cls(BCKind.LINEAR_EXTRAPOLATE)

    @classmethod
    def dirichlet_frozen(cls, f: ScalarField) -> "BoundaryCondition":
        """Freeze the boundary ring of `f`."""
        a = f.data
        return cls(BCKind.DIRICHLET_FROZEN,
                   bottom=a[0, :], top=a[-1, :], left=a[:, 0], right=a[:, -1])

    @property
    def derivative_margin(self) -> int:
        """Smallest window margin on which first derivative fields are valid."""
        return 1 if self.kind is BCKind.DIRICHLET_FROZEN else 0

    def apply_ring(self, arr: np.ndarray) -> None:
        """Overwrite the boundary ring of a writable array with frozen values."""
        if self.kind is not BCKind.DIRICHLET_FROZEN:
            return
        arr[0, :] = self.bottom
        arr[-1, :] = self.top
        arr[:, 0] = self.left
        arr[:, -1] = self.right


def _check_periodic_even(spec: GridSpec):
    if spec.nx % 2 or spec.ny % 2:
        raise ValueError("periodic boundary requires even nx and ny")


def _pad(a: np.ndarray, kind: BCKind) -> np.ndarray:
    """One ghost ring around `a` according to the boundary kind."""
    if kind is BCKind.PERIODIC:
        return np.pad(a, 1, mode="wrap")
    if kind is BCKind.LINEAR_EXTRAPOLATE:
        # odd reflection about the edge value == linear extrapolation
        return np.pad(a, 1, mode="reflect", reflect_type="odd")
    # frozen Dirichlet: ghost values are irrelevant, the output ring is zeroed
    return np.pad(a, 1, mode="edge")


def laplacian_array(a: np.ndarray, h: float, kind: BCKind) -> np.ndarray:
    p = _pad(a, kind)
    out = (p[1:-1, 2:] + p[1:-1, :-2] + p[2:, 1:-1] + p[:-2, 1:-1]
           - 4.0 * a) / (h * h)
    if kind is BCKind.DIRICHLET_FROZEN:
        out[0, :] = out[-1, :] = 0.0
        out[:, 0] = out[:, -1] = 0.0
    return out


def gradient_arrays(a: np.ndarray, h: float, kind: BCKind):
    p = _pad(a, kind)
    gx = (p[1:-1, 2:] - p[1:-1, :-2]) / (2.0 * h)
    gy = (p[2:, 1:-1] - p[:-2, 1:-1]) / (2.0 * h)
    if kind is BCKind.DIRICHLET_FROZEN:
        for g in (gx, gy):
            g[0, :] = g[-1, :] = 0.0
            g[:, 0] = g[:, -1] = 0.0
    return gx, gy


def hessian_arrays(a: np.ndarray, h: float, kind: BCKind):
    p = _pad(a, kind)
    h2 = h * h
    fxx = (p[1:-1, 2:] - 2.0 * a + p[1:-1, :-2]) / h2
    fyy = (p[2:, 1:-1] - 2.0 * a + p[:-2, 1:-1]) / h2
    fxy = (p[2:, 2:] - p[2:, :-2] - p[:-2, 2:] + p[:-2, :-2]) / (4.0 * h2)
    if kind is BCKind.DIRICHLET_FROZEN:
        for g in (fxx, fxy, fyy):
            g[0, :] = g[-1, :] = 0.0
            g[:, 0] = g[:, -1] = 0.0
    return fxx, fxy, fyy


def _stencil_input(f: ScalarField, bc: BoundaryCondition) -> np.ndarray:
    if not isinstance(f, ScalarField):
        raise TypeError("expected a ScalarField")
    if bc.kind is BCKind.PERIODIC:
        _check_periodic_even(f.spec)
    return f.data


def laplacian(f: ScalarField, bc: BoundaryCondition) -> ScalarField:
    """5-point discrete Laplacian; boundary ring per `bc` (0 for frozen)."""
    a = _stencil_input(f, bc)
    return ScalarField(f.spec, laplacian_array(a, f.spec.h, bc.kind))


def gradient(f: ScalarField, bc: BoundaryCondition) -> VectorField:
    """Central-difference gradient."""
    a = _stencil_input(f, bc)
    gx, gy = gradient_arrays(a, f.spec.h, bc.kind)
    return VectorField(ScalarField(f.spec, gx), ScalarField(f.spec, gy))


def hessian(f: ScalarField, bc: BoundaryCondition) -> SymTensorField:
    """Second differences; mixed term from the 4-corner average."""
    a = _stencil_input(f, bc)
    fxx, fxy, fyy = hessian_arrays(a, f.spec.h, bc.kind)
    return SymTensorField(ScalarField(f.spec, fxx), ScalarField(f.spec, fxy),
                          ScalarField(f.spec, fyy))


def sup_norm(f: ScalarField, margin: int = 0) -> float:
    """Max over the interior window `margin` nodes in from every edge."""
    return float(f.interior(margin).max())


def inf_value(f: ScalarField, margin: int = 0) -> float:
    return float(f.interior(margin).min())


# ---------------------------------------------------------------------------
# CSV serialization: one comment header with the grid, then one row per j
# ---------------------------------------------------------------------------

def write_field_csv(f: ScalarField, path) -> None:
    spec = f.spec
    with open(path, "w") as fh:
        fh.write(f"# {spec.nx},{spec.ny},{spec.h:.17g},"
                 f"{spec.x0:.17g},{spec.y0:.17g}\n")
        for j in range(spec.ny):
            fh.write(",".join(f"{v:.17g}" for v in f.data[j, :]) + "\n")


def read_field_csv(path) -> ScalarField:
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("#"):
            raise ValueError(f"{path}: missing grid header line")
        parts = header[1:].strip().split(",")
        if len(parts) != 5:
            raise ValueError(f"{path}: header must carry nx,ny,h,x0,y0")
        nx, ny = int(parts[0]), int(parts[1])
        h, x0, y0 = (float(p) for p in parts[2:])
        rows = [np.array(line.split(","), dtype=float)
                for line in fh if line.strip()]
    data = np.vstack(rows)
    return ScalarField(GridSpec(nx=nx, ny=ny, h=h, x0=x0, y0=y0), data)
