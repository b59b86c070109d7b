"""Initial-boundary value problem for transient heat conduction on the unit square.

Coefficients are nondimensional: conductivities are divided by a reference
conductivity and time is measured in diffusion times.  All types here are
frozen dataclasses and safe to share between workers.
"""
from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import DomainError, ValidationError

EDGES = ("bottom", "top", "left", "right")


# ---------------------------------------------------------------------------
# material data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConductivityTensor:
    """Symmetric 2x2 conductivity tensor stored by its three entries."""

    kxx: float
    kxy: float
    kyy: float

    def __post_init__(self):
        if not (self.kxx > 0 and self.kxx * self.kyy - self.kxy ** 2 > 0):
            raise ValidationError(
                f"conductivity ({self.kxx}, {self.kxy}, {self.kyy}) is not positive definite")

    @classmethod
    def isotropic(cls, k):
        return cls(float(k), 0.0, float(k))

    def scaled(self, factor):
        return ConductivityTensor(self.kxx * factor, self.kxy * factor, self.kyy * factor)

    def eigenvalues(self):
        mean = 0.5 * (self.kxx + self.kyy)
        rad = math.hypot(0.5 * (self.kxx - self.kyy), self.kxy)
        return mean - rad, mean + rad

    def as_array(self):
        return np.array([[self.kxx, self.kxy], [self.kxy, self.kyy]])


@dataclass(frozen=True)
class MaterialPhase:
    id: int
    conductivity: ConductivityTensor
    rho: float = 1.0
    cp: float = 1.0

    def __post_init__(self):
        if not (self.rho > 0 and self.cp > 0):
            raise ValidationError(f"phase {self.id}: rho and cp must be positive")

    @property
    def heat_capacity(self):
        return self.rho * self.cp


@dataclass(frozen=True)
class Homogeneous:
    pass


@dataclass(frozen=True)
class LayeredSlab:
    """Two horizontal layers; the upper one (closed at the interface) is secondary."""

    interface_y: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.interface_y < 1.0:
            raise ValidationError("interface_y must lie in (0, 1)")


@dataclass(frozen=True)
class CircularInclusion:
    """Closed disc of the secondary phase inside the matrix."""

    cx: float = 0.5
    cy: float = 0.5
    r: float = 0.2

    def __post_init__(self):
        if not (self.r > 0 and self.cx - self.r > 0 and self.cx + self.r < 1
                and self.cy - self.r > 0 and self.cy + self.r < 1):
            raise ValidationError("inclusion disc must lie strictly inside the unit square")


@dataclass(frozen=True)
class GradedLayer:
    """Matrix below ``y0``; above it the base tensor scaled by ``1 + alpha (2y - 1)``."""

    y0: float = 0.5
    alpha: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.y0 < 1.0:
            raise ValidationError("y0 must lie in (0, 1)")
        if self.alpha < 0:
            raise ValidationError("alpha must be non-negative")

    def factor(self, y):
        return 1.0 + self.alpha * (2.0 * np.asarray(y, dtype=float) - 1.0)


Geometry = Union[Homogeneous, LayeredSlab, CircularInclusion, GradedLayer]


def _check_points(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(~np.isfinite(y)) or np.any(x < 0) or np.any(x > 1) \
            or np.any(y < 0) or np.any(y > 1):
        raise DomainError("point outside the unit square [0,1]^2")
    return x, y


@dataclass(frozen=True)
class MaterialMap:
    geometry: Geometry
    matrix_phase: MaterialPhase
    secondary_phase: MaterialPhase = None

    def __post_init__(self):
        if not isinstance(self.geometry, Homogeneous) and self.secondary_phase is None:
            raise ValidationError("a secondary phase is required for non-homogeneous geometry")
        if isinstance(self.geometry, GradedLayer):
            # the grading factor must stay positive over the graded region
            lo = float(self.geometry.factor(self.geometry.y0))
            if min(lo, 1.0 + self.geometry.alpha) <= 0:
                raise ValidationError("grading law yields non-positive conductivity")

    # -- vectorized evaluation ------------------------------------------------
    def secondary_mask(self, x, y):
        """Boolean mask of points belonging to the secondary phase (tie-break included)."""
        g = self.geometry
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if isinstance(g, Homogeneous):
            return np.zeros(np.broadcast(x, y).shape, dtype=bool)
        if isinstance(g, LayeredSlab):
            return np.broadcast_to(y >= g.interface_y, np.broadcast(x, y).shape)
        if isinstance(g, CircularInclusion):
            return (x - g.cx) ** 2 + (y - g.cy) ** 2 <= g.r ** 2
        if isinstance(g, GradedLayer):
            return np.broadcast_to(y >= g.y0, np.broadcast(x, y).shape)
        raise TypeError(f"unknown geometry {g!r}")

    def fields(self, x, y):
        """Return ``(kxx, kxy, kyy, rho_cp)`` arrays at the given points (no domain check)."""
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        sec = self.secondary_mask(x, y)
        m = self.matrix_phase
        kxx = np.full(x.shape, m.conductivity.kxx)
        kxy = np.full(x.shape, m.conductivity.kxy)
        kyy = np.full(x.shape, m.conductivity.kyy)
        cap = np.full(x.shape, m.heat_capacity)
        if self.secondary_phase is not None and sec.any():
            s = self.secondary_phase
            fac = self.geometry.factor(y[sec]) if isinstance(self.geometry, GradedLayer) else 1.0
            kxx[sec] = s.conductivity.kxx * fac
            kxy[sec] = s.conductivity.kxy * fac
            kyy[sec] = s.conductivity.kyy * fac
            cap[sec] = s.heat_capacity
        return kxx, kxy, kyy, cap

    def phase_ids(self, x, y):
        sec = self.secondary_mask(x, y)
        sid = self.secondary_phase.id if self.secondary_phase is not None else self.matrix_phase.id
        return np.where(sec, sid, self.matrix_phase.id)

    @property
    def is_piecewise_constant(self):
        return not isinstance(self.geometry, GradedLayer)


def evaluate_conductivity(material: MaterialMap, point) -> ConductivityTensor:
    """Conductivity tensor at a single point of the closed unit square."""
    x, y = _check_points(point[0], point[1])
    kxx, kxy, kyy, _ = material.fields(x, y)
    return ConductivityTensor(float(kxx), float(kxy), float(kyy))


def phase_of(material: MaterialMap, point) -> int:
    x, y = _check_points(point[0], point[1])
    return int(material.phase_ids(x, y))


def ellipticity_bounds(material: MaterialMap, samples_per_axis: int):
    """Smallest and largest conductivity eigenvalue over a uniform sample grid.

    Raises
    ------
    ValidationError
        If a sampled tensor is not symmetric positive definite; the message
        names the first offending point.
    """
    if samples_per_axis < 2:
        raise ValidationError("samples_per_axis must be >= 2")
    s = np.linspace(0.0, 1.0, samples_per_axis)
    X, Y = np.meshgrid(s, s, indexing="xy")
    kxx, kxy, kyy, _ = material.fields(X, Y)
    mean = 0.5 * (kxx + kyy)
    rad = np.hypot(0.5 * (kxx - kyy), kxy)
    lo, hi = mean - rad, mean + rad
    bad = ~(lo > 0) | ~np.isfinite(hi)
    if bad.any():
        i = np.argwhere(bad)[0]
        raise ValidationError(
            f"conductivity not positive definite at ({X[tuple(i)]:.6g}, {Y[tuple(i)]:.6g})")
    return float(lo.min()), float(hi.max())


# ---------------------------------------------------------------------------
# space-time data vocabulary
# ---------------------------------------------------------------------------

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"


def _fmt(v):
    return repr(float(v))


@dataclass(frozen=True)
class Expr:
    """Small closed vocabulary of analytic space-time functions.

    ``const c``                     c
    ``ramp a b``                    a + b t
    ``poly [p0,p1,..] [q0,..] a b`` (sum p_i x^i)(sum q_i y^i)(a + b t)
    ``sinxy mx my a d``             sx(x) sy(y) a exp(-d t), with
                                    s(z) = sin(m pi z) for m != 0, 1 for m = 0
    """

    kind: str = "const"
    a: float = 0.0
    b: float = 0.0
    px: tuple = (1.0,)
    py: tuple = (1.0,)
    mx: int = 0
    my: int = 0

    @classmethod
    def const(cls, c):
        return cls("const", a=float(c))

    @classmethod
    def ramp(cls, a, b):
        return cls("ramp", a=float(a), b=float(b))

    @classmethod
    def poly(cls, px, py, a=1.0, b=0.0):
        return cls("poly", a=float(a), b=float(b), px=tuple(map(float, px)),
                   py=tuple(map(float, py)))

    @classmethod
    def sinxy(cls, mx, my, a=1.0, decay=0.0):
        return cls("sinxy", a=float(a), b=float(decay), mx=int(mx), my=int(my))

    @property
    def is_zero(self):
        if self.kind in ("const", "ramp"):
            return self.a == 0.0 and self.b == 0.0
        if self.kind == "poly":
            return (self.a == 0.0 and self.b == 0.0) or not any(self.px) or not any(self.py)
        return self.a == 0.0

    @property
    def time_independent(self):
        return self.kind == "const" or self.b == 0.0

    def _space(self, x, y):
        if self.kind == "poly":
            return np.polynomial.polynomial.polyval(x, self.px) * \
                np.polynomial.polynomial.polyval(y, self.py)
        if self.kind == "sinxy":
            sx = np.sin(self.mx * np.pi * x) if self.mx else np.ones_like(x)
            sy = np.sin(self.my * np.pi * y) if self.my else np.ones_like(y)
            return sx * sy
        return np.ones_like(x)

    def __call__(self, x, y, t=0.0):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        if self.kind == "const":
            return np.full(x.shape, self.a)
        if self.kind == "ramp":
            return np.full(x.shape, self.a + self.b * t)
        if self.kind == "poly":
            return self._space(x, y) * (self.a + self.b * t)
        if self.kind == "sinxy":
            return self._space(x, y) * self.a * math.exp(-self.b * t)
        raise ValueError(f"unknown expression kind {self.kind!r}")

    def time_derivative(self, x, y, t=0.0):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        if self.kind == "const":
            return np.zeros(x.shape)
        if self.kind == "ramp":
            return np.full(x.shape, self.b)
        if self.kind == "poly":
            return self._space(x, y) * self.b
        return self._space(x, y) * (-self.b * self.a * math.exp(-self.b * t))

    def to_text(self):
        if self.kind == "const":
            return f"const {_fmt(self.a)}"
        if self.kind == "ramp":
            return f"ramp {_fmt(self.a)} {_fmt(self.b)}"
        if self.kind == "poly":
            px = ",".join(_fmt(v) for v in self.px)
            py = ",".join(_fmt(v) for v in self.py)
            return f"poly [{px}] [{py}] {_fmt(self.a)} {_fmt(self.b)}"
        return f"sinxy {self.mx} {self.my} {_fmt(self.a)} {_fmt(self.b)}"

    @classmethod
    def parse(cls, text):
        """Parse the textual form produced by :meth:`to_text` (a bare number is a constant)."""
        s = " ".join(str(text).split())
        if re.fullmatch(_NUM, s):
            return cls.const(float(s))
        head, _, rest = s.partition(" ")
        try:
            if head == "const":
                return cls.const(float(rest))
            if head == "ramp":
                a, b = rest.split()
                return cls.ramp(float(a), float(b))
            if head == "poly":
                m = re.fullmatch(r"\[([^\]]*)\]\s*\[([^\]]*)\]\s*(.*)", rest)
                if m is None:
                    raise ValueError
                px = [float(v) for v in m.group(1).split(",") if v.strip()]
                py = [float(v) for v in m.group(2).split(",") if v.strip()]
                tail = m.group(3).split()
                a = float(tail[0]) if tail else 1.0
                b = float(tail[1]) if len(tail) > 1 else 0.0
                if not px or not py or len(tail) > 2:
                    raise ValueError
                return cls.poly(px, py, a, b)
            if head == "sinxy":
                parts = rest.split()
                if not 2 <= len(parts) <= 4:
                    raise ValueError
                a = float(parts[2]) if len(parts) > 2 else 1.0
                d = float(parts[3]) if len(parts) > 3 else 0.0
                return cls.sinxy(int(parts[0]), int(parts[1]), a, d)
        except ValueError:
            pass
        raise ValidationError(f"cannot parse expression {text!r}")


ZERO = Expr.const(0.0)


# ---------------------------------------------------------------------------
# boundary and problem
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EdgeCondition:
    """``dirichlet`` (value = g_D), ``neumann`` (value = inward flux g_N), or
    ``robin`` (value = ambient temperature, ``h`` = transfer coefficient)."""

    kind: str
    value: Expr = ZERO
    h: float = 0.0

    def __post_init__(self):
        if self.kind not in ("dirichlet", "neumann", "robin"):
            raise ValidationError(f"unknown boundary kind {self.kind!r}")
        if self.kind == "robin" and not self.h >= 0:
            raise ValidationError("Robin coefficient h must be >= 0")

    @classmethod
    def dirichlet(cls, value=0.0):
        return cls("dirichlet", value if isinstance(value, Expr) else Expr.const(value))

    @classmethod
    def neumann(cls, flux=0.0):
        return cls("neumann", flux if isinstance(flux, Expr) else Expr.const(flux))

    @classmethod
    def robin(cls, h, ambient=0.0):
        return cls("robin", ambient if isinstance(ambient, Expr) else Expr.const(ambient), float(h))

    def to_text(self):
        if self.kind == "robin":
            return f"robin {_fmt(self.h)} {self.value.to_text()}"
        return f"{self.kind} {self.value.to_text()}"

    @classmethod
    def parse(cls, text):
        s = " ".join(str(text).split())
        kind, _, rest = s.partition(" ")
        if kind == "robin":
            h, _, amb = rest.partition(" ")
            try:
                hv = float(h)
            except ValueError:
                raise ValidationError(f"bad Robin coefficient in {text!r}") from None
            return cls("robin", Expr.parse(amb or "0"), hv)
        if kind in ("dirichlet", "neumann"):
            return cls(kind, Expr.parse(rest or "0"))
        raise ValidationError(f"unknown boundary kind in {text!r}")


@dataclass(frozen=True)
class BoundarySpec:
    bottom: EdgeCondition = field(default_factory=EdgeCondition.neumann)
    top: EdgeCondition = field(default_factory=EdgeCondition.neumann)
    left: EdgeCondition = field(default_factory=EdgeCondition.neumann)
    right: EdgeCondition = field(default_factory=EdgeCondition.neumann)

    def edge(self, name) -> EdgeCondition:
        return getattr(self, name)

    def items(self):
        return [(name, getattr(self, name)) for name in EDGES]

    @property
    def dirichlet_edges(self):
        return frozenset(name for name, c in self.items() if c.kind == "dirichlet")

    @property
    def has_robin(self):
        return any(c.kind == "robin" and c.h > 0 for _, c in self.items())


def edge_points(name, s):
    """Map the edge parameter ``s`` in [0, 1] to points on the named edge."""
    s = np.asarray(s, dtype=float)
    if name == "bottom":
        return s, np.zeros_like(s)
    if name == "top":
        return s, np.ones_like(s)
    if name == "left":
        return np.zeros_like(s), s
    if name == "right":
        return np.ones_like(s), s
    raise ValueError(name)


@dataclass(frozen=True)
class ProblemDefinition:
    material: MaterialMap
    boundary: BoundarySpec
    source: Expr = ZERO
    initial: Expr = ZERO
    t_final: float = 1.0

    def __post_init__(self):
        if not self.t_final > 0:
            raise ValidationError("t_final must be positive")


def corner_values(boundary: BoundarySpec, t=0.0, derivative=False):
    """Dirichlet data at the four corners ``{(x, y): value}`` used by the lifting.

    A corner shared by two Dirichlet edges with different data receives the
    average and a warning.  Corners touching no Dirichlet edge are filled from
    the neighbouring corners so the interpolant stays bilinear.
    """
    corners = {(0, 0): ("bottom", "left"), (1, 0): ("bottom", "right"),
               (0, 1): ("top", "left"), (1, 1): ("top", "right")}
    vals = {}
    for (cx, cy), names in corners.items():
        got = []
        for name in names:
            c = boundary.edge(name)
            if c.kind == "dirichlet":
                fn = c.value.time_derivative if derivative else c.value
                got.append(float(fn(float(cx), float(cy), t)))
        if got:
            if max(got) - min(got) > 1e-12 and not derivative:
                warnings.warn(f"discontinuous Dirichlet data at corner ({cx},{cy}); averaging",
                              stacklevel=2)
            vals[(cx, cy)] = sum(got) / len(got)
    missing = [c for c in corners if c not in vals]
    for c in missing:
        # neighbours along the two edges meeting at c
        nbrs = [n for n in ((1 - c[0], c[1]), (c[0], 1 - c[1])) if n in vals]
        if not nbrs:
            nbrs = [n for n in vals]
        vals[c] = sum(vals[n] for n in nbrs) / len(nbrs) if nbrs else 0.0
    return vals


# ---------------------------------------------------------------------------
# scenario presets
# ---------------------------------------------------------------------------

def slab_problem(k1=1.0, k2=10.0, interface_y=0.5, t_final=5.0) -> ProblemDefinition:
    """Layered slab: T=1 at y=0, T=0 at y=1, insulated sides, T0 = 0."""
    mat = MaterialMap(LayeredSlab(interface_y),
                      MaterialPhase(0, ConductivityTensor.isotropic(k1)),
                      MaterialPhase(1, ConductivityTensor.isotropic(k2)))
    bc = BoundarySpec(bottom=EdgeCondition.dirichlet(1.0), top=EdgeCondition.dirichlet(0.0))
    return ProblemDefinition(mat, bc, t_final=t_final)


def inclusion_problem(k_m=1.0, k_inc=5.0, cx=0.5, cy=0.5, r=0.2, t_final=2.0):
    """Circular inclusion: T=1 at x=0, T=0 at x=1, insulated top and bottom, T0 = 0."""
    mat = MaterialMap(CircularInclusion(cx, cy, r),
                      MaterialPhase(0, ConductivityTensor.isotropic(k_m)),
                      MaterialPhase(1, ConductivityTensor.isotropic(k_inc)))
    bc = BoundarySpec(left=EdgeCondition.dirichlet(1.0), right=EdgeCondition.dirichlet(0.0))
    return ProblemDefinition(mat, bc, t_final=t_final)


def fgm_problem(k_m=1.0, alpha=1.0, y0=0.5, t_final=5.0):
    """Graded coating above ``y0``; same boundary data as the slab."""
    mat = MaterialMap(GradedLayer(y0, alpha),
                      MaterialPhase(0, ConductivityTensor.isotropic(k_m)),
                      MaterialPhase(1, ConductivityTensor.isotropic(k_m)))
    bc = BoundarySpec(bottom=EdgeCondition.dirichlet(1.0), top=EdgeCondition.dirichlet(0.0))
    return ProblemDefinition(mat, bc, t_final=t_final)


def homogeneous_problem(k=1.0, t_final=5.0):
    mat = MaterialMap(Homogeneous(), MaterialPhase(0, ConductivityTensor.isotropic(k)))
    bc = BoundarySpec(bottom=EdgeCondition.dirichlet(1.0), top=EdgeCondition.dirichlet(0.0))
    return ProblemDefinition(mat, bc, t_final=t_final)
