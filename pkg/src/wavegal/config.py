"""INI scenario configuration.

Every field maps to one ``[section] key``; missing keys take the defaults
below, unknown sections or keys are rejected.  All shipped numbers are
choices of this package, not measured values.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass

from .adaptivity import AdaptivityPolicy
from .assembly import Discretization, QuadratureRule
from .errors import ConfigError, WavegalError
from .mra import get_family
from .problem import (BoundarySpec, CircularInclusion, ConductivityTensor, EdgeCondition, Expr,
                      GradedLayer, Homogeneous, LayeredSlab, MaterialMap, MaterialPhase,
                      ProblemDefinition)
from .timestepper import PcgConfig, TimeGrid

SCENARIOS = ("slab", "inclusion", "fgm", "custom")
GEOMETRIES = ("homogeneous", "slab", "inclusion", "graded")
REFERENCES = ("fd", "analytic", "none")


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "slab"
    # material
    geometry: str = ""
    k1: float = 1.0
    k2: float = 10.0
    interface_y: float = 0.5
    k_m: float = 1.0
    k_inc: float = 5.0
    cx: float = 0.5
    cy: float = 0.5
    r: float = 0.2
    alpha: float = 1.0
    y0: float = 0.5
    rho_cp: float = 1.0
    rho_cp_secondary: float = 1.0
    # boundary and data ("" = scenario default)
    bottom: str = ""
    top: str = ""
    left: str = ""
    right: str = ""
    source: str = "const 0.0"
    initial: str = "const 0.0"
    # discretization
    family: str = "HierarchicalHat"
    J: int = 5
    q: int = 10
    s: int = 2
    rule: str = "TwoPointGauss"
    line_depth: int = 13
    drop_tol: float = 0.0
    # adaptivity
    adaptive: bool = True
    epsilon_tol: float = 1e-3
    radius: int = 1
    parents: bool = True
    children: bool = True
    stride: int = 1
    # time
    dt: float = 0.05
    t_final: float = 5.0
    # pcg
    pcg_tol: float = 1e-10
    max_iter: int = 0
    preconditioner: str = "Jacobi"
    # output
    output_dir: str = "out"
    record_timing: bool = True
    dump_matrix: bool = False
    # reference
    reference: str = "fd"
    reference_n: int = 129

    # -- derived objects ---------------------------------------------------------
    def _geometry_name(self):
        if self.scenario == "custom":
            return self.geometry or "homogeneous"
        return {"slab": "slab", "inclusion": "inclusion", "fgm": "graded"}[self.scenario]

    def material(self) -> MaterialMap:
        g = self._geometry_name()
        # slab: k1 below / k2 above; inclusion: k_m / k_inc; graded and homogeneous: k_m
        km, ks = {"slab": (self.k1, self.k2), "inclusion": (self.k_m, self.k_inc)}.get(
            g, (self.k_m, self.k_m))
        mp = MaterialPhase(0, ConductivityTensor.isotropic(km), cp=self.rho_cp)
        sp_ = MaterialPhase(1, ConductivityTensor.isotropic(ks), cp=self.rho_cp_secondary)
        if g == "homogeneous":
            return MaterialMap(Homogeneous(), mp)
        if g == "slab":
            return MaterialMap(LayeredSlab(self.interface_y), mp, sp_)
        if g == "inclusion":
            return MaterialMap(CircularInclusion(self.cx, self.cy, self.r), mp, sp_)
        return MaterialMap(GradedLayer(self.y0, self.alpha), mp, sp_)

    def boundary(self) -> BoundarySpec:
        if self.scenario == "inclusion":
            d = {"left": "dirichlet const 1.0", "right": "dirichlet const 0.0"}
        elif self.scenario in ("slab", "fgm"):
            d = {"bottom": "dirichlet const 1.0", "top": "dirichlet const 0.0"}
        else:
            d = {}
        spec = {}
        for name in ("bottom", "top", "left", "right"):
            text = getattr(self, name) or d.get(name, "neumann const 0.0")
            spec[name] = EdgeCondition.parse(text)
        return BoundarySpec(**spec)

    def problem(self) -> ProblemDefinition:
        return ProblemDefinition(self.material(), self.boundary(), Expr.parse(self.source),
                                 Expr.parse(self.initial), self.t_final)

    def discretization(self) -> Discretization:
        return Discretization(self.family, self.J, self.q,
                              QuadratureRule(self.s, self.rule, self.line_depth), self.drop_tol)

    def policy(self):
        if not self.adaptive:
            return None
        return AdaptivityPolicy(self.epsilon_tol, self.radius, self.parents, self.children,
                                None, self.stride)

    def time_grid(self) -> TimeGrid:
        return TimeGrid.from_final(self.t_final, self.dt)

    def pcg(self) -> PcgConfig:
        return PcgConfig(self.pcg_tol, self.max_iter or None, self.preconditioner)

    def interface_line(self):
        g = self._geometry_name()
        if g == "slab":
            return self.interface_y
        if g == "graded":
            return self.y0
        return None

    def validate(self):
        """Build every derived object once; raise ConfigError naming the first bad key."""
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}", "scenario.name")
        if self.scenario == "custom" and self._geometry_name() not in GEOMETRIES:
            raise ConfigError(f"unknown geometry {self.geometry!r}", "material.geometry")
        if self.reference not in REFERENCES:
            raise ConfigError(f"unknown reference {self.reference!r}", "reference.kind")
        checks = [
            ("time.dt", lambda: self.dt > 0, "must be > 0"),
            ("time.t_final", lambda: self.t_final > 0, "must be > 0"),
            ("discretization.J", lambda: 1 <= self.J <= 10, "must lie in [1, 10]"),
            ("adaptivity.epsilon_tol", lambda: self.epsilon_tol > 0, "must be > 0"),
            ("reference.n", lambda: self.reference_n >= 17, "must be >= 17"),
            ("output.directory", lambda: bool(self.output_dir), "must be non-empty"),
        ]
        for key, ok, msg in checks:
            if not ok():
                raise ConfigError(msg, key)
        steps = [
            ("discretization.family", lambda: get_family(self.family)),
            ("material", self.material),
            ("boundary", self.boundary),
            ("data.source", lambda: Expr.parse(self.source)),
            ("data.initial", lambda: Expr.parse(self.initial)),
            ("discretization", self.discretization),
            ("adaptivity", self.policy),
            ("time.dt", self.time_grid),
            ("pcg", self.pcg),
        ]
        for key, fn in steps:
            try:
                fn()
            except WavegalError as exc:
                raise ConfigError(str(exc), key) from exc
        return self

    # -- INI round trip ------------------------------------------------------------
    def to_pairs(self):
        """``[(section, key, text)]`` in a fixed order."""
        out = []
        for section, key, attr in _FIELDS:
            v = getattr(self, attr)
            out.append((section, key, _fmt(v)))
        return out

    def to_ini(self):
        lines = []
        cur = None
        for section, key, text in self.to_pairs():
            if section != cur:
                if cur is not None:
                    lines.append("")
                lines.append(f"[{section}]")
                cur = section
            lines.append(f"{key} = {text}")
        return "\n".join(lines) + "\n"

    def echo(self):
        """``config.section.key=value`` lines for report files."""
        return "".join(f"config.{s}.{k}={t}\n" for s, k, t in self.to_pairs())


_FIELDS = [
    ("scenario", "name", "scenario"),
    ("material", "geometry", "geometry"),
    ("material", "k1", "k1"), ("material", "k2", "k2"),
    ("material", "interface_y", "interface_y"),
    ("material", "k_m", "k_m"), ("material", "k_inc", "k_inc"),
    ("material", "cx", "cx"), ("material", "cy", "cy"), ("material", "r", "r"),
    ("material", "alpha", "alpha"), ("material", "y0", "y0"),
    ("material", "rho_cp", "rho_cp"), ("material", "rho_cp_secondary", "rho_cp_secondary"),
    ("boundary", "bottom", "bottom"), ("boundary", "top", "top"),
    ("boundary", "left", "left"), ("boundary", "right", "right"),
    ("data", "source", "source"), ("data", "initial", "initial"),
    ("discretization", "family", "family"), ("discretization", "J", "J"),
    ("discretization", "q", "q"), ("discretization", "s", "s"),
    ("discretization", "rule", "rule"), ("discretization", "line_depth", "line_depth"),
    ("discretization", "drop_tol", "drop_tol"),
    ("adaptivity", "enabled", "adaptive"), ("adaptivity", "epsilon_tol", "epsilon_tol"),
    ("adaptivity", "radius", "radius"), ("adaptivity", "parents", "parents"),
    ("adaptivity", "children", "children"), ("adaptivity", "stride", "stride"),
    ("time", "dt", "dt"), ("time", "t_final", "t_final"),
    ("pcg", "tol", "pcg_tol"), ("pcg", "max_iter", "max_iter"),
    ("pcg", "preconditioner", "preconditioner"),
    ("output", "directory", "output_dir"), ("output", "record_timing", "record_timing"),
    ("output", "dump_matrix", "dump_matrix"),
    ("reference", "kind", "reference"), ("reference", "n", "reference_n"),
]
_TYPES = {f.name: f.type for f in dataclasses.fields(ScenarioConfig)}
_BY_KEY = {(s, k): a for s, k, a in _FIELDS}


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _convert(attr, text, key):
    typ = _TYPES[attr]
    text = text.strip()
    try:
        if typ == "bool":
            low = text.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(text)
        if typ == "int":
            return int(text)
        if typ == "float":
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"cannot parse {text!r} as {typ}", key) from None


def parse_config(text: str, validate=True) -> ScenarioConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"syntax error: {exc}".replace("\n", " ")) from exc
    sections = {s for s, _, _ in _FIELDS}
    kw = {}
    for section in cp.sections():
        if section not in sections:
            raise ConfigError("unknown section", section)
        for key, val in cp.items(section):
            full = f"{section}.{key}"
            attr = _BY_KEY.get((section, key))
            if attr is None:
                raise ConfigError("unknown key", full)
            kw[attr] = _convert(attr, val, full)
    cfg = ScenarioConfig(**kw)
    return cfg.validate() if validate else cfg


def load_config(path, validate=True) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, validate)


def config_from_report(text: str) -> ScenarioConfig:
    """Rebuild the configuration echoed in a ``report.txt``."""
    kw = {}
    for line in text.splitlines():
        if not line.startswith("config."):
            continue
        key, _, val = line[len("config."):].partition("=")
        section, _, name = key.partition(".")
        attr = _BY_KEY.get((section, name))
        if attr is None:
            raise ConfigError("unknown key in report", key)
        kw[attr] = _convert(attr, val, key)
    return ScenarioConfig(**kw)
