"""Run configuration loaded from YAML; the grammar is documented in README.md."""
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import yaml

from .exceptions import ConfigError
from .grids import DiskGrid, TorusGrid
from .matrix_core import ModelParams, coupling_matrix
from .planar_solver import BOUNDARY_MODES, default_disk_grid
from .vortex_sources import VortexConfiguration, autotune_nu

CONFIG_SCHEMA = "abjm-vortex-config/1"
AUTO = "auto"


@dataclass
class ModelConfig:
    m: int
    a: float
    lam: float
    k: float = 1.0
    s: int = -1


@dataclass
class DomainConfig:
    kind: str
    radius: Union[float, str, None] = None
    L1: Optional[float] = None
    L2: Optional[float] = None
    grid: Union[int, tuple, str, None] = None


@dataclass
class SolverConfig:
    tol: float = 1e-10
    max_iter: int = 500
    nu: Union[float, str] = AUTO
    boundary: str = "exact"
    route: str = "direct"


@dataclass
class RunConfig:
    model: ModelConfig
    domain: DomainConfig
    vortices: list
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: Optional[str] = None

    # --------------------------------------------------------------------------
    @classmethod
    def from_yaml(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                raw = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError("config", f"{path} is not valid YAML: {exc}") from exc
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigError("config", "top level must be a mapping")
        if raw.get("schema") != CONFIG_SCHEMA:
            raise ConfigError("schema", f"expected {CONFIG_SCHEMA!r}, got {raw.get('schema')!r}")
        unknown = set(raw) - {"schema", "model", "domain", "vortices", "solver", "output"}
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown key")
        model = _parse_model(raw.get("model") or {})
        domain = _parse_domain(raw.get("domain") or {})
        solver = _parse_solver(raw.get("solver") or {})
        vortices = raw.get("vortices")
        if vortices is None:
            vortices = [[] for _ in range(model.m)]
        if not isinstance(vortices, list) or len(vortices) != model.m:
            got = len(vortices) if isinstance(vortices, list) else type(vortices).__name__
            raise ConfigError("vortices", f"need one point list per species ({model.m}), got {got}")
        cfg = cls(model=model, domain=domain, vortices=vortices, solver=solver, output=raw.get("output"))
        cfg.vortex_config()  # validates point shapes
        return cfg

    # --------------------------------------------------------------------------
    def params(self):
        nu = None if self.solver.nu == AUTO else float(self.solver.nu)
        return ModelParams(m=self.model.m, a=self.model.a, lam=self.model.lam,
                           k=self.model.k, s=self.model.s, nu=nu)

    def vortex_config(self):
        return VortexConfiguration.from_lists(self.vortices)

    def disk_setup(self, params=None, cm=None):
        """
        (params, DiskGrid) for a disk run. With an auto radius and nu: auto, nu is tuned on a
        provisional grid first and the radius re-derived from it, as solve_planar does without a grid.
        """
        params = params or self.params()
        cm = cm or coupling_matrix(params.a, params.m)
        if self.domain.radius == AUTO and params.nu is None:
            vortices = self.vortex_config()
            provisional = default_disk_grid(vortices, params, cm)
            params = replace(params, nu=autotune_nu(vortices, provisional, params, cm))
        return params, self.build_grid(params, cm)

    def build_grid(self, params=None, cm=None):
        """DiskGrid or TorusGrid; 'auto' radius/grid on the disk follow default_disk_grid."""
        params = params or self.params()
        d = self.domain
        if d.kind == "torus":
            nx, ny = d.grid
            return TorusGrid(d.L1, d.L2, nx, ny)
        if d.radius == AUTO or d.grid == AUTO:
            cm = cm or coupling_matrix(params.a, params.m)
            auto = default_disk_grid(self.vortex_config(), params, cm, params.nu)
            radius = auto.radius if d.radius == AUTO else d.radius
            if d.grid == AUTO:
                scale = math.sqrt(params.lam * cm.lambda0)
                n = int(math.ceil(2.0 * radius * scale / 0.2)) + 1
                return DiskGrid(radius, n + n % 2)
            return DiskGrid(radius, d.grid)
        return DiskGrid(d.radius, d.grid)


# ==============================================================================
# PARSERS
# ==============================================================================
def _number(section, key, value, kind=float):
    try:
        out = kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{section}.{key}", f"expected a number, got {value!r}") from None
    if kind is int and out != value:
        raise ConfigError(f"{section}.{key}", f"expected an integer, got {value!r}")
    return out


def _parse_model(raw):
    if ("N" in raw) == ("m" in raw):
        raise ConfigError("model.m", "give exactly one of N and m")
    if ("lambda" in raw) == ("mu" in raw):
        raise ConfigError("model.lambda", "give exactly one of lambda and mu")
    m = _number("model", "m", raw["m"], int) if "m" in raw else _number("model", "N", raw["N"], int) - 1
    if m < 2:
        raise ConfigError("model.m", f"m = N - 1 must be >= 2, got {m}")
    if "lambda" in raw:
        lam = _number("model", "lambda", raw["lambda"])
    else:
        mu = _number("model", "mu", raw["mu"])
        if not mu > 0:
            raise ConfigError("model.mu", f"must be positive, got {mu}")
        lam = 4.0 * mu * mu
    if not lam > 0:
        raise ConfigError("model.lambda", f"must be positive, got {lam}")
    a = _number("model", "a", raw.get("a", 0.0))
    if a < 0:
        raise ConfigError("model.a", f"must be nonnegative, got {a}")
    k = _number("model", "k", raw.get("k", 1.0))
    if not k > 0:
        raise ConfigError("model.k", f"must be positive, got {k}")
    s = raw.get("s", -1)
    if s not in (1, -1):
        raise ConfigError("model.s", f"must be +1 or -1, got {s!r}")
    return ModelConfig(m=m, a=a, lam=lam, k=k, s=int(s))


def _grid_pair(value):
    if isinstance(value, int):
        return (value, value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return (_number("domain", "grid", value[0], int), _number("domain", "grid", value[1], int))
    raise ConfigError("domain.grid", f"expected n or [nx, ny], got {value!r}")


def _parse_domain(raw):
    kind = raw.get("kind")
    if kind == "torus":
        for key in ("L1", "L2", "grid"):
            if key not in raw:
                raise ConfigError(f"domain.{key}", "required for a torus")
        L1, L2 = _number("domain", "L1", raw["L1"]), _number("domain", "L2", raw["L2"])
        if not (L1 > 0 and L2 > 0):
            raise ConfigError("domain.L1", "cell sides must be positive")
        nx, ny = _grid_pair(raw["grid"])
        for value in (nx, ny):
            if value < 4 or value % 2:
                raise ConfigError("domain.grid", f"torus grid sizes must be even and >= 4, got {value}")
        return DomainConfig(kind="torus", L1=L1, L2=L2, grid=(nx, ny))
    if kind == "disk":
        radius = raw.get("radius", AUTO)
        if radius != AUTO:
            radius = _number("domain", "radius", radius)
            if not radius > 0:
                raise ConfigError("domain.radius", f"must be positive, got {radius}")
        grid = raw.get("grid", AUTO)
        if grid != AUTO:
            grid = _number("domain", "grid", grid, int)
            if grid < 8:
                raise ConfigError("domain.grid", f"need at least 8 nodes per axis, got {grid}")
        return DomainConfig(kind="disk", radius=radius, grid=grid)
    raise ConfigError("domain.kind", f"must be 'disk' or 'torus', got {kind!r}")


def _parse_solver(raw):
    tol = _number("solver", "tol", raw.get("tol", 1e-10))
    if not tol > 0:
        raise ConfigError("solver.tol", f"must be positive, got {tol}")
    max_iter = _number("solver", "max_iter", raw.get("max_iter", 500), int)
    if max_iter < 1:
        raise ConfigError("solver.max_iter", f"must be >= 1, got {max_iter}")
    nu = raw.get("nu", AUTO)
    if nu != AUTO:
        nu = _number("solver", "nu", nu)
        if not nu > 0:
            raise ConfigError("solver.nu", f"must be 'auto' or positive, got {nu}")
    boundary = raw.get("boundary", "exact")
    if boundary not in BOUNDARY_MODES:
        raise ConfigError("solver.boundary", f"must be one of {BOUNDARY_MODES}, got {boundary!r}")
    route = raw.get("route", "direct")
    if route not in ("direct", "constrained"):
        raise ConfigError("solver.route", f"must be 'direct' or 'constrained', got {route!r}")
    return SolverConfig(tol=tol, max_iter=max_iter, nu=nu, boundary=boundary, route=route)
