"""Problem parameters, the catalogue of nonlocal coefficients g, run settings
and scenario configuration.

Everything here is immutable.  Coefficients ``a`` and ``b`` may be given in
units of the principal eigenvalue (``{"lambda1": 2.0}`` in JSON) because the
interesting regimes sit exactly at multiples of lambda_1 and the discrete
lambda_1 depends on the mesh.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import ConfigError, DomainError

__all__ = [
    "ProblemParams",
    "Constant",
    "Saturating",
    "Decaying",
    "TableLinear",
    "GFunction",
    "Interval",
    "LambdaMultiple",
    "ToleranceSettings",
    "ContinuationSettings",
    "ScenarioConfig",
    "ValidationOutcome",
    "g_eval",
    "validate_params",
    "load_config",
    "config_from_dict",
    "config_to_dict",
]


@dataclass(frozen=True)
class ProblemParams:
    a: float
    b: float
    p: float
    r: float

    def violations(self) -> list[str]:
        out = []
        for name in ("a", "b", "p", "r"):
            if not math.isfinite(getattr(self, name)):
                out.append(f"{name} must be finite")
        if not self.p > 1:
            out.append("p>1 required")
        if not self.r > 1:
            out.append("r>1 required")
        if not self.a > 0:
            out.append("a>0 required")
        return out


@dataclass(frozen=True)
class Interval:
    """A real interval with explicit endpoint closure (used for R[g])."""

    lo: float
    hi: float
    lo_closed: bool = True
    hi_closed: bool = True

    def __contains__(self, x: float) -> bool:
        above = x >= self.lo if self.lo_closed else x > self.lo
        below = x <= self.hi if self.hi_closed else x < self.hi
        return above and below

    def near_boundary(self, x: float, rtol: float = 1e-8) -> bool:
        scale = max(abs(x), 1.0)
        return abs(x - self.lo) <= rtol * scale or abs(x - self.hi) <= rtol * scale

    def __str__(self) -> str:
        left = "[" if self.lo_closed else "("
        right = "]" if self.hi_closed else ")"
        return f"{left}{self.lo:g},{self.hi:g}{right}"


# -- g catalogue ------------------------------------------------------------


@dataclass(frozen=True)
class Constant:
    g0: float

    family = "constant"

    def __call__(self, s):
        return np.full_like(np.asarray(s, dtype=float), self.g0)[()]

    def violations(self):
        return [] if self.g0 > 0 else ["Constant requires g0>0"]

    def infimum(self):
        return self.g0

    def range(self):
        return Interval(self.g0, self.g0)

    def inverse(self, target, positive=False):
        # every s solves g(s)=g0; canonical choice s'=1
        return 1.0 if math.isclose(target, self.g0, rel_tol=1e-12) else None

    @property
    def degenerate(self):
        return True


@dataclass(frozen=True)
class Saturating:
    """g(s) = alpha + beta*s/(1+s)."""

    alpha: float
    beta: float

    family = "saturating"

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return (self.alpha + self.beta * s / (1.0 + s))[()]

    def violations(self):
        out = []
        if not self.alpha > 0:
            out.append("Saturating requires alpha>0")
        if not self.beta >= 0:
            out.append("Saturating requires beta>=0")
        return out

    def infimum(self):
        return self.alpha

    def range(self):
        if self.beta == 0:
            return Interval(self.alpha, self.alpha)
        return Interval(self.alpha, self.alpha + self.beta, True, False)

    def inverse(self, target, positive=False):
        if self.beta == 0:
            return 1.0 if math.isclose(target, self.alpha, rel_tol=1e-12) else None
        if target not in self.range():
            return None
        s = (target - self.alpha) / (self.alpha + self.beta - target)
        return None if positive and s <= 0 else s

    @property
    def degenerate(self):
        return self.beta == 0


@dataclass(frozen=True)
class Decaying:
    """g(s) = alpha/(1+s); bounded with g(0)=alpha but inf g = 0."""

    alpha: float

    family = "decaying"

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return (self.alpha / (1.0 + s))[()]

    def violations(self):
        return [] if self.alpha > 0 else ["Decaying requires alpha>0"]

    def infimum(self):
        return 0.0

    def range(self):
        return Interval(0.0, self.alpha, False, True)

    def inverse(self, target, positive=False):
        if target not in self.range():
            return None
        s = self.alpha / target - 1.0
        return None if positive and s <= 0 else s

    @property
    def degenerate(self):
        return False


@dataclass(frozen=True)
class TableLinear:
    """Piecewise-linear g through ``knots`` [(s, value), ...], constant outside."""

    knots: tuple

    family = "table"

    def __post_init__(self):
        object.__setattr__(
            self, "knots", tuple((float(s), float(v)) for s, v in self.knots)
        )

    @property
    def s(self):
        return np.array([k[0] for k in self.knots])

    @property
    def values(self):
        return np.array([k[1] for k in self.knots])

    def __call__(self, s):
        return np.interp(np.asarray(s, dtype=float), self.s, self.values)[()]

    def violations(self):
        out = []
        if len(self.knots) < 1:
            return ["TableLinear requires at least one knot"]
        if np.any(np.diff(self.s) <= 0):
            out.append("TableLinear knots must be strictly increasing in s")
        if np.any(self.values < 0):
            out.append("TableLinear values must be nonnegative")
        return out

    def infimum(self):
        return float(self.values.min())

    def range(self):
        return Interval(float(self.values.min()), float(self.values.max()))

    def inverse(self, target, positive=False):
        """Smallest s>=0 (s>0 when ``positive``) with g(s)=target, or None."""
        if target not in self.range():
            return None
        s, v = self.s, self.values
        ok = (lambda x: x > 0) if positive else (lambda x: x >= 0)
        cands = []
        # constant extrapolation on either side
        if v[0] == target:
            cands += [x for x in (0.0, s[0]) if ok(x)]
        if v[-1] == target:
            cands += [x for x in (max(s[-1], 0.0), max(s[-1], 1.0)) if ok(x)]
        for i in range(len(s) - 1):
            lo, hi = sorted((v[i], v[i + 1]))
            if not lo <= target <= hi:
                continue
            if v[i] == v[i + 1]:
                cands += [x for x in (max(s[i], 0.0), s[i + 1]) if ok(x)]
            else:
                x = s[i] + (target - v[i]) * (s[i + 1] - s[i]) / (v[i + 1] - v[i])
                if ok(x):
                    cands.append(float(x))
        return float(min(cands)) if cands else None

    @property
    def degenerate(self):
        return len(set(self.values.tolist())) == 1


GFunction = Union[Constant, Saturating, Decaying, TableLinear]


def g_eval(g: GFunction, s: float) -> float:
    if not (s >= 0 and math.isfinite(s)):
        raise DomainError(f"g is defined on [0, inf); got s={s}")
    return float(g(s))


def satisfies_g1(g: GFunction) -> bool:
    """inf_{s>0} g(s) > 0."""
    return not g.violations() and g.infimum() > 0


def satisfies_g2(g: GFunction) -> bool:
    """Bounded continuous with g(0) > 0 (every catalogue member is bounded)."""
    return not g.violations() and float(g(0.0)) > 0


def is_positive(g: GFunction) -> bool:
    return not g.violations() and (g.infimum() > 0 or g.family == "decaying")


# -- settings ---------------------------------------------------------------


@dataclass(frozen=True)
class ToleranceSettings:
    newton_tol: float = 1e-10
    qmap_tol: float = 1e-12
    bisection_tol: float = 1e-8
    eig_tol: float = 1e-12

    def violations(self):
        return [
            f"{k} must be > 0" for k, v in asdict(self).items() if not v > 0
        ]


@dataclass(frozen=True)
class ContinuationSettings:
    seed_eps: float = 1e-3
    ds_init: float = 1e-3
    ds_min: float = 1e-6
    ds_max: float = 0.1
    max_steps: int = 5000
    norm_cap: float = 1e3

    def violations(self):
        out = []
        if not 0 < self.ds_min <= self.ds_init <= self.ds_max:
            out.append("0<ds_min<=ds_init<=ds_max required")
        if not self.seed_eps > 0:
            out.append("seed_eps must be > 0")
        if not self.max_steps > 0:
            out.append("max_steps must be > 0")
        if not self.norm_cap > 0:
            out.append("norm_cap must be > 0")
        return out


@dataclass(frozen=True)
class LambdaMultiple:
    """A coefficient expressed as ``factor * lambda_1`` of the working mesh."""

    factor: float

    def resolve(self, lambda1: float) -> float:
        return self.factor * lambda1


Coefficient = Union[float, LambdaMultiple]


def _resolve(c: Coefficient, lambda1: float) -> float:
    return c.resolve(lambda1) if isinstance(c, LambdaMultiple) else float(c)


@dataclass(frozen=True)
class ScenarioConfig:
    a: Coefficient
    b: Coefficient
    p: float
    r: float
    g: GFunction
    mesh_n: int = 511
    lambda_window: Optional[tuple] = None
    continuation: ContinuationSettings = field(default_factory=ContinuationSettings)
    tolerances: ToleranceSettings = field(default_factory=ToleranceSettings)
    output_dir: str = "out"
    regime: Optional[str] = None
    name: Optional[str] = None

    def params(self, lambda1: float) -> ProblemParams:
        return ProblemParams(
            a=_resolve(self.a, lambda1),
            b=_resolve(self.b, lambda1),
            p=float(self.p),
            r=float(self.r),
        )

    def window(self, lambda1: float) -> tuple:
        """The lambda window, filling unset ends with defaults.

        The default upper end max(2/g0, 4*lambda0) guarantees h<0 at the
        terminus of a supercritical branch when g is bounded below by g0.
        """
        lam0 = lambda1 / self.params(lambda1).a
        lo, hi = self.lambda_window if self.lambda_window else (None, None)
        if lo is None:
            lo = lam0 / 100.0
        if hi is None:
            g0 = self.g.infimum() if not self.g.violations() else 0.0
            hi = max(2.0 / g0, 4.0 * lam0) if g0 > 0 else 4.0 * lam0
        return float(lo), float(hi)

    def violations(self) -> list[str]:
        out = []
        if not (isinstance(self.mesh_n, int) and self.mesh_n >= 15):
            out.append("mesh_n>=15 required")
        if self.lambda_window is not None:
            lo, hi = self.lambda_window
            if lo is not None and not lo > 0:
                out.append("lambda_min must be > 0")
            if lo is not None and hi is not None and not lo < hi:
                out.append("0<lambda_min<lambda_max required")
        out += self.continuation.violations() + self.tolerances.violations()
        return out

    def with_overrides(self, **kw) -> "ScenarioConfig":
        cont = {k: kw.pop(k) for k in list(kw) if k in ("seed_eps",)}
        cfg = replace(self, **{k: v for k, v in kw.items() if v is not None})
        if cont and cont["seed_eps"] is not None:
            cfg = replace(cfg, continuation=replace(cfg.continuation, **cont))
        return cfg


# -- validation -------------------------------------------------------------


@dataclass(frozen=True)
class ValidationOutcome:
    ok: bool
    violations: tuple
    g1: bool = False
    g2: bool = False
    regimes: tuple = ()
    branch_shape: Optional[str] = None

    def __bool__(self):
        return self.ok


def phi_s0_value(lambda1: float, params: ProblemParams) -> Optional[float]:
    if params.b <= 0 or params.r == params.p:
        return None
    p, r, b = params.p, params.r, params.b
    return ((p - 1) / lambda1) ** ((p - 1) / (r - p)) * (b / (r - 1)) ** (
        (r - 1) / (r - p)
    ) * (p - r)


def validate_params(
    params: ProblemParams, g: GFunction, lambda1: float = math.pi**2, rtol: float = 1e-9
) -> ValidationOutcome:
    """Check type invariants and classify which existence theorems apply.

    ``regimes`` lists the theorem cases whose full hypotheses hold, tagged
    A(i), A(ii), A(iii), B(i), B(ii) or C.  ``branch_shape`` is the
    qualitative shape of the continuum of the auxiliary problem, which needs
    no hypothesis on g.  Never raises.
    """
    violations = params.violations() + g.violations()
    if violations:
        return ValidationOutcome(False, tuple(violations))

    a, b, p, r = params.a, params.b, params.p, params.r
    eq_r_p = math.isclose(r, p, rel_tol=rtol)
    b_is_l1 = math.isclose(b, lambda1, rel_tol=rtol)
    g0l1 = float(g(0.0)) * lambda1
    g1, g2 = satisfies_g1(g), satisfies_g2(g)

    if b <= 0:
        shape = "supercritical"
    elif eq_r_p and b_is_l1:
        shape = "vertical"
    elif eq_r_p:
        shape = "supercritical" if b < lambda1 else "subcritical"
    elif r > p:
        shape = "subcritical-fold"
    else:
        shape = "supercritical-fold"

    regimes = []
    if g1 and a > g0l1:
        if b <= 0:
            regimes.append("A(i)")
        elif eq_r_p and b < lambda1 and not b_is_l1:
            regimes.append("A(ii)")
        elif r > p and not eq_r_p:
            regimes.append("A(iii)")
    if g2 and a < g0l1 and b > 0:
        if eq_r_p and b > lambda1 and not b_is_l1:
            regimes.append("B(i)")
        elif r < p and not eq_r_p:
            # 1<p/r<(N+2)/(N-2) has no upper bound when N=1
            phi0 = phi_s0_value(lambda1, params)
            if g0l1 > phi0 and a > phi0:
                regimes.append("B(ii)")
    if b_is_l1 and eq_r_p and r < 2 and is_positive(g):
        if a / lambda1 in g.range():
            regimes.append("C")
    return ValidationOutcome(True, (), g1, g2, tuple(regimes), shape)


# -- JSON config ------------------------------------------------------------

_TOP_KEYS = {
    "name",
    "regime",
    "params",
    "g",
    "mesh_n",
    "lambda_window",
    "continuation",
    "tolerances",
    "output_dir",
}
_G_KEYS = {
    "constant": {"g0"},
    "saturating": {"alpha", "beta"},
    "decaying": {"alpha"},
    "table": {"knots"},
}


def _strict(d: dict, allowed: set, where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")


def _coef(v, where):
    if isinstance(v, dict):
        _strict(v, {"lambda1"}, where)
        return LambdaMultiple(float(v["lambda1"]))
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return float(v)
    raise ConfigError(f"{where}: expected a number or {{'lambda1': factor}}")


def _g_from_dict(d: dict) -> GFunction:
    if not isinstance(d, dict) or "family" not in d:
        raise ConfigError("g: missing 'family'")
    fam = d["family"]
    if fam not in _G_KEYS:
        raise ConfigError(f"g: unknown family {fam!r}")
    _strict(d, _G_KEYS[fam] | {"family"}, "g")
    missing = _G_KEYS[fam] - set(d)
    if missing:
        raise ConfigError(f"g: missing keys {sorted(missing)}")
    if fam == "constant":
        return Constant(float(d["g0"]))
    if fam == "saturating":
        return Saturating(float(d["alpha"]), float(d["beta"]))
    if fam == "decaying":
        return Decaying(float(d["alpha"]))
    return TableLinear(tuple(tuple(k) for k in d["knots"]))


def _g_to_dict(g: GFunction) -> dict:
    if isinstance(g, TableLinear):
        return {"family": "table", "knots": [list(k) for k in g.knots]}
    return {"family": g.family, **asdict(g)}


def config_from_dict(d: dict) -> ScenarioConfig:
    _strict(d, _TOP_KEYS, "config")
    for key in ("params", "g"):
        if key not in d:
            raise ConfigError(f"config: missing {key!r}")
    pd = d["params"]
    _strict(pd, {"a", "b", "p", "r"}, "params")
    missing = {"a", "b", "p", "r"} - set(pd)
    if missing:
        raise ConfigError(f"params: missing keys {sorted(missing)}")
    kw = {}
    if "continuation" in d:
        _strict(d["continuation"], set(ContinuationSettings.__dataclass_fields__), "continuation")
        kw["continuation"] = ContinuationSettings(**d["continuation"])
    if "tolerances" in d:
        _strict(d["tolerances"], set(ToleranceSettings.__dataclass_fields__), "tolerances")
        kw["tolerances"] = ToleranceSettings(**d["tolerances"])
    if d.get("lambda_window") is not None:
        win = d["lambda_window"]
        if not (isinstance(win, list) and len(win) == 2):
            raise ConfigError("lambda_window: expected [min, max]")
        kw["lambda_window"] = tuple(None if x is None else float(x) for x in win)
    for key in ("mesh_n", "output_dir", "regime", "name"):
        if key in d:
            kw[key] = d[key]
    return ScenarioConfig(
        a=_coef(pd["a"], "params.a"),
        b=_coef(pd["b"], "params.b"),
        p=float(pd["p"]),
        r=float(pd["r"]),
        g=_g_from_dict(d["g"]),
        **kw,
    )


def config_to_dict(cfg: ScenarioConfig) -> dict:
    def coef(c):
        return {"lambda1": c.factor} if isinstance(c, LambdaMultiple) else c

    out = {
        "name": cfg.name,
        "regime": cfg.regime,
        "params": {"a": coef(cfg.a), "b": coef(cfg.b), "p": cfg.p, "r": cfg.r},
        "g": _g_to_dict(cfg.g),
        "mesh_n": cfg.mesh_n,
        "lambda_window": list(cfg.lambda_window) if cfg.lambda_window else None,
        "continuation": asdict(cfg.continuation),
        "tolerances": asdict(cfg.tolerances),
        "output_dir": cfg.output_dir,
    }
    return out


def config_hash(cfg: ScenarioConfig) -> str:
    blob = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def load_config(path) -> ScenarioConfig:
    with open(Path(path), encoding="utf-8") as fh:
        d = json.load(fh)
    return config_from_dict(d)
