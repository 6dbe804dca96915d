"""Pricing jobs described as YAML documents.

Example::

    model: {down: [0.9, 0.85], up: [1.2, 1.3], rho: 1.02, n: 3}
    spot: [1.0, 1.1]
    payoff: {kind: call_on_max, params: {K: 1.0}}
    variant: interval

See ``schema.yaml`` at the repository root for every field.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
import yaml

from ..continuum import ContinuumSpec
from ..errors import GameHedgeError, ValidationError
from ..lattice.costs import transaction_cost_gate
from ..lattice.engines import FAST_PATH_MODES, TREE_BUDGET
from ..lattice.market import CostModel, MarketSpec, proportional_costs
from ..payoffs import PathPayoff, Payoff, lookback_payoff, make_payoff, terminal_path_payoff
from .expr import parse_payoff_expression

VARIANTS = ("european", "american", "lower", "interval", "path_dependent", "costed",
            "nonlinear_jumps", "continuum", "convergence")
LATTICE_FREE = ("continuum", "convergence")
TOP_LEVEL = ("model", "spot", "payoff", "variant", "cost", "continuum", "convergence", "surface",
             "output", "fast_path", "budget")


class ConfigError(ValidationError):
    """One or more fields of a job document are invalid."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


@dataclass
class SurfaceGrid:
    lower: np.ndarray
    upper: np.ndarray
    points: int

    def spots(self) -> np.ndarray:
        axes = [np.linspace(a, b, self.points) for a, b in zip(self.lower, self.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


@dataclass
class JobConfig:
    """Validated pricing job.

    ``document`` keeps the parsed input so summaries can echo it verbatim.
    """

    variant: str
    document: dict
    payoff: Payoff | PathPayoff | None = None
    market: MarketSpec | None = None
    spot: np.ndarray | None = None
    cost: CostModel | None = None
    keep: float | None = None
    v0: np.ndarray | None = None
    continuum: ContinuumSpec | None = None
    steps: list[int] = field(default_factory=list)
    surface: SurfaceGrid | None = None
    fast_path: str = "off"
    tree_budget: int = TREE_BUDGET
    max_iter: int = 200
    output_dir: str | None = None
    output_format: str = "csv"
    warnings: list[str] = field(default_factory=list)

    @property
    def n_assets(self) -> int:
        if self.market is not None:
            return self.market.J
        return self.continuum.J


def _vector(value, name: str, errors: list, length: int | None = None) -> np.ndarray | None:
    try:
        arr = np.atleast_1d(np.asarray(value, dtype=float))
    except (TypeError, ValueError):
        errors.append(f"{name}: expected a number or list of numbers, got {value!r}")
        return None
    if arr.ndim != 1 or (length is not None and arr.size != length):
        want = f"{length} numbers" if length is not None else "a flat list"
        errors.append(f"{name}: expected {want}, got {value!r}")
        return None
    return arr


def _jump_maps(spec, J: int, errors: list):
    maps = []
    for i, row in enumerate(spec):
        exprs = [row] if isinstance(row, str) else list(row)
        if len(exprs) != J:
            errors.append(f"model.jump_maps[{i}]: expected {J} expressions, got {len(exprs)}")
            continue
        try:
            parts = [parse_payoff_expression(str(e), J) for e in exprs]
        except GameHedgeError as exc:
            errors.append(f"model.jump_maps[{i}]: {exc}")
            continue
        maps.append(lambda z, parts=parts: np.array([float(p(z)) for p in parts]))
    return maps


def _market(doc: dict, errors: list) -> MarketSpec | None:
    model = doc.get("model")
    if not isinstance(model, dict):
        errors.append("model: required mapping with down, up, rho, n")
        return None
    missing = [k for k in ("down", "up", "rho", "n") if k not in model]
    if missing:
        errors.append(f"model: missing {', '.join(missing)}")
        return None
    unknown = set(model) - {"down", "up", "rho", "n", "down_steps", "up_steps", "jump_maps"}
    if unknown:
        errors.append(f"model: unknown fields {sorted(unknown)}")
    down = _vector(model["down"], "model.down", errors)
    up = _vector(model["up"], "model.up", errors)
    if down is None or up is None:
        return None
    maps = None
    if model.get("jump_maps") is not None:
        maps = _jump_maps(model["jump_maps"], down.size, errors)
    try:
        return MarketSpec(down, up, model["rho"], model["n"], down_steps=model.get("down_steps"),
                          up_steps=model.get("up_steps"), jump_maps=maps)
    except (GameHedgeError, TypeError, ValueError) as exc:
        errors.append(f"model: {exc}")
        return None


def _payoff(doc: dict, J: int | None, variant: str, errors: list):
    spec = doc.get("payoff")
    if not isinstance(spec, dict):
        errors.append("payoff: required mapping with 'kind' or 'expression'")
        return None
    try:
        if "expression" in spec:
            p = parse_payoff_expression(str(spec["expression"]), J)
        elif spec.get("kind") == "lookback":
            p = lookback_payoff(int(spec.get("asset", 0)))
        elif spec.get("kind") == "custom":
            errors.append("payoff: custom payoffs are given as 'expression'")
            return None
        else:
            p = make_payoff(str(spec.get("kind")), spec.get("params") or {})
    except GameHedgeError as exc:
        errors.append(f"payoff: {exc}")
        return None
    if isinstance(p, PathPayoff) and variant != "path_dependent":
        errors.append("payoff: path payoffs need variant path_dependent")
        return None
    if isinstance(p, Payoff) and J is not None and p.n_assets is not None and p.n_assets != J:
        errors.append(f"payoff: takes {p.n_assets} prices but the model has {J} assets")
        return None
    if variant == "path_dependent" and isinstance(p, Payoff):
        p = terminal_path_payoff(p)
    return p


def parse_config(document) -> JobConfig:
    """Validate a job given as YAML text or an already parsed mapping.

    Raises
    ------
    ConfigError
        With one entry per offending field.
    """
    if isinstance(document, str):
        try:
            doc = yaml.safe_load(document)
        except yaml.YAMLError as exc:
            raise ConfigError([f"document: not valid YAML ({exc})"]) from None
    else:
        doc = document
    if not isinstance(doc, dict):
        raise ConfigError(["document: expected a mapping at the top level"])
    errors: list[str] = []
    unknown = set(doc) - set(TOP_LEVEL)
    if unknown:
        errors.append(f"document: unknown fields {sorted(unknown)}")
    variant = doc.get("variant", "european")
    if variant not in VARIANTS:
        errors.append(f"variant: unknown variant {variant!r}; expected one of {', '.join(VARIANTS)}")
        raise ConfigError(errors)
    cfg = JobConfig(variant=variant, document=doc)

    fast = doc.get("fast_path", "off")
    if fast not in FAST_PATH_MODES:
        errors.append(f"fast_path: expected one of {', '.join(FAST_PATH_MODES)}, got {fast!r}")
    cfg.fast_path = fast

    budget = doc.get("budget") or {}
    cfg.tree_budget = int(budget.get("path_tree", TREE_BUDGET))
    cfg.max_iter = int(budget.get("max_iter", 200))

    output = doc.get("output") or {}
    cfg.output_dir = output.get("dir")
    cfg.output_format = output.get("format", "csv")
    if cfg.output_format not in ("csv", "json"):
        errors.append(f"output.format: expected csv or json, got {cfg.output_format!r}")

    if variant in LATTICE_FREE or "continuum" in doc:
        cs = doc.get("continuum")
        if not isinstance(cs, dict):
            errors.append("continuum: required mapping with sigma, r, T")
        else:
            try:
                cfg.continuum = ContinuumSpec(cs.get("sigma"), float(cs.get("r", 0.0)), float(cs.get("T", 0.0)),
                                              float(cs.get("alpha", 0.5)))
            except (GameHedgeError, TypeError, ValueError) as exc:
                errors.append(f"continuum: {exc}")
    if variant == "convergence":
        steps = (doc.get("convergence") or {}).get("n", [16, 32, 64, 128])
        if not steps or any(int(s) != s or s < 1 for s in steps) or list(steps) != sorted(set(steps)):
            errors.append(f"convergence.n: expected increasing positive integers, got {steps!r}")
        else:
            cfg.steps = [int(s) for s in steps]

    if variant not in LATTICE_FREE:
        cfg.market = _market(doc, errors)
    if variant == "nonlinear_jumps" and cfg.market is not None and cfg.market.jump_maps is None:
        errors.append("model.jump_maps: required for variant nonlinear_jumps")

    J = cfg.market.J if cfg.market is not None else (cfg.continuum.J if cfg.continuum is not None else None)
    if J is not None:
        cfg.spot = _vector(doc.get("spot", [1.0] * J), "spot", errors, J)
        if cfg.spot is not None and np.any(cfg.spot <= 0):
            errors.append("spot: prices must be positive")
    cfg.payoff = _payoff(doc, J, variant, errors)

    if variant == "costed":
        _cost(doc, cfg, errors)

    if "surface" in doc and J is not None:
        sf = doc["surface"] or {}
        lo = _vector(sf.get("lower"), "surface.lower", errors, J)
        hi = _vector(sf.get("upper"), "surface.upper", errors, J)
        pts = sf.get("points", 11)
        if not isinstance(pts, int) or pts < 1:
            errors.append(f"surface.points: expected a positive integer, got {pts!r}")
        elif lo is not None and hi is not None:
            if np.any(lo <= 0) or np.any(hi < lo):
                errors.append("surface: need 0 < lower <= upper")
            else:
                cfg.surface = SurfaceGrid(lo, hi, pts)
    if errors:
        raise ConfigError(errors)
    return cfg


def _cost(doc: dict, cfg: JobConfig, errors: list) -> None:
    spec = doc.get("cost")
    if not isinstance(spec, dict):
        errors.append("cost: required mapping for variant costed")
        return
    kind = spec.get("kind", "proportional")
    if kind == "fixed":
        keep = spec.get("keep")
        if not isinstance(keep, (int, float)) or not 0 < keep <= 1:
            errors.append(f"cost.keep: expected a number in (0, 1], got {keep!r}")
        else:
            cfg.keep = float(keep)
        return
    if kind != "proportional":
        errors.append(f"cost.kind: expected proportional or fixed, got {kind!r}")
        return
    try:
        cfg.cost = proportional_costs(float(spec.get("beta", 0.0)))
    except (GameHedgeError, TypeError, ValueError) as exc:
        errors.append(f"cost.beta: {exc}")
        return
    if cfg.market is not None:
        cfg.v0 = _vector(spec.get("v0", [0.0] * cfg.market.J), "cost.v0", errors, cfg.market.J)
        if cfg.spot is not None:
            gate = transaction_cost_gate(cfg.market, cfg.spot)
            if cfg.cost.beta > 0 and not cfg.cost.beta < gate.beta_max:
                cfg.warnings.append(
                    f"cost.beta={cfg.cost.beta:.6g} is not below the admissible bound {gate.beta_max:.6g}; "
                    "pricing will refuse this job")


def load_config(path: str) -> JobConfig:
    """Read and validate a job file."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"document: cannot read {path} ({exc.strerror})"]) from None
    return parse_config(text)


def plain(obj: Any) -> Any:
    """Convert numpy containers and scalars to plain Python for serialization."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
