"""Experiment configuration: schema validation, defaults and object builders.

A configuration is a JSON object checked against the schema shipped in
``douglab/schema/config.schema.json`` (unknown keys are rejected). After
validation, :func:`normalize` fills in defaults and canonicalizes numeric
types, so that ``emit(parse(emit(cfg)))`` reproduces ``emit(cfg)`` byte for
byte.
"""

from __future__ import annotations

import copy
import json
from importlib import resources
from typing import Any, Dict

import jsonschema
import numpy as np

from .errors import ConfigError
from .model import NoiseModel, Problem, linear_operator, logcosh_operator, quadratic_certificate, saturating_operator
from .schedule import StepSchedule
from .sim import CheckpointPlan, geometric_plan

__all__ = ["schema", "parse", "emit", "normalize", "load", "build_problem", "build_schedule", "build_plan", "x0_of"]

_DEFAULT_A_GRID = [0.5, 1.0, 1.5, 2.0]


def schema() -> dict:
    """The published JSON schema."""
    text = resources.files("douglab").joinpath("schema/config.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def _floats(v):
    if isinstance(v, list):
        return [_floats(x) for x in v]
    return float(v)


def _dim(cfg) -> int:
    op = cfg["problem"]["operator"]
    M = op.get("hessian") if op["kind"] == "logcosh_gradient" else op.get("jacobian")
    if M is None:
        M = cfg["problem"]["noise"]["sigma_b"]
    return len(M)


def normalize(cfg: Dict[str, Any]) -> Dict[str, Any]:
    """Validate ``cfg`` and return a copy with every default filled in.

    Raises
    ------
    ConfigError
        On schema violations or missing operator fields.
    """
    try:
        jsonschema.validate(cfg, schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise ConfigError(f"config invalid at '{path}': {exc.message}") from None
    c = copy.deepcopy(cfg)
    op = c["problem"]["operator"]
    kind = op["kind"]
    needed = {"linear": ["jacobian"], "saturating_power": ["jacobian", "R1", "delta"],
              "logcosh_gradient": ["hessian", "eps"]}[kind]
    missing = [k for k in needed if k not in op]
    if missing:
        raise ConfigError(f"operator kind {kind!r} needs {', '.join(missing)}")
    extra = {"linear": {"hessian", "R1", "delta", "s", "eps"},
             "saturating_power": {"hessian", "eps"},
             "logcosh_gradient": {"jacobian", "R1", "delta", "s"}}[kind] & set(op)
    if extra:
        raise ConfigError(f"operator kind {kind!r} does not take {', '.join(sorted(extra))}")
    d = _dim(c)
    for key in ("jacobian", "hessian"):
        if key in op:
            op[key] = _floats(op[key])
    for key in ("R1", "delta", "eps"):
        if key in op:
            op[key] = float(op[key])
    if kind == "saturating_power":
        op["s"] = float(op.get("s", 1.0))
    op["x_star"] = _floats(op.get("x_star", [0.0] * d))
    nz = c["problem"]["noise"]
    nz["sigma_b"] = _floats(nz["sigma_b"])
    nz.setdefault("multiplicative", "none")
    nz["multiplicative_scale"] = float(nz.get("multiplicative_scale", 0.0))
    if "certificate" in c["problem"]:
        c["problem"]["certificate"]["P"] = _floats(c["problem"]["certificate"]["P"])
    sc = c["schedule"]
    sc["alpha"] = float(sc["alpha"])
    sc["K"] = int(sc.get("K", 1))
    sc["xi"] = float(sc.get("xi", 0.0))
    c["x0"] = _floats(c.get("x0", [0.0] * d))
    c["horizon"] = int(c.get("horizon", 10000))
    cp = c.setdefault("checkpoints", {})
    if "indices" in cp:
        cp["indices"] = [int(i) for i in cp["indices"]]
    else:
        cp["factor"] = float(cp.get("factor", 2.0))
        cp["start"] = int(cp.get("start", sc["K"]))
    c["replicas"] = int(c.get("replicas", 1000))
    c.setdefault("process", "sa")
    w = c.setdefault("w1", {})
    w.setdefault("method", "auto")
    w["n_gauss"] = int(w.get("n_gauss", 0))
    w["n_projections"] = int(w.get("n_projections", 256))
    w["bootstrap"] = int(w.get("bootstrap", 200))
    w["floor_reps"] = int(w.get("floor_reps", 1))
    if "zeta" in w:
        w["zeta"] = _floats(w["zeta"])
    r = c.setdefault("rates", {})
    r["min_points"] = int(r.get("min_points", 6))
    t = c.setdefault("tails", {})
    t["a_grid"] = _floats(t.get("a_grid", _DEFAULT_A_GRID))
    t["zeta"] = _floats(t.get("zeta", [1.0] + [0.0] * (d - 1)))
    b = c.setdefault("bounds", {})
    b["C2"] = float(b.get("C2", 2.0))
    for key in ("E0", "Ev0"):
        if key in b:
            b[key] = float(b[key])
    cl = c.setdefault("clt", {})
    cl["constant"] = float(cl.get("constant", 1.0))
    if "alpha_grid" in cl:
        cl["alpha_grid"] = _floats(cl["alpha_grid"])
    c["seed"] = int(c.get("seed", 0))
    c.setdefault("output_dir", "out")
    return c


def parse(text: str) -> Dict[str, Any]:
    """Parse and normalize a JSON configuration string."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return normalize(raw)


def emit(cfg: Dict[str, Any]) -> str:
    """Canonical JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(cfg, sort_keys=True, indent=2) + "\n"


def load(path) -> Dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def build_problem(cfg) -> Problem:
    """Construct the :class:`~douglab.model.Problem` described by ``cfg``."""
    pr = cfg["problem"]
    op_cfg = pr["operator"]
    try:
        if op_cfg["kind"] == "linear":
            op = linear_operator(op_cfg["jacobian"], op_cfg["x_star"])
        elif op_cfg["kind"] == "saturating_power":
            op = saturating_operator(op_cfg["jacobian"], op_cfg["R1"], op_cfg["delta"], op_cfg["s"], op_cfg["x_star"])
        else:
            op = logcosh_operator(op_cfg["hessian"], op_cfg["eps"], op_cfg["x_star"])
        nz = pr["noise"]
        nm = NoiseModel(nz["additive"], np.asarray(nz["sigma_b"]), nz["multiplicative"], nz["multiplicative_scale"])
        cert = quadratic_certificate(op, np.asarray(pr["certificate"]["P"])) if "certificate" in pr else None
        return Problem(op, nm, cert)
    except ConfigError:
        raise
    except (ValueError, ArithmeticError) as exc:
        raise ConfigError(f"problem specification rejected: {exc}") from None


def build_schedule(cfg) -> StepSchedule:
    sc = cfg["schedule"]
    try:
        s = StepSchedule(sc["alpha"], sc["K"], sc["xi"])
        s.check_unit_step()
    except ValueError as exc:
        raise ConfigError(f"schedule rejected: {exc}") from None
    return s


def build_plan(cfg) -> CheckpointPlan:
    cp = cfg["checkpoints"]
    try:
        if "indices" in cp:
            return CheckpointPlan(tuple(cp["indices"]))
        return geometric_plan(cfg["horizon"], start=cp["start"], factor=cp["factor"])
    except ValueError as exc:
        raise ConfigError(f"checkpoint plan rejected: {exc}") from None


def x0_of(cfg) -> np.ndarray:
    return np.asarray(cfg["x0"], dtype=float)
