"""``doug-lab`` command line interface.

Usage::

    doug-lab <simulate|doug|w1|bounds|rates|tails|clt|verify> --config cfg.json
             [--out DIR] [--seed N] [--threads N]

Exit codes: 0 success, 1 verification failure, 2 configuration or input
error, 3 divergence. Data tables are CSV with a header row and
shortest-round-trip float formatting; reports are JSON.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import analysis, bounds, config
from .errors import ConfigError, Diverged, DougLabError, HypothesisViolated, InvalidRho, TooManyDiverged
from .linalg import v_norm
from .schedule import StepSchedule, step, validate
from .sim import RandomStream, monte_carlo
from .transport import directional_tail

__all__ = ["main", "fmt", "write_csv"]

COMMANDS = ("simulate", "doug", "w1", "bounds", "rates", "tails", "clt", "verify")
EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3


def fmt(x) -> str:
    """Shortest decimal string that round-trips to the same float."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return repr(float(x))


def csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    path.write_text(csv_text(header, rows), encoding="utf-8")


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)!r}")


def _finite_or_none(x):
    x = float(x)
    return x if math.isfinite(x) else None


# --------------------------------------------------------------------------
# experiment plumbing


class Context:
    """Resolved configuration plus derived objects for one invocation."""

    def __init__(self, cfg, out: Path, threads: Optional[int]):
        self.cfg = cfg
        self.out = out
        self.threads = threads
        self.problem = config.build_problem(cfg)
        self.schedule = config.build_schedule(cfg)
        self.plan = config.build_plan(cfg)
        self.x0 = config.x0_of(cfg)
        self.seed = cfg["seed"]
        if self.x0.size != self.problem.dim:
            raise ConfigError(f"x0 has length {self.x0.size}, problem dimension is {self.problem.dim}")

    @property
    def dim(self) -> int:
        return self.problem.dim

    def run(self, process: Optional[str] = None, schedule: Optional[StepSchedule] = None):
        process = process or self.cfg["process"]
        s = schedule or self.schedule
        kw = dict(schedule=s, plan=self.plan)
        if process in ("sa", "coupled"):
            kw.update(problem=self.problem, x0=self.x0)
        elif process == "doug":
            kw.update(J=self.problem.operator.jacobian, noise=self.problem.noise)
        else:
            kw.update(noise=self.problem.noise, x0=self.x0)
        return monte_carlo(process, self.cfg["replicas"], RandomStream(self.seed), threads=self.threads, **kw)

    def target_covariance(self, process: str, schedule: Optional[StepSchedule] = None):
        s = schedule or self.schedule
        Sb = self.problem.noise.sigma_b
        if process == "averaging":
            return analysis.averaging_covariance(Sb, s)
        return analysis.limit_covariance(self.problem.operator.jacobian, Sb, s)

    def w1_kwargs(self, zeta=None):
        w = self.cfg["w1"]
        d = 1 if zeta is not None else self.dim
        method = w["method"]
        if method == "auto":
            method = "exact_1d" if d == 1 else "sliced"
        return dict(method=method, n_gauss=w["n_gauss"] or None, n_projections=w["n_projections"],
                    bootstrap=w["bootstrap"], floor_reps=w["floor_reps"], zeta=zeta)

    def w1_table(self, process: Optional[str] = None, schedule=None, batch=None):
        process = process or self.cfg["process"]
        batch = batch if batch is not None else self.run(process, schedule)
        which = "y"
        zeta = self.cfg["w1"].get("zeta")
        rows = analysis.w1_rows(batch, which, self.target_covariance(process, schedule), self.seed,
                                **self.w1_kwargs(zeta))
        return batch, rows


W1_HEADER = ("k", "alpha_k", "w1", "stderr", "bias_floor", "method")


def _w1_csv_rows(rows):
    return [(r.k, r.alpha_k, r.w1, r.stderr, r.bias_floor, r.method) for r in rows]


def _summary_header(d: int):
    head = ["k", "alpha_k"] + [f"mean_{i}" for i in range(d)]
    head += [f"cov_{i}_{j}" for i in range(d) for j in range(i, d)]
    return head + ["second_moment", "mse"]


def _summary_rows(batch, process: str):
    out = []
    for k, ak, mean, cov, msq in batch.summary_rows("y"):
        d = mean.size
        mse = msq if process == "doug" else ak * msq
        out.append([k, ak, *mean.tolist(), *[cov[i, j] for i in range(d) for j in range(i, d)], msq, mse])
    return out


def cmd_simulate(ctx: Context, process: Optional[str] = None) -> int:
    process = process or ctx.cfg["process"]
    batch = ctx.run(process)
    write_csv(ctx.out / "trajectory.csv", _summary_header(ctx.dim), _summary_rows(batch, process))
    (ctx.out / "batch.bin").write_bytes(batch.to_bytes())
    if batch.diverged:
        write_json(ctx.out / "diverged.json", {str(k): v for k, v in sorted(batch.diverged.items())})
    return EXIT_OK


def cmd_doug(ctx: Context) -> int:
    return cmd_simulate(ctx, "doug")


def cmd_w1(ctx: Context) -> int:
    _, rows = ctx.w1_table()
    write_csv(ctx.out / "w1.csv", W1_HEADER, _w1_csv_rows(rows))
    return EXIT_OK


def _fit(ctx: Context, rows, K: int) -> analysis.RateFit:
    win = ctx.cfg["rates"].get("window")
    return analysis.fit_rate([r.k for r in rows], K, [r.w1 for r in rows], [r.bias_floor for r in rows],
                             window=tuple(win) if win else None, min_points=ctx.cfg["rates"]["min_points"])


def cmd_rates(ctx: Context) -> int:
    _, rows = ctx.w1_table()
    write_csv(ctx.out / "w1.csv", W1_HEADER, _w1_csv_rows(rows))
    write_json(ctx.out / "rates.json", _fit(ctx, rows, ctx.schedule.K).to_dict())
    return EXIT_OK


def _initial_errors(ctx: Context, spec):
    b = ctx.cfg["bounds"]
    u0 = ctx.x0 - ctx.problem.x_star
    E0 = b.get("E0", float(u0 @ u0))
    Ev0 = b.get("Ev0", v_norm(u0, spec.V))
    return E0, Ev0


def _report_dict(rep: bounds.BoundReport, k, ak):
    d = rep.to_dict()
    d["alpha_k"] = ak
    d["terms"] = [{"label": t["label"], "value": _finite_or_none(t["value"])} for t in d["terms"]]
    d["total"] = _finite_or_none(d["total"])
    return d


def cmd_bounds(ctx: Context) -> int:
    s, p = ctx.schedule, ctx.problem
    pc = bounds.problem_constants(p)
    spec = bounds.spectral_constants(p.operator.jacobian, p.noise.sigma_b, s, pc.gamma)
    stein = bounds.SteinConstants(p.dim, ctx.cfg["bounds"]["C2"])
    E0, Ev0 = _initial_errors(ctx, spec)
    adm = validate(s, pc, spec)
    out = {"schedule": {"alpha": s.alpha, "K": s.K, "xi": s.xi}, "C2": stein.C2, "E0": E0, "Ev0": Ev0,
           "admissibility": adm.to_dict(), "hypotheses_ok": adm.ok,
           "constants": {"gamma": pc.gamma, "iota_V": spec.iota_V, "eta": spec.eta, "lambda_max": spec.lambda_max,
                         "lambda_min": spec.lambda_min, "alpha0_cap": pc.alpha0_cap},
           "checkpoints": []}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HypothesisViolated)
        for k in ctx.plan.indices:
            ak = float(step(s, k))
            out["checkpoints"].append({
                "k": k,
                "alpha_k": ak,
                "mse_bound": _finite_or_none(bounds.mse_bound(k, s, pc, E0)),
                "coupling_bound": _finite_or_none(bounds.coupling_bound(k, s, spec, pc, E0)),
                "doug_w1": _report_dict(bounds.doug_w1_bound(k, s, p.operator.jacobian, p.noise.sigma_b, spec,
                                                             stein, pc), k, ak),
                "sa_w1": _report_dict(bounds.sa_w1_bound(k, s, spec, pc, stein, E0, Ev0), k, ak),
            })
    write_json(ctx.out / "bounds.json", out)
    return EXIT_OK


TAILS_HEADER = ("a", "p_hat", "ci_lo", "ci_hi", "gauss_ccdf", "sandwich_lo", "sandwich_hi",
                "bound_sandwich_lo", "bound_sandwich_hi")


def cmd_tails(ctx: Context) -> int:
    t = ctx.cfg["tails"]
    zeta = np.asarray(t["zeta"], dtype=float)
    if zeta.size != ctx.dim:
        raise ConfigError(f"tails.zeta has length {zeta.size}, problem dimension is {ctx.dim}")
    zeta = zeta / np.linalg.norm(zeta)
    k = t.get("k", ctx.plan.horizon)
    if k not in ctx.plan.indices:
        raise ConfigError(f"tails.k = {k} is not a checkpoint")
    process = ctx.cfg["process"]
    batch = ctx.run(process)
    j = ctx.plan.indices.index(k)
    Y = batch.y[:, j, :]
    Sigma = ctx.target_covariance(process)
    meas = analysis.measure_w1(Y, Sigma, ctx.seed, j, **ctx.w1_kwargs())
    s, p = ctx.schedule, ctx.problem
    pc = bounds.problem_constants(p)
    spec = bounds.spectral_constants(p.operator.jacobian, p.noise.sigma_b, s, pc.gamma)
    E0, Ev0 = _initial_errors(ctx, spec)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HypothesisViolated)
        theory = bounds.sa_w1_bound(k, s, spec, pc, bounds.SteinConstants(p.dim, ctx.cfg["bounds"]["C2"]),
                                    E0, Ev0).total
    rows = []
    for a in t["a_grid"]:
        p_hat, lo, hi = directional_tail(Y, zeta, a)
        gc = float(bounds.gaussian_ccdf(a / math.sqrt(float(zeta @ Sigma @ zeta))))
        s_lo, s_hi = bounds.tail_sandwich(a, zeta, k, meas.w1, Sigma)
        try:
            b_lo, b_hi = bounds.tail_sandwich(a, zeta, k, theory, Sigma)
        except InvalidRho:
            b_lo = b_hi = float("nan")
        rows.append((a, p_hat, lo, hi, gc, s_lo, s_hi, b_lo, b_hi))
    write_csv(ctx.out / "tails.csv", TAILS_HEADER, rows)
    write_json(ctx.out / "tails.json", {"k": k, "w1_measured": meas.w1, "bias_floor": meas.bias_floor,
                                        "sa_w1_bound": _finite_or_none(theory), "zeta": zeta.tolist()})
    return EXIT_OK


def cmd_clt(ctx: Context) -> int:
    if ctx.problem.noise.has_multiplicative:
        raise ConfigError("clt needs additive-only noise")
    s = ctx.schedule
    _, rows = ctx.w1_table("averaging")
    write_csv(ctx.out / "clt_w1.csv", W1_HEADER, _w1_csv_rows(rows))
    report = {"target_covariance": ctx.target_covariance("averaging").tolist()}
    try:
        report["fit"] = _fit(ctx, rows, s.K).to_dict()
    except DougLabError as exc:
        report["fit"] = None
        report["fit_error"] = str(exc)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HypothesisViolated)
        report["rate_shell"] = [{"k": r.k, "value": bounds.clt_rate(r.k, s, ctx.cfg["clt"]["constant"])}
                                for r in rows]
    grid = ctx.cfg["clt"].get("alpha_grid")
    if grid:
        sweep = []
        for a in grid:
            sa = StepSchedule(a, s.K, s.xi)
            _, rws = ctx.w1_table("averaging", sa)
            last = rws[-1]
            sweep.append({"alpha": a, "w1": last.w1, "bias_floor": last.bias_floor, "k": last.k})
        ex = np.array([r["w1"] - r["bias_floor"] for r in sweep])
        al = np.array([r["alpha"] for r in sweep])
        ok = ex > 0
        fit = None
        if ok.sum() >= 2:
            slope, intercept = np.polyfit(np.log(al[ok]), np.log(ex[ok]), 1)
            fit = {"slope": float(slope), "intercept": float(intercept), "n_points": int(ok.sum())}
        report["alpha_sweep"] = {"points": sweep, "fit": fit}
    write_json(ctx.out / "clt_rates.json", report)
    return EXIT_OK


def cmd_verify(out: Path, suites: List[str], seed: Optional[int]) -> int:
    from . import verify

    results = verify.run(suites or None, seed=seed)
    write_json(out / "verify.json", {"passed": all(r.passed for r in results),
                                     "results": [r.to_dict() for r in results]})
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.id} ({r.seconds:.1f}s){'' if r.passed else ': ' + r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


HANDLERS = {"simulate": cmd_simulate, "doug": cmd_doug, "w1": cmd_w1, "bounds": cmd_bounds,
            "rates": cmd_rates, "tails": cmd_tails, "clt": cmd_clt}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="doug-lab", description="SA / DOUG Gaussian-approximation laboratory")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="experiment configuration (JSON)")
    ap.add_argument("--out", help="output directory (overrides output_dir)")
    ap.add_argument("--seed", type=int, help="master seed (overrides the config)")
    ap.add_argument("--threads", type=int, help="worker threads (default: DOUG_LAB_THREADS or 1)")
    ap.add_argument("--suite", action="append", default=[], help="verify only this suite (repeatable)")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            out = Path(args.out or ".")
            out.mkdir(parents=True, exist_ok=True)
            return cmd_verify(out, args.suite, args.seed)
        if not args.config:
            raise ConfigError("--config is required")
        cfg = config.load(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be nonnegative")
            cfg["seed"] = args.seed
        out = Path(args.out or cfg["output_dir"])
        out.mkdir(parents=True, exist_ok=True)
        threads = args.threads
        if threads is None and "threads" in cfg:
            threads = cfg["threads"]
        ctx = Context(cfg, out, threads)
        (out / "config.json").write_text(config.emit(cfg), encoding="utf-8")
        return HANDLERS[args.command](ctx)
    except (Diverged, TooManyDiverged) as exc:
        print(f"doug-lab: divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ConfigError as exc:
        print(f"doug-lab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DougLabError, ValueError) as exc:
        print(f"doug-lab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
