"""``ilrd`` command line: simulations, density estimates, experiments, report.

Exit status is 0 on success, 1 on a usage error (nothing is written), and
2 when a numerical error occurs or an evaluated gate fails.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import acceptance as acc
from . import density as dens
from . import empirical, experiments as ex, maps, output, stable
from ._validation import (
    ConvergenceError,
    DomainError,
    InsufficientSignalError,
    LaminarUnderflowError,
    check_count,
    check_gamma,
    check_seed,
)

COMMANDS = ("simulate", "density", "limit", "covdecay", "beta", "maxineq", "trend", "reversal",
            "report")
DEFAULT_N = {"simulate": 1000, "density": 10**7, "limit": 10**5, "covdecay": 10**8, "beta": 256,
             "maxineq": 10**4, "trend": 10**7, "reversal": 10**6, "report": 0}
DEFAULT_R = {"limit": 1000, "maxineq": 500, "trend": 20, "reversal": 500}
PLOT_POINTS = 2000


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    gamma: float = 0.75
    n: int = 0
    burn_in: int = maps.DEFAULT_BURN_IN
    replicates: int = 1
    seed: int = 0
    bins: int = dens.DEFAULT_BINS
    stat: str = "w1"
    delta: float = 1.0
    out: str = "."
    plot: bool = False
    threads: int = 1
    q: int = acc.AUDIT_Q
    x: tuple = acc.AUDIT_X
    baseline_n: int = 0

    def to_json(self):
        return output.canonical_json(asdict(self))

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        data["x"] = tuple(data.get("x", acc.AUDIT_X))
        return cls(**data)

    @property
    def stem(self):
        base = f"{self.command}_g{self.gamma:g}_n{self.n}_s{self.seed}"
        return f"{base}_{self.stat}" if self.command == "limit" else base


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="ilrd", description="Intermittent-map empirical process toolkit.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="flat JSON file of flag values; flags given here win")
    p.add_argument("--gamma", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--bins", type=int)
    p.add_argument("--stat", choices=empirical.STATS)
    p.add_argument("--delta", type=float)
    p.add_argument("--out")
    p.add_argument("--threads", type=int)
    p.add_argument("--plot", action="store_true", default=None)
    p.add_argument("--q", type=int, help="maxineq: block length q")
    p.add_argument("--x", type=float, nargs="+", help="maxineq: threshold grid")
    p.add_argument("--baseline-n", dest="baseline_n", type=int,
                   help="limit: smaller n whose KS must exceed the final one")
    return p


def _defaults(command):
    base = {
        "n": DEFAULT_N[command],
        "replicates": DEFAULT_R.get(command, 1),
        "bins": ex.BETA_BINS if command == "beta" else dens.DEFAULT_BINS,
        "out": os.environ.get("ILRD_OUT", "."),
    }
    return base


def parse_config(argv):
    """Merge defaults, an optional config file and flags into a validated RunConfig."""
    ns = build_parser().parse_args(argv)
    merged = _defaults(ns.command)
    if ns.config:
        try:
            data = json.loads(Path(ns.config).read_text())
        except (OSError, ValueError) as err:
            raise UsageError(f"--config: cannot read {ns.config}: {err}") from None
        names = {f.name for f in fields(RunConfig)} - {"command"}
        unknown = set(data) - names
        if unknown:
            raise UsageError(f"--config: unknown keys {sorted(unknown)}")
        merged.update(data)
    for key, value in vars(ns).items():
        if key not in ("command", "config") and value is not None:
            merged[key] = value
    if "x" in merged:
        merged["x"] = tuple(float(v) for v in merged["x"])
    cfg = RunConfig(command=ns.command, **merged)
    if cfg.command != "report":
        _validate(cfg)
    return cfg


def _validate(cfg):
    checks = (
        ("--gamma", lambda: check_gamma(cfg.gamma)),
        ("--n", lambda: check_count(cfg.n, "n")),
        ("--burn-in", lambda: check_count(cfg.burn_in, "burn_in", minimum=0)),
        ("--replicates", lambda: check_count(cfg.replicates, "replicates")),
        ("--seed", lambda: check_seed(cfg.seed)),
        ("--bins", lambda: check_count(cfg.bins, "bins", minimum=2)),
        ("--threads", lambda: check_count(cfg.threads, "threads")),
        ("--stat", lambda: empirical.check_stat(cfg.stat)),
    )
    for flag, check in checks:
        try:
            check()
        except DomainError as err:
            raise UsageError(f"{flag}: {err}") from None
    long_range = ("limit", "trend")
    if cfg.command in long_range and not 0.5 <= cfg.gamma < 1.0:
        raise UsageError(f"--gamma: {cfg.command} needs gamma in [1/2, 1)")
    if cfg.command == "trend" and not cfg.delta > cfg.gamma:
        raise UsageError("--delta: must exceed gamma")
    if cfg.command == "limit" and cfg.replicates < ex.MIN_REPLICATES:
        raise UsageError(f"--replicates: limit needs at least {ex.MIN_REPLICATES}")
    if cfg.command == "maxineq":
        if cfg.replicates < ex.MIN_AUDIT_REPLICATES:
            raise UsageError(f"--replicates: maxineq needs at least {ex.MIN_AUDIT_REPLICATES}")
        if cfg.q > cfg.n or min(cfg.x) < cfg.q:
            raise UsageError("--x: every threshold must be >= q, and q <= n")
    if cfg.command == "covdecay" and cfg.n < ex.MIN_COVARIANCE_LENGTH:
        raise UsageError(f"--n: covdecay needs at least {ex.MIN_COVARIANCE_LENGTH}")
    if cfg.command == "trend" and cfg.n < 10**3:
        raise UsageError("--n: trend needs a final checkpoint of at least 1000")


# ------------------------------------------------------------------ commands


def _summary(cfg, metrics, gates=(), flags=None):
    flags = dict(flags or {})
    for g in gates:
        for c in g.checks:
            flags[f"{g.part}:{c.name}"] = c.passed
    return {
        "experiment": cfg.command,
        "params": json.loads(cfg.to_json()),
        "seed": cfg.seed,
        "metrics": metrics,
        "flags": flags,
        "passed": all(flags.values()) if flags else True,
        "gates": [g.to_dict() for g in gates],
    }


def _tag(gate, criterion, matches):
    """Keep the gate's criterion number only when the run is the acceptance run."""
    if matches:
        return gate
    return acc.Gate(0, gate.part, gate.checks, gate.metrics)


_INCIDENTAL = ("out", "plot", "threads")


def _key(cfg):
    return {k: v for k, v in asdict(cfg).items() if k not in _INCIDENTAL}


def _acceptance_match(cfg, criterion):
    return any(_key(parse_config(argv)) == _key(cfg) for argv in acc.RUNS.get(criterion, ()))


def _downsample(y, k=PLOT_POINTS):
    idx = np.unique(np.linspace(0, len(y) - 1, min(k, len(y))).astype(int))
    return idx, np.asarray(y)[idx]


def cmd_simulate(cfg, out):
    orbit = maps.generate_orbit(cfg.gamma, cfg.n, cfg.burn_in, cfg.seed)
    orbit.save(out / f"{cfg.stem}.ilrd")
    orbit.to_csv(out / f"{cfg.stem}.csv")
    if cfg.plot:
        output.svg_polyline({"x_k": orbit.values}, out / f"{cfg.stem}.svg",
                            title=f"time series, gamma={cfg.gamma:g}", y_range=(0.0, 1.0))
    v = orbit.values
    return _summary(cfg, {"mean": float(v.mean()), "min": float(v.min()), "max": float(v.max())})


def cmd_density(cfg, out):
    ulam, d, sup, secs = acc.density_run(cfg.gamma, cfg.bins, cfg.n, cfg.seed)
    d_csv = d.to_csv()
    (out / f"{cfg.stem}_h.csv").write_text(d_csv)
    report = dens.shape_report(d, acc.MONOTONE_SLACK, acc.XGAMMA_RATIO_MAX)
    metrics = {"h_half": d.h_half, "mean_x": d.mean_x, "row_error": ulam.row_error,
               "ecdf_sup": sup, "seconds": secs,
               "residual": dens.stationarity_residual(ulam, d), **report}
    gates = [_tag(acc.density_gate(cfg.gamma, ulam, d, sup, secs), 1, _acceptance_match(cfg, 1))]
    if cfg.gamma == acc.DOUBLING_GAMMA:
        gates.append(_tag(acc.doubling_gate(d, cfg.bins), 2, _acceptance_match(cfg, 2)))
        metrics["max_dev_from_1"] = acc.doubling_deviation(d, cfg.bins)
    if cfg.plot:
        h = dens.bin_masses(d, cfg.bins) * cfg.bins
        idx, hs = _downsample(h)
        output.svg_polyline({"h": (idx / cfg.bins, np.log10(hs))}, out / f"{cfg.stem}.svg",
                            title=f"log10 h, gamma={cfg.gamma:g}")
    return _summary(cfg, metrics, gates)


def cmd_limit(cfg, out):
    d = dens.ulam_density(cfg.gamma, cfg.bins)
    gauss = cfg.gamma == 0.5
    base = cfg.baseline_n or (acc.GAUSS_N[0] if gauss else acc.STABLE_N[0])
    limit = acc.GAUSS_KS_MAX if gauss else acc.STABLE_KS_MAX
    table, samples, refs = acc.limit_ks_table(cfg.gamma, (base, cfg.n), cfg.replicates,
                                              (cfg.stat,), cfg.seed, d, threads=cfg.threads)
    ks_small, ks = table[cfg.stat]
    sample = samples[cfg.n][cfg.stat]
    ref = refs[cfg.stat]
    header = ("replicate", "seed", "n", "gamma", "stat_name", "raw", "normalized")
    output.write_csv(out / f"{cfg.stem}.csv", header, sample.rows())
    output.write_csv(out / f"{cfg.stem}_ref.csv", header,
                     ((r, cfg.seed, cfg.n, cfg.gamma, f"{cfg.stat}_ref", v, v)
                      for r, v in enumerate(ref)))
    criterion = 6 if gauss else 5
    gate = acc.limit_gate(criterion, cfg.stat, ks_small, ks, base, cfg.n, limit)
    gate = _tag(gate, criterion, _acceptance_match(cfg, criterion))
    if cfg.plot:
        a, fa = output.ecdf_points(sample.values)
        b, fb = output.ecdf_points(ref)
        hi = float(np.quantile(ref, 0.99))
        output.svg_polyline({"sample": (np.minimum(a, hi), fa), "reference": (np.minimum(b, hi), fb)},
                            out / f"{cfg.stem}.svg", title=f"ECDF {cfg.stat}, gamma={cfg.gamma:g}")
    metrics = {"ks_to_reference": ks, "ks_baseline": ks_small, "baseline_n": base,
               "limit_constant": stable.limit_constant(cfg.gamma, d, cfg.stat),
               "normalization": sample.normalization, "median": float(np.median(sample.values))}
    return _summary(cfg, metrics, [gate], {"pass": gate.passed})


def cmd_covdecay(cfg, out):
    fit = ex.covariance_decay(cfg.gamma, None, ex.DEFAULT_LAGS, cfg.n, cfg.seed, burn_in=cfg.burn_in)
    output.write_csv(out / f"{cfg.stem}.csv", ("lag", "rho", "stderr", "used"),
                     zip(fit.lags.tolist(), fit.rho, fit.stderr, fit.used.astype(int).tolist()))
    if cfg.plot:
        output.svg_polyline({"log|rho|": (np.log10(fit.lags), np.log10(np.abs(fit.rho)))},
                            out / f"{cfg.stem}.svg", title="covariance decay (log-log)")
    gate = _tag(acc.covariance_gate(fit), 3, _acceptance_match(cfg, 3))
    metrics = {"slope": fit.slope, "slope_stderr": fit.slope_stderr,
               "expected_slope": fit.expected_slope, "usable_lags": int(fit.used.sum())}
    return _summary(cfg, metrics, [gate])


def cmd_beta(cfg, out):
    prof = ex.beta_profile(cfg.gamma, cfg.bins, cfg.n)
    output.write_csv(out / f"{cfg.stem}.csv", ("k", "beta"), zip(prof.lags.tolist(), prof.beta_values))
    if cfg.plot:
        output.svg_polyline({"log beta": (np.log10(prof.lags + 1.0), np.log10(prof.beta_values))},
                            out / f"{cfg.stem}.svg", title="beta(k) (log-log)")
    metrics = {"beta0": prof.beta_values[0], "non_increasing": prof.is_non_increasing(),
               "expected_slope": prof.expected_slope}
    gates = []
    if cfg.n >= acc.BETA_WINDOW[1]:
        metrics["slope"] = prof.slope(*acc.BETA_WINDOW)[0]
        gates.append(_tag(acc.beta_gate(prof), 4, _acceptance_match(cfg, 4)))
    return _summary(cfg, metrics, gates)


def cmd_maxineq(cfg, out):
    d = dens.ulam_density(cfg.gamma, dens.DEFAULT_BINS)
    audit = ex.maximal_inequality_audit(cfg.gamma, cfg.n, cfg.q, cfg.x, cfg.replicates, cfg.seed,
                                        density=d, threads=cfg.threads)
    output.write_csv(out / f"{cfg.stem}.csv", ("x", "lhs", "rhs"), zip(audit.x, audit.lhs, audit.rhs))
    output.write_csv(out / f"{cfg.stem}_maxima.csv", ("replicate", "max_norm"),
                     enumerate(audit.maxima))
    gate = _tag(acc.audit_gate(audit), 8, _acceptance_match(cfg, 8))
    return _summary(cfg, {"lhs": audit.lhs, "rhs": audit.rhs, "holds": audit.holds}, [gate])


def cmd_trend(cfg, out):
    cps = [c for c in ex.DEFAULT_CHECKPOINTS if c < cfg.n] + [cfg.n]
    ratios, paths = acc.trend_ratios(cfg.gamma, cfg.delta, cfg.replicates, cfg.seed, cps)
    rows = ((r, int(n), v) for r, p in enumerate(paths) for n, v in p)
    output.write_csv(out / f"{cfg.stem}.csv", ("replicate", "n", "value"), rows)
    if cfg.plot:
        series = {f"r{r}": (np.log10(p[:, 0]), p[:, 1]) for r, p in enumerate(paths[:4])}
        output.svg_polyline(series, out / f"{cfg.stem}.svg", title="a.s. trend")
    gates = []
    if cfg.replicates == acc.TREND_SEEDS:
        gates.append(_tag(acc.trend_gate(ratios), 10, _acceptance_match(cfg, 10)))
    return _summary(cfg, {"ratios": ratios, "median_ratio": float(np.median(ratios))}, gates)


def cmd_reversal(cfg, out):
    d = dens.ulam_density(cfg.gamma, cfg.bins)
    rep = ex.reversal_check(cfg.gamma, cfg.n, cfg.replicates, cfg.seed, density=d,
                            threads=cfg.threads)
    output.write_csv(out / f"{cfg.stem}.csv", ("replicate", "forward_max", "backward_max"),
                     zip(range(rep.R), rep.forward_maxima, rep.backward_maxima))
    gate = _tag(acc.reversal_gate(rep), 9, _acceptance_match(cfg, 9))
    metrics = {"marginal_ks": rep.marginal_ks, "corr_gap": rep.corr_gap,
               "domination_margin": rep.domination_margin, "path_length": rep.path_length}
    return _summary(cfg, metrics, [gate])


def expected_files(out):
    return {k: [Path(out) / f"{parse_config(argv + ['--out', str(out)]).stem}.json" for argv in runs]
            for k, runs in acc.RUNS.items()}


def cmd_report(cfg, out):
    """Collate acceptance gates from prior runs; criteria 7 and 11 run inline."""
    files = expected_files(out)
    missing = [str(p) for ps in files.values() for p in ps if not p.exists()]
    if missing:
        raise FileNotFoundError("missing inputs:\n  " + "\n  ".join(missing))
    gates = []
    for k in sorted(acc.TITLES):
        if k in acc.INLINE:
            gates.extend(acc.CRITERIA[k](acc.SEED))
            continue
        for p in files[k]:
            data = json.loads(p.read_text())
            gates.extend(acc.Gate.from_dict(g) for g in data["gates"] if g["criterion"] == k)
    verdicts = {k: acc.combine(k, gates) for k in sorted(acc.TITLES)}
    failed = [f"{k} ({acc.TITLES[k]})" for k, ok in verdicts.items() if not ok]
    summary = "PASS" if not failed else "FAIL: " + ", ".join(failed)
    lines = ["# Acceptance report", "", summary, ""]
    lines += [f"- {g.line()}" for g in gates]
    (out / "report.md").write_text("\n".join(lines) + "\n")
    doc = {"summary": summary, "criteria": {str(k): v for k, v in verdicts.items()},
           "gates": [g.to_dict() for g in gates]}
    output.write_json(out / "report.json", doc)
    print(summary)
    return None if not failed else doc


HANDLERS = {
    "simulate": cmd_simulate, "density": cmd_density, "limit": cmd_limit,
    "covdecay": cmd_covdecay, "beta": cmd_beta, "maxineq": cmd_maxineq, "trend": cmd_trend,
    "reversal": cmd_reversal, "report": cmd_report,
}


def run(argv):
    try:
        cfg = parse_config(argv)
    except UsageError as err:
        print(f"ilrd: usage error: {err}", file=sys.stderr)
        return 1
    out = Path(cfg.out)
    if cfg.command == "report":
        if not out.is_dir():
            print(f"ilrd: missing inputs: output directory {out} does not exist", file=sys.stderr)
            return 1
        try:
            failed = cmd_report(cfg, out)
        except FileNotFoundError as err:
            print(f"ilrd: {err}", file=sys.stderr)
            return 1
        return 0 if failed is None else 2
    out.mkdir(parents=True, exist_ok=True)
    try:
        summary = HANDLERS[cfg.command](cfg, out)
    except (ConvergenceError, LaminarUnderflowError, InsufficientSignalError, FloatingPointError) as err:
        summary = _summary(cfg, {"error": f"{type(err).__name__}: {err}"}, flags={"numerical": False})
        output.write_json(out / f"{cfg.stem}.json", summary)
        print(f"ilrd: numerical failure: {err}", file=sys.stderr)
        return 2
    output.write_json(out / f"{cfg.stem}.json", summary)
    for g in summary["gates"]:
        print(acc.Gate.from_dict(g).line())
    return 0 if summary["passed"] else 2


def main(argv=None):
    sys.exit(run(sys.argv[1:] if argv is None else argv))
