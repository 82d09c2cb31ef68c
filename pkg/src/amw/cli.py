"""Command-line front end.

Exit codes: 0 success, 1 domain error (error JSON on stderr), 2 usage
error.  Every output is a pure function of the input file, the flags and
the seed; ``--threads`` changes only the wall time.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import __version__
from .balance import DENOMINATORS, balance_table
from .bootstrap import run_estimate
from .data import EstimandKind, EstimatorKind, ModelSpec, load_csv
from .errors import AmwError, InvalidArgument
from .estimators import resolve_k
from .kselect import select_k
from .nuisance import fit_nuisance
from .simulation import (
    SETTINGS,
    DgpConfig,
    Scenario,
    k_profile,
    replicates_csv,
    run_scenario,
    summaries_csv,
    summaries_json,
)

_DATA = ("input", "y", "a", "x", "ps_x", "outcome_x", "outcome_family", "estimand")
_CV = ("candidates", "cv_boot", "splits")
_RUN = ("format", "output", "seed", "threads")
SUBCOMMAND_FIELDS = {
    "estimate": _DATA + ("estimator", "k") + _CV + ("boot", "alpha") + _RUN,
    "select-k": _DATA + _CV + _RUN,
    "simulate": ("scenario", "setting", "n", "reps", "estimators", "k") + _CV
                + ("boot", "alpha", "replicates_out") + _RUN,
    "kprofile": ("scenario", "setting", "n", "reps", "grid") + _RUN,
    "balance": _DATA + ("k",) + _CV + ("denominator",) + _RUN,
}
# never part of the echoed configuration: they do not change results
_NOT_ECHOED = ("output", "replicates_out", "threads")


@dataclass(frozen=True)
class RunConfig:
    """Effective configuration of one invocation; echoed into JSON outputs.

    Only the fields of ``subcommand`` are meaningful.  Output paths and
    ``threads`` are left out of the echo because they never affect results.
    """

    subcommand: str
    input: str | None = None
    y: str | None = None
    a: str | None = None
    x: tuple[str, ...] | None = None
    ps_x: tuple[str, ...] | None = None
    outcome_x: tuple[str, ...] | None = None
    outcome_family: str = "linear"
    estimator: str = "amw"
    estimand: str = "ate"
    k: str | None = None
    candidates: tuple[int, ...] | None = None
    boot: int = 100
    cv_boot: int = 100
    splits: int = 25
    alpha: float = 0.05
    seed: int = 0
    output: str | None = None
    format: str = "json"
    scenario: str = "11"
    setting: str = "standard"
    n: int = 1000
    reps: int = 100
    estimators: tuple[str, ...] = ("amw", "amwf", "aipw", "ipw", "psm")
    grid: tuple[int, ...] = (1, 2, 4, 8, 16, 32)
    replicates_out: str | None = None
    denominator: str = "pooled_sample"
    threads: int = 1

    def echo(self) -> dict:
        out = {"subcommand": self.subcommand}
        for name in SUBCOMMAND_FIELDS[self.subcommand]:
            if name not in _NOT_ECHOED:
                v = getattr(self, name)
                out[name] = list(v) if isinstance(v, tuple) else v
        return out

    def to_argv(self) -> list[str]:
        """Flags that parse back to this exact configuration."""
        argv = [self.subcommand]
        for name in SUBCOMMAND_FIELDS[self.subcommand]:
            v = getattr(self, name)
            if v is None:
                continue
            flag = "--" + name.replace("_", "-")
            if isinstance(v, tuple):
                v = ",".join(str(i) for i in v)
            argv += [flag, repr(v) if isinstance(v, float) else str(v)]
        return argv


def _names(s: str) -> tuple[str, ...]:
    out = tuple(p.strip() for p in s.split(",") if p.strip())
    if not out:
        raise argparse.ArgumentTypeError("expected a comma-separated list")
    return out


def _ints(s: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in _names(s))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


def _k(s: str) -> str:
    if s == "auto":
        return s
    try:
        if int(s) >= 1:
            return str(int(s))
    except ValueError:
        pass
    raise argparse.ArgumentTypeError(f"k must be a positive integer or 'auto', got {s!r}")


def _positive(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def _nonneg(s: str) -> int:
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {s}")
    return v


def _alpha(s: str) -> float:
    v = float(s)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"alpha must lie in (0, 1), got {s}")
    return v


def _data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="CSV file with a header row")
    p.add_argument("--y", required=True, help="outcome column")
    p.add_argument("--a", required=True, help="binary treatment column")
    p.add_argument("--x", required=True, type=_names, help="covariate columns, comma separated")
    p.add_argument("--ps-x", type=_names, help="propensity model columns (default: --x)")
    p.add_argument("--outcome-x", type=_names, help="outcome model columns (default: --x)")
    p.add_argument("--outcome-family", choices=("linear", "logistic"), default="linear")
    p.add_argument("--estimand", type=str.lower, choices=[e.value for e in EstimandKind], default="ate")


def _seed_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="master seed (fallback: $AMW_SEED, then 0)")
    p.add_argument("--threads", type=_positive, default=1, help="worker processes; never changes output")


def _cv_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--candidates", type=_ints, help="candidate K values (default 1,2,4,...,64 up to min arm/2)")
    p.add_argument("--cv-boot", type=_positive, default=100, help="bootstrap replicates for the CV variance")
    p.add_argument("--splits", type=_positive, default=25, help="split-half repetitions for the CV bias")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="amw", description="Augmented match weighted causal effect estimation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("estimate", help="point estimate with bootstrap inference")
    _data_flags(p)
    p.add_argument("--estimator", type=str.lower, choices=[e.value for e in EstimatorKind], default="amw")
    p.add_argument("--k", type=_k, help="number of matches, or 'auto' (AMW default)")
    _cv_flags(p)
    p.add_argument("--boot", type=_nonneg, default=100, help="bootstrap replicates (0 skips inference)")
    p.add_argument("--alpha", type=_alpha, default=0.05)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--output", help="output file (default: stdout)")
    _seed_flags(p)

    p = sub.add_parser("select-k", help="cross-validated choice of K for AMW")
    _data_flags(p)
    _cv_flags(p)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--output")
    _seed_flags(p)

    p = sub.add_parser("simulate", help="Monte Carlo study on the built-in design")
    p.add_argument("--scenario", choices=[s.value for s in Scenario], default="11")
    p.add_argument("--setting", choices=sorted(SETTINGS), default="standard")
    p.add_argument("--n", type=_positive, default=1000, help="sample size per dataset")
    p.add_argument("--reps", type=_positive, default=100)
    p.add_argument("--estimators", type=_names, default=RunConfig.estimators)
    p.add_argument("--k", type=_k, help="K for AMW: integer or 'auto' (default)")
    _cv_flags(p)
    p.add_argument("--boot", type=_nonneg, default=100, help="outer bootstrap replicates (0 skips bootsd/cr)")
    p.add_argument("--alpha", type=_alpha, default=0.05)
    p.add_argument("--format", choices=("json", "csv"), default="csv")
    p.add_argument("--output")
    p.add_argument("--replicates-out", help="also write per-replicate estimates (CSV)")
    _seed_flags(p)

    p = sub.add_parser("kprofile", help="Monte Carlo variance and bias proxy of B(K)")
    p.add_argument("--scenario", choices=[s.value for s in Scenario], default="11")
    p.add_argument("--setting", choices=sorted(SETTINGS), default="standard")
    p.add_argument("--n", type=_positive, default=1000)
    p.add_argument("--reps", type=_positive, default=500)
    p.add_argument("--grid", type=_ints, default=RunConfig.grid)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--output")
    _seed_flags(p)

    p = sub.add_parser("balance", help="standardized differences before and after match weighting")
    _data_flags(p)
    p.add_argument("--k", type=_k, help="number of matches, or 'auto' (default)")
    _cv_flags(p)
    p.add_argument("--denominator", choices=DENOMINATORS, default="pooled_sample")
    p.add_argument("--format", choices=("json", "csv"), default="csv")
    p.add_argument("--output")
    _seed_flags(p)
    return parser


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    seed = ns.seed
    if seed is None:
        env = os.environ.get("AMW_SEED", "").strip()
        try:
            seed = int(env) if env else 0
        except ValueError:
            raise InvalidArgument(f"AMW_SEED must be an integer, got {env!r}") from None
    values = {name: getattr(ns, name) for name in SUBCOMMAND_FIELDS[ns.subcommand]
              if name != "seed" and getattr(ns, name, None) is not None}
    if "k" in SUBCOMMAND_FIELDS[ns.subcommand] and values.get("k") is None:
        values["k"] = _default_k(ns.subcommand, values.get("estimator"))
    return RunConfig(ns.subcommand, seed=seed, **values)


def _default_k(subcommand: str, estimator: str | None) -> str | None:
    if subcommand != "estimate":
        return "auto"
    k = resolve_k(EstimatorKind(estimator), None)
    return None if k is None else str(k)


# ------------------------------------------------------------------ commands


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    return v


def _dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["nan" if isinstance(v, float) and math.isnan(v) else (repr(v) if isinstance(v, float) else v)
                    for v in r])
    return buf.getvalue()


def _load(cfg: RunConfig):
    cols = list(dict.fromkeys([*cfg.x, *(cfg.ps_x or ()), *(cfg.outcome_x or ())]))
    d = load_csv(cfg.input, cfg.y, cfg.a, cols)
    spec = ModelSpec(cfg.ps_x or cfg.x, cfg.outcome_x or cfg.x, outcome_family=cfg.outcome_family)
    spec.validate(d)
    return d, spec


def _k_arg(cfg: RunConfig):
    return None if cfg.k is None else (cfg.k if cfg.k == "auto" else int(cfg.k))


def cmd_estimate(cfg: RunConfig) -> str:
    d, spec = _load(cfg)
    rep = run_estimate(d, spec, cfg.estimator, cfg.estimand, _k_arg(cfg), b=cfg.boot, alpha=cfg.alpha,
                       seed=cfg.seed, candidates=cfg.candidates, cv_boot_b=cfg.cv_boot,
                       n_splits=cfg.splits, n_jobs=cfg.threads)
    boot = rep.boot
    nan = float("nan")
    if cfg.format == "csv":
        header = ("estimator", "estimand", "value", "se", "ci_lower", "ci_upper", "k_used", "n",
                  "b_requested", "b_failed")
        row = (rep.point.estimator.value, rep.point.estimand.value, rep.point.value,
               boot.se if boot else nan, boot.ci_lower if boot else nan, boot.ci_upper if boot else nan,
               "" if rep.k_used is None else rep.k_used, d.n,
               boot.b_requested if boot else 0, boot.b_failed if boot else 0)
        return _csv(header, [row])
    out = rep.to_dict()
    out.update({
        "config": cfg.echo(),
        "value": rep.point.value,
        "se": boot.se if boot else None,
        "ci_lower": boot.ci_lower if boot else None,
        "ci_upper": boot.ci_upper if boot else None,
        "n": d.n, "n1": d.n1, "n0": d.n0,
    })
    return _dumps(out)


def cmd_select_k(cfg: RunConfig) -> str:
    d, spec = _load(cfg)
    k_star, reports = select_k(d, spec, cfg.candidates, boot_b=cfg.cv_boot, n_splits=cfg.splits,
                               rng_seed=cfg.seed, estimand=cfg.estimand, n_jobs=cfg.threads)
    if cfg.format == "csv":
        return _csv(("k", "var_hat", "bias_hat", "mse_hat", "n_splits", "selected"),
                    [(r.k, r.var_hat, r.bias_hat, r.mse_hat, r.n_splits, int(r.k == k_star)) for r in reports])
    return _dumps({"config": cfg.echo(), "k_star": k_star, "k_candidates": [r.to_dict() for r in reports]})


def cmd_simulate(cfg: RunConfig) -> str:
    dgp = DgpConfig.for_setting(cfg.setting, n=cfg.n)
    k_policy = "auto" if cfg.k in (None, "auto") else int(cfg.k)
    res = run_scenario(dgp, cfg.scenario, cfg.estimators, n_reps=cfg.reps, boot_b=cfg.boot,
                       k_policy=k_policy, seed=cfg.seed, alpha=cfg.alpha, cv_boot_b=cfg.cv_boot,
                       n_splits=cfg.splits, candidates=cfg.candidates, n_jobs=cfg.threads)
    if cfg.replicates_out:
        Path(cfg.replicates_out).write_text(replicates_csv(res), encoding="utf-8")
    if cfg.format == "csv":
        return summaries_csv(res.summaries)
    return _dumps({"config": cfg.echo(), "summaries": json.loads(summaries_json(res.summaries)),
                   "failures": list(res.failures)})


def cmd_kprofile(cfg: RunConfig) -> str:
    dgp = DgpConfig.for_setting(cfg.setting, n=cfg.n)
    prof = k_profile(dgp, cfg.scenario, cfg.grid, n_reps=cfg.reps, seed=cfg.seed, n_jobs=cfg.threads)
    if cfg.format == "csv":
        return _csv(("k", "var_b", "bias_proxy", "mean_b"),
                    [(k, float(v), float(b), float(m))
                     for k, v, b, m in zip(prof.k_grid, prof.var_b, prof.bias_proxy, prof.mean_b)])
    return _dumps({"config": cfg.echo(), **prof.to_dict()})


def cmd_balance(cfg: RunConfig) -> str:
    d, spec = _load(cfg)
    k = _k_arg(cfg) or "auto"
    if k == "auto":
        k, _ = select_k(d, spec, cfg.candidates, boot_b=cfg.cv_boot, n_splits=cfg.splits,
                        rng_seed=cfg.seed, estimand=cfg.estimand, n_jobs=cfg.threads)
    nuis = fit_nuisance(d, spec)
    table = balance_table(d, nuis, k, cfg.estimand, cfg.x, cfg.denominator)
    if cfg.format == "csv":
        return table.to_csv()
    return _dumps({"config": cfg.echo(), **table.to_dict()})


COMMANDS = {
    "estimate": cmd_estimate,
    "select-k": cmd_select_k,
    "simulate": cmd_simulate,
    "kprofile": cmd_kprofile,
    "balance": cmd_balance,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: 0 for --help/--version, 2 for usage errors
        return int(exc.code or 0)
    try:
        cfg = config_from_args(ns)
        text = COMMANDS[cfg.subcommand](cfg)
    except AmwError as exc:
        sys.stderr.write(json.dumps(_clean(exc.to_dict()), sort_keys=True, default=str) + "\n")
        return 1
    if cfg.output:
        Path(cfg.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
