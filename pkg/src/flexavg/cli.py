"""Command-line front end.

Subcommands: ``simulate``, ``fit``, ``predict``, ``empirical``.  Each accepts
``--config FILE``; the file is INI style with one section per subcommand and
keys named like the long flags (``n = 100, 400``).  Flags given on the
command line override the file.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .empirical import EmpiricalConfig, candidates_for, evaluate_empirical
from .errors import ConfigError, FlexavgError
from .io import (Table, load_csv, load_fit, read_config, save_fit, split_list, write_csv)
from .jcvma import DEFAULT_FOLDS, fit_jcvma
from .loss import LossSpec
from .simlab import ExperimentConfig, run_experiment, synthetic_fixture

log = logging.getLogger("flexavg")

FULL_FIGURES = {
    "n": (50, 100, 200, 400),
    "r2": tuple(round(0.1 * i, 1) for i in range(1, 10)),
    "reps": 500,
    "methods": ("JCVMA5", "JCVMA10", "SAIC", "SBIC", "EWA"),
    "tau": (0.5, 0.05),
    "p": (1, 2),
}
DESIGN_ALIASES = {"I": "CORRELATION", "1": "CORRELATION", "II": "PVALUE", "2": "PVALUE"}


def _settings(args, section, defaults):
    """defaults < config file < explicit flags."""
    merged = dict(defaults)
    if args.config:
        merged.update(read_config(args.config, section))
    for k, v in vars(args).items():
        if v is not None and k not in ("config", "func", "command", "verbose"):
            merged[k] = v
    return merged


def _as_int(v, name):
    try:
        return int(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be an integer, got {v!r}") from None


def _as_bool(v):
    if isinstance(v, bool):
        return v
    return str(v).strip().lower() in ("1", "true", "yes", "on")


def _loss_specs(s):
    taus = split_list(s["tau"], float)
    ps = split_list(s["p"], int)
    try:
        return tuple(LossSpec(t, p) for p in ps for t in taus)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _single_spec(s):
    specs = _loss_specs(s)
    if len(specs) != 1:
        raise ConfigError("exactly one tau and one p are required here")
    return specs[0]


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------


def cmd_simulate(args):
    defaults = {"dgp": "DESIGN2", "n": "100", "r2": "0.5", "tau": "0.5", "p": "2",
                "methods": "JCVMA5", "reps": "100", "seed": "0", "holdout": "100",
                "out": "sim-out", "expand": "false", "dgp2_always": "0,1,2"}
    s = _settings(args, "simulate", defaults)
    if _as_bool(s.get("full_figures", False)):
        for k, v in FULL_FIGURES.items():
            s[k] = v
    config = ExperimentConfig(
        dgp=str(s["dgp"]).upper(),
        n_values=split_list(s["n"], int),
        r2_values=split_list(s["r2"], float),
        specs=_loss_specs(s),
        methods=split_list(s["methods"]),
        reps=_as_int(s["reps"], "reps"),
        seed=_as_int(s["seed"], "seed"),
        holdout=_as_int(s["holdout"], "holdout"),
        dgp2_always=split_list(s["dgp2_always"], int),
    )
    out = Path(s["out"])
    result = run_experiment(config)
    write_simulation(out, result, expand=_as_bool(s["expand"]))
    print(f"wrote {len(result.reports)} reports to {out}")
    return 0


def write_simulation(out: Path, result, expand=False):
    header = ["dgp", "n", "r2", "tau", "p", "method", "metric", "reps", "mean", "se",
              "normalizer", "normalized"]
    rows = [[r.dgp, r.n, r.r2, r.spec.tau, r.spec.p, r.method, r.metric, r.reps, r.mean,
             r.se, r.normalizer, r.normalized] for r in result.reports]
    write_csv(out / "summary.csv", header, rows)
    if expand:
        rows = [[r.dgp, r.n, r.r2, r.spec.tau, r.spec.p, r.method, r.metric, i, v]
                for r in result.reports for i, v in enumerate(r.values)]
        write_csv(out / "replications.csv",
                  ["dgp", "n", "r2", "tau", "p", "method", "metric", "rep", "value"], rows)
    efpe = [r for r in result.reports if r.metric == "EFPE"]
    groups = {}
    for r in efpe:
        groups.setdefault((r.spec.p, r.spec.tau, r.n), []).append(r)
    for (p, tau, n), reps in groups.items():
        write_csv(out / f"figure_p{p}_tau{tau}_n{n}.csv", ["r2", "method", "normalized_efpe"],
                  [[r.r2, r.method, r.normalized] for r in reps])
    if result.failures:
        keys = list(result.failures[0])
        write_csv(out / "failures.csv", keys, [[f[k] for k in keys] for f in result.failures])


# --------------------------------------------------------------------------
# fit / predict
# --------------------------------------------------------------------------


def cmd_fit(args):
    defaults = {"response": "y", "design": "AS_GIVEN", "shape": "NESTED", "always": "",
                "tau": "0.5", "p": "2", "folds": str(DEFAULT_FOLDS), "seed": "0",
                "out": "fit-out"}
    s = _settings(args, "fit", defaults)
    if "input" not in s:
        raise ConfigError("fit needs --input")
    table = load_csv(s["input"])
    ecfg = EmpiricalConfig(input=s["input"], response=s["response"],
                           always=split_list(s["always"]),
                           ordering=DESIGN_ALIASES.get(str(s["design"]).upper(), s["design"]),
                           shape=s["shape"], spec=_single_spec(s))
    data, names, models, _ = candidates_for(table, ecfg)
    folds = _as_int(s["folds"], "folds")
    seed = _as_int(s["seed"], "seed")
    fit = fit_jcvma(data, models, ecfg.spec, folds, seed)
    out = Path(s["out"])
    save_fit(out / "fit.json", fit, names, s["response"])
    write_csv(out / "weights.csv", ["model", "regressors", "weight"],
              [[m + 1, " ".join(names[i] for i in c.model.indices), w]
               for m, (c, w) in enumerate(zip(fit.coefficients, fit.weights.w))])
    write_csv(out / "coefficients.csv", ["column", "averaged_coefficient"],
              [[names[c], v] for c, v in zip(fit.pool, fit.averaged_theta)])
    pred = fit.predict(data.x)
    write_csv(out / "predictions.csv", ["row", "y", "prediction"],
              [[i + 1, y, p] for i, (y, p) in enumerate(zip(data.y, pred))])
    print(f"fitted {len(fit.coefficients)} models; weights written to {out}")
    return 0


def cmd_predict(args):
    s = _settings(args, "predict", {"out": "predictions.csv"})
    for key in ("fit", "input"):
        if key not in s:
            raise ConfigError(f"predict needs --{key}")
    saved = load_fit(s["fit"])
    table = load_csv(s["input"])
    cols = [table.index(c) for c in saved.pool_names[1:]]
    x = np.column_stack([np.ones(len(table.values)), table.values[:, cols]])
    pred = np.atleast_1d(saved.fit.predict(x))
    write_csv(s["out"], ["row", "prediction"], [[i + 1, p] for i, p in enumerate(pred)])
    print(f"wrote {pred.size} predictions to {s['out']}")
    return 0


# --------------------------------------------------------------------------
# empirical
# --------------------------------------------------------------------------


def cmd_empirical(args):
    defaults = {"response": "y", "design": "I", "shape": "NESTED", "always": "",
                "tau": "0.05", "p": "2", "folds": str(DEFAULT_FOLDS), "n1": "100",
                "reps": "100", "seed": "0", "out": "empirical-out"}
    s = _settings(args, "empirical", defaults)
    if s.get("input"):
        table = load_csv(s["input"])
    else:
        table = Table(*synthetic_fixture(_as_int(s.get("fixture_seed", 0), "fixture_seed")))
    ecfg = EmpiricalConfig(
        input=s.get("input"), response=s["response"], always=split_list(s["always"]),
        ordering=DESIGN_ALIASES.get(str(s["design"]).upper(), str(s["design"])),
        shape=s["shape"], spec=_single_spec(s), folds=_as_int(s["folds"], "folds"),
        n1=_as_int(s["n1"], "n1"), reps=_as_int(s["reps"], "reps"),
        seed=_as_int(s["seed"], "seed"), out=s["out"])
    report = evaluate_empirical(ecfg, table)
    out = Path(s["out"])
    write_empirical(out, report, table, ecfg)
    print(f"{report.methods[0]} relative FPE {report.relative(report.methods[0]):.4f}; "
          f"report written to {out}")
    return 0


def write_empirical(out: Path, report, table, ecfg):
    names = ("(intercept)",) + tuple(c for c in table.names if c != ecfg.response)
    write_csv(out / "relative_fpe.csv",
              ["tau", "p", "n1", "method", "mean_fpe", "relative_fpe"],
              [[ecfg.spec.tau, ecfg.spec.p, ecfg.n1, m, report.mean(m), report.relative(m)]
               for m in report.methods])
    write_csv(out / "replications.csv", ["rep", *report.methods],
              [[r, *(report.fpe[m][r] for m in report.methods)] for r in range(ecfg.reps)])
    write_csv(out / "ordering.csv", ["rank", "column"],
              [[i + 1, names[c]] for i, c in enumerate(report.ordered)])
    if report.failures:
        keys = list(report.failures[0])
        write_csv(out / "failures.csv", keys, [[f[k] for k in keys] for f in report.failures])


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flexavg", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI file; flags override it")
        sp.add_argument("--tau", help="asymmetry level(s), comma separated")
        sp.add_argument("--p", help="loss power(s): 1 and/or 2")
        sp.add_argument("--seed")
        sp.add_argument("--out")

    sp = sub.add_parser("simulate", help="run simulation experiments")
    common(sp)
    sp.add_argument("--dgp", help="DGP1, DGP2, DGP3 or DESIGN2")
    sp.add_argument("--n", help="sample size(s)")
    sp.add_argument("--r2", help="population R^2 value(s) (DGP1-3)")
    sp.add_argument("--methods", help="e.g. JCVMA5,JCVMA10,SAIC,SBIC,EWA,AIC,BIC,CV5")
    sp.add_argument("--reps")
    sp.add_argument("--holdout")
    sp.add_argument("--dgp2-always", dest="dgp2_always")
    sp.add_argument("--expand", action="store_const", const="true",
                    help="also write per-replication values")
    sp.add_argument("--full-figures", dest="full_figures", action="store_const", const="true",
                    help="full grid: 4 sample sizes, 9 R^2 values, 500 replications (slow)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("fit", help="fit model averaging on a CSV")
    common(sp)
    sp.add_argument("--input")
    sp.add_argument("--response")
    sp.add_argument("--design", help="AS_GIVEN, I (correlation) or II (p-value)")
    sp.add_argument("--shape", help="NESTED or SUBSET_TOGGLE")
    sp.add_argument("--always", help="columns in every model, comma separated")
    sp.add_argument("--folds")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("predict", help="apply a saved fit to new rows")
    sp.add_argument("--config")
    sp.add_argument("--fit")
    sp.add_argument("--input")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("empirical", help="train/validation relative FPE study")
    common(sp)
    sp.add_argument("--input", help="CSV (default: built-in synthetic fixture)")
    sp.add_argument("--response")
    sp.add_argument("--design", help="I (correlation), II (p-value) or AS_GIVEN")
    sp.add_argument("--shape")
    sp.add_argument("--always")
    sp.add_argument("--folds")
    sp.add_argument("--n1")
    sp.add_argument("--reps")
    sp.set_defaults(func=cmd_empirical)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FlexavgError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return 2
    except OSError as exc:
        print(json.dumps({"error": "io_error", "message": str(exc)}), file=sys.stderr)
        return 2
    except ValueError as exc:
        print(json.dumps({"error": "invalid_input", "message": str(exc)}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
