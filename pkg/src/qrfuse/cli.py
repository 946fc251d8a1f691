"""Command-line entry point: ``qrfuse {fit,cv,simulate,forecast}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 solver failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources
from pathlib import Path

from .core import DataError, TauGrid, read_csv
from .estimators import EstimationError, EstimatorConfig, Kind, fit
from .metrics import write_table
from .selection import CvPlan, HyperGrid, SelectionError, grid_search, make_grid

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_SOLVER = 0, 2, 3, 4
DEFAULT_TAUS = "0.1:0.9:0.1"
DEFAULT_HYPERGRID = "100,1,200,6"


class ConfigError(Exception):
    pass


def toy_csv_path() -> Path:
    """Path of the small bundled example dataset (columns y, x1, x2)."""
    return Path(str(resources.files("qrfuse") / "data" / "toy.csv"))


# -- argument helpers ------------------------------------------------------

def _grid(args) -> TauGrid:
    try:
        if args.taus_list:
            return TauGrid.parse(args.taus_list)
        return TauGrid.parse(args.taus)
    except ValueError as err:
        raise ConfigError(f"bad quantile grid: {err}") from None


def _hypergrid(args) -> HyperGrid:
    try:
        if args.grid_values:
            return HyperGrid(tuple(sorted(float(v) for v in args.grid_values.split(","))))
        n_lin, lin_hi, n_log, log_hi = args.grid.split(",")
        return make_grid(int(n_lin), float(lin_hi), int(n_log), float(log_hi))
    except ValueError as err:
        raise ConfigError(f"bad hyperparameter grid: {err}") from None


def _seed(args) -> int:
    raw = args.seed if args.seed is not None else os.environ.get("QRFUSE_SEED")
    if raw is None:
        raise ConfigError("this command is stochastic; pass --seed or set QRFUSE_SEED")
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"seed must be an integer, got {raw!r}") from None


def _kind(text: str) -> Kind:
    try:
        return Kind(text.upper())
    except ValueError:
        raise ConfigError(f"unknown estimator {text!r}; choose from {[k.value for k in Kind]}") from None


def _columns(text):
    return [c.strip() for c in text.split(",") if c.strip()] if text else None


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(out: Path, stem: str, header, rows, as_json: bool) -> Path:
    rows = list(rows)
    if as_json:
        path = out / f"{stem}.json"
        records = [dict(zip(header, r)) for r in rows]
        path.write_text(json.dumps({"schema": 1, "rows": records}, indent=2) + "\n", encoding="utf-8")
    else:
        path = out / f"{stem}.csv"
        write_table(path, header, rows)
    return path


def _load(args):
    try:
        return read_csv(args.data, args.response, columns=_columns(args.columns))
    except OSError as err:
        raise DataError(f"cannot read {args.data}: {err}") from None


# -- subcommands -----------------------------------------------------------

def cmd_fit(args) -> int:
    kind = _kind(args.kind)
    grid = _grid(args)
    if args.alpha is not None and kind is not Kind.GNCQR:
        raise ConfigError(f"--alpha applies to GNCQR only, not {kind.value}")
    if args.lam is not None and kind is not Kind.FLQR:
        raise ConfigError(f"--lambda applies to FLQR only, not {kind.value}")
    value = args.alpha if kind is Kind.GNCQR else args.lam
    select_grid = kind.hyperparameter is not None and value is None
    if select_grid and not (args.grid_values or args.select):
        flag = "--alpha" if kind is Kind.GNCQR else "--lambda"
        raise ConfigError(f"{kind.value} needs {flag} or a grid to select from "
                          "(--grid-values, or --select for the default grid)")
    seed = _seed(args) if select_grid and args.shuffle else None
    ds = _load(args)
    out = _out_dir(args)
    if select_grid:
        plan = CvPlan(args.folds, args.gap, shuffle=args.shuffle)
        value = grid_search(ds, grid, kind, _hypergrid(args), plan, seed,
                            args.prescale, args.jobs, in_sample=False).best
    cfg = EstimatorConfig.make(kind, value)
    try:
        f = fit(ds, grid, cfg, prescale=args.prescale)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    (out / "fit.json").write_text(f.to_json() + "\n", encoding="utf-8")
    _emit(out, "coefficients", ["tau", "variable", "coefficient"], f.coefficient_rows(), args.json)
    print(f"estimator={cfg.kind.value} value={value} objective={f.objective:.10g} "
          f"crossing_rate={f.crossing_rate:.4f}")
    for note in f.diagnostics:
        print(f"note: {note}", file=sys.stderr)
    return EXIT_OK


def cmd_cv(args) -> int:
    kind = _kind(args.kind)
    if kind.hyperparameter is None:
        raise ConfigError(f"{kind.value} has no hyperparameter to cross-validate")
    grid = _grid(args)
    hgrid = _hypergrid(args)
    seed = _seed(args)
    ds = _load(args)
    out = _out_dir(args)
    plan = CvPlan(args.folds, args.gap, shuffle=args.shuffle)
    res = grid_search(ds, grid, kind, hgrid, plan, seed, args.prescale, args.jobs)
    _emit(out, "cv_profile", ["candidate", "in_sample_loss", "oos_loss", "n_failed_folds"],
          res.rows(), args.json)
    (out / "selected.json").write_text(
        json.dumps({"estimator": kind.value, kind.hyperparameter: res.best,
                    "oos_loss": float(res.oos_loss[res.best_index])}) + "\n", encoding="utf-8")
    print(f"selected {kind.hyperparameter}={res.best:g}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .simulate import EstimatorSpec, run_experiment, dgp

    grid = _grid(args)
    seed = _seed(args)
    try:
        spec = dgp(args.dgp)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    kinds = [_kind(k) for k in _columns(args.estimators)]
    hgrid = _hypergrid(args) if any(k.hyperparameter for k in kinds) else None
    ests = [EstimatorSpec(k, hgrid if k.hyperparameter else None) for k in kinds]
    if args.reps < 2:
        raise ConfigError("need at least two replications")
    out = _out_dir(args)
    res = run_experiment(spec, args.T, grid, ests, args.reps, seed, args.folds, args.n_eval, args.jobs)
    _emit(out, "rmise", ["estimator", "dgp", "T", "dtau", "tau", "rmise", "std_err"],
          res.rmise_rows(), args.json)
    _emit(out, "selection_rates", ["estimator", "dgp", "T", "dtau", "tpr", "tnr", "n_failed"],
          res.rate_rows(), args.json)
    for label, tpr, tnr in ((r[0], r[4], r[5]) for r in res.rate_rows()):
        print(f"{label}: TPR={tpr:.3f} TNR={'n/a' if tnr is None else f'{tnr:.3f}'} "
              f"failed={res.n_failed[label]}")
    return EXIT_OK


def cmd_forecast(args) -> int:
    from .forecast import (FORECAST_COLUMNS, SCORE_COLUMNS, ForecastExercise, ForecastModel,
                           build_target_pairs, read_series, rolling_forecast, score_exercise)

    grid = _grid(args)
    kinds = [_kind(k) for k in _columns(args.estimators)]
    selects = any(k.hyperparameter for k in kinds)
    hgrid = _hypergrid(args) if selects else None
    seed = _seed(args) if selects else 0
    try:
        raw, dates = read_series(args.data, args.response, args.date_column, _columns(args.columns),
                                  include_target=not args.no_target_lag)
    except OSError as err:
        raise DataError(f"cannot read {args.data}: {err}") from None
    pairs = build_target_pairs(raw, args.horizon, dates)
    models = [ForecastModel(k.value, k, hypergrid=hgrid if k.hyperparameter else None) for k in kinds]
    try:
        ex = ForecastExercise(pairs, args.window, models, grid, args.reselect_every, args.folds,
                              args.prescale)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    out = _out_dir(args)
    res = rolling_forecast(ex, seed, args.jobs)
    _emit(out, "forecasts", FORECAST_COLUMNS, res.rows(), args.json)
    scores = score_exercise(res.unsorted, res.sorted, res.realized, grid)
    _emit(out, "scores", SCORE_COLUMNS, (s.as_tuple() for s in scores), args.json)
    print(f"{ex.n_windows} windows, horizon {ex.h}")
    for s in scores:
        print(f"{s.estimator}: crps={s.crps[0]:.4f} sorted={s.crps_sorted[0]:.4f} failed={s.n_failed}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------

def _common(p, data=True):
    p.add_argument("--config", help="file of key = value lines using long option names")
    if data:
        p.add_argument("--data", default=None, help="input CSV (header row, comma separated)")
        p.add_argument("--response", default="y", help="response column (default: y)")
        p.add_argument("--columns", help="comma-separated covariate columns (default: all numeric)")
    p.add_argument("--taus", default=DEFAULT_TAUS, help="quantile grid start:stop:step (default: %(default)s)")
    p.add_argument("--taus-list", help="explicit comma-separated quantile levels")
    p.add_argument("--seed", default=None, help="random seed (overrides QRFUSE_SEED)")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--json", action="store_true", help="write tables as JSON instead of CSV")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--prescale", default="minmax", choices=["minmax", "symmetric", "none"])


def _selection_opts(p):
    p.add_argument("--grid", default=DEFAULT_HYPERGRID,
                   help="hyperparameter grid n_linear,linear_hi,n_log,log_exp_hi (default: %(default)s)")
    p.add_argument("--grid-values", help="explicit comma-separated hyperparameter candidates")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--gap", type=int, default=0, help="hv-block gap h (0 = plain k-fold)")
    p.add_argument("--shuffle", action="store_true", help="shuffle rows before blocking")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qrfuse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit one estimator and write its coefficients")
    _common(p)
    _selection_opts(p)
    p.add_argument("--kind", default="QR")
    p.add_argument("--alpha", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--select", action="store_true", help="choose the hyperparameter by CV on --grid")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("cv", help="cross-validation profile over a hyperparameter grid")
    _common(p)
    _selection_opts(p)
    p.add_argument("--kind", default="GNCQR")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("simulate", help="Monte Carlo RMISE and selection-rate tables")
    _common(p, data=False)
    _selection_opts(p)
    p.add_argument("--dgp", default="y1")
    p.add_argument("--T", type=int, default=100)
    p.add_argument("--reps", type=int, default=500)
    p.add_argument("--n-eval", type=int, default=1000)
    p.add_argument("--estimators", default="BRW,GNCQR,QR,FLQR")
    p.set_defaults(func=cmd_simulate, taus="0.1:0.9:0.2")

    p = sub.add_parser("forecast", help="rolling-window quantile forecasts and scores")
    _common(p)
    _selection_opts(p)
    p.add_argument("--date-column", default="date")
    p.add_argument("--horizon", type=int, default=1)
    p.add_argument("--no-target-lag", action="store_true",
                   help="do not use the current target value as a regressor")
    p.add_argument("--window", type=int, default=50)
    p.add_argument("--reselect-every", type=int, default=None)
    p.add_argument("--estimators", default="QR,BRW,GNCQR,FLQR")
    p.set_defaults(func=cmd_forecast, taus="0.05:0.95:0.05")
    return parser


def _read_config(path) -> list[tuple[str, str]]:
    pairs = []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    for n, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, val = (part.strip() for part in line.split("=", 1))
        pairs.append((key.replace("_", "-"), val))
    return pairs


def _expand_config(argv: list[str]) -> list[str]:
    """Splice config-file options in right after the subcommand.

    Options given on the command line come later and therefore win.
    Boolean switches are written ``key = true``.
    """
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config or not argv:
        return argv
    extra = []
    for key, val in _read_config(known.config):
        if key == "config":
            raise ConfigError("config files cannot nest")
        if val.lower() in ("true", "yes", "on"):
            extra.append(f"--{key}")
        elif val.lower() not in ("false", "no", "off"):
            extra += [f"--{key}", val]
    return argv[:1] + extra + argv[1:]


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        argv = _expand_config(argv)
    except ConfigError as err:
        print(f"qrfuse: configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    args = parser.parse_args(argv)
    try:
        if getattr(args, "data", "") is None:
            raise ConfigError("--data is required")
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        return args.func(args)
    except (ConfigError, ValueError) as err:
        print(f"qrfuse: configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, SelectionError) as err:
        print(f"qrfuse: data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except EstimationError as err:
        print(f"qrfuse: solver failure: {err}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
