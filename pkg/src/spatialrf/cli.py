"""Batch command line front end.

Subcommands: ``synth``, ``cv``, ``select``, ``predict`` and ``matrix``.
Runs are described by an INI manifest (``--config``); command line flags
override manifest values. Logs go to stderr, results to files, and each
command prints one summary line to stdout.

Exit codes: 0 ok, 2 configuration, 3 data, 4 model/degeneracy,
5 infeasible design or failed selection.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from . import __version__
from . import metrics as M
from .cv import CvReport, TuneGrid, cross_validate, default_mtry_grid, default_objective, refit
from .errors import ConfigError, SpatialRFError
from .folds import CLUSTER, RANDOM, SPATIAL_BLOCK, STRATEGIES, make_plan
from .forest import Forest, ForestConfig
from .raster import predict_surface, read_stack_manifest, write_ascii_grid, write_stack
from .samples import Task, read_samples_csv, write_samples_csv
from .selection import (
    EPSILON,
    SelectionTrace,
    forward_feature_selection,
    recursive_feature_elimination,
    refit_selected,
)
from .synthgen import BenchmarkSpec, DesignSpec, make_benchmark

log = logging.getLogger("spatialrf")


@dataclass
class RunConfig:
    task: str = "regression"
    samples: str | None = None
    stack: str | None = None
    output: str = "out"
    fold_strategy: str = CLUSTER
    k: int = 10
    block_cols: int = 5
    block_rows: int = 4
    fold_seed: int = 0
    selection: str = "none"
    selection_folds: str | None = None
    objective: str | None = None
    mtry_grid: tuple | None = None
    n_trees: int = 500
    min_node_size: int | None = None
    seed: int = 0
    jobs: int = 1
    epsilon: float = EPSILON
    timing: bool = False
    base_dir: Path = field(default=Path("."), repr=False)

    def path(self, value: str | None) -> Path | None:
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def forest_config(self) -> ForestConfig:
        return ForestConfig(n_trees=self.n_trees, min_node_size=self.min_node_size, seed=self.seed)

    def check(self) -> None:
        Task.parse(self.task)
        for name in ("fold_strategy", "selection_folds"):
            value = getattr(self, name)
            if value is not None and value not in STRATEGIES:
                raise ConfigError(f"{name} must be one of {STRATEGIES}, got {value!r}")
        if self.selection not in ("none", "ffs", "rfe"):
            raise ConfigError(f"selection must be none, ffs or rfe, got {self.selection!r}")
        if self.objective is not None and self.objective not in M.metrics_for(self.task):
            raise ConfigError(f"objective {self.objective!r} does not fit task {self.task}")
        if self.n_trees < 1 or self.jobs < 1:
            raise ConfigError("n_trees and jobs must be >= 1")


# manifest section/key -> RunConfig attribute
_MANIFEST_KEYS = {
    ("run", "task"): "task",
    ("run", "samples"): "samples",
    ("run", "stack"): "stack",
    ("run", "output"): "output",
    ("run", "objective"): "objective",
    ("run", "seed"): "seed",
    ("run", "jobs"): "jobs",
    ("folds", "strategy"): "fold_strategy",
    ("folds", "k"): "k",
    ("folds", "block_cols"): "block_cols",
    ("folds", "block_rows"): "block_rows",
    ("folds", "seed"): "fold_seed",
    ("forest", "n_trees"): "n_trees",
    ("forest", "min_node_size"): "min_node_size",
    ("forest", "mtry_grid"): "mtry_grid",
    ("selection", "strategy"): "selection",
    ("selection", "folds"): "selection_folds",
    ("selection", "epsilon"): "epsilon",
}


def _convert(attr: str, raw: str):
    types = {f.name: f.type for f in fields(RunConfig)}
    kind = types[attr]
    raw = raw.strip()
    try:
        if attr == "mtry_grid":
            return tuple(int(v) for v in raw.replace(",", " ").split())
        if "int" in kind and "None" in kind:
            return None if raw.lower() in ("", "none") else int(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            return raw.lower() in ("1", "true", "yes", "on")
        if "None" in kind and raw.lower() in ("", "none"):
            return None
    except ValueError:
        raise ConfigError(f"invalid value {raw!r} for {attr}") from None
    return raw


def load_manifest(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    cfg = RunConfig(base_dir=path.parent)
    for section in parser.sections():
        for key, raw in parser.items(section):
            attr = _MANIFEST_KEYS.get((section, key))
            if attr is None:
                raise ConfigError(f"{path}: unknown key [{section}] {key}")
            setattr(cfg, attr, _convert(attr, raw))
    return cfg


def build_config(args) -> RunConfig:
    cfg = load_manifest(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {
        "task": "task", "samples": "samples", "stack": "stack", "out": "output",
        "folds": "fold_strategy", "k": "k", "block_cols": "block_cols", "block_rows": "block_rows",
        "fold_seed": "fold_seed", "selection": "selection", "selection_folds": "selection_folds",
        "objective": "objective", "n_trees": "n_trees", "min_node_size": "min_node_size",
        "seed": "seed", "jobs": "jobs", "epsilon": "epsilon", "mtry_grid": "mtry_grid",
    }
    for arg, attr in overrides.items():
        value = getattr(args, arg, None)
        if value is None:
            continue
        if attr in ("samples", "stack", "output"):
            # flag paths are relative to the working directory
            value = str(Path(value).resolve())
        if attr == "mtry_grid":
            value = _convert("mtry_grid", value)
        setattr(cfg, attr, value)
    if getattr(args, "timing", False):
        cfg.timing = True
    cfg.check()
    return cfg


def _load_table(cfg: RunConfig):
    if cfg.samples is None:
        raise ConfigError("no sample file given (set [run] samples or --samples)")
    return read_samples_csv(cfg.path(cfg.samples), task=cfg.task)


def _plan(cfg: RunConfig, table, strategy: str | None = None):
    return make_plan(table, strategy or cfg.fold_strategy, k=cfg.k, seed=cfg.fold_seed,
                     block_cols=cfg.block_cols, block_rows=cfg.block_rows)


def _grid(cfg: RunConfig, n_features: int):
    if cfg.mtry_grid:
        return TuneGrid(tuple(v for v in cfg.mtry_grid if v <= n_features) or (min(cfg.mtry_grid),))
    return default_mtry_grid(n_features) if n_features >= 2 else TuneGrid((1,))


def _out_dir(cfg: RunConfig) -> Path:
    out = cfg.path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_report(report: CvReport, out: Path, stem: str, timing: bool) -> None:
    report.write_json(out / f"{stem}.json", include_timing=timing)
    report.write_held_out_csv(out / f"{stem}_held_out.csv")


def cmd_cv(cfg: RunConfig) -> CvReport:
    table = _load_table(cfg)
    plan = _plan(cfg, table)
    report = cross_validate(table, plan, cfg.forest_config(), _grid(cfg, table.n_features),
                            cfg.objective, jobs=cfg.jobs)
    out = _out_dir(cfg)
    _write_report(report, out, "cv_report", cfg.timing)
    plan.write_csv(out / "folds.csv")
    refit(table, cfg.forest_config(), report.chosen_mtry, jobs=cfg.jobs).save(out / "model.json")
    log.info("cross-validation took %.2fs", report.wall_time)
    print(report.summary_line())
    return report


def run_selection(cfg: RunConfig, table, method: str, strategy: str) -> SelectionTrace:
    plan = _plan(cfg, table, strategy)
    kwargs = dict(objective=cfg.objective, epsilon=cfg.epsilon, jobs=cfg.jobs)
    if method == "ffs":
        return forward_feature_selection(table, plan, cfg.forest_config(), **kwargs)
    if method == "rfe":
        return recursive_feature_elimination(table, plan, cfg.forest_config(), **kwargs)
    raise ConfigError(f"unknown selection method {method!r}")


def cmd_select(cfg: RunConfig) -> tuple[SelectionTrace, CvReport]:
    if cfg.selection == "none":
        raise ConfigError("select needs a selection strategy (ffs or rfe)")
    table = _load_table(cfg)
    trace = run_selection(cfg, table, cfg.selection, cfg.selection_folds or cfg.fold_strategy)
    sub = table.select_features(trace.final_features)
    report = refit_selected(table, trace, _plan(cfg, sub), cfg.forest_config(),
                            _grid(cfg, sub.n_features), cfg.objective, jobs=cfg.jobs)
    out = _out_dir(cfg)
    trace.write_json(out / "trace.json")
    trace.write_csv(out / "trace.csv")
    _write_report(report, out, "refit_report", cfg.timing)
    refit(sub, cfg.forest_config(), report.chosen_mtry, jobs=cfg.jobs).save(out / "model.json")
    print(f"{trace.method} ({trace.plan_strategy} folds) features={','.join(trace.final_features)} "
          f"| {report.summary_line()}")
    return trace, report


def cmd_predict(model_path, stack_path, out_path, jobs: int = 1) -> Path:
    model = Forest.load(model_path)
    stack = read_stack_manifest(stack_path)
    grid = predict_surface(model, stack, jobs=jobs)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_ascii_grid(grid, out_path)
    if model.is_classification:
        legend = out_path.with_suffix(".legend.csv")
        legend.write_text("index,label\n" + "".join(f"{i},{c}\n" for i, c in enumerate(model.classes)))
    valid = ~grid.mask
    print(f"predicted {int(valid.sum())} of {grid.values.size} cells -> {out_path}")
    return out_path


def load_benchmark_spec(path) -> tuple[BenchmarkSpec, str]:
    """Read a ``[benchmark]`` / ``[design]`` INI spec; returns (spec, task)."""
    spec = BenchmarkSpec()
    task = "regression"
    if path is None:
        return spec, task
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"benchmark spec not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.read(path)
    bench_fields = {f.name: f for f in fields(BenchmarkSpec)}
    design_fields = {f.name: f for f in fields(DesignSpec)}
    values, design = {}, {}
    for section, target, known in (("benchmark", values, bench_fields), ("design", design, design_fields)):
        if not parser.has_section(section):
            continue
        for key, raw in parser.items(section):
            if section == "benchmark" and key == "task":
                task = raw.strip()
                continue
            if key not in known or key == "design":
                raise ConfigError(f"{path}: unknown key [{section}] {key}")
            default = getattr(BenchmarkSpec() if section == "benchmark" else DesignSpec(), key)
            try:
                if isinstance(default, tuple):
                    target[key] = tuple(float(v) for v in raw.replace(",", " ").split())
                elif isinstance(default, bool):
                    target[key] = raw.strip().lower() in ("1", "true", "yes")
                elif isinstance(default, int):
                    target[key] = int(raw)
                elif default is None:
                    target[key] = None if raw.strip().lower() in ("", "none") else float(raw)
                else:
                    target[key] = float(raw)
            except ValueError:
                raise ConfigError(f"{path}: invalid value {raw!r} for {key}") from None
    spec = replace(spec, **values, design=replace(spec.design, **design))
    return spec, task


def cmd_synth(spec_path, out_dir, task: str | None = None, seed: int | None = None) -> Path:
    spec, spec_task = load_benchmark_spec(spec_path)
    if seed is not None:
        spec = replace(spec, seed=seed, design=replace(spec.design, seed=seed))
    bench = make_benchmark(task or spec_task, spec=spec)
    out = Path(out_dir)
    write_stack(bench.stack, out)
    write_samples_csv(bench.table, out / "samples.csv")
    write_ascii_grid(bench.response, out / "response.asc")
    (out / "truth.json").write_text(json.dumps(bench.description, indent=2) + "\n")
    print(f"{bench.description['task']} benchmark: {len(bench.table)} samples in "
          f"{len(set(bench.table.groups.tolist()))} clusters, {len(bench.stack)} bands -> {out}")
    return out


MATRIX_CELLS = (
    ("1", "all", None, None),
    ("2", "selected by RFE spatial", "rfe", "spatial"),
    ("3", "selected by FFS random", "ffs", "random"),
    ("4", "selected by FFS spatial", "ffs", "spatial"),
)


def cmd_matrix(cfg: RunConfig) -> Path:
    """Run the eight-model comparison: 4 feature sets x {random, spatial} CV."""
    table = _load_table(cfg)
    spatial = cfg.fold_strategy if cfg.fold_strategy != RANDOM else CLUSTER
    strategies = {"random": RANDOM, "spatial": spatial}
    names = M.metrics_for(table.task)
    out = _out_dir(cfg)
    rows = []
    for cell_id, label, method, sel_cv in MATRIX_CELLS:
        if method is None:
            features = table.feature_names
        else:
            trace = run_selection(cfg, table, method, strategies[sel_cv])
            trace.write_json(out / f"trace_{cell_id}.json")
            features = trace.final_features
        sub = table.select_features(features)
        for suffix, cv_name in (("a", "random"), ("b", "spatial")):
            plan = _plan(cfg, sub, strategies[cv_name])
            report = cross_validate(sub, plan, cfg.forest_config(), _grid(cfg, sub.n_features),
                                    cfg.objective, jobs=cfg.jobs)
            report.write_json(out / f"report_{cell_id}{suffix}.json", include_timing=cfg.timing)
            rows.append(
                [cell_id + suffix, label, cv_name]
                + [f"{report.metric(n, M.PER_FOLD_MEAN):.4f}" for n in names]
                + [f"{report.metric(n, M.GLOBAL):.4f}" for n in names]
                + [str(report.chosen_mtry), ";".join(features)]
            )
            log.info("matrix %s%s done", cell_id, suffix)
    header = (["id", "variables", "cv"] + [f"by_fold_{n}" for n in names]
              + [f"global_{n}" for n in names] + ["mtry", "features"])
    path = out / "matrix.tsv"
    path.write_text("\n".join("\t".join(r) for r in [header] + rows) + "\n")
    objective = cfg.objective or default_objective(table.task)
    col = header.index(f"by_fold_{objective}")
    print("matrix " + " ".join(f"{r[0]}:{r[col]}" for r in rows) + f" ({objective} by fold) -> {path}")
    return path


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI run manifest")
    p.add_argument("--task", choices=[t.value for t in Task])
    p.add_argument("--samples", help="sample CSV")
    p.add_argument("--out", help="output directory")
    p.add_argument("--folds", choices=STRATEGIES, help="fold strategy")
    p.add_argument("--k", type=int, help="number of random folds")
    p.add_argument("--block-cols", type=int)
    p.add_argument("--block-rows", type=int)
    p.add_argument("--fold-seed", type=int)
    p.add_argument("--objective", choices=M.CLASSIFICATION_METRICS + M.REGRESSION_METRICS)
    p.add_argument("--mtry-grid", help="comma separated mtry values")
    p.add_argument("--n-trees", type=int)
    p.add_argument("--min-node-size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--timing", action="store_true", help="include wall time in reports")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spatialrf", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic benchmark")
    p.add_argument("--spec", help="benchmark spec INI (defaults when omitted)")
    p.add_argument("--out", required=True)
    p.add_argument("--task", choices=[t.value for t in Task])
    p.add_argument("--seed", type=int)

    p = sub.add_parser("cv", help="cross-validate a forest")
    _add_run_flags(p)

    p = sub.add_parser("select", help="feature selection then refit")
    _add_run_flags(p)
    p.add_argument("--selection", choices=("ffs", "rfe"))
    p.add_argument("--selection-folds", choices=STRATEGIES)
    p.add_argument("--epsilon", type=float)

    p = sub.add_parser("predict", help="predict a surface from a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--stack", required=True, help="raster stack manifest")
    p.add_argument("--out", required=True, help="output .asc path")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("matrix", help="run the eight-model comparison")
    _add_run_flags(p)
    p.add_argument("--epsilon", type=float)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "synth":
            cmd_synth(args.spec, args.out, args.task, args.seed)
        elif args.command == "predict":
            cmd_predict(args.model, args.stack, args.out, args.jobs)
        else:
            cfg = build_config(args)
            {"cv": cmd_cv, "select": cmd_select, "matrix": cmd_matrix}[args.command](cfg)
    except SpatialRFError as exc:
        log.error("%s", exc)
        return exc.exit_code
    except OSError as exc:
        log.error("%s", exc)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
