"""
gaitid CLI - Gait-based legitimate user identification

Subcommands:
- synth:     write a synthetic CUSTOM_CSV dataset
- extract:   load -> filter -> window -> 72 features -> CSV
- reduce:    fit PCA/ESP on a feature CSV, write the projected CSV
- train:     fit normalizer + projector + KELM on a feature CSV
- evaluate:  run a sweep of experiments (or score a saved model)
- benchmark: per-stage times across window sizes

Exit codes: 0 success, 2 usage/config error, 1 runtime failure.
"""
import argparse
import logging
import os
import re
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd
from dotenv import load_dotenv

import report_components as ui
from gaitid.config_parser import load_experiments
from gaitid.errors import ConfigError, GaitIdError
from gaitid.evaluation import TrainedPipeline, benchmark, extract_recordings, load_recordings, run_experiment
from gaitid.features import FeatureMatrix, apply_normalizer, fit_normalizer
from gaitid.kelm import KernelParams
from gaitid.pipeline_config import LosoMode, PipelineConfig, Protocol
from gaitid.projection import Method, Projector
from gaitid.signal_io import Layout, Sensor, SubActivity
from gaitid.storage import write_text
from gaitid.synthetic import SyntheticSpec, write_synthetic_dataset

logger = logging.getLogger("gaitid.cli")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


# ==========================================
# 1. Argument types
# ==========================================

def _at_least_two(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 2:
        raise argparse.ArgumentTypeError(f"at least 2 users are required, got {value}")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _scalar_or_list(values: Optional[List[Any]]) -> Any:
    """nargs='+' flags: one value is a scalar, several are a sweep axis."""
    if values is None:
        return None
    return values[0] if len(values) == 1 else list(values)


def _safe_name(name: str) -> str:
    return re.sub(r"[^\w.=+-]+", "_", name)


# ==========================================
# 2. Parser
# ==========================================

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")
    common.add_argument("--threads", type=_positive_int, default=None,
                        help="worker threads (default: $GAITID_THREADS or 1)")
    common.add_argument("--seed", type=int, default=None, help="single source of randomness")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")

    experiment = argparse.ArgumentParser(add_help=False)
    experiment.add_argument("--config", type=Path, default=None, help="key = value sweep file")
    experiment.add_argument("--preset", choices=["default", "best", "quick"], default="default")
    experiment.add_argument("--dataset", dest="dataset_path", default=None, help="dataset root (synthetic if omitted)")
    experiment.add_argument("--layout", choices=[l.value for l in Layout], type=str.upper, default=None)
    experiment.add_argument("--users", type=_at_least_two, default=None, help="synthetic users")
    experiment.add_argument("--sessions", type=_positive_int, default=None, help="synthetic sessions")
    experiment.add_argument("--duration", type=float, default=None, help="synthetic recording length (s)")
    experiment.add_argument("--sensor", nargs="+", type=str.upper, default=None,
                            help="sensors; several values sweep")
    experiment.add_argument("--window", nargs="+", type=int, default=None, help="window sizes; several sweep")
    experiment.add_argument("--method", nargs="+", type=str.upper, default=None, help="NONE / PCA / ESP")
    experiment.add_argument("--n-features", nargs="+", type=int, default=None, help="projected feature counts")
    experiment.add_argument("--protocol", type=str.upper, choices=["KFOLD", "LOSO"], default=None)
    experiment.add_argument("--loso-mode", type=str.upper, choices=["SESSION", "SUBJECT"], default=None)
    experiment.add_argument("--target", type=str.upper, choices=["SUBJECT", "SUB_ACTIVITY", "TWO_STAGE"],
                            default=None)
    experiment.add_argument("--folds", type=int, default=None)
    experiment.add_argument("--pso", dest="use_pso", action="store_true", default=None,
                            help="tune kernel parameters with PSO")
    experiment.add_argument("--output-dir", default=None, help="report directory")

    parser = argparse.ArgumentParser(prog="gaitid", description="Gait-based legitimate user identification")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    synth.add_argument("--out", required=True, type=Path, help="dataset root to create")
    synth.add_argument("--users", type=_at_least_two, default=4)
    synth.add_argument("--sessions", type=_positive_int, default=8)
    synth.add_argument("--duration", type=float, default=60.0, help="seconds per recording")
    synth.add_argument("--sensor", nargs="+", type=str.upper, default=["ACC", "LACC"],
                       choices=[s.value for s in Sensor])

    extract = sub.add_parser("extract", parents=[common], help="extract features to CSV")
    extract.add_argument("--dataset", required=True, type=Path, help="dataset root")
    extract.add_argument("--layout", choices=[l.value for l in Layout], type=str.upper, default="CUSTOM_CSV")
    extract.add_argument("--sensor", nargs="+", type=str.upper, default=["ACC"], choices=[s.value for s in Sensor])
    extract.add_argument("--sub-activity", nargs="+", type=str.upper, default=None,
                         choices=[a.value for a in SubActivity])
    extract.add_argument("--window", type=int, default=50)
    extract.add_argument("--overlap", type=float, default=None)
    extract.add_argument("--filter-order", type=int, default=3)
    extract.add_argument("--out", required=True, type=Path, help="feature CSV to write")

    reduce_ = sub.add_parser("reduce", parents=[common], help="project a feature CSV with PCA or ESP")
    reduce_.add_argument("--features", required=True, type=Path, help="feature CSV")
    reduce_.add_argument("--method", type=str.upper, choices=["PCA", "ESP"], default="ESP")
    reduce_.add_argument("--n-features", type=_positive_int, default=30)
    reduce_.add_argument("--out", required=True, type=Path, help="projected CSV to write")
    reduce_.add_argument("--save", type=Path, default=None, help="write the fitted projector here")

    train = sub.add_parser("train", parents=[common], help="fit a model bundle on a feature CSV")
    train.add_argument("--features", required=True, type=Path, help="feature CSV")
    train.add_argument("--method", type=str.upper, choices=[m.value for m in Method], default="NONE")
    train.add_argument("--n-features", type=_positive_int, default=30)
    train.add_argument("--target", type=str.upper, choices=["SUBJECT", "SUB_ACTIVITY"], default="SUBJECT")
    train.add_argument("--pso", dest="use_pso", action="store_true")
    train.add_argument("--kernel", nargs=3, type=float, metavar=("A", "B", "C"), default=None)
    train.add_argument("--save", type=Path, default=None, help="bundle JSON to write")

    evaluate = sub.add_parser("evaluate", parents=[common, experiment], help="run experiments")
    evaluate.add_argument("--model", type=Path, default=None, help="score a saved bundle instead")
    evaluate.add_argument("--features", type=Path, default=None, help="feature CSV for --model")

    bench = sub.add_parser("benchmark", parents=[common, experiment], help="per-stage times per window size")
    bench.add_argument("--windows", nargs="+", type=int, default=[25, 50, 100, 200])
    return parser


# ==========================================
# 3. Helpers
# ==========================================

def configure_logging(verbosity: int):
    level_name = os.getenv("GAITID_LOG_LEVEL", "WARNING").upper()
    level = getattr(logging, level_name, logging.WARNING)
    if verbosity >= 2:
        level = logging.DEBUG
    elif verbosity == 1:
        level = min(level, logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", force=True)


def resolve_threads(args) -> int:
    if args.threads is not None:
        return args.threads
    try:
        return max(1, int(os.getenv("GAITID_THREADS", "1")))
    except ValueError:
        raise ConfigError(f"GAITID_THREADS must be an integer, got {os.getenv('GAITID_THREADS')!r}")


def _base_config(args) -> PipelineConfig:
    if args.preset == "best":
        return PipelineConfig.best_settings()
    if args.preset == "quick":
        return PipelineConfig.quick()
    return PipelineConfig()


def experiment_overrides(args) -> Dict[str, Any]:
    """Flags that override config-file values (None means not given)."""
    overrides = {
        "dataset_path": args.dataset_path,
        "layout": args.layout,
        "synthetic.n_users": args.users,
        "synthetic.n_sessions": args.sessions,
        "synthetic.duration_s": args.duration,
        "window_size": _scalar_or_list(args.window),
        "method": _scalar_or_list(args.method),
        "n_features": _scalar_or_list(args.n_features),
        "protocol": args.protocol,
        "loso_mode": args.loso_mode,
        "target": args.target,
        "folds": args.folds,
        "use_pso": args.use_pso,
        "output_dir": args.output_dir,
    }
    if args.sensor:
        # one sensor per experiment; several flags sweep
        overrides["sensors"] = [[s] for s in args.sensor] if len(args.sensor) > 1 else args.sensor[0]
    if args.seed is not None:
        overrides["seed"] = args.seed
        overrides["synthetic.seed"] = args.seed
    return overrides


def load_configs(args) -> List[PipelineConfig]:
    configs = load_experiments(args.config, experiment_overrides(args), base=_base_config(args))
    # every experiment is checked before any of them runs
    for config in configs:
        config.validate()
    return configs


# ==========================================
# 4. Commands
# ==========================================

def cmd_synth(args) -> int:
    spec = SyntheticSpec(n_users=args.users, n_sessions=args.sessions, duration_s=args.duration,
                         seed=7 if args.seed is None else args.seed, sensors=tuple(args.sensor))
    spec.validate()
    start = time.perf_counter()
    paths = write_synthetic_dataset(args.out, spec, force=args.force)
    ui.render_status("ok", f"{len(paths)} recordings written to {args.out} ({time.perf_counter() - start:.2f}s)")
    return EXIT_OK


def cmd_extract(args) -> int:
    config = PipelineConfig(
        name="extract",
        dataset_path=str(args.dataset),
        layout=args.layout,
        sensors=tuple(args.sensor),
        sub_activities=tuple(args.sub_activity or ()),
        window_size=args.window,
        overlap=args.overlap,
        filter_order=args.filter_order,
    )
    config.validate()
    threads = resolve_threads(args)
    recordings = load_recordings(config, threads)
    start = time.perf_counter()
    matrix = extract_recordings(recordings, config.window_size, config.effective_overlap,
                                config.filter_order, threads)
    elapsed = time.perf_counter() - start
    matrix.save_csv(args.out, force=args.force)
    degenerate = int(matrix.degenerate.sum())
    ui.render_status("ok", f"{len(matrix)} windows x {matrix.n_features} features -> {args.out} ({elapsed:.2f}s)")
    if degenerate:
        ui.render_status("warn", f"{degenerate} windows had degenerate (constant) axes")
    return EXIT_OK


def cmd_reduce(args) -> int:
    matrix = FeatureMatrix.load_csv(args.features)
    normalizer = fit_normalizer(matrix)
    projector = Projector(args.method, args.n_features, seed=7 if args.seed is None else args.seed)
    start = time.perf_counter()
    projected = projector.fit_transform(apply_normalizer(normalizer, matrix.values))
    elapsed = time.perf_counter() - start
    columns = [f"{args.method.lower()}_{i + 1}" for i in range(projected.shape[1])]
    matrix.with_values(projected, columns=columns, normalization=normalizer).save_csv(args.out, force=args.force)
    if args.save is not None:
        projector.save(args.save, force=args.force)
        normalizer.save(args.save.with_name(args.save.stem + ".normalizer.json"), force=args.force)
    if projector.esp is not None:
        ui.render_status("info", f"ESP final stress {projector.esp.final_stress:.6f} "
                                 f"after {len(projector.esp.stress_trace) - 1} iterations")
    ui.render_status("ok", f"{len(matrix)} rows -> {projected.shape[1]} {args.method} features -> {args.out} "
                           f"({elapsed:.2f}s)")
    return EXIT_OK


def cmd_train(args) -> int:
    config = PipelineConfig(
        name="train",
        method=args.method,
        n_features=args.n_features,
        target=args.target,
        use_pso=args.use_pso,
        kernel=KernelParams(*args.kernel) if args.kernel else KernelParams(),
        seed=7 if args.seed is None else args.seed,
    )
    config.validate()
    matrix = FeatureMatrix.load_csv(args.features)
    start = time.perf_counter()
    bundle = TrainedPipeline.fit(matrix, config)
    elapsed = time.perf_counter() - start
    params = bundle.model.params
    ui.render_status("ok", f"trained on {len(matrix)} rows, {bundle.model.n_classes} classes, "
                           f"train accuracy {bundle.score(matrix):.4f} ({elapsed:.2f}s)")
    ui.render_status("info", f"kernel a={params.a:.4g} b={params.b:.4g} C={params.C:.4g}")
    if args.save is not None:
        bundle.save(args.save, force=args.force)
        ui.render_status("ok", f"bundle saved to {args.save}")
    return EXIT_OK


def _score_model(args) -> int:
    if args.features is None:
        raise ConfigError("evaluate --model needs --features")
    bundle = TrainedPipeline.load(args.model)
    matrix = FeatureMatrix.load_csv(args.features)
    accuracy = bundle.score(matrix)
    ui.render_status("ok", f"{args.model}: accuracy {accuracy:.4f} on {len(matrix)} rows of {args.features}")
    return EXIT_OK


def _refuse_existing(paths: List[Path], force: bool) -> None:
    """Fail before any computation if an output file is already there."""
    if force:
        return
    existing = [str(p) for p in paths if p.exists()]
    if existing:
        raise FileExistsError(f"{', '.join(existing)} already exist (use --force to overwrite)")


def cmd_evaluate(args) -> int:
    if args.model is not None:
        return _score_model(args)
    configs = load_configs(args)
    threads = resolve_threads(args)
    output_dir = Path(configs[0].output_dir)
    outputs = [Path(c.output_dir) / f"{_safe_name(c.name)}.json" for c in configs] + [output_dir / "summary.csv"]
    if any(c.protocol == Protocol.LOSO and c.loso_mode == LosoMode.SESSION for c in configs):
        outputs.append(output_dir / "per_user.csv")
    _refuse_existing(outputs, args.force)
    reports = []
    for index, config in enumerate(configs, start=1):
        ui.render_status("run", f"[{index}/{len(configs)}] {config.name}")
        try:
            report = run_experiment(config, threads=threads)
        except ConfigError:
            raise
        except (ValueError, ArithmeticError, OSError) as exc:
            ui.render_status("error", f"experiment {config.name!r} failed: {exc}")
            return EXIT_RUNTIME
        report.save_json(Path(config.output_dir) / f"{_safe_name(config.name)}.json", force=args.force)
        reports.append(report)
        if args.verbose:
            for line in ui.render_split_details(report):
                print(line)

    summary = ui.write_summary_csv(reports, output_dir / "summary.csv", force=args.force)
    session_reports = [r for r in reports if r.protocol == "LOSO-SESSION"]
    if session_reports:
        ui.write_per_user_csv(session_reports, output_dir / "per_user.csv", force=args.force)
    print(ui.render_report_table(reports))
    ui.render_status("ok", f"{len(reports)} experiments -> {summary}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    configs = load_configs(args)
    threads = resolve_threads(args)
    for config in configs:
        for window in args.windows:
            config.with_overrides(window_size=window).validate()
    _refuse_existing([Path(configs[0].output_dir) / "benchmark.csv"], args.force)
    frames = []
    for config in configs:
        ui.render_status("run", f"benchmark {config.name}: windows {args.windows}")
        try:
            rows, _ = benchmark(config, args.windows, threads=threads)
        except ConfigError:
            raise
        except (ValueError, ArithmeticError, OSError) as exc:
            ui.render_status("error", f"benchmark {config.name!r} failed: {exc}")
            return EXIT_RUNTIME
        frame = ui.benchmark_frame(rows)
        frame.insert(0, "name", config.name)
        frames.append(frame)
    combined = frames[0] if len(frames) == 1 else pd.concat(frames, ignore_index=True)
    path = write_text(Path(configs[0].output_dir) / "benchmark.csv",
                      combined.to_csv(index=False, float_format="%.6f", lineterminator="\n"), force=args.force)
    print(combined.to_string(index=False))
    ui.render_status("ok", f"benchmark -> {path}")
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "extract": cmd_extract,
    "reduce": cmd_reduce,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "benchmark": cmd_benchmark,
}


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    configure_logging(args.verbose)
    logger.debug("command %s: %s", args.command, vars(args))
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        ui.render_status("error", f"configuration error: {exc}")
        return EXIT_USAGE
    except (GaitIdError, OSError) as exc:
        ui.render_status("error", f"{args.command} failed: {exc}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
