"""``scintclass`` command line: one subcommand per workflow stage.

Stages hand off through files in an output directory, each run leaving a
``manifest.json`` (config snapshot, derived seeds, input and output hashes,
library versions) that can be passed back as ``--config`` to replay it.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import platform
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, parse_bounds
from .evaluate import cross_validate
from .geo import GeometryError
from .ingest import (
    ColumnMap,
    FormatError,
    parse_ismr,
    parse_solar,
    write_diagnostics_csv,
    write_normalized_csv,
    write_solar_csv,
)
from .learners import ModelError, ModelParams, NotFittedError, SVMConvergenceError, load_model, save_model, train
from .metrics import (
    ConfusionMatrix,
    MetricsError,
    accumulate,
    from_json_dict,
    to_csv,
    to_json,
    to_text,
)
from .pipeline import (
    PipelineError,
    read_dataset_csv,
    run_pipeline,
    write_dataset_csv,
    write_provenance,
)
from .synth import SynthSpec, add_rejects, generate
from .tuner import SurrogateError, tune

log = logging.getLogger("scintclass")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- helpers ----------------------------------------------------------------

def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@contextmanager
def _locked(out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise UsageError(f"output directory {out_dir} is locked by another run ({lock})") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _write_text(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8", newline="")
    return path


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _versions() -> dict:
    import scipy

    return {"scintclass": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def _read_dataset(path: str | None):
    if not path:
        raise UsageError("a dataset is required (--data)")
    with open(path, encoding="utf-8", newline="") as fh:
        return read_dataset_csv(fh, {"source": path})


# -- config assembly ---------------------------------------------------------

def _config_from_args(args) -> RunConfig:
    base = RunConfig.load(args.config).to_dict() if args.config else RunConfig().to_dict()
    d = json.loads(json.dumps(base))
    if "model" not in d or args.config is None:
        d["model"] = ModelParams.defaults("bagged").to_dict()

    def put(section, key, value):
        if value is not None:
            d.setdefault(section, {})[key] = value

    for k in ("seed", "out_dir", "ismr", "solar", "data", "model_file"):
        v = getattr(args, k, None)
        if v is not None:
            d[k] = v
    if getattr(args, "columns", None):
        d["columns"] = json.loads(Path(args.columns).read_text(encoding="utf-8"))
    put("pipeline", "elevation_cutoff_deg", getattr(args, "elevation_cutoff", None))
    put("pipeline", "s4_floor", getattr(args, "s4_floor", None))
    put("pipeline", "balance", getattr(args, "balance", None))
    put("pipeline", "receiver_lat_deg", getattr(args, "receiver_lat", None))
    put("pipeline", "receiver_lon_deg", getattr(args, "receiver_lon", None))
    put("pipeline", "shell_height_km", getattr(args, "shell_height_km", None))
    put("pipeline", "earth_radius_km", getattr(args, "earth_radius_km", None))
    if getattr(args, "compute_ipp", None):
        put("pipeline", "use_file_ipp", False)
    put("solar_format", "kp_scale", getattr(args, "kp_scale", None))

    kind = getattr(args, "model", None)
    if kind is not None and kind != d["model"].get("kind"):
        try:
            d["model"] = ModelParams.defaults(kind).to_dict()
        except ModelError as exc:
            raise ConfigError([f"model: {exc}"]) from None
    for item in getattr(args, "param", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--param expects key=value, got {item!r}")
        d["model"][key.strip()] = _parse_value(value)

    put("split", "kind", getattr(args, "split", None))
    put("split", "k", getattr(args, "k", None))
    put("split", "holdout_train_fraction", getattr(args, "train_fraction", None))
    if getattr(args, "stratify", None):
        put("split", "stratify", True)

    put("tuner", "iterations", getattr(args, "iterations", None))
    put("tuner", "initial", getattr(args, "initial", None))
    put("tuner", "candidates", getattr(args, "candidates", None))
    if getattr(args, "bounds", None):
        try:
            put("tuner", "bounds", parse_bounds(args.bounds))
        except ValueError as exc:
            raise ConfigError([f"tuner.bounds: {exc}"]) from None
    return RunConfig.from_dict(d)


# -- subcommands ---------------------------------------------------------------

def cmd_ingest(cfg: RunConfig, args, out: Path) -> list[Path]:
    if not cfg.ismr:
        raise UsageError("ingest needs --ismr")
    result = parse_ismr(cfg.ismr, cfg.columns)
    outputs = []
    with open(out / "normalized.csv", "w", encoding="utf-8", newline="") as fh:
        write_normalized_csv(result.records, fh, args.precision)
    outputs.append(out / "normalized.csv")
    with open(out / "diagnostics.csv", "w", encoding="utf-8", newline="") as fh:
        write_diagnostics_csv(result.diagnostics, fh)
    outputs.append(out / "diagnostics.csv")
    if cfg.solar:
        solar = parse_solar(cfg.solar, cfg.solar_format)
        with open(out / "solar.csv", "w", encoding="utf-8", newline="") as fh:
            write_solar_csv(solar.records, fh)
        outputs.append(out / "solar.csv")
    print(f"parsed {len(result.records)} records, {len(result.diagnostics)} diagnostics")
    return outputs


def cmd_preprocess(cfg: RunConfig, args, out: Path) -> list[Path]:
    if not cfg.ismr or not cfg.solar:
        raise UsageError("preprocess needs --ismr and --solar")
    parsed = parse_ismr(cfg.ismr, cfg.columns)
    solar = parse_solar(cfg.solar, cfg.solar_format)
    res = run_pipeline(parsed.records, solar.records, cfg.pipeline_config())
    res.counts["ismr_diagnostics"] = len(parsed.diagnostics)
    res.counts["solar_diagnostics"] = len(solar.diagnostics)
    name = args.out or "dataset.csv"
    dataset = res.dataset
    outputs = []
    with open(out / name, "w", encoding="utf-8", newline="") as fh:
        write_dataset_csv(dataset, fh)
    outputs.append(out / name)
    sidecar = out / (Path(name).stem + ".provenance.json")
    with open(sidecar, "w", encoding="utf-8") as fh:
        write_provenance(dataset, fh)
    outputs.append(sidecar)
    if res.balanced is not None:
        with open(out / "imbalanced.csv", "w", encoding="utf-8", newline="") as fh:
            write_dataset_csv(res.imbalanced, fh)
        outputs.append(out / "imbalanced.csv")
    if parsed.diagnostics:
        with open(out / "diagnostics.csv", "w", encoding="utf-8", newline="") as fh:
            write_diagnostics_csv(parsed.diagnostics, fh)
        outputs.append(out / "diagnostics.csv")
    print(json.dumps(res.counts, sort_keys=True))
    return outputs


def cmd_synth(cfg: RunConfig, args, out: Path) -> list[Path]:
    props = tuple(float(p) for p in args.proportions.split(","))
    if len(props) != 3:
        raise UsageError("--proportions takes three comma-separated numbers")
    total = sum(props)
    props = tuple(p / total for p in props) if total > 0 else props
    spec = SynthSpec(n_rows=args.rows, class_proportions=props, separation=args.separation,
                     noise_scale=args.noise_scale, seed=cfg.seeds()["synth"])
    data = generate(spec)
    if args.rejects:
        data = add_rejects(data, *([args.rejects] * 5), seed=cfg.seeds()["synth"])
    with open(out / "dataset.csv", "w", encoding="utf-8", newline="") as fh:
        write_dataset_csv(data.dataset, fh)
    with open(out / "ismr.csv", "w", encoding="utf-8", newline="") as fh:
        write_normalized_csv(data.records, fh)
    with open(out / "solar.csv", "w", encoding="utf-8", newline="") as fh:
        write_solar_csv(data.solar, fh)
    print(f"wrote {len(data.dataset)} rows, class counts {data.dataset.class_counts()}")
    return [out / "dataset.csv", out / "ismr.csv", out / "solar.csv"]


def cmd_train(cfg: RunConfig, args, out: Path) -> list[Path]:
    ds = _read_dataset(cfg.data)
    model = train(cfg.model, ds.X, ds.y, seed=cfg.seeds()["model"])
    path = out / "model.json"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        save_model(model, fh)
    print(f"trained {cfg.model.kind} on {len(ds)} rows -> {path}")
    return [path]


def _write_eval(out: Path, cm: ConfusionMatrix, split_plan: dict | None, extra: dict) -> list[Path]:
    text = to_json(cm, split_plan, extra)
    outputs = [_write_text(out / "confusion.json", text + "\n"),
               _write_text(out / "confusion.csv", to_csv(cm))]
    metrics = json.loads(text)
    metrics.pop("counts")
    outputs.append(_write_text(out / "metrics.json", json.dumps(metrics, indent=2, sort_keys=True) + "\n"))
    print(to_text(cm), end="")
    return outputs


def _write_predictions(path: Path, idx, pred, truth=None, scores=None) -> Path:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = ["row", "predicted"] + (["truth"] if truth is not None else [])
        head += ["score_1", "score_2", "score_3"] if scores is not None else []
        w.writerow(head)
        for i in range(len(pred)):
            row = [int(idx[i]), int(pred[i])]
            if truth is not None:
                row.append(int(truth[i]))
            if scores is not None:
                row += [repr(float(s)) for s in scores[i]]
            w.writerow(row)
    return path


def _read_predictions(path: str) -> tuple[np.ndarray, np.ndarray]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or not {"predicted", "truth"} <= set(reader.fieldnames):
            raise FormatError(f"{path}: predictions file needs 'predicted' and 'truth' columns")
        p, t = [], []
        for line_no, row in enumerate(reader, start=2):
            try:
                p.append(int(row["predicted"]))
                t.append(int(row["truth"]))
            except (TypeError, ValueError):
                raise FormatError(f"{path}: line {line_no}: bad class label") from None
    return np.array(p), np.array(t)


def cmd_eval(cfg: RunConfig, args, out: Path) -> list[Path]:
    if args.predictions:
        p, t = _read_predictions(args.predictions)
        return _write_eval(out, accumulate(p, t), None, {"source": "predictions"})
    ds = _read_dataset(cfg.data)
    if cfg.model_file:
        with open(cfg.model_file, encoding="utf-8") as fh:
            model = load_model(fh)
        pred = model.predict(ds.X)
        outputs = _write_eval(out, accumulate(pred, ds.y), None,
                              {"source": "model_file", "model": model.params.to_dict()})
        outputs.append(_write_predictions(out / "predictions.csv", np.arange(len(ds)), pred, ds.y))
        return outputs
    plan = cfg.split_plan()
    res = cross_validate(cfg.model, ds, plan, seed=cfg.seeds()["model"])
    outputs = _write_eval(out, res.pooled, plan.to_dict(), {
        "source": "cross_validation",
        "model": cfg.model.to_dict(),
        "fold_accuracies": res.summary["fold_accuracies"],
        "n_folds": res.summary["n_folds"],
    })
    order = np.argsort(res.indices, kind="stable")
    outputs.append(_write_predictions(out / "predictions.csv", res.indices[order],
                                      res.predictions[order], res.truths[order]))
    return outputs


def cmd_predict(cfg: RunConfig, args, out: Path) -> list[Path]:
    if not cfg.model_file:
        raise UsageError("predict needs --model-file")
    with open(cfg.model_file, encoding="utf-8") as fh:
        model = load_model(fh)
    ds = _read_dataset(cfg.data)
    scores = model.predict_scores(ds.X)
    pred = model.predict(ds.X)
    path = _write_predictions(out / "predictions.csv", np.arange(len(ds)), pred, None, scores)
    print(f"wrote {len(pred)} predictions -> {path}")
    return [path]


def bagged_objective(dataset, base: ModelParams, plan, seed: int):
    """Validation accuracy of bagged trees as a function of ``splits``/``learners``."""
    def objective(params: dict) -> float:
        changes = {}
        if "splits" in params:
            changes["max_splits"] = int(params["splits"])
        if "learners" in params:
            changes["n_learners"] = int(params["learners"])
        return cross_validate(base.with_(kind="bagged", **changes), dataset, plan, seed).accuracy
    return objective


def cmd_tune(cfg: RunConfig, args, out: Path) -> list[Path]:
    ds = _read_dataset(cfg.data)
    plan = cfg.split_plan()
    base = cfg.model if cfg.model.kind == "bagged" else ModelParams.defaults("bagged")
    space = cfg.tuner.space()
    result = tune(bagged_objective(ds, base, plan, cfg.seeds()["model"]), space,
                  n_iterations=cfg.tuner.iterations, n_initial=cfg.tuner.initial,
                  seed=cfg.seeds()["tune"], n_candidates=cfg.tuner.candidates)
    hist = out / "history.csv"
    with open(hist, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", *space.names, "objective", "wall_time_s", "failed", "error"])
        for t in sorted(result.history + result.failures, key=lambda t: t.iteration):
            w.writerow([t.iteration, *[t.params[n] for n in space.names],
                        "" if t.failed else repr(t.objective), f"{t.wall_time:.6f}",
                        int(t.failed), t.error])
    best = {
        "params": result.best.params,
        "objective": result.best.objective,
        "iteration": result.best.iteration,
        "model": base.with_(max_splits=result.best.params.get("splits", base.max_splits),
                            n_learners=result.best.params.get("learners", base.n_learners)).to_dict(),
        "split_plan": plan.to_dict(),
        "search_space": space.to_dict(),
        "n_evaluated": len(result.history),
        "n_failed": len(result.failures),
    }
    path = _write_text(out / "best.json", json.dumps(best, indent=2, sort_keys=True) + "\n")
    print(f"best {result.best.params} accuracy {result.best.objective:.4f}")
    return [hist, path]


def cmd_report(cfg: RunConfig, args, out: Path) -> list[Path]:
    run_dir = Path(args.run_dir)
    src = run_dir / "confusion.json"
    tuned = run_dir / "best.json"
    if not src.exists() and tuned.exists():
        best = json.loads(tuned.read_text(encoding="utf-8"))
        if args.format == "text":
            sys.stdout.write(f"tuned parameters: {best['params']} (accuracy {best['objective']:.4f})\n")
        elif args.format == "csv":
            sys.stdout.write((run_dir / "history.csv").read_text(encoding="utf-8"))
        else:
            sys.stdout.write(json.dumps(best, indent=2, sort_keys=True) + "\n")
        return []
    try:
        data = json.loads(src.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{src}: not valid JSON ({exc})") from None
    cm = from_json_dict(data)
    if args.format == "json":
        sys.stdout.write(to_json(cm, data.get("split_plan")) + "\n")
    elif args.format == "csv":
        sys.stdout.write(to_csv(cm))
    else:
        sys.stdout.write(to_text(cm))
        if tuned.exists():
            best = json.loads(tuned.read_text(encoding="utf-8"))
            sys.stdout.write(f"tuned parameters: {best['params']} (accuracy {best['objective']:.4f})\n")
    return []


def cmd_config(cfg: RunConfig, args, out: Path) -> list[Path]:
    sys.stdout.write(cfg.dumps())
    return []


COMMANDS = {
    "ingest": cmd_ingest,
    "preprocess": cmd_preprocess,
    "synth": cmd_synth,
    "train": cmd_train,
    "tune": cmd_tune,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "report": cmd_report,
    "config": cmd_config,
}
NO_OUTPUT_DIR = {"report", "config"}


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="scintclass", description="Scintillation severity classification workflow.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="JSON run config (or a previous manifest.json)")
        sp.add_argument("--seed", type=int, help="master seed")
        sp.add_argument("--out-dir", dest="out_dir")
        return sp

    def model_opts(sp):
        sp.add_argument("--model", help="tree | naive_bayes | svm | knn | boosted | bagged")
        sp.add_argument("--param", action="append", metavar="KEY=VALUE",
                        help="model hyperparameter, e.g. max_splits=20 (repeatable)")

    def split_opts(sp):
        sp.add_argument("--split", choices=("kfold", "holdout"))
        sp.add_argument("--k", type=int)
        sp.add_argument("--train-fraction", type=float, dest="train_fraction")
        sp.add_argument("--stratify", action="store_true", default=None)

    def shell_opts(sp):
        sp.add_argument("--shell-height-km", type=float, dest="shell_height_km")
        sp.add_argument("--earth-radius-km", type=float, dest="earth_radius_km")

    def pipeline_opts(sp):
        sp.add_argument("--kp-scale", type=float, dest="kp_scale")
        sp.add_argument("--elevation-cutoff", type=float, dest="elevation_cutoff")
        sp.add_argument("--s4-floor", type=float, dest="s4_floor")
        sp.add_argument("--balance", action=argparse.BooleanOptionalAction, default=None)
        sp.add_argument("--receiver-lat", type=float, dest="receiver_lat")
        sp.add_argument("--receiver-lon", type=float, dest="receiver_lon")
        sp.add_argument("--compute-ipp", action="store_true", dest="compute_ipp",
                        help="ignore IPP columns in the file and compute pierce points")
        shell_opts(sp)

    def tuner_opts(sp):
        sp.add_argument("--iterations", type=int)
        sp.add_argument("--initial", type=int)
        sp.add_argument("--candidates", type=int)
        sp.add_argument("--bounds", help="splits=lo:hi,learners=lo:hi[:log]")

    sp = common(sub.add_parser("ingest", help="parse an observation file into normalized CSV"))
    sp.add_argument("--ismr")
    sp.add_argument("--solar")
    sp.add_argument("--columns", help="JSON column map")
    sp.add_argument("--precision", type=int)

    sp = common(sub.add_parser("preprocess", help="run the preprocessing steps"))
    sp.add_argument("--ismr")
    sp.add_argument("--solar")
    sp.add_argument("--columns", help="JSON column map")
    pipeline_opts(sp)
    sp.add_argument("--out", help="dataset file name inside --out-dir (default dataset.csv)")

    sp = common(sub.add_parser("synth", help="generate a synthetic dataset"))
    sp.add_argument("--rows", type=int, default=3000)
    sp.add_argument("--proportions", default="1,1,1")
    sp.add_argument("--separation", type=float, default=3.0)
    sp.add_argument("--noise-scale", type=float, default=1.0, dest="noise_scale")
    sp.add_argument("--rejects", type=int, default=0,
                    help="append this many rows of each kind every preprocessing step drops")
    sp.add_argument("--out", dest="out_dir", help="output directory (same as --out-dir)")

    sp = common(sub.add_parser("train", help="fit a model on a whole dataset"))
    sp.add_argument("--data")
    model_opts(sp)

    sp = common(sub.add_parser("tune", help="Bayesian optimisation of bagged-tree hyperparameters"))
    sp.add_argument("--data")
    tuner_opts(sp)
    model_opts(sp)
    split_opts(sp)

    sp = common(sub.add_parser("eval", help="confusion matrix and rates"))
    sp.add_argument("--data")
    sp.add_argument("--model-file", dest="model_file")
    sp.add_argument("--predictions", help="CSV with 'predicted' and 'truth' columns")
    model_opts(sp)
    split_opts(sp)

    sp = common(sub.add_parser("predict", help="classify a dataset with a saved model"))
    sp.add_argument("--data")
    sp.add_argument("--model-file", dest="model_file")

    sp = common(sub.add_parser("report", help="print a stored evaluation"))
    sp.add_argument("--run-dir", required=True, dest="run_dir")
    sp.add_argument("--format", choices=("text", "json", "csv"), default="text")

    sp = common(sub.add_parser("config", help="print the effective configuration"))
    for name in ("--ismr", "--solar", "--columns", "--data"):
        sp.add_argument(name)
    sp.add_argument("--model-file", dest="model_file")
    pipeline_opts(sp)
    model_opts(sp)
    split_opts(sp)
    tuner_opts(sp)
    return p


def _manifest(cfg: RunConfig, command: str, argv: list[str], outputs: list[Path]) -> dict:
    inputs = {}
    for key in ("ismr", "solar", "data", "model_file"):
        path = getattr(cfg, key)
        if path and Path(path).is_file():
            inputs[key] = {"path": path, "sha256": _sha256(Path(path))}
    return {
        "command": command,
        "argv": argv,
        "config": cfg.to_dict(),
        "derived_seeds": cfg.seeds(),
        "inputs": inputs,
        "outputs": {p.name: _sha256(p) for p in outputs},
        "versions": _versions(),
    }


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config_from_args(args)
        handler = COMMANDS[args.command]
        if args.command in NO_OUTPUT_DIR:
            handler(cfg, args, Path(cfg.out_dir))
            return EXIT_OK
        out = Path(cfg.out_dir)
        with _locked(out):
            outputs = handler(cfg, args, out)
            manifest = _manifest(cfg, args.command, argv, outputs)
            _write_text(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return EXIT_OK
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SVMConvergenceError, SurrogateError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, PipelineError, MetricsError, ModelError, GeometryError,
            NotFittedError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
