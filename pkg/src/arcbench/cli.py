"""Command-line front end: run, probe, ablate and validate-otd subcommands.

Configuration is a flat key-value text file with dotted keys (``arc.beta =
0.8``, ``#`` comments); every key can be overridden by a flag of the same
name (``--arc.beta 0.7``). ``ARCBENCH_OUTPUT_DIR`` overrides ``run.output_dir``
from the file; an explicit ``--run.output_dir`` flag wins over both. Reports
are written to a temporary directory first and promoted only on success, so
failures never leave a partial bundle.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import os
import shutil
import sys
import tempfile
from dataclasses import dataclass

import numpy as np

from . import __version__
from .arc import ArcConfig
from .core import TrainConfig
from .data import SyntheticSpec, TaskStream, generate_synthetic, load_embeddings
from .harness import (
    MetricsReport,
    RunResult,
    Variant,
    ablation_grid,
    linear_probe_experiment,
    otd_validation,
    run_stream,
)
from .otd import Thresholds

OUTPUT_DIR_ENV = "ARCBENCH_OUTPUT_DIR"


class ConfigError(ValueError):
    """Configuration problem; the message names the offending key."""


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int_list(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part.strip() != ""]


def _parse_float_list(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part.strip() != ""]


def _parse_str_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip() != ""]


# key -> (parser, default, help)
SCHEMA: dict[str, tuple] = {
    "data.source": (str, "synthetic", "synthetic | embeddings"),
    "data.path": (str, "", "EMB1 file (required when data.source=embeddings)"),
    "data.num_tasks": (int, 10, "tasks in the stream"),
    "data.step": (int, 10, "classes per task"),
    "data.dim": (int, 64, "feature dimension"),
    "data.mean_scale": (float, 1.0, "stddev of class-mean draws"),
    "data.noise_sigma": (float, 0.6, "within-class stddev"),
    "data.train_per_class": (int, 100, "training examples per class"),
    "data.test_per_class": (int, 100, "test examples per class"),
    "train.epochs": (int, 20, "epochs per task"),
    "train.lr": (float, 5.0, "training learning rate"),
    "train.batch_size": (int, 64, "training mini-batch size"),
    "train.weight_decay": (float, 1.5e-4, "per-step weight decay"),
    "train.replay_per_class": (int, 0, "replay exemplars per past class (0 = memory-free)"),
    "arc.beta": (float, 0.8, "retention confidence threshold"),
    "arc.gamma": (float, 0.8, "correction ratio threshold"),
    "arc.temperature": (float, 2.0, "task-score temperature (1 disables scaling)"),
    "arc.lr": (float, 0.1, "retention learning rate"),
    "arc.retention": (_parse_bool, True, "enable test-time retention"),
    "arc.correction": (_parse_bool, True, "enable test-time correction"),
    "arc.batch_size": (int, 64, "online evaluation batch size"),
    "arc.arc_last": (_parse_bool, False, "adapt only after the final task"),
    "arc.w_mode": (str, "ratio", "misclassification statistic: ratio | raw"),
    "arc.retention_loss": (str, "both", "retention objective: both | ce | em"),
    "run.seeds": (_parse_int_list, [0], "comma-separated seeds"),
    "run.output_dir": (str, "arcbench-out", "report bundle directory"),
    "ablate.losses": (_parse_str_list, ["ce", "em", "both"], "loss variants"),
    "ablate.temperatures": (_parse_str_list, ["on", "off"], "temperature variants"),
    "ablate.w_modes": (_parse_str_list, ["ratio", "raw"], "w-statistic variants"),
    "ablate.betas": (_parse_float_list, [0.6, 0.7, 0.8, 0.9], "beta sweep"),
    "ablate.gammas": (_parse_float_list, [0.6, 0.7, 0.8, 0.9, 1.0], "gamma sweep"),
    "otd.betas": (_parse_float_list, [0.0, 0.8], "betas compared by validate-otd"),
}


def read_config_file(path: str) -> dict[str, str]:
    """Parse ``key = value`` lines; unknown keys are an error."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    raw: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {stripped!r}")
            key, _, value = stripped.partition("=")
            key = key.strip()
            if key not in SCHEMA:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            raw[key] = value.strip()
    return raw


def _effective_config(file_values: dict[str, str], flag_values: dict[str, str]) -> dict:
    """defaults <- config file <- environment <- command-line flags."""
    cfg = {key: default for key, (_, default, _) in SCHEMA.items()}
    for source, values in (("config file", file_values), ("flag", flag_values)):
        for key, text in values.items():
            parser = SCHEMA[key][0]
            try:
                cfg[key] = parser(text)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r} (from {source}): {exc}") from exc
    env_dir = os.environ.get(OUTPUT_DIR_ENV)
    if env_dir and "run.output_dir" not in flag_values:
        cfg["run.output_dir"] = env_dir
    return cfg


@dataclass
class RunConfig:
    """Validated, typed view of the effective configuration."""

    values: dict

    def __post_init__(self):
        v = self.values
        if v["data.source"] not in ("synthetic", "embeddings"):
            raise ConfigError(f"data.source must be synthetic or embeddings, got {v['data.source']!r}")
        if v["data.source"] == "embeddings":
            if not v["data.path"]:
                raise ConfigError("data.path is required when data.source=embeddings")
            if not os.path.isfile(v["data.path"]):
                raise ConfigError(f"data.path does not exist: {v['data.path']!r}")
        if not v["run.seeds"]:
            raise ConfigError("run.seeds must list at least one seed")
        if any(seed < 0 for seed in v["run.seeds"]):
            raise ConfigError("run.seeds must be nonnegative")
        # construct every sub-config now so bad values fail at parse time
        try:
            self.train_config()
        except ValueError as exc:
            raise ConfigError(f"train.*: {exc}") from exc
        try:
            self.arc_config()
        except ValueError as exc:
            raise ConfigError(f"arc.*: {exc}") from exc
        if v["data.source"] == "synthetic":
            try:
                self.synthetic_spec(seed=0)
            except ValueError as exc:
                raise ConfigError(f"data.*: {exc}") from exc

    @property
    def seeds(self) -> list[int]:
        return list(self.values["run.seeds"])

    @property
    def output_dir(self) -> str:
        return self.values["run.output_dir"]

    def train_config(self) -> TrainConfig:
        v = self.values
        return TrainConfig(
            epochs=v["train.epochs"],
            lr=v["train.lr"],
            batch_size=v["train.batch_size"],
            weight_decay=v["train.weight_decay"],
            replay_per_class=v["train.replay_per_class"],
        )

    def arc_config(self, beta: float | None = None) -> ArcConfig:
        v = self.values
        return ArcConfig(
            thresholds=Thresholds(v["arc.beta"] if beta is None else beta, v["arc.gamma"]),
            temperature=v["arc.temperature"],
            lr=v["arc.lr"],
            retention_enabled=v["arc.retention"],
            correction_enabled=v["arc.correction"],
            batch_size=v["arc.batch_size"],
            arc_last=v["arc.arc_last"],
            w_mode=v["arc.w_mode"],
            retention_loss=v["arc.retention_loss"],
        )

    def synthetic_spec(self, seed: int) -> SyntheticSpec:
        v = self.values
        return SyntheticSpec(
            num_tasks=v["data.num_tasks"],
            step=v["data.step"],
            dim=v["data.dim"],
            mean_scale=v["data.mean_scale"],
            noise_sigma=v["data.noise_sigma"],
            train_per_class=v["data.train_per_class"],
            test_per_class=v["data.test_per_class"],
            seed=seed,
        )

    def stream_for_seed(self, seed: int, cache: dict) -> TaskStream:
        if self.values["data.source"] == "embeddings":
            if "stream" not in cache:
                cache["stream"] = load_embeddings(self.values["data.path"])
            return cache["stream"]
        return generate_synthetic(self.synthetic_spec(seed))


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def render_csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(cell) for cell in row])
    return buf.getvalue()


def _metadata(command: str, cfg: RunConfig) -> str:
    lines = [f"arcbench version = {__version__}", f"command = {command}"]
    for key in sorted(SCHEMA):
        value = cfg.values[key]
        if isinstance(value, list):
            rendered = ",".join(_fmt(item) for item in value)
        else:
            rendered = _fmt(value)
        lines.append(f"{key} = {rendered}")
    return "\n".join(lines) + "\n"


def write_bundle(output_dir: str, files: dict[str, str]) -> None:
    """Write all report files to a temp directory, then promote atomically."""
    output_dir = os.path.abspath(output_dir)
    parent = os.path.dirname(output_dir)
    os.makedirs(parent, exist_ok=True)
    if os.path.isdir(output_dir) and os.listdir(output_dir):
        raise ConfigError(f"run.output_dir already exists and is not empty: {output_dir}")
    if os.path.isfile(output_dir):
        raise ConfigError(f"run.output_dir is a file: {output_dir}")
    tmp = tempfile.mkdtemp(prefix=".bundle-", dir=parent)
    try:
        for name, text in files.items():
            with open(os.path.join(tmp, name), "wb") as fh:
                fh.write(text.encode("utf-8"))
        if os.path.isdir(output_dir):
            os.rmdir(output_dir)
        os.rename(tmp, output_dir)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def _metrics_rows(reports: list[MetricsReport]) -> list[list]:
    rows = [
        [m.seed, m.pipeline, m.average_accuracy, m.forgetting]
        for m in sorted(reports, key=lambda m: (m.seed, m.pipeline))
    ]
    for pipeline in sorted({m.pipeline for m in reports}):
        group = [m for m in reports if m.pipeline == pipeline]
        accs = [m.average_accuracy for m in group]
        forgets = [m.forgetting for m in group if m.forgetting is not None]
        rows.append(["mean", pipeline, float(np.mean(accs)),
                     float(np.mean(forgets)) if forgets else None])
        rows.append(["std", pipeline, float(np.std(accs)),
                     float(np.std(forgets)) if forgets else None])
    return rows


def _record_rows(seed: int, result: RunResult, beta: float | None = None) -> list[list]:
    rows = []
    for trace in result.arc_traces:
        for position, (rec, label, task) in enumerate(
            zip(trace.records, trace.true_labels, trace.true_tasks)
        ):
            row = [seed, trace.stage, position, int(task), int(label),
                   rec.initial_class, rec.final_class, rec.decision.value,
                   rec.retention_applied, rec.report.confidence,
                   rec.report.masked_confidence, rec.report.ratio]
            if beta is not None:
                row.insert(1, beta)
            rows.append(row)
    return rows


RECORD_HEADER = ["seed", "stage", "position", "true_task", "true_label",
                 "initial_class", "final_class", "decision", "retention_applied",
                 "confidence", "masked_confidence", "ratio"]


def cmd_run(cfg: RunConfig) -> tuple[dict[str, str], str]:
    train_cfg = cfg.train_config()
    arc_cfg = cfg.arc_config()
    cache: dict = {}
    reports: list[MetricsReport] = []
    r_rows, bias_rows, otd_rows, pred_rows, record_rows = [], [], [], [], []
    for seed in cfg.seeds:
        stream = cfg.stream_for_seed(seed, cache)
        result = run_stream(stream, train_cfg, arc_cfg, seed)
        reports.extend([result.metrics_with_arc, result.metrics_without_arc])
        for pipeline, r in (("arc", result.r_with_arc), ("baseline", result.r_without_arc)):
            for t in range(1, r.num_tasks + 1):
                for i in range(1, t + 1):
                    r_rows.append([seed, pipeline, t, i, r.entry(t, i)])
        if result.bias_histogram is not None:
            for task, count in enumerate(result.bias_histogram, start=1):
                bias_rows.append([seed, task, int(count)])
            for sample, (label, pred) in enumerate(
                zip(result.task1_labels, result.task1_predictions)
            ):
                pred_rows.append([seed, sample, int(label), int(pred)])
        validation = otd_validation(result.arc_traces)
        otd_rows.append([seed, arc_cfg.thresholds.beta,
                         validation.assumption1_precision, validation.assumption1_rate,
                         validation.assumption2_precision, validation.assumption2_rate,
                         validation.flagged1, validation.flagged1_true,
                         validation.flagged2, validation.flagged2_true, validation.samples])
        record_rows.extend(_record_rows(seed, result))

    files = {
        "metadata.txt": _metadata("run", cfg),
        "metrics.csv": render_csv(["seed", "pipeline", "average_accuracy", "forgetting"],
                                  _metrics_rows(reports)),
        "r_matrices.csv": render_csv(["seed", "pipeline", "stage", "task", "accuracy"], r_rows),
        "bias_histogram.csv": render_csv(["seed", "task", "count"], bias_rows),
        "task1_final_predictions.csv": render_csv(["seed", "sample", "true_label", "predicted"],
                                                  pred_rows),
        "otd_validation.csv": render_csv(
            ["seed", "beta", "assumption1_precision", "assumption1_rate",
             "assumption2_precision", "assumption2_rate", "flagged1", "flagged1_true",
             "flagged2", "flagged2_true", "samples"], otd_rows),
        "arc_records.csv": render_csv(RECORD_HEADER, record_rows),
    }
    arc_reports = [m for m in reports if m.pipeline == "arc"]
    base_reports = [m for m in reports if m.pipeline == "baseline"]
    summary = (
        f"seeds: {len(cfg.seeds)}\n"
        f"mean average_accuracy arc={np.mean([m.average_accuracy for m in arc_reports]):.4f} "
        f"baseline={np.mean([m.average_accuracy for m in base_reports]):.4f}"
    )
    return files, summary


def cmd_probe(cfg: RunConfig) -> tuple[dict[str, str], str]:
    train_cfg = cfg.train_config()
    cache: dict = {}
    rows = []
    for seed in cfg.seeds:
        stream = cfg.stream_for_seed(seed, cache)
        for row in linear_probe_experiment(stream, train_cfg, seed):
            rows.append([seed, row.stage, row.task,
                         row.independent_accuracy, row.shared_accuracy])
    files = {
        "metadata.txt": _metadata("probe", cfg),
        "probe.csv": render_csv(
            ["seed", "stage", "task", "independent_accuracy", "shared_accuracy"], rows),
    }
    return files, f"probe rows: {len(rows)}"


def build_variants(cfg: RunConfig) -> list[Variant]:
    v = cfg.values
    try:
        return [
            Variant(loss=loss, temperature=temp, w_mode=w, beta=beta, gamma=gamma)
            for loss, temp, w, beta, gamma in itertools.product(
                v["ablate.losses"], v["ablate.temperatures"], v["ablate.w_modes"],
                v["ablate.betas"], v["ablate.gammas"])
        ]
    except ValueError as exc:
        raise ConfigError(f"ablate.*: {exc}") from exc


def cmd_ablate(cfg: RunConfig) -> tuple[dict[str, str], str]:
    train_cfg = cfg.train_config()
    base_arc = cfg.arc_config()
    variants = build_variants(cfg)
    cache: dict = {}
    rows = []
    for seed in cfg.seeds:
        stream = cfg.stream_for_seed(seed, cache)
        reports = ablation_grid(stream, train_cfg, base_arc, variants, seed)
        for variant, report in sorted(reports, key=lambda pair: pair[0].key()):
            rows.append([seed, variant.loss, variant.temperature, variant.w_mode,
                         variant.beta, variant.gamma,
                         report.average_accuracy, report.forgetting])
    files = {
        "metadata.txt": _metadata("ablate", cfg),
        "ablation.csv": render_csv(
            ["seed", "loss", "temperature", "w_mode", "beta", "gamma",
             "average_accuracy", "forgetting"], rows),
    }
    return files, f"variants: {len(variants)}, rows: {len(rows)}"


def cmd_validate_otd(cfg: RunConfig) -> tuple[dict[str, str], str]:
    train_cfg = cfg.train_config()
    cache: dict = {}
    otd_rows, record_rows = [], []
    for seed in cfg.seeds:
        stream = cfg.stream_for_seed(seed, cache)
        for beta in cfg.values["otd.betas"]:
            arc_cfg = cfg.arc_config(beta=beta)
            result = run_stream(stream, train_cfg, arc_cfg, seed)
            validation = otd_validation(result.arc_traces)
            otd_rows.append([seed, beta,
                             validation.assumption1_precision, validation.assumption1_rate,
                             validation.assumption2_precision, validation.assumption2_rate,
                             validation.flagged1, validation.flagged1_true,
                             validation.flagged2, validation.flagged2_true,
                             validation.samples])
            record_rows.extend(_record_rows(seed, result, beta=beta))
    header = RECORD_HEADER.copy()
    header.insert(1, "beta")
    files = {
        "metadata.txt": _metadata("validate-otd", cfg),
        "otd_validation.csv": render_csv(
            ["seed", "beta", "assumption1_precision", "assumption1_rate",
             "assumption2_precision", "assumption2_rate", "flagged1", "flagged1_true",
             "flagged2", "flagged2_true", "samples"], otd_rows),
        "arc_records.csv": render_csv(header, record_rows),
    }
    return files, f"rows: {len(otd_rows)}"


COMMANDS = {
    "run": cmd_run,
    "probe": cmd_probe,
    "ablate": cmd_ablate,
    "validate-otd": cmd_validate_otd,
}


def _key_to_dest(key: str) -> str:
    return key.replace(".", "__")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arcbench",
        description="Class-incremental benchmark with test-time classifier "
                    "retention and correction.",
        epilog=f"Environment: {OUTPUT_DIR_ENV} overrides run.output_dir.",
    )
    parser.add_argument("--version", action="version", version=f"arcbench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    help_lines = {
        "run": "train sequentially and report paired arc/baseline metrics",
        "probe": "per-task probe heads vs the shared head",
        "ablate": "full variant grid over losses, temperature, w-mode and thresholds",
        "validate-otd": "detection precision at each requested beta",
    }
    for name, text in help_lines.items():
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--config", metavar="FILE", default=None,
                        help="flat key=value config file")
        for key, (_, default, key_help) in SCHEMA.items():
            sp.add_argument(f"--{key}", dest=_key_to_dest(key), metavar="V",
                            default=None, help=f"{key_help} (default: {default})")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        file_values = read_config_file(args.config) if args.config else {}
        flag_values = {
            key: getattr(args, _key_to_dest(key))
            for key in SCHEMA
            if getattr(args, _key_to_dest(key)) is not None
        }
        cfg = RunConfig(_effective_config(file_values, flag_values))
        files, summary = COMMANDS[args.command](cfg)
        write_bundle(cfg.output_dir, files)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(summary)
    print(f"report bundle: {cfg.output_dir}")
    return 0
