"""Experiment configuration, baseline methods, persistence and reporting.

A run directory holds::

    config.yaml           resolved configuration
    repeat_<r>.jsonl      one BatchMetrics object per line
    repeat_<r>.json       per-repeat summary
    summary.json          mean/std across repeats

Report tables are recomputed from the JSONL files alone.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import yaml

from .classifier import ClassifierKind, TrainConfig
from .selection import BatchPolicy, EngineConfig, StreamResult, run_stream
from .stream import Dataset, NoiseConfig, Stream, StreamPlan, generate_gaussian_blobs, load_csv, make_stream
from .types import BatchMetrics, DatasetSchema, SelectionConfig

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


METHODS = ("duolab", "duolab_kmeans", "only_strong", "only_weak", "clean_all_suspicious",
           "no_al", "opt_filter", "no_filter")

_POLICIES = {
    "duolab": BatchPolicy(),
    "duolab_kmeans": BatchPolicy(),
    "only_strong": BatchPolicy(labeler="strong_only"),
    "only_weak": BatchPolicy(labeler="weak_only"),
    "clean_all_suspicious": BatchPolicy(cleanse="all"),
    "no_al": BatchPolicy(cleanse="none"),
    "opt_filter": BatchPolicy(filter="oracle", cleanse="none"),
    "no_filter": BatchPolicy(filter="none", train_unqueried=True),
}

# table cells that are meaningless for a method are rendered "-"
_NOT_APPLICABLE = {
    "only_strong": {"n_weak"},
    "only_weak": {"c", "n_strong"},
    "clean_all_suspicious": {"c", "n_strong", "n_weak"},
    "no_al": {"c", "n_strong", "n_weak", "n_cleansed"},
    "opt_filter": {"c", "n_strong", "n_weak", "n_cleansed", "fp"},
    "no_filter": {"tp", "fp"},
}


@dataclass
class DataConfig:
    source: str = "synthetic"
    path: str | None = None
    n_classes: int = 8
    n_features: int = 16
    n_samples: int | None = None
    class_separation: float = 3.0


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    method: str = "duolab"
    seed: int = 0
    n_repeats: int = 1
    replay_initial: bool = False
    data: DataConfig = field(default_factory=DataConfig)
    stream: StreamPlan = field(default_factory=StreamPlan)
    noise_rate: float = 0.3
    train: TrainConfig = field(default_factory=TrainConfig)
    classifier: ClassifierKind = field(default_factory=ClassifierKind)
    selection: SelectionConfig = field(default_factory=SelectionConfig)

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.n_repeats < 1:
            raise ConfigError("n_repeats must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        if not 0 <= self.noise_rate < 1:
            raise ConfigError("noise_rate must lie in [0, 1)")
        if self.data.source not in ("synthetic", "csv"):
            raise ConfigError(f"unknown data source {self.data.source!r}")
        if self.data.source == "csv" and not self.data.path:
            raise ConfigError("data.path is required for csv data")

    def engine(self) -> EngineConfig:
        sel = self.selection
        if self.method == "duolab_kmeans" and not sel.use_clustering:
            sel = dataclasses.replace(sel, use_clustering=True)
        elif self.method != "duolab_kmeans" and sel.use_clustering:
            sel = dataclasses.replace(sel, use_clustering=False)
        return EngineConfig(selection=sel, train=self.train, policy=_POLICIES[self.method],
                            replay_initial=self.replay_initial)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


_SECTIONS = {"data": DataConfig, "stream": StreamPlan, "train": TrainConfig,
             "classifier": ClassifierKind, "selection": SelectionConfig}


def _coerce(value, current):
    if isinstance(value, str) and not isinstance(current, str):
        value = yaml.safe_load(value)
    if isinstance(current, bool) and not isinstance(value, bool):
        raise ConfigError(f"expected a boolean, got {value!r}")
    if isinstance(current, float) and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if isinstance(value, str) and value.lower() in ("inf", "+inf", ".inf", "infinity"):
        value = math.inf
    return value


def config_from_dict(d: dict[str, Any]) -> ExperimentConfig:
    d = dict(d or {})
    top = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(d) - top
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs: dict[str, Any] = {}
    try:
        for key, value in d.items():
            if key in _SECTIONS:
                cls = _SECTIONS[key]
                value = dict(value or {})
                names = {f.name for f in dataclasses.fields(cls)}
                bad = set(value) - names
                if bad:
                    raise ConfigError(f"unknown keys in [{key}]: {sorted(bad)}")
                defaults = cls()
                for k in list(value):
                    value[k] = _coerce(value[k], getattr(defaults, k))
                kwargs[key] = cls(**value)
            else:
                kwargs[key] = _coerce(value, getattr(ExperimentConfig(), key))
        cfg = ExperimentConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    cfg.validate()
    return cfg


def apply_overrides(d: dict[str, Any], overrides: Iterable[str]) -> dict[str, Any]:
    """Apply ``section.key=value`` (or ``key=value``) strings to a raw config dict."""
    d = json.loads(json.dumps(d or {}))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        if len(parts) > 2:
            raise ConfigError(f"override key {key!r} nests too deeply")
        target = d
        if len(parts) == 2:
            target = d.setdefault(parts[0], {})
            if not isinstance(target, dict):
                raise ConfigError(f"{parts[0]} is not a config section")
        target[parts[-1]] = yaml.safe_load(raw)
    return d


def load_config(path=None, overrides: Iterable[str] = ()) -> ExperimentConfig:
    raw: dict[str, Any] = {}
    if path is not None:
        try:
            raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(apply_overrides(raw, overrides))


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)


# -- running ---------------------------------------------------------------

def build_stream(cfg: ExperimentConfig, seed: int, dataset: Dataset | None = None) -> Stream:
    if dataset is None:
        if cfg.data.source == "csv":
            schema = DatasetSchema(cfg.data.n_classes, cfg.data.n_features)
            dataset = load_csv(cfg.data.path, schema)
        else:
            n = cfg.data.n_samples or cfg.stream.total
            dataset = generate_gaussian_blobs(cfg.data.n_classes, cfg.data.n_features, n,
                                              cfg.data.class_separation, seed=seed)
    return make_stream(dataset, cfg.stream, NoiseConfig(cfg.noise_rate, seed), seed=seed)


def run_baseline(method: str, stream: Stream, cfg: ExperimentConfig, seed: int, model=None) -> StreamResult:
    """Run one method over a stream; ``cfg.method`` is ignored in favour of ``method``."""
    cfg = dataclasses.replace(cfg, method=method)
    cfg.validate()
    return run_stream(stream, cfg.classifier, cfg.engine(), seed=seed, model=model)


def metrics_jsonl(metrics: Sequence[BatchMetrics]) -> str:
    return "".join(json.dumps(m.to_dict(), sort_keys=True) + "\n" for m in metrics)


def read_metrics(path) -> list[BatchMetrics]:
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if line.strip():
            try:
                out.append(BatchMetrics.from_dict(json.loads(line)))
            except (ValueError, json.JSONDecodeError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return out


def summarize_run(metrics: Sequence[BatchMetrics], initial_accuracy: float | None = None) -> dict[str, Any]:
    def mean(attr):
        return float(np.mean([getattr(m, attr) for m in metrics])) if metrics else 0.0

    best = max((m.test_accuracy for m in metrics), default=initial_accuracy or 0.0)
    out = {
        "n_batches": len(metrics),
        "best_test_accuracy": float(best),
        "final_test_accuracy": float(metrics[-1].test_accuracy) if metrics else (initial_accuracy or 0.0),
        "mean_n_strong": mean("n_strong"),
        "mean_n_weak": mean("n_weak"),
        "mean_n_cleansed": mean("n_cleansed"),
        "mean_filter_tp_rate": mean("filter_tp_rate"),
        "mean_filter_fp_rate": mean("filter_fp_rate"),
        "n_rollbacks": int(sum(m.rolled_back for m in metrics)),
    }
    if initial_accuracy is not None:
        out["initial_test_accuracy"] = float(initial_accuracy)
    return out


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def run_experiment(cfg: ExperimentConfig, out_dir) -> Path:
    """Run ``cfg.n_repeats`` repeats (seeds ``seed + r``) and persist them."""
    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "config.yaml", dump_config(cfg))
    dataset = None
    if cfg.data.source == "csv":
        dataset = load_csv(cfg.data.path, DatasetSchema(cfg.data.n_classes, cfg.data.n_features))
    summaries = []
    for r in range(cfg.n_repeats):
        seed = cfg.seed + r
        stream = build_stream(cfg, seed, dataset)
        result = run_baseline(cfg.method, stream, cfg, seed)
        _write(out / f"repeat_{r}.jsonl", metrics_jsonl(result.metrics))
        summary = dict(summarize_run(result.metrics, result.initial_test_accuracy), seed=seed, repeat=r)
        _write(out / f"repeat_{r}.json", json.dumps(summary, sort_keys=True, indent=2) + "\n")
        summaries.append(summary)
        logger.info("%s repeat %d: best acc %.4f", cfg.name, r, summary["best_test_accuracy"])
    stats = {}
    for key in summaries[0]:
        if key in ("seed", "repeat"):
            continue
        vals = [float(s[key]) for s in summaries]
        stats[key] = {"mean": float(np.mean(vals)), "std": float(np.std(vals)), "values": vals}
    total = {"name": cfg.name, "method": cfg.method, "strong_cost": cfg.selection.strong_cost,
             "noise_rate": cfg.noise_rate, "n_repeats": cfg.n_repeats, "stats": stats}
    _write(out / "summary.json", json.dumps(total, sort_keys=True, indent=2) + "\n")
    return out


# -- reporting -------------------------------------------------------------

REPORT_COLUMNS = ("method", "c", "noise", "acc", "n_strong", "n_weak", "n_cleansed", "tp", "fp")
REPORT_HEADERS = ("Method", "c", "Noise(%)", "Acc(%)", "no. S", "no. W", "Cleansed", "TP(%)", "FP(%)")


def report_row(run_dir) -> dict[str, Any]:
    """Table row for one run directory, recomputed from its JSONL files."""
    run_dir = Path(run_dir)
    cfg_path = run_dir / "config.yaml"
    if not cfg_path.exists():
        raise FileNotFoundError(f"{run_dir} is not a run directory (no config.yaml)")
    cfg = yaml.safe_load(cfg_path.read_text(encoding="utf-8"))
    files = sorted(run_dir.glob("repeat_*.jsonl"), key=lambda p: int(p.stem.split("_")[1]))
    if not files:
        raise FileNotFoundError(f"{run_dir} has no repeat_*.jsonl metrics")
    runs = [summarize_run(read_metrics(p)) for p in files]
    method = cfg["method"]

    def avg(key):
        return float(np.mean([r[key] for r in runs]))

    row = {
        "method": method,
        "c": cfg["selection"]["strong_cost"],
        "noise": 100 * cfg["noise_rate"],
        "acc": 100 * avg("best_test_accuracy"),
        "n_strong": avg("mean_n_strong"),
        "n_weak": avg("mean_n_weak"),
        "n_cleansed": avg("mean_n_cleansed"),
        "tp": 100 * avg("mean_filter_tp_rate"),
        "fp": 100 * avg("mean_filter_fp_rate"),
        "n_repeats": len(runs),
    }
    for key in _NOT_APPLICABLE.get(method, ()):
        row[key] = None
    return row


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, str):
        return value
    if isinstance(value, int):
        return str(value)
    return f"{value:.2f}"


def report(run_dirs: Sequence, csv_path=None) -> str:
    """Aligned text table (returned) and optional CSV of the runs."""
    if not run_dirs:
        raise ValueError("no run directories given")
    rows = [report_row(d) for d in run_dirs]
    cells = [[_fmt(r[c]) for c in REPORT_COLUMNS] for r in rows]
    widths = [max(len(h), *(len(row[i]) for row in cells)) for i, h in enumerate(REPORT_HEADERS)]
    lines = ["  ".join(h.ljust(w) if i == 0 else h.rjust(w) for i, (h, w) in enumerate(zip(REPORT_HEADERS, widths)))]
    lines.append("  ".join("-" * w for w in widths))
    for row in cells:
        lines.append("  ".join(v.ljust(w) if i == 0 else v.rjust(w) for i, (v, w) in enumerate(zip(row, widths))))
    if csv_path is not None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in rows:
            w.writerow(["-" if r[c] is None else (repr(r[c]) if isinstance(r[c], float) else r[c])
                        for c in REPORT_COLUMNS])
        Path(csv_path).write_text(buf.getvalue(), encoding="utf-8")
    return "\n".join(lines) + "\n"


def read_report_csv(path) -> list[dict[str, Any]]:
    rows = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            row: dict[str, Any] = {}
            for k, v in rec.items():
                if k == "method":
                    row[k] = v
                elif v == "-":
                    row[k] = None
                elif k == "c":
                    row[k] = int(v)
                else:
                    row[k] = float(v)
            rows.append(row)
    return rows


def sweep(cfg: ExperimentConfig, out_dir, methods: Sequence[str], noise_rates: Sequence[float],
          strong_costs: Sequence[int]) -> list[Path]:
    """Grid over methods x noise rates x strong costs, one run directory each."""
    out = Path(out_dir)
    dirs = []
    for noise in noise_rates:
        for c in strong_costs:
            for method in methods:
                if "c" in _NOT_APPLICABLE.get(method, ()) and c != strong_costs[0]:
                    continue
                sub = dataclasses.replace(
                    cfg, method=method, noise_rate=float(noise),
                    selection=dataclasses.replace(cfg.selection, strong_cost=int(c)),
                    name=f"{method}_noise{noise:g}_c{c}")
                sub.validate()
                dirs.append(run_experiment(sub, out / sub.name))
    return dirs
