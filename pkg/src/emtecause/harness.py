"""Experiment drivers: dataset to images, splits, training runs, tables.

Each driver mirrors one comparison from the study design: input-case
comparison, method comparison, sensor-count sweep and placement sweep.
Every run is seeded, every artifact is a deterministic CSV or text file,
and every experiment writes both forms. The reported statistic across
seeds is the median.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .gridgen import DatasetManifest, EventRecord, load_manifest, load_records
from .metrics import MetricsReport, compute_metrics, confusion, confusion_csv, metrics_csv, render_report
from .models import (
    CNN_PRESETS,
    AutoencoderConfig,
    ModelKind,
    PcaSvmConfig,
    TmlpConfig,
    TrainedModel,
    predict,
    train_autoencoder,
    train_cnn,
    train_pca_svm,
    train_tmlp,
)
from .preprocess import InputCase, build_input

N_CLASSES = 5
DEFAULT_SEEDS = (1, 2, 3)
EVAL_EVERY = 10


def labels_of(records: list[EventRecord]) -> np.ndarray:
    """Zero-based class indices (class code minus 1)."""
    return np.array([int(r.label) - 1 for r in records], dtype=np.int64)


def images_for_case(records: list[EventRecord], case: InputCase) -> np.ndarray:
    """Stack per-record feature images into [N, C, H, W]."""
    if not records:
        raise DataError("no records to build images from")
    return np.stack([build_input(r.voltages, case) for r in records])


def subset_rows(images: np.ndarray, row_indices: list[int]) -> np.ndarray:
    """Restrict images to a subset of sensor rows.

    Valid because every preprocessing step acts per row, so slicing rows
    of the full image equals building images from the sensor subset.
    """
    return np.ascontiguousarray(images[:, :, row_indices, :])


def stratified_split(
    labels: np.ndarray, fraction: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-class seeded shuffle, first `fraction` of each class trains.

    Returns (train_idx, test_idx), disjoint and exhaustive. Classes with
    a single member go entirely to training.
    """
    labels = np.asarray(labels)
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    train: list[np.ndarray] = []
    test: list[np.ndarray] = []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(idx.size)]
        n_train = int(round(fraction * idx.size))
        n_train = max(1, min(idx.size - 1, n_train)) if idx.size > 1 else idx.size
        train.append(idx[:n_train])
        test.append(idx[n_train:])
    train_idx = np.sort(np.concatenate(train))
    test_idx = np.sort(np.concatenate(test)) if any(a.size for a in test) else np.array([], dtype=np.int64)
    assert np.intersect1d(train_idx, test_idx).size == 0
    assert train_idx.size + test_idx.size == labels.size
    return train_idx, test_idx


def train_one(
    kind: ModelKind,
    case: InputCase,
    train_images: np.ndarray,
    train_labels: np.ndarray,
    seed: int,
    preset: str = "rtds",
    eval_set: tuple[np.ndarray, np.ndarray] | None = None,
) -> TrainedModel:
    """Train one model of the given kind with its stock configuration."""
    if kind is ModelKind.CNN:
        if preset not in CNN_PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; expected one of {sorted(CNN_PRESETS)}")
        config = replace(CNN_PRESETS[preset], seed=seed)
        return train_cnn(train_images, train_labels, N_CLASSES, config, case, eval_set, EVAL_EVERY)
    if kind is ModelKind.TMLP:
        return train_tmlp(
            train_images, train_labels, N_CLASSES, TmlpConfig(seed=seed), case, eval_set, EVAL_EVERY
        )
    if kind is ModelKind.PCA_SVM:
        return train_pca_svm(train_images, train_labels, N_CLASSES, PcaSvmConfig(seed=seed), case)
    if kind is ModelKind.AUTOENCODER:
        return train_autoencoder(
            train_images, train_labels, N_CLASSES, AutoencoderConfig(seed=seed), case
        )
    raise ConfigError(f"unknown model kind {kind!r}")  # pragma: no cover


def evaluate_model(
    model: TrainedModel, images: np.ndarray, labels: np.ndarray
) -> tuple[np.ndarray, MetricsReport]:
    pred, _ = predict(model, images)
    cm = confusion(pred, labels, model.n_classes)
    return cm, compute_metrics(cm)


CLASS_NAMES = ["energize", "capbank", "fault", "lightning", "hif"]


# ---------------------------------------------------------------------------
# Experiment configuration
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    dataset: str
    out_dir: str = "results"
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    cases: tuple[InputCase, ...] = tuple(InputCase)
    models: tuple[ModelKind, ...] = (ModelKind.CNN,)
    case: InputCase = InputCase.TWO_D_W
    preset: str = "rtds"
    counts: tuple[int, ...] = (2, 5, 10)
    order: tuple[str, ...] = ()
    placements: dict[str, tuple[str, ...]] = field(default_factory=dict)
    split_fraction: float = 0.8

    def validate(self) -> None:
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        if self.preset not in CNN_PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}")
        if not 0.0 < self.split_fraction < 1.0:
            raise ConfigError("split_fraction must lie in (0, 1)")


def parse_experiment_config(
    path: str | Path, out_dir: str | None = None, seed_override: int | None = None
) -> ExperimentConfig:
    from .config import parse_kv_file

    kv = parse_kv_file(path)
    try:
        if "dataset" not in kv:
            raise ConfigError(f"{path}: missing required key 'dataset'")
        dataset = kv.pop("dataset")

        def split_list(raw: str) -> list[str]:
            return [tok.strip() for tok in raw.split(",") if tok.strip()]

        seeds = tuple(int(s) for s in split_list(kv.pop("seeds", "1, 2, 3")))
        cases = tuple(InputCase(tok) for tok in split_list(kv.pop("cases", "2d, 2dw, 3d, 3dw")))
        models = tuple(ModelKind(tok) for tok in split_list(kv.pop("models", "cnn")))
        case = InputCase(kv.pop("case", "2dw"))
        counts = tuple(int(s) for s in split_list(kv.pop("counts", "2, 5, 10")))
        order = tuple(split_list(kv.pop("order", "")))
        placements: dict[str, tuple[str, ...]] = {}
        for key in sorted(k for k in kv if k.startswith("set.")):
            placements[key[len("set.") :]] = tuple(split_list(kv.pop(key)))
        config = ExperimentConfig(
            dataset=dataset,
            out_dir=out_dir if out_dir is not None else kv.pop("out_dir", "results"),
            seeds=(seed_override,) if seed_override is not None else seeds,
            cases=cases,
            models=models,
            case=case,
            preset=kv.pop("preset", "rtds"),
            counts=counts,
            order=order,
            placements=placements,
            split_fraction=float(kv.pop("split_fraction", 0.8)),
        )
        kv.pop("out_dir", None)
    except ValueError as e:
        raise ConfigError(f"{path}: {e}") from e
    if kv:
        raise ConfigError(f"{path}: unknown keys: {', '.join(sorted(kv))}")
    config.validate()
    return config


def _load_dataset(config: ExperimentConfig) -> tuple[DatasetManifest, list[EventRecord]]:
    manifest = load_manifest(config.dataset)
    root = Path(config.dataset)
    if not root.is_dir():
        root = root.parent
    return manifest, load_records(manifest, root)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _fmt(value: float) -> str:
    return f"{value:.12g}"


# ---------------------------------------------------------------------------
# Experiment drivers
# ---------------------------------------------------------------------------

def compare_inputs(config: ExperimentConfig) -> dict[tuple[str, str], float]:
    """Accuracy of each (input case, model) pair, median over seeds.

    Writes inputs_table.csv (one row per case and model with mean,
    median, min, max over seeds), a text summary, and one accuracy
    versus iteration CSV per case for models that log it.
    """
    config.validate()
    _, records = _load_dataset(config)
    labels = labels_of(records)
    out = Path(config.out_dir)

    table_rows = ["case,model,n_seeds,acc_mean,acc_median,acc_min,acc_max"]
    curve_rows: dict[str, list[str]] = {}
    medians: dict[tuple[str, str], float] = {}
    summary = ["accuracy by input case (median over seeds)\n"]

    for case in config.cases:
        images = images_for_case(records, case)
        for kind in config.models:
            accs = []
            for seed in config.seeds:
                tr, te = stratified_split(labels, config.split_fraction, seed)
                model = train_one(
                    kind, case, images[tr], labels[tr], seed, config.preset,
                    eval_set=(images[te], labels[te]),
                )
                _, report = evaluate_model(model, images[te], labels[te])
                accs.append(report.accuracy)
                for iteration, acc in model.eval_log:
                    curve_rows.setdefault(case.value, []).append(
                        f"{kind.value},{seed},{iteration},{_fmt(acc)}"
                    )
            med = statistics.median(accs)
            medians[(case.value, kind.value)] = med
            table_rows.append(
                f"{case.display},{kind.value},{len(accs)},"
                f"{_fmt(statistics.mean(accs))},{_fmt(med)},{_fmt(min(accs))},{_fmt(max(accs))}"
            )
            summary.append(f"{case.display:6s} {kind.value:12s} {100 * med:6.2f}%")

    _write(out / "inputs_table.csv", "\n".join(table_rows) + "\n")
    _write(out / "inputs_summary.txt", "\n".join(summary) + "\n")
    for case_value, rows in curve_rows.items():
        _write(
            out / f"accvsiter_{case_value}.csv",
            "model,seed,iteration,holdout_acc\n" + "\n".join(rows) + "\n",
        )
    return medians


def compare_methods(config: ExperimentConfig) -> dict[str, dict[str, float]]:
    """All four methods on the same splits of one input case.

    Writes methods_table.csv with median-over-seeds ACC and macro
    PRE/REC/F1/FPR per method, a per-seed detail CSV and a text summary.
    """
    config.validate()
    _, records = _load_dataset(config)
    labels = labels_of(records)
    images = images_for_case(records, config.case)
    out = Path(config.out_dir)
    kinds = tuple(ModelKind)  # the whole point is all four on one footing

    detail_rows = ["model,seed,ACC,PRE,REC,F1,FPR"]
    results: dict[str, dict[str, float]] = {}
    for kind in kinds:
        per_seed = []
        for seed in config.seeds:
            tr, te = stratified_split(labels, config.split_fraction, seed)
            model = train_one(kind, config.case, images[tr], labels[tr], seed, config.preset)
            _, report = evaluate_model(model, images[te], labels[te])
            row = {
                "ACC": report.accuracy,
                "PRE": report.macro_precision,
                "REC": report.macro_recall,
                "F1": report.macro_f1,
                "FPR": report.macro_fpr,
            }
            per_seed.append(row)
            detail_rows.append(
                f"{kind.value},{seed}," + ",".join(_fmt(row[k]) for k in ("ACC", "PRE", "REC", "F1", "FPR"))
            )
        results[kind.value] = {
            key: statistics.median(r[key] for r in per_seed)
            for key in ("ACC", "PRE", "REC", "F1", "FPR")
        }

    table = ["model,ACC,PRE,REC,F1,FPR"]
    summary = [f"method comparison on {config.case.display} (median over seeds)\n"]
    for kind in kinds:
        r = results[kind.value]
        table.append(
            f"{kind.value}," + ",".join(_fmt(r[k]) for k in ("ACC", "PRE", "REC", "F1", "FPR"))
        )
        summary.append(
            f"{kind.value:12s} ACC {100 * r['ACC']:6.2f}%  PRE {100 * r['PRE']:6.2f}%  "
            f"REC {100 * r['REC']:6.2f}%  F1 {100 * r['F1']:6.2f}%  FPR {100 * r['FPR']:5.2f}%"
        )
    _write(out / "methods_table.csv", "\n".join(table) + "\n")
    _write(out / "methods_runs.csv", "\n".join(detail_rows) + "\n")
    _write(out / "methods_summary.txt", "\n".join(summary) + "\n")
    return results


def _sensor_order_indices(manifest: DatasetManifest, order: tuple[str, ...]) -> list[int]:
    ids = manifest.layout.sensor_ids
    if not order:
        return list(range(len(ids)))
    return [manifest.layout.index_of(s) for s in order]


def sweep_sensors(config: ExperimentConfig) -> dict[int, float]:
    """Accuracy versus sensor count, subsets taken as prefixes of the
    configured dominance order (layout order when none is given)."""
    config.validate()
    manifest, records = _load_dataset(config)
    labels = labels_of(records)
    images = images_for_case(records, config.case)
    ordered = _sensor_order_indices(manifest, config.order)
    out = Path(config.out_dir)

    detail = ["count,seed,accuracy"]
    table = ["count,n_seeds,acc_median,acc_min,acc_max"]
    summary = [f"accuracy by sensor count on {config.case.display} (median over seeds)\n"]
    medians: dict[int, float] = {}
    for count in config.counts:
        if count < 1 or count > len(ordered):
            raise ConfigError(f"sensor count {count} outside 1..{len(ordered)}")
        rows = ordered[:count]
        sub = subset_rows(images, rows)
        accs = []
        for seed in config.seeds:
            tr, te = stratified_split(labels, config.split_fraction, seed)
            model = train_one(ModelKind.CNN, config.case, sub[tr], labels[tr], seed, config.preset)
            _, report = evaluate_model(model, sub[te], labels[te])
            accs.append(report.accuracy)
            detail.append(f"{count},{seed},{_fmt(report.accuracy)}")
        med = statistics.median(accs)
        medians[count] = med
        table.append(f"{count},{len(accs)},{_fmt(med)},{_fmt(min(accs))},{_fmt(max(accs))}")
        summary.append(f"{count:3d} sensors  {100 * med:6.2f}%")

    _write(out / "sensors_table.csv", "\n".join(table) + "\n")
    _write(out / "sensors_runs.csv", "\n".join(detail) + "\n")
    _write(out / "sensors_summary.txt", "\n".join(summary) + "\n")
    return medians


def sweep_placement(config: ExperimentConfig) -> dict[str, float]:
    """Accuracy of each named sensor subset (placement sets)."""
    config.validate()
    if not config.placements:
        raise ConfigError("placement sweep needs at least one 'set.<NAME> = ids' entry")
    manifest, records = _load_dataset(config)
    labels = labels_of(records)
    images = images_for_case(records, config.case)
    out = Path(config.out_dir)

    detail = ["set,seed,accuracy"]
    table = ["set,sensors,n_seeds,acc_median,acc_min,acc_max"]
    summary = [f"accuracy by placement set on {config.case.display} (median over seeds)\n"]
    medians: dict[str, float] = {}
    for name in config.placements:
        rows = [manifest.layout.index_of(s) for s in config.placements[name]]
        sub = subset_rows(images, rows)
        accs = []
        for seed in config.seeds:
            tr, te = stratified_split(labels, config.split_fraction, seed)
            model = train_one(ModelKind.CNN, config.case, sub[tr], labels[tr], seed, config.preset)
            _, report = evaluate_model(model, sub[te], labels[te])
            accs.append(report.accuracy)
            detail.append(f"{name},{seed},{_fmt(report.accuracy)}")
        med = statistics.median(accs)
        medians[name] = med
        table.append(
            f"{name},{' '.join(config.placements[name])},{len(accs)},"
            f"{_fmt(med)},{_fmt(min(accs))},{_fmt(max(accs))}"
        )
        summary.append(f"set {name:8s} {100 * med:6.2f}%")

    _write(out / "placement_table.csv", "\n".join(table) + "\n")
    _write(out / "placement_runs.csv", "\n".join(detail) + "\n")
    _write(out / "placement_summary.txt", "\n".join(summary) + "\n")
    return medians


def evaluation_artifacts(
    cm: np.ndarray, report: MetricsReport, out_dir: str | Path
) -> None:
    """Write confusion.csv, metrics.csv and report.txt for one evaluation."""
    out = Path(out_dir)
    _write(out / "confusion.csv", confusion_csv(cm, CLASS_NAMES))
    _write(out / "metrics.csv", metrics_csv(report, CLASS_NAMES))
    _write(out / "report.txt", render_report(cm, report, CLASS_NAMES))
