"""Experiment plumbing: splits, row subsets, config parsing, artifacts."""

import numpy as np
import pytest

from emtecause.errors import ConfigError
from emtecause.gridgen import EventClass, EventRecord, default_layout
from emtecause.harness import (
    ExperimentConfig,
    evaluate_model,
    evaluation_artifacts,
    labels_of,
    parse_experiment_config,
    stratified_split,
    subset_rows,
    train_one,
)
from emtecause.metrics import compute_metrics
from emtecause.preprocess import InputCase


# ---------------------------------------------------------------------------
# stratified_split
# ---------------------------------------------------------------------------

def test_split_is_disjoint_exhaustive_and_stratified():
    labels = np.repeat(np.arange(5), 20)
    tr, te = stratified_split(labels, 0.8, seed=1)
    assert np.intersect1d(tr, te).size == 0
    assert np.array_equal(np.sort(np.concatenate([tr, te])), np.arange(100))
    for cls in range(5):
        assert np.sum(labels[tr] == cls) == 16
        assert np.sum(labels[te] == cls) == 4


def test_split_rounding_per_class():
    # 6 per class at 0.8 rounds to 5 train / 1 test
    labels = np.repeat(np.arange(3), 6)
    tr, te = stratified_split(labels, 0.8, seed=0)
    for cls in range(3):
        assert np.sum(labels[tr] == cls) == 5
        assert np.sum(labels[te] == cls) == 1


def test_split_seed_behavior():
    labels = np.repeat(np.arange(4), 25)
    a1, _ = stratified_split(labels, 0.8, seed=3)
    a2, _ = stratified_split(labels, 0.8, seed=3)
    b, _ = stratified_split(labels, 0.8, seed=4)
    assert np.array_equal(a1, a2)
    assert not np.array_equal(a1, b)


def test_split_never_empties_a_side_with_two_members():
    labels = np.array([0, 0, 1, 1])
    tr, te = stratified_split(labels, 0.99, seed=0)
    # each class keeps one member on each side
    assert sorted(labels[tr].tolist()) == [0, 1]
    assert sorted(labels[te].tolist()) == [0, 1]


def test_split_single_member_class_goes_to_training():
    labels = np.array([0, 0, 0, 1])
    tr, te = stratified_split(labels, 0.5, seed=0)
    assert 3 in tr and 3 not in te


def test_split_rejects_bad_fraction():
    labels = np.repeat(np.arange(2), 10)
    with pytest.raises(ValueError):
        stratified_split(labels, 0.0, seed=0)
    with pytest.raises(ValueError):
        stratified_split(labels, 1.0, seed=0)


# ---------------------------------------------------------------------------
# record helpers
# ---------------------------------------------------------------------------

def _record(label: EventClass, layout) -> EventRecord:
    S = layout.window_samples
    return EventRecord(label, None, layout, np.zeros((layout.n_sensors, 3, S)), seed=0)


def test_labels_are_zero_based_class_indices():
    layout = default_layout(2, 3000.0)
    recs = [_record(EventClass.LINE_ENERGIZATION, layout),
            _record(EventClass.HIGH_IMPEDANCE_FAULT, layout)]
    assert labels_of(recs).tolist() == [0, 4]


def test_subset_rows_selects_and_reorders():
    images = np.arange(2 * 3 * 4 * 5, dtype=float).reshape(2, 3, 4, 5)
    sub = subset_rows(images, [2, 0])
    assert sub.shape == (2, 3, 2, 5)
    assert np.array_equal(sub[:, :, 0], images[:, :, 2])
    assert np.array_equal(sub[:, :, 1], images[:, :, 0])
    assert sub.flags["C_CONTIGUOUS"]


def test_train_one_rejects_unknown_preset():
    x = np.zeros((4, 1, 2, 30))
    y = np.array([0, 1, 0, 1])
    from emtecause.models import ModelKind

    with pytest.raises(ConfigError, match="preset"):
        train_one(ModelKind.CNN, InputCase.TWO_D, x, y, seed=0, preset="gpu")


# ---------------------------------------------------------------------------
# experiment config parsing
# ---------------------------------------------------------------------------

def test_experiment_config_defaults(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("dataset = data/standard\n")
    config = parse_experiment_config(cfg)
    assert config.dataset == "data/standard"
    assert config.seeds == (1, 2, 3)
    assert config.cases == tuple(InputCase)
    assert config.case is InputCase.TWO_D_W
    assert config.counts == (2, 5, 10)
    assert config.split_fraction == 0.8
    assert config.out_dir == "results"


def test_experiment_config_full_parse(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(
        "dataset = d\n"
        "seeds = 4, 5\n"
        "cases = 2d, 3dw\n"
        "models = cnn, tmlp\n"
        "case = 3d\n"
        "counts = 2, 4\n"
        "order = s02, s01\n"
        "set.near = s01, s02\n"
        "set.far = s03\n"
        "split_fraction = 0.75\n"
        "out_dir = out\n"
    )
    config = parse_experiment_config(cfg)
    assert config.seeds == (4, 5)
    assert config.cases == (InputCase.TWO_D, InputCase.THREE_D_W)
    assert config.case is InputCase.THREE_D
    assert config.counts == (2, 4)
    assert config.order == ("s02", "s01")
    assert config.placements == {"near": ("s01", "s02"), "far": ("s03",)}
    assert config.split_fraction == 0.75


def test_experiment_config_overrides(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("dataset = d\nseeds = 1, 2, 3\nout_dir = a\n")
    config = parse_experiment_config(cfg, out_dir="b", seed_override=9)
    assert config.out_dir == "b"
    assert config.seeds == (9,)


def test_experiment_config_rejects_unknown_key(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("dataset = d\nmystery = 1\n")
    with pytest.raises(ConfigError, match="mystery"):
        parse_experiment_config(cfg)


def test_experiment_config_requires_dataset(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("seeds = 1\n")
    with pytest.raises(ConfigError, match="dataset"):
        parse_experiment_config(cfg)


def test_experiment_config_rejects_bad_values(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("dataset = d\nseeds = one\n")
    with pytest.raises(ConfigError):
        parse_experiment_config(cfg)
    cfg.write_text("dataset = d\ncase = 5d\n")
    with pytest.raises(ConfigError):
        parse_experiment_config(cfg)
    cfg.write_text("dataset = d\nsplit_fraction = 1.5\n")
    with pytest.raises(ConfigError):
        parse_experiment_config(cfg)


def test_experiment_config_validate_rejects_empty_seeds():
    config = ExperimentConfig(dataset="d", seeds=())
    with pytest.raises(ConfigError):
        config.validate()


# ---------------------------------------------------------------------------
# evaluation artifacts
# ---------------------------------------------------------------------------

def test_evaluation_artifacts_files(tmp_path):
    cm = np.diag([4, 3, 2, 5, 6])
    cm[0, 1] = 1
    report = compute_metrics(cm)
    evaluation_artifacts(cm, report, tmp_path)
    confusion = (tmp_path / "confusion.csv").read_text()
    metrics = (tmp_path / "metrics.csv").read_text()
    text = (tmp_path / "report.txt").read_text()
    assert confusion.splitlines()[0].startswith("predicted\\actual,")
    assert metrics.splitlines()[0] == "class,TP,FP,FN,TN,PRE,REC,F1,FPR,undefined_flag"
    assert "overall accuracy" in text
    assert "energize" in confusion and "hif" in metrics
