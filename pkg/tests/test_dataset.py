"""Tests for core/dataset.py — gerador sintético e layout em disco."""

from __future__ import annotations

import json

import numpy as np
import pytest

from core.dataset import (
    SyntheticConfig,
    generate,
    load_annotations,
    load_dataset,
    phase_of,
    read_manifest,
    write_dataset,
)
from core.errors import ConfigError, DataError


def test_generate_is_deterministic(tiny_synthetic_config):
    a, b = generate(tiny_synthetic_config), generate(tiny_synthetic_config)
    for va, vb in zip(a.train.videos + a.test.videos, b.train.videos + b.test.videos):
        assert va.video_id == vb.video_id
        assert va.instances == vb.instances
        assert va.features.tobytes() == vb.features.tobytes()


def test_generate_shapes_and_ids(tiny_data, tiny_synthetic_config):
    assert [v.video_id for v in tiny_data.train.videos] == [f"train_{k:04d}" for k in range(4)]
    assert [v.video_id for v in tiny_data.test.videos] == ["test_0000", "test_0001"]
    for v in tiny_data.train.videos:
        assert v.features.shape == (16, 4)
        assert v.features.dtype == np.float32
    assert tiny_data.prototypes.shape == (3, 3, 4)


def test_generate_respects_bounds_property():
    for seed in range(50):
        cfg = SyntheticConfig(
            seed=seed, num_classes=4, train_videos=4, test_videos=0, length=30, dim=3,
            instances_per_video=(0, 3), duration=(2, 12),
        )
        for v in generate(cfg).train.videos:
            assert 0 <= len(v.instances) <= 3
            for g in v.instances:
                assert 0 <= g.start < g.end <= 30
                assert 2 <= g.n_frames <= 12
                assert 0 <= g.label < 4


def test_noise_zero_draws_prototypes():
    cfg = SyntheticConfig(
        seed=5, num_classes=2, train_videos=3, test_videos=0, length=40, dim=3,
        instances_per_video=(1, 1), duration=(10, 10), noise=0.0,
    )
    data = generate(cfg)
    for v in data.train.videos:
        g = v.instances[0]
        np.testing.assert_array_equal(v.features[: g.start], 0.0)
        for k in range(g.n_frames):
            expected = data.prototypes[g.label, phase_of(k, g.n_frames)].astype(np.float32)
            np.testing.assert_array_equal(v.features[g.start + k], expected)


@pytest.mark.parametrize("k, n, phase", [(0, 10, 0), (1, 10, 0), (2, 10, 1), (7, 10, 1), (8, 10, 2), (0, 1, 1)])
def test_phase_of(k, n, phase):
    assert phase_of(k, n) == phase


def test_zero_test_videos_allowed():
    cfg = SyntheticConfig(seed=0, train_videos=1, test_videos=0, length=32, dim=2, duration=(4, 8))
    assert generate(cfg).test.videos == []


@pytest.mark.parametrize(
    "kwargs",
    [
        {"num_classes": 0},
        {"dim": 1},
        {"train_videos": -1},
        {"instances_per_video": (3, 1)},
        {"duration": (0, 4)},
        {"duration": (8, 300)},
        {"noise": -0.1},
    ],
)
def test_synthetic_config_validation(kwargs):
    with pytest.raises(ConfigError):
        SyntheticConfig(seed=0, **kwargs)


def test_dataset_round_trip(tmp_path, tiny_data):
    write_dataset(tiny_data, tmp_path)
    manifest = read_manifest(tmp_path)
    assert manifest["num_classes"] == 3 and manifest["dim"] == 4
    for split, original in (("train", tiny_data.train), ("test", tiny_data.test)):
        loaded = load_dataset(tmp_path, split)
        assert (loaded.num_classes, loaded.dim) == (original.num_classes, original.dim)
        for a, b in zip(loaded.videos, original.videos):
            assert a.video_id == b.video_id
            assert a.instances == b.instances
            assert a.features.tobytes() == b.features.tobytes()


def test_ground_truth_segments(tiny_data):
    gts = tiny_data.test.ground_truth()
    assert len(gts) == sum(len(v.instances) for v in tiny_data.test.videos)
    assert all(g.score == 1.0 and isinstance(g.start, float) for g in gts)


def test_load_annotations_from_root_or_folder(tmp_path, tiny_data):
    write_dataset(tiny_data, tmp_path)
    from_root = load_annotations(tmp_path)
    from_dir = load_annotations(tmp_path / "annotations")
    assert from_root == from_dir
    assert len(from_root) == 6


def test_load_dataset_missing_manifest(tmp_path):
    with pytest.raises(DataError):
        load_dataset(tmp_path)


def test_load_dataset_manifest_missing_field(tmp_path):
    (tmp_path / "dataset.json").write_text(json.dumps({"num_classes": 2}), encoding="utf-8")
    with pytest.raises(DataError, match="dim"):
        load_dataset(tmp_path)


def test_load_dataset_dimension_mismatch(tmp_path, tiny_data):
    write_dataset(tiny_data, tmp_path)
    manifest = json.loads((tmp_path / "dataset.json").read_text(encoding="utf-8"))
    manifest["dim"] = 5
    (tmp_path / "dataset.json").write_text(json.dumps(manifest), encoding="utf-8")
    with pytest.raises(DataError):
        load_dataset(tmp_path, "train")


def test_load_dataset_unknown_split(tmp_path):
    with pytest.raises(ConfigError):
        load_dataset(tmp_path, "val")


def test_load_annotations_missing_dir(tmp_path):
    with pytest.raises(DataError):
        load_annotations(tmp_path / "nope")
