import json

import pytest

from lidarcs.core import CATEGORIES, Category, ObjectAnnotation
from lidarcs.dataset import DatasetManifest, build_mini_dataset, dataset_stats, format_stats_table, read_manifest
from lidarcs.errors import InvalidManifest
from lidarcs.io import read_annotations, read_cloud, write_annotations
from lidarcs.pattern import SensorSpec
from lidarcs.scene import RenderConfig

TINY = {
    "A": SensorSpec("A", 8, -20.0, 2.0, azimuth_resolution=2.0),
    "B": SensorSpec("B", 16, -24.0, 4.0, azimuth_resolution=1.0),
}


def _car():
    return ObjectAnnotation(Category.CAR, 10, 0, -1.2, 1.9, 4.5, 1.6, 0.0)


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("mini")
    m = build_mini_dataset(out, sensors=("A", "B"), frames=4, objects_per_frame=6, seed=1,
                           config=RenderConfig(256, 0.2), sensor_specs=TINY, backgrounds=1)
    return out, m


class TestManifest:
    def test_groups_must_share_frames(self):
        with pytest.raises(InvalidManifest):
            DatasetManifest("x", {"A": ["1", "2"], "B": ["1"]}, {}).validate()

    def test_splits_disjoint(self):
        with pytest.raises(InvalidManifest):
            DatasetManifest("x", {"A": ["1", "2"]}, {"train": ["1"], "test": ["1", "2"]}).validate()

    def test_split_frames_known(self):
        with pytest.raises(InvalidManifest):
            DatasetManifest("x", {"A": ["1"]}, {"train": ["9"]}).validate()

    def test_bad_json(self, tmp_path):
        (tmp_path / "m.json").write_text("[1, 2]")
        with pytest.raises(InvalidManifest):
            read_manifest(tmp_path / "m.json")


class TestStats:
    def test_empty_manifest_zero(self, tmp_path):
        (tmp_path / "m.json").write_text(json.dumps({"name": "e", "groups": {}, "splits": {}}))
        assert dataset_stats(read_manifest(tmp_path / "m.json")) == {c: 0 for c in CATEGORIES}

    def test_three_frames_two_cars(self, tmp_path):
        write_annotations(tmp_path / "a.jsonl", {f: [_car(), _car()] for f in ("1", "2", "3")})
        doc = {"name": "t", "groups": {"A": ["1", "2", "3"]}, "splits": {"train": ["1"], "test": ["2", "3"]},
               "annotations": ["a.jsonl"]}
        (tmp_path / "m.json").write_text(json.dumps(doc))
        counts = dataset_stats(read_manifest(tmp_path / "m.json"))
        assert counts[Category.CAR] == 6
        assert sum(counts.values()) == 6

    def test_table_format(self):
        counts = {Category.CAR: 1_218_000, Category.TRUCK: 164_000, Category.PEDESTRIAN: 230_000,
                  Category.BICYCLIST: 69_000, Category.MOTORCYCLIST: 130_000}
        table = format_stats_table(counts, short=True)
        head, row = table.splitlines()
        assert head.split("|")[1].split() == ["Car", "Truck", "Pedestrian", "Bicyclist", "Motorcyclist"]
        assert row.split("|")[1].split() == ["1218k", "164k", "230k", "69k", "130k"]
        assert format_stats_table({Category.CAR: 6}).splitlines()[1].split("|")[1].split() == ["6", "0", "0", "0", "0"]


class TestMiniDataset:
    def test_layout(self, tiny_dataset):
        out, m = tiny_dataset
        assert sorted(m.groups) == ["A", "B"]
        assert m.splits == {"train": ["000000", "000001"], "test": ["000002", "000003"]}
        for s in ("A", "B"):
            for f in m.frame_ids:
                assert len(read_cloud(out / s / f"{f}.bin")) > 0
        back = read_manifest(out / "manifest.json")
        assert back.to_dict() == m.to_dict()

    def test_shared_annotations(self, tiny_dataset):
        out, m = tiny_dataset
        labels = read_annotations(out / "annotations.jsonl")
        assert list(labels) == m.frame_ids
        assert all(len(v) == 6 for v in labels.values())
        counts = dataset_stats(read_manifest(out / "manifest.json"))
        assert {c.value: n for c, n in counts.items()} == m.category_counts

    def test_deterministic(self, tiny_dataset, tmp_path):
        out, _ = tiny_dataset
        build_mini_dataset(tmp_path, sensors=("A", "B"), frames=4, objects_per_frame=6, seed=1,
                           config=RenderConfig(256, 0.2), sensor_specs=TINY, backgrounds=1)
        for rel in ("A/000003.bin", "B/000000.bin", "annotations.jsonl"):
            assert (tmp_path / rel).read_bytes() == (out / rel).read_bytes()

    def test_denser_sensor_has_more_points(self, tiny_dataset):
        out, m = tiny_dataset
        for f in m.frame_ids:
            assert len(read_cloud(out / "B" / f"{f}.bin")) > len(read_cloud(out / "A" / f"{f}.bin"))
