import csv

import numpy as np
import pytest

from catalyst.data import DatasetError, DatasetSpec, generate_dataset, load_csv_dataset
from catalyst.nn import evaluate, init_mlp
from catalyst.pipeline import LRSchedule, TrainConfig, steps_per_epoch, train_plain


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return str(path)


def flower_rows(rng, n=150):
    # three species, four measurements, 50 of each
    species = np.repeat(["setosa", "versicolor", "virginica"], n // 3)
    centers = {"setosa": [5.0, 3.4, 1.5, 0.2], "versicolor": [5.9, 2.8, 4.3, 1.3], "virginica": [6.6, 3.0, 5.6, 2.0]}
    return [[*(np.array(centers[s]) + 0.3 * rng.normal(size=4)).tolist(), s] for s in species]


class TestGenerators:
    @pytest.mark.parametrize("name", ["gaussian-blobs", "concentric-rings", "spiral"])
    def test_deterministic(self, name):
        a = generate_dataset(DatasetSpec(name, seed=4, n_train=200, n_test=50))
        b = generate_dataset(DatasetSpec(name, seed=4, n_train=200, n_test=50))
        assert a.X_train.tobytes() == b.X_train.tobytes() and a.y_test.tobytes() == b.y_test.tobytes()

    def test_seed_changes_data(self):
        a = generate_dataset(DatasetSpec(seed=0, n_train=50, n_test=10))
        b = generate_dataset(DatasetSpec(seed=1, n_train=50, n_test=10))
        assert not np.array_equal(a.X_train, b.X_train)

    def test_spiral_balanced(self):
        ds = generate_dataset(DatasetSpec("spiral", n_classes=3, n_train=301, n_test=100, noise=0.1))
        for y in (ds.y_train, ds.y_test):
            counts = np.bincount(y, minlength=3)
            assert counts.max() - counts.min() <= 1

    def test_shapes(self):
        ds = generate_dataset({"name": "concentric-rings", "dim": 5, "n_train": 40, "n_test": 20})
        assert ds.X_train.shape == (40, 5) and ds.X_test.shape == (20, 5)
        assert ds.n_features == 5 and ds.n_classes == 3

    def test_zero_noise_blobs_separable(self):
        ds = generate_dataset(DatasetSpec("gaussian-blobs", noise=0.0, n_train=300, n_test=300))
        m = init_mlp([2, 16, 16, 3], rng=0)
        cfg = TrainConfig(batch_size=32)
        train_plain(m, ds, LRSchedule(0.05), 10 * steps_per_epoch(ds, cfg), cfg, stream=0)
        assert evaluate(m, *ds.test)[1] >= 99.0

    @pytest.mark.parametrize("kw", [dict(name="moons"), dict(n_classes=1), dict(dim=0), dict(noise=-1.0),
                                    dict(n_train=0)])
    def test_invalid(self, kw):
        with pytest.raises(DatasetError):
            generate_dataset(DatasetSpec(**kw))


class TestCSV:
    def test_flower_split(self, tmp_path, rng):
        p = write_csv(tmp_path / "flowers.csv", ["sl", "sw", "pl", "pw", "species"], flower_rows(rng))
        ds = load_csv_dataset(p, "species", seed=0)
        assert ds.X_train.shape == (120, 4) and ds.X_test.shape == (30, 4)
        assert ds.class_names == ["setosa", "versicolor", "virginica"]
        assert ds.feature_names == ["sl", "sw", "pl", "pw"]
        assert np.abs(ds.X_train.mean(axis=0)).max() <= 1e-10
        np.testing.assert_allclose(ds.X_train.std(axis=0), 1.0, rtol=1e-12)

    def test_split_depends_on_seed_only(self, tmp_path, rng):
        p = write_csv(tmp_path / "f.csv", ["a", "b", "c", "d", "label"], flower_rows(rng))
        a, b = load_csv_dataset(p, "label", seed=3), load_csv_dataset(p, "label", seed=3)
        assert a.X_test.tobytes() == b.X_test.tobytes()
        assert not np.array_equal(a.y_test, load_csv_dataset(p, "label", seed=4).y_test)

    def test_label_column_anywhere(self, tmp_path):
        p = write_csv(tmp_path / "f.csv", ["label", "x"], [[i % 2, float(i)] for i in range(10)])
        ds = load_csv_dataset(p, "label")
        assert ds.n_features == 1 and len(ds.y_train) == 8

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="nope.csv"):
            load_csv_dataset(str(tmp_path / "nope.csv"), "label")

    def test_bad_field_count(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("x,y,label\n1,2,a\n3,b\n")
        with pytest.raises(DatasetError, match=":3:"):
            load_csv_dataset(str(p), "label")

    def test_non_numeric_names_column(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("x,y,label\n1,2,a\n3,oops,b\n")
        with pytest.raises(DatasetError, match="'y'"):
            load_csv_dataset(str(p), "label")

    def test_missing_label_column(self, tmp_path):
        p = write_csv(tmp_path / "f.csv", ["x", "y"], [[1, 2]])
        with pytest.raises(DatasetError, match="label"):
            load_csv_dataset(p, "label")

    def test_empty(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text("")
        with pytest.raises(DatasetError):
            load_csv_dataset(str(p), "label")
        p.write_text("x,label\n\n")
        with pytest.raises(DatasetError, match="no data"):
            load_csv_dataset(str(p), "label")
