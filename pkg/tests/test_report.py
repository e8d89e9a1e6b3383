import csv
import json
import os

import pytest

from catalyst.nn import init_mlp
from catalyst.pipeline import LRSchedule, RunLog, TrainConfig, catalyst_prune_full, train_plain
from catalyst.report import (CHANNEL_COLUMNS, EVENT_COLUMNS, STEP_COLUMNS, build_summary, emit_reports,
                             histogram_exports, read_run, recompute_summary)


@pytest.fixture(scope="module")
def small_run(tiny_data):
    cfg = TrainConfig(T=80, T_prime=80, finetune_epochs=1, batch_size=16)
    m = init_mlp([2, 12, 10, 3], target=1, rng=0)
    train_plain(m, tiny_data, LRSchedule(0.05), 60, cfg, stream=0)
    _, runlog = catalyst_prune_full(m, cfg, tiny_data)
    meta = {"seed": 0, "config": {"T": 80}, "baseline_acc": 90.0}
    return runlog, meta


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestEmptyRun:
    def test_headers_only(self, tmp_path):
        emit_reports(RunLog(), tmp_path)
        for name, cols in (("steps.csv", STEP_COLUMNS), ("prune_events.csv", EVENT_COLUMNS)):
            lines = (tmp_path / name).read_text().splitlines()
            assert lines == [",".join(cols)]
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["n_steps"] == 0 and summary["speedup"] is None and summary["prune_events"] == []

    def test_unwritable_dir(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(OSError, match="file"):
            emit_reports(RunLog(), blocker / "sub")


class TestEmitted:
    def test_files(self, small_run, tmp_path):
        runlog, meta = small_run
        written = emit_reports(runlog, tmp_path, meta, figures=True)
        names = {os.path.relpath(p, tmp_path) for p in written}
        assert {"steps.csv", "prune_events.csv", "summary.json", "meta.json", "histograms.json",
                "channels_post-embed.csv", "channels_final.csv",
                os.path.join("figures", "training_curves.png"),
                os.path.join("figures", "bifurcation_histograms.png")} <= names
        rows = read_rows(tmp_path / "channels_post-opt1.csv")
        assert tuple(rows[0]) == CHANNEL_COLUMNS and len(rows) == 10

    def test_summary_roundtrip(self, small_run, tmp_path):
        runlog, meta = small_run
        emit_reports(runlog, tmp_path, meta)
        on_disk = json.loads((tmp_path / "summary.json").read_text())
        assert on_disk == json.loads(json.dumps(build_summary(runlog, {**meta, "stop_reasons": runlog.stop_reasons,
                                                                       "notes": runlog.notes})))

    def test_recompute_matches(self, small_run, tmp_path):
        runlog, meta = small_run
        emit_reports(runlog, tmp_path, meta)
        before = (tmp_path / "summary.json").read_bytes()
        recompute_summary(tmp_path)
        assert (tmp_path / "summary.json").read_bytes() == before

    def test_read_run(self, small_run, tmp_path):
        runlog, meta = small_run
        emit_reports(runlog, tmp_path, meta)
        back, meta_back = read_run(tmp_path)
        assert len(back.steps) == len(runlog.steps)
        assert [e.pruned_count for e in back.events] == [e.pruned_count for e in runlog.events]
        assert meta_back["seed"] == 0
        with pytest.raises(FileNotFoundError):
            read_run(tmp_path / "missing")

    def test_cross_file_deltas(self, small_run, tmp_path):
        runlog, meta = small_run
        emit_reports(runlog, tmp_path, meta)
        steps = read_rows(tmp_path / "steps.csv")
        for ev in read_rows(tmp_path / "prune_events.csv"):
            i = next(k for k, r in enumerate(steps) if r["phase"] == "prune" + ev["phase"][-1])
            before, after = steps[i - 1], steps[i]
            assert abs(float(ev["delta_acc"]) - (float(after["test_acc"]) - float(before["test_acc"]))) <= 1e-12
            assert abs(float(ev["delta_loss"]) - (float(after["test_loss"]) - float(before["test_loss"]))) <= 1e-12

    def test_speedup(self, small_run):
        runlog, meta = small_run
        s = build_summary(runlog, meta)
        assert s["speedup"] == s["macs_dense"] / s["macs_pruned"]
        assert s["macs_pruned"] == runlog.final_macs
        if s["channels_final"] < s["channels_dense"]:
            assert s["speedup"] > 1.0

    def test_deterministic_bytes(self, small_run, tmp_path):
        runlog, meta = small_run
        a, b = tmp_path / "a", tmp_path / "b"
        emit_reports(runlog, a, meta, figures=True)
        emit_reports(runlog, b, meta, figures=True)
        for name in ("steps.csv", "summary.json", "prune_events.csv", "histograms.json",
                     os.path.join("figures", "training_curves.png")):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name


class TestHistograms:
    def test_shared_edges(self, small_run):
        runlog, _ = small_run
        hists = histogram_exports(runlog.snapshots, bins=12)
        assert len({h.edges_log_c.tobytes() for h in hists}) == 1
        for h in hists:
            counts = h.counts()
            assert counts["log10_c"].shape == (12,)
            assert counts["log10_filter_norm"].sum() == (h.filter_norm > 0).sum()

    def test_empty(self):
        assert histogram_exports([]) == []
