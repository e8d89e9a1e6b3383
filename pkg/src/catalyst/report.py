"""Run-directory emission and re-reading: CSV logs, histograms, summary."""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .pipeline import CHECKPOINTS, ChannelSnapshot, PruneEvent, RunLog, StepRecord

STEP_COLUMNS = ("step", "phase", "train_loss", "reg_value", "test_loss", "test_acc")
CHANNEL_COLUMNS = ("layer", "channel", "c", "filter_norm", "d")
EVENT_COLUMNS = ("phase", "pruned_count", "delta_acc", "delta_loss", "macs_before", "macs_after",
                 "step", "n_before", "acc_before", "acc_after", "loss_before", "loss_after",
                 "params_before", "params_after", "margin", "deviation")


def _f(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def _pf(s: str):
    return math.nan if s == "" else float(s)


def _finite_or_none(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


@dataclass
class HistogramExport:
    checkpoint: str
    layer: int
    c: np.ndarray
    filter_norm: np.ndarray
    d: np.ndarray
    edges_log_c: np.ndarray
    edges_log_norm: np.ndarray
    edges_log_d: np.ndarray

    def counts(self):
        return {
            "log10_c": np.histogram(_log10(self.c), self.edges_log_c)[0],
            "log10_filter_norm": np.histogram(_log10(self.filter_norm), self.edges_log_norm)[0],
            "log10_abs_d": np.histogram(_log10(np.abs(self.d)), self.edges_log_d)[0],
        }


def _log10(v):
    v = np.asarray(v, dtype=np.float64)
    v = v[np.isfinite(v) & (v > 0)]
    return np.log10(v)


def _edges(values_list, bins):
    vals = np.concatenate([_log10(v) for v in values_list]) if values_list else np.zeros(0)
    if vals.size == 0:
        return np.linspace(-1.0, 1.0, bins + 1)
    lo, hi = float(vals.min()), float(vals.max())
    if hi - lo < 1e-9:
        lo, hi = lo - 0.5, hi + 0.5
    return np.linspace(lo, hi, bins + 1)


def histogram_exports(snapshots: List[ChannelSnapshot], bins: int = 30) -> List[HistogramExport]:
    """Histogram-ready arrays per checkpoint with bin edges shared across checkpoints."""
    ec = _edges([s.c for s in snapshots], bins)
    en = _edges([s.filter_norm for s in snapshots], bins)
    ed = _edges([np.abs(s.d) for s in snapshots], bins)
    return [HistogramExport(s.checkpoint, s.layer, s.c, s.filter_norm, s.d, ec, en, ed) for s in snapshots]


def build_summary(runlog: RunLog, meta: Optional[dict] = None) -> dict:
    """Summary statistics recomputable from the emitted CSV files plus ``meta``."""
    meta = meta or {}
    last = runlog.steps[-1] if runlog.steps else None
    events = runlog.events
    macs_dense = events[0].macs_before if events else None
    macs_pruned = events[-1].macs_after if events else None
    margins = {e.phase: _finite_or_none(e.margin) for e in events}
    finite_margins = [m for m in margins.values() if m is not None]
    n0 = events[0].n_before if events else None
    n_final = (events[-1].n_before - events[-1].pruned_count) if events else None
    return {
        "seed": meta.get("seed"),
        "config": meta.get("config"),
        "n_steps": len([s for s in runlog.steps if not s.phase.startswith("prune")]),
        "final_acc": _finite_or_none(last.test_acc) if last else None,
        "final_loss": _finite_or_none(last.test_loss) if last else None,
        "pretrain_acc": meta.get("pretrain_acc"),
        "baseline_acc": meta.get("baseline_acc"),
        "acc_gap_vs_baseline": (None if last is None or meta.get("baseline_acc") is None
                                else float(last.test_acc) - meta["baseline_acc"]),
        "macs_dense": macs_dense,
        "macs_pruned": macs_pruned,
        "speedup": (macs_dense / macs_pruned) if events and macs_pruned else None,
        "params_final": events[-1].params_after if events else None,
        "channels_dense": n0,
        "channels_final": n_final,
        "pruned_fraction": (1.0 - n_final / n0) if events else None,
        "prune_events": [
            {"phase": e.phase, "step": e.step, "pruned_count": e.pruned_count,
             "delta_acc": e.delta_acc, "delta_loss": e.delta_loss,
             "deviation": _finite_or_none(e.deviation), "margin": _finite_or_none(e.margin)}
            for e in events
        ],
        "margin": {
            "per_event": margins,
            "min": min(finite_margins) if finite_margins else None,
        },
        "stop_reasons": meta.get("stop_reasons", {}),
        "notes": meta.get("notes", []),
    }


def _dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def emit_reports(runlog: RunLog, outdir, meta: Optional[dict] = None, figures: bool = False,
                 bins: int = 30) -> List[str]:
    """Write steps.csv, channels_<checkpoint>.csv, prune_events.csv, meta.json,
    histograms.json and summary.json (plus figures/*.png when asked)."""
    meta = dict(meta or {})
    meta.setdefault("stop_reasons", dict(runlog.stop_reasons))
    meta.setdefault("notes", list(runlog.notes))
    try:
        os.makedirs(outdir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create run directory {outdir}: {exc}") from exc
    written = []

    def path(name):
        p = os.path.join(outdir, name)
        written.append(p)
        return p

    with open(path("steps.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STEP_COLUMNS)
        for r in runlog.steps:
            w.writerow([r.step, r.phase, _f(r.train_loss), _f(r.reg_value), _f(r.test_loss), _f(r.test_acc)])

    for snap in runlog.snapshots:
        with open(path(f"channels_{snap.checkpoint}.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CHANNEL_COLUMNS)
            for i, (c, n, d) in enumerate(zip(snap.c, snap.filter_norm, snap.d)):
                w.writerow([snap.layer, i, _f(c), _f(n), _f(d)])

    with open(path("prune_events.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_COLUMNS)
        for e in runlog.events:
            w.writerow([e.phase, e.pruned_count, _f(e.delta_acc), _f(e.delta_loss), e.macs_before, e.macs_after,
                        e.step, e.n_before, _f(e.acc_before), _f(e.acc_after), _f(e.loss_before),
                        _f(e.loss_after), e.params_before, e.params_after, _f(e.margin), _f(e.deviation)])

    hists = histogram_exports(runlog.snapshots, bins)
    _dump_json([
        {"checkpoint": h.checkpoint, "layer": h.layer,
         "edges_log10_c": h.edges_log_c.tolist(), "edges_log10_filter_norm": h.edges_log_norm.tolist(),
         "edges_log10_abs_d": h.edges_log_d.tolist(),
         **{k: v.tolist() for k, v in h.counts().items()}}
        for h in hists
    ], path("histograms.json"))

    _dump_json(meta, path("meta.json"))
    _dump_json(build_summary(runlog, meta), path("summary.json"))

    if figures:
        from .plotting import plot_histograms, plot_training_curves

        figdir = os.path.join(outdir, "figures")
        os.makedirs(figdir, exist_ok=True)
        written.append(plot_training_curves(runlog, os.path.join(figdir, "training_curves.png")))
        if hists:
            written.append(plot_histograms(hists, os.path.join(figdir, "bifurcation_histograms.png")))
    return written


def read_run(outdir) -> Tuple[RunLog, dict]:
    """Rebuild a :class:`RunLog` (indices of pruned channels excepted) and meta from a run directory."""
    if not os.path.isdir(outdir):
        raise FileNotFoundError(f"run directory not found: {outdir}")
    runlog = RunLog()
    with open(os.path.join(outdir, "steps.csv"), newline="") as fh:
        for row in csv.DictReader(fh):
            runlog.steps.append(StepRecord(int(row["step"]), row["phase"], _pf(row["train_loss"]),
                                           _pf(row["reg_value"]), _pf(row["test_loss"]), _pf(row["test_acc"])))
    for name in CHECKPOINTS:
        p = os.path.join(outdir, f"channels_{name}.csv")
        if not os.path.exists(p):
            continue
        with open(p, newline="") as fh:
            rows = list(csv.DictReader(fh))
        layer = int(rows[0]["layer"]) if rows else 0
        arr = {k: np.array([float(r[k]) for r in rows]) for k in ("c", "filter_norm", "d")}
        runlog.snapshots.append(ChannelSnapshot(name, layer, arr["c"], arr["filter_norm"], arr["d"]))
    with open(os.path.join(outdir, "prune_events.csv"), newline="") as fh:
        for r in csv.DictReader(fh):
            margin = _pf(r["margin"])
            runlog.events.append(PruneEvent(
                r["phase"], int(r["step"]), tuple(range(int(r["pruned_count"]))), int(r["n_before"]),
                float(r["acc_before"]), float(r["acc_after"]), float(r["loss_before"]), float(r["loss_after"]),
                int(r["macs_before"]), int(r["macs_after"]), int(r["params_before"]), int(r["params_after"]),
                None if math.isnan(margin) else margin, float(r["deviation"])))
    meta_path = os.path.join(outdir, "meta.json")
    meta = {}
    if os.path.exists(meta_path):
        with open(meta_path) as fh:
            meta = json.load(fh)
    runlog.stop_reasons = dict(meta.get("stop_reasons", {}))
    runlog.notes = list(meta.get("notes", []))
    return runlog, meta


def recompute_summary(outdir, figures: bool = False, bins: int = 30) -> Dict:
    runlog, meta = read_run(outdir)
    summary = build_summary(runlog, meta)
    _dump_json(summary, os.path.join(outdir, "summary.json"))
    if figures:
        from .plotting import plot_histograms, plot_training_curves

        figdir = os.path.join(outdir, "figures")
        os.makedirs(figdir, exist_ok=True)
        plot_training_curves(runlog, os.path.join(figdir, "training_curves.png"))
        if runlog.snapshots:
            plot_histograms(histogram_exports(runlog.snapshots, bins), os.path.join(figdir, "bifurcation_histograms.png"))
    return summary
