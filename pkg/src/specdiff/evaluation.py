"""ISO 30107-3 metrics, ROC curves, and the cross-validation harnesses."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import pipeline
from .dataset import Dataset, split_kfold, split_leave_one_id_out
from .errors import EvaluationError
from .svm import LabeledSet, SvmConfig, decision_values, grid_candidates, select_threshold, train_svm

MEAN_ROC_FAR_GRID = [i / 100.0 for i in range(101)]


@dataclass(frozen=True)
class EvalReport:
    apcer: float
    bpcer: float
    acer: float
    roc: tuple = ()  # of (far, tar, threshold)
    n_live: int = 0
    n_attack: int = 0
    per_spoof_kind_apcer: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "apcer": self.apcer,
            "bpcer": self.bpcer,
            "acer": self.acer,
            "n_live": self.n_live,
            "n_attack": self.n_attack,
            "per_spoof_kind_apcer": dict(sorted(self.per_spoof_kind_apcer.items())),
            "roc": [list(p) for p in self.roc],
        }


def compute_metrics(scores, labels, threshold, spoof_kinds=None):
    """APCER/BPCER/ACER at a fixed threshold; live iff score >= threshold.

    labels: +1 bona fide, -1 attack. spoof_kinds, when given, adds the
    per-kind APCER breakdown.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    live = labels == 1
    attack = labels == -1
    if not live.any() or not attack.any():
        raise EvaluationError("both bona fide and attack samples are required")
    accepted = scores >= threshold
    apcer = float(np.mean(accepted[attack]))
    bpcer = float(np.mean(~accepted[live]))
    per_kind = {}
    if spoof_kinds is not None:
        kinds = np.asarray(spoof_kinds, dtype=object)
        for kind in sorted({k for k in kinds[attack] if k is not None}):
            mask = attack & (kinds == kind)
            per_kind[kind] = float(np.mean(accepted[mask]))
    return EvalReport(
        apcer=apcer, bpcer=bpcer, acer=(apcer + bpcer) / 2.0,
        n_live=int(live.sum()), n_attack=int(attack.sum()),
        per_spoof_kind_apcer=per_kind)


def roc_curve(scores, labels):
    """(false-accept rate, true-accept rate, threshold) points, threshold
    swept over -inf, midpoints of unique sorted scores, +inf."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    live = scores[labels == 1]
    attack = scores[labels == -1]
    if live.size == 0 or attack.size == 0:
        raise EvaluationError("both bona fide and attack samples are required")
    uniq = np.unique(scores)
    thresholds = [-math.inf]
    thresholds.extend(((uniq[:-1] + uniq[1:]) / 2.0).tolist())
    thresholds.append(math.inf)
    points = []
    for t in thresholds:
        far = float(np.mean(attack >= t))
        tar = float(np.mean(live >= t))
        points.append((far, tar, t))
    return points


def subgroup_eval(scores, labels, groups, threshold):
    """Per-group APCER/BPCER at a fixed threshold.

    Groups with no attacks report APCER as None (and likewise for BPCER
    without bona fide samples).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    groups = np.asarray(groups, dtype=object)
    accepted = scores >= threshold
    out = {}
    for g in sorted({g for g in groups if g is not None}):
        mask = groups == g
        attack = mask & (labels == -1)
        live = mask & (labels == 1)
        out[g] = {
            "apcer": float(np.mean(accepted[attack])) if attack.any() else None,
            "bpcer": float(np.mean(~accepted[live])) if live.any() else None,
            "n_live": int(live.sum()),
            "n_attack": int(attack.sum()),
        }
    return out


# -- harness -----------------------------------------------------------------

@dataclass(frozen=True)
class FeatureTable:
    kind: str
    features: np.ndarray
    labels: np.ndarray       # +1 live, -1 spoof
    pair_ids: tuple
    subject_ids: tuple
    spoof_kinds: tuple
    lighting_tags: tuple


def extract_feature_table(ds: Dataset, kind) -> FeatureTable:
    """Run the full pipeline over every record of the dataset."""
    rows = []
    for record in ds.records:
        rows.append(pipeline.extract_descriptor(record, kind).values)
    return FeatureTable(
        kind=kind,
        features=np.vstack(rows) if rows else np.zeros((0, 0)),
        labels=np.array([1 if r.label == "live" else -1 for r in ds.records]),
        pair_ids=tuple(r.pair_id for r in ds.records),
        subject_ids=tuple(r.subject_id for r in ds.records),
        spoof_kinds=tuple(r.spoof_kind for r in ds.records),
        lighting_tags=tuple(r.lighting_tag for r in ds.records),
    )


@dataclass(frozen=True)
class FoldResult:
    index: int
    report: Optional[EvalReport]
    failed: Optional[str] = None  # reason when the fold could not be run
    config: Optional[SvmConfig] = None
    threshold: Optional[float] = None


@dataclass(frozen=True)
class ProtocolResult:
    folds: tuple
    mean: Optional[EvalReport]

    def to_dict(self):
        return {
            "folds": [
                {
                    "index": f.index,
                    "failed": f.failed,
                    "report": f.report.to_dict() if f.report else None,
                }
                for f in self.folds
            ],
            "mean": self.mean.to_dict() if self.mean else None,
        }


def _train_fold(train_set: LabeledSet, cfg: SvmConfig, grid):
    """Train (optionally over the small grid, picked by training-set ACER)."""
    candidates = grid_candidates(cfg, train_set.features) if grid else [cfg]
    best = None
    for cand in candidates:
        model = train_svm(train_set, cand)
        scores = decision_values(model, train_set.features)
        thr = select_threshold(scores[train_set.labels == 1], scores[train_set.labels == -1])
        rep = compute_metrics(scores, train_set.labels, thr)
        if best is None or rep.acer < best[0] - 1e-15:
            best = (rep.acer, model, thr, cand)
    _, model, thr, used = best
    model = replace(model, threshold=thr)
    return model, used


def _mean_roc(rocs):
    """Rate-averaged ROC: mean TAR at a common FAR grid."""
    points = []
    for far in MEAN_ROC_FAR_GRID:
        tars = []
        for roc in rocs:
            fars = np.array([p[0] for p in roc])
            tars_f = np.array([p[1] for p in roc])
            order = np.argsort(fars, kind="mergesort")
            tars.append(float(np.interp(far, fars[order], tars_f[order])))
        points.append((far, float(np.mean(tars)), math.nan))
    return tuple(points)


def run_protocol(ds: Dataset, kind, cfg: SvmConfig, protocol="loio", k=10,
                 seed=0, grid=False, live_override: Dataset = None,
                 features: FeatureTable = None,
                 live_features: FeatureTable = None) -> ProtocolResult:
    """Cross-validated train/threshold/test; returns per-fold and mean reports.

    protocol: "loio" or "kfold". live_override sources the bona fide test
    scores from a separate manifest (the simulated-BPCER construction).
    Precomputed FeatureTables may be passed to skip re-extraction.
    """
    if protocol == "loio":
        folds = split_leave_one_id_out(ds)
    elif protocol == "kfold":
        folds = split_kfold(ds, k, seed)
    else:
        raise ValueError(f"unknown protocol {protocol!r}")

    table = features if features is not None else extract_feature_table(ds, kind)
    row_of = {pid: i for i, pid in enumerate(table.pair_ids)}

    override_table = None
    if live_override is not None:
        override_table = (live_features if live_features is not None
                          else extract_feature_table(live_override, kind))
        if not np.all(override_table.labels == 1):
            raise EvaluationError("--live-manifest must contain only live records")

    results = []
    reports = []
    rocs = []
    for fold_index, (train_ds, test_ds) in enumerate(folds):
        tr = [row_of[r.pair_id] for r in train_ds.records]
        te = [row_of[r.pair_id] for r in test_ds.records]
        y_tr = table.labels[tr]
        if len(set(y_tr.tolist())) < 2:
            results.append(FoldResult(index=fold_index, report=None,
                                      failed="single class in training fold"))
            continue
        train_set = LabeledSet(features=table.features[tr], labels=y_tr)
        model, used_cfg = _train_fold(train_set, cfg, grid)

        if override_table is not None:
            attack_mask = table.labels[te] == -1
            te_attack = [i for i, m in zip(te, attack_mask) if m]
            scores = np.concatenate([
                decision_values(model, override_table.features),
                decision_values(model, table.features[te_attack]),
            ]) if te_attack else decision_values(model, override_table.features)
            labels = np.concatenate([
                override_table.labels,
                table.labels[te_attack],
            ]) if te_attack else override_table.labels
            kinds = tuple(override_table.spoof_kinds) + tuple(
                table.spoof_kinds[i] for i in te_attack)
        else:
            scores = decision_values(model, table.features[te])
            labels = table.labels[te]
            kinds = tuple(table.spoof_kinds[i] for i in te)

        try:
            report = compute_metrics(scores, labels, model.threshold, spoof_kinds=kinds)
            report = replace(report, roc=tuple(roc_curve(scores, labels)))
        except EvaluationError as exc:
            results.append(FoldResult(index=fold_index, report=None, failed=str(exc)))
            continue
        results.append(FoldResult(index=fold_index, report=report,
                                  config=used_cfg, threshold=model.threshold))
        reports.append(report)
        rocs.append(report.roc)

    mean = None
    if reports:
        apcer = float(np.mean([r.apcer for r in reports]))
        bpcer = float(np.mean([r.bpcer for r in reports]))
        kind_keys = sorted({k for r in reports for k in r.per_spoof_kind_apcer})
        per_kind = {
            key: float(np.mean([r.per_spoof_kind_apcer[key] for r in reports
                                if key in r.per_spoof_kind_apcer]))
            for key in kind_keys
        }
        mean = EvalReport(
            apcer=apcer, bpcer=bpcer, acer=(apcer + bpcer) / 2.0,
            roc=_mean_roc(rocs),
            n_live=sum(r.n_live for r in reports),
            n_attack=sum(r.n_attack for r in reports),
            per_spoof_kind_apcer=per_kind)
    return ProtocolResult(folds=tuple(results), mean=mean)


# -- export ------------------------------------------------------------------

def write_report_json(result: ProtocolResult, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(result.to_dict(), fh, indent=2)
        fh.write("\n")


def write_report_csv(result: ProtocolResult, path):
    """One row per fold plus a mean row."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fold", "apcer", "bpcer", "acer", "n_live", "n_attack", "failed"])
        for f in result.folds:
            if f.report is None:
                writer.writerow([f.index, "", "", "", "", "", f.failed])
            else:
                r = f.report
                writer.writerow([f.index, r.apcer, r.bpcer, r.acer,
                                 r.n_live, r.n_attack, ""])
        if result.mean is not None:
            m = result.mean
            writer.writerow(["mean", m.apcer, m.bpcer, m.acer,
                             m.n_live, m.n_attack, ""])


def write_roc_csv(roc_points, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "far", "tar"])
        for far, tar, thr in roc_points:
            writer.writerow([thr, far, tar])
