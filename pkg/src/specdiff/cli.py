"""Command-line interface: extract, train, classify, eval, synth, bench."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import statistics
import sys
import time

import numpy as np

from . import descriptors, evaluation, pipeline, simulator, svm
from .dataset import load_manifest, parse_landmarks
from .errors import SpecDiffError

log = logging.getLogger("specdiff")


def _setup_logging():
    level = os.environ.get("SPECDIFF_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _add_common(parser):
    parser.add_argument("--seed", type=int, default=0, help="master random seed")
    parser.add_argument("--threads", default="1",
                        help="worker count or 'auto'; outputs do not depend on it")


def _svm_config(args):
    gamma = args.gamma
    if gamma != "scale":
        gamma = float(gamma)
    return svm.SvmConfig(kernel=args.kernel, C=args.C, gamma=gamma, seed=args.seed)


def cmd_extract(args):
    ds = load_manifest(args.manifest, lax=args.lax)
    records = sorted(ds.records, key=lambda r: r.pair_id)
    rows = []
    failures = 0
    for record in records:
        try:
            desc = pipeline.extract_descriptor(record, args.kind)
        except (SpecDiffError, ValueError, OSError) as exc:
            failures += 1
            log.warning("pair %s failed: %s", record.pair_id, exc)
            print(f"warning: pair {record.pair_id} failed: {exc}", file=sys.stderr)
            continue
        rows.append((record.pair_id, record.subject_id, record.label, desc))
    descriptors.write_descriptors_jsonl(rows, args.out)
    print(f"wrote {len(rows)} {args.kind} descriptors to {args.out}"
          + (f" ({failures} pairs failed)" if failures else ""))
    if failures and not args.skip_bad:
        return 1
    return 0


def _labeled_set_from_rows(rows):
    X = np.vstack([d.values for _, _, _, d in rows])
    y = np.array([1 if label == "live" else -1 for _, _, label, _ in rows])
    return svm.LabeledSet(features=X, labels=y)


def cmd_train(args):
    if args.descriptors:
        rows = descriptors.read_descriptors_jsonl(args.descriptors)
        if not rows:
            print("error: descriptor file is empty", file=sys.stderr)
            return 1
        kind = rows[0][3].kind
    else:
        ds = load_manifest(args.manifest, lax=args.lax)
        kind = args.kind
        rows = [(r.pair_id, r.subject_id, r.label,
                 pipeline.extract_descriptor(r, kind)) for r in ds.records]
    data = _labeled_set_from_rows(rows)
    cfg = _svm_config(args)

    if args.grid:
        best = None
        for cand in svm.grid_candidates(cfg, data.features):
            model, objective = svm.train_svm_with_objective(data, cand)
            scores = svm.decision_values(model, data.features)
            thr = svm.select_threshold(scores[data.labels == 1],
                                       scores[data.labels == -1])
            acer = evaluation.compute_metrics(scores, data.labels, thr).acer
            if best is None or acer < best[0] - 1e-15:
                best = (acer, model, thr, objective, cand)
        acer, model, thr, objective, used = best
        print(f"grid best: C={used.C} gamma={used.gamma}")
    else:
        model, objective = svm.train_svm_with_objective(data, cfg)
        scores = svm.decision_values(model, data.features)
        thr = svm.select_threshold(scores[data.labels == 1],
                                   scores[data.labels == -1])
        acer = evaluation.compute_metrics(scores, data.labels, thr).acer

    model.threshold = thr
    model.descriptor_kind = kind
    svm.save_model(model, args.out)
    print(f"dual objective: {objective:.6f}")
    print(f"support vectors: {len(model.dual_coefs)}")
    print(f"training ACER: {acer:.4f}")
    print(f"model written to {args.out}")
    return 0


def cmd_classify(args):
    model = svm.load_model(args.model)
    with open(args.landmarks, encoding="utf-8") as fh:
        left, right, face = parse_landmarks(json.load(fh))
    from . import imaging
    flash = imaging.load_image(args.flash)
    noflash = imaging.load_image(args.noflash)
    pp = pipeline.preprocess_images(flash, noflash, left, right, face)
    kind = model.descriptor_kind or "specdiff"
    iris = pipeline.iris_pair_of(pp) if kind in ("spec", "specdiff") else None
    face_pair = pipeline.face_pair_of(pp) if kind != "spec" else None
    desc = descriptors.compute_descriptor(kind, iris=iris, face=face_pair)
    verdict, score = svm.classify(model, desc)
    print(f"{verdict} score={score!r} threshold={model.threshold!r}")
    return 0 if verdict == "live" else 1


def cmd_eval(args):
    ds = load_manifest(args.manifest, lax=args.lax)
    live_override = load_manifest(args.live_manifest, lax=args.lax) \
        if args.live_manifest else None
    cfg = _svm_config(args)
    result = evaluation.run_protocol(
        ds, args.kind, cfg, protocol=args.protocol, k=args.k,
        seed=args.seed, grid=args.grid, live_override=live_override)
    evaluation.write_report_json(result, args.out + ".json")
    evaluation.write_report_csv(result, args.out + ".csv")
    if result.mean is not None:
        evaluation.write_roc_csv(result.mean.roc, args.out + "_roc.csv")
        m = result.mean
        print(f"mean APCER={m.apcer:.4f} BPCER={m.bpcer:.4f} ACER={m.acer:.4f} "
              f"over {sum(1 for f in result.folds if f.report)} folds")
    else:
        print("no successful folds")
    for f in result.folds:
        if f.failed:
            print(f"fold {f.index} failed: {f.failed}", file=sys.stderr)
    return 0


def cmd_bench(args):
    ds = load_manifest(args.manifest, lax=args.lax)
    if not ds.records:
        print("error: empty manifest", file=sys.stderr)
        return 1
    model = svm.load_model(args.model)
    kind = args.kind

    # warm-up on the first pair
    record = ds.records[0]
    for _ in range(2):
        pp = pipeline.preprocess_record(record)
        iris = pipeline.iris_pair_of(pp) if kind in ("spec", "specdiff") else None
        face = pipeline.face_pair_of(pp) if kind != "spec" else None
        svm.classify(model, descriptors.compute_descriptor(kind, iris=iris, face=face))

    pre_times, desc_times = [], []
    for _ in range(args.repeats):
        for record in ds.records:
            t0 = time.perf_counter()
            pp = pipeline.preprocess_record(record)
            t1 = time.perf_counter()
            iris = pipeline.iris_pair_of(pp) if kind in ("spec", "specdiff") else None
            face = pipeline.face_pair_of(pp) if kind != "spec" else None
            desc = descriptors.compute_descriptor(kind, iris=iris, face=face)
            svm.classify(model, desc)
            t2 = time.perf_counter()
            pre_times.append((t1 - t0) * 1000.0)
            desc_times.append((t2 - t1) * 1000.0)

    def p95(xs):
        return float(np.percentile(xs, 95))

    rows = [
        ("preprocessing", statistics.median(pre_times), p95(pre_times)),
        ("descriptor+classification", statistics.median(desc_times), p95(desc_times)),
    ]
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["stage", "median_ms", "p95_ms"])
            for row in rows:
                writer.writerow(row)
    print(f"{'stage':<28}{'median ms':>12}{'p95 ms':>12}")
    for stage, med, p in rows:
        print(f"{stage:<28}{med:>12.3f}{p:>12.3f}")
    return 0


def cmd_synth(args):
    if args.n < 1:
        print("error: n must be >= 1", file=sys.stderr)
        return 2
    ds = simulator.synth_dataset(args.n, args.seed, args.out, n_ids=args.ids)
    print(f"wrote {len(ds)} pairs ({args.n} per class) to {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="specdiff",
        description="Flash/no-flash face presentation-attack detection toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    kinds = list(descriptors.KINDS)

    p = sub.add_parser("extract", help="compute descriptors for a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--kind", choices=kinds, default="specdiff")
    p.add_argument("--out", required=True)
    p.add_argument("--skip-bad", action="store_true",
                   help="keep going (exit 0) when individual pairs fail")
    p.add_argument("--lax", action="store_true", help="ignore unknown manifest keys")
    _add_common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train an SVM on descriptors or a manifest")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--descriptors", help="descriptor JSONL from 'extract'")
    src.add_argument("--manifest")
    p.add_argument("--kind", choices=kinds, default="specdiff")
    p.add_argument("--kernel", choices=["linear", "rbf"], default="rbf")
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--gamma", default="scale")
    p.add_argument("--grid", action="store_true",
                   help="search the small (C, gamma) grid by training ACER")
    p.add_argument("--lax", action="store_true")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="classify one flash/no-flash pair")
    p.add_argument("--model", required=True)
    p.add_argument("--flash", required=True)
    p.add_argument("--noflash", required=True)
    p.add_argument("--landmarks", required=True,
                   help="JSON file with left_eye/right_eye/face landmarks")
    _add_common(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("eval", help="cross-validated evaluation")
    p.add_argument("--manifest", required=True)
    p.add_argument("--kind", choices=kinds, default="specdiff")
    p.add_argument("--kernel", choices=["linear", "rbf"], default="rbf")
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--gamma", default="scale")
    p.add_argument("--protocol", choices=["loio", "kfold"], default="loio")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--grid", action="store_true")
    p.add_argument("--live-manifest", help="separate manifest sourcing bona fide "
                   "test scores (simulated-BPCER evaluation)")
    p.add_argument("--lax", action="store_true")
    p.add_argument("--out", required=True, help="output path prefix")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="per-pair timing of the pipeline")
    p.add_argument("--manifest", required=True)
    p.add_argument("--kind", choices=kinds, default="specdiff")
    p.add_argument("--model", required=True)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--lax", action="store_true")
    p.add_argument("--out", help="optional CSV output path")
    _add_common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    p.add_argument("--n", type=int, required=True, help="pairs per class")
    p.add_argument("--ids", type=int, default=20, help="synthetic subject count")
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None):
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SpecDiffError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if args.command == "classify" else 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if args.command == "classify" else 1


if __name__ == "__main__":
    sys.exit(main())
