"""Manifest-driven ingestion of flash/no-flash pairs plus CV splits.

The manifest is UTF-8 JSON lines, one pair per line. Landmarks are given
in original (pre-rotation) image coordinates and come from the manifest;
no face detector is bundled.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from PIL import Image

from .errors import ManifestError, SplitError

LABELS = ("live", "spoof")
SPOOF_KINDS = ("flat_paper", "bent_paper", "display")

_KNOWN_KEYS = {
    "pair_id", "subject_id", "label", "spoof_kind", "flash_path",
    "noflash_path", "left_eye", "right_eye", "face", "lighting_tag",
}
_EYE_KEYS = {"outer", "inner", "pupil"}


@dataclass(frozen=True)
class EyeLandmarks:
    outer_corner: tuple
    inner_corner: tuple
    pupil_center: Optional[tuple] = None

    def center(self):
        """Pupil if present, else the midpoint of the corners."""
        if self.pupil_center is not None:
            return self.pupil_center
        return (
            (self.outer_corner[0] + self.inner_corner[0]) / 2.0,
            (self.outer_corner[1] + self.inner_corner[1]) / 2.0,
        )

    def horizontal_length(self):
        return abs(self.outer_corner[0] - self.inner_corner[0])


@dataclass(frozen=True)
class FaceLandmarks:
    points: tuple  # of (x, y)

    def bounding_rect(self):
        xs = [p[0] for p in self.points]
        ys = [p[1] for p in self.points]
        return min(xs), min(ys), max(xs), max(ys)


@dataclass(frozen=True)
class PairRecord:
    pair_id: str
    subject_id: str
    label: str
    spoof_kind: Optional[str]
    flash_path: Path
    noflash_path: Path
    left_eye: EyeLandmarks
    right_eye: EyeLandmarks
    face: FaceLandmarks
    lighting_tag: Optional[str] = None


@dataclass(frozen=True)
class Dataset:
    records: tuple

    @property
    def ids(self):
        return sorted({r.subject_id for r in self.records})

    def __len__(self):
        return len(self.records)

    def subset(self, indices):
        return Dataset(tuple(self.records[i] for i in indices))


def _as_point(obj, what, line):
    if (not isinstance(obj, (list, tuple)) or len(obj) != 2
            or not all(isinstance(v, (int, float)) for v in obj)):
        raise ManifestError(f"{what} must be an [x, y] pair", line=line)
    return (float(obj[0]), float(obj[1]))


def _parse_eye(obj, what, line):
    if not isinstance(obj, dict):
        raise ManifestError(f"{what} must be an object", line=line)
    extra = set(obj) - _EYE_KEYS
    if extra:
        raise ManifestError(f"unknown keys {sorted(extra)} in {what}", line=line)
    for key in ("outer", "inner"):
        if key not in obj:
            raise ManifestError(f"{what} missing {key!r}", line=line)
    pupil = obj.get("pupil")
    eye = EyeLandmarks(
        outer_corner=_as_point(obj["outer"], f"{what}.outer", line),
        inner_corner=_as_point(obj["inner"], f"{what}.inner", line),
        pupil_center=_as_point(pupil, f"{what}.pupil", line) if pupil is not None else None,
    )
    if eye.outer_corner == eye.inner_corner:
        raise ManifestError(f"{what} corners coincide", line=line)
    return eye


def _image_size(path, line, pair_id):
    try:
        with Image.open(path) as im:
            return im.size  # (width, height)
    except FileNotFoundError:
        raise ManifestError(f"image file not found: {path}", line=line, pair_id=pair_id)
    except Exception as exc:
        raise ManifestError(f"cannot decode image {path}: {exc}", line=line, pair_id=pair_id)


def _check_in_bounds(point, size, what, line, pair_id):
    w, h = size
    x, y = point
    if not (0 <= x < w and 0 <= y < h):
        raise ManifestError(
            f"{what} ({x}, {y}) outside image bounds {w}x{h}",
            line=line, pair_id=pair_id)


def parse_record(obj, line=None, base_dir=None, lax=False):
    """Validate one manifest object and build a PairRecord."""
    if not isinstance(obj, dict):
        raise ManifestError("manifest line is not a JSON object", line=line)
    if not lax:
        extra = set(obj) - _KNOWN_KEYS
        if extra:
            raise ManifestError(f"unknown keys {sorted(extra)} (use --lax to ignore)", line=line)
    for key in ("pair_id", "subject_id", "label", "flash_path", "noflash_path",
                "left_eye", "right_eye", "face"):
        if key not in obj:
            raise ManifestError(f"missing required key {key!r}", line=line)

    pair_id = str(obj["pair_id"])
    label = obj["label"]
    if label not in LABELS:
        raise ManifestError(f"label must be one of {LABELS}, got {label!r}",
                            line=line, pair_id=pair_id)
    spoof_kind = obj.get("spoof_kind")
    if spoof_kind is not None and spoof_kind not in SPOOF_KINDS:
        raise ManifestError(f"spoof_kind must be one of {SPOOF_KINDS}, got {spoof_kind!r}",
                            line=line, pair_id=pair_id)

    base = Path(base_dir) if base_dir is not None else Path(".")
    flash_path = base / obj["flash_path"]
    noflash_path = base / obj["noflash_path"]

    face_pts = obj["face"]
    if not isinstance(face_pts, list) or len(face_pts) < 4:
        raise ManifestError("face must list at least 4 points", line=line, pair_id=pair_id)
    face = FaceLandmarks(tuple(_as_point(p, "face point", line) for p in face_pts))
    x0, y0, x1, y1 = face.bounding_rect()
    if x1 <= x0 or y1 <= y0:
        raise ManifestError("face landmark bounding rectangle is degenerate",
                            line=line, pair_id=pair_id)

    record = PairRecord(
        pair_id=pair_id,
        subject_id=str(obj["subject_id"]),
        label=label,
        spoof_kind=spoof_kind,
        flash_path=flash_path,
        noflash_path=noflash_path,
        left_eye=_parse_eye(obj["left_eye"], "left_eye", line),
        right_eye=_parse_eye(obj["right_eye"], "right_eye", line),
        face=face,
        lighting_tag=obj.get("lighting_tag"),
    )

    fsize = _image_size(flash_path, line, pair_id)
    bsize = _image_size(noflash_path, line, pair_id)
    if fsize != bsize:
        raise ManifestError(
            f"flash {fsize} and no-flash {bsize} dimensions differ",
            line=line, pair_id=pair_id)
    for eye, name in ((record.left_eye, "left_eye"), (record.right_eye, "right_eye")):
        _check_in_bounds(eye.outer_corner, fsize, f"{name}.outer", line, pair_id)
        _check_in_bounds(eye.inner_corner, fsize, f"{name}.inner", line, pair_id)
        if eye.pupil_center is not None:
            _check_in_bounds(eye.pupil_center, fsize, f"{name}.pupil", line, pair_id)
    for pt in record.face.points:
        _check_in_bounds(pt, fsize, "face point", line, pair_id)
    return record


def parse_landmarks(obj):
    """Parse a standalone landmark object with left_eye/right_eye/face keys."""
    for key in ("left_eye", "right_eye", "face"):
        if key not in obj:
            raise ManifestError(f"landmark object missing {key!r}")
    face_pts = obj["face"]
    if not isinstance(face_pts, list) or len(face_pts) < 4:
        raise ManifestError("face must list at least 4 points")
    face = FaceLandmarks(tuple(_as_point(p, "face point", None) for p in face_pts))
    x0, y0, x1, y1 = face.bounding_rect()
    if x1 <= x0 or y1 <= y0:
        raise ManifestError("face landmark bounding rectangle is degenerate")
    return (_parse_eye(obj["left_eye"], "left_eye", None),
            _parse_eye(obj["right_eye"], "right_eye", None),
            face)


def load_manifest(path, lax=False):
    """Load and validate a JSON-lines manifest into a Dataset.

    Relative image paths are resolved against the manifest's directory.
    """
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    records = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"invalid JSON: {exc}", line=line_no)
            rec = parse_record(obj, line=line_no, base_dir=path.parent, lax=lax)
            if rec.pair_id in seen:
                raise ManifestError("duplicate pair_id", line=line_no, pair_id=rec.pair_id)
            seen.add(rec.pair_id)
            records.append(rec)
    return Dataset(tuple(records))


def split_leave_one_id_out(ds: Dataset):
    """One fold per subject_id (sorted); the held-out subject is the test set."""
    ids = ds.ids
    if len(ids) < 2:
        raise SplitError("leave-one-ID-out needs at least 2 distinct subject_ids")
    folds = []
    for sid in ids:
        test_idx = [i for i, r in enumerate(ds.records) if r.subject_id == sid]
        train_idx = [i for i, r in enumerate(ds.records) if r.subject_id != sid]
        folds.append((ds.subset(train_idx), ds.subset(test_idx)))
    return folds


def splitmix64(seed):
    """SplitMix64 stream generator; yields uint64 values. Used for the
    k-fold shuffle so folds are reproducible across implementations."""
    mask = 0xFFFFFFFFFFFFFFFF
    state = int(seed) & mask
    while True:
        state = (state + 0x9E3779B97F4A7C15) & mask
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
        yield z ^ (z >> 31)


def _shuffled_indices(n, seed):
    """Fisher-Yates shuffle driven by splitmix64 with rejection sampling."""
    rng = splitmix64(seed)
    idx = list(range(n))
    for i in range(n - 1, 0, -1):
        bound = i + 1
        limit = (2**64 // bound) * bound
        v = next(rng)
        while v >= limit:
            v = next(rng)
        j = v % bound
        idx[i], idx[j] = idx[j], idx[i]
    return idx


def split_kfold(ds: Dataset, k, seed):
    """Seeded shuffle, then partition into k near-equal contiguous folds."""
    n = len(ds)
    if k < 2 or k > n:
        raise SplitError(f"k must be in [2, {n}], got {k}")
    order = _shuffled_indices(n, seed)
    base, extra = divmod(n, k)
    folds = []
    start = 0
    for f in range(k):
        size = base + (1 if f < extra else 0)
        test_idx = order[start:start + size]
        train_idx = order[:start] + order[start + size:]
        folds.append((ds.subset(sorted(train_idx)), ds.subset(sorted(test_idx))))
        start += size
    return folds
