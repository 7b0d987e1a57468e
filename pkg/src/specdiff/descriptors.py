"""Score grids and the five descriptor families.

The iris route works on 40x40 crops of both eyes; the face route works on
a 100x100 crop of the whole face. Both reduce a flash/no-flash pair to a
bounded feature vector via the normalized intensity difference.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import imaging
from .errors import DegenerateGeometryError, DescriptorKindError

IRIS_SIZE = 40
FACE_SIZE = 100
IRIS_SIGMA = 2.0
FACE_SIGMA = 5.0

KIND_LENGTHS = {
    "spec": 2 * IRIS_SIZE * IRIS_SIZE,        # 3200
    "diff": FACE_SIZE * FACE_SIZE,            # 10000
    "specdiff": 2 * IRIS_SIZE * IRIS_SIZE + FACE_SIZE * FACE_SIZE,  # 13200
    "sd_fic": 1,
    "lbp_fi": FACE_SIZE * FACE_SIZE,
    "relative_ref": FACE_SIZE * FACE_SIZE,
    "implicit3d": FACE_SIZE * FACE_SIZE,
}
KINDS = tuple(KIND_LENGTHS)

_BINARY_MAGIC = b"SDF1"
_KIND_CODES = {k: i for i, k in enumerate(KINDS)}
_CODE_KINDS = {i: k for k, i in _KIND_CODES.items()}


@dataclass(frozen=True)
class IrisPair:
    """40x40x2 flash and no-flash iris grids; axis 2 is (left, right)."""

    flash: np.ndarray
    noflash: np.ndarray

    def __post_init__(self):
        for name, g in (("flash", self.flash), ("noflash", self.noflash)):
            if g.shape != (IRIS_SIZE, IRIS_SIZE, 2):
                raise ValueError(f"{name} iris grid must be {IRIS_SIZE}x{IRIS_SIZE}x2, got {g.shape}")
            if g.min() < 0:
                raise ValueError(f"{name} iris grid has negative intensities")


@dataclass(frozen=True)
class FacePair:
    """100x100 flash and no-flash face grids."""

    flash: np.ndarray
    noflash: np.ndarray

    def __post_init__(self):
        for name, g in (("flash", self.flash), ("noflash", self.noflash)):
            if g.shape != (FACE_SIZE, FACE_SIZE):
                raise ValueError(f"{name} face grid must be {FACE_SIZE}x{FACE_SIZE}, got {g.shape}")
            if g.min() < 0:
                raise ValueError(f"{name} face grid has negative intensities")


@dataclass(frozen=True)
class Descriptor:
    kind: str
    values: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        if self.kind not in KIND_LENGTHS:
            raise DescriptorKindError(f"unknown descriptor kind {self.kind!r}")
        expected = KIND_LENGTHS[self.kind]
        if self.values.shape != (expected,):
            raise ValueError(
                f"{self.kind} descriptor must have length {expected}, got {self.values.shape}")


def normalized_difference(a, b):
    """(a - b) / (a + b) elementwise, with 0 where both inputs are 0."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.min() < 0 or b.min() < 0:
        raise ValueError("inputs must be nonnegative")
    denom = a + b
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(denom == 0, 0.0, (a - b) / np.where(denom == 0, 1.0, denom))
    return out


def _iris_box(eye, img_shape):
    """Square ROI centered on the pupil (or corner midpoint); edge is one
    third of the horizontal eye length, rounded half away from zero."""
    length = eye.horizontal_length()
    if length <= 0:
        raise DegenerateGeometryError("eye has zero horizontal length")
    edge = int(np.floor(length / 3.0 + 0.5))
    edge = max(edge, 2)
    cx, cy = eye.center()
    left = int(np.floor(cx - edge / 2.0 + 0.5))
    top = int(np.floor(cy - edge / 2.0 + 0.5))
    return imaging.RegionBox(top=top, left=left, bottom=top + edge, right=left + edge)


def _extract_region(img, box, sigma, out_size):
    roi = imaging.crop(img, box)
    roi = imaging.gaussian_filter(roi, sigma)
    return imaging.resize_bilinear(roi, out_size, out_size)


def extract_iris_pair(flash_img, noflash_img, flash_eyes, noflash_eyes):
    """Crop, blur (sigma=2) and resize both iris regions of both images.

    flash_eyes / noflash_eyes are (left_eye, right_eye) EyeLandmarks in the
    coordinates of the already-upright grayscale images.
    """
    grids = []
    for img, eyes in ((flash_img, flash_eyes), (noflash_img, noflash_eyes)):
        per_eye = []
        for eye in eyes:
            box = _iris_box(eye, img.shape)
            per_eye.append(_extract_region(img, box, IRIS_SIGMA, IRIS_SIZE))
        grids.append(np.stack(per_eye, axis=2))
    return IrisPair(flash=grids[0], noflash=grids[1])


def extract_face_pair(flash_img, noflash_img, flash_face, noflash_face):
    """Crop the landmark bounding rectangle, blur (sigma=5), resize to 100x100."""
    grids = []
    for img, face in ((flash_img, flash_face), (noflash_img, noflash_face)):
        x0, y0, x1, y1 = face.bounding_rect()
        if x1 <= x0 or y1 <= y0:
            raise DegenerateGeometryError("face landmark rectangle is degenerate")
        box = imaging.RegionBox(
            top=int(np.floor(y0)), left=int(np.floor(x0)),
            bottom=int(np.ceil(y1)) + 1, right=int(np.ceil(x1)) + 1)
        grids.append(_extract_region(img, box, FACE_SIGMA, FACE_SIZE))
    return FacePair(flash=grids[0], noflash=grids[1])


def spec_descriptor(p: IrisPair):
    """Per-eye normalized difference, each eye sorted ascending, left then right."""
    s = normalized_difference(p.flash, p.noflash)
    left = np.sort(s[:, :, 0], axis=None)
    right = np.sort(s[:, :, 1], axis=None)
    return Descriptor(kind="spec", values=np.concatenate([left, right]))


def diff_descriptor(p: FacePair):
    """Row-major normalized difference of the face grids, unsorted."""
    s = normalized_difference(p.flash, p.noflash)
    return Descriptor(kind="diff", values=s.ravel())


def specdiff_descriptor(spec: Descriptor, diff: Descriptor):
    """Concatenate the iris and face descriptors."""
    if spec.kind != "spec" or diff.kind != "diff":
        raise DescriptorKindError(
            f"expected kinds (spec, diff), got ({spec.kind}, {diff.kind})")
    return Descriptor(kind="specdiff", values=np.concatenate([spec.values, diff.values]))


def sd_fic(p: FacePair):
    """Population standard deviation of the flash/no-flash difference."""
    d = p.flash - p.noflash
    return Descriptor(kind="sd_fic", values=np.array([d.std()]))


def lbp_fi(flash_face):
    """Per-pixel 8-neighbor LBP of the flash face grid, scaled to [0, 1].

    Bit order: clockwise from the top-left neighbor, top-left as MSB.
    A bit is set when neighbor >= center; out-of-image neighbors read 0.
    """
    g = np.asarray(flash_face, dtype=np.float64)
    if g.shape != (FACE_SIZE, FACE_SIZE):
        raise ValueError(f"flash face grid must be {FACE_SIZE}x{FACE_SIZE}, got {g.shape}")
    padded = np.zeros((FACE_SIZE + 2, FACE_SIZE + 2))
    padded[1:-1, 1:-1] = g
    # (dy, dx) clockwise from top-left
    offsets = [(-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1)]
    codes = np.zeros((FACE_SIZE, FACE_SIZE))
    for bit, (dy, dx) in enumerate(offsets):
        neighbor = padded[1 + dy:1 + dy + FACE_SIZE, 1 + dx:1 + dx + FACE_SIZE]
        codes += (neighbor >= g) * (1 << (7 - bit))
    return Descriptor(kind="lbp_fi", values=(codes / 255.0).ravel())


def relative_ref(flash_face):
    """Each pixel divided by the grid-center reference pixel.

    A zero reference yields an all-zero descriptor with the degenerate flag.
    """
    g = np.asarray(flash_face, dtype=np.float64)
    if g.shape != (FACE_SIZE, FACE_SIZE):
        raise ValueError(f"flash face grid must be {FACE_SIZE}x{FACE_SIZE}, got {g.shape}")
    ref = g[FACE_SIZE // 2, FACE_SIZE // 2]
    if ref == 0:
        return Descriptor(kind="relative_ref",
                          values=np.zeros(FACE_SIZE * FACE_SIZE), degenerate=True)
    return Descriptor(kind="relative_ref", values=(g / ref).ravel())


def implicit3d(p: FacePair):
    """(flash - noflash) / noflash per pixel, 0 where noflash is 0."""
    b = p.noflash
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(b == 0, 0.0, (p.flash - b) / np.where(b == 0, 1.0, b))
    return Descriptor(kind="implicit3d", values=out.ravel())


def compute_descriptor(kind, iris: IrisPair = None, face: FacePair = None):
    """Dispatch by kind; iris is only needed for spec/specdiff."""
    if kind in ("spec", "specdiff") and iris is None:
        raise ValueError(f"kind {kind!r} needs an IrisPair")
    if kind != "spec" and face is None:
        raise ValueError(f"kind {kind!r} needs a FacePair")
    if kind == "spec":
        return spec_descriptor(iris)
    if kind == "diff":
        return diff_descriptor(face)
    if kind == "specdiff":
        return specdiff_descriptor(spec_descriptor(iris), diff_descriptor(face))
    if kind == "sd_fic":
        return sd_fic(face)
    if kind == "lbp_fi":
        return lbp_fi(face.flash)
    if kind == "relative_ref":
        return relative_ref(face.flash)
    if kind == "implicit3d":
        return implicit3d(face)
    raise DescriptorKindError(f"unknown descriptor kind {kind!r}")


# -- export / import ---------------------------------------------------------

def write_descriptors_jsonl(records, path):
    """records: iterable of (pair_id, subject_id, label, Descriptor)."""
    with open(path, "w", encoding="utf-8") as fh:
        for pair_id, subject_id, label, desc in records:
            fh.write(json.dumps({
                "pair_id": pair_id,
                "kind": desc.kind,
                "label": label,
                "subject_id": subject_id,
                "values": desc.values.tolist(),
            }) + "\n")


def read_descriptors_jsonl(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            raw = raw.strip()
            if not raw:
                continue
            obj = json.loads(raw)
            desc = Descriptor(kind=obj["kind"], values=np.asarray(obj["values"], dtype=np.float64))
            out.append((obj["pair_id"], obj["subject_id"], obj["label"], desc))
    return out


def write_descriptor_binary(desc: Descriptor, path):
    """16-byte header (magic, u4 kind code, u8 length, little-endian)
    followed by the values as little-endian f64."""
    header = _BINARY_MAGIC + struct.pack("<IQ", _KIND_CODES[desc.kind], len(desc.values))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(desc.values.astype("<f8").tobytes())


def read_descriptor_binary(path):
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != _BINARY_MAGIC:
        raise ValueError(f"not a descriptor binary: {path}")
    code, length = struct.unpack("<IQ", data[4:16])
    if code not in _CODE_KINDS:
        raise ValueError(f"unknown kind code {code} in {path}")
    values = np.frombuffer(data[16:], dtype="<f8")
    if len(values) != length:
        raise ValueError(f"descriptor binary truncated: {path}")
    return Descriptor(kind=_CODE_KINDS[code], values=values.astype(np.float64))
