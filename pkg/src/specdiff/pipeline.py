"""Per-pair preprocessing and descriptor extraction.

Chain per image: grayscale -> rotate upright (eye line horizontal) ->
landmark remap through the rotation -> iris / face region extraction.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import imaging
from .dataset import EyeLandmarks, FaceLandmarks, PairRecord
from .descriptors import (FacePair, IrisPair, compute_descriptor,
                          extract_face_pair, extract_iris_pair)


@dataclass(frozen=True)
class PreprocessedPair:
    """Upright grayscale images plus landmarks mapped into their frame."""

    flash: object
    noflash: object
    flash_eyes: tuple
    noflash_eyes: tuple
    flash_face: FaceLandmarks
    noflash_face: FaceLandmarks


def _map_eye(eye: EyeLandmarks, affine):
    outer = tuple(imaging.apply_affine(affine, eye.outer_corner))
    inner = tuple(imaging.apply_affine(affine, eye.inner_corner))
    pupil = None
    if eye.pupil_center is not None:
        pupil = tuple(imaging.apply_affine(affine, eye.pupil_center))
    return EyeLandmarks(outer_corner=outer, inner_corner=inner, pupil_center=pupil)


def _upright(img, left_eye, right_eye, face):
    gray = imaging.grayscale(img)
    rotated, affine = imaging.rotate_upright(gray, left_eye.center(), right_eye.center())
    eyes = (_map_eye(left_eye, affine), _map_eye(right_eye, affine))
    face_pts = FaceLandmarks(tuple(
        tuple(imaging.apply_affine(affine, p)) for p in face.points))
    return rotated, eyes, face_pts


def preprocess_images(flash_img, noflash_img, left_eye, right_eye, face):
    """Preprocess a raw image pair sharing one landmark set."""
    f_img, f_eyes, f_face = _upright(flash_img, left_eye, right_eye, face)
    b_img, b_eyes, b_face = _upright(noflash_img, left_eye, right_eye, face)
    return PreprocessedPair(
        flash=f_img, noflash=b_img,
        flash_eyes=f_eyes, noflash_eyes=b_eyes,
        flash_face=f_face, noflash_face=b_face)


def preprocess_record(record: PairRecord):
    flash = imaging.load_image(record.flash_path)
    noflash = imaging.load_image(record.noflash_path)
    return preprocess_images(flash, noflash, record.left_eye, record.right_eye, record.face)


def iris_pair_of(pp: PreprocessedPair) -> IrisPair:
    return extract_iris_pair(pp.flash, pp.noflash, pp.flash_eyes, pp.noflash_eyes)


def face_pair_of(pp: PreprocessedPair) -> FacePair:
    return extract_face_pair(pp.flash, pp.noflash, pp.flash_face, pp.noflash_face)


def extract_descriptor(record: PairRecord, kind):
    """Full pipeline for one manifest record."""
    pp = preprocess_record(record)
    iris = iris_pair_of(pp) if kind in ("spec", "specdiff") else None
    face = face_pair_of(pp) if kind != "spec" else None
    return compute_descriptor(kind, iris=iris, face=face)
