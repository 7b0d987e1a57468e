"""Lambertian flash/no-flash pair renderer and synthetic dataset generator.

Rendering model: the no-flash image is ambient only, I_b = L_b * K; the
flash image adds a frontal diffuse term, I_f = L_f * K * cos(theta) + L_b * K.
Iris glints are injected as saturating Gaussian blobs depending on the
liveness scenario (live: flash only; paper: neither; display: both).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import imaging
from .dataset import Dataset, load_manifest
from .descriptors import normalized_difference

LIVENESS_KINDS = ("live", "flat_paper", "bent_paper", "display")


@dataclass(frozen=True)
class IrisSpot:
    center: tuple  # (x, y)
    radius: float
    present_in_flash: bool
    present_in_noflash: bool


@dataclass(frozen=True)
class SurfaceSpec:
    height_field: np.ndarray   # H x W depth, camera facing
    reflectance: np.ndarray    # H x W in (0, 1]
    flash_intensity: float
    background_intensity: float
    liveness: str
    iris_spots: tuple = ()

    def __post_init__(self):
        if self.height_field.shape != self.reflectance.shape:
            raise ValueError("height field and reflectance map shapes differ")
        if self.reflectance.min() <= 0 or self.reflectance.max() > 1:
            raise ValueError("reflectance must lie in (0, 1]")
        if self.flash_intensity <= 0 or self.background_intensity < 0:
            raise ValueError("need flash_intensity > 0 and background_intensity >= 0")
        if self.liveness not in LIVENESS_KINDS:
            raise ValueError(f"liveness must be one of {LIVENESS_KINDS}")


@dataclass(frozen=True)
class RenderedPair:
    flash: np.ndarray
    noflash: np.ndarray
    ground_truth_S: np.ndarray
    spot_mask: np.ndarray  # True where a glint blob was injected


def cos_theta(height_field):
    """Cosine of the incidence angle for a frontal light, from unit normals
    built out of central-difference gradients. Clamped to [0, 1]."""
    z = np.asarray(height_field, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("height field must be finite")
    zy, zx = np.gradient(z)
    cos = 1.0 / np.sqrt(1.0 + zx * zx + zy * zy)
    return np.clip(cos, 0.0, 1.0)


def closed_form_S(cos_grid, flash_intensity, background_intensity):
    """S = Lf*cos / (Lf*cos + 2*Lb), with 0 where both terms vanish."""
    if flash_intensity <= 0 or background_intensity < 0:
        raise ValueError("need flash_intensity > 0 and background_intensity >= 0")
    num = flash_intensity * np.asarray(cos_grid, dtype=np.float64)
    denom = num + 2.0 * background_intensity
    return np.where(denom == 0, 0.0, num / np.where(denom == 0, 1.0, denom))


def _spot_blob(shape, spot: IrisSpot):
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    d2 = (xs - spot.center[0]) ** 2 + (ys - spot.center[1]) ** 2
    sigma = max(spot.radius, 0.5)
    return 500.0 * np.exp(-d2 / (2.0 * sigma * sigma))


def render_pair(spec: SurfaceSpec) -> RenderedPair:
    """Render the diffuse pair, inject glints, clamp to [0, 255].

    ground_truth_S is computed from the clamped pre-quantization images;
    outside glint regions it matches closed_form_S.
    """
    cos = cos_theta(spec.height_field)
    k = spec.reflectance
    noflash = spec.background_intensity * k
    flash = spec.flash_intensity * k * cos + noflash

    spot_mask = np.zeros(cos.shape, dtype=bool)
    for spot in spec.iris_spots:
        blob = _spot_blob(cos.shape, spot)
        spot_mask |= blob > 1e-12
        if spot.present_in_flash:
            flash = flash + blob
        if spot.present_in_noflash:
            noflash = noflash + blob

    flash = np.clip(flash, 0.0, 255.0)
    noflash = np.clip(noflash, 0.0, 255.0)
    return RenderedPair(
        flash=flash,
        noflash=noflash,
        ground_truth_S=normalized_difference(flash, noflash),
        spot_mask=spot_mask,
    )


# -- synthetic dataset generation -------------------------------------------

_IMAGE_H = 200
_IMAGE_W = 200


def _smooth_map(rng, shape, lo, hi):
    """Random reflectance-style map: coarse noise upsampled bilinearly."""
    coarse = rng.random((12, 12))
    fine = imaging.resize_bilinear(coarse * 255.0, shape[0], shape[1]) / 255.0
    span = fine.max() - fine.min()
    if span < 1e-12:
        return np.full(shape, (lo + hi) / 2.0)
    return lo + (hi - lo) * (fine - fine.min()) / span


def _dome_height(rng, shape, cx, cy):
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    height = rng.uniform(30.0, 70.0)
    rx = rng.uniform(70.0, 95.0)
    ry = rng.uniform(85.0, 110.0)
    r2 = ((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2
    return height * np.sqrt(np.clip(1.0 - r2, 0.0, None))


def _bent_height(rng, shape):
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    phi = rng.uniform(0.0, np.pi)
    u = np.cos(phi) * xs + np.sin(phi) * ys
    uc = rng.uniform(0.3, 0.7) * (u.max() + u.min())
    amp = rng.uniform(10.0, 40.0)
    halfspan = rng.uniform(120.0, 220.0)
    return amp * (1.0 - ((u - uc) / halfspan) ** 2)


def _sample_lights(rng):
    l_b = rng.uniform(20.0, 110.0)
    ratio = rng.uniform(0.2, 5.0)
    l_f = ratio * l_b
    total = l_f + l_b
    if total > 250.0:
        scale = 250.0 / total
        l_f *= scale
        l_b *= scale
    return l_f, l_b


def _landmark_layout(rng):
    cx = 100.0 + rng.uniform(-5.0, 5.0)
    cy = 110.0 + rng.uniform(-5.0, 5.0)
    eye_y = cy - 30.0 + rng.uniform(-3.0, 3.0)
    eye_dx = 30.0 + rng.uniform(-3.0, 3.0)
    eye_len = 30.0 + rng.uniform(-4.0, 4.0)
    left_cx, right_cx = cx - eye_dx, cx + eye_dx
    half = eye_len / 2.0
    face_hw = 55.0 + rng.uniform(-4.0, 4.0)
    face_hh = 65.0 + rng.uniform(-4.0, 4.0)
    return {
        "left_eye": {
            "outer": [left_cx - half, eye_y],
            "inner": [left_cx + half, eye_y],
            "pupil": [left_cx, eye_y],
        },
        "right_eye": {
            "inner": [right_cx - half, eye_y],
            "outer": [right_cx + half, eye_y],
            "pupil": [right_cx, eye_y],
        },
        "face": [
            [cx - face_hw, cy - face_hh],
            [cx + face_hw, cy - face_hh],
            [cx + face_hw, cy + face_hh],
            [cx - face_hw, cy + face_hh],
        ],
        "face_center": (cx, cy),
        "eye_len": eye_len,
    }


def make_surface(rng, liveness):
    """One randomized scene of the requested liveness class."""
    shape = (_IMAGE_H, _IMAGE_W)
    layout = _landmark_layout(rng)
    cx, cy = layout["face_center"]
    if liveness == "live":
        z = _dome_height(rng, shape, cx, cy)
    elif liveness == "bent_paper":
        z = _bent_height(rng, shape)
    else:  # flat_paper, display
        z = np.zeros(shape)
    k = _smooth_map(rng, shape, 0.2, 0.95)
    l_f, l_b = _sample_lights(rng)

    in_flash = liveness in ("live", "display")
    in_noflash = liveness == "display"
    spots = ()
    if in_flash or in_noflash:
        edge = max(round(layout["eye_len"] / 3.0), 2)
        radius = edge / 8.0
        spots = tuple(
            IrisSpot(center=tuple(layout[eye]["pupil"]), radius=radius,
                     present_in_flash=in_flash, present_in_noflash=in_noflash)
            for eye in ("left_eye", "right_eye"))

    surface = SurfaceSpec(
        height_field=z, reflectance=k,
        flash_intensity=l_f, background_intensity=l_b,
        liveness=liveness, iris_spots=spots)
    return surface, layout


def synth_dataset(n_per_class, seed, out_dir, n_ids=20) -> Dataset:
    """Render n_per_class live and n_per_class spoof pairs to disk.

    Writes PNG image pairs, a JSON-lines manifest, and a per-pair
    ground-truth S sidecar (.npy, float64). Deterministic per seed; the
    spoof kinds cycle flat_paper / bent_paper / display.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    lines = []
    pair_index = 0
    for class_index, is_live in enumerate((True, False)):
        for i in range(n_per_class):
            if is_live:
                liveness = "live"
            else:
                liveness = ("flat_paper", "bent_paper", "display")[i % 3]
            rng = np.random.default_rng(np.random.SeedSequence([seed, class_index, i]))
            surface, layout = make_surface(rng, liveness)
            rendered = render_pair(surface)

            pair_id = f"p{pair_index:05d}"
            flash_name = f"{pair_id}_flash.png"
            noflash_name = f"{pair_id}_noflash.png"
            imaging.save_image(rendered.flash, out / flash_name)
            imaging.save_image(rendered.noflash, out / noflash_name)
            np.save(out / f"{pair_id}_gt_s.npy", rendered.ground_truth_S)

            line = {
                "pair_id": pair_id,
                "subject_id": f"s{i % n_ids:02d}",
                "label": "live" if is_live else "spoof",
                "spoof_kind": None if is_live else liveness,
                "flash_path": flash_name,
                "noflash_path": noflash_name,
                "left_eye": layout["left_eye"],
                "right_eye": layout["right_eye"],
                "face": layout["face"],
                "lighting_tag": "bright" if surface.background_intensity > 60 else "dark",
            }
            lines.append(json.dumps(line))
            pair_index += 1

    manifest = out / "manifest.jsonl"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return load_manifest(manifest)
