import json

import numpy as np
import pytest

from specdiff import imaging


def write_pair_images(directory, pair_id, flash, noflash):
    fpath = directory / f"{pair_id}_f.png"
    bpath = directory / f"{pair_id}_b.png"
    imaging.save_image(flash, fpath)
    imaging.save_image(noflash, bpath)
    return fpath.name, bpath.name


def manifest_line(pair_id, subject_id, label, flash_name, noflash_name,
                  spoof_kind=None, **extra):
    # landmarks laid out for a 120x120 image with eyes at y=40
    line = {
        "pair_id": pair_id,
        "subject_id": subject_id,
        "label": label,
        "spoof_kind": spoof_kind,
        "flash_path": flash_name,
        "noflash_path": noflash_name,
        "left_eye": {"outer": [25, 40], "inner": [55, 40], "pupil": [40, 40]},
        "right_eye": {"inner": [65, 40], "outer": [95, 40], "pupil": [80, 40]},
        "face": [[15, 15], [105, 15], [105, 105], [15, 105]],
    }
    line.update(extra)
    return line


@pytest.fixture
def tiny_manifest(tmp_path):
    """Four-pair manifest (2 subjects x live/spoof) with random images."""
    rng = np.random.default_rng(7)
    lines = []
    for i, (sid, label) in enumerate(
            [("s01", "live"), ("s01", "spoof"), ("s02", "live"), ("s02", "spoof")]):
        flash = rng.uniform(40, 220, (120, 120))
        noflash = rng.uniform(20, 180, (120, 120))
        fn, bn = write_pair_images(tmp_path, f"p{i:03d}", flash, noflash)
        kind = None if label == "live" else "flat_paper"
        lines.append(manifest_line(f"p{i:03d}", sid, label, fn, bn, spoof_kind=kind))
    path = tmp_path / "manifest.jsonl"
    path.write_text("\n".join(json.dumps(l) for l in lines) + "\n")
    return path
