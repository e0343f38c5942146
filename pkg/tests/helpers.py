"""Synthetic images, masks and manifests shared across the test modules."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
from PIL import Image


def random_mask(rng, h=64, w=64, lo=0.05, hi=0.60) -> np.ndarray:
    """Random binary mask with foreground density drawn from [lo, hi]."""
    density = rng.uniform(lo, hi)
    return rng.random((h, w)) < density


def box_mask(h, w, y0, y1, x0, x1) -> np.ndarray:
    m = np.zeros((h, w), dtype=bool)
    m[y0:y1, x0:x1] = True
    return m


def disk_mask(h, w, cy, cx, radius) -> np.ndarray:
    ys, xs = np.ogrid[:h, :w]
    return (ys - cy) ** 2 + (xs - cx) ** 2 <= radius ** 2


def random_image(rng, h=64, w=64) -> np.ndarray:
    return rng.integers(0, 256, (h, w, 3), dtype=np.uint8)


def write_dataset(root, n_images, classes, size=(80, 96), seed=1234,
                  gt_equals_saliency=True, with_ignore=False) -> Path:
    """Build a synthetic dataset on disk and return its manifest path.

    Image i gets class classes[i % len(classes)]; its ground truth is a
    solid box, and (by default) the saliency mask covers the same box so
    the saliency baseline scores a perfect IoU. ``with_ignore`` paints a
    255 strip into the ground-truth grid.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    h, w = size
    images = []
    for i in range(n_images):
        cls = classes[i % len(classes)]
        img = random_image(rng, h, w)
        y0, x0 = 4 + (i % 3), 6 + (i % 5)
        y1, x1 = h - 6 - (i % 4), w - 8 - (i % 3)
        box = box_mask(h, w, y0, y1, x0, x1)
        gt = np.zeros((h, w), dtype=np.uint8)
        gt[box] = cls
        if with_ignore:
            gt[0:3, :] = 255
        sal = box if gt_equals_saliency else box_mask(h, w, y0 + 2, y1 - 2, x0 + 2, x1 - 2)
        Image.fromarray(img, "RGB").save(root / f"im{i:03d}.png")
        Image.fromarray((sal.astype(np.uint8) * 255), "L").save(root / f"sa{i:03d}.png")
        Image.fromarray(gt, "L").save(root / f"gt{i:03d}.png")
        images.append({
            "id": f"im{i:03d}",
            "image": f"im{i:03d}.png",
            "saliency": f"sa{i:03d}.png",
            "gt_mask": f"gt{i:03d}.png",
            "classes": [int(cls)],
        })
    path = root / "manifest.json"
    path.write_text(json.dumps({"name": "synthetic", "images": images}, indent=2))
    return path


def dir_digest(path) -> str:
    """SHA-256 over every file's (name, bytes), order-independent."""
    path = Path(path)
    h = hashlib.sha256()
    for p in sorted(f for f in path.rglob("*") if f.is_file()):
        h.update(str(p.relative_to(path)).encode())
        h.update(b"\0")
        h.update(p.read_bytes())
        h.update(b"\0")
    return h.hexdigest()
