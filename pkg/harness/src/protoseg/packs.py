"""Episode-pack reading and tensor conversion.

Packs are plain directories produced by the episode generator: a
``pack_manifest.json`` plus four PNGs per episode (support image,
support mask with values {0, 1}, query image, query label with values
{0, 1, 255}). This module speaks only that on-disk contract — it has
no dependency on the generator itself.
"""
from __future__ import annotations

import json
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import torch
from PIL import Image

MANIFEST_NAME = "pack_manifest.json"
IGNORE_LABEL = 255

# standard ImageNet statistics; the reference backbone expects them
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class PackError(Exception):
    """The pack directory violates the on-disk contract."""


@dataclass
class PackEpisode:
    episode_id: str
    support_image: np.ndarray   # (H, W, 3) uint8
    support_mask: np.ndarray    # (H, W) bool
    query_image: np.ndarray     # (H, W, 3) uint8
    query_label: np.ndarray     # (H, W) uint8 in {0, 1, 255}
    meta: dict[str, Any]


class EpisodePack:
    """Lazy reader over one episode-pack directory."""

    def __init__(self, root, check_crc: bool = False):
        self.root = Path(root)
        self.check_crc = check_crc
        manifest = self.root / MANIFEST_NAME
        if not manifest.is_file():
            raise PackError(f"not an episode pack (no {MANIFEST_NAME}): {self.root}")
        try:
            doc = json.loads(manifest.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise PackError(f"{manifest}: unreadable ({exc})") from exc
        if doc.get("version") != 1 or not isinstance(doc.get("episodes"), list):
            raise PackError(f"{manifest}: unsupported pack layout")
        self.out_size = int(doc["out_size"])
        self.entries = doc["episodes"]

    def __len__(self) -> int:
        return len(self.entries)

    def _read(self, entry: dict, key: str) -> np.ndarray:
        path = self.root / entry["files"][key]
        data = path.read_bytes()
        if self.check_crc:
            expected = entry.get("crc32", {}).get(key)
            if expected is not None and zlib.crc32(data) != expected:
                raise PackError(f"{path.name}: checksum mismatch")
        from io import BytesIO
        return np.asarray(Image.open(BytesIO(data)))

    def load(self, index: int) -> PackEpisode:
        entry = self.entries[index]
        label = self._read(entry, "query_label").astype(np.uint8)
        bad = sorted(set(np.unique(label).tolist()) - {0, 1, IGNORE_LABEL})
        if bad:
            raise PackError(f"episode {entry['id']}: label values {bad}")
        return PackEpisode(
            episode_id=entry["id"],
            support_image=self._read(entry, "support"),
            support_mask=self._read(entry, "support_mask") > 0,
            query_image=self._read(entry, "query"),
            query_label=label,
            meta=dict(entry.get("meta", {})),
        )


def normalize_image(image: np.ndarray) -> torch.Tensor:
    """(H, W, 3) uint8 -> (3, H, W) float tensor, ImageNet-normalised."""
    # dtype conversion also copies, so PIL's read-only arrays are fine here
    t = torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32)).div_(255.0)
    t = t.permute(2, 0, 1)
    mean = torch.tensor(IMAGENET_MEAN).view(3, 1, 1)
    std = torch.tensor(IMAGENET_STD).view(3, 1, 1)
    return (t - mean) / std


def episode_tensors(ep: PackEpisode) -> dict[str, torch.Tensor]:
    """One episode as the tensors the network trains on."""
    return {
        "support_image": normalize_image(ep.support_image),
        "support_mask": torch.from_numpy(ep.support_mask.astype(np.float32))[None],
        "query_image": normalize_image(ep.query_image),
        "query_label": torch.from_numpy(ep.query_label.astype(np.int64)),
    }


def batch_tensors(pack: EpisodePack, indices) -> dict[str, torch.Tensor]:
    """Stack several episodes into one training batch."""
    items = [episode_tensors(pack.load(int(i))) for i in indices]
    return {key: torch.stack([item[key] for item in items]) for key in items[0]}
