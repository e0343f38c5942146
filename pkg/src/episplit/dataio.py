"""File contracts: dataset manifests, episode packs, prediction sets.

A *dataset manifest* is a JSON file naming the images of a dataset and,
per image, optional saliency and ground-truth mask paths plus class
ids. Relative paths are resolved against the manifest's directory.

An *episode pack* is a directory of PNGs plus a ``pack_manifest.json``
describing every episode (four files each: support image, support
mask, query image, query label) together with CRC32 checksums and the
exact generation config. Masks are 8-bit grayscale with values {0, 1}
(support) or {0, 1, 255} (query label); readers reject anything else
rather than repairing it.

A *prediction set* is a directory of ``<task_id>_pred.png`` binary
masks listed by a ``predictions.json`` index.
"""
from __future__ import annotations

import io
import json
import re
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .episodes import IGNORE_LABEL, Episode
from .errors import (
    ChecksumMismatchError,
    MissingFileError,
    ParseError,
    UnknownDatasetError,
    UnsupportedFormatError,
    ValidationError,
)

PACK_MANIFEST_NAME = "pack_manifest.json"
PACK_VERSION = 1
PREDICTIONS_INDEX_NAME = "predictions.json"

_ID_PATTERN = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.\-]*$")

_EPISODE_SUFFIXES = {
    "support": "_support.png",
    "support_mask": "_support_mask.png",
    "query": "_query.png",
    "query_label": "_query_label.png",
}


# --------------------------------------------------------------------
# dataset manifests


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    image_path: str
    saliency_path: str | None = None
    gt_mask_path: str | None = None
    class_ids: tuple[int, ...] | None = None


@dataclass
class DatasetManifest:
    name: str
    entries: list[ManifestEntry]
    root: Path | None = field(default=None, compare=False)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        if not p.is_absolute() and self.root is not None:
            p = self.root / p
        return p

    def by_id(self) -> dict[str, ManifestEntry]:
        return {e.image_id: e for e in self.entries}


def _check_id(value, what: str) -> str:
    if not isinstance(value, str) or not _ID_PATTERN.match(value):
        raise ParseError(f"{what} must be a filesystem-safe identifier, got {value!r}")
    return value


def load_manifest(path) -> DatasetManifest:
    """Load and validate a dataset manifest.

    Raises:
        MissingFileError: manifest itself or any referenced file absent.
        ParseError: malformed JSON, bad structure, or duplicate ids.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"manifest not found: {path}")
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict) or not isinstance(data.get("images"), list):
        raise ParseError(f"{path}: expected an object with an 'images' list")
    name = data.get("name", "")
    if not isinstance(name, str) or not name:
        raise ParseError(f"{path}: manifest 'name' must be a non-empty string")

    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    for i, raw in enumerate(data["images"]):
        if not isinstance(raw, dict):
            raise ParseError(f"{path}: images[{i}] is not an object")
        image_id = _check_id(raw.get("id"), f"images[{i}].id")
        if image_id in seen:
            raise ParseError(f"{path}: duplicate image id {image_id!r}")
        seen.add(image_id)
        image = raw.get("image")
        if not isinstance(image, str) or not image:
            raise ParseError(f"{path}: images[{i}] ({image_id}) lacks an 'image' path")
        classes = raw.get("classes")
        if classes is not None:
            if (not isinstance(classes, list)
                    or not all(isinstance(c, int) and c > 0 for c in classes)):
                raise ParseError(
                    f"{path}: images[{i}] ({image_id}) 'classes' must be positive ints")
            classes = tuple(classes)
        entries.append(ManifestEntry(
            image_id=image_id,
            image_path=image,
            saliency_path=raw.get("saliency"),
            gt_mask_path=raw.get("gt_mask"),
            class_ids=classes,
        ))

    manifest = DatasetManifest(name=name, entries=entries, root=path.parent)
    for e in entries:
        for p in (e.image_path, e.saliency_path, e.gt_mask_path):
            if p is not None and not manifest.resolve(p).is_file():
                raise MissingFileError(f"{path}: {e.image_id}: missing file {p}")
    return manifest


def save_manifest(manifest: DatasetManifest, path) -> None:
    images = []
    for e in manifest.entries:
        raw = {"id": e.image_id, "image": e.image_path}
        if e.saliency_path is not None:
            raw["saliency"] = e.saliency_path
        if e.gt_mask_path is not None:
            raw["gt_mask"] = e.gt_mask_path
        if e.class_ids is not None:
            raw["classes"] = list(e.class_ids)
        images.append(raw)
    Path(path).write_text(json.dumps({"name": manifest.name, "images": images}, indent=2))


# --------------------------------------------------------------------
# image / mask readers


def _open_image(path) -> Image.Image:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"file not found: {path}")
    try:
        img = Image.open(path)
        img.load()
        return img
    except (UnidentifiedImageError, OSError) as exc:
        raise UnsupportedFormatError(f"{path}: cannot decode image ({exc})") from exc


def read_image(path) -> np.ndarray:
    """Load an image as (H, W, 3) uint8 RGB."""
    return np.asarray(_open_image(path).convert("RGB"))


def read_mask(path, threshold: int = 128) -> np.ndarray:
    """Load a saliency/binary mask PNG as a boolean array.

    The file must be single-channel; pixels >= threshold are foreground.
    """
    img = _open_image(path)
    if img.mode == "1":
        img = img.convert("L")
    if img.mode != "L":
        raise UnsupportedFormatError(
            f"{path}: expected 8-bit grayscale mask, got mode {img.mode}")
    return np.asarray(img) >= threshold


def read_class_mask(path) -> np.ndarray:
    """Load a ground-truth segmentation as a (H, W) uint8 label grid.

    Accepts grayscale or palettised PNGs; palette indices are the class
    ids (the usual encoding for dense annotation files).
    """
    img = _open_image(path)
    if img.mode not in ("L", "P"):
        raise UnsupportedFormatError(
            f"{path}: expected L or P mode label grid, got mode {img.mode}")
    # P-mode arrays are the palette indices, i.e. the class ids themselves
    return np.asarray(img, dtype=np.uint8)


def binarize_class_mask(grid: np.ndarray, class_id: int) -> np.ndarray:
    """True exactly where the label grid equals class_id."""
    return np.asarray(grid) == class_id


# --------------------------------------------------------------------
# fold layouts


@dataclass(frozen=True)
class FoldSpec:
    dataset: str
    num_classes: int
    scheme: str
    folds: tuple[tuple[int, ...], ...]


def fold_classes(dataset: str, fold: int, scheme: str = "block") -> tuple[int, ...]:
    """Class ids held out by one cross-validation fold.

    Both supported datasets split their classes into four folds of
    equal size. ``block`` assigns consecutive ids (fold i of a 20-class
    set holds 5i+1 .. 5i+5); ``interleave`` deals ids round-robin
    ((c - 1) % 4 == i), a layout some published splits use for the
    80-class set.
    """
    if dataset not in ("pascal", "coco"):
        raise UnknownDatasetError(f"unknown dataset {dataset!r} (expected pascal or coco)")
    if not 0 <= fold <= 3:
        raise ValueError(f"fold must be in 0..3, got {fold}")
    if scheme not in ("block", "interleave"):
        raise ValueError(f"unknown fold scheme {scheme!r}")
    num = 20 if dataset == "pascal" else 80
    per = num // 4
    if scheme == "block":
        return tuple(range(per * fold + 1, per * fold + per + 1))
    return tuple(c for c in range(1, num + 1) if (c - 1) % 4 == fold)


def fold_spec(dataset: str, scheme: str = "block") -> FoldSpec:
    folds = tuple(fold_classes(dataset, i, scheme) for i in range(4))
    return FoldSpec(dataset=dataset, num_classes=20 if dataset == "pascal" else 80,
                    scheme=scheme, folds=folds)


# --------------------------------------------------------------------
# episode packs


def episode_file_names(episode_id: str) -> dict[str, str]:
    return {key: episode_id + suffix for key, suffix in _EPISODE_SUFFIXES.items()}


def _encode_png(arr: np.ndarray, mode: str) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(arr, mode).save(buf, format="PNG")
    return buf.getvalue()


def write_episode(pack_dir, episode: Episode) -> dict:
    """Write one episode's four PNGs; returns its manifest entry.

    The entry records file names, CRC32 of each file's bytes, and the
    episode metadata. Checksums are computed on the encoded bytes that
    hit the disk, so any later corruption is caught on read.
    """
    pack_dir = Path(pack_dir)
    names = episode_file_names(episode.episode_id)
    payload = {
        "support": _encode_png(episode.support_image, "RGB"),
        "support_mask": _encode_png(episode.support_mask.astype(np.uint8), "L"),
        "query": _encode_png(episode.query_image, "RGB"),
        "query_label": _encode_png(episode.query_label, "L"),
    }
    crcs = {}
    for key, data in payload.items():
        (pack_dir / names[key]).write_bytes(data)
        crcs[key] = zlib.crc32(data)
    return {
        "id": episode.episode_id,
        "files": names,
        "crc32": crcs,
        "meta": episode.meta,
    }


def write_pack_manifest(pack_dir, out_size: int, seed: int, config_dict: dict,
                        entries: list[dict]) -> None:
    doc = {
        "version": PACK_VERSION,
        "out_size": out_size,
        "seed": seed,
        "config": config_dict,
        "episodes": sorted(entries, key=lambda e: e["id"]),
    }
    (Path(pack_dir) / PACK_MANIFEST_NAME).write_text(json.dumps(doc, indent=2, sort_keys=True))


def load_pack_manifest(pack_dir) -> dict:
    path = Path(pack_dir) / PACK_MANIFEST_NAME
    if not path.is_file():
        raise MissingFileError(f"pack manifest not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("version") != PACK_VERSION:
        raise ParseError(f"{path}: unsupported pack version {doc.get('version')!r}")
    if not isinstance(doc.get("episodes"), list):
        raise ParseError(f"{path}: missing 'episodes' list")
    return doc


def _read_checked(pack_dir: Path, entry: dict, key: str, verify_crc: bool) -> np.ndarray:
    name = entry["files"][key]
    path = pack_dir / name
    if not path.is_file():
        raise MissingFileError(f"episode {entry['id']}: missing file {name}")
    data = path.read_bytes()
    if verify_crc:
        expected = entry.get("crc32", {}).get(key)
        if expected is not None and zlib.crc32(data) != expected:
            raise ChecksumMismatchError(
                f"episode {entry['id']}: CRC32 mismatch for {name}")
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except (UnidentifiedImageError, OSError) as exc:
        raise UnsupportedFormatError(f"episode {entry['id']}: {name} undecodable ({exc})") from exc
    return np.asarray(img)


def read_episode(pack_dir, entry: dict, verify_crc: bool = True) -> Episode:
    """Load one episode back from a pack, checking the data contract.

    Raises:
        ChecksumMismatchError: stored CRC32 disagrees with file bytes.
        ValidationError: mask/label values outside their alphabets, or
            mismatched array shapes.
    """
    pack_dir = Path(pack_dir)
    eid = entry["id"]
    support = _read_checked(pack_dir, entry, "support", verify_crc)
    support_mask = _read_checked(pack_dir, entry, "support_mask", verify_crc)
    query = _read_checked(pack_dir, entry, "query", verify_crc)
    label = _read_checked(pack_dir, entry, "query_label", verify_crc)

    for name, arr in (("support", support), ("query", query)):
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValidationError(f"episode {eid}: {name} image is not RGB")
    for name, arr in (("support_mask", support_mask), ("query_label", label)):
        if arr.ndim != 2:
            raise ValidationError(f"episode {eid}: {name} is not single-channel")
    if not (support.shape[:2] == query.shape[:2]
            == support_mask.shape == label.shape):
        raise ValidationError(f"episode {eid}: inconsistent array shapes")

    bad = set(np.unique(support_mask)) - {0, 1}
    if bad:
        raise ValidationError(f"episode {eid}: support mask values {sorted(bad)} not in {{0, 1}}")
    bad = set(np.unique(label)) - {0, 1, IGNORE_LABEL}
    if bad:
        raise ValidationError(
            f"episode {eid}: query label values {sorted(bad)} not in {{0, 1, {IGNORE_LABEL}}}")

    return Episode(
        episode_id=eid,
        support_image=support,
        support_mask=support_mask.astype(bool),
        query_image=query,
        query_label=label.astype(np.uint8),
        meta=dict(entry.get("meta", {})),
    )


def verify_pack(pack_dir) -> list[str]:
    """Recheck a pack against its manifest; returns human-readable problems.

    Covers checksum integrity, decodability, the out_size declared in
    the manifest, mask/label alphabets, and split bookkeeping (applied
    episodes keep the configured minimum pixels per side; unsplit
    episodes carry no IGNORE pixels).
    """
    pack_dir = Path(pack_dir)
    problems: list[str] = []
    try:
        doc = load_pack_manifest(pack_dir)
    except Exception as exc:  # noqa: BLE001 - verification reports, not raises
        return [str(exc)]
    out_size = doc.get("out_size")
    min_side = (doc.get("config", {}).get("split", {}) or {}).get("min_side_pixels")
    for entry in doc["episodes"]:
        eid = entry.get("id", "<missing id>")
        try:
            ep = read_episode(pack_dir, entry, verify_crc=True)
        except Exception as exc:  # noqa: BLE001
            problems.append(str(exc))
            continue
        if out_size is not None and ep.support_image.shape[:2] != (out_size, out_size):
            problems.append(
                f"episode {eid}: arrays are {ep.support_image.shape[:2]}, "
                f"manifest declares {out_size}x{out_size}")
        meta = ep.meta
        ignore = int(np.count_nonzero(ep.query_label == IGNORE_LABEL))
        if meta.get("applied"):
            support_px = int(np.count_nonzero(ep.support_mask))
            query_px = int(np.count_nonzero(ep.query_label == 1))
            if min_side is not None and min(support_px, query_px) < min_side:
                problems.append(
                    f"episode {eid}: split episode keeps only "
                    f"{min(support_px, query_px)} pixels on one side (min {min_side})")
        elif "applied" in meta and ignore:
            problems.append(
                f"episode {eid}: unsplit episode has {ignore} IGNORE pixels")
    return problems


# --------------------------------------------------------------------
# prediction sets


def prediction_file_name(task_id: str) -> str:
    return f"{task_id}_pred.png"


def write_prediction_set(out_dir, predictions: dict[str, np.ndarray]) -> None:
    """Write binary prediction masks plus the predictions.json index."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    index = {}
    for task_id in sorted(predictions):
        name = prediction_file_name(task_id)
        arr = np.asarray(predictions[task_id]).astype(np.uint8)
        Image.fromarray(arr, "L").save(out_dir / name)
        index[task_id] = name
    (out_dir / PREDICTIONS_INDEX_NAME).write_text(
        json.dumps({"tasks": index}, indent=2, sort_keys=True))


def load_prediction_set(pred_dir) -> dict[str, Path]:
    """Map task id -> prediction file path.

    Uses predictions.json when present, otherwise falls back to
    globbing ``*_pred.png``.
    """
    pred_dir = Path(pred_dir)
    if not pred_dir.is_dir():
        raise MissingFileError(f"prediction directory not found: {pred_dir}")
    index_path = pred_dir / PREDICTIONS_INDEX_NAME
    if index_path.is_file():
        try:
            doc = json.loads(index_path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"{index_path}: not valid JSON ({exc})") from exc
        tasks = doc.get("tasks")
        if not isinstance(tasks, dict):
            raise ParseError(f"{index_path}: missing 'tasks' object")
        return {tid: pred_dir / name for tid, name in tasks.items()}
    return {p.name[:-len("_pred.png")]: p for p in sorted(pred_dir.glob("*_pred.png"))}


def read_prediction(path) -> np.ndarray:
    """Load a prediction mask: single-channel PNG, nonzero = foreground."""
    img = _open_image(path)
    if img.mode == "1":
        img = img.convert("L")
    if img.mode != "L":
        raise UnsupportedFormatError(
            f"{path}: expected 8-bit grayscale prediction, got mode {img.mode}")
    return np.asarray(img) > 0
