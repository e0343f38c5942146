"""Episode assembly: one image plus its saliency mask in, one
support/query training pair out.

The recipe: resize both to the square working size, cut the salient
object with a balanced split line (support gets one piece, query the
other), then augment the two views independently. The query label
marks its own piece as foreground and — crucially — marks whatever the
support piece covers in the query view as IGNORE, so the loss never
punishes a model for segmenting object parts that were assigned to the
support annotation.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any

import cv2
import numpy as np

from .augment import AugmentationSpec, IDENTITY_GEOMETRIC, IDENTITY_PHOTOMETRIC, augment_view
from .errors import DimensionMismatchError, InsufficientForegroundError
from .geometry import SplitConfig, SplitMode, apply_split, foreground_count

#: Query-label value excluded from any loss or score.
IGNORE_LABEL = 255

#: Default square side for episode images and masks.
DEFAULT_OUT_SIZE = 400


@dataclass(frozen=True)
class EpisodeConfig:
    out_size: int = DEFAULT_OUT_SIZE
    split: SplitConfig = field(default_factory=SplitConfig)
    aug: AugmentationSpec = field(default_factory=AugmentationSpec)
    episodes_per_image: int = 1
    #: Saliency masks with fewer resized foreground pixels than this are skipped.
    min_image_fg: int = 200
    #: Augmentation redraws allowed before a view falls back to the identity.
    view_resample: int = 20

    def __post_init__(self):
        if self.out_size < 1:
            raise ValueError("out_size must be >= 1")
        if self.episodes_per_image < 1:
            raise ValueError("episodes_per_image must be >= 1")
        if self.min_image_fg < 1:
            raise ValueError("min_image_fg must be >= 1")
        if self.view_resample < 0:
            raise ValueError("view_resample must be >= 0")


@dataclass
class Episode:
    """One generated support/query pair, all arrays out_size x out_size.

    query_label values: 0 background, 1 foreground, IGNORE_LABEL for
    pixels covered by the support-side piece in the query view.
    """

    episode_id: str
    support_image: np.ndarray
    support_mask: np.ndarray
    query_image: np.ndarray
    query_label: np.ndarray
    meta: dict[str, Any] = field(default_factory=dict)


def compute_ignore_label(query_fg: np.ndarray, support_fg: np.ndarray) -> np.ndarray:
    """Build the query label grid from the two query-view mask pieces.

    Foreground (1) wherever the query piece sits, IGNORE_LABEL where
    only the support piece sits, 0 elsewhere. Foreground always wins,
    so label 1 and IGNORE never overlap by construction.
    """
    query_fg = np.asarray(query_fg, dtype=bool)
    support_fg = np.asarray(support_fg, dtype=bool)
    if query_fg.shape != support_fg.shape:
        raise DimensionMismatchError(
            f"query mask {query_fg.shape} vs support mask {support_fg.shape}")
    label = np.zeros(query_fg.shape, dtype=np.uint8)
    label[support_fg & ~query_fg] = IGNORE_LABEL
    label[query_fg] = 1
    return label


def _augmented_view(image, masks, config: EpisodeConfig, rng, min_first_mask: int):
    """One view, redrawing augmentations that wipe out too much mask.

    Aggressive crops/scales can push nearly the whole assigned piece off
    the canvas; rather than emit a near-empty annotation the draw is
    retried, and after ``view_resample`` misses the view keeps the
    identity geometry (which preserves the pre-augmentation pixel
    counts exactly).
    """
    attempts = config.view_resample if config.aug.enabled else 0
    for _ in range(attempts):
        out_img, out_masks = augment_view(image, masks, config.aug, rng, config.out_size)
        if foreground_count(out_masks[0]) >= min_first_mask:
            return out_img, out_masks, False
    identity = dataclasses.replace(config.aug, enabled=False)
    out_img, out_masks = augment_view(image, masks, identity, rng, config.out_size)
    return out_img, out_masks, config.aug.enabled


def make_episode(image: np.ndarray, saliency: np.ndarray, config: EpisodeConfig,
                 rng: np.random.Generator, episode_id: str = "",
                 source_id: str | None = None) -> Episode:
    """Build one episode from an image and its saliency mask.

    Args:
        image: (H, W, 3) uint8 RGB array.
        saliency: (H, W) binary mask, same size as the image.
        config: sizes, split policy and augmentation ranges.
        rng: numpy Generator; drives every random choice, so a given
            state yields a byte-identical episode.
        episode_id: identifier stored on the episode.
        source_id: originating image id, kept in the metadata.

    Raises:
        DimensionMismatchError: image and saliency sizes differ.
        InsufficientForegroundError: resized saliency has fewer than
            ``config.min_image_fg`` foreground pixels.
    """
    image = np.asarray(image)
    saliency = np.asarray(saliency)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {image.shape}")
    if saliency.shape != image.shape[:2]:
        raise DimensionMismatchError(
            f"saliency {saliency.shape} does not match image {image.shape[:2]}")

    size = (config.out_size, config.out_size)
    image_r = cv2.resize(image, size, interpolation=cv2.INTER_LINEAR)
    saliency_r = cv2.resize(saliency.astype(np.uint8), size,
                            interpolation=cv2.INTER_NEAREST) > 0

    fg = foreground_count(saliency_r)
    if fg < config.min_image_fg:
        raise InsufficientForegroundError(
            f"{source_id or 'image'}: {fg} foreground pixels after resize "
            f"(need >= {config.min_image_fg})")

    outcome = apply_split(saliency_r, config.split, rng)
    min_keep = config.split.min_side_pixels if outcome.applied else 1

    support_image, (support_mask,), support_fallback = _augmented_view(
        image_r, [outcome.support_fg], config, rng, min_keep)
    query_image, (query_fg, support_in_query), query_fallback = _augmented_view(
        image_r, [outcome.query_fg, outcome.support_fg], config, rng, min_keep)

    label = compute_ignore_label(query_fg, support_in_query)

    meta = {
        "source_id": source_id,
        "applied": outcome.applied,
        "axis": outcome.line.axis.value if outcome.line else None,
        "balance": outcome.line.balance if outcome.line else None,
        "shift": outcome.line.shift if outcome.line else None,
        "swapped": outcome.swapped,
        "split_fallback": outcome.fallback,
        "saliency_pixels": fg,
        "support_pixels": foreground_count(support_mask),
        "query_pixels": foreground_count(query_fg),
        "ignore_pixels": int(np.count_nonzero(label == IGNORE_LABEL)),
        "support_aug_fallback": support_fallback,
        "query_aug_fallback": query_fallback,
    }
    return Episode(
        episode_id=episode_id,
        support_image=support_image,
        support_mask=support_mask,
        query_image=query_image,
        query_label=label,
        meta=meta,
    )


# --- config (de)serialisation, shared by the CLI and pack manifests ---

def split_config_to_dict(cfg: SplitConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["mode"] = cfg.mode.value
    return d


def split_config_from_dict(d: dict) -> SplitConfig:
    d = dict(d)
    if "mode" in d:
        d["mode"] = SplitMode(d["mode"])
    return SplitConfig(**d)


def aug_spec_to_dict(spec: AugmentationSpec) -> dict:
    d = dataclasses.asdict(spec)
    for k, v in d.items():
        if isinstance(v, tuple):
            d[k] = list(v)
    return d


def aug_spec_from_dict(d: dict) -> AugmentationSpec:
    d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
    return AugmentationSpec(**d)


def episode_config_to_dict(cfg: EpisodeConfig) -> dict:
    return {
        "out_size": cfg.out_size,
        "split": split_config_to_dict(cfg.split),
        "aug": aug_spec_to_dict(cfg.aug),
        "episodes_per_image": cfg.episodes_per_image,
        "min_image_fg": cfg.min_image_fg,
        "view_resample": cfg.view_resample,
    }


def episode_config_from_dict(d: dict) -> EpisodeConfig:
    d = dict(d)
    if "split" in d:
        d["split"] = split_config_from_dict(d["split"])
    if "aug" in d:
        d["aug"] = aug_spec_from_dict(d["aug"])
    return EpisodeConfig(**d)
