"""Deterministic episode-pack generation, optionally in parallel.

Every episode gets its own random stream derived from (global seed,
image id, episode index), so the bytes written for an episode depend
only on those three values and the config — never on worker count,
scheduling order, or which other images are in the manifest. Workers
produce files independently; the parent assembles the manifest with
episodes sorted by id, making whole-pack output byte-identical across
runs and across --workers settings.
"""
from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .dataio import DatasetManifest, ManifestEntry, read_image, read_mask, \
    write_episode, write_pack_manifest
from .episodes import EpisodeConfig, episode_config_to_dict, make_episode
from .errors import EpisplitError, InsufficientForegroundError


@dataclass
class GenerationStats:
    generated: int = 0
    skipped_insufficient_foreground: int = 0
    fallback_no_split: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def stable_image_key(image_id: str) -> int:
    """Image id -> 64-bit integer, stable across runs and platforms."""
    digest = hashlib.sha256(image_id.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def episode_rng(seed: int, image_id: str, episode_index: int) -> np.random.Generator:
    """The random stream owned by one (image, episode index) slot."""
    ss = np.random.SeedSequence([seed, stable_image_key(image_id), episode_index])
    return np.random.default_rng(ss)


def episode_id_for(image_id: str, episode_index: int) -> str:
    return f"{image_id}_e{episode_index:03d}"


def _generate_for_image(entry: ManifestEntry, root: str | None,
                        config: EpisodeConfig, seed: int, out_dir: str):
    """Worker body: all episodes of one image. Returns (entries, stats)."""
    manifest = DatasetManifest(name="", entries=[], root=Path(root) if root else None)
    if entry.saliency_path is None:
        raise EpisplitError(f"{entry.image_id}: no saliency mask; cannot generate episodes")
    image = read_image(manifest.resolve(entry.image_path))
    saliency = read_mask(manifest.resolve(entry.saliency_path))

    entries: list[dict] = []
    stats = GenerationStats()
    for index in range(config.episodes_per_image):
        rng = episode_rng(seed, entry.image_id, index)
        try:
            episode = make_episode(image, saliency, config, rng,
                                   episode_id=episode_id_for(entry.image_id, index),
                                   source_id=entry.image_id)
        except InsufficientForegroundError:
            stats.skipped_insufficient_foreground += 1
            continue
        if episode.meta.get("split_fallback"):
            stats.fallback_no_split += 1
        entries.append(write_episode(out_dir, episode))
        stats.generated += 1
    return entries, stats


def generate_dataset(manifest: DatasetManifest, config: EpisodeConfig,
                     out_dir, seed: int, workers: int = 1) -> GenerationStats:
    """Generate an episode pack for every manifest image with saliency.

    Args:
        manifest: dataset description; entries lacking a saliency path
            are rejected up front.
        config: episode recipe; echoed verbatim into the pack manifest.
        out_dir: pack directory, created if needed.
        seed: global seed combined with per-image keys.
        workers: parallel processes; results are byte-identical for
            any value >= 1.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    root = str(manifest.root) if manifest.root is not None else None

    jobs = [(e, root, config, seed, str(out_dir)) for e in manifest.entries]
    if workers <= 1:
        results = [_generate_for_image(*args) for args in jobs]
    else:
        results = Parallel(n_jobs=workers)(
            delayed(_generate_for_image)(*args) for args in jobs)

    all_entries: list[dict] = []
    stats = GenerationStats()
    for entries, partial in results:
        all_entries.extend(entries)
        stats.generated += partial.generated
        stats.skipped_insufficient_foreground += partial.skipped_insufficient_foreground
        stats.fallback_no_split += partial.fallback_no_split

    write_pack_manifest(out_dir, config.out_size, seed,
                        episode_config_to_dict(config), all_entries)
    return stats
