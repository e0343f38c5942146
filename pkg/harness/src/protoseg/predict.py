"""Inference over a task pack, written out as a prediction set.

The evaluator's exported task packs look exactly like training packs;
each episode's metadata carries the query's native size so the argmax
mask can be scaled back before scoring.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .packs import EpisodePack, episode_tensors
from .train import TrainConfig, build_model, load_checkpoint

PREDICTIONS_INDEX_NAME = "predictions.json"


def model_from_checkpoint(path) -> torch.nn.Module:
    state = load_checkpoint(path)
    config = TrainConfig(**state["config"])
    model = build_model(config)
    model.load_state_dict(state["model"])
    model.eval()
    return model


def predict_pack(pack_dir, checkpoint_path, out_dir) -> int:
    """Predict every episode in a pack; returns the number written.

    Each prediction is saved as ``<episode_id>_pred.png`` (8-bit
    grayscale, values {0, 1}) at the episode's native query size when
    the metadata records one, plus a predictions.json index.
    """
    model = model_from_checkpoint(checkpoint_path)
    pack = EpisodePack(pack_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    index = {}
    with torch.no_grad():
        for i in range(len(pack)):
            episode = pack.load(i)
            tensors = episode_tensors(episode)
            logits = model(tensors["support_image"][None],
                           tensors["support_mask"][None],
                           tensors["query_image"][None])
            mask = (logits.argmax(dim=1)[0] == 1).numpy().astype(np.uint8)
            native = episode.meta.get("query_native_size")
            img = Image.fromarray(mask, "L")
            if native is not None:
                h, w = int(native[0]), int(native[1])
                img = img.resize((w, h), Image.NEAREST)
            name = f"{episode.episode_id}_pred.png"
            img.save(out_dir / name)
            index[episode.episode_id] = name

    (out_dir / PREDICTIONS_INDEX_NAME).write_text(
        json.dumps({"tasks": index}, indent=2, sort_keys=True))
    return len(index)
