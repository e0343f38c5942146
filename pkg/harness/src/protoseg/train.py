"""Training loop over an episode pack.

Only the mixing head and decoder learn; the backbone never moves. Each
step draws its batch with a generator seeded by (run seed, step), so a
run is fully determined by its config — interrupting and resuming from
a checkpoint continues the exact same loss trajectory.
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .losses import masked_cross_entropy
from .model import PrototypeSegmenter
from .packs import EpisodePack, batch_tensors

CHECKPOINT_NAME = "checkpoint.pt"
LOSS_LOG_NAME = "loss_log.json"


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 1000
    batch_size: int = 16
    lr: float = 1e-4
    weight_decay: float = 1e-5
    seed: int = 0
    backbone: str = "resnet101"
    proj_dim: int = 256
    checkpoint_every: int = 100
    weights_path: str | None = None


def _batch_indices(seed: int, step: int, pack_size: int, batch_size: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([seed, step]))
    return rng.integers(0, pack_size, size=batch_size)


def _save_checkpoint(out_dir: Path, model, optimizer, config: TrainConfig,
                     step: int, losses: list) -> None:
    payload = {
        "step": step,
        "model": model.state_dict(),
        "optimizer": optimizer.state_dict(),
        "config": dataclasses.asdict(config),
        "losses": losses,
    }
    tmp = out_dir / (CHECKPOINT_NAME + ".tmp")
    torch.save(payload, tmp)
    os.replace(tmp, out_dir / CHECKPOINT_NAME)  # atomic: never a torn checkpoint
    (out_dir / LOSS_LOG_NAME).write_text(json.dumps({"losses": losses}, indent=2))


def load_checkpoint(path) -> dict:
    return torch.load(Path(path), map_location="cpu", weights_only=False)


def build_model(config: TrainConfig) -> PrototypeSegmenter:
    torch.manual_seed(config.seed)  # reproducible head/decoder init
    return PrototypeSegmenter(config.backbone, config.proj_dim, config.weights_path)


def train(pack_dir, out_dir, config: TrainConfig, resume: bool = False) -> list[dict]:
    """Train on a pack; returns the per-step loss history.

    With ``resume`` and an existing checkpoint in ``out_dir``, training
    picks up at the recorded step with the recorded model/optimizer
    state and extends the same loss log.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pack = EpisodePack(pack_dir)
    if len(pack) == 0:
        raise ValueError(f"pack {pack_dir} has no episodes")

    model = build_model(config)
    trainable = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam(trainable, lr=config.lr,
                                 weight_decay=config.weight_decay)
    start_step = 0
    losses: list[dict] = []

    checkpoint_path = out_dir / CHECKPOINT_NAME
    if resume and checkpoint_path.is_file():
        state = load_checkpoint(checkpoint_path)
        saved = state["config"]
        for key in ("backbone", "proj_dim", "batch_size", "lr", "weight_decay", "seed"):
            if saved.get(key) != getattr(config, key):
                raise ValueError(
                    f"checkpoint was trained with {key}={saved.get(key)!r}, "
                    f"got {getattr(config, key)!r}")
        model.load_state_dict(state["model"])
        optimizer.load_state_dict(state["optimizer"])
        start_step = state["step"]
        losses = list(state["losses"])

    model.train()
    for step in range(start_step, config.steps):
        indices = _batch_indices(config.seed, step, len(pack), config.batch_size)
        batch = batch_tensors(pack, indices)
        logits = model(batch["support_image"], batch["support_mask"],
                       batch["query_image"])
        loss = masked_cross_entropy(logits, batch["query_label"])
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        losses.append({"step": step, "loss": float(loss.detach())})
        if (step + 1) % config.checkpoint_every == 0:
            _save_checkpoint(out_dir, model, optimizer, config, step + 1, losses)

    _save_checkpoint(out_dir, model, optimizer, config, config.steps, losses)
    return losses
