"""Command-line front end: train on a pack, predict over a task pack."""
from __future__ import annotations

import json
import sys

import click

from .predict import predict_pack
from .train import TrainConfig, train


@click.group()
def cli():
    pass


@cli.command("train")
@click.option("--pack", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--steps", type=click.IntRange(min=1), default=1000, show_default=True)
@click.option("--batch-size", type=click.IntRange(min=1), default=16, show_default=True)
@click.option("--lr", type=float, default=1e-4, show_default=True)
@click.option("--weight-decay", type=float, default=1e-5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--backbone", type=click.Choice(["resnet101", "tiny"]),
              default="resnet101", show_default=True)
@click.option("--proj-dim", type=click.IntRange(min=8), default=256, show_default=True)
@click.option("--checkpoint-every", type=click.IntRange(min=1), default=100,
              show_default=True)
@click.option("--weights", "weights_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Backbone state_dict to load before freezing.")
@click.option("--resume", is_flag=True, help="Continue from the checkpoint in --out.")
def train_cmd(pack, out_dir, steps, batch_size, lr, weight_decay, seed, backbone,
              proj_dim, checkpoint_every, weights_path, resume):
    """Train the mixing head and decoder on an episode pack."""
    config = TrainConfig(steps=steps, batch_size=batch_size, lr=lr,
                         weight_decay=weight_decay, seed=seed, backbone=backbone,
                         proj_dim=proj_dim, checkpoint_every=checkpoint_every,
                         weights_path=weights_path)
    try:
        losses = train(pack, out_dir, config, resume=resume)
    except (ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(json.dumps({"steps": len(losses),
                           "final_loss": losses[-1]["loss"] if losses else None}))


@cli.command("predict")
@click.option("--pack", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
def predict_cmd(pack, checkpoint, out_dir):
    """Write a prediction set for every episode in a pack."""
    try:
        count = predict_pack(pack, checkpoint, out_dir)
    except (ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(f"wrote {count} prediction(s) to {out_dir}")


def main():
    cli(prog_name="protoseg")


if __name__ == "__main__":
    main()
