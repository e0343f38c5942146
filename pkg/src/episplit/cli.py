"""Command-line front end.

Subcommands: generate (build an episode pack from a dataset manifest),
verify (recheck a pack's integrity), inspect (render overlay
composites for eyeballing), evaluate (multi-run mIoU protocol) and
export-tasks (materialise evaluation tasks for an external model).

Exit codes: 0 success, 1 data or contract errors, 2 usage errors.
Option precedence is built-in defaults, then --config file, then
explicit flags. With --strict-repro every randomised command must be
given an explicit --seed.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np
from PIL import Image

from .dataio import fold_spec, load_manifest, load_pack_manifest, read_episode, verify_pack
from .episodes import (
    DEFAULT_OUT_SIZE,
    IGNORE_LABEL,
    EpisodeConfig,
    episode_config_from_dict,
    episode_config_to_dict,
)
from .errors import EpisplitError, ParseError
from .generate import generate_dataset
from .metrics import (
    evaluate as run_protocol,
    export_tasks,
    prediction_set_predictor,
    saliency_predictor,
)


@click.group()
@click.option("--strict-repro", is_flag=True,
              help="Refuse randomised commands that lack an explicit --seed.")
@click.pass_context
def cli(ctx, strict_repro):
    ctx.obj = {"strict_repro": strict_repro}


def _resolve_seed(ctx, seed):
    if seed is None:
        if ctx.obj and ctx.obj.get("strict_repro"):
            raise click.UsageError("--strict-repro requires an explicit --seed")
        return 0
    return seed


def _fail(exc: BaseException) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(1)


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _load_config_file(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise click.UsageError(f"--config {path}: not valid JSON ({exc})")
    if not isinstance(data, dict):
        raise click.UsageError(f"--config {path}: expected a JSON object")
    return data


@cli.command()
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--seed", type=int, default=None, help="Global generation seed (default 0).")
@click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="JSON config file; explicit flags override it.")
@click.option("--split", "split_mode",
              type=click.Choice(["vsplit", "hsplit", "mixed", "none"]), default=None)
@click.option("--prob", type=click.FloatRange(0.0, 1.0), default=None,
              help="Probability of splitting an episode's mask.")
@click.option("--slope", type=click.IntRange(min=0), default=None,
              help="Max endpoint shift of the split line; 0 disables tilting.")
@click.option("--alternate/--no-alternate", "alternate", default=None,
              help="Randomly swap which side becomes the support annotation.")
@click.option("--min-side", type=click.IntRange(min=0), default=None,
              help="Minimum foreground pixels each split side must keep.")
@click.option("--max-resample", type=click.IntRange(min=0), default=None)
@click.option("--out-size", type=click.IntRange(min=1), default=None)
@click.option("--episodes-per-image", type=click.IntRange(min=1), default=None)
@click.option("--min-image-fg", type=click.IntRange(min=1), default=None)
@click.option("--aug/--no-aug", "aug_enabled", default=None)
@click.pass_context
def generate(ctx, manifest, out_dir, seed, workers, config_path, split_mode, prob,
             slope, alternate, min_side, max_resample, out_size,
             episodes_per_image, min_image_fg, aug_enabled):
    """Generate an episode pack from a dataset manifest."""
    seed = _resolve_seed(ctx, seed)
    merged = episode_config_to_dict(EpisodeConfig())
    if config_path:
        merged = _merge(merged, _load_config_file(config_path))
    flags: dict = {"split": {}, "aug": {}}
    if split_mode is not None:
        flags["split"]["mode"] = split_mode
    if prob is not None:
        flags["split"]["prob"] = prob
    if slope is not None:
        flags["split"]["slope_range"] = slope
        flags["split"]["slope_enabled"] = slope > 0
    if alternate is not None:
        flags["split"]["alternate"] = alternate
    if min_side is not None:
        flags["split"]["min_side_pixels"] = min_side
    if max_resample is not None:
        flags["split"]["max_resample"] = max_resample
    if out_size is not None:
        flags["out_size"] = out_size
    if episodes_per_image is not None:
        flags["episodes_per_image"] = episodes_per_image
    if min_image_fg is not None:
        flags["min_image_fg"] = min_image_fg
    if aug_enabled is not None:
        flags["aug"]["enabled"] = aug_enabled
    merged = _merge(merged, flags)

    try:
        config = episode_config_from_dict(merged)
    except (TypeError, ValueError) as exc:
        raise click.UsageError(f"bad configuration: {exc}")

    try:
        data = load_manifest(manifest)
        stats = generate_dataset(data, config, out_dir, seed=seed, workers=workers)
    except EpisplitError as exc:
        _fail(exc)
    click.echo(json.dumps(stats.to_dict()))


@cli.command()
@click.argument("pack", type=click.Path(exists=True, file_okay=False))
def verify(pack):
    """Recheck an episode pack against its manifest."""
    try:
        problems = verify_pack(pack)
        count = len(load_pack_manifest(pack)["episodes"])
    except EpisplitError as exc:
        _fail(exc)
    if problems:
        for p in problems:
            click.echo(p, err=True)
        click.echo(f"FAILED: {len(problems)} problem(s) in {count} episode(s)", err=True)
        sys.exit(1)
    click.echo(f"OK: {count} episode(s) verified")


def _overlay(image: np.ndarray, mask: np.ndarray, color) -> np.ndarray:
    out = image.astype(np.float64)
    out[mask] = 0.5 * out[mask] + 0.5 * np.asarray(color, dtype=np.float64)
    return np.rint(out).astype(np.uint8)


def _composite(episode) -> np.ndarray:
    support = _overlay(episode.support_image, episode.support_mask, (0, 255, 0))
    query = _overlay(episode.query_image, episode.query_label == 1, (0, 255, 0))
    query = _overlay(query, episode.query_label == IGNORE_LABEL, (255, 0, 0))
    gap = np.full((support.shape[0], 8, 3), 255, dtype=np.uint8)
    return np.concatenate([support, gap, query], axis=1)


@cli.command()
@click.argument("pack", type=click.Path(exists=True, file_okay=False))
@click.option("--ids", multiple=True, help="Episode ids to render (default: first --limit).")
@click.option("--limit", type=click.IntRange(min=1), default=8, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Output directory [default: PACK/inspect].")
def inspect(pack, ids, limit, out_dir):
    """Render support/query overlay composites from a pack."""
    out_dir = Path(out_dir) if out_dir else Path(pack) / "inspect"
    try:
        doc = load_pack_manifest(pack)
        entries = {e["id"]: e for e in doc["episodes"]}
        if ids:
            missing = [i for i in ids if i not in entries]
            if missing:
                raise EpisplitError(f"unknown episode id(s): {', '.join(missing)}")
            selected = [entries[i] for i in ids]
        else:
            selected = doc["episodes"][:limit]
        out_dir.mkdir(parents=True, exist_ok=True)
        for entry in selected:
            episode = read_episode(pack, entry)
            img = _composite(episode)
            Image.fromarray(img, "RGB").save(out_dir / f"{episode.episode_id}_inspect.png")
    except EpisplitError as exc:
        _fail(exc)
    click.echo(f"wrote {len(selected)} composite(s) to {out_dir}")


@cli.command()
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--dataset", type=click.Choice(["pascal", "coco"]), required=True)
@click.option("--fold", type=click.IntRange(0, 3), default=None,
              help="Fold to evaluate [default: all four].")
@click.option("--fold-scheme", type=click.Choice(["block", "interleave"]),
              default="block", show_default=True)
@click.option("--runs", type=click.IntRange(min=1), default=5, show_default=True)
@click.option("--tasks", type=click.IntRange(min=1), default=2500, show_default=True)
@click.option("--seed", type=int, default=None, help="Base seed; run r uses seed+r (default 0).")
@click.option("--baseline-saliency", is_flag=True,
              help="Score the query saliency mask as the prediction.")
@click.option("--predictions", "pred_dir", type=click.Path(exists=True, file_okay=False),
              help="Score a prediction-set directory (requires --runs 1 and --fold).")
@click.option("--json", "json_path", type=click.Path(dir_okay=False),
              help="Also write the full report as JSON.")
@click.pass_context
def evaluate(ctx, manifest, dataset, fold, fold_scheme, runs, tasks, seed,
             baseline_saliency, pred_dir, json_path):
    """Run the repeated-sampling mIoU protocol."""
    seed = _resolve_seed(ctx, seed)
    if baseline_saliency == bool(pred_dir):
        raise click.UsageError("choose exactly one of --baseline-saliency or --predictions")
    if pred_dir and runs != 1:
        raise click.UsageError("--predictions scores one exported run; use --runs 1")
    if pred_dir and fold is None:
        raise click.UsageError("--predictions requires an explicit --fold")
    folds = [fold] if fold is not None else [0, 1, 2, 3]

    try:
        data = load_manifest(manifest)
        spec = fold_spec(dataset, fold_scheme)
        if baseline_saliency:
            make_predictor = lambda: saliency_predictor(data)  # noqa: E731
            method = "saliency-baseline"
        else:
            make_predictor = lambda: prediction_set_predictor(pred_dir)  # noqa: E731
            method = "prediction-set"
        report = run_protocol(data, spec, folds, runs, tasks, seed, make_predictor, method)
    except EpisplitError as exc:
        _fail(exc)
    if json_path:
        Path(json_path).write_text(json.dumps(report.to_json_dict(), indent=2))
    click.echo(report.format_table())


@cli.command("export-tasks")
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--dataset", type=click.Choice(["pascal", "coco"]), required=True)
@click.option("--fold", type=click.IntRange(0, 3), required=True)
@click.option("--fold-scheme", type=click.Choice(["block", "interleave"]),
              default="block", show_default=True)
@click.option("--tasks", type=click.IntRange(min=1), default=2500, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--run-index", type=click.IntRange(min=0), default=0, show_default=True,
              help="Which run's task sample to export (task seed = seed + run index).")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--out-size", type=click.IntRange(min=1), default=DEFAULT_OUT_SIZE,
              show_default=True)
@click.pass_context
def export_tasks_cmd(ctx, manifest, dataset, fold, fold_scheme, tasks, seed,
                     run_index, out_dir, out_size):
    """Write one run's evaluation tasks as an episode-pack directory."""
    seed = _resolve_seed(ctx, seed)
    try:
        data = load_manifest(manifest)
        spec = fold_spec(dataset, fold_scheme)
        n = export_tasks(data, spec, fold, tasks, seed, run_index, out_dir, out_size)
    except EpisplitError as exc:
        _fail(exc)
    click.echo(f"exported {n} task(s) to {out_dir}")


def main():
    cli(prog_name="episplit")


if __name__ == "__main__":
    main()
