"""Command-line interface.

Subcommands: gen, masks export, codec fit|apply, aggregate, segment,
postprocess, eval, pipeline, sweep.  Exit codes: 0 success, 2 configuration
error, 3 container I/O error, 4 computation error.  Flags override config
file fields; configs are plain JSON documents mirroring the module types.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .aggregation import aggregate_affinities, baseline_affinities
from .codec import fit_codec, read_codec, roundtrip_field, write_codec
from .core import AffinityNeighborhood, Scale
from .errors import ComputeError, ContainerError, MasksegError, ValidationError
from .io import (
    read_graph,
    read_mask_field,
    read_volume,
    write_graph,
    write_mask_field,
    write_volume,
)
from .masks import FileMaskProvider
from .metrics import evaluation_report
from .partition import PartitionConfig, gasp_average, mutex_watershed, remove_small_segments
from .pipeline import (
    build_provider,
    neighborhood_from_config,
    run_pipeline,
    run_sweep,
)
from .synth import generate_labels


def _load_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as e:
        raise ContainerError(f"missing config file {path}") from e
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: invalid JSON ({e})") from e


def _neighborhood(args) -> AffinityNeighborhood:
    spec = {"neighborhood": args.neighborhood}
    if args.neighborhood.endswith(".json"):
        doc = _load_json(args.neighborhood)
        spec = {"offsets": doc["offsets"], "direct_count": doc["direct_count"]}
    return neighborhood_from_config(spec)


def cmd_gen(args) -> int:
    vol = generate_labels(tuple(args.shape), args.instances, tuple(args.anisotropy), args.seed)
    write_volume(vol, args.output)
    return 0


def cmd_masks_export(args) -> int:
    labels = read_volume(args.volume)
    masks_cfg = {
        "window": args.window,
        "scales": [args.scale],
        "empty_near_boundary": args.rule,
        "noise": (
            {"flip_sigma": args.noise_sigma, "smoothing_radius": args.noise_radius, "seed": args.noise_seed}
            if args.noise_sigma > 0
            else None
        ),
        "codec": {"q": 0} if args.codec else None,
    }
    provider, _ = build_provider(labels, masks_cfg, codec_path=args.codec)
    scale = Scale(*args.scale).validate()
    field = provider.mask_field(scale)
    write_mask_field(args.output, field, provider.window, scale)
    return 0


def cmd_codec_fit(args) -> int:
    sample_rows = []
    window = None
    for path in args.field:
        field, win, _ = read_mask_field(path)
        if window is None:
            window = win
        elif win != window:
            raise ValidationError(f"{path}: window {tuple(win)} differs from {tuple(window)}")
        sample_rows.append(field.reshape(-1, window.size))
    rows = np.concatenate(sample_rows)
    if args.samples and args.samples < len(rows):
        rng = np.random.default_rng(args.seed)
        rows = rows[np.sort(rng.choice(len(rows), size=args.samples, replace=False))]
    codec = fit_codec(rows.astype(np.float64), q=args.q, seed=args.seed, window=window)
    write_codec(codec, args.output)
    return 0


def cmd_codec_apply(args) -> int:
    codec = read_codec(args.codec)
    field, window, scale = read_mask_field(args.field)
    if window != codec.window:
        raise ValidationError(f"field window {tuple(window)} != codec window {tuple(codec.window)}")
    write_mask_field(args.output, roundtrip_field(codec, field), window, scale)
    return 0


def cmd_aggregate(args) -> int:
    provider = FileMaskProvider(*args.field)
    nb = _neighborhood(args)
    if args.method == "mask_aggregation":
        graph = aggregate_affinities(provider, neighborhood=nb, threads=args.threads)
    else:
        graph = baseline_affinities(provider, neighborhood=nb)
    write_graph(graph, args.output)
    return 0


def cmd_segment(args) -> int:
    graph = read_graph(args.graph)
    cfg = PartitionConfig(
        long_range_fraction=args.long_range_fraction,
        subsample_seed=args.seed,
        gasp_evidence_weighted=not args.unit_weights,
    )
    seg = mutex_watershed(graph, cfg) if args.method == "mws" else gasp_average(graph, cfg)
    write_volume(seg, args.output)
    return 0


def cmd_postprocess(args) -> int:
    seg = read_volume(args.seg)
    graph = read_graph(args.graph)
    write_volume(remove_small_segments(seg, graph, args.min_size), args.output)
    return 0


def cmd_eval(args) -> int:
    seg = read_volume(args.seg)
    gt = read_volume(args.gt)
    report = evaluation_report(seg, gt)
    text = json.dumps(report, indent=1, sort_keys=True) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _apply_overrides(config: dict, assignments: list[str]) -> dict:
    """Fold ``--set section.key=value`` flags into a config document.

    Flags take precedence over config-file fields, which take precedence
    over the built-in defaults.  Values are parsed as JSON, falling back
    to plain strings.
    """
    for assignment in assignments:
        if "=" not in assignment:
            raise ValidationError(f"--set expects key=value, got {assignment!r}")
        dotted, raw = assignment.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = config
        *parents, leaf = dotted.split(".")
        for part in parents:
            nxt = node.setdefault(part, {})
            if not isinstance(nxt, dict):
                raise ValidationError(f"--set path {dotted!r} crosses non-object field {part!r}")
            node = nxt
        node[leaf] = value
    return config


def cmd_pipeline(args) -> int:
    config = _load_json(args.config) if args.config else {}
    config = _apply_overrides(config, args.set or [])
    run_pipeline(config, args.output, threads=args.threads)
    return 0


def cmd_sweep(args) -> int:
    config = _load_json(args.config)
    config = _apply_overrides(config, args.set or [])
    run_sweep(config, args.output, threads=args.threads)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maskseg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic label volume")
    p.add_argument("--shape", type=int, nargs=3, metavar=("X", "Y", "Z"), required=True)
    p.add_argument("--instances", type=int, required=True)
    p.add_argument("--anisotropy", type=float, nargs=3, metavar=("AZ", "AY", "AX"), default=[10.0, 1.0, 1.0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(fn=cmd_gen)

    p_masks = sub.add_parser("masks", help="mask-field operations")
    masks_sub = p_masks.add_subparsers(dest="subcommand", required=True)
    p = masks_sub.add_parser("export", help="export a mask field for one scale")
    p.add_argument("--volume", required=True)
    p.add_argument("--window", type=int, nargs=3, metavar=("KX", "KY", "KZ"), default=[7, 7, 5])
    p.add_argument("--scale", type=int, nargs=3, metavar=("SX", "SY", "SZ"), default=[1, 1, 1])
    p.add_argument("--rule", action="store_true", help="empty masks near label transitions")
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--noise-radius", type=int, default=0)
    p.add_argument("--noise-seed", type=int, default=0)
    p.add_argument("--codec", default=None, help="round-trip through a fitted codec file")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(fn=cmd_masks_export)

    p_codec = sub.add_parser("codec", help="latent codec operations")
    codec_sub = p_codec.add_subparsers(dest="subcommand", required=True)
    p = codec_sub.add_parser("fit", help="fit a codec on mask-field samples")
    p.add_argument("--field", nargs="+", required=True)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--samples", type=int, default=0, help="subsample size (0 = use all rows)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(fn=cmd_codec_fit)
    p = codec_sub.add_parser("apply", help="round-trip a mask field through a codec")
    p.add_argument("--field", required=True)
    p.add_argument("--codec", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(fn=cmd_codec_apply)

    p = sub.add_parser("aggregate", help="aggregate mask fields into an affinity graph")
    p.add_argument("--field", nargs="+", required=True, help="mask-field containers, one per scale")
    p.add_argument("--neighborhood", default="grid", help="preset name or offsets JSON file")
    p.add_argument("--method", choices=["mask_aggregation", "baseline"], default="mask_aggregation")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(fn=cmd_aggregate)

    p = sub.add_parser("segment", help="partition an affinity graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--method", choices=["mws", "gasp"], default="mws")
    p.add_argument("--long-range-fraction", type=float, default=0.10)
    p.add_argument("--seed", type=int, default=0, help="long-range subsampling seed")
    p.add_argument("--unit-weights", action="store_true", help="unweighted interactions for gasp")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(fn=cmd_segment)

    p = sub.add_parser("postprocess", help="remove small segments and regrow")
    p.add_argument("--seg", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--min-size", type=int, default=200)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(fn=cmd_postprocess)

    p = sub.add_parser("eval", help="score a segmentation against ground truth")
    p.add_argument("--seg", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("pipeline", help="run the full staged pipeline")
    p.add_argument("--config", default=None, help="pipeline config JSON")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config field, e.g. --set gen.seed=5 (repeatable)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("-o", "--output", required=True, help="run directory")
    p.set_defaults(fn=cmd_pipeline)

    p = sub.add_parser("sweep", help="grid of pipeline runs, scores to CSV")
    p.add_argument("--config", required=True, help="sweep config JSON")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config field (repeatable)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("-o", "--output", required=True, help="sweep directory")
    p.set_defaults(fn=cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ContainerError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (ComputeError, MasksegError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
