"""End-to-end pipeline runner and run manifests.

A run is a directory of containers produced by the staged dataflow

    gen -> masks -> aggregate -> segment -> postprocess -> eval

where every stage communicates through the on-disk container formats, so
each stage is exactly equivalent to its standalone CLI subcommand and the
whole run is reproducible from the manifest alone.  The manifest records
the resolved configuration, a hash of it, all seeds, library versions,
per-stage wall time, and content hashes of every input and output file.
"""

from __future__ import annotations

import csv
import hashlib
import json
import platform
import time
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .aggregation import aggregate_affinities, baseline_affinities
from .codec import codec_provider, fit_codec, read_codec, write_codec
from .core import (
    NEIGHBORHOOD_PRESETS,
    AffinityNeighborhood,
    Coord3,
    LabelVolume,
    MaskWindow,
    Scale,
)
from .errors import ValidationError
from .io import read_graph, read_volume, write_graph, write_mask_field, write_volume
from .masks import FileMaskProvider, NoiseConfig, OracleMaskProvider, perturb
from .metrics import evaluation_report
from .partition import PartitionConfig, gasp_average, mutex_watershed, remove_small_segments
from .synth import generate_labels

DEFAULT_CONFIG: dict[str, Any] = {
    "gen": {"shape": [16, 16, 4], "instances": 4, "anisotropy": [10.0, 1.0, 1.0], "seed": 0},
    "input_volume": None,
    "masks": {
        "window": [7, 7, 5],
        "scales": [[1, 1, 1]],
        "empty_near_boundary": False,
        "noise": None,
        "codec": None,
    },
    "aggregate": {"method": "mask_aggregation", "neighborhood": "grid", "offsets": None, "direct_count": None},
    "segment": {
        "method": "mws",
        "long_range_fraction": 0.10,
        "subsample_seed": 0,
        "gasp_evidence_weighted": True,
    },
    "postprocess": {"min_segment_size": 200},
    "eval": True,
}


def merge_config(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge_config(out[key], value)
        else:
            out[key] = value
    return out


def resolve_config(config: dict | None) -> dict:
    cfg = merge_config(DEFAULT_CONFIG, config or {})
    unknown = set(cfg) - set(DEFAULT_CONFIG)
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(canon).hexdigest()


def file_hash(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def neighborhood_from_config(agg_cfg: dict) -> AffinityNeighborhood:
    offsets = agg_cfg.get("offsets")
    if offsets:
        direct = agg_cfg.get("direct_count")
        if direct is None:
            raise ValidationError("direct_count is required with explicit offsets")
        return AffinityNeighborhood(tuple(Coord3(*o) for o in offsets), int(direct))
    name = agg_cfg.get("neighborhood", "grid")
    if name not in NEIGHBORHOOD_PRESETS:
        raise ValidationError(f"unknown neighborhood preset {name!r}")
    return NEIGHBORHOOD_PRESETS[name]


def scales_from_config(masks_cfg: dict) -> list[Scale]:
    return [Scale(s[0], s[1], s[2]).validate() for s in masks_cfg["scales"]]


def window_from_config(masks_cfg: dict) -> MaskWindow:
    w = masks_cfg["window"]
    return MaskWindow(w[0], w[1], w[2]).validate()


def build_provider(labels: LabelVolume, masks_cfg: dict, codec_path: Path | None = None):
    """Provider chain oracle -> [perturb] -> [codec]; returns (provider, codec)."""
    window = window_from_config(masks_cfg)
    scales = scales_from_config(masks_cfg)
    provider = OracleMaskProvider(
        labels, window, scales=tuple(scales), empty_near_boundary=bool(masks_cfg["empty_near_boundary"])
    )
    noise_cfg = masks_cfg.get("noise")
    if noise_cfg:
        provider = perturb(
            provider,
            NoiseConfig(
                flip_sigma=float(noise_cfg.get("flip_sigma", 0.0)),
                smoothing_radius=int(noise_cfg.get("smoothing_radius", 0)),
                seed=int(noise_cfg.get("seed", 0)),
            ),
        )
    codec = None
    codec_cfg = masks_cfg.get("codec")
    if codec_cfg:
        if codec_path is not None:
            codec = read_codec(codec_path)
        else:
            codec = fit_oracle_codec(labels, masks_cfg)
        provider = codec_provider(provider, codec)
    return provider, codec


def fit_oracle_codec(labels: LabelVolume, masks_cfg: dict):
    """Fit the latent codec on seeded ground-truth mask samples (pre-noise)."""
    codec_cfg = masks_cfg["codec"]
    window = window_from_config(masks_cfg)
    scales = scales_from_config(masks_cfg)
    n_samples = int(codec_cfg.get("fit_samples", 1000))
    seed = int(codec_cfg.get("fit_seed", 0))
    base = OracleMaskProvider(
        labels, window, scales=tuple(scales), empty_near_boundary=bool(masks_cfg["empty_near_boundary"])
    )
    rng = np.random.default_rng(seed)
    x_ext, y_ext, z_ext = labels.shape_xyz
    sample = []
    for i in range(n_samples):
        c = Coord3(int(rng.integers(0, x_ext)), int(rng.integers(0, y_ext)), int(rng.integers(0, z_ext)))
        sample.append(base.mask(c, scales[i % len(scales)]).flat)
    return fit_codec(np.stack(sample), q=int(codec_cfg.get("q", 32)), seed=seed, window=window)


def _scale_tag(s: Scale) -> str:
    return f"{s.sx}x{s.sy}x{s.sz}"


def run_pipeline(config: dict | None, out_dir: str | Path, threads: int = 1) -> dict:
    """Execute the staged pipeline; returns the manifest (also written).

    On a stage failure the manifest still lands in the run directory with a
    machine-readable error record, and the stage's exception propagates.
    """
    cfg = resolve_config(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest: dict[str, Any] = {
        "config": cfg,
        "config_hash": config_hash(cfg),
        "threads": threads,
        "versions": {
            "maskseg": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
        "seeds": {
            "gen": cfg["gen"]["seed"],
            "noise": (cfg["masks"].get("noise") or {}).get("seed"),
            "codec_fit": (cfg["masks"].get("codec") or {}).get("fit_seed"),
            "subsample": cfg["segment"]["subsample_seed"],
        },
        "inputs": {},
        "stages": [],
    }

    def record(name: str, fn: Callable[[], dict[str, Path]]) -> None:
        start = time.monotonic()
        try:
            outputs = fn()
        except Exception as e:
            manifest["error"] = {
                "stage": name,
                "type": type(e).__name__,
                "message": str(e),
                "exit_code": getattr(e, "exit_code", 1),
            }
            _write_manifest(out, manifest)
            raise
        manifest["stages"].append(
            {
                "name": name,
                "seconds": round(time.monotonic() - start, 6),
                "outputs": {p.name: file_hash(p) for p in outputs.values()},
            }
        )

    state: dict[str, Any] = {}

    def stage_gen() -> dict[str, Path]:
        if cfg["input_volume"]:
            src = Path(cfg["input_volume"])
            labels = read_volume(src)
            manifest["inputs"][str(src)] = file_hash(src.with_suffix(".json"))
            manifest["inputs"][str(src.with_suffix(".raw"))] = file_hash(src.with_suffix(".raw"))
        else:
            g = cfg["gen"]
            labels = generate_labels(tuple(g["shape"]), int(g["instances"]), tuple(g["anisotropy"]), int(g["seed"]))
        state["labels"] = labels
        write_volume(labels, out / "volume")
        return {"json": out / "volume.json", "raw": out / "volume.raw"}

    def stage_masks() -> dict[str, Path]:
        provider, codec = build_provider(state["labels"], cfg["masks"])
        outputs: dict[str, Path] = {}
        if codec is not None:
            write_codec(codec, out / "codec")
            outputs["codec.json"] = out / "codec.codec.json"
            outputs["codec.raw"] = out / "codec.codec.raw"
        paths = []
        for s in scales_from_config(cfg["masks"]):
            field = provider.mask_field(s)
            p = write_mask_field(out / f"masks_{_scale_tag(s)}", field, provider.window, s)
            outputs[p.name] = p
            outputs[p.with_suffix(".raw").name] = p.with_suffix(".raw")
            paths.append(p)
        state["mask_paths"] = paths
        return outputs

    def stage_aggregate() -> dict[str, Path]:
        provider = FileMaskProvider(*state["mask_paths"])
        nb = neighborhood_from_config(cfg["aggregate"])
        method = cfg["aggregate"]["method"]
        if method == "mask_aggregation":
            graph = aggregate_affinities(provider, neighborhood=nb, threads=threads)
        elif method == "baseline":
            graph = baseline_affinities(provider, neighborhood=nb)
        else:
            raise ValidationError(f"unknown aggregation method {method!r}")
        state["graph_path"] = write_graph(graph, out / "affinities")
        return {"json": out / "affinities.graph.json", "raw": out / "affinities.graph.raw"}

    def stage_segment() -> dict[str, Path]:
        graph = read_graph(state["graph_path"])
        seg_cfg = cfg["segment"]
        pcfg = PartitionConfig(
            long_range_fraction=float(seg_cfg["long_range_fraction"]),
            subsample_seed=int(seg_cfg["subsample_seed"]),
            min_segment_size=int(cfg["postprocess"]["min_segment_size"]),
            gasp_evidence_weighted=bool(seg_cfg["gasp_evidence_weighted"]),
        )
        method = seg_cfg["method"]
        if method == "mws":
            seg = mutex_watershed(graph, pcfg)
        elif method == "gasp":
            seg = gasp_average(graph, pcfg)
        else:
            raise ValidationError(f"unknown segmentation method {method!r}")
        state["graph"] = graph
        state["seg"] = seg
        write_volume(seg, out / "segmentation")
        return {"json": out / "segmentation.json", "raw": out / "segmentation.raw"}

    def stage_postprocess() -> dict[str, Path]:
        seg = read_volume(out / "segmentation")
        min_size = int(cfg["postprocess"]["min_segment_size"])
        cleaned = remove_small_segments(seg, state["graph"], min_size)
        state["seg"] = cleaned
        write_volume(cleaned, out / "segmentation_final")
        return {"json": out / "segmentation_final.json", "raw": out / "segmentation_final.raw"}

    def stage_eval() -> dict[str, Path]:
        report = evaluation_report(state["seg"], state["labels"])
        manifest["metrics"] = report
        path = out / "metrics.json"
        path.write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
        return {"metrics": path}

    record("gen", stage_gen)
    record("masks", stage_masks)
    record("aggregate", stage_aggregate)
    record("segment", stage_segment)
    if int(cfg["postprocess"]["min_segment_size"]) > 0:
        record("postprocess", stage_postprocess)
    if cfg["eval"]:
        record("eval", stage_eval)

    _write_manifest(out, manifest)
    return manifest


def _write_manifest(out: Path, manifest: dict) -> None:
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def run_sweep(config: dict, out_dir: str | Path, threads: int = 1) -> Path:
    """Grid of pipeline runs over noise level x aggregation method x seed.

    Writes one run directory per cell plus ``sweep.csv`` with the scores.
    """
    base = config.get("base") or {}
    sweep = config.get("sweep") or {}
    sigmas = sweep.get("flip_sigma", [0.0])
    methods = sweep.get("method", ["mask_aggregation"])
    seeds = sweep.get("seeds", [0])
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    rows = []
    for sigma in sigmas:
        for method in methods:
            for seed in seeds:
                run_cfg = merge_config(
                    base,
                    {
                        "gen": {"seed": int(seed)},
                        "masks": {
                            "noise": {
                                "flip_sigma": float(sigma),
                                "seed": int(seed),
                                "smoothing_radius": int(
                                    ((base.get("masks") or {}).get("noise") or {}).get("smoothing_radius", 0)
                                ),
                            }
                        },
                        "aggregate": {"method": method},
                    },
                )
                run_dir = out / f"sigma{sigma}_{method}_seed{seed}"
                manifest = run_pipeline(run_cfg, run_dir, threads=threads)
                metrics = manifest["metrics"]
                rows.append(
                    {
                        "flip_sigma": sigma,
                        "method": method,
                        "seed": seed,
                        "cremi": metrics["cremi"],
                        "voi_split": metrics["voi_split"],
                        "voi_merge": metrics["voi_merge"],
                        "arand": metrics["arand"],
                    }
                )

    csv_path = out / "sweep.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["flip_sigma", "method", "seed", "cremi", "voi_split", "voi_merge", "arand"]
        )
        writer.writeheader()
        writer.writerows(rows)
    return csv_path
