import csv
import json

import numpy as np
import pytest

from maskseg.cli import main
from maskseg.io import read_mask_field, read_volume
from maskseg.pipeline import run_pipeline, run_sweep


def test_gen_masks_aggregate_segment_eval_chain(tmp_path):
    d = str(tmp_path)
    assert main(["gen", "--shape", "12", "12", "4", "--instances", "4", "--seed", "1", "-o", f"{d}/gt"]) == 0
    assert (
        main(
            ["masks", "export", "--volume", f"{d}/gt.json", "--window", "5", "5", "3",
             "--scale", "1", "1", "1", "-o", f"{d}/field"]
        )
        == 0
    )
    assert (
        main(["aggregate", "--field", f"{d}/field.json", "--neighborhood", "short", "-o", f"{d}/aff"]) == 0
    )
    assert main(["segment", "--graph", f"{d}/aff.graph.json", "--method", "mws", "-o", f"{d}/seg"]) == 0
    assert (
        main(["postprocess", "--seg", f"{d}/seg.json", "--graph", f"{d}/aff.graph.json",
              "--min-size", "5", "-o", f"{d}/final"])
        == 0
    )
    assert main(["eval", "--seg", f"{d}/final.json", "--gt", f"{d}/gt.json", "-o", f"{d}/m.json"]) == 0
    metrics = json.loads((tmp_path / "m.json").read_text())
    assert set(metrics) == {"voi_split", "voi_merge", "arand", "cremi"}
    assert metrics["cremi"] == 0.0


def test_codec_fit_and_apply(tmp_path):
    d = str(tmp_path)
    main(["gen", "--shape", "10", "10", "4", "--instances", "4", "--seed", "2", "-o", f"{d}/gt"])
    main(["masks", "export", "--volume", f"{d}/gt.json", "--window", "5", "5", "3",
          "--scale", "1", "1", "1", "-o", f"{d}/field"])
    assert (
        main(["codec", "fit", "--field", f"{d}/field.json", "--q", "8", "--samples", "200",
              "--seed", "0", "-o", f"{d}/c"])
        == 0
    )
    assert (
        main(["codec", "apply", "--field", f"{d}/field.json", "--codec", f"{d}/c.codec.json",
              "-o", f"{d}/recon"])
        == 0
    )
    recon, window, scale = read_mask_field(f"{d}/recon.json")
    original, _, _ = read_mask_field(f"{d}/field.json")
    assert recon.shape == original.shape
    assert 0.0 <= recon.min() and recon.max() <= 1.0
    # masks export through the fitted codec file
    assert (
        main(["masks", "export", "--volume", f"{d}/gt.json", "--window", "5", "5", "3",
              "--scale", "1", "1", "1", "--codec", f"{d}/c.codec.json", "-o", f"{d}/field2"])
        == 0
    )
    via_export, _, _ = read_mask_field(f"{d}/field2.json")
    assert np.allclose(via_export, recon, atol=1e-6)


def test_pipeline_smoke_manifest(tmp_path):
    config = {
        "gen": {"shape": [16, 16, 4], "instances": 4, "seed": 5},
        "masks": {"window": [5, 5, 3]},
        "aggregate": {"neighborhood": "short"},
        "postprocess": {"min_segment_size": 10},
    }
    manifest = run_pipeline(config, tmp_path / "run")
    assert manifest["metrics"]["cremi"] >= 0.0
    assert manifest["config_hash"]
    names = [s["name"] for s in manifest["stages"]]
    assert names == ["gen", "masks", "aggregate", "segment", "postprocess", "eval"]
    assert all("seconds" in s for s in manifest["stages"])
    on_disk = json.loads((tmp_path / "run" / "manifest.json").read_text())
    assert on_disk["metrics"] == manifest["metrics"]


def test_pipeline_rerun_metrics_bitwise(tmp_path):
    config = {
        "gen": {"shape": [14, 14, 4], "instances": 5, "seed": 7},
        "masks": {"window": [5, 5, 3], "noise": {"flip_sigma": 1.0, "seed": 7}},
        "aggregate": {"neighborhood": "short"},
        "postprocess": {"min_segment_size": 8},
    }
    run_pipeline(config, tmp_path / "a")
    run_pipeline(config, tmp_path / "b")
    assert (tmp_path / "a" / "metrics.json").read_bytes() == (tmp_path / "b" / "metrics.json").read_bytes()
    assert (tmp_path / "a" / "segmentation_final.raw").read_bytes() == (
        tmp_path / "b" / "segmentation_final.raw"
    ).read_bytes()


def test_sweep_produces_csv(tmp_path):
    config = {
        "base": {
            "gen": {"shape": [12, 12, 4], "instances": 4},
            "masks": {"window": [7, 7, 5], "empty_near_boundary": True},
            "aggregate": {"neighborhood": "short"},
            "postprocess": {"min_segment_size": 8},
        },
        "sweep": {"flip_sigma": [0.0, 0.5, 1.0], "method": ["mask_aggregation", "baseline"], "seeds": [0, 1]},
    }
    csv_path = run_sweep(config, tmp_path / "sweep")
    with csv_path.open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3 * 2 * 2
    assert {r["method"] for r in rows} == {"mask_aggregation", "baseline"}
    assert all(float(r["cremi"]) >= 0 for r in rows)


def test_set_overrides_take_precedence_over_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(
        json.dumps(
            {
                "gen": {"shape": [10, 10, 4], "instances": 3, "seed": 1},
                "masks": {"window": [5, 5, 3]},
                "aggregate": {"neighborhood": "short"},
                "postprocess": {"min_segment_size": 0},
            }
        )
    )
    assert (
        main(["pipeline", "--config", str(cfg), "--set", "gen.seed=9", "--set",
              "gen.instances=5", "-o", str(tmp_path / "run")])
        == 0
    )
    manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
    assert manifest["config"]["gen"]["seed"] == 9
    assert manifest["config"]["gen"]["instances"] == 5
    vol = read_volume(tmp_path / "run" / "volume.json")
    assert int(vol.data.max()) == 5
    assert main(["pipeline", "--config", str(cfg), "--set", "oops", "-o", str(tmp_path / "x")]) == 2


def test_exit_code_2_on_config_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"unknown_section": {}}))
    assert main(["pipeline", "--config", str(bad), "-o", str(tmp_path / "run")]) == 2
    # and a bad neighborhood preset
    main(["gen", "--shape", "8", "8", "2", "--instances", "2", "--seed", "0", "-o", str(tmp_path / "gt")])
    main(["masks", "export", "--volume", str(tmp_path / "gt.json"), "--window", "3", "3", "1",
          "--scale", "1", "1", "1", "-o", str(tmp_path / "f")])
    assert (
        main(["aggregate", "--field", str(tmp_path / "f.json"), "--neighborhood", "nope",
              "-o", str(tmp_path / "g")])
        == 2
    )


def test_exit_code_3_on_missing_input(tmp_path):
    assert main(["eval", "--seg", str(tmp_path / "none.json"), "--gt", str(tmp_path / "none.json")]) == 3


def test_exit_code_4_on_compute_error(tmp_path):
    d = str(tmp_path)
    main(["gen", "--shape", "6", "6", "2", "--instances", "6", "--seed", "0", "-o", f"{d}/gt"])
    main(["masks", "export", "--volume", f"{d}/gt.json", "--window", "3", "3", "1",
          "--scale", "1", "1", "1", "-o", f"{d}/f"])
    main(["aggregate", "--field", f"{d}/f.json", "--neighborhood", "short", "-o", f"{d}/a"])
    main(["segment", "--graph", f"{d}/a.graph.json", "-o", f"{d}/s"])
    # every segment below the threshold -> no seeds -> computation error
    assert (
        main(["postprocess", "--seg", f"{d}/s.json", "--graph", f"{d}/a.graph.json",
              "--min-size", "100", "-o", f"{d}/p"])
        == 4
    )


def test_failed_stage_recorded_in_manifest(tmp_path):
    config = {
        "gen": {"shape": [8, 8, 2], "instances": 8, "seed": 0},
        "masks": {"window": [3, 3, 1]},
        "aggregate": {"neighborhood": "short"},
        "postprocess": {"min_segment_size": 1000},
    }
    with pytest.raises(Exception):
        run_pipeline(config, tmp_path / "run")
    manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
    assert manifest["error"]["stage"] == "postprocess"
    assert manifest["error"]["exit_code"] == 4
    assert manifest["error"]["message"]
