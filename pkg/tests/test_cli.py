import json
from pathlib import Path

import numpy as np
import pytest

from glasseg.cli import main
from glasseg.data import decode_mask, save_gray_png, save_mask_png


def _write_pair(pred_dir, gt_dir, stem, pred, gt):
    save_gray_png(Path(pred_dir) / f"{stem}.png", pred)
    save_mask_png(Path(gt_dir) / f"{stem}.png", gt)


@pytest.fixture()
def perfect_dirs(tmp_path):
    pred, gt = tmp_path / "pred", tmp_path / "gt"
    m = np.zeros((8, 8))
    m[2:6, 2:6] = 1.0
    _write_pair(pred, gt, "s0", m, m)
    _write_pair(pred, gt, "s1", 1.0 - m, 1.0 - m)
    return pred, gt


class TestEval:
    def test_perfect_predictions_print_and_exit_zero(self, perfect_dirs, capsys):
        pred, gt = perfect_dirs
        code = main(["eval", "--pred", str(pred), "--gt", str(gt)])
        out = capsys.readouterr().out
        assert code == 0
        assert "IoU=1.000 MAE=0.000 BER=0.00" in out

    def test_json_output(self, perfect_dirs, capsys):
        pred, gt = perfect_dirs
        code = main(["eval", "--pred", str(pred), "--gt", str(gt), "--json"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["aggregates"]["iou"] == 1.0

    def test_no_matching_stems_exits_one(self, tmp_path, capsys):
        pred, gt = tmp_path / "p", tmp_path / "g"
        pred.mkdir()
        gt.mkdir()
        save_gray_png(pred / "a.png", np.zeros((4, 4)))
        save_mask_png(gt / "b.png", np.zeros((4, 4)))
        assert main(["eval", "--pred", str(pred), "--gt", str(gt)]) == 1


class TestUsageErrors:
    def test_unknown_flag_exits_two(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["eval", "--pred", "x", "--gt", "y", "--frobnicate"])
        assert excinfo.value.code == 2

    def test_unknown_subcommand_exits_two(self):
        with pytest.raises(SystemExit) as excinfo:
            main(["transmogrify"])
        assert excinfo.value.code == 2

    def test_unknown_config_key_exits_two(self, tmp_path):
        manifest = tmp_path / "m.jsonl"
        manifest.write_text("")
        with pytest.raises(SystemExit) as excinfo:
            main(["train", "--manifest", str(manifest), "--set", "warp_speed=9"])
        assert excinfo.value.code == 2

    def test_help_lists_subcommands(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["--help"])
        assert excinfo.value.code == 0
        out = capsys.readouterr().out
        for cmd in ("train", "eval", "predict", "gen-mistake-gt", "gen-edge-gt", "gen-synth", "decompose"):
            assert cmd in out


class TestGenerators:
    def test_gen_synth_writes_dataset(self, tmp_path, capsys):
        code = main(["gen-synth", "--n", "2", "--size", "32", "--seed", "3",
                     "--out", str(tmp_path / "ds")])
        assert code == 0
        assert (tmp_path / "ds" / "manifest.jsonl").exists()
        assert len(list((tmp_path / "ds" / "image").iterdir())) == 2

    def test_gen_edge_gt_batch(self, tmp_path):
        masks = tmp_path / "mask"
        m = np.zeros((16, 16))
        m[4:12, 4:12] = 1.0
        save_mask_png(masks / "a.png", m)
        save_mask_png(masks / "b.png", np.zeros((16, 16)))
        code = main(["gen-edge-gt", "--masks", str(masks), "--out", str(tmp_path / "edge")])
        assert code == 0
        edge_a = decode_mask(tmp_path / "edge" / "a.png")
        assert edge_a.sum() > 0
        assert decode_mask(tmp_path / "edge" / "b.png").sum() == 0

    def test_gen_mistake_gt_batch(self, tmp_path):
        pred, gt = tmp_path / "pred", tmp_path / "gt"
        g = np.zeros((8, 8))
        g[:4] = 1.0
        p = np.zeros((8, 8))
        p[2:6] = 1.0
        _write_pair(pred, gt, "x", p, g)
        code = main(["gen-mistake-gt", "--pred", str(pred), "--gt", str(gt),
                     "--out-fp", str(tmp_path / "fp"), "--out-fn", str(tmp_path / "fn")])
        assert code == 0
        fp = decode_mask(tmp_path / "fp" / "x.png")
        fn = decode_mask(tmp_path / "fn" / "x.png")
        assert fp.sum() == 16 and fn.sum() == 16
        assert not np.logical_and(fp, fn).any()

    def test_decompose_writes_four_maps(self, perfect_dirs, tmp_path):
        pred, gt = perfect_dirs
        code = main(["decompose", "--pred", str(pred), "--gt", str(gt),
                     "--out", str(tmp_path / "maps")])
        assert code == 0
        for kind in ("tp", "tn", "fp", "fn"):
            assert (tmp_path / "maps" / f"s0.{kind}.png").exists()


class TestTrainCli:
    def test_dry_run_validates_without_updates(self, tmp_path, capsys):
        assert main(["gen-synth", "--n", "2", "--size", "32", "--out", str(tmp_path / "ds")]) == 0
        code = main([
            "train", "--manifest", str(tmp_path / "ds" / "manifest.jsonl"),
            "--backbone", "tiny_random", "--max-iters", "5", "--batch-size", "1",
            "--input-size", "32", "--reduced-channels", "16",
            "--out", str(tmp_path / "run"), "--dry-run",
        ])
        assert code == 0
        assert not (tmp_path / "run" / "train_log.jsonl").exists()
        assert "dry run" in capsys.readouterr().out

    def test_config_file_with_cli_override(self, tmp_path, capsys):
        assert main(["gen-synth", "--n", "2", "--size", "32", "--out", str(tmp_path / "ds")]) == 0
        config = tmp_path / "run.cfg"
        config.write_text(
            "# desk-scale run\n"
            "backbone = tiny_random\n"
            "reduced_channels = 16\n"
            "max_iters = 2\n"
            "batch_size = 2\n"   # the 1x1 deepest level needs >1 value for BatchNorm
            "input_size = 32\n"
            "window = 7\n"
        )
        code = main([
            "train", "--manifest", str(tmp_path / "ds" / "manifest.jsonl"),
            "--config", str(config), "--set", "max_iters=1",
            "--out", str(tmp_path / "run"),
        ])
        assert code == 0
        log = (tmp_path / "run" / "train_log.jsonl").read_text().splitlines()
        assert len(log) == 1  # CLI --set overrode the config file
        assert (tmp_path / "run" / "ckpt_1.bin").exists()
        assert (tmp_path / "run" / "latest").read_text().strip() == "ckpt_1.bin"

    def test_bad_config_file_key_exits_two(self, tmp_path):
        manifest = tmp_path / "m.jsonl"
        manifest.write_text("")
        config = tmp_path / "bad.cfg"
        config.write_text("flux_capacitor = 1\n")
        with pytest.raises(SystemExit) as excinfo:
            main(["train", "--manifest", str(manifest), "--config", str(config)])
        assert excinfo.value.code == 2

    def test_runtime_error_exits_one(self, tmp_path, capsys):
        code = main(["train", "--manifest", str(tmp_path / "missing.jsonl"),
                     "--backbone", "tiny_random"])
        assert code == 1
        assert "error:" in capsys.readouterr().err


class TestPipeline:
    def test_train_predict_eval_roundtrip(self, tmp_path, capsys):
        ds = tmp_path / "ds"
        assert main(["gen-synth", "--n", "3", "--size", "32", "--seed", "2", "--out", str(ds)]) == 0
        assert main([
            "train", "--manifest", str(ds / "manifest.jsonl"), "--backbone", "tiny_random",
            "--reduced-channels", "16", "--max-iters", "2", "--batch-size", "2",
            "--input-size", "32", "--out", str(tmp_path / "run"),
        ]) == 0
        assert main([
            "predict", "--ckpt", str(tmp_path / "run"), "--images", str(ds / "image"),
            "--out", str(tmp_path / "pred"),
        ]) == 0
        assert len(list((tmp_path / "pred").iterdir())) == 3
        code = main(["eval", "--pred", str(tmp_path / "pred"), "--gt", str(ds / "mask"),
                     "--out", str(tmp_path / "report"), "--json"])
        assert code == 0
        out_lines = capsys.readouterr().out.strip().splitlines()
        report = json.loads(out_lines[-1])
        assert report["aggregates"]["n_images"] == 3
        assert (tmp_path / "report" / "metrics.csv").exists()
