import hashlib
from pathlib import Path

import numpy as np
import pytest

from glasseg.data import decode_mask, read_manifest
from glasseg.synth import SynthConfig, build_scene, generate


def _tree_digest(root):
    # manifest holds absolute paths, so hash only the pixel payloads
    digest = hashlib.sha256()
    for path in sorted(Path(root).rglob("*.png")):
        digest.update(path.relative_to(root).as_posix().encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()


class TestGenerate:
    def test_zero_images_gives_empty_manifest(self, tmp_path):
        manifest = generate(SynthConfig(n_images=0), tmp_path / "ds")
        assert read_manifest(manifest) == []

    def test_same_seed_is_byte_identical(self, tmp_path):
        generate(SynthConfig(n_images=3, size=(32, 32), seed=5), tmp_path / "a")
        generate(SynthConfig(n_images=3, size=(32, 32), seed=5), tmp_path / "b")
        assert _tree_digest(tmp_path / "a") == _tree_digest(tmp_path / "b")

    def test_16_images_triplets_and_mask_fraction(self, tmp_path):
        config = SynthConfig(n_images=16, size=(64, 64), seed=7)
        manifest = generate(config, tmp_path / "ds")
        records = read_manifest(manifest)
        assert len(records) == 16
        for rec in records:
            assert Path(rec.image_path).exists()
            assert Path(rec.mask_path).exists()
            assert Path(rec.edge_path).exists()
            mask = decode_mask(rec.mask_path)
            fraction = mask.mean()
            assert 0.1 <= fraction <= 0.6, rec.mask_path

    def test_different_seeds_differ(self, tmp_path):
        generate(SynthConfig(n_images=2, size=(32, 32), seed=1), tmp_path / "a")
        generate(SynthConfig(n_images=2, size=(32, 32), seed=2), tmp_path / "b")
        assert _tree_digest(tmp_path / "a") != _tree_digest(tmp_path / "b")


class TestSceneConstruction:
    def test_mask_matches_blended_region(self):
        config = SynthConfig(size=(64, 64))
        for i in range(5):
            scene = build_scene(config, np.random.SeedSequence([3, i]))
            changed = np.any(scene["image"] != scene["background"], axis=-1)
            assert np.array_equal(changed & scene["mask"], scene["mask"])
            # outside pane+frame nothing was touched
            frame_and_pane = changed & ~scene["mask"]
            image = scene["image"]
            assert np.all(image[frame_and_pane] == 0.02)

    def test_mean_brightness_shift_is_alpha(self):
        config = SynthConfig(size=(64, 64))
        for i in range(5):
            scene = build_scene(config, np.random.SeedSequence([4, i]))
            m = scene["mask"]
            shift = scene["image"][m].mean() - scene["background"][m].mean()
            assert abs(shift - scene["alpha"]) < 1e-6

    def test_values_stay_in_unit_range(self):
        config = SynthConfig(size=(48, 48), glass_alpha_range=(0.05, 0.6))
        for i in range(8):
            scene = build_scene(config, np.random.SeedSequence([5, i]))
            assert scene["image"].min() >= 0.0 and scene["image"].max() <= 1.0

    def test_texture_families(self, tmp_path):
        for texture in ("noise", "gradients", "shapes"):
            config = SynthConfig(n_images=1, size=(32, 32), background_texture=texture, seed=9)
            generate(config, tmp_path / texture)

    def test_invalid_config_rejected(self):
        with pytest.raises(ValueError):
            SynthConfig(glass_alpha_range=(0.01, 0.3))
        with pytest.raises(ValueError):
            SynthConfig(frame_width_px=0)
        with pytest.raises(ValueError):
            SynthConfig(background_texture="plasma")
