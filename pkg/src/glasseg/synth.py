"""Procedural glass scenes: textured backgrounds with an alpha-brightened pane
behind a dark frame, plus constructive masks and edge maps. Enables CPU-scale
training and end-to-end tests without real datasets."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .data import SampleRecord, generate_edge_gt, write_manifest

TEXTURES = ("noise", "gradients", "shapes")

BG_LOW, BG_HIGH = 0.08, 0.34
FRAME_VALUE = 0.02
STREAK_AMPLITUDE = 0.05


@dataclass
class SynthConfig:
    n_images: int = 16
    size: tuple = (64, 64)
    glass_alpha_range: tuple = (0.25, 0.45)
    frame_width_px: int = 2
    background_texture: str = "shapes"
    seed: int = 0
    edge_band_radius: int = 2

    def __post_init__(self):
        lo, hi = self.glass_alpha_range
        if not (0.05 <= lo <= hi <= 0.6):
            raise ValueError(f"alpha range must lie within [0.05, 0.6], got {self.glass_alpha_range}")
        if self.frame_width_px < 1:
            raise ValueError("frame width must be >= 1 pixel")
        if self.background_texture not in TEXTURES:
            raise ValueError(f"unknown texture {self.background_texture!r}; expected one of {TEXTURES}")


def _background(h, w, texture, rng) -> np.ndarray:
    if texture == "noise":
        coarse = rng.uniform(0.0, 1.0, size=(max(h // 8, 2), max(w // 8, 2)))
        ys = np.linspace(0, coarse.shape[0] - 1, h)
        xs = np.linspace(0, coarse.shape[1] - 1, w)
        y0 = np.floor(ys).astype(int)
        x0 = np.floor(xs).astype(int)
        y1 = np.minimum(y0 + 1, coarse.shape[0] - 1)
        x1 = np.minimum(x0 + 1, coarse.shape[1] - 1)
        fy = (ys - y0)[:, None]
        fx = (xs - x0)[None, :]
        base = (coarse[np.ix_(y0, x0)] * (1 - fy) * (1 - fx) + coarse[np.ix_(y0, x1)] * (1 - fy) * fx
                + coarse[np.ix_(y1, x0)] * fy * (1 - fx) + coarse[np.ix_(y1, x1)] * fy * fx)
    elif texture == "gradients":
        theta = rng.uniform(0, 2 * np.pi)
        yy, xx = np.mgrid[0:h, 0:w]
        base = (np.cos(theta) * xx + np.sin(theta) * yy).astype(np.float64)
        base = (base - base.min()) / max(base.max() - base.min(), 1e-9)
    else:  # shapes: gradient plus a few darker/lighter rectangles and disks
        theta = rng.uniform(0, 2 * np.pi)
        yy, xx = np.mgrid[0:h, 0:w]
        base = (np.cos(theta) * xx + np.sin(theta) * yy).astype(np.float64)
        base = (base - base.min()) / max(base.max() - base.min(), 1e-9)
        for _ in range(int(rng.integers(2, 6))):
            v = rng.uniform(0.0, 1.0)
            if rng.uniform() < 0.5:
                r0, c0 = rng.integers(0, h), rng.integers(0, w)
                r1 = min(h, r0 + int(rng.integers(4, max(h // 2, 5))))
                c1 = min(w, c0 + int(rng.integers(4, max(w // 2, 5))))
                base[r0:r1, c0:c1] = v
            else:
                cy, cx = rng.integers(0, h), rng.integers(0, w)
                rad = int(rng.integers(3, max(min(h, w) // 4, 4)))
                disk = (yy - cy) ** 2 + (xx - cx) ** 2 <= rad ** 2
                base[disk] = v
    gray = BG_LOW + base * (BG_HIGH - BG_LOW)
    tint = rng.uniform(0.9, 1.0, size=3)
    return gray[:, :, None] * tint[None, None, :]


def _pane_geometry(h, w, frame, rng):
    """Pick a pane so the interior mask covers 12-55% of the image."""
    for _ in range(64):
        frac = rng.uniform(0.15, 0.55)
        aspect = rng.uniform(0.75, 1.33)
        ih = int(round(np.sqrt(frac * h * w * aspect)))
        iw = int(round(frac * h * w / max(ih, 1)))
        ih = min(ih, h - 2 * frame - 2)
        iw = min(iw, w - 2 * frame - 2)
        if ih < 4 or iw < 4:
            continue
        # corner cuts can shave up to ~12.5% of the rectangle, so keep headroom
        if not 0.12 <= (ih * iw) / (h * w) <= 0.58:
            continue
        top = int(rng.integers(frame + 1, h - ih - frame))
        left = int(rng.integers(frame + 1, w - iw - frame))
        return top, left, ih, iw
    raise RuntimeError(f"could not place a pane on a {h}x{w} canvas with frame width {frame}")


def _interior_mask(h, w, top, left, ih, iw, rng) -> np.ndarray:
    mask = np.zeros((h, w), dtype=bool)
    mask[top:top + ih, left:left + iw] = True
    if rng.uniform() < 0.3:
        # convex-ish pane: shave small corner triangles (at most ~12% of area)
        yy, xx = np.mgrid[0:h, 0:w]
        cut_h = int(rng.integers(0, max(ih // 4, 1) + 1))
        cut_w = int(rng.integers(0, max(iw // 4, 1) + 1))
        if cut_h and cut_w:
            corners = [
                (yy - top) / cut_h + (xx - left) / cut_w < 1,
                (yy - top) / cut_h + (left + iw - 1 - xx) / cut_w < 1,
                (top + ih - 1 - yy) / cut_h + (xx - left) / cut_w < 1,
                (top + ih - 1 - yy) / cut_h + (left + iw - 1 - xx) / cut_w < 1,
            ]
            mask &= ~(corners[0] | corners[1] | corners[2] | corners[3])
    return mask


def build_scene(config: SynthConfig, seed_sequence) -> dict:
    """Compose one scene in float64; returns the pristine background, final
    image, mask, and the drawn alpha so constructive invariants are checkable
    before 8-bit quantization."""
    rng = np.random.default_rng(seed_sequence)
    h, w = config.size
    frame = config.frame_width_px
    background = _background(h, w, config.background_texture, rng)

    top, left, ih, iw = _pane_geometry(h, w, frame, rng)
    mask = _interior_mask(h, w, top, left, ih, iw, rng)
    frame_ring = np.zeros((h, w), dtype=bool)
    frame_ring[top - frame:top + ih + frame, left - frame:left + iw + frame] = True
    frame_ring &= ~mask

    alpha = float(rng.uniform(*config.glass_alpha_range))
    image = background.copy()

    # specular streak, zero-meaned over the pane so the mean shift stays exactly alpha
    yy, xx = np.mgrid[0:h, 0:w]
    theta = rng.uniform(0, np.pi)
    offset = rng.uniform(-0.5, 0.5) * min(h, w)
    dist = (xx - w / 2) * np.cos(theta) + (yy - h / 2) * np.sin(theta) - offset
    streak = STREAK_AMPLITUDE * np.exp(-(dist / max(min(h, w) / 10.0, 1.0)) ** 2)
    streak = np.where(mask, streak, 0.0)
    n_mask = int(mask.sum())
    streak[mask] -= streak[mask].sum() / n_mask

    image[mask] += alpha + streak[mask][:, None]
    image[frame_ring] = FRAME_VALUE
    if image.min() < 0.0 or image.max() > 1.0:
        raise RuntimeError("scene composition left the [0,1] range")
    return {"image": image, "mask": mask, "background": background, "alpha": alpha}


def generate(config: SynthConfig, out_root) -> Path:
    """Write n_images scenes (image/mask/edge triplets) plus a manifest; fully
    deterministic per seed."""
    out_root = Path(out_root)
    for sub in ("image", "mask", "edge"):
        (out_root / sub).mkdir(parents=True, exist_ok=True)
    records = []
    for i in range(config.n_images):
        scene = build_scene(config, np.random.SeedSequence([config.seed, i]))
        stem = f"{i:04d}"
        image_path = out_root / "image" / f"{stem}.png"
        mask_path = out_root / "mask" / f"{stem}.png"
        edge_path = out_root / "edge" / f"{stem}.png"
        Image.fromarray(np.round(scene["image"] * 255.0).astype(np.uint8), mode="RGB").save(image_path)
        mask = scene["mask"].astype(np.float32)
        Image.fromarray((scene["mask"] * 255).astype(np.uint8), mode="L").save(mask_path)
        edge = generate_edge_gt(mask, config.edge_band_radius)
        Image.fromarray((edge * 255).astype(np.uint8), mode="L").save(edge_path)
        records.append(SampleRecord(
            image_path=str(image_path), mask_path=str(mask_path), edge_path=str(edge_path),
        ))
    manifest = out_root / "manifest.jsonl"
    write_manifest(records, manifest)
    return manifest
