"""Dataset ingestion: decoding, deterministic augmentation, and offline synthesis of
edge and FP/FN mistake ground truth.

Expected directory layout::

    <root>/image/<stem>.jpg|.png     RGB input
    <root>/mask/<stem>.png           single channel; glass encoded as pixel value >= 128
    <root>/edge/<stem>.png           optional cache, values {0, 255}
    <root>/fp/<model>/<stem>.png     optional mistake maps, one subdir per baseline model
    <root>/fn/<model>/<stem>.png

A manifest file holds one JSON record per line with the SampleRecord fields.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from scipy.ndimage import binary_dilation, binary_erosion

MASK_THRESHOLD = 128
IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")


class DecodeError(RuntimeError):
    """An image or mask file is missing or cannot be decoded."""


class AlignmentError(ValueError):
    """Image and mask (or auxiliary maps) disagree on spatial dimensions."""


@dataclass
class SampleRecord:
    image_path: str
    mask_path: str
    edge_path: str | None = None
    fp_paths: list = field(default_factory=list)
    fn_paths: list = field(default_factory=list)

    @property
    def stem(self) -> str:
        return Path(self.image_path).stem

    def to_json(self) -> str:
        return json.dumps({
            "image_path": self.image_path,
            "mask_path": self.mask_path,
            "edge_path": self.edge_path,
            "fp_paths": list(self.fp_paths),
            "fn_paths": list(self.fn_paths),
        })

    @classmethod
    def from_json(cls, line: str) -> "SampleRecord":
        d = json.loads(line)
        return cls(
            image_path=d["image_path"],
            mask_path=d["mask_path"],
            edge_path=d.get("edge_path"),
            fp_paths=list(d.get("fp_paths", [])),
            fn_paths=list(d.get("fn_paths", [])),
        )


@dataclass
class AugmentationConfig:
    """Geometric and photometric augmentation parameters.

    Defaults are the identity transform plus a resize to ``target_size``; the
    training preset enables flip, color jitter, and random crop.
    """

    horizontal_flip_prob: float = 0.0
    color_jitter: tuple = (0.0, 0.0, 0.0, 0.0)  # brightness, contrast, saturation, hue
    crop_scale_range: tuple = (1.0, 1.0)
    target_size: tuple = (416, 416)

    def __post_init__(self):
        if not 0.0 <= self.horizontal_flip_prob <= 1.0:
            raise ValueError(f"flip probability must be in [0,1], got {self.horizontal_flip_prob}")
        lo, hi = self.crop_scale_range
        if not (0.0 < lo <= hi <= 1.0):
            raise ValueError(f"crop_scale_range must be within (0,1], got {self.crop_scale_range}")
        if any(d < 0 for d in self.color_jitter):
            raise ValueError("color jitter deltas must be non-negative")

    @classmethod
    def training_default(cls, target_size=(416, 416)) -> "AugmentationConfig":
        return cls(
            horizontal_flip_prob=0.5,
            color_jitter=(0.1, 0.1, 0.1, 0.1),
            crop_scale_range=(0.5, 1.0),
            target_size=target_size,
        )


def decode_image(path) -> np.ndarray:
    """Decode an RGB image to float32 HxWx3 in [0,1]."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    except (OSError, ValueError) as exc:
        raise DecodeError(f"cannot decode image {path}: {exc}") from exc
    return arr


def decode_mask(path) -> np.ndarray:
    """Decode a single-channel mask to float32 HxW in {0,1} (glass where >= 128)."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("L"))
    except (OSError, ValueError) as exc:
        raise DecodeError(f"cannot decode mask {path}: {exc}") from exc
    return (arr >= MASK_THRESHOLD).astype(np.float32)


def save_mask_png(path, mask) -> None:
    """Write a {0,1} map as a {0,255} single-channel PNG."""
    arr = (np.asarray(mask) > 0.5).astype(np.uint8) * 255
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr, mode="L").save(path)


def save_gray_png(path, values) -> None:
    """Write a [0,1] soft map as an 8-bit grayscale PNG."""
    arr = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.round(arr * 255.0).astype(np.uint8), mode="L").save(path)


def _rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    v = maxc
    span = maxc - minc
    s = np.where(maxc > 0, span / np.maximum(maxc, 1e-12), 0.0)
    safe = np.maximum(span, 1e-12)
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    h = np.where(maxc == r, bc - gc, np.where(maxc == g, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(span == 0, 0.0, (h / 6.0) % 1.0)
    return np.stack([h, s, v], axis=-1)


def _hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(np.int64) % 6
    choices = [
        np.stack([v, t, p], -1), np.stack([q, v, p], -1), np.stack([p, v, t], -1),
        np.stack([p, q, v], -1), np.stack([t, p, v], -1), np.stack([v, p, q], -1),
    ]
    out = np.zeros(hsv.shape, dtype=hsv.dtype)
    for k, c in enumerate(choices):
        out[i == k] = c[i == k]
    return out


def _color_jitter(image: np.ndarray, deltas, rng: np.random.Generator) -> np.ndarray:
    """Brightness/contrast/saturation/hue jitter; draws are taken even for zero deltas
    so the random stream does not depend on the configuration."""
    b, c, s, h = deltas
    fb = rng.uniform(max(0.0, 1.0 - b), 1.0 + b)
    fc = rng.uniform(max(0.0, 1.0 - c), 1.0 + c)
    fs = rng.uniform(max(0.0, 1.0 - s), 1.0 + s)
    fh = rng.uniform(-h, h)
    if b > 0:
        image = image * fb
    if c > 0:
        mean = image.mean()
        image = (image - mean) * fc + mean
    if s > 0:
        gray = image @ np.array([0.299, 0.587, 0.114], dtype=image.dtype)
        image = (image - gray[..., None]) * fs + gray[..., None]
    if h > 0:
        hsv = _rgb_to_hsv(np.clip(image, 0.0, 1.0))
        hsv[..., 0] = (hsv[..., 0] + fh) % 1.0
        image = _hsv_to_rgb(hsv)
    return np.clip(image, 0.0, 1.0)


def _resize(arr: np.ndarray, size, nearest: bool) -> np.ndarray:
    h, w = size
    if arr.shape[:2] == (h, w):
        return arr
    mode = Image.NEAREST if nearest else Image.BILINEAR
    if arr.ndim == 2:
        im = Image.fromarray(arr.astype(np.float32), mode="F")
        return np.asarray(im.resize((w, h), mode), dtype=np.float32)
    chans = [Image.fromarray(arr[..., k].astype(np.float32), mode="F") for k in range(arr.shape[-1])]
    return np.stack([np.asarray(c.resize((w, h), mode), dtype=np.float32) for c in chans], axis=-1)


def load_sample(record: SampleRecord, augment: AugmentationConfig, rng_seed: int):
    """Load one sample and apply a deterministic augmentation.

    The same geometric transform (crop, resize, flip) is applied to the image,
    mask, edge, and every FP/FN map; color jitter touches the image only. Masks
    are binarized to {0,1} after nearest-neighbor resizing. When no edge cache
    exists the edge map is derived from the transformed mask.

    Returns (image 3xHxW, mask 1xHxW, edge 1xHxW, [fp 1xHxW...], [fn 1xHxW...])
    as float32 tensors at ``augment.target_size``.
    """
    rng = np.random.default_rng(rng_seed)
    image = decode_image(record.image_path)
    mask = decode_mask(record.mask_path)
    if image.shape[:2] != mask.shape:
        raise AlignmentError(
            f"image {record.image_path} is {image.shape[:2]} but mask {record.mask_path} is {mask.shape}"
        )
    aux = []
    if record.edge_path is not None:
        aux.append(decode_mask(record.edge_path))
    fp_maps = [decode_mask(p) for p in record.fp_paths]
    fn_maps = [decode_mask(p) for p in record.fn_paths]
    for m, src in zip(fp_maps + fn_maps + aux, list(record.fp_paths) + list(record.fn_paths) + [record.edge_path]):
        if m.shape != mask.shape:
            raise AlignmentError(f"auxiliary map {src} is {m.shape}, expected {mask.shape}")

    maps = [mask] + fp_maps + fn_maps + aux

    # crop: area fraction drawn from crop_scale_range, aspect preserved
    h, w = mask.shape
    scale = rng.uniform(*augment.crop_scale_range)
    side = float(np.sqrt(scale))
    ch = max(1, int(round(h * side)))
    cw = max(1, int(round(w * side)))
    top = int(rng.integers(0, h - ch + 1))
    left = int(rng.integers(0, w - cw + 1))
    image = image[top:top + ch, left:left + cw]
    maps = [m[top:top + ch, left:left + cw] for m in maps]

    image = _resize(image, augment.target_size, nearest=False)
    maps = [_resize(m, augment.target_size, nearest=True) for m in maps]

    if rng.uniform() < augment.horizontal_flip_prob:
        image = image[:, ::-1]
        maps = [m[:, ::-1] for m in maps]

    image = _color_jitter(image, augment.color_jitter, rng)

    maps = [(m >= 0.5).astype(np.float32) for m in maps]
    mask = maps[0]
    nfp = len(fp_maps)
    fp_maps = maps[1:1 + nfp]
    fn_maps = maps[1 + nfp:1 + nfp + len(fn_maps)]
    if record.edge_path is not None:
        edge = maps[-1]
    else:
        edge = generate_edge_gt(mask)

    def as_map(m):
        return torch.from_numpy(np.ascontiguousarray(m, dtype=np.float32)).unsqueeze(0)

    image_t = torch.from_numpy(np.ascontiguousarray(image.transpose(2, 0, 1), dtype=np.float32))
    return image_t, as_map(mask), as_map(edge), [as_map(m) for m in fp_maps], [as_map(m) for m in fn_maps]


def generate_edge_gt(mask, band_radius: int = 2) -> np.ndarray:
    """Boundary band: 1 at pixels within Chebyshev distance ``band_radius`` of the
    glass/non-glass boundary, computed as square dilation XOR erosion. Constant
    masks produce an all-zero map.
    """
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"expected a 2-D mask, got shape {mask.shape}")
    if not np.isin(mask, (0, 1)).all():
        raise ValueError("edge extraction requires a binary mask")
    if band_radius < 1:
        raise ValueError(f"band_radius must be >= 1, got {band_radius}")
    m = mask.astype(bool)
    structure = np.ones((2 * band_radius + 1,) * 2, dtype=bool)
    # erosion with border_value=1: pixels outside the image never count as
    # non-glass, so a full-frame mask yields no edge
    dil = binary_dilation(m, structure=structure, border_value=0)
    ero = binary_erosion(m, structure=structure, border_value=1)
    return np.logical_xor(dil, ero).astype(np.float32)


def generate_mistake_gt(prediction, gt, binarize_threshold: float = 0.5):
    """Split the disagreement between a baseline prediction and the ground truth
    into false-positive and false-negative maps.

    The prediction is binarized at ``binarize_threshold``; the signed difference
    against the ground truth marks FP where positive and FN where negative.
    """
    prediction = np.asarray(prediction)
    gt = np.asarray(gt)
    if prediction.shape != gt.shape:
        raise ValueError(f"shape mismatch: prediction {prediction.shape} vs gt {gt.shape}")
    if prediction.min() < 0 or prediction.max() > 1:
        raise ValueError("prediction values must lie in [0,1]")
    if not np.isin(gt, (0, 1)).all():
        raise ValueError("ground truth must be binary")
    p = (prediction >= binarize_threshold).astype(np.int8)
    mistake = p - gt.astype(np.int8)
    fp = (mistake > 0).astype(np.float32)
    fn = (mistake < 0).astype(np.float32)
    return fp, fn


def build_records(root) -> list:
    """Discover samples under the standard directory layout."""
    root = Path(root)
    image_dir = root / "image"
    records = []
    model_names = sorted(p.name for p in (root / "fp").iterdir() if p.is_dir()) if (root / "fp").is_dir() else []
    for image_path in sorted(p for p in image_dir.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS):
        stem = image_path.stem
        mask_path = root / "mask" / f"{stem}.png"
        if not mask_path.exists():
            continue
        edge_path = root / "edge" / f"{stem}.png"
        fp_paths, fn_paths = [], []
        for model in model_names:
            fp, fn = root / "fp" / model / f"{stem}.png", root / "fn" / model / f"{stem}.png"
            if fp.exists() and fn.exists():
                fp_paths.append(str(fp))
                fn_paths.append(str(fn))
        records.append(SampleRecord(
            image_path=str(image_path),
            mask_path=str(mask_path),
            edge_path=str(edge_path) if edge_path.exists() else None,
            fp_paths=fp_paths,
            fn_paths=fn_paths,
        ))
    return records


def write_manifest(records, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def read_manifest(path) -> list:
    with open(path) as fh:
        return [SampleRecord.from_json(line) for line in fh if line.strip()]
