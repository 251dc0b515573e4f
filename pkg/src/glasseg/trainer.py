"""Optimization loop: SGD with momentum and polynomial learning-rate decay,
JSONL loss logging, deterministic checkpointing + resume, and inference."""

import hashlib
import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .backbone import BackboneConfig
from .blocks import bilinear_resample
from .data import (AugmentationConfig, DecodeError, decode_image, load_sample,
                   read_manifest, save_gray_png)
from .losses import LossWeights, SupervisionTargets, total_loss
from .model import GlassSegmentationModel


@dataclass
class TrainConfig:
    lr0: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 5e-4
    poly_power: float = 0.9
    batch_size: int = 12
    grad_accum: int = 1
    max_iters: int = 1000
    seed: int = 0
    input_size: tuple = (416, 416)
    checkpoint_every: int = 200
    out_dir: str = "runs/default"
    augment: bool = False
    num_threads: int = 1  # >1 is faster but loses bit-reproducibility under load
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    reverse_mode: str = "sigmoid_complement"
    enhance_self: bool = False

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ValueError(f"lr0 must be > 0, got {self.lr0}")
        if not 0 < self.poly_power <= 1:
            raise ValueError(f"poly_power must be in (0,1], got {self.poly_power}")
        if self.batch_size < 1 or self.max_iters < 0 or self.grad_accum < 1 or self.num_threads < 1:
            raise ValueError("batch_size/grad_accum/num_threads must be >= 1 and max_iters >= 0")
        if self.input_size[0] % 32 or self.input_size[1] % 32:
            raise ValueError(f"input_size must be divisible by 32, got {self.input_size}")

    def config_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def poly_lr(iteration: int, config: TrainConfig) -> float:
    """lr0 * (1 - iteration/max_iters)**poly_power, clamped to 0 past the end."""
    if iteration < 0:
        raise ValueError(f"iteration must be >= 0, got {iteration}")
    if config.max_iters == 0:
        return config.lr0
    if iteration > config.max_iters:
        warnings.warn(f"iteration {iteration} beyond max_iters {config.max_iters}; lr clamped to 0")
        return 0.0
    return config.lr0 * (1.0 - iteration / config.max_iters) ** config.poly_power


def _build_model(config: TrainConfig) -> GlassSegmentationModel:
    return GlassSegmentationModel(
        config.backbone, reverse_mode=config.reverse_mode, enhance_self=config.enhance_self,
    )


def _param_groups(model, weight_decay):
    # normalization parameters are excluded from weight decay
    norm_ids = set()
    for module in model.modules():
        if isinstance(module, torch.nn.modules.batchnorm._BatchNorm):
            norm_ids.update(id(p) for p in module.parameters(recurse=False))
    decay = [p for p in model.parameters() if id(p) not in norm_ids]
    no_decay = [p for p in model.parameters() if id(p) in norm_ids]
    return [
        {"params": decay, "weight_decay": weight_decay},
        {"params": no_decay, "weight_decay": 0.0},
    ]


def _augmentation(config: TrainConfig) -> AugmentationConfig:
    if config.augment:
        return AugmentationConfig.training_default(config.input_size)
    return AugmentationConfig(target_size=config.input_size)


def _sample_seed(config_seed: int, iteration: int, index: int) -> int:
    return int(np.random.SeedSequence([config_seed, iteration, index]).generate_state(1)[0])


class Checkpoint:
    """Serialized training state; round-trips to bit-identical forward passes."""

    def __init__(self, payload: dict):
        self.payload = payload

    @property
    def iteration(self) -> int:
        return self.payload["iteration"]

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(self.payload, path)
        marker = path.parent / "latest"
        marker.write_text(path.name + "\n")
        return path

    @classmethod
    def load(cls, path) -> "Checkpoint":
        path = Path(path)
        if path.is_dir():
            name = (path / "latest").read_text().strip()
            path = path / name
        return cls(torch.load(path, map_location="cpu", weights_only=False))

    def build_model(self) -> GlassSegmentationModel:
        config = config_from_dict(self.payload["config"])
        model = _build_model(config)
        model.load_state_dict(self.payload["model"])
        return model


def config_from_dict(d: dict) -> TrainConfig:
    d = dict(d)
    d["backbone"] = BackboneConfig(**d["backbone"])
    loss = dict(d["loss"])
    loss["lambda_per_scale"] = tuple(loss["lambda_per_scale"])
    d["loss"] = LossWeights(**loss)
    d["input_size"] = tuple(d["input_size"])
    return TrainConfig(**d)


def _batch_targets(samples) -> SupervisionTargets:
    masks = torch.stack([s[1] for s in samples])
    edges = torch.stack([s[2] for s in samples])
    n_pairs = {len(s[3]) for s in samples}
    if len(n_pairs) != 1:
        raise ValueError("all samples in a batch must carry the same number of FP/FN map pairs")
    k = n_pairs.pop()
    fp = [torch.stack([s[3][j] for s in samples]) for j in range(k)]
    fn = [torch.stack([s[4][j] for s in samples]) for j in range(k)]
    return SupervisionTargets(glass=masks, edge=edges, fp=fp, fn=fn)


def train(config: TrainConfig, manifest, resume_from=None, dry_run: bool = False) -> Checkpoint:
    """Run the optimization loop and return the final checkpoint.

    Fully deterministic for a fixed config and seed: data order, augmentation,
    and parameter updates all derive from the config seed. Every step appends
    one JSON record (iteration, lr, loss breakdown) to out_dir/train_log.jsonl.
    A non-finite loss aborts with the offending batch stems.
    """
    records = read_manifest(manifest)
    if not records:
        raise ValueError(f"manifest {manifest} lists no samples")
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    torch.set_num_threads(config.num_threads)
    torch.manual_seed(config.seed)
    model = _build_model(config)
    optimizer = torch.optim.SGD(
        _param_groups(model, config.weight_decay),
        lr=config.lr0, momentum=config.momentum,
    )
    rng = np.random.default_rng(config.seed)
    start_iter = 0
    order: list = []
    cursor = 0

    if resume_from is not None:
        state = Checkpoint.load(resume_from).payload
        model.load_state_dict(state["model"])
        optimizer.load_state_dict(state["optimizer"])
        torch.set_rng_state(state["torch_rng"])
        rng.bit_generator.state = state["numpy_rng"]
        start_iter = state["iteration"]
        order = list(state["order"])
        cursor = state["cursor"]

    augment = _augmentation(config)

    def snapshot(iteration):
        return Checkpoint({
            "model": model.state_dict(),
            "optimizer": optimizer.state_dict(),
            "iteration": iteration,
            "torch_rng": torch.get_rng_state(),
            "numpy_rng": rng.bit_generator.state,
            "order": list(order),
            "cursor": cursor,
            "config": asdict(config),
            "config_hash": config.config_hash(),
        })

    if dry_run:
        # validate the data path and one forward pass without touching weights
        sample = load_sample(records[0], augment, _sample_seed(config.seed, 0, 0))
        model.eval()
        with torch.no_grad():
            model(sample[0].unsqueeze(0))
        return snapshot(start_iter)

    log_path = out_dir / "train_log.jsonl"
    log_mode = "a" if resume_from is not None else "w"
    micro = max(config.batch_size // config.grad_accum, 1)

    with open(log_path, log_mode) as log:
        model.train()
        for iteration in range(start_iter, config.max_iters):
            lr = poly_lr(iteration, config)
            for group in optimizer.param_groups:
                group["lr"] = lr

            batch_idx = []
            while len(batch_idx) < config.batch_size:
                if cursor >= len(order):
                    order = list(rng.permutation(len(records)))
                    cursor = 0
                batch_idx.append(order[cursor])
                cursor += 1

            samples = [
                load_sample(records[i], augment, _sample_seed(config.seed, iteration, i))
                for i in batch_idx
            ]
            stems = [records[i].stem for i in batch_idx]

            optimizer.zero_grad()
            logged = None
            for lo in range(0, len(samples), micro):
                chunk = samples[lo:lo + micro]
                images = torch.stack([s[0] for s in chunk])
                targets = _batch_targets(chunk)
                out = model(images)
                loss, breakdown = total_loss(out.levels, out.edge_pred, targets, config.loss)
                if not torch.isfinite(loss):
                    raise RuntimeError(
                        f"non-finite loss at iteration {iteration}; batch stems: {stems}"
                    )
                frac = len(chunk) / len(samples)
                (loss * frac).backward()
                part = {k: np.multiply(v, frac) for k, v in breakdown.to_dict().items()}
                if logged is None:
                    logged = part
                else:
                    logged = {k: np.add(logged[k], part[k]) for k in logged}
            optimizer.step()

            logged = {k: v.tolist() if isinstance(v, np.ndarray) else float(v) for k, v in logged.items()}
            record = {"iter": iteration, "lr": lr, **logged}
            log.write(json.dumps(record) + "\n")
            log.flush()

            done = iteration + 1
            if config.checkpoint_every and done % config.checkpoint_every == 0 and done < config.max_iters:
                snapshot(done).save(out_dir / f"ckpt_{done}.bin")

    final = snapshot(config.max_iters)
    final.save(out_dir / f"ckpt_{config.max_iters}.bin")
    return final


def predict(checkpoint, image_dir, out_dir) -> dict:
    """Write one soft glass map per decodable image, at the original resolution.

    Images are resized to the training input size for inference and the
    prediction is bilinearly upsampled back; no post-processing is applied.
    Returns {"written": [...], "skipped": [...]}.
    """
    if not isinstance(checkpoint, Checkpoint):
        checkpoint = Checkpoint.load(checkpoint)
    config = config_from_dict(checkpoint.payload["config"])
    torch.set_num_threads(config.num_threads)
    model = checkpoint.build_model()
    model.eval()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written, skipped = [], []
    paths = sorted(
        p for p in Path(image_dir).iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg")
    )
    for path in paths:
        try:
            arr = decode_image(path)
        except DecodeError:
            skipped.append(str(path))
            continue
        h, w = arr.shape[:2]
        image = torch.from_numpy(arr.transpose(2, 0, 1)).unsqueeze(0)
        image = bilinear_resample(image, config.input_size)
        with torch.no_grad():
            out = model(image)
            full = bilinear_resample(out.glass_pred, (h, w))
        save_gray_png(out_dir / f"{path.stem}.png", full[0, 0].numpy())
        written.append(str(out_dir / f"{path.stem}.png"))
    return {"written": written, "skipped": skipped}
