"""Training, prediction and evaluation entry points."""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from PIL import Image
from torch.utils.data import DataLoader

from .checkpoint import Checkpoint, load_checkpoint
from .config import TrainConfig
from .data import SaliencyDataset, load_image, scan_dataset, standardize_image
from .encoder import BackboneConfig
from .gca import GCAUnit
from .losses import ohem_filter, total_loss
from .metrics import MetricsReport, evaluate_dataset
from .model import DAFNet

log = logging.getLogger(__name__)

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


def lr_schedule(epoch: int, config: TrainConfig | None = None) -> float:
    """Constant for the first ``lr_constant_epochs``, then linear per epoch to ``lr_final``."""
    c = config or TrainConfig()
    if not 1 <= epoch <= c.epochs:
        raise ValueError(f"epoch {epoch} outside 1..{c.epochs}")
    if epoch <= c.lr_constant_epochs:
        return c.lr_initial
    span = c.epochs - c.lr_constant_epochs
    return c.lr_initial - (epoch - c.lr_constant_epochs) * (c.lr_initial - c.lr_final) / span


def build_model(config: TrainConfig) -> DAFNet:
    backbone = BackboneConfig(config.stage_channels, config.stage_convs,
                              (config.input_size, config.input_size))
    return DAFNet(backbone, delta_init=config.delta_init, **config.toggles)


def initialize(model: nn.Module, seed: int, delta_init: float = 0.1) -> nn.Module:
    """Xavier-uniform weights, zero biases, ``delta_init`` for every GFA weight."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for m in model.modules():
            if isinstance(m, (nn.Conv2d, nn.Linear)):
                nn.init.xavier_uniform_(m.weight, generator=gen)
                if m.bias is not None:
                    m.bias.zero_()
            elif isinstance(m, GCAUnit) and m.use_gfa:
                m.delta.fill_(delta_init)
    return model


def num_workers() -> int:
    return int(os.environ.get("DAFNET_NUM_WORKERS", "0"))


def _adam_state(model: nn.Module, opt: torch.optim.Adam) -> dict[str, torch.Tensor]:
    out = {}
    for name, p in model.named_parameters():
        state = opt.state.get(p)
        if not state:
            continue
        out[f"exp_avg.{name}"] = state["exp_avg"]
        out[f"exp_avg_sq.{name}"] = state["exp_avg_sq"]
        out[f"step.{name}"] = torch.as_tensor(state["step"], dtype=torch.float32).reshape(1)
    return out


def _restore_adam(model: nn.Module, opt: torch.optim.Adam, tensors: dict[str, torch.Tensor]) -> None:
    for name, p in model.named_parameters():
        if f"step.{name}" not in tensors:
            continue
        opt.state[p] = {
            "step": tensors[f"step.{name}"].reshape(()).clone(),
            "exp_avg": tensors[f"exp_avg.{name}"].clone(),
            "exp_avg_sq": tensors[f"exp_avg_sq.{name}"].clone(),
        }


def _nan_dump(out_dir, epoch: int, iteration: int, indices, model: nn.Module) -> str:
    info = {
        "epoch": epoch,
        "iteration": iteration,
        "batch_indices": [int(i) for i in indices],
        "parameter_norms": {n: float(p.detach().norm()) for n, p in model.named_parameters()},
    }
    text = json.dumps(info, indent=2, sort_keys=True)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "nan_dump.json").write_text(text)
    return text


def train(config: TrainConfig, dataset_root, out_dir=None, split: str = "train",
          resume=None) -> Checkpoint:
    """Run the epoch loop and return the final checkpoint.

    The checkpoint is also written to ``out_dir/last.safetensors`` after every
    epoch when ``out_dir`` is given.
    """
    config.validate()
    torch.manual_seed(config.seed)
    model = initialize(build_model(config), config.seed, config.delta_init)
    dataset = SaliencyDataset(scan_dataset(dataset_root, split), config.input_size, config.augment)
    if len(dataset) == 0:
        raise ValueError(f"no training samples in {dataset_root}/{split}")
    shuffle = torch.Generator().manual_seed(config.seed)
    workers = num_workers()
    loader = DataLoader(dataset, batch_size=config.batch_size, shuffle=True, generator=shuffle,
                        num_workers=workers, persistent_workers=workers > 0)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr_initial, betas=ADAM_BETAS,
                           eps=ADAM_EPS, weight_decay=0.0)

    start_epoch, iteration, history = 1, 0, []
    if resume is not None:
        ckpt = resume if isinstance(resume, Checkpoint) else load_checkpoint(resume)
        if ckpt.config.hash() != config.hash():
            raise ValueError("resume checkpoint was written with a different config")
        model.load_state_dict(ckpt.parameters)
        _restore_adam(model, opt, ckpt.optimizer)
        shuffle.set_state(ckpt.rng["shuffle"])
        torch.set_rng_state(ckpt.rng["torch"])
        start_epoch, iteration, history = ckpt.epoch + 1, ckpt.iteration, list(ckpt.history)

    def snapshot(epoch: int) -> Checkpoint:
        return Checkpoint(
            parameters={k: v.detach().clone() for k, v in model.state_dict().items()},
            config=config, epoch=epoch, iteration=iteration,
            optimizer={k: v.clone() for k, v in _adam_state(model, opt).items()},
            rng={"torch": torch.get_rng_state(), "shuffle": shuffle.get_state()},
            history=list(history),
        )

    ckpt = snapshot(start_epoch - 1)
    model.train()
    for epoch in range(start_epoch, config.epochs + 1):
        lr = lr_schedule(epoch, config)
        for group in opt.param_groups:
            group["lr"] = lr
        ohem = epoch >= config.ohem_start_epoch
        losses, kept = [], []
        for images, masks, edges, indices in loader:
            outputs = model(images)
            per_sample = total_loss(outputs, masks, edges, config.w_m, config.w_e)
            if not torch.isfinite(per_sample).all():
                dump = _nan_dump(out_dir, epoch, iteration, indices.tolist(), model)
                raise FloatingPointError(f"non-finite loss at epoch {epoch}, iteration {iteration}:\n{dump}")
            keep = ohem_filter(per_sample.detach().tolist()) if ohem else list(range(len(per_sample)))
            loss = per_sample[keep].mean()
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            iteration += 1
            losses.append(float(loss.detach()))
            kept.append(len(keep))
            if config.max_iters and iteration >= config.max_iters:
                break
        history.append({"epoch": epoch, "lr": lr, "mean_loss": float(np.mean(losses)),
                        "iterations": len(losses), "kept": kept})
        log.info("epoch %d lr %.3g loss %.5f", epoch, lr, history[-1]["mean_loss"])
        ckpt = snapshot(epoch)
        if out_dir is not None:
            ckpt.save(Path(out_dir) / "last.safetensors")
        if config.max_iters and iteration >= config.max_iters:
            break
    return ckpt


def load_model(checkpoint) -> DAFNet:
    ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else load_checkpoint(checkpoint)
    model = build_model(ckpt.config)
    model.load_state_dict(ckpt.parameters)
    return model.eval()


@torch.no_grad()
def predict_array(model: DAFNet, image: np.ndarray) -> np.ndarray:
    """Stage-1 saliency for one ``[3, H, W]`` image in [0, 1] already at model size."""
    x = torch.from_numpy(standardize_image(image))[None]
    return model(x).prediction[0, 0].numpy()


def to_png_array(prob: np.ndarray) -> np.ndarray:
    return np.round(np.clip(prob, 0.0, 1.0) * 255).astype(np.uint8)


@torch.no_grad()
def predict(checkpoint, image_paths, out_dir, export_edges: bool = False) -> list[Path]:
    """Write one 8-bit PNG per image, resized back to the image's own size."""
    ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else load_checkpoint(checkpoint)
    model = load_model(ckpt)
    size = ckpt.config.input_size
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for path in map(Path, image_paths):
        with Image.open(path) as img:
            width, height = img.size
        if (height, width) != (size, size):
            log.warning("resizing %s from %dx%d to %dx%d", path, height, width, size, size)
        x = torch.from_numpy(standardize_image(load_image(path, size)))[None]
        out = model(x)
        maps = {"": out.prediction}
        if export_edges:
            maps["_edge"] = out.edges[0]
        for suffix, m in maps.items():
            if (height, width) != (size, size):
                m = F.interpolate(m, size=(height, width), mode="bilinear", align_corners=False)
            target = out_dir / f"{path.stem}{suffix}.png"
            Image.fromarray(to_png_array(m[0, 0].numpy())).save(target)
            written.append(target)
    return written


def evaluate(checkpoint, dataset_root, split: str = "test", out_dir=None,
             self_check: bool = False) -> MetricsReport:
    """Predict a split and score it; ``self_check`` scores the ground truth against itself."""
    manifest = scan_dataset(dataset_root, split)
    gt_dir = Path(dataset_root) / split / "GT"
    if self_check:
        report = evaluate_dataset(gt_dir, gt_dir)
    else:
        pred_dir = Path(out_dir) / "pred" if out_dir is not None else None
        if pred_dir is None:
            raise ValueError("evaluate needs out_dir to write predictions")
        predict(checkpoint, [img for img, _ in manifest.entries], pred_dir)
        report = evaluate_dataset(pred_dir, gt_dir)
    if out_dir is not None:
        report.write(out_dir)
    return report
