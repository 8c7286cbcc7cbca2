"""Single-file checkpoint container.

Layout: 8-byte magic, uint32 format version, uint64 header length, UTF-8
JSON header, then named parameter blobs as little-endian float32, in the
order listed by the header. The header carries the model config, optional
training config, step counter, RNG state, and optimizer hyperparameters,
so an interrupted run resumes bit-exactly.
"""
from __future__ import annotations

import hashlib
import io
import json
from pathlib import Path

import numpy as np
import torch

from .errors import CorruptCheckpoint
from .models import ModelConfig, build_model
from .training import Trainer, TrainingConfig

MAGIC = b"PAIRCKPT"
FORMAT_VERSION = 1


def _model_blobs(model) -> list[tuple[str, np.ndarray]]:
    blobs = []
    for name, tensor in sorted(model.state_dict().items()):
        blobs.append((f"model.{name}", tensor.detach().cpu().numpy().astype("<f4")))
    return blobs


def _optimizer_blobs(optimizer) -> tuple[dict, list[tuple[str, np.ndarray]]]:
    state = optimizer.state_dict()
    meta = {
        "param_groups": [
            {k: v for k, v in g.items() if k != "params"} | {"params": g["params"]}
            for g in state["param_groups"]
        ],
        "steps": {},
    }
    blobs = []
    for idx in sorted(state["state"]):
        entry = state["state"][idx]
        meta["steps"][str(idx)] = float(entry["step"])
        for key in ("exp_avg", "exp_avg_sq"):
            blobs.append(
                (f"opt.{idx}.{key}", entry[key].detach().cpu().numpy().astype("<f4"))
            )
    return meta, blobs


def save_checkpoint(
    path: str | Path,
    model,
    optimizer: torch.optim.Optimizer | None = None,
    train_config: TrainingConfig | None = None,
    step: int = 0,
    rng_state: dict | None = None,
) -> None:
    blobs = _model_blobs(model)
    opt_meta = None
    if optimizer is not None:
        opt_meta, opt_blobs = _optimizer_blobs(optimizer)
        blobs.extend(opt_blobs)

    header = {
        "model_config": model.config.to_json(),
        "training_config": None if train_config is None else train_config.to_json(),
        "step": int(step),
        "rng_state": rng_state,
        "optimizer": opt_meta,
        "blobs": [{"name": name, "shape": list(arr.shape)} for name, arr in blobs],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")

    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(np.uint32(FORMAT_VERSION).tobytes())
    buf.write(np.uint64(len(header_bytes)).tobytes())
    buf.write(header_bytes)
    for _, arr in blobs:
        buf.write(np.ascontiguousarray(arr).tobytes())
    Path(path).write_bytes(buf.getvalue())


def _read_header(data: bytes) -> tuple[dict, int]:
    if len(data) < 20 or data[:8] != MAGIC:
        raise CorruptCheckpoint("not a checkpoint file (bad magic)")
    version = int(np.frombuffer(data[8:12], dtype=np.uint32)[0])
    if version != FORMAT_VERSION:
        raise CorruptCheckpoint(f"unsupported checkpoint version {version}")
    header_len = int(np.frombuffer(data[12:20], dtype=np.uint64)[0])
    end = 20 + header_len
    if len(data) < end:
        raise CorruptCheckpoint("truncated checkpoint header")
    try:
        header = json.loads(data[20:end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"unreadable checkpoint header: {exc}") from exc
    return header, end


def _read_blobs(data: bytes, header: dict, offset: int) -> dict[str, np.ndarray]:
    out = {}
    pos = offset
    for entry in header["blobs"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        nbytes = count * 4
        if pos + nbytes > len(data):
            raise CorruptCheckpoint(f"truncated blob {entry['name']!r}")
        arr = np.frombuffer(data[pos : pos + nbytes], dtype="<f4").reshape(entry["shape"])
        out[entry["name"]] = arr
        pos += nbytes
    return out


def load_checkpoint(path: str | Path):
    """Rebuild the model (and metadata) from a checkpoint file.

    Returns (model, header) where header keys include training_config, step,
    rng_state, and optimizer metadata.
    """
    data = Path(path).read_bytes()
    header, offset = _read_header(data)
    blobs = _read_blobs(data, header, offset)

    config = ModelConfig.from_json(header["model_config"])
    model = build_model(config)
    state = {
        name[len("model.") :]: torch.from_numpy(arr.copy())
        for name, arr in blobs.items()
        if name.startswith("model.")
    }
    missing = set(model.state_dict()) - set(state)
    if missing:
        raise CorruptCheckpoint(f"checkpoint is missing parameters: {sorted(missing)[:3]}...")
    model.load_state_dict(state)
    model.eval()
    header["_blobs"] = blobs
    return model, header


def resume_trainer(path: str | Path, samples) -> Trainer:
    """Reconstruct a Trainer mid-run from a checkpoint."""
    model, header = load_checkpoint(path)
    if header.get("training_config") is None:
        raise CorruptCheckpoint("checkpoint has no training config to resume from")
    train_config = TrainingConfig.from_json(header["training_config"])
    trainer = Trainer(model.config, train_config, samples, model=model)
    trainer.step = int(header.get("step", 0))
    if header.get("rng_state") is not None:
        state = header["rng_state"]
        state["state"] = {k: int(v) for k, v in state["state"].items()}
        trainer.restore_rng(state)

    opt_meta = header.get("optimizer")
    if opt_meta is not None:
        blobs = header["_blobs"]
        opt_state = {"param_groups": opt_meta["param_groups"], "state": {}}
        for idx_str, step_value in opt_meta["steps"].items():
            idx = int(idx_str)
            opt_state["state"][idx] = {
                "step": torch.tensor(float(step_value)),
                "exp_avg": torch.from_numpy(blobs[f"opt.{idx}.exp_avg"].copy()),
                "exp_avg_sq": torch.from_numpy(blobs[f"opt.{idx}.exp_avg_sq"].copy()),
            }
        trainer.optimizer.load_state_dict(opt_state)
    return trainer


def save_trainer(path: str | Path, trainer: Trainer) -> None:
    save_checkpoint(
        path,
        trainer.model,
        optimizer=trainer.optimizer,
        train_config=trainer.train_config,
        step=trainer.step,
        rng_state=trainer.rng_state(),
    )


def checkpoint_fingerprint(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]
