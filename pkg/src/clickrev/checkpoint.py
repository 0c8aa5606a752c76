"""Versioned checkpoint container: architecture config, parameters, optimizer
state, iteration counter, and rng state, in one torch-serialized file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .network import NetworkConfig, RevisionUNet

CHECKPOINT_MAGIC = "clickrev-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """The file is not a readable checkpoint of a supported version."""


class ConfigMismatch(CheckpointError):
    """The stored architecture config differs from the expected one."""


@dataclass
class Checkpoint:
    config: NetworkConfig
    model_state: dict
    iteration: int
    optimizer_state: dict | None = None
    seed: int | None = None
    torch_rng_state: torch.Tensor | None = None
    numpy_rng_state: dict | None = None

    def build_model(self) -> RevisionUNet:
        model = RevisionUNet(self.config)
        model.load_state_dict(self.model_state)
        model.eval()
        return model


def save_checkpoint(
    path,
    model: RevisionUNet,
    iteration: int,
    optimizer: torch.optim.Optimizer | None = None,
    seed: int | None = None,
    numpy_rng: np.random.Generator | None = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "magic": CHECKPOINT_MAGIC,
        "v": CHECKPOINT_VERSION,
        "config": model.config.to_json(),
        "model_state": model.state_dict(),
        "iteration": int(iteration),
        "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
        "seed": seed,
        "torch_rng_state": torch.get_rng_state(),
        # PCG64 state is plain ints; store as JSON to stay loadable with
        # torch's restricted (weights_only) unpickler.
        "numpy_rng_state": json.dumps(numpy_rng.bit_generator.state) if numpy_rng is not None else None,
    }
    torch.save(payload, path)
    return path


def load_checkpoint(path, expected_config: NetworkConfig | None = None) -> Checkpoint:
    path = Path(path)
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:  # noqa: BLE001 - normalize loader failures
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("magic") != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not a {CHECKPOINT_MAGIC} file")
    if payload.get("v") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {payload.get('v')!r}")
    config = NetworkConfig.from_json(payload["config"])
    if expected_config is not None and config != expected_config:
        raise ConfigMismatch(f"checkpoint config {config} != expected {expected_config}")
    rng_state = payload.get("numpy_rng_state")
    return Checkpoint(
        config=config,
        model_state=payload["model_state"],
        iteration=int(payload["iteration"]),
        optimizer_state=payload.get("optimizer_state"),
        seed=payload.get("seed"),
        torch_rng_state=payload.get("torch_rng_state"),
        numpy_rng_state=json.loads(rng_state) if rng_state else None,
    )
