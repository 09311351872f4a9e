import io
from typing import Any, Dict, Optional

import torch
import torch.nn as nn

from ..classes.errors import ConfigError
from ..utils.file_manager import FilesMngr


def save_checkpoint(
    path: str,
    module: nn.Module,
    architecture: str,
    config_hash: str,
    meta: Optional[Dict[str, Any]] = None,
):
    """
    Self-describing archive: architecture tag, parameter tensors, the hash of
    the config that produced them and free-form metadata of plain values.
    """
    buffer = io.BytesIO()
    torch.save(
        {
            "architecture": architecture,
            "config_hash": config_hash,
            "state_dict": module.state_dict(),
            "meta": dict(meta or {}),
        },
        buffer,
    )
    FilesMngr().atomic_write_bytes(path, buffer.getvalue())


def load_checkpoint(
    path: str,
    module: nn.Module,
    architecture: str,
    config_hash: Optional[str] = None,
) -> Dict[str, Any]:
    """Restores `module` in place and returns the stored metadata."""
    FilesMngr().is_path_exist(path, "Checkpoint")
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if payload.get("architecture") != architecture:
        raise ConfigError(
            f"checkpoint '{path}' holds a {payload.get('architecture')!r} model, "
            f"expected {architecture!r}"
        )
    if config_hash is not None and payload.get("config_hash") != config_hash:
        raise ConfigError(
            f"checkpoint '{path}' was produced under config {payload.get('config_hash')}, "
            f"current config is {config_hash}"
        )
    module.load_state_dict(payload["state_dict"])
    return payload.get("meta", {})
