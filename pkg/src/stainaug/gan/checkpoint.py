"""Checkpoint directory format for the translation model.

A checkpoint is a directory:

    meta.json       iteration, architecture, training config echo, domain
                    names, optional per-domain attribute statistics
    manifest.json   every parameter's name, shape, and blob file; optimizer
                    state layout
    params/p*.bin   one raw little-endian float32 blob per parameter
    opt/o*.bin      adaptive-moment buffers, positionally keyed

Float32 blobs round-trip bit-identically, so a reloaded model reproduces
forward outputs exactly on the same hardware class.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import torch

from ..errors import CheckpointError
from .model import StainGAN
from .networks import ArchConfig, Networks, build_networks

FORMAT_VERSION = 1

META_FILE = "meta.json"
MANIFEST_FILE = "manifest.json"
PARAM_DIR = "params"
OPT_DIR = "opt"

#: Fixed serialization order of the five networks.
MODULE_ORDER = ("enc_content", "enc_attr", "gen", "dis_domain", "dis_content")


def _write_blob(path: Path, tensor: torch.Tensor) -> None:
    data = tensor.detach().cpu().numpy().astype("<f4", copy=False)
    path.write_bytes(data.tobytes())


def _read_blob(path: Path, shape: Sequence[int]) -> torch.Tensor:
    if not path.is_file():
        raise CheckpointError(f"missing blob file {path}")
    raw = np.frombuffer(path.read_bytes(), dtype="<f4")
    expected = int(np.prod(shape, dtype=np.int64)) if shape else 1
    if raw.size != expected:
        raise CheckpointError(
            f"blob {path} holds {raw.size} values, expected {expected} for shape {shape}")
    return torch.from_numpy(raw.reshape(shape).copy())


def _named_parameters(networks: Networks):
    """All parameters in a fixed, documented order as (name, tensor)."""
    modules = networks.all_modules()
    for mod_name in MODULE_ORDER:
        for pname, tensor in modules[mod_name].state_dict().items():
            yield f"{mod_name}.{pname}", tensor


def save_checkpoint(path: Union[str, Path], networks: Networks,
                    iteration: int,
                    domain_names: Optional[Sequence[str]] = None,
                    train_config: Optional[dict] = None,
                    optimizers: Optional[Dict[str, torch.optim.Optimizer]] = None,
                    attribute_stats: Optional[dict] = None) -> "Checkpoint":
    """Write a checkpoint directory; overwrites files already present."""
    root = Path(path)
    (root / PARAM_DIR).mkdir(parents=True, exist_ok=True)
    cfg = networks.config
    if domain_names is None:
        domain_names = [f"domain{i}" for i in range(cfg.domain_count)]
    if len(domain_names) != cfg.domain_count:
        raise CheckpointError(
            f"{len(domain_names)} domain names for {cfg.domain_count} domains")

    param_entries: List[dict] = []
    for i, (name, tensor) in enumerate(_named_parameters(networks)):
        rel = f"{PARAM_DIR}/p{i:04d}.bin"
        _write_blob(root / rel, tensor)
        param_entries.append({"name": name, "shape": list(tensor.shape), "file": rel})

    opt_entries: Dict[str, dict] = {}
    if optimizers:
        (root / OPT_DIR).mkdir(exist_ok=True)
        blob_index = 0
        for opt_name in sorted(optimizers):
            state = optimizers[opt_name].state_dict()
            slots: List[dict] = []
            for param_idx in sorted(state["state"]):
                buffers = state["state"][param_idx]
                entry = {"index": int(param_idx), "blobs": {}}
                for key in sorted(buffers):
                    value = buffers[key]
                    if isinstance(value, torch.Tensor) and value.ndim == 0:
                        entry[key] = float(value)
                    elif isinstance(value, torch.Tensor):
                        rel = f"{OPT_DIR}/o{blob_index:04d}.bin"
                        blob_index += 1
                        _write_blob(root / rel, value)
                        entry["blobs"][key] = {"shape": list(value.shape), "file": rel}
                    else:
                        entry[key] = value
                slots.append(entry)
            opt_entries[opt_name] = {
                "param_groups": state["param_groups"], "state": slots}

    manifest = {
        "format_version": FORMAT_VERSION,
        "parameters": param_entries,
        "optimizers": opt_entries,
    }
    (root / MANIFEST_FILE).write_text(json.dumps(manifest, indent=1))

    meta = {
        "format_version": FORMAT_VERSION,
        "iteration": int(iteration),
        "arch": cfg.as_dict(),
        "train_config": train_config,
        "domain_names": list(domain_names),
        "attribute_stats": attribute_stats,
    }
    (root / META_FILE).write_text(json.dumps(meta, indent=1))
    return Checkpoint(path=root, meta=meta, manifest=manifest)


@dataclass
class Checkpoint:
    """Handle on a checkpoint directory; loads lazily."""

    path: Path
    meta: dict
    manifest: dict

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Checkpoint":
        root = Path(path)
        meta_path = root / META_FILE
        manifest_path = root / MANIFEST_FILE
        for p in (meta_path, manifest_path):
            if not p.is_file():
                raise CheckpointError(f"not a checkpoint directory: missing {p}")
        try:
            meta = json.loads(meta_path.read_text())
            manifest = json.loads(manifest_path.read_text())
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"corrupt checkpoint metadata under {root}: {exc}")
        for blob in (meta, manifest):
            if blob.get("format_version") != FORMAT_VERSION:
                raise CheckpointError(
                    f"unsupported checkpoint format version {blob.get('format_version')}")
        return cls(path=root, meta=meta, manifest=manifest)

    @property
    def iteration(self) -> int:
        return int(self.meta["iteration"])

    @property
    def domain_names(self) -> List[str]:
        return list(self.meta["domain_names"])

    @property
    def train_config(self) -> Optional[dict]:
        return self.meta.get("train_config")

    @property
    def attribute_stats(self) -> Optional[dict]:
        return self.meta.get("attribute_stats")

    def arch_config(self) -> ArchConfig:
        return ArchConfig(**self.meta["arch"])

    def load_networks(self) -> Networks:
        networks = build_networks(self.arch_config())
        by_name = {e["name"]: e for e in self.manifest["parameters"]}
        modules = networks.all_modules()
        for mod_name in MODULE_ORDER:
            state = {}
            for pname, tensor in modules[mod_name].state_dict().items():
                full = f"{mod_name}.{pname}"
                entry = by_name.pop(full, None)
                if entry is None:
                    raise CheckpointError(f"checkpoint lacks parameter {full}")
                if list(tensor.shape) != list(entry["shape"]):
                    raise CheckpointError(
                        f"parameter {full}: checkpoint shape {entry['shape']} "
                        f"!= model shape {list(tensor.shape)}")
                state[pname] = _read_blob(self.path / entry["file"], entry["shape"])
            modules[mod_name].load_state_dict(state)
        if by_name:
            raise CheckpointError(
                f"checkpoint holds unknown parameters: {sorted(by_name)[:3]} ...")
        return networks

    def load_model(self) -> StainGAN:
        return StainGAN(self.load_networks(), self.domain_names)

    def load_optimizer_state(self, name: str) -> dict:
        """Rebuild one optimizer state_dict (tensors restored from blobs)."""
        entry = self.manifest.get("optimizers", {}).get(name)
        if entry is None:
            raise CheckpointError(f"checkpoint has no optimizer state {name!r}")
        state = {}
        for slot in entry["state"]:
            buffers = {}
            for key, ref in slot["blobs"].items():
                buffers[key] = _read_blob(self.path / ref["file"], ref["shape"])
            for key, value in slot.items():
                if key in ("index", "blobs"):
                    continue
                buffers[key] = torch.tensor(float(value)) if key == "step" else value
            state[slot["index"]] = buffers
        return {"state": state, "param_groups": entry["param_groups"]}

    @property
    def optimizer_names(self) -> List[str]:
        return sorted(self.manifest.get("optimizers", {}))


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    return Checkpoint.load(path)
