"""
Binary artifact formats.

Both formats start with a 4-byte magic, a little-endian uint32 version and a
uint32-length UTF-8 JSON header, followed by raw little-endian arrays in header order.

- Checkpoint (``PNCK``): header carries the model, scenario and training configs, the
  config hash, the seed and the list of (name, shape) entries; each array is stored as
  interleaved real/imaginary doubles.
- Dataset (``PNDS``): header carries the scenario config, counts, seed and split sizes;
  the body holds UE coordinates (f64), the two NLoS draws (interleaved complex f64) and
  the split indices (i64).
"""
import json
import logging
import struct
from pathlib import Path

import numpy as np

from .exceptions import ArtifactError, ConfigError
from .network import ModelConfig, init_params
from .scenario import ScenarioConfig, build_scenario


logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"PNCK"
DATASET_MAGIC = b"PNDS"
FORMAT_VERSION = 1
SPLIT_NAMES = ("train", "val", "test")


def _write(path, magic, header, arrays):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = json.dumps(header, sort_keys=True).encode("utf-8")
    with path.open("wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(payload)))
        fh.write(payload)
        for array in arrays:
            fh.write(array.tobytes(order="C"))


class _Reader:
    def __init__(self, path, magic):
        path = Path(path)
        if not path.is_file():
            raise ArtifactError(f"artifact not found: {path}")
        self.path = path
        self.buffer = path.read_bytes()
        self.offset = 0
        if self._take(4) != magic:
            raise ArtifactError(f"{path} is not a {magic.decode()} artifact")
        version, length = struct.unpack("<II", self._take(8))
        if version != FORMAT_VERSION:
            raise ArtifactError(f"{path}: unsupported format version {version}")
        try:
            self.header = json.loads(self._take(length).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ArtifactError(f"{path}: corrupt header") from exc

    def _take(self, size):
        if self.offset + size > len(self.buffer):
            raise ArtifactError(f"{self.path}: truncated artifact")
        chunk = self.buffer[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def array(self, dtype, shape):
        dtype = np.dtype(dtype)
        count = int(np.prod(shape, dtype=np.int64))
        return np.frombuffer(self._take(count * dtype.itemsize), dtype=dtype).reshape(shape).copy()

    def finish(self):
        if self.offset != len(self.buffer):
            raise ArtifactError(f"{self.path}: {len(self.buffer) - self.offset} trailing bytes")


def save_checkpoint(path, params, scenario_cfg=None, train_cfg=None, config_hash="", seed=0, extra=None):
    """Write every parameter and batch-norm buffer of ``params`` with its configs."""
    state = params.state_dict()
    names = sorted(state)
    header = {
        "model_config": params.config.as_dict(),
        "scenario_config": scenario_cfg.as_dict() if scenario_cfg is not None else None,
        "train_config": train_cfg.as_dict() if train_cfg is not None else None,
        "config_hash": config_hash,
        "seed": seed,
        "arrays": [{"name": name, "shape": list(state[name].shape)} for name in names],
    }
    if extra:
        header["extra"] = extra
    _write(path, CHECKPOINT_MAGIC, header, [state[name].astype("<c16") for name in names])
    logger.info(f"Saved checkpoint with {len(names)} arrays to {path}")


def load_checkpoint(path):
    """Model weights and the checkpoint header."""
    reader = _Reader(path, CHECKPOINT_MAGIC)
    header = reader.header
    state = {entry["name"]: reader.array("<c16", tuple(entry["shape"])) for entry in header["arrays"]}
    reader.finish()
    try:
        model_cfg = ModelConfig(**header["model_config"])
        params = init_params(model_cfg, np.random.default_rng(0))
        params.load_state_dict(state)
    except (TypeError, ConfigError) as exc:
        raise ArtifactError(f"{path}: checkpoint does not describe a valid model ({exc})") from exc
    logger.info(f"Loaded checkpoint {path} ({params.parameter_count()} complex parameters)")
    return params, header


def scenario_from_dict(values):
    try:
        return ScenarioConfig(**values)
    except (TypeError, ConfigError) as exc:
        raise ArtifactError(f"stored scenario config is not valid: {exc}") from exc


def save_dataset(path, dataset, config_hash=""):
    cfg = dataset.scenario.config
    n, K = dataset.ue_positions.shape[:2]
    header = {
        "scenario_config": cfg.as_dict(),
        "n_samples": n,
        "K": K,
        "B": dataset.nlos_pa_ris.shape[1],
        "R": dataset.nlos_pa_ris.shape[2],
        "L": dataset.nlos_pa_ris.shape[3],
        "seed": dataset.seed,
        "splits": {name: int(len(dataset.splits[name])) for name in SPLIT_NAMES},
        "config_hash": config_hash,
    }
    arrays = [
        dataset.ue_positions.astype("<f8"),
        dataset.nlos_pa_ris.astype("<c16"),
        dataset.nlos_ris_ue.astype("<c16"),
    ] + [np.asarray(dataset.splits[name], dtype="<i8") for name in SPLIT_NAMES]
    _write(path, DATASET_MAGIC, header, arrays)
    logger.info(f"Saved dataset of {n} samples to {path}")


def load_dataset(path):
    """The stored dataset and its header."""
    from .training import Dataset

    reader = _Reader(path, DATASET_MAGIC)
    header = reader.header
    n, K, B, R, L = (header[key] for key in ("n_samples", "K", "B", "R", "L"))
    ue = reader.array("<f8", (n, K, 3))
    pa_ris = reader.array("<c16", (n, B, R, L))
    ris_ue = reader.array("<c16", (n, R, K, L))
    splits = {name: reader.array("<i8", (header["splits"][name],)) for name in SPLIT_NAMES}
    reader.finish()
    scenario = build_scenario(scenario_from_dict(header["scenario_config"]))
    dataset = Dataset(scenario, ue, pa_ris, ris_ue, splits, header["seed"])
    logger.info(f"Loaded dataset {path} ({n} samples, K={K}, B={B}, R={R})")
    return dataset, header
