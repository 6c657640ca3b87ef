"""Deterministic on-disk format for retained posterior draws.

Layout: 8-byte magic, 8-byte little-endian header length, UTF-8 JSON header
(sorted keys) describing the arrays and metadata, then the raw array bytes
concatenated in header order (C-contiguous, little-endian).  Byte-for-byte
reproducible for identical inputs, unlike zip-based containers that embed
timestamps.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .pipeline import Standardizer
from .sampler import ModelConfig, PosteriorDraws

MAGIC = b"BMIDRW01"

_ARRAY_FIELDS = (
    "f",
    "sigma2_path",
    "f_test",
    "beta",
    "xi",
    "lam",
    "theta",
    "sigma2",
    "sv_mu",
    "sv_phi",
    "sv_sigma",
    "logvol_last",
)


def config_hash(config: ModelConfig) -> str:
    payload = json.dumps(config.to_dict(), sort_keys=True).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


def save_draws(path, draws: PosteriorDraws) -> None:
    arrays = {}
    for name in _ARRAY_FIELDS:
        value = getattr(draws, name)
        if value is not None:
            arrays[name] = np.ascontiguousarray(np.asarray(value, dtype="<f8"))
    std = draws.standardizer
    header = {
        "arrays": [{"name": k, "shape": list(v.shape)} for k, v in arrays.items()],
        "config": draws.config.to_dict(),
        "standardizer": {
            "x_mean": std.x_mean.tolist(),
            "x_sd": std.x_sd.tolist(),
            "y_mean": std.y_mean,
            "y_sd": std.y_sd,
        },
        "accept_rates": draws.accept_rates,
        "origin": list(draws.origin) if draws.origin is not None else None,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        for entry in header["arrays"]:
            fh.write(arrays[entry["name"]].tobytes())


def load_draws(path) -> PosteriorDraws:
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise ValueError(f"{path} is not a draws file")
        hlen = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(hlen).decode("utf-8"))
        arrays = {}
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(count * 8), dtype="<f8").reshape(shape)
            arrays[entry["name"]] = data.copy()

    cfg_dict = dict(header["config"])
    cfg_dict["theta_init"] = tuple(cfg_dict["theta_init"])
    config = ModelConfig(**cfg_dict)
    std = header["standardizer"]
    standardizer = Standardizer(
        x_mean=np.array(std["x_mean"]),
        x_sd=np.array(std["x_sd"]),
        y_mean=std["y_mean"],
        y_sd=std["y_sd"],
    )
    origin = tuple(header["origin"]) if header["origin"] is not None else None
    kwargs = {name: arrays.get(name) for name in _ARRAY_FIELDS}
    if origin is not None:
        origin = (int(origin[0]), float(origin[1]))
    return PosteriorDraws(
        config=config,
        standardizer=standardizer,
        accept_rates=header["accept_rates"],
        origin=origin,
        **kwargs,
    )
