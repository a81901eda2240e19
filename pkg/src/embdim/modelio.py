"""Versioned binary model envelope shared by autoencoder, forest, and MLP.

Layout (little-endian): magic ``MDL1``, u16 format version, u16 kind,
then a kind-specific payload. Neural-network parameters are stored as
float32; tree thresholds and leaf values are stored as float64 because a
rounded threshold could flip a sample's side at prediction time.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .autoencoder import AutoencoderModel
from .regressor.forest import ForestModel, Tree
from .regressor.mlp import MLPModel

MAGIC = b"MDL1"
VERSION = 1
KIND_AUTOENCODER = 1
KIND_FOREST = 2
KIND_MLP = 3


class ModelFormatError(ValueError):
    pass


def _pack_affine_stack(out: bytearray, params: list[np.ndarray]) -> None:
    n_layers = len(params) // 2
    out += struct.pack("<I", n_layers)
    for i in range(n_layers):
        w, b = params[2 * i], params[2 * i + 1]
        out += struct.pack("<II", w.shape[0], w.shape[1])
        out += w.astype("<f4").tobytes(order="C")
        out += b.astype("<f4").tobytes(order="C")


class _Reader:
    def __init__(self, raw: bytes, offset: int = 0):
        self.raw = raw
        self.off = offset

    def unpack(self, fmt: str):
        try:
            vals = struct.unpack_from(fmt, self.raw, self.off)
        except struct.error as exc:
            raise ModelFormatError("truncated model blob") from exc
        self.off += struct.calcsize(fmt)
        return vals

    def array(self, dtype: str, count: int) -> np.ndarray:
        nbytes = np.dtype(dtype).itemsize * count
        if self.off + nbytes > len(self.raw):
            raise ModelFormatError("truncated model blob")
        arr = np.frombuffer(self.raw, dtype=dtype, count=count, offset=self.off)
        self.off += nbytes
        return arr


def _unpack_affine_stack(r: _Reader) -> list[np.ndarray]:
    (n_layers,) = r.unpack("<I")
    params: list[np.ndarray] = []
    for _ in range(n_layers):
        d_in, d_out = r.unpack("<II")
        w = r.array("<f4", d_in * d_out).astype(np.float64).reshape(d_in, d_out)
        b = r.array("<f4", d_out).astype(np.float64)
        params += [w, b]
    return params


def model_to_bytes(model) -> bytes:
    out = bytearray(MAGIC)
    if isinstance(model, AutoencoderModel):
        out += struct.pack("<HH", VERSION, KIND_AUTOENCODER)
        out += struct.pack("<II", model.input_dim, model.latent_dim)
        _pack_affine_stack(out, model.encoder)
        _pack_affine_stack(out, model.decoder)
    elif isinstance(model, ForestModel):
        out += struct.pack("<HH", VERSION, KIND_FOREST)
        out += struct.pack("<II", len(model.trees), model.train_dim)
        for tree in model.trees:
            out += struct.pack("<I", tree.feature.size)
            out += tree.feature.astype("<i4").tobytes()
            out += tree.threshold.astype("<f8").tobytes()
            out += tree.left.astype("<i4").tobytes()
            out += tree.right.astype("<i4").tobytes()
            out += tree.value.astype("<f8").tobytes()
    elif isinstance(model, MLPModel):
        out += struct.pack("<HH", VERSION, KIND_MLP)
        out += struct.pack("<II", model.input_dim, model.hidden_dim)
        _pack_affine_stack(out, model.params)
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return bytes(out)


def model_from_bytes(raw: bytes):
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise ModelFormatError("not a model blob (bad magic)")
    r = _Reader(raw, 4)
    version, kind = r.unpack("<HH")
    if version != VERSION:
        raise ModelFormatError(f"unsupported model format version {version}")
    if kind == KIND_AUTOENCODER:
        input_dim, latent_dim = r.unpack("<II")
        encoder = _unpack_affine_stack(r)
        decoder = _unpack_affine_stack(r)
        model = AutoencoderModel(
            input_dim=input_dim, latent_dim=latent_dim, encoder=encoder, decoder=decoder
        )
    elif kind == KIND_FOREST:
        n_trees, train_dim = r.unpack("<II")
        trees = []
        for _ in range(n_trees):
            (n_nodes,) = r.unpack("<I")
            feature = r.array("<i4", n_nodes).astype(np.int32)
            threshold = r.array("<f8", n_nodes).astype(np.float64)
            left = r.array("<i4", n_nodes).astype(np.int32)
            right = r.array("<i4", n_nodes).astype(np.int32)
            value = r.array("<f8", n_nodes).astype(np.float64)
            trees.append(Tree(feature, threshold, left, right, value))
        model = ForestModel(trees=trees, train_dim=train_dim)
    elif kind == KIND_MLP:
        input_dim, hidden_dim = r.unpack("<II")
        params = _unpack_affine_stack(r)
        model = MLPModel(input_dim=input_dim, hidden_dim=hidden_dim, params=params)
    else:
        raise ModelFormatError(f"unknown model kind {kind}")
    if r.off != len(raw):
        raise ModelFormatError(f"{len(raw) - r.off} trailing bytes in model blob")
    return model


def save_model(model, path: str | Path) -> Path:
    path = Path(path)
    path.write_bytes(model_to_bytes(model))
    return path


def load_model(path: str | Path):
    return model_from_bytes(Path(path).read_bytes())
