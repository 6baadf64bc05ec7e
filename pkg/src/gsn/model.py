"""Single-file model container.

Layout: ``b"GSNM"``, u32 LE version, u64 LE header length, UTF-8 JSON header
(config, class names, tensor directory), then the GSNT v1 tensor blocks back
to back. Tensor offsets in the header count from the first block.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .classify import GsnModel, SoftmaxClassifier, count_parameters
from .config import PipelineConfig
from .dictionary import Dictionary
from .errors import ConfigError, FormatError
from .gcn import AtomEncoder, GcnLayer
from .numerics import decode_tensor, encode_tensor

MODEL_MAGIC = b"GSNM"
MODEL_VERSION = 1


def model_tensors(model: GsnModel) -> dict:
    tensors = dict(model.encoder.parameters())
    tensors["dict.D"] = model.dictionary.atoms
    tensors["clf.W"] = model.classifier.weight
    tensors["clf.b"] = model.classifier.bias
    return tensors


def dumps(model: GsnModel) -> bytes:
    blocks, directory, offset = [], [], 0
    for name, value in model_tensors(model).items():
        arr = np.asarray(value)
        block = encode_tensor(arr.shape, arr)
        directory.append({"name": name, "offset": offset, "nbytes": len(block), "dims": list(arr.shape)})
        blocks.append(block)
        offset += len(block)
    header = {
        "format_version": MODEL_VERSION,
        "config": model.config.to_dict(),
        "class_names": list(model.class_names),
        "activations": [layer.activation for layer in model.encoder.layers],
        "dictionary": {"lambda": model.config.lam, "k_atoms": model.dictionary.k_atoms},
        "trainable_parameters": count_parameters(model),
        "tensors": directory,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return MODEL_MAGIC + struct.pack("<IQ", MODEL_VERSION, len(head)) + head + b"".join(blocks)


def save_model(model: GsnModel, path) -> None:
    Path(path).write_bytes(dumps(model))


def read_header(buf: bytes) -> tuple[dict, int]:
    if len(buf) < 16:
        raise FormatError("model file truncated at byte 0")
    if buf[:4] != MODEL_MAGIC:
        raise FormatError(f"bad model magic {buf[:4]!r} at byte 0")
    version, hlen = struct.unpack_from("<IQ", buf, 4)
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model version {version} at byte 4")
    if 16 + hlen > len(buf):
        raise FormatError(f"model header truncated at byte {len(buf)}")
    try:
        header = json.loads(buf[16:16 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"model header is not valid JSON at byte 16 ({exc})") from exc
    return header, 16 + hlen


def loads(buf: bytes) -> GsnModel:
    header, base = read_header(buf)
    try:
        config = PipelineConfig.from_dict(header["config"])
        directory = header["tensors"]
        class_names = list(header["class_names"])
        activations = header["activations"]
    except (KeyError, TypeError, ConfigError) as exc:
        raise FormatError(f"model header incomplete: {exc}") from exc
    tensors = {}
    for entry in directory:
        start = base + int(entry["offset"])
        dims, data, end = decode_tensor(buf[:start + int(entry["nbytes"])], start, exact=True)
        if list(dims) != list(entry["dims"]):
            raise FormatError(f"tensor {entry['name']} dims {dims} disagree with header at byte {start}")
        tensors[entry["name"]] = data
    expected_end = base + sum(int(e["nbytes"]) for e in directory)
    if expected_end != len(buf):
        raise FormatError(f"{len(buf) - expected_end} unexpected trailing bytes at byte {expected_end}")

    layers = []
    for i, act in enumerate(activations):
        try:
            w, b = tensors[f"gcn.layer{i}.W"], tensors[f"gcn.layer{i}.b"]
        except KeyError as exc:
            raise FormatError(f"missing tensor {exc}") from exc
        layers.append(GcnLayer(w, b, act, config.mode))
    encoder = AtomEncoder(layers, config.readout)
    if tuple(layer.weight.shape[1] for layer in layers) != config.gcn_widths:
        raise FormatError("GCN tensor shapes disagree with the config snapshot")
    try:
        dictionary = Dictionary(tensors["dict.D"])
        clf = SoftmaxClassifier(tensors["clf.W"], tensors["clf.b"])
    except KeyError as exc:
        raise FormatError(f"missing tensor {exc}") from exc
    if clf.in_dim != config.feature_length() or clf.num_classes != len(class_names):
        raise FormatError(f"classifier shape {clf.weight.shape} disagrees with the config snapshot")
    if dictionary.atoms.shape != (config.atom_dim, config.atoms):
        raise FormatError(f"dictionary shape {dictionary.atoms.shape} disagrees with the config snapshot")
    return GsnModel(config, encoder, dictionary, clf, class_names)


def load_model(path) -> GsnModel:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"model file not found: {path}")
    return loads(path.read_bytes())
