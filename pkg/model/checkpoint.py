# model/checkpoint.py
"""
Checkpoint layout (one directory):

    manifest.json  – version "spanex-ckpt-1", encoder config, and for every
                     tensor its name, shape, dtype, byte offset and length
    tensors.bin    – flat little-endian tensor data in manifest order
    vocab.txt      – optional vocabulary the model was trained with; its
                     sha256 sits in the manifest next to the blob hash

The manifest holds no timestamps, so identical weights give identical bytes.
"""
from __future__ import annotations

import json
import logging
import pathlib
from typing import Any, Mapping, Optional

import numpy as np

from model.encoder import EncoderConfig
from model.span_model import SpanExtractionModel
from nlp.tokenizer import Vocabulary
from utils.files import atomic_write_bytes, atomic_write_text, bytes_sha256, file_sha256

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = "spanex-ckpt-1"
MANIFEST_NAME = "manifest.json"
BLOB_NAME = "tensors.bin"
VOCAB_NAME = "vocab.txt"


class CheckpointError(RuntimeError):
    """A checkpoint could not be written or read back."""


def _little_endian(arr: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<"))


def save_checkpoint(
    model: SpanExtractionModel,
    directory: str | pathlib.Path,
    *,
    vocab: Optional[Vocabulary] = None,
    metadata: Optional[Mapping[str, Any]] = None,
) -> pathlib.Path:
    out = pathlib.Path(directory)
    tensors = []
    chunks: list[bytes] = []
    offset = 0
    for name, arr in model.parameters().items():
        raw = _little_endian(arr).tobytes()
        tensors.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": arr.dtype.name,
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        chunks.append(raw)
        offset += len(raw)
    blob = b"".join(chunks)

    manifest = {
        "version": CHECKPOINT_VERSION,
        "byte_order": "little",
        "config": model.config.to_dict(),
        "tensors": tensors,
        "blob_sha256": bytes_sha256(blob),
        "metadata": dict(metadata or {}),
    }
    try:
        atomic_write_bytes(out / BLOB_NAME, blob)
        if vocab is not None:
            vocab.save(out / VOCAB_NAME)
            manifest["vocab"] = {
                "file": VOCAB_NAME,
                "sha256": file_sha256(out / VOCAB_NAME),
                "lowercase": vocab.lowercase,
                "continuation_prefix": vocab.continuation_prefix,
            }
        atomic_write_text(out / MANIFEST_NAME, json.dumps(manifest, indent=2) + "\n")
    except OSError as e:
        logger.error("Writing checkpoint to %s failed: %s", out, e)
        raise CheckpointError(f"Failed to write checkpoint to {out}") from e

    logger.info("💾 Checkpoint saved to %s (%d tensors, %d bytes)", out, len(tensors), len(blob))
    return out


def read_manifest(directory: str | pathlib.Path) -> dict[str, Any]:
    path = pathlib.Path(directory) / MANIFEST_NAME
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError(f"Cannot read checkpoint manifest {path}") from e
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"Unsupported checkpoint version {manifest.get('version')!r}; expected {CHECKPOINT_VERSION}"
        )
    return manifest


def load_checkpoint(directory: str | pathlib.Path) -> SpanExtractionModel:
    root = pathlib.Path(directory)
    manifest = read_manifest(root)
    try:
        blob = (root / BLOB_NAME).read_bytes()
    except OSError as e:
        raise CheckpointError(f"Cannot read checkpoint data {root / BLOB_NAME}") from e
    if bytes_sha256(blob) != manifest["blob_sha256"]:
        raise CheckpointError(f"Checkpoint data in {root} does not match its manifest hash")

    params: dict[str, np.ndarray] = {}
    for entry in manifest["tensors"]:
        dtype = np.dtype(entry["dtype"]).newbyteorder("<")
        count = int(np.prod(entry["shape"], dtype=np.int64))
        if entry["offset"] + count * dtype.itemsize > len(blob):
            raise CheckpointError(f"Tensor {entry['name']} runs past the end of {BLOB_NAME}")
        arr = np.frombuffer(blob, dtype=dtype, count=count, offset=entry["offset"])
        params[entry["name"]] = arr.reshape(entry["shape"]).astype(entry["dtype"])

    try:
        config = EncoderConfig.from_dict(manifest["config"])
        model = SpanExtractionModel.from_params(config, params)
    except (KeyError, ValueError) as e:
        raise CheckpointError(f"Checkpoint in {root} is inconsistent: {e}") from e
    logger.info("Loaded checkpoint from %s (%d tensors)", root, len(params))
    return model


def load_checkpoint_vocab(directory: str | pathlib.Path) -> Vocabulary:
    path = pathlib.Path(directory) / VOCAB_NAME
    if not path.is_file():
        raise CheckpointError(f"Checkpoint {directory} has no {VOCAB_NAME}")
    settings = read_manifest(directory).get("vocab", {})
    if "sha256" in settings and file_sha256(path) != settings["sha256"]:
        raise CheckpointError(f"{path} does not match its manifest hash")
    return Vocabulary.from_file(
        path,
        lowercase=settings.get("lowercase", True),
        continuation_prefix=settings.get("continuation_prefix", "##"),
    )
