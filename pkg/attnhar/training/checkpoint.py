"""Binary checkpoint files.

Layout (all integers unsigned 32-bit little-endian)::

    b"ATTN" | version | metadata length | metadata (UTF-8 JSON)
    tensor*: name length | name (UTF-8) | rank | dim * rank | float64 LE values

Metadata records the dimensions, variant, modality map, continuity weights, architecture
flags, the names of the tensors that follow in order and, when known, the training channel
statistics and class names.
"""

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Final, List, Optional, Tuple

import numpy as np

from attnhar.data.recording import ChannelStats
from attnhar.errors import (
    CheckpointFormatError,
    CheckpointShapeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    ConfigError,
    DataError,
    ShapeError,
)
from attnhar.model.params import LossConfig, ModelParams

logger = logging.getLogger(__name__)

MAGIC: Final[bytes] = b"ATTN"
FORMAT_VERSION: Final[int] = 1

_U32: Final = struct.Struct("<I")
_FLOAT: Final = np.dtype("<f8")
_DIM_KEYS: Final[Tuple[str, ...]] = (
    "input_size",
    "hidden_size",
    "n_classes",
    "n_modalities",
    "sensor_hidden",
)


@dataclass(frozen=True, eq=False)
class CheckpointMeta:
    """Everything besides the tensors needed to reuse a model."""

    loss: LossConfig = field(default_factory=LossConfig)
    stats: Optional[ChannelStats] = None
    class_names: Tuple[str, ...] = ()
    window_length: Optional[int] = None
    extra: Dict[str, Any] = field(default_factory=dict)


def _metadata(params: ModelParams, meta: CheckpointMeta) -> Dict[str, Any]:
    dims = params.dims
    return {
        "dims": {
            "input_size": dims.input_size,
            "hidden_size": dims.hidden_size,
            "n_classes": dims.n_classes,
            "n_modalities": dims.n_modalities,
            "sensor_hidden": dims.sensor_hidden,
        },
        "variant": meta.loss.variant.value,
        "modality_map": list(params.modality_map),
        "lambda1": meta.loss.lambda1,
        "lambda2": meta.loss.lambda2,
        "stacked": params.lstm2 is not None,
        "cell_bias": params.lstm.b_c is not None,
        "stats": meta.stats.to_dict() if meta.stats is not None else None,
        "class_names": list(meta.class_names),
        "window_length": meta.window_length,
        "extra": meta.extra,
        "tensors": list(params.named_tensors()),
    }


def save_checkpoint(path: Path, params: ModelParams, meta: CheckpointMeta) -> Path:
    """Write ``params`` and ``meta``; the file reloads bit-identically.

    Raises:
        ConfigError: If ``params`` lacks a component the variant in ``meta`` needs.
        DataError: If the file cannot be written.
    """
    params.check_variant(meta.loss.variant)
    header = json.dumps(_metadata(params, meta), sort_keys=True).encode("utf-8")
    chunks: List[bytes] = [MAGIC, _U32.pack(FORMAT_VERSION), _U32.pack(len(header)), header]
    for name, tensor in params.named_tensors().items():
        encoded = name.encode("utf-8")
        chunks += [_U32.pack(len(encoded)), encoded, _U32.pack(tensor.ndim)]
        chunks += [_U32.pack(d) for d in tensor.shape]
        chunks.append(np.ascontiguousarray(tensor, dtype=_FLOAT).tobytes())

    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(b"".join(chunks))
    except OSError as e:
        raise DataError(f"cannot write checkpoint {path}: {e}")
    logger.debug(f"Wrote checkpoint {path} ({len(params.named_tensors())} tensors)")
    return path


class _Reader:
    def __init__(self, data: bytes, source: str) -> None:
        self.data = data
        self.offset = 0
        self.source = source

    def take(self, n: int, what: str) -> bytes:
        end = self.offset + n
        if end > len(self.data):
            raise CheckpointTruncatedError(
                f"{self.source}: file ends inside {what} (need {end} bytes, have {len(self.data)})"
            )
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def u32(self, what: str) -> int:
        return int(_U32.unpack(self.take(_U32.size, what))[0])

    @property
    def exhausted(self) -> bool:
        return self.offset == len(self.data)


def _expect(dims: Dict[str, Any], key: str, expected: Optional[int], source: str) -> None:
    if expected is not None and dims[key] != expected:
        raise CheckpointShapeError(
            f"{source}: checkpoint has {key}={dims[key]}, data needs {expected}"
        )


def _parse_metadata(header: bytes, source: str) -> Tuple[Dict[str, Any], CheckpointMeta]:
    """Decode the JSON header into the dims, tensor names and a :class:`CheckpointMeta`.

    Raises:
        CheckpointFormatError: Undecodable JSON or a missing or malformed key.
    """
    try:
        meta = json.loads(header.decode("utf-8"))
        dims = {key: meta["dims"][key] for key in _DIM_KEYS}
        layout = {
            "dims": dims,
            "modality_map": tuple(int(m) for m in meta["modality_map"]),
            "tensors": [str(name) for name in meta["tensors"]],
        }
        stats = ChannelStats.from_dict(meta["stats"]) if meta["stats"] else None
        parsed = CheckpointMeta(
            loss=LossConfig(
                variant=meta["variant"], lambda1=meta["lambda1"], lambda2=meta["lambda2"]
            ),
            stats=stats,
            class_names=tuple(str(c) for c in meta["class_names"]),
            window_length=meta["window_length"],
            extra=dict(meta["extra"] or {}),
        )
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointFormatError(f"{source}: unreadable metadata ({e})")
    except KeyError as e:
        raise CheckpointFormatError(f"{source}: metadata lacks {e}")
    except (TypeError, ValueError, ConfigError) as e:
        raise CheckpointFormatError(f"{source}: malformed metadata ({e})")
    return layout, parsed


def load_checkpoint(
    path: Path,
    input_size: Optional[int] = None,
    n_classes: Optional[int] = None,
) -> Tuple[ModelParams, CheckpointMeta]:
    """Read a checkpoint, optionally checking it against the data's D and C.

    Raises:
        DataError: If the file cannot be read.
        CheckpointFormatError: Bad magic bytes, undecodable or incomplete metadata, or bytes
            after the last tensor.
        CheckpointVersionError: Unsupported format version.
        CheckpointTruncatedError: The file ends before every listed tensor was read.
        CheckpointShapeError: Inconsistent tensors or dimensions other than expected.
    """
    source = str(path)
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise DataError(f"cannot read checkpoint {path}: {e}")

    reader = _Reader(data, source)
    if reader.take(len(MAGIC), "magic bytes") != MAGIC:
        raise CheckpointFormatError(f"{source}: not an attnhar checkpoint (bad magic bytes)")
    version = reader.u32("version")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{source}: format version {version}, this build reads {FORMAT_VERSION}"
        )
    layout, meta = _parse_metadata(reader.take(reader.u32("metadata length"), "metadata"), source)
    dims = layout["dims"]
    _expect(dims, "input_size", input_size, source)
    _expect(dims, "n_classes", n_classes, source)

    tensors: Dict[str, np.ndarray] = {}
    listed = layout["tensors"]
    for k, expected in enumerate(listed):
        if reader.exhausted:
            raise CheckpointTruncatedError(
                f"{source}: file ends before tensor '{expected}' ({k} of {len(listed)} read)"
            )
        name = reader.take(reader.u32("tensor name length"), "tensor name").decode("utf-8")
        if name != expected:
            raise CheckpointShapeError(f"{source}: found tensor '{name}', expected '{expected}'")
        rank = reader.u32(f"rank of {name}")
        shape = tuple(reader.u32(f"shape of {name}") for _ in range(rank))
        count = int(np.prod(shape, dtype=np.int64))
        raw = reader.take(count * _FLOAT.itemsize, f"values of {name}")
        tensors[name] = np.frombuffer(raw, dtype=_FLOAT).reshape(shape).astype(np.float64)
    if not reader.exhausted:
        raise CheckpointFormatError(
            f"{source}: {len(data) - reader.offset} unexpected bytes after the last tensor"
        )

    try:
        params = ModelParams.from_named(tensors, layout["modality_map"])
        params.check_variant(meta.loss.variant)
    except (ShapeError, ConfigError) as e:
        raise CheckpointShapeError(f"{source}: {e}")
    if params.dims.input_size != dims["input_size"]:
        raise CheckpointShapeError(f"{source}: tensors disagree with recorded dimensions")
    return params, meta
