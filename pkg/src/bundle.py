"""
Trained model bundle: parameters, normalization statistics and configuration

File layout (little-endian):

    offset 0   4 bytes   magic b"F0M1"
    offset 4   uint32    header length L
    offset 8   L bytes   UTF-8 JSON header {"format_version", "model", "train"}
    offset 8+L           float64 parameters in layer order, each layer's
                         weights row-major [out x in] then bias [out]
    then       2 x float64  NormStats (mean_log, std_log)

Nothing may follow the statistics.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional
import logging

import numpy as np

from src.errors import CorpusFormatError
from src.file_utils import atomic_write
from src.network import LayerParams, MLPModel, ModelConfig
from src.pitch import NormStats

logger = logging.getLogger(__name__)

BUNDLE_MAGIC = b"F0M1"
BUNDLE_VERSION = 1
FLOAT64_LE = np.dtype('<f8')


@dataclass
class TrainedBundle:
    """Everything needed to predict F0 from features"""
    model: MLPModel
    norm_stats: NormStats
    train_config: Dict[str, Any] = field(default_factory=dict)

    @property
    def input_dim(self) -> int:
        return self.model.input_dim


def bundle_to_bytes(bundle: TrainedBundle) -> bytes:
    header = json.dumps(
        {'format_version': BUNDLE_VERSION, 'model': bundle.model.config.to_dict(), 'train': bundle.train_config},
        sort_keys=True, separators=(',', ':'),
    ).encode('utf-8')

    parts = [BUNDLE_MAGIC, struct.pack('<I', len(header)), header]
    for _, param in bundle.model.named_parameters():
        parts.append(np.ascontiguousarray(param, dtype=FLOAT64_LE).tobytes())
    parts.append(np.array([bundle.norm_stats.mean_log, bundle.norm_stats.std_log], dtype=FLOAT64_LE).tobytes())
    return b"".join(parts)


def bundle_from_bytes(data: bytes, source: str = "<bytes>") -> TrainedBundle:
    if data[:4] != BUNDLE_MAGIC:
        raise CorpusFormatError(f"{source}: bad magic {data[:4]!r} at byte offset 0")
    if len(data) < 8:
        raise CorpusFormatError(f"{source}: truncated header at byte offset 4")
    (header_len,) = struct.unpack_from('<I', data, 4)
    try:
        header = json.loads(data[8:8 + header_len].decode('utf-8'))
        config = ModelConfig.from_dict(header['model'])
    except (ValueError, KeyError, TypeError) as e:
        raise CorpusFormatError(f"{source}: malformed header at byte offset 8: {e}") from None
    if header.get('format_version') != BUNDLE_VERSION:
        raise CorpusFormatError(f"{source}: unsupported bundle version {header.get('format_version')}")

    offset = 8 + header_len
    layers = []
    for in_dim, out_dim in config.layer_dims:
        arrays = []
        for count in (out_dim * in_dim, out_dim):
            end = offset + count * FLOAT64_LE.itemsize
            if end > len(data):
                raise CorpusFormatError(
                    f"{source}: truncated parameters at byte offset {offset}: expected "
                    f"{count * FLOAT64_LE.itemsize} bytes, got {len(data) - offset}"
                )
            arrays.append(np.frombuffer(data, dtype=FLOAT64_LE, count=count, offset=offset).astype(np.float64))
            offset = end
        layers.append(LayerParams(arrays[0].reshape(out_dim, in_dim), arrays[1]))

    if len(data) - offset != 2 * FLOAT64_LE.itemsize:
        raise CorpusFormatError(
            f"{source}: expected 16 bytes of normalization statistics at byte offset {offset}, "
            f"got {len(data) - offset}"
        )
    mean_log, std_log = np.frombuffer(data, dtype=FLOAT64_LE, count=2, offset=offset)
    try:
        norm_stats = NormStats(float(mean_log), float(std_log))
    except ValueError as e:
        raise CorpusFormatError(f"{source}: invalid normalization statistics at byte offset {offset}: {e}") from None

    return TrainedBundle(
        model=MLPModel(config, layers),
        norm_stats=norm_stats,
        train_config=header.get('train') or {},
    )


def save_bundle(bundle: TrainedBundle, path: str) -> None:
    """Write a bundle file atomically"""
    payload = bundle_to_bytes(bundle)
    with atomic_write(path, 'wb') as handle:
        handle.write(payload)
    logger.info(f"Saved bundle ({bundle.model.num_parameters()} parameters) to {path}")


def load_bundle(path: str) -> TrainedBundle:
    """Read a bundle file written by save_bundle()"""
    bundle = bundle_from_bytes(Path(path).read_bytes(), source=path)
    logger.info(f"Loaded bundle from {path}: layers {bundle.model.config.layer_dims}")
    return bundle


def bundle_summary(bundle: TrainedBundle, extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    summary = {
        'layers': [list(d) for d in bundle.model.config.layer_dims],
        'parameters': bundle.model.num_parameters(),
        'mean_log': bundle.norm_stats.mean_log,
        'std_log': bundle.norm_stats.std_log,
    }
    summary.update(extra or {})
    return summary
