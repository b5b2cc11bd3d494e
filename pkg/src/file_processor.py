"""
Corpus container reading/writing and CSV corpus import

Container layout (all integers little-endian):

    offset 0   4 bytes   magic b"F0C1"
    offset 4   uint32    manifest length L in bytes
    offset 8   L bytes   UTF-8 JSON manifest
    offset 8+L           payload: per utterance, in manifest order,
                         bn as row-major float32 LE [T x D_bn],
                         xvec as float32 LE [D_xv],
                         f0 as float32 LE [T] (Hz, 0 = unvoiced)

The manifest holds format version, bn_dim, xvec_dim and, per utterance,
utt_id, speaker_id, group, n_frames, hop, window and the payload offset
(relative to the payload start).
"""

import json
import os
import struct
from pathlib import Path
from typing import Any, Dict, List, Sequence
import logging

import numpy as np
import pandas as pd

from src.config import Config
from src.data_processor import UtteranceRecord
from src.errors import ConfigurationError, CorpusFormatError, ShapeError
from src.file_utils import atomic_write
from src.pitch import F0Trajectory

# Configure logging
logger = logging.getLogger(__name__)

CORPUS_MAGIC = b"F0C1"
CORPUS_VERSION = 1
FLOAT32_LE = np.dtype('<f4')


class CorpusValidator:
    """Manifest validation for the corpus container"""

    REQUIRED_KEYS = ('version', 'bn_dim', 'xvec_dim', 'utterances')
    REQUIRED_UTT_KEYS = ('utt_id', 'speaker_id', 'n_frames', 'offset')

    @classmethod
    def validate_manifest(cls, manifest: Any, offset: int) -> None:
        if not isinstance(manifest, dict):
            raise CorpusFormatError(f"malformed header at byte offset {offset}: manifest is not an object")
        missing = [k for k in cls.REQUIRED_KEYS if k not in manifest]
        if missing:
            raise CorpusFormatError(f"malformed header at byte offset {offset}: missing keys {missing}")
        if manifest['version'] != CORPUS_VERSION:
            raise CorpusFormatError(f"unsupported corpus version {manifest['version']}")
        for entry in manifest['utterances']:
            absent = [k for k in cls.REQUIRED_UTT_KEYS if k not in entry]
            if absent:
                raise CorpusFormatError(
                    f"malformed header at byte offset {offset}: utterance entry lacks {absent}"
                )


def _utterance_nbytes(n_frames: int, bn_dim: int, xvec_dim: int) -> int:
    return FLOAT32_LE.itemsize * (n_frames * bn_dim + xvec_dim + n_frames)


def save_corpus(utterances: Sequence[UtteranceRecord], path: str) -> None:
    """
    Write utterances to a corpus container

    Args:
        utterances (Sequence[UtteranceRecord]): records with consistent dimensions
        path (str): destination file
    """
    if not utterances:
        raise ShapeError("cannot save an empty corpus")
    bn_dim, xvec_dim = utterances[0].bn_dim, utterances[0].xvec_dim

    entries = []
    offset = 0
    for utt in utterances:
        if utt.bn_dim != bn_dim or utt.xvec_dim != xvec_dim:
            raise ShapeError(f"utterance '{utt.utt_id}' does not match corpus dims ({bn_dim}, {xvec_dim})")
        entries.append({
            'utt_id': utt.utt_id,
            'speaker_id': utt.speaker_id,
            'group': utt.group,
            'n_frames': utt.n_frames,
            'hop': utt.f0.hop,
            'window': utt.f0.window,
            'offset': offset,
        })
        offset += _utterance_nbytes(utt.n_frames, bn_dim, xvec_dim)

    manifest = {'version': CORPUS_VERSION, 'bn_dim': bn_dim, 'xvec_dim': xvec_dim, 'utterances': entries}
    header = json.dumps(manifest, sort_keys=True, separators=(',', ':')).encode('utf-8')

    with atomic_write(path, 'wb') as handle:
        handle.write(CORPUS_MAGIC)
        handle.write(struct.pack('<I', len(header)))
        handle.write(header)
        for utt in utterances:
            handle.write(np.ascontiguousarray(utt.bn, dtype=FLOAT32_LE).tobytes())
            handle.write(np.ascontiguousarray(utt.xvec, dtype=FLOAT32_LE).tobytes())
            handle.write(np.ascontiguousarray(utt.f0.values, dtype=FLOAT32_LE).tobytes())

    logger.info(f"Saved {len(utterances)} utterances ({offset} payload bytes) to {path}")


def load_corpus(path: str) -> List[UtteranceRecord]:
    """
    Read a corpus container

    Args:
        path (str): container file

    Returns:
        List[UtteranceRecord]: records in file order
    """
    data = Path(path).read_bytes()

    if data[:4] != CORPUS_MAGIC:
        raise CorpusFormatError(f"{path}: bad magic {data[:4]!r} at byte offset 0")
    if len(data) < 8:
        raise CorpusFormatError(f"{path}: truncated header at byte offset 4")
    (header_len,) = struct.unpack_from('<I', data, 4)
    if 8 + header_len > len(data):
        raise CorpusFormatError(
            f"{path}: truncated manifest at byte offset 8: expected {header_len} bytes, "
            f"got {len(data) - 8}"
        )
    try:
        manifest = json.loads(data[8:8 + header_len].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorpusFormatError(f"{path}: malformed header at byte offset 8: {e}") from None
    CorpusValidator.validate_manifest(manifest, 8)

    bn_dim, xvec_dim = int(manifest['bn_dim']), int(manifest['xvec_dim'])
    if bn_dim < 1 or xvec_dim < 1:
        raise CorpusFormatError(f"{path}: malformed header at byte offset 8: dims ({bn_dim}, {xvec_dim})")
    payload_start = 8 + header_len
    running = 0
    records = []
    for entry in manifest['utterances']:
        utt_id = entry['utt_id']
        n_frames = int(entry['n_frames'])
        # entries are packed back to back
        if int(entry['offset']) != running or n_frames < 0:
            raise CorpusFormatError(
                f"{path}: dimension mismatch for utterance '{utt_id}' at byte offset {payload_start + running}: "
                f"manifest offset {entry['offset']}, layout ({n_frames} frames, bn_dim {bn_dim}, "
                f"xvec_dim {xvec_dim}) implies {running}"
            )
        start = payload_start + running
        expected = _utterance_nbytes(n_frames, bn_dim, xvec_dim)
        running += expected
        available = max(0, min(len(data) - start, expected))
        if available < expected:
            raise CorpusFormatError(
                f"{path}: truncated payload for utterance '{utt_id}' at byte offset {start}: "
                f"expected {expected} bytes, got {available}"
            )

        values = np.frombuffer(data, dtype=FLOAT32_LE, count=expected // 4, offset=start)
        bn_end = n_frames * bn_dim
        records.append(UtteranceRecord(
            utt_id=utt_id,
            speaker_id=entry['speaker_id'],
            bn=values[:bn_end].reshape(n_frames, bn_dim).astype(np.float32),
            xvec=values[bn_end:bn_end + xvec_dim].astype(np.float32),
            f0=F0Trajectory(
                values[bn_end + xvec_dim:].astype(np.float32),
                hop=float(entry.get('hop', 0.010)),
                window=float(entry.get('window', 0.025)),
            ),
            group=entry.get('group', ''),
        ))

    end = payload_start + running
    if end != len(data):
        raise CorpusFormatError(
            f"{path}: dimension mismatch at byte offset {end}: payload ends there but the file has "
            f"{len(data)} bytes"
        )

    logger.info(f"Loaded {len(records)} utterances from {path}")
    return records


def load_corpus_csv(manifest_path: str) -> List[UtteranceRecord]:
    """
    Import a small hand-written corpus from CSV

    The manifest CSV has columns ``utt_id,speaker_id,frames,xvec`` and an
    optional ``group``. ``frames`` names a per-utterance CSV (relative to the
    manifest) with an ``f0_hz`` column followed by BN columns; ``xvec`` is a
    space-separated list of floats.

    Args:
        manifest_path (str): manifest CSV path

    Returns:
        List[UtteranceRecord]: records in manifest order
    """
    manifest = pd.read_csv(manifest_path, dtype=str, keep_default_na=False)
    missing = {'utt_id', 'speaker_id', 'frames', 'xvec'} - set(manifest.columns)
    if missing:
        raise CorpusFormatError(f"{manifest_path}: manifest lacks columns {sorted(missing)}")

    base_dir = os.path.dirname(os.path.abspath(manifest_path))
    records = []
    for row in manifest.itertuples(index=False):
        frames = pd.read_csv(os.path.join(base_dir, row.frames))
        if 'f0_hz' not in frames.columns:
            raise CorpusFormatError(f"{row.frames}: frame CSV lacks an f0_hz column")
        bn_columns = [c for c in frames.columns if c != 'f0_hz']
        xvec = np.array([float(v) for v in row.xvec.split()], dtype=np.float32)
        records.append(UtteranceRecord(
            utt_id=row.utt_id,
            speaker_id=row.speaker_id,
            bn=frames[bn_columns].to_numpy(dtype=np.float32),
            xvec=xvec,
            f0=F0Trajectory(frames['f0_hz'].to_numpy(dtype=np.float32)),
            group=getattr(row, 'group', ''),
        ))

    logger.info(f"Imported {len(records)} utterances from {manifest_path}")
    return records


def read_corpus(path: str) -> List[UtteranceRecord]:
    """Load a container (.f0c) or a CSV manifest (.csv) by extension"""
    kind = Config.CORPUS_EXTENSIONS.get(Path(path).suffix.lower())
    if kind is None:
        raise ConfigurationError(
            f"Unsupported corpus file type: {path}; expected one of {sorted(Config.CORPUS_EXTENSIONS)}"
        )
    if kind == 'csv_manifest':
        return load_corpus_csv(path)
    return load_corpus(path)


def corpus_summary(utterances: Sequence[UtteranceRecord]) -> Dict[str, Any]:
    """Speaker, utterance and voiced-frame counts"""
    return {
        'speakers': len({u.speaker_id for u in utterances}),
        'utterances': len(utterances),
        'frames': int(sum(u.n_frames for u in utterances)),
        'voiced_frames': int(sum(int(u.f0.voiced.sum()) for u in utterances)),
    }
