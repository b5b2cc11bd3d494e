"""
File helpers shared by every writer
"""

import os
import tempfile
from contextlib import contextmanager
from datetime import datetime
from typing import Any, Dict, Iterator, IO, List
import logging

logger = logging.getLogger(__name__)


@contextmanager
def atomic_write(path: str, mode: str = 'wb') -> Iterator[IO]:
    """
    Write to a temporary file next to ``path`` and rename it into place

    Nothing is left at ``path`` if the body raises.

    Args:
        path (str): destination
        mode (str): 'w' for text or 'wb' for bytes
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(prefix='.tmp_', suffix=os.path.basename(path), dir=directory)
    try:
        encoding = None if 'b' in mode else 'utf-8'
        newline = None if 'b' in mode else ''
        with os.fdopen(fd, mode, encoding=encoding, newline=newline) as handle:
            yield handle
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def get_file_info(file_path: str) -> Dict[str, Any]:
    """
    Get basic information about a file

    Args:
        file_path (str): Path to the file

    Returns:
        Dict: File information
    """
    try:
        stat = os.stat(file_path)
        return {
            "size_bytes": stat.st_size,
            "modified": datetime.fromtimestamp(stat.st_mtime).isoformat(),
            "extension": os.path.splitext(file_path)[1].lower()
        }
    except Exception as e:
        return {"error": str(e)}


def _staging_path(path: str) -> str:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, staged = tempfile.mkstemp(prefix='.staged_', suffix=os.path.basename(path), dir=directory)
    os.close(fd)
    return staged


@contextmanager
def commit_together(*paths: str) -> Iterator[List[str]]:
    """
    Stage several outputs and move them into place only when all were written

    The body writes to the yielded staging paths, in the order of ``paths``.
    If the body raises, no destination is touched. If a rename fails, outputs
    already moved that did not exist before are removed again.

    Args:
        *paths (str): final destinations

    Yields:
        List[str]: staging paths next to each destination
    """
    staged: List[str] = []
    try:
        for path in paths:
            staged.append(_staging_path(path))
        yield staged
    except BaseException:
        for tmp in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)
        raise

    existed = [os.path.exists(p) for p in paths]
    moved: List[str] = []
    try:
        for tmp, path in zip(staged, paths):
            os.replace(tmp, path)
            moved.append(path)
    except BaseException:
        for path, was_there in zip(moved, existed):
            if not was_there:
                os.unlink(path)
        for tmp in staged[len(moved):]:
            if os.path.exists(tmp):
                os.unlink(tmp)
        raise
    logger.debug(f"Committed {len(paths)} outputs: {list(paths)}")
