"""Artifact writes: atomic, hashed and idempotent

Datasets, checkpoints, reports and walk exports all go through `FileStore`.
Content is written to a temporary sibling and moved into place with
`os.replace`, so a reader never sees a half-written checkpoint, and the
sha256 of every artifact is returned for the run manifest.
"""

import fcntl
import hashlib
import logging
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Literal, TypedDict, Union

logger = logging.getLogger(__name__)


def compute_sha256(content: Union[bytes, str]) -> str:
    if isinstance(content, str):
        content = content.encode("utf-8")
    return hashlib.sha256(content).hexdigest()


def hash_file(path: Path) -> str:
    """SHA256 of a file on disk, read in 1 MiB chunks"""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


class WriteResult(TypedDict):
    """
    Attributes:
        path: base_dir / relative path
        sha256: Hash of the bytes now on disk
        size_bytes: File size
        wrote: False when identical content was already there
        reason: created, overwritten or nochange
    """
    path: Path
    sha256: str
    size_bytes: int
    wrote: bool
    reason: Literal["created", "nochange", "overwritten"]


@contextmanager
def _locked(target: Path):
    """Serialize writers of one artifact through a `.lock` sidecar"""
    lock_path = target.with_name(target.name + ".lock")
    with open(lock_path, "w") as lock:
        fcntl.flock(lock.fileno(), fcntl.LOCK_EX)
        try:
            yield
        finally:
            fcntl.flock(lock.fileno(), fcntl.LOCK_UN)
            lock_path.unlink(missing_ok=True)


def _replace_atomically(target: Path, content: bytes) -> None:
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", suffix=".tmp", dir=target.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(content)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, target)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


class FileStore:
    """Artifact directory of one command (a run dir or a dataset folder)"""

    def __init__(self, base_dir: Path = Path(".")):
        self.base_dir = Path(base_dir)

    def resolve(self, path: Union[str, Path]) -> Path:
        return self.base_dir / Path(path)

    def safe_write(self, path: Union[str, Path], content: Union[str, bytes]) -> WriteResult:
        """
        Write `content` to `path` (relative to base_dir) unless the file
        already holds exactly these bytes.

        Returns:
            WriteResult describing the artifact on disk
        """
        target = self.resolve(path)
        data = content.encode("utf-8") if isinstance(content, str) else content
        digest = compute_sha256(data)
        target.parent.mkdir(parents=True, exist_ok=True)

        with _locked(target):
            existed = target.exists()
            if existed and hash_file(target) == digest:
                wrote, reason = False, "nochange"
            else:
                _replace_atomically(target, data)
                wrote, reason = True, "overwritten" if existed else "created"

        logger.debug("%s %s (%d bytes)", reason, target, len(data))
        return WriteResult(path=target, sha256=digest, size_bytes=len(data), wrote=wrote, reason=reason)
