"""Atomic file output.

Every artifact is written to a temporary file in its destination directory
and renamed into place, so readers never see a half-written file.
"""
import logging
import os
import tempfile
from pathlib import Path

logger = logging.getLogger(__name__)


def _discard(tmp_name: str):
    try:
        os.unlink(tmp_name)
    except FileNotFoundError:
        pass


def write_temporary(path, data: bytes | str) -> str:
    """Write ``data`` to a synced temporary file beside ``path``; returns its name."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode('utf-8')
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f'.{path.name}.', suffix='.tmp', dir=path.parent)
    try:
        with os.fdopen(fd, 'wb') as handle:
            handle.write(data)
            handle.flush()
            os.fsync(handle.fileno())
    except BaseException:
        _discard(tmp_name)
        raise
    return tmp_name


def atomic_write(path, data: bytes | str) -> Path:
    """Write ``data`` to ``path`` through a temporary file and ``os.replace``."""
    path = Path(path)
    tmp_name = write_temporary(path, data)
    try:
        os.replace(tmp_name, path)
    except BaseException:
        _discard(tmp_name)
        raise
    logger.debug('wrote %s (%d bytes)', path, len(data))
    return path


class ArtifactBatch:
    """Collects the outputs of one command and commits them together.

    Used as a context manager: files are staged in memory and only written
    when the block exits without an exception. Committing first writes every
    file to a temporary beside its target and renames them only once all
    temporaries exist; a failed write leaves no target touched.
    """

    def __init__(self, directory=None):
        self.directory = Path(directory) if directory is not None else None
        self._staged: dict[Path, bytes] = {}

    def resolve(self, name) -> Path:
        path = Path(name)
        if not path.is_absolute() and self.directory is not None:
            path = self.directory / path
        return path

    def add(self, name, data: bytes | str) -> Path:
        path = self.resolve(name)
        self._staged[path] = data.encode('utf-8') if isinstance(data, str) else bytes(data)
        return path

    @property
    def paths(self) -> list[Path]:
        return list(self._staged)

    def commit(self) -> list[Path]:
        temporaries: list[tuple[str, Path]] = []
        try:
            for path, data in self._staged.items():
                temporaries.append((write_temporary(path, data), path))
        except BaseException:
            for tmp_name, _ in temporaries:
                _discard(tmp_name)
            raise
        written = []
        for index, (tmp_name, path) in enumerate(temporaries):
            try:
                os.replace(tmp_name, path)
            except BaseException:
                for leftover, _ in temporaries[index:]:
                    _discard(leftover)
                raise
            written.append(path)
        self._staged.clear()
        logger.debug('committed %d file(s)', len(written))
        return written

    def discard(self):
        self._staged.clear()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.commit()
        else:
            logger.warning('discarding %d staged output file(s) after error', len(self._staged))
            self.discard()
        return False
