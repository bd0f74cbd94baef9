"""Opening plain or gzip-compressed UTF-8 text."""
from __future__ import annotations

import gzip
import io
import os

_GZIP_MAGIC = b"\x1f\x8b"


def open_text(path: str | os.PathLike, mode: str = "r"):
    """Open ``path`` for text I/O, transparently handling gzip.

    Reading sniffs the magic bytes; writing compresses when the name ends
    in ``.gz``. Output always uses ``\\n`` line endings.
    """
    path = os.fspath(path)
    if "r" in mode:
        with open(path, "rb") as fh:
            magic = fh.read(2)
        if magic == _GZIP_MAGIC:
            return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8")
        return open(path, "r", encoding="utf-8", newline="\n")
    if path.endswith(".gz"):
        return io.TextIOWrapper(gzip.open(path, "wb"), encoding="utf-8", newline="\n")
    return open(path, mode, encoding="utf-8", newline="\n")
