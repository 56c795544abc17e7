from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Iterable, Tuple, Union


def file_digest(path: Union[str, Path]) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def named_digest(parts: Iterable[Tuple[str, Union[str, Path]]]) -> str:
    """sha256 over (name, file content) pairs, in the given order."""
    digest = hashlib.sha256()
    for name, path in parts:
        digest.update(name.encode("utf-8"))
        digest.update(b"\0")
        digest.update(Path(path).read_bytes())
    return digest.hexdigest()
