from __future__ import annotations

from typing import Dict, List, Protocol, Tuple

from .masks import PredictionSet


class PredictionSourceProtocol(Protocol):
    """Anything that yields per-image prediction sets for a set of lattices."""

    def load(self, lattices: Dict[str, Tuple[int, int]]) -> List[PredictionSet]: ...

    def digest(self) -> str: ...
