from __future__ import annotations

import logging
import threading
from dataclasses import dataclass
from typing import Dict, List, Optional


@dataclass(frozen=True, order=True)
class Diagnostic:
    code: str
    image_id: str
    message: str

    def to_dict(self) -> Dict[str, str]:
        return {"code": self.code, "image_id": self.image_id, "message": self.message}


class Diagnostics:
    """Data-quality warnings collected during a run.

    Each entry is logged at WARNING when recorded; `entries()` is sorted so
    reports do not depend on worker scheduling.
    """

    def __init__(self, logger: Optional[logging.Logger] = None) -> None:
        self._logger = logger or logging.getLogger(__name__)
        self._entries: List[Diagnostic] = []
        self._lock = threading.Lock()

    def warn(self, code: str, message: str, image_id: str = "") -> None:
        self._logger.warning("%s%s", f"[{image_id}] " if image_id else "", message)
        with self._lock:
            self._entries.append(Diagnostic(code=code, image_id=image_id, message=message))

    def entries(self) -> List[Diagnostic]:
        with self._lock:
            return sorted(self._entries)

    def counts(self) -> Dict[str, int]:
        out: Dict[str, int] = {}
        for entry in self.entries():
            out[entry.code] = out.get(entry.code, 0) + 1
        return out

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def to_list(self) -> List[Dict[str, str]]:
        return [entry.to_dict() for entry in self.entries()]
