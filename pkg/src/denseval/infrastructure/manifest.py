"""
Dataset manifest reader.

A manifest is a JSON object mapping split name to a list of entries. Each
entry is either an `[image, labels]` pair or an object with `image` and
`labels` keys; `image` may be null when no intensity image exists. Paths are
resolved relative to the manifest file.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, RootModel, ValidationError, model_validator

from ..domain.errors import ManifestError
from .digests import file_digest, named_digest

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class ManifestEntryModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    image: Optional[str] = None
    labels: str

    @model_validator(mode="before")
    @classmethod
    def _from_pair(cls, value):
        if isinstance(value, (list, tuple)):
            if len(value) != 2:
                raise ValueError(f"entry must be an [image, labels] pair, got {len(value)} items")
            return {"image": value[0], "labels": value[1]}
        return value


class ManifestModel(RootModel[Dict[str, List[ManifestEntryModel]]]):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    labels: Path
    image: Optional[Path] = None


@dataclass(frozen=True)
class DatasetManifest:
    path: Path
    splits: Tuple[Tuple[str, Tuple[ManifestEntry, ...]], ...]

    @property
    def split_names(self) -> Tuple[str, ...]:
        return tuple(name for name, _ in self.splits)

    def entries(self, split: str) -> Tuple[ManifestEntry, ...]:
        for name, entries in self.splits:
            if name == split:
                return entries
        raise ManifestError(
            f"{self.path}: split '{split}' not found; available: {', '.join(self.split_names) or 'none'}"
        )

    def digest(self) -> str:
        return file_digest(self.path)

    def label_digest(self, split: str) -> str:
        return named_digest((entry.image_id, entry.labels) for entry in self.entries(split))


def load_manifest(path: PathLike) -> DatasetManifest:
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON ({exc})") from exc
    try:
        model = ManifestModel.model_validate(document)
    except ValidationError as exc:
        raise ManifestError(f"{path}: {exc}") from exc

    base = path.parent
    splits = []
    for split, raw_entries in model.root.items():
        entries: List[ManifestEntry] = []
        seen = set()
        for raw in raw_entries:
            labels = base / raw.labels
            image_id = labels.stem
            if image_id in seen:
                raise ManifestError(f"{path}: duplicate image id '{image_id}' in split '{split}'")
            seen.add(image_id)
            image = base / raw.image if raw.image else None
            entries.append(ManifestEntry(image_id=image_id, labels=labels, image=image))
        splits.append((split, tuple(entries)))
    logger.info("Loaded manifest %s with splits %s", path, ", ".join(s for s, _ in splits))
    return DatasetManifest(path=path, splits=tuple(splits))


def manifest_document(splits: Dict[str, List[Tuple[Optional[str], str]]]) -> Dict[str, list]:
    return {
        split: [{"image": image, "labels": labels} for image, labels in entries] for split, entries in splits.items()
    }
