"""
Prediction inputs.

Two on-disk forms are accepted: a JSON prediction index and a directory of
YOLO polygon label files with a trailing confidence per line. Both implement
`PredictionSourceProtocol`.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..domain.errors import EvaluationError, GeometryError, PredictionIndexError
from ..domain.masks import InstanceMask, Polygon, PredictionSet, ScoredInstance
from ..domain.protocols import PredictionSourceProtocol
from ..geometry.raster import rasterize_polygon, rle_decode, rle_encode
from .digests import file_digest, named_digest
from .mask_io import parse_polygon_labels

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class PredictionItemModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    confidence: float = Field(ge=0.0, le=1.0)
    polygon: Optional[List[float]] = None
    rle: Optional[List[int]] = None

    @model_validator(mode="after")
    def _one_geometry(self) -> "PredictionItemModel":
        if (self.polygon is None) == (self.rle is None):
            raise ValueError("item needs exactly one of 'polygon' or 'rle'")
        if self.polygon is not None:
            if len(self.polygon) % 2:
                raise ValueError("polygon has an odd coordinate count")
            if len(self.polygon) < 6:
                raise ValueError("polygon needs at least 3 vertices")
            if any(not (0.0 <= v <= 1.0) for v in self.polygon):
                raise ValueError("polygon coordinate outside [0,1]")
        if self.rle is not None and any(r < 0 for r in self.rle):
            raise ValueError("RLE runs must be non-negative")
        return self


class PredictionImageModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    image_id: str = Field(min_length=1)
    width: int = Field(ge=1)
    height: int = Field(ge=1)
    items: List[PredictionItemModel] = Field(default_factory=list)

    @model_validator(mode="after")
    def _rle_lengths(self) -> "PredictionImageModel":
        total = self.width * self.height
        for position, item in enumerate(self.items):
            if item.rle is not None and sum(item.rle) != total:
                raise ValueError(
                    f"item {position}: RLE length mismatch, runs sum to {sum(item.rle)} but W*H = {total}"
                )
        return self


class PredictionIndexModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    images: List[PredictionImageModel]

    @model_validator(mode="after")
    def _unique_ids(self) -> "PredictionIndexModel":
        seen = set()
        for image in self.images:
            if image.image_id in seen:
                raise ValueError(f"duplicate image_id '{image.image_id}'")
            seen.add(image.image_id)
        return self


def _to_prediction_set(image: PredictionImageModel) -> PredictionSet:
    items = []
    for position, item in enumerate(image.items):
        if item.polygon is not None:
            vertices = tuple(zip(item.polygon[0::2], item.polygon[1::2]))
            geometry: Union[Polygon, InstanceMask] = Polygon(vertices=vertices, confidence=item.confidence)
        else:
            geometry = rle_decode(item.rle, image.width, image.height, instance_id=position + 1)
        items.append(ScoredInstance(geometry=geometry, confidence=item.confidence, source_index=position))
    return PredictionSet(image.image_id, image.width, image.height, tuple(items))


def parse_prediction_index(document: object, source: str = "<prediction index>") -> List[PredictionSet]:
    try:
        model = PredictionIndexModel.model_validate(document)
    except ValidationError as exc:
        raise PredictionIndexError(f"{source}: {exc}") from exc
    try:
        return [_to_prediction_set(image) for image in model.images]
    except GeometryError as exc:
        raise PredictionIndexError(f"{source}: {exc}") from exc


def load_prediction_index(path: PathLike) -> List[PredictionSet]:
    """Read the JSON prediction index into one PredictionSet per listed image."""
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise PredictionIndexError(f"{path}: invalid JSON ({exc})") from exc
    sets = parse_prediction_index(document, source=str(path))
    logger.info("Loaded %d prediction sets from %s", len(sets), path)
    return sets


def prediction_index_document(sets: Sequence[PredictionSet], use_rle: bool = True) -> Dict[str, object]:
    images = []
    for pred in sets:
        items = []
        for item in pred.items:
            geometry = item.geometry
            if use_rle or not isinstance(geometry, Polygon):
                if isinstance(geometry, Polygon):
                    geometry = rasterize_polygon(geometry, pred.width, pred.height)
                items.append({"confidence": item.confidence, "rle": rle_encode(geometry)})
            else:
                coords = [round(v, 6) for xy in geometry.vertices for v in xy]
                items.append({"confidence": item.confidence, "polygon": coords})
        images.append({"image_id": pred.image_id, "width": pred.width, "height": pred.height, "items": items})
    return {"images": images}


def save_prediction_index(sets: Sequence[PredictionSet], path: PathLike, use_rle: bool = True) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = prediction_index_document(sets, use_rle=use_rle)
    path.write_text(json.dumps(document, separators=(",", ":"), sort_keys=True) + "\n", encoding="utf-8")


def _check_lattices(sets: Sequence[PredictionSet], lattices: Dict[str, Tuple[int, int]], source: str) -> None:
    for pred in sets:
        expected = lattices.get(pred.image_id)
        if expected is not None and expected != (pred.width, pred.height):
            raise PredictionIndexError(
                f"{source}: image {pred.image_id} is {pred.width}x{pred.height}, "
                f"ground truth is {expected[0]}x{expected[1]}"
            )


class PredictionIndexSource(PredictionSourceProtocol):
    def __init__(self, path: PathLike) -> None:
        self.path = Path(path)

    def load(self, lattices: Dict[str, Tuple[int, int]]) -> List[PredictionSet]:
        sets = load_prediction_index(self.path)
        _check_lattices(sets, lattices, str(self.path))
        return sets

    def digest(self) -> str:
        return file_digest(self.path)


class PolygonLabelDirectorySource(PredictionSourceProtocol):
    """Directory of `<image_id>.txt` YOLO label files with confidences.

    Label files carry no lattice size, so each file is sized by the ground
    truth image of the same id.
    """

    def __init__(self, directory: PathLike) -> None:
        self.directory = Path(directory)

    def _files(self) -> List[Path]:
        return sorted(p for p in self.directory.iterdir() if p.suffix == ".txt")

    def load(self, lattices: Dict[str, Tuple[int, int]]) -> List[PredictionSet]:
        files = self._files()
        orphans = [p.stem for p in files if p.stem not in lattices]
        if orphans:
            raise EvaluationError("prediction files without ground truth", orphans)
        sets = []
        for path in files:
            width, height = lattices[path.stem]
            text = path.read_text(encoding="utf-8")
            sets.append(
                parse_polygon_labels(
                    text, width, height, expect_confidence=True, image_id=path.stem, source=str(path)
                )
            )
        logger.info("Loaded %d prediction label files from %s", len(sets), self.directory)
        return sets

    def digest(self) -> str:
        return named_digest((path.name, path) for path in self._files())


def open_prediction_source(path: PathLike) -> PredictionSourceProtocol:
    path = Path(path)
    if path.is_dir():
        return PolygonLabelDirectorySource(path)
    return PredictionIndexSource(path)
