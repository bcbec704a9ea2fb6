"""Footprint polygons -> rooftop bounding boxes, COCO dataset I/O, and
merge of human refinements.

COCO files use the exact object-detection key names (images / annotations /
categories, bbox as [x, y, w, h]); annotations additionally carry a
"source" key ("auto" or "refined") to preserve provenance of human edits.
Writes are atomic (temp file + rename).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from .imagery import GeoTransform, world_to_pixel

ROOFTOP_CATEGORY_ID = 1


class CocoValidationError(ValueError):
    """A dataset record violates COCO structural rules; names the record."""


class RefinementError(ValueError):
    """A refinement edit references a record that does not exist."""


@dataclass(frozen=True)
class FootprintPolygon:
    """Closed ring of (x, y) world-coordinate vertices."""

    id: int
    vertices: tuple

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        if len(verts) > 1 and verts[0] == verts[-1]:
            verts = verts[:-1]  # explicit closure collapses to implicit
        if len(verts) < 3:
            raise ValueError(f"polygon {self.id} needs at least 3 distinct vertices")
        object.__setattr__(self, "vertices", verts)


@dataclass(frozen=True)
class GroundTruthBox:
    """Axis-aligned rooftop box in tile pixel coordinates."""

    x: float
    y: float
    w: float
    h: float
    category_id: int = ROOFTOP_CATEGORY_ID
    source: str = "auto"

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError("box needs positive width and height")


def polygon_to_mbr(p: FootprintPolygon) -> tuple[float, float, float, float]:
    """Minimum axis-aligned bounding rectangle (min_x, min_y, max_x, max_y)."""
    xs = [v[0] for v in p.vertices]
    ys = [v[1] for v in p.vertices]
    return min(xs), min(ys), max(xs), max(ys)


def box_to_tile_space(
    box: tuple[float, float, float, float],
    g: GeoTransform,
    tile_offset: tuple[int, int],
    tile_size: int,
    min_area_fraction: float = 0.25,
) -> GroundTruthBox | None:
    """Map a world-space MBR into one tile's pixel space.

    Clips to the tile; the box is dropped (None) when the clipped pixel area
    falls below min_area_fraction of the unclipped pixel area, so border
    slivers never become training targets.
    """
    min_x, min_y, max_x, max_y = box
    c0, r0 = world_to_pixel(min_x, min_y, g)
    c1, r1 = world_to_pixel(max_x, max_y, g)
    px0, px1 = min(c0, c1), max(c0, c1)
    py0, py1 = min(r0, r1), max(r0, r1)
    full_area = (px1 - px0) * (py1 - py0)
    if full_area <= 0:
        return None
    ox, oy = tile_offset
    tx0 = max(px0 - ox, 0.0)
    ty0 = max(py0 - oy, 0.0)
    tx1 = min(px1 - ox, float(tile_size))
    ty1 = min(py1 - oy, float(tile_size))
    w, h = tx1 - tx0, ty1 - ty0
    if w <= 0 or h <= 0:
        return None
    if w * h / full_area < min_area_fraction:
        return None
    return GroundTruthBox(x=tx0, y=ty0, w=w, h=h)


# --------------------------------------------------------------------------
# COCO dataset structures
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CocoImage:
    id: int
    width: int
    height: int
    file_name: str


@dataclass(frozen=True)
class CocoAnnotation:
    id: int
    image_id: int
    category_id: int
    bbox: tuple  # (x, y, w, h)
    area: float
    iscrowd: int = 0
    source: str = "auto"

    def __post_init__(self):
        object.__setattr__(self, "bbox", tuple(float(v) for v in self.bbox))


@dataclass(frozen=True)
class CocoCategory:
    id: int
    name: str = "rooftop"


@dataclass
class CocoDataset:
    images: list = field(default_factory=list)
    annotations: list = field(default_factory=list)
    categories: list = field(default_factory=lambda: [CocoCategory(ROOFTOP_CATEGORY_ID)])

    def image_by_id(self, image_id: int) -> CocoImage:
        for img in self.images:
            if img.id == image_id:
                return img
        raise KeyError(f"no image with id {image_id}")

    def validate(self) -> None:
        image_ids = set()
        for img in self.images:
            if img.id in image_ids:
                raise CocoValidationError(f"duplicate image id {img.id}")
            image_ids.add(img.id)
            if img.width < 1 or img.height < 1:
                raise CocoValidationError(f"image {img.id} has non-positive dims")
        category_ids = set()
        for cat in self.categories:
            if cat.id in category_ids:
                raise CocoValidationError(f"duplicate category id {cat.id}")
            category_ids.add(cat.id)
        ann_ids = set()
        by_image = {img.id: img for img in self.images}
        for ann in self.annotations:
            if ann.id in ann_ids:
                raise CocoValidationError(f"duplicate annotation id {ann.id}")
            ann_ids.add(ann.id)
            if ann.image_id not in by_image:
                raise CocoValidationError(
                    f"annotation {ann.id} references missing image {ann.image_id}"
                )
            if ann.category_id not in category_ids:
                raise CocoValidationError(
                    f"annotation {ann.id} references missing category {ann.category_id}"
                )
            x, y, w, h = ann.bbox
            if w <= 0 or h <= 0:
                raise CocoValidationError(f"annotation {ann.id} has non-positive bbox dims")
            img = by_image[ann.image_id]
            if x < 0 or y < 0 or x + w > img.width + 1e-6 or y + h > img.height + 1e-6:
                raise CocoValidationError(f"annotation {ann.id} bbox exceeds image {img.id} bounds")
            if abs(ann.area - w * h) > 1e-6 * max(1.0, w * h):
                raise CocoValidationError(f"annotation {ann.id} area {ann.area} != w*h {w * h}")
            if ann.iscrowd != 0:
                raise CocoValidationError(f"annotation {ann.id}: iscrowd must be 0")


def write_coco(d: CocoDataset, path) -> None:
    d.validate()
    payload = {
        "images": [
            {"id": i.id, "width": i.width, "height": i.height, "file_name": i.file_name}
            for i in d.images
        ],
        "annotations": [
            {
                "id": a.id,
                "image_id": a.image_id,
                "category_id": a.category_id,
                "bbox": list(a.bbox),
                "area": a.area,
                "iscrowd": a.iscrowd,
                "source": a.source,
            }
            for a in d.annotations
        ],
        "categories": [{"id": c.id, "name": c.name} for c in d.categories],
    }
    tmp = str(path) + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(payload, fh, indent=2)
    os.replace(tmp, path)


def read_coco(path) -> CocoDataset:
    with open(path) as fh:
        payload = json.load(fh)
    for key in ("images", "annotations", "categories"):
        if key not in payload:
            raise CocoValidationError(f"{path}: missing top-level '{key}' collection")
    try:
        ds = CocoDataset(
            images=[
                CocoImage(int(i["id"]), int(i["width"]), int(i["height"]), str(i["file_name"]))
                for i in payload["images"]
            ],
            annotations=[
                CocoAnnotation(
                    id=int(a["id"]),
                    image_id=int(a["image_id"]),
                    category_id=int(a["category_id"]),
                    bbox=tuple(a["bbox"]),
                    area=float(a["area"]),
                    iscrowd=int(a.get("iscrowd", 0)),
                    source=str(a.get("source", "auto")),
                )
                for a in payload["annotations"]
            ],
            categories=[CocoCategory(int(c["id"]), str(c["name"])) for c in payload["categories"]],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CocoValidationError(f"{path}: malformed record ({exc})") from exc
    ds.validate()
    return ds


# --------------------------------------------------------------------------
# Refinement log (line-delimited JSON records)
# --------------------------------------------------------------------------

EDIT_OPS = ("replace", "delete", "add")


@dataclass(frozen=True)
class RefinementEdit:
    op: str
    annotation_id: int
    image_id: int
    bbox: tuple | None = None

    def __post_init__(self):
        if self.op not in EDIT_OPS:
            raise ValueError(f"unknown edit op {self.op!r}")
        if self.op in ("replace", "add") and (self.bbox is None or len(self.bbox) != 4):
            raise ValueError(f"{self.op} edit needs a 4-element bbox")
        if self.bbox is not None:
            object.__setattr__(self, "bbox", tuple(float(v) for v in self.bbox))


def write_refinement_log(edits: Iterable[RefinementEdit], path) -> None:
    tmp = str(path) + ".tmp"
    with open(tmp, "w") as fh:
        for e in edits:
            fh.write(_edit_line(e))
    os.replace(tmp, path)


def append_refinement(edit: RefinementEdit, path) -> None:
    with open(path, "a") as fh:
        fh.write(_edit_line(edit))


def _edit_line(e: RefinementEdit) -> str:
    rec = {"op": e.op, "annotation_id": e.annotation_id, "image_id": e.image_id}
    if e.bbox is not None:
        rec["bbox"] = list(e.bbox)
    return json.dumps(rec) + "\n"


def read_refinement_log(path) -> list[RefinementEdit]:
    edits = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                edits.append(
                    RefinementEdit(
                        op=rec["op"],
                        annotation_id=int(rec["annotation_id"]),
                        image_id=int(rec["image_id"]),
                        bbox=tuple(rec["bbox"]) if rec.get("bbox") is not None else None,
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed edit record ({exc})") from exc
    return edits


def merge_refinements(auto: CocoDataset, edits: Sequence[RefinementEdit]) -> CocoDataset:
    """Apply human edits over the auto-generated dataset.

    replace: new bbox (area recomputed, source becomes "refined")
    delete:  remove the annotation; deleting an already-absent id is a no-op
             so replaying a log is idempotent
    add:     new annotation (id from the edit, or allocated past the max)
    """
    image_ids = {img.id for img in auto.images}
    anns = {a.id: a for a in auto.annotations}
    order = [a.id for a in auto.annotations]
    next_id = max(anns, default=0) + 1
    for e in edits:
        if e.image_id not in image_ids:
            raise RefinementError(f"edit references unknown image id {e.image_id}")
        if e.op == "replace":
            if e.annotation_id not in anns:
                raise RefinementError(f"replace references unknown annotation id {e.annotation_id}")
            x, y, w, h = e.bbox
            anns[e.annotation_id] = replace(
                anns[e.annotation_id], bbox=e.bbox, area=w * h, source="refined"
            )
        elif e.op == "delete":
            if e.annotation_id in anns:
                del anns[e.annotation_id]
                order.remove(e.annotation_id)
        else:  # add
            new_id = e.annotation_id if e.annotation_id > 0 else next_id
            if new_id in anns:
                raise RefinementError(f"add would duplicate annotation id {new_id}")
            x, y, w, h = e.bbox
            anns[new_id] = CocoAnnotation(
                id=new_id,
                image_id=e.image_id,
                category_id=ROOFTOP_CATEGORY_ID,
                bbox=e.bbox,
                area=w * h,
                source="refined",
            )
            order.append(new_id)
            next_id = max(next_id, new_id + 1)
    merged = CocoDataset(
        images=list(auto.images),
        annotations=[anns[i] for i in order],
        categories=list(auto.categories),
    )
    merged.validate()
    return merged
