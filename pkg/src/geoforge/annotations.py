"""Images, oriented-box instances, manifest loading and pseudo-label merging."""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from geoforge.geometry import OrientedBox, clamp_to_image, min_area_rect, rotated_iou

log = logging.getLogger(__name__)


class SourceDataset(enum.Enum):
    DOTA = "DOTA"
    DIOR = "DIOR"
    FAIR1M = "FAIR1M"
    OTHER = "OTHER"


class Provenance(enum.Enum):
    GROUND_TRUTH = "ground_truth"
    PSEUDO_LABEL = "pseudo_label"


# Built-in class registries for the object-detection sources.
DOTA_CLASSES = (
    "plane", "ship", "storage-tank", "baseball-diamond", "tennis-court",
    "basketball-court", "ground-track-field", "harbor", "bridge",
    "large-vehicle", "small-vehicle", "helicopter", "roundabout",
    "soccer-ball-field", "swimming-pool", "container-crane", "airport", "helipad",
)
DIOR_CLASSES = (
    "airplane", "airport", "baseballfield", "basketballcourt", "bridge",
    "chimney", "dam", "expressway-service-area", "expressway-toll-station",
    "golffield", "groundtrackfield", "harbor", "overpass", "ship", "stadium",
    "storagetank", "tenniscourt", "trainstation", "vehicle", "windmill",
)
FAIR1M_CLASSES = (
    "boeing737", "boeing747", "boeing777", "boeing787", "c919", "a220", "a321",
    "a330", "a350", "arj21", "other-airplane",
    "passenger ship", "motorboat", "fishing boat", "tugboat", "engineering ship",
    "liquid cargo ship", "dry cargo ship", "warship", "other-ship",
    "small car", "bus", "cargo truck", "dump truck", "van", "trailer", "tractor",
    "excavator", "truck tractor", "other-vehicle",
    "basketball court", "tennis court", "football field", "baseball field",
    "intersection", "roundabout", "bridge",
)
REGISTRIES: dict[str, tuple[str, ...]] = {
    "DOTA": DOTA_CLASSES,
    "DIOR": DIOR_CLASSES,
    "FAIR1M": FAIR1M_CLASSES,
}


class ManifestError(ValueError):
    """Malformed or invalid manifest record."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


@dataclass(frozen=True)
class QAPair:
    question: str
    answer: str | None
    category: str = "presence"


@dataclass(frozen=True)
class ImageMeta:
    id: str
    path: str
    width: int
    height: int
    source_dataset: SourceDataset = SourceDataset.OTHER
    scene_label: str | None = None
    qa: tuple[QAPair, ...] = ()

    def __post_init__(self) -> None:
        if not isinstance(self.width, int) or not isinstance(self.height, int):
            raise ValueError("image dimensions must be integers")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image {self.id!r} has nonpositive size {self.width}x{self.height}")


@dataclass(frozen=True)
class ObbInstance:
    instance_id: str
    class_name: str
    box: OrientedBox
    provenance: Provenance = Provenance.GROUND_TRUTH


@dataclass(frozen=True)
class Corpus:
    images: tuple[ImageMeta, ...]
    instances: Mapping[str, tuple[ObbInstance, ...]]
    class_registry: tuple[str, ...]
    root: Path = field(default=Path("."), compare=False)

    def __post_init__(self) -> None:
        ids = [im.id for im in self.images]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate image ids in corpus")
        known = set(ids)
        registry = set(self.class_registry)
        for image_id, insts in self.instances.items():
            if image_id not in known:
                raise ValueError(f"instances reference unknown image {image_id!r}")
            for inst in insts:
                if inst.class_name not in registry:
                    raise ValueError(f"class {inst.class_name!r} missing from registry")

    def image(self, image_id: str) -> ImageMeta:
        for im in self.images:
            if im.id == image_id:
                return im
        raise KeyError(image_id)

    def instances_of(self, image_id: str) -> tuple[ObbInstance, ...]:
        return self.instances.get(image_id, ())

    def all_instances(self) -> Iterable[tuple[ImageMeta, ObbInstance]]:
        for im in self.images:
            for inst in self.instances_of(im.id):
                yield im, inst

    def __len__(self) -> int:
        return sum(len(v) for v in self.instances.values())


def _parse_box(raw: dict, line: int, idx: int) -> OrientedBox:
    where = f"instances[{idx}]"
    if "box" in raw:
        vals = raw["box"]
        if not isinstance(vals, (list, tuple)) or len(vals) != 5:
            raise ManifestError("box must be [cx, cy, w, h, theta_degrees]", line, f"{where}.box")
        try:
            cx, cy, w, h, theta = (float(v) for v in vals)
        except (TypeError, ValueError):
            raise ManifestError("box values must be numbers", line, f"{where}.box") from None
        if w <= 0 or h <= 0:
            raise ManifestError(f"degenerate box extents w={w}, h={h}", line, f"{where}.box")
        return OrientedBox(cx, cy, w, h, theta)
    if "polygon" in raw:
        pts = raw["polygon"]
        try:
            pts = [(float(x), float(y)) for x, y in pts]
        except (TypeError, ValueError):
            raise ManifestError("polygon must be four [x, y] pairs", line, f"{where}.polygon") from None
        if len(pts) != 4:
            raise ManifestError("polygon must have exactly four corners", line, f"{where}.polygon")
        try:
            return min_area_rect(pts)
        except ValueError as exc:
            raise ManifestError(str(exc), line, f"{where}.polygon") from None
    raise ManifestError("instance needs 'box' or 'polygon'", line, where)


def parse_record(rec: Any, line: int, registry: Sequence[str] | None = None) -> tuple[ImageMeta, list[ObbInstance]]:
    """Validate one manifest record; ``line`` is used in error messages."""
    if not isinstance(rec, dict) or not isinstance(rec.get("image"), dict):
        raise ManifestError("record must be an object with an 'image' object", line, "image")
    im = rec["image"]
    for key in ("id", "width", "height"):
        if key not in im:
            raise ManifestError("missing required key", line, f"image.{key}")
    width, height = im["width"], im["height"]
    if not isinstance(width, int) or isinstance(width, bool) or width <= 0:
        raise ManifestError(f"width must be a positive integer, got {width!r}", line, "image.width")
    if not isinstance(height, int) or isinstance(height, bool) or height <= 0:
        raise ManifestError(f"height must be a positive integer, got {height!r}", line, "image.height")
    try:
        source = SourceDataset(str(im.get("source_dataset", "OTHER")).upper())
    except ValueError:
        raise ManifestError(f"unknown source dataset {im.get('source_dataset')!r}", line,
                            "image.source_dataset") from None
    qa = []
    for j, q in enumerate(rec.get("qa", [])):
        if not isinstance(q, dict) or "question" not in q:
            raise ManifestError("qa entries need a 'question'", line, f"qa[{j}]")
        qa.append(QAPair(str(q["question"]), None if q.get("answer") is None else str(q["answer"]),
                         str(q.get("category", "presence"))))
    meta = ImageMeta(
        id=str(im["id"]),
        path=str(im.get("path", "")),
        width=width,
        height=height,
        source_dataset=source,
        scene_label=rec.get("scene_label"),
        qa=tuple(qa),
    )
    closed = set(registry) if registry is not None else None
    instances = []
    raw_insts = rec.get("instances", [])
    if not isinstance(raw_insts, list):
        raise ManifestError("instances must be a list", line, "instances")
    for idx, raw in enumerate(raw_insts):
        if not isinstance(raw, dict) or "class" not in raw:
            raise ManifestError("instance needs a 'class'", line, f"instances[{idx}].class")
        cls = str(raw["class"])
        if closed is not None and cls not in closed:
            raise ManifestError(f"unknown class {cls!r}", line, f"instances[{idx}].class")
        box = _parse_box(raw, line, idx)
        try:
            box = clamp_to_image(box, meta)
        except ValueError as exc:
            raise ManifestError(str(exc), line, f"instances[{idx}]") from None
        try:
            prov = Provenance(raw.get("provenance", Provenance.GROUND_TRUTH.value))
        except ValueError:
            raise ManifestError(f"unknown provenance {raw.get('provenance')!r}", line,
                                f"instances[{idx}].provenance") from None
        inst_id = str(raw.get("id", f"{meta.id}#{idx}"))
        instances.append(ObbInstance(inst_id, cls, box, prov))
    return meta, instances


def _resolve_registry(registry: Sequence[str] | str | None) -> tuple[str, ...] | None:
    if registry is None:
        return None
    if isinstance(registry, str):
        try:
            return REGISTRIES[registry.upper()]
        except KeyError:
            raise ValueError(f"unknown registry {registry!r}; known: {sorted(REGISTRIES)}") from None
    return tuple(registry)


def iter_records(path: Path) -> Iterable[tuple[int, Any]]:
    """Yield (line number, decoded JSON) for each nonblank line."""
    with open(path, encoding="utf-8") as fh:
        for lineno, text in enumerate(fh, start=1):
            if not text.strip():
                continue
            try:
                yield lineno, json.loads(text)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"invalid JSON: {exc.msg}", lineno) from None


def load_corpus(manifest: str | Path, registry: Sequence[str] | str | None = None) -> Corpus:
    """Read a JSONL manifest (one image per line) into a validated corpus.

    ``registry`` closes the class vocabulary: either a sequence of names or a
    built-in registry name (``"DOTA"``, ``"DIOR"``, ``"FAIR1M"``). Without
    it the registry is every class seen, in order of first appearance.
    """
    path = Path(manifest)
    closed = _resolve_registry(registry)
    images: list[ImageMeta] = []
    instances: dict[str, tuple[ObbInstance, ...]] = {}
    seen_images: set[str] = set()
    seen_instances: set[str] = set()
    classes: dict[str, None] = {}
    for lineno, rec in iter_records(path):
        meta, insts = parse_record(rec, lineno, closed)
        if meta.id in seen_images:
            raise ManifestError(f"duplicate image id {meta.id!r}", lineno, "image.id")
        seen_images.add(meta.id)
        for inst in insts:
            if inst.instance_id in seen_instances:
                raise ManifestError(f"duplicate instance id {inst.instance_id!r}", lineno, "instances")
            seen_instances.add(inst.instance_id)
            classes.setdefault(inst.class_name)
        images.append(meta)
        instances[meta.id] = tuple(insts)
    images.sort(key=lambda m: m.id)
    ordered = {m.id: instances[m.id] for m in images}
    return Corpus(tuple(images), ordered, closed if closed is not None else tuple(classes), path.parent)


def merge_pseudo_labels(corpus: Corpus, pseudo: Corpus, iou_threshold: float = 0.5) -> Corpus:
    """Append pseudo labels that do not duplicate an existing annotation.

    A pseudo instance is dropped when its rotated IoU with any ground-truth
    instance of the same image, of any class, exceeds ``iou_threshold``.
    """
    if not 0 < iou_threshold <= 1:
        raise ValueError(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    known = {im.id for im in corpus.images}
    orphans = sorted(im.id for im in pseudo.images if im.id not in known)
    if orphans:
        raise ValueError(f"pseudo labels reference images missing from corpus: {orphans}")
    merged: dict[str, tuple[ObbInstance, ...]] = {}
    registry = dict.fromkeys(corpus.class_registry)
    kept_total = dropped = 0
    for im in corpus.images:
        gt = corpus.instances_of(im.id)
        gt_boxes = [g.box for g in gt if g.provenance is Provenance.GROUND_TRUTH]
        kept = []
        for cand in pseudo.instances_of(im.id):
            if any(rotated_iou(cand.box, b) > iou_threshold for b in gt_boxes):
                dropped += 1
                continue
            kept.append(replace(cand, provenance=Provenance.PSEUDO_LABEL))
            registry.setdefault(cand.class_name)
        kept_total += len(kept)
        merged[im.id] = gt + tuple(kept)
    log.info("pseudo-label merge: kept %d, dropped %d", kept_total, dropped)
    return Corpus(corpus.images, merged, tuple(registry), corpus.root)
