"""Per-instance attributes: category, color, relative size, grid location, relations."""

from __future__ import annotations

import enum
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from geoforge.annotations import Corpus, ImageMeta, ObbInstance
from geoforge.geometry import GridPosition, OrientedBox, center_distance, contains, corners, grid_position

log = logging.getLogger(__name__)


class SizeLabel(enum.Enum):
    SMALL = "small"
    NORMAL = "normal"
    LARGE = "large"


@dataclass(frozen=True)
class AttributeSet:
    instance_id: str
    category: str
    color: str | None = None
    relative_size: SizeLabel | None = None
    relative_location: GridPosition | None = None
    relations: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class SizeThresholds:
    per_class: Mapping[str, tuple[float, float]]

    def __getitem__(self, cls: str) -> tuple[float, float]:
        return self.per_class[cls]

    def __contains__(self, cls: object) -> bool:
        return cls in self.per_class


def nearest_rank(sorted_values: Sequence[float], pct: float) -> float:
    """Value at 1-based rank ceil(pct * n / 100) of an ascending sample."""
    n = len(sorted_values)
    if n == 0:
        raise ValueError("empty sample")
    rank = max(1, math.ceil(pct * n / 100.0))
    return sorted_values[min(rank, n) - 1]


def compute_size_thresholds(corpus: Corpus, low: float = 20.0, high: float = 80.0) -> SizeThresholds:
    if len(corpus) == 0:
        raise ValueError("cannot compute size thresholds for an empty corpus")
    areas: dict[str, list[float]] = {}
    for _, inst in corpus.all_instances():
        areas.setdefault(inst.class_name, []).append(inst.box.area)
    out = {}
    for cls, vals in areas.items():
        vals.sort()
        out[cls] = (nearest_rank(vals, low), nearest_rank(vals, high))
    return SizeThresholds(out)


def size_label(instance: ObbInstance, thresholds: SizeThresholds) -> SizeLabel:
    if instance.class_name not in thresholds:
        raise KeyError(f"no size thresholds for class {instance.class_name!r}")
    p20, p80 = thresholds[instance.class_name]
    area = instance.box.area
    if area < p20:
        return SizeLabel.SMALL
    if area > p80:
        return SizeLabel.LARGE
    return SizeLabel.NORMAL


# ---- color -----------------------------------------------------------------

def load_palette(path: str | Path | None = None) -> dict[str, tuple[int, int, int]]:
    if path is None:
        text = resources.files("geoforge").joinpath("assets/palette.json").read_text()
    else:
        text = Path(path).read_text()
    return {name: tuple(rgb) for name, rgb in json.loads(text).items()}


@dataclass
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    inertia: list[float] = field(default_factory=list)
    converged: bool = False

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=len(self.centroids))


def _kmeans_pp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [points[rng.integers(len(points))]]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            # fewer distinct points than clusters
            break
        idx = rng.choice(len(points), p=d2 / total)
        centers.append(points[idx])
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return np.array(centers, dtype=np.float64)


def _assign(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, float]:
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    return labels, float(d2[np.arange(len(points)), labels].sum())


def kmeans(points: np.ndarray, k: int, seed: int = 0, max_iter: int = 50) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding from ``seed``.

    ``inertia`` records the within-cluster sum of squares after every
    assignment step. An empty cluster keeps its previous centroid.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or len(pts) == 0:
        raise ValueError("kmeans needs a nonempty (n, d) array")
    if k < 1:
        raise ValueError("k must be positive")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp(pts, min(k, len(pts)), rng)
    labels, inertia = _assign(pts, centroids)
    history = [inertia]
    converged = False
    for _ in range(max_iter):
        for j in range(len(centroids)):
            members = pts[labels == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
        new_labels, inertia = _assign(pts, centroids)
        history.append(inertia)
        if np.array_equal(new_labels, labels):
            converged = True
            break
        labels = new_labels
    return KMeansResult(centroids, labels, history, converged)


def box_pixels(image: np.ndarray, box: OrientedBox) -> np.ndarray:
    """RGB values of pixels whose centers fall inside the closed box polygon."""
    h, w = image.shape[:2]
    poly = np.array(corners(box))
    x0 = max(int(math.floor(poly[:, 0].min())), 0)
    x1 = min(int(math.ceil(poly[:, 0].max())), w)
    y0 = max(int(math.floor(poly[:, 1].min())), 0)
    y1 = min(int(math.ceil(poly[:, 1].max())), h)
    if x1 <= x0 or y1 <= y0:
        return np.empty((0, 3), dtype=np.float64)
    ys, xs = np.mgrid[y0:y1, x0:x1]
    px = xs.ravel() + 0.5
    py = ys.ravel() + 0.5
    inside = np.ones(px.shape, dtype=bool)
    for i in range(4):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % 4]
        cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
        inside &= cross >= -1e-9 * math.hypot(bx - ax, by - ay)
    sub = image[y0:y1, x0:x1, :3].reshape(-1, 3)
    return sub[inside].astype(np.float64)


def nearest_color(rgb: Sequence[float], palette: Mapping[str, Sequence[int]]) -> str:
    best_name, best_d = None, math.inf
    for name, ref in palette.items():
        d = sum((float(a) - float(b)) ** 2 for a, b in zip(rgb, ref))
        if d < best_d:
            best_name, best_d = name, d
    return best_name


def dominant_color(
    image_pixels: np.ndarray,
    box: OrientedBox,
    k: int = 3,
    seed: int = 0,
    palette: Mapping[str, Sequence[int]] | None = None,
    max_iter: int = 50,
) -> str:
    """Name of the palette color nearest the centroid of the most populous cluster."""
    pix = box_pixels(image_pixels, box)
    if len(pix) == 0:
        raise ValueError("box covers no image pixels")
    result = kmeans(pix, min(k, len(pix)), seed=seed, max_iter=max_iter)
    largest = int(np.argmax(result.counts))
    return nearest_color(result.centroids[largest], palette or load_palette())


# ---- relations -------------------------------------------------------------

@dataclass(frozen=True)
class RelationRule:
    subject: str
    object: str
    phrases: tuple[str, ...]
    requires: str | None = None  # "subject_inside_object" | "object_inside_subject"


@dataclass(frozen=True)
class RelationTable:
    category_of: Mapping[str, str]
    rules: tuple[RelationRule, ...]

    @classmethod
    def load(cls, path: str | Path | None = None) -> "RelationTable":
        if path is None:
            text = resources.files("geoforge").joinpath("assets/relations.json").read_text()
        else:
            text = Path(path).read_text()
        raw = json.loads(text)
        category_of = {}
        for cat, members in raw["categories"].items():
            for m in members:
                category_of[m.lower()] = cat
        rules = []
        for r in raw["rules"]:
            phrases = tuple(r["phrases"])
            if not phrases or not all(p.strip() for p in phrases):
                raise ValueError(f"relation rule {r} has an empty phrase")
            rules.append(RelationRule(r["subject"], r["object"], phrases, r.get("requires")))
        return cls(category_of, tuple(rules))

    def category(self, class_name: str) -> str | None:
        return self.category_of.get(class_name.lower())

    def resolve(self, a: ObbInstance, b: ObbInstance) -> tuple[str, str, str] | None:
        """First applicable (subject id, phrase, object id) for an unordered pair."""
        ca, cb = self.category(a.class_name), self.category(b.class_name)
        if ca is None or cb is None:
            return None
        for rule in self.rules:
            for subj, obj, cs, co in ((a, b, ca, cb), (b, a, cb, ca)):
                if (cs, co) != (rule.subject, rule.object):
                    continue
                if rule.requires == "subject_inside_object" and not contains(obj.box, subj.box):
                    continue
                if rule.requires == "object_inside_subject" and not contains(subj.box, obj.box):
                    continue
                return subj.instance_id, rule.phrases[0], obj.instance_id
        return None


def proximity_components(instances: Sequence[ObbInstance], threshold: float) -> list[list[int]]:
    """Connected components of the graph linking centers closer than ``threshold``."""
    n = len(instances)
    adj: list[list[int]] = [[] for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if center_distance(instances[i].box, instances[j].box) < threshold:
                adj[i].append(j)
                adj[j].append(i)
    seen = [False] * n
    comps = []
    for start in range(n):
        if seen[start]:
            continue
        stack, comp = [start], []
        seen[start] = True
        while stack:
            v = stack.pop()
            comp.append(v)
            for u in adj[v]:
                if not seen[u]:
                    seen[u] = True
                    stack.append(u)
        comps.append(sorted(comp))
    return comps


def build_relations(
    instances: Sequence[ObbInstance],
    image: ImageMeta,
    table: RelationTable,
    distance_fraction: float = 0.1,
) -> list[tuple[str, str, str]]:
    """Relation triples between instances sharing a proximity subgraph.

    Every pair in a component whose classes match a table rule yields one
    triple; containment rules additionally require ``contains``.
    """
    if not 0 < distance_fraction <= 1:
        raise ValueError(f"distance_fraction must be in (0, 1], got {distance_fraction}")
    threshold = distance_fraction * math.hypot(image.width, image.height)
    triples = []
    for comp in proximity_components(instances, threshold):
        for x, i in enumerate(comp):
            for j in comp[x + 1:]:
                t = table.resolve(instances[i], instances[j])
                if t is not None:
                    triples.append(t)
    return triples


# ---- orchestration ---------------------------------------------------------

RasterSource = Callable[[ImageMeta], np.ndarray]


class FileRasterSource:
    """Reads PNG/JPEG files named by ``ImageMeta.path`` relative to ``root``."""

    def __init__(self, root: str | Path = "."):
        self.root = Path(root)

    def __call__(self, image: ImageMeta) -> np.ndarray:
        from PIL import Image

        with Image.open(self.root / image.path) as im:
            arr = np.asarray(im.convert("RGB"))
        if arr.shape[0] != image.height or arr.shape[1] != image.width:
            raise ValueError(
                f"raster {image.path} is {arr.shape[1]}x{arr.shape[0]}, "
                f"manifest says {image.width}x{image.height}"
            )
        return arr


@dataclass(frozen=True)
class AttributeConfig:
    k: int = 3
    seed: int = 0
    max_iter: int = 50
    distance_fraction: float = 0.1


@dataclass
class ExtractionResult:
    attributes: dict[str, AttributeSet]
    thresholds: SizeThresholds
    failed_images: dict[str, str] = field(default_factory=dict)


def _center_in_image(box: OrientedBox, image: ImageMeta) -> tuple[float, float]:
    x = min(max(box.cx, 0.0), math.nextafter(float(image.width), 0.0))
    y = min(max(box.cy, 0.0), math.nextafter(float(image.height), 0.0))
    return x, y


def _image_attributes(
    image: ImageMeta,
    instances: Sequence[ObbInstance],
    thresholds: SizeThresholds,
    rasters: RasterSource | None,
    table: RelationTable,
    palette: Mapping[str, Sequence[int]],
    config: AttributeConfig,
) -> tuple[list[AttributeSet], str | None]:
    pixels = None
    error = None
    if rasters is not None and instances:
        try:
            pixels = rasters(image)
        except Exception as exc:  # decoding failures are per-image
            error = f"{type(exc).__name__}: {exc}"
            log.warning("raster for image %s failed: %s", image.id, error)
    relations: dict[str, list[tuple[str, str]]] = {}
    for subj, phrase, obj in build_relations(instances, image, table, config.distance_fraction):
        relations.setdefault(subj, []).append((phrase, obj))
    out = []
    for inst in instances:
        color = None
        if pixels is not None:
            try:
                color = dominant_color(pixels, inst.box, config.k, config.seed, palette, config.max_iter)
            except ValueError:
                color = None
        out.append(AttributeSet(
            instance_id=inst.instance_id,
            category=inst.class_name,
            color=color,
            relative_size=size_label(inst, thresholds),
            relative_location=grid_position(_center_in_image(inst.box, image), image),
            relations=tuple(relations.get(inst.instance_id, ())),
        ))
    return out, error


def extract_attributes(
    corpus: Corpus,
    rasters: RasterSource | None = None,
    config: AttributeConfig = AttributeConfig(),
    table: RelationTable | None = None,
    palette: Mapping[str, Sequence[int]] | None = None,
    jobs: int = 1,
) -> ExtractionResult:
    """Attributes for every instance in the corpus.

    Without ``rasters`` every color is left empty. A raster that fails to load
    marks its image as failed and leaves its colors empty; other attributes
    are still produced.
    """
    thresholds = compute_size_thresholds(corpus)
    table = table or RelationTable.load()
    palette = palette or load_palette()

    def work(image: ImageMeta):
        return _image_attributes(image, corpus.instances_of(image.id), thresholds, rasters,
                                 table, palette, config)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, corpus.images))
    else:
        results = [work(im) for im in corpus.images]
    attrs: dict[str, AttributeSet] = {}
    failed: dict[str, str] = {}
    for image, (sets, error) in zip(corpus.images, results):
        for a in sets:
            attrs[a.instance_id] = a
        if error is not None:
            failed[image.id] = error
    return ExtractionResult(attrs, thresholds, failed)
