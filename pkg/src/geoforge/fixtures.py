"""Synthetic aerial-scene corpus with analytically known attributes.

Every object is painted as a solid palette color over exactly the pixels its
box covers (pixel centers inside the closed polygon), so the expected color
of each instance is the color it was painted with. Containers are painted
before the objects inside them and are always at least twice their area.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from geoforge.attributes import load_palette
from geoforge.geometry import OrientedBox, contains, corners, intersection_area

BACKGROUND = (34, 60, 34)
SCENES = ("airfield", "harbor", "sports", "road")
SCENE_LABELS = {"airfield": "airport", "harbor": "harbor", "sports": "stadium", "road": "intersection"}

# per-task record counts the 20-image fixture can always meet
FIXTURE_BUDGET = {
    "detailed_description": 8, "multi_round": 8, "complex_qa": 8, "vqa": 50, "classification": 16,
    "grounded_description": 16, "region_caption": 80, "referring_expression": 60,
}


@dataclass
class FixtureObject:
    class_name: str
    box: OrientedBox
    color: str
    inside: str | None = None  # id of the container it was placed in


@dataclass
class FixtureImage:
    id: str
    path: str
    width: int
    height: int
    scene: str
    objects: dict[str, FixtureObject] = field(default_factory=dict)


def paint_mask(shape: tuple[int, int], box: OrientedBox) -> np.ndarray:
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w]
    px, py = xs + 0.5, ys + 0.5
    poly = corners(box)
    mask = np.ones(shape, dtype=bool)
    for i in range(4):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % 4]
        mask &= (bx - ax) * (py - ay) - (by - ay) * (px - ax) >= -1e-9 * math.hypot(bx - ax, by - ay)
    return mask


class _Placer:
    def __init__(self, rng: random.Random, size: int):
        self.rng = rng
        self.size = size
        self.placed: list[OrientedBox] = []

    def fits(self, box: OrientedBox, allow: OrientedBox | None = None) -> bool:
        if any(not (2 <= x <= self.size - 2 and 2 <= y <= self.size - 2) for x, y in corners(box)):
            return False
        pad = OrientedBox(box.cx, box.cy, box.w + 4, box.h + 4, box.theta)
        for other in self.placed:
            if allow is not None and other == allow:
                continue
            if intersection_area(pad, other) > 0:
                return False
        return True

    def free(self, w: float, h: float, theta: float | None = None, tries: int = 400) -> OrientedBox | None:
        for _ in range(tries):
            t = self.rng.choice([0.0, 0.0, 15.0, 30.0, 45.0, 60.0]) if theta is None else theta
            box = OrientedBox(self.rng.uniform(0, self.size), self.rng.uniform(0, self.size), w, h, t)
            if self.fits(box):
                self.placed.append(box)
                return box
        return None

    def near(self, anchor: OrientedBox, w: float, h: float, reach: float, tries: int = 400) -> OrientedBox | None:
        for _ in range(tries):
            ang = self.rng.uniform(0, 2 * math.pi)
            d = self.rng.uniform(0.5, 1.0) * reach
            box = OrientedBox(anchor.cx + d * math.cos(ang), anchor.cy + d * math.sin(ang), w, h,
                              self.rng.choice([0.0, 20.0, 45.0]))
            if self.fits(box):
                self.placed.append(box)
                return box
        return None

    def inside(self, container: OrientedBox, w: float, h: float) -> OrientedBox:
        # same angle and center offset within the container's slack
        c, s = math.cos(math.radians(container.theta)), math.sin(math.radians(container.theta))
        du = self.rng.uniform(-(container.w - w) / 4, (container.w - w) / 4)
        dv = self.rng.uniform(-(container.h - h) / 4, (container.h - h) / 4)
        box = OrientedBox(container.cx + du * c - dv * s, container.cy + du * s + dv * c, w, h, container.theta)
        assert contains(container, box)
        self.placed.append(box)
        return box


def _scene(img: FixtureImage, rng: random.Random) -> None:
    placer = _Placer(rng, img.width)
    reach = 0.1 * math.hypot(img.width, img.height) * 0.9
    n = 0

    def add(cls, box, color, inside=None):
        nonlocal n
        if box is None:
            return None
        oid = f"{img.id}-{n:02d}"
        n += 1
        img.objects[oid] = FixtureObject(cls, box, color, inside)
        return oid

    vehicle_colors = ["white", "black", "red", "blue", "yellow"]
    if img.scene == "airfield":
        for _ in range(rng.randint(1, 2)):
            b = placer.free(rng.uniform(26, 40), rng.uniform(26, 40))
            add("building", b, rng.choice(["gray", "tan"]))
            if b is not None:
                for _ in range(rng.randint(1, 3)):
                    add("small-vehicle", placer.near(b, rng.uniform(6, 10), rng.uniform(4, 6), reach),
                        rng.choice(vehicle_colors))
        for _ in range(rng.randint(1, 2)):
            add("plane", placer.free(rng.uniform(22, 44), rng.uniform(20, 40)), "white")
    elif img.scene == "harbor":
        h = placer.free(rng.uniform(40, 60), rng.uniform(18, 26))
        add("harbor", h, "gray")
        for _ in range(rng.randint(1, 2)):
            add("ship", placer.near(h, rng.uniform(18, 28), rng.uniform(6, 9), reach) if h else None,
                rng.choice(["white", "black", "blue"]))
        big = placer.free(rng.uniform(44, 56), rng.uniform(18, 22))
        sid = add("ship", big, rng.choice(["white", "gray"]))
        if big is not None:
            add("helipad", placer.inside(big, 8, 8), "yellow", inside=sid)
    elif img.scene == "sports":
        t = placer.free(rng.uniform(70, 90), rng.uniform(44, 56), theta=rng.choice([0.0, 30.0]))
        tid = add("ground-track-field", t, rng.choice(["red", "brown"]))
        if t is not None:
            add("soccer-ball-field", placer.inside(t, t.w * 0.5, t.h * 0.5), "green", inside=tid)
        for _ in range(rng.randint(1, 2)):
            add("tennis-court", placer.free(rng.uniform(14, 20), rng.uniform(8, 12)), "blue")
        if t is not None:
            for _ in range(rng.randint(0, 2)):
                add("small-vehicle", placer.near(t, rng.uniform(6, 10), rng.uniform(4, 6), reach * 1.4),
                    rng.choice(vehicle_colors))
    else:
        r = placer.free(rng.uniform(34, 44), rng.uniform(34, 44), theta=0.0)
        rid = add("roundabout", r, "gray")
        if r is not None:
            add("small-vehicle", placer.inside(r, 8, 5), rng.choice(vehicle_colors), inside=rid)
        for _ in range(rng.randint(1, 3)):
            b = placer.free(rng.uniform(20, 30), rng.uniform(20, 30))
            add("building", b, rng.choice(["tan", "orange", "gray"]))
            if b is not None and rng.random() < 0.6:
                add("small-vehicle", placer.near(b, rng.uniform(6, 10), rng.uniform(4, 6), reach),
                    rng.choice(vehicle_colors))


def _qa(img: FixtureImage) -> list[dict]:
    classes = [o.class_name for o in img.objects.values()]
    has_ship = "ship" in classes
    n_veh = classes.count("small-vehicle")
    n_bld = classes.count("building")
    return [
        {"question": "Is there a ship in the image?", "answer": "yes" if has_ship else "no", "category": "presence"},
        {"question": "Are there more vehicles than buildings?", "answer": "yes" if n_veh > n_bld else "no",
         "category": "comparison"},
        {"question": "Is this a rural or an urban area?",
         "answer": "urban" if img.scene in ("road", "airfield") else "rural", "category": "rural_urban"},
    ]


def write_fixture_config(out_dir: str | Path, seed: int = 7, split: float = 0.5) -> Path:
    """Run config for the fixture corpus; half the images go to the test split."""
    import yaml

    path = Path(out_dir) / "forge.yaml"
    cfg = {"manifest": "manifest.jsonl", "output": "out", "seed": seed, "split": split, "tasks": FIXTURE_BUDGET}
    path.write_text(yaml.safe_dump(cfg, sort_keys=True), encoding="utf-8")
    return path


def make_fixture(out_dir: str | Path, n_images: int = 20, size: int = 300, seed: int = 0) -> list[FixtureImage]:
    """Write ``images/*.png`` and ``manifest.jsonl`` under ``out_dir``."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    palette = load_palette()
    rng = random.Random(seed)
    images = []
    lines = []
    from PIL import Image

    for k in range(n_images):
        img = FixtureImage(f"img{k:03d}", f"images/img{k:03d}.png", size, size, SCENES[k % len(SCENES)])
        _scene(img, rng)
        raster = np.empty((size, size, 3), dtype=np.uint8)
        raster[:] = BACKGROUND
        # containers first so inner objects stay visible
        order = sorted(img.objects.items(), key=lambda kv: kv[1].inside is not None)
        for _, obj in order:
            raster[paint_mask((size, size), obj.box)] = palette[obj.color]
        Image.fromarray(raster).save(out / img.path)
        rec = {
            "image": {"id": img.id, "path": img.path, "width": size, "height": size, "source_dataset": "OTHER"},
            "scene_label": SCENE_LABELS[img.scene],
            "qa": _qa(img),
            "instances": [
                {"id": oid, "class": o.class_name, "box": list(o.box.as_tuple())}
                for oid, o in img.objects.items()
            ],
        }
        lines.append(json.dumps(rec))
        images.append(img)
    (out / "manifest.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return images
