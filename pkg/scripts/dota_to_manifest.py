#!/usr/bin/env python3
"""Convert DOTA-style label files into a manifest.

Each label line is ``x1 y1 x2 y2 x3 y3 x4 y4 class difficult``; header lines
(``imagesource:``, ``gsd:``) are skipped. Image sizes are read from the
images, which must sit next to ``labelTxt/`` in ``images/``.

    python3 scripts/dota_to_manifest.py DOTA/train manifest.jsonl
"""

import argparse
import json
import os
import sys
from pathlib import Path

from PIL import Image

from geoforge.geometry import min_area_rect


def parse_labels(path: Path):
    for line in path.read_text(encoding="utf-8").splitlines():
        parts = line.split()
        if len(parts) < 9 or ":" in parts[0]:
            continue
        pts = [float(v) for v in parts[:8]]
        yield parts[8], [[pts[i], pts[i + 1]] for i in range(0, 8, 2)]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("root", type=Path, help="directory with images/ and labelTxt/")
    ap.add_argument("out", type=Path)
    ap.add_argument("--source", default="DOTA")
    args = ap.parse_args()

    images = {p.stem: p for p in (args.root / "images").iterdir()}
    n_img = n_inst = skipped = 0
    with open(args.out, "w", encoding="utf-8") as fh:
        for label in sorted((args.root / "labelTxt").glob("*.txt")):
            img = images.get(label.stem)
            if img is None:
                print(f"no image for {label.name}", file=sys.stderr)
                continue
            with Image.open(img) as im:
                width, height = im.size
            instances = []
            for k, (cls, poly) in enumerate(parse_labels(label)):
                try:
                    # DOTA quads are not always exact rectangles
                    box = min_area_rect(poly)
                except ValueError:
                    skipped += 1
                    continue
                instances.append({"id": f"{label.stem}-{k}", "class": cls, "box": list(box.as_tuple())})
            rec = {"image": {"id": label.stem, "path": os.path.relpath(img, args.out.parent), "width": width, "height": height, "source_dataset": args.source},
                   "instances": instances}
            fh.write(json.dumps(rec) + "\n")
            n_img += 1
            n_inst += len(instances)
    print(f"{n_img} images, {n_inst} instances, {skipped} degenerate quads skipped", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
