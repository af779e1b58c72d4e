#!/usr/bin/env python3
"""Write the synthetic 20-image corpus plus a ready-to-run forge.yaml.

    python3 scripts/make_fixture.py /tmp/fixture
    forge generate --config /tmp/fixture/forge.yaml --offline --seed 7
"""

import argparse

from geoforge.fixtures import make_fixture, write_fixture_config


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir")
    ap.add_argument("--images", type=int, default=20)
    ap.add_argument("--size", type=int, default=300)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    images = make_fixture(args.out_dir, args.images, args.size, args.seed)
    cfg = write_fixture_config(args.out_dir)
    n = sum(len(im.objects) for im in images)
    print(f"{len(images)} images, {n} instances; config at {cfg}")


if __name__ == "__main__":
    main()
