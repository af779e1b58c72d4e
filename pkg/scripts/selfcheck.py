#!/usr/bin/env python3
"""Build the synthetic corpus, generate the benchmark offline, then score the
ground truth against itself with every eval subcommand.

    python3 scripts/selfcheck.py /tmp/selfcheck
"""

import argparse
import json
import sys
from pathlib import Path

from geoforge.cli import main as forge
from geoforge.fixtures import make_fixture, write_fixture_config

SUBCOMMANDS = {
    "ground": ("grounding", []),
    "describe": ("grounded_description", []),
    "region": ("region_caption", []),
    "vqa": ("vqa", []),
    "classify": ("classification", ["--classes", "airport,harbor,stadium,intersection"]),
}
HEADLINE = {"ground": "overall", "describe": "acc_at_50", "region": "rouge1", "vqa": "accuracy", "classify": "accuracy"}


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("workdir", type=Path)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    root = args.workdir
    make_fixture(root)
    cfg = write_fixture_config(root, seed=args.seed)
    if forge(["generate", "--config", str(cfg), "--offline", "--seed", str(args.seed)]) != 0:
        return 1

    bench = root / "out" / "benchmark"
    failures = 0
    for sub, (name, extra) in SUBCOMMANDS.items():
        truth = bench / f"{name}.jsonl"
        pred = root / f"pred.{name}.jsonl"
        rows = [json.loads(line) for line in truth.read_text().splitlines() if line.strip()]
        pred.write_text("".join(json.dumps({"id": r["id"], "output": r["answer"]}) + "\n" for r in rows))
        report = root / f"{name}.scorecard.json"
        rc = forge(["eval", sub, "--pred", str(pred), "--truth", str(truth), "--output", str(report), *extra])
        value = json.loads(report.read_text())["scorecard"][HEADLINE[sub]]
        failures += rc != 0
        print(f"{sub:<9} {HEADLINE[sub]:<10} {value}", file=sys.stderr)
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
