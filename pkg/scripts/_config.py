"""Tiny helper shared by the experiment scripts: dataclass config with an optional JSON override."""

from __future__ import annotations

import argparse
import dataclasses
import json
from pathlib import Path


def parse(cls, description: str):
    """Build ``cls`` from its defaults, a JSON file given by --config, and --out."""
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--config", help="JSON file whose keys override the dataclass defaults")
    p.add_argument("--out", default="results", help="output directory")
    args = p.parse_args()
    over = json.loads(Path(args.config).read_text()) if args.config else {}
    unknown = set(over) - {f.name for f in dataclasses.fields(cls)}
    if unknown:
        p.error(f"unknown config keys: {sorted(unknown)}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return cls(**over), out


def save(out: Path, name: str, cfg, result: dict) -> Path:
    path = out / f"{name}.json"
    path.write_text(json.dumps({"config": dataclasses.asdict(cfg), "result": result}, indent=2, sort_keys=True,
                               default=float))
    return path
