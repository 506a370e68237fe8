#!/usr/bin/env python3
"""Training-size sweep: classification accuracy as samples per class grow,
evaluated on one fixed held-out set."""

import argparse
import json
import logging
from pathlib import Path

from sketchlm.experiments import train_size_sweep


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="200,1000,5000")
    parser.add_argument("--epochs", type=int, default=6)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="out/train-size-sweep")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    sizes = tuple(int(s) for s in args.sizes.split(","))
    points = train_size_sweep(sizes=sizes, epochs=args.epochs, seed=args.seed)
    rows = [
        {"train_size": p.train_size, "top1": p.top1, "top5": p.top5, "wall_s": p.wall_s}
        for p in points
    ]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.json").write_text(json.dumps(rows, indent=2))
    for row in rows:
        print(f"{row['train_size']:>6} samples/class  top1={row['top1']:.4f}  "
              f"top5={row['top5']:.4f}  ({row['wall_s']:.0f}s)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
