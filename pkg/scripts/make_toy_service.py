#!/usr/bin/env python3
"""Train a toy completion/classification suite and write a serve config.

Gives the canvas UI and manual demos something to talk to in under a minute:

    python3 scripts/make_toy_service.py --out out/toy-service
    sketchlm serve --config out/toy-service/serve.yaml
"""

import argparse
from pathlib import Path

import yaml

from sketchlm.experiments import build_toy_service


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out/toy-service")
    parser.add_argument("--classes", default="square,triangle")
    parser.add_argument("--port", type=int, default=8470)
    parser.add_argument("--static-dir", default=None,
                        help="serve the built canvas UI from this directory")
    args = parser.parse_args()

    out = Path(args.out)
    classes = tuple(args.classes.split(","))
    paths = build_toy_service(out, classes)
    config = {
        "service": {
            "checkpoints": {c: paths[c] for c in classes},
            "classifier": paths["__classifier__"],
            "max_num_samples": 5,
            "max_prefix_points": 2000,
            "cors_origins": ["*"],
            "host": "127.0.0.1",
            "port": args.port,
            **({"static_dir": args.static_dir} if args.static_dir else {}),
        }
    }
    (out / "serve.yaml").write_text(yaml.safe_dump(config, sort_keys=True))
    print(f"wrote {out / 'serve.yaml'}")
    for name, path in paths.items():
        print(f"  {name}: {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
