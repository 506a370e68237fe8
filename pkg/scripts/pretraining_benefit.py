#!/usr/bin/env python3
"""Desk-scale pre-training benefit study.

Fine-tunes the same classifier twice with identical seeds, once from scratch
and once from a checkpoint pre-trained on 10 disjoint classes, then reports
epochs-to-matching-loss and final accuracy for both runs.
"""

import argparse
import json
import logging
from pathlib import Path

from sketchlm.experiments import pretraining_benefit


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n-finetune", type=int, default=1000)
    parser.add_argument("--n-pretrain", type=int, default=300)
    parser.add_argument("--epochs", type=int, default=12)
    parser.add_argument("--pretrain-epochs", type=int, default=6)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="out/pretraining-benefit")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    result = pretraining_benefit(
        n_finetune=args.n_finetune,
        n_pretrain=args.n_pretrain,
        epochs=args.epochs,
        pretrain_epochs=args.pretrain_epochs,
        seed=args.seed,
    )
    summary = {
        "scratch_val_losses": result.scratch.val_losses,
        "pretrained_val_losses": result.pretrained.val_losses,
        "scratch_best_loss": result.scratch_best_loss,
        "scratch_best_epoch": result.scratch_best_epoch,
        "pretrained_epochs_to_match": result.pretrained_epochs_to_match,
        "epochs_saved_fraction": result.epochs_saved_fraction,
        "final_top1": {
            "scratch": result.scratch.final_top1,
            "pretrained": result.pretrained.final_top1,
        },
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary, indent=2))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
