"""Repeated stratified re-splits on the synthetic set through the CLI, then a per-fold summary.

    python scripts/cv_demo.py --folds 3 --epochs 40 --out runs/cv
"""

import argparse
import json
from importlib import resources
from pathlib import Path

from macbig import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--data", default=str(resources.files("macbig").joinpath("data", "synthetic.jsonl")))
    ap.add_argument("--folds", type=int, default=3)
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/cv")
    args = ap.parse_args()
    rc = cli.main(["train", "--data", args.data, "--folds", str(args.folds), "--epochs", str(args.epochs),
                   "--seed", str(args.seed), "--out", args.out])
    if rc:
        raise SystemExit(rc)
    report = json.loads((Path(args.out) / "report.json").read_text())
    print(f"{'fold':>4} {'seed':>5} {'best ep':>8} {'val acc':>8} {'test acc':>9} {'test F1':>8}")
    for f in report["per_fold"]:
        print(f"{f['fold']:>4} {f['seed']:>5} {f['best_epoch']:>8} {f['best_val_acc']:>8.3f} "
              f"{f['Accuracy']:>9.3f} {f['F1 score']:>8.3f}")


if __name__ == "__main__":
    main()
