"""Loss and accuracy curves from a history CSV written by training.

    python scripts/plot_history.py runs/overfit/history.csv --out curves.png
"""

import argparse
from pathlib import Path

from macbig.train import history_from_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("history")
    ap.add_argument("--out", default="curves.png")
    args = ap.parse_args()
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    h = history_from_csv(Path(args.history).read_text())
    ep = [r.epoch for r in h]
    fig, (a, b) = plt.subplots(1, 2, figsize=(10, 4))
    a.plot(ep, [r.train_loss for r in h], label="train")
    a.plot(ep, [r.val_loss for r in h], label="validation")
    a.set_xlabel("epoch"), a.set_ylabel("loss"), a.legend()
    b.plot(ep, [r.train_acc for r in h], label="train")
    b.plot(ep, [r.val_acc for r in h], label="validation")
    b.set_xlabel("epoch"), b.set_ylabel("accuracy"), b.legend()
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
