"""Train the default model on the bundled synthetic set until it memorizes it.

    python scripts/overfit.py --epochs 300 --out runs/overfit
"""

import argparse
import time
from importlib import resources
from pathlib import Path

from macbig import checkpoint
from macbig import layers as L
from macbig import model as M
from macbig import train as T
from macbig.textprep import Preprocessor, build_vocab, read_jsonl, stack, vectorize_sentences


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--data", default=str(resources.files("macbig").joinpath("data", "synthetic.jsonl")))
    ap.add_argument("--epochs", type=int, default=300)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/overfit")
    args = ap.parse_args()

    recs = read_jsonl(args.data)
    prep = Preprocessor()
    sents = [prep.sentences(r.text) for r in recs]
    vocab = build_vocab([[t for s in doc for t in s] for doc in sents])
    X, y = stack([vectorize_sentences(s, vocab, label=r.label) for s, r in zip(sents, recs)])
    hp, cfg = M.HyperParams(), T.TrainConfig(epochs=args.epochs, seed=args.seed)
    rng = L.make_rng(cfg.seed)
    params = M.build(hp, len(vocab), rng)
    print(f"{len(y)} documents, vocabulary {len(vocab)}, {params.parameter_count():,} parameters")

    t0 = time.perf_counter()

    def progress(r):
        if r.epoch % 10 == 0 or r.epoch == 1:
            print(f"epoch {r.epoch:4d}  loss {r.train_loss:.5f}  acc {r.train_acc:.3f}  "
                  f"{time.perf_counter() - t0:6.1f}s", flush=True)

    data = (X, y)
    res = T.train(data, data, hp, cfg, params, rng, on_epoch=progress)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "history.csv").write_text(T.history_to_csv(res.history))
    checkpoint.save(out / "model.ckpt", res.final_params, hp, vocab)
    first = next((r.epoch for r in res.history if r.train_acc == 1.0), None)
    final = res.history[-1].train_loss if res.history else float("nan")
    print(f"initial loss {res.initial_train_loss:.4f}, final {final:.3e} "
          f"({final / res.initial_train_loss:.2%} of initial); accuracy 1.0 first at epoch {first}")


if __name__ == "__main__":
    main()
