"""Command-line workflows: preprocess, train, evaluate, predict, attention, gradcheck, params."""

from __future__ import annotations

import argparse
import html
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import checkpoint, gradcheck, metrics
from . import layers as L
from . import model as M
from . import train as T
from .textprep import (LABELS, DataError, Preprocessor, Vocabulary, build_vocab, load_embeddings, read_jsonl,
                       read_wordlist, stack, vectorize_sentences)

log = logging.getLogger("macbig")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3
CONFIG_NAME = "config.txt"
PATH_KEYS = ("data", "glove", "stopwords", "checkpoint", "out", "vocab_size")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- config


def _field_types():
    types = {}
    for cls in (M.HyperParams, T.TrainConfig):
        for f in fields(cls):
            types[f.name] = (cls, type(f.default))
    return types


def _coerce(key, raw: str, kind):
    try:
        if kind is bool:
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if kind is tuple:
            parts = [p for p in raw.replace(",", " ").split() if p]
            return tuple(int(p) if p.lstrip("-").isdigit() else p for p in parts)
        return kind(raw)
    except ValueError:
        raise UsageError(f"config key {key!r}: cannot parse {raw!r} as {kind.__name__}") from None


def parse_config_text(text: str) -> dict:
    """``key = value`` lines; '#' starts a comment. Unknown keys are rejected."""
    types = _field_types()
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in PATH_KEYS:
            out[key] = int(value) if key == "vocab_size" else value
        elif key in types:
            out[key] = _coerce(key, value, types[key][1])
        else:
            raise UsageError(f"config line {n}: unknown key {key!r}")
    return out


def read_config(path) -> dict:
    if path is None:
        return {}
    try:
        return parse_config_text(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise UsageError(f"cannot read config: {e}") from None


def split_config(values: dict):
    """(HyperParams, TrainConfig, paths) from a flat key/value mapping."""
    types = _field_types()
    hp_kw = {k: v for k, v in values.items() if k in types and types[k][0] is M.HyperParams}
    cfg_kw = {k: v for k, v in values.items() if k in types and types[k][0] is T.TrainConfig}
    paths = {k: v for k, v in values.items() if k in PATH_KEYS}
    try:
        return M.HyperParams(**hp_kw), T.TrainConfig(**cfg_kw), paths
    except (TypeError, ValueError) as e:
        raise UsageError(str(e)) from None


def format_config(hp: M.HyperParams, cfg: T.TrainConfig, paths: dict) -> str:
    lines = ["# effective configuration"]
    for d in (hp.to_dict(), cfg.to_dict(), paths):
        for k in sorted(d):
            v = d[k]
            if v is None:
                continue
            if isinstance(v, (list, tuple)):
                v = ",".join(str(x) for x in v)
            lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_config(out: Path, hp, cfg, paths):
    (out / CONFIG_NAME).write_text(format_config(hp, cfg, paths), encoding="utf-8")


# ---------------------------------------------------------------- data


def _preprocessor(stopwords=None) -> Preprocessor:
    if stopwords is None:
        return Preprocessor()
    try:
        return Preprocessor(stopwords=frozenset(read_wordlist(stopwords)))
    except OSError as e:
        raise DataError(f"cannot read stop-word list: {e}") from None


def tokenize_records(records, prep: Preprocessor):
    return [prep.sentences(r.text) for r in records]


def _docs_tokens(sentences):
    docs = [[t for sent in doc for t in sent] for doc in sentences]
    return docs if any(docs) else [["<empty>"]]


def _read_corpus(path) -> list:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, 1):
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise DataError(f"invalid JSON ({e.msg})", i) from None
    return rows


def load_dataset(path, hp: M.HyperParams, vocab: Vocabulary | None = None, vocab_size=18352,
                 prep: Preprocessor | None = None, require_label=True):
    """Docs from raw JSONL or from a preprocess output directory.

    Returns (TokenizedDoc list, vocabulary). A vocabulary is built from the
    data when none is given.
    """
    path = Path(path)
    if path.is_dir():
        try:
            rows = _read_corpus(path / "corpus.jsonl")
            own = Vocabulary.load(path / "vocab.txt")
        except OSError as e:
            raise DataError(f"not a preprocessed directory: {e}") from None
        if vocab is not None and vocab != own:
            raise DataError("vocabulary of the data does not match the checkpoint")
        vocab = own
        ids = [r["id"] for r in rows]
        labels = [r.get("label") for r in rows]
        sentences = [r["sentences"] for r in rows]
        labels = [None if lab is None else LABELS.index(lab) for lab in labels]
    else:
        try:
            records = read_jsonl(path, require_label)
        except OSError as e:
            raise DataError(f"cannot read {path}: {e}") from None
        prep = prep or Preprocessor()
        sentences = tokenize_records(records, prep)
        ids = [r.id for r in records]
        labels = [r.label for r in records]
        if vocab is None:
            vocab = build_vocab(_docs_tokens(sentences), vocab_size)
    docs = [vectorize_sentences(s, vocab, hp.max_sentences, hp.max_tokens, lab, rid)
            for s, lab, rid in zip(sentences, labels, ids)]
    return docs, vocab


def _load_model(path):
    try:
        params, hp, words = checkpoint.load(path)
    except OSError as e:
        raise DataError(f"cannot read checkpoint: {e}") from None
    if words is None:
        raise DataError("checkpoint carries no vocabulary")
    vocab = Vocabulary(words)
    if len(vocab) != params.vocab_size:
        raise DataError(f"checkpoint vocabulary has {len(vocab)} words but the embedding has "
                        f"{params.vocab_size} rows")
    return params, hp, vocab


def _report_files(out: Path, report: metrics.EvalReport, prefix=""):
    (out / f"{prefix}report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    for name, roc in zip(LABELS, report.rocs):
        if roc is not None:
            (out / f"{prefix}roc_{name}.csv").write_text(roc.to_csv(), encoding="utf-8")


# ---------------------------------------------------------------- commands


def cmd_preprocess(args):
    hp = M.HyperParams()
    prep = _preprocessor(args.stopwords)
    records = read_jsonl(args.input)
    sentences = tokenize_records(records, prep)
    vocab = build_vocab(_docs_tokens(sentences), args.vocab_size)
    out = _outdir(args.out)
    vocab.save(out / "vocab.txt")
    n_tok = n_oov = n_empty = 0
    with open(out / "corpus.jsonl", "w", encoding="utf-8") as fh:
        for rec, sents in zip(records, sentences):
            fh.write(json.dumps({"id": rec.id, "label": rec.label_name, "sentences": sents}) + "\n")
            toks = [t for s in sents for t in s]
            n_tok += len(toks)
            n_oov += sum(t not in vocab for t in toks)
            n_empty += not toks
    counts = np.bincount([r.label for r in records], minlength=3) if records else np.zeros(3, int)
    summary = {"records": len(records), "per_class": {n: int(c) for n, c in zip(LABELS, counts)},
               "vocab_size": len(vocab), "tokens": n_tok, "oov_rate": n_oov / n_tok if n_tok else 0.0,
               "empty_after_cleaning": n_empty}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _write_config(out, hp, T.TrainConfig(), {"data": str(args.input), "vocab_size": args.vocab_size})
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def _train_settings(args):
    values = read_config(args.config)
    for key in ("data", "glove", "out", "seed", "folds", "epochs", "vocab_size", "stopwords"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    if "data" not in values or "out" not in values:
        raise UsageError("--data and --out are required (flag or config file)")
    return split_config(values)


def cmd_train(args):
    hp, cfg, paths = _train_settings(args)
    prep = _preprocessor(paths.get("stopwords"))
    docs, vocab = load_dataset(paths["data"], hp, vocab_size=paths.get("vocab_size", 18352), prep=prep)
    X, y = stack(docs)
    if len(y) == 0:
        raise DataError("no samples")
    if np.any(y < 0):
        raise DataError("training data must be labelled")
    embedding = None
    if paths.get("glove"):
        try:
            table = load_embeddings(paths["glove"], vocab, hp.embed_dim, cfg.seed)
        except OSError as e:
            raise DataError(f"cannot read embeddings: {e}") from None
        embedding = table.matrix
        log.info("embeddings: %s", table.coverage())
    out = _outdir(paths["out"])
    _write_config(out, hp, cfg, paths)
    vocab.save(out / "vocab.txt")

    def on_fold(fold):
        d = _outdir(out / f"fold_{fold.fold}")
        checkpoint.save(d / "model.ckpt", fold.params, hp, vocab)
        (d / "history.csv").write_text(T.history_to_csv(fold.history), encoding="utf-8")
        _report_files(d, fold.test_report)
        tr, va, te = fold.split
        (d / "split.json").write_text(json.dumps({"train": tr.tolist(), "val": va.tolist(), "test": te.tolist()})
                                      + "\n", encoding="utf-8")
        print(f"fold {fold.fold}: best val acc {fold.best_val_acc:.4f} at epoch {fold.best_epoch}, "
              f"test acc {fold.test_report.report.accuracy:.4f}", flush=True)

    def on_epoch(i, rec):
        log.info("fold %d epoch %d loss %.4f acc %.3f val %.4f/%.3f", i, rec.epoch, rec.train_loss,
                 rec.train_acc, rec.val_loss, rec.val_acc)

    try:
        res = T.cross_validate(X, y, hp, cfg, len(vocab), embedding, on_fold, on_epoch)
    except Exception as e:
        (out / "FAILED").write_text(f"{type(e).__name__}: {e}\n", encoding="utf-8")
        raise
    summary = {"folds": cfg.folds, "mean": res.mean,
               "per_fold": [{"fold": f.fold, "seed": f.seed, "best_epoch": f.best_epoch,
                             "best_val_acc": f.best_val_acc, **f.test_report.headline()} for f in res.folds]}
    (out / "report.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print("mean over folds: " + ", ".join(f"{k} {v:.4f}" for k, v in res.mean.items() if v is not None))
    return EXIT_OK


def cmd_evaluate(args):
    params, hp, vocab = _load_model(args.model)
    docs, _ = load_dataset(args.data, hp, vocab=vocab, prep=_preprocessor(args.stopwords))
    X, y = stack(docs)
    if len(y) == 0:
        raise DataError("no samples")
    probs = M.predict_proba(X, params, hp)
    report = metrics.evaluate(probs, y)
    print(report.format_table())
    if args.out:
        out = _outdir(args.out)
        _report_files(out, report)
        with open(out / "predictions.jsonl", "w", encoding="utf-8") as fh:
            for d, p in zip(docs, probs):
                fh.write(json.dumps({"id": d.id, "true": LABELS[d.label], "predicted": LABELS[int(np.argmax(p))],
                                     "probabilities": [float(v) for v in p]}) + "\n")
        _write_config(out, hp, T.TrainConfig(), {"checkpoint": str(args.model), "data": str(args.data)})
    return EXIT_OK


def _run_text(args):
    params, hp, vocab = _load_model(args.model)
    sents = _preprocessor(getattr(args, "stopwords", None)).sentences(args.text)
    doc = vectorize_sentences(sents, vocab, hp.max_sentences, hp.max_tokens)
    if doc.empty:
        print("warning: text is empty after cleaning; predicting on all-padding input", file=sys.stderr)
    probs, trace = M.forward(doc.grid, params, hp, tokens=doc.tokens)
    return hp, trace


def cmd_predict(args):
    _, trace = _run_text(args)
    print(trace.label + " " + " ".join(f"{n}={p:.6f}" for n, p in zip(LABELS, trace.probs)))
    return EXIT_OK


HUES = {"positive": (214, 39, 40), "negative": (31, 119, 180), "neutral": (127, 127, 127)}


def render_html(export: dict) -> str:
    """Standalone heatmap: one span per token, opacity from per-sentence min-max weight."""
    rgb = ",".join(str(c) for c in HUES[export["predicted"]])
    rows = []
    for i, sent in enumerate(export["sentences"]):
        w = np.asarray(sent["token_weights"], dtype=np.float64)
        span = w.max() - w.min() if w.size else 0.0
        norm = (w - w.min()) / span if span > 0 else np.ones_like(w)
        cells = "".join(f'<span style="background:rgba({rgb},{a:.3f})">{html.escape(tok)}</span> '
                        for tok, a in zip(sent["tokens"], norm))
        sw = export["sentence_weights"][i] if i < len(export["sentence_weights"]) else 0.0
        rows.append(f'<p><small>sentence {i + 1} (weight {sw:.3f})</small><br>{cells}</p>')
    probs = " ".join(f"{k}={v:.3f}" for k, v in export["probabilities"].items())
    return ("<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>attention</title>"
            "<style>body{font-family:sans-serif;max-width:50em;margin:2em auto}"
            "span{padding:1px 3px;border-radius:3px;line-height:2}</style></head><body>\n"
            f"<h3>predicted: {html.escape(export['predicted'])}</h3><p>{html.escape(probs)}</p>\n"
            + "\n".join(rows) + "\n</body></html>\n")


def cmd_attention(args):
    hp, trace = _run_text(args)
    export = trace.to_dict(hp, args.text)
    Path(args.out_json).write_text(json.dumps(export, indent=2) + "\n", encoding="utf-8")
    if args.out_html:
        Path(args.out_html).write_text(render_html(export), encoding="utf-8")
    print(trace.label)
    return EXIT_OK


def cmd_gradcheck(args):
    tol = args.tol
    dtype = np.float64 if args.float64 else L.DTYPE
    reports = []
    seeds = [0] if args.quick else list(range(args.seeds))
    for s in seeds:
        reports += gradcheck.layer_checks(s, tol, dtype)
        if not args.quick:
            reports += gradcheck.end_to_end_checks(s, tol, dtype=dtype)
    worst = {}
    for r in reports:
        if r.name not in worst or not r.passed or r.max_rel_error > worst[r.name].max_rel_error:
            if r.name not in worst or worst[r.name].passed:
                worst[r.name] = r
    for r in worst.values():
        print(r)
    failed = [r for r in reports if not r.passed]
    print(f"{len(reports) - len(failed)}/{len(reports)} checks passed over seeds {seeds}")
    return EXIT_NUMERICAL if failed else EXIT_OK


def cmd_params(args):
    params = M.build(M.HyperParams(), args.vocab_size, L.make_rng(0))
    print(M.format_report(M.parameter_report(params, M.HyperParams())))
    return EXIT_OK


# ---------------------------------------------------------------- entry


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser():
    p = _Parser(prog="macbig", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("preprocess", help="clean, tokenize and index a JSONL corpus")
    s.add_argument("--input", required=True)
    s.add_argument("--vocab-size", type=int, default=18352)
    s.add_argument("--stopwords")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_preprocess)

    s = sub.add_parser("train", help="repeated stratified splits, one model per split")
    s.add_argument("--data")
    s.add_argument("--glove")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--folds", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--vocab-size", type=int)
    s.add_argument("--stopwords")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("evaluate", help="metrics, ROC and per-record predictions")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--stopwords")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_evaluate)

    for name, fn, helptext in (("predict", cmd_predict, "classify one text"),
                               ("attention", cmd_attention, "export attention weights for one text")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--model", required=True)
        s.add_argument("--text", required=True)
        s.add_argument("--stopwords")
        if name == "attention":
            s.add_argument("--out-json", required=True)
            s.add_argument("--out-html")
        s.set_defaults(fn=fn)

    s = sub.add_parser("gradcheck", help="finite-difference checks of every backward pass")
    s.add_argument("--quick", action="store_true", help="layer checks for one seed only")
    s.add_argument("--seeds", type=int, default=3)
    s.add_argument("--tol", type=float, default=1e-3)
    s.add_argument("--float64", action="store_true")
    s.set_defaults(fn=cmd_gradcheck)

    s = sub.add_parser("params", help="parameter table against the reference architecture")
    s.add_argument("--vocab-size", type=int, default=18352)
    s.set_defaults(fn=cmd_params)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.fn(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, checkpoint.CheckpointError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except T.NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as e:
        if str(e) == "no samples":
            print("data error: no samples", file=sys.stderr)
            return EXIT_DATA
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
