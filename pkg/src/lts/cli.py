"""Command-line entry points: synth, train, eval, predict.

Errors are reported as one JSON line on stderr, with exit code 1 for usage
and configuration problems, 2 for data problems and 3 for runtime failures.
"""

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import torch

from lts.config import ABLATIONS, RunConfig, env_overrides, load_file, merge, resolve, to_dict
from lts.data.dataset import load_jsonl, read_image, resize_arrays, write_jsonl
from lts.data.synth import SynthConfig, generate_synthetic
from lts.data.vocab import build_vocab, tokenize
from lts.errors import ConfigError, DataError, LTSError
from lts.evaluation import evaluate, upsample_prob
from lts.training import load_checkpoint, train
from lts.visualize import save_prediction

log = logging.getLogger("lts")

DATA_INDEX = "data.jsonl"
VAL_INDEX = "val.jsonl"


class UsageError(ConfigError):
    kind = "usage"


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p, train_flags=False):
    p.add_argument("--config", help="YAML or JSON run configuration")
    p.add_argument("--preset", choices=["paper", "desk"])
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--resolution", type=int)
    p.add_argument("--mode", choices=["filter", "transformer", "none"])
    p.add_argument("--n-filters", type=int)
    p.add_argument("--lambda", dest="loc_weight", type=float)
    p.add_argument("--ablate", action="append", choices=ABLATIONS, default=None)
    if train_flags:
        p.add_argument("--batch", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--lr-decay-epoch", type=int)


def build_parser():
    parser = Parser(prog="lts", description="Referring image segmentation: locate, then segment.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("synth", help="generate a synthetic shapes dataset")
    _common(p)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--val-n", type=int, default=0, help="also write a disjoint validation split")
    p.add_argument("--start-index", type=int, default=0)

    p = sub.add_parser("train", help="train a model")
    _common(p, train_flags=True)
    p.add_argument("--data", help="training JSONL index or dataset directory")
    p.add_argument("--val-data", help="validation JSONL index")
    p.add_argument("--resume", help="checkpoint to continue from")

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", help="JSONL index to evaluate on")
    p.add_argument("--per-sample", action="store_true", help="also write per_sample.csv")

    p = sub.add_parser("predict", help="visualize a prediction for one image")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--expression", required=True)
    return parser


def flag_overrides(args) -> dict:
    """Nested config overrides for the flags that were actually given."""
    flags: dict = {}

    def put(path, value):
        if value is None:
            return
        node = flags
        for part in path[:-1]:
            node = node.setdefault(part, {})
        node[path[-1]] = value

    put(("seed",), args.seed)
    put(("out",), args.out)
    put(("resolution",), args.resolution)
    put(("model", "localization", "mode"), args.mode)
    put(("model", "localization", "n_filters"), args.n_filters)
    put(("train", "loc_weight"), args.loc_weight)
    if args.ablate is not None:
        put(("ablate",), sorted(set(args.ablate)))
    for name, path in (("batch", "batch_size"), ("epochs", "epochs"), ("lr", "lr"),
                       ("lr_decay_epoch", "lr_decay_epoch")):
        put(("train", path), getattr(args, name, None))
    for name in ("data", "val_data"):
        put((name,), getattr(args, name, None))
    return flags


def _dataset_paths(data, val_data):
    if data is None:
        raise ConfigError("no training data given (use --data or set 'data' in the config)")
    data = Path(data)
    if data.is_dir():
        if val_data is None and (data / VAL_INDEX).is_file():
            val_data = data / VAL_INDEX
        data = data / DATA_INDEX
    if val_data is None:
        raise ConfigError("no validation data given (use --val-data or write one with synth --val-n)")
    return data, Path(val_data)


def _index_path(path):
    path = Path(path)
    return path / DATA_INDEX if path.is_dir() else path


def _emit(payload):
    print(json.dumps(payload, sort_keys=True))


# ------------------------------------------------------------------ commands

def cmd_synth(args):
    cfg = resolve(args.preset, args.config, flag_overrides(args), os.environ)
    if args.n <= 0:
        raise ConfigError(f"--n must be positive, got {args.n}")
    if args.val_n < 0:
        raise ConfigError(f"--val-n must be non-negative, got {args.val_n}")
    base = SynthConfig(n=args.n, image_size=cfg.resolution, seed=cfg.seed, start_index=args.start_index)
    out = Path(cfg.out)
    train_samples = generate_synthetic(base)
    index = write_jsonl(train_samples, out, DATA_INDEX)
    stats = {"index": str(index), **_synth_stats(train_samples, args.n)}
    if args.val_n:
        val_cfg = dataclasses.replace(base, n=args.val_n, start_index=args.start_index + args.n)
        val_samples = generate_synthetic(val_cfg)
        stats["val_index"] = str(write_jsonl(val_samples, out, VAL_INDEX, image_prefix="val_"))
        stats["val"] = _synth_stats(val_samples, args.val_n)
    _emit(stats)
    return 0


def _synth_stats(samples, requested):
    if not samples:
        raise DataError("synthetic generation produced no samples")
    fractions = [float(s.gt_mask.mean()) for s in samples]
    return {
        "n": len(samples),
        "skipped": requested - len(samples),
        "resolution": samples[0].size[0],
        "vocab_size": len(build_vocab([s.expression for s in samples])),
        "mean_mask_fraction": round(float(np.mean(fractions)), 6),
        "relational": sum(any(f" {w} " in s.expression for w in ("left of", "right of", "above", "below"))
                          for s in samples),
    }


def cmd_train(args):
    cfg = resolve(args.preset, args.config, flag_overrides(args), os.environ)
    data, val_data = _dataset_paths(cfg.data, cfg.val_data)
    train_set = load_jsonl(data, resolution=cfg.resolution)
    val_set = load_jsonl(val_data, resolution=cfg.resolution)
    log.info("training on %d samples, validating on %d", len(train_set), len(val_set))
    result = train(cfg, train_set, val_set, out_dir=cfg.out, resume=args.resume)
    best = max(result.history, key=lambda row: row["val_IoU"])
    _emit({
        "out": cfg.out,
        "epochs": len(result.history),
        "best_epoch": best["epoch"],
        "best_val_IoU": best["val_IoU"],
        "best_val_loc": best["val_loc"],
    })
    return 0


def _checkpoint_config(ckpt, args) -> RunConfig:
    """Checkpoint config, then config file, environment and flags on top."""
    cfg = ckpt.run_config()
    file_data = load_file(args.config) if args.config else {}
    for layer in (file_data, env_overrides(os.environ), flag_overrides(args)):
        cfg = merge(cfg, layer)
    cfg.train.seed = cfg.seed
    cfg.validate()
    return cfg


def cmd_eval(args):
    ckpt = load_checkpoint(args.checkpoint)
    cfg = _checkpoint_config(ckpt, args)
    data = args.data or cfg.val_data
    if data is None:
        raise ConfigError("no evaluation data given (use --data)")
    model = ckpt.build_model(cfg)
    samples = load_jsonl(_index_path(data), resolution=cfg.resolution)
    torch.set_num_threads(cfg.train.num_threads)
    snapshot = {**to_dict(cfg), "checkpoint": str(args.checkpoint), "eval_data": str(data)}
    report = evaluate(model, samples, ckpt.vocabulary(), cfg.model.text.max_len, config=snapshot)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json(with_records=False) + "\n", encoding="utf-8")
    label = "+".join(f"no-{a}" for a in cfg.ablate) or cfg.model.localization.mode
    (out / "report.txt").write_text(report.format_table(label) + "\n", encoding="utf-8")
    if args.per_sample:
        with (out / "per_sample.csv").open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "expression", "iou", "intersection", "union", "loc_hit"])
            for r in report.records:
                writer.writerow([r.index, r.expression, f"{r.iou:.6f}", r.intersection, r.union, int(r.loc_hit)])
    print(report.format_table(label))
    return 0


def cmd_predict(args):
    ckpt = load_checkpoint(args.checkpoint)
    cfg = _checkpoint_config(ckpt, args)
    model = ckpt.build_model(cfg)
    vocab = ckpt.vocabulary()
    image = read_image(args.image)
    h, w = image.shape[:2]
    resized, _ = resize_arrays(image, np.zeros((h, w), np.uint8), cfg.resolution)
    seq = tokenize(args.expression, vocab, cfg.model.text.max_len)
    with torch.no_grad():
        out = model(
            torch.from_numpy(resized).permute(2, 0, 1)[None],
            torch.tensor([seq.indices]),
            torch.tensor([seq.length]),
        )
    prob = upsample_prob(out.mask.logits, (h, w))[0].numpy()
    paths = save_prediction(cfg.out, Path(args.image).stem, image, out.prior.prior[0].numpy(), prob)
    _emit({k: str(v) for k, v in paths.items()})
    return 0


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "predict": cmd_predict}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
        return COMMANDS[args.command](args)
    except LTSError as exc:
        return _fail(exc.kind, exc.exit_code, exc)
    except OSError as exc:
        return _fail("data", DataError.exit_code, exc)
    except (RuntimeError, FloatingPointError) as exc:
        return _fail("runtime", LTSError.exit_code, exc)


def _fail(kind, code, exc):
    message = " ".join(str(exc).split())
    print(json.dumps({"error": kind, "exit_code": code, "message": message}), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
