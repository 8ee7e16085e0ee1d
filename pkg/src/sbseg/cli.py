"""Command line entry point: synth, rdm, train, infer, eval, shape-stats.

Exit codes: 0 success, 2 usage/configuration/input errors, 1 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import data
from .checkpoint import load_checkpoint
from .config import TASKS, RunConfig
from .errors import ConfigError, FormatError, SbsegError, ShapeError
from .inference import generate, segment
from .instances import binarize, rvdist_to_mask, shape_stats
from .io import atomic_write, read_label_map, read_rgb, write_binary_mask, write_label_map, write_tensor
from .metrics import evaluate_pairs
from .model import ReferenceDenoiser
from .packing import encode_image
from .training import schedule_from_config, train

log = logging.getLogger("sbseg")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
INFER_CHUNK = 32


class UsageError(SbsegError):
    pass


def _parse_set(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _load_config(args, flag_overrides: dict) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file {path} not found")
        cfg.update(RunConfig.parse_text(path.read_text()))
    cfg.update(_parse_set(getattr(args, "set", None)))
    cfg.update({k: v for k, v in flag_overrides.items() if v is not None})
    return cfg


def _write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    atomic_write(path, buf.getvalue().encode())


def cmd_synth(args):
    names = data.synth_dataset(args.out, args.n, args.size, args.density, args.seed)
    print(f"synth: wrote {len(names)} items ({args.size}x{args.size}, density {args.density}) to {args.out}")


def cmd_rdm(args):
    if not Path(args.data).is_dir():
        raise UsageError(f"data directory {args.data} not found")
    n = data.compute_rdms(args.data)
    if n == 0:
        raise UsageError(f"no label maps found under {args.data}")
    print(f"rdm: wrote {n} reverse distance maps to {Path(args.data) / data.RDM_DIR}")


def cmd_train(args):
    cfg = _load_config(args, {
        "data.dir": args.data, "train.iters": args.iters, "train.batch": args.batch,
        "train.lr": args.lr, "train.seed": args.seed, "train.task": args.task,
    })
    cfg.require("data.dir")
    data_dir = Path(cfg["data.dir"])
    if not data_dir.is_dir():
        raise UsageError(f"data directory {data_dir} not found")
    dataset = data.load_dataset(data_dir)
    out = Path(args.out)
    atomic_write(out / "config.echo", cfg.dumps().encode())
    result = train(cfg, dataset, out)
    tail = result.losses[-min(100, len(result.losses)):]
    print(f"train: {len(result.losses)} iterations on {len(dataset)} items, "
          f"final mean loss {float(np.mean(tail)):.5f}; checkpoint at {out / 'checkpoint.bseg'}")


def cmd_infer(args):
    run = Path(args.run)
    ckpt = run / "checkpoint.bseg"
    if not ckpt.is_file():
        raise UsageError(f"checkpoint {ckpt} not found")
    base = {}
    if (run / "config.echo").is_file():
        base = RunConfig.parse_text((run / "config.echo").read_text())
    cfg = RunConfig(base)
    if args.config:
        cfg.update(RunConfig.parse_text(Path(args.config).read_text()))
    cfg.update(_parse_set(args.set))
    if args.dump_every is not None:
        cfg.update({"infer.dump_every": args.dump_every})
    params, _, meta = load_checkpoint(ckpt)
    task = meta.get("task", cfg["train.task"])
    schedule = schedule_from_config(cfg)
    denoiser = ReferenceDenoiser(params, use_ema=cfg["infer.use_ema"])

    images = data.image_files(args.images)
    if not images:
        raise UsageError(f"no .png images found under {args.images}")
    out = Path(args.out) if args.out else run
    dump_every = cfg["infer.dump_every"] or None

    loaded = [(name, read_rgb(path)) for name, path in images.items()]
    by_shape: dict[tuple, list] = {}
    for name, img in loaded:
        by_shape.setdefault(img.shape, []).append((name, img))
    n_instances = 0
    for group in by_shape.values():
        for start in range(0, len(group), INFER_CHUNK):
            chunk = group[start:start + INFER_CHUNK]
            batch = encode_image(np.stack([img for _, img in chunk]))
            res = generate(batch, denoiser, schedule, dump_every)
            for i, (name, _) in enumerate(chunk):
                prob, rdm = res.mask_prob[i], res.rdm_pred[i]
                labels = segment(prob, rdm, task)
                mask = rvdist_to_mask(rdm[..., 0]) if task == "rvdist" else binarize(prob)
                n_instances += int(labels.max(initial=0))
                write_tensor(out / "prob" / f"{name}.bsgt", prob)
                write_tensor(out / "rdm_pred" / f"{name}.bsgt", rdm)
                write_binary_mask(out / "mask" / f"{name}.png", mask)
                write_label_map(out / "pred" / f"{name}{data.LABEL_SUFFIX}", labels)
                for step, t, state in res.trajectory:
                    write_tensor(out / "traj" / name / f"step_{step:03d}.bsgt", state[i])
    print(f"infer: {len(loaded)} images, {n_instances} instances ({task} task, "
          f"{schedule.n_steps} steps) written to {out / 'pred'}")


def cmd_eval(args):
    cfg = _load_config(args, {"eval.radius": args.radius, "eval.iou": args.iou})
    preds = data.label_files(args.pred)
    gts = data.label_files(args.gt)
    if not gts:
        raise UsageError(f"no ground-truth label maps under {args.gt}")
    missing = sorted(set(gts) - set(preds))
    if missing:
        raise UsageError(f"missing predictions for: {', '.join(missing[:5])}")
    pairs = ((name, read_label_map(preds[name]), read_label_map(gts[name])) for name in gts)
    rows, summary = evaluate_pairs(pairs, cfg["eval.radius"], cfg["eval.iou"])
    out = Path(args.out)
    header = ["image", "bpq", "sq", "dq", "tp", "fp", "fn", "precision", "recall", "f1"]
    _write_csv(out / "metrics.csv", header, [[r[k] for k in header] for r in rows])
    atomic_write(out / "summary.txt", (json.dumps(summary, indent=2) + "\n").encode())
    print(f"eval: {summary['n_images']} images, bPQ {summary['bpq']:.4f} SQ {summary['sq']:.4f} "
          f"DQ {summary['dq']:.4f} P {summary['precision']:.4f} R {summary['recall']:.4f} F1 {summary['f1']:.4f}")


def cmd_shape_stats(args):
    rows = []
    for directory in args.labels:
        files = data.label_files(directory)
        if not files:
            raise UsageError(f"no label maps under {directory}")
        for name, path in files.items():
            for st in shape_stats(read_label_map(path)):
                rows.append([name, st.id, st.area, st.perimeter, repr(st.circularity)])
    _write_csv(args.out, ["image", "id", "area", "perimeter", "circularity"], rows)
    print(f"shape-stats: {len(rows)} instances written to {args.out}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sbseg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic ellipse dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--density", type=int, default=6, help="instances per image")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("rdm", help="precompute reverse distance maps for a dataset")
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_rdm)

    p = sub.add_parser("train", help="train the reference denoiser")
    p.add_argument("--data")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--iters", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--task", choices=TASKS)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="segment images with a trained run")
    p.add_argument("--run", required=True, help="run directory holding checkpoint.bseg")
    p.add_argument("--images", required=True, help="image folder or dataset directory")
    p.add_argument("--out", help="output directory (default: the run directory)")
    p.add_argument("--config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--dump-every", type=int, help="save every k-th intermediate state")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score predicted label maps against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--radius", type=float)
    p.add_argument("--iou", type=float)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("shape-stats", help="per-instance area / perimeter / circularity CSV")
    p.add_argument("--labels", required=True, action="append", help="label-map folder (repeatable)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_shape_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        args.func(args)
    except (UsageError, ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SbsegError, FormatError, ShapeError, OSError, ValueError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
