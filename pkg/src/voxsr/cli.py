"""Command-line entry point.

Exit codes: 0 success, 1 validation or tolerance failure, 2 I/O or
configuration error (argparse usage errors also exit 2).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .degradation import DegradationSpec, DivisibilityError, degrade
from .phantom import PhantomSpec, make_phantom, phantom_corpus
from .results import format_table, read_csv, rows_to_csv
from .tensor import ShapeError
from .volume import VolFormatError, read_vol, write_vol

logger = logging.getLogger("voxsr")

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG = 0, 1, 2


class ConfigError(Exception):
    pass


class ValidationFailure(Exception):
    pass


def _load_json(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return cfg


def _outdir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_ndjson(records, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def _write_text(text: str, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def read_paired_dir(path, factors=None):
    """Pairs ``<name>.lr.vol`` / ``<name>.hr.vol`` in name order."""
    from .trainer import PairSet

    d = Path(path)
    if not d.is_dir():
        raise FileNotFoundError(f"paired directory not found: {d}")
    names = sorted(p.name[:-len(".hr.vol")] for p in d.glob("*.hr.vol"))
    if not names:
        raise ConfigError(f"{d}: no <name>.hr.vol files")
    pairs = []
    for n in names:
        lr = d / f"{n}.lr.vol"
        if not lr.exists():
            raise ConfigError(f"{d}: {n}.hr.vol has no matching {n}.lr.vol")
        pairs.append((read_vol(lr), read_vol(d / f"{n}.hr.vol")))
    return PairSet.from_volumes(pairs, factors)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------
def cmd_phantom(args) -> int:
    cfg = _load_json(args.config)
    out = _outdir(args.outdir)
    if "corpus" in cfg:
        c = cfg["corpus"]
        unknown = set(cfg) - {"corpus"} | set(c) - {"counts", "extents", "seed", "texture_amplitude"}
        if unknown:
            raise ConfigError(f"unknown corpus keys: {sorted(unknown)}")
        vols = phantom_corpus(c.get("counts", (23, 23, 250)), c.get("extents", (32, 32, 32)),
                              seed=c.get("seed", 0), texture_amplitude=c.get("texture_amplitude", 0.05))
        seen = {}
        for v in vols:
            i = seen[v.label] = seen.get(v.label, -1) + 1
            write_vol(v, out / f"{v.label}_{i:04d}.vol")
        print(f"wrote {len(vols)} phantoms to {out}")
    else:
        spec = PhantomSpec(**{**cfg, "extents": tuple(cfg.get("extents", (16, 16, 16)))})
        path = out / f"{spec.class_kind}_{spec.seed}.vol"
        write_vol(make_phantom(spec), path)
        print(f"wrote {path}")
    return EXIT_OK


def _degradation_from(cfg: dict) -> DegradationSpec:
    if "task" not in cfg and "factors" not in cfg:
        cfg = {**cfg, "task": "isotropic"}
    return DegradationSpec.from_dict(cfg)


def cmd_degrade(args) -> int:
    spec = _degradation_from(_load_json(args.config))
    hr = read_vol(args.input)
    lr = degrade(hr, spec)
    write_vol(lr, args.output)
    print(f"{args.input} {hr.extents} -> {args.output} {lr.extents}")
    return EXIT_OK


def cmd_pretrain_vgg(args) -> int:
    from .trainer import CorpusConfig, VggTrainConfig, pretrain_vgg

    cfg = _load_json(args.config)
    unknown = set(cfg) - {"corpus", "train"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    train_cfg = VggTrainConfig.from_dict(cfg.get("train", {}))
    if args.input:
        corpus = [read_vol(p) for p in sorted(Path(args.input).glob("*.vol"))]
        if not corpus:
            raise ConfigError(f"{args.input}: no .vol files")
    else:
        corpus = CorpusConfig(**cfg.get("corpus", {}))
    res = pretrain_vgg(corpus, train_cfg)
    out = _outdir(args.outdir)
    save_checkpoint(res.checkpoint, out / "vgg.ck")
    _write_ndjson(res.log, out / "vgg_log.ndjson")
    acc = res.checkpoint.meta["accuracy"]
    print("accuracy " + " ".join(f"{k}={v:.3f}" for k, v in acc.items()))
    return EXIT_OK


def cmd_train(args) -> int:
    from .trainer import DataConfig, TrainConfig, load_vgg, phantom_pairs, train_gan

    cfg = _load_json(args.config)
    unknown = set(cfg) - {"train", "data", "train_dir", "val_dir", "vgg_checkpoint"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    tc = TrainConfig.from_dict(cfg.get("train", {}))
    if "train_dir" in cfg:
        train = read_paired_dir(cfg["train_dir"], tc.factors)
        val = read_paired_dir(cfg["val_dir"], tc.factors) if "val_dir" in cfg else None
    else:
        data = DataConfig.from_dict(cfg.get("data", {}))
        train = phantom_pairs(data, tc.degradation, "train")
        val = phantom_pairs(data, tc.degradation, "val")
    vgg = load_vgg(load_checkpoint(cfg["vgg_checkpoint"])) if cfg.get("vgg_checkpoint") else None
    resume = load_checkpoint(args.resume) if args.resume else None
    out = _outdir(args.outdir)
    res = train_gan(tc, train, val, vgg=vgg, resume=resume,
                    on_checkpoint=lambda ck: save_checkpoint(ck, out / f"step_{ck.step:06d}.ck"))
    save_checkpoint(res.checkpoint, out / "model.ck")
    _write_ndjson(res.log, out / "train_log.ndjson")
    last = res.log[-1] if res.log else {}
    print(f"trained {tc.steps} steps; final losses {last.get('loss', {})}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .trainer import TrainConfig, evaluate

    ck = load_checkpoint(args.checkpoint)
    pairs = read_paired_dir(args.input, TrainConfig.from_dict(ck.config).factors)
    row = evaluate(ck, pairs, experiment=args.name)
    text = rows_to_csv([row])
    if args.output:
        _write_text(text, args.output)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_superres(args) -> int:
    from .trainer import load_generator, super_resolve

    G = load_generator(load_checkpoint(args.checkpoint))
    lr = read_vol(args.input)
    sr = super_resolve(G, lr)
    write_vol(sr, args.output)
    print(f"{args.input} {lr.extents} -> {args.output} {sr.extents}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradsuite import run_suite

    results = run_suite()
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{r.name:{width}}  max_rel_err={r.error:.3e}  tol={r.tol:.0e}  "
              f"{'ok' if r.ok else 'FAIL'}  ({r.seconds:.2f}s)")
    failed = [r.name for r in results if not r.ok]
    if failed:
        print(f"gradcheck failed: {', '.join(failed)}")
        return EXIT_VALIDATION
    print(f"gradcheck passed: {len(results)} cases")
    return EXIT_OK


DEFAULT_ABLATION_VGG = {
    "pretrain": {"corpus": {"counts": [23, 23, 250], "extents": [32, 32, 32], "eval_per_class": 4},
                 "train": {"vgg": {"first_channels": 8}, "steps": 60, "batch_size": 4}},
}


def _ablation_vgg(spec: Optional[dict]):
    from .trainer import CorpusConfig, VggTrainConfig, load_vgg, pretrain_vgg

    spec = DEFAULT_ABLATION_VGG if spec is None else spec
    if "checkpoint" in spec:
        return load_vgg(load_checkpoint(spec["checkpoint"]))
    pre = spec.get("pretrain", {})
    res = pretrain_vgg(CorpusConfig(**pre.get("corpus", {})), VggTrainConfig.from_dict(pre.get("train", {})))
    return load_vgg(res.checkpoint)


def cmd_ablate(args) -> int:
    from .ablation import CELLS, AblationConfig, ablation_run, build_grid, select_cells, select_tasks

    cfg = _load_json(args.config)
    vgg_spec = cfg.pop("vgg", None)
    ab = AblationConfig.from_dict(cfg)
    cells = select_cells(args.grid)
    tasks = select_tasks(args.task)
    grid = build_grid(ab, cells, tasks)
    needs_vgg = any(perc for name, _, _, perc in CELLS if name in cells)
    vgg = _ablation_vgg(vgg_spec) if needs_vgg else None
    rows = ablation_run(grid, ab.data, vgg=vgg)
    out = _outdir(args.outdir)
    _write_text(rows_to_csv(rows), out / "ablation.csv")
    table = format_table(rows)
    _write_text(table, out / "ablation.txt")
    sys.stdout.write(table)
    errors = [r for r in rows if r.status != "ok"]
    if errors:
        print(f"{len(errors)} cell(s) failed: {', '.join(f'{r.experiment} ({r.task})' for r in errors)}")
    return EXIT_OK


def cmd_report(args) -> int:
    table = format_table(read_csv(args.input))
    if args.output:
        _write_text(table, args.output)
    sys.stdout.write(table)
    return EXIT_OK


# ---------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="voxsr", description="Volumetric super-resolution toolkit.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    s = sub.add_parser("phantom", help="generate phantom .vol files")
    s.add_argument("--config", help="PhantomSpec JSON, or {\"corpus\": {...}}")
    s.add_argument("--outdir", required=True)
    s.set_defaults(func=cmd_phantom)

    s = sub.add_parser("degrade", help="blur, decimate and add noise to an HR volume")
    s.add_argument("--config", help="degradation JSON (task or factors, noise_sigma, noise_seed, sigmas)")
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_degrade)

    s = sub.add_parser("pretrain-vgg", help="train the 3-class VGG used by the perceptual loss")
    s.add_argument("--config", help="{\"corpus\": {...}, \"train\": {...}} JSON")
    s.add_argument("--input", help="directory of labelled .vol files (default: phantom corpus)")
    s.add_argument("--outdir", required=True)
    s.set_defaults(func=cmd_pretrain_vgg)

    s = sub.add_parser("train", help="train a generator (optionally adversarially)")
    s.add_argument("--config", required=True)
    s.add_argument("--outdir", required=True)
    s.add_argument("--resume", help="checkpoint to continue from")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint on a paired directory")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--input", required=True, help="directory of <name>.lr.vol / <name>.hr.vol")
    s.add_argument("--output", help="CSV path")
    s.add_argument("--name", default="model", help="experiment name in the row")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("superres", help="super-resolve one LR volume")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_superres)

    s = sub.add_parser("gradcheck", help="run the finite-difference gradient suite")
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("ablate", help="train and evaluate the ablation grid")
    s.add_argument("--grid", default="full", help="'full' or comma-separated cell names")
    s.add_argument("--task", default="both", choices=("isotropic", "anisotropic", "both"))
    s.add_argument("--config", help="ablation JSON")
    s.add_argument("--outdir", required=True)
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("report", help="format an ablation CSV as a table")
    s.add_argument("--input", required=True)
    s.add_argument("--output")
    s.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ShapeError, ValidationFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DivisibilityError, VolFormatError, CheckpointError, ConfigError, OSError,
            ValueError, TypeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
