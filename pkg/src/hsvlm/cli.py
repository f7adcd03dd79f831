"""Command-line entry point.

Subcommands: prepare, split, synth-prototypes, train, eval, ablate,
gradcheck, params. Exit codes: 0 success, 1 usage error, 2 data error,
3 numerical failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import hsio, prompts
from .contrast import NegativeSpec
from .encoder import (VisionConfig, count_params, init_model, load_checkpoint,
                      save_checkpoint)
from .errors import DataError, DivergedLoss, HsvlmError, NumericalError
from .evalkit import DEFAULT_PALETTE, build_report, export_map, write_report
from .trainer import (TrainConfig, config_digest, evaluate_model, fit,
                      run_protocol)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser():
    parser = _Parser(prog="hsvlm")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads for the numeric backend "
                             "(HSVLM_THREADS as fallback)")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("prepare",
                       help="scale bands and reduce spectra with PCA")
    p.add_argument("--cube", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--pca", type=int, default=25)
    p.add_argument("--scale", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("split",
                       help="stratified train/test split of labeled pixels")
    p.add_argument("--labels", required=True)
    p.add_argument("--fraction", type=float, default=0.1)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("synth-prototypes",
                       help="seeded random unit prototypes for smoke runs")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--dim", type=int, default=1024)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="run the training protocol")
    p.add_argument("--config", required=True)

    p = sub.add_parser("eval",
                       help="evaluate a checkpoint by nearest-prototype retrieval")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--prototypes", required=True)
    p.add_argument("--cube", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--map", default=None)

    p = sub.add_parser("ablate",
                       help="loss-variant, batch-size, or train-fraction sweeps")
    p.add_argument("--config", required=True)
    p.add_argument("--variant",
                   choices=["full", "no-hard", "no-semi-hard", "vision-only"])
    p.add_argument("--batch-sizes", default=None,
                   help="comma list, e.g. 4,8,16,32,64,128")
    p.add_argument("--fractions", default=None,
                   help="comma list, e.g. 0.1,0.2,0.3,0.4,0.5")
    p.add_argument("--out-prefix", default=None)

    p = sub.add_parser("gradcheck",
                       help="finite-difference check of every kernel")
    p.add_argument("--tolerance", type=float, default=1e-3)

    p = sub.add_parser("params",
                       help="per-section trainable parameter counts")
    p.add_argument("--config", default=None)

    return parser


def _load_json(path):
    with open(path) as f:
        return json.load(f)


def _model_config(doc: dict) -> VisionConfig:
    m = doc.get("model", {})
    return VisionConfig(window=int(m.get("window", 15)),
                        depth=int(m.get("depth", 25)),
                        embed=int(m.get("embed", 64)),
                        layers=int(m.get("layers", 6)),
                        heads=int(m.get("heads", 16)),
                        mlp=int(m.get("mlp", 64)),
                        proj=int(m.get("proj", 1024)),
                        mask_ratio=float(m.get("mask_ratio", 0.0)))


def _train_config(doc: dict) -> TrainConfig:
    t = doc.get("train", {})
    return TrainConfig(epochs=int(t.get("epochs", 50)),
                       batch_size=int(t.get("batch", 32)),
                       lr=float(t.get("lr", 1e-3)),
                       seeds=tuple(t.get("seeds", [1, 2, 3, 4])),
                       negatives=NegativeSpec(k_h=int(t.get("k_h", 4)),
                                              k_s=int(t.get("k_s", 4))),
                       variant=str(t.get("variant", "full")).replace("-", "_"),
                       fraction=float(t.get("fraction", 0.1)))


def _load_inputs(doc: dict):
    ds = doc["dataset"]
    scene = hsio.load_cube(ds["cube"])
    labels = hsio.load_labels(ds["labels"])
    split = hsio.load_split(ds["split"])
    pr = doc.get("prototypes", {})
    if "path" in pr:
        protos = prompts.load_prototypes(pr["path"])
    else:
        s = pr["synth"]
        protos = prompts.synth_prototypes(int(s["C"]), int(s["d"]), int(s["seed"]))
    return scene, labels, split, protos


def _echo_digest(doc: dict) -> str:
    digest = config_digest(doc)
    print(f"config digest: {digest}")
    return digest


def cmd_prepare(args) -> int:
    cube = hsio.load_cube(args.cube)
    labels = hsio.load_labels(args.labels)
    if labels.labels.shape != cube.shape[:2]:
        raise DataError("cube and label map spatial dimensions differ")
    if args.scale:
        cube = hsio.minmax_scale_bands(cube)
    if args.pca > 0:
        model = hsio.pca_fit(cube, k=args.pca)
        cube = hsio.pca_transform(cube, model)
    hsio.save_cube(cube, args.out)
    _echo_digest({"prepare": {"pca": args.pca, "scale": bool(args.scale)}})
    print(f"wrote {args.out} with shape {cube.shape}")
    return 0


def cmd_split(args) -> int:
    labels = hsio.load_labels(args.labels)
    split = hsio.stratified_split(labels, args.fraction, args.seed)
    hsio.save_split(split, args.out)
    _echo_digest({"split": {"fraction": args.fraction, "seed": args.seed}})
    print(f"wrote {args.out}: {split.train.shape[0]} train / "
          f"{split.test.shape[0]} test pixels")
    return 0


def cmd_synth_prototypes(args) -> int:
    protos = prompts.synth_prototypes(args.classes, args.dim, args.seed)
    prompts.save_prototypes(protos, args.out)
    _echo_digest({"synth": {"C": args.classes, "d": args.dim, "seed": args.seed}})
    print(f"wrote {args.out}: {args.classes} x {args.dim}")
    return 0


def cmd_train(args) -> int:
    doc = _load_json(args.config)
    digest = _echo_digest(doc)
    scene, labels, split, protos = _load_inputs(doc)
    model_cfg = _model_config(doc)
    train_cfg = _train_config(doc)
    results, aggregate = run_protocol(train_cfg, model_cfg, scene, labels,
                                      split, protos, digest=digest)
    out = doc.get("out", {})
    first_seed = sorted(results)[0]
    if out.get("checkpoint"):
        save_checkpoint(results[first_seed]["model"], out["checkpoint"])
    if out.get("history"):
        with open(out["history"], "w") as f:
            json.dump({str(s): results[s]["history"].to_dict() for s in sorted(results)},
                      f, sort_keys=True, indent=2)
    if out.get("report"):
        rep = results[first_seed]["report"]
        rep.extra = {k: v for k, v in aggregate.items() if k != "seeds"}
        write_report(rep, out["report"])
    print(f"OA mean {aggregate['oa_mean']:.2f} +/- {aggregate['oa_std']:.2f}, "
          f"kappa mean {aggregate['kappa_mean']:.4f}")
    return 0


def cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    protos = prompts.load_prototypes(args.prototypes)
    if protos.dim != model.config.proj:
        raise DataError(f"DimMismatch: prototype dim {protos.dim} vs "
                        f"checkpoint projection dim {model.config.proj}")
    scene = hsio.load_cube(args.cube)
    labels = hsio.load_labels(args.labels)
    split = hsio.load_split(args.split)
    cm, preds = evaluate_model(model, scene, labels, split.test, protos.matrix)
    digest = _echo_digest({"eval": {"checkpoint": os.path.basename(args.checkpoint)}})
    report = build_report(cm, config_digest=digest)
    write_report(report, args.report)
    if args.map:
        pred_map = np.zeros(labels.labels.shape, dtype=np.int64)
        pred_map[split.test[:, 0], split.test[:, 1]] = preds
        export_map(pred_map, DEFAULT_PALETTE, args.map)
    print(f"OA {report.oa:.2f}, AA {report.aa:.2f}, kappa {report.kappa:.4f}")
    return 0


def cmd_ablate(args) -> int:
    doc = _load_json(args.config)
    digest = _echo_digest(doc)
    scene, labels, split, protos = _load_inputs(doc)
    model_cfg = _model_config(doc)
    base = _train_config(doc)
    prefix = args.out_prefix or doc.get("out", {}).get("report", "ablate")
    if prefix.endswith(".json"):
        prefix = prefix[:-5]

    runs = []
    if args.variant:
        cfg = TrainConfig(**{**base.__dict__, "variant": args.variant.replace("-", "_")})
        runs.append((f"variant_{cfg.variant}", cfg, split))
    if args.batch_sizes:
        for b in (int(x) for x in args.batch_sizes.split(",")):
            cfg = TrainConfig(**{**base.__dict__, "batch_size": b})
            runs.append((f"batch_{b}", cfg, split))
    if args.fractions:
        for fr in (float(x) for x in args.fractions.split(",")):
            cfg = TrainConfig(**{**base.__dict__, "fraction": fr})
            sp = hsio.stratified_split(labels, fr, split.seed)
            runs.append((f"fraction_{fr:g}", cfg, sp))
    if not runs:
        raise UsageError("ablate needs --variant, --batch-sizes, or --fractions")

    for tag, cfg, sp in runs:
        _, aggregate = run_protocol(cfg, model_cfg, scene, labels, sp, protos,
                                    digest=digest)
        path = f"{prefix}_{tag}.json"
        with open(path, "w") as f:
            json.dump({"tag": tag, **aggregate}, f, sort_keys=True, indent=2)
        print(f"{tag}: OA mean {aggregate['oa_mean']:.2f} -> {path}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_gradient_suite

    worst = run_gradient_suite(verbose=True)
    print(f"max relative error {worst:.3e} (tolerance {args.tolerance:g})")
    if worst >= args.tolerance:
        raise NumericalError("gradient check failed")
    return 0


def cmd_params(args) -> int:
    if args.config:
        model_cfg = _model_config(_load_json(args.config))
    else:
        model_cfg = VisionConfig()
    model = init_model(model_cfg, seed=0)
    for section, n in count_params(model).items():
        print(f"{section:12s} {n:>10d}")
    return 0


_HANDLERS = {
    "prepare": cmd_prepare,
    "split": cmd_split,
    "synth-prototypes": cmd_synth_prototypes,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "gradcheck": cmd_gradcheck,
    "params": cmd_params,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.threads is None:
            args.threads = int(os.environ.get("HSVLM_THREADS", "1"))
        return _HANDLERS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DivergedLoss, NumericalError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (DataError, HsvlmError, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        print(f"data error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
