"""Command-line entry points.

BLAS thread pinning must happen before numpy first loads, so this module
inspects argv for --threads at import time; `--threads 1` is the
deterministic single-threaded mode the reproducibility checks rely on.
"""

import argparse
import json
import os
import sys


def _pin_threads(argv):
    n = None
    for i, arg in enumerate(argv):
        if arg == "--threads" and i + 1 < len(argv):
            n = argv[i + 1]
        elif arg.startswith("--threads="):
            n = arg.split("=", 1)[1]
    if n and n.isdigit():
        for var in (
            "OMP_NUM_THREADS",
            "OPENBLAS_NUM_THREADS",
            "MKL_NUM_THREADS",
            "NUMEXPR_NUM_THREADS",
        ):
            os.environ[var] = n


_pin_threads(sys.argv)

import numpy as np  # noqa: E402

from . import container, experiments, motion, network, viz  # noqa: E402
from .gabor import FilterBankSpec, load_bank, make_bank, preset_bank_spec, save_bank  # noqa: E402


def _load_config(path):
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _common(sub):
    sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument("--seed", type=int, default=None, help="seed override")
    sub.add_argument("--config", default=None, help="JSON config file")
    sub.add_argument("--threads", type=int, default=None,
                     help="BLAS thread count (1 = deterministic mode)")


def _experiment_config(args):
    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


def cmd_synth_data(args):
    cfg = experiments.merged(
        {
            "seed": 0,
            "classes": list(motion.SYNTH_CLASSES),
            "n_per_class": 8,
            "image_size": 32,
            "n_frames": 7,
            "rgb": False,
        },
        _experiment_config(args),
    )
    digest = experiments.write_manifest(args.out, "synth-data", cfg)
    ds = motion.synth_dataset(
        cfg["n_per_class"],
        classes=cfg["classes"],
        image_size=cfg["image_size"],
        seed=cfg["seed"],
        n_frames=cfg["n_frames"],
        rgb=cfg["rgb"],
    )
    index = {"classes": ds.classes, "splits": {}, "manifest_sha256": digest}
    for split in ("train", "test"):
        names = []
        for i, clip in enumerate(getattr(ds, split)):
            name = f"{split}_{ds.classes[clip.label]}_{i:04d}"
            motion.save_clip(clip, os.path.join(args.out, name))
            names.append(name)
        index["splits"][split] = names
    with open(os.path.join(args.out, "dataset.json"), "w", encoding="utf-8") as fh:
        json.dump(index, fh, indent=1)
    print(f"wrote {sum(len(v) for v in index['splits'].values())} clips to {args.out}")


def cmd_gen_filters(args):
    cfg = experiments.merged(
        {
            "seed": 0,
            "filters": 24,
            "mode": "quadrature",
            "kernel_size": None,
            "frequencies": None,
            "normalize": True,
        },
        _experiment_config(args),
    )
    if args.filters:
        cfg["filters"] = args.filters
    if args.mode:
        cfg["mode"] = args.mode
    experiments.write_manifest(args.out, "gen-filters", cfg)
    if cfg["frequencies"] or cfg["kernel_size"]:
        base = preset_bank_spec(cfg["filters"], cfg["mode"], normalize=cfg["normalize"])
        spec = FilterBankSpec(
            kernel_size=cfg["kernel_size"] or base.kernel_size,
            frequencies=cfg["frequencies"] or base.frequencies,
            orientations=base.orientations,
            mode=cfg["mode"],
            normalize=cfg["normalize"],
        )
    else:
        spec = preset_bank_spec(cfg["filters"], cfg["mode"], normalize=cfg["normalize"])
    bank = make_bank(spec)
    save_bank(bank, os.path.join(args.out, "bank.bin"))
    for part in ("real", "imag"):
        viz.save_image(
            os.path.join(args.out, f"grid_{part}.png"), viz.bank_grid(bank, part=part)
        )
    print(f"wrote {len(bank)} kernels ({spec.mode}, {spec.kernel_size}px) to {args.out}")


def cmd_extract_phase(args):
    cfg = _experiment_config(args)
    experiments.write_manifest(args.out, "extract-phase", cfg or {"seed": 0})
    clip = motion.load_frames(args.frames)
    bank = load_bank(args.bank) if args.bank else make_bank(preset_bank_spec(24, "quadrature"))
    maps = np.stack([motion.phase_image(f, bank) for f in clip.frames])
    container.save_tensors(os.path.join(args.out, "phase.bin"), {"maps": maps})
    if args.images:
        for t in range(maps.shape[0]):
            viz.save_image(
                os.path.join(args.out, f"phase_{t:04d}.png"),
                viz.signed_to_rgb(maps[t].mean(axis=0)),
            )
    print(f"wrote phase maps {maps.shape} to {args.out}")


def cmd_preprocess(args):
    cfg = _experiment_config(args)
    experiments.write_manifest(
        args.out, "preprocess", {**(cfg or {}), "mode": args.mode, "stack": args.stack}
    )
    clip = motion.load_frames(args.frames)
    if args.mode == "dphase":
        bank = load_bank(args.bank) if args.bank else make_bank(preset_bank_spec(24, "quadrature"))
        inputs = motion.temporal_phase_derivative(clip, bank)
    else:
        inputs = motion.temporal_derivative(clip, args.mode)
    if args.stack > 1:
        stacked = motion.stack(inputs, depth=args.stack)
        maps = stacked.data[None]
        kind = stacked.kind
        depth = stacked.stack_depth
    else:
        maps = np.stack([m.data for m in inputs])
        kind = inputs[0].kind
        depth = 1
    container.save_tensors(os.path.join(args.out, "inputs.bin"), {"maps": maps})
    with open(os.path.join(args.out, "inputs.json"), "w", encoding="utf-8") as fh:
        json.dump({"kind": kind, "stack_depth": depth, "n_maps": int(maps.shape[0])}, fh)
    if args.images:
        for t in range(maps.shape[0]):
            viz.save_image(
                os.path.join(args.out, f"map_{t:04d}.png"),
                viz.signed_to_rgb(maps[t].mean(axis=0)),
            )
    print(f"wrote {maps.shape[0]} maps ({kind}) to {args.out}")


def cmd_visualize(args):
    experiments.write_manifest(args.out, "visualize", {"seed": 0, "input": args.input})
    sidecar = args.input + ".json"
    with open(sidecar, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    if "params" in meta:  # filter bank
        bank = load_bank(args.input)
        for part in ("real", "imag"):
            viz.save_image(
                os.path.join(args.out, f"bank_{part}.png"), viz.bank_grid(bank, part=part)
            )
        print(f"rendered bank grids to {args.out}")
    elif "net_config" in meta:  # checkpoint
        model = network.load_checkpoint(args.input)
        front = model.front_end
        if front is None:
            raise SystemExit("checkpoint has no complex front end to render")
        clayer = front.clayer
        w_imag = clayer.w_imag[:, 0]
        w_real = clayer.w_real[:, 0]
        cols = 8
        rows = (w_imag.shape[0] + cols - 1) // cols
        pad_count = rows * cols - w_imag.shape[0]
        for name, w in (("imag", w_imag), ("real", w_real)):
            tiles = [viz.signed_to_rgb(w[i]) for i in range(w.shape[0])]
            tiles += [np.full_like(tiles[0], 255)] * pad_count
            viz.save_image(os.path.join(args.out, f"filters_{name}.png"),
                           viz.tile_rgb(tiles, rows, cols))
        print(f"rendered learned filters to {args.out}")
    else:  # preprocessed maps
        maps = container.load_tensors(args.input)["maps"]
        for t in range(maps.shape[0]):
            viz.save_image(
                os.path.join(args.out, f"map_{t:04d}.png"),
                viz.signed_to_rgb(maps[t].mean(axis=0)),
            )
        print(f"rendered {maps.shape[0]} maps to {args.out}")


def _run_experiment(runner, name):
    def handler(args):
        cfg = _experiment_config(args)
        result = runner(cfg, args.out)
        print(f"{name} done; outputs in {args.out}")
        return result

    return handler


def build_parser():
    parser = argparse.ArgumentParser(
        prog="phasestream",
        description="Phase-based Eulerian motion representations: filters, "
        "preprocessing, training and desk-scale experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate the synthetic labeled clips")
    _common(p)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("gen-filters", help="materialize a Gabor filter bank")
    _common(p)
    p.add_argument("--filters", type=int, choices=(24, 96), default=None)
    p.add_argument("--mode", choices=("quadrature", "perpendicular"), default=None)
    p.set_defaults(func=cmd_gen_filters)

    p = sub.add_parser("extract-phase", help="per-frame phase maps of a clip")
    _common(p)
    p.add_argument("--frames", required=True, help="frame directory")
    p.add_argument("--bank", default=None, help="bank container (default: 24 quadrature)")
    p.add_argument("--images", action="store_true", help="also write PNG maps")
    p.set_defaults(func=cmd_extract_phase)

    p = sub.add_parser("preprocess", help="temporal-derivative inputs of a clip")
    _common(p)
    p.add_argument("--frames", required=True)
    p.add_argument("--mode", choices=("dgray", "drgb", "dphase"), default="dgray")
    p.add_argument("--stack", type=int, default=1)
    p.add_argument("--bank", default=None)
    p.add_argument("--images", action="store_true")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train a classifier on synthetic clips")
    _common(p)
    p.set_defaults(func=_run_experiment(experiments.run_train, "train"))

    p = sub.add_parser("exp1a", help="fixed quadrature vs perpendicular banks")
    _common(p)
    p.set_defaults(func=_run_experiment(experiments.run_exp1a, "exp1a"))

    p = sub.add_parser("exp1b", help="input modality x architecture matrix")
    _common(p)
    p.set_defaults(func=_run_experiment(experiments.run_exp1b, "exp1b"))

    p = sub.add_parser("exp1c", help="temporal shuffle ablation")
    _common(p)
    p.set_defaults(func=_run_experiment(experiments.run_exp1c, "exp1c"))

    p = sub.add_parser("visualize", help="render banks, checkpoints or maps")
    _common(p)
    p.add_argument("--input", required=True, help="container file to render")
    p.set_defaults(func=cmd_visualize)

    return parser


def main(argv=None):
    if argv is not None:
        _pin_threads(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    os.makedirs(args.out, exist_ok=True)
    args.func(args)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
