"""Desk-scale experiment runners behind the CLI.

Each runner is a pure function of (config, seed): datasets, initialization,
batching and dropout all derive from the config's seed, so identical configs
reproduce output files byte-identically in single-threaded mode. Every output
directory gets a manifest tying tables to the exact configuration hash.
"""

import csv
import hashlib
import json
import os
import platform

import numpy as np

from . import __version__, motion, network
from .errors import ConfigError
from .gabor import make_bank, preset_bank_spec


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def write_manifest(out_dir, command, config):
    """Persist the run's configuration, seed and versions; returns the hash."""
    digest = config_hash(config)
    manifest = {
        "command": command,
        "config": config,
        "config_sha256": digest,
        "seed": config.get("seed"),
        "versions": {
            "phasestream": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return digest


def write_table(path, digest, header, rows):
    """CSV whose first line carries the manifest hash of its configuration."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# manifest_sha256={digest}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def merged(defaults, overrides):
    out = dict(defaults)
    for key, value in (overrides or {}).items():
        if key not in defaults:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = value
    return out


def _fmt(x):
    return f"{x:.6g}"


def _dataset(cfg, classes, rgb=False):
    return motion.synth_dataset(
        cfg["n_per_class"],
        classes=classes,
        image_size=cfg["image_size"],
        seed=cfg["seed"],
        n_frames=cfg["n_frames"],
        rgb=rgb,
    )


def _train_config(cfg, seed_offset=0):
    iters = cfg["iterations"]
    return network.TrainConfig(
        batch_size=cfg["batch_size"],
        max_iterations=iters,
        decay_steps=(max(int(iters * 0.45), 1), max(int(iters * 0.75), 2)),
        dropout=cfg["dropout"],
        lambda_reg=cfg["lambda_reg"],
        seed=cfg["seed"] + seed_offset,
    )


def _run(model, tcfg, train_arrays, test_arrays, stop_at=None, eval_every=0,
         metrics_path=None):
    rows, ev = network.train(
        model,
        train_arrays,
        tcfg,
        eval_data=test_arrays,
        eval_every=eval_every or 0,
        stop_at_accuracy=stop_at,
        metrics_path=metrics_path,
    )
    train_eval = network.evaluate(model, *train_arrays)
    return rows, train_eval, ev


# ---------------------------------------------------------------------------
# Exp 1.(a): fixed quadrature vs fixed/learned perpendicular banks

EXP1A_DEFAULTS = {
    "seed": 0,
    "classes": ["right", "left", "up", "down"],
    "n_per_class": 24,
    "image_size": 24,
    "n_frames": 7,
    "iterations": 300,
    "batch_size": 24,
    "dropout": 0.5,
    "lambda_reg": 1e-3,
    "filters_learned": 96,
    "rows": ["quadrature-24", "perpendicular-24", "perpendicular-96", "learned-96"],
    "eval_every": 0,
    "stop_at_accuracy": None,
}

EXP1A_ROWS = {
    "quadrature-24": (24, "quadrature"),
    "perpendicular-24": (24, "perpendicular"),
    "perpendicular-96": (96, "perpendicular"),
}


def _front_model(cfg, in_channels, n_classes, bank=None, filters=None,
                 kernel_size=7, front="complex", seed=0):
    netcfg = network.NetworkConfig(
        front_end=front,
        in_channels=in_channels,
        input_size=cfg["image_size"],
        filters=len(bank) if bank is not None else filters,
        kernel_size=bank.spec.kernel_size if bank is not None else kernel_size,
        n_classes=n_classes,
    )
    model = network.build_model(netcfg, seed=seed, dropout=cfg["dropout"])
    if bank is not None:
        network.freeze_front_end(model, bank)
    return model


def run_exp1a(config, out_dir):
    cfg = merged(EXP1A_DEFAULTS, config)
    digest = write_manifest(out_dir, "exp1a-filters", cfg)
    ds = _dataset(cfg, cfg["classes"])
    train_arrays = motion.build_arrays(ds.train, "dgray")
    test_arrays = motion.build_arrays(ds.test, "dgray")
    table = []
    for row_name in cfg["rows"]:
        if row_name == "learned-96":
            bank = None
            model = _front_model(
                cfg, 1, len(cfg["classes"]),
                filters=cfg["filters_learned"], seed=cfg["seed"],
            )
            n_filters = cfg["filters_learned"]
        else:
            n_filters, mode = EXP1A_ROWS[row_name]
            bank = make_bank(preset_bank_spec(n_filters, mode))
            model = _front_model(cfg, 1, len(cfg["classes"]), bank=bank, seed=cfg["seed"])
        tcfg = _train_config(cfg)
        _, train_eval, test_eval = _run(
            model, tcfg, train_arrays, test_arrays,
            stop_at=cfg["stop_at_accuracy"], eval_every=cfg["eval_every"],
        )
        table.append([row_name, n_filters, _fmt(train_eval.accuracy), _fmt(test_eval.accuracy)])
    write_table(
        os.path.join(out_dir, "exp1a.csv"), digest,
        ["filter_type", "n_filters", "train_acc", "test_acc"], table,
    )
    return table


# ---------------------------------------------------------------------------
# Exp 1.(b): input modalities x architectures

EXP1B_DEFAULTS = {
    "seed": 0,
    "classes": list(motion.SYNTH_CLASSES),
    "n_per_class": 24,
    "image_size": 24,
    "n_frames": 7,
    "iterations": 400,
    "batch_size": 24,
    "dropout": 0.5,
    "lambda_reg": 1e-3,
    "filters": 16,
    "kernel_size": 7,
    "inputs": ["dgray", "drgb", "dphase", "5xdgray", "5xdphase"],
    "archs": ["plain", "complex"],
    "eval_every": 0,
    "stop_at_accuracy": None,
}

_INPUT_KINDS = {
    "dgray": ("dgray", 1),
    "drgb": ("drgb", 1),
    "dphase": ("dphase", 1),
    "5xdgray": ("dgray", 5),
    "5xdphase": ("dphase", 5),
}


def run_exp1b(config, out_dir):
    cfg = merged(EXP1B_DEFAULTS, config)
    digest = write_manifest(out_dir, "exp1b-inputs", cfg)
    ds = _dataset(cfg, cfg["classes"], rgb=True)
    bank = make_bank(preset_bank_spec(24, "quadrature"))
    matrix = []
    per_class_rows = []
    for input_name in cfg["inputs"]:
        kind, depth = _INPUT_KINDS[input_name]
        tr = motion.build_arrays(ds.train, kind, bank=bank, stack_depth=depth)
        te = motion.build_arrays(ds.test, kind, bank=bank, stack_depth=depth)
        in_channels = tr[0].shape[1]
        row = [input_name]
        evals = {}
        for arch in cfg["archs"]:
            model = _front_model(
                cfg, in_channels, len(cfg["classes"]),
                filters=cfg["filters"], kernel_size=cfg["kernel_size"],
                front=arch, seed=cfg["seed"],
            )
            tcfg = _train_config(cfg)
            _, _, test_eval = _run(
                model, tcfg, tr, te,
                stop_at=cfg["stop_at_accuracy"], eval_every=cfg["eval_every"],
            )
            row.append(_fmt(test_eval.accuracy))
            evals[arch] = test_eval
        matrix.append(row)
        if input_name == "dgray":
            for label, name in enumerate(cfg["classes"]):
                accs = [_fmt(evals[a].class_accuracy(label)) for a in cfg["archs"]]
                per_class_rows.append([name] + accs)
    write_table(
        os.path.join(out_dir, "exp1b_matrix.csv"), digest,
        ["input"] + list(cfg["archs"]), matrix,
    )
    if per_class_rows:
        write_table(
            os.path.join(out_dir, "exp1b_per_class.csv"), digest,
            ["class"] + [f"{a}_acc" for a in cfg["archs"]], per_class_rows,
        )
    return matrix


# ---------------------------------------------------------------------------
# Exp 1.(c): temporal shuffle ablation

EXP1C_DEFAULTS = {
    "seed": 0,
    "classes": ["right", "left", "up", "down", "expand", "contract"],
    "n_per_class": 24,
    "image_size": 24,
    "n_frames": 7,
    "iterations": 400,
    "batch_size": 24,
    "dropout": 0.5,
    "lambda_reg": 1e-3,
    "filters": 16,
    "kernel_size": 7,
    "front_end": "complex",
    "eval_every": 0,
    "stop_at_accuracy": None,
}


def run_exp1c(config, out_dir):
    cfg = merged(EXP1C_DEFAULTS, config)
    digest = write_manifest(out_dir, "exp1c-shuffle", cfg)
    ds = _dataset(cfg, cfg["classes"])
    tr = motion.build_arrays(ds.train, "dgray")
    te = motion.build_arrays(ds.test, "dgray")
    te_shuffled = motion.build_arrays(ds.test, "dgray", shuffle_seed=cfg["seed"] + 9000)
    model = _front_model(
        cfg, 1, len(cfg["classes"]),
        filters=cfg["filters"], kernel_size=cfg["kernel_size"],
        front=cfg["front_end"], seed=cfg["seed"],
    )
    tcfg = _train_config(cfg)
    _run(model, tcfg, tr, te, stop_at=cfg["stop_at_accuracy"], eval_every=cfg["eval_every"])
    std = network.evaluate(model, *te)
    shuf = network.evaluate(model, te_shuffled[0], te_shuffled[1])
    rows = []
    for label, name in enumerate(cfg["classes"]):
        s = std.class_accuracy(label)
        h = shuf.class_accuracy(label)
        rel = (s - h) / s if s > 0 else 0.0
        rows.append([name, _fmt(s), _fmt(h), _fmt(rel)])
    rel_all = (std.accuracy - shuf.accuracy) / std.accuracy if std.accuracy > 0 else 0.0
    rows.append(["overall", _fmt(std.accuracy), _fmt(shuf.accuracy), _fmt(rel_all)])
    write_table(
        os.path.join(out_dir, "exp1c.csv"), digest,
        ["class", "standard_acc", "shuffled_acc", "relative_change"], rows,
    )
    return rows


# ---------------------------------------------------------------------------
# Plain training entry (used by the `train` CLI command)

TRAIN_DEFAULTS = {
    "seed": 0,
    "classes": ["right", "left", "up", "down"],
    "n_per_class": 40,
    "image_size": 32,
    "n_frames": 7,
    "iterations": 2000,
    "batch_size": 32,
    "dropout": 0.5,
    "lambda_reg": 1e-3,
    "filters": 16,
    "kernel_size": 7,
    "front_end": "complex",
    "input": "dgray",
    "eval_every": 100,
    "stop_at_accuracy": None,
}


def run_train(config, out_dir):
    cfg = merged(TRAIN_DEFAULTS, config)
    digest = write_manifest(out_dir, "train", cfg)
    ds = _dataset(cfg, cfg["classes"], rgb=cfg["input"] == "drgb")
    kind, depth = _INPUT_KINDS[cfg["input"]]
    bank = make_bank(preset_bank_spec(24, "quadrature")) if kind == "dphase" else None
    tr = motion.build_arrays(ds.train, kind, bank=bank, stack_depth=depth)
    te = motion.build_arrays(ds.test, kind, bank=bank, stack_depth=depth)
    model = _front_model(
        cfg, tr[0].shape[1], len(cfg["classes"]),
        filters=cfg["filters"], kernel_size=cfg["kernel_size"],
        front=cfg["front_end"], seed=cfg["seed"],
    )
    tcfg = _train_config(cfg)
    rows, train_eval, test_eval = _run(
        model, tcfg, tr, te,
        stop_at=cfg["stop_at_accuracy"], eval_every=cfg["eval_every"],
        metrics_path=os.path.join(out_dir, "metrics.csv"),
    )
    network.save_checkpoint(model, os.path.join(out_dir, "checkpoint.bin"))
    write_table(
        os.path.join(out_dir, "summary.csv"), digest,
        ["iterations_run", "train_acc", "test_acc"],
        [[len(rows), _fmt(train_eval.accuracy), _fmt(test_eval.accuracy)]],
    )
    return test_eval
