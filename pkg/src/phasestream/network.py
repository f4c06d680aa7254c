"""Model assembly, training loop and evaluation.

The classifier is a front end (complex phase-extracting or plain
convolutional) feeding a small convolutional trunk. The desk-scale defaults
keep the full-scale protocol's shape (momentum SGD, stepped lr decay,
uniform-over-classes batches) at a size that trains on a laptop CPU; the
full-scale schedule remains expressible through TrainConfig.
"""

import csv
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import container, ops
from .errors import ConfigError, ShapeError, TrainingDiverged
from .gabor import load_bank, save_bank  # noqa: F401  (checkpoint companions)
from .layers import (
    BatchNormLayer,
    ConvLayer,
    DenseLayer,
    DropoutLayer,
    FlattenLayer,
    MaxPoolLayer,
    PhaseFrontEnd,
    ReLULayer,
)
from .optim import SgdMomentumState, sgd_momentum_step
from .phase_layer import ComplexConvLayer


def desk_trunk():
    """Small default trunk: conv5x5/64/s2 - relu - pool - conv3x3/128 - relu -
    pool - fc256 - relu - dropout (classifier fc appended by build_model)."""
    return [
        {"type": "conv", "filters": 64, "kernel": 5, "stride": 2},
        {"type": "relu"},
        {"type": "maxpool"},
        {"type": "conv", "filters": 128, "kernel": 3},
        {"type": "relu"},
        {"type": "maxpool"},
        {"type": "fc", "units": 256},
        {"type": "relu"},
        {"type": "dropout"},
    ]


def vgg_m_trunk():
    """Full-scale trunk shape (first layer lives in the front end). Expressible
    for completeness; training it at scale is outside the desk tests."""
    return [
        {"type": "maxpool"},
        {"type": "conv", "filters": 256, "kernel": 5, "stride": 2},
        {"type": "relu"},
        {"type": "maxpool"},
        {"type": "conv", "filters": 512, "kernel": 3},
        {"type": "relu"},
        {"type": "conv", "filters": 512, "kernel": 3},
        {"type": "relu"},
        {"type": "conv", "filters": 512, "kernel": 3},
        {"type": "relu"},
        {"type": "maxpool"},
        {"type": "fc", "units": 4096},
        {"type": "relu"},
        {"type": "dropout"},
        {"type": "fc", "units": 2048},
        {"type": "relu"},
        {"type": "dropout"},
    ]


@dataclass
class NetworkConfig:
    front_end: str = "complex"
    in_channels: int = 1
    input_size: int = 32
    filters: int = 16
    kernel_size: int = 7
    front_stride: int = 1
    sigma_e: float | None = None
    phase_eps: float = 1e-8
    n_classes: int = 4
    trunk: list = field(default_factory=desk_trunk)

    def __post_init__(self):
        if self.front_end not in ("complex", "plain"):
            raise ConfigError(f"unknown front end {self.front_end!r}")
        if self.front_end == "complex" and self.kernel_size % 2 == 0:
            raise ConfigError("complex front end needs an odd square kernel")


@dataclass
class TrainConfig:
    batch_size: int = 32
    momentum: float = 0.9
    base_lr: float = 0.01
    decay_steps: tuple = (900, 1500)
    decay_factor: float = 0.1
    dropout: float = 0.5
    max_iterations: int = 2000
    lambda_reg: float = 1e-3
    seed: int = 0
    precision: str = "float32"

    def __post_init__(self):
        steps = tuple(self.decay_steps)
        if any(b <= a for a, b in zip(steps, steps[1:])) or (
            steps and steps[-1] >= self.max_iterations
        ):
            raise ConfigError(
                f"decay steps {steps} must increase strictly and stay below "
                f"max_iterations {self.max_iterations}"
            )
        if self.precision not in ("float32", "float64"):
            raise ConfigError(f"unknown precision {self.precision!r}")

    @classmethod
    def full_scale(cls, **overrides):
        base = dict(
            batch_size=256,
            decay_steps=(45000, 75000),
            max_iterations=100000,
            dropout=0.9,
        )
        base.update(overrides)
        return cls(**base)

    @property
    def dtype(self):
        return np.float64 if self.precision == "float64" else np.float32


class Model:
    """Ordered layer list plus the iteration counter; owned by one trainer."""

    def __init__(self, layers, net_config):
        self.layers = layers
        self.net_config = net_config
        self.iteration = 0
        self.names = [f"{i:02d}_{layer.kind}" for i, layer in enumerate(layers)]
        self.last_outputs = []
        # Nothing sits below the first layer, so its input gradient is wasted work.
        layers[0].needs_input_grad = False

    @property
    def front_end(self):
        first = self.layers[0]
        return first if isinstance(first, PhaseFrontEnd) else None

    def forward(self, x, training=True):
        self.last_outputs = []
        out = x
        for name, layer in zip(self.names, self.layers):
            out = layer.forward(out, training=training)
            self.last_outputs.append((name, out))
        return out

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def parameters(self):
        return {
            f"{name}/{key}": arr
            for name, layer in zip(self.names, self.layers)
            for key, arr in layer.params.items()
        }

    def grads(self):
        return {
            f"{name}/{key}": arr
            for name, layer in zip(self.names, self.layers)
            for key, arr in layer.grads.items()
        }

    def num_params(self):
        return sum(int(p.size) for p in self.parameters().values())

    def set_dropout(self, rate):
        for layer in self.layers:
            if isinstance(layer, DropoutLayer):
                layer.rate = rate

    def first_nonfinite_layer(self):
        for name, out in self.last_outputs:
            if not np.all(np.isfinite(out)):
                return name
        return "loss"


def build_model(config, seed=0, dtype=np.float32, dropout=0.5):
    """Assemble front end + trunk + classifier head per the config.

    Spatial bookkeeping walks the descriptor list so the first fully connected
    layer gets the right fan-in; a Flatten is inserted automatically.
    """
    ss = np.random.SeedSequence(seed)
    init_rng, dropout_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    layers = []
    h = config.input_size
    if config.front_end == "complex":
        clayer = ComplexConvLayer.create(
            config.filters,
            config.in_channels,
            config.kernel_size,
            stride=config.front_stride,
            sigma_e=config.sigma_e,
            rng=init_rng,
            dtype=dtype,
        )
        layers.append(PhaseFrontEnd(clayer, eps=config.phase_eps, dtype=dtype))
        h = clayer.spec.out_size(h, h)[0]
    else:
        conv = ConvLayer(
            config.in_channels, config.filters, config.kernel_size,
            stride=config.front_stride, rng=init_rng, dtype=dtype,
        )
        layers += [conv, ReLULayer(), BatchNormLayer(config.filters, dtype=dtype)]
        h = conv.out_size(h, h)[0]
    channels = config.filters

    flat = None
    for desc in config.trunk:
        t = desc["type"]
        if t == "conv":
            conv = ConvLayer(
                channels, desc["filters"], desc["kernel"],
                stride=desc.get("stride", 1), padding=desc.get("padding"),
                rng=init_rng, dtype=dtype,
            )
            layers.append(conv)
            h = conv.out_size(h, h)[0]
            channels = desc["filters"]
        elif t == "relu":
            layers.append(ReLULayer())
        elif t == "maxpool":
            layers.append(MaxPoolLayer())
            h = h // 2
        elif t == "dropout":
            layers.append(DropoutLayer(dropout, dropout_rng))
        elif t == "fc":
            if flat is None:
                layers.append(FlattenLayer())
                flat = channels * h * h
            layers.append(DenseLayer(flat, desc["units"], rng=init_rng, dtype=dtype))
            flat = desc["units"]
        else:
            raise ConfigError(f"unknown trunk layer type {t!r}")
    if flat is None:
        layers.append(FlattenLayer())
        flat = channels * h * h
    layers.append(DenseLayer(flat, config.n_classes, rng=init_rng, dtype=dtype))
    return Model(layers, config)


def freeze_front_end(model, bank):
    """Load a fixed filter bank into the complex front end; its filters leave
    the trainable parameter set, the trunk keeps training."""
    front = model.front_end
    if front is None:
        raise ConfigError("model has no complex front end to freeze")
    if len(bank) != front.clayer.spec.out_channels:
        raise ConfigError(
            f"bank size {len(bank)} != front-end filters {front.clayer.spec.out_channels}"
        )
    if front.clayer.spec.in_channels != 1:
        raise ConfigError("fixed banks are single-channel")
    dtype = front.bn_real.params["gamma"].dtype
    front.clayer = ComplexConvLayer.from_bank(
        bank, stride=front.clayer.spec.stride, dtype=dtype
    )
    front._rebind()
    return model


def model_loss(model, x, y, lambda_reg=0.0):
    """Softmax cross-entropy plus the weighted front-end regularizer.

    Returns (total, probs, cross_entropy, reg_value); reg_value is 0 for plain
    or frozen front ends.
    """
    logits = model.forward(x, training=True)
    ce, probs = ops.softmax_cross_entropy(logits, y)
    front = model.front_end
    reg = 0.0
    if front is not None and not front.clayer.frozen:
        reg = front.regularizer()
    return ce + lambda_reg * reg, probs, ce, reg


def sample_batch(rng, labels_by_class, batch_size):
    """Uniform over classes, then uniform within the chosen class."""
    classes = sorted(labels_by_class)
    picks = rng.integers(0, len(classes), size=batch_size)
    idx = [
        int(labels_by_class[classes[c]][rng.integers(0, len(labels_by_class[classes[c]]))])
        for c in picks
    ]
    return np.asarray(idx)


def _group_by_class(y):
    groups = {}
    for i, label in enumerate(np.asarray(y)):
        groups.setdefault(int(label), []).append(i)
    return groups


def train_step(model, x, y, tcfg, state):
    """One forward/backward/update/sync cycle; returns the step's metrics."""
    total, probs, ce, reg = model_loss(model, x, y, tcfg.lambda_reg)
    if not math.isfinite(total):
        raise TrainingDiverged(model.iteration, model.first_nonfinite_layer())
    grad_logits = ops.softmax_cross_entropy_backward(probs, y)
    model.backward(grad_logits)
    grads = model.grads()
    front = model.front_end
    if front is not None and not front.clayer.frozen and tcfg.lambda_reg > 0:
        u_key = f"{model.names[0]}/u"
        grads[u_key] = grads[u_key] + tcfg.lambda_reg * front.regularizer_grad()
    lr = state.lr_at(model.iteration)
    sgd_momentum_step(model.parameters(), grads, state, model.iteration)
    if front is not None:
        front.sync()
    accuracy = float(np.mean(np.argmax(probs, axis=1) == y))
    metrics = {
        "iteration": model.iteration,
        "loss": float(total),
        "accuracy": accuracy,
        "regularizer": float(reg),
        "lr": lr,
    }
    model.iteration += 1
    return metrics


def train(model, data, tcfg, eval_data=None, eval_every=0, stop_at_accuracy=None,
          metrics_path=None, log_every=0):
    """Run the training loop; returns (metrics rows, final eval accuracy).

    Batches are sampled uniformly over classes from a stream derived from the
    config seed, so identical seeds reproduce identical trajectories. With
    `stop_at_accuracy` the loop exits early once a periodic evaluation on
    `eval_data` reaches the threshold.
    """
    x_all, y_all = data
    x_all = np.asarray(x_all, dtype=tcfg.dtype)
    groups = _group_by_class(y_all)
    batch_rng = np.random.default_rng(np.random.SeedSequence(tcfg.seed).spawn(3)[2])
    state = SgdMomentumState(
        learning_rate=tcfg.base_lr,
        momentum=tcfg.momentum,
        decay_steps=tuple(tcfg.decay_steps),
        decay_factor=tcfg.decay_factor,
    )
    model.set_dropout(tcfg.dropout)
    rows = []
    final_eval = None
    while model.iteration < tcfg.max_iterations:
        idx = sample_batch(batch_rng, groups, tcfg.batch_size)
        metrics = train_step(model, x_all[idx], y_all[idx], tcfg, state)
        rows.append(metrics)
        if log_every and metrics["iteration"] % log_every == 0:
            print(
                f"it {metrics['iteration']:6d} loss {metrics['loss']:.4f} "
                f"acc {metrics['accuracy']:.3f} R {metrics['regularizer']:.4f} "
                f"lr {metrics['lr']:.5f}"
            )
        due = eval_every and eval_data is not None and (
            metrics["iteration"] % eval_every == eval_every - 1
            or model.iteration >= tcfg.max_iterations
        )
        if due:
            final_eval = evaluate(model, *eval_data)
            if stop_at_accuracy is not None and final_eval.accuracy >= stop_at_accuracy:
                break
    if eval_data is not None and final_eval is None:
        final_eval = evaluate(model, *eval_data)
    if metrics_path:
        write_metrics_csv(metrics_path, rows)
    return rows, final_eval


@dataclass
class EvalResult:
    accuracy: float
    per_class: dict  # label -> (correct, total)

    def class_accuracy(self, label):
        correct, total = self.per_class[label]
        return correct / total


def evaluate(model, x, y, batch_size=64):
    """Deterministic inference-mode accuracy with a per-class breakdown."""
    x = np.asarray(x)
    y = np.asarray(y)
    if len(x) == 0:
        raise ShapeError("cannot evaluate on an empty dataset")
    correct = 0
    per_class = {int(c): [0, 0] for c in np.unique(y)}
    for start in range(0, len(x), batch_size):
        xb = x[start : start + batch_size]
        yb = y[start : start + batch_size]
        logits = model.forward(xb, training=False)
        pred = np.argmax(logits, axis=1)
        for p, t in zip(pred, yb):
            per_class[int(t)][1] += 1
            if p == t:
                per_class[int(t)][0] += 1
                correct += 1
    return EvalResult(
        accuracy=correct / len(x),
        per_class={c: (v[0], v[1]) for c, v in per_class.items()},
    )


def write_metrics_csv(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "loss", "accuracy", "regularizer", "lr"])
        for m in rows:
            writer.writerow(
                [
                    m["iteration"],
                    f"{m['loss']:.8g}",
                    f"{m['accuracy']:.8g}",
                    f"{m['regularizer']:.8g}",
                    f"{m['lr']:.8g}",
                ]
            )


def save_checkpoint(model, path):
    """Container of parameters and norm statistics plus a JSON config sidecar.

    For a trainable complex front end the stored tensors are the free weights
    and envelope; the tied real/imaginary filters are re-derived on load.
    """
    import json

    tensors = dict(model.parameters())
    for name, layer in zip(model.names, model.layers):
        for bn_name, bn in _norm_layers(layer):
            tensors[f"{name}/{bn_name}.running_mean"] = bn.running_mean
            tensors[f"{name}/{bn_name}.running_var"] = bn.running_var
    front = model.front_end
    meta = {
        "net_config": asdict(model.net_config),
        "iteration": model.iteration,
        "frozen_front": bool(front and front.clayer.frozen),
    }
    if front is not None:
        meta["reg_weight"] = front.clayer.reg_weight
        if front.clayer.frozen:
            tensors["front/w_real"] = front.clayer.w_real
            tensors["front/w_imag"] = front.clayer.w_imag
        else:
            tensors["front/envelope"] = front.clayer.envelope
    container.save_tensors(path, tensors)
    with open(str(path) + ".json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1)


def load_checkpoint(path, dtype=np.float32):
    import json

    with open(str(path) + ".json", "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    cfg_dict = meta["net_config"]
    cfg = NetworkConfig(**cfg_dict)
    model = build_model(cfg, dtype=dtype)
    tensors = container.load_tensors(path)
    params = model.parameters()
    front = model.front_end
    if meta.get("frozen_front"):
        spec = front.clayer.spec
        front.clayer = ComplexConvLayer(
            ops.ConvSpec(
                spec.kernel_h, spec.kernel_w, spec.stride, spec.padding,
                spec.in_channels, tensors["front/w_real"].shape[0],
            ),
            w_real=tensors["front/w_real"].astype(dtype),
            w_imag=tensors["front/w_imag"].astype(dtype),
            reg_weight=meta.get("reg_weight", 0.0),
        )
        front._rebind()
        params = model.parameters()
    for name, arr in params.items():
        if name in tensors:
            np.copyto(arr, tensors[name].astype(arr.dtype))
    for name, layer in zip(model.names, model.layers):
        for bn_name, bn in _norm_layers(layer):
            bn.running_mean = tensors[f"{name}/{bn_name}.running_mean"].astype(dtype)
            bn.running_var = tensors[f"{name}/{bn_name}.running_var"].astype(dtype)
    if front is not None and not front.clayer.frozen:
        if "front/envelope" in tensors:
            front.clayer.envelope = tensors["front/envelope"].astype(dtype)
        front.sync()
    model.iteration = meta["iteration"]
    return model


def _norm_layers(layer):
    if isinstance(layer, BatchNormLayer):
        yield "bn", layer
    elif isinstance(layer, PhaseFrontEnd):
        yield "bn_real", layer.bn_real
        yield "bn_imag", layer.bn_imag
