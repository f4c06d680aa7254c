"""Video ingestion and Eulerian input construction.

Clips are ordered frame lists in [0, 1]. Motion inputs are forward temporal
differences of grayscale frames (dGray), RGB frames (dRGB) or per-frame phase
maps (dPhase), optionally stacked over consecutive steps. A synthetic labeled
dataset (translating textures, expanding/contracting rings, static
distractors) stands in for real footage at desk scale.
"""

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from . import ops
from .errors import ConfigError, IngestionError, ShapeError
from .phase_layer import extract_phase

_FRAME_EXTS = (".png", ".pgm", ".ppm")

GRAY_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass
class VideoClip:
    frames: list
    frame_rate: float = 25.0
    label: int | None = None

    def __post_init__(self):
        if self.frames:
            shape = self.frames[0].shape
            for i, f in enumerate(self.frames):
                if f.shape != shape:
                    raise ShapeError(f"frame {i} shape {f.shape} != {shape}")

    def __len__(self):
        return len(self.frames)

    @property
    def channels(self):
        return self.frames[0].shape[0]


@dataclass
class MotionInput:
    data: np.ndarray
    kind: str
    stack_depth: int = 1


def load_frames(path):
    """Read a directory of 8-bit image frames into a clip scaled to [0, 1].

    A `manifest.json` ({"frames": [...], "label": ..., "frame_rate": ...})
    fixes the order and label; otherwise files are taken in lexicographic
    order and the clip is unlabeled.
    """
    manifest_path = os.path.join(path, "manifest.json")
    label = None
    frame_rate = 25.0
    if os.path.exists(manifest_path):
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        names = manifest["frames"]
        label = manifest.get("label")
        frame_rate = manifest.get("frame_rate", 25.0)
    else:
        try:
            names = sorted(
                n for n in os.listdir(path) if n.lower().endswith(_FRAME_EXTS)
            )
        except OSError as exc:
            raise IngestionError(f"cannot list frame directory: {exc}", path)
    if not names:
        raise IngestionError("no frames found", path)
    frames = []
    for name in names:
        fpath = os.path.join(path, name)
        try:
            with Image.open(fpath) as img:
                if img.mode not in ("L", "RGB"):
                    img = img.convert("RGB")
                arr = np.asarray(img, dtype=np.float32) / 255.0
        except OSError as exc:
            raise IngestionError(f"unreadable frame: {exc}", fpath)
        if arr.ndim == 2:
            arr = arr[None, :, :]
        else:
            arr = arr.transpose(2, 0, 1)
        if frames and arr.shape != frames[0].shape:
            raise IngestionError(
                f"frame dimensions {arr.shape} differ from first frame {frames[0].shape}",
                fpath,
            )
        frames.append(arr)
    return VideoClip(frames=frames, frame_rate=frame_rate, label=label)


def save_clip(clip, path, fmt="png"):
    """Write a clip as 8-bit frames plus a manifest; inverse of load_frames."""
    os.makedirs(path, exist_ok=True)
    names = []
    for i, frame in enumerate(clip.frames):
        arr = np.clip(np.rint(frame * 255.0), 0, 255).astype(np.uint8)
        if arr.shape[0] == 1:
            img = Image.fromarray(arr[0], mode="L")
            ext = "pgm" if fmt == "pnm" else fmt
        else:
            img = Image.fromarray(arr.transpose(1, 2, 0), mode="RGB")
            ext = "ppm" if fmt == "pnm" else fmt
        name = f"frame_{i:04d}.{ext}"
        img.save(os.path.join(path, name))
        names.append(name)
    manifest = {"frames": names, "label": clip.label, "frame_rate": clip.frame_rate}
    with open(os.path.join(path, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)


def to_gray(clip):
    """Luminance conversion 0.299 R + 0.587 G + 0.114 B; grayscale passes through."""
    if clip.channels == 1:
        return clip
    wr, wg, wb = GRAY_WEIGHTS
    frames = [
        (wr * f[0] + wg * f[1] + wb * f[2])[None, :, :] for f in clip.frames
    ]
    return VideoClip(frames=frames, frame_rate=clip.frame_rate, label=clip.label)


def temporal_derivative(clip, kind="dgray"):
    """Forward frame differences: one map per consecutive pair, values in [-1, 1]."""
    if kind not in ("dgray", "drgb"):
        raise ConfigError(f"unknown derivative kind {kind!r}")
    if len(clip) < 2:
        raise ShapeError("temporal derivative needs at least 2 frames")
    src = to_gray(clip) if kind == "dgray" else clip
    return [
        MotionInput(data=src.frames[t + 1] - src.frames[t], kind=kind)
        for t in range(len(src) - 1)
    ]


def phase_image(frame, bank):
    """Per-filter phase maps (F, H, W) of a single frame under a fixed bank."""
    if frame.ndim != 3:
        raise ShapeError(f"frame must be (C,H,W), got {frame.shape}")
    if frame.shape[0] != 1:
        wr, wg, wb = GRAY_WEIGHTS
        frame = (wr * frame[0] + wg * frame[1] + wb * frame[2])[None]
    real_w, imag_w = bank.as_weights(dtype=frame.dtype)
    k = bank.spec.kernel_size
    spec = ops.ConvSpec(k, k, 1, k // 2, 1, len(bank))
    x = frame[None]
    real_resp = ops.conv2d_forward(x, real_w, spec)
    imag_resp = ops.conv2d_forward(x, imag_w, spec)
    return extract_phase(real_resp, imag_resp)[0]


def wrap_phase(x):
    """Map into the arctangent branch (-pi/2, pi/2] (phase is defined mod pi)."""
    return math.pi / 2 - np.mod(math.pi / 2 - x, math.pi)


def temporal_phase_derivative(clip, bank, average=True):
    """dPhase: wrapped differences of consecutive phase images.

    With average=True (default) the F filter channels collapse to their mean,
    giving one map per frame pair; otherwise all channels are kept.
    """
    if len(clip) < 2:
        raise ShapeError("temporal derivative needs at least 2 frames")
    images = [phase_image(f, bank) for f in clip.frames]
    out = []
    for t in range(len(images) - 1):
        d = wrap_phase(images[t + 1] - images[t])
        if average:
            d = d.mean(axis=0, keepdims=True, dtype=d.dtype)
        out.append(MotionInput(data=d, kind="dphase"))
    return out


def stack(inputs, depth=5, center=None):
    """Channel-concatenate `depth` consecutive maps centered on `center`."""
    if len(inputs) < depth:
        raise ShapeError(f"need at least {depth} maps, got {len(inputs)}")
    if center is None:
        center = len(inputs) // 2
    start = min(max(center - depth // 2, 0), len(inputs) - depth)
    window = inputs[start : start + depth]
    data = np.concatenate([m.data for m in window], axis=0)
    return MotionInput(data=data, kind="stack", stack_depth=depth)


def shuffle_frames(clip, seed):
    """Uniform random permutation of frame order, deterministic per seed."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(clip))
    frames = [clip.frames[int(i)] for i in perm]
    return VideoClip(frames=frames, frame_rate=clip.frame_rate, label=clip.label)


def augment(minput, rng, crop_size=None, flip=True):
    """Random crop and horizontal flip (p = 0.5), consistent across channels."""
    data = minput.data
    if crop_size is not None:
        _, h, w = data.shape
        if crop_size > h or crop_size > w:
            raise ConfigError(f"crop {crop_size} larger than frame {h}x{w}")
        oy = int(rng.integers(0, h - crop_size + 1))
        ox = int(rng.integers(0, w - crop_size + 1))
        data = data[:, oy : oy + crop_size, ox : ox + crop_size]
    if flip and rng.random() < 0.5:
        data = data[:, :, ::-1]
    return MotionInput(np.ascontiguousarray(data), minput.kind, minput.stack_depth)


# ---------------------------------------------------------------------------
# Synthetic labeled clips


SYNTH_CLASSES = (
    "right", "left", "up", "down",       # translating textures
    "expand", "contract",                # order-sensitive ring pair
    "static_a", "static_b",              # appearance-only distractor pair
)

_DIRECTIONS = {"right": (0, 1), "left": (0, -1), "up": (-1, 0), "down": (1, 0)}


def _sawtooth(u, duty=0.85):
    """Asymmetric periodic profile on [0,1): slow rise over `duty`, fast fall.

    The fixed chirality is what makes motion direction identifiable from a
    single temporal difference; symmetric waveforms (sines) leave the sign of
    the shift ambiguous over a phase-randomized ensemble.
    """
    u = np.mod(u, 1.0)
    return np.where(u < duty, u / duty, (1.0 - u) / (1.0 - duty))


def _periodic_texture(rng, size, n_waves=3):
    """Sum of chiral sawtooth plane waves with integer cycle counts.

    Wave vectors stay in a half plane so no mirrored/negated twin of a texture
    exists in the ensemble; integer cycles make np.roll an exact translation.
    """
    img = np.zeros((size, size), dtype=np.float64)
    ys, xs = np.mgrid[0:size, 0:size]
    for _ in range(n_waves):
        a, b = 0, 0
        while (a, b) == (0, 0) or (b == 0 and a < 0):
            a, b = int(rng.integers(-5, 6)), int(rng.integers(0, 6))
        amp = 0.5 + rng.random()
        phase = rng.random()
        img += amp * _sawtooth((a * ys + b * xs) / size + phase)
    lo, hi = img.min(), img.max()
    return (0.1 + 0.8 * (img - lo) / max(hi - lo, 1e-9)).astype(np.float32)


def _ring_frames(rng, size, n_frames, direction):
    """Concentric rings drifting outward (+1) or inward (-1) at 1 px/frame.

    The ring phase is anchored to the (jittered) center, so with correct frame
    order the difference map's sign pattern around the center identifies the
    drift direction; a time-reversed pair is indistinguishable frame-by-frame.
    """
    wavelength = 8.0 + 6.0 * rng.random()
    cy = size / 2 + rng.uniform(-0.5, 0.5)
    cx = size / 2 + rng.uniform(-0.5, 0.5)
    ys, xs = np.mgrid[0:size, 0:size]
    r = np.hypot(ys - cy, xs - cx)
    frames = []
    for t in range(n_frames):
        v = np.sin(2 * math.pi * (r - direction * t) / wavelength)
        frames.append((0.5 + 0.4 * v).astype(np.float32)[None])
    return frames


def synth_clip(class_name, rng, size=32, n_frames=7, rgb=False):
    """One labeled clip of the named motion class."""
    if class_name in _DIRECTIONS:
        dy, dx = _DIRECTIONS[class_name]
        speed = int(rng.integers(1, 3))
        tex = _periodic_texture(rng, size)
        frames = [
            np.roll(tex, (dy * speed * t, dx * speed * t), axis=(0, 1))[None]
            for t in range(n_frames)
        ]
    elif class_name in ("expand", "contract"):
        frames = _ring_frames(rng, size, n_frames, +1 if class_name == "expand" else -1)
    elif class_name == "static_a":
        tex = _periodic_texture(rng, size)[None]
        frames = [tex.copy() for _ in range(n_frames)]
    elif class_name == "static_b":
        frames = [_ring_frames(rng, size, 1, +1)[0]] * n_frames
        frames = [f.copy() for f in frames]
    else:
        raise ConfigError(f"unknown synthetic class {class_name!r}")
    if rgb:
        tint = 0.7 + 0.3 * rng.random(3)
        frames = [
            np.clip(f * tint[:, None, None], 0.0, 1.0).astype(np.float32)
            for f in [np.repeat(fr, 3, axis=0) for fr in frames]
        ]
    return frames


@dataclass
class SynthDataset:
    classes: list
    train: list = field(default_factory=list)
    test: list = field(default_factory=list)


def synth_dataset(n_per_class, classes=SYNTH_CLASSES, image_size=32, seed=0,
                  n_frames=7, n_test_per_class=None, rgb=False):
    """Deterministic labeled clips; train/test come from disjoint generator
    streams so the splits never share a clip."""
    classes = list(classes)
    n_test = max(n_per_class // 4, 2) if n_test_per_class is None else n_test_per_class
    root = np.random.SeedSequence(seed)
    train_ss, test_ss = root.spawn(2)
    ds = SynthDataset(classes=classes)
    for split, ss, count in (("train", train_ss, n_per_class), ("test", test_ss, n_test)):
        rngs = ss.spawn(len(classes))
        for label, (name, child) in enumerate(zip(classes, rngs)):
            rng = np.random.default_rng(child)
            for _ in range(count):
                frames = synth_clip(name, rng, size=image_size, n_frames=n_frames, rgb=rgb)
                clip = VideoClip(frames=frames, label=label)
                getattr(ds, split).append(clip)
    return ds


def clip_to_input(clip, kind, bank=None, stack_depth=1, shuffle_seed=None):
    """Reduce a clip to one motion input of the requested kind.

    Single-map kinds use the middle derivative; stacked kinds concatenate
    `stack_depth` consecutive maps around it. With `shuffle_seed` the frames
    are permuted before differencing (the temporal ablation).
    """
    if shuffle_seed is not None:
        clip = shuffle_frames(clip, shuffle_seed)
    if kind in ("dgray", "drgb"):
        maps = temporal_derivative(clip, kind)
    elif kind == "dphase":
        if bank is None:
            raise ConfigError("dphase needs a fixed filter bank")
        maps = temporal_phase_derivative(clip, bank)
    else:
        raise ConfigError(f"unknown input kind {kind!r}")
    if stack_depth > 1:
        out = stack(maps, depth=stack_depth)
    else:
        out = maps[len(maps) // 2]
    return out


def build_arrays(clips, kind, bank=None, stack_depth=1, shuffle_seed=None, dtype=np.float32):
    """(X, y) arrays for training: X is (M, D, H, W), y is (M,) labels."""
    xs, ys = [], []
    for i, clip in enumerate(clips):
        seed = None if shuffle_seed is None else shuffle_seed + i
        m = clip_to_input(clip, kind, bank=bank, stack_depth=stack_depth, shuffle_seed=seed)
        xs.append(m.data.astype(dtype))
        ys.append(clip.label)
    return np.stack(xs), np.asarray(ys, dtype=np.int64)
