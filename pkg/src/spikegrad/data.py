"""Dataset readers and spike encoders.

* MNIST IDX files (optionally gzipped) with latency coding.
* N-MNIST address-event files: 5 bytes per event, 34x34 pixels, two polarities.
* Seeded random spike trains for the matching task.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801
NMNIST_SIDE = 34
NMNIST_INPUTS = 2 * NMNIST_SIDE * NMNIST_SIDE

EVENT_DTYPE = np.dtype([("x", np.uint8), ("y", np.uint8), ("p", np.uint8), ("ts", np.uint32)])


@dataclass
class Sample:
    input_spikes: np.ndarray
    label: int | None = None
    target_trains: np.ndarray | None = None
    target_counts: np.ndarray | None = None


def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def load_idx(path) -> np.ndarray:
    """Parse an IDX image (3-D u8) or label (1-D u8) file."""
    raw = _read_bytes(path)
    if len(raw) < 8:
        raise ParseError(f"{path}: truncated header ({len(raw)} bytes)")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic == IDX_IMAGES:
        if len(raw) < 16:
            raise ParseError(f"{path}: truncated image header")
        n, rows, cols = struct.unpack(">III", raw[4:16])
        dims, offset = (n, rows, cols), 16
    elif magic == IDX_LABELS:
        (n,) = struct.unpack(">I", raw[4:8])
        dims, offset = (n,), 8
    else:
        raise ParseError(f"{path}: bad IDX magic 0x{magic:08x}")
    expected = int(np.prod(dims))
    payload = len(raw) - offset
    if payload != expected:
        raise ParseError(f"{path}: payload has {payload} bytes, header dimensions {dims} need {expected}")
    return np.frombuffer(raw, dtype=np.uint8, offset=offset).reshape(dims).copy()


def write_idx(path, array: np.ndarray) -> None:
    array = np.asarray(array, dtype=np.uint8)
    if array.ndim == 3:
        header = struct.pack(">IIII", IDX_IMAGES, *array.shape)
    elif array.ndim == 1:
        header = struct.pack(">II", IDX_LABELS, array.shape[0])
    else:
        raise ValueError("IDX writer supports 3-D images or 1-D labels")
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "wb") as fh:
        fh.write(header + array.tobytes())


def load_mnist(directory, split: str = "train") -> tuple[np.ndarray, np.ndarray]:
    directory = Path(directory)
    prefix = "train" if split == "train" else "t10k"

    def find(stem):
        for suffix in ("", ".gz"):
            p = directory / f"{stem}{suffix}"
            if p.exists():
                return p
        raise FileNotFoundError(directory / stem)

    images = load_idx(find(f"{prefix}-images-idx3-ubyte"))
    labels = load_idx(find(f"{prefix}-labels-idx1-ubyte"))
    if images.shape[0] != labels.shape[0]:
        raise ParseError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    return images, labels


def latency_encode(image: np.ndarray, T_in: int) -> np.ndarray:
    """One spike per nonzero pixel at floor((1 - p/255) * (T_in - 1)); dark pixels stay silent.

    Accepts a single image or a stack; returns (T_in, ..., n_pixels).
    """
    image = np.asarray(image)
    flat = image.reshape(image.shape[:-2] + (-1,)) if image.ndim >= 2 else image
    p = flat.astype(np.float64)
    t = np.floor((1.0 - p / 255.0) * (T_in - 1)).astype(np.int64)
    out = np.zeros((T_in,) + flat.shape)
    idx = np.nonzero(flat > 0)
    out[(t[idx],) + idx] = 1.0
    return out


def decode_aer(raw: bytes) -> np.ndarray:
    if len(raw) % 5:
        raise ParseError(f"event data length {len(raw)} is not a multiple of 5 (partial event)")
    b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 5).astype(np.uint32)
    ev = np.empty(b.shape[0], dtype=EVENT_DTYPE)
    ev["x"] = b[:, 0]
    ev["y"] = b[:, 1]
    ev["p"] = b[:, 2] >> 7
    ev["ts"] = ((b[:, 2] & 0x7F) << 16) | (b[:, 3] << 8) | b[:, 4]
    if ev.size and (ev["x"].max() >= NMNIST_SIDE or ev["y"].max() >= NMNIST_SIDE):
        raise ParseError("event coordinates outside the 34x34 sensor")
    return ev


def encode_aer(events: np.ndarray) -> bytes:
    ts = events["ts"].astype(np.uint32)
    if ts.size and ts.max() >= 1 << 23:
        raise ValueError("timestamp does not fit in 23 bits")
    out = np.empty((events.size, 5), dtype=np.uint8)
    out[:, 0] = events["x"]
    out[:, 1] = events["y"]
    out[:, 2] = (events["p"].astype(np.uint32) << 7) | (ts >> 16)
    out[:, 3] = (ts >> 8) & 0xFF
    out[:, 4] = ts & 0xFF
    return out.tobytes()


def load_nmnist_sample(path) -> np.ndarray:
    """Structured event array (x, y, p, ts) sorted by timestamp."""
    ev = decode_aer(_read_bytes(path))
    return ev[np.argsort(ev["ts"], kind="stable")]


def bin_events(events: np.ndarray, T: int = 300, bin_us: int = 1000) -> np.ndarray:
    """Binary (T, 2*34*34) tensor; channel-major index p*34*34 + y*34 + x."""
    out = np.zeros((T, NMNIST_INPUTS))
    if events.size == 0:
        return out
    t = np.minimum(events["ts"].astype(np.int64) // bin_us, T - 1)
    n = (events["p"].astype(np.int64) * NMNIST_SIDE + events["y"]) * NMNIST_SIDE + events["x"]
    out[t, n] = 1.0
    return out


def events_from_spikes(spikes: np.ndarray, bin_us: int = 1000) -> np.ndarray:
    """One event per set bit at ts = bin_us * bin; inverse of :func:`bin_events`."""
    t, n = np.nonzero(spikes)
    p, rest = np.divmod(n, NMNIST_SIDE * NMNIST_SIDE)
    y, x = np.divmod(rest, NMNIST_SIDE)
    ev = np.empty(t.size, dtype=EVENT_DTYPE)
    ev["x"], ev["y"], ev["p"], ev["ts"] = x, y, p, t * bin_us
    return ev[np.argsort(ev["ts"], kind="stable")]


SACCADE_PATH = ((0.0, 0.0), (3.0, 3.0), (6.0, 0.0), (0.0, 0.0))


def synthesize_saccade_events(image: np.ndarray, rng: np.random.Generator, duration_us: int = 300_000,
                              step_us: int = 1000, threshold: float = 0.15) -> np.ndarray:
    """Event stream of a 28x28 image swept along three straight saccades on a 34x34 sensor.

    The image moves along :data:`SACCADE_PATH` (pixels), one third of the duration
    per leg. Each pixel keeps a reference brightness and emits an ON (p=1) or OFF
    (p=0) event when the current brightness departs from it by ``threshold``;
    timestamps get uniform jitter within the sampling step.
    """
    img = np.asarray(image, dtype=np.float64) / 255.0
    if img.shape != (28, 28):
        raise ValueError(f"expected a 28x28 image, got {img.shape}")
    n_steps = duration_us // step_us
    legs = len(SACCADE_PATH) - 1
    canvas = np.zeros((NMNIST_SIDE + 1, NMNIST_SIDE + 1))
    ref = np.zeros((NMNIST_SIDE, NMNIST_SIDE))
    chunks = []
    for k in range(n_steps):
        u = k * legs / n_steps
        leg = min(int(u), legs - 1)
        f = u - leg
        (x0, y0), (x1, y1) = SACCADE_PATH[leg], SACCADE_PATH[leg + 1]
        dx, dy = x0 + f * (x1 - x0), y0 + f * (y1 - y0)
        ix, iy = int(dx), int(dy)
        fx, fy = dx - ix, dy - iy
        canvas[:] = 0.0
        # bilinear splat of the image at the sub-pixel offset
        for wy, oy in ((1 - fy, 0), (fy, 1)):
            for wx, ox in ((1 - fx, 0), (fx, 1)):
                canvas[iy + oy:iy + oy + 28, ix + ox:ix + ox + 28] += wy * wx * img
        frame = canvas[:NMNIST_SIDE, :NMNIST_SIDE]
        diff = frame - ref
        fire = np.abs(diff) >= threshold
        if fire.any():
            y, x = np.nonzero(fire)
            ev = np.empty(y.size, dtype=EVENT_DTYPE)
            ev["x"], ev["y"] = x, y
            ev["p"] = diff[fire] > 0
            ev["ts"] = k * step_us + rng.integers(0, step_us, size=y.size)
            chunks.append(ev)
            ref[fire] = frame[fire]
    if not chunks:
        return np.empty(0, dtype=EVENT_DTYPE)
    ev = np.concatenate(chunks)
    return ev[np.argsort(ev["ts"], kind="stable")]


def random_spiketrain(seed, n_neurons: int, spikes_per_neuron: int, T: int) -> np.ndarray:
    """(T, n_neurons) binary, spike times drawn without replacement per neuron."""
    if spikes_per_neuron > T:
        raise ValueError("more spikes than time steps")
    rng = np.random.default_rng(seed)
    out = np.zeros((T, n_neurons))
    for n in range(n_neurons):
        out[rng.choice(T, size=spikes_per_neuron, replace=False), n] = 1.0
    return out


def train_valid_split(n: int, n_train: int = 50000) -> tuple[slice, slice]:
    return slice(0, n_train), slice(n_train, n)
