"""Measurement layer + bias-free fully connected beam predictor, trained
with hand-written backpropagation.

The network maps a channel to class probabilities over the ``N^2`` beams of
the 2D-DFT codebook::

    H --(2D-CCS with P = P_R + jP_I, gather at omega, + AWGN)--> y (M complex)
      --> [y_R; y_I] --W1,ReLU--> 80 --W2,ReLU--> 256 --W3,ReLU--> 512
      --W4--> N^2 logits --softmax--> probabilities

No layer has a bias, so every stage is positively homogeneous and the
predicted beam does not depend on the channel scale (for noiseless input).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ccsbeam.ccs import (
    BaseMatrix,
    SubsamplingSet,
    circ_xcorr_fft,
    conv_measure,
    in_alphabet,
    quantize_base,
    random_base,
    sample_omega,
    subsample,
)
from ccsbeam.channelgen import ChecksumError, FileFormatError, HeaderError, TruncatedPayloadError
from ccsbeam.numkit import BeamIndex

HIDDEN = (80, 256, 512)
FC_NAMES = ("w1", "w2", "w3", "w4")
PARAM_NAMES = ("p_r", "p_i") + FC_NAMES
PROB_FLOOR = 1e-30


@dataclass
class NetworkParams:
    p_r: np.ndarray
    p_i: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    w3: np.ndarray
    w4: np.ndarray
    conv_frozen: bool = False
    q: int | None = None

    @property
    def n(self) -> int:
        return self.p_r.shape[0]

    @property
    def m(self) -> int:
        return self.w1.shape[1] // 2

    @property
    def base(self) -> np.ndarray:
        return self.p_r + 1j * self.p_i

    @property
    def layer_dims(self) -> list:
        return [list(getattr(self, k).shape) for k in FC_NAMES]

    def arrays(self) -> dict:
        return {k: getattr(self, k) for k in PARAM_NAMES}

    def copy(self) -> "NetworkParams":
        return dataclasses.replace(self, **{k: v.copy() for k, v in self.arrays().items()})

    def base_matrix(self) -> BaseMatrix:
        if self.conv_frozen and self.q is not None:
            return BaseMatrix(self.base, quantized=True, q=self.q)
        return BaseMatrix(self.base, quantized=False, q=self.q)


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 128
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    train_snr_db: tuple = (0.0, 20.0)
    m: int = 10
    omega_seed: int = 0
    seed: int = 0
    q: int = 3
    # projection applied to the base matrix after each update
    base_constraint: str = "unit-modulus"

    def __post_init__(self):
        self.train_snr_db = tuple(float(s) for s in self.train_snr_db)
        lo, hi = self.train_snr_db
        if self.epochs < 0 or lo > hi or self.m < 1 or self.batch_size < 1:
            raise ValueError(f"invalid training configuration: {self}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.base_constraint not in ("unit-modulus", "frobenius", "none"):
            raise ValueError(f"unknown base constraint {self.base_constraint!r}")

    def omega(self, n: int) -> SubsamplingSet:
        return sample_omega(n, self.m, np.random.default_rng(self.omega_seed))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["train_snr_db"] = list(self.train_snr_db)
        return d


def init_params(n: int, m: int, rng: np.random.Generator, q: int = 3, hidden=HIDDEN) -> NetworkParams:
    """FC weights uniform in ``+-1/sqrt(fan_in)``; the filter starts from a
    random ``Q_q`` base matrix."""
    dims = [2 * m, *hidden, n * n]
    ws = [rng.uniform(-1, 1, size=(dout, din)) / np.sqrt(din) for din, dout in zip(dims[:-1], dims[1:])]
    p = random_base(n, q, rng).p
    return NetworkParams(p.real.copy(), p.imag.copy(), *ws, conv_frozen=False, q=q)


# ---------------------------------------------------------------------------
# forward pieces
# ---------------------------------------------------------------------------


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _relu(x):
    return np.maximum(x, 0.0)


def stack_features(y) -> np.ndarray:
    """Complex ``(..., M)`` measurements -> real ``(..., 2M)`` ``[y_R; y_I]``."""
    y = np.asarray(y)
    return np.concatenate([y.real, y.imag], axis=-1)


def measure_batch(base, h, omega: SubsamplingSet) -> np.ndarray:
    """Noiseless 2D-CCS measurements of a channel stack, ``(B, M)`` complex."""
    return subsample(circ_xcorr_fft(h, base), omega)


def noisy(y, sigma2, rng):
    """Add AWGN; ``sigma2`` may be a scalar or one variance per row."""
    sigma2 = np.asarray(sigma2, dtype=float)
    if np.any(sigma2 < 0):
        raise ValueError("noise variance must be nonnegative")
    if not np.any(sigma2):
        return y
    s = np.sqrt(sigma2 / 2)
    if s.ndim == 1:
        s = s[:, None]
    return y + s * rng.standard_normal(y.shape) + 1j * s * rng.standard_normal(y.shape)


def fc_forward(params: NetworkParams, feats):
    """Returns ``(logits, cache)``; cache holds pre-activations for backprop."""
    feats = np.atleast_2d(feats)
    if feats.shape[-1] != params.w1.shape[1]:
        raise ValueError(f"feature length {feats.shape[-1]} != {params.w1.shape[1]}")
    acts = [feats]
    pre = []
    a = feats
    for name in FC_NAMES[:-1]:
        z = a @ getattr(params, name).T
        pre.append(z)
        a = _relu(z)
        acts.append(a)
    logits = a @ params.w4.T
    return logits, (acts, pre)


def forward(params: NetworkParams, x, omega: SubsamplingSet, sigma2: float, rng) -> np.ndarray:
    """Class probabilities for a restructured channel (or a stack of them).

    The measurement runs through the real-valued convolution of the
    restructured tensor, exactly as the network layer is defined.
    """
    if omega.m != params.m:
        raise ValueError(f"omega has {omega.m} shifts but the network expects M={params.m}")
    g_r, g_i = conv_measure(x, params.p_r, params.p_i)
    y = subsample(g_r + 1j * g_i, omega)
    single = y.ndim == 1
    y = noisy(np.atleast_2d(y), sigma2, rng)
    logits, _ = fc_forward(params, stack_features(y))
    probs = _softmax(logits)
    return probs[0] if single else probs


def loss(probs, label) -> float:
    """Cross-entropy against a one-hot label (``BeamIndex`` or flat index)."""
    probs = np.asarray(probs)
    n2 = probs.shape[-1]
    n = int(round(np.sqrt(n2)))
    idx = label.flat(n) if isinstance(label, BeamIndex) else int(label)
    return float(-np.log(max(probs[idx], PROB_FLOOR)))


def mean_loss(probs, labels) -> float:
    p = probs[np.arange(len(labels)), labels]
    return float(np.mean(-np.log(np.maximum(p, PROB_FLOOR))))


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------


def _fc_backward(params, cache, dlogits):
    acts, pre = cache
    grads = {"w4": dlogits.T @ acts[3]}
    da = dlogits @ params.w4
    for k in (2, 1, 0):
        dz = da * (pre[k] > 0)
        grads[FC_NAMES[k]] = dz.T @ acts[k]
        da = dz @ getattr(params, FC_NAMES[k])
    return grads, da


def gradients(params: NetworkParams, h, labels, omega: SubsamplingSet, sigma2, rng):
    """Mean cross-entropy and its gradient over a batch.

    ``h`` is a ``(B, N, N)`` channel stack (restructured tensors carry the
    same numbers and are accepted too). Noise is drawn once and shared by the
    loss value and the gradient. Returns ``(loss, grads)`` with ``grads``
    keyed like :meth:`NetworkParams.arrays`.
    """
    h = np.asarray(h)
    n = params.n
    if h.shape[-3:] == (2 * n, 4 * n, 2):
        h = h[..., :n, :n, 0] + 1j * h[..., :n, 2 * n : 3 * n, 0]
    h = h.reshape(-1, n, n)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    b = h.shape[0]

    y = noisy(measure_batch(params.base, h, omega), sigma2, rng)
    logits, cache = fc_forward(params, stack_features(y))
    probs = _softmax(logits)
    value = mean_loss(probs, labels)

    dlogits = probs.copy()
    dlogits[np.arange(b), labels] -= 1.0
    dlogits /= b
    grads, dfeat = _fc_backward(params, cache, dlogits)

    if params.conv_frozen:
        grads["p_r"] = np.zeros_like(params.p_r)
        grads["p_i"] = np.zeros_like(params.p_i)
    else:
        m = omega.m
        gy = dfeat[:, :m] + 1j * dfeat[:, m:]
        scatter = np.zeros((b, n, n), dtype=complex)
        scatter[:, omega.rows, omega.cols] = gy
        # dL/dP_R + j dL/dP_I = sum_b xcorr(conj(H_b), scatter_b)
        gp = circ_xcorr_fft(np.conj(h), scatter).sum(axis=0)
        grads["p_r"] = gp.real
        grads["p_i"] = gp.imag
    return value, grads


# ---------------------------------------------------------------------------
# optimisation
# ---------------------------------------------------------------------------


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params: NetworkParams, grads: dict, names):
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for k in names:
            g = grads[k]
            m = self.m.get(k, 0.0) * self.beta1 + (1 - self.beta1) * g
            v = self.v.get(k, 0.0) * self.beta2 + (1 - self.beta2) * g * g
            self.m[k], self.v[k] = m, v
            getattr(params, k)[...] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params, grads, names):
        for k in names:
            getattr(params, k)[...] -= self.lr * grads[k]


def _project_base(params: NetworkParams, how: str):
    if how == "none":
        return
    p = params.base
    n = params.n
    if how == "unit-modulus":
        mag = np.abs(p)
        p = np.where(mag > 0, p / np.where(mag > 0, mag, 1.0), 1.0) / n
    else:
        p = p / np.linalg.norm(p)
    params.p_r[...] = p.real
    params.p_i[...] = p.imag


def _sigma2_from_snr(rng, snr_db, size):
    lo, hi = snr_db
    return 10 ** (-rng.uniform(lo, hi, size=size) / 10)


def _check_dataset(dataset, params, cfg):
    if dataset.n != params.n:
        raise ValueError(f"dataset has N={dataset.n}, network expects N={params.n}")
    if cfg.m != params.m:
        raise ValueError(f"config M={cfg.m} but network input expects M={params.m}")
    if len(dataset) == 0:
        raise ValueError("empty dataset")


def _fit(params, labels, cfg, rng, names, h=None, omega=None, fixed_y=None):
    opt = Adam(cfg.learning_rate) if cfg.optimizer == "adam" else SGD(cfg.learning_rate)
    count = len(labels)
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(count)
        total = 0.0
        for start in range(0, count, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            sigma2 = _sigma2_from_snr(rng, cfg.train_snr_db, len(idx))
            if fixed_y is not None:
                value, grads = _fc_step(params, fixed_y[idx], labels[idx], sigma2, rng)
            else:
                value, grads = gradients(params, h[idx], labels[idx], omega, sigma2, rng)
            opt.step(params, grads, names)
            if "p_r" in names:
                _project_base(params, cfg.base_constraint)
            total += value * len(idx)
        history.append(total / count)
    return history


def _fc_step(params, y, labels, sigma2, rng):
    y = noisy(y, sigma2, rng)
    logits, cache = fc_forward(params, stack_features(y))
    probs = _softmax(logits)
    dlogits = probs.copy()
    dlogits[np.arange(len(labels)), labels] -= 1.0
    dlogits /= len(labels)
    grads, _ = _fc_backward(params, cache, dlogits)
    return mean_loss(probs, labels), grads


def train(dataset, cfg: TrainConfig, init: NetworkParams | None = None, omega=None):
    """Minibatch training of filter and FC layers (only FC when the filter
    is frozen). ``omega`` defaults to the set drawn from ``cfg.omega_seed``
    and stays fixed. Returns ``(params, per_epoch_loss)``."""
    n = dataset.n
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    if init is None:
        params = init_params(n, cfg.m, np.random.default_rng(np.random.SeedSequence([cfg.seed, 0])), q=cfg.q)
    else:
        params = init.copy()
    _check_dataset(dataset, params, cfg)
    omega = cfg.omega(n) if omega is None else omega
    if params.conv_frozen:
        # frozen filter: the noiseless measurements never change
        fixed = measure_batch(params.base, dataset.h, omega)
        history = _fit(params, dataset.labels, cfg, rng, FC_NAMES, fixed_y=fixed)
    else:
        history = _fit(params, dataset.labels, cfg, rng, PARAM_NAMES, h=dataset.h, omega=omega)
    return params, history


def train_fc(params: NetworkParams, y, labels, cfg: TrainConfig):
    """Train only the FC layers on fixed noiseless complex measurements
    ``y`` of shape ``(count, M)``; noise is added per batch as in :func:`train`."""
    y = np.asarray(y)
    if y.shape[-1] != params.m:
        raise ValueError(f"measurements have M={y.shape[-1]}, network expects {params.m}")
    params = params.copy()
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    history = _fit(params, np.asarray(labels, dtype=np.int64), cfg, rng, FC_NAMES, fixed_y=y)
    return params, history


def freeze_quantized(params: NetworkParams, q: int) -> NetworkParams:
    """Copy of ``params`` with the filter replaced by its ``q``-bit phase
    quantization and frozen."""
    out = params.copy()
    pq = quantize_base(params.base, q).p
    out.p_r[...] = pq.real
    out.p_i[...] = pq.imag
    out.conv_frozen = True
    out.q = q
    return out


def quantize_and_retrain(params: NetworkParams, dataset, cfg: TrainConfig, omega=None):
    """Quantize the filter to ``Q_q``, freeze it, retrain the FC layers.
    Returns ``(params, per_epoch_loss)``."""
    frozen = freeze_quantized(params, cfg.q)
    retrain_cfg = dataclasses.replace(cfg, seed=cfg.seed + 1)
    return train(dataset, retrain_cfg, init=frozen, omega=omega)


def predict_beam(params: NetworkParams, y):
    """Beam decision from real ``[y_R; y_I]`` features (single vector or rows)."""
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != params.w1.shape[1]:
        raise ValueError(f"expected {params.w1.shape[1]} features, got {y.shape[-1]}")
    logits, _ = fc_forward(params, y)
    cls = np.argmax(logits, axis=-1)
    if y.ndim == 1:
        return BeamIndex.from_flat(int(cls[0]), params.n)
    return cls


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

CKPT_MAGIC = b"CCSMODL\x00"


def save_checkpoint(path, params: NetworkParams, omega: SubsamplingSet, meta: dict | None = None):
    """``MAGIC | u32 length | JSON manifest | float32 LE layers in PARAM_NAMES order``.

    A frozen quantized filter is also stored as exact phase indices.
    """
    payload = b"".join(np.ascontiguousarray(getattr(params, k), dtype="<f4").tobytes() for k in PARAM_NAMES)
    manifest = {
        "format": "ccsbeam-model",
        "version": 1,
        "n": params.n,
        "m": params.m,
        "q": params.q,
        "conv_frozen": params.conv_frozen,
        "layers": {k: list(getattr(params, k).shape) for k in PARAM_NAMES},
        "layer_order": list(PARAM_NAMES),
        "omega": omega.to_list(),
        "payload_bytes": len(payload),
        "sha256": hashlib.sha256(payload).hexdigest(),
        "meta": meta or {},
    }
    if params.conv_frozen and params.q is not None and np.all(in_alphabet(params.base, params.q, 1e-9)):
        bm = BaseMatrix(params.base, quantized=True, q=params.q)
        manifest["phase_indices"] = bm.phase_indices().ravel().tolist()
    head = json.dumps(manifest, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC + struct.pack("<I", len(head)) + head + payload)


def read_checkpoint_manifest(path):
    raw = Path(path).read_bytes()
    if raw[: len(CKPT_MAGIC)] != CKPT_MAGIC or len(raw) < len(CKPT_MAGIC) + 4:
        raise HeaderError(f"{path}: not a model checkpoint")
    (hlen,) = struct.unpack("<I", raw[len(CKPT_MAGIC) : len(CKPT_MAGIC) + 4])
    start = len(CKPT_MAGIC) + 4
    if start + hlen > len(raw):
        raise TruncatedPayloadError(f"{path}: manifest truncated")
    try:
        manifest = json.loads(raw[start : start + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HeaderError(f"{path}: manifest is not valid JSON") from exc
    if manifest.get("format") != "ccsbeam-model":
        raise HeaderError(f"{path}: unsupported checkpoint format")
    return manifest, raw[start + hlen :]


def load_checkpoint(path):
    """Returns ``(params, omega, manifest)``."""
    manifest, payload = read_checkpoint_manifest(path)
    if len(payload) != manifest["payload_bytes"]:
        raise TruncatedPayloadError(f"{path}: payload truncated")
    if hashlib.sha256(payload).hexdigest() != manifest["sha256"]:
        raise ChecksumError(f"{path}: payload checksum mismatch")
    arrays = {}
    offset = 0
    for k in manifest["layer_order"]:
        shape = tuple(manifest["layers"][k])
        size = int(np.prod(shape)) * 4
        arrays[k] = np.frombuffer(payload[offset : offset + size], dtype="<f4").reshape(shape).astype(float)
        offset += size
    n = manifest["n"]
    if "phase_indices" in manifest:
        bm = BaseMatrix.from_phase_indices(np.reshape(manifest["phase_indices"], (n, n)), manifest["q"])
        arrays["p_r"], arrays["p_i"] = bm.p.real.copy(), bm.p.imag.copy()
    params = NetworkParams(**arrays, conv_frozen=manifest["conv_frozen"], q=manifest["q"])
    omega = SubsamplingSet.from_coords(manifest["omega"], n)
    return params, omega, manifest
