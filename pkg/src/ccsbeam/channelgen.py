"""Synthetic vehicular channels for an RSU-mounted UPA.

Geometry: the array sits at ``(0, 0, rsu_height)`` in the y-z plane with
boresight along the road (x axis). Vehicles drive along x on lanes at
``y = lane_offset``. Array rows follow the vertical direction cosine
``u = d_z`` and columns the cross-road one ``v = d_y`` (half-wavelength
spacing). As a vehicle moves along its lane, ``(u, v)`` slides along a ray
from the origin whose slope is set by the lane offset, giving one strip of
likely beams per lane.

NLoS energy is a ground-bounce path plus scattered copies around the LoS
direction; with probability ``blockage_prob`` the LoS ray itself is removed
(a truck in the way).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ccsbeam.numkit import BeamIndex, dft2

CARRIER_HZ = 28e9
WAVELENGTH = 299_792_458.0 / CARRIER_HZ
SCATTER_SPREAD = 0.06  # std of direction-cosine perturbation of scattered paths

MAGIC = b"CCSDSET\x00"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class ScenarioConfig:
    n_antennas: int = 16
    rsu_height: float = 5.0
    lane_offsets: tuple = (4.0, 7.0)
    road_span: float = 50.0
    rx_height: float = 1.5
    n_nlos_paths: int = 3
    blockage_prob: float = 0.2
    nlos_gain_db: float = -10.0
    array_azimuth_deg: float = 45.0
    seed: int = 0

    def __post_init__(self):
        n = self.n_antennas
        if n < 4 or n & (n - 1):
            raise ValueError(f"n_antennas must be a power of two >= 4, got {n}")
        offsets = tuple(float(o) for o in self.lane_offsets)
        object.__setattr__(self, "lane_offsets", offsets)
        if not offsets or any(o <= 0 for o in offsets) or len(set(offsets)) != len(offsets):
            raise ValueError("lane_offsets must be positive and distinct")
        if not 0.0 <= self.blockage_prob <= 1.0:
            raise ValueError("blockage_prob must lie in [0, 1]")
        if self.road_span <= 0 or self.n_nlos_paths < 0:
            raise ValueError("road_span must be positive and n_nlos_paths >= 0")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["lane_offsets"] = list(self.lane_offsets)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        if "lane_offsets" in d:
            d["lane_offsets"] = tuple(d["lane_offsets"])
        return cls(**d)


@dataclass
class Channel:
    h: np.ndarray
    label: BeamIndex
    los: bool
    position: tuple
    lane: int


@dataclass
class Dataset:
    """Columnar channel collection; ``dataset[k]`` yields a :class:`Channel`."""

    config: ScenarioConfig
    h: np.ndarray  # (count, N, N) complex128
    labels: np.ndarray  # (count,) flat class index i*N + j
    los: np.ndarray
    positions: np.ndarray  # (count, 3)
    lanes: np.ndarray
    split: str = "train"
    scaling: str = "per-channel"

    @property
    def n(self) -> int:
        return self.h.shape[-1]

    def __len__(self):
        return self.h.shape[0]

    def __getitem__(self, k) -> Channel:
        return Channel(
            h=self.h[k],
            label=BeamIndex.from_flat(int(self.labels[k]), self.n),
            los=bool(self.los[k]),
            position=tuple(float(v) for v in self.positions[k]),
            lane=int(self.lanes[k]),
        )

    @property
    def channels(self):
        return [self[k] for k in range(len(self))]

    def subset(self, idx) -> "Dataset":
        return dataclasses.replace(
            self,
            h=self.h[idx],
            labels=self.labels[idx],
            los=self.los[idx],
            positions=self.positions[idx],
            lanes=self.lanes[idx],
        )


def steering_matrix(u: float, v: float, n: int = 16) -> np.ndarray:
    """UPA response ``A(r, c) = exp(j*pi*(r*u + c*v))``."""
    r = np.arange(n)
    return np.exp(1j * np.pi * (r[:, None] * u + r[None, :] * v))


def best_beam_flat(h) -> np.ndarray:
    """Flat argmax of ``|dft2(h)|`` per channel (lowest index wins ties)."""
    mag = np.abs(dft2(h))
    return np.argmax(mag.reshape(*mag.shape[:-2], -1), axis=-1)


def _wrap(x):
    return (np.asarray(x) + 1.0) % 2.0 - 1.0


def _array_cosines(d, azimuth_deg):
    """Direction cosines (vertical, horizontal) of unit vector ``d`` seen by the array."""
    psi = np.deg2rad(azimuth_deg)
    horiz = np.array([np.sin(psi), np.cos(psi), 0.0])
    return float(d[2]), float(d @ horiz)


def _direction(tx, rx):
    d = np.asarray(rx, dtype=float) - np.asarray(tx, dtype=float)
    dist = float(np.linalg.norm(d))
    return d / dist, dist


def _crandn(rng, size=None):
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2)


def sample_channel(config: ScenarioConfig, rng: np.random.Generator) -> Channel:
    n = config.n_antennas
    tx = np.array([0.0, 0.0, config.rsu_height])
    while True:
        lane = int(rng.integers(len(config.lane_offsets)))
        x = rng.uniform(-config.road_span, config.road_span)
        rx = np.array([x, config.lane_offsets[lane], config.rx_height])
        if np.linalg.norm(rx - tx) > 1e-6:
            break

    d, dist = _direction(tx, rx)
    u0, v0 = _array_cosines(d, config.array_azimuth_deg)
    amp0 = WAVELENGTH / (4 * np.pi * dist)
    blocked = rng.random() < config.blockage_prob

    h = np.zeros((n, n), dtype=complex)
    if not blocked:
        h += amp0 * np.exp(2j * np.pi * rng.random()) * steering_matrix(u0, v0, n)

    nlos_amp = amp0 * 10 ** (config.nlos_gain_db / 20)
    for path in range(config.n_nlos_paths):
        if path == 0:
            # ground bounce: mirror the receiver below the road surface
            dg, dist_g = _direction(tx, rx * np.array([1.0, 1.0, -1.0]))
            u, v = _array_cosines(dg, config.array_azimuth_deg)
            gain = nlos_amp * (dist / dist_g)
        else:
            u = u0 + SCATTER_SPREAD * rng.standard_normal()
            v = v0 + SCATTER_SPREAD * rng.standard_normal()
            gain = nlos_amp
        h += gain * _crandn(rng) * steering_matrix(_wrap(u), _wrap(v), n)

    if not np.any(h):
        # only reachable with blockage and zero NLoS paths; keep a weak LoS leak
        h = nlos_amp * steering_matrix(u0, v0, n)

    label = BeamIndex.from_flat(int(best_beam_flat(h)), n)
    return Channel(h=h, label=label, los=not blocked, position=tuple(rx), lane=lane)


def channel_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for channel ``index``; order of generation is irrelevant."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def _collect(config, indices, split):
    chans = [sample_channel(config, channel_rng(config.seed, k)) for k in indices]
    n = config.n_antennas
    return Dataset(
        config=config,
        h=np.stack([c.h for c in chans]) if chans else np.zeros((0, n, n), complex),
        labels=np.array([c.label.flat(n) for c in chans], dtype=np.int64),
        los=np.array([c.los for c in chans], dtype=bool),
        positions=np.array([c.position for c in chans], dtype=float).reshape(-1, 3),
        lanes=np.array([c.lane for c in chans], dtype=np.int64),
        split=split,
        scaling="none",
    )


def scale_per_channel(ds: Dataset) -> Dataset:
    norms = np.linalg.norm(ds.h, axis=(1, 2))
    h = ds.h * (ds.n / norms)[:, None, None]
    return dataclasses.replace(ds, h=h, scaling="per-channel")


def scale_common(ds: Dataset) -> Dataset:
    mean_energy = np.mean(np.sum(np.abs(ds.h) ** 2, axis=(1, 2)))
    h = ds.h * (ds.n / np.sqrt(mean_energy))
    return dataclasses.replace(ds, h=h, scaling="common")


def generate_dataset(config: ScenarioConfig, n_train: int, n_test: int):
    """Train split normalised per channel to ``||H||_F = N``; test split shares
    one factor so that the mean of ``||H||_F^2`` is ``N^2``. Labels are fixed
    before scaling. Train and test use disjoint channel indices."""
    if n_train < 1 or n_test < 1:
        raise ValueError("n_train and n_test must be >= 1")
    train = scale_per_channel(_collect(config, range(n_train), "train"))
    test = scale_common(_collect(config, range(n_train, n_train + n_test), "test"))
    return train, test


def beamspace_prior(dataset: Dataset) -> np.ndarray:
    """Empirical probability that each 2D-DFT beam is optimal."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    n = dataset.n
    counts = np.bincount(dataset.labels, minlength=n * n).astype(float)
    return (counts / counts.sum()).reshape(n, n)


def mass_concentration(prior: np.ndarray, mass: float) -> float:
    """Smallest fraction of beam bins that together hold ``mass`` of the prior."""
    p = np.sort(prior.ravel())[::-1]
    k = int(np.searchsorted(np.cumsum(p), mass - 1e-12)) + 1
    return min(k, p.size) / p.size


def prior_entropy_bits(prior: np.ndarray) -> float:
    p = prior.ravel()
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


class FileFormatError(ValueError):
    """Base class for unreadable dataset or checkpoint files."""


class HeaderError(FileFormatError):
    pass


class TruncatedPayloadError(FileFormatError):
    pass


class ChecksumError(FileFormatError):
    pass


class StructureError(FileFormatError):
    pass


def _payload_size(count, n):
    return count * (n * n * 16 + 2)


def save_dataset(dataset: Dataset, path, meta: dict | None = None) -> None:
    """Write ``MAGIC | u32 manifest length | JSON manifest | payload``.

    Payload: every channel as row-major little-endian float64 (re, im) pairs,
    then one little-endian uint16 label ``i*N + j`` per channel.
    """
    n, count = dataset.n, len(dataset)
    h = np.ascontiguousarray(dataset.h, dtype="<c16")
    payload = h.tobytes() + dataset.labels.astype("<u2").tobytes()
    manifest = {
        "format": "ccsbeam-dataset",
        "version": FORMAT_VERSION,
        "n": n,
        "count": count,
        "split": dataset.split,
        "scaling": dataset.scaling,
        "config": dataset.config.to_dict(),
        "payload_bytes": len(payload),
        "sha256": hashlib.sha256(payload).hexdigest(),
        "los": dataset.los.astype(int).tolist(),
        "lanes": dataset.lanes.tolist(),
        "positions": dataset.positions.tolist(),
        "meta": meta or {},
    }
    head = json.dumps(manifest, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(head)))
        f.write(head)
        f.write(payload)


def read_manifest(path) -> tuple:
    """Return ``(manifest, payload_bytes)`` after header validation only."""
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 4 or raw[: len(MAGIC)] != MAGIC:
        raise HeaderError(f"{path}: not a dataset file (bad magic)")
    (hlen,) = struct.unpack("<I", raw[len(MAGIC) : len(MAGIC) + 4])
    start = len(MAGIC) + 4
    if start + hlen > len(raw):
        raise TruncatedPayloadError(f"{path}: manifest truncated")
    try:
        manifest = json.loads(raw[start : start + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HeaderError(f"{path}: manifest is not valid JSON") from exc
    for key in ("n", "count", "payload_bytes", "sha256", "config"):
        if key not in manifest:
            raise HeaderError(f"{path}: manifest missing {key!r}")
    if manifest.get("format") != "ccsbeam-dataset" or manifest.get("version") != FORMAT_VERSION:
        raise HeaderError(f"{path}: unsupported format/version")
    return manifest, raw[start + hlen :]


def load_dataset(path) -> Dataset:
    manifest, payload = read_manifest(path)
    n, count = int(manifest["n"]), int(manifest["count"])
    declared = int(manifest["payload_bytes"])
    if len(payload) < declared:
        raise TruncatedPayloadError(
            f"{path}: payload has {len(payload)} bytes, manifest declares {declared}"
        )
    if declared != _payload_size(count, n) or len(payload) != declared:
        raise StructureError(
            f"{path}: payload size {len(payload)} inconsistent with N={n}, count={count}"
        )
    if hashlib.sha256(payload).hexdigest() != manifest["sha256"]:
        raise ChecksumError(f"{path}: payload checksum mismatch")
    nh = count * n * n * 16
    h = np.frombuffer(payload[:nh], dtype="<c16").reshape(count, n, n).astype(complex)
    labels = np.frombuffer(payload[nh:], dtype="<u2").astype(np.int64)
    config = ScenarioConfig.from_dict(manifest["config"])
    if config.n_antennas != n:
        raise StructureError(f"{path}: config N={config.n_antennas} but header N={n}")
    return Dataset(
        config=config,
        h=h,
        labels=labels,
        los=np.array(manifest.get("los", [1] * count), dtype=bool),
        positions=np.array(manifest.get("positions", [[0.0] * 3] * count), dtype=float).reshape(-1, 3),
        lanes=np.array(manifest.get("lanes", [0] * count), dtype=np.int64),
        split=manifest.get("split", "train"),
        scaling=manifest.get("scaling", "none"),
    )
