"""Onboard training workload: synthetic flood tiles and a per-pixel segmenter.

The segmenter stands in for a mask decoder: each pixel gets
``sigmoid(w . [blue, green, nir, ndwi, inbox] + b)`` where ``inbox`` is the
bounding-box prompt rendered as a binary channel. It is trained with mean
squared error and Adam, and scored with IoU.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .errors import InvalidInputError, NoWaterError, NumericError

FEATURES = ("band1", "band2", "band3", "ndwi", "inbox")
N_PARAMS = len(FEATURES) + 1
DEFAULT_WIRE_SIZE = 16_000_000
MIN_WATER_FRACTION = 0.02
MAX_WATER_FRACTION = 0.5


@dataclass(frozen=True)
class TileDomain:
    """Reflectance statistics of one acquisition regime.

    Bands are (blue, green, nir) surrogates. Water depresses NIR and lifts
    green relative to land; ``edge_width`` blurs the shoreline so that
    boundary pixels are mixed.
    """

    land: tuple[float, float, float] = (0.08, 0.10, 0.30)
    water: tuple[float, float, float] = (0.07, 0.11, 0.10)
    noise_std: float = 0.03
    brightness_jitter: float = 0.02
    edge_width: float = 0.08

    def scaled(self, factors) -> "TileDomain":
        """Copy with (blue, green, nir) water reflectance and noise multiplied by ``factors``."""
        f = np.clip(np.asarray(factors, dtype=float), 0.3, 3.0)
        water = tuple(float(w * s) for w, s in zip(self.water, f[:3]))
        return replace(self, water=water, noise_std=float(self.noise_std * f[3]))


# Regime the starting checkpoint is fitted on: murkier water with less NIR contrast.
SOURCE_DOMAIN = TileDomain(water=(0.07, 0.11, 0.14))
# Flood water at the disaster site.
TARGET_DOMAIN = TileDomain()


@dataclass(frozen=True)
class TileSample:
    bands: np.ndarray  # (3, H, W), standardized per band
    ndwi: np.ndarray  # (H, W), from raw reflectances
    mask: np.ndarray  # (H, W) uint8
    bbox: tuple[int, int, int, int]  # row_min, col_min, row_max, col_max

    @property
    def water_fraction(self) -> float:
        return float(self.mask.mean())


@dataclass
class ModelParams:
    weights: np.ndarray  # len(FEATURES) weights followed by the bias
    version: int = 0
    wire_size_bytes: int = DEFAULT_WIRE_SIZE

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if not np.all(np.isfinite(self.weights)):
            raise InvalidInputError("weights must be finite")
        if self.wire_size_bytes <= 0:
            raise InvalidInputError("wire_size_bytes must be > 0")

    @classmethod
    def zeros(cls, **kwargs) -> "ModelParams":
        return cls(np.zeros(N_PARAMS), **kwargs)

    def copy(self) -> "ModelParams":
        return ModelParams(self.weights.copy(), self.version, self.wire_size_bytes)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def fresh(cls, n: int = N_PARAMS) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


@dataclass(frozen=True)
class TrainerConfig:
    batch_size: int = 16
    learning_rate: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8

    def __post_init__(self):
        if self.batch_size < 1:
            raise InvalidInputError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise InvalidInputError("learning_rate must be > 0")


# --- data preparation -------------------------------------------------------

def ndwi(green, nir) -> np.ndarray:
    green = np.asarray(green, dtype=float)
    nir = np.asarray(nir, dtype=float)
    if green.shape != nir.shape:
        raise InvalidInputError(f"shape mismatch {green.shape} vs {nir.shape}")
    denom = green + nir
    safe = np.abs(denom) >= 1e-12
    out = np.zeros_like(denom)
    np.divide(green - nir, denom, out=out, where=safe)
    return out


def normalize_bands(bands) -> np.ndarray:
    """Per-band standardization with the population standard deviation."""
    bands = np.asarray(bands, dtype=float)
    out = np.zeros_like(bands)
    for i, band in enumerate(bands):
        if band.size == 0:
            raise InvalidInputError("empty band")
        std = band.std()
        if std >= 1e-12:
            out[i] = (band - band.mean()) / std
    return out


def extract_bbox(mask) -> tuple[int, int, int, int]:
    rows, cols = np.nonzero(np.asarray(mask))
    if rows.size == 0:
        raise NoWaterError("mask contains no water pixels")
    return int(rows.min()), int(cols.min()), int(rows.max()), int(cols.max())


def _draw_tile(rng: np.random.Generator, size: int, domain: TileDomain) -> TileSample:
    yy, xx = np.mgrid[0:size, 0:size].astype(float) + 0.5
    while True:
        target = rng.uniform(0.03, 0.35)
        aspect = rng.uniform(0.5, 2.0)
        theta = rng.uniform(0.0, math.pi)
        cy, cx = rng.uniform(0.2 * size, 0.8 * size, size=2)
        ra = math.sqrt(target * size * size / math.pi * aspect)
        rb = ra / aspect
        c, s = math.cos(theta), math.sin(theta)
        u = (xx - cx) * c + (yy - cy) * s
        v = -(xx - cx) * s + (yy - cy) * c
        rho = np.sqrt((u / ra) ** 2 + (v / rb) ** 2)
        mask = (rho <= 1.0).astype(np.uint8)
        if MIN_WATER_FRACTION <= mask.mean() <= MAX_WATER_FRACTION:
            break

    mix = expit((1.0 - rho) / domain.edge_width)
    land = np.asarray(domain.land) + domain.brightness_jitter * rng.standard_normal(3)
    water = np.asarray(domain.water)
    raw = mix * water[:, None, None] + (1.0 - mix) * land[:, None, None]
    raw = raw + domain.noise_std * rng.standard_normal(raw.shape)
    raw = np.clip(raw, 1e-3, None)
    return TileSample(
        bands=normalize_bands(raw),
        ndwi=ndwi(raw[1], raw[2]),
        mask=mask,
        bbox=extract_bbox(mask),
    )


def generate_tiles(seed: int, count: int, shard_id: int, size: int = 256,
                   domain: TileDomain = TARGET_DOMAIN) -> list[TileSample]:
    """Deterministic synthetic tiles, one elliptical water body each.

    Every (seed, shard_id) pair draws from its own child seed, so shards
    never share a stream.
    """
    if count < 0:
        raise InvalidInputError("count must be >= 0")
    rng = np.random.default_rng(np.random.SeedSequence([seed, shard_id]))
    return [_draw_tile(rng, size, domain) for _ in range(count)]


def shard_domain(base: TileDomain, seed: int, shard_id: int, spread: float) -> TileDomain:
    """Per-shard variation of ``base`` (each satellite images a different region).

    Shards come in antithetic pairs (2j, 2j+1) that share one draw with
    opposite signs, so an even-sized constellation is centred on ``base``.
    """
    if spread == 0:
        return base
    z = np.random.default_rng(np.random.SeedSequence([seed, shard_id // 2, 0xD0])).standard_normal(4)
    sign = 1.0 if shard_id % 2 == 0 else -1.0
    return base.scaled(1.0 + sign * spread * z)


def export_tiles(tiles: Sequence[TileSample], directory, stem: str, *, seed: int,
                 shard_id: int) -> Path:
    """Write tiles as flat little-endian arrays with a JSON sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    n = len(tiles)
    size = tiles[0].mask.shape[0] if n else 0
    arrays = {
        "bands": (np.stack([t.bands for t in tiles]) if n else np.zeros((0, 3, 0, 0))).astype("<f8"),
        "ndwi": (np.stack([t.ndwi for t in tiles]) if n else np.zeros((0, 0, 0))).astype("<f8"),
        "mask": (np.stack([t.mask for t in tiles]) if n else np.zeros((0, 0, 0))).astype("u1"),
        "bbox": np.array([t.bbox for t in tiles], dtype="<i4").reshape(n, 4),
    }
    sidecar = {"seed": seed, "shard_id": shard_id, "count": n, "tile_size": size, "arrays": {}}
    for name, arr in arrays.items():
        fname = f"{stem}.{name}.bin"
        arr.tofile(directory / fname)
        sidecar["arrays"][name] = {"file": fname, "shape": list(arr.shape), "dtype": arr.dtype.str}
    meta_path = directory / f"{stem}.json"
    meta_path.write_text(json.dumps(sidecar, indent=2))
    return meta_path


def load_tiles(meta_path) -> list[TileSample]:
    meta_path = Path(meta_path)
    meta = json.loads(meta_path.read_text())
    arrs = {}
    for name, info in meta["arrays"].items():
        arrs[name] = np.fromfile(meta_path.parent / info["file"], dtype=info["dtype"]).reshape(info["shape"])
    return [
        TileSample(arrs["bands"][i].astype(float), arrs["ndwi"][i].astype(float),
                   arrs["mask"][i].astype(np.uint8), tuple(int(v) for v in arrs["bbox"][i]))
        for i in range(meta["count"])
    ]


# --- model -----------------------------------------------------------------

def tile_features(tile: TileSample) -> np.ndarray:
    """Design matrix of shape (H*W, N_PARAMS); the last column is the bias input."""
    h, w = tile.mask.shape
    r0, c0, r1, c1 = tile.bbox
    inbox = np.zeros((h, w))
    inbox[r0:r1 + 1, c0:c1 + 1] = 1.0
    cols = [tile.bands[0], tile.bands[1], tile.bands[2], tile.ndwi, inbox, np.ones((h, w))]
    return np.stack([c.ravel() for c in cols], axis=1)


def forward(params: ModelParams, tile: TileSample) -> np.ndarray:
    return expit(tile_features(tile) @ params.weights).reshape(tile.mask.shape)


def loss_mse(pred, mask) -> float:
    pred = np.asarray(pred, dtype=float)
    mask = np.asarray(mask, dtype=float)
    if pred.shape != mask.shape:
        raise InvalidInputError(f"shape mismatch {pred.shape} vs {mask.shape}")
    return float(np.mean((pred - mask) ** 2))


def loss_and_gradient(weights: np.ndarray, X: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error of sigmoid(X @ w) against y, and its gradient in w."""
    s = expit(X @ weights)
    r = s - y
    loss = float(r @ r) / r.size
    dz = r * s * (1.0 - s)
    grad = (2.0 / r.size) * (dz @ X)
    return loss, grad


def stack_batch(batch: Sequence[TileSample]) -> tuple[np.ndarray, np.ndarray]:
    X = np.concatenate([tile_features(t) for t in batch])
    y = np.concatenate([t.mask.ravel().astype(float) for t in batch])
    return X, y


def gradient(params: ModelParams, batch: Sequence[TileSample]) -> np.ndarray:
    """Gradient of the batch-mean MSE with respect to [weights, bias]."""
    if len(batch) == 0:
        raise InvalidInputError("batch must be nonempty")
    X, y = stack_batch(batch)
    return loss_and_gradient(params.weights, X, y)[1]


def adam_step(params: ModelParams, state: AdamState, grad, config: TrainerConfig
              ) -> tuple[ModelParams, AdamState]:
    grad = np.asarray(grad, dtype=float)
    if grad.shape != params.weights.shape or state.m.shape != grad.shape:
        raise InvalidInputError("shape mismatch between params, gradient and moments")
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite gradient")
    t = state.t + 1
    m = config.beta1 * state.m + (1.0 - config.beta1) * grad
    v = config.beta2 * state.v + (1.0 - config.beta2) * grad * grad
    m_hat = m / (1.0 - config.beta1 ** t)
    v_hat = v / (1.0 - config.beta2 ** t)
    weights = params.weights - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps_adam)
    return (ModelParams(weights, params.version + 1, params.wire_size_bytes),
            AdamState(m, v, t))


def iou(pred, mask, threshold: float = 0.5) -> float:
    pred_pos = np.asarray(pred) >= threshold
    true_pos = np.asarray(mask) > 0
    union = np.count_nonzero(pred_pos | true_pos)
    if union == 0:
        return 1.0
    return np.count_nonzero(pred_pos & true_pos) / union


def evaluate(params: ModelParams, eval_set: Sequence[TileSample]) -> tuple[float, float]:
    """Mean IoU and mean MSE over ``eval_set``."""
    if len(eval_set) == 0:
        raise InvalidInputError("eval_set must be nonempty")
    ious, losses = [], []
    for tile in eval_set:
        pred = forward(params, tile)
        ious.append(iou(pred, tile.mask))
        losses.append(loss_mse(pred, tile.mask))
    return float(np.mean(ious)), float(np.mean(losses))


@dataclass
class EvalCache:
    """Precomputed design matrices for repeated evaluation of a fixed tile set."""

    X: np.ndarray  # (n_tiles, pixels, N_PARAMS)
    y: np.ndarray  # (n_tiles, pixels)
    tiles: list = field(repr=False, default_factory=list)

    @classmethod
    def build(cls, tiles: Sequence[TileSample]) -> "EvalCache":
        if len(tiles) == 0:
            raise InvalidInputError("eval_set must be nonempty")
        X = np.stack([tile_features(t) for t in tiles])
        y = np.stack([t.mask.ravel().astype(float) for t in tiles])
        return cls(X, y, list(tiles))

    def evaluate(self, params: ModelParams) -> tuple[float, float]:
        pred = expit(self.X @ params.weights)
        losses = np.mean((pred - self.y) ** 2, axis=1)
        pos = pred >= 0.5
        truth = self.y > 0
        union = np.count_nonzero(pos | truth, axis=1)
        inter = np.count_nonzero(pos & truth, axis=1)
        ious = np.where(union == 0, 1.0, inter / np.maximum(union, 1))
        return float(np.mean(ious)), float(np.mean(losses))


def pretrain(tiles: Sequence[TileSample], wire_size_bytes: int = DEFAULT_WIRE_SIZE,
             max_iter: int = 500) -> ModelParams:
    """Fit the segmenter to convergence on ``tiles`` (the starting checkpoint)."""
    X, y = stack_batch(tiles)
    res = minimize(loss_and_gradient, np.zeros(N_PARAMS), args=(X, y), jac=True,
                   method="L-BFGS-B", options={"maxiter": max_iter, "gtol": 1e-12, "ftol": 1e-15})
    return ModelParams(res.x, 0, wire_size_bytes)
