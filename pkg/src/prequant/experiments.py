"""Fixed-seed end-to-end experiment: calibrate, quantize and score a small MLP."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .patterns import Codification
from .quantizer import FloatLayer, FloatModelSpec, calibrate, quantize_model
from .validate import ErrorReport, compare, run_reference


@dataclass
class MlpConfig:
    dims: tuple = (784, 32, 32, 10)
    activations: tuple = ("relu", "relu", "none")
    seed: int = 0
    calib_samples: int = 100
    test_samples: int = 100
    codification: Codification = Codification.TWO_MUL


def mlp_spec(cfg: MlpConfig) -> FloatModelSpec:
    rng = np.random.default_rng(cfg.seed)
    layers = []
    for i, act in enumerate(cfg.activations):
        fan_in, fan_out = cfg.dims[i], cfg.dims[i + 1]
        w = rng.standard_normal((fan_out, fan_in)) * np.sqrt(2.0 / fan_in)
        b = rng.standard_normal(fan_out) * 0.05
        layers.append(FloatLayer(f"fc{i + 1}", "fc", w, b, act))
    return FloatModelSpec(f"mlp{cfg.seed}", ("N", cfg.dims[0]), layers)


def samples(cfg: MlpConfig, n: int, stream: int) -> list[np.ndarray]:
    rng = np.random.default_rng([cfg.seed, stream])
    return [rng.uniform(-1.0, 1.0, size=(1, cfg.dims[0])).astype(np.float32) for _ in range(n)]


def in_range(model: FloatModelSpec, profile, x) -> bool:
    """True when every calibrated tensor stays within its calibrated abs_max on ``x``."""
    acts = run_reference(model, x)
    return all(float(np.max(np.abs(acts[k]))) <= v for k, v in profile.abs_max.items())


def in_range_samples(cfg: MlpConfig, model, profile, n: int, stream: int = 2, max_draws: int = 100_000):
    rng = np.random.default_rng([cfg.seed, stream])
    out = []
    for _ in range(max_draws):
        x = rng.uniform(-1.0, 1.0, size=(1, cfg.dims[0])).astype(np.float32)
        if in_range(model, profile, x):
            out.append(x)
            if len(out) == n:
                return out
    raise RuntimeError(f"only {len(out)} in-range samples after {max_draws} draws")


def run_mlp(cfg: MlpConfig) -> ErrorReport:
    """Calibrate on one sample stream, score on in-range samples from another."""
    model = mlp_spec(cfg)
    profile = calibrate(model, samples(cfg, cfg.calib_samples, 1))
    g, _ = quantize_model(model, profile, cfg.codification)
    return compare(model, g, in_range_samples(cfg, model, profile, cfg.test_samples))
