"""Plain-text key = value run configuration."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from typing import get_type_hints


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # paths and execution
    fixations: str | None = None
    videos: str | None = None
    out: str = "out"
    seed: int | None = None
    seeds: str | None = None
    jobs: int = 1
    downsample: int = 4
    flow_dir: str | None = None
    # fixation maps and consistency
    sigma: float | None = None
    skip_ms: float = 200.0
    n_samples: int = 1000
    pooling: str = "pooled"
    sse_threshold: float | None = None
    link_radius: float | None = None
    max_gap: int = 5
    patch_radius: int | None = None
    change_threshold: float = 0.7
    laplace_add: float = 1.0
    n_random: int = 10
    kmeans_restarts: int = 10
    # saliency
    alpha: float = 0.0
    kl_epsilon: float = 1e-8
    kl_mode: str = "per_frame"
    combine_regularization: float = 1.0
    combine_frames: int = 500
    scale_lo: float = 2.0
    scale_hi: float = 8.0
    temporal_factor: float = 0.5
    # features
    flow_lambda: float = 0.05
    flow_iterations: int = 100
    harris_threshold: float = 0.05
    harris_k: float = 0.005
    # detector
    detector_examples: int = 10000
    detector_c: float = 0.1
    detector_sigma_s: float = 2.0
    detector_sigma_t: float = 2.0
    stride_x: int = 4
    stride_y: int = 4
    stride_t: int = 2
    # recognition
    encoder: str = "bow"
    sampler: str = "saliency"
    vocab_size: int = 64
    vocab_max_descriptors: int = 4000
    points_per_frame: int | None = None
    svm_c: float = 10.0
    mkl_sigma: float = 1e-3
    o2p_epsilon: float = 1e-3
    fixation_mode: str = "per_frame_2d"
    fixation_sigma_s: float = 4.0

    def resolved(self) -> dict:
        return dataclasses.asdict(self)

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("this command is stochastic: set seed (--seed or 'seed = ...' in the config)")
        return self.seed

    def seed_list(self) -> list[int]:
        if self.seeds:
            try:
                return [int(s) for s in self.seeds.split(",") if s.strip()]
            except ValueError:
                raise ConfigError(f"bad seed list {self.seeds!r}") from None
        return [self.require_seed()]


def _coerce(name: str, raw: str, hint) -> object:
    text = raw.strip()
    optional = "None" in str(hint)
    if optional and text.lower() in ("", "none", "null"):
        return None
    base = str(hint).replace(" | None", "").replace("None | ", "")
    try:
        if base.startswith("int") or base == "<class 'int'>":
            return int(text)
        if base.startswith("float") or base == "<class 'float'>":
            return float(text)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {base}") from None
    return text


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse ``key = value`` lines (``#`` comments allowed) over ``base``; unknown keys are rejected."""
    cfg = dataclasses.replace(base) if base is not None else RunConfig()
    hints = get_type_hints(RunConfig)
    known = {f.name for f in fields(RunConfig)}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        setattr(cfg, key, _coerce(key, value, hints[key]))
    return cfg


def apply_overrides(cfg: RunConfig, overrides: dict) -> RunConfig:
    hints = get_type_hints(RunConfig)
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in hints:
            raise ConfigError(f"unknown setting {key!r}")
        setattr(cfg, key, _coerce(key, str(value), hints[key]) if isinstance(value, str) else value)
    return cfg
