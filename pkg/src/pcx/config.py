"""Run configuration.

One frozen dataclass carries every tunable of the pipeline with the
usual defaults: graph threshold 1.5, cluster floor 300 points, size band
0.2 to 3.0 m, loss weights 1 and 2, and the alpha schedule that switches
feature affinity on partway through training. Configs hash canonically
so provenance sidecars can pin the exact parameters of a run.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Optional

from .geometry import AugmentationConfig

DEFAULT_ALPHA_SCHEDULE = ((0.0, 0.0), (1.0 / 3.0, 0.5), (2.0 / 3.0, 0.5))


def config_hash(obj) -> str:
    """sha256 over the canonical JSON form of a config-like mapping."""
    canon = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class PipelineConfig:
    """All pipeline knobs in one place."""

    # segmentation
    alpha_schedule: tuple = DEFAULT_ALPHA_SCHEDULE
    threshold: float = 1.5
    knn_k: int = 16
    radius_cap: float = 0.5
    min_points: int = 300
    # exchange (beta None = pick by eligible-count rule)
    beta: Optional[float] = None
    min_side: float = 0.2
    max_side: float = 3.0
    # loss weights
    lambda_: float = 1.0
    gamma: float = 2.0
    # view augmentation
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig)
    # global seed
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "alpha_schedule",
                           tuple((float(f), float(a)) for f, a in self.alpha_schedule))
        fracs = [f for f, _ in self.alpha_schedule]
        if not fracs:
            raise ValueError("alpha_schedule must have at least one entry")
        if any(not 0.0 <= f <= 1.0 for f in fracs):
            raise ValueError("schedule fractions must lie in [0, 1]")
        if any(b <= a for a, b in zip(fracs, fracs[1:])):
            raise ValueError("schedule fractions must be strictly increasing")

    def alpha_at(self, progress: float) -> float:
        """Alpha for a training progress fraction: last fired schedule step."""
        if not 0.0 <= progress <= 1.0:
            raise ValueError("progress must lie in [0, 1]")
        alpha = 0.0
        for fraction, value in self.alpha_schedule:
            if progress >= fraction:
                alpha = value
        return alpha

    def to_dict(self) -> dict:
        aug = self.augmentation
        return {
            "alpha_schedule": [list(pair) for pair in self.alpha_schedule],
            "threshold": self.threshold,
            "knn_k": self.knn_k,
            "radius_cap": self.radius_cap,
            "min_points": self.min_points,
            "beta": self.beta,
            "min_side": self.min_side,
            "max_side": self.max_side,
            "lambda": self.lambda_,
            "gamma": self.gamma,
            "augmentation": {
                "flip_axes": sorted(aug.flip_axes),
                "z_rotation_range": aug.z_rotation_range,
                "scale_jitter": list(aug.scale_jitter),
                "crop_fraction": aug.crop_fraction,
                "seed": aug.seed,
            },
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        defaults = cls()
        known = {
            "alpha_schedule", "threshold", "knn_k", "radius_cap", "min_points",
            "beta", "min_side", "max_side", "lambda", "gamma", "augmentation",
            "seed",
        }
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        aug_raw = raw.get("augmentation")
        if aug_raw is None:
            augmentation = defaults.augmentation
        else:
            augmentation = AugmentationConfig(
                flip_axes=frozenset(aug_raw.get("flip_axes", ())),
                z_rotation_range=aug_raw.get("z_rotation_range", 0.0),
                scale_jitter=tuple(aug_raw.get("scale_jitter", (1.0, 1.0))),
                crop_fraction=aug_raw.get("crop_fraction", 1.0),
                seed=aug_raw.get("seed", 0),
            )
        return cls(
            alpha_schedule=tuple(
                tuple(p) for p in raw.get("alpha_schedule", DEFAULT_ALPHA_SCHEDULE)),
            threshold=raw.get("threshold", defaults.threshold),
            knn_k=raw.get("knn_k", defaults.knn_k),
            radius_cap=raw.get("radius_cap", defaults.radius_cap),
            min_points=raw.get("min_points", defaults.min_points),
            beta=raw.get("beta", defaults.beta),
            min_side=raw.get("min_side", defaults.min_side),
            max_side=raw.get("max_side", defaults.max_side),
            lambda_=raw.get("lambda", defaults.lambda_),
            gamma=raw.get("gamma", defaults.gamma),
            augmentation=augmentation,
            seed=raw.get("seed", defaults.seed),
        )

    def hash(self) -> str:
        return config_hash(self.to_dict())

    def with_seed(self, seed: int) -> "PipelineConfig":
        return replace(self, seed=seed)
