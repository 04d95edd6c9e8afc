"""Synthetic labelled subjects from a Gaussian latent-community model.

Region ``i`` belongs to community ``i mod K`` and its signal is
``sqrt(c) * f_k + sqrt(1 - c) * noise_std * eps_i`` with unit-variance
Gaussian community factors ``f_k`` and noise ``eps_i``. With
``noise_std = 1`` the expected correlation is ``c`` within a community and
0 across communities, and ``c`` depends on the subject's class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._rng import derive_rng
from .graph import BrainGraph, build_graph


@dataclass(frozen=True)
class SynthConfig:
    n_regions: int = 20
    t_len: int = 150
    n_communities: int = 2
    coupling_by_class: tuple[float, ...] = (0.6, 0.3)
    noise_std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "coupling_by_class", tuple(float(c) for c in self.coupling_by_class))
        if self.n_regions < 2 or self.t_len < 2:
            raise ValueError("need at least 2 regions and 2 time points")
        if not 1 <= self.n_communities <= self.n_regions:
            raise ValueError(f"n_communities must be in [1, n_regions], got {self.n_communities}")
        if len(self.coupling_by_class) < 2:
            raise ValueError("need couplings for at least two classes")
        if any(not 0.0 <= c < 1.0 for c in self.coupling_by_class):
            raise ValueError("couplings must lie in [0, 1)")
        if len(set(self.coupling_by_class)) != len(self.coupling_by_class):
            raise ValueError("couplings must differ between classes")
        if not self.noise_std > 0:
            raise ValueError("noise_std must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @property
    def n_classes(self) -> int:
        return len(self.coupling_by_class)


def community_of(n_regions: int, n_communities: int) -> np.ndarray:
    return np.arange(n_regions) % n_communities


def generate_subject(cfg: SynthConfig, label: int, seed: int) -> np.ndarray:
    """One ``t_len x n_regions`` time series for class ``label``."""
    c = cfg.coupling_by_class[label]
    rng = derive_rng(seed, "synth.subject")
    factors = rng.standard_normal((cfg.t_len, cfg.n_communities))
    noise = rng.standard_normal((cfg.t_len, cfg.n_regions))
    groups = community_of(cfg.n_regions, cfg.n_communities)
    return np.sqrt(c) * factors[:, groups] + np.sqrt(1.0 - c) * cfg.noise_std * noise


def subject_plan(cfg: SynthConfig, n_per_class: int) -> list[tuple[int, int]]:
    """``(label, seed)`` for each subject; subject ``k`` uses seed ``cfg.seed + k``.

    Labels are interleaved (0, 1, ..., C-1, 0, 1, ...) so every prefix is
    as balanced as possible.
    """
    if n_per_class < 1:
        raise ValueError(f"n_per_class must be >= 1, got {n_per_class}")
    total = n_per_class * cfg.n_classes
    return [(k % cfg.n_classes, cfg.seed + k) for k in range(total)]


def generate_timeseries(cfg: SynthConfig, n_per_class: int) -> list[tuple[np.ndarray, int]]:
    return [(generate_subject(cfg, label, seed), label) for label, seed in subject_plan(cfg, n_per_class)]


def generate_dataset(cfg: SynthConfig, n_per_class: int = 50) -> list[BrainGraph]:
    """Balanced list of subject graphs, ``n_per_class`` per class."""
    return [build_graph(ts, label) for ts, label in generate_timeseries(cfg, n_per_class)]
