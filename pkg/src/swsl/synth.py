"""Synthetic weakly labeled datasets with instance-level ground truth.

Positive and negative instances are drawn from two isotropic Gaussians whose
means sit at ``+/- separation / 2`` along the fixed unit direction
``(1, ..., 1, -1, ..., -1) / sqrt(dim)``.  Raw draws go through a softplus and
are L1-normalized, so every feature vector is a valid histogram.  Class means
depend only on the config, never on the seed, so datasets generated with
different seeds share one underlying distribution (train/test splits).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from swsl.data import Bag, Instance, SwslDataset
from swsl.errors import DataError


@dataclass(frozen=True)
class SynthConfig:
    # defaults describe the benchmark family: weak data dominated by positive
    # bags, with half as many negative bags
    seed: int = 0
    dim: int = 16
    num_supervised_pos: int = 25
    num_supervised_neg: int = 25
    num_pos_bags: int = 20
    num_neg_bags: int = 10
    bag_size: int = 10
    witness_rate: float = 0.3
    bag_label_noise: float = 0.0
    signal_noise_sd: float = 1.0
    cluster_separation: float = 3.5

    def __post_init__(self):
        counts = ("dim", "num_supervised_pos", "num_supervised_neg", "num_pos_bags",
                  "num_neg_bags", "bag_size")
        for name in counts:
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < 0:
                raise DataError(f"{name} must be a non-negative integer")
        if self.dim < 2:
            raise DataError("dim must be at least 2")
        if (self.num_pos_bags or self.num_neg_bags) and self.bag_size < 1:
            raise DataError("bag_size must be at least 1 when bags are requested")
        if not 0 < self.witness_rate <= 1:
            raise DataError("witness_rate must lie in (0, 1]")
        if not 0 <= self.bag_label_noise < 1:
            raise DataError("bag_label_noise must lie in [0, 1)")
        if self.signal_noise_sd < 0 or self.cluster_separation < 0:
            raise DataError("signal_noise_sd and cluster_separation must be non-negative")

    @property
    def witnesses_per_bag(self) -> int:
        # round first so 0.3 * 10 counts as 3, not ceil(3.0000000000000004)
        return max(1, math.ceil(round(self.witness_rate * self.bag_size, 9)))

    @property
    def num_noisy_bags(self) -> int:
        return int(round(self.bag_label_noise * self.num_pos_bags))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise DataError(f"unknown synth config key(s): {sorted(unknown)}")
        return cls(**doc)


def class_means(config: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    u = np.ones(config.dim)
    u[config.dim // 2:] = -1.0
    u /= np.sqrt(config.dim)
    half = 0.5 * config.cluster_separation * u
    return half, -half


def _to_histogram(raw):
    # softplus, written to stay finite for large |raw|
    pos = np.logaddexp(0.0, raw)
    return pos / pos.sum(axis=-1, keepdims=True)


def generate(config: SynthConfig) -> tuple[SwslDataset, dict[str, int]]:
    """Draw a dataset and the true label of every instance."""
    rng = np.random.default_rng(config.seed)
    mu_pos, mu_neg = class_means(config)

    def draw(labels):
        labels = np.asarray(labels)
        means = np.where(labels[:, None] > 0, mu_pos, mu_neg)
        raw = means + config.signal_noise_sd * rng.standard_normal((labels.size, config.dim))
        return _to_histogram(raw)

    instances: list[Instance] = []
    truth: dict[str, int] = {}

    sup_labels = np.array([1] * config.num_supervised_pos + [-1] * config.num_supervised_neg)
    sup_labels = sup_labels[rng.permutation(sup_labels.size)]
    for k, (x, y) in enumerate(zip(draw(sup_labels), sup_labels)):
        iid = f"s{k:04d}"
        instances.append(Instance(iid, x, int(y)))
        truth[iid] = int(y)

    bags: list[Bag] = []
    noisy = set(rng.choice(config.num_pos_bags, size=config.num_noisy_bags, replace=False).tolist()) \
        if config.num_noisy_bags else set()
    w = config.witnesses_per_bag
    if w > config.bag_size and config.num_pos_bags:
        raise DataError("witness count exceeds bag size")
    for b in range(config.num_pos_bags):
        member_labels = -np.ones(config.bag_size, dtype=int)
        if b not in noisy:
            member_labels[rng.choice(config.bag_size, size=w, replace=False)] = 1
        bags.append(_make_bag(f"p{b:04d}", 1, member_labels, draw, instances, truth))
    for b in range(config.num_neg_bags):
        member_labels = -np.ones(config.bag_size, dtype=int)
        bags.append(_make_bag(f"n{b:04d}", -1, member_labels, draw, instances, truth))

    return SwslDataset(instances, bags), truth


def _make_bag(bag_id, bag_label, member_labels, draw, instances, truth):
    ids = []
    for j, (x, y) in enumerate(zip(draw(member_labels), member_labels)):
        iid = f"{bag_id}_{j:03d}"
        instances.append(Instance(iid, x, None))
        truth[iid] = int(y)
        ids.append(iid)
    return Bag(bag_id, bag_label, tuple(ids))


def save_truth(truth: dict[str, int], path) -> None:
    Path(path).write_text(json.dumps({"labels": truth}, indent=1) + "\n", encoding="utf-8")


def load_truth(path) -> dict[str, int]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"truth file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
    labels = doc.get("labels") if isinstance(doc, dict) else None
    if not isinstance(labels, dict):
        raise DataError(f"{path}: expected an object with a 'labels' map")
    for k, v in labels.items():
        if v not in (-1, 1) or isinstance(v, bool):
            raise DataError(f"{path}: label of {k!r} must be -1 or 1")
    return {str(k): int(v) for k, v in labels.items()}
