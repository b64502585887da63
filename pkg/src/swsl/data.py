"""Instances, bags, datasets and the canonical training layout.

The training layout puts every instance with a known label first (strongly
labeled instances, then the members of negative bags, all labeled -1) and
the members of positive bags after them, grouped bag by bag::

    [ x_1 ... x_n | bag 1 | bag 2 | ... | bag T ]

Internally all indices are 0-based and bag ranges are half-open
``(start, stop)`` pairs.  :meth:`IndexedDataset.bag_ranges_1based` gives the
inclusive 1-based ``(p_t, q_t)`` convention used in reports.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from swsl.errors import DataError

LABELS = (-1, 1)


def _check_label(label, what, allow_none=True):
    if label is None and allow_none:
        return None
    # bool is an int subclass; reject it explicitly
    if isinstance(label, bool) or label not in LABELS:
        raise DataError(f"{what}: label must be -1 or 1, got {label!r}")
    return int(label)


@dataclass(frozen=True, eq=False)
class Instance:
    id: str
    features: np.ndarray
    label: int | None = None

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise DataError(f"instance id must be a non-empty string, got {self.id!r}")
        try:
            x = np.array(self.features, dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise DataError(f"instance {self.id!r}: features are not numeric") from exc
        if x.ndim != 1 or x.size == 0:
            raise DataError(f"instance {self.id!r}: features must be a non-empty vector")
        if not np.all(np.isfinite(x)):
            raise DataError(f"instance {self.id!r}: non-finite feature value")
        x.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "label", _check_label(self.label, f"instance {self.id!r}"))

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (self.id == other.id and self.label == other.label
                and np.array_equal(self.features, other.features))

    __hash__ = None


@dataclass(frozen=True)
class Bag:
    id: str
    label: int
    instance_ids: tuple[str, ...]

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise DataError(f"bag id must be a non-empty string, got {self.id!r}")
        object.__setattr__(self, "label", _check_label(self.label, f"bag {self.id!r}", allow_none=False))
        ids = tuple(self.instance_ids)
        if not ids:
            raise DataError(f"bag {self.id!r} is empty")
        if len(set(ids)) != len(ids):
            raise DataError(f"bag {self.id!r} lists an instance more than once")
        object.__setattr__(self, "instance_ids", ids)

    def __len__(self):
        return len(self.instance_ids)


class SwslDataset:
    """Strongly labeled instances plus labeled bags.

    Labeled instances that no bag refers to form the supervised set.
    Unlabeled instances outside every bag are kept (they round-trip through
    JSON and can be scored) but take no part in training.
    """

    def __init__(self, instances: Iterable[Instance], bags: Iterable[Bag] = ()):
        self._instances = tuple(instances)
        self._bags = tuple(bags)
        by_id: dict[str, Instance] = {}
        for inst in self._instances:
            if inst.id in by_id:
                raise DataError(f"duplicate instance id {inst.id!r}")
            by_id[inst.id] = inst
        self._by_id = by_id

        dims = {inst.features.size for inst in self._instances}
        if len(dims) > 1:
            first = self._instances[0]
            for inst in self._instances:
                if inst.features.size != first.features.size:
                    raise DataError(
                        f"instance {inst.id!r} has {inst.features.size} features, "
                        f"expected {first.features.size}")

        owner: dict[str, str] = {}
        bag_ids = set()
        for bag in self._bags:
            if bag.id in bag_ids:
                raise DataError(f"duplicate bag id {bag.id!r}")
            if bag.id in by_id:
                raise DataError(f"bag id {bag.id!r} collides with an instance id")
            bag_ids.add(bag.id)
            for iid in bag.instance_ids:
                if iid not in by_id:
                    raise DataError(f"bag {bag.id!r} references missing instance {iid!r}")
                if iid in owner:
                    raise DataError(
                        f"instance {iid!r} appears in bags {owner[iid]!r} and {bag.id!r}")
                owner[iid] = bag.id
                label = by_id[iid].label
                if bag.label == 1 and label is not None:
                    # a strongly labeled instance inside a positive bag is ambiguous
                    raise DataError(
                        f"instance {iid!r} carries a label but belongs to positive bag {bag.id!r}")
                if bag.label == -1 and label == 1:
                    raise DataError(
                        f"instance {iid!r} is labeled +1 but belongs to negative bag {bag.id!r}")
        self._owner = owner

    @property
    def instances(self) -> tuple[Instance, ...]:
        return self._instances

    @property
    def bags(self) -> tuple[Bag, ...]:
        return self._bags

    @property
    def instances_by_id(self) -> Mapping[str, Instance]:
        return self._by_id

    @property
    def supervised(self) -> tuple[Instance, ...]:
        return tuple(i for i in self._instances
                     if i.label is not None and i.id not in self._owner)

    @property
    def positive_bags(self) -> tuple[Bag, ...]:
        return tuple(b for b in self._bags if b.label == 1)

    @property
    def negative_bags(self) -> tuple[Bag, ...]:
        return tuple(b for b in self._bags if b.label == -1)

    @property
    def dim(self) -> int:
        if not self._instances:
            return 0
        return self._instances[0].features.size

    def bag_of(self, instance_id: str) -> str | None:
        return self._owner.get(instance_id)

    def features(self, ids: Sequence[str]) -> np.ndarray:
        if not ids:
            return np.zeros((0, self.dim))
        return np.vstack([self._by_id[i].features for i in ids])

    def to_dict(self) -> dict:
        return {
            "instances": [
                {"id": i.id, "features": [float(v) for v in i.features], "label": i.label}
                for i in self._instances
            ],
            "bags": [
                {"id": b.id, "label": b.label, "instances": list(b.instance_ids)}
                for b in self._bags
            ],
        }

    @classmethod
    def from_dict(cls, doc) -> "SwslDataset":
        if not isinstance(doc, dict):
            raise DataError("dataset: top level must be an object")
        unknown = set(doc) - {"instances", "bags"}
        if unknown:
            raise DataError(f"dataset: unknown top-level field(s) {sorted(unknown)}")
        raw_instances = doc.get("instances")
        if not isinstance(raw_instances, list):
            raise DataError("dataset: field 'instances' must be a list")
        raw_bags = doc.get("bags", [])
        if not isinstance(raw_bags, list):
            raise DataError("dataset: field 'bags' must be a list")

        instances = []
        for k, rec in enumerate(raw_instances):
            where = f"instances[{k}]"
            if not isinstance(rec, dict):
                raise DataError(f"{where}: record must be an object")
            for key in ("id", "features"):
                if key not in rec:
                    raise DataError(f"{where}: missing field '{key}'")
            extra = set(rec) - {"id", "features", "label"}
            if extra:
                raise DataError(f"{where}: unknown field(s) {sorted(extra)}")
            if not isinstance(rec["id"], str):
                raise DataError(f"{where}: field 'id' must be a string")
            feats = rec["features"]
            if not isinstance(feats, list) or not all(
                    isinstance(v, (int, float)) and not isinstance(v, bool) for v in feats):
                raise DataError(f"{where} ({rec['id']!r}): field 'features' must be a list of numbers")
            if not all(math.isfinite(v) for v in feats):
                raise DataError(f"{where} ({rec['id']!r}): field 'features' has a non-finite value")
            try:
                instances.append(Instance(rec["id"], feats, rec.get("label")))
            except DataError as exc:
                raise DataError(f"{where}: {exc}") from None

        bags = []
        for k, rec in enumerate(raw_bags):
            where = f"bags[{k}]"
            if not isinstance(rec, dict):
                raise DataError(f"{where}: record must be an object")
            for key in ("id", "label", "instances"):
                if key not in rec:
                    raise DataError(f"{where}: missing field '{key}'")
            extra = set(rec) - {"id", "label", "instances"}
            if extra:
                raise DataError(f"{where}: unknown field(s) {sorted(extra)}")
            if not isinstance(rec["instances"], list) or not all(
                    isinstance(v, str) for v in rec["instances"]):
                raise DataError(f"{where}: field 'instances' must be a list of strings")
            try:
                bags.append(Bag(rec["id"], rec["label"], tuple(rec["instances"])))
            except DataError as exc:
                raise DataError(f"{where}: {exc}") from None
        return cls(instances, bags)

    def __eq__(self, other):
        if not isinstance(other, SwslDataset):
            return NotImplemented
        return self._instances == other._instances and self._bags == other._bags

    __hash__ = None

    def __repr__(self):
        return (f"SwslDataset(instances={len(self._instances)}, "
                f"supervised={len(self.supervised)}, bags={len(self._bags)})")


@dataclass(frozen=True, eq=False)
class IndexedDataset:
    """Training instances in canonical order.

    ``labels`` holds -1/+1 for the first ``n`` rows and 0 for the positive-bag
    rows.  ``bag_ranges`` are 0-based half-open and tile ``n..N`` exactly.
    """

    features: np.ndarray
    labels: np.ndarray
    n: int
    bag_ranges: tuple[tuple[int, int], ...]
    provenance: tuple[tuple[str, str | None], ...]

    @property
    def N(self) -> int:
        return self.features.shape[0]

    @property
    def m(self) -> int:
        return self.N - self.n

    @property
    def T(self) -> int:
        return len(self.bag_ranges)

    def bag_ranges_1based(self) -> list[tuple[int, int]]:
        """Inclusive ``(p_t, q_t)`` pairs counted from 1."""
        return [(start + 1, stop) for start, stop in self.bag_ranges]


def assemble_training_set(dataset: SwslDataset) -> IndexedDataset:
    """Lay out a dataset for training.

    Supervised instances come first in input order, then the instances of
    negative bags (bag order, then member order) labeled -1, then the
    instances of positive bags grouped by bag.
    """
    rows: list[np.ndarray] = []
    labels: list[int] = []
    provenance: list[tuple[str, str | None]] = []

    for inst in dataset.supervised:
        rows.append(inst.features)
        labels.append(inst.label)
        provenance.append((inst.id, None))
    for bag in dataset.negative_bags:
        for iid in bag.instance_ids:
            rows.append(dataset.instances_by_id[iid].features)
            labels.append(-1)
            provenance.append((iid, bag.id))
    n = len(rows)

    ranges = []
    for bag in dataset.positive_bags:
        start = len(rows)
        for iid in bag.instance_ids:
            rows.append(dataset.instances_by_id[iid].features)
            labels.append(0)
            provenance.append((iid, bag.id))
        ranges.append((start, len(rows)))

    if rows:
        X = np.vstack(rows)
    else:
        X = np.zeros((0, dataset.dim))
    X.setflags(write=False)
    y = np.array(labels, dtype=np.int64)
    y.setflags(write=False)
    return IndexedDataset(X, y, n, tuple(ranges), tuple(provenance))


def save_dataset(dataset: SwslDataset, path) -> None:
    Path(path).write_text(json.dumps(dataset.to_dict(), indent=1) + "\n", encoding="utf-8")


def load_dataset(path) -> SwslDataset:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"dataset file not found: {path}") from None
    try:
        # NaN/Infinity literals parse to floats and are rejected per record below
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
    return SwslDataset.from_dict(doc)


@dataclass(frozen=True)
class FoldSpec:
    fold_assignments: Mapping[str, int]
    num_folds: int

    def members(self, fold: int) -> list[str]:
        return [k for k, f in self.fold_assignments.items() if f == fold]

    def sizes(self) -> list[int]:
        counts = [0] * self.num_folds
        for f in self.fold_assignments.values():
            counts[f] += 1
        return counts


def make_folds(dataset: SwslDataset, num_folds: int, seed: int) -> FoldSpec:
    """Split supervised instances and bags into balanced folds.

    Bags are assigned as a unit.  Fold sizes (counted in items, where an item
    is a supervised instance or a whole bag) differ by at most one.
    """
    if num_folds < 2:
        raise DataError(f"need at least 2 folds, got {num_folds}")
    items = [i.id for i in dataset.supervised] + [b.id for b in dataset.bags]
    if len(items) < num_folds:
        raise DataError(f"{len(items)} item(s) cannot fill {num_folds} folds")
    order = np.random.default_rng(seed).permutation(len(items))
    assignment = {items[k]: int(pos % num_folds) for pos, k in enumerate(order)}
    # keep a stable key order so serialized fold specs are reproducible
    return FoldSpec({k: assignment[k] for k in items}, num_folds)


def subset(dataset: SwslDataset, keep: Iterable[str]) -> SwslDataset:
    """Dataset restricted to the given supervised-instance and bag ids."""
    keep = set(keep)
    bags = [b for b in dataset.bags if b.id in keep]
    member_ids = {iid for b in bags for iid in b.instance_ids}
    instances = [i for i in dataset.instances
                 if i.id in member_ids or (i.id in keep and dataset.bag_of(i.id) is None)]
    return SwslDataset(instances, bags)
