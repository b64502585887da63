import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swsl.data import save_dataset
from swsl.errors import DataError
from swsl.synth import SynthConfig, generate, load_truth, save_truth


def bag_truths(ds, truth):
    return {b.id: [truth[i] for i in b.instance_ids] for b in ds.bags}


def test_witness_count():
    cfg = SynthConfig(num_pos_bags=20, witness_rate=0.3, bag_size=10)
    ds, truth = generate(cfg)
    for bag in ds.positive_bags:
        assert sum(truth[i] == 1 for i in bag.instance_ids) == 3


def test_full_witness_rate():
    ds, truth = generate(SynthConfig(witness_rate=1.0, bag_size=5))
    for bag in ds.positive_bags:
        assert all(truth[i] == 1 for i in bag.instance_ids)


def test_deterministic_bytes(tmp_path):
    for name in ("a", "b"):
        ds, truth = generate(SynthConfig(seed=9))
        save_dataset(ds, tmp_path / f"{name}.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_noise_empties_whole_bags():
    cfg = SynthConfig(seed=1, num_pos_bags=10, bag_label_noise=0.3)
    ds, truth = generate(cfg)
    counts = [sum(v == 1 for v in labels) for labels in bag_truths(ds, truth).values()]
    pos_counts = [c for b, c in zip(ds.bags, counts) if b.label == 1]
    assert sorted(pos_counts)[:3] == [0, 0, 0]
    assert all(c == cfg.witnesses_per_bag for c in sorted(pos_counts)[3:])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.05, 1.0), st.integers(1, 8), st.integers(2, 12))
def test_generated_invariants(seed, witness_rate, bag_size, dim):
    cfg = SynthConfig(seed=seed, dim=dim, num_supervised_pos=3, num_supervised_neg=3,
                      num_pos_bags=4, num_neg_bags=2, bag_size=bag_size,
                      witness_rate=witness_rate)
    ds, truth = generate(cfg)
    for inst in ds.instances:
        assert np.all(inst.features >= 0)
        assert abs(inst.features.sum() - 1.0) <= 1e-12
        if inst.label is not None:
            assert truth[inst.id] == inst.label
    for bag in ds.bags:
        labels = [truth[i] for i in bag.instance_ids]
        assert max(labels) == bag.label


def test_class_means_independent_of_seed():
    a, _ = generate(SynthConfig(seed=0, num_supervised_pos=400, num_supervised_neg=0,
                                num_pos_bags=0, num_neg_bags=0))
    b, _ = generate(SynthConfig(seed=1, num_supervised_pos=400, num_supervised_neg=0,
                                num_pos_bags=0, num_neg_bags=0))
    mean_a = np.mean([i.features for i in a.instances], axis=0)
    mean_b = np.mean([i.features for i in b.instances], axis=0)
    np.testing.assert_allclose(mean_a, mean_b, atol=0.01)


@pytest.mark.parametrize("bad", [dict(witness_rate=0.0), dict(bag_label_noise=1.0),
                                 dict(dim=1), dict(num_pos_bags=-1), dict(bag_size=0)])
def test_infeasible_configs(bad):
    with pytest.raises(DataError):
        SynthConfig(**bad)


def test_unknown_config_key():
    with pytest.raises(DataError, match="colour"):
        SynthConfig.from_dict({"colour": 1})


def test_truth_round_trip(tmp_path):
    _, truth = generate(SynthConfig(num_pos_bags=2, num_neg_bags=1, bag_size=3))
    save_truth(truth, tmp_path / "t.json")
    assert load_truth(tmp_path / "t.json") == truth
    assert set(json.loads((tmp_path / "t.json").read_text())) == {"labels"}


def test_truth_rejects_bad_label(tmp_path):
    (tmp_path / "t.json").write_text('{"labels": {"a": 0}}')
    with pytest.raises(DataError):
        load_truth(tmp_path / "t.json")
