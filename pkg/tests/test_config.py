import pytest

from candfree.acquisition import Mode, StrategyKind
from candfree.config import ConfigError, RunConfig, RunMode, load_config, parse_config


def test_defaults_materialized():
    cfg = parse_config({})
    d = cfg.to_dict()
    assert d["train"] == {"epochs": 5, "batch_size": 64, "lr": 0.01, "momentum": 0.9, "weight_decay": 1e-3, "warm_start": True}
    assert d["budget"] == {"initial": 2000, "batch": 1000, "total": 10000}
    assert d["dataset"]["separation"] == 3.5
    assert d["mode"] == "candidate_free" and d["replicates"] == 3


def test_echo_round_trip():
    cfg = parse_config({"strategy": {"kind": "HLH", "subsequent": ["LOW", "LOW", "HIGH"]}, "mode": "CANDIDATE", "seed": 9,
                        "dataset": {"imbalance": {"majority": 0, "minority": 9, "ratio": 10}}})
    assert parse_config(cfg.to_dict()) == cfg
    assert cfg.mode is RunMode.CANDIDATE


@pytest.mark.parametrize(
    "raw, name",
    [
        ({"learning_rate": 0.1}, "learning_rate"),
        ({"train": {"epochz": 3}}, "epochz"),
        ({"dataset": {"kind": "synth", "colour": 1}}, "colour"),
        ({"budget": {"initial": 1, "batch": 1, "total": 1, "extra": 2}}, "extra"),
        ({"train": {"shuffle_seed": 3}}, "shuffle_seed"),
    ],
)
def test_unknown_keys_named(raw, name):
    with pytest.raises(ConfigError, match=name):
        parse_config(raw)


@pytest.mark.parametrize(
    "raw",
    [
        {"replicates": 0},
        {"seed": -1},
        {"network": "resnet"},
        {"strategy": "XYZ"},
        {"mode": "sideways"},
        {"budget": {"initial": 10, "batch": 5, "total": 9}},
        {"budget": {"initial": 10}},
        {"train": {"momentum": 1.5}},
        {"dataset": {"kind": "cifar10"}},
        {"dataset": {"kind": "idx", "train_images": "x"}},
        {"candidate_scoring": "oldest"},
    ],
)
def test_invalid_values(raw):
    with pytest.raises(ConfigError):
        parse_config(raw)


def test_yaml_file(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("strategy: hclc\nbudget: {initial: 10, batch: 5, total: 30}\nstrategies: [LC, RLC]\n")
    cfg = load_config(p)
    assert cfg.strategy.kind is StrategyKind.HCLC
    assert [s.kind for s in cfg.sweep()] == [StrategyKind.LC, StrategyKind.RLC]
    assert len(RunConfig().sweep()) == 8
    p.write_text("strategy: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_overrides():
    cfg = parse_config({}).with_overrides(strategy="HCLC", seed=7, replicates=None)
    assert cfg.strategy.initial is Mode.HIGH and cfg.seed == 7 and cfg.replicates == 3
