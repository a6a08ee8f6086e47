from pathlib import Path

import pytest

from opeval.core.harness import ExperimentConfig
from opeval.models.enums import PolicyKind, QDistribution
from opeval.models.errors import ConfigError
from opeval.services.config_loader import build_config, load_config

CONFIG_DIR = Path(__file__).resolve().parent.parent / "config"


@pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.yaml")), ids=lambda p: p.name)
def test_shipped_configs_load(path):
    assert isinstance(load_config(path), ExperimentConfig)


def test_no_path_means_defaults():
    assert load_config(None) == ExperimentConfig()
    assert build_config(None) == ExperimentConfig()


def test_shipped_chain_config():
    cfg = load_config(CONFIG_DIR / "dense_chain.yaml")
    assert cfg.env.kind == "chain"
    assert cfg.env.chain_rewards == (1.0, 1.0)
    assert cfg.env.horizon == 3
    assert cfg.metrics.extended


def test_nested_sections_convert():
    cfg = build_config(
        {
            "env": {"depth": 4, "layout": "custom", "success_leaves": [8, 9], "slip": 0.2},
            "experiment": {
                "q_distribution": "per_index",
                "behavior": {"kind": "epsilon_greedy", "epsilon": 0.3},
                "threads": 2,
            },
            "metrics": {"prior": 0.4, "opc_weighting": "episode"},
            "sweeps": {
                "priors": [0, 0.5, 1],
                "regimes": [{"name": "big", "distribution": "uniform", "scale": 10}],
            },
        }
    )
    assert cfg.env.success_leaves == (8, 9)
    assert cfg.q_distribution == QDistribution.PER_INDEX
    assert cfg.behavior.kind == PolicyKind.EPSILON_GREEDY and cfg.behavior.epsilon == 0.3
    assert cfg.threads == 2
    assert cfg.metrics.prior == 0.4 and cfg.metrics.opc_weighting == "episode"
    assert cfg.sweeps.priors == (0.0, 0.5, 1.0)
    assert cfg.sweeps.regimes[0].scale == 10.0


def test_every_violation_is_reported():
    with pytest.raises(ConfigError) as info:
        build_config(
            {
                "env": {"depth": "six", "colour": "red"},
                "experiment": {"n_qfunctions": 1.5, "behavior": {"kind": "greedy"}},
                "metrics": {"extended": "yes", "opc_weighting": "per-step"},
                "bogus": {},
            }
        )
    messages = info.value.messages
    assert len(messages) == 7
    for fragment in (
        "env.depth",
        "env.colour: unknown key",
        "experiment.n_qfunctions",
        "experiment.behavior.kind",
        "metrics.extended",
        "metrics.opc_weighting",
        "bogus: unknown key",
    ):
        assert any(m.startswith(fragment) for m in messages), fragment


def test_range_violations_are_reported_together():
    with pytest.raises(ConfigError) as info:
        build_config(
            {
                "env": {"depth": 1, "slip": 1.5},
                "experiment": {"n_qfunctions": 1},
                "metrics": {"prior": 2.0, "gamma": -0.1},
                "sweeps": {"priors": [0.5, 1.2], "behavior_epsilons": [0.5]},
            }
        )
    text = "\n".join(info.value.messages)
    for fragment in ("env.depth", "env.slip", "n_qfunctions", "metrics.prior", "metrics.gamma", "1.2", "behavior_epsilons"):
        assert fragment in text


def test_regime_needs_name_and_distribution():
    with pytest.raises(ConfigError) as info:
        build_config({"sweeps": {"regimes": [{"scale": 2.0}]}})
    assert "sweeps.regimes[0]: missing distribution, name" in info.value.messages


def test_document_must_be_a_mapping():
    with pytest.raises(ConfigError):
        build_config([1, 2])


def test_yaml_errors(tmp_path):
    broken = tmp_path / "broken.yaml"
    broken.write_text("env: [unclosed\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(broken)
    with pytest.raises(OSError):
        load_config(tmp_path / "missing.yaml")
