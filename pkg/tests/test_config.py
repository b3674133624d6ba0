import json

import pytest

from cyber0.config import ConfigError, dumps, parse_config, to_dict
from cyber0.core_math import DirectionKind
from cyber0.fedsim import Strategy


def test_defaults_follow_hyperparameter_table():
    c = parse_config()
    assert (c.mu, c.eta, c.batch_size, c.T, c.n, c.f, c.K, c.L) == (0.001, 0.01, 64, 400, 40, 10, 64, 1)
    assert c.aggregation_rule().beta == 0.25
    assert c.strategy is Strategy.UNBIASED and c.direction is DirectionKind.SPHERE


def test_round_trip(tmp_path):
    c = parse_config({"rule": {"base": "krum"}, "attack": {"kind": "alie", "omega_grid": [0, 1.5]}},
                     ["strategy=biased", "seeds=[3,4]", "partition.kind=dirichlet", "partition.alpha=0.1"])
    path = tmp_path / "c.json"
    path.write_text(dumps(c))
    again = parse_config(path)
    assert again == c and dumps(again) == dumps(c)


def test_errors_name_the_keys():
    with pytest.raises(ConfigError) as err:
        parse_config({"n": 40, "f": 20})
    assert any(e.startswith("f:") for e in err.value.errors)
    with pytest.raises(ConfigError) as err:
        parse_config({"bogus": 1, "rule": {"colour": "red"}, "K": "many"})
    text = str(err.value)
    assert "bogus" in text and "rule.colour" in text and "K" in text
    with pytest.raises(ConfigError):
        parse_config({}, ["eta=0"])
    with pytest.raises(ConfigError):
        parse_config({}, ["strategy=gossip"])
    with pytest.raises(ConfigError):
        parse_config({}, ["no-equals-sign"])


def test_override_values_are_json_or_strings():
    c = parse_config({}, ["rule.base=mean", "mu=0", "attack.kind=\"sf\""])
    assert c.rule.base == "mean" and c.mu == 0.0 and c.attack.kind == "sf"


def test_to_dict_is_json_serializable():
    json.dumps(to_dict(parse_config()))
