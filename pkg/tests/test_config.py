import pytest

from multisage.config import Config, ConfigError, load_config, parse_config_text


def test_defaults_are_valid():
    cfg = Config()
    assert cfg.alpha == 1.0 and cfg.lam == 0.01 and cfg.e == 3
    assert cfg.world_config().seed == 0
    assert cfg.retrieval_config().total_budget == 400


@pytest.mark.parametrize("key,value", [("alpha", "-1"), ("lambda", "-0.1"), ("e", "0"), ("budget", "1"),
                                       ("dedup_threshold", "1.5"), ("split_day", "30")])
def test_invalid_values_name_their_field(key, value):
    with pytest.raises(ConfigError) as info:
        Config().with_overrides({key: value})
    assert info.value.field == key


def test_lambda_spelling_and_world_keys():
    cfg = Config().with_overrides({"lambda": "0.05", "n_users": "7", "interests_per_user": "(1, 3)"})
    assert cfg.lam == 0.05
    world = cfg.world_config()
    assert world.n_users == 7 and world.interests_per_user == (1, 3)


def test_invalid_world_is_reported():
    with pytest.raises(ConfigError) as info:
        Config().with_overrides({"n_topics": "2"})
    assert info.value.field == "world"


def test_unknown_key():
    with pytest.raises(ConfigError) as info:
        Config().with_overrides({"colour": "red"})
    assert info.value.field == "colour"


def test_unparseable_value():
    with pytest.raises(ConfigError):
        Config().with_overrides({"alpha": "abc"})


def test_parse_text_and_file(tmp_path):
    text = "# run settings\nalpha = 0.5  # tighter clusters\n\nseed=3\n"
    assert parse_config_text(text) == {"alpha": "0.5", "seed": "3"}
    (tmp_path / "run.cfg").write_text(text)
    cfg = load_config(tmp_path / "run.cfg", {"seed": "4"})
    assert cfg.alpha == 0.5 and cfg.seed == 4


def test_line_without_equals():
    with pytest.raises(ConfigError):
        parse_config_text("alpha 0.5")
