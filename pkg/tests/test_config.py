import pytest

from rhythmic_uam.config import ConfigError, format_config, reference_config, parse_config

EVAL_TEXT = """# evaluation setting
l_c = 70
n_c = 6
delta_t = 1
l_g = 1
l_v = 0.5
d_f_min = 1.5
rho_ent = 0.3
"""


def test_parse_eval_setting():
    assert parse_config(EVAL_TEXT) == reference_config()


def test_format_round_trip():
    cfg = reference_config(drag_coeff=0.123456789012345678, x_acc_max=3.0)
    assert parse_config(format_config(cfg)) == cfg


def test_colon_separator_and_comments():
    text = EVAL_TEXT.replace("l_g = 1", "l_g: 1   # guard band")
    assert parse_config(text).l_g == 1.0


@pytest.mark.parametrize("bad, line, key", [
    ("l_g = one", 5, "l_g"),
    ("wingspan = 3", 5, "wingspan"),
    ("l_g", 5, None),
])
def test_line_diagnostics(bad, line, key):
    text = EVAL_TEXT.replace("l_g = 1", bad)
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.line == line and exc.value.key == key
    assert str(exc.value).startswith(f"line {line}:")


def test_missing_key_named():
    with pytest.raises(ConfigError, match="rho_ent"):
        parse_config(EVAL_TEXT.replace("rho_ent = 0.3\n", ""))


def test_duplicate_key():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config(EVAL_TEXT + "n_c = 6\n")


def test_validation_error_points_at_line():
    with pytest.raises(ConfigError) as exc:
        parse_config(EVAL_TEXT.replace("n_c = 6", "n_c = 5"))
    assert exc.value.line == 3


def test_non_integer_lane_count():
    with pytest.raises(ConfigError, match="integer"):
        parse_config(EVAL_TEXT.replace("n_c = 6", "n_c = 6.5"))


def test_inconsistent_edge_length():
    with pytest.raises(ConfigError, match="inconsistent"):
        parse_config(EVAL_TEXT + "l_e = 11\n")


def test_base_speed_and_defaults():
    cfg = reference_config()
    assert cfg.v_u == 10.0
    caps = cfg.deriv_caps()
    assert caps["straight"] == {2: 5.0, 3: 30.0}
    assert caps["curved"] == {2: 4.0, 3: 12.0}
