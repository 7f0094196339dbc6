import pytest

from coresel.config import ConfigError, load_flat, parse_flat


def test_parse_values():
    text = """
# pipeline
[simulate]
seed = 7
alpha = 0.05   # trailing comment
hidden = [64, 32]
policy = "random"
full_stepwise = true
"""
    cfg = parse_flat(text)
    assert cfg == {"seed": 7, "alpha": 0.05, "hidden": [64, 32], "policy": "random",
                   "full_stepwise": True}


def test_unknown_key_has_line_number():
    with pytest.raises(ConfigError) as err:
        parse_flat("seed = 1\n\nbogus = 2\n", "p.cfg", allowed={"seed"})
    assert err.value.line == 3
    assert "p.cfg:3" in str(err.value)
    assert "bogus" in str(err.value)


@pytest.mark.parametrize("text, line", [
    ("seed = 1\nnot an assignment\n", 2),
    ("seed = 1\nseed = 2\n", 2),
    ("a b = 3\n", 1),
    ("seed = [1,\n", 1),
])
def test_malformed(text, line):
    with pytest.raises(ConfigError) as err:
        parse_flat(text)
    assert err.value.line == line


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_flat(tmp_path / "none.cfg")
