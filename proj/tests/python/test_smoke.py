import pytest

import mlab


def test_presets_listed():
    names = mlab.preset_names()
    assert "cr-elliptic" in names
    assert "burgers-transition" in names


def test_windows_raise_with_the_inequality():
    mlab.check_elliptic_window(2.5, 3.35, 1)
    with pytest.raises(mlab.MlabError, match=r"s > 1 \+ d/2"):
        mlab.check_elliptic_window(1.5, 1.5, 1)
    with pytest.raises(ValueError, match="sigma < 2s - 3/2 - d/2"):
        mlab.check_transition_window(3.5, 5.0, 1)


def test_config_defaults_and_unknown_keys():
    c = mlab.config("transition")
    assert c["preset"] == "burgers-transition"
    assert c["j"] == [6, 7, 8, 9]
    with pytest.raises(mlab.MlabError, match="unknown config key 'bogus'"):
        mlab.config("elliptic", {"bogus": 1})


def test_classify_verdicts():
    b = mlab.classify({"preset": "burgers-transition"})
    assert [b["assumption2"][k] for k in ("i", "ii", "iii", "iv")] == ["pass"] * 4
    e = mlab.classify({"preset": "paper-3x3-elliptic"})
    assert e["assumption1"]["verdict"] == "elliptic"


def test_run_is_deterministic():
    a = mlab.run("datum", {"j": "5..6"})
    b = mlab.run("datum", {"j": [5, 6]})
    assert a["hash"] == b["hash"]
    header, rows = a["series"]["blocks"]
    assert header == ["j", "norm", "ratio", "leak"]
    assert len(rows) > 0
    assert any("block ratio spread" in line for line in mlab.summary(a["report"]))


def test_small_helpers():
    assert mlab.theta_prime(1.0) == 0.5
    assert mlab.parse_j_range("6..9") == [6, 7, 8, 9]
    assert mlab.sha256_hex("abc").startswith("ba7816bf")
    assert mlab.amplitude(1, 2.0) == pytest.approx(0.125)
