import json
from pathlib import Path

import pytest

from hsidn.errors import UnknownPreset
from hsidn.presets import preset_names, resolve_preset

TUNING = json.loads((Path(__file__).parent / "fixtures" / "synthetic_tuning.json").read_text())["cases"]


@pytest.mark.parametrize(
    "name,expect",
    [
        ("cave-case1", (4, 1.0, 1.0, 0.0)),
        ("cave-case2", (4, 3.0, 2.1, 1.0)),
        ("cave-case4", (3, 2.5, 1.5, 2.5)),
        ("pac-case1", (3, 0.5, 0.95, 0.0)),
        ("pac-case2", (3, 0.001, 1.3, 0.7)),
        ("pac-case5", (3, 1.0, 1.5, 2.5)),
        ("wdc-case1", (5, 0.47, 1.05, 0.0)),
        ("wdc-case2", (4, 0.001, 1.3, 0.7)),
        ("wdc-case3", (3, 0.1, 1.5, 2.5)),
    ],
)
def test_published_profiles(name, expect):
    p = resolve_preset(name)
    assert (p.r, p.tau[0], p.beta, p.gamma) == expect and p.tau[0] == p.tau[1]


@pytest.mark.parametrize("case", [1, 2, 5])
def test_synthetic_profiles_match_tuning_record(case):
    p = resolve_preset(f"synthetic-case{case}")
    t = TUNING[str(case)]["full"]
    assert (p.tau[0], p.beta, p.gamma) == (t["tau"], t["beta"], t["gamma"])


def test_overrides_and_unknown():
    assert resolve_preset("CAVE-case1", max_iter=5, variant="baseline").max_iter == 5
    assert len(preset_names()) == 20
    for bad in ("cave-case0", "cave-case6", "urban-case1", "cave", "cave-caseX"):
        with pytest.raises(UnknownPreset):
            resolve_preset(bad)
