import json

import pytest

from ssmhelm.config import apply_overrides, config_from_dict, load_config, stage_seed
from ssmhelm.errors import InvalidSpec


def write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return p


def test_defaults_need_input():
    with pytest.raises(InvalidSpec):
        load_config()
    cfg = load_config(need_input=False)
    assert cfg.seed == 0 and cfg.helm.widths == (64, 64)


def test_synth_config_and_relative_paths(tmp_path):
    p = write(tmp_path, {"seed": 3, "output_dir": "out", "input": {"synth": {"duration": 2.0}},
                         "helm": {"widths": [8, 8], "gamma": 1.0}})
    cfg = load_config(p)
    assert cfg.out == tmp_path / "out"
    assert cfg.helm.widths == (8, 8)
    assert cfg.synth_spec().duration == 2.0


def test_unknown_keys_rejected(tmp_path):
    with pytest.raises(InvalidSpec):
        config_from_dict({"sed": 1})
    with pytest.raises(InvalidSpec):
        config_from_dict({"helm": {"width": [8]}})
    with pytest.raises(InvalidSpec):
        load_config(write(tmp_path, {"input": {"synth": {"lanes": 2}}}))


@pytest.mark.parametrize("override", ["helm.gamma=-1", "labels.severe=2.0", "split.valid_fraction=1",
                                      "features.ttc_encoding=\"sqrt\"", "models=[\"SVM\"]",
                                      "settings=[]", "seed=-1", "baseline.psi=0"])
def test_invalid_values(override):
    with pytest.raises(InvalidSpec):
        load_config(overrides=["input.synth={}", override])


def test_csv_and_synth_exclusive(tmp_path):
    csv = tmp_path / "t.csv"
    csv.write_text("x\n")
    with pytest.raises(InvalidSpec):
        load_config(overrides=[f"input.csv=\"{csv}\"", "input.synth={}"])
    with pytest.raises(InvalidSpec):
        load_config(overrides=["input.csv=\"missing.csv\""])
    assert load_config(overrides=[f"input.csv=\"{csv}\""]).input.csv == str(csv)


def test_overrides():
    obj = apply_overrides({"helm": {"gamma": 1.5}}, ["helm.gamma=1.0", "report.svg=true",
                                                     "output_dir=run2"])
    assert obj == {"helm": {"gamma": 1.0}, "report": {"svg": True}, "output_dir": "run2"}
    with pytest.raises(InvalidSpec):
        apply_overrides({}, ["novalue"])
    with pytest.raises(InvalidSpec):
        apply_overrides({"seed": 1}, ["seed.x=2"])


def test_bad_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{")
    with pytest.raises(InvalidSpec):
        load_config(p)
    with pytest.raises(InvalidSpec):
        load_config(tmp_path / "nope.json")


def test_stage_seeds():
    assert stage_seed(0, "split") == stage_seed(0, "split")
    assert stage_seed(0, "split") != stage_seed(0, "synth")
    assert stage_seed(0, "split") != stage_seed(1, "split")
    cfg = load_config(overrides=["input.synth={}", "split.seed=42"])
    assert cfg.split_seed() == 42 and cfg.synth_seed() == stage_seed(0, "synth")


def test_to_dict_round_trip():
    cfg = load_config(overrides=["input.synth={\"duration\": 2.0}", "helm.widths=[4]"])
    again = config_from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again.to_dict() == cfg.to_dict()
