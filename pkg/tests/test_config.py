from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wdmrc import config
from wdmrc.errors import ConfigError
from wdmrc.params import ModelFlags, PhysicalParams
from wdmrc.reservoir import ReadoutConfig


def test_defaults_reproduce_device_table():
    cfg = config.loads("")
    assert cfg.physical == PhysicalParams()
    assert cfg.readout == ReadoutConfig()
    assert cfg.flags == ModelFlags()
    assert [c.task for c in cfg.channels] == ["narma10", "classification", "equalization"]
    assert [c.power_dbm for c in cfg.channels] == [0.0, -10.0, 15.0]
    assert [c.detuning_ghz for c in cfg.channels] == [-60.0, -45.0, -20.0]
    assert cfg.data.train_symbols == 10_000 and cfg.data.test_subsets == 10
    assert cfg.data.seeds == tuple(range(10))
    assert cfg.readout.warmup_symbols == 1000


def test_roundtrip_default():
    cfg = config.RunConfig()
    assert config.loads(config.dumps(cfg)) == cfg


@settings(max_examples=40, deadline=None)
@given(bias=st.floats(0.0, 5.0), power=st.floats(-40.0, 25.0), det=st.floats(-200.0, 200.0),
       seeds=st.lists(st.integers(0, 2 ** 31), min_size=1, max_size=5),
       mass=st.floats(1e-13, 1e-9), literal=st.booleans())
def test_roundtrip_property(bias, power, det, seeds, mass, literal):
    cfg = config.RunConfig()
    chans = (replace(cfg.channels[0], power_dbm=power, detuning_ghz=det),) + cfg.channels[1:]
    cfg = replace(cfg, readout=replace(cfg.readout, bias=bias), channels=chans,
                  physical=replace(cfg.physical, mass_kg=mass),
                  flags=ModelFlags(literal_heat_source=literal),
                  data=replace(cfg.data, seeds=tuple(seeds)))
    once = config.loads(config.dumps(cfg))
    assert once == cfg
    assert config.dumps(once) == config.dumps(cfg)


def test_partial_file_overrides():
    cfg = config.loads("""
[physical]
feedback_coupling = 0.9
pump_frequency_rad_s = 1200000000000000
[readout]
bias = 1
[[channels]]
task = "narma10"
power_dbm = -3
detuning_ghz = -10
mask_seed = 8
""")
    assert cfg.physical.feedback_coupling == 0.9
    assert cfg.physical.pump_frequency_rad_s == 1.2e15
    assert cfg.readout.bias == 1.0
    assert len(cfg.channels) == 1 and cfg.channels[0].mask_seed == 8


@pytest.mark.parametrize("text,fragment", [
    ("[physical]\nmass = 1.0\n", "physical"),
    ("[readout]\nbais = 0.1\n", "bais"),
    ("[extra]\n", "extra"),
    ("[flags]\nliteral_heat_source = 1\n", "boolean"),
    ("[readout]\nvirtual_nodes = 50.5\n", "integer"),
    ("[[channels]]\ntask = 'narma10'\npower_dbm = 0\n", "missing"),
    ("[[channels]]\ntask = 'xor'\npower_dbm = 0\ndetuning_ghz = 0\nmask_seed = 1\n", "xor"),
    ("[physical]\nfeedback_coupling = 2.0\n", "feedback_coupling"),
    ("[data]\nseeds = []\n", "seeds"),
    ("[output]\ndir = 'x'\n", "dir"),
    ("not toml [", "TOML"),
])
def test_invalid_configs_name_the_field(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        config.loads(text)


def test_missing_file_names_path(tmp_path):
    with pytest.raises(ConfigError, match="nope.toml"):
        config.load(tmp_path / "nope.toml")


def test_subset_keeps_ring_modes():
    cfg = config.RunConfig()
    full = cfg.channel_configs()
    sub = cfg.subset(["equalization"])
    assert sub.task_ids == ("equalization",)
    assert sub.channel_configs()[0].resonance_freq_rad_s == full[2].resonance_freq_rad_s
    with pytest.raises(ConfigError):
        config.RunConfig(channels=cfg.channels[:1]).subset(["equalization"])


def test_digest_changes_with_settings():
    cfg = config.RunConfig()
    assert cfg.digest() == config.RunConfig().digest()
    assert cfg.digest() != replace(cfg, output_dir="x").digest()
