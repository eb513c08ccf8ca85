import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinbath import units
from spinbath.config import ConfigError, RunConfig, parse_config

BASE = """
[system]
model = sib
epsilon = 10

[grid]
steps = 50
"""


def test_defaults_are_reference_parameters():
    cfg = parse_config(BASE)
    assert cfg.theta == pytest.approx(0.2618406784, rel=1e-9)
    assert cfg.damping == pytest.approx(52.0)
    assert cfg.band == "medium" and cfg.dt == 0.5 and cfg.kmax == 3


def test_si_inputs_are_converted():
    cfg = parse_config("""
[system]
model = sb
delta_hz = 5e9
epsilon_hz = 5e10
[bath]
temperature_k = 0.01
damping_hz = 2.6e11
[grid]
dt_s = 1e-10
steps = 10
""")
    assert cfg.epsilon == pytest.approx(10.0)
    assert cfg.dt == pytest.approx(0.5)
    assert cfg.damping == pytest.approx(52.0)
    assert cfg.theta == pytest.approx(units.REFERENCE.theta)


@pytest.mark.parametrize("missing", ["model", "epsilon", "steps"])
def test_missing_required_field(missing):
    text = "\n".join(l for l in BASE.splitlines() if not l.startswith(missing))
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.field == missing


def test_relative_and_si_are_exclusive():
    with pytest.raises(ConfigError) as exc:
        parse_config(BASE + "\n[bath]\ntheta = 0.2\ntemperature_k = 0.01\n")
    assert exc.value.field == "theta"


def test_unknown_field_rejected():
    with pytest.raises(ConfigError):
        parse_config(BASE + "\n[bath]\ncolour = blue\n")


@pytest.mark.parametrize("bad", ["model=xyz", "band=ultra", "kmax=0", "dt=-1",
                                 "kondo=-0.1", "steps=abc"])
def test_invalid_values(bad):
    with pytest.raises(ConfigError):
        parse_config(BASE, [bad])


def test_overrides():
    cfg = parse_config(BASE, ["kmax=5", "bath.band=low", "system.epsilon=1"])
    assert (cfg.kmax, cfg.band, cfg.epsilon) == (5, "low", 1.0)


def test_custom_band_requires_edges():
    with pytest.raises(ConfigError):
        parse_config(BASE, ["band=custom", "omega_max=3"])
    cfg = parse_config(BASE, ["band=custom", "omega_min=0.5", "omega_max=3"])
    assert cfg.frequency_band().width == pytest.approx(2.5)


def test_sweep_parsing():
    cfg = parse_config(BASE + "\n[sweep]\ncoupling_product = 1, 1.125\niho_frequency = 6, 8\n")
    assert len(cfg.sweep_points()) == 4
    with pytest.raises(ConfigError):
        parse_config(BASE + "\n[sweep]\nkondo =\n")
    with pytest.raises(ConfigError):
        parse_config(BASE + "\n[sweep]\ndt = 0.1, 0.2\n")
    with pytest.raises(ConfigError):
        parse_config(BASE + "\n[sweep]\nkondo=1\ntheta=1\ndamping=1\n")


def test_scenario_config_needs_no_system():
    assert parse_config("[scenario]\nscenario = fig4\n").scenario == "fig4"


@settings(max_examples=100, deadline=None)
@given(model=st.sampled_from(["sb", "sib"]), eps=st.floats(-50, 50),
       kondo=st.floats(0, 1), theta=st.floats(1e-3, 10), band=st.sampled_from(["low", "medium", "high"]),
       dt=st.floats(1e-3, 2), steps=st.integers(1, 10**5), kmax=st.integers(1, 10),
       sym=st.booleans(), state=st.sampled_from(["coherent", "up", "down"]),
       cutoff=st.one_of(st.none(), st.floats(0.01, 100)))
def test_round_trip(model, eps, kondo, theta, band, dt, steps, kmax, sym, state, cutoff):
    cfg = RunConfig(model=model, epsilon=eps, kondo=kondo, theta=theta, band=band, dt=dt,
                    steps=steps, kmax=kmax, symmetric_cutoff=sym, initial_state=state,
                    cutoff=cutoff, modes=((1.0, 0.01),),
                    sweep=(("kondo", (0.01, 0.02)),))
    assert parse_config(cfg.to_ini()) == cfg
    assert parse_config(parse_config(cfg.to_ini()).to_ini()) == cfg
