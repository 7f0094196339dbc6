import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coresel.config import ConfigError
from coresel.correlation import allocate_random
from coresel.thermal import (SimConfig, TaskSpec, block_coupling, cluster_labels,
                             generate_dataset, idle, load_sim_config, probe_temperatures,
                             run_workload, spans_clusters, stable_dt, steady_state, step)


def quiet(**kw):
    """Noise-free single-purpose config."""
    base = dict(m=1, leakage=0.0, idle_noise=0.0)
    base.update(kw)
    return SimConfig(**base)


def test_zero_power_at_ambient_is_equilibrium():
    cfg = SimConfig.clustered((2, 2))
    t = np.full(4, cfg.ambient)
    np.testing.assert_array_equal(step(t, np.zeros(4), cfg), t)


def test_single_core_steady_state():
    cfg = quiet()
    p = 12.0
    t = np.array([cfg.ambient])
    for _ in range(4000):
        t = step(t, [p], cfg)
    expected = cfg.ambient + p * 2.0  # ambient + P R
    assert abs(t[0] - expected) / expected < 1e-3
    assert steady_state(cfg, [p])[0] == pytest.approx(expected, rel=1e-12)


def test_steady_state_with_leakage_closed_form():
    cfg = SimConfig(m=1, leakage=0.05, idle_noise=0.0)
    p = 10.0
    expected = cfg.ambient + p * 2.0 / (1 - 0.05 * 2.0)
    assert steady_state(cfg, [p])[0] == pytest.approx(expected, rel=1e-12)


def test_coupling_heats_neighbour():
    cfg = SimConfig(m=2, coupling=[[0, 0.5], [0.5, 0]], leakage=0.0)
    t = np.full(2, cfg.ambient)
    path = [t]
    for _ in range(100):
        t = step(t, [10.0, 0.0], cfg)
        path.append(t)
    b = np.array(path)[:, 1]
    assert np.all(np.diff(b[1:]) > 0)
    assert b[-1] > b[0]


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.data())
def test_never_below_ambient(m, data):
    cfg = SimConfig(m=m, coupling=block_coupling([m], 0.4))
    temps = cfg.ambient + np.array(data.draw(st.lists(st.floats(0, 60), min_size=m, max_size=m)))
    for _ in range(20):
        p = np.array(data.draw(st.lists(st.floats(0, 20), min_size=m, max_size=m)))
        temps = step(temps, p, cfg)
        assert np.all(temps >= cfg.ambient - 1e-12)


def test_config_validation():
    with pytest.raises(ValueError, match="stability"):
        SimConfig(m=1, dt=2.0)
    with pytest.raises(ValueError, match="symmetric"):
        SimConfig(m=2, coupling=[[0, 1], [0, 0]])
    with pytest.raises(ValueError, match="runaway"):
        SimConfig(m=1, leakage=0.6)
    with pytest.raises(ValueError):
        SimConfig(m=1, cooldown_temp=110)
    cfg = SimConfig.clustered((2, 3))
    assert cfg.dt <= stable_dt(cfg)
    assert cluster_labels(cfg).tolist() == [0, 0, 1, 1, 1]


def test_load_sim_config(tmp_path):
    p = tmp_path / "sim.cfg"
    p.write_text("cluster_sizes = [2, 2]\ncoupling_within = 0.3\nmax_power = 25.0\n")
    cfg = load_sim_config(p)
    assert cfg.m == 4
    assert cfg.coupling[0, 1] == 0.3 and cfg.coupling[1, 2] == 0.0
    p.write_text("cores = 2\nwattage = 3\n")
    with pytest.raises(ConfigError, match=":2:"):
        load_sim_config(p)
    p.write_text("dt = 1.0\n")
    with pytest.raises(ConfigError):
        load_sim_config(p)


def test_empty_workload():
    tr = run_workload(SimConfig(m=2), [], [])
    assert tr.n_steps == 0
    assert tr.total_energy == 0.0


def test_workload_deterministic():
    cfg = SimConfig.clustered((2, 3))
    tasks = [TaskSpec(0.8, 5.0), TaskSpec(0.3, 7.0)]
    a = run_workload(cfg, [1, 3], tasks, seed=5)
    b = run_workload(cfg, [1, 3], tasks, seed=5)
    np.testing.assert_array_equal(a.temperatures, b.temperatures)
    np.testing.assert_array_equal(a.powers, b.powers)


def test_energy_monotone_in_intensity():
    cfg = SimConfig(m=2)
    hi = run_workload(cfg, [1], [TaskSpec(1.0, 10.0)], seed=0)
    lo = run_workload(cfg, [1], [TaskSpec(0.5, 10.0)], seed=0)
    assert hi.task_energy[0] > lo.task_energy[0]
    assert hi.makespan == lo.makespan == 10.0


def test_invalid_plan():
    with pytest.raises(ValueError, match="invalid core"):
        run_workload(SimConfig(m=2), [5], [TaskSpec(0.5, 1.0)])
    with pytest.raises(ValueError):
        run_workload(SimConfig(m=2), [1], [TaskSpec(0.5, 1.0)] * 2)


def test_energy_balance():
    cfg = SimConfig.clustered((2, 3))
    tr = run_workload(cfg, [1, 2, 4], [TaskSpec(0.9, 12.0), TaskSpec(0.4, 6.0),
                                       TaskSpec(1.0, 20.0, 0.3)], seed=11)
    supplied = tr.powers.sum() * cfg.dt
    assert tr.total_energy == pytest.approx(supplied, rel=1e-12)
    # heat stored + heat lost to ambient = energy supplied (coupling terms cancel)
    T = tr.temperatures
    stored = np.sum(cfg.heat_capacity * (T[-1] - T[0]))
    lost = np.sum(cfg.dt * (T[:-1] - cfg.ambient) / cfg.thermal_resistance)
    assert stored + lost == pytest.approx(supplied, rel=1e-6)


def test_throttle_cap():
    cfg = SimConfig(m=2, max_power=60.0, leakage=0.0)
    tr = run_workload(cfg, [1], [TaskSpec(1.0, 60.0, 0.0)], seed=0)
    assert tr.throttle_events > 0
    heat = cfg.dt * tr.powers.max() / cfg.heat_capacity.min()
    assert tr.peak_temperature <= cfg.throttle_temp + heat
    assert tr.task_busy[0] < 1.0
    assert tr.makespan > 60.0


def test_idle_cools_down():
    cfg = SimConfig(m=2)
    path = idle(cfg, [95.0, 95.0], 200, seed=0)
    assert path.shape == (201, 2)
    assert path[-1].max() < cfg.cooldown_temp


def test_independent_cores_uncorrelated():
    cfg = SimConfig(m=4)
    r = np.corrcoef(probe_temperatures(cfg, 1000, seed=2).T)
    assert np.abs(r[~np.eye(4, dtype=bool)]).max() < 0.3


def test_block_structure_correlation():
    cfg = SimConfig.clustered((2, 2))
    r = np.corrcoef(probe_temperatures(cfg, 500, seed=1).T)
    within = [r[0, 1], r[2, 3]]
    cross = [r[0, 2], r[0, 3], r[1, 2], r[1, 3]]
    assert min(within) > max(np.abs(cross))


def test_generate_dataset_shapes():
    cfg = SimConfig(m=2)
    ds = generate_dataset(cfg, 1, seed=0, probe_samples=10)
    assert ds.features.n_rows == 1
    assert ds.features.target_name == "energy"
    assert len(ds.buffer) > 10
    ds = generate_dataset(SimConfig.clustered((2, 3)), 5, policy="correlation", n_tasks=2,
                          seed=1, probe_samples=300)
    assert ds.features.n_rows == 5
    assert all(spans_clusters(p, SimConfig.clustered((2, 3))) for p in ds.plans)
    assert np.all(ds.features.column("alloc_core_0") == 0)


def test_spans_clusters():
    cfg = SimConfig.clustered((2, 3))
    assert spans_clusters(allocate_random(5, 1, seed=0), cfg)
    assert not spans_clusters((2, 3), cfg)
    assert spans_clusters((1, 2), cfg)
