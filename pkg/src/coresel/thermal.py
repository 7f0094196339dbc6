"""Lumped-RC multi-core thermal and energy simulator.

Each core ``i`` is a heat capacity ``C_i`` connected to ambient through a
thermal resistance ``R_i`` and to the other cores through conductances
``G_ij``::

    C_i dT_i/dt = P_i - (T_i - T_amb)/R_i - sum_j G_ij (T_i - T_j)

integrated with forward Euler. Core power is an idle floor plus a dynamic
part proportional to the running task's compute intensity, perturbed by
multiplicative Gaussian noise (clipped at zero), plus a leakage term that
grows linearly with temperature above ambient. The simulator stands in for
hardware data collection: coupling blocks make the correlation structure of
the temperature traces known by construction.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .config import ConfigError, load_flat
from .correlation import DEFAULT_RESERVED, AllocationPlan, allocate_random, correlation_plan
from .trace import FeatureMatrix, TemperatureBuffer

_PER_CORE = ("thermal_resistance", "heat_capacity", "idle_power", "max_power", "leakage")


def _per_core(value, m: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(m, float(arr))
    if arr.shape != (m,):
        raise ValueError(f"{name} must be a scalar or have {m} entries, got shape {arr.shape}")
    return arr


def block_coupling(cluster_sizes, within: float, cross: float = 0.0) -> np.ndarray:
    """Coupling matrix with conductance ``within`` inside clusters and ``cross`` between."""
    labels = np.repeat(np.arange(len(cluster_sizes)), cluster_sizes)
    g = np.where(labels[:, None] == labels[None, :], within, cross).astype(float)
    np.fill_diagonal(g, 0.0)
    return g


@dataclass(frozen=True)
class SimConfig:
    """Simulator parameters. Per-core quantities accept a scalar (broadcast) or m values.

    Units: temperatures in degrees C, conductances in W/degC, resistances in
    degC/W, capacities in J/degC, powers in W, ``dt`` in seconds.
    ``sample_every`` is the number of steps between temperature-buffer samples.
    """

    m: int
    coupling: np.ndarray | None = None
    ambient: float = 40.0
    thermal_resistance: np.ndarray | float = 2.0
    heat_capacity: np.ndarray | float = 1.0
    idle_power: np.ndarray | float = 1.0
    max_power: np.ndarray | float = 20.0
    leakage: np.ndarray | float = 0.02
    idle_noise: float = 0.1
    throttle_temp: float = 100.0
    cooldown_temp: float = 70.0
    dt: float = 0.25
    sample_every: int = 4
    seed: int = 0

    def __post_init__(self):
        m = int(self.m)
        if m < 1:
            raise ValueError("need at least one core")
        object.__setattr__(self, "m", m)
        g = np.zeros((m, m)) if self.coupling is None else np.array(self.coupling, dtype=float)
        if g.shape != (m, m):
            raise ValueError(f"coupling must be {m}x{m}")
        if not np.allclose(g, g.T, rtol=0, atol=1e-12) or np.any(np.diag(g) != 0) or np.any(g < 0):
            raise ValueError("coupling must be symmetric, non-negative, with zero diagonal")
        g = (g + g.T) / 2.0
        g.setflags(write=False)
        object.__setattr__(self, "coupling", g)
        for name in _PER_CORE:
            arr = _per_core(getattr(self, name), m, name)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        R, C = self.thermal_resistance, self.heat_capacity
        if np.any(R <= 0) or np.any(C <= 0):
            raise ValueError("thermal resistances and heat capacities must be positive")
        if np.any(self.idle_power < 0) or np.any(self.max_power < self.idle_power):
            raise ValueError("need 0 <= idle_power <= max_power")
        if np.any(self.leakage < 0) or np.any(self.leakage * R >= 1):
            raise ValueError("leakage must satisfy 0 <= leakage * R < 1 (thermal runaway)")
        if not self.cooldown_temp < self.throttle_temp:
            raise ValueError("cooldown_temp must be below throttle_temp")
        if self.dt <= 0 or self.sample_every < 1:
            raise ValueError("dt and sample_every must be positive")
        # dt * rate <= 1/2 keeps Euler stable and every update a convex combination
        rate = (1.0 / R + g.sum(axis=1)) / C
        if self.dt * rate.max() > 0.5:
            raise ValueError(
                f"dt={self.dt} too large for stability; need dt <= {0.5 / rate.max():.6g}")
        idle_peak = self.ambient + self.idle_power * R / (1 - self.leakage * R)
        if np.any(idle_peak >= self.cooldown_temp):
            raise ValueError("idle steady state must lie below cooldown_temp")

    @property
    def conductance_to_ambient(self) -> np.ndarray:
        return 1.0 / self.thermal_resistance

    def replace(self, **changes) -> "SimConfig":
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update(changes)
        return SimConfig(**kw)

    @classmethod
    def clustered(cls, cluster_sizes=(2, 3), within: float = 0.5, cross: float = 0.0,
                  **kw) -> "SimConfig":
        """Block-coupled config: cores ``0..sizes[0]-1`` form the first cluster, and so on."""
        return cls(m=int(sum(cluster_sizes)),
                   coupling=block_coupling(cluster_sizes, within, cross), **kw)


CONFIG_KEYS = frozenset(
    {f.name for f in fields(SimConfig) if f.name not in ("m", "coupling")}
    | {"cores", "coupling", "cluster_sizes", "coupling_within", "coupling_cross"})


def config_from_dict(d: dict, source: str = "<config>") -> SimConfig:
    d = dict(d)
    sizes = d.pop("cluster_sizes", None)
    within = d.pop("coupling_within", 0.5)
    cross = d.pop("coupling_cross", 0.0)
    m = d.pop("cores", None)
    try:
        if "coupling" not in d and sizes is not None:
            d["coupling"] = block_coupling(sizes, within, cross)
            if m is not None and m != sum(sizes):
                raise ValueError(f"cores={m} but cluster_sizes sum to {sum(sizes)}")
            m = sum(sizes)
        if m is None:
            if "coupling" not in d:
                raise ValueError("one of 'cores', 'cluster_sizes' or 'coupling' is required")
            m = len(d["coupling"])
        return SimConfig(m=m, **d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), source) from None


def load_sim_config(path) -> SimConfig:
    """Read a flat ``key = value`` simulator config (keys: :data:`CONFIG_KEYS`)."""
    return config_from_dict(load_flat(path, allowed=CONFIG_KEYS), str(path))


def step(temps, powers, config: SimConfig) -> np.ndarray:
    """Advance core temperatures by one forward-Euler step of length ``config.dt``."""
    temps = np.asarray(temps, dtype=float)
    powers = np.asarray(powers, dtype=float)
    g = config.coupling
    to_ambient = (temps - config.ambient) / config.thermal_resistance
    to_neighbours = g.sum(axis=1) * temps - g @ temps
    return temps + config.dt / config.heat_capacity * (powers - to_ambient - to_neighbours)


def steady_state(config: SimConfig, powers) -> np.ndarray:
    """Equilibrium temperatures for constant dynamic ``powers`` (leakage included)."""
    g = config.coupling
    a = np.diag(1.0 / config.thermal_resistance - config.leakage + g.sum(axis=1)) - g
    return config.ambient + np.linalg.solve(a, np.asarray(powers, dtype=float))


@dataclass(frozen=True)
class TaskSpec:
    """One task: fraction of dynamic power drawn, work in seconds, power-noise level."""

    compute_intensity: float
    duration: float
    noise_scale: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.compute_intensity <= 1.0:
            raise ValueError("compute_intensity must lie in [0, 1]")
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be non-negative")


@dataclass(frozen=True)
class SimTrace:
    """Result of :func:`run_workload`.

    ``temperatures`` has one row per step boundary (``n_steps + 1`` rows) and
    ``powers`` one row per step. ``task_energy[i]`` is the energy drawn by
    ``task_cores[i]`` while task ``i`` was resident.
    """

    temperatures: np.ndarray
    powers: np.ndarray
    task_energy: np.ndarray
    task_cores: tuple[int, ...]
    task_steps: np.ndarray
    task_busy: np.ndarray
    core_energy: np.ndarray
    throttle_events: int
    dt: float

    @property
    def n_steps(self) -> int:
        return self.powers.shape[0]

    @property
    def makespan(self) -> float:
        return self.n_steps * self.dt

    @property
    def total_energy(self) -> float:
        return float(self.core_energy.sum())

    @property
    def peak_temperature(self) -> float:
        return float(self.temperatures.max())

    @property
    def mean_temperature(self) -> float:
        return float(self.temperatures[1:].mean()) if self.n_steps else float(self.temperatures.mean())

    def task_average_power(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.task_steps > 0, self.task_energy / (self.task_steps * self.dt), 0.0)


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def run_workload(config: SimConfig, plan, tasks, initial=None, seed=None,
                 max_steps: int = 1_000_000) -> SimTrace:
    """Run ``tasks`` concurrently, task ``i`` pinned to ``plan.cores[i]``.

    A core whose temperature exceeds ``throttle_temp`` draws idle power, and
    its task makes no progress, until it cools below ``cooldown_temp``.
    The noise stream depends only on the seed and step index, so two plans
    simulated with the same seed see common random numbers.
    """
    cores = tuple(plan.cores) if isinstance(plan, AllocationPlan) else tuple(int(c) for c in plan)
    tasks = list(tasks)
    if len(cores) != len(tasks):
        raise ValueError(f"plan has {len(cores)} core(s) for {len(tasks)} task(s)")
    for c in cores:
        if not 0 <= c < config.m:
            raise ValueError(f"invalid core id {c} for a {config.m}-core config")
    if len(set(cores)) != len(cores):
        raise ValueError("plan assigns two tasks to one core")
    rng = _rng(config.seed if seed is None else seed)
    m = config.m
    temps = np.full(m, config.ambient) if initial is None else np.array(initial, dtype=float)

    core_idx = np.array(cores, dtype=int)
    intensity = np.array([t.compute_intensity for t in tasks])
    noise = np.array([t.noise_scale for t in tasks])
    remaining = np.array([t.duration for t in tasks])
    dynamic = config.max_power[core_idx] - config.idle_power[core_idx]

    task_energy = np.zeros(len(tasks))
    task_steps = np.zeros(len(tasks), dtype=int)
    busy_steps = np.zeros(len(tasks), dtype=int)
    core_energy = np.zeros(m)
    throttled = temps > config.throttle_temp
    throttle_events = 0
    temp_rows, power_rows = [temps.copy()], []
    # progress is counted in whole steps to avoid float drift in ``remaining``
    need = np.ceil(remaining / config.dt - 1e-9).astype(int)
    done = np.zeros(len(tasks), dtype=int)

    while np.any(done < need):
        if len(power_rows) >= max_steps:
            raise RuntimeError(f"workload did not finish within {max_steps} steps")
        z = rng.standard_normal(m)
        active = done < need
        power = config.idle_power * np.maximum(0.0, 1.0 + config.idle_noise * z)
        running = active & ~throttled[core_idx]
        if np.any(running):
            ci = core_idx[running]
            base = config.idle_power[ci] + intensity[running] * dynamic[running]
            power[ci] = base * np.maximum(0.0, 1.0 + noise[running] * z[ci])
        power = power + config.leakage * np.maximum(temps - config.ambient, 0.0)

        core_energy += power * config.dt
        task_energy[active] += power[core_idx[active]] * config.dt
        task_steps[active] += 1
        busy_steps[running] += 1
        done[running] += 1

        temps = step(temps, power, config)
        newly = (temps > config.throttle_temp) & ~throttled
        throttle_events += int(newly.sum())
        throttled = np.where(throttled, temps >= config.cooldown_temp, newly)
        temp_rows.append(temps.copy())
        power_rows.append(power)

    with np.errstate(invalid="ignore", divide="ignore"):
        busy = np.where(task_steps > 0, busy_steps / np.maximum(task_steps, 1), 0.0)
    return SimTrace(
        temperatures=np.array(temp_rows),
        powers=np.array(power_rows).reshape(-1, m),
        task_energy=task_energy,
        task_cores=cores,
        task_steps=task_steps,
        task_busy=busy,
        core_energy=core_energy,
        throttle_events=throttle_events,
        dt=config.dt,
    )


def idle(config: SimConfig, temps, n_steps: int, seed=None) -> np.ndarray:
    """Idle all cores for ``n_steps``; returns the (n_steps + 1, m) temperature path."""
    rng = _rng(config.seed if seed is None else seed)
    rows = [np.asarray(temps, dtype=float)]
    for _ in range(n_steps):
        t = rows[-1]
        z = rng.standard_normal(config.m)
        p = config.idle_power * np.maximum(0.0, 1.0 + config.idle_noise * z)
        p = p + config.leakage * np.maximum(t - config.ambient, 0.0)
        rows.append(step(t, p, config))
    return np.array(rows)


def probe_temperatures(config: SimConfig, n_samples: int, load: float = 0.5,
                       noise: float = 0.5, seed=None) -> np.ndarray:
    """Thermal signature run: every core draws independent noisy power.

    All cores run at ``load`` of their dynamic range with multiplicative noise
    ``noise``, starting from the matching steady state, so temperatures are
    stationary and any cross-core correlation comes from the coupling alone.
    Returns ``n_samples`` readings taken every ``config.sample_every`` steps.
    """
    rng = _rng(config.seed if seed is None else seed)
    base = config.idle_power + load * (config.max_power - config.idle_power)
    temps = steady_state(config, base)
    out = np.empty((n_samples, config.m))
    for k in range(n_samples):
        for _ in range(config.sample_every):
            z = rng.standard_normal(config.m)
            p = base * np.maximum(0.0, 1.0 + noise * z)
            p = p + config.leakage * np.maximum(temps - config.ambient, 0.0)
            temps = step(temps, p, config)
        out[k] = temps
    return out


@dataclass(frozen=True)
class WorkloadSampler:
    """Distribution of synthetic tasks (stand-in for benchmark workloads)."""

    intensity: tuple[float, float] = (0.2, 1.0)
    duration: tuple[float, float] = (5.0, 20.0)
    noise_scale: tuple[float, float] = (0.05, 0.3)

    def draw(self, n: int, rng) -> list[TaskSpec]:
        lo, hi = self.duration
        return [
            TaskSpec(float(rng.uniform(*self.intensity)),
                     float(rng.uniform(lo, hi)),
                     float(rng.uniform(*self.noise_scale)))
            for _ in range(n)
        ]


def default_task_count(m: int, reserved=DEFAULT_RESERVED) -> int:
    """Half of the non-reserved cores (at least one)."""
    return max(1, (m - len(frozenset(reserved) & set(range(m)))) // 2)


def _row_header(m: int) -> list[str]:
    cols = ["run", "n_tasks"]
    cols += [f"alloc_core_{i}" for i in range(m)]
    cols += ["intensity_mean", "intensity_max", "duration_mean", "duration_max", "work"]
    cols += [f"temp_before_core_{i}" for i in range(m)]
    cols += [f"temp_after_core_{i}" for i in range(m)]
    cols += [f"delta_temp_core_{i}" for i in range(m)]
    cols += ["avg_temp_before", "avg_temp_after", "peak_temp",
             "makespan", "task_power_mean", "busy_fraction", "steps", "energy"]
    return cols


@dataclass
class Dataset:
    """Output of :func:`generate_dataset`."""

    features: FeatureMatrix
    buffer: TemperatureBuffer
    plans: list = field(default_factory=list)


def generate_dataset(config: SimConfig, n_runs: int, policy: str = "random",
                     n_tasks: int | None = None, reserved=DEFAULT_RESERVED,
                     probe_samples: int = 200, workload: WorkloadSampler | None = None,
                     seed=None, buffer_capacity: int = 10_000) -> Dataset:
    """Batch driver: ``n_runs`` allocate-run-record cycles on one simulated machine.

    The buffer is seeded with ``probe_samples`` readings from
    :func:`probe_temperatures`, then receives a reading every
    ``sample_every`` steps of each run and each cooldown gap. Between runs the
    machine idles until every core is at or below ``cooldown_temp``.

    ``policy`` is ``"random"`` or ``"correlation"``. The feature matrix has
    one row per run with ``energy`` (J) as the designated target.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    if policy not in ("random", "correlation"):
        raise ValueError(f"unknown policy {policy!r}")
    rng = _rng(config.seed if seed is None else seed)
    workload = workload or WorkloadSampler()
    m = config.m
    n_tasks = default_task_count(m, reserved) if n_tasks is None else n_tasks
    buf = TemperatureBuffer.for_cores(m, buffer_capacity)
    if probe_samples:
        buf.extend(probe_temperatures(config, probe_samples, seed=rng))
    temps = buf.as_array(1)[0] if len(buf) else np.full(m, config.ambient)

    rows, plans = [], []
    for run in range(n_runs):
        if policy == "correlation" and len(buf) >= 2:
            plan = correlation_plan(buf, n_tasks, reserved)
        else:
            plan = allocate_random(m, n_tasks, reserved, rng)
        tasks = workload.draw(n_tasks, rng)
        trace = run_workload(config, plan, tasks, initial=temps, seed=rng)
        buf.extend(trace.temperatures[config.sample_every::config.sample_every])

        before, after = trace.temperatures[0], trace.temperatures[-1]
        alloc = np.zeros(m)
        alloc[list(plan.cores)] = 1.0
        inten = np.array([t.compute_intensity for t in tasks])
        dur = np.array([t.duration for t in tasks])
        row = [run, n_tasks, *alloc,
               inten.mean(), inten.max(), dur.mean(), dur.max(), float(inten @ dur),
               *before, *after, *(after - before),
               before.mean(), after.mean(), trace.peak_temperature,
               trace.makespan, float(trace.task_average_power().mean()),
               float(trace.task_busy.mean()), trace.n_steps, trace.total_energy]
        rows.append(row)
        plans.append(plan)

        temps = after
        while True:
            temps = idle(config, temps, config.sample_every, seed=rng)[-1]
            buf.push(temps)
            if temps.max() <= config.cooldown_temp:
                break

    fm = FeatureMatrix(tuple(_row_header(m)), np.array(rows), "energy")
    return Dataset(fm, buf, plans)


def cluster_labels(config: SimConfig) -> np.ndarray:
    """Connected components of the coupling graph (cluster id per core)."""
    m = config.m
    labels = -np.ones(m, dtype=int)
    nxt = 0
    for s in range(m):
        if labels[s] >= 0:
            continue
        stack = [s]
        labels[s] = nxt
        while stack:
            i = stack.pop()
            for j in np.flatnonzero(config.coupling[i] > 0):
                if labels[j] < 0:
                    labels[j] = nxt
                    stack.append(j)
        nxt += 1
    return labels


def spans_clusters(plan, config: SimConfig) -> bool:
    cores = plan.cores if isinstance(plan, AllocationPlan) else plan
    labels = cluster_labels(config)
    return len({int(labels[c]) for c in cores}) == len(cores)


def stable_dt(config: SimConfig) -> float:
    """Largest ``dt`` the config would accept."""
    rate = (1.0 / config.thermal_resistance + config.coupling.sum(axis=1)) / config.heat_capacity
    return 0.5 / float(rate.max())


__all__ = [
    "SimConfig", "TaskSpec", "SimTrace", "WorkloadSampler", "Dataset",
    "block_coupling", "step", "steady_state", "run_workload", "idle",
    "probe_temperatures", "generate_dataset", "load_sim_config", "config_from_dict",
    "cluster_labels", "spans_clusters", "stable_dt", "default_task_count"
]
