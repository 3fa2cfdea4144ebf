"""Desk-scale vector-state control tasks and the noisy-environment wrappers.

The noisy wrapper concatenates pure-noise features onto the state until a
target noise fraction is reached; the permuted variant additionally reshuffles
the full feature vector on a fixed schedule, without telling the agent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ConfigError, UsageError

# Reference (d_og, action_dim) of the standard MuJoCo benchmarks, data only;
# no simulator ships with this package.
MUJOCO_DIMS = {
    "humanoid": (376, 17),
    "halfcheetah": (17, 6),
    "walker2d": (17, 6),
    "hopper": (11, 3),
}
NOISE_FRACTIONS = (0.8, 0.9, 0.95, 0.98, 0.99)


def ene_dim(d_og: int, noise_fraction: float) -> int:
    """ceil(d_og / (1 - n_f)), computed exactly for decimal noise fractions."""
    if not 0.0 <= noise_fraction < 1.0:
        raise ConfigError(f"noise fraction must be in [0, 1), got {noise_fraction}")
    frac = Fraction(str(noise_fraction))
    return math.ceil(Fraction(d_og) / (1 - frac))


@dataclass
class HistogramDistribution:
    bin_edges: np.ndarray  # sorted, len = bins + 1
    pmf: np.ndarray  # non-negative, sums to 1

    def __post_init__(self):
        self.bin_edges = np.asarray(self.bin_edges, dtype=float)
        self.pmf = np.asarray(self.pmf, dtype=float)
        if len(self.pmf) != len(self.bin_edges) - 1:
            raise ConfigError("pmf length must be len(bin_edges) - 1")
        if np.any(self.pmf < 0) or abs(self.pmf.sum() - 1.0) > 1e-9:
            raise ConfigError("pmf must be non-negative and sum to 1")

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        cdf = np.cumsum(self.pmf)
        bins = np.searchsorted(cdf, rng.random(count), side="right")
        bins = np.minimum(bins, len(self.pmf) - 1)
        lo = self.bin_edges[bins]
        hi = self.bin_edges[bins + 1]
        return lo + rng.random(count) * (hi - lo)


@dataclass
class ENEConfig:
    noise_fraction: float = 0.9
    noise_mean: float = 0.0
    noise_amplitude: float = 1.0
    distribution: str = "gaussian"  # "gaussian" | "imitate"
    imitate_histograms: list[HistogramDistribution] | None = None

    def __post_init__(self):
        if self.distribution not in ("gaussian", "imitate"):
            raise ConfigError(f"unknown noise distribution: {self.distribution}")
        if not 0.0 <= self.noise_fraction < 1.0:
            raise ConfigError("noise_fraction must be in [0, 1)")
        if self.noise_amplitude <= 0:
            raise ConfigError("noise_amplitude must be positive")
        if self.distribution == "imitate" and not self.imitate_histograms:
            raise ConfigError("imitate mode needs at least one histogram")


@dataclass
class PENEConfig:
    permutation_period: int
    schedule_seed: int = 0

    def __post_init__(self):
        if self.permutation_period <= 0:
            raise ConfigError("permutation_period must be positive")


def pene_permutation(config: PENEConfig, period: int, dim: int) -> np.ndarray:
    """Permutation for sub-environment `period`; period 0 is the identity."""
    if period == 0:
        return np.arange(dim)
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence([config.schedule_seed, period])))
    return rng.permutation(dim)


def pene_apply(config: PENEConfig, env_step: int, state: np.ndarray) -> np.ndarray:
    """Apply the permutation active at env_step: out[i] = state[perm[i]]."""
    period = env_step // config.permutation_period
    perm = pene_permutation(config, period, len(state))
    return state[perm]


class VectorEnv:
    """Minimal deterministic continuous-control interface.

    Subclasses define d_og, action_dim, horizon and the passive/controlled
    dynamics. Actions live in [-1, 1]^action_dim.
    """

    d_og: int
    action_dim: int
    horizon: int

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def step(self, action: np.ndarray) -> tuple[np.ndarray, float, bool]:
        raise NotImplementedError


class PointMassReach(VectorEnv):
    """2-D point mass pushed toward a random target.

    State: [position(2), velocity(2), target(2), target - position(2)].
    Reward: negative distance to target minus a small control cost.
    """

    d_og = 8
    action_dim = 2
    horizon = 200
    dt = 0.1
    friction = 0.1
    reward_scale = 1.0

    def __init__(self):
        self.pos = np.zeros(2)
        self.vel = np.zeros(2)
        self.target = np.zeros(2)
        self.t = 0

    def _state(self) -> np.ndarray:
        return np.concatenate([self.pos, self.vel, self.target, self.target - self.pos])

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.pos = rng.uniform(-1.0, 1.0, size=2)
        self.vel = np.zeros(2)
        self.target = rng.uniform(-1.0, 1.0, size=2)
        self.t = 0
        return self._state()

    def step(self, action: np.ndarray) -> tuple[np.ndarray, float, bool]:
        a = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
        self.vel = (1.0 - self.friction) * self.vel + self.dt * a
        self.pos = self.pos + self.dt * self.vel
        self.t += 1
        dist = float(np.linalg.norm(self.target - self.pos))
        reward = self.reward_scale * (-dist - 0.05 * float(a @ a))
        done = self.t >= self.horizon
        return self._state(), reward, done


class LinearTracker(VectorEnv):
    """Stable linear system tracking a slowly moving sinusoidal reference.

    State: [x(4), reference(4), reference - x(4)].
    """

    d_og = 12
    action_dim = 4
    horizon = 200
    gain = 0.25
    reward_scale = 1.0

    A = np.array([
        [0.95, 0.05, 0.0, 0.0],
        [-0.05, 0.95, 0.0, 0.0],
        [0.0, 0.0, 0.9, 0.1],
        [0.0, 0.0, -0.1, 0.9],
    ])

    def __init__(self):
        self.x = np.zeros(4)
        self.phase = np.zeros(4)
        self.freq = np.array([0.05, 0.03, 0.07, 0.02])
        self.t = 0

    def _reference(self, t: int) -> np.ndarray:
        return np.sin(self.freq * t + self.phase)

    def _state(self) -> np.ndarray:
        ref = self._reference(self.t)
        return np.concatenate([self.x, ref, ref - self.x])

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.x = rng.uniform(-0.5, 0.5, size=4)
        self.phase = rng.uniform(0.0, 2.0 * np.pi, size=4)
        self.t = 0
        return self._state()

    def step(self, action: np.ndarray) -> tuple[np.ndarray, float, bool]:
        a = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
        self.x = self.A @ self.x + self.gain * a
        self.t += 1
        err = float(np.linalg.norm(self._reference(self.t) - self.x))
        reward = self.reward_scale * (-err - 0.02 * float(a @ a))
        done = self.t >= self.horizon
        return self._state(), reward, done


ENV_REGISTRY = {
    "point_mass_reach": PointMassReach,
    "linear_tracker": LinearTracker,
}


def make_env(name: str) -> VectorEnv:
    if name not in ENV_REGISTRY:
        raise ConfigError(f"unknown environment '{name}'; known: {sorted(ENV_REGISTRY)}")
    return ENV_REGISTRY[name]()


def scripted_action(env: VectorEnv, state: np.ndarray) -> np.ndarray:
    """Simple proportional controllers used as calibration baselines."""
    if isinstance(env, PointMassReach):
        pos, vel = state[0:2], state[2:4]
        delta = state[6:8]
        return np.clip(4.0 * delta - 2.0 * vel, -1.0, 1.0)
    if isinstance(env, LinearTracker):
        x = state[0:4]
        err = state[8:12]
        return np.clip((err + (np.eye(4) - env.A) @ x) / env.gain, -1.0, 1.0)
    raise ConfigError(f"no scripted controller for {type(env).__name__}")


class NoisyEnv:
    """Wraps a VectorEnv: appends freshly sampled noise features each step and
    optionally permutes the full feature vector on the PENE schedule.

    Relevant features occupy indices 0..d_og-1 until a permutation kicks in.
    The wrapper's own step counter drives the permutation schedule; evaluation
    copies should be frozen at the training counter via `freeze_at`.
    """

    def __init__(self, env: VectorEnv, config: ENEConfig,
                 noise_rng: np.random.Generator,
                 pene: PENEConfig | None = None):
        self.env = env
        self.config = config
        self.noise_rng = noise_rng
        self.pene = pene
        self.d_og = env.d_og
        self.d_ene = ene_dim(env.d_og, config.noise_fraction)
        self.action_dim = env.action_dim
        self.horizon = env.horizon
        self.env_step_count = 0
        self._frozen_step: int | None = None

    @property
    def num_noise(self) -> int:
        return self.d_ene - self.d_og

    def freeze_at(self, env_step: int) -> None:
        """Pin the permutation schedule (for evaluation rollouts)."""
        self._frozen_step = env_step

    def current_permutation(self) -> np.ndarray:
        step = self._frozen_step if self._frozen_step is not None else self.env_step_count
        if self.pene is None:
            return np.arange(self.d_ene)
        return pene_permutation(self.pene, step // self.pene.permutation_period, self.d_ene)

    def relevant_indices(self) -> np.ndarray:
        """Positions of the original features under the active permutation."""
        perm = self.current_permutation()
        return np.flatnonzero(perm < self.d_og)

    def _sample_noise(self) -> np.ndarray:
        n = self.num_noise
        if self.config.distribution == "gaussian":
            return self.config.noise_mean + self.config.noise_amplitude * \
                self.noise_rng.standard_normal(n)
        return sample_imitated(self.config.imitate_histograms, n, self.noise_rng)

    def _augment(self, state: np.ndarray) -> np.ndarray:
        aug = np.concatenate([state, self._sample_noise()])
        if self.pene is not None:
            step = self._frozen_step if self._frozen_step is not None else self.env_step_count
            aug = pene_apply(self.pene, step, aug)
        return aug

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        return self._augment(self.env.reset(rng))

    def step(self, action: np.ndarray) -> tuple[np.ndarray, float, bool]:
        state, reward, done = self.env.step(action)
        if self._frozen_step is None:
            self.env_step_count += 1
        return self._augment(state), reward, done


def fit_histograms(states: np.ndarray, bins: int = 50) -> list[HistogramDistribution]:
    """Per-feature equal-width histograms over recorded states.

    Constant features get a single unit-width bin centered on their value.
    """
    states = np.asarray(states, dtype=float)
    if states.ndim != 2 or states.shape[0] < 1000:
        raise ConfigError("need a (n >= 1000, d) matrix of recorded states")
    result = []
    for j in range(states.shape[1]):
        col = states[:, j]
        lo, hi = float(col.min()), float(col.max())
        if hi <= lo:
            result.append(HistogramDistribution(
                bin_edges=np.array([lo - 0.5, lo + 0.5]), pmf=np.array([1.0])))
            continue
        counts, edges = np.histogram(col, bins=bins, range=(lo, hi))
        result.append(HistogramDistribution(bin_edges=edges, pmf=counts / counts.sum()))
    return result


def sample_imitated(histograms: list[HistogramDistribution], count: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Noise vector where feature j draws from histogram j mod len(histograms)."""
    if not histograms:
        raise UsageError("no histograms to sample from")
    out = np.empty(count)
    d = len(histograms)
    for i, hist in enumerate(histograms[:min(d, count)]):
        js = np.arange(i, count, d)
        out[js] = hist.sample(len(js), rng)
    return out


def save_histograms_csv(histograms: list[HistogramDistribution], path) -> None:
    """One row per bin: feature, bin_lo, bin_hi, pmf. Round-trips exactly via repr."""
    with open(path, "w") as f:
        f.write("feature,bin_lo,bin_hi,pmf\n")
        for j, h in enumerate(histograms):
            for b in range(len(h.pmf)):
                f.write(f"{j},{float(h.bin_edges[b])!r},"
                        f"{float(h.bin_edges[b + 1])!r},{float(h.pmf[b])!r}\n")


def load_histograms_csv(path) -> list[HistogramDistribution]:
    rows: dict[int, list[tuple[float, float, float]]] = {}
    with open(path) as f:
        f.readline()
        for line in f:
            j, lo, hi, p = line.strip().split(",")
            rows.setdefault(int(j), []).append((float(lo), float(hi), float(p)))
    result = []
    for j in sorted(rows):
        edges = [rows[j][0][0]] + [r[1] for r in rows[j]]
        pmf = [r[2] for r in rows[j]]
        result.append(HistogramDistribution(np.array(edges), np.array(pmf)))
    return result


def save_states_csv(states: np.ndarray, path) -> None:
    """Recorded-rollout file: one state vector per row, columns f0..f{d-1}."""
    states = np.asarray(states, dtype=float)
    with open(path, "w") as f:
        f.write(",".join(f"f{j}" for j in range(states.shape[1])) + "\n")
        for row in states:
            f.write(",".join(repr(float(v)) for v in row) + "\n")


def load_states_csv(path) -> np.ndarray:
    with open(path) as f:
        f.readline()
        return np.array([[float(v) for v in line.split(",")] for line in f if line.strip()])
