"""Experiment orchestration: the training loop, evaluation protocol, seed
aggregation, the suite registry, and the two-weight regression oracle for the
noise-weight convergence claim.

Every run is fully determined by (config, seed): all randomness flows from
numpy SeedSequences derived from the seed, evaluation uses throwaway
deterministic streams, and metrics are written with repr-exact floats.
"""

from __future__ import annotations

import hashlib
import json
import os

import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import agents, analytics, envs
from .agents import AgentHyperparams, ReplayBuffer, Transition, make_agent
from .analytics import ConnectivityTimeline
from .envs import ENEConfig, NoisyEnv, PENEConfig, make_env
from .errors import ConfigError, TrainingDiverged, UsageError
from .topology import SparseLayers, SparseMode, SparsityConfig

MODES = ("dense", "anf", "static_anf", "sparser_anf")

# Stream tags for per-purpose RNGs derived from the run seed.
_STREAM_ENV = 1
_STREAM_NOISE = 2
_STREAM_AGENT = 3
_STREAM_BUFFER = 4
_STREAM_EXPLORE = 5
_STREAM_EVAL = 6


@dataclass
class ExperimentConfig:
    env_name: str = "point_mass_reach"
    algorithm: str = "td3"  # td3 | sac
    mode: str = "anf"  # dense | anf | static_anf | sparser_anf
    ene: ENEConfig = field(default_factory=ENEConfig)
    pene_period: int | None = None  # T_p in env steps; None disables permutations
    total_steps: int = 60_000
    initial_collect: int = 2_000
    buffer_capacity: int = 100_000
    eval_interval: int = 1_000
    eval_episodes: int = 10
    input_layer_sparsity: float = 0.8
    drop_fraction: float = 0.05
    topology_period: int = 1_000
    global_sparsity_target: float | None = None  # sparser_anf only
    hidden_dims: tuple[int, ...] = (256, 256)
    protect_fresh_growth: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode '{self.mode}'; expected one of {MODES}")
        if self.algorithm not in ("td3", "sac"):
            raise ConfigError(f"unknown algorithm '{self.algorithm}'")
        if self.mode == "sparser_anf" and self.global_sparsity_target is None:
            raise ConfigError("sparser_anf needs global_sparsity_target")
        if self.total_steps <= 0 or self.eval_interval <= 0:
            raise ConfigError("total_steps and eval_interval must be positive")
        if self.pene_period is not None and self.pene_period <= 0:
            raise ConfigError("pene_period must be positive")
        self.hidden_dims = tuple(self.hidden_dims)

    def effective_topology_period(self) -> int:
        """Keep at least 50 topology updates per run by shrinking the period
        for short runs; the stated default is used otherwise."""
        if self.total_steps < 50 * self.topology_period:
            return max(1, self.total_steps // 50)
        return self.topology_period

    def sparsity_config(self) -> SparsityConfig | None:
        if self.mode == "dense":
            return None
        mode = SparseMode.STATIC if self.mode == "static_anf" else SparseMode.DYNAMIC
        layers = (SparseLayers.INPUT_AND_HIDDEN if self.mode == "sparser_anf"
                  else SparseLayers.INPUT_ONLY)
        return SparsityConfig(
            input_layer_sparsity=self.input_layer_sparsity,
            drop_fraction=self.drop_fraction,
            topology_period=self.effective_topology_period(),
            mode=mode, sparse_layers=layers,
            global_sparsity=self.global_sparsity_target,
            protect_fresh_growth=self.protect_fresh_growth)

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.ene.imitate_histograms is not None:
            d["ene"]["imitate_histograms"] = [
                {"bin_edges": h.bin_edges.tolist(), "pmf": h.pmf.tolist()}
                for h in self.ene.imitate_histograms]
        return d


def config_hash(config: ExperimentConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class MetricsLog:
    seed: int
    total_steps: int
    eval_steps: list[int] = field(default_factory=list)
    eval_returns: list[float] = field(default_factory=list)
    critic_losses: list[float] = field(default_factory=list)
    actor_losses: list[float] = field(default_factory=list)
    global_sparsities: list[float] = field(default_factory=list)
    timelines: dict[str, ConnectivityTimeline] = field(default_factory=dict)
    actor_param_count: int = 0
    wall_clock: float = 0.0


def write_metrics_csv(log: MetricsLog, path) -> None:
    with open(path, "w") as f:
        f.write("step,mean_return,critic_loss,actor_loss,global_sparsity\n")
        for i, s in enumerate(log.eval_steps):
            f.write(f"{s},{float(log.eval_returns[i])!r},{float(log.critic_losses[i])!r},"
                    f"{float(log.actor_losses[i])!r},{float(log.global_sparsities[i])!r}\n")


def append_manifest(path, record: dict) -> None:
    with open(path, "a") as f:
        f.write(json.dumps(record, sort_keys=True, default=str) + "\n")


def _rng(seed: int, stream: int, *extra: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream, *extra])))


def _build_env(config: ExperimentConfig, seed: int,
               noise_rng: np.random.Generator) -> NoisyEnv:
    pene = None
    if config.pene_period is not None:
        # The run seed also picks the permutation schedule, so seed aggregation
        # averages over environments as well as initializations.
        pene = PENEConfig(permutation_period=config.pene_period, schedule_seed=seed)
    return NoisyEnv(make_env(config.env_name), config.ene, noise_rng, pene=pene)


def evaluate(agent, config: ExperimentConfig, seed: int, eval_index: int,
             train_step: int) -> float:
    """Mean return over eval_episodes deterministic-action episodes.

    Uses a throwaway env frozen at the training step's permutation; never
    touches the replay buffer or the training env's counters.
    """
    noise_rng = _rng(seed, _STREAM_EVAL, eval_index, 0)
    reset_rng = _rng(seed, _STREAM_EVAL, eval_index, 1)
    env = _build_env(config, seed, noise_rng)
    env.freeze_at(train_step)
    total = 0.0
    for _ in range(config.eval_episodes):
        state = env.reset(reset_rng)
        done = False
        while not done:
            action = agent.select_action(state, explore=False)
            state, reward, done = env.step(action)
            total += reward
    return total / config.eval_episodes


@dataclass
class _RunState:
    """Everything needed to resume a run bit-exactly."""
    config: ExperimentConfig
    seed: int
    t: int
    env: NoisyEnv
    state: np.ndarray
    episode_len: int
    agent_state: dict
    buffer: ReplayBuffer
    env_rng: np.random.Generator
    explore_rng: np.random.Generator
    log: MetricsLog
    loss_accum: list  # [critic_sum, actor_sum, critic_n, actor_n]


def save_run_checkpoint(path, run: _RunState) -> None:
    agents.save_checkpoint(path, {
        "config": run.config.to_dict(), "seed": run.seed, "t": run.t,
        "env": run.env, "state": run.state, "episode_len": run.episode_len,
        "agent_state": run.agent_state, "buffer": run.buffer,
        "env_rng": run.env_rng, "explore_rng": run.explore_rng,
        "log": run.log, "loss_accum": run.loss_accum,
    })


def run_training(config: ExperimentConfig, seed: int, out_dir=None,
                 checkpoint_every: int | None = None,
                 resume_from=None, stop_at: int | None = None) -> MetricsLog:
    """Full training run: collect, train every step, evolve topology every
    period, evaluate on schedule. Raises TrainingDiverged on NaN losses.

    `checkpoint_every`/`resume_from` give exact save/resume; `stop_at` ends
    the loop early (used to produce a checkpoint mid-run).
    """
    t_start = time.time()
    manifest_path = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        manifest_path = os.path.join(out_dir, "manifest.jsonl")
        append_manifest(manifest_path, {
            "event": "start", "config_hash": config_hash(config), "seed": seed,
            "config": config.to_dict()})

    if resume_from is not None:
        payload = agents.load_checkpoint(resume_from)
        if payload["config"] != config.to_dict():
            raise UsageError("checkpoint was written for a different config")
        seed = payload["seed"]
        env = payload["env"]
        state = payload["state"]
        episode_len = payload["episode_len"]
        buffer = payload["buffer"]
        env_rng = payload["env_rng"]
        explore_rng = payload["explore_rng"]
        log = payload["log"]
        loss_accum = payload["loss_accum"]
        t0 = payload["t"]
        agent = make_agent(config.algorithm, env.d_ene, env.action_dim,
                           _hyperparams(config), config.sparsity_config(),
                           _rng(seed, _STREAM_AGENT))
        agent.load_state_dict(payload["agent_state"])
    else:
        env = _build_env(config, seed, _rng(seed, _STREAM_NOISE))
        env_rng = _rng(seed, _STREAM_ENV)
        explore_rng = _rng(seed, _STREAM_EXPLORE)
        buffer = ReplayBuffer(config.buffer_capacity, env.d_ene, env.action_dim,
                              _rng(seed, _STREAM_BUFFER))
        agent = make_agent(config.algorithm, env.d_ene, env.action_dim,
                           _hyperparams(config), config.sparsity_config(),
                           _rng(seed, _STREAM_AGENT))
        log = MetricsLog(seed=seed, total_steps=config.total_steps)
        state = env.reset(env_rng)
        episode_len = 0
        loss_accum = [0.0, 0.0, 0, 0]
        t0 = 0
        analytics.record_connectivity(agent, 0, env.relevant_indices(), env.d_ene,
                                      log.timelines)

    period = config.effective_topology_period()
    horizon = env.horizon
    end = min(config.total_steps, stop_at) if stop_at else config.total_steps

    for t in range(t0 + 1, end + 1):
        if t <= config.initial_collect:
            action = explore_rng.uniform(-1.0, 1.0, size=env.action_dim)
        else:
            action = agent.select_action(state, explore=True)
        next_state, reward, done = env.step(action)
        episode_len += 1
        truncated = done and episode_len >= horizon
        buffer.add(Transition(state, action, reward, next_state,
                              done=done and not truncated))
        state = next_state
        if done:
            state = env.reset(env_rng)
            episode_len = 0

        if t > config.initial_collect:
            diag = agent.train_step(buffer)
            if diag.has_nan():
                raise TrainingDiverged(f"non-finite loss at step {t} (seed {seed})")
            if not diag.skipped:
                loss_accum[0] += diag.critic_loss
                loss_accum[2] += 1
                if diag.actor_loss is not None:
                    loss_accum[1] += diag.actor_loss
                    loss_accum[3] += 1
            if t % period == 0:
                agent.maybe_evolve_topology(t)
                analytics.record_connectivity(agent, t, env.relevant_indices(),
                                              env.d_ene, log.timelines)

        if t % config.eval_interval == 0:
            eval_idx = t // config.eval_interval
            mean_return = evaluate(agent, config, seed, eval_idx, train_step=t)
            log.eval_steps.append(t)
            log.eval_returns.append(mean_return)
            log.critic_losses.append(loss_accum[0] / max(loss_accum[2], 1))
            log.actor_losses.append(loss_accum[1] / max(loss_accum[3], 1))
            log.global_sparsities.append(agent.global_sparsity())
            loss_accum[:] = [0.0, 0.0, 0, 0]

        if checkpoint_every and out_dir is not None and t % checkpoint_every == 0:
            run = _RunState(config, seed, t, env, state, episode_len,
                            agent.state_dict(), buffer, env_rng, explore_rng,
                            log, loss_accum)
            save_run_checkpoint(os.path.join(out_dir, f"checkpoint_{t}.pkl"), run)

    log.actor_param_count = agent.actor_param_count()
    log.wall_clock = time.time() - t_start

    if stop_at and stop_at < config.total_steps and out_dir is not None:
        run = _RunState(config, seed, end, env, state, episode_len,
                        agent.state_dict(), buffer, env_rng, explore_rng,
                        log, loss_accum)
        save_run_checkpoint(os.path.join(out_dir, f"checkpoint_{end}.pkl"), run)

    if out_dir is not None:
        write_metrics_csv(log, os.path.join(out_dir, f"metrics_seed{seed}.csv"))
        if log.timelines:
            analytics.export_timelines_csv(
                log.timelines, os.path.join(out_dir, f"connectivity_seed{seed}.csv"))
        append_manifest(manifest_path, {
            "event": "finish", "config_hash": config_hash(config), "seed": seed,
            "final_score": final_score(log) if len(log.eval_steps) >= 10 else None,
            "actor_param_count": log.actor_param_count,
            "d_ene": env.d_ene, "wall_clock": log.wall_clock})
    return log


def _hyperparams(config: ExperimentConfig) -> AgentHyperparams:
    base = (AgentHyperparams.td3_defaults() if config.algorithm == "td3"
            else AgentHyperparams.sac_defaults())
    return replace(base, hidden_dims=config.hidden_dims)


def final_score(log: MetricsLog) -> float:
    """Mean eval return over the last 10% of training steps."""
    if len(log.eval_steps) < 10:
        raise UsageError("need at least 10 eval points for a final score")
    cutoff = 0.9 * log.total_steps
    window = [r for s, r in zip(log.eval_steps, log.eval_returns) if s > cutoff]
    if not window:
        window = [log.eval_returns[-1]]
    return float(np.mean(window))


def aggregate_seeds(logs: list[MetricsLog]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pointwise mean curve and 95% CI half-width (1.96 * SEM) across seeds."""
    if len(logs) < 2:
        raise UsageError("need at least 2 logs to aggregate")
    grid = logs[0].eval_steps
    for log in logs[1:]:
        if log.eval_steps != grid:
            raise UsageError("eval grids are misaligned across seeds")
    returns = np.array([log.eval_returns for log in logs])
    mean = returns.mean(axis=0)
    half = 1.96 * returns.std(axis=0, ddof=1) / np.sqrt(len(logs))
    return np.array(grid), mean, half


def pooled_standard_error(a: list[float], b: list[float]) -> float:
    """SE of the difference of two group means (Welch-style)."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.sqrt(a.var(ddof=1) / len(a) + b.var(ddof=1) / len(b)))


# -- conjecture oracle --------------------------------------------------------

def conjecture_oracle(a: float, noise_mean: float, lr: float = 0.01,
                      steps: int = 30_000, seed: int = 0,
                      init_scale: float = 0.5) -> np.ndarray:
    """Plain SGD on 0.5*(w1*x1 + w2*x2 - a*x1)^2 with x1 ~ N(0,1) and
    x2 ~ N(noise_mean, 1). Returns the (steps+1, 2) weight trajectory.

    The noise weight w2 contracts toward 0 regardless of the noise mean.
    """
    rng = _rng(seed, 7)
    w = rng.normal(0.0, init_scale, size=2)
    x1 = rng.standard_normal(steps)
    x2 = noise_mean + rng.standard_normal(steps)
    traj = np.empty((steps + 1, 2))
    traj[0] = w
    for i in range(steps):
        err = w[0] * x1[i] + w[1] * x2[i] - a * x1[i]
        w = w - lr * err * np.array([x1[i], x2[i]])
        traj[i + 1] = w
        if not np.all(np.isfinite(w)) or np.abs(w).max() > 1e6:
            raise TrainingDiverged(f"two-weight regression diverged at step {i} "
                                   f"(lr={lr}, noise_mean={noise_mean})")
    return traj


# -- suites -------------------------------------------------------------------

@dataclass
class SuiteRow:
    label: str
    algorithm: str
    env_name: str
    final_scores: list[float]
    actor_param_count: int
    error: str | None = None

    @property
    def mean(self) -> float:
        return float(np.mean(self.final_scores)) if self.final_scores else float("nan")

    @property
    def ci_half_width(self) -> float:
        if len(self.final_scores) < 2:
            return 0.0
        arr = np.asarray(self.final_scores)
        return float(1.96 * arr.std(ddof=1) / np.sqrt(len(arr)))


def default_histograms(env_name: str, bins: int = 50,
                       n_states: int = 2_000) -> list[envs.HistogramDistribution]:
    """Histograms of the toy env's original features under a random policy."""
    env = make_env(env_name)
    rng = _rng(0, 9)
    states = np.empty((n_states, env.d_og))
    s = env.reset(rng)
    for i in range(n_states):
        states[i] = s
        s, _, done = env.step(rng.uniform(-1, 1, size=env.action_dim))
        if done:
            s = env.reset(rng)
    return envs.fit_histograms(states, bins=bins)


def _base_config(**overrides) -> ExperimentConfig:
    return ExperimentConfig(**overrides)


def build_suite(name: str, algorithm: str = "td3",
                base: ExperimentConfig | None = None) -> list[tuple[str, ExperimentConfig]]:
    """Named experiment suites mirroring the analysis campaigns."""
    base = base or ExperimentConfig(algorithm=algorithm)
    base = replace(base, algorithm=algorithm)
    out: list[tuple[str, ExperimentConfig]] = []
    if name == "noise-sweep":
        for n_f in (0.8, 0.9, 0.95, 0.98, 0.99):
            for mode in ("anf", "dense"):
                cfg = replace(base, mode=mode, ene=replace(base.ene, noise_fraction=n_f))
                out.append((f"{mode}-nf{n_f}", cfg))
    elif name == "louder-noise":
        for sigma in (1, 2, 4, 8, 16):
            for mode in ("anf", "dense"):
                cfg = replace(base, mode=mode,
                              ene=replace(base.ene, noise_amplitude=float(sigma)))
                out.append((f"{mode}-sigma{sigma}", cfg))
    elif name == "imitate":
        hists = default_histograms(base.env_name)
        ene = replace(base.ene, distribution="imitate", imitate_histograms=hists)
        for mode in ("anf", "dense"):
            out.append((f"{mode}-imitate", replace(base, mode=mode, ene=ene)))
    elif name == "static-ablation":
        for mode in ("anf", "static_anf", "dense"):
            out.append((mode, replace(base, mode=mode)))
    elif name == "pene":
        period = base.total_steps // 4
        for mode in ("anf", "dense"):
            out.append((f"{mode}-pene", replace(
                base, mode=mode, pene_period=period,
                ene=replace(base.ene, noise_fraction=0.95))))
    elif name == "sparsity-sweep":
        out.append(("anf", replace(base, mode="anf")))
        for s in (0.80, 0.90, 0.95, 0.98):
            out.append((f"sparser-{s:.2f}", replace(
                base, mode="sparser_anf", global_sparsity_target=s)))
    elif name == "mu-sweep":
        for mu in (0.0, 1.0, -2.0, 4.0):
            for mode in ("anf", "dense"):
                cfg = replace(base, mode=mode, ene=replace(
                    base.ene, noise_fraction=0.98, noise_mean=mu))
                out.append((f"{mode}-mu{mu:g}", cfg))
    elif name == "matching-sparsity":
        for n_f in (0.9, 0.95, 0.98):
            ene = replace(base.ene, noise_fraction=n_f)
            out.append((f"match-nf{n_f}", replace(
                base, mode="anf", input_layer_sparsity=n_f, ene=ene)))
            out.append((f"fixed80-nf{n_f}", replace(
                base, mode="anf", input_layer_sparsity=0.8, ene=ene)))
    else:
        raise ConfigError(f"unknown suite '{name}'; known: {sorted(SUITE_NAMES)}")
    return out


SUITE_NAMES = ("noise-sweep", "louder-noise", "imitate", "static-ablation",
               "pene", "sparsity-sweep", "mu-sweep", "matching-sparsity")


def run_suite(name: str, seeds: int = 5, algorithm: str = "td3",
              base: ExperimentConfig | None = None, out_dir=None,
              run_fn=None) -> list[SuiteRow]:
    """Run a suite's config x seed cross-product, recording partial failures."""
    if run_fn is None:
        run_fn = run_training
    rows = []
    for label, cfg in build_suite(name, algorithm=algorithm, base=base):
        scores, params, error = [], 0, None
        for seed in range(seeds):
            run_out = None
            if out_dir is not None:
                run_out = os.path.join(out_dir, f"{name}_{label}_seed{seed}")
            try:
                log = run_fn(cfg, seed, out_dir=run_out)
                scores.append(final_score(log))
                params = log.actor_param_count
            except TrainingDiverged as exc:
                error = str(exc)
        rows.append(SuiteRow(label=label, algorithm=cfg.algorithm,
                             env_name=cfg.env_name, final_scores=scores,
                             actor_param_count=params, error=error))
    if out_dir is not None:
        write_suite_csv(rows, os.path.join(out_dir, f"suite_{name}.csv"))
    return rows


def write_suite_csv(rows: list[SuiteRow], path) -> None:
    with open(path, "w") as f:
        f.write("label,algorithm,env,final_score_mean,ci_half_width,actor_param_count,"
                "num_seeds,error\n")
        for r in rows:
            f.write(f"{r.label},{r.algorithm},{r.env_name},{float(r.mean)!r},"
                    f"{float(r.ci_half_width)!r},{r.actor_param_count},"
                    f"{len(r.final_scores)},{r.error or ''}\n")


def format_suite_table(rows: list[SuiteRow]) -> str:
    """Human-readable table: label, algo, env, return +- CI, parameter count."""
    header = f"{'label':<22} {'algo':<5} {'env':<18} {'return':>12} {'±CI':>9} {'params':>10}"
    lines = [header, "-" * len(header)]
    for r in rows:
        if r.error and not r.final_scores:
            lines.append(f"{r.label:<22} {r.algorithm:<5} {r.env_name:<18} "
                         f"{'FAILED':>12} {'':>9} {'':>10}  {r.error}")
        else:
            lines.append(f"{r.label:<22} {r.algorithm:<5} {r.env_name:<18} "
                         f"{r.mean:>12.2f} {r.ci_half_width:>9.2f} "
                         f"{r.actor_param_count:>10}")
    return "\n".join(lines)
