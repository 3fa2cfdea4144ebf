"""TD3 and SAC actor-critic agents with optional sparse input-layer topology
that evolves during training (drop smallest-magnitude, regrow at random).

Both agents run in four configurations: dense, dynamic-sparse (the default
sparse mode), static-sparse (initial mask frozen), and the sparser variant
that also prunes hidden layers against a global sparsity budget.
"""

from __future__ import annotations

import pickle
from dataclasses import dataclass

import numpy as np

from . import nets, topology
from .errors import ConfigError, UsageError
from .nets import AdamState, LayerParams, MLPSpec
from .topology import SparseLayers, SparseMode, SparsityConfig, TopologyDelta, TopologyMask

CHECKPOINT_VERSION = 1


@dataclass
class AgentHyperparams:
    gamma: float = 0.99
    tau: float = 0.005
    lr: float = 1e-3
    weight_decay: float = 2e-4
    batch_size: int = 100
    hidden_dims: tuple[int, ...] = (256, 256)
    actor_delay: int = 2  # k_a: TD3 2, SAC 1
    target_update_interval: int = 2  # k_tar: TD3 2, SAC 1
    alpha: float = 0.2  # SAC entropy temperature, fixed
    exploration_noise_std: float = 0.1  # TD3
    target_noise_std: float = 0.2  # TD3
    target_noise_clip: float = 0.5  # TD3

    def __post_init__(self):
        if min(self.gamma, self.tau, self.lr, self.batch_size, self.actor_delay,
               self.target_update_interval) <= 0:
            raise ConfigError("hyperparameters must be positive")

    @classmethod
    def td3_defaults(cls, **kw) -> "AgentHyperparams":
        return cls(actor_delay=2, target_update_interval=2, **kw)

    @classmethod
    def sac_defaults(cls, **kw) -> "AgentHyperparams":
        return cls(actor_delay=1, target_update_interval=1, **kw)


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool


class ReplayBuffer:
    """Ring buffer with uniform-with-replacement sampling."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int,
                 rng: np.random.Generator):
        self.capacity = int(capacity)
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.dones = np.zeros(capacity)
        self.size = 0
        self.pos = 0
        self.rng = rng

    def add(self, t: Transition) -> None:
        i = self.pos
        self.states[i] = t.state
        self.actions[i] = t.action
        self.rewards[i] = t.reward
        self.next_states[i] = t.next_state
        self.dones[i] = float(t.done)
        self.pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, n: int) -> tuple[np.ndarray, ...]:
        if self.size == 0:
            raise UsageError("cannot sample from an empty buffer")
        idx = self.rng.integers(0, self.size, size=n)
        return (self.states[idx], self.actions[idx], self.rewards[idx],
                self.next_states[idx], self.dones[idx])


def _build_masks(spec: MLPSpec, sparsity: SparsityConfig | None,
                 rng: np.random.Generator) -> list[TopologyMask | None]:
    """Topology masks per layer. Dense agents (sparsity=None) get all-None."""
    shapes = spec.layer_shapes
    if sparsity is None:
        return [None] * len(shapes)
    if sparsity.sparse_layers is SparseLayers.INPUT_ONLY:
        masks: list[TopologyMask | None] = [None] * len(shapes)
        masks[0] = topology.init_mask(shapes[0], sparsity.input_layer_sparsity, rng)
        return masks
    counts = topology.allocated_counts(sparsity.global_sparsity, shapes, dense_output=True)
    masks = [topology.init_mask_with_count(sh, c, rng)
             for sh, c in zip(shapes[:-1], counts[:-1])]
    masks.append(None)
    return masks


def _make_net(spec: MLPSpec, masks: list[TopologyMask | None],
              rng: np.random.Generator) -> list[LayerParams]:
    raw = [None if m is None else m.existing for m in masks]
    return nets.init_mlp(spec, rng, masks=raw)


def _clone_net(net: list[LayerParams]) -> list[LayerParams]:
    return [LayerParams(l.weights.copy(), l.biases.copy(),
                        None if l.mask is None else l.mask) for l in net]


def _polyak(target: list[LayerParams], online: list[LayerParams], tau: float) -> None:
    for t, o in zip(target, online):
        t.weights *= 1.0 - tau
        t.weights += tau * o.weights
        t.biases *= 1.0 - tau
        t.biases += tau * o.biases


class _SparseNet:
    """A network plus its optimizer and evolving topology masks.

    The target network shares the online mask arrays, so every topology
    update applies to both; Polyak averaging stays well-defined position-wise.
    """

    def __init__(self, spec: MLPSpec, sparsity: SparsityConfig | None,
                 rng: np.random.Generator, lr: float, weight_decay: float,
                 with_target: bool = True):
        self.spec = spec
        self.masks = _build_masks(spec, sparsity, rng)
        self.net = _make_net(spec, self.masks, rng)
        self.target = _clone_net(self.net) if with_target else None
        self.adam = AdamState.for_net(self.net, lr=lr, weight_decay=weight_decay)
        self.sparsity = sparsity
        self.last_growth: dict[int, np.ndarray] = {}

    def sparse_layer_indices(self) -> list[int]:
        return [i for i, m in enumerate(self.masks) if m is not None]

    def evolve(self, rng: np.random.Generator, step: int) -> dict[int, TopologyDelta]:
        deltas = {}
        for i in self.sparse_layer_indices():
            protected = self.last_growth.get(i) if self.sparsity.protect_fresh_growth else None
            new_mask, delta = topology.evolve(
                self.masks[i], self.net[i].weights, self.sparsity.drop_fraction,
                rng, step=step, protected=protected)
            self.masks[i] = new_mask
            self.net[i].mask = new_mask.existing
            topology.apply_delta_to_weights(delta, self.net[i].weights)
            if self.target is not None:
                self.target[i].mask = new_mask.existing
                topology.apply_delta_to_weights(delta, self.target[i].weights)
            nets.zero_moments(self.adam, i, topology.delta_positions(delta))
            self.last_growth[i] = delta.grown
            deltas[i] = delta
        return deltas

    def global_sparsity(self) -> float:
        return topology.global_sparsity(self.spec.layer_shapes,
                                        [None if m is None else m.existing for m in self.masks])

    def param_count(self) -> int:
        existing, _ = topology.layer_weight_counts(
            self.spec.layer_shapes, [None if m is None else m.existing for m in self.masks])
        return existing


@dataclass
class TrainDiagnostics:
    critic_loss: float
    actor_loss: float | None = None
    mean_q: float = 0.0
    skipped: bool = False

    def has_nan(self) -> bool:
        vals = [self.critic_loss, self.mean_q]
        if self.actor_loss is not None:
            vals.append(self.actor_loss)
        return any(not np.isfinite(v) for v in vals)


class _AgentBase:
    """Shared machinery: twin critics with targets, Polyak updates, topology hook."""

    algorithm = "base"

    def __init__(self, state_dim: int, action_dim: int, hp: AgentHyperparams,
                 sparsity: SparsityConfig | None, rng: np.random.Generator,
                 actor_output_dim: int):
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.hp = hp
        self.sparsity = sparsity
        self.rng = rng
        actor_spec = MLPSpec(state_dim, hp.hidden_dims, actor_output_dim)
        critic_spec = MLPSpec(state_dim + action_dim, hp.hidden_dims, 1)
        self.actor = _SparseNet(actor_spec, sparsity, rng, hp.lr, hp.weight_decay,
                                with_target=self._uses_target_actor())
        self.critic1 = _SparseNet(critic_spec, sparsity, rng, hp.lr, hp.weight_decay)
        self.critic2 = _SparseNet(critic_spec, sparsity, rng, hp.lr, hp.weight_decay)
        self.train_step_count = 0

    def _uses_target_actor(self) -> bool:
        return False

    def networks(self) -> dict[str, _SparseNet]:
        return {"actor": self.actor, "critic1": self.critic1, "critic2": self.critic2}

    def maybe_evolve_topology(self, env_step: int) -> dict[str, dict[int, TopologyDelta]] | None:
        if self.sparsity is None or self.sparsity.mode is not SparseMode.DYNAMIC:
            return None
        if env_step % self.sparsity.topology_period != 0:
            return None
        return {name: sn.evolve(self.rng, env_step) for name, sn in self.networks().items()}

    def _critic_update(self, states, actions, y) -> float:
        n = len(y)
        sa = np.concatenate([states, actions], axis=1)
        losses = []
        for critic in (self.critic1, self.critic2):
            q, cache = nets.forward(critic.net, sa)
            q = q[:, 0]
            err = q - y
            losses.append(float(np.mean(err ** 2)))
            grads, _ = nets.backward(critic.net, cache, (2.0 * err / n)[:, None])
            nets.adam_step(critic.adam, critic.net, grads)
        return 0.5 * (losses[0] + losses[1])

    def _polyak_all(self) -> None:
        for sn in self.networks().values():
            if sn.target is not None:
                _polyak(sn.target, sn.net, self.hp.tau)

    def global_sparsity(self) -> float:
        return self.actor.global_sparsity()

    def actor_param_count(self) -> int:
        return self.actor.param_count()

    def input_masks(self) -> dict[str, TopologyMask | None]:
        return {name: sn.masks[0] for name, sn in self.networks().items()}

    # -- checkpointing -------------------------------------------------------

    def state_dict(self) -> dict:
        def net_state(sn: _SparseNet) -> dict:
            return {
                "weights": [l.weights.copy() for l in sn.net],
                "biases": [l.biases.copy() for l in sn.net],
                "masks": [None if m is None else m.existing.copy() for m in sn.masks],
                "densities": [None if m is None else m.target_density for m in sn.masks],
                "target_weights": None if sn.target is None else [l.weights.copy() for l in sn.target],
                "target_biases": None if sn.target is None else [l.biases.copy() for l in sn.target],
                "adam_m": [(g.weights.copy(), g.biases.copy()) for g in sn.adam.m],
                "adam_v": [(g.weights.copy(), g.biases.copy()) for g in sn.adam.v],
                "adam_step": sn.adam.step_count,
                "last_growth": {k: v.copy() for k, v in sn.last_growth.items()},
            }
        return {
            "version": CHECKPOINT_VERSION,
            "algorithm": self.algorithm,
            "train_step_count": self.train_step_count,
            "rng_state": self.rng.bit_generator.state,
            "networks": {name: net_state(sn) for name, sn in self.networks().items()},
        }

    def load_state_dict(self, state: dict) -> None:
        if state.get("version") != CHECKPOINT_VERSION:
            raise ConfigError(f"unsupported checkpoint version: {state.get('version')}")
        if state.get("algorithm") != self.algorithm:
            raise ConfigError("checkpoint algorithm does not match agent")
        self.train_step_count = state["train_step_count"]
        self.rng.bit_generator.state = state["rng_state"]
        for name, sn in self.networks().items():
            ns = state["networks"][name]
            for i, layer in enumerate(sn.net):
                layer.weights[:] = ns["weights"][i]
                layer.biases[:] = ns["biases"][i]
                if ns["masks"][i] is not None:
                    sn.masks[i] = TopologyMask(ns["masks"][i].copy(), ns["densities"][i])
                    layer.mask = sn.masks[i].existing
            if sn.target is not None:
                for i, layer in enumerate(sn.target):
                    layer.weights[:] = ns["target_weights"][i]
                    layer.biases[:] = ns["target_biases"][i]
                    layer.mask = sn.net[i].mask
            for i in range(len(sn.net)):
                sn.adam.m[i].weights[:] = ns["adam_m"][i][0]
                sn.adam.m[i].biases[:] = ns["adam_m"][i][1]
                sn.adam.v[i].weights[:] = ns["adam_v"][i][0]
                sn.adam.v[i].biases[:] = ns["adam_v"][i][1]
            sn.adam.step_count = ns["adam_step"]
            sn.last_growth = {k: v.copy() for k, v in ns["last_growth"].items()}


class TD3Agent(_AgentBase):
    algorithm = "td3"

    def __init__(self, state_dim: int, action_dim: int,
                 hp: AgentHyperparams | None = None,
                 sparsity: SparsityConfig | None = None,
                 rng: np.random.Generator | None = None):
        hp = hp or AgentHyperparams.td3_defaults()
        rng = rng if rng is not None else np.random.default_rng()
        super().__init__(state_dim, action_dim, hp, sparsity, rng,
                         actor_output_dim=action_dim)

    def _uses_target_actor(self) -> bool:
        return True

    def select_action(self, state: np.ndarray, explore: bool = False) -> np.ndarray:
        out, _ = nets.forward(self.actor.net, state)
        action = np.tanh(out)
        if explore:
            action = action + self.hp.exploration_noise_std * self.rng.standard_normal(self.action_dim)
        return np.clip(action, -1.0, 1.0)

    def train_step(self, buffer: ReplayBuffer) -> TrainDiagnostics:
        hp = self.hp
        if buffer.size < hp.batch_size:
            return TrainDiagnostics(critic_loss=0.0, skipped=True)
        self.train_step_count += 1
        states, actions, rewards, next_states, dones = buffer.sample(hp.batch_size)

        # smoothed target action from the target actor
        ta_out, _ = nets.forward(self.actor.target, next_states)
        noise = np.clip(hp.target_noise_std * self.rng.standard_normal(ta_out.shape),
                        -hp.target_noise_clip, hp.target_noise_clip)
        next_actions = np.clip(np.tanh(ta_out) + noise, -1.0, 1.0)
        nsa = np.concatenate([next_states, next_actions], axis=1)
        q1t, _ = nets.forward(self.critic1.target, nsa)
        q2t, _ = nets.forward(self.critic2.target, nsa)
        y = rewards + hp.gamma * (1.0 - dones) * np.minimum(q1t[:, 0], q2t[:, 0])

        critic_loss = self._critic_update(states, actions, y)

        actor_loss = None
        if self.train_step_count % hp.actor_delay == 0:
            n = hp.batch_size
            a_out, a_cache = nets.forward(self.actor.net, states)
            a = np.tanh(a_out)
            sa = np.concatenate([states, a], axis=1)
            q1, q_cache = nets.forward(self.critic1.net, sa)
            actor_loss = float(-np.mean(q1))
            _, d_input = nets.backward(self.critic1.net, q_cache,
                                       np.full((n, 1), -1.0 / n))
            d_action = d_input[:, self.state_dim:]
            a_grads, _ = nets.backward(self.actor.net, a_cache, d_action * (1.0 - a ** 2))
            nets.adam_step(self.actor.adam, self.actor.net, a_grads)
        if self.train_step_count % hp.target_update_interval == 0:
            self._polyak_all()
        return TrainDiagnostics(critic_loss=critic_loss, actor_loss=actor_loss,
                                mean_q=float(np.mean(y)))


class SACAgent(_AgentBase):
    algorithm = "sac"

    def __init__(self, state_dim: int, action_dim: int,
                 hp: AgentHyperparams | None = None,
                 sparsity: SparsityConfig | None = None,
                 rng: np.random.Generator | None = None):
        hp = hp or AgentHyperparams.sac_defaults()
        rng = rng if rng is not None else np.random.default_rng()
        super().__init__(state_dim, action_dim, hp, sparsity, rng,
                         actor_output_dim=2 * action_dim)

    def _policy_params(self, out: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return out[..., :self.action_dim], out[..., self.action_dim:]

    def select_action(self, state: np.ndarray, explore: bool = False) -> np.ndarray:
        out, _ = nets.forward(self.actor.net, state)
        mean, log_std = self._policy_params(out)
        if not explore:
            return np.tanh(mean)
        return nets.gaussian_head(mean, log_std, rng=self.rng).sampled_action

    def train_step(self, buffer: ReplayBuffer) -> TrainDiagnostics:
        hp = self.hp
        if buffer.size < hp.batch_size:
            return TrainDiagnostics(critic_loss=0.0, skipped=True)
        self.train_step_count += 1
        states, actions, rewards, next_states, dones = buffer.sample(hp.batch_size)
        n = hp.batch_size

        # entropy-regularized target with a fresh next-action sample
        na_out, _ = nets.forward(self.actor.net, next_states)
        n_mean, n_ls = self._policy_params(na_out)
        head = nets.gaussian_head(n_mean, n_ls, rng=self.rng)
        nsa = np.concatenate([next_states, head.sampled_action], axis=1)
        q1t, _ = nets.forward(self.critic1.target, nsa)
        q2t, _ = nets.forward(self.critic2.target, nsa)
        soft_q = np.minimum(q1t[:, 0], q2t[:, 0]) - hp.alpha * head.log_prob
        y = rewards + hp.gamma * (1.0 - dones) * soft_q

        critic_loss = self._critic_update(states, actions, y)

        actor_loss = None
        if self.train_step_count % hp.actor_delay == 0:
            a_out, a_cache = nets.forward(self.actor.net, states)
            mean, raw_ls = self._policy_params(a_out)
            xi = self.rng.standard_normal(mean.shape)
            head = nets.gaussian_head(mean, raw_ls, xi=xi)
            a = head.sampled_action
            sa = np.concatenate([states, a], axis=1)
            q1, c1_cache = nets.forward(self.critic1.net, sa)
            q2, c2_cache = nets.forward(self.critic2.net, sa)
            q1, q2 = q1[:, 0], q2[:, 0]
            qmin = np.minimum(q1, q2)
            actor_loss = float(np.mean(hp.alpha * head.log_prob - qmin))
            pick1 = (q1 <= q2).astype(float)
            _, d_in1 = nets.backward(self.critic1.net, c1_cache, (-pick1 / n)[:, None])
            _, d_in2 = nets.backward(self.critic2.net, c2_cache, (-(1.0 - pick1) / n)[:, None])
            d_action = (d_in1 + d_in2)[:, self.state_dim:]
            d_logp = np.full(n, hp.alpha / n)
            d_mean, d_ls = nets.tanh_gaussian_backward(head, xi, d_action, d_logp, raw_ls)
            a_grads, _ = nets.backward(self.actor.net, a_cache,
                                       np.concatenate([d_mean, d_ls], axis=1))
            nets.adam_step(self.actor.adam, self.actor.net, a_grads)
        if self.train_step_count % hp.target_update_interval == 0:
            self._polyak_all()
        return TrainDiagnostics(critic_loss=critic_loss, actor_loss=actor_loss,
                                mean_q=float(np.mean(y)))


def make_agent(algorithm: str, state_dim: int, action_dim: int,
               hp: AgentHyperparams | None = None,
               sparsity: SparsityConfig | None = None,
               rng: np.random.Generator | None = None):
    if algorithm == "td3":
        return TD3Agent(state_dim, action_dim, hp, sparsity, rng)
    if algorithm == "sac":
        return SACAgent(state_dim, action_dim, hp, sparsity, rng)
    raise ConfigError(f"unknown algorithm '{algorithm}' (expected td3 or sac)")


def save_checkpoint(path, payload: dict) -> None:
    payload = dict(payload)
    payload["checkpoint_version"] = CHECKPOINT_VERSION
    with open(path, "wb") as f:
        pickle.dump(payload, f, protocol=pickle.HIGHEST_PROTOCOL)


def load_checkpoint(path) -> dict:
    with open(path, "rb") as f:
        payload = pickle.load(f)
    if payload.get("checkpoint_version") != CHECKPOINT_VERSION:
        raise ConfigError("unsupported checkpoint version")
    return payload
