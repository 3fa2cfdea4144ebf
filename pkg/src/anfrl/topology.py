"""Sparse topology lifecycle: random init, magnitude drop + random regrow,
global-sparsity accounting, and uniform sparsity allocation.

Masks are boolean (out, in) arrays; connection positions are flat indices
into that array (row-major). Magnitude ties at drop time break toward the
lowest flat index, which keeps every evolution deterministic under a fixed
RNG.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError


class SparseMode(str, Enum):
    DYNAMIC = "dynamic"
    STATIC = "static"


class SparseLayers(str, Enum):
    INPUT_ONLY = "input_only"
    INPUT_AND_HIDDEN = "input_and_hidden"


@dataclass
class SparsityConfig:
    input_layer_sparsity: float = 0.8
    drop_fraction: float = 0.05
    topology_period: int = 1000  # env steps between topology updates
    mode: SparseMode = SparseMode.DYNAMIC
    sparse_layers: SparseLayers = SparseLayers.INPUT_ONLY
    global_sparsity: float | None = None  # set for the sparser (input+hidden) variant
    protect_fresh_growth: bool = False  # exclude last update's growths from this drop

    def __post_init__(self):
        self.mode = SparseMode(self.mode)
        self.sparse_layers = SparseLayers(self.sparse_layers)
        if not 0.0 <= self.input_layer_sparsity < 1.0:
            raise ConfigError("input_layer_sparsity must be in [0, 1)")
        if not 0.0 < self.drop_fraction < 1.0:
            raise ConfigError("drop_fraction must be in (0, 1)")
        if self.topology_period <= 0:
            raise ConfigError("topology_period must be positive")
        if self.sparse_layers is SparseLayers.INPUT_AND_HIDDEN and self.global_sparsity is None:
            raise ConfigError("input_and_hidden sparsity requires a global_sparsity target")


@dataclass
class TopologyMask:
    existing: np.ndarray  # bool (out, in)
    target_density: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.existing.shape

    @property
    def num_existing(self) -> int:
        return int(self.existing.sum())

    def copy(self) -> "TopologyMask":
        return TopologyMask(self.existing.copy(), self.target_density)


@dataclass
class TopologyDelta:
    dropped: np.ndarray  # flat indices
    grown: np.ndarray  # flat indices
    step: int = 0

    @property
    def empty(self) -> bool:
        return self.dropped.size == 0 and self.grown.size == 0


def init_mask(shape: tuple[int, int], sparsity: float, rng: np.random.Generator) -> TopologyMask:
    """Choose round((1-sparsity) * out * in) positions uniformly without replacement."""
    if not 0.0 <= sparsity < 1.0:
        raise ConfigError(f"sparsity must be in [0, 1), got {sparsity}")
    out_d, in_d = shape
    total = out_d * in_d
    k = int(round((1.0 - sparsity) * total))
    mask = np.zeros(total, dtype=bool)
    mask[rng.choice(total, size=k, replace=False)] = True
    return TopologyMask(existing=mask.reshape(shape), target_density=1.0 - sparsity)


def init_mask_with_count(shape: tuple[int, int], count: int,
                         rng: np.random.Generator) -> TopologyMask:
    """Like init_mask but with an exact connection count (for global budgets)."""
    out_d, in_d = shape
    total = out_d * in_d
    if not 0 <= count <= total:
        raise ConfigError(f"count {count} out of range for shape {shape}")
    mask = np.zeros(total, dtype=bool)
    mask[rng.choice(total, size=count, replace=False)] = True
    return TopologyMask(existing=mask.reshape(shape), target_density=count / total)


def evolve(mask: TopologyMask, weights: np.ndarray, drop_fraction: float,
           rng: np.random.Generator, step: int = 0,
           protected: np.ndarray | None = None) -> tuple[TopologyMask, TopologyDelta]:
    """One SET update: drop the smallest-|weight| fraction, regrow the same
    number uniformly at random among previously-empty positions, disjoint from
    the dropped set. Grown weights are the caller's job to set to 0 (see
    `apply_delta_to_weights`).

    `protected` flat indices are exempt from dropping (optional grace period
    for freshly grown connections).
    """
    flat_existing = np.flatnonzero(mask.existing.ravel())
    k = flat_existing.size
    n_drop = int(drop_fraction * k)
    if n_drop == 0:
        empty = np.empty(0, dtype=np.int64)
        return mask.copy(), TopologyDelta(empty, empty.copy(), step)
    candidates = flat_existing
    if protected is not None and protected.size:
        candidates = np.setdiff1d(flat_existing, protected, assume_unique=False)
        if candidates.size < n_drop:
            candidates = flat_existing
    mags = np.abs(weights.ravel()[candidates])
    order = np.argsort(mags, kind="stable")  # ties break toward lowest flat index
    dropped = np.sort(candidates[order[:n_drop]])
    empty_before = np.flatnonzero(~mask.existing.ravel())
    n_grow = min(n_drop, empty_before.size)
    grown = np.sort(rng.choice(empty_before, size=n_grow, replace=False))
    new = mask.existing.copy().ravel()
    new[dropped] = False
    new[grown] = True
    return TopologyMask(new.reshape(mask.shape), mask.target_density), TopologyDelta(dropped, grown, step)


def apply_delta_to_weights(delta: TopologyDelta, weights: np.ndarray) -> None:
    """Zero both dropped and freshly grown positions in place."""
    weights.ravel()[delta.dropped] = 0.0
    weights.ravel()[delta.grown] = 0.0


def delta_positions(delta: TopologyDelta) -> np.ndarray:
    """Flat positions whose optimizer moments must be reset (dropped and grown)."""
    return np.concatenate([delta.dropped, delta.grown])


def layer_weight_counts(layer_shapes: list[tuple[int, int]],
                        masks: list[np.ndarray | None]) -> tuple[int, int]:
    """(existing, total) weight counts across layers; biases excluded."""
    total = sum(o * i for o, i in layer_shapes)
    existing = 0
    for (o, i), m in zip(layer_shapes, masks):
        existing += o * i if m is None else int(np.asarray(m).sum())
    return existing, total


def global_sparsity(layer_shapes: list[tuple[int, int]],
                    masks: list[np.ndarray | None]) -> float:
    """1 - existing/total over all weight matrices (biases excluded)."""
    existing, total = layer_weight_counts(layer_shapes, masks)
    return 1.0 - existing / total


def uniform_allocation(target_global: float, layer_shapes: list[tuple[int, int]],
                       dense_output: bool = True) -> list[float]:
    """Per-layer sparsity levels realizing a global sparsity target.

    One shared sparsity level for the input and hidden layers; the output
    layer stays dense. Raises if the dense output layer alone exceeds the
    weight budget (the regime where the target is infeasible).
    """
    if not 0.0 <= target_global < 1.0:
        raise ConfigError("target global sparsity must be in [0, 1)")
    sizes = [o * i for o, i in layer_shapes]
    total = sum(sizes)
    budget = int(round((1.0 - target_global) * total))
    if not dense_output:
        level = 1.0 - budget / total
        return [max(level, 0.0)] * len(layer_shapes)
    out_size = sizes[-1]
    sparse_total = total - out_size
    if out_size > budget:
        raise ConfigError(
            f"dense output layer ({out_size} weights) alone exceeds the budget "
            f"({budget}) for global sparsity {target_global}")
    level = 1.0 - (budget - out_size) / sparse_total
    return [max(level, 0.0)] * (len(layer_shapes) - 1) + [0.0]


def allocated_counts(target_global: float, layer_shapes: list[tuple[int, int]],
                     dense_output: bool = True) -> list[int]:
    """Integer per-layer connection counts whose sum hits the global budget exactly."""
    levels = uniform_allocation(target_global, layer_shapes, dense_output)
    sizes = [o * i for o, i in layer_shapes]
    total = sum(sizes)
    budget = int(round((1.0 - target_global) * total))
    counts = [int(round((1.0 - s) * n)) for s, n in zip(levels, sizes)]
    # rounding can drift by a few connections; settle the difference on the
    # largest sparse layer
    drift = budget - sum(counts)
    sparse_idx = range(len(sizes) - 1) if dense_output else range(len(sizes))
    adjust = max(sparse_idx, key=lambda i: sizes[i])
    counts[adjust] += drift
    return counts


def connections_per_input(mask: TopologyMask | np.ndarray) -> np.ndarray:
    """Column sums: number of existing connections per input neuron."""
    m = mask.existing if isinstance(mask, TopologyMask) else np.asarray(mask)
    return m.sum(axis=0).astype(np.int64)


def save_mask_csv(mask: TopologyMask, path) -> None:
    """Snapshot a mask as CSV: header with shape/density, then one flat index per line."""
    out_d, in_d = mask.shape
    idx = np.flatnonzero(mask.existing.ravel())
    with open(path, "w") as f:
        f.write(f"# shape,{out_d},{in_d},density,{float(mask.target_density)!r}\n")
        f.write("flat_index\n")
        for i in idx:
            f.write(f"{i}\n")


def load_mask_csv(path) -> TopologyMask:
    with open(path) as f:
        header = f.readline().strip()
        parts = header.lstrip("# ").split(",")
        out_d, in_d, density = int(parts[1]), int(parts[2]), float(parts[4])
        f.readline()  # column name
        idx = np.array([int(line) for line in f if line.strip()], dtype=np.int64)
    mask = np.zeros(out_d * in_d, dtype=bool)
    mask[idx] = True
    return TopologyMask(mask.reshape(out_d, in_d), density)
