"""Connectivity instrumentation: input-layer topology timelines and
per-neuron snapshots, exported as CSV and optional self-contained SVG.

Recording only reads mask snapshots; it never touches training state, so
enabling it cannot change a run's outcome.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import topology

TRACKED_NETWORKS = ("actor", "critic1", "critic2")


@dataclass
class ConnectivityTimeline:
    network: str
    steps: list[int] = field(default_factory=list)
    relevant_mean: list[float] = field(default_factory=list)
    noise_mean: list[float] = field(default_factory=list)  # nan when no noise inputs


@dataclass
class NeuronSnapshot:
    step: int
    network: str
    counts: np.ndarray  # connections per input neuron
    relevant_indices: np.ndarray


def split_means(counts: np.ndarray, relevant_indices: np.ndarray,
                num_state_inputs: int) -> tuple[float, float]:
    """Mean connection count over relevant vs noise input neurons.

    Only the first `num_state_inputs` columns are state features (critic
    input layers also carry action columns, which belong to neither split).
    Returns nan for the noise mean when every state input is relevant.
    """
    state_counts = counts[:num_state_inputs]
    rel_mask = np.zeros(num_state_inputs, dtype=bool)
    rel_mask[relevant_indices] = True
    relevant = float(state_counts[rel_mask].mean())
    noise = float(state_counts[~rel_mask].mean()) if (~rel_mask).any() else float("nan")
    return relevant, noise


def record_connectivity(agent, step: int, relevant_indices: np.ndarray,
                        num_state_inputs: int,
                        timelines: dict[str, ConnectivityTimeline]) -> bool:
    """Append one sample per tracked network. Returns False for dense agents."""
    masks = agent.input_masks()
    if all(m is None for m in masks.values()):
        return False
    for name, mask in masks.items():
        if mask is None:
            continue
        counts = topology.connections_per_input(mask)
        rel, noise = split_means(counts, relevant_indices, num_state_inputs)
        tl = timelines.setdefault(name, ConnectivityTimeline(network=name))
        tl.steps.append(step)
        tl.relevant_mean.append(rel)
        tl.noise_mean.append(noise)
    return True


def snapshot_neurons(agent, step: int, relevant_indices: np.ndarray,
                     network: str = "actor") -> NeuronSnapshot | None:
    mask = agent.input_masks()[network]
    if mask is None:
        return None
    return NeuronSnapshot(step=step, network=network,
                          counts=topology.connections_per_input(mask),
                          relevant_indices=np.asarray(relevant_indices))


def export_timelines_csv(timelines: dict[str, ConnectivityTimeline], path) -> None:
    with open(path, "w") as f:
        f.write("step,relevant_mean,noise_mean,network\n")
        for name in sorted(timelines):
            tl = timelines[name]
            for s, r, nz in zip(tl.steps, tl.relevant_mean, tl.noise_mean):
                f.write(f"{s},{float(r)!r},{float(nz)!r},{name}\n")


def load_timelines_csv(path) -> dict[str, ConnectivityTimeline]:
    timelines: dict[str, ConnectivityTimeline] = {}
    with open(path) as f:
        f.readline()
        for line in f:
            s, r, nz, name = line.strip().split(",")
            tl = timelines.setdefault(name, ConnectivityTimeline(network=name))
            tl.steps.append(int(s))
            tl.relevant_mean.append(float(r))
            tl.noise_mean.append(float(nz))
    return timelines


def export_snapshot_csv(snapshot: NeuronSnapshot, path) -> None:
    rel = set(snapshot.relevant_indices.tolist())
    with open(path, "w") as f:
        f.write("step,neuron_index,count,is_relevant\n")
        for i, c in enumerate(snapshot.counts):
            f.write(f"{snapshot.step},{i},{int(c)},{int(i in rel)}\n")


def export_curve_csv(steps, values_by_name: dict[str, list[float]], path) -> None:
    """Generic learning-curve export: one column per named series."""
    names = sorted(values_by_name)
    with open(path, "w") as f:
        f.write("step," + ",".join(names) + "\n")
        for i, s in enumerate(steps):
            f.write(f"{s}," + ",".join(repr(float(values_by_name[n][i])) for n in names) + "\n")


def _svg_polyline(xs, ys, width, height, x_range, y_range, color) -> str:
    x0, x1 = x_range
    y0, y1 = y_range
    sx = (width - 40) / max(x1 - x0, 1e-12)
    sy = (height - 40) / max(y1 - y0, 1e-12)
    pts = " ".join(f"{20 + (x - x0) * sx:.2f},{height - 20 - (y - y0) * sy:.2f}"
                   for x, y in zip(xs, ys))
    return (f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
            f'points="{pts}" />')


def export_timeline_svg(timelines: dict[str, ConnectivityTimeline], path,
                        width: int = 640, height: int = 360) -> None:
    """One polyline per series (relevant and noise per network); byte-stable."""
    palette = ["#2a7e43", "#c0392b", "#2b6cb0", "#b7791f", "#6b46c1", "#319795"]
    all_steps = [s for tl in timelines.values() for s in tl.steps]
    all_vals = [v for tl in timelines.values()
                for v in tl.relevant_mean + tl.noise_mean if np.isfinite(v)]
    x_range = (min(all_steps, default=0), max(all_steps, default=1))
    y_range = (min(all_vals, default=0.0), max(all_vals, default=1.0))
    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">']
    ci = 0
    for name in sorted(timelines):
        tl = timelines[name]
        for label, series in (("relevant", tl.relevant_mean), ("noise", tl.noise_mean)):
            pairs = [(s, v) for s, v in zip(tl.steps, series) if np.isfinite(v)]
            if not pairs:
                continue
            xs, ys = zip(*pairs)
            lines.append(_svg_polyline(xs, ys, width, height, x_range, y_range,
                                       palette[ci % len(palette)]))
            lines.append(f'<!-- {name}:{label} -->')
            ci += 1
    lines.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
