"""Config files (INI-style sections) and dotted-key overrides for experiments.

A config is a flat map of "section.key" strings; `build_experiment_config`
turns it into an ExperimentConfig, rejecting unknown keys with the file/line
they came from.
"""

from __future__ import annotations

import configparser

from . import envs
from .envs import ENEConfig
from .errors import ConfigError
from .harness import ExperimentConfig

# section.key -> (ExperimentConfig construction target, parser)
_BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def _parse_bool(v: str) -> bool:
    if v.lower() not in _BOOL:
        raise ValueError(f"not a boolean: {v}")
    return _BOOL[v.lower()]


def _parse_hidden(v: str) -> tuple[int, ...]:
    return tuple(int(x) for x in v.replace(" ", "").split(",") if x)


KNOWN_KEYS = {
    "run.env": ("env_name", str),
    "run.algorithm": ("algorithm", str),
    "run.mode": ("mode", str),
    "run.total_steps": ("total_steps", int),
    "run.initial_collect": ("initial_collect", int),
    "run.buffer_capacity": ("buffer_capacity", int),
    "run.eval_interval": ("eval_interval", int),
    "run.eval_episodes": ("eval_episodes", int),
    "run.hidden_dims": ("hidden_dims", _parse_hidden),
    "ene.noise_fraction": ("ene.noise_fraction", float),
    "ene.noise_mean": ("ene.noise_mean", float),
    "ene.noise_amplitude": ("ene.noise_amplitude", float),
    "ene.distribution": ("ene.distribution", str),
    "ene.histograms_path": ("ene.histograms_path", str),
    "pene.permutation_period": ("pene_period", int),
    "sparsity.input_layer_sparsity": ("input_layer_sparsity", float),
    "sparsity.drop_fraction": ("drop_fraction", float),
    "sparsity.topology_period": ("topology_period", int),
    "sparsity.global_sparsity_target": ("global_sparsity_target", float),
    "sparsity.protect_fresh_growth": ("protect_fresh_growth", _parse_bool),
}


def read_config_file(path) -> dict[str, str]:
    parser = configparser.ConfigParser()
    try:
        with open(path) as f:
            parser.read_file(f, source=str(path))
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file: {exc}") from exc
    flat = {}
    for section in parser.sections():
        for key, value in parser[section].items():
            dotted = f"{section}.{key}"
            if dotted not in KNOWN_KEYS:
                raise ConfigError(f"{path}: unknown config key '{dotted}'")
            flat[dotted] = value
    return flat


def apply_overrides(flat: dict[str, str], overrides: list[str]) -> dict[str, str]:
    out = dict(flat)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like section.key=value, got '{item}'")
        key, value = item.split("=", 1)
        key = key.strip()
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown override key '{key}'")
        out[key] = value.strip()
    return out


def build_experiment_config(flat: dict[str, str]) -> ExperimentConfig:
    kwargs: dict = {}
    ene_kwargs: dict = {}
    histograms_path = None
    for dotted, raw in flat.items():
        target, parse = KNOWN_KEYS[dotted]
        try:
            value = parse(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {dotted}: {exc}") from exc
        if target == "ene.histograms_path":
            histograms_path = value
        elif target.startswith("ene."):
            ene_kwargs[target[4:]] = value
        else:
            kwargs[target] = value
    if histograms_path is not None:
        ene_kwargs["imitate_histograms"] = envs.load_histograms_csv(histograms_path)
    kwargs["ene"] = ENEConfig(**ene_kwargs)
    return ExperimentConfig(**kwargs)


# Builtin presets usable anywhere a config path is accepted.
def _preset(**kw) -> dict:
    return kw


PRESETS: dict[str, dict] = {
    "toy_anf_td3": _preset(algorithm="td3", mode="anf"),
    "toy_dense_td3": _preset(algorithm="td3", mode="dense"),
    "toy_static_td3": _preset(algorithm="td3", mode="static_anf"),
    "toy_anf_sac": _preset(algorithm="sac", mode="anf"),
    "toy_dense_sac": _preset(algorithm="sac", mode="dense"),
    "toy_static_sac": _preset(algorithm="sac", mode="static_anf"),
    "toy_anf_td3_pene": _preset(algorithm="td3", mode="anf", pene_period=15_000,
                                ene=ENEConfig(noise_fraction=0.95)),
}


def load_config(path_or_preset, overrides: list[str] | None = None) -> ExperimentConfig:
    """Load an INI config file or a builtin preset name, then apply overrides."""
    import os
    if isinstance(path_or_preset, str) and path_or_preset in PRESETS and \
            not os.path.exists(path_or_preset):
        base = ExperimentConfig(**PRESETS[path_or_preset])
        flat = apply_overrides({}, overrides or [])
        return _merge_into(base, flat)
    if not os.path.exists(path_or_preset):
        raise ConfigError(f"config '{path_or_preset}' is neither a file nor a "
                          f"builtin preset {sorted(PRESETS)}")
    flat = read_config_file(path_or_preset)
    flat = apply_overrides(flat, overrides or [])
    return build_experiment_config(flat)


def _merge_into(base: ExperimentConfig, flat: dict[str, str]) -> ExperimentConfig:
    from dataclasses import replace
    ene = base.ene
    kwargs: dict = {}
    for dotted, raw in flat.items():
        target, parse = KNOWN_KEYS[dotted]
        value = parse(raw)
        if target == "ene.histograms_path":
            ene = replace(ene, distribution="imitate",
                          imitate_histograms=envs.load_histograms_csv(value))
        elif target.startswith("ene."):
            ene = replace(ene, **{target[4:]: value})
        else:
            kwargs[target] = value
    return replace(base, ene=ene, **kwargs)
