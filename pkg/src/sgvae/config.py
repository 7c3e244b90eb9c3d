"""Run configuration: INI-style ``key = value`` sections with typed fields.

Unknown sections or keys are rejected with the offending line, so typos never
silently fall back to defaults.
"""
from __future__ import annotations

import configparser
import copy
import io
import zlib
from pathlib import Path

import numpy as np

from .errors import ConfigError


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _opt_float(text):
    return None if text.strip().lower() in ("", "none") else float(text)


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _words(text):
    return tuple(w for w in text.replace(",", " ").split())


# section -> key -> (parser, default)
SCHEMA = {
    "run": {
        "seed": (int, 0),
        "threads": (int, 1),
    },
    "synth": {
        "kind": (str, "equilibrium"),
        "Q_values": (_floats, (1.0, 2.0, 4.0, 6.0, 8.0)),
        "shots_per_Q": (int, 1000),
        "fluctuation": (float, 0.08),
        "lambda_T": (float, 25.0),
        "dx_fine": (float, 0.1),
        "soliton_mean": (float, 1.0),
        "soliton_width": (_opt_float, None),
        "relax_length": (float, 5.0),
        "sigma_psf": (float, 3.0),
        "pixel_size": (float, 2.0),
        "L": (int, 35),
    },
    "train": {
        "epochs": (int, 128),
        "max_lr": (float, 5e-4),
        "batch": (int, 512),
        "beta": (float, 3.0),
        "gamma": (float, 0.1),
        "alpha": (float, 1e-4),
        "validation_fraction": (float, 0.1),
        "kl_warmup": (float, 0.0),
    },
    "latent": {
        "threshold": (float, 0.5),
        "z_min": (float, -3.0),
        "z_max": (float, 3.0),
        "z_points": (int, 13),
        "samples_per_point": (int, 500),
    },
    "analyze": {
        "estimators": (_words, ("coherence", "corr", "increments", "m4", "histogram")),
        "reference": (int, 0),
        "separations": (_words, ("1", "2", "4")),
        "bins": (int, 32),
        "bootstrap": (int, 0),
        "null_draws": (int, 0),
    },
    "report": {
        "soliton_Q_strong": (float, 8.0),
        "soliton_Q_weak": (float, 1.0),
        "report_shots": (int, 1000),
        "match_tolerance": (float, 0.05),
    },
}


def _render(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_render(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


class RunConfig:
    """Typed view of a config file; ``cfg["train"]["epochs"]`` etc."""

    def __init__(self, sections: dict | None = None):
        self.sections = {name: {k: d for k, (_, d) in keys.items()} for name, keys in SCHEMA.items()}
        for name, values in (sections or {}).items():
            for key, value in values.items():
                self.set(name, key, value)

    def __getitem__(self, section):
        return self.sections[section]

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.sections == other.sections

    def set(self, section, key, value):
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in section [{section}]")
        parser = SCHEMA[section][key][0]
        if isinstance(value, str):
            value = parser(value)
        elif parser is _floats:
            value = tuple(float(v) for v in value)
        elif parser is _words:
            value = tuple(str(v) for v in value)
        self.sections[section][key] = value

    def with_overrides(self, **sections) -> "RunConfig":
        out = RunConfig()
        out.sections = copy.deepcopy(self.sections)
        for name, values in sections.items():
            for key, value in values.items():
                out.set(name, key, value)
        return out

    def to_text(self) -> str:
        lines = []
        for name, values in self.sections.items():
            lines.append(f"[{name}]")
            lines += [f"{k} = {_render(v)}" for k, v in values.items()]
            lines.append("")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {name: {k: list(v) if isinstance(v, tuple) else v for k, v in vals.items()}
                for name, vals in self.sections.items()}

    # -- derived objects --------------------------------------------------------

    def dataset_spec(self, seed=None, **overrides):
        from .sampler import DatasetSpec, ImagingConfig

        s = dict(self["synth"])
        imaging = ImagingConfig(sigma_psf=s.pop("sigma_psf"), pixel_size=s.pop("pixel_size"), L=s.pop("L"))
        s.update(overrides)
        if seed is None:
            seed = sub_seed(self["run"]["seed"], "synth")
        return DatasetSpec(imaging=imaging, seed=seed, **s)

    def train_config(self):
        from .vae import TrainConfig

        return TrainConfig(seed=sub_seed(self["run"]["seed"], "train"), threads=self["run"]["threads"], **self["train"])

    def z_grid(self):
        lat = self["latent"]
        return np.linspace(lat["z_min"], lat["z_max"], lat["z_points"])


def parse(text: str, source="<config>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=(";",))
    cp.optionxform = str  # keys are case sensitive (Q_values, L)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    cfg = RunConfig()
    for section in cp.sections():
        for key, raw in cp.items(section):
            try:
                cfg.set(section, key, raw)
            except (ConfigError, ValueError, TypeError) as exc:
                line = _find_line(text, section, key)
                raise ConfigError(f"{source}:{line}: [{section}] {key} = {raw!r}: {exc}") from None
    _validate(cfg, source)
    return cfg


def _find_line(text, section, key):
    current = None
    for n, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
        elif current == section and s.split("=", 1)[0].strip() == key:
            return n
    return "?"


def _validate(cfg: RunConfig, source):
    try:
        cfg.dataset_spec()
        cfg.train_config()
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    if cfg["run"]["seed"] < 0 or cfg["run"]["seed"] >= 2**64:
        raise ConfigError(f"{source}: [run] seed must be an unsigned 64-bit integer")
    lat = cfg["latent"]
    if lat["z_points"] < 0 or lat["samples_per_point"] < 1 or not lat["z_min"] <= lat["z_max"]:
        raise ConfigError(f"{source}: [latent] needs z_min <= z_max, z_points >= 0, samples_per_point >= 1")


def load(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse(text, source=str(path))


def sub_seed(seed: int, name: str) -> int:
    """Named child seed of the top-level seed (stable across runs and platforms)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(zlib.crc32(name.encode()),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
