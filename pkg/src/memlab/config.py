"""Experiment configuration: JSON loading, validation and resolution."""

import dataclasses
import hashlib
import itertools
import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .model import Activation, check_centered_derivative
from .training import default_step_size

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "assumption_flags",
    "config_from_dict",
    "config_hash",
    "expand_sweep",
    "load_config",
    "load_preset",
    "preset_names",
    "resolve_config",
]

SEED_ENV = "MEMLAB_SEED"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment. Give either ``m`` or ``alpha`` (``m = floor(alpha d q / ln(d)**4)``).

    ``eta`` is filled in by :func:`resolve_config`; it equals
    ``eta_override`` when that is set and ``m ln(d) / d`` otherwise.
    ``n_holdout`` is the number of held-out examples used for the margin
    decomposition in each replicate.
    """

    d: int
    q: int
    m: int = None
    alpha: float = None
    activation: Activation = field(default_factory=lambda: Activation("abs"))
    sign_mode: str = "iid"
    init: str = "haar"
    seed: int = 1
    replicates: int = 1
    gradient_mode: str = "exact"
    precision: str = "double"
    eta_override: float = None
    allow_invalid_activation: bool = False
    n_holdout: int = 5
    eta: float = None

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(raw) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        kw = dict(raw)
        try:
            if "activation" in kw:
                kw["activation"] = Activation.from_config(kw["activation"])
            return cls(**kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self):
        out = dataclasses.asdict(self)
        out["activation"] = self.activation.to_config()
        return out

    @property
    def dtype(self):
        return np.float64 if self.precision == "double" else np.float32


def _choice(value, allowed, name):
    if value not in allowed:
        raise ConfigError(f"{name} must be one of {allowed}, got {value!r}")


def _integer(value, name):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    return value


def resolve_config(raw):
    """Validate ``raw`` and fill in ``m`` and ``eta``. Idempotent."""
    d = _integer(raw.d, "d")
    q = _integer(raw.q, "q")
    if d < 2:
        raise ConfigError(f"d must be at least 2, got {d}")
    if not 1 <= q <= d:
        raise ConfigError(f"need 1 <= q <= d for orthonormal rows, got q={q}, d={d}")
    _choice(raw.sign_mode, ("iid", "balanced"), "sign_mode")
    _choice(raw.init, ("haar", "basis"), "init")
    _choice(raw.gradient_mode, ("paper", "exact"), "gradient_mode")
    _choice(raw.precision, ("double", "single"), "precision")
    _integer(raw.seed, "seed")
    if _integer(raw.replicates, "replicates") < 1:
        raise ConfigError("replicates must be at least 1")
    if _integer(raw.n_holdout, "n_holdout") < 0:
        raise ConfigError("n_holdout must be nonnegative")

    m = raw.m
    if raw.alpha is not None:
        if raw.alpha <= 0:
            raise ConfigError("alpha must be positive")
        from_alpha = math.floor(raw.alpha * d * q / math.log(d) ** 4)
        if m is not None and m != from_alpha:
            raise ConfigError(f"m={m} disagrees with alpha={raw.alpha} (gives m={from_alpha})")
        m = from_alpha
    if m is None:
        raise ConfigError("one of m or alpha is required")
    if _integer(m, "m") < 1:
        raise ConfigError(f"resolved m must be at least 1, got {m}")

    if raw.eta_override is not None:
        if raw.eta_override < 0:
            raise ConfigError("eta_override must be nonnegative")
        eta = float(raw.eta_override)
    else:
        eta = default_step_size(m, d)
    if raw.eta is not None and not math.isclose(raw.eta, eta, rel_tol=1e-12):
        raise ConfigError(f"eta={raw.eta} disagrees with the resolved step size {eta}")

    _, valid = check_centered_derivative(raw.activation)
    if not valid and not raw.allow_invalid_activation:
        raise ConfigError(
            f"activation {raw.activation.name} has E sigma'(X) != 0; "
            "pass allow_invalid_activation to run it anyway"
        )
    return dataclasses.replace(raw, m=m, eta=eta)


def assumption_flags(cfg):
    """Which of the size assumptions of the one-step result hold for a resolved config."""
    log4 = math.log(cfg.d) ** 4
    return {
        "m_le_dq_over_log4d": cfg.m <= cfg.d * cfg.q / log4,
        "q_ge_log4d": cfg.q >= log4,
        "q_le_d": cfg.q <= cfg.d,
    }


def config_hash(cfg):
    """Short stable hash of the config's canonical JSON (replicate-independent)."""
    blob = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _apply_env(raw, env):
    seed = env.get(SEED_ENV)
    if seed is None or seed == "":
        return raw
    try:
        raw = dict(raw, seed=int(seed, 0))
    except ValueError as exc:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {seed!r}") from exc
    return raw


def load_config(path, env=None):
    """Read a JSON config file; ``MEMLAB_SEED`` in ``env`` overrides its seed."""
    env = os.environ if env is None else env
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(raw, env)


def config_from_dict(raw, env=None):
    """Parse a config object, applying the ``MEMLAB_SEED`` override from ``env``."""
    env = os.environ if env is None else env
    if isinstance(raw, dict):
        raw = _apply_env(raw, env)
    return ExperimentConfig.from_dict(raw)


def expand_sweep(spec, env=None):
    """Configs described by a sweep document.

    Either ``{"configs": [...]}`` or ``{"base": {...}, "grid": {key: [values]}}``;
    the grid is expanded as a Cartesian product in key order, last key fastest.
    A grid value that is an object is merged into the config instead of
    being assigned to ``key``, which lets one axis move several keys
    together (e.g. ``"size": [{"d": 512, "q": 512}, ...]``). Entries are
    returned raw (unresolved) so that a bad entry can be reported in place.
    """
    env = os.environ if env is None else env
    if not isinstance(spec, dict) or not set(spec) <= {"configs", "base", "grid"}:
        raise ConfigError("sweep must be an object with 'configs' or 'base'/'grid'")
    if "configs" in spec:
        if set(spec) != {"configs"}:
            raise ConfigError("'configs' cannot be combined with 'base'/'grid'")
        entries = list(spec["configs"])
    else:
        base = spec.get("base", {})
        grid = spec.get("grid", {})
        keys = list(grid)
        entries = []
        for combo in itertools.product(*grid.values()):
            entry = dict(base)
            for key, value in zip(keys, combo):
                entry.update(value if isinstance(value, dict) else {key: value})
            entries.append(entry)
    return [_apply_env(e, env) if isinstance(e, dict) else e for e in entries]


def load_preset(name):
    """Parsed JSON of a bundled preset, e.g. ``load_preset("default")``."""
    res = resources.files("memlab.presets").joinpath(f"{name}.json")
    if not res.is_file():
        raise ConfigError(f"no preset named {name!r}; available: {', '.join(preset_names())}")
    return json.loads(res.read_text())


def preset_names():
    return sorted(
        r.name[:-5] for r in resources.files("memlab.presets").iterdir() if r.name.endswith(".json")
    )
