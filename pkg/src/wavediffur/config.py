"""key=value run configuration with documented defaults.

A config file holds one `key = value` pair per line; `#` starts a
comment. Unknown keys are rejected so typos fail loudly. Every key has a
default (see the dataclass below and the README table).
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import ParamError


@dataclass
class RunConfig:
    # schedule
    T: int = 1000
    beta_min: float = 1e-4
    beta_max: float = 0.02
    # sampler
    lambda_mix: float = 0.5
    match_noise: bool = True
    # networks
    heads: int = 12
    base_width: int = 32
    csp_width: int = 48
    emb_dim: int = 32
    # cascade (r=0 / R=0 mean "derive from the input and --scale")
    r: int = 0
    R: int = 0
    k: int = 2
    mode: str = "csp"
    sigma_hf: float = 0.0
    # trainer
    steps: int = 5000
    batch: int = 8
    lr0: float = 1e-4
    decay: float = 0.8
    decay_every: int = 5000
    seed: int = 0
    lambda1: float = 0.1
    lambda2: float = 2.0
    optimizer: str = "sgd"
    clip_norm: float = 0.0
    checkpoint_every: int = 1000
    cond_weight: float = 1.0


def _parse_value(raw: str, kind, key: str):
    raw = raw.strip()
    if kind is bool:
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ParamError(f"config key {key!r}: expected a boolean, got {raw!r}")
    try:
        return kind(raw)
    except ValueError as e:
        raise ParamError(f"config key {key!r}: cannot parse {raw!r} as {kind.__name__}") from e


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    kinds = {f.name: f.type for f in fields(RunConfig)}
    types = {"int": int, "float": float, "bool": bool, "str": str}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParamError(f"config line {lineno}: expected key = value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in kinds:
            raise ParamError(f"config line {lineno}: unknown key {key!r}")
        kind = kinds[key]
        if isinstance(kind, str):
            kind = types[kind]
        setattr(cfg, key, _parse_value(raw, kind, key))
    return cfg


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    with open(path, "r") as fh:
        return parse_config(fh.read(), base)
