"""Flat `key = value` config files, with CLI flags taking precedence."""

from __future__ import annotations

from .errors import ConfigError

# Every key any command understands, with its documented default.
KNOWN_KEYS = {
    # synthetic dataset
    "n_subjects": "8",
    "views": "0,30,60,90",
    "seqs_per_view": "2",
    "frames_per_seq": "30",
    # split
    "train_fraction": "0.5",
    # training (see training.TrainConfig for semantics)
    "steps_a": "300", "steps_b1": "200", "steps_b2": "500", "steps_c": "1000",
    "batch_size": "8", "pretrain_batch": "32",
    "lr_encoder": "2e-4", "lr_generator": "2e-4",
    "lr_d_angle": "2e-4", "lr_d_id": "2e-4",
    "w_triplet": "1.0", "w_rec": "1.0", "w_angle": "1.0", "w_id": "1.0",
    "margin": "0.2",
    "checkpoint_every": "0",
    "d_z": "128", "base_channels": "16",
    "image_dims": "128x88",
    "allow_stage_skip": "0",
    "deterministic": "0",
    "seed": "0",
    # evaluation
    "curve_sizes": "4,8,16,32",
    "curve_trials": "3",
    "rank_k": "5",
}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{ln}: expected 'key = value', got {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if not key or not val:
            raise ConfigError(f"{source}:{ln}: empty key or value in {raw!r}")
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{source}:{ln}: unknown key {key!r}")
        out[key] = val
    return out


def load_config(path) -> dict:
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return parse_config_text(text, source=str(path))


def resolve(file_values: dict, overrides: dict) -> dict:
    """Defaults, then file values, then non-None CLI overrides."""
    out = dict(KNOWN_KEYS)
    out.update(file_values)
    for k, v in overrides.items():
        if v is not None:
            if k not in KNOWN_KEYS:
                raise ConfigError(f"unknown config key {k!r}")
            out[k] = str(v)
    return out


def get_int(cfg: dict, key: str) -> int:
    try:
        return int(cfg[key])
    except ValueError as e:
        raise ConfigError(f"{key} must be an integer, got {cfg[key]!r}") from e


def get_float(cfg: dict, key: str) -> float:
    try:
        return float(cfg[key])
    except ValueError as e:
        raise ConfigError(f"{key} must be a number, got {cfg[key]!r}") from e


def get_views(cfg: dict, key: str = "views") -> list:
    try:
        views = [float(tok) for tok in cfg[key].split(",") if tok.strip()]
    except ValueError as e:
        raise ConfigError(f"{key} must be comma-separated angles") from e
    if not views:
        raise ConfigError(f"{key} must name at least one angle")
    return views


def get_int_list(cfg: dict, key: str) -> list:
    try:
        return [int(tok) for tok in cfg[key].split(",") if tok.strip()]
    except ValueError as e:
        raise ConfigError(f"{key} must be comma-separated integers") from e
