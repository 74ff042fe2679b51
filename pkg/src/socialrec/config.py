"""Run configuration: a flat set of typed keys with file and CLI overrides."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

MODELS = ("bpr", "lightgcn", "clsrec")
ABLATIONS = ("none", "no-cl", "no-cl-iia")

_ALIASES = {
    "d": "dim",
    "embedding_dim": "dim",
    "l": "layers",
    "n_layers": "layers",
    "k": "svd_rank",
    "lambda": "reg",
    "learning_rate": "lr",
    "b": "batch_size",
    "gamma_i": "gamma_b",
    "k_list": "ks",
}


@dataclass
class RunConfig:
    model: str = "clsrec"
    ablation: str = "none"
    seed: int = 0
    # propagation
    dim: int = 64
    layers: int = 3
    init_std: float = 0.1
    # low-rank social view
    svd_rank: int = 5
    svd_oversampling: int = 10
    svd_power_iters: int = 4
    svd_on_raw: bool = False
    # objectives
    tau: float = 0.2
    alpha: float = 0.1
    reg: float = 1e-4
    reg_batch_rows: bool = False
    cl_full_batch: bool = False
    # interest alignment; None means 1/dim
    gamma_b: float | None = None
    gamma_s: float | None = None
    gate_hidden: int = 16
    # optimization
    lr: float = 1e-3
    batch_size: int = 2048
    epochs: int = 1000
    eval_every: int = 5
    patience: int = 10
    # evaluation
    ks: tuple[int, ...] = field(default=(10, 20))
    cold_threshold: int = 20

    @property
    def uses_social(self) -> bool:
        return self.model == "clsrec"

    @property
    def uses_alignment(self) -> bool:
        return self.model == "clsrec" and self.ablation != "no-cl-iia"

    @property
    def gamma_behavior(self) -> float:
        return 1.0 / self.dim if self.gamma_b is None else self.gamma_b

    @property
    def gamma_social(self) -> float:
        return 1.0 / self.dim if self.gamma_s is None else self.gamma_s

    def resolved(self) -> "RunConfig":
        """Copy with model/ablation switches applied and values validated."""
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; choose from {MODELS}")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"unknown ablation {self.ablation!r}; choose from {ABLATIONS}")
        if self.ablation != "none" and self.model != "clsrec":
            raise ConfigError("ablations are only valid with model=clsrec")
        cfg = dataclasses.replace(self)
        if cfg.model == "bpr":
            cfg.layers = 0
        if cfg.model != "clsrec" or cfg.ablation != "none":
            cfg.alpha = 0.0
        checks = [
            (cfg.dim >= 1, "dim must be >= 1"),
            (cfg.layers >= 0, "layers must be >= 0"),
            (cfg.svd_rank >= 1, "svd_rank must be >= 1"),
            (cfg.svd_oversampling >= 0, "svd_oversampling must be >= 0"),
            (cfg.svd_power_iters >= 0, "svd_power_iters must be >= 0"),
            (cfg.tau > 0, "tau must be > 0"),
            (cfg.alpha >= 0, "alpha must be >= 0"),
            (cfg.reg >= 0, "reg must be >= 0"),
            (cfg.gate_hidden >= 1, "gate_hidden must be >= 1"),
            (cfg.lr > 0, "lr must be > 0"),
            (cfg.batch_size >= 2, "batch_size must be >= 2"),
            (cfg.epochs >= 1, "epochs must be >= 1"),
            (cfg.eval_every >= 1, "eval_every must be >= 1"),
            (cfg.patience >= 1, "patience must be >= 1"),
            (len(cfg.ks) > 0 and all(k >= 1 for k in cfg.ks), "ks must be positive"),
            (20 in cfg.ks, "ks must include 20 (early stopping uses Recall@20)"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return cfg

    # -- (de)serialization ------------------------------------------------

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["ks"] = list(self.ks)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        return cls().with_values(data)

    def with_values(self, values: dict) -> "RunConfig":
        """Copy with ``values`` applied; strings are parsed to the field type."""
        fields = {f.name: f for f in dataclasses.fields(self)}
        updates = {}
        for raw_key, raw in values.items():
            key = _ALIASES.get(raw_key.strip().lower(), raw_key.strip().lower())
            if key not in fields:
                raise ConfigError(f"unknown config key {raw_key!r}")
            updates[key] = _parse(key, fields[key].type, raw)
        return dataclasses.replace(self, **updates)

    @classmethod
    def from_file(cls, path: str | Path) -> dict:
        """Read ``key = value`` lines (``#`` starts a comment) into a dict."""
        values = {}
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
        return values


def parse_assignments(items) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _parse(key: str, type_name, raw):
    if not isinstance(raw, str):
        if key == "ks":
            return tuple(int(k) for k in raw)
        return raw
    text = raw.strip()
    type_name = str(type_name)
    try:
        if key == "ks":
            return tuple(int(k) for k in text.replace(" ", "").split(",") if k)
        if type_name.startswith("float | None"):
            return None if text.lower() in ("none", "") else float(text)
        if type_name == "bool":
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if type_name == "int":
            return int(text)
        if type_name == "float":
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"invalid value {raw!r} for {key}") from exc
