"""Flat ``key = value`` experiment configuration.

Blank lines and ``#`` comments are ignored. Unknown keys are rejected, and
``echo`` writes back every effective value including defaults.
"""
from dataclasses import dataclass, fields

from ._rng import derive_seed
from .energy import PEParams
from .head import HeadConfig
from .losses import LOSS_KINDS, LossConfig
from .noise import CIFAR10_ASYMMETRIC_MAP, NoiseSpec
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


def _bool(s):
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _ints(s):
    s = str(s).strip()
    return tuple(int(x) for x in s.split(",") if x.strip()) if s else ()


def parse_class_map(s):
    """``"9:1,2:0"`` or the preset name ``cifar10``."""
    s = str(s).strip()
    if s in ("", "none"):
        return {}
    if s == "cifar10":
        return dict(CIFAR10_ASYMMETRIC_MAP)
    out = {}
    for part in s.split(","):
        try:
            src, dst = part.split(":")
            out[int(src)] = int(dst)
        except ValueError:
            raise ConfigError(f"bad class map entry {part.strip()!r}; expected src:dst") from None
    return out


def format_class_map(m):
    return ",".join(f"{k}:{v}" for k, v in m.items())


@dataclass
class ExperimentConfig:
    seed: int = 0
    out: str = "runs/default"
    dataset: str = "blobs"
    data_path: str = ""
    test_path: str = ""
    standardize: bool = True
    blobs_classes: int = 4
    blobs_dim: int = 16
    blobs_train_per_class: int = 500
    blobs_test_per_class: int = 250
    blobs_center_scale: float = 1.0
    blobs_stddev: float = 1.0
    noise_kind: str = "symmetric"
    noise_rate: float = 0.0
    noise_map: str = "cifar10"
    noise_exact: bool = False
    loss: str = "pemm"
    alpha: float = 0.1
    beta: float = 0.3
    lam: float = 1.0
    sigma: float = 1.0
    log_zero_value: float = -4.0
    gce_q: float = 0.7
    use_ce: bool = True
    use_rce: bool = True
    use_pe: bool = True
    pe_u: float = 3.0
    pe_v: float = 2.0
    pe_xi: float = 2.0
    normalize_features: bool = True
    epochs: int = 120
    batch_size: int = 128
    lr: float = 0.01
    lr_drops: str = "40,80"
    momentum: float = 0.9
    weight_decay: float = 1e-4
    widths: str = "64,64"
    feature_dim: int = 16

    def validate(self):
        try:
            if self.dataset not in ("blobs", "csv", "cifar10"):
                raise ValueError(f"dataset must be blobs, csv or cifar10, got {self.dataset!r}")
            if self.loss not in LOSS_KINDS:
                raise ValueError(f"loss must be one of {LOSS_KINDS}, got {self.loss!r}")
            if self.dataset != "blobs" and not self.data_path:
                raise ValueError(f"dataset={self.dataset} requires data_path")
            self.noise_spec()
            self.train_config()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        return self

    def noise_spec(self):
        cmap = parse_class_map(self.noise_map) if self.noise_kind == "asymmetric" else {}
        return NoiseSpec(self.noise_kind, self.noise_rate, cmap, derive_seed(self.seed, "noise"),
                         self.noise_exact)

    def train_config(self):
        return TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
            lr_drops=_ints(self.lr_drops), momentum=self.momentum,
            weight_decay=self.weight_decay, seed=self.seed, widths=_ints(self.widths),
            feature_dim=self.feature_dim,
            loss_cfg=LossConfig(self.loss, self.alpha, self.lam, self.log_zero_value, self.gce_q,
                                self.use_ce, self.use_rce, self.use_pe),
            pe_cfg=PEParams(self.pe_u, self.pe_v, self.pe_xi, self.beta),
            head_cfg=HeadConfig(self.sigma, self.normalize_features),
        )

    def set(self, key, value):
        types = {f.name: f.type for f in fields(self)}
        if key not in types:
            raise ConfigError(f"unknown config key {key!r}")
        conv = {bool: _bool, int: int, float: float, str: str}[types[key]]
        try:
            setattr(self, key, conv(value))
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None

    def echo(self):
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def parse_config_text(text, cfg=None):
    cfg = ExperimentConfig() if cfg is None else cfg
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        cfg.set(key, value)
    return cfg


def load_config(path):
    with open(path) as fh:
        return parse_config_text(fh.read())
