"""Seeded label corruption: symmetric (uniform) and asymmetric (class-map) flips."""
import csv
import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

# TRUCK->AUTOMOBILE, BIRD->AIRPLANE, DEER->HORSE, CAT<->DOG on the usual
# CIFAR-10 class order.
CIFAR10_ASYMMETRIC_MAP = {9: 1, 2: 0, 4: 7, 3: 5, 5: 3}


@dataclass
class NoiseSpec:
    kind: str = "symmetric"
    rate: float = 0.0
    class_map: dict = field(default_factory=dict)
    seed: int = 0
    exact: bool = False

    def __post_init__(self):
        if self.kind not in ("symmetric", "asymmetric"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError(f"noise rate must lie in [0, 1], got {self.rate}")
        if self.kind == "asymmetric":
            _check_map(self.class_map)


def _check_map(class_map):
    for src, dst in class_map.items():
        if src == dst:
            raise ValueError(f"class map entry {src}->{dst} maps a class onto itself")


def _select(n, rate, rng, exact):
    if exact:
        mask = np.zeros(n, dtype=bool)
        mask[rng.permutation(n)[: int(round(rate * n))]] = True
        return mask
    return rng.random(n) < rate


def inject_symmetric(labels, K, rate, seed, exact=False):
    """Flip each selected label to one of the other K-1 classes uniformly.

    Selection is Bernoulli(rate) per sample, or an exact ``round(rate*N)``
    subset when ``exact`` is set. Returns ``(noisy, mask)``.
    """
    if K < 2:
        raise ValueError("symmetric noise needs K >= 2")
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"noise rate must lie in [0, 1], got {rate}")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        raise ValueError(f"labels must lie in [0, {K})")
    rng = np.random.default_rng(seed)
    mask = _select(labels.size, rate, rng, exact)
    # offset in 1..K-1 never maps a label onto itself
    offset = rng.integers(1, K, size=labels.size)
    noisy = np.where(mask, (labels + offset) % K, labels)
    return noisy, mask


def inject_asymmetric(labels, class_map, rate, seed, exact=False):
    """Flip labels of mapped source classes to their target with probability ``rate``."""
    _check_map(class_map)
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"noise rate must lie in [0, 1], got {rate}")
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed)
    eligible = np.isin(labels, list(class_map)) if class_map else np.zeros(labels.size, bool)
    mask = np.zeros(labels.size, dtype=bool)
    mask[eligible] = _select(int(eligible.sum()), rate, rng, exact)
    noisy = labels.copy()
    for src, dst in class_map.items():
        noisy[mask & (labels == src)] = dst
    return noisy, mask


def inject(labels, K, spec):
    if spec.kind == "symmetric":
        return inject_symmetric(labels, K, spec.rate, spec.seed, spec.exact)
    return inject_asymmetric(labels, spec.class_map, spec.rate, spec.seed, spec.exact)


@dataclass
class NoiseAudit:
    confusion: np.ndarray  # [clean, noisy] counts
    rate: float

    @property
    def n(self):
        return int(self.confusion.sum())


def noise_audit(clean, noisy, K=None):
    clean = np.asarray(clean, dtype=np.int64)
    noisy = np.asarray(noisy, dtype=np.int64)
    if clean.shape != noisy.shape:
        raise ValueError(f"length mismatch: {clean.shape} vs {noisy.shape}")
    if K is None:
        K = int(max(clean.max(initial=-1), noisy.max(initial=-1)) + 1)
    conf = np.zeros((K, K), dtype=np.int64)
    np.add.at(conf, (clean, noisy), 1)
    rate = float(np.mean(clean != noisy)) if clean.size else 0.0
    return NoiseAudit(conf, rate)


def write_noise_csv(path, clean, noisy, mask):
    """Columns: index, clean_label, noisy_label, flipped."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "clean_label", "noisy_label", "flipped"])
        for i, (c, n, f) in enumerate(zip(clean, noisy, mask)):
            w.writerow([i, int(c), int(n), int(bool(f))])


def write_audit_csv(path, audit):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        K = audit.confusion.shape[0]
        w.writerow(["realized_rate", repr(audit.rate)])
        w.writerow(["clean\\noisy"] + list(range(K)))
        for k in range(K):
            w.writerow([k] + [int(c) for c in audit.confusion[k]])
