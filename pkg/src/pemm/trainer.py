"""Mini-batch training of an MLP backbone with the distance head.

One SGD-with-momentum step per batch updates the network and the class
centers together. Every source of randomness is derived from the config seed,
so a run is bit-reproducible.
"""
import csv
import json
import logging
from dataclasses import dataclass, field, asdict

import numpy as np

from ._rng import rng_for
from .autodiff import NonFiniteError, ParamSet
from .energy import PEParams, pairwise_distances_with_origin
from .head import HeadConfig, normalize_features, predict
from .losses import LossConfig, LossReport, total_loss
from .model import init_mlp, mlp_forward

log = logging.getLogger(__name__)

METRIC_COLUMNS = ["epoch", "lr", "ce", "rce", "clf", "pe", "total", "train_acc", "test_acc",
                  "center_dist_min", "center_dist_mean", "center_dist_max", "center_dist_sum"]


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch, batch, cause):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"training diverged at epoch {epoch}, batch {batch}: {cause}")


@dataclass
class TrainConfig:
    epochs: int = 120
    batch_size: int = 128
    lr: float = 0.01
    lr_drops: tuple = (40, 80)
    momentum: float = 0.9
    weight_decay: float = 1e-4
    seed: int = 0
    widths: tuple = (64, 64)
    feature_dim: int = 16
    loss_cfg: LossConfig = field(default_factory=LossConfig)
    pe_cfg: PEParams = field(default_factory=PEParams)
    head_cfg: HeadConfig = field(default_factory=HeadConfig)

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        self.lr_drops = tuple(int(e) for e in self.lr_drops)
        self.widths = tuple(int(w) for w in self.widths)


@dataclass
class EpochMetrics:
    epoch: int
    lr: float
    report: LossReport
    train_acc: float
    test_acc: float
    center_dist_min: float
    center_dist_mean: float
    center_dist_max: float
    center_dist_sum: float

    def row(self):
        r = self.report
        return [self.epoch, self.lr, r.ce_term, r.rce_term, r.clf_total, r.pe_term, r.grand_total,
                self.train_acc, self.test_acc, self.center_dist_min, self.center_dist_mean,
                self.center_dist_max, self.center_dist_sum]


@dataclass
class Model:
    params: ParamSet
    head_cfg: HeadConfig = field(default_factory=HeadConfig)

    @property
    def centers(self):
        return self.params["centers"]

    def features(self, x):
        z = mlp_forward(self.params, x)
        return normalize_features(z) if self.head_cfg.normalize_features else z

    def predict(self, x):
        return predict(self.features(x), self.centers, self.head_cfg)

    def save(self, stem):
        """Write ``<stem>.bin`` (little-endian float64, concatenated) and ``<stem>.json``."""
        manifest, offset = [], 0
        with open(f"{stem}.bin", "wb") as fh:
            for name in self.params.names():
                arr = np.ascontiguousarray(self.params[name], dtype="<f8")
                fh.write(arr.tobytes())
                manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
                offset += arr.size
        with open(f"{stem}.json", "w") as fh:
            json.dump({"dtype": "float64-le", "params": manifest,
                       "head": asdict(self.head_cfg)}, fh, indent=1)

    @classmethod
    def load(cls, stem):
        with open(f"{stem}.json") as fh:
            meta = json.load(fh)
        flat = np.fromfile(f"{stem}.bin", dtype="<f8")
        values = {}
        for ent in meta["params"]:
            n = int(np.prod(ent["shape"]))
            values[ent["name"]] = flat[ent["offset"]:ent["offset"] + n].reshape(ent["shape"])
        return cls(ParamSet(values), HeadConfig(**meta["head"]))


def init_model(cfg, feature_dim, K, seed=None):
    """MLP weights plus K centers on random directions at radius r0 - beta."""
    seed = cfg.seed if seed is None else seed
    net = init_mlp(feature_dim, cfg.widths, cfg.feature_dim, rng_for(seed, "init:mlp"))
    dirs = rng_for(seed, "init:centers").normal(size=(K, cfg.feature_dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return net, dirs * cfg.pe_cfg.target_distance


def sgd_step(params, grads, velocity, lr, momentum, weight_decay, no_decay=("centers",)):
    """In-place momentum SGD: v = mu*v + (g + wd*w); w -= lr*v."""
    for name in params.names():
        g = grads[name]
        if weight_decay and name not in no_decay:
            g = g + weight_decay * params[name]
        v = momentum * velocity[name] + g
        w = params.values[name] - lr * v
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(w))):
            raise NonFiniteError(f"sgd_step:{name}")
        velocity[name] = v
        params.values[name] = w
    return params, velocity


def lr_at(epoch, cfg):
    drops = sum(1 for e in cfg.lr_drops if e <= epoch)
    return cfg.lr * 10.0 ** (-drops)


@dataclass
class Evaluation:
    accuracy: float
    per_class: np.ndarray


def evaluate(model, ds, labels=None):
    """Accuracy of ``model`` against ``labels`` (default: the dataset's labels)."""
    y = ds.labels if labels is None else np.asarray(labels)
    if len(y) == 0:
        return Evaluation(float("nan"), np.full(ds.K, np.nan))
    pred = model.predict(ds.features)
    hit = pred == y
    per_class = np.array([hit[y == k].mean() if np.any(y == k) else np.nan for k in range(ds.K)])
    return Evaluation(float(hit.mean()), per_class)


def _mean_report(reports):
    n = sum(r.batch_size for r in reports)
    avg = lambda attr: sum(getattr(r, attr) * r.batch_size for r in reports) / n
    r0 = reports[0]
    return LossReport(avg("ce_term"), avg("rce_term"), avg("clf_total"), avg("pe_term"),
                      avg("grand_total"), n, avg("gce_term"), r0.w_ce, r0.w_rce, r0.w_gce, r0.lam)


@dataclass
class TrainResult:
    metrics: list
    model: Model


def train(ds_train, ds_test, cfg, metrics_csv=None, on_epoch=None):
    """Run the full schedule; optionally append one CSV row per epoch."""
    K = ds_train.K
    if K < 2:
        raise ValueError("training needs K >= 2")
    net, centers = init_model(cfg, ds_train.dim, K)
    params = ParamSet({**net.values, "centers": centers})
    velocity = {k: np.zeros_like(v) for k, v in params.values.items()}
    model = Model(params, cfg.head_cfg)
    X, y = ds_train.features, ds_train.labels
    N = len(y)

    writer = None
    fh = None
    if metrics_csv is not None:
        fh = open(metrics_csv, "w", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRIC_COLUMNS)
    metrics = []
    try:
        for epoch in range(cfg.epochs):
            lr = lr_at(epoch, cfg)
            order = rng_for(cfg.seed, f"shuffle:{epoch}").permutation(N)
            reports = []
            for b, start in enumerate(range(0, N, cfg.batch_size)):
                idx = order[start:start + cfg.batch_size]
                try:
                    rep, grads = total_loss(X[idx], y[idx], params, cfg.loss_cfg, cfg.pe_cfg,
                                            cfg.head_cfg)
                    sgd_step(params, grads.grads, velocity, lr, cfg.momentum, cfg.weight_decay)
                except NonFiniteError as exc:
                    raise TrainingDiverged(epoch, b, exc) from exc
                reports.append(rep)
            dist = pairwise_distances_with_origin(params["centers"])
            em = EpochMetrics(
                epoch, lr, _mean_report(reports),
                evaluate(model, ds_train).accuracy,
                evaluate(model, ds_test).accuracy if ds_test is not None else float("nan"),
                float(dist.min()), float(dist.mean()), float(dist.max()), float(dist.sum()))
            metrics.append(em)
            if writer is not None:
                writer.writerow([repr(v) if isinstance(v, float) else v for v in em.row()])
                fh.flush()
            if on_epoch is not None:
                on_epoch(em)
            log.debug("epoch %d lr %.4g total %.5f train %.4f test %.4f", epoch, lr,
                      em.report.grand_total, em.train_acc, em.test_acc)
    finally:
        if fh is not None:
            fh.close()
    return TrainResult(metrics, model)
