"""Classifier and regularizer losses on top of the distance head.

The fused path (``total_loss``) evaluates the head, the classifier loss and
their gradients in one kernel call. ``total_loss_reference`` builds the same
objective out of autodiff primitives and exists to cross-check it.
"""
from dataclasses import dataclass, asdict

import numpy as np

from . import _kernels
from . import autodiff as ad
from .autodiff import NonFiniteError, ParamSet
from .energy import PEParams, pe_center_op
from .head import HeadConfig, kernel_distances_op, posterior_op
from .model import mlp_op

PROB_FLOOR = _kernels.PROB_FLOOR
LOSS_KINDS = ("pemm", "ce", "sce", "gce")


@dataclass(frozen=True)
class LossConfig:
    """Loss selection and weights.

    ``kind`` picks the objective; the ``use_*`` flags drop single terms for
    ablations. For ``pemm`` the classifier loss is alpha*CE + RCE and the
    center regularizer enters with weight ``lam``; ``sce`` is the same
    classifier loss without the regularizer.
    """

    kind: str = "pemm"
    alpha: float = 0.1
    lam: float = 1.0
    log_zero_value: float = -4.0
    gce_q: float = 0.7
    use_ce: bool = True
    use_rce: bool = True
    use_pe: bool = True

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {LOSS_KINDS}")
        if self.alpha < 0 or self.lam < 0:
            raise ValueError("alpha and lam must be non-negative")
        if not self.log_zero_value < 0:
            raise ValueError("log_zero_value must be negative")
        if not 0 < self.gce_q <= 1:
            raise ValueError("gce_q must lie in (0, 1]")

    def weights(self):
        """Effective (w_ce, w_rce, w_gce, lam) for this configuration."""
        if self.kind == "ce":
            w = (1.0, 0.0, 0.0, 0.0)
        elif self.kind == "gce":
            w = (0.0, 0.0, 1.0, 0.0)
        else:
            lam = self.lam if self.kind == "pemm" else 0.0
            w = (self.alpha, 1.0, 0.0, lam)
        w_ce, w_rce, w_gce, lam = w
        return (w_ce * self.use_ce, w_rce * self.use_rce, w_gce, lam * self.use_pe)


@dataclass
class LossReport:
    ce_term: float
    rce_term: float
    clf_total: float
    pe_term: float
    grand_total: float
    batch_size: int
    gce_term: float = 0.0
    w_ce: float = 0.0
    w_rce: float = 0.0
    w_gce: float = 0.0
    lam: float = 0.0

    def check(self, tol=1e-12):
        clf = self.w_ce * self.ce_term + self.w_rce * self.rce_term + self.w_gce * self.gce_term
        scale = max(1.0, abs(self.grand_total))
        return (abs(clf - self.clf_total) <= tol * scale
                and abs(self.clf_total + self.lam * self.pe_term - self.grand_total) <= tol * scale)

    def as_dict(self):
        return asdict(self)


def _one_hot(labels, K):
    labels = np.asarray(labels)
    q = np.zeros((labels.shape[0], K))
    q[np.arange(labels.shape[0]), labels] = 1.0
    return q


def _label_probs(q, p):
    q = np.atleast_2d(np.asarray(q, dtype=np.float64))
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    if q.ndim == 2 and q.shape == p.shape:
        return q, p
    # integer labels
    return _one_hot(np.atleast_1d(q.ravel().astype(int)), p.shape[1]), p


def ce_loss(q, p):
    """Batch mean of -sum_k q_k log p_k. ``q`` is a distribution or integer labels."""
    q, p = _label_probs(q, p)
    return float(np.mean(-np.sum(q * np.log(np.maximum(p, PROB_FLOOR)), axis=1)))


def rce_loss(q, p, A=-4.0):
    """Batch mean of -sum_k p_k log q_k with log 0 replaced by ``A``."""
    q, p = _label_probs(q, p)
    with np.errstate(divide="ignore"):
        logq = np.where(q > 0, np.log(np.where(q > 0, q, 1.0)), A)
    return float(np.mean(-np.sum(p * logq, axis=1)))


def rce_closed_form(labels, p, A=-4.0):
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    py = p[np.arange(p.shape[0]), np.atleast_1d(labels)]
    return float(np.mean(-A * (1.0 - py)))


def clf_loss(q, p, cfg=LossConfig()):
    return cfg.alpha * ce_loss(q, p) + rce_loss(q, p, cfg.log_zero_value)


def gce_loss(q, p, gce_q=0.7):
    q, p = _label_probs(q, p)
    py = np.sum(q * p, axis=1)
    return float(np.mean((1.0 - py ** gce_q) / gce_q))


def _report(ce, rce, gce, pe, B, w):
    w_ce, w_rce, w_gce, lam = w
    clf = w_ce * ce + w_rce * rce + w_gce * gce
    total = clf + lam * pe
    rep = LossReport(float(ce), float(rce), float(clf), float(pe), float(total), int(B),
                     float(gce), w_ce, w_rce, w_gce, lam)
    for name in ("ce_term", "rce_term", "gce_term", "pe_term", "grand_total"):
        if not np.isfinite(getattr(rep, name)):
            raise NonFiniteError(f"total_loss:{name}")
    return rep


def head_loss_op(z, C, labels, cfg=LossConfig(), head_cfg=HeadConfig()):
    """Fused head+classifier node. Returns (Tensor, (ce, rce, gce))."""
    w_ce, w_rce, w_gce, _ = cfg.weights()
    ce, rce, gce, dz, dC, _ = _kernels.head_loss(
        z.data, C.data, np.asarray(labels, dtype=np.int64), head_cfg.inv_sigma2,
        w_ce, w_rce, cfg.log_zero_value, w_gce, cfg.gce_q)
    value = w_ce * ce + w_rce * rce + w_gce * gce
    node = ad.custom_op("head_loss", value, (z, C), lambda g: (g * dz, g * dC))
    return node, (ce, rce, gce)


def _features(leaves, x, head_cfg):
    z = mlp_op(leaves, x)
    return ad.l2_normalize(z) if head_cfg.normalize_features else z


def total_loss(x, labels, params, cfg=LossConfig(), pe=PEParams(), head_cfg=HeadConfig()):
    """Batch objective: mean classifier loss + lam * center regularizer.

    ``params`` holds the MLP weights and a ``centers`` entry. Returns the
    LossReport and a ParamSet of gradients.
    """
    w = cfg.weights()
    terms = {}

    def fn(leaves, x):
        z = _features(leaves, x, head_cfg)
        clf, (ce, rce, gce) = head_loss_op(z, leaves["centers"], labels, cfg, head_cfg)
        terms.update(ce=ce, rce=rce, gce=gce)
        pe_node = pe_center_op(leaves["centers"], pe)
        terms["pe"] = float(pe_node.data)
        return clf + pe_node * w[3] if w[3] else clf

    _, grads = ad.forward_backward(fn, params, x)
    rep = _report(terms["ce"], terms["rce"], terms["gce"], terms["pe"], len(labels), w)
    return rep, grads


def total_loss_reference(x, labels, params, cfg=LossConfig(), pe=PEParams(),
                         head_cfg=HeadConfig()):
    """Same objective as ``total_loss`` assembled from primitive graph ops."""
    w_ce, w_rce, w_gce, lam = cfg.weights()
    labels = np.asarray(labels)
    K = params["centers"].shape[0]
    logq = np.where(_one_hot(labels, K) > 0, 0.0, cfg.log_zero_value)
    terms = {}

    def fn(leaves, x):
        z = _features(leaves, x, head_cfg)
        p = posterior_op(kernel_distances_op(z, leaves["centers"], head_cfg))
        py = ad.pick(p, labels)
        ce = ad.mean(ad.scale(ad.log(py), -1.0))
        rce = ad.mean(ad.scale(ad.sum(ad.mul(p, ad.Tensor(np.broadcast_to(logq, p.shape))), axis=1), -1.0))
        gce = ad.mean(ad.scale(ad.add(ad.power(py, cfg.gce_q), -1.0), -1.0 / cfg.gce_q))
        C = leaves["centers"]
        Cz = ad.custom_op("pad_origin", np.vstack([np.zeros((1, C.shape[1])), C.data]), (C,),
                          lambda g: (g[1:],))
        iu, ju = np.triu_indices(K + 1, k=1)
        pair_sel = np.zeros((len(iu), K + 1))
        pair_sel[np.arange(len(iu)), iu] = 1.0
        pair_sel[np.arange(len(iu)), ju] -= 1.0
        diff = ad.matmul(ad.Tensor(pair_sel), Cz)
        r = ad.add(ad.sqrt(ad.sum(ad.mul(diff, diff), axis=1)), pe.beta)
        pe_val = ad.sum(ad.add(ad.power(r, -pe.u), ad.scale(ad.power(r, -pe.v), -pe.xi)))
        terms.update(ce=float(ce.data), rce=float(rce.data), gce=float(gce.data), pe=float(pe_val.data))
        out = ad.scale(ce, w_ce) + ad.scale(rce, w_rce) + ad.scale(gce, w_gce)
        return out + ad.scale(pe_val, lam) if lam else out

    _, grads = ad.forward_backward(fn, params, x)
    rep = _report(terms["ce"], terms["rce"], terms["gce"], terms["pe"], len(labels), (w_ce, w_rce, w_gce, lam))
    return rep, grads
