"""Built-in verification battery.

Each check computes a scalar error and compares it against a fixed tolerance.
The gradient checks look up their analytic gradient functions in
``GRADIENT_FNS`` so that individual entries can be swapped out (fault
injection in tests).
"""
import time
from dataclasses import dataclass, asdict

import numpy as np

from . import _kernels
from . import autodiff as ad
from .autodiff import ParamSet, finite_diff_check
from .energy import PEParams, pe_energy_derivative, pe_center_value_grad
from .head import HeadConfig, posterior_from_features, predict, sq_distances
from .losses import LossConfig, rce_closed_form, rce_loss, total_loss, total_loss_reference
from .model import init_mlp


@dataclass
class CheckResult:
    name: str
    value: float
    tol: float
    passed: bool
    seconds: float
    detail: str = ""


def _head_grad_fn(w_ce, w_rce, w_gce=0.0, A=-4.0):
    def fn(params, labels):
        ce, rce, gce, dz, dC, _ = _kernels.head_loss(params["z"], params["C"], labels, 1.0,
                                                     w_ce, w_rce, A, w_gce, 0.7)
        return w_ce * ce + w_rce * rce + w_gce * gce, {"z": dz, "C": dC}
    return fn


def _pe_grad_fn(params, labels=None):
    value, grad = pe_center_value_grad(params["C"], PEParams())
    return value, {"C": grad}


def _total_grad_fn(params, batch):
    x, y = batch
    rep, grads = total_loss(x, y, params, LossConfig(), PEParams(), HeadConfig())
    return rep.grand_total, grads.grads


GRADIENT_FNS = {
    "ce": _head_grad_fn(1.0, 0.0),
    "rce": _head_grad_fn(0.0, 1.0),
    "clf": _head_grad_fn(0.1, 1.0),
    "pe": _pe_grad_fn,
    "total": _total_grad_fn,
}


def _grad_check(key, points, h=1e-5, n_coords=None, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(points):
        if key == "total":
            params = init_mlp(6, (8, 8), 4, rng)
            for name in params.names():
                if name.startswith("b"):
                    # zero biases can leave a sample with an all-zero feature row
                    params[name] = rng.normal(scale=0.1, size=params[name].shape)
            params["centers"] = rng.normal(size=(3, 4)) * 0.45
            aux = (rng.normal(size=(10, 6)), rng.integers(0, 3, 10))
        elif key == "pe":
            params = ParamSet({"C": rng.normal(size=(4, 5)) * 0.5})
            aux = None
        else:
            params = ParamSet({"z": rng.normal(size=(6, 5)), "C": rng.normal(size=(4, 5))})
            aux = rng.integers(0, 4, 6)
        fn = GRADIENT_FNS[key]
        _, analytic = fn(params, aux)
        rep = finite_diff_check(lambda ps: fn(ps, aux)[0], params, analytic, h=h, tol=1e-4,
                                n_coords=n_coords, rng=rng)
        if rep.failure:
            return np.inf, rep.failure
        worst = max(worst, rep.max_rel_err)
    return worst, ""


def _primitive_grad_check(seed=0):
    """Each autodiff primitive against central differences, away from kinks."""
    rng = np.random.default_rng(seed)
    w = rng.normal(size=4)
    cases = {
        "matmul": lambda P: ad.sum(ad.matmul(P["a"], P["b"])),
        "add_bias": lambda P: ad.sum(ad.power(ad.add_bias(P["a"], P["v"]), 2)),
        "relu": lambda P: ad.sum(ad.mul(ad.relu(P["a"]), P["a"])),
        "exp": lambda P: ad.sum(ad.exp(P["a"])),
        "log": lambda P: ad.sum(ad.log(ad.exp(P["a"]))),
        "power": lambda P: ad.sum(ad.power(ad.exp(P["a"]), 2.5)),
        "l2_normalize": lambda P: ad.sum(ad.matmul(ad.l2_normalize(P["a"]), ad.Tensor(w[:, None]))),
        "sum": lambda P: ad.sum(ad.power(ad.sum(P["a"], axis=0), 2)),
        "mean": lambda P: ad.power(ad.mean(P["a"]), 3),
        "sq_distances": lambda P: ad.sum(ad.exp(ad.scale(ad.sq_distances(P["a"], P["c"]), -1.0))),
    }
    worst = 0.0
    for _ in range(5):
        a = rng.normal(size=(3, 4))
        a[np.abs(a) < 1e-2] = 0.5  # keep ReLU probes off the kink
        P = ParamSet({"a": a, "b": rng.normal(size=(4, 2)), "v": rng.normal(size=4),
                      "c": rng.normal(size=(5, 4))})
        for name, build in cases.items():
            out, g = ad.forward_backward(lambda leaves, _b=build: _b(leaves), P)
            rep = finite_diff_check(lambda ps, _b=build: float(_b({k: ad.Tensor(v) for k, v in ps.values.items()}).data),
                                    P, g, h=1e-5, tol=1e-6)
            if rep.failure:
                return np.inf, f"{name}: {rep.failure}"
            worst = max(worst, rep.max_rel_err)
    return worst, ""


def _timed(name, tol, fn, *args, below=True):
    t = time.perf_counter()
    value, detail = fn(*args)
    dt = time.perf_counter() - t
    passed = bool(np.isfinite(value) and (value <= tol if below else value >= tol))
    return CheckResult(name, float(value), tol, passed, dt, detail)


def _stable_radius():
    p = PEParams()
    return max(abs(p.r0 - 0.75), 0.0), f"r0={p.r0:.9f}"


def _slope_at_r0():
    return abs(pe_energy_derivative(0.75)), ""


def _posterior_rows(n=20_000, seed=0):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(n, 8))
    C = rng.normal(size=(5, 8))
    p = posterior_from_features(z, C)
    err = float(np.max(np.abs(p.sum(axis=1) - 1.0)))
    brute = np.array([min(range(5), key=lambda k: float(np.sum((zz - C[k]) ** 2))) for zz in z[:2000]])
    mismatch = int(np.sum(predict(z[:2000], C) != brute))
    return err + mismatch, f"max|row sum-1|={err:.3g}, predict mismatches={mismatch}"


def _rce_identity(n=10_000, seed=0):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(6), size=n)
    y = rng.integers(0, 6, n)
    full = np.array([rce_loss(y[i:i + 1], p[i:i + 1], -4.0) for i in range(0, n, 97)])
    closed = np.array([rce_closed_form(y[i:i + 1], p[i:i + 1], -4.0) for i in range(0, n, 97)])
    return float(np.max(np.abs(full - closed))), ""


def _fused_vs_reference(seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for kind in ("pemm", "ce", "sce", "gce"):
        params = init_mlp(6, (8,), 4, rng)
        params["centers"] = rng.normal(size=(3, 4)) * 0.45
        x, y = rng.normal(size=(9, 6)), rng.integers(0, 3, 9)
        r1, g1 = total_loss(x, y, params, LossConfig(kind=kind))
        r2, g2 = total_loss_reference(x, y, params, LossConfig(kind=kind))
        worst = max(worst, abs(r1.grand_total - r2.grand_total),
                    *(float(np.max(np.abs(g1.grads[k] - g2.grads[k]))) for k in params))
    return worst, ""


def _backends_agree(seed=0):
    rng = np.random.default_rng(seed)
    z, C, y = rng.normal(size=(20, 7)), rng.normal(size=(5, 7)), rng.integers(0, 5, 20)
    a = _kernels.head_loss_numpy(z, C, y, 0.8, 0.1, 1.0, -4.0, 0.3, 0.7)
    b = _kernels._head_loss_jit_entry(z, C, y, 0.8, 0.1, 1.0, -4.0, 0.3, 0.7)
    worst = max(float(np.max(np.abs(np.asarray(u) - np.asarray(v)))) for u, v in zip(a, b))
    pa = _kernels.pe_center_numpy(C, 3, 2, 2.0, 0.3)
    pb = _kernels._pe_center_jit_entry(C, 3, 2, 2.0, 0.3)
    worst = max(worst, abs(pa[0] - pb[0]), float(np.max(np.abs(pa[1] - pb[1]))))
    return worst, ""


def run_checks(grad_points=20):
    """Run every check and return a list of CheckResult."""
    results = [
        _timed("stable_radius", 1e-6, _stable_radius),
        _timed("energy_slope_at_r0", 1e-9, _slope_at_r0),
        _timed("primitive_gradients", 1e-6, _primitive_grad_check),
    ]
    for key in ("ce", "rce", "clf", "pe"):
        results.append(_timed(f"gradient_{key}", 1e-4, _grad_check, key, grad_points))
    results.append(_timed("gradient_total", 1e-4, _grad_check, "total", grad_points, 1e-5, 20))
    results += [
        _timed("posterior_contract", 1e-12, _posterior_rows),
        _timed("rce_identity", 1e-12, _rce_identity),
        _timed("fused_vs_reference", 1e-10, _fused_vs_reference),
        _timed("numba_vs_numpy", 1e-10, _backends_agree),
    ]
    return results


def report_json(results):
    return {"passed": all(r.passed for r in results),
            "checks": [asdict(r) for r in results]}
