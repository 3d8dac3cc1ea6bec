"""Potential-energy regularizer on class centers.

The pair energy is E(r) = 1/r**u - xi/r**v. Class centers, together with the
origin, are pulled toward a configuration in which every pairwise distance
sits at ``r0 - beta`` where ``r0 = argmin E``.
"""
import csv
import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar

from . import _kernels
from .autodiff import custom_op, as_tensor

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    def __init__(self, iteration, reason):
        self.iteration = iteration
        super().__init__(f"center dynamics diverged at iteration {iteration}: {reason}")


@lru_cache(maxsize=64)
def _stable_radius(u, v, xi):
    res = minimize_scalar(lambda r: r ** -u - xi * r ** -v, bounds=(0.01, 10.0),
                          method="bounded", options={"xatol": 1e-12, "maxiter": 500})
    return float(res.x)


@dataclass(frozen=True)
class PEParams:
    u: float = 3
    v: float = 2
    xi: float = 2.0
    beta: float = 0.3

    def __post_init__(self):
        if not (self.u > 0 and self.v > 0 and self.xi > 0):
            raise ValueError("u, v and xi must be positive")
        if not self.u > self.v:
            raise ValueError(f"need u > v for a finite minimum, got u={self.u}, v={self.v}")
        if not 0.0 < self.beta < self.r0:
            raise ValueError(f"beta must lie in (0, r0={self.r0:.6g}), got {self.beta}")

    @property
    def r0(self):
        """Stable radius, found by bounded 1-D minimization of the energy."""
        return _stable_radius(float(self.u), float(self.v), float(self.xi))

    @property
    def target_distance(self):
        return self.r0 - self.beta


def pe_energy(r, p=PEParams()):
    r = np.asarray(r, dtype=np.float64)
    if np.any(r <= 0.0):
        raise ValueError("pe_energy is defined for r > 0 only")
    out = r ** -p.u - p.xi * r ** -p.v
    return float(out) if out.ndim == 0 else out


def pe_energy_derivative(r, p=PEParams()):
    r = np.asarray(r, dtype=np.float64)
    out = -p.u * r ** (-p.u - 1.0) + p.xi * p.v * r ** (-p.v - 1.0)
    return float(out) if out.ndim == 0 else out


def pe_pair_loss(ci, cj, p=PEParams()):
    ci = np.asarray(ci, dtype=np.float64)
    cj = np.asarray(cj, dtype=np.float64)
    if ci.shape != cj.shape:
        raise ValueError(f"dimension mismatch: {ci.shape} vs {cj.shape}")
    return pe_energy(np.linalg.norm(ci - cj) + p.beta, p)


def _check_centers(C):
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] < 1:
        raise ValueError(f"centers must be a K×m matrix, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise ValueError("centers contain non-finite entries")
    return C


def pe_center_loss(C, p=PEParams()):
    """Sum of pair energies over every pair drawn from the origin and the rows of C."""
    return pe_center_value_grad(C, p)[0]


def pe_center_value_grad(C, p=PEParams()):
    C = _check_centers(C)
    return _kernels.pe_center(C, p.u, p.v, p.xi, p.beta)


def pe_center_op(C, p=PEParams()):
    """Graph node for the center regularizer; ``C`` is a Tensor."""
    C = as_tensor(C)
    value, grad = pe_center_value_grad(C.data, p)
    return custom_op("pe_center_loss", value, (C,), lambda g: (g * grad,))


def pe_center_loss_reference(C, p=PEParams()):
    """Literal double loop over pairs, used as an independent check."""
    C = _check_centers(C)
    pts = [np.zeros(C.shape[1])] + list(C)
    total = 0.0
    for i in range(len(pts) - 1):
        for j in range(i + 1, len(pts)):
            total += pe_pair_loss(pts[i], pts[j], p)
    return total


def sq_margin_loss(ci, cj, r0):
    """Hinge-style center margin: max(0, r0 - ||ci - cj||)."""
    ci = np.asarray(ci, dtype=np.float64)
    cj = np.asarray(cj, dtype=np.float64)
    if ci.shape != cj.shape:
        raise ValueError(f"dimension mismatch: {ci.shape} vs {cj.shape}")
    return max(0.0, r0 - float(np.linalg.norm(ci - cj)))


def pairwise_distances_with_origin(C):
    """Distances for every pair among {origin, c_1..c_K}, in (i<j) order."""
    C = np.asarray(C, dtype=np.float64)
    P = np.vstack([np.zeros((1, C.shape[1])), C])
    iu, ju = np.triu_indices(P.shape[0], k=1)
    return np.linalg.norm(P[iu] - P[ju], axis=1)


@dataclass
class CenterDynamics:
    snapshots: list
    snapshot_iters: list
    energies: np.ndarray
    final: np.ndarray
    distances: np.ndarray
    target: float
    simplex_reachable: bool
    params: PEParams = field(default_factory=PEParams)

    @property
    def distance_sum(self):
        return float(self.distances.sum())

    @property
    def expected_sum(self):
        K = self.final.shape[0]
        return K * (K + 1) / 2 * self.target


def simulate_center_dynamics(K, m, p=PEParams(), step=0.01, iters=10_000, seed=0,
                             stride=100, init_scale=None, escape_radius=None):
    """Plain gradient descent on the center regularizer alone.

    Centers start at seeded Gaussian positions. Returns snapshots every
    ``stride`` iterations (plus the initial and final state) and the energy
    at every iteration. A center running beyond ``escape_radius`` (default
    ``100 * r0``) or a non-finite energy raises DivergenceError.
    """
    if m < 1 or K < 1:
        raise ValueError("need K >= 1 and m >= 1")
    if step <= 0:
        raise ValueError("step must be positive")
    target = p.target_distance
    reachable = m >= K
    if not reachable:
        log.warning("m=%d < K=%d: equal-distance configuration is not reachable; "
                    "reporting best-effort distances", m, K)
    rng = np.random.default_rng(seed)
    scale = target if init_scale is None else init_scale
    C = rng.normal(scale=scale, size=(K, m))
    escape = 100.0 * p.r0 if escape_radius is None else escape_radius

    energies = np.empty(iters + 1)
    snaps, snap_iters = [C.copy()], [0]
    for it in range(iters + 1):
        value, grad = _kernels.pe_center(C, p.u, p.v, p.xi, p.beta)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            raise DivergenceError(it, "non-finite energy")
        energies[it] = value
        if it == iters:
            break
        C = C - step * grad
        if not np.all(np.isfinite(C)) or np.max(np.linalg.norm(C, axis=1)) > escape:
            raise DivergenceError(it + 1, f"a center escaped beyond radius {escape:g}")
        if stride and (it + 1) % stride == 0 and it + 1 != iters:
            snaps.append(C.copy())
            snap_iters.append(it + 1)
    if snap_iters[-1] != iters:
        snaps.append(C.copy())
        snap_iters.append(iters)
    return CenterDynamics(snaps, snap_iters, energies, C, pairwise_distances_with_origin(C),
                          target, reachable, p)


def write_trajectory_csv(result, path):
    """Columns: iter, energy, then flattened center coordinates (row-major)."""
    K, m = result.final.shape
    header = ["iter", "energy"] + [f"c{k + 1}_{t}" for k in range(K) for t in range(m)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for it, C in zip(result.snapshot_iters, result.snapshots):
            w.writerow([it, repr(float(result.energies[it]))] + [repr(float(x)) for x in C.ravel()])
