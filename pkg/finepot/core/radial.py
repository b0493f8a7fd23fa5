"""Radial oracles for condenser capacities of concentric balls."""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import minimize

from finepot.classes.errors import ConvergenceError, PreconditionError

SPHERE_AREA = {1: 2.0, 2: 2.0 * math.pi, 3: 4.0 * math.pi}


def _check(r: float, R: float, p: float, dim: int, alpha: float) -> float:
    if dim not in SPHERE_AREA:
        raise PreconditionError(f"dim must be 1, 2 or 3, got {dim}")
    if not 0 < r < R:
        raise PreconditionError(f"need 0 < r < R, got r={r}, R={R}")
    if not p > 1:
        raise PreconditionError(f"p must be > 1, got {p}")
    return dim + alpha


def radial_capacity(r: float, R: float, p: float, dim: int, alpha: float = 0.0) -> float:
    """cap_p(B_r, B_R) for the weight |x|^alpha, from the radial Euler-Lagrange equation."""
    n = _check(r, R, p, dim, alpha)
    omega = SPHERE_AREA[dim]
    if math.isclose(p, n):
        return omega * math.log(R / r) ** (1 - p)
    gamma = (p - n) / (p - 1)
    return omega * abs(gamma) ** (p - 1) * abs(R ** gamma - r ** gamma) ** (1 - p)


def radial_potential(rho: np.ndarray, r: float, R: float, p: float, dim: int, alpha: float = 0.0) -> np.ndarray:
    """Capacitary potential of B_r in B_R evaluated at radii rho (1 inside B_r, 0 outside B_R)."""
    n = _check(r, R, p, dim, alpha)
    rho = np.clip(np.asarray(rho, dtype=float), r, R)
    if math.isclose(p, n):
        return np.log(R / rho) / math.log(R / r)
    gamma = (p - n) / (p - 1)
    return (R ** gamma - rho ** gamma) / (R ** gamma - r ** gamma)


def radial_capacity_brute_force(r: float, R: float, p: float, dim: int, n: int = 400,
                                alpha: float = 0.0) -> float:
    """Direct minimization of the 1D radial energy on geometrically spaced shells."""
    dim_eff = _check(r, R, p, dim, alpha)
    omega = SPHERE_AREA[dim]
    rho = r * (R / r) ** (np.arange(n + 1) / n)
    width = np.diff(rho)
    mid = np.sqrt(rho[:-1] * rho[1:])
    weight = omega * mid ** (dim_eff - 1) * width

    def energy(x):
        u = np.concatenate([[1.0], x, [0.0]])
        slope = np.diff(u) / width
        mag = np.abs(slope)
        total = float(np.sum(weight * mag ** p))
        flux = p * weight * mag ** (p - 1) * np.sign(slope) / width
        grad = flux[:-1] - flux[1:]
        return total, grad

    start = 1.0 - np.arange(1, n) / n
    result = minimize(energy, start, jac=True, method="L-BFGS-B",
                      bounds=[(0.0, 1.0)] * (n - 1),
                      options={"maxiter": 50_000, "ftol": 1e-15, "gtol": 1e-12})
    if not np.isfinite(result.fun):
        raise ConvergenceError("radial brute-force minimization failed", iterations=int(result.nit))
    return float(result.fun)
