"""Empirical moment estimators over a particle ensemble.

The gain is assembled from unbiased sample covariances between the state and
the observation map (and its Jacobian).  Both covariance factors are centered
before the product: algebraically identical to centering only one factor, but
it makes the Jacobian covariance vanish *exactly* (all float zeros) whenever
the observation map is affine, which downstream code relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sdesim import FilterModel


@dataclass(frozen=True)
class Ensemble:
    """N state vectors, N >= 2 so the (N-1)-normalized covariances exist."""

    members: np.ndarray

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.members, dtype=float))
        if m.shape[0] < 2:
            raise ValueError("ensemble needs at least two members")
        if not np.all(np.isfinite(m)):
            raise ValueError("ensemble contains non-finite members")
        object.__setattr__(self, "members", m)

    @property
    def size(self) -> int:
        return self.members.shape[0]

    @property
    def dim(self) -> int:
        return self.members.shape[1]

    @property
    def mean(self) -> np.ndarray:
        return self.members.mean(axis=0)


@dataclass(frozen=True)
class GainSet:
    """Moments of one ensemble against one model, frozen at a single step."""

    mean: np.ndarray
    cov_xh: np.ndarray          # (D, d)
    cov_xdh: np.ndarray         # (D, d, D)
    gain: np.ndarray = field(repr=False)        # P-hat = cov_xh C^-1 + B, (D, d)
    correction: np.ndarray = field(repr=False)  # Gamma-hat, (D,)


def empirical_moments(ens: Ensemble, model: FilterModel) -> GainSet:
    """Mean, covariances, gain and drift correction of one ensemble.

    cov_xh[g, j]    = (N-1)^-1 sum_i (X_i - xbar)_g (h(X_i) - hbar)_j
    cov_xdh[g,j,r]  = (N-1)^-1 sum_i (X_i - xbar)_g (Dh(X_i) - Dhbar)_{j,r}
    gain            = cov_xh C^-1 + B
    correction_g    = -1/2 Trace(cov_xdh[g] gain)
    """
    x = ens.members
    n = ens.size
    xbar = x.mean(axis=0)
    xc = x - xbar
    hx = model.h(x)
    dhx = model.dh(x)
    hc = hx - hx.mean(axis=0)
    dhc = dhx - dhx.mean(axis=0)
    cov_xh = xc.T @ hc / (n - 1)
    cov_xdh = np.einsum("ig,ijr->gjr", xc, dhc) / (n - 1)
    gain = cov_xh @ model.C_inv + model.B
    correction = -0.5 * np.einsum("gjr,rj->g", cov_xdh, gain)
    return GainSet(mean=xbar, cov_xh=cov_xh, cov_xdh=cov_xdh,
                   gain=gain, correction=correction)


def gubinelli_contract(cov_xdh: np.ndarray, gain: np.ndarray, second: np.ndarray) -> np.ndarray:
    """Triple contraction pairing the Jacobian covariance, the gain and a
    second-order increment:

        out_g = sum_{j,q,r} cov_xdh[g,j,r] gain[r,q] second[q,j].

    Contracting with the identity matrix instead of ``second`` recovers
    -2 * Gamma-hat componentwise.
    """
    cov_xdh = np.asarray(cov_xdh, dtype=float)
    gain = np.asarray(gain, dtype=float)
    second = np.asarray(second, dtype=float)
    D, d, D2 = cov_xdh.shape
    if gain.shape != (D2, d) or second.shape != (d, d):
        raise ValueError(
            f"inconsistent shapes: cov {cov_xdh.shape}, gain {gain.shape}, second {second.shape}")
    return np.einsum("gjr,rq,qj->g", cov_xdh, gain, second)


def finite_difference_jacobian(h, step: float = 1e-6):
    """Central-difference Dh for observation maps supplied without one.

    Returns a batch-evaluable (N, D) -> (N, d, D) callable; used as a
    fallback for custom maps and cross-checked against analytic Jacobians in
    the tests, never inside the hot filter loop for the built-ins.
    """

    def dh(x):
        x = np.atleast_2d(x)
        n, dim = x.shape
        d = h(x).shape[1]
        out = np.zeros((n, d, dim))
        for r in range(dim):
            e = np.zeros(dim)
            e[r] = step
            out[:, :, r] = (h(x + e) - h(x - e)) / (2.0 * step)
        return out

    return dh
