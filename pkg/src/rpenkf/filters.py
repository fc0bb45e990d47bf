"""Ensemble filter steps, the state-parameter embedding, full-run drivers,
and the analytic references used to validate them.

Two step rules are provided.  The baseline ensemble update consumes only the
path increment dY.  The rough-path variant additionally consumes a
second-order increment dYY and adds two terms, a contraction of the Jacobian
covariance against dYY and the drift correction Gamma-hat * dt, both
evaluated on the pre-step ensemble.  For affine observation maps both terms
are exactly zero and the two rules coincide bitwise under shared noise.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .ensemble import Ensemble, GainSet, empirical_moments, gubinelli_contract
from .roughpath import LiftedSeries, TimeGrid
from .sdesim import DriftMap, FilterModel, Trajectory, _noise_sqrt

DIVERGENCE_NORM = 1e8


# ---------------------------------------------------------------------------
# state-parameter embedding


@dataclass(frozen=True)
class GaussianPrior:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.asarray(self.cov, dtype=float)
        if cov.ndim == 0:
            cov = np.eye(mean.size) * float(cov)
        elif cov.ndim == 1:
            cov = np.diag(cov)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "_sqrt", np.linalg.cholesky(cov + 0.0))

    def sample(self, n: int, rng) -> np.ndarray:
        return self.mean + rng.standard_normal((n, self.mean.size)) @ self._sqrt.T


@dataclass(frozen=True)
class ParamDrift:
    """Drift F(z, theta) with partial Jacobians in z and theta, batch form."""

    dim_z: int
    dim_theta: int
    fn: Callable = field(repr=False)        # (N,d),(N,p) -> (N,d)
    jac_z: Callable = field(repr=False)     # -> (N,d,d)
    jac_theta: Callable = field(repr=False) # -> (N,d,p)


def scaled_drift(g: DriftMap) -> ParamDrift:
    """F(z, theta) = theta * g(z) for a scalar parameter."""

    def fn(z, th):
        return th * g.fn(z)

    def jac_z(z, th):
        return th[:, :, None] * g.jac(z)

    def jac_theta(z, th):
        return g.fn(z)[:, :, None]

    return ParamDrift(dim_z=g.dim_in, dim_theta=1, fn=fn, jac_z=jac_z, jac_theta=jac_theta)


@dataclass(frozen=True)
class EmbeddedModel:
    """Joint model for the elevated state (z, theta).

    The parameter block carries no intrinsic noise and U replicates the
    z-block noise, so the observation shares the signal's Brownian source:
    dY = dZ + R^{1/2} dV contains G_Z^{1/2} dW.
    """

    model: FilterModel
    dim_z: int
    dim_theta: int
    prior: GaussianPrior

    def sample_prior(self, n: int, rng) -> np.ndarray:
        return self.prior.sample(n, rng)


def embed_state_parameter(drift: ParamDrift, G_z_sqrt, R, prior: GaussianPrior) -> EmbeddedModel:
    """Build the joint filtering model for combined state-parameter estimation.

    f(z, theta) = (F(z, theta), 0),  h(z, theta) = F(z, theta),
    G^{1/2} = [[G_Z^{1/2}], [0]],  U = G_Z^{1/2} (shared noise source).
    """
    d, p = drift.dim_z, drift.dim_theta
    G_z_sqrt = np.atleast_2d(np.asarray(G_z_sqrt, dtype=float))
    if G_z_sqrt.shape[0] != d:
        raise ValueError(f"G_Z_sqrt must have {d} rows")
    if prior.mean.size != d + p:
        raise ValueError("prior must cover the joint (z, theta) vector")
    m = G_z_sqrt.shape[1]
    G_sqrt = np.vstack([G_z_sqrt, np.zeros((p, m))])
    R_sqrt = _noise_sqrt(R, d)

    def f(x):
        z, th = x[:, :d], x[:, d:]
        return np.hstack([drift.fn(z, th), np.zeros((x.shape[0], p))])

    def h(x):
        return drift.fn(x[:, :d], x[:, d:])

    def dh(x):
        z, th = x[:, :d], x[:, d:]
        return np.concatenate([drift.jac_z(z, th), drift.jac_theta(z, th)], axis=2)

    model = FilterModel(f=f, h=h, dh=dh, G_sqrt=G_sqrt, U=G_z_sqrt, R_sqrt=R_sqrt,
                        dim_state=d + p, dim_obs=d)
    return EmbeddedModel(model=model, dim_z=d, dim_theta=p, prior=prior)


# ---------------------------------------------------------------------------
# filter steps


@dataclass
class FilterState:
    ensemble: np.ndarray
    k: int
    model: FilterModel
    dt: float
    rng: np.random.Generator
    diverged: bool = False

    @property
    def moments(self) -> GainSet:
        return empirical_moments(Ensemble(self.ensemble), self.model)


def _advance(state: FilterState, d_obs: np.ndarray, d_second) -> FilterState:
    """One explicit step; moments frozen at the pre-step ensemble.

    The draw xi feeds both the signal noise term and its replica inside the
    innovation (correlated-noise contract); eta is independent.  When
    d_second is given, the Jacobian-covariance contraction and Gamma-hat * dt
    are added on top of the baseline update.
    """
    model = state.model
    x = state.ensemble
    n = x.shape[0]
    draw = state.rng.standard_normal((n, model.dim_noise + model.dim_obs))
    return _advance_with_noise(state, d_obs, d_second,
                               draw[:, :model.dim_noise], draw[:, model.dim_noise:])


def _advance_with_noise(state: FilterState, d_obs, d_second, xi, eta) -> FilterState:
    model, dt = state.model, state.dt
    x = state.ensemble
    if state.diverged:
        return FilterState(x, state.k + 1, model, dt, state.rng, diverged=True)
    sq = np.sqrt(dt)
    hx = model.h(x)
    n = x.shape[0]
    hc = hx - np.add.reduce(hx, 0) * (1.0 / n)
    # summing x against the centered h factor equals the doubly centered sum
    cov_xh = x.T @ hc / (n - 1)
    gain = cov_xh @ model.C_inv + model.B
    innov = d_obs[None, :] - hx * dt - eta @ (sq * model.R_sqrt.T)
    if model._u_nonzero:
        innov -= xi @ (sq * model.U.T)
    x_new = x + model.f(x) * dt + xi @ (sq * model.G_sqrt.T) + innov @ gain.T
    if d_second is not None:
        xc = x - x.mean(axis=0)
        dhx = model.dh(x)
        dhc = dhx - dhx.mean(axis=0)
        cov_xdh = np.einsum("ig,ijr->gjr", xc, dhc) / (n - 1)
        correction = -0.5 * np.einsum("gjr,rj->g", cov_xdh, gain)
        # The controlled-path derivative of the gain carries C^{-1}; feeding the
        # whitened increment dYY C^{-1} makes the pair (second-order term,
        # correction * dt) cancel in expectation on true-model data for any C.
        x_new = (x_new + gubinelli_contract(cov_xdh, gain, d_second @ model.C_inv)
                 + correction * dt)
    # abs-max is NaN/inf aware: comparisons with NaN are False
    mx = float(np.abs(x_new).max())
    diverged = not mx <= DIVERGENCE_NORM
    if diverged:
        x_new = x  # keep the last finite ensemble
    return FilterState(x_new, state.k + 1, model, dt, state.rng, diverged=diverged)


def enkf_step(state: FilterState, d_obs: np.ndarray, noise=None) -> FilterState:
    """Baseline ensemble update driven by the path increment only.

    ``noise`` optionally supplies the (xi, eta) draws, for coupling runs
    across resolutions or batching generation; by default the state's own
    generator is consumed.
    """
    if noise is not None:
        return _advance_with_noise(state, np.asarray(d_obs, dtype=float), None,
                                   noise[0], noise[1])
    return _advance(state, np.asarray(d_obs, dtype=float), None)


def rp_enkf_step(state: FilterState, d_obs: np.ndarray, d_second: np.ndarray,
                 noise=None) -> FilterState:
    """Ensemble update driven by first- and second-order increments."""
    if noise is not None:
        return _advance_with_noise(state, np.asarray(d_obs, dtype=float),
                                   np.asarray(d_second, dtype=float), noise[0], noise[1])
    return _advance(state, np.asarray(d_obs, dtype=float),
                    np.asarray(d_second, dtype=float))


# ---------------------------------------------------------------------------
# full runs


@dataclass
class RunRecord:
    """Per-step ensemble statistics of one filter run."""

    times: np.ndarray
    means: np.ndarray        # (n_rows, D)
    theta_var: np.ndarray    # (n_rows, p)
    diverged: bool
    diverged_at: int | None
    metadata: dict

    def to_csv(self, path) -> None:
        D = self.means.shape[1]
        p = self.theta_var.shape[1]
        header = (["t"] + [f"mean_{i+1}" for i in range(D)]
                  + [f"var_theta_{i+1}" for i in range(p)] + ["diverged"])
        rows = []
        for i, t in enumerate(self.times):
            flag = int(self.diverged and self.diverged_at is not None and i >= self.diverged_at)
            rows.append(",".join([repr(float(t))]
                                 + [repr(float(v)) for v in self.means[i]]
                                 + [repr(float(v)) for v in self.theta_var[i]]
                                 + [str(flag)]))
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            fh.write("\n".join(rows) + "\n")
        meta_path = str(path) + ".meta.json"
        with open(meta_path, "w") as fh:
            json.dump(self.metadata, fh, indent=1, sort_keys=True)


def config_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def run_filter(model: FilterModel, prior_sampler, lift: LiftedSeries, n_particles: int,
               seed, scheme: str = "rp_enkf", n_theta: int = 0,
               on_divergence: str = "stop", noise=None, metadata=None) -> RunRecord:
    """Drive a filter over every step of a lifted observation series.

    The initial ensemble is drawn i.i.d. from ``prior_sampler(N, rng)``; each
    step consumes (dY_k, dYY_k).  The trailing ``n_theta`` state components
    are treated as parameters and their ensemble variance is recorded.  On
    divergence the record keeps the rows up to the event and either stops
    ("stop") or logs NaN rows to the horizon ("nan").
    """
    if scheme not in ("enkf", "rp_enkf"):
        raise ValueError(f"unknown scheme '{scheme}'")
    if n_particles < 2:
        raise ValueError("need at least two particles")
    rng = np.random.default_rng(seed)
    x0 = np.asarray(prior_sampler(n_particles, rng), dtype=float)
    grid = lift.grid
    state = FilterState(x0, 0, model, grid.dt, rng)
    n = grid.n_steps
    D = model.dim_state
    means = np.full((n + 1, D), np.nan)
    tvar = np.full((n + 1, max(n_theta, 0)), np.nan)
    d_obs = lift.path.increments
    d_second = lift.second_order

    def record(i, ens):
        means[i] = ens.mean(axis=0)
        if n_theta > 0:
            tvar[i] = ens[:, D - n_theta:].var(axis=0, ddof=1)

    record(0, state.ensemble)
    diverged_at = None
    for k in range(n):
        if noise is not None:
            state = _advance_with_noise(state, d_obs[k],
                                        d_second[k] if scheme == "rp_enkf" else None,
                                        noise[0][k], noise[1][k])
        elif scheme == "rp_enkf":
            state = rp_enkf_step(state, d_obs[k], d_second[k])
        else:
            state = enkf_step(state, d_obs[k])
        if state.diverged and diverged_at is None:
            diverged_at = k + 1
            if on_divergence == "stop":
                break
        record(k + 1, state.ensemble)
    rows = slice(0, (diverged_at if (diverged_at is not None and on_divergence == "stop") else n) + 1)
    meta = dict(metadata or {})
    seed_repr = int(seed) if isinstance(seed, (int, np.integer)) else [int(s) for s in seed]
    meta.update({"scheme": scheme, "n_particles": n_particles, "seed": seed_repr,
                 "n_steps": n, "dt": grid.dt, "diverged": diverged_at is not None})
    return RunRecord(times=grid.times[rows], means=means[rows], theta_var=tvar[rows],
                     diverged=diverged_at is not None, diverged_at=diverged_at,
                     metadata=meta)


# ---------------------------------------------------------------------------
# analytic references


def kalman_bucy_reference(F, H, G_sqrt, U, R, m0, S0, grid: TimeGrid, d_obs):
    """Exact Gaussian filter for the linear model, consuming the same data.

    Covariance by RK4 on the matrix Riccati flow

        dS/dt = F S + S F' + G - K C K',  K = (S H' + G^{1/2} U') C^{-1},

    mean by the Euler recursion m += F m dt + K (dY - H m dt) using the
    covariance at the left endpoint.  Raises if the covariance drifts away
    from symmetric positive semidefinite.
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    G_sqrt = np.atleast_2d(np.asarray(G_sqrt, dtype=float))
    U = np.atleast_2d(np.asarray(U, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    C = U @ U.T + R
    C_inv = np.linalg.inv(C)
    G = G_sqrt @ G_sqrt.T
    GU = G_sqrt @ U.T
    dt = grid.dt
    n = grid.n_steps
    d_obs = np.asarray(d_obs, dtype=float)
    if d_obs.shape[0] != n:
        raise ValueError("need one observation increment per grid step")

    def riccati(S):
        K = (S @ H.T + GU) @ C_inv
        return F @ S + S @ F.T + G - K @ C @ K.T

    D = F.shape[0]
    means = np.zeros((n + 1, D))
    covs = np.zeros((n + 1, D, D))
    m = np.atleast_1d(np.asarray(m0, dtype=float)).copy()
    S = np.atleast_2d(np.asarray(S0, dtype=float)).copy()
    means[0], covs[0] = m, S
    for k in range(n):
        K = (S @ H.T + GU) @ C_inv
        m = m + F @ m * dt + K @ (d_obs[k] - H @ m * dt)
        k1 = riccati(S)
        k2 = riccati(S + 0.5 * dt * k1)
        k3 = riccati(S + 0.5 * dt * k2)
        k4 = riccati(S + dt * k3)
        S = S + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        S = 0.5 * (S + S.T)
        if (k % 20 == 0 or k == n - 1) and \
                np.linalg.eigvalsh(S).min() < -1e-8 * max(1.0, np.abs(S).max()):
            raise ArithmeticError(f"covariance lost positive semidefiniteness at step {k}")
        means[k + 1], covs[k + 1] = m, S
    return means, covs


def mle_estimator(f: DriftMap, Z: Trajectory) -> float:
    """Left-point drift estimator sum f(Z_k).dZ_k / sum |f(Z_k)|^2 dt."""
    z = Z.states
    fz = f.fn(z[:-1])
    dz = np.diff(z, axis=0)
    denom = float((fz**2).sum() * Z.grid.dt)
    if denom <= 0.0:
        raise ZeroDivisionError("degenerate drift normalization")
    return float((fz * dz).sum() / denom)


def rp_mle_estimator(f: DriftMap, lift: LiftedSeries, trace_jac=None) -> float:
    """Second-order drift estimator.

    The numerator expands the integral of f against the lifted series as
    f(Z_k).dZ_k + Df(Z_k):dZZ_k and subtracts the divergence-type term
    1/2 * trace(Df)(Z_k) dt, so that on a true Ito trajectory with the
    matching lift it reproduces :func:`mle_estimator` up to discretization.
    """
    z = lift.path.values
    dt = lift.grid.dt
    fz = f.fn(z[:-1])
    dz = lift.path.increments
    jac = f.jac(z[:-1])
    if trace_jac is None:
        traces = np.trace(jac, axis1=1, axis2=2)
    else:
        traces = np.asarray(trace_jac(z[:-1]), dtype=float)
    second = np.einsum("kab,kba->k", jac, lift.second_order)
    denom = float((fz**2).sum() * dt)
    if denom <= 0.0:
        raise ZeroDivisionError("degenerate drift normalization")
    numer = float((fz * dz).sum() + second.sum() - 0.5 * traces.sum() * dt)
    return numer / denom


def analytic_param_posterior(g_along_obs: np.ndarray, G_tilde, var0: float, grid: TimeGrid,
                             trace_dg_along_obs=None):
    """Closed-form posterior for the noiseless linear-in-parameter model.

    ``g_along_obs`` holds g(Y_k), shape (n_steps+1, d).  The variance path is

        Var(t) = ( int_0^t g(Y_s)' Gtilde^{-1} g(Y_s) ds + Var(0)^{-1} )^{-1}

    by trapezoid quadrature.  The returned updater integrates the mean
    dynamics  dm = Var g' Gtilde^{-1} (dY - g m dt) - 1/2 Var trace(Dg) dt
    in expectation form over supplied observation increments.
    """
    if var0 <= 0:
        raise ValueError("var0 must be positive")
    g = np.atleast_2d(np.asarray(g_along_obs, dtype=float))
    G_tilde = np.atleast_2d(np.asarray(G_tilde, dtype=float))
    Gi = np.linalg.inv(G_tilde)
    quad = np.einsum("ka,ab,kb->k", g, Gi, g)
    dt = grid.dt
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (quad[1:] + quad[:-1]) * dt)])
    var_path = 1.0 / (cum + 1.0 / var0)
    tr = np.zeros(g.shape[0]) if trace_dg_along_obs is None \
        else np.asarray(trace_dg_along_obs, dtype=float)

    def mean_path(theta0: float, d_obs: np.ndarray) -> np.ndarray:
        d_obs = np.atleast_2d(np.asarray(d_obs, dtype=float))
        out = np.zeros(grid.n_steps + 1)
        m = float(theta0)
        out[0] = m
        for k in range(grid.n_steps):
            gain = var_path[k] * (Gi @ g[k])
            m = m + gain @ (d_obs[k] - g[k] * m * dt) - 0.5 * var_path[k] * tr[k] * dt
            out[k + 1] = m
        return out

    return var_path, mean_path
