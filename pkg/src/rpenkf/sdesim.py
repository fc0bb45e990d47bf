"""Data generators: the reference filtering system, three multiscale drivers,
and the effective-mobility quadrature for the two-scale potential.

Every simulation owns an explicitly seeded NumPy generator, so identical
(config, seed) pairs reproduce trajectories bit for bit.  Generators may run
on an internal substep grid finer than the recording grid when the dynamics
are stiff relative to the requested dt.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .roughpath import PathSeries, TimeGrid


class SimulationError(RuntimeError):
    """A trajectory left the finite range; message names the failing step."""


# ---------------------------------------------------------------------------
# drift/observation maps


@dataclass(frozen=True)
class DriftMap:
    """A named vector field z -> g(z) with analytic Jacobian, batch-evaluated."""

    name: str
    dim_in: int
    fn: Callable = field(repr=False)
    jac: Callable = field(repr=False)

    def __call__(self, z: np.ndarray) -> np.ndarray:
        return self.fn(np.atleast_2d(z))


def drift_map(name: str, dim: int = 2, payload=None) -> DriftMap:
    """Built-in vector fields, selected by name.

    ``linear``/``affine`` take a matrix (and offset) payload; ``rotation_minus``
    and ``rotation_plus`` are the planar fields -/+(z1 - z2, z1 + z2);
    ``constant_one`` maps everything to the all-ones vector; ``quadratic``
    squares coordinates (used for nonlinear-observation tests).
    """
    if name == "constant_one":
        return DriftMap(name, dim,
                        lambda z: np.ones_like(np.atleast_2d(z)),
                        lambda z: np.zeros((np.atleast_2d(z).shape[0], dim, dim)))
    if name == "rotation_minus" or name == "rotation_plus":
        sgn = -1.0 if name == "rotation_minus" else 1.0
        mat = sgn * np.array([[1.0, -1.0], [1.0, 1.0]])

        def fn(z, mat=mat):
            return np.atleast_2d(z) @ mat.T

        def jac(z, mat=mat):
            return np.broadcast_to(mat, (np.atleast_2d(z).shape[0], 2, 2)).copy()

        return DriftMap(name, 2, fn, jac)
    if name == "linear" or name == "affine":
        mat = np.asarray(payload["matrix"] if isinstance(payload, dict) else payload, dtype=float)
        off = np.asarray(payload.get("offset", np.zeros(mat.shape[0])), dtype=float) \
            if isinstance(payload, dict) else np.zeros(mat.shape[0])

        def fn(z, mat=mat, off=off):
            return np.atleast_2d(z) @ mat.T + off

        def jac(z, mat=mat):
            return np.broadcast_to(mat, (np.atleast_2d(z).shape[0],) + mat.shape).copy()

        return DriftMap(name, mat.shape[1], fn, jac)
    if name == "quadratic":
        def fn(z):
            return np.atleast_2d(z) ** 2

        def jac(z):
            z = np.atleast_2d(z)
            out = np.zeros((z.shape[0], z.shape[1], z.shape[1]))
            idx = np.arange(z.shape[1])
            out[:, idx, idx] = 2.0 * z
            return out

        return DriftMap(name, dim, fn, jac)
    raise ValueError(f"unknown drift map '{name}'")


# ---------------------------------------------------------------------------
# the reference filtering system


@dataclass(frozen=True)
class FilterModel:
    """Coefficients of the signal/observation pair.

    f: (N,D)->(N,D) drift; h: (N,D)->(N,d) observation drift with Jacobian
    Dh: (N,D)->(N,d,D).  G_sqrt maps m shared noise sources into the signal,
    U maps the same sources into the observation, R_sqrt the independent
    observation noise.  C = U U^T + R must be strictly positive definite.
    """

    f: Callable = field(repr=False)
    h: Callable = field(repr=False)
    dh: Callable = field(repr=False)
    G_sqrt: np.ndarray
    U: np.ndarray
    R_sqrt: np.ndarray
    dim_state: int
    dim_obs: int

    def __post_init__(self):
        G_sqrt = np.atleast_2d(np.asarray(self.G_sqrt, dtype=float))
        U = np.atleast_2d(np.asarray(self.U, dtype=float))
        R_sqrt = np.atleast_2d(np.asarray(self.R_sqrt, dtype=float))
        if G_sqrt.shape[0] != self.dim_state or U.shape[0] != self.dim_obs:
            raise ValueError("G_sqrt/U row counts must match state/observation dims")
        if G_sqrt.shape[1] != U.shape[1]:
            raise ValueError("G_sqrt and U must share the same noise dimension")
        if R_sqrt.shape != (self.dim_obs, self.dim_obs):
            raise ValueError("R_sqrt must be d x d")
        object.__setattr__(self, "G_sqrt", G_sqrt)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "R_sqrt", R_sqrt)
        C = U @ U.T + R_sqrt @ R_sqrt.T
        # direct SPD check; C is fixed for the model's lifetime
        try:
            np.linalg.cholesky(C)
        except np.linalg.LinAlgError as exc:
            raise ValueError("C = U U^T + R must be strictly positive definite") from exc
        object.__setattr__(self, "_C", C)
        object.__setattr__(self, "_C_inv", np.linalg.inv(C))
        object.__setattr__(self, "_B", G_sqrt @ U.T @ self._C_inv)
        object.__setattr__(self, "_u_nonzero", bool(np.any(U)))

    @property
    def dim_noise(self) -> int:
        return self.G_sqrt.shape[1]

    @property
    def C(self) -> np.ndarray:
        return self._C

    @property
    def C_inv(self) -> np.ndarray:
        return self._C_inv

    @property
    def B(self) -> np.ndarray:
        return self._B


@dataclass(frozen=True)
class Trajectory:
    grid: TimeGrid
    states: np.ndarray

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        if states.shape[0] != self.grid.n_steps + 1:
            raise ValueError("states length inconsistent with grid")
        object.__setattr__(self, "states", states)

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def as_path(self) -> PathSeries:
        return PathSeries(self.grid, self.states)


def _check_finite(x: np.ndarray, step: int, what: str):
    if not np.all(np.isfinite(x)):
        raise SimulationError(f"{what} became non-finite at step {step}")


def simulate_filter_model(model: FilterModel, x0, grid: TimeGrid, seed,
                          substeps: int = 1):
    """Euler-Maruyama of the signal/observation pair with shared noise.

    The same draw xi feeds both the G_sqrt term of the signal and the U term
    of the observation, which is what correlates the two noises; eta is an
    independent draw for the R channel.  Y starts at zero.
    """
    rng = np.random.default_rng(seed)
    x0 = np.asarray(x0, dtype=float)
    dt = grid.dt / substeps
    sq = np.sqrt(dt)
    X = np.zeros((grid.n_steps + 1, model.dim_state))
    Y = np.zeros((grid.n_steps + 1, model.dim_obs))
    X[0] = x0
    x, y = x0.copy(), np.zeros(model.dim_obs)
    for k in range(grid.n_steps):
        for _ in range(substeps):
            xi = rng.standard_normal(model.dim_noise)
            eta = rng.standard_normal(model.dim_obs)
            fx = model.f(x[None, :])[0]
            hx = model.h(x[None, :])[0]
            x = x + fx * dt + model.G_sqrt @ xi * sq
            y = y + hx * dt + model.U @ xi * sq + model.R_sqrt @ eta * sq
        _check_finite(x, k, "signal")
        X[k + 1], Y[k + 1] = x, y
    return Trajectory(grid, X), Trajectory(grid, Y)


def simulate_physical_bm(gamma: float, eps: float, grid: TimeGrid, seed,
                         substeps: int = 1):
    """Coupled (W_eps, W0) pair for the magnetic-field model.

    dW_eps = (1/eps) M P dt,  dP = -(1/eps) M P dt + dW0,
    M = [[1, gamma], [-gamma, 1]].  The Euler recursion preserves the exact
    identity W_eps + P = W0, which the tests exploit.  As eps -> 0 the path
    W_eps tracks W0 while its area process gains a drift gamma/2 per unit
    time on the (1,2) component.
    """
    if grid.dt / substeps > eps * eps / 10.0:
        warnings.warn(f"dt={grid.dt/substeps:.3g} coarse relative to eps^2={eps*eps:.3g}; "
                      "fast spiral may be under-resolved", stacklevel=2)
    M = np.array([[1.0, gamma], [-gamma, 1.0]])
    rng = np.random.default_rng(seed)
    dt = grid.dt / substeps
    sq = np.sqrt(dt)
    W = np.zeros((grid.n_steps + 1, 2))
    W0 = np.zeros((grid.n_steps + 1, 2))
    w = np.zeros(2)
    w0 = np.zeros(2)
    p = np.zeros(2)
    rate = M / eps
    for k in range(grid.n_steps):
        for _ in range(substeps):
            dw0 = rng.standard_normal(2) * sq
            drift = rate @ p * dt
            w = w + drift
            p = p - drift + dw0
            w0 = w0 + dw0
        if not np.all(np.isfinite(w)):
            raise SimulationError(
                f"physical BM unstable at step {k} (eps/dt ratio {eps/dt:.3g})")
        W[k + 1], W0[k + 1] = w, w0
    return Trajectory(grid, W), Trajectory(grid, W0)


def _lorenz_field(state: np.ndarray, sigma: float, rho: float, beta: float) -> np.ndarray:
    x, y, z = state
    return np.array([sigma * (y - x), rho * x - y - x * z, x * y - beta * z])


def simulate_lorenz63(eps: float, sigma: float, rho: float, beta: float,
                      initial, grid: TimeGrid, substeps: int = 1) -> Trajectory:
    """RK4 integration of the chaotic system run at rate 1/eps^2."""
    h = grid.dt / substeps
    scale = 1.0 / (eps * eps)
    out = np.zeros((grid.n_steps + 1, 3))
    s = np.asarray(initial, dtype=float).copy()
    out[0] = s
    for k in range(grid.n_steps):
        for _ in range(substeps):
            k1 = scale * _lorenz_field(s, sigma, rho, beta)
            k2 = scale * _lorenz_field(s + 0.5 * h * k1, sigma, rho, beta)
            k3 = scale * _lorenz_field(s + 0.5 * h * k2, sigma, rho, beta)
            k4 = scale * _lorenz_field(s + h * k3, sigma, rho, beta)
            s = s + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(s)) or np.linalg.norm(s) > 1e4:
            raise SimulationError(f"chaotic trajectory blew up at step {k}")
        out[k + 1] = s
    return Trajectory(grid, out)


def integrated_coordinates(traj: Trajectory, indices, scale: float = 1.0) -> Trajectory:
    """Cumulative trapezoid integral of selected coordinates, times scale.

    Turns the bounded chaotic coordinates into the Brownian-like forcing
    scale * int_0^t L_s ds that drives the parameter model.
    """
    sel = traj.states[:, list(indices)]
    dt = traj.grid.dt
    inc = 0.5 * (sel[1:] + sel[:-1]) * dt * scale
    vals = np.concatenate([np.zeros((1, sel.shape[1])), np.cumsum(inc, axis=0)])
    return Trajectory(traj.grid, vals)


def simulate_twoscale(theta: float, eps: float, sigma: float, grid: TimeGrid, seed,
                      p_amplitudes=(1.0, 0.5), z0=(0.0, 0.0), substeps: int = 1) -> Trajectory:
    """Euler-Maruyama of the particle in the rugged quadratic potential.

    dZ = -theta Z dt - (1/eps) grad p(Z/eps) dt + sqrt(2 sigma) dW with
    p(x1, x2) = a1 cos(x1) + a2 cos(x2).
    """
    a = np.asarray(p_amplitudes, dtype=float)
    dt = grid.dt / substeps
    if np.max(np.abs(a)) * dt / eps >= 0.5:
        warnings.warn("two-scale drift step (1/eps)|grad p| dt >= 0.5; reduce dt or add substeps",
                      stacklevel=2)
    rng = np.random.default_rng(seed)
    sq = np.sqrt(2.0 * sigma * dt)
    out = np.zeros((grid.n_steps + 1, 2))
    z = np.asarray(z0, dtype=float).copy()
    out[0] = z
    for k in range(grid.n_steps):
        for _ in range(substeps):
            grad_p = -a * np.sin(z / eps)
            z = z + (-theta * z - grad_p / eps) * dt + sq * rng.standard_normal(2)
        _check_finite(z, k, "two-scale particle")
        out[k + 1] = z
    return Trajectory(grid, out)


def homogenized_mobility(p1: Callable, p2: Callable, sigma: float, L: float,
                         n_panels: int = 4096) -> np.ndarray:
    """Effective mobility diag(L^2/(C_1 Chat_1), L^2/(C_2 Chat_2)).

    C_i and Chat_i are the cell integrals of exp(-p_i/sigma) and
    exp(+p_i/sigma) over one period, evaluated by composite Simpson; the
    panel count is doubled once and the two answers must agree to 1e-8
    relative or the quadrature is declared non-convergent.
    """
    if L <= 0 or sigma <= 0:
        raise ValueError("need L > 0 and sigma > 0")

    def simpson(fn, n):
        if n % 2:
            n += 1
        x = np.linspace(0.0, L, n + 1)
        w = np.ones(n + 1)
        w[1:-1:2], w[2:-1:2] = 4.0, 2.0
        return float((L / (3.0 * n)) * (w * fn(x)).sum())

    diag = np.zeros(2)
    for i, p in enumerate((p1, p2)):
        vals = []
        for n in (n_panels, 2 * n_panels):
            c = simpson(lambda x: np.exp(-p(x) / sigma), n)
            chat = simpson(lambda x: np.exp(p(x) / sigma), n)
            vals.append(L * L / (c * chat))
        if abs(vals[1] - vals[0]) > 1e-8 * abs(vals[1]):
            raise ArithmeticError(f"mobility quadrature not converged for component {i + 1}")
        diag[i] = vals[1]
    return np.diag(diag)


def driven_parameter_model(theta: float, f_z: DriftMap, driver: Trajectory,
                           lambda_scale: float, R, grid: TimeGrid, seed,
                           z0=None):
    """Parameter dynamics pushed by an externally supplied driving path.

    Z_{k+1} = Z_k + theta f_z(Z_k) dt + lambda * dDriver_k and the
    observation accumulates the Z increments plus fresh measurement noise:
    Y_{k+1} = Y_k + dZ_k + R^{1/2} sqrt(dt) eta_k, Y_0 = 0.
    """
    if driver.grid != grid:
        raise ValueError("driver grid must coincide with the simulation grid")
    d = driver.dim
    R_sqrt = _noise_sqrt(R, d)
    rng = np.random.default_rng(seed)
    sq = np.sqrt(grid.dt)
    d_drv = np.diff(driver.states, axis=0) * lambda_scale
    Z = np.zeros((grid.n_steps + 1, d))
    Y = np.zeros((grid.n_steps + 1, d))
    Z[0] = np.zeros(d) if z0 is None else np.asarray(z0, dtype=float)
    for k in range(grid.n_steps):
        dz = theta * f_z(Z[k][None, :])[0] * grid.dt + d_drv[k]
        Z[k + 1] = Z[k] + dz
        Y[k + 1] = Y[k] + dz + R_sqrt @ rng.standard_normal(d) * sq
        _check_finite(Z[k + 1], k, "driven state")
    return Trajectory(grid, Z), Trajectory(grid, Y)


def _noise_sqrt(R, d: int) -> np.ndarray:
    """Accept a scalar variance, a diagonal, or a full matrix; return a square root."""
    R = np.asarray(R, dtype=float)
    if R.ndim == 0:
        return np.eye(d) * np.sqrt(float(R))
    if R.ndim == 1:
        return np.diag(np.sqrt(R))
    vals, vecs = np.linalg.eigh(R)
    if np.any(vals < -1e-12):
        raise ValueError("noise covariance must be nonnegative definite")
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T
