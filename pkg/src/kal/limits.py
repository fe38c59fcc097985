"""Reference solutions for the large-system limit.

* Maxwell-molecule moment laws  dn/dt = -alpha n^2,  dE/dt = -alpha n E.
* The particle-number death chain for Maxwell molecules, where elastic
  events leave N unchanged and pairs vanish at rate alpha N(N-1)/(2 Lambda).
* The one-level hierarchy operator

      Gamma Phi_k(V_{k+1}) = sum_{i<=k} int B(v_i - v_{k+1}, w)
                             [(1-alpha) Phi_k(V_k with v_i -> v_i') - Phi_k(V_k)] dw

  evaluated by Monte Carlo over w, with v_i' = v_i - [(v_i - v_{k+1}).w] w.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import CollisionKernel, sample_omega, sigma_b
from .testfns import Constant, UnitFunctionBank, with_arity


@dataclass
class OracleCurve:
    t_grid: np.ndarray
    n: np.ndarray
    E: np.ndarray
    n_rk4: np.ndarray
    E_rk4: np.ndarray
    method: str = "closed-form"

    def max_rel_disagreement(self) -> float:
        return float(max(np.max(np.abs(self.n_rk4 / self.n - 1.0)),
                         np.max(np.abs(self.E_rk4 / self.E - 1.0))))


def _rk4_grid(rhs, y0, t_grid, h_max):
    """Classical RK4 that lands exactly on every point of ``t_grid``."""
    t_grid = np.asarray(t_grid, dtype=float)
    y = np.array(y0, dtype=float)
    out = np.empty((len(t_grid),) + y.shape)
    t = 0.0 if len(t_grid) == 0 else min(0.0, float(t_grid[0]))
    for k, target in enumerate(t_grid):
        span = target - t
        if span > 0:
            steps = max(1, math.ceil(span / h_max - 1e-12))
            h = span / steps
            for _ in range(steps):
                k1 = rhs(y)
                k2 = rhs(y + 0.5 * h * k1)
                k3 = rhs(y + 0.5 * h * k2)
                k4 = rhs(y + h * k3)
                y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            t = float(target)
        out[k] = y
    return out


def maxwell_moment_ode(n0: float, E0: float, alpha: float, t_grid, h_max: float = 1e-3) -> OracleCurve:
    """Mass and energy of the limit equation for Maxwell molecules.

    Closed form n0/(1 + alpha n0 t), E0/(1 + alpha n0 t), together with an
    RK4 integration of the moment ODEs on the same grid.
    """
    t = np.asarray(t_grid, dtype=float)
    if np.any(t < 0) or np.any(np.diff(t) < 0):
        raise ValueError("t_grid must be sorted and nonnegative")
    denom = 1.0 + alpha * n0 * t
    n = n0 / denom
    E = E0 / denom

    def rhs(y):
        return np.array([-alpha * y[0] ** 2, -alpha * y[0] * y[1]])

    y = _rk4_grid(rhs, [n0, E0], t, h_max)
    return OracleCurve(t, n, E, y[:, 0], y[:, 1])


@dataclass
class DeathChainDistribution:
    t_grid: np.ndarray
    states: np.ndarray  # particle numbers N0, N0-2, ..., in decreasing order
    p: np.ndarray       # shape (len(t_grid), len(states))
    lam: float = 1.0

    def mean_density(self) -> np.ndarray:
        """eps * E[N](t)."""
        return (self.p @ self.states) / self.lam

    def mass_defect(self) -> np.ndarray:
        return np.abs(self.p.sum(axis=1) - 1.0)

    def prob(self, N: int) -> np.ndarray:
        idx = np.flatnonzero(self.states == N)
        if idx.size == 0:
            return np.zeros(len(self.t_grid))
        return self.p[:, idx[0]]


def death_rates(states, alpha, lam):
    states = np.asarray(states, dtype=float)
    return alpha * states * (states - 1.0) / (2.0 * lam)


def death_chain_evolve(N0: int, alpha: float, lam: float, t_grid) -> DeathChainDistribution:
    """Law of N(t) for Maxwell molecules by RK4 on the pure-death chain.

    dP_N/dt = -r_N P_N + r_{N+2} P_{N+2},  r_N = alpha N(N-1)/(2 Lambda),
    P(0) = delta_{N0}; the step is at most min(0.01, 0.1 / r_{N0}).
    """
    if N0 < 0 or int(N0) != N0:
        raise ValueError("N0 must be a nonnegative integer")
    states = np.arange(int(N0), -1, -2)
    rates = death_rates(states, alpha, lam)
    r_top = rates[0]
    h_max = 0.01 if r_top <= 0 else min(0.01, 0.1 / r_top)

    def rhs(p):
        out = -rates * p
        out[1:] += rates[:-1] * p[:-1]
        return out

    p0 = np.zeros(len(states))
    p0[0] = 1.0
    p = _rk4_grid(rhs, p0, t_grid, h_max)
    return DeathChainDistribution(np.asarray(t_grid, dtype=float), states, p, float(lam))


def _as_batch(V):
    V = np.asarray(V, dtype=float)
    single = V.ndim == 2
    return (V[None] if single else V), single


def gamma_terms(phi_k, V_kplus1, kernel: CollisionKernel, alpha: float, omega_samples: int, rng):
    """Per-draw Monte Carlo terms of Gamma Phi_k.

    Returns an array of shape (B, omega_samples) whose row means estimate
    Gamma Phi_k at each of the B configurations.  Each draw samples one
    scattering vector per colliding index i (importance law of the kernel).
    """
    V, _ = _as_batch(V_kplus1)
    B, kp1, _ = V.shape
    k = kp1 - 1
    if not isinstance(phi_k, UnitFunctionBank):
        phi_k = with_arity(phi_k, k)
    Vk = V[:, :k, :]
    base = phi_k(Vk)  # (B,)
    vlast = V[:, k, :]
    total = np.zeros((B, omega_samples))
    for i in range(k):
        u = Vk[:, i, :] - vlast                                 # (B, 3)
        sig = np.atleast_1d(sigma_b(kernel, u))                # (B,)
        w = sample_omega(kernel, u, rng, size=omega_samples)   # (S, B, 3)
        w = np.swapaxes(w, 0, 1)                               # (B, S, 3)
        d = np.einsum("bk,bsk->bs", u, w)
        moved = np.repeat(Vk[:, None, :, :], omega_samples, axis=1)  # (B, S, k, 3)
        moved[:, :, i, :] = Vk[:, None, i, :] - d[..., None] * w
        total += sig[:, None] * ((1.0 - alpha) * phi_k(moved) - base[:, None])
    return total


def gamma_apply(phi_k, V_kplus1, kernel: CollisionKernel, alpha: float, omega_samples: int,
                rng=None, return_stderr: bool = False):
    """Monte Carlo value of Gamma Phi_k at one configuration (or a batch)."""
    if omega_samples < 1:
        raise ValueError("omega_samples must be >= 1")
    if rng is None:
        rng = np.random.default_rng()
    _, single = _as_batch(V_kplus1)
    terms = gamma_terms(phi_k, V_kplus1, kernel, alpha, omega_samples, rng)
    value = terms.mean(axis=1)
    if omega_samples > 1:
        se = terms.std(axis=1, ddof=1) / math.sqrt(omega_samples)
    else:
        se = np.full_like(value, np.nan)
    if single:
        value, se = float(value[0]), float(se[0])
    return (value, se) if return_stderr else value


def heavy_tailed_velocities(rng, shape):
    """Standard normal vectors scaled by 1/U, U uniform on (0, 1]."""
    g = rng.standard_normal(tuple(shape) + (3,))
    u = 1.0 - rng.random(tuple(shape))
    return g / u[..., None]


@dataclass
class GammaNormReport:
    k: int
    alpha: float
    sample_count: int
    bound_factor: float          # (2 - alpha) k sup_sigma
    max_ratio: float
    violations: int
    worst: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violations == 0


def gamma_norm_check(k: int, alpha: float, kernel: CollisionKernel, sample_count: int,
                     rng=None, omega_samples: int = 16, batch: int = 2000) -> GammaNormReport:
    """Probe |Gamma Phi_k| <= (2 - alpha) k ||Sigma_B||_inf ||Phi_k||_inf.

    Phi_k is a tensor of random unary functions of sup norm <= 1 and the
    velocities are heavy tailed.  A draw violates the bound only if it exceeds
    it by more than three Monte Carlo standard errors.
    """
    if kernel.sup_sigma is None:
        raise ValueError("gamma_norm_check needs a kernel with bounded Sigma_B")
    if rng is None:
        rng = np.random.default_rng()
    bound_factor = (2.0 - alpha) * k * kernel.sup_sigma
    max_ratio = 0.0
    violations = 0
    worst = {}
    done = 0
    while done < sample_count:
        n = min(batch, sample_count - done)
        bank = UnitFunctionBank(rng, n, k)
        V = heavy_tailed_velocities(rng, (n, k + 1))
        terms = gamma_terms(bank, V, kernel, alpha, omega_samples, rng)
        val = terms.mean(axis=1)
        se = terms.std(axis=1, ddof=1) / math.sqrt(omega_samples) if omega_samples > 1 else np.zeros(n)
        bound = bound_factor * bank.sup_norm
        live = bound > 0
        ratio = np.where(live, np.abs(val) / np.where(live, bound, 1.0), 0.0)
        violations += int(np.sum(live & (np.abs(val) > bound + 3.0 * se)))
        b = int(np.argmax(ratio))
        if ratio[b] > max_ratio:
            max_ratio = float(ratio[b])
            worst = {"index": done + b, "phi": bank.tensor(b).id, "V": V[b].tolist(),
                     "value": float(val[b]), "bound": float(bound[b])}
        done += n
    return GammaNormReport(k, alpha, sample_count, bound_factor, max_ratio, violations, worst)


def gamma_of_constant(k: int, alpha: float, kernel: CollisionKernel, V_kplus1=None, rng=None) -> float:
    """Gamma applied to Phi_k = 1, which equals -alpha sum_i Sigma_B(v_i - v_{k+1})."""
    if V_kplus1 is None:
        V_kplus1 = np.zeros((k + 1, 3))
        V_kplus1[:, 0] = np.arange(k + 1)
    return gamma_apply(Constant(1.0), V_kplus1, kernel, alpha, 1, rng)


def uniqueness_contraction_factor(rho0: float, T: float, alpha: float, sup_sigma: float):
    """Return (a, T_max) with a = 2 rho0 T (2 - alpha) sup_sigma and a(T_max) = 1."""
    for name, x in (("rho0", rho0), ("alpha", alpha), ("sup_sigma", sup_sigma)):
        if not x > 0:
            raise ValueError(f"{name} must be positive")
    if T < 0:
        raise ValueError("T must be nonnegative")
    rate = 2.0 * rho0 * (2.0 - alpha) * sup_sigma
    return rate * T, 1.0 / rate
