"""O(n) algebra for Sigma(theta) = Sigma_eta(theta) + theta1 * I on a regular grid.

The OU part is whitened by the AR(1) differencing matrix G (unit lower
bidiagonal, subdiagonal -rho), which gives the modified Cholesky form

    Sigma^{-1} = G' T^{-1} G,   T = D + theta1 * G G',

with D = diag(theta2/theta3, (theta2/theta3)(1 - rho^2), ...).  T is
symmetric positive definite and tridiagonal, so an unpivoted LDL' of T gives
log-determinants and solves in O(n).  Because det G = 1, log det Sigma equals
log det T.

Dense routines here are reference oracles only and refuse large n.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import MixedDomainGrid, ThetaParams

DEFAULT_DENSE_CAP = 8192
CAP_ENV = "MIXDOM_DENSE_CAP"


class CapExceededError(ValueError):
    pass


def dense_cap() -> int:
    """Row cap for dense and O(n^2) routines; ``MIXDOM_DENSE_CAP`` overrides it."""
    raw = os.environ.get(CAP_ENV)
    if raw is None or raw.strip() == "":
        return DEFAULT_DENSE_CAP
    return int(raw)


def _check_cap(n: int, cap: int | None, what: str) -> None:
    cap = dense_cap() if cap is None else cap
    if n > cap:
        raise CapExceededError(
            f"{what}: n={n} exceeds the cap of {cap} rows (raise it with --cap or {CAP_ENV})"
        )


# --- numba kernels ---------------------------------------------------------

@njit(cache=True)
def _ldl_tridiag(diag, off):
    n = diag.shape[0]
    d = np.empty(n)
    l = np.empty(max(n - 1, 0))
    d[0] = diag[0]
    for i in range(n - 1):
        if not d[i] > 0.0:
            return d, l, i
        l[i] = off[i] / d[i]
        d[i + 1] = diag[i + 1] - l[i] * off[i]
    if not d[n - 1] > 0.0:
        return d, l, n - 1
    return d, l, -1


@njit(cache=True)
def _whiten(rho, ldl_d, ldl_l, v):
    # D^{-1/2} L^{-1} G v
    n = v.shape[0]
    out = np.empty(n)
    u = v[0]
    out[0] = u / math.sqrt(ldl_d[0])
    for i in range(1, n):
        g = v[i] - rho * v[i - 1]
        u = g - ldl_l[i - 1] * u
        out[i] = u / math.sqrt(ldl_d[i])
    return out


@njit(cache=True)
def _solve(rho, ldl_d, ldl_l, b):
    # G' T^{-1} G b
    n = b.shape[0]
    y = np.empty(n)
    y[0] = b[0]
    for i in range(1, n):
        y[i] = (b[i] - rho * b[i - 1]) - ldl_l[i - 1] * y[i - 1]
    for i in range(n):
        y[i] /= ldl_d[i]
    for i in range(n - 2, -1, -1):
        y[i] -= ldl_l[i] * y[i + 1]
    out = np.empty(n)
    out[n - 1] = y[n - 1]
    for i in range(n - 1):
        out[i] = y[i] - rho * y[i + 1]
    return out


@njit(cache=True)
def _cdot(a, b):
    # Neumaier-compensated sum of a_i * b_i
    s = 0.0
    c = 0.0
    for i in range(a.shape[0]):
        x = a[i] * b[i]
        t = s + x
        if abs(s) >= abs(x):
            c += (s - t) + x
        else:
            c += (x - t) + s
        s = t
    return s + c


@njit(cache=True)
def _csum(a):
    s = 0.0
    c = 0.0
    for i in range(a.shape[0]):
        x = a[i]
        t = s + x
        if abs(s) >= abs(x):
            c += (s - t) + x
        else:
            c += (x - t) + s
        s = t
    return s + c


@njit(cache=True)
def _exp_matvec(r, v):
    # y_i = sum_j r^{|i-j|} v_j
    n = v.shape[0]
    f = np.empty(n)
    b = np.empty(n)
    f[0] = v[0]
    for i in range(1, n):
        f[i] = r * f[i - 1] + v[i]
    b[n - 1] = v[n - 1]
    for i in range(n - 2, -1, -1):
        b[i] = r * b[i + 1] + v[i]
    return f + b - v


@njit(cache=True)
def _dexp_matvec(r, v):
    # y_i = sum_j |i-j| r^{|i-j|} v_j
    n = v.shape[0]
    f = np.empty(n)
    b = np.empty(n)
    F = np.zeros(n)
    B = np.zeros(n)
    f[0] = v[0]
    for i in range(1, n):
        F[i] = r * (F[i - 1] + f[i - 1])
        f[i] = r * f[i - 1] + v[i]
    b[n - 1] = v[n - 1]
    for i in range(n - 2, -1, -1):
        B[i] = r * (B[i + 1] + b[i + 1])
        b[i] = r * b[i + 1] + v[i]
    return F + B


@njit(cache=True)
def _trace_kernel(rho, ldl_d, ldl_l, theta1, c_eta, coef_e, coef_de, r0, c0):
    n = ldl_d.shape[0]
    lag = np.arange(n).astype(np.float64)
    pw = rho ** lag
    pw0 = r0 ** lag
    tr_sinv = 0.0
    tr_sinv2 = 0.0
    tr_seta0 = 0.0
    tr_eta_sq = 0.0
    tr_ds3_sq = 0.0
    e = np.zeros(n)
    col_eta = np.empty(n)
    col_k = np.empty(n)
    for i in range(n):
        e[i] = 1.0
        s = _solve(rho, ldl_d, ldl_l, e)
        e[i] = 0.0
        tr_sinv += s[i]
        acc = 0.0
        acc0 = 0.0
        for j in range(n):
            acc += s[j] * s[j]
            k = abs(i - j)
            acc0 += pw0[k] * s[j]
            col_eta[j] = c_eta * pw[k]
            col_k[j] = coef_e * pw[k] + coef_de * k * pw[k]
        tr_sinv2 += acc
        tr_seta0 += c0 * acc0
        # tr(A^2) = sum_i (A e_i) . (A' e_i)
        eta_s = c_eta * _exp_matvec(rho, s)
        sinv_col_eta = _solve(rho, ldl_d, ldl_l, col_eta)
        tr_eta_sq += np.dot(eta_s, sinv_col_eta)
        k_s = coef_e * _exp_matvec(rho, s) + coef_de * _dexp_matvec(rho, s)
        sinv_col_k = _solve(rho, ldl_d, ldl_l, col_k)
        tr_ds3_sq += np.dot(k_s, sinv_col_k)
    return tr_sinv, tr_sinv2, tr_eta_sq, tr_ds3_sq, tr_seta0


# --- factorization ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TridiagFactor:
    theta: ThetaParams
    grid: MixedDomainGrid
    rho: float
    d_first: float
    d_rest: float
    t_diag: np.ndarray
    t_off: np.ndarray
    ldl_d: np.ndarray
    ldl_l: np.ndarray

    @property
    def n(self) -> int:
        return self.grid.n


def one_minus_rho_sq(decay: float, spacing: float) -> float:
    return -math.expm1(-2.0 * decay * spacing)


def build_factor(theta: ThetaParams, grid: MixedDomainGrid) -> TridiagFactor:
    """Modified Cholesky factor of Sigma(theta); raises LinAlgError if T loses definiteness."""
    t1, t2, t3 = theta
    n = grid.n
    dx = grid.spacing
    rho = math.exp(-t3 * dx)
    d_first = t2 / t3
    d_rest = d_first * one_minus_rho_sq(t3, dx)
    t_diag = np.full(n, d_rest + t1 * (1.0 + rho * rho))
    t_diag[0] = d_first + t1
    t_off = np.full(n - 1, -t1 * rho)
    ldl_d, ldl_l, bad = _ldl_tridiag(t_diag, t_off)
    if bad >= 0:
        raise np.linalg.LinAlgError(
            f"T(theta) not positive definite at pivot {bad} for theta={theta}, n={n}"
        )
    for a in (t_diag, t_off, ldl_d, ldl_l):
        a.setflags(write=False)
    return TridiagFactor(theta, grid, rho, d_first, d_rest, t_diag, t_off, ldl_d, ldl_l)


def logdet_sigma(factor: TridiagFactor) -> float:
    return _csum(np.log(factor.ldl_d))


def _check_len(factor: TridiagFactor, v: np.ndarray) -> np.ndarray:
    v = np.ascontiguousarray(v, dtype=np.float64)
    if v.shape[0] != factor.n:
        raise ValueError(f"vector length {v.shape[0]} does not match n={factor.n}")
    return v


def whiten(factor: TridiagFactor, v: np.ndarray) -> np.ndarray:
    """Return W v with W'W = Sigma^{-1}; columns of a 2-D input are whitened independently."""
    v = _check_len(factor, v)
    if v.ndim == 1:
        return _whiten(factor.rho, factor.ldl_d, factor.ldl_l, v)
    out = np.empty_like(v)
    for j in range(v.shape[1]):
        out[:, j] = _whiten(factor.rho, factor.ldl_d, factor.ldl_l, np.ascontiguousarray(v[:, j]))
    return out


def sigma_solve(factor: TridiagFactor, b: np.ndarray) -> np.ndarray:
    """Sigma^{-1} b computed as G'(T^{-1}(G b))."""
    b = _check_len(factor, b)
    if b.ndim == 1:
        return _solve(factor.rho, factor.ldl_d, factor.ldl_l, b)
    out = np.empty_like(b)
    for j in range(b.shape[1]):
        out[:, j] = _solve(factor.rho, factor.ldl_d, factor.ldl_l, np.ascontiguousarray(b[:, j]))
    return out


def quad_form(factor: TridiagFactor, a: np.ndarray, b: np.ndarray) -> float:
    """a' Sigma^{-1} b.  Exactly symmetric in (a, b)."""
    return _cdot(whiten(factor, a), whiten(factor, b))


def compensated_dot(a: np.ndarray, b: np.ndarray) -> float:
    return _cdot(np.ascontiguousarray(a, dtype=np.float64), np.ascontiguousarray(b, dtype=np.float64))


def gram(w: np.ndarray, v: np.ndarray | None = None) -> np.ndarray:
    """Compensated w' v for column blocks (v defaults to w)."""
    sym = v is None
    v = w if sym else v
    w = np.asfortranarray(w)
    v = np.asfortranarray(v)
    out = np.empty((w.shape[1], v.shape[1]))
    for i in range(w.shape[1]):
        for j in range(v.shape[1]):
            if sym and j < i:
                out[i, j] = out[j, i]
            else:
                out[i, j] = _cdot(w[:, i], v[:, j])
    return out


# --- dense oracles ---------------------------------------------------------

def _lags(grid: MixedDomainGrid) -> np.ndarray:
    s = grid.sites()
    return np.abs(np.subtract.outer(s, s))


def dense_sigma_eta(theta: ThetaParams, grid: MixedDomainGrid, cap: int | None = None) -> np.ndarray:
    _check_cap(grid.n, cap, "dense_sigma_eta")
    return theta.ou_variance * np.exp(-theta.theta3 * _lags(grid))


def dense_sigma(theta: ThetaParams, grid: MixedDomainGrid, cap: int | None = None) -> np.ndarray:
    """Dense Sigma(theta) with entries (theta2/theta3) exp(-theta3 |s_i - s_j|) + theta1 1{i=j}."""
    sig = dense_sigma_eta(theta, grid, cap)
    sig[np.diag_indices_from(sig)] += theta.theta1
    return sig


def dense_dsigma_dtheta3(theta: ThetaParams, grid: MixedDomainGrid, cap: int | None = None) -> np.ndarray:
    _check_cap(grid.n, cap, "dense_dsigma_dtheta3")
    d = _lags(grid)
    t2, t3 = theta.theta2, theta.theta3
    e = np.exp(-t3 * d)
    return -(t2 / t3**2) * e - (t2 / t3) * d * e


def dense_g(theta: ThetaParams, grid: MixedDomainGrid) -> np.ndarray:
    rho = math.exp(-theta.theta3 * grid.spacing)
    g = np.eye(grid.n)
    g[np.arange(1, grid.n), np.arange(grid.n - 1)] = -rho
    return g


def dense_d(theta: ThetaParams, grid: MixedDomainGrid) -> np.ndarray:
    d = np.full(grid.n, theta.ou_variance * one_minus_rho_sq(theta.theta3, grid.spacing))
    d[0] = theta.ou_variance
    return np.diag(d)


def whitening_defect(theta: ThetaParams, grid: MixedDomainGrid, cap: int | None = None) -> float:
    """Max-abs entry of G Sigma_eta G' - D; zero in exact arithmetic."""
    g = dense_g(theta, grid)
    m = g @ dense_sigma_eta(theta, grid, cap) @ g.T
    return float(np.max(np.abs(m - dense_d(theta, grid))))


# --- trace diagnostics -----------------------------------------------------

def trace_diagnostics(theta: ThetaParams, theta0: ThetaParams, grid: MixedDomainGrid,
                      cap: int | None = None) -> dict:
    """Exact traces used by the Fisher-information and expansion checks.

    Keys: ``tr_sinv2`` = tr(Sigma^-2), ``tr_sinv_seta_sq`` =
    tr((Sigma_eta Sigma^-1)^2), ``tr_sinv_ds3_sq`` =
    tr((Sigma^-1 dSigma/dtheta3)^2), ``tr_seta0_sinv`` =
    tr(Sigma_eta(theta0) Sigma^-1) and ``tr_sinv`` = tr(Sigma^-1), all at
    Sigma = Sigma(theta).  Costs O(n^2) time and O(n) memory: each column of
    Sigma^-1 comes from one tridiagonal solve and the exponential kernels are
    applied by two-sided recursions.
    """
    _check_cap(grid.n, cap, "trace_diagnostics")
    f = build_factor(theta, grid)
    t2, t3 = theta.theta2, theta.theta3
    dx = grid.spacing
    r0 = math.exp(-theta0.theta3 * dx)
    out = _trace_kernel(f.rho, f.ldl_d, f.ldl_l, theta.theta1, t2 / t3,
                        -t2 / t3**2, -(t2 / t3) * dx, r0, theta0.ou_variance)
    keys = ("tr_sinv", "tr_sinv2", "tr_sinv_seta_sq", "tr_sinv_ds3_sq", "tr_seta0_sinv")
    return {k: float(v) for k, v in zip(keys, out)}
