"""Constitutive algebra of the landfast viscous-plastic rheology.

All functions are vectorised: a strain-rate argument is an array of shape
``(..., 2, 2)`` and scalar material fields broadcast against the leading
axes.  The stress is written through the constant 4-index array ``S``
(aspect ratio ``e``) as

    sigma = P_tilde / (2 Delta) * S eps - P_prime / 2 * I,

with the regularised invariant ``Delta = sqrt(Q(eps) + delta_min**2)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import Params


def S_tensor(e: float) -> np.ndarray:
    """S[i, j, k, l] such that (S d)_ij = sum_kl S[i, j, k, l] d_kl."""
    r = 1.0 / e**2
    S = np.zeros((2, 2, 2, 2))
    S[0, 0, 0, 0] = S[1, 1, 1, 1] = 1.0 + r
    S[0, 0, 1, 1] = S[1, 1, 0, 0] = 1.0 - r
    for i, j in ((0, 1), (1, 0)):
        for k, l in ((0, 1), (1, 0)):
            S[i, j, k, l] = r
    return S


def invariants_of(d: np.ndarray):
    d = np.asarray(d, dtype=float)
    d_I = d[..., 0, 0] + d[..., 1, 1]
    d_II = d[..., 0, 0] - d[..., 1, 1]
    d_III = 0.5 * (d[..., 0, 1] + d[..., 1, 0])
    return d_I, d_II, d_III


def triangle_sq(d: np.ndarray, e: float) -> np.ndarray:
    d_I, d_II, d_III = invariants_of(d)
    return d_I**2 + (d_II**2 + 4.0 * d_III**2) / e**2


def apply_S(d: np.ndarray, e: float) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    r = 1.0 / e**2
    out = np.empty(d.shape)
    shear = r * (d[..., 0, 1] + d[..., 1, 0])
    out[..., 0, 0] = (1 + r) * d[..., 0, 0] + (1 - r) * d[..., 1, 1]
    out[..., 1, 1] = (1 - r) * d[..., 0, 0] + (1 + r) * d[..., 1, 1]
    out[..., 0, 1] = shear
    out[..., 1, 0] = shear
    return out


def deviatoric_sq(d: np.ndarray) -> np.ndarray:
    """1/2 eps' : eps' with eps' the deviatoric part of the symmetrised tensor."""
    d = np.asarray(d, dtype=float)
    _, d_II, d_III = invariants_of(d)
    # eps' = [[d_II/2, d_III], [d_III, -d_II/2]]
    return 0.25 * d_II**2 + d_III**2


def _invariant_sq(d, params: Params):
    if params.invariant == "triangle":
        return triangle_sq(d, params.e)
    return deviatoric_sq(d)


def _half_grad_invariant(d, params: Params):
    """(1/2) dQ/d(eps) as a (..., 2, 2) array."""
    if params.invariant == "triangle":
        return apply_S(d, params.e)
    d = np.asarray(d, dtype=float)
    _, d_II, d_III = invariants_of(d)
    g = np.empty(d.shape)
    g[..., 0, 0] = 0.25 * d_II
    g[..., 1, 1] = -0.25 * d_II
    g[..., 0, 1] = g[..., 1, 0] = 0.5 * d_III
    return g


def delta_of(d: np.ndarray, params: Params) -> np.ndarray:
    """Regularised strain-rate invariant; never below ``delta_min``."""
    return np.sqrt(_invariant_sq(d, params) + params.delta_min**2)


@dataclass
class Strengths:
    P: np.ndarray
    T: np.ndarray

    @property
    def P_prime(self):
        return self.P - self.T

    @property
    def P_tilde(self):
        return self.P + self.T


def strengths_of(h, A, params: Params) -> Strengths:
    """Compressive strength P = h P* exp(-c*(1-A)) and tensile strength T = k_t P (N/m).

    Hence P_tilde = (1 + k_t) P and P_prime = (1 - k_t) P.
    """
    P = np.asarray(h, dtype=float) * params.P_star * np.exp(-params.c_star * (1.0 - np.asarray(A)))
    return Strengths(P=P, T=params.k_t * P)


@dataclass
class RheologyEval:
    delta: np.ndarray
    zeta: np.ndarray
    sigma: np.ndarray
    S_eps: np.ndarray


def stress_of(d: np.ndarray, strengths: Strengths, params: Params) -> RheologyEval:
    d = np.asarray(d, dtype=float)
    delta = delta_of(d, params)
    S_eps = apply_S(d, params.e)
    P_tilde = np.asarray(strengths.P_tilde, dtype=float)
    zeta = P_tilde / (2.0 * delta)
    sigma = zeta[..., None, None] * S_eps
    half_p = 0.5 * np.asarray(strengths.P_prime, dtype=float)
    sigma[..., 0, 0] -= half_p
    sigma[..., 1, 1] -= half_p
    return RheologyEval(delta=delta, zeta=zeta, sigma=sigma, S_eps=S_eps)


def stress_tangent(d: np.ndarray, P_tilde, params: Params) -> np.ndarray:
    """C[..., i, k, j, l] = d sigma_ik / d eps_jl at fixed strengths."""
    d = np.asarray(d, dtype=float)
    delta = delta_of(d, params)
    S_eps = apply_S(d, params.e)
    g = _half_grad_invariant(d, params)
    zeta = np.asarray(P_tilde, dtype=float) / (2.0 * delta)
    C = S_tensor(params.e) - np.einsum("...ik,...jl->...ikjl", S_eps, g) / (delta**2)[..., None, None, None, None]
    return zeta[..., None, None, None, None] * C


def coefficients_of(d: np.ndarray, strengths: Strengths, h, params: Params) -> np.ndarray:
    """Principal-part coefficients a[..., i, j, k, l] of D_k D_l v_j in row i.

    a_ij^kl = -(P_tilde / (2 rho h Delta)) (S_(ik)(jl) - (S eps)_ik (S eps)_jl / Delta^2).
    Requires ``h > 0``; callers apply their own thickness floor.
    """
    h = np.asarray(h, dtype=float)
    if np.any(h <= 0):
        raise ValueError("coefficients need a strictly positive thickness")
    C = stress_tangent(d, strengths.P_tilde, params)
    a = -np.swapaxes(C, -3, -2) / (params.rho * h)[..., None, None, None, None]
    return a
