"""Sampled checks of the principal part of the linearised momentum operator.

The coefficients ``a[i, j, k, l]`` (row ``i``, component ``j``, derivative
``D_k D_l``) come from :func:`fastice.rheology.coefficients_of`.  The checks
are randomised with a fixed seed; every report records the seed and, on
failure, one witness sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rheology
from .params import Params

# index maps for the coefficient symmetries, as einsum source strings
SYMMETRY_PERMUTATIONS = ("jilk", "klij", "kjil", "ilkj", "lkji")


class EllipticityViolation(AssertionError):
    def __init__(self, message: str, witness: dict):
        super().__init__(message)
        self.witness = witness


@dataclass
class StateSample:
    """Strain rates ``d`` (n, 2, 2) with thickness ``h`` and concentration ``A`` (n,)."""

    d: np.ndarray
    h: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=float)
        n = self.d.shape[0]
        self.h = np.broadcast_to(np.asarray(self.h, dtype=float), (n,)).copy()
        self.A = np.broadcast_to(np.asarray(self.A, dtype=float), (n,)).copy()
        if self.d.shape != (n, 2, 2):
            raise ValueError("strain rates must have shape (n, 2, 2)")

    def __len__(self):
        return self.d.shape[0]


@dataclass
class EllipticityReport:
    samples: int
    seed: int
    min_quotient: float
    # quotient / bound; >= 1 - 1e-9 everywhere when the estimate holds
    min_ratio: float
    min_bound: float
    min_eigenvalue: float
    violations: int
    max_symmetry_residual: float
    witness: dict | None = None

    @property
    def ok(self) -> bool:
        return self.violations == 0 and self.min_eigenvalue > 0

    def summary(self) -> str:
        return (f"strong ellipticity: samples={self.samples} seed={self.seed} "
                f"min_quotient={self.min_quotient:.6e} min_quotient/bound={self.min_ratio:.12f} "
                f"min_eigenvalue={self.min_eigenvalue:.6e} violations={self.violations} "
                f"max_symmetry_residual={self.max_symmetry_residual:.3e}")


@dataclass
class NormalEllipticityReport:
    samples: int
    seed: int
    min_form: float
    # smallest form among samples with a clearly nonzero Im(u|v), relative to its scale
    min_strict_margin: float
    strict_samples: int
    violations: int
    witness: dict | None = field(default=None)

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def summary(self) -> str:
        return (f"normal ellipticity: samples={self.samples} seed={self.seed} "
                f"min_form={self.min_form:.6e} strict_samples={self.strict_samples} "
                f"min_strict_margin={self.min_strict_margin:.6e} violations={self.violations}")


def sample_states(rng: np.random.Generator, n: int, params: Params, kappa: float = 0.05,
                  h_max: float = 5.0, max_strain: float = 1e3) -> StateSample:
    """Random states: strain-rate magnitudes log-uniform in [1e-12, max_strain] or exactly zero."""
    d = rng.standard_normal((n, 2, 2))
    d /= np.linalg.norm(d, axis=(1, 2), keepdims=True)
    scale = 10.0 ** rng.uniform(-12.0, np.log10(max_strain), n)
    scale[rng.random(n) < 0.1] = 0.0
    d *= scale[:, None, None]
    return StateSample(d=d, h=rng.uniform(kappa, h_max, n), A=rng.uniform(0.0, 1.0, n))


def coefficients(sample: StateSample, params: Params) -> np.ndarray:
    st = rheology.strengths_of(sample.h, sample.A, params)
    return rheology.coefficients_of(sample.d, st, sample.h, params)


def principal_symbol(a: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """A#(xi)_ij = sum_kl a_ij^kl xi_k xi_l; broadcasts over leading axes."""
    xi = np.asarray(xi, dtype=float)
    return np.einsum("...ijkl,...k,...l->...ij", a, xi, xi)


def bound_constant(sample: StateSample, params: Params) -> np.ndarray:
    """Per-sample c = P_tilde / (2 rho h Delta^3) from the ellipticity estimate."""
    st = rheology.strengths_of(sample.h, sample.A, params)
    delta = rheology.delta_of(sample.d, params)
    return st.P_tilde / (2.0 * params.rho * sample.h * delta**3)


def symmetry_residual(a: np.ndarray) -> float:
    """Largest relative deviation over the coefficient index symmetries."""
    a = np.asarray(a, dtype=float)
    scale = np.max(np.abs(a), axis=(-4, -3, -2, -1), keepdims=True)
    if not np.any(scale > 0):
        return 0.0
    scale = np.where(scale > 0, scale, 1.0)
    res = 0.0
    for perm in SYMMETRY_PERMUTATIONS:
        b = np.einsum(f"...{perm}->...ijkl", a)
        res = max(res, float(np.max(np.abs(a - b) / scale)))
    return res


def check_symmetries(a: np.ndarray) -> float:
    return symmetry_residual(a)


def _unit(rng, shape, complex_=False):
    x = rng.standard_normal(shape)
    if complex_:
        x = x + 1j * rng.standard_normal(shape)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def check_strong_ellipticity(params: Params, sample: StateSample | None = None,
                             n_samples: int = 10_000, seed: int = 0,
                             raise_on_violation: bool = False) -> EllipticityReport:
    """Re(-A#(xi) eta | eta) >= P_tilde/(2 rho h Delta^3) Delta_min^2 / e^2 for unit xi, eta."""
    rng = np.random.default_rng(seed)
    if sample is None:
        sample = sample_states(rng, n_samples, params)
    n = len(sample)
    a = coefficients(sample, params)
    xi = _unit(rng, (n, 2))
    eta = _unit(rng, (n, 2), complex_=True)
    M = -principal_symbol(a, xi)
    quotient = np.real(np.einsum("nij,nj,ni->n", M, eta, np.conj(eta)))
    bound = bound_constant(sample, params) * params.delta_min**2 / params.e**2
    ratio = quotient / bound
    eig = np.linalg.eigvalsh(0.5 * (M + np.swapaxes(M, 1, 2)))
    bad = ratio < 1.0 - 1e-9
    witness = None
    if bad.any():
        k = int(np.argmin(ratio))
        witness = dict(index=k, d=sample.d[k].tolist(), h=float(sample.h[k]), A=float(sample.A[k]),
                       xi=xi[k].tolist(), eta=[complex(z) for z in eta[k]],
                       quotient=float(quotient[k]), bound=float(bound[k]))
    report = EllipticityReport(
        samples=n, seed=seed, min_quotient=float(quotient.min()), min_ratio=float(ratio.min()),
        min_bound=float(bound.min()), min_eigenvalue=float(eig.min()), violations=int(bad.sum()),
        max_symmetry_residual=symmetry_residual(a), witness=witness)
    if raise_on_violation and not report.ok:
        raise EllipticityViolation(report.summary(), witness or {})
    return report


def normal_form(a: np.ndarray, xi, nu, u, v) -> np.ndarray:
    """Re sum -a_ij^kl w_jl conj(w_ik) with w_jl = xi_l u_j - nu_l v_j."""
    w = np.einsum("...j,...l->...jl", u, xi) - np.einsum("...j,...l->...jl", v, nu)
    return np.real(np.einsum("...ijkl,...jl,...ik->...", -a, w, np.conj(w)))


def check_normal_ellipticity(params: Params, sample: StateSample | None = None,
                             n_samples: int = 100_000, seed: int = 0,
                             raise_on_violation: bool = False) -> NormalEllipticityReport:
    """Sample orthonormal (xi, nu) and complex (u, v); the form is >= 0, and > 0 if Im(u|v) != 0."""
    rng = np.random.default_rng(seed)
    if sample is None:
        sample = sample_states(rng, n_samples, params)
    n = len(sample)
    a = coefficients(sample, params)
    theta = rng.uniform(0.0, 2 * np.pi, n)
    xi = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    sign = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    nu = sign[:, None] * np.stack([-xi[:, 1], xi[:, 0]], axis=-1)
    u = rng.standard_normal((n, 2)) + 1j * rng.standard_normal((n, 2))
    v = rng.standard_normal((n, 2)) + 1j * rng.standard_normal((n, 2))
    form = normal_form(a, xi, nu, u, v)

    # scale of the form: largest coefficient magnitude times |w|^2
    a_scale = np.max(np.abs(a), axis=(1, 2, 3, 4))
    w_sq = np.sum(np.abs(u) ** 2 + np.abs(v) ** 2, axis=1)
    scale = a_scale * w_sq
    im_uv = np.imag(np.sum(u * np.conj(v), axis=1))
    strict = np.abs(im_uv) > 1e-6 * np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
    bad = (form < -1e-12 * scale) | (strict & ~(form > 0))
    witness = None
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        witness = dict(index=k, d=sample.d[k].tolist(), h=float(sample.h[k]), A=float(sample.A[k]),
                       xi=xi[k].tolist(), nu=nu[k].tolist(), u=[complex(z) for z in u[k]],
                       v=[complex(z) for z in v[k]], form=float(form[k]))
    margin = form[strict] / scale[strict]
    report = NormalEllipticityReport(
        samples=n, seed=seed, min_form=float(form.min()),
        min_strict_margin=float(margin.min()) if margin.size else float("nan"),
        strict_samples=int(strict.sum()), violations=int(bad.sum()), witness=witness)
    if raise_on_violation and not report.ok:
        raise EllipticityViolation(report.summary(), witness or {})
    return report


def cauchy_schwarz_slack(d: np.ndarray, eps: np.ndarray, e: float) -> np.ndarray:
    """Tri^2(d) Tri^2(eps) - (d : S eps)^2, which is never negative."""
    d_S_eps = np.einsum("...ij,...ij->...", d, rheology.apply_S(eps, e))
    return rheology.triangle_sq(d, e) * rheology.triangle_sq(eps, e) - d_S_eps**2


def states_from_velocity(v: np.ndarray, h: np.ndarray, A: np.ndarray, mesh, h_floor: float = 1e-3,
                         quadrature: int = 1) -> StateSample:
    """Cell states (strain rate at quadrature points, cell h and A) of a model solution."""
    from .momentum import velocity_gradients

    grads = velocity_gradients(v, mesh, quadrature)  # (n_cells, nq, 2, 2)
    nq = grads.shape[1]
    d = 0.5 * (grads + np.swapaxes(grads, -1, -2))
    return StateSample(d=d.reshape(-1, 2, 2),
                       h=np.repeat(np.maximum(np.ravel(h), h_floor), nq),
                       A=np.repeat(np.ravel(A), nq))


def run_suite(params: Params, n_strong: int = 10_000, n_normal: int = 100_000,
              seed: int = 0) -> tuple[EllipticityReport, NormalEllipticityReport]:
    return (check_strong_ellipticity(params, n_samples=n_strong, seed=seed),
            check_normal_ellipticity(params, n_samples=n_normal, seed=seed + 1))
