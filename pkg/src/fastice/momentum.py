"""Implicit-Euler momentum step on bilinear (Q1) elements.

Discrete residual at every free node ``a`` (force per unit area, N/m^2)::

    R_a = m_a (v_a - v_prev_a) / dt
          + (1 / (dx dy)) * sum_cells int sigma(v) : grad(phi_a)
          - f_a(v_a)

with lumped nodal mass ``m_a`` and nodal forcings ``f_a`` (wind, ocean
drag, Coriolis, tilt, basal stress).  Dirichlet and masked nodes report
``R_a = v_a``.  The nonlinear system is solved by Picard sweeps (viscosity
and drag coefficients frozen) followed by Newton steps with the analytic
tangent.  Steps are damped by halving until the residual norm decreases;
an energy-based step-length search is available where a potential exists.
Linear systems are restricted to the free dofs and solved by sparse
Cholesky when symmetric positive definite, by sparse LU otherwise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import cvxopt
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from cvxopt import cholmod

from . import forcing, rheology
from .forcing import ForcingInputs
from .grid import Mesh, cell_to_node_average
from .params import Params, SolverConfig

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Linear-solve breakdown or a non-finite iterate."""

    def __init__(self, message, iterate=None):
        super().__init__(message)
        self.iterate = iterate


@dataclass
class MomentumProblem:
    mesh: Mesh
    v_prev: np.ndarray
    h: np.ndarray
    A: np.ndarray
    forcing: ForcingInputs
    dt: float
    params: Params

    def __post_init__(self):
        if self.v_prev.shape != (*self.mesh.node_shape, 2):
            raise ValueError("previous velocity does not match mesh")
        if self.h.shape != self.mesh.cell_shape or self.A.shape != self.mesh.cell_shape:
            raise ValueError("tracer fields do not match mesh")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if np.any(self.h < 0):
            raise ValueError("negative thickness")


@dataclass
class SolverReport:
    iterations: int = 0
    initial_residual: float = 0.0
    final_residual: float = 0.0
    converged: bool = False
    trace: list[float] = field(default_factory=list)
    steps: list[str] = field(default_factory=list)

    def summary(self) -> dict:
        return {"iterations": self.iterations, "initial_residual": self.initial_residual,
                "final_residual": self.final_residual, "converged": self.converged}


# -- element geometry ---------------------------------------------------------

@dataclass(frozen=True)
class _Element:
    conn: np.ndarray      # (ncells, 4) node indices, local order (0,0),(1,0),(0,1),(1,1)
    B: np.ndarray         # (nq, 4, 2) shape-function gradients at quadrature points
    weights: np.ndarray   # (nq,) quadrature weights times cell area
    Bv: np.ndarray        # (nq, 4, 8) maps element dofs (a, i) to grad v entries (i, k)
    # fixed CSR pattern of the global operator
    indptr: np.ndarray
    indices: np.ndarray
    slot: np.ndarray      # CSR position of every element-tangent entry
    diag_slot: np.ndarray  # CSR positions of the nodal 2x2 blocks, (nn, 2, 2)


@lru_cache(maxsize=16)
def _element(nx: int, ny: int, dx: float, dy: float, quadrature: int) -> _Element:
    j, i = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    n0 = (j * (nx + 1) + i).ravel()
    conn = np.stack([n0, n0 + 1, n0 + nx + 1, n0 + nx + 2], axis=1)
    if quadrature == 1:
        pts = [0.5]
    else:
        g = 0.5 / np.sqrt(3.0)
        pts = [0.5 - g, 0.5 + g]
    B = []
    for eta in pts:
        for xi in pts:
            dxi = np.array([-(1 - eta), 1 - eta, -eta, eta]) / dx
            deta = np.array([-(1 - xi), -xi, 1 - xi, xi]) / dy
            B.append(np.stack([dxi, deta], axis=1))
    B = np.array(B)
    weights = np.full(len(B), dx * dy / len(B))
    Bv = np.einsum("qak,ij->qikaj", B, np.eye(2)).reshape(len(B), 4, 8)

    n = 2 * (nx + 1) * (ny + 1)
    dof = (2 * conn[:, :, None] + np.arange(2)).reshape(len(conn), 8)
    rows = np.repeat(dof, 8, axis=1).ravel()
    cols = np.tile(dof, (1, 8)).ravel()
    keys, slot = np.unique(rows.astype(np.int64) * n + cols, return_inverse=True)
    indices = (keys % n).astype(np.int32)
    indptr = np.searchsorted(keys // n, np.arange(n + 1)).astype(np.int32)
    nodes = 2 * np.arange(n // 2)
    blk_r = nodes[:, None, None] + np.arange(2)[None, :, None]
    blk_c = nodes[:, None, None] + np.arange(2)[None, None, :]
    diag_slot = np.searchsorted(keys, blk_r.astype(np.int64) * n + blk_c)
    return _Element(conn, B, weights, Bv, indptr, indices, slot.ravel(), diag_slot)


def element_for(mesh: Mesh, config: SolverConfig) -> _Element:
    return _element(mesh.nx, mesh.ny, mesh.dx, mesh.dy, config.quadrature)


def velocity_gradients(v: np.ndarray, mesh: Mesh, quadrature: int = 1) -> np.ndarray:
    """grad v at quadrature points, shape (ny, nx, nq, 2, 2); [i, k] = d v_i / d x_k."""
    el = _element(mesh.nx, mesh.ny, mesh.dx, mesh.dy, quadrature)
    G = _gradients(v, el)
    return G.reshape(mesh.ny, mesh.nx, *G.shape[1:])


def _gradients(v, el):
    ve = v.reshape(-1, 2)[el.conn]                      # (nc, 4, 2)
    return np.einsum("cai,qak->cqik", ve, el.B)


# -- nodal coefficients ---------------------------------------------------------

def mass_floor(h, A, params: Params, mesh: Mesh, h_min: float = 1e-3, A_min: float = 0.01):
    """Lumped nodal ice mass rho * avg(max(h, h_min)) and the open-water mask.

    Nodes whose averaged concentration is below ``A_min`` are masked: the
    solver holds their velocity at zero.
    """
    mass = params.rho * cell_to_node_average(np.maximum(np.asarray(h, dtype=float), h_min), mesh)
    masked = cell_to_node_average(np.asarray(A, dtype=float), mesh) < A_min
    return mass, masked


@dataclass
class _Nodal:
    mass: np.ndarray        # (nn,)
    fixed: np.ndarray       # (nn,) bool, Dirichlet or masked
    basal: np.ndarray       # (nn,) k2 * averaged grounding factor
    P_tilde: np.ndarray     # (nc,)
    P_prime: np.ndarray     # (nc,)
    wind: np.ndarray        # (2,)
    v_o: np.ndarray         # (2,)


def _nodal(problem: MomentumProblem, config: SolverConfig) -> _Nodal:
    mesh, params, frc = problem.mesh, problem.params, problem.forcing
    mass, masked = mass_floor(problem.h, problem.A, params, mesh, config.h_min, config.A_min)
    fixed = mesh.boundary_mask() | masked
    if frc.basal_stress and params.k2 > 0:
        basal = params.k2 * cell_to_node_average(forcing.basal_weight(problem.h, problem.A, params), mesh)
    else:
        basal = np.zeros(mesh.node_shape)
    st = rheology.strengths_of(problem.h, problem.A, params)
    wind = forcing.wind_stress(np.array(frc.wind), params)
    return _Nodal(mass.ravel(), fixed.ravel(), basal.ravel(), st.P_tilde.ravel(),
                  st.P_prime.ravel(), wind, np.array(frc.ocean_velocity, dtype=float))


def _nodal_forces(vn, nodal: _Nodal, problem: MomentumProblem):
    """Sum of nodal forcing terms f_a(v) (N/m^2), shape (nn, 2)."""
    params, frc = problem.params, problem.forcing
    f = np.broadcast_to(nodal.wind, vn.shape).copy()
    if frc.ocean_drag:
        f += forcing.ocean_stress(nodal.v_o, vn, params)
    if frc.coriolis:
        f -= (nodal.mass * params.C_cor)[:, None] * forcing._rot(vn)
    if frc.surface_tilt:
        f += nodal.mass[:, None] * forcing.surface_tilt(nodal.v_o, params)
    if np.any(nodal.basal):
        speed = np.hypot(vn[:, 0], vn[:, 1])
        f -= (nodal.basal / (speed + params.v0))[:, None] * vn
    return f


def _stress_forces(v, el, nodal, params, mesh):
    G = _gradients(v, el)
    st = rheology.Strengths(P=0.5 * (nodal.P_tilde + nodal.P_prime)[:, None],
                            T=0.5 * (nodal.P_tilde - nodal.P_prime)[:, None])
    sigma = rheology.stress_of(G, st, params).sigma    # (nc, nq, 2, 2)
    fe = np.einsum("q,cqik,qak->cai", el.weights, sigma, el.B)
    out = np.zeros(2 * mesh.n_nodes)
    dof = (2 * el.conn[:, :, None] + np.arange(2)).ravel()
    out += np.bincount(dof, weights=fe.ravel(), minlength=out.size)
    return out.reshape(-1, 2) / mesh.cell_area


def _residual(v, problem, config, el, nodal):
    vn = v.reshape(-1, 2)
    R = (nodal.mass / problem.dt)[:, None] * (vn - problem.v_prev.reshape(-1, 2))
    R += _stress_forces(v, el, nodal, problem.params, problem.mesh)
    R -= _nodal_forces(vn, nodal, problem)
    R[nodal.fixed] = vn[nodal.fixed]
    return R


def momentum_residual(v: np.ndarray, problem: MomentumProblem,
                      config: SolverConfig | None = None) -> np.ndarray:
    """Nodal residual of the discrete momentum balance, shape (ny+1, nx+1, 2)."""
    config = config or SolverConfig()
    if v.shape != (*problem.mesh.node_shape, 2):
        raise ValueError("candidate velocity does not match mesh")
    el = element_for(problem.mesh, config)
    nodal = _nodal(problem, config)
    return _residual(v, problem, config, el, nodal).reshape(v.shape)


# -- linearisations -------------------------------------------------------------

def _jacobian(v, problem, config, el, nodal, newton: bool):
    """Full-size operator: analytic tangent (newton) or frozen-coefficient (Picard)."""
    mesh, params, frc = problem.mesh, problem.params, problem.forcing
    G = _gradients(v, el)
    P_tilde = nodal.P_tilde[:, None]
    if newton:
        C = rheology.stress_tangent(G, P_tilde, params)
    else:
        zeta = P_tilde / (2.0 * rheology.delta_of(G, params))
        C = zeta[..., None, None, None, None] * rheology.S_tensor(params.e)
    C = C.reshape(*C.shape[:2], 4, 4)
    Ke = np.zeros((len(el.conn), 8, 8))
    for q, w in enumerate(el.weights):
        Ke += w * (el.Bv[q].T @ C[:, q] @ el.Bv[q])
    data = np.bincount(el.slot, weights=Ke.ravel(), minlength=len(el.indices)) / mesh.cell_area

    vn = v.reshape(-1, 2)
    blocks = np.zeros((mesh.n_nodes, 2, 2))
    blocks += (nodal.mass / problem.dt)[:, None, None] * np.eye(2)
    if frc.ocean_drag:
        w = vn - nodal.v_o
        s = np.hypot(w[:, 0], w[:, 1])
        coef = params.C_o * params.rho_o
        blocks += coef * s[:, None, None] * np.eye(2)
        if newton:
            safe = np.where(s > 0, s, 1.0)
            blocks += coef * np.einsum("ni,nj->nij", w, w) / safe[:, None, None]
    if frc.coriolis:
        blocks += (nodal.mass * params.C_cor)[:, None, None] * np.array([[0.0, -1.0], [1.0, 0.0]])
    if np.any(nodal.basal):
        s = np.hypot(vn[:, 0], vn[:, 1])
        denom = s + params.v0
        blocks += (nodal.basal / denom)[:, None, None] * np.eye(2)
        if newton:
            safe = np.where(s > 0, s, 1.0)
            outer = np.einsum("ni,nj->nij", vn, vn)
            blocks -= (nodal.basal / (safe * denom**2))[:, None, None] * outer
    data[el.diag_slot.ravel()] += blocks.ravel()
    n = 2 * mesh.n_nodes
    return sp.csr_matrix((data, el.indices, el.indptr), shape=(n, n))


class _ReducedSystem:
    """Restriction of the fixed-pattern operator to the free dofs.

    Index maps are computed once; the CHOLMOD symbolic factorisation is
    reused for every matrix with this pattern.
    """

    def __init__(self, el: _Element, free: np.ndarray, n: int):
        new = np.full(n, -1)
        new[free] = np.arange(free.size)
        rows = new[np.repeat(np.arange(n), np.diff(el.indptr))]
        cols = new[el.indices]
        self.pos = np.flatnonzero((rows >= 0) & (cols >= 0))
        r, c = rows[self.pos], cols[self.pos]
        self.shape = (free.size, free.size)
        self.indices = c.astype(np.int32)
        self.indptr = np.concatenate([[0], np.cumsum(np.bincount(r, minlength=free.size))]).astype(np.int32)
        # lower triangle in column-major order, the storage order of cvxopt
        lower = np.flatnonzero(r >= c)
        order = np.lexsort((r[lower], c[lower]))
        self.lower_pos = self.pos[lower[order]]
        self._lower_rc = (r[lower[order]], c[lower[order]])
        self._A = None
        self._factor = None

    def matrix(self, J) -> sp.csr_matrix:
        return sp.csr_matrix((J.data[self.pos], self.indices, self.indptr), shape=self.shape)

    def _cholesky(self, J, rhs):
        if self._A is None:
            r, c = self._lower_rc
            self._A = cvxopt.spmatrix(J.data[self.lower_pos], r.tolist(), c.tolist(), self.shape)
            self._factor = cholmod.symbolic(self._A)
        else:
            self._A.V = cvxopt.matrix(J.data[self.lower_pos])
        cholmod.numeric(self._A, self._factor)
        x = cvxopt.matrix(np.ascontiguousarray(rhs, dtype=float))
        cholmod.solve(self._factor, x)
        return np.array(x).ravel()

    def solve(self, J, rhs, config: SolverConfig, symmetric: bool = False) -> np.ndarray:
        """Solve the reduced system for the full-pattern operator ``J``."""
        x = None
        if config.linear_solver == "auto" and symmetric:
            try:
                x = self._cholesky(J, rhs)
            except ArithmeticError:
                log.debug("Cholesky failed; falling back to sparse LU")
        if x is None:
            x = _linear_solve(self.matrix(J), rhs, config, symmetric)
        if not np.all(np.isfinite(x)):
            raise SolverError("linear solve produced non-finite values")
        return x


def linearized_operator(v: np.ndarray, problem: MomentumProblem,
                        config: SolverConfig | None = None, newton: bool = True):
    """Sparse operator restricted to free degrees of freedom, plus the free-dof index."""
    config = config or SolverConfig()
    el = element_for(problem.mesh, config)
    nodal = _nodal(problem, config)
    J = _jacobian(v, problem, config, el, nodal, newton)
    free = np.flatnonzero(~np.repeat(nodal.fixed, 2))
    return _ReducedSystem(el, free, J.shape[0]).matrix(J), free


def _linear_solve(J, rhs, config: SolverConfig, symmetric: bool = False):
    """Sparse LU or ILU-preconditioned BiCGStab solve of ``J x = rhs``."""
    if config.linear_solver in ("auto", "direct"):
        options = {"SymmetricMode": True}
        if symmetric:
            # symmetric positive definite: no pivoting needed
            options["DiagPivotThresh"] = 0.0
        return spla.splu(J.tocsc(), permc_spec="MMD_AT_PLUS_A", options=options).solve(rhs)
    # viscosities span many decades; Jacobi preconditioning breaks down, incomplete LU does not
    ilu = spla.spilu(J.tocsc(), drop_tol=1e-6, fill_factor=20)
    M = spla.LinearOperator(J.shape, ilu.solve)
    x, info = spla.bicgstab(J, rhs, M=M, rtol=config.linear_rtol, maxiter=20 * len(rhs))
    if info != 0:
        raise SolverError(f"BiCGStab did not converge (info={info})")
    return x


def discrete_energy(v: np.ndarray, problem: MomentumProblem,
                    config: SolverConfig | None = None) -> float:
    """Convex potential whose gradient at the free nodes is the residual.

    Defined only without Coriolis and with the triangle invariant.
    """
    config = config or SolverConfig()
    _require_potential(problem)
    return _energy(v, problem, config, element_for(problem.mesh, config), _nodal(problem, config))


def _require_potential(problem):
    if problem.forcing.coriolis or problem.params.invariant != "triangle":
        raise ValueError("no energy potential with Coriolis or the deviatoric invariant")


def _energy(v, problem, config, el, nodal):
    params, frc = problem.params, problem.forcing
    free = ~nodal.fixed
    vn = v.reshape(-1, 2)[free]
    dv = vn - problem.v_prev.reshape(-1, 2)[free]
    m = nodal.mass[free]
    e_node = 0.5 * m / problem.dt * np.einsum("ni,ni->n", dv, dv) - vn @ nodal.wind
    if frc.ocean_drag:
        w = vn - nodal.v_o
        e_node += params.C_o * params.rho_o * np.hypot(w[:, 0], w[:, 1]) ** 3 / 3.0
    if frc.surface_tilt:
        e_node -= m * (vn @ forcing.surface_tilt(nodal.v_o, params))
    basal = nodal.basal[free]
    if np.any(basal):
        s = np.hypot(vn[:, 0], vn[:, 1])
        e_node += basal * (s - params.v0 * np.log1p(s / params.v0))
    G = _gradients(v, el)
    delta = rheology.delta_of(G, params)
    trace = G[..., 0, 0] + G[..., 1, 1]
    e_cell = (0.5 * nodal.P_tilde[:, None] * delta - 0.5 * nodal.P_prime[:, None] * trace) @ el.weights
    return float(np.sum(e_node) + np.sum(e_cell) / problem.mesh.cell_area)


def solve_momentum(problem: MomentumProblem, config: SolverConfig | None = None,
                   v_init: np.ndarray | None = None):
    """Solve one implicit step. Returns ``(v_new, SolverReport)``.

    Search directions come from Picard or Newton linearisations.  When an
    energy potential exists the step length is chosen from the sign of the
    directional derivative (the residual projected on the direction), which
    guarantees descent; otherwise, or when that fails, by residual-norm
    halving.  On non-convergence the best iterate is returned with
    ``converged=False``.
    """
    config = config or SolverConfig()
    mesh = problem.mesh
    el = element_for(mesh, config)
    nodal = _nodal(problem, config)
    fixed2 = np.repeat(nodal.fixed, 2)
    free = np.flatnonzero(~fixed2)
    system = _ReducedSystem(el, free, fixed2.size)
    convex = not problem.forcing.coriolis and problem.params.invariant == "triangle"
    energy_search = convex and config.line_search == "energy"

    v = (problem.v_prev if v_init is None else v_init).copy()
    v.reshape(-1, 2)[nodal.fixed] = 0.0

    def evaluate(vv):
        if not np.all(np.isfinite(vv)):
            raise SolverError("non-finite iterate", iterate=vv)
        R = _residual(vv, problem, config, el, nodal).ravel()
        return R, float(np.linalg.norm(R[free]))

    R, rnorm = evaluate(v)
    report = SolverReport(initial_residual=rnorm, final_residual=rnorm, trace=[rnorm])
    target = max(config.rtol * rnorm, config.atol)
    if rnorm <= target or free.size == 0:
        report.converged = True
        return v, report

    def trial_at(direction, lam):
        t = v.ravel().copy()
        t[free] += lam * direction
        return t.reshape(v.shape)

    for it in range(1, config.max_iter + 1):
        use_newton = config.newton and it > config.picard_iters
        step = None
        # the Newton direction always descends on |R|^2; Picard need not
        for newton in ([True, False] if use_newton else [False, True]):
            J = _jacobian(v, problem, config, el, nodal, newton)
            direction = -system.solve(J, R[free], config, symmetric=convex)
            if energy_search:
                step = _derivative_search(trial_at, evaluate, direction, R[free] @ direction,
                                          rnorm, free, config)
            if step is None:
                step = _residual_search(trial_at, evaluate, direction, rnorm, config)
            if step is not None:
                report.steps.append(f"{'newton' if newton else 'picard'}:{step[0]:g}")
                _, v, R, rnorm = step
                break
        report.iterations = it
        report.trace.append(rnorm)
        report.final_residual = rnorm
        if step is None:
            log.warning("momentum solve stagnated at residual %.3e after %d iterations", rnorm, it)
            break
        if rnorm <= target:
            report.converged = True
            break
    else:
        log.warning("momentum solve hit max_iter=%d with residual %.3e (initial %.3e)",
                    config.max_iter, rnorm, report.initial_residual)
    return v, report


def _derivative_search(trial_at, evaluate, direction, g0, rnorm, free, config, max_evals=12):
    """Step length along a descent direction of the convex energy.

    g(lam) = R(v + lam d) . d is increasing in lam; any lam with g(lam) <= 0
    lowers the energy.  The full step is also taken when it reduces the
    residual norm, which covers the roundoff-dominated endgame.
    """
    if not g0 < 0:
        return None
    lo, g_lo, best = 0.0, g0, None
    hi, g_hi = None, None
    lam = 1.0
    for _ in range(max_evals):
        trial = trial_at(direction, lam)
        R_t, rn_t = evaluate(trial)
        g = R_t[free] @ direction
        if g <= 0:
            lo, g_lo, best = lam, g, (lam, trial, R_t, rn_t)
            if hi is None or g >= 0.5 * g0:
                return best
        else:
            if lam == 1.0 and rn_t < rnorm:
                return (lam, trial, R_t, rn_t)
            hi, g_hi = lam, g
        # safeguarded secant on g inside [lo, hi]
        lam = lo - g_lo * (hi - lo) / (g_hi - g_lo)
        width = hi - lo
        lam = min(max(lam, lo + 0.1 * width), hi - 0.1 * width)
        if width < config.min_damping:
            break
    return best


def _residual_search(trial_at, evaluate, direction, rnorm, config):
    lam = 1.0
    while lam >= config.min_damping:
        trial = trial_at(direction, lam)
        R_t, rn_t = evaluate(trial)
        if rn_t < rnorm:
            return (lam, trial, R_t, rn_t)
        lam *= 0.5
    return None
