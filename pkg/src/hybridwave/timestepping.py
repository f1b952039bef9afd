"""Explicit leapfrog integration of M u'' + K u = f with diagonal M.

The update is the classical central difference

    u_next = 2 u - u_prev + dt^2 M^{-1} (f - K u),

applied through the fused kernel in `kernels`; prescribed boundary values are
re-imposed after each interior update. The time step comes from the power
method estimate of the largest generalized eigenvalue of (K, M) and the
stability bound dt <= 2 / sqrt(lambda_max).
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .assembly import FieldEvaluator, assemble_load, assemble_mass, \
    assemble_stiffness, build_dof_map, project_pi_h, set_essential_values
from .errors import BlowUpError, ConfigError


@dataclass
class FieldState:
    """Coefficient pair (current and previous level) plus time bookkeeping."""

    e_curr: np.ndarray
    e_prev: np.ndarray
    n: int
    dt: float
    t0: float = 0.0

    @property
    def t(self):
        return self.t0 + self.n * self.dt

    def velocity(self):
        """Staggered time derivative (e_curr - e_prev) / dt at t - dt/2."""
        return (self.e_curr - self.e_prev) / self.dt


@dataclass
class TimeConfig:
    """Run parameters for run_simulation."""

    t_end: float
    dt: float = None
    cfl_safety: float = 0.9
    output_times: tuple = ()
    cadence: float = None
    source: object = None            # f(points, t) -> (..., 2) or None
    bc: dict = field(default_factory=dict)   # tag -> g(points, t), essential
    initial_e: object = None         # E(points, t=0) -> (..., 2) or None
    initial_v: object = None         # dE/dt(points, t=0) or None

    def __post_init__(self):
        if self.dt is None and not (0.0 < self.cfl_safety <= 1.2):
            raise ConfigError(f"cfl_safety {self.cfl_safety} out of range")
        if self.t_end < 0:
            raise ConfigError("t_end must be >= 0")


def estimate_max_eigenvalue(M, K, fixed_dofs=None, tol=1e-6, max_iter=5000, seed=0):
    """Largest eigenvalue of M^{-1} K by power iteration.

    Returns (estimate, converged). Rows/columns of constrained DOFs can be
    masked out via `fixed_dofs`. Convergence means the Rayleigh quotient
    changed by less than `tol` relatively between iterations.
    """
    n = M.shape[0]
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    if fixed_dofs is not None and len(fixed_dofs):
        mask = np.zeros(n, dtype=bool)
        mask[fixed_dofs] = True
    else:
        mask = None
    if mask is not None:
        v[mask] = 0.0
    lam = 0.0
    buf = np.empty(n)
    for _ in range(max_iter):
        K.matvec(v, out=buf)
        if mask is not None:
            buf[mask] = 0.0
        num = float(v @ buf)
        den = float(v @ (M.diag * v))
        if den == 0.0:
            return 0.0, True
        lam_new = num / den
        w = buf / M.diag
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0, True
        v = w / norm
        if abs(lam_new - lam) <= tol * max(abs(lam_new), 1e-300):
            return lam_new, True
        lam = lam_new
    return lam, False


def cfl_timestep(lambda_max, safety=0.9):
    """Stable step dt = safety * 2 / sqrt(lambda_max)."""
    if lambda_max <= 0:
        raise ConfigError(f"lambda_max must be positive, got {lambda_max}")
    return safety * 2.0 / np.sqrt(lambda_max)


def leapfrog_init(e0, v0, dt, M, K, f0=None, t0=0.0):
    """Second-order Taylor start: returns the state after the first step."""
    e0 = np.asarray(e0, dtype=float)
    accel = (f0 - (K @ e0)) if f0 is not None else -(K @ e0)
    accel = accel / M.diag
    e1 = e0 + dt * np.asarray(v0, dtype=float) + 0.5 * dt * dt * accel
    return FieldState(e_curr=e1, e_prev=e0.copy(), n=1, dt=dt, t0=t0)


def leapfrog_step(state, M, K, f=None, bc_setter=None, check=True):
    """Advance one level; imposes boundary values at the new time."""
    e_next = np.empty_like(state.e_curr)
    kernels.leapfrog_update(
        K.indptr, K.indices, K.data, M.diag,
        state.e_curr, state.e_prev, state.dt, f, e_next,
    )
    new = FieldState(
        e_curr=e_next, e_prev=state.e_curr, n=state.n + 1, dt=state.dt, t0=state.t0
    )
    if bc_setter is not None:
        bc_setter(new.e_curr, new.t)
    if check and not np.all(np.isfinite(new.e_curr)):
        raise BlowUpError(f"non-finite field values at step {new.n} (t = {new.t:g})")
    return new


def discrete_energy(state, M, K):
    """Leapfrog-conserved energy 1/2 |v|_M^2 + 1/2 (K e_curr, e_prev)."""
    v = state.velocity()
    return 0.5 * float(v @ (M.diag * v)) + 0.5 * float((K @ state.e_curr) @ state.e_prev)


@dataclass
class RunSummary:
    steps: int
    dt: float
    t_end: float
    final_energy: float
    max_abs_coeff: float
    snapshots: list  # (t, coefficient vector) pairs unless a writer was used
    h_max: float = None
    lambda_max: float = None


def _snapshot_steps(config, dt, n_steps):
    times = list(config.output_times)
    if config.cadence:
        k = 1
        while k * config.cadence <= config.t_end + 1e-12:
            times.append(k * config.cadence)
            k += 1
        times.append(0.0)
    if not times:
        times = [config.t_end]
    steps = sorted({
        int(round(min(max(t, 0.0), config.t_end) / dt)) if dt > 0 else 0
        for t in times
    })
    return [min(s, n_steps) for s in steps]


def run_simulation(mesh, config, dofmap=None, writer=None):
    """Assemble, march to t_end and emit snapshots.

    `writer(t, coeffs, index)` handles snapshot output; without a writer the
    coefficient vectors are collected on the summary. Returns a RunSummary.
    """
    if dofmap is None:
        essential = tuple(config.bc)
        dofmap = build_dof_map(mesh, essential_tags=essential)
    M = assemble_mass(mesh, dofmap)
    K = assemble_stiffness(mesh, dofmap)
    lam, _ = estimate_max_eigenvalue(M, K, fixed_dofs=dofmap.dirichlet_dofs)
    if config.dt is not None:
        dt = config.dt
    else:
        dt = cfl_timestep(max(lam, 1e-300), config.cfl_safety)
    if config.t_end > 0:
        n_steps = max(1, int(np.ceil(config.t_end / dt - 1e-12)))
        dt = config.t_end / n_steps
    else:
        n_steps = 0

    if config.initial_e is not None:
        e0 = project_pi_h(mesh, dofmap, config.initial_e)
    else:
        e0 = np.zeros(dofmap.n_dofs)
    v0 = (
        project_pi_h(mesh, dofmap, config.initial_v)
        if config.initial_v is not None
        else np.zeros(dofmap.n_dofs)
    )

    bc_setter = None
    if config.bc:
        def bc_setter(vec, t):
            set_essential_values(vec, dofmap, config.bc, t)

    load_eval = None
    if config.source is not None:
        load_eval = FieldEvaluator(mesh, dofmap, degree=4)

    def load_at(t):
        if config.source is None:
            return None
        return assemble_load(mesh, dofmap, config.source, t, evaluator=load_eval)

    if bc_setter:
        bc_setter(e0, 0.0)

    snapshots = []
    emitted = set()

    def emit(t, coeffs):
        idx = len(snapshots) + len(emitted)
        if writer is None:
            snapshots.append((t, coeffs.copy()))
        else:
            writer(t, coeffs, idx)
            emitted.add(idx)

    max_abs = float(np.abs(e0).max()) if len(e0) else 0.0
    if n_steps == 0:
        state = FieldState(e_curr=e0, e_prev=e0.copy(), n=0, dt=max(dt, 1e-300))
        emit(0.0, e0)
        energy = discrete_energy(state, M, K) if dt > 0 else 0.0
        return RunSummary(0, dt, 0.0, energy, max_abs, snapshots,
                          h_max=float(mesh.edge_lengths().max()), lambda_max=lam)

    snap_steps = _snapshot_steps(config, dt, n_steps)
    snap_set = set(snap_steps)

    state = leapfrog_init(e0, v0, dt, M, K, f0=load_at(0.0))
    if bc_setter:
        bc_setter(state.e_curr, state.t)
    if 0 in snap_set:
        emit(0.0, e0)
    if 1 in snap_set:
        emit(state.t, state.e_curr)
    while state.n < n_steps:
        f = load_at(state.t)
        state = leapfrog_step(state, M, K, f=f, bc_setter=bc_setter)
        max_abs = max(max_abs, float(np.abs(state.e_curr).max()))
        if state.n in snap_set:
            emit(state.t, state.e_curr)
    return RunSummary(
        steps=n_steps,
        dt=dt,
        t_end=state.t,
        final_energy=discrete_energy(state, M, K),
        max_abs_coeff=max_abs,
        snapshots=snapshots,
        h_max=float(mesh.edge_lengths().max()),
        lambda_max=lam,
    )
