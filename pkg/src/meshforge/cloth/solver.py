"""Internal forces, force Jacobians and implicit-Euler time stepping."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .. import _kernels
from ..errors import DegeneracyError, InstabilityError, NumericError, SolverError, ValidationError
from .collision import CapsuleSet, resolve_collisions
from .model import ClothState

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimConfig:
    timestep: float = 1.0 / 60.0
    gravity: tuple = (0.0, 0.0, -9.81)
    air_drag: float = 0.0
    cg_tolerance: float = 1e-6
    cg_max_iters: int = 500
    collision_epsilon: float = 1e-3
    friction: float = 0.0
    preconditioner: str = "ilu"
    # clamp compressive spring terms in the solver matrix so it stays SPD
    definiteness_fix: bool = True

    def __post_init__(self):
        if not self.timestep > 0:
            raise ValidationError(f"timestep must be > 0, got {self.timestep}")
        if not self.cg_tolerance > 0 or self.cg_max_iters < 1:
            raise ValidationError("cg_tolerance and cg_max_iters must be positive")
        if self.collision_epsilon < 0 or self.air_drag < 0:
            raise ValidationError("collision_epsilon and air_drag must be >= 0")
        if not 0.0 <= self.friction <= 1.0:
            raise ValidationError("friction must lie in [0, 1]")
        if self.preconditioner not in ("ilu", "jacobi"):
            raise ValidationError(f"preconditioner must be 'ilu' or 'jacobi', got {self.preconditioner!r}")


def _check_degenerate(cloth: ClothState):
    if cloth.spring_count == 0:
        return
    d = cloth.positions[cloth.spring_i] - cloth.positions[cloth.spring_j]
    length = np.sqrt((d * d).sum(axis=1))
    bad = np.nonzero(~(length >= 1e-9))[0]
    if bad.size:
        s = int(bad[0])
        raise DegeneracyError(
            f"degenerate spring {s} ({cloth.spring_i[s]}-{cloth.spring_j[s]}): endpoints coincide"
        )


def internal_forces(cloth: ClothState, backend=None) -> tuple[np.ndarray, float]:
    """Spring forces (elastic + spring damping) and elastic energy.

    Gravity and drag are not included.
    """
    _check_degenerate(cloth)
    if cloth.spring_count == 0:
        return np.zeros_like(cloth.positions), 0.0
    return _kernels.spring_forces(cloth.positions, cloth.velocities, cloth.spring_i, cloth.spring_j,
                                  cloth.rest_lengths, cloth.stiffness, cloth.spring_damping,
                                  backend=backend)


@dataclass
class ForceJacobians:
    """Per-spring 3x3 blocks; ``dx[s]`` is dF_i/dx_i for spring ``s = (i, j)``.

    The full Jacobian has ``+dx[s]`` on the (i,i) and (j,j) blocks and
    ``-dx[s]`` on (i,j) and (j,i); ``dv`` likewise.
    """

    spring_i: np.ndarray
    spring_j: np.ndarray
    dx: np.ndarray
    dv: np.ndarray
    n: int

    def _assemble(self, blocks):
        n3 = 3 * self.n
        if len(blocks) == 0:
            return sp.csr_matrix((n3, n3))
        a = np.arange(3)
        ri = (3 * self.spring_i)[:, None, None] + a[None, :, None]
        rj = (3 * self.spring_j)[:, None, None] + a[None, :, None]
        ci = (3 * self.spring_i)[:, None, None] + a[None, None, :]
        cj = (3 * self.spring_j)[:, None, None] + a[None, None, :]
        shape = blocks.shape
        rows = np.concatenate([np.broadcast_to(r, shape).ravel() for r in (ri, rj, ri, rj)])
        cols = np.concatenate([np.broadcast_to(c, shape).ravel() for c in (ci, cj, cj, ci)])
        data = np.concatenate([blocks.ravel(), blocks.ravel(), -blocks.ravel(), -blocks.ravel()])
        return sp.csr_matrix((data, (rows, cols)), shape=(n3, n3))

    def dF_dx(self) -> sp.csr_matrix:
        return self._assemble(self.dx)

    def dF_dv(self) -> sp.csr_matrix:
        return self._assemble(self.dv)


def force_jacobians(cloth: ClothState, definiteness_fix: bool = False, backend=None) -> ForceJacobians:
    """Analytic Jacobians of :func:`internal_forces`.

    The position Jacobian covers the elastic term; the velocity Jacobian the
    spring damping. The damping force's dependence on positions is dropped.
    """
    _check_degenerate(cloth)
    if cloth.spring_count == 0:
        z = np.zeros((0, 3, 3))
        return ForceJacobians(cloth.spring_i, cloth.spring_j, z, z, cloth.particle_count)
    kx, kv = _kernels.spring_jacobian_blocks(cloth.positions, cloth.spring_i, cloth.spring_j,
                                             cloth.rest_lengths, cloth.stiffness, cloth.spring_damping,
                                             clamp=definiteness_fix, backend=backend)
    return ForceJacobians(cloth.spring_i, cloth.spring_j, kx, kv, cloth.particle_count)


def _apply_filter(S, vec):
    return np.einsum("nab,nb->na", S, vec.reshape(-1, 3)).ravel()


def _preconditioner(A, S, kind):
    diag = A.diagonal()
    inv = np.where(diag != 0, 1.0 / np.where(diag != 0, diag, 1.0), 0.0)
    jacobi = lambda r: inv * r  # noqa: E731
    if kind == "jacobi":
        return jacobi
    # incomplete LU of the filtered matrix S A S + (I - S), which is SPD
    n = S.shape[0]
    Sb = sp.block_diag(list(S), format="csr") if n else sp.csr_matrix((0, 0))
    eye = sp.identity(3 * n, format="csr")
    Af = (Sb @ A @ Sb + (eye - Sb)).tocsc()
    try:
        ilu = spla.spilu(Af, drop_tol=1e-5, fill_factor=20)
    except RuntimeError:
        log.debug("ILU factorization failed, falling back to Jacobi")
        return jacobi
    return ilu.solve


def filtered_cg(A, b, x0, free, tol, max_iters, preconditioner="ilu"):
    """Preconditioned CG restricted to the unconstrained subspace.

    ``free`` is either a boolean DOF mask or per-particle ``(n, 3, 3)``
    projectors onto the directions each particle may move in. Constrained
    components keep their value from ``x0``. Convergence:
    ``||S r|| <= tol * ||S (b - A x_c)||`` with ``x_c`` the constrained part of
    ``x0``, the right-hand side of the reduced system.
    """
    free = np.asarray(free)
    if free.dtype == bool:
        S = free.reshape(-1, 3)[:, :, None] * np.eye(3)[None]
    else:
        S = free
    x = x0.copy()
    r = _apply_filter(S, b - A @ x)
    x_c = x0 - _apply_filter(S, x0)
    target = tol * np.linalg.norm(_apply_filter(S, b - A @ x_c))
    rnorm = np.linalg.norm(r)
    if rnorm <= target or rnorm == 0.0:
        return x, 0
    precond = _preconditioner(A, S, preconditioner)
    p = _apply_filter(S, precond(r))
    rz = r @ p
    for it in range(1, max_iters + 1):
        Ap = _apply_filter(S, A @ p)
        pAp = p @ Ap
        if not pAp > 0:
            raise SolverError(f"CG breakdown: system matrix not positive definite (p.Ap = {pAp:.3g})",
                              residual=rnorm)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        rnorm = np.linalg.norm(r)
        if rnorm <= target:
            return x, it
        z = _apply_filter(S, precond(r))
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"CG did not converge in {max_iters} iterations (residual {rnorm:.3e}, "
                      f"target {target:.3e})", residual=rnorm)


# particles within this many epsilons of the surface count as resting contacts;
# a tangential step on a curved capsule lifts a particle slightly off the offset surface
CONTACT_BAND = 2.0


def step(cloth: ClothState, colliders: CapsuleSet | None, cfg: SimConfig = SimConfig(),
         backend=None) -> ClothState:
    """One backward-Euler step linearized once, then collision projection.

    Solves ``(M - h dF/dv - h^2 dF/dx) dv = h (F + h dF/dx v)``. Pinned
    particles are filtered out of the CG iteration; particles resting on a
    capsule and pushed into it have their normal velocity held at zero.
    """
    h = cfg.timestep
    n = cloth.particle_count
    x, v, m = cloth.positions, cloth.velocities, cloth.masses
    g = np.asarray(cfg.gravity, dtype=np.float64)

    f_int, _ = internal_forces(cloth, backend=backend)
    damp_coeff = cfg.air_drag + cloth.global_damping * m  # per particle, force = -coeff * v
    f_other = f_int - damp_coeff[:, None] * v  # everything except gravity

    pinned = cloth.pinned_mask
    connected = np.zeros(n, dtype=bool)
    connected[cloth.spring_i] = True
    connected[cloth.spring_j] = True
    isolated = ~connected & ~pinned

    dv = np.zeros((n, 3))
    contact = np.zeros(n, dtype=bool)
    # decoupled rows: closed form, with gravity kept as an acceleration
    if np.any(isolated):
        mi = m[isolated]
        dv[isolated] = h * (g + f_other[isolated] / mi[:, None]) / (1.0 + h * damp_coeff[isolated] / mi)[:, None]
    v_target = None
    if len(cloth.pin_indices):
        v_target = (cloth.pin_anchors - x[cloth.pin_indices]) / h
        dv[cloth.pin_indices] = v_target - v[cloth.pin_indices]

    solve = connected & ~pinned
    if np.any(solve):
        jac = force_jacobians(cloth, definiteness_fix=cfg.definiteness_fix, backend=backend)
        K = jac.dF_dx()
        D = jac.dF_dv()
        mass3 = np.repeat(m, 3)
        A = sp.diags(mass3 + h * np.repeat(damp_coeff, 3)) - h * D - (h * h) * K
        A = A.tocsr()
        b = h * (f_other.ravel() + m.repeat(3) * np.tile(g, n) + h * (K @ v.ravel()))
        S = solve[:, None, None] * np.eye(3)[None]
        # warm start at the gravity response: the slowest mode of a falling sheet
        dv[solve] = h * g
        if colliders is not None and len(colliders):
            dist, normal = colliders.closest(x)
            load = ((f_other + m[:, None] * g) * normal).sum(axis=1)
            contact = solve & (dist <= CONTACT_BAND * cfg.collision_epsilon + 1e-9) & (load < 0)
            if np.any(contact):
                nc = normal[contact]
                S[contact] -= nc[:, :, None] * nc[:, None, :]
                # normal velocity after the step is zero; tangential part from the warm start
                vn = (v[contact] * nc).sum(axis=1)
                d0 = np.einsum("nab,nb->na", S[contact], dv[contact])
                dv[contact] = d0 - vn[:, None] * nc
        sol, iters = filtered_cg(A, b, dv.ravel(), S, cfg.cg_tolerance, cfg.cg_max_iters,
                                  cfg.preconditioner)
        log.debug("cg converged in %d iterations", iters)
        dv = sol.reshape(n, 3)

    v_new = v + dv
    if np.any(contact):
        # resting contacts feel the same tangential friction as projected ones
        v_new[contact] *= 1.0 - cfg.friction
    x_new = x + h * v_new
    if len(cloth.pin_indices):
        x_new[cloth.pin_indices] = cloth.pin_anchors
        v_new[cloth.pin_indices] = v_target
    if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(v_new))):
        bad = int(np.nonzero(~np.all(np.isfinite(x_new), axis=1) | ~np.all(np.isfinite(v_new), axis=1))[0][0])
        raise NumericError(f"non-finite state after step at particle {bad}")
    out = replace(cloth, positions=x_new, velocities=v_new, time=cloth.time + h)
    if colliders is not None and len(colliders):
        out = resolve_collisions(out, colliders, cfg, backend=backend)
    return out


def explicit_euler_step(cloth: ClothState, cfg: SimConfig = SimConfig()) -> ClothState:
    """Symplectic-free forward Euler with the same forces; reference for stability tests."""
    h = cfg.timestep
    f_int, _ = internal_forces(cloth)
    m = cloth.masses
    damp_coeff = cfg.air_drag + cloth.global_damping * m
    acc = (f_int - damp_coeff[:, None] * cloth.velocities) / m[:, None] + np.asarray(cfg.gravity)
    x_new = cloth.positions + h * cloth.velocities
    v_new = cloth.velocities + h * acc
    if len(cloth.pin_indices):
        x_new[cloth.pin_indices] = cloth.pin_anchors
        v_new[cloth.pin_indices] = 0.0
    return replace(cloth, positions=x_new, velocities=v_new, time=cloth.time + h)


def max_speed(cloth: ClothState) -> float:
    free = ~cloth.pinned_mask
    if not np.any(free):
        return 0.0
    return float(np.sqrt((cloth.velocities[free] ** 2).sum(axis=1)).max())


def drape(cloth: ClothState, colliders: CapsuleSet | None, cfg: SimConfig = SimConfig(),
          max_seconds: float = 10.0, speed_tolerance: float = 1e-4,
          divergence_speed: float = 1e3, backend=None) -> tuple[ClothState, bool]:
    """Step until the fastest free particle is slower than ``speed_tolerance``.

    Returns the final state and whether it converged before ``max_seconds``.
    """
    start = cloth.time
    state = cloth
    while True:
        state = step(state, colliders, cfg, backend=backend)
        speed = max_speed(state)
        if not np.isfinite(speed) or speed > divergence_speed:
            raise InstabilityError(f"drape diverged at t={state.time - start:.3f}s (max speed {speed:.3g} m/s)")
        if speed < speed_tolerance:
            return state, True
        if state.time - start >= max_seconds - 1e-12:
            log.info("drape stopped at %.2fs without converging (max speed %.3g)", max_seconds, speed)
            return state, False
