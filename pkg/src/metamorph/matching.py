"""Registration by geodesic shooting: adaptive-step gradient descent on momenta.

Minimizes

    J(p0, pf) = quad_form(kernel, x0, p0) / (2 gamma_V)
              + pf . D(x0)^-1 pf / (2 gamma_f)
              + gamma_W * fidelity(end state, target)

over the initial momenta, with a coarse-to-fine schedule on the fidelity
kernel widths. The descent accepts a step only if J strictly decreases,
shrinking the step on rejection and growing it on acceptance. Momenta start
at zero, so the whole procedure is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import (
    DynamicsConfig,
    MatchProblem,
    Trajectory,
    integrate_forward,
    objective_gradient,
    reduced_hamiltonian,
)
from .fem import FunctionalMetric
from .fshape import DiscreteFshape, ShootingState
from .kernels import GrassmannKernelSpec, RadialKernelSpec, gaussian
from .varifold import VarifoldKernels, fidelity, to_varifold

STEP_UNDERFLOW_FACTOR = 1e-12


@dataclass(frozen=True)
class ScaleStage:
    """One coarse-to-fine stage: width multipliers and its iteration budget."""

    scale_p: float
    scale_f: float
    iters: int

    def __post_init__(self):
        if self.scale_p <= 0 or self.scale_f <= 0:
            raise ValueError("kernel scales must be positive")
        if self.iters < 0:
            raise ValueError("iteration budget must be nonnegative")


@dataclass(frozen=True)
class MatchConfig:
    """Weights, kernels, schedule and descent settings for one registration."""

    gamma_V: float
    gamma_f: float
    gamma_W: float
    deformation_kernel: RadialKernelSpec
    fidelity_kernels: VarifoldKernels
    metric: FunctionalMetric
    n_steps: int = 10
    scale_schedule: tuple[ScaleStage, ...] = (
        ScaleStage(2.0, 2.0, 100),
        ScaleStage(1.0, 1.0, 100),
    )
    step_init: float = 1.0
    step_shrink: float = 0.5
    step_grow: float = 1.2
    grad_tol: float = 1e-6
    fd_epsilon: float | None = None

    def __post_init__(self):
        if min(self.gamma_V, self.gamma_f, self.gamma_W) <= 0:
            raise ValueError("gamma_V, gamma_f and gamma_W must be positive")
        if self.step_init <= 0 or not 0 < self.step_shrink < 1 or self.step_grow < 1:
            raise ValueError("invalid step-size controls")
        if not self.scale_schedule:
            raise ValueError("scale_schedule must contain at least one stage")

    def dynamics(self) -> DynamicsConfig:
        kwargs = {}
        if self.fd_epsilon is not None:
            kwargs["fd_epsilon"] = self.fd_epsilon
        return DynamicsConfig(
            gamma_V=self.gamma_V,
            gamma_f=self.gamma_f,
            kernel=self.deformation_kernel,
            metric=self.metric,
            n_steps=self.n_steps,
            **kwargs,
        )


def digits_preset(
    gamma_V: float = 1.0, gamma_f: float = 1.0, gamma_W: float = 1.0
) -> MatchConfig:
    """Flat textured-square preset: two-width Gaussian deformation kernel
    (0.2 and 0.1 on a square of edge 2), Gaussian fidelity kernels with
    sigma_p = 0.05 and sigma_f = 0.7, unoriented frame kernel, L2 lumped metric.
    """
    deformation = RadialKernelSpec("gaussian", ((1.0, 0.2), (1.0, 0.1)))
    fid = VarifoldKernels(
        kp=gaussian(0.05), kf=gaussian(0.7), kt=GrassmannKernelSpec("unoriented_squared")
    )
    return MatchConfig(
        gamma_V=gamma_V,
        gamma_f=gamma_f,
        gamma_W=gamma_W,
        deformation_kernel=deformation,
        fidelity_kernels=fid,
        metric=FunctionalMetric(order=0, scheme="lumped"),
    )


@dataclass(frozen=True)
class MatchResult:
    """Optimal momenta, final trajectory and per-iteration history."""

    p0: np.ndarray
    pf: np.ndarray
    trajectory: Trajectory
    objective_history: tuple[tuple[int, float, float, float], ...]
    converged: bool
    reason: str


def _problem(
    source: DiscreteFshape, target_var, cfg: MatchConfig, stage: ScaleStage
) -> MatchProblem:
    return MatchProblem(
        template=source,
        target=target_var,
        fidelity_kernels=cfg.fidelity_kernels.rescaled(stage.scale_p, stage.scale_f),
        gamma_W=cfg.gamma_W,
        dynamics=cfg.dynamics(),
    )


def objective(
    p0: np.ndarray, pf: np.ndarray, problem: MatchProblem
) -> tuple[float, float, float]:
    """Objective value and its (energy, fidelity) split; J = energy + gamma_W * fidelity."""
    J, energy, fid, _ = _objective_with_traj(p0, pf, problem)
    return J, energy, fid


def _objective_with_traj(p0, pf, problem: MatchProblem):
    template = problem.template
    cfg = problem.dynamics
    state0 = ShootingState(x=template.vertices, f=template.signals, p=p0, pf=pf)
    energy = reduced_hamiltonian(state0, template, cfg)
    traj = integrate_forward(state0, template, cfg)
    end = traj.final
    fs1 = template.with_(vertices=end.x, signals=end.f)
    fid = fidelity(fs1, problem.target, problem.fidelity_kernels)
    return energy + problem.gamma_W * fid, energy, fid, traj


def shoot(
    source: DiscreteFshape, p0: np.ndarray, pf: np.ndarray, cfg: MatchConfig
) -> Trajectory:
    """Forward geodesic from the source with the given momenta."""
    state0 = ShootingState(x=source.vertices, f=source.signals, p=p0, pf=pf)
    return integrate_forward(state0, source, cfg.dynamics())


def match(
    source: DiscreteFshape, target: DiscreteFshape, cfg: MatchConfig
) -> MatchResult:
    """Register source onto target by gradient descent on the initial momenta.

    Runs every stage of the coarse-to-fine schedule, warm-starting each stage
    with the momenta of the previous one. Within a stage the accepted
    objective values decrease strictly; the fidelity kernels (and hence J)
    change at stage boundaries.
    """
    if source.dim_d != target.dim_d or source.dim_n != target.dim_n:
        raise ValueError("source and target must share simplex/ambient dimensions")
    target_var = to_varifold(target)
    p0 = np.zeros_like(source.vertices)
    pf = np.zeros(source.n_vertices)
    history: list[tuple[int, float, float, float]] = []
    iteration = 0
    step = cfg.step_init
    converged = False
    reason = "max iterations"
    for stage in cfg.scale_schedule:
        problem = _problem(source, target_var, cfg, stage)
        J, energy, fid, _ = _objective_with_traj(p0, pf, problem)
        if not np.isfinite(J):
            raise RuntimeError(f"objective is not finite at initialization ({J})")
        history.append((iteration, J, energy, fid))
        converged = False
        reason = "max iterations"
        for _ in range(stage.iters):
            gp, gpf = objective_gradient(p0, pf, problem)
            gnorm = float(np.sqrt((gp**2).sum() + (gpf**2).sum()))
            if gnorm < cfg.grad_tol:
                converged = True
                reason = "gradient tolerance reached"
                break
            accepted = False
            while step >= STEP_UNDERFLOW_FACTOR * cfg.step_init:
                cand_p0 = p0 - step * gp
                cand_pf = pf - step * gpf
                try:
                    Jc, ec, fc, _ = _objective_with_traj(cand_p0, cand_pf, problem)
                except (ValueError, RuntimeError):
                    # blown-up candidate (degenerate cells, solver failure)
                    Jc = np.inf
                    ec = fc = np.inf
                if np.isfinite(Jc) and Jc < J:
                    p0, pf = cand_p0, cand_pf
                    J, energy, fid = Jc, ec, fc
                    iteration += 1
                    history.append((iteration, J, energy, fid))
                    step *= cfg.step_grow
                    accepted = True
                    break
                step *= cfg.step_shrink
            if not accepted:
                reason = "step underflow"
                converged = False
                break
        if reason == "step underflow":
            break
    final_problem = _problem(source, target_var, cfg, cfg.scale_schedule[-1])
    _, _, _, trajectory = _objective_with_traj(p0, pf, final_problem)
    return MatchResult(
        p0=p0,
        pf=pf,
        trajectory=trajectory,
        objective_history=tuple(history),
        converged=converged,
        reason=reason,
    )
