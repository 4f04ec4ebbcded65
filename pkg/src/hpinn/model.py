"""Hybrid discrete-time training: residual assembly, loss, Adam loop and
multi-step marching.

One implicit Runge-Kutta step is learned at a time.  The network outputs all
q+1 stage values at once; the PDE operator applied to the first q stages uses
automatic differentiation for the convection term at smooth points and the
WENO-Z divided difference at points flagged by the discontinuity indicator
(the viscous term always comes from automatic differentiation).  Folding the
stage values back through the tableau must reproduce the known data u^n at
every collocation point, which together with the boundary mismatch forms the
training loss.

The discontinuity mask and the splitting speed lambda are computed once per
time step from the known data u^n and then frozen, so the loss surface stays
fixed and differentiable during the step; the mask is dilated a few cells to
cover shock motion within dt.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Graph, Jet, Value
from .irk import ButcherTableau, gauss_legendre_tableau
from .network import NetworkConfig, NetworkParameters, forward_stages, init_xavier
from .pde import PdeSpec
from .refsolver import SolverConfig, relative_error, solve
from .weno import (
    DEFAULT_CONSTANTS,
    DiscontinuityMask,
    GridField,
    WenoConstants,
    dilate_mask,
    discontinuity_flags,
    weno_flux_divergence,
)

__all__ = [
    "Discretization",
    "TrainingConfig",
    "TimeStepState",
    "LossBreakdown",
    "StepDiagnostics",
    "MarchResult",
    "TrainingDivergedError",
    "Adam",
    "stage_fields",
    "hybrid_convection",
    "residual_operator",
    "stage_targets",
    "compute_loss",
    "build_loss_graph",
    "train_step",
    "march",
]


@dataclass(frozen=True)
class Discretization:
    """Spatial/temporal discretization of one experiment."""

    n_points: int = 300
    dt: float = 0.1
    q_stages: int = 10
    mask_dilation: int = 3
    constants: WenoConstants = field(default_factory=WenoConstants)
    indicator_on_flux: bool = False  # flag on f(u) instead of u
    hybrid_enabled: bool = True  # False reproduces the plain discrete-time PINN
    lambda_safety: float = 1.1
    mask_recompute_every: int = 0  # 0 = mask frozen for the whole step


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 1e-4
    loss_tolerance: float = 1e-5
    max_iterations: int = 200_000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    warm_start: bool = True
    loss_reduction: str = "mean"  # "mean" (stopping rule scale) or "sum" (raw)

    def __post_init__(self):
        if self.learning_rate <= 0 or self.loss_tolerance <= 0:
            raise ValueError("learning rate and tolerance must be positive")
        if self.loss_reduction not in ("mean", "sum"):
            raise ValueError("loss_reduction must be 'mean' or 'sum'")


@dataclass
class TimeStepState:
    """Everything frozen for one training step."""

    t_n: float
    data: GridField
    mask: DiscontinuityMask
    lam: float

    def __post_init__(self):
        if len(self.data) != len(self.mask):
            raise ValueError("data and mask must have equal length")


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    l_pde: float
    l_bc: float


@dataclass(frozen=True)
class StepDiagnostics:
    step: int
    t_start: float
    iterations: int
    initial_loss: float
    final_loss: float
    loss_pde: float
    loss_bc: float
    flagged_cells: int
    converged: bool
    wall_time: float


@dataclass
class MarchResult:
    times: list
    fields: list  # GridField at every step boundary, initial condition first
    errors: dict  # eval time -> global relative error vs the reference run
    reference: dict  # eval time -> reference GridField
    diagnostics: list


class TrainingDivergedError(RuntimeError):
    def __init__(self, message, iteration=None, parameter_norm=None):
        super().__init__(message)
        self.iteration = iteration
        self.parameter_norm = parameter_norm


class Adam:
    """Full-batch Adam over a list of parameter leaves."""

    def __init__(self, leaves, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.leaves = list(leaves)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.leaves]
        self.v = [np.zeros_like(p.data) for p in self.leaves]

    def step(self):
        self.t += 1
        rate = self.lr * np.sqrt(1.0 - self.beta2**self.t) / (1.0 - self.beta1**self.t)
        for p, m, v in zip(self.leaves, self.m, self.v):
            g = p.grad if isinstance(p.grad, np.ndarray) else np.full_like(p.data, p.grad)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data = p.data - rate * m / (np.sqrt(v) + self.eps)


# -- graph assembly -----------------------------------------------------------


def stage_fields(params: NetworkParameters, grid: GridField, order: int = 2) -> Jet:
    """Network outputs over the collocation grid as a (q+1, N) jet."""
    return forward_stages(params, grid.x, order=order)


def hybrid_convection(stages: Jet, mask: DiscontinuityMask, pde: PdeSpec, lam: float,
                      dx: float, consts: WenoConstants = DEFAULT_CONSTANTS,
                      force_blend: bool = False) -> Value:
    """f(u)_x per stage row: autodiff at smooth points, WENO-Z where flagged.

    The WENO branch is built from the same stage nodes, so parameter
    gradients flow through the stencil arithmetic; it uses the step-frozen
    lam.  With an all-zero mask (and no forcing) the result is exactly the
    autodiff term.
    """
    conv_ad = pde.dflux(stages.u) * stages.dx
    if mask.count() == 0 and not force_blend:
        return conv_ad
    n = len(mask)
    ue = ad.pad_const(stages.u, 3, 3, pde.boundary_value)
    fe = pde.flux(ue)
    fp = (fe + lam * ue) * 0.5
    fm = (fe - lam * ue) * 0.5
    conv_weno = weno_flux_divergence(fp, fm, n, dx, win=ad.window, consts=consts)
    # blend with the 0/1 mask as constants; each branch survives exactly at
    # its own points (1*x + 0*y == x in floating point)
    m = mask.flags.astype(np.float64)
    return conv_ad * (1.0 - m) + conv_weno * m


def residual_operator(stages: Jet, mask: DiscontinuityMask, pde: PdeSpec, lam: float,
                      grid: GridField, t_n: float, dt: float, tableau: ButcherTableau,
                      consts: WenoConstants = DEFAULT_CONSTANTS,
                      force_blend: bool = False) -> Value:
    """N[u] = f(u)_x - nu*u_xx - h for the first q stage rows.

    The viscous term always uses the autodiff second derivative, in smooth
    and flagged cells alike.
    """
    q = tableau.q
    rows = Jet(
        ad.rows(stages.u, 0, q),
        None if stages.dx is None else ad.rows(stages.dx, 0, q),
        None if stages.dxx is None else ad.rows(stages.dxx, 0, q),
        order=stages.order,
    )
    resid = hybrid_convection(rows, mask, pde, lam, grid.dx, consts, force_blend)
    if pde.viscosity > 0.0:
        if rows.dxx is None:
            raise ValueError("viscous residual needs order-2 stage fields")
        resid = resid - pde.viscosity * rows.dxx
    if pde.source is not None:
        h = np.stack([pde.source(grid.x, t_n + ci * dt) for ci in tableau.c])
        resid = resid - Value(h, label="source")
    return resid


def stage_targets(stage_values: Value, residuals: Value, tableau: ButcherTableau,
                  dt: float) -> Value:
    """Fold stage values and residuals back to the step start.

    Row i (i <= q) is u^{n+c_i} + dt sum_j a_ij N_j; the last row is
    u^{n+1} + dt sum_j b_j N_j.  Every row should match the same datum u^n.
    """
    q = tableau.q
    if stage_values.data.shape[0] != q + 1 or residuals.data.shape[0] != q:
        raise ValueError("stage/residual row counts do not match the tableau")
    mix = np.vstack([tableau.a, tableau.b[None, :]]) * dt
    return stage_values + ad.matmul(Value(mix, label="tableau"), residuals)


def compute_loss(targets: Value, stage_values: Value, data: np.ndarray,
                 boundary_value: float, reduction: str = "mean"):
    """L = L_PDE + L_BC as graph nodes.

    L_PDE averages the squared target-vs-data mismatch over all collocation
    points and all q+1 targets; L_BC averages the squared stage outputs
    against the Dirichlet value at both endpoints.  "sum" keeps the raw sums
    of the discrete-time formulation instead.
    """
    reduce = ad.mean if reduction == "mean" else ad.summation
    n = data.shape[0]
    diff = targets - Value(data, label="data")
    l_pde = reduce(diff * diff)
    bvals = ad.take_cols(stage_values, (0, n - 1))
    bdiff = bvals - boundary_value if boundary_value != 0.0 else bvals
    l_bc = reduce(bdiff * bdiff)
    total = l_pde + l_bc
    return total, l_pde, l_bc


def build_loss_graph(params: NetworkParameters, state: TimeStepState, tableau: ButcherTableau,
                     pde: PdeSpec, disc: Discretization, reduction: str = "mean",
                     force_blend: bool = False):
    """Assemble the full training loss for one step; returns (graph, losses, jet)."""
    order = 2 if pde.viscosity > 0.0 else 1
    jet = stage_fields(params, state.data, order=order)
    resid = residual_operator(
        jet, state.mask, pde, state.lam, state.data, state.t_n, disc.dt, tableau,
        consts=disc.constants, force_blend=force_blend,
    )
    targets = stage_targets(jet.u, resid, tableau, disc.dt)
    total, l_pde, l_bc = compute_loss(
        targets, jet.u, state.data.values, pde.boundary_value, reduction
    )
    return Graph(total), (total, l_pde, l_bc), jet


# -- per-step training and marching -------------------------------------------


def step_state(data: GridField, t_n: float, pde: PdeSpec, disc: Discretization) -> TimeStepState:
    """Freeze the mask and splitting speed for one step from the known data."""
    if disc.hybrid_enabled:
        transform = pde.flux if disc.indicator_on_flux else None
        mask = discontinuity_flags(data, disc.constants, transform=transform)
        mask = dilate_mask(mask, disc.mask_dilation)
    else:
        mask = DiscontinuityMask(np.zeros(len(data), dtype=np.int64))
    lam = disc.lambda_safety * pde.max_speed(data.values)
    return TimeStepState(t_n=t_n, data=data, mask=mask, lam=lam)


def train_step(state: TimeStepState, params: NetworkParameters, tableau: ButcherTableau,
               pde: PdeSpec, disc: Discretization, config: TrainingConfig,
               step_index: int = 0):
    """Adam until the loss drops below tolerance or the iteration cap.

    Returns (params, predicted u^{n+1} on the grid, StepDiagnostics).  The
    mask and lam stay frozen unless mask_recompute_every asks for periodic
    re-flagging from the current prediction.
    """
    started = time.perf_counter()
    q = tableau.q
    graph, (total, l_pde, l_bc), jet = build_loss_graph(
        params, state, tableau, pde, disc, config.loss_reduction
    )
    adam = Adam(params.leaves(), config.learning_rate, config.beta1, config.beta2, config.eps)

    def check_finite(loss_value, iteration):
        if not np.isfinite(loss_value):
            norm = float(np.sqrt(sum(np.sum(p.data**2) for p in params.leaves())))
            raise TrainingDivergedError(
                f"non-finite loss at step {step_index}, iteration {iteration}",
                iteration=iteration,
                parameter_norm=norm,
            )

    initial_loss = float(total.data)
    check_finite(initial_loss, 0)
    loss = initial_loss
    iterations = 0
    while loss >= config.loss_tolerance and iterations < config.max_iterations:
        graph.backward()
        adam.step()
        graph.refresh()
        iterations += 1
        loss = float(total.data)
        check_finite(loss, iterations)
        if (
            disc.mask_recompute_every > 0
            and iterations % disc.mask_recompute_every == 0
            and disc.hybrid_enabled
        ):
            current = GridField(jet.u.data[q].copy(), state.data.x0, state.data.dx)
            fresh = dilate_mask(
                discontinuity_flags(
                    current, disc.constants,
                    transform=pde.flux if disc.indicator_on_flux else None,
                ),
                disc.mask_dilation,
            )
            if not np.array_equal(fresh.flags, state.mask.flags):
                state = replace_state_mask(state, fresh)
                graph, (total, l_pde, l_bc), jet = build_loss_graph(
                    params, state, tableau, pde, disc, config.loss_reduction
                )
                loss = float(total.data)

    u_next = GridField(jet.u.data[q].copy(), state.data.x0, state.data.dx)
    diag = StepDiagnostics(
        step=step_index,
        t_start=state.t_n,
        iterations=iterations,
        initial_loss=initial_loss,
        final_loss=loss,
        loss_pde=float(l_pde.data),
        loss_bc=float(l_bc.data),
        flagged_cells=state.mask.count(),
        converged=bool(loss < config.loss_tolerance),
        wall_time=time.perf_counter() - started,
    )
    return params, u_next, diag


def replace_state_mask(state: TimeStepState, mask: DiscontinuityMask) -> TimeStepState:
    return TimeStepState(t_n=state.t_n, data=state.data, mask=mask, lam=state.lam)


def march(pde: PdeSpec, disc: Discretization, net_config: NetworkConfig,
          training: TrainingConfig, t_final: float, eval_times=(),
          ref_n_cells: int = 1000, ref_cfl: float = 0.4,
          on_step: Optional[Callable] = None) -> MarchResult:
    """March from the exact initial condition to t_final, one trained step at
    a time, and report global relative errors against the reference solver.

    Every step re-freezes the mask and lam from the current data; by default
    each step warm-starts from the previous step's trained parameters.
    """
    if pde.initial is None:
        raise ValueError("march needs an initial condition on the PdeSpec")
    n_steps = int(round(t_final / disc.dt))
    if n_steps < 1 or abs(n_steps * disc.dt - t_final) > 1e-12:
        raise ValueError(f"t_final={t_final} is not a multiple of dt={disc.dt}")
    eval_times = tuple(float(t) for t in eval_times)
    for t in eval_times:
        k = int(round(t / disc.dt))
        if not 0 <= k <= n_steps or abs(k * disc.dt - t) > 1e-9:
            raise ValueError(f"eval time {t} does not land on a step boundary")

    if net_config.outputs != disc.q_stages + 1:
        net_config = NetworkConfig(
            hidden_layers=net_config.hidden_layers,
            width=net_config.width,
            outputs=disc.q_stages + 1,
            seed=net_config.seed,
        )
    tableau = gauss_legendre_tableau(disc.q_stages)

    x_left, x_right = pde.domain
    dx = (x_right - x_left) / (disc.n_points - 1)
    x = x_left + dx * np.arange(disc.n_points)
    fields = [GridField(pde.initial(x), x_left, dx)]
    times = [0.0]

    params = init_xavier(net_config)
    diagnostics = []
    for n in range(n_steps):
        if n > 0 and not training.warm_start:
            params = init_xavier(replace(net_config, seed=net_config.seed + n))
        state = step_state(fields[-1], times[-1], pde, disc)
        try:
            params, u_next, diag = train_step(
                state, params, tableau, pde, disc, training, step_index=n
            )
        except TrainingDivergedError as err:
            raise TrainingDivergedError(
                f"step {n} (t={times[-1]:.6g}) aborted: {err}",
                iteration=err.iteration,
                parameter_norm=err.parameter_norm,
            ) from err
        fields.append(u_next)
        times.append((n + 1) * disc.dt)
        diagnostics.append(diag)
        if on_step is not None:
            on_step(diag)

    errors, reference = {}, {}
    ref_times = [t for t in eval_times if t > 0.0]
    if ref_times:
        ref_config = SolverConfig(
            pde=pde, n_cells=ref_n_cells, cfl=ref_cfl,
            t_final=max(ref_times), snapshot_times=tuple(ref_times),
        )
        _, snapshots = solve(ref_config)
        for t, ref_field in zip(ref_times, snapshots):
            k = int(round(t / disc.dt))
            errors[t] = relative_error(fields[k], ref_field)
            reference[t] = ref_field
    return MarchResult(
        times=times, fields=fields, errors=errors,
        reference=reference, diagnostics=diagnostics,
    )
