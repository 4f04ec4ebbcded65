"""Fifth-order WENO-Z convection discretization on a uniform grid, plus the
scale-separation indicator that classifies each grid point as smooth or
discontinuous.

The stencil kernels are plain arithmetic over their operands, so the same
formulas serve two backends: ndarrays (reference solver, indicator) and
autodiff Values (hybrid training graphs, where parameter gradients must flow
through the reconstruction).

Smoothness indicators use the Jiang-Shu form with BOTH terms squared.  The
unsquared 13/12 term sometimes seen in print can go negative, which breaks
the weight formula; the squared form is the standard one and is what is
implemented here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GridField",
    "FluxSplit",
    "DiscontinuityMask",
    "WenoConstants",
    "GhostExtension",
    "DEFAULT_CONSTANTS",
    "candidate_fluxes",
    "smoothness_indicators",
    "wenoz_weights",
    "reconstruct_interface_flux",
    "beta3",
    "lax_friedrichs_split",
    "weno_derivative",
    "weno_flux_divergence",
    "discontinuity_flags",
    "dilate_mask",
]

GHOST = 3  # stencil half-width: three ghost cells on each side


@dataclass
class GridField:
    """Scalar samples on a uniform 1-D grid; the currency between modules."""

    values: np.ndarray
    x0: float
    dx: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError("GridField values must be one-dimensional")
        if self.values.shape[0] < 2 * GHOST + 1:
            raise ValueError("GridField needs at least 7 points (one WENO stencil)")
        if self.dx <= 0:
            raise ValueError("grid spacing must be positive")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("GridField values must be finite")

    def __len__(self):
        return self.values.shape[0]

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(len(self))

    def total_variation(self) -> float:
        return float(np.sum(np.abs(np.diff(self.values))))


@dataclass(frozen=True)
class WenoConstants:
    """Reconstruction and indicator parameters (1-D defaults)."""

    eps: float = 1e-40               # keeps the weight denominators positive
    d: tuple = (0.1, 0.6, 0.3)       # optimal (linear) weights
    delta: float = 1e-4              # indicator regularization, 1-D value
    p: int = 6                       # scale-separation exponent
    c_t: float = 5e-4                # indicator threshold


DEFAULT_CONSTANTS = WenoConstants()


@dataclass(frozen=True)
class GhostExtension:
    """Ghost-cell policy for the three halo cells each side.

    "reflect_odd" mirrors the interior oddly about the boundary value
    (ghost = 2*value - interior), the exact continuation of a pinned
    Dirichlet wall; "constant" holds the boundary value itself; "periodic"
    wraps.  Constant extension is only first-order at the wall and lets
    boundary error dominate fine-grid runs, so the solvers default to
    reflection.
    """

    kind: str = "reflect_odd"
    value: float = 0.0

    def apply(self, values: np.ndarray, width: int = GHOST) -> np.ndarray:
        if self.kind == "constant":
            return np.pad(values, width, constant_values=self.value)
        if self.kind == "periodic":
            return np.concatenate([values[-width:], values, values[:width]])
        if self.kind == "reflect_odd":
            left = 2.0 * self.value - values[width:0:-1]
            right = 2.0 * self.value - values[-2 : -width - 2 : -1]
            return np.concatenate([left, values, right])
        raise ValueError(f"unknown extension kind: {self.kind!r}")


@dataclass
class FluxSplit:
    """Monotone split f = f+ + f- from global Lax-Friedrichs."""

    fplus: GridField
    fminus: GridField
    lam: float


@dataclass
class DiscontinuityMask:
    """Per-point binary flag: 1 selects the WENO convection path."""

    flags: np.ndarray

    def __post_init__(self):
        self.flags = np.asarray(self.flags, dtype=np.int64)
        bad = (self.flags != 0) & (self.flags != 1)
        if bad.any():
            raise ValueError("mask entries must be 0 or 1")

    def __len__(self):
        return self.flags.shape[0]

    def count(self) -> int:
        return int(self.flags.sum())


# -- stencil kernels (backend-agnostic arithmetic) ---------------------------


def candidate_fluxes(stencil):
    """Third-order candidate fluxes at x_{j+1/2} from f_{j-2..j+2}."""
    fm2, fm1, f0, fp1, fp2 = stencil
    f_hat0 = (2.0 * fm2 - 7.0 * fm1 + 11.0 * f0) * (1.0 / 6.0)
    f_hat1 = (-1.0 * fm1 + 5.0 * f0 + 2.0 * fp1) * (1.0 / 6.0)
    f_hat2 = (2.0 * f0 + 5.0 * fp1 - 1.0 * fp2) * (1.0 / 6.0)
    return f_hat0, f_hat1, f_hat2


def smoothness_indicators(stencil):
    """Jiang-Shu beta_0..beta_2 over the three substencils (both terms squared)."""
    fm2, fm1, f0, fp1, fp2 = stencil
    b0 = (13.0 / 12.0) * (fm2 - 2.0 * fm1 + f0) ** 2 + 0.25 * (fm2 - 4.0 * fm1 + 3.0 * f0) ** 2
    b1 = (13.0 / 12.0) * (fm1 - 2.0 * f0 + fp1) ** 2 + 0.25 * (fm1 - fp1) ** 2
    b2 = (13.0 / 12.0) * (f0 - 2.0 * fp1 + fp2) ** 2 + 0.25 * (3.0 * f0 - 4.0 * fp1 + fp2) ** 2
    return b0, b1, b2


def wenoz_weights(betas, consts: WenoConstants = DEFAULT_CONSTANTS):
    """Nonlinear WENO-Z weights with global indicator tau5 = |beta0 - beta2|."""
    b0, b1, b2 = betas
    tau5 = abs(b0 - b2)
    d0, d1, d2 = consts.d
    eps = consts.eps
    a0 = d0 * (1.0 + (tau5 / (b0 + eps)) ** 2)
    a1 = d1 * (1.0 + (tau5 / (b1 + eps)) ** 2)
    a2 = d2 * (1.0 + (tau5 / (b2 + eps)) ** 2)
    asum = a0 + a1 + a2
    return a0 / asum, a1 / asum, a2 / asum


def reconstruct_interface_flux(stencil, consts: WenoConstants = DEFAULT_CONSTANTS):
    """Fifth-order WENO-Z flux at x_{j+1/2} from the upwind 5-point stencil."""
    c0, c1, c2 = candidate_fluxes(stencil)
    w0, w1, w2 = wenoz_weights(smoothness_indicators(stencil), consts)
    return w0 * c0 + w1 * c1 + w2 * c2


def beta3(stencil):
    """Downstream smoothness indicator over f_{j+1..j+3} (indicator only)."""
    f1, f2, f3 = stencil
    return (1.0 / 3.0) * (
        f1 * (22.0 * f1 - 73.0 * f2 + 29.0 * f3)
        + f2 * (61.0 * f2 - 49.0 * f3)
        + 10.0 * f3 * f3
    )


# -- field-level operators ----------------------------------------------------


def _np_window(a, start, length):
    return a[..., start : start + length]


def weno_flux_divergence(fplus_ext, fminus_ext, n, dx, win=_np_window,
                         consts: WenoConstants = DEFAULT_CONSTANTS):
    """(f_hat_{i+1/2} - f_hat_{i-1/2}) / dx from split fluxes with 3 ghosts.

    `fplus_ext`/`fminus_ext` carry the split flux on the extended grid
    (..., n + 6).  The positive part is reconstructed from left-biased
    stencils; the negative part mirrors them about the interface.  `win`
    abstracts slicing so the same wiring drives ndarrays and graph nodes.
    """
    n_ifaces = n + 1  # interfaces i + 1/2 for i = -1 .. n-1
    sp = tuple(win(fplus_ext, 2 + m, n_ifaces) for m in (-2, -1, 0, 1, 2))
    sm = tuple(win(fminus_ext, 2 + m, n_ifaces) for m in (3, 2, 1, 0, -1))
    fhat = reconstruct_interface_flux(sp, consts) + reconstruct_interface_flux(sm, consts)
    return (win(fhat, 1, n) - win(fhat, 0, n)) * (1.0 / dx)


def lax_friedrichs_split(u: GridField, flux_fn, dflux_fn, lam: float) -> FluxSplit:
    """Global Lax-Friedrichs splitting f+- = (f(u) +- lam*u) / 2.

    Raises if lam < max|f'(u)| anywhere: the split fluxes would lose
    monotonicity and the upwind-biased reconstruction its justification.
    """
    speeds = np.abs(dflux_fn(u.values))
    if lam < np.max(speeds):
        raise ValueError(
            f"lambda={lam:.6g} below max|f'(u)|={np.max(speeds):.6g}; splitting not monotone"
        )
    f = flux_fn(u.values)
    fp = 0.5 * (f + lam * u.values)
    fm = 0.5 * (f - lam * u.values)
    return FluxSplit(
        fplus=GridField(fp, u.x0, u.dx),
        fminus=GridField(fm, u.x0, u.dx),
        lam=lam,
    )


def weno_derivative(u: GridField, flux_fn, lam: float,
                    extension: GhostExtension,
                    consts: WenoConstants = DEFAULT_CONSTANTS) -> GridField:
    """d f(u) / dx at every grid point via conservative WENO-Z differences."""
    n = len(u)
    if n < 2 * GHOST + 1:
        raise ValueError(f"need at least {2 * GHOST + 1} grid points, got {n}")
    ue = extension.apply(u.values)
    fe = flux_fn(ue)
    fp = 0.5 * (fe + lam * ue)
    fm = 0.5 * (fe - lam * ue)
    div = weno_flux_divergence(fp, fm, n, u.dx, consts=consts)
    return GridField(div, u.x0, u.dx)


# -- discontinuity indicator --------------------------------------------------


def discontinuity_flags(u: GridField, consts: WenoConstants = DEFAULT_CONSTANTS,
                        transform=None) -> DiscontinuityMask:
    """Classify each point as smooth (0) or discontinuous (1).

    At point j the four indicators are beta_0..beta_2 over the centered
    5-stencil and beta_3 over {j+1, j+2, j+3}; the normalized scale-separation
    measures chi_k = gamma_k / sum(gamma) with gamma_k = (beta_k + delta)^-p
    must ALL exceed c_t for the point to count as smooth.

    Flags are evaluated only where the full stencil fits inside the domain
    (j in [2, n-4]); the remaining boundary points stay 0.  There is no
    off-domain data to pad with, and padding with the boundary value would
    manufacture a kink that flags smooth fields at the wall.

    `transform` optionally maps the field values first (e.g. the flux f(u)
    when flagging on flux rather than on u).
    """
    f = u.values if transform is None else np.asarray(transform(u.values), dtype=np.float64)
    n = f.shape[0]
    if n < 8:
        raise ValueError(f"indicator needs at least 8 points, got {n}")
    m = n - 5  # points j = 2 .. n-4
    s = tuple(f[k : k + m] for k in range(6))  # offsets j-2 .. j+3
    b0, b1, b2 = smoothness_indicators(s[:5])
    b3 = beta3(s[3:6])
    gamma = (np.stack([b0, b1, b2, b3]) + consts.delta) ** (-float(consts.p))
    chi = gamma / gamma.sum(axis=0)
    flags = np.zeros(n, dtype=np.int64)
    flags[2 : n - 3] = ~np.all(chi > consts.c_t, axis=0)
    return DiscontinuityMask(flags)


def dilate_mask(mask: DiscontinuityMask, radius: int) -> DiscontinuityMask:
    """Grow flagged regions by `radius` cells on each side."""
    if radius <= 0 or mask.count() == 0:
        return DiscontinuityMask(mask.flags.copy())
    kernel = np.ones(2 * radius + 1)
    grown = np.convolve(mask.flags.astype(np.float64), kernel, mode="same") > 0.5
    return DiscontinuityMask(grown.astype(np.int64))
