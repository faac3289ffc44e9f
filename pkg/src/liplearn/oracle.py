"""Closed-form ground truth for the 1D two-label problem and independent
numerical oracles used to validate it.

The model: unlabeled data on [-1, 1] with density A on delta <= |x| <= 1
and mu*A on |x| <= delta, labels -1 at -x1 and +1 at x2. The continuum
limit of the learned function is piecewise linear with slopes balancing
f(x)^(2*alpha) |u'(x)| across the three interior intervals and constant
outside the labels; classification accuracy (fraction of the domain, in
uniform measure, on the correct side of the zero crossing) has an exact
two-branch formula.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize

from .graph import Kernel, kernel_integral


@dataclass(frozen=True)
class OneDModel:
    """Parameters (mu, delta, x1, x2, alpha) of the analytic 1D problem."""

    mu: float
    delta: float
    x1: float
    x2: float
    alpha: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.mu <= 1.0):
            raise ValueError(f"mu must lie in (0, 1], got {self.mu}")
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        for name, v in (("x1", self.x1), ("x2", self.x2)):
            if not (self.delta <= v <= 1.0):
                raise ValueError(f"{name} must lie in [delta, 1], got {v}")

    @property
    def normalization(self) -> float:
        """A with A*(2 - 2*delta) + mu*A*2*delta = 1."""
        return 1.0 / (2.0 * (self.delta * self.mu + 1.0 - self.delta))

    @property
    def slope(self) -> float:
        """Outer-interval slope m; the dip interval carries mu^(-2*alpha)*m."""
        return 2.0 / (self.x1 + self.x2 - 2.0 * self.delta + 2.0 * self.delta * self.mu ** (-2.0 * self.alpha))

    def density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        a = self.normalization
        return np.where(np.abs(x) <= self.delta, self.mu * a, a)


def eval_u_alpha(model: OneDModel, x) -> np.ndarray:
    """The five-branch piecewise-linear limit profile; -1 left of -x1, +1
    right of x2, continuous and nondecreasing in between."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < -1.0) or np.any(x > 1.0):
        raise ValueError("x must lie in [-1, 1]")
    mu, d, x1, x2, al = model.mu, model.delta, model.x1, model.x2, model.alpha
    m = model.slope
    mi = mu ** (-2.0 * al)
    out = np.empty_like(x)
    out[x <= -x1] = -1.0
    b = (x > -x1) & (x <= -d)
    out[b] = m * (x[b] + x1) - 1.0
    b = (x > -d) & (x <= d)
    out[b] = mi * m * (x[b] + d + mu ** (2.0 * al) * (x1 - d)) - 1.0
    b = (x > d) & (x <= x2)
    out[b] = m * (x[b] - x2) + 1.0
    out[x > x2] = 1.0
    return out


def zero_crossing(model: OneDModel) -> float:
    """Unique zero of the profile, found by bisection on eval_u_alpha
    (independent of the closed-form crossing used in the accuracy proof)."""
    f = lambda t: float(eval_u_alpha(model, t))
    return float(optimize.brentq(f, -model.x1, model.x2, xtol=1e-14))


def closed_form_accuracy(model: OneDModel) -> float:
    """Exact classification accuracy of the limit profile against the sign
    label, in uniform measure on [-1, 1]: two branches depending on
    whether the crossing lands inside or outside the dip."""
    gap = abs(model.x2 - model.x1)
    t = 2.0 * model.delta * model.mu ** (-2.0 * model.alpha)
    if t <= gap:
        return 1.0 - 0.5 * model.delta - 0.25 * (gap - t)
    return 1.0 - 0.25 * model.mu ** (2.0 * model.alpha) * gap


def accuracy_by_crossing(model: OneDModel) -> float:
    """Accuracy recomputed from the numerically located zero crossing:
    the correctly-signed measure is 1 - |crossing|/2. Serves as the
    independent check of the closed form."""
    return 1.0 - 0.5 * abs(zero_crossing(model))


def variational_grid_oracle(model: OneDModel, grid_n: int = 2001) -> tuple[np.ndarray, np.ndarray]:
    """Independent solution on a uniform grid from the variational
    structure alone: constant outside the labels, and the weighted slope
    f^(2*alpha) |u'| equal across the three interior intervals.  The three
    slopes solve a small linear system built from that balance and the
    total rise; the profile is then integrated piecewise.  Nothing here
    uses the closed-form slope formula."""
    if grid_n < 100:
        raise ValueError("grid_n must be at least 100")
    mu, d, x1, x2, al = model.mu, model.delta, model.x1, model.x2, model.alpha
    if x1 <= d or x2 <= d:
        raise ValueError("degenerate model: x1 and x2 must exceed delta")
    a = model.normalization
    # unknown slopes (s1, s2, s3) on (-x1,-delta), (-delta,delta), (delta,x2):
    #   a^2al * s1 = (mu a)^2al * s2,  a^2al * s3 = (mu a)^2al * s2,
    #   (x1-delta) s1 + 2 delta s2 + (x2-delta) s3 = 2
    w_out = a ** (2.0 * al)
    w_in = (mu * a) ** (2.0 * al)
    mat = np.array([
        [w_out, -w_in, 0.0],
        [0.0, -w_in, w_out],
        [x1 - d, 2.0 * d, x2 - d],
    ])
    s1, s2, s3 = np.linalg.solve(mat, np.array([0.0, 0.0, 2.0]))

    xs = np.linspace(-1.0, 1.0, grid_n)
    u = np.empty_like(xs)
    for i, x in enumerate(xs):
        if x <= -x1:
            u[i] = -1.0
        elif x <= -d:
            u[i] = -1.0 + s1 * (x + x1)
        elif x <= d:
            u[i] = -1.0 + s1 * (x1 - d) + s2 * (x + d)
        elif x <= x2:
            u[i] = -1.0 + s1 * (x1 - d) + s2 * 2.0 * d + s3 * (x - d)
        else:
            u[i] = 1.0
    return xs, u


def pair_density_oracle(kernel: Kernel, z, grid_n: int = 4001):
    """Reference density C_Phi * (rho*rho)(z) for the all-pairs sum cloud
    built from a Uniform[0,1] base sample: numerical self-convolution of
    the base density on a fine grid, evaluated at z (0 outside [0, 2])."""
    z = np.asarray(z, dtype=np.float64)
    xs = np.linspace(0.0, 1.0, grid_n)
    rho = np.ones(grid_n)
    dx = xs[1] - xs[0]
    conv = np.convolve(rho, rho) * dx
    conv_x = np.arange(conv.size) * dx
    c_phi = kernel_integral(kernel, 1)
    vals = np.interp(z, conv_x, conv, left=0.0, right=0.0)
    vals = np.where((z < 0.0) | (z > 2.0), 0.0, vals)
    return c_phi * vals


def save_profile_csv(model: OneDModel, path, grid_n: int = 401):
    """Export x, u_alpha(x) rows for plotting."""
    xs = np.linspace(-1.0, 1.0, grid_n)
    us = eval_u_alpha(model, xs)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "u_alpha"])
        for x, u in zip(xs, us):
            w.writerow([repr(float(x)), repr(float(u))])
