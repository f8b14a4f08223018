"""Finite-difference verification of analytic gradients.

Compares the backward pass against central differences on a random sample of
coordinates for every parameter. The error measure is
``|analytic - numeric| / max(1, |analytic|, |numeric|)``, i.e. relative for
large gradients and absolute for small ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .autodiff import Parameter, Tensor


@dataclass
class CoordResult:
    param: str
    index: tuple
    analytic: float
    numeric: float
    error: float


@dataclass
class GradCheckReport:
    passed: bool
    tol: float
    coords_checked: int
    worst: CoordResult | None
    failures: list[CoordResult] = field(default_factory=list)

    def summary(self) -> str:
        lines = [
            f"grad-check: {'PASS' if self.passed else 'FAIL'} "
            f"({self.coords_checked} coordinates, tol={self.tol:g})"
        ]
        if self.worst is not None:
            w = self.worst
            lines.append(
                f"  worst: {w.param}{list(w.index)} analytic={w.analytic:.6e} "
                f"numeric={w.numeric:.6e} err={w.error:.3e}"
            )
        for f in self.failures[:10]:
            lines.append(
                f"  FAIL {f.param}{list(f.index)} analytic={f.analytic:.6e} "
                f"numeric={f.numeric:.6e} err={f.error:.3e}"
            )
        if len(self.failures) > 10:
            lines.append(f"  ... {len(self.failures) - 10} more failures")
        return "\n".join(lines)


def grad_check(
    loss_fn: Callable[[], Tensor],
    params: list[Parameter],
    n_coords: int = 32,
    h: float = 1e-5,
    tol: float = 1e-4,
    seed: int = 0,
) -> GradCheckReport:
    """Check d(loss)/d(param) for sampled coordinates of every parameter.

    ``loss_fn`` must be deterministic (fix any noise before calling) and
    return a scalar Tensor built from ``params``.
    """
    rng = np.random.default_rng(seed)

    for p in params:
        p.grad = None
    loss_fn().backward()
    analytic = {}
    for p in params:
        if p.grad is None:
            raise ValueError(f"grad_check: loss does not reach parameter {p.name}")
        analytic[p.name] = p.grad.copy()
        p.grad = None

    worst: CoordResult | None = None
    failures: list[CoordResult] = []
    checked = 0
    for p in params:
        flat = p.data.reshape(-1)
        count = min(n_coords, flat.size)
        coords = rng.choice(flat.size, size=count, replace=False)
        for c in coords:
            saved = flat[c]
            flat[c] = saved + h
            up = loss_fn().item()
            flat[c] = saved - h
            down = loss_fn().item()
            flat[c] = saved

            numeric = (up - down) / (2.0 * h)
            a = float(analytic[p.name].reshape(-1)[c])
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            index = tuple(int(i) for i in np.unravel_index(c, p.data.shape))
            result = CoordResult(p.name, index, a, numeric, err)
            checked += 1
            if worst is None or err > worst.error:
                worst = result
            if err > tol:
                failures.append(result)

    return GradCheckReport(
        passed=not failures,
        tol=tol,
        coords_checked=checked,
        worst=worst,
        failures=failures,
    )
