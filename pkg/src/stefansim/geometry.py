"""Harmonic-gauge geometry of the moving interface.

The interface is the graph ``y = h(x)`` over the lower edge of the
reference strip.  The strip is mapped onto the physical liquid domain by
the harmonic extension of the boundary data ``(x, h(x))`` with the top
edge pinned to the identity.  Everything downstream (Jacobian, inverse
gradient, edge metric, normals, conormal weight) derives from that map.

Index convention: for the map gradient M[r, c] = d(psi^r)/d(x^c) the
stored inverse ``ainv`` is the literal matrix inverse, ainv[r, c] =
(M^-1)[r, c].  The pulled-back gradient of a scalar q is then
``(ainv^T grad q)_i = sum_k ainv[k, i] q_{,k}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import (
    Grid,
    NumericsError,
    tangential_derivative,
    vertical_derivative,
    wavenumbers,
)


class InvalidGeometryError(NumericsError):
    """The height function violates the graph condition."""


class DegenerateMapError(NumericsError):
    """The gauge map lost injectivity (Jacobian <= 0 somewhere)."""


#: Squared-slope bound below which the interface is treated as a graph.
GRAPH_BOUND = 0.5


def graph_margin(h: np.ndarray) -> float:
    """sup |h'|^2; the graph condition requires this <= GRAPH_BOUND."""
    dh = tangential_derivative(h)
    return float(np.max(dh * dh))


def check_graph_condition(h: np.ndarray, bound: float = GRAPH_BOUND) -> None:
    m = graph_margin(h)
    if m > bound:
        raise InvalidGeometryError(
            f"graph condition violated: sup|h'|^2 = {m:.3g} > {bound}"
        )


@dataclass(frozen=True)
class HeightState:
    """A height function plus, optionally, its double-smoothed companion."""

    h: np.ndarray
    h_smooth: np.ndarray | None = None

    def validate(self, bound: float = GRAPH_BOUND) -> None:
        check_graph_condition(self.h, bound)
        if self.h_smooth is not None:
            check_graph_condition(self.h_smooth, bound)


def harmonic_extend(grid: Grid, h: np.ndarray, graph_bound: float = GRAPH_BOUND) -> np.ndarray:
    """Offset field of the harmonic extension of the edge data (x, h(x)).

    Returns ``phi`` of shape (2, nx, ny) with the map being Id + phi; the
    first component is identically zero (it extends zero edge data).  Per
    Fourier mode the vertical profile solves  p'' - k^2 p = 0 with p(0)=1,
    p(1)=0, i.e. the exact sinh/linear profile, so the extension is
    harmonic to machine precision on band-limited data and matches the
    edge rows exactly at the grid nodes.
    """
    check_graph_condition(h, graph_bound)
    nx, ny = grid.nx, grid.ny
    y = grid.ys[None, :]
    k = wavenumbers(nx)[:, None]
    with np.errstate(over="ignore", invalid="ignore"):
        # sinh(k(1-y))/sinh(k) written with decaying exponentials.
        prof = np.where(
            k > 0,
            np.exp(-k * y) * (1.0 - np.exp(-2.0 * k * (1.0 - y)))
            / (1.0 - np.exp(-2.0 * k)),
            1.0 - y,
        )
    coef = np.fft.rfft(h)[:, None] * prof
    phi = np.zeros((2, nx, ny))
    phi[1] = np.fft.irfft(coef, n=nx, axis=0)
    phi[1, :, 0] = h
    phi[1, :, -1] = 0.0
    return phi


@dataclass(frozen=True)
class MetricBundle:
    """Gauge map and every derived geometric quantity.

    Interior fields: ``phi`` (map offset, (2, nx, ny)), ``grad`` (map
    gradient, (2, 2, nx, ny)), ``jac`` (Jacobian determinant), ``ainv``
    (inverse gradient matrix), ``conormal`` (the rescaled interface
    normal jac^-1 * (dh, -1) extended into the strip as
    jac^-1 * (d_x psi^2, -d_x psi^1)).

    Edge fields on the interface row: ``height``, ``dheight``, ``line_el``
    (sqrt(1 + h'^2)), unit ``normal`` and ``tangent``, ``jac_edge``.
    """

    grid: Grid
    phi: np.ndarray
    grad: np.ndarray
    jac: np.ndarray
    ainv: np.ndarray
    conormal: np.ndarray
    height: np.ndarray
    dheight: np.ndarray
    line_el: np.ndarray
    normal: np.ndarray
    tangent: np.ndarray
    jac_edge: np.ndarray
    is_flat: bool = False

    def identity_defect(self) -> float:
        """sup |ainv . grad - I|, a pointwise inversion check."""
        prod = np.einsum("rkxy,kcxy->rcxy", self.ainv, self.grad)
        prod[0, 0] -= 1.0
        prod[1, 1] -= 1.0
        return float(np.max(np.abs(prod)))

    def conormal_defect(self) -> float:
        """sup over the edge of | |conormal| - jac^-1 * line_el |."""
        mag = np.hypot(self.conormal[0, :, 0], self.conormal[1, :, 0])
        return float(np.max(np.abs(mag - self.line_el / self.jac_edge)))


def metric_bundle(grid: Grid, phi: np.ndarray) -> MetricBundle:
    """Build the full geometric bundle from a map offset field."""
    hy = grid.hy
    grad = np.empty((2, 2, grid.nx, grid.ny))
    grad[:, 0] = tangential_derivative(phi)
    grad[:, 1] = vertical_derivative(phi, hy, 1)
    grad[0, 0] += 1.0
    grad[1, 1] += 1.0
    is_flat = not np.any(phi[1]) and not np.any(phi[0])

    jac = grad[0, 0] * grad[1, 1] - grad[0, 1] * grad[1, 0]
    if np.min(jac) <= 0.0:
        raise DegenerateMapError(
            f"Jacobian must stay positive, min = {np.min(jac):.3g}"
        )
    ainv = np.empty_like(grad)
    ainv[0, 0] = grad[1, 1] / jac
    ainv[0, 1] = -grad[0, 1] / jac
    ainv[1, 0] = -grad[1, 0] / jac
    ainv[1, 1] = grad[0, 0] / jac

    conormal = np.stack((grad[1, 0] / jac, -grad[0, 0] / jac))

    height = phi[1, :, 0].copy()
    dheight = tangential_derivative(height)
    line_el = np.sqrt(1.0 + dheight * dheight)
    normal = np.stack((dheight, -np.ones_like(dheight))) / line_el
    tangent = np.stack((np.ones_like(dheight), dheight)) / line_el

    return MetricBundle(
        grid=grid,
        phi=phi,
        grad=grad,
        jac=jac,
        ainv=ainv,
        conormal=conormal,
        height=height,
        dheight=dheight,
        line_el=line_el,
        normal=normal,
        tangent=tangent,
        jac_edge=jac[:, 0].copy(),
        is_flat=is_flat,
    )


def identity_bundle(grid: Grid) -> MetricBundle:
    """Bundle of the identity map (flat interface)."""
    return metric_bundle(grid, np.zeros((2, grid.nx, grid.ny)))


def mean_curvature(h: np.ndarray) -> np.ndarray:
    """Signed curvature of the graph y = h(x): -h'' / (1 + h'^2)^{3/2}."""
    dh = tangential_derivative(h)
    d2h = tangential_derivative(h, 2)
    return -d2h / (1.0 + dh * dh) ** 1.5
