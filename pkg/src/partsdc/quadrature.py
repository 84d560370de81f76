"""Node sets and interpolatory integration weights for the SDC schemes.

Each scheme stores reference abscissas on [0, 1] (both endpoints included)
and a (q x q+1) weight matrix W whose row j integrates a nodal function
over the subinterval [node_j, node_{j+1}]:

    integral ~ sum_i W[j, i] * psi(node_i)       (scaled by dt at use).

Weights are interpolatory over each scheme's *stencil* (the subset of
nodes actually interpolated); node columns outside the stencil carry
explicit zeros so every scheme shares one matrix shape.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np


class SchemeName(str, Enum):
    SDC1 = "SDC1"
    SDC2 = "SDC2"
    SDC3_R = "SDC3_R"
    SDC3_L = "SDC3_L"
    SDC4 = "SDC4"


class LowOrderVariant(str, Enum):
    # SUBSTEP multiplies the low-order correction by dt_{n,j};
    # FULLSTEP (SDC3-r) multiplies it by the full dt.
    SUBSTEP = "SUBSTEP"
    FULLSTEP = "FULLSTEP"


@dataclass(frozen=True)
class SdcScheme:
    """Immutable scheme description; freely shared across threads."""

    name: SchemeName
    nodes: tuple[float, ...]
    weights: np.ndarray  # shape (q, q+1), reference interval [0, 1]
    num_sweeps: int
    low_order_variant: LowOrderVariant
    stencil: tuple[int, ...]  # node indices the weights interpolate over

    @property
    def q(self) -> int:
        return len(self.nodes) - 1

    def substeps(self) -> np.ndarray:
        return np.diff(np.asarray(self.nodes))


def lagrange_basis_coefficients(points: Sequence[float]) -> np.ndarray:
    """Monomial coefficients (ascending) of the Lagrange basis at ``points``."""
    pts = np.asarray(points, dtype=float)
    n = pts.size
    coeffs = np.empty((n, n))
    for i in range(n):
        poly = np.array([1.0])
        for k in range(n):
            if k == i:
                continue
            d = pts[i] - pts[k]
            if d == 0.0:
                raise ValueError("duplicate interpolation nodes")
            # multiply by (t - pts[k]) / d
            poly = np.convolve(poly, np.array([-pts[k], 1.0])) / d
        coeffs[i, :poly.size] = poly
        coeffs[i, poly.size:] = 0.0
    return coeffs


def weights_from_nodes(nodes: Sequence[float],
                       stencil: Sequence[int] | None = None) -> np.ndarray:
    """Interpolatory subinterval weights W[j, i] = int_{n_j}^{n_{j+1}} l_i.

    ``stencil`` restricts interpolation to a subset of node indices (the
    omitted columns are exactly zero); by default all nodes are used.
    """
    pts = np.asarray(nodes, dtype=float)
    if pts.size < 2:
        raise ValueError("need at least two nodes")
    if np.any(np.diff(pts) <= 0):
        raise ValueError("nodes must be strictly increasing")
    q = pts.size - 1
    if stencil is None:
        stencil = tuple(range(q + 1))
    stencil = tuple(int(s) for s in stencil)
    basis = lagrange_basis_coefficients(pts[list(stencil)])
    # antiderivative coefficients of each basis polynomial
    degree = basis.shape[1]
    anti = basis / np.arange(1, degree + 1)

    def prim(i: int, x: float) -> float:
        return float(np.polyval(anti[i][::-1], x) * x)

    W = np.zeros((q, q + 1))
    for j in range(q):
        for col, i in enumerate(stencil):
            W[j, i] = prim(col, pts[j + 1]) - prim(col, pts[j])
    return W


def _scheme(name, nodes, weights, sweeps, variant, stencil):
    return SdcScheme(name, tuple(nodes), np.array(weights, dtype=float),
                     sweeps, variant, tuple(stencil))


_CATALOG = {
    # first order: right-endpoint rectangle, one sweep
    SchemeName.SDC1: _scheme(
        SchemeName.SDC1, (0.0, 1.0),
        [[0.0, 1.0]],
        1, LowOrderVariant.SUBSTEP, (1,)),
    # second order: trapezoid, two sweeps
    SchemeName.SDC2: _scheme(
        SchemeName.SDC2, (0.0, 1.0),
        [[0.5, 0.5]],
        2, LowOrderVariant.SUBSTEP, (0, 1)),
    # third order on right Gauss-Radau nodes {0, 1/3, 1}; the node-0 column
    # is exactly zero and the low-order correction uses the full step
    SchemeName.SDC3_R: _scheme(
        SchemeName.SDC3_R, (0.0, 1.0 / 3.0, 1.0),
        [[0.0, 5.0 / 12.0, -1.0 / 12.0],
         [0.0, 1.0 / 3.0, 1.0 / 3.0]],
        3, LowOrderVariant.FULLSTEP, (1, 2)),
    # third order: fourth-order Lobatto quadrature, but only three sweeps
    SchemeName.SDC3_L: _scheme(
        SchemeName.SDC3_L, (0.0, 0.5, 1.0),
        [[5.0 / 24.0, 8.0 / 24.0, -1.0 / 24.0],
         [-1.0 / 24.0, 8.0 / 24.0, 5.0 / 24.0]],
        3, LowOrderVariant.SUBSTEP, (0, 1, 2)),
    # fourth order: same Lobatto quadrature, four sweeps
    SchemeName.SDC4: _scheme(
        SchemeName.SDC4, (0.0, 0.5, 1.0),
        [[5.0 / 24.0, 8.0 / 24.0, -1.0 / 24.0],
         [-1.0 / 24.0, 8.0 / 24.0, 5.0 / 24.0]],
        4, LowOrderVariant.SUBSTEP, (0, 1, 2)),
}

ALL_SCHEME_NAMES = tuple(_CATALOG)


def make_scheme(name: SchemeName | str) -> SdcScheme:
    """Return the catalog entry for ``name`` (accepts 'sdc3-r' style spellings)."""
    if not isinstance(name, SchemeName):
        name = SchemeName(name.strip().upper().replace("-", "_"))
    return _CATALOG[name]


def collocation_defect(scheme: SdcScheme,
                       poly_coeffs: Sequence[float]) -> np.ndarray:
    """Per-subinterval quadrature error of W on a polynomial.

    ``poly_coeffs`` are monomial coefficients in ascending order.  Exact
    (up to roundoff) whenever the degree is below the scheme's stencil
    size; schemes with right-weighted stencils (SDC1, SDC3-r) are exact
    only up to degree ``len(stencil) - 1``.
    """
    coeffs = np.asarray(poly_coeffs, dtype=float)
    nodes = np.asarray(scheme.nodes)
    samples = np.polyval(coeffs[::-1], nodes)
    quad = scheme.weights @ samples
    anti = coeffs / np.arange(1, coeffs.size + 1)

    def prim(x):
        return np.polyval(anti[::-1], x) * x

    exact = prim(nodes[1:]) - prim(nodes[:-1])
    return np.abs(quad - exact)


def scheme_catalog_json() -> list[dict]:
    """Serializable description of every catalog scheme (for --dump-schemes)."""
    out = []
    for name in ALL_SCHEME_NAMES:
        s = _CATALOG[name]
        out.append({
            "name": s.name.value,
            "nodes": list(s.nodes),
            "weights": s.weights.tolist(),
            "num_sweeps": s.num_sweeps,
            "low_order_variant": s.low_order_variant.value,
            "stencil": list(s.stencil),
        })
    return out
