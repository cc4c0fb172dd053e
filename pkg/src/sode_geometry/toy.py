"""Randomised decompositions of R^d used to exercise the glue machinery.

A decomposition is built from a point-dependent invertible matrix ``B(z)``:
the block projectors are ``P_A = B E_A B^{-1}`` where ``E_A`` selects a block
of coordinates.  Three kinds of block derivative are available:

``coef``
    P_A(X(Y) + C_A(X, Y)) with a random point-dependent bilinear term.
    Maps Img(P_A) into itself.
``transfer``
    J([X, J'(Y)]) where J' carries block A isomorphically onto another block
    of the same size and J carries it back.  Needs a partner block.
``raw``
    X(Y) + C_A(X, Y) without projecting; a valid derivative whose values
    leave Img(P_A).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import jets as J
from .glue import Connection, along, lie_bracket
from .jets import Jet

MAX_CONDITION = 20.0


@dataclass
class ToyDecomposition:
    dim: int
    blocks: list[list[int]]
    point: np.ndarray
    order: int
    B: Jet
    projectors: list[Jet]
    derivatives: list[Connection] = field(default_factory=list)
    kinds: list[str] = field(default_factory=list)
    center: np.ndarray | None = None

    @property
    def parts(self) -> list[tuple[Jet, Connection]]:
        return list(zip(self.projectors, self.derivatives))

    @property
    def maps_into_images(self) -> bool:
        return "raw" not in self.kinds


def _draw_coefficients(rng: np.random.Generator, shape: tuple, nv: int, degree: int, size: float) -> list[np.ndarray]:
    out = [rng.normal(size=shape) * size]
    if degree >= 1:
        out.append(rng.normal(size=shape + (nv,)) * size * 0.5)
    if degree >= 2:
        out.append(rng.normal(size=shape + (nv, nv)) * size * 0.25)
    return out


def _polynomial(coeffs: list[np.ndarray], z: Jet, center) -> Jet:
    h = z - np.asarray(center, dtype=float)
    out = J.constant(coeffs[0], z.nvars, z.order)
    if len(coeffs) > 1:
        out = out + (h * coeffs[1]).sum(-1)
    if len(coeffs) > 2:
        hh = h[:, None] * h[None, :]
        out = out + (hh * coeffs[2]).sum(-1).sum(-1)
    return out


def random_polynomial(
    rng: np.random.Generator, z: Jet, shape=(), degree: int = 2, size: float = 1.0, center=None
) -> Jet:
    """Random polynomial in h = z - center of total degree <= ``degree``.

    The centre defaults to the expansion point.  The draws from ``rng`` do not
    depend on ``z`` or ``center``, so the same generator state gives the same
    polynomial wherever it is expanded.
    """
    coeffs = _draw_coefficients(rng, tuple(shape), z.shape[0], degree, size)
    return _polynomial(coeffs, z, z.value if center is None else center)


def _selector(dim: int, rows: list[int], cols: list[int]) -> np.ndarray:
    E = np.zeros((dim, dim))
    for r, c in zip(rows, cols):
        E[r, c] = 1.0
    return E


def random_decomposition(
    rng: np.random.Generator,
    dim: int,
    nblocks: int,
    order: int = 3,
    kinds: list[str] | None = None,
    constant: bool = False,
    point=None,
) -> ToyDecomposition:
    """Draw a decomposition whose data are polynomials about a random centre.

    Jets are expanded at ``point`` (the centre when omitted).  Replaying the
    same generator state with different points evaluates one and the same
    decomposition at several places.
    """
    if not 1 <= nblocks <= dim:
        raise ValueError("need 1 <= nblocks <= dim")
    # block sizes: make the first two equal when possible so 'transfer' has a partner
    cuts = sorted(rng.choice(np.arange(1, dim), size=nblocks - 1, replace=False)) if nblocks > 1 else []
    bounds = [0, *cuts, dim]
    blocks = [list(range(bounds[i], bounds[i + 1])) for i in range(nblocks)]
    center = rng.uniform(-1.0, 1.0, size=dim)
    point = center if point is None else np.asarray(point, dtype=float)
    z = J.seeds(point, order)

    # nearly degenerate splittings have huge projectors and only measure round-off
    for _ in range(100):
        B0 = np.eye(dim) + 0.3 * rng.normal(size=(dim, dim))
        coeffs = _draw_coefficients(rng, (dim, dim), dim, 2, 0.2)
        if np.linalg.cond(B0 if constant else B0 + coeffs[0]) <= MAX_CONDITION:
            break
    if constant:
        B = J.constant(B0, dim, order)
    else:
        B = _polynomial(coeffs, z, center) + B0
    Binv = J.inv(B)
    projectors = [B @ (J.constant(_selector(dim, blk, blk), dim, order) @ Binv) for blk in blocks]

    kinds = list(kinds) if kinds is not None else [str(rng.choice(["coef", "transfer"])) for _ in blocks]
    derivs: list[Connection] = []
    for a, (blk, kind) in enumerate(zip(blocks, kinds)):
        partner = next((b for b, other in enumerate(blocks) if b != a and len(other) == len(blk)), None)
        if kind == "transfer" and partner is None:
            kind = "coef"
        kinds[a] = kind
        if kind == "transfer":
            other = blocks[partner]
            Jfwd = B @ (J.constant(_selector(dim, other, blk), dim, order) @ Binv)
            Jback = B @ (J.constant(_selector(dim, blk, other), dim, order) @ Binv)
            derivs.append(_transfer(Jfwd, Jback))
        else:
            C = random_polynomial(rng, z, (dim, dim, dim), degree=2, size=0.5, center=center)
            if constant:
                C = C * 0.0
            derivs.append(_coef(projectors[a], C, project=(kind == "coef")))
    return ToyDecomposition(dim, blocks, point, order, B, projectors, derivs, kinds, center)


def _coef(P: Jet, C: Jet, project: bool) -> Connection:
    def nabla(X: Jet, Y: Jet) -> Jet:
        bil = ((C * X[None, :, None]) * Y[None, None, :]).sum(-1).sum(-1)
        out = along(X, Y) + bil
        return P @ out if project else out

    return nabla


def _transfer(Jfwd: Jet, Jback: Jet) -> Connection:
    def nabla(X: Jet, Y: Jet) -> Jet:
        return Jback @ lie_bracket(X, Jfwd @ Y)

    return nabla


def random_field(rng: np.random.Generator, point, order: int, size: float = 1.0) -> Jet:
    """A field with random Taylor coefficients up to ``order`` (a polynomial field)."""
    point = np.asarray(point, dtype=float)
    z = J.seeds(point, order)
    return random_polynomial(rng, z, (point.size,), degree=min(order, 2), size=size)


def random_function(rng: np.random.Generator, point, order: int) -> Jet:
    point = np.asarray(point, dtype=float)
    z = J.seeds(point, order)
    return random_polynomial(rng, z, (), degree=min(order, 2))
