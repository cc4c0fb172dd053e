"""Covariant derivatives assembled from a direct-sum decomposition.

Conventions used throughout the package:

* A *field* is a :class:`~sode_geometry.jets.Jet` of batch shape ``(dim,)``
  whose variables are the manifold coordinates, expanded about the evaluation
  point.  A field callable ``z -> Jet`` is turned into such a jet with
  :func:`field_at`.
* A *projector* or other (1,1) tensor is a ``(dim, dim)`` jet acting on
  component vectors by matrix multiplication.
* A *derivative* (on a submodule or on the whole tangent bundle) is a callable
  ``(X, Y) -> Jet`` taking two fields.

Every derivative costs one jet order; the output order is the minimum order
of its inputs minus one (or less, when the projectors themselves carry fewer
orders).
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .jets import Jet, seeds

Field = Jet
Connection = Callable[[Jet, Jet], Jet]

IMAGE_TOL = 1e-9

__all__ = [
    "Connection",
    "NotInImageError",
    "DecompositionError",
    "field_at",
    "along",
    "lie_bracket",
    "lie_tensor",
    "apply",
    "extend_derivative",
    "glue_derivative",
    "glued",
    "torsion",
    "curvature",
    "shape_map",
    "covariant_of_tensor",
    "scale_of",
    "check_decomposition",
]


class NotInImageError(ValueError):
    pass


class DecompositionError(ValueError):
    pass


def field_at(fn: Callable[[Jet], Jet], point: Sequence[float], order: int) -> Jet:
    """Evaluate a field callable on the coordinate jets at ``point``."""
    return fn(seeds(point, order))


def along(X: Jet, f: Jet) -> Jet:
    """Directional derivative X(f) of a jet of any batch shape."""
    return (f.grad() * X).sum(-1)


def lie_bracket(X: Jet, Y: Jet) -> Jet:
    """[X, Y]^i = X(Y^i) - Y(X^i)."""
    return along(X, Y) - along(Y, X)


def lie_tensor(X: Jet, T: Jet) -> Jet:
    """Lie derivative of a (1,1) tensor: (L_X T)(Y) = [X, T Y] - T [X, Y]."""
    DX = X.grad()
    return along(X, T) - DX @ T + T @ DX


def apply(T: Jet, Y: Jet) -> Jet:
    return T @ Y


def scale_of(*items) -> float:
    """1 + largest absolute value among the given jets/arrays (values only)."""
    m = 0.0
    for it in items:
        v = it.value if isinstance(it, Jet) else it
        v = np.asarray(v, dtype=float)
        if v.size:
            m = max(m, float(np.max(np.abs(v))))
    return 1.0 + m


def _image_residual(P: Jet, Y: Jet) -> float:
    v = np.asarray((P @ Y).value) - np.asarray(Y.value)
    return float(np.max(np.abs(v))) if v.size else 0.0


def extend_derivative(P: Jet, nabla: Connection, X: Jet, Y: Jet, check: bool = True) -> Jet:
    """Extend a derivative defined for X in Img(P) to arbitrary X.

    Returns nabla(P X, Y) + P([X - P X, Y]); ``Y`` must lie in Img(P).
    """
    if check:
        res = _image_residual(P, Y)
        if res > IMAGE_TOL * scale_of(Y):
            raise NotInImageError(f"field is not in the image of the projector (residual {res:.3e})")
    PX = P @ X
    return nabla(PX, Y) + P @ lie_bracket(X - PX, Y)


def check_decomposition(projectors: Sequence[Jet], tol: float = IMAGE_TOL) -> float:
    """Max residual of sum P_A = I and P_A P_B = delta_AB P_A at the point."""
    mats = [np.asarray(P.value) for P in projectors]
    dim = mats[0].shape[0]
    res = float(np.max(np.abs(sum(mats) - np.eye(dim))))
    for a, Pa in enumerate(mats):
        for b, Pb in enumerate(mats):
            target = Pa if a == b else 0.0
            res = max(res, float(np.max(np.abs(Pa @ Pb - target))))
    if res > tol:
        raise DecompositionError(f"projectors do not form a direct-sum family (residual {res:.3e})")
    return res


def glue_derivative(
    parts: Sequence[tuple[Jet, Connection]], X: Jet, Y: Jet, check: bool = True
) -> Jet:
    """Sum over blocks of the extended block derivative applied to P_A(Y)."""
    if check:
        check_decomposition([P for P, _ in parts])
    total = None
    for P, nabla in parts:
        term = extend_derivative(P, nabla, X, P @ Y, check=False)
        total = term if total is None else total + term
    return total


def glued(parts: Sequence[tuple[Jet, Connection]], check: bool = True) -> Connection:
    """The glued derivative as a connection callable."""
    if check:
        check_decomposition([P for P, _ in parts])

    def nabla(X: Jet, Y: Jet) -> Jet:
        return glue_derivative(parts, X, Y, check=False)

    return nabla


def torsion(conn: Connection, X: Jet, Y: Jet) -> Jet:
    return conn(X, Y) - conn(Y, X) - lie_bracket(X, Y)


def curvature(conn: Connection, X: Jet, Y: Jet, Z: Jet) -> Jet:
    return conn(X, conn(Y, Z)) - conn(Y, conn(X, Z)) - conn(lie_bracket(X, Y), Z)


def shape_map(conn: Connection, Z: Jet, xi: Jet, mode: str = "bracket") -> Jet:
    """A_Z(xi).  ``mode='bracket'``: nabla_Z xi - [Z, xi];
    ``mode='torsion'``: nabla_xi Z + T(Z, xi)."""
    if mode == "bracket":
        return conn(Z, xi) - lie_bracket(Z, xi)
    if mode == "torsion":
        return conn(xi, Z) + torsion(conn, Z, xi)
    raise ValueError(f"unknown shape map mode {mode!r}")


def covariant_of_tensor(conn: Connection, X: Jet, T: Jet, Y: Jet) -> Jet:
    """(nabla_X T)(Y) = nabla_X(T Y) - T(nabla_X Y) for a (1,1) tensor T."""
    return conn(X, T @ Y) - T @ conn(X, Y)
