"""Invariant suites: each function returns a map ``name -> relative residual``.

A residual is ``max|lhs - rhs| / s`` where ``s`` is 1 plus the largest
absolute component among the compared quantities and the frame data at the
point.  Suites are deterministic given the ``rng`` they receive.
"""

from __future__ import annotations

import copy

import numpy as np

from . import jets as J
from .constrained import (
    ConstrainedFrame,
    bracket_table,
    constrained_components,
    constrained_connection,
    constrained_connection_glued,
    constrained_torsion_table,
    shape_constrained,
    shape_matrix,
)
from .glue import (
    along,
    covariant_of_tensor,
    curvature,
    glue_derivative,
    lie_bracket,
    lie_tensor,
    scale_of,
    shape_map,
    torsion,
)
from .jets import Jet
from .toy import ToyDecomposition, random_field, random_function, random_polynomial
from .unconstrained import (
    UnconstrainedFrame,
    commutator_residuals,
    expand_with_table,
    mp_components,
    mp_connection,
    mp_connection_glued,
    mp_shape,
    mp_torsion_table,
    shape_eigen,
)

__all__ = [
    "glue_suite",
    "unconstrained_suite",
    "constrained_suite",
    "merge_max",
    "at_order",
]


def _val(x) -> np.ndarray:
    return np.asarray(x.value if isinstance(x, Jet) else x, dtype=float)


class _Acc:
    """Collects the worst relative residual per name."""

    def __init__(self, base_scale: float = 1.0):
        self.base = base_scale
        self.out: dict[str, float] = {}

    def add(self, name: str, lhs, rhs=0.0) -> None:
        a, b = _val(lhs), _val(rhs)
        diff = a - b
        r = float(np.max(np.abs(diff))) if diff.size else 0.0
        s = max(self.base, scale_of(a, b))
        self.put(name, r / s)

    def put(self, name: str, value: float) -> None:
        value = float(value) if np.isfinite(value) else float("inf")
        self.out[name] = max(self.out.get(name, 0.0), value)


def merge_max(reports) -> dict[str, float]:
    out: dict[str, float] = {}
    for rep in reports:
        for k, v in rep.items():
            out[k] = max(out.get(k, 0.0), v)
    return out


# -- generic glueing ----------------------------------------------------------

def glue_suite(toy: ToyDecomposition, rng: np.random.Generator, samples: int = 1) -> dict[str, float]:
    """Covariant-derivative axioms, the image corollary and block compatibility
    for one toy decomposition.

    ``cor_image`` is only recorded when every block derivative maps into its
    own image; otherwise the largest (nabla_X P_B)(Y) goes to
    ``cor_image_violation`` (expected to be large).
    """
    acc = _Acc()
    parts = toy.parts
    p, K = toy.point, toy.order

    def nab(X, Y):
        return glue_derivative(parts, X, Y, check=False)

    for _ in range(samples):
        X = random_field(rng, p, K)
        X2 = random_field(rng, p, K)
        Y = random_field(rng, p, K)
        Y2 = random_field(rng, p, K)
        f = random_function(rng, p, K)
        c1, c2 = rng.normal(size=2)
        base = nab(X, Y)
        acc.add("f_linear_first", nab(f * X, Y), f * base)
        acc.add("leibniz_second", nab(X, f * Y), along(X, f) * Y + f * base)
        acc.add("additive_first", nab(X + X2, Y), base + nab(X2, Y))
        acc.add("additive_second", nab(X, Y + Y2), base + nab(X, Y2))
        acc.add("real_linear", nab(c1 * X, c2 * Y), (c1 * c2) * base)

        image = 0.0
        for P, d in parts:
            dP = covariant_of_tensor(nab, X, P, Y)
            image = max(image, float(np.max(np.abs(dP.value))) / scale_of(X, Y, dP))
            # both arguments inside one block: the block derivative itself
            PX, PY = P @ X, P @ Y
            acc.add("same_block", nab(PX, PY), d(PX, PY))
        acc.put("cor_image" if toy.maps_into_images else "cor_image_violation", image)
    return acc.out


# -- unconstrained ------------------------------------------------------------

def _vertical_lift(rng: np.random.Generator, fr, vertical: Jet, nbase: int) -> Jet:
    """Sum_i c_i V_i with coefficients depending only on the first ``nbase``
    coordinates (time and positions)."""
    z = fr.z
    D = z.shape[0]
    zb = J.concatenate([z[:nbase], J.constant(np.asarray(fr.point)[nbase:], z.nvars, z.order)])
    coeffs = random_polynomial(rng, zb, (vertical.shape[0],), degree=2)
    return (coeffs[:, None] * vertical).sum(0) if D else coeffs


def _axioms(acc: _Acc, conn, X: Jet, Y: Jet, f: Jet) -> None:
    nab = conn(X, Y)
    acc.add("f_linear_first", conn(f * X, Y), f * nab)
    acc.add("leibniz_second", conn(X, f * Y), along(X, f) * Y + f * nab)


def at_order(fr, order: int):
    """Shallow copy of a frame with every jet attribute truncated to ``order``.

    Connection values need one order, curvature two; running those checks on
    a truncated copy avoids carrying unused Taylor coefficients.
    """
    lo = copy.copy(fr)
    for name, v in vars(fr).items():
        if isinstance(v, Jet):
            setattr(lo, name, v.truncate(min(order, v.order)))
    lo.order = min(order, fr.order)
    return lo


def _frame_scale(*items) -> float:
    return scale_of(*[i for i in items if i is not None])


def unconstrained_suite(fr: UnconstrainedFrame, rng: np.random.Generator, samples: int = 1) -> dict[str, float]:
    """Every identity of the unconstrained construction at one point.

    Needs a frame built with ``order >= 3``.
    """
    if fr.order < 3:
        raise ValueError("the unconstrained suite needs order-3 frame data")
    n, D = fr.n, fr.dim
    acc = _Acc(_frame_scale(fr.frame, fr.coframe, fr.Phi, fr.R))
    table = mp_components(fr)
    tor = mp_torsion_table(fr)
    A = mp_shape(fr)
    d2 = _val(fr.Phi.grad()).reshape(n, n, D)[:, :, 1 + n :]  # [k, j, i] = V_i Phi^k_j
    lhs = d2.transpose(0, 2, 1) - d2  # [k, i, j] = V_i Phi^k_j - V_j Phi^k_i
    acc.add("phi_curvature", lhs, 3.0 * _val(fr.R).reshape(n, n, n))

    lo2 = at_order(fr, 2)
    fr = at_order(fr, 1)
    conn = mp_connection(fr)
    conn2 = mp_connection(lo2)
    glued_conn = mp_connection_glued(fr, check=False)
    basis = [fr.frame[a] for a in range(D)]
    gamma, V, H = fr.gamma, fr.V, fr.H

    acc.add("duality", _val(fr.coframe) @ _val(fr.frame).T, np.eye(D))
    acc.add("contact_gamma", (fr.coframe @ gamma)[1:])

    LS = lie_tensor(gamma, fr.S)
    acc.add("lie_S_eigen", LS @ gamma)
    for i in range(n):
        acc.add("lie_S_eigen", LS @ V[i], V[i])
        acc.add("lie_S_eigen", LS @ H[i], -H[i])

    acc.add("lie_Q_S_is_phi", lie_tensor(gamma, fr.Q) @ fr.S, fr.Phi_tensor)

    for a, ea in enumerate(basis):
        for b, eb in enumerate(basis):
            nab = conn(ea, eb)
            acc.add("components_table", _val(fr.coframe) @ _val(nab), table[a, b])
            acc.add("glued_equals_intrinsic", glued_conn(ea, eb), nab)
            acc.add("torsion_table", _val(fr.coframe @ torsion(conn, ea, eb)), tor[a, b])
        acc.add("shape_table", _val(fr.coframe @ shape_map(conn, gamma, ea)), A[:, a])
        acc.add("shape_representations", shape_map(conn, gamma, ea), shape_map(conn, gamma, ea, mode="torsion"))

    pairs, _ = shape_eigen(fr)
    for pr in pairs:
        acc.add("shape_eigen", A @ pr.vector, pr.mu * pr.vector)

    for _ in range(samples):
        X = random_field(rng, fr.point, fr.order)
        Y = random_field(rng, fr.point, fr.order)
        nab = conn(X, Y)
        acc.add("components_table", expand_with_table(fr, table, X, Y), nab)
        acc.add("glued_equals_intrinsic", glued_conn(X, Y), nab)
        _axioms(acc, conn, X, Y, random_function(rng, fr.point, fr.order))

        acc.add("nabla_gamma", conn(X, gamma))
        acc.add("nabla_dt", along(X, Y[0]), nab[0])
        acc.add("nabla_S", covariant_of_tensor(conn, X, fr.S, Y))
        acc.add("nabla_Q", covariant_of_tensor(conn, X, fr.Q, Y))
        acc.add("horizontal_from_torsion", fr.P_H @ X, torsion(conn, gamma, fr.S @ X))
        acc.add("vertical_from_torsion", fr.P_V @ X, fr.S @ torsion(conn, gamma, X))
        Y2 = random_field(rng, fr.point, 2)
        for i in range(n):
            acc.add("curvature_gamma_vertical", curvature(conn2, lo2.gamma, lo2.V[i], Y2))
            for j in range(n):
                acc.add("curvature_gamma_vertical", curvature(conn2, lo2.gamma, lo2.V[i], lo2.H[j]))
        U = _vertical_lift(rng, fr, V, 1 + n)
        for i in range(n):
            acc.add("vertical_lift_parallel", conn(V[i], U))
        for name, r in commutator_residuals(fr, X, Y, conn).items():
            acc.put("commutator_" + name, r / acc.base)
    return acc.out


# -- constrained --------------------------------------------------------------

def constrained_suite(fr: ConstrainedFrame, rng: np.random.Generator, samples: int = 1) -> dict[str, float]:
    """Every identity of the constrained construction at one point (order >= 3)."""
    if fr.order < 3:
        raise ValueError("the constrained suite needs order-3 frame data")
    m, k, D = fr.m, fr.k, fr.dim
    acc = _Acc(_frame_scale(fr.frame, fr.coframe, fr.Phi, fr.K, fr.Rhat, fr.Rcheck))
    iu = fr.iu
    dPhi = _val(fr.Phi.grad()).reshape(m, m, D)[:, :, iu]  # [c, b, a] = V_a Phi^c_b
    acc.add("phi_curvature", dPhi.transpose(0, 2, 1) - dPhi, 3.0 * _val(fr.Rhat).reshape(m, m, m))
    if k:
        dK = _val(fr.K.grad()).reshape(k, m, D)[:, :, iu]
        acc.add("K_curvature", dK.transpose(0, 2, 1) - dK, 2.0 * _val(fr.Rcheck).reshape(k, m, m))
    table = constrained_components(fr)
    tor = constrained_torsion_table(fr)
    br = bracket_table(fr)
    A = shape_matrix(fr)

    lo2 = at_order(fr, 2)
    fr = at_order(fr, 1)
    conn = constrained_connection(fr)
    conn2 = constrained_connection(lo2)
    glued_conn = constrained_connection_glued(fr, check=False)
    basis = [fr.frame[a] for a in range(D)]
    gamma, V, H, dx = fr.gamma, fr.V, fr.H, fr.dx
    cof = _val(fr.coframe)

    acc.add("duality", cof @ _val(fr.frame).T, np.eye(D))

    LS = lie_tensor(gamma, fr.S)
    acc.add("lie_S_eigen", LS @ gamma)
    for al in range(k):
        acc.add("lie_S_eigen", LS @ dx[al])
    for a in range(m):
        acc.add("lie_S_eigen", LS @ V[a], V[a])
        acc.add("lie_S_eigen", LS @ H[a], -H[a])

    for a, ea in enumerate(basis):
        for b, eb in enumerate(basis):
            nab = conn(ea, eb)
            acc.add("components_table", cof @ _val(nab), table[a, b])
            acc.add("glued_equals_intrinsic", glued_conn(ea, eb), nab)
            acc.add("torsion_table", _val(fr.coframe @ torsion(conn, ea, eb)), tor[a, b])
            acc.add("bracket_table", _val(fr.coframe @ lie_bracket(ea, eb)), br[a, b])
        acc.add("shape_table", _val(fr.coframe @ shape_map(conn, gamma, ea)), A[:, a])
        acc.add("shape_representations", shape_map(conn, gamma, ea), shape_map(conn, gamma, ea, mode="torsion"))

    # property: nabla_{d_alpha} d_beta = Upsilon^gamma_{alpha beta} d_gamma
    Ups = _val(fr.Upsilon).reshape(k, k, k)
    for al in range(k):
        for be in range(k):
            acc.add("auxiliary_connection", conn(dx[al], dx[be]), Ups[:, al, be] @ _val(dx))
    for a in range(m):
        for b in range(m):
            acc.add("vertical_vertical", conn(V[a], V[b]))

    # eigen-system equations for every reported root
    sh = shape_constrained(fr)
    Phi = _val(fr.Phi).reshape(m, m)
    Kv = _val(fr.K).reshape(k, m)
    dF_x = _val(fr.dF).reshape(m, D)[:, fr.ial]
    for ent in sh["eigen"]:
        mu = ent["mu"]
        for v in ent["vectors"]:
            xg, xal, xbar, xhat = v[0], v[fr.jA], v[fr.jH], v[fr.jV]
            s = 1.0 + float(np.max(np.abs(v)))
            acc.put("eigen_system", abs(mu * xg) / s)
            acc.add("eigen_system", mu * xal, -Kv @ xbar)
            acc.add("eigen_system", mu * xbar, xhat)
            acc.add("eigen_system", mu * xhat, dF_x @ xal - Phi @ xbar)
            acc.add("eigen_vector", A @ v, mu * v)

    I = J.constant(np.eye(D), fr.z.nvars, fr.z.order)
    for _ in range(samples):
        X = random_field(rng, fr.point, fr.order)
        Y = random_field(rng, fr.point, fr.order)
        nab = conn(X, Y)
        acc.add("glued_equals_intrinsic", glued_conn(X, Y), nab)
        _axioms(acc, conn, X, Y, random_function(rng, fr.point, fr.order))
        acc.add("nabla_gamma", conn(X, gamma))
        acc.add("nabla_dt", along(X, Y[0]), nab[0])
        acc.add("nabla_S", covariant_of_tensor(conn, X, fr.S, Y))
        acc.add("nabla_Q", covariant_of_tensor(conn, X, fr.Q, Y))
        acc.add("nabla_N", covariant_of_tensor(conn, X, fr.N, Y))
        acc.add("horizontal_from_torsion", fr.P_H @ X, torsion(conn, gamma, fr.S @ X))
        acc.add("vertical_from_torsion", fr.P_V @ X, fr.S @ torsion(conn, gamma, X))
        acc.add("mixed_torsion", (I - fr.P_V) @ torsion(conn, (I - fr.N) @ X, fr.N @ Y))
        Y2 = random_field(rng, fr.point, 2)
        for a in range(m):
            acc.add("curvature_gamma_vertical", curvature(conn2, lo2.gamma, lo2.V[a], Y2))
            for b in range(m):
                acc.add("curvature_gamma_vertical", curvature(conn2, lo2.gamma, lo2.V[a], lo2.H[b]))
    return acc.out
