"""Geometry of a second-order system with first-order constraints.

    x''^a = F^a(t, x^b, x^beta, x'^b),     x'^alpha = Psi^alpha(t, x^b, x^beta, x'^b)

Coordinates on the constraint submanifold are ordered
``(t, x^a (m), x^alpha (k = n - m), u^a (m))``.  The adapted frame is
``[Gamma, d/dx^alpha, H_a, V_a]`` with dual coframe
``[dt, eta^alpha, theta^a, psi^a]``.

Stored index conventions: ``G[b, a] = Gamma^b_a``, ``Pm[beta, a] = Psi^beta_a``
(the sign-flipped velocity derivative ``-dPsi/du``), ``Phi[b, a]``,
``K[alpha, a]``, ``Rhat[c, a, b]``, ``Rcheck[beta, a, b]``,
``Upsilon[gamma, alpha, beta]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import jets as J
from .expr import Node, check_bound, eval_over_jets, parse
from .glue import Connection, along, glued, lie_bracket
from .jets import Jet
from .unconstrained import _outer, eval_exprs

__all__ = [
    "ConstrainedSystem",
    "ConstrainedFrame",
    "build_constrained_frame",
    "constrained_connection",
    "constrained_connection_glued",
    "constrained_components",
    "constrained_torsion_table",
    "bracket_table",
    "shape_matrix",
    "lambda_polynomial",
    "real_roots",
    "shape_constrained",
    "chetaev_connection",
    "levi_civita",
]


@dataclass(frozen=True)
class ConstrainedSystem:
    free: tuple[str, ...]
    constrained: tuple[str, ...]
    F: tuple[Node, ...]
    Psi: tuple[Node, ...]
    Upsilon: tuple | None = None  # nested [gamma][alpha][beta]
    metric: tuple | None = None  # nested [alpha][beta]
    constants: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        m, k = len(self.free), len(self.constrained)
        if m < 1:
            raise ValueError("need at least one unconstrained coordinate")
        if len(self.F) != m:
            raise ValueError(f"expected {m} F components, got {len(self.F)}")
        if len(self.Psi) != k:
            raise ValueError(f"expected {k} Psi components, got {len(self.Psi)}")
        names = set(self.names) | set(self.constants)
        for node in (*self.F, *self.Psi, *_flat(self.Upsilon), *_flat(self.metric)):
            check_bound(node, names)
        if self.Upsilon is not None and _shape(self.Upsilon) != (k, k, k):
            raise ValueError(f"Upsilon must be a {k}x{k}x{k} nested list")
        if self.metric is not None and _shape(self.metric) != (k, k):
            raise ValueError(f"metric must be a {k}x{k} nested list")
        if self.Upsilon is not None and self.metric is not None:
            raise ValueError("give either Upsilon or metric, not both")

    @classmethod
    def from_strings(
        cls,
        free: Sequence[str],
        constrained: Sequence[str],
        F: Sequence[str],
        Psi: Sequence[str],
        Upsilon=None,
        metric=None,
        constants: Mapping[str, float] | None = None,
    ):
        return cls(
            tuple(free),
            tuple(constrained),
            tuple(parse(f) for f in F),
            tuple(parse(p) for p in Psi),
            _parse_nested(Upsilon),
            _parse_nested(metric),
            dict(constants or {}),
        )

    @property
    def m(self) -> int:
        return len(self.free)

    @property
    def k(self) -> int:
        return len(self.constrained)

    @property
    def dim(self) -> int:
        return 1 + 2 * self.m + self.k

    @property
    def names(self) -> list[str]:
        return ["t", *self.free, *self.constrained, *(f"u_{c}" for c in self.free)]

    def env(self, z: Jet) -> dict:
        env = dict(self.constants)
        env.update({name: z[i] for i, name in enumerate(self.names)})
        return env

    def evaluate(self, z: Jet) -> tuple[Jet, Jet]:
        env = self.env(z)
        return eval_exprs(self.F, env, z), eval_exprs(self.Psi, env, z)

    def upsilon(self, z: Jet) -> Jet:
        k = self.k
        if self.Upsilon is not None:
            env = self.env(z)
            flat = eval_exprs(list(_flat(self.Upsilon)), env, z)
            return flat.reshape(k, k, k)
        if self.metric is not None:
            env = self.env(z)
            g = eval_exprs(list(_flat(self.metric)), env, z).reshape(k, k)
            return levi_civita(g, slice(1 + self.m, 1 + self.m + k))
        return J.constant(np.zeros((k, k, k)), z.nvars, z.order)


def _parse_nested(obj):
    if obj is None:
        return None
    if isinstance(obj, str):
        return parse(obj)
    return tuple(_parse_nested(o) for o in obj)


def _flat(obj):
    if obj is None:
        return
    if isinstance(obj, tuple):
        for o in obj:
            yield from _flat(o)
    else:
        yield obj


def _shape(obj) -> tuple:
    if isinstance(obj, tuple):
        return (len(obj),) + (_shape(obj[0]) if obj else ())
    return ()


def levi_civita(g: Jet, coords: slice) -> Jet:
    """Christoffel symbols Ups[gamma, alpha, beta] of the metric jet ``g``.

    ``coords`` selects the variables the metric lives on.
    """
    gi = J.inv(g)
    dg = g.grad()[:, :, coords]  # [delta, beta, alpha] = d_alpha g_{delta beta}
    T = dg.transpose(0, 2, 1)  # [delta, alpha, beta] = d_alpha g_{delta beta}
    term = T + T.transpose(0, 2, 1) - dg.transpose(2, 0, 1)
    return 0.5 * (gi[:, :, None, None] * term[None, :, :, :]).sum(1)


class ConstrainedFrame:
    """Frame data at one point; attribute names mirror the module docstring."""

    def __init__(self, sys, point, order: int = 2, perturb: float = 0.0):
        point = np.asarray(point, dtype=float)
        m, k = sys.m, sys.k
        D = 1 + 2 * m + k
        if point.shape != (D,):
            raise ValueError(f"point must have {D} coordinates (t, x^a, x^alpha, u^a)")
        if order < 1:
            raise ValueError("order must be at least 1")
        self.sys, self.m, self.k, self.dim = sys, m, k, D
        self.point, self.order = point, order
        self.it = 0
        self.ia = slice(1, 1 + m)
        self.ial = slice(1 + m, 1 + m + k)
        self.iu = slice(1 + m + k, D)

        z = J.seeds(point, order)
        self.z = z
        F, Psi = sys.evaluate(z)
        self.F, self.Psi = F, Psi
        nv, ko = z.nvars, z.order
        c = lambda v: J.constant(v, nv, ko)

        dF = F.grad()
        dPsi = Psi.grad()
        self.dF, self.dPsi = dF, dPsi
        G = -0.5 * dF[:, self.iu]
        if perturb:
            G = G + perturb * np.eye(m)
        self.G = G
        Pm = -dPsi[:, self.iu]
        self.Pm = Pm
        u = z[self.iu]

        self.gamma = J.concatenate([c([1.0]), u, Psi, F])
        eye_m, eye_k = np.eye(m), np.eye(k)
        self.dx = c(np.eye(D)[self.ial])  # rows d/dx^alpha
        self.H = J.concatenate([c(np.zeros((m, 1))), c(eye_m), -Pm.T, -G.T], axis=1)
        self.V = c(np.eye(D)[self.iu])
        self.frame = J.concatenate([self.gamma[None, :], self.dx, self.H, self.V], axis=0)

        dt = c(np.eye(D)[0])
        theta = J.concatenate([-u[:, None], c(eye_m), c(np.zeros((m, k))), c(np.zeros((m, m)))], axis=1)
        eta = J.concatenate(
            [(-Psi - (Pm * u[None, :]).sum(-1))[:, None], Pm, c(eye_k), c(np.zeros((k, m)))], axis=1
        )
        psi = J.concatenate(
            [(-F - (G * u[None, :]).sum(-1))[:, None], G, c(np.zeros((m, k))), c(eye_m)], axis=1
        )
        self.dt, self.theta, self.eta, self.psi = dt, theta, eta, psi
        self.coframe = J.concatenate([dt[None, :], eta, theta, psi], axis=0)

        self.P_gamma = self.gamma[:, None] * dt[None, :]
        self.N = _outer(self.dx, eta) if k else c(np.zeros((D, D)))
        self.P_V = _outer(self.V, psi)
        self.P_H = _outer(self.H, theta)
        self.S = _outer(self.V, theta)
        self.Q = _outer(self.H, psi)
        self.Upsilon = sys.upsilon(z)

        self.Phi = self.K = self.Rhat = self.Rcheck = self.R = None
        if order >= 2:
            self._second_order(perturb)

    def _second_order(self, perturb: float) -> None:
        m, k = self.m, self.k
        dF, dPsi = self.dF, self.dPsi
        G = -0.5 * dF[:, self.iu] if perturb else self.G
        Pm = -dPsi[:, self.iu]
        gamma, H = self.gamma, self.H
        Fx_a = dF[:, self.ia]
        Fx_al = dF[:, self.ial]
        self.Phi = (-Fx_a - along(gamma, G) - G @ G + Fx_al @ Pm).truncate(self.order - 2)
        self.K = (-along(gamma, Pm) - dPsi @ H.T + Pm @ G).truncate(self.order - 2)

        d2F = dF.grad()
        Fu = dF[:, self.iu]
        Fxu = d2F[:, self.ia, self.iu]
        Fuu = d2F[:, self.iu, self.iu]
        term = (Fu.T[None, :, :, None] * Fuu[:, None, :, :]).sum(2)
        R = 0.5 * (Fxu - Fxu.transpose(0, 2, 1) + 0.5 * (term - term.transpose(0, 2, 1)))
        self.R = R
        dG = G.grad()
        dGx_al = dG[:, :, self.ial]  # [c, a, beta]
        t1 = dGx_al @ Pm  # [c, a, b] = sum_beta dGamma^c_a/dx^beta Psi^beta_b
        self.Rhat = R - t1 + t1.transpose(0, 2, 1)

        dPm = Pm.grad()  # [beta, a, coord]
        first = dPm[:, :, self.ia] - dPm[:, :, self.ia].transpose(0, 2, 1)
        s2 = (dPm[:, :, self.iu] @ G).transpose(0, 2, 1)  # [beta, a, b] = sum_c G[c,a] dPm[beta,b,u^c]
        second = s2 - s2.transpose(0, 2, 1)
        t2 = (dPm[:, :, self.ial] @ Pm).transpose(0, 2, 1)  # [beta, a, b] = sum_al Pm[al,a] dPm[beta,b,al]
        third = t2 - t2.transpose(0, 2, 1)
        self.Rcheck = first + second + third

    # -- adapted index helpers --------------------------------------------
    @property
    def jA(self) -> np.ndarray:
        return 1 + np.arange(self.k)

    @property
    def jH(self) -> np.ndarray:
        return 1 + self.k + np.arange(self.m)

    @property
    def jV(self) -> np.ndarray:
        return 1 + self.k + self.m + np.arange(self.m)

    def adapted(self, Y: Jet) -> Jet:
        return self.coframe @ Y

    def from_adapted(self, c) -> np.ndarray:
        return np.asarray(c) @ np.asarray(self.frame.value)

    @property
    def Phi_tensor(self) -> Jet:
        return _outer(self.V, (self.Phi[:, :, None] * self.theta[None, :, :]).sum(1))

    @property
    def K_tensor(self) -> Jet:
        return _outer(self.dx, (self.K[:, :, None] * self.theta[None, :, :]).sum(1))


def build_constrained_frame(sys, point, order: int = 2, perturb: float = 0.0) -> ConstrainedFrame:
    return ConstrainedFrame(sys, point, order, perturb)


# -- the connection -----------------------------------------------------------

def _nabla_N(fr: ConstrainedFrame):
    Ups, eta, dx = fr.Upsilon, fr.eta, fr.dx

    def d_n(X: Jet, Y: Jet) -> Jet:
        if fr.k == 0:
            return X * 0.0
        Yc = eta @ Y
        Xc = eta @ X
        comp = along(X, Yc) + ((Ups * Xc[None, :, None]) * Yc[None, None, :]).sum(-1).sum(-1)
        return (comp[:, None] * dx).sum(0)

    return d_n


def constrained_connection(fr: ConstrainedFrame) -> Connection:
    """The explicit seven-term formula."""
    gamma, S, Q, PH, PV, N = fr.gamma, fr.S, fr.Q, fr.P_H, fr.P_V, fr.N
    d_n = _nabla_N(fr)

    def nabla(X: Jet, Y: Jet) -> Jet:
        PHX, PVX, NX = PH @ X, PV @ X, N @ X
        NY = N @ Y
        out = along(X, Y[0]) * gamma
        out = out + d_n(NX, NY)
        out = out + Q @ lie_bracket(PHX, S @ Y)
        out = out + S @ lie_bracket(PVX, Q @ Y)
        out = out + N @ lie_bracket(X - NX, NY)
        out = out + PH @ lie_bracket(X - PHX, PH @ Y)
        out = out + PV @ lie_bracket(X - PVX, PV @ Y)
        return out

    return nabla


def constrained_connection_glued(fr: ConstrainedFrame, check: bool = True) -> Connection:
    gamma, S, Q = fr.gamma, fr.S, fr.Q

    def d_gamma(X, Y):
        return along(X, Y[0]) * gamma

    def d_h(X, Y):
        return Q @ lie_bracket(X, S @ Y)

    def d_v(X, Y):
        return S @ lie_bracket(X, Q @ Y)

    parts = [(fr.P_gamma, d_gamma), (fr.P_H, d_h), (fr.P_V, d_v)]
    if fr.k:
        parts.insert(1, (fr.N, _nabla_N(fr)))
    return glued(parts, check=check)


def _vals(j: Jet, shape) -> np.ndarray:
    return np.asarray(j.value).reshape(shape)


def constrained_components(fr: ConstrainedFrame) -> np.ndarray:
    """omega[A, B, C]: adapted component C of nabla_{e_A} e_B from the closed forms."""
    m, k, D = fr.m, fr.k, fr.dim
    G = _vals(fr.G, (m, m))
    dG = _vals(fr.G.grad(), (m, m, D))
    dGu = dG[:, :, fr.iu]  # [c, a, b]
    dPsi_x = _vals(fr.dPsi, (k, D))[:, fr.ial]  # [beta, alpha]
    dPm_x = _vals(fr.Pm.grad(), (k, m, D))[:, :, fr.ial]  # [beta, a, alpha]
    Ups = _vals(fr.Upsilon, (k, k, k))
    jA, jH, jV = fr.jA, fr.jH, fr.jV
    om = np.zeros((D, D, D))
    for a in range(m):
        om[0, jH[a], jH] = G[:, a]
        om[0, jV[a], jV] = G[:, a]
        for b in range(m):
            om[jH[a], jH[b], jH] = dGu[:, a, b]
            om[jH[a], jV[b], jV] = dGu[:, a, b]
        for al in range(k):
            om[jH[a], jA[al], jA] = dPm_x[:, a, al]
    for al in range(k):
        om[0, jA[al], jA] = -dPsi_x[:, al]
        for be in range(k):
            om[jA[al], jA[be], jA] = Ups[:, al, be]
    return om


def constrained_torsion_table(fr: ConstrainedFrame) -> np.ndarray:
    """tor[A, B, C]: adapted component C of T(e_A, e_B) from the closed forms."""
    m, k, D = fr.m, fr.k, fr.dim
    Phi = _vals(fr.Phi, (m, m))
    K = _vals(fr.K, (k, m))
    Rhat = _vals(fr.Rhat, (m, m, m))
    Rcheck = _vals(fr.Rcheck, (k, m, m))
    dF_x = _vals(fr.dF, (m, D))[:, fr.ial]  # [c, alpha]
    dPm_u = _vals(fr.Pm.grad(), (k, m, D))[:, :, fr.iu]  # [alpha, b, a] = dPsi^alpha_b/du^a
    dG_x = _vals(fr.G.grad(), (m, m, D))[:, :, fr.ial]  # [b, a, alpha]
    Ups = _vals(fr.Upsilon, (k, k, k))
    jA, jH, jV = fr.jA, fr.jH, fr.jV
    tor = np.zeros((D, D, D))

    def put(A, B, vec):
        tor[A, B] += vec
        tor[B, A] -= vec

    for a in range(m):
        v = np.zeros(D)
        v[jH[a]] = 1.0
        put(0, jV[a], v)
        v = np.zeros(D)
        v[jV] = -Phi[:, a]
        v[jA] = -K[:, a]
        put(0, jH[a], v)
        for b in range(m):
            v = np.zeros(D)
            v[jA] = dPm_u[:, b, a]
            put(jV[a], jH[b], v)
            if a < b:
                v = np.zeros(D)
                v[jV] = -Rhat[:, a, b]
                v[jA] = -Rcheck[:, a, b]
                put(jH[a], jH[b], v)
        for al in range(k):
            v = np.zeros(D)
            v[jV] = -dG_x[:, a, al]
            put(jH[a], jA[al], v)
    for al in range(k):
        v = np.zeros(D)
        v[jV] = dF_x[:, al]
        put(0, jA[al], v)
        for be in range(al + 1, k):
            v = np.zeros(D)
            v[jA] = Ups[:, al, be] - Ups[:, be, al]
            put(jA[al], jA[be], v)
    return tor


def bracket_table(fr: ConstrainedFrame) -> np.ndarray:
    """br[A, B, C]: adapted component C of [e_A, e_B] from the closed forms."""
    m, k, D = fr.m, fr.k, fr.dim
    G = _vals(fr.G, (m, m))
    Phi = _vals(fr.Phi, (m, m))
    K = _vals(fr.K, (k, m))
    Rhat = _vals(fr.Rhat, (m, m, m))
    Rcheck = _vals(fr.Rcheck, (k, m, m))
    dG = _vals(fr.G.grad(), (m, m, D))
    dPm = _vals(fr.Pm.grad(), (k, m, D))
    dF_x = _vals(fr.dF, (m, D))[:, fr.ial]
    dPsi_x = _vals(fr.dPsi, (k, D))[:, fr.ial]
    jA, jH, jV = fr.jA, fr.jH, fr.jV
    br = np.zeros((D, D, D))

    def put(A, B, vec):
        br[A, B] += vec
        br[B, A] -= vec

    for a in range(m):
        v = np.zeros(D)
        v[jV] = Phi[:, a]
        v[jH] = G[:, a]
        v[jA] = K[:, a]
        put(0, jH[a], v)
        v = np.zeros(D)
        v[jH[a]] = -1.0
        v[jV] = G[:, a]
        put(0, jV[a], v)
        for b in range(m):
            v = np.zeros(D)
            v[jV] = dG[:, a, fr.iu][:, b]
            v[jA] = dPm[:, a, fr.iu][:, b]
            put(jH[a], jV[b], v)
            if a < b:
                v = np.zeros(D)
                v[jV] = Rhat[:, a, b]
                v[jA] = Rcheck[:, a, b]
                put(jH[a], jH[b], v)
        for al in range(k):
            v = np.zeros(D)
            v[jV] = dG[:, a, fr.ial][:, al]
            v[jA] = dPm[:, a, fr.ial][:, al]
            put(jH[a], jA[al], v)
    for al in range(k):
        v = np.zeros(D)
        v[jA] = -dPsi_x[:, al]
        v[jV] = -dF_x[:, al]
        put(0, jA[al], v)
    return br


# -- shape maps and the eigencondition ---------------------------------------

def shape_matrix(fr: ConstrainedFrame) -> np.ndarray:
    """A_Gamma in the adapted frame; column B is the image of e_B."""
    m, k, D = fr.m, fr.k, fr.dim
    Phi = _vals(fr.Phi, (m, m))
    K = _vals(fr.K, (k, m))
    dF_x = _vals(fr.dF, (m, D))[:, fr.ial]
    jA, jH, jV = fr.jA, fr.jH, fr.jV
    A = np.zeros((D, D))
    A[np.ix_(jV, jA)] = dF_x
    A[np.ix_(jV, jH)] = -Phi
    A[np.ix_(jA, jH)] = -K
    A[np.ix_(jH, jV)] = np.eye(m)
    return A


def _lambda_blocks(fr: ConstrainedFrame) -> tuple[np.ndarray, np.ndarray]:
    m, k, D = fr.m, fr.k, fr.dim
    Phi = _vals(fr.Phi, (m, m))
    K = _vals(fr.K, (k, m))
    dF_x = _vals(fr.dF, (m, D))[:, fr.ial]
    return dF_x @ K, Phi


def lambda_polynomial(fr: ConstrainedFrame) -> np.ndarray:
    """Coefficients (highest degree first) of det(mu^3 I + Lambda_mu).

    Recovered by evaluating the determinant at 3m + 1 integer nodes
    0, 1, -1, 2, -2, ... and solving the Vandermonde system.
    """
    M0, Phi = _lambda_blocks(fr)
    m = fr.m
    deg = 3 * m
    nodes = [0.0]
    j = 1
    while len(nodes) < deg + 1:
        nodes += [float(j), float(-j)]
        j += 1
    nodes = np.array(nodes[: deg + 1])
    vals = np.array([np.linalg.det(mu**3 * np.eye(m) + M0 + mu * Phi) for mu in nodes])
    V = np.vander(nodes, deg + 1)
    coeffs = np.linalg.solve(V, vals)
    return coeffs


def real_roots(coeffs: np.ndarray, imag_tol: float = 1e-8, cluster_tol: float = 1e-6, zero_tol: float = 1e-10):
    """Real roots of a polynomial (highest degree first), clustered.

    Trailing coefficients negligible relative to the largest are treated as
    exact zeros, so mu^j factors give exact zero roots.
    Returns a list of (root, multiplicity) sorted ascending.
    """
    c = np.array(coeffs, dtype=float)
    scale = np.max(np.abs(c)) if c.size else 1.0
    nzero = 0
    while c.size > 1 and abs(c[-1]) <= zero_tol * scale:
        c = c[:-1]
        nzero += 1
    roots = list(np.roots(c)) if c.size > 1 else []
    reals = [r.real for r in roots if abs(r.imag) <= imag_tol * (1 + abs(r))]
    reals += [0.0] * nzero
    reals.sort()
    out: list[list[float]] = []
    for r in reals:
        if out and abs(r - out[-1][0] / out[-1][1]) <= cluster_tol * (1 + abs(r)):
            out[-1][0] += r
            out[-1][1] += 1
        else:
            out.append([r, 1])
    return [(s / cnt, cnt) for s, cnt in out]


def _null_space(M: np.ndarray, rtol: float) -> np.ndarray:
    u, s, vt = np.linalg.svd(M)
    thresh = rtol * max(1.0, s[0] if s.size else 1.0)
    rank = int(np.sum(s > thresh))
    return vt[rank:].T


def shape_constrained(fr: ConstrainedFrame, null_tol: float = 1e-7) -> dict:
    A = shape_matrix(fr)
    coeffs = lambda_polynomial(fr)
    roots = real_roots(coeffs)
    D = fr.dim
    eig = []
    for mu, mult in roots:
        basis = _null_space(A - mu * np.eye(D), null_tol)
        eig.append({"mu": float(mu), "multiplicity": int(mult), "vectors": basis.T})
    decoupling = [shape_of_constraint_direction(fr, al) for al in range(fr.k)]
    return {"A": A, "coeffs": coeffs, "roots": roots, "eigen": eig, "decoupling": decoupling}


def shape_of_constraint_direction(fr: ConstrainedFrame, alpha: int, tol: float = 1e-9) -> dict:
    """Both sides of: A_{d/dx^alpha}(Gamma) = 0  iff  dPsi/dx^alpha = 0 = dF/dx^alpha.

    The shape map side is evaluated through the connection; it also reports
    the largest A_{d/dx^alpha}(H_a).
    """
    conn = constrained_connection(fr)
    e = fr.dx[alpha]
    A_gamma = conn(e, fr.gamma) - lie_bracket(e, fr.gamma)
    A_H = [conn(e, fr.H[a]) - lie_bracket(e, fr.H[a]) for a in range(fr.m)]
    D = fr.dim
    derivs = np.r_[
        _vals(fr.dPsi, (fr.k, D))[:, fr.ial][:, alpha], _vals(fr.dF, (fr.m, D))[:, fr.ial][:, alpha]
    ]
    a_norm = float(np.max(np.abs(A_gamma.value)))
    h_norm = max((float(np.max(np.abs(x.value))) for x in A_H), default=0.0)
    d_norm = float(np.max(np.abs(derivs)))
    return {
        "alpha": alpha,
        "A_gamma_norm": a_norm,
        "derivative_norm": d_norm,
        "A_H_norm": h_norm,
        "shape_vanishes": a_norm <= tol,
        "derivatives_vanish": d_norm <= tol,
    }


def chetaev_connection(fr: ConstrainedFrame, tol: float = 1e-10) -> dict:
    """Coordinate data of the connection defined by the constraint submanifold."""
    m, k, D = fr.m, fr.k, fr.dim
    u = fr.z[fr.iu]
    sigma = fr.Psi + (fr.Pm * u[None, :]).sum(-1)
    sigma_b = -fr.Pm
    c = lambda v: J.constant(v, fr.z.nvars, fr.z.order)
    # d/dt + sigma^alpha d/dx^alpha ; d/dx^b + sigma^alpha_b d/dx^alpha ; d/du^a
    h_t = J.concatenate([c([1.0]), c(np.zeros(m)), sigma, c(np.zeros(m))])
    h_x = J.concatenate([c(np.zeros((m, 1))), c(np.eye(m)), sigma_b.T, c(np.zeros((m, m)))], axis=1)
    h_u = c(np.eye(D)[fr.iu])
    dsig = np.asarray(sigma.grad().value).reshape(k, D)[:, fr.iu]
    affine = float(np.max(np.abs(dsig))) if dsig.size else 0.0
    if fr.order >= 2 and k:
        dsb = np.asarray(sigma_b.grad().value).reshape(k, m, D)[:, :, fr.iu]
        affine = max(affine, float(np.max(np.abs(dsb))))
    return {
        "sigma": np.asarray(sigma.value).reshape(k),
        "sigma_b": np.asarray(sigma_b.value).reshape(k, m),
        "horizontal": np.vstack(
            [np.asarray(h_t.value)[None, :], np.asarray(h_x.value).reshape(m, D), np.asarray(h_u.value).reshape(m, D)]
        ),
        "affine": affine <= tol,
        "u_derivative_norm": affine,
    }
