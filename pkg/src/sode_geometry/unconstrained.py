"""Geometry of an unconstrained second-order system x'' = F(t, x, x').

Evolution space coordinates are ordered ``(t, x^1..x^n, u^1..u^n)``.  The
adapted frame is ``[Gamma, V_1..V_n, H_1..H_n]`` with dual coframe
``[dt, psi^1..psi^n, theta^1..theta^n]``; adapted component arrays use this
ordering.  Index conventions for stored arrays: ``G[i, j] = Gamma^i_j``,
``Phi[i, j] = Phi^i_j``, ``R[k, i, j] = R^k_ij``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import jets as J
from .expr import Node, check_bound, eval_over_jets, parse
from .glue import Connection, along, glued, lie_bracket
from .jets import Jet

__all__ = [
    "SodeSystem",
    "UnconstrainedFrame",
    "build_frame",
    "mp_connection",
    "mp_connection_glued",
    "mp_components",
    "expand_with_table",
    "mp_torsion_table",
    "mp_shape",
    "shape_eigen",
    "commutator_residuals",
    "eval_exprs",
]


def eval_exprs(nodes: Sequence[Node], env: Mapping, like: Jet) -> Jet:
    """Evaluate expressions into one ``(len(nodes),)`` jet."""
    vals = [eval_over_jets(n, env) for n in nodes]
    return J.stack([v if isinstance(v, Jet) else J.constant(v, like.nvars, like.order) for v in vals]) if vals else J.constant(np.zeros(0), like.nvars, like.order)


@dataclass(frozen=True)
class SodeSystem:
    """x''^i = F^i(t, x, u) with named coordinates; velocities are ``u_<name>``."""

    coords: tuple[str, ...]
    F: tuple[Node, ...]
    constants: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.coords) < 1:
            raise ValueError("need at least one coordinate")
        if len(self.F) != len(self.coords):
            raise ValueError(f"expected {len(self.coords)} F components, got {len(self.F)}")
        names = set(self.names) | set(self.constants)
        for node in self.F:
            check_bound(node, names)

    @classmethod
    def from_strings(cls, coords: Sequence[str], F: Sequence[str], constants: Mapping[str, float] | None = None):
        return cls(tuple(coords), tuple(parse(f) for f in F), dict(constants or {}))

    @property
    def n(self) -> int:
        return len(self.coords)

    @property
    def dim(self) -> int:
        return 2 * self.n + 1

    @property
    def names(self) -> list[str]:
        return ["t", *self.coords, *(f"u_{c}" for c in self.coords)]

    def env(self, z: Jet) -> dict:
        env = dict(self.constants)
        env.update({name: z[i] for i, name in enumerate(self.names)})
        return env

    def evaluate(self, z: Jet) -> Jet:
        """F as an (n,) jet over the evolution-space coordinate jets ``z``."""
        return eval_exprs(self.F, self.env(z), z)


@dataclass
class UnconstrainedFrame:
    n: int
    point: np.ndarray
    order: int
    z: Jet
    F: Jet
    G: Jet  # Gamma^i_j, order-1
    gamma: Jet  # the second-order field
    V: Jet  # rows V_i
    H: Jet  # rows H_i
    frame: Jet  # rows [Gamma, V, H]
    coframe: Jet  # rows [dt, psi, theta]
    P_gamma: Jet
    P_V: Jet
    P_H: Jet
    S: Jet
    Q: Jet
    Phi: Jet | None
    R: Jet | None
    Phi_tensor: Jet | None

    @property
    def dim(self) -> int:
        return 2 * self.n + 1

    # index helpers into coordinate / adapted arrays
    @property
    def ix(self) -> slice:
        return slice(1, 1 + self.n)

    @property
    def iu(self) -> slice:
        return slice(1 + self.n, 1 + 2 * self.n)

    def adapted(self, Y: Jet) -> Jet:
        """Components of a field in the adapted frame."""
        return self.coframe @ Y

    def from_adapted(self, c) -> Jet:
        if isinstance(c, Jet):
            return (c[:, None] * self.frame).sum(0)
        return (self.frame * np.asarray(c)[:, None]).sum(0)


def _outer(vecs: Jet, covecs: Jet) -> Jet:
    """sum_i vecs[i] (x) covecs[i] as a matrix acting on components."""
    return (vecs[:, :, None] * covecs[:, None, :]).sum(0)


def build_frame(sys: SodeSystem, point: Sequence[float], order: int = 2, perturb: float = 0.0) -> UnconstrainedFrame:
    """Adapted frame, coframe, projectors and the curvature-type tensors at ``point``.

    ``perturb`` adds ``perturb * I`` to Gamma^i_j before the horizontal fields
    and coframe are built (a deliberate corruption used for sensitivity tests).
    """
    point = np.asarray(point, dtype=float)
    n, D = sys.n, sys.dim
    if point.shape != (D,):
        raise ValueError(f"point must have {D} coordinates (t, x, u)")
    if order < 1:
        raise ValueError("order must be at least 1")
    z = J.seeds(point, order)
    F = sys.evaluate(z)
    ix, iu = slice(1, 1 + n), slice(1 + n, 1 + 2 * n)
    dF = F.grad()  # [i, coord]
    G = -0.5 * dF[:, iu]
    if perturb:
        G = G + perturb * np.eye(n)
    u = z[iu]
    nv, ko = z.nvars, z.order

    zeros_n = J.constant(np.zeros(n), nv, ko)
    gamma = J.concatenate([J.constant([1.0], nv, ko), u, F])

    eye = np.eye(n)
    V = J.constant(np.concatenate([np.zeros((n, 1 + n)), eye], axis=1), nv, ko)
    # H_i = d/dx^i - Gamma^j_i d/du^j  -> row i has u-part -G[:, i]
    H = J.concatenate([J.constant(np.zeros((n, 1)), nv, ko), J.constant(eye, nv, ko), -G.T], axis=1)
    frame = J.concatenate([gamma[None, :], V, H], axis=0)

    dt = J.constant(np.eye(D)[0], nv, ko)
    theta = J.concatenate([-u[:, None], J.constant(eye, nv, ko), J.constant(np.zeros((n, n)), nv, ko)], axis=1)
    # psi^i = du^i - F^i dt + Gamma^i_j theta^j
    psi = J.concatenate(
        [(-F - (G * u[None, :]).sum(-1))[:, None], G, J.constant(eye, nv, ko)], axis=1
    )
    coframe = J.concatenate([dt[None, :], psi, theta], axis=0)

    P_gamma = gamma[:, None] * dt[None, :]
    P_V = _outer(V, psi)
    P_H = _outer(H, theta)
    S = _outer(V, theta)
    Q = _outer(H, psi)

    Phi = R = Phi_tensor = None
    if order >= 2:
        G0 = -0.5 * dF[:, iu] if perturb else G
        d2F = dF.grad()  # [k, a, b]
        Phi = -dF[:, ix].truncate(order - 2) - G0 @ G0 - along(gamma, G0)
        Phi = Phi.truncate(order - 2)
        Fu = dF[:, iu]
        Fxu = d2F[:, ix, iu]  # [k, i, j] = d2 F^k / dx^i du^j
        Fuu = d2F[:, iu, iu]
        # R^k_ij = 1/2 (F^k_{x^i u^j} - F^k_{x^j u^i} + 1/2 (F^l_{u^i} F^k_{u^l u^j} - F^l_{u^j} F^k_{u^l u^i}))
        FuT = Fu.T  # [i, l] = dF^l/du^i
        term = (FuT[None, :, :, None] * Fuu[:, None, :, :]).sum(2)  # [k, i, j]
        R = 0.5 * (Fxu - Fxu.transpose(0, 2, 1) + 0.5 * (term - term.transpose(0, 2, 1)))
        Phi_tensor = _outer(V, (Phi[:, :, None] * theta[None, :, :]).sum(1))

    return UnconstrainedFrame(
        n, point, order, z, F, G, gamma, V, H, frame, coframe, P_gamma, P_V, P_H, S, Q, Phi, R, Phi_tensor
    )


# -- the linear connection --------------------------------------------------

def mp_connection(fr: UnconstrainedFrame) -> Connection:
    """The explicit five-term formula for the connection induced by the system."""
    gamma, S, Q, PH, PV = fr.gamma, fr.S, fr.Q, fr.P_H, fr.P_V

    def nabla(X: Jet, Y: Jet) -> Jet:
        PHX = PH @ X
        PVX = PV @ X
        out = along(X, Y[0]) * gamma
        out = out + Q @ lie_bracket(PHX, S @ Y)
        out = out + S @ lie_bracket(PVX, Q @ Y)
        out = out + PH @ lie_bracket(X - PHX, PH @ Y)
        out = out + PV @ lie_bracket(X - PVX, PV @ Y)
        return out

    return nabla


def block_derivatives(gamma: Jet, S: Jet, Q: Jet):
    """Derivatives on the Gamma-line and the horizontal/vertical submodules."""

    def d_gamma(X: Jet, Y: Jet) -> Jet:
        return along(X, Y[0]) * gamma

    def d_h(X: Jet, Y: Jet) -> Jet:
        return Q @ lie_bracket(X, S @ Y)

    def d_v(X: Jet, Y: Jet) -> Jet:
        return S @ lie_bracket(X, Q @ Y)

    return d_gamma, d_h, d_v


def mp_connection_glued(fr: UnconstrainedFrame, check: bool = True) -> Connection:
    d_gamma, d_h, d_v = block_derivatives(fr.gamma, fr.S, fr.Q)
    return glued([(fr.P_gamma, d_gamma), (fr.P_H, d_h), (fr.P_V, d_v)], check=check)


def mp_components(fr: UnconstrainedFrame) -> np.ndarray:
    """omega[A, B, C]: adapted component C of nabla_{e_A} e_B (values only)."""
    n, D = fr.n, fr.dim
    G = np.asarray(fr.G.value).reshape(n, n)
    dG = np.asarray(fr.G.grad().value).reshape(n, n, D)  # [k, i, coord]
    dGu = dG[:, :, 1 + n :]  # [k, i, j] = dGamma^k_i / du^j
    iV = 1 + np.arange(n)
    iH = 1 + n + np.arange(n)
    om = np.zeros((D, D, D))
    for i in range(n):
        om[0, iH[i], iH] = G[:, i]  # nabla_Gamma H_i = Gamma^j_i H_j
        om[0, iV[i], iV] = G[:, i]
        for j in range(n):
            om[iH[i], iH[j], iH] = dGu[:, i, j]
            om[iH[i], iV[j], iV] = dGu[:, i, j]
    return om


def expand_with_table(fr, table: np.ndarray, X: Jet, Y: Jet) -> np.ndarray:
    """nabla_X Y from a basis component table plus the Leibniz rule (values)."""
    Yc = fr.coframe @ Y
    Xc = np.asarray((fr.coframe @ X).value)
    dY = np.asarray(along(X, Yc).value)
    comps = dY + np.einsum("a,b,abc->c", Xc, np.asarray(Yc.value), table)
    return comps @ np.asarray(fr.frame.value)


def mp_torsion_table(fr: UnconstrainedFrame) -> np.ndarray:
    """tor[A, B, C]: adapted component C of T(e_A, e_B) from the closed forms."""
    n, D = fr.n, fr.dim
    Phi = np.asarray(fr.Phi.value).reshape(n, n)
    R = np.asarray(fr.R.value).reshape(n, n, n)
    iV = 1 + np.arange(n)
    iH = 1 + n + np.arange(n)
    tor = np.zeros((D, D, D))
    for i in range(n):
        tor[0, iV[i], iH[i]] = 1.0  # T(Gamma, V_i) = H_i
        tor[iV[i], 0, iH[i]] = -1.0
        tor[0, iH[i], iV] = -Phi[:, i]  # T(Gamma, H_i) = -Phi^j_i V_j
        tor[iH[i], 0, iV] = Phi[:, i]
        for j in range(n):
            tor[iH[i], iH[j], iV] = -R[:, i, j]
    return tor


def mp_shape(fr: UnconstrainedFrame) -> np.ndarray:
    """Matrix of A_Gamma in the adapted frame: column B is the image of e_B."""
    n, D = fr.n, fr.dim
    Phi = np.asarray(fr.Phi.value).reshape(n, n)
    A = np.zeros((D, D))
    iV = 1 + np.arange(n)
    iH = 1 + n + np.arange(n)
    A[np.ix_(iH, iV)] = np.eye(n)  # A(V_i) = H_i
    A[np.ix_(iV, iH)] = -Phi  # A(H_i) = -Phi^j_i V_j
    return A


@dataclass
class ShapeEigen:
    mu: float
    vector: np.ndarray  # adapted components
    lam: complex | float | None = None


def shape_eigen(fr: UnconstrainedFrame, zero_tol: float = 1e-9):
    """Real eigenpairs of A_Gamma from the eigenvalues of -Phi.

    Returns (pairs, complex_lambdas).  Each real lambda >= 0 of -Phi yields
    mu = +-sqrt(lambda) with eigenvector theta = w, psi = mu w.  Gamma itself
    is always reported with mu = 0.
    """
    n, D = fr.n, fr.dim
    Phi = np.asarray(fr.Phi.value).reshape(n, n)
    lam, W = np.linalg.eig(-Phi)
    pairs = [ShapeEigen(0.0, np.eye(D)[0], None)]
    complex_lams = []
    for k in range(n):
        lk = lam[k]
        if abs(lk.imag) > zero_tol * (1 + abs(lk)):
            complex_lams.append(complex(lk))
            continue
        lr = float(lk.real)
        if abs(lr) <= zero_tol:
            lr = 0.0
        if lr < 0:
            continue
        w = np.real(W[:, k])
        w = w / np.linalg.norm(w)
        mus = [0.0] if lr == 0.0 else [np.sqrt(lr), -np.sqrt(lr)]
        for mu in mus:
            v = np.zeros(D)
            v[1 : 1 + n] = mu * w
            v[1 + n :] = w
            pairs.append(ShapeEigen(float(mu), v, lr))
    return pairs, complex_lams


def commutator_residuals(fr: UnconstrainedFrame, X: Jet, Y: Jet, conn: Connection | None = None) -> dict:
    """Residuals of the bracket identities for V/H parts of two fields."""
    conn = conn or mp_connection(fr)
    XV, YV = fr.P_V @ X, fr.P_V @ Y
    XH, YH = fr.P_H @ X, fr.P_H @ Y
    A = -fr.Phi_tensor + fr.Q
    g = fr.gamma
    # R(X^H, Y^H) = R^k_ij theta^i(X) theta^j(Y) V_k
    n = fr.n
    thX = (fr.coframe @ XH)[1 + n :]
    thY = (fr.coframe @ YH)[1 + n :]
    Rcomp = ((fr.R * thX[None, :, None]) * thY[None, None, :]).sum(-1).sum(-1)
    RXY = (Rcomp[:, None] * fr.V).sum(0)
    out = {
        "gamma_vertical": lie_bracket(g, XV) - (conn(g, XV) - A @ XV),
        "gamma_horizontal": lie_bracket(g, XH) - (conn(g, XH) - A @ XH),
        "vertical_vertical": lie_bracket(XV, YV) - (conn(XV, YV) - conn(YV, XV)),
        "vertical_horizontal": lie_bracket(XV, YH) - (conn(XV, YH) - conn(YH, XV)),
        "horizontal_horizontal": lie_bracket(XH, YH) - (conn(XH, YH) - conn(YH, XH) + RXY),
    }
    return {k: float(np.max(np.abs(v.value))) for k, v in out.items()}
