"""Reduction of a Lagrangian system with velocity constraints to a
constrained second-order system.

The Lagrangian lives on ``(t, x^i, u^i)`` with ``x = (x^a, x^alpha)``; the
constraints read ``u^alpha = Psi^alpha(t, x^a, x^alpha, u^a)``.  Reduction
produces ``x''^a = F^a`` on the constraint submanifold together with the
multipliers ``lambda_alpha``.

Two independent routes are implemented:

* :func:`reduce` builds a test curve through the point whose free
  accelerations are jet variables, differentiates the Euler-Lagrange
  expressions along it and reads off the affine map ``a -> C a + G``.
* :class:`ReducedSystem` assembles ``C``, ``G`` and ``F`` directly from the
  Hessian and gradient of ``L`` in jet arithmetic, so that ``F`` carries
  Taylor coefficients and can drive the constrained frame construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import jets as J
from .constrained import ConstrainedSystem, _flat, _parse_nested, _shape
from .expr import Node, check_bound, parse
from .jets import Jet
from .unconstrained import eval_exprs

__all__ = [
    "SingularSystemError",
    "NonholonomicProblem",
    "ReducedDynamics",
    "ReducedSystem",
    "hessian_W",
    "constrained_mass_C",
    "reduce",
    "as_constrained_system",
]

COND_LIMIT = 1e12
LINEAR_PART_TOL = 1e-8


class SingularSystemError(ValueError):
    """The reduced mass matrix is singular or the Hessian is not positive definite."""

    def __init__(self, message: str, condition: float = float("inf")):
        super().__init__(message)
        self.condition = condition


@dataclass(frozen=True)
class NonholonomicProblem:
    free: tuple[str, ...]
    constrained: tuple[str, ...]
    L: Node
    Psi: tuple[Node, ...]
    Upsilon: tuple | None = None
    metric: tuple | None = None
    constants: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.free) < 1:
            raise ValueError("need at least one unconstrained coordinate")
        if len(self.Psi) != len(self.constrained):
            raise ValueError(f"expected {len(self.constrained)} Psi components, got {len(self.Psi)}")
        consts = set(self.constants)
        check_bound(self.L, set(self.full_names) | consts)
        for node in self.Psi:
            check_bound(node, set(self.names) | consts)
        k = self.k
        for node in (*_flat(self.Upsilon), *_flat(self.metric)):
            check_bound(node, set(self.names) | consts)
        if self.Upsilon is not None and _shape(self.Upsilon) != (k, k, k):
            raise ValueError(f"Upsilon must be a {k}x{k}x{k} nested list")
        if self.metric is not None and _shape(self.metric) != (k, k):
            raise ValueError(f"metric must be a {k}x{k} nested list")

    @classmethod
    def from_strings(
        cls,
        free: Sequence[str],
        constrained: Sequence[str],
        L: str,
        Psi: Sequence[str],
        Upsilon=None,
        metric=None,
        constants: Mapping[str, float] | None = None,
    ):
        return cls(
            tuple(free),
            tuple(constrained),
            parse(L),
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
    def n(self) -> int:
        return self.m + self.k

    @property
    def coords(self) -> list[str]:
        return [*self.free, *self.constrained]

    @property
    def full_names(self) -> list[str]:
        """Coordinates of the unconstrained evolution space."""
        return ["t", *self.coords, *(f"u_{c}" for c in self.coords)]

    @property
    def names(self) -> list[str]:
        """Coordinates of the constraint submanifold."""
        return ["t", *self.coords, *(f"u_{c}" for c in self.free)]

    def _env(self, names: Sequence[str], z: Jet) -> dict:
        env = dict(self.constants)
        env.update({name: z[i] for i, name in enumerate(names)})
        return env

    def lagrangian(self, q: Jet) -> Jet:
        return eval_exprs([self.L], self._env(self.full_names, q), q)[0]

    def psi(self, z: Jet) -> Jet:
        return eval_exprs(self.Psi, self._env(self.names, z), z)

    def embed(self, p: np.ndarray) -> np.ndarray:
        """Full evolution-space point over the constrained point ``p``."""
        p = np.asarray(p, dtype=float)
        psi = np.asarray(self.psi(J.seeds(p, 0)).value, dtype=float)
        return np.concatenate([p, psi])


def _check_spd(W: np.ndarray, what: str) -> None:
    try:
        np.linalg.cholesky(W)
    except np.linalg.LinAlgError:
        ev = np.linalg.eigvalsh(0.5 * (W + W.T))
        raise SingularSystemError(
            f"{what} is not positive definite (smallest eigenvalue {ev.min():.3e})",
            condition=float(np.linalg.cond(W)),
        ) from None


def _check_condition(C: np.ndarray) -> float:
    cond = float(np.linalg.cond(C))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularSystemError(f"reduced mass matrix is singular (condition number {cond:.3e})", cond)
    return cond


def hessian_W(prob: NonholonomicProblem, p_full: Sequence[float]) -> np.ndarray:
    """Velocity Hessian of L at a point ``(t, x^i, u^i)`` of the full space."""
    q = J.seeds(np.asarray(p_full, dtype=float), 2)
    n = prob.n
    Lj = prob.lagrangian(q)
    iu = slice(1 + n, 1 + 2 * n)
    return np.asarray(Lj.grad().grad().value)[iu, iu]


def _psi_velocity_derivative(prob: NonholonomicProblem, p: np.ndarray) -> np.ndarray:
    """dPsi^alpha/du^a (raw, no sign flip) at ``p``; shape (k, m)."""
    z = J.seeds(p, 1)
    dpsi = np.asarray(prob.psi(z).grad().value)
    return dpsi[:, 1 + prob.n :]


def constrained_mass_C(prob: NonholonomicProblem, p: Sequence[float]) -> np.ndarray:
    """Restriction of the velocity Hessian to the constraint directions."""
    p = np.asarray(p, dtype=float)
    W = hessian_W(prob, prob.embed(p))
    Jm = np.vstack([np.eye(prob.m), _psi_velocity_derivative(prob, p)])
    return Jm.T @ W @ Jm


@dataclass
class ReducedDynamics:
    point: np.ndarray
    F: np.ndarray
    C: np.ndarray
    G: np.ndarray
    lam: np.ndarray
    W: np.ndarray
    condition: float
    linear_part_residual: float
    multiplier_residual: float

    def as_dict(self) -> dict:
        return {
            "F": self.F.tolist(),
            "C": self.C.tolist(),
            "G": self.G.tolist(),
            "lambda": self.lam.tolist(),
            "condition": self.condition,
            "linear_part_residual": self.linear_part_residual,
            "multiplier_residual": self.multiplier_residual,
        }


def _euler_lagrange_along_curve(prob: NonholonomicProblem, p: np.ndarray):
    """Euler-Lagrange expressions along a test curve with free accelerations a.

    Returns (value at a=0, derivative with respect to a) for the n full
    Euler-Lagrange expressions d/dt(dL/du^i) - dL/dx^i.
    """
    m, n = prob.m, prob.n
    t0, x0, ua0 = p[0], p[1 : 1 + n], p[1 + n :]
    psi0 = np.asarray(prob.psi(J.seeds(p, 0)).value, dtype=float)
    xdot0 = np.concatenate([ua0, psi0])

    nv = 1 + m + 2 * n
    v = J.seeds(np.zeros(nv), 3)
    tau = v[0]
    a = v[1 : 1 + m]
    w = v[1 + m : 1 + m + n]
    y = v[1 + m + n :]

    # curve on the constraint submanifold
    t = tau + t0
    x = tau * xdot0 + x0
    ua = a * tau + ua0
    zc = J.concatenate([J.stack([t]), x, ua])
    psi = prob.psi(zc)
    u = J.concatenate([ua, psi])

    q = J.concatenate([J.stack([t]), x + y, u + w])
    Lj = prob.lagrangian(q)
    dL_dw = J.stack([Lj.deriv(1 + m + i) for i in range(n)])
    dL_dy = J.stack([Lj.deriv(1 + m + n + i) for i in range(n)])
    EL = J.stack([dL_dw[i].deriv(0) for i in range(n)]) - dL_dy.truncate(2)
    # EL is affine in a at tau = w = y = 0
    grad = np.asarray(EL.grad().value)
    return np.asarray(EL.value, dtype=float), grad[:, 1 : 1 + m]


def reduce(prob: NonholonomicProblem, p: Sequence[float]) -> ReducedDynamics:
    """Solve the reduced equations at one constrained point by the curve route."""
    p = np.asarray(p, dtype=float)
    m = prob.m
    W = hessian_W(prob, prob.embed(p))
    dpsi = _psi_velocity_derivative(prob, p)
    Jm = np.vstack([np.eye(m), dpsi])
    C = Jm.T @ W @ Jm
    cond = _check_condition(C)
    _check_spd(W, "velocity Hessian of L")

    EL0, EL_lin = _euler_lagrange_along_curve(prob, p)
    G = Jm.T @ EL0
    lin = Jm.T @ EL_lin
    lin_res = float(np.max(np.abs(lin - C)) / (1.0 + np.max(np.abs(C))))
    if lin_res > LINEAR_PART_TOL:
        raise ArithmeticError(f"acceleration coefficients disagree with the reduced mass matrix ({lin_res:.3e})")
    F = np.linalg.solve(C, -G)
    EL = EL0 + EL_lin @ F
    lam = EL[m:]
    # first block: EL_a = -lambda_alpha dPsi^alpha/du^a
    res_a = EL[:m] + dpsi.T @ lam
    scale = 1.0 + float(np.max(np.abs(EL0)))
    return ReducedDynamics(
        p, F, C, G, lam, W, cond, lin_res, float(np.max(np.abs(res_a), initial=0.0)) / scale
    )


class ReducedSystem:
    """Constrained-system evaluator whose accelerations come from a Lagrangian.

    Drop-in replacement for :class:`ConstrainedSystem` inside the constrained
    frame construction.  ``evaluate`` runs the reduction in jet arithmetic.
    """

    def __init__(self, prob: NonholonomicProblem):
        self.prob = prob
        self._aux = ConstrainedSystem(
            prob.free,
            prob.constrained,
            tuple(parse("0") for _ in prob.free),
            prob.Psi,
            prob.Upsilon,
            prob.metric,
            dict(prob.constants),
        )

    m = property(lambda self: self.prob.m)
    k = property(lambda self: self.prob.k)
    dim = property(lambda self: 1 + 2 * self.prob.m + self.prob.k)
    names = property(lambda self: self.prob.names)
    constants = property(lambda self: self.prob.constants)

    def upsilon(self, z: Jet) -> Jet:
        return self._aux.upsilon(z)

    def dynamics(self, z: Jet) -> dict:
        """Jets of F, Psi, C, G and lambda over the constrained coordinates.

        ``z`` must be the coordinate seeds at some point (any order K); all
        outputs carry order K.
        """
        prob = self.prob
        m, k, n = prob.m, prob.k, prob.n
        K = z.order
        p = np.asarray(z.value, dtype=float)
        z1 = J.seeds(p, K + 1)
        psi1 = prob.psi(z1)
        psi = psi1.truncate(K)
        dpsi = psi1.grad()  # order K, [alpha, var]
        ia = slice(1, 1 + m)
        ial = slice(1 + m, 1 + n)
        iu = slice(1 + n, 1 + n + m)
        zK = z1.truncate(K)
        ua = zK[iu]

        emb = J.concatenate([zK[: 1 + n], ua, psi])
        q0 = np.asarray(emb.value, dtype=float)
        Lj = prob.lagrangian(J.seeds(q0, K + 2))
        gL = Lj.grad().truncate(K)
        hL = Lj.grad().grad()
        table = J.composition_table(emb, K)
        gL = gL.compose(emb, table)
        hL = hL.compose(emb, table)

        qx = slice(1, 1 + n)
        qu = slice(1 + n, 1 + 2 * n)
        W = hL[qu, qu]
        xdot = J.concatenate([ua, psi])
        # time derivative of Psi along the flow, without the acceleration part
        psidot0 = dpsi[:, 0] + (dpsi[:, ia] * ua[None, :]).sum(-1) + (dpsi[:, ial] * psi[None, :]).sum(-1)
        D = (
            hL[qu, 0]
            + (hL[qu, qx] * xdot[None, :]).sum(-1)
            + (W[:, m:] * psidot0[None, :]).sum(-1)
            - gL[qx]
        )
        Jm = J.concatenate([J.constant(np.eye(m), z.nvars, K), dpsi[:, iu]], axis=0)
        C = Jm.T @ W @ Jm
        G = Jm.T @ D
        _check_condition(np.asarray(C.value))
        _check_spd(np.asarray(W.value), "velocity Hessian of L")
        F = J.solve(C, -G)
        lam = (D + W @ (Jm @ F))[m:]
        return {"F": F, "Psi": psi, "C": C, "G": G, "lambda": lam, "W": W}

    def evaluate(self, z: Jet) -> tuple[Jet, Jet]:
        d = self.dynamics(z)
        return d["F"], d["Psi"]


def as_constrained_system(prob: NonholonomicProblem) -> ReducedSystem:
    return ReducedSystem(prob)
