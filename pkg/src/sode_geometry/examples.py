"""Closed-form reference data for the knife edge and the rolling ball.

Everything here is written out by hand with numpy and is independent of the
jet machinery; tests and scripts compare it against the general pipeline.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import jets as J

FIXTURES = Path(__file__).resolve().parents[2] / "fixtures"

BALL_CONSTANTS = {"R": 2.0, "r": 0.5, "m": 1.0, "g": 9.81, "I": 0.1}


# -- knife edge: coordinates (t, phi, x, y, u_phi, u_x) -----------------------

def knife_edge_F(phi, u_phi, u_x) -> np.ndarray:
    return np.array([0.0, -u_x * u_phi * np.tan(phi)])


def knife_edge_closed_forms(phi, u_phi, u_x) -> dict[str, float]:
    sec2 = 1.0 / np.cos(phi) ** 2
    c2 = np.cos(2 * phi)
    return {
        "Phi11": 0.0,
        "Phi12": 0.0,
        "Phi21": -0.125 * u_phi * (c2 - 5.0) * sec2 * u_x,
        "Phi22": 0.125 * u_phi**2 * (c2 - 5.0) * sec2,
        "K31": -sec2 * u_x,
        "K32": sec2 * u_phi,
    }


# -- rolling ball: coordinates (t, varphi, psi, theta, alpha, beta, u_varphi, u_psi, u_theta)

def ball_psi(p, c=BALL_CONSTANTS) -> np.ndarray:
    _, ph, ps, th, al, be, uph, ups, uth = p
    k = c["r"] / c["R"]
    a = k * (uth * np.sin(be - ph) + ups * np.sin(th) * np.cos(ph - be))
    b = -k * (
        uph
        + ups * (np.cos(th) + np.sin(th) * np.sin(be - ph) / np.tan(al))
        - uth * np.cos(ph - be) / np.tan(al)
    )
    return np.array([a, b])


def _ball_psi_jet(z: J.Jet, c=BALL_CONSTANTS) -> J.Jet:
    ph, th, al, be = z[1], z[3], z[4], z[5]
    uph, ups, uth = z[6], z[7], z[8]
    k = c["r"] / c["R"]
    a = k * (uth * J.sin(be - ph) + ups * J.sin(th) * J.cos(ph - be))
    b = -k * (uph + ups * (J.cos(th) + J.sin(th) * J.sin(be - ph) * J.cot(al)) - uth * J.cot(al) * J.cos(ph - be))
    return J.stack([a, b])


def ball_equation_residuals(p, F, lam, c=BALL_CONSTANTS) -> np.ndarray:
    """Residuals of the seven displayed equations of motion.

    The constrained velocities and accelerations are obtained from the
    hand-written constraints: the second derivatives of alpha and beta are the
    total time derivative of the constraint functions along the reduced flow.
    """
    p = np.asarray(p, dtype=float)
    F = np.asarray(F, dtype=float)
    l4, l5 = lam
    m, R, r, g, I = c["m"], c["R"], c["r"], c["g"], c["I"]
    _, ph, ps, th, al, be, uph, ups, uth = p
    z = J.seeds(p, 1)
    psi = _ball_psi_jet(z, c)
    dpsi = np.asarray(psi.grad().value)  # [2, 9]
    ad, bd = ball_psi(p, c)
    # d/dt along the flow: t, x^a, x^alpha, u^a components
    velocity = np.r_[1.0, uph, ups, uth, ad, bd, F]
    add, bdd = dpsi @ velocity
    fph, fps, fth = F
    k = r / R
    s, co = np.sin, np.cos
    cot = 1.0 / np.tan(al)
    eqs = np.array([
        m * R * add - m * R * bd**2 * s(al) * co(al) - m * g * R * s(al) - l4,
        2 * m * R * ad * bd * s(al) * co(al) + m * R * bdd * s(al) ** 2 - l5,
        I * fph - I * uth * ups * s(th) + I * fps * co(th) - k * l5,
        I * fps - I * uth * uph * s(th) + I * fph * co(th)
        + k * (s(th) * co(be - ph) * l4 - (co(th) + cot * s(th) * s(be - ph)) * l5),
        I * fth + I * ups * uph * s(th) + k * (s(be - ph) * l4 + co(be - ph) * cot * l5),
        ad - k * (uth * s(be - ph) + ups * s(th) * co(ph - be)),
        bd + k * (uph + ups * (co(th) + cot * s(th) * s(be - ph)) - uth * cot * co(ph - be)),
    ])
    return eqs


def ball_upsilon(alpha) -> dict[str, float]:
    return {"U4_55": -np.sin(alpha) * np.cos(alpha), "U5_45": np.cos(alpha) / np.sin(alpha)}


def ball_component_formulas(p, c=BALL_CONSTANTS) -> dict[tuple[str, str], np.ndarray]:
    """The displayed (d_alpha, d_beta) components of nabla along Gamma, H_1..H_3,
    as printed.  Values are (coefficient of d_alpha, coefficient of d_beta)."""
    _, ph, ps, th, al, be, uph, ups, uth = p
    k = c["r"] / c["R"]
    s, co = np.sin, np.cos
    csc2 = 1.0 / s(al) ** 2
    cot = co(al) / s(al)
    return {
        ("Gamma", "alpha"): np.array([0.0, k * csc2 * (ups * s(th) * s(ph - be) + uth * co(ph - be))]),
        ("Gamma", "beta"): np.array([
            -k * (uth * co(ph - be) + ups * s(th) * s(ph - be)),
            k * (uth * cot * s(be - ph) + ups * cot * s(th) * co(ph - be)),
        ]),
        ("H1", "alpha"): np.zeros(2),
        ("H1", "beta"): np.zeros(2),
        ("H2", "alpha"): np.array([0.0, -k * csc2 * s(th) * s(ph - be)]),
        ("H2", "beta"): np.array([k * s(th) * s(ph - be), -k * cot * s(th) * co(ph - be)]),
        ("H3", "alpha"): np.array([0.0, -k * csc2 * co(ph - be)]),
        ("H3", "beta"): np.array([k * co(ph - be), -k * cot * s(be - ph)]),
    }
