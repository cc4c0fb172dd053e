import numpy as np
import pytest
import sympy as sp

from sode_geometry import jets as J
from sode_geometry.checks import constrained_suite
from sode_geometry.constrained import (
    ConstrainedFrame,
    ConstrainedSystem,
    chetaev_connection,
    constrained_components,
    constrained_connection,
    constrained_torsion_table,
    lambda_polynomial,
    real_roots,
    shape_constrained,
    shape_of_constraint_direction,
)
from sode_geometry.examples import knife_edge_closed_forms
from sode_geometry.glue import torsion
from sode_geometry.sysfile import load_system, sample_points
from sode_geometry.toy import random_field
from sode_geometry.unconstrained import SodeSystem, build_frame, mp_components, mp_connection

from conftest import FIXTURES

KNIFE = ConstrainedSystem.from_strings(["phi", "x"], ["y"], ["0", "-u_phi*u_x*tan(phi)"], ["tan(phi)*u_x"])
# m = 2, k = 1 with a constraint that is not affine in the velocities
CURVY = ConstrainedSystem.from_strings(
    ["a", "b"], ["c"], ["-sin(a)*u_b + c*u_a^2", "u_a*u_b*cos(c) - b"], ["u_a^2*c + sin(b)*u_b + t"]
)


def vals(j, shape=None):
    v = np.asarray(j.value)
    return v.reshape(shape) if shape else v


def knife_point(rng):
    return np.r_[rng.uniform(0, 1), rng.uniform(-1.2, 1.2), rng.uniform(-1, 1, 2), rng.uniform(-1.5, 1.5, 2)]


# -- symbolic oracle built from the definitions ------------------------------

def symbolic_constrained(free, cons, F, Psi):
    m, k = len(free), len(cons)
    t = sp.Symbol("t")
    xa = sp.symbols(free)
    xal = sp.symbols(cons)
    u = sp.symbols([f"u_{c}" for c in free])
    loc = dict(zip(free, xa)) | dict(zip(cons, xal)) | {f"u_{c}": s for c, s in zip(free, u)}
    Fs = [sp.sympify(f, locals=loc) for f in F]
    Ps = [sp.sympify(p, locals=loc) for p in Psi]
    G = sp.Matrix(m, m, lambda b, a: -sp.Rational(1, 2) * sp.diff(Fs[b], u[a]))
    Pm = sp.Matrix(k, m, lambda be, a: -sp.diff(Ps[be], u[a]))

    def gamma(f):
        return (
            sp.diff(f, t)
            + sum(u[a] * sp.diff(f, xa[a]) for a in range(m))
            + sum(Ps[al] * sp.diff(f, xal[al]) for al in range(k))
            + sum(Fs[a] * sp.diff(f, u[a]) for a in range(m))
        )

    def H(a, f):
        return (
            sp.diff(f, xa[a])
            - sum(G[b, a] * sp.diff(f, u[b]) for b in range(m))
            - sum(Pm[be, a] * sp.diff(f, xal[be]) for be in range(k))
        )

    Phi = sp.Matrix(
        m,
        m,
        lambda b, a: -sp.diff(Fs[b], xa[a])
        - gamma(G[b, a])
        - sum(G[c, a] * G[b, c] for c in range(m))
        + sum(Pm[al, a] * sp.diff(Fs[b], xal[al]) for al in range(k)),
    )
    K = sp.Matrix(k, m, lambda al, a: -gamma(Pm[al, a]) - H(a, Ps[al]) + sum(G[b, a] * Pm[al, b] for b in range(m)))
    # [H_a, H_b] = Rhat^c_ab V_c + Rcheck^beta_ab d_beta
    Rhat = [[[H(a, -G[c, b]) - H(b, -G[c, a]) for b in range(m)] for a in range(m)] for c in range(m)]
    Rcheck = [[[H(a, -Pm[be, b]) - H(b, -Pm[be, a]) for b in range(m)] for a in range(m)] for be in range(k)]
    syms = (t, *xa, *xal, *u)
    return syms, dict(G=G, Pm=Pm, Phi=Phi, K=K, Rhat=Rhat, Rcheck=Rcheck)


def _num(expr, sub):
    if isinstance(expr, list):
        return np.array([_num(e, sub) for e in expr], dtype=float)
    if isinstance(expr, sp.MatrixBase):
        return np.array(expr.subs(sub).evalf(), dtype=float)
    return float(expr.subs(sub))


def test_knife_edge_oracle_reproduces_printed_closed_forms():
    syms, S = symbolic_constrained(["phi", "x"], ["y"], ["0", "-u_phi*u_x*tan(phi)"], ["tan(phi)*u_x"])
    t, phi, x, y, uphi, ux = syms
    sec2 = 1 / sp.cos(phi) ** 2
    printed = {
        (1, 0): -sp.Rational(1, 8) * uphi * (sp.cos(2 * phi) - 5) * sec2 * ux,
        (1, 1): sp.Rational(1, 8) * uphi**2 * (sp.cos(2 * phi) - 5) * sec2,
    }
    for (b, a), ref in printed.items():
        assert sp.simplify(S["Phi"][b, a] - ref) == 0
    assert S["Phi"][0, 0] == 0 and S["Phi"][0, 1] == 0
    assert sp.simplify(S["K"][0, 0] + sec2 * ux) == 0
    assert sp.simplify(S["K"][0, 1] - sec2 * uphi) == 0


def test_knife_edge_connection_coefficient_follows_half_definition(rng):
    # Gamma^2_1 = -1/2 dF^2/du_phi = u_x tan(phi)/2
    for _ in range(10):
        p = knife_point(rng)
        fr = ConstrainedFrame(KNIFE, p, 2)
        assert vals(fr.G, (2, 2))[1, 0] == pytest.approx(0.5 * p[5] * np.tan(p[1]), rel=1e-14)


def test_knife_edge_closed_forms(rng):
    for _ in range(20):
        p = knife_point(rng)
        fr = ConstrainedFrame(KNIFE, p, 2)
        cf = knife_edge_closed_forms(p[1], p[4], p[5])
        Phi, K = vals(fr.Phi, (2, 2)), vals(fr.K, (1, 2))
        got = {"Phi11": Phi[0, 0], "Phi12": Phi[0, 1], "Phi21": Phi[1, 0], "Phi22": Phi[1, 1], "K31": K[0, 0], "K32": K[0, 1]}
        for key, ref in cf.items():
            assert got[key] == pytest.approx(ref, rel=1e-8, abs=1e-8), key


@pytest.mark.parametrize("system, definition", [(KNIFE, (["phi", "x"], ["y"], ["0", "-u_phi*u_x*tan(phi)"], ["tan(phi)*u_x"])),
                                          (CURVY, (["a", "b"], ["c"], ["-sin(a)*u_b + c*u_a^2", "u_a*u_b*cos(c) - b"], ["u_a^2*c + sin(b)*u_b + t"]))],
                         ids=["knife", "curvy"])
def test_frame_tensors_against_oracle(rng, system, definition):
    syms, S = symbolic_constrained(*definition)
    m, k = system.m, system.k
    for _ in range(4):
        p = rng.uniform(-1, 1, system.dim)
        fr = ConstrainedFrame(system, p, 2)
        sub = dict(zip(syms, p))
        np.testing.assert_allclose(vals(fr.G, (m, m)), _num(S["G"], sub), atol=1e-12)
        np.testing.assert_allclose(vals(fr.Pm, (k, m)), _num(S["Pm"], sub), atol=1e-12)
        np.testing.assert_allclose(vals(fr.Phi, (m, m)), _num(S["Phi"], sub), rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(vals(fr.K, (k, m)), _num(S["K"], sub), rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(vals(fr.Rhat, (m, m, m)), _num(S["Rhat"], sub), rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(vals(fr.Rcheck, (k, m, m)), _num(S["Rcheck"], sub), rtol=1e-10, atol=1e-10)


def test_velocity_independent_constraint():
    sys = ConstrainedSystem.from_strings(["x1", "x2"], ["y"], ["-x1", "u_x1*x2"], ["x1^2 + sin(t)"])
    fr = ConstrainedFrame(sys, [0.3, 0.2, -0.5, 0.1, 0.7, -0.4], 2)
    assert np.all(vals(fr.Pm) == 0)
    H = vals(fr.H, (2, 6))
    np.testing.assert_array_equal(H[:, 3], 0.0)  # no d/dy part
    assert np.all(vals(fr.Rcheck) == 0)


# -- connection -----------------------------------------------------------

def test_knife_edge_constraint_direction_components(rng):
    fr = ConstrainedFrame(KNIFE, knife_point(rng), 2)
    om = constrained_components(fr)
    jA = fr.jA[0]
    assert np.all(om[0, jA] == 0)
    for a in fr.jH:
        assert np.all(om[a, jA] == 0)
    assert np.all(om[jA, jA] == 0)
    conn = constrained_connection(fr)
    for e in (fr.gamma, fr.H[0], fr.H[1], fr.dx[0]):
        assert np.max(np.abs(vals(conn(e, fr.dx[0])))) <= 1e-14


def test_gamma_is_parallel(rng):
    fr = ConstrainedFrame(CURVY, rng.uniform(-1, 1, CURVY.dim), 2)
    conn = constrained_connection(fr)
    for _ in range(5):
        X = random_field(rng, fr.point, 2)
        assert np.max(np.abs(vals(conn(X, fr.gamma)))) <= 1e-12


def test_unconstrained_limit_matches_mp(rng):
    sode = SodeSystem.from_strings(["x1", "x2"], ["0", "-u_x1*u_x2*tan(x1)"])
    cons = ConstrainedSystem.from_strings(["x1", "x2"], [], ["0", "-u_x1*u_x2*tan(x1)"], [])
    for _ in range(5):
        p = np.r_[0.0, rng.uniform(-1, 1, 4)]
        fu, fc = build_frame(sode, p, 2), ConstrainedFrame(cons, p, 2)
        np.testing.assert_allclose(vals(fc.Phi), vals(fu.Phi), atol=1e-12)
        # adapted orders differ: [Gamma, V, H] versus [Gamma, H, V]
        perm = [0, 3, 4, 1, 2]
        om_u = mp_components(fu)[np.ix_(perm, perm, perm)]
        np.testing.assert_allclose(constrained_components(fc), om_u, atol=1e-12)
        cu, cc = mp_connection(fu), constrained_connection(fc)
        X, Y = random_field(rng, p, 2), random_field(rng, p, 2)
        assert np.max(np.abs(vals(cu(X, Y)) - vals(cc(X, Y)))) <= 1e-12


def test_symmetric_auxiliary_connection_is_torsion_free():
    ups = [[["0", "0"], ["0", "-sin(p)*cos(p)"]], [["0", "cot(p)"], ["cot(p)", "0"]]]
    sys = ConstrainedSystem.from_strings(["x"], ["p", "q"], ["-x"], ["u_x", "u_x*p"], Upsilon=ups)
    fr = ConstrainedFrame(sys, [0.0, 0.3, 0.9, -0.2, 0.5], 2)
    tor = constrained_torsion_table(fr)
    A = fr.jA
    assert np.all(tor[np.ix_(A, A)] == 0)


def test_knife_edge_torsion_gamma_horizontal(rng):
    p = knife_point(rng)
    fr = ConstrainedFrame(KNIFE, p, 2)
    cf = knife_edge_closed_forms(p[1], p[4], p[5])
    T = torsion(constrained_connection(fr), fr.gamma, fr.H[1])
    expected = -cf["Phi22"] * vals(fr.V[1]) - cf["K32"] * vals(fr.dx[0]) - cf["Phi12"] * vals(fr.V[0])
    np.testing.assert_allclose(vals(T), expected, atol=1e-10)
    tor = constrained_torsion_table(fr)
    np.testing.assert_allclose(vals(fr.coframe @ T), tor[0, fr.jH[1]], atol=1e-10)


# -- shape map and eigencondition -----------------------------------------

def test_knife_edge_spectrum_and_eigenvectors(rng):
    for _ in range(10):
        p = knife_point(rng)
        fr = ConstrainedFrame(KNIFE, p, 2)
        cf = knife_edge_closed_forms(p[1], p[4], p[5])
        sh = shape_constrained(fr)
        mu = np.sqrt(-cf["Phi22"])
        assert sorted(r for r, _ in sh["roots"]) == pytest.approx([-mu, 0.0, mu], abs=1e-7)
        by_mu = {round(e["mu"], 6): e for e in sh["eigen"]}
        zero = by_mu[0.0]["vectors"]
        assert zero.shape[0] == 3
        # Gamma, d/dy and u_phi H_1 + u_x H_2 span the kernel
        for target in (np.eye(6)[0], np.eye(6)[1], np.r_[0, 0, p[4], p[5], 0, 0]):
            proj = zero.T @ (zero @ target)
            assert np.max(np.abs(proj - target)) <= 1e-7 * (1 + np.max(np.abs(target)))
        for sign in (1, -1):
            ent = min(sh["eigen"], key=lambda e: abs(e["mu"] - sign * mu))
            assert ent["vectors"].shape[0] == 1
            v = ent["vectors"][0]
            m_ = ent["mu"]
            target = np.array([0.0, -cf["K32"], 0.0, m_, 0.0, m_**2])
            target /= np.linalg.norm(target)
            assert min(np.max(np.abs(v - target)), np.max(np.abs(v + target))) <= 1e-7


def test_lambda_polynomial_is_monic_of_degree_3m(rng):
    fr = ConstrainedFrame(CURVY, rng.uniform(-1, 1, CURVY.dim), 2)
    c = lambda_polynomial(fr)
    assert len(c) == 7
    assert c[0] == pytest.approx(1.0, abs=1e-9)


def test_single_dof_factorisation():
    # F = x, y' = u_x: K dF/dy = 0, so det = mu^3 + mu Phi with Phi = -1
    sys = ConstrainedSystem.from_strings(["x"], ["y"], ["x"], ["u_x"])
    fr = ConstrainedFrame(sys, [0.0, 0.4, 0.1, -0.3], 2)
    roots = real_roots(lambda_polynomial(fr))
    assert [r for r, _ in roots] == pytest.approx([-1.0, 0.0, 1.0], abs=1e-9)


def test_complex_only_nonzero_roots(fixtures_dir):
    loaded = load_system(fixtures_dir / "follower_oscillator.json")
    fr = ConstrainedFrame(loaded.system, loaded.points[0], 2)
    roots = real_roots(lambda_polynomial(fr))
    assert roots == [(0.0, 1)]


def test_real_roots_clusters_multiplicities():
    # (mu - 1)^2 (mu + 2) mu
    coeffs = np.poly([1.0, 1.0, -2.0, 0.0])
    roots = real_roots(coeffs)
    assert [mult for _, mult in roots] == [1, 1, 2]
    assert [r for r, _ in roots] == pytest.approx([-2.0, 0.0, 1.0], abs=1e-7)


def test_decoupling_predicate(rng):
    fr = ConstrainedFrame(KNIFE, knife_point(rng), 2)
    d = shape_of_constraint_direction(fr, 0)
    assert d["shape_vanishes"] and d["derivatives_vanish"]
    assert d["A_H_norm"] <= 1e-12
    coupled = ConstrainedSystem.from_strings(["x"], ["y"], ["-y"], ["u_x*y"])
    d = shape_of_constraint_direction(ConstrainedFrame(coupled, [0.0, 0.3, 0.8, 0.5], 2), 0)
    assert not d["shape_vanishes"] and not d["derivatives_vanish"]


# -- Chetaev connection ------------------------------------------------------

def test_chetaev_knife_edge(rng):
    p = knife_point(rng)
    fr = ConstrainedFrame(KNIFE, p, 2)
    assert vals(fr.Pm, (1, 2))[0, 1] == pytest.approx(-np.tan(p[1]))
    ch = chetaev_connection(fr)
    assert ch["sigma"][0] == pytest.approx(0.0, abs=1e-14)
    assert ch["sigma_b"][0, 1] == pytest.approx(np.tan(p[1]))
    assert ch["affine"]


def test_chetaev_constant_constraint():
    sys = ConstrainedSystem.from_strings(["x"], ["y"], ["0"], ["2.5"])
    ch = chetaev_connection(ConstrainedFrame(sys, [0.0, 0.1, 0.2, 0.3], 2))
    assert ch["sigma"][0] == 2.5 and ch["sigma_b"][0, 0] == 0.0 and ch["affine"]


def test_chetaev_detects_nonaffine_constraint(rng):
    ch = chetaev_connection(ConstrainedFrame(CURVY, rng.uniform(-1, 1, CURVY.dim), 2))
    assert not ch["affine"]


# -- full identity suite ------------------------------------------------------

@pytest.mark.parametrize("system", [KNIFE, CURVY], ids=["knife", "curvy"])
def test_constrained_suite(system, rng):
    for _ in range(3):
        p = knife_point(rng) if system is KNIFE else rng.uniform(-1, 1, system.dim)
        res = constrained_suite(ConstrainedFrame(system, p, 3), rng)
        bad = {k: v for k, v in res.items() if not v <= 1e-8}
        assert not bad


def test_constrained_suite_on_fixture(rng):
    loaded = load_system(FIXTURES / "knife_edge_constrained.json")
    for p in loaded.points + sample_points(loaded, 3, rng):
        res = constrained_suite(loaded.frame(p, 3), rng)
        assert max(res.values()) <= 1e-8
