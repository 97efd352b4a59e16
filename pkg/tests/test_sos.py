"""SOS compilation: bases, Gram matching, certificates, oracle polynomials."""

import numpy as np
import pytest

from ccm.poly import Polynomial, poly_from_text
from ccm.sdp import SdpStatus, solve
from ccm.sos import (
    AffExpr,
    MatrixBound,
    MatrixParam,
    OddDegreeError,
    ParamPoly,
    ScalarParam,
    SosConstraint,
    SosKind,
    check_certificate,
    compile as sos_compile,
    gram_basis,
    is_sos,
    monomials_upto,
    recover_certificate,
)


def P(text, nvars=2):
    return poly_from_text(text, nvars)


# -- bases ---------------------------------------------------------------------


def test_scalar_basis_x2_plus_1():
    con = SosConstraint("c", ParamPoly.from_poly(poly_from_text("x1^2 + 1", 1)))
    assert gram_basis(con) == [(0,), (1,)]


def test_scalar_basis_two_vars_degree_2():
    con = SosConstraint("c", ParamPoly.from_poly(P("x1^2 + x2^2 + 1")))
    assert gram_basis(con) == [(0, 0), (1, 0), (0, 1)]


def test_quadratic_form_basis_linear_coefficients():
    # delta' Q(x) delta with Q linear in x, n = 2:
    # basis {d1, d2, x1*d1, x1*d2, x2*d1, x2*d2}
    expr = ParamPoly.from_poly(
        P("x1*x3^2 + x2*x3*x4 + x4^2", nvars=4)
    )
    con = SosConstraint("q", expr, kind=SosKind.QUADRATIC_FORM, ndelta=2)
    assert gram_basis(con) == [
        (0, 0, 1, 0),
        (0, 0, 0, 1),
        (1, 0, 1, 0),
        (1, 0, 0, 1),
        (0, 1, 1, 0),
        (0, 1, 0, 1),
    ]


def test_quadratic_form_requires_delta_homogeneity():
    with pytest.raises(ValueError, match="homogeneous"):
        SosConstraint(
            "bad",
            ParamPoly.from_poly(P("x2 + x2^2", nvars=2)),
            kind=SosKind.QUADRATIC_FORM,
            ndelta=1,
        )


def test_odd_degree_reported():
    con = SosConstraint("odd", ParamPoly.from_poly(poly_from_text("x1^3 + x1", 1)))
    with pytest.raises(OddDegreeError, match="odd total degree"):
        gram_basis(con)


def test_monomial_enumeration_order():
    assert monomials_upto(2, 2) == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


# -- compile + solve -------------------------------------------------------------


def test_single_rho_constraint_shape():
    # rho(x) in SOS, degree 2, 2 vars: one 3x3 Gram block plus matching equalities
    rho = ParamPoly(2, {m: AffExpr(0.0, {(f"r{k}",): 1.0}) for k, m in enumerate(monomials_upto(2, 2))})
    prob, info = sos_compile([SosConstraint("rho", rho)])
    assert info.block_dims == {"gram.rho": 3}
    assert info.n_scalar_vars == 6
    sol = solve(prob)
    assert sol.status is SdpStatus.FEASIBLE


def test_is_sos_x2_plus_1_with_certificate():
    res = is_sos(poly_from_text("x1^2 + 1", 1))
    assert res.status is SdpStatus.FEASIBLE
    assert check_certificate(poly_from_text("x1^2 + 1", 1), res.certificate, 1e-6)


def test_is_sos_rejects_x():
    res = is_sos(poly_from_text("x1", 1))
    assert res.status is SdpStatus.INFEASIBLE
    assert "odd" in res.message


def test_even_degree_non_sos_detected_by_solver():
    # x1^2*x2^2*(x1^2 - 1) + ... is odd in no variable; use a simple non-SOS:
    # p = x^2 y^2 (x^2 + y^2 - 1) + small const is indefinite; simplest check:
    # -(x1^2) is even degree but negative
    res = is_sos(P("-x1^2"))
    assert res.status is SdpStatus.INFEASIBLE


def test_motzkin_not_sos():
    motzkin = P("x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1")
    res = is_sos(motzkin)
    assert res.status is SdpStatus.INFEASIBLE
    # cross-check: no Gram decomposition at the default basis or enlarged ones
    for half in (None, 4, 5):
        con = SosConstraint("m", ParamPoly.from_poly(motzkin), half_degree=half)
        prob, _ = sos_compile([con])
        sol = solve(prob)
        assert sol.status is SdpStatus.INFEASIBLE, f"half_degree={half}"


def test_motzkin_nonnegative_sanity():
    # sanity for the oracle itself: Motzkin is nonnegative on a sample grid
    motzkin = P("x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1")
    g = np.linspace(-2, 2, 41)
    pts = np.array([(a, b) for a in g for b in g])
    assert motzkin.eval_many(pts).min() >= -1e-12


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_random_true_sos_feasible_with_valid_certificate(seed):
    rng = np.random.default_rng(seed)
    qs = []
    for _ in range(3):
        q = Polynomial(2, {m: rng.normal() for m in monomials_upto(2, 2)})
        qs.append(q)
    p = Polynomial.zero(2)
    for q in qs:
        p = p + q * q
    res = is_sos(p)
    assert res.status is SdpStatus.FEASIBLE
    assert check_certificate(p, res.certificate, 1e-6)


def test_check_certificate_rejects_wrong_witness():
    from ccm.sos import SosCertificate

    cert = SosCertificate([(0,), (1,)], np.diag([1.0, 1.0]))
    assert check_certificate(poly_from_text("x1^2 + 1", 1), cert, 1e-9)
    assert not check_certificate(poly_from_text("x1^2 + 2", 1), cert, 1e-9)
    assert not check_certificate(poly_from_text("x1", 1), cert, 1e-9)
    bad = SosCertificate([(0,), (1,)], np.array([[1.0, 0.0], [0.0, -1.0]]))
    assert not check_certificate(poly_from_text("1 - x1^2", 1), bad, 1e-9)


def test_parameterized_constraint_with_matrix_bound():
    # w in [1, 4] (1x1 matrix param), constraint: (w - 1) + (4 - w)*x1^2 in SOS
    w = MatrixParam("w", 1)
    expr = (
        ParamPoly.param(1, ("w", 0, 0))
        + ParamPoly.from_poly(poly_from_text("-1", 1))
        + ParamPoly.param(1, ("w", 0, 0), poly_from_text("-1*x1^2", 1))
        + ParamPoly.from_poly(poly_from_text("4*x1^2", 1))
    )
    con = SosConstraint("c", expr)
    prob, info = sos_compile([con], bounds=[MatrixBound(w, 1.0, 4.0)])
    sol = solve(prob)
    assert sol.status is SdpStatus.FEASIBLE
    wval = float(np.asarray(sol.values["w"])[0, 0])
    assert 1.0 - 1e-7 <= wval <= 4.0 + 1e-7
    cert = recover_certificate(info, "c", sol.values)
    concrete = expr.substitute_params(sol.values)
    assert check_certificate(concrete, cert, 1e-6)


def test_round_trip_certificates_for_feasible_compiles():
    # randomized parameterized instances: recovered certificates verify at 1e-6
    rng = np.random.default_rng(5)
    for trial in range(3):
        target = Polynomial(2, {m: rng.normal() for m in monomials_upto(2, 1)})
        target = target * target  # SOS by construction
        # theta * 1 + target in SOS with theta free scalar
        expr = ParamPoly.param(2, ("theta",)) + ParamPoly.from_poly(target)
        con = SosConstraint(f"t{trial}", expr)
        prob, info = sos_compile([con], params=[ScalarParam("theta")])
        sol = solve(prob)
        assert sol.status is SdpStatus.FEASIBLE
        cert = recover_certificate(info, f"t{trial}", sol.values)
        assert check_certificate(expr.substitute_params(sol.values), cert, 1e-6)


def test_structured_and_full_encodings_agree():
    # delta-quadratic instances solvable both ways must agree on status
    cases = []
    # feasible: delta' diag(1 + x^2, 2) delta
    cases.append((P("x3^2 + x1^2*x3^2 + 2*x4^2", nvars=4), True))
    # infeasible: delta' diag(x^2 - 1, 1) delta  (indefinite in x)
    cases.append((P("x1^2*x3^2 - x3^2 + x4^2", nvars=4), False))
    for expr, want_feasible in cases:
        con = SosConstraint("q", ParamPoly.from_poly(expr), kind=SosKind.QUADRATIC_FORM, ndelta=2)
        statuses = []
        for enc in ("structured", "full"):
            prob, _ = sos_compile([con], encoding=enc)
            statuses.append(solve(prob).status)
        assert statuses[0] == statuses[1]
        assert (statuses[0] is SdpStatus.FEASIBLE) == want_feasible


def test_undeclared_parameter_rejected():
    expr = ParamPoly.param(1, ("theta",))
    with pytest.raises(ValueError, match="not declared"):
        sos_compile([SosConstraint("c", expr)], params=[ScalarParam("other")])


def test_matrix_param_without_bound_rejected():
    expr = ParamPoly.param(1, ("W", 0, 0))
    with pytest.raises(ValueError, match="interval bound"):
        sos_compile([SosConstraint("c", expr)])
