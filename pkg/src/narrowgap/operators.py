"""Divergence-form elliptic systems: coefficient tensors and their measured constants.

An operator is  d/dx_a ( A_ij^{ab} d/dx_b u^j + B_ij^a u^j ) + Cc_ij^b d/dx_b u^j
+ D_ij u^j  with polynomial coefficient entries, i the equation index and j the
component index.  Builtins: the scalar Laplacian and the isotropic elasticity
(Lame) tensor.  The module also measures the constants the estimates depend
on: an integral ellipticity lower bound from a randomized Rayleigh search, a
sampled sup bound for |A|, and a sampled C2 coefficient bound.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .geometry import NarrowRegion, GeometryError
from .polynomial import PolynomialField, RationalField

__all__ = [
    "EllipticOperator",
    "OperatorError",
    "make_builtin",
    "apply_operator_poly",
    "estimate_ellipticity",
    "estimate_bounds",
    "rescale_coefficients",
]


class OperatorError(ValueError):
    pass


def _const(n, c):
    return PolynomialField.constant(n, c)


def _as_poly(n, entry):
    if isinstance(entry, PolynomialField):
        if entry.nvars != n:
            raise OperatorError(f"coefficient over {entry.nvars} vars, expected {n}")
        return entry
    return _const(n, entry)


class EllipticOperator:
    """Coefficient tensors A, B, Cc, D with claimed structure constants.

    A has shape (N, N, n, n) indexed [i][j][a][b], B and Cc shape (N, N, n),
    D shape (N, N); entries are PolynomialField over the n space variables.
    lambda_claim / Lambda_claim / kappa2_claim are the user's claimed
    ellipticity, boundedness and C2 constants; estimate_* measures them.
    """

    def __init__(self, n, N, A, B=None, Cc=None, D=None,
                 lambda_claim=None, Lambda_claim=None, kappa2_claim=None, label=""):
        if n not in (2, 3):
            raise OperatorError("n must be 2 or 3")
        if N < 1:
            raise OperatorError("N must be >= 1")
        self.n = int(n)
        self.N = int(N)
        zero = PolynomialField.zero(n)

        def tensor(src, shape):
            out = np.empty(shape, dtype=object)
            for idx in np.ndindex(shape):
                out[idx] = zero
            if src is not None:
                arr = np.asarray(src, dtype=object)
                if arr.shape != shape:
                    raise OperatorError(f"tensor shape {arr.shape}, expected {shape}")
                for idx in np.ndindex(shape):
                    out[idx] = _as_poly(n, arr[idx])
            return out

        self.A = tensor(A, (N, N, n, n))
        self.B = tensor(B, (N, N, n))
        self.Cc = tensor(Cc, (N, N, n))
        self.D = tensor(D, (N, N))
        self.lambda_claim = lambda_claim
        self.Lambda_claim = Lambda_claim
        self.kappa2_claim = kappa2_claim
        self.label = label
        self._key = (
            n, N,
            tuple(self.A.ravel()), tuple(self.B.ravel()),
            tuple(self.Cc.ravel()), tuple(self.D.ravel()),
        )

    def __eq__(self, other):
        return isinstance(other, EllipticOperator) and self._key == other._key

    def __hash__(self):
        return hash(self._key)

    def is_symmetric(self):
        """A_ij^{ab} == A_ji^{ba} entrywise (exact polynomial equality)."""
        for i in range(self.N):
            for j in range(self.N):
                for a in range(self.n):
                    for b in range(self.n):
                        if self.A[i, j, a, b] != self.A[j, i, b, a]:
                            return False
        return True

    def has_elasticity_symmetries(self):
        """A_ij^{ab} == A_ji^{ba} == A_aj^{ib}; needs N == n."""
        if self.N != self.n:
            return False
        if not self.is_symmetric():
            return False
        for i in range(self.N):
            for j in range(self.N):
                for a in range(self.n):
                    for b in range(self.n):
                        if self.A[i, j, a, b] != self.A[a, j, i, b]:
                            return False
        return True

    def has_lower_order_terms(self):
        return any(not p.is_zero() for p in
                   list(self.B.ravel()) + list(self.Cc.ravel()) + list(self.D.ravel()))


def make_builtin(kind, n=2, lame_mu=1.0, lame_lambda=1.0):
    """Build a named operator: ``laplace`` (N=1) or ``lame`` (N=n).

    The Lame tensor is the symmetrized isotropic one,
    A_ij^{ab} = lam*d_ai*d_bj + mu*(d_ab*d_ij + d_aj*d_bi),
    whose divergence applied to u is mu*Lap(u) + (lam+mu)*grad(div u) and
    which satisfies all three elasticity symmetries entrywise.
    Requires mu > 0 and lam + mu >= 0.
    """
    if kind == "laplace":
        A = np.empty((1, 1, n, n), dtype=object)
        for a in range(n):
            for b in range(n):
                A[0, 0, a, b] = _const(n, 1 if a == b else 0)
        return EllipticOperator(
            n, 1, A, lambda_claim=1.0, Lambda_claim=1.0, kappa2_claim=1.0,
            label="laplace",
        )
    if kind == "lame":
        mu = Fraction(lame_mu)
        lam = Fraction(lame_lambda)
        if not mu > 0:
            raise OperatorError("lame_mu must be positive")
        if lam + mu < 0:
            raise OperatorError("lame_lambda + lame_mu must be >= 0")
        A = np.empty((n, n, n, n), dtype=object)
        for i in range(n):
            for j in range(n):
                for a in range(n):
                    for b in range(n):
                        c = Fraction(0)
                        if a == i and b == j:
                            c += lam
                        if a == b and i == j:
                            c += mu
                        if a == j and b == i:
                            c += mu
                        A[i, j, a, b] = _const(n, c)
        return EllipticOperator(
            n, n, A,
            lambda_claim=float(mu),
            Lambda_claim=float(lam + 2 * mu),
            kappa2_claim=float(lam + 2 * mu),
            label=f"lame(mu={float(mu):g},lambda={float(lam):g})",
        )
    raise OperatorError(f"unknown builtin operator {kind!r}")


def apply_operator_poly(op, comps):
    """Apply the operator exactly to a polynomial vector field.

    comps is a length-N sequence of PolynomialField over the n space
    variables; returns the length-N list L[u]^i, each an exact polynomial.
    Used as the symbolic oracle for builtin divergences and source terms.
    """
    if len(comps) != op.N:
        raise OperatorError(f"field has {len(comps)} components, operator wants {op.N}")
    comps = [_as_poly(op.n, c) for c in comps]
    grads = [[c.deriv(b) for b in range(op.n)] for c in comps]
    out = []
    for i in range(op.N):
        acc = PolynomialField.zero(op.n)
        for j in range(op.N):
            for a in range(op.n):
                flux = PolynomialField.zero(op.n)
                for b in range(op.n):
                    flux = flux + op.A[i, j, a, b] * grads[j][b]
                flux = flux + op.B[i, j, a] * comps[j]
                acc = acc + flux.deriv(a)
            for b in range(op.n):
                acc = acc + op.Cc[i, j, b] * grads[j][b]
            acc = acc + op.D[i, j] * comps[j]
        out.append(acc)
    return out


# ---------------------------------------------------------------------------
# measured constants


def _trapezoid_weights(m):
    w = np.ones(m)
    w[0] = w[-1] = 0.5
    return w


def _quadrature_nodes(region, grid_spec):
    """Tensor trapezoid quadrature over the mapped region.

    Returns tangential axes, t axis, flattened physical points (M, n), weights
    including the vertical Jacobian delta(x'), and the metric arrays needed to
    push computational gradients to physical ones.  Self-contained on purpose:
    the ellipticity search must not share the solver's code path.
    """
    nd = region.nd
    mx, mt = grid_spec
    axes = [np.linspace(-region.r_solve, region.r_solve, mx) for _ in range(nd)]
    t_ax = np.linspace(0.0, 1.0, mt)
    grids = np.meshgrid(*axes, t_ax, indexing="ij")
    tang = np.stack([g.ravel() for g in grids[:-1]], axis=-1)
    tvals = grids[-1].ravel()
    delta = region.delta_poly.value_many(tang)
    bottom = region.bottom_poly.value_many(tang)
    xn = bottom + tvals * delta
    points = np.concatenate([tang, xn[:, None]], axis=-1)

    w = _trapezoid_weights(mx)
    weights = w.copy()
    for _ in range(nd - 1):
        weights = np.multiply.outer(weights, w)
    weights = np.multiply.outer(weights, _trapezoid_weights(mt)).ravel()
    hx = axes[0][1] - axes[0][0]
    ht = t_ax[1] - t_ax[0]
    weights = weights * hx**nd * ht * delta  # dx = delta dt dx'

    dT = np.stack(
        [
            region.bottom_poly.deriv(a).value_many(tang)
            + tvals * region.delta_poly.deriv(a).value_many(tang)
            for a in range(nd)
        ],
        axis=-1,
    )
    return points, tvals, tang, delta, dT, weights


def _sine_candidate(rng, region, tang, tvals, delta, dT, N, nmodes=3):
    """Zero-trace sine tensor mode field: values and physical gradients."""
    nd = region.nd
    r = region.r_solve
    M = len(tvals)
    grad = np.zeros((N, nd + 1, M))
    s = [(tang[:, a] + r) / (2 * r) for a in range(nd)]
    for i in range(N):
        for _ in range(nmodes):
            ks = rng.integers(1, 5, size=nd + 1)
            c = rng.normal()
            sins = [np.sin(ks[a] * np.pi * s[a]) for a in range(nd)]
            sint = np.sin(ks[nd] * np.pi * tvals)
            coss = [np.cos(ks[a] * np.pi * s[a]) for a in range(nd)]
            cost = np.cos(ks[nd] * np.pi * tvals)
            for a in range(nd):
                term = c * ks[a] * np.pi / (2 * r) * coss[a] * sint
                for b in range(nd):
                    if b != a:
                        term = term * sins[b]
                grad[i, a] += term
            term = c * ks[nd] * np.pi * cost
            for b in range(nd):
                term = term * sins[b]
            grad[i, nd] += term
    # computational -> physical
    phys = np.zeros_like(grad)
    for a in range(nd):
        phys[:, a] = grad[:, a] - (dT[:, a] / delta) * grad[:, nd]
    phys[:, nd] = grad[:, nd] / delta
    return phys


def _divfree_candidate(rng, region, points):
    """Exactly divergence-free field from a stream function (n=2 only).

    Phi = (r^2-x1^2)^2 * (ubar(1-ubar))^2 * G with polynomial G; the field
    (dPhi/dxn, -dPhi/dx1) has zero trace on all four boundary pieces and zero
    divergence identically, so the Rayleigh quotient of the Lame tensor on it
    equals mu up to quadrature error.
    """
    n = region.n
    x1 = PolynomialField.variable(n, 0)
    xn = PolynomialField.variable(n, 1)
    den = region.delta_poly.lift(n)
    p = xn - region.bottom_poly.lift(n)
    ubar = RationalField(p, den, 1)
    bump_num = (PolynomialField.constant(n, Fraction(region.r_solve) ** 2) - x1 * x1) ** 2
    tt = ubar * (1 - ubar)
    coefs = [int(v) for v in rng.integers(-3, 4, size=4)]
    G = (
        PolynomialField.constant(n, coefs[0])
        + coefs[1] * x1
        + coefs[2] * (x1 * x1)
    )
    Phi = tt * tt * (bump_num * G) + tt * tt * ubar * (bump_num * coefs[3])
    d1 = Phi.deriv(0)
    dn = Phi.deriv(1)
    xi = [dn, -1 * d1]
    grad = np.zeros((2, 2, len(points)))
    for i in range(2):
        for a in range(2):
            grad[i, a] = xi[i].deriv(a).value_many(points)
    return grad


def estimate_ellipticity(op, region, grid_spec=(49, 25), trials=64, seed=0):
    """Randomized lower estimate of the integral ellipticity constant.

    Minimum over seeded random zero-trace test fields of the Rayleigh
    quotient  int A du dv / int |grad v|^2  with trapezoid quadrature on the
    mapped region.  Fields are sine tensor modes; for n=2 half the trials are
    exactly divergence-free stream-function fields, which make the estimate
    tight (approaches mu) for the Lame tensor.  Deterministic for fixed seed.
    """
    if trials < 4:
        raise OperatorError("trials must be >= 4")
    if op.n != region.n:
        raise OperatorError("operator and region dimensions differ")
    rng = np.random.default_rng(seed)
    points, tvals, tang, delta, dT, weights = _quadrature_nodes(region, grid_spec)

    a_vals = np.empty((op.N, op.N, op.n, op.n), dtype=object)
    for idx in np.ndindex(op.N, op.N, op.n, op.n):
        a_vals[idx] = op.A[idx].value_many(points)

    def rayleigh(grad):
        num = 0.0
        for i in range(op.N):
            for j in range(op.N):
                for a in range(op.n):
                    for b in range(op.n):
                        num += float(np.sum(weights * a_vals[i, j, a, b] * grad[i, a] * grad[j, b]))
        den = float(np.sum(weights * (grad**2).sum(axis=(0, 1))))
        if den < 1e-14:
            return None
        return num / den

    best = np.inf
    ndiv = trials // 2 if (region.n == 2 and op.N == 2) else 0
    for k in range(trials):
        if k < ndiv:
            grad = _divfree_candidate(rng, region, points)
        else:
            grad = _sine_candidate(rng, region, tang, tvals, delta, dT, op.N)
        q = rayleigh(grad)
        if q is not None and q < best:
            best = q
    return float(best)


def estimate_bounds(op, region, samples=(33, 17)):
    """Sampled sup |A| and C2 coefficient norm over the mapped region.

    Returns (Lambda_est, kappa2_est): Lambda_est is the sup over samples and
    entries of |A|; kappa2_est sums, over the four tensors, the sup over
    samples of the largest entrywise |f| + |grad f| + |hess f|.
    """
    points, _, _, _, _, _ = _quadrature_nodes(region, samples)

    def tensor_c2(tensor):
        worst = 0.0
        for idx in np.ndindex(tensor.shape):
            p = tensor[idx]
            if p.is_zero():
                continue
            v = np.abs(p.value_many(points))
            g = np.zeros_like(v)
            for d in p.grad():
                g = g + d.value_many(points) ** 2
            h = np.zeros_like(v)
            for row in p.hessian():
                for e in row:
                    h = h + e.value_many(points) ** 2
            worst = max(worst, float((v + np.sqrt(g) + np.sqrt(h)).max()))
        return worst

    Lambda_est = 0.0
    for idx in np.ndindex(op.A.shape):
        p = op.A[idx]
        if not p.is_zero():
            Lambda_est = max(Lambda_est, float(np.abs(p.value_many(points)).max()))

    kappa2_est = sum(tensor_c2(t) for t in (op.A, op.B, op.Cc, op.D))
    return Lambda_est, kappa2_est


def rescale_coefficients(op, x0, delta):
    """Exact coefficient transform under x' = x0' + delta y', xn = delta yn.

    A_hat(y) = A(x0' + delta y', delta yn), B_hat = delta B, Cc_hat = delta Cc,
    D_hat = delta^2 D, composed exactly (polynomial substitution with rational
    scale/shift).  The claimed ellipticity constants carry over unchanged.
    """
    if delta <= 0:
        raise OperatorError("delta must be positive")
    x0 = tuple(float(v) for v in np.atleast_1d(x0))
    if len(x0) != op.n - 1:
        raise OperatorError("x0 must be a tangential point")
    d = Fraction(delta)
    scales = [d] * op.n
    shifts = [Fraction(v) for v in x0] + [Fraction(0)]

    def mapped(tensor, factor):
        out = np.empty(tensor.shape, dtype=object)
        for idx in np.ndindex(tensor.shape):
            out[idx] = tensor[idx].compose_affine(scales, shifts) * factor
        return out

    return EllipticOperator(
        op.n, op.N,
        mapped(op.A, Fraction(1)),
        mapped(op.B, d),
        mapped(op.Cc, d),
        mapped(op.D, d * d),
        lambda_claim=op.lambda_claim,
        Lambda_claim=op.Lambda_claim,
        kappa2_claim=op.kappa2_claim,
        label=op.label + "@rescaled",
    )
