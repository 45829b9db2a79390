"""Independent oracles: exact flat-gap solutions, manufactured problems,
and grid-convergence studies.

The manufactured fields are separable in the computational coordinates
(x', t): each component is a sum of products of per-coordinate factors,
polynomial in the tangential directions and polynomial or trigonometric in
t.  Physical-space derivatives come from the exact chain rule through
t = (x_n - bottom)/delta, whose jets the auxiliary module evaluates in
closed form, so the induced source f* = L u* is exact up to rounding.  A
separate nested finite-difference application of the operator, working
purely in physical coordinates with its own stencils, cross-checks f*
without sharing any code with the assembly path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .auxiliary import AuxiliaryEvaluator
from .mesh_solver import MappedGrid, assemble, quadrature_weights, solve_system

__all__ = [
    "Factor1D",
    "SeparableField",
    "ManufacturedProblem",
    "ConvergenceStudy",
    "flat_gap_exact",
    "manufactured_problem",
    "fd_apply_operator",
    "convergence_study",
]


def flat_gap_exact(epsilon, a, b, x):
    """Exact solution between flat plates with constant data a on top, b on
    bottom: componentwise b + (a - b)*(x_n + eps/2)/eps.  Linear fields are
    in the kernel of any constant-coefficient principal part, so this solves
    the homogeneous problem exactly for the built-in operators.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    frac = (pts[:, -1] + epsilon / 2.0) / epsilon
    vals = b[:, None] + (a - b)[:, None] * frac[None, :]
    return vals[:, 0] if single else vals


class Factor1D:
    """One factor of a separable field: polynomial coefficients (low order
    first) or a trigonometric wave sin/cos(freq*s + phase).  Jets are closed
    form through second order.
    """

    def __init__(self, kind, coeffs=None, freq=1.0, phase=0.0):
        if kind not in ("poly", "sin", "cos"):
            raise ValueError(f"unknown factor kind {kind!r}")
        self.kind = kind
        self.coeffs = tuple(float(c) for c in (coeffs or ()))
        self.freq = float(freq)
        self.phase = float(phase)

    def jet(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "poly":
            c = np.array(self.coeffs if self.coeffs else (0.0,))
            d1 = np.polynomial.polynomial.polyder(c)
            d2 = np.polynomial.polynomial.polyder(c, 2)
            pv = np.polynomial.polynomial.polyval
            return pv(s, c), pv(s, d1) if len(d1) else np.zeros_like(s), \
                pv(s, d2) if len(d2) else np.zeros_like(s)
        arg = self.freq * s + self.phase
        w = self.freq
        if self.kind == "sin":
            return np.sin(arg), w * np.cos(arg), -w * w * np.sin(arg)
        return np.cos(arg), -w * np.sin(arg), -w * w * np.cos(arg)


class SeparableField:
    """Sum of products of per-coordinate factors over (x_1..x_{n-1}, t)."""

    def __init__(self, n, terms):
        # terms: list of (coef, (factor_0, ..., factor_{n-1})), one factor
        # per computational coordinate, t last
        self.n = n
        self.terms = []
        for coef, factors in terms:
            if len(factors) != n:
                raise ValueError(f"need {n} factors per term, got {len(factors)}")
            self.terms.append((float(coef), tuple(factors)))

    def jets(self, comp_points):
        """Value, gradient, Hessian w.r.t. computational coordinates.

        comp_points: (M, n) with t in the last slot.  Returns (M,), (M, n),
        (M, n, n).
        """
        pts = np.asarray(comp_points, dtype=float)
        M, n = pts.shape
        val = np.zeros(M)
        grad = np.zeros((M, n))
        hess = np.zeros((M, n, n))
        for coef, factors in self.terms:
            jets = [f.jet(pts[:, d]) for d, f in enumerate(factors)]
            v = coef * np.prod([j[0] for j in jets], axis=0)
            val += v
            for d in range(n):
                g = coef * np.ones(M)
                for e in range(n):
                    g = g * (jets[e][1] if e == d else jets[e][0])
                grad[:, d] += g
            for d in range(n):
                for e in range(d, n):
                    h = coef * np.ones(M)
                    for k in range(n):
                        if d == e:
                            h = h * (jets[k][2] if k == d else jets[k][0])
                        else:
                            h = h * (jets[k][1] if k in (d, e) else jets[k][0])
                    hess[:, d, e] += h
                    if e != d:
                        hess[:, e, d] += h
        return val, grad, hess


@dataclass
class ManufacturedProblem:
    op: object
    region: object
    fields: tuple  # SeparableField per component

    def __post_init__(self):
        self._aux = AuxiliaryEvaluator(self.region)

    def _comp_coords(self, points):
        pts = np.asarray(points, dtype=float)
        region = self.region
        tang = pts[:, :-1]
        delta = region.delta_poly.value_many(tang)
        bottom = region.bottom_poly.value_many(tang)
        t = (pts[:, -1] - bottom) / delta
        return np.concatenate([tang, t[:, None]], axis=-1)

    def jets(self, points):
        """Values, physical gradients and Hessians of u* at physical points.

        Chain rule through t = ubar(x): with U the computational field,
            du/dx_a   = U_a + U_t t_a
            d2u/dab   = U_ab + U_at t_b + U_bt t_a + U_tt t_a t_b + U_t t_ab
        where t_a are the exact ubar derivatives (t_nn = 0).
        """
        pts = np.asarray(points, dtype=float)
        M, n = pts.shape
        N = len(self.fields)
        comp = self._comp_coords(pts)
        tg = self._aux.ubar_grad(pts)        # (n, M), derivative-major
        th = self._aux.ubar_hess(pts)        # (n, n, M)
        vals = np.zeros((N, M))
        grads = np.zeros((N, M, n))
        hesss = np.zeros((N, M, n, n))
        for i, f in enumerate(self.fields):
            V, G, H = f.jets(comp)
            Ut = G[:, -1]
            Utt = H[:, -1, -1]
            vals[i] = V
            for a in range(n):
                base = G[:, a] if a < n - 1 else 0.0
                grads[i][:, a] = base + Ut * tg[a]
            for a in range(n):
                for b in range(a, n):
                    term = Ut * th[a, b] + Utt * tg[a] * tg[b]
                    if a < n - 1 and b < n - 1:
                        term = term + H[:, a, b] \
                            + H[:, a, -1] * tg[b] + H[:, b, -1] * tg[a]
                    elif a < n - 1:  # b == n-1 physical vertical
                        term = term + H[:, a, -1] * tg[b]
                    elif b < n - 1:
                        term = term + H[:, b, -1] * tg[a]
                    hesss[i, :, a, b] = term
                    hesss[i, :, b, a] = term
        return vals, grads, hesss

    def values(self, points):
        return self.jets(points)[0]

    def source(self, points):
        """f* = L u* evaluated exactly at physical points."""
        op = self.op
        pts = np.asarray(points, dtype=float)
        M, n = pts.shape
        N = op.N
        vals, grads, hesss = self.jets(pts)
        out = np.zeros((N, M))
        lower = op.has_lower_order_terms()
        for i in range(N):
            acc = np.zeros(M)
            for j in range(N):
                for a in range(n):
                    for b in range(n):
                        Aab = op.A[i, j, a, b]
                        dA = Aab.deriv(a)
                        if not dA.is_zero():
                            acc += dA.value_many(pts) * grads[j, :, b]
                        if not Aab.is_zero():
                            acc += Aab.value_many(pts) * hesss[j, :, a, b]
                if lower:
                    for a in range(n):
                        Ba = op.B[i, j, a]
                        if not Ba.is_zero():
                            acc += Ba.value_many(pts) * grads[j, :, a]
                        dB = Ba.deriv(a)
                        if not dB.is_zero():
                            acc += dB.value_many(pts) * vals[j]
                        Ca = op.Cc[i, j, a]
                        if not Ca.is_zero():
                            acc += Ca.value_many(pts) * grads[j, :, a]
                    Dij = op.D[i, j]
                    if not Dij.is_zero():
                        acc += Dij.value_many(pts) * vals[j]
            out[i] = acc
        return out

    def nodal_fields(self, grid):
        """(u*, f*) at the grid nodes, shapes (N, *dims)."""
        vals = self.values(grid.points).reshape((len(self.fields),) + grid.dims)
        src = self.source(grid.points).reshape((len(self.fields),) + grid.dims)
        return vals, src


def manufactured_problem(op, region, u_star_spec):
    """Build a ManufacturedProblem from a term-list specification.

    u_star_spec: per component, a list of (coef, factor_specs) where each
    factor spec is ("poly", c0, c1, ...), ("sin", freq[, phase]) or
    ("cos", freq[, phase]), one per computational coordinate with t last.
    """
    if len(u_star_spec) != op.N:
        raise ValueError(f"expected {op.N} components, got {len(u_star_spec)}")
    fields = []
    for comp in u_star_spec:
        terms = []
        for coef, fspecs in comp:
            factors = []
            for fs in fspecs:
                kind = fs[0]
                if kind == "poly":
                    factors.append(Factor1D("poly", coeffs=fs[1:]))
                elif kind in ("sin", "cos"):
                    freq = fs[1] if len(fs) > 1 else 1.0
                    phase = fs[2] if len(fs) > 2 else 0.0
                    factors.append(Factor1D(kind, freq=freq, phase=phase))
                else:
                    raise ValueError(f"unknown factor spec {fs!r}")
            terms.append((coef, factors))
        fields.append(SeparableField(region.n, terms))
    return ManufacturedProblem(op=op, region=region, fields=tuple(fields))


_STENCILS = {
    2: ((-1, -0.5), (1, 0.5)),
    4: ((-2, 1 / 12), (-1, -2 / 3), (1, 2 / 3), (2, -1 / 12)),
}


def _fd_grad(u_func, points, steps, order, N):
    """Central-difference physical gradient of a callable field."""
    pts = np.asarray(points, dtype=float)
    M, n = pts.shape
    out = np.zeros((N, M, n))
    for d in range(n):
        h = steps[d]
        for off, wgt in _STENCILS[order]:
            shifted = pts.copy()
            shifted[:, d] += off * h
            out[:, :, d] += (wgt / h) * u_func(shifted)
    return out


def fd_apply_operator(op, region, u_func, points, h=None, order=4):
    """Apply the divergence-form operator to a callable by nested physical-
    space differences; independent of both the symbolic jets and the solver
    assembly.  u_func maps (M, n) points to (N, M) values.  The vertical
    step scales with the local gap so the stencil stays adapted to the thin
    direction.
    """
    pts = np.asarray(points, dtype=float)
    M, n = pts.shape
    N = op.N
    if h is None:
        h = 5e-3
    delta0 = region.delta_poly.value_many(pts[:, :-1]).min()
    steps = [h] * (n - 1) + [h * min(1.0, delta0)]

    def grad_at(q):
        return _fd_grad(u_func, q, steps, order, N)

    def flux(a):
        # G_a^i(x) = A^{ab}_{ij} d_b u^j + B^a_{ij} u^j at arbitrary points
        def G(q):
            vals = u_func(q)
            grads = grad_at(q)
            out = np.zeros((N, q.shape[0]))
            for i in range(N):
                for j in range(N):
                    for b in range(n):
                        Aab = op.A[i, j, a, b]
                        if not Aab.is_zero():
                            out[i] += Aab.value_many(q) * grads[j, :, b]
                    Ba = op.B[i, j, a]
                    if not Ba.is_zero():
                        out[i] += Ba.value_many(q) * vals[j]
            return out
        return G

    result = np.zeros((N, M))
    for a in range(n):
        Ga = flux(a)
        hstep = steps[a]
        for off, wgt in _STENCILS[order]:
            shifted = pts.copy()
            shifted[:, a] += off * hstep
            result += (wgt / hstep) * Ga(shifted)
    if op.has_lower_order_terms():
        vals = u_func(pts)
        grads = grad_at(pts)
        for i in range(N):
            for j in range(N):
                for b in range(n):
                    Cb = op.Cc[i, j, b]
                    if not Cb.is_zero():
                        result[i] += Cb.value_many(pts) * grads[j, :, b]
                Dij = op.D[i, j]
                if not Dij.is_zero():
                    result[i] += Dij.value_many(pts) * vals[j]
    return result


@dataclass
class ConvergenceStudy:
    grids: list
    errors_inf: list
    errors_l2: list
    orders_inf: list = field(default_factory=list)
    orders_l2: list = field(default_factory=list)
    monotone: bool = True

    def min_order(self):
        return min(self.orders_inf) if self.orders_inf else math.nan


def convergence_study(problem, grid_list, tol=1e-12):
    """Solve the manufactured problem on each grid and report errors.

    grid_list: (nx, nt) pairs, expected in 2:1-ish refinement.  Errors are
    nodal L-infinity and Jacobian-weighted L2 against u*; orders are log2
    ratios of successive errors.
    """
    region = problem.region
    errors_inf, errors_l2, grids = [], [], []
    for nx, nt in grid_list:
        grid = MappedGrid(region, nx, nt)
        exact, src = problem.nodal_fields(grid)
        system = assemble(problem.op, grid, nodal_bc=exact, source=src)
        sol = solve_system(system, tol=tol)
        diff = sol.values - exact
        errors_inf.append(float(np.abs(diff).max()))
        w = quadrature_weights(grid)
        errors_l2.append(float(np.sqrt((diff.reshape(len(problem.fields), -1) ** 2 * w).sum())))
        grids.append((nx, nt))
    orders_inf = [math.log2(errors_inf[k] / errors_inf[k + 1])
                  for k in range(len(errors_inf) - 1)]
    orders_l2 = [math.log2(errors_l2[k] / errors_l2[k + 1])
                 for k in range(len(errors_l2) - 1)]
    monotone = all(errors_inf[k + 1] < errors_inf[k] for k in range(len(errors_inf) - 1))
    return ConvergenceStudy(grids=grids, errors_inf=errors_inf, errors_l2=errors_l2,
                            orders_inf=orders_inf, orders_l2=orders_l2,
                            monotone=monotone)
