"""Negative assortative pairing solved from its characterizing ODE system.

For instances whose optimum pools every state with exactly one partner, the
pair bounds chi1 (decreasing) and chi2 (increasing) and the obedience
multiplier q solve, for y below the top action:

    u(y, chi1) f(chi1) chi1' = u(y, chi2) f(chi2) chi2'        (mass balance)
    d/dy Q(y, chi1, chi2)    = P(y, chi1, chi2)                (multiplier)

where Q and P are the unique solutions (q, q') of the two stationarity
equations V_y + q u_y + q' u = 0 at chi1 and chi2.  Integration starts at a
trial top action with (chi1, chi2) at the state range ends and q = Q, runs
downward with an embedded 4th/5th order Runge-Kutta pair, stops at the
collision chi1 = chi2 by event detection, and shoots on the top action until
q at the collision matches -V_y / u_y evaluated at the disclosed state.

Quantile-style instances (u = 1{x >= y} - kappa) bypass the ODE: there
chi2(y) = y and chi1 solves kappa * F(chi1) = (1 - kappa) * (1 - F(y)) with
F the prior cdf, which is solved directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import IllPosed, NoRoot, ShootingFailed, StiffStep
from .model import Outcome, Problem, chi
from .model import _bisect

CDF_CACHE_N = 4097


@dataclass
class NadSolution:
    y_low: float
    y_high: float
    nodes: dict  # arrays: y (descending from y_high), chi1, chi2, q, rho
    terminal_residual: float
    route: str = "ode"  # 'ode' | 'quantile'

    def interp(self, key: str, y) -> np.ndarray:
        ys = self.nodes["y"][::-1]
        vs = self.nodes[key][::-1]
        return np.interp(np.asarray(y, dtype=float), ys, vs)


@dataclass
class LpComparison:
    sup_mass_diff: float
    sup_cdf_diff: float  # joint cumulative distance; joint may be non-unique
    sup_action_cdf_diff: float  # action-marginal cumulative distance
    objective_gap: float
    flagged: bool
    flagged_action: Optional[float] = None


def _cdf_from_density(problem: Problem, density) -> Callable[[np.ndarray], np.ndarray]:
    lo, hi = problem.states.lo, problem.states.hi
    xs = np.linspace(lo, hi, CDF_CACHE_N)
    f = np.asarray(density(xs), dtype=float)
    if np.any(f <= 0):
        raise IllPosed("prior density must be positive on the state range")
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(xs))])
    cum /= cum[-1]

    def cdf(x):
        return np.interp(np.asarray(x, dtype=float), xs, cum)

    return cdf


def _q_pair(problem: Problem, y, c1, c2):
    """(q, q') solving the two-point stationarity system."""
    ys = np.asarray([y, y], dtype=float)
    xs = np.asarray([c1, c2], dtype=float)
    vy = np.asarray(problem.V_y(ys, xs), dtype=float)
    uu = np.asarray(problem.u(ys, xs), dtype=float)
    uy = np.asarray(problem.u_y(ys, xs), dtype=float)
    den_q = uu[0] * uy[1] - uu[1] * uy[0]
    den_p = uy[0] * uu[1] - uy[1] * uu[0]
    q = (vy[0] * uu[1] - vy[1] * uu[0]) / den_q
    qp = (vy[0] * uy[1] - vy[1] * uy[0]) / den_p
    return float(q), float(qp)


def _rho(problem: Problem, y, c1, c2) -> float:
    u1 = float(problem.u(np.array([y]), np.array([c1]))[0])
    u2 = float(problem.u(np.array([y]), np.array([c2]))[0])
    if u2 == u1:
        return 0.5
    return float(u2 / (u2 - u1))


def solve_nad(
    problem: Problem,
    prior_density: Callable,
    *,
    prior_cdf: Optional[Callable] = None,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    collision_frac: float = 1e-4,
    bracket_points: int = 33,
    max_bisect: int = 120,
) -> NadSolution:
    """Negative assortative solution by downward integration and shooting.

    The shot misses in one of two recognizable ways: the lower pair bound
    crosses the pivot curve (u at chi1 reaches 0; the trial top action was
    too low) or the upper bound does (too high).  Bisection on those veer
    events converges onto the narrow window where the pair bounds genuinely
    collide; the collision is caught at a small gap, the exact meeting point
    is recovered from the square-root profile of the gap, and the multiplier
    mismatch against -V_y/u_y at the disclosed state is reported as the
    terminal residual.
    """
    if problem.quantile_kappa is not None:
        return _solve_quantile(problem, prior_density, prior_cdf)

    lo, hi = problem.states.lo, problem.states.hi
    span = hi - lo
    stop_gap = collision_frac * span

    def rhs(y, state):
        c1, c2, q = state
        u1 = float(problem.u(np.array([y]), np.array([c1]))[0])
        u2 = float(problem.u(np.array([y]), np.array([c2]))[0])
        f1 = float(prior_density(np.array([c1]))[0])
        f2 = float(prior_density(np.array([c2]))[0])
        _, P = _q_pair(problem, y, c1, c2)
        h1 = 1e-6 * span
        Qy = (_q_pair(problem, y + h1, c1, c2)[0] - _q_pair(problem, y - h1, c1, c2)[0]) / (2 * h1)
        Q1 = (_q_pair(problem, y, c1 + h1, c2)[0] - _q_pair(problem, y, c1 - h1, c2)[0]) / (2 * h1)
        Q2 = (_q_pair(problem, y, c1, c2 + h1)[0] - _q_pair(problem, y, c1, c2 - h1)[0]) / (2 * h1)
        k = (u2 * f2) / (u1 * f1)  # chi1' = k * chi2'; k < 0 on valid arcs
        den = Q1 * k + Q2
        if den == 0.0:
            raise StiffStep(f"pair derivative system singular at y={y!r}")
        d2 = (P - Qy) / den
        return [k * d2, d2, P]

    stop_gap_holder = [stop_gap]

    def collide(y, state):
        return (state[1] - state[0]) - stop_gap_holder[0]

    collide.terminal = True
    collide.direction = -1

    def veer_low(y, state):
        return float(problem.u(np.array([y]), np.array([state[0]]))[0])

    veer_low.terminal = True
    veer_low.direction = 1

    def veer_high(y, state):
        return float(problem.u(np.array([y]), np.array([state[1]]))[0])

    veer_high.terminal = True
    veer_high.direction = -1

    y_floor = problem.actions.lo

    def shoot(y_top, dense=False):
        """Returns (side, payload): side < 0 means y_top too low, > 0 too
        high, 0 means the pair bounds collided (payload carries the arc)."""
        q0, _ = _q_pair(problem, y_top, lo, hi)
        sol = solve_ivp(
            rhs,
            (y_top, y_floor),
            [lo, hi, q0],
            method="RK45",
            rtol=rtol,
            atol=atol,
            events=[collide, veer_low, veer_high],
            dense_output=dense,
        )
        if sol.status == 1 and sol.t_events[0].size:
            return 0, sol
        if sol.status == 1 and sol.t_events[1].size:
            return -1, sol
        if sol.status == 1 and sol.t_events[2].size:
            return 1, sol
        # reached the action floor: classify by where the midpoint sits
        mid = 0.5 * (sol.y[0, -1] + sol.y[1, -1])
        try:
            side = -1 if mid > chi(problem, float(sol.t[-1])) else 1
        except NoRoot:
            side = -1
        return side, sol

    def finish(y_top):
        side, sol = shoot(y_top, dense=True)
        if side != 0:
            raise StiffStep("winning shot failed to reproduce the collision")
        ye = float(sol.t_events[0][0])
        c1e, c2e, qe = (float(v) for v in sol.y_events[0][0])
        # gap^2 is asymptotically linear in y: extrapolate the meeting point
        y_low = ye
        if sol.t.size >= 4:
            ts = sol.t[-4:]
            s2 = (sol.y[1, -4:] - sol.y[0, -4:]) ** 2
            A = np.vstack([ts, np.ones(ts.size)]).T
            coef, *_ = np.linalg.lstsq(A, s2, rcond=None)
            if coef[0] > 1e-30:
                y_low = min(ye, ye - (c2e - c1e) ** 2 / coef[0])
        cx = 0.5 * (c1e + c2e)
        try:
            cx = chi(problem, y_low)
        except NoRoot:
            pass
        vy = float(problem.V_y(np.array([y_low]), np.array([cx]))[0])
        uy = float(problem.u_y(np.array([y_low]), np.array([cx]))[0])
        term = qe - (-vy / uy)

        # sample the dense interpolant on the solver steps plus a refinement
        extra = np.linspace(y_top, ye, 513)
        ys = np.unique(np.concatenate([sol.t, extra, [ye]]))[::-1]
        ys = ys[(ys <= y_top) & (ys >= ye)]
        vals = sol.sol(ys)
        ys = np.append(ys, y_low)
        c1s = np.append(vals[0], cx)
        c2s = np.append(vals[1], cx)
        np.minimum(c1s, cx, out=c1s)
        np.maximum(c2s, cx, out=c2s)
        qs = np.append(vals[2], qe)
        rhos = np.array([_rho(problem, y, c1, c2) for y, c1, c2 in zip(ys, c1s, c2s)])
        rhos[-1] = 0.5
        return NadSolution(
            y_low=float(y_low),
            y_high=float(y_top),
            nodes={"y": ys, "chi1": c1s, "chi2": c2s, "q": qs, "rho": rhos},
            terminal_residual=float(term),
            route="ode",
        )

    g_lo, g_hi = problem.actions.lo, problem.actions.hi
    try:
        from .model import Posterior, gamma

        keep = np.nonzero(problem.prior > 0)[0]
        pooled = gamma(problem, Posterior(tuple(int(i) for i in keep), problem.prior[keep]))
        top = gamma(problem, Posterior.degenerate(int(keep[-1])))
        g_lo, g_hi = max(g_lo, pooled), min(g_hi, top)
    except NoRoot:
        pass
    eps = 1e-9 * max(1.0, g_hi - g_lo)
    grid = np.linspace(g_lo + eps, g_hi - eps, bracket_points)
    curve = []
    bracket = None
    prev = None
    hit = None
    for yt in grid:
        side, sol = shoot(float(yt))
        curve.append((float(yt), side))
        if side == 0:
            hit = float(yt)
            break
        if prev is not None and side != prev[1]:
            bracket = (prev[0], float(yt))
            break
        prev = (float(yt), side)
    if hit is None:
        if bracket is None:
            raise ShootingFailed(
                "no veer sign change over the admissible bracket", residuals=curve
            )
        a, b = bracket
        for _ in range(max_bisect):
            mid = 0.5 * (a + b)
            if mid == a or mid == b:
                break
            side, _sol = shoot(mid)
            if side == 0:
                hit = mid
                break
            if side < 0:
                a = mid
            else:
                b = mid
        if hit is None:
            raise StiffStep(
                f"veer bisection narrowed to [{a!r}, {b!r}] without catching the collision"
            )
    # second stage: shrink the collision gap and re-bisect locally, pinning
    # the top action two more decades tighter
    width = max(1e-7 * max(1.0, abs(hit)), 4.0 * abs(grid[1] - grid[0]) * 2.0 ** (-max_bisect))
    stop_gap_holder[0] = stop_gap / 100.0
    a2, b2 = hit - width, hit + width
    side_a, _ = shoot(a2)
    side_b, _ = shoot(b2)
    if side_a == 0:
        hit = a2
    elif side_b == 0:
        hit = b2
    elif side_a < 0 and side_b > 0:
        for _ in range(80):
            mid = 0.5 * (a2 + b2)
            if mid == a2 or mid == b2:
                break
            side, _sol = shoot(mid)
            if side == 0:
                hit = mid
                break
            if side < 0:
                a2 = mid
            else:
                b2 = mid
        else:
            stop_gap_holder[0] = stop_gap
    else:
        stop_gap_holder[0] = stop_gap
    try:
        return finish(hit)
    except StiffStep:
        if stop_gap_holder[0] != stop_gap:
            stop_gap_holder[0] = stop_gap
            return finish(hit)
        raise


def _solve_quantile(problem: Problem, prior_density, prior_cdf) -> NadSolution:
    kappa = float(problem.quantile_kappa)
    cdf = prior_cdf or _cdf_from_density(problem, prior_density)
    lo, hi = problem.states.lo, problem.states.hi

    def ylow_eq(t):
        return kappa * cdf(t) - (1.0 - kappa) * (1.0 - cdf(t))

    y_low = _bisect(ylow_eq, lo, hi)
    ys = np.linspace(hi, y_low, 513)

    def chi1_of(y):
        rhs_val = (1.0 - kappa) * (1.0 - cdf(y))

        def eq(t):
            return kappa * cdf(t) - rhs_val

        return _bisect(eq, lo, hi)

    c1s = np.array([chi1_of(float(y)) for y in ys])
    c2s = ys.copy()
    qs = np.full(ys.shape, np.nan)  # u_y vanishes here; no multiplier exists
    rhos = np.full(ys.shape, 1.0 - kappa)
    term = abs(ylow_eq(y_low))
    return NadSolution(
        y_low=float(y_low),
        y_high=float(hi),
        nodes={"y": ys, "chi1": c1s, "chi2": c2s, "q": qs, "rho": rhos},
        terminal_residual=float(term),
        route="quantile",
    )


def nad_outcome(problem: Problem, nad: NadSolution, prior_cdf: Callable) -> Outcome:
    """Project a pairing solution onto the problem grids as an outcome."""
    ny, nx = problem.n_actions, problem.n_states
    mass = np.zeros((ny, nx))
    ys = nad.nodes["y"]
    c1s = nad.nodes["chi1"]
    c2s = nad.nodes["chi2"]
    for k in range(ys.size - 1):
        m2 = float(prior_cdf(c2s[k]) - prior_cdf(c2s[k + 1])) * -1.0
        m1 = float(prior_cdf(c1s[k]) - prior_cdf(c1s[k + 1]))
        m2 = abs(m2)
        m1 = abs(m1)
        if m1 + m2 <= 0:
            continue
        ym = 0.5 * (ys[k] + ys[k + 1])
        iy = problem.actions.nearest(ym)
        i1 = problem.states.nearest(0.5 * (c1s[k] + c1s[k + 1]))
        i2 = problem.states.nearest(0.5 * (c2s[k] + c2s[k + 1]))
        mass[iy, i1] += m1
        mass[iy, i2] += m2
    total = mass.sum()
    if total > 0:
        mass /= total
    from .model import outcome_from_mass

    try:
        return outcome_from_mass(problem, mass)
    except Exception:
        return Outcome(mass=mass, marginal_residual=float("nan"), obedience_residual=float("nan"))


def verify_against_lp(
    problem: Problem,
    nad: NadSolution,
    lp_outcome: Outcome,
    *,
    prior_cdf: Optional[Callable] = None,
    prior_density: Optional[Callable] = None,
    flag_factor: float = 10.0,
) -> LpComparison:
    """Distance between the pairing solution and an LP outcome.

    Reports the raw sup difference of grid masses, the sup difference of the
    joint cumulative distributions (robust to neighboring-cell shuffles), and
    the objective gap.  Rows whose cumulative deviation exceeds
    ``flag_factor`` action cells' worth of the comparison are flagged.
    """
    if prior_cdf is None:
        if prior_density is None:
            raise IllPosed("need prior_cdf or prior_density")
        prior_cdf = _cdf_from_density(problem, prior_density)
    approx = nad_outcome(problem, nad, prior_cdf)
    diff = approx.mass - lp_outcome.mass
    sup_mass = float(np.max(np.abs(diff)))
    cdf2 = np.cumsum(np.cumsum(diff, axis=0), axis=1)
    sup_cdf = float(np.max(np.abs(cdf2)))
    act_cdf = np.cumsum(diff.sum(axis=1))
    sup_act = float(np.max(np.abs(act_cdf)))

    Y, X = problem.grids_product()
    V = np.asarray(problem.V(Y, X), dtype=float)
    if problem.forbidden is not None:
        V = np.where(problem.forbidden_mask(), 0.0, V)
    obj_nad = float(np.sum(V * approx.mass))
    obj_lp = float(np.sum(V * lp_outcome.mass))

    # the action marginal is the uniqueness-backed comparison; the joint can
    # differ across equally optimal pairings
    h = problem.actions.max_spacing
    tol = flag_factor * h
    flagged = sup_act > tol
    flagged_action = None
    if flagged:
        row = int(np.argmax(np.abs(act_cdf)))
        flagged_action = float(problem.actions.points[row])
    return LpComparison(
        sup_mass_diff=sup_mass,
        sup_cdf_diff=sup_cdf,
        sup_action_cdf_diff=sup_act,
        objective_gap=float(obj_nad - obj_lp),
        flagged=bool(flagged),
        flagged_action=flagged_action,
    )
