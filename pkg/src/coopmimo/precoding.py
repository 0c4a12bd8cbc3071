"""Weighted-MMSE sum-rate precoding under per-BS power constraints.

Three solver entry points share one iterative core (alternating receive
scalar / MSE weight / transmit vector updates, Shi-style):

* ``solve_centralized``  - one joint solve over arbitrary serving sets,
  all interference tracked.
* ``solve_single_node``  - per-cell solves (single BS or static BS block),
  out-of-cell signals treated as fixed noise, refreshed once per outer pass.
* ``solve_distributed``  - per-cluster solves coupled through interference
  cost matrices (per-BS leakage prices) exchanged at barrier iterations.

The transmit update solves the quadratic subproblem exactly via
Gauss-Seidel bisection on the per-BS Lagrange multipliers. For one BS the
power of its antenna block at trial multiplier ``mu+delta`` reduces to
``sum_i z_i / (1 + delta*lam_i)^2`` (eigen-expansion of the corresponding
block of the inverse), so each bisection step is a handful of scalar ops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .channel import ChannelState
from .clustering import ClusterAssignment, Scheme

CHOLESKY_FLOP_FACTOR = 2.0 / 3.0  # dominant m^3 term of a Cholesky factorization

_POWER_RESIDUAL_RTOL = 1e-10  # per-BS bisection stop on |power - budget|
_MAX_BISECT_STEPS = 100
_MAX_MULTIPLIER_SWEEPS = 8
_MSE_FLOOR = 1e-300


class SolverError(RuntimeError):
    """Raised when the transmit-update system cannot be factorized."""


@dataclass
class PrecodingSolution:
    """Solver output.

    ``w[k]`` is UE k's stacked precoder over ``sorted(serving[k])`` with
    ``nt`` consecutive entries per BS. ``flops`` follows the documented
    dominant-term model (for the distributed solver this is the
    max-over-clusters latency form; ``flops_total`` is the sum over
    clusters). ``rx_scalars`` / ``mse_weights`` are the MMSE receive
    scalars and weights evaluated at the returned precoder.
    """

    w: list
    iterations: int
    flops: float
    rate_trace: np.ndarray
    converged: bool
    flops_total: float = 0.0
    rx_scalars: np.ndarray | None = None
    mse_weights: np.ndarray | None = None
    power_trace: np.ndarray | None = None

    def __post_init__(self):
        if self.flops_total == 0.0:
            self.flops_total = self.flops


def stacked_channels(h: np.ndarray, bs_tuple, ue_ids) -> np.ndarray:
    """(len(bs)*nt, len(ue_ids)) matrix: UE columns stacked over the BS tuple."""
    bs = np.asarray(bs_tuple, dtype=int)
    ue = np.asarray(ue_ids, dtype=int)
    sub = h[bs][:, ue, :]  # (nb, ku, nt)
    return sub.transpose(0, 2, 1).reshape(len(bs) * h.shape[2], len(ue))


def effective_gains(h: np.ndarray, serving, w_list) -> np.ndarray:
    """G[k, j] = sum over BSs serving UE j of h[n,k]^H w_j^(n) (coherent sum)."""
    n_ue = len(serving)
    G = np.zeros((n_ue, n_ue), dtype=complex)
    for j, s in enumerate(serving):
        C = stacked_channels(h, sorted(s), np.arange(n_ue))
        G[:, j] = C.conj().T @ w_list[j]
    return G


def mmse_state(h, serving, w_list, sigma2, weights):
    """MMSE receive scalars, MSEs, weights, and weighted sum rate at a precoder."""
    G = effective_gains(h, serving, w_list)
    total = np.sum(np.abs(G) ** 2, axis=1) + sigma2
    gkk = np.diag(G)
    e = np.clip(1.0 - np.abs(gkk) ** 2 / total, _MSE_FLOOR, 1.0)
    u = gkk.conj() / total
    q = weights / e
    rate = float(np.sum(weights * (-np.log2(e))))
    return G, u, e, q, rate


class _Group:
    """UEs sharing one serving tuple; their precoders live in one stacked space."""

    __slots__ = ("bs", "cols", "C", "blocks", "dim")

    def __init__(self, bs, cols, C, nt):
        self.bs = bs
        self.cols = cols
        self.C = C
        self.dim = C.shape[0]
        self.blocks = {n: slice(i * nt, (i + 1) * nt) for i, n in enumerate(bs)}


class _Engine:
    """WMMSE core over a tracked UE subset.

    Anything outside the tracked set enters either as extra per-UE noise
    (``sigma2_eff``) or as per-BS leakage prices (``icm``, added to the
    transmit-update quadratic form block-diagonally).
    """

    def __init__(self, h, tracked, serving, sigma2_eff, budgets, weights, icm=None):
        self.h = h
        self.nt = h.shape[2]
        self.tracked = np.asarray(tracked, dtype=int)
        self.kt = len(self.tracked)
        self.serving = [tuple(sorted(s)) for s in serving]
        self.sigma2 = np.asarray(sigma2_eff, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.budgets = budgets
        self.icm = icm or {}

        by_tuple: dict = {}
        for local, s in enumerate(self.serving):
            by_tuple.setdefault(s, []).append(local)
        self.groups = []
        self.group_of = np.empty(self.kt, dtype=int)
        self.col_of = np.empty(self.kt, dtype=int)
        for s, locals_ in sorted(by_tuple.items()):
            cols = np.asarray(locals_, dtype=int)
            C = stacked_channels(h, s, self.tracked)
            g = _Group(s, cols, C, self.nt)
            for c, local in enumerate(locals_):
                self.group_of[local] = len(self.groups)
                self.col_of[local] = c
            self.groups.append(g)
        self.bs_pairs: dict = {}
        for gi, g in enumerate(self.groups):
            for n, sl in g.blocks.items():
                self.bs_pairs.setdefault(n, []).append((gi, sl))
        self.bs_list = sorted(self.bs_pairs)
        self.stream_count = {
            n: sum(len(self.groups[gi].cols) for gi, _ in pairs)
            for n, pairs in self.bs_pairs.items()
        }

    # -- initialization ----------------------------------------------------

    def mf_init(self):
        """Matched filters at full per-BS power, equal split across streams."""
        W = [np.zeros((g.dim, len(g.cols)), dtype=complex) for g in self.groups]
        for local in range(self.kt):
            gi = self.group_of[local]
            g = self.groups[gi]
            col = self.col_of[local]
            k = self.tracked[local]
            for n, sl in g.blocks.items():
                hv = self.h[n, k, :]
                nrm = np.linalg.norm(hv)
                if nrm > 0:
                    W[gi][sl, col] = (
                        math.sqrt(self.budgets[n] / self.stream_count[n]) * hv / nrm
                    )
        return W

    def from_vectors(self, w_list):
        """Group layout from per-tracked-UE stacked vectors."""
        W = [np.zeros((g.dim, len(g.cols)), dtype=complex) for g in self.groups]
        for local in range(self.kt):
            W[self.group_of[local]][:, self.col_of[local]] = w_list[local]
        return W

    def to_vectors(self, W):
        return [W[self.group_of[l]][:, self.col_of[l]].copy() for l in range(self.kt)]

    # -- per-iteration pieces ----------------------------------------------

    def _gains(self, W):
        G = np.zeros((self.kt, self.kt), dtype=complex)
        for g, Wg in zip(self.groups, W):
            G[:, g.cols] = g.C.conj().T @ Wg
        return G

    def _bs_powers(self, W):
        p = {}
        for n, pairs in self.bs_pairs.items():
            p[n] = sum(float(np.sum(np.abs(W[gi][sl, :]) ** 2)) for gi, sl in pairs)
        return p

    def _mse_objective(self, W, u, q):
        G = self._gains(W)
        total = np.sum(np.abs(G) ** 2, axis=1) + self.sigma2
        e = np.abs(u) ** 2 * total - 2.0 * np.real(u * np.diag(G)) + 1.0
        return float(np.sum(q * e))

    def _factor(self, M, iteration):
        scale = max(float(np.mean(np.abs(np.diag(M)).real)), 1e-300)
        jitter = 0.0
        eye = np.eye(M.shape[0])
        for attempt in range(8):
            try:
                return cho_factor(M + jitter * eye, lower=True, check_finite=False)
            except np.linalg.LinAlgError:
                jitter = scale * 1e-13 * (100.0 ** attempt)
        raise SolverError(f"singular transmit-update system at iteration {iteration}")

    @staticmethod
    def _budget_root(lam, z, budget, guess):
        """Smallest delta >= 0 with sum z_i/(1+delta*lam_i)^2 = budget.

        The profile is strictly decreasing, so a bracketed Newton iteration
        (bisection fallback) converges; caller guarantees f(0) > budget.
        """
        def f(d):
            return float(np.sum(z / (1.0 + d * lam) ** 2))

        hi = max(guess, 1.0 / max(float(np.median(lam)), 1e-300))
        lo = 0.0
        for _ in range(200):
            if f(hi) <= budget:
                break
            lo = hi
            hi *= 8.0
        delta = 0.5 * (lo + hi)
        for _ in range(_MAX_BISECT_STEPS):
            val = f(delta)
            if abs(val - budget) <= _POWER_RESIDUAL_RTOL * budget:
                return delta
            if val > budget:
                lo = delta
            else:
                hi = delta
            slope = -2.0 * float(np.sum(z * lam / (1.0 + delta * lam) ** 3))
            step = delta - (val - budget) / slope if slope < 0 else None
            if step is None or not (lo < step < hi):
                step = 0.5 * (lo + hi)
            if hi - lo <= 1e-16 * max(hi, 1.0):
                return hi
            delta = step
        return hi

    def _transmit_update(self, u, q, mu, iteration):
        """Exact constrained transmit update.

        The Lagrange multipliers are found by an active-set Newton iteration
        on the dual residuals p_n(mu) - P_n, warm-started across calls; a
        per-BS bisection pass bootstraps cold starts and rescues failed
        Newton steps.
        """
        nt = self.nt
        qu2 = q * np.abs(u) ** 2
        A, B = [], []
        for g in self.groups:
            Ag = (g.C * qu2[None, :]) @ g.C.conj().T
            Ag = 0.5 * (Ag + Ag.conj().T)
            for n, sl in g.blocks.items():
                price = self.icm.get(n)
                if price is not None:
                    Ag[sl, sl] += price
            scal = q[g.cols] * np.conj(u[g.cols])
            B.append(g.C[:, g.cols] * scal[None, :])
            A.append(Ag)

        def regularized(gi, skip_bs=None):
            g = self.groups[gi]
            M = A[gi].copy()
            for m, sl in g.blocks.items():
                if m != skip_bs and mu[m] != 0.0:
                    idx = np.arange(sl.start, sl.stop)
                    M[idx, idx] += mu[m]
            return M

        def gs_pass(targets):
            """Exact coordinate solve per BS: power of block n at trial
            multiplier mu_n + delta is sum_i z_i/(1+delta*lam_i)^2."""
            for n in targets:
                budget = float(self.budgets[n])
                lams, zs = [], []
                for gi, sl in self.bs_pairs[n]:
                    g = self.groups[gi]
                    fac = self._factor(regularized(gi, skip_bs=n), iteration)
                    rhs = np.zeros((g.dim, len(g.cols) + nt), dtype=complex)
                    rhs[:, : len(g.cols)] = B[gi]
                    rhs[np.arange(sl.start, sl.stop), len(g.cols) + np.arange(nt)] = 1.0
                    sol = cho_solve(fac, rhs, check_finite=False)
                    R0 = sol[sl, : len(g.cols)]
                    S = 0.5 * (sol[sl, len(g.cols):] + sol[sl, len(g.cols):].conj().T)
                    lam, V = np.linalg.eigh(S)
                    lams.append(np.clip(lam.real, 1e-300, None))
                    zs.append(np.sum(np.abs(V.conj().T @ R0) ** 2, axis=1))
                lam, z = np.concatenate(lams), np.concatenate(zs)
                if float(np.sum(z)) <= budget:
                    mu[n] = 0.0
                else:
                    mu[n] = self._budget_root(lam, z, budget, mu[n])

        def evaluate():
            facs = [self._factor(regularized(gi), iteration)
                    for gi in range(len(self.groups))]
            W = [cho_solve(f, B[gi], check_finite=False) for gi, f in enumerate(facs)]
            return facs, W, self._bs_powers(W)

        def residual(powers):
            worst = 0.0
            for n in self.bs_list:
                p, cap = powers[n], float(self.budgets[n])
                err = abs(p - cap) / cap if mu[n] > 0 else max(0.0, p - cap) / cap
                worst = max(worst, err)
            return worst

        if all(mu[n] == 0.0 for n in self.bs_list):
            gs_pass(self.bs_list)
        facs, W, powers = evaluate()
        for _step in range(15):
            if residual(powers) <= 1e-10:
                break
            active = [n for n in self.bs_list
                      if mu[n] > 0.0 or powers[n] > self.budgets[n]]
            if not active:
                break
            jac = self._dual_jacobian(facs, W, active)
            rhs = np.array([powers[n] - float(self.budgets[n]) for n in active])
            try:
                delta = np.linalg.solve(jac, -rhs)
            except np.linalg.LinAlgError:
                delta = np.linalg.lstsq(jac, -rhs, rcond=None)[0]
            improved = False
            base = mu.copy()
            r0 = residual(powers)
            for t in (1.0, 0.5, 0.25, 0.125):
                for i, n in enumerate(active):
                    mu[n] = max(base[n] + t * delta[i], 0.0)
                facs_t, W_t, powers_t = evaluate()
                if residual(powers_t) < r0 * (1.0 - 1e-3):
                    facs, W, powers = facs_t, W_t, powers_t
                    improved = True
                    break
            if not improved:
                mu.update(base)
                gs_pass([n for n in self.bs_list
                         if mu[n] > 0.0 or powers[n] > self.budgets[n]])
                facs, W, powers = evaluate()

        # strict feasibility: a common scale never changes directions
        gamma = 1.0
        for n in self.bs_list:
            if powers[n] > self.budgets[n]:
                gamma = min(gamma, math.sqrt(self.budgets[n] / powers[n]))
        if gamma < 1.0:
            W = [Wg * gamma for Wg in W]
        return W, mu

    def _dual_jacobian(self, facs, W, active):
        """J[n, m] = d p_n / d mu_m = -2 Re <L^-1 D_n W, L^-1 D_m W> per group."""
        idx = {n: i for i, n in enumerate(active)}
        J = np.zeros((len(active), len(active)))
        for gi, g in enumerate(self.groups):
            members = [n for n in g.bs if n in idx]
            if not members:
                continue
            L, lower = facs[gi]
            ys = {}
            for n in members:
                Z = np.zeros_like(W[gi])
                sl = g.blocks[n]
                Z[sl, :] = W[gi][sl, :]
                ys[n] = solve_triangular(L, Z, lower=lower, check_finite=False)
            for a, n in enumerate(members):
                for m in members[a:]:
                    val = -2.0 * float(np.real(np.sum(ys[n].conj() * ys[m])))
                    J[idx[n], idx[m]] += val
                    if n != m:
                        J[idx[m], idx[n]] += val
        return J

    # -- main loop -----------------------------------------------------------

    def _rate_at(self, W):
        G = self._gains(W)
        total = np.sum(np.abs(G) ** 2, axis=1) + self.sigma2
        e = np.clip(1.0 - np.abs(np.diag(G)) ** 2 / total, _MSE_FLOOR, 1.0)
        return float(np.sum(self.weights * (-np.log2(e))))

    def run(self, W, tol, max_iter):
        mu = {n: 0.0 for n in self.bs_list}
        trace, ratios = [], []
        converged = False
        it = 0
        while True:
            G = self._gains(W)
            total = np.sum(np.abs(G) ** 2, axis=1) + self.sigma2
            gkk = np.diag(G)
            e = np.clip(1.0 - np.abs(gkk) ** 2 / total, _MSE_FLOOR, 1.0)
            u = gkk.conj() / total
            q = self.weights / e
            trace.append(float(np.sum(self.weights * (-np.log2(e)))))
            if (
                len(trace) >= 2
                and tol > 0
                and abs(trace[-1] - trace[-2]) <= tol * max(abs(trace[-1]), 1e-12)
            ):
                converged = True
                break
            if it >= max_iter:
                break
            W_new, mu = self._transmit_update(u, q, mu, it + 1)
            # monotone-ascent safeguard: keep the previous iterate whenever an
            # (inexactly solved) update fails to improve the weighted sum
            # rate; the next pass then sees a flat trace and stops
            if self._rate_at(W_new) < trace[-1]:
                W_new = W
            W = W_new
            powers = self._bs_powers(W)
            ratios.append(max(
                (powers[n] / self.budgets[n] for n in self.bs_list), default=0.0
            ))
            it += 1
        return W, trace, ratios, it, converged


# ---------------------------------------------------------------------------
# public solvers
# ---------------------------------------------------------------------------


def _default_weights(n_ue, weights):
    if weights is None:
        return np.ones(n_ue)
    w = np.asarray(weights, dtype=float)
    if w.shape != (n_ue,) or np.any(w <= 0):
        raise ValueError("weights must be positive with one entry per UE")
    return w


def _finalize(channel, assignment, w_list, weights, trace, ratios, iterations,
              converged, flops, flops_total=None):
    sigma2 = np.full(len(w_list), channel.noise_power)
    _, u, _, q, _ = mmse_state(channel.h, assignment.serving, w_list, sigma2, weights)
    return PrecodingSolution(
        w=w_list,
        iterations=iterations,
        flops=float(flops),
        flops_total=float(flops_total if flops_total is not None else flops),
        rate_trace=np.asarray(trace, dtype=float),
        converged=converged,
        rx_scalars=u,
        mse_weights=q,
        power_trace=np.asarray(ratios, dtype=float),
    )


def solve_centralized(channel: ChannelState, assignment: ClusterAssignment,
                      p_max: float, tol: float = 1e-4, max_iter: int = 200,
                      weights=None) -> PrecodingSolution:
    """Joint WMMSE over the given serving sets with all interference tracked."""
    if tol <= 0:
        raise ValueError("tol must be > 0")
    h = channel.h
    n_bs, n_ue, nt = h.shape
    weights = _default_weights(n_ue, weights)
    engine = _Engine(
        h,
        np.arange(n_ue),
        assignment.serving,
        np.full(n_ue, channel.noise_power),
        np.full(n_bs, float(p_max)),
        weights,
    )
    W, trace, ratios, iters, converged = engine.run(engine.mf_init(), tol, max_iter)
    w_list = engine.to_vectors(W)
    flops = iters * sum(
        CHOLESKY_FLOP_FACTOR * (len(s) * nt) ** 3 for s in assignment.serving
    )
    return _finalize(channel, assignment, w_list, weights, trace, ratios,
                     iters, converged, flops)


def _cells_of(assignment: ClusterAssignment):
    """Distinct serving tuples as cells; BSs must not be shared across cells."""
    cells: dict = {}
    for k, s in enumerate(assignment.serving):
        cells.setdefault(tuple(sorted(s)), []).append(k)
    seen: dict = {}
    for bs_tuple in cells:
        for n in bs_tuple:
            if n in seen and seen[n] != bs_tuple:
                raise ValueError("serving sets overlap; per-cell solver needs a BS partition")
            seen[n] = bs_tuple
    return cells


def solve_single_node(channel: ChannelState, assignment: ClusterAssignment,
                      p_max: float, tol: float = 1e-4, max_iter: int = 200,
                      weights=None, outer_passes: int = 2) -> PrecodingSolution:
    """Per-cell WMMSE: each cell (one BS, or one static BS block) optimizes its
    own UEs and treats everything else as fixed noise, refreshed once per pass.
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    h = channel.h
    n_bs, n_ue, nt = h.shape
    weights = _default_weights(n_ue, weights)
    serving = [tuple(sorted(s)) for s in assignment.serving]
    cells = _cells_of(assignment)
    budgets = np.full(n_bs, float(p_max))
    sigma2 = channel.noise_power

    # global matched-filter start for the first interference estimate
    init_engine = _Engine(h, np.arange(n_ue), serving, np.full(n_ue, sigma2),
                          budgets, weights)
    w_list = init_engine.to_vectors(init_engine.mf_init())

    ratios: list = []
    cell_traces: dict = {}
    cell_iters: dict = {}
    flops = 0.0
    converged_all = True
    for _pass in range(outer_passes):
        G = effective_gains(h, serving, w_list)
        rowpow = np.sum(np.abs(G) ** 2, axis=1)
        new_w = list(w_list)
        cell_traces.clear()
        cell_iters.clear()
        converged_all = True
        for bs_tuple, ues in cells.items():
            ues_arr = np.asarray(ues, dtype=int)
            own = np.sum(np.abs(G[np.ix_(ues_arr, ues_arr)]) ** 2, axis=1)
            sig_eff = sigma2 + rowpow[ues_arr] - own
            engine = _Engine(h, ues_arr, [serving[k] for k in ues],
                             sig_eff, budgets, weights[ues_arr])
            W0 = engine.from_vectors([w_list[k] for k in ues])
            W, trace, r, iters, conv = engine.run(W0, tol, max_iter)
            vecs = engine.to_vectors(W)
            for local, k in enumerate(ues):
                new_w[k] = vecs[local]
            ratios.extend(r)
            cell_traces[bs_tuple] = trace
            cell_iters[bs_tuple] = iters
            converged_all = converged_all and conv
            flops += iters * len(ues) * CHOLESKY_FLOP_FACTOR * (len(bs_tuple) * nt) ** 3
        w_list = new_w

    # final-pass convergence record: sum of per-cell traces (constant-padded)
    longest = max(len(t) for t in cell_traces.values())
    trace = np.zeros(longest)
    for t in cell_traces.values():
        padded = np.concatenate([t, np.full(longest - len(t), t[-1])])
        trace += padded
    iterations = max(cell_iters.values())
    return _finalize(channel, assignment, w_list, weights, list(trace), ratios,
                     iterations, converged_all, flops)


def _icm_tables(h, units, u, q):
    """Per-unit {bs: nt x nt leakage price} from the latest global iterates."""
    n_bs, n_ue, nt = h.shape
    scal = q * np.abs(u) ** 2
    m_all = np.einsum("nka,k,nkb->nab", h, scal, h.conj())
    out = []
    for unit in units:
        ues = np.asarray(unit.ue_set, dtype=int)
        table = {}
        for n in unit.bs_set:
            own = np.einsum("ka,k,kb->ab", h[n, ues, :], scal[ues], h[n, ues, :].conj())
            M = m_all[n] - own
            table[n] = 0.5 * (M + M.conj().T)
        out.append(table)
    return out


def compute_icm(channel: ChannelState, assignment: ClusterAssignment,
                solution: PrecodingSolution, cluster_id: int) -> dict:
    """Interference cost matrices of one cluster: for each member BS, the
    PSD matrix pricing leakage toward all UEs outside the cluster."""
    if not assignment.clusters:
        raise ValueError("assignment carries no solve units")
    unit = assignment.clusters[cluster_id]
    if solution.rx_scalars is None or solution.mse_weights is None:
        raise ValueError("solution lacks receive scalars / MSE weights")
    return _icm_tables(channel.h, [unit], solution.rx_scalars,
                       solution.mse_weights)[0]


def solve_distributed(channel: ChannelState, assignment: ClusterAssignment,
                      p_max: float, tol: float = 1e-4, max_iter_outer: int = 50,
                      max_iter_inner: int = 5, weights=None) -> PrecodingSolution:
    """Per-cluster WMMSE with interference-cost-matrix exchange at barriers.

    Each outer iteration snapshots the network (gains, receive scalars, MSE
    weights), hands every cluster its leakage prices and frozen external
    interference, and lets clusters run ``max_iter_inner`` local updates in
    parallel. A BS serving several clusters has its budget split across
    them proportionally to stream counts. Stops when the relative global
    sum-rate change drops below ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    if not assignment.clusters:
        raise ValueError("distributed solver needs a user-centric assignment with solve units")
    h = channel.h
    n_bs, n_ue, nt = h.shape
    weights = _default_weights(n_ue, weights)
    serving = [tuple(sorted(s)) for s in assignment.serving]
    sigma2 = channel.noise_power
    units = assignment.clusters

    count = np.zeros(n_bs)
    for s in serving:
        for n in s:
            count[n] += 1
    unit_budgets = []
    for unit in units:
        b = np.zeros(n_bs)
        for n in unit.bs_set:
            c_unit = sum(1 for k in unit.ue_set if n in serving[k])
            b[n] = p_max * c_unit / count[n]
        unit_budgets.append(b)

    init_engine = _Engine(h, np.arange(n_ue), serving, np.full(n_ue, sigma2),
                          np.full(n_bs, float(p_max)), weights)
    w_list = init_engine.to_vectors(init_engine.mf_init())

    def global_rate(wl):
        return mmse_state(h, serving, wl, np.full(n_ue, sigma2), weights)[4]

    trace = [global_rate(w_list)]
    ratios: list = []
    converged = False
    flops_latency = 0.0
    flops_total = 0.0
    unit_dims = [
        [CHOLESKY_FLOP_FACTOR * (len(serving[k]) * nt) ** 3 for k in unit.ue_set]
        for unit in units
    ]
    for _outer in range(max_iter_outer):
        G, u, e, q, _ = mmse_state(h, serving, w_list, np.full(n_ue, sigma2), weights)
        rowpow = np.sum(np.abs(G) ** 2, axis=1)
        icms = _icm_tables(h, units, u, q)
        new_w = list(w_list)
        step_costs = []
        for ui, (unit, budgets, icm) in enumerate(zip(units, unit_budgets, icms)):
            ues = np.asarray(unit.ue_set, dtype=int)
            own = np.sum(np.abs(G[np.ix_(ues, ues)]) ** 2, axis=1)
            sig_eff = sigma2 + rowpow[ues] - own
            engine = _Engine(h, ues, [serving[k] for k in ues], sig_eff,
                             budgets, weights[ues], icm=icm)
            W0 = engine.from_vectors([w_list[k] for k in ues])
            W, _t, r, iters, _c = engine.run(W0, 0.0, max_iter_inner)
            vecs = engine.to_vectors(W)
            for local, k in enumerate(unit.ue_set):
                new_w[k] = vecs[local]
            ratios.extend(r)
            step_costs.append(max_iter_inner * sum(unit_dims[ui]))
        flops_latency += max(step_costs)
        flops_total += sum(step_costs)
        r_new = global_rate(new_w)
        if r_new < trace[-1] - 1e-12 * max(1.0, abs(trace[-1])):
            # leakage prices stalled; keep the best iterate
            break
        w_list = new_w
        trace.append(r_new)
        if abs(trace[-1] - trace[-2]) <= tol * max(abs(trace[-1]), 1e-12):
            converged = True
            break
    return _finalize(channel, assignment, w_list, weights, trace, ratios,
                     len(trace) - 1, converged, flops_latency, flops_total)


# ---------------------------------------------------------------------------
# complexity model
# ---------------------------------------------------------------------------

_SCHEME_ALIASES = {
    "single": "single",
    "single_node": "single",
    "single-node": "single",
    "static": "static",
    "central": "centralized",
    "centralized": "centralized",
    "distributed": "distributed",
}


def flop_model(scheme, *, nt: int, n_bs: int | None = None, n_ue: int | None = None,
               iterations: float | None = None, per_bs_ue_counts=None,
               clusters=None, outer_iterations: float | None = None,
               inner_iterations: float | None = None, latency: bool = True) -> float:
    """Dominant-term precoding flop count (Cholesky 2/3 m^3 per solve).

    * centralized: ``I * K * (2/3) * (N*nt)^3``
    * single: ``sum_n I * K_n * (2/3) * nt^3`` (``per_bs_ue_counts`` = K_n list)
    * static: ``sum_blocks I * K_b * (2/3) * (n_b*nt)^3``
      (``clusters`` = list of (block BS count, block UE count))
    * distributed: ``I_outer * max_c [I_inner * K_c * (2/3) * (l_c*nt)^3]``
      when ``latency`` (parallel clusters), the sum over clusters otherwise.
    """
    if isinstance(scheme, Scheme):
        name = _SCHEME_ALIASES[scheme.value]
    else:
        name = _SCHEME_ALIASES.get(str(scheme).strip().lower())
    if name is None:
        raise ValueError(f"unknown scheme {scheme!r}")
    if name == "centralized":
        if None in (n_bs, n_ue, iterations):
            raise ValueError("centralized model needs n_bs, n_ue, iterations")
        return iterations * n_ue * CHOLESKY_FLOP_FACTOR * (n_bs * nt) ** 3
    if name == "single":
        if iterations is None or per_bs_ue_counts is None:
            raise ValueError("single-node model needs iterations and per_bs_ue_counts")
        return sum(iterations * kn * CHOLESKY_FLOP_FACTOR * nt ** 3
                   for kn in per_bs_ue_counts)
    if name == "static":
        if iterations is None or clusters is None:
            raise ValueError("static model needs iterations and clusters")
        return sum(iterations * kb * CHOLESKY_FLOP_FACTOR * (nb * nt) ** 3
                   for nb, kb in clusters)
    if None in (outer_iterations, inner_iterations) or clusters is None:
        raise ValueError("distributed model needs outer/inner iterations and clusters")
    costs = [inner_iterations * kc * CHOLESKY_FLOP_FACTOR * (lc * nt) ** 3
             for lc, kc in clusters]
    return outer_iterations * (max(costs) if latency else sum(costs))
