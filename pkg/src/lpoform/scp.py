"""Augmented-Lagrangian sequential convex programming outer loop.

Each iteration linearizes the dynamics about the reference, solves the
convex subproblem, and compares the actual (re-propagated) penalized-merit
decrease against the prediction.  Steps are accepted on a ratio test, the
trust region adapts, and multipliers/weight update once defects are small.
The scalar knobs are artifact defaults, all configurable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import BackendError, EvaluationError, PropagationError
from .mvgp import (
    MVGPInstance,
    Reference,
    assemble_subproblem,
    ballistic_reference,
    control_cost,
    linearize_segment,
    propagate,
    solve_subproblem,
)
from . import socp

CONVERGED = "converged"
MAX_ITERATIONS = "max-iterations"
FAILED = "failed"


@dataclass(frozen=True)
class ScpOptions:
    rho0: float = 0.0          # acceptance threshold on the reduction ratio
    rho1: float = 0.25         # shrink below this
    rho2: float = 0.7          # grow above this
    tr_shrink: float = 0.5
    tr_grow: float = 2.0
    tr_init: float = 0.1
    tr_min: float = 1e-8
    tr_max: float = 10.0
    w0: float = 1e2
    beta: float = 2.0
    beta_stall: float = 10.0   # weight growth when the defect is frozen
    w_max: float = 1e9
    al_eta_shrink: float = 0.25  # defect cut demanded between multiplier updates
    stationary_tol: float = 0.1  # fraction of tol_opt declaring inner stationarity
    stationary_kick: float = 1.0  # extra weight factor at stationary updates
    nonmonotone: int = 5       # accepted-merit memory for the ratio test
    polish_gate: float = 1e-3  # defect level enabling the hard-dynamics polish
    polish_tr: float = 1e-5    # trust radius restored when polish starts
    polish_tr_max: float = 1e-3  # radius ceiling inside the polish phase
    prox_weight: float = 1.0   # ties states to the reference (degeneracy guard)
    tol_feas: float = 1e-7
    tol_feas_slack: float = 1e-6   # slack-excess channel, ~ the LICQ budget
    tol_opt: float = 1e-6
    max_iter: int = 100
    verbose: bool = False


@dataclass
class ScpIterate:
    """Mutable outer-loop state: reference, multipliers, weights, metrics."""

    reference: Reference
    lam: np.ndarray
    w: float
    delta_tr: float
    iteration: int = 0
    metrics: dict = field(default_factory=dict)


@dataclass
class NonlinearEval:
    defects: np.ndarray    # (N-1, naug): see evaluate_nonlinear
    cost: float            # sum of maneuver magnitudes
    max_defect: float
    states: np.ndarray     # node states with slack bookkeeping repaired


@dataclass
class ScpReport:
    status: str
    states: np.ndarray
    controls: np.ndarray
    control_cost: float
    defects: np.ndarray
    max_defect: float
    iterations: int        # accepted reference updates
    solves: int            # subproblem solves, including backtracks
    history: list[dict]
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED


def evaluate_nonlinear(instance: MVGPInstance, states: np.ndarray,
                       controls: np.ndarray, fld=None) -> NonlinearEval:
    """Re-propagate every segment with the full dynamics.

    Stack rows: defect_k = X_{k+1} - flow(X_k + E U_k).  Slack rows: the
    slack states are bookkeeping for the violation integrals, so their node
    values are repaired to the propagated chain and the defect is the
    one-sided excess of each segment's integral over the continuity
    relaxation budget, max(0, dy_true - eps_licq).  Propagation failures
    surface as EvaluationError so the caller can reject the candidate.
    """
    if fld is None:
        fld = instance.field()
    n = instance.n_nodes
    naug = instance.naug
    n6m = 6 * instance.m
    e_t = instance.impulse_matrix()
    defects = np.zeros((n - 1, naug))
    repaired = np.array(states, dtype=float, copy=True)
    if naug > n6m:
        repaired[0, n6m:] = 0.0
    for k in range(n - 1):
        xk = repaired[k].copy()
        xk[:n6m] = states[k, :n6m]
        xk = xk + e_t @ instance.control_at(controls, k)
        try:
            res = propagate(xk, instance.schedule.times[k],
                            instance.schedule.times[k + 1], fld,
                            options=instance.ctx.options)
        except PropagationError as exc:
            raise EvaluationError(f"segment {k} failed: {exc}") from exc
        defects[k, :n6m] = states[k + 1, :n6m] - res.state[:n6m]
        if naug > n6m:
            growth = res.state[n6m:] - repaired[k, n6m:]
            defects[k, n6m:] = np.maximum(0.0, growth - instance.eps_licq)
            repaired[k + 1, n6m:] = res.state[n6m:]
    cost = control_cost(instance, controls)
    return NonlinearEval(defects=defects, cost=cost,
                         max_defect=float(np.abs(defects).max()) if n > 1 else 0.0,
                         states=repaired)


def penalized_merit(cost: float, defects: np.ndarray, lam: np.ndarray,
                    w: float) -> float:
    return float(cost + np.sum(lam * defects)
                 + 0.5 * w * np.sum(defects * defects))


def reference_hard_violation(instance: MVGPInstance, ref: Reference) -> float:
    """Worst violation of the subproblem's hard constraints by a reference.

    The penalized merit only prices dynamics defects, so the ratio test is
    meaningful only against a reference that satisfies the cones and linear
    inequalities itself.  A reference violating them (the ballistic start
    usually does) has effectively infinite merit and any optimal candidate
    is an improvement.
    """
    n = instance.n_nodes
    m = instance.m
    worst = 0.0
    for i in instance.free_vehicles:
        r_err = np.linalg.norm(ref.states[n - 1][6 * i:6 * i + 3]
                               - instance.target_pos[i])
        v_end = (ref.states[n - 1][6 * i + 3:6 * i + 6]
                 + ref.controls[n - 1][3 * i:3 * i + 3])
        v_err = np.linalg.norm(v_end - instance.target_vel[i])
        worst = max(worst, r_err - instance.eps_r, v_err - instance.eps_v)
    if instance.mode in ("node", "continuous"):
        from . import pathcon
        for k in range(n):
            lo, hi = pathcon.tightened_band(instance.bounds,
                                            instance.schedule.times[k],
                                            instance.schedule)
            for pair in instance.pairs.pairs:
                s = pathcon.separation(ref.states[k], pair)
                worst = max(worst, lo - s, s - hi)
    return worst


def _channel_feasible(instance: MVGPInstance, ev: NonlinearEval,
                      opts: "ScpOptions") -> bool:
    """Stack rows against tol_feas, slack-excess rows against the looser
    budget-scale tolerance."""
    if not ev.defects.size:
        return True
    n6m = 6 * instance.m
    if np.abs(ev.defects[:, :n6m]).max() >= opts.tol_feas:
        return False
    if instance.naug > n6m:
        return np.abs(ev.defects[:, n6m:]).max() < opts.tol_feas_slack
    return True


def _polish_step(instance: MVGPInstance, backend, opts: "ScpOptions",
                 ref: Reference, eval_ref: NonlinearEval, lins, delta: float,
                 fld, it: int, solves: int, log):
    """One hard-dynamics Newton-like step near the solution.

    Returns (kind, payload): converged/accept carry the new iterate, shrink
    carries the reduced radius, fallback carries a reason string.
    """
    zero_lam = np.zeros((instance.n_nodes - 1, instance.naug))
    spb = assemble_subproblem(instance, ref, zero_lam, 0.0, delta, lins,
                              prox_weight=opts.prox_weight, hard_dynamics=True)
    try:
        sol = solve_subproblem(spb, backend, instance)
    except BackendError as exc:
        return "fallback", f"backend error: {exc}"
    if sol.status != socp.OPTIMAL:
        return "fallback", f"subproblem {sol.status}"
    try:
        cand = evaluate_nonlinear(instance, sol.states, sol.controls, fld)
    except EvaluationError:
        return "shrink", delta * opts.tr_shrink

    rec = {"iter": it + 1, "solve": solves, "J": cand.cost,
           "max_defect": cand.max_defect, "rho": None,
           "delta_tr": delta, "w": 0.0, "note": "polish"}
    if (_channel_feasible(instance, cand, opts)
            and abs(cand.cost - eval_ref.cost) < opts.tol_opt):
        rec["accepted"] = True
        rec["note"] = "polish converged"
        log(rec)
        return "converged", (Reference(cand.states, sol.controls), cand)
    improved = cand.max_defect <= max(0.99 * eval_ref.max_defect,
                                      0.5 * opts.tol_feas)
    if improved or _channel_feasible(instance, cand, opts):
        rec["accepted"] = True
        log(rec)
        return "accept", (Reference(cand.states, sol.controls), cand)
    rec["accepted"] = False
    log(rec)
    return "shrink", delta * opts.tr_shrink


def scp_solve(instance: MVGPInstance, backend, options: ScpOptions | None = None,
              initial_reference: Reference | None = None) -> ScpReport:
    """Solve one guidance problem to local optimality.

    Returns converged when the nonlinear cost change between accepted
    iterates drops below tol_opt with all re-propagated defects below
    tol_feas.
    """
    opts = options or ScpOptions()
    fld = instance.field()
    ref = initial_reference.copy() if initial_reference is not None \
        else ballistic_reference(instance)
    n = instance.n_nodes
    lam = np.zeros((n - 1, instance.naug))
    w = opts.w0
    delta = opts.tr_init

    eval_ref = evaluate_nonlinear(instance, ref.states, ref.controls, fld)
    history: list[dict] = []
    lins = None
    message = ""
    n_tr = 6 * instance.m
    defect_at_update = np.inf
    n6m = 6 * instance.m
    from collections import deque
    recent_accepts = deque(maxlen=max(0, opts.nonmonotone))

    def feasible(ev: NonlinearEval) -> bool:
        return _channel_feasible(instance, ev, opts)

    def predicted_defects(sol) -> np.ndarray:
        """Linear-model counterpart of the nonlinear defect vector: the
        subproblem's stack defects, and the excess of the linearly
        predicted slack growth over the continuity budget."""
        out = np.array(sol.xi, copy=True)
        if instance.naug > n6m:
            dy = np.diff(sol.states[:, n6m:], axis=0)
            lin_growth = dy - sol.xi[:, n6m:]
            out[:, n6m:] = np.maximum(0.0, lin_growth - instance.eps_licq)
        return out

    def update_multipliers(defects, max_defect):
        """Safeguarded augmented-Lagrangian update: refine multipliers when
        feasibility beats the current target; raise the weight only when the
        defect has stalled since the last multiplier refinement."""
        nonlocal lam, w, defect_at_update
        enough = (max_defect <= opts.al_eta_shrink * defect_at_update
                  or max_defect <= opts.tol_feas)
        if enough or (w >= opts.w_max and max_defect <= defect_at_update):
            lam = lam + w * defects
            defect_at_update = max_defect
        elif w < opts.w_max:
            # insufficient feasibility progress since the last multiplier
            # refinement: raise the weight, sharply if the defect is frozen
            factor = opts.beta_stall if max_defect > 0.95 * defect_at_update \
                else opts.beta
            w = min(opts.w_max, factor * w)

    e_t = instance.impulse_matrix()[:n_tr]

    def post_impulse(states, controls):
        out = states[:n - 1, :n_tr].copy()
        for k in range(n - 1):
            out[k] += e_t @ instance.control_at(controls, k)
        return out

    def step_size(states: np.ndarray, controls: np.ndarray) -> float:
        """Largest trust-regioned deviation the candidate actually took."""
        dev = np.abs(post_impulse(states, controls)
                     - post_impulse(ref.states, ref.controls))
        return float(dev.max()) if dev.size else 0.0

    def log(rec):
        history.append(rec)
        if opts.verbose:
            print(json.dumps(rec))

    status = MAX_ITERATIONS
    it = 0          # accepted reference updates ("iterations")
    solves = 0      # subproblem solves, including trust-region backtracks
    solve_cap = 6 * opts.max_iter
    polish = False  # hard-dynamics terminal phase
    polish_ok = True  # cleared when polish falls back, reset on AL progress
    while it < opts.max_iter and solves < solve_cap:
        solves += 1
        if lins is None:
            lins = [linearize_segment(instance, ref.states[k], ref.controls[k],
                                      k, fld) for k in range(n - 1)]

        slack_ready = (instance.naug == n6m or not eval_ref.defects.size
                       or np.abs(eval_ref.defects[:, n6m:]).max()
                       < opts.tol_feas_slack)
        if (not polish and polish_ok and slack_ready
                and eval_ref.max_defect < opts.polish_gate
                and reference_hard_violation(instance, ref) <= 1e-9):
            # close enough for plain Newton-like steps on exact linearized
            # dynamics: no multiplier terms, no defect slacks
            polish = True
            delta = max(delta, opts.polish_tr)

        if polish:
            outcome = _polish_step(instance, backend, opts, ref, eval_ref,
                                   lins, delta, fld, it, solves, log)
            kind, payload = outcome
            if kind == "converged":
                ref, eval_ref = payload
                it += 1
                status = CONVERGED
                break
            if kind == "accept":
                ref, eval_ref = payload
                it += 1
                lins = None
                delta = min(opts.polish_tr_max, delta * opts.tr_grow)
                continue
            if kind == "shrink":
                delta = payload
                if delta < opts.tr_min:
                    status, message = FAILED, "trust region underflow (polish)"
                    break
                continue
            # infeasible or failed subproblem: fall back to the soft phase
            # until the outer loop makes progress again
            polish = False
            polish_ok = False
            log({"iter": it + 1, "solve": solves, "J": eval_ref.cost,
                 "max_defect": eval_ref.max_defect, "rho": None,
                 "accepted": False, "delta_tr": delta, "w": w,
                 "note": f"polish fallback: {payload}"})
            continue

        # the slack channel prices one-sided excess; its xi enters the
        # subproblem as (bookkeeping - linear integral), i.e. minus excess
        lam_sub = lam.copy()
        lam_sub[:, n6m:] *= -1.0
        spb = assemble_subproblem(instance, ref, lam_sub, w, delta, lins,
                                  prox_weight=opts.prox_weight)
        try:
            sol = solve_subproblem(spb, backend, instance)
        except BackendError as exc:
            status, message = FAILED, f"backend error: {exc}"
            break
        if sol.status != socp.OPTIMAL:
            status, message = FAILED, f"subproblem {sol.status}"
            break

        try:
            cand = evaluate_nonlinear(instance, sol.states, sol.controls, fld)
        except EvaluationError as exc:
            delta = delta * opts.tr_shrink
            log({"iter": it + 1, "solve": solves, "J": eval_ref.cost,
                 "max_defect": eval_ref.max_defect, "rho": None,
                 "accepted": False, "delta_tr": delta, "w": w,
                 "note": f"evaluation failed: {exc}"})
            if delta < opts.tr_min:
                status, message = FAILED, "trust region underflow"
                break
            continue

        merit_ref = penalized_merit(eval_ref.cost, eval_ref.defects, lam, w)
        merit_nl = penalized_merit(cand.cost, cand.defects, lam, w)
        merit_lin = penalized_merit(sol.control_cost, predicted_defects(sol),
                                    lam, w)
        # nonmonotone reference level: worst of the recent accepted iterates
        # under the current multipliers, so a mildly regressive step during
        # weight ramping does not collapse the trust region
        merit_hi = merit_ref
        for past in recent_accepts:
            merit_hi = max(merit_hi, penalized_merit(past.cost, past.defects,
                                                     lam, w))
        d_actual = merit_hi - merit_nl
        d_predicted = merit_hi - merit_lin
        d_monotone = merit_ref - merit_nl

        if reference_hard_violation(instance, ref) > 1e-9:
            # reference infeasible for the hard constraints: any optimal
            # candidate improves on it, ratio test not meaningful yet
            it += 1
            ref = Reference(cand.states, sol.controls)
            eval_ref = cand
            lins = None
            log({"iter": it, "solve": solves, "J": cand.cost,
                 "max_defect": cand.max_defect, "rho": None, "accepted": True,
                 "delta_tr": delta, "w": w,
                 "note": "reference infeasible, unconditional accept"})
            if not feasible(cand):
                update_multipliers(cand.defects, cand.max_defect)
            continue

        scale = max(1.0, abs(merit_ref))
        if d_predicted <= max(1e-14 * scale, opts.stationary_tol * opts.tol_opt):
            # the subproblem is stationary at this reference
            it += 1
            prev_cost = eval_ref.cost
            ref = Reference(cand.states, sol.controls)
            eval_ref = cand
            lins = None
            if feasible(cand) and abs(cand.cost - prev_cost) < opts.tol_opt:
                status = CONVERGED
                log({"iter": it, "solve": solves, "J": cand.cost,
                     "max_defect": cand.max_defect, "rho": None,
                     "accepted": True, "delta_tr": delta, "w": w,
                     "note": "stationary"})
                break
            if feasible(cand):
                # feasible and stationary, cost still settling: keep going
                log({"iter": it, "solve": solves, "J": cand.cost,
                     "max_defect": cand.max_defect, "rho": None,
                     "accepted": True, "delta_tr": delta, "w": w,
                     "note": "stationary, feasible"})
                continue
            # stationary but infeasible: the inner problem is solved for the
            # current multipliers, so perform the outer update
            lam = lam + w * cand.defects
            w = min(opts.w_max, opts.stationary_kick * opts.beta * w)
            defect_at_update = cand.max_defect
            log({"iter": it, "solve": solves, "J": cand.cost,
                 "max_defect": cand.max_defect, "rho": None, "accepted": True,
                 "delta_tr": delta, "w": w,
                 "note": "stationary, multiplier update"})
            continue
        rho = d_actual / d_predicted

        accepted = rho >= opts.rho0
        rec = {"iter": it + 1, "solve": solves, "J": cand.cost,
               "max_defect": cand.max_defect,
               "rho": None if np.isinf(rho) else rho, "accepted": bool(accepted),
               "delta_tr": delta, "w": w, "merit_before": merit_ref,
               "merit_after": merit_nl if accepted else None}

        taken = step_size(sol.states, sol.controls)
        rec["taken"] = taken
        if accepted:
            it += 1
            rec["iter"] = it
            polish_ok = True
            prev_cost = eval_ref.cost
            recent_accepts.append(eval_ref)
            ref = Reference(cand.states, sol.controls)
            eval_ref = cand
            lins = None
            if rho < opts.rho1:
                delta = max(opts.tr_min,
                            min(delta, taken or delta) * opts.tr_shrink)
            elif rho > opts.rho2 and d_monotone > opts.tol_opt:
                # widen only on monotone material progress; the nonmonotone
                # ratio can stay ~1 while the iterate random-walks, and
                # inflating the radius then ends in an exploding step
                delta = min(opts.tr_max, delta * opts.tr_grow)
            log(rec)
            if abs(cand.cost - prev_cost) < opts.tol_opt and feasible(cand):
                status = CONVERGED
                break
            if not feasible(cand):
                update_multipliers(cand.defects, cand.max_defect)
        else:
            # shrink from the step actually taken, not the stale radius, so
            # a wildly oversized radius collapses in one rejection
            new_delta = min(delta, taken or delta) * opts.tr_shrink
            log(rec)
            if new_delta < opts.tr_min:
                if delta <= opts.tr_min:
                    status, message = FAILED, "trust region underflow"
                    break
                new_delta = opts.tr_min
            delta = new_delta

    return ScpReport(status=status, states=ref.states, controls=ref.controls,
                     control_cost=eval_ref.cost, defects=eval_ref.defects,
                     max_defect=eval_ref.max_defect, iterations=it,
                     solves=solves, history=history, message=message)
