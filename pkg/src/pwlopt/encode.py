"""Compile a trained network plus an optimization query into a MILP.

Two encodings cover tanh networks through a piecewise-linear substitute:
the convex-combination form (interpolation weights tied to segment
indicator binaries) and the SOS2 form (weights declared as ordered sets,
no binaries).  ReLU networks use the Big-M form with interval-arithmetic
switching constants.  Each activation instance gets its own block; only
the hidden neurons and the queried output are instantiated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .milp import BINARY, CONTINUOUS, MilpModel
from .network import NetworkParams
from .pwl import PwlFunction

__all__ = ["SurrogateQuery", "encode_pwl_cc", "encode_pwl_sos2", "encode_relu_bigm"]

_TANH_FAMILY = ("tanh", "pwl_tanh")


@dataclass(frozen=True)
class SurrogateQuery:
    """What to optimize over the surrogate, in normalized input units.

    input_bounds default to [-1, 1] per input; fixings pin single inputs;
    extra_constraints are sparse linear rows over the inputs only.
    """

    objective_output: int = 0
    sense: str = "min"
    input_bounds: tuple[tuple[float, float], ...] | None = None
    input_fixings: tuple[tuple[int, float], ...] = ()
    extra_constraints: tuple[tuple[tuple[tuple[int, float], ...], str, float], ...] = ()

    def __post_init__(self):
        if self.sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        if self.input_bounds is not None:
            for lo, hi in self.input_bounds:
                if not (-1.0 <= lo <= hi <= 1.0):
                    raise ValueError(f"input bounds [{lo}, {hi}] must nest within [-1, 1]")
        bounds = dict(enumerate(self.input_bounds)) if self.input_bounds else {}
        for idx, value in self.input_fixings:
            lo, hi = bounds.get(idx, (-1.0, 1.0))
            if not (lo <= value <= hi):
                raise ValueError(f"fixing u{idx + 1} = {value} falls outside [{lo}, {hi}]")

    def resolved_bounds(self, n_in: int) -> list[tuple[float, float]]:
        if self.input_bounds is not None and len(self.input_bounds) != n_in:
            raise ValueError(f"expected {n_in} bound pairs, got {len(self.input_bounds)}")
        bounds = list(self.input_bounds) if self.input_bounds is not None \
            else [(-1.0, 1.0)] * n_in
        for idx, value in self.input_fixings:
            if not (0 <= idx < n_in):
                raise ValueError(f"fixing references unknown input {idx}")
            bounds[idx] = (value, value)
        return bounds


def _interval(weights: np.ndarray, bias: float, los: np.ndarray, his: np.ndarray):
    """Interval arithmetic for w.x + b over box [los, his]."""
    lo = bias + np.sum(np.minimum(weights * los, weights * his))
    hi = bias + np.sum(np.maximum(weights * los, weights * his))
    return float(lo), float(hi)


def _add_inputs(model: MilpModel, query: SurrogateQuery, n_in: int) -> list[int]:
    bounds = query.resolved_bounds(n_in)
    idxs = [model.add_variable(f"u{j + 1}", CONTINUOUS, lo, hi)
            for j, (lo, hi) in enumerate(bounds)]
    for coeffs, relation, rhs in query.extra_constraints:
        row = [(idxs[j], c) for j, c in coeffs]
        model.add_constraint(row, relation, rhs)
    return idxs


def _check_tanh_family(params: NetworkParams):
    if params.hidden_activation.kind not in _TANH_FAMILY \
            or params.output_activation.kind not in _TANH_FAMILY:
        raise ValueError("piecewise encodings require tanh-family hidden and output layers")


def _pwl_range(pwl: PwlFunction, z_lo: float, z_hi: float) -> tuple[float, float]:
    """Exact range of the piecewise-linear function over [z_lo, z_hi]."""
    b = np.asarray(pwl.breakpoints)
    inner = b[(b > z_lo) & (b < z_hi)]
    cand = pwl(np.concatenate([[z_lo, z_hi], inner]))
    return float(np.min(cand)), float(np.max(cand))


def _pwl_block(model: MilpModel, pwl: PwlFunction, tag: str,
               z_lo: float, z_hi: float, use_sos2: bool) -> tuple[int, int]:
    """One activation instance: returns (z index, activation-output index).

    The interpolation weights form a unit simplex whose breakpoint-weighted
    sums reproduce z and the activation output; adjacency is enforced by
    segment indicator binaries or by an SOS2 declaration.
    """
    b = np.asarray(pwl.breakpoints)
    v = np.asarray(pwl.values)
    n_bp = b.size
    f_lo, f_hi = _pwl_range(pwl, z_lo, z_hi)
    z = model.add_variable(f"z_{tag}", CONTINUOUS, z_lo, z_hi)
    f = model.add_variable(f"a_{tag}", CONTINUOUS, f_lo, f_hi)
    # a segment is live when it intersects [z_lo, z_hi]; weights and
    # indicators of dead segments are pinned at zero
    seg_live = [b[j + 1] >= z_lo - 1e-12 and b[j] <= z_hi + 1e-12
                for j in range(n_bp - 1)]
    lam_live = [(k > 0 and seg_live[k - 1]) or (k < n_bp - 1 and seg_live[k])
                for k in range(n_bp)]
    lams = [model.add_variable(f"lam_{tag}_{k}", CONTINUOUS, 0.0,
                               1.0 if lam_live[k] else 0.0)
            for k in range(n_bp)]
    model.add_constraint([(i, 1.0) for i in lams], "=", 1.0, name=f"conv_{tag}")
    model.add_constraint([(lams[k], float(b[k])) for k in range(n_bp)] + [(z, -1.0)],
                         "=", 0.0, name=f"dom_{tag}")
    model.add_constraint([(lams[k], float(v[k])) for k in range(n_bp)] + [(f, -1.0)],
                         "=", 0.0, name=f"val_{tag}")
    if use_sos2:
        model.add_sos2(lams)
    else:
        segs = [model.add_variable(f"seg_{tag}_{j}", BINARY, 0.0,
                                   1.0 if seg_live[j] else 0.0)
                for j in range(n_bp - 1)]
        model.add_constraint([(s, 1.0) for s in segs], "=", 1.0, name=f"one_{tag}")
        for k in range(n_bp):
            row = [(lams[k], 1.0)]
            if k > 0:
                row.append((segs[k - 1], -1.0))
            if k < n_bp - 1:
                row.append((segs[k], -1.0))
            model.add_constraint(row, "<=", 0.0, name=f"adj_{tag}_{k}")
    return z, f


def _encode_pwl(params: NetworkParams, pwl: PwlFunction, query: SurrogateQuery,
                use_sos2: bool) -> MilpModel:
    _check_tanh_family(params)
    if not (0 <= query.objective_output < params.n_out):
        raise ValueError(f"objective output {query.objective_output} out of range")
    b0, bJ = float(pwl.breakpoints[0]), float(pwl.breakpoints[-1])

    model = MilpModel()
    model.metadata["encoding"] = "pwl_sos2" if use_sos2 else "pwl_cc"
    model.metadata["pieces"] = str(pwl.n_segments)
    warnings: list[str] = []

    u_idx = _add_inputs(model, query, params.n_in)
    bounds = query.resolved_bounds(params.n_in)
    u_lo = np.array([lo for lo, _ in bounds])
    u_hi = np.array([hi for _, hi in bounds])

    # hidden blocks, one per neuron
    f_idx = []
    f_lo = np.empty(params.n_hidden)
    f_hi = np.empty(params.n_hidden)
    for h in range(params.n_hidden):
        z_lo, z_hi = _interval(params.B[h], float(params.C[h]), u_lo, u_hi)
        if z_lo < b0 - 1e-12 or z_hi > bJ + 1e-12:
            warnings.append(f"hidden neuron {h + 1} pre-activation [{z_lo:.6g}, {z_hi:.6g}] "
                            f"exceeds [{b0:g}, {bJ:g}]; domain clipped")
        z_lo, z_hi = max(z_lo, b0), min(z_hi, bJ)
        if z_lo > z_hi:
            z_lo, z_hi = b0, bJ  # interval entirely outside: affine row makes this infeasible
        tag = f"h{h + 1}"
        z, f = _pwl_block(model, pwl, tag, z_lo, z_hi, use_sos2)
        row = [(u_idx[j], float(params.B[h, j])) for j in range(params.n_in)] + [(z, -1.0)]
        model.add_constraint(row, "=", -float(params.C[h]), name=f"pre_{tag}")
        f_idx.append(f)
        f_lo[h], f_hi[h] = _pwl_range(pwl, z_lo, z_hi)

    # output block for the queried output only
    o = query.objective_output
    z_lo, z_hi = _interval(params.A[o], float(params.D[o]), f_lo, f_hi)
    if z_lo < b0 - 1e-12 or z_hi > bJ + 1e-12:
        warnings.append(f"output {o + 1} pre-activation [{z_lo:.6g}, {z_hi:.6g}] "
                        f"exceeds [{b0:g}, {bJ:g}]; domain clipped")
    z_lo, z_hi = max(z_lo, b0), min(z_hi, bJ)
    if z_lo > z_hi:
        z_lo, z_hi = b0, bJ
    tag = f"out{o + 1}"
    z_out, f_out = _pwl_block(model, pwl, tag, z_lo, z_hi, use_sos2)
    row = [(f_idx[h], float(params.A[o, h])) for h in range(params.n_hidden)] + [(z_out, -1.0)]
    model.add_constraint(row, "=", -float(params.D[o]), name=f"pre_{tag}")

    model.set_objective(query.sense, [(f_out, 1.0)])
    if warnings:
        model.metadata["warnings"] = " | ".join(warnings)
    return model.finalize()


def encode_pwl_cc(params: NetworkParams, pwl: PwlFunction, query: SurrogateQuery) -> MilpModel:
    """Convex-combination encoding with segment indicator binaries."""
    return _encode_pwl(params, pwl, query, use_sos2=False)


def encode_pwl_sos2(params: NetworkParams, pwl: PwlFunction, query: SurrogateQuery) -> MilpModel:
    """Binary-free encoding: each block's interpolation weights are an SOS2 group."""
    return _encode_pwl(params, pwl, query, use_sos2=True)


def encode_relu_bigm(params: NetworkParams, query: SurrogateQuery) -> MilpModel:
    """Big-M encoding of a ReLU-hidden, identity-output network.

    Neurons whose pre-activation interval is sign-stable degenerate to a
    fixed zero or a plain affine row; unstable neurons get the usual
    indicator binary with the interval endpoints as switching constants.
    """
    if params.hidden_activation.kind != "relu" or params.output_activation.kind != "identity":
        raise ValueError("Big-M encoding requires relu hidden and identity output layers")
    if not (0 <= query.objective_output < params.n_out):
        raise ValueError(f"objective output {query.objective_output} out of range")

    model = MilpModel()
    model.metadata["encoding"] = "relu_bigm"
    u_idx = _add_inputs(model, query, params.n_in)
    bounds = query.resolved_bounds(params.n_in)
    u_lo = np.array([lo for lo, _ in bounds])
    u_hi = np.array([hi for _, hi in bounds])
    if not (np.all(np.isfinite(u_lo)) and np.all(np.isfinite(u_hi))):
        raise ValueError("Big-M switching constants need finite input bounds")

    intervals = []
    h_idx = []
    for h in range(params.n_hidden):
        lo, hi = _interval(params.B[h], float(params.C[h]), u_lo, u_hi)
        intervals.append((lo, hi))
        tag = f"h{h + 1}"
        if hi <= 0.0:
            hvar = model.add_variable(f"relu_{tag}", CONTINUOUS, 0.0, 0.0)
        elif lo >= 0.0:
            hvar = model.add_variable(f"relu_{tag}", CONTINUOUS, lo, hi)
            row = [(u_idx[j], float(params.B[h, j])) for j in range(params.n_in)]
            model.add_constraint(row + [(hvar, -1.0)], "=", -float(params.C[h]),
                                 name=f"aff_{tag}")
        else:
            z = model.add_variable(f"z_{tag}", CONTINUOUS, lo, hi)
            hvar = model.add_variable(f"relu_{tag}", CONTINUOUS, 0.0, hi)
            sw = model.add_variable(f"on_{tag}", BINARY, 0.0, 1.0)
            row = [(u_idx[j], float(params.B[h, j])) for j in range(params.n_in)]
            model.add_constraint(row + [(z, -1.0)], "=", -float(params.C[h]),
                                 name=f"pre_{tag}")
            model.add_constraint([(hvar, 1.0), (z, -1.0)], ">=", 0.0, name=f"ge_{tag}")
            # h <= z - lo (1 - on)  and  h <= hi * on
            model.add_constraint([(hvar, 1.0), (z, -1.0), (sw, -lo)], "<=", -lo,
                                 name=f"ub1_{tag}")
            model.add_constraint([(hvar, 1.0), (sw, -hi)], "<=", 0.0, name=f"ub2_{tag}")
        h_idx.append(hvar)
    model.metadata["neuron_intervals"] = "; ".join(
        f"h{h + 1}: [{lo:.9g}, {hi:.9g}]" for h, (lo, hi) in enumerate(intervals))

    o = query.objective_output
    y_lo, y_hi = _interval(params.A[o], float(params.D[o]),
                           np.array([max(lo, 0.0) if hi > 0 else 0.0 for lo, hi in intervals]),
                           np.array([max(hi, 0.0) for _, hi in intervals]))
    y = model.add_variable(f"y{o + 1}", CONTINUOUS, min(y_lo, y_hi), max(y_lo, y_hi))
    row = [(h_idx[h], float(params.A[o, h])) for h in range(params.n_hidden)] + [(y, -1.0)]
    model.add_constraint(row, "=", -float(params.D[o]), name=f"out{o + 1}")
    model.set_objective(query.sense, [(y, 1.0)])
    return model.finalize()
