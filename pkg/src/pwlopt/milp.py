"""Solver-agnostic mixed-integer linear program container with an LP exporter.

Models are built incrementally (variables, sparse constraint rows, SOS2
groups, one linear objective), validated and frozen by finalize(), and can
be written as CPLEX LP-format text.  Metadata entries become leading
comment lines in the export.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

__all__ = ["MilpModel", "MilpSolution", "write_lp", "CONTINUOUS", "BINARY"]

CONTINUOUS = "continuous"
BINARY = "binary"
_RELATIONS = ("<=", "=", ">=")


@dataclass(frozen=True)
class MilpSolution:
    """Outcome of a solve: status, objective, assignment, and tree statistics."""

    status: str  # optimal | infeasible | unbounded | gap_limit
    objective: float | None
    assignment: dict[str, float] | None
    gap: float
    node_count: int
    wall_time: float


@dataclass
class _Variable:
    name: str
    kind: str
    lb: float
    ub: float


@dataclass
class _Constraint:
    name: str
    coeffs: tuple[tuple[int, float], ...]
    relation: str
    rhs: float


class MilpModel:
    """Incrementally built MILP; immutable once finalized."""

    def __init__(self):
        self.variables: list[_Variable] = []
        self.constraints: list[_Constraint] = []
        self.sos2_groups: list[tuple[int, ...]] = []
        self.objective_sense: str = "min"
        self.objective_coeffs: tuple[tuple[int, float], ...] = ()
        self.objective_offset: float = 0.0
        self.metadata: dict[str, str] = {}
        self._name_to_index: dict[str, int] = {}
        self._finalized = False

    # -- construction ------------------------------------------------------

    def _require_open(self):
        if self._finalized:
            raise ValueError("model is finalized and immutable")

    def add_variable(self, name: str, kind: str = CONTINUOUS,
                     lb: float = 0.0, ub: float = np.inf) -> int:
        self._require_open()
        if kind not in (CONTINUOUS, BINARY):
            raise ValueError(f"unknown variable kind {kind!r}")
        if name in self._name_to_index:
            raise ValueError(f"duplicate variable name {name!r}")
        if not name or any(ch.isspace() for ch in name):
            raise ValueError(f"invalid variable name {name!r}")
        if kind == BINARY and not (0.0 <= lb and ub <= 1.0):
            raise ValueError(f"binary variable {name!r} needs bounds within [0, 1]")
        if lb > ub:
            raise ValueError(f"variable {name!r} has empty bound interval [{lb}, {ub}]")
        idx = len(self.variables)
        self.variables.append(_Variable(name, kind, float(lb), float(ub)))
        self._name_to_index[name] = idx
        return idx

    def _normalize_coeffs(self, coeffs) -> tuple[tuple[int, float], ...]:
        items = coeffs.items() if isinstance(coeffs, dict) else coeffs
        out = []
        for idx, val in items:
            if not (0 <= idx < len(self.variables)):
                raise ValueError(f"coefficient references unknown variable index {idx}")
            if val != 0.0:
                out.append((int(idx), float(val)))
        return tuple(out)

    def add_constraint(self, coeffs, relation: str, rhs: float, name: str | None = None) -> int:
        self._require_open()
        if relation not in _RELATIONS:
            raise ValueError(f"relation must be one of {_RELATIONS}")
        row = self._normalize_coeffs(coeffs)
        cname = name if name is not None else f"c{len(self.constraints) + 1}"
        self.constraints.append(_Constraint(cname, row, relation, float(rhs)))
        return len(self.constraints) - 1

    def add_sos2(self, indices) -> int:
        self._require_open()
        idxs = tuple(int(i) for i in indices)
        if len(idxs) < 2:
            raise ValueError("an SOS2 group needs at least two members")
        for i in idxs:
            if not (0 <= i < len(self.variables)):
                raise ValueError(f"SOS2 references unknown variable index {i}")
            v = self.variables[i]
            if v.kind != CONTINUOUS:
                raise ValueError(f"SOS2 member {v.name!r} must be continuous")
            if v.lb < 0.0:
                raise ValueError(f"SOS2 member {v.name!r} must be nonnegative")
        self.sos2_groups.append(idxs)
        return len(self.sos2_groups) - 1

    def set_objective(self, sense: str, coeffs, offset: float = 0.0) -> None:
        self._require_open()
        if sense not in ("min", "max"):
            raise ValueError("objective sense must be 'min' or 'max'")
        self.objective_sense = sense
        self.objective_coeffs = self._normalize_coeffs(coeffs)
        self.objective_offset = float(offset)

    def finalize(self) -> "MilpModel":
        """Validate invariants and freeze the model."""
        if self._finalized:
            return self
        for v in self.variables:
            if v.kind == BINARY and not (0.0 <= v.lb and v.ub <= 1.0):
                raise ValueError(f"binary variable {v.name!r} has bounds outside [0, 1]")
        for group in self.sos2_groups:
            for i in group:
                v = self.variables[i]
                if v.kind != CONTINUOUS or v.lb < 0.0 or not np.isfinite(v.ub):
                    raise ValueError(
                        f"SOS2 member {v.name!r} must be continuous, nonnegative, bounded")
        self._finalized = True
        return self

    @property
    def finalized(self) -> bool:
        return self._finalized

    @property
    def n_variables(self) -> int:
        return len(self.variables)

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    def variable_index(self, name: str) -> int:
        return self._name_to_index[name]

    def variable_names(self) -> list[str]:
        return [v.name for v in self.variables]

    def binary_indices(self) -> list[int]:
        return [i for i, v in enumerate(self.variables) if v.kind == BINARY]


def _coef(value: float) -> str:
    return f"{value:.17g}"


def _linear_expr(model: MilpModel, coeffs) -> str:
    """Render a sparse row as LP-format text, bare names for unit coefficients."""
    parts: list[str] = []
    for idx, val in coeffs:
        name = model.variables[idx].name
        sign = "-" if val < 0 else "+"
        mag = abs(val)
        term = name if mag == 1.0 else f"{_coef(mag)} {name}"
        if not parts:
            parts.append(f"- {term}" if sign == "-" else term)
        else:
            parts.append(f"{sign} {term}")
    return " ".join(parts)


def write_lp(model: MilpModel) -> str:
    """CPLEX LP-format text; deterministic, insertion-ordered, 17-digit floats."""
    if not model.finalized:
        raise ValueError("finalize the model before exporting")
    out = io.StringIO()
    for key, value in model.metadata.items():
        out.write(f"\\ {key}: {value}\n")
    out.write("Minimize\n" if model.objective_sense == "min" else "Maximize\n")
    expr = _linear_expr(model, model.objective_coeffs)
    if model.objective_offset != 0.0:
        off = model.objective_offset
        expr = (expr + (" - " if off < 0 else " + ") + _coef(abs(off))) if expr else _coef(off)
    out.write(f" obj: {expr if expr else '0'}\n")
    out.write("Subject To\n")
    for con in model.constraints:
        lhs = _linear_expr(model, con.coeffs)
        if not lhs:
            lhs = "0"
        out.write(f" {con.name}: {lhs} {con.relation} {_coef(con.rhs)}\n")
    out.write("Bounds\n")
    for v in model.variables:
        lo_fin, hi_fin = np.isfinite(v.lb), np.isfinite(v.ub)
        if lo_fin and hi_fin:
            if v.lb == v.ub:
                out.write(f" {v.name} = {_coef(v.lb)}\n")
            else:
                out.write(f" {_coef(v.lb)} <= {v.name} <= {_coef(v.ub)}\n")
        elif lo_fin:
            out.write(f" {v.name} >= {_coef(v.lb)}\n")
        elif hi_fin:
            out.write(f" -inf <= {v.name} <= {_coef(v.ub)}\n")
        else:
            out.write(f" {v.name} free\n")
    binaries = [v.name for v in model.variables if v.kind == BINARY]
    if binaries:
        out.write("Binaries\n")
        for name in binaries:
            out.write(f" {name}\n")
    if model.sos2_groups:
        out.write("SOS\n")
        for g, group in enumerate(model.sos2_groups, start=1):
            pairs = " ".join(f"{model.variables[i].name}:{k}"
                             for k, i in enumerate(group, start=1))
            out.write(f" s{g}: S2 :: {pairs}\n")
    out.write("End\n")
    return out.getvalue()
