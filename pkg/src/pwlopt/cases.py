"""First-principles process models, synthetic data, and reference optima.

Three studies: a two-stream blending mixer, a synthetic crude-separation
column (real plant data being unavailable, a mass-balance-consistent
generator stands in), and a crude distillation unit whose product flows
follow a quartic cut-point correlation.  Each study binds a sampler, a
physics term, a feasibility test, a surrogate query, and a reference
global solution obtained independently of any network.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .encode import SurrogateQuery
from .network import Dataset, Scaler
from .physics import BlendingComponentBalance, CduMassBalance, ColumnMassBalance, PhysicsTerm

__all__ = [
    "blending_forward", "make_blending_dataset", "cdu_cut", "cdu_forward",
    "lhs_sample", "make_cdu_dataset", "make_column_dataset", "global_oracle",
    "sse_compare", "CaseStudy", "get_case", "CASE_NAMES", "InfeasibleInputError",
    "BLENDING_BOUNDS", "CDU_TE_BOUNDS", "CDU_FEED_RANGE", "CUT_COEFFS",
]

log = logging.getLogger(__name__)


class InfeasibleInputError(ValueError):
    """Input point violates the first-principles model's feasibility rules."""


# -- blending ---------------------------------------------------------------

BLENDING_BOUNDS = ((0.1, 0.5), (0.5, 1.0), (0.0, 50.0), (0.0, 50.0))
BLENDING_MIN_FLOW = 25.0  # per-stream flow floor of the optimization query


def blending_forward(x1: float, x2: float, w1: float, w2: float) -> tuple[float, float]:
    """Outlet composition and flow of mixing two streams of one component pair."""
    w = w1 + w2
    if w <= 0.0:
        raise InfeasibleInputError("total flow w1 + w2 must be positive")
    return (x1 * w1 + x2 * w2) / w, w


def _finish_dataset(inputs_raw, outputs_raw, noise_snr_db, rng, train_frac,
                    input_names, output_names) -> Dataset:
    in_scaler = Scaler.fit(inputs_raw)
    out_scaler = Scaler.fit(outputs_raw)
    U = in_scaler.to_normalized(inputs_raw)
    Y = out_scaler.to_normalized(outputs_raw)
    if math.isfinite(noise_snr_db):
        power = np.mean(Y ** 2, axis=0)
        sigma = np.sqrt(power / (10.0 ** (noise_snr_db / 10.0)))
        Y = Y + rng.standard_normal(Y.shape) * sigma
    n = U.shape[0]
    perm = rng.permutation(n)
    U, Y = U[perm], Y[perm]
    n_train = int(round(train_frac * n))
    return Dataset(U, Y, in_scaler, out_scaler,
                   np.arange(n_train), np.arange(n_train, n),
                   tuple(input_names), tuple(output_names))


def make_blending_dataset(n: int = 100, noise_snr_db: float = 40.0, seed: int = 0) -> Dataset:
    """Uniform samples of the mixer's input box with noisy normalized outputs."""
    if n < 10:
        raise ValueError("need at least 10 samples")
    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in BLENDING_BOUNDS])
    hi = np.array([b[1] for b in BLENDING_BOUNDS])
    inputs = rng.uniform(lo, hi, (n, 4))
    outputs = np.array([blending_forward(*row) for row in inputs])
    return _finish_dataset(inputs, outputs, noise_snr_db, rng, 0.8,
                           ("x1", "x2", "w1", "w2"), ("x", "w"))


# -- crude distillation unit --------------------------------------------------

CUT_COEFFS = (4.04, -0.047, 3.25e-4, -2.84e-7, 8.15e-11)

CDU_PRODUCTS = ("lpg", "naphtha", "kerosene", "diesel", "vgo")

CDU_TE_BOUNDS = (
    (-48.0, -40.0),    # LPG
    (230.0, 380.0),    # naphtha
    (330.0, 520.0),    # kerosene
    (420.0, 630.0),    # diesel
    (620.0, 1050.0),   # VGO
)

CDU_FEED_RANGE = (50.0, 100.0)


def cdu_cut(te: float):
    """Cumulative distilled percentage at end temperature te (quartic fit)."""
    te = np.asarray(te, dtype=float)
    a0, a1, a2, a3, a4 = CUT_COEFFS
    out = a0 + a1 * te + a2 * te ** 2 + a3 * te ** 3 + a4 * te ** 4
    return float(out) if out.ndim == 0 else out


def cdu_forward(f_cdu: float, te: np.ndarray) -> np.ndarray:
    """Product flows (five cuts plus residuum) at the given cut temperatures.

    Raises when consecutive cuts decrease, which would mean a negative flow.
    """
    te = np.asarray(te, dtype=float)
    if te.shape != (5,):
        raise ValueError("expected five cut temperatures")
    cuts = cdu_cut(te)
    prev = np.concatenate([[0.0], cuts[:-1]])
    if np.any(cuts - prev < 0.0):
        raise InfeasibleInputError("cut percentages must be nondecreasing across products")
    flows = f_cdu * (cuts - prev) / 100.0
    residuum = f_cdu * (100.0 - cuts[-1]) / 100.0
    return np.concatenate([flows, [residuum]])


def _cdu_feasible_mask(te_matrix: np.ndarray) -> np.ndarray:
    cuts = cdu_cut(te_matrix)
    ok = np.all(np.diff(cuts, axis=1) >= 0.0, axis=1)
    return ok & (cuts[:, 0] >= 0.0) & (cuts[:, -1] <= 100.0)


def lhs_sample(n: int, bounds, seed_or_rng) -> np.ndarray:
    """Latin hypercube: one uniformly jittered point per stratum per dimension,
    strata independently permuted per dimension."""
    if n < 1:
        raise ValueError("need at least one sample")
    rng = seed_or_rng if isinstance(seed_or_rng, np.random.Generator) \
        else np.random.default_rng(seed_or_rng)
    bounds = [(float(lo), float(hi)) for lo, hi in bounds]
    d = len(bounds)
    out = np.empty((n, d))
    for j, (lo, hi) in enumerate(bounds):
        if not lo < hi:
            raise ValueError(f"invalid box [{lo}, {hi}] in dimension {j}")
        cells = (rng.permutation(n) + rng.uniform(0.0, 1.0, n)) / n
        out[:, j] = lo + cells * (hi - lo)
    return out


def make_cdu_dataset(n: int = 1000, noise_snr_db: float = 40.0, seed: int = 0) -> Dataset:
    """Latin-hypercube samples of feed and cut temperatures; infeasible points
    (decreasing cuts) are rejected and resampled."""
    rng = np.random.default_rng(seed)
    boxes = [CDU_FEED_RANGE, *CDU_TE_BOUNDS]
    rows = []
    rejected = 0
    need = n
    while need > 0:
        batch = lhs_sample(need, boxes, rng)
        ok = _cdu_feasible_mask(batch[:, 1:])
        rejected += int(np.sum(~ok))
        rows.append(batch[ok])
        need = n - sum(r.shape[0] for r in rows)
    if rejected:
        log.info("cdu sampling rejected %d infeasible points", rejected)
    inputs = np.vstack(rows)[:n]
    outputs = np.array([cdu_forward(r[0], r[1:]) for r in inputs])
    return _finish_dataset(
        inputs, outputs, noise_snr_db, rng, 0.8,
        ("f_cdu", "te_lpg", "te_naphtha", "te_kerosene", "te_diesel", "te_vgo"),
        ("f_lpg", "f_naphtha", "f_kerosene", "f_diesel", "f_vgo", "f_rsd"))


# -- synthetic separation column ----------------------------------------------

COLUMN_PRODUCT_RANGES = (
    (2.0, 6.0),     # lpg
    (8.0, 16.0),    # light naphtha
    (10.0, 20.0),   # heavy naphtha
    (12.0, 24.0),   # kerosene
    (10.0, 22.0),   # light diesel
    (8.0, 18.0),    # heavy diesel
)
COLUMN_RESIDUUM_FRACTION = (0.1, 0.5)


def column_forward(u_raw: np.ndarray) -> np.ndarray:
    """Residuum flow implied by the column's overall mass balance."""
    u_raw = np.asarray(u_raw, dtype=float)
    return np.array([u_raw[0] - u_raw[1:7].sum()])


def make_column_dataset(n: int = 270, noise_snr_db: float = 40.0, seed: int = 0) -> Dataset:
    """Product draws sampled independently; the feed closes the balance so the
    residuum fraction stays within its configured band."""
    rng = np.random.default_rng(seed)
    lo = np.array([r[0] for r in COLUMN_PRODUCT_RANGES])
    hi = np.array([r[1] for r in COLUMN_PRODUCT_RANGES])
    products = rng.uniform(lo, hi, (n, 6))
    frac = rng.uniform(*COLUMN_RESIDUUM_FRACTION, n)
    feed = products.sum(axis=1) / (1.0 - frac)
    inputs = np.column_stack([feed, products])
    outputs = (feed - products.sum(axis=1)).reshape(-1, 1)
    return _finish_dataset(
        inputs, outputs, noise_snr_db, rng, 0.8,
        ("f_cr", "f_lpg", "f_lsrn", "f_hsrn", "f_kero", "f_ld", "f_hd"), ("f_rsd",))


# -- reference optima and comparison ------------------------------------------

@dataclass(frozen=True)
class OracleSolution:
    inputs_raw: np.ndarray
    outputs_raw: np.ndarray
    objective_raw: float


def global_oracle(case: str, dataset: Dataset | None = None,
                  grid_points: int = 21) -> OracleSolution:
    """First-principles reference optimum for a case.

    blending: the box-corner argument gives (0.1, 0.5, 50, 25) with x = 7/30.
    column: feed at maximum forces all product draws to their maxima.
    cdu: brute-force grid search over the cut temperatures at maximum feed
    (over the dataset's sampled box when one is given).
    """
    if case == "blending":
        u = np.array([0.1, 0.5, 50.0, BLENDING_MIN_FLOW])
        x, w = blending_forward(*u)
        return OracleSolution(u, np.array([x, w]), x)
    if case == "column":
        if dataset is None:
            raise ValueError("the column oracle needs a dataset for its scalers")
        u = dataset.input_scaler.raw_max.copy()
        y = column_forward(u)
        return OracleSolution(u, y, float(y[0]))
    if case == "cdu":
        if dataset is not None:
            lo = dataset.input_scaler.raw_min
            hi = dataset.input_scaler.raw_max
            feed = float(hi[0])
            te_boxes = list(zip(lo[1:], hi[1:]))
        else:
            feed = CDU_FEED_RANGE[1]
            te_boxes = list(CDU_TE_BOUNDS)
        axes = [np.linspace(lo, hi, grid_points) for lo, hi in te_boxes]
        # broadcast per-axis cut values instead of materializing coordinate grids
        cut_axes = [cdu_cut(ax) for ax in axes]

        def along(vec, j):
            shape = [1] * 5
            shape[j] = -1
            return np.asarray(vec).reshape(shape)

        feasible = np.ones([grid_points] * 5, dtype=bool)
        prev = np.zeros([1] * 5)
        for j, c in enumerate(cut_axes):
            cj = along(c, j)
            feasible &= cj >= prev
            prev = cj
        feasible &= along(cut_axes[-1], 4) <= 100.0
        if not np.any(feasible):
            raise RuntimeError("no feasible grid point in the cut-temperature box")
        residuum = np.where(feasible,
                            feed * (100.0 - along(cut_axes[-1], 4)) / 100.0, np.inf)
        idx = np.unravel_index(int(np.argmin(residuum)), residuum.shape)
        te = np.array([axes[j][idx[j]] for j in range(5)])
        u = np.concatenate([[feed], te])
        y = cdu_forward(feed, te)
        return OracleSolution(u, y, float(y[-1]))
    raise ValueError(f"unknown case {case!r}")


def sse_compare(y_fp: np.ndarray, y_star: np.ndarray) -> float:
    """Sum of squared differences between two equally shaped output arrays."""
    a = np.asarray(y_fp, dtype=float)
    b = np.asarray(y_star, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.sum((a - b) ** 2))


# -- case registry -------------------------------------------------------------

@dataclass(frozen=True)
class CaseStudy:
    """Everything the experiment runner needs to know about one process."""

    name: str
    n_inputs: int
    n_outputs: int
    objective_output: int
    default_samples: int
    input_names: tuple[str, ...]
    output_names: tuple[str, ...]

    def make_dataset(self, n: int, noise_snr_db: float, seed: int) -> Dataset:
        maker = {"blending": make_blending_dataset, "column": make_column_dataset,
                 "cdu": make_cdu_dataset}[self.name]
        return maker(n, noise_snr_db, seed)

    def physics_term(self) -> PhysicsTerm:
        return {"blending": BlendingComponentBalance(),
                "column": ColumnMassBalance(),
                "cdu": CduMassBalance()}[self.name]

    def default_physics_weight(self) -> float:
        return {"blending": 1.0, "column": 0.1, "cdu": 1.0}[self.name]

    def first_principles(self, u_raw: np.ndarray) -> np.ndarray:
        u_raw = np.asarray(u_raw, dtype=float)
        if self.name == "blending":
            return np.array(blending_forward(*u_raw))
        if self.name == "column":
            return column_forward(u_raw)
        return cdu_forward(u_raw[0], u_raw[1:])

    def feasible(self, u_raw: np.ndarray) -> bool:
        try:
            self.first_principles(u_raw)
        except InfeasibleInputError:
            return False
        return True

    def query(self, dataset: Dataset) -> SurrogateQuery:
        """The study's canonical optimization question in normalized units."""
        if self.name == "blending":
            # per-stream flow floors, converted to the dataset's normalized units
            raw_floor = np.array([0.0, 0.0, BLENDING_MIN_FLOW, BLENDING_MIN_FLOW])
            norm_floor = dataset.input_scaler.to_normalized(raw_floor)
            bounds = [(-1.0, 1.0)] * 4
            for j in (2, 3):
                bounds[j] = (min(max(-1.0, float(norm_floor[j])), 1.0), 1.0)
            return SurrogateQuery(objective_output=0, sense="min",
                                  input_bounds=tuple(bounds))
        if self.name == "column":
            return SurrogateQuery(objective_output=0, sense="min",
                                  input_fixings=((0, 1.0),))
        return SurrogateQuery(objective_output=5, sense="min",
                              input_fixings=((0, 1.0),))

    def oracle(self, dataset: Dataset) -> OracleSolution:
        return global_oracle(self.name, dataset)


CASE_NAMES = ("blending", "column", "cdu")

_CASES = {
    "blending": CaseStudy("blending", 4, 2, 0, 100,
                          ("x1", "x2", "w1", "w2"), ("x", "w")),
    "column": CaseStudy("column", 7, 1, 0, 270,
                        ("f_cr", "f_lpg", "f_lsrn", "f_hsrn", "f_kero", "f_ld", "f_hd"),
                        ("f_rsd",)),
    "cdu": CaseStudy("cdu", 6, 6, 5, 1000,
                     ("f_cdu", "te_lpg", "te_naphtha", "te_kerosene", "te_diesel", "te_vgo"),
                     ("f_lpg", "f_naphtha", "f_kerosene", "f_diesel", "f_vgo", "f_rsd")),
}


def get_case(name: str) -> CaseStudy:
    try:
        return _CASES[name]
    except KeyError:
        raise ValueError(f"unknown case {name!r}; expected one of {CASE_NAMES}") from None
