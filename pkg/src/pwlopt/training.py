"""Gradient-based estimation of network parameters.

Supports plain mean-squared-error training, bi-objective training that adds
a weighted conservation-law penalty, and a two-phase scheme that warm-starts
unconstrained and then enforces upper bounds on both the error and the
penalty through an augmented-Lagrangian outer loop.  All runs are full-batch
and deterministic given (seed, config, data).
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace

import numpy as np

from .network import Activation, Dataset, NetworkParams, TANH, activation_deriv, activation_eval
from .physics import PhysicsTerm

__all__ = [
    "TrainingConfig", "ConstrainedPhaseConfig", "TrainingTrace", "TrainResult",
    "ParamGradients", "mse_loss", "physics_eval", "gradient", "train", "train_constrained",
    "init_params", "TrainingDivergedError",
]

MODES = ("pi_minus", "pi_plus", "pi_plus_constrained")


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during training."""


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 5000
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0
    weight_bounds: tuple[float, float] = (-10.0, 10.0)
    hidden_output_bounds: tuple[float, float] = (-1.0, 1.0)
    physics_weight: float = 1.0
    mode: str = "pi_minus"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ValueError("adam betas must lie in (0, 1)")
        lw, uw = self.weight_bounds
        if not lw < uw:
            raise ValueError("weight_bounds must satisfy lower < upper")
        lh, uh = self.hidden_output_bounds
        if not lh <= uh:
            raise ValueError("hidden_output_bounds must satisfy lower <= upper")
        if self.physics_weight < 0:
            raise ValueError("physics_weight must be nonnegative")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")


@dataclass(frozen=True)
class ConstrainedPhaseConfig:
    """Second-phase settings: upper bounds on error (Z) and penalty (U)."""

    mse_upper_bound: float
    physics_upper_bound: float
    penalty_growth: float = 4.0
    max_outer_iterations: int = 10
    alpha: float = 1.0
    penalty_initial: float = 10.0
    inner_epochs: int | None = None  # defaults to the phase-1 epoch count

    def __post_init__(self):
        if self.mse_upper_bound <= 0:
            raise ValueError("mse upper bound must be positive")
        if self.physics_upper_bound < 0:
            raise ValueError("physics upper bound must be nonnegative")
        if self.penalty_growth <= 1:
            raise ValueError("penalty_growth must exceed 1")


@dataclass
class TrainingTrace:
    """Per-epoch loss history; row 0 is the state before any step."""

    epoch: list[int] = field(default_factory=list)
    mse_train: list[float] = field(default_factory=list)
    mse_test: list[float] = field(default_factory=list)
    physics_value: list[float] = field(default_factory=list)
    combined_loss: list[float] = field(default_factory=list)

    def append(self, epoch, mse_tr, mse_te, phys, combined):
        self.epoch.append(epoch)
        self.mse_train.append(mse_tr)
        self.mse_test.append(mse_te)
        self.physics_value.append(phys)
        self.combined_loss.append(combined)

    def to_csv_text(self) -> str:
        out = io.StringIO()
        out.write("epoch,mse_train,mse_test,physics_value,combined_loss\n")
        for row in zip(self.epoch, self.mse_train, self.mse_test,
                       self.physics_value, self.combined_loss):
            out.write(f"{row[0]},{row[1]!r},{row[2]!r},{row[3]!r},{row[4]!r}\n")
        return out.getvalue()

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_csv_text())


@dataclass(frozen=True)
class ParamGradients:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray


@dataclass(frozen=True)
class TrainResult:
    params: NetworkParams
    trace: TrainingTrace
    feasible: bool = True
    mse_violation: float = 0.0
    physics_violation: float = 0.0


# -- losses ---------------------------------------------------------------

def mse_loss(params: NetworkParams, data: Dataset, subset: str = "train") -> float:
    """Mean over samples of the summed squared output errors."""
    U, Y = data.subset(subset)
    H = activation_eval(params.hidden_activation, U @ params.B.T + params.C)
    Yhat = activation_eval(params.output_activation, H @ params.A.T + params.D)
    return float(np.mean(np.sum((Yhat - Y) ** 2, axis=1)))


def physics_eval(term: PhysicsTerm, params: NetworkParams, data: Dataset,
                 subset: str = "train") -> float:
    """Penalty of the term at the network's predictions, in raw units."""
    U, _ = data.subset(subset)
    H = activation_eval(params.hidden_activation, U @ params.B.T + params.C)
    Yhat = activation_eval(params.output_activation, H @ params.A.T + params.D)
    return term.value(data.raw_inputs(U), data.raw_outputs(Yhat))


# -- analytic gradients ----------------------------------------------------

def _forward_cache(params: NetworkParams, U: np.ndarray):
    Zh = U @ params.B.T + params.C
    H = activation_eval(params.hidden_activation, Zh)
    Zo = H @ params.A.T + params.D
    Yhat = activation_eval(params.output_activation, Zo)
    return Zh, H, Zo, Yhat


def _backprop(params: NetworkParams, U, Zh, H, Zo, dYhat) -> ParamGradients:
    Go = dYhat * activation_deriv(params.output_activation, Zo)
    dA = Go.T @ H
    dD = Go.sum(axis=0)
    Gh = (Go @ params.A) * activation_deriv(params.hidden_activation, Zh)
    dB = Gh.T @ U
    dC = Gh.sum(axis=0)
    return ParamGradients(dA, dB, dC, dD)


def _loss_and_grad(params: NetworkParams, data: Dataset, loss_spec: str,
                   term: PhysicsTerm | None, physics_weight: float,
                   subset: str = "train"):
    """Returns (loss, mse, physics, ParamGradients) for the requested loss."""
    if loss_spec not in ("mse", "physics", "combined"):
        raise ValueError("loss_spec must be 'mse', 'physics', or 'combined'")
    if loss_spec in ("physics", "combined") and term is None:
        raise ValueError(f"loss_spec {loss_spec!r} needs a physics term")
    U, Y = data.subset(subset)
    Zh, H, Zo, Yhat = _forward_cache(params, U)
    n = U.shape[0]

    mse = float(np.mean(np.sum((Yhat - Y) ** 2, axis=1)))
    dY_mse = 2.0 * (Yhat - Y) / n

    phys = 0.0
    dY_phys = None
    if term is not None:
        phys, grad_raw = term.value_and_grad(data.raw_inputs(U), data.raw_outputs(Yhat))
        dY_phys = grad_raw * data.output_scaler.half_range

    if loss_spec == "mse":
        return mse, mse, phys, _backprop(params, U, Zh, H, Zo, dY_mse)
    if loss_spec == "physics":
        return phys, mse, phys, _backprop(params, U, Zh, H, Zo, dY_phys)
    loss = mse + physics_weight * phys
    return loss, mse, phys, _backprop(params, U, Zh, H, Zo, dY_mse + physics_weight * dY_phys)


def gradient(params: NetworkParams, data: Dataset, loss_spec: str,
             term: PhysicsTerm | None = None, physics_weight: float = 1.0,
             subset: str = "train") -> ParamGradients:
    """Analytic gradient of the requested loss with respect to A, B, C, D."""
    return _loss_and_grad(params, data, loss_spec, term, physics_weight, subset)[3]


# -- optimizer -------------------------------------------------------------

def init_params(seed: int, n_in: int, n_hidden: int, n_out: int,
                hidden_activation: Activation = TANH,
                output_activation: Activation = TANH,
                scale: float = 0.5) -> NetworkParams:
    """Uniform [-scale, scale] initialization from a seeded generator."""
    rng = np.random.default_rng(seed)
    A = rng.uniform(-scale, scale, (n_out, n_hidden))
    B = rng.uniform(-scale, scale, (n_hidden, n_in))
    C = rng.uniform(-scale, scale, n_hidden)
    D = rng.uniform(-scale, scale, n_out)
    return NetworkParams(A, B, C, D, hidden_activation, output_activation)


class _Adam:
    """Adam on the flattened (A, B, C, D) block with box projection."""

    def __init__(self, shapes, config: TrainingConfig):
        self.cfg = config
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, values, grads):
        cfg = self.cfg
        self.t += 1
        lw, uw = cfg.weight_bounds
        corr1 = 1.0 - cfg.adam_beta1 ** self.t
        corr2 = 1.0 - cfg.adam_beta2 ** self.t
        out = []
        for val, g, m, v in zip(values, grads, self.m, self.v):
            m *= cfg.adam_beta1
            m += (1.0 - cfg.adam_beta1) * g
            v *= cfg.adam_beta2
            v += (1.0 - cfg.adam_beta2) * g * g
            step = cfg.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + cfg.adam_epsilon)
            out.append(np.clip(val - step, lw, uw))
        return out


def _unpack(params: NetworkParams):
    return [params.A.copy(), params.B.copy(), params.C.copy(), params.D.copy()]


def _pack(values, params: NetworkParams) -> NetworkParams:
    A, B, C, D = values
    return NetworkParams(A, B, C, D, params.hidden_activation, params.output_activation)


def _run_adam(params: NetworkParams, config: TrainingConfig, epochs: int,
              loss_fn, record, epoch_offset: int) -> NetworkParams:
    """Generic Adam loop; loss_fn(params) -> (loss, grads); record(params, epoch)."""
    opt = _Adam([params.A.shape, params.B.shape, params.C.shape, params.D.shape], config)
    values = _unpack(params)
    current = params
    for e in range(epochs):
        loss, grads = loss_fn(current)
        if not np.isfinite(loss):
            raise TrainingDivergedError(
                f"non-finite loss at epoch {epoch_offset + e}: {loss!r}")
        values = opt.step(values, [grads.A, grads.B, grads.C, grads.D])
        current = _pack(values, current)
        record(current, epoch_offset + e + 1)
    return current


def train(config: TrainingConfig, data: Dataset, term: PhysicsTerm | None = None,
          init: NetworkParams | None = None, *, n_hidden: int = 5,
          hidden_activation: Activation = TANH,
          output_activation: Activation = TANH) -> TrainResult:
    """Train under the configured mode; pi_plus adds the weighted penalty.

    The physics term is required for pi_plus; parameters are clipped to the
    weight box after every step.  With epochs=0 the initialization is
    returned unchanged.
    """
    if config.mode == "pi_plus_constrained":
        raise ValueError("use train_constrained for the two-phase constrained mode")
    if config.mode == "pi_plus" and term is None:
        raise ValueError("pi_plus training requires a physics term")
    params = init if init is not None else init_params(
        config.seed, data.inputs.shape[1], n_hidden, data.outputs.shape[1],
        hidden_activation, output_activation)

    use_physics = config.mode == "pi_plus"
    spec = "combined" if use_physics else "mse"
    eff_term = term if use_physics else None

    trace = TrainingTrace()

    def record(p: NetworkParams, epoch: int):
        mse_tr = mse_loss(p, data, "train")
        phys = physics_eval(term, p, data, "train") if term is not None else float("nan")
        combined = mse_tr + config.physics_weight * phys if use_physics else mse_tr
        trace.append(epoch, mse_tr, mse_loss(p, data, "test"), phys, combined)

    record(params, 0)

    def loss_fn(p):
        loss, _, _, grads = _loss_and_grad(p, data, spec, eff_term, config.physics_weight)
        return loss, grads

    current = _run_adam(params, config, config.epochs, loss_fn, record, 0)
    return TrainResult(current, trace)


def train_constrained(config: TrainingConfig, phase2: ConstrainedPhaseConfig,
                      data: Dataset, term: PhysicsTerm,
                      init: NetworkParams | None = None, *, n_hidden: int = 5,
                      hidden_activation: Activation = TANH,
                      output_activation: Activation = TANH) -> TrainResult:
    """Warm-start with plain error minimization, then enforce mse <= Z and
    alpha * physics <= U by an augmented-Lagrangian outer loop.

    Returns the first outer iterate meeting both bounds within 1e-8, else
    the least-violating iterate flagged infeasible.
    """
    if not np.isfinite(phase2.penalty_growth):
        raise ValueError("penalty growth must be finite")

    phase1_cfg = replace(config, mode="pi_minus")
    result = train(phase1_cfg, data, term=term, init=init, n_hidden=n_hidden,
                   hidden_activation=hidden_activation, output_activation=output_activation)
    params = result.params
    trace = result.trace

    Z, U = phase2.mse_upper_bound, phase2.physics_upper_bound
    alpha = phase2.alpha
    tol = 1e-8

    def violations(p: NetworkParams) -> tuple[float, float]:
        v_mse = max(0.0, mse_loss(p, data, "train") - Z)
        v_phys = max(0.0, alpha * physics_eval(term, p, data, "train") - U)
        return v_mse, v_phys

    best = params
    best_viol = violations(params)
    if max(best_viol) <= tol:
        return TrainResult(params, trace)

    lam = np.zeros(2)
    mu = phase2.penalty_initial
    inner_epochs = phase2.inner_epochs if phase2.inner_epochs is not None else config.epochs
    epoch_offset = config.epochs

    U_tr, Y_tr = data.subset("train")
    u_raw = data.raw_inputs(U_tr)

    def record(p: NetworkParams, epoch: int):
        mse_tr = mse_loss(p, data, "train")
        phys = physics_eval(term, p, data, "train")
        trace.append(epoch, mse_tr, mse_loss(p, data, "test"), phys,
                     mse_tr + max(0.0, alpha * phys - U))

    current = params
    for _ in range(phase2.max_outer_iterations):
        def al_loss(p, lam=lam, mu=mu):
            Zh, H, Zo, Yhat = _forward_cache(p, U_tr)
            n = U_tr.shape[0]
            mse_tr = float(np.mean(np.sum((Yhat - Y_tr) ** 2, axis=1)))
            dY_mse = 2.0 * (Yhat - Y_tr) / n
            phys, grad_raw = term.value_and_grad(u_raw, data.raw_outputs(Yhat))
            dY_phys = grad_raw * data.output_scaler.half_range
            g = np.array([mse_tr - Z, alpha * phys - U])
            sigma = np.maximum(0.0, lam + mu * g)
            al = mse_tr + float(np.sum(sigma * sigma - lam * lam) / (2.0 * mu))
            dY = (1.0 + sigma[0]) * dY_mse + (sigma[1] * alpha) * dY_phys
            return al, _backprop(p, U_tr, Zh, H, Zo, dY)

        current = _run_adam(current, config, inner_epochs, al_loss, record, epoch_offset)
        epoch_offset += inner_epochs

        mse_tr = mse_loss(current, data, "train")
        phys = physics_eval(term, current, data, "train")
        g = np.array([mse_tr - Z, alpha * phys - U])
        viol = violations(current)
        if max(viol) <= tol:
            return TrainResult(current, trace)
        if max(viol) < max(best_viol):
            best, best_viol = current, viol
        lam = np.maximum(0.0, lam + mu * g)
        mu *= phase2.penalty_growth

    return TrainResult(best, trace, feasible=False,
                       mse_violation=best_viol[0], physics_violation=best_viol[1])
