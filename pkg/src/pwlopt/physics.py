"""Conservation-law penalty terms evaluated in raw (back-normalized) units.

Each term maps raw inputs and raw predictions to a scalar penalty and its
gradient with respect to the raw predictions, which the trainer chains
through the output scaler and the network.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["BlendingComponentBalance", "ColumnMassBalance", "CduMassBalance", "PhysicsTerm"]


class SchemaMismatchError(ValueError):
    """Dataset feature layout does not match the physics term's case."""


def _check_shape(name: str, u_raw: np.ndarray, yhat_raw: np.ndarray,
                 n_in: int, n_out: int) -> None:
    if u_raw.shape[1] != n_in or yhat_raw.shape[1] != n_out:
        raise SchemaMismatchError(
            f"{name} expects {n_in} inputs and {n_out} outputs, "
            f"got {u_raw.shape[1]} and {yhat_raw.shape[1]}")


@dataclass(frozen=True)
class BlendingComponentBalance:
    """Sum of squared component-balance residuals of a two-stream mixer.

    Inputs are (x1, x2, w1, w2) and predictions (x, w); the residual per
    sample is x*w - x1*w1 - x2*w2.
    """

    name = "blending_component_balance"

    def residuals(self, u_raw: np.ndarray, yhat_raw: np.ndarray) -> np.ndarray:
        _check_shape(self.name, u_raw, yhat_raw, 4, 2)
        return (yhat_raw[:, 0] * yhat_raw[:, 1]
                - u_raw[:, 0] * u_raw[:, 2] - u_raw[:, 1] * u_raw[:, 3])

    def value(self, u_raw, yhat_raw) -> float:
        return float(np.sum(self.residuals(u_raw, yhat_raw) ** 2))

    def value_and_grad(self, u_raw, yhat_raw):
        r = self.residuals(u_raw, yhat_raw)
        grad = np.empty_like(yhat_raw)
        grad[:, 0] = 2.0 * r * yhat_raw[:, 1]
        grad[:, 1] = 2.0 * r * yhat_raw[:, 0]
        return float(np.sum(r ** 2)), grad


@dataclass(frozen=True)
class ColumnMassBalance:
    """Mass-balance penalty of a distillation column predicting residuum flow.

    Inputs are the crude feed followed by six product flows; the single
    prediction is the residuum flow.  The default penalty is the mean of
    squared residuals; signed=True keeps the raw signed mean (a fidelity
    variant, not a usable penalty since it can cancel and go negative).
    """

    name = "column_mass_balance"
    signed: bool = False

    def residuals(self, u_raw: np.ndarray, yhat_raw: np.ndarray) -> np.ndarray:
        _check_shape(self.name, u_raw, yhat_raw, 7, 1)
        return u_raw[:, 0] - u_raw[:, 1:7].sum(axis=1) - yhat_raw[:, 0]

    def value(self, u_raw, yhat_raw) -> float:
        r = self.residuals(u_raw, yhat_raw)
        return float(np.mean(r) if self.signed else np.mean(r ** 2))

    def value_and_grad(self, u_raw, yhat_raw):
        r = self.residuals(u_raw, yhat_raw)
        n = r.shape[0]
        grad = np.empty_like(yhat_raw)
        if self.signed:
            grad[:, 0] = -1.0 / n
            return float(np.mean(r)), grad
        grad[:, 0] = -2.0 * r / n
        return float(np.mean(r ** 2)), grad


@dataclass(frozen=True)
class CduMassBalance:
    """Root of the summed squared feed-vs-products imbalance of a crude unit.

    The first input is the crude feed; the six predictions are the product
    flows (residuum included), so the residual per sample is the feed minus
    the sum of all predicted flows.
    """

    name = "cdu_mass_balance"

    def residuals(self, u_raw: np.ndarray, yhat_raw: np.ndarray) -> np.ndarray:
        _check_shape(self.name, u_raw, yhat_raw, u_raw.shape[1], 6)
        return u_raw[:, 0] - yhat_raw.sum(axis=1)

    def value(self, u_raw, yhat_raw) -> float:
        r = self.residuals(u_raw, yhat_raw)
        return float(np.sqrt(np.sum(r ** 2)))

    def value_and_grad(self, u_raw, yhat_raw):
        r = self.residuals(u_raw, yhat_raw)
        p = float(np.sqrt(np.sum(r ** 2)))
        grad = np.zeros_like(yhat_raw)
        if p > 0.0:
            grad[:, :] = (-r / p)[:, None]
        return p, grad


PhysicsTerm = BlendingComponentBalance | ColumnMassBalance | CduMassBalance
