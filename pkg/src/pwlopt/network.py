"""One-hidden-layer feed-forward networks, min-max scaling, and datasets.

A network is y = f_out(A f_hid(B u + C) + D) with weight matrices A, B and
bias vectors C, D.  Activations are tanh, ReLU, identity, or a piecewise
linear tanh approximation; the latter makes the exact surrogate that the
MILP encodings optimize over.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .pwl import PwlFunction, tanh_pwl

__all__ = [
    "Activation", "TANH", "RELU", "IDENTITY", "pwl_tanh_activation",
    "NetworkParams", "Scaler", "Dataset", "activation_eval", "forward", "forward_batch",
]

_KINDS = ("tanh", "relu", "identity", "pwl_tanh")


@dataclass(frozen=True)
class Activation:
    """Elementwise activation kind; pwl_tanh carries its piece count."""

    kind: str
    pieces: int | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown activation kind {self.kind!r}")
        if self.kind == "pwl_tanh":
            if self.pieces not in (3, 5):
                raise ValueError("pwl_tanh supports 3 or 5 pieces")
        elif self.pieces is not None:
            raise ValueError(f"{self.kind} takes no piece count")

    @property
    def token(self) -> str:
        return f"pwl_tanh{self.pieces}" if self.kind == "pwl_tanh" else self.kind

    @classmethod
    def from_token(cls, token: str) -> "Activation":
        if token.startswith("pwl_tanh"):
            return cls("pwl_tanh", int(token[len("pwl_tanh"):]))
        return cls(token)

    def pwl(self) -> PwlFunction:
        if self.kind != "pwl_tanh":
            raise ValueError("only pwl_tanh has an underlying piecewise-linear function")
        return tanh_pwl(self.pieces)


TANH = Activation("tanh")
RELU = Activation("relu")
IDENTITY = Activation("identity")


def pwl_tanh_activation(pieces: int) -> Activation:
    return Activation("pwl_tanh", pieces)


def activation_eval(act: Activation, x):
    """Apply an activation elementwise to a scalar or array."""
    if act.kind == "tanh":
        return np.tanh(x) if not np.isscalar(x) else float(np.tanh(x))
    if act.kind == "relu":
        return np.maximum(x, 0.0) if not np.isscalar(x) else float(max(x, 0.0))
    if act.kind == "identity":
        return x
    return act.pwl()(x)


def activation_deriv(act: Activation, z):
    """Derivative of the activation at pre-activation z (elementwise).

    ReLU uses the 0 subgradient at the kink; pwl_tanh uses the right
    segment's slope at breakpoints.
    """
    if act.kind == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    if act.kind == "relu":
        return (np.asarray(z) > 0.0).astype(float)
    if act.kind == "identity":
        return np.ones_like(np.asarray(z, dtype=float))
    return act.pwl().derivative(z)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class NetworkParams:
    """Weights and biases of a one-hidden-layer network.

    A: (n_out, n_hidden) output weights; B: (n_hidden, n_in) hidden weights;
    C: (n_hidden,) hidden bias; D: (n_out,) output bias.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    hidden_activation: Activation = TANH
    output_activation: Activation = TANH

    def __post_init__(self):
        for name in "ABCD":
            object.__setattr__(self, name, _readonly(getattr(self, name)))
        A, B, C, D = self.A, self.B, self.C, self.D
        if A.ndim != 2 or B.ndim != 2 or C.ndim != 1 or D.ndim != 1:
            raise ValueError("A, B must be matrices and C, D vectors")
        if A.shape[1] != B.shape[0] or A.shape[1] != C.shape[0] or A.shape[0] != D.shape[0]:
            raise ValueError(
                f"inconsistent shapes: A{A.shape} B{B.shape} C{C.shape} D{D.shape}")
        for name in "ABCD":
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite entries in {name}")

    @property
    def n_in(self) -> int:
        return self.B.shape[1]

    @property
    def n_hidden(self) -> int:
        return self.B.shape[0]

    @property
    def n_out(self) -> int:
        return self.A.shape[0]

    def with_activations(self, hidden: Activation, output: Activation) -> "NetworkParams":
        return NetworkParams(self.A, self.B, self.C, self.D, hidden, output)

    def as_pwl(self, pieces: int) -> "NetworkParams":
        """Same weights with tanh layers replaced by the piecewise approximation."""
        def swap(act: Activation) -> Activation:
            return pwl_tanh_activation(pieces) if act.kind in ("tanh", "pwl_tanh") else act
        return self.with_activations(swap(self.hidden_activation), swap(self.output_activation))

    # -- flat text serialization ------------------------------------------
    # header "n_in n_hidden n_out hidden_act output_act", then row-major
    # B, C, A, D, one block per matrix, blank line between blocks.

    def to_text(self) -> str:
        out = io.StringIO()
        out.write(f"{self.n_in} {self.n_hidden} {self.n_out} "
                  f"{self.hidden_activation.token} {self.output_activation.token}\n")
        for block in (self.B, self.C.reshape(1, -1), self.A, self.D.reshape(1, -1)):
            for row in block:
                out.write(" ".join(repr(float(v)) for v in row) + "\n")
            out.write("\n")
        return out.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "NetworkParams":
        lines = text.splitlines()
        n_in, n_hidden, n_out, hid_tok, out_tok = lines[0].split()
        n_in, n_hidden, n_out = int(n_in), int(n_hidden), int(n_out)
        rows = [np.array([float(v) for v in ln.split()]) for ln in lines[1:] if ln.strip()]
        B = np.vstack(rows[:n_hidden])
        C = rows[n_hidden]
        A = np.vstack(rows[n_hidden + 1: n_hidden + 1 + n_out])
        D = rows[n_hidden + 1 + n_out]
        return cls(A, B, C, D, Activation.from_token(hid_tok), Activation.from_token(out_tok))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path) -> "NetworkParams":
        with open(path) as fh:
            return cls.from_text(fh.read())


def forward_batch(params: NetworkParams, inputs: np.ndarray) -> np.ndarray:
    """Evaluate the network on an (N, n_in) batch; returns (N, n_out)."""
    U = np.asarray(inputs, dtype=float)
    if U.ndim != 2 or U.shape[1] != params.n_in:
        raise ValueError(f"expected (N, {params.n_in}) inputs, got {U.shape}")
    H = activation_eval(params.hidden_activation, U @ params.B.T + params.C)
    return activation_eval(params.output_activation, H @ params.A.T + params.D)


def forward(params: NetworkParams, input_vec: np.ndarray) -> np.ndarray:
    """Evaluate the network on a single input vector."""
    u = np.asarray(input_vec, dtype=float)
    if u.ndim != 1 or u.shape[0] != params.n_in:
        raise ValueError(f"expected input of length {params.n_in}, got shape {u.shape}")
    return forward_batch(params, u.reshape(1, -1))[0]


@dataclass(frozen=True)
class Scaler:
    """Per-feature affine map between raw units and the normalized range [-1, 1]."""

    raw_min: np.ndarray
    raw_max: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "raw_min", _readonly(np.atleast_1d(self.raw_min)))
        object.__setattr__(self, "raw_max", _readonly(np.atleast_1d(self.raw_max)))
        if self.raw_min.shape != self.raw_max.shape or self.raw_min.ndim != 1:
            raise ValueError("raw_min and raw_max must be equal-length vectors")
        if not np.all(self.raw_max > self.raw_min):
            raise ValueError("each feature needs raw_max > raw_min")

    @classmethod
    def fit(cls, raw: np.ndarray) -> "Scaler":
        raw = np.asarray(raw, dtype=float)
        return cls(raw.min(axis=0), raw.max(axis=0))

    @property
    def n_features(self) -> int:
        return self.raw_min.shape[0]

    @property
    def half_range(self) -> np.ndarray:
        return (self.raw_max - self.raw_min) / 2.0

    def _check(self, values: np.ndarray) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        if v.shape[-1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {v.shape[-1]}")
        return v

    def to_normalized(self, raw: np.ndarray) -> np.ndarray:
        raw = self._check(raw)
        return (raw - self.raw_min) / self.half_range - 1.0

    def to_raw(self, normalized: np.ndarray) -> np.ndarray:
        normalized = self._check(normalized)
        return (normalized + 1.0) * self.half_range + self.raw_min

    def scale(self, values: np.ndarray, direction: str) -> np.ndarray:
        if direction == "to_normalized":
            return self.to_normalized(values)
        if direction == "to_raw":
            return self.to_raw(values)
        raise ValueError("direction must be 'to_normalized' or 'to_raw'")


@dataclass(frozen=True)
class Dataset:
    """Normalized samples with the scalers needed to recover raw units.

    train_idx and test_idx partition range(N).
    """

    inputs: np.ndarray
    outputs: np.ndarray
    input_scaler: Scaler
    output_scaler: Scaler
    train_idx: np.ndarray
    test_idx: np.ndarray
    input_names: tuple[str, ...]
    output_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "inputs", _readonly(self.inputs))
        object.__setattr__(self, "outputs", _readonly(self.outputs))
        for name in ("train_idx", "test_idx"):
            idx = np.array(getattr(self, name), dtype=int)
            idx.setflags(write=False)
            object.__setattr__(self, name, idx)
        n = self.inputs.shape[0]
        if self.outputs.shape[0] != n:
            raise ValueError("inputs and outputs disagree on sample count")
        if self.inputs.shape[1] != self.input_scaler.n_features:
            raise ValueError("input width does not match input scaler")
        if self.outputs.shape[1] != self.output_scaler.n_features:
            raise ValueError("output width does not match output scaler")
        if len(self.input_names) != self.inputs.shape[1]:
            raise ValueError("input_names length mismatch")
        if len(self.output_names) != self.outputs.shape[1]:
            raise ValueError("output_names length mismatch")
        merged = np.sort(np.concatenate([self.train_idx, self.test_idx]))
        if not np.array_equal(merged, np.arange(n)):
            raise ValueError("train and test indices must partition the sample range")

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]

    def subset(self, which: str) -> tuple[np.ndarray, np.ndarray]:
        if which == "train":
            idx = self.train_idx
        elif which == "test":
            idx = self.test_idx
        elif which == "all":
            idx = np.arange(self.n_samples)
        else:
            raise ValueError("subset must be 'train', 'test', or 'all'")
        if idx.size == 0:
            raise ValueError(f"{which} subset is empty")
        return self.inputs[idx], self.outputs[idx]

    def raw_inputs(self, normalized: np.ndarray) -> np.ndarray:
        return self.input_scaler.to_raw(normalized)

    def raw_outputs(self, normalized: np.ndarray) -> np.ndarray:
        return self.output_scaler.to_raw(normalized)

    # -- CSV serialization -------------------------------------------------
    # Metadata rides in '#' comment lines ahead of the header so a plain CSV
    # reader still sees one header row naming features and targets.

    def to_csv_text(self) -> str:
        def vec(v):
            return ",".join(repr(float(x)) for x in v)

        lines = [
            "# input_min," + vec(self.input_scaler.raw_min),
            "# input_max," + vec(self.input_scaler.raw_max),
            "# output_min," + vec(self.output_scaler.raw_min),
            "# output_max," + vec(self.output_scaler.raw_max),
            "# train_idx," + ",".join(str(i) for i in self.train_idx),
            ",".join(self.input_names + self.output_names),
        ]
        for u, y in zip(self.inputs, self.outputs):
            lines.append(vec(u) + "," + vec(y))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv_text(cls, text: str) -> "Dataset":
        meta: dict[str, str] = {}
        rows: list[str] = []
        header = None
        for line in text.splitlines():
            if not line.strip():
                continue
            if line.startswith("#"):
                key, _, rest = line[1:].strip().partition(",")
                meta[key.strip()] = rest
            elif header is None:
                header = line
            else:
                rows.append(line)
        in_scaler = Scaler(_parse_vec(meta["input_min"]), _parse_vec(meta["input_max"]))
        out_scaler = Scaler(_parse_vec(meta["output_min"]), _parse_vec(meta["output_max"]))
        names = header.split(",")
        n_in = in_scaler.n_features
        data = np.array([[float(v) for v in r.split(",")] for r in rows])
        train_idx = np.array([int(i) for i in meta["train_idx"].split(",") if i != ""])
        test_idx = np.setdiff1d(np.arange(data.shape[0]), train_idx)
        return cls(data[:, :n_in], data[:, n_in:], in_scaler, out_scaler,
                   train_idx, test_idx, tuple(names[:n_in]), tuple(names[n_in:]))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_csv_text())

    @classmethod
    def load(cls, path) -> "Dataset":
        with open(path) as fh:
            return cls.from_csv_text(fh.read())


def _parse_vec(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.split(",") if v != ""])
