"""Fully-connected autoencoder with exact derivatives of the joint loss.

The encoder and decoder are mirror-image MLPs (hidden activation tanh or
sigmoid, final layer of each linear). Besides plain forward evaluation the
module provides:

  * Jacobian-vector products through either network, used to push state
    rates into the latent space (encoder) and latent rates back out
    (decoder);
  * the joint training loss

        L = L_recon + zdot_weight * L_zrate + udot_weight * L_urate

    averaged over batch columns, with reverse-mode gradients for every
    weight, bias and per-sample coefficient matrix;
  * a standard Adam optimizer with bias correction.

Gradients are exact: the rate terms are differentiated through the
Jacobian-vector products themselves, which the finite-difference tests in
the suite verify entry by entry.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .dynamics import BasisLibrary

ACTIVATIONS = ("tanh", "sigmoid", "linear")


class NonFiniteLoss(RuntimeError):
    """The training loss stopped being finite (optimizer divergence)."""


@dataclass(frozen=True)
class LayerSpec:
    """Encoder layer widths, input first; decoder widths are the reverse."""

    widths: tuple[int, ...]
    activation: str = "tanh"

    def __post_init__(self):
        if len(self.widths) < 2:
            raise ValueError("need at least input and latent widths")
        if any(w < 1 for w in self.widths):
            raise ValueError("layer widths must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")

    @property
    def n_input(self) -> int:
        return self.widths[0]

    @property
    def latent_dim(self) -> int:
        return self.widths[-1]


@dataclass
class MlpParams:
    spec: LayerSpec
    enc_weights: list[np.ndarray]
    enc_biases: list[np.ndarray]
    dec_weights: list[np.ndarray]
    dec_biases: list[np.ndarray]

    @classmethod
    def initialize(cls, spec: LayerSpec, seed: int) -> "MlpParams":
        """Glorot-uniform weights, zero biases; deterministic for a seed."""
        rng = np.random.default_rng(seed)

        def glorot(n_in, n_out):
            limit = np.sqrt(6.0 / (n_in + n_out))
            return rng.uniform(-limit, limit, size=(n_in, n_out))

        enc_pairs = list(zip(spec.widths[:-1], spec.widths[1:]))
        dec_widths = spec.widths[::-1]
        dec_pairs = list(zip(dec_widths[:-1], dec_widths[1:]))
        return cls(
            spec=spec,
            enc_weights=[glorot(a, b) for a, b in enc_pairs],
            enc_biases=[np.zeros(b) for _, b in enc_pairs],
            dec_weights=[glorot(a, b) for a, b in dec_pairs],
            dec_biases=[np.zeros(b) for _, b in dec_pairs],
        )

    def to_dict(self) -> dict[str, np.ndarray]:
        """Name -> array views (shared storage) in a stable order."""
        out: dict[str, np.ndarray] = {}
        for l, (w, b) in enumerate(zip(self.enc_weights, self.enc_biases)):
            out[f"enc.{l}.w"] = w
            out[f"enc.{l}.b"] = b
        for l, (w, b) in enumerate(zip(self.dec_weights, self.dec_biases)):
            out[f"dec.{l}.w"] = w
            out[f"dec.{l}.b"] = b
        return out


def _act(activation: str, s: np.ndarray) -> np.ndarray:
    if activation == "tanh":
        return np.tanh(s)
    if activation == "sigmoid":
        return 1.0 / (1.0 + np.exp(-s))
    return s


def _act_rate(activation: str, a: np.ndarray) -> np.ndarray:
    """Activation derivative expressed through the activation output."""
    if activation == "tanh":
        return 1.0 - a * a
    if activation == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(a)


def _as_batch(x: np.ndarray, width: int, name: str) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.ndim != 2 or xb.shape[1] != width:
        raise ValueError(f"{name} must have width {width}, got shape {x.shape}")
    return xb, single


def _forward(weights, biases, activation, X):
    A = X
    last = len(weights) - 1
    for l, (W, b) in enumerate(zip(weights, biases)):
        S = A @ W + b
        A = S if l == last else _act(activation, S)
    return A


def _forward_jvp(weights, biases, activation, X, T):
    A, tangent = X, T
    last = len(weights) - 1
    for l, (W, b) in enumerate(zip(weights, biases)):
        S = A @ W + b
        if l == last:
            A, tangent = S, tangent @ W
        else:
            A = _act(activation, S)
            tangent = _act_rate(activation, A) * (tangent @ W)
    return A, tangent


def encode(params: MlpParams, u: np.ndarray) -> np.ndarray:
    """Latent coordinates of one state vector or a (batch, n_input) matrix."""
    ub, single = _as_batch(u, params.spec.n_input, "u")
    z = _forward(params.enc_weights, params.enc_biases, params.spec.activation, ub)
    return z[0] if single else z


def decode(params: MlpParams, z: np.ndarray) -> np.ndarray:
    zb, single = _as_batch(z, params.spec.latent_dim, "z")
    u = _forward(params.dec_weights, params.dec_biases, params.spec.activation, zb)
    return u[0] if single else u


def encoder_jvp(params: MlpParams, u: np.ndarray, u_dot: np.ndarray) -> np.ndarray:
    """Directional derivative of encode at u along u_dot."""
    ub, single = _as_batch(u, params.spec.n_input, "u")
    tb, _ = _as_batch(u_dot, params.spec.n_input, "u_dot")
    if ub.shape != tb.shape:
        raise ValueError("u and u_dot must share shape")
    _, zdot = _forward_jvp(
        params.enc_weights, params.enc_biases, params.spec.activation, ub, tb
    )
    return zdot[0] if single else zdot


def decoder_jvp(params: MlpParams, z: np.ndarray, z_dot: np.ndarray) -> np.ndarray:
    """Directional derivative of decode at z along z_dot."""
    zb, single = _as_batch(z, params.spec.latent_dim, "z")
    tb, _ = _as_batch(z_dot, params.spec.latent_dim, "z_dot")
    if zb.shape != tb.shape:
        raise ValueError("z and z_dot must share shape")
    _, udot = _forward_jvp(
        params.dec_weights, params.dec_biases, params.spec.activation, zb, tb
    )
    return udot[0] if single else udot


@dataclass
class Batch:
    """Pooled snapshot columns: states, their rates, and owning sample position."""

    u: np.ndarray  # (n_cols, n_input)
    u_dot: np.ndarray  # (n_cols, n_input)
    sample_pos: np.ndarray  # (n_cols,) position into the coefficient list

    def __post_init__(self):
        if not (len(self.u) == len(self.u_dot) == len(self.sample_pos)):
            raise ValueError("batch arrays must have equal length")


def _tape_forward(weight_vars, bias_vars, activation, X, keep=False):
    A = X
    outputs = []
    last = len(weight_vars) - 1
    for l, (W, b) in enumerate(zip(weight_vars, bias_vars)):
        S = (A @ W) + b
        if l == last:
            A = S
        elif activation == "tanh":
            A = ad.tanh(S)
        elif activation == "sigmoid":
            A = ad.sigmoid(S)
        else:
            A = S
        if keep:
            outputs.append(A)
    return (A, outputs) if keep else A


def _tape_tangent(weight_vars, activation, layer_outputs, seed):
    """Tangent propagation reusing forward activations (last layer linear)."""
    tangent = seed
    last = len(weight_vars) - 1
    for l, W in enumerate(weight_vars):
        tangent = tangent @ W
        if l != last and activation != "linear":
            A = layer_outputs[l]
            if activation == "tanh":
                rate = ad.sub(1.0, A * A)
            else:
                rate = A * ad.sub(1.0, A)
            tangent = rate * tangent
    return tangent


def loss_and_gradients(
    params: MlpParams,
    coeffs: list[np.ndarray],
    batch: Batch,
    library: BasisLibrary,
    zdot_weight: float,
    udot_weight: float,
) -> tuple[float, dict[str, float], dict[str, np.ndarray]]:
    """Joint loss over a batch and its exact gradients.

    Returns (loss, parts, grads) where parts holds the unweighted components
    {"recon", "zdot", "udot"} and grads maps parameter names (including
    "xi.<pos>" for every sample present in the batch) to arrays.
    """
    if zdot_weight < 0 or udot_weight < 0:
        raise ValueError("loss weights must be non-negative")
    n_cols = len(batch.u)
    if n_cols == 0:
        raise ValueError("empty batch")

    # contiguous per-sample groups
    order = np.argsort(batch.sample_pos, kind="stable")
    U = np.asarray(batch.u, dtype=float)[order]
    U_dot = np.asarray(batch.u_dot, dtype=float)[order]
    pos_sorted = np.asarray(batch.sample_pos)[order]
    groups: list[tuple[int, int, int]] = []  # (sample_pos, start, stop)
    start = 0
    for i in range(1, n_cols + 1):
        if i == n_cols or pos_sorted[i] != pos_sorted[start]:
            groups.append((int(pos_sorted[start]), start, i))
            start = i

    enc_w = [ad.leaf(w) for w in params.enc_weights]
    enc_b = [ad.leaf(b) for b in params.enc_biases]
    dec_w = [ad.leaf(w) for w in params.dec_weights]
    dec_b = [ad.leaf(b) for b in params.dec_biases]
    xi_vars = {p: ad.leaf(coeffs[p]) for p, _, _ in groups}

    act = params.spec.activation
    X = ad.const(U)
    T = ad.const(U_dot)

    # encoder forward + tangent
    Z = X
    Zdot = T
    last = len(enc_w) - 1
    for l, (W, b) in enumerate(zip(enc_w, enc_b)):
        S = (Z @ W) + b
        if l == last:
            Z = S
            Zdot = Zdot @ W
        else:
            Z = ad.tanh(S) if act == "tanh" else (ad.sigmoid(S) if act == "sigmoid" else S)
            rate = ad.sub(1.0, Z * Z) if act == "tanh" else (
                Z * ad.sub(1.0, Z) if act == "sigmoid" else None
            )
            Zdot = Zdot @ W if rate is None else rate * (Zdot @ W)

    # decoder forward (keep hidden activations for the tangent pass)
    U_hat, dec_outputs = _tape_forward(dec_w, dec_b, act, Z, keep=True)

    # latent rates predicted by the local dynamics models
    theta = ad.poly_features(Z, library.exponents)
    pred_parts = [ad.rows(theta, a, b) @ xi_vars[p] for p, a, b in groups]
    Zdot_hat = ad.concat_rows(pred_parts) if len(pred_parts) > 1 else pred_parts[0]

    # state rates via the decoder tangent seeded with the predicted latent rates
    Udot_hat = _tape_tangent(dec_w, act, dec_outputs, Zdot_hat)

    loss_recon = ad.sum_squares(X - U_hat)
    loss_zdot = ad.sum_squares(Zdot - Zdot_hat)
    loss_udot = ad.sum_squares(T - Udot_hat)
    total = ad.add(
        ad.scale(loss_recon, 1.0 / n_cols),
        ad.add(
            ad.scale(loss_zdot, zdot_weight / n_cols),
            ad.scale(loss_udot, udot_weight / n_cols),
        ),
    )
    if not np.isfinite(total.value):
        raise NonFiniteLoss(f"loss became {total.value}")

    ad.backward(total)

    grads: dict[str, np.ndarray] = {}
    for l, (w, b) in enumerate(zip(enc_w, enc_b)):
        grads[f"enc.{l}.w"] = w.grad
        grads[f"enc.{l}.b"] = b.grad
    for l, (w, b) in enumerate(zip(dec_w, dec_b)):
        grads[f"dec.{l}.w"] = w.grad
        grads[f"dec.{l}.b"] = b.grad
    for p, var in xi_vars.items():
        grads[f"xi.{p}"] = var.grad
    parts = {
        "recon": loss_recon.value / n_cols,
        "zdot": loss_zdot.value / n_cols,
        "udot": loss_udot.value / n_cols,
    }
    return total.value, parts, grads


@dataclass
class AdamState:
    """Per-parameter first/second moments with individual step counters."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: dict[str, int] = field(default_factory=dict)


def adam_step(
    state: AdamState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]
) -> dict[str, np.ndarray]:
    """One bias-corrected Adam update, in place; parameters absent from
    `grads` are untouched. Returns `params`."""
    for key, g in grads.items():
        p = params[key]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != param shape {p.shape} for {key}")
        if key not in state.m:
            state.m[key] = np.zeros_like(p)
            state.v[key] = np.zeros_like(p)
            state.t[key] = 0
        state.t[key] += 1
        t = state.t[key]
        m = state.m[key]
        v = state.v[key]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        p -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return params
