"""Proportional-odds network expert and its linear (POM) variant.

The expert projects a pattern ``z`` to a scalar latent value through one
hidden layer of logistic units, ``f = sum_j beta_j * sigmoid(w_j . (1, z))``,
and cuts the latent axis at monotone thresholds ``b_1 <= ... <= b_{Q-1}``.
Monotonicity is structural: ``b_q = b_1 + sum_{j<=q} a_j**2`` with free
padding variables ``a_j``, so unconstrained optimizers apply.

Class probabilities come from cumulative logistics,

    P(y <= C_q) = sigmoid(b_q - f),

so ``p_1 = sigmoid(b_1 - f)``, interior classes take differences of
consecutive cumulatives and ``p_Q`` the upper remainder.  Larger latent
values favour higher ranks.

POM is the same probability head with a purely linear latent
``f = theta . (1, z)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Beyond this magnitude the logistic saturates exactly in double precision.
SIGMOID_CLAMP = 500.0

PROB_FLOOR = 1e-12


def sigmoid(x):
    """Logistic function with argument clamping against exp overflow."""
    return 1.0 / (1.0 + np.exp(-np.clip(x, -SIGMOID_CLAMP, SIGMOID_CLAMP)))


@dataclass(frozen=True)
class NnpomConfig:
    input_dim: int
    hidden_units: int
    num_classes: int

    def __post_init__(self) -> None:
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if self.hidden_units < 1:
            raise ValueError("hidden_units must be >= 1")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")

    @property
    def num_params(self) -> int:
        return self.hidden_units * (self.input_dim + 1) + self.hidden_units + 1 + (self.num_classes - 2)


@dataclass
class NnpomParams:
    """Expert parameters: hidden weights (bias first column), output
    weights, first threshold and threshold paddings."""

    hidden_weights: np.ndarray  # (M, I+1)
    output_weights: np.ndarray  # (M,)
    first_threshold: float
    paddings: np.ndarray  # (Q-2,)

    @property
    def config(self) -> NnpomConfig:
        m, i1 = self.hidden_weights.shape
        return NnpomConfig(input_dim=i1 - 1, hidden_units=m, num_classes=len(self.paddings) + 2)

    def thresholds(self) -> np.ndarray:
        """Derived cut points b_1..b_{Q-1}, non-decreasing by construction."""
        return self.first_threshold + np.concatenate(([0.0], np.cumsum(self.paddings**2)))

    def to_vector(self) -> np.ndarray:
        """Flatten as W row-major, then beta, then b_1, then paddings."""
        return np.concatenate(
            [self.hidden_weights.ravel(), self.output_weights, [self.first_threshold], self.paddings]
        )

    @classmethod
    def from_vector(cls, cfg: NnpomConfig, vec: np.ndarray) -> "NnpomParams":
        if vec.shape != (cfg.num_params,):
            raise ValueError(f"expected {cfg.num_params} parameters, got {vec.shape}")
        m, i1 = cfg.hidden_units, cfg.input_dim + 1
        w_end = m * i1
        return cls(
            hidden_weights=vec[:w_end].reshape(m, i1).copy(),
            output_weights=vec[w_end : w_end + m].copy(),
            first_threshold=float(vec[w_end + m]),
            paddings=vec[w_end + m + 1 :].copy(),
        )


def init_params(cfg: NnpomConfig, rng_seed: int) -> NnpomParams:
    """Seeded init: small uniform weights, b_1 = 0, paddings in [0.1, 1.1].

    Paddings start away from zero so all thresholds are distinct; weights
    are small enough that no hidden unit starts saturated.
    """
    rng = np.random.default_rng(rng_seed)
    return NnpomParams(
        hidden_weights=rng.uniform(-0.1, 0.1, size=(cfg.hidden_units, cfg.input_dim + 1)),
        output_weights=rng.uniform(-0.1, 0.1, size=cfg.hidden_units),
        first_threshold=0.0,
        paddings=rng.uniform(0.1, 1.1, size=cfg.num_classes - 2),
    )


def _check_dim(z: np.ndarray, input_dim: int) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (input_dim,):
        raise ValueError(f"pattern has dimension {z.shape}, expected ({input_dim},)")
    return z


def latent(z: np.ndarray, params: NnpomParams) -> float:
    z = _check_dim(z, params.hidden_weights.shape[1] - 1)
    z1 = np.concatenate(([1.0], z))
    basis = sigmoid(params.hidden_weights @ z1)
    return float(params.output_weights @ basis)


def ordinal_probs(latent_value, thresholds: np.ndarray) -> np.ndarray:
    """Per-class probabilities from latent value(s) and cut points.

    Accepts a scalar latent or a batch of shape (N,); returns (Q,) or
    (N, Q).  Shifting the latent and every threshold by the same constant
    leaves the output unchanged.
    """
    f = np.atleast_1d(np.asarray(latent_value, dtype=np.float64))
    cum = sigmoid(thresholds[None, :] - f[:, None])  # (N, Q-1)
    n, qm1 = cum.shape
    probs = np.empty((n, qm1 + 1))
    probs[:, 0] = cum[:, 0]
    probs[:, 1:qm1] = cum[:, 1:] - cum[:, :-1]
    probs[:, qm1] = 1.0 - cum[:, -1]
    return probs[0] if np.isscalar(latent_value) or np.asarray(latent_value).ndim == 0 else probs


def class_probs(z: np.ndarray, params: NnpomParams) -> np.ndarray:
    """Probability of each rank for one pattern; sums to 1."""
    return ordinal_probs(latent(z, params), params.thresholds())


def prob_gradients(z: np.ndarray, params: NnpomParams) -> np.ndarray:
    """Jacobian of the class probabilities w.r.t. the flat parameter vector.

    Returns a (Q, S) matrix in ``to_vector`` order.  With
    ``u_q = b_q - f`` and ``K_q = sigmoid(u_q)``:

        dp_1/ds = K_1' du_1/ds
        dp_q/ds = K_q' du_q/ds - K_{q-1}' du_{q-1}/ds      (1 < q < Q)
        dp_Q/ds = -K_{Q-1}' du_{Q-1}/ds

    where du_q/ds is -df/ds for latent parameters, +1 for b_1 and
    ``2 a_j [j <= q]`` for padding a_j.
    """
    cfg = params.config
    z = _check_dim(z, cfg.input_dim)
    z1 = np.concatenate(([1.0], z))
    pre = params.hidden_weights @ z1
    basis = sigmoid(pre)
    f = float(params.output_weights @ basis)
    th = params.thresholds()
    q_count = cfg.num_classes

    cum = sigmoid(th - f)
    cum_prime = cum * (1.0 - cum)  # (Q-1,)

    # df/ds over latent parameters, flat [W row-major, beta].
    df_dw = (params.output_weights * basis * (1.0 - basis))[:, None] * z1[None, :]
    df_dlatent = np.concatenate([df_dw.ravel(), basis])

    # du_q/ds for every threshold index q (rows) and parameter (cols).
    n_latent = df_dlatent.size
    du = np.zeros((q_count - 1, cfg.num_params))
    du[:, :n_latent] = -df_dlatent[None, :]
    du[:, n_latent] = 1.0
    for j_idx in range(q_count - 2):  # padding a_j, 1-based j = j_idx + 2
        du[j_idx + 1 :, n_latent + 1 + j_idx] = 2.0 * params.paddings[j_idx]

    dcum = cum_prime[:, None] * du  # (Q-1, S)
    grads = np.empty((q_count, cfg.num_params))
    grads[0] = dcum[0]
    grads[1 : q_count - 1] = dcum[1:] - dcum[:-1]
    grads[q_count - 1] = -dcum[-1]
    return grads


# ---------------------------------------------------------------------------
# Linear latent variant (POM)
# ---------------------------------------------------------------------------


@dataclass
class PomParams:
    """Proportional odds model: linear latent, shared threshold head."""

    weights: np.ndarray  # (I+1,), bias first
    first_threshold: float
    paddings: np.ndarray  # (Q-2,)

    @property
    def num_classes(self) -> int:
        return len(self.paddings) + 2

    @property
    def input_dim(self) -> int:
        return len(self.weights) - 1

    def thresholds(self) -> np.ndarray:
        return self.first_threshold + np.concatenate(([0.0], np.cumsum(self.paddings**2)))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.weights, [self.first_threshold], self.paddings])

    @classmethod
    def from_vector(cls, input_dim: int, num_classes: int, vec: np.ndarray) -> "PomParams":
        expected = input_dim + 1 + 1 + (num_classes - 2)
        if vec.shape != (expected,):
            raise ValueError(f"expected {expected} parameters, got {vec.shape}")
        return cls(
            weights=vec[: input_dim + 1].copy(),
            first_threshold=float(vec[input_dim + 1]),
            paddings=vec[input_dim + 2 :].copy(),
        )


def init_pom_params(input_dim: int, num_classes: int, rng_seed: int) -> PomParams:
    rng = np.random.default_rng(rng_seed)
    return PomParams(
        weights=rng.uniform(-0.1, 0.1, size=input_dim + 1),
        first_threshold=0.0,
        paddings=rng.uniform(0.1, 1.1, size=num_classes - 2),
    )


def pom_latent(z: np.ndarray, params: PomParams) -> float:
    z = _check_dim(z, params.input_dim)
    return float(params.weights[0] + params.weights[1:] @ z)


def pom_class_probs(z: np.ndarray, params: PomParams) -> np.ndarray:
    return ordinal_probs(pom_latent(z, params), params.thresholds())


def pom_loss_grad(
    z1: np.ndarray,
    tgt: np.ndarray,
    vec: np.ndarray,
    num_classes: int,
    class_weights: np.ndarray,
    lam: float,
) -> tuple[float, np.ndarray]:
    """Cross-entropy and gradient for the linear-latent model.

    Same clamping conventions as the mixture kernels; ``tgt`` is 0-based.
    Vector layout: [theta (I+1), b_1, a_2..a_{Q-1}].
    """
    n, i1 = z1.shape
    theta = vec[:i1]
    b1 = vec[i1]
    pads = vec[i1 + 1 :]
    th = b1 + np.concatenate(([0.0], np.cumsum(pads**2)))

    f = z1 @ theta
    cum = sigmoid(th[None, :] - f[:, None])
    rows = np.arange(n)
    has_hi = tgt <= num_classes - 2
    has_lo = tgt >= 1
    k_hi = np.where(has_hi, cum[rows, np.minimum(tgt, num_classes - 2)], 1.0)
    k_lo = np.where(has_lo, cum[rows, np.maximum(tgt - 1, 0)], 0.0)
    p_net = k_hi - k_lo
    s_hi = k_hi * (1.0 - k_hi)
    s_lo = k_lo * (1.0 - k_lo)

    p_floor = np.maximum(p_net, PROB_FLOOR)
    o_t = class_weights[tgt]
    loss = -np.sum(o_t * np.log(p_floor)) / n + lam * float(vec @ vec)

    factor = o_t / p_floor
    gap = s_hi - s_lo
    lat = factor * gap
    grad = np.empty_like(vec)
    grad[:i1] = (z1.T @ lat) / n
    grad[i1] = -np.sum(lat) / n
    for j_idx in range(num_classes - 2):
        j = j_idx + 2
        val = np.where(tgt >= j, gap, np.where(tgt == j - 1, s_hi, 0.0))
        grad[i1 + 1 + j_idx] = -2.0 * pads[j_idx] * np.sum(factor * val) / n
    grad += 2.0 * lam * vec
    return float(loss), grad


# ---------------------------------------------------------------------------
# Batched evaluation (prediction paths)
# ---------------------------------------------------------------------------


def latent_batch(z1: np.ndarray, params: NnpomParams) -> np.ndarray:
    """Latent values for a (N, I+1) bias-augmented pattern matrix."""
    return sigmoid(z1 @ params.hidden_weights.T) @ params.output_weights


def class_probs_batch(z1: np.ndarray, params: NnpomParams) -> np.ndarray:
    return ordinal_probs(latent_batch(z1, params), params.thresholds())


def pom_class_probs_batch(z1: np.ndarray, params: PomParams) -> np.ndarray:
    return ordinal_probs(z1 @ params.weights, params.thresholds())
