"""Persistence-gated mixture: gate, combined probabilities, loss, gradient.

A logistic gate ``alpha(z) = sigmoid(nu . (1, z))`` arbitrates between the
persistence expert (a point mass on the current label) and the
proportional-odds network expert:

    P(y_next = C_q | z) = alpha [[y_cur = C_q]] + (1 - alpha) p_net_q.

Training minimises (optionally class-weighted) cross-entropy over a
windowed dataset with an L2 penalty on every parameter; the analytic
gradient runs over the full joint vector ``s = (nu, kappa)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import WindowedDataset, WindowedPattern
from .nnpom import PROB_FLOOR, NnpomConfig, NnpomParams, class_probs, class_probs_batch, sigmoid


@dataclass
class MixtureParams:
    """Gate weight vector (bias first) plus the expert parameters."""

    gate_weights: np.ndarray  # (I+1,)
    expert: NnpomParams

    def __post_init__(self) -> None:
        if len(self.gate_weights) != self.expert.hidden_weights.shape[1]:
            raise ValueError("gate and expert disagree on input dimension")

    @property
    def config(self) -> NnpomConfig:
        return self.expert.config

    def to_vector(self) -> np.ndarray:
        """Flat layout: nu first, then the expert in its documented order."""
        return np.concatenate([self.gate_weights, self.expert.to_vector()])

    @classmethod
    def from_vector(cls, cfg: NnpomConfig, vec: np.ndarray) -> "MixtureParams":
        split = cfg.input_dim + 1
        return cls(
            gate_weights=vec[:split].copy(),
            expert=NnpomParams.from_vector(cfg, vec[split:]),
        )

    @property
    def num_params(self) -> int:
        return self.config.input_dim + 1 + self.config.num_params


def init_mixture_params(cfg: NnpomConfig, rng_seed: int) -> MixtureParams:
    """Seeded init; the gate draws from the same rng after the expert."""
    from .nnpom import init_params

    expert = init_params(cfg, rng_seed)
    rng = np.random.default_rng((rng_seed, 1))
    return MixtureParams(gate_weights=rng.uniform(-0.1, 0.1, size=cfg.input_dim + 1), expert=expert)


@dataclass(frozen=True)
class LossConfig:
    """Class weights, L2 coefficient and whether weighting is active."""

    class_weights: np.ndarray  # (Q,)
    lam: float = 0.0
    weighted: bool = False

    @classmethod
    def for_dataset(cls, ds: WindowedDataset, weighted: bool, lam: float) -> "LossConfig":
        """Weights ``o_q = 1 - N_q / N`` from the given training split."""
        if weighted:
            counts = np.bincount(ds.targets, minlength=ds.num_classes + 1)[1:]
            weights = 1.0 - counts / len(ds)
        else:
            weights = np.ones(ds.num_classes)
        return cls(class_weights=weights, lam=lam, weighted=weighted)

    @classmethod
    def unweighted(cls, num_classes: int, lam: float = 0.0) -> "LossConfig":
        return cls(class_weights=np.ones(num_classes), lam=lam, weighted=False)


def gate(z: np.ndarray, nu: np.ndarray) -> float:
    """Gate activation sigmoid(nu . (1, z)); the persistence weight."""
    z = np.asarray(z, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    if len(nu) != len(z) + 1:
        raise ValueError(f"gate expects {len(z) + 1} weights, got {len(nu)}")
    return float(sigmoid(nu[0] + nu[1:] @ z))


def mixture_probs(pattern: WindowedPattern, params: MixtureParams) -> np.ndarray:
    """Combined per-class probabilities for one pattern."""
    alpha = gate(pattern.z, params.gate_weights)
    p_net = class_probs(pattern.z, params.expert)
    probs = (1.0 - alpha) * p_net
    probs[pattern.current_label - 1] += alpha
    return probs


def predict(pattern: WindowedPattern, params: MixtureParams) -> int:
    """MAP rank; ties resolve to the lowest class index."""
    return int(np.argmax(mixture_probs(pattern, params))) + 1


def _kernel_args(ds: WindowedDataset, cfg: LossConfig):
    return (
        ds.z_with_bias,
        np.ascontiguousarray(ds.current - 1),
        np.ascontiguousarray(ds.targets - 1),
        np.ascontiguousarray(cfg.class_weights, dtype=np.float64),
        cfg.lam,
    )


def loss(ds: WindowedDataset, params: MixtureParams, cfg: LossConfig) -> float:
    value, _ = loss_and_gradient(ds, params, cfg)
    return value


def loss_gradient(ds: WindowedDataset, params: MixtureParams, cfg: LossConfig) -> np.ndarray:
    _, grad = loss_and_gradient(ds, params, cfg)
    return grad


def loss_and_gradient(
    ds: WindowedDataset, params: MixtureParams, cfg: LossConfig
) -> tuple[float, np.ndarray]:
    z1, cur, tgt, weights, lam = _kernel_args(ds, cfg)
    vec = np.ascontiguousarray(params.to_vector())
    model_cfg = params.config
    return _kernels.mixture_loss_grad(
        z1, cur, tgt, vec, model_cfg.hidden_units, model_cfg.num_classes, weights, lam, True
    )


def make_objective(ds: WindowedDataset, model_cfg: NnpomConfig, cfg: LossConfig, has_gate: bool = True):
    """Objective closure over the flat parameter vector for the optimizer."""
    z1, cur, tgt, weights, lam = _kernel_args(ds, cfg)

    def objective(vec: np.ndarray) -> tuple[float, np.ndarray]:
        return _kernels.mixture_loss_grad(
            np.ascontiguousarray(z1),
            cur,
            tgt,
            np.ascontiguousarray(vec),
            model_cfg.hidden_units,
            model_cfg.num_classes,
            weights,
            lam,
            has_gate,
        )

    return objective


def mixture_probs_batch(ds: WindowedDataset, params: MixtureParams) -> np.ndarray:
    """(N, Q) combined probabilities for every pattern in the dataset."""
    alpha = sigmoid(ds.z_with_bias @ params.gate_weights)
    probs = (1.0 - alpha)[:, None] * class_probs_batch(ds.z_with_bias, params.expert)
    probs[np.arange(len(ds)), ds.current - 1] += alpha
    return probs


def gate_batch(ds: WindowedDataset, params: MixtureParams) -> np.ndarray:
    return sigmoid(ds.z_with_bias @ params.gate_weights)


def predict_batch(ds: WindowedDataset, params: MixtureParams) -> np.ndarray:
    """1-based MAP ranks for every pattern."""
    return np.argmax(mixture_probs_batch(ds, params), axis=1) + 1
