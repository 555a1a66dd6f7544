"""Central finite-difference verification of the analytic derivatives.

Two suites: per-class probability Jacobians of the network expert, and the
full mixture loss gradient over random small datasets.  A component passes
when it matches the symmetric difference quotient within a relative
tolerance, or absolutely when both values sit near zero.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import mixture, nnpom
from .core import OrdinalScale, Standardization, WindowedDataset

FD_STEP = 1e-6
REL_TOL = 1e-5
ABS_TOL = 1e-8
# Below this magnitude the relative error is meaningless; compare absolutely.
NEAR_ZERO = 1e-6


@dataclass
class GradCheckResult:
    trials: int
    worst_rel: float
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def random_dataset(rng: np.random.Generator, n: int, delta: int, num_classes: int, feature_dim: int = 3) -> WindowedDataset:
    """Synthetic windowed dataset with gaussian features and random ranks."""
    width = (delta + 1) * (feature_dim + num_classes)
    z = rng.standard_normal((n, width))
    current = rng.integers(1, num_classes + 1, size=n)
    targets = rng.integers(1, num_classes + 1, size=n)
    stats = Standardization(mean=np.zeros(width), std=np.ones(width))
    return WindowedDataset(
        z, current, targets, np.arange(n), OrdinalScale.identity(num_classes), delta, 1, stats
    )


def _compare(analytic: np.ndarray, numeric: np.ndarray, label: str, failures: list[str]) -> float:
    worst = 0.0
    for idx, (a, f) in enumerate(zip(np.ravel(analytic), np.ravel(numeric))):
        scale = max(abs(a), abs(f))
        if scale < NEAR_ZERO:
            if abs(a - f) > ABS_TOL:
                failures.append(f"{label}[{idx}]: |{a} - {f}| > {ABS_TOL}")
            continue
        rel = abs(a - f) / scale
        worst = max(worst, rel)
        if rel > REL_TOL:
            failures.append(f"{label}[{idx}]: relative error {rel:.3e}")
    return worst


def reference_probs_extended(z: np.ndarray, vec: np.ndarray, cfg: nnpom.NnpomConfig) -> np.ndarray:
    """Class probabilities recomputed term by term in extended precision."""
    ld = np.longdouble
    s = np.asarray(vec, dtype=ld)
    i1 = cfg.input_dim + 1
    m = cfg.hidden_units
    w_mat = s[: m * i1].reshape(m, i1)
    beta = s[m * i1 : m * i1 + m]
    b1 = s[m * i1 + m]
    pads = s[m * i1 + m + 1 :]
    th = b1 + np.concatenate(([ld(0)], np.cumsum(pads * pads)))
    z1 = np.concatenate(([ld(1)], z.astype(ld)))

    def sig(x):
        return 1 / (1 + np.exp(-np.clip(x, -500, 500)))

    latent = sig(w_mat @ z1) @ beta
    cum = sig(th - latent)
    probs = np.empty(cfg.num_classes, dtype=ld)
    probs[0] = cum[0]
    probs[1 : cfg.num_classes - 1] = cum[1:] - cum[:-1]
    probs[cfg.num_classes - 1] = 1 - cum[-1]
    return probs


def check_expert_jacobian(rng: np.random.Generator, failures: list[str], corrupt: bool = False) -> float:
    num_classes = int(rng.integers(2, 5))
    hidden = int(rng.choice([1, 5, 25]))
    input_dim = int(rng.integers(2, 8))
    cfg = nnpom.NnpomConfig(input_dim, hidden, num_classes)
    params = nnpom.init_params(cfg, int(rng.integers(0, 2**31)))
    params.hidden_weights = rng.normal(scale=0.8, size=params.hidden_weights.shape)
    params.output_weights = rng.normal(scale=0.8, size=params.output_weights.shape)
    params.first_threshold = float(rng.normal())
    z = rng.standard_normal(input_dim)

    analytic = nnpom.prob_gradients(z, params)
    if corrupt:
        analytic = analytic + 1e-3
    vec = params.to_vector()
    step = np.longdouble(FD_STEP)
    numeric = np.empty_like(analytic)
    for i in range(vec.size):
        hi, lo = vec.astype(np.longdouble), vec.astype(np.longdouble)
        hi[i] += step
        lo[i] -= step
        p_hi = reference_probs_extended(z, hi, cfg)
        p_lo = reference_probs_extended(z, lo, cfg)
        numeric[:, i] = ((p_hi - p_lo) / (2 * step)).astype(np.float64)
    return _compare(analytic, numeric, f"expert_jacobian(Q={num_classes},M={hidden})", failures)


def reference_loss_extended(
    ds: WindowedDataset,
    vec: np.ndarray,
    hidden_units: int,
    class_weights: np.ndarray,
    lam: float,
    has_gate: bool,
) -> np.longdouble:
    """Term-by-term mixture loss in extended precision.

    Independent of the kernels; keeps the finite-difference quotient at
    step 1e-6 free of double-precision cancellation noise.
    """
    ld = np.longdouble
    q_count = ds.num_classes
    z1 = ds.z_with_bias.astype(ld)
    s = np.asarray(vec, dtype=ld)
    weights = np.asarray(class_weights, dtype=ld)
    i1 = z1.shape[1]
    off = i1 if has_gate else 0
    w_mat = s[off : off + hidden_units * i1].reshape(hidden_units, i1)
    beta = s[off + hidden_units * i1 : off + hidden_units * i1 + hidden_units]
    b1 = s[off + hidden_units * i1 + hidden_units]
    pads = s[off + hidden_units * i1 + hidden_units + 1 :]
    th = b1 + np.concatenate(([ld(0)], np.cumsum(pads * pads)))

    def sig(x):
        return 1 / (1 + np.exp(-np.clip(x, -500, 500)))

    latent = sig(z1 @ w_mat.T) @ beta
    total = ld(0)
    for n in range(len(ds)):
        q = int(ds.targets[n]) - 1
        k_hi = sig(th[q] - latent[n]) if q <= q_count - 2 else ld(1)
        k_lo = sig(th[q - 1] - latent[n]) if q >= 1 else ld(0)
        prob = k_hi - k_lo
        if has_gate:
            alpha = sig(z1[n] @ s[:i1])
            stay = ld(1) if ds.current[n] == ds.targets[n] else ld(0)
            prob = alpha * stay + (1 - alpha) * prob
        total += weights[q] * np.log(max(prob, ld(1e-12)))
    return -total / len(ds) + lam * np.dot(s, s)


def check_mixture_gradient(rng: np.random.Generator, failures: list[str], corrupt: bool = False) -> float:
    num_classes = int(rng.integers(2, 5))
    hidden = int(rng.choice([1, 5]))
    delta = int(rng.choice([0, 1, 3]))
    ds = random_dataset(rng, n=int(rng.integers(6, 16)), delta=delta, num_classes=num_classes)
    cfg = nnpom.NnpomConfig(ds.input_dim, hidden, num_classes)
    params = mixture.init_mixture_params(cfg, int(rng.integers(0, 2**31)))
    vec = params.to_vector() + rng.normal(scale=0.3, size=params.num_params)
    loss_cfg = mixture.LossConfig(
        class_weights=rng.uniform(0.2, 1.0, size=num_classes),
        lam=float(rng.choice([0.0, 0.001])),
        weighted=True,
    )
    objective = mixture.make_objective(ds, cfg, loss_cfg, has_gate=True)

    _, analytic = objective(vec)
    if corrupt:
        analytic = analytic + 1e-3
    step = np.longdouble(FD_STEP)
    numeric = np.empty_like(analytic)
    for i in range(vec.size):
        hi, lo = vec.astype(np.longdouble), vec.astype(np.longdouble)
        hi[i] += step
        lo[i] -= step
        f_hi = reference_loss_extended(ds, hi, hidden, loss_cfg.class_weights, loss_cfg.lam, True)
        f_lo = reference_loss_extended(ds, lo, hidden, loss_cfg.class_weights, loss_cfg.lam, True)
        numeric[i] = float((f_hi - f_lo) / (2 * step))
    return _compare(analytic, numeric, f"mixture_grad(Q={num_classes},M={hidden},D={delta})", failures)


def check_gradients(seed: int = 0, trials: int = 20, corrupt: bool = False) -> GradCheckResult:
    """Run both suites ``trials`` times each; deterministic per seed."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    failures: list[str] = []
    worst = 0.0
    for _ in range(trials):
        worst = max(worst, check_expert_jacobian(rng, failures, corrupt))
        worst = max(worst, check_mixture_gradient(rng, failures, corrupt))
    return GradCheckResult(trials=trials, worst_rel=worst, failures=failures)
