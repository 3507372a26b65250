"""Decoder-side unbiased mean estimation and Monte Carlo risk evaluation.

The estimator averages inverse-probability-weighted subsampled supports:
each node's decoded support is divided by its subsampling fraction
(kprime / count when the original count exceeded kprime, else 1), which
makes the average unbiased for the mean parameter.  Components are not
clipped into the parameter range by default, since clipping would trade
the unbiasedness away.

Risk is evaluated by Monte Carlo over full sample-encode-decode-estimate
rounds, and reference curves for the achievable and unavoidable risk are
provided as closed-form bounds with explicit validity regimes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .codec import CodecConfig, SubsampledObservation, ceil_log2, decode_batch, encode_batch
from .model import (
    PLAIN,
    SCALED,
    SIGNED,
    ParamVector,
    UniformPerturbation,
)
from .seeding import substream


class DegenerateCodec(ValueError):
    """The codec cannot carry any support index (kprime == 0)."""


class EmptyInput(ValueError):
    """No decoded observations were supplied."""


def subsample_fraction(original_count: int, kprime: int) -> float:
    """Fraction of ones that survived subsampling; 1 when none was needed.

    A zero count vacuously maps to 1 (nothing was dropped).
    """
    if original_count < 0:
        raise ValueError("count must be nonnegative")
    if kprime < 1:
        raise ValueError("kprime must be >= 1")
    if original_count > kprime:
        return kprime / original_count
    return 1.0


def estimate(
    decoded: Sequence[SubsampledObservation],
    cfg: CodecConfig,
    variant: str = PLAIN,
    scale: float = 1.0,
    clip: bool = False,
) -> np.ndarray:
    """Average the inverse-weighted decoded supports into a mean estimate.

    For the signed variant each decoded observation must carry signs; for
    the scaled variant the result is multiplied by ``scale``.  With
    ``clip=True`` the estimate is clamped into the parameter range after
    averaging (off by default; it biases the estimator).
    """
    if cfg.degenerate:
        raise DegenerateCodec("config has kprime=0; no support survives encoding")
    if len(decoded) == 0:
        raise EmptyInput("need at least one decoded observation")
    acc = np.zeros(cfg.d)
    for sub in decoded:
        if sub.d != cfg.d:
            raise ValueError("decoded observations disagree on dimension")
        frac = subsample_fraction(sub.original_count, cfg.kprime)
        if sub.support.size:
            if variant == SIGNED:
                if sub.signs is None:
                    raise ValueError("signed estimation requires per-support signs")
                acc[sub.support] += sub.signs / frac
            else:
                acc[sub.support] += 1.0 / frac
    theta_hat = acc / len(decoded)
    if variant == SCALED:
        theta_hat *= scale
    if clip:
        lo = -scale if variant == SIGNED else 0.0
        hi = scale if variant == SCALED else 1.0
        if variant == SIGNED:
            lo, hi = -1.0, 1.0
        theta_hat = np.clip(theta_hat, lo, hi)
    return theta_hat


def hardest_param(d: int, s: float) -> ParamVector:
    """The flat vector theta_j = s/d, the default worst-case risk probe."""
    if s > d / 2:
        raise ValueError(f"s={s} must be at most d/2={d / 2}")
    return ParamVector(np.full(d, s / d), s=float(s))


@dataclass(frozen=True)
class RiskEstimate:
    """Monte Carlo estimate of E||theta_hat - theta||^2 with its std error."""

    mean_sq_error: float
    std_error: float
    trials: int
    n: int
    d: int
    s: float
    k: int


def monte_carlo_risk(
    theta: ParamVector,
    n: int,
    cfg: CodecConfig,
    trials: int,
    perturb: Optional[UniformPerturbation] = None,
    seed: int = 0,
) -> RiskEstimate:
    """Estimate the squared-error risk of the full pipeline.

    Each trial samples n observations, optionally perturbs and re-quantizes
    them, encodes and decodes every node's transcript, forms the estimate,
    and records ``||theta_hat - target||^2``.  Trials draw from independent
    substreams of ``seed``, so results are reproducible and independent of
    any parallel execution order.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials")
    if n < 1:
        raise ValueError("need at least one node")
    if cfg.degenerate:
        raise DegenerateCodec("config has kprime=0; estimation is impossible")
    if theta.d != cfg.d:
        raise ValueError("theta and config disagree on dimension")
    p = theta.probabilities()
    sign_vec = np.where(theta.values < 0, -1.0, 1.0)
    target = theta.estimand()
    out_scale = theta.scale if theta.variant == SCALED else 1.0
    kp = cfg.kprime

    mean = 0.0
    m2 = 0.0
    for t in range(trials):
        rng = substream(seed, t)
        x = (rng.random((n, cfg.d)) < p).astype(np.int8)
        if theta.variant == SIGNED:
            signs = np.broadcast_to(sign_vec, x.shape)
        else:
            signs = None
        if perturb is not None:
            noise = rng.uniform(-perturb.halfwidth, perturb.halfwidth, x.shape)
            if signs is not None:
                y = x * signs + noise
                signs = np.where(y < 0, -1.0, 1.0)
            else:
                y = x + noise
            x = (np.abs(y) > 0.5).astype(np.int8)
        counts, payloads, _ = encode_batch(x, cfg, rng)
        mask = decode_batch(counts, payloads, cfg)
        weights = np.where(counts > kp, counts / kp, 1.0)
        contrib = mask * weights[:, None]
        if signs is not None:
            contrib = contrib * signs
        theta_hat = contrib.mean(axis=0) * out_scale
        err = float(np.sum((theta_hat - target) ** 2))
        delta = err - mean
        mean += delta / (t + 1)
        m2 += delta * (err - mean)
    std_error = math.sqrt(m2 / (trials - 1) / trials) if trials > 1 else 0.0
    return RiskEstimate(
        mean_sq_error=mean,
        std_error=std_error,
        trials=trials,
        n=n,
        d=cfg.d,
        s=float(theta.s),
        k=cfg.k,
    )


def monte_carlo_mean(
    theta: ParamVector,
    n: int,
    cfg: CodecConfig,
    trials: int,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Componentwise Monte Carlo mean of the estimate and its std error.

    Runs the same sample-encode-decode-estimate pipeline as
    :func:`monte_carlo_risk` but aggregates the estimate vector itself;
    used to check unbiasedness (the mean must approach the estimand).
    """
    if trials < 2:
        raise ValueError("need at least 2 trials")
    if cfg.degenerate:
        raise DegenerateCodec("config has kprime=0; estimation is impossible")
    if theta.d != cfg.d:
        raise ValueError("theta and config disagree on dimension")
    p = theta.probabilities()
    sign_vec = np.where(theta.values < 0, -1.0, 1.0)
    out_scale = theta.scale if theta.variant == SCALED else 1.0
    kp = cfg.kprime
    total = np.zeros(cfg.d)
    total_sq = np.zeros(cfg.d)
    for t in range(trials):
        rng = substream(seed, t)
        x = (rng.random((n, cfg.d)) < p).astype(np.int8)
        counts, payloads, _ = encode_batch(x, cfg, rng)
        mask = decode_batch(counts, payloads, cfg)
        weights = np.where(counts > kp, counts / kp, 1.0)
        contrib = mask * weights[:, None]
        if theta.variant == SIGNED:
            contrib = contrib * sign_vec
        theta_hat = contrib.mean(axis=0) * out_scale
        total += theta_hat
        total_sq += theta_hat * theta_hat
    mean = total / trials
    var = np.maximum(total_sq / trials - mean * mean, 0.0)
    return mean, np.sqrt(var / trials)


UPPER_ACHIEVABLE = "upper_achievable"
LOWER_MINIMAX = "lower_minimax"
CENTRALIZED = "centralized"

_BOUND_KINDS = (UPPER_ACHIEVABLE, LOWER_MINIMAX, CENTRALIZED)


@dataclass(frozen=True)
class BoundCurve:
    """A reference risk curve with a user-supplied leading constant."""

    kind: str
    constant: float = 1.0

    def __post_init__(self):
        if self.kind not in _BOUND_KINDS:
            raise ValueError(f"unknown bound kind {self.kind!r}")
        if not self.constant > 0:
            raise ValueError("constant must be positive")


@dataclass(frozen=True)
class OutOfRegime:
    """Marker result: the curve's validity hypothesis failed."""

    reason: str


def bound_value(
    curve: BoundCurve,
    n: int,
    k: int,
    d: int,
    s: float,
    theta: Optional[ParamVector] = None,
) -> Union[float, OutOfRegime]:
    """Evaluate a reference curve, or report which hypothesis fails.

    The achievable upper curve is ``constant * s^2 * log2(d) / (n k)``,
    valid when the budget covers roughly two index descriptions but not
    the whole support: ``2 * ceil(log2(d+1)) <= k <= s * ceil(log2(d+1))``
    (the count-header log convention, which also guarantees a
    non-degenerate codec at the lower edge).  The minimax lower curve is
    ``constant * max(s^2 log2(d/s) / (n k), s / n)``, valid for
    ``n k >= d log2(d/s)`` and ``s <= d/2``.  The centralized curve is
    ``sum theta_j (1 - theta_j) / n`` for a concrete theta.
    """
    if curve.kind == CENTRALIZED:
        if theta is None:
            raise ValueError("centralized curve needs a concrete theta")
        pr = theta.probabilities()
        scale_sq = theta.scale**2 if theta.variant == SCALED else 1.0
        return curve.constant * scale_sq * float(np.sum(pr * (1.0 - pr))) / n
    log_header = ceil_log2(d + 1)
    if curve.kind == UPPER_ACHIEVABLE:
        if k < 2 * log_header:
            return OutOfRegime(f"k={k} < 2*ceil(log2(d+1))={2 * log_header}")
        if k > s * log_header:
            return OutOfRegime(f"k={k} > s*ceil(log2(d+1))={s * log_header:g}")
        return curve.constant * s * s * math.log2(d) / (n * k)
    # lower minimax curve
    if s > d / 2:
        return OutOfRegime(f"s={s:g} > d/2={d / 2:g}")
    needed = d * math.log2(d / s)
    if n * k < needed:
        return OutOfRegime(f"n*k={n * k} < d*log2(d/s)={needed:g}")
    return curve.constant * max(s * s * math.log2(d / s) / (n * k), s / n)
