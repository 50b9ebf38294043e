"""Evaluation metrics.

Per-class F1 with a confusion matrix, four confidence-derived uncertainty
measures normalized to [0, 1] per sample, KL divergence, and an exact
discrete earth-mover distance (linear program) with an independent 1-D
closed form used to cross-check it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .backend import K


@dataclass
class MetricsReport:
    precision: np.ndarray  # (K,)
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray  # (K,) true-label counts
    macro_f1: float
    average_accuracy: float  # unweighted mean of per-class recall
    confusion: np.ndarray  # (K, K), rows true, cols predicted
    empty_classes: list[int]  # zero support and zero predictions; F1 forced to 0


@dataclass
class Measure:
    sum: float
    mean: float


@dataclass
class UncertaintyReport:
    least_confidence: Measure
    margin_of_confidence: Measure
    ratio_of_confidence: Measure
    entropy: Measure
    n: int
    m: int


@dataclass
class TransportPlan:
    gamma: np.ndarray  # (m, m) non-negative flows between support points


def f1_report(predictions: np.ndarray, labels: np.ndarray, num_classes: int) -> MetricsReport:
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape:
        raise ValueError("predictions and labels must have the same length")
    k = num_classes
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (labels, predictions), 1)
    tp = np.diag(confusion).astype(np.float64)
    support = confusion.sum(axis=1)
    predicted = confusion.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(support > 0, tp / support, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2.0 * precision * recall / denom, 0.0)
    empty = [int(c) for c in range(k) if support[c] == 0 and predicted[c] == 0]
    return MetricsReport(
        precision=precision,
        recall=recall,
        f1=f1,
        support=support,
        macro_f1=float(f1.mean()),
        average_accuracy=float(recall.mean()),
        confusion=confusion,
        empty_classes=empty,
    )


def uncertainty_metrics(probs: np.ndarray) -> UncertaintyReport:
    """The four confidence measures, each 0 at a one-hot row and 1 at uniform.

    Least confidence is m(1 - y*)/(m - 1), margin is 1 - (y* - y**), ratio is
    y**/y*, entropy is the base-2 entropy over log2(m); y* and y** are the top
    two probabilities per row. Sums over rows and per-row means are both
    reported.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[1] < 2:
        raise ValueError("need an (n, m) probability matrix with m >= 2")
    if np.max(np.abs(probs.sum(axis=1) - 1.0)) > 1e-6:
        raise ValueError("probability rows must sum to 1 within 1e-6")
    n, m = probs.shape
    top2 = np.partition(probs, m - 2, axis=1)[:, -2:]
    second, best = top2[:, 0], top2[:, 1]

    lc = m * (1.0 - best) / (m - 1.0)
    margin = 1.0 - (best - second)
    ratio = second / best
    plogp = np.where(probs > 0.0, probs * np.log2(np.maximum(probs, 1e-300)), 0.0)
    entropy = -plogp.sum(axis=1) / np.log2(m)

    def measure(values):
        return Measure(sum=float(values.sum()), mean=float(values.mean()))

    return UncertaintyReport(
        least_confidence=measure(lc),
        margin_of_confidence=measure(margin),
        ratio_of_confidence=measure(ratio),
        entropy=measure(entropy),
        n=n,
        m=m,
    )


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) in nats over a shared discrete support."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("p and q must share a support")
    for name, dist in (("p", p), ("q", q)):
        if abs(dist.sum() - 1.0) > 1e-6 or np.any(dist < 0):
            raise ValueError(f"{name} is not a probability distribution")
    mask = p > 0
    if np.any(q[mask] == 0):
        raise ValueError("support violation: q is 0 where p has mass")
    value = float(np.sum(p[mask] * np.log(p[mask] / q[mask])))
    if -1e-12 < value < 0.0:
        value = 0.0
    return value


def emd_1d_cdf(p: np.ndarray, q: np.ndarray, positions: np.ndarray) -> float:
    """Closed-form 1-D earth mover distance: integral of |CDF_p - CDF_q|.

    Independent of the linear-program route; used as its oracle.
    """
    positions = np.asarray(positions, dtype=np.float64)
    delta = np.asarray(p, dtype=np.float64) - np.asarray(q, dtype=np.float64)
    order = np.argsort(positions, kind="stable")
    return float(K.cdf_integral(
        np.ascontiguousarray(positions[order]), np.ascontiguousarray(delta[order])
    ))


def emd_discrete(
    p: np.ndarray,
    q: np.ndarray,
    support: np.ndarray,
    metric: str = "euclidean",
) -> tuple[float, TransportPlan]:
    """Exact optimal-transport cost between two distributions on a shared
    finite support, solved as a linear program."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    support = np.asarray(support, dtype=np.float64)
    if support.ndim == 1:
        support = support[:, None]
    m = len(support)
    if p.shape != (m,) or q.shape != (m,):
        raise ValueError("p and q must give one mass per support point")
    for name, dist in (("p", p), ("q", q)):
        if abs(dist.sum() - 1.0) > 1e-6 or np.any(dist < 0):
            raise ValueError(f"{name} is not a probability distribution")
    if metric == "euclidean":
        cost = np.linalg.norm(support[:, None, :] - support[None, :, :], axis=2)
    elif metric == "sqeuclidean":
        cost = ((support[:, None, :] - support[None, :, :]) ** 2).sum(axis=2)
    else:
        raise ValueError(f"unknown metric {metric!r}")

    a_eq = np.zeros((2 * m, m * m))
    for i in range(m):
        a_eq[i, i * m:(i + 1) * m] = 1.0  # row sums = p
        a_eq[m + i, i::m] = 1.0  # column sums = q
    res = linprog(
        cost.ravel(), A_eq=a_eq, b_eq=np.concatenate([p, q]),
        bounds=(0, None), method="highs",
    )
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    plan = res.x.reshape(m, m)
    return float(res.fun), TransportPlan(plan)


def distribution_shift(
    real: np.ndarray,
    generated: np.ndarray,
    n_proj: int = 32,
    seed: int = 0,
) -> float:
    """Sliced 1-D earth-mover estimate between two point clouds.

    Projects both sets onto seeded random unit directions and averages the
    exact 1-D distances of the projected empirical distributions.
    """
    real = np.atleast_2d(np.asarray(real, dtype=np.float64))
    generated = np.atleast_2d(np.asarray(generated, dtype=np.float64))
    if len(real) == 0 or len(generated) == 0:
        raise ValueError("both point sets must be non-empty")
    if real.shape[1] != generated.shape[1]:
        raise ValueError("point sets must share a dimensionality")
    rng = np.random.default_rng(seed)
    d = real.shape[1]
    total = 0.0
    wr = np.full(len(real), 1.0 / len(real))
    wg = np.full(len(generated), -1.0 / len(generated))
    delta = np.concatenate([wr, wg])
    for _ in range(n_proj):
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        pos = np.concatenate([real @ u, generated @ u])
        order = np.argsort(pos, kind="stable")
        total += K.cdf_integral(
            np.ascontiguousarray(pos[order]), np.ascontiguousarray(delta[order])
        )
    return total / n_proj


def metrics_to_csv(report: MetricsReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("class,precision,recall,f1,support\n")
        for c in range(len(report.f1)):
            f.write(
                f"{c},{report.precision[c]!r},{report.recall[c]!r},"
                f"{report.f1[c]!r},{report.support[c]}\n"
            )
        f.write(f"macro,,,{report.macro_f1!r},{int(report.support.sum())}\n")
        f.write(f"average_accuracy,,,{report.average_accuracy!r},\n")


def metrics_to_text(report: MetricsReport) -> str:
    lines = ["class  precision  recall     f1         support"]
    for c in range(len(report.f1)):
        lines.append(
            f"{c:<6d} {report.precision[c]:<10.4f} {report.recall[c]:<10.4f} "
            f"{report.f1[c]:<10.4f} {report.support[c]}"
        )
    lines.append(f"macro-F1 {report.macro_f1:.4f}")
    lines.append(f"average accuracy {report.average_accuracy:.4f}")
    return "\n".join(lines) + "\n"


def uncertainty_to_csv(report: UncertaintyReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("measure,sum,mean\n")
        for name in ("least_confidence", "margin_of_confidence", "ratio_of_confidence", "entropy"):
            m: Measure = getattr(report, name)
            f.write(f"{name},{m.sum!r},{m.mean!r}\n")
