"""Adversarial training of the hull-constrained generator.

One outer iteration runs: a feature-extractor descent step on the classifier
loss (classifier frozen), then j inner rounds where the classifier and critic
ascend their prior-weighted objectives on real and generated batches, and the
generator takes two adversarial steps — descending the classifier objective
on its own samples and ascending the prior-weighted critic score. Minority
labels for the first generated batch are drawn proportionally to the prior
gap to the majority class, and uniformly over minorities for the generator
steps.

Baseline trainers (plain classifier, unconditional GAN, label-conditioned
GAN) and generator-driven dataset rebalancing live here too.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from .data import ClassPriors, Dataset, class_priors
from .hull import hull_contains
from .models import (
    CGanModel,
    GeneratorParams,
    HullGanModel,
    PlainModel,
    VanillaGanModel,
    autoencoder_pretrain,
    build_bank,
    classify,
    extract_features,
    generator_backward,
    generator_forward,
    init_generator_from_ae,
    one_hot,
    sample_latent,
)

LOG_FLOOR = nn.LOG_FLOOR


class DivergenceError(RuntimeError):
    """Training hit a non-finite or runaway loss; carries the finite prefix
    of the loss curve and the offending iteration."""

    def __init__(self, iteration: int, curve: "LossCurve", message: str):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration
        self.curve = curve


@dataclass
class TrainingConfig:
    epochs: int = 150
    j_steps: int = 3
    batch_size: int = 64
    latent_dim: int = 8
    lr: float = 2e-4
    beta1: float = 0.6
    beta2: float = 0.999
    epsilon: float = 1e-8
    gp_lambda: float = 10.0
    lambda_c: float = 1.0
    lambda_d: float = 1.0
    bank_size: int = 64
    seed: int = 0
    label_sampling_fallback: str = "uniform_minority"  # or uniform_all
    feature_mode: str = "identity"  # identity | mlp
    feature_dim: int = 32
    hidden_dim: int = 32
    gen_hidden_dim: int = 32
    ae_epochs: int = 30
    ae_lr: float = 1e-3
    f_warmup_steps: int = 0
    lipschitz: str = "gradient_penalty"  # or weight_clip
    clip_value: float = 0.01
    jitter_sigma: float = 0.0
    gan_loss: str = "nonsaturating"  # vanilla/cgan generator loss; or saturating
    hull_probe: int = 0  # probe batch size per iteration, 0 disables
    divergence_limit: float = 1e6

    def validate(self) -> None:
        if self.j_steps < 1:
            raise ValueError("j_steps must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if min(self.gp_lambda, self.lambda_c, self.lambda_d) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.label_sampling_fallback not in ("uniform_minority", "uniform_all"):
            raise ValueError(f"unknown fallback {self.label_sampling_fallback!r}")
        if self.feature_mode not in ("identity", "mlp"):
            raise ValueError(f"unknown feature mode {self.feature_mode!r}")
        if self.lipschitz not in ("gradient_penalty", "weight_clip"):
            raise ValueError(f"unknown lipschitz mode {self.lipschitz!r}")
        if self.gan_loss not in ("nonsaturating", "saturating"):
            raise ValueError(f"unknown gan loss {self.gan_loss!r}")


@dataclass
class LossCurve:
    iterations: list[int] = field(default_factory=list)
    loss_g: list[float] = field(default_factory=list)
    loss_d: list[float] = field(default_factory=list)
    loss_c: list[float] = field(default_factory=list)
    wall_ms: list[float] = field(default_factory=list)

    def append(self, iteration, lg, ld, lc, wall):
        if self.iterations and iteration <= self.iterations[-1]:
            raise ValueError("iterations must be strictly increasing")
        self.iterations.append(int(iteration))
        self.loss_g.append(float(lg))
        self.loss_d.append(float(ld))
        self.loss_c.append(float(lc))
        self.wall_ms.append(float(wall))

    def to_csv(self, path, include_wall: bool = True) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("iteration,loss_G,loss_D,loss_C,wall_ms\n")
            for i in range(len(self.iterations)):
                wall = self.wall_ms[i] if include_wall else 0.0
                f.write(
                    f"{self.iterations[i]},{self.loss_g[i]!r},{self.loss_d[i]!r},"
                    f"{self.loss_c[i]!r},{wall!r}\n"
                )


@dataclass
class TrainResult:
    model: object
    curve: LossCurve
    probes: list[dict] = field(default_factory=list)


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_minority_labels(
    priors: ClassPriors,
    n: int,
    mode: str,
    seed,
    fallback: str = "uniform_minority",
) -> tuple[np.ndarray, dict]:
    """Draw labels over the minority classes.

    ``prior_gap`` weights class i by (p_majority - p_i) normalized over the
    non-majority classes; ``uniform_minority`` is flat over them. The majority
    class has weight exactly 0. If every gap is 0 (all priors equal) the
    configured fallback applies and is flagged in the returned info dict.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    k = len(priors.priors)
    if k < 2:
        raise ValueError("need at least two classes")
    if mode not in ("prior_gap", "uniform_minority"):
        raise ValueError(f"unknown sampling mode {mode!r}")
    rng = _as_rng(seed)
    major = priors.majority
    used_fallback = False
    if mode == "prior_gap":
        weights = priors.priors[major] - priors.priors
        weights[major] = 0.0
        total = weights.sum()
        if total <= 0.0:
            used_fallback = True
            weights = _fallback_weights(k, major, fallback)
        else:
            weights = weights / total
    else:
        weights = _fallback_weights(k, major, "uniform_minority")
    labels = rng.choice(k, size=n, p=weights)
    return labels.astype(np.int64), {
        "weights": weights,
        "fallback": used_fallback,
        "majority": major,
    }


def _fallback_weights(k: int, major: int, fallback: str) -> np.ndarray:
    if fallback == "uniform_all":
        return np.full(k, 1.0 / k)
    w = np.full(k, 1.0 / (k - 1))
    w[major] = 0.0
    return w


def critic_objective(
    d_net: nn.Network,
    real: np.ndarray,
    real_labels: np.ndarray,
    fake: np.ndarray,
    fake_labels: np.ndarray,
    priors: ClassPriors,
) -> tuple[float, list]:
    """Prior-weighted critic value: mean p_y D(real) - mean (p_k - p_y) D(fake).

    The critic ascends this; the generator ascends the fake term. Returns the
    value and the critic parameter gradients.
    """
    k = len(priors.priors)
    for labels in (real_labels, fake_labels):
        if np.any(labels < 0) or np.any(labels >= k):
            raise ValueError(f"labels must lie in [0, {k})")
    p_major = priors.priors[priors.majority]
    acts_r = nn.forward(d_net, real)
    acts_f = nn.forward(d_net, fake)
    wr = priors.priors[real_labels][:, None]
    wf = (p_major - priors.priors[fake_labels])[:, None]
    value = float(np.mean(wr * acts_r[-1]) - np.mean(wf * acts_f[-1]))
    grads_r, _ = nn.backward(d_net, acts_r, wr / len(real))
    grads_f, _ = nn.backward(d_net, acts_f, -wf / len(fake))
    grads = [(gr[0] + gf[0], gr[1] + gf[1]) for gr, gf in zip(grads_r, grads_f)]
    return value, grads


def gradient_penalty(
    d_net: nn.Network,
    real: np.ndarray,
    fake: np.ndarray,
    seed,
) -> tuple[float, list]:
    """Two-sided unit-norm penalty on the critic's input gradient at random
    interpolates u*real + (1-u)*fake; returns the value and its exact
    parameter gradients (double backward through the stack)."""
    if real.shape[1] != fake.shape[1]:
        raise ValueError("real and fake batches must share a width")
    rng = _as_rng(seed)
    n = min(len(real), len(fake))
    u = rng.uniform(size=(n, 1))
    xhat = u * real[:n] + (1.0 - u) * fake[:n]
    acts = nn.forward(d_net, xhat)
    v, deltas, gs = nn.input_gradient_trace(d_net, acts)
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    value = float(np.mean((norms - 1.0) ** 2))
    with np.errstate(invalid="ignore", divide="ignore"):
        adj = np.where(norms > 0.0, 2.0 * (norms - 1.0) / (norms * n) * v, 0.0)
    grads = nn.norm_penalty_param_grads(d_net, acts, deltas, gs, adj)
    return value, grads


def classifier_objective(
    c_net: nn.Network,
    batch: np.ndarray,
    labels: np.ndarray,
    priors: ClassPriors,
    source: str = "real",
) -> tuple[float, list, np.ndarray, bool]:
    """Prior-weighted likelihood value for one batch (real or generated).

    Per sample of class i: p_i log C(x|i) + sum_{j != i} (p_k - p_j)
    log(1 - C(x|j)), averaged over the batch. The classifier ascends this on
    both sources; the generator descends it on generated samples. Returns
    (value, classifier grads, gradient at the batch, clamp flag).
    """
    if source not in ("real", "generated"):
        raise ValueError(f"unknown source {source!r}")
    labels = np.asarray(labels, dtype=np.int64)
    k = len(priors.priors)
    if np.any(labels < 0) or np.any(labels >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    acts = nn.forward(c_net, batch)
    probs = acts[-1]
    n = len(labels)
    p_major = priors.priors[priors.majority]

    p_true = probs[np.arange(n), labels]
    one_minus = 1.0 - probs
    clamped = bool(np.any(p_true < LOG_FLOOR) or np.any(one_minus < LOG_FLOOR))
    p_true_safe = np.maximum(p_true, LOG_FLOOR)
    one_minus_safe = np.maximum(one_minus, LOG_FLOOR)

    gap = p_major - priors.priors  # (K,), 0 at the majority class
    terms = np.log(one_minus_safe) * gap[None, :]
    terms[np.arange(n), labels] = 0.0
    own = priors.priors[labels] * np.log(p_true_safe)
    value = float((own.sum() + terms.sum()) / n)

    dprobs = -gap[None, :] / (one_minus_safe * n)
    dprobs = np.ascontiguousarray(dprobs * np.ones_like(probs))
    dprobs[np.arange(n), labels] = priors.priors[labels] / (p_true_safe * n)
    grads, input_grad = nn.backward(c_net, acts, dprobs)
    return value, grads, input_grad, clamped


def _clip_weights(net: nn.Network, limit: float) -> None:
    for layer in net.layers:
        np.clip(layer.weight, -limit, limit, out=layer.weight)
        np.clip(layer.bias, -limit, limit, out=layer.bias)


def f_step(
    f_net: nn.Network,
    c_net: nn.Network,
    opt_f: nn.AdamState,
    raw_batch: np.ndarray,
    labels: np.ndarray,
) -> float:
    """Feature-extractor descent on the classifier cross-entropy, classifier
    frozen. No-op for the identity extractor."""
    if not f_net.layers:
        return 0.0
    acts_f = nn.forward(f_net, raw_batch)
    acts_c = nn.forward(c_net, acts_f[-1])
    loss, grad, _ = nn.cross_entropy(acts_c[-1], labels)
    _, input_grad = nn.backward(c_net, acts_c, grad)
    grads_f, _ = nn.backward(f_net, acts_f, input_grad)
    nn.adam_step(f_net, grads_f, opt_f, "descend")
    return loss


def c_step(
    c_net: nn.Network,
    opt_c: nn.AdamState,
    batch: np.ndarray,
    labels: np.ndarray,
    priors: ClassPriors,
    source: str,
) -> float:
    value, grads, _, _ = classifier_objective(c_net, batch, labels, priors, source)
    nn.adam_step(c_net, grads, opt_c, "ascend")
    return value


def d_step(
    d_net: nn.Network,
    opt_d: nn.AdamState,
    real: np.ndarray,
    real_labels: np.ndarray,
    fake: np.ndarray,
    fake_labels: np.ndarray,
    priors: ClassPriors,
    cfg: TrainingConfig,
    rng,
) -> float:
    """Critic ascent on its weighted objective with Lipschitz enforcement."""
    value, grads = critic_objective(d_net, real, real_labels, fake, fake_labels, priors)
    if cfg.lipschitz == "gradient_penalty" and cfg.gp_lambda > 0:
        _, gp_grads = gradient_penalty(d_net, real, fake, rng)
        grads = [
            (g[0] - cfg.gp_lambda * p[0], g[1] - cfg.gp_lambda * p[1])
            for g, p in zip(grads, gp_grads)
        ]
    nn.adam_step(d_net, grads, opt_d, "ascend")
    if cfg.lipschitz == "weight_clip":
        _clip_weights(d_net, cfg.clip_value)
    return value


def g_step_vs_c(
    g: GeneratorParams,
    c_net: nn.Network,
    opt_q: nn.AdamState,
    opt_p: nn.AdamState,
    z: np.ndarray,
    labels: np.ndarray,
    priors: ClassPriors,
    scale: float,
) -> float:
    """Generator descent on the classifier objective over its own samples."""
    samples, _, cache = generator_forward(g, z, labels)
    value, _, input_grad, _ = classifier_objective(c_net, samples, labels, priors, "generated")
    q_grads, p_grads = generator_backward(g, cache, scale * input_grad)
    nn.adam_step(g.q_net, q_grads, opt_q, "descend")
    nn.adam_step(g.p_head, p_grads, opt_p, "descend")
    return value


def g_step_vs_d(
    g: GeneratorParams,
    d_net: nn.Network,
    opt_q: nn.AdamState,
    opt_p: nn.AdamState,
    z: np.ndarray,
    labels: np.ndarray,
    priors: ClassPriors,
    scale: float,
) -> float:
    """Generator ascent on the prior-gap-weighted critic score of its samples."""
    samples, _, cache = generator_forward(g, z, labels)
    acts = nn.forward(d_net, samples)
    wf = (priors.priors[priors.majority] - priors.priors[labels])[:, None]
    value = float(np.mean(wf * acts[-1]))
    _, input_grad = nn.backward(d_net, acts, wf / len(labels))
    q_grads, p_grads = generator_backward(g, cache, scale * input_grad)
    nn.adam_step(g.q_net, q_grads, opt_q, "ascend")
    nn.adam_step(g.p_head, p_grads, opt_p, "ascend")
    return value


def init_model(ds: Dataset, cfg: TrainingConfig) -> HullGanModel:
    """Deterministic model assembly: networks, autoencoder pretraining with
    decoder transfer and latent conditioner, and the initial anchor banks."""
    cfg.validate()
    if ds.num_classes < 2:
        raise ValueError("need at least two classes")
    if np.any(ds.class_counts() < 2):
        raise ValueError("every class needs at least two samples")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    k = ds.num_classes
    d_raw = ds.dim

    if cfg.feature_mode == "identity":
        f_net = nn.Network([])
        d_feat = d_raw
    else:
        f_net = nn.network([d_raw, cfg.hidden_dim, cfg.feature_dim], ["relu", "linear"], rng)
        d_feat = cfg.feature_dim
    c_net = nn.network([d_feat, cfg.hidden_dim, k], ["relu", "softmax"], rng)
    d_net = nn.network([d_feat, cfg.hidden_dim, 1], ["relu", "linear"], rng)
    gh = cfg.gen_hidden_dim
    q_net = nn.network([cfg.latent_dim + k, gh, gh], ["relu", "relu"], rng)
    p_head = nn.network([gh, cfg.bank_size], ["softmax"], rng)

    priors = class_priors(ds)
    feats = extract_features(f_net, ds.features)
    bank = build_bank(feats, ds.labels, k, cfg.bank_size, rng, ds.name)
    g = GeneratorParams(q_net, p_head, bank, cfg.latent_dim)

    conditioner = None
    if cfg.ae_epochs > 0:
        ae = autoencoder_pretrain(
            ds.features, ds.labels, k, cfg.latent_dim, cfg.ae_epochs,
            seed=cfg.seed + 104729, hidden_dim=gh, lr=cfg.ae_lr,
            batch_size=cfg.batch_size,
        )
        init_generator_from_ae(ae, g)
        conditioner = ae.conditioner
    return HullGanModel(f_net, c_net, d_net, g, conditioner, priors, k)


def _check_finite(curve: LossCurve, iteration: int, cfg: TrainingConfig, **losses) -> None:
    for name, value in losses.items():
        if not np.isfinite(value) or abs(value) > cfg.divergence_limit:
            raise DivergenceError(iteration, curve, f"{name} diverged to {value}")


def train_hull_gan(ds: Dataset, cfg: TrainingConfig, model: HullGanModel | None = None) -> TrainResult:
    """Full adversarial schedule; returns the trained model and loss curve.

    Deterministic for a fixed config: same seed, bitwise-identical model.
    """
    cfg.validate()
    if model is None:
        model = init_model(ds, cfg)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    opts = {
        "f": nn.adam_init(model.f_net, cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon),
        "c": nn.adam_init(model.c_net, cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon),
        "d": nn.adam_init(model.d_net, cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon),
        "q": nn.adam_init(model.g.q_net, cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon),
        "p": nn.adam_init(model.g.p_head, cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon),
    }
    n = ds.n
    bs = min(cfg.batch_size, n)
    priors = model.priors
    curve = LossCurve()
    probes: list[dict] = []
    identity_f = not model.f_net.layers
    feats = ds.features if identity_f else extract_features(model.f_net, ds.features)

    for _ in range(cfg.f_warmup_steps):
        idx = rng.choice(n, size=bs, replace=False)
        _warmup_step(model.f_net, model.c_net, opts["f"], opts["c"], ds.features[idx], ds.labels[idx])

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        try:
            idx = rng.choice(n, size=bs, replace=False)
            f_step(model.f_net, model.c_net, opts["f"], ds.features[idx], ds.labels[idx])
            if not identity_f:
                feats = extract_features(model.f_net, ds.features)
            model.g.bank = build_bank(feats, ds.labels, model.num_classes, cfg.bank_size, rng, ds.name)

            sum_c = sum_d = sum_g = 0.0
            for _ in range(cfg.j_steps):
                idx = rng.choice(n, size=bs, replace=False)
                real = feats[idx]
                if cfg.jitter_sigma > 0:
                    real = real + cfg.jitter_sigma * rng.standard_normal(real.shape)
                real_labels = ds.labels[idx]

                c_real = c_step(model.c_net, opts["c"], real, real_labels, priors, "real")

                y1, _ = sample_minority_labels(
                    priors, bs, "prior_gap", rng, cfg.label_sampling_fallback
                )
                z1 = sample_latent(model.conditioner, y1, cfg.latent_dim, rng)
                fake1, _, _ = generator_forward(model.g, z1, y1)
                c_fake = c_step(model.c_net, opts["c"], fake1, y1, priors, "generated")
                d_val = d_step(
                    model.d_net, opts["d"], real, real_labels, fake1, y1, priors, cfg, rng
                )

                y2, _ = sample_minority_labels(
                    priors, bs, "uniform_minority", rng, cfg.label_sampling_fallback
                )
                z2 = sample_latent(model.conditioner, y2, cfg.latent_dim, rng)
                gc_val = gd_val = 0.0
                if cfg.lambda_c > 0:
                    gc_val = g_step_vs_c(
                        model.g, model.c_net, opts["q"], opts["p"], z2, y2, priors, cfg.lambda_c
                    )
                if cfg.lambda_d > 0:
                    gd_val = g_step_vs_d(
                        model.g, model.d_net, opts["q"], opts["p"], z2, y2, priors, cfg.lambda_d
                    )

                sum_c += c_real + c_fake
                sum_d += d_val
                sum_g += cfg.lambda_c * gc_val - cfg.lambda_d * gd_val
        except nn.NonFiniteGradient as exc:
            raise DivergenceError(epoch, curve, str(exc)) from exc

        loss_c = sum_c / cfg.j_steps
        loss_d = sum_d / cfg.j_steps
        loss_g = sum_g / cfg.j_steps
        _check_finite(curve, epoch, cfg, loss_G=loss_g, loss_D=loss_d, loss_C=loss_c)
        curve.append(epoch, loss_g, loss_d, loss_c, (time.perf_counter() - t0) * 1e3)

        if cfg.hull_probe > 0:
            probes.append(_hull_probe(model, cfg, epoch))
    return TrainResult(model, curve, probes)


def _warmup_step(f_net, c_net, opt_f, opt_c, raw_batch, labels) -> float:
    acts_f = nn.forward(f_net, raw_batch)
    acts_c = nn.forward(c_net, acts_f[-1])
    loss, grad, _ = nn.cross_entropy(acts_c[-1], labels)
    grads_c, input_grad = nn.backward(c_net, acts_c, grad)
    nn.adam_step(c_net, grads_c, opt_c, "descend")
    if f_net.layers:
        grads_f, _ = nn.backward(f_net, acts_f, input_grad)
        nn.adam_step(f_net, grads_f, opt_f, "descend")
    return loss


def _hull_probe(model: HullGanModel, cfg: TrainingConfig, epoch: int) -> dict:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 777, epoch]))
    labels, _ = sample_minority_labels(model.priors, cfg.hull_probe, "uniform_minority", rng)
    z = sample_latent(model.conditioner, labels, cfg.latent_dim, rng)
    samples, _, _ = generator_forward(model.g, z, labels)
    inside_total = 0
    violations = []
    for c in np.unique(labels):
        rows = labels == c
        inside, viol = hull_contains(samples[rows], model.g.bank.anchors[c])
        inside_total += int(inside.sum())
        violations.extend(viol.tolist())
    return {
        "iteration": epoch,
        "inside_fraction": inside_total / len(labels),
        "median_violation": float(np.median(violations)),
    }


def train_plain_classifier(ds: Dataset, cfg: TrainingConfig) -> TrainResult:
    """Cross-entropy training of extractor + classifier, no adversaries."""
    cfg.validate()
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    k = ds.num_classes
    if cfg.feature_mode == "identity":
        f_net = nn.Network([])
        d_feat = ds.dim
    else:
        f_net = nn.network([ds.dim, cfg.hidden_dim, cfg.feature_dim], ["relu", "linear"], rng)
        d_feat = cfg.feature_dim
    c_net = nn.network([d_feat, cfg.hidden_dim, k], ["relu", "softmax"], rng)
    opt_f = nn.adam_init(f_net, cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon)
    opt_c = nn.adam_init(c_net, cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon)
    n = ds.n
    bs = min(cfg.batch_size, n)
    steps = max(1, n // bs)
    curve = LossCurve()
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        total = 0.0
        try:
            for _ in range(steps):
                idx = rng.choice(n, size=bs, replace=False)
                total += _warmup_step(f_net, c_net, opt_f, opt_c, ds.features[idx], ds.labels[idx])
        except nn.NonFiniteGradient as exc:
            raise DivergenceError(epoch, curve, str(exc)) from exc
        loss = total / steps
        _check_finite(curve, epoch, cfg, loss_C=loss)
        curve.append(epoch, 0.0, 0.0, loss, (time.perf_counter() - t0) * 1e3)
    return TrainResult(PlainModel(f_net, c_net, k), curve)


def _bce_d_step(d_net, opt_d, real_in, fake_in) -> float:
    """Discriminator ascent on log D(real) + log(1 - D(fake)) (Eq-style GAN)."""
    acts_r = nn.forward(d_net, real_in)
    acts_f = nn.forward(d_net, fake_in)
    sr = np.clip(acts_r[-1], LOG_FLOOR, 1.0 - LOG_FLOOR)
    sf = np.clip(acts_f[-1], LOG_FLOOR, 1.0 - LOG_FLOOR)
    value = float(np.mean(np.log(sr)) + np.mean(np.log(1.0 - sf)))
    grads_r, _ = nn.backward(d_net, acts_r, 1.0 / (len(sr) * sr))
    grads_f, _ = nn.backward(d_net, acts_f, -1.0 / (len(sf) * (1.0 - sf)))
    grads = [(a[0] + b[0], a[1] + b[1]) for a, b in zip(grads_r, grads_f)]
    nn.adam_step(d_net, grads, opt_d, "ascend")
    return value


def _gan_g_grad(d_net, fake_in, mode: str) -> tuple[float, np.ndarray]:
    """Generator loss value and d(loss)/d(fake input); the caller descends."""
    acts = nn.forward(d_net, fake_in)
    s = np.clip(acts[-1], LOG_FLOOR, 1.0 - LOG_FLOOR)
    n = len(s)
    if mode == "nonsaturating":
        value = float(-np.mean(np.log(s)))
        _, input_grad = nn.backward(d_net, acts, -1.0 / (n * s))
    else:
        value = float(np.mean(np.log(1.0 - s)))
        _, input_grad = nn.backward(d_net, acts, -1.0 / (n * (1.0 - s)))
    return value, input_grad


def train_vanilla_gan(ds: Dataset, cfg: TrainingConfig) -> TrainResult:
    """Unconditional generator/discriminator baseline with the log loss.

    Exists to exhibit the majority-mode skew: trained on imbalanced data it
    mostly emits majority-class samples.
    """
    cfg.validate()
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    d = ds.dim
    gh = cfg.gen_hidden_dim
    g_net = nn.network([cfg.latent_dim, gh, gh, d], ["relu", "relu", "linear"], rng)
    d_net = nn.network([d, cfg.hidden_dim, 1], ["relu", "sigmoid"], rng)
    opt_g = nn.adam_init(g_net, cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon)
    opt_d = nn.adam_init(d_net, cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon)
    n = ds.n
    bs = min(cfg.batch_size, n)
    curve = LossCurve()
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        sum_d = sum_g = 0.0
        try:
            for _ in range(cfg.j_steps):
                idx = rng.choice(n, size=bs, replace=False)
                z = rng.standard_normal((bs, cfg.latent_dim))
                fake = nn.forward(g_net, z)[-1]
                sum_d += _bce_d_step(d_net, opt_d, ds.features[idx], fake)

                z = rng.standard_normal((bs, cfg.latent_dim))
                acts_g = nn.forward(g_net, z)
                value, input_grad = _gan_g_grad(d_net, acts_g[-1], cfg.gan_loss)
                grads_g, _ = nn.backward(g_net, acts_g, input_grad)
                nn.adam_step(g_net, grads_g, opt_g, "descend")
                sum_g += value
        except nn.NonFiniteGradient as exc:
            raise DivergenceError(epoch, curve, str(exc)) from exc
        loss_d, loss_g = sum_d / cfg.j_steps, sum_g / cfg.j_steps
        _check_finite(curve, epoch, cfg, loss_G=loss_g, loss_D=loss_d)
        curve.append(epoch, loss_g, loss_d, 0.0, (time.perf_counter() - t0) * 1e3)
    return TrainResult(VanillaGanModel(g_net, d_net, cfg.latent_dim), curve)


def train_cgan(ds: Dataset, cfg: TrainingConfig) -> TrainResult:
    """Label-conditioned GAN baseline: one-hot labels are appended to both the
    generator and discriminator inputs."""
    cfg.validate()
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    d = ds.dim
    k = ds.num_classes
    gh = cfg.gen_hidden_dim
    g_net = nn.network([cfg.latent_dim + k, gh, gh, d], ["relu", "relu", "linear"], rng)
    d_net = nn.network([d + k, cfg.hidden_dim, 1], ["relu", "sigmoid"], rng)
    opt_g = nn.adam_init(g_net, cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon)
    opt_d = nn.adam_init(d_net, cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon)
    priors = class_priors(ds)
    n = ds.n
    bs = min(cfg.batch_size, n)
    curve = LossCurve()
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        sum_d = sum_g = 0.0
        try:
            for _ in range(cfg.j_steps):
                idx = rng.choice(n, size=bs, replace=False)
                real_in = np.hstack([ds.features[idx], one_hot(ds.labels[idx], k)])
                y = rng.choice(k, size=bs, p=priors.priors).astype(np.int64)
                z = np.hstack([rng.standard_normal((bs, cfg.latent_dim)), one_hot(y, k)])
                fake = nn.forward(g_net, z)[-1]
                sum_d += _bce_d_step(d_net, opt_d, real_in, np.hstack([fake, one_hot(y, k)]))

                y = rng.choice(k, size=bs, p=priors.priors).astype(np.int64)
                z = np.hstack([rng.standard_normal((bs, cfg.latent_dim)), one_hot(y, k)])
                acts_g = nn.forward(g_net, z)
                value, input_grad = _gan_g_grad(
                    d_net, np.hstack([acts_g[-1], one_hot(y, k)]), cfg.gan_loss
                )
                grads_g, _ = nn.backward(g_net, acts_g, input_grad[:, :d])
                nn.adam_step(g_net, grads_g, opt_g, "descend")
                sum_g += value
        except nn.NonFiniteGradient as exc:
            raise DivergenceError(epoch, curve, str(exc)) from exc
        loss_d, loss_g = sum_d / cfg.j_steps, sum_g / cfg.j_steps
        _check_finite(curve, epoch, cfg, loss_G=loss_g, loss_D=loss_d)
        curve.append(epoch, loss_g, loss_d, 0.0, (time.perf_counter() - t0) * 1e3)
    return TrainResult(CGanModel(g_net, d_net, cfg.latent_dim, k), curve)


def rebalance_dataset(ds: Dataset, model: HullGanModel, target="equalize", seed: int = 0) -> Dataset:
    """Append generator samples per class until the targets are met.

    Output lives in the model's feature space; appended rows carry the
    synthetic flag. Targets below current counts are an error (this never
    removes data).
    """
    counts = ds.class_counts()
    if isinstance(target, str):
        if target != "equalize":
            raise ValueError(f"unknown target {target!r}")
        targets = np.full(ds.num_classes, counts.max(), dtype=np.int64)
    else:
        targets = np.asarray(target, dtype=np.int64)
        if targets.shape != (ds.num_classes,):
            raise ValueError("need one target count per class")
    for c in range(ds.num_classes):
        if targets[c] < counts[c]:
            raise ValueError(
                f"class {c}: target {targets[c]} below current count {counts[c]}; "
                "rebalancing never removes data"
            )
    rng = np.random.default_rng(np.random.SeedSequence([seed, 3]))
    feats = extract_features(model.f_net, ds.features)
    new_feats, new_labels = [], []
    for c in range(ds.num_classes):
        need = int(targets[c] - counts[c])
        if need == 0:
            continue
        labels = np.full(need, c, dtype=np.int64)
        z = sample_latent(model.conditioner, labels, model.g.latent_dim, rng)
        samples, _, _ = generator_forward(model.g, z, labels)
        new_feats.append(samples)
        new_labels.append(labels)
    feature_space = "extracted" if model.f_net.layers else ds.feature_space
    base = np.vstack([feats] + new_feats) if new_feats else feats
    labels = np.concatenate([ds.labels] + new_labels) if new_labels else ds.labels
    synth = np.concatenate(
        [ds.synthetic] + [np.ones(len(b), dtype=bool) for b in new_feats]
    ) if new_feats else ds.synthetic
    meta = dict(ds.metadata)
    meta["rebalanced"] = list(map(int, targets))
    return Dataset(
        base, labels, ds.name + ":rebalanced", ds.num_classes,
        feature_space=feature_space, synthetic=synth, metadata=meta,
    )


def cgan_rebalance(ds: Dataset, model: CGanModel, target="equalize", seed: int = 0) -> Dataset:
    """Rebalance via the label-conditioned baseline generator (raw space)."""
    counts = ds.class_counts()
    if isinstance(target, str):
        if target != "equalize":
            raise ValueError(f"unknown target {target!r}")
        targets = np.full(ds.num_classes, counts.max(), dtype=np.int64)
    else:
        targets = np.asarray(target, dtype=np.int64)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 3]))
    new_feats, new_labels = [], []
    for c in range(ds.num_classes):
        need = int(targets[c] - counts[c])
        if need <= 0:
            continue
        labels = np.full(need, c, dtype=np.int64)
        z = np.hstack([
            rng.standard_normal((need, model.latent_dim)),
            one_hot(labels, model.num_classes),
        ])
        new_feats.append(nn.forward(model.g_net, z)[-1])
        new_labels.append(labels)
    if not new_feats:
        return ds
    feats = np.vstack([ds.features] + new_feats)
    labels = np.concatenate([ds.labels] + new_labels)
    synth = np.concatenate([ds.synthetic] + [np.ones(len(b), dtype=bool) for b in new_feats])
    return Dataset(
        feats, labels, ds.name + ":rebalanced", ds.num_classes,
        feature_space=ds.feature_space, synthetic=synth, metadata=dict(ds.metadata),
    )


def predict(f_net: nn.Network, c_net: nn.Network, batch: np.ndarray):
    """Class probabilities and argmax predictions through extractor + classifier."""
    probs = classify(c_net, extract_features(f_net, batch))
    return probs, probs.argmax(axis=1).astype(np.int64)


def retrain_classifier(balanced: Dataset, cfg: TrainingConfig) -> TrainResult:
    """Fresh classifier on an already-rebalanced feature-space dataset."""
    sub = replace(cfg, feature_mode="identity")
    return train_plain_classifier(balanced, sub)
