"""Model containers and the hull-constrained generator.

The generator is a two-stage map: a conditioning trunk takes noise plus a
one-hot class and emits a pseudo-space vector; a softmax head turns that into
mixing weights over a per-class bank of real feature-space anchors. Its
output is the weighted anchor combination, so every sample lies in the
convex hull of its class bank by construction, for any parameter values.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .data import ClassPriors, Dataset


@dataclass
class ClassBank:
    anchors: list[np.ndarray]  # per class: (B_c, d) feature-space rows
    indices: list[np.ndarray]  # per class: source row ids in the named dataset
    dataset_name: str

    @property
    def num_classes(self) -> int:
        return len(self.anchors)


@dataclass
class GeneratorParams:
    q_net: nn.Network  # (latent + K) -> pseudo space
    p_head: nn.Network  # pseudo space -> bank logits, softmax final
    bank: ClassBank
    latent_dim: int

    @property
    def num_classes(self) -> int:
        return self.bank.num_classes


@dataclass
class LatentConditioner:
    means: np.ndarray  # (K, latent)
    variances: np.ndarray  # (K, latent), strictly positive


@dataclass
class HullGanModel:
    f_net: nn.Network
    c_net: nn.Network
    d_net: nn.Network
    g: GeneratorParams
    conditioner: LatentConditioner | None
    priors: ClassPriors
    num_classes: int


@dataclass
class PlainModel:
    f_net: nn.Network
    c_net: nn.Network
    num_classes: int


@dataclass
class VanillaGanModel:
    g_net: nn.Network
    d_net: nn.Network
    latent_dim: int


@dataclass
class CGanModel:
    g_net: nn.Network
    d_net: nn.Network
    latent_dim: int
    num_classes: int


def extract_features(f_net: nn.Network, batch: np.ndarray) -> np.ndarray:
    """Feature map; an empty network is the identity (2-D synthetic mode)."""
    return nn.forward(f_net, batch)[-1]


def classify(c_net: nn.Network, batch: np.ndarray) -> np.ndarray:
    return nn.forward(c_net, batch)[-1]


def critic_score(d_net: nn.Network, batch: np.ndarray) -> np.ndarray:
    return nn.forward(d_net, batch)[-1]


def has_unbounded_head(d_net: nn.Network) -> bool:
    """Structural check: critic ends in a single linear unit, no squashing."""
    last = d_net.layers[-1]
    return last.activation == "linear" and last.out_dim == 1


def build_bank(
    features: np.ndarray,
    labels: np.ndarray,
    num_classes: int,
    bank_size: int,
    rng: np.random.Generator,
    dataset_name: str,
) -> ClassBank:
    """Seeded per-class anchor draw, B_c = min(bank_size, n_c), no replacement."""
    anchors, indices = [], []
    for c in range(num_classes):
        idx = np.flatnonzero(labels == c)
        if len(idx) == 0:
            raise ValueError(f"class {c} has no samples to anchor on")
        take = min(bank_size, len(idx))
        chosen = rng.choice(idx, size=take, replace=False)
        indices.append(chosen.astype(np.int64))
        anchors.append(np.ascontiguousarray(features[chosen]))
    return ClassBank(anchors, indices, dataset_name)


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    out = np.zeros((len(labels), num_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def sample_latent(
    conditioner: LatentConditioner | None,
    labels: np.ndarray,
    latent_dim: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Class-conditional Gaussian noise after autoencoder init, else N(0, I)."""
    eps = rng.standard_normal((len(labels), latent_dim))
    if conditioner is None:
        return eps
    return conditioner.means[labels] + np.sqrt(conditioner.variances[labels]) * eps


@dataclass
class GeneratorCache:
    q_acts: list[np.ndarray]
    p_acts: list[np.ndarray]
    labels: np.ndarray
    weights: np.ndarray  # (n, head_width), zero-padded past each class bank


def generator_forward(
    g: GeneratorParams, z: np.ndarray, labels: np.ndarray
) -> tuple[np.ndarray, np.ndarray, GeneratorCache]:
    """Generate one feature-space sample per (z, label) row.

    Returns (samples, weights, cache). Weight rows are non-negative and sum
    to 1 over the first B_c columns of their class (a masked renormalized
    softmax when a bank is smaller than the head), so each sample is a convex
    combination of its class anchors.
    """
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    if z.shape[1] != g.latent_dim:
        raise ValueError(f"latent width {z.shape[1]} != {g.latent_dim}")
    if labels.min(initial=0) < 0 or labels.max(initial=-1) >= g.num_classes:
        raise ValueError(f"labels must lie in [0, {g.num_classes})")
    for c in np.unique(labels):
        if len(g.bank.anchors[c]) == 0:
            raise ValueError(f"class {c} has an empty anchor bank")

    q_in = np.hstack([z, one_hot(labels, g.num_classes)])
    q_acts = nn.forward(g.q_net, q_in)
    p_acts = nn.forward(g.p_head, q_acts[-1])
    soft = p_acts[-1]
    head = soft.shape[1]

    n = len(labels)
    d = g.bank.anchors[0].shape[1]
    samples = np.zeros((n, d))
    weights = np.zeros((n, head))
    for c in np.unique(labels):
        rows = np.flatnonzero(labels == c)
        bank = g.bank.anchors[c]
        bc = bank.shape[0]
        if bc == head:
            w = soft[rows]
        else:
            sub = soft[rows, :bc]
            w = sub / sub.sum(axis=1, keepdims=True)
        weights[rows, :bc] = w
        samples[rows] = w @ bank
    return samples, weights, GeneratorCache(q_acts, p_acts, labels, weights)


def generator_backward(
    g: GeneratorParams, cache: GeneratorCache, sample_grads: np.ndarray
) -> tuple[list, list]:
    """Backpropagate d(loss)/d(sample) into trunk and head parameter grads."""
    soft = cache.p_acts[-1]
    head = soft.shape[1]
    dsoft = np.zeros_like(soft)
    for c in np.unique(cache.labels):
        rows = np.flatnonzero(cache.labels == c)
        bank = g.bank.anchors[c]
        bc = bank.shape[0]
        dw = sample_grads[rows] @ bank.T  # (n_c, bc)
        if bc == head:
            dsoft[rows] = dw
        else:
            sub = soft[rows, :bc]
            s = sub.sum(axis=1, keepdims=True)
            w = sub / s
            dsoft[rows, :bc] = (dw - (dw * w).sum(axis=1, keepdims=True)) / s
    p_grads, dpseudo = nn.backward(g.p_head, cache.p_acts, dsoft)
    q_grads, _ = nn.backward(g.q_net, cache.q_acts, dpseudo)
    return q_grads, p_grads


@dataclass
class AutoencoderResult:
    encoder: nn.Network
    decoder: nn.Network
    conditioner: LatentConditioner
    losses: list[float]  # per-epoch mean reconstruction loss


def autoencoder_pretrain(
    features: np.ndarray,
    labels: np.ndarray,
    num_classes: int,
    latent_dim: int,
    epochs: int,
    seed: int,
    hidden_dim: int = 32,
    lr: float = 1e-3,
    batch_size: int = 64,
) -> AutoencoderResult:
    """Unconditional reconstruction pretraining over all classes jointly.

    The decoder mirrors the generator trunk's hidden topology so its interior
    layers transfer; class-conditional latent Gaussians are fitted from the
    encoder outputs afterwards.
    """
    features = np.ascontiguousarray(features, dtype=np.float64)
    if len(features) == 0:
        raise ValueError("features must be non-empty")
    d = features.shape[1]
    rng = np.random.default_rng(seed)
    stack = nn.network(
        [d, hidden_dim, hidden_dim, latent_dim, hidden_dim, hidden_dim, d],
        ["relu", "relu", "linear", "relu", "relu", "linear"],
        rng,
    )
    opt = nn.adam_init(stack, lr=lr)
    n = len(features)
    bs = min(batch_size, n)
    losses = []
    for _ in range(epochs):
        epoch_loss = 0.0
        steps = max(1, n // bs)
        for _ in range(steps):
            idx = rng.choice(n, size=bs, replace=False)
            batch = features[idx]
            acts = nn.forward(stack, batch)
            loss, grad = nn.mean_square(acts[-1], batch)
            if not np.isfinite(loss):
                raise ValueError(
                    "autoencoder training diverged (non-finite loss); lower the learning rate"
                )
            grads, _ = nn.backward(stack, acts, grad)
            nn.adam_step(stack, grads, opt, "descend")
            epoch_loss += loss
        losses.append(epoch_loss / steps)

    encoder = nn.Network(stack.layers[:3])
    decoder = nn.Network(stack.layers[3:])
    latent = nn.forward(encoder, features)[-1]
    means = np.zeros((num_classes, latent_dim))
    variances = np.ones((num_classes, latent_dim))
    for c in range(num_classes):
        rows = latent[labels == c]
        if len(rows):
            means[c] = rows.mean(axis=0)
            variances[c] = np.maximum(rows.var(axis=0), 1e-8)
    return AutoencoderResult(encoder, decoder, LatentConditioner(means, variances), losses)


def init_generator_from_ae(ae: AutoencoderResult, g: GeneratorParams) -> int:
    """Copy decoder layers into the trunk wherever index, shape and activation
    agree; everything else keeps its random init. Returns the copy count."""
    copied = 0
    for i, layer in enumerate(g.q_net.layers):
        if i >= len(ae.decoder.layers):
            break
        src = ae.decoder.layers[i]
        if src.weight.shape == layer.weight.shape and src.activation == layer.activation:
            layer.weight[...] = src.weight
            layer.bias[...] = src.bias
            copied += 1
    if copied == 0:
        warnings.warn("no decoder layers matched the generator trunk; keeping random init")
    return copied


# --- checkpoint container -------------------------------------------------
# Same format family as the network snapshot: magic PGNN, u16 version 2, then
# named sections. The bank section stores anchor row indices into the named
# dataset rather than anchor copies.

_BUNDLE_VERSION = 2


def _pack_section(name: str, payload: bytes) -> bytes:
    nb = name.encode("utf-8")
    return struct.pack("<H", len(nb)) + nb + struct.pack("<Q", len(payload)) + payload


def _iter_sections(blob: bytes, offset: int):
    while offset < len(blob):
        (nlen,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        name = blob[offset:offset + nlen].decode("utf-8")
        offset += nlen
        (plen,) = struct.unpack_from("<Q", blob, offset)
        offset += 8
        yield name, blob[offset:offset + plen]
        offset += plen


def _pack_f64(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    return struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape) + arr.tobytes()


def _unpack_f64(payload: bytes):
    (ndim,) = struct.unpack_from("<I", payload, 0)
    shape = struct.unpack_from(f"<{ndim}I", payload, 4)
    data = np.frombuffer(payload, dtype="<f8", offset=4 + 4 * ndim)
    return np.ascontiguousarray(data.reshape(shape))


def save_model(model, path) -> None:
    sections: list[bytes] = []

    def add_net(name, net):
        sections.append(_pack_section(f"net:{name}", nn.save_network(net)))

    meta: dict = {}
    if isinstance(model, HullGanModel):
        meta = {"kind": "hullgan", "latent_dim": model.g.latent_dim,
                "num_classes": model.num_classes}
        add_net("f", model.f_net)
        add_net("c", model.c_net)
        add_net("d", model.d_net)
        add_net("g.q", model.g.q_net)
        add_net("g.p", model.g.p_head)
        bank = model.g.bank
        parts = [struct.pack("<I", bank.num_classes)]
        for idx in bank.indices:
            parts.append(struct.pack("<I", len(idx)))
            parts.append(np.ascontiguousarray(idx, dtype="<u4").tobytes())
        nb = bank.dataset_name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)) + nb)
        sections.append(_pack_section("bank", b"".join(parts)))
        if model.conditioner is not None:
            payload = _pack_f64(model.conditioner.means) + _pack_f64(model.conditioner.variances)
            sections.append(_pack_section("conditioner", payload))
        payload = _pack_f64(model.priors.priors) + _pack_f64(
            model.priors.ascending_order.astype(np.float64)
        )
        sections.append(_pack_section("priors", payload))
    elif isinstance(model, PlainModel):
        meta = {"kind": "plain", "num_classes": model.num_classes}
        add_net("f", model.f_net)
        add_net("c", model.c_net)
    elif isinstance(model, VanillaGanModel):
        meta = {"kind": "vanilla_gan", "latent_dim": model.latent_dim}
        add_net("g", model.g_net)
        add_net("d", model.d_net)
    elif isinstance(model, CGanModel):
        meta = {"kind": "cgan", "latent_dim": model.latent_dim,
                "num_classes": model.num_classes}
        add_net("g", model.g_net)
        add_net("d", model.d_net)
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")

    sections.insert(0, _pack_section("meta", json.dumps(meta, sort_keys=True).encode("utf-8")))
    with open(path, "wb") as f:
        f.write(b"PGNN" + struct.pack("<H", _BUNDLE_VERSION))
        f.write(b"".join(sections))


def _split_f64_pair(payload: bytes):
    (ndim,) = struct.unpack_from("<I", payload, 0)
    shape = struct.unpack_from(f"<{ndim}I", payload, 4)
    first_len = 4 + 4 * ndim + 8 * int(np.prod(shape))
    return _unpack_f64(payload[:first_len]), _unpack_f64(payload[first_len:])


def load_model(path, dataset: Dataset | None = None):
    """Load a checkpoint; hull-GAN bundles need their source dataset to
    rebuild the anchor banks from the stored row indices."""
    blob = Path(path).read_bytes()
    if blob[:4] != b"PGNN":
        raise ValueError("bad magic: not a model checkpoint")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != _BUNDLE_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    nets: dict[str, nn.Network] = {}
    raw: dict[str, bytes] = {}
    meta: dict = {}
    for name, payload in _iter_sections(blob, 6):
        if name == "meta":
            meta = json.loads(payload.decode("utf-8"))
        elif name.startswith("net:"):
            nets[name[4:]] = nn.load_network(payload)
        else:
            raw[name] = payload

    kind = meta.get("kind")
    if kind == "plain":
        return PlainModel(nets["f"], nets["c"], meta["num_classes"])
    if kind == "vanilla_gan":
        return VanillaGanModel(nets["g"], nets["d"], meta["latent_dim"])
    if kind == "cgan":
        return CGanModel(nets["g"], nets["d"], meta["latent_dim"], meta["num_classes"])
    if kind != "hullgan":
        raise ValueError(f"unknown checkpoint kind {kind!r}")

    payload = raw["bank"]
    (k,) = struct.unpack_from("<I", payload, 0)
    offset = 4
    indices = []
    for _ in range(k):
        (cnt,) = struct.unpack_from("<I", payload, offset)
        offset += 4
        idx = np.frombuffer(payload, dtype="<u4", count=cnt, offset=offset).astype(np.int64)
        offset += 4 * cnt
        indices.append(idx)
    (nlen,) = struct.unpack_from("<H", payload, offset)
    ds_name = payload[offset + 2:offset + 2 + nlen].decode("utf-8")

    if dataset is None:
        raise ValueError("loading a hull-GAN checkpoint requires its source dataset")
    if dataset.name != ds_name:
        raise ValueError(
            f"checkpoint banks reference dataset {ds_name!r}, got {dataset.name!r}"
        )
    f_net = nets["f"]
    anchors = [extract_features(f_net, dataset.features[idx]) for idx in indices]
    bank = ClassBank(anchors, indices, ds_name)

    conditioner = None
    if "conditioner" in raw:
        means, variances = _split_f64_pair(raw["conditioner"])
        conditioner = LatentConditioner(means, variances)
    pr, order = _split_f64_pair(raw["priors"])
    priors = ClassPriors(pr, order.astype(np.int64))
    g = GeneratorParams(nets["g.q"], nets["g.p"], bank, meta["latent_dim"])
    return HullGanModel(f_net, nets["c"], nets["d"], g, conditioner, priors, meta["num_classes"])
