"""Reactive detection: squeeze comparison, autoencoder detector/reformer,
kernel density scoring, and a binary subnetwork detector.

Verdicts follow one convention: higher score means more adversarial, and
``is_adversarial == (score > threshold)``. Detectors whose natural score runs
the other way (kernel density) are negated before the verdict.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ParameterError, ShapeError, UndefinedAucError
from .nn import (
    Array,
    Model,
    TrainConfig,
    _backprop,
    _classification_grad_fn,
    _forward_full,
    _sgd_loop,
    _unpack_dataset,
    forward,
    forward_batch,
    init_model,
    one_hot,
    softmax_t,
)
from .tolerances import TOL


@dataclass
class DetectionVerdict:
    score: float
    threshold: float
    is_adversarial: bool
    detector: str
    components: dict[str, float] = field(default_factory=dict)


def _verdict(score: float, threshold: float, detector: str, components: dict | None = None) -> DetectionVerdict:
    return DetectionVerdict(
        score=float(score),
        threshold=float(threshold),
        is_adversarial=bool(score > threshold),
        detector=detector,
        components=components or {},
    )


# ---------------------------------------------------------------------------
# Squeeze-comparison detector
# ---------------------------------------------------------------------------


def squeeze_score(model: Model, x: Array, squeezers) -> tuple[float, dict[str, float]]:
    """Max L1 gap between the model's probabilities on x and on each squeezed x."""
    if not squeezers:
        raise ParameterError("squeezers must not be empty")
    base = forward(model, x).probs
    components = {}
    for i, squeezer in enumerate(squeezers):
        squeezed_probs = forward(model, squeezer(x)).probs
        components[f"squeezer_{i}"] = float(np.sum(np.abs(base - squeezed_probs)))
    return max(components.values()), components


def squeeze_detect(model: Model, x: Array, squeezers, threshold: float) -> DetectionVerdict:
    """Flag inputs whose prediction moves too much under feature squeezing.

    An input already invariant to every squeezer (a grid-aligned constant
    image, say) scores exactly 0.
    """
    score, components = squeeze_score(model, x, squeezers)
    return _verdict(score, threshold, "squeeze", components)


# ---------------------------------------------------------------------------
# Autoencoder detector and reformer
# ---------------------------------------------------------------------------


@dataclass
class Autoencoder:
    """A network trained to reproduce its input; reconstruction error measures
    distance from the training manifold."""

    model: Model
    train_mse: float

    def __post_init__(self) -> None:
        if self.model.input_dim != self.model.output_dim:
            raise ShapeError(
                f"autoencoder output dim {self.model.output_dim} must equal input dim {self.model.input_dim}"
            )

    def reconstruct(self, x: Array) -> Array:
        return forward(self.model, x).logits

    def reconstruct_batch(self, x: Array) -> Array:
        return forward_batch(self.model, x).logits


def _mse_grad_fn(model: Model, xb: Array, tb: Array):
    logits, hidden, pre = _forward_full(model, xb)
    diff = logits - tb
    batch_loss = float(np.mean(diff * diff))
    d_logits = 2.0 * diff / diff.size
    grads, _ = _backprop(model, xb, hidden, pre, d_logits)
    return batch_loss, grads


def train_autoencoder(
    dataset, hidden_dims, epochs: int, lr: float, seed: int, activation: str = "tanh"
) -> Autoencoder:
    """Fit a reconstruction network by SGD on mean squared error."""
    features, _ = _unpack_dataset(dataset)
    d = features.shape[1]
    model0 = init_model((d, *hidden_dims, d), activation=activation, seed=seed)
    model, history = _sgd_loop(
        model0, features, features, epochs, lr, batch_size=32, seed=seed, grad_fn=_mse_grad_fn
    )
    recon = forward_batch(model, features).logits
    return Autoencoder(model=model, train_mse=float(np.mean((recon - features) ** 2)))


def _js_divergence(p: Array, q: Array) -> float:
    """Jensen-Shannon divergence in nats; symmetric, bounded by ln 2."""
    m = 0.5 * (p + q)
    log_m = np.log(np.maximum(m, TOL.log_floor))

    def kl(a: Array) -> float:
        log_a = np.log(np.maximum(a, TOL.log_floor))
        return float(np.sum(np.where(a > 0, a * (log_a - log_m), 0.0)))

    return 0.5 * kl(p) + 0.5 * kl(q)


def magnet_detect(
    ae: Autoencoder,
    model: Model,
    x: Array,
    recon_threshold: float,
    div_threshold: float,
    t_div: float = 10.0,
) -> DetectionVerdict:
    """Two-part manifold detector.

    Component (a): L2 reconstruction error ||x - ae(x)||, a proxy for the
    distance between x and the clean-data manifold. Component (b): the
    Jensen-Shannon divergence between the classifier's softened outputs on x
    and on ae(x); near-manifold adversarial inputs with small reconstruction
    error still tend to land on a different side of the decision surface than
    their reconstruction. The verdict is an OR: adversarial if either
    component exceeds its threshold, encoded as
    ``score = max(recon - recon_threshold, div - div_threshold)`` against a
    zero threshold. The divergence is measured at a softened temperature so
    saturated classifier outputs still compare meaningfully.
    """
    x = np.asarray(x, dtype=np.float64)
    recon = ae.reconstruct(x)
    recon_err = float(np.linalg.norm(x - recon))
    logits_x = forward(model, x).logits
    logits_r = forward(model, recon).logits
    divergence = _js_divergence(softmax_t(logits_x, t_div), softmax_t(logits_r, t_div))
    score = max(recon_err - recon_threshold, divergence - div_threshold)
    return _verdict(
        score,
        0.0,
        "magnet",
        {
            "reconstruction_error": recon_err,
            "divergence": divergence,
            "recon_threshold": float(recon_threshold),
            "div_threshold": float(div_threshold),
        },
    )


def magnet_reform(ae_pool, x: Array, seed: int) -> tuple[Array, int]:
    """Push x toward the clean manifold with one autoencoder drawn uniformly
    from the pool (the random pick is the diversity defense: the adversary
    cannot know which reformer will run). Deterministic given the seed."""
    if not ae_pool:
        raise ParameterError("autoencoder pool must not be empty")
    rng = np.random.default_rng(seed)
    idx = int(rng.integers(len(ae_pool)))
    reformed = np.clip(ae_pool[idx].reconstruct(np.asarray(x, dtype=np.float64)), 0.0, 1.0)
    return reformed, idx


# ---------------------------------------------------------------------------
# Kernel density on final hidden features
# ---------------------------------------------------------------------------


@dataclass
class KdeBanks:
    """Per-class banks of final-hidden-layer features plus a default bandwidth."""

    banks: dict[int, Array]
    bandwidth: float


def final_hidden_features(model: Model, x_batch: Array) -> Array:
    return forward_batch(model, x_batch).hidden[-1]


def kde_fit(model: Model, dataset) -> KdeBanks:
    """Collect final-hidden-layer features per true class.

    The default bandwidth is the median pairwise feature distance divided by
    sqrt(2), which adapts the kernel to the feature scale.
    """
    features, labels = _unpack_dataset(dataset)
    class_count = getattr(dataset, "class_count", int(labels.max()) + 1)
    hidden = final_hidden_features(model, features)
    banks = {}
    for c in range(class_count):
        rows = hidden[labels == c]
        if rows.shape[0] == 0:
            raise ConfigError(f"class {c} has no samples; every class needs a feature bank")
        banks[c] = rows
    diff = hidden[:, None, :] - hidden[None, :, :]
    dists = np.sqrt(np.sum(diff * diff, axis=-1))
    upper = dists[np.triu_indices(dists.shape[0], k=1)]
    bandwidth = float(np.median(upper)) / np.sqrt(2.0) if upper.size else 1.0
    return KdeBanks(banks=banks, bandwidth=max(bandwidth, 1e-12))


def kde_score(model: Model, banks: KdeBanks, x: Array, bandwidth: float | None = None) -> float:
    """Gaussian-kernel density of x's features under its predicted class's bank.

    Low density marks inputs far from the class submanifold, which is where
    gradient attacks tend to land. Invariant to permutation of the bank.
    """
    bw = banks.bandwidth if bandwidth is None else float(bandwidth)
    if not (bw > 0):
        raise ParameterError(f"bandwidth must be > 0, got {bw}")
    result = forward(model, x)
    c = int(np.argmax(result.logits))
    if c not in banks.banks:
        raise ConfigError(f"no feature bank for predicted class {c}")
    phi = result.hidden[-1]
    diff = banks.banks[c] - phi
    sq = np.sum(diff * diff, axis=1)
    return float(np.mean(np.exp(-sq / (2.0 * bw * bw))))


def kde_verdict(model: Model, banks: KdeBanks, x: Array, threshold: float,
                bandwidth: float | None = None) -> DetectionVerdict:
    """Density negated so that higher score = more adversarial."""
    density = kde_score(model, banks, x, bandwidth)
    return _verdict(-density, threshold, "kde", {"density": density})


# ---------------------------------------------------------------------------
# Binary subnetwork detector
# ---------------------------------------------------------------------------


def binary_detector(
    model: Model,
    clean_set: Array,
    adv_set: Array,
    layer_index: int,
    detector_arch,
    train: TrainConfig,
):
    """Train a small two-class net on hidden activations to tell clean from
    adversarial inputs.

    Returns the detector model and a verdict function whose score is the
    adversarial-class probability of the pass-through features.
    """
    clean_set = np.asarray(clean_set, dtype=np.float64)
    adv_set = np.asarray(adv_set, dtype=np.float64)
    if clean_set.shape[0] == 0 or adv_set.shape[0] == 0:
        raise ParameterError("both clean and adversarial sets must be nonempty")
    hidden_clean = forward_batch(model, clean_set).hidden
    if not (0 <= layer_index < len(hidden_clean)):
        raise ParameterError(f"layer_index {layer_index} out of range for {len(hidden_clean)} hidden layers")
    feats = np.vstack([hidden_clean[layer_index], forward_batch(model, adv_set).hidden[layer_index]])
    labels = np.concatenate([np.zeros(clean_set.shape[0], dtype=np.int64),
                             np.ones(adv_set.shape[0], dtype=np.int64)])
    detector0 = init_model((feats.shape[1], *detector_arch, 2), activation="relu", seed=train.seed)
    detector, _ = _sgd_loop(
        detector0, feats, one_hot(labels, 2), train.epochs, train.lr, train.batch_size,
        train.seed, _classification_grad_fn, train.shuffle,
    )

    def score(x: Array) -> float:
        phi = forward_batch(model, np.asarray(x, dtype=np.float64)[None, :]).hidden[layer_index]
        return float(forward_batch(detector, phi).probs[0, 1])

    def verdict(x: Array, threshold: float = 0.5) -> DetectionVerdict:
        s = score(x)
        return _verdict(s, threshold, "binary", {"adversarial_probability": s})

    verdict.score = score  # type: ignore[attr-defined]
    return detector, verdict


# ---------------------------------------------------------------------------
# ROC tooling
# ---------------------------------------------------------------------------


def roc_auc(scored: list[tuple[float, bool]]) -> float:
    """Rank-based AUC (Mann-Whitney U over positive/negative pairs).

    Ties contribute 0.5, making the statistic invariant under any strictly
    monotone transform of the scores.
    """
    scores = np.array([s for s, _ in scored], dtype=np.float64)
    labels = np.array([bool(a) for _, a in scored])
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAucError("AUC needs at least one adversarial and one clean score")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    u = float(ranks[labels].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def roc_curve(scored: list[tuple[float, bool]]) -> list[tuple[float, float]]:
    """(fpr, tpr) points swept over every distinct score threshold, ends included."""
    scores = np.array([s for s, _ in scored], dtype=np.float64)
    labels = np.array([bool(a) for _, a in scored])
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAucError("ROC needs at least one adversarial and one clean score")
    points = [(0.0, 0.0)]
    for thr in sorted(set(scores), reverse=True):
        flagged = scores >= thr
        points.append(
            (float(np.sum(flagged & ~labels)) / n_neg, float(np.sum(flagged & labels)) / n_pos)
        )
    if points[-1] != (1.0, 1.0):
        points.append((1.0, 1.0))
    return points


def threshold_at_fpr(clean_scores, fpr: float = 0.05) -> float:
    """Score threshold whose flag rate on the clean validation scores is ~fpr."""
    if not (0 < fpr < 1):
        raise ParameterError(f"fpr must lie in (0, 1), got {fpr}")
    clean_scores = np.asarray(clean_scores, dtype=np.float64)
    if clean_scores.size == 0:
        raise ParameterError("clean validation scores must be nonempty")
    return float(np.quantile(clean_scores, 1.0 - fpr))
