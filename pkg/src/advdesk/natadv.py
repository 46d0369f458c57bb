"""Latent-space adversarial search on 2-D synthetic data.

A weight-clipped Wasserstein GAN learns the data distribution, an inverter
maps data points back into the latent space, and two search procedures look
for the nearest latent vector whose generated image flips a classifier:
one grows rings outward from the inverted point, the other starts wide and
keeps shrinking its radius toward the tightest success found.

Image-scale generation is out of scope; everything here is sized for 2-D
toy tasks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, ParameterError, ShapeError
from .nn import (
    Array,
    Model,
    _backprop,
    _forward_full,
    _unpack_dataset,
    forward_batch,
    init_model,
    predict,
    predict_batch,
)


@dataclass
class GanBundle:
    """Generator, critic, and (optionally) inverter trained on one task."""

    generator: Model
    critic: Model
    inverter: Model | None
    z_dim: int
    clip_c: float

    def __post_init__(self) -> None:
        if self.generator.input_dim != self.z_dim:
            raise ShapeError("generator input dim must equal z_dim")
        if self.critic.input_dim != self.generator.output_dim:
            raise ShapeError("critic input dim must equal generator output dim")
        if self.inverter is not None:
            if (self.inverter.input_dim, self.inverter.output_dim) != (
                self.generator.output_dim,
                self.generator.input_dim,
            ):
                raise ShapeError("inverter dims must mirror the generator")
        if not (self.clip_c > 0):
            raise ParameterError(f"clip_c must be > 0, got {self.clip_c}")


@dataclass
class RingTrace:
    iteration: int
    radius: float
    candidate_count: int
    best_delta_z: float   # NaN until a success exists
    success: bool


@dataclass
class LatentSearchResult:
    z_star: Array | None
    x_star: Array | None
    delta_z_norm: float   # ||z_star - I(x)||; inf on failure
    classifier_queries: int
    success: bool
    trace: list[RingTrace] = field(default_factory=list)


def _clip_params(model: Model, bound: float) -> None:
    for w in model.weights:
        np.clip(w, -bound, bound, out=w)
    for b in model.biases:
        np.clip(b, -bound, bound, out=b)


def _ascend(model: Model, grads, lr: float) -> None:
    for l, (dw, db) in enumerate(grads):
        model.weights[l] += lr * dw
        model.biases[l] += lr * db


def _critic_grads(critic: Model, batch: Array, weight: float):
    """Gradients of ``weight * mean(critic(batch))`` w.r.t. the critic parameters."""
    logits, hidden, pre = _forward_full(critic, batch)
    seed = np.full_like(logits, weight / batch.shape[0])
    grads, _ = _backprop(critic, batch, hidden, pre, seed)
    return float(np.mean(logits)), grads


def wgan_train(
    dataset2d,
    z_dim: int,
    arch,
    n_critic: int,
    clip_c: float,
    steps: int,
    lr: float,
    seed: int,
    batch_size: int = 64,
) -> tuple[Model, Model]:
    """Alternating Wasserstein training with weight clipping.

    Each of the ``steps`` rounds runs ``n_critic`` critic updates ascending
    ``mean C(x) - mean C(G(z))`` (every critic parameter clamped to
    [-clip_c, clip_c] after each update), then one generator update ascending
    ``mean C(G(z))``. Latent noise is standard normal. Deterministic given
    the seed.
    """
    if not (clip_c > 0):
        raise ParameterError(f"clip_c must be > 0, got {clip_c}")
    features, _ = _unpack_dataset(dataset2d)
    if features.shape[0] == 0:
        raise ParameterError("dataset must be nonempty")
    data_dim = features.shape[1]
    rng = np.random.default_rng(seed)
    generator = init_model((z_dim, *arch, data_dim), activation="tanh", seed=seed)
    critic = init_model((data_dim, *arch, 1), activation="tanh", seed=seed + 1)
    n = features.shape[0]
    for step in range(steps):
        for _ in range(n_critic):
            idx = rng.integers(0, n, size=batch_size)
            real = features[idx]
            z = rng.standard_normal((batch_size, z_dim))
            fake = forward_batch(generator, z).logits
            real_mean, real_grads = _critic_grads(critic, real, +1.0)
            fake_mean, fake_grads = _critic_grads(critic, fake, -1.0)
            if not (math.isfinite(real_mean) and math.isfinite(fake_mean)):
                raise DivergenceError(f"critic objective became non-finite at step {step}")
            grads = [(a[0] + b[0], a[1] + b[1]) for a, b in zip(real_grads, fake_grads)]
            _ascend(critic, grads, lr)
            _clip_params(critic, clip_c)
            assert all(np.max(np.abs(w)) <= clip_c for w in critic.weights), "clip invariant broken"
        z = rng.standard_normal((batch_size, z_dim))
        g_logits, g_hidden, g_pre = _forward_full(generator, z)
        c_logits, c_hidden, c_pre = _forward_full(critic, g_logits)
        if not np.all(np.isfinite(c_logits)):
            raise DivergenceError(f"generator objective became non-finite at step {step}")
        seed_grad = np.full_like(c_logits, 1.0 / batch_size)
        _, d_fake = _backprop(critic, g_logits, c_hidden, c_pre, seed_grad)
        gen_grads, _ = _backprop(generator, z, g_hidden, g_pre, d_fake)
        _ascend(generator, gen_grads, lr)
    return generator, critic


def inverter_train(
    generator: Model,
    dataset2d,
    lam: float,
    steps: int,
    lr: float,
    seed: int,
    arch=None,
    batch_size: int = 64,
) -> tuple[Model, dict[str, float]]:
    """Fit an inverter I minimizing reconstruction plus weighted round-trip error.

    The objective is ``E_x ||G(I(x)) - x||^2 + lam * E_z ||z - I(G(z))||^2``:
    the first term (reconstruction error) makes G(I(x)) land back on x, the
    second (divergence error) makes I undo G on latent samples. The generator
    stays frozen. Returns the inverter and the final values of both terms
    (the divergence term is reported even when lam=0 leaves it unweighted).
    """
    if lam < 0:
        raise ParameterError(f"lam must be >= 0, got {lam}")
    features, _ = _unpack_dataset(dataset2d)
    data_dim = features.shape[1]
    z_dim = generator.input_dim
    if generator.output_dim != data_dim:
        raise ShapeError("generator output dim must match the dataset")
    if arch is None:
        arch = tuple(reversed(generator.layer_dims[1:-1]))
    rng = np.random.default_rng(seed)
    inverter = init_model((data_dim, *arch, z_dim), activation="tanh", seed=seed + 2)
    n = features.shape[0]
    recon_term = div_term = float("nan")
    for step in range(steps):
        idx = rng.integers(0, n, size=batch_size)
        xb = features[idx]
        zb = rng.standard_normal((batch_size, z_dim))
        # reconstruction path: x -> I -> G -> compare with x
        u_logits, u_hidden, u_pre = _forward_full(inverter, xb)
        r_logits, r_hidden, r_pre = _forward_full(generator, u_logits)
        diff_x = r_logits - xb
        recon_term = float(np.mean(np.sum(diff_x * diff_x, axis=1)))
        d_r = 2.0 * diff_x / batch_size
        _, d_u = _backprop(generator, u_logits, r_hidden, r_pre, d_r)
        grads_recon, _ = _backprop(inverter, xb, u_hidden, u_pre, d_u)
        # round-trip path: z -> G -> I -> compare with z
        gz = forward_batch(generator, zb).logits
        w_logits, w_hidden, w_pre = _forward_full(inverter, gz)
        diff_z = w_logits - zb
        div_term = float(np.mean(np.sum(diff_z * diff_z, axis=1)))
        d_w = 2.0 * lam * diff_z / batch_size
        grads_div, _ = _backprop(inverter, gz, w_hidden, w_pre, d_w)
        total = recon_term + lam * div_term
        if not math.isfinite(total):
            raise DivergenceError(f"inverter loss became non-finite at step {step}")
        for l in range(len(inverter.weights)):
            inverter.weights[l] -= lr * (grads_recon[l][0] + grads_div[l][0])
            inverter.biases[l] -= lr * (grads_recon[l][1] + grads_div[l][1])
    return inverter, {"reconstruction": recon_term, "divergence": div_term}


def reconstruction_error(generator: Model, inverter: Model, features: Array) -> float:
    """Mean ||G(I(x)) - x|| over the rows of ``features``."""
    recon = forward_batch(generator, forward_batch(inverter, features).logits).logits
    return float(np.mean(np.linalg.norm(recon - features, axis=1)))


def round_trip_error(generator: Model, inverter: Model, z_batch: Array) -> float:
    """Mean ||z - I(G(z))|| over the rows of ``z_batch``."""
    back = forward_batch(inverter, forward_batch(generator, z_batch).logits).logits
    return float(np.mean(np.linalg.norm(back - z_batch, axis=1)))


@dataclass
class GanLossReport:
    original_gan_value: float      # E log sigma(C(x)) + E log(1 - sigma(C(G(z))))
    critic_objective: float        # E C(x) - E C(G(z))
    generator_objective: float     # E C(G(z))


def gan_loss_eval(generator: Model, critic: Model, data_batch: Array, z_batch: Array) -> GanLossReport:
    """Diagnostic evaluation of both GAN value functions; never used to train.

    The critic output is squashed through a sigmoid for the original
    cross-entropy value so it reads as a probability.
    """
    data_batch = np.asarray(data_batch, dtype=np.float64)
    z_batch = np.asarray(z_batch, dtype=np.float64)
    if data_batch.shape[0] == 0 or z_batch.shape[0] == 0:
        raise ParameterError("batches must be nonempty")
    c_real = forward_batch(critic, data_batch).logits[:, 0]
    fake = forward_batch(generator, z_batch).logits
    c_fake = forward_batch(critic, fake).logits[:, 0]
    sig_real = 1.0 / (1.0 + np.exp(-c_real))
    sig_fake = 1.0 / (1.0 + np.exp(-c_fake))
    value = float(np.mean(np.log(np.maximum(sig_real, 1e-300)))
                  + np.mean(np.log(np.maximum(1.0 - sig_fake, 1e-300))))
    return GanLossReport(
        original_gan_value=value,
        critic_objective=float(np.mean(c_real) - np.mean(c_fake)),
        generator_objective=float(np.mean(c_fake)),
    )


# ---------------------------------------------------------------------------
# Latent searches
# ---------------------------------------------------------------------------


def _sample_shell(rng, center: Array, r_lo: float, r_hi: float, count: int) -> Array:
    """Uniform points in the d-dimensional shell r_lo < ||z - center|| <= r_hi."""
    d = center.size
    direction = rng.standard_normal((count, d))
    direction /= np.maximum(np.linalg.norm(direction, axis=1, keepdims=True), 1e-300)
    u = rng.uniform(0.0, 1.0, size=(count, 1))
    radius = (r_lo**d + u * (r_hi**d - r_lo**d)) ** (1.0 / d)
    return center + direction * radius


def _invert(inverter: Model, x: Array) -> Array:
    return forward_batch(inverter, np.asarray(x, dtype=np.float64)[None, :]).logits[0]


def iterative_stochastic_search(
    generator: Model,
    inverter: Model,
    classifier: Model,
    x: Array,
    delta_r: float,
    n_per_ring: int,
    max_radius: float,
    seed: int,
) -> LatentSearchResult:
    """Expand rings around the inverted point until a generated sample flips
    the classifier.

    Ring k covers radii (k*delta_r, (k+1)*delta_r]; each ring draws
    ``n_per_ring`` latent candidates uniformly by volume. Within the first
    ring containing any label flip, the candidate nearest the start point
    wins. Exhausting ``max_radius`` returns a failure result. Every classifier
    evaluation counts as one query.
    """
    if not (delta_r > 0):
        raise ParameterError(f"delta_r must be > 0, got {delta_r}")
    rng = np.random.default_rng(seed)
    z0 = _invert(inverter, x)
    original = predict(classifier, np.asarray(x, dtype=np.float64))
    queries = 1
    trace: list[RingTrace] = []
    r = 0.0
    iteration = 0
    while r < max_radius - 1e-15:
        r_hi = min(r + delta_r, max_radius)
        cands = _sample_shell(rng, z0, r, r_hi, n_per_ring)
        gen = forward_batch(generator, cands).logits
        labels = predict_batch(classifier, gen)
        queries += n_per_ring
        flipped = labels != original
        if np.any(flipped):
            norms = np.linalg.norm(cands - z0, axis=1)
            norms[~flipped] = np.inf
            best = int(np.argmin(norms))
            trace.append(RingTrace(iteration, r_hi, n_per_ring, float(norms[best]), True))
            return LatentSearchResult(
                z_star=cands[best],
                x_star=gen[best],
                delta_z_norm=float(norms[best]),
                classifier_queries=queries,
                success=True,
                trace=trace,
            )
        trace.append(RingTrace(iteration, r_hi, n_per_ring, float("nan"), False))
        r = r_hi
        iteration += 1
    return LatentSearchResult(
        z_star=None, x_star=None, delta_z_norm=float("inf"),
        classifier_queries=queries, success=False, trace=trace,
    )


def hybrid_shrinking_search(
    generator: Model,
    inverter: Model,
    classifier: Model,
    x: Array,
    r_hi: float,
    n_per_iter: int,
    iters: int,
    seed: int,
) -> LatentSearchResult:
    """Start wide and keep tightening the radius toward the best success.

    Each round samples uniformly in the ball of the current radius; any label
    flip closer than the best so far shrinks the radius to that distance.
    The returned distance can only tighten from the first success, and the
    query count is fixed at ``1 + iters * n_per_iter``.
    """
    if not (r_hi > 0):
        raise ParameterError(f"r_hi must be > 0, got {r_hi}")
    rng = np.random.default_rng(seed)
    z0 = _invert(inverter, x)
    original = predict(classifier, np.asarray(x, dtype=np.float64))
    queries = 1
    trace: list[RingTrace] = []
    best_z = None
    best_x = None
    best_norm = float("inf")
    radius = r_hi
    for iteration in range(iters):
        cands = _sample_shell(rng, z0, 0.0, radius, n_per_iter)
        gen = forward_batch(generator, cands).logits
        labels = predict_batch(classifier, gen)
        queries += n_per_iter
        flipped = labels != original
        if np.any(flipped):
            norms = np.linalg.norm(cands - z0, axis=1)
            norms[~flipped] = np.inf
            idx = int(np.argmin(norms))
            if norms[idx] < best_norm:
                best_norm = float(norms[idx])
                best_z = cands[idx]
                best_x = gen[idx]
                radius = best_norm
        trace.append(RingTrace(
            iteration, radius, n_per_iter,
            best_norm if best_z is not None else float("nan"),
            best_z is not None,
        ))
    if best_z is None:
        return LatentSearchResult(
            z_star=None, x_star=None, delta_z_norm=float("inf"),
            classifier_queries=queries, success=False, trace=trace,
        )
    return LatentSearchResult(
        z_star=best_z, x_star=best_x, delta_z_norm=best_norm,
        classifier_queries=queries, success=True, trace=trace,
    )
