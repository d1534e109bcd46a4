"""Feature-space GAN that perturbs malware bit-vectors toward the benign
region of a black-box detector.

The generator maps a malware vector m plus 10 uniform noise inputs to
per-feature probabilities; features are only ever added (elementwise max
with m), never removed, so the construction is functionality-preserving by
design. The discriminator is a substitute model trained only on the black
box's *labels*, and supplies the gradient the generator trains against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import detectors, nn

EPSILON = 1e-7


class DegenerateData(ValueError):
    pass


@dataclass(frozen=True)
class GanConfig:
    epochs: int = 100
    batch_size: int = 32
    noise_width: int = 10
    binarize_threshold: float = 0.5
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


def build_generator(vocab_width: int, seed: int, noise_width: int = 10) -> nn.DenseNet:
    """input (m ++ z) -> 256 -> 256 LeakyReLU(0.01) -> vocab_width sigmoid."""
    return nn.init_dense(
        [vocab_width + noise_width, 256, 256, vocab_width],
        [nn.ACT_LEAKY_RELU, nn.ACT_LEAKY_RELU, nn.ACT_SIGMOID],
        seed=seed,
    )


def build_discriminator(vocab_width: int, seed: int) -> nn.DenseNet:
    """Same hidden trunk, single sigmoid output: P(input is malware)."""
    return nn.init_dense(
        [vocab_width, 256, 256, 1],
        [nn.ACT_LEAKY_RELU, nn.ACT_LEAKY_RELU, nn.ACT_SIGMOID],
        seed=seed,
    )


def sample_noise(config: GanConfig, rng: np.random.Generator, n: int = 1) -> np.ndarray:
    """n rows of noise_width i.i.d. uniform [0, 1) values."""
    z = rng.random((n, config.noise_width))
    return z[0] if n == 1 else z


def generate_adversarial(
    generator: nn.DenseNet, m: np.ndarray, z: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Smoothed probabilities and the binarized adversarial vector.

    probs = clamp(G(m ++ z), EPSILON, 1-EPSILON); the emitted vector is
    max(m, probs >= 0.5), so bits present in m are never cleared.
    """
    m = np.asarray(m, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    single = m.ndim == 1
    m2 = np.atleast_2d(m)
    z2 = np.atleast_2d(z)
    if m2.shape[0] != z2.shape[0]:
        raise nn.WidthMismatch("m and z disagree on batch size")
    probs = np.clip(nn.forward(generator, np.hstack([m2, z2])), EPSILON, 1.0 - EPSILON)
    bits = (probs >= 0.5).astype(np.uint8)
    m_adv = np.maximum(m2.astype(np.uint8), bits)
    if single:
        return probs[0], m_adv[0]
    return probs, m_adv


def _detector_recall(blackbox: detectors.TrainedDetector, x: np.ndarray) -> float:
    """Fraction of (all-malware) rows the black box still labels malware.
    Label queries only."""
    labels = detectors.predict_label(blackbox, x)
    return float(np.mean(labels))


def train_gan(
    config: GanConfig,
    malware_x: np.ndarray,
    benign_x: np.ndarray,
    blackbox: detectors.TrainedDetector,
) -> tuple[nn.DenseNet, nn.DenseNet, list[dict]]:
    """Alternating per-batch training.

    Discriminator: binary cross-entropy against the black box's labels on
    benign rows plus the current binarized adversarial batch.
    Generator: minimize mean log D(smoothed adversarial); gradients flow
    through the clamped probabilities, never the binarization.

    Returns (generator, discriminator, history); history has one entry per
    epoch with the black box's recall on binarized adversarial outputs for
    the full malware set.
    """
    config.validate()
    malware_x = np.atleast_2d(np.asarray(malware_x, dtype=np.float64))
    benign_x = np.atleast_2d(np.asarray(benign_x, dtype=np.float64))
    if len(malware_x) == 0 or len(benign_x) == 0:
        raise DegenerateData("need non-empty malware and benign sets")
    if malware_x.shape[1] != benign_x.shape[1]:
        raise nn.WidthMismatch("malware and benign feature widths disagree")
    width = malware_x.shape[1]

    rng = np.random.default_rng(config.seed)
    generator = build_generator(width, seed=int(rng.integers(0, 2**31)), noise_width=config.noise_width)
    discriminator = build_discriminator(width, seed=int(rng.integers(0, 2**31)))
    g_opt = nn.Adam(lr=1e-3)
    d_opt = nn.Adam(lr=1e-3)

    history: list[dict] = []
    for epoch in range(config.epochs):
        mal_order = rng.permutation(len(malware_x))
        d_losses, g_losses = [], []
        for start in range(0, len(malware_x), config.batch_size):
            take = mal_order[start:start + config.batch_size]
            m = malware_x[take]
            z = rng.random((len(m), config.noise_width))
            ben = benign_x[rng.integers(0, len(benign_x), size=len(m))]

            probs, m_adv = generate_adversarial(generator, m, z)

            # --- discriminator step: mimic the black box's labels
            d_inputs = np.vstack([ben, m_adv.astype(np.float64)])
            d_targets = np.asarray(
                detectors.predict_label(blackbox, d_inputs), dtype=np.float64
            ).reshape(-1, 1)
            d_losses.append(
                nn.train_step(
                    discriminator,
                    nn.TrainBatch(d_inputs, d_targets),
                    nn.LOSS_BCE,
                    d_opt,
                )
            )

            # --- generator step through the frozen discriminator
            g_in = np.hstack([m, z])
            g_out, g_zs, g_acts = nn.forward_cached(generator, g_in)
            clamped = np.clip(g_out, EPSILON, 1.0 - EPSILON)
            smoothed = np.maximum(m, clamped)

            d_out, d_zs, d_acts = nn.forward_cached(discriminator, smoothed)
            g_loss = float(np.mean(np.log(np.clip(d_out, 1e-12, None))))
            if not np.isfinite(g_loss):
                raise nn.NonFiniteLoss(f"generator loss is {g_loss}")
            dL_dq = 1.0 / (np.clip(d_out, 1e-12, None) * d_out.size)
            _, dL_dsmoothed = nn.backward(discriminator, d_zs, d_acts, dL_dq)
            # max() gate: gradient reaches the generator only where the
            # probability side won; the clamp contributes zero outside range.
            gate = (m == 0.0) & (g_out > EPSILON) & (g_out < 1.0 - EPSILON)
            dL_dg = np.where(gate, dL_dsmoothed, 0.0)
            g_grads, _ = nn.backward(generator, g_zs, g_acts, dL_dg)
            g_opt.step(generator.parameters(), nn.flatten_grads(g_grads))
            g_losses.append(g_loss)

        z_all = rng.random((len(malware_x), config.noise_width))
        _, adv_all = generate_adversarial(generator, malware_x, z_all)
        history.append(
            {
                "epoch": epoch,
                "detector_recall": _detector_recall(blackbox, adv_all.astype(np.float64)),
                "d_loss": float(np.mean(d_losses)),
                "g_loss": float(np.mean(g_losses)),
            }
        )
    return generator, discriminator, history


def adversarial_matrix(
    generator: nn.DenseNet, malware_x: np.ndarray, config: GanConfig, seed: int
) -> np.ndarray:
    """Binarized adversarial vectors for a malware matrix, fresh seeded noise."""
    rng = np.random.default_rng(seed)
    malware_x = np.atleast_2d(np.asarray(malware_x, dtype=np.float64))
    z = rng.random((len(malware_x), config.noise_width))
    _, m_adv = generate_adversarial(generator, malware_x, z)
    return m_adv
