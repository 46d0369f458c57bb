"""advdesk: a desk-scale adversarial machine learning workbench.

A self-contained numpy engine for dense networks with exact analytic
gradients, the classic gradient-sign and saliency evasion attacks, proactive
defenses (adversarial training, distillation, feature squeezing, SVD
denoising), reactive detectors, and a latent-space adversarial search on toy
generative models. Everything is deterministic given its seeds and small
enough to study end to end.
"""

from .attacks import AttackConfig, AttackResult, bim, fgsm, illc, jsma, jsma_saliency, mifgsm
from .data import Dataset, gen_digits8x8, gen_gmm, gen_moons, load_csv, load_idx, read_pgm, write_pgm
from .defenses import (
    DistillConfig,
    SqueezeConfig,
    SvdResult,
    adversarial_train,
    distill,
    median_smooth,
    nonlocal_smooth,
    reduce_bit_depth,
    svd_decompose,
    svd_denoise,
)
from .detectors import (
    Autoencoder,
    DetectionVerdict,
    binary_detector,
    kde_fit,
    kde_score,
    magnet_detect,
    magnet_reform,
    roc_auc,
    squeeze_detect,
    train_autoencoder,
)
from .errors import AdvdeskError
from .natadv import (
    GanBundle,
    LatentSearchResult,
    gan_loss_eval,
    hybrid_shrinking_search,
    inverter_train,
    iterative_stochastic_search,
    wgan_train,
)
from .nn import (
    GradReport,
    Model,
    Sample,
    TrainConfig,
    backward,
    forward,
    gradient_check,
    init_model,
    input_jacobian,
    load_model,
    loss,
    save_model,
    softmax_t,
    train_sgd,
)

__version__ = "0.1.0"
