"""Few-shot classification head that fuses three levels of descriptor similarity.

Part-level, pixel-level and distribution-level similarities between local
descriptor sets, a learnable fusion layer, and an episodic N-way M-shot
evaluation harness.
"""

from .bank_io import load_bank, write_bank
from .descriptors import part_view, pixel_view
from .episodes import (Episode, FeatureBank, Split, SyntheticSpec, generate_synthetic,
                       sample_episode, task_seed)
from .errors import (BankFormatError, InvalidArgumentError, MMLError, NumericalDomainError)
from .fusion import FusionWeights, ce_loss, fuse, train_step
from .harness import RunConfig, RunReport, evaluate, sweep, train_fusion
from .metrics import (BranchScores, DistributionKind, GaussianStats, MetricConfig,
                      branch_scores, episode_scores, fit_gaussian, kl_divergence, part_score,
                      pixel_score, wasserstein_approx, wasserstein_exact)
from .tensor import cosine_matrix, covariance, mean_vector, row_topk_sum

__version__ = "0.1.0"
