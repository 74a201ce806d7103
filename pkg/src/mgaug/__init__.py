"""Two-loop meta-learning with meta-gradients augmented by pruned sub-networks.

Layers, bottom up: ``autodiff`` (tape engine), ``model`` (MLP parameters,
masks, slimming, checkpoints), ``tasks`` (Gaussian class banks, episodes),
``pruning`` (carrying-amount scores and the three pruning strategies),
``meta`` (inner loops, the augmented outer update, evaluation), ``pacbayes``
(the sparsity-aware generalization bound), ``probes`` (memorization and
reactivation probes), and ``harness`` (configs, training runs, the CLI).
"""

from .autodiff import NonFiniteError, ShapeError, Tape, Tensor
from .harness import Adam, MetricsRow, RunConfig, RunResult, Sgd, make_config, resume, run
from .meta import (EvalResult, InnerResult, MetaStepConfig, MetaUpdateReport,
                   evaluate, inner_fomaml, inner_protonet, meta_step_mgaug)
from .model import (Gradients, Mask, ParamSet, apply_mask, forward, forward_masked,
                    init_params, load_checkpoint, save_checkpoint, slim, slim_mask)
from .pacbayes import BoundInputs, BoundTerms, bound, bound_terms, kl_term
from .probes import (HatProfile, ReactivationReport, memorization_probe, profile_to_csv,
                     reactivation_probe)
from .pruning import (MMCAScores, PruningPlan, build_mask_cp, build_mask_pp, build_plan_wp,
                      mask_from_rle, mask_to_rle, mmca, sample_rho)
from .tasks import ClassBank, Episode, load_bank, make_bank, sample_episode, save_bank

__version__ = "0.1.0"
