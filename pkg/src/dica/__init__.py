"""Discrete independent component analysis as a factor graph.

Belief propagation in reduced normal form over a bipartite graph of discrete
independent sources and discrete visible variables, with localized EM
learning of the conditional probability tables.
"""
from .errors import (CapacityError, ContradictoryEvidence, DicaError, DimensionError,
                     FormatError, MissingLabelBlock)
from .graph import (Completion, DicaModel, Evidence, MessageState, build, classify, complete,
                    drop_impossible,
                    correct, encode, generate, marginalizer, mean_image, product_coords,
                    product_index, propagate, prototype)
from .learning import (BlockStats, TrainConfig, TrainReport, collect_stats, local_loglik, train,
                       update_cpt, update_prior)
from .messages import backward_through, combine, delta, forward_through, normalize, posterior, uniform

__version__ = "0.1.0"
