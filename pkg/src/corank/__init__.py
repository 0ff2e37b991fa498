"""Collaborative ranking toolkit.

Pointwise matrix factorization with graph-sketch regularization, pairwise
ranking with near-linear kernels, listwise ranking over drawn permutations,
and the metrics, data handling, and CLI around them.
"""

from .bloom import (BloomFilter, DnaEncoding, augment_graph, bipartite_view,
                    bloom_params, dna_encode, load_encoding, save_encoding)
from .data import (CONTINUOUS, EXPLICIT, IMPLICIT, RatingsMatrix, SyntheticSpec,
                   TrainTestSplit, binarize, enumerate_comparisons,
                   generate_synthetic, load_ratings, save_ratings,
                   split_fixed_count)
from .errors import (ConfigError, CorankError, DataError, MetricError,
                     ParseError, TrainingError)
from .factors import FactorModel, load_model, save_model
from .fenwick import FenwickTree
from .graphs import Graph, erdos_renyi, load_graph, save_graph
from .listwise import (ListHyper, PermutationBatch, draw_batch,
                       grad_u_listwise, grad_v_listwise, perm_prob,
                       sql_objective, stochastic_queuing, train_sql_rank)
from .pairwise import (CrHyper, PairComparisons, RatingComparisons,
                       cr_objective, grad_v_fast, grad_v_naive, grad_v_scan_pp,
                       hessvec_v_fast, hessvec_v_scan_pp, newton_update_v,
                       train_primal_cr, update_u_ranksvm)
from .pointwise import (HyperParams, cofactor_train, graph_as_ratings,
                        grmf_objective, grmf_train, grwmf_objective,
                        grwmf_train, mf_train, rgg)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
