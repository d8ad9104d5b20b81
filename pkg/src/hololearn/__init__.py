"""Learning holomorphic operators from samples with sparse Legendre polynomials and tanh networks."""
from ._kernels import BACKEND
from .harness import ExperimentSpec, relative_test_error, run_convergence, theory_overlay
from .legendre import DiscreteNorm, VectorExpansion, eval_expansion, eval_psi, eval_Psi
from .multiindex import IndexSet, MultiIndex, WeightSystem, hyperbolic_cross, weighted_cardinality
from .neural import MLP, TrainConfig, build_legendre_emulator, forward, train
from .operators import OperatorOracle, generate_training_set, oracle_from_config
from .polyfit import assemble_design, greedy_sparse_fit, least_squares_fit
from .quadrature import SparseGridRule, clenshaw_curtis, integrate, smolyak

__version__ = "0.1.0"
