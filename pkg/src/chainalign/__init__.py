"""Offline third-person imitation by spectral alignment of Markov chains."""

from .alignment import (
    AlignmentResult,
    AssignmentProblem,
    PplConfig,
    complete_permutation,
    exact_recover,
    hungarian,
    imitation_loss_bound_check,
    ppl,
    ppl_from_estimates,
)
from .generators import GeneratorSpec, Instance, generate
from .mdp import (
    OccupancyMeasure,
    PermutationMap,
    StochasticPolicy,
    TabularMDP,
    advantage,
    imitation_loss,
    induced_chain,
    occupancy,
    stationary_distribution,
    value_function,
)
from .sampling import EmpiricalChain, RngSeed, estimate, sample_trajectory
from .spectral import ChainSummary, FriendlinessCertificate, friendliness, rescale, scc_restrict

__version__ = "0.1.0"
