"""Natural policy gradient laboratory for finite discounted MDPs."""
from npglab.features import FeatureMap, random_projection_features, tabular_features
from npglab.mdp import Mdp, exact_q, exact_v, optimal_policy
from npglab.oracle import OracleConfig
from npglab.policy import LogLinearPolicy
from npglab.solver import constant_schedule, default_eta0, geometric_schedule, run

__version__ = "0.1.0"
