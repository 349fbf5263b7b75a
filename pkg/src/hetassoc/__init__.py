"""User association for massive-MIMO heterogeneous networks.

Rate model and scenarios (:mod:`.model`), exact and greedy association
(:mod:`.assign`), joint association with resource sharing (:mod:`.joint`),
price and bidding games (:mod:`.games`) and seeded experiments
(:mod:`.harness`).
"""

from .assign import (MANDATORY, OPTIONAL, Assignment, brute_force_assignment, greedy_global,
                     greedy_per_bs, propfair_optimal, solve_max_weight, sum_rate_optimal, ub1)
from .flow import InfeasibleError
from .games import (bidding_game_run, price_game_run, user_best_response, verify_ne,
                    verify_stability)
from .harness import ExperimentConfig, ExperimentResult, generate_scenario
from .joint import (ResourceAllocation, brute_force_joint, dual_decomposition,
                    dual_decomposition_mandatory, greedy_joint_global, greedy_joint_per_bs)
from .model import (BaseStation, ChannelState, RateMatrix, Scenario, UserTerminal,
                    build_rate_matrix, macro_rate, path_loss, pico_rate_worstcase, sample_channel)

__version__ = "0.1.0"
