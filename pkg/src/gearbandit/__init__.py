"""Indexability analysis and index policies for multi-gear bandits.

A multi-gear bandit is a finite Markov decision process whose actions
("gears") are ordered by strictly increasing resource consumption. This
package computes the model's marginal productivity index by a downshift
adaptive-greedy algorithm, certifies the conditions under which that index
characterizes optimal policies for every resource price, cross-checks the
result against an independent Bellman-equation solver, and applies the index
to bound and heuristically solve the problem of running several such
projects under a shared peak resource budget.
"""

from .average import (AverageMetricBundle, ChainStructureReport,
                      check_unichain_and_accessibility, evaluate_policy_average,
                      recurrent_classes, run_ds_average)
from .dsindex import (MONOTONE_EPS, IndexStep, IndexTable, Pcl1Witness,
                      Pcl2Witness, PclCertificate, check_pcl, recursive_update,
                      run_ds, verify_index_table_direct)
from .errors import (ConnectednessError, EnumerationCapError, GearBanditError,
                     InvalidShiftError, MismatchedStatesError, ModelFormatError,
                     MpUndefinedError, MultichainPolicyError, UnbracketableError)
from .families import (ConnectednessReport, PolicyFamily, check_connectedness,
                       family_from_spec)
from .joint import (DualSolution, JointDpResult, JointInstance, PolicyValue,
                    all_passive_policy, downshift_policy, downshift_policy_action,
                    evaluate_joint_policy, feasible_actions, lagrangian_bound,
                    myopic_policy, random_feasible_policy, solve_joint_dp,
                    validate_instance)
from .metrics import (MP_POSITIVITY_EPS, MetricBundle, ModifiedCosts,
                      OccupancyVector, evaluate_policy, evaluate_resource,
                      marginal_cost, marginal_resource, modified_costs,
                      mp_metric, occupancies, uniform_initial)
from .model import (MultiGearModel, PolicyOrder, StateGearPair, StationaryPolicy,
                    Violation, policy_order, shift, validate)
from .oracle import (OPTIMALITY_EPS, DaiBracket, IndexabilityVerdict,
                     LambdaSolution, bracket_dai, greedy_policy,
                     solve_lambda_price, verify_indexability)
from .randomgen import random_instance, random_model, random_policy

__version__ = "0.1.0"
