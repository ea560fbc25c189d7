"""Stochastic decision Petri nets: exact semantics, policy synthesis, and
Bayesian-network reductions."""

from .net import (
    Cell,
    CellOrder,
    Marking,
    NetClassification,
    RewardTable,
    Sdpn,
    Transition,
    compute_cells,
    load_net,
    net_from_dict,
    net_to_dict,
    order_cells,
    save_net,
)
from .semantics import (
    Distribution,
    PsiTransform,
    Run,
    SimulationResult,
    enumerate_runs,
    exact_value,
    fcon_value,
    psi,
    simulate,
    step_distribution,
    value_of_places,
)
from .rewrite import (
    AuxReward,
    TransitionReward,
    ValueExpression,
    check_consistency,
    config_probability,
    rewrite_rewards,
    value_expression,
    value_via_rewrite,
)
from .mdp import (
    Mdp,
    PositionalPolicy,
    best_constant_policy_via_mdp,
    compile_mdp,
    evaluate_policy,
    optimal_positional_policy,
)
from .bayes import (
    BayesNet,
    BnNode,
    MapQuery,
    MapResult,
    PrResult,
    bn_from_dict,
    bn_to_dict,
    d_map,
    d_pr,
    joint_probability,
    load_bn,
    save_bn,
)
from .reductions import (
    CnfFormula,
    ReductionCert,
    bn_to_safc,
    bn_to_safc_deactivation,
    parse_dimacs,
    reward_disjunction,
    safc_to_bn,
    safc_to_bn_assignment,
    sat_assignment_deactivation,
    sat_to_fcon,
)
from .solve import SmtScript, SolveResult, brute_force, emit_smtlib, solve_net_smt, solve_smt
from .bench import BenchConfig, BenchRecord, gen_family, run_bench

__version__ = "0.1.0"
