"""Systemic risk measures for random vectors and risk-averse two-stage
planning on wireless information-exchange networks."""

from .distributions import DiscreteScalarDistribution, DiscreteVectorDistribution
from .risk import (AxiomCheckResult, AxiomFailure, RiskSpec, check_axioms,
                   evaluate_risk, risk_subgradient)
from .systemic import (AggregationWeights, ScalarizationSet,
                       individual_risk_profile, scalarize_max,
                       systemic_risk_aggregated, systemic_risk_linear)
from .multivariate import (DegenerateEventError, VmavarResult, mavar,
                           p_efficient_points, vmavar_scalarized)
from .solver import (QpProblem, QpSolution, SolveStatus, batch_box_qp,
                     solve_lp, solve_qp)
from .two_stage import (CutPool, MasterSolution, ScenarioSolution,
                        SecondStageScenario, TraceRow, TwoStageInstance,
                        TwoStageIterationError, TwoStageResult,
                        feasible_configurations, solve_master,
                        solve_second_stage_centralized, solve_two_stage,
                        trace_to_csv)
from .adal import (AdalConfig, AdalResult, AdalState, AdalStatus,
                   DecomposedScenario, NodeSolve, adal_iterate,
                   local_subproblem, residual_trace_to_csv, run_adal,
                   run_adal_batch)
from .wireless import (ConnectivityError, WirelessConfig, WirelessScenario,
                       assemble_second_stage, build_instance,
                       check_connectivity, delivered_proportion, desk_config,
                       generate_instance, generate_scenarios, info_rate,
                       instance_from_json, instance_to_json, make_scenario,
                       paper_config, per_robot_losses, rate, rate_array,
                       unpack_solution)
from .experiments import (AggregationReport, AggregationRow,
                          MultivariateReport, MultivariateRow,
                          compare_aggregation, compare_multivariate,
                          comparison_vector, wireless_adal_config)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
