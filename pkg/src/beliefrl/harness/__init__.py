"""Experiment harness: configs, runner, evaluation, experts, reports, CLI."""

from .config import ExperimentConfig, PRESETS, RunConfig, derive_belief_head
from .evaluate import (AgentSemicircleController, CaptureBehavior, EvalResult,
                       REGIMES, bandit_thompson_reference,
                       bandit_uniform_reference, capture_behavior,
                       dist_marginals, dump_belief_marginals, evaluate,
                       make_thompson_controller, online_belief_nll,
                       replay_belief_nll, run_episode)
from .expert import (ExpertPolicy, ExpertResult, expert_task_info_fn,
                     label_expert_actions, oracle_controller, train_expert)
from .gradcheck import GradCheckResult, run_gradient_suite
from .metrics import MetricSeries, smooth_curve
from .run import RunArtifacts, load_checkpoint, run_experiment

__all__ = [
    "AgentSemicircleController", "CaptureBehavior", "EvalResult",
    "ExperimentConfig", "ExpertPolicy", "ExpertResult", "GradCheckResult",
    "MetricSeries", "PRESETS", "REGIMES", "RunArtifacts", "RunConfig",
    "bandit_thompson_reference", "bandit_uniform_reference",
    "capture_behavior", "derive_belief_head", "dist_marginals",
    "dump_belief_marginals", "evaluate", "expert_task_info_fn",
    "label_expert_actions", "load_checkpoint", "make_thompson_controller",
    "online_belief_nll", "oracle_controller", "replay_belief_nll",
    "run_episode", "run_experiment", "run_gradient_suite", "smooth_curve",
    "train_expert",
]
