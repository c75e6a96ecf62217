from blastlab.metrics.report import (
    MetricsReport,
    TimestepRewardMatrix,
    action_distribution,
    derive_metrics,
    histogram_csv,
    per_agent_timestep_rewards,
)

__all__ = [
    "MetricsReport", "TimestepRewardMatrix", "action_distribution", "derive_metrics",
    "histogram_csv", "per_agent_timestep_rewards",
]
