"""Prometheus metrics for reidlab"""
from prometheus_client import Counter, Histogram, Gauge, Info
from prometheus_client import CollectorRegistry, generate_latest

# Create a custom registry
registry = CollectorRegistry()

# Stage metrics
stage_runs_total = Counter(
    'stage_runs_total',
    'Total number of pipeline stage runs',
    ['stage', 'status'],
    registry=registry
)

stage_duration = Histogram(
    'stage_duration_seconds',
    'Pipeline stage duration in seconds',
    ['stage'],
    buckets=(0.1, 0.5, 1, 5, 15, 30, 60, 120, 300, 600),
    registry=registry
)

active_stages = Gauge(
    'active_stages',
    'Number of currently running stages',
    ['stage'],
    registry=registry
)

# Training / attack metrics
training_loss = Gauge(
    'training_loss',
    'Last epoch mean triplet loss',
    ['model'],
    registry=registry
)

poisoned_images_total = Counter(
    'poisoned_images_total',
    'Total number of poisoned images produced',
    ['trigger'],
    registry=registry
)

eval_metric = Gauge(
    'eval_metric',
    'Latest evaluation metric values',
    ['metric'],
    registry=registry
)

# System info
system_info = Info(
    'system',
    'System information',
    registry=registry
)

system_info.info({'version': '1.0.0', 'component': 'reidlab'})


def get_metrics() -> bytes:
    """Get Prometheus metrics"""
    return generate_latest(registry)
