"""
Single-trial detection and false-alarm rates, overall and per user class.
"""
import logging
from dataclasses import asdict, dataclass

import numpy as np

from bagod_backend.errors import ConfigurationError

logger = logging.getLogger(__name__)

METRIC_FIELDS = ('p_d', 'p_fa', 'p_d_s', 'p_fa_s', 'p_d_m', 'p_fa_m')


@dataclass(frozen=True)
class Metrics:
    p_d: float
    p_fa: float
    p_d_s: float
    p_fa_s: float
    p_d_m: float
    p_fa_m: float
    flags: tuple = ()

    def __post_init__(self):
        for name in METRIC_FIELDS:
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigurationError(f"{name}={value} outside [0, 1]")

    def as_dict(self) -> dict:
        data = asdict(self)
        data['flags'] = list(self.flags)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> 'Metrics':
        return cls(**{name: data[name] for name in METRIC_FIELDS}, flags=tuple(data.get('flags', ())))


def detection_rates(true_active, est_active, population, label: str = '') -> tuple:
    """
    (|S & S_hat| / |S|, |S_hat - S| / (K - |S|)) over ``population``.
    An empty S gives p_d = 1 and a saturated population gives p_fa = 0,
    both flagged.
    """
    population = frozenset(population)
    true_active = frozenset(true_active) & population
    est_active = frozenset(est_active) & population
    flags = []
    if true_active:
        p_d = len(true_active & est_active) / len(true_active)
    else:
        p_d = 1.0
        flags.append(f'no_active{label}')
    inactive = len(population) - len(true_active)
    if inactive > 0:
        p_fa = len(est_active - true_active) / inactive
    else:
        p_fa = 0.0
        flags.append(f'no_inactive{label}')
    return p_d, p_fa, flags


def compute_metrics(report, truth) -> Metrics:
    """
    Rates of one trial. ``report`` is a DetectionReport or any set of
    estimated active user ids; ``truth`` a Scenario. Ids outside the
    population are ignored.
    """
    est_active = getattr(report, 'est_active', report)
    population = frozenset(user.user_id for user in truth.users)
    unknown = frozenset(est_active) - population
    if unknown:
        logger.warning("ignoring %d estimated ids outside the population", len(unknown))

    p_d, p_fa, flags = detection_rates(truth.active_ids, est_active, population)
    p_d_s, p_fa_s, flags_s = detection_rates(truth.active_ids, est_active, truth.stationary_ids, '_stationary')
    p_d_m, p_fa_m, flags_m = detection_rates(truth.active_ids, est_active, truth.mobile_ids, '_mobile')
    return Metrics(p_d, p_fa, p_d_s, p_fa_s, p_d_m, p_fa_m, flags=tuple(flags + flags_s + flags_m))


def mean_metrics(items) -> Metrics:
    """Monte-Carlo average of single-trial metrics."""
    items = list(items)
    if not items:
        raise ConfigurationError("cannot average an empty list of metrics")
    means = {name: float(np.mean([getattr(m, name) for m in items])) for name in METRIC_FIELDS}
    flags = sorted({flag for m in items for flag in m.flags})
    return Metrics(**means, flags=tuple(flags))
