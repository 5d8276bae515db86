"""
Finite conditional problems with exact probability tables.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from guidefree.common.utils import ConfigError, NormalizationError
from guidefree.numerics.rng import Rng

PROBABILITY_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class DiscreteProblem:
    """
    Table p(x|c) of shape [S, M] (columns are distributions over the support), class priors p(c) and an optional
    reference table p_ref(x|c) of the same shape.
    """
    table: np.ndarray
    priors: np.ndarray
    reference: Optional[np.ndarray] = None
    marginal: np.ndarray = field(init=False)

    def __post_init__(self):
        table = np.asarray(self.table, dtype=np.float64)
        priors = np.asarray(self.priors, dtype=np.float64)
        object.__setattr__(self, 'table', table)
        object.__setattr__(self, 'priors', priors)
        if table.ndim != 2 or priors.shape != (table.shape[1],):
            raise ConfigError('problem.table', 'shape {} does not match {} priors'.format(table.shape, len(priors)))
        _check_columns(table, 'problem.table')
        _check_columns(priors[:, None], 'problem.priors')
        if self.reference is not None:
            reference = np.asarray(self.reference, dtype=np.float64)
            if reference.shape != table.shape:
                raise ConfigError('problem.reference', 'shape {} != {}'.format(reference.shape, table.shape))
            _check_columns(reference, 'problem.reference')
            object.__setattr__(self, 'reference', reference)
        object.__setattr__(self, 'marginal', table @ priors)

    @property
    def support_size(self) -> int:
        return self.table.shape[0]

    @property
    def num_classes(self) -> int:
        return self.table.shape[1]

    def densities(self, x: int, c: int) -> Tuple[float, float]:
        """
        (p(x|c), p(x)) by exact lookup.
        """
        if not 0 <= x < self.support_size or not 0 <= c < self.num_classes:
            raise IndexError('index (x={}, c={}) out of range for S={}, M={}'.format(
                x, c, self.support_size, self.num_classes))
        return float(self.table[x, c]), float(self.marginal[x])

    def with_reference(self, reference: np.ndarray) -> DiscreteProblem:
        return DiscreteProblem(self.table, self.priors, reference)

    def mixture_ref(self, eta: float) -> np.ndarray:
        """
        Leaky base model p_ref = (1 - eta) p(x|c) + eta p(x).
        """
        if not 0.0 <= eta <= 1.0:
            raise ValueError('eta must lie in [0, 1], got {}'.format(eta))
        return (1.0 - eta) * self.table + eta * self.marginal[:, None]

    def gamma_ref(self, beta: float) -> np.ndarray:
        """
        Reference table proportional to p(x|c)^(1 - 1/beta) * p(x)^(1/beta), renormalized per column.

        beta = 1 gives p(x) in every column. For beta > 1 entries with p(x|c) = 0 are 0. For beta < 1 the factor
        p(x|c)^(1 - 1/beta) is infinite where p(x|c) = 0 < p(x), so a column holding such entries puts all of its
        mass on them, in proportion to p(x)^(1/beta). Entries with p(x) = 0 are 0 for every beta.
        """
        if not beta > 0:
            raise ValueError('beta must be positive, got {}'.format(beta))
        exponent = 1.0 - 1.0 / beta
        live = np.broadcast_to(self.marginal[:, None] > 0, self.table.shape)
        log_values = np.full(self.table.shape, -np.inf)
        with np.errstate(divide='ignore'):
            log_marginal = np.broadcast_to(np.log(self.marginal)[:, None], self.table.shape) / beta
            if exponent == 0.0:
                log_values[live] = log_marginal[live]
            else:
                positive = live & (self.table > 0)
                log_values[positive] = exponent * np.log(self.table[positive]) + log_marginal[positive]
        if exponent < 0.0:
            infinite = live & (self.table == 0)
            columns = infinite.any(axis=0)
            log_values[:, columns] = np.where(infinite[:, columns], log_marginal[:, columns], -np.inf)
        column_max = log_values.max(axis=0)
        if np.any(~np.isfinite(column_max)):
            raise NormalizationError('gamma reference has an all-zero column')
        values = np.exp(log_values - column_max)
        return values / values.sum(axis=0)

    def to_config(self) -> Dict[str, Any]:
        config = {'kind': 'discrete', 'table': self.table.tolist(), 'priors': self.priors.tolist()}
        if self.reference is not None:
            config['reference'] = self.reference.tolist()
        return config

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> DiscreteProblem:
        for key in ('table', 'priors'):
            if key not in config:
                raise ConfigError('problem.{}'.format(key), 'missing field')
        return cls(np.array(config['table']), np.array(config['priors']), config.get('reference'))


def _check_columns(table: np.ndarray, path: str):
    if np.any(table < 0) or np.any(np.abs(table.sum(axis=0) - 1.0) > PROBABILITY_TOLERANCE):
        raise ConfigError(path, 'columns must be probability vectors')


def random_problem(support_size: int, num_classes: int, rng: Rng) -> DiscreteProblem:
    """
    Dirichlet(1, ..., 1) class columns and Dirichlet(1, ..., 1) priors.
    """
    table = rng.dirichlet(np.ones(support_size), size=num_classes).T
    priors = rng.dirichlet(np.ones(num_classes))
    return DiscreteProblem(table / table.sum(axis=0), priors / priors.sum())


def canonical_problem() -> DiscreteProblem:
    return DiscreteProblem(np.array([[0.7, 0.1], [0.2, 0.2], [0.1, 0.7]]), np.array([0.5, 0.5]))
