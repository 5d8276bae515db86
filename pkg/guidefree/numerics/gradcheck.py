from __future__ import annotations

from typing import Callable, List, Tuple

import numpy as np

from guidefree.numerics.network import DenoiserModel
from guidefree.numerics.rng import Rng

LossFn = Callable[[DenoiserModel], Tuple[float, List[np.ndarray]]]


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    return abs(analytic - numeric) / max(abs(analytic) + abs(numeric), floor)


def grad_check(loss_fn: LossFn, model: DenoiserModel, probe_count: int, rng: Rng, step: float = 1e-5) -> float:
    """
    Compares analytic gradients against central finite differences on randomly chosen parameters.

    :param loss_fn: Deterministic closure returning (loss, gradients in parameter order).
    :param model: The point at which gradients are compared. Not modified.
    :param probe_count: Number of scalar parameters to probe.
    :param rng: Chooses the probed parameters.
    :param step: Finite-difference step.
    :return: The maximum relative error over all probes.
    """
    _, grads = loss_fn(model)
    sizes = np.array([p.size for p in model.params])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    probes = rng.choice(offsets[-1], size=min(probe_count, offsets[-1]), replace=False)

    worst = 0.0
    for flat_index in probes:
        buffer = int(np.searchsorted(offsets, flat_index, side='right') - 1)
        index = np.unravel_index(flat_index - offsets[buffer], model.params[buffer].shape)

        shifted = [p.copy() for p in model.params]
        shifted[buffer][index] += step
        loss_plus, _ = loss_fn(model.with_params(shifted))
        shifted[buffer][index] -= 2 * step
        loss_minus, _ = loss_fn(model.with_params(shifted))

        numeric = (loss_plus - loss_minus) / (2 * step)
        worst = max(worst, relative_error(float(grads[buffer][index]), numeric))
    return worst
