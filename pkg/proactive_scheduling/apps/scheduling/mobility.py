"""Markov location process and the request-probability estimator.

``transition[i, j] = Pr{X(t) = l_j | X(t+1) = l_i}``: rows step towards the
deadline, so the estimate at slot t is a plain right-multiplication,
``p_t = pi_t L^(t-1) g^T``. Locations are 0-based indices here (l_1 is 0).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from dataclasses import field

import numpy as np
from scipy.sparse.csgraph import connected_components

from .core import ContractError
from .core import SchedulingError

logger = logging.getLogger(__name__)

ROW_SUM_TOL = 1e-12
STEADY_STATE_TOL = 1e-12
STEADY_STATE_MAX_ITER = 100_000


class ReducibleChainError(SchedulingError):
    """The chain has no unique stationary distribution"""


@dataclass(frozen=True, eq=False)
class LocationModel:
    """State space, transition matrix L and request statistics g."""

    transition: np.ndarray
    request_stats: np.ndarray
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        transition = np.array(self.transition, dtype=float)
        stats = np.array(self.request_stats, dtype=float)
        if transition.ndim != 2 or transition.shape[0] != transition.shape[1] or transition.shape[0] < 1:
            raise ContractError(f"transition matrix must be square and non-empty, got shape {transition.shape}")
        k = transition.shape[0]
        if stats.shape != (k,):
            raise ContractError(f"request statistics must have {k} entries, got shape {stats.shape}")
        if np.any(transition < 0) or np.any(transition > 1):
            raise ContractError("transition probabilities must lie in [0, 1]")
        row_sums = transition.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > ROW_SUM_TOL):
            raise ContractError(f"transition rows must sum to 1, got {row_sums.tolist()}")
        if np.any(stats < 0) or np.any(stats > 1):
            raise ContractError("request statistics must lie in [0, 1]")
        labels = tuple(self.labels) or tuple(f"l_{i + 1}" for i in range(k))
        if len(labels) != k:
            raise ContractError(f"expected {k} labels, got {len(labels)}")

        transition.setflags(write=False)
        stats.setflags(write=False)
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "request_stats", stats)
        object.__setattr__(self, "labels", labels)

    @property
    def k(self) -> int:
        return self.transition.shape[0]

    def check_location(self, location: int) -> int:
        if int(location) != location or not 0 <= location < self.k:
            raise ContractError(f"location index {location} outside 0..{self.k - 1}")
        return int(location)

    def to_dict(self) -> dict:
        return {
            "transition": self.transition.tolist(),
            "request_stats": self.request_stats.tolist(),
            "labels": list(self.labels),
        }


def transition_power(model: LocationModel, steps: int) -> np.ndarray:
    """L^steps by repeated multiplication, renormalising rows against drift."""
    if steps < 0:
        raise ContractError(f"matrix power must be non-negative, got {steps}")
    result = np.eye(model.k)
    for _ in range(steps):
        result = result @ model.transition
        result /= result.sum(axis=1, keepdims=True)
    return result


def forecast_row(model: LocationModel, location: int, t: int) -> np.ndarray:
    """Distribution of X(1) given X(t) = location: row of L^(t-1)."""
    location = model.check_location(location)
    if t < 1:
        raise ContractError(f"slot index must be >= 1, got {t}")
    return transition_power(model, t - 1)[location]


def estimate_request_probability(model: LocationModel, location: int, t: int) -> float:
    """p_t = pi_t L^(t-1) g^T for the observed location at slot t."""
    row = forecast_row(model, location, t)
    p = float(row @ model.request_stats)
    return min(max(p, 0.0), 1.0)


def request_probabilities(model: LocationModel, path) -> np.ndarray:
    """p_{Tp+1}, ..., p_2 along a path X(Tp+1), ..., X(1)."""
    path = np.asarray(path, dtype=int)
    slots = path.size
    return np.array(
        [estimate_request_probability(model, int(path[i]), slots - i) for i in range(slots - 1)],
        dtype=float,
    )


def is_irreducible(model: LocationModel) -> bool:
    n_components, _ = connected_components(model.transition > 0, directed=True, connection="strong")
    return n_components == 1


def steady_state(
    model: LocationModel,
    *,
    tol: float = STEADY_STATE_TOL,
    max_iter: int = STEADY_STATE_MAX_ITER,
) -> np.ndarray:
    """Left fixed vector mu = mu L by power iteration."""
    if model.k == 1:
        return np.ones(1)
    if not is_irreducible(model):
        raise ReducibleChainError("transition matrix is reducible")

    mu = np.zeros(model.k)
    mu[0] = 1.0
    for iteration in range(1, max_iter + 1):
        updated = mu @ model.transition
        updated /= updated.sum()
        if np.max(np.abs(updated - mu)) < tol:
            logger.debug("Power iteration converged after %d steps", iteration)
            return updated
        mu = updated
    raise ReducibleChainError(f"power iteration did not converge within {max_iter} steps (periodic chain?)")


def _draw_index(cumulative: np.ndarray, u: float) -> int:
    return int(min(np.searchsorted(cumulative, u, side="right"), cumulative.size - 1))


def sample_initial_location(model: LocationModel, rng: np.random.Generator) -> int:
    """Location at the start of the window, drawn from the stationary law."""
    return _draw_index(np.cumsum(steady_state(model)), rng.random())


def sample_location_path(model: LocationModel, start: int, length: int, rng: np.random.Generator) -> np.ndarray:
    """Locations X(Tp+1), ..., X(1) starting from ``start``."""
    start = model.check_location(start)
    if length < 1:
        raise ContractError(f"path length must be >= 1, got {length}")
    cumulative = np.cumsum(model.transition, axis=1)
    path = np.empty(length, dtype=int)
    path[0] = start
    for i, u in enumerate(rng.random(length - 1), start=1):
        path[i] = _draw_index(cumulative[path[i - 1]], u)
    return path


def sample_request(model: LocationModel, location: int, rng: np.random.Generator) -> int:
    """Bernoulli(g_location) request indicator."""
    location = model.check_location(location)
    return int(rng.random() < model.request_stats[location])


def random_model(k: int, rng: np.random.Generator) -> LocationModel:
    """Uniform entries with normalised rows for L; uniform g."""
    if k < 1:
        raise ContractError(f"need at least one location, got k={k}")
    raw = rng.random((k, k))
    transition = raw / raw.sum(axis=1, keepdims=True)
    request_stats = rng.random(k)
    return LocationModel(transition=transition, request_stats=request_stats)
