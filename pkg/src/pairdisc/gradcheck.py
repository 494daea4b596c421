"""Central-difference gradient checking against analytic gradients in a ParameterStore."""
import logging
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import NonDeterministicLossError
from .models import GradCheckReport
from .params import ParameterStore

logger = logging.getLogger(__name__)

Coordinate = Tuple[str, int]


class LossEvaluation(BaseModel):
    """Value of a loss plus the hinge margins it evaluated (empty for smooth losses)."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    loss: float
    margins: np.ndarray = Field(default_factory=lambda: np.zeros(0))


LossFn = Callable[[ParameterStore], Union[float, LossEvaluation]]


def _evaluate(loss_fn: LossFn, store: ParameterStore) -> LossEvaluation:
    result = loss_fn(store)
    if isinstance(result, LossEvaluation):
        return result
    return LossEvaluation(loss=float(result))


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))


def sample_coordinates(
    store: ParameterStore,
    count: int,
    seed: int = 0,
    names: Optional[Sequence[str]] = None,
    min_abs_grad: Optional[float] = None,
) -> List[Coordinate]:
    """Pick ``count`` distinct coordinates uniformly.

    With ``min_abs_grad`` only coordinates whose analytic gradient exceeds it
    in magnitude are eligible; at h=1e-5 smaller gradients drown in roundoff.
    """
    pool = store.coordinates(names)
    if min_abs_grad is not None:
        pool = [(n, i) for n, i in pool if abs(store.grad(n).flat[i]) > min_abs_grad]
    rng = np.random.default_rng(seed)
    if count >= len(pool):
        return pool
    picks = rng.choice(len(pool), size=count, replace=False)
    return [pool[i] for i in sorted(picks)]


def finite_diff_check(
    loss_fn: LossFn,
    store: ParameterStore,
    h: float = 1e-5,
    sample: Union[None, int, Sequence[Coordinate]] = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare the gradients already accumulated in ``store`` with central differences.

    ``loss_fn`` must be a pure function of the parameter values. Coordinates
    whose perturbation brings any hinge margin within ``10*h`` of zero, or flips
    the active set, are skipped and counted as excluded.
    """
    if h <= 0:
        raise ValueError("h must be > 0")
    if sample is None:
        coords = store.coordinates()
    elif isinstance(sample, int):
        coords = sample_coordinates(store, sample, seed=seed)
    else:
        coords = list(sample)

    baseline = _evaluate(loss_fn, store)
    again = _evaluate(loss_fn, store)
    if again.loss != baseline.loss:
        raise NonDeterministicLossError(
            f"loss changed between identical evaluations: {baseline.loss!r} vs {again.loss!r}"
        )

    worst, worst_coord, checked, excluded = 0.0, None, 0, 0
    kink = 10.0 * h
    for name, idx in coords:
        value = store.value(name)
        original = value.flat[idx]
        value.flat[idx] = original + h
        plus = _evaluate(loss_fn, store)
        value.flat[idx] = original - h
        minus = _evaluate(loss_fn, store)
        value.flat[idx] = original

        if _near_kink(plus.margins, minus.margins, kink):
            excluded += 1
            continue
        numeric = (plus.loss - minus.loss) / (2.0 * h)
        analytic = float(store.grad(name).flat[idx])
        err = relative_error(analytic, numeric)
        checked += 1
        if err > worst:
            worst, worst_coord = err, f"{name}[{idx}]"

    final = _evaluate(loss_fn, store)
    if final.loss != baseline.loss:
        raise NonDeterministicLossError(
            f"loss changed after restoring parameters: {baseline.loss!r} vs {final.loss!r}"
        )
    logger.debug("gradient check: %d checked, %d excluded, worst %.3e at %s", checked, excluded, worst, worst_coord)
    return GradCheckReport(max_rel_error=worst, checked=checked, excluded=excluded, worst=worst_coord)


def _near_kink(plus: np.ndarray, minus: np.ndarray, threshold: float) -> bool:
    if plus.size == 0 and minus.size == 0:
        return False
    if plus.shape != minus.shape:
        return True
    if np.any(np.abs(plus) < threshold) or np.any(np.abs(minus) < threshold):
        return True
    return bool(np.any((plus > 0) != (minus > 0)))
