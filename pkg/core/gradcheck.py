"""
Central finite-difference gradients, used as the oracle for the autodiff engine.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from constants import (
    GRADCHECK_ABS_FLOOR,
    GRADCHECK_COORDS_PER_TENSOR,
    GRADCHECK_EPS,
    GRADCHECK_TOLERANCE,
    format_table_float,
)
from core.tensor import Tensor, backward, no_grad
from errors import ContractError, EvaluationError, NumericError

logger = logging.getLogger(__name__)

Objective = Callable[[Dict[str, Tensor]], Union[Tensor, float]]


def _evaluate(f: Objective, params: Dict[str, Tensor]) -> float:
    try:
        with no_grad():
            value = f(params)
    except NumericError as e:
        raise EvaluationError(f"objective failed during finite differences: {e}")
    value = value.item() if isinstance(value, Tensor) else float(value)
    if not np.isfinite(value):
        raise EvaluationError(f"objective returned a non-finite value ({value!r})")
    return value


def _central_difference(f: Objective, params: Dict[str, Tensor], name: str,
                        index: Tuple[int, ...], eps: float) -> float:
    param = params[name]
    original = param.numpy()
    try:
        shifted = original.copy()
        shifted[index] = original[index] + eps
        param.assign(shifted)
        plus = _evaluate(f, params)
        shifted[index] = original[index] - eps
        param.assign(shifted)
        minus = _evaluate(f, params)
    finally:
        param.assign(original)
    return (plus - minus) / (2.0 * eps)


def finite_diff_grad(f: Objective, params: Dict[str, Tensor], eps: float = GRADCHECK_EPS) -> Dict[str, np.ndarray]:
    """
    Estimate df/dp for every coordinate of every parameter.

    Args:
        f: Deterministic objective taking the parameter map, returning a scalar
        params: Named parameters; their data is perturbed and then restored
        eps: Perturbation size

    Returns:
        Mapping of parameter name to an array shaped like the parameter

    Raises:
        EvaluationError: If f yields a non-finite value
    """
    if eps <= 0:
        raise ContractError(f"eps must be > 0, got {eps!r}")
    grads = {}
    for name, param in params.items():
        grad = np.zeros(param.shape)
        for index in np.ndindex(*param.shape):
            grad[index] = _central_difference(f, params, name, index, eps)
        grads[name] = grad
    return grads


def relative_error(analytic: float, numeric: float, floor: float = GRADCHECK_ABS_FLOOR) -> float:
    """|a - n| / max(|a|, |n|, floor)."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


@dataclass
class GradCheckReport:
    """Outcome of comparing backward() against finite differences."""

    max_rel_err: float
    tolerance: float
    tensors_checked: int
    coords_checked: int
    params_checked: int
    worst: Optional[Tuple[str, Tuple[int, ...]]] = None
    failures: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tolerance

    def to_text(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        lines = [
            f"gradcheck: {status}",
            f"parameters checked: {self.params_checked} scalars in {self.tensors_checked} tensors",
            f"coordinates compared: {self.coords_checked}",
            f"max relative error: {self.max_rel_err:.3e} (tolerance {self.tolerance:.0e})",
        ]
        if self.worst is not None:
            name, index = self.worst
            lines.append(f"worst coordinate: {name}{list(index)}")
        lines.extend(f"  {failure}" for failure in self.failures)
        return "\n".join(lines)


def _sample_coordinates(shape: Sequence[int], count: int, rng: np.random.Generator) -> List[Tuple[int, ...]]:
    size = int(np.prod(shape, dtype=np.int64)) if len(shape) else 1
    if size <= count:
        flat = np.arange(size)
    else:
        flat = np.sort(rng.choice(size, size=count, replace=False))
    return [tuple(int(i) for i in np.unravel_index(j, tuple(shape))) for j in flat]


def check_gradients(f: Objective, params: Dict[str, Tensor], eps: float = GRADCHECK_EPS,
                    tolerance: float = GRADCHECK_TOLERANCE,
                    coords_per_tensor: int = GRADCHECK_COORDS_PER_TENSOR,
                    seed: int = 0, corrupt_gradient: bool = False) -> GradCheckReport:
    """
    Compare analytic gradients with central differences on sampled coordinates.

    Only parameters with requires_grad are checked. corrupt_gradient distorts
    the analytic side and exists so callers can exercise the failure path.
    """
    trainable = {name: p for name, p in params.items() if p.requires_grad}
    if not trainable:
        raise ContractError("gradcheck needs at least one trainable parameter")

    loss = f(params)
    if not isinstance(loss, Tensor):
        raise ContractError("gradcheck objective must return a Tensor")
    analytic = backward(loss, trainable)
    if corrupt_gradient:
        logger.warning("Corrupting analytic gradients (negative control)")
        analytic = {name: 2.0 * g + 1.0 for name, g in analytic.items()}

    rng = np.random.default_rng(seed)
    max_err, worst, coords, failures = 0.0, None, 0, []
    for name, param in trainable.items():
        for index in _sample_coordinates(param.shape, coords_per_tensor, rng):
            numeric = _central_difference(f, params, name, index, eps)
            err = relative_error(float(analytic[name][index]), numeric)
            coords += 1
            if err > max_err:
                max_err, worst = err, (name, index)
            if err > tolerance:
                failures.append(f"{name}{list(index)}: analytic {analytic[name][index]:.6e} "
                                f"numeric {numeric:.6e} rel err {format_table_float(err, 6)}")

    report = GradCheckReport(
        max_rel_err=max_err,
        tolerance=tolerance,
        tensors_checked=len(trainable),
        coords_checked=coords,
        params_checked=sum(p.size for p in trainable.values()),
        worst=worst,
        failures=failures,
    )
    logger.info(f"Gradient check over {coords} coordinates: max rel err {max_err:.3e}")
    return report
