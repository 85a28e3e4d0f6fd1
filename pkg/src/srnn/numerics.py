"""Log-space arithmetic and finite-difference gradient estimation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

NEG_INF = -math.inf


def log_sum_exp(values: Iterable[float]) -> float:
    """Stable ``log(sum(exp(v)))`` over a list of log scores.

    An empty input is the log of an empty sum, i.e. ``-inf``.
    """
    vals = [float(v) for v in values]
    if not vals:
        return NEG_INF
    m = max(vals)
    if m == NEG_INF:
        return NEG_INF
    if len(vals) == 1:
        return vals[0]
    return m + math.log(math.fsum(math.exp(v - m) for v in vals))


def logsumexp(x: np.ndarray, axis=None, keepdims: bool = False) -> np.ndarray:
    """Array version of :func:`log_sum_exp`; rows that are all ``-inf`` give ``-inf``."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        shape = np.sum(x, axis=axis, keepdims=keepdims).shape
        return np.full(shape, NEG_INF)
    m = x.max(axis=axis, keepdims=True)
    if m.min() == NEG_INF:
        dead = m == NEG_INF
        m = np.where(dead, 0.0, m)
        total = np.exp(x - m).sum(axis=axis, keepdims=True)
        out = np.log(np.where(dead, 1.0, total)) + m
        out[dead] = NEG_INF
    else:
        out = np.log(np.exp(x - m).sum(axis=axis, keepdims=True)) + m
    if not keepdims:
        out = np.squeeze(out, axis=axis) if axis is not None else out.reshape(())
    return out


def softmax_weights(x: np.ndarray, axis=None) -> np.ndarray:
    """Gradient of :func:`logsumexp`; zero wherever the whole reduction is ``-inf``."""
    x = np.asarray(x, dtype=np.float64)
    lse = logsumexp(x, axis=axis, keepdims=True)
    if lse.min() == NEG_INF:
        dead = lse == NEG_INF
        return np.where(dead, 0.0, np.exp(x - np.where(dead, 0.0, lse)))
    return np.exp(x - lse)


@dataclass
class GradCheckReport:
    """Outcome of comparing analytic gradients against central differences."""

    rows: list = field(default_factory=list)  # (name, flat index, analytic, numeric, rel_err)
    failures: list = field(default_factory=list)
    tolerance: float = 1e-4

    @property
    def max_rel_error(self) -> float:
        return max((r[4] for r in self.rows), default=0.0)

    @property
    def passed(self) -> bool:
        return not self.failures and self.max_rel_error < self.tolerance


# Floor on the denominator so that gradients near zero are judged by absolute
# error; central differences with h=1e-4 carry ~1e-9 truncation error.
REL_ERR_FLOOR = 1e-5


def relative_error(analytic: float, numeric: float, floor: float = REL_ERR_FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def finite_difference_gradient(
    f: Callable[[], float],
    params,
    step: float = 1e-4,
    coords: Sequence[tuple[str, int]] | None = None,
) -> dict[tuple[str, int], float]:
    """Central-difference estimate ``(f(p+h e_i) - f(p-h e_i)) / 2h``.

    ``params`` maps names to float64 arrays (or objects with a ``value`` array)
    that ``f`` reads when called. Each coordinate is perturbed in place and
    restored. With ``coords=None`` every coordinate of every array is visited.
    A non-finite evaluation yields ``nan`` for that coordinate.
    """
    arrays = {name: getattr(p, "value", p) for name, p in params.items()}
    if coords is None:
        coords = [(name, i) for name, arr in arrays.items() for i in range(arr.size)]
    out = {}
    for name, idx in coords:
        flat = arrays[name].reshape(-1)
        old = flat[idx]
        flat[idx] = old + step
        f_plus = float(f())
        flat[idx] = old - step
        f_minus = float(f())
        flat[idx] = old
        if math.isfinite(f_plus) and math.isfinite(f_minus):
            out[(name, idx)] = (f_plus - f_minus) / (2.0 * step)
        else:
            out[(name, idx)] = math.nan
    return out


def compare_gradients(
    analytic: dict[str, np.ndarray],
    numeric: dict[tuple[str, int], float],
    tolerance: float = 1e-4,
) -> GradCheckReport:
    report = GradCheckReport(tolerance=tolerance)
    for (name, idx), num in numeric.items():
        ana = float(analytic[name].reshape(-1)[idx]) if name in analytic else 0.0
        if not (math.isfinite(num) and math.isfinite(ana)):
            report.failures.append((name, idx, ana, num))
            report.rows.append((name, idx, ana, num, math.inf))
            continue
        err = relative_error(ana, num)
        report.rows.append((name, idx, ana, num, err))
        if err >= tolerance:
            report.failures.append((name, idx, ana, num))
    return report
