import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from src.errors import DataError, FitError

logger = logging.getLogger(__name__)

EXP_CLIP = 500.0
MIN_SCALE = 1e-12
MIN_POINTS = 5


def logistic(x, beta):
    """beta2 + (beta1 - beta2) / (1 + exp(-(x - beta3) / |beta4|))"""
    b1, b2, b3, b4 = beta
    scale = max(abs(b4), MIN_SCALE)
    z = np.clip(-(np.asarray(x, dtype=np.float64) - b3) / scale, -EXP_CLIP, EXP_CLIP)
    return b2 + (b1 - b2) / (1.0 + np.exp(z))


def _jacobian(beta, x, mos):
    b1, b2, b3, b4 = beta
    scale = max(abs(b4), MIN_SCALE)
    z = np.clip(-(x - b3) / scale, -EXP_CLIP, EXP_CLIP)
    g = 1.0 / (1.0 + np.exp(z))
    slope = -(b1 - b2) * g * (1.0 - g)
    jac = np.empty((len(x), 4))
    jac[:, 0] = g
    jac[:, 1] = 1.0 - g
    jac[:, 2] = slope / scale
    jac[:, 3] = slope * (x - b3) / (scale * scale) * np.sign(b4 if b4 != 0 else 1.0)
    return jac


def _residual(beta, x, mos):
    return logistic(x, beta) - mos


@dataclass
class LogisticFit:
    """Monotonic 4-parameter logistic mapping objective scores to MOS"""
    beta: np.ndarray
    residuals: np.ndarray
    converged: bool
    rmse: float
    evaluations: int = 0

    def predict(self, x):
        return logistic(x, self.beta)

    def to_dict(self):
        return {
            'beta': [float(b) for b in self.beta],
            'converged': bool(self.converged),
            'rmse': float(self.rmse),
        }


def starting_points(x, mos):
    """Deterministic multi-start set: base start, wider scales, swapped and widened asymptotes"""
    y_max, y_min = float(mos.max()), float(mos.min())
    y_range = max(y_max - y_min, 1e-6)
    x_mid = float(np.median(x))
    x_range = float(x.max() - x.min())

    starts = []
    for high, low in ((y_max, y_min), (y_min, y_max),
                      (y_max + y_range, y_min - y_range), (y_min - y_range, y_max + y_range)):
        for scale in (x_range / 4, x_range, x_range / 16):
            starts.append((high, low, x_mid, scale))
    starts.append((y_max, y_min, float(x.mean()), x_range / 4))
    starts.append((y_min, y_max, float(x.mean()), x_range / 4))
    return [np.array(s, dtype=np.float64) for s in starts]


def fit_logistic(x, mos, max_iterations=500, tolerance=1e-10):
    """
    Levenberg-Marquardt fit of the logistic mapping, best of several starts

    Args:
        x: objective scores
        mos: subjective scores, same length
        max_iterations: function evaluations allowed per start
        tolerance: relative cost tolerance

    Returns:
        LogisticFit; converged is False when no start met the tolerance
    """
    x = np.asarray(x, dtype=np.float64)
    mos = np.asarray(mos, dtype=np.float64)
    if x.shape != mos.shape or x.ndim != 1:
        raise DataError(f"x and mos must be 1-D arrays of equal length, got {x.shape} and {mos.shape}")
    if len(x) < MIN_POINTS:
        raise DataError(f"logistic fit needs at least {MIN_POINTS} points, got {len(x)}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(mos))):
        raise DataError("logistic fit inputs must be finite")
    if np.ptp(x) == 0:
        raise DataError("logistic fit needs non-constant objective scores")

    best = None
    for start in starting_points(x, mos):
        try:
            result = least_squares(
                _residual, start, jac=_jacobian, args=(x, mos), method='lm', x_scale='jac',
                max_nfev=max_iterations, ftol=tolerance, xtol=1e-12, gtol=1e-12,
            )
        except (ValueError, np.linalg.LinAlgError) as e:
            logger.debug(f"Logistic start {start} failed: {e}")
            continue
        if not np.isfinite(result.cost):
            continue
        if best is None or result.cost < best.cost:
            best = result

    if best is None:
        raise FitError("logistic fit failed from every starting point")

    beta = best.x.copy()
    beta[3] = abs(beta[3])
    predicted = logistic(x, beta)
    residuals = mos - predicted
    converged = best.status > 0
    if not converged:
        logger.warning(f"Logistic fit did not converge within {max_iterations} evaluations; using best so far")

    return LogisticFit(beta=beta, residuals=residuals, converged=converged,
                       rmse=float(np.sqrt(np.mean(residuals * residuals))), evaluations=int(best.nfev))
