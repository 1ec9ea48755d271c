import numpy as np
import pandas as pd

from src.errors import DataError, NumericError


def _values(errors):
    values = getattr(errors, 'values', errors)
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise NumericError("no per-point errors to pool")
    return values


def pool_mse(errors):
    return float(_values(errors).mean())


def pool_haus(errors):
    return float(_values(errors).max())


def pool_angular(errors):
    """mad, msad and rmsad of angular similarities"""
    values = _values(errors)
    msad = float(np.mean(values * values))
    return {'mad': float(values.mean()), 'msad': msad, 'rmsad': float(np.sqrt(msad))}


def psnr_db(mse, precision=None, peak=None):
    """
    10 log10(3 P^2 / mse), P = 2^precision - 1 unless peak is given

    mse = 0 returns +inf, reported as "identical".
    """
    if peak is None:
        if precision is None:
            raise DataError("psnr needs a precision or a peak value")
        peak = float(2 ** int(precision) - 1)
    if mse < 0:
        raise DataError(f"mse must be non-negative, got {mse}")
    if mse == 0:
        return float('inf')
    return float(10.0 * np.log10(3.0 * peak * peak / mse))


def error_histogram(errors, bins=50):
    """
    Histogram of per-point distances (square roots of squared errors)

    Bins are equal-width over [0, max], or [0, 1] when every error is zero.

    Returns:
        DataFrame with columns bin_low, bin_high, count
    """
    values = getattr(errors, 'values', errors)
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise DataError("histogram of an empty error set")
    bins = int(bins)
    if bins < 1:
        raise DataError(f"bins must be >= 1, got {bins}")

    distances = np.sqrt(values)
    top = float(distances.max())
    counts, edges = np.histogram(distances, bins=bins, range=(0.0, top if top > 0 else 1.0))
    return pd.DataFrame({'bin_low': edges[:-1], 'bin_high': edges[1:], 'count': counts.astype(np.int64)})
