import logging
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy import stats

from src.errors import DataError, NumericError

logger = logging.getLogger(__name__)

KURTOSIS_RANGE = (2.0, 4.0)
MIN_KURTOSIS_SAMPLES = 8
MIN_WILCOXON_PAIRS = 6


@dataclass
class SignificanceResult:
    test: str
    statistic: float
    df: tuple
    p_value: float
    alpha: float
    significant: bool
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        self.p_value = float(np.clip(self.p_value, 0.0, 1.0))

    def to_dict(self):
        return {
            'test': self.test,
            'statistic': float(self.statistic),
            'df': [float(d) for d in self.df],
            'p_value': self.p_value,
            'alpha': self.alpha,
            'significant': bool(self.significant),
            'details': _plain(self.details),
        }


@dataclass
class KurtosisCheck:
    """Non-excess kurtosis m4 / m2^2; samples count as Gaussian inside [2, 4]"""
    kurtosis: float
    gaussian: bool
    n: int

    def to_dict(self):
        return {'kurtosis': float(self.kurtosis), 'gaussian': bool(self.gaussian), 'n': self.n}


def _plain(value):
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if hasattr(value, 'to_dict'):
        return value.to_dict()
    if isinstance(value, np.generic):
        return value.item()
    return value


def _named_groups(groups):
    """dict or sequence of samples -> list of (label, float array)"""
    items = groups.items() if isinstance(groups, dict) else enumerate(groups)
    return [(str(label), np.asarray(values, dtype=np.float64)) for label, values in items]


def _check_groups(groups, test):
    if len(groups) < 2:
        raise DataError(f"{test} needs at least 2 groups, got {len(groups)}")
    for label, values in groups:
        if len(values) < 2:
            raise DataError(f"{test}: group {label!r} has fewer than 2 values")
        if not np.all(np.isfinite(values)):
            raise DataError(f"{test}: group {label!r} has non-finite values")


def plcc(x, y):
    """Pearson linear correlation, clipped to [-1, 1]"""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError(f"plcc needs equal-length 1-D inputs, got {x.shape} and {y.shape}")
    if len(x) < 3:
        raise DataError(f"plcc needs at least 3 pairs, got {len(x)}")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise DataError("plcc is undefined for constant input")
    return float(np.clip((dx @ dy) / np.sqrt(sxx * syy), -1.0, 1.0))


def welch_anova(groups, alpha=0.05):
    """One-way Welch ANOVA for unequal variances"""
    groups = _named_groups(groups)
    _check_groups(groups, 'welch anova')

    n = np.array([len(v) for _, v in groups], dtype=np.float64)
    means = np.array([v.mean() for _, v in groups])
    variances = np.array([v.var(ddof=1) for _, v in groups])
    if np.any(variances <= 0):
        zero = [label for (label, _), var in zip(groups, variances) if var <= 0]
        raise DataError(f"welch anova needs positive variance in every group; zero in {zero}")

    k = len(groups)
    weights = n / variances
    total_weight = weights.sum()
    weighted_mean = (weights * means).sum() / total_weight
    between = (weights * (means - weighted_mean) ** 2).sum() / (k - 1)
    tmp = ((1 - weights / total_weight) ** 2 / (n - 1)).sum()
    correction = 1 + 2 * (k - 2) / (k * k - 1) * tmp

    statistic = between / correction
    df1, df2 = k - 1.0, (k * k - 1) / (3 * tmp)
    p_value = stats.f.sf(statistic, df1, df2)

    return SignificanceResult(
        test='welch_anova', statistic=float(statistic), df=(df1, float(df2)), p_value=p_value,
        alpha=alpha, significant=p_value < alpha,
        details={'groups': [label for label, _ in groups], 'means': [float(m) for m in means]},
    )


def games_howell(groups, alpha=0.05):
    """Pairwise Games-Howell comparisons; one result per pair, in group order"""
    groups = _named_groups(groups)
    _check_groups(groups, 'games-howell')
    k = len(groups)

    results = []
    for (label_a, a), (label_b, b) in combinations(groups, 2):
        sa, sb = a.var(ddof=1) / len(a), b.var(ddof=1) / len(b)
        if sa + sb == 0:
            raise DataError(f"games-howell: groups {label_a!r} and {label_b!r} both have zero variance")
        difference = a.mean() - b.mean()
        q = abs(difference) / np.sqrt((sa + sb) / 2)
        df = (sa + sb) ** 2 / (sa ** 2 / (len(a) - 1) + sb ** 2 / (len(b) - 1))
        p_value = stats.studentized_range.sf(q, k, df)

        results.append(SignificanceResult(
            test='games_howell', statistic=float(q), df=(float(k), float(df)), p_value=p_value,
            alpha=alpha, significant=p_value < alpha,
            details={'group_a': label_a, 'group_b': label_b, 'mean_difference': float(difference)},
        ))
    return results


def wilcoxon_signed_rank(a, b, alpha=0.05):
    """
    Two-sided Wilcoxon signed-rank test, normal approximation

    Zero differences are dropped; ranks are averaged over ties and the variance
    is tie-corrected; no continuity correction.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DataError(f"wilcoxon needs paired 1-D samples, got {a.shape} and {b.shape}")

    differences = a - b
    differences = differences[differences != 0]
    n = len(differences)
    if n < MIN_WILCOXON_PAIRS:
        raise DataError(f"wilcoxon needs at least {MIN_WILCOXON_PAIRS} non-zero differences, got {n}")

    ranks = stats.rankdata(np.abs(differences))
    w_plus = float(ranks[differences > 0].sum())
    w_minus = float(ranks[differences < 0].sum())

    _, tie_counts = np.unique(np.abs(differences), return_counts=True)
    mean = n * (n + 1) / 4.0
    variance = n * (n + 1) * (2 * n + 1) / 24.0 - (tie_counts ** 3 - tie_counts).sum() / 48.0
    statistic = min(w_plus, w_minus)
    z = (statistic - mean) / np.sqrt(variance)
    p_value = 2.0 * stats.norm.sf(abs(z))

    return SignificanceResult(
        test='wilcoxon', statistic=statistic, df=(float(n),), p_value=p_value,
        alpha=alpha, significant=p_value < alpha,
        details={'z': float(z), 'w_plus': w_plus, 'w_minus': w_minus, 'n': n},
    )


def levene_test(groups, alpha=0.05):
    """Median-centred (Brown-Forsythe) Levene test for equal variances"""
    groups = _named_groups(groups)
    _check_groups(groups, 'levene')
    statistic, p_value = stats.levene(*[v for _, v in groups], center='median')
    if not np.isfinite(statistic):
        raise NumericError("levene statistic is undefined (all deviations zero)")
    k = len(groups)
    total = sum(len(v) for _, v in groups)
    return SignificanceResult(
        test='levene', statistic=float(statistic), df=(float(k - 1), float(total - k)), p_value=p_value,
        alpha=alpha, significant=p_value < alpha,
        details={'groups': [label for label, _ in groups]},
    )


def kurtosis_normality(samples):
    samples = np.asarray(samples, dtype=np.float64)
    if len(samples) < MIN_KURTOSIS_SAMPLES:
        raise DataError(f"kurtosis check needs at least {MIN_KURTOSIS_SAMPLES} samples, got {len(samples)}")
    if np.ptp(samples) == 0:
        raise DataError("kurtosis is undefined for constant samples")
    value = float(stats.kurtosis(samples, fisher=False, bias=True))
    low, high = KURTOSIS_RANGE
    return KurtosisCheck(kurtosis=value, gaussian=low <= value <= high, n=len(samples))


def residual_f_test(a, b, alpha=0.2, names=('A', 'B')):
    """
    One-tailed F-test on prediction residual variances

    F is the larger sample variance over the smaller. When F exceeds the
    critical value, the smaller-variance metric is reported as better.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise DataError("residual f-test needs at least 2 residuals per metric")

    var_a, var_b = a.var(ddof=1), b.var(ddof=1)
    if min(var_a, var_b) == 0:
        raise NumericError("residual f-test with a zero-variance residual set")

    if var_a >= var_b:
        statistic, df, smaller = var_a / var_b, (len(a) - 1.0, len(b) - 1.0), names[1]
    else:
        statistic, df, smaller = var_b / var_a, (len(b) - 1.0, len(a) - 1.0), names[0]
    p_value = stats.f.sf(statistic, *df)
    critical = float(stats.f.ppf(1 - alpha, *df))
    significant = statistic > critical

    normality = {}
    for name, values in zip(names, (a, b)):
        if len(values) >= MIN_KURTOSIS_SAMPLES and np.ptp(values) > 0:
            check = kurtosis_normality(values)
            normality[name] = check
            if not check.gaussian:
                logger.warning(f"Residuals of {name} look non-Gaussian (kurtosis {check.kurtosis:.2f})")

    return SignificanceResult(
        test='residual_f', statistic=float(statistic), df=df, p_value=p_value,
        alpha=alpha, significant=bool(significant),
        details={
            'F_critical': critical,
            'better': smaller if significant else None,
            'metrics': list(names),
            'variances': {names[0]: float(var_a), names[1]: float(var_b)},
            'normality': normality,
        },
    )


def mos_averages(groups):
    """Mean MOS per group label"""
    return {label: float(values.mean()) for label, values in _named_groups(groups)}
