from .logistic_fit import LogisticFit, fit_logistic
from .significance import (KurtosisCheck, SignificanceResult, games_howell, kurtosis_normality, levene_test,
                           mos_averages, plcc, residual_f_test, welch_anova, wilcoxon_signed_rank)
from .performance import MetricPerformance

__all__ = [
    'LogisticFit', 'fit_logistic', 'KurtosisCheck', 'SignificanceResult', 'plcc', 'welch_anova',
    'games_howell', 'wilcoxon_signed_rank', 'levene_test', 'kurtosis_normality', 'residual_f_test',
    'mos_averages', 'MetricPerformance',
]
