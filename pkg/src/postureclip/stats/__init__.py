from .distributions import (
    betainc,
    chi2_cdf,
    chi2_sf,
    gammainc_lower,
    gammainc_upper,
    kolmogorov_cdf,
    kolmogorov_sf,
    normal_cdf,
    t_cdf,
    t_sf_two_sided,
)
from .inference import (
    StatResult,
    TVariant,
    chi_square_2x2,
    ks_normality_test,
    ks_statistic,
    paired_t_test,
    pearson_r,
    two_sample_t_test,
)

__all__ = [
    "StatResult",
    "TVariant",
    "betainc",
    "chi2_cdf",
    "chi2_sf",
    "chi_square_2x2",
    "gammainc_lower",
    "gammainc_upper",
    "kolmogorov_cdf",
    "kolmogorov_sf",
    "ks_normality_test",
    "ks_statistic",
    "normal_cdf",
    "paired_t_test",
    "pearson_r",
    "t_cdf",
    "t_sf_two_sided",
    "two_sample_t_test",
]
