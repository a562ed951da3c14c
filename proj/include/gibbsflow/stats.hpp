#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace gibbsflow {

double mean(const std::vector<double>& v);
double variance(const std::vector<double>& v);  // unbiased
double weighted_mean(const std::vector<double>& v, const std::vector<double>& w);

/// Effective sample size of a weighted ensemble: (sum w)^2 / sum w^2.
double effective_sample_size(const std::vector<double>& weights);

/// Survival function of the Kolmogorov distribution, Q(lambda) = 2 sum (-1)^{k-1} e^{-2 k^2 lambda^2}.
double kolmogorov_q(double lambda);

struct KsResult {
    double d = 0.0;        // sup |F1 - F2|
    double p_value = 1.0;  // asymptotic
    double n_eff = 0.0;    // n1*n2/(n1+n2)
};

/// Two-sample Kolmogorov-Smirnov test; inputs need not be sorted.
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

/// Weighted-vs-unweighted variant: `a` carries weights (self-normalized ECDF),
/// the effective size of the weighted side is its ESS.
KsResult ks_two_sample_weighted(std::vector<double> a, std::vector<double> wa, std::vector<double> b);

/// Critical D at level alpha for effective size n_eff (asymptotic).
double ks_critical(double alpha, double n_eff);

/// sup |CDF1 - CDF2| for two tabulated CDFs on the same abscissae.
double ks_distance_cdfs(const std::vector<double>& cdf1, const std::vector<double>& cdf2);

struct LinearFit {
    std::vector<double> coeffs;  // one per column of the design matrix
    double rms_residual = 0.0;
};

/// Ordinary least squares for a small number of design columns (normal equations).
LinearFit least_squares(const std::vector<std::vector<double>>& columns, const std::vector<double>& rhs);

/// Convenience: slope of y against x.
double regression_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace gibbsflow
