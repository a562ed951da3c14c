#include "gibbsflow/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace gibbsflow {

double mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double variance(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

double weighted_mean(const std::vector<double>& v, const std::vector<double>& w) {
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < v.size(); ++i) {
        num += v[i] * w[i];
        den += w[i];
    }
    return den > 0.0 ? num / den : 0.0;
}

double effective_sample_size(const std::vector<double>& weights) {
    double s1 = 0.0, s2 = 0.0;
    for (double w : weights) {
        s1 += w;
        s2 += w * w;
    }
    return s2 > 0.0 ? s1 * s1 / s2 : 0.0;
}

double kolmogorov_q(double lambda) {
    if (lambda < 1e-10) return 1.0;
    double sum = 0.0;
    double sign = 1.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += sign * term;
        sign = -sign;
        if (term < 1e-16) break;
    }
    const double q = 2.0 * sum;
    return std::min(1.0, std::max(0.0, q));
}

namespace {
double ks_pvalue(double d, double n_eff) {
    const double sqn = std::sqrt(n_eff);
    const double lambda = (sqn + 0.12 + 0.11 / sqn) * d;
    return kolmogorov_q(lambda);
}
}  // namespace

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("ks_two_sample: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    KsResult r;
    r.d = d;
    r.n_eff = na * nb / (na + nb);
    r.p_value = ks_pvalue(d, r.n_eff);
    return r;
}

KsResult ks_two_sample_weighted(std::vector<double> a, std::vector<double> wa, std::vector<double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("ks_two_sample_weighted: empty sample");
    std::vector<size_t> order(a.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t x, size_t y) { return a[x] < a[y]; });
    std::sort(b.begin(), b.end());
    const double wtot = std::accumulate(wa.begin(), wa.end(), 0.0);
    const double nb = static_cast<double>(b.size());
    double cum = 0.0;
    double d = 0.0;
    size_t j = 0;
    for (size_t idx : order) {
        const double x = a[idx];
        cum += wa[idx] / wtot;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(cum - static_cast<double>(j) / nb));
    }
    KsResult r;
    r.d = d;
    const double ess = effective_sample_size(wa);
    r.n_eff = ess * nb / (ess + nb);
    r.p_value = ks_pvalue(d, r.n_eff);
    return r;
}

double ks_critical(double alpha, double n_eff) {
    // Invert Q(lambda) = alpha by bisection, then undo the finite-size factor.
    double lo = 0.2, hi = 4.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (kolmogorov_q(mid) > alpha)
            lo = mid;
        else
            hi = mid;
    }
    const double lambda = 0.5 * (lo + hi);
    const double sqn = std::sqrt(n_eff);
    return lambda / (sqn + 0.12 + 0.11 / sqn);
}

double ks_distance_cdfs(const std::vector<double>& cdf1, const std::vector<double>& cdf2) {
    if (cdf1.size() != cdf2.size()) throw std::invalid_argument("ks_distance_cdfs: size mismatch");
    double d = 0.0;
    for (size_t i = 0; i < cdf1.size(); ++i) d = std::max(d, std::abs(cdf1[i] - cdf2[i]));
    return d;
}

LinearFit least_squares(const std::vector<std::vector<double>>& columns, const std::vector<double>& rhs) {
    const size_t p = columns.size();
    const size_t m = rhs.size();
    if (p == 0 || m < p) throw std::invalid_argument("least_squares: underdetermined");
    for (const auto& c : columns)
        if (c.size() != m) throw std::invalid_argument("least_squares: column size mismatch");

    // Normal equations with Gaussian elimination; p is tiny here (<= 4).
    std::vector<std::vector<double>> ata(p, std::vector<double>(p + 1, 0.0));
    for (size_t i = 0; i < p; ++i) {
        for (size_t j = 0; j < p; ++j) {
            double s = 0.0;
            for (size_t k = 0; k < m; ++k) s += columns[i][k] * columns[j][k];
            ata[i][j] = s;
        }
        double s = 0.0;
        for (size_t k = 0; k < m; ++k) s += columns[i][k] * rhs[k];
        ata[i][p] = s;
    }
    for (size_t col = 0; col < p; ++col) {
        size_t piv = col;
        for (size_t r = col + 1; r < p; ++r)
            if (std::abs(ata[r][col]) > std::abs(ata[piv][col])) piv = r;
        std::swap(ata[col], ata[piv]);
        if (std::abs(ata[col][col]) < 1e-300) throw std::runtime_error("least_squares: singular design");
        for (size_t r = 0; r < p; ++r) {
            if (r == col) continue;
            const double f = ata[r][col] / ata[col][col];
            for (size_t c = col; c <= p; ++c) ata[r][c] -= f * ata[col][c];
        }
    }
    LinearFit fit;
    fit.coeffs.resize(p);
    for (size_t i = 0; i < p; ++i) fit.coeffs[i] = ata[i][p] / ata[i][i];

    double ss = 0.0;
    for (size_t k = 0; k < m; ++k) {
        double pred = 0.0;
        for (size_t i = 0; i < p; ++i) pred += fit.coeffs[i] * columns[i][k];
        ss += (rhs[k] - pred) * (rhs[k] - pred);
    }
    fit.rms_residual = std::sqrt(ss / static_cast<double>(m));
    return fit;
}

double regression_slope(const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<std::vector<double>> cols(2);
    cols[0].assign(x.size(), 1.0);
    cols[1] = x;
    return least_squares(cols, y).coeffs[1];
}

}  // namespace gibbsflow
