#include <cmath>
#include <complex>

#include "doctest.h"
#include "gibbsflow/fft.hpp"
#include "gibbsflow/grid.hpp"
#include "gibbsflow/io.hpp"
#include "gibbsflow/rng.hpp"
#include "gibbsflow/stats.hpp"

using namespace gibbsflow;

TEST_CASE("grid basics") {
    Grid1D g(-2.0, 2.0, 5);
    CHECK(g.spacing() == doctest::Approx(1.0));
    CHECK(g.node(3) == doctest::Approx(1.0));
    CHECK(g.nearest_index(0.9) == 3);
    CHECK_THROWS_AS(Grid1D(0.0, 1.0, 2), std::invalid_argument);

    std::vector<double> vals = {0.0, 1.0, 4.0, 9.0, 16.0};
    CHECK(g.interpolate(vals, -0.5) == doctest::Approx(2.5));
}

TEST_CASE("counter rng reproducible and order independent") {
    CounterRng a(42, 7);
    CounterRng b(42, 7);
    for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());

    // Different streams differ.
    CounterRng c(42, 8);
    CHECK(c.next_u64() != CounterRng(42, 7).next_u64());

    // Gaussians have roughly unit scale.
    CounterRng d(1, 0);
    double m = 0.0, m2 = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double x = d.gaussian();
        m += x;
        m2 += x * x;
    }
    m /= n;
    m2 /= n;
    CHECK(std::abs(m) < 0.03);
    CHECK(m2 == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("dst-i matches direct sum and inverts") {
    const size_t n = 15;  // n+1 = 16 power of two path
    std::vector<double> x(n);
    CounterRng rng(3, 0);
    for (auto& v : x) v = rng.gaussian();

    const auto s = dst_1(x);
    for (size_t k = 1; k <= n; ++k) {
        double direct = 0.0;
        for (size_t j = 1; j <= n; ++j) direct += x[j - 1] * std::sin(M_PI * double(j) * double(k) / double(n + 1));
        CHECK(s[k - 1] == doctest::Approx(direct).epsilon(1e-12));
    }
    const auto back = idst_1(s);
    for (size_t j = 0; j < n; ++j) CHECK(back[j] == doctest::Approx(x[j]).epsilon(1e-12));
}

TEST_CASE("ks two-sample basics") {
    CounterRng rng(9, 1);
    std::vector<double> a(4000), b(4000);
    for (auto& v : a) v = rng.gaussian();
    for (auto& v : b) v = rng.gaussian();
    const auto same = ks_two_sample(a, b);
    CHECK(same.p_value > 0.001);

    for (auto& v : b) v += 0.5;
    const auto shifted = ks_two_sample(a, b);
    CHECK(shifted.p_value < 1e-6);

    // Critical value round-trips through the p-value formula.
    const double d = ks_critical(0.01, same.n_eff);
    const double sqn = std::sqrt(same.n_eff);
    CHECK(kolmogorov_q((sqn + 0.12 + 0.11 / sqn) * d) == doctest::Approx(0.01).epsilon(1e-6));
}

TEST_CASE("least squares recovers coefficients") {
    std::vector<double> t;
    for (int i = 0; i < 50; ++i) t.push_back(0.1 * i);
    std::vector<std::vector<double>> cols(3);
    cols[0].assign(t.size(), 1.0);
    cols[1] = t;
    cols[2] = t;
    for (auto& v : cols[2]) v = v * v;
    std::vector<double> y(t.size());
    for (size_t i = 0; i < t.size(); ++i) y[i] = 2.0 - 3.0 * t[i] + 0.5 * t[i] * t[i];
    const auto fit = least_squares(cols, y);
    CHECK(fit.coeffs[0] == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(fit.coeffs[1] == doctest::Approx(-3.0).epsilon(1e-10));
    CHECK(fit.coeffs[2] == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(fit.rms_residual < 1e-10);
}

TEST_CASE("hexfloat round trip") {
    const double v = 0.1234567890123456789;
    CHECK(parse_double(format_hex(v)) == v);
    CHECK(parse_double(format_hex(-1e-300)) == -1e-300);
}
