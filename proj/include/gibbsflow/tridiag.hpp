#pragma once

#include <cstddef>
#include <vector>

namespace gibbsflow {

// Thomas algorithm for tridiagonal systems. The Crank-Nicolson matrices used
// here are strictly diagonally dominant, so no pivoting is required.
struct TridiagWorkspace {
    std::vector<double> cp;  // modified super-diagonal
    std::vector<double> dp;  // modified rhs

    // Solve (lower a, diag b, upper c) x = d into x. a[0] and c[n-1] are ignored.
    void solve(const std::vector<double>& a, const std::vector<double>& b,
               const std::vector<double>& c, const std::vector<double>& d,
               std::vector<double>& x) {
        const size_t n = b.size();
        cp.resize(n);
        dp.resize(n);
        x.resize(n);
        cp[0] = c[0] / b[0];
        dp[0] = d[0] / b[0];
        for (size_t i = 1; i < n; ++i) {
            const double m = 1.0 / (b[i] - a[i] * cp[i - 1]);
            cp[i] = c[i] * m;
            dp[i] = (d[i] - a[i] * dp[i - 1]) * m;
        }
        x[n - 1] = dp[n - 1];
        for (size_t i = n - 1; i-- > 0;) x[i] = dp[i] - cp[i] * x[i + 1];
    }
};

}  // namespace gibbsflow
