#include "gibbsflow/fft.hpp"

#include <cmath>
#include <stdexcept>

namespace gibbsflow {

void fft_pow2(std::vector<std::complex<double>>& a, bool inverse) {
    const size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("fft_pow2: size must be a power of two");

    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    const double sign = inverse ? 1.0 : -1.0;
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = sign * 2.0 * M_PI / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t j = 0; j < len / 2; ++j) {
                const std::complex<double> u = a[i + j];
                const std::complex<double> v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wl;
            }
        }
    }
    if (inverse) {
        const double inv = 1.0 / static_cast<double>(n);
        for (auto& z : a) z *= inv;
    }
}

std::vector<double> dst_1(const std::vector<double>& x) {
    const size_t n = x.size();
    if (n == 0) return {};
    const size_t m = 2 * (n + 1);
    if ((m & (m - 1)) == 0) {
        std::vector<std::complex<double>> buf(m, std::complex<double>(0.0, 0.0));
        for (size_t j = 0; j < n; ++j) {
            buf[j + 1] = std::complex<double>(x[j], 0.0);
            buf[m - 1 - j] = std::complex<double>(-x[j], 0.0);
        }
        fft_pow2(buf, false);
        std::vector<double> out(n);
        for (size_t k = 0; k < n; ++k) out[k] = -0.5 * buf[k + 1].imag();
        return out;
    }
    // Direct evaluation for odd sizes (small cross-check grids only).
    std::vector<double> out(n, 0.0);
    const double c = M_PI / static_cast<double>(n + 1);
    for (size_t k = 1; k <= n; ++k) {
        double s = 0.0;
        for (size_t j = 1; j <= n; ++j) s += x[j - 1] * std::sin(c * static_cast<double>(j * k));
        out[k - 1] = s;
    }
    return out;
}

std::vector<double> idst_1(const std::vector<double>& coeffs) {
    std::vector<double> out = dst_1(coeffs);
    const double scale = 2.0 / static_cast<double>(coeffs.size() + 1);
    for (auto& v : out) v *= scale;
    return out;
}

}  // namespace gibbsflow
