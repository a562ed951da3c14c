#pragma once

#include <complex>
#include <vector>

namespace gibbsflow {

/// In-place radix-2 complex FFT (forward: e^{-2*pi*i*jk/N}); N must be a power of two.
void fft_pow2(std::vector<std::complex<double>>& a, bool inverse);

/// DST-I of the interior values x[0..N-1] (nodes 1..N of a Dirichlet grid):
///   S[k-1] = sum_{j=1}^{N} x[j-1] * sin(pi*j*k/(N+1)),  k = 1..N.
/// Uses the odd-extension FFT when N+1 is a power of two, otherwise the direct sum.
std::vector<double> dst_1(const std::vector<double>& x);

/// Inverse of dst_1: applies dst_1 and scales by 2/(N+1).
std::vector<double> idst_1(const std::vector<double>& coeffs);

}  // namespace gibbsflow
