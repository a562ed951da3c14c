#pragma once

#include <string>
#include <vector>

#include "gibbsflow/grid.hpp"

namespace gibbsflow {

// Spectrum of the quartic oscillator H = -1/2 d_x^2 + 1/4 x^4 on a symmetric
// Dirichlet grid: symmetric tridiagonal eigenproblem solved by Sturm bisection
// plus inverse iteration (no external solver).

struct SpectralBasis {
    Grid1D x_grid;
    std::vector<double> eigenvalues;                 // ascending, simple
    std::vector<std::vector<double>> eigenfunctions; // full-grid arrays, zero walls, L2(h)-normalized
    std::vector<double> residuals;                   // ||H psi_k - lambda_k psi_k||_2 per k

    int count() const { return static_cast<int>(eigenvalues.size()); }
    /// Linear interpolation of psi_k at x.
    double psi(int k, double x) const { return x_grid.interpolate(eigenfunctions[static_cast<size_t>(k)], x); }
    double lambda(int k) const { return eigenvalues[static_cast<size_t>(k)]; }
};

Grid1D default_spectrum_grid();

/// Lowest K+1 eigenpairs; psi_0 sign-normalized positive, wall decay below
/// 1e-12 verified post hoc (throws naming the offending k otherwise).
SpectralBasis eigenpairs(int K, const Grid1D& x_grid);

/// e^{-tau H}(x, y) = sum_k e^{-tau lambda_k} psi_k(x) psi_k(y).
/// Throws when the truncation tail bound e^{-tau lambda_K} sqrt(lambda_K)
/// exceeds 1e-14, reporting the K that would be needed.
double semigroup_kernel(const SpectralBasis& basis, double tau, double x, double y);

/// <f, psi_0> by h-weighted quadrature; f tabulated on the basis grid.
double ground_state_overlap(const SpectralBasis& basis, const std::vector<double>& f);

/// f - <f,psi_0> psi_0.
std::vector<double> ground_state_perp(const SpectralBasis& basis, const std::vector<double>& f);

/// Ground-state energy of -d_y^2 + y^4 by parity shooting (independent ODE
/// oracle; the scaling x = 2^{1/6} y maps H to 2^{-4/3} (-d_y^2 + y^4)).
double quartic_ground_energy_shooting();

struct SpectrumSelfTest {
    double lambda0_shooting = 0.0;    // 2^{-4/3} * shooting energy
    double lambda0_richardson = 0.0;  // h->0 extrapolated matrix eigenvalue
    double disagreement = 0.0;
    bool ok = false;
};
/// Two-oracle pin of lambda_0; fails (ok=false) when they disagree by > 1e-6 relative.
SpectrumSelfTest spectrum_self_test();

std::string serialize_basis(const SpectralBasis& basis);
/// Parses and re-validates ordering, the k+1/4 bound, orthonormality and
/// positivity of psi_0; throws on violation.
SpectralBasis parse_basis(const std::string& text);

}  // namespace gibbsflow
