#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "gibbsflow/grid.hpp"

namespace gibbsflow {

// Fundamental-solution engine for the parabolic family
//   d_r phi = 1/2 d_x^2 phi + V(r,x) phi (+ optional drift b(r,x) d_x phi),
// marched by Crank-Nicolson with the coefficients frozen at the half step.

enum class PotentialKind { Zero, Constant, CutoffQuartic, Quartic, TransformedQuartic };

struct PotentialSpec {
    PotentialKind kind = PotentialKind::Zero;
    double constant = 0.0;  // Constant kind only
    int cutoff_n = 0;       // CutoffQuartic kind only
    bool drift = false;     // TransformedQuartic: include the x/r advection term

    static PotentialSpec zero() { return {}; }
    static PotentialSpec constant_pot(double c) { return {PotentialKind::Constant, c, 0, false}; }
    static PotentialSpec cutoff_quartic(int n);
    static PotentialSpec quartic() { return {PotentialKind::Quartic, 0.0, 0, false}; }
    /// -x^4/4 with the x/r advection term (the transformed-coordinate equation).
    static PotentialSpec transformed_quartic() { return {PotentialKind::TransformedQuartic, 0.0, 0, true}; }
    /// -x^4/4 alone; fundamental solution is the quartic-oscillator heat semigroup.
    static PotentialSpec static_quartic() { return {PotentialKind::TransformedQuartic, 0.0, 0, false}; }

    double value(double r, double x) const;
    bool has_drift() const { return kind == PotentialKind::TransformedQuartic && drift; }
    double drift_coeff(double r, double x) const { return has_drift() ? x / r : 0.0; }
    bool nonpositive() const { return kind != PotentialKind::Constant || constant <= 0.0; }
    std::string label() const;
};

struct KernelSolveParams {
    double dx = 1.0 / 128.0;
    double dt = 1.0 / 1024.0;
    double halfwidth = 0.0;      // 0 = auto: max(10, 6 r_max^{1/3})
    double bootstrap_eps = 0.0;  // 0 = auto: 5 dx^2
    int store_every = 8;
    double boundary_mass_tol = 1e-10;
    // When > 0, allows steps to grow like 0.05 * elapsed up to this cap; the
    // long-time kernels vary on the elapsed-time scale, so graded steps keep
    // the per-step error uniform over hundreds of time units.
    double dt_far = 0.0;

    KernelSolveParams refined(double factor) const {
        KernelSolveParams p = *this;
        p.dx /= factor;
        p.dt /= factor;
        return p;
    }
    double tolerance() const {
        const double h2 = dx * dx, k2 = dt * dt;
        return 5.0 * (h2 > k2 ? h2 : k2);
    }
};

struct KernelField {
    PotentialSpec potential;
    double source_s = 0.0;
    double source_y = 0.0;
    Grid1D x_grid;
    std::vector<double> r_nodes;              // stored times, ascending
    std::vector<std::vector<double>> values;  // [time][space]
    KernelSolveParams params;
    std::string scheme = "crank_nicolson";

    double tolerance() const { return params.tolerance(); }
    int nearest_time_index(double r) const;
    const std::vector<double>& slice_at(double r) const;  // nearest stored time
    /// Bilinear interpolation in (r, x) between stored slices.
    double value_at(double r, double x) const;
    double mass_at(double r) const;  // trapezoid of the slice at the nearest stored time
};

/// Heat kernel (2 pi (r-s))^{-1/2} exp(-(x-y)^2 / (2(r-s))); requires r > s.
double heat_kernel(double r, double x, double s, double y);

/// Symmetric solve domain sized for the potential: quartic-confined fields get
/// max(10, 6 (r-s)^{1/3}) half-width, diffusive ones sqrt-scaled room.
Grid1D default_kernel_grid(const PotentialSpec& pot, double s, double y, double r_max, double dx);

using SliceObserver = std::function<void(double r, const std::vector<double>& slice)>;

/// Crank-Nicolson solve of the fundamental solution from a heat-kernel
/// bootstrap at s + eps. Stores every `store_every`-th slice plus requested
/// times (hit exactly) and the final time.
KernelField solve_kernel(const PotentialSpec& pot, double s, double y, double r_max,
                         const Grid1D& x_grid, const KernelSolveParams& params,
                         const std::vector<double>& required_times = {},
                         const SliceObserver& observer = nullptr);

/// Same field filled from the exact heat-kernel formula (no solve); used to
/// isolate quadrature error in the identity checks.
KernelField make_heat_kernel_field(double s, double y, double r_max, const Grid1D& x_grid,
                                   const KernelSolveParams& params);

/// Evolve a given full-width slice (no delta bootstrap) from r_start to r_max.
/// The returned field's source records (r_start, nan-free 0) and the first
/// stored slice is the initial one.
KernelField evolve_slice(const PotentialSpec& pot, const std::vector<double>& initial, double r_start,
                         double r_max, const Grid1D& x_grid, const KernelSolveParams& params,
                         const std::vector<double>& required_times = {},
                         const SliceObserver& observer = nullptr);

/// Backward (adjoint) solve: psi(s, y) = phi(r_top, x_top; s, y) for s in
/// [s_min, r_top). Drift potentials are not supported. Returned field is
/// indexed by s ascending.
KernelField solve_kernel_backward(const PotentialSpec& pot, double r_top, double x_top, double s_min,
                                  const Grid1D& x_grid, const KernelSolveParams& params,
                                  const std::vector<double>& required_times = {});

/// Sup over probes of |phi - phi0 - int int phi0 V phi| using the field's stored slices.
struct DuhamelResult {
    double max_residual = 0.0;
    std::vector<double> per_probe;
};
DuhamelResult duhamel_residual(const KernelField& field, const std::vector<std::pair<double, double>>& probes);

struct GaussBoundReport {
    bool ok = true;
    double max_excess = 0.0;     // of v - phi0, in units of max(1, phi0)
    double min_value = 0.0;      // positivity floor
    double worst_r = 0.0;
    double worst_x = 0.0;
};
/// 0 <= phi <= phi0 on every stored node past the bootstrap neighborhood
/// (r - s >= 20 eps, where the discrete delta is only resolved in the weak
/// sense covered by the delta-consistency test). The upper-bound tolerance is
/// scaled by max(1, phi0) so it stays meaningful while the kernel peak decays
/// like (r-s)^{-1/2}.
GaussBoundReport gauss_bound_check(const KernelField& field, double tol);

struct MonotonicityReport {
    bool ok = true;
    double max_violation = 0.0;    // of phi_n >= phi_m, n < m (and phi0 >= phi_1)
    double min_value = 0.0;        // positivity floor across probes
    double worst_probe_r = 0.0;
    double worst_probe_x = 0.0;
};
MonotonicityReport cutoff_monotonicity_check(double s, double y, double r_max,
                                             const std::vector<std::pair<double, double>>& probes,
                                             const std::vector<int>& n_list, const Grid1D& x_grid,
                                             const KernelSolveParams& params, double tol);

/// Semigroup check: max over probe x of
/// |int phi(r,x;mid,w) phi(mid,w;s,y) dw - phi(r,x;s,y)|.
double chapman_kolmogorov_check(const PotentialSpec& pot, double s, double mid, double r, double y,
                                const std::vector<double>& probe_x, const Grid1D& x_grid,
                                const KernelSolveParams& params);

/// Quadrature of int_s^r int phi0(1,x;0,w) ... with analytic heat kernels
/// (Gaussian semigroup identity at machine-level accuracy).
double gaussian_chapman_kolmogorov_quadrature(double s, double mid, double r, double x, double y,
                                              int n_w = 20001, double halfwidth = 12.0);

struct BetaIdentityResult {
    double quadrature = 0.0;
    double closed_form = 0.0;
    double abs_error = 0.0;
};
/// Two-sided singular quadrature of the Gaussian beta-function identity
/// versus its closed form; requires alpha, beta < 3/2 and r > s.
BetaIdentityResult beta_identity_check(double alpha, double beta, double lambda, double s, double r,
                                       double x, double y, double tol = 1e-7);

struct TransitionRow {
    std::vector<double> values;  // density over the grid
    double mass = 0.0;           // trapezoid mass (recorded, not renormalized)
};
/// Discretized w -> phi(r_to, w; r_from, x_from). Reuses the field when its
/// source matches, otherwise re-solves with the field's parameters.
TransitionRow transition_row(const KernelField& field, double r_from, double x_from, double r_to);

/// Dense one-interval transition matrix T[a][b] ~= phi(r_to, x_b; r_from, x_a)
/// built by evolving a bootstrap Gaussian from every source node.
std::vector<std::vector<double>> build_transition_matrix(const PotentialSpec& pot, double r_from,
                                                         double r_to, const Grid1D& grid,
                                                         const KernelSolveParams& params);

std::string serialize_kernel_field(const KernelField& field);
KernelField parse_kernel_field(const std::string& text);

}  // namespace gibbsflow
