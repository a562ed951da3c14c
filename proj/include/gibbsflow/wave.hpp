#pragma once

#include <complex>
#include <functional>
#include <string>
#include <vector>

#include "gibbsflow/grid.hpp"

namespace gibbsflow {

// Dirichlet wave solver on [0, L]: reflection-formula propagators (exact
// domain of dependence), sine-spectral companions, and Picard iteration of
// the cubic Duhamel equation on adaptive windows.

struct WaveGrid {
    double L = 2.0;
    int n = 257;  // nodes including both ends; n - 1 must be a power of two

    double h() const { return L / static_cast<double>(n - 1); }
    double node(int i) const { return h() * static_cast<double>(i); }
    bool operator==(const WaveGrid& o) const { return L == o.L && n == o.n; }
};

WaveGrid make_wave_grid(double L, int cells_pow2);

struct WaveState {
    double t = 0.0;
    WaveGrid grid;
    std::vector<std::complex<double>> w;

    std::vector<double> re() const;
    std::vector<double> im() const;
    double boundary_residual() const;
    /// Discrete Hoelder seminorm; exact double maximum for n <= 4097,
    /// strided-pair upper bound above that.
    double holder_norm(double s = 0.4) const;
};

// Reflection-formula propagators. t may be any real; node-aligned arguments
// are evaluated exactly, off-node ones by linear interpolation in the
// extension.
std::vector<double> cos_prop(const std::vector<double>& f, double t, const WaveGrid& grid);
/// sin(t|d_r|)/|d_r| g via the antiderivative of the odd-periodic extension
/// (local fourth-order prefix rule).
std::vector<double> sin_prop(const std::vector<double>& g, double t, const WaveGrid& grid);

// Sine-coefficient helpers (interior size n-2, frequencies k pi / L).
std::vector<double> sine_coefficients(const std::vector<double>& values, const WaveGrid& grid);
std::vector<double> sine_synthesis(const std::vector<double>& coeffs, const WaveGrid& grid);
/// Spectral |d_r|^{-1} (divide by k pi / L).
std::vector<double> inv_abs_deriv(const std::vector<double>& values, const WaveGrid& grid);
/// Spectral |d_r| (multiply by k pi / L).
std::vector<double> abs_deriv(const std::vector<double>& values, const WaveGrid& grid);
/// Spectral sin(t|d_r|) g.
std::vector<double> sin_mult(const std::vector<double>& g, double t, const WaveGrid& grid);

/// Exactly unitary free evolution e^{-i t |d_r|} in the sine basis.
WaveState spectral_free_flow(const WaveState& state, double t);

/// |d_r|^{-1} realized as convolution with the log-sine kernel of the odd
/// periodic extension; smooth-data cross-check for the spectral multiplier.
std::vector<double> inv_abs_deriv_convolution(const std::vector<double>& values, const WaveGrid& grid);

/// v^3 / r^2 with the r = 0 node set to zero.
std::vector<double> cubic_source(const std::vector<double>& v, const WaveGrid& grid);

struct PicardParams {
    int tau_cells = 2;  // time step in grid cells (k = tau_cells * h)
    double tol = 1e-8;
    int max_iterations = 64;
    double contraction_limit = 0.9;
    double min_window = 1.0 / 1024.0;
};

struct WindowDiag {
    double T = 0.0;
    double k = 0.0;
    int iterations = 0;
    double last_ratio = 0.0;
    double residual = 0.0;  // final successive-iterate sup distance
    int halvings = 0;
};

struct WindowSolution {
    std::vector<std::vector<double>> v;  // slices at tau = 0, k, ..., T
    double k = 0.0;
    WindowDiag diag;
};

/// Duhamel integral K(v)(t_i, .) for every step of a sampled history.
std::vector<std::vector<double>> duhamel_K(const std::vector<std::vector<double>>& v_history, double k,
                                           const WaveGrid& grid);

/// Fixed-point solve of v = cos_prop(f1) + sin(t|d_r|) g2 - K(v) on [0, T];
/// halves T until the contraction ratio stays below the limit. g2 carries the
/// Hoelder-class datum |d_r|^{-1} f2.
WindowSolution picard_solve(const std::vector<double>& f1, const std::vector<double>& g2, double T,
                            double tol, const WaveGrid& grid, const PicardParams& params);

/// Same fixed point driven by the real pair (f1, f2 = d_t v at 0); every
/// operator is a reflection/prefix rule, so the solve is exactly local.
WindowSolution picard_solve_pair(const std::vector<double>& f1, const std::vector<double>& f2, double T,
                                 double tol, const WaveGrid& grid, const PicardParams& params);

/// w(t) = v(t) + i |d_r|^{-1} d_t v(t) at the final window time.
WaveState reconstruct_w(const WindowSolution& sol, const std::vector<double>& f1,
                        const std::vector<double>& g2, const WaveGrid& grid, double t_origin);

struct FlowTrace {
    std::vector<WaveState> states;  // at requested times, ascending in |t|
    std::vector<WindowDiag> windows;
    bool ok = true;
    std::string note;
};

/// Window-composed nonlinear flow to t_target (either sign); states recorded
/// at every window boundary.
FlowTrace flow_L(const WaveState& g, double t_target, double window, const PicardParams& params);

/// Linear cut-off: identity on [0, lambda], value-linear taper to zero on
/// [lambda, lambda+1], zero beyond.
std::vector<double> cutoff_linear(const std::vector<double>& g, double lambda, const WaveGrid& grid);
std::vector<std::complex<double>> cutoff_linear(const std::vector<std::complex<double>>& g, double lambda,
                                                const WaveGrid& grid);

enum class PropagatorRoute { DAlembert, Spectral };

/// Local pair flow (v, d_t v): marches one or more windows with everything
/// evaluated by reflection formulas (DAlembert) or sine multipliers
/// (Spectral); observer sees (t, v, v_t) at window ends.
using PairObserver = std::function<void(double t, const std::vector<double>& v, const std::vector<double>& vt)>;
void flow_pair(const std::vector<double>& f1, const std::vector<double>& f2, double t_target, double window,
               const WaveGrid& grid, const PicardParams& params, PropagatorRoute route,
               const PairObserver& observer);

struct FsopResult {
    double max_deviation = 0.0;  // of v on [0, window_R] across compared times
};
/// Flows (f1, f2) and a copy perturbed by smooth bumps supported in [a, b];
/// returns the deviation of v on [0, window_R]. Requires a > window_R + |t|
/// plus a margin.
FsopResult fsop_check(const std::vector<double>& f1, const std::vector<double>& f2, double a, double b,
                      double window_R, double t, const WaveGrid& grid, const PicardParams& params,
                      PropagatorRoute route);

/// Half-line flow by finite-speed embedding: datum on [0, R'] tapered at
/// R' - 1, zero-padded into [0, L] with L = 2^ceil(log2(2(R' + |t|))), flown
/// there and restricted to [0, window_R].
FlowTrace flow_inf(const std::vector<double>& r_nodes, const std::vector<std::complex<double>>& values,
                   double t_target, double window_R, int cells_pow2, double window,
                   const PicardParams& params);

/// Embedding independence at two box sizes (L and L + pad) for the real pair;
/// returns the max deviation of (v, v_t) on [0, window_R].
double flow_inf_embedding_deviation(const std::vector<double>& f1, const std::vector<double>& f2,
                                    double R_prime, double window_R, double t, double h, double pad,
                                    const PicardParams& params);

/// Radial energy integral of the lifted pair: int (u^4/4 + |u'|^2/2 + u_t^2/2) r^2 dr.
double hamiltonian(const std::vector<double>& u, const std::vector<double>& u_t,
                   const std::vector<double>& r_nodes);

std::string serialize_flow_trace(const FlowTrace& trace);
FlowTrace parse_flow_trace(const std::string& text);

}  // namespace gibbsflow
