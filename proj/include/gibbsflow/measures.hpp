#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gibbsflow/grid.hpp"
#include "gibbsflow/kernel.hpp"

namespace gibbsflow {

// Path measures on [0, L] and [0, R]: free Gaussian components (bridge and
// Brownian motion), their Gibbs reweightings, and the conditioned-kernel
// samplers that realize the finite-dimensional laws exactly on a grid.

enum class MeasureTag { MuL1, MuL2, NuL1, NuL2, NuL, Wiener, NuInf1, NuInf };

std::string measure_tag_name(MeasureTag tag);
MeasureTag measure_tag_from_name(const std::string& name);

struct MeasureSpec {
    MeasureTag tag = MeasureTag::MuL1;
    double L = 0.0;  // finite-volume length (finite tags)
    double R = 0.0;  // restriction length (infinite tags)

    bool is_complex() const { return tag == MeasureTag::NuL || tag == MeasureTag::NuInf; }
    bool is_infinite() const {
        return tag == MeasureTag::Wiener || tag == MeasureTag::NuInf1 || tag == MeasureTag::NuInf;
    }
    double domain_length() const { return is_infinite() ? R : L; }
    void validate() const;
};

struct PathSample {
    std::vector<double> r_nodes;  // increasing, starts at 0
    std::vector<std::complex<double>> values;
    double weight = 1.0;
    uint64_t seed = 0;
    MeasureTag measure = MeasureTag::MuL1;
    double domain_length = 0.0;
    // Sine-series representation (coefficients of e_{n,L}), present when the
    // sample was drawn spectrally; required by lift_to_3d.
    std::vector<std::complex<double>> coefficients;

    bool has_coefficients() const { return !coefficients.empty(); }
    std::vector<double> real_values() const;
    std::vector<double> imag_values() const;
};

enum class EnsembleStatus { Ok, Warn };

struct Ensemble {
    MeasureSpec spec;
    std::vector<PathSample> samples;
    EnsembleStatus status = EnsembleStatus::Ok;
    std::string note;

    size_t size() const { return samples.size(); }
    std::vector<double> weights() const;
    double ess() const;
    /// Weighted mean of an observable over the ensemble.
    double mean_of(const std::function<double(const PathSample&)>& f) const;
    /// Marginal values (real part) at the node nearest to r.
    std::vector<double> marginal(double r) const;
};

enum class BridgeMethod { SineSeries, Sequential };

/// Standard Brownian bridge from (0,0) to (L,0) sampled at r_nodes.
PathSample sample_bridge(double L, const std::vector<double>& r_nodes, uint64_t seed, uint64_t index,
                         BridgeMethod method, int n_modes = 4096);

/// Brownian motion from 0 sampled at r_nodes (covariance min(r, r')).
PathSample sample_wiener(const std::vector<double>& r_nodes, uint64_t seed, uint64_t index);

/// Dyadic-level samplers: node count is 2^levels (+1); the draws are consumed
/// level by level, so a coarser grid uses a prefix of the finer grid's
/// randomness and the two paths coincide on shared nodes.
PathSample sample_bridge_dyadic(double L, int levels, uint64_t seed, uint64_t index);
PathSample sample_wiener_dyadic(double R, int levels, uint64_t seed, uint64_t index);

/// exp(-1/4 int_0^L (Re f)^4 r^-2 dr) by trapezoid; the r = 0 cell is
/// evaluated one-sidedly (integrand -> 0 there on the measure's support).
double gibbs_weight(const PathSample& path);

/// Conditioned-kernel chain: transitions between consecutive chain times and
/// the h-function pinning the far end (phi(L,0;t,.) or F(t,.)).
struct MarkovChainContext {
    double horizon = 0.0;  // L for the pinned chain, R for the infinite-volume one
    bool pinned_end = true;
    std::vector<double> times;  // interior chain times, ascending
    Grid1D grid;
    std::vector<double> first_row;                          // phi(times[0], .; 0, 0)
    std::vector<std::vector<std::vector<double>>> trans;    // [j][a][b]: times[j] -> times[j+1]
    std::vector<std::vector<double>> h;                     // [j]: h(times[j], .)
};

/// Chain over [0, span] (span = 0 means span = L) conditioned to vanish at L.
/// When span < L the pin lies beyond the sampled window and only enters
/// through the h-function (restricted finite-volume law).
MarkovChainContext build_nuL1_context(double L, int n_intervals, const Grid1D& grid,
                                      const KernelSolveParams& params, double span = 0.0);
MarkovChainContext build_nuInf1_context(double R, int n_intervals, const Grid1D& grid,
                                        const KernelSolveParams& params,
                                        const std::function<double(double, double)>& F);

/// One exact-on-grid draw of the chain law (piecewise-linear CDF inversion).
PathSample sample_markov_path(const MarkovChainContext& ctx, uint64_t seed, uint64_t index);

/// Exact marginal density of the chain law at the chain time nearest r,
/// tabulated on the context grid (normalized to unit mass).
std::vector<double> markov_marginal_density(const MarkovChainContext& ctx, double r);

enum class NuL1Method { Importance, Markov };

/// Gibbs measure of the real component: importance-weighted bridges or the
/// conditioned-kernel chain. ESS below 5% of N downgrades the status to Warn.
Ensemble sample_nuL1(double L, const std::vector<double>& r_nodes, size_t N, uint64_t seed,
                     NuL1Method method, const MarkovChainContext* ctx, int threads);

struct SamplerResources {
    const MarkovChainContext* nuL1 = nullptr;   // pinned chain for NuL1/NuL
    const MarkovChainContext* nuInf = nullptr;  // F-transformed chain for NuInf1/NuInf
};

/// Dispatches on the measure tag; complex measures pair independent real and
/// imaginary components per the product law.
Ensemble sample_measure(const MeasureSpec& spec, const std::vector<double>& r_nodes, size_t N,
                        uint64_t seed, const SamplerResources& res, int threads);

/// Gaussian pair (bridge vs Wiener): phi0(L,0;R,fR)/phi0(L,0;0,0).
double rn_derivative_gaussian(double L, double R, double fR);

struct RnInputs {
    std::function<double(double)> phi_L0_R;  // x -> phi(L,0;R,x)
    double phi_L_00 = 0.0;
    std::function<double(double)> F_R;  // x -> F(R,x)
};
/// d nu_L|[0,R] / d nu_inf|[0,R] at the path's endpoint value.
double rn_derivative(double fR, const RnInputs& inputs);

struct HolderEstimate {
    double exponent = 0.0;
    bool ok = false;
};
/// Regression of log sup_{|r-r'|=delta} |f(r)-f(r')| on log delta over dyadic
/// deltas (at least 3 within the grid).
HolderEstimate holder_exponent_estimate(const std::vector<double>& values, double spacing,
                                        const std::vector<int>& lag_cells);

struct FkObservable {
    double r = 0.0;
    std::function<double(double)> f;
};
struct FkReport {
    double mc_value = 0.0;
    double mc_stderr = 0.0;
    double kernel_value = 0.0;
    double discrepancy_sigmas = 0.0;
};
/// Bridge Monte Carlo of E[exp(int V(rho, BB(rho)) drho) prod f_j(BB(r_j))]
/// against the iterated-kernel quadrature with the same potential.
FkReport fk_crosscheck(const PotentialSpec& V, double L, const std::vector<FkObservable>& observables,
                       size_t N, uint64_t seed, const KernelSolveParams& params, int threads);

PathSample restrict_path(const PathSample& path, double R);

struct LiftedField {
    std::vector<double> r_nodes;
    std::vector<double> u;    // r^{-1} Re g
    std::vector<double> u_t;  // r^{-1} |d_r| Im g
};
/// Recovers the radial second-order pair from the complexified path; needs the
/// sine-series representation (spectral multiplier n pi / L).
LiftedField lift_to_3d(const PathSample& path, double L);

std::string serialize_ensemble(const Ensemble& ensemble);
Ensemble parse_ensemble(const std::string& text);

}  // namespace gibbsflow
