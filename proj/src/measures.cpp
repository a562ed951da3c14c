#include "gibbsflow/measures.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gibbsflow/io.hpp"
#include "gibbsflow/parallel.hpp"
#include "gibbsflow/rng.hpp"
#include "gibbsflow/stats.hpp"

namespace gibbsflow {

std::string measure_tag_name(MeasureTag tag) {
    switch (tag) {
        case MeasureTag::MuL1: return "mu_L_1";
        case MeasureTag::MuL2: return "mu_L_2";
        case MeasureTag::NuL1: return "nu_L_1";
        case MeasureTag::NuL2: return "nu_L_2";
        case MeasureTag::NuL: return "nu_L";
        case MeasureTag::Wiener: return "wiener";
        case MeasureTag::NuInf1: return "nu_inf_1";
        case MeasureTag::NuInf: return "nu_inf";
    }
    return "mu_L_1";
}

MeasureTag measure_tag_from_name(const std::string& name) {
    for (MeasureTag t : {MeasureTag::MuL1, MeasureTag::MuL2, MeasureTag::NuL1, MeasureTag::NuL2,
                         MeasureTag::NuL, MeasureTag::Wiener, MeasureTag::NuInf1, MeasureTag::NuInf}) {
        if (measure_tag_name(t) == name) return t;
    }
    throw std::invalid_argument("unknown measure tag: " + name);
}

void MeasureSpec::validate() const {
    if (is_infinite()) {
        if (!(R > 0.0)) throw std::invalid_argument("MeasureSpec: infinite tags need R > 0");
    } else {
        if (!(L > 0.0)) throw std::invalid_argument("MeasureSpec: finite tags need L > 0");
    }
}

std::vector<double> PathSample::real_values() const {
    std::vector<double> out(values.size());
    for (size_t i = 0; i < values.size(); ++i) out[i] = values[i].real();
    return out;
}

std::vector<double> PathSample::imag_values() const {
    std::vector<double> out(values.size());
    for (size_t i = 0; i < values.size(); ++i) out[i] = values[i].imag();
    return out;
}

std::vector<double> Ensemble::weights() const {
    std::vector<double> w(samples.size());
    for (size_t i = 0; i < samples.size(); ++i) w[i] = samples[i].weight;
    return w;
}

double Ensemble::ess() const { return effective_sample_size(weights()); }

double Ensemble::mean_of(const std::function<double(const PathSample&)>& f) const {
    double num = 0.0, den = 0.0;
    for (const auto& s : samples) {
        num += s.weight * f(s);
        den += s.weight;
    }
    return den > 0.0 ? num / den : 0.0;
}

std::vector<double> Ensemble::marginal(double r) const {
    if (samples.empty()) return {};
    const auto& nodes = samples.front().r_nodes;
    size_t best = 0;
    for (size_t i = 1; i < nodes.size(); ++i)
        if (std::abs(nodes[i] - r) < std::abs(nodes[best] - r)) best = i;
    std::vector<double> out(samples.size());
    for (size_t i = 0; i < samples.size(); ++i) out[i] = samples[i].values[best].real();
    return out;
}

PathSample sample_bridge(double L, const std::vector<double>& r_nodes, uint64_t seed, uint64_t index,
                         BridgeMethod method, int n_modes) {
    if (r_nodes.empty() || r_nodes.front() != 0.0)
        throw std::invalid_argument("sample_bridge: nodes must start at 0");
    PathSample p;
    p.r_nodes = r_nodes;
    p.values.assign(r_nodes.size(), {0.0, 0.0});
    p.seed = seed;
    p.measure = MeasureTag::MuL1;
    p.domain_length = L;
    CounterRng rng(seed, index);

    if (method == BridgeMethod::SineSeries) {
        p.coefficients.resize(static_cast<size_t>(n_modes));
        const double norm = std::sqrt(2.0 / L);
        std::vector<double> coef(static_cast<size_t>(n_modes));
        for (int n = 1; n <= n_modes; ++n) {
            coef[static_cast<size_t>(n - 1)] = rng.gaussian() / (static_cast<double>(n) * M_PI / L);
            p.coefficients[static_cast<size_t>(n - 1)] = coef[static_cast<size_t>(n - 1)];
        }
        for (size_t i = 0; i < r_nodes.size(); ++i) {
            double sum = 0.0;
            for (int n = 1; n <= n_modes; ++n)
                sum += coef[static_cast<size_t>(n - 1)] * std::sin(static_cast<double>(n) * M_PI * r_nodes[i] / L);
            p.values[i] = norm * sum;
        }
    } else {
        double prev = 0.0;
        for (size_t i = 1; i < r_nodes.size(); ++i) {
            const double r0 = r_nodes[i - 1], r1 = r_nodes[i];
            if (r1 >= L) {
                p.values[i] = 0.0;
                prev = 0.0;
                continue;
            }
            const double mean = prev * (L - r1) / (L - r0);
            const double var = (r1 - r0) * (L - r1) / (L - r0);
            prev = mean + std::sqrt(var) * rng.gaussian();
            p.values[i] = prev;
        }
    }
    return p;
}

PathSample sample_wiener(const std::vector<double>& r_nodes, uint64_t seed, uint64_t index) {
    if (r_nodes.empty() || r_nodes.front() != 0.0)
        throw std::invalid_argument("sample_wiener: nodes must start at 0");
    PathSample p;
    p.r_nodes = r_nodes;
    p.values.assign(r_nodes.size(), {0.0, 0.0});
    p.seed = seed;
    p.measure = MeasureTag::Wiener;
    p.domain_length = r_nodes.back();
    CounterRng rng(seed, index);
    double prev = 0.0;
    for (size_t i = 1; i < r_nodes.size(); ++i) {
        prev += std::sqrt(r_nodes[i] - r_nodes[i - 1]) * rng.gaussian();
        p.values[i] = prev;
    }
    return p;
}

namespace {
std::vector<double> dyadic_nodes(double length, int levels) {
    const size_t n = (size_t{1} << levels) + 1;
    std::vector<double> nodes(n);
    for (size_t i = 0; i < n; ++i) nodes[i] = length * static_cast<double>(i) / static_cast<double>(n - 1);
    return nodes;
}

// Midpoint-displacement fill of values[lo..hi] given pinned ends; draws come
// level by level so coarser grids consume a prefix of the finer grid's stream.
void dyadic_fill(std::vector<std::complex<double>>& values, const std::vector<double>& nodes,
                 CounterRng& rng, int levels) {
    const size_t n = values.size();
    for (int lev = 1; lev <= levels; ++lev) {
        const size_t stride = (n - 1) >> lev;
        if (stride == 0) break;
        for (size_t mid = stride; mid < n; mid += 2 * stride) {
            const size_t lo = mid - stride, hi = mid + stride;
            const double var =
                (nodes[mid] - nodes[lo]) * (nodes[hi] - nodes[mid]) / (nodes[hi] - nodes[lo]);
            const double mean = values[lo].real() +
                                (values[hi].real() - values[lo].real()) * (nodes[mid] - nodes[lo]) /
                                    (nodes[hi] - nodes[lo]);
            values[mid] = mean + std::sqrt(var) * rng.gaussian();
        }
    }
}
}  // namespace

PathSample sample_bridge_dyadic(double L, int levels, uint64_t seed, uint64_t index) {
    PathSample p;
    p.r_nodes = dyadic_nodes(L, levels);
    p.values.assign(p.r_nodes.size(), {0.0, 0.0});
    p.seed = seed;
    p.measure = MeasureTag::MuL1;
    p.domain_length = L;
    CounterRng rng(seed, index);
    dyadic_fill(p.values, p.r_nodes, rng, levels);
    return p;
}

PathSample sample_wiener_dyadic(double R, int levels, uint64_t seed, uint64_t index) {
    PathSample p;
    p.r_nodes = dyadic_nodes(R, levels);
    p.values.assign(p.r_nodes.size(), {0.0, 0.0});
    p.seed = seed;
    p.measure = MeasureTag::Wiener;
    p.domain_length = R;
    CounterRng rng(seed, index);
    p.values.back() = std::sqrt(R) * rng.gaussian();  // free endpoint first
    dyadic_fill(p.values, p.r_nodes, rng, levels);
    return p;
}

double gibbs_weight(const PathSample& path) {
    if (path.r_nodes.empty() || path.r_nodes.front() != 0.0 || std::abs(path.values.front().real()) > 1e-12)
        throw std::invalid_argument("gibbs_weight: path must vanish at r = 0");
    double integral = 0.0;
    double prev_g = 0.0;  // one-sided rule at the origin cell
    for (size_t i = 1; i < path.r_nodes.size(); ++i) {
        const double v = path.values[i].real();
        const double r = path.r_nodes[i];
        const double g = v * v * v * v / (r * r);
        integral += 0.5 * (prev_g + g) * (r - path.r_nodes[i - 1]);
        prev_g = g;
    }
    return std::exp(-0.25 * integral);
}

namespace {
// Inverse of the piecewise-linear CDF built from a nonnegative density table.
double sample_from_density(const std::vector<double>& density, const Grid1D& grid, double u) {
    const size_t n = density.size();
    std::vector<double> cdf(n, 0.0);
    for (size_t i = 1; i < n; ++i)
        cdf[i] = cdf[i - 1] + 0.5 * (std::max(density[i - 1], 0.0) + std::max(density[i], 0.0));
    const double total = cdf.back();
    if (!(total > 0.0)) throw std::runtime_error("sample_from_density: vanishing density row");
    const double target = u * total;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), target);
    size_t hi = static_cast<size_t>(it - cdf.begin());
    if (hi == 0) hi = 1;
    if (hi >= n) hi = n - 1;
    const double c0 = cdf[hi - 1], c1 = cdf[hi];
    const double frac = (c1 > c0) ? (target - c0) / (c1 - c0) : 0.5;
    return grid.node(static_cast<int>(hi - 1)) + frac * grid.spacing();
}

std::vector<double> interpolated_transition_row(const std::vector<std::vector<double>>& matrix,
                                                const Grid1D& grid, double x_from) {
    const double h = grid.spacing();
    double u = (x_from - grid.lo) / h;
    int a = static_cast<int>(u);
    if (a < 0) a = 0;
    if (a > grid.n - 2) a = grid.n - 2;
    const double frac = std::min(1.0, std::max(0.0, u - static_cast<double>(a)));
    const auto& ra = matrix[static_cast<size_t>(a)];
    const auto& rb = matrix[static_cast<size_t>(a) + 1];
    std::vector<double> row(ra.size());
    for (size_t i = 0; i < row.size(); ++i) row[i] = (1.0 - frac) * ra[i] + frac * rb[i];
    return row;
}
}  // namespace

MarkovChainContext build_nuL1_context(double L, int n_intervals, const Grid1D& grid,
                                      const KernelSolveParams& params, double span) {
    if (n_intervals < 2) throw std::invalid_argument("build_nuL1_context: need >= 2 intervals");
    if (span <= 0.0) span = L;
    if (span > L) throw std::invalid_argument("build_nuL1_context: span must not exceed L");
    MarkovChainContext ctx;
    ctx.horizon = L;
    ctx.pinned_end = std::abs(span - L) < 1e-12;
    ctx.grid = grid;
    const double dt_chain = span / static_cast<double>(n_intervals);
    const int last = ctx.pinned_end ? n_intervals - 1 : n_intervals;
    for (int j = 1; j <= last; ++j) ctx.times.push_back(dt_chain * static_cast<double>(j));

    const PotentialSpec pot = PotentialSpec::quartic();
    const KernelField start = solve_kernel(pot, 0.0, 0.0, ctx.times.front(), grid, params, {ctx.times.front()});
    ctx.first_row = start.values.back();

    for (size_t j = 0; j + 1 < ctx.times.size(); ++j)
        ctx.trans.push_back(build_transition_matrix(pot, ctx.times[j], ctx.times[j + 1], grid, params));

    // The pinning function diffuses over the whole [0, L] horizon; solve it on
    // the full kernel domain and read it back on the sampling grid.
    const Grid1D wide = default_kernel_grid(pot, 0.0, 0.0, L, params.dx);
    const KernelField back =
        solve_kernel_backward(pot, L, 0.0, ctx.times.front(), wide, params, ctx.times);
    for (double t : ctx.times) {
        std::vector<double> row(static_cast<size_t>(grid.n));
        const auto& slice = back.slice_at(t);
        for (int i = 0; i < grid.n; ++i) row[static_cast<size_t>(i)] = wide.interpolate(slice, grid.node(i));
        ctx.h.push_back(std::move(row));
    }
    return ctx;
}

MarkovChainContext build_nuInf1_context(double R, int n_intervals, const Grid1D& grid,
                                        const KernelSolveParams& params,
                                        const std::function<double(double, double)>& F) {
    if (n_intervals < 1) throw std::invalid_argument("build_nuInf1_context: need >= 1 interval");
    MarkovChainContext ctx;
    ctx.horizon = R;
    ctx.pinned_end = false;
    ctx.grid = grid;
    const double dt_chain = R / static_cast<double>(n_intervals);
    for (int j = 1; j <= n_intervals; ++j) ctx.times.push_back(dt_chain * static_cast<double>(j));

    const PotentialSpec pot = PotentialSpec::quartic();
    const KernelField start = solve_kernel(pot, 0.0, 0.0, ctx.times.front(), grid, params, {ctx.times.front()});
    ctx.first_row = start.values.back();

    for (size_t j = 0; j + 1 < ctx.times.size(); ++j)
        ctx.trans.push_back(build_transition_matrix(pot, ctx.times[j], ctx.times[j + 1], grid, params));

    for (double t : ctx.times) {
        std::vector<double> row(static_cast<size_t>(grid.n), 0.0);
        for (int i = 0; i < grid.n; ++i) {
            // The limit ratio is strictly positive; solver tails below the
            // representable range are floored rather than rejected.
            row[static_cast<size_t>(i)] = std::max(F(t, grid.node(i)), 1e-250);
        }
        ctx.h.push_back(std::move(row));
    }
    return ctx;
}

PathSample sample_markov_path(const MarkovChainContext& ctx, uint64_t seed, uint64_t index) {
    PathSample p;
    p.seed = seed;
    p.measure = ctx.pinned_end ? MeasureTag::NuL1 : MeasureTag::NuInf1;
    p.domain_length = ctx.horizon;
    p.r_nodes.push_back(0.0);
    p.values.push_back({0.0, 0.0});
    CounterRng rng(seed, index);

    std::vector<double> row(static_cast<size_t>(ctx.grid.n));
    double x = 0.0;
    for (size_t j = 0; j < ctx.times.size(); ++j) {
        const std::vector<double>* base;
        std::vector<double> interp;
        if (j == 0) {
            base = &ctx.first_row;
        } else {
            interp = interpolated_transition_row(ctx.trans[j - 1], ctx.grid, x);
            base = &interp;
        }
        for (size_t i = 0; i < row.size(); ++i) row[i] = (*base)[i] * ctx.h[j][i];
        x = sample_from_density(row, ctx.grid, rng.uniform());
        p.r_nodes.push_back(ctx.times[j]);
        p.values.push_back({x, 0.0});
    }
    if (ctx.pinned_end) {
        p.r_nodes.push_back(ctx.horizon);
        p.values.push_back({0.0, 0.0});
    }
    return p;
}

std::vector<double> markov_marginal_density(const MarkovChainContext& ctx, double r) {
    size_t jr = 0;
    for (size_t j = 1; j < ctx.times.size(); ++j)
        if (std::abs(ctx.times[j] - r) < std::abs(ctx.times[jr] - r)) jr = j;

    const double h = ctx.grid.spacing();
    std::vector<double> fwd = ctx.first_row;
    for (size_t j = 0; j < jr; ++j) {
        const auto& T = ctx.trans[j];
        std::vector<double> next(fwd.size(), 0.0);
        for (size_t a = 0; a < fwd.size(); ++a) {
            if (fwd[a] == 0.0) continue;
            const auto& row = T[a];
            for (size_t b = 0; b < next.size(); ++b) next[b] += fwd[a] * row[b];
        }
        for (auto& v : next) v *= h;
        fwd.swap(next);
    }
    std::vector<double> density(fwd.size());
    for (size_t i = 0; i < density.size(); ++i) density[i] = std::max(0.0, fwd[i] * ctx.h[jr][i]);
    const double mass = trapezoid(density, h);
    for (auto& v : density) v /= mass;
    return density;
}

Ensemble sample_nuL1(double L, const std::vector<double>& r_nodes, size_t N, uint64_t seed,
                     NuL1Method method, const MarkovChainContext* ctx, int threads) {
    Ensemble e;
    e.spec.tag = MeasureTag::NuL1;
    e.spec.L = L;
    e.samples.resize(N);
    if (method == NuL1Method::Importance) {
        parallel_for(N, threads, [&](size_t i) {
            PathSample p = sample_bridge(L, r_nodes, seed, i, BridgeMethod::Sequential);
            p.measure = MeasureTag::NuL1;
            p.weight = gibbs_weight(p);
            e.samples[i] = std::move(p);
        });
        if (e.ess() < 0.05 * static_cast<double>(N)) {
            e.status = EnsembleStatus::Warn;
            e.note = "importance ESS below 5% of N";
        }
    } else {
        if (ctx == nullptr) throw std::invalid_argument("sample_nuL1: markov method needs a chain context");
        parallel_for(N, threads, [&](size_t i) { e.samples[i] = sample_markov_path(*ctx, seed, i); });
    }
    return e;
}

Ensemble sample_measure(const MeasureSpec& spec, const std::vector<double>& r_nodes, size_t N,
                        uint64_t seed, const SamplerResources& res, int threads) {
    spec.validate();
    Ensemble e;
    e.spec = spec;
    e.samples.resize(N);
    switch (spec.tag) {
        case MeasureTag::MuL1:
        case MeasureTag::MuL2:
        case MeasureTag::NuL2:
            parallel_for(N, threads, [&](size_t i) {
                PathSample p = sample_bridge(spec.L, r_nodes, seed, i, BridgeMethod::Sequential);
                p.measure = spec.tag;
                e.samples[i] = std::move(p);
            });
            break;
        case MeasureTag::Wiener:
            parallel_for(N, threads, [&](size_t i) { e.samples[i] = sample_wiener(r_nodes, seed, i); });
            break;
        case MeasureTag::NuL1:
            return sample_nuL1(spec.L, r_nodes, N, seed,
                               res.nuL1 ? NuL1Method::Markov : NuL1Method::Importance, res.nuL1, threads);
        case MeasureTag::NuInf1: {
            if (res.nuInf == nullptr) throw std::invalid_argument("sample_measure: nu_inf_1 needs a context");
            parallel_for(N, threads,
                         [&](size_t i) { e.samples[i] = sample_markov_path(*res.nuInf, seed, i); });
            break;
        }
        case MeasureTag::NuL: {
            if (res.nuL1 == nullptr) throw std::invalid_argument("sample_measure: nu_L needs a context");
            parallel_for(N, threads, [&](size_t i) {
                PathSample re = sample_markov_path(*res.nuL1, seed, 2 * i);
                PathSample im = sample_bridge(spec.L, re.r_nodes, seed ^ 0x9e3779b97f4a7c15ULL, 2 * i + 1,
                                              BridgeMethod::Sequential);
                PathSample p = std::move(re);
                for (size_t k = 0; k < p.values.size(); ++k)
                    p.values[k] = {p.values[k].real(), im.values[k].real()};
                p.measure = MeasureTag::NuL;
                e.samples[i] = std::move(p);
            });
            break;
        }
        case MeasureTag::NuInf: {
            if (res.nuInf == nullptr) throw std::invalid_argument("sample_measure: nu_inf needs a context");
            parallel_for(N, threads, [&](size_t i) {
                PathSample re = sample_markov_path(*res.nuInf, seed, 2 * i);
                PathSample im = sample_wiener(re.r_nodes, seed ^ 0x9e3779b97f4a7c15ULL, 2 * i + 1);
                PathSample p = std::move(re);
                for (size_t k = 0; k < p.values.size(); ++k)
                    p.values[k] = {p.values[k].real(), im.values[k].real()};
                p.measure = MeasureTag::NuInf;
                e.samples[i] = std::move(p);
            });
            break;
        }
    }
    return e;
}

double rn_derivative_gaussian(double L, double R, double fR) {
    if (!(L > R) || !(R > 0.0)) throw std::invalid_argument("rn_derivative_gaussian: need L > R > 0");
    return heat_kernel(L, 0.0, R, fR) / heat_kernel(L, 0.0, 0.0, 0.0);
}

double rn_derivative(double fR, const RnInputs& inputs) {
    const double F = inputs.F_R(fR);
    if (!(F > 0.0)) throw std::runtime_error("rn_derivative: F <= 0 at the path endpoint");
    return inputs.phi_L0_R(fR) / (F * inputs.phi_L_00);
}

HolderEstimate holder_exponent_estimate(const std::vector<double>& values, double spacing,
                                        const std::vector<int>& lag_cells) {
    HolderEstimate est;
    if (lag_cells.size() < 3) throw std::invalid_argument("holder_exponent_estimate: need >= 3 lags");
    std::vector<double> logs_delta, logs_inc;
    for (int m : lag_cells) {
        if (m <= 0 || static_cast<size_t>(m) >= values.size())
            throw std::invalid_argument("holder_exponent_estimate: lag outside the grid");
        double sup = 0.0;
        for (size_t i = 0; i + static_cast<size_t>(m) < values.size(); ++i)
            sup = std::max(sup, std::abs(values[i + static_cast<size_t>(m)] - values[i]));
        if (sup <= 0.0) return est;  // degenerate path
        logs_delta.push_back(std::log(spacing * static_cast<double>(m)));
        logs_inc.push_back(std::log(sup));
    }
    est.exponent = regression_slope(logs_delta, logs_inc);
    est.ok = true;
    return est;
}

FkReport fk_crosscheck(const PotentialSpec& V, double L, const std::vector<FkObservable>& observables,
                       size_t N, uint64_t seed, const KernelSolveParams& params, int threads) {
    if (V.kind == PotentialKind::Quartic || V.has_drift())
        throw std::invalid_argument("fk_crosscheck: potential must be bounded");
    std::vector<FkObservable> obs = observables;
    std::sort(obs.begin(), obs.end(), [](const FkObservable& a, const FkObservable& b) { return a.r < b.r; });

    // Monte Carlo side: sequential bridges on a uniform grid containing the
    // observable times.
    const int cells = 256;
    std::vector<double> nodes(static_cast<size_t>(cells) + 1);
    for (int i = 0; i <= cells; ++i) nodes[static_cast<size_t>(i)] = L * static_cast<double>(i) / cells;
    std::vector<size_t> obs_idx;
    for (const auto& o : obs) {
        const double u = o.r / L * cells;
        const size_t i = static_cast<size_t>(std::lround(u));
        if (std::abs(nodes[i] - o.r) > 1e-9)
            throw std::invalid_argument("fk_crosscheck: observable time must sit on the path grid");
        obs_idx.push_back(i);
    }

    std::vector<double> draws(N, 0.0);
    parallel_for(N, threads, [&](size_t k) {
        const PathSample p = sample_bridge(L, nodes, seed, k, BridgeMethod::Sequential);
        double integral = 0.0;
        double prev = V.value(1e-12, 0.0);
        for (size_t i = 1; i < nodes.size(); ++i) {
            const double g = V.value(std::max(nodes[i], 1e-12), p.values[i].real());
            integral += 0.5 * (prev + g) * (nodes[i] - nodes[i - 1]);
            prev = g;
        }
        double val = std::exp(integral);
        for (size_t j = 0; j < obs.size(); ++j) val *= obs[j].f(p.values[obs_idx[j]].real());
        draws[k] = val;
    });
    FkReport rep;
    rep.mc_value = mean(draws);
    rep.mc_stderr = std::sqrt(variance(draws) / static_cast<double>(N));

    // Kernel side: iterated quadrature of the perturbed kernel chain.
    const Grid1D grid = default_kernel_grid(V, 0.0, 0.0, L, params.dx);
    const double h = grid.spacing();
    const double denom = heat_kernel(L, 0.0, 0.0, 0.0);
    if (obs.empty()) {
        const KernelField f = solve_kernel(V, 0.0, 0.0, L, grid, params, {L});
        rep.kernel_value = f.value_at(L, 0.0) / denom;
    } else {
        const KernelField first = solve_kernel(V, 0.0, 0.0, obs.front().r, grid, params, {obs.front().r});
        std::vector<double> vec = first.values.back();
        for (int i = 0; i < grid.n; ++i) vec[static_cast<size_t>(i)] *= obs.front().f(grid.node(i));
        for (size_t j = 1; j < obs.size(); ++j) {
            const auto T = build_transition_matrix(V, obs[j - 1].r, obs[j].r, grid, params);
            std::vector<double> next(vec.size(), 0.0);
            for (size_t a = 0; a < vec.size(); ++a) {
                if (vec[a] == 0.0) continue;
                for (size_t b = 0; b < next.size(); ++b) next[b] += vec[a] * T[a][b];
            }
            for (int i = 0; i < grid.n; ++i) next[static_cast<size_t>(i)] *= h * obs[j].f(grid.node(i));
            vec.swap(next);
        }
        const KernelField back = solve_kernel_backward(V, L, 0.0, obs.back().r, grid, params, {obs.back().r});
        const auto& hvec = back.values.front();
        std::vector<double> prod(vec.size());
        for (size_t i = 0; i < vec.size(); ++i) prod[i] = vec[i] * hvec[i];
        rep.kernel_value = trapezoid(prod, h) / denom;
    }

    rep.discrepancy_sigmas = std::abs(rep.mc_value - rep.kernel_value) / std::max(rep.mc_stderr, 1e-300);
    return rep;
}

PathSample restrict_path(const PathSample& path, double R) {
    PathSample out;
    out.seed = path.seed;
    out.weight = path.weight;
    out.measure = path.measure;
    out.domain_length = R;
    for (size_t i = 0; i < path.r_nodes.size(); ++i) {
        if (path.r_nodes[i] <= R + 1e-12) {
            out.r_nodes.push_back(path.r_nodes[i]);
            out.values.push_back(path.values[i]);
        }
    }
    return out;  // the series representation does not restrict; dropped
}

LiftedField lift_to_3d(const PathSample& path, double L) {
    if (!path.has_coefficients())
        throw std::invalid_argument("lift_to_3d: needs the sine-series representation");
    LiftedField out;
    out.r_nodes = path.r_nodes;
    const size_t n = path.r_nodes.size();
    out.u.resize(n);
    out.u_t.resize(n);
    const double norm = std::sqrt(2.0 / L);
    const size_t modes = path.coefficients.size();
    for (size_t i = 0; i < n; ++i) {
        const double r = path.r_nodes[i];
        if (r > 0.0) {
            double vt = 0.0;
            for (size_t m = 1; m <= modes; ++m) {
                const double omega = static_cast<double>(m) * M_PI / L;
                vt += path.coefficients[m - 1].imag() * omega * std::sin(omega * r);
            }
            out.u[i] = path.values[i].real() / r;
            out.u_t[i] = norm * vt / r;
        } else {
            double du = 0.0, dvt = 0.0;
            for (size_t m = 1; m <= modes; ++m) {
                const double omega = static_cast<double>(m) * M_PI / L;
                du += path.coefficients[m - 1].real() * omega;
                dvt += path.coefficients[m - 1].imag() * omega * omega;
            }
            out.u[i] = norm * du;
            out.u_t[i] = norm * dvt;
        }
    }
    return out;
}

std::string serialize_ensemble(const Ensemble& e) {
    std::string out = "gibbsflow.ensemble.v1\n";
    out += "measure " + measure_tag_name(e.spec.tag) + " " + format_hex(e.spec.domain_length()) + "\n";
    out += "status " + std::string(e.status == EnsembleStatus::Ok ? "ok" : "warn") + "\n";
    if (!e.samples.empty()) {
        std::string line = "nodes";
        for (double r : e.samples.front().r_nodes) {
            line += ' ';
            line += format_hex(r);
        }
        out += line + "\n";
    }
    out += "paths " + std::to_string(e.samples.size()) + "\n";
    for (const auto& p : e.samples) {
        std::string line = "path " + std::to_string(p.seed) + " " + format_hex(p.weight);
        for (const auto& v : p.values) {
            line += ' ';
            line += format_hex(v.real());
            line += ' ';
            line += format_hex(v.imag());
        }
        out += line + "\n";
    }
    out += "end\n";
    return out;
}

Ensemble parse_ensemble(const std::string& text) {
    LineReader reader(text);
    std::vector<std::string> tok;
    if (!reader.next(tok) || tok[0] != "gibbsflow.ensemble.v1") reader.fail("bad ensemble header");
    Ensemble e;
    std::vector<double> nodes;
    size_t expected = 0;
    while (reader.next(tok)) {
        if (tok[0] == "measure") {
            e.spec.tag = measure_tag_from_name(tok.at(1));
            const double len = parse_double(tok.at(2));
            if (e.spec.is_infinite())
                e.spec.R = len;
            else
                e.spec.L = len;
        } else if (tok[0] == "status") {
            e.status = (tok.at(1) == "ok") ? EnsembleStatus::Ok : EnsembleStatus::Warn;
        } else if (tok[0] == "nodes") {
            for (size_t i = 1; i < tok.size(); ++i) nodes.push_back(parse_double(tok[i]));
        } else if (tok[0] == "paths") {
            expected = static_cast<size_t>(std::stoul(tok.at(1)));
        } else if (tok[0] == "path") {
            PathSample p;
            p.seed = std::stoull(tok.at(1));
            p.weight = parse_double(tok.at(2));
            p.r_nodes = nodes;
            for (size_t i = 3; i + 1 < tok.size(); i += 2)
                p.values.push_back({parse_double(tok[i]), parse_double(tok[i + 1])});
            p.measure = e.spec.tag;
            p.domain_length = e.spec.domain_length();
            e.samples.push_back(std::move(p));
        } else if (tok[0] == "end") {
            break;
        } else {
            reader.fail("unknown key: " + tok[0]);
        }
    }
    if (e.samples.size() != expected) throw std::runtime_error("ensemble: path count mismatch");
    const bool pinned = e.spec.tag != MeasureTag::Wiener && e.spec.tag != MeasureTag::NuInf1 &&
                        e.spec.tag != MeasureTag::NuInf;
    for (const auto& p : e.samples) {
        if (p.values.size() != nodes.size()) throw std::runtime_error("ensemble: value width mismatch");
        if (!(p.weight > 0.0)) throw std::runtime_error("ensemble: nonpositive weight");
        if (std::abs(p.values.front()) > 1e-12) throw std::runtime_error("ensemble: path must vanish at 0");
        if (pinned && std::abs(p.values.back().real()) > 1e-12)
            throw std::runtime_error("ensemble: pinned path must vanish at the far end");
    }
    return e;
}

}  // namespace gibbsflow
