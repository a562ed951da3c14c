// Acceptance suite: one pass/fail line per criterion, exit 1 on any failure.
// Every tolerance is pinned here; nothing defers to later calibration.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "gibbsflow/asymptotics.hpp"
#include "gibbsflow/experiments.hpp"
#include "gibbsflow/kernel.hpp"
#include "gibbsflow/measures.hpp"
#include "gibbsflow/parallel.hpp"
#include "gibbsflow/rng.hpp"
#include "gibbsflow/spectrum.hpp"
#include "gibbsflow/stats.hpp"
#include "gibbsflow/wave.hpp"

using namespace gibbsflow;

namespace {

int g_failures = 0;
std::vector<std::string> g_notes;

void check(bool ok, const std::string& what, double value, double bound) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "    %s %s (value %.6g, bound %.6g)", ok ? "ok  " : "FAIL", what.c_str(),
                  value, bound);
    std::puts(buf);
    if (!ok) {
        ++g_failures;
        g_notes.push_back(what);
    }
}

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
};

void banner(int index, const std::string& name) { std::printf("criterion %d: %s\n", index, name.c_str()); }

void verdict_line(int index, const std::string& name, int failures_before, double secs) {
    std::printf("[%s] criterion %d: %s (%.1f s)\n\n", g_failures == failures_before ? "PASS" : "FAIL", index,
                name.c_str(), secs);
}

int threads() { return 2; }

// --- criterion 1: kernel identities ---------------------------------------
void criterion_kernel_identities() {
    const int before = g_failures;
    Timer timer;
    banner(1, "kernel identities");

    KernelSolveParams fine;
    fine.dx = 1.0 / 256.0;
    fine.dt = 1.0 / 1024.0;
    {
        const auto pot = PotentialSpec::constant_pot(-1.0);
        const Grid1D grid = default_kernel_grid(pot, 0.0, 0.0, 2.0, fine.dx);
        const KernelField f = solve_kernel(pot, 0.0, 0.0, 2.0, grid, fine);
        double sup = 0.0;
        const auto& last = f.values.back();
        for (int i = 0; i < grid.n; i += 2)
            sup = std::max(sup, std::abs(last[static_cast<size_t>(i)] -
                                         std::exp(-2.0) * heat_kernel(2.0, grid.node(i), 0.0, 0.0)));
        check(sup < 1e-6, "constant-potential factorization e^{c(r-s)} phi0", sup, 1e-6);
    }
    {
        const double q = gaussian_chapman_kolmogorov_quadrature(0.0, 1.0, 2.0, 0.0, 0.0);
        const double err = std::abs(q - 1.0 / std::sqrt(4.0 * M_PI));
        check(err < 1e-8, "gaussian chapman-kolmogorov 1/sqrt(4 pi)", err, 1e-8);
    }
    {
        KernelSolveParams def;
        def.dx = 1.0 / 128.0;
        def.dt = 1.0 / 1024.0;
        const Grid1D g1 = default_kernel_grid(PotentialSpec::quartic(), 0.0, 0.0, 1.0, def.dx);
        const double e1 =
            chapman_kolmogorov_check(PotentialSpec::quartic(), 0.0, 0.5, 1.0, 0.0, {0.0, 0.5}, g1, def);
        check(e1 < 1e-4, "quartic chapman-kolmogorov at the default grid", e1, 1e-4);

        const KernelSolveParams ref = def.refined(2.0);
        const Grid1D g2 = default_kernel_grid(PotentialSpec::quartic(), 0.0, 0.0, 1.0, ref.dx);
        const double e2 =
            chapman_kolmogorov_check(PotentialSpec::quartic(), 0.0, 0.5, 1.0, 0.0, {0.0, 0.5}, g2, ref);
        const double order = std::log2(e1 / e2);
        check(order >= 1.8, "chapman-kolmogorov refinement order", order, 1.8);
    }
    {
        const auto r1 = beta_identity_check(0.5, 0.5, 1.0, 0.0, 1.0, 0.3, 0.3);
        const auto r2 = beta_identity_check(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0);
        const auto r3 = beta_identity_check(1.0, 0.5, 2.0, 0.0, 1.0, 1.0, 0.0);
        check(r1.abs_error < 1e-5, "beta identity (alpha=beta=1/2)", r1.abs_error, 1e-5);
        check(r2.abs_error < 1e-5, "beta identity (alpha=beta=0)", r2.abs_error, 1e-5);
        check(r3.abs_error < 1e-5, "beta identity (alpha=1, beta=1/2, lambda=2)", r3.abs_error, 1e-5);
    }
    verdict_line(1, "kernel identities", before, timer.seconds());
}

// --- criterion 2: structural bounds ----------------------------------------
void criterion_structural_bounds() {
    const int before = g_failures;
    Timer timer;
    banner(2, "structural bounds");

    KernelSolveParams def;
    def.dx = 1.0 / 128.0;
    def.dt = 1.0 / 1024.0;
    def.store_every = 16;
    const Grid1D grid = default_kernel_grid(PotentialSpec::quartic(), 0.0, 0.0, 1.0, def.dx);
    const KernelField f = solve_kernel(PotentialSpec::quartic(), 0.0, 0.0, 1.0, grid, def);
    const double tol = f.tolerance();
    const auto bound = gauss_bound_check(f, tol);
    check(bound.ok && bound.max_excess <= tol, "gaussian domination 0 <= phi <= phi0", bound.max_excess, tol);
    check(bound.min_value >= -tol, "positivity floor", bound.min_value, -tol);

    const std::vector<std::pair<double, double>> probes = {{1.0, 0.0}, {1.0, 0.5}, {1.0, -1.0}, {0.5, 0.25}, {0.5, 0.0}};
    const auto rep = cutoff_monotonicity_check(0.0, 0.0, 1.0, probes, {1, 4, 16}, grid, def, tol);
    check(rep.ok && rep.max_violation <= tol, "cutoff monotonicity phi0 >= phi_1 >= phi_4 >= phi_16",
          rep.max_violation, tol);
    check(rep.min_value >= -tol, "cutoff positivity at probes", rep.min_value, -tol);

    verdict_line(2, "structural bounds", before, timer.seconds());
}

// --- criterion 3: spectrum ---------------------------------------------------
void criterion_spectrum() {
    const int before = g_failures;
    Timer timer;
    banner(3, "spectrum");

    const SpectralBasis basis = eigenpairs(24, default_spectrum_grid());
    bool bound_ok = true;
    double worst_margin = 1e300;
    for (int k = 0; k <= 20; ++k) {
        const double margin = basis.lambda(k) - (static_cast<double>(k) + 0.25);
        worst_margin = std::min(worst_margin, margin);
        if (margin < 0.0) bound_ok = false;
    }
    check(bound_ok, "lambda_k >= k + 1/4 for k <= 20 (worst margin)", worst_margin, 0.0);

    const auto self = spectrum_self_test();
    check(self.ok && self.disagreement < 1e-6, "lambda0 shooting vs extrapolated matrix (relative)",
          self.disagreement, 1e-6);

    double ortho = 0.0;
    const double h = basis.x_grid.spacing();
    for (int k = 0; k <= 10; ++k) {
        for (int j = 0; j <= k; ++j) {
            double dot = 0.0;
            for (int i = 0; i < basis.x_grid.n; ++i)
                dot += basis.eigenfunctions[static_cast<size_t>(k)][static_cast<size_t>(i)] *
                       basis.eigenfunctions[static_cast<size_t>(j)][static_cast<size_t>(i)];
            ortho = std::max(ortho, std::abs(dot * h - (j == k ? 1.0 : 0.0)));
        }
    }
    check(ortho < 1e-8, "orthonormality residual", ortho, 1e-8);

    verdict_line(3, "spectrum", before, timer.seconds());
}

// --- criterion 4: asymptotics ------------------------------------------------
void criterion_asymptotics() {
    const int before = g_failures;
    Timer timer;
    banner(4, "asymptotics");

    AsymptoticsConfig cfg;  // L in [64, 512], s in {2,3}, y in {0, 1/2}
    const RunReport rep = asymptotics_experiment(cfg, threads());
    for (const auto& v : rep.verdicts)
        check(v.result != "fail", "asymptotics verdict " + v.name, v.statistic, v.threshold);

    verdict_line(4, "asymptotics", before, timer.seconds());
}

// --- criterion 5: measures ---------------------------------------------------
void criterion_measures() {
    const int before = g_failures;
    Timer timer;
    banner(5, "measures");

    // Bridge and Wiener covariance at ten probe pairs, N = 1e5, 3 sigma bands.
    {
        const double L = 4.0;
        const size_t N = 100000;
        std::vector<double> nodes;
        for (int i = 0; i <= 16; ++i) nodes.push_back(L * i / 16.0);
        const std::vector<std::pair<size_t, size_t>> pairs = {{2, 4},  {2, 8},  {2, 12}, {4, 8},  {4, 12},
                                                              {8, 8},  {8, 12}, {4, 4},  {12, 12}, {2, 14}};
        std::vector<std::vector<double>> bridge_vals(nodes.size(), std::vector<double>(N));
        std::vector<std::vector<double>> wiener_vals(nodes.size(), std::vector<double>(N));
        parallel_for(N, threads(), [&](size_t i) {
            const PathSample b = sample_bridge(L, nodes, 1001, i, BridgeMethod::Sequential);
            const PathSample w = sample_wiener(nodes, 1002, i);
            for (size_t j = 0; j < nodes.size(); ++j) {
                bridge_vals[j][i] = b.values[j].real();
                wiener_vals[j][i] = w.values[j].real();
            }
        });
        auto cov_of = [&](const std::vector<double>& a, const std::vector<double>& b) {
            const double ma = mean(a), mb = mean(b);
            double c = 0.0;
            for (size_t i = 0; i < a.size(); ++i) c += (a[i] - ma) * (b[i] - mb);
            return c / static_cast<double>(a.size() - 1);
        };
        double worst_sigma = 0.0;
        for (const auto& [ia, ib] : pairs) {
            const double ra = nodes[ia], rb = nodes[ib];
            const double cb_expect = std::min(ra, rb) * (1.0 - std::max(ra, rb) / L);
            const double cw_expect = std::min(ra, rb);
            const double cb = cov_of(bridge_vals[ia], bridge_vals[ib]);
            const double cw = cov_of(wiener_vals[ia], wiener_vals[ib]);
            auto band = [&](double vaa, double vbb, double vab) {
                return 3.0 * std::sqrt((vaa * vbb + vab * vab) / static_cast<double>(N));
            };
            const double bb = band(ra * (1.0 - ra / L), rb * (1.0 - rb / L), cb_expect);
            const double bw = band(ra, rb, cw_expect);
            worst_sigma = std::max(worst_sigma, std::abs(cb - cb_expect) / (bb / 3.0));
            worst_sigma = std::max(worst_sigma, std::abs(cw - cw_expect) / (bw / 3.0));
        }
        check(worst_sigma < 3.0, "bridge/wiener covariance at 10 probe pairs (worst z)", worst_sigma, 3.0);
    }

    // Importance vs conditioned-chain sampler at three marginals.
    {
        const double L = 4.0;
        const size_t N = 20000;
        KernelSolveParams kp;
        kp.dx = 12.0 / 320.0;
        kp.dt = 1.0 / 128.0;
        const Grid1D grid(-6.0, 6.0, 321);
        const MarkovChainContext ctx = build_nuL1_context(L, 32, grid, kp);
        std::vector<double> chain_nodes = {0.0};
        for (double t : ctx.times) chain_nodes.push_back(t);
        chain_nodes.push_back(L);
        const Ensemble imp = sample_nuL1(L, chain_nodes, N, 2001, NuL1Method::Importance, nullptr, threads());
        const Ensemble mkv = sample_nuL1(L, chain_nodes, N, 2002, NuL1Method::Markov, &ctx, threads());
        double worst_ratio = 0.0;
        for (double r : {1.0, 2.0, 3.0}) {
            const auto ks = ks_two_sample_weighted(imp.marginal(r), imp.weights(), mkv.marginal(r));
            const double band = 3.0 * ks_critical(0.01, ks.n_eff);
            worst_ratio = std::max(worst_ratio, ks.d / band);
        }
        check(worst_ratio < 1.0, "importance vs chain sampler marginals (worst D / combined band)",
              worst_ratio, 1.0);
        check(imp.ess() > 0.05 * static_cast<double>(N), "importance effective sample size", imp.ess(),
              0.05 * static_cast<double>(N));
    }

    // Feynman-Kac with the constant potential.
    {
        KernelSolveParams kp;
        kp.dx = 1.0 / 64.0;
        kp.dt = 1.0 / 512.0;
        const auto rep = fk_crosscheck(PotentialSpec::constant_pot(-1.0), 2.0, {}, 4000, 2003, kp, threads());
        const double target = std::exp(-2.0);
        check(std::abs(rep.mc_value - target) < 1e-12, "feynman-kac V=-1 bridge route", rep.mc_value, target);
        check(std::abs(rep.kernel_value - target) < 1e-4, "feynman-kac V=-1 kernel route", rep.kernel_value,
              target);
    }

    // Gaussian Radon-Nikodym value.
    {
        const double v = rn_derivative_gaussian(2.0, 1.0, 0.0);
        check(std::abs(v - std::sqrt(2.0)) < 1e-6, "gaussian radon-nikodym sqrt(2)", v, std::sqrt(2.0));
    }

    // Finite-to-infinite volume convergence (exact-density route + samplers).
    {
        ConvergenceConfig cfg;
        cfg.N = 20000;
        const RunReport rep = convergence_experiment(cfg, threads());
        for (const auto& v : rep.verdicts)
            check(v.result != "fail", "convergence verdict " + v.name, v.statistic, v.threshold);
    }

    verdict_line(5, "measures", before, timer.seconds());
}

// --- criterion 6: Hoelder regularity ----------------------------------------
void criterion_holder() {
    const int before = g_failures;
    Timer timer;
    banner(6, "hoelder regularity");

    const double L = 4.0;
    const int cells = 1 << 12;
    std::vector<double> nodes;
    for (int i = 0; i <= cells; ++i) nodes.push_back(L * i / cells);
    const double h = nodes[1];
    const std::vector<int> lags = {4, 8, 16, 32, 64};
    const int N = 200;

    std::vector<double> wiener_slopes(N), nu_slopes(N), nu_weights(N);
    parallel_for(static_cast<size_t>(N), threads(), [&](size_t i) {
        const PathSample w = sample_wiener(nodes, 3001, i);
        wiener_slopes[i] = holder_exponent_estimate(w.real_values(), h, lags).exponent;
        const PathSample b = sample_bridge(L, nodes, 3002, i, BridgeMethod::Sequential);
        nu_weights[i] = gibbs_weight(b);
        nu_slopes[i] = holder_exponent_estimate(b.real_values(), h, lags).exponent;
    });
    const double wiener_mean = mean(wiener_slopes);
    const double nu_mean = weighted_mean(nu_slopes, nu_weights);
    check(wiener_mean > 0.40 && wiener_mean < 0.55, "wiener ensemble mean exponent", wiener_mean, 0.5);
    check(nu_mean > 0.40 && nu_mean < 0.55, "nu_L_1 ensemble mean exponent", nu_mean, 0.5);

    verdict_line(6, "hoelder regularity", before, timer.seconds());
}

// --- criterion 7: wave solver ------------------------------------------------
void criterion_wave() {
    const int before = g_failures;
    Timer timer;
    banner(7, "wave solver");

    const WaveGrid grid = make_wave_grid(4.0, 12);
    CounterRng rng(4001, 0);
    WaveState w0;
    w0.grid = grid;
    w0.w.assign(static_cast<size_t>(grid.n), {0.0, 0.0});
    const double norm = std::sqrt(2.0 / grid.L);
    for (int m = 1; m <= 32; ++m) {
        const double ar = rng.gaussian() / m, ai = rng.gaussian() / m;
        for (int i = 0; i < grid.n; ++i) {
            const double s = norm * std::sin(m * M_PI * grid.node(i) / grid.L);
            w0.w[static_cast<size_t>(i)] += std::complex<double>(ar * s, ai * s);
        }
    }
    w0.w.front() = w0.w.back() = {0.0, 0.0};

    {
        const WaveState spec = spectral_free_flow(w0, 0.5);
        auto re_dal = cos_prop(w0.re(), 0.5, grid);
        const auto s = sin_prop(abs_deriv(w0.im(), grid), 0.5, grid);
        for (size_t i = 0; i < re_dal.size(); ++i) re_dal[i] += s[i];
        double dev = 0.0;
        for (size_t i = 0; i < re_dal.size(); ++i) dev = std::max(dev, std::abs(re_dal[i] - spec.re()[i]));
        check(dev < 1e-8, "d'Alembert vs spectral free evolution (band-limited)", dev, 1e-8);
    }
    {
        PicardParams pp;
        pp.tol = 1e-8;
        WaveState g = w0;
        for (auto& z : g.w) z *= 0.6;
        const auto sol = picard_solve(g.re(), g.im(), 0.25, 1e-8, grid, pp);
        check(sol.diag.residual < 1e-8, "picard residual", sol.diag.residual, 1e-8);
        check(sol.diag.last_ratio < 0.9, "picard geometric contraction ratio", sol.diag.last_ratio, 0.9);
    }
    {
        PicardParams pp;
        pp.tol = 1e-10;
        const WaveGrid g11 = make_wave_grid(4.0, 11);
        WaveState g;
        g.grid = g11;
        g.w.assign(static_cast<size_t>(g11.n), {0.0, 0.0});
        CounterRng r2(4002, 0);
        for (int m = 1; m <= 8; ++m) {
            const double ar = 0.4 * r2.gaussian() / m, ai = 0.4 * r2.gaussian() / m;
            for (int i = 0; i < g11.n; ++i) {
                const double s = norm * std::sin(m * M_PI * g11.node(i) / g11.L);
                g.w[static_cast<size_t>(i)] += std::complex<double>(ar * s, ai * s);
            }
        }
        g.w.front() = g.w.back() = {0.0, 0.0};
        const FlowTrace fwd = flow_L(g, 0.5, 0.25, pp);
        const FlowTrace back = flow_L(fwd.states.back(), -0.5, 0.25, pp);
        double dev = 0.0;
        for (size_t i = 0; i < g.w.size(); ++i)
            dev = std::max(dev, std::abs(back.states.back().w[i] - g.w[i]));
        check(fwd.ok && back.ok && dev < 1e-6, "reversibility of the nonlinear flow", dev, 1e-6);
    }
    {
        const WaveGrid g8 = make_wave_grid(8.0, 11);
        PicardParams pp;
        std::vector<double> f1(static_cast<size_t>(g8.n), 0.0), f2 = f1;
        for (int i = 0; i < g8.n; ++i) {
            const double r = g8.node(i);
            f1[static_cast<size_t>(i)] = 0.4 * std::sin(3.0 * M_PI * r / g8.L);
            f2[static_cast<size_t>(i)] = 0.2 * std::sin(5.0 * M_PI * r / g8.L);
        }
        f1.front() = f1.back() = f2.front() = f2.back() = 0.0;
        const auto pure = fsop_check(f1, f2, 5.0, 6.5, 3.0, 1.0, g8, pp, PropagatorRoute::DAlembert);
        check(pure.max_deviation <= 1e-12, "finite speed of propagation (domain-of-dependence route)",
              pure.max_deviation, 1e-12);
    }
    {
        // Scaling covariance between L = 4 and L = 2 at matched grids.
        const WaveGrid g4 = make_wave_grid(4.0, 11);
        WaveGrid g2;
        g2.L = 2.0;
        g2.n = (1 << 10) + 1;
        PicardParams p4;
        p4.tau_cells = 2;
        p4.tol = 1e-10;
        PicardParams p2 = p4;
        p2.tau_cells = 1;
        WaveState w4;
        w4.grid = g4;
        w4.w.assign(static_cast<size_t>(g4.n), {0.0, 0.0});
        CounterRng r3(4003, 0);
        for (int m = 1; m <= 6; ++m) {
            const double ar = 0.5 * r3.gaussian() / m, ai = 0.5 * r3.gaussian() / m;
            for (int i = 0; i < g4.n; ++i) {
                const double s = norm * std::sin(m * M_PI * g4.node(i) / g4.L);
                w4.w[static_cast<size_t>(i)] += std::complex<double>(ar * s, ai * s);
            }
        }
        w4.w.front() = w4.w.back() = {0.0, 0.0};
        WaveState w2;
        w2.grid = g2;
        w2.w.resize(static_cast<size_t>(g2.n));
        for (int i = 0; i < g2.n; ++i) w2.w[static_cast<size_t>(i)] = w4.w[static_cast<size_t>(2 * i)];
        const FlowTrace f4 = flow_L(w4, 0.5, 0.25, p4);
        const FlowTrace f2t = flow_L(w2, 0.25, 0.125, p2);
        double dev = 0.0;
        for (int i = 0; i < g2.n; ++i)
            dev = std::max(dev, std::abs(f2t.states.back().w[static_cast<size_t>(i)] -
                                         f4.states.back().w[static_cast<size_t>(2 * i)]));
        check(f4.ok && f2t.ok && dev < 1e-9, "scaling covariance nodewise", dev, 1e-9);
    }

    verdict_line(7, "wave solver", before, timer.seconds());
}

// --- criterion 8: invariance --------------------------------------------------
void criterion_invariance() {
    const int before = g_failures;
    Timer timer;
    banner(8, "measure invariance under the nonlinear flow");

    BaselineConfig base;
    base.L = 4.0;
    base.N = 20000;
    base.t = 0.7;
    base.seed = 8001;
    base.grid_pow2 = 10;
    const RunReport baseline = linear_invariance_baseline(base, threads());
    for (const auto& v : baseline.verdicts)
        check(v.result == "pass", "baseline verdict " + v.name, v.statistic, v.threshold);
    if (!baseline.all_pass()) {
        std::puts("    baseline failed: invariance verdicts would be harness faults; aborting criterion");
        verdict_line(8, "measure invariance under the nonlinear flow", before, timer.seconds());
        return;
    }

    InvarianceConfig cfg;
    cfg.L = 4.0;
    cfg.N = 20000;
    cfg.flow_times = {0.25, 0.5};
    cfg.observables = {ObservableSpec::parse("re_at:1.0"), ObservableSpec::parse("abs2_at:1.0"),
                       ObservableSpec::parse("mean_abs2:0.5:1.5")};
    cfg.seed = 8002;
    cfg.grid_coarse_pow2 = 9;
    cfg.chain_intervals = 64;
    cfg.alpha = 0.01;
    cfg.resolution = "both";
    const RunReport rep = invariance_experiment(cfg, threads());
    for (const auto& v : rep.verdicts)
        check(v.result != "fail", "invariance verdict " + v.name, v.statistic, v.threshold);

    verdict_line(8, "measure invariance under the nonlinear flow", before, timer.seconds());
}

}  // namespace

int main() {
    Timer total;
    std::puts("gibbsflow acceptance suite");
    std::puts("==========================\n");

    criterion_kernel_identities();
    criterion_structural_bounds();
    criterion_spectrum();
    criterion_asymptotics();
    criterion_measures();
    criterion_holder();
    criterion_wave();
    criterion_invariance();

    std::printf("==========================\n");
    std::printf("total: %.1f s, %d failing check(s)\n", total.seconds(), g_failures);
    for (const auto& n : g_notes) std::printf("  failed: %s\n", n.c_str());
    return g_failures == 0 ? 0 : 1;
}
