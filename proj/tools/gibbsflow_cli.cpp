// Command-line front end: artifact generation (kernel fields, spectra,
// asymptotic profiles, ensembles, flow traces) and the experiment runner.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gibbsflow/asymptotics.hpp"
#include "gibbsflow/experiments.hpp"
#include "gibbsflow/io.hpp"
#include "gibbsflow/kernel.hpp"
#include "gibbsflow/measures.hpp"
#include "gibbsflow/spectrum.hpp"
#include "gibbsflow/wave.hpp"

namespace {

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;
constexpr int kExitInternal = 3;

using namespace gibbsflow;

PotentialSpec potential_from_name(const std::string& name, double c, int n) {
    if (name == "zero") return PotentialSpec::zero();
    if (name == "constant") return PotentialSpec::constant_pot(c);
    if (name == "cutoff_quartic") return PotentialSpec::cutoff_quartic(n);
    if (name == "quartic") return PotentialSpec::quartic();
    if (name == "static_quartic") return PotentialSpec::static_quartic();
    if (name == "transformed_quartic") return PotentialSpec::transformed_quartic();
    throw CLI::ValidationError("--potential", "unknown potential: " + name);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gibbs-measure toolkit for the radial cubic wave equation"};
    app.require_subcommand(1);
    app.fallthrough();

    uint64_t seed = 1;
    bool seed_set = false;
    std::string out_dir = "runs/out";
    int threads = 0;
    std::string resolution;
    app.add_option("--seed", seed, "RNG seed override")->each([&](const std::string&) { seed_set = true; });
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--threads", threads, "worker threads (0 = hardware)");
    app.add_option("--resolution", resolution, "coarse | fine | both (invariance experiments)")
        ->check(CLI::IsMember({"coarse", "fine", "both"}));

    // kernel: solve a fundamental solution and write the field artifact.
    auto* kernel_cmd = app.add_subcommand("kernel", "solve a kernel field and run its identity checks");
    std::string pot_name = "quartic";
    double pot_c = -1.0;
    int pot_n = 1;
    double k_s = 0.0, k_y = 0.0, k_rmax = 1.0, k_dx = 1.0 / 128.0, k_dt = 1.0 / 1024.0;
    kernel_cmd->add_option("--potential", pot_name, "zero|constant|cutoff_quartic|quartic|static_quartic");
    kernel_cmd->add_option("--constant", pot_c, "constant potential value");
    kernel_cmd->add_option("--cutoff-n", pot_n, "cutoff index");
    kernel_cmd->add_option("--s", k_s, "source time");
    kernel_cmd->add_option("--y", k_y, "source position");
    kernel_cmd->add_option("--rmax", k_rmax, "final time");
    kernel_cmd->add_option("--dx", k_dx, "grid spacing");
    kernel_cmd->add_option("--dt", k_dt, "time step");

    // spectrum: eigenpairs + two-oracle self test.
    auto* spectrum_cmd = app.add_subcommand("spectrum", "quartic oscillator eigenpairs and self-test");
    int spec_modes = 24;
    spectrum_cmd->add_option("--modes", spec_modes, "number of excited modes (K)");

    // asymptotics: build and persist the long-time profile.
    auto* asym_cmd = app.add_subcommand("asymptotics", "decay fit, plateau sweep, F/G tables");
    double asym_lstar = 128.0;
    asym_cmd->add_option("--L-star", asym_lstar, "infinite-volume reference horizon");

    // sample: ensembles of any measure tag.
    auto* sample_cmd = app.add_subcommand("sample", "draw an ensemble of a path measure");
    std::string measure_name = "nu_L_1";
    double sample_L = 4.0, sample_R = 1.0;
    size_t sample_N = 1000;
    int sample_intervals = 32;
    std::string profile_path;
    sample_cmd->add_option("--measure", measure_name, "measure tag (mu_L_1, nu_L_1, nu_L, wiener, nu_inf_1, ...)");
    sample_cmd->add_option("--L", sample_L, "finite volume length");
    sample_cmd->add_option("--R", sample_R, "restriction length (infinite-volume tags)");
    sample_cmd->add_option("--N", sample_N, "ensemble size");
    sample_cmd->add_option("--chain-intervals", sample_intervals, "conditioned-chain intervals");
    sample_cmd->add_option("--profile", profile_path, "asymptotic profile artifact (for nu_inf tags)");

    // flow: nonlinear flow of a band-limited datum or an ensemble path.
    auto* flow_cmd = app.add_subcommand("flow", "run the nonlinear flow and write the trace");
    double flow_L_len = 4.0, flow_t = 0.5, flow_window = 0.25;
    int flow_pow2 = 10;
    std::string flow_ensemble;
    size_t flow_index = 0;
    flow_cmd->add_option("--L", flow_L_len, "box length");
    flow_cmd->add_option("--t", flow_t, "target time");
    flow_cmd->add_option("--window", flow_window, "Picard window");
    flow_cmd->add_option("--grid-pow2", flow_pow2, "log2 of grid cells");
    flow_cmd->add_option("--ensemble", flow_ensemble, "take the initial datum from this ensemble artifact");
    flow_cmd->add_option("--index", flow_index, "path index within the ensemble");

    // invariance: single nonlinear invariance experiment.
    auto* inv_cmd = app.add_subcommand("invariance", "nonlinear invariance experiment");
    InvarianceConfig inv_cfg;
    inv_cmd->add_option("--L", inv_cfg.L, "box length");
    inv_cmd->add_option("--N", inv_cfg.N, "samples per ensemble half");
    inv_cmd->add_option("--grid-coarse-pow2", inv_cfg.grid_coarse_pow2, "log2 cells of the coarse grid");
    inv_cmd->add_option("--chain-intervals", inv_cfg.chain_intervals, "backbone intervals");
    inv_cmd->add_option("--alpha", inv_cfg.alpha, "significance level");
    std::vector<double> inv_times;
    inv_cmd->add_option("--times", inv_times, "flow times");
    std::vector<std::string> inv_obs;
    inv_cmd->add_option("--observables", inv_obs, "observable specs (re_at:R, abs2_at:R, mean_abs2:A:B)");

    // run / report: the config-driven pipeline.
    auto* run_cmd = app.add_subcommand("run", "run the experiment list of a JSON config");
    std::string config_path;
    run_cmd->add_option("--config", config_path, "JSON config path")->required();

    auto* report_cmd = app.add_subcommand("report", "render the summary of a run directory");
    std::string report_dir;
    report_cmd->add_option("dir", report_dir, "run directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (kernel_cmd->parsed()) {
            const PotentialSpec pot = potential_from_name(pot_name, pot_c, pot_n);
            KernelSolveParams params;
            params.dx = k_dx;
            params.dt = k_dt;
            const Grid1D grid = default_kernel_grid(pot, k_s, k_y, k_rmax, params.dx);
            const KernelField field = solve_kernel(pot, k_s, k_y, k_rmax, grid, params);
            std::filesystem::create_directories(out_dir);
            const std::string path = (std::filesystem::path(out_dir) / "kernel_field.txt").string();
            write_text_file(path, serialize_kernel_field(field));
            const auto bound = gauss_bound_check(field, field.tolerance());
            std::printf("kernel: %s -> %s\n", pot.label().c_str(), path.c_str());
            std::printf("  mass(r_max) = %.12g\n", field.mass_at(k_rmax));
            std::printf("  gauss bound: %s (excess %.3g, floor %.3g)\n", bound.ok ? "ok" : "violated",
                        bound.max_excess, bound.min_value);
            return bound.ok ? kExitPass : kExitFail;
        }

        if (spectrum_cmd->parsed()) {
            const SpectralBasis basis = eigenpairs(spec_modes, default_spectrum_grid());
            const auto self = spectrum_self_test();
            std::filesystem::create_directories(out_dir);
            const std::string path = (std::filesystem::path(out_dir) / "basis.txt").string();
            write_text_file(path, serialize_basis(basis));
            std::printf("spectrum: %d modes -> %s\n", basis.count(), path.c_str());
            std::printf("  lambda0 = %.12f (shooting %.12f, richardson %.12f, rel diff %.2e)\n",
                        basis.lambda(0), self.lambda0_shooting, self.lambda0_richardson, self.disagreement);
            for (int k = 0; k < std::min(basis.count(), 6); ++k)
                std::printf("  lambda_%d = %.10f\n", k, basis.lambda(k));
            return self.ok ? kExitPass : kExitFail;
        }

        if (asym_cmd->parsed()) {
            const SpectralBasis basis = eigenpairs(24, default_spectrum_grid());
            ProfileOptions options;
            options.L_star = asym_lstar;
            const AsymptoticProfile profile = build_asymptotic_profile(basis, options, PhiTraceParams{}, threads);
            std::filesystem::create_directories(out_dir);
            const std::string path = (std::filesystem::path(out_dir) / "asymptotic_profile.txt").string();
            write_text_file(path, serialize_profile(profile));
            std::printf("asymptotics -> %s\n", path.c_str());
            std::printf("  decay exponent %.6f (3 lambda0 = %.6f), power %.6f, C = %.6f, M_emp = %.2f\n",
                        profile.fit.exp_coeff, 3.0 * profile.lambda0, profile.fit.power_coeff, profile.fit.C,
                        profile.M_emp);
            return kExitPass;
        }

        if (sample_cmd->parsed()) {
            MeasureSpec spec;
            spec.tag = measure_tag_from_name(measure_name);
            spec.L = sample_L;
            spec.R = sample_R;
            spec.validate();
            const Grid1D grid(-6.0, 6.0, 321);
            KernelSolveParams kp;
            kp.dx = 12.0 / 320.0;
            kp.dt = 1.0 / 128.0;
            SamplerResources res;
            MarkovChainContext ctxL, ctxI;
            AsymptoticProfile profile;
            const bool needs_pinned = spec.tag == MeasureTag::NuL1 || spec.tag == MeasureTag::NuL;
            const bool needs_inf = spec.tag == MeasureTag::NuInf1 || spec.tag == MeasureTag::NuInf;
            if (needs_pinned) {
                ctxL = build_nuL1_context(spec.L, sample_intervals, grid, kp);
                res.nuL1 = &ctxL;
            }
            if (needs_inf) {
                if (profile_path.empty())
                    throw CLI::ValidationError("--profile", "nu_inf tags need an asymptotic profile artifact");
                profile = parse_profile(read_text_file(profile_path));
                ctxI = build_nuInf1_context(spec.R, sample_intervals, grid, kp,
                                            [&](double s, double y) { return profile.F(s, y); });
                res.nuInf = &ctxI;
            }
            std::vector<double> nodes;
            const int cells = 64;
            for (int i = 0; i <= cells; ++i)
                nodes.push_back(spec.domain_length() * static_cast<double>(i) / cells);
            const Ensemble e = sample_measure(spec, nodes, sample_N, seed, res, threads);
            std::filesystem::create_directories(out_dir);
            const std::string path = (std::filesystem::path(out_dir) / "ensemble.txt").string();
            write_text_file(path, serialize_ensemble(e));
            std::printf("sample: %zu paths of %s -> %s (ess %.1f)\n", e.size(),
                        measure_tag_name(spec.tag).c_str(), path.c_str(), e.ess());
            return kExitPass;
        }

        if (flow_cmd->parsed()) {
            const WaveGrid grid = make_wave_grid(flow_L_len, flow_pow2);
            WaveState g;
            g.grid = grid;
            g.w.assign(static_cast<size_t>(grid.n), {0.0, 0.0});
            if (!flow_ensemble.empty()) {
                const Ensemble e = parse_ensemble(read_text_file(flow_ensemble));
                if (flow_index >= e.size()) throw CLI::ValidationError("--index", "index beyond ensemble");
                const auto& p = e.samples[flow_index];
                for (int i = 0; i < grid.n; ++i) {
                    const double r = grid.node(i);
                    const auto it = std::upper_bound(p.r_nodes.begin(), p.r_nodes.end(), r);
                    if (it == p.r_nodes.begin() || it == p.r_nodes.end()) continue;
                    const size_t hi = static_cast<size_t>(it - p.r_nodes.begin());
                    const double frac = (r - p.r_nodes[hi - 1]) / (p.r_nodes[hi] - p.r_nodes[hi - 1]);
                    g.w[static_cast<size_t>(i)] = p.values[hi - 1] * (1.0 - frac) + p.values[hi] * frac;
                }
                g.w.front() = g.w.back() = {0.0, 0.0};
            } else {
                const double norm = std::sqrt(2.0 / grid.L);
                for (int i = 0; i < grid.n; ++i) {
                    const double r = grid.node(i);
                    g.w[static_cast<size_t>(i)] = {0.4 * norm * std::sin(M_PI * r / grid.L),
                                                   0.2 * norm * std::sin(2.0 * M_PI * r / grid.L)};
                }
                g.w.front() = g.w.back() = {0.0, 0.0};
            }
            PicardParams pp;
            const FlowTrace trace = flow_L(g, flow_t, flow_window, pp);
            std::filesystem::create_directories(out_dir);
            const std::string path = (std::filesystem::path(out_dir) / "flow_trace.txt").string();
            write_text_file(path, serialize_flow_trace(trace));
            std::printf("flow: t = %.4f in %zu windows -> %s (%s)\n", flow_t, trace.windows.size(),
                        path.c_str(), trace.ok ? "ok" : trace.note.c_str());
            for (const auto& wdiag : trace.windows)
                std::printf("  window T=%.4f iterations=%d ratio=%.3f residual=%.2e\n", wdiag.T,
                            wdiag.iterations, wdiag.last_ratio, wdiag.residual);
            return trace.ok ? kExitPass : kExitFail;
        }

        if (inv_cmd->parsed()) {
            if (!inv_times.empty()) inv_cfg.flow_times = inv_times;
            if (!inv_obs.empty()) {
                inv_cfg.observables.clear();
                for (const auto& o : inv_obs) inv_cfg.observables.push_back(ObservableSpec::parse(o));
            }
            if (inv_cfg.observables.empty())
                inv_cfg.observables = {ObservableSpec::parse("re_at:1.0"), ObservableSpec::parse("abs2_at:1.0"),
                                       ObservableSpec::parse("mean_abs2:0.5:1.5")};
            if (seed_set) inv_cfg.seed = seed;
            if (!resolution.empty()) inv_cfg.resolution = resolution;
            const RunReport rep = invariance_experiment(inv_cfg, threads);
            write_report(rep, out_dir);
            std::printf("invariance (%.1f s):\n", rep.runtime_seconds);
            for (const auto& v : rep.verdicts)
                std::printf("  [%s] %s statistic=%.6g threshold=%.6g\n", v.result.c_str(), v.name.c_str(),
                            v.statistic, v.threshold);
            return rep.all_pass() ? kExitPass : kExitFail;
        }

        if (run_cmd->parsed()) {
            const RunOutcome outcome =
                run_experiments(config_path, out_dir, seed, seed_set, threads, resolution);
            for (const auto& rep : outcome.reports) {
                std::printf("== %s (%.1f s) ==\n", rep.experiment_id.c_str(), rep.runtime_seconds);
                for (const auto& v : rep.verdicts)
                    std::printf("  [%s] %s statistic=%.6g threshold=%.6g\n", v.result.c_str(), v.name.c_str(),
                                v.statistic, v.threshold);
            }
            std::printf("run directory: %s\n", out_dir.c_str());
            return outcome.exit_code;
        }

        if (report_cmd->parsed()) {
            std::fputs(render_run_summary(report_dir).c_str(), stdout);
            return kExitPass;
        }
    } catch (const CLI::Error& exc) {
        return app.exit(exc);
    } catch (const std::invalid_argument& exc) {
        std::fprintf(stderr, "usage error: %s\n", exc.what());
        return kExitUsage;
    } catch (const std::exception& exc) {
        std::fprintf(stderr, "internal error: %s\n", exc.what());
        return kExitInternal;
    }
    return kExitUsage;
}
