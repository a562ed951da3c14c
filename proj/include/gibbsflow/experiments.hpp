#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gibbsflow/asymptotics.hpp"
#include "gibbsflow/measures.hpp"
#include "gibbsflow/wave.hpp"

namespace gibbsflow {

// Experiment harness: measure-invariance statistics under the nonlinear flow,
// the exactly-preserved linear baseline, finite-to-infinite volume
// convergence, and the long-time decay sweep, all with deterministic
// seed-indexed sampling and machine-readable verdicts.

struct Verdict {
    std::string name;
    std::string result;  // pass | warn | fail
    double statistic = 0.0;
    double threshold = 0.0;
    std::string details;
};

struct RunReport {
    std::string experiment_id;
    std::vector<std::pair<std::string, std::string>> config_echo;
    std::vector<Verdict> verdicts;
    std::vector<std::string> table_names;
    std::vector<std::string> tables;  // TSV payloads parallel to table_names
    double runtime_seconds = 0.0;     // informational; never persisted

    bool all_pass() const;
    bool has_fail() const;
};

struct ObservableSpec {
    enum class Kind { ReAt, Abs2At, MeanAbs2 };
    Kind kind = Kind::ReAt;
    double r0 = 0.0, r1 = 0.0;

    static ObservableSpec parse(const std::string& text);
    std::string name() const;
    double eval(const WaveState& state) const;
};

struct InvarianceConfig {
    double L = 4.0;
    size_t N = 20000;
    std::vector<double> flow_times = {0.25, 0.5};
    std::vector<ObservableSpec> observables;
    uint64_t seed = 1;
    int grid_coarse_pow2 = 9;  // fine = coarse + 1
    int chain_intervals = 64;
    double alpha = 0.01;
    double window = 0.25;
    int tau_cells = 2;
    double picard_tol = 1e-7;
    double chain_dx = 12.0 / 320.0;
    double chain_dt = 1.0 / 128.0;
    std::string resolution = "both";  // coarse | fine | both
};

/// Initial datum for the nonlinear flow: conditioned-kernel backbone for the
/// real part with exact bridge infill between chain times, and a dyadic
/// bridge imaginary part. A coarser grid consumes a prefix of the finer
/// grid's randomness, so resolutions share their samples nodewise.
std::vector<std::complex<double>> nuL_wave_datum(const MarkovChainContext& ctx, const WaveGrid& grid,
                                                 uint64_t seed, uint64_t index);

RunReport invariance_experiment(const InvarianceConfig& cfg, int threads);

struct BaselineConfig {
    double L = 4.0;
    size_t N = 20000;
    double t = 0.7;
    uint64_t seed = 1;
    int grid_pow2 = 10;
    double alpha = 0.01;
};
RunReport linear_invariance_baseline(const BaselineConfig& cfg, int threads);

struct ConvergenceConfig {
    double R = 1.0;
    std::vector<double> L_list = {4.0, 8.0, 16.0, 32.0};
    size_t N = 20000;
    uint64_t seed = 2;
    double L_star = 128.0;  // infinite-volume reference horizon
    double kernel_dx = 1.0 / 64.0;
    double kernel_dt = 1.0 / 256.0;
};
RunReport convergence_experiment(const ConvergenceConfig& cfg, int threads);

struct AsymptoticsConfig {
    std::vector<double> decay_L = {64.0, 91.0, 128.0, 181.0, 256.0, 362.0, 512.0};
    std::vector<double> plateau_s = {2.0, 3.0};
    std::vector<double> plateau_y = {0.0, 0.5};
    int spectrum_modes = 24;
};
RunReport asymptotics_experiment(const AsymptoticsConfig& cfg, int threads);

/// Persist a report (versioned text + TSV tables) under dir/<experiment_id>/.
/// Runtime is intentionally excluded so reruns are byte-identical.
void write_report(const RunReport& report, const std::string& dir);
RunReport read_report(const std::string& dir, const std::string& experiment_id);

struct RunOutcome {
    int exit_code = 0;  // 0 pass, 1 fail, 2 usage, 3 internal
    std::vector<RunReport> reports;
};
/// Load the JSON experiment list, dispatch, persist everything under out_dir
/// with a manifest. The linear baseline gates nonlinear invariance verdicts.
RunOutcome run_experiments(const std::string& config_path, const std::string& out_dir,
                           uint64_t seed_override, bool has_seed_override, int threads,
                           const std::string& resolution);

/// Render the persisted reports of a run directory to a summary string.
std::string render_run_summary(const std::string& run_dir);

}  // namespace gibbsflow
