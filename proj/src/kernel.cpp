#include "gibbsflow/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gibbsflow/io.hpp"
#include "gibbsflow/tridiag.hpp"

namespace gibbsflow {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Quartic-confined fields concentrate within ~r^{1/3}; free and constant
// potentials spread diffusively and need sqrt-scaled room instead.
double auto_halfwidth(const PotentialSpec& pot, double r_span, double y) {
    const double span = std::max(r_span, 1e-12);
    if (pot.kind == PotentialKind::Zero || pot.kind == PotentialKind::Constant)
        return std::abs(y) + 10.0 + 8.0 * std::sqrt(span);
    return std::abs(y) + std::max(10.0, 6.0 * std::cbrt(span));
}

struct FactoredTridiag {
    std::vector<double> cp;
    std::vector<double> inv_piv;
    std::vector<double> sub;

    void factor(const std::vector<double>& a, const std::vector<double>& b, const std::vector<double>& c) {
        const size_t n = b.size();
        cp.resize(n);
        inv_piv.resize(n);
        sub = a;
        inv_piv[0] = 1.0 / b[0];
        cp[0] = c[0] * inv_piv[0];
        for (size_t i = 1; i < n; ++i) {
            inv_piv[i] = 1.0 / (b[i] - a[i] * cp[i - 1]);
            cp[i] = c[i] * inv_piv[i];
        }
    }
    void solve(std::vector<double>& d) const {
        const size_t n = d.size();
        d[0] *= inv_piv[0];
        for (size_t i = 1; i < n; ++i) d[i] = (d[i] - sub[i] * d[i - 1]) * inv_piv[i];
        for (size_t i = n - 1; i-- > 0;) d[i] -= cp[i] * d[i + 1];
    }
};

// One Crank-Nicolson march of the interior values. The potential (and drift)
// are evaluated at the half step. `cutoff_below` replaces the quartic
// coefficient by its bounded cut-off when the half-step time falls below it.
class CnStepper {
  public:
    CnStepper(const PotentialSpec& pot, const Grid1D& grid, double cutoff_below)
        : pot_(pot), grid_(grid), cutoff_below_(cutoff_below) {
        const int m = grid.n - 2;
        lower_.resize(m);
        diag_.resize(m);
        upper_.resize(m);
        rhs_.resize(m);
        x_.resize(m);
        for (int i = 0; i < m; ++i) x_[static_cast<size_t>(i)] = grid.node(i + 1);
    }

    void step(std::vector<double>& interior, double r_from, double k) {
        const double rm = r_from + 0.5 * k;
        const double h = grid_.spacing();
        const double mu = 0.5 * k / (h * h);  // k/2 * (1/2) * 2/h^2 pieces assembled below
        const size_t m = interior.size();

        const bool use_cutoff = cutoff_below_ > 0.0 && rm < cutoff_below_;
        PotentialSpec eff = pot_;
        if (use_cutoff) {
            const int n_cut = std::max(1, static_cast<int>(std::ceil(1.0 / cutoff_below_)));
            eff = PotentialSpec::cutoff_quartic(n_cut);
        }

        // A = (1/2) D2 + diag(V) [+ b D1];   (I - k/2 A) v_new = (I + k/2 A) v_old
        for (size_t i = 0; i < m; ++i) {
            const double xi = x_[i];
            const double v = eff.value(rm, xi);
            const double b = pot_.drift_coeff(rm, xi);
            const double adv = 0.25 * k * b / h;  // k/2 * b/(2h)
            lower_[i] = -0.5 * mu + adv;
            diag_[i] = 1.0 + mu - 0.5 * k * v;
            upper_[i] = -0.5 * mu - adv;

            const double left = (i > 0) ? interior[i - 1] : 0.0;
            const double right = (i + 1 < m) ? interior[i + 1] : 0.0;
            rhs_[i] = interior[i] + 0.5 * mu * (left - 2.0 * interior[i] + right) + 0.5 * k * v * interior[i] -
                      adv * (left - right);
        }
        solver_.factor(lower_, diag_, upper_);
        solver_.solve(rhs_);
        interior.swap(rhs_);
    }

    /// Shared factorization applied to many interior vectors at once.
    void step_matrix(std::vector<std::vector<double>>& rows, double r_from, double k) {
        if (rows.empty()) return;
        const double rm = r_from + 0.5 * k;
        const double h = grid_.spacing();
        const double mu = 0.5 * k / (h * h);
        const size_t m = rows.front().size();

        std::vector<double> vhalf(m);
        std::vector<double> adv(m);
        for (size_t i = 0; i < m; ++i) {
            vhalf[i] = pot_.value(rm, x_[i]);
            adv[i] = 0.25 * k * pot_.drift_coeff(rm, x_[i]) / h;
            lower_[i] = -0.5 * mu + adv[i];
            diag_[i] = 1.0 + mu - 0.5 * k * vhalf[i];
            upper_[i] = -0.5 * mu - adv[i];
        }
        solver_.factor(lower_, diag_, upper_);
        std::vector<double> work(m);
        for (auto& row : rows) {
            for (size_t i = 0; i < m; ++i) {
                const double left = (i > 0) ? row[i - 1] : 0.0;
                const double right = (i + 1 < m) ? row[i + 1] : 0.0;
                work[i] = row[i] + 0.5 * mu * (left - 2.0 * row[i] + right) + 0.5 * k * vhalf[i] * row[i] -
                          adv[i] * (left - right);
            }
            solver_.solve(work);
            row.swap(work);
        }
    }

  private:
    PotentialSpec pot_;
    Grid1D grid_;
    double cutoff_below_;
    std::vector<double> x_;
    std::vector<double> lower_, diag_, upper_, rhs_;
    FactoredTridiag solver_;
};

}  // namespace

PotentialSpec PotentialSpec::cutoff_quartic(int n) {
    if (n < 1) throw std::invalid_argument("cutoff_quartic: n must be >= 1");
    PotentialSpec p;
    p.kind = PotentialKind::CutoffQuartic;
    p.cutoff_n = n;
    return p;
}

double PotentialSpec::value(double r, double x) const {
    switch (kind) {
        case PotentialKind::Zero:
            return 0.0;
        case PotentialKind::Constant:
            return constant;
        case PotentialKind::CutoffQuartic: {
            const double n = static_cast<double>(cutoff_n);
            const double num = std::min(x * x * x * x, n);
            const double den = std::max(r * r, 1.0 / n);
            return -0.25 * num / den;
        }
        case PotentialKind::Quartic: {
            const double x2 = x * x;
            return -0.25 * x2 * x2 / (r * r);
        }
        case PotentialKind::TransformedQuartic: {
            const double x2 = x * x;
            return -0.25 * x2 * x2;
        }
    }
    return 0.0;
}

std::string PotentialSpec::label() const {
    switch (kind) {
        case PotentialKind::Zero:
            return "zero";
        case PotentialKind::Constant:
            return "constant " + format_hex(constant);
        case PotentialKind::CutoffQuartic:
            return "cutoff_quartic " + std::to_string(cutoff_n);
        case PotentialKind::Quartic:
            return "quartic";
        case PotentialKind::TransformedQuartic:
            return std::string("transformed_quartic ") + (drift ? "1" : "0");
    }
    return "zero";
}

double heat_kernel(double r, double x, double s, double y) {
    if (!(r > s)) throw std::invalid_argument("heat_kernel: requires r > s");
    const double dt = r - s;
    const double d = x - y;
    return std::exp(-0.5 * d * d / dt) / std::sqrt(kTwoPi * dt);
}

Grid1D default_kernel_grid(const PotentialSpec& pot, double s, double y, double r_max, double dx) {
    const double hw = auto_halfwidth(pot, r_max - s, y);
    const int half_cells = static_cast<int>(std::ceil(hw / dx));
    const double lim = dx * static_cast<double>(half_cells);
    return Grid1D(-lim, lim, 2 * half_cells + 1);
}

int KernelField::nearest_time_index(double r) const {
    if (r_nodes.empty()) throw std::runtime_error("KernelField: empty");
    const auto it = std::lower_bound(r_nodes.begin(), r_nodes.end(), r);
    if (it == r_nodes.begin()) return 0;
    if (it == r_nodes.end()) return static_cast<int>(r_nodes.size()) - 1;
    const size_t hi = static_cast<size_t>(it - r_nodes.begin());
    return (r - r_nodes[hi - 1] <= r_nodes[hi] - r) ? static_cast<int>(hi - 1) : static_cast<int>(hi);
}

const std::vector<double>& KernelField::slice_at(double r) const {
    return values[static_cast<size_t>(nearest_time_index(r))];
}

double KernelField::value_at(double r, double x) const {
    if (r_nodes.empty()) throw std::runtime_error("KernelField: empty");
    if (r <= r_nodes.front()) return x_grid.interpolate(values.front(), x);
    if (r >= r_nodes.back()) return x_grid.interpolate(values.back(), x);
    const auto it = std::upper_bound(r_nodes.begin(), r_nodes.end(), r);
    const size_t hi = static_cast<size_t>(it - r_nodes.begin());
    const size_t lo = hi - 1;
    const double t = (r - r_nodes[lo]) / (r_nodes[hi] - r_nodes[lo]);
    return (1.0 - t) * x_grid.interpolate(values[lo], x) + t * x_grid.interpolate(values[hi], x);
}

double KernelField::mass_at(double r) const { return trapezoid(slice_at(r), x_grid.spacing()); }

namespace {

struct MarchPlan {
    std::vector<double> anchors;  // strictly increasing, first = start, last = end
};

MarchPlan plan_march(double start, double end, const std::vector<double>& required) {
    MarchPlan plan;
    plan.anchors.push_back(start);
    std::vector<double> req = required;
    std::sort(req.begin(), req.end());
    for (double t : req) {
        if (t > start + 1e-14 && t < end - 1e-14) {
            if (std::abs(t - plan.anchors.back()) > 1e-12) plan.anchors.push_back(t);
        }
    }
    plan.anchors.push_back(end);
    return plan;
}

// Steps ramp up from ~eps/8 right after the delta bootstrap (where the
// solution's own timescale is the elapsed time) to the uniform dt, and may
// keep growing like 0.05 * elapsed up to dt_far when far-time grading is on.
double ramp_step(double elapsed, double eps, double dt, double dt_far = 0.0) {
    double cap = dt;
    if (dt_far > 0.0) cap = std::min(dt_far, std::max(dt, 0.05 * elapsed));
    return std::min(cap, std::max(0.125 * eps, 0.1 * elapsed));
}

// Midpoint potential factor for the bootstrap window [s, s+eps].
double bootstrap_factor(const PotentialSpec& pot, double s, double eps, double x, double y) {
    return std::exp(eps * pot.value(s + 0.5 * eps, 0.5 * (x + y)));
}

KernelField run_forward(const PotentialSpec& pot, double s, double y, double r_max, const Grid1D& x_grid,
                        const KernelSolveParams& params_in, const std::vector<double>& required_times,
                        const SliceObserver& observer, double cutoff_below) {
    KernelSolveParams params = params_in;
    if (params.halfwidth <= 0.0) params.halfwidth = auto_halfwidth(pot, r_max - s, y);
    const double eps = params.bootstrap_eps > 0.0 ? params.bootstrap_eps : 5.0 * params.dx * params.dx;

    const double margin = 0.05 * (x_grid.hi - x_grid.lo);
    if (y < x_grid.lo + margin || y > x_grid.hi - margin)
        throw std::invalid_argument("solve_kernel: source position lacks margin inside the grid");
    if (!(r_max > s + eps)) throw std::invalid_argument("solve_kernel: r_max too close to source time");

    KernelField field;
    field.potential = pot;
    field.source_s = s;
    field.source_y = y;
    field.x_grid = x_grid;
    field.params = params;

    const int n = x_grid.n;
    const double h = x_grid.spacing();
    std::vector<double> interior(static_cast<size_t>(n - 2));
    const double r0 = s + eps;
    for (int i = 1; i < n - 1; ++i) {
        const double xi = x_grid.node(i);
        interior[static_cast<size_t>(i - 1)] = heat_kernel(r0, xi, s, y) * bootstrap_factor(pot, s, eps, xi, y);
    }

    auto full_slice = [&](const std::vector<double>& inter) {
        std::vector<double> v(static_cast<size_t>(n), 0.0);
        std::copy(inter.begin(), inter.end(), v.begin() + 1);
        return v;
    };
    auto store = [&](double r, const std::vector<double>& inter) {
        field.r_nodes.push_back(r);
        field.values.push_back(full_slice(inter));
    };

    store(r0, interior);
    if (observer) observer(r0, field.values.back());

    CnStepper stepper(pot, x_grid, cutoff_below);
    const MarchPlan plan = plan_march(r0, r_max, required_times);

    long step_count = 0;
    for (size_t seg = 0; seg + 1 < plan.anchors.size(); ++seg) {
        const double a = plan.anchors[seg];
        const double b = plan.anchors[seg + 1];
        double r = a;
        while (r < b - 1e-14) {
            const double k = std::min(b - r, ramp_step(r - s, eps, params.dt, params.dt_far));
            stepper.step(interior, r, k);
            r = (b - r - k < 1e-14) ? b : r + k;
            ++step_count;

            const double edge = (std::abs(interior.front()) + std::abs(interior.back())) * h;
            const double mass = trapezoid(interior, h);
            if (edge > params.boundary_mass_tol * std::max(1.0, std::abs(mass))) {
                throw std::runtime_error(
                    "solve_kernel: boundary mass " + format_g17(edge) + " exceeds tolerance at r = " +
                    format_g17(r) + " (halfwidth " + format_g17(params.halfwidth) + " too small)");
            }
            const bool at_anchor = (r >= b - 1e-14);
            if (at_anchor || step_count % params.store_every == 0) {
                if (field.r_nodes.back() < r - 1e-14) store(r, interior);
            }
            if (observer) observer(r, full_slice(interior));
        }
    }
    return field;
}

}  // namespace

KernelField solve_kernel(const PotentialSpec& pot, double s, double y, double r_max, const Grid1D& x_grid,
                         const KernelSolveParams& params, const std::vector<double>& required_times,
                         const SliceObserver& observer) {
    if (pot.kind == PotentialKind::Quartic && s <= 0.0 && y != 0.0)
        throw std::invalid_argument("solve_kernel: quartic source at s=0 requires y=0");
    if (pot.kind == PotentialKind::TransformedQuartic && pot.drift && s <= 0.0)
        throw std::invalid_argument("solve_kernel: drift term requires source time s > 0");
    double cutoff_below = 0.0;
    if (pot.kind == PotentialKind::Quartic && s <= 0.0) {
        const double eps = params.bootstrap_eps > 0.0 ? params.bootstrap_eps : 5.0 * params.dx * params.dx;
        cutoff_below = eps + params.dt;
    }
    return run_forward(pot, s, y, r_max, x_grid, params, required_times, observer, cutoff_below);
}

KernelField make_heat_kernel_field(double s, double y, double r_max, const Grid1D& x_grid,
                                   const KernelSolveParams& params_in) {
    KernelSolveParams params = params_in;
    if (params.halfwidth <= 0.0) params.halfwidth = auto_halfwidth(PotentialSpec::zero(), r_max - s, y);
    const double eps = params.bootstrap_eps > 0.0 ? params.bootstrap_eps : 5.0 * params.dx * params.dx;

    KernelField field;
    field.potential = PotentialSpec::zero();
    field.source_s = s;
    field.source_y = y;
    field.x_grid = x_grid;
    field.params = params;
    field.scheme = "exact_heat_kernel";

    const long steps = std::max(1L, std::lround(std::ceil((r_max - s - eps) / params.dt)));
    const double k = (r_max - s - eps) / static_cast<double>(steps);
    for (long q = 0; q <= steps; ++q) {
        if (q != 0 && q != steps && q % params.store_every != 0) continue;
        const double r = (q == steps) ? r_max : s + eps + k * static_cast<double>(q);
        std::vector<double> v(static_cast<size_t>(x_grid.n), 0.0);
        for (int i = 1; i < x_grid.n - 1; ++i) v[static_cast<size_t>(i)] = heat_kernel(r, x_grid.node(i), s, y);
        field.r_nodes.push_back(r);
        field.values.push_back(std::move(v));
    }
    return field;
}

KernelField evolve_slice(const PotentialSpec& pot, const std::vector<double>& initial, double r_start,
                         double r_max, const Grid1D& x_grid, const KernelSolveParams& params_in,
                         const std::vector<double>& required_times, const SliceObserver& observer) {
    if (static_cast<int>(initial.size()) != x_grid.n) throw std::invalid_argument("evolve_slice: width mismatch");
    if (!(r_max > r_start)) throw std::invalid_argument("evolve_slice: need r_max > r_start");
    KernelSolveParams params = params_in;
    if (params.halfwidth <= 0.0) params.halfwidth = 0.5 * (x_grid.hi - x_grid.lo);

    KernelField field;
    field.potential = pot;
    field.source_s = r_start;
    field.source_y = 0.0;
    field.x_grid = x_grid;
    field.params = params;
    field.scheme = "crank_nicolson_slice";

    const int n = x_grid.n;
    const double h = x_grid.spacing();
    std::vector<double> interior(initial.begin() + 1, initial.end() - 1);

    auto full_slice = [&](const std::vector<double>& inter) {
        std::vector<double> v(static_cast<size_t>(n), 0.0);
        std::copy(inter.begin(), inter.end(), v.begin() + 1);
        return v;
    };
    field.r_nodes.push_back(r_start);
    field.values.push_back(full_slice(interior));
    if (observer) observer(r_start, field.values.back());

    CnStepper stepper(pot, x_grid, 0.0);
    const MarchPlan plan = plan_march(r_start, r_max, required_times);
    long step_count = 0;
    for (size_t seg = 0; seg + 1 < plan.anchors.size(); ++seg) {
        const double a = plan.anchors[seg];
        const double b = plan.anchors[seg + 1];
        double r = a;
        while (r < b - 1e-14) {
            const double k = std::min(b - r, params.dt);
            stepper.step(interior, r, k);
            r = (b - r - k < 1e-14) ? b : r + k;
            ++step_count;
            const double edge = (std::abs(interior.front()) + std::abs(interior.back())) * h;
            const double mass = trapezoid(interior, h);
            if (edge > params.boundary_mass_tol * std::max(1.0, std::abs(mass)))
                throw std::runtime_error("evolve_slice: boundary mass exceeds tolerance at r = " + format_g17(r));
            const bool at_anchor = (r >= b - 1e-14);
            if (at_anchor || step_count % params.store_every == 0) {
                if (field.r_nodes.back() < r - 1e-14) {
                    field.r_nodes.push_back(r);
                    field.values.push_back(full_slice(interior));
                }
            }
            if (observer) observer(r, full_slice(interior));
        }
    }
    return field;
}

KernelField solve_kernel_backward(const PotentialSpec& pot, double r_top, double x_top, double s_min,
                                  const Grid1D& x_grid, const KernelSolveParams& params,
                                  const std::vector<double>& required_times) {
    if (pot.has_drift()) throw std::invalid_argument("solve_kernel_backward: drift potentials unsupported");
    if (!(r_top > s_min)) throw std::invalid_argument("solve_kernel_backward: need r_top > s_min");

    // psi(s,y) = phi(r_top, x_top; s, y) solves the adjoint equation; in
    // sigma = r_top - s it is a forward march with the time-reflected potential.
    const double eps = params.bootstrap_eps > 0.0 ? params.bootstrap_eps : 5.0 * params.dx * params.dx;
    KernelSolveParams p = params;
    if (p.halfwidth <= 0.0) p.halfwidth = auto_halfwidth(pot, r_top - s_min, x_top);
    const double margin = 0.05 * (x_grid.hi - x_grid.lo);
    if (x_top < x_grid.lo + margin || x_top > x_grid.hi - margin)
        throw std::invalid_argument("solve_kernel_backward: terminal position lacks margin inside the grid");

    KernelField field;
    field.potential = pot;
    field.source_s = r_top;  // backward fields record the pinned endpoint here
    field.source_y = x_top;
    field.x_grid = x_grid;
    field.params = p;
    field.scheme = "crank_nicolson_adjoint";

    const int n = x_grid.n;
    const double h = x_grid.spacing();
    std::vector<double> interior(static_cast<size_t>(n - 2));
    for (int i = 1; i < n - 1; ++i) {
        const double yi = x_grid.node(i);
        interior[static_cast<size_t>(i - 1)] =
            heat_kernel(r_top, x_top, r_top - eps, yi) * bootstrap_factor(pot, r_top - eps, eps, x_top, yi);
    }

    std::vector<double> sigma_required;
    for (double t : required_times) sigma_required.push_back(r_top - t);
    const MarchPlan plan = plan_march(eps, r_top - s_min, sigma_required);

    std::vector<double> s_nodes;
    std::vector<std::vector<double>> slices;
    auto store = [&](double sigma, const std::vector<double>& inter) {
        std::vector<double> v(static_cast<size_t>(n), 0.0);
        std::copy(inter.begin(), inter.end(), v.begin() + 1);
        s_nodes.push_back(r_top - sigma);
        slices.push_back(std::move(v));
    };
    store(eps, interior);

    // Adjoint march: potential evaluated at time r_top - sigma.
    TridiagWorkspace tw;
    std::vector<double> lower(static_cast<size_t>(n - 2)), diag(static_cast<size_t>(n - 2)),
        upper(static_cast<size_t>(n - 2)), rhs(static_cast<size_t>(n - 2)), sol;
    long step_count = 0;
    for (size_t seg = 0; seg + 1 < plan.anchors.size(); ++seg) {
        const double a = plan.anchors[seg];
        const double b = plan.anchors[seg + 1];
        double sigma = a;
        while (sigma < b - 1e-14) {
            const double k = std::min(b - sigma, ramp_step(sigma, eps, p.dt, p.dt_far));
            const double sm = r_top - (sigma + 0.5 * k);
            PotentialSpec eff = pot;
            if (pot.kind == PotentialKind::Quartic && sm < eps + p.dt)
                eff = PotentialSpec::cutoff_quartic(std::max(1, static_cast<int>(std::ceil(1.0 / eps))));
            const double mu = 0.5 * k / (h * h);
            const size_t m = interior.size();
            for (size_t i = 0; i < m; ++i) {
                const double xi = x_grid.node(static_cast<int>(i) + 1);
                const double v = eff.value(sm < 1e-300 ? 1e-300 : sm, xi);
                lower[i] = -0.5 * mu;
                diag[i] = 1.0 + mu - 0.5 * k * v;
                upper[i] = -0.5 * mu;
                const double left = (i > 0) ? interior[i - 1] : 0.0;
                const double right = (i + 1 < m) ? interior[i + 1] : 0.0;
                rhs[i] = interior[i] + 0.5 * mu * (left - 2.0 * interior[i] + right) + 0.5 * k * v * interior[i];
            }
            tw.solve(lower, diag, upper, rhs, sol);
            interior.swap(sol);
            sigma = (b - sigma - k < 1e-14) ? b : sigma + k;
            ++step_count;

            const double edge = (std::abs(interior.front()) + std::abs(interior.back())) * h;
            const double mass = trapezoid(interior, h);
            if (edge > p.boundary_mass_tol * std::max(1.0, std::abs(mass)))
                throw std::runtime_error("solve_kernel_backward: boundary mass exceeds tolerance at s = " +
                                         format_g17(r_top - sigma));
            const bool at_anchor = (sigma >= b - 1e-14);
            if (at_anchor || step_count % p.store_every == 0) {
                if (s_nodes.back() > r_top - sigma + 1e-14) store(sigma, interior);
            }
        }
    }

    // Reverse into ascending s.
    field.r_nodes.assign(s_nodes.rbegin(), s_nodes.rend());
    field.values.assign(std::make_move_iterator(slices.rbegin()), std::make_move_iterator(slices.rend()));
    return field;
}

DuhamelResult duhamel_residual(const KernelField& field, const std::vector<std::pair<double, double>>& probes) {
    DuhamelResult result;
    const double h = field.x_grid.spacing();
    const int n = field.x_grid.n;
    const double s = field.source_s;
    const double y = field.source_y;

    for (const auto& [pr, px] : probes) {
        const int it = field.nearest_time_index(pr);
        const double r = field.r_nodes[static_cast<size_t>(it)];
        const double x = field.x_grid.node(field.x_grid.nearest_index(px));

        // Outer trapezoid over stored times up to r; the rho = r endpoint uses
        // the delta-limit value V(r,x) phi(r,x).
        std::vector<double> rho_nodes;
        std::vector<double> outer_vals;
        for (int j = 0; j <= it; ++j) {
            const double rho = field.r_nodes[static_cast<size_t>(j)];
            const auto& slice = field.values[static_cast<size_t>(j)];
            double inner;
            if (j == it) {
                inner = field.potential.value(rho, x) * field.x_grid.interpolate(slice, x);
            } else {
                double sum = 0.0;
                for (int i = 1; i < n - 1; ++i) {
                    const double w = field.x_grid.node(i);
                    const double g = field.potential.value(rho, w) * slice[static_cast<size_t>(i)];
                    if (g != 0.0) sum += heat_kernel(r, x, rho, w) * g;
                }
                inner = sum * h;
            }
            rho_nodes.push_back(rho);
            outer_vals.push_back(inner);
        }
        double term = 0.0;
        for (size_t j = 0; j + 1 < rho_nodes.size(); ++j)
            term += 0.5 * (outer_vals[j] + outer_vals[j + 1]) * (rho_nodes[j + 1] - rho_nodes[j]);

        const double lhs = field.x_grid.interpolate(field.values[static_cast<size_t>(it)], x);
        const double resid = std::abs(lhs - heat_kernel(r, x, s, y) - term);
        result.per_probe.push_back(resid);
        result.max_residual = std::max(result.max_residual, resid);
    }
    return result;
}

GaussBoundReport gauss_bound_check(const KernelField& field, double tol) {
    GaussBoundReport rep;
    rep.min_value = std::numeric_limits<double>::infinity();
    rep.max_excess = -std::numeric_limits<double>::infinity();
    const double eps = field.params.bootstrap_eps > 0.0 ? field.params.bootstrap_eps
                                                        : 5.0 * field.params.dx * field.params.dx;
    const double r_min = field.source_s + 20.0 * eps;
    for (size_t j = 0; j < field.r_nodes.size(); ++j) {
        const double r = field.r_nodes[j];
        if (r < r_min) {
            for (int i = 0; i < field.x_grid.n; ++i)
                rep.min_value = std::min(rep.min_value, field.values[j][static_cast<size_t>(i)]);
            continue;
        }
        for (int i = 0; i < field.x_grid.n; ++i) {
            const double v = field.values[j][static_cast<size_t>(i)];
            const double phi0 = heat_kernel(r, field.x_grid.node(i), field.source_s, field.source_y);
            const double excess = (v - phi0) / std::max(1.0, phi0);
            if (excess > rep.max_excess) {
                rep.max_excess = excess;
                rep.worst_r = r;
                rep.worst_x = field.x_grid.node(i);
            }
            rep.min_value = std::min(rep.min_value, v);
        }
    }
    rep.ok = rep.max_excess <= tol && rep.min_value >= -tol;
    return rep;
}

MonotonicityReport cutoff_monotonicity_check(double s, double y, double r_max,
                                             const std::vector<std::pair<double, double>>& probes,
                                             const std::vector<int>& n_list, const Grid1D& x_grid,
                                             const KernelSolveParams& params, double tol) {
    for (size_t i = 1; i < n_list.size(); ++i)
        if (n_list[i] <= n_list[i - 1]) throw std::invalid_argument("cutoff_monotonicity_check: n_list not increasing");

    std::vector<double> req;
    for (const auto& p : probes) req.push_back(p.first);

    std::vector<KernelField> fields;
    fields.reserve(n_list.size());
    for (int nn : n_list) fields.push_back(solve_kernel(PotentialSpec::cutoff_quartic(nn), s, y, r_max, x_grid, params, req));

    MonotonicityReport report;
    report.min_value = std::numeric_limits<double>::infinity();
    for (const auto& [pr, px] : probes) {
        double prev = heat_kernel(pr, px, s, y);  // phi0 tops the chain
        for (const auto& f : fields) {
            const double v = f.value_at(pr, px);
            const double gap = v - prev;  // violation when positive
            if (gap > report.max_violation) {
                report.max_violation = gap;
                report.worst_probe_r = pr;
                report.worst_probe_x = px;
            }
            report.min_value = std::min(report.min_value, v);
            prev = v;
        }
    }
    report.ok = report.max_violation <= tol && report.min_value >= -tol;
    return report;
}

double chapman_kolmogorov_check(const PotentialSpec& pot, double s, double mid, double r, double y,
                                const std::vector<double>& probe_x, const Grid1D& x_grid,
                                const KernelSolveParams& params) {
    if (!(s < mid && mid < r)) throw std::invalid_argument("chapman_kolmogorov_check: need s < mid < r");
    const KernelField fwd = solve_kernel(pot, s, y, r, x_grid, params, {mid});
    const auto& phi_mid = fwd.slice_at(mid);
    const double h = x_grid.spacing();

    double max_err = 0.0;
    for (double px : probe_x) {
        const double x = x_grid.node(x_grid.nearest_index(px));
        const KernelField back = solve_kernel_backward(pot, r, x, mid, x_grid, params, {mid});
        const auto& psi_mid = back.values.front();  // earliest s is mid
        std::vector<double> prod(phi_mid.size());
        for (size_t i = 0; i < prod.size(); ++i) prod[i] = psi_mid[i] * phi_mid[i];
        const double lhs = trapezoid(prod, h);
        const double rhs = fwd.value_at(r, x);
        max_err = std::max(max_err, std::abs(lhs - rhs));
    }
    return max_err;
}

double gaussian_chapman_kolmogorov_quadrature(double s, double mid, double r, double x, double y, int n_w,
                                              double halfwidth) {
    double sum = 0.0;
    const double h = 2.0 * halfwidth / static_cast<double>(n_w - 1);
    for (int i = 0; i < n_w; ++i) {
        const double w = -halfwidth + h * static_cast<double>(i);
        const double f = heat_kernel(r, x, mid, w) * heat_kernel(mid, w, s, y);
        sum += (i == 0 || i == n_w - 1) ? 0.5 * f : f;
    }
    return sum * h;
}

namespace {

double beta_function(double a, double b) { return std::exp(std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b)); }

// Inner Gaussian-product integral by trapezoid around the precision-weighted center.
double beta_inner(double lambda, double s, double r, double x, double y, double rho, int n_w) {
    const double t1 = r - rho, t2 = rho - s;
    const double center = (x * t2 + y * t1) / (r - s);
    const double sig = std::sqrt(t1 * t2 / (lambda * (r - s)));
    const double a = center - 12.0 * sig, b = center + 12.0 * sig;
    const double h = (b - a) / static_cast<double>(n_w - 1);
    double sum = 0.0;
    for (int i = 0; i < n_w; ++i) {
        const double w = a + h * static_cast<double>(i);
        const double f =
            std::exp(-0.5 * lambda * (x - w) * (x - w) / t1) * std::exp(-0.5 * lambda * (w - y) * (w - y) / t2);
        sum += (i == 0 || i == n_w - 1) ? 0.5 * f : f;
    }
    return sum * h;
}

// One half of the outer integral with rho = edge -+ u^p removing the endpoint singularity.
double beta_half(double alpha, double beta, double lambda, double s, double r, double x, double y, bool left,
                 int n_u, int n_w) {
    const double mid = 0.5 * (s + r);
    const double expo = left ? beta : alpha;
    int p = 2;
    while (static_cast<double>(p) * (1.5 - expo) < 2.0) p += 2;
    const double span = mid - s;  // = r - mid
    const double umax = std::pow(span, 1.0 / static_cast<double>(p));
    const double du = umax / static_cast<double>(n_u - 1);
    double sum = 0.0;
    for (int i = 0; i < n_u; ++i) {
        const double u = du * static_cast<double>(i);
        double f = 0.0;
        if (u > 0.0) {
            const double up = std::pow(u, static_cast<double>(p));
            const double rho = left ? s + up : r - up;
            f = static_cast<double>(p) * std::pow(u, static_cast<double>(p - 1)) *
                std::pow(r - rho, -alpha) * std::pow(rho - s, -beta) * beta_inner(lambda, s, r, x, y, rho, n_w);
        }
        sum += (i == 0 || i == n_u - 1) ? 0.5 * f : f;
    }
    return sum * du;
}

}  // namespace

BetaIdentityResult beta_identity_check(double alpha, double beta, double lambda, double s, double r, double x,
                                       double y, double tol) {
    if (alpha >= 1.5 || beta >= 1.5) throw std::invalid_argument("beta_identity_check: need alpha, beta < 3/2");
    if (!(r > s) || !(lambda > 0.0)) throw std::invalid_argument("beta_identity_check: need r > s, lambda > 0");

    BetaIdentityResult res;
    res.closed_form = std::sqrt(kTwoPi / lambda) * beta_function(1.5 - alpha, 1.5 - beta) *
                      std::pow(r - s, 1.5 - alpha - beta) * std::exp(-0.5 * lambda * (x - y) * (x - y) / (r - s));

    int n_u = 129, n_w = 129;
    double prev = 0.0;
    for (int round = 0; round < 7; ++round) {
        const double q = beta_half(alpha, beta, lambda, s, r, x, y, true, n_u, n_w) +
                         beta_half(alpha, beta, lambda, s, r, x, y, false, n_u, n_w);
        if (round > 0 && std::abs(q - prev) < 0.25 * tol) {
            res.quadrature = q;
            break;
        }
        prev = q;
        res.quadrature = q;
        n_u = 2 * n_u - 1;
        n_w = 2 * n_w - 1;
    }
    res.abs_error = std::abs(res.quadrature - res.closed_form);
    return res;
}

TransitionRow transition_row(const KernelField& field, double r_from, double x_from, double r_to) {
    if (!(r_from < r_to)) throw std::invalid_argument("transition_row: need r_from < r_to");
    if (!field.x_grid.contains(x_from)) throw std::invalid_argument("transition_row: x_from outside grid");

    TransitionRow row;
    const bool source_match =
        std::abs(field.source_s - r_from) < 1e-12 && std::abs(field.source_y - x_from) < 1e-12;
    if (source_match && r_to <= field.r_nodes.back() + 1e-12) {
        row.values = field.slice_at(r_to);
    } else {
        const KernelField fresh =
            solve_kernel(field.potential, r_from, x_from, r_to, field.x_grid, field.params, {r_to});
        row.values = fresh.values.back();
    }
    row.mass = trapezoid(row.values, field.x_grid.spacing());
    return row;
}

std::vector<std::vector<double>> build_transition_matrix(const PotentialSpec& pot, double r_from, double r_to,
                                                         const Grid1D& grid, const KernelSolveParams& params) {
    if (pot.kind == PotentialKind::Quartic && r_from <= 0.0)
        throw std::invalid_argument("build_transition_matrix: quartic interval must start at r > 0");
    if (pot.has_drift()) throw std::invalid_argument("build_transition_matrix: drift unsupported");

    const double eps = params.bootstrap_eps > 0.0 ? params.bootstrap_eps : 5.0 * params.dx * params.dx;
    if (!(r_to > r_from + eps)) throw std::invalid_argument("build_transition_matrix: interval shorter than bootstrap");
    const int n = grid.n;
    const size_t m = static_cast<size_t>(n - 2);

    std::vector<std::vector<double>> rows(static_cast<size_t>(n), std::vector<double>(m, 0.0));
    for (int a = 1; a < n - 1; ++a) {
        auto& row = rows[static_cast<size_t>(a)];
        const double xa = grid.node(a);
        for (int i = 1; i < n - 1; ++i) {
            const double xi = grid.node(i);
            row[static_cast<size_t>(i - 1)] =
                heat_kernel(r_from + eps, xi, r_from, xa) * bootstrap_factor(pot, r_from, eps, xi, xa);
        }
    }

    CnStepper stepper(pot, grid, 0.0);
    const double b = r_to;
    double r = r_from + eps;
    while (r < b - 1e-14) {
        const double k = std::min(b - r, ramp_step(r - r_from, eps, params.dt));
        stepper.step_matrix(rows, r, k);
        r = (b - r - k < 1e-14) ? b : r + k;
    }

    std::vector<std::vector<double>> out(static_cast<size_t>(n), std::vector<double>(static_cast<size_t>(n), 0.0));
    for (int a = 0; a < n; ++a) {
        if (a == 0 || a == n - 1) continue;  // bootstrap Gaussians at the walls are clipped to zero rows
        for (int b = 1; b < n - 1; ++b) out[static_cast<size_t>(a)][static_cast<size_t>(b)] = rows[static_cast<size_t>(a)][static_cast<size_t>(b - 1)];
    }
    return out;
}

std::string serialize_kernel_field(const KernelField& field) {
    std::string out = "gibbsflow.kernel.v1\n";
    out += "potential " + field.potential.label() + "\n";
    out += "source " + format_hex(field.source_s) + " " + format_hex(field.source_y) + "\n";
    out += "grid " + format_hex(field.x_grid.lo) + " " + format_hex(field.x_grid.hi) + " " +
           std::to_string(field.x_grid.n) + "\n";
    out += "scheme " + field.scheme + "\n";
    out += "params " + format_hex(field.params.dx) + " " + format_hex(field.params.dt) + " " +
           format_hex(field.params.halfwidth) + " " + format_hex(field.params.bootstrap_eps) + " " +
           std::to_string(field.params.store_every) + " " + format_hex(field.params.boundary_mass_tol) + "\n";
    out += "tolerance " + format_hex(field.tolerance()) + "\n";
    out += "times " + std::to_string(field.r_nodes.size()) + "\n";
    for (size_t j = 0; j < field.r_nodes.size(); ++j) {
        out += "t " + format_hex(field.r_nodes[j]) + "\n";
        std::string line = "row";
        for (double v : field.values[j]) {
            line += ' ';
            line += format_hex(v);
        }
        out += line + "\n";
    }
    out += "end\n";
    return out;
}

KernelField parse_kernel_field(const std::string& text) {
    LineReader reader(text);
    std::vector<std::string> tok;
    if (!reader.next(tok) || tok[0] != "gibbsflow.kernel.v1") reader.fail("bad kernel artifact header");

    KernelField f;
    size_t expected_times = 0;
    while (reader.next(tok)) {
        const std::string& key = tok[0];
        if (key == "potential") {
            if (tok.size() < 2) reader.fail("potential needs a kind");
            const std::string& kind = tok[1];
            if (kind == "zero")
                f.potential = PotentialSpec::zero();
            else if (kind == "constant")
                f.potential = PotentialSpec::constant_pot(parse_double(tok.at(2)));
            else if (kind == "cutoff_quartic")
                f.potential = PotentialSpec::cutoff_quartic(std::stoi(tok.at(2)));
            else if (kind == "quartic")
                f.potential = PotentialSpec::quartic();
            else if (kind == "transformed_quartic") {
                f.potential = tok.at(2) == "1" ? PotentialSpec::transformed_quartic() : PotentialSpec::static_quartic();
            } else
                reader.fail("unknown potential kind: " + kind);
        } else if (key == "source") {
            f.source_s = parse_double(tok.at(1));
            f.source_y = parse_double(tok.at(2));
        } else if (key == "grid") {
            f.x_grid = Grid1D(parse_double(tok.at(1)), parse_double(tok.at(2)), std::stoi(tok.at(3)));
        } else if (key == "scheme") {
            f.scheme = tok.at(1);
        } else if (key == "params") {
            f.params.dx = parse_double(tok.at(1));
            f.params.dt = parse_double(tok.at(2));
            f.params.halfwidth = parse_double(tok.at(3));
            f.params.bootstrap_eps = parse_double(tok.at(4));
            f.params.store_every = std::stoi(tok.at(5));
            f.params.boundary_mass_tol = parse_double(tok.at(6));
        } else if (key == "tolerance") {
            // derived; ignored on load
        } else if (key == "times") {
            expected_times = static_cast<size_t>(std::stoul(tok.at(1)));
        } else if (key == "t") {
            f.r_nodes.push_back(parse_double(tok.at(1)));
        } else if (key == "row") {
            std::vector<double> row;
            row.reserve(tok.size() - 1);
            for (size_t i = 1; i < tok.size(); ++i) row.push_back(parse_double(tok[i]));
            if (static_cast<int>(row.size()) != f.x_grid.n) reader.fail("row width mismatch");
            f.values.push_back(std::move(row));
        } else if (key == "end") {
            break;
        } else {
            reader.fail("unknown key: " + key);
        }
    }
    if (f.r_nodes.size() != expected_times || f.values.size() != expected_times)
        throw std::runtime_error("kernel artifact: time count mismatch");
    for (size_t j = 1; j < f.r_nodes.size(); ++j)
        if (!(f.r_nodes[j] > f.r_nodes[j - 1])) throw std::runtime_error("kernel artifact: times not increasing");
    for (const auto& row : f.values)
        for (double v : row)
            if (!std::isfinite(v)) throw std::runtime_error("kernel artifact: non-finite value");
    return f;
}

}  // namespace gibbsflow
