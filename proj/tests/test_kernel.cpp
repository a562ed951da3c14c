#include <cmath>

#include "doctest.h"
#include "gibbsflow/kernel.hpp"

using namespace gibbsflow;

namespace {
KernelSolveParams coarse_params() {
    KernelSolveParams p;
    p.dx = 1.0 / 64.0;
    p.dt = 1.0 / 512.0;
    p.store_every = 8;
    return p;
}
KernelSolveParams fine_params() {
    KernelSolveParams p;
    p.dx = 1.0 / 256.0;
    p.dt = 1.0 / 1024.0;
    p.store_every = 16;
    return p;
}
}  // namespace

TEST_CASE("heat kernel values") {
    CHECK(heat_kernel(1.0, 0.0, 0.0, 0.0) == doctest::Approx(0.3989422804014327).epsilon(1e-12));
    CHECK(heat_kernel(2.0, 0.0, 1.0, 0.0) == doctest::Approx(0.3989422804014327).epsilon(1e-12));
    CHECK_THROWS_AS(heat_kernel(1.0, 0.0, 1.0, 0.0), std::invalid_argument);

    // Delta normalization: mass 1 for any small elapsed time.
    for (double eps : {1e-2, 1e-3}) {
        double mass = 0.0;
        const double h = 1e-3;
        for (double x = -1.0; x <= 1.0; x += h) mass += heat_kernel(1.0 + eps, x, 1.0, 0.0) * h;
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("solve_kernel zero potential reproduces the heat kernel") {
    const auto p = fine_params();
    const Grid1D grid = default_kernel_grid(PotentialSpec::zero(), 0.0, 0.0, 1.0, p.dx);
    const KernelField f = solve_kernel(PotentialSpec::zero(), 0.0, 0.0, 1.0, grid, p);

    double sup = 0.0;
    const auto& last = f.values.back();
    for (int i = 0; i < grid.n; i += 3) {
        const double x = grid.node(i);
        sup = std::max(sup, std::abs(last[static_cast<size_t>(i)] - heat_kernel(1.0, x, 0.0, 0.0)));
    }
    CHECK(sup < 1e-6);
    CHECK(f.mass_at(1.0) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("solve_kernel constant potential factorizes") {
    const auto p = fine_params();
    const auto pot = PotentialSpec::constant_pot(-1.0);
    const Grid1D grid = default_kernel_grid(pot, 0.0, 0.0, 2.0, p.dx);
    const KernelField f = solve_kernel(pot, 0.0, 0.0, 2.0, grid, p);

    const double scale = std::exp(-2.0);
    double sup = 0.0;
    const auto& last = f.values.back();
    for (int i = 0; i < grid.n; i += 3) {
        const double x = grid.node(i);
        sup = std::max(sup, std::abs(last[static_cast<size_t>(i)] - scale * heat_kernel(2.0, x, 0.0, 0.0)));
    }
    CHECK(sup < 1e-6);
}

TEST_CASE("solve_kernel quartic mass strictly inside (0,1)") {
    const auto p = coarse_params();
    const Grid1D grid = default_kernel_grid(PotentialSpec::quartic(), 0.0, 0.0, 1.0, p.dx);
    const KernelField f = solve_kernel(PotentialSpec::quartic(), 0.0, 0.0, 1.0, grid, p);
    const double mass = f.mass_at(1.0);

    // Reference at 4x resolution.
    const auto pf = p.refined(4.0);
    const Grid1D gridf = default_kernel_grid(PotentialSpec::quartic(), 0.0, 0.0, 1.0, pf.dx);
    const KernelField ff = solve_kernel(PotentialSpec::quartic(), 0.0, 0.0, 1.0, gridf, pf);
    const double mass_ref = ff.mass_at(1.0);

    CHECK(mass > 0.0);
    CHECK(mass < 1.0);
    CHECK(mass_ref > 0.0);
    CHECK(mass_ref < 1.0);
    CHECK(std::abs(mass - mass_ref) < 5.0 * f.tolerance());
}

TEST_CASE("solve_kernel rejects quartic source at s=0 off origin") {
    const auto p = coarse_params();
    const Grid1D grid = default_kernel_grid(PotentialSpec::quartic(), 0.0, 0.5, 1.0, p.dx);
    CHECK_THROWS_AS(solve_kernel(PotentialSpec::quartic(), 0.0, 0.5, 1.0, grid, p), std::invalid_argument);
}

TEST_CASE("solve_kernel aborts when mass reaches the walls") {
    auto p = coarse_params();
    const Grid1D tiny(-2.0, 2.0, 257);
    CHECK_THROWS_AS(solve_kernel(PotentialSpec::zero(), 0.0, 0.0, 2.0, tiny, p), std::runtime_error);
}

TEST_CASE("gauss bound and positivity on the quartic field") {
    const auto p = coarse_params();
    const Grid1D grid = default_kernel_grid(PotentialSpec::quartic(), 0.0, 0.0, 1.0, p.dx);
    const KernelField f = solve_kernel(PotentialSpec::quartic(), 0.0, 0.0, 1.0, grid, p);
    const double tol = f.tolerance();

    const auto rep = gauss_bound_check(f, tol);
    CHECK(rep.ok);
    CHECK(rep.min_value >= -tol);
    CHECK(rep.max_excess <= tol);
    for (size_t j = 0; j < f.r_nodes.size(); ++j) CHECK(f.mass_at(f.r_nodes[j]) <= 1.0 + tol);
}

TEST_CASE("duhamel residual: exact heat field gives quadrature-level residual") {
    auto p = coarse_params();
    p.store_every = 2;
    const Grid1D grid = default_kernel_grid(PotentialSpec::zero(), 0.0, 0.0, 1.0, p.dx);
    const KernelField f = make_heat_kernel_field(0.0, 0.0, 1.0, grid, p);
    const auto res = duhamel_residual(f, {{1.0, 0.0}, {1.0, 0.5}});
    CHECK(res.max_residual < 1e-8);
}

TEST_CASE("duhamel residual shrinks at second order under refinement") {
    auto run = [](const KernelSolveParams& p, PotentialSpec pot) {
        KernelSolveParams q = p;
        q.store_every = 2;
        const Grid1D grid = default_kernel_grid(pot, 0.0, 0.0, 1.0, q.dx);
        const KernelField f = solve_kernel(pot, 0.0, 0.0, 1.0, grid, q);
        return duhamel_residual(f, {{1.0, 0.0}}).max_residual;
    };
    for (auto pot : {PotentialSpec::quartic(), PotentialSpec::cutoff_quartic(1)}) {
        const double e_coarse = run(coarse_params(), pot);
        const double e_fine = run(coarse_params().refined(2.0), pot);
        CHECK(e_fine < e_coarse);
        CHECK(e_coarse < 40.0 * coarse_params().dx * coarse_params().dx);  // C h^2 with moderate C
    }
}

TEST_CASE("cutoff monotonicity chain") {
    const auto p = coarse_params();
    const Grid1D grid = default_kernel_grid(PotentialSpec::quartic(), 0.0, 0.0, 1.0, p.dx);
    const std::vector<std::pair<double, double>> probes = {{1.0, 0.0}, {1.0, 0.5}, {1.0, -1.0}, {0.5, 0.25}};
    const auto rep = cutoff_monotonicity_check(0.0, 0.0, 1.0, probes, {1, 4, 16}, grid, p, p.tolerance());
    CHECK(rep.ok);
    CHECK(rep.max_violation <= p.tolerance());
    CHECK(rep.min_value >= -p.tolerance());
}

TEST_CASE("chapman-kolmogorov: gaussian closed form and solved potentials") {
    // Analytic identity at tight tolerance.
    const double q = gaussian_chapman_kolmogorov_quadrature(0.0, 1.0, 2.0, 0.0, 0.0);
    CHECK(q == doctest::Approx(1.0 / std::sqrt(4.0 * M_PI)).epsilon(1e-9));

    // Solved zero-potential field: both sides agree and match 1/sqrt(4 pi).
    const auto p = coarse_params();
    const Grid1D gz = default_kernel_grid(PotentialSpec::zero(), 0.0, 0.0, 2.0, p.dx);
    const double ez = chapman_kolmogorov_check(PotentialSpec::zero(), 0.0, 1.0, 2.0, 0.0, {0.0}, gz, p);
    CHECK(ez < 5e-5);

    const auto pot = PotentialSpec::constant_pot(-1.0);
    const double ec = chapman_kolmogorov_check(pot, 0.0, 1.0, 2.0, 0.0, {0.0, 0.5}, gz, p);
    CHECK(ec < 5e-5);

    const Grid1D gq = default_kernel_grid(PotentialSpec::quartic(), 0.0, 0.0, 1.0, p.dx);
    const double eq = chapman_kolmogorov_check(PotentialSpec::quartic(), 0.0, 0.5, 1.0, 0.0, {0.0, 0.5}, gq, p);
    CHECK(eq < 1e-4);
}

TEST_CASE("beta identity quadrature vs closed form") {
    // B(1,1) = 1 so the closed form is sqrt(2 pi).
    const auto r1 = beta_identity_check(0.5, 0.5, 1.0, 0.0, 1.0, 0.3, 0.3);
    CHECK(r1.closed_form == doctest::Approx(std::sqrt(2.0 * M_PI)).epsilon(1e-12));
    CHECK(r1.abs_error < 1e-5);

    // B(3/2,3/2) = pi/8.
    const auto r2 = beta_identity_check(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0);
    CHECK(r2.closed_form == doctest::Approx(std::sqrt(2.0 * M_PI) * M_PI / 8.0).epsilon(1e-12));
    CHECK(r2.abs_error < 1e-5);

    const auto r3 = beta_identity_check(1.0, 0.5, 2.0, 0.0, 1.0, 1.0, 0.0);
    CHECK(r3.abs_error < 1e-5);

    CHECK_THROWS_AS(beta_identity_check(1.6, 0.5, 1.0, 0.0, 1.0, 0.0, 0.0), std::invalid_argument);
}

TEST_CASE("transition rows") {
    const auto p = coarse_params();
    const Grid1D gz = default_kernel_grid(PotentialSpec::zero(), 0.0, 0.0, 1.0, p.dx);
    const KernelField fz = solve_kernel(PotentialSpec::zero(), 0.0, 0.0, 1.0, gz, p);
    const auto row = transition_row(fz, 0.0, 0.0, 1.0);
    CHECK(row.mass == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(gz.interpolate(row.values, 0.0) == doctest::Approx(heat_kernel(1.0, 0.0, 0.0, 0.0)).epsilon(1e-5));

    const auto pot = PotentialSpec::constant_pot(-0.5);
    const Grid1D gc = default_kernel_grid(pot, 0.0, 0.0, 1.0, p.dx);
    const KernelField fc = solve_kernel(pot, 0.0, 0.0, 1.0, gc, p);
    const auto rowc = transition_row(fc, 0.0, 0.0, 1.0);
    CHECK(rowc.mass == doctest::Approx(std::exp(-0.5)).epsilon(1e-6));

    const Grid1D gq = default_kernel_grid(PotentialSpec::quartic(), 0.0, 0.0, 1.0, p.dx);
    const KernelField fq = solve_kernel(PotentialSpec::quartic(), 0.0, 0.0, 1.0, gq, p);
    const auto rowq = transition_row(fq, 0.0, 0.0, 1.0);
    CHECK(rowq.mass <= 1.0 + p.tolerance());
    CHECK(rowq.mass > 0.0);
}

TEST_CASE("delta initialization trend in the bootstrap offset") {
    // Smooth observable f: Gaussian. Error of int phi(s+2eps)(x) f(x) dx vs f(y)
    // halves with eps (first-order Richardson trend).
    auto f = [](double x) { return std::exp(-0.5 * (x - 0.3) * (x - 0.3)); };
    auto p = coarse_params();
    std::vector<double> errors;
    for (double eps : {4e-3, 2e-3, 1e-3}) {
        p.bootstrap_eps = eps;
        p.store_every = 1;
        const Grid1D grid = default_kernel_grid(PotentialSpec::zero(), 0.0, 0.3, 1.0, p.dx);
        const KernelField field = solve_kernel(PotentialSpec::zero(), 0.0, 0.3, 2.0 * eps + 1e-12, grid, p);
        const auto& last = field.values.back();
        std::vector<double> prod(last.size());
        for (int i = 0; i < grid.n; ++i) prod[static_cast<size_t>(i)] = last[static_cast<size_t>(i)] * f(grid.node(i));
        errors.push_back(std::abs(trapezoid(prod, grid.spacing()) - f(0.3)));
    }
    CHECK(errors[1] < errors[0]);
    CHECK(errors[2] < errors[1]);
    const double ratio = errors[0] / errors[1];
    CHECK(ratio > 1.5);
    CHECK(ratio < 3.0);
}

TEST_CASE("kernel field serialization round trip") {
    auto p = coarse_params();
    p.store_every = 64;
    const Grid1D grid(-8.0, 8.0, 257);
    KernelSolveParams p2 = p;
    p2.halfwidth = 8.0;
    const KernelField f = solve_kernel(PotentialSpec::cutoff_quartic(4), 0.0, 0.0, 0.5, grid, p2);
    const std::string text = serialize_kernel_field(f);
    const KernelField g = parse_kernel_field(text);
    CHECK(g.r_nodes == f.r_nodes);
    CHECK(g.values == f.values);
    CHECK(g.potential.cutoff_n == 4);
    CHECK(serialize_kernel_field(g) == text);  // byte-deterministic
}
