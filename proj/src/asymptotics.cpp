#include "gibbsflow/asymptotics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gibbsflow/io.hpp"
#include "gibbsflow/parallel.hpp"
#include "gibbsflow/stats.hpp"

namespace gibbsflow {

TransformArgs to_original_coordinates(double r, double x, double s, double y) {
    TransformArgs a;
    a.r = r * r * r / 27.0;
    a.x = x * r / 3.0;
    a.s = s * s * s / 27.0;
    a.y = y * s / 3.0;
    return a;
}

TransformArgs to_transformed_coordinates(double R, double X, double S, double Y) {
    if (!(S > 0.0)) throw std::invalid_argument("to_transformed_coordinates: S must be > 0");
    TransformArgs a;
    const double rc = std::cbrt(R);
    const double sc = std::cbrt(S);
    a.r = 3.0 * rc;
    a.x = X / rc;
    a.s = 3.0 * sc;
    a.y = Y / sc;
    return a;
}

double transformed_from_original_value(double phi_value, double s_transformed) {
    return s_transformed / 3.0 * phi_value;
}

double original_from_transformed_value(double Phi_value, double s_transformed) {
    return 3.0 / s_transformed * Phi_value;
}

namespace {

Grid1D phi_grid(const PhiTraceParams& p) {
    const int half = static_cast<int>(std::lround(p.halfwidth / p.dx));
    const double lim = p.dx * static_cast<double>(half);
    return Grid1D(-lim, lim, 2 * half + 1);
}

KernelSolveParams phi_kernel_params(const PhiTraceParams& p) {
    KernelSolveParams kp;
    kp.dx = p.dx;
    kp.dt = p.dt;
    kp.halfwidth = p.halfwidth;
    kp.bootstrap_eps = p.bootstrap_eps;
    kp.store_every = 1 << 20;  // traces keep observables, not slices
    return kp;
}

struct GroundStateOnGrid {
    std::vector<double> psi0;  // renormalized on the trace grid
    std::vector<double> q;     // -(1/2 psi0 + w psi0')
};

GroundStateOnGrid ground_state_on_grid(const SpectralBasis& basis, const Grid1D& grid) {
    GroundStateOnGrid g;
    const int n = grid.n;
    const double h = grid.spacing();
    g.psi0.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) g.psi0[static_cast<size_t>(i)] = basis.psi(0, grid.node(i));
    double norm = 0.0;
    for (double v : g.psi0) norm += v * v;
    norm = std::sqrt(norm * h);
    for (auto& v : g.psi0) v /= norm;

    g.q.assign(static_cast<size_t>(n), 0.0);
    for (int i = 1; i < n - 1; ++i) {
        const double d = (g.psi0[static_cast<size_t>(i) + 1] - g.psi0[static_cast<size_t>(i) - 1]) / (2.0 * h);
        g.q[static_cast<size_t>(i)] = -(0.5 * g.psi0[static_cast<size_t>(i)] + grid.node(i) * d);
    }
    return g;
}

}  // namespace

double PhiTrace::value_at_center(double rr) const {
    if (r.empty()) throw std::runtime_error("PhiTrace: empty");
    if (rr <= r.front()) return center.front();
    if (rr >= r.back()) return center.back();
    const auto it = std::upper_bound(r.begin(), r.end(), rr);
    const size_t hi = static_cast<size_t>(it - r.begin());
    const double t = (rr - r[hi - 1]) / (r[hi] - r[hi - 1]);
    return (1.0 - t) * center[hi - 1] + t * center[hi];
}

PhiTrace solve_phi_trace(double s, double y, double r_max, const SpectralBasis& basis,
                         const PhiTraceParams& params) {
    PhiTrace trace;
    trace.s = s;
    trace.y = y;
    trace.grid = phi_grid(params);
    const Grid1D& grid = trace.grid;
    const double h = grid.spacing();
    const int center_idx = (grid.n - 1) / 2;
    const GroundStateOnGrid gs = ground_state_on_grid(basis, grid);

    auto observer = [&](double r, const std::vector<double>& slice) {
        trace.r.push_back(r);
        trace.center.push_back(slice[static_cast<size_t>(center_idx)]);
        double m = 0.0, l2 = 0.0, proj = 0.0, gq = 0.0;
        for (size_t i = 0; i < slice.size(); ++i) {
            m += slice[i];
            l2 += slice[i] * slice[i];
            proj += slice[i] * gs.psi0[i];
            gq += slice[i] * gs.q[i];
        }
        m *= h;
        proj *= h;
        gq *= h;
        trace.mass.push_back(m);
        trace.l2.push_back(std::sqrt(l2 * h));
        double perp2 = l2 * h - proj * proj;
        trace.l2_perp.push_back(std::sqrt(std::max(0.0, perp2)));
        trace.g_inner.push_back(gq);
    };

    solve_kernel(PotentialSpec::transformed_quartic(), s, y, r_max, grid, phi_kernel_params(params), {},
                 observer);
    return trace;
}

ScaledLimit scaled_limit(const PhiTrace& trace, double lambda0, double r_lo, double r_hi) {
    ScaledLimit out;
    double lo = 1e300, hi = -1e300, sum = 0.0;
    long count = 0;
    for (size_t i = 0; i < trace.r.size(); ++i) {
        const double r = trace.r[i];
        if (r < r_lo || r > r_hi) continue;
        const double v = std::sqrt(r / trace.s) * std::exp((r - trace.s) * lambda0) * trace.center[i];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        sum += v;
        ++count;
    }
    if (count < 8) return out;  // window not covered
    out.plateau = sum / static_cast<double>(count);
    // Half peak-to-peak relative to the window mean (a +-x% statement).
    out.variation = 0.5 * (hi - lo) / std::max(std::abs(out.plateau), 1e-300);
    out.status = out.variation < 0.02 ? PlateauStatus::Ok : PlateauStatus::Inconclusive;
    return out;
}

double scaled_limit_extrapolated(const PhiTrace& trace, double lambda0, double r_lo, double r_hi) {
    std::vector<std::vector<double>> cols(2);
    std::vector<double> rhs;
    for (size_t i = 0; i < trace.r.size(); ++i) {
        const double r = trace.r[i];
        if (r < r_lo || r > r_hi) continue;
        cols[0].push_back(1.0);
        cols[1].push_back(1.0 / r);
        rhs.push_back(std::sqrt(r / trace.s) * std::exp((r - trace.s) * lambda0) * trace.center[i]);
    }
    if (rhs.size() < 8) throw std::invalid_argument("scaled_limit_extrapolated: window not covered");
    return least_squares(cols, rhs).coeffs[0];
}

GValue compute_G(const PhiTrace& trace, const SpectralBasis& basis) {
    GValue out;
    const double s = trace.s;
    const double lambda0 = basis.lambda(0);

    std::vector<double> w(trace.r.size());
    for (size_t i = 0; i < trace.r.size(); ++i) {
        const double rho = trace.r[i];
        w[i] = std::sqrt(rho / s) * std::exp(lambda0 * (rho - s)) * trace.g_inner[i] / rho;
    }
    double integral = 0.0;
    for (size_t i = 0; i + 1 < w.size(); ++i) integral += 0.5 * (w[i] + w[i + 1]) * (trace.r[i + 1] - trace.r[i]);
    // Sliver between the source time and the bootstrap slice.
    integral += (trace.r.front() - s) * w.front();

    // Beyond the spectral-gap transient the drift feeds the ground mode back
    // into its complement, so the integrand settles onto a 1/rho^2 envelope;
    // complete the discarded tail with that law and carry its size as the
    // truncation uncertainty.
    const double rho_end = trace.r.back();
    const double completion = w.back() * rho_end;
    integral += completion;
    out.tail_bound = 0.3 * std::abs(completion);
    out.value = basis.psi(0, trace.y) + integral;
    out.tail_converged = out.tail_bound < std::max(1e-8, 0.005 * std::abs(out.value));
    return out;
}

std::vector<double> kernel_origin_values(const std::vector<double>& L_list, const PhiTraceParams& params) {
    if (L_list.empty()) throw std::invalid_argument("kernel_origin_values: empty L list");
    for (size_t i = 1; i < L_list.size(); ++i)
        if (!(L_list[i] > L_list[i - 1])) throw std::invalid_argument("kernel_origin_values: L list not ascending");
    if (!(L_list.front() >= 1.0)) throw std::invalid_argument("kernel_origin_values: need L >= 1");

    const Grid1D grid = phi_grid(params);
    KernelSolveParams kp = phi_kernel_params(params);

    // Short direct solve of the original equation up to R0 = 1; at the matched
    // transformed time r' = 3 the two fields coincide nodewise, so the final
    // slice seeds the drift-equation evolution without any prefactor.
    const KernelField seed = solve_kernel(PotentialSpec::quartic(), 0.0, 0.0, 1.0, grid, kp, {1.0});

    std::vector<double> targets;
    for (double L : L_list) targets.push_back(3.0 * std::cbrt(L));

    std::vector<double> rs, centers;
    const int center_idx = (grid.n - 1) / 2;
    auto observer = [&](double r, const std::vector<double>& slice) {
        rs.push_back(r);
        centers.push_back(slice[static_cast<size_t>(center_idx)]);
    };
    evolve_slice(PotentialSpec::transformed_quartic(), seed.values.back(), 3.0, targets.back(), grid, kp,
                 targets, observer);

    std::vector<double> out;
    for (double t : targets) {
        const auto it = std::lower_bound(rs.begin(), rs.end(), t - 1e-10);
        if (it == rs.end() || std::abs(*it - t) > 1e-9)
            throw std::runtime_error("kernel_origin_values: target time not landed");
        out.push_back(centers[static_cast<size_t>(it - rs.begin())]);
    }
    return out;
}

DecayFitResult decay_fit(const std::vector<double>& L_list, const PhiTraceParams& params) {
    if (L_list.size() < 4) throw std::invalid_argument("decay_fit: need at least 4 L values");
    if (!(L_list.back() >= 8.0 * L_list.front())) throw std::invalid_argument("decay_fit: L span below 8x");

    DecayFitResult res;
    res.L_values = L_list;
    res.phi_values = kernel_origin_values(L_list, params);

    std::vector<std::vector<double>> cols(4);
    std::vector<double> rhs;
    for (size_t i = 0; i < L_list.size(); ++i) {
        cols[0].push_back(1.0);
        cols[1].push_back(std::cbrt(L_list[i]));
        cols[2].push_back(std::log(L_list[i]));
        cols[3].push_back(1.0 / std::cbrt(L_list[i]));
        rhs.push_back(std::log(res.phi_values[i]));
    }
    const LinearFit fit = least_squares(cols, rhs);
    res.exp_coeff = -fit.coeffs[1];
    res.power_coeff = -fit.coeffs[2];
    res.C = std::exp(fit.coeffs[0]);
    res.correction_coeff = fit.coeffs[3];
    res.rms_residual = fit.rms_residual;
    return res;
}

FProvider build_f_provider(double L_star, double s_min, const KernelSolveParams& backward_params,
                           const PhiTraceParams& phi_params) {
    FProvider p;
    p.L_star = L_star;
    const Grid1D grid = default_kernel_grid(PotentialSpec::quartic(), 0.0, 0.0, L_star, backward_params.dx);
    p.backward = solve_kernel_backward(PotentialSpec::quartic(), L_star, 0.0, s_min, grid, backward_params);
    p.phi_L_origin = kernel_origin_values({L_star}, phi_params).front();
    return p;
}

FRoutes compute_F(double s, double y, const SpectralBasis& basis, const FProvider& provider,
                  const DecayFitResult& fit, const PhiTraceParams& params) {
    FRoutes out;
    out.route_a = provider.value(s, y);

    // Inserting the plateau limit into the inverted change of variables gives
    // F = C^{-1} s^{-1/6} e^{3 lambda0 s^{1/3}} psi0(0) G(3 s^{1/3}, y s^{-1/3}).
    const double sigma = 3.0 * std::cbrt(s);
    const double eta = y / std::cbrt(s);
    PhiTrace trace = solve_phi_trace(sigma, eta, sigma + 18.0, basis, params);
    const GValue g = compute_G(trace, basis);
    out.route_b = basis.psi(0, 0.0) * std::pow(s, -1.0 / 6.0) *
                  std::exp(3.0 * basis.lambda(0) * std::cbrt(s)) * g.value / fit.C;
    return out;
}

double transformed_pde_residual(const KernelField& quartic_field, double R0, double x_halfwidth) {
    const KernelField& f = quartic_field;
    const int it = f.nearest_time_index(R0);
    if (it <= 0 || it + 1 >= static_cast<int>(f.r_nodes.size()))
        throw std::invalid_argument("transformed_pde_residual: R0 needs stored neighbors");
    const double Rm = f.r_nodes[static_cast<size_t>(it) - 1];
    const double Rc = f.r_nodes[static_cast<size_t>(it)];
    const double Rp = f.r_nodes[static_cast<size_t>(it) + 1];

    const double h = f.x_grid.spacing();
    const double rc = 3.0 * std::cbrt(Rc);
    const double rm = 3.0 * std::cbrt(Rm);
    const double rp = 3.0 * std::cbrt(Rp);

    // Transformed-x stencil whose center-time arguments are exact grid nodes.
    const double Hx = 4.0 * h / std::cbrt(Rc);
    const int m = static_cast<int>(std::floor(x_halfwidth / Hx));

    auto Phi = [&](double r_transformed, double x_transformed, double R) {
        const double X = x_transformed * std::cbrt(R);
        (void)r_transformed;
        return f.value_at(R, X);
    };

    // Nonuniform three-point first derivative in the transformed time.
    auto ddr = [&](double fm, double fc, double fp) {
        const double a = rm, b = rc, c = rp;
        return fm * (b - c) / ((a - b) * (a - c)) + fc * ((b - a) + (b - c)) / ((b - a) * (b - c)) +
               fp * (b - a) / ((c - a) * (c - b));
    };

    double worst = 0.0;
    for (int j = -m + 1; j <= m - 1; ++j) {
        const double x = static_cast<double>(j) * Hx;
        const double vc = Phi(rc, x, Rc);
        const double vl = Phi(rc, x - Hx, Rc);
        const double vr = Phi(rc, x + Hx, Rc);
        const double vm = Phi(rm, x, Rm);
        const double vp = Phi(rp, x, Rp);

        const double dr = ddr(vm, vc, vp);
        const double dxx = (vl - 2.0 * vc + vr) / (Hx * Hx);
        const double dx = (vr - vl) / (2.0 * Hx);
        const double resid = -dr + 0.5 * dxx - 0.25 * x * x * x * x * vc + (x / rc) * dx;
        worst = std::max(worst, std::abs(resid));
    }
    return worst;
}

double AsymptoticProfile::F(double s, double y) const {
    if (F_s.empty()) throw std::runtime_error("AsymptoticProfile: empty F table");
    auto locate = [](const std::vector<double>& axis, double v, size_t& idx, double& frac) {
        if (v <= axis.front()) {
            idx = 0;
            frac = 0.0;
            return;
        }
        if (v >= axis.back()) {
            idx = axis.size() - 2;
            frac = 1.0;
            return;
        }
        const auto it = std::upper_bound(axis.begin(), axis.end(), v);
        idx = static_cast<size_t>(it - axis.begin()) - 1;
        frac = (v - axis[idx]) / (axis[idx + 1] - axis[idx]);
    };
    size_t is = 0, iy = 0;
    double fs = 0.0, fy = 0.0;
    locate(F_s, s, is, fs);
    locate(F_y, y, iy, fy);
    const double v00 = F_table[is][iy], v01 = F_table[is][iy + 1];
    const double v10 = F_table[is + 1][iy], v11 = F_table[is + 1][iy + 1];
    return (1.0 - fs) * ((1.0 - fy) * v00 + fy * v01) + fs * ((1.0 - fy) * v10 + fy * v11);
}

AsymptoticProfile build_asymptotic_profile(const SpectralBasis& basis, const ProfileOptions& options,
                                           const PhiTraceParams& params, int threads) {
    AsymptoticProfile prof;
    prof.lambda0 = basis.lambda(0);
    prof.lambda1 = basis.lambda(1);
    prof.fit = decay_fit(options.decay_L, params);

    KernelSolveParams back;
    back.dx = 1.0 / 64.0;
    back.dt = 1.0 / 256.0;
    back.dt_far = 0.125;
    back.store_every = 4;
    back.bootstrap_eps = 0.01;
    const FProvider provider = build_f_provider(options.L_star, options.F_s_step / 4.0, back, params);

    for (double s = options.F_s_step; s <= options.F_s_max + 1e-12; s += options.F_s_step)
        prof.F_s.push_back(s);
    for (double y = -options.F_y_halfwidth; y <= options.F_y_halfwidth + 1e-12; y += options.F_y_step)
        prof.F_y.push_back(y);
    prof.F_table.assign(prof.F_s.size(), std::vector<double>(prof.F_y.size(), 0.0));
    for (size_t i = 0; i < prof.F_s.size(); ++i)
        for (size_t j = 0; j < prof.F_y.size(); ++j)
            prof.F_table[i][j] = std::max(provider.value(prof.F_s[i], prof.F_y[j]), 1e-250);

    prof.G_s = options.G_sigmas;
    prof.G_y = options.G_ys;
    prof.G_table.assign(prof.G_s.size(), std::vector<double>(prof.G_y.size(), 0.0));
    const size_t total = prof.G_s.size() * prof.G_y.size();
    parallel_for(total, threads, [&](size_t idx) {
        const size_t i = idx / prof.G_y.size();
        const size_t j = idx % prof.G_y.size();
        PhiTrace tr = solve_phi_trace(prof.G_s[i], prof.G_y[j], prof.G_s[i] + 18.0, basis, params);
        prof.G_table[i][j] = compute_G(tr, basis).value;
    });

    prof.M_emp = 0.0;
    for (size_t i = 0; i < prof.G_s.size(); ++i) {
        bool positive = true;
        for (size_t j = 0; j < prof.G_y.size(); ++j) {
            if (std::abs(prof.G_y[j]) < 1.0 && !(prof.G_table[i][j] > 0.0)) positive = false;
        }
        if (positive) {
            prof.M_emp = prof.G_s[i];
            break;
        }
    }
    return prof;
}

std::string serialize_profile(const AsymptoticProfile& p) {
    std::string out = "gibbsflow.asymptotics.v1\n";
    out += "lambda " + format_hex(p.lambda0) + " " + format_hex(p.lambda1) + "\n";
    out += "fit " + format_hex(p.fit.exp_coeff) + " " + format_hex(p.fit.power_coeff) + " " +
           format_hex(p.fit.C) + " " + format_hex(p.fit.correction_coeff) + " " + format_hex(p.fit.rms_residual) + "\n";
    out += "m_emp " + format_hex(p.M_emp) + "\n";
    auto dump_axis = [&](const std::string& key, const std::vector<double>& axis) {
        std::string line = key;
        for (double v : axis) {
            line += ' ';
            line += format_hex(v);
        }
        out += line + "\n";
    };
    dump_axis("decay_L", p.fit.L_values);
    dump_axis("decay_phi", p.fit.phi_values);
    dump_axis("f_s", p.F_s);
    dump_axis("f_y", p.F_y);
    for (const auto& row : p.F_table) dump_axis("f_row", row);
    dump_axis("g_s", p.G_s);
    dump_axis("g_y", p.G_y);
    for (const auto& row : p.G_table) dump_axis("g_row", row);
    out += "end\n";
    return out;
}

AsymptoticProfile parse_profile(const std::string& text) {
    LineReader reader(text);
    std::vector<std::string> tok;
    if (!reader.next(tok) || tok[0] != "gibbsflow.asymptotics.v1") reader.fail("bad profile header");
    AsymptoticProfile p;
    auto axis = [&](size_t from) {
        std::vector<double> v;
        for (size_t i = from; i < tok.size(); ++i) v.push_back(parse_double(tok[i]));
        return v;
    };
    while (reader.next(tok)) {
        if (tok[0] == "lambda") {
            p.lambda0 = parse_double(tok.at(1));
            p.lambda1 = parse_double(tok.at(2));
        } else if (tok[0] == "fit") {
            p.fit.exp_coeff = parse_double(tok.at(1));
            p.fit.power_coeff = parse_double(tok.at(2));
            p.fit.C = parse_double(tok.at(3));
            p.fit.correction_coeff = parse_double(tok.at(4));
            p.fit.rms_residual = parse_double(tok.at(5));
        } else if (tok[0] == "m_emp") {
            p.M_emp = parse_double(tok.at(1));
        } else if (tok[0] == "decay_L") {
            p.fit.L_values = axis(1);
        } else if (tok[0] == "decay_phi") {
            p.fit.phi_values = axis(1);
        } else if (tok[0] == "f_s") {
            p.F_s = axis(1);
        } else if (tok[0] == "f_y") {
            p.F_y = axis(1);
        } else if (tok[0] == "f_row") {
            p.F_table.push_back(axis(1));
        } else if (tok[0] == "g_s") {
            p.G_s = axis(1);
        } else if (tok[0] == "g_y") {
            p.G_y = axis(1);
        } else if (tok[0] == "g_row") {
            p.G_table.push_back(axis(1));
        } else if (tok[0] == "end") {
            break;
        } else {
            reader.fail("unknown key: " + tok[0]);
        }
    }
    if (p.F_table.size() != p.F_s.size() || p.G_table.size() != p.G_s.size())
        throw std::runtime_error("profile: table shape mismatch");
    for (const auto& row : p.F_table)
        for (double v : row)
            if (!(v > 0.0)) throw std::runtime_error("profile: F must be positive");
    return p;
}

}  // namespace gibbsflow
