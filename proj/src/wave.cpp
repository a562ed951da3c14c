#include "gibbsflow/wave.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gibbsflow/fft.hpp"
#include "gibbsflow/io.hpp"

namespace gibbsflow {

namespace {

bool power_of_two(long v) { return v > 0 && (v & (v - 1)) == 0; }

// Odd 2(n-1)-periodic extension of a Dirichlet grid function, by node index.
inline double odd_ext(const std::vector<double>& f, long j) {
    const long half = static_cast<long>(f.size()) - 1;
    const long p = 2 * half;
    j %= p;
    if (j < 0) j += p;
    return (j <= half) ? f[static_cast<size_t>(j)] : -f[static_cast<size_t>(p - j)];
}

// Even periodic extension (antiderivatives of odd functions).
inline double even_ext(const std::vector<double>& g, long j) {
    const long half = static_cast<long>(g.size()) - 1;
    const long p = 2 * half;
    j %= p;
    if (j < 0) j += p;
    return (j <= half) ? g[static_cast<size_t>(j)] : g[static_cast<size_t>(p - j)];
}

inline double odd_ext_at(const std::vector<double>& f, double x) {
    const double fl = std::floor(x);
    const long j = static_cast<long>(fl);
    const double frac = x - fl;
    if (frac < 1e-12) return odd_ext(f, j);
    return (1.0 - frac) * odd_ext(f, j) + frac * odd_ext(f, j + 1);
}

inline double even_ext_at(const std::vector<double>& g, double x) {
    const double fl = std::floor(x);
    const long j = static_cast<long>(fl);
    const double frac = x - fl;
    if (frac < 1e-12) return even_ext(g, j);
    return (1.0 - frac) * even_ext(g, j) + frac * even_ext(g, j + 1);
}

// Antiderivative of the odd-periodic extension on [0, L], fourth-order local
// cell rule; exactly periodic because the odd extension has zero mean.
std::vector<double> prefix_integral(const std::vector<double>& g, double h) {
    const size_t n = g.size();
    std::vector<double> G(n, 0.0);
    for (size_t i = 0; i + 1 < n; ++i) {
        const double gm = odd_ext(g, static_cast<long>(i) - 1);
        const double g0 = g[i];
        const double g1 = g[i + 1];
        const double gp = odd_ext(g, static_cast<long>(i) + 2);
        G[i + 1] = G[i] + h / 24.0 * (-gm + 13.0 * g0 + 13.0 * g1 - gp);
    }
    return G;
}

// Fourth-order derivative of the odd extension at a node.
inline double odd_ext_derivative(const std::vector<double>& f, long i, double h) {
    return (-odd_ext(f, i + 2) + 8.0 * odd_ext(f, i + 1) - 8.0 * odd_ext(f, i - 1) + odd_ext(f, i - 2)) /
           (12.0 * h);
}

void check_single_step_range(double t, const WaveGrid& grid, const char* who) {
    if (std::abs(t) > 1.0 + 1e-12)
        throw std::invalid_argument(std::string(who) + ": |t| > 1; compose windows for larger times");
    if (grid.L < 2.0) throw std::invalid_argument(std::string(who) + ": requires L >= 2");
}

}  // namespace

WaveGrid make_wave_grid(double L, int cells_pow2) {
    WaveGrid g;
    g.L = L;
    g.n = (1 << cells_pow2) + 1;
    return g;
}

std::vector<double> WaveState::re() const {
    std::vector<double> out(w.size());
    for (size_t i = 0; i < w.size(); ++i) out[i] = w[i].real();
    return out;
}

std::vector<double> WaveState::im() const {
    std::vector<double> out(w.size());
    for (size_t i = 0; i < w.size(); ++i) out[i] = w[i].imag();
    return out;
}

double WaveState::boundary_residual() const {
    return std::max(std::abs(w.front()), std::abs(w.back()));
}

double WaveState::holder_norm(double s) const {
    const size_t n = w.size();
    const size_t stride = (n <= 4097) ? 1 : (n - 1) / 4096 + 1;
    const double h = grid.h();
    double best = 0.0;
    for (size_t i = 0; i < n; i += stride) {
        for (size_t j = i + stride; j < n; j += stride) {
            const double num = std::abs(w[j] - w[i]);
            const double den = std::pow(h * static_cast<double>(j - i), s);
            best = std::max(best, num / den);
        }
    }
    return best;
}

std::vector<double> cos_prop(const std::vector<double>& f, double t, const WaveGrid& grid) {
    check_single_step_range(t, grid, "cos_prop");
    const size_t n = f.size();
    const double m = t / grid.h();
    std::vector<double> out(n);
    const double mr = std::round(m);
    if (std::abs(m - mr) < 1e-9) {
        const long mi = static_cast<long>(mr);
        for (size_t i = 0; i < n; ++i)
            out[i] = 0.5 * (odd_ext(f, static_cast<long>(i) + mi) + odd_ext(f, static_cast<long>(i) - mi));
    } else {
        for (size_t i = 0; i < n; ++i)
            out[i] = 0.5 * (odd_ext_at(f, static_cast<double>(i) + m) + odd_ext_at(f, static_cast<double>(i) - m));
    }
    return out;
}

std::vector<double> sin_prop(const std::vector<double>& g, double t, const WaveGrid& grid) {
    check_single_step_range(t, grid, "sin_prop");
    const std::vector<double> G = prefix_integral(g, grid.h());
    const size_t n = g.size();
    const double m = t / grid.h();
    std::vector<double> out(n);
    const double mr = std::round(m);
    if (std::abs(m - mr) < 1e-9) {
        const long mi = static_cast<long>(mr);
        for (size_t i = 0; i < n; ++i)
            out[i] = 0.5 * (even_ext(G, static_cast<long>(i) + mi) - even_ext(G, static_cast<long>(i) - mi));
    } else {
        for (size_t i = 0; i < n; ++i)
            out[i] = 0.5 * (even_ext_at(G, static_cast<double>(i) + m) - even_ext_at(G, static_cast<double>(i) - m));
    }
    return out;
}

std::vector<double> sine_coefficients(const std::vector<double>& values, const WaveGrid& grid) {
    if (static_cast<int>(values.size()) != grid.n) throw std::invalid_argument("sine_coefficients: width mismatch");
    if (!power_of_two(grid.n - 1)) throw std::invalid_argument("sine_coefficients: n - 1 must be a power of two");
    std::vector<double> interior(values.begin() + 1, values.end() - 1);
    std::vector<double> c = dst_1(interior);
    const double scale = 2.0 / static_cast<double>(grid.n - 1);
    for (auto& v : c) v *= scale;
    return c;
}

std::vector<double> sine_synthesis(const std::vector<double>& coeffs, const WaveGrid& grid) {
    std::vector<double> interior = dst_1(coeffs);
    std::vector<double> out(static_cast<size_t>(grid.n), 0.0);
    std::copy(interior.begin(), interior.end(), out.begin() + 1);
    return out;
}

namespace {
std::vector<double> apply_multiplier(const std::vector<double>& values, const WaveGrid& grid,
                                     const std::function<double(double)>& mult) {
    std::vector<double> c = sine_coefficients(values, grid);
    for (size_t k = 0; k < c.size(); ++k) {
        const double omega = static_cast<double>(k + 1) * M_PI / grid.L;
        c[k] *= mult(omega);
    }
    return sine_synthesis(c, grid);
}
}  // namespace

std::vector<double> inv_abs_deriv(const std::vector<double>& values, const WaveGrid& grid) {
    return apply_multiplier(values, grid, [](double w) { return 1.0 / w; });
}

std::vector<double> abs_deriv(const std::vector<double>& values, const WaveGrid& grid) {
    return apply_multiplier(values, grid, [](double w) { return w; });
}

std::vector<double> sin_mult(const std::vector<double>& g, double t, const WaveGrid& grid) {
    return apply_multiplier(g, grid, [t](double w) { return std::sin(t * w); });
}

WaveState spectral_free_flow(const WaveState& state, double t) {
    const WaveGrid& grid = state.grid;
    std::vector<double> a = sine_coefficients(state.re(), grid);
    std::vector<double> b = sine_coefficients(state.im(), grid);
    for (size_t k = 0; k < a.size(); ++k) {
        const double theta = t * static_cast<double>(k + 1) * M_PI / grid.L;
        const double ca = a[k], cb = b[k];
        const double c = std::cos(theta), s = std::sin(theta);
        a[k] = ca * c + cb * s;
        b[k] = cb * c - ca * s;
    }
    const std::vector<double> re = sine_synthesis(a, grid);
    const std::vector<double> im = sine_synthesis(b, grid);
    WaveState out;
    out.t = state.t + t;
    out.grid = grid;
    out.w.resize(re.size());
    for (size_t i = 0; i < re.size(); ++i) out.w[i] = {re[i], im[i]};
    return out;
}

std::vector<double> inv_abs_deriv_convolution(const std::vector<double>& values, const WaveGrid& grid) {
    // Kernel (1/pi) log[ sin(pi (r + rho) / 2L) / sin(pi |r - rho| / 2L) ];
    // the log-singular diagonal cell uses its analytic average.
    const int n = grid.n;
    const double h = grid.h();
    const double L = grid.L;
    std::vector<double> out(static_cast<size_t>(n), 0.0);
    for (int i = 1; i < n - 1; ++i) {
        const double r = grid.node(i);
        double sum = 0.0;
        for (int j = 1; j < n - 1; ++j) {
            const double rho = grid.node(j);
            double kern;
            if (i == j) {
                // Cell average of -log|2 sin(pi delta / 2L)| ~ -log(pi delta / L)
                // over |delta| <= h/2 is -(log(pi h / (2L)) - 1).
                const double plus = std::log(std::abs(2.0 * std::sin(M_PI * (r + rho) / (2.0 * L))));
                kern = (plus - (std::log(M_PI * h / (2.0 * L)) - 1.0)) / M_PI;
            } else {
                const double plus = std::log(std::abs(2.0 * std::sin(M_PI * (r + rho) / (2.0 * L))));
                const double minus = std::log(std::abs(2.0 * std::sin(M_PI * (r - rho) / (2.0 * L))));
                kern = (plus - minus) / M_PI;
            }
            sum += kern * values[static_cast<size_t>(j)];
        }
        out[static_cast<size_t>(i)] = sum * h;
    }
    return out;
}

std::vector<double> cubic_source(const std::vector<double>& v, const WaveGrid& grid) {
    const size_t n = v.size();
    std::vector<double> out(n, 0.0);
    for (size_t i = 1; i < n; ++i) {
        const double r = grid.node(static_cast<int>(i));
        out[i] = v[i] * v[i] * v[i] / (r * r);
    }
    out[n - 1] = 0.0;
    return out;
}

std::vector<std::vector<double>> duhamel_K(const std::vector<std::vector<double>>& v_history, double k,
                                           const WaveGrid& grid) {
    const size_t M = v_history.size() - 1;
    const size_t n = static_cast<size_t>(grid.n);
    const double h = grid.h();
    const double cells = k / h;
    const long tau_cells = std::lround(cells);
    if (std::abs(cells - static_cast<double>(tau_cells)) > 1e-9)
        throw std::invalid_argument("duhamel_K: the time step must be a whole number of grid cells");

    std::vector<std::vector<double>> prefixes(M + 1);
    for (size_t j = 0; j <= M; ++j) prefixes[j] = prefix_integral(cubic_source(v_history[j], grid), h);

    std::vector<std::vector<double>> K(M + 1, std::vector<double>(n, 0.0));
    for (size_t i = 1; i <= M; ++i) {
        auto& Ki = K[i];
        for (size_t j = 0; j < i; ++j) {
            const double weight = (j == 0 ? 0.5 : 1.0) * k;
            const long m = static_cast<long>(i - j) * tau_cells;
            const auto& P = prefixes[j];
            for (size_t idx = 0; idx < n; ++idx) {
                Ki[idx] += weight * 0.5 * (even_ext(P, static_cast<long>(idx) + m) -
                                           even_ext(P, static_cast<long>(idx) - m));
            }
        }
    }
    return K;
}

namespace {

struct PicardAttemptResult {
    std::vector<std::vector<double>> v;
    WindowDiag diag;
    bool contracted = true;
};

double sup_distance(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
    double d = 0.0;
    for (size_t i = 0; i < a.size(); ++i)
        for (size_t j = 0; j < a[i].size(); ++j) d = std::max(d, std::abs(a[i][j] - b[i][j]));
    return d;
}

PicardAttemptResult picard_attempt(const std::vector<std::vector<double>>& free_slices, double k,
                                   const WaveGrid& grid, double tol, const PicardParams& params) {
    PicardAttemptResult res;
    res.v = free_slices;
    res.diag.k = k;
    res.diag.T = k * static_cast<double>(free_slices.size() - 1);
    double prev_dist = -1.0;
    for (int it = 1; it <= params.max_iterations; ++it) {
        const auto K = duhamel_K(res.v, k, grid);
        std::vector<std::vector<double>> next(free_slices.size());
        for (size_t i = 0; i < free_slices.size(); ++i) {
            next[i].resize(free_slices[i].size());
            for (size_t j = 0; j < next[i].size(); ++j) next[i][j] = free_slices[i][j] - K[i][j];
        }
        const double dist = sup_distance(next, res.v);
        res.v.swap(next);
        res.diag.iterations = it;
        res.diag.residual = dist;
        if (prev_dist > 0.0) {
            res.diag.last_ratio = dist / prev_dist;
            if (it >= 3 && res.diag.last_ratio >= params.contraction_limit && dist > tol) {
                res.contracted = false;
                return res;
            }
        }
        if (dist < tol) return res;
        prev_dist = dist;
    }
    res.contracted = false;
    return res;
}

using FreePartFn = std::function<std::vector<double>(double t)>;

WindowSolution picard_driver(const FreePartFn& free_part, double T, double tol, const WaveGrid& grid,
                             const PicardParams& params) {
    if (!(T > 0.0)) throw std::invalid_argument("picard_solve: T must be > 0");
    int tau_cells = std::max(1, params.tau_cells);
    double k = tau_cells * grid.h();
    long M = std::max(1L, std::lround(T / k));
    int halvings = 0;
    while (true) {
        const double T_actual = k * static_cast<double>(M);
        std::vector<std::vector<double>> free_slices(static_cast<size_t>(M) + 1);
        for (long i = 0; i <= M; ++i) free_slices[static_cast<size_t>(i)] = free_part(k * static_cast<double>(i));

        PicardAttemptResult attempt = picard_attempt(free_slices, k, grid, tol, params);
        attempt.diag.halvings = halvings;
        if (attempt.contracted) {
            WindowSolution sol;
            sol.v = std::move(attempt.v);
            sol.k = k;
            sol.diag = attempt.diag;
            sol.diag.T = T_actual;
            return sol;
        }
        // Shrink the window; below one step, shrink the step itself.
        ++halvings;
        if (M > 1) {
            M /= 2;
        } else if (tau_cells > 1) {
            tau_cells /= 2;
            k = tau_cells * grid.h();
        } else {
            if (k * 0.5 < params.min_window)
                throw std::runtime_error("picard_solve: no contraction above the minimum window (residual " +
                                         format_g17(attempt.diag.residual) + ", ratio " +
                                         format_g17(attempt.diag.last_ratio) + ")");
            k *= 0.5;  // sub-cell steps: propagators fall back to interpolation
        }
    }
}

}  // namespace

WindowSolution picard_solve(const std::vector<double>& f1_in, const std::vector<double>& g2, double T,
                            double tol, const WaveGrid& grid, const PicardParams& params) {
    if (std::abs(f1_in.front()) > 1e-10 || std::abs(f1_in.back()) > 1e-10)
        throw std::invalid_argument("picard_solve: f1 must vanish at the boundary");
    std::vector<double> f1 = f1_in;
    f1.front() = 0.0;
    f1.back() = 0.0;
    auto free_part = [&](double t) {
        std::vector<double> out = cos_prop(f1, t, grid);
        if (t != 0.0) {
            const std::vector<double> s = sin_mult(g2, t, grid);
            for (size_t i = 0; i < out.size(); ++i) out[i] += s[i];
        }
        return out;
    };
    return picard_driver(free_part, T, tol, grid, params);
}

WindowSolution picard_solve_pair(const std::vector<double>& f1, const std::vector<double>& f2, double T,
                                 double tol, const WaveGrid& grid, const PicardParams& params) {
    auto free_part = [&](double t) {
        std::vector<double> out = cos_prop(f1, t, grid);
        if (t != 0.0) {
            const std::vector<double> s = sin_prop(f2, t, grid);
            for (size_t i = 0; i < out.size(); ++i) out[i] += s[i];
        }
        return out;
    };
    return picard_driver(free_part, T, tol, grid, params);
}

WaveState reconstruct_w(const WindowSolution& sol, const std::vector<double>& f1,
                        const std::vector<double>& g2, const WaveGrid& grid, double t_origin) {
    const size_t M = sol.v.size() - 1;
    const double T = sol.k * static_cast<double>(M);

    // |d_r|^{-1} d_t v = -sin(T|d_r|) f1 + cos(T|d_r|) g2 - Ktilde(v),
    // with Ktilde = |d_r|^{-1} int_0^T cos((T-tau)|d_r|) N(v(tau)) dtau.
    std::vector<double> imag = sin_mult(f1, T, grid);
    for (auto& v : imag) v = -v;
    const std::vector<double> cg = cos_prop(g2, T, grid);
    for (size_t i = 0; i < imag.size(); ++i) imag[i] += cg[i];

    std::vector<double> F(imag.size(), 0.0);
    for (size_t j = 0; j <= M; ++j) {
        const double weight = ((j == 0 || j == M) ? 0.5 : 1.0) * sol.k;
        const std::vector<double> c =
            cos_prop(cubic_source(sol.v[j], grid), T - sol.k * static_cast<double>(j), grid);
        for (size_t i = 0; i < F.size(); ++i) F[i] += weight * c[i];
    }
    const std::vector<double> Kt = inv_abs_deriv(F, grid);
    for (size_t i = 0; i < imag.size(); ++i) imag[i] -= Kt[i];

    WaveState out;
    out.t = t_origin + T;
    out.grid = grid;
    out.w.resize(imag.size());
    for (size_t i = 0; i < imag.size(); ++i) out.w[i] = {sol.v[M][i], imag[i]};
    return out;
}

FlowTrace flow_L(const WaveState& g, double t_target, double window, const PicardParams& params) {
    FlowTrace trace;
    const double sign = (t_target < 0.0) ? -1.0 : 1.0;
    const double horizon = std::abs(t_target);
    if (!(window > 0.0)) throw std::invalid_argument("flow_L: window must be > 0");

    WaveState cur = g;
    if (sign < 0.0)
        for (auto& z : cur.w) z = std::conj(z);
    const double t0 = g.t;
    cur.t = 0.0;

    auto emit = [&](const WaveState& s) {
        WaveState out = s;
        out.t = t0 + sign * s.t;
        if (sign < 0.0)
            for (auto& z : out.w) z = std::conj(z);
        trace.states.push_back(std::move(out));
    };

    if (horizon == 0.0) {
        emit(cur);
        return trace;
    }

    double advanced = 0.0;
    int guard = 0;
    while (advanced < horizon - 1e-12) {
        if (++guard > 100000) {
            trace.ok = false;
            trace.note = "window guard tripped";
            return trace;
        }
        const double T_req = std::min(window, horizon - advanced);
        try {
            const WindowSolution sol = picard_solve(cur.re(), cur.im(), T_req, params.tol, cur.grid, params);
            const WaveState next = reconstruct_w(sol, cur.re(), cur.im(), cur.grid, cur.t);
            trace.windows.push_back(sol.diag);
            advanced += sol.diag.T;
            cur = next;
            emit(cur);
        } catch (const std::exception& exc) {
            trace.ok = false;
            trace.note = exc.what();
            return trace;
        }
    }
    return trace;
}

std::vector<double> cutoff_linear(const std::vector<double>& g, double lambda, const WaveGrid& grid) {
    std::vector<double> out(g.size(), 0.0);
    const double edge_value = g[static_cast<size_t>(std::min<long>(std::lround(lambda / grid.h()),
                                                                   static_cast<long>(g.size()) - 1))];
    for (size_t i = 0; i < g.size(); ++i) {
        const double r = grid.node(static_cast<int>(i));
        if (r <= lambda)
            out[i] = g[i];
        else if (r <= lambda + 1.0)
            out[i] = edge_value * (lambda + 1.0 - r);
    }
    return out;
}

std::vector<std::complex<double>> cutoff_linear(const std::vector<std::complex<double>>& g, double lambda,
                                                const WaveGrid& grid) {
    std::vector<std::complex<double>> out(g.size(), {0.0, 0.0});
    const std::complex<double> edge_value =
        g[static_cast<size_t>(std::min<long>(std::lround(lambda / grid.h()), static_cast<long>(g.size()) - 1))];
    for (size_t i = 0; i < g.size(); ++i) {
        const double r = grid.node(static_cast<int>(i));
        if (r <= lambda)
            out[i] = g[i];
        else if (r <= lambda + 1.0)
            out[i] = edge_value * (lambda + 1.0 - r);
    }
    return out;
}

void flow_pair(const std::vector<double>& f1_in, const std::vector<double>& f2_in, double t_target,
               double window, const WaveGrid& grid, const PicardParams& params, PropagatorRoute route,
               const PairObserver& observer) {
    if (!(t_target >= 0.0)) throw std::invalid_argument("flow_pair: t_target must be >= 0");
    std::vector<double> f1 = f1_in, f2 = f2_in;
    const double h = grid.h();
    double t = 0.0;
    while (t < t_target - 1e-12) {
        const double T_req = std::min(window, t_target - t);

        WindowSolution sol = [&] {
            if (route == PropagatorRoute::DAlembert) return picard_solve_pair(f1, f2, T_req, params.tol, grid, params);
            // Spectral route: sin((t)|d_r|)/|d_r| f2 by multiplier.
            auto free_part = [&](double tt) {
                std::vector<double> out = apply_multiplier(f1, grid, [tt](double w) { return std::cos(tt * w); });
                if (tt != 0.0) {
                    const std::vector<double> s =
                        apply_multiplier(f2, grid, [tt](double w) { return std::sin(tt * w) / w; });
                    for (size_t i = 0; i < out.size(); ++i) out[i] += s[i];
                }
                return out;
            };
            return picard_driver(free_part, T_req, params.tol, grid, params);
        }();

        const size_t M = sol.v.size() - 1;
        const double T = sol.diag.T;

        // d_t v(T) = d_t[cos f1] + cos(T|d_r|) f2 - int_0^T cos((T-tau)|d_r|) N dtau.
        std::vector<double> vt(f1.size(), 0.0);
        if (route == PropagatorRoute::DAlembert) {
            const double m = T / h;
            const double mr = std::round(m);
            for (size_t i = 0; i < vt.size(); ++i) {
                double d;
                if (std::abs(m - mr) < 1e-9) {
                    const long mi = static_cast<long>(mr);
                    d = 0.5 * (odd_ext_derivative(f1, static_cast<long>(i) + mi, h) -
                               odd_ext_derivative(f1, static_cast<long>(i) - mi, h));
                } else {
                    // interpolate the derivative between node evaluations
                    const long mi = static_cast<long>(std::floor(m));
                    const double frac = m - std::floor(m);
                    const double d0 = 0.5 * (odd_ext_derivative(f1, static_cast<long>(i) + mi, h) -
                                             odd_ext_derivative(f1, static_cast<long>(i) - mi, h));
                    const double d1 = 0.5 * (odd_ext_derivative(f1, static_cast<long>(i) + mi + 1, h) -
                                             odd_ext_derivative(f1, static_cast<long>(i) - mi - 1, h));
                    d = (1.0 - frac) * d0 + frac * d1;
                }
                vt[i] = d;
            }
            const std::vector<double> c2 = cos_prop(f2, T, grid);
            for (size_t i = 0; i < vt.size(); ++i) vt[i] += c2[i];
            for (size_t j = 0; j <= M; ++j) {
                const double weight = ((j == 0 || j == M) ? 0.5 : 1.0) * sol.k;
                const std::vector<double> c =
                    cos_prop(cubic_source(sol.v[j], grid), T - sol.k * static_cast<double>(j), grid);
                for (size_t i = 0; i < vt.size(); ++i) vt[i] -= weight * c[i];
            }
        } else {
            vt = apply_multiplier(f1, grid, [T](double w) { return -w * std::sin(T * w); });
            const std::vector<double> c2 = apply_multiplier(f2, grid, [T](double w) { return std::cos(T * w); });
            for (size_t i = 0; i < vt.size(); ++i) vt[i] += c2[i];
            std::vector<double> F(vt.size(), 0.0);
            for (size_t j = 0; j <= M; ++j) {
                const double weight = ((j == 0 || j == M) ? 0.5 : 1.0) * sol.k;
                const double tt = T - sol.k * static_cast<double>(j);
                const std::vector<double> c = apply_multiplier(cubic_source(sol.v[j], grid), grid,
                                                               [tt](double w) { return std::cos(tt * w); });
                for (size_t i = 0; i < F.size(); ++i) F[i] += weight * c[i];
            }
            for (size_t i = 0; i < vt.size(); ++i) vt[i] -= F[i];
        }

        f1 = sol.v[M];
        f2 = std::move(vt);
        t += T;
        if (observer) observer(t, f1, f2);
    }
}

FsopResult fsop_check(const std::vector<double>& f1, const std::vector<double>& f2, double a, double b,
                      double window_R, double t, const WaveGrid& grid, const PicardParams& params,
                      PropagatorRoute route) {
    if (!(a > window_R + std::abs(t)))
        throw std::invalid_argument("fsop_check: need a > window_R + |t| (domain of dependence margin)");
    if (!(b > a) || b > grid.L)
        throw std::invalid_argument("fsop_check: bump support must sit inside (a, L]");

    auto bump = [&](double r) {
        const double u = (2.0 * r - a - b) / (b - a);
        return (std::abs(u) < 1.0) ? std::exp(-1.0 / (1.0 - u * u)) : 0.0;
    };
    std::vector<double> pf1 = f1, pf2 = f2;
    for (int i = 0; i < grid.n; ++i) {
        const double r = grid.node(i);
        pf1[static_cast<size_t>(i)] += 0.2 * bump(r);
        pf2[static_cast<size_t>(i)] += 0.1 * bump(r);
    }

    const size_t guard = static_cast<size_t>(std::floor(window_R / grid.h())) + 1;
    std::vector<std::vector<double>> base_states;
    flow_pair(f1, f2, std::abs(t), std::min(0.25, std::abs(t)), grid, params, route,
              [&](double, const std::vector<double>& v, const std::vector<double>&) { base_states.push_back(v); });
    size_t idx = 0;
    FsopResult res;
    flow_pair(pf1, pf2, std::abs(t), std::min(0.25, std::abs(t)), grid, params, route,
              [&](double, const std::vector<double>& v, const std::vector<double>&) {
                  const auto& base = base_states[idx++];
                  for (size_t i = 0; i < guard && i < v.size(); ++i)
                      res.max_deviation = std::max(res.max_deviation, std::abs(v[i] - base[i]));
              });
    return res;
}

FlowTrace flow_inf(const std::vector<double>& r_nodes, const std::vector<std::complex<double>>& values,
                   double t_target, double window_R, int cells_pow2, double window,
                   const PicardParams& params) {
    if (r_nodes.empty() || r_nodes.size() != values.size())
        throw std::invalid_argument("flow_inf: bad datum");
    const double R_prime = r_nodes.back();
    if (!(R_prime >= window_R + 2.0 * std::abs(t_target) + 2.0))
        throw std::invalid_argument("flow_inf: need R' >= window_R + 2|t| + 2");

    double L = 2.0;
    while (L < 2.0 * (R_prime + std::abs(t_target))) L *= 2.0;
    const WaveGrid grid = make_wave_grid(L, cells_pow2);

    std::vector<std::complex<double>> datum(static_cast<size_t>(grid.n), {0.0, 0.0});
    for (int i = 0; i < grid.n; ++i) {
        const double r = grid.node(i);
        if (r > R_prime) break;
        // piecewise-linear read of the sample
        const auto it = std::upper_bound(r_nodes.begin(), r_nodes.end(), r);
        if (it == r_nodes.begin()) {
            datum[static_cast<size_t>(i)] = values.front();
        } else if (it == r_nodes.end()) {
            datum[static_cast<size_t>(i)] = values.back();
        } else {
            const size_t hi = static_cast<size_t>(it - r_nodes.begin());
            const double frac = (r - r_nodes[hi - 1]) / (r_nodes[hi] - r_nodes[hi - 1]);
            datum[static_cast<size_t>(i)] = values[hi - 1] * (1.0 - frac) + values[hi] * frac;
        }
    }
    WaveState g;
    g.t = 0.0;
    g.grid = grid;
    g.w = cutoff_linear(datum, R_prime - 1.0, grid);

    FlowTrace full = flow_L(g, t_target, window, params);

    // Restrict every state to [0, window_R].
    const int keep = static_cast<int>(std::floor(window_R / grid.h())) + 1;
    for (auto& s : full.states) {
        s.w.resize(static_cast<size_t>(keep));
        s.grid.L = grid.h() * static_cast<double>(keep - 1);
        s.grid.n = keep;
    }
    return full;
}

double flow_inf_embedding_deviation(const std::vector<double>& f1, const std::vector<double>& f2,
                                    double R_prime, double window_R, double t, double h, double pad,
                                    const PicardParams& params) {
    const double L1 = std::ceil(2.0 * (R_prime + std::abs(t)));
    auto run = [&](double L) {
        WaveGrid grid;
        grid.L = L;
        grid.n = static_cast<int>(std::lround(L / h)) + 1;
        std::vector<double> a(static_cast<size_t>(grid.n), 0.0), b(static_cast<size_t>(grid.n), 0.0);
        for (int i = 0; i < grid.n && grid.node(i) <= R_prime + 1e-12; ++i) {
            const size_t src = static_cast<size_t>(i);
            if (src < f1.size()) {
                a[static_cast<size_t>(i)] = f1[src];
                b[static_cast<size_t>(i)] = f2[src];
            }
        }
        a = cutoff_linear(a, R_prime - 1.0, grid);
        b = cutoff_linear(b, R_prime - 1.0, grid);
        std::vector<std::vector<double>> states;
        flow_pair(a, b, std::abs(t), std::min(0.25, std::abs(t)), grid, params, PropagatorRoute::DAlembert,
                  [&](double, const std::vector<double>& v, const std::vector<double>& vt) {
                      states.push_back(v);
                      states.push_back(vt);
                  });
        return states;
    };
    const auto s1 = run(L1);
    const auto s2 = run(L1 + pad);
    const size_t keep = static_cast<size_t>(std::floor(window_R / h)) + 1;
    double dev = 0.0;
    for (size_t j = 0; j < s1.size(); ++j)
        for (size_t i = 0; i < keep; ++i) dev = std::max(dev, std::abs(s1[j][i] - s2[j][i]));
    return dev;
}

double hamiltonian(const std::vector<double>& u, const std::vector<double>& u_t,
                   const std::vector<double>& r_nodes) {
    const size_t n = r_nodes.size();
    if (u.size() != n || u_t.size() != n) throw std::invalid_argument("hamiltonian: width mismatch");
    std::vector<double> integrand(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        double du;
        if (i == 0)
            du = (u[1] - u[0]) / (r_nodes[1] - r_nodes[0]);
        else if (i + 1 == n)
            du = (u[i] - u[i - 1]) / (r_nodes[i] - r_nodes[i - 1]);
        else
            du = (u[i + 1] - u[i - 1]) / (r_nodes[i + 1] - r_nodes[i - 1]);
        const double r = r_nodes[i];
        integrand[i] = (0.25 * u[i] * u[i] * u[i] * u[i] + 0.5 * du * du + 0.5 * u_t[i] * u_t[i]) * r * r;
    }
    double sum = 0.0;
    for (size_t i = 0; i + 1 < n; ++i) sum += 0.5 * (integrand[i] + integrand[i + 1]) * (r_nodes[i + 1] - r_nodes[i]);
    return sum;
}

std::string serialize_flow_trace(const FlowTrace& trace) {
    std::string out = "gibbsflow.flowtrace.v1\n";
    out += std::string("status ") + (trace.ok ? "ok" : "failed") + "\n";
    if (!trace.note.empty()) out += "# " + trace.note + "\n";
    out += "windows " + std::to_string(trace.windows.size()) + "\n";
    for (const auto& w : trace.windows)
        out += "window " + format_hex(w.T) + " " + format_hex(w.k) + " " + std::to_string(w.iterations) + " " +
               format_hex(w.last_ratio) + " " + format_hex(w.residual) + " " + std::to_string(w.halvings) + "\n";
    out += "states " + std::to_string(trace.states.size()) + "\n";
    for (const auto& s : trace.states) {
        out += "state " + format_hex(s.t) + " " + format_hex(s.grid.L) + " " + std::to_string(s.grid.n) + "\n";
        std::string line = "w";
        for (const auto& z : s.w) {
            line += ' ';
            line += format_hex(z.real());
            line += ' ';
            line += format_hex(z.imag());
        }
        out += line + "\n";
    }
    out += "end\n";
    return out;
}

FlowTrace parse_flow_trace(const std::string& text) {
    LineReader reader(text);
    std::vector<std::string> tok;
    if (!reader.next(tok) || tok[0] != "gibbsflow.flowtrace.v1") reader.fail("bad flow trace header");
    FlowTrace trace;
    while (reader.next(tok)) {
        if (tok[0] == "status") {
            trace.ok = tok.at(1) == "ok";
        } else if (tok[0] == "windows" || tok[0] == "states") {
            // counts are implied by the records
        } else if (tok[0] == "window") {
            WindowDiag w;
            w.T = parse_double(tok.at(1));
            w.k = parse_double(tok.at(2));
            w.iterations = std::stoi(tok.at(3));
            w.last_ratio = parse_double(tok.at(4));
            w.residual = parse_double(tok.at(5));
            w.halvings = std::stoi(tok.at(6));
            trace.windows.push_back(w);
        } else if (tok[0] == "state") {
            WaveState s;
            s.t = parse_double(tok.at(1));
            s.grid.L = parse_double(tok.at(2));
            s.grid.n = std::stoi(tok.at(3));
            trace.states.push_back(std::move(s));
        } else if (tok[0] == "w") {
            if (trace.states.empty()) reader.fail("w before state");
            auto& s = trace.states.back();
            for (size_t i = 1; i + 1 < tok.size(); i += 2)
                s.w.push_back({parse_double(tok[i]), parse_double(tok[i + 1])});
            if (static_cast<int>(s.w.size()) != s.grid.n) reader.fail("state width mismatch");
        } else if (tok[0] == "end") {
            break;
        } else {
            reader.fail("unknown key: " + tok[0]);
        }
    }
    return trace;
}

}  // namespace gibbsflow
