#include "gibbsflow/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gibbsflow/io.hpp"
#include "gibbsflow/tridiag.hpp"

namespace gibbsflow {

namespace {

// Interior tridiagonal representation of H with Dirichlet walls.
struct DiscreteH {
    std::vector<double> diag;
    double off = 0.0;
    double h = 0.0;

    explicit DiscreteH(const Grid1D& grid) {
        h = grid.spacing();
        off = -0.5 / (h * h);
        diag.resize(static_cast<size_t>(grid.n - 2));
        for (int i = 1; i < grid.n - 1; ++i) {
            const double x = grid.node(i);
            diag[static_cast<size_t>(i - 1)] = 1.0 / (h * h) + 0.25 * x * x * x * x;
        }
    }

    /// Number of eigenvalues strictly below lambda (Sturm/LDL sign count).
    int count_below(double lambda) const {
        int count = 0;
        double d = diag[0] - lambda;
        if (d < 0.0) ++count;
        const double b2 = off * off;
        for (size_t i = 1; i < diag.size(); ++i) {
            if (d == 0.0) d = 1e-300;
            d = diag[i] - lambda - b2 / d;
            if (d < 0.0) ++count;
        }
        return count;
    }

    void apply(const std::vector<double>& v, std::vector<double>& out) const {
        const size_t m = diag.size();
        out.resize(m);
        for (size_t i = 0; i < m; ++i) {
            double s = diag[i] * v[i];
            if (i > 0) s += off * v[i - 1];
            if (i + 1 < m) s += off * v[i + 1];
            out[i] = s;
        }
    }
};

double bisect_eigenvalue(const DiscreteH& H, int k) {
    double lo = 0.0;
    double hi = 2.0;
    while (H.count_below(hi) < k + 1) hi *= 2.0;
    for (int it = 0; it < 120; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (H.count_below(mid) >= k + 1)
            hi = mid;
        else
            lo = mid;
        if (hi - lo < 1e-13 * std::max(1.0, std::abs(hi))) break;
    }
    return 0.5 * (lo + hi);
}

// Inverse iteration at the bisection shift; returns the interior eigenvector
// and sharpens lambda by a final Rayleigh quotient.
std::vector<double> inverse_iteration(const DiscreteH& H, double& lambda,
                                      const std::vector<std::vector<double>>& previous, double h) {
    const size_t m = H.diag.size();
    std::vector<double> a(m, H.off), b(m), c(m, H.off), v(m), w;
    TridiagWorkspace tw;

    v.assign(m, 0.0);
    // Deterministic pseudo-random start vector avoids accidental orthogonality.
    uint64_t state = 0x243f6a8885a308d3ULL ^ static_cast<uint64_t>(previous.size() * 0x9e3779b97f4a7c15ULL);
    for (size_t i = 0; i < m; ++i) {
        state = state * 6364136223846793005ULL + 1442695040888963407ULL;
        v[i] = static_cast<double>(static_cast<int64_t>(state >> 11)) * 0x1.0p-62;
    }

    const double shift = lambda * (1.0 + 1e-12) + 1e-13;
    for (size_t i = 0; i < m; ++i) b[i] = H.diag[i] - shift;

    for (int it = 0; it < 6; ++it) {
        // Project out already-converged directions (cheap, K is small).
        for (const auto& p : previous) {
            double dot = 0.0;
            for (size_t i = 0; i < m; ++i) dot += v[i] * p[i + 1];  // previous stores full-grid arrays
            dot *= h;
            for (size_t i = 0; i < m; ++i) v[i] -= dot * p[i + 1];
        }
        tw.solve(a, b, c, v, w);
        double norm = 0.0;
        for (double x : w) norm += x * x;
        norm = std::sqrt(norm * h);
        if (!(norm > 0.0) || !std::isfinite(norm)) throw std::runtime_error("inverse iteration breakdown");
        for (size_t i = 0; i < m; ++i) v[i] = w[i] / norm;
    }

    std::vector<double> Hv;
    H.apply(v, Hv);
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < m; ++i) {
        num += v[i] * Hv[i];
        den += v[i] * v[i];
    }
    lambda = num / den;
    return v;
}

}  // namespace

Grid1D default_spectrum_grid() {
    const double h = 1.0 / 256.0;
    const int half = static_cast<int>(std::lround(12.0 / h));
    return Grid1D(-12.0, 12.0, 2 * half + 1);
}

SpectralBasis eigenpairs(int K, const Grid1D& x_grid) {
    if (K < 0) throw std::invalid_argument("eigenpairs: K must be >= 0");
    SpectralBasis basis;
    basis.x_grid = x_grid;
    const DiscreteH H(x_grid);
    const double h = x_grid.spacing();
    const size_t m = H.diag.size();

    for (int k = 0; k <= K; ++k) {
        double lambda = bisect_eigenvalue(H, k);
        std::vector<double> v = inverse_iteration(H, lambda, basis.eigenfunctions, h);

        // Deterministic sign: first node reaching half the max amplitude is positive.
        double amax = 0.0;
        for (double x : v) amax = std::max(amax, std::abs(x));
        for (size_t i = 0; i < m; ++i) {
            if (std::abs(v[i]) > 0.5 * amax) {
                if (v[i] < 0.0)
                    for (auto& x : v) x = -x;
                break;
            }
        }

        std::vector<double> Hv;
        H.apply(v, Hv);
        double res = 0.0;
        for (size_t i = 0; i < m; ++i) {
            const double r = Hv[i] - lambda * v[i];
            res += r * r;
        }
        basis.residuals.push_back(std::sqrt(res * h));
        basis.eigenvalues.push_back(lambda);

        std::vector<double> full(static_cast<size_t>(x_grid.n), 0.0);
        std::copy(v.begin(), v.end(), full.begin() + 1);
        basis.eigenfunctions.push_back(std::move(full));
    }

    // Wall decay (post hoc): the grid must be wide enough for the top state.
    for (int k = 0; k <= K; ++k) {
        const auto& psi = basis.eigenfunctions[static_cast<size_t>(k)];
        const double edge = std::max(std::abs(psi[1]), std::abs(psi[static_cast<size_t>(x_grid.n) - 2]));
        if (edge > 1e-12)
            throw std::runtime_error("eigenpairs: grid too small, psi_" + std::to_string(k) +
                                     " = " + format_g17(edge) + " at the walls");
    }
    return basis;
}

double semigroup_kernel(const SpectralBasis& basis, double tau, double x, double y) {
    if (!(tau > 0.0)) throw std::invalid_argument("semigroup_kernel: tau must be > 0");
    const double lam_top = basis.eigenvalues.back();
    const double tail = std::exp(-tau * lam_top) * std::sqrt(lam_top);
    if (tail >= 1e-14) {
        // Estimate the lambda needed from the k + 1/4 lower bound.
        double lam_req = lam_top;
        for (int it = 0; it < 4; ++it) lam_req = (std::log(std::sqrt(lam_req)) + 32.24) / tau;
        const int k_req = static_cast<int>(std::ceil(lam_req - 0.25));
        throw std::runtime_error("semigroup_kernel: tau too small for available modes, need K ~ " +
                                 std::to_string(k_req) + " (tail bound " + format_g17(tail) + ")");
    }
    double sum = 0.0;
    for (int k = basis.count() - 1; k >= 0; --k)  // ascending contributions
        sum += std::exp(-tau * basis.lambda(k)) * basis.psi(k, x) * basis.psi(k, y);
    return sum;
}

double ground_state_overlap(const SpectralBasis& basis, const std::vector<double>& f) {
    if (static_cast<int>(f.size()) != basis.x_grid.n)
        throw std::invalid_argument("ground_state_overlap: grid mismatch");
    const auto& psi0 = basis.eigenfunctions.front();
    std::vector<double> prod(f.size());
    for (size_t i = 0; i < f.size(); ++i) prod[i] = f[i] * psi0[i];
    return trapezoid(prod, basis.x_grid.spacing());
}

std::vector<double> ground_state_perp(const SpectralBasis& basis, const std::vector<double>& f) {
    const double c = ground_state_overlap(basis, f);
    const auto& psi0 = basis.eigenfunctions.front();
    std::vector<double> out(f.size());
    for (size_t i = 0; i < f.size(); ++i) out[i] = f[i] - c * psi0[i];
    return out;
}

double quartic_ground_energy_shooting() {
    // -u'' + y^4 u = E u, even parity, shoot to y_max and bisect on the sign
    // of u(y_max); the growing mode makes the sign a clean node counter.
    const double y_max = 6.0;
    const double step = 1e-4;
    auto shoot_sign = [&](double E) {
        double u = 1.0, up = 0.0;
        const long n = std::lround(y_max / step);
        auto rhs = [&](double y, double uu) { return (y * y * y * y - E) * uu; };
        double y = 0.0;
        for (long i = 0; i < n; ++i) {
            // RK4 on (u, u').
            const double k1u = up, k1p = rhs(y, u);
            const double k2u = up + 0.5 * step * k1p, k2p = rhs(y + 0.5 * step, u + 0.5 * step * k1u);
            const double k3u = up + 0.5 * step * k2p, k3p = rhs(y + 0.5 * step, u + 0.5 * step * k2u);
            const double k4u = up + step * k3p, k4p = rhs(y + step, u + step * k3u);
            u += step / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
            up += step / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
            y += step;
            const double mag = std::max(std::abs(u), std::abs(up));
            if (mag > 1e100) {
                u /= mag;
                up /= mag;
            }
        }
        return u;
    };
    double lo = 0.5, hi = 2.0;
    if (!(shoot_sign(lo) > 0.0) || !(shoot_sign(hi) < 0.0))
        throw std::runtime_error("shooting bracket failed");
    for (int it = 0; it < 64; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (shoot_sign(mid) > 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

SpectrumSelfTest spectrum_self_test() {
    SpectrumSelfTest t;
    t.lambda0_shooting = std::pow(2.0, -4.0 / 3.0) * quartic_ground_energy_shooting();

    const double h = 1.0 / 128.0;
    auto lambda0_at = [](double hh) {
        const int half = static_cast<int>(std::lround(12.0 / hh));
        const Grid1D g(-12.0, 12.0, 2 * half + 1);
        const DiscreteH H(g);
        double lam = bisect_eigenvalue(H, 0);
        SpectralBasis scratch;
        scratch.x_grid = g;
        std::vector<std::vector<double>> none;
        inverse_iteration(H, lam, none, g.spacing());
        return lam;
    };
    const double l_h = lambda0_at(h);
    const double l_2h = lambda0_at(2.0 * h);
    t.lambda0_richardson = (4.0 * l_h - l_2h) / 3.0;
    t.disagreement = std::abs(t.lambda0_richardson - t.lambda0_shooting) / t.lambda0_shooting;
    t.ok = t.disagreement < 1e-6;
    return t;
}

std::string serialize_basis(const SpectralBasis& basis) {
    std::string out = "gibbsflow.basis.v1\n";
    out += "grid " + format_hex(basis.x_grid.lo) + " " + format_hex(basis.x_grid.hi) + " " +
           std::to_string(basis.x_grid.n) + "\n";
    out += "modes " + std::to_string(basis.count()) + "\n";
    for (int k = 0; k < basis.count(); ++k) {
        out += "lambda " + format_hex(basis.lambda(k)) + " residual " +
               format_hex(basis.residuals[static_cast<size_t>(k)]) + "\n";
        std::string line = "psi";
        for (double v : basis.eigenfunctions[static_cast<size_t>(k)]) {
            line += ' ';
            line += format_hex(v);
        }
        out += line + "\n";
    }
    out += "end\n";
    return out;
}

SpectralBasis parse_basis(const std::string& text) {
    LineReader reader(text);
    std::vector<std::string> tok;
    if (!reader.next(tok) || tok[0] != "gibbsflow.basis.v1") reader.fail("bad basis artifact header");

    SpectralBasis b;
    int modes = 0;
    while (reader.next(tok)) {
        if (tok[0] == "grid") {
            b.x_grid = Grid1D(parse_double(tok.at(1)), parse_double(tok.at(2)), std::stoi(tok.at(3)));
        } else if (tok[0] == "modes") {
            modes = std::stoi(tok.at(1));
        } else if (tok[0] == "lambda") {
            b.eigenvalues.push_back(parse_double(tok.at(1)));
            b.residuals.push_back(parse_double(tok.at(3)));
        } else if (tok[0] == "psi") {
            std::vector<double> v;
            v.reserve(tok.size() - 1);
            for (size_t i = 1; i < tok.size(); ++i) v.push_back(parse_double(tok[i]));
            if (static_cast<int>(v.size()) != b.x_grid.n) reader.fail("psi width mismatch");
            b.eigenfunctions.push_back(std::move(v));
        } else if (tok[0] == "end") {
            break;
        } else {
            reader.fail("unknown key: " + tok[0]);
        }
    }
    if (b.count() != modes || static_cast<int>(b.eigenfunctions.size()) != modes)
        throw std::runtime_error("basis artifact: mode count mismatch");

    // Re-validate invariants on load.
    const double h = b.x_grid.spacing();
    for (int k = 0; k < b.count(); ++k) {
        if (k > 0 && !(b.lambda(k) > b.lambda(k - 1))) throw std::runtime_error("basis: eigenvalues not increasing");
        if (b.lambda(k) < static_cast<double>(k) + 0.25) throw std::runtime_error("basis: k + 1/4 bound violated");
        for (int j = 0; j <= k; ++j) {
            double dot = 0.0;
            const auto& pk = b.eigenfunctions[static_cast<size_t>(k)];
            const auto& pj = b.eigenfunctions[static_cast<size_t>(j)];
            for (size_t i = 0; i < pk.size(); ++i) dot += pk[i] * pj[i];
            dot *= h;
            const double target = (j == k) ? 1.0 : 0.0;
            if (std::abs(dot - target) > 1e-8) throw std::runtime_error("basis: orthonormality violated on load");
        }
    }
    for (double v : b.eigenfunctions.front())
        if (v < -1e-12) throw std::runtime_error("basis: psi_0 not positive");
    return b;
}

}  // namespace gibbsflow
