#include "invamp/shock_engine.hpp"

#include "invamp/rng.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace invamp {

Matrix build_covariance(const Vector& sigma, double varrho) {
    const auto J = sigma.size();
    if (J == 0) throw ParameterError("empty sigma vector");
    if ((sigma.array() < 0).any() || !sigma.allFinite()) throw ParameterError("sigma must be nonnegative");
    if (varrho > 1.0) throw ParameterError("varrho above 1");
    if (J > 1 && varrho < -1.0 / static_cast<double>(J - 1) - 1e-15) {
        std::ostringstream os;
        os << "varrho " << varrho << " below the PSD bound " << -1.0 / static_cast<double>(J - 1);
        throw ParameterError(os.str());
    }
    Matrix S(J, J);
    for (Eigen::Index a = 0; a < J; ++a)
        for (Eigen::Index b = 0; b < J; ++b) S(a, b) = a == b ? sigma(a) * sigma(a) : varrho * sigma(a) * sigma(b);
    return S;
}

Matrix covariance_factor(const Vector& sigma, double varrho) {
    Matrix S = build_covariance(sigma, varrho);
    const auto J = sigma.size();
    if (varrho == 1.0) {
        Matrix F = Matrix::Zero(J, J);
        F.col(0) = sigma;
        return F;
    }
    Eigen::LLT<Matrix> llt(S);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    Eigen::SelfAdjointEigenSolver<Matrix> es(S);
    Vector ev = es.eigenvalues().cwiseMax(0.0);
    if (es.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, S.diagonal().maxCoeff()))
        throw ParameterError("covariance matrix is not positive semidefinite");
    return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

DemandPaths draw_demand(const DemandProcess& proc, std::size_t T, std::size_t n_paths, int threads) {
    const auto J = proc.Dbar.size();
    if (T < 2) throw ParameterError("horizon must be at least 2");
    if (proc.sigma.size() != J) throw ParameterError("sigma and Dbar sizes differ");
    if ((proc.Dbar.array() <= 0).any()) throw ParameterError("Dbar must be positive");
    if (!(proc.rho > -1 && proc.rho < 1)) throw ParameterError("rho must lie in (-1,1)");
    Matrix Fc = covariance_factor(proc.sigma, proc.varrho);
    DemandPaths out;
    out.D.resize(n_paths);
    std::vector<std::size_t> rej(n_paths, 0);
    parallel_for(n_paths, threads, [&](std::size_t p) {
        std::vector<Stream> st;
        st.reserve(J);
        for (Eigen::Index k = 0; k < J; ++k) st.emplace_back(proc.seed, p, static_cast<std::uint64_t>(k));
        Matrix D(J, T + 1);
        D.col(0) = proc.Dbar;
        Vector z(J);
        for (std::size_t t = 1; t <= T; ++t) {
            for (int attempt = 0;; ++attempt) {
                if (attempt > 1000) throw ParameterError("demand stays non-positive after 1000 redraws");
                for (Eigen::Index k = 0; k < J; ++k) z(k) = st[k].normal();
                Vector next = proc.Dbar + proc.rho * (D.col(t - 1) - proc.Dbar) + Fc * z;
                if ((next.array() > 0).all()) {
                    D.col(t) = next;
                    break;
                }
                ++rej[p];
            }
        }
        out.D[p] = std::move(D);
    });
    for (auto r : rej) out.rejected += r;
    return out;
}

Matrix destination_growth(const Matrix& D, GrowthKind kind) {
    const auto T = D.cols() - 1;
    if (T < 1) throw ParameterError("need at least two demand levels");
    Matrix eta(D.rows(), T);
    for (Eigen::Index t = 0; t < T; ++t)
        for (Eigen::Index j = 0; j < D.rows(); ++j)
            eta(j, t) = kind == GrowthKind::arithmetic ? (D(j, t + 1) - D(j, t)) / D(j, t)
                                                       : std::log(D(j, t + 1) / D(j, t));
    return eta;
}

ShockPanel make_shock_panel(const NetworkModel& m, const OmegaParams& p, const Matrix& D, GrowthKind kind) {
    ShockPanel sp;
    sp.D = D;
    sp.eta_dest = destination_growth(D, kind);
    auto xi = exposure_shares(m);
    sp.eta_ind = shift_share(xi.value, sp.eta_dest);
    sp.upsilon = Matrix(m.n(), sp.eta_dest.cols());
    for (Eigen::Index t = 0; t < sp.eta_dest.cols(); ++t)
        sp.upsilon.col(t) = weighted_shock(m, p, Vector(sp.eta_dest.col(t)));
    return sp;
}

ConsumptionPanel synthesize_consumption_panel(const std::vector<SectorLabel>& cells, const Matrix& shifters,
                                              double noise_sd, std::uint64_t seed, const Matrix* initial_log) {
    if (!shifters.allFinite()) throw ParameterError("shifters must be finite");
    if (noise_sd < 0) throw ParameterError("noise sd must be nonnegative");
    ConsumptionPanel p;
    std::map<std::string, std::size_t> oi, ii;
    for (const auto& c : cells) {
        auto o = oi.emplace(c.country, oi.size()).first->second;
        auto r = ii.emplace(c.industry, ii.size()).first->second;
        p.origin.push_back(o);
        p.industry.push_back(r);
    }
    p.n_origins = oi.size();
    p.n_industries = ii.size();
    p.J = static_cast<std::size_t>(shifters.rows());
    p.T = static_cast<std::size_t>(shifters.cols());
    p.noise_sd = noise_sd;
    p.shifters = shifters;
    p.logF.assign(cells.size() * p.J * (p.T + 1), 0.0);
    if (initial_log && (initial_log->rows() != static_cast<Eigen::Index>(cells.size()) ||
                        initial_log->cols() != static_cast<Eigen::Index>(p.J)))
        throw ParameterError("initial log levels must be cells x J");
    for (std::size_t c = 0; c < cells.size(); ++c)
        for (std::size_t j = 0; j < p.J; ++j) {
            Stream st(seed, c, j);
            double v = initial_log ? (*initial_log)(c, j) : 0.0;
            p.at(c, j, 0) = v;
            for (std::size_t t = 0; t < p.T; ++t) {
                double nu = noise_sd > 0 ? noise_sd * st.normal() : 0.0;
                v += shifters(j, t) + nu;
                p.at(c, j, t + 1) = v;
            }
        }
    return p;
}

Matrix estimate_shifters(const ConsumptionPanel& panel, std::size_t origin, std::size_t industry) {
    std::vector<std::size_t> keep;
    for (std::size_t c = 0; c < panel.n_cells(); ++c)
        if (panel.origin[c] != origin && panel.industry[c] != industry) keep.push_back(c);
    if (keep.size() < 2)
        throw EstimationError("leave-out set for origin " + std::to_string(origin) + ", industry " +
                              std::to_string(industry) + " has fewer than 2 cells");
    Matrix eta = Matrix::Zero(panel.J, panel.T);
    for (std::size_t j = 0; j < panel.J; ++j)
        for (std::size_t t = 0; t < panel.T; ++t) {
            double s = 0.0;
            for (auto c : keep) s += panel.dlog(c, j, t);
            eta(j, t) = s / static_cast<double>(keep.size());
        }
    return eta;
}

std::vector<Matrix> estimate_all_shifters(const ConsumptionPanel& panel) {
    std::map<std::pair<std::size_t, std::size_t>, Matrix> cache;
    std::vector<Matrix> out;
    for (std::size_t c = 0; c < panel.n_cells(); ++c) {
        auto key = std::make_pair(panel.origin[c], panel.industry[c]);
        auto it = cache.find(key);
        if (it == cache.end()) it = cache.emplace(key, estimate_shifters(panel, key.first, key.second)).first;
        out.push_back(it->second);
    }
    return out;
}

namespace {
void check_shares(const Matrix& xi) {
    for (Eigen::Index r = 0; r < xi.rows(); ++r)
        if (xi.row(r).allFinite() && std::abs(xi.row(r).sum() - 1.0) > 1e-9)
            throw ValidationError("share row " + std::to_string(r) + " does not sum to one");
}
}  // namespace

Matrix shift_share(const Matrix& xi, const Matrix& eta_dest) {
    if (xi.cols() != eta_dest.rows())
        throw ValidationError("shape mismatch: shares have " + std::to_string(xi.cols()) +
                              " destinations, shifters have " + std::to_string(eta_dest.rows()));
    check_shares(xi);
    return xi * eta_dest;
}

Matrix shift_share(const Matrix& xi, const std::vector<Matrix>& eta_by_sector) {
    if (static_cast<Eigen::Index>(eta_by_sector.size()) != xi.rows())
        throw ValidationError("need one shifter matrix per sector");
    check_shares(xi);
    if (eta_by_sector.empty()) return Matrix(0, 0);
    const auto T = eta_by_sector.front().cols();
    Matrix out(xi.rows(), T);
    for (Eigen::Index r = 0; r < xi.rows(); ++r) {
        const auto& e = eta_by_sector[r];
        if (e.rows() != xi.cols() || e.cols() != T) throw ValidationError("shifter matrix shape mismatch");
        out.row(r) = xi.row(r) * e;
    }
    return out;
}

Vector shift_share_sd(const Matrix& xi, const Vector& sigma, double varrho) {
    Matrix S = build_covariance(sigma, varrho);
    Vector sd(xi.rows());
    for (Eigen::Index r = 0; r < xi.rows(); ++r) {
        double v = (xi.row(r) * S * xi.row(r).transpose())(0);
        sd(r) = std::sqrt(std::max(v, 0.0));
    }
    return sd;
}

SlopeFit fit_line(const Vector& x, const Vector& y) {
    double n = 0, sx = 0, sy = 0;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (std::isfinite(x(i)) && std::isfinite(y(i))) {
            n += 1;
            sx += x(i);
            sy += y(i);
        }
    if (n < 2) throw EstimationError("need at least two points for a line fit");
    double mx = sx / n, my = sy / n, sxx = 0, sxy = 0;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (std::isfinite(x(i)) && std::isfinite(y(i))) {
            sxx += (x(i) - mx) * (x(i) - mx);
            sxy += (x(i) - mx) * (y(i) - my);
        }
    if (sxx <= 0) throw EstimationError("regressor has no variation");
    SlopeFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    return f;
}

double volatility_slope(const NetworkModel& m, const Vector& sigma, double varrho, const CalibrationOptions& opt) {
    auto xi = exposure_shares(m).value;
    Vector U = upstreamness(m).value;
    Vector sd;
    if (opt.method == CalibrationMethod::analytic) {
        sd = shift_share_sd(xi, sigma, varrho);
    } else {
        Matrix Fc = covariance_factor(sigma, varrho);
        const auto J = sigma.size();
        sd = Vector::Zero(xi.rows());
        for (std::size_t s = 0; s < opt.n_sims; ++s) {
            Matrix z(J, opt.T);
            for (Eigen::Index k = 0; k < J; ++k) {
                Stream st(opt.seed, s, static_cast<std::uint64_t>(k));
                for (std::size_t t = 0; t < opt.T; ++t) z(k, t) = st.normal();
            }
            Matrix e = xi * (Fc * z);
            for (Eigen::Index r = 0; r < e.rows(); ++r) {
                double mu = e.row(r).mean();
                double v = (e.row(r).array() - mu).square().sum() / static_cast<double>(opt.T - 1);
                sd(r) += std::sqrt(v);
            }
        }
        sd /= static_cast<double>(opt.n_sims);
    }
    return fit_line(U, sd).slope;
}

CalibrationResult calibrate_varrho(const NetworkModel& m, const Vector& sigma, double target,
                                   const CalibrationOptions& opt) {
    auto f = [&](double v) { return volatility_slope(m, sigma, v, opt); };
    CalibrationResult res;
    // monotonicity scan
    double prev = f(opt.lo);
    int dir = 0;
    for (int k = 1; k <= 10; ++k) {
        double cur = f(opt.lo + (opt.hi - opt.lo) * k / 10.0);
        int d = cur > prev ? 1 : (cur < prev ? -1 : 0);
        if (d != 0) {
            if (dir != 0 && d != dir) res.monotone = false;
            dir = d;
        }
        prev = cur;
    }
    double lo = opt.lo, hi = opt.hi;
    double flo = f(lo) - target, fhi = f(hi) - target;
    if (std::abs(flo) <= opt.tol) {
        res.varrho = lo;
        res.slope = flo + target;
        return res;
    }
    if (std::abs(fhi) <= opt.tol) {
        res.varrho = hi;
        res.slope = fhi + target;
        return res;
    }
    if (flo * fhi > 0) {
        std::ostringstream os;
        os << "target slope " << target << " outside achievable bracket [" << std::min(flo, fhi) + target << ", "
           << std::max(flo, fhi) + target << "] over varrho in [" << lo << ", " << hi << "]";
        throw CalibrationError(os.str());
    }
    for (int it = 1; it <= opt.max_iter; ++it) {
        double mid = 0.5 * (lo + hi);
        double fm = f(mid) - target;
        res.iterations = it;
        res.varrho = mid;
        res.slope = fm + target;
        if (std::abs(fm) <= opt.tol) return res;
        if ((fm < 0) == (flo < 0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    throw CalibrationError("bisection did not reach the target slope within the iteration cap");
}

}  // namespace invamp
