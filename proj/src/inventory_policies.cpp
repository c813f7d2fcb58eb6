#include "invamp/inventory_policies.hpp"

#include "invamp/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>

namespace invamp {

double lq_policy(const LQParams& p, double expected_next_sales) {
    if (!(p.delta > 0)) throw ParameterError("delta must be positive");
    return std::max((p.beta - 1.0) * p.c / p.delta + p.alpha * expected_next_sales, 0.0);
}

double smoothing_sign_index(const LQParams& p) {
    double B = 1.0 / (p.theta * (1.0 + p.beta) + p.delta);
    return 2.0 * B * B * p.theta * p.theta * p.beta;
}

double smoothing_derivative(const LQParams& p, SmoothingVariant v) {
    if (!(p.delta > 0) || p.theta < 0) throw ParameterError("need delta > 0 and theta >= 0");
    double B = 1.0 / (p.theta * (1.0 + p.beta) + p.delta);
    double sq = B * B * p.theta * p.theta * p.beta;
    double lin = B * p.theta * p.rho * p.beta;
    if (!(std::abs(sq) < 1)) throw DomainError("B^2 theta^2 beta outside the unit circle");
    if (!(std::abs(lin) < 1)) throw DomainError("B theta rho beta outside the unit circle");
    double smooth = p.theta * (1.0 - p.beta * p.rho);
    double X = p.delta * p.alpha * p.rho + (v == SmoothingVariant::published ? smooth : -smooth);
    return (B * X / (1.0 - lin)) * (1.0 - 2.0 * sq) / (1.0 - sq);
}

ProductivityPolicy productivity_policy(double alpha, double beta, double delta, double rho_zeta, double zeta_bar,
                                       double zeta, double expected_demand) {
    if (!(delta > 0)) throw ParameterError("delta must be positive");
    if (rho_zeta > 1) throw ParameterError("productivity persistence above one");
    double Ez = (1.0 - rho_zeta) * zeta_bar + rho_zeta * zeta;
    return {alpha * expected_demand + (beta * Ez - zeta) / delta, (beta * rho_zeta - 1.0) / delta};
}

namespace {
double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
}  // namespace

MarkovChain tauchen(double rho, double sigma, std::size_t n, double span, double mean) {
    if (n == 0) throw ParameterError("need at least one state");
    if (!(rho > -1 && rho < 1)) throw ParameterError("rho must lie in (-1,1)");
    if (sigma < 0) throw ParameterError("sigma must be nonnegative");
    MarkovChain mc;
    if (n == 1 || sigma == 0) {
        mc.grid = Vector::Constant(1, mean);
        mc.P = Matrix::Ones(1, 1);
        return mc;
    }
    const auto N = static_cast<Eigen::Index>(n);
    double sd = sigma / std::sqrt(1 - rho * rho);
    Vector g = Vector::LinSpaced(N, -span * sd, span * sd);
    double h = g(1) - g(0);
    mc.P = Matrix::Zero(N, N);
    for (Eigen::Index i = 0; i < N; ++i) {
        double mu = rho * g(i);
        mc.P(i, 0) = norm_cdf((g(0) - mu + h / 2) / sigma);
        mc.P(i, N - 1) = 1.0 - norm_cdf((g(N - 1) - mu - h / 2) / sigma);
        for (Eigen::Index k = 1; k < N - 1; ++k)
            mc.P(i, k) = norm_cdf((g(k) - mu + h / 2) / sigma) - norm_cdf((g(k) - mu - h / 2) / sigma);
        mc.P.row(i) /= mc.P.row(i).sum();
    }
    mc.grid = g.array() + mean;
    return mc;
}

namespace {

// linear interpolation on a uniform grid, clamped at the ends
struct UniformGrid {
    double lo, step;
    Eigen::Index n;
    void locate(double x, Eigen::Index& i, double& w) const {
        double u = (x - lo) / step;
        if (u <= 0) {
            i = 0;
            w = 0;
            return;
        }
        if (u >= static_cast<double>(n - 1)) {
            i = n - 2;
            w = 1;
            return;
        }
        i = static_cast<Eigen::Index>(u);
        if (i > n - 2) i = n - 2;
        w = u - static_cast<double>(i);
    }
};

}  // namespace

BreakdownSolution solve_breakdown_vfi(const BreakdownProblem& pr) {
    if (!(pr.chi >= 0 && pr.chi <= 1)) throw ParameterError("breakdown probability must lie in [0,1]");
    if (!(pr.beta > 0 && pr.beta < 1)) throw ParameterError("discount must lie in (0,1)");
    if (pr.n_I < 2) throw ParameterError("inventory grid needs at least 2 points");
    auto mc = tauchen(pr.rho, pr.sigma, pr.n_A, 3.0, pr.Dbar);
    BreakdownSolution sol;
    sol.A = mc.grid;
    sol.P = mc.P;
    const auto nA = sol.A.size();
    const auto nI = static_cast<Eigen::Index>(pr.n_I);
    sol.I = Vector::LinSpaced(nI, 0.0, pr.I_max);
    if ((sol.A.array() <= 0).any()) throw ParameterError("demand grid reaches non-positive levels");
    UniformGrid ig{0.0, sol.I(1) - sol.I(0), nI};

    Matrix VG = Matrix::Zero(nI, nA), VB = Matrix::Zero(nI, nA);
    sol.policy_index = Eigen::MatrixXi::Zero(nI, nA);
    for (int it = 1; it <= pr.max_iter; ++it) {
        Matrix EVG = VG * sol.P.transpose();  // EVG(I', a) = Σ_a' P(a,a') VG(I', a')
        Matrix EVB = VB * sol.P.transpose();
        Matrix nG(nI, nA), nB(nI, nA);
        for (Eigen::Index a = 0; a < nA; ++a) {
            double q = sol.A(a);
            double best = -std::numeric_limits<double>::infinity();
            Eigen::Index arg = 0;
            for (Eigen::Index k = 0; k < nI; ++k) {
                double v = -pr.c * sol.I(k) + pr.beta * (pr.chi * EVB(k, a) + (1 - pr.chi) * EVG(k, a));
                if (v > best + 1e-14) {
                    best = v;
                    arg = k;
                }
            }
            for (Eigen::Index i = 0; i < nI; ++i) {
                nG(i, a) = pr.p * q - pr.c * (q - sol.I(i)) + best;
                sol.policy_index(i, a) = static_cast<int>(arg);
                double left = std::max(sol.I(i) - q, 0.0);
                Eigen::Index j;
                double w;
                ig.locate(left, j, w);
                double cont = (1 - w) * EVG(j, a) + w * EVG(j + 1, a);
                nB(i, a) = pr.p * std::min(q, sol.I(i)) + pr.beta * cont;
            }
        }
        double res = std::max((nG - VG).cwiseAbs().maxCoeff(), (nB - VB).cwiseAbs().maxCoeff());
        VG = std::move(nG);
        VB = std::move(nB);
        sol.iterations = it;
        sol.residual = res;
        if (res < pr.tol) break;
    }
    if (!(sol.residual < pr.tol)) {
        std::ostringstream os;
        os << "breakdown VFI did not converge: residual " << sol.residual << " after " << sol.iterations
           << " iterations";
        throw ConvergenceError(os.str());
    }
    sol.VG = VG;
    sol.VB = VB;
    sol.policy.resize(nI, nA);
    for (Eigen::Index i = 0; i < nI; ++i)
        for (Eigen::Index a = 0; a < nA; ++a) sol.policy(i, a) = sol.I(sol.policy_index(i, a));
    return sol;
}

namespace {

struct TtsSetup {
    UniformGrid sg;
    std::vector<double> qgrid;
};

double tts_value(const TimeToSellSolution& sol, const Matrix& V, const UniformGrid& sg, Eigen::Index k, double s,
                 double q) {
    const auto& pr = sol.prob;
    double a = s + pr.chi * q;
    double val = -pr.c * q;
    const auto ne = sol.y.size();
    for (Eigen::Index kp = 0; kp < ne; ++kp) {
        double pk = sol.P(k, kp);
        if (pk == 0) continue;
        double y = sol.y(kp);
        double sales = std::min(a, y);
        double pen = y > a + 1e-12 ? pr.b : 0.0;
        double sp = s + q - sales;
        Eigen::Index i;
        double w;
        sg.locate(sp, i, w);
        double cont = (1 - w) * V(i, kp) + w * V(i + 1, kp);
        val += pk * (pr.p * sales - pen + pr.beta * cont);
    }
    return val;
}

}  // namespace

TimeToSellSolution solve_timetosell(const TimeToSellProblem& pr) {
    if (!(pr.beta > 0 && pr.beta < 1)) throw ParameterError("discount must lie in (0,1)");
    if (!(pr.chi > 0 && pr.chi <= 1)) throw ParameterError("sell cap must lie in (0,1]");
    if (pr.n_s < 2 || pr.n_q < 2) throw ParameterError("grids need at least 2 points");
    TimeToSellSolution sol;
    sol.prob = pr;
    auto mc = tauchen(pr.rho, pr.sigma, pr.n_eps);
    sol.eps = mc.grid;
    sol.P = mc.P;
    sol.y = (pr.Dbar + sol.eps.array()).matrix();
    if ((sol.y.array() <= 0).any()) throw ParameterError("demand grid reaches non-positive levels");
    const auto ns = static_cast<Eigen::Index>(pr.n_s), ne = sol.y.size();
    sol.s = Vector::LinSpaced(ns, 0.0, pr.s_max);
    UniformGrid sg{0.0, sol.s(1) - sol.s(0), ns};
    Vector qgrid = Vector::LinSpaced(static_cast<Eigen::Index>(pr.n_q), 0.0, pr.q_max);

    Matrix V = Matrix::Zero(ns, ne);
    Matrix Q = Matrix::Zero(ns, ne);
    std::vector<double> cands;
    for (int it = 1; it <= pr.max_iter; ++it) {
        Matrix TV(ns, ne);
        for (Eigen::Index k = 0; k < ne; ++k)
            for (Eigen::Index i = 0; i < ns; ++i) {
                double s = sol.s(i);
                cands.assign(qgrid.data(), qgrid.data() + qgrid.size());
                for (Eigen::Index kp = 0; kp < ne; ++kp) {
                    double kink = (sol.y(kp) - s) / pr.chi;
                    if (kink > 0 && kink <= pr.q_max) cands.push_back(kink);
                }
                double best = -std::numeric_limits<double>::infinity(), arg = 0;
                for (double q : cands) {
                    double v = tts_value(sol, V, sg, k, s, q);
                    if (v > best) {
                        best = v;
                        arg = q;
                    }
                }
                TV(i, k) = best;
                Q(i, k) = arg;
            }
        double res = (TV - V).cwiseAbs().maxCoeff();
        V = std::move(TV);
        sol.iterations = it;
        sol.residual = res;
        if (res < pr.tol) break;
        // modified policy iteration: evaluate the current policy a few times
        for (int h = 0; h < pr.howard; ++h) {
            Matrix W(ns, ne);
            for (Eigen::Index k = 0; k < ne; ++k)
                for (Eigen::Index i = 0; i < ns; ++i) W(i, k) = tts_value(sol, V, sg, k, sol.s(i), Q(i, k));
            V = std::move(W);
        }
    }
    if (!(sol.residual < pr.tol)) {
        std::ostringstream os;
        os << "time-to-sell iteration did not converge: residual " << sol.residual;
        throw ConvergenceError(os.str());
    }
    sol.V = V;
    sol.q = Q;
    return sol;
}

void save_solution(const TimeToSellSolution& sol, std::ostream& out) {
    const auto& pr = sol.prob;
    nlohmann::json j = {{"model", "timetosell"}, {"p", pr.p}, {"beta", pr.beta}, {"c", pr.c}, {"chi", pr.chi},
                        {"b", pr.b}, {"Dbar", pr.Dbar}, {"rho", pr.rho}, {"sigma", pr.sigma},
                        {"n_eps", pr.n_eps}, {"n_s", pr.n_s}, {"s_max", pr.s_max}, {"n_q", pr.n_q},
                        {"q_max", pr.q_max}, {"tol", pr.tol}, {"iterations", sol.iterations},
                        {"residual", sol.residual}};
    out << "# " << j.dump() << '\n';
    out << "s_index,eps_index,s,eps,V,q\n";
    out.precision(17);
    for (Eigen::Index k = 0; k < sol.V.cols(); ++k)
        for (Eigen::Index i = 0; i < sol.V.rows(); ++i)
            out << i << ',' << k << ',' << sol.s(i) << ',' << sol.eps(k) << ',' << sol.V(i, k) << ',' << sol.q(i, k)
                << '\n';
}

TimeToSellSolution load_solution(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("# ", 0) != 0) throw ParseError("solution file lacks parameter line", 1);
    auto j = nlohmann::json::parse(line.substr(2));
    if (j.value("model", "") != "timetosell") throw ParseError("solution file is not a time-to-sell solution", 1);
    TimeToSellProblem pr;
    pr.p = j["p"];
    pr.beta = j["beta"];
    pr.c = j["c"];
    pr.chi = j["chi"];
    pr.b = j["b"];
    pr.Dbar = j["Dbar"];
    pr.rho = j["rho"];
    pr.sigma = j["sigma"];
    pr.n_eps = j["n_eps"];
    pr.n_s = j["n_s"];
    pr.s_max = j["s_max"];
    pr.n_q = j["n_q"];
    pr.q_max = j["q_max"];
    pr.tol = j["tol"];
    TimeToSellSolution sol;
    sol.prob = pr;
    sol.iterations = j["iterations"];
    sol.residual = j["residual"];
    auto mc = tauchen(pr.rho, pr.sigma, pr.n_eps);
    sol.eps = mc.grid;
    sol.P = mc.P;
    sol.y = (pr.Dbar + sol.eps.array()).matrix();
    const auto ns = static_cast<Eigen::Index>(pr.n_s), ne = sol.y.size();
    sol.s = Vector::LinSpaced(ns, 0.0, pr.s_max);
    sol.V = Matrix::Zero(ns, ne);
    sol.q = Matrix::Zero(ns, ne);
    std::getline(in, line);
    std::size_t lineno = 2, seen = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string f;
        std::vector<double> v;
        while (std::getline(ls, f, ',')) v.push_back(std::stod(f));
        if (v.size() != 6) throw ParseError("solution row needs 6 fields", lineno);
        auto i = static_cast<Eigen::Index>(v[0]), k = static_cast<Eigen::Index>(v[1]);
        if (i < 0 || i >= ns || k < 0 || k >= ne) throw ParseError("solution index out of range", lineno);
        sol.V(i, k) = v[4];
        sol.q(i, k) = v[5];
        ++seen;
    }
    if (seen != static_cast<std::size_t>(ns * ne)) throw ParseError("solution file is incomplete", lineno);
    return sol;
}

namespace {

// centered cross-moment accumulator for one path, pooled across paths
struct Pool {
    double n = 0, groups = 0;
    double sxx[5] = {0, 0, 0, 0, 0};  // Q, sales, y, I, alpha
    double s_ay = 0, s_iy = 0, s_is = 0;
    double alpha_sum = 0, alpha_min = std::numeric_limits<double>::infinity(),
           alpha_max = -std::numeric_limits<double>::infinity();

    void add_path(const std::vector<double>& Q, const std::vector<double>& S, const std::vector<double>& Y,
                  const std::vector<double>& I) {
        const std::size_t m = Q.size();
        if (m == 0) return;
        std::vector<double> al(m);
        for (std::size_t t = 0; t < m; ++t) al[t] = S[t] > 0 ? I[t] / S[t] : 0.0;
        const std::vector<double>* ser[5] = {&Q, &S, &Y, &I, &al};
        double mean[5];
        for (int k = 0; k < 5; ++k) {
            double s = 0;
            for (double v : *ser[k]) s += v;
            mean[k] = s / static_cast<double>(m);
        }
        for (std::size_t t = 0; t < m; ++t) {
            double d[5];
            for (int k = 0; k < 5; ++k) {
                d[k] = (*ser[k])[t] - mean[k];
                sxx[k] += d[k] * d[k];
            }
            s_ay += d[4] * d[2];
            s_iy += d[3] * d[2];
            s_is += d[3] * d[1];
        }
        double a = mean[1] > 0 ? mean[3] / mean[1] : 0.0;
        alpha_sum += a;
        alpha_min = std::min(alpha_min, a);
        alpha_max = std::max(alpha_max, a);
        n += static_cast<double>(m);
        groups += 1;
    }

    void merge(const Pool& o) {
        n += o.n;
        groups += o.groups;
        for (int k = 0; k < 5; ++k) sxx[k] += o.sxx[k];
        s_ay += o.s_ay;
        s_iy += o.s_iy;
        s_is += o.s_is;
        alpha_sum += o.alpha_sum;
        alpha_min = std::min(alpha_min, o.alpha_min);
        alpha_max = std::max(alpha_max, o.alpha_max);
    }

    AggregateMoments finish() const {
        AggregateMoments m;
        auto corr = [](double sxy, double sx, double sy) {
            return sx > 0 && sy > 0 ? sxy / std::sqrt(sx * sy) : std::numeric_limits<double>::quiet_NaN();
        };
        double dof = std::max(n - groups, 1.0);
        m.alpha_mean = alpha_sum / groups;
        m.alpha_min = alpha_min;
        m.alpha_max = alpha_max;
        m.corr_alpha_demand = corr(s_ay, sxx[4], sxx[2]);
        m.corr_I_demand = corr(s_iy, sxx[3], sxx[2]);
        m.corr_I_sales = corr(s_is, sxx[3], sxx[1]);
        m.sd_Q = std::sqrt(sxx[0] / dof);
        m.sd_sales = std::sqrt(sxx[1] / dof);
        m.sd_demand = std::sqrt(sxx[2] / dof);
        m.sd_Q_over_demand = m.sd_Q / m.sd_demand;
        m.sd_sales_over_demand = m.sd_sales / m.sd_demand;
        m.sd_Q_over_sales = m.sd_Q / m.sd_sales;
        return m;
    }
};

}  // namespace

MomentSet simulate_policy(const TimeToSellSolution& sol, const SimulationOptions& opt) {
    if (opt.burnin >= opt.T) throw ParameterError("burn-in must be shorter than the horizon");
    const auto& pr = sol.prob;
    const auto ns = sol.s.size(), ne = sol.y.size();
    UniformGrid sg{0.0, sol.s(1) - sol.s(0), ns};
    Matrix cdf(ne, ne);
    for (Eigen::Index k = 0; k < ne; ++k) {
        double acc = 0;
        for (Eigen::Index kp = 0; kp < ne; ++kp) {
            acc += sol.P(k, kp);
            cdf(k, kp) = acc;
        }
    }
    std::vector<Pool> mon(opt.paths), ann(opt.paths);
    std::vector<std::size_t> clamps(opt.paths, 0), stockouts(opt.paths, 0);
    const std::size_t m = opt.T - opt.burnin;
    parallel_for(opt.paths, opt.threads, [&](std::size_t path) {
        Stream st(opt.seed, path, 0x7715);
        double s = 0.5 * pr.Dbar;
        Eigen::Index k = ne / 2;
        std::vector<double> Q, S, Y, I;
        Q.reserve(m);
        S.reserve(m);
        Y.reserve(m);
        I.reserve(m);
        for (std::size_t t = 0; t < opt.T; ++t) {
            if (s > pr.s_max) {
                if (t >= opt.burnin) ++clamps[path];
                s = pr.s_max;
            }
            Eigen::Index i;
            double w;
            sg.locate(s, i, w);
            double q = std::max((1 - w) * sol.q(i, k) + w * sol.q(i + 1, k), 0.0);
            double u = st.uniform();
            Eigen::Index kp = 0;
            while (kp < ne - 1 && u > cdf(k, kp)) ++kp;
            double y = sol.y(kp);
            double avail = s + pr.chi * q;
            double sales = std::min(avail, y);
            double next = s + q - sales;
            if (t >= opt.burnin) {
                if (y > avail + 1e-12) ++stockouts[path];
                Q.push_back(q);
                S.push_back(sales);
                Y.push_back(y);
                I.push_back(next);
            }
            s = next;
            k = kp;
        }
        mon[path].add_path(Q, S, Y, I);
        std::size_t years = m / 12;
        std::vector<double> qa(years), sa(years), ya(years), ia(years);
        for (std::size_t yr = 0; yr < years; ++yr) {
            for (std::size_t mo = 0; mo < 12; ++mo) {
                std::size_t t = yr * 12 + mo;
                qa[yr] += Q[t];
                sa[yr] += S[t];
                ya[yr] += Y[t];
            }
            ia[yr] = I[yr * 12 + 11];
        }
        ann[path].add_path(qa, sa, ya, ia);
    });
    Pool pm, pa;
    MomentSet out;
    std::size_t so = 0;
    for (std::size_t p = 0; p < opt.paths; ++p) {
        pm.merge(mon[p]);
        pa.merge(ann[p]);
        out.clamped += clamps[p];
        so += stockouts[p];
    }
    out.visits = opt.paths * m;
    out.stockout_rate = static_cast<double>(so) / static_cast<double>(std::max<std::size_t>(out.visits, 1));
    if (static_cast<double>(out.clamped) > 1e-3 * static_cast<double>(out.visits))
        throw NumericalError("simulated stock left the grid in " + std::to_string(out.clamped) + " of " +
                             std::to_string(out.visits) + " visits");
    out.monthly = pm.finish();
    out.annual = pa.finish();
    return out;
}

}  // namespace invamp
