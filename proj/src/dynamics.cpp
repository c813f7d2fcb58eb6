#include "invamp/dynamics.hpp"

#include "invamp/shock_engine.hpp"

#include <cmath>
#include <sstream>

namespace invamp {

InventoryFn InventoryFn::zero() {
    return {[](double) { return 0.0; }, [](double) { return 0.0; }};
}

InventoryFn InventoryFn::linear(double alpha) {
    return {[alpha](double x) { return alpha * x; }, [alpha](double) { return alpha; }};
}

InventoryFn InventoryFn::sqrt_scaled(double k) {
    return {[k](double x) { return k * std::sqrt(std::max(x, 0.0)); },
            [k](double x) { return x > 0 ? 0.5 * k / std::sqrt(x) : 0.0; }};
}

InventoryFn InventoryFn::affine(double a, double b) {
    return {[a, b](double x) { return a * x + b; }, [a](double) { return a; }};
}

namespace {

// G[j] evaluated at the points x, m(x), ..., m^{n}(x) for every stage j.
std::vector<double> stage_inventories(const std::vector<InventoryFn>& fns, double x, double rho, double Dbar) {
    const std::size_t n = fns.size();
    std::vector<double> pts(n + 1);
    pts[0] = x;
    for (std::size_t k = 1; k <= n; ++k) pts[k] = (1 - rho) * Dbar + rho * pts[k - 1];
    // G[j][k]: stage j inventory when its current demand state is pts[k]
    std::vector<std::vector<double>> G(n);
    for (std::size_t j = 0; j < n; ++j) {
        G[j].assign(n - j, 0.0);
        for (std::size_t k = 0; k + j < n; ++k) {
            double expected = pts[k + 1];
            for (std::size_t i = 0; i < j; ++i) expected += G[i][k + 1] - G[i][k];
            G[j][k] = fns[j].level(expected);
        }
    }
    std::vector<double> out(n);
    for (std::size_t j = 0; j < n; ++j) out[j] = G[j][0];
    return out;
}

}  // namespace

ChainState simulate_chain(const std::vector<InventoryFn>& fns, const Vector& demand, double rho, double Dbar) {
    if (fns.empty()) throw ParameterError("need at least one stage");
    const auto n = static_cast<Eigen::Index>(fns.size());
    const auto T = demand.size();
    ChainState cs;
    cs.D = demand;
    cs.Y.resize(n, T);
    cs.I.resize(n, T);
    std::vector<double> prev = stage_inventories(fns, Dbar, rho, Dbar);
    for (Eigen::Index t = 0; t < T; ++t) {
        auto cur = stage_inventories(fns, demand(t), rho, Dbar);
        double below = demand(t);
        for (Eigen::Index s = 0; s < n; ++s) {
            cs.I(s, t) = cur[s];
            cs.Y(s, t) = below + cur[s] - prev[s];
            if (cs.Y(s, t) < 0) cs.negative_output.push_back({static_cast<std::size_t>(s), static_cast<std::size_t>(t)});
            below = cs.Y(s, t);
        }
        prev = std::move(cur);
    }
    return cs;
}

AmplificationReport amplification_check(const std::vector<InventoryFn>& fns, double rho, double Dbar) {
    AmplificationReport r;
    double prod = 1.0, cum = 1.0;
    bool all_ok = true, any_pos = false;
    for (const auto& f : fns) {
        double s = f.slope(Dbar);
        double inc = rho * s * prod;
        cum += inc;
        bool bad = !(s >= 0 && s * (1 - rho) < 1);
        r.slopes.push_back(s);
        r.increments.push_back(inc);
        r.elasticity.push_back(cum);
        r.violates.push_back(bad);
        all_ok = all_ok && !bad;
        any_pos = any_pos || s > 0;
        prod *= 1 + (rho - 1) * s;
    }
    r.amplifies = all_ok && any_pos && rho > 0;
    return r;
}

Matrix OutputOperator::apply(const Matrix& D, const Vector& Dprev) const {
    Matrix Y(LB.rows(), D.cols());
    Vector last = Dprev;
    for (Eigen::Index t = 0; t < D.cols(); ++t) {
        Y.col(t) = LB * D.col(t) + MB * (D.col(t) - last);
        last = D.col(t);
    }
    return Y;
}

OutputOperator make_output_operator(const NetworkModel& m, const OmegaParams& p) {
    p.validate();
    const auto N = m.Atilde.rows();
    Eigen::PartialPivLU<Matrix> lu(Matrix::Identity(N, N) - m.Atilde);
    Eigen::PartialPivLU<Matrix> luw(Matrix::Identity(N, N) - p.omega() * m.Atilde);
    OutputOperator op;
    op.LB = lu.solve(m.B);
    op.MB = p.alpha * p.rho * lu.solve(luw.solve(m.B));
    return op;
}

OutputPanel output_panel(const Matrix& Y) {
    OutputPanel out;
    out.Y = Y;
    const auto T = Y.cols() - 1;
    out.growth.resize(Y.rows(), std::max<Eigen::Index>(T, 0));
    out.dlogY.resizeLike(out.growth);
    for (Eigen::Index t = 0; t < T; ++t)
        for (Eigen::Index r = 0; r < Y.rows(); ++r) {
            out.growth(r, t) = (Y(r, t + 1) - Y(r, t)) / Y(r, t);
            out.dlogY(r, t) = std::log(Y(r, t + 1) / Y(r, t));
        }
    for (Eigen::Index t = 0; t < Y.cols(); ++t)
        for (Eigen::Index r = 0; r < Y.rows(); ++r)
            if (Y(r, t) < 0) out.negative_output.push_back({static_cast<std::size_t>(r), static_cast<std::size_t>(t)});
    return out;
}

OutputPanel network_output(const NetworkModel& m, const OmegaParams& p, const Matrix& D) {
    if (D.rows() != m.B.cols()) throw ValidationError("demand paths must have one row per destination");
    auto op = make_output_operator(m, p);
    return output_panel(op.apply(D, m.Dbar));
}

Matrix growth_loadings(const NetworkModel& m, const OmegaParams& p) {
    auto xi = exposure_shares(m).value;
    auto iu = inventory_upstreamness(m, p);
    return xi.cwiseProduct((1.0 + p.alpha * p.rho * iu.Ucal.array()).matrix());
}

Matrix growth_approx(const NetworkModel& m, const OmegaParams& p, const Matrix& eta_dest) {
    if (eta_dest.rows() != m.B.cols()) throw ValidationError("shifters must have one row per destination");
    return growth_loadings(m, p) * eta_dest;
}

Vector output_elasticity(const NetworkModel& m, const OmegaParams& p) {
    auto iu = inventory_upstreamness(m, p);
    return (1.0 + p.alpha * p.rho * iu.UcalAvg.array()).matrix();
}

Vector analytic_variance(const NetworkModel& m, const OmegaParams& p, const Vector& sigma_eta, double varrho,
                         Diagnostics* diag) {
    if (sigma_eta.size() != m.B.cols()) throw ValidationError("need one shifter sd per destination");
    if (varrho != 0.0)
        warn(diag, "destination shocks are correlated; variance includes covariance cross terms");
    Matrix K = growth_loadings(m, p);
    Matrix S = build_covariance(sigma_eta, varrho);
    Vector v(K.rows());
    for (Eigen::Index r = 0; r < K.rows(); ++r) v(r) = (K.row(r) * S * K.row(r).transpose())(0);
    return v;
}

Matrix hetero_loading(const NetworkModel& m, const Vector& alpha, double rho) {
    const auto N = m.Atilde.rows();
    if (alpha.size() != N) throw ValidationError("need one inventory intensity per sector");
    if (!(rho > -1 && rho < 1)) throw DomainError("rho must lie in (-1,1)");
    for (Eigen::Index r = 0; r < N; ++r)
        if (!(alpha(r) >= 0 && alpha(r) * (1 - rho) < 1)) {
            std::ostringstream os;
            os << "alpha of sector " << m.sectors[r].id << " = " << alpha(r) << " outside [0, 1/(1-rho))";
            throw DomainError(os.str());
        }
    const Vector omega = (1.0 + (rho - 1.0) * alpha.array()).matrix();
    // stage recursion: c^n = Ã c^{n-1}, e^n = ω ⊙ Ã e^{n-1} + ρ α ⊙ Ã c^{n-1}
    Matrix c = m.B;
    Matrix e = rho * alpha.asDiagonal() * m.B;
    Matrix E = e;
    for (int n = 1; n <= 200000; ++n) {
        Matrix Ae = m.Atilde * e;
        Matrix Ac = m.Atilde * c;
        e = omega.asDiagonal() * Ae + rho * alpha.asDiagonal() * Ac;
        c = Ac;
        E += e;
        double inc = e.cwiseAbs().maxCoeff();
        if (!std::isfinite(inc)) break;
        if (inc < 1e-12 * std::max(1.0, E.cwiseAbs().maxCoeff()) && c.cwiseAbs().maxCoeff() < 1e-12) return E;
    }
    throw DomainError("inventory series does not converge");
}

OutputPanel hetero_output(const NetworkModel& m, const Vector& alpha, double rho, const Matrix& D) {
    if (D.rows() != m.B.cols()) throw ValidationError("demand paths must have one row per destination");
    const auto N = m.Atilde.rows();
    OutputOperator op;
    op.LB = Eigen::PartialPivLU<Matrix>(Matrix::Identity(N, N) - m.Atilde).solve(m.B);
    op.MB = hetero_loading(m, alpha, rho);
    return output_panel(op.apply(D, m.Dbar));
}

NetworkModel fragment(const NetworkModel& m, std::size_t i) {
    const auto N = static_cast<Eigen::Index>(m.n());
    const auto ii = static_cast<Eigen::Index>(i);
    if (ii >= N) throw ValidationError("sector index out of range");
    if (!m.live[i]) throw ValidationError("cannot fragment a zero-output sector");
    auto extend = [&](const Matrix& M) {
        Matrix X = Matrix::Zero(N + 1, N + 1);
        X.topLeftCorner(N, N) = M;
        double gam = M.col(ii).sum();
        double g = gam > 0 ? std::sqrt(gam) : 0.5;
        X.col(N).head(N) = M.col(ii) / g;
        X.col(ii).setZero();
        X(N, ii) = g;
        return X;
    };
    NetworkModel f;
    f.sectors = m.sectors;
    const auto& s = m.sectors[i];
    f.sectors.push_back({s.id + "~up", s.country, s.industry + "~up"});
    f.destinations = m.destinations;
    f.Atilde = extend(m.Atilde);
    f.A = extend(m.A);
    f.B = Matrix::Zero(N + 1, m.B.cols());
    f.B.topRows(N) = m.B;
    f.Dbar = m.Dbar;
    f.live = m.live;
    f.live.push_back(true);
    f.validate();
    return f;
}

}  // namespace invamp
