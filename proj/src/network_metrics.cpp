#include "invamp/network_metrics.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace invamp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Eigen::PartialPivLU<Matrix> factor_checked(const Matrix& M, const char* what) {
    Eigen::PartialPivLU<Matrix> lu(M);
    double rc = lu.rcond();
    if (!(rc > 1e-14)) {
        std::ostringstream os;
        os << what << " is numerically singular (reciprocal condition estimate " << rc << ")";
        throw NumericalError(os.str());
    }
    return lu;
}

Eigen::PartialPivLU<Matrix> leontief_lu(const Matrix& At) {
    if (spectral_radius_bound(At) >= 1.0)
        throw NumericalError("spectral radius of the expenditure-share matrix is not below one");
    return factor_checked(Matrix::Identity(At.rows(), At.cols()) - At, "I - A");
}

SectorVector upstreamness_from(const Matrix& A, const Vector& F, const Vector& Y) {
    const auto N = A.rows();
    auto lu = leontief_lu(A);
    Vector x = lu.solve(lu.solve(F));
    SectorVector out{Vector(N), {}};
    for (Eigen::Index r = 0; r < N; ++r) {
        if (Y(r) > 0) {
            out.value(r) = x(r) / Y(r);
        } else {
            out.value(r) = kNaN;
            out.excluded.push_back(static_cast<std::size_t>(r));
        }
    }
    return out;
}

SectorVector downstreamness_from(const Matrix& A, const Vector& Y) {
    const auto N = A.rows();
    auto lu = leontief_lu(A.transpose());
    Vector d = lu.solve(Vector::Ones(N));
    SectorVector out{d, {}};
    for (Eigen::Index r = 0; r < N; ++r)
        if (!(Y(r) > 0)) {
            out.value(r) = kNaN;
            out.excluded.push_back(static_cast<std::size_t>(r));
        }
    return out;
}

}  // namespace

void OmegaParams::validate() const {
    if (!(alpha >= 0) || !std::isfinite(alpha)) throw DomainError("alpha must be nonnegative");
    if (!(rho > -1 && rho < 1)) throw DomainError("rho must lie in (-1,1)");
    double w = omega();
    if (!(w > 0 && w <= 1)) {
        std::ostringstream os;
        os << "omega = " << w << " outside (0,1)";
        throw DomainError(os.str());
    }
}

Matrix leontief(const NetworkModel& m) {
    auto lu = leontief_lu(m.Atilde);
    return lu.solve(Matrix::Identity(m.Atilde.rows(), m.Atilde.cols()));
}

SectorVector upstreamness(const IOTable& t) {
    const auto N = static_cast<Eigen::Index>(t.n());
    Matrix A = Matrix::Zero(N, N);
    for (Eigen::Index s = 0; s < N; ++s)
        if (t.Y(s) > 0) A.col(s) = t.Z.col(s) / t.Y(s);
    return upstreamness_from(A, t.F.rowwise().sum(), t.Y);
}

SectorVector upstreamness(const NetworkModel& m) {
    Vector F = m.B * m.Dbar;
    auto lu = leontief_lu(m.Atilde);
    Vector Y = lu.solve(F);
    return upstreamness_from(m.Atilde, F, Y);
}

SectorVector downstreamness(const IOTable& t) {
    const auto N = static_cast<Eigen::Index>(t.n());
    Matrix A = Matrix::Zero(N, N);
    for (Eigen::Index s = 0; s < N; ++s)
        if (t.Y(s) > 0) A.col(s) = t.Z.col(s) / t.Y(s);
    return downstreamness_from(A, t.Y);
}

SectorVector downstreamness(const NetworkModel& m) {
    auto lu = leontief_lu(m.Atilde);
    Vector Y = lu.solve(m.B * m.Dbar);
    return downstreamness_from(m.Atilde, Y);
}

ShareMatrix exposure_shares(const NetworkModel& m) {
    auto lu = leontief_lu(m.Atilde);
    Matrix S = lu.solve(m.B * m.Dbar.asDiagonal());
    ShareMatrix out{S, {}};
    for (Eigen::Index r = 0; r < S.rows(); ++r) {
        double tot = S.row(r).sum();
        if (tot > 0) {
            out.value.row(r) /= tot;
        } else {
            out.value.row(r).setConstant(kNaN);
            out.excluded.push_back(static_cast<std::size_t>(r));
        }
    }
    return out;
}

Vector hhi(const Matrix& xi) {
    Vector h(xi.rows());
    for (Eigen::Index r = 0; r < xi.rows(); ++r) {
        if (!xi.row(r).allFinite()) {
            h(r) = kNaN;
            continue;
        }
        if ((xi.row(r).array() < -1e-12).any() || std::abs(xi.row(r).sum() - 1.0) > 1e-9)
            throw ValidationError("exposure shares of row " + std::to_string(r) + " are not a distribution");
        h(r) = xi.row(r).squaredNorm();
    }
    return h;
}

InventoryUpstreamness inventory_upstreamness(const NetworkModel& m, const OmegaParams& p) {
    p.validate();
    const auto N = m.Atilde.rows();
    const double w = p.omega();
    auto lu = leontief_lu(m.Atilde);
    Matrix LB = lu.solve(m.B);
    // Σ_n (Σ_{i<=n} ω^i) Ã^n = L̃ [I-ωÃ]^{-1}; no cancellation as ω -> 1
    auto luw = factor_checked(Matrix::Identity(N, N) - w * m.Atilde, "I - omega A");
    Matrix MB = lu.solve(luw.solve(m.B));
    InventoryUpstreamness out;
    out.Ucal = Matrix(N, m.B.cols());
    for (Eigen::Index r = 0; r < N; ++r)
        for (Eigen::Index j = 0; j < m.B.cols(); ++j)
            out.Ucal(r, j) = LB(r, j) > 0 ? MB(r, j) / LB(r, j) : kNaN;
    Matrix S = LB * m.Dbar.asDiagonal();
    out.UcalAvg = Vector(N);
    for (Eigen::Index r = 0; r < N; ++r) {
        double tot = S.row(r).sum();
        out.UcalAvg(r) = tot > 0 ? (MB.row(r) * m.Dbar)(0) / tot : kNaN;
    }
    return out;
}

Vector weighted_shock(const NetworkModel& m, const OmegaParams& p, const Matrix& eta) {
    p.validate();
    const auto N = m.Atilde.rows();
    const auto J = m.B.cols();
    if (eta.rows() != N || eta.cols() != J) throw ValidationError("shifter matrix must be N x J");
    const double w = p.omega();
    auto lu = leontief_lu(m.Atilde);
    Matrix S = lu.solve(m.B * m.Dbar.asDiagonal());  // L̃ B_j D̄_j
    Vector out(N);
    if (w >= 1.0) {
        // alpha = 0: explicit double sum Σ_j 𝒰_j ξ_j η_j
        auto iu = inventory_upstreamness(m, p);
        for (Eigen::Index r = 0; r < N; ++r) {
            double tot = S.row(r).sum(), acc = 0.0;
            for (Eigen::Index j = 0; j < J; ++j) acc += iu.Ucal(r, j) * S(r, j) / tot * eta(r, j);
            out(r) = acc;
        }
        return out;
    }
    auto luw = factor_checked(Matrix::Identity(N, N) - w * m.Atilde, "I - omega A");
    Matrix R = luw.solve(m.B * m.Dbar.asDiagonal());  // [I-ωÃ]^{-1} B_j D̄_j
    for (Eigen::Index r = 0; r < N; ++r) {
        double tot = S.row(r).sum();
        double eta_r = 0.0, res = 0.0;
        for (Eigen::Index j = 0; j < J; ++j) {
            eta_r += S(r, j) / tot * eta(r, j);
            res += R(r, j) * eta(r, j);
        }
        out(r) = (eta_r - w * res / tot) / (1.0 - w);
    }
    return out;
}

Vector weighted_shock(const NetworkModel& m, const OmegaParams& p, const Vector& eta_dest) {
    if (eta_dest.size() != m.B.cols()) throw ValidationError("need one shifter per destination");
    Matrix eta = eta_dest.transpose().replicate(m.Atilde.rows(), 1);
    return weighted_shock(m, p, eta);
}

Discretized discretize(const NetworkModel& m, double a_cut, const Vector& eta, double eta_star,
                       double eta_starstar) {
    if (!(eta_star < 0 && 0 < eta_starstar)) throw DomainError("need eta* < 0 < eta**");
    Discretized d;
    d.adjacency = (m.A.array() >= a_cut).cast<int>().matrix();
    for (Eigen::Index k = 0; k < eta.size(); ++k) {
        if (eta(k) <= eta_star)
            d.shock.push_back(-1);
        else if (eta(k) < eta_starstar)
            d.shock.push_back(0);
        else
            d.shock.push_back(std::nullopt);
    }
    return d;
}

PositionMetrics compute_metrics(const NetworkModel& m, const OmegaParams& p) {
    PositionMetrics pm;
    pm.L = leontief(m);
    auto U = upstreamness(m);
    pm.U = U.value;
    pm.excluded = U.excluded;
    pm.Ddown = downstreamness(m).value;
    auto xi = exposure_shares(m);
    pm.Xi = xi.value;
    pm.HHI = hhi(pm.Xi);
    pm.indegree = m.Atilde.colwise().sum().transpose();
    pm.outdegree = m.Atilde.rowwise().sum();
    auto iu = inventory_upstreamness(m, p);
    pm.Ucal = iu.Ucal;
    pm.UcalAvg = iu.UcalAvg;
    return pm;
}

}  // namespace invamp
