#include "invamp/estimation.hpp"

#include <cmath>
#include <map>
#include <sstream>

namespace invamp {

Demeaned demean(const Matrix& data, const std::vector<std::size_t>& group) {
    if (static_cast<Eigen::Index>(group.size()) != data.rows()) throw ValidationError("one group key per row needed");
    std::map<std::size_t, std::vector<Eigen::Index>> members;
    for (Eigen::Index r = 0; r < data.rows(); ++r) members[group[r]].push_back(r);
    Demeaned out{data, {}};
    for (const auto& [g, rows] : members) {
        if (rows.size() == 1) {
            out.data.row(rows[0]).setZero();
            out.singleton_rows.push_back(static_cast<std::size_t>(rows[0]));
            continue;
        }
        Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(data.cols());
        for (auto r : rows) mean += data.row(r);
        mean /= static_cast<double>(rows.size());
        for (auto r : rows) out.data.row(r) -= mean;
    }
    return out;
}

double RegressionResult::at(const std::string& name) const {
    for (std::size_t k = 0; k < names.size(); ++k)
        if (names[k] == name) return coef(static_cast<Eigen::Index>(k));
    throw Error("no coefficient named " + name);
}

RegressionResult ols(const Vector& y, const Matrix& X, std::vector<std::string> names, std::size_t absorbed_dof) {
    const auto n = X.rows(), k = X.cols();
    if (y.size() != n) throw ValidationError("outcome and design lengths differ");
    if (names.empty())
        for (Eigen::Index c = 0; c < k; ++c) names.push_back("x" + std::to_string(c));
    if (static_cast<Eigen::Index>(names.size()) != k) throw ValidationError("one name per regressor needed");
    if (n < k) throw EstimationError("fewer observations than regressors");

    Eigen::ColPivHouseholderQR<Matrix> qr(X);
    double scale = X.cwiseAbs().maxCoeff();
    qr.setThreshold(1e-10);
    if (scale == 0 || qr.rank() < k) {
        std::ostringstream os;
        os << "design is rank deficient; collinear columns:";
        const auto& perm = qr.colsPermutation().indices();
        for (Eigen::Index c = qr.rank(); c < k; ++c) os << ' ' << names[perm(c)];
        throw EstimationError(os.str());
    }
    RegressionResult r;
    r.names = std::move(names);
    r.coef = qr.solve(y);
    Vector e = y - X * r.coef;
    r.n = static_cast<std::size_t>(n);
    double dof = static_cast<double>(n - k) - static_cast<double>(absorbed_dof);
    double ssr = e.squaredNorm();
    r.sigma2 = dof > 0 ? ssr / dof : 0.0;
    double ybar = y.mean();
    double sst = (y.array() - ybar).square().sum();
    r.r2 = sst > 0 ? 1.0 - ssr / sst : 1.0;
    Matrix XtX = X.transpose() * X;
    Matrix inv = XtX.ldlt().solve(Matrix::Identity(k, k));
    r.se = (r.sigma2 * inv.diagonal().array()).sqrt().matrix();
    double denom = std::max(1.0, X.cwiseAbs().maxCoeff() * std::max(1.0, y.cwiseAbs().maxCoeff()) *
                                     static_cast<double>(n));
    r.orthogonality = (X.transpose() * e).cwiseAbs().maxCoeff() / denom;
    return r;
}

namespace {

struct Long {
    Vector y;
    Matrix X;
    std::vector<std::size_t> unit;
};

Long to_long(const Matrix& Y, const std::vector<Matrix>& cols) {
    const auto N = Y.rows(), T = Y.cols();
    Long l;
    l.y.resize(N * T);
    l.X.resize(N * T, static_cast<Eigen::Index>(cols.size()));
    l.unit.resize(static_cast<std::size_t>(N * T));
    for (Eigen::Index r = 0; r < N; ++r)
        for (Eigen::Index t = 0; t < T; ++t) {
            auto row = r * T + t;
            l.y(row) = Y(r, t);
            l.unit[static_cast<std::size_t>(row)] = static_cast<std::size_t>(r);
            for (std::size_t c = 0; c < cols.size(); ++c) l.X(row, static_cast<Eigen::Index>(c)) = cols[c](r, t);
        }
    return l;
}

RegressionResult fit_long(Long l, std::vector<std::string> names, bool fe, std::size_t n_units) {
    if (!l.y.allFinite() || !l.X.allFinite()) throw EstimationError("non-finite values in the panel");
    if (fe) {
        Matrix all(l.y.size(), l.X.cols() + 1);
        all.col(0) = l.y;
        all.rightCols(l.X.cols()) = l.X;
        auto d = demean(all, l.unit);
        l.y = d.data.col(0);
        l.X = d.data.rightCols(l.X.cols());
        return ols(l.y, l.X, std::move(names), n_units);
    }
    return ols(l.y, l.X, std::move(names));
}

void check_panel(const SectorPanel& p) {
    if (p.dlogY.rows() != p.eta.rows() || p.dlogY.cols() != p.eta.cols())
        throw ValidationError("outcome and shock panels differ in shape");
}

}  // namespace

std::vector<double> default_bin_edges() { return {1, 2, 3, 4, 5, 6}; }

BinnedResult binned_regression(const SectorPanel& panel, const Vector& U, const std::vector<double>& edges,
                               bool fixed_effects) {
    check_panel(panel);
    const auto N = panel.eta.rows();
    if (U.size() != N) throw ValidationError("one upstreamness value per sector needed");
    if (edges.empty()) throw ValidationError("need at least one bin edge");
    // assign each sector to the last edge not above its U; below the first edge goes to bin 0
    std::vector<std::size_t> bin(static_cast<std::size_t>(N), 0);
    std::vector<bool> used(static_cast<std::size_t>(N), true);
    std::vector<std::size_t> count(edges.size(), 0);
    for (Eigen::Index r = 0; r < N; ++r) {
        if (!std::isfinite(U(r))) {
            used[r] = false;
            continue;
        }
        std::size_t b = 0;
        for (std::size_t k = 0; k < edges.size(); ++k)
            if (U(r) >= edges[k]) b = k;
        bin[r] = b;
        ++count[b];
    }
    BinnedResult res;
    // merge empty bins upward (the top bin merges downward)
    std::vector<std::size_t> target(edges.size());
    std::vector<std::size_t> kept;
    for (std::size_t k = 0; k < edges.size(); ++k)
        if (count[k] > 0) kept.push_back(k);
    if (kept.empty()) throw EstimationError("no sector has a finite upstreamness");
    for (std::size_t k = 0; k < edges.size(); ++k) {
        std::size_t t = kept.back();
        for (auto c : kept)
            if (c >= k) {
                t = c;
                break;
            }
        target[k] = t;
        if (count[k] == 0) {
            std::ostringstream os;
            os << "bin starting at " << edges[k] << " is empty; merged";
            res.warnings.push_back(os.str());
        }
    }
    std::map<std::size_t, std::size_t> col_of;
    for (std::size_t c = 0; c < kept.size(); ++c) col_of[kept[c]] = c;

    std::vector<Matrix> cols(kept.size(), Matrix::Zero(N, panel.eta.cols()));
    std::vector<std::string> names;
    for (auto k : kept) {
        std::ostringstream os;
        os << "bin_" << edges[k];
        names.push_back(os.str());
        res.lower.push_back(edges[k]);
        res.sectors_per_bin.push_back(0);
    }
    Matrix Y = panel.dlogY;
    for (Eigen::Index r = 0; r < N; ++r) {
        if (!used[r]) {
            Y.row(r).setZero();
            continue;
        }
        auto c = col_of[target[bin[r]]];
        cols[c].row(r) = panel.eta.row(r);
        ++res.sectors_per_bin[c];
    }
    res.fit = fit_long(to_long(Y, cols), names, fixed_effects, static_cast<std::size_t>(N));
    res.beta = res.fit.coef;
    return res;
}

ModelConsistentResult model_consistent_regression(const SectorPanel& panel, const Matrix& upsilon,
                                                  const Vector& alpha, bool fixed_effects) {
    check_panel(panel);
    if (upsilon.rows() != panel.eta.rows() || upsilon.cols() != panel.eta.cols())
        throw ValidationError("weighted-shock panel has the wrong shape");
    if (alpha.size() != panel.eta.rows()) throw ValidationError("one inventory intensity per sector needed");
    if (alpha.cwiseAbs().maxCoeff() == 0)
        throw EstimationError("all inventory intensities are zero; the inventory coefficient is not identified");
    Matrix au = alpha.asDiagonal() * upsilon;
    ModelConsistentResult res;
    try {
        res.fit = fit_long(to_long(panel.dlogY, {panel.eta, au}), {"eta", "alpha_upsilon"}, fixed_effects,
                           static_cast<std::size_t>(panel.eta.rows()));
    } catch (const EstimationError& e) {
        throw EstimationError(std::string(e.what()) +
                              "; shocks and weighted shocks are collinear, use multi-destination data");
    }
    res.delta1 = res.fit.coef(0);
    res.delta2 = res.fit.coef(1);
    res.implied_alpha_rho = res.delta2 * alpha.mean();
    return res;
}

RegressionResult saturated_regression(const SectorPanel& panel, const Vector& U, const Vector& alpha,
                                      bool fixed_effects) {
    check_panel(panel);
    const auto N = panel.eta.rows();
    if (U.size() != N || alpha.size() != N) throw ValidationError("one U and alpha per sector needed");
    Matrix eU = U.asDiagonal() * panel.eta;
    Matrix eA = alpha.asDiagonal() * panel.eta;
    Matrix eUA = alpha.asDiagonal() * eU;
    return fit_long(to_long(panel.dlogY, {panel.eta, eU, eA, eUA}), {"eta", "eta_U", "eta_alpha", "eta_U_alpha"},
                    fixed_effects, static_cast<std::size_t>(N));
}

}  // namespace invamp
