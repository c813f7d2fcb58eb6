#pragma once

#include "invamp/io_model.hpp"
#include "invamp/network_metrics.hpp"

#include <filesystem>
#include <string>

namespace testsupport {

using invamp::Matrix;
using invamp::Vector;

inline std::filesystem::path fixture(const std::string& name) {
    return std::filesystem::path(INVAMP_FIXTURE_DIR) / name;
}

inline invamp::NetworkModel random_model(std::uint64_t seed, std::size_t N, std::size_t J, double density = 0.3,
                                         double scale = 0.5) {
    invamp::SyntheticSpec s;
    s.n_sectors = N;
    s.n_destinations = J;
    s.topology = invamp::Topology::random_sparse;
    s.density = density;
    s.seed = seed;
    s.weight_scale = scale;
    return invamp::synthesize(s);
}

inline invamp::NetworkModel line_model(std::size_t N, double w = 0.5) {
    invamp::SyntheticSpec s;
    s.n_sectors = N;
    s.topology = invamp::Topology::line;
    s.weight_scale = w;
    return invamp::synthesize(s);
}

// Hand-built model; A = Ã, sectors named s0, s1, ...
inline invamp::NetworkModel manual_model(const Matrix& At, const Matrix& B, const Vector& Dbar) {
    invamp::NetworkModel m;
    for (Eigen::Index r = 0; r < At.rows(); ++r)
        m.sectors.push_back({"s" + std::to_string(r), "A", "i" + std::to_string(r)});
    for (Eigen::Index j = 0; j < B.cols(); ++j) m.destinations.push_back("d" + std::to_string(j));
    m.A = At;
    m.Atilde = At;
    m.B = B;
    m.Dbar = Dbar;
    m.live.assign(At.rows(), true);
    m.validate();
    return m;
}

// Truncated power series sum_{n<K} c_n A^n M with c_n supplied by the caller.
template <class Coef>
Matrix series(const Matrix& A, const Matrix& M, int K, Coef c) {
    Matrix P = M, acc = Matrix::Zero(M.rows(), M.cols());
    for (int n = 0; n < K; ++n) {
        acc += c(n) * P;
        P = A * P;
    }
    return acc;
}

inline double col_norm(const Matrix& A) { return A.cwiseAbs().colwise().sum().maxCoeff(); }

}  // namespace testsupport
