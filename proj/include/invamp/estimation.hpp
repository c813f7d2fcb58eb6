#pragma once

#include "invamp/common.hpp"

#include <string>
#include <vector>

namespace invamp {

struct Demeaned {
    Matrix data;
    std::vector<std::size_t> singleton_rows;
};
// Subtracts group means column by column. Singleton groups are zeroed.
Demeaned demean(const Matrix& data, const std::vector<std::size_t>& group);

struct RegressionResult {
    std::vector<std::string> names;
    Vector coef;
    Vector se;
    double sigma2 = 0.0;
    double r2 = 0.0;
    std::size_t n = 0;
    double orthogonality = 0.0;  // scaled max |X'e|
    double at(const std::string& name) const;
};

RegressionResult ols(const Vector& y, const Matrix& X, std::vector<std::string> names = {},
                     std::size_t absorbed_dof = 0);

// Sector panel in wide form: rows are sectors, columns periods.
struct SectorPanel {
    Matrix dlogY;  // N x T
    Matrix eta;    // N x T shift-share shocks
};

std::vector<double> default_bin_edges();  // 1,2,...,6 with the top bin open

struct BinnedResult {
    std::vector<double> lower;  // lower edge per (possibly merged) bin
    Vector beta;
    std::vector<std::size_t> sectors_per_bin;
    std::vector<std::string> warnings;
    RegressionResult fit;
};
BinnedResult binned_regression(const SectorPanel& panel, const Vector& U,
                               const std::vector<double>& edges = default_bin_edges(), bool fixed_effects = true);

struct ModelConsistentResult {
    double delta1 = 0.0;
    double delta2 = 0.0;
    double implied_alpha_rho = 0.0;  // δ2 times the mean intensity
    RegressionResult fit;
};
ModelConsistentResult model_consistent_regression(const SectorPanel& panel, const Matrix& upsilon,
                                                  const Vector& alpha, bool fixed_effects = true);

RegressionResult saturated_regression(const SectorPanel& panel, const Vector& U, const Vector& alpha,
                                      bool fixed_effects = true);

}  // namespace invamp
