#pragma once

#include "invamp/io_model.hpp"
#include "invamp/network_metrics.hpp"

#include <cstdint>
#include <vector>

namespace invamp {

struct DemandProcess {
    Vector Dbar;
    double rho = 0.7;
    Vector sigma;
    double varrho = 0.0;
    std::uint64_t seed = 1;
};

Matrix build_covariance(const Vector& sigma, double varrho);

// Factor F with F F' = Σ. Exact rank-one factor when varrho == 1.
Matrix covariance_factor(const Vector& sigma, double varrho);

struct DemandPaths {
    std::vector<Matrix> D;  // one J x (T+1) matrix per path, column 0 = D̄
    std::size_t rejected = 0;
};

// Draws are keyed by (seed, path, destination) so results do not depend on
// the thread count.
DemandPaths draw_demand(const DemandProcess& proc, std::size_t T, std::size_t n_paths, int threads = 1);

enum class GrowthKind { arithmetic, log };
Matrix destination_growth(const Matrix& D, GrowthKind kind = GrowthKind::arithmetic);

struct ShockPanel {
    Matrix D;         // J x (T+1)
    Matrix eta_dest;  // J x T
    Matrix eta_ind;   // N x T
    Matrix upsilon;   // N x T
};
ShockPanel make_shock_panel(const NetworkModel& m, const OmegaParams& p, const Matrix& D,
                            GrowthKind kind = GrowthKind::arithmetic);

// Cells are (origin country, industry) pairs, one per sector of the model.
struct ConsumptionPanel {
    std::vector<std::size_t> origin;    // per cell
    std::vector<std::size_t> industry;  // per cell
    std::size_t n_origins = 0, n_industries = 0;
    std::size_t J = 0, T = 0;           // T growth periods, T+1 levels
    std::vector<double> logF;           // cell-major: [cell][j][t], t in 0..T
    double noise_sd = 0.0;
    Matrix shifters;                    // J x T generating shifters

    std::size_t n_cells() const { return origin.size(); }
    double& at(std::size_t cell, std::size_t j, std::size_t t) { return logF[(cell * J + j) * (T + 1) + t]; }
    double at(std::size_t cell, std::size_t j, std::size_t t) const {
        return logF[(cell * J + j) * (T + 1) + t];
    }
    double dlog(std::size_t cell, std::size_t j, std::size_t t) const { return at(cell, j, t + 1) - at(cell, j, t); }
};

ConsumptionPanel synthesize_consumption_panel(const std::vector<SectorLabel>& cells, const Matrix& shifters,
                                              double noise_sd, std::uint64_t seed,
                                              const Matrix* initial_log = nullptr);

// Leave-out estimate for one (origin, industry): J x T.
Matrix estimate_shifters(const ConsumptionPanel& panel, std::size_t origin, std::size_t industry);
// Leave-out estimates for every cell, using group sums.
std::vector<Matrix> estimate_all_shifters(const ConsumptionPanel& panel);

Matrix shift_share(const Matrix& xi, const Matrix& eta_dest);
// Per-sector shifters: eta_by_sector[r] is J x T.
Matrix shift_share(const Matrix& xi, const std::vector<Matrix>& eta_by_sector);

// Population sd of the shift-share shock per sector under i.i.d. periods.
Vector shift_share_sd(const Matrix& xi, const Vector& sigma, double varrho);

struct SlopeFit {
    double intercept = 0.0;
    double slope = 0.0;
};
SlopeFit fit_line(const Vector& x, const Vector& y);

enum class CalibrationMethod { analytic, simulated };

struct CalibrationOptions {
    double tol = 5e-4;
    int max_iter = 30;
    double lo = 0.0;
    double hi = 0.99;
    CalibrationMethod method = CalibrationMethod::analytic;
    std::size_t T = 200;
    std::size_t n_sims = 50;
    std::uint64_t seed = 1;
};

struct CalibrationResult {
    double varrho = 0.0;
    double slope = 0.0;
    int iterations = 0;
    bool monotone = true;
};

double volatility_slope(const NetworkModel& m, const Vector& sigma, double varrho,
                        const CalibrationOptions& opt = {});
CalibrationResult calibrate_varrho(const NetworkModel& m, const Vector& sigma, double target_slope,
                                   const CalibrationOptions& opt = {});

}  // namespace invamp
