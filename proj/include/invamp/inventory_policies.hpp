#pragma once

#include "invamp/common.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>

namespace invamp {

struct LQParams {
    double alpha = 0.4;
    double delta = 1.0;
    double beta = 0.95;
    double c = 1.0;
    double theta = 0.0;
    double tau = 0.0;
    double rho = 0.7;
};

double lq_policy(const LQParams& p, double expected_next_sales);

enum class SmoothingVariant {
    published,      // 𝓧 = δαρ + θ(1-βρ)
    foc_consistent  // 𝓧 = δαρ - θ(1-βρ)
};
double smoothing_derivative(const LQParams& p, SmoothingVariant v = SmoothingVariant::published);
// 2𝓑²θ²β, the quantity whose crossing of 1 flips the sign factor
double smoothing_sign_index(const LQParams& p);

struct ProductivityPolicy {
    double level;
    double derivative;
};
ProductivityPolicy productivity_policy(double alpha, double beta, double delta, double rho_zeta, double zeta_bar,
                                       double zeta, double expected_demand);

struct MarkovChain {
    Vector grid;
    Matrix P;
};
// Tauchen grid over ±span stationary sds, shifted by mean.
MarkovChain tauchen(double rho, double sigma, std::size_t n, double span = 3.0, double mean = 0.0);

struct BreakdownProblem {
    std::size_t n_A = 15;
    std::size_t n_I = 50;
    double I_max = 3.0;
    double p = 2.0;
    double c = 0.5;
    double beta = 0.95;
    double chi = 0.1;
    double rho = 0.7;
    double sigma = 0.1;
    double Dbar = 1.0;
    double tol = 1e-9;
    int max_iter = 20000;
};

struct BreakdownSolution {
    Vector A;  // demand levels
    Vector I;  // inventory grid
    Matrix P;
    Matrix VG, VB;         // n_I x n_A
    Matrix policy;         // I' values, n_I x n_A
    Eigen::MatrixXi policy_index;
    int iterations = 0;
    double residual = 0.0;
};
BreakdownSolution solve_breakdown_vfi(const BreakdownProblem& prob);

struct TimeToSellProblem {
    double p = 3.0;
    double beta = 0.95;
    double c = 0.3;
    double chi = 0.5;
    double b = 10.0;
    double Dbar = 1.0;
    double rho = 0.9;
    double sigma = 0.1;
    std::size_t n_eps = 15;
    std::size_t n_s = 121;
    double s_max = 3.0;
    std::size_t n_q = 321;
    double q_max = 8.0;
    double tol = 1e-8;
    int max_iter = 5000;
    int howard = 50;
};

struct TimeToSellSolution {
    TimeToSellProblem prob;
    Vector s;    // stock grid
    Vector eps;  // demand deviations
    Vector y;    // demand levels
    Matrix P;
    Matrix V;  // n_s x n_eps, columns indexed by the lagged state
    Matrix q;  // policy
    int iterations = 0;
    double residual = 0.0;
};
TimeToSellSolution solve_timetosell(const TimeToSellProblem& prob);

void save_solution(const TimeToSellSolution& sol, std::ostream& out);
TimeToSellSolution load_solution(std::istream& in);

struct SimulationOptions {
    std::size_t paths = 2000;
    std::size_t T = 960;
    std::size_t burnin = 240;
    std::uint64_t seed = 1;
    int threads = 1;
};

struct AggregateMoments {
    double alpha_mean = 0, alpha_min = 0, alpha_max = 0;
    double corr_alpha_demand = 0;
    double corr_I_demand = 0;
    double corr_I_sales = 0;
    double sd_Q = 0, sd_sales = 0, sd_demand = 0;
    double sd_Q_over_demand = 0;      // σ_Q / σ_q(ε)
    double sd_sales_over_demand = 0;
    double sd_Q_over_sales = 0;
};

struct MomentSet {
    AggregateMoments monthly;
    AggregateMoments annual;
    std::size_t clamped = 0;
    std::size_t visits = 0;
    double stockout_rate = 0;
};
MomentSet simulate_policy(const TimeToSellSolution& sol, const SimulationOptions& opt);

}  // namespace invamp
