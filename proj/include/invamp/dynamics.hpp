#pragma once

#include "invamp/io_model.hpp"
#include "invamp/network_metrics.hpp"

#include <functional>
#include <utility>
#include <vector>

namespace invamp {

struct InventoryFn {
    std::function<double(double)> level;
    std::function<double(double)> slope;

    static InventoryFn zero();
    static InventoryFn linear(double alpha);
    static InventoryFn sqrt_scaled(double k);
    // constant derivative a with level a*x + b; the intercept cancels in changes
    static InventoryFn affine(double a, double b);
};

struct Cell {
    std::size_t row;
    std::size_t col;
};

struct ChainState {
    Matrix Y;  // stages x T
    Matrix I;  // stages x T
    Vector D;  // T
    std::vector<Cell> negative_output;
};

// Stage 0 sells to consumers; the economy sits at steady state before t = 0.
ChainState simulate_chain(const std::vector<InventoryFn>& fns, const Vector& demand, double rho, double Dbar);

struct AmplificationReport {
    std::vector<double> slopes;       // I'_n at the steady state
    std::vector<double> increments;   // ρ I'_n Π_{j<n}(1+(ρ-1)I'_j)
    std::vector<double> elasticity;   // 1 + cumulative increments
    std::vector<bool> violates;       // I'_n outside [0, 1/(1-ρ))
    bool amplifies = false;
};
AmplificationReport amplification_check(const std::vector<InventoryFn>& fns, double rho, double Dbar);

// Y_t = L̃ B D_t + αρ L̃[I-ωÃ]^{-1} B Δ_t
struct OutputOperator {
    Matrix LB;  // N x J
    Matrix MB;  // N x J, multiplies Δ with the αρ factor folded in
    Matrix apply(const Matrix& D, const Vector& Dprev) const;
};
OutputOperator make_output_operator(const NetworkModel& m, const OmegaParams& p);

struct OutputPanel {
    Matrix Y;       // N x (T+1)
    Matrix growth;  // N x T arithmetic
    Matrix dlogY;   // N x T
    std::vector<Cell> negative_output;
};

// D is J x (T+1); the period before column 0 is at the steady state D̄.
OutputPanel network_output(const NetworkModel& m, const OmegaParams& p, const Matrix& D);
OutputPanel output_panel(const Matrix& Y);

// Loadings K with Δlog Y = K η: K_rj = ξ_rj (1 + αρ 𝒰_rj).
Matrix growth_loadings(const NetworkModel& m, const OmegaParams& p);
Matrix growth_approx(const NetworkModel& m, const OmegaParams& p, const Matrix& eta_dest);

// Output elasticity to a common demand shock: 1 + αρ 𝒰^r.
Vector output_elasticity(const NetworkModel& m, const OmegaParams& p);

Vector analytic_variance(const NetworkModel& m, const OmegaParams& p, const Vector& sigma_eta,
                         double varrho = 0.0, Diagnostics* diag = nullptr);

// Inventory loading E (N x J) for sector-specific intensities: Y_t = L̃BD_t + E Δ_t.
Matrix hetero_loading(const NetworkModel& m, const Vector& alpha, double rho);
OutputPanel hetero_output(const NetworkModel& m, const Vector& alpha, double rho, const Matrix& D);

// Splits sector i into an upstream stage (appended at index N) feeding i.
NetworkModel fragment(const NetworkModel& m, std::size_t i);

}  // namespace invamp
