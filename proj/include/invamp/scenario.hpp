#pragma once

#include "invamp/dynamics.hpp"
#include "invamp/estimation.hpp"
#include "invamp/io_model.hpp"
#include "invamp/network_metrics.hpp"
#include "invamp/shock_engine.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace invamp {

enum class Mode { single_destination, multi_destination };
enum class VolatilityMeasure { time_series, cross_section };

// One destination whose consumption weights are the demand-weighted mix of B.
NetworkModel collapse_destinations(const NetworkModel& m);

// First-order panel: i.i.d. destination growth shifters around the steady
// state, for which Δlog Y = K η holds exactly in arithmetic growth.
struct SimPanel {
    Matrix eta_dest;  // J x T
    Matrix eta_ind;   // N x T
    Matrix upsilon;   // N x T
    Matrix dlogY;     // N x T
};
Matrix draw_shifters(const Matrix& factor, std::size_t T, std::uint64_t seed, std::uint64_t sim);
SimPanel simulate_first_order(const NetworkModel& m, const OmegaParams& p, const Matrix& eta_dest);

struct Scenario {
    std::string name = "scenario";
    NetworkModel baseline;
    std::optional<NetworkModel> counterfactual;
    std::optional<std::size_t> fragment_sector;
    double alpha = 0.4;
    double alpha_scale = 1.0;
    double rho = 0.7;
    double varrho = 0.0;
    Vector sigma;                      // per destination, or one value broadcast
    std::optional<double> target_slope;  // calibrate varrho when set
    std::size_t T = 20;
    std::size_t n_sims = 100;
    std::uint64_t seed = 1;
    Mode mode = Mode::multi_destination;
    VolatilityMeasure measure = VolatilityMeasure::time_series;
    int threads = 1;
};

struct Moments {
    double sigma_eta = 0;
    double sigma_y = 0;
    double elasticity = 0;
    std::vector<double> per_sim_sigma_eta, per_sim_sigma_y, per_sim_elasticity;
};

struct MomentReport {
    std::string name;
    Mode mode = Mode::multi_destination;
    double varrho = 0;
    Moments baseline;
    Moments counterfactual;
};

MomentReport run_scenario(const Scenario& s);

struct MomentTable {
    std::string csv;
    std::string text;
};
MomentTable moment_table(const std::vector<MomentReport>& reports, bool with_reference = true);

struct FigureRow {
    std::string run;  // "inventories" or "no_inventories"
    double bin_lower;
    double beta;
    double lo, hi;
};
std::vector<FigureRow> figure_data(const NetworkModel& m, double alpha, double rho, const Vector& sigma,
                                   double varrho, std::size_t T, std::size_t n_sims, std::uint64_t seed,
                                   const std::vector<double>& edges = default_bin_edges());

// Config helpers shared with the command line.
NetworkModel model_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
Vector sigma_from_json(const nlohmann::json& j, std::size_t J, double fallback);

struct PipelineResult {
    int status = 0;
    std::string failed_stage;
    std::string message;
    std::filesystem::path dir;
};
PipelineResult pipeline(const std::filesystem::path& config, const std::filesystem::path& out_dir,
                        std::optional<std::uint64_t> seed_override = std::nullopt, int threads = 1);

std::string sha256_file(const std::filesystem::path& p);

}  // namespace invamp

namespace invamp {

void write_metrics_csv(const NetworkModel& m, const PositionMetrics& pm, std::ostream& out);
void write_matrix_csv(const Matrix& M, const std::vector<std::string>& row_ids,
                      const std::vector<std::string>& col_names, std::ostream& out);
std::string reference_annotations();

}  // namespace invamp
