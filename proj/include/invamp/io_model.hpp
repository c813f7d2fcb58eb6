#pragma once

#include "invamp/common.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace invamp {

struct SectorLabel {
    std::string id;
    std::string country;
    std::string industry;
    bool operator==(const SectorLabel&) const = default;
};

// Rows are suppliers, columns are buyers, everywhere.
struct IOTable {
    std::vector<SectorLabel> sectors;
    std::vector<std::string> destinations;
    Matrix Z;                       // N x N
    Matrix F;                       // N x J
    std::optional<Matrix> deltaN;   // N x J
    std::optional<Vector> VA;       // N
    Vector Y;                       // N
    double balance_residual = 0.0;  // max relative row-balance residual
    std::string worst_sector;

    std::size_t n() const { return sectors.size(); }
    std::size_t j() const { return destinations.size(); }
    Vector row_total() const;
};

// Throws ValidationError; returns the max relative residual.
double validate(IOTable& t, double rel_tol);

IOTable parse_io_table(std::istream& in, const std::string& source = "<stream>");
IOTable load_io_table(const std::filesystem::path& path);
void save_io_table(const IOTable& t, std::ostream& out);
void save_io_table(const IOTable& t, const std::filesystem::path& path);

// Proportional imputation of net inventory changes to buyers.
Matrix imputed_inventory_use(const IOTable& t);

struct CorrectionOptions {
    double va_floor = 1e-6;  // corrected VA kept above va_floor * Y
};
IOTable inventory_correct(const IOTable& t, const CorrectionOptions& opt = {});

enum class TechnologyMapping {
    expenditure_shares,  // Ã = A
    gamma_scaled         // Ã = A diag(column sums of A)
};

struct NetworkModel {
    std::vector<SectorLabel> sectors;
    std::vector<std::string> destinations;
    Matrix A;       // input requirements
    Matrix Atilde;  // expenditure shares driving propagation
    Matrix B;       // N x J consumption weights, columns sum to 1
    Vector Dbar;    // J
    std::vector<bool> live;

    std::size_t n() const { return static_cast<std::size_t>(Atilde.rows()); }
    std::size_t j() const { return static_cast<std::size_t>(B.cols()); }
    void validate() const;
};

NetworkModel build_network(const IOTable& t,
                           TechnologyMapping map = TechnologyMapping::expenditure_shares);

// Table implied by the model at its steady state: Y = L̃ B D̄.
IOTable to_io_table(const NetworkModel& m);

enum class Topology { line, diamond, random_sparse, dag };

struct SyntheticSpec {
    std::size_t n_sectors = 20;
    std::size_t n_destinations = 1;
    Topology topology = Topology::random_sparse;
    double density = 0.2;
    std::size_t depth = 4;
    std::uint64_t seed = 1;
    double final_share_floor = 0.05;
    double weight_scale = 0.5;
};

NetworkModel synthesize(const SyntheticSpec& spec);

std::string to_json(const NetworkModel& m);

// Upper bound on the spectral radius of a nonnegative matrix
// (Collatz-Wielandt after power iteration).
double spectral_radius_bound(const Matrix& M, int iters = 200);

}  // namespace invamp
