#pragma once

#include "invamp/io_model.hpp"

#include <optional>
#include <vector>

namespace invamp {

struct OmegaParams {
    double alpha = 0.4;
    double rho = 0.7;
    double omega() const { return 1.0 + alpha * (rho - 1.0); }
    // throws DomainError unless omega in (0,1]; omega == 1 only when alpha == 0
    void validate() const;
};

Matrix leontief(const NetworkModel& m);

// Position statistics computed from data (input-requirement orientation).
// Zero-output sectors get NaN and are listed in `excluded`.
struct SectorVector {
    Vector value;
    std::vector<std::size_t> excluded;
};

SectorVector upstreamness(const IOTable& t);
SectorVector upstreamness(const NetworkModel& m);
SectorVector downstreamness(const IOTable& t);
SectorVector downstreamness(const NetworkModel& m);

// Rows of sectors with no sales are NaN and reported in `excluded`.
struct ShareMatrix {
    Matrix value;
    std::vector<std::size_t> excluded;
};
ShareMatrix exposure_shares(const NetworkModel& m);

Vector hhi(const Matrix& xi);

struct InventoryUpstreamness {
    Matrix Ucal;     // N x J
    Vector UcalAvg;  // N
};
InventoryUpstreamness inventory_upstreamness(const NetworkModel& m, const OmegaParams& p);

// Weighted shock υ for one period given destination shifters (J).
Vector weighted_shock(const NetworkModel& m, const OmegaParams& p, const Vector& eta_dest);
// Per-sector shifters: eta (N x J), row r holds the shifters relevant for sector r.
Vector weighted_shock(const NetworkModel& m, const OmegaParams& p, const Matrix& eta_by_sector);

struct Discretized {
    Eigen::MatrixXi adjacency;            // N x N, 1 iff a >= cutoff
    std::vector<std::optional<int>> shock;  // -1, 0 or missing
};
Discretized discretize(const NetworkModel& m, double a_cut, const Vector& eta, double eta_star,
                       double eta_starstar);

struct PositionMetrics {
    Matrix L;
    Vector U;
    Vector Ddown;
    Matrix Xi;
    Vector HHI;
    Vector indegree;
    Vector outdegree;
    Matrix Ucal;
    Vector UcalAvg;
    std::vector<std::size_t> excluded;
};
PositionMetrics compute_metrics(const NetworkModel& m, const OmegaParams& p);

}  // namespace invamp
