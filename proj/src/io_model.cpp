#include "invamp/io_model.hpp"

#include "invamp/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace invamp {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

double parse_number(const std::string& s, std::size_t line) {
    double v = 0.0;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    while (b < e && *b == ' ') ++b;
    while (e > b && e[-1] == ' ') --e;
    if (b < e && *b == '+') ++b;
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e || b == e)
        throw ParseError("not a number: '" + s + "'", line);
    return v;
}

std::string fmt(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

bool starts_with(const std::string& s, const std::string& pre) {
    return s.size() >= pre.size() && s.compare(0, pre.size(), pre) == 0;
}

}  // namespace

Vector IOTable::row_total() const {
    Vector r = Z.rowwise().sum() + F.rowwise().sum();
    if (deltaN) r += deltaN->rowwise().sum();
    return r;
}

double validate(IOTable& t, double rel_tol) {
    const auto N = static_cast<Eigen::Index>(t.n());
    const auto J = static_cast<Eigen::Index>(t.j());
    if (t.Z.rows() != N || t.Z.cols() != N) throw ValidationError("Z must be N x N");
    if (t.F.rows() != N || t.F.cols() != J) throw ValidationError("F must be N x J");
    if (t.Y.size() != N) throw ValidationError("Y must have N entries");
    if (t.deltaN && (t.deltaN->rows() != N || t.deltaN->cols() != J))
        throw ValidationError("deltaN must be N x J");
    if (t.VA && t.VA->size() != N) throw ValidationError("VA must have N entries");

    auto check_nonneg = [&](const Matrix& M, const char* what) {
        for (Eigen::Index r = 0; r < M.rows(); ++r)
            for (Eigen::Index c = 0; c < M.cols(); ++c) {
                if (!std::isfinite(M(r, c)))
                    throw ValidationError(std::string("non-finite ") + what + " entry at sector " +
                                          t.sectors[r].id);
                if (M(r, c) < 0)
                    throw ValidationError(std::string("negative ") + what + " flow from sector " +
                                          t.sectors[r].id);
            }
    };
    check_nonneg(t.Z, "Z");
    check_nonneg(t.F, "F");
    for (Eigen::Index r = 0; r < N; ++r)
        if (!std::isfinite(t.Y(r)) || t.Y(r) < 0)
            throw ValidationError("invalid gross output for sector " + t.sectors[r].id);

    Vector tot = t.row_total();
    double worst = 0.0;
    Eigen::Index wi = -1;
    for (Eigen::Index r = 0; r < N; ++r) {
        double diff = std::abs(t.Y(r) - tot(r));
        double scale = std::max(std::abs(t.Y(r)), std::abs(tot(r)));
        double rel = diff == 0.0 ? 0.0 : diff / scale;
        if (rel > worst) {
            worst = rel;
            wi = r;
        }
    }
    t.balance_residual = worst;
    t.worst_sector = wi >= 0 ? t.sectors[wi].id : "";
    if (worst > rel_tol) {
        std::ostringstream os;
        os << "row balance violated: worst sector " << t.worst_sector << " relative residual "
           << worst << " > " << rel_tol;
        throw ValidationError(os.str());
    }
    return worst;
}

IOTable parse_io_table(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError(source + ": empty file", 1);
    ++lineno;
    auto head = split_csv(line);
    if (head.size() < 5 || head[0] != "sector_id" || head[1] != "country" || head[2] != "industry")
        throw ParseError(source + ": header must start with sector_id,country,industry", lineno);
    if (head.back() != "Y") throw ParseError(source + ": last header column must be Y", lineno);

    std::size_t nz = 0, nf = 0, ndn = 0;
    bool has_va = false;
    std::vector<std::string> dests, dn_dests;
    // enforce ordering Z..., F..., dN..., VA, Y
    int stage = 0;
    for (std::size_t c = 3; c + 1 < head.size(); ++c) {
        const auto& h = head[c];
        int st;
        if (starts_with(h, "Z_")) {
            st = 0;
            ++nz;
        } else if (starts_with(h, "F_")) {
            st = 1;
            ++nf;
            dests.push_back(h.substr(2));
        } else if (starts_with(h, "dN_")) {
            st = 2;
            ++ndn;
            dn_dests.push_back(h.substr(3));
        } else if (h == "VA") {
            st = 3;
            if (has_va) throw ParseError(source + ": duplicate VA column", lineno);
            has_va = true;
        } else {
            throw ParseError(source + ": unexpected column '" + h + "'", lineno);
        }
        if (st < stage) throw ParseError(source + ": columns out of order at '" + h + "'", lineno);
        stage = st;
    }
    if (nf == 0) throw ParseError(source + ": no final-demand columns", lineno);
    if (ndn != 0 && ndn != nf)
        throw ParseError(source + ": dN columns must match F columns", lineno);
    if (ndn != 0 && dn_dests != dests)
        throw ParseError(source + ": dN destination labels must match F labels", lineno);

    std::vector<std::vector<double>> rows;
    std::vector<SectorLabel> labels;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto f = split_csv(line);
        if (f.size() != head.size())
            throw ParseError(source + ": expected " + std::to_string(head.size()) + " fields, got " +
                                 std::to_string(f.size()),
                             lineno);
        labels.push_back({f[0], f[1], f[2]});
        std::vector<double> v;
        for (std::size_t c = 3; c < f.size(); ++c) v.push_back(parse_number(f[c], lineno));
        rows.push_back(std::move(v));
    }
    const std::size_t N = rows.size();
    if (N == 0) throw ParseError(source + ": no sector rows", lineno);
    if (nz != N)
        throw ParseError(source + ": header declares " + std::to_string(nz) + " Z columns for " +
                             std::to_string(N) + " sectors",
                         1);

    IOTable t;
    t.sectors = std::move(labels);
    t.destinations = dests;
    const auto n = static_cast<Eigen::Index>(N), J = static_cast<Eigen::Index>(nf);
    t.Z.resize(n, n);
    t.F.resize(n, J);
    t.Y.resize(n);
    if (ndn) t.deltaN = Matrix(n, J);
    if (has_va) t.VA = Vector(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto& v = rows[r];
        std::size_t k = 0;
        for (Eigen::Index c = 0; c < n; ++c) t.Z(r, c) = v[k++];
        for (Eigen::Index c = 0; c < J; ++c) t.F(r, c) = v[k++];
        if (ndn)
            for (Eigen::Index c = 0; c < J; ++c) (*t.deltaN)(r, c) = v[k++];
        if (has_va) (*t.VA)(r) = v[k++];
        t.Y(r) = v[k++];
    }
    validate(t, 1e-6);
    return t;
}

IOTable load_io_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    return parse_io_table(in, path.string());
}

void save_io_table(const IOTable& t, std::ostream& out) {
    const auto N = static_cast<Eigen::Index>(t.n()), J = static_cast<Eigen::Index>(t.j());
    out << "sector_id,country,industry";
    for (Eigen::Index c = 0; c < N; ++c) out << ",Z_" << (c + 1);
    for (const auto& d : t.destinations) out << ",F_" << d;
    if (t.deltaN)
        for (const auto& d : t.destinations) out << ",dN_" << d;
    if (t.VA) out << ",VA";
    out << ",Y\n";
    for (Eigen::Index r = 0; r < N; ++r) {
        const auto& s = t.sectors[r];
        out << s.id << ',' << s.country << ',' << s.industry;
        for (Eigen::Index c = 0; c < N; ++c) out << ',' << fmt(t.Z(r, c));
        for (Eigen::Index c = 0; c < J; ++c) out << ',' << fmt(t.F(r, c));
        if (t.deltaN)
            for (Eigen::Index c = 0; c < J; ++c) out << ',' << fmt((*t.deltaN)(r, c));
        if (t.VA) out << ',' << fmt((*t.VA)(r));
        out << ',' << fmt(t.Y(r)) << '\n';
    }
}

void save_io_table(const IOTable& t, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    save_io_table(t, out);
}

Matrix imputed_inventory_use(const IOTable& t) {
    if (!t.deltaN) throw ValidationError("table has no inventory-change columns");
    const auto N = static_cast<Eigen::Index>(t.n()), J = static_cast<Eigen::Index>(t.j());
    const Matrix& dN = *t.deltaN;
    Matrix M = Matrix::Zero(N, N);
    for (Eigen::Index r = 0; r < N; ++r) {
        for (Eigen::Index j = 0; j < J; ++j) {
            double d = dN(r, j);
            if (d == 0.0) continue;
            std::vector<bool> mask(N, false);
            double denom = 0.0;
            for (Eigen::Index s = 0; s < N; ++s)
                if (t.sectors[s].country == t.destinations[j]) {
                    mask[s] = true;
                    denom += t.Z(r, s);
                }
            if (denom <= 0.0) {
                // no buyers located in j: spread over all buyers
                std::fill(mask.begin(), mask.end(), true);
                denom = t.Z.row(r).sum();
            }
            if (denom <= 0.0)
                throw AllocationError("sector " + t.sectors[r].id +
                                      " has a net inventory change but no intermediate sales");
            for (Eigen::Index s = 0; s < N; ++s)
                if (mask[s]) M(r, s) += t.Z(r, s) / denom * d;
        }
    }
    return M;
}

IOTable inventory_correct(const IOTable& t, const CorrectionOptions& opt) {
    if (!t.deltaN) throw ValidationError("inventory_correct needs deltaN");
    if (t.deltaN->isZero(0.0)) return t;

    const auto N = static_cast<Eigen::Index>(t.n());
    Matrix M = imputed_inventory_use(t);
    Vector va0 = t.VA ? *t.VA : Vector(t.Y - t.Z.colwise().sum().transpose());
    for (Eigen::Index s = 0; s < N; ++s) {
        double use = M.col(s).sum();
        double cap = va0(s) - opt.va_floor * t.Y(s);
        if (use > cap) M.col(s) *= cap > 0 ? cap / use : 0.0;
    }
    Matrix Zp = t.Z + M;
    for (Eigen::Index r = 0; r < N; ++r)
        for (Eigen::Index s = 0; s < N; ++s) {
            if (Zp(r, s) < -1e-12 * std::max(1.0, t.Y(r)))
                throw AllocationError("inventory drawdown of sector " + t.sectors[r].id +
                                      " exceeds its sales to " + t.sectors[s].id);
            if (Zp(r, s) < 0) Zp(r, s) = 0;
        }
    Vector unallocated = t.deltaN->rowwise().sum() - M.rowwise().sum();

    IOTable out;
    out.sectors = t.sectors;
    out.destinations = t.destinations;
    out.Z = Zp;
    out.F = t.F;
    out.Y = t.Y - unallocated;
    out.VA = Vector(out.Y - Zp.colwise().sum().transpose());
    validate(out, 1e-9);
    for (Eigen::Index s = 0; s < N; ++s)
        if (out.Y(s) > 0 && Zp.col(s).sum() >= out.Y(s))
            throw BrauerSolowError("corrected input use of sector " + t.sectors[s].id +
                                   " reaches its output");
    return out;
}

void NetworkModel::validate() const {
    const auto N = static_cast<Eigen::Index>(sectors.size());
    if (A.rows() != N || A.cols() != N || Atilde.rows() != N || Atilde.cols() != N)
        throw ValidationError("technology matrices must be N x N");
    if (B.rows() != N || B.cols() != static_cast<Eigen::Index>(destinations.size()))
        throw ValidationError("B must be N x J");
    if (Dbar.size() != B.cols()) throw ValidationError("Dbar must have J entries");
    for (Eigen::Index s = 0; s < N; ++s)
        if (A.col(s).sum() >= 1.0) throw BrauerSolowError("column sum of A >= 1 for sector " + sectors[s].id);
    if ((Atilde.array() < 0).any() || (Atilde.array() >= 1).any())
        throw ValidationError("expenditure shares outside [0,1)");
    for (Eigen::Index j = 0; j < B.cols(); ++j) {
        if (std::abs(B.col(j).sum() - 1.0) > 1e-12)
            throw ValidationError("consumption weights of destination " + destinations[j] +
                                  " do not sum to one");
        if (!(Dbar(j) > 0)) throw ValidationError("non-positive steady-state demand for " + destinations[j]);
    }
    if ((B.array() < 0).any()) throw ValidationError("negative consumption weight");
    if (spectral_radius_bound(Atilde) >= 1.0)
        throw NumericalError("spectral radius of the expenditure-share matrix is not below one");
}

NetworkModel build_network(const IOTable& t, TechnologyMapping map) {
    const auto N = static_cast<Eigen::Index>(t.n()), J = static_cast<Eigen::Index>(t.j());
    NetworkModel m;
    m.sectors = t.sectors;
    m.destinations = t.destinations;
    m.A = Matrix::Zero(N, N);
    m.live.assign(N, false);
    for (Eigen::Index s = 0; s < N; ++s) {
        if (t.Y(s) > 0) {
            m.live[s] = true;
            m.A.col(s) = t.Z.col(s) / t.Y(s);
        }
    }
    for (Eigen::Index s = 0; s < N; ++s)
        if (m.A.col(s).sum() >= 1.0)
            throw BrauerSolowError("sector " + t.sectors[s].id + " uses inputs worth " +
                                   std::to_string(m.A.col(s).sum()) + " of its output");
    if (map == TechnologyMapping::gamma_scaled) {
        Vector gamma = m.A.colwise().sum().transpose();
        m.Atilde = m.A * gamma.asDiagonal();
    } else {
        m.Atilde = m.A;
    }
    m.Dbar = t.F.colwise().sum().transpose();
    m.B = Matrix::Zero(N, J);
    for (Eigen::Index j = 0; j < J; ++j) {
        if (!(m.Dbar(j) > 0))
            throw ValidationError("destination " + t.destinations[j] + " has no final demand");
        m.B.col(j) = t.F.col(j) / m.Dbar(j);
        m.B.col(j) /= m.B.col(j).sum();
    }
    m.validate();
    return m;
}

IOTable to_io_table(const NetworkModel& m) {
    const auto N = static_cast<Eigen::Index>(m.n());
    Matrix IminusA = Matrix::Identity(N, N) - m.Atilde;
    Vector Y = IminusA.partialPivLu().solve(m.B * m.Dbar);
    IOTable t;
    t.sectors = m.sectors;
    t.destinations = m.destinations;
    t.Z = m.Atilde * Y.asDiagonal();
    t.F = m.B * m.Dbar.asDiagonal();
    t.Y = t.Z.rowwise().sum() + t.F.rowwise().sum();
    validate(t, 1e-9);
    return t;
}

double spectral_radius_bound(const Matrix& M, int iters) {
    const auto n = M.rows();
    if (n == 0) return 0.0;
    double best = std::min(M.cwiseAbs().colwise().sum().maxCoeff(), M.cwiseAbs().rowwise().sum().maxCoeff());
    Matrix P = M.cwiseAbs();
    Vector x = Vector::Ones(n);
    for (int k = 0; k < iters; ++k) {
        Vector y = P * x;
        double cw = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) cw = std::max(cw, y(i) / x(i));
        best = std::min(best, cw);
        double nrm = y.maxCoeff();
        if (nrm <= 0) return 0.0;
        x = y / nrm + Vector::Constant(n, 1e-9);
    }
    return best;
}

namespace {

std::vector<SectorLabel> synth_labels(std::size_t N, std::size_t J) {
    std::vector<SectorLabel> out;
    for (std::size_t r = 0; r < N; ++r)
        out.push_back({"s" + std::to_string(r), "c" + std::to_string(r % J), "i" + std::to_string(r / J)});
    return out;
}

void normalize_columns(Matrix& At, double scale, Stream& rng) {
    for (Eigen::Index s = 0; s < At.cols(); ++s) {
        double cs = At.col(s).sum();
        if (cs > 0) At.col(s) *= scale * (0.5 + 0.5 * rng.uniform()) / cs;
    }
}

}  // namespace

NetworkModel synthesize(const SyntheticSpec& sp) {
    if (sp.n_sectors == 0 || sp.n_destinations == 0) throw SpecError("need at least one sector and destination");
    if (!(sp.weight_scale > 0 && sp.weight_scale < 1)) throw SpecError("weight_scale must lie in (0,1)");
    if (sp.final_share_floor < 0) throw SpecError("final_share_floor must be nonnegative");
    const auto N = static_cast<Eigen::Index>(sp.n_sectors), J = static_cast<Eigen::Index>(sp.n_destinations);
    NetworkModel m;
    m.sectors = synth_labels(sp.n_sectors, sp.n_destinations);
    for (std::size_t j = 0; j < sp.n_destinations; ++j) m.destinations.push_back("c" + std::to_string(j));
    m.Atilde = Matrix::Zero(N, N);
    m.B = Matrix::Zero(N, J);
    m.Dbar = Vector::Ones(J);
    Stream rng(sp.seed, 0x5eed, static_cast<std::uint64_t>(sp.topology));

    switch (sp.topology) {
    case Topology::line:
        for (Eigen::Index k = 1; k < N; ++k) m.Atilde(k, k - 1) = sp.weight_scale;
        m.B.row(0).setOnes();
        break;
    case Topology::diamond: {
        if (N < 3) throw SpecError("diamond needs at least 3 sectors");
        Eigen::Index top = N - 1, mids = N - 2;
        for (Eigen::Index k = 1; k < top; ++k) {
            m.Atilde(k, 0) = sp.weight_scale / static_cast<double>(mids);
            m.Atilde(top, k) = sp.weight_scale;
        }
        m.B.row(0).setOnes();
        break;
    }
    case Topology::random_sparse: {
        if (!(sp.density > 0 && sp.density <= 1)) throw SpecError("density must lie in (0,1]");
        for (Eigen::Index s = 0; s < N; ++s)
            for (Eigen::Index r = 0; r < N; ++r) {
                if (r == s) continue;
                if (rng.uniform() < sp.density) m.Atilde(r, s) = rng.uniform();
            }
        normalize_columns(m.Atilde, sp.weight_scale, rng);
        for (Eigen::Index j = 0; j < J; ++j) {
            for (Eigen::Index r = 0; r < N; ++r) m.B(r, j) = sp.final_share_floor + rng.uniform();
            m.Dbar(j) = 0.5 + rng.uniform();
        }
        break;
    }
    case Topology::dag: {
        if (!(sp.density > 0 && sp.density <= 1)) throw SpecError("density must lie in (0,1]");
        if (sp.depth == 0 || sp.depth > sp.n_sectors)
            throw SpecError("dag depth must lie in [1, n_sectors]");
        const auto D = static_cast<Eigen::Index>(sp.depth);
        std::vector<Eigen::Index> layer(N);
        for (Eigen::Index r = 0; r < N; ++r)
            layer[r] = r < D ? r : static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(D)) % D;
        std::vector<std::vector<Eigen::Index>> members(D);
        for (Eigen::Index r = 0; r < N; ++r) members[layer[r]].push_back(r);
        for (Eigen::Index r = 0; r < N; ++r) {
            if (layer[r] == 0) continue;
            for (Eigen::Index s = 0; s < N; ++s)
                if (layer[s] < layer[r] && rng.uniform() < sp.density) m.Atilde(r, s) = rng.uniform();
            const auto& below = members[layer[r] - 1];
            auto pick = below[static_cast<std::size_t>(rng.uniform() * static_cast<double>(below.size())) %
                              below.size()];
            m.Atilde(r, pick) = std::max(m.Atilde(r, pick), 0.5 + 0.5 * rng.uniform());
        }
        normalize_columns(m.Atilde, sp.weight_scale, rng);
        for (Eigen::Index j = 0; j < J; ++j) {
            for (Eigen::Index r = 0; r < N; ++r)
                m.B(r, j) = layer[r] == 0 ? 0.5 + rng.uniform() : sp.final_share_floor * (0.5 + rng.uniform());
            m.Dbar(j) = 0.5 + rng.uniform();
        }
        break;
    }
    }
    for (Eigen::Index j = 0; j < J; ++j) m.B.col(j) /= m.B.col(j).sum();
    m.A = m.Atilde;
    m.live.assign(N, true);
    // sectors with neither final nor intermediate sales have zero output
    Vector Y = (Matrix::Identity(N, N) - m.Atilde).partialPivLu().solve(m.B * m.Dbar);
    for (Eigen::Index r = 0; r < N; ++r) m.live[r] = Y(r) > 0;
    m.validate();
    return m;
}

std::string to_json(const NetworkModel& m) {
    using nlohmann::json;
    auto mat = [](const Matrix& M) {
        json a = json::array();
        for (Eigen::Index r = 0; r < M.rows(); ++r) {
            json row = json::array();
            for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
            a.push_back(row);
        }
        return a;
    };
    json j;
    json secs = json::array();
    for (const auto& s : m.sectors) secs.push_back({{"id", s.id}, {"country", s.country}, {"industry", s.industry}});
    j["sectors"] = secs;
    j["destinations"] = m.destinations;
    j["A"] = mat(m.A);
    j["Atilde"] = mat(m.Atilde);
    j["B"] = mat(m.B);
    j["Dbar"] = std::vector<double>(m.Dbar.data(), m.Dbar.data() + m.Dbar.size());
    j["live"] = m.live;
    return j.dump(2);
}

}  // namespace invamp
