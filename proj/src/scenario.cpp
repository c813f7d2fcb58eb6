#include "invamp/scenario.hpp"

#include "invamp/rng.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace invamp {

NetworkModel collapse_destinations(const NetworkModel& m) {
    NetworkModel s = m;
    Vector w = m.B * m.Dbar;
    s.B = w / w.sum();
    s.Dbar = Vector::Constant(1, m.Dbar.sum());
    s.destinations = {"all"};
    return s;
}

Matrix draw_shifters(const Matrix& factor, std::size_t T, std::uint64_t seed, std::uint64_t sim) {
    const auto J = factor.cols();
    Matrix z(J, static_cast<Eigen::Index>(T));
    for (Eigen::Index k = 0; k < J; ++k) {
        Stream st(seed, sim, static_cast<std::uint64_t>(k));
        for (std::size_t t = 0; t < T; ++t) z(k, static_cast<Eigen::Index>(t)) = st.normal();
    }
    return factor * z;
}

SimPanel simulate_first_order(const NetworkModel& m, const OmegaParams& p, const Matrix& eta_dest) {
    if (eta_dest.rows() != m.B.cols()) throw ValidationError("shifters must have one row per destination");
    Matrix xi = exposure_shares(m).value;
    auto iu = inventory_upstreamness(m, p);
    SimPanel sp;
    sp.eta_dest = eta_dest;
    sp.eta_ind = xi * eta_dest;
    sp.upsilon = xi.cwiseProduct(iu.Ucal) * eta_dest;
    sp.dlogY = xi.cwiseProduct((1.0 + p.alpha * p.rho * iu.Ucal.array()).matrix()) * eta_dest;
    return sp;
}

namespace {

double sample_sd(const double* x, std::size_t n, std::size_t stride) {
    if (n < 2) return 0.0;
    double mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += x[i * stride];
    mean /= static_cast<double>(n);
    double ss = 0;
    for (std::size_t i = 0; i < n; ++i) ss += (x[i * stride] - mean) * (x[i * stride] - mean);
    return std::sqrt(ss / static_cast<double>(n - 1));
}

double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    double hi = *mid;
    if (v.size() % 2 == 1) return hi;
    double lo = *std::max_element(v.begin(), mid);
    return 0.5 * (lo + hi);
}

struct SimStats {
    double sigma_eta, sigma_y, elasticity;
};

// rows: the sectors compared across scenarios
SimStats sim_stats(const Matrix& eta_ind, const Matrix& dlogY, Eigen::Index rows, VolatilityMeasure measure) {
    const auto T = eta_ind.cols();
    // row-major copies make strided access simple
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> e = eta_ind.topRows(rows),
                                                                          y = dlogY.topRows(rows);
    SimStats s{0, 0, 0};
    std::vector<Eigen::Index> live;
    for (Eigen::Index r = 0; r < rows; ++r)
        if (e.row(r).allFinite() && y.row(r).allFinite()) live.push_back(r);
    if (live.empty()) throw EstimationError("no live sectors to summarize");
    if (measure == VolatilityMeasure::time_series) {
        if (T < 2) throw ParameterError("time-series volatility needs at least 2 periods");
        for (auto r : live) {
            s.sigma_eta += sample_sd(e.row(r).data(), static_cast<std::size_t>(T), 1);
            s.sigma_y += sample_sd(y.row(r).data(), static_cast<std::size_t>(T), 1);
        }
        s.sigma_eta /= static_cast<double>(live.size());
        s.sigma_y /= static_cast<double>(live.size());
    } else {
        std::vector<double> ce(live.size()), cy(live.size());
        for (Eigen::Index t = 0; t < T; ++t) {
            for (std::size_t k = 0; k < live.size(); ++k) {
                ce[k] = e(live[k], t);
                cy[k] = y(live[k], t);
            }
            s.sigma_eta += sample_sd(ce.data(), ce.size(), 1);
            s.sigma_y += sample_sd(cy.data(), cy.size(), 1);
        }
        s.sigma_eta /= static_cast<double>(T);
        s.sigma_y /= static_cast<double>(T);
    }
    std::vector<double> ratios;
    ratios.reserve(live.size() * static_cast<std::size_t>(T));
    for (auto r : live)
        for (Eigen::Index t = 0; t < T; ++t)
            if (std::abs(e(r, t)) > 1e-14) ratios.push_back(y(r, t) / e(r, t));
    s.elasticity = median(std::move(ratios));
    return s;
}

void finish(Moments& m) {
    auto mean = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x;
        return v.empty() ? 0.0 : s / static_cast<double>(v.size());
    };
    m.sigma_eta = mean(m.per_sim_sigma_eta);
    m.sigma_y = mean(m.per_sim_sigma_y);
    m.elasticity = mean(m.per_sim_elasticity);
}

}  // namespace

MomentReport run_scenario(const Scenario& sc) {
    const std::size_t J0 = sc.baseline.j();
    Vector sigma = sc.sigma;
    if (sigma.size() == 1 && J0 > 1) sigma = Vector::Constant(static_cast<Eigen::Index>(J0), sigma(0));
    if (sigma.size() != static_cast<Eigen::Index>(J0)) throw ValidationError("sigma needs one entry per destination");

    NetworkModel base = sc.baseline;
    NetworkModel cf = sc.baseline;
    if (sc.counterfactual) {
        if (sc.counterfactual->n() != base.n() || sc.counterfactual->j() != base.j() ||
            sc.counterfactual->sectors != base.sectors)
            throw ValidationError("counterfactual network does not share the baseline sector and destination sets");
        cf = *sc.counterfactual;
    }
    if (sc.fragment_sector) cf = fragment(cf, *sc.fragment_sector);

    double varrho = sc.varrho;
    if (sc.target_slope) varrho = calibrate_varrho(base, sigma, *sc.target_slope).varrho;

    Matrix factor;
    if (sc.mode == Mode::single_destination) {
        Matrix S = build_covariance(sigma, varrho);
        Vector w = base.Dbar / base.Dbar.sum();
        factor = Matrix::Constant(1, 1, std::sqrt((w.transpose() * S * w)(0)));
        base = collapse_destinations(base);
        cf = collapse_destinations(cf);
    } else {
        factor = covariance_factor(sigma, varrho);
    }
    OmegaParams pb{sc.alpha, sc.rho}, pc{sc.alpha * sc.alpha_scale, sc.rho};
    pb.validate();
    pc.validate();

    Matrix xb = exposure_shares(base).value, xc = exposure_shares(cf).value;
    Matrix kb = growth_loadings(base, pb), kc = growth_loadings(cf, pc);
    const auto rows = static_cast<Eigen::Index>(base.n());

    MomentReport rep;
    rep.name = sc.name;
    rep.mode = sc.mode;
    rep.varrho = varrho;
    std::vector<SimStats> sb(sc.n_sims), scf(sc.n_sims);
    parallel_for(sc.n_sims, sc.threads, [&](std::size_t s) {
        Matrix eta = draw_shifters(factor, sc.T, sc.seed, s);
        sb[s] = sim_stats(xb * eta, kb * eta, rows, sc.measure);
        scf[s] = sim_stats(xc * eta, kc * eta, rows, sc.measure);
    });
    for (std::size_t s = 0; s < sc.n_sims; ++s) {
        rep.baseline.per_sim_sigma_eta.push_back(sb[s].sigma_eta);
        rep.baseline.per_sim_sigma_y.push_back(sb[s].sigma_y);
        rep.baseline.per_sim_elasticity.push_back(sb[s].elasticity);
        rep.counterfactual.per_sim_sigma_eta.push_back(scf[s].sigma_eta);
        rep.counterfactual.per_sim_sigma_y.push_back(scf[s].sigma_y);
        rep.counterfactual.per_sim_elasticity.push_back(scf[s].elasticity);
    }
    finish(rep.baseline);
    finish(rep.counterfactual);
    return rep;
}

namespace {
std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}
}  // namespace

std::string reference_annotations() {
    return "# reference (published, computed on WIOD inputs; annotation only, not reproduced)\n"
           "#   moments: sigma_eta / sigma_y / median elasticity, baseline -> counterfactual\n"
           "#   single destination, network 2000->2014: 0.169/0.231/1.39 -> 0.169/0.237/1.43\n"
           "#   single destination, alpha x1.25:        0.169/0.231/1.39 -> 0.169/0.241/1.45\n"
           "#   single destination, both:               0.169/0.231/1.39 -> 0.169/0.247/1.49\n"
           "#   multi destination, network 2000->2014:  0.13/0.173/1.34 -> 0.125/0.17/1.37\n"
           "#   multi destination, alpha x1.25:         0.13/0.173/1.34 -> 0.13/0.18/1.40\n"
           "#   multi destination, both:                0.13/0.173/1.34 -> 0.125/0.177/1.43\n"
           "#   alternate cross-sectional draft: single 0/0.057/1.31 -> 0/0.063/1.35, 0/0.066/1.37, 0/0.073/1.41;\n"
           "#     multi 0.115/0.136/1.22 -> 0.104/0.123/1.24, 0.115/0.14/1.27, 0.104/0.126/1.28\n"
           "#   targeted: slope of sd(eta) on U -0.0083 data / -0.0082 model; sigma_y/sigma_eta 1.27 / 1.26\n"
           "#   targeted: sigma_eta 0.11 / 0.115; sigma_y 0.133 / 0.136\n";
}

MomentTable moment_table(const std::vector<MomentReport>& reports, bool with_reference) {
    if (reports.empty()) throw ValidationError("no reports to tabulate");
    MomentTable t;
    std::ostringstream csv, txt;
    csv << "scenario,mode,varrho,base_sigma_eta,base_sigma_y,base_elasticity,cf_sigma_eta,cf_sigma_y,cf_elasticity\n";
    txt << std::left << std::setw(24) << "scenario" << std::setw(8) << "mode" << std::right;
    for (const char* h : {"varrho", "sig_eta", "sig_y", "elast", "cf_sig_eta", "cf_sig_y", "cf_elast"})
        txt << std::setw(13) << h;
    txt << '\n';
    for (const auto& r : reports) {
        std::string mode = r.mode == Mode::single_destination ? "single" : "multi";
        std::vector<double> vals = {r.varrho,
                                    r.baseline.sigma_eta,
                                    r.baseline.sigma_y,
                                    r.baseline.elasticity,
                                    r.counterfactual.sigma_eta,
                                    r.counterfactual.sigma_y,
                                    r.counterfactual.elasticity};
        csv << r.name << ',' << mode;
        txt << std::left << std::setw(24) << r.name << std::setw(8) << mode << std::right;
        for (double v : vals) {
            csv << ',' << num(v);
            txt << std::setw(13) << num(v);
        }
        csv << '\n';
        txt << '\n';
    }
    if (with_reference) txt << reference_annotations();
    t.csv = csv.str();
    t.text = txt.str();
    return t;
}

std::vector<FigureRow> figure_data(const NetworkModel& m, double alpha, double rho, const Vector& sigma,
                                   double varrho, std::size_t T, std::size_t n_sims, std::uint64_t seed,
                                   const std::vector<double>& edges) {
    Vector U = upstreamness(m).value;
    Vector sg = sigma.size() == 1 ? Vector::Constant(static_cast<Eigen::Index>(m.j()), sigma(0)) : sigma;
    Matrix factor = covariance_factor(sg, varrho);
    std::vector<FigureRow> rows;
    for (int run = 0; run < 2; ++run) {
        OmegaParams p{run == 0 ? alpha : 0.0, rho};
        std::vector<std::vector<double>> betas;
        std::vector<double> lower;
        for (std::size_t s = 0; s < n_sims; ++s) {
            auto sp = simulate_first_order(m, p, draw_shifters(factor, T, seed, s));
            auto br = binned_regression({sp.dlogY, sp.eta_ind}, U, edges);
            lower = br.lower;
            if (betas.empty()) betas.resize(static_cast<std::size_t>(br.beta.size()));
            for (Eigen::Index b = 0; b < br.beta.size(); ++b) betas[b].push_back(br.beta(b));
        }
        for (std::size_t b = 0; b < betas.size(); ++b) {
            double mean = 0;
            for (double v : betas[b]) mean += v;
            mean /= static_cast<double>(betas[b].size());
            double sd = sample_sd(betas[b].data(), betas[b].size(), 1);
            rows.push_back({run == 0 ? "inventories" : "no_inventories", lower[b], mean, mean - sd, mean + sd});
        }
    }
    return rows;
}

void write_matrix_csv(const Matrix& M, const std::vector<std::string>& row_ids,
                      const std::vector<std::string>& col_names, std::ostream& out) {
    out << "sector_id";
    for (const auto& c : col_names) out << ',' << c;
    out << '\n';
    out << std::setprecision(17);
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
        out << row_ids[r];
        for (Eigen::Index c = 0; c < M.cols(); ++c) out << ',' << M(r, c);
        out << '\n';
    }
}

void write_metrics_csv(const NetworkModel& m, const PositionMetrics& pm, std::ostream& out) {
    out << "sector_id,country,industry,U,D,HHI,Ucal,indegree,outdegree";
    for (const auto& d : m.destinations) out << ",Ucal_" << d;
    out << '\n' << std::setprecision(17);
    for (std::size_t r = 0; r < m.n(); ++r) {
        const auto i = static_cast<Eigen::Index>(r);
        const auto& s = m.sectors[r];
        out << s.id << ',' << s.country << ',' << s.industry << ',' << pm.U(i) << ',' << pm.Ddown(i) << ','
            << pm.HHI(i) << ',' << pm.UcalAvg(i) << ',' << pm.indegree(i) << ',' << pm.outdegree(i);
        for (Eigen::Index j = 0; j < pm.Ucal.cols(); ++j) out << ',' << pm.Ucal(i, j);
        out << '\n';
    }
}

NetworkModel model_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    if (j.contains("Atilde")) {
        // echo written by --emit-model
        auto mat = [&](const char* key) {
            const auto& a = j.at(key);
            Matrix M(static_cast<Eigen::Index>(a.size()), a.empty() ? 0 : static_cast<Eigen::Index>(a[0].size()));
            for (Eigen::Index r = 0; r < M.rows(); ++r) {
                if (a[r].size() != static_cast<std::size_t>(M.cols())) throw ValidationError(std::string("ragged matrix ") + key);
                for (Eigen::Index c = 0; c < M.cols(); ++c) M(r, c) = a[r][c].get<double>();
            }
            return M;
        };
        NetworkModel m;
        for (const auto& s : j.at("sectors"))
            m.sectors.push_back({s.at("id").get<std::string>(), s.value("country", std::string()),
                                 s.value("industry", std::string())});
        m.destinations = j.at("destinations").get<std::vector<std::string>>();
        m.A = mat("A");
        m.Atilde = mat("Atilde");
        m.B = mat("B");
        auto d = j.at("Dbar").get<std::vector<double>>();
        m.Dbar = Eigen::Map<Vector>(d.data(), static_cast<Eigen::Index>(d.size()));
        m.live = j.contains("live") ? j.at("live").get<std::vector<bool>>() : std::vector<bool>(m.sectors.size(), true);
        if (m.live.size() != m.sectors.size()) throw ValidationError("live flags must match the sector list");
        m.validate();
        return m;
    }
    if (j.contains("table")) {
        std::filesystem::path p = j.at("table").get<std::string>();
        if (p.is_relative()) p = base_dir / p;
        IOTable t = load_io_table(p);
        if (j.value("correct_inventories", false) && t.deltaN) t = inventory_correct(t);
        auto map = j.value("mapping", std::string("expenditure_shares")) == "gamma_scaled"
                       ? TechnologyMapping::gamma_scaled
                       : TechnologyMapping::expenditure_shares;
        return build_network(t, map);
    }
    if (j.contains("synthetic")) {
        const auto& s = j.at("synthetic");
        SyntheticSpec sp;
        std::string topo = s.value("topology", std::string("random_sparse"));
        if (topo == "line")
            sp.topology = Topology::line;
        else if (topo == "diamond")
            sp.topology = Topology::diamond;
        else if (topo == "random_sparse" || topo == "random-sparse")
            sp.topology = Topology::random_sparse;
        else if (topo == "dag")
            sp.topology = Topology::dag;
        else
            throw SpecError("unknown topology '" + topo + "'");
        sp.n_sectors = s.value("n_sectors", sp.n_sectors);
        sp.n_destinations = s.value("n_destinations", sp.n_destinations);
        sp.density = s.value("density", sp.density);
        sp.depth = s.value("depth", sp.depth);
        sp.seed = s.value("seed", sp.seed);
        sp.final_share_floor = s.value("final_share_floor", sp.final_share_floor);
        sp.weight_scale = s.value("weight_scale", sp.weight_scale);
        return synthesize(sp);
    }
    throw SpecError("model needs either a 'table' or a 'synthetic' entry");
}

Vector sigma_from_json(const nlohmann::json& j, std::size_t J, double fallback) {
    const auto n = static_cast<Eigen::Index>(J);
    if (j.is_null()) return Vector::Constant(n, fallback);
    if (j.is_number()) return Vector::Constant(n, j.get<double>());
    auto v = j.get<std::vector<double>>();
    if (v.size() == 1) return Vector::Constant(n, v[0]);
    if (v.size() != J) throw ValidationError("sigma needs one entry per destination");
    return Eigen::Map<Vector>(v.data(), n);
}

std::string sha256_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot read " + p.string());
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buf[1 << 14];
    while (in) {
        in.read(buf, sizeof buf);
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream os;
    for (unsigned i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return os.str();
}

PipelineResult pipeline(const std::filesystem::path& config, const std::filesystem::path& out_dir,
                        std::optional<std::uint64_t> seed_override, int threads) {
    namespace fs = std::filesystem;
    using nlohmann::json;
    using clock = std::chrono::steady_clock;
    PipelineResult res;
    res.dir = out_dir;
    fs::create_directories(out_dir);
    json manifest;
    manifest["version"] = "0.1.0";
    manifest["config"] = config.string();
    json timings = json::object();
    std::vector<std::string> files;
    std::string stage = "read_config";

    auto write = [&](const std::string& name, const std::string& content) {
        std::ofstream(out_dir / name) << content;
        files.push_back(name);
    };

    try {
        auto t0 = clock::now();
        std::ifstream in(config);
        if (!in) throw Error("cannot open config " + config.string());
        json cfg = json::parse(in);
        const fs::path base_dir = config.parent_path();
        std::uint64_t seed = seed_override ? *seed_override : cfg.value("seed", std::uint64_t{1});
        manifest["seed"] = seed;
        auto lap = [&](const std::string& name) {
            auto t1 = clock::now();
            timings[name] = std::chrono::duration<double>(t1 - t0).count();
            t0 = t1;
        };
        lap(stage);

        stage = "load_model";
        NetworkModel m = model_from_json(cfg.at("model"), base_dir);
        write("model.json", to_json(m));
        lap(stage);

        stage = "metrics";
        OmegaParams p{cfg.value("alpha", 0.4), cfg.value("rho", 0.7)};
        auto pm = compute_metrics(m, p);
        {
            std::ostringstream os;
            write_metrics_csv(m, pm, os);
            write("metrics.csv", os.str());
            std::ostringstream xs;
            std::vector<std::string> ids;
            for (const auto& s : m.sectors) ids.push_back(s.id);
            write_matrix_csv(pm.Xi, ids, m.destinations, xs);
            write("xi.csv", xs.str());
        }
        lap(stage);

        stage = "shocks";
        Vector sigma = sigma_from_json(cfg.value("sigma", json()), m.j(), 0.05);
        double varrho = cfg.value("varrho", 0.0);
        auto sim = cfg.value("simulate", json::object());
        std::size_t T = sim.value("T", std::size_t{200});
        std::size_t n_sims = sim.value("n_sims", std::size_t{20});
        Matrix factor = covariance_factor(sigma, varrho);
        std::vector<SimPanel> panels(n_sims);
        parallel_for(n_sims, threads, [&](std::size_t s) {
            panels[s] = simulate_first_order(m, p, draw_shifters(factor, T, seed, s));
        });
        {
            std::ostringstream os;
            os << "sim,t,sector_id,eta,upsilon,dlogY\n" << std::setprecision(17);
            for (std::size_t s = 0; s < n_sims; ++s)
                for (std::size_t t = 0; t < T; ++t)
                    for (std::size_t r = 0; r < m.n(); ++r)
                        os << s << ',' << t << ',' << m.sectors[r].id << ',' << panels[s].eta_ind(r, t) << ','
                           << panels[s].upsilon(r, t) << ',' << panels[s].dlogY(r, t) << '\n';
            write("panel.csv", os.str());
        }
        lap(stage);

        stage = "estimation";
        {
            const auto N = static_cast<Eigen::Index>(m.n());
            const auto TT = static_cast<Eigen::Index>(T * n_sims);
            SectorPanel sp{Matrix(N, TT), Matrix(N, TT)};
            Matrix ups(N, TT);
            double noise = cfg.value("estimation", json::object()).value("noise_sd", 0.0);
            for (std::size_t s = 0; s < n_sims; ++s) {
                auto c0 = static_cast<Eigen::Index>(s * T);
                sp.dlogY.middleCols(c0, static_cast<Eigen::Index>(T)) = panels[s].dlogY;
                sp.eta.middleCols(c0, static_cast<Eigen::Index>(T)) = panels[s].eta_ind;
                ups.middleCols(c0, static_cast<Eigen::Index>(T)) = panels[s].upsilon;
            }
            if (noise > 0) {
                Stream st(seed, 0xe57, 0);
                for (Eigen::Index r = 0; r < N; ++r)
                    for (Eigen::Index t = 0; t < TT; ++t) sp.dlogY(r, t) += noise * st.normal();
            }
            json coefs;
            Vector alpha = Vector::Constant(N, p.alpha);
            if (p.alpha > 0) {
                auto mc = model_consistent_regression(sp, ups, alpha);
                coefs["model_consistent"] = {{"delta1", mc.delta1},
                                             {"delta2", mc.delta2},
                                             {"implied_alpha_rho", mc.implied_alpha_rho},
                                             {"r2", mc.fit.r2},
                                             {"n", mc.fit.n}};
            }
            auto br = binned_regression(sp, pm.U);
            json bins = json::array();
            for (Eigen::Index b = 0; b < br.beta.size(); ++b)
                bins.push_back({{"lower", br.lower[b]}, {"beta", br.beta(b)}, {"sectors", br.sectors_per_bin[b]}});
            coefs["binned"] = bins;
            coefs["binned_warnings"] = br.warnings;
            write("coefs.json", coefs.dump(2));
        }
        lap(stage);

        stage = "counterfactuals";
        {
            std::vector<MomentReport> reps;
            json cfs = cfg.value("counterfactuals", json::array());
            if (cfs.empty()) cfs.push_back({{"name", "alpha_x1.25"}, {"alpha_scale", 1.25}});
            for (const auto& c : cfs) {
                Scenario sc;
                sc.name = c.value("name", std::string("counterfactual"));
                sc.baseline = m;
                if (c.contains("network")) sc.counterfactual = model_from_json(c.at("network"), base_dir);
                if (c.contains("fragment_sector")) sc.fragment_sector = c.at("fragment_sector").get<std::size_t>();
                sc.alpha = p.alpha;
                sc.alpha_scale = c.value("alpha_scale", 1.0);
                sc.rho = p.rho;
                sc.varrho = varrho;
                sc.sigma = sigma;
                if (cfg.contains("target_slope")) sc.target_slope = cfg.at("target_slope").get<double>();
                sc.T = c.value("T", std::size_t{20});
                sc.n_sims = c.value("n_sims", std::size_t{200});
                sc.seed = seed;
                sc.threads = threads;
                sc.mode = c.value("mode", std::string("multi")) == "single" ? Mode::single_destination
                                                                            : Mode::multi_destination;
                sc.measure = c.value("measure", std::string("time_series")) == "cross_section"
                                 ? VolatilityMeasure::cross_section
                                 : VolatilityMeasure::time_series;
                reps.push_back(run_scenario(sc));
            }
            auto tab = moment_table(reps);
            write("moments.csv", tab.csv);
            write("moments.txt", tab.text);
        }
        lap(stage);

        stage = "figure";
        {
            auto fig = cfg.value("figure", json::object());
            auto rows = figure_data(m, p.alpha, p.rho, sigma, varrho, fig.value("T", std::size_t{50}),
                                    fig.value("n_sims", std::size_t{20}), seed);
            std::ostringstream os;
            os << "run,bin_lower,beta,lo,hi\n" << std::setprecision(17);
            for (const auto& r : rows) os << r.run << ',' << r.bin_lower << ',' << r.beta << ',' << r.lo << ',' << r.hi << '\n';
            write("figure.csv", os.str());
        }
        lap(stage);
        manifest["status"] = "ok";
    } catch (const std::exception& e) {
        res.status = 1;
        res.failed_stage = stage;
        res.message = e.what();
        manifest["status"] = "failed";
        manifest["failed_stage"] = stage;
        manifest["message"] = e.what();
    }
    json fl = json::array();
    for (const auto& f : files)
        fl.push_back({{"name", f}, {"sha256", sha256_file(out_dir / f)}, {"bytes", fs::file_size(out_dir / f)}});
    manifest["files"] = fl;
    manifest["timings"] = timings;
    manifest["threads"] = threads;
    std::ofstream(out_dir / "manifest.json") << manifest.dump(2) << '\n';
    return res;
}

}  // namespace invamp
