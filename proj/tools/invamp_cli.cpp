// invamp: command line front end.
#include "invamp/dynamics.hpp"
#include "invamp/estimation.hpp"
#include "invamp/inventory_policies.hpp"
#include "invamp/io_model.hpp"
#include "invamp/network_metrics.hpp"
#include "invamp/rng.hpp"
#include "invamp/scenario.hpp"
#include "invamp/shock_engine.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

using namespace invamp;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw Error("cannot open " + p.string());
    return json::parse(in);
}

// "-" writes to stdout
void emit(const std::string& path, const std::string& content) {
    if (path.empty() || path == "-") {
        std::cout << content;
        return;
    }
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << content;
}

NetworkModel load_model_arg(const std::string& path, bool correct, bool gamma) {
    if (path.size() > 5 && path.substr(path.size() - 5) == ".json") {
        json j = read_json(path);
        if (!j.contains("table") && !j.contains("synthetic") && !j.contains("Atilde")) j = j.at("model");
        return model_from_json(j, fs::path(path).parent_path());
    }
    IOTable t = load_io_table(path);
    if (correct) {
        if (!t.deltaN) throw ValidationError("--correct-inventories needs dN columns in the table");
        t = inventory_correct(t);
    }
    return build_network(t, gamma ? TechnologyMapping::gamma_scaled : TechnologyMapping::expenditure_shares);
}

// Long-form CSV panel: unit,t,eta,upsilon,dlogY plus optional U and alpha.
SectorPanel read_panel(const std::string& path, Vector& U, Vector& alpha, Matrix& upsilon) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    std::string line;
    std::getline(in, line);
    std::vector<std::string> head;
    {
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) head.push_back(c);
    }
    auto col = [&](const std::string& n) -> int {
        for (std::size_t k = 0; k < head.size(); ++k)
            if (head[k] == n) return static_cast<int>(k);
        return -1;
    };
    int cu = col("sector"), ct = col("t"), cp = col("path"), ce = col("eta"), cy = col("dlogY"), cv = col("upsilon"),
        cU = col("U"), ca = col("alpha");
    if (cu < 0 || ct < 0 || ce < 0 || cy < 0) throw ParseError("panel needs sector,t,eta,dlogY columns", 1);
    struct Row {
        std::size_t unit, time;
        double eta, y, ups, U, a;
    };
    std::vector<Row> rows;
    std::map<std::string, std::size_t> units;
    std::map<std::pair<long, long>, std::size_t> times;
    std::size_t ln = 1;
    while (std::getline(in, line)) {
        ++ln;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) f.push_back(c);
        if (f.size() != head.size()) throw ParseError("wrong number of fields", ln);
        try {
            long path_id = cp >= 0 ? std::stol(f[cp]) : 0;
            auto u = units.emplace(f[cu], units.size()).first->second;
            auto tt = times.emplace(std::make_pair(path_id, std::stol(f[ct])), times.size()).first->second;
            rows.push_back({u, tt, std::stod(f[ce]), std::stod(f[cy]), cv >= 0 ? std::stod(f[cv]) : 0.0,
                            cU >= 0 ? std::stod(f[cU]) : 0.0, ca >= 0 ? std::stod(f[ca]) : 0.0});
        } catch (const std::logic_error&) {
            throw ParseError("bad number", ln);
        }
    }
    // times were numbered in first-seen order; re-rank by (path, t)
    std::vector<std::size_t> rank(times.size());
    {
        std::size_t k = 0;
        for (const auto& kv : times) rank[kv.second] = k++;
    }
    const auto N = static_cast<Eigen::Index>(units.size()), T = static_cast<Eigen::Index>(times.size());
    SectorPanel p{Matrix::Constant(N, T, std::nan("")), Matrix::Constant(N, T, std::nan(""))};
    upsilon = Matrix::Zero(N, T);
    U = Vector::Zero(N);
    alpha = Vector::Zero(N);
    for (const auto& r : rows) {
        auto t = static_cast<Eigen::Index>(rank[r.time]);
        auto u = static_cast<Eigen::Index>(r.unit);
        p.dlogY(u, t) = r.y;
        p.eta(u, t) = r.eta;
        upsilon(u, t) = r.ups;
        U(u) = r.U;
        alpha(u) = r.a;
    }
    if (!p.eta.allFinite()) throw ValidationError("panel is unbalanced");
    return p;
}

json regression_json(const RegressionResult& r) {
    json j;
    for (std::size_t k = 0; k < r.names.size(); ++k)
        j["coefficients"][r.names[k]] = {{"estimate", r.coef(static_cast<Eigen::Index>(k))},
                                         {"se", r.se(static_cast<Eigen::Index>(k))}};
    j["r2"] = r.r2;
    j["n"] = r.n;
    return j;
}

std::string moments_json(const MomentSet& ms) {
    auto one = [](const AggregateMoments& a) {
        return json{{"alpha_mean", a.alpha_mean},
                    {"alpha_min", a.alpha_min},
                    {"alpha_max", a.alpha_max},
                    {"corr_alpha_demand", a.corr_alpha_demand},
                    {"corr_I_demand", a.corr_I_demand},
                    {"corr_I_sales", a.corr_I_sales},
                    {"sd_Q_over_demand", a.sd_Q_over_demand},
                    {"sd_sales_over_demand", a.sd_sales_over_demand},
                    {"sd_Q_over_sales", a.sd_Q_over_sales}};
    };
    json j{{"monthly", one(ms.monthly)},
           {"annual", one(ms.annual)},
           {"clamped", ms.clamped},
           {"visits", ms.visits},
           {"stockout_rate", ms.stockout_rate}};
    return j.dump(2) + "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"inventory amplification in production networks"};
    app.require_subcommand(1);
    int threads = 1;
    std::uint64_t seed = 1;
    bool seed_given = false;
    app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    app.add_option_function<std::uint64_t>(
        "--seed",
        [&](const std::uint64_t& s) {
            seed = s;
            seed_given = true;
        },
        "master seed");

    // metrics
    auto* met = app.add_subcommand("metrics", "position metrics of an I-O table");
    std::string m_in, m_out = "-", m_xi, m_model;
    double alpha = 0.4, rho = 0.7;
    bool correct = false, gamma = false;
    met->add_option("--in", m_in, "I-O table CSV or model JSON")->required();
    met->add_option("--alpha", alpha);
    met->add_option("--rho", rho);
    met->add_option("--out", m_out, "metrics CSV");
    met->add_option("--emit-xi", m_xi, "exposure shares CSV");
    met->add_option("--emit-model", m_model, "model JSON echo");
    met->add_flag("--correct-inventories", correct);
    met->add_flag("--gamma-scaled", gamma, "use A diag(gamma) as the propagation matrix");

    // shocks
    auto* sh = app.add_subcommand("shocks", "draw destination demand paths");
    std::string sh_cfg, sh_out = "-";
    sh->add_option("--config", sh_cfg)->required();
    sh->add_option("--out", sh_out);

    // simulate
    auto* sim = app.add_subcommand("simulate", "simulate a sector panel");
    std::string s_model, s_out = "-", s_mode = "first-order";
    std::size_t s_paths = 10, s_T = 200;
    std::vector<double> s_sigma{0.05};
    double s_varrho = 0.0, s_alpha = 0.4, s_rho = 0.7;
    bool s_correct = false;
    sim->add_option("--model", s_model, "I-O table CSV or model JSON")->required();
    sim->add_option("--alpha", s_alpha);
    sim->add_option("--rho", s_rho);
    sim->add_option("--paths", s_paths);
    sim->add_option("--T", s_T);
    sim->add_option("--sigma", s_sigma, "shifter sd, one value or one per destination");
    sim->add_option("--varrho", s_varrho);
    sim->add_option("--mode", s_mode)->check(CLI::IsMember({"first-order", "levels"}));
    sim->add_flag("--correct-inventories", s_correct);
    sim->add_option("--out", s_out);

    // policy
    auto* pol = app.add_subcommand("policy", "firm-level inventory policies");
    pol->require_subcommand(1);
    auto* psolve = pol->add_subcommand("solve", "solve a policy problem");
    std::string p_model, p_cfg, p_out = "-";
    psolve->add_option("--model", p_model)->required()->check(
        CLI::IsMember({"breakdown", "timetosell", "lq", "smoothing"}));
    psolve->add_option("--config", p_cfg, "JSON parameter overrides");
    psolve->add_option("--out", p_out);
    auto* psim = pol->add_subcommand("simulate", "simulate a saved time-to-sell solution");
    std::string ps_sol, ps_out = "-";
    SimulationOptions so;
    psim->add_option("--solution", ps_sol)->required();
    psim->add_option("--paths", so.paths);
    psim->add_option("--T", so.T);
    psim->add_option("--burnin", so.burnin);
    psim->add_option("--out", ps_out);

    // estimate
    auto* est = app.add_subcommand("estimate", "panel regressions");
    std::string e_panel, e_spec = "model-consistent", e_out = "-";
    bool e_nofe = false;
    est->add_option("--panel", e_panel, "long CSV from simulate")->required();
    est->add_option("--spec", e_spec)->check(CLI::IsMember({"binned", "model-consistent", "saturated"}));
    est->add_flag("--no-fe", e_nofe, "skip sector fixed effects");
    est->add_option("--out", e_out);

    // counterfactual
    auto* cf = app.add_subcommand("counterfactual", "counterfactual moment tables");
    std::string c_cfg, c_out;
    cf->add_option("--config", c_cfg)->required();
    cf->add_option("--out", c_out, "output directory")->required();

    // pipeline
    auto* pipe = app.add_subcommand("pipeline", "end-to-end run");
    std::string pl_cfg, pl_out;
    pipe->add_option("--config", pl_cfg)->required();
    pipe->add_option("--out", pl_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*met) {
            NetworkModel m = load_model_arg(m_in, correct, gamma);
            OmegaParams p{alpha, rho};
            p.validate();
            auto pm = compute_metrics(m, p);
            std::ostringstream os;
            write_metrics_csv(m, pm, os);
            emit(m_out, os.str());
            if (!m_xi.empty()) {
                std::ostringstream xs;
                std::vector<std::string> ids;
                for (const auto& s : m.sectors) ids.push_back(s.id);
                write_matrix_csv(pm.Xi, ids, m.destinations, xs);
                emit(m_xi, xs.str());
            }
            if (!m_model.empty()) emit(m_model, to_json(m) + "\n");
            for (auto r : pm.excluded) std::cerr << "warning: sector " << m.sectors[r].id << " excluded (zero output)\n";
        } else if (*sh) {
            json c = read_json(sh_cfg);
            DemandProcess proc;
            auto db = c.at("dbar").get<std::vector<double>>();
            proc.Dbar = Eigen::Map<Vector>(db.data(), static_cast<Eigen::Index>(db.size()));
            proc.rho = c.value("rho", 0.7);
            proc.sigma = sigma_from_json(c.value("sigma", json()), db.size(), 0.05);
            proc.varrho = c.value("varrho", 0.0);
            proc.seed = seed_given ? seed : c.value("seed", std::uint64_t{1});
            auto T = c.value("T", std::size_t{20});
            auto n = c.value("n_paths", std::size_t{1});
            auto paths = draw_demand(proc, T, n, threads);
            std::ostringstream os;
            os << "path,t,destination,D,eta\n" << std::setprecision(17);
            for (std::size_t k = 0; k < paths.D.size(); ++k) {
                Matrix g = destination_growth(paths.D[k]);
                for (Eigen::Index t = 0; t <= static_cast<Eigen::Index>(T); ++t)
                    for (Eigen::Index j = 0; j < paths.D[k].rows(); ++j) {
                        os << k << ',' << t << ',' << j << ',' << paths.D[k](j, t) << ',';
                        if (t > 0) os << g(j, t - 1);
                        os << '\n';
                    }
            }
            emit(sh_out, os.str());
            if (paths.rejected) std::cerr << "note: " << paths.rejected << " draws rejected for nonpositive demand\n";
        } else if (*sim) {
            NetworkModel m = load_model_arg(s_model, s_correct, false);
            OmegaParams p{s_alpha, s_rho};
            p.validate();
            Vector sg = Eigen::Map<Vector>(s_sigma.data(), static_cast<Eigen::Index>(s_sigma.size()));
            if (sg.size() == 1) sg = Vector::Constant(static_cast<Eigen::Index>(m.j()), s_sigma[0]);
            Vector U = upstreamness(m).value;
            std::ostringstream os;
            os << "path,t,sector,U,alpha,eta,upsilon,dlogY\n" << std::setprecision(17);
            auto write_panel = [&](std::size_t k, const Matrix& eta, const Matrix& ups, const Matrix& dly) {
                for (Eigen::Index t = 0; t < eta.cols(); ++t)
                    for (std::size_t r = 0; r < m.n(); ++r)
                        os << k << ',' << t << ',' << m.sectors[r].id << ',' << U(r) << ',' << p.alpha << ','
                           << eta(r, t) << ',' << ups(r, t) << ',' << dly(r, t) << '\n';
            };
            if (s_mode == "first-order") {
                Matrix factor = covariance_factor(sg, s_varrho);
                for (std::size_t k = 0; k < s_paths; ++k) {
                    auto sp = simulate_first_order(m, p, draw_shifters(factor, s_T, seed, k));
                    write_panel(k, sp.eta_ind, sp.upsilon, sp.dlogY);
                }
            } else {
                DemandProcess proc{m.Dbar, p.rho, sg, s_varrho, seed};
                auto paths = draw_demand(proc, s_T, s_paths, threads);
                for (std::size_t k = 0; k < s_paths; ++k) {
                    auto sp = make_shock_panel(m, p, paths.D[k]);
                    auto out = network_output(m, p, paths.D[k]);
                    write_panel(k, sp.eta_ind, sp.upsilon, out.dlogY);
                    if (!out.negative_output.empty())
                        std::cerr << "warning: path " << k << " has " << out.negative_output.size()
                                  << " nonpositive output cells\n";
                }
            }
            emit(s_out, os.str());
        } else if (*pol) {
            if (*psolve) {
                json c = p_cfg.empty() ? json::object() : read_json(p_cfg);
                if (p_model == "breakdown") {
                    BreakdownProblem b;
                    b.n_A = c.value("n_A", b.n_A);
                    b.n_I = c.value("n_I", b.n_I);
                    b.I_max = c.value("I_max", b.I_max);
                    b.p = c.value("p", b.p);
                    b.c = c.value("c", b.c);
                    b.beta = c.value("beta", b.beta);
                    b.chi = c.value("chi", b.chi);
                    b.rho = c.value("rho", b.rho);
                    b.sigma = c.value("sigma", b.sigma);
                    b.Dbar = c.value("Dbar", b.Dbar);
                    auto s = solve_breakdown_vfi(b);
                    std::ostringstream os;
                    os << "# iterations=" << s.iterations << " residual=" << s.residual << '\n'
                       << "I_index,A_index,I,A,VG,VB,policy\n"
                       << std::setprecision(17);
                    for (Eigen::Index i = 0; i < s.I.size(); ++i)
                        for (Eigen::Index a = 0; a < s.A.size(); ++a)
                            os << i << ',' << a << ',' << s.I(i) << ',' << s.A(a) << ',' << s.VG(i, a) << ','
                               << s.VB(i, a) << ',' << s.policy(i, a) << '\n';
                    emit(p_out, os.str());
                } else if (p_model == "timetosell") {
                    TimeToSellProblem t;
                    t.p = c.value("p", t.p);
                    t.beta = c.value("beta", t.beta);
                    t.c = c.value("c", t.c);
                    t.chi = c.value("chi", t.chi);
                    t.b = c.value("b", t.b);
                    t.Dbar = c.value("Dbar", t.Dbar);
                    t.rho = c.value("rho", t.rho);
                    t.sigma = c.value("sigma", t.sigma);
                    t.n_eps = c.value("n_eps", t.n_eps);
                    t.n_s = c.value("n_s", t.n_s);
                    t.s_max = c.value("s_max", t.s_max);
                    t.n_q = c.value("n_q", t.n_q);
                    t.q_max = c.value("q_max", t.q_max);
                    t.tol = c.value("tol", t.tol);
                    auto s = solve_timetosell(t);
                    std::ostringstream os;
                    save_solution(s, os);
                    emit(p_out, os.str());
                } else {
                    LQParams q;
                    q.alpha = c.value("alpha", q.alpha);
                    q.delta = c.value("delta", q.delta);
                    q.beta = c.value("beta", q.beta);
                    q.c = c.value("c", q.c);
                    q.theta = c.value("theta", q.theta);
                    q.tau = c.value("tau", q.tau);
                    q.rho = c.value("rho", q.rho);
                    json j;
                    if (p_model == "lq") {
                        double es = c.value("expected_sales", 1.0);
                        j = {{"expected_sales", es}, {"inventory", lq_policy(q, es)}};
                    } else {
                        auto v = c.value("variant", std::string("published")) == "foc_consistent"
                                     ? SmoothingVariant::foc_consistent
                                     : SmoothingVariant::published;
                        j = {{"derivative", smoothing_derivative(q, v)}, {"sign_index", smoothing_sign_index(q)}};
                    }
                    emit(p_out, j.dump(2) + "\n");
                }
            } else {
                std::ifstream in(ps_sol);
                if (!in) throw Error("cannot open " + ps_sol);
                auto sol = load_solution(in);
                so.seed = seed;
                so.threads = threads;
                emit(ps_out, moments_json(simulate_policy(sol, so)));
            }
        } else if (*est) {
            Vector U, a;
            Matrix ups;
            auto panel = read_panel(e_panel, U, a, ups);
            json j;
            if (e_spec == "binned") {
                auto b = binned_regression(panel, U, default_bin_edges(), !e_nofe);
                j = regression_json(b.fit);
                j["bin_lower"] = b.lower;
                j["sectors_per_bin"] = b.sectors_per_bin;
                j["warnings"] = b.warnings;
            } else if (e_spec == "model-consistent") {
                auto r = model_consistent_regression(panel, ups, a, !e_nofe);
                j = regression_json(r.fit);
                j["delta1"] = r.delta1;
                j["delta2"] = r.delta2;
                j["implied_alpha_rho"] = r.implied_alpha_rho;
            } else {
                j = regression_json(saturated_regression(panel, U, a, !e_nofe));
            }
            emit(e_out, j.dump(2) + "\n");
        } else if (*cf) {
            json c = read_json(c_cfg);
            fs::path base = fs::path(c_cfg).parent_path();
            NetworkModel m = model_from_json(c.at("model"), base);
            std::uint64_t sd = seed_given ? seed : c.value("seed", std::uint64_t{1});
            std::vector<MomentReport> reps;
            for (const auto& e : c.at("counterfactuals")) {
                Scenario s;
                s.name = e.value("name", std::string("counterfactual"));
                s.baseline = m;
                if (e.contains("network")) s.counterfactual = model_from_json(e.at("network"), base);
                if (e.contains("fragment_sector")) s.fragment_sector = e.at("fragment_sector").get<std::size_t>();
                s.alpha = c.value("alpha", 0.4);
                s.alpha_scale = e.value("alpha_scale", 1.0);
                s.rho = c.value("rho", 0.7);
                s.varrho = c.value("varrho", 0.0);
                s.sigma = sigma_from_json(c.value("sigma", json()), m.j(), 0.05);
                if (c.contains("target_slope")) s.target_slope = c.at("target_slope").get<double>();
                s.T = e.value("T", c.value("T", std::size_t{20}));
                s.n_sims = e.value("n_sims", c.value("n_sims", std::size_t{200}));
                s.seed = sd;
                s.threads = threads;
                s.mode = e.value("mode", c.value("mode", std::string("multi"))) == "single" ? Mode::single_destination
                                                                                           : Mode::multi_destination;
                s.measure = e.value("measure", c.value("measure", std::string("time_series"))) == "cross_section"
                                ? VolatilityMeasure::cross_section
                                : VolatilityMeasure::time_series;
                reps.push_back(run_scenario(s));
            }
            auto tab = moment_table(reps);
            fs::create_directories(c_out);
            emit((fs::path(c_out) / "moments.csv").string(), tab.csv);
            emit((fs::path(c_out) / "moments.txt").string(), tab.text);
            std::cout << tab.text;
        } else if (*pipe) {
            fs::path out = pl_out;
            if (out.empty()) {
                json c = read_json(pl_cfg);
                out = c.value("output_dir", std::string("artifacts"));
            }
            auto r = pipeline(pl_cfg, out, seed_given ? std::optional<std::uint64_t>(seed) : std::nullopt, threads);
            if (r.status != 0) {
                std::cerr << "pipeline failed at stage " << r.failed_stage << ": " << r.message << '\n';
                return r.status;
            }
            std::cout << "artifacts written to " << out.string() << '\n';
        }
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
