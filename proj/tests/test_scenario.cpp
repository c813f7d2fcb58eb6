#include "invamp/scenario.hpp"
#include "support.hpp"

#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace invamp;
using testsupport::fixture;
namespace fs = std::filesystem;

namespace {

Scenario base_scenario(const NetworkModel& m) {
    Scenario s;
    s.baseline = m;
    s.sigma = Vector::Constant(1, 0.1);
    s.T = 20;
    s.n_sims = 40;
    s.seed = 5;
    return s;
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("invamp_test_" + name);
    fs::remove_all(p);
    return p;
}

nlohmann::json read_json(const fs::path& p) {
    std::ifstream in(p);
    return nlohmann::json::parse(in);
}

}  // namespace

TEST_CASE("shared draws are reproducible") {
    Matrix F = covariance_factor(Vector::Constant(3, 0.1), 0.2);
    CHECK(draw_shifters(F, 10, 4, 2) == draw_shifters(F, 10, 4, 2));
    CHECK(draw_shifters(F, 10, 4, 2) != draw_shifters(F, 10, 4, 3));
}

TEST_CASE("collapsed destinations keep steady-state output") {
    auto m = testsupport::random_model(3, 10, 4);
    auto c = collapse_destinations(m);
    REQUIRE(c.j() == 1);
    Vector Y = leontief(m) * m.B * m.Dbar;
    Vector Yc = leontief(c) * c.B * c.Dbar;
    CHECK((Y - Yc).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("identity counterfactual reproduces the baseline exactly") {
    auto s = base_scenario(testsupport::random_model(4, 15, 3));
    auto r = run_scenario(s);
    CHECK(r.baseline.sigma_eta == r.counterfactual.sigma_eta);
    CHECK(r.baseline.sigma_y == r.counterfactual.sigma_y);
    CHECK(r.baseline.elasticity == r.counterfactual.elasticity);
    s.measure = VolatilityMeasure::cross_section;
    auto c = run_scenario(s);
    CHECK(c.baseline.sigma_y == c.counterfactual.sigma_y);
}

TEST_CASE("larger inventories raise output volatility only") {
    auto s = base_scenario(testsupport::random_model(4, 15, 3));
    s.alpha_scale = 1.25;
    for (auto mode : {Mode::multi_destination, Mode::single_destination}) {
        s.mode = mode;
        auto r = run_scenario(s);
        CHECK(r.counterfactual.sigma_eta == r.baseline.sigma_eta);
        CHECK(r.counterfactual.sigma_y > r.baseline.sigma_y);
        CHECK(r.counterfactual.elasticity > r.baseline.elasticity);
        CHECK(r.baseline.per_sim_sigma_y.size() == 40);
    }
}

TEST_CASE("single destination has no shock dispersion across sectors") {
    auto s = base_scenario(testsupport::random_model(6, 12, 3));
    s.mode = Mode::single_destination;
    s.measure = VolatilityMeasure::cross_section;
    auto r = run_scenario(s);
    CHECK(r.baseline.sigma_eta < 1e-15);
    CHECK(r.baseline.sigma_y > 0);
}

TEST_CASE("fragmenting the final stage raises the elasticity") {
    auto s = base_scenario(testsupport::line_model(3));
    s.fragment_sector = 0;
    auto r = run_scenario(s);
    CHECK(r.counterfactual.elasticity > r.baseline.elasticity);
    CHECK(r.counterfactual.sigma_eta == doctest::Approx(r.baseline.sigma_eta).epsilon(1e-12));
}

TEST_CASE("scenario validation") {
    auto s = base_scenario(testsupport::random_model(4, 15, 3));
    s.counterfactual = testsupport::random_model(4, 14, 3);
    CHECK_THROWS_AS(run_scenario(s), ValidationError);
    auto t = base_scenario(testsupport::random_model(4, 15, 3));
    t.sigma = Vector::Constant(2, 0.1);
    CHECK_THROWS_AS(run_scenario(t), ValidationError);
    CHECK_THROWS_AS(moment_table({}), ValidationError);
}

TEST_CASE("calibrated correlation reaches the target slope") {
    auto m = testsupport::random_model(8, 25, 5);
    auto s = base_scenario(m);
    double target = volatility_slope(m, Vector::Constant(5, 0.1), 0.4);
    s.target_slope = target;
    auto r = run_scenario(s);
    CHECK(std::abs(volatility_slope(m, Vector::Constant(5, 0.1), r.varrho) - target) <= 5e-4);
}

TEST_CASE("moment table renders the same numbers twice") {
    auto s = base_scenario(testsupport::random_model(4, 15, 3));
    s.alpha_scale = 1.25;
    auto r = run_scenario(s);
    auto tab = moment_table({r});
    std::istringstream in(tab.csv);
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header ==
          "scenario,mode,varrho,base_sigma_eta,base_sigma_y,base_elasticity,cf_sigma_eta,cf_sigma_y,cf_elasticity");
    std::istringstream fields(row);
    std::string f;
    int k = 0;
    while (std::getline(fields, f, ',')) {
        if (k++ >= 2) CHECK(tab.text.find(f) != std::string::npos);
    }
    CHECK(k == 9);
    CHECK(tab.text.find("annotation only") != std::string::npos);
    CHECK(moment_table({r}, false).text.find("annotation only") == std::string::npos);
}

TEST_CASE("figure data") {
    auto m = testsupport::line_model(6);
    auto rows = figure_data(m, 0.4, 0.7, Vector::Constant(1, 0.1), 0.0, 20, 5, 3);
    REQUIRE(rows.size() == 12);
    for (const auto& r : rows)
        if (r.run == "no_inventories") {
            CHECK(r.beta == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(r.hi - r.lo < 1e-10);
        }
    CHECK(rows[5].beta > rows[0].beta);
    auto one = figure_data(m, 0.4, 0.7, Vector::Constant(1, 0.1), 0.0, 20, 1, 3);
    for (const auto& r : one) CHECK(r.lo == r.hi);
}

TEST_CASE("sigma from config") {
    using nlohmann::json;
    CHECK(sigma_from_json(json(), 3, 0.05) == Vector::Constant(3, 0.05));
    CHECK(sigma_from_json(json(0.2), 2, 0.05) == Vector::Constant(2, 0.2));
    CHECK(sigma_from_json(json::array({0.3}), 2, 0.05) == Vector::Constant(2, 0.3));
    CHECK_THROWS_AS(sigma_from_json(json::array({0.1, 0.2}), 3, 0.05), ValidationError);
    CHECK_THROWS_AS(model_from_json(json::object(), "."), SpecError);
}

TEST_CASE("digest of a known string") {
    auto p = scratch("abc.txt");
    std::ofstream(p) << "abc";
    CHECK(sha256_file(p) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    fs::remove(p);
}

TEST_CASE("pipeline") {
    auto a = scratch("pipe_a"), b = scratch("pipe_b");
    auto ra = pipeline(fixture("demo_pipeline.json"), a);
    REQUIRE(ra.status == 0);
    auto rb = pipeline(fixture("demo_pipeline.json"), b, std::nullopt, 2);
    REQUIRE(rb.status == 0);
    auto ma = read_json(a / "manifest.json"), mb = read_json(b / "manifest.json");
    CHECK(ma["status"] == "ok");
    for (const char* f : {"model.json", "metrics.csv", "xi.csv", "panel.csv", "coefs.json", "moments.csv",
                          "moments.txt", "figure.csv"})
        CHECK(fs::exists(a / f));
    REQUIRE(ma["files"].size() == mb["files"].size());
    for (std::size_t k = 0; k < ma["files"].size(); ++k) {
        CHECK(ma["files"][k]["sha256"] == mb["files"][k]["sha256"]);
        auto name = ma["files"][k]["name"].get<std::string>();
        CHECK(ma["files"][k]["sha256"] == sha256_file(a / name));
    }
    auto coefs = read_json(a / "coefs.json");
    CHECK(coefs["model_consistent"]["delta2"].get<double>() == doctest::Approx(0.7).epsilon(1e-8));

    auto c = scratch("pipe_c");
    auto rc = pipeline(fixture("demo_pipeline.json"), c, 99);
    CHECK(read_json(c / "manifest.json")["seed"] == 99);
    CHECK(read_json(c / "manifest.json")["files"][3]["sha256"] != ma["files"][3]["sha256"]);

    auto d = scratch("pipe_missing");
    auto rd = pipeline(fixture("missing_input.json"), d);
    CHECK(rd.status == 1);
    CHECK(rd.failed_stage == "load_model");
    auto md = read_json(d / "manifest.json");
    CHECK(md["status"] == "failed");
    CHECK(md["failed_stage"] == "load_model");
    for (const auto& p : {a, b, c, d}) fs::remove_all(p);
}
