#include "invamp/io_model.hpp"
#include "invamp/network_metrics.hpp"
#include "support.hpp"

#include <doctest.h>
#include <json.hpp>

#include <fstream>
#include <sstream>

using namespace invamp;
using testsupport::fixture;

namespace {
std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}
}  // namespace

TEST_CASE("toy table loads with the hand-balanced output") {
    auto t = load_io_table(fixture("toy2.csv"));
    REQUIRE(t.n() == 2);
    REQUIRE(t.j() == 1);
    CHECK(t.Y(0) == 1.0);
    CHECK(t.Y(1) == 0.5);
    CHECK(t.balance_residual == 0.0);
    CHECK(t.sectors[1].industry == "i2");
    CHECK(t.destinations[0] == "A");
}

TEST_CASE("toy table builds the two-stage network") {
    auto m = build_network(load_io_table(fixture("toy2.csv")));
    CHECK(m.A(1, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(m.Atilde(1, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(m.A(0, 1) == 0.0);
    CHECK(m.B(0, 0) == 1.0);
    CHECK(m.B(1, 0) == 0.0);
    CHECK(m.Dbar(0) == 1.0);
}

TEST_CASE("pure final-good economy") {
    auto t = load_io_table(fixture("empty_flows.csv"));
    CHECK(t.Y(0) == 2.0);
    CHECK(t.Y(1) == 3.0);
    auto m = build_network(t);
    CHECK(m.A.isZero(0.0));
    CHECK(m.B.isApprox(Matrix::Identity(2, 2)));
}

TEST_CASE("inconsistent gross output is rejected naming the sector") {
    try {
        load_io_table(fixture("inconsistent.csv"));
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("s1") != std::string::npos);
    }
}

TEST_CASE("malformed row reports its line number") {
    try {
        load_io_table(fixture("malformed.csv"));
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line == 3);
    }
}

TEST_CASE("negative flows are rejected") {
    std::istringstream in("sector_id,country,industry,Z_1,F_A,Y\ns1,A,i1,-1,2,1\n");
    CHECK_THROWS_AS(parse_io_table(in), ValidationError);
}

TEST_CASE("header must follow the declared layout") {
    std::istringstream bad("sector_id,country,industry,F_A,Z_1,Y\ns1,A,i1,1,0,1\n");
    CHECK_THROWS_AS(parse_io_table(bad), ParseError);
    std::istringstream missing_y("sector_id,country,industry,Z_1,F_A\ns1,A,i1,0,1\n");
    CHECK_THROWS_AS(parse_io_table(missing_y), ParseError);
}

TEST_CASE("canonical fixtures round-trip bit-identically") {
    for (const char* name : {"toy2.csv", "empty_flows.csv", "inventory_75_25.csv", "inventory_cap.csv",
                             "wood_furniture.csv"}) {
        CAPTURE(name);
        auto t = load_io_table(fixture(name));
        std::ostringstream out;
        save_io_table(t, out);
        CHECK(out.str() == slurp(fixture(name)));
    }
}

TEST_CASE("input use above output violates Brauer-Solow") {
    CHECK_THROWS_AS(build_network(load_io_table(fixture("brauer_solow.csv"))), BrauerSolowError);
}

TEST_CASE("proportional inventory imputation") {
    auto t = load_io_table(fixture("inventory_75_25.csv"));
    Matrix M = imputed_inventory_use(t);
    CHECK(M(0, 1) == doctest::Approx(6.0));
    CHECK(M(0, 2) == doctest::Approx(2.0));
    CHECK(M.sum() == doctest::Approx(8.0));

    auto c = inventory_correct(t);
    CHECK_FALSE(c.deltaN.has_value());
    CHECK(c.Z(0, 1) == doctest::Approx(9.0));
    CHECK(c.Z(0, 2) == doctest::Approx(3.0));
    // supplier rows still add up; buyers lose value added
    Vector rows = c.Z.rowwise().sum() + c.F.rowwise().sum();
    CHECK((rows - c.Y).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((*c.VA)(1) == doctest::Approx(1.0));
    CHECK((*c.VA)(2) == doctest::Approx(2.0));
    auto m = build_network(c);
    CHECK(m.A.colwise().sum().maxCoeff() < 1.0);
}

TEST_CASE("zero inventory change leaves the table unchanged") {
    std::istringstream in(
        "sector_id,country,industry,Z_1,Z_2,F_A,dN_A,Y\ns1,A,i1,0,0,1,0,1\ns2,A,i2,0.5,0,0,0,0.5\n");
    auto t = parse_io_table(in);
    auto c = inventory_correct(t);
    CHECK(c.Z == t.Z);
    CHECK(c.F == t.F);
    CHECK(c.Y == t.Y);
}

TEST_CASE("imputed use above value added is capped and the table re-balances") {
    auto t = load_io_table(fixture("inventory_cap.csv"));
    auto c = inventory_correct(t);
    // b2 has value added 0.5 but would absorb 2
    double use_b2 = c.Z(0, 2) - t.Z(0, 2);
    CHECK(use_b2 < 0.5);
    CHECK(use_b2 == doctest::Approx(0.5 - 1e-6 * 1.5).epsilon(1e-12));
    Vector colsum = c.Z.colwise().sum().transpose() + *c.VA;
    CHECK((colsum - c.Y).cwiseAbs().maxCoeff() < 1e-9);
    Vector rows = c.Z.rowwise().sum() + c.F.rowwise().sum();
    CHECK((rows - c.Y).cwiseAbs().maxCoeff() < 1e-9);
    auto m = build_network(c);
    CHECK(m.A.colwise().sum().maxCoeff() < 1.0);
}

TEST_CASE("inventory change without intermediate sales cannot be allocated") {
    std::istringstream in(
        "sector_id,country,industry,Z_1,Z_2,F_A,dN_A,Y\ns1,A,i1,0,0,1,2,3\ns2,A,i2,0.5,0,0,0,0.5\n");
    auto t = parse_io_table(in);
    CHECK_THROWS_AS(inventory_correct(t), AllocationError);
}

TEST_CASE("gamma-scaled mapping") {
    auto t = load_io_table(fixture("inventory_75_25.csv"));
    auto c = inventory_correct(t);
    auto m = build_network(c, TechnologyMapping::gamma_scaled);
    Vector gamma = m.A.colwise().sum().transpose();
    CHECK(m.Atilde.isApprox(m.A * gamma.asDiagonal()));
}

TEST_CASE("synthetic line is an exact chain") {
    auto m = testsupport::line_model(3);
    Matrix expect = Matrix::Zero(3, 3);
    expect(1, 0) = 0.5;
    expect(2, 1) = 0.5;
    CHECK(m.Atilde == expect);
    CHECK(m.B(0, 0) == 1.0);
    CHECK(m.B.bottomRows(2).isZero(0.0));
}

TEST_CASE("synthesis is deterministic given the seed") {
    auto a = testsupport::random_model(7, 20, 3);
    auto b = testsupport::random_model(7, 20, 3);
    CHECK(a.Atilde == b.Atilde);
    CHECK(a.B == b.B);
    CHECK(a.Dbar == b.Dbar);
    auto c = testsupport::random_model(8, 20, 3);
    CHECK(a.Atilde != c.Atilde);
}

TEST_CASE("dag of depth 4 is nilpotent of order 4") {
    SyntheticSpec s;
    s.topology = Topology::dag;
    s.depth = 4;
    s.n_sectors = 20;
    s.seed = 3;
    auto m = synthesize(s);
    Matrix P = m.Atilde;
    for (int k = 1; k < 4; ++k) P = P * m.Atilde;
    CHECK(P.isZero(0.0));
    Matrix P3 = m.Atilde * m.Atilde * m.Atilde;
    CHECK_FALSE(P3.isZero(0.0));
}

TEST_CASE("infeasible specs are rejected") {
    SyntheticSpec s;
    s.topology = Topology::dag;
    s.n_sectors = 3;
    s.depth = 5;
    CHECK_THROWS_AS(synthesize(s), SpecError);
    SyntheticSpec d;
    d.topology = Topology::random_sparse;
    d.density = 0.0;
    CHECK_THROWS_AS(synthesize(d), SpecError);
    SyntheticSpec dm;
    dm.topology = Topology::diamond;
    dm.n_sectors = 2;
    CHECK_THROWS_AS(synthesize(dm), SpecError);
}

TEST_CASE("model to table and back") {
    auto m = testsupport::random_model(11, 12, 2);
    auto t = to_io_table(m);
    auto back = build_network(t);
    CHECK((back.Atilde - m.Atilde).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((back.B - m.B).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((back.Dbar - m.Dbar).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("zero-output sectors keep their index") {
    std::istringstream in(
        "sector_id,country,industry,Z_1,Z_2,Z_3,F_A,Y\ns1,A,i1,0,0,0,1,1\ns2,A,i2,0,0,0,0,0\ns3,A,i3,0.2,0,0,0,0.2\n");
    auto m = build_network(parse_io_table(in));
    CHECK(m.n() == 3);
    CHECK_FALSE(m.live[1]);
    CHECK(m.A.col(1).isZero(0.0));
    auto U = upstreamness(m);
    REQUIRE(U.excluded.size() == 1);
    CHECK(U.excluded[0] == 1);
    CHECK(U.value(2) == doctest::Approx(2.0));
}

TEST_CASE("model JSON echo lists every sector") {
    auto m = build_network(load_io_table(fixture("toy2.csv")));
    auto j = nlohmann::json::parse(to_json(m));
    CHECK(j["sectors"].size() == 2);
    CHECK(j["Atilde"][1][0].get<double>() == 0.5);
}
