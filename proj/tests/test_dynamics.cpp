#include "invamp/dynamics.hpp"
#include "invamp/rng.hpp"
#include "invamp/shock_engine.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace invamp;
using testsupport::fixture;

namespace {

Vector ar1_path(std::size_t T, double Dbar, double rho, double sd, std::uint64_t seed) {
    Stream st(seed, 1);
    Vector d(static_cast<Eigen::Index>(T));
    double x = Dbar;
    for (std::size_t t = 0; t < T; ++t) {
        x = (1 - rho) * Dbar + rho * x + sd * st.normal();
        d(static_cast<Eigen::Index>(t)) = x;
    }
    return d;
}

NetworkModel toy() { return build_network(load_io_table(fixture("toy2.csv"))); }

}  // namespace

TEST_CASE("chain without inventories passes demand through") {
    std::vector<InventoryFn> fns(4, InventoryFn::zero());
    Vector d = ar1_path(30, 1.0, 0.7, 0.1, 1);
    auto cs = simulate_chain(fns, d, 0.7, 1.0);
    for (Eigen::Index s = 0; s < 4; ++s) CHECK((cs.Y.row(s).transpose() - d).cwiseAbs().maxCoeff() == 0.0);
    CHECK(cs.I.isZero(0.0));
}

TEST_CASE("linear chain matches its closed form") {
    const double a = 0.4, rho = 0.7, Dbar = 2.0;
    const double w = 1 + a * (rho - 1);
    std::vector<InventoryFn> fns(5, InventoryFn::linear(a));
    Vector d = ar1_path(60, Dbar, rho, 0.1, 2);
    auto cs = simulate_chain(fns, d, rho, Dbar);
    double geo = 0;
    for (int n = 0; n < 5; ++n) {
        geo += std::pow(w, n);
        double prev = Dbar;
        for (Eigen::Index t = 0; t < d.size(); ++t) {
            double expect = d(t) + a * rho * geo * (d(t) - prev);
            CHECK(std::abs(cs.Y(n, t) - expect) < 1e-10);
            prev = d(t);
        }
    }
    CHECK(cs.negative_output.empty());
}

TEST_CASE("nonlinear chain response matches the slope recursion") {
    const double rho = 0.6, Dbar = 4.0, h = 1e-4;
    std::vector<InventoryFn> fns{InventoryFn::sqrt_scaled(0.8), InventoryFn::sqrt_scaled(1.2),
                                 InventoryFn::sqrt_scaled(0.5)};
    auto up = simulate_chain(fns, Vector::Constant(1, Dbar + h), rho, Dbar);
    auto dn = simulate_chain(fns, Vector::Constant(1, Dbar - h), rho, Dbar);
    auto rep = amplification_check(fns, rho, Dbar);
    for (int n = 0; n < 3; ++n) {
        double fd = (up.Y(n, 0) - dn.Y(n, 0)) / (2 * h);
        CHECK(fd == doctest::Approx(rep.elasticity[n]).epsilon(1e-6));
    }
    CHECK(rep.amplifies);
    // at the steady state output equals demand
    auto ss = simulate_chain(fns, Vector::Constant(3, Dbar), rho, Dbar);
    CHECK((ss.Y.array() - Dbar).abs().maxCoeff() < 1e-12);
}

TEST_CASE("amplification condition") {
    const double rho = 0.7;
    std::vector<InventoryFn> fns(6, InventoryFn::linear(0.1));
    auto rep = amplification_check(fns, rho, 1.0);
    CHECK(rep.amplifies);
    for (std::size_t n = 1; n < 6; ++n) CHECK(rep.elasticity[n] > rep.elasticity[n - 1]);

    std::vector<InventoryFn> edge{InventoryFn::linear(0.1), InventoryFn::linear(1 / (1 - rho))};
    auto bad = amplification_check(edge, rho, 1.0);
    CHECK_FALSE(bad.violates[0]);
    CHECK(bad.violates[1]);
    CHECK_FALSE(bad.amplifies);

    auto neg = amplification_check({InventoryFn::linear(-0.2)}, rho, 1.0);
    CHECK(neg.violates[0]);
    CHECK_FALSE(neg.amplifies);

    auto iid = amplification_check(fns, 0.0, 1.0);
    CHECK_FALSE(iid.amplifies);
}

TEST_CASE("steady-state demand gives steady-state output") {
    auto m = testsupport::random_model(5, 15, 3);
    Matrix D = m.Dbar.replicate(1, 6);
    auto out = network_output(m, {0.4, 0.7}, D);
    Vector Ybar = leontief(m) * m.B * m.Dbar;
    for (Eigen::Index t = 0; t < 6; ++t) CHECK((out.Y.col(t) - Ybar).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(out.growth.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("toy output elasticity") {
    auto m = toy();
    OmegaParams p{0.4, 0.7};
    CHECK(output_elasticity(m, p)(1) == doctest::Approx(1.5264).epsilon(1e-14));
    CHECK(output_elasticity(m, p)(0) == doctest::Approx(1.28).epsilon(1e-14));
    const double h = 1e-3;
    Matrix D(1, 1);
    D << 1 + h;
    auto out = network_output(m, p, D);
    CHECK((out.Y(1, 0) - 0.5) / 0.5 / h == doctest::Approx(1.5264).epsilon(1e-10));
}

TEST_CASE("no inventories reduces to the Leontief solution") {
    auto m = testsupport::random_model(9, 12, 2);
    Matrix D(2, 3);
    D << 1.0, 1.2, 0.9, 0.5, 0.4, 0.6;
    D.array().colwise() *= m.Dbar.array();
    auto out = network_output(m, {0.0, 0.7}, D);
    CHECK((out.Y - leontief(m) * m.B * D).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("inventory term equals its stage expansion") {
    auto m = testsupport::random_model(13, 10, 2, 0.3, 0.5);
    OmegaParams p{0.3, 0.8};
    const double w = p.omega();
    auto op = make_output_operator(m, p);
    Matrix oracle = testsupport::series(m.Atilde, m.B, 600, [&](int n) {
        double g = 0;
        for (int i = 0; i <= n; ++i) g += std::pow(w, i);
        return p.alpha * p.rho * g;
    });
    CHECK((op.MB - oracle).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("first-order growth is exact for a single departure from steady state") {
    auto m = testsupport::random_model(17, 14, 3);
    OmegaParams p{0.4, 0.7};
    Vector eta(3);
    eta << 0.02, -0.05, 0.01;
    Matrix D(3, 2);
    D.col(0) = m.Dbar;
    D.col(1) = m.Dbar.cwiseProduct((1.0 + eta.array()).matrix());
    auto out = network_output(m, p, D);
    Vector approx = growth_approx(m, p, Matrix(eta));
    CHECK((out.growth.col(0) - approx).cwiseAbs().maxCoeff() < 1e-12);
    // and υ is the inventory part of that growth
    Vector ups = weighted_shock(m, p, Vector(eta));
    Vector direct = exposure_shares(m).value * eta;
    CHECK((approx - direct - p.alpha * p.rho * ups).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("analytic variance") {
    auto m = toy();
    OmegaParams p{0.4, 0.7};
    auto v = analytic_variance(m, p, Vector::Constant(1, 0.1));
    CHECK(v(1) == doctest::Approx(1.5264 * 1.5264 * 0.01).epsilon(1e-13));

    auto r = testsupport::random_model(21, 8, 3);
    Vector sig(3);
    sig << 0.1, 0.2, 0.05;
    Matrix K = growth_loadings(r, p);
    Diagnostics diag;
    auto v0 = analytic_variance(r, p, sig, 0.0, &diag);
    CHECK(diag.warnings.empty());
    auto v5 = analytic_variance(r, p, sig, 0.5, &diag);
    CHECK(diag.warnings.size() == 1);
    for (Eigen::Index i = 0; i < 8; ++i) {
        double a = 0, b = 0;
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) {
                double c = sig(j) * sig(k) * (j == k ? 1.0 : 0.5);
                b += K(i, j) * K(i, k) * c;
                if (j == k) a += K(i, j) * K(i, k) * c;
            }
        CHECK(v0(i) == doctest::Approx(a).epsilon(1e-13));
        CHECK(v5(i) == doctest::Approx(b).epsilon(1e-13));
    }
}

TEST_CASE("simulated variance agrees with the analytic variance") {
    auto m = testsupport::random_model(23, 6, 2);
    OmegaParams p{0.4, 0.7};
    Vector sig = Vector::Constant(2, 0.1);
    const std::size_t n = 40000;
    Matrix eta(2, n);
    Stream st(23, 0);
    for (std::size_t t = 0; t < n; ++t) {
        eta(0, t) = 0.1 * st.normal();
        eta(1, t) = 0.1 * st.normal();
    }
    Matrix g = growth_approx(m, p, eta);
    Vector v = analytic_variance(m, p, sig);
    for (Eigen::Index r = 0; r < 6; ++r) {
        double mu = g.row(r).mean();
        double s2 = (g.row(r).array() - mu).square().sum() / (n - 1);
        CHECK(std::abs(s2 - v(r)) < 3 * v(r) * std::sqrt(2.0 / n));
    }
}

TEST_CASE("sector-specific intensities") {
    SUBCASE("homogeneous intensities reproduce the common operator") {
        auto m = testsupport::random_model(29, 12, 2);
        OmegaParams p{0.35, 0.75};
        Matrix E = hetero_loading(m, Vector::Constant(12, p.alpha), p.rho);
        CHECK((E - make_output_operator(m, p).MB).cwiseAbs().maxCoeff() < 1e-11);
    }
    SUBCASE("direct supplier of a final producer") {
        // s1 sells a to s0, s0 sells only to consumers
        const double a = 0.3, rho = 0.6;
        Matrix At = Matrix::Zero(2, 2);
        At(1, 0) = a;
        Matrix B(2, 1);
        B << 1, 0;
        auto m = testsupport::manual_model(At, B, Vector::Ones(1));
        Vector al(2);
        al << 0.5, 0.2;
        Matrix E = hetero_loading(m, al, rho);
        double w1 = 1 + (rho - 1) * al(1);
        CHECK(E(0, 0) == doctest::Approx(rho * al(0)).epsilon(1e-14));
        CHECK(E(1, 0) == doctest::Approx(rho * a * (al(1) + w1 * al(0))).epsilon(1e-14));
    }
    SUBCASE("upstreamness alone does not rank amplification") {
        // s2 -> s0 (one step, buyer holds large stocks); s3 -> s4 -> s1 (two steps, no stocks)
        Matrix At = Matrix::Zero(5, 5);
        At(2, 0) = 0.4;
        At(4, 1) = 0.4;
        At(3, 4) = 0.4;
        Matrix B(5, 1);
        B << 0.5, 0.5, 0, 0, 0;
        auto m = testsupport::manual_model(At, B, Vector::Ones(1));
        Vector al = Vector::Zero(5);
        al(0) = 2.0;
        const double rho = 0.7;
        Matrix E = hetero_loading(m, al, rho);
        Matrix LB = leontief(m) * m.B;
        auto U = upstreamness(m).value;
        CHECK(U(3) > U(2));
        CHECK(E(2, 0) / LB(2, 0) > E(3, 0) / LB(3, 0));
        CHECK(E(3, 0) == 0.0);
    }
    SUBCASE("intensities outside the stability region") {
        auto m = testsupport::line_model(3);
        CHECK_THROWS_AS(hetero_loading(m, Vector::Constant(3, 4.0), 0.7), DomainError);
        CHECK_THROWS_AS(hetero_loading(m, Vector::Constant(3, -0.1), 0.7), DomainError);
        CHECK_THROWS_AS(hetero_loading(m, Vector::Constant(2, 0.1), 0.7), ValidationError);
    }
}

TEST_CASE("fragmentation") {
    auto m = testsupport::line_model(3);
    OmegaParams p{0.4, 0.7};
    auto U = upstreamness(m).value;
    auto Uc = inventory_upstreamness(m, p).UcalAvg;
    auto f = fragment(m, 1);
    REQUIRE(f.n() == 4);
    auto Uf = upstreamness(f).value;
    auto Ucf = inventory_upstreamness(f, p).UcalAvg;
    CHECK(Uf(2) == doctest::Approx(U(2) + 1).epsilon(1e-12));
    CHECK(Uf(3) == doctest::Approx(U(1) + 1).epsilon(1e-12));
    CHECK(Uf(1) == doctest::Approx(U(1)).epsilon(1e-12));
    CHECK(Uf(0) == doctest::Approx(U(0)).epsilon(1e-12));
    CHECK(Ucf(0) == doctest::Approx(Uc(0)).epsilon(1e-12));
    CHECK(Ucf(1) == doctest::Approx(Uc(1)).epsilon(1e-12));
    CHECK(Ucf(2) > Uc(2));
    // output of the original sectors is preserved
    Vector Y = leontief(m) * m.B * m.Dbar;
    Vector Yf = leontief(f) * f.B * f.Dbar;
    CHECK((Yf.head(3) - Y).cwiseAbs().maxCoeff() < 1e-12);

    auto ff = fragment(f, 2);
    auto Ucff = inventory_upstreamness(ff, p).UcalAvg;
    for (Eigen::Index r = 0; r < 4; ++r) CHECK(Ucff(r) >= Ucf(r) - 1e-12);
    CHECK_THROWS_AS(fragment(m, 3), ValidationError);
}

TEST_CASE("fragmenting a random network never lowers inventory upstreamness") {
    OmegaParams p{0.4, 0.7};
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto m = testsupport::random_model(seed, 12, 2);
        auto before = inventory_upstreamness(m, p).UcalAvg;
        for (std::size_t i : {0ul, 5ul, 11ul}) {
            auto f = fragment(m, i);
            auto after = inventory_upstreamness(f, p).UcalAvg;
            for (Eigen::Index r = 0; r < 12; ++r) CHECK(after(r) >= before(r) - 1e-12);
        }
    }
}
