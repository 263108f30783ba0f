#include <catch2/catch_amalgamated.hpp>

#include "qmeas/measurement.hpp"
#include "qmeas/rng.hpp"

using namespace qmeas;
using Catch::Approx;

TEST_CASE("sigma -> 0 limit gives projectors") {
    const std::vector<double> a{0.0, 1.0, 2.5};
    double min_gap2 = 1e300;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = i + 1; j < a.size(); ++j)
            min_gap2 = std::min(min_gap2, (a[i] - a[j]) * (a[i] - a[j]));
    const std::vector<double> sigma(a.size(), 1e-12 * min_gap2);
    const auto kraus = build_kraus(a, sigma);
    for (double c : kraus.C) CHECK(c == Approx(1.0).margin(1e-12));
    for (std::size_t k = 0; k < a.size(); ++k)
        for (std::size_t h = 0; h < a.size(); ++h)
            CHECK(kraus.element(k, h) == Approx(k == h ? 1.0 : 0.0).margin(1e-12));
}

TEST_CASE("two outcomes, equal widths: C^2 = 1/(1+e^{-1/sigma}) by symmetry") {
    const double sigma = 0.7;
    const auto kraus = build_kraus({0.0, 1.0}, {sigma, sigma});
    const double expected = 1.0 / (1.0 + std::exp(-1.0 / sigma));
    CHECK(kraus.C[0] * kraus.C[0] == Approx(expected).epsilon(1e-12));
    CHECK(kraus.C[1] * kraus.C[1] == Approx(expected).epsilon(1e-12));
}

TEST_CASE("completeness residual < 1e-10 for random eigenvalues and widths") {
    Rng rng(404);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> a;
        double cursor = rng.uniform(-2.0, 0.0);
        const int K = 2 + static_cast<int>(rng.uniform() * 3.0);
        for (int k = 0; k < K; ++k) {
            a.push_back(cursor);
            cursor += rng.uniform(0.5, 2.0);
        }
        std::vector<double> sigma;
        for (int k = 0; k < K; ++k) sigma.push_back(rng.uniform(0.05, 2.0));
        const auto kraus = build_kraus(a, sigma);
        CHECK(kraus.completeness_residual() < 1e-10);
    }
}

TEST_CASE("build_kraus rejects bad input") {
    CHECK_THROWS_AS(build_kraus({0.0, 0.0}, {1.0, 1.0}), SpecError);
    CHECK_THROWS_AS(build_kraus({0.0, 1.0}, {1.0, -1.0}), SpecError);
    CHECK_THROWS_AS(build_kraus({0.0, 1.0}, {1.0}), SpecError);
    // Very wide widths make the system columns nearly identical.
    CHECK_THROWS_AS(build_kraus({0.0, 1e-9}, {1e9, 1e9}), KrausNormalizationError);
    // Broad outer widths around a narrow middle drive C_1^2 negative.
    CHECK_THROWS_AS(build_kraus({0.0, 1.0, 2.0}, {10.0, 0.2, 10.0}), KrausPositivityError);
}

TEST_CASE("weak probabilities") {
    SECTION("sigma -> 0 recovers p") {
        const std::vector<double> p{0.3, 0.45, 0.25};
        const auto kraus = build_kraus({0.0, 1.0, 2.0}, {1e-13, 1e-13, 1e-13});
        const auto pw = weak_probabilities(p, kraus);
        for (std::size_t k = 0; k < p.size(); ++k)
            CHECK(pw[k] == Approx(p[k]).margin(1e-8));
    }

    SECTION("equal sigma -> infinity gives the uniform distribution") {
        const std::vector<double> p{0.5, 0.25, 0.25};
        const std::vector<double> a{0.0, 0.5, 1.0};
        const double sigma = 1e6; // 1e6 * max gap^2
        const auto kraus = build_kraus(a, {sigma, sigma, sigma});
        const auto pw = weak_probabilities(p, kraus);
        for (double v : pw) CHECK(v == Approx(1.0 / 3.0).margin(1e-6));
    }

    SECTION("closed form and operator route agree below 1e-12") {
        const std::vector<double> p{0.5, 0.5};
        const auto kraus = build_kraus({0.0, 1.0}, {1.0, 1.0});
        const auto closed = weak_probabilities(p, kraus);
        const auto op = weak_probabilities_operator_route(p, kraus);
        for (std::size_t k = 0; k < p.size(); ++k)
            CHECK(std::abs(closed[k] - op[k]) < 1e-12);
    }

    SECTION("probabilities sum to 1 within 1e-10") {
        Rng rng(11);
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<double> p{rng.uniform(), rng.uniform(), rng.uniform()};
            double s = p[0] + p[1] + p[2];
            for (double& v : p) v /= s;
            const auto kraus = build_kraus({-1.0, 0.3, 2.0},
                                           {rng.uniform(0.1, 3.0), rng.uniform(0.1, 3.0),
                                            rng.uniform(0.1, 3.0)});
            const auto pw = weak_probabilities(p, kraus);
            double total = 0.0;
            for (double v : pw) total += v;
            CHECK(total == Approx(1.0).margin(1e-10));
        }
    }
}

TEST_CASE("weak collapse of the system state") {
    const std::vector<double> p{0.5, 0.5};

    SECTION("sigma -> 0: all weight on h = k") {
        const auto kraus = build_kraus({0.0, 1.0}, {1e-13, 1e-13});
        const auto c = weak_collapse_system(p, kraus, 1);
        CHECK(c[1] == Approx(1.0).margin(1e-10));
        CHECK(std::abs(c[0]) < 1e-10);
    }

    SECTION("sigma -> infinity: state unchanged (coefficients sqrt(p_h))") {
        const auto kraus = build_kraus({0.0, 1.0}, {1e8, 1e8});
        const auto c = weak_collapse_system(p, kraus, 0);
        for (std::size_t h = 0; h < p.size(); ++h)
            CHECK(c[h] == Approx(std::sqrt(p[h])).margin(1e-7));
    }

    SECTION("unit norm for random inputs") {
        Rng rng(31);
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<double> q{rng.uniform(), rng.uniform(), rng.uniform()};
            double s = q[0] + q[1] + q[2];
            for (double& v : q) v /= s;
            const auto kraus =
                build_kraus({0.0, 0.7, 1.9},
                            {rng.uniform(0.2, 2.0), rng.uniform(0.2, 2.0),
                             rng.uniform(0.2, 2.0)});
            for (std::size_t k = 0; k < q.size(); ++k) {
                const auto c = weak_collapse_system(q, kraus, k);
                double n2 = 0.0;
                for (double v : c) n2 += v * v;
                CHECK(n2 == Approx(1.0).margin(1e-12));
            }
        }
    }

    SECTION("zero-probability outcome throws") {
        const auto kraus = build_kraus({0.0, 1.0}, {1e-13, 1e-13});
        CHECK_THROWS_AS(weak_collapse_system({1.0, 0.0}, kraus, 1), ZeroProbabilityError);
    }
}
