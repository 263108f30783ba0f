#include <catch2/catch_amalgamated.hpp>

#include "qmeas/hydro.hpp"
#include "qmeas/presets.hpp"
#include "qmeas/tdse.hpp"
#include "support/oracles.hpp"

using namespace qmeas;
using Catch::Approx;

TEST_CASE("velocity of a plane wave is hbar k / m everywhere") {
    SpatialGrid g({Axis{128, 0.0, 12.8}}, 1, 1);
    const double k = commensurate_k(g.axis(0), 2.5);
    auto psi = presets::product_state(g, {presets::plane_wave(g.axis(0), k)}, {1.0});
    const auto vf = velocity_field(psi);
    for (std::size_t i = 0; i < g.size(); ++i) {
        REQUIRE(vf.valid_mask[i]);
        CHECK(vf.v[0][i] == Approx(k).epsilon(1e-10));
    }
}

TEST_CASE("real Gaussian has zero velocity") {
    SpatialGrid g({Axis{256, -10.0, 10.0}}, 1, 1);
    auto psi = presets::product_state(g, {presets::gaussian(g.axis(0), 0.0, 1.0, 0.0)}, {1.0});
    const auto vf = velocity_field(psi);
    for (std::size_t i = 0; i < g.size(); ++i)
        if (vf.valid_mask[i]) CHECK(std::abs(vf.v[0][i]) < 1e-10);
}

TEST_CASE("two-particle boosted product: v = (hbar k1/m1, hbar k2/m2)") {
    SpatialGrid g({Axis{96, -9.0, 9.0}, Axis{96, -9.0, 9.0}}, 2, 1);
    const double k1 = 0.8, k2 = -0.5, m1 = 1.0, m2 = 2.0;
    auto psi = presets::product_state(g,
                                      {presets::gaussian(g.axis(0), 0.0, 1.2, k1),
                                       presets::gaussian(g.axis(1), 0.0, 1.4, k2)},
                                      {m1, m2});
    const auto vf = velocity_field(psi);
    // The phase is linear, so even the one-sided stencils are exact; check
    // against the finite-difference oracle value on valid points.
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!vf.valid_mask[i]) continue;
        CHECK(vf.v[0][i] == Approx(k1 / m1).margin(1e-6));
        CHECK(vf.v[1][i] == Approx(k2 / m2).margin(1e-6));
    }
}

TEST_CASE("current of a real wavefunction vanishes") {
    SpatialGrid g({Axis{200, -10.0, 10.0}}, 1, 1);
    auto psi = presets::product_state(
        g, {presets::harmonic_eigenstate(g.axis(0), 2, 1.0, 1.0, 1.0)}, {1.0});
    const auto jf = current_density(psi);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(jf.J[0][i]) < 1e-12);
}

TEST_CASE("plane-wave current is the uniform density times hbar k/m") {
    SpatialGrid g({Axis{128, 0.0, 12.8}}, 1, 1);
    const double k = commensurate_k(g.axis(0), 1.5);
    auto psi = presets::product_state(g, {presets::plane_wave(g.axis(0), k)}, {1.0});
    const auto jf = current_density(psi);
    const double len = 128.0 * g.axis(0).spacing();
    // Central differences of e^{ikx} carry the sin(k dx)/dx factor.
    const double k_eff = std::sin(k * g.axis(0).spacing()) / g.axis(0).spacing();
    for (std::size_t i = 1; i + 1 < g.size(); ++i)
        CHECK(jf.J[0][i] == Approx(k_eff / len).epsilon(1e-10));
}

TEST_CASE("boosted Gaussian: J agrees with R^2 v (gentle momentum)") {
    SpatialGrid g({Axis{512, -16.0, 16.0}}, 1, 1);
    auto psi = presets::product_state(g, {presets::gaussian(g.axis(0), 0.0, 2.0, 0.02)},
                                      {1.0});
    CHECK(current_velocity_discrepancy(psi) < 1e-6);
}

TEST_CASE("continuity residual: stationary state, second-order refinement, plane wave") {
    SECTION("stationary eigenstate: residual < 1e-8") {
        SpatialGrid g({Axis{256, -12.0, 12.0}}, 1, 1);
        auto psi = presets::product_state(
            g, {presets::harmonic_eigenstate(g.axis(0), 0, 1.0, 1.0, 1.0)}, {1.0});
        HamiltonianSpec h{presets::harmonic_potential({1.0}, 1.0, 1), false};
        EvolutionConfig cfg{1e-3, 2, Boundary::periodic};
        const auto snaps = evolve(psi, h, cfg, 1);
        CHECK(continuity_residual(snaps[0], snaps[1], snaps[2], 1e-3) < 1e-8);
    }

    SECTION("free Gaussian: residual shrinks at least 3x under joint refinement") {
        const auto residual_at = [](int n, double dt) {
            SpatialGrid g({Axis{n, -12.0, 12.0}}, 1, 1);
            auto psi = presets::product_state(
                g, {presets::gaussian(g.axis(0), 0.0, 1.0, 0.4)}, {1.0});
            HamiltonianSpec h;
            EvolutionConfig cfg{dt, 2, Boundary::periodic};
            const auto snaps = evolve(psi, h, cfg, 1);
            return continuity_residual(snaps[0], snaps[1], snaps[2], dt);
        };
        const double coarse = residual_at(128, 2e-3);
        const double fine = residual_at(256, 1e-3);
        CHECK(fine < coarse / 3.0);
    }

    SECTION("plane wave: residual < 1e-10") {
        SpatialGrid g({Axis{128, 0.0, 12.8}}, 1, 1);
        const double k = commensurate_k(g.axis(0), 2.0);
        auto psi = presets::product_state(g, {presets::plane_wave(g.axis(0), k)}, {1.0});
        HamiltonianSpec h;
        EvolutionConfig cfg{1e-3, 2, Boundary::periodic};
        const auto snaps = evolve(psi, h, cfg, 1);
        CHECK(continuity_residual(snaps[0], snaps[1], snaps[2], 1e-3) < 1e-10);
    }

    SECTION("mismatched snapshot times throw") {
        SpatialGrid g({Axis{64, -8.0, 8.0}}, 1, 1);
        auto psi = presets::product_state(g, {presets::gaussian(g.axis(0), 0.0, 1.0, 0.0)},
                                          {1.0});
        HamiltonianSpec h;
        EvolutionConfig cfg{1e-3, 2, Boundary::periodic};
        const auto snaps = evolve(psi, h, cfg, 1);
        CHECK_THROWS_AS(continuity_residual(snaps[0], snaps[1], snaps[2], 2e-3),
                        TimeGridError);
    }
}
