#include <catch2/catch_amalgamated.hpp>

#include <numbers>

#include "qmeas/polar.hpp"
#include "qmeas/presets.hpp"
#include "support/oracles.hpp"

using namespace qmeas;
using Catch::Approx;

namespace {

ManyBodyWavefunction one_particle(const SpatialGrid& g, const std::vector<Complex>& f) {
    return presets::product_state(g, {f}, {1.0});
}

} // namespace

TEST_CASE("polar decomposition of a plane wave gives a uniform phase gradient") {
    SpatialGrid g({Axis{128, 0.0, 10.0}}, 1, 1);
    // Periodic wrap length is n*dx, so pick a commensurate k.
    const double k = commensurate_k(g.axis(0), 2.0);
    auto psi = one_particle(g, presets::plane_wave(g.axis(0), k));
    const PolarFields polar = polar_decompose(psi);

    const double r_expected = std::abs(psi.amplitudes()[0]);
    for (std::size_t i = 0; i < g.size(); ++i) {
        CHECK(polar.R[i] == Approx(r_expected).margin(1e-14));
        CHECK_FALSE(polar.node_mask[i]);
    }
    // Unwrapped S is hbar*k*x + const.
    const double dx = g.axis(0).spacing();
    for (std::size_t i = 1; i < g.size(); ++i)
        CHECK(polar.S[i] - polar.S[i - 1] == Approx(k * dx).epsilon(1e-10));
}

TEST_CASE("real positive Gaussian has zero phase and empty node interior") {
    SpatialGrid g({Axis{200, -8.0, 8.0}}, 1, 1);
    auto psi = one_particle(g, presets::gaussian(g.axis(0), 0.0, 1.0, 0.0));
    const PolarFields polar = polar_decompose(psi, 1e-7);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (polar.node_mask[i]) continue;
        CHECK(std::abs(polar.S[i]) < 1e-12);
    }
    // The interior (well inside the threshold) carries no node cells.
    const int mid = g.axis(0).n / 2;
    for (int i = mid - 40; i <= mid + 40; ++i)
        CHECK_FALSE(polar.node_mask[static_cast<std::size_t>(i)]);
}

TEST_CASE("first excited harmonic state: node band at x=0, pi*hbar phase jump") {
    SpatialGrid g({Axis{256, -8.0, 8.0}}, 1, 1);
    const double hbar = 1.0;
    auto psi = one_particle(g, presets::harmonic_eigenstate(g.axis(0), 1, 1.0, 1.0, hbar));
    const PolarFields polar = polar_decompose(psi, 1e-5);

    // Node cells cluster around x = 0 (analytic sign change of the Hermite factor).
    bool node_near_zero = false;
    for (int i = 0; i < g.axis(0).n; ++i)
        if (polar.node_mask[static_cast<std::size_t>(i)] &&
            std::abs(g.axis(0).coord(i)) < 0.2)
            node_near_zero = true;
    CHECK(node_near_zero);

    // S is piecewise constant, differing by pi*hbar across the node.
    double left = 0.0, right = 0.0;
    bool got_left = false, got_right = false;
    for (int i = 0; i < g.axis(0).n; ++i) {
        if (polar.node_mask[static_cast<std::size_t>(i)]) continue;
        const double x = g.axis(0).coord(i);
        if (x < -0.5 && !got_left) {
            left = polar.S[static_cast<std::size_t>(i)];
            got_left = true;
        }
        if (x > 0.5 && !got_right) {
            right = polar.S[static_cast<std::size_t>(i)];
            got_right = true;
        }
    }
    REQUIRE(got_left);
    REQUIRE(got_right);
    const double jump = std::abs(left - right);
    CHECK(std::fmod(jump, 2.0 * std::numbers::pi * hbar) ==
          Approx(std::numbers::pi * hbar).margin(1e-9));
}

TEST_CASE("polar recombination reproduces psi at non-node points") {
    SpatialGrid g({Axis{48, -6.0, 6.0}, Axis{48, -6.0, 6.0}}, 2, 1);
    auto psi = oracles::random_smooth_state(g, 77, 3);
    const PolarFields polar = polar_decompose(psi, 1e-7);
    double worst = 0.0;
    double scale = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i)
        scale = std::max(scale, std::abs(psi.amplitudes()[i]));
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (polar.node_mask[i]) continue;
        const Complex back = polar.R[i] * std::polar(1.0, polar.S[i] / psi.hbar());
        worst = std::max(worst, std::abs(back - psi.amplitudes()[i]) / scale);
    }
    CHECK(worst < 1e-10);
}

TEST_CASE("polar decomposition errors") {
    SpatialGrid g({Axis{16, -1.0, 1.0}}, 1, 1);
    std::vector<Complex> amps(g.size(), Complex{1.0, 0.0});
    ManyBodyWavefunction unnorm(g, amps, {1.0});
    CHECK_THROWS_AS(polar_decompose(unnorm, 1e-7), NormalizationError);
    auto ok = one_particle(g, presets::gaussian(g.axis(0), 0.0, 0.3, 0.0));
    CHECK_THROWS_AS(polar_decompose(ok, 0.0), SpecError);
    CHECK_THROWS_AS(polar_decompose(ok, 1.0), SpecError);
}

TEST_CASE("support masks: zero threshold, analytic Gaussian width, two bumps") {
    SpatialGrid g({Axis{512, -12.0, 12.0}}, 1, 1);

    SECTION("eps = 0 marks every numerically nonzero cell") {
        auto psi = one_particle(g, presets::gaussian(g.axis(0), 0.0, 1.0, 0.0));
        const SupportMask sup = compute_support(polar_decompose(psi), 0.0);
        std::size_t nonzero = 0;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (std::norm(psi.amplitudes()[i]) > 0.0) ++nonzero;
        CHECK(sup.count() == nonzero);
    }

    SECTION("Gaussian support half-width matches the analytic inversion") {
        const double sigma = 1.0;
        auto psi = one_particle(g, presets::gaussian(g.axis(0), 0.0, sigma, 0.0));
        const double eps = 1e-6;
        const SupportMask sup = compute_support(polar_decompose(psi), eps);
        // |psi|^2 ~ exp(-x^2/(2 sigma^2)) relative to the peak, so the cut
        // sits at sqrt(-2 sigma^2 ln eps).
        const double expected = std::sqrt(-2.0 * sigma * sigma * std::log(eps));
        double measured = 0.0;
        for (int i = 0; i < g.axis(0).n; ++i)
            if (sup.mask[static_cast<std::size_t>(i)])
                measured = std::max(measured, std::abs(g.axis(0).coord(i)));
        CHECK(measured == Approx(expected).margin(1.5 * g.axis(0).spacing()));
    }

    SECTION("two disjoint Gaussians give two connected components") {
        auto fa = presets::gaussian(g.axis(0), -6.0, 0.5, 0.0);
        auto fb = presets::gaussian(g.axis(0), 6.0, 0.5, 0.0);
        std::vector<Complex> f(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) f[i] = fa[i] + fb[i];
        auto psi = one_particle(g, f);
        const SupportMask sup = compute_support(polar_decompose(psi), 1e-6);
        CHECK(count_components(g, sup.mask) == 2);
    }
}

TEST_CASE("support monotone in eps") {
    SpatialGrid g({Axis{128, -8.0, 8.0}}, 1, 1);
    auto psi = oracles::random_smooth_state(g, 5);
    const PolarFields polar = polar_decompose(psi);
    const SupportMask loose = compute_support(polar, 1e-8);
    const SupportMask tight = compute_support(polar, 1e-3);
    for (std::size_t i = 0; i < g.size(); ++i)
        if (tight.mask[i]) CHECK(loose.mask[i]);
    CHECK(tight.count() <= loose.count());
}
