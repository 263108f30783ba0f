#include <catch2/catch_amalgamated.hpp>

#include <numbers>

#include "qmeas/measurement.hpp"
#include "qmeas/presets.hpp"
#include "support/oracles.hpp"

using namespace qmeas;
using Catch::Approx;

namespace {

// Two-outcome setup: harmonic eigenstates as the observable basis, pointer
// Gaussians centered +-separation/2 on the apparatus axis.
struct TwoOutcome {
    ObservableSpec obs;
    ApparatusSpec app;
};

TwoOutcome make_two_outcome(double separation, double support_eps, int ns = 96, int ne = 256) {
    TwoOutcome t;
    const Axis s_axis{ns, -8.0, 8.0};
    const double e_half = separation / 2.0 + 8.0;
    const Axis e_axis{ne, -e_half, e_half};
    t.obs.grid_S = SpatialGrid({s_axis}, 1, 1);
    t.obs.eigenvalues = {0.0, 1.0};
    t.obs.eigenfunctions = {presets::harmonic_eigenstate(s_axis, 0, 1.0, 1.0, 1.0),
                            presets::harmonic_eigenstate(s_axis, 1, 1.0, 1.0, 1.0)};
    std::vector<std::vector<Complex>> pointers = {
        presets::gaussian(e_axis, -separation / 2.0, 1.0, 0.0),
        presets::gaussian(e_axis, separation / 2.0, 1.0, 0.0)};
    // Sampled Gaussians renormalized so the pointer invariant holds exactly.
    for (auto& f : pointers) {
        double n2 = 0.0;
        for (const Complex& c : f) n2 += std::norm(c);
        n2 *= e_axis.spacing();
        for (Complex& c : f) c /= std::sqrt(n2);
    }
    t.app = make_apparatus(SpatialGrid({e_axis}, 1, 1), std::move(pointers), support_eps);
    return t;
}

} // namespace

TEST_CASE("build_entangled_state") {
    const auto t = make_two_outcome(12.0, 1e-6);

    SECTION("single outcome p=[1] is a product state") {
        auto t1 = t;
        t1.obs.eigenvalues = {0.0};
        t1.obs.eigenfunctions.resize(1);
        t1.app.pointers.resize(1);
        t1.app.pointer_supports.resize(1);
        const auto psi = build_entangled_state(t1.obs, t1.app, {1.0});
        const auto sd = schmidt_decompose(
            psi, protocol_bipartition(t1.obs.grid_S, t1.app.grid_E), 1e-12);
        CHECK(sd.p.front() > 1.0 - 1e-10);
    }

    SECTION("two outcomes p=[1/2,1/2]: Schmidt recovers the weights") {
        const auto psi = build_entangled_state(t.obs, t.app, {0.5, 0.5});
        CHECK(std::abs(psi.norm_squared() - 1.0) < 1e-9);
        const auto sd =
            schmidt_decompose(psi, protocol_bipartition(t.obs.grid_S, t.app.grid_E), 1e-12);
        REQUIRE(sd.rank() == 2);
        CHECK(sd.p[0] == Approx(0.5).margin(1e-9));
        CHECK(sd.p[1] == Approx(0.5).margin(1e-9));
    }

    SECTION("phases change amplitudes but not weights") {
        const auto plain = build_entangled_state(t.obs, t.app, {0.5, 0.5});
        const auto flipped = build_entangled_state(t.obs, t.app, {0.5, 0.5},
                                                   {0.0, std::numbers::pi});
        const auto p1 = outcome_probabilities(plain, t.obs);
        const auto p2 = outcome_probabilities(flipped, t.obs);
        CHECK(p1[0] == Approx(p2[0]).margin(1e-12));
        CHECK(p1[1] == Approx(p2[1]).margin(1e-12));
        double diff = 0.0;
        for (std::size_t i = 0; i < plain.grid().size(); ++i)
            diff = std::max(diff,
                            std::abs(plain.amplitudes()[i] - flipped.amplitudes()[i]));
        CHECK(diff > 1e-3);
    }

    SECTION("bad lists are rejected") {
        CHECK_THROWS_AS(build_entangled_state(t.obs, t.app, {0.5}), SpecError);
        CHECK_THROWS_AS(build_entangled_state(t.obs, t.app, {0.7, 0.7}),
                        NormalizationError);
    }
}

TEST_CASE("projective measurement") {
    const auto t = make_two_outcome(12.0, 1e-6);

    SECTION("p=[1] always yields outcome 0") {
        const auto psi = build_entangled_state(t.obs, t.app, {1.0, 0.0});
        for (std::uint64_t seed = 0; seed < 12; ++seed) {
            const auto out = projective_measure(psi, t.obs, t.app, seed);
            CHECK(out.outcome == 0);
        }
    }

    SECTION("empirical frequency of 1e4 seeded draws is binomial-consistent") {
        const auto psi = build_entangled_state(t.obs, t.app, {0.5, 0.5});
        const auto probs = outcome_probabilities(psi, t.obs);
        CHECK(probs[0] == Approx(0.5).margin(1e-9));
        int ones = 0;
        const int n = 10000;
        for (int i = 0; i < n; ++i) {
            const auto out =
                projective_measure(psi, t.obs, t.app, static_cast<std::uint64_t>(i));
            ones += (out.outcome == 1);
        }
        // 3 sigma of Binomial(1e4, 1/2) is 150.
        CHECK(std::abs(ones - n / 2) < 150);
    }

    SECTION("re-measuring the collapsed state is deterministic") {
        const auto psi = build_entangled_state(t.obs, t.app, {0.3, 0.7});
        const auto first = projective_measure(psi, t.obs, t.app, 9);
        const auto again = projective_measure(first.collapsed, t.obs, t.app, 1234);
        CHECK(again.outcome == first.outcome);
        CHECK(again.probabilities[first.outcome] == Approx(1.0).margin(1e-12));
    }

    SECTION("a state outside the basis is rejected") {
        const auto g = join_grids(t.obs.grid_S, t.app.grid_E);
        auto stray = oracles::random_smooth_state(g, 3, 3);
        CHECK_THROWS_AS(projective_measure(stray, t.obs, t.app, 0), BasisMismatchError);
    }
}

TEST_CASE("consistency check") {
    SECTION("pointer Gaussians separated by 12 sigma are consistent") {
        const auto t = make_two_outcome(12.0, 1e-6);
        const auto psi = build_entangled_state(t.obs, t.app, {0.4, 0.6});
        const auto rep = check_consistency(psi, t.obs, t.app, 1e-6);
        CHECK(rep.consistent);
        CHECK(rep.max_deviation < 1e-3);
        CHECK(rep.overlap[0][1] == 0.0);
    }

    SECTION("identical pointers: overlap equals the full pointer support") {
        const Axis s_axis{64, -8.0, 8.0};
        const Axis e_axis{128, -8.0, 8.0};
        ObservableSpec obs;
        obs.grid_S = SpatialGrid({s_axis}, 1, 1);
        obs.eigenvalues = {0.0, 1.0};
        obs.eigenfunctions = {presets::harmonic_eigenstate(s_axis, 0, 1.0, 1.0, 1.0),
                              presets::harmonic_eigenstate(s_axis, 1, 1.0, 1.0, 1.0)};
        auto pointer = presets::gaussian(e_axis, 0.0, 1.0, 0.0);
        const auto app =
            make_apparatus(SpatialGrid({e_axis}, 1, 1), {pointer, pointer}, 1e-6);
        const auto psi = build_entangled_state(obs, app, {0.5, 0.5});
        const auto rep = check_consistency(psi, obs, app, 1e-6);
        CHECK_FALSE(rep.consistent);
        // Omega^k = supp(alpha_k) x Omega^{E,k} with equal pointer supports;
        // the overlap is the smaller of the two joint supports.
        const double dv = psi.grid().cell_volume();
        std::size_t smaller = std::min(
            [&] {
                std::size_t c = 0;
                for (char m : rep.supports[0]) c += (m != 0);
                return c;
            }(),
            [&] {
                std::size_t c = 0;
                for (char m : rep.supports[1]) c += (m != 0);
                return c;
            }());
        CHECK(rep.overlap[0][1] == Approx(static_cast<double>(smaller) * dv));
    }

    SECTION("single outcome is trivially consistent") {
        auto t = make_two_outcome(12.0, 1e-6);
        t.obs.eigenvalues = {1.5};
        t.obs.eigenfunctions.resize(1);
        t.app.pointers.resize(1);
        t.app.pointer_supports.resize(1);
        const auto psi = build_entangled_state(t.obs, t.app, {1.0});
        const auto rep = check_consistency(psi, t.obs, t.app, 1e-6);
        CHECK(rep.consistent);
        CHECK(rep.b_probabilities[0] == Approx(1.0).margin(1e-3));
    }
}

TEST_CASE("expectation via the piecewise-constant functional") {
    // Tight supports (eps = 1e-10) and wide separation keep the truncated
    // tails below the 1e-8 route-agreement tolerance.
    const auto t = make_two_outcome(20.0, 1e-10, 128, 512);

    SECTION("p=[1] gives a_0") {
        auto t1 = t;
        t1.obs.eigenvalues = {5.0};
        t1.obs.eigenfunctions.resize(1);
        t1.app.pointers.resize(1);
        t1.app.pointer_supports.resize(1);
        const auto psi = build_entangled_state(t1.obs, t1.app, {1.0});
        const auto rep = check_consistency(psi, t1.obs, t1.app, 1e-10);
        REQUIRE(rep.consistent);
        CHECK(expectation_via_functional(psi, t1.obs, rep) == Approx(5.0).margin(1e-8));
    }

    SECTION("p=[1/2,1/2], a=[0,1] gives 1/2") {
        const auto psi = build_entangled_state(t.obs, t.app, {0.5, 0.5});
        const auto rep = check_consistency(psi, t.obs, t.app, 1e-10);
        REQUIRE(rep.consistent);
        CHECK(expectation_via_functional(psi, t.obs, rep) == Approx(0.5).margin(1e-8));
    }

    SECTION("random p and a match sum a_k p_k within 1e-8") {
        auto t2 = t;
        t2.obs.eigenvalues = {-0.7, 1.3};
        const std::vector<double> p{0.37, 0.63};
        const auto psi = build_entangled_state(t2.obs, t2.app, p);
        const auto rep = check_consistency(psi, t2.obs, t2.app, 1e-10);
        REQUIRE(rep.consistent);
        const double expected = -0.7 * 0.37 + 1.3 * 0.63;
        CHECK(expectation_via_functional(psi, t2.obs, rep) ==
              Approx(expected).margin(1e-8));
    }

    SECTION("inconsistent report is refused") {
        const auto psi = build_entangled_state(t.obs, t.app, {0.5, 0.5});
        auto rep = check_consistency(psi, t.obs, t.app, 1e-10);
        rep.consistent = false;
        CHECK_THROWS_AS(expectation_via_functional(psi, t.obs, rep), ConsistencyError);
    }
}

TEST_CASE("branch densities") {
    const auto t = make_two_outcome(20.0, 1e-10, 128, 512);

    SECTION("product state: |Psi_1|^2 is |psi|^2") {
        auto t1 = t;
        t1.obs.eigenvalues = {0.0};
        t1.obs.eigenfunctions.resize(1);
        t1.app.pointers.resize(1);
        t1.app.pointer_supports.resize(1);
        const auto psi = build_entangled_state(t1.obs, t1.app, {1.0});
        const auto rep = check_consistency(psi, t1.obs, t1.app, 1e-10);
        const auto bd = branch_density(psi, t1.obs, t1.app, rep);
        CHECK(bd.max_piecewise_deviation < 1e-10);
        CHECK(bd.branch_norms[0] == Approx(1.0).margin(1e-8));
    }

    SECTION("two outcomes: piecewise identity and unit branch norms") {
        const auto psi = build_entangled_state(t.obs, t.app, {0.5, 0.5});
        const auto rep = check_consistency(psi, t.obs, t.app, 1e-10);
        REQUIRE(rep.consistent);
        const auto bd = branch_density(psi, t.obs, t.app, rep);
        CHECK(bd.max_piecewise_deviation < 1e-8);
        for (double n : bd.branch_norms) CHECK(n == Approx(1.0).margin(1e-8));
    }

    SECTION("inconsistent apparatus is refused") {
        const auto psi = build_entangled_state(t.obs, t.app, {0.5, 0.5});
        auto rep = check_consistency(psi, t.obs, t.app, 1e-10);
        rep.consistent = false;
        CHECK_THROWS_AS(branch_density(psi, t.obs, t.app, rep), ConsistencyError);
    }
}

TEST_CASE("symmetrized two-particle branch integrates to p_k over the union support") {
    // One shared axis; observable modes live far left, pointers far right,
    // so alpha_k and phi_k are orthogonal as functions on that axis.
    const Axis axis{512, -26.0, 26.0};
    auto a0 = presets::gaussian(axis, -14.0, 1.0, 0.0);
    auto a1 = presets::harmonic_eigenstate(axis, 1, 1.0, 1.0, 1.0, -14.0);
    auto f0 = presets::gaussian(axis, 8.0, 1.0, 0.0);
    auto f1 = presets::gaussian(axis, 20.0, 1.0, 0.0);

    const std::vector<double> p{0.35, 0.65};
    const auto b0 = symmetrize_two_particle(axis, a0, f0, ExchangeStatistics::fermion);
    const auto b1 = symmetrize_two_particle(axis, a1, f1, ExchangeStatistics::fermion);
    std::vector<Complex> amps(b0.grid().size());
    for (std::size_t i = 0; i < amps.size(); ++i)
        amps[i] = std::sqrt(p[0]) * b0.amplitudes()[i] + std::sqrt(p[1]) * b1.amplitudes()[i];
    ManyBodyWavefunction psi(b0.grid(), std::move(amps), {1.0, 1.0});
    REQUIRE(std::abs(psi.norm_squared() - 1.0) < 1e-6);

    // Omega^k = (supp alpha_k x supp phi_k) U (swap), per outcome.
    const double eps = 1e-8;
    const auto n = static_cast<std::size_t>(axis.n);
    const auto mask_of = [&](const std::vector<Complex>& f) { return mode_support(f, eps); };
    const Bipartition part{{0}, {1}};
    for (std::size_t k = 0; k < 2; ++k) {
        const auto ms = mask_of(k == 0 ? a0 : a1);
        const auto me = mask_of(k == 0 ? f0 : f1);
        std::vector<char> joint(n * n, 0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if ((ms[i] && me[j]) || (ms[j] && me[i])) joint[i * n + j] = 1;
        const double b = b_omega_one(psi, RegionSpec::from_mask(joint));
        CHECK(b == Approx(p[k]).margin(1e-6));
    }
}
