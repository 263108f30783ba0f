#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "qmeas/bipartite.hpp"
#include "qmeas/errors.hpp"
#include "qmeas/integral_op.hpp"
#include "qmeas/rng.hpp"
#include "qmeas/wavefunction.hpp"

namespace qmeas {

namespace detail {

inline double mode_norm_squared(const std::vector<Complex>& f, double dv) {
    double s = 0.0;
    for (const Complex& c : f) s += std::norm(c);
    return s * dv;
}

inline Complex mode_inner(const std::vector<Complex>& a, const std::vector<Complex>& b,
                          double dv) {
    Complex s{0.0, 0.0};
    for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
    return s * dv;
}

inline double gram_deviation(const std::vector<std::vector<Complex>>& modes, double dv) {
    double worst = 0.0;
    for (std::size_t i = 0; i < modes.size(); ++i)
        for (std::size_t j = 0; j < modes.size(); ++j) {
            const Complex g = mode_inner(modes[i], modes[j], dv);
            const Complex target = (i == j) ? Complex{1.0, 0.0} : Complex{0.0, 0.0};
            worst = std::max(worst, std::abs(g - target));
        }
    return worst;
}

} // namespace detail

/// Support of a single-side mode function: |f|^2 > eps * max |f|^2.
inline std::vector<char> mode_support(const std::vector<Complex>& f, double eps) {
    double m = 0.0;
    for (const Complex& c : f) m = std::max(m, std::norm(c));
    std::vector<char> mask(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) mask[i] = std::norm(f[i]) > eps * m;
    return mask;
}

/// Observable A_S = sum_k a_k |a_k><a_k| sampled on the system grid.
struct ObservableSpec {
    SpatialGrid grid_S;
    std::vector<double> eigenvalues;
    std::vector<std::vector<Complex>> eigenfunctions;

    std::size_t outcomes() const { return eigenvalues.size(); }

    void validate() const {
        if (eigenvalues.size() != eigenfunctions.size() || eigenvalues.empty())
            throw SpecError("ObservableSpec: need matching eigenvalue/eigenfunction lists");
        for (std::size_t k = 0; k + 1 < eigenvalues.size(); ++k)
            if (!(eigenvalues[k] < eigenvalues[k + 1]))
                throw SpecError("ObservableSpec: eigenvalues must be strictly sorted");
        for (const auto& f : eigenfunctions)
            if (f.size() != grid_S.size())
                throw GridMismatchError("ObservableSpec: eigenfunction not on the S grid");
        if (detail::gram_deviation(eigenfunctions, grid_S.cell_volume()) > 1e-8)
            throw SpecError("ObservableSpec: eigenfunctions are not orthonormal");
    }
};

/// Pointer states of the apparatus E with their thresholded supports.
struct ApparatusSpec {
    SpatialGrid grid_E;
    std::vector<std::vector<Complex>> pointers;
    std::vector<std::vector<char>> pointer_supports;
    double support_eps = 1e-6;
    bool orthonormal = false;
};

inline ApparatusSpec make_apparatus(SpatialGrid grid_E, std::vector<std::vector<Complex>> pointers,
                                    double support_eps = 1e-6) {
    ApparatusSpec app;
    app.grid_E = std::move(grid_E);
    app.pointers = std::move(pointers);
    app.support_eps = support_eps;
    const double dv = app.grid_E.cell_volume();
    for (const auto& f : app.pointers) {
        if (f.size() != app.grid_E.size())
            throw GridMismatchError("make_apparatus: pointer not on the E grid");
        if (std::abs(detail::mode_norm_squared(f, dv) - 1.0) > 1e-9)
            throw NormalizationError("make_apparatus: pointer is not normalized");
        app.pointer_supports.push_back(mode_support(f, support_eps));
    }
    app.orthonormal = detail::gram_deviation(app.pointers, dv) <= 1e-8;
    return app;
}

inline bool pointer_supports_disjoint(const ApparatusSpec& app) {
    for (std::size_t k = 0; k < app.pointer_supports.size(); ++k)
        for (std::size_t l = k + 1; l < app.pointer_supports.size(); ++l)
            for (std::size_t i = 0; i < app.pointer_supports[k].size(); ++i)
                if (app.pointer_supports[k][i] && app.pointer_supports[l][i]) return false;
    return true;
}

/// Joint grid [S axes..., E axes...] used by every protocol state.
inline SpatialGrid join_grids(const SpatialGrid& gs, const SpatialGrid& ge) {
    std::vector<Axis> axes;
    axes.reserve(static_cast<std::size_t>(gs.rank() + ge.rank()));
    for (int j = 0; j < gs.rank(); ++j) axes.push_back(gs.axis(j));
    for (int j = 0; j < ge.rank(); ++j) axes.push_back(ge.axis(j));
    return SpatialGrid(std::move(axes), gs.rank() + ge.rank(), 1);
}

inline Bipartition protocol_bipartition(const SpatialGrid& gs, const SpatialGrid& ge) {
    Bipartition part;
    for (int j = 0; j < gs.rank(); ++j) part.coords_S.push_back(j);
    for (int j = 0; j < ge.rank(); ++j) part.coords_E.push_back(gs.rank() + j);
    return part;
}

/// psi = sum_k e^{i theta_k} sqrt(p_k) alpha_k(xi) phi_k(sigma).
inline ManyBodyWavefunction build_entangled_state(const ObservableSpec& obs,
                                                  const ApparatusSpec& app,
                                                  const std::vector<double>& p,
                                                  const std::vector<double>& phases = {}) {
    obs.validate();
    if (p.size() != obs.outcomes() || p.size() != app.pointers.size())
        throw SpecError("build_entangled_state: list lengths do not match");
    if (!phases.empty() && phases.size() != p.size())
        throw SpecError("build_entangled_state: phase list length mismatch");
    double sum = 0.0;
    for (double w : p) {
        if (w < 0.0) throw SpecError("build_entangled_state: negative probability");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw NormalizationError("build_entangled_state: probabilities must sum to 1");

    const SpatialGrid joint = join_grids(obs.grid_S, app.grid_E);
    const std::size_t ne = app.grid_E.size();
    std::vector<Complex> amps(joint.size(), Complex{0.0, 0.0});
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (p[k] == 0.0) continue;
        const Complex c = std::polar(std::sqrt(p[k]), phases.empty() ? 0.0 : phases[k]);
        for (std::size_t s = 0; s < obs.grid_S.size(); ++s) {
            const Complex cs = c * obs.eigenfunctions[k][s];
            for (std::size_t e = 0; e < ne; ++e)
                amps[s * ne + e] += cs * app.pointers[k][e];
        }
    }
    std::vector<double> masses(static_cast<std::size_t>(joint.particles()), 1.0);
    return ManyBodyWavefunction(joint, std::move(amps), std::move(masses), 1.0, 0.0);
}

namespace detail {

/// Partial projection <alpha_k | psi>_S as a function on the E grid.
inline std::vector<Complex> project_onto(const std::vector<Complex>& alpha,
                                         const ManyBodyWavefunction& psi, std::size_t ne,
                                         double dvs) {
    std::vector<Complex> out(ne, Complex{0.0, 0.0});
    const std::size_t ns = alpha.size();
    for (std::size_t s = 0; s < ns; ++s) {
        const Complex a = std::conj(alpha[s]);
        const std::size_t base = s * ne;
        for (std::size_t e = 0; e < ne; ++e) out[e] += a * psi.amplitudes()[base + e];
    }
    for (Complex& c : out) c *= dvs;
    return out;
}

} // namespace detail

/// p_k by the sum_mu |c_{k mu}|^2 rule: mass of the partial projection of
/// psi onto each eigenfunction.
inline std::vector<double> outcome_probabilities(const ManyBodyWavefunction& psi,
                                                 const ObservableSpec& obs) {
    const std::size_t ne = psi.grid().size() / obs.grid_S.size();
    const double dvs = obs.grid_S.cell_volume();
    const double dve = psi.grid().cell_volume() / dvs;
    std::vector<double> p(obs.outcomes(), 0.0);
    for (std::size_t k = 0; k < obs.outcomes(); ++k) {
        const auto b = detail::project_onto(obs.eigenfunctions[k], psi, ne, dvs);
        p[k] = detail::mode_norm_squared(b, dve);
    }
    return p;
}

/// Populations <a_h| tr_E rho |a_h> of the system reduced state; this is the
/// observable statistics both weak variants share.
inline std::vector<double> system_populations(const ManyBodyWavefunction& psi,
                                              const ObservableSpec& obs) {
    return outcome_probabilities(psi, obs);
}

struct ProjectiveOutcome {
    std::size_t outcome = 0;
    ManyBodyWavefunction collapsed;
    std::vector<double> probabilities;
};

/// Copenhagen-side projective measurement: sample k from p, collapse onto
/// alpha_k x phi_k.
inline ProjectiveOutcome projective_measure(const ManyBodyWavefunction& psi,
                                            const ObservableSpec& obs, const ApparatusSpec& app,
                                            std::uint64_t seed) {
    obs.validate();
    const std::size_t ne = app.grid_E.size();
    if (psi.grid().size() != obs.grid_S.size() * ne)
        throw GridMismatchError("projective_measure: state is not on the S x E grid");

    const double dvs = obs.grid_S.cell_volume();
    const double dve = app.grid_E.cell_volume();

    std::vector<double> p(obs.outcomes(), 0.0);
    ManyBodyWavefunction residual_probe = psi;
    std::vector<Complex>& res = residual_probe.amplitudes();
    for (std::size_t k = 0; k < obs.outcomes(); ++k) {
        const auto b = detail::project_onto(obs.eigenfunctions[k], psi, ne, dvs);
        p[k] = detail::mode_norm_squared(b, dve);
        const Complex ck = detail::mode_inner(app.pointers[k], b, dve);
        for (std::size_t s = 0; s < obs.grid_S.size(); ++s) {
            const Complex a = ck * obs.eigenfunctions[k][s];
            for (std::size_t e = 0; e < ne; ++e)
                res[s * ne + e] -= a * app.pointers[k][e];
        }
    }
    double res2 = 0.0;
    for (const Complex& c : res) res2 += std::norm(c);
    res2 *= psi.grid().cell_volume();
    if (std::sqrt(std::max(res2, 0.0)) > 1e-6)
        throw BasisMismatchError("projective_measure: state not expressible in the obs x app basis");

    std::vector<double> cum(p.size());
    std::partial_sum(p.begin(), p.end(), cum.begin());
    Rng rng(seed);
    const std::size_t k = rng.pick_weighted(cum);

    const SpatialGrid joint = join_grids(obs.grid_S, app.grid_E);
    std::vector<Complex> amps(joint.size());
    for (std::size_t s = 0; s < obs.grid_S.size(); ++s)
        for (std::size_t e = 0; e < ne; ++e)
            amps[s * ne + e] = obs.eigenfunctions[k][s] * app.pointers[k][e];
    std::vector<double> masses(static_cast<std::size_t>(joint.particles()), 1.0);

    ProjectiveOutcome out;
    out.outcome = k;
    out.collapsed = ManyBodyWavefunction(joint, std::move(amps), std::move(masses), 1.0,
                                         psi.time());
    out.probabilities = std::move(p);
    return out;
}

/// Per-outcome supports with overlaps, B-probabilities, and the verdict.
struct ConsistencyReport {
    SpatialGrid joint_grid;
    std::vector<std::vector<char>> supports;
    std::vector<std::vector<double>> overlap;
    std::vector<double> b_probabilities;
    std::vector<double> target_probabilities;
    double max_deviation = 0.0;
    bool consistent = false;
    double max_cell_mass = 0.0;    // largest single-cell |psi|^2 dV
    double greedy_residual = 0.0;  // sum over subdomains of |achieved - target|
};

namespace detail {

inline void fill_overlaps_and_verdict(const ManyBodyWavefunction& psi, ConsistencyReport& rep) {
    const std::size_t K = rep.supports.size();
    const double dv = rep.joint_grid.cell_volume();
    rep.overlap.assign(K, std::vector<double>(K, 0.0));
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t l = k + 1; l < K; ++l) {
            std::size_t cnt = 0;
            for (std::size_t i = 0; i < rep.supports[k].size(); ++i)
                cnt += (rep.supports[k][i] && rep.supports[l][i]);
            rep.overlap[k][l] = rep.overlap[l][k] = static_cast<double>(cnt) * dv;
        }

    rep.b_probabilities.clear();
    rep.max_deviation = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const double b = b_omega_one(psi, RegionSpec::from_mask(rep.supports[k]));
        rep.b_probabilities.push_back(b);
        rep.max_deviation =
            std::max(rep.max_deviation, std::abs(b - rep.target_probabilities[k]));
    }

    bool overlaps_clear = true;
    for (std::size_t k = 0; k < K && overlaps_clear; ++k)
        for (std::size_t l = k + 1; l < K; ++l)
            if (rep.overlap[k][l] > 0.0) {
                overlaps_clear = false;
                break;
            }
    rep.consistent = overlaps_clear && rep.max_deviation < 1e-3;

    rep.max_cell_mass = 0.0;
    for (const Complex& c : psi.amplitudes())
        rep.max_cell_mass = std::max(rep.max_cell_mass, std::norm(c) * dv);
}

} // namespace detail

/// Projective consistency: Omega^k = supp(alpha_k) x Omega^{E,k}; the
/// apparatus is consistent iff the Omega^k are pairwise disjoint and
/// B_{Omega^k}(1) tracks p_k.
inline ConsistencyReport check_consistency(const ManyBodyWavefunction& psi,
                                           const ObservableSpec& obs, const ApparatusSpec& app,
                                           double eps) {
    obs.validate();
    ConsistencyReport rep;
    rep.joint_grid = psi.grid();
    const Bipartition part = protocol_bipartition(obs.grid_S, app.grid_E);
    rep.target_probabilities = outcome_probabilities(psi, obs);
    for (std::size_t k = 0; k < obs.outcomes(); ++k) {
        const auto ms = mode_support(obs.eigenfunctions[k], eps);
        const auto me = mode_support(app.pointers[k], eps);
        rep.supports.push_back(RegionSpec::product(part, ms, me).realize(psi.grid()));
    }
    detail::fill_overlaps_and_verdict(psi, rep);
    return rep;
}

/// B-route expectation with the piecewise-constant labeling f(x) = a_k on
/// Omega^k: returns sum_k a_k B_{Omega^k}(1).
inline double expectation_via_functional(const ManyBodyWavefunction& psi,
                                         const ObservableSpec& obs,
                                         const ConsistencyReport& report) {
    if (!report.consistent)
        throw ConsistencyError("expectation_via_functional: apparatus is not consistent");
    double acc = 0.0;
    for (std::size_t k = 0; k < report.supports.size(); ++k)
        acc += obs.eigenvalues[k] *
               b_omega_one(psi, RegionSpec::from_mask(report.supports[k]));
    return acc;
}

/// Per-outcome branch densities |Psi_k|^2 = |alpha_k|^2 |phi_k|^2.
struct BranchDensity {
    std::vector<std::vector<double>> density;
    std::vector<double> branch_norms;         // integral over Omega^k, should be 1
    double max_piecewise_deviation = 0.0;     // max | |psi|^2 - p_k |Psi_k|^2 | on Omega^k
};

inline BranchDensity branch_density(const ManyBodyWavefunction& psi, const ObservableSpec& obs,
                                    const ApparatusSpec& app, const ConsistencyReport& report) {
    if (!report.consistent) throw ConsistencyError("branch_density: apparatus is not consistent");
    BranchDensity out;
    const std::size_t ne = app.grid_E.size();
    const double dv = psi.grid().cell_volume();
    for (std::size_t k = 0; k < obs.outcomes(); ++k) {
        std::vector<double> d(psi.grid().size(), 0.0);
        for (std::size_t s = 0; s < obs.grid_S.size(); ++s) {
            const double as = std::norm(obs.eigenfunctions[k][s]);
            for (std::size_t e = 0; e < ne; ++e)
                d[s * ne + e] = as * std::norm(app.pointers[k][e]);
        }
        double mass = 0.0;
        const double pk = report.target_probabilities[k];
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (!report.supports[k][i]) continue;
            mass += d[i] * dv;
            const double lhs = std::norm(psi.amplitudes()[i]);
            out.max_piecewise_deviation =
                std::max(out.max_piecewise_deviation, std::abs(lhs - pk * d[i]));
        }
        out.branch_norms.push_back(mass);
        out.density.push_back(std::move(d));
    }
    return out;
}

/// Gaussian measurement operators W_k, diagonal in the a-basis with entries
/// C_k exp(-(a_k - a_h)^2 / (2 sigma_k)).
struct KrausSet {
    std::vector<double> a;
    std::vector<double> sigma;
    std::vector<double> C;

    std::size_t size() const { return a.size(); }

    double element(std::size_t k, std::size_t h) const {
        const double d = a[k] - a[h];
        return C[k] * std::exp(-d * d / (2.0 * sigma[k]));
    }

    double completeness_residual() const {
        double worst = 0.0;
        for (std::size_t h = 0; h < size(); ++h) {
            double s = 0.0;
            for (std::size_t k = 0; k < size(); ++k) {
                const double w = element(k, h);
                s += w * w;
            }
            worst = std::max(worst, std::abs(s - 1.0));
        }
        return worst;
    }
};

/// Solve the completeness system sum_k C_k^2 exp(-(a_k-a_h)^2/sigma_k) = 1
/// for C_k^2; any non-positive solution is a hard error.
inline KrausSet build_kraus(const std::vector<double>& a, const std::vector<double>& sigma) {
    const std::size_t K = a.size();
    if (K == 0 || sigma.size() != K)
        throw SpecError("build_kraus: need matching eigenvalue/width lists");
    for (std::size_t i = 0; i < K; ++i) {
        if (!(sigma[i] > 0.0)) throw SpecError("build_kraus: widths must be positive");
        for (std::size_t j = i + 1; j < K; ++j)
            if (a[i] == a[j]) throw SpecError("build_kraus: eigenvalues must be distinct");
    }

    Eigen::MatrixXd A(K, K);
    for (std::size_t h = 0; h < K; ++h)
        for (std::size_t k = 0; k < K; ++k) {
            const double d = a[k] - a[h];
            A(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(k)) =
                std::exp(-d * d / sigma[k]);
        }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (!lu.isInvertible())
        throw KrausNormalizationError("build_kraus: completeness system is singular");
    const Eigen::VectorXd c2 = lu.solve(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(K)));
    if ((A * c2 - Eigen::VectorXd::Ones(static_cast<Eigen::Index>(K))).cwiseAbs().maxCoeff() >
        1e-9)
        throw KrausNormalizationError("build_kraus: completeness system solve failed");

    KrausSet out;
    out.a = a;
    out.sigma = sigma;
    out.C.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
        const double v = c2(static_cast<Eigen::Index>(k));
        if (!(v > 0.0))
            throw KrausPositivityError("build_kraus: completeness solution is not positive");
        out.C[k] = std::sqrt(v);
    }
    return out;
}

/// p_k^w = C_k^2 sum_h p_h exp(-(a_k-a_h)^2/sigma_k), the closed form of
/// <psi| W_k^dag W_k |psi>.
inline std::vector<double> weak_probabilities(const std::vector<double>& p,
                                              const KrausSet& kraus) {
    if (p.size() != kraus.size()) throw SpecError("weak_probabilities: length mismatch");
    double sum = 0.0;
    for (double w : p) sum += w;
    if (std::abs(sum - 1.0) > 1e-9)
        throw NormalizationError("weak_probabilities: probabilities must sum to 1");
    std::vector<double> out(p.size(), 0.0);
    for (std::size_t k = 0; k < p.size(); ++k) {
        double s = 0.0;
        for (std::size_t h = 0; h < p.size(); ++h) {
            const double d = kraus.a[k] - kraus.a[h];
            s += p[h] * std::exp(-d * d / kraus.sigma[k]);
        }
        out[k] = kraus.C[k] * kraus.C[k] * s;
    }
    return out;
}

/// The same probabilities by applying the W_k matrix to the coefficient
/// vector sqrt(p_h) and taking the squared norm.
inline std::vector<double> weak_probabilities_operator_route(const std::vector<double>& p,
                                                             const KrausSet& kraus) {
    std::vector<double> out(p.size(), 0.0);
    for (std::size_t k = 0; k < p.size(); ++k) {
        double n2 = 0.0;
        for (std::size_t h = 0; h < p.size(); ++h) {
            const double w = kraus.element(k, h) * std::sqrt(p[h]);
            n2 += w * w;
        }
        out[k] = n2;
    }
    return out;
}

/// System coefficients on |a_h> after weak outcome k:
/// (C_k / sqrt(p_k^w)) exp(-(a_k-a_h)^2/(2 sigma_k)) sqrt(p_h).
inline std::vector<double> weak_collapse_system(const std::vector<double>& p,
                                                const KrausSet& kraus, std::size_t outcome) {
    const std::vector<double> pw = weak_probabilities(p, kraus);
    if (!(pw[outcome] > 0.0))
        throw ZeroProbabilityError("weak_collapse_system: outcome has zero probability");
    const double inv = 1.0 / std::sqrt(pw[outcome]);
    std::vector<double> out(p.size(), 0.0);
    for (std::size_t h = 0; h < p.size(); ++h)
        out[h] = kraus.element(outcome, h) * std::sqrt(p[h]) * inv;
    return out;
}

namespace detail {

struct GreedyPick {
    std::vector<char> mask;   // chosen cells (same indexing as the weights)
    double achieved = 0.0;
    std::size_t chosen = 0;
    std::size_t pool = 0;     // cells with positive weight available
};

/// Deterministic subdomain construction: sort cells by descending mass,
/// accumulate until the target is met; ties break on the lower index.
inline GreedyPick greedy_subdomain(const std::vector<double>& weights, double target) {
    GreedyPick out;
    out.mask.assign(weights.size(), 0);
    std::vector<std::size_t> order;
    order.reserve(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i)
        if (weights[i] > 0.0) order.push_back(i);
    out.pool = order.size();
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return weights[x] > weights[y]; });
    for (std::size_t i : order) {
        if (out.achieved >= target) break;
        out.mask[i] = 1;
        out.achieved += weights[i];
        ++out.chosen;
    }
    return out;
}

} // namespace detail

struct WeakVariantAResult {
    ManyBodyWavefunction joint;                    // pre-measurement entangled state
    std::vector<double> probabilities;             // p_k^w
    std::vector<ManyBodyWavefunction> finals;      // per-outcome post states
    std::vector<double> apparatus_purity;          // tr rho_E^2 per outcome
    ConsistencyReport report;                      // Theta^k supports
};

/// Weak measurement with apparatus consistency: the pointer stays definite
/// and each |b_k> is entangled with a superposition of eigenstates. Theta^k
/// couples greedily chosen S cells with the k-th pointer support.
inline WeakVariantAResult weak_variant_A(const std::vector<double>& p, const KrausSet& kraus,
                                         const ObservableSpec& obs, const ApparatusSpec& app) {
    obs.validate();
    if (p.size() != kraus.size() || p.size() != obs.outcomes() ||
        p.size() != app.pointers.size())
        throw SpecError("weak_variant_A: list lengths do not match");
    if (!app.orthonormal || !pointer_supports_disjoint(app))
        throw ConsistencyError("weak_variant_A: pointers must be orthonormal with disjoint supports");

    const std::size_t K = p.size();
    const std::size_t ns = obs.grid_S.size();
    const std::size_t ne = app.grid_E.size();
    const SpatialGrid joint = join_grids(obs.grid_S, app.grid_E);
    const Bipartition part = protocol_bipartition(obs.grid_S, app.grid_E);
    const double dvs = obs.grid_S.cell_volume();

    WeakVariantAResult out;
    out.probabilities = weak_probabilities(p, kraus);

    // Unnormalized branch s_k = sum_h C_k e^{-(a_k-a_h)^2/2sigma} sqrt(p_h) alpha_h,
    // with |s_k|^2 integrating to p_k^w.
    std::vector<std::vector<Complex>> branch(K, std::vector<Complex>(ns, Complex{0.0, 0.0}));
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t h = 0; h < K; ++h) {
            const double c = kraus.element(k, h) * std::sqrt(p[h]);
            if (c == 0.0) continue;
            for (std::size_t s = 0; s < ns; ++s)
                branch[k][s] += c * obs.eigenfunctions[h][s];
        }

    std::vector<Complex> amps(joint.size(), Complex{0.0, 0.0});
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t s = 0; s < ns; ++s) {
            const Complex cs = branch[k][s];
            if (cs == Complex{0.0, 0.0}) continue;
            for (std::size_t e = 0; e < ne; ++e)
                amps[s * ne + e] += cs * app.pointers[k][e];
        }
    std::vector<double> masses(static_cast<std::size_t>(joint.particles()), 1.0);
    out.joint = ManyBodyWavefunction(joint, std::move(amps), masses, 1.0, 0.0);

    out.report.joint_grid = joint;
    out.report.target_probabilities = out.probabilities;
    for (std::size_t k = 0; k < K; ++k) {
        // Final state: normalized branch times the definite pointer.
        const double inv = 1.0 / std::sqrt(out.probabilities[k]);
        std::vector<Complex> famps(joint.size(), Complex{0.0, 0.0});
        for (std::size_t s = 0; s < ns; ++s) {
            const Complex cs = branch[k][s] * inv;
            for (std::size_t e = 0; e < ne; ++e)
                famps[s * ne + e] = cs * app.pointers[k][e];
        }
        out.finals.emplace_back(joint, std::move(famps), masses, 1.0, 0.0);
        out.apparatus_purity.push_back(
            schmidt_decompose(out.finals.back(), part, 1e-14).purity());

        // Theta^k = (greedy union of S cells) x Omega^{E,k}.
        std::vector<double> w(ns, 0.0);
        for (std::size_t s = 0; s < ns; ++s) w[s] = std::norm(branch[k][s]) * dvs;
        const auto pick = detail::greedy_subdomain(w, out.probabilities[k]);
        out.report.greedy_residual += std::abs(pick.achieved - out.probabilities[k]);
        out.report.supports.push_back(
            RegionSpec::product(part, pick.mask, app.pointer_supports[k]).realize(joint));
    }
    detail::fill_overlaps_and_verdict(out.joint, out.report);
    return out;
}

struct WeakVariantBResult {
    ManyBodyWavefunction initial;                  // the projective-consistent state
    std::vector<double> probabilities;             // via the (W_k x I) route
    std::vector<ManyBodyWavefunction> finals;      // superpositions of |a_h>|b_h>
    std::vector<double> apparatus_purity;
    ConsistencyReport report;                      // all Theta^k with their overlaps
};

/// Weak measurement without apparatus consistency: W_k x I applied to the
/// projective state leaves the pointer in superposition. Theta^k draws
/// partial subdomains Xi^h from every Omega^h pool.
inline WeakVariantBResult weak_variant_B(const std::vector<double>& p, const KrausSet& kraus,
                                         const ObservableSpec& obs, const ApparatusSpec& app,
                                         double eps = 1e-6) {
    obs.validate();
    if (p.size() != kraus.size() || p.size() != obs.outcomes() ||
        p.size() != app.pointers.size())
        throw SpecError("weak_variant_B: list lengths do not match");
    if (!pointer_supports_disjoint(app))
        throw ConsistencyError("weak_variant_B: starting apparatus must have disjoint supports");

    const std::size_t K = p.size();
    const std::size_t ns = obs.grid_S.size();
    const std::size_t ne = app.grid_E.size();
    const SpatialGrid joint = join_grids(obs.grid_S, app.grid_E);
    const Bipartition part = protocol_bipartition(obs.grid_S, app.grid_E);
    const double dv = joint.cell_volume();

    WeakVariantBResult out;
    out.initial = build_entangled_state(obs, app, p);

    // Omega^h pools and the normalized branch mass per cell.
    std::vector<std::vector<char>> omega(K);
    std::vector<std::vector<double>> branch_mass(K);
    for (std::size_t h = 0; h < K; ++h) {
        const auto ms = mode_support(obs.eigenfunctions[h], eps);
        const auto me = mode_support(app.pointers[h], eps);
        omega[h] = RegionSpec::product(part, ms, me).realize(joint);
        branch_mass[h].assign(joint.size(), 0.0);
        for (std::size_t s = 0; s < ns; ++s) {
            const double as = std::norm(obs.eigenfunctions[h][s]);
            for (std::size_t e = 0; e < ne; ++e) {
                const std::size_t i = s * ne + e;
                if (omega[h][i]) branch_mass[h][i] = as * std::norm(app.pointers[h][e]) * dv;
            }
        }
    }

    const std::vector<double> pw = weak_probabilities(p, kraus);
    out.probabilities.resize(K);
    out.report.joint_grid = joint;
    out.report.target_probabilities = pw;

    double max_branch_cell = 0.0;
    for (std::size_t h = 0; h < K; ++h)
        for (double m : branch_mass[h]) max_branch_cell = std::max(max_branch_cell, m);

    bool partial_foreign = false;
    for (std::size_t k = 0; k < K; ++k) {
        // (W_k x I) |psi>.
        std::vector<Complex> famps(joint.size(), Complex{0.0, 0.0});
        for (std::size_t h = 0; h < K; ++h) {
            const double c = kraus.element(k, h) * std::sqrt(p[h]);
            if (c == 0.0) continue;
            for (std::size_t s = 0; s < ns; ++s) {
                const Complex cs = c * obs.eigenfunctions[h][s];
                for (std::size_t e = 0; e < ne; ++e)
                    famps[s * ne + e] += cs * app.pointers[h][e];
            }
        }
        double n2 = 0.0;
        for (const Complex& c : famps) n2 += std::norm(c);
        n2 *= dv;
        out.probabilities[k] = n2;
        if (!(n2 > 0.0))
            throw ZeroProbabilityError("weak_variant_B: outcome has zero probability");
        const double inv = 1.0 / std::sqrt(n2);
        for (Complex& c : famps) c *= inv;
        out.finals.emplace_back(joint, std::move(famps),
                                std::vector<double>(static_cast<std::size_t>(joint.particles()),
                                                    1.0),
                                1.0, 0.0);
        out.apparatus_purity.push_back(
            schmidt_decompose(out.finals.back(), part, 1e-14).purity());

        // Theta^k = union over h of greedily sized Xi^h inside Omega^h with
        // per-branch target C_k^2 exp(-(a_k-a_h)^2/sigma_k). The Xi^h for
        // different outcomes draw from the same Omega^h pools, which is what
        // breaks consistency for sigma > 0.
        std::vector<char> theta(joint.size(), 0);
        for (std::size_t h = 0; h < K; ++h) {
            const double d = kraus.a[k] - kraus.a[h];
            const double target = kraus.C[k] * kraus.C[k] * std::exp(-d * d / kraus.sigma[k]);
            const auto pick = detail::greedy_subdomain(branch_mass[h], target);
            if (target - pick.achieved > std::max(max_branch_cell, 1e-12) &&
                pick.chosen == pick.pool)
                throw ResolutionError("weak_variant_B: branch mass target unreachable on this grid");
            out.report.greedy_residual += std::abs(pick.achieved - target);
            if (h != k && pick.chosen > 0 && pick.chosen < pick.pool) partial_foreign = true;
            for (std::size_t i = 0; i < theta.size(); ++i) theta[i] |= pick.mask[i];
        }
        out.report.supports.push_back(std::move(theta));
    }
    detail::fill_overlaps_and_verdict(out.initial, out.report);
    if (partial_foreign) out.report.consistent = false;
    return out;
}

struct GeneralizedSEEResult {
    ManyBodyWavefunction initial;              // S + E + E' tripartite state
    std::vector<double> probabilities;         // p_k^w via E' projection
    std::vector<ManyBodyWavefunction> finals;
    std::vector<double> second_apparatus_purity;  // tr rho_{E'}^2 per outcome
    ConsistencyReport report;                  // E'-side supports
};

/// S+E+E' scheme: the first apparatus stays entangled (variant B on E) while
/// the second pointer E' is definite, recovering a consistent readout.
inline GeneralizedSEEResult generalized_SEE(const std::vector<double>& p, const KrausSet& kraus,
                                            const ObservableSpec& obs, const ApparatusSpec& app,
                                            const ApparatusSpec& app2) {
    obs.validate();
    const std::size_t K = p.size();
    if (K != kraus.size() || K != obs.outcomes() || K != app.pointers.size() ||
        K != app2.pointers.size())
        throw SpecError("generalized_SEE: list lengths do not match");
    if (!pointer_supports_disjoint(app2))
        throw ConsistencyError("generalized_SEE: second apparatus supports must be disjoint");

    const std::size_t ns = obs.grid_S.size();
    const std::size_t ne = app.grid_E.size();
    const std::size_t nf = app2.grid_E.size();

    std::vector<Axis> axes;
    for (int j = 0; j < obs.grid_S.rank(); ++j) axes.push_back(obs.grid_S.axis(j));
    for (int j = 0; j < app.grid_E.rank(); ++j) axes.push_back(app.grid_E.axis(j));
    for (int j = 0; j < app2.grid_E.rank(); ++j) axes.push_back(app2.grid_E.axis(j));
    const SpatialGrid joint(axes, static_cast<int>(axes.size()), 1);
    const std::vector<double> masses(axes.size(), 1.0);

    GeneralizedSEEResult out;
    out.probabilities = weak_probabilities(p, kraus);

    std::vector<Complex> amps(joint.size(), Complex{0.0, 0.0});
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t h = 0; h < K; ++h) {
            const double c = kraus.element(k, h) * std::sqrt(p[h]);
            if (c == 0.0) continue;
            for (std::size_t s = 0; s < ns; ++s) {
                const Complex cs = c * obs.eigenfunctions[h][s];
                for (std::size_t e = 0; e < ne; ++e) {
                    const Complex cse = cs * app.pointers[h][e];
                    const std::size_t base = (s * ne + e) * nf;
                    for (std::size_t f = 0; f < nf; ++f)
                        amps[base + f] += cse * app2.pointers[k][f];
                }
            }
        }
    out.initial = ManyBodyWavefunction(joint, std::move(amps), masses, 1.0, 0.0);

    Bipartition se_vs_eprime;
    for (int j = 0; j < obs.grid_S.rank() + app.grid_E.rank(); ++j)
        se_vs_eprime.coords_S.push_back(j);
    for (int j = 0; j < app2.grid_E.rank(); ++j)
        se_vs_eprime.coords_E.push_back(obs.grid_S.rank() + app.grid_E.rank() + j);

    out.report.joint_grid = joint;
    out.report.target_probabilities = out.probabilities;
    const std::size_t nse = ns * ne;
    for (std::size_t k = 0; k < K; ++k) {
        std::vector<Complex> famps(joint.size(), Complex{0.0, 0.0});
        const double inv = 1.0 / std::sqrt(out.probabilities[k]);
        for (std::size_t h = 0; h < K; ++h) {
            const double c = kraus.element(k, h) * std::sqrt(p[h]) * inv;
            if (c == 0.0) continue;
            for (std::size_t s = 0; s < ns; ++s) {
                const Complex cs = c * obs.eigenfunctions[h][s];
                for (std::size_t e = 0; e < ne; ++e) {
                    const Complex cse = cs * app.pointers[h][e];
                    const std::size_t base = (s * ne + e) * nf;
                    for (std::size_t f = 0; f < nf; ++f)
                        famps[base + f] += cse * app2.pointers[k][f];
                }
            }
        }
        out.finals.emplace_back(joint, std::move(famps), masses, 1.0, 0.0);
        out.second_apparatus_purity.push_back(
            schmidt_decompose(out.finals.back(), se_vs_eprime, 1e-14).purity());

        // E'-side support: everything on S+E times the k-th second pointer support.
        std::vector<char> sup(joint.size(), 0);
        const auto mf = app2.pointer_supports[k];
        for (std::size_t se = 0; se < nse; ++se)
            for (std::size_t f = 0; f < nf; ++f)
                if (mf[f]) sup[se * nf + f] = 1;
        out.report.supports.push_back(std::move(sup));
    }
    detail::fill_overlaps_and_verdict(out.initial, out.report);
    return out;
}

} // namespace qmeas
