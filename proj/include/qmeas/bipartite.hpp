#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "qmeas/errors.hpp"
#include "qmeas/wavefunction.hpp"

namespace qmeas {

/// Split of the configuration coordinates into system (S) and environment (E)
/// groups. Both lists hold axis indices of the joint grid.
struct Bipartition {
    std::vector<int> coords_S;
    std::vector<int> coords_E;

    void validate(int rank) const {
        if (coords_S.empty() || coords_E.empty())
            throw SpecError("Bipartition: both coordinate groups must be non-empty");
        std::vector<char> seen(static_cast<std::size_t>(rank), 0);
        for (int c : coords_S) {
            if (c < 0 || c >= rank || seen[static_cast<std::size_t>(c)])
                throw SpecError("Bipartition: invalid or repeated coordinate index");
            seen[static_cast<std::size_t>(c)] = 1;
        }
        for (int c : coords_E) {
            if (c < 0 || c >= rank || seen[static_cast<std::size_t>(c)])
                throw SpecError("Bipartition: invalid or repeated coordinate index");
            seen[static_cast<std::size_t>(c)] = 1;
        }
        for (char s : seen)
            if (!s) throw SpecError("Bipartition: groups must cover all coordinates");
    }
};

inline SpatialGrid subgrid(const SpatialGrid& grid, const std::vector<int>& coords) {
    std::vector<Axis> axes;
    axes.reserve(coords.size());
    for (int c : coords) axes.push_back(grid.axis(c));
    return SpatialGrid(std::move(axes), static_cast<int>(coords.size()), 1);
}

/// Schmidt form psi = sum_k e^{i theta_k} sqrt(p_k) a_k(xi) b_k(sigma).
/// Modes are orthonormal under grid quadrature. Mode phases follow the
/// largest-magnitude-component-real-positive convention; the extracted
/// phases live in theta. Weights below truncation_tol are dropped and the
/// dropped mass is reported, never folded back in.
struct SchmidtDecomposition {
    std::vector<double> p;
    std::vector<double> theta;
    std::vector<std::vector<Complex>> modes_S;
    std::vector<std::vector<Complex>> modes_E;
    SpatialGrid grid_S;
    SpatialGrid grid_E;
    Bipartition part;
    SpatialGrid joint_grid;
    std::vector<double> joint_masses;
    double hbar = 1.0;
    double time = 0.0;
    double truncation_tol = 0.0;
    double discarded_mass = 0.0;

    std::size_t rank() const { return p.size(); }
    double weight_sum() const {
        double s = 0.0;
        for (double w : p) s += w;
        return s;
    }
    /// Purity of either reduced state, sum p_k^2.
    double purity() const {
        double s = 0.0;
        for (double w : p) s += w * w;
        return s;
    }
};

namespace detail {

struct SplitIndexer {
    std::vector<std::size_t> s_of_flat;
    std::vector<std::size_t> e_of_flat;
};

inline SplitIndexer build_split_indexer(const SpatialGrid& grid, const Bipartition& part,
                                        const SpatialGrid& gs, const SpatialGrid& ge) {
    SplitIndexer map;
    map.s_of_flat.resize(grid.size());
    map.e_of_flat.resize(grid.size());
    std::vector<int> idx(static_cast<std::size_t>(grid.rank()), 0);
    std::size_t flat = 0;
    do {
        std::size_t s = 0, e = 0;
        for (std::size_t a = 0; a < part.coords_S.size(); ++a)
            s += static_cast<std::size_t>(idx[static_cast<std::size_t>(part.coords_S[a])]) *
                 static_cast<std::size_t>(gs.stride(static_cast<int>(a)));
        for (std::size_t a = 0; a < part.coords_E.size(); ++a)
            e += static_cast<std::size_t>(idx[static_cast<std::size_t>(part.coords_E[a])]) *
                 static_cast<std::size_t>(ge.stride(static_cast<int>(a)));
        map.s_of_flat[flat] = s;
        map.e_of_flat[flat] = e;
        ++flat;
    } while (grid.next_index(idx));
    return map;
}

inline void pin_mode_phase(Eigen::VectorXcd& mode, double& extracted) {
    Eigen::Index best = 0;
    double best_mag = -1.0;
    for (Eigen::Index i = 0; i < mode.size(); ++i) {
        const double m = std::abs(mode(i));
        if (m > best_mag + 1e-15) {
            best_mag = m;
            best = i;
        }
    }
    const double phase = std::arg(mode(best));
    mode *= std::polar(1.0, -phase);
    extracted = phase;
}

} // namespace detail

/// Quadrature-weighted SVD of the reshaped amplitudes. Scaling by the square
/// root of the cell volumes makes the discrete modes orthonormal under grid
/// quadrature rather than plain dot product.
inline SchmidtDecomposition schmidt_decompose(const ManyBodyWavefunction& psi,
                                              const Bipartition& part, double tol = 1e-12) {
    psi.require_normalized("schmidt_decompose");
    part.validate(psi.grid().rank());

    SchmidtDecomposition out;
    out.part = part;
    out.grid_S = subgrid(psi.grid(), part.coords_S);
    out.grid_E = subgrid(psi.grid(), part.coords_E);
    out.joint_grid = psi.grid();
    out.joint_masses = psi.masses();
    out.hbar = psi.hbar();
    out.time = psi.time();
    out.truncation_tol = tol;

    const double dvs = out.grid_S.cell_volume();
    const double dve = out.grid_E.cell_volume();
    const double amp_scale = std::sqrt(dvs * dve);

    const auto map = detail::build_split_indexer(psi.grid(), part, out.grid_S, out.grid_E);
    Eigen::MatrixXcd M(out.grid_S.size(), out.grid_E.size());
    for (std::size_t flat = 0; flat < psi.grid().size(); ++flat)
        M(static_cast<Eigen::Index>(map.s_of_flat[flat]),
          static_cast<Eigen::Index>(map.e_of_flat[flat])) = psi.amplitudes()[flat] * amp_scale;

    Eigen::BDCSVD<Eigen::MatrixXcd> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();

    const double sv_cut = std::sqrt(std::max(tol, 0.0));
    for (Eigen::Index k = 0; k < sv.size(); ++k) {
        const double pk = sv(k) * sv(k);
        if (sv(k) < sv_cut) {
            out.discarded_mass += pk;
            continue;
        }
        Eigen::VectorXcd u = svd.matrixU().col(k);
        Eigen::VectorXcd w = svd.matrixV().col(k).conjugate();
        double phi_a = 0.0, phi_b = 0.0;
        detail::pin_mode_phase(u, phi_a);
        w *= std::polar(1.0, phi_a);
        detail::pin_mode_phase(w, phi_b);

        out.p.push_back(pk);
        out.theta.push_back(phi_b);
        std::vector<Complex> ms(out.grid_S.size());
        std::vector<Complex> me(out.grid_E.size());
        const double us = 1.0 / std::sqrt(dvs);
        const double ue = 1.0 / std::sqrt(dve);
        for (std::size_t i = 0; i < ms.size(); ++i) ms[i] = u(static_cast<Eigen::Index>(i)) * us;
        for (std::size_t i = 0; i < me.size(); ++i) me[i] = w(static_cast<Eigen::Index>(i)) * ue;
        out.modes_S.push_back(std::move(ms));
        out.modes_E.push_back(std::move(me));
    }
    if (out.p.empty()) throw DegenerateStateError("schmidt_decompose: all weights truncated");
    return out;
}

/// Rebuild the joint state sum_k e^{i theta_k} sqrt(p_k) a_k b_k on the
/// original coordinate ordering.
inline ManyBodyWavefunction reconstruct(const SchmidtDecomposition& sd) {
    if (sd.p.empty()) throw DegenerateStateError("reconstruct: empty decomposition");
    const auto map =
        detail::build_split_indexer(sd.joint_grid, sd.part, sd.grid_S, sd.grid_E);
    std::vector<Complex> amps(sd.joint_grid.size(), Complex{0.0, 0.0});
    for (std::size_t k = 0; k < sd.p.size(); ++k) {
        const Complex c = std::polar(std::sqrt(sd.p[k]), sd.theta[k]);
        for (std::size_t flat = 0; flat < amps.size(); ++flat)
            amps[flat] += c * sd.modes_S[k][map.s_of_flat[flat]] *
                          sd.modes_E[k][map.e_of_flat[flat]];
    }
    return ManyBodyWavefunction(sd.joint_grid, std::move(amps), sd.joint_masses, sd.hbar,
                                sd.time);
}

enum class ExchangeStatistics { boson, fermion };

/// Two identical 1D particles: (psi_S(x1) psi_E(x2) +/- psi_S(x2) psi_E(x1)) / sigma,
/// with sigma fixed by the quadrature norm. Antisymmetrizing identical
/// functions annihilates the state.
inline ManyBodyWavefunction symmetrize_two_particle(const Axis& axis,
                                                    const std::vector<Complex>& psi_S,
                                                    const std::vector<Complex>& psi_E,
                                                    ExchangeStatistics statistics,
                                                    double mass = 1.0, double hbar = 1.0) {
    const auto n = static_cast<std::size_t>(axis.n);
    if (psi_S.size() != n || psi_E.size() != n)
        throw GridMismatchError("symmetrize_two_particle: functions must live on the shared axis");

    const double sign = (statistics == ExchangeStatistics::fermion) ? -1.0 : 1.0;
    SpatialGrid grid({axis, axis}, 2, 1);
    std::vector<Complex> amps(grid.size());
    double norm2 = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const Complex v = psi_S[i] * psi_E[j] + sign * psi_S[j] * psi_E[i];
            amps[i * n + j] = v;
            norm2 += std::norm(v);
        }
    norm2 *= grid.cell_volume();
    if (norm2 < 1e-24)
        throw NullStateError("symmetrize_two_particle: antisymmetrization annihilated the state");
    const double sigma = std::sqrt(norm2);
    for (Complex& a : amps) a /= sigma;
    return ManyBodyWavefunction(grid, std::move(amps), {mass, mass}, hbar, 0.0);
}

} // namespace qmeas
