#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <vector>

#include "qmeas/errors.hpp"
#include "qmeas/wavefunction.hpp"

namespace qmeas {

/// Hydrodynamic (Madelung) fields: psi = R * exp(i S / hbar).
/// S is unwrapped per connected non-node component and undefined on nodes.
struct PolarFields {
    SpatialGrid grid;
    std::vector<double> R;
    std::vector<double> S;
    std::vector<char> node_mask; // true where R <= threshold * max(R)
    double hbar = 1.0;
    double time = 0.0;
};

/// Thresholded discrete support: mask true where R^2 > eps * max(R^2).
/// The complement is the discrete Z_t.
struct SupportMask {
    SpatialGrid grid;
    std::vector<char> mask;
    double eps = 0.0;

    std::size_t count() const {
        std::size_t c = 0;
        for (char m : mask) c += (m != 0);
        return c;
    }
    double measure() const { return static_cast<double>(count()) * grid.cell_volume(); }
};

namespace detail {

/// Unwrap ħ·arg(psi) by breadth-first flood over non-node cells so S is
/// continuous within each connected component (axis-neighbor connectivity).
inline void unwrap_phase(const SpatialGrid& grid, const std::vector<Complex>& amps,
                         const std::vector<char>& node_mask, double hbar,
                         std::vector<double>& S) {
    const std::size_t n = grid.size();
    const double two_pi_hbar = 2.0 * std::numbers::pi * hbar;
    std::vector<char> visited(n, 0);
    std::vector<int> idx;
    std::deque<std::size_t> queue;

    for (std::size_t seed = 0; seed < n; ++seed) {
        if (node_mask[seed] || visited[seed]) continue;
        S[seed] = hbar * std::arg(amps[seed]);
        visited[seed] = 1;
        queue.clear();
        queue.push_back(seed);
        while (!queue.empty()) {
            const std::size_t cur = queue.front();
            queue.pop_front();
            idx = grid.multi_index(cur);
            for (int j = 0; j < grid.rank(); ++j) {
                const int nj = grid.axis(j).n;
                for (int step : {-1, 1}) {
                    const int v = idx[static_cast<std::size_t>(j)] + step;
                    if (v < 0 || v >= nj) continue;
                    const std::size_t nb =
                        cur + static_cast<std::size_t>(step * grid.stride(j));
                    if (node_mask[nb] || visited[nb]) continue;
                    const double raw = hbar * std::arg(amps[nb]);
                    const double k = std::round((S[cur] - raw) / two_pi_hbar);
                    S[nb] = raw + k * two_pi_hbar;
                    visited[nb] = 1;
                    queue.push_back(nb);
                }
            }
        }
    }
}

} // namespace detail

/// Split psi into amplitude R and unwrapped phase-action S.
/// node_threshold is relative to max(R); S is left at 0 on node cells.
inline PolarFields polar_decompose(const ManyBodyWavefunction& psi, double node_threshold = 1e-7) {
    psi.require_normalized("polar_decompose");
    if (!(node_threshold > 0.0 && node_threshold < 1.0))
        throw SpecError("polar_decompose: node_threshold must lie in (0,1)");

    const std::size_t n = psi.grid().size();
    PolarFields out;
    out.grid = psi.grid();
    out.hbar = psi.hbar();
    out.time = psi.time();
    out.R.resize(n);
    out.S.assign(n, 0.0);
    out.node_mask.assign(n, 0);

    double r_max = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out.R[i] = std::abs(psi.amplitudes()[i]);
        r_max = std::max(r_max, out.R[i]);
    }
    if (r_max == 0.0) throw DegenerateStateError("polar_decompose: all amplitudes vanish");

    const double cut = node_threshold * r_max;
    for (std::size_t i = 0; i < n; ++i) out.node_mask[i] = (out.R[i] <= cut);

    detail::unwrap_phase(psi.grid(), psi.amplitudes(), out.node_mask, psi.hbar(), out.S);
    return out;
}

/// Discrete D_t: cells where R^2 exceeds eps * max(R^2).
inline SupportMask compute_support(const PolarFields& polar, double eps) {
    if (!(eps >= 0.0 && eps < 1.0)) throw SpecError("compute_support: eps must lie in [0,1)");
    SupportMask out;
    out.grid = polar.grid;
    out.eps = eps;
    out.mask.resize(polar.R.size());
    double r2_max = 0.0;
    for (double r : polar.R) r2_max = std::max(r2_max, r * r);
    const double cut = eps * r2_max;
    for (std::size_t i = 0; i < polar.R.size(); ++i)
        out.mask[i] = (polar.R[i] * polar.R[i] > cut);
    return out;
}

inline SupportMask compute_support(const ManyBodyWavefunction& psi, double eps) {
    return compute_support(polar_decompose(psi), eps);
}

/// Mask dilated by one cell along every axis (used to buffer node regions).
inline std::vector<char> dilate_mask(const SpatialGrid& grid, const std::vector<char>& mask) {
    std::vector<char> out = mask;
    std::vector<int> idx(static_cast<std::size_t>(grid.rank()), 0);
    std::size_t flat = 0;
    do {
        if (!mask[flat]) {
            ++flat;
            continue;
        }
        for (int j = 0; j < grid.rank(); ++j) {
            const int v = idx[static_cast<std::size_t>(j)];
            if (v > 0) out[flat - static_cast<std::size_t>(grid.stride(j))] = 1;
            if (v + 1 < grid.axis(j).n) out[flat + static_cast<std::size_t>(grid.stride(j))] = 1;
        }
        ++flat;
    } while (grid.next_index(idx));
    return out;
}

/// Number of connected components of a mask under axis-neighbor adjacency.
inline int count_components(const SpatialGrid& grid, const std::vector<char>& mask) {
    std::vector<char> visited(mask.size(), 0);
    std::deque<std::size_t> queue;
    int components = 0;
    for (std::size_t seed = 0; seed < mask.size(); ++seed) {
        if (!mask[seed] || visited[seed]) continue;
        ++components;
        visited[seed] = 1;
        queue.clear();
        queue.push_back(seed);
        while (!queue.empty()) {
            const std::size_t cur = queue.front();
            queue.pop_front();
            const auto idx = grid.multi_index(cur);
            for (int j = 0; j < grid.rank(); ++j) {
                for (int step : {-1, 1}) {
                    const int v = idx[static_cast<std::size_t>(j)] + step;
                    if (v < 0 || v >= grid.axis(j).n) continue;
                    const std::size_t nb = cur + static_cast<std::size_t>(step * grid.stride(j));
                    if (!mask[nb] || visited[nb]) continue;
                    visited[nb] = 1;
                    queue.push_back(nb);
                }
            }
        }
    }
    return components;
}

} // namespace qmeas
