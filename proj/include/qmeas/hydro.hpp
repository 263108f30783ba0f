#pragma once

#include <cmath>
#include <vector>

#include "qmeas/errors.hpp"
#include "qmeas/polar.hpp"
#include "qmeas/wavefunction.hpp"

namespace qmeas {

/// Per-coordinate velocity v^j = (grad_j S) / m_j on the grid.
/// Invalid at node cells and one-cell buffers around them.
struct VelocityField {
    SpatialGrid grid;
    std::vector<std::vector<double>> v; // [axis][cell]
    std::vector<char> valid_mask;
    double time = 0.0;
};

/// Probability current J^j = (hbar/m_j) Im(psi* grad_j psi).
struct CurrentField {
    SpatialGrid grid;
    std::vector<std::vector<double>> J; // [axis][cell]
    double time = 0.0;
};

namespace detail {

/// Central difference of a scalar grid field along one axis; 3-point
/// one-sided at grid edges with a 2-point fallback when the wide stencil
/// leaves the ok-region. Returns false where no stencil is available.
inline bool differentiate_at(const SpatialGrid& grid, const std::vector<double>& f,
                             const std::vector<char>& ok, std::size_t flat, int axis, int pos,
                             double& out) {
    const double h = grid.axis(axis).spacing();
    const int n = grid.axis(axis).n;
    const auto stride = static_cast<std::ptrdiff_t>(grid.stride(axis));
    const auto at = [&](int offset) { return flat + static_cast<std::size_t>(offset * stride); };

    if (pos > 0 && pos + 1 < n && ok[at(-1)] && ok[at(1)]) {
        out = (f[at(1)] - f[at(-1)]) / (2.0 * h);
        return true;
    }
    if (pos == 0 && ok[at(1)]) {
        if (pos + 2 < n && ok[at(2)])
            out = (-3.0 * f[flat] + 4.0 * f[at(1)] - f[at(2)]) / (2.0 * h);
        else
            out = (f[at(1)] - f[flat]) / h;
        return true;
    }
    if (pos == n - 1 && ok[at(-1)]) {
        if (pos - 2 >= 0 && ok[at(-2)])
            out = (3.0 * f[flat] - 4.0 * f[at(-1)] + f[at(-2)]) / (2.0 * h);
        else
            out = (f[flat] - f[at(-1)]) / h;
        return true;
    }
    return false;
}

} // namespace detail

/// v^j = (grad_j S)/m_j from unwrapped polar fields. valid_mask excludes the
/// node mask dilated by one cell.
inline VelocityField velocity_field(const PolarFields& polar, const std::vector<double>& masses,
                                    double hbar) {
    (void)hbar; // S already carries the action scale
    const SpatialGrid& grid = polar.grid;
    VelocityField out;
    out.grid = grid;
    out.time = polar.time;
    out.v.assign(static_cast<std::size_t>(grid.rank()),
                 std::vector<double>(grid.size(), 0.0));

    const std::vector<char> buffered = dilate_mask(grid, polar.node_mask);
    out.valid_mask.resize(grid.size());
    std::vector<char> non_node(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        out.valid_mask[i] = !buffered[i];
        non_node[i] = !polar.node_mask[i];
    }

    std::vector<int> idx(static_cast<std::size_t>(grid.rank()), 0);
    std::size_t flat = 0;
    bool any_valid = false;
    do {
        if (out.valid_mask[flat]) {
            bool all_axes = true;
            for (int j = 0; j < grid.rank(); ++j) {
                double d = 0.0;
                if (detail::differentiate_at(grid, polar.S, non_node, flat, j,
                                             idx[static_cast<std::size_t>(j)], d)) {
                    const double m = masses[static_cast<std::size_t>(grid.particle_of(j))];
                    out.v[static_cast<std::size_t>(j)][flat] = d / m;
                } else {
                    all_axes = false;
                }
            }
            if (all_axes)
                any_valid = true;
            else
                out.valid_mask[flat] = 0;
        }
        ++flat;
    } while (grid.next_index(idx));

    if (!any_valid) throw DegenerateStateError("velocity_field: no valid points");
    return out;
}

inline VelocityField velocity_field(const ManyBodyWavefunction& psi,
                                    double node_threshold = 1e-7) {
    return velocity_field(polar_decompose(psi, node_threshold), psi.masses(), psi.hbar());
}

/// J^j = (hbar/m_j) Im(psi* grad_j psi) by the same difference stencils.
inline CurrentField current_density(const ManyBodyWavefunction& psi) {
    const SpatialGrid& grid = psi.grid();
    CurrentField out;
    out.grid = grid;
    out.time = psi.time();
    out.J.assign(static_cast<std::size_t>(grid.rank()),
                 std::vector<double>(grid.size(), 0.0));

    const std::vector<char> ok(grid.size(), 1);
    std::vector<double> re(grid.size()), im(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        re[i] = psi.amplitudes()[i].real();
        im[i] = psi.amplitudes()[i].imag();
    }

    std::vector<int> idx(static_cast<std::size_t>(grid.rank()), 0);
    std::size_t flat = 0;
    do {
        for (int j = 0; j < grid.rank(); ++j) {
            double dre = 0.0, dim = 0.0;
            const int pos = idx[static_cast<std::size_t>(j)];
            detail::differentiate_at(grid, re, ok, flat, j, pos, dre);
            detail::differentiate_at(grid, im, ok, flat, j, pos, dim);
            // Im(conj(psi) * dpsi) = re*dim - im*dre
            const double m = psi.mass_of_axis(j);
            out.J[static_cast<std::size_t>(j)][flat] =
                psi.hbar() / m * (re[flat] * dim - im[flat] * dre);
        }
        ++flat;
    } while (grid.next_index(idx));
    return out;
}

/// Max over valid points and axes of |J - R^2 v| relative to the global
/// current scale max|J| per axis.
inline double current_velocity_discrepancy(const ManyBodyWavefunction& psi,
                                           double node_threshold = 1e-7) {
    const PolarFields polar = polar_decompose(psi, node_threshold);
    const VelocityField vf = velocity_field(polar, psi.masses(), psi.hbar());
    const CurrentField jf = current_density(psi);

    double worst = 0.0;
    for (int j = 0; j < psi.grid().rank(); ++j) {
        const auto& J = jf.J[static_cast<std::size_t>(j)];
        const auto& v = vf.v[static_cast<std::size_t>(j)];
        double scale = 0.0;
        for (std::size_t i = 0; i < J.size(); ++i)
            if (vf.valid_mask[i]) scale = std::max(scale, std::abs(J[i]));
        if (scale == 0.0) continue;
        for (std::size_t i = 0; i < J.size(); ++i) {
            if (!vf.valid_mask[i]) continue;
            const double r2v = polar.R[i] * polar.R[i] * v[i];
            worst = std::max(worst, std::abs(J[i] - r2v) / scale);
        }
    }
    return worst;
}

/// Residual of d/dt R^2 + div J over three consecutive snapshots, central in
/// both time and space, normalized by max(R^2)/dt.
inline double continuity_residual(const ManyBodyWavefunction& prev,
                                  const ManyBodyWavefunction& mid,
                                  const ManyBodyWavefunction& next, double dt,
                                  double node_threshold = 1e-7) {
    require_same_grid(prev.grid(), mid.grid(), "continuity_residual");
    require_same_grid(mid.grid(), next.grid(), "continuity_residual");
    const double t01 = mid.time() - prev.time();
    const double t12 = next.time() - mid.time();
    if (std::abs(t01 - dt) > 1e-9 * std::max(1.0, std::abs(dt)) ||
        std::abs(t12 - dt) > 1e-9 * std::max(1.0, std::abs(dt)))
        throw TimeGridError("continuity_residual: snapshots not uniformly spaced by dt");

    const SpatialGrid& grid = mid.grid();
    const PolarFields polar = polar_decompose(mid, node_threshold);
    const CurrentField jf = current_density(mid);
    const std::vector<char> buffered = dilate_mask(grid, polar.node_mask);

    double r2_max = 0.0;
    for (double r : polar.R) r2_max = std::max(r2_max, r * r);

    double worst = 0.0;
    std::vector<int> idx(static_cast<std::size_t>(grid.rank()), 0);
    std::size_t flat = 0;
    do {
        bool interior = !buffered[flat];
        for (int j = 0; j < grid.rank() && interior; ++j) {
            const int pos = idx[static_cast<std::size_t>(j)];
            if (pos == 0 || pos == grid.axis(j).n - 1) interior = false;
        }
        if (interior) {
            const double dr2_dt =
                (std::norm(next.amplitudes()[flat]) - std::norm(prev.amplitudes()[flat])) /
                (2.0 * dt);
            double div = 0.0;
            for (int j = 0; j < grid.rank(); ++j) {
                const auto stride = static_cast<std::size_t>(grid.stride(j));
                const double h = grid.axis(j).spacing();
                div += (jf.J[static_cast<std::size_t>(j)][flat + stride] -
                        jf.J[static_cast<std::size_t>(j)][flat - stride]) /
                       (2.0 * h);
            }
            worst = std::max(worst, std::abs(dr2_dt + div));
        }
        ++flat;
    } while (grid.next_index(idx));

    return worst * dt / r2_max;
}

} // namespace qmeas
