#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "qmeas/errors.hpp"
#include "qmeas/tdse.hpp"
#include "qmeas/wavefunction.hpp"

namespace qmeas {
namespace presets {

/// Gaussian packet with position standard deviation sigma and carrier k:
/// (2 pi sigma^2)^(-1/4) exp(-(x-x0)^2/(4 sigma^2) + i k x).
inline std::vector<Complex> gaussian(const Axis& axis, double x0, double sigma, double k) {
    if (!(sigma > 0.0)) throw SpecError("gaussian preset: sigma must be positive");
    std::vector<Complex> f(static_cast<std::size_t>(axis.n));
    const double norm = std::pow(2.0 * std::numbers::pi * sigma * sigma, -0.25);
    for (int i = 0; i < axis.n; ++i) {
        const double x = axis.coord(i);
        const double d = x - x0;
        f[static_cast<std::size_t>(i)] =
            norm * std::exp(-d * d / (4.0 * sigma * sigma)) * std::polar(1.0, k * x);
    }
    return f;
}

/// Harmonic-oscillator eigenstate n for mass m and frequency omega.
inline std::vector<Complex> harmonic_eigenstate(const Axis& axis, int n, double mass,
                                                double omega, double hbar, double x0 = 0.0) {
    if (n < 0) throw SpecError("harmonic_eigenstate: n must be >= 0");
    const double a = std::sqrt(mass * omega / hbar);
    double log_norm = 0.25 * std::log(mass * omega / (std::numbers::pi * hbar));
    for (int j = 1; j <= n; ++j) log_norm -= 0.5 * std::log(2.0 * static_cast<double>(j));
    const double norm = std::exp(log_norm);

    std::vector<Complex> f(static_cast<std::size_t>(axis.n));
    for (int i = 0; i < axis.n; ++i) {
        const double xi = a * (axis.coord(i) - x0);
        double h_prev = 1.0, h_cur = 1.0;
        if (n >= 1) h_cur = 2.0 * xi;
        for (int j = 2; j <= n; ++j) {
            const double h_next = 2.0 * xi * h_cur - 2.0 * static_cast<double>(j - 1) * h_prev;
            h_prev = h_cur;
            h_cur = h_next;
        }
        f[static_cast<std::size_t>(i)] = norm * h_cur * std::exp(-0.5 * xi * xi);
    }
    return f;
}

/// Plane wave e^{ikx}/sqrt(L) on the periodic wrap length n*dx. k should be
/// a multiple of 2 pi / (n dx) to be a discrete momentum eigenstate.
inline std::vector<Complex> plane_wave(const Axis& axis, double k) {
    std::vector<Complex> f(static_cast<std::size_t>(axis.n));
    const double len = static_cast<double>(axis.n) * axis.spacing();
    const double amp = 1.0 / std::sqrt(len);
    for (int i = 0; i < axis.n; ++i)
        f[static_cast<std::size_t>(i)] = amp * std::polar(1.0, k * axis.coord(i));
    return f;
}

/// Allowed plane-wave momentum nearest to k_requested.
inline double commensurate_k(const Axis& axis, double k_requested) {
    const double dk = 2.0 * std::numbers::pi / (static_cast<double>(axis.n) * axis.spacing());
    return dk * std::round(k_requested / dk);
}

/// Tensor product of per-axis single-coordinate functions, normalized.
inline ManyBodyWavefunction product_state(const SpatialGrid& grid,
                                          const std::vector<std::vector<Complex>>& factors,
                                          std::vector<double> masses, double hbar = 1.0) {
    if (static_cast<int>(factors.size()) != grid.rank())
        throw SpecError("product_state: need one factor per coordinate");
    for (int j = 0; j < grid.rank(); ++j)
        if (static_cast<int>(factors[static_cast<std::size_t>(j)].size()) != grid.axis(j).n)
            throw GridMismatchError("product_state: factor length mismatch");

    std::vector<Complex> amps(grid.size());
    std::vector<int> idx(static_cast<std::size_t>(grid.rank()), 0);
    std::size_t flat = 0;
    do {
        Complex v{1.0, 0.0};
        for (int j = 0; j < grid.rank(); ++j)
            v *= factors[static_cast<std::size_t>(j)]
                        [static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])];
        amps[flat++] = v;
    } while (grid.next_index(idx));

    ManyBodyWavefunction psi(grid, std::move(amps), std::move(masses), hbar, 0.0);
    psi.normalize();
    return psi;
}

// Potential presets. All return samplable closures of (x, t).

inline PotentialFn free_potential() { return nullptr; }

inline PotentialFn harmonic_potential(const std::vector<double>& masses, double omega, int dim) {
    return [masses, omega, dim](const std::vector<double>& x, double) {
        double v = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double m = masses[j / static_cast<std::size_t>(dim)];
            v += 0.5 * m * omega * omega * x[j] * x[j];
        }
        return v;
    };
}

/// V(x) = a x^4 - b x^2 summed per coordinate (minima at +-sqrt(b/2a)).
inline PotentialFn double_well_potential(double a, double b) {
    return [a, b](const std::vector<double>& x, double) {
        double v = 0.0;
        for (double xi : x) v += a * xi * xi * xi * xi - b * xi * xi;
        return v;
    };
}

inline PotentialFn barrier_potential(double height, double width, double center) {
    return [height, width, center](const std::vector<double>& x, double) {
        double v = 0.0;
        for (double xi : x)
            if (std::abs(xi - center) <= 0.5 * width) v += height;
        return v;
    };
}

} // namespace presets

using presets::commensurate_k;

} // namespace qmeas
