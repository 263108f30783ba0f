#pragma once

// Test-only reference computations, kept independent of the library paths
// they are used to check.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <vector>

#include "qmeas/rng.hpp"
#include "qmeas/wavefunction.hpp"

namespace oracles {

using qmeas::Complex;

/// Width of a free Gaussian packet after time t (position std dev).
inline double free_gaussian_width(double sigma0, double t, double mass, double hbar) {
    const double r = hbar * t / (2.0 * mass * sigma0 * sigma0);
    return sigma0 * std::sqrt(1.0 + r * r);
}

/// Trajectory scaling of the free packet: x(t) = x0 * width(t)/width(0).
inline double free_gaussian_trajectory(double x0, double sigma0, double t, double mass,
                                       double hbar) {
    return x0 * free_gaussian_width(sigma0, t, mass, hbar) / sigma0;
}

/// Second moment of |psi|^2 about its mean.
inline double measured_width(const qmeas::ManyBodyWavefunction& psi) {
    const auto& grid = psi.grid();
    double mean = 0.0, norm = 0.0;
    for (int i = 0; i < grid.axis(0).n; ++i) {
        const double w = std::norm(psi.amplitudes()[static_cast<std::size_t>(i)]);
        mean += w * grid.axis(0).coord(i);
        norm += w;
    }
    mean /= norm;
    double var = 0.0;
    for (int i = 0; i < grid.axis(0).n; ++i) {
        const double d = grid.axis(0).coord(i) - mean;
        var += std::norm(psi.amplitudes()[static_cast<std::size_t>(i)]) * d * d;
    }
    return std::sqrt(var / norm);
}

inline double measured_center(const qmeas::ManyBodyWavefunction& psi) {
    const auto& grid = psi.grid();
    double mean = 0.0, norm = 0.0;
    for (int i = 0; i < grid.axis(0).n; ++i) {
        const double w = std::norm(psi.amplitudes()[static_cast<std::size_t>(i)]);
        mean += w * grid.axis(0).coord(i);
        norm += w;
    }
    return mean / norm;
}

/// Dense Hermitian matrix in row-major storage.
struct HermitianMatrix {
    std::size_t n = 0;
    std::vector<Complex> a;

    Complex& at(std::size_t i, std::size_t j) { return a[i * n + j]; }
    const Complex& at(std::size_t i, std::size_t j) const { return a[i * n + j]; }
};

/// Reduced density matrix of the S side by direct partial trace:
/// rho[s][s'] = sum_e psi(s,e) conj(psi(s',e)) dVE * dVS.
/// Assumes the state is stored S-major (as the measurement module builds).
inline HermitianMatrix partial_trace_S(const std::vector<Complex>& amps, std::size_t ns,
                                       std::size_t ne, double dvs, double dve) {
    HermitianMatrix rho;
    rho.n = ns;
    rho.a.assign(ns * ns, Complex{0.0, 0.0});
    for (std::size_t s = 0; s < ns; ++s)
        for (std::size_t t = 0; t <= s; ++t) {
            Complex acc{0.0, 0.0};
            for (std::size_t e = 0; e < ne; ++e)
                acc += amps[s * ne + e] * std::conj(amps[t * ne + e]);
            acc *= dve * dvs;
            rho.at(s, t) = acc;
            rho.at(t, s) = std::conj(acc);
        }
    return rho;
}

/// Reduced density matrix of the E side.
inline HermitianMatrix partial_trace_E(const std::vector<Complex>& amps, std::size_t ns,
                                       std::size_t ne, double dvs, double dve) {
    HermitianMatrix rho;
    rho.n = ne;
    rho.a.assign(ne * ne, Complex{0.0, 0.0});
    for (std::size_t e = 0; e < ne; ++e)
        for (std::size_t f = 0; f <= e; ++f) {
            Complex acc{0.0, 0.0};
            for (std::size_t s = 0; s < ns; ++s)
                acc += amps[s * ne + e] * std::conj(amps[s * ne + f]);
            acc *= dvs * dve;
            rho.at(e, f) = acc;
            rho.at(f, e) = std::conj(acc);
        }
    return rho;
}

inline double trace_of_square(const HermitianMatrix& rho) {
    double acc = 0.0;
    for (std::size_t i = 0; i < rho.n; ++i)
        for (std::size_t j = 0; j < rho.n; ++j) acc += std::norm(rho.at(i, j));
    return acc;
}

/// Eigenvalues of a Hermitian matrix by cyclic Jacobi rotations, descending.
inline std::vector<double> jacobi_eigenvalues(HermitianMatrix m, double tol = 1e-14,
                                              int max_sweeps = 60) {
    const std::size_t n = m.n;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += std::norm(m.at(p, q));
        if (std::sqrt(off) < tol) break;

        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                const Complex apq = m.at(p, q);
                const double b = std::abs(apq);
                if (b < 1e-300) continue;
                const Complex phase = apq / b;
                const double app = m.at(p, p).real();
                const double aqq = m.at(q, q).real();
                const double tau = (aqq - app) / (2.0 * b);
                const double sgn = tau >= 0.0 ? 1.0 : -1.0;
                const double t = sgn / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;

                // Basis change |p'> = c|p> - s conj(phase)|q>,
                //              |q'> = s phase|p> + c|q>.
                for (std::size_t i = 0; i < n; ++i) {
                    if (i == p || i == q) continue;
                    const Complex aip = m.at(i, p);
                    const Complex aiq = m.at(i, q);
                    m.at(i, p) = c * aip - s * std::conj(phase) * aiq;
                    m.at(i, q) = s * phase * aip + c * aiq;
                    m.at(p, i) = std::conj(m.at(i, p));
                    m.at(q, i) = std::conj(m.at(i, q));
                }
                const double new_pp = c * c * app + s * s * aqq - 2.0 * c * s * b;
                const double new_qq = s * s * app + c * c * aqq + 2.0 * c * s * b;
                m.at(p, p) = Complex{new_pp, 0.0};
                m.at(q, q) = Complex{new_qq, 0.0};
                m.at(p, q) = Complex{0.0, 0.0};
                m.at(q, p) = Complex{0.0, 0.0};
            }
    }
    std::vector<double> eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = m.at(i, i).real();
    std::sort(eig.begin(), eig.end(), std::greater<double>());
    return eig;
}

/// Seeded random normalized state on a grid.
inline qmeas::ManyBodyWavefunction random_state(const qmeas::SpatialGrid& grid,
                                                std::uint64_t seed,
                                                std::vector<double> masses = {}) {
    qmeas::Rng rng(seed);
    std::vector<Complex> amps(grid.size());
    for (Complex& c : amps)
        c = Complex{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    if (masses.empty()) masses.assign(static_cast<std::size_t>(grid.particles()), 1.0);
    qmeas::ManyBodyWavefunction psi(grid, std::move(amps), std::move(masses));
    psi.normalize();
    return psi;
}

/// Smooth random low-momentum state: random coefficients over a few
/// harmonic-oscillator modes per axis.
inline qmeas::ManyBodyWavefunction random_smooth_state(const qmeas::SpatialGrid& grid,
                                                       std::uint64_t seed, int n_modes = 4);

} // namespace oracles

#include "qmeas/presets.hpp"

namespace oracles {

inline qmeas::ManyBodyWavefunction random_smooth_state(const qmeas::SpatialGrid& grid,
                                                       std::uint64_t seed, int n_modes) {
    qmeas::Rng rng(seed);
    std::vector<Complex> amps(grid.size(), Complex{0.0, 0.0});
    std::vector<std::vector<std::vector<Complex>>> basis(
        static_cast<std::size_t>(grid.rank()));
    for (int j = 0; j < grid.rank(); ++j)
        for (int n = 0; n < n_modes; ++n)
            basis[static_cast<std::size_t>(j)].push_back(
                qmeas::presets::harmonic_eigenstate(grid.axis(j), n, 1.0, 1.0, 1.0));

    std::vector<int> mode(static_cast<std::size_t>(grid.rank()), 0);
    while (true) {
        const Complex coeff{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        std::vector<int> idx(static_cast<std::size_t>(grid.rank()), 0);
        std::size_t flat = 0;
        do {
            Complex v = coeff;
            for (int j = 0; j < grid.rank(); ++j)
                v *= basis[static_cast<std::size_t>(j)]
                          [static_cast<std::size_t>(mode[static_cast<std::size_t>(j)])]
                          [static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])];
            amps[flat++] += v;
        } while (grid.next_index(idx));
        int j = grid.rank() - 1;
        for (; j >= 0; --j) {
            if (++mode[static_cast<std::size_t>(j)] < n_modes) break;
            mode[static_cast<std::size_t>(j)] = 0;
        }
        if (j < 0) break;
    }
    std::vector<double> masses(static_cast<std::size_t>(grid.particles()), 1.0);
    qmeas::ManyBodyWavefunction psi(grid, std::move(amps), std::move(masses));
    psi.normalize();
    return psi;
}

} // namespace oracles
