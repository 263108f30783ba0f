#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <mutex>
#include <numbers>
#include <vector>

#include "qmeas/grid.hpp"
#include "qmeas/wavefunction.hpp"

namespace qmeas {

enum class Boundary { periodic, hard_wall };

namespace detail {

// FFTW's planner is not reentrant; executes on distinct plans are.
inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

} // namespace detail

/// Kinetic-energy propagator in the diagonalizing basis: plane waves for
/// periodic boundaries, sine modes (walls one cell outside the grid ends)
/// for hard walls. Owns FFTW plans; reuse one instance across many steps.
class KineticPropagator {
public:
    KineticPropagator(const SpatialGrid& grid, const std::vector<double>& particle_masses,
                      double hbar, Boundary boundary)
        : grid_(grid), boundary_(boundary), hbar_(hbar) {
        const std::size_t n = grid.size();
        omega_.assign(n, 0.0);

        // omega(i) = sum_j hbar * k_j^2 / (2 m_j): kinetic phase rate per cell.
        std::vector<std::vector<double>> axis_k2(static_cast<std::size_t>(grid.rank()));
        for (int j = 0; j < grid.rank(); ++j) {
            const Axis& ax = grid.axis(j);
            auto& k2 = axis_k2[static_cast<std::size_t>(j)];
            k2.resize(static_cast<std::size_t>(ax.n));
            const double h = ax.spacing();
            for (int m = 0; m < ax.n; ++m) {
                double k = 0.0;
                if (boundary_ == Boundary::periodic) {
                    const int f = (m <= ax.n / 2) ? m : m - ax.n;
                    k = 2.0 * std::numbers::pi * static_cast<double>(f) /
                        (static_cast<double>(ax.n) * h);
                } else {
                    k = std::numbers::pi * static_cast<double>(m + 1) /
                        (static_cast<double>(ax.n + 1) * h);
                }
                k2[static_cast<std::size_t>(m)] = k * k;
            }
        }
        std::vector<int> idx(static_cast<std::size_t>(grid.rank()), 0);
        std::size_t flat = 0;
        do {
            double w = 0.0;
            for (int j = 0; j < grid.rank(); ++j) {
                const double m_j =
                    particle_masses[static_cast<std::size_t>(grid.particle_of(j))];
                w += hbar * axis_k2[static_cast<std::size_t>(j)]
                            [static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])] /
                     (2.0 * m_j);
            }
            omega_[flat++] = w;
        } while (grid.next_index(idx));

        std::vector<int> dims(static_cast<std::size_t>(grid.rank()));
        for (int j = 0; j < grid.rank(); ++j) dims[static_cast<std::size_t>(j)] = grid.axis(j).n;

        std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
        if (boundary_ == Boundary::periodic) {
            cbuf_ = fftw_alloc_complex(n);
            fwd_ = fftw_plan_dft(grid.rank(), dims.data(), cbuf_, cbuf_, FFTW_FORWARD,
                                 FFTW_ESTIMATE);
            bwd_ = fftw_plan_dft(grid.rank(), dims.data(), cbuf_, cbuf_, FFTW_BACKWARD,
                                 FFTW_ESTIMATE);
            scale_ = 1.0 / static_cast<double>(n);
        } else {
            rbuf_ = fftw_alloc_real(n);
            std::vector<fftw_r2r_kind> kinds(static_cast<std::size_t>(grid.rank()),
                                             FFTW_RODFT00);
            dst_ = fftw_plan_r2r(grid.rank(), dims.data(), rbuf_, rbuf_, kinds.data(),
                                 FFTW_ESTIMATE);
            scale_ = 1.0;
            for (int j = 0; j < grid.rank(); ++j)
                scale_ /= 2.0 * static_cast<double>(grid.axis(j).n + 1);
        }
    }

    ~KineticPropagator() {
        std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
        if (fwd_) fftw_destroy_plan(fwd_);
        if (bwd_) fftw_destroy_plan(bwd_);
        if (dst_) fftw_destroy_plan(dst_);
        if (cbuf_) fftw_free(cbuf_);
        if (rbuf_) fftw_free(rbuf_);
    }

    KineticPropagator(const KineticPropagator&) = delete;
    KineticPropagator& operator=(const KineticPropagator&) = delete;

    /// amps <- exp(-i T dt / hbar) amps.
    void apply(std::vector<Complex>& amps, double dt) {
        refresh_phase(dt);
        if (boundary_ == Boundary::periodic) {
            auto* c = reinterpret_cast<Complex*>(cbuf_);
            std::copy(amps.begin(), amps.end(), c);
            fftw_execute(fwd_);
            for (std::size_t i = 0; i < amps.size(); ++i) c[i] *= phase_[i];
            fftw_execute(bwd_);
            for (std::size_t i = 0; i < amps.size(); ++i) amps[i] = c[i] * scale_;
        } else {
            // DST-I applied to real and imaginary parts separately.
            spectrum_.resize(amps.size());
            for (int part = 0; part < 2; ++part) {
                for (std::size_t i = 0; i < amps.size(); ++i)
                    rbuf_[i] = (part == 0) ? amps[i].real() : amps[i].imag();
                fftw_execute(dst_);
                for (std::size_t i = 0; i < amps.size(); ++i)
                    spectrum_[i] = (part == 0) ? Complex(rbuf_[i], 0.0)
                                               : spectrum_[i] + Complex(0.0, rbuf_[i]);
            }
            for (std::size_t i = 0; i < amps.size(); ++i) spectrum_[i] *= phase_[i];
            for (int part = 0; part < 2; ++part) {
                for (std::size_t i = 0; i < amps.size(); ++i)
                    rbuf_[i] = (part == 0) ? spectrum_[i].real() : spectrum_[i].imag();
                fftw_execute(dst_);
                for (std::size_t i = 0; i < amps.size(); ++i) {
                    const double v = rbuf_[i] * scale_;
                    if (part == 0)
                        amps[i] = Complex(v, 0.0);
                    else
                        amps[i] += Complex(0.0, v);
                }
            }
        }
    }

    /// <T> under grid quadrature, via the same transform as apply().
    double kinetic_energy(const std::vector<Complex>& amps) {
        double num = 0.0;
        double den = 0.0;
        if (boundary_ == Boundary::periodic) {
            auto* c = reinterpret_cast<Complex*>(cbuf_);
            std::copy(amps.begin(), amps.end(), c);
            fftw_execute(fwd_);
            for (std::size_t i = 0; i < amps.size(); ++i) {
                const double w = std::norm(c[i]);
                num += w * hbar_ * omega_[i];
                den += w;
            }
        } else {
            spectrum_.resize(amps.size());
            for (int part = 0; part < 2; ++part) {
                for (std::size_t i = 0; i < amps.size(); ++i)
                    rbuf_[i] = (part == 0) ? amps[i].real() : amps[i].imag();
                fftw_execute(dst_);
                for (std::size_t i = 0; i < amps.size(); ++i)
                    spectrum_[i] = (part == 0) ? Complex(rbuf_[i], 0.0)
                                               : spectrum_[i] + Complex(0.0, rbuf_[i]);
            }
            for (std::size_t i = 0; i < amps.size(); ++i) {
                const double w = std::norm(spectrum_[i]);
                num += w * hbar_ * omega_[i];
                den += w;
            }
        }
        return (den > 0.0) ? num / den : 0.0;
    }

    Boundary boundary() const { return boundary_; }

private:
    void refresh_phase(double dt) {
        if (phase_.size() == omega_.size() && dt == phase_dt_) return;
        phase_.resize(omega_.size());
        for (std::size_t i = 0; i < omega_.size(); ++i)
            phase_[i] = std::polar(1.0, -omega_[i] * dt);
        phase_dt_ = dt;
    }

    SpatialGrid grid_;
    Boundary boundary_;
    double hbar_;
    std::vector<double> omega_;
    std::vector<Complex> phase_;
    std::vector<Complex> spectrum_;
    double phase_dt_ = std::numeric_limits<double>::quiet_NaN();
    double scale_ = 1.0;
    fftw_complex* cbuf_ = nullptr;
    double* rbuf_ = nullptr;
    fftw_plan fwd_ = nullptr;
    fftw_plan bwd_ = nullptr;
    fftw_plan dst_ = nullptr;
};

} // namespace qmeas
