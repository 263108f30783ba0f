#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "qmeas/errors.hpp"
#include "qmeas/grid.hpp"

namespace qmeas {

using Complex = std::complex<double>;

constexpr double kNormTolerance = 1e-9;

/// Discrete many-body wavefunction psi(x, t) on a tensor-product grid.
/// Amplitudes are stored row-major over the grid axes; the L2 norm under
/// grid quadrature (sum |psi|^2 * cell volume) is 1 for physical states.
class ManyBodyWavefunction {
public:
    ManyBodyWavefunction() = default;

    ManyBodyWavefunction(SpatialGrid grid, std::vector<Complex> amplitudes,
                         std::vector<double> masses, double hbar = 1.0, double time = 0.0)
        : grid_(std::move(grid)),
          amplitudes_(std::move(amplitudes)),
          masses_(std::move(masses)),
          hbar_(hbar),
          time_(time) {
        if (amplitudes_.size() != grid_.size())
            throw SpecError("ManyBodyWavefunction: amplitude count does not match grid");
        if (static_cast<int>(masses_.size()) != grid_.particles())
            throw SpecError("ManyBodyWavefunction: need one mass per particle");
        for (double m : masses_)
            if (!(m > 0.0)) throw SpecError("ManyBodyWavefunction: masses must be positive");
        if (!(hbar_ > 0.0)) throw SpecError("ManyBodyWavefunction: hbar must be positive");
        for (const Complex& c : amplitudes_)
            if (!std::isfinite(c.real()) || !std::isfinite(c.imag()))
                throw NumericalBlowupError("ManyBodyWavefunction: non-finite amplitude");
    }

    const SpatialGrid& grid() const { return grid_; }
    const std::vector<Complex>& amplitudes() const { return amplitudes_; }
    std::vector<Complex>& amplitudes() { return amplitudes_; }
    const std::vector<double>& masses() const { return masses_; }
    double mass_of_axis(int axis) const {
        return masses_[static_cast<std::size_t>(grid_.particle_of(axis))];
    }
    double hbar() const { return hbar_; }
    double time() const { return time_; }
    void set_time(double t) { time_ = t; }

    double norm_squared() const {
        double s = 0.0;
        for (const Complex& c : amplitudes_) s += std::norm(c);
        return s * grid_.cell_volume();
    }

    bool is_normalized(double tol = kNormTolerance) const {
        return std::abs(norm_squared() - 1.0) < tol;
    }

    void require_normalized(const char* where) const {
        if (!is_normalized())
            throw NormalizationError(std::string(where) + ": state is not normalized");
    }

    /// Rescale to unit quadrature norm. Throws on the zero state.
    void normalize() {
        const double n2 = norm_squared();
        if (!(n2 > 0.0)) throw DegenerateStateError("normalize: zero state");
        const double s = 1.0 / std::sqrt(n2);
        for (Complex& c : amplitudes_) c *= s;
    }

private:
    SpatialGrid grid_;
    std::vector<Complex> amplitudes_;
    std::vector<double> masses_;
    double hbar_ = 1.0;
    double time_ = 0.0;
};

/// Quadrature inner product <a|b> = sum conj(a)*b * cell volume.
inline Complex inner_product(const ManyBodyWavefunction& a, const ManyBodyWavefunction& b) {
    require_same_grid(a.grid(), b.grid(), "inner_product");
    Complex s{0.0, 0.0};
    const auto& av = a.amplitudes();
    const auto& bv = b.amplitudes();
    for (std::size_t i = 0; i < av.size(); ++i) s += std::conj(av[i]) * bv[i];
    return s * a.grid().cell_volume();
}

} // namespace qmeas
