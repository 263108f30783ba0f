#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "qmeas/errors.hpp"

namespace qmeas {

/// One uniform coordinate axis: n points from x_min to x_max inclusive.
struct Axis {
    int n = 0;
    double x_min = 0.0;
    double x_max = 0.0;

    double spacing() const { return (x_max - x_min) / static_cast<double>(n - 1); }
    double coord(int i) const { return x_min + spacing() * static_cast<double>(i); }
    double length() const { return x_max - x_min; }
};

/// Uniform tensor-product grid over the N*d configuration coordinates.
/// Axis j belongs to particle j/dim (coordinates of one particle are contiguous).
class SpatialGrid {
public:
    SpatialGrid() = default;

    SpatialGrid(std::vector<Axis> axes, int particles, int dim)
        : axes_(std::move(axes)), particles_(particles), dim_(dim) {
        if (dim_ != 1 && dim_ != 2)
            throw SpecError("SpatialGrid: spatial dimension must be 1 or 2");
        if (particles_ < 1) throw SpecError("SpatialGrid: particle count must be >= 1");
        if (static_cast<int>(axes_.size()) != particles_ * dim_)
            throw SpecError("SpatialGrid: axis count must equal particles*dim");
        for (const Axis& a : axes_) {
            if (a.n < 8) throw SpecError("SpatialGrid: every axis needs n_points >= 8");
            if (!(a.x_max > a.x_min)) throw SpecError("SpatialGrid: axis spacing must be positive");
        }
        strides_.assign(axes_.size(), 1);
        size_ = 1;
        for (int j = static_cast<int>(axes_.size()) - 1; j >= 0; --j) {
            strides_[j] = static_cast<std::ptrdiff_t>(size_);
            size_ *= static_cast<std::size_t>(axes_[j].n);
        }
    }

    int rank() const { return static_cast<int>(axes_.size()); }
    int particles() const { return particles_; }
    int dim() const { return dim_; }
    std::size_t size() const { return size_; }
    const Axis& axis(int j) const { return axes_[static_cast<std::size_t>(j)]; }
    const std::vector<Axis>& axes() const { return axes_; }
    std::ptrdiff_t stride(int j) const { return strides_[static_cast<std::size_t>(j)]; }

    /// Which particle owns coordinate axis j.
    int particle_of(int j) const { return j / dim_; }

    double cell_volume() const {
        double v = 1.0;
        for (const Axis& a : axes_) v *= a.spacing();
        return v;
    }

    std::size_t flat_index(const std::vector<int>& idx) const {
        std::size_t f = 0;
        for (int j = 0; j < rank(); ++j)
            f += static_cast<std::size_t>(idx[static_cast<std::size_t>(j)]) *
                 static_cast<std::size_t>(strides_[static_cast<std::size_t>(j)]);
        return f;
    }

    std::vector<int> multi_index(std::size_t flat) const {
        std::vector<int> idx(static_cast<std::size_t>(rank()));
        for (int j = 0; j < rank(); ++j) {
            const auto s = static_cast<std::size_t>(strides_[static_cast<std::size_t>(j)]);
            idx[static_cast<std::size_t>(j)] = static_cast<int>(flat / s);
            flat %= s;
        }
        return idx;
    }

    /// Advance a multi-index in row-major order; false when exhausted.
    bool next_index(std::vector<int>& idx) const {
        for (int j = rank() - 1; j >= 0; --j) {
            auto& v = idx[static_cast<std::size_t>(j)];
            if (++v < axes_[static_cast<std::size_t>(j)].n) return true;
            v = 0;
        }
        return false;
    }

    std::vector<double> point(const std::vector<int>& idx) const {
        std::vector<double> x(static_cast<std::size_t>(rank()));
        for (int j = 0; j < rank(); ++j)
            x[static_cast<std::size_t>(j)] =
                axes_[static_cast<std::size_t>(j)].coord(idx[static_cast<std::size_t>(j)]);
        return x;
    }

    bool same_as(const SpatialGrid& o, double tol = 1e-12) const {
        if (o.rank() != rank() || o.particles_ != particles_ || o.dim_ != dim_) return false;
        for (int j = 0; j < rank(); ++j) {
            const Axis& a = axes_[static_cast<std::size_t>(j)];
            const Axis& b = o.axes_[static_cast<std::size_t>(j)];
            if (a.n != b.n) return false;
            if (std::abs(a.x_min - b.x_min) > tol || std::abs(a.x_max - b.x_max) > tol) return false;
        }
        return true;
    }

private:
    std::vector<Axis> axes_;
    int particles_ = 1;
    int dim_ = 1;
    std::vector<std::ptrdiff_t> strides_;
    std::size_t size_ = 0;
};

inline void require_same_grid(const SpatialGrid& a, const SpatialGrid& b, const char* where) {
    if (!a.same_as(b)) throw GridMismatchError(std::string(where) + ": grids differ");
}

} // namespace qmeas
