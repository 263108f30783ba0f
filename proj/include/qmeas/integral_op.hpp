#pragma once

#include <cmath>
#include <vector>

#include "qmeas/bipartite.hpp"
#include "qmeas/errors.hpp"
#include "qmeas/wavefunction.hpp"

namespace qmeas {

/// Integration region for the operator B: either an explicit mask on the
/// joint grid or a product mask_S x mask_E under a bipartition.
struct RegionSpec {
    enum class Kind { full_grid_mask, product_region };

    Kind kind = Kind::full_grid_mask;
    std::vector<char> joint_mask;

    Bipartition part;
    std::vector<char> mask_S;
    std::vector<char> mask_E;

    static RegionSpec whole(const SpatialGrid& grid) {
        RegionSpec r;
        r.kind = Kind::full_grid_mask;
        r.joint_mask.assign(grid.size(), 1);
        return r;
    }

    static RegionSpec from_mask(std::vector<char> mask) {
        RegionSpec r;
        r.kind = Kind::full_grid_mask;
        r.joint_mask = std::move(mask);
        return r;
    }

    static RegionSpec product(Bipartition part, std::vector<char> mask_S,
                              std::vector<char> mask_E) {
        RegionSpec r;
        r.kind = Kind::product_region;
        r.part = std::move(part);
        r.mask_S = std::move(mask_S);
        r.mask_E = std::move(mask_E);
        return r;
    }

    /// Materialize as a joint-grid mask.
    std::vector<char> realize(const SpatialGrid& grid) const {
        if (kind == Kind::full_grid_mask) {
            if (joint_mask.size() != grid.size())
                throw GridMismatchError("RegionSpec: joint mask size mismatch");
            return joint_mask;
        }
        part.validate(grid.rank());
        const SpatialGrid gs = subgrid(grid, part.coords_S);
        const SpatialGrid ge = subgrid(grid, part.coords_E);
        if (mask_S.size() != gs.size() || mask_E.size() != ge.size())
            throw GridMismatchError("RegionSpec: side mask size mismatch");
        const auto map = detail::build_split_indexer(grid, part, gs, ge);
        std::vector<char> out(grid.size());
        for (std::size_t flat = 0; flat < grid.size(); ++flat)
            out[flat] = mask_S[map.s_of_flat[flat]] && mask_E[map.e_of_flat[flat]];
        return out;
    }
};

/// B_Omega(f) = sum over masked cells of f * R^2 * cell volume, i.e. the
/// integral of f against the measure R^2 dV evaluated on the current
/// snapshot (Corollary 2 makes the measure time-consistent, so plain
/// quadrature on the stored state is the whole evaluation).
inline Complex b_omega(const ManyBodyWavefunction& psi, const RegionSpec& region,
                       const std::vector<Complex>* f = nullptr) {
    if (f && f->size() != psi.grid().size())
        throw GridMismatchError("b_omega: sampled functional size mismatch");
    const std::vector<char> mask = region.realize(psi.grid());
    Complex acc{0.0, 0.0};
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        const double w = std::norm(psi.amplitudes()[i]);
        acc += (f ? (*f)[i] : Complex{1.0, 0.0}) * w;
    }
    return acc * psi.grid().cell_volume();
}

inline double b_omega_one(const ManyBodyWavefunction& psi, const RegionSpec& region) {
    return b_omega(psi, region).real();
}

enum class Side { S, E };

/// P(S_side | sub_mask): B over sub_mask x (full other side).
inline double marginal_probability(const ManyBodyWavefunction& psi, const Bipartition& part,
                                   Side side, const std::vector<char>& sub_mask) {
    part.validate(psi.grid().rank());
    const SpatialGrid gs = subgrid(psi.grid(), part.coords_S);
    const SpatialGrid ge = subgrid(psi.grid(), part.coords_E);
    std::vector<char> ms(gs.size(), 1), me(ge.size(), 1);
    if (side == Side::S) {
        if (sub_mask.size() != gs.size())
            throw GridMismatchError("marginal_probability: S mask size mismatch");
        ms = sub_mask;
    } else {
        if (sub_mask.size() != ge.size())
            throw GridMismatchError("marginal_probability: E mask size mismatch");
        me = sub_mask;
    }
    return b_omega_one(psi, RegionSpec::product(part, std::move(ms), std::move(me)));
}

struct ProbabilityInequalityReport {
    double p_joint = 0.0;
    double p_S = 0.0;
    double p_E = 0.0;
    bool holds = false;
};

/// P(joint | Omega_S x Omega_E) <= min(P(S|Omega_S), P(E|Omega_E)).
inline ProbabilityInequalityReport check_probability_inequalities(
    const ManyBodyWavefunction& psi, const Bipartition& part, const std::vector<char>& mask_S,
    const std::vector<char>& mask_E) {
    ProbabilityInequalityReport rep;
    rep.p_joint = b_omega_one(psi, RegionSpec::product(part, mask_S, mask_E));
    rep.p_S = marginal_probability(psi, part, Side::S, mask_S);
    rep.p_E = marginal_probability(psi, part, Side::E, mask_E);
    const double slack = 1e-12;
    rep.holds = rep.p_joint <= rep.p_S + slack && rep.p_joint <= rep.p_E + slack;
    return rep;
}

/// <x|rho|x> dx computed through the Schmidt reconstruction route against
/// B over the single cell; returns the max cellwise discrepancy.
inline double density_diagonal_equivalence(const ManyBodyWavefunction& psi,
                                           const Bipartition& part) {
    const SchmidtDecomposition sd = schmidt_decompose(psi, part, 1e-12);
    const ManyBodyWavefunction rec = reconstruct(sd);
    const double dv = psi.grid().cell_volume();
    double worst = 0.0;
    for (std::size_t i = 0; i < psi.grid().size(); ++i) {
        const double via_rho = std::norm(rec.amplitudes()[i]) * dv;
        const double via_b = std::norm(psi.amplitudes()[i]) * dv;
        worst = std::max(worst, std::abs(via_rho - via_b));
    }
    return worst;
}

} // namespace qmeas
