#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "qmeas/errors.hpp"
#include "qmeas/fourier.hpp"
#include "qmeas/wavefunction.hpp"

namespace qmeas {

/// Potential energy V(x, t) sampled on grid points.
using PotentialFn = std::function<double(const std::vector<double>&, double)>;

struct HamiltonianSpec {
    PotentialFn potential;        // null means free evolution
    bool time_dependent = false;  // if false, V is sampled once at t of first use
};

struct EvolutionConfig {
    double dt = 1e-3;
    int n_steps = 1;
    Boundary boundary = Boundary::periodic;
};

/// Guidance bound from the coarsest kinetic scale; the spectral stepper is
/// stable for any dt, accuracy is what degrades beyond this.
inline double suggested_dt_max(const ManyBodyWavefunction& psi) {
    double best = std::numeric_limits<double>::infinity();
    const SpatialGrid& g = psi.grid();
    for (int j = 0; j < g.rank(); ++j) {
        const double dx = g.axis(j).spacing();
        best = std::min(best, 0.1 * psi.mass_of_axis(j) * dx * dx / psi.hbar());
    }
    return best;
}

inline std::vector<double> sample_potential(const SpatialGrid& grid, const PotentialFn& v,
                                            double t) {
    std::vector<double> out(grid.size(), 0.0);
    if (!v) return out;
    std::vector<int> idx(static_cast<std::size_t>(grid.rank()), 0);
    std::size_t flat = 0;
    do {
        const double val = v(grid.point(idx), t);
        if (!std::isfinite(val)) throw SpecError("potential sample is not finite");
        out[flat++] = val;
    } while (grid.next_index(idx));
    return out;
}

/// Strang-split propagator: half potential phase, spectral kinetic step,
/// half potential phase. Owns the transform plans; reuse across steps.
class SplitStepper {
public:
    SplitStepper(const ManyBodyWavefunction& prototype, HamiltonianSpec h, Boundary boundary)
        : h_(std::move(h)),
          kinetic_(prototype.grid(), prototype.masses(), prototype.hbar(), boundary),
          grid_(prototype.grid()),
          hbar_(prototype.hbar()) {
        if (!h_.time_dependent) v_samples_ = sample_potential(grid_, h_.potential, 0.0);
    }

    ManyBodyWavefunction step(const ManyBodyWavefunction& psi, double dt) {
        require_same_grid(psi.grid(), grid_, "split_step");
        if (!(dt != 0.0) || !std::isfinite(dt)) throw SpecError("split_step: bad dt");
        psi.require_normalized("split_step");

        std::vector<Complex> amps = psi.amplitudes();
        // Time-dependent potentials are sampled at the step midpoint.
        const std::vector<double>& v =
            h_.time_dependent
                ? (scratch_v_ = sample_potential(grid_, h_.potential, psi.time() + 0.5 * dt))
                : v_samples_;

        apply_potential_phase(amps, v, 0.5 * dt);
        kinetic_.apply(amps, dt);
        apply_potential_phase(amps, v, 0.5 * dt);

        for (const Complex& c : amps)
            if (!std::isfinite(c.real()) || !std::isfinite(c.imag()))
                throw NumericalBlowupError("split_step: non-finite amplitude after step");

        return ManyBodyWavefunction(grid_, std::move(amps), psi.masses(), psi.hbar(),
                                    psi.time() + dt);
    }

    double total_energy(const ManyBodyWavefunction& psi) {
        const std::vector<double>& v =
            h_.time_dependent
                ? (scratch_v_ = sample_potential(grid_, h_.potential, psi.time()))
                : v_samples_;
        double pot = 0.0;
        double den = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double w = std::norm(psi.amplitudes()[i]);
            pot += w * v[i];
            den += w;
        }
        const double kin = kinetic_.kinetic_energy(psi.amplitudes());
        return kin + (den > 0.0 ? pot / den : 0.0);
    }

private:
    void apply_potential_phase(std::vector<Complex>& amps, const std::vector<double>& v,
                               double dt_half) const {
        if (!h_.potential) return;
        for (std::size_t i = 0; i < amps.size(); ++i)
            amps[i] *= std::polar(1.0, -v[i] * dt_half / hbar_);
    }

    HamiltonianSpec h_;
    KineticPropagator kinetic_;
    SpatialGrid grid_;
    double hbar_;
    std::vector<double> v_samples_;
    std::vector<double> scratch_v_;
};

/// One Strang step. For many steps construct a SplitStepper once.
inline ManyBodyWavefunction split_step(const ManyBodyWavefunction& psi, const HamiltonianSpec& h,
                                       double dt, Boundary boundary = Boundary::periodic) {
    SplitStepper stepper(psi, h, boundary);
    return stepper.step(psi, dt);
}

/// Evolve n_steps and collect snapshots every snapshot_every steps.
/// The initial and final states are always included.
inline std::vector<ManyBodyWavefunction> evolve(const ManyBodyWavefunction& psi,
                                                const HamiltonianSpec& h,
                                                const EvolutionConfig& cfg,
                                                int snapshot_every = 1) {
    if (!(cfg.dt > 0.0)) throw SpecError("evolve: dt must be positive");
    if (snapshot_every < 1) snapshot_every = 1;

    std::vector<ManyBodyWavefunction> snaps;
    snaps.push_back(psi);
    if (cfg.n_steps < 1) return snaps;

    SplitStepper stepper(psi, h, cfg.boundary);
    ManyBodyWavefunction cur = psi;
    for (int s = 1; s <= cfg.n_steps; ++s) {
        cur = stepper.step(cur, cfg.dt);
        if (s % snapshot_every == 0 || s == cfg.n_steps) snaps.push_back(cur);
    }
    return snaps;
}

} // namespace qmeas
