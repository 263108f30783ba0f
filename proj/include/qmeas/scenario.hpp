#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qmeas/bipartite.hpp"
#include "qmeas/errors.hpp"
#include "qmeas/expr.hpp"
#include "qmeas/measurement.hpp"
#include "qmeas/presets.hpp"
#include "qmeas/trajectories.hpp"

namespace qmeas {

using Json = nlohmann::json;

/// One initial-state factor or mode function on a single axis.
struct ModeSpec {
    std::string kind;  // gaussian | harmonic_eigenstate | plane_wave
    double x0 = 0.0;
    double sigma = 1.0;
    double k = 0.0;
    int n = 0;
    double omega = 1.0;
};

struct InitialStateSpec {
    std::string kind;  // product | entangled | symmetrized
    std::vector<ModeSpec> factors;                   // product: one per coordinate
    std::vector<double> p;                           // entangled weights
    std::vector<double> phases;                      // entangled phases
    std::vector<ModeSpec> modes_s, modes_e;          // entangled mode lists
    std::string statistics;                          // symmetrized: boson | fermion
    ModeSpec psi_s, psi_e;                           // symmetrized factors
};

struct PotentialSpec {
    std::string kind = "free";  // free | harmonic | double_well | barrier | expression
    double omega = 1.0;
    double a = 1.0, b = 1.0;
    double height = 1.0, width = 1.0, center = 0.0;
    std::string expression;
    bool time_dependent = false;
};

struct EvolutionSpec {
    double dt = 1e-3;
    int steps = 100;
    int snapshot_every = 1;
    std::string boundary = "periodic";
};

struct TrajectorySpec {
    std::string mode = "density_weighted";  // grid_cells | uniform | density_weighted
    int count = 100;
    std::uint64_t seed = 0;
    double support_eps = 1e-6;
};

struct SchmidtSpec {
    double tol = 1e-12;
    std::vector<int> coords_s, coords_e;
};

struct MeasurementSpec {
    Axis s_axis;
    Axis e_axis;
    std::vector<double> eigenvalues;
    std::vector<ModeSpec> eigenfunctions;
    std::vector<ModeSpec> pointers;
    std::optional<Axis> e2_axis;
    std::vector<ModeSpec> pointers2;
    std::vector<double> p;
    std::vector<double> phases;
    std::vector<double> kraus_a;
    std::vector<double> kraus_sigma;
    double support_eps = 1e-6;
    std::uint64_t seed = 0;
};

struct Scenario {
    std::string name = "scenario";
    int particles = 1;
    int dim = 1;
    std::vector<Axis> axes;
    double hbar = 1.0;
    std::vector<double> masses;
    InitialStateSpec initial_state;
    PotentialSpec potential;
    std::optional<EvolutionSpec> evolution;
    std::optional<TrajectorySpec> trajectories;
    std::optional<SchmidtSpec> schmidt;
    std::optional<MeasurementSpec> measurement;
    std::string output_dir = "out";
    std::uint64_t seed = 0;
};

namespace detail {

inline ModeSpec parse_mode(const Json& j) {
    ModeSpec m;
    m.kind = j.at("kind").get<std::string>();
    m.x0 = j.value("x0", 0.0);
    m.sigma = j.value("sigma", 1.0);
    m.k = j.value("k", 0.0);
    m.n = j.value("n", 0);
    m.omega = j.value("omega", 1.0);
    return m;
}

inline Axis parse_axis(const Json& j) {
    Axis a;
    a.n = j.at("n").get<int>();
    a.x_min = j.at("min").get<double>();
    a.x_max = j.at("max").get<double>();
    return a;
}

} // namespace detail

inline Scenario parse_scenario(const Json& j) {
    Scenario sc;
    sc.name = j.value("name", std::string("scenario"));
    sc.seed = j.value("seed", static_cast<std::uint64_t>(0));
    sc.output_dir = j.value("output_dir", std::string("out"));
    sc.hbar = j.value("hbar", 1.0);

    const Json& g = j.at("grid");
    sc.particles = g.value("particles", 1);
    sc.dim = g.value("dim", 1);
    for (const Json& a : g.at("axes")) sc.axes.push_back(detail::parse_axis(a));

    if (j.contains("masses"))
        sc.masses = j.at("masses").get<std::vector<double>>();
    else
        sc.masses.assign(static_cast<std::size_t>(sc.particles), 1.0);

    const Json& ist = j.at("initial_state");
    sc.initial_state.kind = ist.value("kind", std::string("product"));
    if (sc.initial_state.kind == "product") {
        for (const Json& f : ist.at("factors"))
            sc.initial_state.factors.push_back(detail::parse_mode(f));
    } else if (sc.initial_state.kind == "entangled") {
        sc.initial_state.p = ist.at("p").get<std::vector<double>>();
        if (ist.contains("phases"))
            sc.initial_state.phases = ist.at("phases").get<std::vector<double>>();
        for (const Json& f : ist.at("modes_s"))
            sc.initial_state.modes_s.push_back(detail::parse_mode(f));
        for (const Json& f : ist.at("modes_e"))
            sc.initial_state.modes_e.push_back(detail::parse_mode(f));
    } else if (sc.initial_state.kind == "symmetrized") {
        sc.initial_state.statistics = ist.value("statistics", std::string("boson"));
        sc.initial_state.psi_s = detail::parse_mode(ist.at("psi_s"));
        sc.initial_state.psi_e = detail::parse_mode(ist.at("psi_e"));
    }

    if (j.contains("potential")) {
        const Json& p = j.at("potential");
        sc.potential.kind = p.value("kind", std::string("free"));
        sc.potential.omega = p.value("omega", 1.0);
        sc.potential.a = p.value("a", 1.0);
        sc.potential.b = p.value("b", 1.0);
        sc.potential.height = p.value("height", 1.0);
        sc.potential.width = p.value("width", 1.0);
        sc.potential.center = p.value("center", 0.0);
        sc.potential.expression = p.value("expression", std::string());
        sc.potential.time_dependent = p.value("time_dependent", false);
    }

    if (j.contains("evolution")) {
        const Json& e = j.at("evolution");
        EvolutionSpec ev;
        ev.dt = e.at("dt").get<double>();
        ev.steps = e.at("steps").get<int>();
        ev.snapshot_every = e.value("snapshot_every", 1);
        ev.boundary = e.value("boundary", std::string("periodic"));
        sc.evolution = ev;
    }

    if (j.contains("trajectories")) {
        const Json& t = j.at("trajectories");
        TrajectorySpec tr;
        tr.mode = t.value("mode", std::string("density_weighted"));
        tr.count = t.value("count", 100);
        tr.seed = t.value("seed", static_cast<std::uint64_t>(0));
        tr.support_eps = t.value("support_eps", 1e-6);
        sc.trajectories = tr;
    }

    if (j.contains("schmidt")) {
        const Json& s = j.at("schmidt");
        SchmidtSpec sm;
        sm.tol = s.value("tol", 1e-12);
        sm.coords_s = s.at("coords_s").get<std::vector<int>>();
        sm.coords_e = s.at("coords_e").get<std::vector<int>>();
        sc.schmidt = sm;
    }

    if (j.contains("measurement")) {
        const Json& m = j.at("measurement");
        MeasurementSpec ms;
        ms.s_axis = detail::parse_axis(m.at("s_axis"));
        ms.e_axis = detail::parse_axis(m.at("e_axis"));
        ms.eigenvalues = m.at("observable").at("eigenvalues").get<std::vector<double>>();
        for (const Json& f : m.at("observable").at("eigenfunctions"))
            ms.eigenfunctions.push_back(detail::parse_mode(f));
        for (const Json& f : m.at("apparatus").at("pointers"))
            ms.pointers.push_back(detail::parse_mode(f));
        if (m.contains("apparatus2")) {
            ms.e2_axis = detail::parse_axis(m.at("apparatus2").at("axis"));
            for (const Json& f : m.at("apparatus2").at("pointers"))
                ms.pointers2.push_back(detail::parse_mode(f));
        }
        ms.p = m.at("p").get<std::vector<double>>();
        if (m.contains("phases")) ms.phases = m.at("phases").get<std::vector<double>>();
        if (m.contains("kraus")) {
            ms.kraus_a = m.at("kraus").at("a").get<std::vector<double>>();
            ms.kraus_sigma = m.at("kraus").at("sigma").get<std::vector<double>>();
        }
        ms.support_eps = m.value("support_eps", 1e-6);
        ms.seed = m.value("seed", static_cast<std::uint64_t>(0));
        sc.measurement = ms;
    }
    return sc;
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path);
    Json j;
    try {
        j = Json::parse(is);
    } catch (const Json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    try {
        return parse_scenario(j);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("config field error: ") + e.what());
    }
}

/// Static validation; every violated constraint is one entry.
inline std::vector<std::string> validate_scenario(const Scenario& sc) {
    std::vector<std::string> bad;
    const auto check_axis = [&](const Axis& a, const std::string& what) {
        if (a.n < 8) bad.push_back(what + ": n_points must be >= 8");
        if (!(a.x_max > a.x_min)) bad.push_back(what + ": max must exceed min");
    };

    if (sc.dim != 1 && sc.dim != 2) bad.push_back("grid.dim: must be 1 or 2");
    if (sc.particles < 1) bad.push_back("grid.particles: must be >= 1");
    if (static_cast<int>(sc.axes.size()) != sc.particles * sc.dim)
        bad.push_back("grid.axes: need particles*dim axes");
    for (std::size_t i = 0; i < sc.axes.size(); ++i)
        check_axis(sc.axes[i], "grid.axes[" + std::to_string(i) + "]");
    if (!(sc.hbar > 0.0)) bad.push_back("hbar: must be positive");
    if (static_cast<int>(sc.masses.size()) != sc.particles)
        bad.push_back("masses: need one per particle");
    for (double m : sc.masses)
        if (!(m > 0.0)) bad.push_back("masses: must be positive");

    const auto check_mode = [&](const ModeSpec& m, const std::string& what) {
        if (m.kind == "gaussian") {
            if (!(m.sigma > 0.0)) bad.push_back(what + ".sigma: must be positive");
        } else if (m.kind == "harmonic_eigenstate") {
            if (m.n < 0) bad.push_back(what + ".n: must be >= 0");
            if (!(m.omega > 0.0)) bad.push_back(what + ".omega: must be positive");
        } else if (m.kind != "plane_wave") {
            bad.push_back(what + ".kind: unknown preset '" + m.kind + "'");
        }
    };

    const InitialStateSpec& ist = sc.initial_state;
    if (ist.kind == "product") {
        if (ist.factors.size() != sc.axes.size())
            bad.push_back("initial_state.factors: need one per coordinate");
        for (std::size_t i = 0; i < ist.factors.size(); ++i)
            check_mode(ist.factors[i], "initial_state.factors[" + std::to_string(i) + "]");
    } else if (ist.kind == "entangled") {
        double sum = 0.0;
        for (double w : ist.p) {
            if (w < 0.0) bad.push_back("initial_state.p: entries must be >= 0");
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-9) bad.push_back("initial_state.p: must sum to 1");
        if (ist.modes_s.size() != ist.p.size() || ist.modes_e.size() != ist.p.size())
            bad.push_back("initial_state: p, modes_s, modes_e lengths must match");
        if (!ist.phases.empty() && ist.phases.size() != ist.p.size())
            bad.push_back("initial_state.phases: length must match p");
        if (sc.axes.size() != 2)
            bad.push_back("initial_state.entangled: needs a two-coordinate grid");
    } else if (ist.kind == "symmetrized") {
        if (ist.statistics != "boson" && ist.statistics != "fermion")
            bad.push_back("initial_state.statistics: must be boson or fermion");
        if (sc.axes.size() != 2 || sc.dim != 1)
            bad.push_back("initial_state.symmetrized: needs two 1D particles");
        check_mode(ist.psi_s, "initial_state.psi_s");
        check_mode(ist.psi_e, "initial_state.psi_e");
    } else {
        bad.push_back("initial_state.kind: unknown kind '" + ist.kind + "'");
    }

    const PotentialSpec& pot = sc.potential;
    if (pot.kind == "expression") {
        if (pot.expression.empty())
            bad.push_back("potential.expression: empty");
        else {
            try {
                Expression::parse(pot.expression, static_cast<int>(sc.axes.size()));
            } catch (const Error& e) {
                bad.push_back(std::string("potential.expression: ") + e.what());
            }
        }
    } else if (pot.kind != "free" && pot.kind != "harmonic" && pot.kind != "double_well" &&
               pot.kind != "barrier") {
        bad.push_back("potential.kind: unknown kind '" + pot.kind + "'");
    }
    if (pot.kind == "harmonic" && !(pot.omega > 0.0))
        bad.push_back("potential.omega: must be positive");
    if (pot.kind == "barrier" && !(pot.width > 0.0))
        bad.push_back("potential.width: must be positive");

    if (sc.evolution) {
        if (!(sc.evolution->dt > 0.0)) bad.push_back("evolution.dt: must be positive");
        if (sc.evolution->steps < 0) bad.push_back("evolution.steps: must be >= 0");
        if (sc.evolution->snapshot_every < 1)
            bad.push_back("evolution.snapshot_every: must be >= 1");
        if (sc.evolution->boundary != "periodic" && sc.evolution->boundary != "hard_wall")
            bad.push_back("evolution.boundary: must be periodic or hard_wall");
    }

    if (sc.trajectories) {
        const TrajectorySpec& tr = *sc.trajectories;
        if (tr.mode != "grid_cells" && tr.mode != "uniform" && tr.mode != "density_weighted")
            bad.push_back("trajectories.mode: unknown mode '" + tr.mode + "'");
        if (tr.mode != "grid_cells" && tr.count < 1)
            bad.push_back("trajectories.count: must be >= 1");
        if (!(tr.support_eps >= 0.0 && tr.support_eps < 1.0))
            bad.push_back("trajectories.support_eps: must lie in [0,1)");
        if (!sc.evolution) bad.push_back("trajectories: requires an evolution section");
    }

    if (sc.schmidt) {
        try {
            Bipartition part{sc.schmidt->coords_s, sc.schmidt->coords_e};
            part.validate(static_cast<int>(sc.axes.size()));
        } catch (const Error& e) {
            bad.push_back(std::string("schmidt.bipartition: ") + e.what());
        }
        if (!(sc.schmidt->tol >= 0.0)) bad.push_back("schmidt.tol: must be >= 0");
    }

    if (sc.measurement) {
        const MeasurementSpec& ms = *sc.measurement;
        check_axis(ms.s_axis, "measurement.s_axis");
        check_axis(ms.e_axis, "measurement.e_axis");
        const std::size_t K = ms.p.size();
        double sum = 0.0;
        for (double w : ms.p) {
            if (w < 0.0) bad.push_back("measurement.p: entries must be >= 0");
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-9) bad.push_back("measurement.p: must sum to 1");
        if (ms.eigenvalues.size() != K || ms.eigenfunctions.size() != K ||
            ms.pointers.size() != K)
            bad.push_back("measurement: eigenvalues/eigenfunctions/pointers/p lengths must match");
        for (std::size_t k = 0; k + 1 < ms.eigenvalues.size(); ++k)
            if (!(ms.eigenvalues[k] < ms.eigenvalues[k + 1]))
                bad.push_back("measurement.observable.eigenvalues: must be strictly sorted");
        for (std::size_t k = 0; k < ms.eigenfunctions.size(); ++k)
            check_mode(ms.eigenfunctions[k],
                       "measurement.observable.eigenfunctions[" + std::to_string(k) + "]");
        for (std::size_t k = 0; k < ms.pointers.size(); ++k)
            check_mode(ms.pointers[k], "measurement.apparatus.pointers[" + std::to_string(k) + "]");
        if (!ms.phases.empty() && ms.phases.size() != K)
            bad.push_back("measurement.phases: length must match p");
        if (!ms.kraus_a.empty()) {
            if (ms.kraus_a.size() != K || ms.kraus_sigma.size() != K)
                bad.push_back("measurement.kraus: a and sigma must match p length");
            for (double s : ms.kraus_sigma)
                if (!(s > 0.0)) bad.push_back("measurement.kraus.sigma: must be positive");
        }
        if (ms.e2_axis) {
            check_axis(*ms.e2_axis, "measurement.apparatus2.axis");
            if (ms.pointers2.size() != K)
                bad.push_back("measurement.apparatus2.pointers: length must match p");
        }
        if (!(ms.support_eps >= 0.0 && ms.support_eps < 1.0))
            bad.push_back("measurement.support_eps: must lie in [0,1)");
    }
    return bad;
}

// Builders from validated specs.

inline std::vector<Complex> build_mode(const ModeSpec& m, const Axis& axis, double mass,
                                       double hbar) {
    if (m.kind == "gaussian") return presets::gaussian(axis, m.x0, m.sigma, m.k);
    if (m.kind == "harmonic_eigenstate")
        return presets::harmonic_eigenstate(axis, m.n, mass, m.omega, hbar, m.x0);
    if (m.kind == "plane_wave") return presets::plane_wave(axis, commensurate_k(axis, m.k));
    throw ConfigError("unknown mode preset '" + m.kind + "'");
}

inline ManyBodyWavefunction build_initial_state(const Scenario& sc) {
    const SpatialGrid grid(sc.axes, sc.particles, sc.dim);
    const InitialStateSpec& ist = sc.initial_state;
    if (ist.kind == "product") {
        std::vector<std::vector<Complex>> factors;
        for (int j = 0; j < grid.rank(); ++j)
            factors.push_back(build_mode(ist.factors[static_cast<std::size_t>(j)], grid.axis(j),
                                         sc.masses[static_cast<std::size_t>(grid.particle_of(j))],
                                         sc.hbar));
        return presets::product_state(grid, factors, sc.masses, sc.hbar);
    }
    if (ist.kind == "entangled") {
        std::vector<Complex> amps(grid.size(), Complex{0.0, 0.0});
        const Axis& as = grid.axis(0);
        const Axis& ae = grid.axis(1);
        const std::size_t ne = static_cast<std::size_t>(ae.n);
        for (std::size_t k = 0; k < ist.p.size(); ++k) {
            const auto fs = build_mode(ist.modes_s[k], as, sc.masses[0], sc.hbar);
            const auto fe = build_mode(ist.modes_e[k], ae, sc.masses.back(), sc.hbar);
            const Complex c = std::polar(std::sqrt(ist.p[k]),
                                         ist.phases.empty() ? 0.0 : ist.phases[k]);
            for (std::size_t s = 0; s < fs.size(); ++s)
                for (std::size_t e = 0; e < ne; ++e) amps[s * ne + e] += c * fs[s] * fe[e];
        }
        ManyBodyWavefunction psi(grid, std::move(amps), sc.masses, sc.hbar, 0.0);
        psi.normalize();
        return psi;
    }
    if (ist.kind == "symmetrized") {
        const Axis& axis = grid.axis(0);
        const auto fs = build_mode(ist.psi_s, axis, sc.masses[0], sc.hbar);
        const auto fe = build_mode(ist.psi_e, axis, sc.masses.back(), sc.hbar);
        return symmetrize_two_particle(axis, fs, fe,
                                       ist.statistics == "fermion"
                                           ? ExchangeStatistics::fermion
                                           : ExchangeStatistics::boson,
                                       sc.masses[0], sc.hbar);
    }
    throw ConfigError("unknown initial_state kind '" + ist.kind + "'");
}

inline HamiltonianSpec build_hamiltonian(const Scenario& sc) {
    HamiltonianSpec h;
    const PotentialSpec& p = sc.potential;
    if (p.kind == "free") {
        h.potential = presets::free_potential();
    } else if (p.kind == "harmonic") {
        h.potential = presets::harmonic_potential(sc.masses, p.omega, sc.dim);
    } else if (p.kind == "double_well") {
        h.potential = presets::double_well_potential(p.a, p.b);
    } else if (p.kind == "barrier") {
        h.potential = presets::barrier_potential(p.height, p.width, p.center);
    } else if (p.kind == "expression") {
        Expression expr = Expression::parse(p.expression, static_cast<int>(sc.axes.size()));
        h.potential = [expr](const std::vector<double>& x, double t) { return expr.eval(x, t); };
        h.time_dependent = p.time_dependent;
    } else {
        throw ConfigError("unknown potential kind '" + p.kind + "'");
    }
    return h;
}

inline ObservableSpec build_observable(const MeasurementSpec& ms, double hbar) {
    ObservableSpec obs;
    obs.grid_S = SpatialGrid({ms.s_axis}, 1, 1);
    obs.eigenvalues = ms.eigenvalues;
    const double dv = ms.s_axis.spacing();
    for (const ModeSpec& m : ms.eigenfunctions) {
        auto f = build_mode(m, ms.s_axis, 1.0, hbar);
        double n2 = 0.0;
        for (const Complex& c : f) n2 += std::norm(c);
        const double s = 1.0 / std::sqrt(n2 * dv);
        for (Complex& c : f) c *= s;
        obs.eigenfunctions.push_back(std::move(f));
    }
    return obs;
}

inline ApparatusSpec build_apparatus_spec(const Axis& axis, const std::vector<ModeSpec>& modes,
                                          double eps, double hbar) {
    std::vector<std::vector<Complex>> pointers;
    for (const ModeSpec& m : modes) pointers.push_back(build_mode(m, axis, 1.0, hbar));
    // Renormalize under the axis quadrature so declared presets are exact.
    const double dv = axis.spacing();
    for (auto& f : pointers) {
        double n2 = 0.0;
        for (const Complex& c : f) n2 += std::norm(c);
        n2 *= dv;
        const double s = 1.0 / std::sqrt(n2);
        for (Complex& c : f) c *= s;
    }
    return make_apparatus(SpatialGrid({axis}, 1, 1), std::move(pointers), eps);
}

} // namespace qmeas
