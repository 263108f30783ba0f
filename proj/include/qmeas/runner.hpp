#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "qmeas/hydro.hpp"
#include "qmeas/io.hpp"
#include "qmeas/scenario.hpp"

namespace qmeas {

enum StageFlags : unsigned {
    kStageEvolve = 1u << 0,
    kStageTrajectories = 1u << 1,
    kStageSchmidt = 1u << 2,
    kStageMeasure = 1u << 3,
    kStageWeak = 1u << 4,
    kStageConsistency = 1u << 5,
    kStageAll = ~0u,
};

struct RunOptions {
    std::string out_dir;
    unsigned stages = kStageAll;
    bool quiet = false;
    std::optional<std::uint64_t> seed_override;
};

namespace detail {

struct StageLog {
    std::ofstream summary;
    bool quiet = false;

    void line(const std::string& text) {
        summary << text << '\n';
        if (!quiet) std::printf("%s\n", text.c_str());
    }
    void metric(io::Metrics& metrics, const std::string& key, double value,
                const std::string& op) {
        metrics.put(key, value);
        line("  " + key + " = " + io::fmt(value) + "  [" + op + "]");
    }
};

inline Boundary parse_boundary(const std::string& name) {
    return name == "hard_wall" ? Boundary::hard_wall : Boundary::periodic;
}

inline SampleMode parse_sample_mode(const std::string& name) {
    if (name == "grid_cells") return SampleMode::grid_cells;
    if (name == "uniform") return SampleMode::uniform;
    return SampleMode::density_weighted;
}

} // namespace detail

/// Execute the enabled pipeline stages and write snapshots, trajectory
/// tables, a summary, and the flat metrics file into out_dir.
inline int run_scenario(const Scenario& sc, const RunOptions& opt) {
    namespace fs = std::filesystem;
    const auto violations = validate_scenario(sc);
    if (!violations.empty()) {
        for (const auto& v : violations) std::fprintf(stderr, "validation: %s\n", v.c_str());
        return 2;
    }

    fs::create_directories(opt.out_dir);
    detail::StageLog log;
    log.summary.open(opt.out_dir + "/summary.txt");
    log.quiet = opt.quiet;
    io::Metrics metrics;

    const std::uint64_t seed = opt.seed_override.value_or(sc.seed);
    metrics.put("config.seed", static_cast<double>(seed));
    log.line("scenario " + sc.name);

    try {
        std::vector<ManyBodyWavefunction> snapshots;
        ManyBodyWavefunction psi0 = build_initial_state(sc);
        snapshots.push_back(psi0);

        const bool want_dynamics =
            (opt.stages & (kStageEvolve | kStageTrajectories | kStageSchmidt)) != 0;

        if (sc.evolution && want_dynamics) {
            log.line("stage evolve");
            const EvolutionSpec& ev = *sc.evolution;
            EvolutionConfig cfg;
            cfg.dt = ev.dt;
            cfg.n_steps = ev.steps;
            cfg.boundary = detail::parse_boundary(ev.boundary);
            HamiltonianSpec h = build_hamiltonian(sc);

            SplitStepper stepper(psi0, h, cfg.boundary);
            const double e0 = stepper.total_energy(psi0);
            snapshots = evolve(psi0, h, cfg, ev.snapshot_every);
            const ManyBodyWavefunction& last = snapshots.back();

            log.metric(metrics, "evolve.snapshots", static_cast<double>(snapshots.size()),
                       "evolve");
            log.metric(metrics, "evolve.norm_drift", std::abs(last.norm_squared() - 1.0),
                       "evolve");
            if (!sc.potential.time_dependent) {
                const double e1 = stepper.total_energy(last);
                const double scale = std::max(std::abs(e0), 1e-30);
                log.metric(metrics, "evolve.energy_drift", std::abs(e1 - e0) / scale,
                           "split_step");
            }
            log.metric(metrics, "evolve.dt_max_hint", suggested_dt_max(psi0), "split_step");

            int file_id = 0;
            for (const auto& snap : snapshots) {
                char name[64];
                std::snprintf(name, sizeof(name), "snapshot_%04d.tsv", file_id++);
                std::ofstream os(opt.out_dir + "/" + name);
                const PolarFields polar = polar_decompose(snap);
                io::write_snapshot(os, snap, polar, compute_support(polar, 1e-6));
            }

            if (snapshots.size() >= 3) {
                const std::size_t m = snapshots.size() / 2;
                const double snap_dt = snapshots[m].time() - snapshots[m - 1].time();
                log.metric(metrics, "hydro.continuity_residual",
                           continuity_residual(snapshots[m - 1], snapshots[m],
                                               snapshots[m + 1], snap_dt),
                           "continuity_residual");
            }
            log.metric(metrics, "hydro.current_discrepancy",
                       current_velocity_discrepancy(snapshots.back()),
                       "current_density vs velocity_field");
        }

        if (sc.trajectories && (opt.stages & kStageTrajectories)) {
            log.line("stage trajectories");
            if (snapshots.size() < 2)
                throw SpecError("trajectories stage needs an evolution with snapshots");
            SampleSpec ss;
            ss.mode = detail::parse_sample_mode(sc.trajectories->mode);
            ss.count = sc.trajectories->count;
            ss.seed = seed ^ sc.trajectories->seed;
            ss.support_eps = sc.trajectories->support_eps;
            const TrajectoryEnsemble ens = integrate_trajectories(snapshots, ss);

            std::ofstream os(opt.out_dir + "/trajectories.tsv");
            io::write_trajectories(os, ens);

            std::size_t frozen = 0;
            for (auto st : ens.status) frozen += (st != TrajectoryStatus::ok);
            log.metric(metrics, "trajectories.count", static_cast<double>(ens.size()),
                       "integrate_trajectories");
            log.metric(metrics, "trajectories.frozen", static_cast<double>(frozen),
                       "integrate_trajectories");

            const auto cross =
                check_no_crossing(ens, snapshots.front().grid().axis(0).spacing());
            log.metric(metrics, "trajectories.order_preserved", cross.order_preserved,
                       "check_no_crossing");
            log.metric(metrics, "trajectories.min_pairwise_distance",
                       cross.min_pairwise_distance, "check_no_crossing");

            if (ens.size() >= 2) {
                log.metric(metrics, "trajectories.measure_drift",
                           measure_conservation(ens, snapshots), "measure_conservation");
            }

            if (ss.mode == SampleMode::grid_cells) {
                const SupportMask mask0 = compute_support(snapshots.front(), ss.support_eps);
                const SupportMask maskT = compute_support(snapshots.back(), ss.support_eps);
                log.metric(metrics, "trajectories.support_symdiff",
                           advect_support(mask0, ens, maskT), "advect_support");
            }
        }

        if (sc.schmidt && (opt.stages & kStageSchmidt)) {
            log.line("stage schmidt");
            const Bipartition part{sc.schmidt->coords_s, sc.schmidt->coords_e};
            const ManyBodyWavefunction& target = snapshots.back();
            const SchmidtDecomposition sd = schmidt_decompose(target, part, sc.schmidt->tol);

            const ManyBodyWavefunction rec = reconstruct(sd);
            double worst = 0.0;
            for (std::size_t i = 0; i < target.grid().size(); ++i)
                worst = std::max(worst,
                                 std::abs(rec.amplitudes()[i] - target.amplitudes()[i]));
            log.metric(metrics, "schmidt.rank", static_cast<double>(sd.rank()),
                       "schmidt_decompose");
            log.metric(metrics, "schmidt.weight_sum", sd.weight_sum(), "schmidt_decompose");
            log.metric(metrics, "schmidt.discarded_mass", sd.discarded_mass,
                       "schmidt_decompose");
            log.metric(metrics, "schmidt.reconstruction_error", worst, "reconstruct");
            log.metric(metrics, "schmidt.purity", sd.purity(), "schmidt_decompose");
            for (std::size_t k = 0; k < std::min<std::size_t>(sd.rank(), 8); ++k) {
                log.metric(metrics, "schmidt.p_" + std::to_string(k), sd.p[k],
                           "schmidt_decompose");
                log.metric(metrics, "schmidt.theta_" + std::to_string(k), sd.theta[k],
                           "schmidt_decompose");
            }

            std::ofstream os(opt.out_dir + "/schmidt_report.txt");
            os << "k\tp_k\ttheta_k\tmode_S_norm\tmode_E_norm\n";
            for (std::size_t k = 0; k < sd.rank(); ++k) {
                const double ns = std::sqrt(
                    detail::mode_norm_squared(sd.modes_S[k], sd.grid_S.cell_volume()));
                const double ne = std::sqrt(
                    detail::mode_norm_squared(sd.modes_E[k], sd.grid_E.cell_volume()));
                os << k << '\t' << io::fmt(sd.p[k]) << '\t' << io::fmt(sd.theta[k]) << '\t'
                   << io::fmt(ns) << '\t' << io::fmt(ne) << '\n';
            }
        }

        if (sc.measurement &&
            (opt.stages & (kStageMeasure | kStageWeak | kStageConsistency))) {
            const MeasurementSpec& ms = *sc.measurement;
            const ObservableSpec obs = build_observable(ms, 1.0);
            const ApparatusSpec app =
                build_apparatus_spec(ms.e_axis, ms.pointers, ms.support_eps, 1.0);
            const ManyBodyWavefunction entangled =
                build_entangled_state(obs, app, ms.p, ms.phases);

            if (opt.stages & (kStageMeasure | kStageConsistency)) {
                log.line("stage measure");
                const ConsistencyReport rep =
                    check_consistency(entangled, obs, app, ms.support_eps);
                log.metric(metrics, "measure.consistent", rep.consistent,
                           "check_consistency");
                log.metric(metrics, "measure.max_deviation", rep.max_deviation,
                           "check_consistency");
                double max_overlap = 0.0;
                for (const auto& row : rep.overlap)
                    for (double v : row) max_overlap = std::max(max_overlap, v);
                log.metric(metrics, "measure.max_overlap", max_overlap, "check_consistency");
                for (std::size_t k = 0; k < rep.target_probabilities.size(); ++k) {
                    log.metric(metrics, "measure.p_" + std::to_string(k),
                               rep.target_probabilities[k], "projective probabilities");
                    log.metric(metrics, "measure.b_" + std::to_string(k),
                               rep.b_probabilities[k], "b_omega");
                }

                if (opt.stages & kStageMeasure) {
                    const ProjectiveOutcome out =
                        projective_measure(entangled, obs, app, seed ^ ms.seed);
                    log.metric(metrics, "measure.outcome",
                               static_cast<double>(out.outcome), "projective_measure");
                    if (rep.consistent) {
                        const double via_b = expectation_via_functional(entangled, obs, rep);
                        double via_op = 0.0;
                        for (std::size_t k = 0; k < out.probabilities.size(); ++k)
                            via_op += obs.eigenvalues[k] * out.probabilities[k];
                        log.metric(metrics, "measure.expectation_functional", via_b,
                                   "expectation_via_functional");
                        log.metric(metrics, "measure.expectation_operator", via_op,
                                   "sum a_k p_k");
                        const BranchDensity bd = branch_density(entangled, obs, app, rep);
                        log.metric(metrics, "measure.branch_piecewise_deviation",
                                   bd.max_piecewise_deviation, "branch_density");
                    }
                }
            }

            if (!ms.kraus_a.empty() && (opt.stages & kStageWeak)) {
                log.line("stage weak");
                const KrausSet kraus = build_kraus(ms.kraus_a, ms.kraus_sigma);
                log.metric(metrics, "kraus.completeness_residual",
                           kraus.completeness_residual(), "build_kraus");
                const std::vector<double> pw = weak_probabilities(ms.p, kraus);
                double pw_sum = 0.0;
                for (std::size_t k = 0; k < pw.size(); ++k) {
                    pw_sum += pw[k];
                    log.metric(metrics, "weak.p_w_" + std::to_string(k), pw[k],
                               "weak_probabilities");
                }
                log.metric(metrics, "weak.sum", pw_sum, "weak_probabilities");

                const WeakVariantAResult va = weak_variant_A(ms.p, kraus, obs, app);
                const WeakVariantBResult vb = weak_variant_B(ms.p, kraus, obs, app,
                                                             ms.support_eps);
                double prob_gap = 0.0, pop_gap = 0.0;
                for (std::size_t k = 0; k < pw.size(); ++k) {
                    prob_gap = std::max(prob_gap,
                                        std::abs(va.probabilities[k] - vb.probabilities[k]));
                    const auto pa = system_populations(va.finals[k], obs);
                    const auto pb = system_populations(vb.finals[k], obs);
                    for (std::size_t h = 0; h < pa.size(); ++h)
                        pop_gap = std::max(pop_gap, std::abs(pa[h] - pb[h]));
                    log.metric(metrics, "weak.variantA.purity_" + std::to_string(k),
                               va.apparatus_purity[k], "weak_variant_A");
                    log.metric(metrics, "weak.variantB.purity_" + std::to_string(k),
                               vb.apparatus_purity[k], "weak_variant_B");
                }
                log.metric(metrics, "weak.prob_match", prob_gap, "variant A vs B");
                log.metric(metrics, "weak.population_match", pop_gap, "system_populations");
                log.metric(metrics, "weak.variantA.consistent", va.report.consistent,
                           "weak_variant_A");
                log.metric(metrics, "weak.variantB.consistent", vb.report.consistent,
                           "weak_variant_B");
                log.metric(metrics, "weak.variantA.greedy_residual",
                           va.report.greedy_residual, "weak_variant_A");
                log.metric(metrics, "weak.variantB.greedy_residual",
                           vb.report.greedy_residual, "weak_variant_B");

                if (ms.e2_axis) {
                    const ApparatusSpec app2 = build_apparatus_spec(
                        *ms.e2_axis, ms.pointers2, ms.support_eps, 1.0);
                    const GeneralizedSEEResult see =
                        generalized_SEE(ms.p, kraus, obs, app, app2);
                    for (std::size_t k = 0; k < pw.size(); ++k)
                        log.metric(metrics, "see.purity_" + std::to_string(k),
                                   see.second_apparatus_purity[k], "generalized_SEE");
                    log.metric(metrics, "see.consistent", see.report.consistent,
                               "generalized_SEE");
                    double see_pop_gap = 0.0;
                    for (std::size_t k = 0; k < pw.size(); ++k) {
                        const auto coeffs = weak_collapse_system(ms.p, kraus, k);
                        const auto pops = system_populations(see.finals[k], obs);
                        for (std::size_t h = 0; h < coeffs.size(); ++h)
                            see_pop_gap = std::max(
                                see_pop_gap,
                                std::abs(pops[h] - coeffs[h] * coeffs[h]));
                    }
                    log.metric(metrics, "see.population_match", see_pop_gap,
                               "weak_collapse_system");
                }
            }
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "run failed: %s\n", e.what());
        log.line(std::string("ERROR ") + e.what());
        metrics.write_file(opt.out_dir + "/metrics.txt");
        return 3;
    }

    metrics.write_file(opt.out_dir + "/metrics.txt");
    log.line("done");
    return 0;
}

} // namespace qmeas
