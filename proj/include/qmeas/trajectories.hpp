#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "qmeas/errors.hpp"
#include "qmeas/hydro.hpp"
#include "qmeas/polar.hpp"
#include "qmeas/rng.hpp"
#include "qmeas/wavefunction.hpp"

namespace qmeas {

enum class TrajectoryStatus { ok, near_node, left_grid };

enum class SampleMode { grid_cells, uniform, density_weighted };

struct SampleSpec {
    SampleMode mode = SampleMode::density_weighted;
    int count = 100;              // ignored for grid_cells
    std::uint64_t seed = 0;
    double support_eps = 1e-6;    // threshold defining D_0
};

/// Hydrodynamic trajectories phi_t(x) with their constant measure weights
/// R^2(x,0) dV. paths are indexed [trajectory][time][axis].
struct TrajectoryEnsemble {
    std::vector<std::vector<double>> initial_points;
    std::vector<std::vector<std::vector<double>>> paths;
    std::vector<double> weights;
    std::vector<double> times;
    std::vector<TrajectoryStatus> status;

    std::size_t size() const { return initial_points.size(); }
};

struct NoCrossingReport {
    bool order_preserved = true;       // 1D single-particle sorted order invariant
    double min_pairwise_distance = 0;  // over all times, configuration distance
    bool degenerate_input = false;     // coincident starts
    bool below_cell = false;           // min distance under one grid cell
};

namespace detail {

/// Multilinear interpolation of one velocity component; false if the cell
/// touches an invalid corner or lies outside the grid.
inline bool interp_velocity(const VelocityField& vf, const std::vector<double>& x, int axis,
                            double& out) {
    const SpatialGrid& g = vf.grid;
    const int rank = g.rank();
    std::vector<int> base(static_cast<std::size_t>(rank));
    std::vector<double> frac(static_cast<std::size_t>(rank));
    for (int j = 0; j < rank; ++j) {
        const Axis& ax = g.axis(j);
        const double u = (x[static_cast<std::size_t>(j)] - ax.x_min) / ax.spacing();
        if (u < 0.0 || u > static_cast<double>(ax.n - 1)) return false;
        int b = static_cast<int>(u);
        if (b >= ax.n - 1) b = ax.n - 2;
        base[static_cast<std::size_t>(j)] = b;
        frac[static_cast<std::size_t>(j)] = u - static_cast<double>(b);
    }
    double acc = 0.0;
    const int corners = 1 << rank;
    for (int c = 0; c < corners; ++c) {
        double w = 1.0;
        std::size_t flat = 0;
        for (int j = 0; j < rank; ++j) {
            const int bit = (c >> j) & 1;
            w *= bit ? frac[static_cast<std::size_t>(j)] : 1.0 - frac[static_cast<std::size_t>(j)];
            flat += static_cast<std::size_t>(base[static_cast<std::size_t>(j)] + bit) *
                    static_cast<std::size_t>(g.stride(j));
        }
        if (!vf.valid_mask[flat]) return false;
        acc += w * vf.v[static_cast<std::size_t>(axis)][flat];
    }
    out = acc;
    return true;
}

/// v(x, t) between two snapshot fields, linear in time.
inline bool interp_velocity_time(const VelocityField& a, const VelocityField& b, double theta,
                                 const std::vector<double>& x, std::vector<double>& out) {
    const int rank = a.grid.rank();
    out.resize(static_cast<std::size_t>(rank));
    for (int j = 0; j < rank; ++j) {
        double va = 0.0, vb = 0.0;
        if (!interp_velocity(a, x, j, va)) return false;
        if (theta > 0.0 && !interp_velocity(b, x, j, vb)) return false;
        out[static_cast<std::size_t>(j)] = (1.0 - theta) * va + theta * vb;
    }
    return true;
}

inline int worker_count() {
    if (const char* env = std::getenv("QMEAS_WORKERS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return 1;
}

} // namespace detail

/// Integrate dphi/dt = v(phi, t) with fixed-step RK4 at the snapshot cadence.
/// Velocity is multilinear in space and linear in time between snapshots.
/// Trajectories that reach the node buffer or leave the grid freeze in place
/// and keep their status for the rest of the run.
inline TrajectoryEnsemble integrate_trajectories(const std::vector<ManyBodyWavefunction>& snapshots,
                                                 const SampleSpec& spec,
                                                 double node_threshold = 1e-7) {
    if (snapshots.size() < 2) throw SpecError("integrate_trajectories: need at least 2 snapshots");
    const SpatialGrid& grid = snapshots.front().grid();
    for (const auto& s : snapshots) require_same_grid(s.grid(), grid, "integrate_trajectories");

    // Velocity fields per snapshot, computed once.
    std::vector<VelocityField> fields;
    fields.reserve(snapshots.size());
    for (const auto& s : snapshots)
        fields.push_back(velocity_field(polar_decompose(s, node_threshold), s.masses(), s.hbar()));

    // Sample D_0.
    const PolarFields polar0 = polar_decompose(snapshots.front(), node_threshold);
    const SupportMask d0 = compute_support(polar0, spec.support_eps);
    std::vector<std::size_t> cells;
    for (std::size_t i = 0; i < d0.mask.size(); ++i)
        if (d0.mask[i]) cells.push_back(i);
    if (cells.empty()) throw DegenerateStateError("integrate_trajectories: empty support D_0");

    TrajectoryEnsemble ens;
    const double dv = grid.cell_volume();
    Rng rng(spec.seed);

    const auto r2_at = [&](std::size_t flat) { return polar0.R[flat] * polar0.R[flat]; };

    switch (spec.mode) {
    case SampleMode::grid_cells:
        for (std::size_t flat : cells) {
            ens.initial_points.push_back(grid.point(grid.multi_index(flat)));
            ens.weights.push_back(r2_at(flat) * dv);
        }
        break;
    case SampleMode::uniform: {
        if (spec.count < 1) throw SpecError("integrate_trajectories: count must be >= 1");
        const double vol = static_cast<double>(cells.size()) * dv;
        for (int i = 0; i < spec.count; ++i) {
            const std::size_t flat = cells[static_cast<std::size_t>(
                rng.uniform() * static_cast<double>(cells.size()))];
            auto idx = grid.multi_index(flat);
            auto x = grid.point(idx);
            for (int j = 0; j < grid.rank(); ++j)
                x[static_cast<std::size_t>(j)] +=
                    (rng.uniform() - 0.5) * grid.axis(j).spacing();
            ens.initial_points.push_back(std::move(x));
            // Interpolated density would do as well; cell-center R^2 keeps
            // the weight definition aligned with the grid_cells mode.
            ens.weights.push_back(r2_at(flat) * vol / static_cast<double>(spec.count));
        }
        break;
    }
    case SampleMode::density_weighted: {
        if (spec.count < 1) throw SpecError("integrate_trajectories: count must be >= 1");
        std::vector<double> cum(cells.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            acc += r2_at(cells[i]) * dv;
            cum[i] = acc;
        }
        for (int i = 0; i < spec.count; ++i) {
            const std::size_t pick = rng.pick_weighted(cum);
            const std::size_t flat = cells[pick];
            auto idx = grid.multi_index(flat);
            auto x = grid.point(idx);
            for (int j = 0; j < grid.rank(); ++j)
                x[static_cast<std::size_t>(j)] +=
                    (rng.uniform() - 0.5) * grid.axis(j).spacing();
            ens.initial_points.push_back(std::move(x));
            ens.weights.push_back(acc / static_cast<double>(spec.count));
        }
        break;
    }
    }

    const std::size_t n_traj = ens.initial_points.size();
    ens.times.reserve(snapshots.size());
    for (const auto& s : snapshots) ens.times.push_back(s.time());
    ens.status.assign(n_traj, TrajectoryStatus::ok);
    ens.paths.assign(n_traj, {});

    const auto integrate_range = [&](std::size_t lo, std::size_t hi) {
        std::vector<double> k1, k2, k3, k4, xs;
        for (std::size_t ti = lo; ti < hi; ++ti) {
            std::vector<double> x = ens.initial_points[ti];
            auto& path = ens.paths[ti];
            path.reserve(snapshots.size());
            path.push_back(x);
            TrajectoryStatus st = TrajectoryStatus::ok;
            for (std::size_t s = 0; s + 1 < snapshots.size(); ++s) {
                if (st == TrajectoryStatus::ok) {
                    const double dt = ens.times[s + 1] - ens.times[s];
                    const VelocityField& fa = fields[s];
                    const VelocityField& fb = fields[s + 1];
                    bool alive = detail::interp_velocity_time(fa, fb, 0.0, x, k1);
                    if (alive) {
                        xs = x;
                        for (std::size_t j = 0; j < xs.size(); ++j) xs[j] += 0.5 * dt * k1[j];
                        alive = detail::interp_velocity_time(fa, fb, 0.5, xs, k2);
                    }
                    if (alive) {
                        xs = x;
                        for (std::size_t j = 0; j < xs.size(); ++j) xs[j] += 0.5 * dt * k2[j];
                        alive = detail::interp_velocity_time(fa, fb, 0.5, xs, k3);
                    }
                    if (alive) {
                        xs = x;
                        for (std::size_t j = 0; j < xs.size(); ++j) xs[j] += dt * k3[j];
                        alive = detail::interp_velocity_time(fa, fb, 1.0, xs, k4);
                    }
                    if (alive) {
                        bool inside = true;
                        for (std::size_t j = 0; j < x.size(); ++j) {
                            x[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
                            const Axis& ax = grid.axis(static_cast<int>(j));
                            if (x[j] < ax.x_min || x[j] > ax.x_max) inside = false;
                        }
                        if (!inside) st = TrajectoryStatus::left_grid;
                    } else {
                        st = TrajectoryStatus::near_node;
                    }
                }
                path.push_back(x);
            }
            ens.status[ti] = st;
        }
    };

    const int workers = std::min<int>(detail::worker_count(), static_cast<int>(n_traj));
    if (workers <= 1) {
        integrate_range(0, n_traj);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (n_traj + static_cast<std::size_t>(workers) - 1) /
                                  static_cast<std::size_t>(workers);
        for (int w = 0; w < workers; ++w) {
            const std::size_t lo = static_cast<std::size_t>(w) * chunk;
            const std::size_t hi = std::min(n_traj, lo + chunk);
            if (lo < hi) pool.emplace_back(integrate_range, lo, hi);
        }
        for (auto& t : pool) t.join();
    }
    return ens;
}

/// Corollary-1 check. For a single 1D particle the sorted order of positions
/// must be the same at every time; in general the minimum pairwise
/// configuration distance is reported.
inline NoCrossingReport check_no_crossing(const TrajectoryEnsemble& ens, double cell_size) {
    NoCrossingReport rep;
    if (ens.size() < 2) return rep;

    const std::size_t rank = ens.initial_points.front().size();
    rep.min_pairwise_distance = std::numeric_limits<double>::infinity();

    // Coincident starts make the order test meaningless.
    for (std::size_t i = 0; i < ens.size() && !rep.degenerate_input; ++i)
        for (std::size_t j = i + 1; j < ens.size(); ++j) {
            double d2 = 0.0;
            for (std::size_t a = 0; a < rank; ++a) {
                const double d = ens.initial_points[i][a] - ens.initial_points[j][a];
                d2 += d * d;
            }
            if (d2 == 0.0) {
                rep.degenerate_input = true;
                break;
            }
        }

    if (rank == 1) {
        std::vector<std::size_t> order(ens.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return ens.initial_points[a][0] < ens.initial_points[b][0];
        });
        for (std::size_t t = 0; t < ens.times.size() && rep.order_preserved; ++t)
            for (std::size_t r = 0; r + 1 < order.size(); ++r)
                if (ens.paths[order[r]][t][0] > ens.paths[order[r + 1]][t][0]) {
                    rep.order_preserved = false;
                    break;
                }
    }

    for (std::size_t t = 0; t < ens.times.size(); ++t) {
        if (rank == 1) {
            // Sorted sweep keeps this O(n log n) instead of all pairs.
            std::vector<double> xs(ens.size());
            for (std::size_t i = 0; i < ens.size(); ++i) xs[i] = ens.paths[i][t][0];
            std::sort(xs.begin(), xs.end());
            for (std::size_t i = 0; i + 1 < xs.size(); ++i)
                rep.min_pairwise_distance = std::min(rep.min_pairwise_distance, xs[i + 1] - xs[i]);
        } else {
            for (std::size_t i = 0; i < ens.size(); ++i)
                for (std::size_t j = i + 1; j < ens.size(); ++j) {
                    double d2 = 0.0;
                    for (std::size_t a = 0; a < rank; ++a) {
                        const double d = ens.paths[i][t][a] - ens.paths[j][t][a];
                        d2 += d * d;
                    }
                    rep.min_pairwise_distance =
                        std::min(rep.min_pairwise_distance, std::sqrt(d2));
                }
        }
    }
    rep.below_cell = rep.min_pairwise_distance < cell_size;
    return rep;
}

/// Theorem-1 check: push every cell of mask0 along the flow and compare the
/// image against maskT. Returns |phi_T(D_0) symdiff D_T| / |D_T|.
/// For rank-1 grids the image of each connected run of start cells is the
/// interval spanned by its endpoint trajectories, widened by half a cell of
/// the local stretch on each side (cells extend half a spacing past their
/// centers). Higher ranks mark endpoint cells only and need dense sampling.
inline double advect_support(const SupportMask& mask0, const TrajectoryEnsemble& ens,
                             const SupportMask& maskT) {
    const SpatialGrid& grid = mask0.grid;
    require_same_grid(grid, maskT.grid, "advect_support");
    if (ens.size() != mask0.count())
        throw SamplingError("advect_support: ensemble must start from every cell of mask0");
    if (ens.size() < 2) throw SamplingError("advect_support: too few trajectories");

    const std::size_t t_last = ens.times.size() - 1;
    std::vector<char> image(grid.size(), 0);

    if (grid.rank() == 1) {
        const Axis& ax = grid.axis(0);
        const double h = ax.spacing();
        // Trajectories were seeded in ascending cell order, one per cell.
        std::size_t run_start = 0;
        std::vector<std::pair<double, double>> intervals;
        for (std::size_t i = 0; i <= ens.size(); ++i) {
            const bool brk =
                i == ens.size() ||
                (i > run_start &&
                 ens.initial_points[i][0] - ens.initial_points[i - 1][0] > 1.5 * h);
            if (!brk) continue;
            const std::size_t lo = run_start, hi = i - 1;
            double a = ens.paths[lo][t_last][0];
            double b = ens.paths[hi][t_last][0];
            if (hi > lo) {
                const double j_lo =
                    std::abs(ens.paths[lo + 1][t_last][0] - a) / h;
                const double j_hi =
                    std::abs(b - ens.paths[hi - 1][t_last][0]) / h;
                a -= 0.5 * h * j_lo;
                b += 0.5 * h * j_hi;
            }
            if (a > b) std::swap(a, b);
            intervals.emplace_back(a, b);
            run_start = i;
        }
        for (int c = 0; c < ax.n; ++c) {
            const double x = ax.coord(c);
            for (const auto& [a, b] : intervals)
                if (x >= a && x <= b) {
                    image[static_cast<std::size_t>(c)] = 1;
                    break;
                }
        }
    } else {
        for (std::size_t i = 0; i < ens.size(); ++i) {
            std::vector<int> idx(static_cast<std::size_t>(grid.rank()));
            bool inside = true;
            for (int j = 0; j < grid.rank(); ++j) {
                const Axis& ax = grid.axis(j);
                const double u =
                    (ens.paths[i][t_last][static_cast<std::size_t>(j)] - ax.x_min) /
                    ax.spacing();
                const int c = static_cast<int>(std::lround(u));
                if (c < 0 || c >= ax.n) {
                    inside = false;
                    break;
                }
                idx[static_cast<std::size_t>(j)] = c;
            }
            if (inside) image[grid.flat_index(idx)] = 1;
        }
    }

    std::size_t sym = 0, target = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (image[i] != (maskT.mask[i] != 0)) ++sym;
        if (maskT.mask[i]) ++target;
    }
    if (target == 0) throw DegenerateStateError("advect_support: empty target support");
    return static_cast<double>(sym) / static_cast<double>(target);
}

namespace detail {

/// Exact integral of the multilinear interpolant of `field` over the
/// axis-aligned box given by per-axis intervals.
inline double integrate_box(const SpatialGrid& grid, const std::vector<double>& field,
                            const std::vector<std::pair<double, double>>& box) {
    const int rank = grid.rank();
    std::vector<std::vector<double>> w(static_cast<std::size_t>(rank));
    std::vector<int> first(static_cast<std::size_t>(rank)), count(static_cast<std::size_t>(rank));

    for (int j = 0; j < rank; ++j) {
        const Axis& ax = grid.axis(j);
        const double h = ax.spacing();
        double lo = std::max(box[static_cast<std::size_t>(j)].first, ax.x_min);
        double hi = std::min(box[static_cast<std::size_t>(j)].second, ax.x_max);
        if (!(hi > lo)) return 0.0;
        const int i0 = std::max(0, static_cast<int>(std::floor((lo - ax.x_min) / h)));
        const int i1 = std::min(ax.n - 1, static_cast<int>(std::ceil((hi - ax.x_min) / h)));
        first[static_cast<std::size_t>(j)] = i0;
        count[static_cast<std::size_t>(j)] = i1 - i0 + 1;
        auto& wj = w[static_cast<std::size_t>(j)];
        wj.assign(static_cast<std::size_t>(count[static_cast<std::size_t>(j)]), 0.0);
        // Hat-function integral over [lo,hi]: rising wing on [x_{i-1},x_i],
        // falling wing on [x_i,x_{i+1}].
        const auto wing = [&](double a, double b, double x_from, bool rising) {
            a = std::max(a, lo);
            b = std::min(b, hi);
            if (!(b > a)) return 0.0;
            const double ua = (a - x_from) / h, ub = (b - x_from) / h;
            // integral of u du scaled by h, u in [0,1]
            const double ramp = 0.5 * (ub * ub - ua * ua) * h;
            const double full = (b - a);
            return rising ? ramp : full - ramp;
        };
        for (int i = i0; i <= i1; ++i) {
            const double xi = ax.coord(i);
            double acc = 0.0;
            if (i > 0) acc += wing(xi - h, xi, xi - h, true);
            if (i + 1 < ax.n) acc += wing(xi, xi + h, xi, false);
            wj[static_cast<std::size_t>(i - i0)] = acc;
        }
    }

    double total = 0.0;
    std::vector<int> off(static_cast<std::size_t>(rank), 0);
    while (true) {
        double wprod = 1.0;
        std::size_t flat = 0;
        for (int j = 0; j < rank; ++j) {
            const int i = first[static_cast<std::size_t>(j)] + off[static_cast<std::size_t>(j)];
            wprod *= w[static_cast<std::size_t>(j)][static_cast<std::size_t>(
                off[static_cast<std::size_t>(j)])];
            flat += static_cast<std::size_t>(i) * static_cast<std::size_t>(grid.stride(j));
        }
        total += wprod * field[flat];
        int j = rank - 1;
        for (; j >= 0; --j) {
            if (++off[static_cast<std::size_t>(j)] < count[static_cast<std::size_t>(j)]) break;
            off[static_cast<std::size_t>(j)] = 0;
        }
        if (j < 0) break;
    }
    return total;
}

} // namespace detail

/// Corollary-2 check: the R^2 mass inside boxes spanned by trajectory pairs
/// stays constant along the flow. Boxes are built from consecutive pairs of
/// surviving trajectories ordered by start point. Returns the maximum
/// relative drift from the t=0 value.
inline double measure_conservation(const TrajectoryEnsemble& ens,
                                   const std::vector<ManyBodyWavefunction>& snapshots) {
    if (snapshots.size() != ens.times.size())
        throw TimeGridError("measure_conservation: snapshot/ensemble time mismatch");
    const SpatialGrid& grid = snapshots.front().grid();
    const int rank = grid.rank();

    std::vector<std::size_t> ok;
    for (std::size_t i = 0; i < ens.size(); ++i)
        if (ens.status[i] == TrajectoryStatus::ok) ok.push_back(i);
    if (ok.size() < 2) throw SamplingError("measure_conservation: fewer than two usable trajectories");
    std::stable_sort(ok.begin(), ok.end(), [&](std::size_t a, std::size_t b) {
        return ens.initial_points[a] < ens.initial_points[b];
    });

    // R^2 fields per snapshot.
    std::vector<std::vector<double>> r2(snapshots.size());
    for (std::size_t s = 0; s < snapshots.size(); ++s) {
        r2[s].resize(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i)
            r2[s][i] = std::norm(snapshots[s].amplitudes()[i]);
    }

    double worst = 0.0;
    std::size_t used_pairs = 0;
    std::vector<std::pair<double, double>> box(static_cast<std::size_t>(rank));
    for (std::size_t p = 0; p + 1 < ok.size(); ++p) {
        const std::size_t ia = ok[p], ib = ok[p + 1];
        double ref = 0.0;
        for (std::size_t s = 0; s < snapshots.size(); ++s) {
            bool valid = true;
            for (int j = 0; j < rank; ++j) {
                const double a = ens.paths[ia][s][static_cast<std::size_t>(j)];
                const double b = ens.paths[ib][s][static_cast<std::size_t>(j)];
                box[static_cast<std::size_t>(j)] = {std::min(a, b), std::max(a, b)};
                if (box[static_cast<std::size_t>(j)].second -
                        box[static_cast<std::size_t>(j)].first <
                    grid.axis(j).spacing())
                    valid = false;
            }
            if (!valid) {
                if (s == 0) {
                    ref = -1.0; // pair starts narrower than one cell; skip it
                    break;
                }
                throw ResolutionError("measure_conservation: box collapsed below one cell");
            }
            const double mass = detail::integrate_box(grid, r2[s], box);
            if (s == 0) {
                ref = mass;
                if (!(ref > 0.0)) {
                    ref = -1.0;
                    break;
                }
            } else {
                worst = std::max(worst, std::abs(mass - ref) / ref);
            }
        }
        if (ref > 0.0) ++used_pairs;
    }
    if (used_pairs == 0)
        throw ResolutionError("measure_conservation: no trajectory pair spans a usable box");
    return worst;
}

} // namespace qmeas
