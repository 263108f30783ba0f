#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "qmeas/errors.hpp"
#include "qmeas/polar.hpp"
#include "qmeas/trajectories.hpp"
#include "qmeas/wavefunction.hpp"

namespace qmeas {
namespace io {

/// Shortest round-trippable decimal form.
inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// Snapshot rows: coordinates, Re psi, Im psi, R, S, support flag. Rows are
/// in grid flat order so files can be mapped back onto the grid.
inline void write_snapshot(std::ostream& os, const ManyBodyWavefunction& psi,
                           const PolarFields& polar, const SupportMask& support) {
    const SpatialGrid& grid = psi.grid();
    for (int j = 0; j < grid.rank(); ++j) os << "x" << (j + 1) << '\t';
    os << "re_psi\tim_psi\tR\tS\tsupport\n";
    std::vector<int> idx(static_cast<std::size_t>(grid.rank()), 0);
    std::size_t flat = 0;
    do {
        for (int j = 0; j < grid.rank(); ++j)
            os << fmt(grid.axis(j).coord(idx[static_cast<std::size_t>(j)])) << '\t';
        const Complex& a = psi.amplitudes()[flat];
        os << fmt(a.real()) << '\t' << fmt(a.imag()) << '\t' << fmt(polar.R[flat]) << '\t'
           << fmt(polar.node_mask[flat] ? 0.0 : polar.S[flat]) << '\t'
           << (support.mask[flat] ? 1 : 0) << '\n';
        ++flat;
    } while (grid.next_index(idx));
}

inline void write_snapshot_file(const std::string& path, const ManyBodyWavefunction& psi,
                                double support_eps = 1e-6) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot open " + path + " for writing");
    const PolarFields polar = polar_decompose(psi);
    const SupportMask support = compute_support(polar, support_eps);
    write_snapshot(os, psi, polar, support);
}

/// Read the support-flag column of a snapshot-format file as a region mask.
inline std::vector<char> read_mask_file(const std::string& path, const SpatialGrid& grid) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open mask file " + path);
    std::string line;
    if (!std::getline(is, line)) throw ConfigError("mask file is empty: " + path);
    std::vector<char> mask;
    mask.reserve(grid.size());
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto tab = line.find_last_of('\t');
        if (tab == std::string::npos) throw ConfigError("malformed mask row in " + path);
        mask.push_back(line.substr(tab + 1) != "0");
    }
    if (mask.size() != grid.size())
        throw GridMismatchError("mask file row count does not match the grid: " + path);
    return mask;
}

inline const char* status_name(TrajectoryStatus s) {
    switch (s) {
    case TrajectoryStatus::ok: return "ok";
    case TrajectoryStatus::near_node: return "near_node";
    default: return "left_grid";
    }
}

/// Trajectory rows: id, t, coordinates..., weight, status.
inline void write_trajectories(std::ostream& os, const TrajectoryEnsemble& ens) {
    const std::size_t rank = ens.initial_points.empty() ? 0 : ens.initial_points.front().size();
    os << "id\tt";
    for (std::size_t j = 0; j < rank; ++j) os << "\tx" << (j + 1);
    os << "\tweight\tstatus\n";
    for (std::size_t i = 0; i < ens.size(); ++i)
        for (std::size_t s = 0; s < ens.times.size(); ++s) {
            os << i << '\t' << fmt(ens.times[s]);
            for (std::size_t j = 0; j < rank; ++j) os << '\t' << fmt(ens.paths[i][s][j]);
            os << '\t' << fmt(ens.weights[i]) << '\t' << status_name(ens.status[i]) << '\n';
        }
}

/// Flat key/number metrics, one per line, in key order.
class Metrics {
public:
    void put(const std::string& key, double value) { values_[key] = value; }
    void put(const std::string& key, bool value) { values_[key] = value ? 1.0 : 0.0; }
    double get(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("metric not present: " + key);
        return it->second;
    }
    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::map<std::string, double>& all() const { return values_; }

    void write(std::ostream& os) const {
        for (const auto& [k, v] : values_) os << k << ' ' << fmt(v) << '\n';
    }
    void write_file(const std::string& path) const {
        std::ofstream os(path);
        if (!os) throw ConfigError("cannot open " + path + " for writing");
        write(os);
    }

private:
    std::map<std::string, double> values_;
};

} // namespace io
} // namespace qmeas
