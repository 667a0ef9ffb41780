#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ms/core.hpp"
#include "ms/duct.hpp"
#include "ms/io.hpp"

namespace ms {

// Inclusive range with epsilon-tolerant endpoint.
inline std::vector<double> make_range(double lo, double hi, double step) {
    if (!(step > 0.0)) throw std::invalid_argument("make_range: step must be positive");
    std::vector<double> out;
    for (int i = 0;; ++i) {
        const double v = lo + i * step;
        if (v > hi + step * 1e-9) break;
        out.push_back(v);
    }
    if (out.empty()) throw std::invalid_argument("make_range: empty range");
    return out;
}

struct SweepAxes {
    std::vector<double> h1;      // m
    std::vector<double> w2;      // m
    std::vector<double> w;       // m
    std::vector<double> freq;    // Hz

    void validate() const {
        auto check = [](const std::vector<double>& v, const char* name) {
            if (v.empty()) throw std::invalid_argument(std::string("axes: empty ") + name);
            for (size_t i = 1; i < v.size(); ++i)
                if (!(v[i] > v[i - 1]))
                    throw std::invalid_argument(std::string("axes: ") + name +
                                                " not strictly increasing");
        };
        check(h1, "h1");
        check(w2, "w2");
        check(w, "w");
        check(freq, "freq");
    }

    size_t size() const { return h1.size() * w2.size() * w.size() * freq.size(); }
};

// The design sweep: full phase-coverage grids at the single design slab gap.
inline SweepAxes default_design_axes(double design_freq_hz = 6000.0) {
    SweepAxes axes;
    axes.h1 = make_range(1.0e-3, 35.0e-3, 0.5e-3);
    axes.w2 = make_range(1.0e-3, 5.0e-3, 0.1e-3);
    axes.w = {3.0e-3};
    axes.freq = make_range(4000.0, 8000.0, 500.0);
    if (std::none_of(axes.freq.begin(), axes.freq.end(),
                     [&](double f) { return std::abs(f - design_freq_hz) < 1e-6; })) {
        axes.freq.push_back(design_freq_hz);
        std::sort(axes.freq.begin(), axes.freq.end());
    }
    return axes;
}

struct TableEntry {
    double h1 = 0.0, w2 = 0.0, w = 0.0, freq = 0.0;
    complexd r{0.0, 0.0}, t{0.0, 0.0};
};

struct CellResponseTable {
    SweepAxes axes;
    std::vector<TableEntry> entries;  // h1-major, then w2, w, freq
    UnitCellGeometry base;
    std::vector<std::string> failures;

    size_t index(size_t i_h1, size_t i_w2, size_t i_w, size_t i_f) const {
        return ((i_h1 * axes.w2.size() + i_w2) * axes.w.size() + i_w) * axes.freq.size() + i_f;
    }
    const TableEntry& at(size_t i_h1, size_t i_w2, size_t i_w, size_t i_f) const {
        return entries[index(i_h1, i_w2, i_w, i_f)];
    }
};

inline CellResponseTable build_table(const UnitCellGeometry& base, const SweepAxes& axes) {
    axes.validate();
    CellResponseTable table;
    table.axes = axes;
    table.base = base;
    table.entries.reserve(axes.size());
    for (double h1 : axes.h1)
        for (double w2 : axes.w2)
            for (double w : axes.w)
                for (double freq : axes.freq) {
                    TableEntry e;
                    e.h1 = h1;
                    e.w2 = w2;
                    e.w = w;
                    e.freq = freq;
                    UnitCellGeometry g = base;
                    g.h1 = h1;
                    g.w2 = w2;
                    g.w = w;
                    try {
                        const ScatteringResult s =
                            scattering(discretize(g), make_wave_context(freq).wavenumber);
                        e.r = s.r;
                        e.t = s.t;
                    } catch (const std::exception& ex) {
                        e.r = e.t = complexd(std::nan(""), std::nan(""));
                        std::ostringstream msg;
                        msg << "h1=" << h1 << " w2=" << w2 << " w=" << w << " f=" << freq << ": "
                            << ex.what();
                        table.failures.push_back(msg.str());
                    }
                    table.entries.push_back(e);
                }
    return table;
}

// Entry with the given geometry and frequency (1e-9 m / 1e-6 Hz match
// tolerance); used to re-evaluate a chosen cell at other table frequencies.
inline const TableEntry& lookup_entry(const CellResponseTable& table, double h1, double w2,
                                      double w, double freq_hz) {
    auto find_axis = [](const std::vector<double>& axis, double v, double tol,
                        const char* name) -> size_t {
        for (size_t i = 0; i < axis.size(); ++i)
            if (std::abs(axis[i] - v) <= tol) return i;
        throw std::out_of_range(std::string("lookup_entry: ") + name + " value not on table axis");
    };
    const size_t i_h1 = find_axis(table.axes.h1, h1, 1e-9, "h1");
    const size_t i_w2 = find_axis(table.axes.w2, w2, 1e-9, "w2");
    const size_t i_w = find_axis(table.axes.w, w, 1e-9, "w");
    const size_t i_f = find_axis(table.axes.freq, freq_hz, 1e-6, "freq");
    return table.at(i_h1, i_w2, i_w, i_f);
}

// Length of the minimal circular arc containing all wrapped phases:
// 2*pi minus the largest gap between adjacent sorted phases.
inline double coverage_span(const std::vector<double>& phases) {
    if (phases.size() < 2) throw std::domain_error("coverage_span: need at least 2 samples");
    std::vector<double> ph;
    ph.reserve(phases.size());
    for (double p : phases) {
        double v = wrap_phase(p);
        if (v < 0.0) v += kTwoPi;
        ph.push_back(v);
    }
    std::sort(ph.begin(), ph.end());
    double max_gap = ph.front() + kTwoPi - ph.back();
    for (size_t i = 1; i < ph.size(); ++i) max_gap = std::max(max_gap, ph[i] - ph[i - 1]);
    return kTwoPi - max_gap;
}

struct CellSelection {
    double h1 = 0.0, w2 = 0.0, w = 0.0;
    complexd achieved_r{0.0, 0.0}, achieved_t{0.0, 0.0};
    double phase_error_r = 0.0, phase_error_t = 0.0;
};

struct InfeasibleSplitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Exact arg-min of the combined wrapped phase distance over all table
// entries at the query frequency; ties broken by smaller h1, then w2, then w.
inline CellSelection select_cell(const CellResponseTable& table, double target_phi_r,
                                 double target_phi_t, double freq_hz,
                                 std::optional<double> amplitude_split = std::nullopt) {
    const TableEntry* best = nullptr;
    double best_cost = 0.0;
    bool any_at_freq = false;
    double nearest_split = 0.0;
    double nearest_split_dist = std::numeric_limits<double>::infinity();

    for (const TableEntry& e : table.entries) {
        if (std::abs(e.freq - freq_hz) > 1e-6) continue;
        any_at_freq = true;
        if (amplitude_split) {
            const double split = std::norm(e.t);
            const double dist = std::abs(split - *amplitude_split);
            if (dist < nearest_split_dist) {
                nearest_split_dist = dist;
                nearest_split = split;
            }
            if (dist > 0.1 + 1e-12) continue;
        }
        const double cost = phase_distance(target_phi_r, std::arg(e.r)) +
                            phase_distance(target_phi_t, std::arg(e.t));
        bool take = false;
        if (!best || cost < best_cost) {
            take = true;
        } else if (cost == best_cost) {
            take = e.h1 < best->h1 || (e.h1 == best->h1 && e.w2 < best->w2) ||
                   (e.h1 == best->h1 && e.w2 == best->w2 && e.w < best->w);
        }
        if (take) {
            best = &e;
            best_cost = cost;
        }
    }
    if (!any_at_freq)
        throw std::invalid_argument("select_cell: table has no entries at the query frequency");
    if (!best)
        throw InfeasibleSplitError(
            "select_cell: no cell within +-0.1 of requested |t|^2 split; nearest achievable "
            "split is " +
            fmt_g12(nearest_split));

    CellSelection sel;
    sel.h1 = best->h1;
    sel.w2 = best->w2;
    sel.w = best->w;
    sel.achieved_r = best->r;
    sel.achieved_t = best->t;
    sel.phase_error_r = phase_distance(target_phi_r, std::arg(best->r));
    sel.phase_error_t = phase_distance(target_phi_t, std::arg(best->t));
    return sel;
}

// ---- persistence -----------------------------------------------------------

inline std::string serialize_table(const CellResponseTable& table) {
    std::string out = "h1_mm,w2_mm,w_mm,freq_hz,re_r,im_r,re_t,im_t\n";
    for (const TableEntry& e : table.entries) {
        out += fmt_g12(e.h1 * 1e3) + "," + fmt_g12(e.w2 * 1e3) + "," + fmt_g12(e.w * 1e3) + "," +
               fmt_g12(e.freq) + "," + fmt_g12(e.r.real()) + "," + fmt_g12(e.r.imag()) + "," +
               fmt_g12(e.t.real()) + "," + fmt_g12(e.t.imag()) + "\n";
    }
    return out;
}

inline std::string table_hash(const CellResponseTable& table) {
    return fnv1a64_hex(serialize_table(table));
}

inline CellResponseTable parse_table(const std::string& csv, const UnitCellGeometry& base) {
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line) || line != "h1_mm,w2_mm,w_mm,freq_hz,re_r,im_r,re_t,im_t")
        throw std::runtime_error("parse_table: bad header");

    std::vector<TableEntry> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        double v[8];
        for (int i = 0; i < 8; ++i) {
            if (!std::getline(ls, cell, ',')) throw std::runtime_error("parse_table: short row");
            v[i] = std::stod(cell);
        }
        TableEntry e;
        e.h1 = v[0] * 1e-3;
        e.w2 = v[1] * 1e-3;
        e.w = v[2] * 1e-3;
        e.freq = v[3];
        e.r = complexd(v[4], v[5]);
        e.t = complexd(v[6], v[7]);
        rows.push_back(e);
    }

    auto collect_axis = [](std::vector<double> vals) {
        std::sort(vals.begin(), vals.end());
        std::vector<double> out;
        for (double v : vals)
            if (out.empty() || std::abs(v - out.back()) > 1e-12) out.push_back(v);
        return out;
    };
    std::vector<double> h1s, w2s, ws, fs;
    for (const TableEntry& e : rows) {
        h1s.push_back(e.h1);
        w2s.push_back(e.w2);
        ws.push_back(e.w);
        fs.push_back(e.freq);
    }

    CellResponseTable table;
    table.base = base;
    table.axes.h1 = collect_axis(h1s);
    table.axes.w2 = collect_axis(w2s);
    table.axes.w = collect_axis(ws);
    table.axes.freq = collect_axis(fs);
    if (rows.size() != table.axes.size())
        throw std::runtime_error("parse_table: incomplete Cartesian grid");

    auto axis_index = [](const std::vector<double>& axis, double v) {
        for (size_t i = 0; i < axis.size(); ++i)
            if (std::abs(axis[i] - v) <= 1e-12) return i;
        throw std::runtime_error("parse_table: value off axis");
    };
    table.entries.resize(rows.size());
    std::vector<bool> seen(rows.size(), false);
    for (const TableEntry& e : rows) {
        const size_t idx =
            table.index(axis_index(table.axes.h1, e.h1), axis_index(table.axes.w2, e.w2),
                        axis_index(table.axes.w, e.w), axis_index(table.axes.freq, e.freq));
        if (seen[idx]) throw std::runtime_error("parse_table: duplicate grid point");
        seen[idx] = true;
        table.entries[idx] = e;
    }
    return table;
}

// Cache key over everything that determines table content.
inline std::string table_cache_key(const UnitCellGeometry& base, const SweepAxes& axes) {
    std::string s = "table-v1";
    auto add_axis = [&s](const char* name, const std::vector<double>& axis) {
        s += std::string("|") + name + ":";
        for (double v : axis) s += fmt_g12(v) + ",";
    };
    add_axis("h1", axes.h1);
    add_axis("w2", axes.w2);
    add_axis("w", axes.w);
    add_axis("f", axes.freq);
    s += "|geom:h2=" + fmt_g12(base.h2) + ",t=" + fmt_g12(base.t) + ",h4=" + fmt_g12(base.h4) +
         ",L=" + fmt_g12(base.L) + ",D=" + fmt_g12(base.D) + ",n=" + std::to_string(base.n_plates) +
         ",h=" + fmt_g12(base.h_upper) + ",outlet=" + fmt_g12(base.outlet_length) +
         ",ecf=" + fmt_g12(base.end_correction_factor);
    return fnv1a64_hex(s);
}

// Returns the cached table when present and parseable, else builds and
// caches. The result always goes through the CSV round-trip, so cache hits
// and fresh builds are bit-identical downstream.
inline CellResponseTable load_or_build_table(const std::filesystem::path& cache_dir,
                                             const UnitCellGeometry& base, const SweepAxes& axes) {
    if (!cache_dir.empty()) {
        const std::filesystem::path file = cache_dir / (table_cache_key(base, axes) + ".csv");
        if (std::filesystem::exists(file)) {
            try {
                return parse_table(read_file(file), base);
            } catch (const std::exception&) {
                // fall through to rebuild
            }
        }
        const CellResponseTable table = build_table(base, axes);
        const std::string csv = serialize_table(table);
        atomic_write_file(file, csv);
        return parse_table(csv, base);
    }
    return parse_table(serialize_table(build_table(base, axes)), base);
}

// Spearman rank correlation with average ranks for ties.
inline double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw std::invalid_argument("spearman: need two equal-length series");
    auto ranks = [](const std::vector<double>& v) {
        const size_t n = v.size();
        std::vector<size_t> order(n);
        std::iota(order.begin(), order.end(), size_t{0});
        std::sort(order.begin(), order.end(), [&v](size_t a, size_t b) { return v[a] < v[b]; });
        std::vector<double> rank(n);
        size_t i = 0;
        while (i < n) {
            size_t j = i;
            while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
            const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
            for (size_t k = i; k <= j; ++k) rank[order[k]] = avg;
            i = j + 1;
        }
        return rank;
    };
    const std::vector<double> rx = ranks(xs), ry = ranks(ys);
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("spearman: constant series");
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace ms
