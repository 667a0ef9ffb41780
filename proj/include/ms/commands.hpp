#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "ms/cell_table.hpp"
#include "ms/core.hpp"
#include "ms/duct.hpp"
#include "ms/field_verify.hpp"
#include "ms/iasa.hpp"
#include "ms/io.hpp"
#include "ms/profiles.hpp"

namespace ms {

using nlohmann::json;

// Configuration problems exit with code 1 (vs 2 for met-tolerance failures).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flag values that win over the config file.
struct CliOverrides {
    std::optional<std::vector<double>> freqs;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> cache_dir;
    bool strict = false;
};

// ---- config plumbing --------------------------------------------------------

namespace cfg {

inline void require_known(const json& obj, const std::set<std::string>& allowed,
                          const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + ": expected a JSON object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

inline double number(const json& obj, const char* key, double dflt, const std::string& where) {
    if (!obj.contains(key)) return dflt;
    const json& v = obj.at(key);
    if (!v.is_number()) throw ConfigError(where + ": key '" + key + "' must be a number");
    return v.get<double>();
}

inline int integer(const json& obj, const char* key, int dflt, const std::string& where) {
    if (!obj.contains(key)) return dflt;
    const json& v = obj.at(key);
    if (!v.is_number_integer()) throw ConfigError(where + ": key '" + key + "' must be an integer");
    return v.get<int>();
}

inline bool boolean(const json& obj, const char* key, bool dflt, const std::string& where) {
    if (!obj.contains(key)) return dflt;
    const json& v = obj.at(key);
    if (!v.is_boolean()) throw ConfigError(where + ": key '" + key + "' must be a boolean");
    return v.get<bool>();
}

inline std::string text(const json& obj, const char* key, const std::string& dflt,
                        const std::string& where) {
    if (!obj.contains(key)) return dflt;
    const json& v = obj.at(key);
    if (!v.is_string()) throw ConfigError(where + ": key '" + key + "' must be a string");
    return v.get<std::string>();
}

inline std::vector<double> number_list(const json& obj, const char* key,
                                       std::vector<double> dflt, const std::string& where) {
    if (!obj.contains(key)) return dflt;
    const json& v = obj.at(key);
    if (!v.is_array() || v.empty())
        throw ConfigError(where + ": key '" + key + "' must be a non-empty array of numbers");
    std::vector<double> out;
    for (const json& e : v) {
        if (!e.is_number())
            throw ConfigError(where + ": key '" + key + "' must contain only numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

struct Range {
    double lo = 0.0, hi = 0.0, step = 0.0;
};

inline Range range(const json& obj, const char* key, Range dflt, const std::string& where) {
    if (!obj.contains(key)) return dflt;
    const json& v = obj.at(key);
    const std::string sub = where + "." + key;
    require_known(v, {"lo", "hi", "step"}, sub);
    Range r;
    r.lo = number(v, "lo", dflt.lo, sub);
    r.hi = number(v, "hi", dflt.hi, sub);
    r.step = number(v, "step", dflt.step, sub);
    if (!(r.step > 0.0) || !(r.hi >= r.lo))
        throw ConfigError(sub + ": requires lo <= hi and step > 0");
    return r;
}

inline UnitCellGeometry geometry(const json& obj, const std::string& where) {
    UnitCellGeometry g;
    if (!obj.contains("geometry")) return g;
    const json& v = obj.at("geometry");
    const std::string sub = where + ".geometry";
    require_known(v,
                  {"h2_mm", "w_mm", "t_mm", "h4_mm", "L_mm", "D_mm", "n_plates", "h_upper_mm",
                   "outlet_mm", "end_correction"},
                  sub);
    g.h2 = number(v, "h2_mm", g.h2 * 1e3, sub) * 1e-3;
    g.w = number(v, "w_mm", g.w * 1e3, sub) * 1e-3;
    g.t = number(v, "t_mm", g.t * 1e3, sub) * 1e-3;
    g.h4 = number(v, "h4_mm", g.h4 * 1e3, sub) * 1e-3;
    g.L = number(v, "L_mm", g.L * 1e3, sub) * 1e-3;
    g.D = number(v, "D_mm", g.D * 1e3, sub) * 1e-3;
    g.n_plates = integer(v, "n_plates", g.n_plates, sub);
    g.h_upper = number(v, "h_upper_mm", g.h_upper * 1e3, sub) * 1e-3;
    g.outlet_length = number(v, "outlet_mm", g.outlet_length * 1e3, sub) * 1e-3;
    g.end_correction_factor = number(v, "end_correction", g.end_correction_factor, sub);
    return g;
}

inline json geometry_json(const UnitCellGeometry& g) {
    return json{{"h2_mm", g.h2 * 1e3},
                {"w_mm", g.w * 1e3},
                {"t_mm", g.t * 1e3},
                {"h4_mm", g.h4 * 1e3},
                {"L_mm", g.L * 1e3},
                {"D_mm", g.D * 1e3},
                {"n_plates", g.n_plates},
                {"h_upper_mm", g.h_upper * 1e3},
                {"outlet_mm", g.outlet_length * 1e3},
                {"end_correction", g.end_correction_factor}};
}

inline json range_json(const Range& r) {
    return json{{"lo", r.lo}, {"hi", r.hi}, {"step", r.step}};
}

}  // namespace cfg

inline json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& ex) {
        throw ConfigError(std::string("config ") + path + ": " + ex.what());
    }
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
    atomic_write_file(path, j.dump(2) + "\n");
}

// The experiment identity: hash of the canonical dump of the effective
// parameters (defaults and flag overrides applied; output/cache locations
// excluded so relocating a run keeps its hash).
inline std::string config_hash(const json& effective) { return fnv1a64_hex(effective.dump(2)); }

struct RunContext {
    json effective;
    std::string hash;
    std::filesystem::path run_dir;
    std::filesystem::path cache_dir;
    bool strict = false;
};

inline RunContext make_run_context(const std::string& command, const json& effective,
                                   const json& user, const CliOverrides& overrides,
                                   const std::string& where) {
    RunContext ctx;
    ctx.effective = effective;
    ctx.hash = config_hash(effective);
    const std::string out =
        overrides.out_dir ? *overrides.out_dir : cfg::text(user, "out_dir", "out", where);
    const std::string cache =
        overrides.cache_dir ? *overrides.cache_dir : cfg::text(user, "cache_dir", "", where);
    ctx.run_dir = std::filesystem::path(out) / command / ctx.hash;
    ctx.cache_dir = cache;
    ctx.strict = overrides.strict || cfg::boolean(user, "strict", false, where);
    std::filesystem::create_directories(ctx.run_dir);
    return ctx;
}

inline void write_manifest(const RunContext& ctx, const std::string& command,
                           const std::string& table_digest) {
    write_json_file(ctx.run_dir / "manifest.json",
                    json{{"command", command},
                         {"config_hash", ctx.hash},
                         {"table_hash", table_digest},
                         {"version", std::string(kToolkitVersion)}});
    write_json_file(ctx.run_dir / "config.json", ctx.effective);
}

// ---- shared artifact writers ------------------------------------------------

inline std::string intensity_map_csv(const IntensityMap& map) {
    std::string out = "x_mm,z_mm,intensity\n";
    for (size_t iz = 0; iz < map.z.size(); ++iz)
        for (size_t ix = 0; ix < map.x.size(); ++ix)
            out += fmt_g12(map.x[ix] * 1e3) + "," + fmt_g12(map.z[iz] * 1e3) + "," +
                   fmt_g12(map.at(iz, ix)) + "\n";
    return out;
}

// z rows (top = z_start) by x columns.
inline void write_intensity_pgm(const std::filesystem::path& path, const IntensityMap& map) {
    write_pgm(path, map.values, static_cast<int>(map.x.size()), static_cast<int>(map.z.size()));
}

inline std::string grid_csv(const ArrayLayout& layout, const std::vector<double>& values,
                            const std::string& value_header, double scale = 1.0) {
    std::string out = "x_mm,y_mm," + value_header + "\n";
    for (int iy = 0; iy < layout.ny; ++iy)
        for (int ix = 0; ix < layout.nx; ++ix)
            out += fmt_g12(layout.x_of(ix) * 1e3) + "," + fmt_g12(layout.y_of(iy) * 1e3) + "," +
                   fmt_g12(values[static_cast<size_t>(iy) * layout.nx + ix] * scale) + "\n";
    return out;
}

// Phases rendered on an absolute (-pi, pi] -> [0, 1] scale.
inline std::vector<double> phase_to_unit(const std::vector<double>& phases) {
    std::vector<double> out(phases.size());
    for (size_t i = 0; i < phases.size(); ++i) out[i] = (wrap_phase(phases[i]) + kPi) / kTwoPi;
    return out;
}

inline void add_frequency(std::vector<double>& axis, double f) {
    for (double v : axis)
        if (std::abs(v - f) < 1e-6) return;
    axis.push_back(f);
    std::sort(axis.begin(), axis.end());
}

inline std::string freq_tag(double f) { return fmt_g12(f); }

// ---- sweep ------------------------------------------------------------------

struct SweepParams {
    std::vector<double> freqs;
    cfg::Range h1_mm{1.0, 35.0, 0.5};
    cfg::Range w2_mm{1.0, 5.0, 0.1};
    std::vector<double> w_mm{3.0};
    double coverage_step_mm = 0.1;
    double coverage_w2_ref_mm = 1.0;
    double coverage_h1_ref_mm = 31.0;
    UnitCellGeometry geom;
};

inline SweepParams parse_sweep(const json& user, const CliOverrides& overrides) {
    const std::string where = "sweep";
    cfg::require_known(user,
                       {"frequencies_hz", "h1_mm", "w2_mm", "w_mm", "coverage_step_mm",
                        "coverage_w2_ref_mm", "coverage_h1_ref_mm", "geometry", "out_dir",
                        "cache_dir", "strict"},
                       where);
    SweepParams p;
    p.freqs = cfg::number_list(user, "frequencies_hz", make_range(4000.0, 8000.0, 500.0), where);
    if (overrides.freqs) p.freqs = *overrides.freqs;
    p.h1_mm = cfg::range(user, "h1_mm", p.h1_mm, where);
    p.w2_mm = cfg::range(user, "w2_mm", p.w2_mm, where);
    p.w_mm = cfg::number_list(user, "w_mm", p.w_mm, where);
    p.coverage_step_mm = cfg::number(user, "coverage_step_mm", p.coverage_step_mm, where);
    p.coverage_w2_ref_mm = cfg::number(user, "coverage_w2_ref_mm", p.coverage_w2_ref_mm, where);
    p.coverage_h1_ref_mm = cfg::number(user, "coverage_h1_ref_mm", p.coverage_h1_ref_mm, where);
    p.geom = cfg::geometry(user, where);

    // Surface invariant violations (e.g. h1 too deep for the cell body)
    // before building thousands of entries.
    for (double h1_mm : {p.h1_mm.lo, p.h1_mm.hi})
        for (double w2_mm : {p.w2_mm.lo, p.w2_mm.hi})
            for (double w_mm : {p.w_mm.front(), p.w_mm.back()}) {
                UnitCellGeometry g = p.geom;
                g.h1 = h1_mm * 1e-3;
                g.w2 = w2_mm * 1e-3;
                g.w = w_mm * 1e-3;
                try {
                    g.validate();
                } catch (const std::exception& ex) {
                    throw ConfigError(std::string("sweep: axis bound rejected: ") + ex.what());
                }
            }
    return p;
}

inline json sweep_effective(const SweepParams& p) {
    return json{{"frequencies_hz", p.freqs},
                {"h1_mm", cfg::range_json(p.h1_mm)},
                {"w2_mm", cfg::range_json(p.w2_mm)},
                {"w_mm", p.w_mm},
                {"coverage_step_mm", p.coverage_step_mm},
                {"coverage_w2_ref_mm", p.coverage_w2_ref_mm},
                {"coverage_h1_ref_mm", p.coverage_h1_ref_mm},
                {"geometry", cfg::geometry_json(p.geom)}};
}

inline int cmd_sweep(const json& user, const CliOverrides& overrides, std::ostream& log) {
    const SweepParams p = parse_sweep(user, overrides);
    const RunContext ctx = make_run_context("sweep", sweep_effective(p), user, overrides, "sweep");

    SweepAxes axes;
    axes.h1 = make_range(p.h1_mm.lo * 1e-3, p.h1_mm.hi * 1e-3, p.h1_mm.step * 1e-3);
    axes.w2 = make_range(p.w2_mm.lo * 1e-3, p.w2_mm.hi * 1e-3, p.w2_mm.step * 1e-3);
    for (double w : p.w_mm) axes.w.push_back(w * 1e-3);
    axes.freq = p.freqs;
    std::sort(axes.freq.begin(), axes.freq.end());
    axes.validate();

    const CellResponseTable table = load_or_build_table(ctx.cache_dir, p.geom, axes);
    atomic_write_file(ctx.run_dir / "table.csv", serialize_table(table));

    // Coverage spans from dedicated fine sweeps: reflection phase over h1 at
    // the reference w2, transmission phase over w2 at the reference h1.
    std::string coverage = "freq_hz,reflection_span_rad,transmission_span_rad,step_mm\n";
    const std::vector<double> h1_fine =
        make_range(p.h1_mm.lo * 1e-3, p.h1_mm.hi * 1e-3, p.coverage_step_mm * 1e-3);
    const std::vector<double> w2_fine =
        make_range(p.w2_mm.lo * 1e-3, p.w2_mm.hi * 1e-3, p.coverage_step_mm * 1e-3);
    for (double f : axes.freq) {
        const double k0 = make_wave_context(f).wavenumber;
        std::vector<double> phi_r, phi_t;
        for (double h1 : h1_fine) {
            UnitCellGeometry g = p.geom;
            g.h1 = h1;
            g.w2 = p.coverage_w2_ref_mm * 1e-3;
            phi_r.push_back(std::arg(scattering(discretize(g), k0).r));
        }
        for (double w2 : w2_fine) {
            UnitCellGeometry g = p.geom;
            g.h1 = p.coverage_h1_ref_mm * 1e-3;
            g.w2 = w2;
            phi_t.push_back(std::arg(scattering(discretize(g), k0).t));
        }
        coverage += fmt_g12(f) + "," + fmt_g12(coverage_span(phi_r)) + "," +
                    fmt_g12(coverage_span(phi_t)) + "," + fmt_g12(p.coverage_step_mm) + "\n";
    }
    atomic_write_file(ctx.run_dir / "coverage.csv", coverage);

    // Phase maps over (h1, w2) at the frequency nearest 6 kHz, first w value.
    size_t i_f = 0;
    for (size_t i = 1; i < axes.freq.size(); ++i)
        if (std::abs(axes.freq[i] - 6000.0) < std::abs(axes.freq[i_f] - 6000.0)) i_f = i;
    std::vector<double> map_r, map_t;
    for (size_t i_h1 = 0; i_h1 < axes.h1.size(); ++i_h1)
        for (size_t i_w2 = 0; i_w2 < axes.w2.size(); ++i_w2) {
            const TableEntry& e = table.at(i_h1, i_w2, 0, i_f);
            map_r.push_back(std::arg(e.r));
            map_t.push_back(std::arg(e.t));
        }
    write_pgm(ctx.run_dir / "phase_r.pgm", phase_to_unit(map_r),
              static_cast<int>(axes.w2.size()), static_cast<int>(axes.h1.size()));
    write_pgm(ctx.run_dir / "phase_t.pgm", phase_to_unit(map_t),
              static_cast<int>(axes.w2.size()), static_cast<int>(axes.h1.size()));

    write_manifest(ctx, "sweep", table_hash(table));
    log << "sweep: " << table.entries.size() << " entries, "
        << (table.failures.empty() ? "no failures" : std::to_string(table.failures.size()) +
                                                         " failed geometries")
        << "; artifacts in " << ctx.run_dir.string() << "\n";
    return 0;
}

// ---- design -----------------------------------------------------------------

struct DesignParams {
    double design_freq = 6000.0;
    std::vector<double> eval_freqs{6000.0};
    int n_cells = 24;
    double pitch_mm = 14.3;
    double focus_z_mm = 160.0;
    double focus_x_mm = 0.0;
    std::string reflection_mode = "diffusion";  // or "steer"
    double steer_angle_deg = 45.0;
    cfg::Range z_range_mm{2.0, 450.0, 2.0};
    int supersample = 8;
    double focus_tol_mm = 0.0;  // 0 = one wavelength at the design frequency
    double steer_tol_deg = 3.0;
    double side_lobe_max = 0.5;
    std::optional<double> amplitude_split;
    UnitCellGeometry geom;
};

inline DesignParams parse_design(const json& user, const CliOverrides& overrides) {
    const std::string where = "design";
    cfg::require_known(user,
                       {"design_frequency_hz", "eval_frequencies_hz", "n_cells", "pitch_mm",
                        "transmission_focus", "reflection", "z_range_mm", "supersample",
                        "focus_tol_mm", "steer_tol_deg", "side_lobe_max", "amplitude_split",
                        "geometry", "out_dir", "cache_dir", "strict"},
                       where);
    DesignParams p;
    p.design_freq = cfg::number(user, "design_frequency_hz", p.design_freq, where);
    p.eval_freqs = cfg::number_list(user, "eval_frequencies_hz", {p.design_freq}, where);
    if (overrides.freqs && !overrides.freqs->empty()) {
        p.design_freq = overrides.freqs->front();
        p.eval_freqs = *overrides.freqs;
    }
    add_frequency(p.eval_freqs, p.design_freq);  // gates always run at the design point
    p.n_cells = cfg::integer(user, "n_cells", p.n_cells, where);
    p.pitch_mm = cfg::number(user, "pitch_mm", p.pitch_mm, where);
    if (user.contains("transmission_focus")) {
        const json& tf = user.at("transmission_focus");
        cfg::require_known(tf, {"z_mm", "x_mm"}, where + ".transmission_focus");
        p.focus_z_mm = cfg::number(tf, "z_mm", p.focus_z_mm, where);
        p.focus_x_mm = cfg::number(tf, "x_mm", p.focus_x_mm, where);
    }
    if (user.contains("reflection")) {
        const json& rf = user.at("reflection");
        cfg::require_known(rf, {"mode", "angle_deg"}, where + ".reflection");
        p.reflection_mode = cfg::text(rf, "mode", p.reflection_mode, where);
        p.steer_angle_deg = cfg::number(rf, "angle_deg", p.steer_angle_deg, where);
        if (p.reflection_mode != "diffusion" && p.reflection_mode != "steer")
            throw ConfigError("design.reflection: mode must be 'diffusion' or 'steer'");
    }
    p.z_range_mm = cfg::range(user, "z_range_mm", p.z_range_mm, where);
    p.supersample = cfg::integer(user, "supersample", p.supersample, where);
    p.focus_tol_mm = cfg::number(user, "focus_tol_mm", p.focus_tol_mm, where);
    p.steer_tol_deg = cfg::number(user, "steer_tol_deg", p.steer_tol_deg, where);
    p.side_lobe_max = cfg::number(user, "side_lobe_max", p.side_lobe_max, where);
    if (user.contains("amplitude_split") && !user.at("amplitude_split").is_null())
        p.amplitude_split = cfg::number(user, "amplitude_split", 0.5, where);
    p.geom = cfg::geometry(user, where);
    if (p.n_cells < 1) throw ConfigError("design: n_cells must be >= 1");
    return p;
}

inline json design_effective(const DesignParams& p) {
    json j{{"design_frequency_hz", p.design_freq},
           {"eval_frequencies_hz", p.eval_freqs},
           {"n_cells", p.n_cells},
           {"pitch_mm", p.pitch_mm},
           {"transmission_focus", {{"z_mm", p.focus_z_mm}, {"x_mm", p.focus_x_mm}}},
           {"reflection", {{"mode", p.reflection_mode}, {"angle_deg", p.steer_angle_deg}}},
           {"z_range_mm", cfg::range_json(p.z_range_mm)},
           {"supersample", p.supersample},
           {"focus_tol_mm", p.focus_tol_mm},
           {"steer_tol_deg", p.steer_tol_deg},
           {"side_lobe_max", p.side_lobe_max},
           {"geometry", cfg::geometry_json(p.geom)}};
    j["amplitude_split"] = p.amplitude_split ? json(*p.amplitude_split) : json(nullptr);
    return j;
}

inline int cmd_design(const json& user, const CliOverrides& overrides, std::ostream& log) {
    const DesignParams p = parse_design(user, overrides);
    const RunContext ctx =
        make_run_context("design", design_effective(p), user, overrides, "design");

    SweepAxes axes = default_design_axes(p.design_freq);
    axes.w = {p.geom.w};
    for (double f : p.eval_freqs) add_frequency(axes.freq, f);
    const CellResponseTable table = load_or_build_table(ctx.cache_dir, p.geom, axes);

    const ArrayLayout layout{p.pitch_mm * 1e-3, p.n_cells, 1};
    const WaveContext wave = make_wave_context(p.design_freq);
    const std::vector<double> phi_t = focusing_profile(layout, p.focus_z_mm * 1e-3,
                                                       p.focus_x_mm * 1e-3, wave.wavenumber);
    const std::vector<double> phi_r =
        (p.reflection_mode == "steer")
            ? steering_profile(layout, p.steer_angle_deg * kPi / 180.0, wave.wavenumber)
            : diffusion_profile(layout, p.focus_z_mm * 1e-3, p.focus_x_mm * 1e-3,
                                wave.wavenumber);

    std::vector<CellSelection> cells;
    std::vector<std::string> infeasible;
    for (int i = 0; i < p.n_cells; ++i) {
        try {
            cells.push_back(select_cell(table, phi_r[static_cast<size_t>(i)],
                                        phi_t[static_cast<size_t>(i)], p.design_freq,
                                        p.amplitude_split));
        } catch (const InfeasibleSplitError& ex) {
            infeasible.push_back("cell " + std::to_string(i) + ": " + ex.what());
        }
    }
    if (!infeasible.empty()) {
        json rep = json::array();
        for (const std::string& s : infeasible) rep.push_back(s);
        write_json_file(ctx.run_dir / "infeasible.json", json{{"infeasible_cells", rep}});
        throw std::runtime_error("design: " + std::to_string(infeasible.size()) +
                                 " infeasible cells; see infeasible.json");
    }

    std::string profile = "cell,x_mm,phi_r_rad,phi_t_rad\n";
    json sel_rows = json::array();
    for (int i = 0; i < p.n_cells; ++i) {
        const size_t si = static_cast<size_t>(i);
        profile += std::to_string(i) + "," + fmt_g12(layout.x_of(i) * 1e3) + "," +
                   fmt_g12(phi_r[si]) + "," + fmt_g12(phi_t[si]) + "\n";
        const CellSelection& s = cells[si];
        sel_rows.push_back(json{{"ix", i},
                                {"h1_mm", s.h1 * 1e3},
                                {"w2_mm", s.w2 * 1e3},
                                {"w_mm", s.w * 1e3},
                                {"phi_r_rad", phi_r[si]},
                                {"phi_t_rad", phi_t[si]},
                                {"achieved_phi_r_rad", std::arg(s.achieved_r)},
                                {"achieved_phi_t_rad", std::arg(s.achieved_t)},
                                {"err_r_rad", s.phase_error_r},
                                {"err_t_rad", s.phase_error_t}});
    }
    atomic_write_file(ctx.run_dir / "profile.csv", profile);
    write_json_file(ctx.run_dir / "selections.json",
                    json{{"frequency_hz", p.design_freq},
                         {"n_cells", p.n_cells},
                         {"pitch_mm", p.pitch_mm},
                         {"cells", sel_rows}});

    FieldVerifyOptions opts;
    opts.z_start = p.z_range_mm.lo * 1e-3;
    opts.z_end = p.z_range_mm.hi * 1e-3;
    opts.z_step = p.z_range_mm.step * 1e-3;
    opts.supersample = p.supersample;
    opts.intended_focus = FocalPoint{p.focus_z_mm * 1e-3, p.focus_x_mm * 1e-3};

    // Ideal-phase focus reference at the design frequency.
    std::vector<complexd> ideal_t(static_cast<size_t>(p.n_cells));
    for (size_t i = 0; i < ideal_t.size(); ++i) ideal_t[i] = std::polar(1.0, phi_t[i]);
    const FocusResult ideal_focus = locate_focus(intensity_map(
        boundary_from_values(ideal_t, layout, wave, p.supersample), opts.z_start, opts.z_end,
        opts.z_step));
    const double ideal_err = std::hypot(ideal_focus.z - p.focus_z_mm * 1e-3,
                                        ideal_focus.x - p.focus_x_mm * 1e-3);

    json reports = json::array();
    bool pass = true;
    const double focus_tol =
        (p.focus_tol_mm > 0.0) ? p.focus_tol_mm * 1e-3 : wave.wavelength;
    for (double f : p.eval_freqs) {
        const WaveContext wf = make_wave_context(f);
        const DesignReport rep = predict_fields(cells, layout, wf, table, opts);
        atomic_write_file(ctx.run_dir / ("tmap_" + freq_tag(f) + ".csv"),
                          intensity_map_csv(rep.transmission_map));
        write_intensity_pgm(ctx.run_dir / ("tmap_" + freq_tag(f) + ".pgm"),
                            rep.transmission_map);
        atomic_write_file(ctx.run_dir / ("rmap_" + freq_tag(f) + ".csv"),
                          intensity_map_csv(rep.reflection_map));
        write_intensity_pgm(ctx.run_dir / ("rmap_" + freq_tag(f) + ".pgm"), rep.reflection_map);

        json jr{{"frequency_hz", f},
                {"focus_z_mm", rep.focus.z * 1e3},
                {"focus_x_mm", rep.focus.x * 1e3},
                {"focus_error_mm", *rep.focus_error * 1e3},
                {"aperture_diffraction_peak", rep.aperture_diffraction_peak},
                {"steering_angle_deg", rep.steering_angle * 180.0 / kPi},
                {"side_lobe_ratio", rep.side_lobe_ratio},
                {"no_lobe", rep.no_lobe}};
        reports.push_back(jr);

        if (std::abs(f - p.design_freq) < 1e-6) {
            if (*rep.focus_error > focus_tol) pass = false;
            if (p.reflection_mode == "steer") {
                const double err_deg =
                    std::abs(rep.steering_angle * 180.0 / kPi - p.steer_angle_deg);
                if (err_deg > p.steer_tol_deg || rep.side_lobe_ratio > p.side_lobe_max ||
                    rep.no_lobe)
                    pass = false;
            }
        }
    }
    write_json_file(ctx.run_dir / "report.json",
                    json{{"design_frequency_hz", p.design_freq},
                         {"ideal_focus_z_mm", ideal_focus.z * 1e3},
                         {"ideal_focus_x_mm", ideal_focus.x * 1e3},
                         {"ideal_focus_error_mm", ideal_err * 1e3},
                         {"focus_tol_mm", focus_tol * 1e3},
                         {"reports", reports},
                         {"pass", pass}});
    write_manifest(ctx, "design", table_hash(table));
    log << "design: " << (pass ? "tolerances met" : "TOLERANCE FAILURE") << "; artifacts in "
        << ctx.run_dir.string() << "\n";
    return pass ? 0 : 2;
}

// ---- hologram ---------------------------------------------------------------

struct HologramParams {
    double frequency = 6000.0;
    std::vector<double> eval_freqs{5500.0, 6500.0};
    std::string target_r = "C";
    std::string target_t = "L";
    double z_r_mm = -120.0;
    double z_t_mm = 150.0;
    int nx = kLetterGridSize, ny = kLetterGridSize;
    double pitch_mm = 14.3;
    int max_iterations = 200;
    double tol = 1e-4;
    std::optional<std::uint64_t> seed;
    double sweep_half_mm = 60.0;
    double sweep_step_mm = 5.0;
    double render_step_mm = 20.0;
    double corr_margin = 0.15;
    UnitCellGeometry geom;
};

inline HologramParams parse_hologram(const json& user, const CliOverrides& overrides) {
    const std::string where = "hologram";
    cfg::require_known(user,
                       {"frequency_hz", "eval_frequencies_hz", "target_r", "target_t", "z_r_mm",
                        "z_t_mm", "grid", "max_iterations", "tol", "seed", "z_sweep_mm",
                        "corr_margin", "geometry", "out_dir", "cache_dir", "strict"},
                       where);
    HologramParams p;
    p.frequency = cfg::number(user, "frequency_hz", p.frequency, where);
    p.eval_freqs = cfg::number_list(user, "eval_frequencies_hz", p.eval_freqs, where);
    if (overrides.freqs && !overrides.freqs->empty()) {
        p.frequency = overrides.freqs->front();
        p.eval_freqs.assign(overrides.freqs->begin() + 1, overrides.freqs->end());
    }
    p.target_r = cfg::text(user, "target_r", p.target_r, where);
    p.target_t = cfg::text(user, "target_t", p.target_t, where);
    p.z_r_mm = cfg::number(user, "z_r_mm", p.z_r_mm, where);
    p.z_t_mm = cfg::number(user, "z_t_mm", p.z_t_mm, where);
    if (user.contains("grid")) {
        const json& g = user.at("grid");
        cfg::require_known(g, {"nx", "ny", "pitch_mm"}, where + ".grid");
        p.nx = cfg::integer(g, "nx", p.nx, where);
        p.ny = cfg::integer(g, "ny", p.ny, where);
        p.pitch_mm = cfg::number(g, "pitch_mm", p.pitch_mm, where);
    }
    p.max_iterations = cfg::integer(user, "max_iterations", p.max_iterations, where);
    p.tol = cfg::number(user, "tol", p.tol, where);
    if (user.contains("seed") && !user.at("seed").is_null()) {
        const json& s = user.at("seed");
        if (!s.is_number_integer() || (!s.is_number_unsigned() && s.get<std::int64_t>() < 0))
            throw ConfigError("hologram: key 'seed' must be a non-negative integer");
        p.seed = s.get<std::uint64_t>();
    }
    if (overrides.seed) p.seed = *overrides.seed;
    if (user.contains("z_sweep_mm")) {
        const json& z = user.at("z_sweep_mm");
        cfg::require_known(z, {"half_range", "step", "render_step"}, where + ".z_sweep_mm");
        p.sweep_half_mm = cfg::number(z, "half_range", p.sweep_half_mm, where);
        p.sweep_step_mm = cfg::number(z, "step", p.sweep_step_mm, where);
        p.render_step_mm = cfg::number(z, "render_step", p.render_step_mm, where);
    }
    p.corr_margin = cfg::number(user, "corr_margin", p.corr_margin, where);
    p.geom = cfg::geometry(user, where);
    return p;
}

inline json hologram_effective(const HologramParams& p) {
    json j{{"frequency_hz", p.frequency},
           {"eval_frequencies_hz", p.eval_freqs},
           {"target_r", p.target_r},
           {"target_t", p.target_t},
           {"z_r_mm", p.z_r_mm},
           {"z_t_mm", p.z_t_mm},
           {"grid", {{"nx", p.nx}, {"ny", p.ny}, {"pitch_mm", p.pitch_mm}}},
           {"max_iterations", p.max_iterations},
           {"tol", p.tol},
           {"z_sweep_mm",
            {{"half_range", p.sweep_half_mm},
             {"step", p.sweep_step_mm},
             {"render_step", p.render_step_mm}}},
           {"corr_margin", p.corr_margin},
           {"geometry", cfg::geometry_json(p.geom)}};
    j["seed"] = p.seed ? json(*p.seed) : json(nullptr);
    return j;
}

// Letter name, or a PGM path; off-grid rasters are nearest-neighbor
// resampled (rejected under strict mode).
inline TargetImage resolve_target(const std::string& spec_text, int nx, int ny, bool strict,
                                  std::ostream& log) {
    TargetImage img;
    if (spec_text == "C" || spec_text == "L") {
        img = letter_raster(spec_text[0]);
    } else {
        const PgmImage pgm = decode_pgm(read_file(spec_text));
        img.nx = pgm.nx;
        img.ny = pgm.ny;
        img.pixels = pgm.data;
    }
    if (img.nx == nx && img.ny == ny) return img;
    if (strict)
        throw ConfigError("hologram: target '" + spec_text + "' is " + std::to_string(img.nx) +
                          "x" + std::to_string(img.ny) + ", grid wants " + std::to_string(nx) +
                          "x" + std::to_string(ny) + " (strict mode)");
    log << "hologram: resampling target '" << spec_text << "' from " << img.nx << "x" << img.ny
        << " to " << nx << "x" << ny << "\n";
    TargetImage out;
    out.nx = nx;
    out.ny = ny;
    out.pixels.resize(static_cast<size_t>(nx) * static_cast<size_t>(ny));
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix) {
            const int sy = (ny > 1) ? static_cast<int>(std::lround(
                                          iy * static_cast<double>(img.ny - 1) / (ny - 1)))
                                    : 0;
            const int sx = (nx > 1) ? static_cast<int>(std::lround(
                                          ix * static_cast<double>(img.nx - 1) / (nx - 1)))
                                    : 0;
            out.pixels[static_cast<size_t>(iy) * nx + ix] =
                img.pixels[static_cast<size_t>(sy) * img.nx + sx];
        }
    return out;
}

inline int cmd_hologram(const json& user, const CliOverrides& overrides, std::ostream& log) {
    const HologramParams p = parse_hologram(user, overrides);
    const RunContext ctx =
        make_run_context("hologram", hologram_effective(p), user, overrides, "hologram");

    HologramSpec spec;
    spec.layout = ArrayLayout{p.pitch_mm * 1e-3, p.nx, p.ny};
    spec.target_r = resolve_target(p.target_r, p.nx, p.ny, ctx.strict, log);
    spec.target_t = resolve_target(p.target_t, p.nx, p.ny, ctx.strict, log);
    spec.z_r = p.z_r_mm * 1e-3;
    spec.z_t = p.z_t_mm * 1e-3;
    spec.frequency = p.frequency;
    spec.options.max_iterations = p.max_iterations;
    spec.options.convergence_tol = p.tol;
    spec.options.seed = p.seed;

    SweepAxes axes = default_design_axes(p.frequency);
    axes.w = {p.geom.w};
    for (double f : p.eval_freqs) add_frequency(axes.freq, f);
    const CellResponseTable table = load_or_build_table(ctx.cache_dir, p.geom, axes);

    const PanelDesign design = design_two_sided_panel(spec, table);

    atomic_write_file(ctx.run_dir / "phase_r.csv",
                      grid_csv(design.layout, design.iasa_r.phase_map, "phi_rad"));
    atomic_write_file(ctx.run_dir / "phase_t.csv",
                      grid_csv(design.layout, design.iasa_t.phase_map, "phi_rad"));
    write_pgm(ctx.run_dir / "phase_r.pgm", phase_to_unit(design.iasa_r.phase_map), p.nx, p.ny);
    write_pgm(ctx.run_dir / "phase_t.pgm", phase_to_unit(design.iasa_t.phase_map), p.nx, p.ny);
    atomic_write_file(ctx.run_dir / "h1_map.csv",
                      grid_csv(design.layout, design.h1_map, "h1_mm", 1e3));
    atomic_write_file(ctx.run_dir / "w2_map.csv",
                      grid_csv(design.layout, design.w2_map, "w2_mm", 1e3));
    write_pgm(ctx.run_dir / "h1_map.pgm", design.h1_map, p.nx, p.ny);
    write_pgm(ctx.run_dir / "w2_map.pgm", design.w2_map, p.nx, p.ny);

    json cells = json::array();
    for (int iy = 0; iy < p.ny; ++iy)
        for (int ix = 0; ix < p.nx; ++ix) {
            const size_t i = static_cast<size_t>(iy) * p.nx + ix;
            const CellSelection& s = design.cells[i];
            cells.push_back(json{{"ix", ix},
                                 {"iy", iy},
                                 {"h1_mm", s.h1 * 1e3},
                                 {"w2_mm", s.w2 * 1e3},
                                 {"w_mm", s.w * 1e3},
                                 {"phi_r_rad", design.iasa_r.phase_map[i]},
                                 {"phi_t_rad", design.iasa_t.phase_map[i]},
                                 {"err_r_rad", s.phase_error_r},
                                 {"err_t_rad", s.phase_error_t}});
        }
    write_json_file(ctx.run_dir / "design.json",
                    json{{"frequency_hz", p.frequency},
                         {"seed", p.seed ? json(*p.seed) : json(nullptr)},
                         {"iterations_r", design.iasa_r.correlation_history.size()},
                         {"iterations_t", design.iasa_t.correlation_history.size()},
                         {"mean_err_r_rad", design.mean_err_r},
                         {"max_err_r_rad", design.max_err_r},
                         {"mean_err_t_rad", design.mean_err_t},
                         {"max_err_t_rad", design.max_err_t},
                         {"cells", cells}});

    const double corr_r_ideal = design.iasa_r.correlation_history.back();
    const double corr_t_ideal = design.iasa_t.correlation_history.back();

    json eval_rows = json::array();
    double corr_r_q = 0.0, corr_t_q = 0.0;
    bool pass = true;
    std::vector<double> all_freqs{p.frequency};
    for (double f : p.eval_freqs)
        if (std::abs(f - p.frequency) >= 1e-6) all_freqs.push_back(f);
    for (double f : all_freqs) {
        const HologramVerification v = verify_hologram(design, table, spec, f);
        const std::string tag = freq_tag(f);
        write_pgm(ctx.run_dir / ("intensity_r_" + tag + ".pgm"), intensity(v.field_r), p.nx,
                  p.ny);
        write_pgm(ctx.run_dir / ("intensity_t_" + tag + ".pgm"), intensity(v.field_t), p.nx,
                  p.ny);
        atomic_write_file(ctx.run_dir / ("intensity_r_" + tag + ".csv"),
                          grid_csv(design.layout, intensity(v.field_r), "intensity"));
        atomic_write_file(ctx.run_dir / ("intensity_t_" + tag + ".csv"),
                          grid_csv(design.layout, intensity(v.field_t), "intensity"));

        const PlaneSweep sweep_r = correlation_sweep(
            v.boundary_r, spec.target_r, std::abs(spec.z_r) - p.sweep_half_mm * 1e-3,
            std::abs(spec.z_r) + p.sweep_half_mm * 1e-3, p.sweep_step_mm * 1e-3);
        const PlaneSweep sweep_t = correlation_sweep(
            v.boundary_t, spec.target_t, spec.z_t - p.sweep_half_mm * 1e-3,
            spec.z_t + p.sweep_half_mm * 1e-3, p.sweep_step_mm * 1e-3);
        std::string sweep_csv = "z_mm,corr_r,corr_t\n";
        for (size_t i = 0; i < sweep_r.z.size(); ++i)
            sweep_csv += fmt_g12((sweep_r.z[i] - std::abs(spec.z_r)) * 1e3) + "," +
                         fmt_g12(sweep_r.corr[i]) + "," + fmt_g12(sweep_t.corr[i]) + "\n";
        atomic_write_file(ctx.run_dir / ("sweep_" + tag + ".csv"), sweep_csv);

        const double best_r_off = sweep_r.z[sweep_r.best_index()] - std::abs(spec.z_r);
        const double best_t_off = sweep_t.z[sweep_t.best_index()] - spec.z_t;
        eval_rows.push_back(json{{"frequency_hz", f},
                                 {"corr_r", v.corr_r},
                                 {"corr_t", v.corr_t},
                                 {"best_plane_offset_r_mm", best_r_off * 1e3},
                                 {"best_plane_offset_t_mm", best_t_off * 1e3}});
        if (std::abs(f - p.frequency) < 1e-6) {
            corr_r_q = v.corr_r;
            corr_t_q = v.corr_t;
        } else if (std::abs(best_r_off) > 40e-3 || std::abs(best_t_off) > 40e-3) {
            pass = false;
        }

        // Render stack across the sweep range at the design frequency.
        if (std::abs(f - p.frequency) < 1e-6 && p.render_step_mm > 0.0) {
            for (double off = -p.sweep_half_mm; off <= p.sweep_half_mm + 1e-9;
                 off += p.render_step_mm) {
                const double zr = std::abs(spec.z_r) + off * 1e-3;
                const double zt = spec.z_t + off * 1e-3;
                if (zr > 0.0)
                    write_pgm(ctx.run_dir / ("stack_r_" + fmt_g12(off) + ".pgm"),
                              intensity(propagate(v.boundary_r, zr)), p.nx, p.ny);
                if (zt > 0.0)
                    write_pgm(ctx.run_dir / ("stack_t_" + fmt_g12(off) + ".pgm"),
                              intensity(propagate(v.boundary_t, zt)), p.nx, p.ny);
            }
        }
    }

    if (corr_r_q < corr_r_ideal - p.corr_margin || corr_t_q < corr_t_ideal - p.corr_margin)
        pass = false;
    if (corr_r_q < 0.6 - p.corr_margin || corr_t_q < 0.6 - p.corr_margin) pass = false;

    write_json_file(ctx.run_dir / "metrics.json",
                    json{{"frequency_hz", p.frequency},
                         {"corr_r_ideal", corr_r_ideal},
                         {"corr_t_ideal", corr_t_ideal},
                         {"corr_r_quantized", corr_r_q},
                         {"corr_t_quantized", corr_t_q},
                         {"corr_margin", p.corr_margin},
                         {"eval", eval_rows},
                         {"pass", pass}});
    write_manifest(ctx, "hologram", table_hash(table));
    log << "hologram: corr_r " << corr_r_q << " (ideal " << corr_r_ideal << "), corr_t "
        << corr_t_q << " (ideal " << corr_t_ideal << "); "
        << (pass ? "tolerances met" : "TOLERANCE FAILURE") << "; artifacts in "
        << ctx.run_dir.string() << "\n";
    return pass ? 0 : 2;
}

// ---- propagate --------------------------------------------------------------

struct PropagateParams {
    std::string input_field;
    std::string input_meta;
    double dz_mm = 0.0;
    bool pad = true;
    bool allow_coarse = false;
    std::optional<double> frequency;
};

inline PropagateParams parse_propagate(const json& user, const CliOverrides& overrides) {
    const std::string where = "propagate";
    cfg::require_known(user,
                       {"input_field", "input_meta", "dz_mm", "pad", "allow_coarse", "out_dir",
                        "cache_dir", "strict"},
                       where);
    PropagateParams p;
    p.input_field = cfg::text(user, "input_field", "", where);
    if (p.input_field.empty()) throw ConfigError("propagate: key 'input_field' is required");
    p.input_meta = cfg::text(user, "input_meta", "", where);
    if (p.input_meta.empty())
        p.input_meta = std::filesystem::path(p.input_field).replace_extension(".json").string();
    if (!user.contains("dz_mm")) throw ConfigError("propagate: key 'dz_mm' is required");
    p.dz_mm = cfg::number(user, "dz_mm", 0.0, where);
    p.pad = cfg::boolean(user, "pad", true, where);
    p.allow_coarse = cfg::boolean(user, "allow_coarse", false, where);
    if (overrides.freqs && !overrides.freqs->empty()) p.frequency = overrides.freqs->front();
    return p;
}

inline std::string field_csv(const ComplexField& f) {
    std::string out = "x_mm,y_mm,re_p,im_p\n";
    for (int iy = 0; iy < f.ny; ++iy)
        for (int ix = 0; ix < f.nx; ++ix) {
            const complexd& v = f.at(ix, iy);
            out += fmt_g12(f.x_of(ix) * 1e3) + "," + fmt_g12(f.y_of(iy) * 1e3) + "," +
                   fmt_g12(v.real()) + "," + fmt_g12(v.imag()) + "\n";
        }
    return out;
}

inline json field_meta_json(const ComplexField& f) {
    return json{{"nx", f.nx},
                {"ny", f.ny},
                {"spacing_mm", f.spacing * 1e3},
                {"plane_z_mm", f.plane_z * 1e3},
                {"frequency_hz", f.wave.frequency}};
}

inline ComplexField read_field_csv(const std::string& csv_path, const std::string& meta_path,
                                   bool allow_coarse, std::optional<double> frequency_override) {
    json meta;
    try {
        meta = json::parse(read_file(meta_path));
    } catch (const json::parse_error& ex) {
        throw ConfigError("field meta " + meta_path + ": " + ex.what());
    }
    cfg::require_known(meta, {"nx", "ny", "spacing_mm", "plane_z_mm", "frequency_hz"},
                       "field meta");
    const int nx = cfg::integer(meta, "nx", 0, "field meta");
    const int ny = cfg::integer(meta, "ny", 1, "field meta");
    const double spacing = cfg::number(meta, "spacing_mm", 0.0, "field meta") * 1e-3;
    const double plane_z = cfg::number(meta, "plane_z_mm", 0.0, "field meta") * 1e-3;
    const double freq = frequency_override
                            ? *frequency_override
                            : cfg::number(meta, "frequency_hz", 0.0, "field meta");
    ComplexField f(nx, ny, spacing, plane_z, make_wave_context(freq), allow_coarse);

    std::istringstream in(read_file(csv_path));
    std::string line;
    if (!std::getline(in, line) || line != "x_mm,y_mm,re_p,im_p")
        throw ConfigError("field csv " + csv_path + ": bad header");
    size_t i = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (i >= f.count()) throw ConfigError("field csv " + csv_path + ": too many rows");
        std::istringstream ls(line);
        std::string cell;
        double v[4];
        for (int c = 0; c < 4; ++c) {
            if (!std::getline(ls, cell, ','))
                throw ConfigError("field csv " + csv_path + ": short row");
            v[c] = std::stod(cell);
        }
        f.samples[i++] = complexd(v[2], v[3]);
    }
    if (i != f.count())
        throw ConfigError("field csv " + csv_path + ": row count does not match meta grid");
    return f;
}

inline int cmd_propagate(const json& user, const CliOverrides& overrides, std::ostream& log) {
    const PropagateParams p = parse_propagate(user, overrides);
    json effective{{"input_field", p.input_field},
                   {"input_meta", p.input_meta},
                   {"dz_mm", p.dz_mm},
                   {"pad", p.pad},
                   {"allow_coarse", p.allow_coarse}};
    effective["frequency_hz"] = p.frequency ? json(*p.frequency) : json(nullptr);
    const RunContext ctx = make_run_context("propagate", effective, user, overrides, "propagate");

    const ComplexField in =
        read_field_csv(p.input_field, p.input_meta, p.allow_coarse, p.frequency);
    PropagateOptions opts;
    opts.pad = p.pad;
    const ComplexField out = propagate(in, p.dz_mm * 1e-3, opts);

    atomic_write_file(ctx.run_dir / "field.csv", field_csv(out));
    write_json_file(ctx.run_dir / "field.json", field_meta_json(out));
    write_pgm(ctx.run_dir / "intensity.pgm", intensity(out), out.nx, out.ny);
    write_manifest(ctx, "propagate", "");
    log << "propagate: dz " << p.dz_mm << " mm -> plane_z " << out.plane_z * 1e3
        << " mm; artifacts in " << ctx.run_dir.string() << "\n";
    return 0;
}

}  // namespace ms
