#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "ms/angular_spectrum.hpp"
#include "ms/cell_table.hpp"
#include "ms/core.hpp"
#include "ms/profiles.hpp"

namespace ms {

// Non-negative amplitude raster, row-major (row 0 = top in renders).
struct TargetImage {
    int nx = 0;
    int ny = 0;
    std::vector<double> pixels;

    void validate() const {
        if (nx < 1 || ny < 1) throw std::invalid_argument("target: need at least one pixel");
        if (pixels.size() != static_cast<size_t>(nx) * static_cast<size_t>(ny))
            throw std::invalid_argument("target: pixel count does not match dimensions");
        for (double v : pixels)
            if (!std::isfinite(v) || v < 0.0)
                throw std::invalid_argument("target: pixels must be finite and non-negative");
    }
    double max_value() const { return *std::max_element(pixels.begin(), pixels.end()); }
};

// Max-normalizes to 1; an all-zero image has no hologram and is rejected.
inline TargetImage normalize_target(TargetImage image) {
    image.validate();
    const double m = image.max_value();
    if (m == 0.0) throw std::domain_error("target: all-zero image");
    for (double& v : image.pixels) v /= m;
    return image;
}

inline constexpr int kLetterGridSize = 25;

// Block-capital letter rasters, 3-pixel stroke on a 17x17 bounding box
// (rows/cols 4..20 of the 25x25 grid); values 0/1.
inline TargetImage letter_raster(char letter) {
    TargetImage img;
    img.nx = img.ny = kLetterGridSize;
    img.pixels.assign(static_cast<size_t>(kLetterGridSize) * kLetterGridSize, 0.0);
    auto fill = [&img](int r0, int r1, int c0, int c1) {
        for (int r = r0; r <= r1; ++r)
            for (int c = c0; c <= c1; ++c) img.pixels[static_cast<size_t>(r) * img.nx + c] = 1.0;
    };
    switch (letter) {
        case 'C':
            fill(4, 6, 4, 20);    // top bar
            fill(18, 20, 4, 20);  // bottom bar
            fill(4, 20, 4, 6);    // left bar
            break;
        case 'L':
            fill(4, 20, 4, 6);    // left bar
            fill(18, 20, 4, 20);  // bottom bar
            break;
        default:
            throw std::invalid_argument("letter_raster: only 'C' and 'L' are provided");
    }
    return img;
}

// Pearson correlation of two equal-size rasters at zero lag.
inline double correlation(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("correlation: images must have equal nonzero size");
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0)
        throw std::domain_error("correlation: undefined for a constant image");
    return sab / std::sqrt(saa * sbb);
}

struct IasaOptions {
    int max_iterations = 200;
    double convergence_tol = 1e-4;
    // Engaged: uniform-random initial phase in (-pi, pi); otherwise zero.
    std::optional<std::uint64_t> seed;
};

struct IasaResult {
    std::vector<double> phase_map;            // hologram-plane phase per pixel
    std::vector<double> correlation_history;  // one entry per iteration
    ComplexField final_field;                 // target-plane field of phase_map
};

// Unit amplitude with the given per-pixel phase on the layout grid.
inline ComplexField phase_boundary_field(const std::vector<double>& phase,
                                         const ArrayLayout& layout, const WaveContext& wave) {
    layout.validate();
    if (phase.size() != static_cast<size_t>(layout.count()))
        throw std::invalid_argument("phase_boundary_field: phase/layout mismatch");
    ComplexField f(layout.nx, layout.ny, layout.pitch, 0.0, wave);
    for (size_t i = 0; i < phase.size(); ++i) f.samples[i] = std::polar(1.0, phase[i]);
    return f;
}

// Alternating-projection phase retrieval: unit-amplitude hologram plane,
// target-amplitude image plane. Stops when the correlation increment falls
// below tol or max_iterations is reached; the returned phase map is the one
// whose forward field produced the last history entry.
inline IasaResult run_iasa(const TargetImage& target, double dz, const WaveContext& wave,
                           const ArrayLayout& layout, const IasaOptions& options = {}) {
    if (dz == 0.0) throw std::invalid_argument("run_iasa: |dz| must be positive");
    if (target.nx != layout.nx || target.ny != layout.ny)
        throw std::invalid_argument("run_iasa: target does not match the panel grid");
    if (options.max_iterations < 1) throw std::invalid_argument("run_iasa: max_iterations < 1");
    const TargetImage tgt = normalize_target(target);

    const size_t count = tgt.pixels.size();
    std::vector<double> phase(count, 0.0);
    if (options.seed) {
        std::mt19937_64 rng(*options.seed);
        // Map the raw 64-bit stream to (-pi, pi) directly so the phases are
        // bitwise reproducible across standard libraries.
        for (double& p : phase)
            p = -kPi + kTwoPi * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
    }

    IasaResult result;
    double prev = 0.0;
    for (int it = 0; it < options.max_iterations; ++it) {
        const ComplexField forward = propagate(phase_boundary_field(phase, layout, wave), dz);
        const double c = correlation(intensity(forward), tgt.pixels);
        result.correlation_history.push_back(c);
        if (it + 1 == options.max_iterations ||
            (it >= 1 && c - prev < options.convergence_tol)) {
            result.final_field = forward;
            break;
        }
        prev = c;
        ComplexField constrained = forward;
        for (size_t i = 0; i < count; ++i)
            constrained.samples[i] = std::polar(tgt.pixels[i], std::arg(forward.samples[i]));
        const ComplexField back = propagate(constrained, -dz);
        for (size_t i = 0; i < count; ++i) phase[i] = std::arg(back.samples[i]);
    }
    result.phase_map = std::move(phase);
    return result;
}

// Two-sided design request: reflection-side image on the plane z_r < 0,
// transmission-side image on z_t > 0, both relative to the panel at z = 0.
// Reflection-side work runs in a frame mirrored about the panel, so both
// sides propagate by a positive distance (|z_r| and z_t).
struct HologramSpec {
    TargetImage target_r;
    double z_r = -120e-3;
    TargetImage target_t;
    double z_t = 150e-3;
    double frequency = 6000.0;
    ArrayLayout layout{14.3e-3, kLetterGridSize, kLetterGridSize};
    IasaOptions options{};

    void validate() const {
        if (!(z_r < 0.0) || !(z_t > 0.0))
            throw std::invalid_argument("hologram: requires z_r < 0 < z_t");
        layout.validate();
        target_r.validate();
        target_t.validate();
        if (target_r.nx != layout.nx || target_r.ny != layout.ny || target_t.nx != layout.nx ||
            target_t.ny != layout.ny)
            throw std::invalid_argument("hologram: targets must match the panel grid");
    }
};

struct PanelDesign {
    ArrayLayout layout;
    double frequency = 0.0;
    IasaResult iasa_r, iasa_t;            // per-side phase retrieval outputs
    std::vector<CellSelection> cells;     // row-major over the grid
    std::vector<double> h1_map, w2_map;   // chosen geometry per cell (m)
    std::vector<double> achieved_phi_r, achieved_phi_t;
    double mean_err_r = 0.0, max_err_r = 0.0;
    double mean_err_t = 0.0, max_err_t = 0.0;
};

// Runs the two independent phase retrievals and quantizes each pixel with
// the joint nearest-(phi_r, phi_t) cell from the table.
inline PanelDesign design_two_sided_panel(const HologramSpec& spec,
                                          const CellResponseTable& table) {
    spec.validate();
    const WaveContext wave = make_wave_context(spec.frequency);

    PanelDesign design;
    design.layout = spec.layout;
    design.frequency = spec.frequency;
    design.iasa_r = run_iasa(spec.target_r, std::abs(spec.z_r), wave, spec.layout, spec.options);
    design.iasa_t = run_iasa(spec.target_t, spec.z_t, wave, spec.layout, spec.options);

    const size_t count = static_cast<size_t>(spec.layout.count());
    design.cells.reserve(count);
    design.h1_map.reserve(count);
    design.w2_map.reserve(count);
    design.achieved_phi_r.reserve(count);
    design.achieved_phi_t.reserve(count);
    for (size_t i = 0; i < count; ++i) {
        CellSelection sel;
        try {
            sel = select_cell(table, design.iasa_r.phase_map[i], design.iasa_t.phase_map[i],
                              spec.frequency);
        } catch (const std::exception& ex) {
            throw std::runtime_error("design_two_sided_panel: cell " + std::to_string(i) + ": " +
                                     ex.what());
        }
        design.cells.push_back(sel);
        design.h1_map.push_back(sel.h1);
        design.w2_map.push_back(sel.w2);
        design.achieved_phi_r.push_back(std::arg(sel.achieved_r));
        design.achieved_phi_t.push_back(std::arg(sel.achieved_t));
        design.mean_err_r += sel.phase_error_r;
        design.mean_err_t += sel.phase_error_t;
        design.max_err_r = std::max(design.max_err_r, sel.phase_error_r);
        design.max_err_t = std::max(design.max_err_t, sel.phase_error_t);
    }
    design.mean_err_r /= static_cast<double>(count);
    design.mean_err_t /= static_cast<double>(count);
    return design;
}

struct HologramVerification {
    ComplexField boundary_r, boundary_t;  // panel-plane complex responses
    ComplexField field_r, field_t;        // at the two target planes
    double corr_r = 0.0, corr_t = 0.0;
};

// Rebuilds the panel-plane fields from the chosen cells' tabulated
// responses at eval_frequency (design frequency when 0), propagates to the
// two target planes, and scores against the target images.
inline HologramVerification verify_hologram(const PanelDesign& design,
                                            const CellResponseTable& table,
                                            const HologramSpec& spec,
                                            double eval_frequency = 0.0) {
    spec.validate();
    const double freq = (eval_frequency > 0.0) ? eval_frequency : design.frequency;
    const WaveContext wave = make_wave_context(freq);

    HologramVerification v;
    v.boundary_r = ComplexField(design.layout.nx, design.layout.ny, design.layout.pitch, 0.0, wave);
    v.boundary_t = v.boundary_r;
    for (size_t i = 0; i < design.cells.size(); ++i) {
        const CellSelection& sel = design.cells[i];
        const TableEntry& e = lookup_entry(table, sel.h1, sel.w2, sel.w, freq);
        v.boundary_r.samples[i] = e.r;
        v.boundary_t.samples[i] = e.t;
    }
    v.field_r = propagate(v.boundary_r, std::abs(spec.z_r));
    v.field_t = propagate(v.boundary_t, spec.z_t);
    v.corr_r = correlation(intensity(v.field_r), normalize_target(spec.target_r).pixels);
    v.corr_t = correlation(intensity(v.field_t), normalize_target(spec.target_t).pixels);
    return v;
}

struct PlaneSweep {
    std::vector<double> z;
    std::vector<double> corr;

    size_t best_index() const {
        return static_cast<size_t>(std::max_element(corr.begin(), corr.end()) - corr.begin());
    }
};

// Correlation against `target` on each plane z in [z_start, z_end] stepped
// by z_step (used for focus-plane hunting and render stacks).
inline PlaneSweep correlation_sweep(const ComplexField& boundary, const TargetImage& target,
                                    double z_start, double z_end, double z_step) {
    if (!(z_step > 0.0) || !(z_end >= z_start))
        throw std::invalid_argument("correlation_sweep: bad z range");
    const TargetImage tgt = normalize_target(target);
    PlaneSweep sweep;
    for (double z = z_start; z <= z_end + 1e-12; z += z_step) {
        sweep.z.push_back(z);
        sweep.corr.push_back(correlation(intensity(propagate(boundary, z)), tgt.pixels));
    }
    return sweep;
}

}  // namespace ms
