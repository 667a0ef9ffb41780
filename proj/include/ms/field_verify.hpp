#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "ms/angular_spectrum.hpp"
#include "ms/cell_table.hpp"
#include "ms/core.hpp"
#include "ms/profiles.hpp"

namespace ms {

// Per-cell complex responses of the chosen geometries at freq_hz
// (transmission t or reflection r), in cell order.
inline std::vector<complexd> selection_responses(const CellResponseTable& table,
                                                 const std::vector<CellSelection>& cells,
                                                 double freq_hz, bool transmission) {
    std::vector<complexd> out;
    out.reserve(cells.size());
    for (const CellSelection& sel : cells) {
        const TableEntry& e = lookup_entry(table, sel.h1, sel.w2, sel.w, freq_hz);
        out.push_back(transmission ? e.t : e.r);
    }
    return out;
}

// Piecewise-constant line-aperture field: each cell's value painted over
// `supersample` subsamples of the pitch.
inline ComplexField boundary_from_values(const std::vector<complexd>& values,
                                         const ArrayLayout& layout, const WaveContext& wave,
                                         int supersample = 8) {
    layout.validate();
    if (layout.ny != 1) throw std::invalid_argument("boundary_from_values: line arrays only");
    if (values.size() != static_cast<size_t>(layout.nx))
        throw std::invalid_argument("boundary_from_values: value/layout mismatch");
    if (supersample < 1) throw std::invalid_argument("boundary_from_values: supersample < 1");
    ComplexField f(layout.nx * supersample, 1, layout.pitch / supersample, 0.0, wave);
    for (int i = 0; i < layout.nx; ++i)
        for (int s = 0; s < supersample; ++s) f.at(i * supersample + s) = values[static_cast<size_t>(i)];
    return f;
}

// |p(x, z)|^2 on planes z[iz]; values row-major iz * nx + ix.
struct IntensityMap {
    std::vector<double> z;
    std::vector<double> x;
    std::vector<double> values;

    double at(size_t iz, size_t ix) const { return values[iz * x.size() + ix]; }
};

inline IntensityMap intensity_map(const ComplexField& boundary, double z_start, double z_end,
                                  double z_step) {
    if (!(z_step > 0.0) || !(z_end >= z_start))
        throw std::invalid_argument("intensity_map: bad z range");
    IntensityMap map;
    for (int ix = 0; ix < boundary.nx; ++ix) map.x.push_back(boundary.x_of(ix));
    for (double z = z_start; z <= z_end + 1e-12; z += z_step) {
        map.z.push_back(z);
        const std::vector<double> row = intensity(propagate(boundary, z));
        map.values.insert(map.values.end(), row.begin(), row.end());
    }
    return map;
}

struct FocusResult {
    double z = 0.0, x = 0.0;  // sub-grid refined peak coordinates
    double peak = 0.0;
    bool flat = false;  // constant map, no peak
    bool tie = false;   // another pixel equals the maximum exactly
};

namespace detail {

// 3-point parabolic vertex offset in [-0.5, 0.5]; 0 at edges or non-concave.
inline double parabolic_offset(double vm, double v0, double vp) {
    const double denom = vm - 2.0 * v0 + vp;
    if (!(denom < 0.0)) return 0.0;
    return 0.5 * (vm - vp) / denom;
}

}  // namespace detail

// Argmax with per-axis 3-point parabolic refinement; ties resolve to the
// smallest flattened index (smallest z, then smallest x) and are flagged.
inline FocusResult locate_focus(const IntensityMap& map) {
    const size_t nz = map.z.size(), nx = map.x.size();
    if (nz == 0 || nx == 0 || map.values.size() != nz * nx)
        throw std::invalid_argument("locate_focus: empty or inconsistent map");
    FocusResult res;
    size_t best = 0;
    for (size_t i = 1; i < map.values.size(); ++i) {
        if (map.values[i] > map.values[best]) best = i;
    }
    res.peak = map.values[best];
    for (size_t i = 0; i < map.values.size(); ++i)
        if (i != best && map.values[i] == res.peak) {
            res.tie = true;
            break;
        }
    const double lo = *std::min_element(map.values.begin(), map.values.end());
    if (res.peak == lo) {
        res.flat = true;
        res.z = map.z[0];
        res.x = map.x[0];
        return res;
    }

    const size_t iz = best / nx, ix = best % nx;
    double fz = 0.0, fx = 0.0;
    if (iz > 0 && iz + 1 < nz)
        fz = detail::parabolic_offset(map.at(iz - 1, ix), res.peak, map.at(iz + 1, ix));
    if (ix > 0 && ix + 1 < nx)
        fx = detail::parabolic_offset(map.at(iz, ix - 1), res.peak, map.at(iz, ix + 1));
    const double dz_step = (nz > 1) ? map.z[1] - map.z[0] : 0.0;
    const double dx_step = (nx > 1) ? map.x[1] - map.x[0] : 0.0;
    res.z = map.z[iz] + fz * dz_step;
    res.x = map.x[ix] + fx * dx_step;
    return res;
}

// Far-field power vs angle from a line-aperture boundary: zero-padded DFT,
// propagating bins |kx| <= k mapped through kx = k sin(theta).
struct Farfield {
    std::vector<double> theta;  // rad, ascending
    std::vector<double> power;
};

inline Farfield farfield_from_boundary(const ComplexField& boundary, int pad_bins = 32768) {
    if (boundary.ny != 1) throw std::invalid_argument("farfield_from_boundary: line arrays only");
    int m = 1;
    while (m < std::max(pad_bins, boundary.nx)) m *= 2;
    std::vector<complexd> buf(static_cast<size_t>(m), complexd{0.0, 0.0});
    std::copy(boundary.samples.begin(), boundary.samples.end(), buf.begin());
    detail::fft2_inplace(buf, m, 1, true);

    const std::vector<double> kxs = fft_wavenumbers(m, boundary.spacing);
    const double k = boundary.wave.wavenumber;
    std::vector<std::pair<double, double>> bins;
    bins.reserve(buf.size());
    for (size_t i = 0; i < buf.size(); ++i)
        if (std::abs(kxs[i]) <= k) bins.emplace_back(std::asin(kxs[i] / k), std::norm(buf[i]));
    std::sort(bins.begin(), bins.end());
    Farfield ff;
    ff.theta.reserve(bins.size());
    ff.power.reserve(bins.size());
    for (const auto& [th, p] : bins) {
        ff.theta.push_back(th);
        ff.power.push_back(p);
    }
    return ff;
}

struct LobeResult {
    double angle = 0.0;           // rad
    double side_lobe_ratio = 0.0; // second lobe / main lobe, in [0, 1]
    bool no_lobe = false;         // nothing above the noise floor
};

// Main lobe = argmax; the lobe extends to the first local minimum on each
// side, and the side-lobe ratio is the best remaining bin over the peak.
// Bins below 1e-6 of the peak count as noise.
inline LobeResult steering_lobe(const Farfield& ff) {
    LobeResult res;
    if (ff.power.empty()) {
        res.no_lobe = true;
        return res;
    }
    size_t imax = 0;
    for (size_t i = 1; i < ff.power.size(); ++i)
        if (ff.power[i] > ff.power[imax]) imax = i;
    const double peak = ff.power[imax];
    if (!(peak > 0.0)) {
        res.no_lobe = true;
        return res;
    }
    res.angle = ff.theta[imax];

    size_t i0 = imax, i1 = imax;
    while (i0 > 0 && ff.power[i0 - 1] < ff.power[i0]) --i0;
    while (i1 + 1 < ff.power.size() && ff.power[i1 + 1] < ff.power[i1]) ++i1;
    double second = 0.0;
    for (size_t i = 0; i < ff.power.size(); ++i) {
        if (i >= i0 && i <= i1) continue;
        if (ff.power[i] < 1e-6 * peak) continue;
        second = std::max(second, ff.power[i]);
    }
    res.side_lobe_ratio = second / peak;
    return res;
}

struct FocalPoint {
    double z = 0.0, x = 0.0;
};

struct FieldVerifyOptions {
    double z_start = 2e-3, z_end = 450e-3, z_step = 2e-3;
    int supersample = 8;
    std::optional<FocalPoint> intended_focus;  // enables focus_error
};

// Both-side prediction for a line-array design. The reflection map lives in
// a frame mirrored about the array (z grows away from it on both sides).
struct DesignReport {
    IntensityMap reflection_map, transmission_map;
    FocusResult focus;  // transmission-side peak
    std::optional<double> focus_error;
    bool aperture_diffraction_peak = false;  // peak indistinct from a uniform aperture's
    double steering_angle = 0.0;             // reflection-side far field
    double side_lobe_ratio = 0.0;
    bool no_lobe = false;
};

inline DesignReport predict_fields(const std::vector<CellSelection>& cells,
                                   const ArrayLayout& layout, const WaveContext& wave,
                                   const CellResponseTable& table,
                                   const FieldVerifyOptions& options = {}) {
    if (cells.size() != static_cast<size_t>(layout.count()))
        throw std::invalid_argument("predict_fields: selections do not match layout");
    const std::vector<complexd> vr =
        selection_responses(table, cells, wave.frequency, /*transmission=*/false);
    const std::vector<complexd> vt =
        selection_responses(table, cells, wave.frequency, /*transmission=*/true);

    const ComplexField br = boundary_from_values(vr, layout, wave, options.supersample);
    const ComplexField bt = boundary_from_values(vt, layout, wave, options.supersample);

    DesignReport report;
    report.reflection_map = intensity_map(br, options.z_start, options.z_end, options.z_step);
    report.transmission_map = intensity_map(bt, options.z_start, options.z_end, options.z_step);
    report.focus = locate_focus(report.transmission_map);

    // A peak is "aperture diffraction" when it sits within half a wavelength
    // of where the same amplitude profile with uniform phase peaks.
    ComplexField uniform = bt;
    for (complexd& s : uniform.samples) s = complexd{std::abs(s), 0.0};
    const FocusResult upeak =
        locate_focus(intensity_map(uniform, options.z_start, options.z_end, options.z_step));
    report.aperture_diffraction_peak =
        !report.focus.flat &&
        std::hypot(report.focus.z - upeak.z, report.focus.x - upeak.x) < 0.5 * wave.wavelength;

    if (options.intended_focus)
        report.focus_error = std::hypot(report.focus.z - options.intended_focus->z,
                                        report.focus.x - options.intended_focus->x);

    const LobeResult lobe = steering_lobe(farfield_from_boundary(br));
    report.steering_angle = lobe.angle;
    report.side_lobe_ratio = lobe.side_lobe_ratio;
    report.no_lobe = lobe.no_lobe;
    return report;
}

}  // namespace ms
