#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "ms/core.hpp"

namespace ms {

// Complex pressure samples on a uniform grid in a plane z = plane_z.
// Row-major storage, index iy * nx + ix; ny == 1 for line apertures.
struct ComplexField {
    int nx = 0;
    int ny = 1;
    double spacing = 0.0;
    double plane_z = 0.0;
    WaveContext wave{};
    std::vector<complexd> samples;

    ComplexField() = default;

    // spacing must resolve the propagating spectrum (< lambda/2) unless
    // allow_coarse explicitly waives the check.
    ComplexField(int nx_, int ny_, double spacing_, double plane_z_, const WaveContext& wave_,
                 bool allow_coarse = false)
        : nx(nx_), ny(ny_), spacing(spacing_), plane_z(plane_z_), wave(wave_) {
        if (nx < 1 || ny < 1) throw std::invalid_argument("field: need at least one sample");
        if (!(spacing > 0.0)) throw std::invalid_argument("field: spacing must be positive");
        if (!allow_coarse && !(spacing < 0.5 * wave.wavelength))
            throw std::invalid_argument("field: spacing must be < wavelength/2 (aliased spectrum)");
        samples.assign(static_cast<size_t>(nx) * static_cast<size_t>(ny), complexd{0.0, 0.0});
    }

    complexd& at(int ix, int iy = 0) { return samples[static_cast<size_t>(iy) * nx + ix]; }
    const complexd& at(int ix, int iy = 0) const {
        return samples[static_cast<size_t>(iy) * nx + ix];
    }
    size_t count() const { return samples.size(); }
    double x_of(int ix) const { return (ix - 0.5 * (nx - 1)) * spacing; }
    double y_of(int iy) const { return (iy - 0.5 * (ny - 1)) * spacing; }
};

// DFT-ordered transverse wavenumbers 2*pi*f for sample spacing d.
inline std::vector<double> fft_wavenumbers(int n, double d) {
    std::vector<double> k(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int folded = (i <= (n - 1) / 2) ? i : i - n;
        k[static_cast<size_t>(i)] = kTwoPi * folded / (n * d);
    }
    return k;
}

namespace detail {

// Unnormalized forward (inverse carries the 1/N) separable 2-D FFT, rows
// then columns; grid is row-major ny x nx.
inline void fft2_inplace(std::vector<complexd>& grid, int nx, int ny, bool forward) {
    Eigen::FFT<double> fft;
    std::vector<complexd> line_in, line_out;
    if (nx > 1) {
        line_in.resize(static_cast<size_t>(nx));
        for (int iy = 0; iy < ny; ++iy) {
            complexd* row = grid.data() + static_cast<size_t>(iy) * nx;
            line_in.assign(row, row + nx);
            if (forward)
                fft.fwd(line_out, line_in);
            else
                fft.inv(line_out, line_in);
            std::copy(line_out.begin(), line_out.end(), row);
        }
    }
    if (ny > 1) {
        line_in.resize(static_cast<size_t>(ny));
        for (int ix = 0; ix < nx; ++ix) {
            for (int iy = 0; iy < ny; ++iy)
                line_in[static_cast<size_t>(iy)] = grid[static_cast<size_t>(iy) * nx + ix];
            if (forward)
                fft.fwd(line_out, line_in);
            else
                fft.inv(line_out, line_in);
            for (int iy = 0; iy < ny; ++iy)
                grid[static_cast<size_t>(iy) * nx + ix] = line_out[static_cast<size_t>(iy)];
        }
    }
}

inline int next_pow2_at_least(int n) {
    int p = 1;
    while (p < n) p *= 2;
    return p;
}

}  // namespace detail

// Forward 2-D DFT of the samples (row-major ny x nx grid, DFT bin order).
inline std::vector<complexd> spectrum(const ComplexField& field) {
    std::vector<complexd> grid = field.samples;
    detail::fft2_inplace(grid, field.nx, field.ny, true);
    return grid;
}

// Inverse of spectrum(); `like` supplies the grid geometry for the result.
inline ComplexField inverse_spectrum(const std::vector<complexd>& spec, const ComplexField& like) {
    if (spec.size() != like.count())
        throw std::invalid_argument("inverse_spectrum: size mismatch with template field");
    ComplexField out = like;
    out.samples = spec;
    detail::fft2_inplace(out.samples, out.nx, out.ny, false);
    return out;
}

// Plane-to-plane transfer factor for one spectral component. Propagating
// components advance phase as e^{-j dz kz} (forward wave e^{-j k z});
// evanescent components decay for either sign of dz.
inline complexd propagator_value(double kx, double ky, double k, double dz) {
    const double kt2 = kx * kx + ky * ky;
    const double k2 = k * k;
    if (kt2 <= k2) {
        const double kz = std::sqrt(k2 - kt2);
        return std::exp(complexd{0.0, -dz * kz});
    }
    return complexd{std::exp(-std::abs(dz) * std::sqrt(kt2 - k2)), 0.0};
}

struct PropagateOptions {
    // Embed in a >= 2x next-power-of-two grid (centered) and crop back, to
    // suppress the DFT's periodic wraparound. Identity/semigroup hold
    // exactly only with pad = false.
    bool pad = true;
};

inline ComplexField propagate(const ComplexField& field, double dz,
                              const PropagateOptions& options = {}) {
    const int px = (options.pad && field.nx > 1) ? detail::next_pow2_at_least(2 * field.nx)
                                                 : field.nx;
    const int py = (options.pad && field.ny > 1) ? detail::next_pow2_at_least(2 * field.ny)
                                                 : field.ny;
    const int ox = (px - field.nx) / 2;
    const int oy = (py - field.ny) / 2;

    std::vector<complexd> grid(static_cast<size_t>(px) * static_cast<size_t>(py),
                               complexd{0.0, 0.0});
    for (int iy = 0; iy < field.ny; ++iy)
        for (int ix = 0; ix < field.nx; ++ix)
            grid[static_cast<size_t>(iy + oy) * px + (ix + ox)] = field.at(ix, iy);

    detail::fft2_inplace(grid, px, py, true);
    const std::vector<double> kxs = fft_wavenumbers(px, field.spacing);
    const std::vector<double> kys =
        (py > 1) ? fft_wavenumbers(py, field.spacing) : std::vector<double>{0.0};
    for (int iy = 0; iy < py; ++iy)
        for (int ix = 0; ix < px; ++ix)
            grid[static_cast<size_t>(iy) * px + ix] *=
                propagator_value(kxs[static_cast<size_t>(ix)], kys[static_cast<size_t>(iy)],
                                 field.wave.wavenumber, dz);
    detail::fft2_inplace(grid, px, py, false);

    ComplexField out = field;
    out.plane_z += dz;
    for (int iy = 0; iy < field.ny; ++iy)
        for (int ix = 0; ix < field.nx; ++ix)
            out.at(ix, iy) = grid[static_cast<size_t>(iy + oy) * px + (ix + ox)];
    return out;
}

// |p|^2 per sample, relative units (unit-amplitude incidence).
inline std::vector<double> intensity(const ComplexField& field) {
    std::vector<double> out(field.count());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::norm(field.samples[i]);
    return out;
}

}  // namespace ms
