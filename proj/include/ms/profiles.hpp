#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ms/core.hpp"

namespace ms {

// Uniformly pitched cell grid centered on the origin; ny = 1 for line arrays.
// The array lies in the plane z = 0; cells index row-major (iy * nx + ix),
// row 0 at the most negative y.
struct ArrayLayout {
    double pitch = 14.3e-3;
    int nx = 0;
    int ny = 1;

    void validate() const {
        if (!(pitch > 0.0)) throw std::invalid_argument("layout: pitch must be positive");
        if (nx < 1 || ny < 1) throw std::invalid_argument("layout: need at least one cell");
    }
    int count() const { return nx * ny; }
    double x_of(int ix) const { return (ix - 0.5 * (nx - 1)) * pitch; }
    double y_of(int iy) const { return (iy - 0.5 * (ny - 1)) * pitch; }
};

struct PhaseProfile {
    std::vector<double> phi_r;
    std::vector<double> phi_t;
};

// Transmission phase that focuses at (z0, x0[, y0]), evaluated on the array
// plane z = 0: k0 (sqrt(z0^2 + |pos - focus_xy|^2) - sqrt(z0^2 + x0^2 + y0^2)).
inline std::vector<double> focusing_profile(const ArrayLayout& layout, double focal_z,
                                            double focal_x, double k0, double focal_y = 0.0) {
    layout.validate();
    if (focal_z == 0.0)
        throw std::domain_error("focusing_profile: focal point on the array plane");
    std::vector<double> out(static_cast<size_t>(layout.count()));
    const double norm = std::sqrt(focal_z * focal_z + focal_x * focal_x + focal_y * focal_y);
    for (int iy = 0; iy < layout.ny; ++iy)
        for (int ix = 0; ix < layout.nx; ++ix) {
            const double dx = layout.x_of(ix) - focal_x;
            const double dy = layout.y_of(iy) - focal_y;
            out[static_cast<size_t>(iy * layout.nx + ix)] =
                k0 * (std::sqrt(focal_z * focal_z + dx * dx + dy * dy) - norm);
        }
    return out;
}

// Free diffusion as the reverse wave path of focusing: exact negation.
inline std::vector<double> diffusion_profile(const ArrayLayout& layout, double focal_z,
                                             double focal_x, double k0, double focal_y = 0.0) {
    std::vector<double> out = focusing_profile(layout, focal_z, focal_x, k0, focal_y);
    for (double& v : out) v = -v;
    return out;
}

// Linear reflection-steering phase, k0 * pos * sin(theta_r), pos being the
// along-array coordinate (1-D layouts).
inline std::vector<double> steering_profile(const ArrayLayout& layout, double theta_r,
                                            double k0) {
    layout.validate();
    if (!(std::abs(theta_r) < kPi / 2.0))
        throw std::domain_error("steering_profile: |theta_r| must be < pi/2");
    std::vector<double> out(static_cast<size_t>(layout.count()));
    const double s = std::sin(theta_r);
    for (int iy = 0; iy < layout.ny; ++iy)
        for (int ix = 0; ix < layout.nx; ++ix)
            out[static_cast<size_t>(iy * layout.nx + ix)] = k0 * layout.x_of(ix) * s;
    return out;
}

struct SnellResult {
    double theta_t = 0.0;      // rad; meaningless when evanescent
    bool evanescent = false;
    double fit_residual = 0.0; // rms residual of the linear fit, rad
};

struct AliasingError : std::domain_error {
    using std::domain_error::domain_error;
};

// Recovers the steering angle from a (possibly wrapped) phase profile:
// unwraps adjacent differences, least-squares fits the slope, applies the
// phase-gradient law sin(theta_t) = sin(theta_i) + lambda0 * slope / 2 pi.
inline SnellResult snell_check(const std::vector<double>& phases, const ArrayLayout& layout,
                               double theta_i, const WaveContext& wave) {
    layout.validate();
    if (layout.ny != 1) throw std::invalid_argument("snell_check: 1-D profiles only");
    if (phases.size() != static_cast<size_t>(layout.nx) || phases.size() < 2)
        throw std::invalid_argument("snell_check: profile/layout mismatch");

    std::vector<double> unwrapped(phases.size());
    unwrapped[0] = phases[0];
    for (size_t i = 1; i < phases.size(); ++i) {
        const double d = wrap_phase(phases[i] - phases[i - 1]);
        if (std::abs(d) >= kPi - 1e-9)
            throw AliasingError("snell_check: adjacent phase jump reaches pi (aliased profile)");
        unwrapped[i] = unwrapped[i - 1] + d;
    }

    const double n = static_cast<double>(phases.size());
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < phases.size(); ++i) {
        mx += layout.x_of(static_cast<int>(i));
        my += unwrapped[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (size_t i = 0; i < phases.size(); ++i) {
        const double dx = layout.x_of(static_cast<int>(i)) - mx;
        sxy += dx * (unwrapped[i] - my);
        sxx += dx * dx;
    }
    const double slope = sxy / sxx;

    double ss = 0.0;
    for (size_t i = 0; i < phases.size(); ++i) {
        const double fit = my + slope * (layout.x_of(static_cast<int>(i)) - mx);
        ss += (unwrapped[i] - fit) * (unwrapped[i] - fit);
    }

    SnellResult out;
    out.fit_residual = std::sqrt(ss / n);
    const double s = std::sin(theta_i) + wave.wavelength * slope / kTwoPi;
    if (std::abs(s) > 1.0) {
        out.evanescent = true;
        out.theta_t = std::nan("");
    } else {
        out.theta_t = std::asin(s);
    }
    return out;
}

}  // namespace ms
