#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ms/core.hpp"

namespace ms {

// One piecewise-constant stretch of channel. area_ratio is the open
// cross-section divided by the full channel cross-section.
struct Segment {
    double area_ratio = 1.0;
    double length = 0.0;
};

// Ordered duct decomposition. The first and last segments are the ports;
// the port ratios duplicate their area ratios.
struct SegmentChain {
    std::vector<Segment> segments;
    double port_ratio_in = 1.0;
    double port_ratio_out = 1.0;

    void validate() const {
        if (segments.empty()) throw std::invalid_argument("SegmentChain: empty chain");
        for (const Segment& s : segments) {
            if (!(s.area_ratio > 0.0) || s.area_ratio > 1.0 + 1e-12)
                throw std::invalid_argument("SegmentChain: area_ratio outside (0, 1]");
            if (s.length < 0.0) throw std::invalid_argument("SegmentChain: negative length");
        }
        if (std::abs(port_ratio_in - segments.front().area_ratio) > 1e-12 ||
            std::abs(port_ratio_out - segments.back().area_ratio) > 1e-12)
            throw std::invalid_argument("SegmentChain: port ratios must match terminal segments");
    }
};

inline SegmentChain make_chain(std::vector<Segment> segments) {
    SegmentChain chain;
    chain.segments = std::move(segments);
    if (!chain.segments.empty()) {
        chain.port_ratio_in = chain.segments.front().area_ratio;
        chain.port_ratio_out = chain.segments.back().area_ratio;
    }
    chain.validate();
    return chain;
}

// Unit-cell parameters, SI meters. The upper region h1 + h2 + h3 is fixed at
// h_upper; h3 is derived. w is the gap between the slab pair, w2 the open
// slit width through each thin plate.
struct UnitCellGeometry {
    double h1 = 31.0e-3;
    double h2 = 14.3e-3;
    double w = 3.0e-3;
    double w2 = 3.0e-3;
    double t = 1.0e-3;
    double h4 = 4.0e-3;
    double L = 14.3e-3;
    double D = 14.3e-3;
    int n_plates = 15;
    double h_upper = 50.0e-3;
    double outlet_length = 4.0e-3;
    // Calibration hook scaling the effective length of constricted segments;
    // 1.0 means geometric lengths.
    double end_correction_factor = 1.0;

    double h3() const { return h_upper - h1 - h2; }

    void validate() const {
        if (!(h1 > 0.0)) throw std::invalid_argument("geometry: h1 must be positive");
        if (!(h2 > 0.0)) throw std::invalid_argument("geometry: h2 must be positive");
        if (h1 + h2 > h_upper + 1e-12)
            throw std::invalid_argument("geometry: h1 + h2 exceeds the upper region height");
        if (!(w > 0.0) || w > L + 1e-12)
            throw std::invalid_argument("geometry: w must lie in (0, L]");
        if (!(w2 > 0.0) || w2 > L + 1e-12)
            throw std::invalid_argument("geometry: w2 must lie in (0, L]");
        if (!(t > 0.0) || !(h4 >= 0.0) || !(L > 0.0) || !(D > 0.0))
            throw std::invalid_argument("geometry: non-positive length");
        if (n_plates < 1) throw std::invalid_argument("geometry: n_plates must be >= 1");
        if (!(outlet_length >= 0.0)) throw std::invalid_argument("geometry: negative outlet");
        if (!(end_correction_factor > 0.0))
            throw std::invalid_argument("geometry: end_correction_factor must be positive");
    }
};

// Segment layout: inlet, slab constriction, spacer, then the plate stack
// (plates interleaved with gaps), then a fixed outlet lip.
inline SegmentChain discretize(const UnitCellGeometry& g) {
    g.validate();
    std::vector<Segment> segs;
    segs.reserve(static_cast<size_t>(4 + 2 * g.n_plates));
    segs.push_back({1.0, g.h1});
    segs.push_back({g.w / g.L, g.h2 * g.end_correction_factor});
    segs.push_back({1.0, g.h3()});
    for (int i = 0; i < g.n_plates; ++i) {
        segs.push_back({g.w2 / g.L, g.t * g.end_correction_factor});
        if (i + 1 < g.n_plates) segs.push_back({1.0, g.h4});
    }
    segs.push_back({1.0, g.outlet_length});
    return make_chain(std::move(segs));
}

// Relates the (forward, backward) pressure pair just below an interface to
// the pair at the start of the upstream segment.
struct TransferMatrix2x2 {
    complexd t11{1.0, 0.0}, t12{0.0, 0.0}, t21{0.0, 0.0}, t22{1.0, 0.0};

    complexd det() const { return t11 * t22 - t12 * t21; }

    friend TransferMatrix2x2 operator*(const TransferMatrix2x2& a, const TransferMatrix2x2& b) {
        return {a.t11 * b.t11 + a.t12 * b.t21, a.t11 * b.t12 + a.t12 * b.t22,
                a.t21 * b.t11 + a.t22 * b.t21, a.t21 * b.t12 + a.t22 * b.t22};
    }
};

// Interface between an upstream segment (open fraction S_up, length h_e) and
// the downstream medium with open fraction S_down. With sigma = S_down/S_up,
// a = p_t e^{-j k0 h_e}, b = p_r e^{+j k0 h_e}:
//   p_t' = [(1+sigma) a + (1-sigma) b] / 2
//   p_r' = [(1-sigma) a + (1+sigma) b] / 2
// det(T) = sigma.
inline TransferMatrix2x2 interface_matrix(double s_up, double s_down, double h_e, double k0) {
    if (!(s_up > 0.0) || !(s_down > 0.0))
        throw std::domain_error("interface_matrix: non-positive area ratio");
    if (h_e < 0.0) throw std::domain_error("interface_matrix: negative segment length");
    const double sigma = s_down / s_up;
    const complexd em = std::exp(complexd(0.0, -k0 * h_e));
    const complexd ep = std::exp(complexd(0.0, +k0 * h_e));
    return {0.5 * (1.0 + sigma) * em, 0.5 * (1.0 - sigma) * ep,
            0.5 * (1.0 - sigma) * em, 0.5 * (1.0 + sigma) * ep};
}

// Ordered product over all interfaces; later interfaces multiply on the left.
inline TransferMatrix2x2 total_matrix(const SegmentChain& chain, double k0) {
    chain.validate();
    TransferMatrix2x2 total;
    const size_t n = chain.segments.size();
    for (size_t i = 0; i < n; ++i) {
        const double s_up = chain.segments[i].area_ratio;
        const double s_down =
            (i + 1 < n) ? chain.segments[i + 1].area_ratio : chain.port_ratio_out;
        total = interface_matrix(s_up, s_down, chain.segments[i].length, k0) * total;
    }
    return total;
}

struct ScatteringResult {
    complexd r{0.0, 0.0};
    complexd t{0.0, 0.0};
};

// Port closure: upstream state (1, r), downstream state (t, 0).
inline ScatteringResult scattering(const SegmentChain& chain, double k0) {
    if (!(k0 > 0.0)) throw std::domain_error("scattering: k0 must be positive");
    const TransferMatrix2x2 T = total_matrix(chain, k0);
    if (std::abs(T.t22) < 1e-14)
        throw std::runtime_error("scattering: singular closure (|T22| < 1e-14)");
    ScatteringResult out;
    out.r = -T.t21 / T.t22;
    out.t = T.t11 - T.t12 * T.t21 / T.t22;
    return out;
}

// Independent check: one (forward, backward) amplitude pair per segment,
// with a pressure row and a difference row scaled by the inverse open
// fraction at every interface (the same convention interface_matrix
// implements), unit incidence at the first port, no return wave at the last.
inline ScatteringResult brute_force_oracle(const SegmentChain& chain, double k0) {
    chain.validate();
    const int n = static_cast<int>(chain.segments.size());
    const int dim = 2 * n;
    Eigen::MatrixXcd M = Eigen::MatrixXcd::Zero(dim, dim);
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(dim);

    auto A = [](int i) { return 2 * i; };
    auto B = [](int i) { return 2 * i + 1; };

    int row = 0;
    M(row, A(0)) = 1.0;
    rhs(row) = 1.0;
    ++row;
    for (int i = 0; i + 1 < n; ++i) {
        const double len = chain.segments[static_cast<size_t>(i)].length;
        const double s_i = chain.segments[static_cast<size_t>(i)].area_ratio;
        const double s_n = chain.segments[static_cast<size_t>(i + 1)].area_ratio;
        const complexd em = std::exp(complexd(0.0, -k0 * len));
        const complexd ep = std::exp(complexd(0.0, +k0 * len));
        M(row, A(i)) = em;
        M(row, B(i)) = ep;
        M(row, A(i + 1)) = -1.0;
        M(row, B(i + 1)) = -1.0;
        ++row;
        M(row, A(i)) = em / s_i;
        M(row, B(i)) = -ep / s_i;
        M(row, A(i + 1)) = -1.0 / s_n;
        M(row, B(i + 1)) = 1.0 / s_n;
        ++row;
    }
    M(row, B(n - 1)) = 1.0;

    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(M);
    const double rcond = lu.rcond();
    if (!(rcond > 1e-14)) {
        throw std::runtime_error("brute_force_oracle: near-singular system, rcond = " +
                                 std::to_string(rcond));
    }
    Eigen::VectorXcd x = lu.solve(rhs);

    ScatteringResult out;
    out.r = x(B(0));
    const double last_len = chain.segments.back().length;
    out.t = x(A(n - 1)) * std::exp(complexd(0.0, -k0 * last_len));
    return out;
}

}  // namespace ms
