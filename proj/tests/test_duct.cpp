#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <stdexcept>
#include <vector>

#include "ms/core.hpp"
#include "ms/duct.hpp"

namespace {

ms::SegmentChain random_equal_port_chain(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> n_seg(2, 10);
    std::uniform_real_distribution<double> ratio(0.05, 1.0);
    std::uniform_real_distribution<double> length(0.5e-3, 50.0e-3);
    const int n = n_seg(rng);
    std::vector<ms::Segment> segs(static_cast<size_t>(n));
    for (auto& s : segs) s = {ratio(rng), length(rng)};
    segs.back().area_ratio = segs.front().area_ratio;
    return ms::make_chain(std::move(segs));
}

ms::SegmentChain reversed(const ms::SegmentChain& chain) {
    std::vector<ms::Segment> segs(chain.segments.rbegin(), chain.segments.rend());
    return ms::make_chain(std::move(segs));
}

}  // namespace

TEST_SUITE("duct") {

TEST_CASE("zero-length area step has the closed-form matrix") {
    // Ratio 1 -> 3 with no propagation: entries (1 +- sigma)/2 with sigma = 3.
    const ms::TransferMatrix2x2 m = ms::interface_matrix(1.0, 3.0, 0.0, 100.0);
    CHECK(m.t11 == std::complex<double>(2.0, 0.0));
    CHECK(m.t12 == std::complex<double>(-1.0, 0.0));
    CHECK(m.t21 == std::complex<double>(-1.0, 0.0));
    CHECK(m.t22 == std::complex<double>(2.0, 0.0));
    CHECK(m.det().real() == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(m.det().imag() == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("interface determinant equals the area-ratio step") {
    std::mt19937_64 rng(3u);
    std::uniform_real_distribution<double> ratio(0.05, 1.0);
    std::uniform_real_distribution<double> length(0.0, 40.0e-3);
    const double k0 = ms::make_wave_context(6000.0).wavenumber;
    for (int i = 0; i < 100; ++i) {
        const double s_up = ratio(rng), s_down = ratio(rng);
        const ms::TransferMatrix2x2 m = ms::interface_matrix(s_up, s_down, length(rng), k0);
        CHECK(m.det().real() == doctest::Approx(s_down / s_up).epsilon(1e-12));
        CHECK(m.det().imag() == doctest::Approx(0.0).scale(1.0));
    }
}

TEST_CASE("matched zero-length interface is the identity") {
    const ms::TransferMatrix2x2 m = ms::interface_matrix(0.7, 0.7, 0.0, 42.0);
    CHECK(m.t11 == std::complex<double>(1.0, 0.0));
    CHECK(m.t12 == std::complex<double>(0.0, 0.0));
    CHECK(m.t21 == std::complex<double>(0.0, 0.0));
    CHECK(m.t22 == std::complex<double>(1.0, 0.0));
}

TEST_CASE("interface_matrix rejects bad arguments") {
    CHECK_THROWS_AS(ms::interface_matrix(0.0, 1.0, 0.0, 10.0), std::domain_error);
    CHECK_THROWS_AS(ms::interface_matrix(1.0, -0.5, 0.0, 10.0), std::domain_error);
    CHECK_THROWS_AS(ms::interface_matrix(1.0, 1.0, -1.0, 10.0), std::domain_error);
}

TEST_CASE("total matrix composes interfaces with later ones on the left") {
    const double k0 = ms::make_wave_context(5000.0).wavenumber;
    ms::SegmentChain chain = ms::make_chain({{0.8, 7.0e-3}, {0.3, 11.0e-3}});
    const ms::TransferMatrix2x2 first = ms::interface_matrix(0.8, 0.3, 7.0e-3, k0);
    const ms::TransferMatrix2x2 second = ms::interface_matrix(0.3, chain.port_ratio_out, 11.0e-3, k0);
    const ms::TransferMatrix2x2 expect = second * first;
    const ms::TransferMatrix2x2 got = ms::total_matrix(chain, k0);
    CHECK(std::abs(got.t11 - expect.t11) < 1e-14);
    CHECK(std::abs(got.t12 - expect.t12) < 1e-14);
    CHECK(std::abs(got.t21 - expect.t21) < 1e-14);
    CHECK(std::abs(got.t22 - expect.t22) < 1e-14);
}

TEST_CASE("default cell discretizes into the 33-segment stack") {
    const ms::UnitCellGeometry g;
    const ms::SegmentChain chain = ms::discretize(g);
    REQUIRE(chain.segments.size() == 33);
    CHECK(chain.segments[0].area_ratio == 1.0);
    CHECK(chain.segments[0].length == doctest::Approx(31.0e-3));
    CHECK(chain.segments[1].area_ratio == doctest::Approx(3.0 / 14.3).epsilon(1e-14));
    CHECK(chain.segments[1].length == doctest::Approx(14.3e-3));
    CHECK(chain.segments[2].area_ratio == 1.0);
    CHECK(chain.segments[2].length == doctest::Approx(50.0e-3 - 31.0e-3 - 14.3e-3).epsilon(1e-12));
    // Plates sit at indices 3, 5, ..., 31; spacers fill the gaps between them.
    int plates = 0;
    for (size_t i = 3; i + 1 < chain.segments.size(); ++i) {
        if (i % 2 == 1) {
            CHECK(chain.segments[i].area_ratio == doctest::Approx(3.0 / 14.3).epsilon(1e-14));
            CHECK(chain.segments[i].length == doctest::Approx(1.0e-3));
            ++plates;
        } else {
            CHECK(chain.segments[i].area_ratio == 1.0);
            CHECK(chain.segments[i].length == doctest::Approx(4.0e-3));
        }
    }
    CHECK(plates == 15);
    CHECK(chain.segments.back().area_ratio == 1.0);
    CHECK(chain.segments.back().length == doctest::Approx(4.0e-3));
    CHECK(chain.port_ratio_in == 1.0);
    CHECK(chain.port_ratio_out == 1.0);
}

TEST_CASE("fully open widths degenerate to a uniform duct") {
    ms::UnitCellGeometry g;
    g.w = g.L;
    g.w2 = g.L;
    const ms::SegmentChain chain = ms::discretize(g);
    for (const ms::Segment& s : chain.segments) CHECK(s.area_ratio == doctest::Approx(1.0).epsilon(1e-14));
    // A uniform duct transmits everything: |t| = 1, r = 0.
    const double k0 = ms::make_wave_context(6000.0).wavenumber;
    const ms::ScatteringResult sc = ms::scattering(chain, k0);
    CHECK(std::abs(sc.t) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(sc.r) < 1e-12);
}

TEST_CASE("plate open fraction is slit width over pitch") {
    ms::UnitCellGeometry g;
    g.w2 = 5.0e-3;
    const ms::SegmentChain chain = ms::discretize(g);
    CHECK(chain.segments[3].area_ratio == doctest::Approx(5.0 / 14.3).epsilon(1e-14));
}

TEST_CASE("geometry validation rejects out-of-range parameters") {
    ms::UnitCellGeometry g;
    g.h1 = 40.0e-3;  // h1 + h2 = 54.3 mm > 50 mm upper region
    CHECK_THROWS_AS(ms::discretize(g), std::invalid_argument);
    g = {};
    g.w2 = 0.0;
    CHECK_THROWS_AS(ms::discretize(g), std::invalid_argument);
    g = {};
    g.w2 = 20.0e-3;  // wider than the pitch
    CHECK_THROWS_AS(ms::discretize(g), std::invalid_argument);
    g = {};
    g.end_correction_factor = 0.0;
    CHECK_THROWS_AS(ms::discretize(g), std::invalid_argument);
}

TEST_CASE("end correction scales only the constricted segment lengths") {
    ms::UnitCellGeometry g;
    g.end_correction_factor = 1.25;
    const ms::SegmentChain chain = ms::discretize(g);
    CHECK(chain.segments[1].length == doctest::Approx(1.25 * 14.3e-3).epsilon(1e-14));
    CHECK(chain.segments[3].length == doctest::Approx(1.25e-3).epsilon(1e-14));
    CHECK(chain.segments[2].length == doctest::Approx(4.7e-3).epsilon(1e-12));
    CHECK(chain.segments[4].length == doctest::Approx(4.0e-3).epsilon(1e-14));
}

TEST_CASE("nearly blocked plate reflects like a hard wall at its depth") {
    // One near-closed plate 10 mm in: r ~ -exp(-2 j k d), |t| ~ 0.
    const double k0 = ms::make_wave_context(6000.0).wavenumber;
    const ms::SegmentChain chain =
        ms::make_chain({{1.0, 10.0e-3}, {1.0e-6, 1.0e-3}, {1.0, 10.0e-3}});
    const ms::ScatteringResult sc = ms::scattering(chain, k0);
    CHECK(std::abs(sc.r) > 0.99);
    CHECK(std::abs(sc.t) < 1e-4);
    const std::complex<double> wall = -std::exp(std::complex<double>(0.0, -2.0 * k0 * 10.0e-3));
    CHECK(ms::phase_distance(std::arg(sc.r), std::arg(wall)) < 1e-3);
    CHECK(std::arg(sc.r) == doctest::Approx(0.9434).epsilon(1e-3));
}

TEST_CASE("narrow slab gap reflects strongly") {
    ms::UnitCellGeometry g;
    g.w = 0.1e-3;
    const double k0 = ms::make_wave_context(6000.0).wavenumber;
    const ms::ScatteringResult sc = ms::scattering(ms::discretize(g), k0);
    CHECK(std::abs(sc.r) > 0.95);
}

TEST_CASE("reflection magnitude grows as the slab gap narrows") {
    const double k0 = ms::make_wave_context(6000.0).wavenumber;
    double prev = 0.0;
    for (double w_mm = 1.0; w_mm >= 0.1 - 1e-9; w_mm -= 0.1) {
        ms::UnitCellGeometry g;
        g.w = w_mm * 1e-3;
        const double mag = std::abs(ms::scattering(ms::discretize(g), k0).r);
        CHECK(mag >= prev - 1e-12);
        prev = mag;
    }
}

TEST_CASE("micrometer length perturbations barely move the response") {
    const double k0 = ms::make_wave_context(6000.0).wavenumber;
    const ms::SegmentChain base = ms::discretize(ms::UnitCellGeometry{});
    const std::complex<double> r0 = ms::scattering(base, k0).r;
    std::vector<double> deltas;
    for (size_t i = 0; i < base.segments.size(); ++i) {
        std::vector<ms::Segment> segs = base.segments;
        segs[i].length += 1.0e-6;
        deltas.push_back(std::abs(ms::scattering(ms::make_chain(segs), k0).r - r0));
    }
    std::sort(deltas.begin(), deltas.end());
    CHECK(deltas[deltas.size() / 2] < 1e-2);
}

TEST_CASE("equal-port chains conserve energy and are reciprocal") {
    std::mt19937_64 rng(42u);
    const double k0 = ms::make_wave_context(6000.0).wavenumber;
    for (int i = 0; i < 50; ++i) {
        const ms::SegmentChain chain = random_equal_port_chain(rng);
        const ms::ScatteringResult fwd = ms::scattering(chain, k0);
        CHECK(std::abs(std::norm(fwd.r) + std::norm(fwd.t) - 1.0) < 1e-9);
        const ms::ScatteringResult rev = ms::scattering(reversed(chain), k0);
        CHECK(std::abs(fwd.t - rev.t) < 1e-9);
    }
}

TEST_CASE("transfer matrices agree with the dense linear-system solution") {
    std::mt19937_64 rng(7u);
    std::uniform_real_distribution<double> freq(4000.0, 8000.0);
    for (int i = 0; i < 50; ++i) {
        const ms::SegmentChain chain = random_equal_port_chain(rng);
        const double k0 = ms::make_wave_context(freq(rng)).wavenumber;
        const ms::ScatteringResult fast = ms::scattering(chain, k0);
        const ms::ScatteringResult slow = ms::brute_force_oracle(chain, k0);
        CHECK(std::abs(fast.r - slow.r) < 1e-10);
        CHECK(std::abs(fast.t - slow.t) < 1e-10);
    }
}

TEST_CASE("scattering rejects a non-positive wavenumber") {
    const ms::SegmentChain chain = ms::make_chain({{1.0, 1.0e-3}, {0.5, 1.0e-3}});
    CHECK_THROWS_AS(ms::scattering(chain, 0.0), std::domain_error);
    CHECK_THROWS_AS(ms::scattering(chain, -5.0), std::domain_error);
}

TEST_CASE("port ratios must match the terminal segments") {
    ms::SegmentChain chain = ms::make_chain({{1.0, 1.0e-3}, {0.5, 1.0e-3}});
    chain.port_ratio_in = 0.25;
    CHECK_THROWS_AS(chain.validate(), std::invalid_argument);
}

TEST_CASE("area ratios above unity are rejected") {
    CHECK_THROWS_AS(ms::make_chain({{1.5, 1.0e-3}}), std::invalid_argument);
    CHECK_THROWS_AS(ms::make_chain({{0.0, 1.0e-3}}), std::invalid_argument);
}

}
