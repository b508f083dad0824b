#include <doctest.h>

#include <random>

#include "gfm/limiting.hpp"

using namespace gfm;

namespace {
std::mt19937_64 rng_for(uint64_t seed) { return std::mt19937_64{0x11770000u + seed}; }
Cx random_cx(std::mt19937_64& rng, double max_mag = 3.0) {
    std::uniform_real_distribution<double> mag(0.0, max_mag);
    std::uniform_real_distribution<double> ang(-pi, pi);
    return std::polar(mag(rng), ang(rng));
}
} // namespace

TEST_CASE("circular limiter") {
    const Cx small = std::polar(0.5, pi / 6);
    CHECK(circular_limit(small, 1.1) == small);

    const Cx big = circular_limit(std::polar(2.2, pi / 6), 1.1);
    CHECK(std::abs(big) == doctest::Approx(1.1).epsilon(1e-15));
    CHECK(std::arg(big) == doctest::Approx(pi / 6).epsilon(1e-15));

    auto rng = rng_for(1);
    for (int k = 0; k < 200; ++k) {
        const Cx ref = random_cx(rng);
        const Cx out = circular_limit(ref, 1.1);
        CHECK(std::abs(out) <= 1.1 + 1e-15);
        if (std::abs(ref) > 1e-12)
            CHECK(std::abs(std::arg(out) - std::arg(ref)) < 1e-15);
    }
}

TEST_CASE("elliptical limiter reduces to circular for balanced refs") {
    auto rng = rng_for(2);
    for (int k = 0; k < 100; ++k) {
        const Cx ref = random_cx(rng);
        const auto lim = elliptical_limit({ref, Cx{0.0, 0.0}}, 1.1);
        CHECK(std::abs(lim.ref.pos - circular_limit(ref, 1.1)) < 1e-15);
        CHECK(std::abs(lim.ref.neg) == 0.0);
    }
}

TEST_CASE("elliptical limiter: worst-phase scaling and ratio preservation") {
    const SequencePhasor ref{Cx{1.0, 0.0}, Cx{0.5, 0.0}};
    const auto lim = elliptical_limit(ref, 1.1);
    CHECK(lim.mu == doctest::Approx(1.1 / 1.5).epsilon(1e-14));
    CHECK(max_phase_magnitude(lim.ref) == doctest::Approx(1.1).epsilon(1e-13));

    auto rng = rng_for(3);
    for (int k = 0; k < 200; ++k) {
        const SequencePhasor r{random_cx(rng), random_cx(rng)};
        const auto l = elliptical_limit(r, 1.1);
        const double pre = max_phase_magnitude(r);
        CHECK(max_phase_magnitude(l.ref) == doctest::Approx(std::min(pre, 1.1)).epsilon(1e-12));
        // sequence ratio invariant (cross-multiplied to avoid division rounding)
        if (std::abs(r.pos) > 1e-12 && std::abs(r.neg) > 1e-12) {
            const double scale = std::abs(r.pos) * std::abs(l.ref.neg);
            CHECK(std::abs(l.ref.neg * r.pos - l.ref.pos * r.neg) <= 1e-15 * std::max(1.0, scale));
        }
        // idempotent
        const auto twice = elliptical_limit(l.ref, 1.1);
        CHECK(std::abs(twice.ref.pos - l.ref.pos) < 1e-15);
        CHECK(std::abs(twice.ref.neg - l.ref.neg) < 1e-15);
    }
}

TEST_CASE("dq limiter equals the stationary-frame limiter under frame mapping") {
    auto rng = rng_for(4);
    std::uniform_real_distribution<double> ang(-pi, pi);
    for (int k = 0; k < 200; ++k) {
        const SequencePhasor r{random_cx(rng), random_cx(rng)};
        const double theta = ang(rng);
        const Cx i_dq_pos = rotate(r.pos, -theta);
        const Cx i_dq_neg = rotate(r.neg, +theta);
        const auto stat = elliptical_limit(r, 1.1);
        const auto rot = dq_limit(i_dq_pos, i_dq_neg, 1.1);
        CHECK(std::abs(rotate(rot.ref.pos, +theta) - stat.ref.pos) < 1e-12);
        CHECK(std::abs(rotate(rot.ref.neg, -theta) - stat.ref.neg) < 1e-12);
        CHECK(rot.mu == doctest::Approx(stat.mu).epsilon(1e-13));
    }
}

TEST_CASE("adaptive virtual impedance") {
    const AdaptiveViConfig cfg{0.9, 0.91, 10.0};
    const auto at_threshold = adaptive_virtual_impedance(0.9, cfg);
    CHECK(at_threshold.r_v == 0.0);
    CHECK(at_threshold.x_v == 0.0);

    const auto engaged = adaptive_virtual_impedance(1.0, cfg);
    CHECK(engaged.r_v == doctest::Approx(0.091).epsilon(1e-14));
    CHECK(engaged.x_v == doctest::Approx(0.91).epsilon(1e-14));
}

TEST_CASE("adaptive-VI gain lower bound") {
    const double bound = kvi_lower_bound(1.0, 1.1, 1.0, 10.0);
    CHECK(bound == doctest::Approx(0.9045804).epsilon(1e-6)); // 1/(1.1 sqrt(101) 0.1)
    CHECK(bound < 0.91); // the default gain satisfies it

    CHECK(kvi_lower_bound(1.0, 1.1, 1.0, 1e9) < 1e-8);
    // doubling the headroom halves the bound (same i_lim)
    const double b1 = kvi_lower_bound(1.0, 1.3, 1.1, 10.0);
    const double b2 = kvi_lower_bound(1.0, 1.3, 0.9, 10.0);
    CHECK(b1 == doctest::Approx(2.0 * b2).epsilon(1e-12));

    CHECK_THROWS(kvi_lower_bound(1.0, 1.0, 1.0, 10.0));
}

TEST_CASE("current-forming droop step") {
    const CurrentFormingConfig cfg{0.02, 1.1, pi / 2};
    CurrentFormingState st{0.0, 0.0};
    // at the setpoint the angle rotates at omega0 and |i| stays at the limit
    const double dt = 1e-4;
    Cx ref{};
    for (int k = 0; k < 100; ++k) ref = current_forming_step(st, 0.2, 0.2, omega0_default, cfg, dt);
    CHECK(std::abs(ref) == doctest::Approx(1.1).epsilon(1e-14));
    CHECK(st.omega == doctest::Approx(omega0_default));
    CHECK(st.theta == doctest::Approx(omega0_default * 100 * dt).epsilon(1e-12));
    CHECK(std::arg(ref) == doctest::Approx(wrap_angle(st.theta - pi / 2)).epsilon(1e-9));
}
