#include <doctest.h>

#include <random>

#include "gfm/stability.hpp"

using namespace gfm;

TEST_CASE("power-angle curve amplitude and equilibria") {
    const auto curve = power_angle_curve(1.0, 0.5, 0.2, 0.1);
    CHECK(curve.p_max == doctest::Approx(1.0 * 0.5 / 0.3).epsilon(1e-14));
    CHECK(curve.p(0.0) == 0.0);

    const auto eq = equilibria(curve, 0.5);
    REQUIRE(eq.has_value());
    CHECK(eq->delta_sep == doctest::Approx(0.3046926540).epsilon(1e-9));
    CHECK(eq->delta_uep == doctest::Approx(pi - 0.3046926540).epsilon(1e-9));

    const auto trivial = equilibria(curve, 0.0);
    REQUIRE(trivial.has_value());
    CHECK(trivial->delta_sep == 0.0);
    CHECK(trivial->delta_uep == doctest::Approx(pi));

    const auto marginal = equilibria(curve, curve.p_max);
    REQUIRE(marginal.has_value());
    CHECK(marginal->delta_sep == doctest::Approx(pi / 2));
    CHECK(marginal->delta_uep == doctest::Approx(pi / 2));

    CHECK_FALSE(equilibria(curve, curve.p_max * 1.0001).has_value());
}

TEST_CASE("equal-area: immediate clearing is stable, areas are consistent") {
    const PowerAngleCurve pre{3.0, 0.0};
    const PowerAngleCurve fault{0.4, 0.0};
    const PowerAngleCurve post = pre;
    const double p_star = 0.6;
    const double d0 = std::asin(p_star / pre.p_max);

    const auto zero_hold = equal_area(pre, fault, post, p_star, d0);
    CHECK(zero_hold.s_plus == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(zero_hold.stable);

    // closed forms against numerical quadrature
    const double dc = 1.1;
    const auto r = equal_area(pre, fault, post, p_star, dc);
    auto quad = [&](auto f, double a, double b) {
        const int n = 200001;
        double acc = 0.0;
        const double h = (b - a) / (n - 1);
        for (int k = 0; k < n; ++k) {
            const double w = (k == 0 || k == n - 1) ? 0.5 : 1.0;
            acc += w * f(a + k * h);
        }
        return acc * h;
    };
    const double s_plus_q = quad([&](double d) { return p_star - fault.p(d); }, d0, dc);
    const double d_u = pi - std::asin(p_star / post.p_max);
    const double s_minus_q = quad([&](double d) { return post.p(d) - p_star; }, dc, d_u);
    CHECK(r.s_plus == doctest::Approx(s_plus_q).epsilon(1e-8));
    CHECK(r.s_minus == doctest::Approx(s_minus_q).epsilon(1e-8));
}

TEST_CASE("critical clearing angle balances the areas") {
    const PowerAngleCurve pre{3.0, 0.0};
    const PowerAngleCurve fault{0.3, 0.0};
    const PowerAngleCurve post{2.0, 0.0};
    const double p_star = 0.6;
    const auto dc = critical_clearing_angle(pre, fault, post, p_star);
    REQUIRE(dc.has_value());
    const auto at = equal_area(pre, fault, post, p_star, *dc);
    CHECK(std::abs(at.s_plus - at.s_minus) < 1e-8);
    // clearing slightly earlier is stable, slightly later is not
    CHECK(equal_area(pre, fault, post, p_star, *dc - 1e-6).stable);
    CHECK_FALSE(equal_area(pre, fault, post, p_star, *dc + 1e-6).stable);
}

TEST_CASE("degenerate equal-area: fault-on curve equals post-fault curve") {
    // first-order verdict: stable whenever the equilibrium exists
    const PowerAngleCurve pre{3.0, 0.0};
    const PowerAngleCurve fault{2.0, 0.0};
    const double p_star = 0.6;
    const auto dc = critical_clearing_angle(pre, fault, fault, p_star);
    CHECK_FALSE(dc.has_value()); // no finite critical angle: always stable
    const double d_u = pi - std::asin(p_star / fault.p_max);
    CHECK(equal_area(pre, fault, fault, p_star, d_u * 0.999).stable);
}

TEST_CASE("energy function values and swing dissipation identity") {
    const EnergyParams at_sep{5.0, 1.6667, 0.5, std::asin(0.5 / 1.6667)};
    CHECK(energy_function(0.0, at_sep.delta0, at_sep) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(energy_function(0.1, at_sep.delta0, at_sep) == doctest::Approx(0.025).epsilon(1e-14));

    // damped swing: V(t) - V(0) = -integral d_sw w^2 dt to 1e-6 relative
    const SwingParams swing = swing_from_vsm(5.0, 25.0, 0.5, omega0_default);
    const PowerAngleCurve curve{1.6667, 0.0};
    const double d0 = std::asin(swing.p_star / curve.p_max);
    const EnergyParams eprm{swing.m, curve.p_max, swing.p_star, d0};
    const auto tr = integrate_swing(swing, d0 + 0.6, 0.0, [&](double) { return curve.p_max; },
                                    1e-4, 40000);
    const double v0 = energy_function(tr.w.front(), tr.delta.front(), eprm);
    double worst = 0.0;
    for (size_t k = 0; k < tr.t.size(); k += 100) {
        const double vk = energy_function(tr.w[k], tr.delta[k], eprm);
        worst = std::max(worst, std::abs(vk - v0 + tr.dissipated[k]));
    }
    const double scale = std::max(std::abs(v0), tr.dissipated.back());
    CHECK(worst / scale < 1e-6);

    // undamped: conserved
    const SwingParams lossless = swing_from_vsm(5.0, 0.0, 0.5, omega0_default);
    const auto tr0 = integrate_swing(lossless, d0 + 0.6, 0.0, [&](double) { return curve.p_max; },
                                     1e-4, 40000);
    double drift = 0.0;
    for (size_t k = 0; k < tr0.t.size(); k += 100)
        drift = std::max(drift, std::abs(energy_function(tr0.w[k], tr0.delta[k], eprm) - v0));
    CHECK(drift / std::abs(v0) < 1e-8);
}

TEST_CASE("fault-on travel time matches a reference swing integration") {
    const SwingParams swing = swing_from_vsm(5.0, 0.0, 0.5, omega0_default);
    const PowerAngleCurve fault{0.3, 0.0}; // no fault-on equilibrium: p* > p_max
    const double d0 = 0.2;
    const double d_end = 1.5;
    const double t_quad = fault_on_travel_time(swing, fault, d0, d_end);

    const double dt = 1e-6;
    const auto tr = integrate_swing(swing, d0, 0.0, [&](double) { return fault.p_max; }, dt,
                                    static_cast<int>(2.0 / dt));
    double t_sim = -1.0;
    for (size_t k = 1; k < tr.delta.size(); ++k) {
        if (tr.delta[k] >= d_end) {
            const double frac = (d_end - tr.delta[k - 1]) / (tr.delta[k] - tr.delta[k - 1]);
            t_sim = tr.t[k - 1] + frac * dt;
            break;
        }
    }
    REQUIRE(t_sim > 0.0);
    CHECK(std::abs(t_quad - t_sim) < 1e-6);
}

TEST_CASE("dvoc condition: algebraic reduction and eta independence") {
    DvocStabilityInputs in;
    in.alpha = 0.8;
    in.phi = pi / 2;
    in.p_star = 0.0;
    in.q_star = 0.0;
    in.v_lambda_steady = in.v_lambda_star = 1.0;
    in.y = 1.0 / Cx{0.0, 0.33};

    auto r = dvoc_stability_condition(in);
    // reduces to alpha < alpha/2 + Re{e^{j phi} y}
    CHECK(r.lhs == doctest::Approx(in.alpha));
    CHECK(r.rhs == doctest::Approx(0.5 * in.alpha + (std::polar(1.0, in.phi) * in.y).real()));
    CHECK(r.satisfied == ((std::polar(1.0, in.phi) * in.y).real() > 0.5 * in.alpha));

    in.eta = 123.0; // eta does not appear
    const auto r2 = dvoc_stability_condition(in);
    CHECK(r2.lhs == r.lhs);
    CHECK(r2.rhs == r.rhs);

    // invariance under the consistent per-unit rescaling
    DvocStabilityInputs scaled = in;
    const double c = 1.7;
    scaled.p_star = in.p_star * c;
    scaled.q_star = in.q_star * c;
    scaled.v_star = in.v_star * std::sqrt(c);
    scaled.v_lambda_star = in.v_lambda_star * std::sqrt(c);
    scaled.v_lambda_steady = in.v_lambda_steady * std::sqrt(c);
    const auto r3 = dvoc_stability_condition(scaled);
    CHECK(r3.lhs == doctest::Approx(r.lhs).epsilon(1e-12));
    CHECK(r3.rhs == doctest::Approx(r.rhs).epsilon(1e-12));
}

TEST_CASE("equivalent impedances of the baselines") {
    const AdaptiveViConfig cfg{1.0, 0.91, 10.0};
    CHECK(std::abs(equivalent_impedance_adaptive_vi(1.0, cfg)) == 0.0);
    const Cx za = equivalent_impedance_adaptive_vi(1.05, cfg);
    CHECK(za.real() == doctest::Approx(0.91 * 0.05).epsilon(1e-12));
    CHECK(za.imag() == doctest::Approx(9.1 * 0.05).epsilon(1e-12));

    const VirtualImpedance zv{0.0, 0.2};
    const Cx zb = equivalent_impedance_limiter_va(2.2, zv, 1.1);
    CHECK(zb.real() == doctest::Approx(0.0));
    CHECK(zb.imag() == doctest::Approx(0.4).epsilon(1e-14));

    CHECK(equivalent_impedance_crossforming(zv) == zv.z());
}
