#include "gfm/stability.hpp"

#include <stdexcept>

#include "gfm/errors.hpp"

namespace gfm {

PowerAngleCurve power_angle_curve(double v_hat_mag, double v_g_mag, double x_v, double x_g) {
    if (!(x_v + x_g > 0.0)) throw std::invalid_argument("power_angle_curve: x_v + x_g must be positive");
    return {v_hat_mag * v_g_mag / (x_v + x_g), 0.0};
}

PowerAngleCurve power_angle_curve_uniform_xr(double v_hat_mag, double v_g_mag, Cx z_total) {
    if (!(std::abs(z_total) > 0.0))
        throw std::invalid_argument("power_angle_curve_uniform_xr: |z_total| must be positive");
    return {v_hat_mag * v_g_mag / std::abs(z_total), 0.0};
}

std::optional<Equilibria> equilibria(const PowerAngleCurve& curve, double p_star) {
    if (std::abs(p_star) > curve.p_max) return std::nullopt;
    const double d0 = std::asin(p_star / curve.p_max);
    return Equilibria{d0, pi - d0};
}

namespace {

// int (p* - pf sin d) dd from a to b
double accel_area(double p_star, double p_max_fault, double a, double b) {
    return p_star * (b - a) + p_max_fault * (std::cos(b) - std::cos(a));
}

// int (pp sin d - p*) dd from a to b
double decel_area(double p_star, double p_max_post, double a, double b) {
    return p_max_post * (std::cos(a) - std::cos(b)) - p_star * (b - a);
}

} // namespace

EqualAreaResult equal_area(const PowerAngleCurve& pre_fault, const PowerAngleCurve& fault_on,
                           const PowerAngleCurve& post_fault, double p_star, double delta_clear) {
    const auto eq_pre = equilibria(pre_fault, p_star);
    if (!eq_pre) throw std::invalid_argument("equal_area: no pre-fault equilibrium");
    const double d0 = eq_pre->delta_sep;

    EqualAreaResult r;
    r.delta_clear = delta_clear;
    r.s_plus = accel_area(p_star, fault_on.p_max, d0, delta_clear);

    const auto eq_post = equilibria(post_fault, p_star);
    if (!eq_post) {
        r.s_minus = 0.0;
        r.stable = r.s_plus <= 0.0;
        return r;
    }
    r.s_minus = decel_area(p_star, post_fault.p_max, delta_clear, eq_post->delta_uep);
    r.stable = r.s_minus >= r.s_plus;
    return r;
}

std::optional<double> critical_clearing_angle(const PowerAngleCurve& pre_fault,
                                              const PowerAngleCurve& fault_on,
                                              const PowerAngleCurve& post_fault, double p_star) {
    const auto eq_pre = equilibria(pre_fault, p_star);
    const auto eq_post = equilibria(post_fault, p_star);
    if (!eq_pre || !eq_post) return std::nullopt;
    const double lo0 = eq_pre->delta_sep;
    const double hi0 = eq_post->delta_uep;
    auto margin = [&](double dc) {
        const auto r = equal_area(pre_fault, fault_on, post_fault, p_star, dc);
        return r.s_minus - r.s_plus; // decreasing in dc
    };
    if (margin(hi0) >= 0.0) return std::nullopt; // stable all the way to the UEP
    if (margin(lo0) < 0.0) return lo0;           // unstable immediately
    double lo = lo0, hi = hi0;
    while (hi - lo > 1e-10) {
        const double mid = 0.5 * (lo + hi);
        (margin(mid) >= 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

SwingParams swing_from_vsm(double t_j, double d, double p_star, double omega0) {
    return {t_j / omega0, d / omega0, p_star};
}

double fault_on_travel_time(const SwingParams& swing, const PowerAngleCurve& fault_on,
                            double delta_start, double delta_end) {
    if (!(delta_end > delta_start))
        throw std::invalid_argument("fault_on_travel_time: requires delta_end > delta_start");
    // Kinetic energy along the undamped fault-on swing starting at rest:
    //   1/2 m w^2 = W(delta) = p*(delta - d0) + pf (cos delta - cos d0)
    auto work = [&](double d) {
        return swing.p_star * (d - delta_start) +
               fault_on.p_max * (std::cos(d) - std::cos(delta_start));
    };
    // substitute delta = delta_start + s^2 to regularize the 1/sqrt start
    auto integrand = [&](double s) {
        const double d = delta_start + s * s;
        const double w2 = 2.0 * work(d) / swing.m;
        if (w2 <= 0.0) {
            // limit value at s -> 0: 2 s / sqrt(2 W'(d0) s^2 / m)
            const double slope = swing.p_star - fault_on.p_max * std::sin(delta_start);
            if (slope <= 0.0) throw NumericalError("fault_on_travel_time: swing does not accelerate");
            return 2.0 / std::sqrt(2.0 * slope / swing.m);
        }
        return 2.0 * s / std::sqrt(w2);
    };
    // adaptive Simpson
    std::function<double(double, double, double, double, double, double)> simp =
        [&](double a, double b, double fa, double fm, double fb, double whole) -> double {
        const double m = 0.5 * (a + b);
        const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
        const double flm = integrand(lm), frm = integrand(rm);
        const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if (std::abs(left + right - whole) < 1e-12 || b - a < 1e-9) return left + right;
        return simp(a, m, fa, flm, fm, left) + simp(m, b, fm, frm, fb, right);
    };
    const double s_end = std::sqrt(delta_end - delta_start);
    const double fa = integrand(0.0), fb = integrand(s_end), fm = integrand(0.5 * s_end);
    const double whole = s_end / 6.0 * (fa + 4.0 * fm + fb);
    return simp(0.0, s_end, fa, fm, fb, whole);
}

double energy_function(double w, double delta, const EnergyParams& prm) {
    return 0.5 * prm.t_j * w * w - prm.p_max * (std::cos(delta) - std::cos(prm.delta0)) -
           prm.p_star * (delta - prm.delta0);
}

SwingTrajectory integrate_swing(const SwingParams& swing, double delta_init, double w_init,
                                const std::function<double(double)>& p_max_of_t, double dt,
                                int steps) {
    SwingTrajectory tr;
    tr.t.reserve(steps + 1);
    tr.delta.reserve(steps + 1);
    tr.w.reserve(steps + 1);
    tr.dissipated.reserve(steps + 1);

    double delta = delta_init, w = w_init, diss = 0.0, t = 0.0;
    auto rates = [&](double tt, double d, double ww, double& dd, double& dw, double& de) {
        dd = ww;
        dw = (swing.p_star - p_max_of_t(tt) * std::sin(d) - swing.d_sw * ww) / swing.m;
        de = swing.d_sw * ww * ww;
    };
    tr.t.push_back(t);
    tr.delta.push_back(delta);
    tr.w.push_back(w);
    tr.dissipated.push_back(diss);
    for (int k = 0; k < steps; ++k) {
        double k1d, k1w, k1e, k2d, k2w, k2e, k3d, k3w, k3e, k4d, k4w, k4e;
        rates(t, delta, w, k1d, k1w, k1e);
        rates(t + 0.5 * dt, delta + 0.5 * dt * k1d, w + 0.5 * dt * k1w, k2d, k2w, k2e);
        rates(t + 0.5 * dt, delta + 0.5 * dt * k2d, w + 0.5 * dt * k2w, k3d, k3w, k3e);
        rates(t + dt, delta + dt * k3d, w + dt * k3w, k4d, k4w, k4e);
        delta += dt / 6.0 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d);
        w += dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
        diss += dt / 6.0 * (k1e + 2.0 * k2e + 2.0 * k3e + k4e);
        t += dt;
        tr.t.push_back(t);
        tr.delta.push_back(delta);
        tr.w.push_back(w);
        tr.dissipated.push_back(diss);
    }
    return tr;
}

DvocConditionResult dvoc_stability_condition(const DvocStabilityInputs& in) {
    if (!(std::abs(in.y) > 0.0))
        throw std::invalid_argument("dvoc_stability_condition: |y| must be positive");
    const Cx rot = std::polar(1.0, in.phi);
    DvocConditionResult r;
    r.lhs = (rot * Cx{in.p_star, -in.q_star}).real() / (in.v_star * in.v_star) + in.alpha;
    r.rhs = 0.5 * in.alpha * (in.v_lambda_steady * in.v_lambda_steady) /
                (in.v_lambda_star * in.v_lambda_star) +
            (rot * in.y).real();
    r.satisfied = r.lhs < r.rhs;
    return r;
}

Cx equivalent_impedance_adaptive_vi(double i_mag, const AdaptiveViConfig& cfg) {
    if (i_mag <= cfg.i_th) return {0.0, 0.0};
    return Cx{1.0, cfg.sigma_vi} * cfg.kappa_vi * cfg.i_th * (i_mag / cfg.i_th - 1.0);
}

Cx equivalent_impedance_limiter_va(double i_ref_mag, const VirtualImpedance& z_v, double i_lim) {
    return z_v.z() * (i_ref_mag / i_lim);
}

Cx equivalent_impedance_crossforming(const VirtualImpedance& z_v) { return z_v.z(); }

} // namespace gfm
