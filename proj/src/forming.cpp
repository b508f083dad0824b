#include "gfm/forming.hpp"

#include <stdexcept>

namespace gfm {

namespace {

double droop_voltage(double v_star, double m_q, double q_star, double q, bool enabled) {
    return enabled ? v_star + m_q * (q_star - q) : v_star;
}

} // namespace

FormingRefState droop_step(FormingRefState s, double p, double q, const DroopParams& prm, double dt) {
    s.omega = prm.omega0 * (1.0 + prm.m_p * (prm.p_star - p));
    s.theta += s.omega * dt;
    s.v_mag = droop_voltage(prm.v_star, prm.m_q, prm.q_star, q, s.magnitude_droop_enabled);
    return s;
}

double vsm_omega_rate(double omega, double p, const VsmParams& prm) {
    const double w_pu = (omega - prm.omega0) / prm.omega0;
    return prm.omega0 * (-prm.d * w_pu + (prm.p_star - p)) / prm.t_j;
}

FormingRefState vsm_step(FormingRefState s, double p, double q, const VsmParams& prm, double dt) {
    const double dp = prm.p_star - p;
    const double w0 = (s.omega - prm.omega0) / prm.omega0; // pu deviation
    double w1;       // pu deviation after dt
    double w_int;    // integral of the pu deviation over dt
    if (prm.d > 0.0) {
        const double wf = dp / prm.d;
        const double decay = std::exp(-prm.d * dt / prm.t_j);
        w1 = wf + (w0 - wf) * decay;
        w_int = wf * dt + (w0 - wf) * (prm.t_j / prm.d) * (1.0 - decay);
    } else {
        w1 = w0 + dp * dt / prm.t_j;
        w_int = w0 * dt + 0.5 * dp * dt * dt / prm.t_j;
    }
    s.theta += prm.omega0 * dt + prm.omega0 * w_int;
    s.omega = prm.omega0 * (1.0 + w1);
    s.v_mag = droop_voltage(prm.v_star, prm.m_q, prm.q_star, q, s.magnitude_droop_enabled);
    return s;
}

void complex_droop_rates(double v_mag, double p, double q, const DvocParams& prm,
                         double& dtheta_dt, double& dv_dt) {
    const double vs2 = prm.v_star * prm.v_star;
    const double v2 = v_mag * v_mag;
    dtheta_dt = prm.omega0 + prm.eta * (prm.p_star / vs2 - p / v2);
    dv_dt = v_mag * (prm.eta * (prm.q_star / vs2 - q / v2) + prm.eta * prm.alpha * (vs2 - v2) / vs2);
}

FormingRefState complex_droop_step(FormingRefState s, double p, double q, const DvocParams& prm, double dt) {
    if (!(s.v_mag > 0.0))
        throw std::domain_error("complex_droop_step: degenerate voltage magnitude");
    auto f = [&](double v, double& dth, double& dv) { complex_droop_rates(v, p, q, prm, dth, dv); };
    double k1t, k1v, k2t, k2v, k3t, k3v, k4t, k4v;
    f(s.v_mag, k1t, k1v);
    f(s.v_mag + 0.5 * dt * k1v, k2t, k2v);
    f(s.v_mag + 0.5 * dt * k2v, k3t, k3v);
    f(s.v_mag + dt * k3v, k4t, k4v);
    s.theta += dt / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t);
    s.v_mag += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    s.omega = prm.omega0; // refreshed by the next rate evaluation
    double dth_now, dv_now;
    f(s.v_mag, dth_now, dv_now);
    s.omega = dth_now;
    return s;
}

Cx dvoc_rate(Cx v_vec, Cx i_o_pos, const DvocParams& prm) {
    const double vs2 = prm.v_star * prm.v_star;
    const Cx jw{0.0, prm.omega0};
    const Cx drive = std::polar(prm.eta, prm.phi) *
                     (Cx{prm.p_star, -prm.q_star} / vs2 * v_vec - i_o_pos);
    const double mag2 = std::norm(v_vec);
    return jw * v_vec + drive + prm.eta * prm.alpha * (vs2 - mag2) / vs2 * v_vec;
}

namespace {

FormingRefState dvoc_rk4(FormingRefState s, Cx i_eff, const DvocParams& prm, double dt) {
    if (s.v_vec == Cx{0.0, 0.0})
        throw std::domain_error("dvoc_step: zero voltage vector");
    const Cx k1 = dvoc_rate(s.v_vec, i_eff, prm);
    const Cx k2 = dvoc_rate(s.v_vec + 0.5 * dt * k1, i_eff, prm);
    const Cx k3 = dvoc_rate(s.v_vec + 0.5 * dt * k2, i_eff, prm);
    const Cx k4 = dvoc_rate(s.v_vec + dt * k3, i_eff, prm);
    s.v_vec += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    s.v_mag = std::abs(s.v_vec);
    s.theta = std::arg(s.v_vec);
    return s;
}

} // namespace

FormingRefState dvoc_step(FormingRefState s, Cx i_o_pos, const DvocParams& prm, double dt) {
    return dvoc_rk4(s, i_o_pos, prm, dt);
}

FormingRefState enhanced_dvoc_step(FormingRefState s, Cx i_o_pos, double lambda,
                                   const DvocParams& prm, double dt) {
    if (!(lambda > 0.0))
        throw std::domain_error("enhanced_dvoc_step: lambda must be positive");
    return dvoc_rk4(s, i_o_pos / lambda, prm, dt);
}

FormingRefState dual_port_step(FormingRefState s, double p, double q, double v_dc,
                               const DualPortParams& prm, double dt) {
    s.omega = prm.omega0 * (1.0 + prm.m_p * (prm.p_star - p) + prm.m_dc * (v_dc - prm.v_dc_star));
    s.theta += s.omega * dt;
    s.v_mag = droop_voltage(prm.v_star, prm.m_q, prm.q_star, q, s.magnitude_droop_enabled);
    return s;
}

double virtual_power_feedback(Cx v_ref_vec, Cx i_o_pos) {
    return (v_ref_vec * std::conj(i_o_pos)).real();
}

} // namespace gfm
