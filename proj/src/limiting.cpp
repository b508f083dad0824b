#include "gfm/limiting.hpp"

#include <stdexcept>

namespace gfm {

Cx circular_limit(Cx i_ref, double i_lim) {
    const double mag = std::abs(i_ref);
    if (mag <= i_lim) return i_ref;
    return i_ref * (i_lim / mag);
}

LimitedReference elliptical_limit(const SequencePhasor& i_ref, double i_lim) {
    const double worst = max_phase_magnitude(i_ref);
    LimitedReference out{i_ref, 1.0};
    if (worst > i_lim && worst > 0.0) {
        out.mu = i_lim / worst;
        out.ref.pos = i_ref.pos * out.mu;
        out.ref.neg = i_ref.neg * out.mu;
    }
    return out;
}

LimitedReference dq_limit(Cx i_dq_pos, Cx i_dq_neg, double i_lim) {
    // |i_dq+| = |i+|, |i_dq-| = |i-| and i_dq+ i_dq- = i+ i-, so the phase
    // magnitudes can be evaluated on the dq pair directly.
    return elliptical_limit({i_dq_pos, i_dq_neg}, i_lim);
}

VirtualImpedance adaptive_virtual_impedance(double i_mag_feedback, const AdaptiveViConfig& cfg) {
    VirtualImpedance z;
    if (i_mag_feedback > cfg.i_th) {
        z.r_v = cfg.kappa_vi * (i_mag_feedback - cfg.i_th);
        z.x_v = cfg.sigma_vi * z.r_v;
    }
    return z;
}

double kvi_lower_bound(double v_hat_mag, double i_lim, double i_th, double sigma_vi) {
    if (i_lim <= i_th) throw std::invalid_argument("kvi_lower_bound: requires i_lim > i_th");
    return v_hat_mag / (i_lim * std::sqrt(sigma_vi * sigma_vi + 1.0) * (i_lim - i_th));
}

Cx current_forming_step(CurrentFormingState& state, double p, double p_star, double omega0,
                        const CurrentFormingConfig& cfg, double dt) {
    state.omega = omega0 * (1.0 + cfg.m_p * (p_star - p));
    state.theta += state.omega * dt;
    return std::polar(cfg.i_lim, state.theta - cfg.psi);
}

} // namespace gfm
