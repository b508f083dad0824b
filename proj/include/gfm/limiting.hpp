#ifndef GFM_LIMITING_HPP
#define GFM_LIMITING_HPP

#include "gfm/phasor.hpp"

namespace gfm {

/// Reference-current limiter settings.
struct LimiterConfig {
    double i_lim{1.1}; // pu, maximum phase current magnitude
    enum class Frame { Stationary, Rotational } frame{Frame::Stationary};
};

/// Threshold virtual impedance (Type-A baseline) settings.
struct AdaptiveViConfig {
    double i_th{1.0};     // pu, activation threshold, < i_lim
    double kappa_vi{0.91}; // pu feedback gain
    double sigma_vi{10.0}; // X/R ratio of the emulated impedance
};

/// Saturated current-forming (Type-C baseline) settings.
struct CurrentFormingConfig {
    double m_p{0.02};    // pu frequency droop gain on the angle loop
    double i_lim{1.1};   // pu, current magnitude setpoint
    double psi{pi / 2};  // rad, current angle lag behind the droop angle
};

/// Control-emulated series impedance.
struct VirtualImpedance {
    double r_v{0.0};
    double x_v{0.0};

    Cx z() const { return {r_v, x_v}; }
};

/// Result of limiting a sequence pair: the scaled references and the
/// common scaling factor mu = min(1, i_lim / max phase magnitude).
struct LimitedReference {
    SequencePhasor ref;
    double mu{1.0};
};

/// Scale a balanced reference onto the circle |i| <= i_lim, angle preserved.
Cx circular_limit(Cx i_ref, double i_lim);

/// Scale positive- and negative-sequence references by the common factor
/// that brings the worst phase magnitude to i_lim. The sequence ratio is
/// preserved, so any reference-shaping objective survives the limiting.
LimitedReference elliptical_limit(const SequencePhasor& i_ref, double i_lim);

/// Same limiter acting on dq-frame pairs i_dq+ = e^{-j theta} i+ and
/// i_dq- = e^{+j theta} i-. Phase magnitudes are invariant under the
/// frame mapping, so the scaling equals the stationary-frame result.
LimitedReference dq_limit(Cx i_dq_pos, Cx i_dq_neg, double i_lim);

/// Current-feedback adaptive virtual impedance:
///   r_v = kappa_vi * (|i| - i_th) above the threshold, x_v = sigma_vi * r_v.
VirtualImpedance adaptive_virtual_impedance(double i_mag_feedback, const AdaptiveViConfig& cfg);

/// Smallest adaptive-VI gain that still cancels the full voltage reference
/// in a bolted fault: |v| / (i_lim sqrt(sigma^2+1) (i_lim - i_th)).
/// Throws std::invalid_argument if i_lim <= i_th.
double kvi_lower_bound(double v_hat_mag, double i_lim, double i_th, double sigma_vi);

/// Angle state of the saturated current-forming baseline.
struct CurrentFormingState {
    double theta{0.0};  // rad, unwrapped droop angle
    double omega{0.0};  // rad/s, last angle rate
};

/// One droop step of the current-forming baseline; returns the current
/// reference i_lim at angle (theta - psi).
Cx current_forming_step(CurrentFormingState& state, double p, double p_star, double omega0,
                        const CurrentFormingConfig& cfg, double dt);

} // namespace gfm

#endif
