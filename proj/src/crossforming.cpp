#include "gfm/crossforming.hpp"

#include <stdexcept>

namespace gfm {

double dos(const SequencePhasor& i_ref, double i_lim) {
    if (!(i_lim > 0.0)) throw std::invalid_argument("dos: i_lim must be positive");
    const double worst = max_phase_magnitude(i_ref);
    if (worst <= 0.0) return 1.0;
    return std::min(1.0, i_lim / worst);
}

Cx virtual_admittance(Cx v_ref_vec, Cx v_pos, const VirtualImpedance& z_v) {
    return (v_ref_vec - v_pos) / z_v.z();
}

double explicit_rate(const ExplicitRegState& s, const SequencePhasor& i_ref_prev, double i_lim) {
    double rate = s.kappa_i * (i_lim - max_phase_magnitude(i_ref_prev));
    // clamp enforcement: stop integrating across the bounds
    if (s.v_lambda_mag <= 0.0 && rate < 0.0) rate = 0.0;
    if (s.v_lambda_mag >= 2.0 * s.v_star_init && rate > 0.0) rate = 0.0;
    return rate;
}

Cx explicit_reference(const ExplicitRegState& s, double v_ref_angle, Cx v_pos,
                      const VirtualImpedance& z_v) {
    return (std::polar(s.v_lambda_mag, v_ref_angle) - v_pos) / z_v.z();
}

Cx explicit_step(ExplicitRegState& s, double v_ref_angle, Cx v_pos,
                 const SequencePhasor& i_ref_prev, double i_lim,
                 const VirtualImpedance& z_v, double dt) {
    s.v_lambda_mag += explicit_rate(s, i_ref_prev, i_lim) * dt;
    s.v_lambda_mag = std::clamp(s.v_lambda_mag, 0.0, 2.0 * s.v_star_init);
    return explicit_reference(s, v_ref_angle, v_pos, z_v);
}

Cx implicit_reference(const ImplicitRegState& s, Cx v_ref_vec, const VirtualImpedance& z_v) {
    const double mu = std::max(s.mu_filtered, mu_floor);
    return (s.kappa * v_ref_vec - s.v_fb_filtered / mu) / z_v.z();
}

Cx implicit_step(ImplicitRegState& s, Cx v_ref_vec, Cx v_pos,
                 const SequencePhasor& i_ref_prev, double i_lim,
                 const VirtualImpedance& z_v, double dt) {
    const double mu_raw = dos(i_ref_prev, i_lim);
    const double a_mu = std::exp(-dt / s.tau_mu);
    const double a_v = std::exp(-dt / s.tau_v);
    s.mu_filtered = mu_raw + (s.mu_filtered - mu_raw) * a_mu;
    s.v_fb_filtered = v_pos + (s.v_fb_filtered - v_pos) * a_v;
    if (s.mu_filtered < mu_floor) {
        s.mu_filtered = mu_floor;
        s.mu_floored = true;
    }
    return implicit_reference(s, v_ref_vec, z_v);
}

std::optional<OperatingPointPair> operating_point_geometry(double v_ref_angle, Cx v_g,
                                                           Cx z_total, double i_lim) {
    if (!(std::abs(z_total) > 0.0))
        throw std::invalid_argument("operating_point_geometry: |z_total| must be positive");
    const double radius = i_lim * std::abs(z_total);
    // Points rho*e^{j angle} on the circle |z - v_g| = radius satisfy
    // rho^2 - 2 rho Re{v_g e^{-j angle}} + |v_g|^2 - radius^2 = 0.
    const double proj = (v_g * std::polar(1.0, -v_ref_angle)).real();
    const double disc = proj * proj - (std::norm(v_g) - radius * radius);
    if (disc < 0.0) return std::nullopt;
    const double root = std::sqrt(disc);
    OperatingPointPair pair;
    pair.s_mag = proj + root;
    pair.u_mag = proj - root;
    pair.stable_candidate = std::polar(1.0, v_ref_angle) * pair.s_mag;
    pair.unstable_candidate = std::polar(1.0, v_ref_angle) * pair.u_mag;
    return pair;
}

bool classify_stable(Cx point, Cx v_g, double v_ref_angle) {
    const double proj = (v_g * std::polar(1.0, -v_ref_angle)).real();
    return proj < std::abs(point);
}

OperatingMode ModeSwitch::update(double i_ref_unsat_mag, double v_pos_mag, double i_lim, double dt) {
    if (lock_timer_ > 0.0) lock_timer_ = std::max(0.0, lock_timer_ - dt);

    if (mode_ == OperatingMode::VoltageForming) {
        if (i_ref_unsat_mag > i_lim && lock_timer_ <= 0.0) {
            enter_timer_ += dt;
            if (enter_timer_ >= cfg_.t_enter) {
                mode_ = OperatingMode::CrossForming;
                enter_timer_ = 0.0;
                exit_timer_ = 0.0;
            }
        } else {
            enter_timer_ = 0.0;
        }
    } else {
        // Exit is driven by fault-clearance detection through the terminal
        // voltage alone: requiring an unsaturated reference as well can
        // deadlock, since the regulator itself may hold the voltage down
        // while stuck at a recovered grid. A brief re-saturation after the
        // switch-back is expected and absorbed by the lockout.
        if (v_pos_mag > cfg_.v_recover) {
            exit_timer_ += dt;
            if (exit_timer_ >= cfg_.t_exit) {
                mode_ = OperatingMode::VoltageForming;
                exit_timer_ = 0.0;
                enter_timer_ = 0.0;
                lock_timer_ = cfg_.t_lock;
            }
        } else {
            exit_timer_ = 0.0;
        }
    }
    return mode_;
}

} // namespace gfm
