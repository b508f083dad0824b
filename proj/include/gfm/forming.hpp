#ifndef GFM_FORMING_HPP
#define GFM_FORMING_HPP

#include "gfm/phasor.hpp"

namespace gfm {

// Frequency convention used by every forming law: angles and frequencies are
// carried in rad and rad/s, droop and damping gains act on per-unit
// deviations (omega - omega0) / omega0 and per-unit powers. A gain m_p thus
// maps a 1 pu power mismatch to a frequency offset of m_p * omega0 rad/s.

struct DroopParams {
    double m_p{0.02};   // pu frequency per pu power
    double m_q{0.2};    // pu voltage per pu power
    double p_star{0.0};
    double q_star{0.0};
    double v_star{1.0};
    double omega0{omega0_default};
};

struct VsmParams {
    double t_j{5.0}; // s, inertia time constant
    double d{25.0};  // pu damping
    double m_q{0.2};
    double p_star{0.0};
    double q_star{0.0};
    double v_star{1.0};
    double omega0{omega0_default};
};

struct DvocParams {
    double eta{6.2832};  // rad/s synchronization gain
    double alpha{0.8};   // magnitude regulation gain
    double phi{pi / 2};  // rad, rotation matching the network X/R
    double p_star{0.0};
    double q_star{0.0};
    double v_star{1.0};
    double omega0{omega0_default};
};

struct DualPortParams {
    double m_p{0.02};
    double m_q{0.2};
    double m_dc{1.0};      // pu frequency per pu dc-voltage deviation
    double v_dc_star{1.0}; // pu
    double p_star{0.0};
    double q_star{0.0};
    double v_star{1.0};
    double omega0{omega0_default};
};

/// Voltage-forming reference state shared by all laws. Polar laws use
/// (theta, omega, v_mag); dVOC keeps the full vector v_vec.
struct FormingRefState {
    double theta{0.0};             // rad, unwrapped
    double omega{omega0_default};  // rad/s
    double v_mag{1.0};             // pu
    Cx v_vec{1.0, 0.0};            // pu, dVOC only
    bool magnitude_droop_enabled{true};

    Cx reference_vector() const { return std::polar(v_mag, theta); }
};

/// p-f / q-v droop. Frequency is an algebraic function of power.
FormingRefState droop_step(FormingRefState s, double p, double q, const DroopParams& prm, double dt);

/// Virtual synchronous machine swing dynamics; the step solves the linear
/// frequency ODE exactly for the power held over dt.
FormingRefState vsm_step(FormingRefState s, double p, double q, const VsmParams& prm, double dt);

/// Frequency derivative of the VSM state, rad/s^2 (for external integrators).
double vsm_omega_rate(double omega, double p, const VsmParams& prm);

/// Complex droop control in polar coordinates (RK4 step, frozen p, q).
FormingRefState complex_droop_step(FormingRefState s, double p, double q, const DvocParams& prm, double dt);

/// Polar rates of complex droop: dtheta/dt (rad/s) and dv/dt (pu/s).
void complex_droop_rates(double v_mag, double p, double q, const DvocParams& prm,
                         double& dtheta_dt, double& dv_dt);

/// Dispatchable virtual oscillator vector derivative.
Cx dvoc_rate(Cx v_vec, Cx i_o_pos, const DvocParams& prm);

/// dVOC step in rectangular coordinates (RK4, frozen output current).
FormingRefState dvoc_step(FormingRefState s, Cx i_o_pos, const DvocParams& prm, double dt);

/// Enhanced dVOC: current feedback scaled by 1/lambda to describe the
/// internal-voltage dynamics during current saturation. lambda > 0 required.
FormingRefState enhanced_dvoc_step(FormingRefState s, Cx i_o_pos, double lambda,
                                   const DvocParams& prm, double dt);

/// AC-DC dual-port droop; v_dc is an exogenous measurement.
FormingRefState dual_port_step(FormingRefState s, double p, double q, double v_dc,
                               const DualPortParams& prm, double dt);

/// Active power computed against the reference voltage instead of the
/// measured terminal voltage: p = Re{v_ref conj(i_o+)}.
double virtual_power_feedback(Cx v_ref_vec, Cx i_o_pos);

} // namespace gfm

#endif
