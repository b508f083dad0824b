#ifndef GFM_STABILITY_HPP
#define GFM_STABILITY_HPP

#include <functional>
#include <optional>
#include <vector>

#include "gfm/limiting.hpp"
#include "gfm/phasor.hpp"

namespace gfm {

/// Sinusoidal power-angle relationship p(delta) = p_max sin(delta).
struct PowerAngleCurve {
    double p_max{0.0}; // pu
    double theta_g{0.0}; // rad, grid source angle (delta is measured from it)

    double p(double delta) const { return p_max * std::sin(delta); }
};

/// Saturated cross-forming power-angle amplitude: the virtual power against
/// the reference magnitude is v_hat * v_g / (x_v + x_g), independent of the
/// internal-voltage magnitude.
PowerAngleCurve power_angle_curve(double v_hat_mag, double v_g_mag, double x_v, double x_g);

/// For a network with uniform X/R ratio the same sine law holds for the
/// impedance-angle-rotated power with amplitude v_hat*v_g/|z_total|.
PowerAngleCurve power_angle_curve_uniform_xr(double v_hat_mag, double v_g_mag, Cx z_total);

struct Equilibria {
    double delta_sep; // stable equilibrium, asin(p*/p_max)
    double delta_uep; // unstable equilibrium, pi - delta_sep
};

/// Equilibria of p(delta) = p_star, or nullopt when |p*| > p_max.
std::optional<Equilibria> equilibria(const PowerAngleCurve& curve, double p_star);

struct EqualAreaResult {
    double s_plus{0.0};   // accelerating area up to the clearing angle
    double s_minus{0.0};  // decelerating area up to the post-fault UEP
    bool stable{false};
    double delta_clear{0.0};
};

/// Closed-form equal-area evaluation for a fault cleared at delta_clear.
/// The accelerating interval starts at the pre-fault SEP.
EqualAreaResult equal_area(const PowerAngleCurve& pre_fault, const PowerAngleCurve& fault_on,
                           const PowerAngleCurve& post_fault, double p_star, double delta_clear);

/// Critical clearing angle: the delta_clear that balances both areas,
/// found by bisection to 1e-10 rad. nullopt when every clearing angle up to
/// the post-fault UEP is stable or the post-fault SEP is missing.
std::optional<double> critical_clearing_angle(const PowerAngleCurve& pre_fault,
                                              const PowerAngleCurve& fault_on,
                                              const PowerAngleCurve& post_fault, double p_star);

/// Swing-equation coefficients for angle dynamics in rad and rad/s:
///   d(delta)/dt = w,   m dw/dt = p_star - p_max sin(delta) - d_sw w.
/// A per-unit VSM (inertia t_j, damping d on pu frequency) maps to
/// m = t_j/omega0 and d_sw = d/omega0.
struct SwingParams {
    double m{0.0};
    double d_sw{0.0};
    double p_star{0.0};
};

struct VsmParams;
SwingParams swing_from_vsm(double t_j, double d, double p_star, double omega0);

/// Time for the undamped fault-on swing to travel from the pre-fault SEP to
/// delta_end (adaptive quadrature of the energy integral, singularity at the
/// start removed analytically).
double fault_on_travel_time(const SwingParams& swing, const PowerAngleCurve& fault_on,
                            double delta_start, double delta_end);

/// Energy of the swing pair (w, delta) relative to the SEP delta0:
///   V = 1/2 t_j w^2 - p_max (cos(delta) - cos(delta0)) - p* (delta - delta0)
/// t_j is the kinetic coefficient of whatever (w, delta) pair is used.
struct EnergyParams {
    double t_j{0.0};
    double p_max{0.0};
    double p_star{0.0};
    double delta0{0.0};
};

double energy_function(double w, double delta, const EnergyParams& prm);

/// One RK4-integrated swing trajectory with the dissipation integral
/// int d_sw w^2 dt carried as an auxiliary state.
struct SwingTrajectory {
    std::vector<double> t;
    std::vector<double> delta;
    std::vector<double> w;
    std::vector<double> dissipated;
};

SwingTrajectory integrate_swing(const SwingParams& swing, double delta_init, double w_init,
                                const std::function<double(double)>& p_max_of_t, double dt,
                                int steps);

/// Sufficient transient-stability condition of the dVOC normal form:
///   Re{e^{j phi}(p*-jq*)/v*^2} + alpha < (alpha/2)(v_s^2/v_lambda*^2) + Re{e^{j phi} y}
struct DvocStabilityInputs {
    double eta{0.0};  // does not enter the inequality
    double alpha{0.0};
    double phi{pi / 2};
    double p_star{0.0};
    double q_star{0.0};
    double v_star{1.0};
    double v_lambda_star{1.0};
    double v_lambda_steady{1.0}; // steady internal-voltage magnitude
    Cx y{0.0, 0.0};              // lumped admittance to the infinite bus
};

struct DvocConditionResult {
    double lhs{0.0};
    double rhs{0.0};
    bool satisfied{false};
};

DvocConditionResult dvoc_stability_condition(const DvocStabilityInputs& in);

/// Saturated equivalent impedances of the baseline strategies.
Cx equivalent_impedance_adaptive_vi(double i_mag, const AdaptiveViConfig& cfg);
Cx equivalent_impedance_limiter_va(double i_ref_mag, const VirtualImpedance& z_v, double i_lim);
Cx equivalent_impedance_crossforming(const VirtualImpedance& z_v);

} // namespace gfm

#endif
