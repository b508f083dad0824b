#ifndef GFM_CROSSFORMING_HPP
#define GFM_CROSSFORMING_HPP

#include <optional>

#include "gfm/limiting.hpp"
#include "gfm/phasor.hpp"

namespace gfm {

/// Explicit regulator: an integrator drops the internal voltage magnitude
/// until the worst phase-current reference sits at the limit.
struct ExplicitRegState {
    double v_lambda_mag{1.0}; // pu, integrator state |v_lambda|
    double kappa_i{50.0};     // pu/s integral gain
    double v_star_init{1.0};  // pu, integrator seed on activation
};

/// Implicit regulator: the filtered degree of saturation scales the voltage
/// feedback so the internal voltage kappa*mu*v_ref follows the circuit law.
struct ImplicitRegState {
    double mu_filtered{1.0}; // in (0, 1]
    Cx v_fb_filtered{0.0};   // pu, filtered positive-sequence terminal voltage
    double kappa{1.0};       // feedforward gain, >= 1 preferred
    double tau_mu{0.01};     // s
    double tau_v{0.01};      // s
    bool mu_floored{false};  // diagnostic: mu hit the lower guard
};

/// Degree of saturation of a composite sequence reference:
///   mu = min(1, i_lim / max phase magnitude), mu = 1 for a zero reference.
double dos(const SequencePhasor& i_ref, double i_lim);

/// Static virtual admittance: i+ = (v_ref - v+) / z_v.
Cx virtual_admittance(Cx v_ref_vec, Cx v_pos, const VirtualImpedance& z_v);

/// Advance the explicit integrator with the previous composite reference and
/// emit the new positive-sequence current reference. The integrator freezes
/// exactly at the limit and the state is clamped to [0, 2 v_star_init].
Cx explicit_step(ExplicitRegState& s, double v_ref_angle, Cx v_pos,
                 const SequencePhasor& i_ref_prev, double i_lim,
                 const VirtualImpedance& z_v, double dt);

/// Rate form of the explicit integrator (pu/s) for external integrators.
double explicit_rate(const ExplicitRegState& s, const SequencePhasor& i_ref_prev, double i_lim);

/// Current reference of the explicit regulator at the present state.
Cx explicit_reference(const ExplicitRegState& s, double v_ref_angle, Cx v_pos,
                      const VirtualImpedance& z_v);

/// Advance both implicit-regulator filters (exact first-order updates for
/// inputs held over dt) and emit i+ = (kappa v_ref - v_fb/mu) / z_v.
Cx implicit_step(ImplicitRegState& s, Cx v_ref_vec, Cx v_pos,
                 const SequencePhasor& i_ref_prev, double i_lim,
                 const VirtualImpedance& z_v, double dt);

/// Current reference of the implicit regulator at the present filter states.
Cx implicit_reference(const ImplicitRegState& s, Cx v_ref_vec, const VirtualImpedance& z_v);

/// Lower guard applied to the filtered degree of saturation.
constexpr double mu_floor = 1e-6;

/// The two candidate saturated operating points: intersections of the ray
/// at the reference angle with the circle of radius i_lim |z_total| around
/// the grid voltage. S carries the larger internal-voltage magnitude.
struct OperatingPointPair {
    Cx stable_candidate;   // S
    Cx unstable_candidate; // U
    double s_mag{0.0};
    double u_mag{0.0};
};

std::optional<OperatingPointPair> operating_point_geometry(double v_ref_angle, Cx v_g,
                                                           Cx z_total, double i_lim);

/// Negative-feedback test of a candidate point: stable iff the projection
/// of the grid voltage onto the reference direction stays below |v_lambda|.
/// The tangent (equality) case counts as unstable.
bool classify_stable(Cx point, Cx v_g, double v_ref_angle);

/// Operating mode of a cross-forming controlled inverter.
enum class OperatingMode { VoltageForming, CrossForming };

struct ModeSwitchConfig {
    double t_enter{1e-3};   // s of sustained reference saturation before entry
    double v_recover{0.9};  // pu positive-sequence voltage for exit
    double t_exit{10e-3};   // s of recovered conditions before exit
    double t_lock{100e-3};  // s re-entry lockout after exit
};

/// Saturation/recovery detector with entry, exit, and lockout timers.
/// Feed it once per simulation step.
class ModeSwitch {
public:
    explicit ModeSwitch(ModeSwitchConfig cfg = {}) : cfg_(cfg) {}

    OperatingMode update(double i_ref_unsat_mag, double v_pos_mag, double i_lim, double dt);

    OperatingMode mode() const { return mode_; }
    void force(OperatingMode m) { mode_ = m; enter_timer_ = exit_timer_ = lock_timer_ = 0.0; }
    const ModeSwitchConfig& config() const { return cfg_; }

private:
    ModeSwitchConfig cfg_;
    OperatingMode mode_{OperatingMode::VoltageForming};
    double enter_timer_{0.0};
    double exit_timer_{0.0};
    double lock_timer_{0.0};
};

} // namespace gfm

#endif
