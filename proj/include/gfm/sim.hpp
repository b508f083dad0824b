#ifndef GFM_SIM_HPP
#define GFM_SIM_HPP

#include <functional>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "gfm/crossforming.hpp"
#include "gfm/forming.hpp"
#include "gfm/limiting.hpp"
#include "gfm/negseq.hpp"
#include "gfm/network.hpp"
#include "gfm/phasor.hpp"

namespace gfm {

enum class FormingKind { Droop, Vsm, ComplexDroop, Dvoc, DualPort };
enum class RegulatorKind { Explicit, Implicit, VirtualAdmittance, AdaptiveVi, CurrentForming };

/// Per-inverter configuration. All electrical quantities are in the
/// inverter's own per-unit base; `rating` converts currents and powers to
/// the system base at the network boundary.
struct InverterConfig {
    std::string name{"inv1"};
    double rating{1.0};

    FormingKind forming{FormingKind::Vsm};
    DroopParams droop;
    VsmParams vsm;
    DvocParams dvoc;
    DualPortParams dual_port;

    RegulatorKind regulator{RegulatorKind::Implicit};
    VirtualImpedance z_v{0.0, 0.2};
    double kappa{1.0};
    double kappa_i{50.0};
    double tau_mu{0.01};
    double tau_v{0.01};
    bool reseed_integrator{true};    // explicit: reset |v_lambda| to v* on entry
    bool freeze_droop_in_cf{true};   // hold the magnitude reference at v* while saturated

    LimiterConfig limiter;
    bool hard_limiter{true};         // keep the limiter engaged under the explicit regulator

    NegSeqMode neg_seq;
    bool neg_seq_v_filter{false};    // optional first-order filter on the mode-IV feedback
    double neg_seq_tau{0.01};

    AdaptiveViConfig adaptive_vi;
    double adaptive_vi_tau_i{1e-3};  // current-feedback filter
    double adaptive_vi_tau_track{2e-3}; // inner voltage-tracking lag

    CurrentFormingConfig current_forming;
    ModeSwitchConfig mode_switch;

    double v_dc{1.0}; // exogenous dc voltage for the dual-port law

    double p_star() const;
    double q_star() const;
    double v_star() const;
    double omega0() const;
    void set_p_star(double value);
    void set_q_star(double value);
};

struct NetworkConfig {
    enum class Kind { Thevenin, MultiBus } kind{Kind::Thevenin};
    TheveninGrid thevenin;
    MultiBusNetwork multibus;
    std::vector<int> inverter_bus; // multibus: bus per inverter
    int fault_bus{-1};             // multibus: faulted bus
    double z_base_ohm{264.5};      // ohm-to-pu conversion for fault resistances
};

struct SimConfig {
    double dt{1e-4};
    double t_end{10.0};
    double tau_c{1e-3};        // current-tracking lag, > 0
    int decimation{10};        // record every n-th step
    bool quasi_static_regulator{false}; // algebraic saturated branch (analysis runs)
    double divergence_limit{1e3};
};

struct SetpointEvent {
    double t{0.0};
    enum class Field { PStar, QStar, VDc } field{Field::PStar};
    int inverter{-1}; // -1 applies to all
    double value{0.0};
};

/// One record-stream row (per inverter, own per-unit base).
struct RecordRow {
    double t{0.0};
    Cx v_pos, v_neg, i_pos, i_neg;
    double i_maxphase{0.0};
    double p{0.0}, q{0.0}, p_virtual{0.0};
    double phi{0.0};   // reference angle relative to the omega0 frame
    double omega{0.0}; // rad/s
    double mu{1.0};
    double v_lambda_mag{0.0};
    int mode{0}; // 0 voltage-forming, 1 cross-forming
};

struct SimDiagnostics {
    bool no_operating_point{false};
    bool mu_floored{false};
    bool diverged{false};
    std::string divergence_context;
};

struct Scenario; // defined in scenario.hpp

/// Per-inverter live state.
struct InverterState {
    // continuous
    double phi{0.0};               // reference angle in the rotating frame
    double omega{omega0_default};  // rad/s
    double v_mag{1.0};
    Cx v_vec{1.0, 0.0};            // dVOC vector (rotating frame)
    double v_lambda{1.0};
    double mu_f{1.0};
    Cx vfb_pos{0.0}, vfb_neg{0.0};
    Cx i_pos{0.0}, i_neg{0.0};
    Cx e_int{0.0};                 // adaptive-VI internal voltage
    double ivi_f{0.0};             // adaptive-VI current magnitude filter
    double cf_theta{0.0};          // current-forming droop angle (rotating frame)
    Cx vneg_f{0.0};                // optional mode-IV voltage filter
    // discrete
    ModeSwitch mode{ModeSwitchConfig{}};
};

/// Instantaneous algebraic quantities of one inverter at one evaluation.
struct InverterOutputs {
    SequencePhasor v_term;
    SequencePhasor i_ref_unsat;
    SequencePhasor i_ref_lim;
    double mu_raw{1.0};
    double p_meas{0.0}, q_meas{0.0}, p_virtual{0.0}, p_fb{0.0};
    double i_maxphase{0.0};
    Cx v_ref_vec{1.0, 0.0};
    double v_lambda_mag{1.0};
    double detect_ref_mag{0.0}; // worst-phase virtual-admittance reference, raw voltage
};

class Simulation {
public:
    explicit Simulation(const Scenario& scenario);

    /// Advance one fixed step; applies due events at the boundary.
    void step();

    /// Run to t_end, calling sink after every decimation-th step (and once
    /// for the initial state). Throws NumericalError on divergence.
    void run(const std::function<void(int inverter, const RecordRow&)>& sink);

    double t() const { return t_; }
    int n_inverters() const { return static_cast<int>(states_.size()); }
    const InverterState& state(int k) const { return states_[k]; }
    const InverterConfig& config(int k) const { return inverters_[k]; }
    const SimConfig& sim_config() const { return sim_; }
    const SimDiagnostics& diagnostics() const { return diag_; }

    RecordRow record(int k) const;

    /// Power-balance residual of the present state (system base, pu):
    /// generation minus consumption minus losses.
    double power_balance_residual() const;

    /// Positive-sequence Thevenin equivalent at the inverter terminal for
    /// the current topology (Thevenin networks only).
    TheveninEquivalent current_thevenin() const;

private:
    friend struct SimulationAccess;
    void initialize_equilibrium();
    void apply_due_events();
    void evaluate(const std::vector<double>& x, std::vector<double>& dx, double t,
                  std::vector<InverterOutputs>* outs) const;
    void pack(std::vector<double>& x) const;
    void unpack(const std::vector<double>& x, std::vector<InverterState>& states) const;
    void post_step_discrete();
    void check_divergence() const;
    const FaultEvent* active_fault(double t) const;

    SimConfig sim_;
    NetworkConfig net_;
    std::vector<InverterConfig> inverters_;
    std::vector<FaultEvent> faults_;
    std::vector<SetpointEvent> setpoints_;
    size_t next_setpoint_{0};

    std::vector<InverterState> states_;
    mutable std::vector<InverterState> scratch_;
    std::vector<InverterOutputs> last_outputs_;
    double t_{0.0};
    long step_index_{0};
    SimDiagnostics diag_;

    // cached multibus factorizations per topology state
    std::unique_ptr<MultiBusSolver> mb_nofault_;
    std::unique_ptr<MultiBusSolver> mb_fault_;
    mutable std::vector<BusSource> mb_sources_;
};

/// Newton solve of the pre-fault operating point, shared with tests.
/// Returns the residual infinity-norm after convergence.
double solve_equilibrium(const NetworkConfig& net, std::vector<InverterConfig>& inverters,
                         std::vector<InverterState>& states);

} // namespace gfm

#endif
