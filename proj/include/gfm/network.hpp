#ifndef GFM_NETWORK_HPP
#define GFM_NETWORK_HPP

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gfm/phasor.hpp"

namespace gfm {

/// Thevenin grid: terminal --z_g1-- fault node --z_g2-- source v_g.
/// Sequence impedances are taken equal across sequences; the zero-sequence
/// path exists only on the grid side of the fault node (the inverter-side
/// step-up transformer blocks zero-sequence current).
struct TheveninGrid {
    Cx z_g1{0.01, 0.1};
    Cx z_g2{0.003, 0.03};
    Cx v_g{1.0, 0.0};
};

struct FaultEvent {
    enum class Kind { ThreePhase, SingleLineGround, DoubleLineGround, VoltageDip } kind{Kind::ThreePhase};
    double r_f{0.0};       // pu fault/grounding resistance (shunt kinds)
    double t_on{0.0};      // s
    double t_clear{0.0};   // s, > t_on
    double dip_to{1.0};    // pu retained source magnitude (VoltageDip)
    double phase_jump{0.0}; // rad added to the source angle (VoltageDip)

    bool active(double t) const { return t >= t_on && t < t_clear; }
};

/// Thevenin equivalent of the positive-sequence network seen from the
/// inverter terminal for the current topology state.
struct TheveninEquivalent {
    Cx v_oc;  // open-circuit terminal voltage
    Cx z_th;  // driving-point impedance
};

/// Linear sequence-network solver for the single-inverter system.
class SequenceNetworkSolver {
public:
    explicit SequenceNetworkSolver(TheveninGrid grid) : grid_(grid) {}

    /// Terminal sequence voltages for injected currents and an optional
    /// active fault. Shunt fault kinds use the standard interconnection of
    /// the sequence networks at the fault node; a voltage dip modifies the
    /// source phasor with the topology left intact.
    SequencePhasor solve(const SequencePhasor& i_inj, const FaultEvent* active_fault) const;

    /// Positive-sequence Thevenin equivalent at the terminal.
    TheveninEquivalent thevenin(const FaultEvent* active_fault) const;

    const TheveninGrid& grid() const { return grid_; }

private:
    Cx effective_source(const FaultEvent* f) const;
    TheveninGrid grid_;
};

/// Positive-sequence multi-bus network with constant-impedance loads.
/// Inverters attach to buses either as Norton sources (unsaturated virtual
/// admittance: y = 1/z_v driven by the forming reference) or as plain
/// current injections (saturated or lag-tracked currents).
struct MultiBusNetwork {
    struct Branch {
        int from{0};
        int to{0};
        Cx z;
    };
    struct Shunt {
        int bus{0};
        Cx y;
    };
    struct GridSource {
        int bus{0};
        Cx v;
        Cx z;
    };

    int n_bus{0};
    std::vector<Branch> branches;
    std::vector<Shunt> shunts;
    std::optional<GridSource> source; // absent for islanded systems
};

/// Per-inverter attachment used by the nodal solve.
struct BusSource {
    enum class Kind { Norton, Injection } kind{Kind::Injection};
    int bus{0};
    Cx value;  // Norton: internal voltage; Injection: current
    Cx z_v;    // Norton only
};

class MultiBusSolver {
public:
    /// Factorizes the nodal admittance matrix for one topology state.
    /// fault_bus < 0 means no fault; otherwise 1/r_f (or a hard short for
    /// r_f = 0) is added at that bus. Norton attachments contribute their
    /// admittance to the matrix. Throws ConfigError on singular topology.
    MultiBusSolver(const MultiBusNetwork& net, const std::vector<BusSource>& sources,
                   int fault_bus, double r_f);

    /// Bus voltages for the present source values (matching the layout given
    /// at construction). Norton sources inject value/z_v; injections inject
    /// value directly.
    Eigen::VectorXcd solve(const std::vector<BusSource>& sources) const;

    /// Sum of |i|^2 r losses plus shunt consumption for a bus-voltage
    /// solution, used by the power-balance audit.
    double network_consumption(const Eigen::VectorXcd& v,
                               const std::vector<BusSource>& sources) const;

private:
    const MultiBusNetwork net_;
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu_;
    int fault_bus_bolted_{-1};
};

} // namespace gfm

#endif
