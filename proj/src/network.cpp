#include "gfm/network.hpp"

#include "gfm/errors.hpp"

namespace gfm {

Cx SequenceNetworkSolver::effective_source(const FaultEvent* f) const {
    if (f != nullptr && f->kind == FaultEvent::Kind::VoltageDip)
        return std::polar(f->dip_to, std::arg(grid_.v_g) + f->phase_jump);
    return grid_.v_g;
}

SequencePhasor SequenceNetworkSolver::solve(const SequencePhasor& i_inj,
                                            const FaultEvent* fault) const {
    // Interface quantities are counter-rotating baseband envelopes; the
    // conventional negative-sequence phasor is their conjugate, so the
    // textbook interconnection math below runs on conj(neg) and the result
    // is conjugated back.
    const Cx z1 = grid_.z_g1;
    const Cx z2 = grid_.z_g2;
    const Cx z2_zero = grid_.z_g2; // equal sequence impedances assumed
    const Cx vg = effective_source(fault);
    const Cx ip = i_inj.pos;
    const Cx in = std::conj(i_inj.neg);

    Cx u_pos, u_neg;
    const bool shunt_fault = fault != nullptr && fault->kind != FaultEvent::Kind::VoltageDip;
    if (!shunt_fault) {
        u_pos = vg + z2 * ip;
        u_neg = z2 * in;
    } else {
        switch (fault->kind) {
        case FaultEvent::Kind::ThreePhase: {
            const Cx y2 = 1.0 / z2;
            u_pos = fault->r_f * (ip + y2 * vg) / (1.0 + fault->r_f * y2);
            u_neg = z2 * in;
            break;
        }
        case FaultEvent::Kind::SingleLineGround: {
            const Cx f = (vg + z2 * (ip + in)) / (3.0 * fault->r_f + 2.0 * z2 + z2_zero);
            u_pos = vg + z2 * (ip - f);
            u_neg = z2 * (in - f);
            break;
        }
        case FaultEvent::Kind::DoubleLineGround: {
            const Cx y2 = 1.0 / z2;
            const Cx y2_zero = 1.0 / z2_zero;
            const Cx y_zero_eff = y2_zero / (1.0 + 3.0 * fault->r_f * y2_zero);
            u_pos = (ip + in + vg * y2) / (2.0 * y2 + y_zero_eff);
            u_neg = u_pos;
            break;
        }
        default:
            u_pos = vg + z2 * ip;
            u_neg = z2 * in;
        }
    }
    return {u_pos + z1 * ip, std::conj(u_neg + z1 * in)};
}

TheveninEquivalent SequenceNetworkSolver::thevenin(const FaultEvent* fault) const {
    const Cx v_oc = solve({Cx{0.0, 0.0}, Cx{0.0, 0.0}}, fault).pos;
    const Cx v_one = solve({Cx{1.0, 0.0}, Cx{0.0, 0.0}}, fault).pos;
    return {v_oc, v_one - v_oc};
}

namespace {

Eigen::MatrixXcd build_matrix(const MultiBusNetwork& net, const std::vector<BusSource>& sources,
                              int fault_bus, double r_f) {
    const int n = net.n_bus;
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& b : net.branches) {
        const Cx yb = 1.0 / b.z;
        y(b.from, b.from) += yb;
        y(b.to, b.to) += yb;
        y(b.from, b.to) -= yb;
        y(b.to, b.from) -= yb;
    }
    for (const auto& s : net.shunts) y(s.bus, s.bus) += s.y;
    if (net.source) y(net.source->bus, net.source->bus) += 1.0 / net.source->z;
    for (const auto& s : sources)
        if (s.kind == BusSource::Kind::Norton) y(s.bus, s.bus) += 1.0 / s.z_v;
    if (fault_bus >= 0) {
        if (r_f > 1e-12) {
            y(fault_bus, fault_bus) += 1.0 / Cx{r_f, 0.0};
        } else {
            // bolted fault: replace the bus equation with v = 0
            y.row(fault_bus).setZero();
            y(fault_bus, fault_bus) = 1.0;
        }
    }
    return y;
}

} // namespace

MultiBusSolver::MultiBusSolver(const MultiBusNetwork& net, const std::vector<BusSource>& sources,
                               int fault_bus, double r_f)
    : net_(net) {
    for (const auto& b : net.branches)
        if (b.from < 0 || b.from >= net.n_bus || b.to < 0 || b.to >= net.n_bus)
            throw ConfigError("multibus: branch endpoint out of range");
    const Eigen::MatrixXcd y = build_matrix(net, sources, fault_bus, r_f);
    Eigen::FullPivLU<Eigen::MatrixXcd> full(y);
    if (!full.isInvertible())
        throw ConfigError("multibus: nodal admittance matrix is singular for this topology");
    lu_.compute(y);
    fault_bus_bolted_ = (fault_bus >= 0 && r_f <= 1e-12) ? fault_bus : -1;
}

Eigen::VectorXcd MultiBusSolver::solve(const std::vector<BusSource>& sources) const {
    Eigen::VectorXcd inj = Eigen::VectorXcd::Zero(net_.n_bus);
    if (net_.source) inj(net_.source->bus) += net_.source->v / net_.source->z;
    for (const auto& s : sources) {
        if (s.kind == BusSource::Kind::Norton)
            inj(s.bus) += s.value / s.z_v;
        else
            inj(s.bus) += s.value;
    }
    if (fault_bus_bolted_ >= 0) inj(fault_bus_bolted_) = 0.0;
    return lu_.solve(inj);
}

double MultiBusSolver::network_consumption(const Eigen::VectorXcd& v,
                                           const std::vector<BusSource>& sources) const {
    double p = 0.0;
    for (const auto& b : net_.branches) {
        const Cx i = (v(b.from) - v(b.to)) / b.z;
        p += std::norm(i) * b.z.real();
    }
    for (const auto& s : net_.shunts) p += std::norm(v(s.bus)) * s.y.real();
    if (net_.source) {
        const Cx i = (net_.source->v - v(net_.source->bus)) / net_.source->z;
        p += std::norm(i) * net_.source->z.real();
        p -= (net_.source->v * std::conj(i)).real(); // source generation counts negative
    }
    for (const auto& s : sources) {
        if (s.kind == BusSource::Kind::Norton) {
            const Cx i = (s.value - v(s.bus)) / s.z_v;
            p += std::norm(i) * s.z_v.real();
        }
    }
    return p;
}

} // namespace gfm
