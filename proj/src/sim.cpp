#include "gfm/sim.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "gfm/errors.hpp"
#include "gfm/scenario.hpp"

namespace gfm {

double InverterConfig::p_star() const {
    switch (forming) {
    case FormingKind::Droop: return droop.p_star;
    case FormingKind::Vsm: return vsm.p_star;
    case FormingKind::ComplexDroop:
    case FormingKind::Dvoc: return dvoc.p_star;
    case FormingKind::DualPort: return dual_port.p_star;
    }
    return 0.0;
}

double InverterConfig::q_star() const {
    switch (forming) {
    case FormingKind::Droop: return droop.q_star;
    case FormingKind::Vsm: return vsm.q_star;
    case FormingKind::ComplexDroop:
    case FormingKind::Dvoc: return dvoc.q_star;
    case FormingKind::DualPort: return dual_port.q_star;
    }
    return 0.0;
}

double InverterConfig::v_star() const {
    switch (forming) {
    case FormingKind::Droop: return droop.v_star;
    case FormingKind::Vsm: return vsm.v_star;
    case FormingKind::ComplexDroop:
    case FormingKind::Dvoc: return dvoc.v_star;
    case FormingKind::DualPort: return dual_port.v_star;
    }
    return 1.0;
}

double InverterConfig::omega0() const {
    switch (forming) {
    case FormingKind::Droop: return droop.omega0;
    case FormingKind::Vsm: return vsm.omega0;
    case FormingKind::ComplexDroop:
    case FormingKind::Dvoc: return dvoc.omega0;
    case FormingKind::DualPort: return dual_port.omega0;
    }
    return omega0_default;
}

void InverterConfig::set_p_star(double value) {
    droop.p_star = vsm.p_star = dvoc.p_star = dual_port.p_star = value;
}

void InverterConfig::set_q_star(double value) {
    droop.q_star = vsm.q_star = dvoc.q_star = dual_port.q_star = value;
}

namespace {

// Quasi-static solve of the threshold-virtual-impedance loop: the VI drop,
// the droop magnitude, and the circuit current form a stiff ms-scale loop
// that is solved to its fixed point at every evaluation instead of being
// integrated. Returns the current; v_hat_out carries the droop magnitude.
Cx adaptive_vi_operating_point(const InverterConfig& cfg, double phi, Cx v_oc, Cx z_th,
                               double* v_hat_out) {
    const double m_q = cfg.forming == FormingKind::Vsm     ? cfg.vsm.m_q
                       : cfg.forming == FormingKind::Droop ? cfg.droop.m_q
                                                           : cfg.dual_port.m_q;
    auto current_for = [&](double m) {
        const Cx z_vi = adaptive_virtual_impedance(m, cfg.adaptive_vi).z();
        const Cx zt = z_vi + z_th;
        // with i = alpha v_hat + beta the measured q is quadratic in v_hat,
        // so the droop magnitude solves a quadratic exactly
        const Cx alpha = std::polar(1.0, phi) / zt;
        const Cx beta = -v_oc / zt;
        const Cx gamma = z_th * alpha;
        const Cx delta = v_oc + z_th * beta;
        const double qa = (gamma * std::conj(alpha)).imag();
        const double qb = (gamma * std::conj(beta) + delta * std::conj(alpha)).imag();
        const double qc = (delta * std::conj(beta)).imag();
        const double a = m_q * qa;
        const double b = 1.0 + m_q * qb;
        const double c = m_q * (qc - cfg.q_star()) - cfg.v_star();
        double v_hat;
        const double disc = b * b - 4.0 * a * c;
        if (std::abs(a) < 1e-14 || disc < 0.0) {
            v_hat = -c / b;
        } else {
            const double r1 = (-b + std::sqrt(disc)) / (2.0 * a);
            const double r2 = (-b - std::sqrt(disc)) / (2.0 * a);
            v_hat = std::abs(r1 - cfg.v_star()) < std::abs(r2 - cfg.v_star()) ? r1 : r2;
        }
        v_hat = std::max(v_hat, 1e-6);
        if (v_hat_out) *v_hat_out = v_hat;
        return alpha * v_hat + beta;
    };
    // |i(m)| - m is strictly decreasing in m; bracket and bisect
    double lo = 0.0, hi = 50.0;
    if (std::abs(current_for(lo)) <= cfg.adaptive_vi.i_th) {
        return current_for(lo); // impedance disengaged
    }
    for (int it = 0; it < 52; ++it) {
        const double mid = 0.5 * (lo + hi);
        (std::abs(current_for(mid)) > mid ? lo : hi) = mid;
    }
    return current_for(0.5 * (lo + hi));
}

constexpr int kStatesPerInverter = 21;

enum StateIndex {
    IX_PHI = 0,
    IX_OMEGA,
    IX_VMAG,
    IX_VVEC_RE,
    IX_VVEC_IM,
    IX_VLAMBDA,
    IX_MU,
    IX_VFBP_RE,
    IX_VFBP_IM,
    IX_VFBN_RE,
    IX_VFBN_IM,
    IX_IP_RE,
    IX_IP_IM,
    IX_IN_RE,
    IX_IN_IM,
    IX_E_RE,
    IX_E_IM,
    IX_IVI,
    IX_CFTH,
    IX_VNF_RE,
    IX_VNF_IM,
};

bool uses_cross_forming(RegulatorKind k) {
    return k == RegulatorKind::Explicit || k == RegulatorKind::Implicit;
}

// Generic damped Newton with a central-difference Jacobian.
bool newton_solve(const std::function<void(const std::vector<double>&, std::vector<double>&)>& f,
                  std::vector<double>& x, int max_iter, double tol) {
    const int n = static_cast<int>(x.size());
    std::vector<double> r(n), rp(n), rm(n);
    auto norm_inf = [&](const std::vector<double>& v) {
        double m = 0.0;
        for (double e : v) m = std::max(m, std::abs(e));
        return m;
    };
    f(x, r);
    for (int iter = 0; iter < max_iter; ++iter) {
        const double r0 = norm_inf(r);
        if (r0 < tol) return true;
        Eigen::MatrixXd jac(n, n);
        for (int j = 0; j < n; ++j) {
            const double h = 1e-7 * std::max(1.0, std::abs(x[j]));
            std::vector<double> xp = x, xm = x;
            xp[j] += h;
            xm[j] -= h;
            f(xp, rp);
            f(xm, rm);
            for (int i = 0; i < n; ++i) jac(i, j) = (rp[i] - rm[i]) / (2.0 * h);
        }
        Eigen::VectorXd rhs(n);
        for (int i = 0; i < n; ++i) rhs(i) = -r[i];
        const Eigen::VectorXd dx = jac.fullPivLu().solve(rhs);
        if (!dx.allFinite()) return false;
        // backtracking line search
        double step = 1.0;
        std::vector<double> xn(n), rn(n);
        for (int ls = 0; ls < 40; ++ls) {
            for (int i = 0; i < n; ++i) xn[i] = x[i] + step * dx(i);
            f(xn, rn);
            if (norm_inf(rn) < r0 || norm_inf(rn) < tol) break;
            step *= 0.5;
        }
        x = xn;
        r = rn;
    }
    f(x, r);
    return norm_inf(r) < tol;
}

} // namespace

// ---------------------------------------------------------------------------
// Construction and equilibrium
// ---------------------------------------------------------------------------

Simulation::Simulation(const Scenario& sc)
    : sim_(sc.sim),
      net_(sc.network),
      inverters_(sc.inverters),
      faults_(sc.faults),
      setpoints_(sc.setpoints) {
    states_.resize(inverters_.size());
    scratch_.resize(inverters_.size());
    last_outputs_.resize(inverters_.size());
    for (size_t k = 0; k < inverters_.size(); ++k) {
        states_[k].mode = ModeSwitch(inverters_[k].mode_switch);
    }
    if (net_.kind == NetworkConfig::Kind::MultiBus) {
        mb_sources_.resize(inverters_.size());
        for (size_t k = 0; k < inverters_.size(); ++k)
            mb_sources_[k] = {BusSource::Kind::Injection, net_.inverter_bus[k], Cx{0.0, 0.0},
                              Cx{0.0, 0.0}};
        mb_nofault_ = std::make_unique<MultiBusSolver>(net_.multibus, mb_sources_, -1, 0.0);
        double r_f = 0.0;
        for (const auto& f : faults_) r_f = f.r_f;
        if (net_.fault_bus >= 0)
            mb_fault_ = std::make_unique<MultiBusSolver>(net_.multibus, mb_sources_, net_.fault_bus,
                                                         r_f);
    }
    initialize_equilibrium();
}

const FaultEvent* Simulation::active_fault(double t) const {
    for (const auto& f : faults_)
        if (f.active(t)) return &f;
    return nullptr;
}

double solve_equilibrium(const NetworkConfig& net, std::vector<InverterConfig>& inverters,
                         std::vector<InverterState>& states) {
    const size_t n = inverters.size();
    const bool multibus = net.kind == NetworkConfig::Kind::MultiBus;
    const bool islanded = multibus && !net.multibus.source.has_value();

    // unknown layout: [phi_k (skip k=0 when islanded), vmag_k, (omega_s if islanded)]
    std::vector<double> x;
    for (size_t k = 0; k < n; ++k)
        if (!(islanded && k == 0)) x.push_back(0.02 + 0.05 * inverters[k].p_star());
    for (size_t k = 0; k < n; ++k) x.push_back(inverters[k].v_star());
    if (islanded) x.push_back(0.0);

    // per-evaluation reconstruction of angles/magnitudes
    auto unpack_x = [&](const std::vector<double>& xv, std::vector<double>& phi,
                        std::vector<double>& vmag, double& w_s) {
        phi.assign(n, 0.0);
        vmag.assign(n, 1.0);
        size_t idx = 0;
        for (size_t k = 0; k < n; ++k)
            if (!(islanded && k == 0)) phi[k] = xv[idx++];
        for (size_t k = 0; k < n; ++k) vmag[k] = xv[idx++];
        w_s = islanded ? xv[idx++] : 0.0;
    };

    // Type-A adaptive impedance engages through an outer fixed point
    std::vector<Cx> z_extra(n, Cx{0.0, 0.0});

    std::unique_ptr<SequenceNetworkSolver> thevenin_solver;
    TheveninEquivalent th{};
    std::unique_ptr<MultiBusSolver> mb;
    std::vector<BusSource> mb_sources(n);
    if (!multibus) {
        thevenin_solver = std::make_unique<SequenceNetworkSolver>(net.thevenin);
        th = thevenin_solver->thevenin(nullptr);
    } else {
        for (size_t k = 0; k < n; ++k) {
            mb_sources[k] = {BusSource::Kind::Norton, net.inverter_bus[k], Cx{1.0, 0.0},
                             inverters[k].z_v.z() / inverters[k].rating};
        }
        mb = std::make_unique<MultiBusSolver>(net.multibus, mb_sources, -1, 0.0);
    }

    std::vector<Cx> i_own(n), v_term(n);
    auto residual = [&](const std::vector<double>& xv, std::vector<double>& r) {
        std::vector<double> phi, vmag;
        double w_s = 0.0;
        unpack_x(xv, phi, vmag, w_s);
        if (!multibus) {
            const auto& cfg = inverters[0];
            const Cx v_ref = std::polar(vmag[0], phi[0]);
            const Cx z_series =
                (cfg.regulator == RegulatorKind::AdaptiveVi ? z_extra[0] : cfg.z_v.z());
            i_own[0] = (v_ref - th.v_oc) / (z_series + th.z_th);
            v_term[0] = th.v_oc + th.z_th * i_own[0];
        } else {
            for (size_t k = 0; k < n; ++k) mb_sources[k].value = std::polar(vmag[k], phi[k]);
            const Eigen::VectorXcd v = mb->solve(mb_sources);
            for (size_t k = 0; k < n; ++k) {
                v_term[k] = v(net.inverter_bus[k]);
                i_own[k] = (std::polar(vmag[k], phi[k]) - v_term[k]) / inverters[k].z_v.z() *
                           1.0; // own-base current
            }
        }
        r.assign(2 * n, 0.0);
        for (size_t k = 0; k < n; ++k) {
            const auto& cfg = inverters[k];
            const double p = (v_term[k] * std::conj(i_own[k])).real();
            const double q = (v_term[k] * std::conj(i_own[k])).imag();
            double r_power;
            switch (cfg.forming) {
            case FormingKind::ComplexDroop:
            case FormingKind::Dvoc:
                r_power = p / (vmag[k] * vmag[k]) - cfg.p_star() / (cfg.v_star() * cfg.v_star());
                if (islanded) r_power += w_s * cfg.omega0() / cfg.dvoc.eta;
                break;
            case FormingKind::Vsm:
                r_power = p - (cfg.p_star() - cfg.vsm.d * w_s);
                break;
            default:
                r_power = p - (cfg.p_star() - (cfg.droop.m_p > 0.0 ? w_s / cfg.droop.m_p : 0.0));
            }
            double r_mag;
            if (cfg.forming == FormingKind::ComplexDroop || cfg.forming == FormingKind::Dvoc) {
                const double vs2 = cfg.v_star() * cfg.v_star();
                const double v2 = vmag[k] * vmag[k];
                r_mag = (cfg.q_star() / vs2 - q / v2) + cfg.dvoc.alpha * (vs2 - v2) / vs2;
            } else {
                const double m_q = cfg.forming == FormingKind::Vsm     ? cfg.vsm.m_q
                                   : cfg.forming == FormingKind::Droop ? cfg.droop.m_q
                                                                       : cfg.dual_port.m_q;
                r_mag = vmag[k] - (cfg.v_star() + m_q * (cfg.q_star() - q));
            }
            r[k] = r_power;
            r[n + k] = r_mag;
        }
    };

    for (int outer = 0; outer < 30; ++outer) {
        if (!newton_solve(residual, x, 50, 1e-11))
            throw ConfigError("equilibrium solve did not converge (infeasible setpoints?)");
        // refresh the adaptive-VI impedance and repeat until consistent
        bool stable = true;
        for (size_t k = 0; k < n; ++k) {
            if (inverters[k].regulator != RegulatorKind::AdaptiveVi) continue;
            const Cx z_new =
                adaptive_virtual_impedance(std::abs(i_own[k]), inverters[k].adaptive_vi).z();
            if (std::abs(z_new - z_extra[k]) > 1e-12) stable = false;
            z_extra[k] = z_new;
        }
        if (stable) break;
    }

    std::vector<double> phi, vmag;
    double w_s = 0.0;
    std::vector<double> r_final;
    residual(x, r_final);
    unpack_x(x, phi, vmag, w_s);

    double residual_norm = 0.0;
    for (double e : r_final) residual_norm = std::max(residual_norm, std::abs(e));

    for (size_t k = 0; k < n; ++k) {
        auto& st = states[k];
        const auto& cfg = inverters[k];
        st.phi = phi[k];
        st.omega = cfg.omega0() * (1.0 + w_s);
        st.v_mag = vmag[k];
        st.v_vec = std::polar(vmag[k], phi[k]);
        st.v_lambda = vmag[k];
        st.mu_f = 1.0;
        st.vfb_pos = v_term[k];
        st.vfb_neg = Cx{0.0, 0.0};
        st.vneg_f = Cx{0.0, 0.0};
        st.i_pos = i_own[k];
        st.i_neg = Cx{0.0, 0.0};
        st.e_int = std::polar(vmag[k], phi[k]) - z_extra[k] * i_own[k];
        st.ivi_f = std::abs(i_own[k]);
        st.cf_theta = phi[k];
        st.mode = ModeSwitch(cfg.mode_switch);
        if (max_phase_magnitude({i_own[k], Cx{0.0, 0.0}}) > cfg.limiter.i_lim)
            throw ConfigError("pre-fault operating point is current-saturated for inverter " +
                              cfg.name);
    }
    return residual_norm;
}

void Simulation::initialize_equilibrium() { solve_equilibrium(net_, inverters_, states_); }

// ---------------------------------------------------------------------------
// Packing
// ---------------------------------------------------------------------------

void Simulation::pack(std::vector<double>& x) const {
    x.resize(states_.size() * kStatesPerInverter);
    for (size_t k = 0; k < states_.size(); ++k) {
        double* p = &x[k * kStatesPerInverter];
        const auto& s = states_[k];
        p[IX_PHI] = s.phi;
        p[IX_OMEGA] = s.omega;
        p[IX_VMAG] = s.v_mag;
        p[IX_VVEC_RE] = s.v_vec.real();
        p[IX_VVEC_IM] = s.v_vec.imag();
        p[IX_VLAMBDA] = s.v_lambda;
        p[IX_MU] = s.mu_f;
        p[IX_VFBP_RE] = s.vfb_pos.real();
        p[IX_VFBP_IM] = s.vfb_pos.imag();
        p[IX_VFBN_RE] = s.vfb_neg.real();
        p[IX_VFBN_IM] = s.vfb_neg.imag();
        p[IX_IP_RE] = s.i_pos.real();
        p[IX_IP_IM] = s.i_pos.imag();
        p[IX_IN_RE] = s.i_neg.real();
        p[IX_IN_IM] = s.i_neg.imag();
        p[IX_E_RE] = s.e_int.real();
        p[IX_E_IM] = s.e_int.imag();
        p[IX_IVI] = s.ivi_f;
        p[IX_CFTH] = s.cf_theta;
        p[IX_VNF_RE] = s.vneg_f.real();
        p[IX_VNF_IM] = s.vneg_f.imag();
    }
}

void Simulation::unpack(const std::vector<double>& x, std::vector<InverterState>& states) const {
    for (size_t k = 0; k < states.size(); ++k) {
        const double* p = &x[k * kStatesPerInverter];
        auto& s = states[k];
        s.mode = states_[k].mode; // discrete flags are step constants
        s.phi = p[IX_PHI];
        s.omega = p[IX_OMEGA];
        s.v_mag = p[IX_VMAG];
        s.v_vec = {p[IX_VVEC_RE], p[IX_VVEC_IM]};
        s.v_lambda = p[IX_VLAMBDA];
        s.mu_f = p[IX_MU];
        s.vfb_pos = {p[IX_VFBP_RE], p[IX_VFBP_IM]};
        s.vfb_neg = {p[IX_VFBN_RE], p[IX_VFBN_IM]};
        s.i_pos = {p[IX_IP_RE], p[IX_IP_IM]};
        s.i_neg = {p[IX_IN_RE], p[IX_IN_IM]};
        s.e_int = {p[IX_E_RE], p[IX_E_IM]};
        s.ivi_f = p[IX_IVI];
        s.cf_theta = p[IX_CFTH];
        s.vneg_f = {p[IX_VNF_RE], p[IX_VNF_IM]};
    }
}

// ---------------------------------------------------------------------------
// Stage evaluation
// ---------------------------------------------------------------------------

void Simulation::evaluate(const std::vector<double>& x, std::vector<double>& dx, double t,
                          std::vector<InverterOutputs>* outs) const {
    dx.assign(x.size(), 0.0);
    unpack(x, scratch_);
    const FaultEvent* fault = active_fault(t);

    // --- network stage: terminal voltages and measured currents -----------
    std::vector<SequencePhasor> v_term(scratch_.size());
    std::vector<SequencePhasor> i_meas(scratch_.size());
    std::vector<double> avi_v_hat(scratch_.size(), 1.0);
    if (net_.kind == NetworkConfig::Kind::Thevenin) {
        SequenceNetworkSolver solver(net_.thevenin);
        const auto& cfg = inverters_[0];
        auto& st = scratch_[0];
        if (cfg.regulator == RegulatorKind::AdaptiveVi) {
            const TheveninEquivalent th = solver.thevenin(fault);
            const Cx i_alg =
                adaptive_vi_operating_point(cfg, st.phi, th.v_oc, th.z_th, &avi_v_hat[0]);
            i_meas[0] = {i_alg, Cx{0.0, 0.0}};
            v_term[0] = solver.solve(i_meas[0], fault);
        } else {
            i_meas[0] = {st.i_pos, st.i_neg};
            v_term[0] = solver.solve(i_meas[0], fault);
        }
    } else {
        const bool fault_on = fault != nullptr;
        const MultiBusSolver* solver = fault_on ? mb_fault_.get() : mb_nofault_.get();
        for (size_t k = 0; k < scratch_.size(); ++k) {
            mb_sources_[k].kind = BusSource::Kind::Injection;
            mb_sources_[k].bus = net_.inverter_bus[k];
            mb_sources_[k].value = scratch_[k].i_pos * inverters_[k].rating;
        }
        const Eigen::VectorXcd v = solver->solve(mb_sources_);
        for (size_t k = 0; k < scratch_.size(); ++k) {
            v_term[k] = {v(net_.inverter_bus[k]), Cx{0.0, 0.0}};
            i_meas[k] = {scratch_[k].i_pos, scratch_[k].i_neg};
        }
    }

    // --- controllers -------------------------------------------------------
    for (size_t k = 0; k < scratch_.size(); ++k) {
        const auto& cfg = inverters_[k];
        const auto& st = scratch_[k];
        double* d = &dx[k * kStatesPerInverter];
        InverterOutputs out;
        out.v_term = v_term[k];

        const bool cf_mode = st.mode.mode() == OperatingMode::CrossForming;
        const double w0 = cfg.omega0();
        const double i_lim = cfg.limiter.i_lim;

        // measured powers (positive sequence, own base)
        const Cx ip_meas = i_meas[k].pos;
        out.p_meas = (v_term[k].pos * std::conj(ip_meas)).real();
        out.q_meas = (v_term[k].pos * std::conj(ip_meas)).imag();

        // reference voltage vector
        double v_mag_ref;
        const bool freeze = cf_mode && cfg.freeze_droop_in_cf &&
                            uses_cross_forming(cfg.regulator);
        if (cfg.forming == FormingKind::Dvoc) {
            out.v_ref_vec = st.v_vec;
            v_mag_ref = std::abs(st.v_vec);
        } else if (cfg.forming == FormingKind::ComplexDroop) {
            v_mag_ref = st.v_mag;
            out.v_ref_vec = std::polar(v_mag_ref, st.phi);
        } else if (cfg.regulator == RegulatorKind::AdaptiveVi) {
            v_mag_ref = avi_v_hat[k]; // solved together with the VI loop
            out.v_ref_vec = std::polar(v_mag_ref, st.phi);
        } else {
            const double m_q = cfg.forming == FormingKind::Vsm     ? cfg.vsm.m_q
                               : cfg.forming == FormingKind::Droop ? cfg.droop.m_q
                                                                   : cfg.dual_port.m_q;
            const double q_for_droop = (st.vfb_pos * std::conj(ip_meas)).imag();
            v_mag_ref = freeze ? cfg.v_star()
                               : cfg.v_star() + m_q * (cfg.q_star() - q_for_droop);
            out.v_ref_vec = std::polar(v_mag_ref, st.phi);
        }
        const double ref_angle =
            cfg.forming == FormingKind::Dvoc ? std::arg(st.v_vec) : st.phi;

        out.p_virtual = (out.v_ref_vec * std::conj(ip_meas)).real();

        // positive-sequence current reference
        Cx i_ref_pos{0.0, 0.0};
        double lambda = 1.0;
        out.v_lambda_mag = v_mag_ref;
        switch (cfg.regulator) {
        case RegulatorKind::Explicit:
            if (cf_mode) {
                i_ref_pos = (std::polar(st.v_lambda, ref_angle) - st.vfb_pos) / cfg.z_v.z();
                out.v_lambda_mag = st.v_lambda;
                lambda = st.v_lambda / std::max(v_mag_ref, 1e-9);
            } else {
                i_ref_pos = (out.v_ref_vec - st.vfb_pos) / cfg.z_v.z();
            }
            break;
        case RegulatorKind::Implicit: {
            const double kappa_eff = cf_mode ? cfg.kappa : 1.0;
            const double mu_eff = cf_mode ? std::max(st.mu_f, mu_floor) : 1.0;
            i_ref_pos = (kappa_eff * out.v_ref_vec - st.vfb_pos / mu_eff) / cfg.z_v.z();
            if (cf_mode) {
                out.v_lambda_mag = cfg.kappa * std::max(st.mu_f, mu_floor) * v_mag_ref;
                lambda = cfg.kappa * std::max(st.mu_f, mu_floor);
            }
            break;
        }
        case RegulatorKind::VirtualAdmittance:
            i_ref_pos = (out.v_ref_vec - st.vfb_pos) / cfg.z_v.z();
            break;
        case RegulatorKind::CurrentForming:
            if (cf_mode)
                i_ref_pos = std::polar(i_lim, st.cf_theta - cfg.current_forming.psi);
            else
                i_ref_pos = (out.v_ref_vec - st.vfb_pos) / cfg.z_v.z();
            break;
        case RegulatorKind::AdaptiveVi:
            i_ref_pos = i_meas[k].pos; // no reference path; voltage-source model
            break;
        }

        // negative-sequence reference from the filtered voltages
        Cx i_ref_neg{0.0, 0.0};
        if (cfg.regulator != RegulatorKind::AdaptiveVi) {
            const Cx v_neg_for_mode = cfg.neg_seq_v_filter ? st.vneg_f : st.vfb_neg;
            const SequencePhasor v_for_mode{st.vfb_pos, v_neg_for_mode};
            if (cfg.neg_seq.kind == NegSeqMode::Kind::Flexible && std::abs(st.vfb_pos) < 1e-6) {
                i_ref_neg = Cx{0.0, 0.0}; // collapse guard; diagnostic set post-step
            } else {
                i_ref_neg = neg_seq_reference(cfg.neg_seq, v_for_mode, i_ref_pos);
            }
        }

        out.i_ref_unsat = {i_ref_pos, i_ref_neg};
        out.mu_raw = dos(out.i_ref_unsat, i_lim);
        const bool limit = cfg.regulator != RegulatorKind::Explicit || cfg.hard_limiter;
        if (!limit) {
            out.i_ref_lim = out.i_ref_unsat;
        } else if (cfg.limiter.frame == LimiterConfig::Frame::Rotational) {
            const auto lim = dq_limit(rotate(i_ref_pos, -ref_angle), rotate(i_ref_neg, ref_angle),
                                      i_lim);
            out.i_ref_lim = {rotate(lim.ref.pos, ref_angle), rotate(lim.ref.neg, -ref_angle)};
        } else {
            out.i_ref_lim = elliptical_limit(out.i_ref_unsat, i_lim).ref;
        }

        // detection reference: would-be virtual-admittance current from the
        // unfiltered terminal voltage
        {
            const Cx det_pos = (out.v_ref_vec - v_term[k].pos) / cfg.z_v.z();
            Cx det_neg{0.0, 0.0};
            if (cfg.neg_seq.kind != NegSeqMode::Kind::Balanced &&
                cfg.regulator != RegulatorKind::AdaptiveVi && std::abs(v_term[k].pos) > 1e-6) {
                det_neg = neg_seq_reference(cfg.neg_seq, v_term[k], det_pos);
            }
            out.detect_ref_mag = max_phase_magnitude({det_pos, det_neg});
        }

        // power feedback used by the forming law
        const bool virtual_feedback = cf_mode && uses_cross_forming(cfg.regulator) &&
                                      cfg.forming != FormingKind::Dvoc;
        out.p_fb = virtual_feedback ? out.p_virtual : out.p_meas;
        const double q_fb = out.q_meas;

        // forming derivatives (rotating frame: d phi = omega_hat - omega0)
        switch (cfg.forming) {
        case FormingKind::Droop: {
            const double omega_hat = w0 * (1.0 + cfg.droop.m_p * (cfg.p_star() - out.p_fb));
            d[IX_PHI] = omega_hat - w0;
            break;
        }
        case FormingKind::Vsm:
            d[IX_PHI] = st.omega - w0;
            d[IX_OMEGA] = vsm_omega_rate(st.omega, out.p_fb, cfg.vsm);
            break;
        case FormingKind::ComplexDroop: {
            double dth, dv;
            complex_droop_rates(st.v_mag, out.p_fb, q_fb, cfg.dvoc, dth, dv);
            d[IX_PHI] = dth - w0;
            d[IX_VMAG] = freeze ? 0.0 : dv;
            break;
        }
        case FormingKind::Dvoc: {
            DvocParams rot = cfg.dvoc;
            rot.omega0 = 0.0; // rotating frame
            const Cx i_eff = cf_mode && uses_cross_forming(cfg.regulator)
                                 ? ip_meas / std::max(lambda, 1e-6)
                                 : ip_meas;
            const Cx rate = dvoc_rate(st.v_vec, i_eff, rot);
            d[IX_VVEC_RE] = rate.real();
            d[IX_VVEC_IM] = rate.imag();
            break;
        }
        case FormingKind::DualPort: {
            const double omega_hat =
                w0 * (1.0 + cfg.dual_port.m_p * (cfg.p_star() - out.p_fb) +
                      cfg.dual_port.m_dc * (cfg.v_dc - cfg.dual_port.v_dc_star));
            d[IX_PHI] = omega_hat - w0;
            break;
        }
        }

        // regulator and filter derivatives
        if (cfg.regulator == RegulatorKind::Explicit && cf_mode) {
            double rate = cfg.kappa_i * (i_lim - max_phase_magnitude(out.i_ref_unsat));
            if (st.v_lambda <= 0.0 && rate < 0.0) rate = 0.0;
            if (st.v_lambda >= 2.0 * cfg.v_star() && rate > 0.0) rate = 0.0;
            d[IX_VLAMBDA] = rate;
        }
        if (cfg.regulator == RegulatorKind::Implicit && cf_mode)
            d[IX_MU] = (out.mu_raw - st.mu_f) / cfg.tau_mu;

        d[IX_VFBP_RE] = (v_term[k].pos.real() - st.vfb_pos.real()) / cfg.tau_v;
        d[IX_VFBP_IM] = (v_term[k].pos.imag() - st.vfb_pos.imag()) / cfg.tau_v;
        d[IX_VFBN_RE] = (v_term[k].neg.real() - st.vfb_neg.real()) / cfg.tau_v;
        d[IX_VFBN_IM] = (v_term[k].neg.imag() - st.vfb_neg.imag()) / cfg.tau_v;
        if (cfg.neg_seq_v_filter) {
            d[IX_VNF_RE] = (v_term[k].neg.real() - st.vneg_f.real()) / cfg.neg_seq_tau;
            d[IX_VNF_IM] = (v_term[k].neg.imag() - st.vneg_f.imag()) / cfg.neg_seq_tau;
        }

        if (cfg.regulator != RegulatorKind::AdaptiveVi) {
            d[IX_IP_RE] = (out.i_ref_lim.pos.real() - st.i_pos.real()) / sim_.tau_c;
            d[IX_IP_IM] = (out.i_ref_lim.pos.imag() - st.i_pos.imag()) / sim_.tau_c;
            d[IX_IN_RE] = (out.i_ref_lim.neg.real() - st.i_neg.real()) / sim_.tau_c;
            d[IX_IN_IM] = (out.i_ref_lim.neg.imag() - st.i_neg.imag()) / sim_.tau_c;
        }

        if (cfg.regulator == RegulatorKind::CurrentForming && cf_mode) {
            const double omega_cf =
                w0 * (1.0 + cfg.current_forming.m_p * (cfg.p_star() - out.p_meas));
            d[IX_CFTH] = omega_cf - w0;
        }

        out.i_maxphase = max_phase_magnitude(i_meas[k]);
        if (outs) (*outs)[k] = out;
    }
}

// ---------------------------------------------------------------------------
// Stepping
// ---------------------------------------------------------------------------

void Simulation::apply_due_events() {
    while (next_setpoint_ < setpoints_.size() &&
           setpoints_[next_setpoint_].t <= t_ + 0.5 * sim_.dt) {
        const auto& ev = setpoints_[next_setpoint_];
        for (size_t k = 0; k < inverters_.size(); ++k) {
            if (ev.inverter >= 0 && static_cast<size_t>(ev.inverter) != k) continue;
            switch (ev.field) {
            case SetpointEvent::Field::PStar: inverters_[k].set_p_star(ev.value); break;
            case SetpointEvent::Field::QStar: inverters_[k].set_q_star(ev.value); break;
            case SetpointEvent::Field::VDc: inverters_[k].v_dc = ev.value; break;
            }
        }
        ++next_setpoint_;
    }
}

void Simulation::step() {
    apply_due_events();

    if (sim_.quasi_static_regulator) {
        // analysis-grade path: regulator, limiter, and tracking treated as
        // instantaneous; only the forming states integrate. Thevenin only.
        const FaultEvent* fault = active_fault(t_);
        SequenceNetworkSolver solver(net_.thevenin);
        const TheveninEquivalent th = solver.thevenin(fault);
        auto& st = states_[0];
        const auto& cfg = inverters_[0];
        const Cx z_tot = cfg.z_v.z() + th.z_th;
        auto p_of_phi = [&](double phi) {
            const Cx v_ref = std::polar(cfg.v_star(), phi);
            const Cx i_va = (v_ref - th.v_oc) / z_tot;
            if (std::abs(i_va) <= cfg.limiter.i_lim) {
                const Cx v_t = th.v_oc + th.z_th * i_va;
                return (v_t * std::conj(i_va)).real();
            }
            const auto pts = operating_point_geometry(phi, th.v_oc, z_tot, cfg.limiter.i_lim);
            if (!pts) {
                diag_.no_operating_point = true;
                throw NumericalError("no feasible operating point at t=" + std::to_string(t_));
            }
            const Cx i_sat = (pts->stable_candidate - th.v_oc) / z_tot;
            return (v_ref * std::conj(i_sat)).real();
        };
        const double dt = sim_.dt;
        const double w0 = cfg.omega0();
        auto om_rate = [&](double phi, double om) { return vsm_omega_rate(om, p_of_phi(phi), cfg.vsm); };
        const double k1p = st.omega - w0, k1o = om_rate(st.phi, st.omega);
        const double k2p = st.omega + 0.5 * dt * k1o - w0,
                     k2o = om_rate(st.phi + 0.5 * dt * k1p, st.omega + 0.5 * dt * k1o);
        const double k3p = st.omega + 0.5 * dt * k2o - w0,
                     k3o = om_rate(st.phi + 0.5 * dt * k2p, st.omega + 0.5 * dt * k2o);
        const double k4p = st.omega + dt * k3o - w0,
                     k4o = om_rate(st.phi + dt * k3p, st.omega + dt * k3o);
        st.phi += dt / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p);
        st.omega += dt / 6.0 * (k1o + 2 * k2o + 2 * k3o + k4o);
        // record-support: refresh algebraic quantities
        const Cx v_ref = std::polar(cfg.v_star(), st.phi);
        const Cx i_va = (v_ref - th.v_oc) / z_tot;
        Cx i_now = i_va;
        double v_lam = cfg.v_star();
        if (std::abs(i_va) > cfg.limiter.i_lim) {
            const auto pts = operating_point_geometry(st.phi, th.v_oc, z_tot, cfg.limiter.i_lim);
            if (!pts) {
                diag_.no_operating_point = true;
                throw NumericalError("no feasible operating point at t=" + std::to_string(t_));
            }
            i_now = (pts->stable_candidate - th.v_oc) / z_tot;
            v_lam = pts->s_mag;
        }
        st.i_pos = i_now;
        st.v_lambda = v_lam;
        st.v_mag = cfg.v_star();
        st.vfb_pos = th.v_oc + th.z_th * i_now;
        auto& out = last_outputs_[0];
        out.v_term = {st.vfb_pos, Cx{0.0, 0.0}};
        out.v_ref_vec = v_ref;
        out.p_virtual = (v_ref * std::conj(i_now)).real();
        out.p_meas = (st.vfb_pos * std::conj(i_now)).real();
        out.q_meas = (st.vfb_pos * std::conj(i_now)).imag();
        out.p_fb = out.p_virtual;
        out.i_maxphase = std::abs(i_now);
        out.mu_raw = std::min(1.0, cfg.limiter.i_lim / std::max(std::abs(i_va), 1e-12));
        out.v_lambda_mag = v_lam;
        t_ += dt;
        ++step_index_;
        check_divergence();
        return;
    }

    static thread_local std::vector<double> x0, k1, k2, k3, k4, xa;
    pack(x0);
    const double dt = sim_.dt;
    const size_t n = x0.size();
    std::vector<InverterOutputs> stage_outs(states_.size());

    evaluate(x0, k1, t_, nullptr);
    xa.resize(n);
    for (size_t i = 0; i < n; ++i) xa[i] = x0[i] + 0.5 * dt * k1[i];
    evaluate(xa, k2, t_, nullptr);
    for (size_t i = 0; i < n; ++i) xa[i] = x0[i] + 0.5 * dt * k2[i];
    evaluate(xa, k3, t_, nullptr);
    for (size_t i = 0; i < n; ++i) xa[i] = x0[i] + dt * k3[i];
    evaluate(xa, k4, t_, nullptr);
    for (size_t i = 0; i < n; ++i)
        xa[i] = x0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);

    unpack(xa, states_);
    t_ += dt;
    ++step_index_;
    post_step_discrete();
    check_divergence();
}

void Simulation::post_step_discrete() {
    // final algebraic evaluation at the new state for records and the mode
    // machine
    static thread_local std::vector<double> xf, dxf;
    pack(xf);
    evaluate(xf, dxf, t_, &last_outputs_);

    for (size_t k = 0; k < states_.size(); ++k) {
        auto& st = states_[k];
        const auto& cfg = inverters_[k];
        const auto& out = last_outputs_[k];

        // refresh algebraic frequency for reporting
        const double* d = &dxf[k * kStatesPerInverter];
        switch (cfg.forming) {
        case FormingKind::Droop:
        case FormingKind::DualPort:
        case FormingKind::ComplexDroop:
            st.omega = cfg.omega0() + d[IX_PHI];
            break;
        case FormingKind::Dvoc: {
            const Cx rate{d[IX_VVEC_RE], d[IX_VVEC_IM]};
            st.omega = cfg.omega0() + (rate / st.v_vec).imag();
            st.phi = std::arg(st.v_vec);
            st.v_mag = std::abs(st.v_vec);
            break;
        }
        default:
            break;
        }

        if (!uses_cross_forming(cfg.regulator) && cfg.regulator != RegulatorKind::CurrentForming)
            continue;

        const OperatingMode before = st.mode.mode();
        const OperatingMode after =
            st.mode.update(out.detect_ref_mag, std::abs(out.v_term.pos), cfg.limiter.i_lim,
                           sim_.dt);
        if (before == OperatingMode::VoltageForming && after == OperatingMode::CrossForming) {
            if (cfg.regulator == RegulatorKind::Explicit && cfg.reseed_integrator)
                st.v_lambda = cfg.v_star();
            if (cfg.regulator == RegulatorKind::Implicit) st.mu_f = out.mu_raw;
            if (cfg.regulator == RegulatorKind::CurrentForming) st.cf_theta = st.phi;
        } else if (before == OperatingMode::CrossForming && after == OperatingMode::VoltageForming) {
            st.v_lambda = std::abs(out.v_ref_vec);
            st.mu_f = 1.0;
            st.vfb_pos = out.v_term.pos; // re-seed the feedback filter
        }
        if (after == OperatingMode::VoltageForming) {
            st.v_lambda = std::abs(out.v_ref_vec);
            if (cfg.regulator == RegulatorKind::Implicit) st.mu_f = 1.0;
            if (cfg.regulator == RegulatorKind::CurrentForming) st.cf_theta = st.phi;
        } else if (cfg.regulator == RegulatorKind::Explicit) {
            st.v_lambda = std::clamp(st.v_lambda, 0.0, 2.0 * cfg.v_star());
        } else if (cfg.regulator == RegulatorKind::Implicit && st.mu_f < mu_floor) {
            st.mu_f = mu_floor;
            diag_.mu_floored = true;
        }
    }

    // no-operating-point diagnostics for saturated Thevenin systems
    if (net_.kind == NetworkConfig::Kind::Thevenin &&
        uses_cross_forming(inverters_[0].regulator) &&
        states_[0].mode.mode() == OperatingMode::CrossForming) {
        SequenceNetworkSolver solver(net_.thevenin);
        const TheveninEquivalent th = solver.thevenin(active_fault(t_));
        const double angle = inverters_[0].forming == FormingKind::Dvoc
                                 ? std::arg(states_[0].v_vec)
                                 : states_[0].phi;
        if (!operating_point_geometry(angle, th.v_oc, inverters_[0].z_v.z() + th.z_th,
                                      inverters_[0].limiter.i_lim))
            diag_.no_operating_point = true;
    }
}

void Simulation::check_divergence() const {
    for (size_t k = 0; k < states_.size(); ++k) {
        const auto& st = states_[k];
        const double worst =
            std::max({std::abs(st.v_mag), std::abs(st.v_vec), std::abs(st.i_pos),
                      std::abs(st.i_neg), std::abs(st.v_lambda), std::abs(st.e_int),
                      std::abs(st.omega - inverters_[k].omega0())});
        const bool nan = !std::isfinite(st.phi) || !std::isfinite(worst);
        if (nan || worst > sim_.divergence_limit) {
            std::ostringstream ctx;
            ctx << "numerical divergence: inverter " << inverters_[k].name << " at t=" << t_
                << " (worst state magnitude " << worst << ")";
            throw NumericalError(ctx.str());
        }
    }
}

RecordRow Simulation::record(int k) const {
    const auto& st = states_[k];
    const auto& out = last_outputs_[k];
    RecordRow row;
    row.t = t_;
    row.v_pos = out.v_term.pos;
    row.v_neg = out.v_term.neg;
    row.i_pos = inverters_[k].regulator == RegulatorKind::AdaptiveVi
                    ? (out.i_ref_unsat.pos) // algebraic measured current
                    : st.i_pos;
    row.i_neg = st.i_neg;
    row.i_maxphase = out.i_maxphase;
    row.p = out.p_meas;
    row.q = out.q_meas;
    row.p_virtual = out.p_virtual;
    row.phi = st.mode.mode() == OperatingMode::CrossForming &&
                      inverters_[k].regulator == RegulatorKind::CurrentForming
                  ? st.cf_theta
                  : (inverters_[k].forming == FormingKind::Dvoc ? std::arg(st.v_vec) : st.phi);
    row.omega = st.omega;
    row.mu = out.mu_raw;
    row.v_lambda_mag = out.v_lambda_mag;
    row.mode = st.mode.mode() == OperatingMode::CrossForming ? 1 : 0;
    return row;
}

void Simulation::run(const std::function<void(int, const RecordRow&)>& sink) {
    // initial record (state at t = 0)
    {
        static thread_local std::vector<double> xf, dxf;
        pack(xf);
        evaluate(xf, dxf, t_, &last_outputs_);
        for (int k = 0; k < n_inverters(); ++k) sink(k, record(k));
    }
    const long total = std::lround(sim_.t_end / sim_.dt);
    while (step_index_ < total) {
        step();
        if (step_index_ % sim_.decimation == 0 || step_index_ == total)
            for (int k = 0; k < n_inverters(); ++k) sink(k, record(k));
    }
}

double Simulation::power_balance_residual() const {
    if (net_.kind == NetworkConfig::Kind::Thevenin) {
        const FaultEvent* f = active_fault(t_);
        SequenceNetworkSolver solver(net_.thevenin);
        const auto& st = states_[0];
        SequencePhasor i_inj{st.i_pos, st.i_neg};
        if (inverters_[0].regulator == RegulatorKind::AdaptiveVi) {
            const TheveninEquivalent th = solver.thevenin(f);
            i_inj = {(st.e_int - th.v_oc) / th.z_th, Cx{0.0, 0.0}};
        }
        const auto v = solver.solve(i_inj, f);
        const auto& g = net_.thevenin;
        const Cx vg_eff = f && f->kind == FaultEvent::Kind::VoltageDip
                              ? std::polar(f->dip_to, std::arg(g.v_g) + f->phase_jump)
                              : g.v_g;
        // conventional negative-sequence phasors for the branch bookkeeping
        const Cx i_neg_c = std::conj(i_inj.neg);
        const Cx v_neg_c = std::conj(v.neg);
        const Cx u_pos = v.pos - g.z_g1 * i_inj.pos;
        const Cx u_neg = v_neg_c - g.z_g1 * i_neg_c;
        const Cx i2_pos = (vg_eff - u_pos) / g.z_g2;
        const Cx i2_neg = -u_neg / g.z_g2;
        const Cx f_pos = i_inj.pos + i2_pos;
        const Cx f_neg = i_neg_c + i2_neg;

        double gen = (v.pos * std::conj(i_inj.pos)).real() + (v_neg_c * std::conj(i_neg_c)).real();
        gen += (vg_eff * std::conj(i2_pos)).real();
        double loss = std::norm(i_inj.pos) * g.z_g1.real() + std::norm(i_inj.neg) * g.z_g1.real();
        loss += std::norm(i2_pos) * g.z_g2.real() + std::norm(i2_neg) * g.z_g2.real();
        // fault branch dissipation and the zero-sequence grid path
        if (f && f->kind != FaultEvent::Kind::VoltageDip) {
            loss += (u_pos * std::conj(f_pos)).real() + (u_neg * std::conj(f_neg)).real();
            if (f->kind == FaultEvent::Kind::SingleLineGround ||
                f->kind == FaultEvent::Kind::DoubleLineGround) {
                // zero-sequence: current -u0/z_g2 with u0 from the closed form
                Cx u_zero{0.0, 0.0};
                if (f->kind == FaultEvent::Kind::SingleLineGround) {
                    u_zero = -g.z_g2 * f_pos; // f0 = f+ for this interconnection
                } else {
                    u_zero = u_pos / (1.0 + 3.0 * f->r_f / g.z_g2);
                }
                const Cx f_zero = -u_zero / g.z_g2;
                loss += std::norm(f_zero) * g.z_g2.real() + (u_zero * std::conj(f_zero)).real();
            }
        }
        return gen - loss;
    }
    // multibus: generation by inverter injections balances network consumption
    const FaultEvent* f = active_fault(t_);
    const MultiBusSolver* solver = f ? mb_fault_.get() : mb_nofault_.get();
    for (size_t k = 0; k < states_.size(); ++k) {
        mb_sources_[k].kind = BusSource::Kind::Injection;
        mb_sources_[k].bus = net_.inverter_bus[k];
        mb_sources_[k].value = states_[k].i_pos * inverters_[k].rating;
    }
    const Eigen::VectorXcd v = solver->solve(mb_sources_);
    double gen = 0.0;
    for (size_t k = 0; k < states_.size(); ++k)
        gen += (v(net_.inverter_bus[k]) * std::conj(mb_sources_[k].value)).real();
    double consumed = solver->network_consumption(v, mb_sources_);
    if (f && net_.fault_bus >= 0 && f->r_f > 1e-12)
        consumed += std::norm(v(net_.fault_bus)) / f->r_f;
    return gen - consumed;
}

TheveninEquivalent Simulation::current_thevenin() const {
    if (net_.kind != NetworkConfig::Kind::Thevenin)
        throw ConfigError("current_thevenin: Thevenin networks only");
    SequenceNetworkSolver solver(net_.thevenin);
    return solver.thevenin(active_fault(t_));
}

} // namespace gfm
