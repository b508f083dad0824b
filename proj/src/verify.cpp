#include "gfm/verify.hpp"

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "gfm/crossforming.hpp"
#include "gfm/errors.hpp"
#include "gfm/forming.hpp"
#include "gfm/limiting.hpp"
#include "gfm/negseq.hpp"
#include "gfm/network.hpp"
#include "gfm/phasor.hpp"
#include "gfm/scenario.hpp"
#include "gfm/sim.hpp"
#include "gfm/stability.hpp"

namespace gfm {

namespace {

using Clock = std::chrono::steady_clock;

Cx random_cx(std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> mag(lo, hi);
    std::uniform_real_distribution<double> ang(-pi, pi);
    return std::polar(mag(rng), ang(rng));
}

struct Outcome {
    double measured{0.0};
    double tolerance{0.0};
    bool pass{false};
    std::string detail;
    Outcome& against(double tol) {
        tolerance = tol;
        pass = measured <= tol;
        return *this;
    }
};

// ---------------------------------------------------------------------------
// shared scenario builders and run helpers
// ---------------------------------------------------------------------------

InverterConfig table_vsm_inverter(RegulatorKind reg, double p_star) {
    InverterConfig inv;
    inv.forming = FormingKind::Vsm;
    inv.vsm = VsmParams{5.0, 25.0, 0.2, p_star, 0.0, 1.0, omega0_default};
    inv.set_p_star(p_star);
    inv.regulator = reg;
    inv.z_v = {0.0, 0.2};
    inv.kappa = 1.0;
    inv.kappa_i = 50.0;
    inv.limiter.i_lim = 1.1;
    inv.current_forming.i_lim = 1.1;
    return inv;
}

/// Purely inductive Thevenin system with a permanent source dip: the
/// analysis-grade setup behind the power-angle, impedance, and equal-area
/// criteria.
Scenario dip_scenario(RegulatorKind reg, double dip_to, double p_star, double t_end) {
    Scenario sc;
    sc.name = "dip";
    sc.sim = SimConfig{1e-4, t_end, 1e-3, 10, false, 1e3};
    sc.network.kind = NetworkConfig::Kind::Thevenin;
    sc.network.thevenin = TheveninGrid{Cx{0.0, 0.1}, Cx{0.0, 0.03}, Cx{1.0, 0.0}};
    sc.inverters.push_back(table_vsm_inverter(reg, p_star));
    FaultEvent dip;
    dip.kind = FaultEvent::Kind::VoltageDip;
    dip.t_on = 1.0;
    dip.t_clear = 1e9;
    dip.dip_to = dip_to;
    sc.faults.push_back(dip);
    return sc;
}

struct Rows {
    std::vector<std::vector<RecordRow>> per_inverter;
    RunResult result;
};

Rows run_rows(const Scenario& sc) {
    Rows r;
    r.result = run_scenario_collect(sc, &r.per_inverter);
    return r;
}

const RecordRow& last_row(const Rows& r, int k = 0) { return r.per_inverter[k].back(); }

std::vector<RecordRow> window_rows(const Rows& r, double t0, double t1, int k = 0) {
    std::vector<RecordRow> out;
    for (const auto& row : r.per_inverter[k])
        if (row.t >= t0 && row.t < t1) out.push_back(row);
    return out;
}

// ---------------------------------------------------------------------------
// reusable property bodies (shared between module checks and acceptance)
// ---------------------------------------------------------------------------

Outcome phase_magnitude_oracle_body(uint64_t seed) {
    std::mt19937_64 rng{seed};
    const double omega0 = omega0_default;
    const double period = 2.0 * pi / omega0;
    double worst = 0.0;
    for (int trial = 0; trial < 60; ++trial) {
        const SequencePhasor s{random_cx(rng, 0.0, 1.5), random_cx(rng, 0.0, 1.0)};
        const PhaseTriplet closed = phase_magnitudes(s);
        PhaseTriplet peak{0.0, 0.0, 0.0};
        for (int k = 0; k < 10000; ++k) {
            const PhaseTriplet inst = reconstruct_instantaneous(s, k * period / 10000.0, omega0);
            peak.a = std::max(peak.a, std::abs(inst.a));
            peak.b = std::max(peak.b, std::abs(inst.b));
            peak.c = std::max(peak.c, std::abs(inst.c));
        }
        worst = std::max({worst, std::abs(closed.a - peak.a), std::abs(closed.b - peak.b),
                          std::abs(closed.c - peak.c)});
    }
    Outcome o;
    o.measured = worst;
    o.detail = "closed-form phase magnitudes vs 1e4-sample reconstruction";
    return o;
}

Outcome power_identity_body(uint64_t seed) {
    std::mt19937_64 rng{seed};
    const double omega0 = omega0_default;
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const SequencePhasor v{random_cx(rng, 0.0, 1.5), random_cx(rng, 0.0, 1.0)};
        const SequencePhasor i{random_cx(rng, 0.0, 1.5), random_cx(rng, 0.0, 1.0)};
        const PowerDecomposition d = power_decompose(v, i);
        for (int k = 0; k < 8; ++k) {
            const double t = k * (2.0 * pi / omega0) / 8.0;
            const PhaseTriplet vx = reconstruct_instantaneous(v, t, omega0);
            const PhaseTriplet ix = reconstruct_instantaneous(i, t, omega0);
            const double direct = 2.0 / 3.0 * (vx.a * ix.a + vx.b * ix.b + vx.c * ix.c);
            worst = std::max(worst, std::abs(d.p_at(t, omega0) - direct));
        }
    }
    Outcome o;
    o.measured = worst;
    o.detail = "decomposed p(t) vs direct three-phase instantaneous power";
    return o;
}

Outcome limiter_invariants_body(uint64_t seed) {
    std::mt19937_64 rng{seed};
    std::uniform_real_distribution<double> ang(-pi, pi);
    double worst_limit = 0.0, worst_ratio = 0.0, worst_frame = 0.0;
    const double i_lim = 1.1;
    for (int trial = 0; trial < 300; ++trial) {
        const SequencePhasor ref{random_cx(rng, 0.0, 3.0), random_cx(rng, 0.0, 1.5)};
        const auto lim = elliptical_limit(ref, i_lim);
        const double pre = max_phase_magnitude(ref);
        worst_limit = std::max(worst_limit,
                               std::abs(max_phase_magnitude(lim.ref) - std::min(pre, i_lim)));
        if (std::abs(ref.pos) > 1e-9 && std::abs(ref.neg) > 1e-9) {
            const double scale = std::max(1.0, std::abs(ref.pos) * std::abs(lim.ref.neg));
            worst_ratio = std::max(
                worst_ratio, std::abs(lim.ref.neg * ref.pos - lim.ref.pos * ref.neg) / scale);
        }
        const double theta = ang(rng);
        const auto rot = dq_limit(rotate(ref.pos, -theta), rotate(ref.neg, theta), i_lim);
        worst_frame = std::max(worst_frame,
                               std::abs(rotate(rot.ref.pos, theta) - lim.ref.pos) +
                                   std::abs(rotate(rot.ref.neg, -theta) - lim.ref.neg));
        const auto twice = elliptical_limit(lim.ref, i_lim);
        worst_limit = std::max(worst_limit, std::abs(twice.ref.pos - lim.ref.pos));
    }
    Outcome o;
    o.measured = std::max({worst_limit / 1e-12, worst_ratio / 1e-15, worst_frame / 1e-12});
    o.detail = "worst-phase clamp, sequence-ratio, dq-frame equivalence (normalized)";
    return o;
}

Outcome negseq_iff_body(uint64_t seed) {
    std::mt19937_64 rng{seed};
    std::uniform_real_distribution<double> ang(-pi, pi);
    double worst_mode = 0.0;  // residual ripple of the exact references
    double worst_necessity = 1e300;
    double worst_exclusive = 1e300;
    for (int trial = 0; trial < 100; ++trial) {
        const SequencePhasor v{random_cx(rng, 0.3, 1.2), random_cx(rng, 0.05, 0.5)};
        const Cx ip = random_cx(rng, 0.1, 1.2);
        const Cx in_p = neg_seq_reference(NegSeqMode::p_osc_suppress(), v, ip);
        const Cx in_q = neg_seq_reference(NegSeqMode::q_osc_suppress(), v, ip);
        const auto rp = verify_non_oscillation(v, {ip, in_p});
        const auto rq = verify_non_oscillation(v, {ip, in_q});
        worst_mode = std::max({worst_mode, rp.p_ripple, rq.q_ripple});

        const Cx bump = std::polar(1e-3, ang(rng));
        worst_necessity = std::min(
            {worst_necessity, verify_non_oscillation(v, {ip, in_p + bump}).p_ripple,
             verify_non_oscillation(v, {ip, in_q + bump}).q_ripple});

        for (int k = 0; k < 8; ++k) {
            const Cx in = k == 0 ? in_p : (k == 1 ? in_q : random_cx(rng, 0.0, 2.0));
            const auto r = verify_non_oscillation(v, {ip, in});
            worst_exclusive = std::min(worst_exclusive, std::max(r.p_ripple, r.q_ripple));
        }
    }
    Outcome o;
    o.measured = worst_mode;
    o.pass = worst_mode < 1e-12 && worst_necessity > 1e-9 && worst_exclusive > 1e-9;
    o.tolerance = 1e-12;
    o.detail = "mode ripple " + std::to_string(worst_mode) + ", necessity floor " +
               std::to_string(worst_necessity) + ", exclusivity floor " +
               std::to_string(worst_exclusive);
    return o;
}

Outcome polar_rect_equiv_body() {
    DvocParams prm;
    prm.omega0 = 0.0;
    prm.eta = 6.2832;
    prm.alpha = 0.8;
    prm.phi = pi / 2;
    prm.p_star = 0.25;
    prm.q_star = -0.05;
    const Cx i_o = std::polar(0.4, -0.3);
    FormingRefState rect;
    rect.v_vec = std::polar(0.95, 0.2);
    double theta = 0.2, vmag = 0.95;
    const double dt = 1e-4;
    for (int k = 0; k < 1000; ++k) {
        rect = dvoc_step(rect, i_o, prm, dt);
        auto rates = [&](double th, double v, double& dth, double& dv) {
            const Cx vv = std::polar(v, th);
            const Cx s = vv * std::conj(i_o);
            complex_droop_rates(v, s.real(), s.imag(), prm, dth, dv);
        };
        double k1t, k1v, k2t, k2v, k3t, k3v, k4t, k4v;
        rates(theta, vmag, k1t, k1v);
        rates(theta + 0.5 * dt * k1t, vmag + 0.5 * dt * k1v, k2t, k2v);
        rates(theta + 0.5 * dt * k2t, vmag + 0.5 * dt * k2v, k3t, k3v);
        rates(theta + dt * k3t, vmag + dt * k3v, k4t, k4v);
        theta += dt / 6.0 * (k1t + 2 * k2t + 2 * k3t + k4t);
        vmag += dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
    }
    Outcome o;
    o.measured = std::abs(rect.v_vec - std::polar(vmag, theta));
    o.detail = "polar complex droop vs rectangular oscillator, 0.1 s shared RK4 grid";
    return o;
}

Outcome enhanced_dvoc_equiv_body() {
    DvocParams prm;
    prm.eta = 6.2832;
    prm.alpha = 0.8;
    prm.p_star = 0.3;
    prm.q_star = 0.05;
    const double lambda = 0.7;
    const Cx i_o = std::polar(0.9, -0.6);
    FormingRefState enhanced;
    enhanced.v_vec = std::polar(1.0, 0.0);
    Cx normal = lambda * enhanced.v_vec;
    const double v_lambda_star = lambda * prm.v_star;
    const double dt = 1e-4;
    auto rate = [&](Cx v) {
        const double vs2 = prm.v_star * prm.v_star;
        const double vls2 = v_lambda_star * v_lambda_star;
        return Cx{0.0, prm.omega0} * v +
               std::polar(prm.eta, prm.phi) * (Cx{prm.p_star, -prm.q_star} / vs2 * v - i_o) +
               prm.eta * prm.alpha * (vls2 - std::norm(v)) / vls2 * v;
    };
    for (int k = 0; k < 10000; ++k) {
        enhanced = enhanced_dvoc_step(enhanced, i_o, lambda, prm, dt);
        const Cx k1 = rate(normal);
        const Cx k2 = rate(normal + 0.5 * dt * k1);
        const Cx k3 = rate(normal + 0.5 * dt * k2);
        const Cx k4 = rate(normal + dt * k3);
        normal += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    Outcome o;
    o.measured = std::abs(lambda * enhanced.v_vec - normal);
    o.detail = "enhanced oscillator (frozen lambda) vs scaled normal form, 1 s";
    return o;
}

Outcome energy_dissipation_body() {
    const SwingParams swing = swing_from_vsm(5.0, 25.0, 0.5, omega0_default);
    const PowerAngleCurve curve{3.0303, 0.0};
    const double d0 = std::asin(swing.p_star / curve.p_max);
    const EnergyParams eprm{swing.m, curve.p_max, swing.p_star, d0};
    const auto tr =
        integrate_swing(swing, d0 + 0.6, 0.0, [&](double) { return curve.p_max; }, 1e-4, 40000);
    const double v0 = energy_function(tr.w.front(), tr.delta.front(), eprm);
    double worst = 0.0;
    for (size_t k = 0; k < tr.t.size(); k += 50) {
        const double vk = energy_function(tr.w[k], tr.delta[k], eprm);
        worst = std::max(worst, std::abs(vk - v0 + tr.dissipated[k]));
    }
    Outcome o;
    o.measured = worst / std::max(std::abs(v0), tr.dissipated.back());
    o.detail = "dV/dt = -D w^2 along a damped swing (trapezoid-free, co-integrated)";
    return o;
}

// saturated virtual-power sweep against the sine law, unit-level fixed point
Outcome power_angle_sweep_body() {
    const Cx v_g{0.5, 0.0};
    const Cx z_g{0.0, 0.13};
    const VirtualImpedance zv{0.0, 0.2};
    const double i_lim = 1.1;
    const double p_max = 1.0 * 0.5 / 0.33;
    double worst = 0.0;
    for (double delta = 0.1; delta <= 0.701; delta += 0.05) {
        ExplicitRegState reg;
        reg.kappa_i = 50.0;
        Cx i{0.0, 0.0};
        SequencePhasor prev{Cx{0.0, 0.0}, Cx{0.0, 0.0}};
        const double dt = 1e-4;
        for (int k = 0; k < 30000; ++k) {
            const Cx v_term = v_g + z_g * i;
            const Cx i_ref = explicit_step(reg, delta, v_term, prev, i_lim, zv, dt);
            prev = {i_ref, Cx{0.0, 0.0}};
            i += dt / 1e-3 * (circular_limit(i_ref, i_lim) - i);
        }
        const double p_virtual = (std::polar(1.0, delta) * std::conj(i)).real();
        worst = std::max(worst, std::abs(p_virtual - p_max * std::sin(delta)));
    }
    Outcome o;
    o.measured = worst;
    o.detail = "frozen-angle saturated sweep vs p_max sin(delta)";
    return o;
}

CheckResult make_result(const std::string& id, const Outcome& o, double tol_or_zero,
                        Clock::time_point t0) {
    CheckResult r;
    r.id = id;
    r.measured = o.measured;
    r.tolerance = o.tolerance > 0.0 ? o.tolerance : tol_or_zero;
    r.pass = o.tolerance > 0.0 ? o.pass : o.measured <= tol_or_zero;
    r.detail = o.detail;
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
}

// ---------------------------------------------------------------------------
// acceptance criterion bodies
// ---------------------------------------------------------------------------

CheckResult criterion_case1(const CheckContext& ctx) {
    const auto t0 = Clock::now();
    CheckResult r;
    r.id = "acceptance.c01_current_limiting";
    r.tolerance = 1e-3;
    double worst_band = 0.0;    // envelope band during the 0.3 s fault
    double worst_steady = 0.0;  // settled fault-on value (extended fault)
    double worst_return = 0.0;
    double min_q = 1e300;
    bool ok = true;
    std::string detail;
    for (const char* file : {"case1_explicit.json", "case1_implicit.json"}) {
        const auto t_run0 = Clock::now();
        std::ifstream in(ctx.scenario_dir + "/" + std::string(file));
        if (!in) {
            ok = false;
            detail += std::string(file) + ": missing; ";
            continue;
        }
        const nlohmann::json doc = nlohmann::json::parse(in);
        const Scenario sc = parse_scenario(doc);
        const Rows rows = run_rows(sc);
        const double wall = std::chrono::duration<double>(Clock::now() - t_run0).count();
        if (rows.result.exit_code != 0) {
            ok = false;
            detail += std::string(file) + ": " + rows.result.message + "; ";
            continue;
        }
        // during the 300 ms fault the operating angle is still moving (the
        // Thevenin source phase-jumps at the fault), so the envelope must sit
        // at the limit to within the band: it reaches 1.1 and never overshoots
        double envelope_peak = 0.0;
        for (const auto& row : window_rows(rows, 3.02, 3.30)) {
            envelope_peak = std::max(envelope_peak, row.i_maxphase);
            worst_band = std::max(worst_band, row.i_maxphase - 1.1); // overcurrent
        }
        worst_band = std::max(worst_band, 1.1 - envelope_peak); // must reach the limit
        // reactive power positive during the fault (after the entry transient)
        for (const auto& row : window_rows(rows, 3.05, 3.30)) min_q = std::min(min_q, row.q);
        // post-fault return to the pre-fault operating point by t = 10 s
        RecordRow pre{};
        for (const auto& row : rows.per_inverter[0])
            if (row.t < 3.0) pre = row;
        const RecordRow& fin = last_row(rows);
        worst_return = std::max({worst_return, std::abs(fin.v_pos - pre.v_pos),
                                 std::abs(fin.i_pos - pre.i_pos), std::abs(fin.p - pre.p),
                                 std::abs(fin.q - pre.q)});
        detail += std::string(file) + " wall " + std::to_string(wall) + " s; ";
        ok = ok && wall < 10.0;

        // the settled fault-on current: same fault held until the swing has
        // died out, measured over the last half second
        const Scenario ext = patch_scenario(
            doc, {{"/events/0/fault/t_clear", 6.0}, {"/sim/t_end", 6.0}});
        const Rows rext = run_rows(ext);
        if (rext.result.exit_code != 0) {
            ok = false;
            detail += std::string(file) + " extended: " + rext.result.message + "; ";
            continue;
        }
        for (const auto& row : window_rows(rext, 5.5, 6.0))
            worst_steady = std::max(worst_steady, std::abs(row.i_maxphase - 1.1));
    }
    r.measured = std::max({worst_band, worst_steady, worst_return});
    r.pass = ok && worst_band <= 1e-3 && worst_steady <= 1e-3 && min_q > 0.0 &&
             worst_return <= 1e-4;
    r.detail = detail + "envelope band dev " + std::to_string(worst_band) + ", settled dev " +
               std::to_string(worst_steady) + ", min q " + std::to_string(min_q) +
               ", return dev " + std::to_string(worst_return);
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
}

CheckResult criterion_regulator_agreement(const CheckContext&) {
    const auto t0 = Clock::now();
    CheckResult r;
    r.id = "acceptance.c02_regulator_agreement";
    r.tolerance = 1e-4;
    double worst = 0.0;
    std::string detail;
    for (double dip : {0.1, 0.3, 0.5}) {
        const Rows ex = run_rows(dip_scenario(RegulatorKind::Explicit, dip, 0.2, 8.0));
        const Rows im = run_rows(dip_scenario(RegulatorKind::Implicit, dip, 0.2, 8.0));
        if (ex.result.exit_code != 0 || im.result.exit_code != 0) {
            r.pass = false;
            r.detail = "run failed: " + ex.result.message + im.result.message;
            r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
            return r;
        }
        const RecordRow& a = last_row(ex);
        const RecordRow& b = last_row(im);
        worst = std::max({worst, std::abs(a.v_lambda_mag - b.v_lambda_mag),
                          std::abs(a.i_pos - b.i_pos)});
        detail += "dip " + std::to_string(dip) + ": |v_lambda| " +
                  std::to_string(a.v_lambda_mag) + "/" + std::to_string(b.v_lambda_mag) + "; ";
    }
    r.measured = worst;
    r.pass = worst <= r.tolerance;
    r.detail = detail;
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
}

CheckResult criterion_power_angle(const CheckContext&) {
    const auto t0 = Clock::now();
    CheckResult r;
    r.id = "acceptance.c03_sinusoidal_power_angle";
    r.tolerance = 1e-9;
    const Outcome sweep = power_angle_sweep_body();
    // full-simulation spot check at one settled saturated point
    const Rows rows = run_rows(dip_scenario(RegulatorKind::Explicit, 0.5, 0.2, 8.0));
    double sim_dev = 1e300;
    if (rows.result.exit_code == 0) {
        const RecordRow& fin = last_row(rows);
        const double p_max = 1.0 * 0.5 / 0.33;
        sim_dev = std::abs(fin.p_virtual - p_max * std::sin(fin.phi));
    }
    r.measured = std::max(sweep.measured, sim_dev);
    r.pass = r.measured <= r.tolerance;
    r.detail = "sweep dev " + std::to_string(sweep.measured) + ", settled-sim dev " +
               std::to_string(sim_dev);
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
}

CheckResult criterion_equivalent_impedance(const CheckContext&) {
    const auto t0 = Clock::now();
    CheckResult r;
    r.id = "acceptance.c04_constant_vs_current_dependent_impedance";
    r.tolerance = 1e-6;
    // The equivalent-impedance identities are saturated steady-state
    // statements; the baselines lose synchronism at the severest dip under a
    // 0.2 pu setpoint, so the comparison runs at p* = 0.1 where every
    // strategy stays saturated and admits a settled fault-on operating point.
    const double p_star = 0.1;
    std::vector<Cx> z_cf, z_b, z_a;
    double worst_formula = 0.0;
    for (double dip : {0.1, 0.3, 0.5}) {
        // cross-forming
        {
            const Rows rows = run_rows(dip_scenario(RegulatorKind::Explicit, dip, p_star, 8.0));
            const RecordRow& fin = last_row(rows);
            z_cf.push_back((std::polar(fin.v_lambda_mag, fin.phi) - fin.v_pos) / fin.i_pos);
        }
        // limiter + virtual admittance (Type B)
        {
            const Rows rows =
                run_rows(dip_scenario(RegulatorKind::VirtualAdmittance, dip, p_star, 12.0));
            const RecordRow& fin = last_row(rows);
            const Cx v_hat = std::polar(fin.v_lambda_mag, fin.phi);
            const Cx z_meas = (v_hat - fin.v_pos) / fin.i_pos;
            const double i_ref_mag = std::abs(v_hat - fin.v_pos) / 0.2;
            const Cx z_form = equivalent_impedance_limiter_va(i_ref_mag, {0.0, 0.2}, 1.1);
            worst_formula = std::max(worst_formula, std::abs(z_meas - z_form));
            z_b.push_back(z_meas);
        }
        // adaptive virtual impedance (Type A)
        {
            const Rows rows = run_rows(dip_scenario(RegulatorKind::AdaptiveVi, dip, p_star, 10.0));
            const RecordRow& fin = last_row(rows);
            const Cx v_hat = std::polar(fin.v_lambda_mag, fin.phi);
            const Cx z_meas = (v_hat - fin.v_pos) / fin.i_pos;
            const Cx z_form =
                equivalent_impedance_adaptive_vi(std::abs(fin.i_pos), AdaptiveViConfig{});
            worst_formula = std::max(worst_formula, std::abs(z_meas - z_form));
            z_a.push_back(z_meas);
        }
    }
    auto spread = [](const std::vector<Cx>& zs) {
        double s = 0.0;
        for (const Cx& z : zs)
            for (const Cx& w : zs) s = std::max(s, std::abs(z - w));
        return s;
    };
    const double cf_spread = spread(z_cf);
    const double b_spread = spread(z_b);
    const double a_spread = spread(z_a);
    r.measured = std::max(cf_spread / 1e-9 * 1e-6, worst_formula);
    r.pass = cf_spread < 1e-9 && worst_formula < 1e-6 && b_spread > 0.01 && a_spread > 0.01;
    r.detail = "cross-forming spread " + std::to_string(cf_spread) + ", formula dev " +
               std::to_string(worst_formula) + ", type-B spread " + std::to_string(b_spread) +
               ", type-A spread " + std::to_string(a_spread);
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
}

CheckResult criterion_negseq(const CheckContext& ctx) {
    const auto t0 = Clock::now();
    Outcome o = negseq_iff_body(ctx.seed);
    CheckResult r = make_result("acceptance.c05_negative_sequence_iff", o, 1e-12, t0);
    r.pass = r.pass && r.seconds < 5.0;
    return r;
}

CheckResult criterion_limiters(const CheckContext& ctx) {
    const auto t0 = Clock::now();
    Outcome lim = limiter_invariants_body(ctx.seed);
    Outcome mag = phase_magnitude_oracle_body(ctx.seed + 1);
    CheckResult r;
    r.id = "acceptance.c06_limiter_invariants";
    r.tolerance = 1.0; // normalized
    r.measured = std::max(lim.measured, mag.measured / 1e-6);
    r.pass = lim.measured <= 1.0 && mag.measured <= 1e-6;
    r.detail = lim.detail + "; phase-magnitude oracle dev " + std::to_string(mag.measured);
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
}

CheckResult criterion_normal_forms(const CheckContext&) {
    const auto t0 = Clock::now();
    const Outcome a = polar_rect_equiv_body();
    const Outcome b = enhanced_dvoc_equiv_body();
    CheckResult r;
    r.id = "acceptance.c07_normal_form_equivalences";
    r.tolerance = 1.0; // normalized: a against 1e-9, b against 1e-8
    r.measured = std::max(a.measured / 1e-9, b.measured / 1e-8);
    r.pass = a.measured <= 1e-9 && b.measured <= 1e-8;
    r.detail = "polar/rect dev " + std::to_string(a.measured) + ", enhanced/normal dev " +
               std::to_string(b.measured);
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
}

CheckResult criterion_energy_equal_area(const CheckContext&) {
    const auto t0 = Clock::now();
    CheckResult r;
    r.id = "acceptance.c08_energy_and_equal_area";
    const Outcome diss = energy_dissipation_body();

    // undamped critical clearing time: closed-form equal-area vs bisection on
    // the quasi-static time-domain model. The virtual reactance is raised to
    // j0.8 so the saturated-operating-point circle encloses the origin and
    // feasibility holds along the whole swing; the magnitude droop is off so
    // the reference magnitude is exactly v*.
    const double p_star = 0.5;
    const double x_v = 0.8;
    const double x_tot = x_v + 0.13;
    const PowerAngleCurve pre{1.0 / x_tot, 0.0};
    const PowerAngleCurve fault{0.1 / x_tot, 0.0};
    const PowerAngleCurve post = pre;
    const auto dc = critical_clearing_angle(pre, fault, post, p_star);
    double t_gap = 1e300;
    std::string detail;
    if (dc) {
        const SwingParams swing = swing_from_vsm(5.0, 0.0, p_star, omega0_default);
        const double d0 = equilibria(pre, p_star)->delta_sep;
        const double t_crit = fault_on_travel_time(swing, fault, d0, *dc);

        const double delta_uep_post = equilibria(post, p_star)->delta_uep;
        const double dt = 1e-4;
        auto stable_with_clear = [&](double t_clear) {
            Scenario sc = dip_scenario(RegulatorKind::Explicit, 0.1, p_star, t_clear + 3.0);
            sc.sim.quasi_static_regulator = true;
            sc.inverters[0].vsm.d = 0.0;
            sc.inverters[0].vsm.m_q = 0.0;
            sc.inverters[0].z_v = {0.0, x_v};
            sc.faults[0].t_clear = 1.0 + t_clear;
            std::vector<std::vector<RecordRow>> rows;
            const RunResult res = run_scenario_collect(sc, &rows);
            if (res.exit_code != 0) return false;
            for (const auto& row : rows[0])
                if (row.t > 1.0 + t_clear && row.phi > delta_uep_post) return false;
            return true;
        };
        double lo = 0.01, hi = 1.5;
        if (stable_with_clear(hi)) {
            detail = "bisection bracket failure (upper end stable); ";
            t_gap = 1e300;
        } else {
            while (hi - lo > dt) {
                const double mid = std::round((0.5 * (lo + hi)) / dt) * dt;
                if (mid <= lo || mid >= hi) break;
                (stable_with_clear(mid) ? lo : hi) = mid;
            }
            const double t_bisect = 0.5 * (lo + hi);
            t_gap = std::abs(t_bisect - t_crit);
            detail = "t_crit analytic " + std::to_string(t_crit) + " s, bisect " +
                     std::to_string(t_bisect) + " s; ";
        }
    }
    r.tolerance = 1.0; // normalized: dissipation vs 1e-6, timing vs 2 dt
    r.measured = std::max(diss.measured / 1e-6, t_gap / 2e-4);
    r.pass = diss.measured <= 1e-6 && t_gap <= 2e-4;
    r.detail = detail + "dissipation rel dev " + std::to_string(diss.measured) + ", clearing gap " +
               std::to_string(t_gap) + " s";
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
}

CheckResult criterion_dvoc_condition(const CheckContext& ctx) {
    const auto t0 = Clock::now();
    CheckResult r;
    r.id = "acceptance.c09_dvoc_sufficient_condition";
    std::mt19937_64 rng{ctx.seed + 9};
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    int accepted = 0, failures = 0, attempts = 0;
    while (accepted < 50 && attempts < 4000) {
        ++attempts;
        DvocParams prm;
        prm.omega0 = 0.0; // rotating frame
        prm.eta = 2.0 + 13.0 * u01(rng);
        prm.alpha = 0.2 + 1.3 * u01(rng);
        prm.phi = 1.2 + (pi / 2 - 1.2) * u01(rng);
        prm.p_star = -0.6 + 1.2 * u01(rng);
        prm.q_star = -0.4 + 0.8 * u01(rng);
        const Cx z_total{0.03 * u01(rng), 0.15 + 0.3 * u01(rng)};
        const Cx v_g = std::polar(0.7 + 0.3 * u01(rng), 0.0);
        const Cx y = 1.0 / z_total;

        // synchronization equilibrium of the normal form
        auto rate = [&](Cx v) { return dvoc_rate(v, (v - v_g) * y, prm); };
        Cx v_eq = v_g;
        bool converged = false;
        for (int it = 0; it < 80; ++it) {
            const Cx f = rate(v_eq);
            if (std::abs(f) < 1e-12) {
                converged = true;
                break;
            }
            const double h = 1e-7;
            const Cx fx = (rate(v_eq + Cx{h, 0.0}) - rate(v_eq - Cx{h, 0.0})) / (2.0 * h);
            const Cx fy = (rate(v_eq + Cx{0.0, h}) - rate(v_eq - Cx{0.0, h})) / (2.0 * h);
            // solve 2x2 real system
            Eigen::Matrix2d jac;
            jac << fx.real(), fy.real(), fx.imag(), fy.imag();
            Eigen::Vector2d rhs(-f.real(), -f.imag());
            const Eigen::Vector2d dxy = jac.fullPivLu().solve(rhs);
            if (!dxy.allFinite()) break;
            v_eq += Cx{dxy(0), dxy(1)};
            if (std::abs(v_eq) < 1e-3) break; // collapsed to the origin
        }
        if (!converged || std::abs(v_eq) < 0.05) continue;

        DvocStabilityInputs in;
        in.eta = prm.eta;
        in.alpha = prm.alpha;
        in.phi = prm.phi;
        in.p_star = prm.p_star;
        in.q_star = prm.q_star;
        in.v_star = prm.v_star;
        in.v_lambda_star = prm.v_star;
        in.v_lambda_steady = std::abs(v_eq);
        in.y = y;
        if (!dvoc_stability_condition(in).satisfied) continue;
        ++accepted;

        // perturbed starts must all synchronize
        for (int p = 0; p < 3; ++p) {
            Cx v = v_eq * std::polar(0.6 + 0.7 * u01(rng), -1.5 + 3.0 * u01(rng));
            FormingRefState st;
            st.v_vec = v;
            bool bad = false;
            const double dt = 2e-4;
            for (int k = 0; k < 20000; ++k) {
                const Cx k1 = rate(st.v_vec);
                const Cx k2 = rate(st.v_vec + 0.5 * dt * k1);
                const Cx k3 = rate(st.v_vec + 0.5 * dt * k2);
                const Cx k4 = rate(st.v_vec + dt * k3);
                st.v_vec += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                if (!finite(st.v_vec) || std::abs(st.v_vec) > 1e3 || std::abs(st.v_vec) < 1e-6) {
                    bad = true;
                    break;
                }
            }
            const double freq_residual = std::abs((rate(st.v_vec) / st.v_vec).imag());
            if (bad || freq_residual > 1e-6) ++failures;
        }
    }
    r.tolerance = 0.0;
    r.measured = failures;
    r.pass = accepted == 50 && failures == 0;
    r.detail = std::to_string(accepted) + " condition-satisfying samples, " +
               std::to_string(failures) + " synchronization failures, " +
               std::to_string(attempts) + " draws";
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
}

CheckResult criterion_case2(const CheckContext& ctx) {
    const auto t0 = Clock::now();
    CheckResult r;
    r.id = "acceptance.c10_strategy_comparison";
    nlohmann::json doc;
    {
        std::ifstream in(ctx.scenario_dir + "/case2_crossforming.json");
        if (!in) {
            r.detail = "missing case2_crossforming.json";
            r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
            return r;
        }
        doc = nlohmann::json::parse(in);
    }
    struct Verdict {
        bool settled;
        bool diverged;
        int exit_code;
    };
    auto verdict = [&](const std::string& reg, double p_fault) {
        const Scenario sc = patch_scenario(
            doc, {{"/inverters/0/regulator/kind", reg}, {"/events/1/value", p_fault}});
        const Rows rows = run_rows(sc);
        const auto& s = rows.result.summaries[0];
        const bool diverged = rows.result.exit_code == 3 || s.angle_diverged;
        return Verdict{s.settled && !diverged, diverged, rows.result.exit_code};
    };
    const Verdict cf35 = verdict("explicit", 0.35);
    const Verdict va35 = verdict("virtual_admittance", 0.35);
    const Verdict cf10 = verdict("explicit", 0.10);
    const Verdict va10 = verdict("virtual_admittance", 0.10);
    const Verdict avi10 = verdict("adaptive_vi", 0.10);
    const Verdict icf10 = verdict("current_forming", 0.10);
    r.pass = cf35.settled && va35.diverged && cf10.settled && va10.settled && avi10.settled &&
             icf10.settled;
    r.measured = r.pass ? 0.0 : 1.0;
    r.tolerance = 0.0;
    r.detail = std::string("p*=0.35: cross-forming ") + (cf35.settled ? "settled" : "NOT settled") +
               ", limiter+VA " + (va35.diverged ? "diverged" : "NOT diverged") +
               "; p*=0.10 settled: cf=" + std::to_string(cf10.settled) +
               " va=" + std::to_string(va10.settled) + " avi=" + std::to_string(avi10.settled) +
               " icf=" + std::to_string(icf10.settled);
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
}

CheckResult criterion_case3(const CheckContext& ctx) {
    const auto t0 = Clock::now();
    CheckResult r;
    r.id = "acceptance.c11_asymmetrical_fault_modes";
    r.tolerance = 1e-3;
    nlohmann::json doc;
    {
        std::ifstream in(ctx.scenario_dir + "/case3_llg.json");
        if (!in) {
            r.detail = "missing case3_llg.json";
            r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
            return r;
        }
        doc = nlohmann::json::parse(in);
    }
    double worst_limit = 0.0;
    double vneg_mode1 = 0.0, vneg_mode4 = 0.0;
    double p_ripple_mode2 = 1e300;
    bool ok = true;
    std::string detail;
    for (const std::string mode :
         {"balanced", "p_osc_suppress", "q_osc_suppress", "v_mitigation:6"}) {
        const Scenario sc = patch_scenario(doc, {{"/inverters/0/neg_seq_mode", mode}});
        const Rows rows = run_rows(sc);
        if (rows.result.exit_code != 0) {
            ok = false;
            detail += mode + ": " + rows.result.message + "; ";
            continue;
        }
        const auto steady = window_rows(rows, 3.25, 3.30);
        for (const auto& row : steady)
            worst_limit = std::max(worst_limit, std::abs(row.i_maxphase - 1.1));
        const RecordRow& fin = steady.back();
        if (mode == "balanced") vneg_mode1 = std::abs(fin.v_neg);
        if (mode == "v_mitigation:6") vneg_mode4 = std::abs(fin.v_neg);
        if (mode == "p_osc_suppress") {
            const auto d = power_decompose({fin.v_pos, fin.v_neg}, {fin.i_pos, fin.i_neg});
            p_ripple_mode2 = d.p_ripple();
        }
        detail += mode + " |v-| " + std::to_string(std::abs(fin.v_neg)) + "; ";
    }
    r.measured = worst_limit;
    r.pass = ok && worst_limit <= 1e-3 && vneg_mode4 < vneg_mode1 && p_ripple_mode2 < 1e-3;
    r.detail = detail + "limit dev " + std::to_string(worst_limit) + ", mode-II p-ripple " +
               std::to_string(p_ripple_mode2);
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
}

CheckResult criterion_case4(const CheckContext& ctx) {
    const auto t0 = Clock::now();
    CheckResult r;
    r.id = "acceptance.c12_multi_inverter";
    const Scenario sc = load_scenario(ctx.scenario_dir + "/case4a.json");
    const Rows rows = run_rows(sc);
    double worst_envelope = 0.0;
    bool resync = rows.result.exit_code == 0;
    for (size_t k = 0; k < rows.per_inverter.size(); ++k) {
        for (const auto& row : rows.per_inverter[k])
            if (row.t >= 3.0 && row.t < 3.3)
                worst_envelope = std::max(worst_envelope, row.i_maxphase);
        resync = resync && rows.result.summaries[k].settled &&
                 !rows.result.summaries[k].angle_diverged;
    }
    const double wall = std::chrono::duration<double>(Clock::now() - t0).count();
    r.tolerance = 1.1 + 5e-3;
    r.measured = worst_envelope;
    r.pass = rows.result.exit_code == 0 && worst_envelope <= 1.1 + 5e-3 && resync && wall < 60.0;
    r.detail = "worst fault-on envelope " + std::to_string(worst_envelope) + ", resync " +
               std::to_string(resync) + ", wall " + std::to_string(wall) + " s" +
               (rows.result.exit_code ? ", exit " + std::to_string(rows.result.exit_code) +
                                            " " + rows.result.message
                                      : "");
    r.seconds = wall;
    return r;
}

CheckResult criterion_determinism(const CheckContext& ctx) {
    const auto t0 = Clock::now();
    CheckResult r;
    r.id = "acceptance.c13_determinism";
    Scenario sc = load_scenario(ctx.scenario_dir + "/case1_explicit.json");
    sc.sim.t_end = 4.0;
    auto render = [&]() {
        std::vector<std::vector<RecordRow>> rows;
        run_scenario_collect(sc, &rows);
        std::string csv = csv_header() + "\n";
        for (const auto& row : rows[0]) append_csv_row(csv, row);
        return csv;
    };
    const std::string a = render();
    const std::string b = render();
    r.tolerance = 0.0;
    r.measured = a == b ? 0.0 : 1.0;
    r.pass = a == b;
    r.detail = a == b ? "repeated runs byte-identical (" + std::to_string(a.size()) + " bytes)"
                      : "byte mismatch between repeated runs";
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
}

// ---------------------------------------------------------------------------
// module property checks (cheap standalone versions)
// ---------------------------------------------------------------------------

CheckResult check_equilibrium_hold(const CheckContext& ctx) {
    const auto t0 = Clock::now();
    CheckResult r;
    r.id = "sim.equilibrium_hold";
    r.tolerance = 1e-8;
    Scenario sc = dip_scenario(RegulatorKind::Implicit, 1.0, 0.2, 1.0);
    sc.faults.clear();
    std::vector<std::vector<RecordRow>> rows;
    const RunResult res = run_scenario_collect(sc, &rows);
    double worst = 0.0;
    if (res.exit_code == 0) {
        const RecordRow& first = rows[0].front();
        for (const auto& row : rows[0])
            worst = std::max({worst, std::abs(row.v_pos - first.v_pos),
                              std::abs(row.i_pos - first.i_pos), std::abs(row.phi - first.phi),
                              std::abs(row.omega - first.omega) / omega0_default});
    } else {
        worst = 1e300;
    }
    r.measured = worst;
    r.pass = worst <= r.tolerance;
    r.detail = "fault-free hold over 1 s";
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    (void)ctx;
    return r;
}

CheckResult check_richardson(const CheckContext&) {
    const auto t0 = Clock::now();
    CheckResult r;
    r.id = "sim.richardson_order";
    // smooth unsaturated interval: the equilibrium is kicked by a setpoint
    // step at t = 0.05 s (grid-aligned for every dt) and integrated to 0.2 s
    auto run_with_dt = [&](double dt) {
        Scenario sc = dip_scenario(RegulatorKind::Implicit, 1.0, 0.2, 0.2);
        sc.faults.clear();
        sc.sim.dt = dt;
        sc.sim.decimation = 1;
        SetpointEvent kick;
        kick.t = 0.05;
        kick.field = SetpointEvent::Field::PStar;
        kick.value = 0.9;
        sc.setpoints.push_back(kick);
        Simulation sim(sc);
        while (sim.t() < 0.2 - 0.5 * dt) sim.step();
        return sim.state(0);
    };
    const auto ref = run_with_dt(2.5e-5); // dt/16 reference
    const auto a = run_with_dt(4e-4);
    const auto b = run_with_dt(2e-4);
    auto dist = [](const InverterState& x, const InverterState& y) {
        return std::max({std::abs(x.phi - y.phi), std::abs(x.omega - y.omega) / omega0_default,
                         std::abs(x.i_pos - y.i_pos), std::abs(x.vfb_pos - y.vfb_pos),
                         std::abs(x.mu_f - y.mu_f)});
    };
    const double e1 = dist(a, ref);
    const double e2 = dist(b, ref);
    const double ratio = e1 / std::max(e2, 1e-300);
    r.tolerance = 0.0;
    r.measured = ratio;
    // fourth-order error halves sixteen-fold per dt halving; accept a band
    // around it (the dt/8 reference leaves a small bias)
    r.pass = ratio > 10.0 && ratio < 28.0 && e1 > 1e-14;
    {
        char buf[160];
        std::snprintf(buf, sizeof buf, "error(dt)/error(dt/2) = %.3f (e1 %.3e, e2 %.3e)", ratio,
                      e1, e2);
        r.detail = buf;
    }
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
}

CheckResult check_power_balance(const CheckContext& ctx) {
    const auto t0 = Clock::now();
    CheckResult r;
    r.id = "sim.power_balance";
    r.tolerance = 1e-9;
    Scenario sc = load_scenario(ctx.scenario_dir + "/case1_explicit.json");
    sc.sim.t_end = 3.4; // spans pre-fault, fault-on, and post-fault states
    Simulation sim(sc);
    double worst = 0.0;
    const long steps = std::lround(sc.sim.t_end / sc.sim.dt);
    for (long k = 0; k < steps; ++k) {
        sim.step();
        if (k % 100 == 0) worst = std::max(worst, std::abs(sim.power_balance_residual()));
    }
    r.measured = worst;
    r.pass = worst <= r.tolerance;
    r.detail = "generation = consumption + losses at sampled steps";
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
}

CheckResult check_scenario_roundtrip(const CheckContext& ctx) {
    const auto t0 = Clock::now();
    CheckResult r;
    r.id = "scenario.roundtrip";
    r.tolerance = 0.0;
    bool pass = true;
    std::string detail;
    for (const char* file : {"case1_explicit.json", "case2_crossforming.json", "case3_llg.json",
                             "case4a.json", "case4b_9bus.json"}) {
        const Scenario sc = load_scenario(ctx.scenario_dir + "/" + file);
        const nlohmann::json echo = scenario_to_json(sc);
        const Scenario re = parse_scenario(echo);
        if (scenario_to_json(re) != echo) {
            pass = false;
            detail += std::string(file) + " round-trip mismatch; ";
        }
    }
    r.pass = pass;
    r.measured = pass ? 0.0 : 1.0;
    r.detail = detail.empty() ? "load -> echo -> reload identical" : detail;
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
}

CheckResult check_golden(const CheckContext& ctx) {
    const auto t0 = Clock::now();
    CheckResult r;
    r.id = "scenario.golden_regression";
    r.tolerance = 1e-12;
    Scenario sc = load_scenario(ctx.scenario_dir + "/case1_explicit.json");
    sc.sim.t_end = 0.4;
    sc.sim.decimation = 50;
    std::vector<std::vector<RecordRow>> rows;
    run_scenario_collect(sc, &rows);
    std::ifstream golden(ctx.scenario_dir + "/golden/case1_short_inv1.csv");
    if (!golden) {
        r.pass = false;
        r.detail = "missing golden file scenarios/golden/case1_short_inv1.csv";
        r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
        return r;
    }
    std::string header;
    std::getline(golden, header);
    double worst = header == csv_header() ? 0.0 : 1e300;
    size_t n = 0;
    std::string line;
    while (std::getline(golden, line) && n < rows[0].size()) {
        std::string current;
        append_csv_row(current, rows[0][n]);
        if (!current.empty() && current.back() == '\n') current.pop_back();
        // numeric comparison, field by field
        std::stringstream sa(line), sb(current);
        std::string fa, fb;
        while (std::getline(sa, fa, ',') && std::getline(sb, fb, ',')) {
            const double da = std::stod(fa), db = std::stod(fb);
            worst = std::max(worst, std::abs(da - db));
        }
        ++n;
    }
    r.measured = worst;
    r.pass = worst <= r.tolerance && n == rows[0].size();
    r.detail = "golden rows compared: " + std::to_string(n);
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
}

CheckResult check_crossforming_identities(const CheckContext&) {
    const auto t0 = Clock::now();
    CheckResult r;
    r.id = "crossforming.identities";
    // implicit regulator at kappa = mu = 1 bit-equals the virtual admittance
    ImplicitRegState reg;
    reg.kappa = 1.0;
    reg.mu_filtered = 1.0;
    const VirtualImpedance zv{0.05, 0.2};
    const Cx v_ref{1.0, 0.0};
    const Cx v_pos{0.9, -0.05};
    reg.v_fb_filtered = v_pos;
    const bool identity = implicit_reference(reg, v_ref, zv) == virtual_admittance(v_ref, v_pos, zv);

    // angle preservation and constant impedance at a saturated fixed point
    const Cx v_g{0.4, 0.0};
    const Cx z_g{0.01, 0.12};
    ExplicitRegState ex;
    ex.kappa_i = 50.0;
    Cx i{0.0, 0.0};
    SequencePhasor prev{Cx{0.0, 0.0}, Cx{0.0, 0.0}};
    const double angle = 0.25;
    for (int k = 0; k < 50000; ++k) {
        const Cx v_term = v_g + z_g * i;
        const Cx i_ref = explicit_step(ex, angle, v_term, prev, 1.1, zv, 1e-4);
        prev = {i_ref, Cx{0.0, 0.0}};
        i += 1e-4 / 1e-3 * (circular_limit(i_ref, 1.1) - i);
    }
    const Cx v_term = v_g + z_g * i;
    const Cx v_lambda = v_term + zv.z() * i;
    const double angle_dev = std::abs(wrap_angle(std::arg(v_lambda) - angle));
    const double z_dev = std::abs((std::polar(ex.v_lambda_mag, angle) - v_term) / i - zv.z());

    r.tolerance = 1e-9;
    r.measured = std::max(angle_dev, z_dev);
    r.pass = identity && r.measured <= r.tolerance;
    r.detail = "bit-identity " + std::to_string(identity) + ", angle dev " +
               std::to_string(angle_dev) + ", constant-z dev " + std::to_string(z_dev);
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
}

CheckResult check_kappa_independence(const CheckContext&) {
    const auto t0 = Clock::now();
    CheckResult r;
    r.id = "crossforming.kappa_independence";
    r.tolerance = 1e-6;
    const Cx v_g{0.5, 0.0};
    const Cx z_g{0.0, 0.1};
    const VirtualImpedance zv{0.0, 0.2};
    auto settle = [&](double kappa) {
        ImplicitRegState reg;
        reg.kappa = kappa;
        reg.v_fb_filtered = v_g;
        Cx i{0.0, 0.0};
        SequencePhasor prev{Cx{0.0, 0.0}, Cx{0.0, 0.0}};
        for (int k = 0; k < 80000; ++k) {
            const Cx v_term = v_g + z_g * i;
            const Cx i_ref = implicit_step(reg, Cx{1.0, 0.0}, v_term, prev, 1.1, zv, 1e-4);
            prev = {i_ref, Cx{0.0, 0.0}};
            i += 1e-4 / 1e-3 * (circular_limit(i_ref, 1.1) - i);
        }
        return std::make_pair(v_g + z_g * i, i);
    };
    const auto [v1, i1] = settle(1.0);
    const auto [v2, i2] = settle(1.2);
    const auto [v3, i3] = settle(2.0);
    r.measured = std::max({std::abs(v1 - v2), std::abs(v1 - v3), std::abs(i1 - i2),
                           std::abs(i1 - i3)});
    r.pass = r.measured <= r.tolerance;
    r.detail = "saturated (v, i) across kappa in {1, 1.2, 2}";
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
}

CheckResult check_network_oracle(const CheckContext& ctx) {
    const auto t0 = Clock::now();
    CheckResult r;
    r.id = "network.sequence_oracle";
    r.tolerance = 1e-10;
    // three-phase abc nodal oracle, assembled independently of the solver
    const TheveninGrid g;
    SequenceNetworkSolver solver(g);
    std::mt19937_64 rng{ctx.seed + 77};
    const Cx a_op{-0.5, 0.8660254037844386};
    const Cx a2_op = a_op * a_op;
    double worst = 0.0;
    auto abc_solve = [&](Cx ip, Cx in_env, const FaultEvent& f) {
        const Cx in = std::conj(in_env); // envelope -> conventional phasor
        const bool llg = f.kind == FaultEvent::Kind::DoubleLineGround;
        const int n = 7;
        Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
        Eigen::VectorXcd inj = Eigen::VectorXcd::Zero(n);
        const Cx y1 = 1.0 / g.z_g1, y2 = 1.0 / g.z_g2;
        const Cx src[3] = {g.v_g, a2_op * g.v_g, a_op * g.v_g};
        const Cx iph[3] = {ip + in, a2_op * ip + a_op * in, a_op * ip + a2_op * in};
        for (int ph = 0; ph < 3; ++ph) {
            const int t = ph;
            const int fnode = llg && ph > 0 ? 6 : 3 + ph;
            y(t, t) += y1;
            y(fnode, fnode) += y1;
            y(t, fnode) -= y1;
            y(fnode, t) -= y1;
            y(fnode, fnode) += y2;
            inj(fnode) += src[ph] * y2;
            inj(t) += iph[ph];
        }
        if (f.kind == FaultEvent::Kind::SingleLineGround) y(3, 3) += 1.0 / Cx{f.r_f, 0.0};
        if (llg) {
            y(6, 6) += 1.0 / Cx{f.r_f, 0.0};
            y(4, 4) += 1.0;
            y(5, 5) += 1.0;
        } else {
            y(6, 6) = 1.0;
        }
        const Eigen::VectorXcd v = y.fullPivLu().solve(inj);
        return SequencePhasor{(v(0) + a_op * v(1) + a2_op * v(2)) / 3.0,
                              std::conj((v(0) + a2_op * v(1) + a_op * v(2)) / 3.0)};
    };
    for (int k = 0; k < 40; ++k) {
        const Cx ip = random_cx(rng, 0.0, 1.5);
        const Cx in = random_cx(rng, 0.0, 0.5);
        for (auto kind : {FaultEvent::Kind::SingleLineGround, FaultEvent::Kind::DoubleLineGround}) {
            FaultEvent f;
            f.kind = kind;
            f.r_f = 0.004;
            f.t_on = 0.0;
            f.t_clear = 1.0;
            const auto seq = solver.solve({ip, in}, &f);
            const auto abc = abc_solve(ip, in, f);
            worst = std::max({worst, std::abs(seq.pos - abc.pos), std::abs(seq.neg - abc.neg)});
        }
    }
    r.measured = worst;
    r.pass = worst <= r.tolerance;
    r.detail = "sequence solver vs abc nodal oracle (slg, llg)";
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
}

CheckResult check_clearing_monotonicity(const CheckContext&) {
    const auto t0 = Clock::now();
    CheckResult r;
    r.id = "stability.clearing_monotonicity";
    const double p_star = 0.5;
    const double x_v = 0.8;
    const double x_tot = x_v + 0.13;
    const PowerAngleCurve pre{1.0 / x_tot, 0.0};
    const PowerAngleCurve fault{0.1 / x_tot, 0.0};
    const auto dc = critical_clearing_angle(pre, fault, pre, p_star);
    const double delta_uep = equilibria(pre, p_star)->delta_uep;
    auto stable_with_clear = [&](double t_clear) {
        Scenario sc = dip_scenario(RegulatorKind::Explicit, 0.1, p_star, t_clear + 3.0);
        sc.sim.quasi_static_regulator = true;
        sc.inverters[0].vsm.d = 0.0;
        sc.inverters[0].vsm.m_q = 0.0;
        sc.inverters[0].z_v = {0.0, x_v};
        sc.faults[0].t_clear = 1.0 + t_clear;
        std::vector<std::vector<RecordRow>> rows;
        if (run_scenario_collect(sc, &rows).exit_code != 0) return false;
        for (const auto& row : rows[0])
            if (row.t > 1.0 + t_clear && row.phi > delta_uep) return false;
        return true;
    };
    // verdicts over a clearing-time grid must flip exactly once, at the
    // analytic critical clearing time
    const SwingParams swing = swing_from_vsm(5.0, 0.0, p_star, omega0_default);
    const double t_crit =
        dc ? fault_on_travel_time(swing, fault, equilibria(pre, p_star)->delta_sep, *dc) : 1e300;
    bool monotone = true;
    bool prev = true;
    int flips = 0;
    for (double tc = 0.05; tc <= 0.6; tc += 0.05) {
        const bool stable = stable_with_clear(tc);
        if (stable != prev) {
            ++flips;
            monotone = monotone && !stable; // only stable -> unstable allowed
            const bool bracket_ok = t_crit > tc - 0.05 && t_crit < tc + 1e-9;
            monotone = monotone && bracket_ok;
        }
        prev = stable;
    }
    r.tolerance = 0.0;
    r.measured = flips;
    r.pass = monotone && flips == 1;
    r.detail = "verdict flips " + std::to_string(flips) + " time(s); analytic t_crit " +
               std::to_string(t_crit) + " s";
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
}

} // namespace

const std::vector<Check>& all_checks() {
    static const std::vector<Check> checks = {
        {"phasor.phase_magnitude_oracle",
         [](const CheckContext& c) {
             const auto t0 = Clock::now();
             return make_result("phasor.phase_magnitude_oracle", phase_magnitude_oracle_body(c.seed),
                                1e-6, t0);
         }},
        {"phasor.power_identity",
         [](const CheckContext& c) {
             const auto t0 = Clock::now();
             return make_result("phasor.power_identity", power_identity_body(c.seed), 1e-9, t0);
         }},
        {"limiting.invariants",
         [](const CheckContext& c) {
             const auto t0 = Clock::now();
             return make_result("limiting.invariants", limiter_invariants_body(c.seed), 1.0, t0);
         }},
        {"negseq.iff_exclusivity",
         [](const CheckContext& c) {
             const auto t0 = Clock::now();
             return make_result("negseq.iff_exclusivity", negseq_iff_body(c.seed), 1e-12, t0);
         }},
        {"forming.polar_rect_equivalence",
         [](const CheckContext&) {
             const auto t0 = Clock::now();
             return make_result("forming.polar_rect_equivalence", polar_rect_equiv_body(), 1e-9,
                                t0);
         }},
        {"forming.enhanced_normal_form",
         [](const CheckContext&) {
             const auto t0 = Clock::now();
             return make_result("forming.enhanced_normal_form", enhanced_dvoc_equiv_body(), 1e-8,
                                t0);
         }},
        {"stability.energy_dissipation",
         [](const CheckContext&) {
             const auto t0 = Clock::now();
             return make_result("stability.energy_dissipation", energy_dissipation_body(), 1e-6,
                                t0);
         }},
        {"stability.power_angle_sweep",
         [](const CheckContext&) {
             const auto t0 = Clock::now();
             return make_result("stability.power_angle_sweep", power_angle_sweep_body(), 1e-9, t0);
         }},
        {"stability.clearing_monotonicity", check_clearing_monotonicity},
        {"crossforming.identities", check_crossforming_identities},
        {"crossforming.kappa_independence", check_kappa_independence},
        {"network.sequence_oracle", check_network_oracle},
        {"sim.equilibrium_hold", check_equilibrium_hold},
        {"sim.richardson_order", check_richardson},
        {"sim.power_balance", check_power_balance},
        {"scenario.roundtrip", check_scenario_roundtrip},
        {"scenario.golden_regression", check_golden},
        {"acceptance.c01_current_limiting", criterion_case1},
        {"acceptance.c02_regulator_agreement", criterion_regulator_agreement},
        {"acceptance.c03_sinusoidal_power_angle", criterion_power_angle},
        {"acceptance.c04_constant_vs_current_dependent_impedance", criterion_equivalent_impedance},
        {"acceptance.c05_negative_sequence_iff", criterion_negseq},
        {"acceptance.c06_limiter_invariants", criterion_limiters},
        {"acceptance.c07_normal_form_equivalences", criterion_normal_forms},
        {"acceptance.c08_energy_and_equal_area", criterion_energy_equal_area},
        {"acceptance.c09_dvoc_sufficient_condition", criterion_dvoc_condition},
        {"acceptance.c10_strategy_comparison", criterion_case2},
        {"acceptance.c11_asymmetrical_fault_modes", criterion_case3},
        {"acceptance.c12_multi_inverter", criterion_case4},
        {"acceptance.c13_determinism", criterion_determinism},
    };
    return checks;
}

std::vector<CheckResult> run_checks(const CheckContext& ctx, const std::string& filter) {
    std::vector<CheckResult> results;
    for (const auto& check : all_checks()) {
        if (!filter.empty() && check.id.rfind(filter, 0) != 0) continue;
        try {
            results.push_back(check.run(ctx));
        } catch (const std::exception& e) {
            CheckResult r;
            r.id = check.id;
            r.pass = false;
            r.detail = std::string("exception: ") + e.what();
            results.push_back(r);
        }
    }
    return results;
}

} // namespace gfm
