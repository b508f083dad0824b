#include "gfm/scenario.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "gfm/errors.hpp"

namespace gfm {

namespace {

using nlohmann::json;

void require_keys(const json& obj, const std::string& path, std::set<std::string> allowed) {
    if (!obj.is_object()) throw ConfigError(path + ": expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key()))
            throw ConfigError("unknown key \"" + path + "/" + it.key() + "\"");
    }
}

double num(const json& obj, const std::string& key, double fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number()) throw ConfigError("key \"" + key + "\" must be a number");
    return obj[key].get<double>();
}

bool flag(const json& obj, const std::string& key, bool fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_boolean()) throw ConfigError("key \"" + key + "\" must be a boolean");
    return obj[key].get<bool>();
}

Cx cx(const json& obj, const std::string& key, Cx fallback) {
    if (!obj.contains(key)) return fallback;
    const auto& v = obj[key];
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
        throw ConfigError("key \"" + key + "\" must be [re, im]");
    return {v[0].get<double>(), v[1].get<double>()};
}

json cx_to_json(Cx z) { return json::array({z.real(), z.imag()}); }

NegSeqMode parse_neg_seq(const std::string& text) {
    if (text == "balanced") return NegSeqMode::balanced();
    if (text == "p_osc_suppress") return NegSeqMode::p_osc_suppress();
    if (text == "q_osc_suppress") return NegSeqMode::q_osc_suppress();
    if (text.rfind("flexible:", 0) == 0) {
        const double chi = std::stod(text.substr(9));
        if (chi < -1.0 || chi > 1.0)
            throw ConfigError("neg_seq_mode: chi must be in [-1, 1], got " + text);
        return NegSeqMode::flexible(chi);
    }
    if (text.rfind("v_mitigation:", 0) == 0) {
        const double k = std::stod(text.substr(13));
        if (k < 0.0) throw ConfigError("neg_seq_mode: K-factor must be >= 0, got " + text);
        return NegSeqMode::voltage_mitigation(k);
    }
    throw ConfigError("neg_seq_mode: unknown mode \"" + text + "\"");
}

std::string neg_seq_to_string(const NegSeqMode& m) {
    switch (m.kind) {
    case NegSeqMode::Kind::Balanced: return "balanced";
    case NegSeqMode::Kind::Flexible:
        if (m.chi == -1.0) return "p_osc_suppress";
        if (m.chi == 1.0) return "q_osc_suppress";
        {
            char buf[48];
            std::snprintf(buf, sizeof buf, "flexible:%.17g", m.chi);
            return buf;
        }
    case NegSeqMode::Kind::VoltageMitigation: {
        char buf[48];
        std::snprintf(buf, sizeof buf, "v_mitigation:%.17g", m.k_minus);
        return buf;
    }
    }
    return "balanced";
}

InverterConfig parse_inverter(const json& j, const std::string& path) {
    require_keys(j, path,
                 {"name", "rating", "forming", "regulator", "limiter", "neg_seq_mode",
                  "neg_seq_v_filter", "neg_seq_tau", "v_dc"});
    InverterConfig cfg;
    if (j.contains("name")) cfg.name = j["name"].get<std::string>();
    cfg.rating = num(j, "rating", 1.0);
    if (!(cfg.rating > 0.0)) throw ConfigError(path + ": rating must be positive");

    const json& fm = j.at("forming");
    require_keys(fm, path + "/forming",
                 {"kind", "m_p", "m_q", "m_dc", "t_j", "d", "eta", "alpha", "phi", "p_star",
                  "q_star", "v_star", "v_dc_star", "omega0"});
    const std::string fk = fm.at("kind").get<std::string>();
    const double p_star = num(fm, "p_star", 0.0);
    const double q_star = num(fm, "q_star", 0.0);
    const double v_star = num(fm, "v_star", 1.0);
    const double omega0 = num(fm, "omega0", omega0_default);
    if (!(v_star > 0.0)) throw ConfigError(path + ": v_star must be positive");
    if (fk == "droop") {
        cfg.forming = FormingKind::Droop;
        cfg.droop = DroopParams{num(fm, "m_p", 0.02), num(fm, "m_q", 0.2),
                                p_star, q_star, v_star, omega0};
        if (cfg.droop.m_p < 0.0 || cfg.droop.m_q < 0.0)
            throw ConfigError(path + ": droop gains must be >= 0");
    } else if (fk == "vsm") {
        cfg.forming = FormingKind::Vsm;
        cfg.vsm = VsmParams{num(fm, "t_j", 5.0), num(fm, "d", 25.0), num(fm, "m_q", 0.2),
                            p_star, q_star, v_star, omega0};
        if (!(cfg.vsm.t_j > 0.0)) throw ConfigError(path + ": t_j must be positive");
        if (cfg.vsm.d < 0.0) throw ConfigError(path + ": d must be >= 0");
    } else if (fk == "complex_droop" || fk == "dvoc") {
        cfg.forming = fk == "dvoc" ? FormingKind::Dvoc : FormingKind::ComplexDroop;
        cfg.dvoc = DvocParams{num(fm, "eta", 6.2832), num(fm, "alpha", 0.8),
                              num(fm, "phi", pi / 2), p_star, q_star, v_star, omega0};
        if (cfg.dvoc.eta < 0.0 || cfg.dvoc.alpha < 0.0)
            throw ConfigError(path + ": eta and alpha must be >= 0");
    } else if (fk == "dual_port") {
        cfg.forming = FormingKind::DualPort;
        cfg.dual_port = DualPortParams{num(fm, "m_p", 0.02), num(fm, "m_q", 0.2),
                                       num(fm, "m_dc", 1.0), num(fm, "v_dc_star", 1.0),
                                       p_star, q_star, v_star, omega0};
        if (cfg.dual_port.m_dc < 0.0) throw ConfigError(path + ": m_dc must be >= 0");
    } else {
        throw ConfigError(path + ": unknown forming kind \"" + fk + "\"");
    }
    // keep setpoints mirrored across laws so events stay uniform
    cfg.set_p_star(p_star);
    cfg.set_q_star(q_star);
    cfg.droop.v_star = cfg.vsm.v_star = cfg.dvoc.v_star = cfg.dual_port.v_star = v_star;
    cfg.droop.omega0 = cfg.vsm.omega0 = cfg.dvoc.omega0 = cfg.dual_port.omega0 = omega0;

    const json& rg = j.at("regulator");
    require_keys(rg, path + "/regulator",
                 {"kind", "z_v", "kappa", "kappa_i", "tau_mu", "tau_v", "reseed_integrator",
                  "freeze_droop_in_cf", "hard_limiter", "adaptive_vi", "current_forming",
                  "mode_switch"});
    const std::string rk = rg.at("kind").get<std::string>();
    if (rk == "explicit") cfg.regulator = RegulatorKind::Explicit;
    else if (rk == "implicit") cfg.regulator = RegulatorKind::Implicit;
    else if (rk == "virtual_admittance") cfg.regulator = RegulatorKind::VirtualAdmittance;
    else if (rk == "adaptive_vi") cfg.regulator = RegulatorKind::AdaptiveVi;
    else if (rk == "current_forming") cfg.regulator = RegulatorKind::CurrentForming;
    else throw ConfigError(path + ": unknown regulator kind \"" + rk + "\"");

    const Cx zv = cx(rg, "z_v", Cx{0.0, 0.2});
    cfg.z_v = {zv.real(), zv.imag()};
    if (!(std::abs(zv) > 0.0)) throw ConfigError(path + ": |z_v| must be positive");
    cfg.kappa = num(rg, "kappa", 1.0);
    cfg.kappa_i = num(rg, "kappa_i", 50.0);
    cfg.tau_mu = num(rg, "tau_mu", 0.01);
    cfg.tau_v = num(rg, "tau_v", 0.01);
    if (!(cfg.kappa > 0.0)) throw ConfigError(path + ": kappa must be positive");
    if (!(cfg.tau_mu > 0.0 && cfg.tau_v > 0.0))
        throw ConfigError(path + ": filter time constants must be positive");
    cfg.reseed_integrator = flag(rg, "reseed_integrator", true);
    cfg.freeze_droop_in_cf = flag(rg, "freeze_droop_in_cf", true);
    cfg.hard_limiter = flag(rg, "hard_limiter", true);

    if (rg.contains("adaptive_vi")) {
        const json& av = rg["adaptive_vi"];
        require_keys(av, path + "/regulator/adaptive_vi",
                     {"i_th", "kappa_vi", "sigma_vi", "tau_i", "tau_track"});
        cfg.adaptive_vi = {num(av, "i_th", 1.0), num(av, "kappa_vi", 0.91),
                           num(av, "sigma_vi", 10.0)};
        cfg.adaptive_vi_tau_i = num(av, "tau_i", 1e-3);
        cfg.adaptive_vi_tau_track = num(av, "tau_track", 2e-3);
    }
    if (rg.contains("current_forming")) {
        const json& cf = rg["current_forming"];
        require_keys(cf, path + "/regulator/current_forming", {"m_p", "psi"});
        cfg.current_forming.m_p = num(cf, "m_p", 0.02);
        cfg.current_forming.psi = num(cf, "psi", pi / 2);
    }
    if (rg.contains("mode_switch")) {
        const json& ms = rg["mode_switch"];
        require_keys(ms, path + "/regulator/mode_switch",
                     {"t_enter", "v_recover", "t_exit", "t_lock"});
        cfg.mode_switch = {num(ms, "t_enter", 1e-3), num(ms, "v_recover", 0.9),
                           num(ms, "t_exit", 10e-3), num(ms, "t_lock", 100e-3)};
    }

    if (j.contains("limiter")) {
        const json& lm = j["limiter"];
        require_keys(lm, path + "/limiter", {"i_lim", "frame"});
        cfg.limiter.i_lim = num(lm, "i_lim", 1.1);
        if (!(cfg.limiter.i_lim > 0.0)) throw ConfigError(path + ": i_lim must be positive");
        if (lm.contains("frame")) {
            const std::string fr = lm["frame"].get<std::string>();
            if (fr == "stationary") cfg.limiter.frame = LimiterConfig::Frame::Stationary;
            else if (fr == "rotational") cfg.limiter.frame = LimiterConfig::Frame::Rotational;
            else throw ConfigError(path + ": unknown limiter frame \"" + fr + "\"");
        }
    }
    cfg.current_forming.i_lim = cfg.limiter.i_lim;

    if (j.contains("neg_seq_mode")) cfg.neg_seq = parse_neg_seq(j["neg_seq_mode"].get<std::string>());
    cfg.neg_seq_v_filter = flag(j, "neg_seq_v_filter", false);
    cfg.neg_seq_tau = num(j, "neg_seq_tau", 0.01);
    cfg.v_dc = num(j, "v_dc", 1.0);
    return cfg;
}

json inverter_to_json(const InverterConfig& c) {
    json fm;
    switch (c.forming) {
    case FormingKind::Droop:
        fm = {{"kind", "droop"}, {"m_p", c.droop.m_p}, {"m_q", c.droop.m_q}};
        break;
    case FormingKind::Vsm:
        fm = {{"kind", "vsm"}, {"t_j", c.vsm.t_j}, {"d", c.vsm.d}, {"m_q", c.vsm.m_q}};
        break;
    case FormingKind::ComplexDroop:
        fm = {{"kind", "complex_droop"}, {"eta", c.dvoc.eta}, {"alpha", c.dvoc.alpha},
              {"phi", c.dvoc.phi}};
        break;
    case FormingKind::Dvoc:
        fm = {{"kind", "dvoc"}, {"eta", c.dvoc.eta}, {"alpha", c.dvoc.alpha}, {"phi", c.dvoc.phi}};
        break;
    case FormingKind::DualPort:
        fm = {{"kind", "dual_port"}, {"m_p", c.dual_port.m_p}, {"m_q", c.dual_port.m_q},
              {"m_dc", c.dual_port.m_dc}, {"v_dc_star", c.dual_port.v_dc_star}};
        break;
    }
    fm["p_star"] = c.p_star();
    fm["q_star"] = c.q_star();
    fm["v_star"] = c.v_star();
    fm["omega0"] = c.omega0();

    json rg;
    switch (c.regulator) {
    case RegulatorKind::Explicit: rg["kind"] = "explicit"; break;
    case RegulatorKind::Implicit: rg["kind"] = "implicit"; break;
    case RegulatorKind::VirtualAdmittance: rg["kind"] = "virtual_admittance"; break;
    case RegulatorKind::AdaptiveVi: rg["kind"] = "adaptive_vi"; break;
    case RegulatorKind::CurrentForming: rg["kind"] = "current_forming"; break;
    }
    rg["z_v"] = cx_to_json(c.z_v.z());
    rg["kappa"] = c.kappa;
    rg["kappa_i"] = c.kappa_i;
    rg["tau_mu"] = c.tau_mu;
    rg["tau_v"] = c.tau_v;
    rg["reseed_integrator"] = c.reseed_integrator;
    rg["freeze_droop_in_cf"] = c.freeze_droop_in_cf;
    rg["hard_limiter"] = c.hard_limiter;
    rg["adaptive_vi"] = {{"i_th", c.adaptive_vi.i_th},
                         {"kappa_vi", c.adaptive_vi.kappa_vi},
                         {"sigma_vi", c.adaptive_vi.sigma_vi},
                         {"tau_i", c.adaptive_vi_tau_i},
                         {"tau_track", c.adaptive_vi_tau_track}};
    rg["current_forming"] = {{"m_p", c.current_forming.m_p}, {"psi", c.current_forming.psi}};
    rg["mode_switch"] = {{"t_enter", c.mode_switch.t_enter},
                         {"v_recover", c.mode_switch.v_recover},
                         {"t_exit", c.mode_switch.t_exit},
                         {"t_lock", c.mode_switch.t_lock}};

    json out;
    out["name"] = c.name;
    out["rating"] = c.rating;
    out["forming"] = fm;
    out["regulator"] = rg;
    out["limiter"] = {{"i_lim", c.limiter.i_lim},
                      {"frame", c.limiter.frame == LimiterConfig::Frame::Stationary
                                    ? "stationary"
                                    : "rotational"}};
    out["neg_seq_mode"] = neg_seq_to_string(c.neg_seq);
    out["neg_seq_v_filter"] = c.neg_seq_v_filter;
    out["neg_seq_tau"] = c.neg_seq_tau;
    out["v_dc"] = c.v_dc;
    return out;
}

int inverter_index(const Scenario& sc, const json& ref, const std::string& path) {
    if (ref.is_number_integer()) {
        const int idx = ref.get<int>();
        if (idx < -1 || idx >= static_cast<int>(sc.inverters.size()))
            throw ConfigError(path + ": inverter index out of range");
        return idx;
    }
    const std::string name = ref.get<std::string>();
    for (size_t k = 0; k < sc.inverters.size(); ++k)
        if (sc.inverters[k].name == name) return static_cast<int>(k);
    throw ConfigError(path + ": unknown inverter \"" + name + "\"");
}

} // namespace

Scenario parse_scenario(const json& doc) {
    require_keys(doc, "", {"name", "notes", "sim", "network", "inverters", "events"});
    Scenario sc;
    if (doc.contains("name")) sc.name = doc["name"].get<std::string>();
    if (doc.contains("notes")) sc.notes = doc["notes"].get<std::string>();

    if (doc.contains("sim")) {
        const json& s = doc["sim"];
        require_keys(s, "sim",
                     {"dt", "t_end", "tau_c", "decimation", "quasi_static_regulator",
                      "divergence_limit"});
        sc.sim.dt = num(s, "dt", 1e-4);
        sc.sim.t_end = num(s, "t_end", 10.0);
        sc.sim.tau_c = num(s, "tau_c", 1e-3);
        sc.sim.decimation = static_cast<int>(num(s, "decimation", 10));
        sc.sim.quasi_static_regulator = flag(s, "quasi_static_regulator", false);
        sc.sim.divergence_limit = num(s, "divergence_limit", 1e3);
    }
    if (!(sc.sim.dt > 0.0)) throw ConfigError("sim: dt must be positive");
    if (!(sc.sim.t_end > 0.0)) throw ConfigError("sim: t_end must be positive");
    if (sc.sim.decimation < 1) throw ConfigError("sim: decimation must be >= 1");
    if (!(sc.sim.tau_c > 0.0) && !sc.sim.quasi_static_regulator)
        throw ConfigError("sim: tau_c must be positive");

    const json& net = doc.at("network");
    require_keys(net, "network",
                 {"kind", "z_g1", "z_g2", "v_g", "z_base_ohm", "n_bus", "branches", "shunts",
                  "source", "inverter_bus", "fault_bus"});
    const std::string nk = net.contains("kind") ? net["kind"].get<std::string>() : "thevenin";
    sc.network.z_base_ohm = num(net, "z_base_ohm", 264.5);
    if (nk == "thevenin") {
        sc.network.kind = NetworkConfig::Kind::Thevenin;
        sc.network.thevenin.z_g1 = cx(net, "z_g1", Cx{0.01, 0.1});
        sc.network.thevenin.z_g2 = cx(net, "z_g2", Cx{0.003, 0.03});
        sc.network.thevenin.v_g = cx(net, "v_g", Cx{1.0, 0.0});
        if (!(std::abs(sc.network.thevenin.z_g1 + sc.network.thevenin.z_g2) > 0.0))
            throw ConfigError("network: |z_g1 + z_g2| must be positive");
    } else if (nk == "multibus") {
        sc.network.kind = NetworkConfig::Kind::MultiBus;
        auto& mb = sc.network.multibus;
        mb.n_bus = static_cast<int>(num(net, "n_bus", 0.0));
        if (mb.n_bus < 1) throw ConfigError("network: n_bus must be >= 1");
        for (const auto& b : net.value("branches", json::array())) {
            require_keys(b, "network/branches[]", {"from", "to", "z"});
            mb.branches.push_back({b.at("from").get<int>(), b.at("to").get<int>(),
                                   cx(b, "z", Cx{0.0, 0.1})});
        }
        for (const auto& s : net.value("shunts", json::array())) {
            require_keys(s, "network/shunts[]", {"bus", "y"});
            mb.shunts.push_back({s.at("bus").get<int>(), cx(s, "y", Cx{0.0, 0.0})});
        }
        if (net.contains("source")) {
            const json& s = net["source"];
            require_keys(s, "network/source", {"bus", "v", "z"});
            mb.source = MultiBusNetwork::GridSource{s.at("bus").get<int>(),
                                                    cx(s, "v", Cx{1.0, 0.0}),
                                                    cx(s, "z", Cx{0.01, 0.1})};
        }
        for (const auto& b : net.value("inverter_bus", json::array()))
            sc.network.inverter_bus.push_back(b.get<int>());
        sc.network.fault_bus = static_cast<int>(num(net, "fault_bus", -1.0));
    } else {
        throw ConfigError("network: unknown kind \"" + nk + "\"");
    }

    if (!doc.contains("inverters") || !doc["inverters"].is_array() || doc["inverters"].empty())
        throw ConfigError("inverters: at least one inverter is required");
    {
        int idx = 0;
        for (const auto& j : doc["inverters"]) {
            sc.inverters.push_back(parse_inverter(j, "inverters[" + std::to_string(idx) + "]"));
            ++idx;
        }
    }
    std::set<std::string> names;
    for (const auto& inv : sc.inverters)
        if (!names.insert(inv.name).second)
            throw ConfigError("inverters: duplicate name \"" + inv.name + "\"");

    if (sc.network.kind == NetworkConfig::Kind::Thevenin) {
        if (sc.inverters.size() != 1)
            throw ConfigError("thevenin networks support exactly one inverter");
    } else {
        if (sc.network.inverter_bus.size() != sc.inverters.size())
            throw ConfigError("network: inverter_bus must list one bus per inverter");
        for (int b : sc.network.inverter_bus)
            if (b < 0 || b >= sc.network.multibus.n_bus)
                throw ConfigError("network: inverter bus out of range");
        if (sc.network.fault_bus >= sc.network.multibus.n_bus)
            throw ConfigError("network: fault bus out of range");
        for (const auto& inv : sc.inverters)
            if (inv.regulator == RegulatorKind::AdaptiveVi ||
                inv.regulator == RegulatorKind::CurrentForming)
                throw ConfigError("multibus networks support the explicit/implicit/"
                                  "virtual_admittance regulators only");
    }

    // events
    for (const auto& ev : doc.value("events", json::array())) {
        require_keys(ev, "events[]", {"t", "kind", "fault", "inverter", "value"});
        const double t = num(ev, "t", 0.0);
        const std::string kind = ev.at("kind").get<std::string>();
        if (kind == "fault") {
            const json& fj = ev.at("fault");
            require_keys(fj, "events[]/fault",
                         {"kind", "r_f_ohm", "r_f_pu", "t_clear", "dip_to", "phase_jump"});
            FaultEvent f;
            const std::string fk = fj.at("kind").get<std::string>();
            if (fk == "three_phase") f.kind = FaultEvent::Kind::ThreePhase;
            else if (fk == "slg") f.kind = FaultEvent::Kind::SingleLineGround;
            else if (fk == "llg") f.kind = FaultEvent::Kind::DoubleLineGround;
            else if (fk == "voltage_dip") f.kind = FaultEvent::Kind::VoltageDip;
            else throw ConfigError("events: unknown fault kind \"" + fk + "\"");
            f.t_on = t;
            f.t_clear = num(fj, "t_clear", sc.sim.t_end + 1.0);
            if (fj.contains("r_f_pu")) f.r_f = num(fj, "r_f_pu", 0.0);
            else if (fj.contains("r_f_ohm"))
                f.r_f = num(fj, "r_f_ohm", 0.0) / sc.network.z_base_ohm;
            f.dip_to = num(fj, "dip_to", 1.0);
            f.phase_jump = num(fj, "phase_jump", 0.0);
            if (f.r_f < 0.0) throw ConfigError("events: fault resistance must be >= 0");
            if (!(f.t_clear > f.t_on)) throw ConfigError("events: fault t_clear must be > t_on");
            if (f.kind == FaultEvent::Kind::VoltageDip &&
                sc.network.kind != NetworkConfig::Kind::Thevenin)
                throw ConfigError("events: voltage_dip applies to thevenin networks only");
            sc.faults.push_back(f);
        } else if (kind == "set_p_star" || kind == "set_q_star" || kind == "set_v_dc") {
            SetpointEvent se;
            se.t = t;
            se.field = kind == "set_p_star"   ? SetpointEvent::Field::PStar
                       : kind == "set_q_star" ? SetpointEvent::Field::QStar
                                              : SetpointEvent::Field::VDc;
            se.inverter = ev.contains("inverter") ? inverter_index(sc, ev["inverter"], "events[]")
                                                  : -1;
            se.value = num(ev, "value", 0.0);
            sc.setpoints.push_back(se);
        } else {
            throw ConfigError("events: unknown kind \"" + kind + "\"");
        }
    }
    std::stable_sort(sc.setpoints.begin(), sc.setpoints.end(),
                     [](const SetpointEvent& a, const SetpointEvent& b) { return a.t < b.t; });
    std::stable_sort(sc.faults.begin(), sc.faults.end(),
                     [](const FaultEvent& a, const FaultEvent& b) { return a.t_on < b.t_on; });
    for (size_t k = 1; k < sc.faults.size(); ++k)
        if (sc.faults[k].t_on < sc.faults[k - 1].t_clear)
            throw ConfigError("events: overlapping faults are not supported");
    if (sc.network.kind == NetworkConfig::Kind::MultiBus) {
        bool shunt_fault = false;
        for (const auto& f : sc.faults)
            if (f.kind != FaultEvent::Kind::VoltageDip) shunt_fault = true;
        if (shunt_fault && sc.network.fault_bus < 0)
            throw ConfigError("network: fault_bus required for multibus fault events");
    }
    if (sc.sim.quasi_static_regulator) {
        if (sc.network.kind != NetworkConfig::Kind::Thevenin || sc.inverters.size() != 1 ||
            sc.inverters[0].forming != FormingKind::Vsm)
            throw ConfigError("quasi_static_regulator supports a single VSM inverter on a "
                              "thevenin network");
    }
    return sc;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("parse error in " + path + ": " + e.what());
    }
    return parse_scenario(doc);
}

json scenario_to_json(const Scenario& sc) {
    json doc;
    doc["name"] = sc.name;
    doc["notes"] = sc.notes;
    doc["sim"] = {{"dt", sc.sim.dt},
                  {"t_end", sc.sim.t_end},
                  {"tau_c", sc.sim.tau_c},
                  {"decimation", sc.sim.decimation},
                  {"quasi_static_regulator", sc.sim.quasi_static_regulator},
                  {"divergence_limit", sc.sim.divergence_limit}};
    json net;
    net["z_base_ohm"] = sc.network.z_base_ohm;
    if (sc.network.kind == NetworkConfig::Kind::Thevenin) {
        net["kind"] = "thevenin";
        net["z_g1"] = cx_to_json(sc.network.thevenin.z_g1);
        net["z_g2"] = cx_to_json(sc.network.thevenin.z_g2);
        net["v_g"] = cx_to_json(sc.network.thevenin.v_g);
    } else {
        net["kind"] = "multibus";
        net["n_bus"] = sc.network.multibus.n_bus;
        net["branches"] = json::array();
        for (const auto& b : sc.network.multibus.branches)
            net["branches"].push_back({{"from", b.from}, {"to", b.to}, {"z", cx_to_json(b.z)}});
        net["shunts"] = json::array();
        for (const auto& s : sc.network.multibus.shunts)
            net["shunts"].push_back({{"bus", s.bus}, {"y", cx_to_json(s.y)}});
        if (sc.network.multibus.source)
            net["source"] = {{"bus", sc.network.multibus.source->bus},
                             {"v", cx_to_json(sc.network.multibus.source->v)},
                             {"z", cx_to_json(sc.network.multibus.source->z)}};
        net["inverter_bus"] = sc.network.inverter_bus;
        net["fault_bus"] = sc.network.fault_bus;
    }
    doc["network"] = net;
    doc["inverters"] = json::array();
    for (const auto& inv : sc.inverters) doc["inverters"].push_back(inverter_to_json(inv));
    doc["events"] = json::array();
    for (const auto& f : sc.faults) {
        json fj;
        switch (f.kind) {
        case FaultEvent::Kind::ThreePhase: fj["kind"] = "three_phase"; break;
        case FaultEvent::Kind::SingleLineGround: fj["kind"] = "slg"; break;
        case FaultEvent::Kind::DoubleLineGround: fj["kind"] = "llg"; break;
        case FaultEvent::Kind::VoltageDip: fj["kind"] = "voltage_dip"; break;
        }
        fj["r_f_pu"] = f.r_f;
        fj["t_clear"] = f.t_clear;
        fj["dip_to"] = f.dip_to;
        fj["phase_jump"] = f.phase_jump;
        doc["events"].push_back({{"t", f.t_on}, {"kind", "fault"}, {"fault", fj}});
    }
    for (const auto& se : sc.setpoints) {
        const char* kind = se.field == SetpointEvent::Field::PStar   ? "set_p_star"
                           : se.field == SetpointEvent::Field::QStar ? "set_q_star"
                                                                     : "set_v_dc";
        doc["events"].push_back(
            {{"t", se.t}, {"kind", kind}, {"inverter", se.inverter}, {"value", se.value}});
    }
    return doc;
}

std::string csv_header() {
    return "t_s,v_pos_re_pu,v_pos_im_pu,v_neg_re_pu,v_neg_im_pu,"
           "i_pos_re_pu,i_pos_im_pu,i_neg_re_pu,i_neg_im_pu,i_maxphase_pu,"
           "p_pu,q_pu,p_virtual_pu,theta_rel_rad,omega_rad_s,mu,v_lambda_mag_pu,mode";
}

void append_csv_row(std::string& out, const RecordRow& r) {
    char buf[640];
    std::snprintf(buf, sizeof buf,
                  "%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,"
                  "%.12g,%.12g,%.12g,%.12g,%.12g,%d\n",
                  r.t, r.v_pos.real(), r.v_pos.imag(), r.v_neg.real(), r.v_neg.imag(),
                  r.i_pos.real(), r.i_pos.imag(), r.i_neg.real(), r.i_neg.imag(), r.i_maxphase,
                  r.p, r.q, r.p_virtual, r.phi, r.omega, r.mu, r.v_lambda_mag, r.mode);
    out += buf;
}

namespace {

RunResult::Summary summarize(const std::vector<RecordRow>& rows, double omega0) {
    RunResult::Summary s;
    if (rows.empty()) return s;
    for (const auto& r : rows) s.max_i_maxphase = std::max(s.max_i_maxphase, r.i_maxphase);
    s.final_phi = rows.back().phi;
    s.final_omega = rows.back().omega;
    const double t_end = rows.back().t;
    const double window = std::max(0.5, 0.1 * t_end);
    double w_min = 1e300, w_max = -1e300, phi_min = 1e300, phi_max = -1e300;
    for (const auto& r : rows) {
        if (r.t >= t_end - window) {
            w_min = std::min(w_min, r.omega);
            w_max = std::max(w_max, r.omega);
        }
        phi_min = std::min(phi_min, r.phi);
        phi_max = std::max(phi_max, r.phi);
    }
    s.settled = (w_max - w_min) < 2e-4 * omega0;
    // a synchronized island drifts linearly at its common frequency with a
    // flat omega; loss of synchronism shows a large angle range together
    // with sustained frequency movement
    s.angle_diverged = (phi_max - phi_min) > 4.0 * pi && (w_max - w_min) > 2e-3 * omega0;
    return s;
}

} // namespace

RunResult run_scenario_collect(const Scenario& scenario, std::vector<std::vector<RecordRow>>* rows) {
    RunResult result;
    std::vector<std::vector<RecordRow>> local;
    auto& store = rows ? *rows : local;
    store.assign(scenario.inverters.size(), {});
    Simulation sim(scenario); // configuration errors propagate to the caller
    try {
        sim.run([&](int k, const RecordRow& r) { store[k].push_back(r); });
    } catch (const NumericalError& e) {
        result.message = e.what();
        result.exit_code = 3;
    }
    if (sim.diagnostics().no_operating_point) {
        result.exit_code = 4;
        if (result.message.empty()) result.message = "no feasible operating point encountered";
    } else if (sim.diagnostics().mu_floored && result.exit_code == 0) {
        result.message = "saturation-degree feedback hit the lower guard";
    }
    for (size_t k = 0; k < store.size(); ++k)
        result.summaries.push_back(summarize(store[k], scenario.inverters[k].omega0()));
    return result;
}

RunResult run_scenario(const Scenario& scenario, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::vector<std::vector<RecordRow>> rows;
    RunResult result = run_scenario_collect(scenario, &rows);

    auto write_atomic = [&](const fs::path& path, const std::string& content) {
        const fs::path tmp = path.string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary);
            out << content;
        }
        fs::rename(tmp, path);
    };

    for (size_t k = 0; k < rows.size(); ++k) {
        std::string csv = csv_header() + "\n";
        for (const auto& r : rows[k]) append_csv_row(csv, r);
        const fs::path path =
            fs::path(out_dir) / (scenario.name + "_" + scenario.inverters[k].name + ".csv");
        write_atomic(path, csv);
        result.csv_paths.push_back(path.string());
    }
    write_atomic(fs::path(out_dir) / (scenario.name + "_effective_config.json"),
                 scenario_to_json(scenario).dump(2) + "\n");
    return result;
}

Scenario patch_scenario(const nlohmann::json& doc,
                        const std::vector<std::pair<std::string, nlohmann::json>>& patches) {
    json patched = doc;
    for (const auto& [pointer, value] : patches) {
        try {
            patched[json::json_pointer(pointer)] = value;
        } catch (const json::exception& e) {
            throw ConfigError("invalid patch pointer \"" + pointer + "\": " + e.what());
        }
    }
    return parse_scenario(patched);
}

} // namespace gfm
