#include <doctest.h>

#include <Eigen/Dense>
#include <random>

#include "gfm/errors.hpp"
#include "gfm/network.hpp"

using namespace gfm;

namespace {

// ---------------------------------------------------------------------------
// Brute-force three-phase phasor oracle, written before the sequence solver.
//
// Full abc nodal solve of: terminal --z_g1 per phase-- fault node --z_g2 per
// phase-- source (positive-sequence set from v_g). The inverter injects
// per-phase currents derived from (i+, i-). Fault connections are assembled
// per phase so the oracle never touches symmetrical-component theory beyond
// the sequence/phase transform itself.
//
// Phase-x instantaneous reconstruction Re{x+ e^{j(wt+l)}} + Re{x- e^{j(-wt+l)}}
// equals a single phasor x+ e^{jl} + conj(x-) e^{-jl} at +w, so the envelope
// negative-sequence component maps to the conjugate of the conventional one.
// ---------------------------------------------------------------------------

struct AbcSolution {
    Cx v_pos, v_neg; // terminal sequence envelopes recovered from phase values
};

constexpr Cx a_op{-0.5, 0.8660254037844386};
const Cx a2_op = a_op * a_op;

AbcSolution solve_abc(const TheveninGrid& g, Cx ip, Cx in_env, const FaultEvent* fault) {
    const Cx in = std::conj(in_env); // conventional negative-sequence phasor
    // nodes: 0..2 terminal a,b,c; 3..5 fault node a,b,c; extra node 6 for the
    // common LLG connection point.
    const bool llg = fault && fault->kind == FaultEvent::Kind::DoubleLineGround;
    const int n = llg ? 7 : 6;
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
    Eigen::VectorXcd inj = Eigen::VectorXcd::Zero(n);

    const Cx y1 = 1.0 / g.z_g1;
    const Cx y2 = 1.0 / g.z_g2;
    const Cx src[3] = {g.v_g, a2_op * g.v_g, a_op * g.v_g};
    const Cx iph[3] = {ip + in, a2_op * ip + a_op * in, a_op * ip + a2_op * in};

    for (int ph = 0; ph < 3; ++ph) {
        const int t = ph, f = 3 + ph;
        y(t, t) += y1;
        y(f, f) += y1;
        y(t, f) -= y1;
        y(f, t) -= y1;
        y(f, f) += y2;            // grid source branch, Norton form
        inj(f) += src[ph] * y2;
        inj(t) += iph[ph];
    }
    if (fault) {
        switch (fault->kind) {
        case FaultEvent::Kind::ThreePhase:
            // independent per-phase resistors to ground
            for (int ph = 0; ph < 3; ++ph) y(3 + ph, 3 + ph) += 1.0 / Cx{fault->r_f, 0.0};
            break;
        case FaultEvent::Kind::SingleLineGround:
            y(3, 3) += 1.0 / Cx{fault->r_f, 0.0};
            break;
        case FaultEvent::Kind::DoubleLineGround: {
            // phases b and c bolted to node 6, node 6 through r_f to ground;
            // the bolted ties are handled by a very stiff branch compared to
            // the network impedances, then refined by elimination below.
            // To keep conditioning exact we instead merge nodes: write the
            // tie as constraints via a large-but-exact admittance-free
            // reduction: treat node 6 as the common node and route z_g1/z_g2
            // branches of phases b,c directly to it.
            y.setZero();
            inj.setZero();
            for (int ph = 0; ph < 3; ++ph) {
                const int t = ph;
                const int f = (ph == 0) ? 3 : 6; // faulted phases share node 6
                y(t, t) += y1;
                y(f, f) += y1;
                y(t, f) -= y1;
                y(f, t) -= y1;
                y(f, f) += y2;
                inj(f) += src[ph] * y2;
                inj(t) += iph[ph];
            }
            y(6, 6) += 1.0 / Cx{fault->r_f, 0.0};
            // nodes 4,5 unused: pin them
            y(4, 4) = 1.0;
            y(5, 5) = 1.0;
            break;
        }
        default:
            break;
        }
    }
    const Eigen::VectorXcd v = y.fullPivLu().solve(inj);
    AbcSolution out;
    out.v_pos = (v(0) + a_op * v(1) + a2_op * v(2)) / 3.0;
    out.v_neg = std::conj((v(0) + a2_op * v(1) + a_op * v(2)) / 3.0);
    return out;
}

std::mt19937_64 rng_for(uint64_t seed) { return std::mt19937_64{0x9e7f0000u + seed}; }
Cx random_cx(std::mt19937_64& rng, double max_mag = 1.5) {
    std::uniform_real_distribution<double> mag(0.0, max_mag);
    std::uniform_real_distribution<double> ang(-pi, pi);
    return std::polar(mag(rng), ang(rng));
}

} // namespace

TEST_CASE("sequence network: open circuit and fault-off superposition") {
    TheveninGrid g;
    SequenceNetworkSolver solver(g);
    const auto open = solver.solve({Cx{0.0, 0.0}, Cx{0.0, 0.0}}, nullptr);
    CHECK(std::abs(open.pos - g.v_g) < 1e-15);
    CHECK(std::abs(open.neg) == 0.0);

    const Cx ip{0.4, -0.3}, in{0.1, 0.05};
    const auto loaded = solver.solve({ip, in}, nullptr);
    CHECK(std::abs(loaded.pos - (g.v_g + (g.z_g1 + g.z_g2) * ip)) < 1e-15);
    // the negative-sequence envelope sees the conjugated series impedance
    CHECK(std::abs(loaded.neg - std::conj(g.z_g1 + g.z_g2) * in) < 1e-15);
}

TEST_CASE("sequence network: bolted three-phase fault isolates the source") {
    TheveninGrid g;
    SequenceNetworkSolver solver(g);
    FaultEvent f;
    f.kind = FaultEvent::Kind::ThreePhase;
    f.r_f = 0.0;
    f.t_on = 0.0;
    f.t_clear = 1.0;
    const Cx ip{0.9, -0.5}, in{0.2, 0.1};
    const auto sol = solver.solve({ip, in}, &f);
    CHECK(std::abs(sol.pos - g.z_g1 * ip) < 1e-15); // fault-side Thevenin only
    CHECK(std::abs(sol.neg - std::conj(g.z_g1 + g.z_g2) * in) < 1e-15);
}

TEST_CASE("sequence network agrees with the three-phase oracle") {
    TheveninGrid g;
    SequenceNetworkSolver solver(g);
    auto rng = rng_for(1);

    FaultEvent slg;
    slg.kind = FaultEvent::Kind::SingleLineGround;
    slg.r_f = 0.00378; // 1 ohm on the documented 264.5-ohm base
    slg.t_on = 0.0;
    slg.t_clear = 1.0;

    FaultEvent llg = slg;
    llg.kind = FaultEvent::Kind::DoubleLineGround;

    FaultEvent three = slg;
    three.kind = FaultEvent::Kind::ThreePhase;

    for (int k = 0; k < 50; ++k) {
        const Cx ip = random_cx(rng);
        const Cx in = random_cx(rng, 0.5);

        const FaultEvent* cases[] = {nullptr, &slg, &llg};
        for (const FaultEvent* f : cases) {
            const auto seq = solver.solve({ip, in}, f);
            const auto abc = solve_abc(g, ip, in, f);
            CHECK(std::abs(seq.pos - abc.v_pos) < 1e-10);
            CHECK(std::abs(seq.neg - abc.v_neg) < 1e-10);
        }
        // the balanced-fault model carries the shunt in the positive network
        // only, which coincides with the per-phase oracle when i- = 0
        const auto seq3 = solver.solve({ip, Cx{0.0, 0.0}}, &three);
        const auto abc3 = solve_abc(g, ip, Cx{0.0, 0.0}, &three);
        CHECK(std::abs(seq3.pos - abc3.v_pos) < 1e-10);
        CHECK(std::abs(seq3.neg - abc3.v_neg) < 1e-10);
    }
}

TEST_CASE("sequence network: voltage dip modifies the source only") {
    TheveninGrid g;
    SequenceNetworkSolver solver(g);
    FaultEvent dip;
    dip.kind = FaultEvent::Kind::VoltageDip;
    dip.dip_to = 0.3;
    dip.phase_jump = -0.2;
    dip.t_on = 0.0;
    dip.t_clear = 1.0;
    const Cx ip{0.4, 0.1};
    const auto sol = solver.solve({ip, Cx{0.0, 0.0}}, &dip);
    const Cx vg_eff = std::polar(0.3, -0.2);
    CHECK(std::abs(sol.pos - (vg_eff + (g.z_g1 + g.z_g2) * ip)) < 1e-15);
}

TEST_CASE("thevenin equivalent matches direct probing") {
    TheveninGrid g;
    SequenceNetworkSolver solver(g);
    FaultEvent f;
    f.kind = FaultEvent::Kind::SingleLineGround;
    f.r_f = 0.003;
    f.t_on = 0.0;
    f.t_clear = 1.0;
    const auto th = solver.thevenin(&f);
    // v(i) = v_oc + z_th i must reproduce the solver for any injection
    auto rng = rng_for(2);
    for (int k = 0; k < 10; ++k) {
        const Cx ip = random_cx(rng);
        const auto sol = solver.solve({ip, Cx{0.0, 0.0}}, &f);
        CHECK(std::abs(sol.pos - (th.v_oc + th.z_th * ip)) < 1e-12);
    }
}

TEST_CASE("multibus: single inverter reduces to the sequence solver") {
    // two buses: 0 inverter terminal, 1 fault node; grid source behind z_g2
    TheveninGrid g;
    MultiBusNetwork net;
    net.n_bus = 2;
    net.branches.push_back({0, 1, g.z_g1});
    net.source = MultiBusNetwork::GridSource{1, g.v_g, g.z_g2};

    std::vector<BusSource> sources{{BusSource::Kind::Injection, 0, Cx{0.6, -0.2}, Cx{0.0, 0.0}}};
    MultiBusSolver solver(net, sources, -1, 0.0);
    const auto v = solver.solve(sources);

    SequenceNetworkSolver ref(g);
    const auto seq = ref.solve({sources[0].value, Cx{0.0, 0.0}}, nullptr);
    CHECK(std::abs(v(0) - seq.pos) < 1e-12);

    // faulted topology state
    FaultEvent f;
    f.kind = FaultEvent::Kind::ThreePhase;
    f.r_f = 0.01;
    f.t_on = 0.0;
    f.t_clear = 1.0;
    MultiBusSolver faulted(net, sources, 1, f.r_f);
    const auto vf = faulted.solve(sources);
    const auto seqf = ref.solve({sources[0].value, Cx{0.0, 0.0}}, &f);
    CHECK(std::abs(vf(0) - seqf.pos) < 1e-12);
}

TEST_CASE("multibus: symmetric three-inverter system stays symmetric") {
    MultiBusNetwork net;
    net.n_bus = 4; // 0..2 inverter buses, 3 pcc
    const Cx zl{0.01, 0.05};
    for (int k = 0; k < 3; ++k) net.branches.push_back({k, 3, zl});
    net.source = MultiBusNetwork::GridSource{3, Cx{1.0, 0.0}, Cx{0.013, 0.13}};

    std::vector<BusSource> sources;
    for (int k = 0; k < 3; ++k)
        sources.push_back({BusSource::Kind::Norton, k, std::polar(1.0, 0.05), Cx{0.0, 0.2}});
    MultiBusSolver solver(net, sources, -1, 0.0);
    const auto v = solver.solve(sources);
    CHECK(std::abs(v(0) - v(1)) < 1e-12);
    CHECK(std::abs(v(1) - v(2)) < 1e-12);

    // per-inverter currents identical
    const Cx i0 = (sources[0].value - v(0)) / sources[0].z_v;
    const Cx i1 = (sources[1].value - v(1)) / sources[1].z_v;
    CHECK(std::abs(i0 - i1) < 1e-12);
}

TEST_CASE("multibus: singular topology rejected") {
    MultiBusNetwork net;
    net.n_bus = 2;
    net.branches.push_back({0, 1, Cx{0.0, 0.1}});
    // no source, no shunt: floating network has a singular matrix
    std::vector<BusSource> sources{{BusSource::Kind::Injection, 0, Cx{1.0, 0.0}, Cx{0.0, 0.0}}};
    CHECK_THROWS_AS(MultiBusSolver(net, sources, -1, 0.0), ConfigError);
}
