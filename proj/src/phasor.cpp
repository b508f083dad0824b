#include "gfm/phasor.hpp"

namespace gfm {

double wrap_angle(double ang) {
    double w = std::remainder(ang, 2.0 * pi);
    if (w <= -pi) w += 2.0 * pi;
    return w;
}

double PowerDecomposition::p_at(double t, double omega0) const {
    const Cx rot = std::polar(1.0, 2.0 * omega0 * t);
    return s_dc.real() + (s_osc_fwd * rot).real() + (s_osc_rev * std::conj(rot)).real();
}

double PowerDecomposition::q_at(double t, double omega0) const {
    const Cx rot = std::polar(1.0, 2.0 * omega0 * t);
    return s_dc.imag() + (s_osc_fwd * rot).imag() + (s_osc_rev * std::conj(rot)).imag();
}

// p_osc(t) = Re{(s_fwd + conj(s_rev)) e^{j2wt}}, so the peak-to-peak ripple
// is twice the magnitude of that combined envelope.
double PowerDecomposition::p_ripple() const {
    return 2.0 * std::abs(s_osc_fwd + std::conj(s_osc_rev));
}

double PowerDecomposition::q_ripple() const {
    return 2.0 * std::abs(s_osc_fwd - std::conj(s_osc_rev));
}

PhaseTriplet phase_magnitudes(const SequencePhasor& s) {
    const double p2 = std::norm(s.pos);
    const double n2 = std::norm(s.neg);
    const Cx cross = s.pos * s.neg;
    auto mag = [&](double lambda_x) {
        const double arg = p2 + n2 + 2.0 * (cross * std::polar(1.0, 2.0 * lambda_x)).real();
        return std::sqrt(std::max(arg, 0.0));
    };
    return {mag(lambda_a), mag(lambda_b), mag(lambda_c)};
}

double max_phase_magnitude(const SequencePhasor& s) {
    return phase_magnitudes(s).max();
}

PhaseTriplet reconstruct_instantaneous(const SequencePhasor& s, double t, double omega0) {
    auto sample = [&](double lambda_x) {
        return (s.pos * std::polar(1.0, omega0 * t + lambda_x)).real() +
               (s.neg * std::polar(1.0, -omega0 * t + lambda_x)).real();
    };
    return {sample(lambda_a), sample(lambda_b), sample(lambda_c)};
}

PowerDecomposition power_decompose(const SequencePhasor& v, const SequencePhasor& i) {
    PowerDecomposition d;
    d.s_dc = v.pos * std::conj(i.pos) + v.neg * std::conj(i.neg);
    d.s_osc_fwd = v.pos * std::conj(i.neg);
    d.s_osc_rev = v.neg * std::conj(i.pos);
    return d;
}

} // namespace gfm
