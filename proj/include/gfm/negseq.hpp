#ifndef GFM_NEGSEQ_HPP
#define GFM_NEGSEQ_HPP

#include "gfm/phasor.hpp"

namespace gfm {

/// Negative-sequence current reference policy.
///
/// Flexible(chi) spans the power-oscillation family:
///   chi = -1 removes the active-power ripple,
///   chi = +1 removes the reactive-power ripple,
///   chi =  0 keeps the current balanced.
/// VoltageMitigation absorbs reactive current proportional to v- through a
/// virtual susceptance k_minus.
struct NegSeqMode {
    enum class Kind { Balanced, Flexible, VoltageMitigation } kind{Kind::Balanced};
    double chi{0.0};     // in [-1, 1], Flexible only
    double k_minus{0.0}; // pu susceptance >= 0, VoltageMitigation only

    static NegSeqMode balanced() { return {Kind::Balanced, 0.0, 0.0}; }
    static NegSeqMode flexible(double chi) { return {Kind::Flexible, chi, 0.0}; }
    static NegSeqMode p_osc_suppress() { return flexible(-1.0); }
    static NegSeqMode q_osc_suppress() { return flexible(+1.0); }
    static NegSeqMode voltage_mitigation(double k_minus) {
        return {Kind::VoltageMitigation, 0.0, k_minus};
    }
};

/// Peak-to-peak double-frequency power ripple of a voltage/current pair.
struct PowerRipple {
    double p_ripple{0.0};
    double q_ripple{0.0};
};

/// Negative-sequence current reference for the selected mode.
///   Balanced:           i- = 0
///   Flexible(chi):      i- = chi (v- / conj(v+)) conj(i+)
///   VoltageMitigation:  i- = -j k_minus v-
/// Throws std::domain_error in Flexible mode when the positive-sequence
/// voltage has collapsed (|v+| below a small floor).
Cx neg_seq_reference(const NegSeqMode& mode, const SequencePhasor& v, Cx i_pos_ref);

/// Evaluate the oscillating power left by a given sequence pair.
PowerRipple verify_non_oscillation(const SequencePhasor& v, const SequencePhasor& i);

} // namespace gfm

#endif
