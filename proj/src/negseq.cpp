#include "gfm/negseq.hpp"

#include <stdexcept>

namespace gfm {

Cx neg_seq_reference(const NegSeqMode& mode, const SequencePhasor& v, Cx i_pos_ref) {
    switch (mode.kind) {
    case NegSeqMode::Kind::Balanced:
        return {0.0, 0.0};
    case NegSeqMode::Kind::Flexible: {
        if (std::abs(v.pos) < 1e-9)
            throw std::domain_error("neg_seq_reference: positive-sequence voltage collapse");
        return mode.chi * (v.neg / std::conj(v.pos)) * std::conj(i_pos_ref);
    }
    case NegSeqMode::Kind::VoltageMitigation:
        return Cx{0.0, -1.0} * mode.k_minus * v.neg;
    }
    return {0.0, 0.0};
}

PowerRipple verify_non_oscillation(const SequencePhasor& v, const SequencePhasor& i) {
    const PowerDecomposition d = power_decompose(v, i);
    return {d.p_ripple(), d.q_ripple()};
}

} // namespace gfm
