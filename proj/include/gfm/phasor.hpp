#ifndef GFM_PHASOR_HPP
#define GFM_PHASOR_HPP

#include <algorithm>
#include <cmath>
#include <complex>

namespace gfm {

/// Complex per-unit quantity (baseband phasor or impedance).
using Cx = std::complex<double>;

constexpr double pi = 3.14159265358979323846;

/// Nominal angular frequency used throughout the bundled scenarios, rad/s.
constexpr double omega0_default = 100.0 * pi;

/// Phase angle offsets of phases a, b, c relative to phase a.
constexpr double lambda_a = 0.0;
constexpr double lambda_b = -2.0 * pi / 3.0;
constexpr double lambda_c = +2.0 * pi / 3.0;

inline Cx polar_cx(double mag, double ang) { return std::polar(mag, ang); }
inline Cx rotate(Cx z, double ang) { return z * std::polar(1.0, ang); }
inline bool finite(Cx z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

/// Wrap an angle to (-pi, pi] for display; controller states stay unwrapped.
double wrap_angle(double ang);

/// Positive/negative-sequence baseband phasor pair (per-unit).
///
/// Phasor magnitudes equal per-phase peak values. The zero-sequence
/// component is identically zero (delta-wye isolation on the inverter
/// side), so it is not represented.
struct SequencePhasor {
    Cx pos{0.0, 0.0};
    Cx neg{0.0, 0.0};
};

/// Per-phase real values: either peak magnitudes or instantaneous samples.
struct PhaseTriplet {
    double a{0.0};
    double b{0.0};
    double c{0.0};

    double max_abs() const { return std::max({std::abs(a), std::abs(b), std::abs(c)}); }
    double max() const { return std::max({a, b, c}); }
};

/// Complex-power split into its dc part and the two counter-rotating
/// double-frequency envelopes:
///   s(t) = s_dc + s_osc_fwd * e^{+j2 w0 t} + s_osc_rev * e^{-j2 w0 t}
/// with p(t) = Re{s(t)} and q(t) = Im{s(t)}.
struct PowerDecomposition {
    Cx s_dc{0.0, 0.0};
    Cx s_osc_fwd{0.0, 0.0};
    Cx s_osc_rev{0.0, 0.0};

    double p_at(double t, double omega0) const;
    double q_at(double t, double omega0) const;
    /// Peak-to-peak ripple of p(t) over one fundamental period.
    double p_ripple() const;
    /// Peak-to-peak ripple of q(t) over one fundamental period.
    double q_ripple() const;
};

/// Peak magnitude of each phase current/voltage given its sequence phasors:
///   I_x = sqrt(|i+|^2 + |i-|^2 + 2 Re{i+ i- e^{j 2 lambda_x}})
PhaseTriplet phase_magnitudes(const SequencePhasor& s);

/// Largest of the three phase magnitudes.
double max_phase_magnitude(const SequencePhasor& s);

/// Instantaneous per-phase samples at time t:
///   x(t) = Re{pos e^{j(w0 t + lambda_x)}} + Re{neg e^{j(-w0 t + lambda_x)}}
PhaseTriplet reconstruct_instantaneous(const SequencePhasor& s, double t, double omega0);

/// Decompose the complex power v * conj(i) of unbalanced sequence pairs.
/// Per-unit bases absorb the 3/2 factor of the three-phase sum, so
/// s = v * conj(i) holds directly in pu.
PowerDecomposition power_decompose(const SequencePhasor& v, const SequencePhasor& i);

} // namespace gfm

#endif
