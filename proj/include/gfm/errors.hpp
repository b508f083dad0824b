#ifndef GFM_ERRORS_HPP
#define GFM_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace gfm {

/// Invalid scenario, parameters, or topology.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Simulation left the trusted numerical range (divergence guard, failed
/// equilibrium solve, singular factorization).
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace gfm

#endif
