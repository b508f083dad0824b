#ifndef GFM_VERIFY_HPP
#define GFM_VERIFY_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace gfm {

/// One property or acceptance check: id, measured worst-case value, and the
/// tolerance it was held against.
struct CheckResult {
    std::string id;
    bool pass{false};
    double measured{0.0};
    double tolerance{0.0};
    std::string detail;
    double seconds{0.0};
};

struct CheckContext {
    uint64_t seed{0x5eedf00d};
    std::string scenario_dir{"scenarios"};
};

struct Check {
    std::string id; // "<group>.<name>"
    std::function<CheckResult(const CheckContext&)> run;
};

/// Registry of every module property suite plus the acceptance criteria
/// (ids "acceptance.c01" ... "acceptance.c13").
const std::vector<Check>& all_checks();

/// Run all checks whose id starts with `filter` (empty = all).
std::vector<CheckResult> run_checks(const CheckContext& ctx, const std::string& filter);

} // namespace gfm

#endif
