// Acceptance suite: runs every acceptance criterion at its pinned tolerance
// and prints one PASS/FAIL line per criterion.
#include <cstdio>
#include <cstring>
#include <string>

#include "gfm/verify.hpp"

int main(int argc, char** argv) {
    gfm::CheckContext ctx;
    for (int i = 1; i + 1 < argc; i += 2) {
        if (std::strcmp(argv[i], "--scenario-dir") == 0) ctx.scenario_dir = argv[i + 1];
        if (std::strcmp(argv[i], "--seed") == 0) ctx.seed = std::stoull(argv[i + 1]);
    }
    const auto results = gfm::run_checks(ctx, "acceptance");
    bool all_pass = true;
    double total = 0.0;
    for (const auto& r : results) {
        std::printf("[%s] %-55s measured=%.4g tol=%.4g (%.1fs)\n", r.pass ? "PASS" : "FAIL",
                    r.id.c_str(), r.measured, r.tolerance, r.seconds);
        std::printf("       %s\n", r.detail.c_str());
        all_pass &= r.pass;
        total += r.seconds;
    }
    std::printf("acceptance suite: %zu criteria in %.1f s -> %s\n", results.size(), total,
                all_pass ? "ALL PASS" : "FAILURES");
    if (total > 300.0) {
        std::printf("FAIL: suite exceeded the 5-minute budget\n");
        all_pass = false;
    }
    return all_pass ? 0 : 1;
}
