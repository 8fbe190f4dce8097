// Acceptance binary: one line per criterion, nonzero exit on any failure.
//   acceptance [id ...]

#include <cstdio>
#include <cstdlib>
#include <set>

#include "flrw/acceptance.hpp"

int main(int argc, char **argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  flrw::AcceptanceSuite suite;
  int failed = 0;
  suite.run_all(only, [&](const flrw::CriterionResult &r) {
    std::printf("[%s] %2d %s: %s (%.1f s)\n", r.passed ? "PASS" : "FAIL", r.id, r.title.c_str(), r.detail.c_str(),
                r.seconds);
    std::fflush(stdout);
    if (!r.passed) ++failed;
  });
  std::printf("%d failed\n", failed);
  return failed == 0 ? 0 : 1;
}
