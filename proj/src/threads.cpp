#include "mam/threads.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cstdlib>
#include <thread>

namespace mam {

int configure_threads() {
  // GEMMs at desk scale run fastest single-threaded on this engine; raise via
  // MAM_THREADS when the batch sizes warrant it.
  int n = 1;
  if (const char* env = std::getenv("MAM_THREADS")) {
    const int requested = std::atoi(env);
    const int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (requested >= 1) n = std::min(requested, std::max(hw, 1));
  }
  Eigen::setNbThreads(n);
  return n;
}

}  // namespace mam
