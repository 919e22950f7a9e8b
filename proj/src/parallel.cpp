#include "meissner/parallel.hpp"

#include <cstdlib>
#include <string>

namespace meissner {

unsigned default_thread_count() {
  if (const char* env = std::getenv("MEISSNER_TRAP_THREADS")) {
    try {
      const long n = std::stol(env);
      if (n > 0) return static_cast<unsigned>(n);
    } catch (...) {
      // fall through to hardware concurrency
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1u : hw;
}

}  // namespace meissner
