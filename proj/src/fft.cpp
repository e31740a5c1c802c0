#include "afreeqc/fft.hpp"

#include "afreeqc/errors.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <numeric>
#include <utility>

namespace afreeqc::fft {
namespace {

// fftw planning is not thread-safe; execution with new-array execute is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct PlanCache {
  std::map<std::pair<std::vector<int>, bool>, fftw_plan> plans;
  ~PlanCache() {
    for (auto& [_, p] : plans) fftw_destroy_plan(p);
  }
};

fftw_plan plan_for(std::span<const int> dims, bool forward) {
  static PlanCache cache;
  std::lock_guard lock(planner_mutex());
  std::vector<int> key(dims.begin(), dims.end());
  auto it = cache.plans.find({key, forward});
  if (it != cache.plans.end()) return it->second;
  const std::size_t total = std::accumulate(key.begin(), key.end(), std::size_t{1},
                                            [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
  std::vector<Complex> scratch(total);
  auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
  fftw_plan p = fftw_plan_dft(static_cast<int>(key.size()), key.data(), buf, buf,
                              forward ? FFTW_FORWARD : FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (p == nullptr) throw Error("fftw planning failed");
  cache.plans.emplace(std::make_pair(key, forward), p);
  return p;
}

}  // namespace

void transform(std::span<const int> dims, std::span<Complex> data, bool forward) {
  std::size_t total = 1;
  for (int d : dims) total *= static_cast<std::size_t>(d);
  if (total != data.size()) throw InvalidArgument("fft: data size does not match extents");
  fftw_plan p = plan_for(dims, forward);
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(p, buf, buf);
}

}  // namespace afreeqc::fft
