#include "aqualoc/fft.hpp"

#include <fftw3.h>

#include <map>
#include <memory>
#include <mutex>
#include <utility>

namespace aqualoc::dsp {
namespace {

// FFTW planning is not thread-safe; execution with the new-array interface is.
class PlanCache {
 public:
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  fftw_plan get(int n, int sign) {
    std::lock_guard lock(mutex_);
    auto it = plans_.find({n, sign});
    if (it != plans_.end()) return it->second;
    auto* in = fftw_alloc_complex(static_cast<std::size_t>(n));
    auto* out = fftw_alloc_complex(static_cast<std::size_t>(n));
    fftw_plan plan = fftw_plan_dft_1d(n, in, out, sign, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
    plans_.emplace(std::make_pair(n, sign), plan);
    return plan;
  }

 private:
  std::mutex mutex_;
  std::map<std::pair<int, int>, fftw_plan> plans_;
};

PlanCache& cache() {
  static PlanCache instance;
  return instance;
}

struct FftwBuffer {
  explicit FftwBuffer(std::size_t n) : data(fftw_alloc_complex(n)) {}
  ~FftwBuffer() { fftw_free(data); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  fftw_complex* data;
};

std::vector<Complex> transform(std::span<const Complex> input, int sign) {
  const std::size_t n = input.size();
  if (n == 0) return {};
  FftwBuffer in(n), out(n);
  for (std::size_t i = 0; i < n; ++i) {
    in.data[i][0] = input[i].real();
    in.data[i][1] = input[i].imag();
  }
  fftw_execute_dft(cache().get(static_cast<int>(n), sign), in.data, out.data);
  std::vector<Complex> result(n);
  for (std::size_t i = 0; i < n; ++i) result[i] = {out.data[i][0], out.data[i][1]};
  return result;
}

}  // namespace

std::vector<Complex> fft(std::span<const Complex> input) {
  return transform(input, FFTW_FORWARD);
}

std::vector<Complex> fft(std::span<const double> input) {
  std::vector<Complex> promoted(input.begin(), input.end());
  return transform(promoted, FFTW_FORWARD);
}

std::vector<Complex> ifft(std::span<const Complex> input) {
  auto result = transform(input, FFTW_BACKWARD);
  const double scale = 1.0 / static_cast<double>(input.size());
  for (auto& x : result) x *= scale;
  return result;
}

}  // namespace aqualoc::dsp
