#include "cavlock/fft.hpp"

#include "cavlock/error.hpp"

#include <fftw3.h>

#include <algorithm>
#include <memory>
#include <mutex>

namespace cavlock {

namespace {

// The FFTW planner is not thread safe; execution of distinct plans is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

template <typename T>
using FftwBuffer = std::unique_ptr<T[], FftwFree>;

template <typename T>
FftwBuffer<T> allocate(std::size_t n) {
  auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * std::max<std::size_t>(n, 1)));
  if (p == nullptr) throw std::bad_alloc();
  return FftwBuffer<T>(p);
}

class Plan {
public:
  explicit Plan(fftw_plan p) : plan_(p) {}
  Plan(const Plan&) = delete;
  Plan& operator=(const Plan&) = delete;
  ~Plan() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_);
  }
  void execute() const { fftw_execute(plan_); }

private:
  fftw_plan plan_;
};

} // namespace

std::vector<std::complex<double>> rfft(std::span<const double> x) {
  const std::size_t n = x.size();
  require(n >= 1, "rfft: empty input");
  const std::size_t nbins = n / 2 + 1;
  auto in = allocate<double>(n);
  auto out = allocate<fftw_complex>(nbins);
  fftw_plan raw = nullptr;
  {
    std::lock_guard lock(planner_mutex());
    raw = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.get(), out.get(), FFTW_ESTIMATE);
  }
  Plan plan(raw);
  std::copy(x.begin(), x.end(), in.get());
  plan.execute();
  std::vector<std::complex<double>> result(nbins);
  for (std::size_t k = 0; k < nbins; ++k) result[k] = {out[k][0], out[k][1]};
  return result;
}

std::vector<double> irfft(std::span<const std::complex<double>> spectrum, std::size_t n) {
  require(n >= 1, "irfft: empty output");
  const std::size_t nbins = n / 2 + 1;
  require(spectrum.size() == nbins, "irfft: spectrum size must be n/2 + 1");
  auto in = allocate<fftw_complex>(nbins);
  auto out = allocate<double>(n);
  fftw_plan raw = nullptr;
  {
    std::lock_guard lock(planner_mutex());
    raw = fftw_plan_dft_c2r_1d(static_cast<int>(n), in.get(), out.get(), FFTW_ESTIMATE);
  }
  Plan plan(raw);
  for (std::size_t k = 0; k < nbins; ++k) {
    in[k][0] = spectrum[k].real();
    in[k][1] = spectrum[k].imag();
  }
  plan.execute();
  const double scale = 1.0 / static_cast<double>(n);
  std::vector<double> result(n);
  for (std::size_t i = 0; i < n; ++i) result[i] = out[i] * scale;
  return result;
}

} // namespace cavlock
