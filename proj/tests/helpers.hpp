#pragma once

// Shared test utilities: seeded value generators and the central
// finite-difference oracle (evaluated in float64) used to check every
// analytic gradient. The oracle side never calls the float32 tape.

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <vector>

#include "eat/nn.hpp"
#include "eat/tensor.hpp"

namespace testutil {

// Fresh scratch directory under the system temp root, removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("eat_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::vector<float> random_vec(eat::Rng& rng, std::size_t n, float lo = -1.0f, float hi = 1.0f) {
  std::vector<float> v(n);
  for (float& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Values bounded away from zero, for ops with a kink at the origin.
inline std::vector<float> random_vec_off_zero(eat::Rng& rng, std::size_t n, float margin = 0.1f, float hi = 1.0f) {
  std::vector<float> v(n);
  for (float& x : v) {
    const float mag = rng.uniform(margin, hi);
    x = rng.uniform() < 0.5f ? -mag : mag;
  }
  return v;
}

inline std::vector<double> widen(const std::vector<float>& v) { return {v.begin(), v.end()}; }

inline double rel_err(double a, double b, double floor = 1e-7) {
  if (std::abs(a) < floor && std::abs(b) < floor) return 0.0;
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Central differences of a float64-evaluated scalar function.
inline std::vector<double> central_diff(const std::function<double(const std::vector<double>&)>& f,
                                        std::vector<double> x, double h = 1e-3) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double dn = f(x);
    x[i] = keep;
    g[i] = (up - dn) / (2.0 * h);
  }
  return g;
}

inline double max_rel_err(const std::vector<float>& analytic, const std::vector<double>& numeric,
                          double floor = 1e-7) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i)
    worst = std::max(worst, rel_err(static_cast<double>(analytic[i]), numeric[i], floor));
  return worst;
}

}  // namespace testutil
