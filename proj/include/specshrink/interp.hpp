#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace specshrink {

// Monotone cubic (Fritsch-Carlson) interpolant through (x_i, y_i) with x
// strictly increasing. Used for quantile inversion; preserves monotone data.
class MonotoneCubic {
 public:
  MonotoneCubic() = default;
  MonotoneCubic(std::span<const double> x, std::span<const double> y);

  double operator()(double x) const;
  bool empty() const { return x_.empty(); }

 private:
  std::vector<double> x_, y_, d_;  // nodes, values, node slopes
};

// Linear interpolation with clamped ends; x ascending.
double lerp_table(std::span<const double> x, std::span<const double> y,
                  double xq);

}  // namespace specshrink
