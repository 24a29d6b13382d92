#include "specshrink/interp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace specshrink {

MonotoneCubic::MonotoneCubic(std::span<const double> x,
                             std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n)
    throw std::invalid_argument("MonotoneCubic needs >= 2 matched nodes");
  x_.assign(x.begin(), x.end());
  y_.assign(y.begin(), y.end());
  std::vector<double> h(n - 1), delta(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = x_[i + 1] - x_[i];
    if (h[i] <= 0.0)
      throw std::invalid_argument("MonotoneCubic nodes must increase");
    delta[i] = (y_[i + 1] - y_[i]) / h[i];
  }
  d_.assign(n, 0.0);
  d_[0] = delta[0];
  d_[n - 1] = delta[n - 2];
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (delta[i - 1] * delta[i] <= 0.0) {
      d_[i] = 0.0;
    } else {
      const double w1 = 2.0 * h[i] + h[i - 1];
      const double w2 = h[i] + 2.0 * h[i - 1];
      d_[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
    }
  }
  // Fritsch-Carlson limiter
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (delta[i] == 0.0) {
      d_[i] = 0.0;
      d_[i + 1] = 0.0;
    } else {
      const double a = d_[i] / delta[i];
      const double b = d_[i + 1] / delta[i];
      const double s = a * a + b * b;
      if (s > 9.0) {
        const double t = 3.0 / std::sqrt(s);
        d_[i] = t * a * delta[i];
        d_[i + 1] = t * b * delta[i];
      }
    }
  }
}

double MonotoneCubic::operator()(double xq) const {
  const std::size_t n = x_.size();
  if (xq <= x_.front()) return y_.front();
  if (xq >= x_.back()) return y_.back();
  const auto it = std::upper_bound(x_.begin(), x_.end(), xq);
  const std::size_t i = static_cast<std::size_t>(it - x_.begin()) - 1;
  const double h = x_[i + 1] - x_[i];
  const double t = (xq - x_[i]) / h;
  const double t2 = t * t, t3 = t2 * t;
  const double h00 = 2 * t3 - 3 * t2 + 1;
  const double h10 = t3 - 2 * t2 + t;
  const double h01 = -2 * t3 + 3 * t2;
  const double h11 = t3 - t2;
  return h00 * y_[i] + h10 * h * d_[i] + h01 * y_[i + 1] + h11 * h * d_[i + 1];
}

double lerp_table(std::span<const double> x, std::span<const double> y,
                  double xq) {
  if (xq <= x.front()) return y.front();
  if (xq >= x.back()) return y.back();
  const auto it = std::upper_bound(x.begin(), x.end(), xq);
  const std::size_t i = static_cast<std::size_t>(it - x.begin()) - 1;
  const double t = (xq - x[i]) / (x[i + 1] - x[i]);
  return y[i] + t * (y[i + 1] - y[i]);
}

}  // namespace specshrink
