#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>

namespace coldrec::embeddings {

// Triangle formed by a unit content vector c, a correction d with |d| = delta
// and e = c + d. theta is the interior angle opposite c, gamma the angle
// between c and e; the law of sines gives sin(gamma) = delta * sin(theta).
struct GeometryBound {
  double delta_norm = 0.0;
  double theta = 0.0;
  double gamma = 0.0;

  double similarity() const { return std::cos(gamma); }
};

inline double adjusted_similarity(double delta_norm, double theta) {
  const double s = delta_norm * std::sin(theta);
  return std::sqrt(1.0 - s * s);
}

inline GeometryBound geometry_bound(double delta_norm, double theta) {
  if (!(delta_norm >= 0.0 && delta_norm < 1.0)) {
    throw std::invalid_argument("geometry_bound: delta norm must lie in [0, 1)");
  }
  return {delta_norm, theta, std::asin(delta_norm * std::sin(theta))};
}

// Worst case over theta, reached at theta = pi/2.
inline double min_cosine_similarity(double delta_max) {
  if (!(delta_max >= 0.0 && delta_max < 1.0)) {
    throw std::invalid_argument("min_cosine_similarity: delta_max must lie in [0, 1), got " +
                                std::to_string(delta_max));
  }
  return std::sqrt(1.0 - delta_max * delta_max);
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

}  // namespace coldrec::embeddings
