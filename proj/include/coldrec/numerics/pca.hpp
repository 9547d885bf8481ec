#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "coldrec/numerics/matrix.hpp"

namespace coldrec::numerics {

// Standardization followed by projection onto the leading principal axes.
struct PcaModel {
  std::vector<double> mean;
  std::vector<double> scale;
  Matrix components;  // D x m, orthonormal columns
  std::vector<double> explained_variance;

  std::size_t input_dim() const { return mean.size(); }
  std::size_t output_dim() const { return components.cols(); }
};

struct EigenDecomposition {
  std::vector<double> values;  // descending
  Matrix vectors;              // column j pairs with values[j]
};

// Cyclic Jacobi rotations on a symmetric matrix. Eigenvalues are sorted
// descending and each eigenvector's largest-magnitude entry is made positive.
inline EigenDecomposition symmetric_eigen(Matrix a, int max_sweeps = 100) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw std::invalid_argument("symmetric_eigen: matrix is not square");
  Matrix v = Matrix::identity(n);

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        total += a(i, j) * a(i, j);
        if (i != j) off += a(i, j) * a(i, j);
      }
    }
    if (off <= 1e-30 * std::max(total, 1e-300)) break;

    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });

  EigenDecomposition out{std::vector<double>(n), Matrix(n, n)};
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = order[j];
    out.values[j] = a(src, src);
    std::size_t arg = 0;
    for (std::size_t k = 1; k < n; ++k) {
      if (std::abs(v(k, src)) > std::abs(v(arg, src))) arg = k;
    }
    const double sign = v(arg, src) < 0 ? -1.0 : 1.0;
    for (std::size_t k = 0; k < n; ++k) out.vectors(k, j) = sign * v(k, src);
  }
  return out;
}

// Fits per-column standardization (population std, zero-variance columns get
// scale 1) and the top-m principal directions of the standardized rows.
inline PcaModel fit_pca(const Matrix& x, std::size_t target_dim) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  if (d < target_dim) {
    throw std::invalid_argument("fit_pca: input dimension " + std::to_string(d) +
                                " is smaller than target dimension " +
                                std::to_string(target_dim));
  }
  if (n < 2) throw std::invalid_argument("fit_pca: need at least 2 rows, got " + std::to_string(n));
  if (n < target_dim) {
    throw std::invalid_argument("fit_pca: " + std::to_string(n) + " rows cannot support " +
                                std::to_string(target_dim) + " components");
  }
  if (target_dim == 0) throw std::invalid_argument("fit_pca: target dimension must be positive");

  PcaModel model;
  model.mean.assign(d, 0.0);
  model.scale.assign(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) model.mean[c] += x(r, c);
  }
  for (double& m : model.mean) m /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = x(r, c) - model.mean[c];
      model.scale[c] += diff * diff;
    }
  }
  for (double& s : model.scale) {
    s = std::sqrt(s / static_cast<double>(n));
    if (!(s > 0.0)) s = 1.0;
  }

  Matrix z(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) z(r, c) = (x(r, c) - model.mean[c]) / model.scale[c];
  }
  Matrix cov(d, d);
  for (std::size_t r = 0; r < n; ++r) {
    const auto zr = z.row(r);
    for (std::size_t i = 0; i < d; ++i) {
      const double zi = zr[i];
      if (zi == 0.0) continue;
      for (std::size_t j = i; j < d; ++j) cov(i, j) += zi * zr[j];
    }
  }
  const double denom = static_cast<double>(n - 1);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      cov(i, j) /= denom;
      cov(j, i) = cov(i, j);
    }
  }

  const auto eig = symmetric_eigen(std::move(cov));
  model.components = Matrix(d, target_dim);
  model.explained_variance.assign(eig.values.begin(), eig.values.begin() + target_dim);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < target_dim; ++j) model.components(i, j) = eig.vectors(i, j);
  }
  return model;
}

inline std::vector<double> pca_transform(const PcaModel& model, std::span<const double> x) {
  if (x.size() != model.input_dim()) {
    throw std::invalid_argument("pca_transform: expected dimension " +
                                std::to_string(model.input_dim()) + ", got " +
                                std::to_string(x.size()));
  }
  const std::size_t m = model.output_dim();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = (x[i] - model.mean[i]) / model.scale[i];
    for (std::size_t j = 0; j < m; ++j) out[j] += model.components(i, j) * z;
  }
  return out;
}

// Maps a projected point back to input space.
inline std::vector<double> pca_inverse(const PcaModel& model, std::span<const double> y) {
  if (y.size() != model.output_dim()) {
    throw std::invalid_argument("pca_inverse: expected dimension " +
                                std::to_string(model.output_dim()) + ", got " +
                                std::to_string(y.size()));
  }
  const std::size_t d = model.input_dim();
  std::vector<double> out(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    double z = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) z += model.components(i, j) * y[j];
    out[i] = z * model.scale[i] + model.mean[i];
  }
  return out;
}

}  // namespace coldrec::numerics
