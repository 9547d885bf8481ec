#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "coldrec/numerics/tensor.hpp"

namespace coldrec::numerics {

namespace kernel {

// out[r, j] (+)= sum_k a[r, k] * b[k, j]
inline void gemm_nn(const double* a, const double* b, double* out, std::size_t rows,
                    std::size_t inner, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* o = out + r * cols;
    const double* ar = a + r * inner;
    for (std::size_t k = 0; k < inner; ++k) {
      const double av = ar[k];
      if (av == 0.0) continue;
      const double* br = b + k * cols;
      for (std::size_t j = 0; j < cols; ++j) o[j] += av * br[j];
    }
  }
}

// out[r, j] (+)= sum_k a[r, k] * b[j, k]
inline void gemm_nt(const double* a, const double* b, double* out, std::size_t rows,
                    std::size_t inner, std::size_t cols) {
  // transposing b first keeps the inner loop contiguous
  std::vector<double> bt(inner * cols);
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t k = 0; k < inner; ++k) bt[k * cols + j] = b[j * inner + k];
  }
  gemm_nn(a, bt.data(), out, rows, inner, cols);
}

// out[k, j] (+)= sum_r a[r, k] * b[r, j]
inline void gemm_tn(const double* a, const double* b, double* out, std::size_t rows,
                    std::size_t a_cols, std::size_t b_cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* ar = a + r * a_cols;
    const double* br = b + r * b_cols;
    for (std::size_t k = 0; k < a_cols; ++k) {
      const double av = ar[k];
      if (av == 0.0) continue;
      double* o = out + k * b_cols;
      for (std::size_t j = 0; j < b_cols; ++j) o[j] += av * br[j];
    }
  }
}

}  // namespace kernel

namespace detail {

inline bool is_suffix(const Shape& shape, const Shape& suffix) {
  if (suffix.size() > shape.size()) return false;
  return std::equal(suffix.rbegin(), suffix.rend(), shape.rbegin());
}

inline std::size_t leading_rows(const Shape& shape, const char* op) {
  if (shape.empty()) throw ShapeError(std::string(op) + ": scalar operand");
  return shape_numel(shape) / shape.back();
}

}  // namespace detail

// Elementwise sum; b may have the shape of a trailing suffix of a and is then
// broadcast over a's leading axes.
inline Tensor add(const Tensor& a, const Tensor& b) {
  if (!detail::is_suffix(a.shape(), b.shape())) shape_mismatch("add", a.shape(), b.shape());
  const auto av = a.values();
  const auto bv = b.values();
  const std::size_t inner = bv.size();
  std::vector<double> out(av.begin(), av.end());
  for (std::size_t base = 0; base < out.size(); base += inner) {
    double* o = out.data() + base;
    for (std::size_t j = 0; j < inner; ++j) o[j] += bv[j];
  }
  return detail::make_result(a.shape(), std::move(out), {a, b}, [inner](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t base = 0; base < self.grad.size(); base += inner) {
        const double* s = self.grad.data() + base;
        for (std::size_t j = 0; j < inner; ++j) g[j] += s[j];
      }
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_mismatch("mul", a.shape(), b.shape());
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return detail::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

inline Tensor scale(const Tensor& a, double factor) {
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  return detail::make_result(a.shape(), std::move(out), {a}, [factor](detail::Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

inline Tensor relu(const Tensor& a) {
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
  return detail::make_result(a.shape(), std::move(out), {a}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (p.value[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return detail::make_result(Shape{}, {s}, {a}, [](detail::Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    const double up = self.grad[0];
    for (double& v : g) v += up;
  });
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

// a: [..., k], w: [k, p] -> [..., p]
inline Tensor matmul(const Tensor& a, const Tensor& w) {
  if (w.rank() != 2 || a.rank() < 1 || a.shape().back() != w.dim(0)) {
    shape_mismatch("matmul", a.shape(), w.shape());
  }
  const std::size_t rows = detail::leading_rows(a.shape(), "matmul");
  const std::size_t inner = w.dim(0);
  const std::size_t cols = w.dim(1);
  Shape out_shape = a.shape();
  out_shape.back() = cols;
  std::vector<double> out(rows * cols, 0.0);
  kernel::gemm_nn(a.values().data(), w.values().data(), out.data(), rows, inner, cols);
  return detail::make_result(std::move(out_shape), std::move(out), {a, w},
                             [rows, inner, cols](detail::Node& self) {
                               auto& pa = *self.parents[0];
                               auto& pw = *self.parents[1];
                               if (pa.requires_grad) {
                                 kernel::gemm_nt(self.grad.data(), pw.value.data(),
                                                 pa.ensure_grad().data(), rows, cols, inner);
                               }
                               if (pw.requires_grad) {
                                 kernel::gemm_tn(pa.value.data(), self.grad.data(),
                                                 pw.ensure_grad().data(), rows, inner, cols);
                               }
                             });
}

// a: [..., k], w: [p, k] -> [..., p]; scores against every row of w.
inline Tensor matmul_transposed(const Tensor& a, const Tensor& w) {
  if (w.rank() != 2 || a.rank() < 1 || a.shape().back() != w.dim(1)) {
    shape_mismatch("matmul_transposed", a.shape(), w.shape());
  }
  const std::size_t rows = detail::leading_rows(a.shape(), "matmul_transposed");
  const std::size_t inner = w.dim(1);
  const std::size_t cols = w.dim(0);
  Shape out_shape = a.shape();
  out_shape.back() = cols;
  std::vector<double> out(rows * cols, 0.0);
  kernel::gemm_nt(a.values().data(), w.values().data(), out.data(), rows, inner, cols);
  return detail::make_result(std::move(out_shape), std::move(out), {a, w},
                             [rows, inner, cols](detail::Node& self) {
                               auto& pa = *self.parents[0];
                               auto& pw = *self.parents[1];
                               if (pa.requires_grad) {
                                 kernel::gemm_nn(self.grad.data(), pw.value.data(),
                                                 pa.ensure_grad().data(), rows, cols, inner);
                               }
                               if (pw.requires_grad) {
                                 kernel::gemm_tn(self.grad.data(), pa.value.data(),
                                                 pw.ensure_grad().data(), rows, cols, inner);
                               }
                             });
}

// a: [B, n, k]; b: [B, k, p] (or [B, p, k] when transpose_b) -> [B, n, p]
inline Tensor batched_matmul(const Tensor& a, const Tensor& b, bool transpose_b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) ||
      a.dim(2) != (transpose_b ? b.dim(2) : b.dim(1))) {
    shape_mismatch("batched_matmul", a.shape(), b.shape());
  }
  const std::size_t batch = a.dim(0);
  const std::size_t n = a.dim(1);
  const std::size_t k = a.dim(2);
  const std::size_t p = transpose_b ? b.dim(1) : b.dim(2);
  std::vector<double> out(batch * n * p, 0.0);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::size_t s = 0; s < batch; ++s) {
    if (transpose_b) {
      kernel::gemm_nt(av + s * n * k, bv + s * p * k, out.data() + s * n * p, n, k, p);
    } else {
      kernel::gemm_nn(av + s * n * k, bv + s * k * p, out.data() + s * n * p, n, k, p);
    }
  }
  return detail::make_result(
      Shape{batch, n, p}, std::move(out), {a, b},
      [batch, n, k, p, transpose_b](detail::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const double* g = self.grad.data();
        for (std::size_t s = 0; s < batch; ++s) {
          const double* gs = g + s * n * p;
          const double* as = pa.value.data() + s * n * k;
          const double* bs = pb.value.data() + s * k * p;
          if (pa.requires_grad) {
            double* ga = pa.ensure_grad().data() + s * n * k;
            if (transpose_b) {
              kernel::gemm_nn(gs, bs, ga, n, p, k);
            } else {
              kernel::gemm_nt(gs, bs, ga, n, p, k);
            }
          }
          if (pb.requires_grad) {
            double* gb = pb.ensure_grad().data() + s * k * p;
            if (transpose_b) {
              kernel::gemm_tn(gs, as, gb, n, p, k);
            } else {
              kernel::gemm_tn(as, gs, gb, n, k, p);
            }
          }
        }
      });
}

inline Tensor softmax(const Tensor& a) {
  const std::size_t width = a.shape().empty() ? 1 : a.shape().back();
  const std::size_t rows = a.numel() / width;
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * width;
    double* y = out.data() + r * width;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < width; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < width; ++j) z += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < width; ++j) y[j] /= z;
  }
  return detail::make_result(a.shape(), std::move(out), {a}, [rows, width](detail::Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * width;
      const double* gy = self.grad.data() + r * width;
      double dot = 0.0;
      for (std::size_t j = 0; j < width; ++j) dot += gy[j] * y[j];
      double* gx = g.data() + r * width;
      for (std::size_t j = 0; j < width; ++j) gx[j] += y[j] * (gy[j] - dot);
    }
  });
}

// Normalizes over the last axis, then applies per-feature gain and bias.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         double eps = 1e-8) {
  if (x.rank() < 1 || gain.shape() != Shape{x.shape().back()} || bias.shape() != gain.shape()) {
    shape_mismatch("layer_norm", x.shape(), gain.shape());
  }
  const std::size_t width = x.shape().back();
  const std::size_t rows = x.numel() / width;
  const auto xv = x.values();
  const auto gv = gain.values();
  const auto bv = bias.values();
  std::vector<double> out(xv.size());
  // normalized activations and inverse std per row, kept for backward
  auto normed = std::make_shared<std::vector<double>>(xv.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * width;
    double mu = 0.0;
    for (std::size_t j = 0; j < width; ++j) mu += xr[j];
    mu /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t j = 0; j < width; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(width);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < width; ++j) {
      const double nh = (xr[j] - mu) * is;
      (*normed)[r * width + j] = nh;
      out[r * width + j] = nh * gv[j] + bv[j];
    }
  }
  return detail::make_result(
      x.shape(), std::move(out), {x, gain, bias},
      [rows, width, normed, inv_std](detail::Node& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        const double* gy = self.grad.data();
        if (pg.requires_grad || pb.requires_grad) {
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < width; ++j) {
              const double up = gy[r * width + j];
              if (pg.requires_grad) pg.ensure_grad()[j] += up * (*normed)[r * width + j];
              if (pb.requires_grad) pb.ensure_grad()[j] += up;
            }
          }
        }
        if (!px.requires_grad) return;
        auto& gx = px.ensure_grad();
        const double inv_w = 1.0 / static_cast<double>(width);
        for (std::size_t r = 0; r < rows; ++r) {
          double sum_d = 0.0;
          double sum_dn = 0.0;
          for (std::size_t j = 0; j < width; ++j) {
            const double d = gy[r * width + j] * pg.value[j];
            sum_d += d;
            sum_dn += d * (*normed)[r * width + j];
          }
          const double is = (*inv_std)[r];
          for (std::size_t j = 0; j < width; ++j) {
            const double d = gy[r * width + j] * pg.value[j];
            gx[r * width + j] +=
                is * (d - inv_w * sum_d - (*normed)[r * width + j] * inv_w * sum_dn);
          }
        }
      });
}

// Inverted dropout. In eval mode (training == false) or rate 0 this is the
// identity and draws nothing from rng.
inline Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng, bool training) {
  if (!training || rate <= 0.0) return x;
  if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
  const double keep = 1.0 - rate;
  std::bernoulli_distribution draw(keep);
  auto mask = std::make_shared<std::vector<double>>(x.numel());
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = draw(rng) ? 1.0 / keep : 0.0;
    out[i] = xv[i] * (*mask)[i];
  }
  return detail::make_result(x.shape(), std::move(out), {x}, [mask](detail::Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (*mask)[i];
  });
}

// Gathers rows of table [N, m] at indices; an index of -1 yields a zero row
// (padding). Output shape is index_shape + [m].
inline Tensor embedding(const Tensor& table, std::span<const std::int64_t> indices,
                        Shape index_shape) {
  if (table.rank() != 2) throw ShapeError("embedding: table must be 2-D, got " + shape_string(table.shape()));
  if (shape_numel(index_shape) != indices.size()) {
    throw ShapeError("embedding: index shape " + shape_string(index_shape) + " does not hold " +
                     std::to_string(indices.size()) + " indices");
  }
  const std::size_t rows = table.dim(0);
  const std::size_t width = table.dim(1);
  std::vector<std::int64_t> idx(indices.begin(), indices.end());
  const auto tv = table.values();
  std::vector<double> out(idx.size() * width, 0.0);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0) continue;
    if (static_cast<std::size_t>(idx[i]) >= rows) {
      throw std::out_of_range("embedding: index " + std::to_string(idx[i]) +
                              " out of range for table with " + std::to_string(rows) + " rows");
    }
    std::copy_n(tv.data() + idx[i] * width, width, out.data() + i * width);
  }
  Shape out_shape = std::move(index_shape);
  out_shape.push_back(width);
  return detail::make_result(std::move(out_shape), std::move(out), {table},
                             [idx = std::move(idx), width](detail::Node& self) {
                               auto& g = self.parents[0]->ensure_grad();
                               for (std::size_t i = 0; i < idx.size(); ++i) {
                                 if (idx[i] < 0) continue;
                                 double* dst = g.data() + idx[i] * width;
                                 const double* src = self.grad.data() + i * width;
                                 for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
                               }
                             });
}

// scores: [B, T, T]; entries with key index > query index become -inf.
inline Tensor causal_mask(const Tensor& scores) {
  if (scores.rank() != 3 || scores.dim(1) != scores.dim(2)) {
    throw ShapeError("causal_mask: expected [B,T,T], got " + shape_string(scores.shape()));
  }
  const std::size_t batch = scores.dim(0);
  const std::size_t t = scores.dim(1);
  const auto sv = scores.values();
  std::vector<double> out(sv.begin(), sv.end());
  const double neg_inf = -std::numeric_limits<double>::infinity();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t q = 0; q < t; ++q) {
      for (std::size_t k = q + 1; k < t; ++k) out[(b * t + q) * t + k] = neg_inf;
    }
  }
  return detail::make_result(scores.shape(), std::move(out), {scores},
                             [batch, t](detail::Node& self) {
                               auto& g = self.parents[0]->ensure_grad();
                               for (std::size_t b = 0; b < batch; ++b) {
                                 for (std::size_t q = 0; q < t; ++q) {
                                   for (std::size_t k = 0; k <= q; ++k) {
                                     const std::size_t i = (b * t + q) * t + k;
                                     g[i] += self.grad[i];
                                   }
                                 }
                               }
                             });
}

// Mean cross-entropy over rows of logits [..., C] whose target is not
// ignore_label. Returns 0 (with zero gradient) when every row is ignored.
inline Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> targets,
                            std::int64_t ignore_label = -1) {
  if (logits.rank() < 1) throw ShapeError("cross_entropy: scalar logits");
  const std::size_t classes = logits.shape().back();
  const std::size_t rows = logits.numel() / classes;
  if (targets.size() != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(rows) + " logit rows but " +
                     std::to_string(targets.size()) + " targets");
  }
  const auto lv = logits.values();
  auto probs = std::make_shared<std::vector<double>>(lv.size(), 0.0);
  std::vector<std::int64_t> tgt(targets.begin(), targets.end());
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (tgt[r] == ignore_label) continue;
    if (tgt[r] < 0 || static_cast<std::size_t>(tgt[r]) >= classes) {
      throw std::out_of_range("cross_entropy: target " + std::to_string(tgt[r]) +
                              " outside [0, " + std::to_string(classes) + ")");
    }
    const double* x = lv.data() + r * classes;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < classes; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    double* p = probs->data() + r * classes;
    for (std::size_t j = 0; j < classes; ++j) z += (p[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < classes; ++j) p[j] /= z;
    total += std::log(z) + mx - x[tgt[r]];
    ++counted;
  }
  const double denom = counted ? static_cast<double>(counted) : 1.0;
  return detail::make_result(
      Shape{}, {total / denom}, {logits},
      [probs, tgt = std::move(tgt), rows, classes, denom, ignore_label](detail::Node& self) {
        auto& g = self.parents[0]->ensure_grad();
        const double up = self.grad[0] / denom;
        for (std::size_t r = 0; r < rows; ++r) {
          if (tgt[r] == ignore_label) continue;
          const double* p = probs->data() + r * classes;
          double* gr = g.data() + r * classes;
          for (std::size_t j = 0; j < classes; ++j) gr[j] += up * p[j];
          gr[tgt[r]] -= up;
        }
      });
}

// [B, T, H*d] -> [B*H, T, d]
inline Tensor split_heads(const Tensor& x, std::size_t heads) {
  if (x.rank() != 3 || heads == 0 || x.dim(2) % heads != 0) {
    throw ShapeError("split_heads: cannot split " + shape_string(x.shape()) + " into " +
                     std::to_string(heads) + " heads");
  }
  if (heads == 1) return x;
  const std::size_t b = x.dim(0), t = x.dim(1), m = x.dim(2), d = m / heads;
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  auto src_index = [=](std::size_t bi, std::size_t h, std::size_t ti, std::size_t j) {
    return (bi * t + ti) * m + h * d + j;
  };
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t ti = 0; ti < t; ++ti)
        for (std::size_t j = 0; j < d; ++j)
          out[((bi * heads + h) * t + ti) * d + j] = xv[src_index(bi, h, ti, j)];
  return detail::make_result(Shape{b * heads, t, d}, std::move(out), {x},
                             [=](detail::Node& self) {
                               auto& g = self.parents[0]->ensure_grad();
                               for (std::size_t bi = 0; bi < b; ++bi)
                                 for (std::size_t h = 0; h < heads; ++h)
                                   for (std::size_t ti = 0; ti < t; ++ti)
                                     for (std::size_t j = 0; j < d; ++j)
                                       g[src_index(bi, h, ti, j)] +=
                                           self.grad[((bi * heads + h) * t + ti) * d + j];
                             });
}

// [B*H, T, d] -> [B, T, H*d]
inline Tensor merge_heads(const Tensor& x, std::size_t heads) {
  if (x.rank() != 3 || heads == 0 || x.dim(0) % heads != 0) {
    throw ShapeError("merge_heads: cannot merge " + shape_string(x.shape()) + " over " +
                     std::to_string(heads) + " heads");
  }
  if (heads == 1) return x;
  const std::size_t b = x.dim(0) / heads, t = x.dim(1), d = x.dim(2), m = d * heads;
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  auto dst_index = [=](std::size_t bi, std::size_t h, std::size_t ti, std::size_t j) {
    return (bi * t + ti) * m + h * d + j;
  };
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t ti = 0; ti < t; ++ti)
        for (std::size_t j = 0; j < d; ++j)
          out[dst_index(bi, h, ti, j)] = xv[((bi * heads + h) * t + ti) * d + j];
  return detail::make_result(Shape{b, t, m}, std::move(out), {x}, [=](detail::Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t bi = 0; bi < b; ++bi)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t ti = 0; ti < t; ++ti)
          for (std::size_t j = 0; j < d; ++j)
            g[((bi * heads + h) * t + ti) * d + j] += self.grad[dst_index(bi, h, ti, j)];
  });
}

// x: [B, T, m]; picks position positions[b] of each sequence -> [B, m]
inline Tensor take_positions(const Tensor& x, std::span<const std::size_t> positions) {
  if (x.rank() != 3 || positions.size() != x.dim(0)) {
    throw ShapeError("take_positions: " + std::to_string(positions.size()) +
                     " positions for tensor " + shape_string(x.shape()));
  }
  const std::size_t b = x.dim(0), t = x.dim(1), m = x.dim(2);
  std::vector<std::size_t> pos(positions.begin(), positions.end());
  const auto xv = x.values();
  std::vector<double> out(b * m);
  for (std::size_t i = 0; i < b; ++i) {
    if (pos[i] >= t) throw std::out_of_range("take_positions: position beyond sequence length");
    std::copy_n(xv.data() + (i * t + pos[i]) * m, m, out.data() + i * m);
  }
  return detail::make_result(Shape{b, m}, std::move(out), {x},
                             [pos = std::move(pos), t, m](detail::Node& self) {
                               auto& g = self.parents[0]->ensure_grad();
                               for (std::size_t i = 0; i < pos.size(); ++i) {
                                 for (std::size_t j = 0; j < m; ++j) {
                                   g[(i * t + pos[i]) * m + j] += self.grad[i * m + j];
                                 }
                               }
                             });
}

// Rows of x viewed as [N, m] (m = last axis) -> [rows.size(), m].
inline Tensor select_rows(const Tensor& x, std::span<const std::size_t> rows) {
  if (x.rank() < 1) throw ShapeError("select_rows: scalar input");
  const std::size_t m = x.shape().back();
  const std::size_t n = m == 0 ? 0 : x.numel() / m;
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  const auto xv = x.values();
  std::vector<double> out(idx.size() * m);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= n) throw std::out_of_range("select_rows: row index beyond tensor");
    std::copy_n(xv.data() + idx[i] * m, m, out.data() + i * m);
  }
  Shape shape{idx.size(), m};
  return detail::make_result(std::move(shape), std::move(out), {x},
                             [idx = std::move(idx), m](detail::Node& self) {
                               auto& g = self.parents[0]->ensure_grad();
                               for (std::size_t i = 0; i < idx.size(); ++i) {
                                 for (std::size_t j = 0; j < m; ++j) g[idx[i] * m + j] += self.grad[i * m + j];
                               }
                             });
}

}  // namespace coldrec::numerics
