#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kmarl/numkit/matrix.hpp"
#include "kmarl/numkit/tape.hpp"

// Differentiable primitives. Every function computes its value eagerly and
// records a backward rule on the tape of its first operand.

namespace kmarl::num {

enum class Activation { relu, elu, abs, identity };
enum class Reduce { mean_rows, max_rows, sum_all };

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

// ga += g * b^T
inline void add_g_bt(const Matrix& g, const Matrix& b, Matrix& ga) {
  const std::size_t n = g.rows(), m = g.cols(), k = b.rows();
  for (std::size_t i = 0; i < n; ++i) {
    const double* grow = g.data() + i * m;
    double* out = ga.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b.data() + p * m;
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += grow[j] * brow[j];
      out[p] += s;
    }
  }
}

// gb += a^T * g
inline void add_at_g(const Matrix& a, const Matrix& g, Matrix& gb) {
  const std::size_t n = a.rows(), k = a.cols(), m = g.cols();
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a.data() + i * k;
    const double* grow = g.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* out = gb.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) out[j] += av * grow[j];
    }
  }
}

inline double activate(double x, Activation kind) {
  switch (kind) {
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::elu: return x > 0.0 ? x : std::expm1(x);
    case Activation::abs: return std::abs(x);
    case Activation::identity: return x;
  }
  return x;
}

inline double activate_grad(double x, Activation kind) {
  switch (kind) {
    case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::elu: return x > 0.0 ? 1.0 : std::exp(x);
    case Activation::abs: return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  Tape& t = *a.tape();
  Matrix out = multiply(a.value(), b.value());
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    if (a.needs_grad()) detail::add_g_bt(g, b.value(), t.grad(a));
    if (b.needs_grad()) detail::add_at_g(a.value(), g, t.grad(b));
  });
}

inline Var add(Var a, Var b) {
  detail::require(a.value().same_shape(b.value()),
                  "add: shape mismatch " + a.value().shape() + " vs " + b.value().shape());
  Matrix out = a.value();
  out += b.value();
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    if (a.needs_grad()) t.grad(a) += g;
    if (b.needs_grad()) t.grad(b) += g;
  });
}

inline Var sub(Var a, Var b) {
  detail::require(a.value().same_shape(b.value()),
                  "sub: shape mismatch " + a.value().shape() + " vs " + b.value().shape());
  Matrix out = a.value();
  const Matrix& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    if (a.needs_grad()) t.grad(a) += g;
    if (b.needs_grad()) {
      Matrix& gb = t.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

/// Elementwise product.
inline Var mul(Var a, Var b) {
  detail::require(a.value().same_shape(b.value()),
                  "mul: shape mismatch " + a.value().shape() + " vs " + b.value().shape());
  Matrix out = a.value();
  const Matrix& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    if (a.needs_grad()) {
      Matrix& ga = t.grad(a);
      const Matrix& bv = b.value();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (b.needs_grad()) {
      Matrix& gb = t.grad(b);
      const Matrix& av = a.value();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

inline Var scale(Var a, double c) {
  Matrix out = a.value();
  for (double& v : out.values()) v *= c;
  return a.tape()->record(std::move(out), {a}, [a, c](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

/// x (n x c) plus a 1 x c bias added to every row.
inline Var add_row(Var x, Var bias) {
  const Matrix& xv = x.value();
  const Matrix& bv = bias.value();
  detail::require(bv.rows() == 1 && bv.cols() == xv.cols(),
                  "add_row: bias " + bv.shape() + " does not fit " + xv.shape());
  Matrix out = xv;
  const std::size_t c = xv.cols();
  for (std::size_t i = 0; i < xv.rows(); ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) += bv[j];
  return x.tape()->record(std::move(out), {x, bias}, [x, bias](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    if (x.needs_grad()) t.grad(x) += g;
    if (bias.needs_grad()) {
      Matrix& gb = t.grad(bias);
      const std::size_t c = g.cols();
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < c; ++j) gb[j] += g(i, j);
    }
  });
}

inline Var activation(Var x, Activation kind) {
  Matrix out = x.value();
  for (double& v : out.values()) v = detail::activate(v, kind);
  return x.tape()->record(std::move(out), {x}, [x, kind](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    const Matrix& xv = x.value();
    Matrix& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * detail::activate_grad(xv[i], kind);
  });
}

/// Collapses consecutive groups of `group_rows` rows into one row each, by
/// mean or max. Max routes the gradient to the first argmax in each group.
inline Var segment_reduce(Var x, std::size_t group_rows, Reduce kind) {
  const Matrix& xv = x.value();
  if (xv.empty()) throw std::invalid_argument("reduce: empty input");
  detail::require(group_rows > 0 && xv.rows() % group_rows == 0,
                  "segment_reduce: " + std::to_string(xv.rows()) + " rows not divisible by " +
                      std::to_string(group_rows));
  if (kind == Reduce::sum_all) throw std::invalid_argument("segment_reduce: sum_all not supported");
  const std::size_t groups = xv.rows() / group_rows;
  const std::size_t c = xv.cols();
  Matrix out(groups, c);
  std::vector<std::size_t> argmax;
  if (kind == Reduce::mean_rows) {
    const double inv = 1.0 / static_cast<double>(group_rows);
    for (std::size_t g = 0; g < groups; ++g) {
      for (std::size_t r = 0; r < group_rows; ++r)
        for (std::size_t j = 0; j < c; ++j) out(g, j) += xv(g * group_rows + r, j);
      for (std::size_t j = 0; j < c; ++j) out(g, j) *= inv;
    }
  } else {
    argmax.assign(groups * c, 0);
    for (std::size_t g = 0; g < groups; ++g) {
      for (std::size_t j = 0; j < c; ++j) {
        std::size_t best = g * group_rows;
        for (std::size_t r = 1; r < group_rows; ++r) {
          if (xv(g * group_rows + r, j) > xv(best, j)) best = g * group_rows + r;
        }
        argmax[g * c + j] = best;
        out(g, j) = xv(best, j);
      }
    }
  }
  return x.tape()->record(
      std::move(out), {x},
      [x, group_rows, kind, argmax = std::move(argmax)](Tape& t, Var self) {
        const Matrix& g = t.grad(self);
        Matrix& gx = t.grad(x);
        const std::size_t c = g.cols();
        if (kind == Reduce::mean_rows) {
          const double inv = 1.0 / static_cast<double>(group_rows);
          for (std::size_t grp = 0; grp < g.rows(); ++grp)
            for (std::size_t r = 0; r < group_rows; ++r)
              for (std::size_t j = 0; j < c; ++j) gx(grp * group_rows + r, j) += g(grp, j) * inv;
        } else {
          for (std::size_t grp = 0; grp < g.rows(); ++grp)
            for (std::size_t j = 0; j < c; ++j) gx(argmax[grp * c + j], j) += g(grp, j);
        }
      });
}

inline Var reduce(Var x, Reduce kind) {
  const Matrix& xv = x.value();
  if (xv.empty()) throw std::invalid_argument("reduce: empty input");
  if (kind != Reduce::sum_all) return segment_reduce(x, xv.rows(), kind);
  double s = 0.0;
  for (double v : xv.values()) s += v;
  return x.tape()->record(Matrix(1, 1, s), {x}, [x](Tape& t, Var self) {
    const double g = t.grad(self)[0];
    Matrix& gx = t.grad(x);
    for (double& v : gx.values()) v += g;
  });
}

/// Block-diagonal product: `blocks` stacks G square n x n matrices
/// vertically ((G*n) x n), `h` stacks G node-feature blocks ((G*n) x d).
/// Row block g of the result is blocks_g * h_g.
inline Var block_matmul(Var blocks, Var h) {
  const Matrix& av = blocks.value();
  const Matrix& hv = h.value();
  const std::size_t n = av.cols();
  detail::require(n > 0 && av.rows() % n == 0 && av.rows() == hv.rows(),
                  "block_matmul: shape mismatch " + av.shape() + " vs " + hv.shape());
  const std::size_t groups = av.rows() / n;
  const std::size_t d = hv.cols();
  Matrix out(hv.rows(), d);
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t base = g * n;
    for (std::size_t i = 0; i < n; ++i) {
      double* orow = out.data() + (base + i) * d;
      for (std::size_t k = 0; k < n; ++k) {
        const double a = av(base + i, k);
        if (a == 0.0) continue;
        const double* hrow = hv.data() + (base + k) * d;
        for (std::size_t j = 0; j < d; ++j) orow[j] += a * hrow[j];
      }
    }
  }
  return blocks.tape()->record(std::move(out), {blocks, h}, [blocks, h](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    const Matrix& av = blocks.value();
    const Matrix& hv = h.value();
    const std::size_t n = av.cols(), d = hv.cols(), groups = av.rows() / n;
    if (h.needs_grad()) {
      Matrix& gh = t.grad(h);
      for (std::size_t grp = 0; grp < groups; ++grp) {
        const std::size_t base = grp * n;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t k = 0; k < n; ++k) {
            const double a = av(base + i, k);
            if (a == 0.0) continue;
            for (std::size_t j = 0; j < d; ++j) gh(base + k, j) += a * g(base + i, j);
          }
      }
    }
    if (blocks.needs_grad()) {
      Matrix& ga = t.grad(blocks);
      for (std::size_t grp = 0; grp < groups; ++grp) {
        const std::size_t base = grp * n;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t k = 0; k < n; ++k) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += g(base + i, j) * hv(base + k, j);
            ga(base + i, k) += s;
          }
      }
    }
  });
}

/// Picks x(r, index[r]) from every row; result is rows x 1.
inline Var pick(Var x, std::span<const std::size_t> index) {
  const Matrix& xv = x.value();
  detail::require(index.size() == xv.rows(),
                  "pick: " + std::to_string(index.size()) + " indices for " + xv.shape());
  Matrix out(xv.rows(), 1);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    detail::require(index[r] < xv.cols(), "pick: index out of range");
    out[r] = xv(r, index[r]);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return x.tape()->record(std::move(out), {x}, [x, idx = std::move(idx)](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    Matrix& gx = t.grad(x);
    for (std::size_t r = 0; r < idx.size(); ++r) gx(r, idx[r]) += g[r];
  });
}

inline Var reshape(Var x, std::size_t rows, std::size_t cols) {
  Matrix out = x.value().reshaped(rows, cols);
  return x.tape()->record(std::move(out), {x}, [x](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    Matrix& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

/// Per-row vector-matrix product. q is B x n, w is B x (n*m) holding a
/// row-major n x m matrix per row; result row b is q_b * W_b (B x m).
inline Var bilinear(Var q, Var w) {
  const Matrix& qv = q.value();
  const Matrix& wv = w.value();
  const std::size_t batch = qv.rows(), n = qv.cols();
  detail::require(n > 0 && wv.rows() == batch && wv.cols() % n == 0,
                  "bilinear: shape mismatch " + qv.shape() + " vs " + wv.shape());
  const std::size_t m = wv.cols() / n;
  Matrix out(batch, m);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < n; ++i) {
      const double qi = qv(b, i);
      for (std::size_t j = 0; j < m; ++j) out(b, j) += qi * wv(b, i * m + j);
    }
  return q.tape()->record(std::move(out), {q, w}, [q, w, n, m](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    const Matrix& qv = q.value();
    const Matrix& wv = w.value();
    const std::size_t batch = g.rows();
    if (q.needs_grad()) {
      Matrix& gq = t.grad(q);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < n; ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < m; ++j) s += g(b, j) * wv(b, i * m + j);
          gq(b, i) += s;
        }
    }
    if (w.needs_grad()) {
      Matrix& gw = t.grad(w);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) gw(b, i * m + j) += qv(b, i) * g(b, j);
    }
  });
}

/// Repeats the columns of x `times` times: [x x ... x].
inline Var tile_cols(Var x, std::size_t times) {
  const Matrix& xv = x.value();
  const std::size_t r = xv.rows(), c = xv.cols();
  Matrix out(r, c * times);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t k = 0; k < times; ++k)
      for (std::size_t j = 0; j < c; ++j) out(i, k * c + j) = xv(i, j);
  return x.tape()->record(std::move(out), {x}, [x, times](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    Matrix& gx = t.grad(x);
    const std::size_t c = gx.cols();
    for (std::size_t i = 0; i < gx.rows(); ++i)
      for (std::size_t k = 0; k < times; ++k)
        for (std::size_t j = 0; j < c; ++j) gx(i, j) += g(i, k * c + j);
  });
}

/// Mean of squared differences between two equally shaped values.
inline Var mse(Var prediction, Var target) {
  Var diff = sub(prediction, target);
  Var sq = mul(diff, diff);
  return scale(reduce(sq, Reduce::sum_all), 1.0 / static_cast<double>(sq.value().size()));
}

}  // namespace kmarl::num
