#include "catrinet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "catrinet/errors.hpp"

namespace catrinet::ops {
namespace {

Graph& graph_of(Var a) {
  if (!a.valid()) throw ContractError("operation on an unbound Var");
  return a.graph();
}

void require_same_graph(Var a, Var b) {
  if (&graph_of(a) != &graph_of(b)) throw ContractError("operands live on different graphs");
}

void require_same_shape(const char* op, Var a, Var b) {
  if (a.value().size() != b.value().size() || a.rows() != b.rows()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.value().shape()) + " vs " +
                         shape_str(b.value().shape()));
  }
}

Shape matrix_shape(std::size_t r, std::size_t c) { return {r, c}; }

template <typename F, typename D>
Var unary(const char* op, Var x, F f, D df_from_xy) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return graph_of(x).record(
      op, std::move(out), {x},
      [x, df_from_xy](Graph& g, const Tensor& y, std::span<const double> gy) {
        const Tensor& xv = x.value();
        auto dx = g.grad_buffer(x.id());
        for (std::size_t i = 0; i < xv.size(); ++i) dx[i] += gy[i] * df_from_xy(xv[i], y[i]);
      });
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k) {
    throw DimensionError("matmul: inner extents differ, " + shape_str(av.shape()) +
                         " x " + shape_str(bv.shape()));
  }
  Tensor out(matrix_shape(m, n));
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = &out[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double aik = av[i * k + p];
      if (aik == 0.0) continue;
      const double* brow = &bv[p * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  return graph_of(a).record(
      "matmul", std::move(out), {a, b},
      [a, b, m, k, n](Graph& g, const Tensor&, std::span<const double> gy) {
        const Tensor& av = a.value();
        const Tensor& bv = b.value();
        if (g.requires_grad(a)) {
          auto da = g.grad_buffer(a.id());
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              double acc = 0.0;
              const double* brow = &bv[p * n];
              const double* grow = &gy[i * n];
              for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
              da[i * k + p] += acc;
            }
          }
        }
        if (g.requires_grad(b)) {
          auto db = g.grad_buffer(b.id());
          for (std::size_t i = 0; i < m; ++i) {
            const double* grow = &gy[i * n];
            for (std::size_t p = 0; p < k; ++p) {
              const double aik = av[i * k + p];
              if (aik == 0.0) continue;
              double* drow = &db[p * n];
              for (std::size_t j = 0; j < n; ++j) drow[j] += aik * grow[j];
            }
          }
        }
      });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out(matrix_shape(n, m));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return graph_of(a).record("transpose", std::move(out), {a},
                            [a, m, n](Graph& g, const Tensor&, std::span<const double> gy) {
                              auto da = g.grad_buffer(a.id());
                              for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < n; ++j)
                                  da[i * n + j] += gy[j * m + i];
                            });
}

Var add(Var a, Var b) {
  require_same_graph(a, b);
  require_same_shape("add", a, b);
  Tensor out = a.value();
  out.set_requires_grad(false);
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return graph_of(a).record("add", std::move(out), {a, b},
                            [a, b](Graph& g, const Tensor&, std::span<const double> gy) {
                              for (Var p : {a, b}) {
                                if (!g.requires_grad(p)) continue;
                                auto dp = g.grad_buffer(p.id());
                                for (std::size_t i = 0; i < gy.size(); ++i) dp[i] += gy[i];
                              }
                            });
}

Var sub(Var a, Var b) {
  require_same_graph(a, b);
  require_same_shape("sub", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return graph_of(a).record("sub", std::move(out), {a, b},
                            [a, b](Graph& g, const Tensor&, std::span<const double> gy) {
                              if (g.requires_grad(a)) {
                                auto da = g.grad_buffer(a.id());
                                for (std::size_t i = 0; i < gy.size(); ++i) da[i] += gy[i];
                              }
                              if (g.requires_grad(b)) {
                                auto db = g.grad_buffer(b.id());
                                for (std::size_t i = 0; i < gy.size(); ++i) db[i] -= gy[i];
                              }
                            });
}

Var mul(Var a, Var b) {
  require_same_graph(a, b);
  require_same_shape("mul", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return graph_of(a).record("mul", std::move(out), {a, b},
                            [a, b](Graph& g, const Tensor&, std::span<const double> gy) {
                              const Tensor& av = a.value();
                              const Tensor& bv = b.value();
                              if (g.requires_grad(a)) {
                                auto da = g.grad_buffer(a.id());
                                for (std::size_t i = 0; i < gy.size(); ++i) da[i] += gy[i] * bv[i];
                              }
                              if (g.requires_grad(b)) {
                                auto db = g.grad_buffer(b.id());
                                for (std::size_t i = 0; i < gy.size(); ++i) db[i] += gy[i] * av[i];
                              }
                            });
}

Var add_row(Var a, Var bias) {
  require_same_graph(a, bias);
  const Tensor& av = a.value();
  const Tensor& bv = bias.value();
  const std::size_t m = av.rows(), n = av.cols();
  if (bv.size() != n) {
    throw DimensionError("add_row: bias " + shape_str(bv.shape()) + " vs rows of width " +
                         std::to_string(n));
  }
  Tensor out(matrix_shape(m, n));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i * n + j] + bv[j];
  return graph_of(a).record("add_row", std::move(out), {a, bias},
                            [a, bias, m, n](Graph& g, const Tensor&, std::span<const double> gy) {
                              if (g.requires_grad(a)) {
                                auto da = g.grad_buffer(a.id());
                                for (std::size_t i = 0; i < gy.size(); ++i) da[i] += gy[i];
                              }
                              if (g.requires_grad(bias)) {
                                auto db = g.grad_buffer(bias.id());
                                for (std::size_t i = 0; i < m; ++i)
                                  for (std::size_t j = 0; j < n; ++j) db[j] += gy[i * n + j];
                              }
                            });
}

Var scale(Var a, double factor) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  return graph_of(a).record("scale", std::move(out), {a},
                            [a, factor](Graph& g, const Tensor&, std::span<const double> gy) {
                              auto da = g.grad_buffer(a.id());
                              for (std::size_t i = 0; i < gy.size(); ++i) da[i] += gy[i] * factor;
                            });
}

Var mul_scalar(Var a, Var s) {
  require_same_graph(a, s);
  if (s.value().size() != 1) {
    throw DimensionError("mul_scalar: factor must hold one element, got " +
                         shape_str(s.value().shape()));
  }
  const Tensor& av = a.value();
  const double sv = s.value()[0];
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * sv;
  return graph_of(a).record("mul_scalar", std::move(out), {a, s},
                            [a, s](Graph& g, const Tensor&, std::span<const double> gy) {
                              const Tensor& av = a.value();
                              const double sv = s.value()[0];
                              if (g.requires_grad(a)) {
                                auto da = g.grad_buffer(a.id());
                                for (std::size_t i = 0; i < gy.size(); ++i) da[i] += gy[i] * sv;
                              }
                              if (g.requires_grad(s)) {
                                double acc = 0.0;
                                for (std::size_t i = 0; i < gy.size(); ++i) acc += gy[i] * av[i];
                                g.grad_buffer(s.id())[0] += acc;
                              }
                            });
}

Var add_constant(Var a, const Tensor& c) {
  const Tensor& av = a.value();
  if (c.size() != av.size()) {
    throw DimensionError("add_constant: shape mismatch " + shape_str(av.shape()) + " vs " +
                         shape_str(c.shape()));
  }
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + c[i];
  return graph_of(a).record("add_constant", std::move(out), {a},
                            [a](Graph& g, const Tensor&, std::span<const double> gy) {
                              auto da = g.grad_buffer(a.id());
                              for (std::size_t i = 0; i < gy.size(); ++i) da[i] += gy[i];
                            });
}

Var sigmoid(Var x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var x) {
  return unary(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var activation(Var x, Activation kind) {
  switch (kind) {
    case Activation::sigmoid:
      return sigmoid(x);
    case Activation::tanh:
      return tanh(x);
    case Activation::relu:
      return relu(x);
  }
  throw ContractError("unknown activation");
}

Var gelu(Var x) {
  constexpr double c = 0.044715;
  const double k = std::sqrt(2.0 / std::numbers::pi);
  return unary(
      "gelu", x,
      [k](double v) { return 0.5 * v * (1.0 + std::tanh(k * (v + c * v * v * v))); },
      [k](double v, double) {
        const double t = std::tanh(k * (v + c * v * v * v));
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * k * (1.0 + 3.0 * c * v * v);
      });
}

Var log_sigmoid(Var x) {
  return unary(
      "log_sigmoid", x,
      [](double v) { return std::min(v, 0.0) - std::log1p(std::exp(-std::abs(v))); },
      [](double v, double) {
        // d/dx log sigmoid(x) = sigmoid(-x)
        if (v >= 0) {
          const double e = std::exp(-v);
          return e / (1.0 + e);
        }
        return 1.0 / (1.0 + std::exp(v));
      });
}

Var softmax(Var x, std::size_t axis) {
  const Tensor& xv = x.value();
  const Shape& shape = xv.shape();
  if (axis >= std::max<std::size_t>(shape.size(), 1)) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " +
                         shape_str(shape));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  const std::size_t n = shape.empty() ? 1 : shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];

  Tensor out(shape);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = xv[base];
      for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xv[base + j * inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(xv[base + j * inner] - mx);
        out[base + j * inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= z;
    }
  }
  return graph_of(x).record(
      "softmax", std::move(out), {x},
      [x, outer, n, inner](Graph& g, const Tensor& y, std::span<const double> gy) {
        auto dx = g.grad_buffer(x.id());
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * n * inner + in;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += gy[base + j * inner] * y[base + j * inner];
            for (std::size_t j = 0; j < n; ++j) {
              const std::size_t idx = base + j * inner;
              dx[idx] += y[idx] * (gy[idx] - dot);
            }
          }
        }
      });
}

Var log_softmax(Var x) {
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor out(matrix_shape(m, n));
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = &xv[i * n];
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = row[j] - lse;
  }
  return graph_of(x).record("log_softmax", std::move(out), {x},
                            [x, m, n](Graph& g, const Tensor& y, std::span<const double> gy) {
                              auto dx = g.grad_buffer(x.id());
                              for (std::size_t i = 0; i < m; ++i) {
                                double s = 0.0;
                                for (std::size_t j = 0; j < n; ++j) s += gy[i * n + j];
                                for (std::size_t j = 0; j < n; ++j)
                                  dx[i * n + j] += gy[i * n + j] - std::exp(y[i * n + j]) * s;
                              }
                            });
}

Var sum(Var x) {
  const Tensor& xv = x.value();
  double s = 0.0;
  for (double v : xv.values()) s += v;
  return graph_of(x).record("sum", Tensor::scalar(s), {x},
                            [x](Graph& g, const Tensor&, std::span<const double> gy) {
                              auto dx = g.grad_buffer(x.id());
                              for (double& d : dx) d += gy[0];
                            });
}

Var mean(Var x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw EmptyInputError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var mean_rows(Var x) {
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (m == 0) throw EmptyInputError("mean_rows of an empty tensor");
  Tensor out(matrix_shape(1, n));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += xv[i * n + j];
  for (std::size_t j = 0; j < n; ++j) out[j] /= static_cast<double>(m);
  return graph_of(x).record("mean_rows", std::move(out), {x},
                            [x, m, n](Graph& g, const Tensor&, std::span<const double> gy) {
                              auto dx = g.grad_buffer(x.id());
                              const double inv = 1.0 / static_cast<double>(m);
                              for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < n; ++j) dx[i * n + j] += gy[j] * inv;
                            });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw EmptyInputError("concat_cols of nothing");
  const std::size_t m = parts[0].rows();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (Var p : parts) {
    require_same_graph(parts[0], p);
    if (p.rows() != m) throw DimensionError("concat_cols: row counts differ");
    widths.push_back(p.cols());
    total += p.cols();
  }
  Tensor out(matrix_shape(m, total));
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j) out[i * total + off + j] = pv[i * widths[k] + j];
    off += widths[k];
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return graph_of(parts[0]).record(
      "concat_cols", std::move(out), ps,
      [ps, widths, m, total](Graph& g, const Tensor&, std::span<const double> gy) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < ps.size(); ++k) {
          if (g.requires_grad(ps[k])) {
            auto dp = g.grad_buffer(ps[k].id());
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t j = 0; j < widths[k]; ++j)
                dp[i * widths[k] + j] += gy[i * total + off + j];
          }
          off += widths[k];
        }
      });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw EmptyInputError("concat_rows of nothing");
  const std::size_t n = parts[0].cols();
  std::size_t rows = 0;
  for (Var p : parts) {
    require_same_graph(parts[0], p);
    if (p.cols() != n) throw DimensionError("concat_rows: column counts differ");
    rows += p.rows();
  }
  Tensor out(matrix_shape(rows, n));
  std::size_t off = 0;
  for (Var p : parts) {
    const auto src = p.value().values();
    std::copy(src.begin(), src.end(), out.values().begin() + static_cast<std::ptrdiff_t>(off));
    off += src.size();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return graph_of(parts[0]).record("concat_rows", std::move(out), ps,
                                   [ps](Graph& g, const Tensor&, std::span<const double> gy) {
                                     std::size_t off = 0;
                                     for (Var p : ps) {
                                       const std::size_t sz = p.value().size();
                                       if (g.requires_grad(p)) {
                                         auto dp = g.grad_buffer(p.id());
                                         for (std::size_t i = 0; i < sz; ++i) dp[i] += gy[off + i];
                                       }
                                       off += sz;
                                     }
                                   });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  if (begin + count > n) throw DimensionError("slice_cols out of range");
  Tensor out(matrix_shape(m, count));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = av[i * n + begin + j];
  return graph_of(a).record("slice_cols", std::move(out), {a},
                            [a, m, n, begin, count](Graph& g, const Tensor&,
                                                    std::span<const double> gy) {
                              auto da = g.grad_buffer(a.id());
                              for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < count; ++j)
                                  da[i * n + begin + j] += gy[i * count + j];
                            });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  if (begin + count > m) throw DimensionError("slice_rows out of range");
  Tensor out(matrix_shape(count, n));
  std::copy_n(av.values().begin() + static_cast<std::ptrdiff_t>(begin * n), count * n,
              out.values().begin());
  return graph_of(a).record("slice_rows", std::move(out), {a},
                            [a, n, begin](Graph& g, const Tensor&, std::span<const double> gy) {
                              auto da = g.grad_buffer(a.id());
                              for (std::size_t i = 0; i < gy.size(); ++i) da[begin * n + i] += gy[i];
                            });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value();
  out.set_requires_grad(false);
  out.reshape(std::move(shape));
  return graph_of(a).record("reshape", std::move(out), {a},
                            [a](Graph& g, const Tensor&, std::span<const double> gy) {
                              auto da = g.grad_buffer(a.id());
                              for (std::size_t i = 0; i < gy.size(); ++i) da[i] += gy[i];
                            });
}

Var gather(Var a, std::span<const std::size_t> indices, Shape out_shape) {
  const Tensor& av = a.value();
  if (shape_size(out_shape) != indices.size()) {
    throw DimensionError("gather: " + std::to_string(indices.size()) +
                         " indices for output shape " + shape_str(out_shape));
  }
  Tensor out(std::move(out_shape));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= av.size()) throw DimensionError("gather: index out of range");
    out[i] = av[indices[i]];
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return graph_of(a).record("gather", std::move(out), {a},
                            [a, idx](Graph& g, const Tensor&, std::span<const double> gy) {
                              auto da = g.grad_buffer(a.id());
                              for (std::size_t i = 0; i < idx.size(); ++i) da[idx[i]] += gy[i];
                            });
}

Var rows_of(Var table, std::span<const std::size_t> ids) {
  const std::size_t n = table.cols();
  const std::size_t m = table.rows();
  std::vector<std::size_t> idx;
  idx.reserve(ids.size() * n);
  for (std::size_t id : ids) {
    if (id >= m) {
      throw DimensionError("rows_of: row " + std::to_string(id) + " of " + std::to_string(m));
    }
    for (std::size_t j = 0; j < n; ++j) idx.push_back(id * n + j);
  }
  return gather(table, idx, {ids.size(), n});
}

Var element(Var a, std::size_t flat_index) {
  const std::size_t idx[1] = {flat_index};
  return gather(a, idx, {1, 1});
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (gamma.value().size() != n || beta.value().size() != n) {
    throw DimensionError("layer_norm: affine parameters must have width " + std::to_string(n));
  }
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  Tensor out(matrix_shape(m, n));
  std::vector<double> xhat(m * n), inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xv[i * n + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = xv[i * n + j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (xv[i * n + j] - mu) * inv_std[i];
      out[i * n + j] = xhat[i * n + j] * gv[j] + bv[j];
    }
  }
  return graph_of(x).record(
      "layer_norm", std::move(out), {x, gamma, beta},
      [x, gamma, beta, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Graph& g, const Tensor&, std::span<const double> gy) {
        const Tensor& gv = gamma.value();
        if (g.requires_grad(gamma)) {
          auto dg = g.grad_buffer(gamma.id());
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) dg[j] += gy[i * n + j] * xhat[i * n + j];
        }
        if (g.requires_grad(beta)) {
          auto db = g.grad_buffer(beta.id());
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) db[j] += gy[i * n + j];
        }
        if (g.requires_grad(x)) {
          auto dx = g.grad_buffer(x.id());
          const double inv_n = 1.0 / static_cast<double>(n);
          for (std::size_t i = 0; i < m; ++i) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double d = gy[i * n + j] * gv[j];
              mean_d += d;
              mean_dx += d * xhat[i * n + j];
            }
            mean_d *= inv_n;
            mean_dx *= inv_n;
            for (std::size_t j = 0; j < n; ++j) {
              const double d = gy[i * n + j] * gv[j];
              dx[i * n + j] += inv_std[i] * (d - mean_d - xhat[i * n + j] * mean_dx);
            }
          }
        }
      });
}

}  // namespace catrinet::ops
