#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "catrinet/graph.hpp"

/// Differentiable operations over Graph nodes. Everything is 2-D (rows x
/// cols) unless stated; rank-1 tensors act as a single row. Broadcasting is
/// limited to a 1 x n row added to every row and to scalar factors.
namespace catrinet::ops {

enum class Activation { sigmoid, tanh, relu };

Var matmul(Var a, Var b);
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// a[m x n] + bias[1 x n] on every row.
Var add_row(Var a, Var bias);
Var scale(Var a, double factor);
/// a * s where s holds exactly one element.
Var mul_scalar(Var a, Var s);
/// Adds a constant tensor of the same shape (no gradient to `c`).
Var add_constant(Var a, const Tensor& c);

Var activation(Var x, Activation kind);
Var sigmoid(Var x);
Var tanh(Var x);
Var relu(Var x);
/// tanh approximation of GELU.
Var gelu(Var x);
/// log(sigmoid(x)) evaluated without overflow.
Var log_sigmoid(Var x);

/// Softmax along `axis` of a tensor of any rank, with max subtraction.
Var softmax(Var x, std::size_t axis);
/// Row-wise log-softmax over the last axis.
Var log_softmax(Var x);

/// Sum of all elements, 1 x 1.
Var sum(Var x);
Var mean(Var x);
/// Column means, 1 x cols.
Var mean_rows(Var x);

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var reshape(Var a, Shape shape);

/// out.flat[i] = a.flat[indices[i]]; backward scatter-adds.
Var gather(Var a, std::span<const std::size_t> indices, Shape out_shape);
/// Rows of `table` selected by `ids`, |ids| x cols.
Var rows_of(Var table, std::span<const std::size_t> ids);
/// Single element as a 1 x 1 node.
Var element(Var a, std::size_t flat_index);

/// Row-wise layer normalisation with affine gamma/beta rows.
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

}  // namespace catrinet::ops
