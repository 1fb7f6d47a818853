#pragma once

#include <vector>

#include "mcwes/rng.hpp"
#include "mcwes/tensor.hpp"

// Differentiable ops over Tensor. Every op validates shapes up front
// (std::invalid_argument on mismatch), computes its value eagerly and attaches
// a backward closure. Elementwise grads use subgradient 0 at kinks (|x| and
// relu at 0).
namespace mcwes::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// c * a + d, elementwise with constant coefficients.
Tensor affine(const Tensor& a, double c, double d);
inline Tensor scale(const Tensor& a, double c) { return affine(a, c, 0.0); }

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Temporal cross-correlation with zero same-padding. x is T x Cin, kernel is
/// w x Cin x Cout (w odd), bias is Cout; result is T x Cout.
Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias);

Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);

/// Softmax along `axis` of a 1D or 2D tensor, max-subtracted for stability.
Tensor softmax(const Tensor& a, int axis);
/// log(softmax(a)) for a 1D tensor, computed without forming softmax first.
Tensor log_softmax(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean_all(const Tensor& a);
/// Mean of a 2D tensor along `axis` (0 collapses rows -> size cols vector).
Tensor mean_over_axis(const Tensor& a, int axis);
Tensor l1_norm(const Tensor& a);
/// Mean squared error between same-shape tensors.
Tensor mse(const Tensor& a, const Tensor& b);

/// m is T x D, v is D: every row of m scaled elementwise by v.
Tensor mul_rowvec(const Tensor& m, const Tensor& v);
/// m is T x D, v is T: row t of m scaled by v[t].
Tensor mul_colvec(const Tensor& m, const Tensor& v);

Tensor concat_cols(const Tensor& a, const Tensor& b);
/// Columns [c0, c1) of a 2D tensor.
Tensor slice_cols(const Tensor& a, int c0, int c1);
/// Column j of a 2D tensor as a 1D tensor.
Tensor column(const Tensor& a, int j);
/// Rows of a 2D tensor at the given indices (repeats allowed).
Tensor gather_rows(const Tensor& a, const std::vector<int>& indices);
Tensor reshape(const Tensor& a, std::vector<int> new_shape);

/// Per-column maximum of a 2D tensor; gradient goes to the first argmax.
Tensor max_over_axis0(const Tensor& a);

/// Indices of the k largest values of a 1D tensor, value-descending,
/// ties broken by lower index. k must not exceed the length.
std::vector<int> topk_indices(const Tensor& x, int k);
std::vector<int> topk_indices(const std::vector<double>& x, int k);

/// Per-column mean of the top-k entries of S (T x C); ks gives k per column.
/// Gradient flows only through the selected entries (1/k each).
Tensor topk_col_mean(const Tensor& s, const std::vector<int>& ks);

/// Element i of a 1D tensor as a scalar (shape {1}) tensor.
Tensor element(const Tensor& a, int i);
/// Scalar tensor replicated into a 1D tensor of length n.
Tensor broadcast_scalar(const Tensor& s, int n);

/// Same values, gradient flow severed.
Tensor stop_gradient(const Tensor& a);

/// Inverted dropout: keeps with probability 1-rate and scales by 1/(1-rate).
Tensor dropout(const Tensor& a, double rate, Rng& rng);

/// a / s where s is a scalar tensor; gradient reaches both.
Tensor div_by_scalar(const Tensor& a, const Tensor& s);

inline Tensor dot(const Tensor& a, const Tensor& b) { return sum(mul(a, b)); }

}  // namespace mcwes::ops
