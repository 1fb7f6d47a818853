#include "mcwes/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>

namespace mcwes::ops {

using detail::Node;

namespace {

// ---------------------------------------------------------------------------
// Raw matmul kernels. Accumulating (C +=) so backward reuses them directly.
// Loop orders chosen so the inner loop runs over contiguous memory.
// ---------------------------------------------------------------------------

// C(MxN) += A(MxK) * B(KxN)
void mm_nn(const double* __restrict a, const double* __restrict b,
           double* __restrict c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ar = a + static_cast<size_t>(i) * k;
    double* cr = c + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = ar[p];
      const double* br = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) cr[j] += av * br[j];
    }
  }
}

// C(MxN) += A(MxK) * B^T, B given as (NxK)
void mm_nt(const double* __restrict a, const double* __restrict b,
           double* __restrict c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ar = a + static_cast<size_t>(i) * k;
    double* cr = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* br = b + static_cast<size_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += ar[p] * br[p];
      cr[j] += acc;
    }
  }
}

// C(KxN) += A^T * B, A given as (MxK), B as (MxN)
void mm_tn(const double* __restrict a, const double* __restrict b,
           double* __restrict c, int m, int k, int n) {
  for (int p = 0; p < k; ++p) {
    double* cr = c + static_cast<size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const double av = a[static_cast<size_t>(i) * k + p];
      const double* br = b + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) cr[j] += av * br[j];
    }
  }
}

Tensor new_tensor(std::vector<int> shape, std::initializer_list<Tensor> parents) {
  auto n = std::make_shared<Node>();
  n->data.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
  n->shape = std::move(shape);
  bool rg = false;
  for (const Tensor& p : parents) {
    rg = rg || p.requires_grad();
    n->parents.push_back(p.node());
  }
  n->requires_grad = rg;
  return Tensor::wrap(std::move(n));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

void check_rank(const Tensor& a, int r, const char* op) {
  if (a.rank() != r)
    throw std::invalid_argument(std::string(op) + ": wrong rank");
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = new_tensor(a.shape(), {a, b});
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  auto pa = a.node(), pb = b.node();
  out.node()->backward_fn = [pa, pb](Node& self) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i];
    }
  };
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = new_tensor(a.shape(), {a, b});
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
  auto pa = a.node(), pb = b.node();
  out.node()->backward_fn = [pa, pb](Node& self) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
    }
  };
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = new_tensor(a.shape(), {a, b});
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  auto pa = a.node(), pb = b.node();
  out.node()->backward_fn = [pa, pb](Node& self) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i)
        pa->grad[i] += self.grad[i] * pb->data[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i)
        pb->grad[i] += self.grad[i] * pa->data[i];
    }
  };
  return out;
}

Tensor affine(const Tensor& a, double c, double d) {
  Tensor out = new_tensor(a.shape(), {a});
  const auto& av = a.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = c * av[i] + d;
  auto pa = a.node();
  out.node()->backward_fn = [pa, c](Node& self) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += c * self.grad[i];
  };
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_rank(a, 2, "matmul");
  check_rank(b, 2, "matmul");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) throw std::invalid_argument("matmul: inner dimensions disagree");
  Tensor out = new_tensor({m, n}, {a, b});
  mm_nn(a.data().data(), b.data().data(), out.data().data(), m, k, n);
  auto pa = a.node(), pb = b.node();
  out.node()->backward_fn = [pa, pb, m, k, n](Node& self) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      // dA(mxk) += dC(mxn) * B^T, B stored (kxn)
      mm_nt(self.grad.data(), pb->data.data(), pa->grad.data(), m, n, k);
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      // dB(kxn) += A^T * dC
      mm_tn(pa->data.data(), self.grad.data(), pb->grad.data(), m, k, n);
    }
  };
  return out;
}

Tensor transpose(const Tensor& a) {
  check_rank(a, 2, "transpose");
  const int r = a.dim(0), c = a.dim(1);
  Tensor out = new_tensor({c, r}, {a});
  const auto& av = a.data();
  auto& ov = out.data();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      ov[static_cast<size_t>(j) * r + i] = av[static_cast<size_t>(i) * c + j];
  auto pa = a.node();
  out.node()->backward_fn = [pa, r, c](Node& self) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    for (int j = 0; j < c; ++j)
      for (int i = 0; i < r; ++i)
        pa->grad[static_cast<size_t>(i) * c + j] +=
            self.grad[static_cast<size_t>(j) * r + i];
  };
  return out;
}

Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  check_rank(x, 2, "conv1d");
  check_rank(kernel, 3, "conv1d");
  check_rank(bias, 1, "conv1d");
  const int t_len = x.dim(0), cin = x.dim(1);
  const int w = kernel.dim(0), cout = kernel.dim(2);
  if (w % 2 == 0) throw std::invalid_argument("conv1d: kernel width must be odd");
  if (kernel.dim(1) != cin) throw std::invalid_argument("conv1d: channel mismatch");
  if (bias.dim(0) != cout) throw std::invalid_argument("conv1d: bias size mismatch");
  const int pad = (w - 1) / 2;

  Tensor out = new_tensor({t_len, cout}, {x, kernel, bias});
  const double* xd = x.data().data();
  const double* kd = kernel.data().data();
  const double* bd = bias.data().data();
  double* od = out.data().data();
  for (int t = 0; t < t_len; ++t) {
    double* orow = od + static_cast<size_t>(t) * cout;
    for (int j = 0; j < cout; ++j) orow[j] = bd[j];
    for (int u = 0; u < w; ++u) {
      const int xr = t + u - pad;
      if (xr < 0 || xr >= t_len) continue;
      const double* xrow = xd + static_cast<size_t>(xr) * cin;
      const double* ku = kd + static_cast<size_t>(u) * cin * cout;
      for (int ci = 0; ci < cin; ++ci) {
        const double xv = xrow[ci];
        const double* krow = ku + static_cast<size_t>(ci) * cout;
        for (int j = 0; j < cout; ++j) orow[j] += xv * krow[j];
      }
    }
  }

  auto px = x.node(), pk = kernel.node(), pb = bias.node();
  out.node()->backward_fn = [px, pk, pb, t_len, cin, w, cout, pad](Node& self) {
    const double* gy = self.grad.data();
    if (px->requires_grad) {
      px->ensure_grad();
      double* gx = px->grad.data();
      const double* kd = pk->data.data();
      for (int t = 0; t < t_len; ++t) {
        const double* grow = gy + static_cast<size_t>(t) * cout;
        for (int u = 0; u < w; ++u) {
          const int xr = t + u - pad;
          if (xr < 0 || xr >= t_len) continue;
          double* gxrow = gx + static_cast<size_t>(xr) * cin;
          const double* ku = kd + static_cast<size_t>(u) * cin * cout;
          for (int ci = 0; ci < cin; ++ci) {
            const double* krow = ku + static_cast<size_t>(ci) * cout;
            double acc = 0.0;
            for (int j = 0; j < cout; ++j) acc += grow[j] * krow[j];
            gxrow[ci] += acc;
          }
        }
      }
    }
    if (pk->requires_grad) {
      pk->ensure_grad();
      double* gk = pk->grad.data();
      const double* xd = px->data.data();
      for (int u = 0; u < w; ++u) {
        double* gku = gk + static_cast<size_t>(u) * cin * cout;
        for (int t = 0; t < t_len; ++t) {
          const int xr = t + u - pad;
          if (xr < 0 || xr >= t_len) continue;
          const double* grow = gy + static_cast<size_t>(t) * cout;
          const double* xrow = xd + static_cast<size_t>(xr) * cin;
          for (int ci = 0; ci < cin; ++ci) {
            const double xv = xrow[ci];
            double* gkrow = gku + static_cast<size_t>(ci) * cout;
            for (int j = 0; j < cout; ++j) gkrow[j] += xv * grow[j];
          }
        }
      }
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      double* gb = pb->grad.data();
      for (int t = 0; t < t_len; ++t) {
        const double* grow = gy + static_cast<size_t>(t) * cout;
        for (int j = 0; j < cout; ++j) gb[j] += grow[j];
      }
    }
  };
  return out;
}

Tensor sigmoid(const Tensor& a) {
  Tensor out = new_tensor(a.shape(), {a});
  const auto& av = a.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) {
    const double x = av[i];
    ov[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                     : std::exp(x) / (1.0 + std::exp(x));
  }
  auto pa = a.node();
  out.node()->backward_fn = [pa](Node& self) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) {
      const double y = self.data[i];
      pa->grad[i] += self.grad[i] * y * (1.0 - y);
    }
  };
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out = new_tensor(a.shape(), {a});
  const auto& av = a.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] > 0.0 ? av[i] : 0.0;
  auto pa = a.node();
  out.node()->backward_fn = [pa](Node& self) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      if (pa->data[i] > 0.0) pa->grad[i] += self.grad[i];
  };
  return out;
}

Tensor log(const Tensor& a) {
  Tensor out = new_tensor(a.shape(), {a});
  const auto& av = a.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = std::log(av[i]);
  auto pa = a.node();
  out.node()->backward_fn = [pa](Node& self) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      pa->grad[i] += self.grad[i] / pa->data[i];
  };
  return out;
}

Tensor exp(const Tensor& a) {
  Tensor out = new_tensor(a.shape(), {a});
  const auto& av = a.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = std::exp(av[i]);
  auto pa = a.node();
  out.node()->backward_fn = [pa](Node& self) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      pa->grad[i] += self.grad[i] * self.data[i];
  };
  return out;
}

namespace {

// softmax over one contiguous-with-stride slice
void softmax_slice(const double* x, double* y, int n, int stride) {
  double mx = x[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, x[static_cast<size_t>(i) * stride]);
  double denom = 0.0;
  for (int i = 0; i < n; ++i) {
    const double e = std::exp(x[static_cast<size_t>(i) * stride] - mx);
    y[static_cast<size_t>(i) * stride] = e;
    denom += e;
  }
  for (int i = 0; i < n; ++i) y[static_cast<size_t>(i) * stride] /= denom;
}

void softmax_slice_backward(const double* y, const double* gy, double* gx, int n,
                            int stride) {
  double dotv = 0.0;
  for (int i = 0; i < n; ++i) {
    const size_t o = static_cast<size_t>(i) * stride;
    dotv += gy[o] * y[o];
  }
  for (int i = 0; i < n; ++i) {
    const size_t o = static_cast<size_t>(i) * stride;
    gx[o] += y[o] * (gy[o] - dotv);
  }
}

}  // namespace

Tensor softmax(const Tensor& a, int axis) {
  if (a.rank() != 1 && a.rank() != 2)
    throw std::invalid_argument("softmax: rank must be 1 or 2");
  if (axis < 0 || axis >= a.rank())
    throw std::invalid_argument("softmax: axis out of range");
  Tensor out = new_tensor(a.shape(), {a});
  const double* xd = a.data().data();
  double* yd = out.data().data();
  int n_slices, len, stride, slice_step;
  if (a.rank() == 1) {
    n_slices = 1; len = a.dim(0); stride = 1; slice_step = 0;
  } else if (axis == 1) {
    n_slices = a.dim(0); len = a.dim(1); stride = 1; slice_step = a.dim(1);
  } else {
    n_slices = a.dim(1); len = a.dim(0); stride = a.dim(1); slice_step = 1;
  }
  for (int s = 0; s < n_slices; ++s)
    softmax_slice(xd + static_cast<size_t>(s) * slice_step,
                  yd + static_cast<size_t>(s) * slice_step, len, stride);
  auto pa = a.node();
  out.node()->backward_fn = [pa, n_slices, len, stride, slice_step](Node& self) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    for (int s = 0; s < n_slices; ++s)
      softmax_slice_backward(self.data.data() + static_cast<size_t>(s) * slice_step,
                             self.grad.data() + static_cast<size_t>(s) * slice_step,
                             pa->grad.data() + static_cast<size_t>(s) * slice_step,
                             len, stride);
  };
  return out;
}

Tensor log_softmax(const Tensor& a) {
  check_rank(a, 1, "log_softmax");
  const int n = a.dim(0);
  Tensor out = new_tensor(a.shape(), {a});
  const auto& av = a.data();
  auto& ov = out.data();
  double mx = av[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, av[i]);
  double denom = 0.0;
  for (int i = 0; i < n; ++i) denom += std::exp(av[i] - mx);
  const double lse = mx + std::log(denom);
  for (int i = 0; i < n; ++i) ov[i] = av[i] - lse;
  auto pa = a.node();
  out.node()->backward_fn = [pa, n](Node& self) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    double gsum = 0.0;
    for (int i = 0; i < n; ++i) gsum += self.grad[i];
    for (int i = 0; i < n; ++i)
      pa->grad[i] += self.grad[i] - std::exp(self.data[i]) * gsum;
  };
  return out;
}

Tensor sum(const Tensor& a) {
  Tensor out = new_tensor({1}, {a});
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  out.data()[0] = acc;
  auto pa = a.node();
  out.node()->backward_fn = [pa](Node& self) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    const double g = self.grad[0];
    for (double& gv : pa->grad) gv += g;
  };
  return out;
}

Tensor mean_all(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.numel());
  return scale(sum(a), inv);
}

Tensor mean_over_axis(const Tensor& a, int axis) {
  check_rank(a, 2, "mean_over_axis");
  if (axis != 0 && axis != 1)
    throw std::invalid_argument("mean_over_axis: axis out of range");
  const int r = a.dim(0), c = a.dim(1);
  const int out_len = axis == 0 ? c : r;
  Tensor out = new_tensor({out_len}, {a});
  const auto& av = a.data();
  auto& ov = out.data();
  if (axis == 0) {
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) ov[j] += av[static_cast<size_t>(i) * c + j];
    for (int j = 0; j < c; ++j) ov[j] /= r;
  } else {
    for (int i = 0; i < r; ++i) {
      double acc = 0.0;
      for (int j = 0; j < c; ++j) acc += av[static_cast<size_t>(i) * c + j];
      ov[i] = acc / c;
    }
  }
  auto pa = a.node();
  out.node()->backward_fn = [pa, r, c, axis](Node& self) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    if (axis == 0) {
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          pa->grad[static_cast<size_t>(i) * c + j] += self.grad[j] / r;
    } else {
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          pa->grad[static_cast<size_t>(i) * c + j] += self.grad[i] / c;
    }
  };
  return out;
}

Tensor l1_norm(const Tensor& a) {
  Tensor out = new_tensor({1}, {a});
  double acc = 0.0;
  for (double v : a.data()) acc += std::fabs(v);
  out.data()[0] = acc;
  auto pa = a.node();
  out.node()->backward_fn = [pa](Node& self) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    const double g = self.grad[0];
    for (size_t i = 0; i < pa->data.size(); ++i) {
      const double x = pa->data[i];
      if (x > 0.0)
        pa->grad[i] += g;
      else if (x < 0.0)
        pa->grad[i] -= g;
    }
  };
  return out;
}

Tensor mse(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mse");
  Tensor d = sub(a, b);
  return mean_all(mul(d, d));
}

Tensor mul_rowvec(const Tensor& m, const Tensor& v) {
  check_rank(m, 2, "mul_rowvec");
  check_rank(v, 1, "mul_rowvec");
  const int r = m.dim(0), c = m.dim(1);
  if (v.dim(0) != c) throw std::invalid_argument("mul_rowvec: vector length mismatch");
  Tensor out = new_tensor(m.shape(), {m, v});
  const auto& mv = m.data();
  const auto& vv = v.data();
  auto& ov = out.data();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      ov[static_cast<size_t>(i) * c + j] = mv[static_cast<size_t>(i) * c + j] * vv[j];
  auto pm = m.node(), pv = v.node();
  out.node()->backward_fn = [pm, pv, r, c](Node& self) {
    if (pm->requires_grad) {
      pm->ensure_grad();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          pm->grad[static_cast<size_t>(i) * c + j] +=
              self.grad[static_cast<size_t>(i) * c + j] * pv->data[j];
    }
    if (pv->requires_grad) {
      pv->ensure_grad();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          pv->grad[j] += self.grad[static_cast<size_t>(i) * c + j] *
                         pm->data[static_cast<size_t>(i) * c + j];
    }
  };
  return out;
}

Tensor mul_colvec(const Tensor& m, const Tensor& v) {
  check_rank(m, 2, "mul_colvec");
  check_rank(v, 1, "mul_colvec");
  const int r = m.dim(0), c = m.dim(1);
  if (v.dim(0) != r) throw std::invalid_argument("mul_colvec: vector length mismatch");
  Tensor out = new_tensor(m.shape(), {m, v});
  const auto& mv = m.data();
  const auto& vv = v.data();
  auto& ov = out.data();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      ov[static_cast<size_t>(i) * c + j] = mv[static_cast<size_t>(i) * c + j] * vv[i];
  auto pm = m.node(), pv = v.node();
  out.node()->backward_fn = [pm, pv, r, c](Node& self) {
    if (pm->requires_grad) {
      pm->ensure_grad();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          pm->grad[static_cast<size_t>(i) * c + j] +=
              self.grad[static_cast<size_t>(i) * c + j] * pv->data[i];
    }
    if (pv->requires_grad) {
      pv->ensure_grad();
      for (int i = 0; i < r; ++i) {
        double acc = 0.0;
        for (int j = 0; j < c; ++j)
          acc += self.grad[static_cast<size_t>(i) * c + j] *
                 pm->data[static_cast<size_t>(i) * c + j];
        pv->grad[i] += acc;
      }
    }
  };
  return out;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  check_rank(a, 2, "concat_cols");
  check_rank(b, 2, "concat_cols");
  if (a.dim(0) != b.dim(0))
    throw std::invalid_argument("concat_cols: row count mismatch");
  const int r = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  Tensor out = new_tensor({r, ca + cb}, {a, b});
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& ov = out.data();
  for (int i = 0; i < r; ++i) {
    std::copy_n(av.begin() + static_cast<size_t>(i) * ca, ca,
                ov.begin() + static_cast<size_t>(i) * (ca + cb));
    std::copy_n(bv.begin() + static_cast<size_t>(i) * cb, cb,
                ov.begin() + static_cast<size_t>(i) * (ca + cb) + ca);
  }
  auto pa = a.node(), pb = b.node();
  out.node()->backward_fn = [pa, pb, r, ca, cb](Node& self) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < ca; ++j)
          pa->grad[static_cast<size_t>(i) * ca + j] +=
              self.grad[static_cast<size_t>(i) * (ca + cb) + j];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < cb; ++j)
          pb->grad[static_cast<size_t>(i) * cb + j] +=
              self.grad[static_cast<size_t>(i) * (ca + cb) + ca + j];
    }
  };
  return out;
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
  check_rank(a, 2, "slice_cols");
  const int r = a.dim(0), c = a.dim(1);
  if (c0 < 0 || c1 > c || c0 >= c1)
    throw std::invalid_argument("slice_cols: bad column range");
  const int w = c1 - c0;
  Tensor out = new_tensor({r, w}, {a});
  const auto& av = a.data();
  auto& ov = out.data();
  for (int i = 0; i < r; ++i)
    std::copy_n(av.begin() + static_cast<size_t>(i) * c + c0, w,
                ov.begin() + static_cast<size_t>(i) * w);
  auto pa = a.node();
  out.node()->backward_fn = [pa, r, c, c0, w](Node& self) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < w; ++j)
        pa->grad[static_cast<size_t>(i) * c + c0 + j] +=
            self.grad[static_cast<size_t>(i) * w + j];
  };
  return out;
}

Tensor column(const Tensor& a, int j) {
  check_rank(a, 2, "column");
  const int r = a.dim(0), c = a.dim(1);
  if (j < 0 || j >= c) throw std::invalid_argument("column: index out of range");
  Tensor out = new_tensor({r}, {a});
  const auto& av = a.data();
  auto& ov = out.data();
  for (int i = 0; i < r; ++i) ov[i] = av[static_cast<size_t>(i) * c + j];
  auto pa = a.node();
  out.node()->backward_fn = [pa, r, c, j](Node& self) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    for (int i = 0; i < r; ++i)
      pa->grad[static_cast<size_t>(i) * c + j] += self.grad[i];
  };
  return out;
}

Tensor gather_rows(const Tensor& a, const std::vector<int>& indices) {
  check_rank(a, 2, "gather_rows");
  const int r = a.dim(0), c = a.dim(1);
  for (int idx : indices)
    if (idx < 0 || idx >= r)
      throw std::invalid_argument("gather_rows: index out of range");
  const int k = static_cast<int>(indices.size());
  Tensor out = new_tensor({k, c}, {a});
  const auto& av = a.data();
  auto& ov = out.data();
  for (int i = 0; i < k; ++i)
    std::copy_n(av.begin() + static_cast<size_t>(indices[i]) * c, c,
                ov.begin() + static_cast<size_t>(i) * c);
  auto pa = a.node();
  out.node()->backward_fn = [pa, indices, c](Node& self) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    for (size_t i = 0; i < indices.size(); ++i)
      for (int j = 0; j < c; ++j)
        pa->grad[static_cast<size_t>(indices[i]) * c + j] +=
            self.grad[i * c + j];
  };
  return out;
}

Tensor reshape(const Tensor& a, std::vector<int> new_shape) {
  if (shape_numel(new_shape) != a.numel())
    throw std::invalid_argument("reshape: element count mismatch");
  Tensor out = new_tensor(std::move(new_shape), {a});
  out.data() = a.data();
  auto pa = a.node();
  out.node()->backward_fn = [pa](Node& self) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
  };
  return out;
}

Tensor max_over_axis0(const Tensor& a) {
  check_rank(a, 2, "max_over_axis0");
  const int r = a.dim(0), c = a.dim(1);
  if (r < 1) throw std::invalid_argument("max_over_axis0: empty");
  Tensor out = new_tensor({c}, {a});
  std::vector<int> argmax(static_cast<size_t>(c), 0);
  const auto& av = a.data();
  auto& ov = out.data();
  for (int j = 0; j < c; ++j) {
    double best = av[j];
    int best_i = 0;
    for (int i = 1; i < r; ++i) {
      const double v = av[static_cast<size_t>(i) * c + j];
      if (v > best) {
        best = v;
        best_i = i;
      }
    }
    ov[j] = best;
    argmax[static_cast<size_t>(j)] = best_i;
  }
  auto pa = a.node();
  out.node()->backward_fn = [pa, argmax, c](Node& self) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    for (int j = 0; j < c; ++j)
      pa->grad[static_cast<size_t>(argmax[static_cast<size_t>(j)]) * c + j] +=
          self.grad[j];
  };
  return out;
}

std::vector<int> topk_indices(const std::vector<double>& x, int k) {
  if (k < 1 || k > static_cast<int>(x.size()))
    throw std::invalid_argument("topk_indices: k out of range");
  std::vector<int> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&x](int i, int j) {
    if (x[static_cast<size_t>(i)] != x[static_cast<size_t>(j)])
      return x[static_cast<size_t>(i)] > x[static_cast<size_t>(j)];
    return i < j;
  });
  idx.resize(static_cast<size_t>(k));
  return idx;
}

std::vector<int> topk_indices(const Tensor& x, int k) {
  if (x.rank() != 1) throw std::invalid_argument("topk_indices: rank must be 1");
  return topk_indices(x.data(), k);
}

Tensor topk_col_mean(const Tensor& s, const std::vector<int>& ks) {
  check_rank(s, 2, "topk_col_mean");
  const int t_len = s.dim(0), c = s.dim(1);
  if (static_cast<int>(ks.size()) != c)
    throw std::invalid_argument("topk_col_mean: ks size mismatch");
  for (int k : ks)
    if (k < 1 || k > t_len)
      throw std::invalid_argument("topk_col_mean: k out of range");

  Tensor out = new_tensor({c}, {s});
  const auto& sv = s.data();
  auto& ov = out.data();
  std::vector<std::vector<int>> selected(static_cast<size_t>(c));
  std::vector<double> col(static_cast<size_t>(t_len));
  for (int j = 0; j < c; ++j) {
    for (int i = 0; i < t_len; ++i) col[static_cast<size_t>(i)] = sv[static_cast<size_t>(i) * c + j];
    selected[static_cast<size_t>(j)] = topk_indices(col, ks[static_cast<size_t>(j)]);
    double acc = 0.0;
    for (int i : selected[static_cast<size_t>(j)]) acc += col[static_cast<size_t>(i)];
    ov[j] = acc / ks[static_cast<size_t>(j)];
  }
  auto ps = s.node();
  out.node()->backward_fn = [ps, selected, ks, c](Node& self) {
    if (!ps->requires_grad) return;
    ps->ensure_grad();
    for (int j = 0; j < c; ++j) {
      const double g = self.grad[j] / ks[static_cast<size_t>(j)];
      for (int i : selected[static_cast<size_t>(j)])
        ps->grad[static_cast<size_t>(i) * c + j] += g;
    }
  };
  return out;
}

Tensor element(const Tensor& a, int i) {
  check_rank(a, 1, "element");
  if (i < 0 || i >= a.dim(0))
    throw std::invalid_argument("element: index out of range");
  Tensor out = new_tensor({1}, {a});
  out.data()[0] = a.data()[static_cast<size_t>(i)];
  auto pa = a.node();
  out.node()->backward_fn = [pa, i](Node& self) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    pa->grad[static_cast<size_t>(i)] += self.grad[0];
  };
  return out;
}

Tensor broadcast_scalar(const Tensor& s, int n) {
  if (s.numel() != 1) throw std::invalid_argument("broadcast_scalar: not a scalar");
  if (n < 1) throw std::invalid_argument("broadcast_scalar: bad length");
  Tensor out = new_tensor({n}, {s});
  const double sv = s.data()[0];
  for (double& v : out.data()) v = sv;
  auto ps = s.node();
  out.node()->backward_fn = [ps](Node& self) {
    if (!ps->requires_grad) return;
    ps->ensure_grad();
    double acc = 0.0;
    for (double g : self.grad) acc += g;
    ps->grad[0] += acc;
  };
  return out;
}

Tensor stop_gradient(const Tensor& a) {
  auto n = std::make_shared<Node>();
  n->shape = a.shape();
  n->data = a.data();
  n->requires_grad = false;
  return Tensor::wrap(std::move(n));
}

Tensor dropout(const Tensor& a, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("dropout: rate must be in [0, 1)");
  Tensor out = new_tensor(a.shape(), {a});
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(a.data().size());
  for (double& m : *mask) m = rng.uniform01() >= rate ? keep_scale : 0.0;
  const auto& av = a.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * (*mask)[i];
  auto pa = a.node();
  out.node()->backward_fn = [pa, mask](Node& self) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      pa->grad[i] += self.grad[i] * (*mask)[i];
  };
  return out;
}

Tensor div_by_scalar(const Tensor& a, const Tensor& s) {
  if (s.numel() != 1) throw std::invalid_argument("div_by_scalar: divisor not scalar");
  Tensor out = new_tensor(a.shape(), {a, s});
  const double sv = s.data()[0];
  const auto& av = a.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] / sv;
  auto pa = a.node(), ps = s.node();
  out.node()->backward_fn = [pa, ps, sv](Node& self) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i)
        pa->grad[i] += self.grad[i] / sv;
    }
    if (ps->requires_grad) {
      ps->ensure_grad();
      double acc = 0.0;
      for (size_t i = 0; i < self.grad.size(); ++i)
        acc += self.grad[i] * self.data[i];
      ps->grad[0] -= acc / sv;
    }
  };
  return out;
}

}  // namespace mcwes::ops
