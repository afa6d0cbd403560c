#include "mimatch/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace mimatch {

namespace {

std::atomic<uint64_t> g_seq{1};

using RMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RMat>;
using MapC = Eigen::Map<const RMat>;

void ensure_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw std::runtime_error(std::string("non-finite value produced by op '") + op + "'");
    }
  }
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                              shape_str(b));
}

std::shared_ptr<detail::TapeNode> make_node(Shape shape, std::vector<double> value,
                                            std::vector<std::shared_ptr<detail::TapeNode>> parents,
                                            const char* op) {
  ensure_finite(value, op);
  auto n = std::make_shared<detail::TapeNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents) {
    if (p->requires_grad) n->requires_grad = true;
  }
  if (n->requires_grad) n->grad.assign(n->value.size(), 0.0);
  n->seq = g_seq.fetch_add(1);
  return n;
}

// last-axis geometry: rows = numel / last extent
int64_t lead_rows(const Shape& s) {
  int64_t r = 1;
  for (size_t i = 0; i + 1 < s.size(); ++i) r *= s[i];
  return r;
}

}  // namespace

Tensor wrap_node(std::shared_ptr<detail::TapeNode> n) { return Tensor(std::move(n)); }

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int e : s) n *= e;
  return n;
}

Tensor Tensor::leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  for (int e : shape) {
    if (e <= 0) throw std::invalid_argument("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != static_cast<int64_t>(values.size())) {
    throw std::invalid_argument("value count " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(shape));
  }
  ensure_finite(values, "leaf");
  auto n = std::make_shared<detail::TapeNode>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  n->leaf = true;
  if (requires_grad) n->grad.assign(n->value.size(), 0.0);
  n->seq = g_seq.fetch_add(1);
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) { return leaf({1}, {v}, requires_grad); }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)), 0.0);
  return leaf(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::full(Shape shape, double x, bool requires_grad) {
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)), x);
  return leaf(std::move(shape), std::move(v), requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw std::logic_error("use of undefined tensor");
  return node_->shape;
}

int Tensor::rows() const {
  if (rank() != 2) throw std::logic_error("rows() on tensor of shape " + shape_str(shape()));
  return shape()[0];
}

int Tensor::cols() const {
  if (rank() != 2) throw std::logic_error("cols() on tensor of shape " + shape_str(shape()));
  return shape()[1];
}

int64_t Tensor::numel() const { return shape_numel(shape()); }

const std::vector<double>& Tensor::values() const {
  if (!node_) throw std::logic_error("use of undefined tensor");
  return node_->value;
}

double Tensor::scalar_value() const {
  if (numel() != 1) throw std::logic_error("scalar_value() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
bool Tensor::is_leaf() const { return node_ && node_->leaf; }

const std::vector<double>& Tensor::grad() const {
  if (!requires_grad()) throw std::logic_error("grad() on a tensor without requires_grad");
  return node_->grad;
}

void Tensor::zero_grad() const {
  if (requires_grad()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::set_values(const std::vector<double>& v) const {
  if (!is_leaf()) throw std::logic_error("set_values on a non-leaf tensor");
  if (v.size() != node_->value.size()) {
    throw std::invalid_argument("set_values: count " + std::to_string(v.size()) +
                                " does not match shape " + shape_str(node_->shape));
  }
  ensure_finite(v, "set_values");
  node_->value = v;
}

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) shape_error("matmul", a.shape(), b.shape());
  const int m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(static_cast<size_t>(m) * n);
  MapC ma(a.values().data(), m, k);
  MapC mb(b.values().data(), k, n);
  MapM mo(out.data(), m, n);
  mo.noalias() = ma * mb;
  auto node = make_node({m, n}, std::move(out), {a.node(), b.node()}, "matmul");
  if (node->requires_grad) {
    node->backprop = [m, k, n](detail::TapeNode& self) {
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      MapC g(self.grad.data(), m, n);
      if (pa->requires_grad) {
        MapC mb2(pb->value.data(), k, n);
        MapM ga(pa->grad.data(), m, k);
        ga.noalias() += g * mb2.transpose();
      }
      if (pb->requires_grad) {
        MapC ma2(pa->value.data(), m, k);
        MapM gb(pb->grad.data(), k, n);
        gb.noalias() += ma2.transpose() * g;
      }
    };
  }
  return wrap_node(node);
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw std::invalid_argument("transpose: rank-2 required, got " + shape_str(a.shape()));
  const int m = a.rows(), n = a.cols();
  std::vector<double> out(static_cast<size_t>(m) * n);
  MapC ma(a.values().data(), m, n);
  MapM mo(out.data(), n, m);
  mo = ma.transpose();
  auto node = make_node({n, m}, std::move(out), {a.node()}, "transpose");
  if (node->requires_grad) {
    node->backprop = [m, n](detail::TapeNode& self) {
      auto& p = self.parents[0];
      if (!p->requires_grad) return;
      MapC g(self.grad.data(), n, m);
      MapM gp(p->grad.data(), m, n);
      gp.noalias() += g.transpose();
    };
  }
  return wrap_node(node);
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("add", a.shape(), b.shape());
  std::vector<double> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  auto node = make_node(a.shape(), std::move(out), {a.node(), b.node()}, "add");
  if (node->requires_grad) {
    node->backprop = [](detail::TapeNode& self) {
      for (auto& p : self.parents) {
        if (!p->requires_grad) continue;
        for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
      }
    };
  }
  return wrap_node(node);
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, affine(b, -1.0, 0.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  std::vector<double> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  auto node = make_node(a.shape(), std::move(out), {a.node(), b.node()}, "mul");
  if (node->requires_grad) {
    node->backprop = [](detail::TapeNode& self) {
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      if (pa->requires_grad) {
        for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * pb->value[i];
      }
      if (pb->requires_grad) {
        for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i] * pa->value[i];
      }
    };
  }
  return wrap_node(node);
}

Tensor affine(const Tensor& x, double scale, double shift) {
  std::vector<double> out(x.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = scale * x.values()[i] + shift;
  auto node = make_node(x.shape(), std::move(out), {x.node()}, "affine");
  if (node->requires_grad) {
    node->backprop = [scale](detail::TapeNode& self) {
      auto& p = self.parents[0];
      if (!p->requires_grad) return;
      for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += scale * self.grad[i];
    };
  }
  return wrap_node(node);
}

Tensor add_rowvec(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 1 || a.cols() != b.shape()[0]) shape_error("add_rowvec", a.shape(), b.shape());
  const int m = a.rows(), n = a.cols();
  std::vector<double> out(a.values().size());
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < n; ++c) out[static_cast<size_t>(r) * n + c] = a.values()[static_cast<size_t>(r) * n + c] + b.values()[c];
  }
  auto node = make_node(a.shape(), std::move(out), {a.node(), b.node()}, "add_rowvec");
  if (node->requires_grad) {
    node->backprop = [m, n](detail::TapeNode& self) {
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      if (pa->requires_grad) {
        for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
      }
      if (pb->requires_grad) {
        for (int r = 0; r < m; ++r) {
          for (int c = 0; c < n; ++c) pb->grad[c] += self.grad[static_cast<size_t>(r) * n + c];
        }
      }
    };
  }
  return wrap_node(node);
}

Tensor concat_last(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  bool ok = sa.size() == sb.size() && !sa.empty();
  for (size_t i = 0; ok && i + 1 < sa.size(); ++i) ok = sa[i] == sb[i];
  if (!ok) shape_error("concat_last", sa, sb);
  const int64_t rows = lead_rows(sa);
  const int ca = sa.back(), cb = sb.back();
  Shape so = sa;
  so.back() = ca + cb;
  std::vector<double> out(static_cast<size_t>(rows) * (ca + cb));
  for (int64_t r = 0; r < rows; ++r) {
    std::copy_n(a.values().data() + r * ca, ca, out.data() + r * (ca + cb));
    std::copy_n(b.values().data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
  }
  auto node = make_node(std::move(so), std::move(out), {a.node(), b.node()}, "concat_last");
  if (node->requires_grad) {
    node->backprop = [rows, ca, cb](detail::TapeNode& self) {
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      for (int64_t r = 0; r < rows; ++r) {
        const double* g = self.grad.data() + r * (ca + cb);
        if (pa->requires_grad) {
          double* ga = pa->grad.data() + r * ca;
          for (int c = 0; c < ca; ++c) ga[c] += g[c];
        }
        if (pb->requires_grad) {
          double* gb = pb->grad.data() + r * cb;
          for (int c = 0; c < cb; ++c) gb[c] += g[ca + c];
        }
      }
    };
  }
  return wrap_node(node);
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] > 0.0 ? x.values()[i] : 0.0;
  auto node = make_node(x.shape(), std::move(out), {x.node()}, "relu");
  if (node->requires_grad) {
    node->backprop = [](detail::TapeNode& self) {
      auto& p = self.parents[0];
      if (!p->requires_grad) return;
      for (size_t i = 0; i < self.grad.size(); ++i) {
        if (p->value[i] > 0.0) p->grad[i] += self.grad[i];
      }
    };
  }
  return wrap_node(node);
}

namespace {

// Shared softmax kernel over the rows of an [m,n] view. mask may be null.
Tensor softmax_rows_impl(const Tensor& x, const std::vector<uint8_t>* mask, const char* op) {
  if (x.rank() < 1) throw std::invalid_argument(std::string(op) + ": rank >= 1 required");
  const int n = x.shape().back();
  const int64_t m = lead_rows(x.shape());
  if (mask && static_cast<int64_t>(mask->size()) != m * n) {
    throw std::invalid_argument(std::string(op) + ": mask size " + std::to_string(mask->size()) +
                                " does not match tensor " + shape_str(x.shape()));
  }
  std::vector<double> out(x.values().size(), 0.0);
  for (int64_t r = 0; r < m; ++r) {
    const double* xi = x.values().data() + r * n;
    const uint8_t* mi = mask ? mask->data() + r * n : nullptr;
    double hi = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < n; ++c) {
      if (!mi || mi[c]) hi = std::max(hi, xi[c]);
    }
    if (!std::isfinite(hi)) throw std::runtime_error(std::string(op) + ": fully masked row " + std::to_string(r));
    double z = 0.0;
    double* oi = out.data() + r * n;
    for (int c = 0; c < n; ++c) {
      if (!mi || mi[c]) {
        oi[c] = std::exp(xi[c] - hi);
        z += oi[c];
      }
    }
    for (int c = 0; c < n; ++c) oi[c] /= z;
  }
  auto node = make_node(x.shape(), std::move(out), {x.node()}, op);
  if (node->requires_grad) {
    node->backprop = [m, n](detail::TapeNode& self) {
      auto& p = self.parents[0];
      if (!p->requires_grad) return;
      for (int64_t r = 0; r < m; ++r) {
        const double* y = self.value.data() + r * n;
        const double* g = self.grad.data() + r * n;
        double dot = 0.0;
        for (int c = 0; c < n; ++c) dot += y[c] * g[c];
        double* gp = p->grad.data() + r * n;
        for (int c = 0; c < n; ++c) gp[c] += y[c] * (g[c] - dot);
      }
    };
  }
  return wrap_node(node);
}

}  // namespace

Tensor row_softmax(const Tensor& x) { return softmax_rows_impl(x, nullptr, "row_softmax"); }

Tensor masked_row_softmax(const Tensor& x, const std::vector<uint8_t>& mask) {
  return softmax_rows_impl(x, &mask, "masked_row_softmax");
}

Tensor col_softmax(const Tensor& x) {
  if (x.rank() != 2) throw std::invalid_argument("col_softmax: rank-2 required, got " + shape_str(x.shape()));
  return transpose(row_softmax(transpose(x)));
}

Tensor inner(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("inner", a.shape(), b.shape());
  double acc = 0.0;
  for (size_t i = 0; i < a.values().size(); ++i) acc += a.values()[i] * b.values()[i];
  auto node = make_node({1}, {acc}, {a.node(), b.node()}, "inner");
  if (node->requires_grad) {
    node->backprop = [](detail::TapeNode& self) {
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      const double g = self.grad[0];
      if (pa->requires_grad) {
        for (size_t i = 0; i < pa->grad.size(); ++i) pa->grad[i] += g * pb->value[i];
      }
      if (pb->requires_grad) {
        for (size_t i = 0; i < pb->grad.size(); ++i) pb->grad[i] += g * pa->value[i];
      }
    };
  }
  return wrap_node(node);
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  auto node = make_node({1}, {acc}, {x.node()}, "sum");
  if (node->requires_grad) {
    node->backprop = [](detail::TapeNode& self) {
      auto& p = self.parents[0];
      if (!p->requires_grad) return;
      const double g = self.grad[0];
      for (size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += g;
    };
  }
  return wrap_node(node);
}

Tensor mean(const Tensor& x) { return affine(sum(x), 1.0 / static_cast<double>(x.numel()), 0.0); }

Tensor log(const Tensor& x) {
  std::vector<double> out(x.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::log(x.values()[i]);
  auto node = make_node(x.shape(), std::move(out), {x.node()}, "log");
  if (node->requires_grad) {
    node->backprop = [](detail::TapeNode& self) {
      auto& p = self.parents[0];
      if (!p->requires_grad) return;
      for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] / p->value[i];
    };
  }
  return wrap_node(node);
}

Tensor clamp_min(const Tensor& x, double lo) {
  std::vector<double> out(x.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::max(x.values()[i], lo);
  auto node = make_node(x.shape(), std::move(out), {x.node()}, "clamp_min");
  if (node->requires_grad) {
    node->backprop = [lo](detail::TapeNode& self) {
      auto& p = self.parents[0];
      if (!p->requires_grad) return;
      for (size_t i = 0; i < self.grad.size(); ++i) {
        if (p->value[i] > lo) p->grad[i] += self.grad[i];
      }
    };
  }
  return wrap_node(node);
}

Tensor l2_normalize_rows(const Tensor& x) {
  if (x.rank() != 2) throw std::invalid_argument("l2_normalize_rows: rank-2 required, got " + shape_str(x.shape()));
  const int m = x.rows(), n = x.cols();
  constexpr double kEps2 = 1e-24;  // inside the sqrt; keeps zero rows finite
  std::vector<double> out(x.values().size());
  std::vector<double> norms(m);
  for (int r = 0; r < m; ++r) {
    const double* xi = x.values().data() + static_cast<size_t>(r) * n;
    double s = 0.0;
    for (int c = 0; c < n; ++c) s += xi[c] * xi[c];
    norms[r] = std::sqrt(s + kEps2);
    double* oi = out.data() + static_cast<size_t>(r) * n;
    for (int c = 0; c < n; ++c) oi[c] = xi[c] / norms[r];
  }
  auto node = make_node(x.shape(), std::move(out), {x.node()}, "l2_normalize_rows");
  if (node->requires_grad) {
    node->backprop = [m, n, norms](detail::TapeNode& self) {
      auto& p = self.parents[0];
      if (!p->requires_grad) return;
      for (int r = 0; r < m; ++r) {
        const double* y = self.value.data() + static_cast<size_t>(r) * n;
        const double* g = self.grad.data() + static_cast<size_t>(r) * n;
        double dot = 0.0;
        for (int c = 0; c < n; ++c) dot += y[c] * g[c];
        double* gp = p->grad.data() + static_cast<size_t>(r) * n;
        for (int c = 0; c < n; ++c) gp[c] += (g[c] - y[c] * dot) / norms[r];
      }
    };
  }
  return wrap_node(node);
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.rank() != 2) throw std::invalid_argument("layer_norm_rows: rank-2 required, got " + shape_str(x.shape()));
  const int m = x.rows(), n = x.cols();
  if (gain.rank() != 1 || gain.shape()[0] != n) shape_error("layer_norm_rows gain", x.shape(), gain.shape());
  if (bias.rank() != 1 || bias.shape()[0] != n) shape_error("layer_norm_rows bias", x.shape(), bias.shape());
  std::vector<double> out(x.values().size());
  std::vector<double> inv_std(m), xhat(x.values().size());
  for (int r = 0; r < m; ++r) {
    const double* xi = x.values().data() + static_cast<size_t>(r) * n;
    double mu = 0.0;
    for (int c = 0; c < n; ++c) mu += xi[c];
    mu /= n;
    double var = 0.0;
    for (int c = 0; c < n; ++c) var += (xi[c] - mu) * (xi[c] - mu);
    var /= n;
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    double* hi = xhat.data() + static_cast<size_t>(r) * n;
    double* oi = out.data() + static_cast<size_t>(r) * n;
    for (int c = 0; c < n; ++c) {
      hi[c] = (xi[c] - mu) * inv_std[r];
      oi[c] = gain.values()[c] * hi[c] + bias.values()[c];
    }
  }
  auto node = make_node(x.shape(), std::move(out), {x.node(), gain.node(), bias.node()}, "layer_norm_rows");
  if (node->requires_grad) {
    node->backprop = [m, n, inv_std, xhat](detail::TapeNode& self) {
      auto& px = self.parents[0];
      auto& pg = self.parents[1];
      auto& pb = self.parents[2];
      for (int r = 0; r < m; ++r) {
        const double* g = self.grad.data() + static_cast<size_t>(r) * n;
        const double* h = xhat.data() + static_cast<size_t>(r) * n;
        if (pg->requires_grad) {
          for (int c = 0; c < n; ++c) pg->grad[c] += g[c] * h[c];
        }
        if (pb->requires_grad) {
          for (int c = 0; c < n; ++c) pb->grad[c] += g[c];
        }
        if (px->requires_grad) {
          double mean_dh = 0.0, mean_dh_h = 0.0;
          // dxhat = g * gain
          for (int c = 0; c < n; ++c) {
            const double dh = g[c] * pg->value[c];
            mean_dh += dh;
            mean_dh_h += dh * h[c];
          }
          mean_dh /= n;
          mean_dh_h /= n;
          double* gx = px->grad.data() + static_cast<size_t>(r) * n;
          for (int c = 0; c < n; ++c) {
            const double dh = g[c] * pg->value[c];
            gx[c] += (dh - mean_dh - h[c] * mean_dh_h) * inv_std[r];
          }
        }
      }
    };
  }
  return wrap_node(node);
}

Tensor slice_cols(const Tensor& x, int begin, int count) {
  if (x.rank() != 2) throw std::invalid_argument("slice_cols: rank-2 required, got " + shape_str(x.shape()));
  const int m = x.rows(), n = x.cols();
  if (begin < 0 || count <= 0 || begin + count > n) {
    throw std::invalid_argument("slice_cols: range [" + std::to_string(begin) + "," +
                                std::to_string(begin + count) + ") out of " + std::to_string(n) + " cols");
  }
  std::vector<double> out(static_cast<size_t>(m) * count);
  for (int r = 0; r < m; ++r) {
    std::copy_n(x.values().data() + static_cast<size_t>(r) * n + begin, count,
                out.data() + static_cast<size_t>(r) * count);
  }
  auto node = make_node({m, count}, std::move(out), {x.node()}, "slice_cols");
  if (node->requires_grad) {
    node->backprop = [m, n, begin, count](detail::TapeNode& self) {
      auto& p = self.parents[0];
      if (!p->requires_grad) return;
      for (int r = 0; r < m; ++r) {
        const double* g = self.grad.data() + static_cast<size_t>(r) * count;
        double* gp = p->grad.data() + static_cast<size_t>(r) * n + begin;
        for (int c = 0; c < count; ++c) gp[c] += g[c];
      }
    };
  }
  return wrap_node(node);
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw std::invalid_argument("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape) +
                                " changes element count");
  }
  auto node = make_node(std::move(shape), x.values(), {x.node()}, "reshape");
  if (node->requires_grad) {
    node->backprop = [](detail::TapeNode& self) {
      auto& p = self.parents[0];
      if (!p->requires_grad) return;
      for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    };
  }
  return wrap_node(node);
}

Tensor gather(const Tensor& x, const std::vector<std::pair<int, int>>& ij) {
  if (x.rank() != 2) throw std::invalid_argument("gather: rank-2 required, got " + shape_str(x.shape()));
  const int m = x.rows(), n = x.cols();
  if (ij.empty()) throw std::invalid_argument("gather: empty index list");
  std::vector<double> out(ij.size());
  for (size_t k = 0; k < ij.size(); ++k) {
    auto [r, c] = ij[k];
    if (r < 0 || r >= m || c < 0 || c >= n) {
      throw std::invalid_argument("gather: index (" + std::to_string(r) + "," + std::to_string(c) +
                                  ") outside " + shape_str(x.shape()));
    }
    out[k] = x.values()[static_cast<size_t>(r) * n + c];
  }
  auto node = make_node({static_cast<int>(ij.size())}, std::move(out), {x.node()}, "gather");
  if (node->requires_grad) {
    node->backprop = [n, ij](detail::TapeNode& self) {
      auto& p = self.parents[0];
      if (!p->requires_grad) return;
      for (size_t k = 0; k < ij.size(); ++k) {
        p->grad[static_cast<size_t>(ij[k].first) * n + ij[k].second] += self.grad[k];
      }
    };
  }
  return wrap_node(node);
}

Tensor rope_rotate(const Tensor& x, const std::vector<double>& angles) {
  if (x.rank() != 2 || x.cols() % 2 != 0) {
    throw std::invalid_argument("rope_rotate: rank-2 with even cols required, got " + shape_str(x.shape()));
  }
  const int m = x.rows(), n = x.cols(), half = n / 2;
  if (static_cast<int64_t>(angles.size()) != static_cast<int64_t>(m) * half) {
    throw std::invalid_argument("rope_rotate: angle count " + std::to_string(angles.size()) +
                                " does not match " + shape_str(x.shape()));
  }
  std::vector<double> out(x.values().size());
  for (int r = 0; r < m; ++r) {
    const double* xi = x.values().data() + static_cast<size_t>(r) * n;
    double* oi = out.data() + static_cast<size_t>(r) * n;
    for (int k = 0; k < half; ++k) {
      const double c = std::cos(angles[static_cast<size_t>(r) * half + k]);
      const double s = std::sin(angles[static_cast<size_t>(r) * half + k]);
      oi[2 * k] = c * xi[2 * k] - s * xi[2 * k + 1];
      oi[2 * k + 1] = s * xi[2 * k] + c * xi[2 * k + 1];
    }
  }
  auto node = make_node(x.shape(), std::move(out), {x.node()}, "rope_rotate");
  if (node->requires_grad) {
    node->backprop = [m, n, half, angles](detail::TapeNode& self) {
      auto& p = self.parents[0];
      if (!p->requires_grad) return;
      for (int r = 0; r < m; ++r) {
        const double* g = self.grad.data() + static_cast<size_t>(r) * n;
        double* gp = p->grad.data() + static_cast<size_t>(r) * n;
        for (int k = 0; k < half; ++k) {
          const double c = std::cos(angles[static_cast<size_t>(r) * half + k]);
          const double s = std::sin(angles[static_cast<size_t>(r) * half + k]);
          // inverse rotation applied to the incoming gradient
          gp[2 * k] += c * g[2 * k] + s * g[2 * k + 1];
          gp[2 * k + 1] += -s * g[2 * k] + c * g[2 * k + 1];
        }
      }
    };
  }
  return wrap_node(node);
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor in = x;
  const bool vec = x.rank() == 1;
  if (vec) in = reshape(x, {1, x.shape()[0]});
  Tensor out = add_rowvec(matmul(in, w), b);
  if (vec) out = reshape(out, {out.cols()});
  return out;
}

// ---- backward --------------------------------------------------------------

void backward(const Tensor& loss) {
  if (!loss.defined()) throw std::logic_error("backward on undefined tensor");
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;  // nothing reachable requires grad

  // Nodes were created in topological order; seq-descending is a valid
  // reverse ordering for the backward sweep.
  std::vector<detail::TapeNode*> nodes;
  std::unordered_set<detail::TapeNode*> seen;
  std::vector<detail::TapeNode*> stack{loss.node().get()};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    detail::TapeNode* n = stack.back();
    stack.pop_back();
    nodes.push_back(n);
    for (auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  for (detail::TapeNode* n : nodes) {
    if (!n->leaf) std::fill(n->grad.begin(), n->grad.end(), 0.0);
  }
  loss.node()->grad[0] += 1.0;
  std::sort(nodes.begin(), nodes.end(),
            [](const detail::TapeNode* a, const detail::TapeNode* b) { return a->seq > b->seq; });
  for (detail::TapeNode* n : nodes) {
    if (n->backprop) n->backprop(*n);
  }
}

}  // namespace mimatch
