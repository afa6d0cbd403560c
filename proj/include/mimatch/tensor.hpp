#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace mimatch {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

namespace detail {

struct TapeNode {
  Shape shape;
  std::vector<double> value;
  bool requires_grad = false;
  bool leaf = false;
  std::vector<double> grad;  // allocated when requires_grad
  std::vector<std::shared_ptr<TapeNode>> parents;
  std::function<void(TapeNode&)> backprop;
  uint64_t seq = 0;
};

}  // namespace detail

// Dense row-major tensor participating in a dynamically taped reverse-mode
// graph. A Tensor is a cheap handle onto a shared tape node; ops create new
// nodes and never mutate their operands. Leaf values may be rewritten between
// training steps with set_values (the old tape must be dropped first).
class Tensor {
 public:
  Tensor() = default;

  static Tensor leaf(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  int rows() const;
  int cols() const;
  int64_t numel() const;

  const std::vector<double>& values() const;
  double scalar_value() const;
  bool requires_grad() const;
  bool is_leaf() const;
  const std::vector<double>& grad() const;
  void zero_grad() const;

  // Leaf-only: replace values in place (used by the optimizer between steps).
  // Mutates the shared node, so it is usable through const handles.
  void set_values(const std::vector<double>& v) const;

  std::shared_ptr<detail::TapeNode> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TapeNode> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::TapeNode> node_;

  friend Tensor wrap_node(std::shared_ptr<detail::TapeNode> n);
};

// ---- forward ops ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// y = scale * x + shift, elementwise
Tensor affine(const Tensor& x, double scale, double shift);
Tensor add_rowvec(const Tensor& a, const Tensor& b);  // [m,n] + [n]
Tensor concat_last(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& x);
Tensor row_softmax(const Tensor& x);
// Softmax over the unmasked entries of each row; masked entries are exactly 0
// in the output. mask is row-major, nonzero = keep. A fully masked row is an
// error.
Tensor masked_row_softmax(const Tensor& x, const std::vector<uint8_t>& mask);
Tensor col_softmax(const Tensor& x);
Tensor inner(const Tensor& a, const Tensor& b);  // same shape -> scalar
Tensor sum(const Tensor& x);                     // -> scalar
Tensor mean(const Tensor& x);                    // -> scalar
Tensor log(const Tensor& x);
Tensor clamp_min(const Tensor& x, double lo);
Tensor l2_normalize_rows(const Tensor& x);
Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
Tensor slice_cols(const Tensor& x, int begin, int count);
Tensor reshape(const Tensor& x, Shape shape);
// Entries of a rank-2 tensor selected by (row, col) pairs -> rank-1.
Tensor gather(const Tensor& x, const std::vector<std::pair<int, int>>& ij);
// Per-row 2x2 rotary mix: angles has one angle per consecutive column pair.
// angles.size() == rows * cols/2, row-major.
Tensor rope_rotate(const Tensor& x, const std::vector<double>& angles);
// x [m,in] * w [in,out] + b [out]; a rank-1 x is treated as a single row.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Accumulates d(loss)/d(leaf) into every requires_grad leaf reachable from
// loss. Repeated calls without zero_grad accumulate. loss must be scalar.
void backward(const Tensor& loss);

}  // namespace mimatch
