#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "iaqcast/errors.hpp"

namespace iaq {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

class Graph;

namespace detail {

enum class OpKind : std::uint8_t {
  kLeaf,
  kConst,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kMatMul,
  kTranspose,
  kTanh,
  kSigmoid,
  kRelu,
  kExp,
  kLog,
  kSqrt,
  kSquare,
  kAffine,      // a0 * x + a1
  kClamp,       // clamp to [a0, a1]
  kReduceSum,   // axis in `axis`, -1 = all
  kReduceMean,
  kConcat,      // along `axis`
  kSliceRows,   // rows [i0, i1)
  kSliceCols,   // columns [i0, i1)
  kCosRows,     // rowwise cosine similarity, zero rows contribute 0
  kLayerNorm,   // per-row normalization, parents: x, gain, bias
  kGruSeq,      // fused gated recurrent unroll over the rows of x
};

// How the second operand of a binary elementwise op is expanded.
enum class Bcast : std::uint8_t {
  kEqual,
  kLeftScalar,
  kRightScalar,
  kLeftRow,
  kRightRow,
};

struct Node {
  OpKind kind;
  Bcast bc = Bcast::kEqual;
  int axis = -1;
  std::size_t i0 = 0, i1 = 0;
  double a0 = 0.0, a1 = 0.0;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<Node*> parents;
  std::vector<double> scratch;  // op-specific saved forward intermediates
  Graph* graph = nullptr;
  bool trainable = false;
  std::string name;  // named leaves only

  std::size_t rows() const { return shape.size() == 2 ? shape[0] : 1; }
  std::size_t cols() const { return shape.size() == 2 ? shape[1] : shape[0]; }
};

}  // namespace detail

// Lightweight handle into a Graph; valid while the graph lives.
class Tensor {
 public:
  Tensor() = default;

  bool valid() const { return node_ != nullptr; }
  const Shape& shape() const { return node().shape; }
  std::size_t numel() const { return node().value.size(); }
  std::size_t rows() const { return node().rows(); }
  std::size_t cols() const { return node().cols(); }

  std::span<const double> values() const { return node().value; }
  // Zero-length until backward() has run.
  std::span<const double> grad() const { return node().grad; }

  double value_at(std::size_t i) const { return node().value[i]; }
  // Scalar convenience; requires numel() == 1.
  double value() const;

  Graph& graph() const { return *node().graph; }

  // Internal: op builders only.
  detail::Node* node_ptr() const { return node_; }

 private:
  friend class Graph;
  explicit Tensor(detail::Node* n) : node_(n) {}
  detail::Node& node() const {
    if (!node_) throw Error::internal("use of empty Tensor handle");
    return *node_;
  }
  detail::Node* node_ = nullptr;
};

// Execution-order tape. Single-threaded per instance.
class Graph {
 public:
  explicit Graph(bool strict_finite = false) : strict_finite_(strict_finite) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Tensor constant(Shape shape, std::span<const double> values);
  Tensor constant(Shape shape, double fill = 0.0);
  Tensor scalar(double v) { return constant(Shape{1}, std::span<const double>(&v, 1)); }

  // Named trainable leaf. Repeated calls with the same name return the
  // existing node (shape and content must have been identical), so model code
  // can bind parameters once per window without bookkeeping.
  Tensor leaf(const std::string& name, Shape shape, std::span<const double> values);

  bool strict_finite() const { return strict_finite_; }

  // Reverse sweep from `loss` (numel must be 1). Every node in the tape is
  // visited exactly once, in reverse execution order. A second call without
  // reset_grads() is an error.
  void backward(const Tensor& loss);
  void reset_grads();

  std::span<const double> grad_by_name(const std::string& name) const;
  const std::vector<std::string>& trainable_names() const { return leaf_order_; }
  Tensor leaf_by_name(const std::string& name) const;

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t last_backward_visits() const { return last_visits_; }

  // Internal: runs the forward computation for a prepared node, applies the
  // strict-finite check and appends it to the tape. Op builders only.
  Tensor make_op(detail::Node&& proto);

 private:
  detail::Node* add_node(detail::Node&& n);

  std::vector<std::unique_ptr<detail::Node>> nodes_;
  std::unordered_map<std::string, detail::Node*> leaves_;
  std::vector<std::string> leaf_order_;
  bool strict_finite_ = false;
  bool backward_done_ = false;
  std::size_t last_visits_ = 0;
};

// --- operations ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
Tensor affine(const Tensor& a, double scale, double shift);
inline Tensor scale(const Tensor& a, double s) { return affine(a, s, 0.0); }
// Gradient passes only where the input lies inside [lo, hi].
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor reduce_sum(const Tensor& a, std::optional<int> axis = std::nullopt);
Tensor reduce_mean(const Tensor& a, std::optional<int> axis = std::nullopt);

Tensor concat(std::span<const Tensor> ts, int axis);
Tensor slice_rows(const Tensor& a, std::size_t from, std::size_t to);
Tensor slice_cols(const Tensor& a, std::size_t from, std::size_t to);

// Rowwise cosine similarity of two equal-shape matrices; result is n x 1.
// Rows where either operand has zero norm yield 0 with zero gradient.
Tensor cos_rows(const Tensor& a, const Tensor& b);

// Per-row normalization over features with per-feature gain/bias (rank-1, h).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

// Gated recurrent unroll over the rows of x with h0 = 0; one tape node for
// the whole sequence, backward runs full backprop-through-time. Weight order:
// update gate (W_x, W_h, b), reset gate, candidate.
Tensor gru_seq(const Tensor& x, const Tensor& w_xz, const Tensor& w_hz, const Tensor& b_z,
               const Tensor& w_xr, const Tensor& w_hr, const Tensor& b_r,
               const Tensor& w_xc, const Tensor& w_hc, const Tensor& b_c);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

}  // namespace iaq
