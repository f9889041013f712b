#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aghmn/rng.hpp"
#include "aghmn/tensor.hpp"

// Define-by-run reverse-mode differentiation. Every forward call records a node;
// backward() walks the recorded graph in reverse topological order.
namespace aghmn::ad {

enum class OpKind {
  leaf,
  matmul,
  add,
  sub,
  mul,
  scalar_mul,
  scale_by,
  concat,
  tanh,
  sigmoid,
  relu,
  softmax,
  max_over_time,
  dot,
  embedding,
  conv1d,
  dropout,
  sum,
  mean,
  stack_rows,
  row,
  element,
  neg_log,
};

const char* op_name(OpKind kind);

struct Node {
  Tensor value;
  Tensor grad;
  OpKind op = OpKind::leaf;
  std::vector<std::shared_ptr<Node>> parents;
  bool requires_grad = false;

  // Per-op state kept for the backward pass.
  std::vector<std::size_t> indices;
  Tensor aux;
  double scalar = 0.0;
  std::optional<std::size_t> skip_index;
};

/// Shared handle onto a graph node. Copies alias the same node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  /// Trainable leaf.
  static Var parameter(Tensor value);
  /// Leaf that never receives a gradient.
  static Var constant(Tensor value);

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  Tensor& mutable_grad() { return node_->grad; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t numel() const { return node_->value.numel(); }
  bool requires_grad() const { return node_->requires_grad; }
  OpKind op() const { return node_->op; }
  const std::shared_ptr<Node>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Matrix products follow the usual 1-D promotion: [m,k]x[k,n], [m,k]x[k], [k]x[k,n].
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scalar_mul(const Var& x, double c);
/// x scaled by the single value held in s (shape {1}); gradient flows to both.
Var scale_by(const Var& x, const Var& s);
Var concat(std::span<const Var> parts);
Var concat(const Var& a, const Var& b);
Var tanh(const Var& x);
Var sigmoid(const Var& x);
Var relu(const Var& x);
Var softmax(const Var& x);
/// Column-wise max of an [N,d] matrix. Ties route gradient to the first row.
Var max_over_time(const Var& x);
Var dot(const Var& a, const Var& b);
/// Rows of table [V,d] gathered into [N,d]. Rows equal to frozen_row get no gradient.
Var embedding_lookup(const Var& table, std::span<const std::size_t> ids,
                     std::optional<std::size_t> frozen_row = std::nullopt);
/// Valid 1-D convolution: x [N,C], filters [F,width,C], bias [F] -> [N-width+1, F].
Var conv1d_valid(const Var& x, const Var& filters, const Var& bias);
/// Inverted dropout. Returns x itself when !train or p == 0.
Var dropout(const Var& x, double p, bool train, Rng& rng);
Var sum(const Var& x);
Var mean(const Var& x);
Var stack_rows(std::span<const Var> rows);
Var row(const Var& x, std::size_t index);
Var element(const Var& x, std::size_t index);
/// -log(max(x[index], floor)) as a scalar node.
Var neg_log(const Var& x, std::size_t index, double floor);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }

/// Populates grad on every node reachable from loss. Gradients are reset at the
/// start of each call, then summed across fan-out.
void backward(const Var& loss);

using GradMap = std::map<std::string, Tensor>;

/// Named, insertion-ordered collection of trainable leaves.
class ParamSet {
 public:
  explicit ParamSet(std::uint64_t seed = 0) : seed_(seed) {}

  Var add(const std::string& name, Tensor init);
  const Var& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t scalar_count() const;
  std::uint64_t seed() const noexcept { return seed_; }

  const std::vector<std::pair<std::string, Var>>& entries() const noexcept { return entries_; }

  void zero_grad();
  GradMap gradients() const;
  GradMap snapshot() const;
  /// Copies values back in; names and shapes must match exactly.
  void restore(const GradMap& values);

 private:
  std::vector<std::pair<std::string, Var>> entries_;
  std::map<std::string, std::size_t> index_;
  std::uint64_t seed_;
};

/// Central differences (f(p+eps)-f(p-eps))/(2 eps) for every scalar in params.
GradMap finite_diff_grad(const std::function<double(const ParamSet&)>& f, ParamSet& params,
                         double eps = 1e-5);

/// |a-n| / max(|a|, |n|, floor). The floor keeps near-zero gradients from
/// reporting huge relative error on rounding noise.
double relative_error(double analytic, double numeric, double floor = 1e-6);

namespace debug {
/// Negative-control hook: scales every parent gradient produced by the given op.
void corrupt_backward(std::optional<OpKind> kind, double factor = 1.01);
}  // namespace debug

}  // namespace aghmn::ad
