#include "aghmn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace aghmn::ad {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scalar_mul: return "scalar_mul";
    case OpKind::scale_by: return "scale_by";
    case OpKind::concat: return "concat";
    case OpKind::tanh: return "tanh";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::relu: return "relu";
    case OpKind::softmax: return "softmax";
    case OpKind::max_over_time: return "max_over_time";
    case OpKind::dot: return "dot";
    case OpKind::embedding: return "embedding";
    case OpKind::conv1d: return "conv1d";
    case OpKind::dropout: return "dropout";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::stack_rows: return "stack_rows";
    case OpKind::row: return "row";
    case OpKind::element: return "element";
    case OpKind::neg_log: return "neg_log";
  }
  return "unknown";
}

namespace {

std::optional<OpKind> g_corrupt_kind;
double g_corrupt_factor = 1.0;

[[noreturn]] void dim_error(OpKind op, const std::string& detail) {
  throw DimensionError(std::string(op_name(op)) + ": " + detail);
}

void require_defined(OpKind op, const Var& v) {
  if (!v.defined()) throw ContractError(std::string(op_name(op)) + ": undefined operand");
}

Var make_node(OpKind op, Tensor value, std::vector<std::shared_ptr<Node>> parents) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  node->requires_grad = std::any_of(parents.begin(), parents.end(),
                                    [](const auto& p) { return p->requires_grad; });
  node->parents = std::move(parents);
  return Var(std::move(node));
}

void require_same_shape(OpKind op, const Var& a, const Var& b) {
  require_defined(op, a);
  require_defined(op, b);
  if (a.shape() != b.shape()) {
    dim_error(op, "operand extents " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                      " differ");
  }
}

// Logical [m,k] x [k,n] view for matmul with 1-D promotion.
struct MatmulDims {
  std::size_t m, k, n;
};

MatmulDims matmul_dims(const Shape& a, const Shape& b) {
  if (a.size() > 2 || b.size() > 2 || (a.size() == 1 && b.size() == 1)) {
    dim_error(OpKind::matmul, "unsupported ranks " + shape_str(a) + " x " + shape_str(b));
  }
  const std::size_t m = a.size() == 2 ? a[0] : 1;
  const std::size_t ka = a.size() == 2 ? a[1] : a[0];
  const std::size_t kb = b[0];
  const std::size_t n = b.size() == 2 ? b[1] : 1;
  if (ka != kb) {
    dim_error(OpKind::matmul, "inner extents " + shape_str(a) + " x " + shape_str(b) + " differ");
  }
  return {m, ka, n};
}

Tensor unary_map(const Tensor& x, double (*fn)(double)) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = fn(x[i]);
  return y;
}

double sigmoid_scalar(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

double tanh_scalar(double v) { return std::tanh(v); }
double relu_scalar(double v) { return v > 0.0 ? v : 0.0; }

// Rows of the last axis: outer x inner.
std::pair<std::size_t, std::size_t> last_axis_split(const Shape& s) {
  const std::size_t inner = s.back();
  return {shape_numel(s) / inner, inner};
}

void accumulate(Node& parent, std::size_t i, double g) { parent.grad[i] += g; }

void backprop_node(Node& node) {
  const Tensor& gy = node.grad;
  auto& ps = node.parents;
  auto needs = [&](std::size_t i) { return ps[i]->requires_grad; };

  switch (node.op) {
    case OpKind::leaf:
      return;
    case OpKind::matmul: {
      const Tensor& a = ps[0]->value;
      const Tensor& b = ps[1]->value;
      const auto [m, k, n] = matmul_dims(a.shape(), b.shape());
      if (needs(0)) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const double g = gy[i * n + j];
            if (g == 0.0) continue;
            for (std::size_t p = 0; p < k; ++p) accumulate(*ps[0], i * k + p, g * b[p * n + j]);
          }
      }
      if (needs(1)) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) accumulate(*ps[1], p * n + j, av * gy[i * n + j]);
          }
      }
      return;
    }
    case OpKind::add:
      for (std::size_t p = 0; p < 2; ++p)
        if (needs(p))
          for (std::size_t i = 0; i < gy.numel(); ++i) accumulate(*ps[p], i, gy[i]);
      return;
    case OpKind::sub:
      if (needs(0))
        for (std::size_t i = 0; i < gy.numel(); ++i) accumulate(*ps[0], i, gy[i]);
      if (needs(1))
        for (std::size_t i = 0; i < gy.numel(); ++i) accumulate(*ps[1], i, -gy[i]);
      return;
    case OpKind::mul:
      if (needs(0))
        for (std::size_t i = 0; i < gy.numel(); ++i) accumulate(*ps[0], i, gy[i] * ps[1]->value[i]);
      if (needs(1))
        for (std::size_t i = 0; i < gy.numel(); ++i) accumulate(*ps[1], i, gy[i] * ps[0]->value[i]);
      return;
    case OpKind::scalar_mul:
      for (std::size_t i = 0; i < gy.numel(); ++i) accumulate(*ps[0], i, gy[i] * node.scalar);
      return;
    case OpKind::scale_by: {
      const double s = ps[1]->value[0];
      if (needs(0))
        for (std::size_t i = 0; i < gy.numel(); ++i) accumulate(*ps[0], i, gy[i] * s);
      if (needs(1)) {
        double g = 0.0;
        for (std::size_t i = 0; i < gy.numel(); ++i) g += gy[i] * ps[0]->value[i];
        accumulate(*ps[1], 0, g);
      }
      return;
    }
    case OpKind::concat: {
      const auto [outer, total] = last_axis_split(node.value.shape());
      std::size_t offset = 0;
      for (std::size_t p = 0; p < ps.size(); ++p) {
        const std::size_t width = ps[p]->value.shape().back();
        if (needs(p))
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t j = 0; j < width; ++j)
              accumulate(*ps[p], o * width + j, gy[o * total + offset + j]);
        offset += width;
      }
      return;
    }
    case OpKind::tanh:
      for (std::size_t i = 0; i < gy.numel(); ++i) {
        const double y = node.value[i];
        accumulate(*ps[0], i, gy[i] * (1.0 - y * y));
      }
      return;
    case OpKind::sigmoid:
      for (std::size_t i = 0; i < gy.numel(); ++i) {
        const double y = node.value[i];
        accumulate(*ps[0], i, gy[i] * y * (1.0 - y));
      }
      return;
    case OpKind::relu:
      for (std::size_t i = 0; i < gy.numel(); ++i)
        if (ps[0]->value[i] > 0.0) accumulate(*ps[0], i, gy[i]);
      return;
    case OpKind::softmax: {
      const auto [outer, inner] = last_axis_split(node.value.shape());
      for (std::size_t o = 0; o < outer; ++o) {
        double inner_prod = 0.0;
        for (std::size_t j = 0; j < inner; ++j)
          inner_prod += gy[o * inner + j] * node.value[o * inner + j];
        for (std::size_t j = 0; j < inner; ++j) {
          const std::size_t i = o * inner + j;
          accumulate(*ps[0], i, node.value[i] * (gy[i] - inner_prod));
        }
      }
      return;
    }
    case OpKind::max_over_time: {
      const std::size_t d = node.value.numel();
      for (std::size_t j = 0; j < d; ++j) accumulate(*ps[0], node.indices[j] * d + j, gy[j]);
      return;
    }
    case OpKind::dot: {
      const double g = gy[0];
      if (needs(0))
        for (std::size_t i = 0; i < ps[0]->value.numel(); ++i)
          accumulate(*ps[0], i, g * ps[1]->value[i]);
      if (needs(1))
        for (std::size_t i = 0; i < ps[1]->value.numel(); ++i)
          accumulate(*ps[1], i, g * ps[0]->value[i]);
      return;
    }
    case OpKind::embedding: {
      const std::size_t d = node.value.dim(1);
      for (std::size_t n = 0; n < node.indices.size(); ++n) {
        const std::size_t id = node.indices[n];
        if (node.skip_index && *node.skip_index == id) continue;
        for (std::size_t j = 0; j < d; ++j) accumulate(*ps[0], id * d + j, gy[n * d + j]);
      }
      return;
    }
    case OpKind::conv1d: {
      const Tensor& x = ps[0]->value;
      const Tensor& w = ps[1]->value;
      const std::size_t channels = x.dim(1);
      const std::size_t filters = w.dim(0);
      const std::size_t width = w.dim(1);
      const std::size_t positions = node.value.dim(0);
      for (std::size_t t = 0; t < positions; ++t)
        for (std::size_t f = 0; f < filters; ++f) {
          const double g = gy[t * filters + f];
          if (g == 0.0) continue;
          if (needs(2)) accumulate(*ps[2], f, g);
          for (std::size_t s = 0; s < width; ++s)
            for (std::size_t c = 0; c < channels; ++c) {
              const std::size_t wi = (f * width + s) * channels + c;
              const std::size_t xi = (t + s) * channels + c;
              if (needs(1)) accumulate(*ps[1], wi, g * x[xi]);
              if (needs(0)) accumulate(*ps[0], xi, g * w[wi]);
            }
        }
      return;
    }
    case OpKind::dropout:
      for (std::size_t i = 0; i < gy.numel(); ++i) accumulate(*ps[0], i, gy[i] * node.aux[i]);
      return;
    case OpKind::sum:
      for (std::size_t i = 0; i < ps[0]->value.numel(); ++i) accumulate(*ps[0], i, gy[0]);
      return;
    case OpKind::mean: {
      const double g = gy[0] / static_cast<double>(ps[0]->value.numel());
      for (std::size_t i = 0; i < ps[0]->value.numel(); ++i) accumulate(*ps[0], i, g);
      return;
    }
    case OpKind::stack_rows: {
      const std::size_t d = node.value.dim(1);
      for (std::size_t r = 0; r < ps.size(); ++r)
        if (needs(r))
          for (std::size_t j = 0; j < d; ++j) accumulate(*ps[r], j, gy[r * d + j]);
      return;
    }
    case OpKind::row: {
      const std::size_t d = node.value.numel();
      const std::size_t r = node.indices[0];
      for (std::size_t j = 0; j < d; ++j) accumulate(*ps[0], r * d + j, gy[j]);
      return;
    }
    case OpKind::element:
      accumulate(*ps[0], node.indices[0], gy[0]);
      return;
    case OpKind::neg_log: {
      const double x = ps[0]->value[node.indices[0]];
      if (x > node.scalar) accumulate(*ps[0], node.indices[0], -gy[0] / x);
      return;
    }
  }
}

}  // namespace

Var Var::parameter(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

Var Var::constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var matmul(const Var& a, const Var& b) {
  require_defined(OpKind::matmul, a);
  require_defined(OpKind::matmul, b);
  const auto [m, k, n] = matmul_dims(a.shape(), b.shape());
  Shape out_shape;
  if (a.value().rank() == 2) out_shape.push_back(m);
  if (b.value().rank() == 2) out_shape.push_back(n);
  Tensor out(out_shape);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      if (x == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += x * bv[p * n + j];
    }
  return make_node(OpKind::matmul, std::move(out), {a.node(), b.node()});
}

Var add(const Var& a, const Var& b) {
  require_same_shape(OpKind::add, a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_node(OpKind::add, std::move(out), {a.node(), b.node()});
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(OpKind::sub, a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make_node(OpKind::sub, std::move(out), {a.node(), b.node()});
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(OpKind::mul, a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_node(OpKind::mul, std::move(out), {a.node(), b.node()});
}

Var scalar_mul(const Var& x, double c) {
  require_defined(OpKind::scalar_mul, x);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = c * x.value()[i];
  Var v = make_node(OpKind::scalar_mul, std::move(out), {x.node()});
  v.node()->scalar = c;
  return v;
}

Var scale_by(const Var& x, const Var& s) {
  require_defined(OpKind::scale_by, x);
  require_defined(OpKind::scale_by, s);
  if (s.numel() != 1) dim_error(OpKind::scale_by, "scale must hold one value, got " + shape_str(s.shape()));
  const double c = s.value()[0];
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = c * x.value()[i];
  return make_node(OpKind::scale_by, std::move(out), {x.node(), s.node()});
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat: no operands");
  for (const auto& p : parts) require_defined(OpKind::concat, p);
  const Shape& first = parts[0].shape();
  Shape lead(first.begin(), first.end() - 1);
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (Shape(s.begin(), s.end() - 1) != lead) {
      dim_error(OpKind::concat, "leading extents " + shape_str(first) + " and " + shape_str(s) + " differ");
    }
    total += s.back();
  }
  Shape out_shape = lead;
  out_shape.push_back(total);
  Tensor out(out_shape);
  const std::size_t outer = shape_numel(out_shape) / total;
  std::vector<std::shared_ptr<Node>> parents;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t width = p.shape().back();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t j = 0; j < width; ++j) out[o * total + offset + j] = p.value()[o * width + j];
    offset += width;
    parents.push_back(p.node());
  }
  return make_node(OpKind::concat, std::move(out), std::move(parents));
}

Var concat(const Var& a, const Var& b) {
  const Var parts[] = {a, b};
  return concat(std::span<const Var>(parts));
}

Var tanh(const Var& x) {
  require_defined(OpKind::tanh, x);
  return make_node(OpKind::tanh, unary_map(x.value(), tanh_scalar), {x.node()});
}

Var sigmoid(const Var& x) {
  require_defined(OpKind::sigmoid, x);
  return make_node(OpKind::sigmoid, unary_map(x.value(), sigmoid_scalar), {x.node()});
}

Var relu(const Var& x) {
  require_defined(OpKind::relu, x);
  return make_node(OpKind::relu, unary_map(x.value(), relu_scalar), {x.node()});
}

Var softmax(const Var& x) {
  require_defined(OpKind::softmax, x);
  const auto [outer, inner] = last_axis_split(x.shape());
  Tensor out(x.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    const double* in = x.value().data().data() + o * inner;
    const double peak = *std::max_element(in, in + inner);
    double total = 0.0;
    for (std::size_t j = 0; j < inner; ++j) total += (out[o * inner + j] = std::exp(in[j] - peak));
    for (std::size_t j = 0; j < inner; ++j) out[o * inner + j] /= total;
  }
  return make_node(OpKind::softmax, std::move(out), {x.node()});
}

Var max_over_time(const Var& x) {
  require_defined(OpKind::max_over_time, x);
  if (x.value().rank() != 2) dim_error(OpKind::max_over_time, "expects [N,d], got " + shape_str(x.shape()));
  const std::size_t rows = x.value().dim(0);
  const std::size_t d = x.value().dim(1);
  Tensor out({d});
  std::vector<std::size_t> argmax(d, 0);
  for (std::size_t j = 0; j < d; ++j) {
    double best = x.value()[j];
    for (std::size_t r = 1; r < rows; ++r) {
      const double v = x.value()[r * d + j];
      if (v > best) {
        best = v;
        argmax[j] = r;
      }
    }
    out[j] = best;
  }
  Var v = make_node(OpKind::max_over_time, std::move(out), {x.node()});
  v.node()->indices = std::move(argmax);
  return v;
}

Var dot(const Var& a, const Var& b) {
  require_same_shape(OpKind::dot, a, b);
  if (a.value().rank() != 1) dim_error(OpKind::dot, "expects vectors, got " + shape_str(a.shape()));
  double total = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) total += a.value()[i] * b.value()[i];
  return make_node(OpKind::dot, Tensor::scalar(total), {a.node(), b.node()});
}

Var embedding_lookup(const Var& table, std::span<const std::size_t> ids,
                     std::optional<std::size_t> frozen_row) {
  require_defined(OpKind::embedding, table);
  if (table.value().rank() != 2) dim_error(OpKind::embedding, "table must be [V,d], got " + shape_str(table.shape()));
  if (ids.empty()) throw ContractError("embedding: empty index list");
  const std::size_t vocab = table.value().dim(0);
  const std::size_t d = table.value().dim(1);
  Tensor out({ids.size(), d});
  for (std::size_t n = 0; n < ids.size(); ++n) {
    if (ids[n] >= vocab) {
      dim_error(OpKind::embedding, "index " + std::to_string(ids[n]) + " outside table of " +
                                       std::to_string(vocab) + " rows");
    }
    std::copy_n(table.value().data().data() + ids[n] * d, d, out.data().data() + n * d);
  }
  Var v = make_node(OpKind::embedding, std::move(out), {table.node()});
  v.node()->indices.assign(ids.begin(), ids.end());
  v.node()->skip_index = frozen_row;
  return v;
}

Var conv1d_valid(const Var& x, const Var& filters, const Var& bias) {
  require_defined(OpKind::conv1d, x);
  require_defined(OpKind::conv1d, filters);
  require_defined(OpKind::conv1d, bias);
  const Tensor& xv = x.value();
  const Tensor& wv = filters.value();
  if (xv.rank() != 2 || wv.rank() != 3 || bias.value().rank() != 1) {
    dim_error(OpKind::conv1d, "expects x [N,C], filters [F,w,C], bias [F]; got " + shape_str(xv.shape()) +
                                  ", " + shape_str(wv.shape()) + ", " + shape_str(bias.shape()));
  }
  const std::size_t n = xv.dim(0), channels = xv.dim(1);
  const std::size_t count = wv.dim(0), width = wv.dim(1);
  if (wv.dim(2) != channels || bias.value().dim(0) != count) {
    dim_error(OpKind::conv1d, "channel/filter extents disagree: x " + shape_str(xv.shape()) + ", filters " +
                                  shape_str(wv.shape()) + ", bias " + shape_str(bias.shape()));
  }
  if (n < width) {
    dim_error(OpKind::conv1d, "sequence length " + std::to_string(n) + " shorter than filter width " +
                                  std::to_string(width));
  }
  const std::size_t positions = n - width + 1;
  Tensor out({positions, count});
  for (std::size_t t = 0; t < positions; ++t)
    for (std::size_t f = 0; f < count; ++f) {
      double acc = bias.value()[f];
      for (std::size_t s = 0; s < width; ++s)
        for (std::size_t c = 0; c < channels; ++c)
          acc += wv[(f * width + s) * channels + c] * xv[(t + s) * channels + c];
      out[t * count + f] = acc;
    }
  return make_node(OpKind::conv1d, std::move(out), {x.node(), filters.node(), bias.node()});
}

Var dropout(const Var& x, double p, bool train, Rng& rng) {
  require_defined(OpKind::dropout, x);
  if (p < 0.0 || p >= 1.0) throw ContractError("dropout: rate must lie in [0,1), got " + std::to_string(p));
  if (!train || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  Tensor mask(x.shape());
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    mask[i] = rng.bernoulli(p) ? 0.0 : keep_scale;
    out[i] = x.value()[i] * mask[i];
  }
  Var v = make_node(OpKind::dropout, std::move(out), {x.node()});
  v.node()->aux = std::move(mask);
  return v;
}

Var sum(const Var& x) {
  require_defined(OpKind::sum, x);
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return make_node(OpKind::sum, Tensor::scalar(total), {x.node()});
}

Var mean(const Var& x) {
  require_defined(OpKind::mean, x);
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return make_node(OpKind::mean, Tensor::scalar(total / static_cast<double>(x.numel())), {x.node()});
}

Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw ContractError("stack_rows: no rows");
  for (const auto& r : rows) require_defined(OpKind::stack_rows, r);
  const Shape& first = rows[0].shape();
  if (first.size() != 1) dim_error(OpKind::stack_rows, "rows must be vectors, got " + shape_str(first));
  const std::size_t d = first[0];
  Tensor out({rows.size(), d});
  std::vector<std::shared_ptr<Node>> parents;
  parents.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].shape() != first) {
      dim_error(OpKind::stack_rows, "row " + std::to_string(r) + " has extents " + shape_str(rows[r].shape()) +
                                        ", expected " + shape_str(first));
    }
    std::copy_n(rows[r].value().data().data(), d, out.data().data() + r * d);
    parents.push_back(rows[r].node());
  }
  return make_node(OpKind::stack_rows, std::move(out), std::move(parents));
}

Var row(const Var& x, std::size_t index) {
  require_defined(OpKind::row, x);
  if (x.value().rank() != 2 || index >= x.value().dim(0)) {
    dim_error(OpKind::row, "row " + std::to_string(index) + " of " + shape_str(x.shape()));
  }
  const std::size_t d = x.value().dim(1);
  std::vector<double> values(x.value().data().begin() + static_cast<std::ptrdiff_t>(index * d),
                             x.value().data().begin() + static_cast<std::ptrdiff_t>((index + 1) * d));
  Var v = make_node(OpKind::row, Tensor::vector(std::move(values)), {x.node()});
  v.node()->indices = {index};
  return v;
}

Var element(const Var& x, std::size_t index) {
  require_defined(OpKind::element, x);
  if (index >= x.numel()) dim_error(OpKind::element, "index " + std::to_string(index) + " of " + shape_str(x.shape()));
  Var v = make_node(OpKind::element, Tensor::scalar(x.value()[index]), {x.node()});
  v.node()->indices = {index};
  return v;
}

Var neg_log(const Var& x, std::size_t index, double floor) {
  require_defined(OpKind::neg_log, x);
  if (index >= x.numel()) dim_error(OpKind::neg_log, "index " + std::to_string(index) + " of " + shape_str(x.shape()));
  const double p = std::max(x.value()[index], floor);
  Var v = make_node(OpKind::neg_log, Tensor::scalar(-std::log(p)), {x.node()});
  v.node()->indices = {index};
  v.node()->scalar = floor;
  return v;
}

void backward(const Var& loss) {
  if (!loss.defined()) throw ContractError("backward: undefined loss");
  if (loss.numel() != 1) {
    throw ContractError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; the reversed order is a valid reverse topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) n->grad = Tensor(n->value.shape(), 0.0);
  loss.node()->grad[0] = 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node& n = **it;
    if (g_corrupt_kind && *g_corrupt_kind == n.op) {
      // Snapshot parents, propagate, then scale only the contribution of this node.
      std::vector<Tensor> before;
      for (auto& p : n.parents) before.push_back(p->requires_grad ? p->grad : Tensor());
      backprop_node(n);
      for (std::size_t p = 0; p < n.parents.size(); ++p) {
        if (!n.parents[p]->requires_grad) continue;
        Tensor& g = n.parents[p]->grad;
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] = before[p][i] + (g[i] - before[p][i]) * g_corrupt_factor;
      }
    } else {
      backprop_node(n);
    }
  }
}

Var ParamSet::add(const std::string& name, Tensor init) {
  if (index_.count(name)) throw ContractError("ParamSet: duplicate parameter '" + name + "'");
  Var v = Var::parameter(std::move(init));
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, v);
  return v;
}

const Var& ParamSet::at(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("ParamSet: no parameter '" + name + "'");
  return entries_[it->second].second;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t total = 0;
  for (const auto& [_, v] : entries_) total += v.numel();
  return total;
}

void ParamSet::zero_grad() {
  for (auto& [_, v] : entries_) {
    Var handle = v;
    Tensor& g = handle.mutable_grad();
    if (g.shape() == v.shape()) {
      g.fill(0.0);
    } else {
      g = Tensor(v.shape(), 0.0);
    }
  }
}

GradMap ParamSet::gradients() const {
  GradMap out;
  for (const auto& [name, v] : entries_) {
    out.emplace(name, v.grad().empty() ? Tensor(v.shape(), 0.0) : v.grad());
  }
  return out;
}

GradMap ParamSet::snapshot() const {
  GradMap out;
  for (const auto& [name, v] : entries_) out.emplace(name, v.value());
  return out;
}

void ParamSet::restore(const GradMap& values) {
  if (values.size() != entries_.size()) {
    throw ContractError("ParamSet::restore: expected " + std::to_string(entries_.size()) + " tensors, got " +
                        std::to_string(values.size()));
  }
  for (auto& [name, v] : entries_) {
    const auto it = values.find(name);
    if (it == values.end()) throw ContractError("ParamSet::restore: missing '" + name + "'");
    if (it->second.shape() != v.shape()) {
      throw DimensionError("ParamSet::restore: '" + name + "' has " + shape_str(it->second.shape()) +
                           ", expected " + shape_str(v.shape()));
    }
    Var handle = v;
    handle.mutable_value() = it->second;
  }
}

GradMap finite_diff_grad(const std::function<double(const ParamSet&)>& f, ParamSet& params, double eps) {
  if (!(eps > 0.0)) throw ContractError("finite_diff_grad: eps must be positive");
  GradMap out;
  for (auto& [name, v] : params.entries()) {
    Var handle = v;
    Tensor& value = handle.mutable_value();
    Tensor g(value.shape(), 0.0);
    for (std::size_t i = 0; i < value.numel(); ++i) {
      const double orig = value[i];
      value[i] = orig + eps;
      const double up = f(params);
      value[i] = orig - eps;
      const double down = f(params);
      value[i] = orig;
      g[i] = (up - down) / (2.0 * eps);
    }
    out.emplace(name, std::move(g));
  }
  return out;
}

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

namespace debug {
void corrupt_backward(std::optional<OpKind> kind, double factor) {
  g_corrupt_kind = kind;
  g_corrupt_factor = kind ? factor : 1.0;
}
}  // namespace debug

}  // namespace aghmn::ad
