#include "aghmn/cells.hpp"

#include <cmath>

namespace aghmn::cells {

using ad::Var;

namespace {

void expect_shape(const char* cell, const char* name, const Var& v, const Shape& want) {
  if (!v.defined()) throw ContractError(std::string(cell) + ": parameter " + name + " is undefined");
  if (v.shape() != want) {
    throw DimensionError(std::string(cell) + ": parameter " + name + " has extents " + shape_str(v.shape()) +
                         ", expected " + shape_str(want));
  }
}

Var affine(const Var& W, const Var& x, const Var& U, const Var& h, const Var& b) {
  return ad::add(ad::add(ad::matmul(W, x), ad::matmul(U, h)), b);
}

void check_step_inputs(const char* cell, const Var& x, const Var& h, std::size_t input, std::size_t hidden) {
  if (x.shape() != Shape{input}) {
    throw DimensionError(std::string(cell) + ": input has extents " + shape_str(x.shape()) + ", expected [" +
                         std::to_string(input) + "]");
  }
  if (h.shape() != Shape{hidden}) {
    throw DimensionError(std::string(cell) + ": hidden state has extents " + shape_str(h.shape()) +
                         ", expected [" + std::to_string(hidden) + "]");
  }
}

}  // namespace

Tensor uniform_init(const Shape& shape, std::size_t hidden, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  Tensor t(shape);
  for (auto& v : t.storage()) v = rng.uniform(-bound, bound);
  return t;
}

Var zero_state(std::size_t hidden) { return Var::constant(Tensor({hidden}, 0.0)); }

GruParams GruParams::create(ad::ParamSet& params, const std::string& prefix, std::size_t input,
                            std::size_t hidden, Rng& rng) {
  auto mk = [&](const char* name, Shape shape) {
    return params.add(prefix + "." + name, uniform_init(shape, hidden, rng));
  };
  GruParams p;
  p.Wz = mk("Wz", {hidden, input});
  p.Wr = mk("Wr", {hidden, input});
  p.Wh = mk("Wh", {hidden, input});
  p.Uz = mk("Uz", {hidden, hidden});
  p.Ur = mk("Ur", {hidden, hidden});
  p.Uh = mk("Uh", {hidden, hidden});
  p.bz = mk("bz", {hidden});
  p.br = mk("br", {hidden});
  p.bh = mk("bh", {hidden});
  return p;
}

GruParams GruParams::from_tensors(const std::vector<Tensor>& nine) {
  if (nine.size() != 9) throw ContractError("GruParams: expected 9 tensors");
  GruParams p{Var::parameter(nine[0]), Var::parameter(nine[1]), Var::parameter(nine[2]),
              Var::parameter(nine[3]), Var::parameter(nine[4]), Var::parameter(nine[5]),
              Var::parameter(nine[6]), Var::parameter(nine[7]), Var::parameter(nine[8])};
  p.validate();
  return p;
}

void GruParams::validate() const {
  if (!Wz.defined() || Wz.value().rank() != 2) throw ContractError("gru: Wz must be a matrix");
  const std::size_t h = hidden_size();
  const std::size_t in = input_size();
  expect_shape("gru", "Wr", Wr, {h, in});
  expect_shape("gru", "Wh", Wh, {h, in});
  expect_shape("gru", "Uz", Uz, {h, h});
  expect_shape("gru", "Ur", Ur, {h, h});
  expect_shape("gru", "Uh", Uh, {h, h});
  expect_shape("gru", "bz", bz, {h});
  expect_shape("gru", "br", br, {h});
  expect_shape("gru", "bh", bh, {h});
}

AgruParams AgruParams::create(ad::ParamSet& params, const std::string& prefix, std::size_t input,
                              std::size_t hidden, Rng& rng) {
  auto mk = [&](const char* name, Shape shape) {
    return params.add(prefix + "." + name, uniform_init(shape, hidden, rng));
  };
  AgruParams p;
  p.Wr = mk("Wr", {hidden, input});
  p.Wh = mk("Wh", {hidden, input});
  p.Ur = mk("Ur", {hidden, hidden});
  p.Uh = mk("Uh", {hidden, hidden});
  p.br = mk("br", {hidden});
  p.bh = mk("bh", {hidden});
  return p;
}

AgruParams AgruParams::from_tensors(const std::vector<Tensor>& six) {
  if (six.size() != 6) throw ContractError("AgruParams: expected 6 tensors");
  AgruParams p{Var::parameter(six[0]), Var::parameter(six[1]), Var::parameter(six[2]),
               Var::parameter(six[3]), Var::parameter(six[4]), Var::parameter(six[5])};
  p.validate();
  return p;
}

void AgruParams::validate() const {
  if (!Wr.defined() || Wr.value().rank() != 2) throw ContractError("agru: Wr must be a matrix");
  const std::size_t h = hidden_size();
  const std::size_t in = input_size();
  expect_shape("agru", "Wh", Wh, {h, in});
  expect_shape("agru", "Ur", Ur, {h, h});
  expect_shape("agru", "Uh", Uh, {h, h});
  expect_shape("agru", "br", br, {h});
  expect_shape("agru", "bh", bh, {h});
}

Var gru_step(const Var& x, const Var& h_prev, const GruParams& p) {
  check_step_inputs("gru_step", x, h_prev, p.input_size(), p.hidden_size());
  const Var z = ad::sigmoid(affine(p.Wz, x, p.Uz, h_prev, p.bz));
  const Var r = ad::sigmoid(affine(p.Wr, x, p.Ur, h_prev, p.br));
  const Var candidate = ad::tanh(affine(p.Wh, x, p.Uh, ad::mul(r, h_prev), p.bh));
  // (1 - z) * h_prev + z * candidate, written as h_prev + z * (candidate - h_prev).
  return ad::add(h_prev, ad::mul(z, ad::sub(candidate, h_prev)));
}

std::vector<Var> gru_encode(std::span<const Var> seq, const GruParams& p) {
  if (seq.empty()) throw ContractError("gru_encode: empty sequence");
  std::vector<Var> states;
  states.reserve(seq.size());
  Var h = zero_state(p.hidden_size());
  for (const auto& x : seq) {
    h = gru_step(x, h, p);
    states.push_back(h);
  }
  return states;
}

BiStates bigru_encode(std::span<const Var> seq, const GruParams& fwd, const GruParams& bwd) {
  if (seq.empty()) throw ContractError("bigru_encode: empty sequence");
  BiStates out;
  out.fwd = gru_encode(seq, fwd);
  out.bwd.resize(seq.size());
  Var h = zero_state(bwd.hidden_size());
  for (std::size_t n = seq.size(); n-- > 0;) {
    h = gru_step(seq[n], h, bwd);
    out.bwd[n] = h;
  }
  return out;
}

Var agru_candidate(const Var& m, const Var& h_prev, const AgruParams& p) {
  check_step_inputs("agru_candidate", m, h_prev, p.input_size(), p.hidden_size());
  const Var r = ad::sigmoid(affine(p.Wr, m, p.Ur, h_prev, p.br));
  return ad::tanh(affine(p.Wh, m, p.Uh, ad::mul(r, h_prev), p.bh));
}

Var agru_step(const Var& m, const Var& a, const Var& h_prev, const AgruParams& p) {
  check_step_inputs("agru_step", m, h_prev, p.input_size(), p.hidden_size());
  if (a.numel() != 1) throw DimensionError("agru_step: attention weight must be a single value, got " +
                                           shape_str(a.shape()));
  const double a_val = a.value()[0];
  if (!(a_val >= 0.0 && a_val <= 1.0)) {
    throw ContractError("agru_step: attention weight " + std::to_string(a_val) + " outside [0,1]");
  }
  const Var candidate = agru_candidate(m, h_prev, p);
  const Var keep = ad::sub(Var::constant(Tensor::scalar(1.0)), a);
  return ad::add(ad::scale_by(candidate, a), ad::scale_by(h_prev, keep));
}

Var agru_summarize(std::span<const Var> memories, const Var& weights, const AgruParams& p) {
  if (memories.empty()) throw ContractError("agru_summarize: empty memory bank");
  if (!weights.defined() || weights.shape() != Shape{memories.size()}) {
    throw DimensionError("agru_summarize: " + std::to_string(memories.size()) + " memories but weights " +
                         (weights.defined() ? shape_str(weights.shape()) : std::string("undefined")));
  }
  Var h = zero_state(p.hidden_size());
  for (std::size_t k = 0; k < memories.size(); ++k) {
    h = agru_step(memories[k], ad::element(weights, k), h, p);
  }
  return h;
}

BiContext biagru_summarize(std::span<const Var> memories, const Var& weights, const AgruParams& pf,
                           const AgruParams& pb) {
  BiContext out;
  out.forward = agru_summarize(memories, weights, pf);
  if (pb.hidden_size() != pf.hidden_size()) {
    throw DimensionError("biagru_summarize: direction hidden sizes differ");
  }
  Var h = zero_state(pb.hidden_size());
  for (std::size_t k = memories.size(); k-- > 0;) {
    h = agru_step(memories[k], ad::element(weights, k), h, pb);
  }
  out.backward = h;
  return out;
}

}  // namespace aghmn::cells
