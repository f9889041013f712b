#pragma once

#include <span>
#include <string>
#include <vector>

#include "aghmn/autodiff.hpp"
#include "aghmn/rng.hpp"

namespace aghmn::cells {

/// Standard GRU weights. Input maps are hidden x input, recurrent maps hidden x hidden.
struct GruParams {
  ad::Var Wz, Wr, Wh;
  ad::Var Uz, Ur, Uh;
  ad::Var bz, br, bh;

  /// Registers "<prefix>.Wz" ... in params, uniform in +-1/sqrt(hidden).
  static GruParams create(ad::ParamSet& params, const std::string& prefix, std::size_t input,
                          std::size_t hidden, Rng& rng);
  /// Builds from explicit tensors (tests, oracles). Leaves are trainable.
  static GruParams from_tensors(const std::vector<Tensor>& nine);

  std::size_t input_size() const { return Wz.shape()[1]; }
  std::size_t hidden_size() const { return Wz.shape()[0]; }
  void validate() const;
};

/// Attention GRU weights: the update gate is replaced by the attention scalar,
/// so only reset-gate and candidate parameters exist.
struct AgruParams {
  ad::Var Wr, Wh;
  ad::Var Ur, Uh;
  ad::Var br, bh;

  static AgruParams create(ad::ParamSet& params, const std::string& prefix, std::size_t input,
                           std::size_t hidden, Rng& rng);
  static AgruParams from_tensors(const std::vector<Tensor>& six);

  std::size_t input_size() const { return Wr.shape()[1]; }
  std::size_t hidden_size() const { return Wr.shape()[0]; }
  void validate() const;
};

/// Uniform in [-1/sqrt(hidden), +1/sqrt(hidden)].
Tensor uniform_init(const Shape& shape, std::size_t hidden, Rng& rng);

ad::Var zero_state(std::size_t hidden);

ad::Var gru_step(const ad::Var& x, const ad::Var& h_prev, const GruParams& p);

/// Left-to-right fold of gru_step from a zero state; one state per input.
std::vector<ad::Var> gru_encode(std::span<const ad::Var> seq, const GruParams& p);

struct BiStates {
  std::vector<ad::Var> fwd;
  std::vector<ad::Var> bwd;  // bwd[n] has read seq[n..end]
};

BiStates bigru_encode(std::span<const ad::Var> seq, const GruParams& fwd, const GruParams& bwd);

/// Reset-gated candidate h~ of the attention GRU.
ad::Var agru_candidate(const ad::Var& m, const ad::Var& h_prev, const AgruParams& p);

/// h = a * h~ + (1 - a) * h_prev with a in [0,1] held as a shape {1} node.
ad::Var agru_step(const ad::Var& m, const ad::Var& a, const ad::Var& h_prev, const AgruParams& p);

/// Final state of agru_step folded over k = 1..K from h_0 = 0.
/// weights is a shape {K} node (usually a softmax output).
ad::Var agru_summarize(std::span<const ad::Var> memories, const ad::Var& weights, const AgruParams& p);

struct BiContext {
  ad::Var forward;
  ad::Var backward;
};

/// Forward pass over k = 1..K with pf, backward pass over k = K..1 with pb.
BiContext biagru_summarize(std::span<const ad::Var> memories, const ad::Var& weights,
                           const AgruParams& pf, const AgruParams& pb);

}  // namespace aghmn::cells
