#pragma once

#include <optional>
#include <span>
#include <vector>

#include "cdppo/nn.hpp"
#include "cdppo/vocab.hpp"

namespace cdppo {

struct ModelDims {
  int vocab = 32;
  std::size_t window = 8;
  std::size_t embed_dim = 16;
  std::size_t hidden_dim = 64;     // d_h, size of the exposed state h_t
  std::size_t encoder_hidden = 64; // intermediate width of the encoder MLP
};

using Window = std::vector<int>;

/// The last `width` tokens of prompt ++ actions[0, upto), left-padded with BOS.
Window make_window(const TokenSeq& prompt, const TokenSeq& actions, std::size_t upto,
                   std::size_t width);

struct EncoderPass {
  std::vector<Window> contexts;
  std::optional<Mlp2Cache> cache;
  Tensor h;  // [n, d_h]
};

/// Embeds a token window, concatenates the W rows and maps them through a
/// tanh Mlp2 to the state vector h_t.
struct WindowEncoder {
  std::string prefix;
  ModelDims dims;

  std::string embed() const { return prefix + ".embed"; }
  Mlp2 mlp() const;

  void init(ParamStore& store, SeededRng& rng) const;
  EncoderPass forward(const ParamStore& store, std::vector<Window> contexts) const;
  void backward(ParamStore& store, const EncoderPass& pass, const Tensor& dh) const;
};

struct PolicyPass {
  EncoderPass enc;
  Tensor logits;  // [n, V]
};

/// Token policy: window encoder plus a linear head to V logits. The same
/// layout serves the frozen reference model with a different store.
struct PolicyNet {
  WindowEncoder encoder;
  Linear head;

  explicit PolicyNet(const ModelDims& dims, std::string prefix = "policy");

  const ModelDims& dims() const { return encoder.dims; }
  void init(ParamStore& store, SeededRng& rng) const;
  PolicyPass forward(const ParamStore& store, std::vector<Window> contexts) const;
  void backward(ParamStore& store, const PolicyPass& pass, const Tensor& dlogits) const;
  // ψ(a): the embedding-table row of token a.
  std::span<const double> action_embedding(const ParamStore& store, int token) const;
};

struct CriticPass {
  EncoderPass enc;
  Tensor values;  // [n, 1]
};

struct CriticNet {
  WindowEncoder encoder;
  Linear head;

  explicit CriticNet(const ModelDims& dims, std::string prefix = "critic");

  void init(ParamStore& store, SeededRng& rng) const;
  CriticPass forward(const ParamStore& store, std::vector<Window> contexts) const;
  void backward(ParamStore& store, const CriticPass& pass, const Tensor& dvalues) const;
};

struct StepOutput {
  Tensor h;                    // [d_h]
  std::vector<double> output;  // logits (policy) or single value (critic)
};

StepOutput encode_step(const PolicyNet& net, const ParamStore& store, const Window& context);
StepOutput encode_step(const CriticNet& net, const ParamStore& store, const Window& context);

}  // namespace cdppo
