#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdppo/params.hpp"
#include "cdppo/rng.hpp"
#include "cdppo/tensor.hpp"

namespace cdppo {

enum class Activation { relu, tanh };

struct Mlp2Cache {
  Tensor x;     // [n, in]
  Tensor pre;   // [n, hidden]
  Tensor post;  // [n, hidden]
};

/// Two-layer perceptron y = w2·act(w1·x + b1) + b2 whose weights live in a
/// ParamStore under `prefix`.w1/.b1/.w2/.b2; w1 is [hidden, in], w2 is
/// [out, hidden]. Inputs are row batches [n, in] (a rank-1 x is one row).
struct Mlp2 {
  std::string prefix;
  std::size_t in = 0;
  std::size_t hidden = 0;
  std::size_t out = 0;
  Activation act = Activation::relu;

  std::string w1() const { return prefix + ".w1"; }
  std::string b1() const { return prefix + ".b1"; }
  std::string w2() const { return prefix + ".w2"; }
  std::string b2() const { return prefix + ".b2"; }

  // He init for relu, Xavier for tanh; biases zero.
  void init(ParamStore& store, SeededRng& rng) const;
  void check_shapes(const ParamStore& store) const;

  Tensor forward(const ParamStore& store, const Tensor& x, Mlp2Cache* cache = nullptr) const;
  /// Accumulates parameter gradients into `store` and returns dL/dx with the
  /// same rank as the cached input.
  Tensor backward(ParamStore& store, const std::optional<Mlp2Cache>& cache, const Tensor& dy) const;
};

/// Affine map y = w·x + b with w [out, in].
struct Linear {
  std::string prefix;
  std::size_t in = 0;
  std::size_t out = 0;

  std::string w() const { return prefix + ".w"; }
  std::string b() const { return prefix + ".b"; }

  void init(ParamStore& store, SeededRng& rng) const;  // Xavier
  Tensor forward(const ParamStore& store, const Tensor& x) const;
  Tensor backward(ParamStore& store, const Tensor& x, const Tensor& dy) const;
};

/// Row-wise log-softmax of logits / temperature, max-subtracted.
Tensor softmax_logprobs(const Tensor& logits, double temperature);
void log_softmax_into(std::span<const double> logits, double temperature, std::span<double> out);
std::vector<double> log_softmax(std::span<const double> logits, double temperature = 1.0);

}  // namespace cdppo
