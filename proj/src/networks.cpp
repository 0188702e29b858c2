#include "cdppo/networks.hpp"

#include <cmath>

namespace cdppo {

Window make_window(const TokenSeq& prompt, const TokenSeq& actions, std::size_t upto,
                   std::size_t width) {
  Window w(width, Vocab::kBos);
  const std::size_t total = prompt.size() + upto;
  const std::size_t take = std::min(width, total);
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t src = total - take + i;
    w[width - take + i] = src < prompt.size() ? prompt[src] : actions[src - prompt.size()];
  }
  return w;
}

Mlp2 WindowEncoder::mlp() const {
  return Mlp2{prefix + ".enc", dims.window * dims.embed_dim, dims.encoder_hidden, dims.hidden_dim,
              Activation::tanh};
}

void WindowEncoder::init(ParamStore& store, SeededRng& rng) const {
  Tensor e({static_cast<std::size_t>(dims.vocab), dims.embed_dim});
  const double sd = 1.0 / std::sqrt(static_cast<double>(dims.embed_dim));
  for (double& v : e.data()) v = sd * rng.normal();
  store.add(embed(), std::move(e));
  mlp().init(store, rng);
}

EncoderPass WindowEncoder::forward(const ParamStore& store, std::vector<Window> contexts) const {
  const Tensor& table = store.value(embed());
  const std::size_t n = contexts.size(), de = dims.embed_dim;
  Tensor x({n, dims.window * de});
  for (std::size_t r = 0; r < n; ++r) {
    const Window& c = contexts[r];
    if (c.size() != dims.window) {
      throw ShapeError(prefix + ": context has " + std::to_string(c.size()) +
                       " tokens, window is " + std::to_string(dims.window));
    }
    for (std::size_t k = 0; k < c.size(); ++k) {
      if (c[k] < 0 || c[k] >= dims.vocab) {
        throw std::out_of_range(prefix + ": token id " + std::to_string(c[k]) + " out of range");
      }
      auto src = table.row(static_cast<std::size_t>(c[k]));
      std::copy(src.begin(), src.end(), x.row(r).begin() + static_cast<std::ptrdiff_t>(k * de));
    }
  }
  EncoderPass pass;
  pass.cache.emplace();
  pass.h = mlp().forward(store, x, &*pass.cache);
  pass.contexts = std::move(contexts);
  return pass;
}

void WindowEncoder::backward(ParamStore& store, const EncoderPass& pass, const Tensor& dh) const {
  Tensor dx = mlp().backward(store, pass.cache, dh);
  Tensor& dtable = store.grad(embed());
  const std::size_t de = dims.embed_dim;
  for (std::size_t r = 0; r < pass.contexts.size(); ++r) {
    const Window& c = pass.contexts[r];
    for (std::size_t k = 0; k < c.size(); ++k) {
      auto dst = dtable.row(static_cast<std::size_t>(c[k]));
      auto src = dx.row(r).subspan(k * de, de);
      for (std::size_t j = 0; j < de; ++j) dst[j] += src[j];
    }
  }
}

PolicyNet::PolicyNet(const ModelDims& dims, std::string prefix)
    : encoder{prefix, dims},
      head{prefix + ".head", dims.hidden_dim, static_cast<std::size_t>(dims.vocab)} {}

void PolicyNet::init(ParamStore& store, SeededRng& rng) const {
  encoder.init(store, rng);
  head.init(store, rng);
}

PolicyPass PolicyNet::forward(const ParamStore& store, std::vector<Window> contexts) const {
  PolicyPass pass;
  pass.enc = encoder.forward(store, std::move(contexts));
  pass.logits = head.forward(store, pass.enc.h);
  return pass;
}

void PolicyNet::backward(ParamStore& store, const PolicyPass& pass, const Tensor& dlogits) const {
  Tensor dh = head.backward(store, pass.enc.h, dlogits);
  encoder.backward(store, pass.enc, dh);
}

std::span<const double> PolicyNet::action_embedding(const ParamStore& store, int token) const {
  if (token < 0 || token >= dims().vocab) {
    throw std::out_of_range("action id " + std::to_string(token) + " out of range");
  }
  return store.value(encoder.embed()).row(static_cast<std::size_t>(token));
}

CriticNet::CriticNet(const ModelDims& dims, std::string prefix)
    : encoder{prefix, dims}, head{prefix + ".head", dims.hidden_dim, 1} {}

void CriticNet::init(ParamStore& store, SeededRng& rng) const {
  encoder.init(store, rng);
  head.init(store, rng);
}

CriticPass CriticNet::forward(const ParamStore& store, std::vector<Window> contexts) const {
  CriticPass pass;
  pass.enc = encoder.forward(store, std::move(contexts));
  pass.values = head.forward(store, pass.enc.h);
  return pass;
}

void CriticNet::backward(ParamStore& store, const CriticPass& pass, const Tensor& dvalues) const {
  Tensor dh = head.backward(store, pass.enc.h, dvalues);
  encoder.backward(store, pass.enc, dh);
}

namespace {
Tensor first_row(const Tensor& m) {
  auto r = m.row(0);
  return Tensor({r.size()}, std::vector<double>(r.begin(), r.end()));
}
}  // namespace

StepOutput encode_step(const PolicyNet& net, const ParamStore& store, const Window& context) {
  PolicyPass p = net.forward(store, {context});
  auto l = p.logits.row(0);
  return {first_row(p.enc.h), std::vector<double>(l.begin(), l.end())};
}

StepOutput encode_step(const CriticNet& net, const ParamStore& store, const Window& context) {
  CriticPass p = net.forward(store, {context});
  return {first_row(p.enc.h), {p.values[0]}};
}

}  // namespace cdppo
