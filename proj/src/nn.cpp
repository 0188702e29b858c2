#include "cdppo/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cdppo {

namespace {

Tensor as_matrix(const Tensor& x, std::size_t expected_cols, const std::string& who) {
  if (x.rank() != 1 && x.rank() != 2) {
    throw ShapeError(who + ": input must be rank 1 or 2, got " + shape_string(x.shape()));
  }
  if (x.cols() != expected_cols) {
    throw ShapeError(who + ": input has " + std::to_string(x.cols()) + " columns, expected " +
                     std::to_string(expected_cols));
  }
  if (x.rank() == 2) return x;
  return Tensor({1, x.cols()}, std::vector<double>(x.data().begin(), x.data().end()));
}

// out[n, o] = x[n, i] · w[o, i]^T + b[o]
void affine(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& out) {
  const std::size_t n = x.rows(), in = x.cols(), o = w.rows();
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = x.data().data() + r * in;
    double* yr = out.data().data() + r * o;
    for (std::size_t j = 0; j < o; ++j) {
      const double* wj = w.data().data() + j * in;
      double acc = b[j];
      for (std::size_t k = 0; k < in; ++k) acc += wj[k] * xr[k];
      yr[j] = acc;
    }
  }
}

// Accumulates dW += dy^T x, db += sum_rows dy and returns dx = dy · W.
Tensor affine_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dw, Tensor& db) {
  const std::size_t n = x.rows(), in = x.cols(), o = w.rows();
  Tensor dx({n, in});
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = x.data().data() + r * in;
    const double* gr = dy.data().data() + r * o;
    double* dxr = dx.data().data() + r * in;
    for (std::size_t j = 0; j < o; ++j) {
      const double g = gr[j];
      if (g == 0.0) continue;
      db[j] += g;
      double* dwj = dw.data().data() + j * in;
      const double* wj = w.data().data() + j * in;
      for (std::size_t k = 0; k < in; ++k) {
        dwj[k] += g * xr[k];
        dxr[k] += g * wj[k];
      }
    }
  }
  return dx;
}

void init_normal(Tensor& t, double stddev, SeededRng& rng) {
  for (double& v : t.data()) v = stddev * rng.normal();
}

Tensor restore_rank(Tensor m, std::size_t rank) {
  if (rank == 2) return m;
  return Tensor({m.cols()}, std::vector<double>(m.data().begin(), m.data().end()));
}

}  // namespace

void Mlp2::init(ParamStore& store, SeededRng& rng) const {
  Tensor w1t({hidden, in}), w2t({out, hidden});
  if (act == Activation::relu) {
    init_normal(w1t, std::sqrt(2.0 / static_cast<double>(in)), rng);
    init_normal(w2t, std::sqrt(2.0 / static_cast<double>(hidden)), rng);
  } else {
    init_normal(w1t, std::sqrt(2.0 / static_cast<double>(in + hidden)), rng);
    init_normal(w2t, std::sqrt(2.0 / static_cast<double>(hidden + out)), rng);
  }
  store.add(w1(), std::move(w1t));
  store.add(b1(), Tensor({hidden}));
  store.add(w2(), std::move(w2t));
  store.add(b2(), Tensor({out}));
}

void Mlp2::check_shapes(const ParamStore& store) const {
  const auto& a = store.value(w1());
  const auto& b = store.value(w2());
  if (a.shape() != std::vector<std::size_t>{hidden, in} ||
      b.shape() != std::vector<std::size_t>{out, hidden} ||
      store.value(b1()).size() != hidden || store.value(b2()).size() != out) {
    throw ShapeError(prefix + ": stored weights do not match " + std::to_string(in) + "->" +
                     std::to_string(hidden) + "->" + std::to_string(out));
  }
}

Tensor Mlp2::forward(const ParamStore& store, const Tensor& x, Mlp2Cache* cache) const {
  Tensor xm = as_matrix(x, in, prefix);
  const std::size_t n = xm.rows();
  Tensor pre({n, hidden});
  affine(xm, store.value(w1()), store.value(b1()), pre);
  Tensor post = pre;
  for (double& v : post.data()) {
    v = act == Activation::relu ? std::max(v, 0.0) : std::tanh(v);
  }
  Tensor y({n, out});
  affine(post, store.value(w2()), store.value(b2()), y);
  if (cache) {
    cache->x = std::move(xm);
    cache->pre = std::move(pre);
    cache->post = std::move(post);
  }
  return restore_rank(std::move(y), x.rank());
}

Tensor Mlp2::backward(ParamStore& store, const std::optional<Mlp2Cache>& cache, const Tensor& dy) const {
  if (!cache) throw std::logic_error(prefix + ": backward called without a forward cache");
  const std::size_t n = cache->x.rows();
  Tensor dym = as_matrix(dy, out, prefix + " (dy)");
  if (dym.rows() != n) throw ShapeError(prefix + ": dy batch size differs from cached forward");
  Tensor dpost = affine_backward(cache->post, store.value(w2()), dym, store.grad(w2()), store.grad(b2()));
  for (std::size_t i = 0; i < dpost.size(); ++i) {
    if (act == Activation::relu) {
      if (cache->pre[i] <= 0.0) dpost[i] = 0.0;
    } else {
      const double t = cache->post[i];
      dpost[i] *= 1.0 - t * t;
    }
  }
  Tensor dx = affine_backward(cache->x, store.value(w1()), dpost, store.grad(w1()), store.grad(b1()));
  return restore_rank(std::move(dx), dy.rank());
}

void Linear::init(ParamStore& store, SeededRng& rng) const {
  Tensor wt({out, in});
  init_normal(wt, std::sqrt(2.0 / static_cast<double>(in + out)), rng);
  store.add(w(), std::move(wt));
  store.add(b(), Tensor({out}));
}

Tensor Linear::forward(const ParamStore& store, const Tensor& x) const {
  Tensor xm = as_matrix(x, in, prefix);
  Tensor y({xm.rows(), out});
  affine(xm, store.value(w()), store.value(b()), y);
  return restore_rank(std::move(y), x.rank());
}

Tensor Linear::backward(ParamStore& store, const Tensor& x, const Tensor& dy) const {
  Tensor xm = as_matrix(x, in, prefix);
  Tensor dym = as_matrix(dy, out, prefix + " (dy)");
  Tensor dx = affine_backward(xm, store.value(w()), dym, store.grad(w()), store.grad(b()));
  return restore_rank(std::move(dx), x.rank());
}

void log_softmax_into(std::span<const double> logits, double temperature, std::span<double> out) {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  double mx = -std::numeric_limits<double>::infinity();
  for (double z : logits) mx = std::max(mx, z / temperature);
  if (!std::isfinite(mx)) throw NumericError("log-softmax over non-finite logits");
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z / temperature - mx);
  const double lse = mx + std::log(sum);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] / temperature - lse;
}

std::vector<double> log_softmax(std::span<const double> logits, double temperature) {
  std::vector<double> out(logits.size());
  log_softmax_into(logits, temperature, out);
  return out;
}

Tensor softmax_logprobs(const Tensor& logits, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  Tensor out(logits.shape());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    log_softmax_into(logits.row(r), temperature, out.row(r));
  }
  return out;
}

}  // namespace cdppo
