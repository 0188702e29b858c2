#include "cdppo/icm.hpp"

#include <algorithm>
#include <cmath>

#include "cdppo/sampler.hpp"

namespace cdppo {

IcmNets::IcmNets(std::size_t state_dim, std::size_t action_dim, std::size_t feature_dim,
                 std::size_t fwd_hidden, const std::string& prefix)
    : phi{prefix + ".phi", state_dim, 2 * state_dim, feature_dim, Activation::relu},
      fwd{prefix + ".fwd", feature_dim + action_dim, fwd_hidden, feature_dim, Activation::relu} {}

void IcmNets::init(ParamStore& store, SeededRng& rng) const {
  phi.init(store, rng);
  fwd.init(store, rng);
}

Tensor encode_state(const IcmNets& icm, const ParamStore& store, const Tensor& h_ref) {
  return icm.phi.forward(store, h_ref);
}

namespace {

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) throw ShapeError("concat: row counts differ");
  const std::size_t n = a.rows(), ca = a.cols(), cb = b.cols();
  Tensor out({n, ca + cb});
  for (std::size_t r = 0; r < n; ++r) {
    std::copy(a.row(r).begin(), a.row(r).end(), out.row(r).begin());
    std::copy(b.row(r).begin(), b.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(ca));
  }
  return out;
}

}  // namespace

Tensor predict_next(const IcmNets& icm, const ParamStore& store, const Tensor& phi_s, const Tensor& psi_a) {
  if (phi_s.cols() != icm.feature_dim() || psi_a.cols() != icm.action_dim()) {
    throw ShapeError("predict_next: expected feature dim " + std::to_string(icm.feature_dim()) +
                     " and action dim " + std::to_string(icm.action_dim()));
  }
  Tensor y = icm.fwd.forward(store, concat_rows(phi_s, psi_a));
  if (phi_s.rank() == 1 && psi_a.rank() == 1) {
    return Tensor({y.cols()}, std::vector<double>(y.data().begin(), y.data().end()));
  }
  return y;
}

double icm_loss(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.size() != actual.size()) throw ShapeError("icm_loss: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - actual[i];
    s += d * d;
  }
  return 0.5 * s;
}

void GateConfig::validate(int vocab_size) const {
  if (mode == Mode::top_k && (k < 1 || k > vocab_size)) {
    throw std::invalid_argument("gate k must be in [1, " + std::to_string(vocab_size) + "]");
  }
  if (mode == Mode::random_fraction && !(fraction >= 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("gate fraction must be in [0, 1]");
  }
}

IntrinsicValue intrinsic_reward(std::span<const double> predicted, std::span<const double> actual,
                                int action, std::span<const double> policy_logits,
                                const GateConfig& gate, SeededRng& rng, bool squared) {
  if (action < 0 || static_cast<std::size_t>(action) >= policy_logits.size()) {
    throw std::out_of_range("intrinsic_reward: action " + std::to_string(action) + " out of range");
  }
  bool kept;
  if (gate.mode == GateConfig::Mode::top_k) {
    const auto top = top_k_indices(policy_logits, static_cast<std::size_t>(gate.k));
    kept = std::find(top.begin(), top.end(), action) == top.end();
  } else {
    kept = rng.uniform() < gate.fraction;
  }
  if (!kept) return {0.0, false};
  const double sq = 2.0 * icm_loss(predicted, actual);
  return {squared ? 0.5 * sq : 0.5 * std::sqrt(sq), true};
}

WhitenResult whiten(const std::vector<double>& raw, const std::vector<bool>& kept,
                    std::vector<double>& out, WhitenDivisor divisor) {
  if (raw.size() != kept.size()) throw ShapeError("whiten: raw and mask lengths differ");
  out.assign(raw.size(), 0.0);
  WhitenResult res;
  double sum = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (kept[i]) {
      sum += raw[i];
      ++res.count;
    }
  }
  if (res.count < 2) {
    res.status = WhitenStatus::skipped_too_few;
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = kept[i] ? raw[i] : 0.0;
    return res;
  }
  res.mean = sum / static_cast<double>(res.count);
  double ss = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (kept[i]) ss += (raw[i] - res.mean) * (raw[i] - res.mean);
  }
  res.sigma = std::sqrt(ss / static_cast<double>(res.count));
  if (res.sigma < 1e-8) {
    res.status = WhitenStatus::degenerate_sigma;
    return res;
  }
  const double denom = divisor == WhitenDivisor::stddev ? res.sigma : res.sigma * res.sigma;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (kept[i]) out[i] = (raw[i] - res.mean) / denom;
  }
  return res;
}

double icm_loss_and_grad(const IcmNets& icm, ParamStore& store, const std::vector<IcmTransition>& batch) {
  if (batch.empty()) throw std::invalid_argument("icm batch is empty");
  const std::size_t n = batch.size(), ds = icm.phi.in, da = icm.action_dim(), df = icm.feature_dim();
  Tensor hs({n, ds}), hn({n, ds}), psi({n, da});
  for (std::size_t r = 0; r < n; ++r) {
    const auto& b = batch[r];
    if (b.h_state.size() != ds || b.h_next.size() != ds || b.psi_action.size() != da) {
      throw ShapeError("icm transition has wrong dimensions");
    }
    std::copy(b.h_state.begin(), b.h_state.end(), hs.row(r).begin());
    std::copy(b.h_next.begin(), b.h_next.end(), hn.row(r).begin());
    std::copy(b.psi_action.begin(), b.psi_action.end(), psi.row(r).begin());
  }
  std::optional<Mlp2Cache> cache_s(std::in_place), cache_n(std::in_place), cache_f(std::in_place);
  Tensor phi_s = icm.phi.forward(store, hs, &*cache_s);
  Tensor phi_n = icm.phi.forward(store, hn, &*cache_n);
  Tensor pred = icm.fwd.forward(store, concat_rows(phi_s, psi), &*cache_f);

  double total = 0.0;
  Tensor dpred({n, df}), dphi_n({n, df});
  for (std::size_t r = 0; r < n; ++r) {
    total += icm_loss(pred.row(r), phi_n.row(r));
    for (std::size_t j = 0; j < df; ++j) {
      const double d = (pred.at(r, j) - phi_n.at(r, j)) / static_cast<double>(n);
      dpred.at(r, j) = d;
      dphi_n.at(r, j) = -d;
    }
  }
  const double mean = total / static_cast<double>(n);
  if (!std::isfinite(mean)) throw NumericError("ICM loss is not finite");

  Tensor dinput = icm.fwd.backward(store, cache_f, dpred);
  Tensor dphi_s({n, df});
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(dinput.row(r).begin(), df, dphi_s.row(r).begin());
  }
  icm.phi.backward(store, cache_s, dphi_s);
  icm.phi.backward(store, cache_n, dphi_n);
  return mean;
}

double icm_train_step(const IcmNets& icm, ParamStore& store, const std::vector<IcmTransition>& batch,
                      const AdamConfig& adam) {
  store.zero_grad();
  const double loss = icm_loss_and_grad(icm, store, batch);
  adam_step(store, adam);
  return loss;
}

}  // namespace cdppo
