#include <cmath>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "cdppo/harness.hpp"
#include "cdppo/hashing.hpp"

namespace cdppo {

namespace {

using json = nlohmann::json;

struct CheckFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void expect(bool ok, const std::string& what) {
  if (!ok) throw CheckFailure(what);
}

void expect_near(double actual, double expected, double tol, const std::string& what) {
  if (!(std::fabs(actual - expected) <= tol)) {
    std::ostringstream ss;
    ss.precision(17);
    ss << what << ": got " << actual << ", expected " << expected << " (tol " << tol << ")";
    throw CheckFailure(ss.str());
  }
}

// Central differences on `coords` random coordinates of every entry of
// `store`; `analytic` must fill store grads for `loss`.
double max_grad_error(ParamStore& store, const std::function<double(const ParamStore&)>& loss,
                      const std::function<void(ParamStore&)>& analytic, std::size_t coords, SeededRng& rng) {
  store.zero_grad();
  analytic(store);
  std::vector<std::pair<std::string, std::size_t>> picks;
  std::vector<std::string> names;
  for (const auto& [name, p] : store.entries()) names.push_back(name);
  for (std::size_t i = 0; i < coords; ++i) {
    const std::string& name = names[rng.below(names.size())];
    picks.emplace_back(name, rng.below(store.value(name).size()));
  }
  const double h = 1e-5;
  double worst = 0.0;
  for (const auto& [name, idx] : picks) {
    double& w = store.value(name)[idx];
    const double saved = w;
    w = saved + h;
    const double up = loss(store);
    w = saved - h;
    const double down = loss(store);
    w = saved;
    const double numeric = (up - down) / (2 * h);
    const double a = store.grad(name)[idx];
    worst = std::max(worst, std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-6}));
  }
  store.zero_grad();
  return worst;
}

Tensor random_tensor(std::vector<std::size_t> shape, SeededRng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.normal();
  return t;
}

double weighted_sum(const Tensor& y, const Tensor& c) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * c[i];
  return s;
}

void check_gradients() {
  SeededRng rng(11);
  const std::size_t coords = 120;
  for (Activation act : {Activation::relu, Activation::tanh}) {
    Mlp2 net{"m", 3, 5, 2, act};
    ParamStore store;
    net.init(store, rng);
    const Tensor x = random_tensor({4, 3}, rng), c = random_tensor({4, 2}, rng);
    const double err = max_grad_error(
        store, [&](const ParamStore& s) { return weighted_sum(net.forward(s, x), c); },
        [&](ParamStore& s) {
          std::optional<Mlp2Cache> cache(std::in_place);
          net.forward(s, x, &*cache);
          net.backward(s, cache, c);
        },
        coords, rng);
    expect(err < 1e-4, "mlp2 gradient relative error " + std::to_string(err));
  }

  ModelDims dims{12, 4, 5, 8, 10};
  const std::vector<Window> contexts{{0, 0, 3, 4}, {5, 6, 7, 8}, {0, 11, 2, 2}};
  {
    PolicyNet net(dims);
    ParamStore store;
    net.init(store, rng);
    const Tensor c = random_tensor({3, 12}, rng);
    const double err = max_grad_error(
        store, [&](const ParamStore& s) { return weighted_sum(net.forward(s, contexts).logits, c); },
        [&](ParamStore& s) { net.backward(s, net.forward(s, contexts), c); }, coords, rng);
    expect(err < 1e-4, "policy gradient relative error " + std::to_string(err));
  }
  {
    CriticNet net(dims);
    ParamStore store;
    net.init(store, rng);
    const Tensor c = random_tensor({3, 1}, rng);
    const double err = max_grad_error(
        store, [&](const ParamStore& s) { return weighted_sum(net.forward(s, contexts).values, c); },
        [&](ParamStore& s) { net.backward(s, net.forward(s, contexts), c); }, coords, rng);
    expect(err < 1e-4, "critic gradient relative error " + std::to_string(err));
  }
  {
    IcmNets icm(8, 5, 8, 12);
    ParamStore store;
    icm.init(store, rng);
    std::vector<IcmTransition> batch;
    for (int i = 0; i < 5; ++i) {
      auto vec = [&](std::size_t n) {
        std::vector<double> v(n);
        for (double& x : v) x = rng.normal();
        return v;
      };
      batch.push_back({vec(8), vec(5), vec(8)});
    }
    auto loss = [&](const ParamStore& s) {
      double total = 0.0;
      for (const auto& b : batch) {
        const Tensor phi_s = encode_state(icm, s, Tensor({8}, b.h_state));
        const Tensor phi_n = encode_state(icm, s, Tensor({8}, b.h_next));
        total += icm_loss(predict_next(icm, s, phi_s, Tensor({5}, b.psi_action)).data(), phi_n.data());
      }
      return total / static_cast<double>(batch.size());
    };
    const double err = max_grad_error(
        store, loss, [&](ParamStore& s) { icm_loss_and_grad(icm, s, batch); }, coords, rng);
    expect(err < 1e-4, "icm gradient relative error " + std::to_string(err));
  }
}

void check_gae() {
  SeededRng rng(5);
  for (int inst = 0; inst < 1000; ++inst) {
    const std::size_t T = 1 + rng.below(6);
    const double gamma = 0.5 + 0.5 * rng.uniform(), lambda = rng.uniform();
    std::vector<double> v(T), r(T);
    for (std::size_t t = 0; t < T; ++t) {
      v[t] = rng.normal();
      r[t] = rng.normal();
    }
    const GaeResult g = compute_gae(v, r, gamma, lambda);
    for (std::size_t t = 0; t < T; ++t) {
      double a = 0.0;
      for (std::size_t l = 0; t + l < T; ++l) {
        const double next = t + l + 1 < T ? v[t + l + 1] : 0.0;
        a += std::pow(gamma * lambda, static_cast<double>(l)) * (r[t + l] + gamma * next - v[t + l]);
      }
      expect_near(g.advantages[t], a, 1e-12, "gae advantage");
      expect_near(g.q_targets[t], a + v[t], 1e-12, "gae q target");
    }
  }
}

void check_whitening() {
  std::vector<double> out;
  whiten({1, 2, 3}, {true, true, true}, out);
  expect_near(out[0], -std::sqrt(1.5), 1e-12, "whiten [1,2,3][0]");
  expect_near(out[2], std::sqrt(1.5), 1e-12, "whiten [1,2,3][2]");
  const WhitenResult d = whiten({5, 5}, {true, true}, out);
  expect(d.status == WhitenStatus::degenerate_sigma && out[0] == 0.0 && out[1] == 0.0, "degenerate sigma path");
  SeededRng rng(3);
  std::vector<double> raw(200);
  std::vector<bool> kept(200);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    kept[i] = rng.uniform() < 0.3;
    raw[i] = kept[i] ? std::fabs(rng.normal()) * 3.0 : 0.0;
  }
  whiten(raw, kept, out);
  double sum = 0.0, sq = 0.0, n = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!kept[i]) {
      expect(out[i] == 0.0 && !std::signbit(out[i]), "gated position stays exactly 0");
      continue;
    }
    sum += out[i];
    n += 1.0;
  }
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (kept[i]) sq += (out[i] - sum / n) * (out[i] - sum / n);
  }
  expect_near(sum / n, 0.0, 1e-9, "whitened mean");
  expect_near(std::sqrt(sq / n), 1.0, 1e-9, "whitened std");
}

void check_gate() {
  SeededRng rng(9);
  const std::vector<double> logits{std::log(0.5), std::log(0.3), std::log(0.2)};
  const std::vector<double> pred{3, 4}, actual{0, 0};
  GateConfig top1;
  const IntrinsicValue a = intrinsic_reward(pred, actual, 0, logits, top1, rng);
  expect(!a.kept && a.value == 0.0, "top-1 action is gated");
  const IntrinsicValue b = intrinsic_reward(pred, actual, 2, logits, top1, rng);
  expect(b.kept, "non-top-1 action is kept");
  expect_near(b.value, 2.5, 1e-12, "half two-norm reward");
  GateConfig all{GateConfig::Mode::top_k, 3, 1.0};
  for (int act = 0; act < 3; ++act) {
    expect(!intrinsic_reward(pred, actual, act, logits, all, rng).kept, "k = V gates every action");
  }
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> l(10);
    for (double& x : l) x = std::round(rng.normal() * 2.0);
    for (int k = 1; k < 10; ++k) {
      for (int act = 0; act < 10; ++act) {
        const bool gated_k = !intrinsic_reward(pred, actual, act, l, {GateConfig::Mode::top_k, k, 1.0}, rng).kept;
        const bool gated_k1 =
            !intrinsic_reward(pred, actual, act, l, {GateConfig::Mode::top_k, k + 1, 1.0}, rng).kept;
        expect(!gated_k || gated_k1, "gated set under k is a subset of the set under k+1");
      }
    }
  }
  for (double f : {0.4, 0.6, 0.8, 1.0}) {
    const GateConfig g{GateConfig::Mode::random_fraction, 1, f};
    int kept = 0;
    for (int i = 0; i < 4000; ++i) kept += intrinsic_reward(pred, actual, 1, logits, g, rng).kept;
    expect_near(kept / 4000.0, f, 0.05, "random_fraction kept share");
  }
}

void check_reduction() {
  ExperimentConfig base = parse_config(
      "task = multi_target\nmodel.hidden_dim = 16\nmodel.encoder_hidden = 16\nmodel.embed_dim = 8\n"
      "task.corpus_size = 32\ntask.num_prompts = 32\nsft.epochs = 2\ntrain.batch_size = 16\n"
      "eval.inputs = 4\ntask.eval_prompts = 4\nicm.hidden = 16\n");
  auto run = [](ExperimentConfig c) {
    const Pipeline p(c);
    const TrainOutcome out = train_in_memory(p, 3, 2);
    std::string log;
    for (const auto& m : out.metrics) log += metrics_json(m) + "\n";
    std::vector<NamedTensor> entries;
    append_store(entries, "policy", out.state.policy, true);
    append_store(entries, "critic", out.state.critic, true);
    append_store(entries, "icm", out.state.icm, true);
    std::string bytes;
    for (const auto& e : entries) {
      bytes += e.name;
      for (double v : e.tensor.data()) bytes.append(reinterpret_cast<const char*>(&v), sizeof v);
    }
    return std::make_pair(log, sha1_hex(bytes));
  };
  ExperimentConfig ppo = base;
  ppo.train.method = Method::ppo;
  ExperimentConfig eta0 = base;
  eta0.train.eta = 0.0;
  ExperimentConfig kv = base;
  kv.train.gate.k = base.model.vocab;
  const auto ref = run(ppo);
  ppo.train.gate.k = base.model.vocab;
  const auto ref_kv = run(ppo);
  expect(run(eta0) == ref, "eta = 0 run differs from vanilla PPO");
  expect(run(kv) == ref_kv, "gate k = V run differs from vanilla PPO");
}

std::vector<std::vector<std::string>> as_set(const json& j) { return j.get<std::vector<std::vector<std::string>>>(); }

void check_metric_goldens(const json& g) {
  const double tol = g.at("tolerance").get<double>();
  for (const auto& c : g.at("distinct_n")) {
    expect_near(distinct_n(c.at("tokens").get<Completion>(), c.at("n").get<int>()), c.at("expected").get<double>(),
                tol, "distinct_n '" + c.at("name").get<std::string>() + "'");
  }
  for (const auto& c : g.at("ead_term")) {
    expect_near(ead_term(c.at("distinct").get<std::size_t>(), c.at("total").get<std::size_t>(), c.at("vocab").get<int>()),
                c.at("expected").get<double>(), tol, "ead '" + c.at("name").get<std::string>() + "'");
  }
  for (const auto& c : g.at("bleu")) {
    const auto refs = as_set(c.at("references"));
    expect_near(bleu(c.at("hypothesis").get<Completion>(), refs, c.at("max_n").get<int>()),
                c.at("expected").get<double>(), tol, "bleu '" + c.at("name").get<std::string>() + "'");
  }
  for (const auto& c : g.at("self_bleu")) {
    const auto set = as_set(c.at("set"));
    const double v = self_bleu(set, c.at("max_n").get<int>());
    const std::string name = "self_bleu '" + c.at("name").get<std::string>() + "'";
    if (c.contains("below")) {
      expect(v < c.at("below").get<double>(), name + ": " + std::to_string(v));
    } else {
      expect_near(v, c.at("expected").get<double>(), tol, name);
    }
  }
  for (const auto& c : g.at("mean_pairwise_cosine")) {
    expect_near(mean_pairwise_cosine(c.at("vectors").get<std::vector<std::vector<double>>>()),
                c.at("expected").get<double>(), tol, "pairwise cosine '" + c.at("name").get<std::string>() + "'");
  }
  for (const auto& c : g.at("embed_cosine")) {
    CompletionSet set{"golden", as_set(c.at("set")), {}};
    expect_near(embed_cosine(set), c.at("expected").get<double>(), tol,
                "embed_cosine '" + c.at("name").get<std::string>() + "'");
  }
}

void check_network_goldens(const json& g) {
  const double tol = g.at("network_tolerance").get<double>();
  const ModelDims dims;
  {
    const json& c = g.at("encode_step");
    PolicyNet net(dims);
    ParamStore store;
    SeededRng rng(c.at("seed").get<std::uint64_t>());
    net.init(store, rng);
    const StepOutput out = encode_step(net, store, c.at("context").get<Window>());
    const auto h = c.at("h").get<std::vector<double>>();
    expect(h.size() == out.h.size(), "encode_step golden length");
    for (std::size_t i = 0; i < h.size(); ++i) expect_near(out.h[i], h[i], tol, "encode_step h[" + std::to_string(i) + "]");
  }
  {
    const json& c = g.at("predict_next");
    IcmNets icm(dims.hidden_dim, dims.embed_dim, dims.hidden_dim, c.at("fwd_hidden").get<std::size_t>());
    ParamStore store;
    SeededRng rng(c.at("seed").get<std::uint64_t>());
    icm.init(store, rng);
    const Tensor phi = encode_state(icm, store, Tensor({dims.hidden_dim}, c.at("h_ref").get<std::vector<double>>()));
    const Tensor pred = predict_next(icm, store, phi, Tensor({dims.embed_dim}, c.at("psi").get<std::vector<double>>()));
    const auto want = c.at("prediction").get<std::vector<double>>();
    expect(want.size() == pred.size(), "predict_next golden length");
    for (std::size_t i = 0; i < want.size(); ++i) {
      expect_near(pred[i], want[i], tol, "predict_next[" + std::to_string(i) + "]");
    }
  }
}

}  // namespace

int cmd_selftest(const std::filesystem::path& golden_path, std::ostream& log) {
  int failures = 0;
  auto run = [&](const std::string& name, const std::function<void()>& fn) {
    try {
      fn();
      log << "[PASS] " << name << "\n";
    } catch (const std::exception& e) {
      ++failures;
      log << "[FAIL] " << name << ": " << e.what() << "\n";
    }
  };
  run("gradient checks", check_gradients);
  run("gae oracle", check_gae);
  run("whitening", check_whitening);
  run("gate semantics", check_gate);
  run("ppo reduction", check_reduction);

  json golden;
  run("golden file " + golden_path.string(), [&] { golden = json::parse(read_file(golden_path)); });
  if (!golden.is_null()) {
    run("metric goldens", [&] { check_metric_goldens(golden); });
    run("network goldens", [&] { check_network_goldens(golden); });
  } else {
    ++failures;
    log << "[FAIL] metric goldens: golden file unavailable\n";
  }
  log << (failures ? std::to_string(failures) + " selftest check(s) failed" : std::string("all selftest checks passed"))
      << "\n";
  return failures;
}

}  // namespace cdppo
