// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cdppo/harness.hpp"
#include "cdppo/hashing.hpp"
#include "oracles.hpp"

using namespace cdppo;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

const char* kTiny =
    "task = multi_target\nmodel.hidden_dim = 16\nmodel.encoder_hidden = 16\nmodel.embed_dim = 8\n"
    "task.corpus_size = 32\ntask.num_prompts = 32\nsft.epochs = 2\ntrain.batch_size = 16\n"
    "eval.inputs = 4\neval.m = 4\ntask.eval_prompts = 4\nicm.hidden = 16\nicm.updates = 2\nseeds = 0\n";

ExperimentConfig defaults() { return parse_config("task = multi_target\n"); }

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(prec) << v;
  return s.str();
}

// ---- 1 ----

Outcome reduction() {
  const fs::path dir = oracle::temp_dir("acc_reduction");
  ExperimentConfig ppo = defaults();
  ppo.train.method = Method::ppo;
  ppo.train.seed = 0;
  ExperimentConfig eta0 = ppo;
  eta0.train.method = Method::cd_rlhf;
  eta0.train.eta = 0.0;
  ExperimentConfig kv = ppo;
  kv.train.method = Method::cd_rlhf;
  kv.train.gate.k = kv.model.vocab;
  ExperimentConfig ppo_kv = ppo;
  ppo_kv.train.gate.k = ppo.model.vocab;

  cmd_train(ppo, dir / "ppo");
  cmd_train(eta0, dir / "eta0");
  cmd_train(kv, dir / "kv");
  cmd_train(ppo_kv, dir / "ppo_kv");
  auto same = [&](const char* a, const char* b, const char* file) {
    return read_file(dir / a / file) == read_file(dir / b / file);
  };
  const bool eta_ok = same("ppo", "eta0", "metrics.jsonl") && same("ppo", "eta0", "final.ckpt");
  const bool kv_ckpt = same("ppo", "kv", "final.ckpt");
  const bool kv_log = same("ppo_kv", "kv", "metrics.jsonl") && same("ppo_kv", "kv", "final.ckpt");
  return {eta_ok && kv_ckpt && kv_log,
          std::string("eta=0 logs+checkpoint ") + (eta_ok ? "identical" : "DIFFER") + "; k=V checkpoint " +
              (kv_ckpt ? "identical" : "DIFFERS") + ", logs " + (kv_log ? "identical" : "DIFFER") +
              " to ppo with the same gate config"};
}

// ---- 2 ----

Outcome gradients() {
  ModelDims dims{12, 4, 5, 8, 10};
  SeededRng rng(2024);
  const std::size_t coords = 120;
  std::vector<Window> contexts;
  for (int i = 0; i < 3; ++i) {
    Window w;
    for (std::size_t k = 0; k < dims.window; ++k) w.push_back(static_cast<int>(rng.below(dims.vocab)));
    contexts.push_back(w);
  }
  double worst = 0.0;
  std::ostringstream detail;

  {
    PolicyNet net(dims);
    ParamStore store;
    net.init(store, rng);
    const Tensor c = oracle::random_tensor({contexts.size(), static_cast<std::size_t>(dims.vocab)}, rng);
    auto loss = [&](const ParamStore& s) { return oracle::dot(net.forward(s, contexts).logits, c); };
    store.zero_grad();
    net.backward(store, net.forward(store, contexts), c);
    const double w = oracle::finite_difference(store, loss, coords, rng).worst;
    detail << "policy " << std::scientific << std::setprecision(1) << w;
    worst = std::max(worst, w);
  }
  {
    CriticNet net(dims);
    ParamStore store;
    net.init(store, rng);
    const Tensor c = oracle::random_tensor({contexts.size(), 1}, rng);
    auto loss = [&](const ParamStore& s) { return oracle::dot(net.forward(s, contexts).values, c); };
    store.zero_grad();
    net.backward(store, net.forward(store, contexts), c);
    const double w = oracle::finite_difference(store, loss, coords, rng).worst;
    detail << ", critic " << w;
    worst = std::max(worst, w);
  }
  {
    IcmNets icm(8, 5, 6, 12);
    ParamStore store;
    icm.init(store, rng);
    std::vector<IcmTransition> batch(4);
    for (auto& tr : batch) {
      for (int i = 0; i < 8; ++i) tr.h_state.push_back(rng.normal());
      for (int i = 0; i < 5; ++i) tr.psi_action.push_back(rng.normal());
      for (int i = 0; i < 8; ++i) tr.h_next.push_back(rng.normal());
    }
    auto loss = [&](const ParamStore& s) {
      double total = 0.0;
      for (const auto& tr : batch) {
        const Tensor pred =
            predict_next(icm, s, encode_state(icm, s, Tensor({8}, tr.h_state)), Tensor({5}, tr.psi_action));
        const Tensor next = encode_state(icm, s, Tensor({8}, tr.h_next));
        total += icm_loss(pred.data(), next.data());
      }
      return total / static_cast<double>(batch.size());
    };
    store.zero_grad();
    icm_loss_and_grad(icm, store, batch);
    const double w = oracle::finite_difference(store, loss, coords, rng).worst;
    detail << ", icm " << w;
    worst = std::max(worst, w);
  }
  detail << " (worst relative error over " << coords << " coordinates per network)";
  return {worst < 1e-4, detail.str()};
}

// ---- 3 ----

Outcome gae() {
  SeededRng rng(31337);
  double worst = 0.0;
  for (int inst = 0; inst < 1000; ++inst) {
    const std::size_t T = 1 + rng.below(6);
    const double gamma = 0.5 + 0.5 * rng.uniform(), lambda = rng.uniform();
    std::vector<double> v(T), r(T);
    for (std::size_t t = 0; t < T; ++t) {
      v[t] = rng.normal();
      r[t] = rng.normal();
    }
    const auto want = oracle::gae_double_loop(v, r, gamma, lambda);
    const auto got = compute_gae(v, r, gamma, lambda);
    const auto one = compute_gae(v, r, gamma, 1.0);
    const auto zero = compute_gae(v, r, gamma, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      worst = std::max(worst, std::fabs(got.advantages[t] - want[t]));
      double ret = 0.0;
      for (std::size_t l = t; l < T; ++l) ret += std::pow(gamma, static_cast<double>(l - t)) * r[l];
      worst = std::max(worst, std::fabs(one.advantages[t] - (ret - v[t])));
      const double next = t + 1 < T ? v[t + 1] : 0.0;
      worst = std::max(worst, std::fabs(zero.advantages[t] - (r[t] + gamma * next - v[t])));
    }
  }
  return {worst <= 1e-12, "max |recursive - double loop| over 1000 instances and closed forms = " +
                              [&] { std::ostringstream s; s << std::scientific << std::setprecision(1) << worst; return s.str(); }()};
}

// ---- 4 ----

Outcome curiosity_decay() {
  ExperimentConfig cfg = defaults();
  cfg.train.batch_size = 16;
  const Models models(cfg.model, cfg.resolved_feature_dim(), cfg.icm_hidden);
  const IcmNets& icm = models.icm;
  int passed = 0;
  std::ostringstream detail;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ExperimentConfig c = cfg;
    c.train.seed = seed;
    const Pipeline ps(c);
    const IterationContext cx = ps.context();
    TrainState state = train_in_memory(ps, seed, 0).state;
    double early = 0.0, best_late = 0.0;
    int reached = -1;
    for (std::size_t step = 0; step < 300; ++step) {
      state.iteration = step;
      const auto batch = collect_batch(cx, state);
      std::vector<IcmTransition> transitions;
      double raw = 0.0;
      for (const auto& tr : batch) {
        const Tensor phi = encode_state(icm, state.icm, tr.h_ref);
        for (std::size_t t = 0; t < tr.length(); ++t) {
          const auto psi = ps.models.policy.action_embedding(state.policy, tr.actions[t]);
          IcmTransition x;
          x.h_state.assign(tr.h_ref.row(t).begin(), tr.h_ref.row(t).end());
          x.h_next.assign(tr.h_ref.row(t + 1).begin(), tr.h_ref.row(t + 1).end());
          x.psi_action.assign(psi.begin(), psi.end());
          const Tensor pred = predict_next(icm, state.icm, Tensor({icm.feature_dim()}, std::vector<double>(phi.row(t).begin(), phi.row(t).end())),
                                           Tensor({icm.action_dim()}, x.psi_action));
          raw += 0.5 * std::sqrt(2.0 * icm_loss(pred.data(), phi.row(t + 1)));
          transitions.push_back(std::move(x));
        }
      }
      raw /= static_cast<double>(transitions.size());
      if (step < 10) early += raw / 10.0;
      if (step >= 10 && reached < 0 && raw <= 0.5 * early) {
        reached = static_cast<int>(step);
        best_late = raw;
      }
      icm_train_step(icm, state.icm, transitions, AdamConfig{.lr = c.train.icm_lr});
    }
    if (reached >= 0) ++passed;
    detail << (seed ? ", " : "") << "seed " << seed << ": "
           << (reached >= 0 ? "step " + std::to_string(reached) + " (" + fmt(best_late / early, 2) + "x)" : "not reached");
  }
  return {passed == 5, std::to_string(passed) + "/5 seeds reach <= 50% of the first-10-step mean within 300 steps; " +
                           detail.str()};
}

// ---- 5 ----

Outcome whitening() {
  SeededRng rng(55);
  double worst_mean = 0.0, worst_std = 0.0;
  bool gated_zero = true;
  auto check = [&](const std::vector<double>& raw, const std::vector<bool>& kept) {
    std::vector<double> out;
    if (whiten(raw, kept, out).status != WhitenStatus::applied) return;
    double s = 0, ss = 0, c = 0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (!kept[i]) {
        gated_zero = gated_zero && out[i] == 0.0 && !std::signbit(out[i]);
        continue;
      }
      s += out[i];
      ss += out[i] * out[i];
      ++c;
    }
    const double mean = s / c;
    worst_mean = std::max(worst_mean, std::fabs(mean));
    worst_std = std::max(worst_std, std::fabs(std::sqrt(ss / c - mean * mean) - 1.0));
  };
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.below(200);
    std::vector<double> raw(n);
    std::vector<bool> kept(n);
    for (std::size_t i = 0; i < n; ++i) {
      kept[i] = i < 2 || rng.uniform() < 0.2;
      raw[i] = kept[i] ? std::exp(rng.normal()) : 0.0;
    }
    check(raw, kept);
  }
  {
    ExperimentConfig cfg = defaults();
    const Pipeline p(cfg);
    const TrainState state = train_in_memory(p, 0, 0).state;
    auto batch = collect_batch(p.context(), state);
    IterationMetrics m;
    shape_batch(p.context(), state, batch, m);
    std::vector<double> white;
    std::vector<bool> kept;
    for (const auto& tr : batch) {
      white.insert(white.end(), tr.intrinsic.whitened.begin(), tr.intrinsic.whitened.end());
      kept.insert(kept.end(), tr.intrinsic.kept.begin(), tr.intrinsic.kept.end());
    }
    double s = 0, ss = 0, c = 0;
    for (std::size_t i = 0; i < white.size(); ++i) {
      if (!kept[i]) {
        gated_zero = gated_zero && white[i] == 0.0;
        continue;
      }
      s += white[i];
      ss += white[i] * white[i];
      ++c;
    }
    worst_mean = std::max(worst_mean, std::fabs(s / c));
    worst_std = std::max(worst_std, std::fabs(std::sqrt(ss / c - (s / c) * (s / c)) - 1.0));
  }
  std::vector<double> out;
  const auto deg = whiten({5, 0, 5}, {true, false, true}, out);
  const bool degenerate = deg.status == WhitenStatus::degenerate_sigma && out == std::vector<double>{0, 0, 0};
  std::ostringstream d;
  d << std::scientific << std::setprecision(1) << "max |mean| " << worst_mean << ", max |std-1| " << worst_std
    << ", gated slots " << (gated_zero ? "exactly 0" : "NOT 0") << ", degenerate sigma "
    << (degenerate ? "zeros" : "WRONG");
  return {worst_mean < 1e-9 && worst_std < 1e-9 && gated_zero && degenerate, d.str()};
}

// ---- 6 ----

Outcome gate_semantics() {
  ExperimentConfig cfg = defaults();
  const Pipeline p(cfg);
  const TrainOutcome run = train_in_memory(p, 0, 3);
  bool top1_ok = true;
  std::ostringstream d;
  d << "top-1 kept_frac";
  for (const auto& m : run.metrics) {
    top1_ok = top1_ok && m.kept_frac > 0.0 && m.kept_frac < 1.0;
    d << " " << fmt(m.kept_frac, 3);
  }
  bool frac_ok = true;
  d << "; random_fraction";
  for (double f : {0.4, 0.6, 0.8, 1.0}) {
    ExperimentConfig c = cfg;
    c.train.gate.mode = GateConfig::Mode::random_fraction;
    c.train.gate.fraction = f;
    const Pipeline pf(c);
    TrainState state = train_in_memory(pf, 0, 0).state;
    std::size_t kept = 0, total = 0;
    for (std::size_t it = 0; it < 4; ++it) {
      state.iteration = it;
      auto batch = collect_batch(pf.context(), state);
      IterationMetrics m;
      shape_batch(pf.context(), state, batch, m);
      for (const auto& tr : batch) {
        for (bool k : tr.intrinsic.kept) kept += k;
        total += tr.length();
      }
    }
    const double emp = static_cast<double>(kept) / static_cast<double>(total);
    frac_ok = frac_ok && std::fabs(emp - f) <= 0.05;
    d << " " << f << "->" << fmt(emp, 3);
  }
  return {top1_ok && frac_ok, d.str()};
}

// ---- 7 and 9 ----

struct RunScore {
  double distinct = 0.0;
  double rm = 0.0;
};

RunScore train_and_eval(const ExperimentConfig& cfg, std::uint64_t seed) {
  ExperimentConfig c = cfg;
  c.train.seed = seed;
  const Pipeline p(c);
  const TrainOutcome out = train_in_memory(p, seed);
  const EvalResult r = evaluate_policy(p, out.state.policy, seed);
  return {r.report.distinct, r.rm_score};
}

Outcome diversity_comparison() {
  ExperimentConfig cd = defaults();
  ExperimentConfig ppo = cd;
  ppo.train.method = Method::ppo;
  int wins = 0;
  double rm_cd = 0.0, rm_ppo = 0.0, d_cd = 0.0, d_ppo = 0.0;
  std::ostringstream d;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const RunScore a = train_and_eval(ppo, seed), b = train_and_eval(cd, seed);
    wins += b.distinct > a.distinct;
    rm_cd += b.rm / 5;
    rm_ppo += a.rm / 5;
    d_cd += b.distinct / 5;
    d_ppo += a.distinct / 5;
    d << "seed " << seed << " distinct " << fmt(a.distinct) << "->" << fmt(b.distinct) << ", ";
  }
  const double gap = std::fabs(rm_cd - rm_ppo) / std::fabs(rm_ppo);
  d << "CD wins " << wins << "/5; mean distinct " << fmt(d_ppo) << " (ppo) vs " << fmt(d_cd) << " (cd); mean RM "
    << fmt(rm_ppo) << " vs " << fmt(rm_cd) << " (gap " << fmt(100 * gap, 2) << "%)";
  return {wins >= 4 && gap <= 0.05, d.str()};
}

Outcome topk_ablation() {
  SeededRng rng(909);
  bool superset = true;
  const int V = 32;
  for (int trial = 0; trial < 1000 && superset; ++trial) {
    std::vector<double> logits(V);
    for (double& x : logits) x = trial % 4 == 0 ? std::round(2 * rng.normal()) : rng.normal();
    std::set<int> prev;
    for (int k = 1; k <= V; ++k) {
      const auto top = top_k_indices(logits, static_cast<std::size_t>(k));
      std::set<int> gated(top.begin(), top.end());
      superset = superset && gated.size() == static_cast<std::size_t>(k) &&
                 std::includes(gated.begin(), gated.end(), prev.begin(), prev.end());
      prev = std::move(gated);
    }
  }
  std::ostringstream d;
  d << "superset property " << (superset ? "holds" : "VIOLATED") << " on 1000 random logit vectors; diversity (seed 0)";
  for (int k : {1, 3, 10}) {
    ExperimentConfig c = defaults();
    c.train.gate.k = k;
    const RunScore s = train_and_eval(c, 0);
    d << " top-" << k << " " << fmt(s.distinct) << " (RM " << fmt(s.rm, 3) << ")";
  }
  d << " [trend reported, not asserted]";
  return {superset, d.str()};
}

// ---- 8 ----

Outcome metric_goldens() {
  const auto g = nlohmann::json::parse(read_file(CDPPO_DEFAULT_GOLDEN));
  double worst = 0.0;
  for (const auto& c : g.at("distinct_n"))
    worst = std::max(worst, std::fabs(distinct_n(c.at("tokens").get<Completion>(), c.at("n").get<int>()) -
                                      c.at("expected").get<double>()));
  for (const auto& c : g.at("ead_term"))
    worst = std::max(worst, std::fabs(ead_term(c.at("distinct").get<std::size_t>(), c.at("total").get<std::size_t>(),
                                               c.at("vocab").get<int>()) -
                                      c.at("expected").get<double>()));
  for (const auto& c : g.at("bleu")) {
    const auto refs = c.at("references").get<std::vector<Completion>>();
    worst = std::max(worst, std::fabs(bleu(c.at("hypothesis").get<Completion>(), refs, c.at("max_n").get<int>()) -
                                      c.at("expected").get<double>()));
  }
  for (const auto& c : g.at("mean_pairwise_cosine"))
    worst = std::max(worst, std::fabs(mean_pairwise_cosine(c.at("vectors").get<std::vector<std::vector<double>>>()) -
                                      c.at("expected").get<double>()));
  bool disjoint_ok = true;
  for (const auto& c : g.at("self_bleu")) {
    const auto set = c.at("set").get<std::vector<Completion>>();
    if (c.contains("below")) disjoint_ok = disjoint_ok && self_bleu(set) < c.at("below").get<double>();
  }
  const std::vector<Completion> same(10, Completion{"t3", "t9", "t4", "t4", "t1"});
  const double sb = self_bleu(same);
  const double ec = embed_cosine(CompletionSet{"same", same, {}});
  std::ostringstream d;
  d << "max golden error " << std::scientific << std::setprecision(1) << worst << "; identical set SelfBLEU "
    << std::defaultfloat << sb << ", embed_cosine " << ec;
  return {worst < 1e-6 && disjoint_ok && sb == 1.0 && ec == 1.0, d.str()};
}

// ---- 10 ----

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(CDPPO_BIN) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::string bytes = read_file(e.path());
    if (e.path().filename() == "manifest.json") {
      auto j = nlohmann::ordered_json::parse(bytes);
      j.erase("wall_clock_seconds");
      bytes = j.dump();
    }
    files[fs::relative(e.path(), root).string()] = bytes;
  }
  return files;
}

Outcome determinism() {
  const fs::path dir = oracle::temp_dir("acc_determinism");
  write_file_atomic(dir / "tiny.cfg", kTiny);
  const std::string cfg = (dir / "tiny.cfg").string();
  std::vector<std::string> checked;
  bool ok = true;
  std::map<std::string, std::string> first;
  for (int rep = 0; rep < 2; ++rep) {
    const fs::path out = dir / ("rep" + std::to_string(rep));
    fs::create_directories(out);
    const std::vector<std::pair<std::string, std::string>> cmds{
        {"train", "train --config " + cfg + " --seed 3 --out " + (out / "a").string()},
        {"train", "train --config " + cfg + " --seed 4 --out " + (out / "b").string()},
        {"eval", "eval --run " + (out / "a").string()},
        {"eval", "eval --run " + (out / "b").string()},
        {"compare", "compare " + (out / "a").string() + " " + (out / "b").string() + " --out " + (out / "cmp").string()},
        {"sweep", "sweep --config " + cfg + " --axis beta --values 0.05,0.075 --baseline --out " + (out / "sw").string()},
        {"selftest", "selftest"}};
    std::string stdout_all;
    for (std::size_t i = 0; i < cmds.size(); ++i) {
      const fs::path log = dir / ("log" + std::to_string(rep) + "_" + std::to_string(i));
      ok = ok && run_cli(cmds[i].second, log) == 0;
      std::string text = read_file(log);
      // The output directory differs between repetitions.
      for (std::size_t pos; (pos = text.find(out.string())) != std::string::npos;) text.replace(pos, out.string().size(), "OUT");
      stdout_all += text;
      if (rep == 0) checked.push_back(cmds[i].first);
    }
    auto snap = snapshot(out);
    snap["<stdout>"] = stdout_all;
    if (rep == 0) {
      first = std::move(snap);
    } else {
      ok = ok && snap == first;
    }
  }
  return {ok, std::to_string(first.size()) + " output files and console output byte-identical across two repetitions of "
              "train, eval, compare, sweep and selftest (manifest wall_clock_seconds excluded)"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"reduction equivalence", reduction},
      {"gradient correctness", gradients},
      {"gae oracle", gae},
      {"curiosity decay", curiosity_decay},
      {"whitening", whitening},
      {"gate semantics", gate_semantics},
      {"directional diversity comparison", diversity_comparison},
      {"diversity-metric goldens", metric_goldens},
      {"top-k ablation direction", topk_ablation},
      {"determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << " [" << fmt(secs, 1)
              << " s]: " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
