#include "cdppo/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "cdppo/hashing.hpp"
#include "cdppo/rollout.hpp"

namespace cdppo {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kTagCorpus = 0xC0;
constexpr std::uint64_t kTagPrompts = 0xC1;
constexpr std::uint64_t kTagEvalPrompts = 0xC2;
constexpr std::uint64_t kTagPolicyInit = 0xD0;
constexpr std::uint64_t kTagSft = 0xD1;
constexpr std::uint64_t kTagState = 0xD2;

std::size_t rollout_threads() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("CDPPO_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && cap >= 1) n = std::min(n, static_cast<std::size_t>(cap));
  }
  return n;
}

std::string fmt_value(double v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

std::string fmt_metric(double v) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(4) << v;
  return ss.str();
}

ojson read_json(const fs::path& path) {
  try {
    return ojson::parse(read_file(path));
  } catch (const ojson::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) { write_file_atomic(path, text); }

std::vector<std::string> read_lines(const fs::path& path) {
  std::vector<std::string> lines;
  std::ifstream is(path);
  for (std::string line; std::getline(is, line);) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

ParamStore load_policy(const fs::path& ckpt) { return extract_store(read_checkpoint(ckpt), "policy"); }

void save_policy(const fs::path& path, const ParamStore& policy) {
  std::vector<NamedTensor> entries;
  append_store(entries, "policy", policy, false);
  fs::path tmp = path;
  tmp += ".tmp";
  write_checkpoint(tmp, entries);
  fs::rename(tmp, path);
}

void save_state_atomic(const fs::path& path, const TrainState& state) {
  fs::path tmp = path;
  tmp += ".tmp";
  save_state(tmp, state);
  fs::rename(tmp, path);
}

ojson protocol_json(const ExperimentConfig& cfg, const std::string& embedder) {
  ojson p;
  p["task"] = to_string(cfg.task.kind);
  p["vocab"] = cfg.model.vocab;
  p["m"] = cfg.eval.m;
  p["inputs"] = cfg.eval.inputs;
  p["temperature"] = cfg.eval.sampler.temperature;
  p["top_k"] = cfg.eval.sampler.top_k;
  p["top_p"] = cfg.eval.sampler.top_p;
  p["distinct"] = cfg.eval.pooled ? "pooled" : "per_completion";
  p["distinct_max_n"] = cfg.eval.distinct_max_n;
  p["selfbleu"] = cfg.eval.bleu_mode == BleuMode::geometric ? "geometric" : "arithmetic";
  p["bleu_max_n"] = cfg.eval.bleu_max_n;
  p["ead_literal"] = cfg.eval.ead_literal;
  p["embedder"] = embedder;
  return p;
}

struct MetricSpec {
  const char* key;
  const char* label;
  bool higher_better;
};

constexpr MetricSpec kReportMetrics[] = {
    {"diversity", "Diversity", true}, {"ead", "EAD", true},         {"selfbleu", "SelfBLEU", false},
    {"sentbert", "SentBERT", false},  {"rm_score", "RM score", true},
};

}  // namespace

// ---- pipeline ----

Pipeline::Pipeline(ExperimentConfig config)
    : cfg(std::move(config)),
      vocab(cfg.model.vocab),
      models(cfg.model, cfg.resolved_feature_dim(), cfg.icm_hidden) {
  cfg.validate();
  cfg.train.threads = rollout_threads();
  task = make_task(cfg.task.kind, vocab, cfg.task.params, cfg.task.seed);
  const SeededRng root(cfg.task.seed);
  SeededRng corpus_rng = root.split(kTagCorpus);
  corpus = make_corpus(task, vocab, cfg.task.corpus_size, cfg.task.corpus_noise, corpus_rng);
  SeededRng prompt_rng = root.split(kTagPrompts);
  prompts = make_prompts(vocab, cfg.task.num_prompts, cfg.task.prompt_len, prompt_rng);

  const std::set<TokenSeq> train_set(prompts.begin(), prompts.end());
  std::set<TokenSeq> chosen;
  SeededRng eval_rng = root.split(kTagEvalPrompts);
  for (std::size_t attempt = 0; eval_prompts.size() < cfg.task.eval_prompts; ++attempt) {
    if (attempt > 100 * cfg.task.eval_prompts + 1000) {
      throw ConfigError("config key 'task.eval_prompts': not enough held-out prompts available");
    }
    TokenSeq p = make_prompts(vocab, 1, cfg.task.prompt_len, eval_rng).front();
    if (train_set.count(p) || !chosen.insert(p).second) continue;
    eval_prompts.push_back(std::move(p));
  }
}

std::size_t Pipeline::total_iterations() const {
  return cfg.train.epochs * iterations_per_epoch(cfg.train, prompts.size());
}

IterationContext Pipeline::context() const {
  return IterationContext{models, cfg.train, task, vocab, prompts, total_iterations()};
}

ParamStore pretrain_policy(const Pipeline& p, std::uint64_t seed, SftResult* losses) {
  const SeededRng root(seed);
  ParamStore store;
  SeededRng init = root.split(kTagPolicyInit);
  p.models.policy.init(store, init);
  SeededRng sft_rng = root.split(kTagSft);
  SftResult r = sft_pretrain(p.models.policy, store, p.corpus, p.prompts, p.cfg.sft, sft_rng);
  if (losses) *losses = std::move(r);
  return store;
}

TrainOutcome train_in_memory(const Pipeline& p, std::uint64_t seed, std::optional<std::size_t> iterations) {
  TrainConfig tc = p.cfg.train;
  tc.seed = seed;
  const IterationContext ctx{p.models, tc, p.task, p.vocab, p.prompts, p.total_iterations()};
  SeededRng state_rng = SeededRng(seed).split(kTagState);
  TrainOutcome out{make_train_state(p.models, pretrain_policy(p, seed), state_rng), {}};
  const std::size_t n = std::min(iterations.value_or(ctx.total_iterations), ctx.total_iterations);
  while (out.state.iteration < n) out.metrics.push_back(train_iteration(out.state, ctx));
  return out;
}

std::string metrics_json(const IterationMetrics& m) {
  ojson j;
  j["iter"] = m.iter;
  j["mean_reward_rm"] = m.mean_reward_rm;
  j["mean_kl"] = m.mean_kl;
  j["kept_frac"] = m.kept_frac;
  j["mean_ri_raw"] = m.mean_ri_raw;
  j["mean_ri_white"] = m.mean_ri_white;
  j["loss_policy"] = m.loss_policy;
  j["loss_critic"] = m.loss_critic;
  j["loss_icm"] = m.loss_icm;
  j["lr"] = m.lr;
  return j.dump();
}

EvalOptions eval_options(const ExperimentConfig& cfg) {
  EvalOptions o;
  o.vocab_size = cfg.model.vocab;
  o.distinct_max_n = cfg.eval.distinct_max_n;
  o.bleu_max_n = cfg.eval.bleu_max_n;
  o.pooled = cfg.eval.pooled;
  o.bleu_mode = cfg.eval.bleu_mode;
  o.ead_literal = cfg.eval.ead_literal;
  return o;
}

EvalResult evaluate_policy(const Pipeline& p, const ParamStore& policy, std::uint64_t seed) {
  const EvalSetup& e = p.cfg.eval;
  if (e.m < 2) throw ConfigError("config key 'eval.m': at least 2 completions per input are required");
  if (e.inputs > p.eval_prompts.size()) throw ConfigError("config key 'eval.inputs': exceeds task.eval_prompts");
  const SeededRng root = SeededRng(e.seed).split(seed);
  EvalResult r;
  double score_sum = 0.0;
  for (std::size_t i = 0; i < e.inputs; ++i) {
    CompletionSet set;
    set.input_id = "eval-" + std::to_string(i);
    for (std::size_t j = 0; j < e.m; ++j) {
      SeededRng rng = root.split(i).split(j);
      const TokenSeq toks =
          sample_completion(p.models.policy, policy, e.sampler, rng, p.cfg.train.max_len, p.eval_prompts[i]);
      score_sum += p.task.score(toks);
      set.completions.push_back(p.vocab.to_strings(toks));
      set.completion_ids.push_back(set.input_id + "-" + std::to_string(j));
    }
    r.sets.push_back(std::move(set));
  }
  r.rm_score = score_sum / static_cast<double>(e.inputs * e.m);
  r.report = evaluate(r.sets, eval_options(p.cfg));
  return r;
}

// ---- train ----

void cmd_train(const ExperimentConfig& cfg, const fs::path& out, const TrainOptions& opt) {
  const auto started = std::chrono::steady_clock::now();
  const Pipeline p(cfg);
  fs::create_directories(out);
  const std::string config_text = serialize_config(cfg);
  const fs::path config_path = out / "config.txt";
  const fs::path ckpt_path = out / "checkpoint.ckpt";
  const fs::path metrics_path = out / "metrics.jsonl";

  TrainState state;
  std::vector<std::string> lines;
  if (opt.resume && fs::exists(ckpt_path)) {
    if (!fs::exists(config_path) || read_file(config_path) != config_text) {
      throw ConfigError("cannot resume " + out.string() + ": its config.txt differs from the given config");
    }
    state = load_state(ckpt_path);
    lines = read_lines(metrics_path);
    if (lines.size() < state.iteration) throw std::runtime_error("metrics log shorter than the checkpoint");
    lines.resize(state.iteration);
  } else {
    for (const char* name : {"checkpoint.ckpt", "final.ckpt", "manifest.json", "metrics.jsonl"}) {
      fs::remove(out / name);
    }
    write_text(config_path, config_text);
    write_corpus(out / "corpus.txt", p.corpus, p.vocab);
    const ParamStore policy = pretrain_policy(p, cfg.train.seed);
    save_policy(out / "reference.ckpt", policy);
    SeededRng state_rng = SeededRng(cfg.train.seed).split(kTagState);
    state = make_train_state(p.models, policy, state_rng);
    save_state_atomic(ckpt_path, state);
  }
  {
    std::string text;
    for (const auto& l : lines) text += l + "\n";
    write_text(metrics_path, text);
  }

  const IterationContext ctx = p.context();
  std::ofstream metrics(metrics_path, std::ios::app);
  while (state.iteration < ctx.total_iterations) {
    if (opt.stop_after && state.iteration >= *opt.stop_after) return;
    const IterationMetrics m = train_iteration(state, ctx);
    metrics << metrics_json(m) << "\n" << std::flush;
    if (!metrics) throw std::runtime_error("failed writing " + metrics_path.string());
    save_state_atomic(ckpt_path, state);
  }
  metrics.close();

  save_state_atomic(out / "final.ckpt", state);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  ojson manifest;
  manifest["config"] = "config.txt";
  manifest["config_hash"] = git_blob_hash(config_text);
  manifest["method"] = to_string(cfg.train.method);
  manifest["seed"] = cfg.train.seed;
  manifest["iterations"] = state.iteration;
  manifest["checkpoints"]["final.ckpt"] = git_blob_hash_file(out / "final.ckpt");
  manifest["checkpoints"]["reference.ckpt"] = git_blob_hash_file(out / "reference.ckpt");
  manifest["metrics"] = "metrics.jsonl";
  manifest["metrics_hash"] = git_blob_hash_file(metrics_path);
  manifest["wall_clock_seconds"] = std::round(seconds * 1000.0) / 1000.0;
  write_text(out / "manifest.json", manifest.dump(2) + "\n");
}

void verify_manifest(const fs::path& run) {
  const ojson m = read_json(run / "manifest.json");
  auto check = [&](const std::string& file, const std::string& expected) {
    const std::string actual = git_blob_hash_file(run / file);
    if (actual != expected) {
      throw std::runtime_error("hash mismatch for " + (run / file).string() + ": manifest " + expected +
                               ", file " + actual);
    }
  };
  check(m.at("config").get<std::string>(), m.at("config_hash").get<std::string>());
  check(m.at("metrics").get<std::string>(), m.at("metrics_hash").get<std::string>());
  for (const auto& [file, hash] : m.at("checkpoints").items()) check(file, hash.get<std::string>());
}

// ---- eval ----

namespace {

std::vector<CompletionSet> read_completions(const fs::path& path) {
  std::vector<CompletionSet> sets;
  std::map<std::string, std::size_t> index;
  std::size_t lineno = 0;
  for (const auto& line : read_lines(path)) {
    ++lineno;
    ojson rec;
    try {
      rec = ojson::parse(line);
    } catch (const ojson::parse_error& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    const std::string input = rec.at("input_id").is_string() ? rec.at("input_id").get<std::string>()
                                                              : rec.at("input_id").dump();
    auto [it, fresh] = index.emplace(input, sets.size());
    if (fresh) sets.push_back(CompletionSet{input, {}, {}});
    CompletionSet& set = sets[it->second];
    set.completions.push_back(rec.at("completion").get<Completion>());
    set.completion_ids.push_back(rec.contains("id") ? rec.at("id").get<std::string>()
                                                    : input + "-" + std::to_string(set.completions.size() - 1));
  }
  if (sets.empty()) throw std::runtime_error(path.string() + ": no completions");
  return sets;
}

Embedder file_embedder(const fs::path& path) {
  auto table = std::make_shared<std::map<std::string, std::vector<double>>>();
  for (const auto& line : read_lines(path)) {
    const ojson rec = ojson::parse(line);
    (*table)[rec.at("id").get<std::string>()] = rec.at("vector").get<std::vector<double>>();
  }
  return [table](const CompletionSet& set, std::size_t i) {
    const std::string& id = set.completion_ids.at(i);
    const auto it = table->find(id);
    if (it == table->end()) throw std::runtime_error("no embedding for completion '" + id + "'");
    return it->second;
  };
}

}  // namespace

EvalResult cmd_eval(const fs::path& run, const EvalCommandOptions& opt) {
  ExperimentConfig cfg = load_config(run / "config.txt");
  if (opt.m) cfg.eval.m = *opt.m;
  if (opt.inputs) cfg.eval.inputs = *opt.inputs;
  if (opt.temperature) cfg.eval.sampler.temperature = *opt.temperature;
  cfg.validate();

  EvalResult r;
  ojson report;
  const std::string embedder = opt.embeddings.empty() ? "trigram512" : "external";
  report["protocol"] = protocol_json(cfg, embedder);
  EvalOptions eo = eval_options(cfg);
  if (!opt.embeddings.empty()) eo.embedder = file_embedder(opt.embeddings);

  const Pipeline p(cfg);
  if (opt.completions.empty()) {
    verify_manifest(run);
    const fs::path ckpt = opt.checkpoint.empty() ? run / "final.ckpt" : opt.checkpoint;
    const ojson manifest = read_json(run / "manifest.json");
    const std::string name = ckpt.filename().string();
    if (!manifest.at("checkpoints").contains(name) || fs::absolute(ckpt).parent_path() != fs::absolute(run)) {
      throw std::runtime_error("checkpoint " + ckpt.string() + " is not recorded in the run manifest");
    }
    r = evaluate_policy(p, load_policy(ckpt), cfg.train.seed);
    r.report = evaluate(r.sets, eo);
    report["source"] = name;
    report["checkpoint_hash"] = manifest.at("checkpoints").at(name);
    report["seed"] = cfg.train.seed;
  } else {
    r.sets = read_completions(opt.completions);
    for (const auto& s : r.sets) {
      if (s.completions.size() < 2) throw ConfigError("input '" + s.input_id + "' has fewer than 2 completions");
    }
    r.report = evaluate(r.sets, eo);
    double score_sum = 0.0;
    std::size_t count = 0;
    bool scorable = true;
    for (const auto& s : r.sets) {
      for (const auto& c : s.completions) {
        try {
          score_sum += p.task.score(p.vocab.from_strings(c));
          ++count;
        } catch (const std::out_of_range&) {
          scorable = false;
        }
      }
    }
    r.rm_score = scorable && count ? score_sum / static_cast<double>(count) : std::nan("");
    report["protocol"]["m"] = nullptr;
    report["protocol"]["inputs"] = r.sets.size();
    report["source"] = opt.completions.filename().string();
  }

  const DiversityReport& d = r.report;
  report["metrics"]["diversity"] = d.distinct;
  report["metrics"]["ead"] = d.ead;
  report["metrics"]["selfbleu"] = d.self_bleu;
  report["metrics"]["sentbert"] = d.embed_cos;
  report["metrics"]["rm_score"] = std::isnan(r.rm_score) ? ojson(nullptr) : ojson(r.rm_score);
  ojson per = ojson::array();
  for (std::size_t i = 0; i < d.input_ids.size(); ++i) {
    per.push_back({{"input_id", d.input_ids[i]},
                   {"diversity", d.per_input_distinct[i]},
                   {"ead", d.per_input_ead[i]},
                   {"selfbleu", d.per_input_self_bleu[i]},
                   {"sentbert", d.per_input_embed_cos[i]}});
  }
  report["per_input"] = per;

  const fs::path out = run / (opt.checkpoint.empty() || opt.checkpoint.filename() == "final.ckpt"
                                  ? std::string("eval")
                                  : "eval_" + opt.checkpoint.stem().string());
  fs::create_directories(out);
  write_text(out / "report.json", report.dump(2) + "\n");
  std::ostringstream csv;
  csv << std::setprecision(17) << "diversity,ead,selfbleu,sentbert,rm_score\n"
      << d.distinct << "," << d.ead << "," << d.self_bleu << "," << d.embed_cos << ","
      << (std::isnan(r.rm_score) ? std::string() : fmt_value(r.rm_score)) << "\n";
  write_text(out / "report.csv", csv.str());
  std::string jsonl;
  for (const auto& s : r.sets) {
    for (std::size_t j = 0; j < s.completions.size(); ++j) {
      ojson rec;
      rec["input_id"] = s.input_id;
      rec["id"] = s.completion_ids[j];
      rec["completion"] = s.completions[j];
      jsonl += rec.dump() + "\n";
    }
  }
  write_text(out / "completions.jsonl", jsonl);
  return r;
}

// ---- sweep ----

SweepAxis parse_sweep_axis(const std::string& s) {
  if (s == "beta") return SweepAxis::beta;
  if (s == "temperature") return SweepAxis::temperature;
  if (s == "gate_fraction") return SweepAxis::gate_fraction;
  if (s == "top_k") return SweepAxis::top_k;
  throw ConfigError("unknown sweep axis '" + s + "' (beta, temperature, gate_fraction, top_k)");
}

std::string to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::beta: return "beta";
    case SweepAxis::temperature: return "temperature";
    case SweepAxis::gate_fraction: return "gate_fraction";
    case SweepAxis::top_k: return "top_k";
  }
  return "?";
}

void apply_sweep_value(ExperimentConfig& cfg, SweepAxis axis, double value) {
  switch (axis) {
    case SweepAxis::beta: cfg.train.kl_beta = value; break;
    case SweepAxis::temperature: cfg.train.sampler.temperature = value; break;
    case SweepAxis::gate_fraction:
      cfg.train.gate.mode = GateConfig::Mode::random_fraction;
      cfg.train.gate.fraction = value;
      break;
    case SweepAxis::top_k:
      if (value != std::floor(value) || value < 1) throw ConfigError("top_k sweep values must be positive integers");
      cfg.train.gate.mode = GateConfig::Mode::top_k;
      cfg.train.gate.k = static_cast<int>(value);
      break;
  }
  cfg.validate();
}

void cmd_sweep(const ExperimentConfig& cfg, SweepAxis axis, const std::vector<double>& values, const fs::path& out,
               bool baseline) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<std::pair<std::string, ExperimentConfig>> cells;
  for (double v : values) {
    ExperimentConfig c = cfg;
    apply_sweep_value(c, axis, v);
    cells.emplace_back(fmt_value(v), c);
  }
  if (baseline) {
    ExperimentConfig c = cfg;
    c.train.method = Method::ppo;
    cells.emplace_back("ppo", c);
  }
  fs::create_directories(out);
  std::ostringstream csv;
  csv << std::setprecision(17)
      << "axis,value,seed,method,diversity,ead,selfbleu,sentbert,rm_score,mean_kl,kept_frac\n";
  for (const auto& [label, base] : cells) {
    for (std::uint64_t seed : cfg.seeds) {
      ExperimentConfig c = base;
      c.train.seed = seed;
      const fs::path dir = out / (to_string(axis) + "_" + label) / ("seed" + std::to_string(seed));
      cmd_train(c, dir);
      const EvalResult r = cmd_eval(dir);
      double kl = 0.0, kept = 0.0;
      const auto lines = read_lines(dir / "metrics.jsonl");
      for (const auto& l : lines) {
        const ojson m = ojson::parse(l);
        kl += m.at("mean_kl").get<double>();
        kept += m.at("kept_frac").get<double>();
      }
      const double n = static_cast<double>(std::max<std::size_t>(1, lines.size()));
      csv << to_string(axis) << "," << label << "," << seed << "," << to_string(c.train.method) << ","
          << r.report.distinct << "," << r.report.ead << "," << r.report.self_bleu << "," << r.report.embed_cos
          << "," << r.rm_score << "," << kl / n << ",";
      if (c.train.method == Method::cd_rlhf) csv << kept / n;
      csv << "\n";
    }
  }
  write_text(out / "sweep.csv", csv.str());
}

// ---- compare ----

double delta_percent(double a, double b, bool higher_better) {
  if (a == 0.0) return b == a ? 0.0 : std::nan("");
  return (higher_better ? (b - a) : (a - b)) / a * 100.0;
}

std::string cmd_compare(const fs::path& run_a, const fs::path& run_b, const fs::path& out) {
  const ojson a = read_json(run_a / "eval" / "report.json");
  const ojson b = read_json(run_b / "eval" / "report.json");
  if (a.at("protocol") != b.at("protocol")) {
    std::string diff;
    for (const auto& [k, v] : a.at("protocol").items()) {
      if (!b.at("protocol").contains(k) || b.at("protocol").at(k) != v) diff += " " + k;
    }
    throw ConfigError("eval protocols differ:" + diff);
  }
  std::ostringstream md, csv;
  md << "| Metric | " << run_a.filename().string() << " | " << run_b.filename().string() << " | Δ | Δ% |\n"
     << "|---|---|---|---|---|\n";
  csv << std::setprecision(17) << "metric,a,b,delta,delta_percent,higher_better\n";
  for (const auto& spec : kReportMetrics) {
    const ojson& va = a.at("metrics").at(spec.key);
    const ojson& vb = b.at("metrics").at(spec.key);
    if (va.is_null() || vb.is_null()) {
      md << "| " << spec.label << " | - | - | - | - |\n";
      csv << spec.key << ",,,,," << (spec.higher_better ? "true" : "false") << "\n";
      continue;
    }
    const double x = va.get<double>(), y = vb.get<double>();
    const double pct = delta_percent(x, y, spec.higher_better);
    std::string pct_text = "n/a";
    if (!std::isnan(pct)) {
      std::ostringstream s;
      s << std::showpos << std::fixed << std::setprecision(2) << pct << "%";
      pct_text = s.str();
    }
    std::ostringstream delta;
    delta << std::showpos << std::fixed << std::setprecision(4) << (y - x);
    md << "| " << spec.label << " | " << fmt_metric(x) << " | " << fmt_metric(y) << " | " << delta.str() << " | "
       << pct_text << " |\n";
    csv << spec.key << "," << x << "," << y << "," << (y - x) << ",";
    if (!std::isnan(pct)) csv << pct;
    csv << "," << (spec.higher_better ? "true" : "false") << "\n";
  }
  fs::create_directories(out);
  write_text(out / "compare.md", md.str());
  write_text(out / "compare.csv", csv.str());
  return md.str();
}

}  // namespace cdppo
