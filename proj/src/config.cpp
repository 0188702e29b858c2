#include "cdppo/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace cdppo {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

struct Field {
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T>
Field size_field(std::string key, T ExperimentConfig::*outer, std::size_t T::*member) {
  return {key,
          [=](ExperimentConfig& c, const std::string& v) { (c.*outer).*member = to_u64(key, v); },
          [=](const ExperimentConfig& c) { return std::to_string((c.*outer).*member); }};
}

template <typename T>
Field double_field(std::string key, T ExperimentConfig::*outer, double T::*member) {
  return {key,
          [=](ExperimentConfig& c, const std::string& v) { (c.*outer).*member = to_double(key, v); },
          [=](const ExperimentConfig& c) { return fmt_double((c.*outer).*member); }};
}

template <typename T>
Field bool_field(std::string key, T ExperimentConfig::*outer, bool T::*member) {
  return {key,
          [=](ExperimentConfig& c, const std::string& v) { (c.*outer).*member = to_bool(key, v); },
          [=](const ExperimentConfig& c) { return std::string((c.*outer).*member ? "true" : "false"); }};
}

template <typename Get, typename Set>
Field custom(std::string key, Set set, Get get) {
  return {std::move(key), std::move(set), std::move(get)};
}

int to_int(const std::string& key, const std::string& v) {
  const std::uint64_t x = to_u64(key, v);
  if (x > 1'000'000) throw ConfigError("config key '" + key + "': value " + v + " is too large");
  return static_cast<int>(x);
}

const std::vector<Field>& fields() {
  using C = ExperimentConfig;
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(custom(
        "task",
        [](C& c, const std::string& v) {
          try {
            c.task.kind = parse_task_kind(v);
          } catch (const std::invalid_argument&) {
            throw ConfigError("config key 'task': unknown task '" + v + "'");
          }
        },
        [](const C& c) { return to_string(c.task.kind); }));
    f.push_back(custom(
        "method",
        [](C& c, const std::string& v) {
          try {
            c.train.method = parse_method(v);
          } catch (const std::invalid_argument&) {
            throw ConfigError("config key 'method': unknown method '" + v + "'");
          }
        },
        [](const C& c) { return to_string(c.train.method); }));
    f.push_back(custom(
        "seed", [](C& c, const std::string& v) { c.train.seed = to_u64("seed", v); },
        [](const C& c) { return std::to_string(c.train.seed); }));
    f.push_back(custom(
        "seeds",
        [](C& c, const std::string& v) {
          std::vector<std::uint64_t> seeds;
          std::stringstream ss(v);
          for (std::string item; std::getline(ss, item, ',');) seeds.push_back(to_u64("seeds", trim(item)));
          if (seeds.empty()) throw ConfigError("config key 'seeds': empty list");
          c.seeds = seeds;
        },
        [](const C& c) {
          std::string s;
          for (std::size_t i = 0; i < c.seeds.size(); ++i) s += (i ? "," : "") + std::to_string(c.seeds[i]);
          return s;
        }));

    f.push_back(custom(
        "task.seed", [](C& c, const std::string& v) { c.task.seed = to_u64("task.seed", v); },
        [](const C& c) { return std::to_string(c.task.seed); }));
    f.push_back(custom(
        "task.num_targets",
        [](C& c, const std::string& v) { c.task.params.num_targets = to_u64("task.num_targets", v); },
        [](const C& c) { return std::to_string(c.task.params.num_targets); }));
    f.push_back(custom(
        "task.target_len",
        [](C& c, const std::string& v) { c.task.params.target_len = to_u64("task.target_len", v); },
        [](const C& c) { return std::to_string(c.task.params.target_len); }));
    f.push_back(custom(
        "task.num_classes",
        [](C& c, const std::string& v) { c.task.params.num_classes = to_u64("task.num_classes", v); },
        [](const C& c) { return std::to_string(c.task.params.num_classes); }));
    f.push_back(custom(
        "task.max_len",
        [](C& c, const std::string& v) {
          c.task.params.max_len = to_u64("task.max_len", v);
          c.train.max_len = c.task.params.max_len;
        },
        [](const C& c) { return std::to_string(c.task.params.max_len); }));
    f.push_back(size_field("task.corpus_size", &C::task, &TaskSetup::corpus_size));
    f.push_back(double_field("task.corpus_noise", &C::task, &TaskSetup::corpus_noise));
    f.push_back(size_field("task.num_prompts", &C::task, &TaskSetup::num_prompts));
    f.push_back(size_field("task.eval_prompts", &C::task, &TaskSetup::eval_prompts));
    f.push_back(size_field("task.prompt_len", &C::task, &TaskSetup::prompt_len));

    f.push_back(custom(
        "model.vocab", [](C& c, const std::string& v) { c.model.vocab = to_int("model.vocab", v); },
        [](const C& c) { return std::to_string(c.model.vocab); }));
    f.push_back(size_field("model.window", &C::model, &ModelDims::window));
    f.push_back(size_field("model.embed_dim", &C::model, &ModelDims::embed_dim));
    f.push_back(size_field("model.hidden_dim", &C::model, &ModelDims::hidden_dim));
    f.push_back(size_field("model.encoder_hidden", &C::model, &ModelDims::encoder_hidden));

    f.push_back(size_field("sft.epochs", &C::sft, &SftConfig::epochs));
    f.push_back(double_field("sft.lr", &C::sft, &SftConfig::lr));
    f.push_back(size_field("sft.batch", &C::sft, &SftConfig::batch));

    f.push_back(size_field("train.epochs", &C::train, &TrainConfig::epochs));
    f.push_back(size_field("train.batch_size", &C::train, &TrainConfig::batch_size));
    f.push_back(size_field("train.samples_per_prompt", &C::train, &TrainConfig::samples_per_prompt));
    f.push_back(double_field("train.policy_lr", &C::train, &TrainConfig::policy_lr));
    f.push_back(double_field("train.critic_lr", &C::train, &TrainConfig::critic_lr));
    f.push_back(double_field("train.warmup_ratio", &C::train, &TrainConfig::warmup_ratio));

    f.push_back(size_field("ppo.epochs", &C::train, &TrainConfig::ppo_epochs));
    f.push_back(size_field("ppo.minibatches", &C::train, &TrainConfig::minibatches));
    f.push_back(double_field("ppo.clip_ratio", &C::train, &TrainConfig::clip_ratio));
    f.push_back(double_field("ppo.gae_lambda", &C::train, &TrainConfig::gae_lambda));
    f.push_back(double_field("ppo.gae_gamma", &C::train, &TrainConfig::gae_gamma));
    f.push_back(bool_field("ppo.norm_adv", &C::train, &TrainConfig::norm_adv));

    f.push_back(double_field("reward.beta", &C::train, &TrainConfig::kl_beta));
    f.push_back(double_field("reward.eta", &C::train, &TrainConfig::eta));
    f.push_back(custom(
        "reward.kl_estimator",
        [](C& c, const std::string& v) {
          if (v == "logratio") c.train.kl_estimator = KlEstimator::logratio;
          else if (v == "full") c.train.kl_estimator = KlEstimator::full;
          else throw ConfigError("config key 'reward.kl_estimator': expected logratio or full, got '" + v + "'");
        },
        [](const C& c) { return std::string(c.train.kl_estimator == KlEstimator::full ? "full" : "logratio"); }));

    f.push_back(custom(
        "sampler.temperature",
        [](C& c, const std::string& v) { c.train.sampler.temperature = to_double("sampler.temperature", v); },
        [](const C& c) { return fmt_double(c.train.sampler.temperature); }));
    f.push_back(custom(
        "sampler.top_k", [](C& c, const std::string& v) { c.train.sampler.top_k = to_int("sampler.top_k", v); },
        [](const C& c) { return std::to_string(c.train.sampler.top_k); }));
    f.push_back(custom(
        "sampler.top_p", [](C& c, const std::string& v) { c.train.sampler.top_p = to_double("sampler.top_p", v); },
        [](const C& c) { return fmt_double(c.train.sampler.top_p); }));

    f.push_back(custom(
        "gate.mode",
        [](C& c, const std::string& v) {
          if (v == "top_k") c.train.gate.mode = GateConfig::Mode::top_k;
          else if (v == "random_fraction") c.train.gate.mode = GateConfig::Mode::random_fraction;
          else throw ConfigError("config key 'gate.mode': expected top_k or random_fraction, got '" + v + "'");
        },
        [](const C& c) {
          return std::string(c.train.gate.mode == GateConfig::Mode::top_k ? "top_k" : "random_fraction");
        }));
    f.push_back(custom(
        "gate.k", [](C& c, const std::string& v) { c.train.gate.k = to_int("gate.k", v); },
        [](const C& c) { return std::to_string(c.train.gate.k); }));
    f.push_back(custom(
        "gate.fraction", [](C& c, const std::string& v) { c.train.gate.fraction = to_double("gate.fraction", v); },
        [](const C& c) { return fmt_double(c.train.gate.fraction); }));

    f.push_back(bool_field("intrinsic.squared", &C::train, &TrainConfig::intrinsic_squared));
    f.push_back(custom(
        "intrinsic.whiten",
        [](C& c, const std::string& v) {
          if (v == "stddev") c.train.whiten_divisor = WhitenDivisor::stddev;
          else if (v == "variance") c.train.whiten_divisor = WhitenDivisor::variance;
          else throw ConfigError("config key 'intrinsic.whiten': expected stddev or variance, got '" + v + "'");
        },
        [](const C& c) {
          return std::string(c.train.whiten_divisor == WhitenDivisor::stddev ? "stddev" : "variance");
        }));

    f.push_back(double_field("icm.lr", &C::train, &TrainConfig::icm_lr));
    f.push_back(size_field("icm.updates", &C::train, &TrainConfig::icm_updates));
    f.push_back(custom(
        "icm.hidden", [](C& c, const std::string& v) { c.icm_hidden = to_u64("icm.hidden", v); },
        [](const C& c) { return std::to_string(c.icm_hidden); }));
    f.push_back(custom(
        "icm.feature_dim", [](C& c, const std::string& v) { c.feature_dim = to_u64("icm.feature_dim", v); },
        [](const C& c) { return std::to_string(c.feature_dim); }));

    f.push_back(custom(
        "sent_rewards.selfbleu",
        [](C& c, const std::string& v) { c.train.sent.selfbleu = to_double("sent_rewards.selfbleu", v); },
        [](const C& c) { return fmt_double(c.train.sent.selfbleu); }));
    f.push_back(custom(
        "sent_rewards.sentbert",
        [](C& c, const std::string& v) { c.train.sent.sentbert = to_double("sent_rewards.sentbert", v); },
        [](const C& c) { return fmt_double(c.train.sent.sentbert); }));
    f.push_back(custom(
        "sent_rewards.entropy",
        [](C& c, const std::string& v) { c.train.sent.entropy = to_double("sent_rewards.entropy", v); },
        [](const C& c) { return fmt_double(c.train.sent.entropy); }));

    f.push_back(size_field("eval.m", &C::eval, &EvalSetup::m));
    f.push_back(size_field("eval.inputs", &C::eval, &EvalSetup::inputs));
    f.push_back(custom(
        "eval.temperature",
        [](C& c, const std::string& v) { c.eval.sampler.temperature = to_double("eval.temperature", v); },
        [](const C& c) { return fmt_double(c.eval.sampler.temperature); }));
    f.push_back(custom(
        "eval.top_k", [](C& c, const std::string& v) { c.eval.sampler.top_k = to_int("eval.top_k", v); },
        [](const C& c) { return std::to_string(c.eval.sampler.top_k); }));
    f.push_back(custom(
        "eval.top_p", [](C& c, const std::string& v) { c.eval.sampler.top_p = to_double("eval.top_p", v); },
        [](const C& c) { return fmt_double(c.eval.sampler.top_p); }));
    f.push_back(custom(
        "eval.seed", [](C& c, const std::string& v) { c.eval.seed = to_u64("eval.seed", v); },
        [](const C& c) { return std::to_string(c.eval.seed); }));
    f.push_back(custom(
        "eval.distinct",
        [](C& c, const std::string& v) {
          if (v == "pooled") c.eval.pooled = true;
          else if (v == "per_completion") c.eval.pooled = false;
          else throw ConfigError("config key 'eval.distinct': expected pooled or per_completion, got '" + v + "'");
        },
        [](const C& c) { return std::string(c.eval.pooled ? "pooled" : "per_completion"); }));
    f.push_back(custom(
        "eval.selfbleu",
        [](C& c, const std::string& v) {
          if (v == "geometric") c.eval.bleu_mode = BleuMode::geometric;
          else if (v == "arithmetic") c.eval.bleu_mode = BleuMode::arithmetic;
          else throw ConfigError("config key 'eval.selfbleu': expected geometric or arithmetic, got '" + v + "'");
        },
        [](const C& c) { return std::string(c.eval.bleu_mode == BleuMode::geometric ? "geometric" : "arithmetic"); }));
    f.push_back(bool_field("eval.ead_literal", &C::eval, &EvalSetup::ead_literal));
    f.push_back(custom(
        "eval.distinct_max_n",
        [](C& c, const std::string& v) { c.eval.distinct_max_n = to_int("eval.distinct_max_n", v); },
        [](const C& c) { return std::to_string(c.eval.distinct_max_n); }));
    f.push_back(custom(
        "eval.bleu_max_n", [](C& c, const std::string& v) { c.eval.bleu_max_n = to_int("eval.bleu_max_n", v); },
        [](const C& c) { return std::to_string(c.eval.bleu_max_n); }));
    return f;
  }();
  return table;
}

const Field& find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void ExperimentConfig::validate() const {
  if (model.vocab < 4) throw ConfigError("config key 'model.vocab': must be at least 4");
  if (model.window == 0 || model.embed_dim == 0 || model.hidden_dim == 0 || model.encoder_hidden == 0) {
    throw ConfigError("config keys 'model.*': dimensions must be positive");
  }
  if (icm_hidden == 0) throw ConfigError("config key 'icm.hidden': must be positive");
  if (task.num_prompts == 0) throw ConfigError("config key 'task.num_prompts': must be positive");
  if (task.eval_prompts == 0) throw ConfigError("config key 'task.eval_prompts': must be positive");
  if (task.corpus_size == 0) throw ConfigError("config key 'task.corpus_size': must be positive");
  if (task.kind == TaskKind::multi_target && task.params.num_targets == 0) {
    throw ConfigError("config key 'task.num_targets': must be positive");
  }
  if (eval.m < 2) throw ConfigError("config key 'eval.m': at least 2 completions per input are required");
  if (eval.inputs == 0 || eval.inputs > task.eval_prompts) {
    throw ConfigError("config key 'eval.inputs': must be in [1, task.eval_prompts]");
  }
  if (train.max_len != task.params.max_len) throw ConfigError("config key 'task.max_len': inconsistent");
  try {
    train.validate(model.vocab);
    eval.sampler.validate(model.vocab);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (train.prompts_per_iteration() > task.num_prompts) {
    throw ConfigError("config key 'task.num_prompts': fewer prompts than one batch needs");
  }
}

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  find_field(key).set(cfg, value);
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError("config key '" + key + "' is set twice");
    if (value.empty()) throw ConfigError("config key '" + key + "' has no value");
    set_config_value(cfg, key, value);
  }
  if (!seen.count("task")) throw ConfigError("missing required config key 'task'");
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

}  // namespace cdppo
