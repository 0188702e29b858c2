#include "cdppo/task.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace cdppo {

TaskKind parse_task_kind(const std::string& s) {
  if (s == "multi_target") return TaskKind::multi_target;
  if (s == "pattern_coverage") return TaskKind::pattern_coverage;
  throw std::invalid_argument("unknown task '" + s + "'");
}

std::string to_string(TaskKind k) {
  return k == TaskKind::multi_target ? "multi_target" : "pattern_coverage";
}

std::size_t edit_distance(const TokenSeq& a, const TokenSeq& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double RewardTask::score(const TokenSeq& completion) const {
  TokenSeq seq = completion;
  if (!seq.empty() && seq.back() == Vocab::kEos) seq.pop_back();
  if (kind == TaskKind::multi_target) {
    double best = 0.0;
    for (const auto& t : targets) {
      const double denom = static_cast<double>(std::max(seq.size(), t.size()));
      const double s = denom == 0.0 ? 1.0 : 1.0 - static_cast<double>(edit_distance(seq, t)) / denom;
      best = std::max(best, s);
    }
    return best;
  }
  std::size_t covered = 0;
  for (const auto& cls : classes) {
    const bool hit = std::any_of(seq.begin(), seq.end(), [&](int tok) {
      return std::find(cls.begin(), cls.end(), tok) != cls.end();
    });
    covered += hit ? 1 : 0;
  }
  return classes.empty() ? 0.0 : static_cast<double>(covered) / static_cast<double>(classes.size());
}

RewardTask make_task(TaskKind kind, const Vocab& vocab, const TaskParams& params, std::uint64_t seed) {
  const int content = vocab.size() - Vocab::kFirstContent;
  if (content < 2) throw std::invalid_argument("vocabulary too small for a task");
  RewardTask task;
  task.kind = kind;
  task.max_len = params.max_len;
  SeededRng rng = SeededRng(seed).split(0x7A5C);
  auto draw = [&] { return Vocab::kFirstContent + static_cast<int>(rng.below(static_cast<std::uint64_t>(content))); };
  if (kind == TaskKind::multi_target) {
    if (params.target_len == 0 || params.target_len > params.max_len) {
      throw std::invalid_argument("target length must be in [1, max_len]");
    }
    std::set<TokenSeq> seen;
    while (task.targets.size() < params.num_targets) {
      TokenSeq t(params.target_len);
      for (int& tok : t) tok = draw();
      if (seen.insert(t).second) task.targets.push_back(std::move(t));
    }
  } else {
    if (params.num_classes == 0 || params.num_classes > static_cast<std::size_t>(content)) {
      throw std::invalid_argument("class count must be in [1, content tokens]");
    }
    // Classes partition a shuffled subset of content tokens, two tokens each.
    std::vector<int> ids;
    for (int i = Vocab::kFirstContent; i < vocab.size(); ++i) ids.push_back(i);
    rng.shuffle(ids);
    const std::size_t per = std::max<std::size_t>(1, std::min<std::size_t>(2, ids.size() / params.num_classes));
    for (std::size_t c = 0; c < params.num_classes; ++c) {
      task.classes.emplace_back(ids.begin() + static_cast<std::ptrdiff_t>(c * per),
                                ids.begin() + static_cast<std::ptrdiff_t>((c + 1) * per));
    }
  }
  return task;
}

std::vector<TokenSeq> make_corpus(const RewardTask& task, const Vocab& vocab, std::size_t size,
                                  double noise, SeededRng& rng) {
  const auto content = static_cast<std::uint64_t>(vocab.size() - Vocab::kFirstContent);
  auto draw = [&] { return Vocab::kFirstContent + static_cast<int>(rng.below(content)); };
  std::vector<TokenSeq> corpus;
  corpus.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    TokenSeq seq;
    if (task.kind == TaskKind::multi_target) {
      seq = task.targets[i % task.targets.size()];
      for (int& tok : seq) {
        if (rng.uniform() < noise) tok = draw();
      }
    } else {
      const std::size_t len = 1 + static_cast<std::size_t>(rng.below(std::max<std::size_t>(1, task.max_len - 1)));
      seq.resize(len);
      for (int& tok : seq) tok = draw();
    }
    corpus.push_back(std::move(seq));
  }
  return corpus;
}

std::vector<TokenSeq> make_prompts(const Vocab& vocab, std::size_t count, std::size_t length,
                                   SeededRng& rng) {
  const auto content = static_cast<std::uint64_t>(vocab.size() - Vocab::kFirstContent);
  std::vector<TokenSeq> prompts(count, TokenSeq(length));
  for (auto& p : prompts)
    for (int& tok : p) tok = Vocab::kFirstContent + static_cast<int>(rng.below(content));
  return prompts;
}

std::vector<TokenSeq> read_corpus(const std::filesystem::path& path, const Vocab& vocab) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open corpus " + path.string());
  std::vector<TokenSeq> corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::vector<std::string> toks;
    for (std::string t; ss >> t;) toks.push_back(t);
    if (toks.empty()) continue;
    try {
      corpus.push_back(vocab.from_strings(toks));
    } catch (const std::out_of_range& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return corpus;
}

void write_corpus(const std::filesystem::path& path, const std::vector<TokenSeq>& corpus,
                  const Vocab& vocab) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write corpus " + path.string());
  for (const auto& seq : corpus) os << vocab.join(seq) << '\n';
}

}  // namespace cdppo
