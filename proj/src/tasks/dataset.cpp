#include "cot2/tasks/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "cot2/common/error.hpp"
#include "cot2/common/parallel.hpp"
#include "cot2/common/rng.hpp"
#include "cot2/tasks/mnns.hpp"

namespace cot2::tasks {
namespace {

using nlohmann::json;

constexpr std::uint64_t kSplitKey = 0x5b117;
constexpr std::uint64_t kSubsampleKey = 0x5ab5;

std::string multiset_key(std::vector<int> digits) {
  std::sort(digits.begin(), digits.end());
  std::string key;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    key += (i ? "-" : "") + std::to_string(digits[i]);
  }
  return key;
}

json step_to_json(const SparseStep& s) {
  std::vector<double> mass;
  for (std::size_t k = 0; k < s.support(); ++k) {
    mass.push_back(s.mass(k));
  }
  return json{{"index", s.index},
              {"count", s.count},
              {"denominator", s.denominator},
              {"mass", mass}};
}

SparseStep step_from_json(const json& j) {
  SparseStep s;
  s.index = j.at("index").get<std::vector<std::size_t>>();
  s.count = j.at("count").get<std::vector<std::uint64_t>>();
  s.denominator = j.at("denominator").get<std::uint64_t>();
  std::uint64_t total = 0;
  for (auto c : s.count) total += c;
  if (s.index.size() != s.count.size() || total != s.denominator) {
    throw DataError("dataset: inconsistent sparse step");
  }
  return s;
}

json example_to_json(const Example& e) {
  json steps = json::array();
  for (const auto& s : e.trace.steps) {
    steps.push_back(step_to_json(s));
  }
  json j{{"prompt_tokens", e.prompt},
         {"target_steps", steps},
         {"answer_token", e.answer()},
         {"discrete_path", e.path},
         {"split_key", e.split_key}};
  if (!e.digits.empty()) {
    j["digits"] = e.digits;
  }
  return j;
}

Example example_from_json(const json& j, std::size_t vocab_size, std::size_t steps) {
  Example e;
  e.prompt = j.at("prompt_tokens").get<std::vector<std::size_t>>();
  for (const auto& s : j.at("target_steps")) {
    e.trace.steps.push_back(step_from_json(s));
  }
  e.path = j.at("discrete_path").get<std::vector<std::size_t>>();
  e.split_key = j.at("split_key").get<std::string>();
  if (j.contains("digits")) {
    e.digits = j.at("digits").get<std::vector<int>>();
  }
  if (e.trace.length() != steps || e.path.size() != steps) {
    throw DataError("dataset: record has the wrong number of steps");
  }
  if (j.at("answer_token").get<std::size_t>() != e.answer() ||
      e.trace.answer_token() != e.answer()) {
    throw DataError("dataset: answer token disagrees with the trace");
  }
  auto check = [&](std::size_t t) {
    if (t >= vocab_size) {
      throw VocabularyError("dataset: token " + std::to_string(t) +
                            " outside vocabulary");
    }
  };
  for (auto t : e.prompt) check(t);
  for (auto t : e.path) check(t);
  for (const auto& s : e.trace.steps) for (auto t : s.index) check(t);
  return e;
}

void write_lines(const std::filesystem::path& file, const std::vector<Example>& xs) {
  std::ofstream out(file, std::ios::binary);
  if (!out) {
    throw Error("dataset: cannot write " + file.string());
  }
  for (const auto& e : xs) {
    out << example_to_json(e).dump() << '\n';
  }
}

std::vector<Example> read_lines(const std::filesystem::path& file,
                                std::size_t vocab_size, std::size_t steps) {
  std::ifstream in(file, std::ios::binary);
  if (!in) {
    throw MissingInputError("dataset: cannot read " + file.string());
  }
  std::vector<Example> xs;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      xs.push_back(example_from_json(json::parse(line), vocab_size, steps));
    } catch (const json::exception& e) {
      throw DataError("dataset: " + file.string() + ":" + std::to_string(number) +
                      ": " + e.what());
    }
  }
  return xs;
}

}  // namespace

const char* task_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::Mnns: return "mnns";
    case TaskKind::ProsQA: return "prosqa";
    case TaskKind::ProntoQA: return "prontoqa";
  }
  return "unknown";
}

TaskKind parse_task(const std::string& name) {
  if (name == "mnns") return TaskKind::Mnns;
  if (name == "prosqa") return TaskKind::ProsQA;
  if (name == "prontoqa") return TaskKind::ProntoQA;
  throw ConfigError("unknown task '" + name + "'");
}

std::size_t Dataset::max_prompt_length() const {
  std::size_t n = 0;
  for (const auto* side : {&train, &val}) {
    for (const auto& e : *side) n = std::max(n, e.prompt.size());
  }
  return n;
}

std::pair<std::vector<Example>, std::vector<Example>> split_dataset(
    const std::vector<Example>& examples, double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) {
    throw ConfigError("split: ratio must lie in [0, 1]");
  }
  std::set<std::string> distinct;
  for (const auto& e : examples) distinct.insert(e.split_key);
  std::vector<std::string> keys(distinct.begin(), distinct.end());
  Stream rng(seed, {kSplitKey});
  for (std::size_t i = keys.size(); i > 1; --i) {
    const auto j = std::min(i - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(i)));
    std::swap(keys[i - 1], keys[j]);
  }
  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(keys.size())));
  const std::set<std::string> train_keys(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::pair<std::vector<Example>, std::vector<Example>> out;
  for (const auto& e : examples) {
    (train_keys.contains(e.split_key) ? out.first : out.second).push_back(e);
  }
  return out;
}

Dataset gen_mnns(const MnnsGenConfig& config) {
  const MnnsTokens tokens(config.min_digit, config.max_digit, config.digits);
  Dataset data;
  data.task = TaskKind::Mnns;
  data.vocabulary = tokens.vocabulary();
  data.steps = static_cast<std::size_t>(config.digits);
  const int base = config.max_digit - config.min_digit + 1;
  std::size_t total = 1;
  for (int i = 0; i < config.digits; ++i) total *= static_cast<std::size_t>(base);

  std::vector<std::size_t> chosen(total);
  for (std::size_t i = 0; i < total; ++i) chosen[i] = i;
  if (config.max_instances != 0 && config.max_instances < total) {
    Stream rng(config.seed, {kSubsampleKey});
    for (std::size_t i = 0; i < config.max_instances; ++i) {
      const std::size_t j = i + std::min(total - i - 1,
          static_cast<std::size_t>(rng.uniform() * static_cast<double>(total - i)));
      std::swap(chosen[i], chosen[j]);
    }
    chosen.resize(config.max_instances);
    std::sort(chosen.begin(), chosen.end());
  }
  std::vector<Example> all(chosen.size());
  parallel_for(chosen.size(), [&](std::size_t k) {
    std::size_t code = chosen[k];
    std::vector<int> digits(static_cast<std::size_t>(config.digits));
    for (int i = config.digits - 1; i >= 0; --i) {
      digits[static_cast<std::size_t>(i)] = config.min_digit + static_cast<int>(code % static_cast<std::size_t>(base));
      code /= static_cast<std::size_t>(base);
    }
    const MnnsInstance inst = MnnsInstance::solve(digits);
    Example& e = all[k];
    e.prompt = mnns_prompt(inst, tokens);
    e.trace = mnns_supervision(inst, tokens);
    e.path = mnns_path(inst, tokens);
    e.split_key = multiset_key(digits);
    e.digits = digits;
  });
  auto [train, val] = split_dataset(all, config.train_ratio, config.seed);
  data.train = std::move(train);
  data.val = std::move(val);
  return data;
}

Dataset gen_graph_task(GraphKind kind, const GraphGenConfig& config) {
  const GraphTokens tokens(config.concept_count);
  Dataset data;
  data.task = kind == GraphKind::ProsQA ? TaskKind::ProsQA : TaskKind::ProntoQA;
  data.vocabulary = tokens.vocabulary();
  data.steps = config.graph.hops + 1;
  std::vector<Example> all(config.count);
  parallel_for(config.count, [&](std::size_t i) {
    Stream rng(config.seed, {i});
    for (int attempt = 0;; ++attempt) {
      if (attempt == 100) {
        throw GenerationError("graph: could not draw a decidable instance");
      }
      GraphInstance g = generate_graph(kind, config.graph, config.concept_count, rng);
      try {
        Example& e = all[i];
        e.trace = graph_supervision(g, tokens);
        e.path = graph_path(g, tokens);
        e.prompt = graph_prompt(g, tokens);
        e.split_key = "g" + std::to_string(i);
        break;
      } catch (const GenerationError&) {
        continue;
      }
    }
  });
  auto [train, val] = split_dataset(all, config.train_ratio, config.seed);
  data.train = std::move(train);
  data.val = std::move(val);
  return data;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& data) {
  std::filesystem::create_directories(dir);
  json meta{{"format", "cot2-dataset"},
            {"version", 1},
            {"task", task_name(data.task)},
            {"steps", data.steps},
            {"vocabulary", data.vocabulary.names()},
            {"train_count", data.train.size()},
            {"val_count", data.val.size()}};
  std::ofstream out(dir / "dataset.json", std::ios::binary);
  if (!out) {
    throw Error("dataset: cannot write " + (dir / "dataset.json").string());
  }
  out << meta.dump(2) << '\n';
  write_lines(dir / "train.jsonl", data.train);
  write_lines(dir / "val.jsonl", data.val);
}

Dataset read_dataset(const std::filesystem::path& dir) {
  const auto meta_path = dir / "dataset.json";
  std::ifstream in(meta_path, std::ios::binary);
  if (!in) {
    throw MissingInputError("dataset: cannot read " + meta_path.string());
  }
  Dataset data;
  try {
    const json meta = json::parse(in);
    if (meta.at("format") != "cot2-dataset") {
      throw DataError("dataset: " + meta_path.string() + " is not a dataset");
    }
    data.task = parse_task(meta.at("task").get<std::string>());
    data.steps = meta.at("steps").get<std::size_t>();
    data.vocabulary = Vocabulary(meta.at("vocabulary").get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    throw DataError("dataset: " + meta_path.string() + ": " + e.what());
  }
  data.train = read_lines(dir / "train.jsonl", data.vocabulary.size(), data.steps);
  data.val = read_lines(dir / "val.jsonl", data.vocabulary.size(), data.steps);
  return data;
}

}  // namespace cot2::tasks
