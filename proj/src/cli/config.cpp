#include "cot2/cli/config.hpp"

#include <fstream>
#include <set>

#include "cot2/common/error.hpp"

namespace cot2::cli {
namespace {

using nlohmann::json;

/// Reads keys of one JSON object over defaults and rejects leftovers.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config: " + where() + " must be an object");
  }

  bool has(const char* key) const {
    auto it = j_.find(key);
    return it != j_.end() && !it->is_null();
  }

  void get(const char* key, std::size_t& out) { if (auto* v = take(key)) out = as_size(*v, key); }
  void get(const char* key, int& out) {
    if (auto* v = take(key)) {
      if (!v->is_number_integer()) bad(key, "an integer");
      out = v->get<int>();
    }
  }
  void get(const char* key, double& out) {
    if (auto* v = take(key)) {
      if (!v->is_number()) bad(key, "a number");
      out = v->get<double>();
    }
  }
  void get(const char* key, bool& out) {
    if (auto* v = take(key)) {
      if (!v->is_boolean()) bad(key, "a boolean");
      out = v->get<bool>();
    }
  }
  void get(const char* key, std::string& out) {
    if (auto* v = take(key)) {
      if (!v->is_string()) bad(key, "a string");
      out = v->get<std::string>();
    }
  }
  void get(const char* key, std::vector<std::size_t>& out) {
    if (auto* v = take(key)) {
      if (!v->is_array()) bad(key, "an array of nonnegative integers");
      out.clear();
      for (const auto& e : *v) out.push_back(as_size(e, key));
    }
  }
  void get(const char* key, std::vector<int>& out) {
    if (auto* v = take(key)) {
      if (!v->is_array()) bad(key, "an array of integers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number_integer()) bad(key, "an array of integers");
        out.push_back(e.get<int>());
      }
    }
  }
  void get(const char* key, std::vector<double>& out) {
    if (auto* v = take(key)) {
      if (!v->is_array()) bad(key, "an array of numbers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number()) bad(key, "an array of numbers");
        out.push_back(e.get<double>());
      }
    }
  }
  void get(const char* key, std::vector<std::string>& out) {
    if (auto* v = take(key)) {
      if (!v->is_array()) bad(key, "an array of strings");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_string()) bad(key, "an array of strings");
        out.push_back(e.get<std::string>());
      }
    }
  }

  Section child(const char* key) {
    static const json empty = json::object();
    const json* v = take(key);
    return Section(v ? *v : empty, path_.empty() ? key : path_ + "." + key);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError("config: unknown key " + qualified(key.c_str()));
    }
  }

  std::string qualified(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  [[noreturn]] void fail(const char* key, const std::string& why) const {
    throw ConfigError("config: " + qualified(key) + " " + why);
  }

 private:
  const json* take(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return nullptr;
    return &*it;
  }
  std::size_t as_size(const json& v, const char* key) const {
    if (v.is_number_unsigned()) return v.get<std::size_t>();
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) bad(key, "a nonnegative integer");
    return static_cast<std::size_t>(v.get<std::int64_t>());
  }
  [[noreturn]] void bad(const char* key, const char* type) const { fail(key, std::string("must be ") + type); }
  std::string where() const { return path_.empty() ? "document" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, Section& s, const char* key, const char* why) {
  if (!ok) s.fail(key, why);
}

void read_decoder(Section s, decoding::DecoderSpec& d) {
  std::string sampler = decoding::sampler_name(d.sampler);
  s.get("sampler", sampler);
  d.sampler = decoding::parse_sampler(sampler);
  s.get("k", d.k);
  s.get("temperature", d.temperature);
  s.get("alpha_temperature", d.alpha_temperature);
  s.get("alpha_threshold", d.alpha_threshold);
  require(d.k >= 1, s, "k", "must be at least 1");
  require(d.temperature >= 0.0, s, "temperature", "must be nonnegative");
  require(d.alpha_temperature > 0.0, s, "alpha_temperature", "must be positive");
  require(d.alpha_threshold >= 0.0 && d.alpha_threshold < 1.0, s, "alpha_threshold", "must lie in [0, 1)");
  s.finish();
}

json decoder_json(const decoding::DecoderSpec& d) {
  return {{"sampler", decoding::sampler_name(d.sampler)},
          {"k", d.k},
          {"temperature", d.temperature},
          {"alpha_temperature", d.alpha_temperature},
          {"alpha_threshold", d.alpha_threshold}};
}

void read_optimizer(Section& s, training::AdamWConfig& o) {
  s.get("learning_rate", o.learning_rate);
  s.get("weight_decay", o.weight_decay);
  s.get("beta1", o.beta1);
  s.get("beta2", o.beta2);
  s.get("eps", o.eps);
  require(o.learning_rate >= 0.0, s, "learning_rate", "must be nonnegative");
  require(o.weight_decay >= 0.0, s, "weight_decay", "must be nonnegative");
  require(o.beta1 >= 0.0 && o.beta1 < 1.0, s, "beta1", "must lie in [0, 1)");
  require(o.beta2 >= 0.0 && o.beta2 < 1.0, s, "beta2", "must lie in [0, 1)");
  require(o.eps > 0.0, s, "eps", "must be positive");
}

void optimizer_json(json& j, const training::AdamWConfig& o) {
  j["learning_rate"] = o.learning_rate;
  j["weight_decay"] = o.weight_decay;
  j["beta1"] = o.beta1;
  j["beta2"] = o.beta2;
  j["eps"] = o.eps;
}

void read_task(Section s, TaskSection& t) {
  std::string kind = tasks::task_name(t.kind);
  s.get("kind", kind);
  t.kind = tasks::parse_task(kind);
  s.get("train_ratio", t.mnns.train_ratio);
  require(t.mnns.train_ratio > 0.0 && t.mnns.train_ratio <= 1.0, s, "train_ratio", "must lie in (0, 1]");
  t.graph.train_ratio = t.mnns.train_ratio;

  Section m = s.child("mnns");
  m.get("digits", t.mnns.digits);
  m.get("min_digit", t.mnns.min_digit);
  m.get("max_digit", t.mnns.max_digit);
  m.get("max_instances", t.mnns.max_instances);
  require(t.mnns.digits >= 1 && t.mnns.digits <= 8, m, "digits", "must lie in 1..8");
  require(t.mnns.min_digit >= 1, m, "min_digit", "must be at least 1");
  require(t.mnns.max_digit >= t.mnns.min_digit, m, "max_digit", "must be at least min_digit");
  m.finish();

  Section g = s.child("graph");
  g.get("count", t.graph.count);
  g.get("concept_count", t.graph.concept_count);
  g.get("hops", t.graph.graph.hops);
  g.get("width", t.graph.graph.width);
  g.get("extra_edge_probability", t.graph.graph.extra_edge_probability);
  g.get("distractors", t.graph.graph.distractors);
  g.get("distractor_edge_probability", t.graph.graph.distractor_edge_probability);
  require(t.graph.count >= 1, g, "count", "must be positive");
  require(t.graph.graph.hops >= 1, g, "hops", "must be positive");
  require(t.graph.graph.width >= 1, g, "width", "must be positive");
  require(t.graph.graph.extra_edge_probability >= 0.0 && t.graph.graph.extra_edge_probability <= 1.0, g,
          "extra_edge_probability", "must lie in [0, 1]");
  require(t.graph.graph.distractor_edge_probability >= 0.0 &&
              t.graph.graph.distractor_edge_probability <= 1.0,
          g, "distractor_edge_probability", "must lie in [0, 1]");
  require(t.graph.concept_count >= 1 + t.graph.graph.hops * t.graph.graph.width + t.graph.graph.distractors, g,
          "concept_count", "is too small for hops * width + distractors + 1 nodes");
  g.finish();
  s.finish();
}

void read_model(Section s, ModelSection& m) {
  s.get("layers", m.layers);
  s.get("heads", m.heads);
  s.get("dim", m.dim);
  s.get("context", m.context);
  require(m.layers >= 1, s, "layers", "must be positive");
  require(m.heads >= 1, s, "heads", "must be positive");
  require(m.dim >= 1 && m.dim % m.heads == 0, s, "dim", "must be a positive multiple of heads");
  s.finish();
}

void read_train(Section s, training::TrainConfig& t) {
  read_optimizer(s, t.optimizer);
  s.get("batch_size", t.batch_size);
  s.get("epochs", t.epochs);
  s.get("eval_every", t.eval_every);
  std::string prefix = t.prefix.regime == training::PrefixRegime::TeacherForced ? "teacher_forced" : "self_feeding";
  s.get("prefix", prefix);
  if (prefix == "teacher_forced") {
    t.prefix.regime = training::PrefixRegime::TeacherForced;
  } else if (prefix == "self_feeding") {
    t.prefix.regime = training::PrefixRegime::SelfFeeding;
  } else {
    s.fail("prefix", "must be teacher_forced or self_feeding");
  }
  s.get("backprop_through_fed", t.prefix.backprop_through_fed);
  s.get("alpha_temperature", t.prefix.alpha_temperature);
  s.get("alpha_threshold", t.prefix.alpha_threshold);
  s.get("self_feed_from_epoch", t.self_feed_from_epoch);
  s.get("supervised_positions", t.supervised_positions);
  if (s.has("val_decoder")) {
    decoding::DecoderSpec d;
    read_decoder(s.child("val_decoder"), d);
    t.eval_decoder = d;
  } else {
    s.child("val_decoder");
  }
  require(t.batch_size >= 1, s, "batch_size", "must be positive");
  require(t.epochs >= 1, s, "epochs", "must be positive");
  require(t.prefix.alpha_temperature > 0.0, s, "alpha_temperature", "must be positive");
  require(t.prefix.alpha_threshold >= 0.0 && t.prefix.alpha_threshold < 1.0, s, "alpha_threshold",
          "must lie in [0, 1)");
  for (std::size_t p : t.supervised_positions) {
    require(p >= 1, s, "supervised_positions", "are 1-based");
  }
  s.finish();
}

void read_grpo(Section s, grpo::GrpoConfig& g) {
  read_optimizer(s, g.optimizer);
  s.get("group_size", g.group_size);
  s.get("k", g.k);
  s.get("clip", g.clip);
  s.get("kl_weight", g.kl_weight);
  s.get("dirichlet_scale", g.dirichlet_scale);
  std::string sampler = grpo::rollout_sampler_name(g.sampler);
  s.get("sampler", sampler);
  g.sampler = grpo::parse_rollout_sampler(sampler);
  s.get("scale_logits_by_k", g.scale_logits_by_k);
  s.get("batch_size", g.batch_size);
  s.get("epochs", g.epochs);
  s.get("eval_every", g.eval_every);
  s.get("eval_runs", g.eval_runs);
  require(g.epochs >= 1, s, "epochs", "must be positive");
  try {
    g.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  s.finish();
}

void read_eval(Section s, EvalSection& e) {
  s.get("metric", e.metric);
  if (e.metric != "accuracy" && e.metric != "pass@k" && e.metric != "maj@k" && e.metric != "entropy") {
    s.fail("metric", "must be accuracy, pass@k, maj@k or entropy");
  }
  s.get("split", e.split);
  if (e.split != "train" && e.split != "val") s.fail("split", "must be train or val");
  read_decoder(s.child("decoder"), e.decoder);
  s.get("ks", e.ks);
  s.get("runs", e.runs);
  require(!e.ks.empty(), s, "ks", "must not be empty");
  for (std::size_t k : e.ks) require(k >= 1, s, "ks", "must be positive");
  require(e.runs >= 1, s, "runs", "must be positive");
  s.finish();
}

void read_construct(Section s, ConstructSection& c) {
  s.get("n", c.n);
  s.get("min_digit", c.min_digit);
  s.get("max_digit", c.max_digit);
  std::string mode = c.mode == construction::Hardness::Exact ? "exact" : "finite";
  s.get("mode", mode);
  if (mode == "exact") {
    c.mode = construction::Hardness::Exact;
  } else if (mode == "finite") {
    c.mode = construction::Hardness::Finite;
  } else {
    s.fail("mode", "must be exact or finite");
  }
  s.get("c", c.c);
  s.get("max_inputs", c.max_inputs);
  require(c.n >= 1 && c.n <= 20, s, "n", "must lie in 1..20");
  require(c.min_digit >= 1, s, "min_digit", "must be at least 1");
  require(c.max_digit >= c.min_digit, s, "max_digit", "must be at least min_digit");
  require(c.c > 0.0, s, "c", "must be positive");
  s.finish();
}

void read_theory(Section s, TheorySection& t) {
  s.get("chain", t.chain);
  if (t.chain != "random" && t.chain != "mnns") s.fail("chain", "must be random or mnns");
  s.get("v", t.v);
  s.get("m", t.m);
  s.get("digits", t.digits);
  s.get("ks", t.scaling.ks);
  s.get("ns", t.scaling.ns);
  s.get("epsilons", t.scaling.epsilons);
  s.get("repetitions", t.scaling.repetitions);
  s.get("reference_n", t.scaling.reference_n);
  s.get("consistency_chains", t.consistency_chains);
  s.get("consistency_traces", t.consistency_traces);
  require(t.v >= 2, s, "v", "must be at least 2");
  require(t.m >= 1, s, "m", "must be positive");
  require(!t.digits.empty(), s, "digits", "must not be empty");
  require(!t.scaling.ks.empty(), s, "ks", "must not be empty");
  for (std::size_t k : t.scaling.ks) require(k >= 1, s, "ks", "must be positive");
  require(t.scaling.ns.size() >= 2, s, "ns", "needs at least two sizes for a slope");
  for (std::size_t n : t.scaling.ns) require(n >= 1, s, "ns", "must be positive");
  for (double e : t.scaling.epsilons) require(e > 0.0, s, "epsilons", "must be positive");
  require(t.scaling.repetitions >= 1, s, "repetitions", "must be positive");
  require(t.consistency_chains == 0 || t.consistency_traces >= 1, s, "consistency_traces", "must be positive");
  s.finish();
}

}  // namespace

RunConfig parse_config(const json& doc) {
  RunConfig c;
  Section root(doc, "");
  root.get("seed", c.seed);
  read_task(root.child("task"), c.task);
  read_model(root.child("model"), c.model);
  read_train(root.child("train"), c.train);
  read_grpo(root.child("grpo"), c.grpo);
  read_eval(root.child("eval"), c.eval);
  read_construct(root.child("construct"), c.construct);
  read_theory(root.child("theory"), c.theory);
  Section report = root.child("report");
  report.get("runs", c.report.runs);
  report.finish();
  root.finish();

  c.task.mnns.seed = c.seed;
  c.task.graph.seed = c.seed;
  c.train.seed = c.seed;
  c.grpo.seed = c.seed;
  c.theory.scaling.seed = c.seed;
  return c;
}

json config_to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["task"] = {{"kind", tasks::task_name(c.task.kind)},
               {"train_ratio", c.task.mnns.train_ratio},
               {"mnns",
                {{"digits", c.task.mnns.digits},
                 {"min_digit", c.task.mnns.min_digit},
                 {"max_digit", c.task.mnns.max_digit},
                 {"max_instances", c.task.mnns.max_instances}}},
               {"graph",
                {{"count", c.task.graph.count},
                 {"concept_count", c.task.graph.concept_count},
                 {"hops", c.task.graph.graph.hops},
                 {"width", c.task.graph.graph.width},
                 {"extra_edge_probability", c.task.graph.graph.extra_edge_probability},
                 {"distractors", c.task.graph.graph.distractors},
                 {"distractor_edge_probability", c.task.graph.graph.distractor_edge_probability}}}};
  j["model"] = {{"layers", c.model.layers},
                {"heads", c.model.heads},
                {"dim", c.model.dim},
                {"context", c.model.context}};

  json train;
  optimizer_json(train, c.train.optimizer);
  train["batch_size"] = c.train.batch_size;
  train["epochs"] = c.train.epochs;
  train["eval_every"] = c.train.eval_every;
  train["prefix"] = c.train.prefix.regime == training::PrefixRegime::TeacherForced ? "teacher_forced"
                                                                                    : "self_feeding";
  train["backprop_through_fed"] = c.train.prefix.backprop_through_fed;
  train["alpha_temperature"] = c.train.prefix.alpha_temperature;
  train["alpha_threshold"] = c.train.prefix.alpha_threshold;
  train["self_feed_from_epoch"] = c.train.self_feed_from_epoch;
  train["supervised_positions"] = c.train.supervised_positions;
  train["val_decoder"] = c.train.eval_decoder ? decoder_json(*c.train.eval_decoder) : json(nullptr);
  j["train"] = train;

  json g;
  optimizer_json(g, c.grpo.optimizer);
  g["group_size"] = c.grpo.group_size;
  g["k"] = c.grpo.k;
  g["clip"] = c.grpo.clip;
  g["kl_weight"] = c.grpo.kl_weight;
  g["dirichlet_scale"] = c.grpo.dirichlet_scale;
  g["sampler"] = grpo::rollout_sampler_name(c.grpo.sampler);
  g["scale_logits_by_k"] = c.grpo.scale_logits_by_k;
  g["batch_size"] = c.grpo.batch_size;
  g["epochs"] = c.grpo.epochs;
  g["eval_every"] = c.grpo.eval_every;
  g["eval_runs"] = c.grpo.eval_runs;
  j["grpo"] = g;

  j["eval"] = {{"metric", c.eval.metric},
               {"split", c.eval.split},
               {"decoder", decoder_json(c.eval.decoder)},
               {"ks", c.eval.ks},
               {"runs", c.eval.runs}};
  j["construct"] = {{"n", c.construct.n},
                    {"min_digit", c.construct.min_digit},
                    {"max_digit", c.construct.max_digit},
                    {"mode", c.construct.mode == construction::Hardness::Exact ? "exact" : "finite"},
                    {"c", c.construct.c},
                    {"max_inputs", c.construct.max_inputs}};
  j["theory"] = {{"chain", c.theory.chain},
                 {"v", c.theory.v},
                 {"m", c.theory.m},
                 {"digits", c.theory.digits},
                 {"ks", c.theory.scaling.ks},
                 {"ns", c.theory.scaling.ns},
                 {"epsilons", c.theory.scaling.epsilons},
                 {"repetitions", c.theory.scaling.repetitions},
                 {"reference_n", c.theory.scaling.reference_n},
                 {"consistency_chains", c.theory.consistency_chains},
                 {"consistency_traces", c.theory.consistency_traces}};
  j["report"] = {{"runs", c.report.runs}};
  return j;
}

json read_config_document(const std::string& path, json* inputs) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("config: cannot read " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path + " is not valid JSON: " + e.what());
  }
  if (doc.is_object() && doc.value("format", "") == "cot2-manifest") {
    if (!doc.contains("config")) throw ConfigError("config: manifest " + path + " has no config");
    if (inputs && doc.contains("inputs") && doc["inputs"].is_object()) *inputs = doc["inputs"];
    return doc.at("config");
  }
  return doc;
}

}  // namespace cot2::cli
