#include "cot2/cli/app.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cot2/cli/config.hpp"
#include "cot2/common/error.hpp"
#include "cot2/common/parallel.hpp"
#include "cot2/construction/construction.hpp"
#include "cot2/decoding/metrics.hpp"
#include "cot2/grpo/grpo.hpp"
#include "cot2/model/checkpoint.hpp"
#include "cot2/tasks/mnns.hpp"
#include "cot2/theory/theory.hpp"
#include "cot2/training/trainer.hpp"

#ifndef COT2_GIT_DESCRIBE
#define COT2_GIT_DESCRIBE "unknown"
#endif

namespace cot2::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kVerbs[] = {"gen-data", "train-sft", "train-csft", "train-grpo", "eval",
                                  "construct-mnns", "theory-sim", "report"};

struct Options {
  std::string verb;
  std::string config;
  std::string out;
  std::string checkpoint;
  std::string dataset;
  std::string metric;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 0;
};

struct Run {
  Options opts;
  RunConfig cfg;
  json config_json;
  fs::path dir;
  std::ostream& log;
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::ofstream open_csv(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(10);
  return out;
}

/// NaN becomes an empty CSV field.
std::string field(double x) {
  if (!std::isfinite(x)) return "";
  std::ostringstream s;
  s.precision(10);
  s << x;
  return s.str();
}

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

std::vector<std::string> list_outputs(const fs::path& dir) {
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), dir).generic_string();
    if (rel != "manifest.json") files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  return files;
}

void write_manifest(const Run& run, const char* status) {
  json inputs = {{"checkpoint", run.opts.checkpoint.empty() ? json(nullptr) : json(run.opts.checkpoint)},
                 {"dataset", run.opts.dataset.empty() ? json(nullptr) : json(run.opts.dataset)}};
  json m = {{"format", "cot2-manifest"},
            {"version", 1},
            {"verb", run.opts.verb},
            {"code_version", code_version()},
            {"config", run.config_json},
            {"inputs", inputs},
            {"status", status},
            {"outputs", list_outputs(run.dir)}};
  write_json(run.dir / "manifest.json", m);
}

tasks::Dataset generate(const TaskSection& t) {
  if (t.kind == tasks::TaskKind::Mnns) return tasks::gen_mnns(t.mnns);
  const auto kind = t.kind == tasks::TaskKind::ProsQA ? tasks::GraphKind::ProsQA : tasks::GraphKind::ProntoQA;
  return tasks::gen_graph_task(kind, t.graph);
}

tasks::Dataset load_dataset(const Run& run) {
  if (run.opts.dataset.empty()) return generate(run.cfg.task);
  return tasks::read_dataset(run.opts.dataset);
}

model::Checkpoint load_checkpoint(const Run& run, const tasks::Dataset& data) {
  if (run.opts.checkpoint.empty()) throw MissingInputError(run.opts.verb + " needs --checkpoint");
  model::Checkpoint ckpt = model::load_checkpoint(run.opts.checkpoint);
  if (ckpt.params.config.vocab != data.vocabulary.size()) {
    throw DataError("checkpoint vocabulary size " + std::to_string(ckpt.params.config.vocab) +
                    " does not match the dataset's " + std::to_string(data.vocabulary.size()));
  }
  if (ckpt.metadata.contains("task") && ckpt.metadata["task"] != tasks::task_name(data.task)) {
    throw DataError("checkpoint was trained on task " + ckpt.metadata["task"].get<std::string>());
  }
  ckpt.params.config.require_fits(data.max_prompt_length(), data.steps - 1);
  return ckpt;
}

json checkpoint_metadata(const tasks::Dataset& data, const char* objective) {
  return {{"task", tasks::task_name(data.task)},
          {"steps", data.steps},
          {"vocabulary", data.vocabulary.names()},
          {"objective", objective}};
}

void verb_gen_data(Run& run) {
  const tasks::Dataset data = generate(run.cfg.task);
  tasks::write_dataset(run.dir / "dataset", data);
  run.log << "gen-data: " << data.train.size() << " train, " << data.val.size() << " val, vocabulary "
          << data.vocabulary.size() << '\n';
}

const char* objective_name(training::Objective o) {
  switch (o) {
    case training::Objective::Csft: return "csft";
    case training::Objective::Sft: return "sft";
    case training::Objective::SparseSft: return "sparse_sft";
  }
  return "unknown";
}

void verb_train(Run& run, bool continuous) {
  const tasks::Dataset data = load_dataset(run);
  training::TrainConfig tc = run.cfg.train;
  if (continuous) {
    if (!tc.supervised_positions.empty()) {
      throw ConfigError("config: train.supervised_positions applies to train-sft only");
    }
    tc.objective = training::Objective::Csft;
  } else {
    tc.objective = tc.supervised_positions.empty() ? training::Objective::Sft : training::Objective::SparseSft;
  }
  tc.snapshot_dir = run.dir;

  model::LmParams init;
  if (!run.opts.checkpoint.empty()) {
    init = load_checkpoint(run, data).params;
  } else {
    model::ModelConfig mc;
    mc.layers = run.cfg.model.layers;
    mc.heads = run.cfg.model.heads;
    mc.dim = run.cfg.model.dim;
    mc.vocab = data.vocabulary.size();
    mc.context = run.cfg.model.context != 0 ? run.cfg.model.context : data.max_prompt_length() + data.steps;
    mc.seed = run.cfg.seed;
    mc.validate();
    init = model::LmParams::init(mc);
  }

  std::ofstream metrics = open_csv(run.dir / "metrics.csv");
  std::ofstream timing = open_csv(run.dir / "timing.csv");
  metrics << "epoch,train_loss,val_accuracy\n";
  timing << "epoch,wall_time\n";
  const std::size_t print_every = std::max<std::size_t>(1, tc.epochs / 10);
  const auto result = training::train(std::move(init), data, tc, [&](const training::EpochMetrics& row) {
    metrics << row.epoch << ',' << field(row.train_loss) << ',' << field(row.val_accuracy) << '\n';
    timing << row.epoch << ',' << field(row.wall_time) << '\n';
    if (row.epoch % print_every == 0 || row.epoch == tc.epochs) {
      run.log << run.opts.verb << ": epoch " << row.epoch << " loss " << row.train_loss;
      if (std::isfinite(row.val_accuracy)) run.log << " val " << row.val_accuracy;
      run.log << '\n';
    }
  });
  metrics.close();
  timing.close();

  const char* objective = objective_name(tc.objective);
  model::save_checkpoint(run.dir / "checkpoint_final.json",
                         {result.params, result.steps, checkpoint_metadata(data, objective)});
  model::save_checkpoint(run.dir / "checkpoint_best.json",
                         {result.best_params, result.steps, checkpoint_metadata(data, objective)});
  const double final_val = result.log.empty() ? std::nan("") : result.log.back().val_accuracy;
  write_json(run.dir / "summary.json",
             {{"objective", objective},
              {"layers", result.params.config.layers},
              {"heads", result.params.config.heads},
              {"dim", result.params.config.dim},
              {"epochs", tc.epochs},
              {"steps", result.steps},
              {"final_train_loss", result.log.empty() ? json(nullptr) : number_or_null(result.log.back().train_loss)},
              {"final_val_accuracy", number_or_null(final_val)},
              {"best_val_accuracy", data.val.empty() ? json(nullptr) : json(result.best_val_accuracy)}});
}

void verb_train_grpo(Run& run) {
  const tasks::Dataset data = load_dataset(run);
  const model::Checkpoint ckpt = load_checkpoint(run, data);
  const grpo::GrpoConfig& gc = run.cfg.grpo;
  const decoding::DecoderSpec spec = grpo::inference_decoder(gc);

  const double val_before = data.val.empty() ? std::nan("") : grpo::grpo_val_accuracy(ckpt.params, data, gc);
  const auto entropy_before = decoding::mean_step_entropy(ckpt.params, data.val, data.steps, spec, run.cfg.seed);
  const auto result = grpo::grpo_train(ckpt.params, data, gc, [&](const grpo::GrpoStepMetrics& m) {
    if (std::isfinite(m.val_accuracy)) {
      run.log << "train-grpo: step " << m.step << " reward " << m.mean_reward << " val " << m.val_accuracy << '\n';
    }
  });
  const double val_after = data.val.empty() ? std::nan("") : grpo::grpo_val_accuracy(result.params, data, gc);
  const auto entropy_after = decoding::mean_step_entropy(result.params, data.val, data.steps, spec, run.cfg.seed);

  grpo::write_grpo_csv(run.dir / "grpo_metrics.csv", result.log, data.steps);
  model::save_checkpoint(run.dir / "checkpoint_final.json",
                         {result.params, ckpt.step + result.log.size(), checkpoint_metadata(data, "grpo")});
  write_json(run.dir / "summary.json",
             {{"sampler", grpo::rollout_sampler_name(gc.sampler)},
              {"k", gc.k},
              {"dim", result.params.config.dim},
              {"steps", result.log.size()},
              {"val_before", number_or_null(val_before)},
              {"val_after", number_or_null(val_after)},
              {"entropy_before", entropy_before},
              {"entropy_after", entropy_after}});
  run.log << "train-grpo: val " << val_before << " -> " << val_after << '\n';
}

std::string series_name(const decoding::DecoderSpec& d) {
  std::ostringstream s;
  s << decoding::sampler_name(d.sampler);
  if (d.sampler == decoding::Sampler::Mts) s << "_K" << d.k;
  s << "_T" << d.temperature;
  return s.str();
}

void verb_eval(Run& run) {
  const tasks::Dataset data = load_dataset(run);
  const model::Checkpoint ckpt = load_checkpoint(run, data);
  const EvalSection& e = run.cfg.eval;
  const auto& examples = e.split == "train" ? data.train : data.val;
  if (examples.empty()) throw DataError("eval: the " + e.split + " split is empty");

  std::ofstream csv = open_csv(run.dir / "eval.csv");
  csv << "metric,split,series,k,position,mean,std,runs\n";
  const std::string series = series_name(e.decoder);
  json summary = {{"metric", e.metric}, {"split", e.split}, {"series", series}};
  if (e.metric == "entropy") {
    const auto h = decoding::mean_step_entropy(ckpt.params, examples, data.steps, e.decoder, run.cfg.seed);
    for (std::size_t t = 0; t < h.size(); ++t) {
      csv << "entropy," << e.split << ',' << series << ",," << t + 1 << ',' << field(h[t]) << ",,1\n";
    }
    summary["entropy"] = h;
  } else {
    std::vector<decoding::MetricPoint> points;
    if (e.metric == "accuracy") {
      points = decoding::pass_at_k(ckpt.params, examples, data.steps, e.decoder, {1}, e.runs, run.cfg.seed);
    } else if (e.metric == "pass@k") {
      points = decoding::pass_at_k(ckpt.params, examples, data.steps, e.decoder, e.ks, e.runs, run.cfg.seed);
    } else {
      points = decoding::maj_at_k(ckpt.params, examples, data.steps, e.decoder, e.ks, e.runs, run.cfg.seed);
    }
    json rows = json::array();
    for (const auto& p : points) {
      csv << e.metric << ',' << e.split << ',' << series << ',' << p.k << ",," << field(p.mean) << ','
          << field(p.std) << ',' << p.runs << '\n';
      rows.push_back({{"k", p.k}, {"mean", p.mean}, {"std", p.std}, {"runs", p.runs}});
      run.log << "eval: " << e.metric << " k=" << p.k << " " << p.mean << " +- " << p.std << '\n';
    }
    summary["points"] = rows;
  }
  write_json(run.dir / "summary.json", summary);
}

std::string join_digits(const std::vector<int>& d) {
  std::string s;
  for (std::size_t i = 0; i < d.size(); ++i) s += (i ? " " : "") + std::to_string(d[i]);
  return s;
}

void verb_construct(Run& run) {
  const ConstructSection& c = run.cfg.construct;
  const auto cfg = construction::ConstructionConfig::for_mnns(c.n, c.max_digit, c.mode, c.c);
  cfg.validate();
  const std::size_t base = static_cast<std::size_t>(c.max_digit - c.min_digit + 1);
  double total_real = std::pow(static_cast<double>(base), static_cast<double>(c.n));
  std::size_t count = c.max_inputs;
  const bool enumerate = c.max_inputs == 0 || static_cast<double>(c.max_inputs) >= total_real;
  if (enumerate) {
    if (total_real > 1e7) throw ConfigError("config: construct.max_inputs is required above 1e7 inputs");
    count = static_cast<std::size_t>(total_real);
  }

  std::vector<std::vector<int>> inputs(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto& d = inputs[i];
    d.resize(c.n);
    if (enumerate) {
      std::size_t code = i;
      for (std::size_t j = c.n; j-- > 0;) {
        d[j] = c.min_digit + static_cast<int>(code % base);
        code /= base;
      }
    } else {
      Stream rng(run.cfg.seed, {0xc0de, i});
      for (auto& x : d) {
        x = c.min_digit + static_cast<int>(std::min(base - 1, static_cast<std::size_t>(rng.uniform() * base)));
      }
    }
  }
  std::vector<long> got(count);
  std::vector<int> expected(count);
  std::vector<char> failed(count, 0);
  parallel_for(count, [&](std::size_t i) {
    expected[i] = tasks::brute_force_mnns(inputs[i]).sum;
    try {
      got[i] = construction::run_construction(cfg, inputs[i]);
    } catch (const InvariantError&) {
      failed[i] = 1;
    }
  });

  std::ofstream csv = open_csv(run.dir / "construction.csv");
  csv << "index,digits,construction,brute_force,match\n";
  std::size_t matches = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const bool ok = !failed[i] && got[i] == expected[i];
    matches += ok;
    csv << i << ',' << join_digits(inputs[i]) << ',' << (failed[i] ? std::string("error") : std::to_string(got[i]))
        << ',' << expected[i] << ',' << (ok ? 1 : 0) << '\n';
  }
  write_json(run.dir / "summary.json",
             {{"n", c.n},
              {"min_digit", c.min_digit},
              {"max_digit", c.max_digit},
              {"sum_bound", cfg.sum_bound},
              {"omega", cfg.omega},
              {"dim", cfg.dim()},
              {"inputs", count},
              {"matches", matches},
              {"all_match", matches == count}});
  run.log << "construct-mnns: " << matches << " / " << count << " inputs match\n";
}

void verb_theory(Run& run) {
  const TheorySection& t = run.cfg.theory;
  theory::DecoupledChain chain;
  if (t.chain == "random") {
    chain = theory::random_chain(t.v, t.m, run.cfg.seed);
  } else {
    int s = 0;
    for (int d : t.digits) s = std::max(s, std::abs(d));
    chain = theory::mnns_chain(t.digits, s * static_cast<int>(t.digits.size()));
  }
  const auto report = theory::sample_complexity_experiment(chain, t.scaling);
  theory::write_scaling_csv(run.dir / "scaling.csv", report);
  json summary = theory::scaling_summary(report);

  if (t.consistency_chains > 0) {
    std::ofstream csv = open_csv(run.dir / "consistency.csv");
    csv << "chain,l1,bound,within\n";
    const double bound = 3.0 * std::sqrt(static_cast<double>(t.v) / static_cast<double>(t.consistency_traces));
    std::size_t within = 0;
    for (std::size_t i = 0; i < t.consistency_chains; ++i) {
      const auto c = theory::random_chain(t.v, t.m, Stream(run.cfg.seed, {0xc0c0, i})());
      const auto exact = theory::base_cot2_evolve(c);
      const auto empirical = theory::simulate_discrete(c, t.consistency_traces, Stream(run.cfg.seed, {0xc0c1, i})());
      const double l1 = theory::l1_distance(empirical, exact);
      within += l1 <= bound;
      csv << i << ',' << field(l1) << ',' << field(bound) << ',' << (l1 <= bound ? 1 : 0) << '\n';
    }
    summary["consistency"] = {{"chains", t.consistency_chains},
                              {"traces", t.consistency_traces},
                              {"bound", bound},
                              {"within", within}};
  }
  write_json(run.dir / "scaling_summary.json", summary);
  for (std::size_t i = 0; i < report.slopes.size(); ++i) {
    run.log << "theory-sim: K=" << t.scaling.ks[i] << " slope " << report.slopes[i] << '\n';
  }
}

void verb_report(Run& run) {
  if (run.cfg.report.runs.empty()) throw ConfigError("config: report.runs lists no run directories");
  std::ofstream csv = open_csv(run.dir / "report.csv");
  csv << "figure,series,x_name,x,y_name,y,y_std,seed,run\n";
  std::size_t rows = 0;
  for (const auto& dir_name : run.cfg.report.runs) {
    const fs::path dir(dir_name);
    const json manifest = read_json(dir / "manifest.json");
    if (manifest.value("format", "") != "cot2-manifest") throw DataError(dir_name + " has no run manifest");
    if (manifest.value("status", "") != "ok") throw DataError(dir_name + " did not finish");
    const std::string verb = manifest.at("verb").get<std::string>();
    const std::uint64_t seed = manifest.at("config").at("seed").get<std::uint64_t>();
    auto emit = [&](const std::string& figure, const std::string& series, const std::string& x_name, double x,
                    const std::string& y_name, double y, double y_std) {
      csv << figure << ',' << series << ',' << x_name << ',' << field(x) << ',' << y_name << ',' << field(y) << ','
          << field(y_std) << ',' << seed << ',' << dir.generic_string() << '\n';
      ++rows;
    };
    const double none = std::nan("");
    auto num = [](const json& j) { return j.is_number() ? j.get<double>() : std::nan(""); };
    if (verb == "train-sft" || verb == "train-csft") {
      const json s = read_json(dir / "summary.json");
      emit("accuracy_vs_dim", s.at("objective").get<std::string>(), "dim", s.at("dim").get<double>(),
           "val_accuracy", num(s.at("final_val_accuracy")), none);
    } else if (verb == "eval") {
      const json s = read_json(dir / "summary.json");
      const std::string metric = s.at("metric").get<std::string>();
      const std::string series = s.at("series").get<std::string>();
      if (metric == "entropy") {
        const auto h = s.at("entropy").get<std::vector<double>>();
        for (std::size_t t = 0; t < h.size(); ++t) {
          emit("entropy", series, "position", static_cast<double>(t + 1), "entropy", h[t], none);
        }
      } else {
        for (const auto& p : s.at("points")) {
          emit(metric, series, "k", p.at("k").get<double>(), metric, p.at("mean").get<double>(),
               p.at("std").get<double>());
        }
      }
    } else if (verb == "train-grpo") {
      const json s = read_json(dir / "summary.json");
      const std::string series_k = "K" + std::to_string(s.at("k").get<std::size_t>());
      emit("grpo_accuracy", "before", "K", s.at("k").get<double>(), "val_accuracy", num(s.at("val_before")), none);
      emit("grpo_accuracy", "after", "K", s.at("k").get<double>(), "val_accuracy", num(s.at("val_after")), none);
      for (const char* phase : {"before", "after"}) {
        const auto h = s.at(std::string("entropy_") + phase).get<std::vector<double>>();
        for (std::size_t t = 0; t < h.size(); ++t) {
          emit("grpo_entropy", series_k + "_" + phase, "position", static_cast<double>(t + 1), "entropy", h[t],
               none);
        }
      }
    } else if (verb == "theory-sim") {
      std::ifstream in(dir / "scaling.csv");
      if (!in) throw MissingInputError("cannot read " + (dir / "scaling.csv").string());
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line)) {
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
        if (f.size() < 6) throw DataError("malformed scaling.csv row in " + dir_name);
        emit("scaling_l1", "K" + f[2], "N", std::stod(f[3]), "mean_l1", std::stod(f[4]), std::stod(f[5]));
      }
    } else if (verb == "construct-mnns") {
      const json s = read_json(dir / "summary.json");
      emit("construction", "n" + std::to_string(s.at("n").get<std::size_t>()), "inputs", s.at("inputs").get<double>(),
           "match_fraction", s.at("matches").get<double>() / s.at("inputs").get<double>(), none);
    }
  }
  run.log << "report: " << rows << " rows from " << run.cfg.report.runs.size() << " runs\n";
}

void dispatch(Run& run) {
  const std::string& v = run.opts.verb;
  if (v == "gen-data") return verb_gen_data(run);
  if (v == "train-sft") return verb_train(run, false);
  if (v == "train-csft") return verb_train(run, true);
  if (v == "train-grpo") return verb_train_grpo(run);
  if (v == "eval") return verb_eval(run);
  if (v == "construct-mnns") return verb_construct(run);
  if (v == "theory-sim") return verb_theory(run);
  if (v == "report") return verb_report(run);
  throw UsageError("unknown verb '" + v + "'");
}

fs::path default_run_dir(const Options& o, std::uint64_t seed) {
  const char* root = std::getenv("COT2_OUT_ROOT");
  const fs::path base = root && *root ? fs::path(root) : fs::path("runs");
  return base / (o.verb + "-seed" + std::to_string(seed));
}

int execute(const Options& opts, std::ostream& log) {
  set_thread_cap(opts.threads);
  json doc = json::object();
  Options resolved = opts;
  json inputs = json::object();
  if (!opts.config.empty()) {
    doc = read_config_document(opts.config, &inputs);
    // rerun from a manifest: its recorded inputs apply unless overridden
    if (resolved.checkpoint.empty() && inputs.value("checkpoint", json()).is_string()) {
      resolved.checkpoint = inputs["checkpoint"].get<std::string>();
    }
    if (resolved.dataset.empty() && inputs.value("dataset", json()).is_string()) {
      resolved.dataset = inputs["dataset"].get<std::string>();
    }
  }
  if (!doc.is_object()) throw ConfigError("config: document must be an object");
  if (opts.seed) doc["seed"] = *opts.seed;
  if (!opts.metric.empty()) doc["eval"]["metric"] = opts.metric;
  RunConfig cfg = parse_config(doc);

  Run run{resolved, cfg, config_to_json(cfg), {}, log};
  run.dir = opts.out.empty() ? default_run_dir(opts, cfg.seed) : fs::path(opts.out);
  fs::create_directories(run.dir);
  write_manifest(run, "running");
  try {
    dispatch(run);
  } catch (...) {
    write_manifest(run, "failed");
    throw;
  }
  write_manifest(run, "ok");
  return kOk;
}

}  // namespace

const char* code_version() { return COT2_GIT_DESCRIBE; }

std::pair<const char*, int> classify_error(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return {"usage", kUsage};
  if (dynamic_cast<const MissingInputError*>(&e)) return {"missing_input", kMissingInput};
  if (dynamic_cast<const ConfigError*>(&e)) return {"config", kConfig};
  if (dynamic_cast<const NumericError*>(&e)) return {"numeric", kNumeric};
  if (dynamic_cast<const VocabularyError*>(&e)) return {"vocabulary", kData};
  if (dynamic_cast<const DataError*>(&e)) return {"data", kData};
  if (dynamic_cast<const ContextError*>(&e)) return {"context", kData};
  if (dynamic_cast<const DimensionError*>(&e)) return {"dimension", kData};
  if (dynamic_cast<const GenerationError*>(&e)) return {"generation", kData};
  if (dynamic_cast<const InvariantError*>(&e)) return {"invariant", kInvariant};
  if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return {"io", kInternal};
  return {"internal", kInternal};
}

std::string error_line(const char* code, const std::string& message) {
  std::string flat = message;
  std::replace(flat.begin(), flat.end(), '\n', ' ');
  return std::string("error: code=") + code + " message=" + json(flat).dump();
}

int run_cli(const std::vector<std::string>& args, std::ostream& log, std::ostream& err) {
  CLI::App app{"Continuous chain-of-thought experiments", args.empty() ? "cot2" : args[0]};
  app.require_subcommand(1);
  Options opts;
  for (const char* verb : kVerbs) {
    CLI::App* sub = app.add_subcommand(verb);
    sub->add_option("--config", opts.config, "JSON config file or a run manifest");
    sub->add_option("--seed", opts.seed, "Seed overriding the config");
    sub->add_option("--out", opts.out, "Run directory (default $COT2_OUT_ROOT/<verb>-seed<seed>)");
    sub->add_option("--threads", opts.threads, "Worker thread cap, 0 for all cores");
    sub->add_option("--checkpoint", opts.checkpoint, "Model checkpoint to start from or evaluate");
    sub->add_option("--dataset", opts.dataset, "Dataset directory written by gen-data");
    if (std::string(verb) == "eval") {
      sub->add_option("--metric", opts.metric, "accuracy, pass@k, maj@k or entropy");
    }
    sub->callback([&opts, verb] { opts.verb = verb; });
  }

  if (args.size() > 1 && !args[1].empty() && args[1][0] != '-' &&
      std::find(std::begin(kVerbs), std::end(kVerbs), args[1]) == std::end(kVerbs)) {
    err << error_line("usage", "unknown verb '" + args[1] + "'") << '\n';
    return kUsage;
  }
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  if (argv.empty()) argv.push_back("cot2");
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    log << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << error_line("usage", e.what()) << '\n';
    return kUsage;
  }

  try {
    return execute(opts, log);
  } catch (const std::exception& e) {
    const auto [code, exit_code] = classify_error(e);
    err << error_line(code, e.what()) << '\n';
    return exit_code;
  }
}

}  // namespace cot2::cli
