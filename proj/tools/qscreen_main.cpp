// qscreen — synthetic screening cohorts, question-wise video models, and the
// cross-validated evaluation harness around them, from one binary.
//
// Exit codes: 0 success, 1 numeric/training/data failure, 2 usage/config error.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "qscreen/datagen.hpp"
#include "qscreen/gradsuite.hpp"
#include "qscreen/ingest.hpp"
#include "qscreen/model.hpp"
#include "qscreen/train.hpp"

using nlohmann::json;
using namespace qscreen;

namespace {

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  try {
    json j;
    in >> j;
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void reject_unknown(const json& obj, std::set<std::string> allowed, const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ConfigError(where + ": unknown key \"" + it.key() + "\"");
    }
  }
}

json section(const json& cfg, const char* name) {
  if (!cfg.contains(name)) return json::object();
  if (!cfg[name].is_object()) throw ConfigError(std::string("config section \"") + name +
                                                "\" must be an object");
  return cfg[name];
}

GenSpec genspec_from_json(const json& j) {
  reject_unknown(j,
                 {"n_subjects", "prevalence", "sds_agreement", "signal_strength",
                  "frames_per_clip", "clip_height", "clip_width", "seed"},
                 "gen");
  GenSpec spec;
  try {
    if (j.contains("n_subjects")) spec.n_subjects = j["n_subjects"].get<int>();
    if (j.contains("prevalence")) spec.prevalence = j["prevalence"].get<double>();
    if (j.contains("sds_agreement")) spec.sds_agreement = j["sds_agreement"].get<double>();
    if (j.contains("signal_strength")) spec.signal_strength = j["signal_strength"].get<double>();
    if (j.contains("frames_per_clip")) spec.frames_per_clip = j["frames_per_clip"].get<int>();
    if (j.contains("clip_height")) spec.clip_height = j["clip_height"].get<int>();
    if (j.contains("clip_width")) spec.clip_width = j["clip_width"].get<int>();
    if (j.contains("seed")) spec.seed = j["seed"].get<uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("gen: ") + e.what());
  }
  return spec;
}

PoolRounding pool_rounding_from_string(const std::string& s) {
  if (s.size() != 3) throw ConfigError("pool rounding must be 3 chars of f/c, got \"" + s + "\"");
  auto parse = [&](char c) {
    if (c == 'f') return Rounding::floor;
    if (c == 'c') return Rounding::ceil;
    throw ConfigError("pool rounding must be 3 chars of f/c, got \"" + s + "\"");
  };
  return PoolRounding{parse(s[0]), parse(s[1]), parse(s[2])};
}

ModelConfig model_from_json(const json& j) {
  reject_unknown(j,
                 {"preset", "encoder", "spatial", "frames", "channel_widths", "pool_rounding",
                  "feature_dim", "fusion_hidden", "use_sds", "use_time", "dtype",
                  "frame_channels", "frame_embed_dim", "rnn_hidden"},
                 "model");
  ModelConfig cfg;
  try {
    if (j.contains("preset")) {
      const std::string p = j["preset"].get<std::string>();
      if (p == "tiny") {
        cfg = ModelConfig::tiny();
      } else if (p == "full") {
        cfg = ModelConfig::full_scale();
      } else {
        throw ConfigError("unknown model preset \"" + p + "\" (tiny|full)");
      }
    }
    if (j.contains("encoder")) cfg.encoder = encoder_from_string(j["encoder"].get<std::string>());
    if (j.contains("spatial")) {
      const auto sp = j["spatial"].get<std::vector<int>>();
      if (sp.size() != 2) throw ConfigError("spatial must be [H,W]");
      cfg.height = sp[0];
      cfg.width = sp[1];
    }
    if (j.contains("frames")) cfg.frames = j["frames"].get<int>();
    if (j.contains("channel_widths")) {
      cfg.channel_widths = j["channel_widths"].get<std::vector<int>>();
      cfg.pool_rounding.clear();  // widths changed; rounding must be restated
    }
    if (j.contains("pool_rounding")) {
      cfg.pool_rounding.clear();
      for (const auto& s : j["pool_rounding"].get<std::vector<std::string>>()) {
        cfg.pool_rounding.push_back(pool_rounding_from_string(s));
      }
    }
    if (j.contains("feature_dim")) cfg.feature_dim = j["feature_dim"].get<int>();
    if (j.contains("fusion_hidden")) cfg.fusion_hidden = j["fusion_hidden"].get<std::vector<int>>();
    if (j.contains("use_sds")) cfg.use_sds = j["use_sds"].get<bool>();
    if (j.contains("use_time")) cfg.use_time = j["use_time"].get<bool>();
    if (j.contains("dtype")) cfg.dtype = dtype_from_string(j["dtype"].get<std::string>());
    if (j.contains("frame_channels")) cfg.frame_channels = j["frame_channels"].get<std::vector<int>>();
    if (j.contains("frame_embed_dim")) cfg.frame_embed_dim = j["frame_embed_dim"].get<int>();
    if (j.contains("rnn_hidden")) cfg.rnn_hidden = j["rnn_hidden"].get<int>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  return cfg;
}

TrainConfig train_from_json(const json& j) {
  reject_unknown(j, {"beta1", "beta2", "eps", "learning_rate", "batch_size", "epochs", "seeds"},
                 "train");
  TrainConfig cfg;
  try {
    if (j.contains("beta1")) cfg.beta1 = j["beta1"].get<double>();
    if (j.contains("beta2")) cfg.beta2 = j["beta2"].get<double>();
    if (j.contains("eps")) cfg.eps = j["eps"].get<double>();
    if (j.contains("learning_rate")) cfg.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("batch_size")) cfg.batch_size = j["batch_size"].get<int>();
    if (j.contains("epochs")) cfg.epochs = j["epochs"].get<int>();
    if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<uint64_t>>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  return cfg;
}

struct RunSection {
  std::string data;
  std::string out;
  std::string report;
  std::string method;
  std::string checkpoint;
  int folds = 5;
  uint64_t fold_seed = kDefaultFoldSeed;
  int jobs = 1;
  int fold = -1;
  uint64_t train_seed = 1;
};

RunSection run_from_json(const json& j) {
  reject_unknown(j,
                 {"data", "out", "report", "method", "checkpoint", "folds", "fold_seed", "jobs",
                  "fold", "train_seed"},
                 "run");
  RunSection r;
  try {
    if (j.contains("data")) r.data = j["data"].get<std::string>();
    if (j.contains("out")) r.out = j["out"].get<std::string>();
    if (j.contains("report")) r.report = j["report"].get<std::string>();
    if (j.contains("method")) r.method = j["method"].get<std::string>();
    if (j.contains("checkpoint")) r.checkpoint = j["checkpoint"].get<std::string>();
    if (j.contains("folds")) r.folds = j["folds"].get<int>();
    if (j.contains("fold_seed")) r.fold_seed = j["fold_seed"].get<uint64_t>();
    if (j.contains("jobs")) r.jobs = j["jobs"].get<int>();
    if (j.contains("fold")) r.fold = j["fold"].get<int>();
    if (j.contains("train_seed")) r.train_seed = j["train_seed"].get<uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run: ") + e.what());
  }
  return r;
}

std::string resolve_data(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("QSCREEN_DATA_ROOT"); env && *env) return env;
  throw ConfigError("no data root: pass --data or set QSCREEN_DATA_ROOT");
}

void print_summary(const CohortSummary& c, const std::string& out_dir) {
  std::printf("subjects: %d (normal %d, depression %d)\n", c.n_normal + c.n_depression, c.n_normal,
              c.n_depression);
  std::printf("sds-vs-label confusion: label0/sds0=%d label0/sds1=%d label1/sds0=%d label1/sds1=%d\n",
              c.label0_sds0, c.label0_sds1, c.label1_sds0, c.label1_sds1);
  if (!out_dir.empty()) std::printf("store: %s\n", out_dir.c_str());
}

void print_metrics_row(const std::string& method, int fold, const Confusion& c) {
  std::printf("method=%s fold=%d TP=%lld FN=%lld FP=%lld TN=%lld acc=%.4f sens=%.4f spec=%.4f\n",
              method.c_str(), fold, (long long)c.tp, (long long)c.fn, (long long)c.fp,
              (long long)c.tn, accuracy(c), sensitivity(c), specificity(c));
}

FoldPlan plan_for(const std::vector<Session>& sessions, int folds, uint64_t fold_seed) {
  std::vector<std::string> ids;
  ids.reserve(sessions.size());
  for (const auto& s : sessions) ids.push_back(s.subject_id);
  return FoldPlan::make(ids, folds, fold_seed);
}

int cmd_generate(const json& cfg, const std::string& out_flag) {
  const GenSpec spec = genspec_from_json(section(cfg, "gen"));
  RunSection run = run_from_json(section(cfg, "run"));
  if (!out_flag.empty()) run.out = out_flag;
  if (run.out.empty()) throw ConfigError("generate needs --out (or run.out in the config)");

  const auto sessions = generate(spec);
  write_cohort(sessions, run.out);
  print_summary(summarize(sessions), run.out);
  return 0;
}

int cmd_train(const json& cfg, const RunSection& run) {
  if (run.fold < 0 || run.fold >= run.folds) {
    throw ConfigError("train needs --fold in [0," + std::to_string(run.folds) + ")");
  }
  const ModelConfig model_cfg = model_from_json(section(cfg, "model"));
  TrainConfig train_cfg = train_from_json(section(cfg, "train"));
  model_cfg.validate();
  train_cfg.validate();

  const auto sessions = read_cohort(resolve_data(run.data));
  const FoldPlan plan = plan_for(sessions, run.folds, run.fold_seed);

  auto run_typed = [&](auto tag) {
    using T = decltype(tag);
    Model<T> model(model_cfg, derive_seed(run.train_seed, uint64_t(run.fold)));
    TrainLog log = train(model, sessions, plan, run.fold, train_cfg,
                         derive_seed(run.train_seed, 0x1000 + uint64_t(run.fold)));
    for (size_t e = 0; e < log.epoch_loss.size(); ++e) {
      std::printf("epoch %zu loss %.6f\n", e + 1, log.epoch_loss[e]);
    }
    const Confusion c = evaluate(model, sessions, &plan, run.fold);
    print_metrics_row(model_cfg.method_label(), run.fold, c);
    if (!run.out.empty()) {
      model.save(run.out);
      std::printf("checkpoint: %s\n", run.out.c_str());
    }
  };
  if (model_cfg.dtype == Dtype::f64) {
    run_typed(double{});
  } else {
    run_typed(float{});
  }
  return 0;
}

int cmd_eval(const json& cfg, const RunSection& run) {
  const auto sessions = read_cohort(resolve_data(run.data));
  const FoldPlan plan = plan_for(sessions, run.folds, run.fold_seed);

  if (run.method == "sds_sum") {
    const Confusion c = evaluate_sds_sum(sessions, &plan, run.fold);
    print_metrics_row("sds_sum", run.fold, c);
    return 0;
  }
  if (!run.method.empty()) throw ConfigError("unknown --method \"" + run.method + "\" (sds_sum)");
  if (run.checkpoint.empty()) throw ConfigError("eval needs --checkpoint or --method sds_sum");

  const ModelConfig model_cfg = model_from_json(section(cfg, "model"));
  model_cfg.validate();
  auto eval_typed = [&](auto tag) {
    using T = decltype(tag);
    Model<T> model(model_cfg, 0);
    model.load(run.checkpoint);
    const Confusion c = evaluate(model, sessions, &plan, run.fold);
    print_metrics_row(model_cfg.method_label(), run.fold, c);
  };
  if (model_cfg.dtype == Dtype::f64) {
    eval_typed(double{});
  } else {
    eval_typed(float{});
  }
  return 0;
}

int cmd_cv(const json& cfg, const RunSection& run) {
  const ModelConfig model_cfg = model_from_json(section(cfg, "model"));
  const TrainConfig train_cfg = train_from_json(section(cfg, "train"));

  CvOptions opts;
  opts.jobs = run.jobs;
  opts.n_folds = run.folds;
  opts.fold_seed = run.fold_seed;
  if (run.method == "sds_sum") {
    opts.train_model = false;
  } else if (!run.method.empty()) {
    throw ConfigError("unknown --method \"" + run.method + "\" (sds_sum)");
  }

  const auto sessions = read_cohort(resolve_data(run.data));
  const CrossValidationResult result = cross_validate(sessions, model_cfg, train_cfg, opts);

  int64_t violations = 0;
  for (const auto& a : result.audits) {
    if (!a.disjoint) ++violations;
  }
  std::printf("%s", result.report.to_table().c_str());
  std::printf("leakage audit: %lld violation(s) across %zu training runs\n", (long long)violations,
              result.audits.size());

  if (!run.report.empty()) {
    std::ofstream csv(run.report + ".csv", std::ios::binary | std::ios::trunc);
    csv << result.report.to_csv();
    std::ofstream txt(run.report + ".txt", std::ios::binary | std::ios::trunc);
    txt << result.report.to_table();
    if (!csv || !txt) throw FormatError("cannot write report files at prefix " + run.report);
    std::printf("report: %s.csv %s.txt\n", run.report.c_str(), run.report.c_str());
  }
  return violations == 0 ? 0 : 1;
}

int cmd_gradcheck(const std::string& preset, bool ops_only, int coords, uint64_t seed) {
  if (preset != "tiny") throw ConfigError("gradcheck supports --preset tiny");
  GradSuiteOptions opts;
  opts.include_pipelines = !ops_only;
  opts.pipeline_coords_per_tensor = coords;
  opts.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  const auto reports = run_gradient_suite(opts);
  bool all_pass = true;
  for (const auto& r : reports) {
    std::printf("%s\n", r.summary().c_str());
    all_pass &= r.pass;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%zu checks in %.1fs: %s\n", reports.size(), secs, all_pass ? "all passed" : "FAILURES");
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"question-wise video + questionnaire screening toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "JSON config file; flags override its values");

  // generate
  auto* gen = app.add_subcommand("generate", "write a synthetic session store");
  std::string gen_out;
  GenSpec gen_flags;
  bool gen_has[8] = {};
  gen->add_option("--out", gen_out, "output store directory");
  gen->add_option("--subjects", gen_flags.n_subjects)->each([&](const std::string&) { gen_has[0] = true; });
  gen->add_option("--prevalence", gen_flags.prevalence)->each([&](const std::string&) { gen_has[1] = true; });
  gen->add_option("--agreement", gen_flags.sds_agreement)->each([&](const std::string&) { gen_has[2] = true; });
  gen->add_option("--signal", gen_flags.signal_strength)->each([&](const std::string&) { gen_has[3] = true; });
  gen->add_option("--frames", gen_flags.frames_per_clip)->each([&](const std::string&) { gen_has[4] = true; });
  gen->add_option("--height", gen_flags.clip_height)->each([&](const std::string&) { gen_has[5] = true; });
  gen->add_option("--width", gen_flags.clip_width)->each([&](const std::string&) { gen_has[6] = true; });
  gen->add_option("--seed", gen_flags.seed)->each([&](const std::string&) { gen_has[7] = true; });

  // shared run flags
  auto add_run_flags = [](CLI::App* cmd, RunSection& r, bool* has) {
    cmd->add_option("--data", r.data);
    cmd->add_option("--folds", r.folds)->each([has](const std::string&) { has[0] = true; });
    cmd->add_option("--fold-seed", r.fold_seed)->each([has](const std::string&) { has[1] = true; });
  };

  auto* train_cmd = app.add_subcommand("train", "train one fold and save a checkpoint");
  RunSection train_run;
  bool train_has[2] = {};
  add_run_flags(train_cmd, train_run, train_has);
  bool train_flag_has[4] = {};
  int train_fold = -1;
  uint64_t train_seed = 1;
  int train_epochs = 0;
  double train_lr = 0;
  std::string train_out, train_encoder, train_preset;
  train_cmd->add_option("--fold", train_fold);
  train_cmd->add_option("--seed", train_seed);
  train_cmd->add_option("--out", train_out);
  train_cmd->add_option("--epochs", train_epochs)->each([&](const std::string&) { train_flag_has[0] = true; });
  train_cmd->add_option("--lr", train_lr)->each([&](const std::string&) { train_flag_has[1] = true; });
  train_cmd->add_option("--encoder", train_encoder);
  train_cmd->add_option("--preset", train_preset);

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint or baseline on a fold");
  RunSection eval_run;
  bool eval_has[2] = {};
  add_run_flags(eval_cmd, eval_run, eval_has);
  eval_cmd->add_option("--fold", eval_run.fold);
  eval_cmd->add_option("--checkpoint", eval_run.checkpoint);
  eval_cmd->add_option("--method", eval_run.method);

  auto* cv_cmd = app.add_subcommand("cv", "cross-validate and write csv/text reports");
  RunSection cv_run;
  bool cv_has[2] = {};
  add_run_flags(cv_cmd, cv_run, cv_has);
  bool cv_flag_has[4] = {};
  int cv_epochs = 0;
  double cv_lr = 0;
  std::vector<uint64_t> cv_seeds;
  std::string cv_encoder, cv_preset;
  cv_cmd->add_option("--report", cv_run.report);
  cv_cmd->add_option("--jobs", cv_run.jobs);
  cv_cmd->add_option("--method", cv_run.method);
  cv_cmd->add_option("--epochs", cv_epochs)->each([&](const std::string&) { cv_flag_has[0] = true; });
  cv_cmd->add_option("--lr", cv_lr)->each([&](const std::string&) { cv_flag_has[1] = true; });
  cv_cmd->add_option("--seeds", cv_seeds)->delimiter(',');
  cv_cmd->add_option("--encoder", cv_encoder);
  cv_cmd->add_option("--preset", cv_preset);

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference verification battery");
  std::string grad_preset = "tiny";
  bool grad_ops_only = false;
  int grad_coords = 3;
  uint64_t grad_seed = 7;
  grad_cmd->add_option("--preset", grad_preset);
  grad_cmd->add_flag("--ops-only", grad_ops_only);
  grad_cmd->add_option("--coords", grad_coords);
  grad_cmd->add_option("--seed", grad_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    json cfg = load_config(config_path);
    reject_unknown(cfg, {"gen", "model", "train", "run"}, "config");

    // flags override config file values
    auto flag_given = [](CLI::App* cmd, const char* name) {
      const CLI::Option* opt = cmd->get_option_no_throw(name);
      return opt != nullptr && opt->count() > 0;
    };
    auto merge_run = [&](RunSection base, const RunSection& flags, const bool* has,
                         CLI::App* cmd) -> RunSection {
      if (!flags.data.empty()) base.data = flags.data;
      if (has[0]) base.folds = flags.folds;
      if (has[1]) base.fold_seed = flags.fold_seed;
      if (flag_given(cmd, "--fold")) base.fold = flags.fold;
      if (flag_given(cmd, "--checkpoint")) base.checkpoint = flags.checkpoint;
      if (flag_given(cmd, "--method")) base.method = flags.method;
      if (flag_given(cmd, "--report")) base.report = flags.report;
      if (flag_given(cmd, "--jobs")) base.jobs = flags.jobs;
      return base;
    };

    if (*gen) {
      json gcfg = section(cfg, "gen");
      if (gen_has[0]) gcfg["n_subjects"] = gen_flags.n_subjects;
      if (gen_has[1]) gcfg["prevalence"] = gen_flags.prevalence;
      if (gen_has[2]) gcfg["sds_agreement"] = gen_flags.sds_agreement;
      if (gen_has[3]) gcfg["signal_strength"] = gen_flags.signal_strength;
      if (gen_has[4]) gcfg["frames_per_clip"] = gen_flags.frames_per_clip;
      if (gen_has[5]) gcfg["clip_height"] = gen_flags.clip_height;
      if (gen_has[6]) gcfg["clip_width"] = gen_flags.clip_width;
      if (gen_has[7]) gcfg["seed"] = gen_flags.seed;
      cfg["gen"] = gcfg;
      return cmd_generate(cfg, gen_out);
    }
    if (*train_cmd) {
      RunSection run = merge_run(run_from_json(section(cfg, "run")), train_run, train_has, train_cmd);
      if (train_cmd->count("--fold")) run.fold = train_fold;
      if (train_cmd->count("--seed")) run.train_seed = train_seed;
      if (train_cmd->count("--out")) run.out = train_out;
      json tcfg = section(cfg, "train");
      if (train_flag_has[0]) tcfg["epochs"] = train_epochs;
      if (train_flag_has[1]) tcfg["learning_rate"] = train_lr;
      cfg["train"] = tcfg;
      json mcfg = section(cfg, "model");
      if (!train_preset.empty()) mcfg["preset"] = train_preset;
      if (!train_encoder.empty()) mcfg["encoder"] = train_encoder;
      cfg["model"] = mcfg;
      return cmd_train(cfg, run);
    }
    if (*eval_cmd) {
      RunSection run = merge_run(run_from_json(section(cfg, "run")), eval_run, eval_has, eval_cmd);
      if (eval_cmd->count("--fold")) run.fold = eval_run.fold;
      return cmd_eval(cfg, run);
    }
    if (*cv_cmd) {
      RunSection run = merge_run(run_from_json(section(cfg, "run")), cv_run, cv_has, cv_cmd);
      json tcfg = section(cfg, "train");
      if (cv_flag_has[0]) tcfg["epochs"] = cv_epochs;
      if (cv_flag_has[1]) tcfg["learning_rate"] = cv_lr;
      if (!cv_seeds.empty()) tcfg["seeds"] = cv_seeds;
      cfg["train"] = tcfg;
      json mcfg = section(cfg, "model");
      if (!cv_preset.empty()) mcfg["preset"] = cv_preset;
      if (!cv_encoder.empty()) mcfg["encoder"] = cv_encoder;
      cfg["model"] = mcfg;
      return cmd_cv(cfg, run);
    }
    if (*grad_cmd) {
      return cmd_gradcheck(grad_preset, grad_ops_only, grad_coords, grad_seed);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
