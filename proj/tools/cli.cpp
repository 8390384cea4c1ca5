#include "cli.hpp"

#include <omp.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mdmf/baselines.hpp"
#include "mdmf/detect.hpp"
#include "mdmf/errors.hpp"
#include "mdmf/io.hpp"
#include "mdmf/metrics.hpp"
#include "mdmf/pfs.hpp"
#include "mdmf/score_csv.hpp"
#include "mdmf/theory.hpp"

namespace mdmf::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct ConfigValueError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BadPathError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void add_train_options(CLI::App* sub, RunConfig& c) {
  sub->add_option("--real", c.real_path, "Real embeddings (.pfse)")->required();
  sub->add_option("--fake", c.fake_path, "Generated embeddings (.pfse)")->required();
  sub->add_option("--epochs", c.train.epochs, "Training epochs")->capture_default_str();
  sub->add_option("--batch-size", c.train.batch_size, "Images per class per step")->capture_default_str();
  sub->add_option("--lr", c.train.learning_rate, "AdamW learning rate")->capture_default_str();
  sub->add_option("--beta1", c.train.adam_beta1, "AdamW beta1")->capture_default_str();
  sub->add_option("--beta2", c.train.adam_beta2, "AdamW beta2")->capture_default_str();
  sub->add_option("--weight-decay", c.train.weight_decay, "AdamW decoupled weight decay")->capture_default_str();
}

void require_input(const std::string& path, const char* flag) {
  if (path.empty()) return;
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw BadPathError(std::string(flag) + ": no such file: " + path);
}

void require_output(const std::string& path, const char* flag) {
  if (path.empty()) return;
  const auto parent = fs::path(path).parent_path();
  std::error_code ec;
  if (!parent.empty() && !fs::is_directory(parent, ec)) {
    throw BadPathError(std::string(flag) + ": output directory does not exist: " + parent.string());
  }
}

void check_paths(const RunConfig& c) {
  require_input(c.real_path, "--real");
  require_input(c.fake_path, "--fake");
  require_input(c.checkpoint_path, "--checkpoint");
  require_input(c.refs_path, "--refs");
  for (const auto& p : c.tests_paths) require_input(p, "--tests");
  require_input(c.scores_path, "--scores");
  for (const auto& p : c.truth_paths) require_input(p, "--truth");
  require_input(c.classifier_path, "--classifier");
  require_output(c.out_path, "--out");
  require_output(c.scores_out_path, "--scores-out");
  require_output(c.history_path, "--history");
  require_output(c.real_out_path, "--real-out");
  require_output(c.fake_out_path, "--fake-out");
}

void check_values(RunConfig& c) {
  auto fail = [](const std::string& what) { throw ConfigValueError(what); };
  if (c.threads < 1) fail("--threads must be >= 1");
  const auto& s = c.subcommand;
  if (s == "synth") {
    if (c.images < 1) fail("--images must be >= 1");
    if (c.dilution_c.has_value() != c.dilution_eta.has_value()) {
      fail("--dilution-c and --dilution-eta must be given together");
    }
    if (!(c.defect_norm >= 0.0)) fail("--defect-norm must be >= 0");
    c.synth.mu_defect = synth::axis_defect(c.synth.dim, c.defect_norm);
    if (c.dilution_c) c.synth.dilution = synth::Dilution{*c.dilution_c, *c.dilution_eta};
    c.synth.seed = c.seed;
    try {
      c.synth.validate();
    } catch (const std::invalid_argument& e) {
      fail(e.what());
    }
  }
  if (s == "train" || s == "baseline") {
    c.train.seed = c.seed;
    try {
      c.train.validate();
    } catch (const std::invalid_argument& e) {
      // Patch-classifier batches may hold a single image.
      if (!(s == "baseline" && c.train.batch_size == 1)) fail(e.what());
    }
    if (c.hidden_width < 1) fail("--hidden must be >= 1");
    if (c.pfs_dim < 1) fail("--pfs-dim must be >= 1");
    if (!(c.dropout >= 0.0 && c.dropout < 1.0)) fail("--dropout must lie in [0, 1)");
  }
  if (s == "eval") {
    if (c.baseline) {
      if (c.classifier_path.empty() || c.tests_paths.empty()) {
        throw CLI::RequiredError("eval --baseline needs --classifier and --tests");
      }
      if (*c.baseline != "voting" && *c.baseline != "mean" && *c.baseline != "max" && *c.baseline != "topk") {
        fail("--baseline must be one of voting, mean, max, topk");
      }
      if (!(c.theta_patch >= 0.0 && c.theta_patch <= 1.0)) fail("--theta must lie in [0, 1]");
      if (c.topk < 1) fail("--topk must be >= 1");
    } else if (c.scores_path.empty()) {
      throw CLI::RequiredError("eval needs --scores (or --baseline with --classifier and --tests)");
    }
  }
}

int exit_code_for(const CLI::ParseError& e) {
  if (dynamic_cast<const CLI::ConversionError*>(&e) || dynamic_cast<const CLI::ValidationError*>(&e)) {
    return kConfigValue;
  }
  if (dynamic_cast<const CLI::FileError*>(&e)) return kBadPath;
  return kUsage;
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Records of several .pfse files in order; all must share (K, D).
EmbeddingDataset read_concatenated(const std::vector<std::string>& paths) {
  auto out = read_embedding_file(paths.front());
  for (std::size_t i = 1; i < paths.size(); ++i) {
    const auto next = read_embedding_file(paths[i]);
    if (next.patch_count() != out.patch_count() || next.dim() != out.dim()) {
      throw FormatError(FormatError::Kind::invalid, paths[i] + ": (K, D) differs from " + paths.front());
    }
    for (const auto& r : next.records()) out.add(r);
    out.set_labels_present(out.labels_present() && next.labels_present());
  }
  return out;
}

void log(const RunConfig& c, int level, const std::string& msg) {
  if (c.verbosity >= level) std::cerr << "mdmf: " << msg << "\n";
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
  } else {
    io::write_file_atomic(path, text);
  }
}

std::string metrics_json(std::span<const double> scores, std::span<const Label> labels, const std::string& baseline) {
  std::size_t n_fake = 0;
  for (auto l : labels) n_fake += l == Label::generated ? 1 : 0;
  const std::size_t n_real = labels.size() - n_fake;
  if (n_fake == 0 || n_real == 0) throw std::invalid_argument("eval: needs at least one real and one generated sample");
  const auto best = metrics::best_accuracy(scores, labels);
  json j;
  if (!baseline.empty()) j["baseline"] = baseline;
  j["auroc"] = metrics::auroc(scores, labels);
  j["ap"] = metrics::average_precision(scores, labels);
  j["acc"] = best.accuracy;
  if (std::isfinite(best.tau)) {
    j["tau"] = best.tau;
  } else {
    j["tau"] = format_double(best.tau);
  }
  j["n_real"] = n_real;
  j["n_fake"] = n_fake;
  return j.dump(2) + "\n";
}

std::string classifier_to_json(const baselines::PatchClassifier& clf) {
  json j;
  j["format"] = "mdmf-patch-classifier";
  j["version"] = 1;
  j["weight"] = clf.weight;
  j["bias"] = clf.bias;
  return j.dump(2) + "\n";
}

baselines::PatchClassifier classifier_from_file(const std::string& path) {
  const auto bytes = io::read_file(path);
  auto invalid = [&](const std::string& what) {
    return FormatError(FormatError::Kind::invalid, "classifier file " + path + ": " + what);
  };
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw invalid(e.what());
  }
  if (!j.is_object() || j.value("format", "") != "mdmf-patch-classifier") throw invalid("not a patch classifier");
  if (j.value("version", 0) != 1) {
    throw FormatError(FormatError::Kind::unsupported_version, "classifier file " + path + ": unsupported version");
  }
  baselines::PatchClassifier clf;
  try {
    clf.weight = j.at("weight").get<std::vector<double>>();
    clf.bias = j.at("bias").get<double>();
  } catch (const json::exception& e) {
    throw invalid(e.what());
  }
  if (clf.weight.empty()) throw invalid("empty weight vector");
  return clf;
}

int run_synth(const RunConfig& c) {
  const rng::Key key(c.seed);
  const auto real = synth::sample_real_fields(c.synth, c.images, rng::derive(key, rng::Tag::real_set));
  const auto fake = synth::sample_fake_fields(c.synth, c.images, rng::derive(key, rng::Tag::fake_set));
  write_embedding_file(synth::make_dataset(real, Label::real, "real-"), c.real_out_path);
  write_embedding_file(synth::make_dataset(fake, Label::generated, "fake-"), c.fake_out_path);
  log(c, 1, "wrote " + std::to_string(c.images) + " real and generated records");
  return kOk;
}

int run_train(const RunConfig& c) {
  const auto real = read_embedding_file(c.real_path);
  const auto fake = read_embedding_file(c.fake_path);
  auto init = init_params(real.dim(), c.hidden_width, c.pfs_dim, c.seed, c.dropout);
  const auto result = train(real, fake, c.train, std::move(init));
  for (int e = 0; e < c.train.epochs; ++e) {
    log(c, 1, "epoch " + std::to_string(e) + " mean J " + format_double(result.history.epoch_mean_j(e)));
  }
  write_checkpoint(result.params, c.out_path);
  if (!c.history_path.empty()) {
    std::string csv = "step,epoch,j,mmd2,variance,gamma\n";
    for (const auto& s : result.history.steps) {
      csv += std::to_string(s.step) + "," + std::to_string(s.epoch) + "," + format_double(s.j) + "," +
             format_double(s.mmd2) + "," + format_double(s.variance) + "," + format_double(s.gamma) + "\n";
    }
    io::write_file_atomic(c.history_path, csv);
  }
  return kOk;
}

int run_score(const RunConfig& c) {
  const auto params = read_checkpoint(c.checkpoint_path);
  const auto refs = read_embedding_file(c.refs_path);
  const auto tests = read_concatenated(c.tests_paths);
  const auto bank = detect::build_reference_bank(refs, params);
  double tau = 0.0;
  if (c.tau) {
    tau = *c.tau;
  } else {
    const auto loo = detect::leave_one_out_scores(bank);
    tau = detect::calibrate_threshold_real_only(loo, c.calibrate_alpha.value_or(kDefaultCalibrationAlpha));
    log(c, 1, "calibrated tau " + format_double(tau));
  }
  const auto report = detect::batch_detect(bank, tests, params, tau);
  io::write_file_atomic(c.out_path, detect::report_to_csv(report));
  return kOk;
}

int run_eval_scores(const RunConfig& c) {
  const auto bytes = io::read_file(c.scores_path);
  const auto rows = parse_score_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  std::vector<double> scores;
  std::vector<Label> labels;
  for (const auto& r : rows) {
    scores.push_back(r.score);
    labels.push_back(r.label);
  }
  if (!c.truth_paths.empty()) {
    const auto truth = read_concatenated(c.truth_paths);
    if (truth.size() != rows.size()) {
      throw FormatError(FormatError::Kind::invalid, "--truth has " + std::to_string(truth.size()) +
                                                        " records but the score CSV has " +
                                                        std::to_string(rows.size()) + " rows");
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (truth[i].source_id != rows[i].source_id) {
        throw FormatError(FormatError::Kind::invalid, "row " + std::to_string(i) + ": source id '" +
                                                          rows[i].source_id + "' does not match truth id '" +
                                                          truth[i].source_id + "'");
      }
      labels[i] = truth[i].label;
    }
  }
  emit(c.out_path, metrics_json(scores, labels, ""));
  return kOk;
}

int run_eval_baseline(const RunConfig& c) {
  const auto clf = classifier_from_file(c.classifier_path);
  const auto tests = read_concatenated(c.tests_paths);
  if (tests.dim() != clf.weight.size()) throw std::invalid_argument("eval: classifier dimension does not match tests");
  const auto& mode = *c.baseline;
  std::vector<double> scores(tests.size());
  std::vector<Label> labels(tests.size());
  for (std::size_t i = 0; i < tests.size(); ++i) {
    const auto& f = tests[i].field;
    if (mode == "voting") {
      scores[i] = baselines::voting_score(f, clf, c.theta_patch);
    } else if (mode == "mean") {
      scores[i] = baselines::pooled_score(f, clf, baselines::Pooling::mean);
    } else if (mode == "max") {
      scores[i] = baselines::pooled_score(f, clf, baselines::Pooling::max);
    } else {
      scores[i] = baselines::pooled_score(f, clf, baselines::Pooling::topk, c.topk);
    }
    labels[i] = tests[i].label;
  }
  if (!c.scores_out_path.empty()) {
    // Majority vote for the ratio; probability 1/2 for the logit pools.
    const double tau = c.tau.value_or(mode == "voting" ? 0.5 : 0.0);
    std::vector<ScoreRow> rows;
    for (std::size_t i = 0; i < tests.size(); ++i) {
      rows.push_back({tests[i].source_id, scores[i], detect::classify(scores[i], tau)});
    }
    io::write_file_atomic(c.scores_out_path, write_score_csv(rows));
  }
  emit(c.out_path, metrics_json(scores, labels, mode));
  return kOk;
}

int run_theory(const RunConfig& c) {
  const auto report = theory::run_suite(c.seed, c.quick);
  std::cout << report.to_table();
  if (!c.out_path.empty()) io::write_file_atomic(c.out_path, report.to_json());
  return report.passed() ? kOk : kTheoryFailed;
}

int run_baseline(const RunConfig& c) {
  const auto real = read_embedding_file(c.real_path);
  const auto fake = read_embedding_file(c.fake_path);
  const auto clf = baselines::train_patch_classifier(real, fake, c.train);
  io::write_file_atomic(c.out_path, classifier_to_json(clf));
  return kOk;
}

}  // namespace

ParseOutcome parse_config(const std::vector<std::string>& args) {
  RunConfig c;
  CLI::App app{"Patch-level MMD detector for generated images", "mdmf"};
  app.set_config("--config", "", "TOML file with option values; flags override it");
  app.allow_config_extras(false);
  app.fallthrough();
  app.require_subcommand(1);
  app.add_option("--seed", c.seed, "Seed for every random stream")->capture_default_str();
  app.add_option("--threads", c.threads, "Worker threads")->capture_default_str();
  app.add_flag("-v,--verbose", c.verbosity, "Progress on stderr (repeat for more)");

  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic real/generated .pfse pair");
  synth_cmd->add_option("--real-out", c.real_out_path, "Real output (.pfse)")->required();
  synth_cmd->add_option("--fake-out", c.fake_out_path, "Generated output (.pfse)")->required();
  synth_cmd->add_option("--images", c.images, "Images per class")->capture_default_str();
  synth_cmd->add_option("--dim", c.synth.dim, "Embedding dimension D")->capture_default_str();
  synth_cmd->add_option("--patches", c.synth.patch_count, "Patches per image K")->capture_default_str();
  synth_cmd->add_option("--sigma-e", c.synth.sigma_e, "Patch noise std")->capture_default_str();
  synth_cmd->add_option("--rho", c.synth.rho, "Defect probability per patch")->capture_default_str();
  synth_cmd->add_option("--defect-norm", c.defect_norm, "Norm of the defect (first axis)")->capture_default_str();
  synth_cmd->add_option("--dilution-c", c.dilution_c, "Dilution scale c in c K^-eta");
  synth_cmd->add_option("--dilution-eta", c.dilution_eta, "Dilution exponent eta");
  synth_cmd->add_option("--phi-mix", c.synth.phi_mix, "Lag-one sign correlation across patches")->capture_default_str();

  auto* train_cmd = app.add_subcommand("train", "Train the projection head");
  add_train_options(train_cmd, c);
  train_cmd->add_option("--out", c.out_path, "Checkpoint output (.pfsp)")->required();
  train_cmd->add_option("--lambda", c.train.lambda, "Variance regularizer")->capture_default_str();
  train_cmd->add_option("--hidden", c.hidden_width, "Hidden width")->capture_default_str();
  train_cmd->add_option("--pfs-dim", c.pfs_dim, "Signature dimension d")->capture_default_str();
  train_cmd->add_option("--dropout", c.dropout, "Dropout rate")->capture_default_str();
  train_cmd->add_flag("--no-dropout{false}", c.train.dropout_enabled, "Train without dropout");
  train_cmd->add_option("--history", c.history_path, "Per-step objective CSV");

  auto* score_cmd = app.add_subcommand("score", "Score test images against real references");
  score_cmd->add_option("--checkpoint", c.checkpoint_path, "Trained head (.pfsp)")->required();
  score_cmd->add_option("--refs", c.refs_path, "Real references (.pfse)")->required();
  score_cmd->add_option("--tests", c.tests_paths, "Test images (.pfse, several are concatenated)")->required();
  auto* tau_opt = score_cmd->add_option("--tau", c.tau, "Decision threshold");
  auto* alpha_opt = score_cmd->add_option("--calibrate-alpha", c.calibrate_alpha,
                                          "Threshold = mean + alpha * sd of leave-one-out reference scores "
                                          "(default 3)");
  tau_opt->excludes(alpha_opt);
  score_cmd->add_option("--out", c.out_path, "Score CSV output")->required();

  auto* eval_cmd = app.add_subcommand("eval", "Metrics report for a score CSV or a baseline");
  eval_cmd->add_option("--scores", c.scores_path, "Score CSV");
  eval_cmd->add_option("--truth", c.truth_paths,
                      "Ground-truth labels (.pfse files in score-CSV row order); without it the CSV label "
                      "column is taken as the truth");
  eval_cmd->add_option("--baseline", c.baseline, "voting | mean | max | topk");
  eval_cmd->add_option("--classifier", c.classifier_path, "Patch classifier (from `baseline`)");
  eval_cmd->add_option("--tests", c.tests_paths, "Test images (.pfse, several are concatenated)");
  eval_cmd->add_option("--theta", c.theta_patch, "Per-patch probability cutoff for voting")->capture_default_str();
  eval_cmd->add_option("--topk", c.topk, "Patches averaged by topk")->capture_default_str();
  eval_cmd->add_option("--tau", c.tau, "Label threshold for --scores-out");
  eval_cmd->add_option("--scores-out", c.scores_out_path, "Baseline score CSV output");
  eval_cmd->add_option("--out", c.out_path, "JSON report (stdout when omitted)");

  auto* theory_cmd = app.add_subcommand("theory-check", "Monte-Carlo checks of the theoretical results");
  theory_cmd->add_option("--out", c.out_path, "JSON report");
  theory_cmd->add_flag("--quick", c.quick, "Reduced sample counts (smoke run)");

  auto* baseline_cmd = app.add_subcommand("baseline", "Train the per-patch linear classifier");
  add_train_options(baseline_cmd, c);
  baseline_cmd->add_option("--out", c.out_path, "Classifier output (.json)")->required();

  ParseOutcome out;
  if (args.size() <= 1) {
    out.exit_code = kUsage;
    out.message = app.help();
    return out;
  }
  std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
  try {
    app.parse(rev);
    c.subcommand = app.get_subcommands().front()->get_name();
    check_values(c);
    check_paths(c);
  } catch (const CLI::Success& e) {
    std::ostringstream text;
    std::ostringstream ignored;
    out.exit_code = app.exit(e, text, ignored);
    out.message = text.str();
    return out;
  } catch (const CLI::ParseError& e) {
    out.exit_code = exit_code_for(e);
    out.message = e.what();
    return out;
  } catch (const ConfigValueError& e) {
    out.exit_code = kConfigValue;
    out.message = e.what();
    return out;
  } catch (const BadPathError& e) {
    out.exit_code = kBadPath;
    out.message = e.what();
    return out;
  }
  out.config = std::move(c);
  return out;
}

int run(const RunConfig& cfg) {
  omp_set_num_threads(cfg.threads);
  try {
    const auto& s = cfg.subcommand;
    if (s == "synth") return run_synth(cfg);
    if (s == "train") return run_train(cfg);
    if (s == "score") return run_score(cfg);
    if (s == "eval") return cfg.baseline ? run_eval_baseline(cfg) : run_eval_scores(cfg);
    if (s == "theory-check") return run_theory(cfg);
    if (s == "baseline") return run_baseline(cfg);
    std::cerr << "mdmf: unknown subcommand " << s << "\n";
    return kUsage;
  } catch (const FormatError& e) {
    std::cerr << "mdmf: " << e.what() << "\n";
    return kDataFormat;
  } catch (const std::exception& e) {
    std::cerr << "mdmf: " << e.what() << "\n";
    return kRuntime;
  }
}

int main_entry(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  const auto parsed = parse_config(args);
  if (!parsed.config) {
    auto& stream = parsed.exit_code == kOk ? std::cout : std::cerr;
    if (parsed.exit_code == kOk) {
      stream << parsed.message;
    } else {
      stream << (parsed.exit_code == kUsage && args.size() <= 1 ? "" : "mdmf: ") << parsed.message << "\n";
    }
    return parsed.exit_code;
  }
  return run(*parsed.config);
}

}  // namespace mdmf::cli
