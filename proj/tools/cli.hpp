#pragma once

// `malkit` command-line front end. Lives beside the executable rather than in
// the library so that tests can drive run() in-process.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "malkit/malkit.hpp"

namespace malkit::cli {

struct Options {
  // shared
  std::string data;
  std::string format = "auto";
  std::string labels;
  bool skip_unlabeled = false;
  std::string model;
  std::string out;
  std::size_t min_count = 1;
  std::size_t top_k = 0;
  std::uint64_t seed = 0;
  double fpr = 0.005;
  GBMConfig gbm;

  // extract / build-vocab / encode / predict
  std::vector<std::string> inputs;
  bool no_sdk23 = false;
  bool keep_custom = false;
  std::string vocab;

  // evaluate / baseline-osnn
  std::string mode = "kfold";
  std::size_t k = 10;
  double tt_holdout = 0.0;
  std::string distance = "hamming";
  std::string rule = "original";

  // bench
  std::size_t n_queries = 1000;
  std::size_t repetitions = 30;
  std::string osnn_data;

  // synth
  SyntheticSpec synth;
};

namespace detail {

inline std::string detect_format(const std::string& path, const std::string& requested) {
  if (requested != "auto") return requested;
  namespace fs = std::filesystem;
  if (fs::is_directory(path)) return "drebin-dir";
  const auto ext = fs::path(path).extension().string();
  if (ext == ".csv") return "csv";
  if (ext == ".json") return "json";
  if (ext == ".xml") return "manifest";
  return "list";
}

inline LoadOptions load_options(const Options& o, bool allow_unlabeled = false) {
  LoadOptions lo;
  lo.labels_csv = o.labels;
  lo.skip_unlabeled = o.skip_unlabeled;
  lo.allow_unlabeled = allow_unlabeled;
  return lo;
}

/// Permission names of a manifest or plain list file (system permissions only
/// unless keep_custom).
inline std::vector<std::string> read_permission_file(const std::string& path, const std::string& format,
                                                     const Options& o, std::ostream& err) {
  const std::string text = read_text_file(path);
  std::vector<std::string> names;
  if (format == "manifest") {
    auto parsed = parse_manifest(text, ManifestOptions{!o.no_sdk23}, path);
    for (const auto& w : parsed.warnings) err << "warning: " << path << ": " << w << '\n';
    names = std::move(parsed.permissions);
  } else if (format == "list") {
    names = parse_permission_list(text, path);
  } else {
    throw Error("format '" + format + "' is not a permission file format (manifest or list)");
  }
  return o.keep_custom ? names : filter_system_permissions(names);
}

/// Raw samples from every input path, whatever its format.
inline std::vector<RawSample> read_inputs(const std::vector<std::string>& paths, const Options& o, std::ostream& err) {
  std::vector<RawSample> out;
  for (const auto& path : paths) {
    const auto format = detect_format(path, o.format);
    if (format == "manifest" || format == "list") {
      out.push_back({path, std::nullopt, read_permission_file(path, format, o, err)});
    } else {
      auto raw = read_raw_samples(path, parse_dataset_format(format), load_options(o, true));
      out.insert(out.end(), std::make_move_iterator(raw.begin()), std::make_move_iterator(raw.end()));
    }
  }
  return out;
}

inline Dataset load_training_data(const Options& o) {
  if (o.data.empty()) throw Error("--data is required");
  const auto format = detect_format(o.data, o.format);
  Dataset d = load_dataset(o.data, parse_dataset_format(format), load_options(o));
  if (o.top_k > 0) d = top_k_families(d, o.top_k);
  if (o.min_count > 1) d = group_rare_families(d, o.min_count);
  return d;
}

inline Dataset known_only(const Dataset& d) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i].label.name() != kOthersFamily) keep.push_back(i);
  }
  return subset(d, keep);
}

inline std::string raw_fingerprint(const std::vector<RawSample>& raw) {
  std::uint64_t h = fnv1a("malkit-raw");
  for (const auto& r : raw) {
    h = fnv1a(r.id + "\x1f" + r.label.value_or("") + "\x1f", h);
    auto names = r.permissions;
    std::sort(names.begin(), names.end());
    for (const auto& n : names) h = fnv1a(n + "\n", h);
  }
  return hex64(h);
}

inline nlohmann::json provenance(const nlohmann::json& run_config, const std::string& dataset_fingerprint,
                                 const nlohmann::json& model_hash) {
  return {{"tool", "malkit"},
          {"tool_version", std::string(kToolVersion)},
          {"run_config", run_config},
          {"dataset_fingerprint", dataset_fingerprint},
          {"model_hash", model_hash}};
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write file: " + path);
  out << text;
}

inline std::string safe_file_component(std::string s) {
  for (auto& c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  }
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Subcommands

inline int cmd_extract(const Options& o, std::ostream& out, std::ostream& err) {
  for (const auto& path : o.inputs) {
    const auto names = detail::read_permission_file(path, detail::detect_format(path, o.format == "auto" ? "manifest" : o.format), o, err);
    out << path << ',';
    for (std::size_t i = 0; i < names.size(); ++i) out << (i ? ";" : "") << names[i];
    out << '\n';
  }
  return 0;
}

inline int cmd_build_vocab(const Options& o, std::ostream& out, std::ostream& err) {
  const auto raw = detail::read_inputs(o.inputs, o, err);
  std::vector<std::vector<std::string>> sets;
  for (const auto& r : raw) sets.push_back(o.keep_custom ? r.permissions : filter_system_permissions(r.permissions));
  const auto vocab = build_vocabulary(sets);
  if (o.out.empty()) {
    for (const auto& n : vocab.names()) out << n << '\n';
  } else {
    write_vocabulary_file(vocab, o.out);
    err << "wrote " << vocab.size() << " permissions to " << o.out << '\n';
  }
  return 0;
}

inline int cmd_encode(const Options& o, std::ostream& out, std::ostream& err) {
  const auto vocab = read_vocabulary_file(o.vocab);
  for (const auto& r : detail::read_inputs(o.inputs, o, err)) {
    const auto enc = encode(r.permissions, vocab);
    out << r.id << ',';
    for (auto b : enc.vector.bits()) out << static_cast<char>('0' + b);
    out << ',' << enc.ignored << '\n';
  }
  return 0;
}

inline int cmd_train(const Options& o, const nlohmann::json& run_config, std::ostream&, std::ostream& err) {
  if (o.out.empty()) throw Error("--out is required");
  const Dataset all = detail::load_training_data(o);
  const Dataset d = detail::known_only(all);
  auto model = train(d, o.gbm, TrainOptions{thread_cap(), nullptr});
  auto j = model_to_json(model);
  const auto hash = model_hash(model);
  j["provenance"] = detail::provenance(run_config, all.fingerprint(), hash);
  write_json_file(j, o.out);
  err << "trained " << model.trees.size() << " trees on " << d.size() << " samples (" << model.classes.size()
      << " families, " << model.num_features() << " permissions); model hash " << hash << '\n';
  return 0;
}

inline int cmd_calibrate(const Options& o, const nlohmann::json& run_config, std::ostream& out, std::ostream& err) {
  if (o.model.empty() || o.data.empty()) throw Error("--model and --data are required");
  auto j = read_json_file(o.model);
  auto model = model_from_json(j, o.model);
  const auto raw = read_raw_samples(o.data, parse_dataset_format(detail::detect_format(o.data, o.format)),
                                    detail::load_options(o));
  std::vector<LabeledSample> tt;
  std::size_t dropped = 0;
  for (const auto& r : raw) {
    if (!r.label || !std::binary_search(model.classes.begin(), model.classes.end(), *r.label)) {
      ++dropped;
      continue;
    }
    tt.push_back({r.id, FamilyLabel::known(*r.label), encode(r.permissions, model.vocab).vector});
  }
  if (dropped) err << "calibrate: ignored " << dropped << " samples outside the model's known families\n";
  const auto k = calibrate(std::move(model), tt, o.fpr, CalibrationSource::ExternalTT);
  j["osr"] = threshold_to_json(k.threshold());
  j["provenance"] = detail::provenance(run_config, detail::raw_fingerprint(raw), k.threshold().model_hash);
  const std::string dest = o.out.empty() ? o.model : o.out;
  write_json_file(j, dest);
  out << "tau=" << format_double(k.threshold().tau) << " target_fpr=" << o.fpr
      << " calibration_size=" << k.threshold().calibration_size << '\n';
  return 0;
}

inline int cmd_predict(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.model.empty()) throw Error("--model is required");
  const auto k = classifier_from_json(read_json_file(o.model), o.model);
  std::size_t unknown_total = 0;
  for (const auto& r : detail::read_inputs(o.inputs, o, err)) {
    const auto enc = encode(r.permissions, k.model().vocab);
    unknown_total += enc.ignored;
    const auto decision = k.classify(enc.vector);
    out << r.id << ',' << decision.label.str() << ',' << format_double(decision.max_logit) << '\n';
  }
  if (unknown_total) err << "predict: " << unknown_total << " permissions unseen at training time were ignored\n";
  return 0;
}

inline int cmd_evaluate(const Options& o, const nlohmann::json& run_config, bool osnn, std::ostream& out,
                        std::ostream& err) {
  if (o.out.empty()) throw Error("--out-dir is required");
  const Dataset d = detail::load_training_data(o);
  SplitPlan plan;
  if (o.mode == "kfold") {
    plan = stratified_kfold(d, o.k, o.seed);
  } else if (o.mode == "loco") {
    plan = leave_one_class_out(d, o.k, o.seed);
  } else {
    throw Error("--mode must be kfold or loco");
  }
  if (o.tt_holdout > 0.0) plan = hold_out_calibration(d, std::move(plan), o.tt_holdout, o.seed);

  GBMConfig gbm = o.gbm;
  gbm.seed = o.seed;
  const FoldRunner runner = osnn ? osnn_runner(parse_distance(o.distance), parse_unknown_rule(o.rule), o.fpr)
                                 : maxlogit_runner(gbm, o.fpr);
  const auto report = evaluate(d, plan, runner, osnn ? "osnn" : "maxlogit", o.fpr, thread_cap());

  namespace fs = std::filesystem;
  fs::create_directories(o.out);
  auto j = report_to_json(report);
  nlohmann::json hashes = nlohmann::json::array();
  for (const auto& f : report.folds) hashes.push_back(f.model_hash);
  j["provenance"] = detail::provenance(run_config, d.fingerprint(), hashes);
  j["calibration_note"] =
      o.tt_holdout > 0.0
          ? "threshold calibrated on a stratified hold-out of each training fold"
          : "threshold calibrated on the training fold itself; test false-positive rates are likely underestimated";
  write_json_file(j, (fs::path(o.out) / "metrics.json").string());

  for (const auto& g : report.novelty) {
    const auto name = report.kind == SplitKind::KFold ? std::string("roc.csv")
                                                      : "roc_" + detail::safe_file_component(g.name) + ".csv";
    detail::write_text((fs::path(o.out) / name).string(), roc_to_csv(g.pooled_roc));
  }

  auto brief = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return std::string(buf);
  };
  const auto& m = report.fold_mean;
  out << (osnn ? "osnn" : "maxlogit") << ' ' << o.mode << ": closed micro=" << brief(m.closed_micro)
      << " macro=" << brief(m.closed_macro) << " | open micro=" << brief(m.open_micro)
      << " macro=" << brief(m.open_macro) << " | test FPR=" << brief(m.test_fpr) << '\n';
  for (const auto& g : report.novelty) {
    out << "  novel=" << g.name << " auc=" << brief(g.pooled_roc.auc) << " tpr@" << brief(o.fpr) << "="
        << brief(g.tpr_at_target) << '\n';
  }
  err << "wrote " << (fs::path(o.out) / "metrics.json").string() << '\n';
  return 0;
}

inline int cmd_bench(const Options& o, const nlohmann::json& run_config, std::ostream& out, std::ostream&) {
  if (o.model.empty()) throw Error("--model is required");
  const auto mj = read_json_file(o.model);
  const auto model = model_from_json(mj, o.model);
  const double tau = mj.contains("osr") ? threshold_from_json(mj["osr"]).tau : -std::numeric_limits<double>::infinity();

  std::vector<PermissionVector> queries;
  std::mt19937_64 rng(o.seed);
  if (!o.data.empty()) {
    const auto raw = read_raw_samples(o.data, parse_dataset_format(detail::detect_format(o.data, o.format)),
                                      detail::load_options(o, true));
    for (std::size_t i = 0; queries.size() < o.n_queries && !raw.empty(); ++i) {
      queries.push_back(encode(raw[i % raw.size()].permissions, model.vocab).vector);
    }
  } else {
    for (std::size_t i = 0; i < o.n_queries; ++i) {
      PermissionVector v(model.num_features());
      for (std::size_t f = 0; f < v.size(); ++f) v.set(f, (rng() >> 11) * 0x1.0p-53 < 0.1);
      queries.push_back(std::move(v));
    }
  }
  if (queries.empty()) throw Error("bench: no queries");

  const auto maxlogit = time_inference<PermissionVector>(
      [&](const PermissionVector& p) { return classify_open(model, tau, p).max_logit; }, queries, o.repetitions);
  nlohmann::json j = {{"queries", queries.size()},
                      {"repetitions", maxlogit.repetitions},
                      {"maxlogit_seconds_per_query", maxlogit.seconds_per_sample},
                      {"trees", model.trees.size()},
                      {"max_depth", model.config.max_depth}};
  if (!o.osnn_data.empty()) {
    Options tmp = o;
    tmp.data = o.osnn_data;
    const Dataset train_set = detail::known_only(detail::load_training_data(tmp));
    std::vector<LabeledSample> samples;
    for (const auto& s : train_set.samples()) {
      samples.push_back({s.id, s.label, encode(decode(s.vector, train_set.vocab()), model.vocab).vector});
    }
    const OSNNModel osnn(std::move(samples), parse_distance(o.distance), 1.0, parse_unknown_rule(o.rule));
    const auto nn = time_inference<PermissionVector>(
        [&](const PermissionVector& p) { return osnn_ratio(osnn, p).ratio; }, queries, o.repetitions);
    j["osnn_training_samples"] = osnn.train.size();
    j["osnn_seconds_per_query"] = nn.seconds_per_sample;
    j["speedup"] = nn.seconds_per_sample / maxlogit.seconds_per_sample;
  }
  j["provenance"] = detail::provenance(run_config, "", model_hash(model));
  if (o.out.empty()) {
    out << j.dump(2) << '\n';
  } else {
    write_json_file(j, o.out);
  }
  return 0;
}

inline int cmd_synth(const Options& o, std::ostream&, std::ostream& err) {
  if (o.out.empty()) throw Error("--out is required");
  const Dataset d = make_synthetic(o.synth);
  std::ostringstream csv;
  csv << "id,label,permissions\n";
  for (const auto& s : d.samples()) {
    const auto names = decode(s.vector, d.vocab());
    csv << s.id << ',' << s.label.name() << ',';
    for (std::size_t i = 0; i < names.size(); ++i) csv << (i ? ";" : "") << names[i];
    csv << '\n';
  }
  detail::write_text(o.out, csv.str());
  err << "wrote " << d.size() << " samples to " << o.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

inline void add_gbm_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--rounds", o.gbm.rounds, "Boosting rounds t")->capture_default_str()->check(CLI::NonNegativeNumber);
  cmd->add_option("--max-depth", o.gbm.max_depth, "Maximum tree depth d")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--learning-rate", o.gbm.learning_rate, "Shrinkage")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--min-leaf", o.gbm.min_leaf, "Minimum samples per leaf")->capture_default_str()->check(CLI::PositiveNumber);
}

inline void add_data_flags(CLI::App* cmd, Options& o, bool required = true) {
  auto* data = cmd->add_option("--data", o.data, "Dataset path (Drebin feature dir, CSV or JSON cache)");
  if (required) data->required();
  cmd->add_option("--format", o.format, "drebin-dir | csv | json | auto")->capture_default_str();
  cmd->add_option("--labels", o.labels, "Label CSV (id,family) for drebin-dir");
  cmd->add_flag("--skip-unlabeled", o.skip_unlabeled, "Skip Drebin feature files without a label");
}

inline void add_grouping_flags(CLI::App* cmd, Options& o, std::size_t default_min_count) {
  o.min_count = default_min_count;
  cmd->add_option("--min-count", o.min_count, "Families with fewer samples become 'others'")->capture_default_str();
  cmd->add_option("--top-k", o.top_k, "Keep only the k most populous families (0 = all)")->capture_default_str();
}

/// Entry point. Returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"malkit: Android malware family classification with open-set (MaxLogit) novelty detection"};
  app.set_config("--config", "", "TOML/INI file with option defaults (flags override it)");
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  Options o;
  o.seed = 0;

  auto* extract = app.add_subcommand("extract", "Print the system permissions requested by each manifest");
  extract->add_option("manifests", o.inputs, "Decoded AndroidManifest.xml files or permission lists")->required();
  extract->add_option("--format", o.format, "manifest | list | auto");
  extract->add_flag("--no-sdk23", o.no_sdk23, "Ignore uses-permission-sdk-23 elements");
  extract->add_flag("--keep-custom", o.keep_custom, "Keep non-system permissions");

  auto* build_vocab = app.add_subcommand("build-vocab", "Build a permission vocabulary file");
  build_vocab->add_option("--input,inputs", o.inputs, "Manifests, permission lists or datasets")->required();
  build_vocab->add_option("--format", o.format, "manifest | list | csv | drebin-dir | json | auto");
  build_vocab->add_option("--out", o.out, "Vocabulary file (stdout when omitted)");
  build_vocab->add_flag("--no-sdk23", o.no_sdk23, "Ignore uses-permission-sdk-23 elements");
  build_vocab->add_flag("--keep-custom", o.keep_custom, "Keep non-system permissions");

  auto* enc = app.add_subcommand("encode", "One-hot encode permission sets against a vocabulary");
  enc->add_option("--vocab", o.vocab, "Vocabulary file")->required();
  enc->add_option("--input,inputs", o.inputs, "Manifests, permission lists or datasets")->required();
  enc->add_option("--format", o.format, "manifest | list | csv | drebin-dir | json | auto");
  enc->add_flag("--no-sdk23", o.no_sdk23, "Ignore uses-permission-sdk-23 elements");

  auto* train_cmd = app.add_subcommand("train", "Train the boosted-tree family classifier");
  add_data_flags(train_cmd, o);
  add_grouping_flags(train_cmd, o, 1);
  add_gbm_flags(train_cmd, o);
  train_cmd->add_option("--seed", o.gbm.seed, "Random seed")->capture_default_str();
  train_cmd->add_option("--out", o.out, "Model file")->required();

  auto* calibrate_cmd = app.add_subcommand("calibrate", "Calibrate the MaxLogit threshold at a target FPR");
  calibrate_cmd->add_option("--model", o.model, "Model file")->required();
  add_data_flags(calibrate_cmd, o);
  calibrate_cmd->add_option("--fpr", o.fpr, "Target false-positive rate")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  calibrate_cmd->add_option("--out", o.out, "Output model file (default: overwrite --model)");

  auto* predict = app.add_subcommand("predict", "Classify samples; prints id,label,max_logit");
  predict->add_option("--model", o.model, "Calibrated model file")->required();
  predict->add_option("--input,inputs", o.inputs, "Manifests, permission lists or datasets")->required();
  predict->add_option("--format", o.format, "manifest | list | csv | drebin-dir | json | auto");
  predict->add_option("--labels", o.labels, "Label CSV for drebin-dir inputs");
  predict->add_flag("--no-sdk23", o.no_sdk23, "Ignore uses-permission-sdk-23 elements");

  auto add_eval = [&](CLI::App* cmd) {
    add_data_flags(cmd, o);
    add_grouping_flags(cmd, o, 10);
    cmd->add_option("--mode", o.mode, "kfold | loco")->capture_default_str()->check(CLI::IsMember({"kfold", "loco"}));
    cmd->add_option("--k", o.k, "Number of folds")->capture_default_str();
    cmd->add_option("--fpr", o.fpr, "Target false-positive rate")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--seed", o.seed, "Random seed")->capture_default_str();
    cmd->add_option("--tt-holdout", o.tt_holdout, "Fraction of each training fold held out for calibration (0 = calibrate on the training fold)")
        ->capture_default_str();
    cmd->add_option("--out-dir", o.out, "Report directory")->required();
  };
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Cross-validated closed/open-set evaluation of MaxLogit");
  add_eval(evaluate_cmd);
  add_gbm_flags(evaluate_cmd, o);

  auto* osnn_cmd = app.add_subcommand("baseline-osnn", "Same evaluation with the OSNN baseline");
  add_eval(osnn_cmd);
  osnn_cmd->add_option("--distance", o.distance, "hamming | euclidean")->capture_default_str();
  osnn_cmd->add_option("--rule", o.rule, "original (novel when R > T) | literal (novel when R < T)")->capture_default_str();

  auto* bench = app.add_subcommand("bench", "Time per-query inference");
  bench->add_option("--model", o.model, "Model file")->required();
  bench->add_option("--n-queries", o.n_queries, "Number of query vectors")->capture_default_str();
  bench->add_option("--repetitions", o.repetitions, "Timed passes (min 30)")->capture_default_str();
  add_data_flags(bench, o, false);
  bench->add_option("--osnn-data", o.osnn_data, "Also time OSNN trained on this dataset");
  bench->add_option("--distance", o.distance, "OSNN distance")->capture_default_str();
  bench->add_option("--rule", o.rule, "OSNN rule")->capture_default_str();
  bench->add_option("--seed", o.seed, "Seed for random queries")->capture_default_str();
  bench->add_option("--out", o.out, "Report file (stdout when omitted)");

  auto* synth = app.add_subcommand("synth", "Write the synthetic permission corpus as CSV");
  synth->add_option("--families", o.synth.families)->capture_default_str();
  synth->add_option("--per-family", o.synth.per_family)->capture_default_str();
  synth->add_option("--features", o.synth.features)->capture_default_str();
  synth->add_option("--exclusive", o.synth.exclusive)->capture_default_str();
  synth->add_option("--noise", o.synth.noise)->capture_default_str();
  synth->add_option("--seed", o.synth.seed)->capture_default_str();
  synth->add_option("--out", o.out, "CSV file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  CLI::App* active = app.get_subcommands().front();
  nlohmann::json run_config = {{"command", active->get_name()}};
  for (const CLI::Option* opt : active->get_options()) {
    if (opt->get_name() == "--help") continue;
    // Output locations are not part of the run; leaving them out keeps
    // reruns into different directories byte-identical.
    if (opt->check_lname("out") || opt->check_lname("out-dir")) continue;
    const auto& results = opt->results();
    const std::string key = opt->get_name(false, true).empty() ? opt->get_name() : opt->get_name(false, true);
    if (!results.empty()) {
      run_config[key] = results.size() == 1 ? nlohmann::json(results.front()) : nlohmann::json(results);
    } else if (!opt->get_default_str().empty()) {
      run_config[key] = opt->get_default_str();
    }
  }

  try {
    const std::string name = active->get_name();
    if (name == "extract") return cmd_extract(o, out, err);
    if (name == "build-vocab") return cmd_build_vocab(o, out, err);
    if (name == "encode") return cmd_encode(o, out, err);
    if (name == "train") return cmd_train(o, run_config, out, err);
    if (name == "calibrate") return cmd_calibrate(o, run_config, out, err);
    if (name == "predict") return cmd_predict(o, out, err);
    if (name == "evaluate") return cmd_evaluate(o, run_config, false, out, err);
    if (name == "baseline-osnn") return cmd_evaluate(o, run_config, true, out, err);
    if (name == "bench") return cmd_bench(o, run_config, out, err);
    if (name == "synth") return cmd_synth(o, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace malkit::cli
