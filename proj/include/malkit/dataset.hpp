#pragma once

// Labeled permission datasets: loaders (Drebin feature directories, CSV,
// JSON cache), family grouping and the experimental split plans.

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "malkit/common.hpp"
#include "malkit/permissions.hpp"

namespace malkit {

struct LabeledSample {
  std::string id;
  FamilyLabel label = FamilyLabel::novel();
  PermissionVector vector;
};

/// Immutable collection of labeled samples sharing one vocabulary.
class Dataset {
 public:
  Dataset() = default;
  Dataset(PermissionVocabulary vocab, std::vector<LabeledSample> samples)
      : vocab_(std::move(vocab)), samples_(std::move(samples)) {
    std::set<std::string> known;
    for (const auto& s : samples_) {
      if (s.vector.size() != vocab_.size()) {
        throw Error("sample '" + s.id + "' has " + std::to_string(s.vector.size()) +
                    " features, vocabulary has " + std::to_string(vocab_.size()));
      }
      if (s.label.is_novel()) throw Error("sample '" + s.id + "' carries the Novel label");
      if (s.label.name() != kOthersFamily) known.insert(s.label.name());
    }
    known_families_.assign(known.begin(), known.end());
  }

  const PermissionVocabulary& vocab() const noexcept { return vocab_; }
  const std::vector<LabeledSample>& samples() const noexcept { return samples_; }
  std::size_t size() const noexcept { return samples_.size(); }
  const LabeledSample& operator[](std::size_t i) const { return samples_[i]; }

  /// Sorted family names usable for training; `others` is never included.
  const std::vector<std::string>& known_families() const noexcept { return known_families_; }

  /// Sample count per label name, including `others`.
  std::map<std::string, std::size_t> family_counts() const {
    std::map<std::string, std::size_t> counts;
    for (const auto& s : samples_) ++counts[s.label.name()];
    return counts;
  }

  std::vector<std::size_t> indices_of(const std::string& family) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples_.size(); ++i) {
      if (samples_[i].label.name() == family) out.push_back(i);
    }
    return out;
  }

  std::string fingerprint() const {
    std::uint64_t h = fnv1a(vocab_.fingerprint());
    for (const auto& s : samples_) {
      h = fnv1a(s.id, h);
      h = fnv1a("\x1f", h);
      h = fnv1a(s.label.name(), h);
      h = fnv1a("\x1f", h);
      const auto bits = s.vector.bits();
      h = fnv1a(std::string_view(reinterpret_cast<const char*>(bits.data()), bits.size()), h);
    }
    return hex64(h);
  }

 private:
  PermissionVocabulary vocab_;
  std::vector<LabeledSample> samples_;
  std::vector<std::string> known_families_;
};

/// A sample before encoding: raw permission names and an optional label.
struct RawSample {
  std::string id;
  std::optional<std::string> label;
  std::vector<std::string> permissions;
};

enum class DatasetFormat { DrebinDir, Csv, Json };

inline DatasetFormat parse_dataset_format(const std::string& s) {
  if (s == "drebin-dir") return DatasetFormat::DrebinDir;
  if (s == "csv") return DatasetFormat::Csv;
  if (s == "json") return DatasetFormat::Json;
  throw Error("unknown dataset format '" + s + "' (expected drebin-dir, csv or json)");
}

struct LoadOptions {
  /// Drebin label file; when empty, searched next to the feature directory.
  std::string labels_csv;
  /// Skip feature files without a label instead of failing (Drebin ships
  /// benign apps in the same directory).
  bool skip_unlabeled = false;
  /// Keep missing labels as nullopt (prediction inputs).
  bool allow_unlabeled = false;
};

namespace detail {

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto end = s.find(sep, pos);
    auto field = trim(s.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos));
    if (field.size() >= 2 && field.front() == '"' && field.back() == '"') {
      field = field.substr(1, field.size() - 2);
    }
    out.emplace_back(field);
    if (end == std::string_view::npos) break;
    pos = end + 1;
  }
  return out;
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

inline std::map<std::string, std::string> read_label_csv(const std::string& path) {
  std::map<std::string, std::string> labels;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto fields = split(lines[i], ',');
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
      throw ParseError(path, i + 1, 0, "expected 'id,family'");
    }
    if (i == 0 && (fields[0] == "id" || fields[0] == "sha256")) continue;
    labels[fields[0]] = fields[1];
  }
  return labels;
}

inline std::string find_label_csv(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  for (const fs::path& candidate :
       {dir / "labels.csv", dir.parent_path() / "sha256_family.csv", dir.parent_path() / "labels.csv"}) {
    if (fs::is_regular_file(candidate)) return candidate.string();
  }
  throw Error("no label CSV found for " + dir.string() +
              " (looked for labels.csv, ../sha256_family.csv, ../labels.csv)");
}

inline std::string base64_encode(std::span<const std::uint8_t> bytes) {
  using namespace boost::archive::iterators;
  using It = base64_from_binary<transform_width<const std::uint8_t*, 6, 8>>;
  std::string out(It(bytes.data()), It(bytes.data() + bytes.size()));
  out.append((3 - bytes.size() % 3) % 3, '=');
  return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string text) {
  using namespace boost::archive::iterators;
  using It = transform_width<binary_from_base64<std::string::const_iterator>, 8, 6>;
  const auto padding = text.size() - std::min(text.size(), text.find_last_not_of('=') + 1);
  if (text.size() % 4 != 0 || padding > 2) throw Error("invalid base64 length");
  std::replace(text.end() - static_cast<std::ptrdiff_t>(padding), text.end(), '=', 'A');
  std::vector<std::uint8_t> out;
  try {
    out.assign(It(text.cbegin()), It(text.cend()));
  } catch (const std::exception& e) {
    throw Error(std::string("invalid base64: ") + e.what());
  }
  out.resize(out.size() - padding);
  return out;
}

// Bits packed MSB-first, 8 per byte.
inline std::string pack_bits(const PermissionVector& v) {
  std::vector<std::uint8_t> bytes((v.size() + 7) / 8, 0);
  for (std::size_t f = 0; f < v.size(); ++f) {
    if (v.test(f)) bytes[f / 8] |= static_cast<std::uint8_t>(0x80u >> (f % 8));
  }
  return base64_encode(bytes);
}

inline PermissionVector unpack_bits(const std::string& encoded, std::size_t size) {
  const auto bytes = base64_decode(encoded);
  if (bytes.size() != (size + 7) / 8) throw Error("packed bit length does not match vocabulary");
  PermissionVector v(size);
  for (std::size_t f = 0; f < size; ++f) {
    if (bytes[f / 8] & (0x80u >> (f % 8))) v.set(f);
  }
  return v;
}

}  // namespace detail

/// Reads a Drebin-style feature directory: one file per sample with
/// `category::value` lines. Only `permission` entries that name system
/// permissions are kept. Labels come from an `id,family` CSV.
inline std::vector<RawSample> read_drebin_dir(const std::string& dir, const LoadOptions& options = {}) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error("not a directory: " + dir);

  std::map<std::string, std::string> labels;
  std::string label_path = options.labels_csv;
  if (label_path.empty() && !options.allow_unlabeled) label_path = detail::find_label_csv(dir);
  if (!label_path.empty()) labels = detail::read_label_csv(label_path);

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (!label_path.empty() && fs::equivalent(entry.path(), label_path)) continue;
    files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<RawSample> out;
  for (const auto& file : files) {
    RawSample sample;
    sample.id = file.filename().string();
    if (const auto it = labels.find(sample.id); it != labels.end()) {
      sample.label = it->second;
    } else if (options.skip_unlabeled) {
      continue;
    } else if (!options.allow_unlabeled) {
      throw Error(file.string() + ": sample id '" + sample.id + "' has no label in " + label_path);
    }
    const auto lines = detail::read_lines(file.string());
    std::set<std::string> seen;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const auto line = detail::trim(lines[i]);
      if (line.empty()) continue;
      const auto sep = line.find("::");
      if (sep == std::string_view::npos || sep == 0) {
        throw ParseError(file.string(), i + 1, 0, "expected 'category::value'");
      }
      if (line.substr(0, sep) != "permission") continue;
      std::string name(line.substr(sep + 2));
      if (!is_valid_permission_name(name)) {
        throw ParseError(file.string(), i + 1, sep + 3, "invalid permission name");
      }
      if (is_system_permission(name) && seen.insert(name).second) sample.permissions.push_back(std::move(name));
    }
    out.push_back(std::move(sample));
  }
  return out;
}

/// Reads a CSV of samples. Accepted headers, with an optional leading `id`
/// column:
///   label,permissions              (semicolon-joined names)
///   label,<perm_1>,<perm_2>,...    (0/1 one-hot columns)
inline std::vector<RawSample> read_csv_samples(const std::string& path, const LoadOptions& options = {}) {
  const auto lines = detail::read_lines(path);
  if (lines.empty()) throw ParseError(path, 1, 0, "empty CSV");
  const auto header = detail::split(lines[0], ',');
  std::size_t col = 0;
  const bool has_id = !header.empty() && header[0] == "id";
  if (has_id) ++col;
  if (header.size() <= col || header[col] != "label") {
    throw ParseError(path, 1, 0, "header must start with 'label' (optionally preceded by 'id')");
  }
  const std::size_t label_col = col++;
  const bool joined = header.size() == col + 1 && header[col] == "permissions";
  for (std::size_t c = col; c < header.size() && !joined; ++c) {
    if (!is_valid_permission_name(header[c])) throw ParseError(path, 1, 0, "invalid column name '" + header[c] + "'");
  }

  std::vector<RawSample> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (detail::trim(lines[i]).empty()) continue;
    const auto fields = detail::split(lines[i], ',');
    if (fields.size() != header.size()) {
      throw ParseError(path, i + 1, 0, "expected " + std::to_string(header.size()) + " fields, found " +
                                           std::to_string(fields.size()));
    }
    RawSample sample;
    sample.id = has_id ? fields[0] : "row" + std::to_string(i);
    if (!fields[label_col].empty()) {
      sample.label = fields[label_col];
    } else if (!options.allow_unlabeled) {
      throw ParseError(path, i + 1, 0, "missing label");
    }
    std::vector<std::string> names;
    if (joined) {
      for (auto& n : detail::split(fields[col], ';')) {
        if (n.empty()) continue;
        if (!is_valid_permission_name(n)) throw ParseError(path, i + 1, 0, "invalid permission name '" + n + "'");
        names.push_back(std::move(n));
      }
    } else {
      for (std::size_t c = col; c < fields.size(); ++c) {
        if (fields[c] == "1") {
          names.push_back(header[c]);
        } else if (fields[c] != "0") {
          throw ParseError(path, i + 1, 0, "one-hot column '" + header[c] + "' must be 0 or 1");
        }
      }
    }
    std::set<std::string> seen;
    for (auto& n : filter_system_permissions(names)) {
      if (seen.insert(n).second) sample.permissions.push_back(std::move(n));
    }
    out.push_back(std::move(sample));
  }
  return out;
}

/// Builds a dataset from labeled raw samples; the vocabulary is the sorted
/// union of their system permissions.
inline Dataset dataset_from_raw(const std::vector<RawSample>& raw) {
  std::vector<std::vector<std::string>> sets;
  sets.reserve(raw.size());
  for (const auto& r : raw) sets.push_back(filter_system_permissions(r.permissions));
  auto vocab = build_vocabulary(sets);
  std::vector<LabeledSample> samples;
  samples.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!raw[i].label) throw Error("sample '" + raw[i].id + "' has no label");
    samples.push_back({raw[i].id, FamilyLabel::known(*raw[i].label), encode(sets[i], vocab).vector});
  }
  return Dataset(std::move(vocab), std::move(samples));
}

// JSON cache: {schema_version, kind, vocab, samples:[{id,label,bits}]}.
inline nlohmann::json dataset_to_json(const Dataset& d) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : d.samples()) {
    samples.push_back({{"id", s.id}, {"label", s.label.name()}, {"bits", detail::pack_bits(s.vector)}});
  }
  return {{"schema_version", kSchemaVersion},
          {"kind", "malkit-dataset"},
          {"vocab", d.vocab().names()},
          {"samples", std::move(samples)}};
}

inline void check_schema_version(const nlohmann::json& j, const std::string& source) {
  if (!j.is_object() || !j.contains("schema_version") || !j["schema_version"].is_number_integer()) {
    throw Error(source + ": missing schema_version");
  }
  const int version = j["schema_version"].get<int>();
  if (version != kSchemaVersion) {
    throw Error(source + ": unsupported schema_version " + std::to_string(version) + " (expected " +
                std::to_string(kSchemaVersion) + ")");
  }
}

inline Dataset dataset_from_json(const nlohmann::json& j, const std::string& source = "dataset") {
  check_schema_version(j, source);
  try {
    PermissionVocabulary vocab(j.at("vocab").get<std::vector<std::string>>());
    std::vector<LabeledSample> samples;
    for (const auto& s : j.at("samples")) {
      samples.push_back({s.at("id").get<std::string>(), FamilyLabel::known(s.at("label").get<std::string>()),
                         detail::unpack_bits(s.at("bits").get<std::string>(), vocab.size())});
    }
    return Dataset(std::move(vocab), std::move(samples));
  } catch (const nlohmann::json::exception& e) {
    throw Error(source + ": " + e.what());
  }
}

inline void write_json_file(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write file: " + path);
  out << j.dump(2) << '\n';
}

inline nlohmann::json read_json_file(const std::string& path) {
  try {
    return nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(path + ": " + e.what());
  }
}

inline void save_dataset(const Dataset& d, const std::string& path) { write_json_file(dataset_to_json(d), path); }

/// Raw samples from any supported source. JSON caches are decoded back to names.
inline std::vector<RawSample> read_raw_samples(const std::string& path, DatasetFormat format,
                                               const LoadOptions& options = {}) {
  switch (format) {
    case DatasetFormat::DrebinDir:
      return read_drebin_dir(path, options);
    case DatasetFormat::Csv:
      return read_csv_samples(path, options);
    case DatasetFormat::Json: {
      const Dataset d = dataset_from_json(read_json_file(path), path);
      std::vector<RawSample> out;
      for (const auto& s : d.samples()) out.push_back({s.id, s.label.name(), decode(s.vector, d.vocab())});
      return out;
    }
  }
  throw Error("unknown dataset format");
}

inline Dataset load_dataset(const std::string& path, DatasetFormat format, const LoadOptions& options = {}) {
  if (format == DatasetFormat::Json) return dataset_from_json(read_json_file(path), path);
  LoadOptions opts = options;
  opts.allow_unlabeled = false;
  return dataset_from_raw(read_raw_samples(path, format, opts));
}

namespace detail {
inline Dataset relabel(const Dataset& d, const std::set<std::string>& to_others) {
  std::vector<LabeledSample> samples = d.samples();
  for (auto& s : samples) {
    if (to_others.count(s.label.name())) s.label = FamilyLabel::known(std::string(kOthersFamily));
  }
  return Dataset(d.vocab(), std::move(samples));
}
}  // namespace detail

/// Relabels every family with fewer than `min_count` samples as `others`.
inline Dataset group_rare_families(const Dataset& d, std::size_t min_count) {
  if (min_count < 1) throw Error("min_count must be at least 1");
  std::set<std::string> rare;
  for (const auto& [family, count] : d.family_counts()) {
    if (family != kOthersFamily && count < min_count) rare.insert(family);
  }
  return detail::relabel(d, rare);
}

/// Keeps the k most populous known families; everything else becomes `others`.
/// Equal counts are ordered by family name.
inline Dataset top_k_families(const Dataset& d, std::size_t k) {
  std::vector<std::pair<std::size_t, std::string>> ranked;
  for (const auto& [family, count] : d.family_counts()) {
    if (family != kOthersFamily) ranked.emplace_back(count, family);
  }
  if (k < 1 || k > ranked.size()) {
    throw Error("top-k requires 1 <= k <= " + std::to_string(ranked.size()) + ", got " + std::to_string(k));
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::set<std::string> dropped;
  for (std::size_t i = k; i < ranked.size(); ++i) dropped.insert(ranked[i].second);
  return detail::relabel(d, dropped);
}

/// Copy of the samples at `indices`, sharing the vocabulary.
inline Dataset subset(const Dataset& d, std::span<const std::size_t> indices) {
  std::vector<LabeledSample> samples;
  samples.reserve(indices.size());
  for (auto i : indices) samples.push_back(d[i]);
  return Dataset(d.vocab(), std::move(samples));
}

/// One train/test partition. `calibration` is the set TT used to tune the
/// open-set threshold; by default it equals `train`.
struct Fold {
  std::size_t iteration = 0;
  std::size_t index = 0;
  std::optional<std::string> held_out;  // leave-one-class-out novel family
  std::vector<std::size_t> train;
  std::vector<std::size_t> calibration;
  std::vector<std::size_t> test;
  bool external_calibration = false;
};

enum class SplitKind { KFold, LeaveOneClassOut };

struct SplitPlan {
  SplitKind kind = SplitKind::KFold;
  std::size_t k = 10;
  std::uint64_t seed = 0;
  std::vector<Fold> folds;
};

/// Ground truth at test time: `others` and the held-out family are Novel.
inline FamilyLabel test_truth(const Dataset& d, const Fold& fold, std::size_t index) {
  const auto& label = d[index].label;
  if (label.name() == kOthersFamily || (fold.held_out && label.name() == *fold.held_out)) {
    return FamilyLabel::novel();
  }
  return label;
}

namespace detail {

// Per family: seeded shuffle, then round-robin over folds. The round-robin
// cursor carries over between families so fold sizes also stay balanced.
inline std::vector<std::vector<std::size_t>> assign_folds(const Dataset& d, const std::vector<std::string>& families,
                                                          std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error("k-fold requires k >= 2, got " + std::to_string(k));
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t cursor = 0;
  for (const auto& family : families) {
    auto members = d.indices_of(family);
    if (members.size() < k) {
      throw Error("family '" + family + "' has " + std::to_string(members.size()) + " samples, fewer than k=" +
                  std::to_string(k) + "; group rare families first (--min-count)");
    }
    seeded_shuffle(members, rng);
    for (auto idx : members) folds[cursor++ % k].push_back(idx);
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

inline std::vector<std::size_t> complement(const std::vector<std::vector<std::size_t>>& folds, std::size_t skip) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < folds.size(); ++j) {
    if (j != skip) out.insert(out.end(), folds[j].begin(), folds[j].end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

/// Stratified k-fold over the known families. `others` samples never train;
/// they are appended to every test fold as Novel.
inline SplitPlan stratified_kfold(const Dataset& d, std::size_t k, std::uint64_t seed) {
  if (d.known_families().empty()) throw Error("dataset has no known families");
  const auto folds = detail::assign_folds(d, d.known_families(), k, seed);
  const auto others = d.indices_of(std::string(kOthersFamily));
  SplitPlan plan{SplitKind::KFold, k, seed, {}};
  for (std::size_t j = 0; j < k; ++j) {
    Fold fold;
    fold.index = j;
    fold.train = detail::complement(folds, j);
    fold.calibration = fold.train;
    fold.test = folds[j];
    fold.test.insert(fold.test.end(), others.begin(), others.end());
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

/// One iteration per known family f: stratified k-fold over the remaining
/// families, with every sample of f appended to each test fold as Novel.
/// `others` samples take no part.
inline SplitPlan leave_one_class_out(const Dataset& d, std::size_t k, std::uint64_t seed) {
  const auto& families = d.known_families();
  if (families.size() < 2) throw Error("leave-one-class-out needs at least 2 known families");
  SplitPlan plan{SplitKind::LeaveOneClassOut, k, seed, {}};
  for (std::size_t it = 0; it < families.size(); ++it) {
    std::vector<std::string> retained;
    for (const auto& f : families) {
      if (f != families[it]) retained.push_back(f);
    }
    const auto folds = detail::assign_folds(d, retained, k, seed);
    const auto held = d.indices_of(families[it]);
    for (std::size_t j = 0; j < k; ++j) {
      Fold fold;
      fold.iteration = it;
      fold.index = j;
      fold.held_out = families[it];
      fold.train = detail::complement(folds, j);
      fold.calibration = fold.train;
      fold.test = folds[j];
      fold.test.insert(fold.test.end(), held.begin(), held.end());
      plan.folds.push_back(std::move(fold));
    }
  }
  return plan;
}

/// Moves a stratified `fraction` of every training fold into a separate
/// calibration set TT that the classifier never trains on.
inline SplitPlan hold_out_calibration(const Dataset& d, SplitPlan plan, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw Error("calibration hold-out fraction must be in (0, 1)");
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (auto& fold : plan.folds) {
    std::map<std::string, std::vector<std::size_t>> by_family;
    for (auto i : fold.train) by_family[d[i].label.name()].push_back(i);
    std::vector<std::size_t> train, calibration;
    for (auto& [family, members] : by_family) {
      seeded_shuffle(members, rng);
      const auto take = std::max<std::size_t>(1, static_cast<std::size_t>(fraction * members.size()));
      if (take >= members.size()) throw Error("family '" + family + "' too small for calibration hold-out");
      calibration.insert(calibration.end(), members.begin(), members.begin() + take);
      train.insert(train.end(), members.begin() + take, members.end());
    }
    std::sort(train.begin(), train.end());
    std::sort(calibration.begin(), calibration.end());
    fold.train = std::move(train);
    fold.calibration = std::move(calibration);
    fold.external_calibration = true;
  }
  return plan;
}

}  // namespace malkit
