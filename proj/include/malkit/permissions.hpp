#pragma once

// Manifest parsing, system-permission filtering, vocabularies and one-hot
// encoding of permission sets.

#include <boost/property_tree/detail/rapidxml.hpp>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "malkit/common.hpp"

namespace malkit {

inline constexpr std::string_view kSystemPermissionPrefix = "android.permission.";

/// True when `name` is a usable permission identifier: non-empty, no whitespace.
inline bool is_valid_permission_name(std::string_view name) noexcept {
  if (name.empty()) return false;
  return std::none_of(name.begin(), name.end(), [](unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
  });
}

inline bool is_system_permission(std::string_view name) noexcept {
  return name.starts_with(kSystemPermissionPrefix);
}

struct ManifestOptions {
  /// Also read `uses-permission-sdk-23` elements.
  bool include_sdk23 = true;
};

struct ParsedManifest {
  std::vector<std::string> permissions;  // document order, first occurrence kept
  std::vector<std::string> warnings;
};

namespace detail {

inline std::pair<std::size_t, std::size_t> line_column(std::string_view text,
                                                       std::size_t offset) {
  offset = std::min(offset, text.size());
  std::size_t line = 1, column = 1;
  for (std::size_t i = 0; i < offset; ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return {line, column};
}

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n\v\f");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\v\f");
  return s.substr(first, last - first + 1);
}

}  // namespace detail

/// Reads the requested permissions from a decoded (textual) AndroidManifest.
///
/// Every `uses-permission` element (and `uses-permission-sdk-23` unless
/// disabled) contributes its `android:name` attribute, wherever it sits in
/// the tree. Elements without the attribute are skipped with a warning.
/// Throws ParseError with line and column on malformed XML.
inline ParsedManifest parse_manifest(std::string_view xml_text,
                                     const ManifestOptions& options = {},
                                     const std::string& source = {}) {
  namespace rx = boost::property_tree::detail::rapidxml;

  std::vector<char> buffer(xml_text.begin(), xml_text.end());
  buffer.push_back('\0');
  rx::xml_document<char> doc;
  try {
    doc.parse<rx::parse_validate_closing_tags>(buffer.data());
  } catch (const rx::parse_error& e) {
    const auto offset = static_cast<std::size_t>(e.where<char>() - buffer.data());
    const auto [line, column] = detail::line_column(xml_text, offset);
    throw ParseError(source, line, column, std::string("malformed XML: ") + e.what());
  }

  ParsedManifest out;
  std::unordered_set<std::string> seen;
  std::size_t element_count = 0;

  auto visit = [&](auto&& self, const rx::xml_node<char>* node) -> void {
    for (auto* child = node->first_node(); child != nullptr; child = child->next_sibling()) {
      if (child->type() != rx::node_element) continue;
      ++element_count;
      const std::string_view tag(child->name(), child->name_size());
      if (tag == "uses-permission" || (options.include_sdk23 && tag == "uses-permission-sdk-23")) {
        const auto* attr = child->first_attribute("android:name");
        if (attr == nullptr) {
          out.warnings.push_back("<" + std::string(tag) + "> #" + std::to_string(element_count) +
                                 " has no android:name attribute; skipped");
        } else {
          std::string name(detail::trim(std::string_view(attr->value(), attr->value_size())));
          if (!is_valid_permission_name(name)) {
            out.warnings.push_back("invalid permission name '" + name + "'; skipped");
          } else if (seen.insert(name).second) {
            out.permissions.push_back(std::move(name));
          }
        }
      }
      self(self, child);
    }
  };
  visit(visit, &doc);
  return out;
}

/// Reads a plain permission list: one name per line, `#` starts a comment.
/// Duplicates are dropped, keeping the first occurrence.
inline std::vector<std::string> parse_permission_list(std::string_view text,
                                                      const std::string& source = {}) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (!line.empty()) {
      if (!is_valid_permission_name(line)) {
        throw ParseError(source, line_no, 0, "permission name contains whitespace");
      }
      if (seen.emplace(line).second) out.emplace_back(line);
    }
    if (end == text.size()) break;
    pos = end + 1;
  }
  return out;
}

/// Keeps exactly the `android.permission.*` names, preserving order.
inline std::vector<std::string> filter_system_permissions(std::span<const std::string> names) {
  std::vector<std::string> out;
  for (const auto& n : names) {
    if (is_system_permission(n)) out.push_back(n);
  }
  return out;
}

/// Ordered mapping of permission names to feature indices.
class PermissionVocabulary {
 public:
  PermissionVocabulary() = default;

  /// Names are taken in the given order; duplicates or invalid names throw.
  explicit PermissionVocabulary(std::vector<std::string> names) : names_(std::move(names)) {
    index_.reserve(names_.size());
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (!is_valid_permission_name(names_[i])) {
        throw Error("invalid permission name in vocabulary: '" + names_[i] + "'");
      }
      if (!index_.emplace(names_[i], i).second) {
        throw Error("duplicate permission in vocabulary: " + names_[i]);
      }
    }
  }

  std::size_t size() const noexcept { return names_.size(); }
  bool empty() const noexcept { return names_.empty(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::string& name(std::size_t i) const { return names_.at(i); }

  std::optional<std::size_t> find(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Stable 16-hex-digit hash of the ordered names.
  std::string fingerprint() const {
    std::uint64_t h = fnv1a("malkit-vocab");
    for (const auto& n : names_) {
      h = fnv1a(n, h);
      h = fnv1a("\n", h);
    }
    return hex64(h);
  }

  friend bool operator==(const PermissionVocabulary& a, const PermissionVocabulary& b) {
    return a.names_ == b.names_;
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Binary permission vector p in {0,1}^P. One byte per feature keeps the
/// training and distance loops branch-free and vectorisable.
class PermissionVector {
 public:
  PermissionVector() = default;
  explicit PermissionVector(std::size_t size) : bits_(size, 0) {}
  explicit PermissionVector(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
    for (auto& b : bits_) {
      if (b > 1) throw Error("permission vector entries must be 0 or 1");
    }
  }

  std::size_t size() const noexcept { return bits_.size(); }
  bool test(std::size_t f) const noexcept { return bits_[f] != 0; }
  void set(std::size_t f, bool on = true) { bits_.at(f) = on ? 1 : 0; }
  std::size_t count() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }
  std::span<const std::uint8_t> bits() const noexcept { return bits_; }

  friend bool operator==(const PermissionVector&, const PermissionVector&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

/// Vocabulary over the union of all names, sorted lexicographically.
inline PermissionVocabulary build_vocabulary(std::span<const std::vector<std::string>> permission_sets) {
  std::vector<std::string> names;
  for (const auto& set : permission_sets) names.insert(names.end(), set.begin(), set.end());
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  return PermissionVocabulary(std::move(names));
}

struct EncodeResult {
  PermissionVector vector;
  std::size_t ignored = 0;  // names absent from the vocabulary
};

/// One-hot encodes `names`; names unknown to the vocabulary are counted, not fatal.
inline EncodeResult encode(std::span<const std::string> names, const PermissionVocabulary& vocab) {
  EncodeResult out{PermissionVector(vocab.size()), 0};
  for (const auto& n : names) {
    if (const auto idx = vocab.find(n)) {
      out.vector.set(*idx);
    } else {
      ++out.ignored;
    }
  }
  return out;
}

/// Names of the set bits, in vocabulary order.
inline std::vector<std::string> decode(const PermissionVector& v, const PermissionVocabulary& vocab) {
  if (v.size() != vocab.size()) throw Error("vector length does not match vocabulary");
  std::vector<std::string> out;
  for (std::size_t f = 0; f < v.size(); ++f) {
    if (v.test(f)) out.push_back(vocab.name(f));
  }
  return out;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Vocabulary file: one permission per line; file order is index order.
inline PermissionVocabulary read_vocabulary_file(const std::string& path) {
  const std::string text = read_text_file(path);
  std::vector<std::string> names;
  std::size_t line_no = 0;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const auto name = detail::trim(line);
    if (name.empty()) continue;
    if (!is_valid_permission_name(name)) throw ParseError(path, line_no, 0, "invalid permission name");
    names.emplace_back(name);
  }
  try {
    return PermissionVocabulary(std::move(names));
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

inline void write_vocabulary_file(const PermissionVocabulary& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write file: " + path);
  for (const auto& n : vocab.names()) out << n << '\n';
}

}  // namespace malkit
