#pragma once

#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "malkit/dataset.hpp"

namespace malkit {

/// Parameters of the synthetic permission corpus used for desk-scale
/// checks: every family owns `exclusive` always-on permissions, and every
/// other bit is switched on independently with probability `noise`.
struct SyntheticSpec {
  std::size_t families = 5;
  std::size_t per_family = 200;
  std::size_t features = 50;
  std::size_t exclusive = 3;
  double noise = 0.1;
  std::uint64_t seed = 42;
};

inline std::string synthetic_permission_name(std::size_t f) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "android.permission.SYNTH_%03zu", f);
  return buf;
}

inline std::string synthetic_family_name(std::size_t c) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "family%02zu", c);
  return buf;
}

inline Dataset make_synthetic(const SyntheticSpec& spec) {
  if (spec.families * spec.exclusive > spec.features) throw Error("synthetic spec: not enough features");
  std::vector<std::string> names;
  for (std::size_t f = 0; f < spec.features; ++f) names.push_back(synthetic_permission_name(f));
  PermissionVocabulary vocab(names);

  std::mt19937_64 rng(spec.seed);
  auto uniform = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  std::vector<LabeledSample> samples;
  samples.reserve(spec.families * spec.per_family);
  for (std::size_t c = 0; c < spec.families; ++c) {
    for (std::size_t i = 0; i < spec.per_family; ++i) {
      PermissionVector v(spec.features);
      for (std::size_t f = 0; f < spec.features; ++f) {
        const bool owned = f >= c * spec.exclusive && f < (c + 1) * spec.exclusive;
        if (owned || uniform() < spec.noise) v.set(f);
      }
      char id[48];
      std::snprintf(id, sizeof id, "%s-%04zu", synthetic_family_name(c).c_str(), i);
      samples.push_back({id, FamilyLabel::known(synthetic_family_name(c)), std::move(v)});
    }
  }
  return Dataset(std::move(vocab), std::move(samples));
}

}  // namespace malkit
