#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>

#include "malkit/dataset.hpp"
#include "malkit/synthetic.hpp"
#include "test_support.hpp"

namespace malkit {
namespace {

using testing::TempDir;

/// Dataset with the given family sizes over a 4-feature vocabulary.
Dataset make_families(const std::map<std::string, std::size_t>& sizes, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  PermissionVocabulary vocab({"android.permission.A", "android.permission.B", "android.permission.C",
                              "android.permission.D"});
  std::vector<LabeledSample> samples;
  for (const auto& [family, count] : sizes) {
    for (std::size_t i = 0; i < count; ++i) {
      samples.push_back({family + std::to_string(i), FamilyLabel::known(family), testing::random_vector(rng, 4)});
    }
  }
  return Dataset(vocab, std::move(samples));
}

TEST(LoadDataset, DrebinDirectory) {
  TempDir dir("drebin");
  dir.write("feature_vectors/aaa",
            "permission::android.permission.INTERNET\nactivity::.Main\npermission::android.permission.SEND_SMS\n"
            "permission::com.vendor.CUSTOM\n");
  dir.write("feature_vectors/bbb", "permission::android.permission.INTERNET\nurl::http://x\n");
  dir.write("sha256_family.csv", "sha256,family\naaa,FakeInst\nbbb,Opfake\n");

  const auto d = load_dataset(dir.file("feature_vectors"), DatasetFormat::DrebinDir);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.vocab().names(), (std::vector<std::string>{"android.permission.INTERNET", "android.permission.SEND_SMS"}));
  EXPECT_EQ(d[0].id, "aaa");
  EXPECT_EQ(d[0].label, FamilyLabel::known("FakeInst"));
  EXPECT_EQ(d[0].vector, testing::bits({1, 1}));
  EXPECT_EQ(d[1].vector, testing::bits({1, 0}));
  EXPECT_EQ(d.known_families(), (std::vector<std::string>{"FakeInst", "Opfake"}));
}

TEST(LoadDataset, DrebinUnlabeledSampleIsAnErrorUnlessSkipped) {
  TempDir dir("drebin-unlabeled");
  dir.write("fv/aaa", "permission::android.permission.INTERNET\n");
  dir.write("fv/benign", "permission::android.permission.CAMERA\n");
  dir.write("labels.csv", "id,family\naaa,X\n");
  LoadOptions opts;
  opts.labels_csv = dir.file("labels.csv");
  try {
    load_dataset(dir.file("fv"), DatasetFormat::DrebinDir, opts);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("benign"), std::string::npos);
  }
  opts.skip_unlabeled = true;
  EXPECT_EQ(load_dataset(dir.file("fv"), DatasetFormat::DrebinDir, opts).size(), 1u);
}

TEST(LoadDataset, DrebinMalformedLineNamesFileAndLine) {
  TempDir dir("drebin-bad");
  dir.write("fv/aaa", "permission::android.permission.INTERNET\nnot a feature line\n");
  dir.write("fv/labels.csv", "aaa,X\n");
  try {
    load_dataset(dir.file("fv"), DatasetFormat::DrebinDir);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(e.source().find("aaa"), std::string::npos);
  }
}

TEST(LoadDataset, CsvJoinedPermissions) {
  TempDir dir("csv");
  const auto path = dir.write("d.csv", "label,permissions\nfamA,android.permission.INTERNET\n");
  const auto d = load_dataset(path, DatasetFormat::Csv);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d.vocab().names(), (std::vector<std::string>{"android.permission.INTERNET"}));
  EXPECT_EQ(d[0].vector, testing::bits({1}));
  EXPECT_EQ(d[0].label.name(), "famA");
}

TEST(LoadDataset, CsvOneHotColumnsAndIdColumn) {
  TempDir dir("csv-onehot");
  const auto path = dir.write("d.csv",
                              "id,label,android.permission.B,com.x.CUSTOM,android.permission.A\n"
                              "s1,f1,1,1,0\n"
                              "s2,f2,0,0,1\n");
  const auto d = load_dataset(path, DatasetFormat::Csv);
  EXPECT_EQ(d.vocab().names(), (std::vector<std::string>{"android.permission.A", "android.permission.B"}));
  EXPECT_EQ(d[0].id, "s1");
  EXPECT_EQ(d[0].vector, testing::bits({0, 1}));
  EXPECT_EQ(d[1].vector, testing::bits({1, 0}));
}

TEST(LoadDataset, CsvErrorsCarryLineNumbers) {
  TempDir dir("csv-bad");
  const auto path = dir.write("d.csv", "label,permissions\nfamA,android.permission.INTERNET\nfamB\n");
  try {
    load_dataset(path, DatasetFormat::Csv);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  const auto unlabeled = dir.write("u.csv", "label,permissions\n,android.permission.INTERNET\n");
  EXPECT_THROW(load_dataset(unlabeled, DatasetFormat::Csv), ParseError);
}

TEST(DatasetCache, RoundTripPreservesEverything) {
  TempDir dir("cache");
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    SyntheticSpec spec;
    spec.families = 2 + rng() % 3;
    spec.per_family = 1 + rng() % 7;
    spec.features = spec.families * 3 + rng() % 13;  // exercises non-multiple-of-8 widths
    spec.seed = seed;
    const auto d = make_synthetic(spec);
    save_dataset(d, dir.file("d.json"));
    const auto back = load_dataset(dir.file("d.json"), DatasetFormat::Json);
    ASSERT_EQ(back.size(), d.size());
    EXPECT_EQ(back.vocab(), d.vocab());
    for (std::size_t i = 0; i < d.size(); ++i) {
      EXPECT_EQ(back[i].id, d[i].id);
      EXPECT_EQ(back[i].label, d[i].label);
      EXPECT_EQ(back[i].vector, d[i].vector);
    }
    EXPECT_EQ(back.fingerprint(), d.fingerprint());
  }
}

TEST(DatasetCache, RejectsUnknownSchemaVersion) {
  TempDir dir("cache-version");
  auto j = dataset_to_json(make_families({{"a", 2}}));
  j["schema_version"] = 99;
  write_json_file(j, dir.file("d.json"));
  EXPECT_THROW(load_dataset(dir.file("d.json"), DatasetFormat::Json), Error);
}

TEST(GroupRareFamilies, Examples) {
  const auto d = make_families({{"A", 12}, {"B", 3}});
  const auto g = group_rare_families(d, 10);
  const auto counts = g.family_counts();
  EXPECT_EQ(counts.at("A"), 12u);
  EXPECT_EQ(counts.at("others"), 3u);
  EXPECT_EQ(g.known_families(), (std::vector<std::string>{"A"}));

  const auto same = group_rare_families(d, 1);
  EXPECT_EQ(same.family_counts(), d.family_counts());
  EXPECT_THROW(group_rare_families(d, 0), Error);
}

TEST(GroupRareFamilies, MinimumKnownCountProperty) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::map<std::string, std::size_t> sizes;
    for (int f = 0; f < 6; ++f) sizes["f" + std::to_string(f)] = 1 + rng() % 20;
    const std::size_t m = 1 + rng() % 15;
    const auto g = group_rare_families(make_families(sizes, trial), m);
    for (const auto& family : g.known_families()) EXPECT_GE(g.family_counts().at(family), m);
  }
}

TEST(TopKFamilies, Examples) {
  const auto d = make_families({{"A", 5}, {"B", 4}, {"C", 1}});
  const auto t = top_k_families(d, 2);
  EXPECT_EQ(t.known_families(), (std::vector<std::string>{"A", "B"}));
  EXPECT_EQ(t.family_counts().at("others"), 1u);
  EXPECT_EQ(top_k_families(d, 3).family_counts(), d.family_counts());
  EXPECT_THROW(top_k_families(d, 4), Error);
}

TEST(TopKFamilies, TiesBreakByName) {
  const auto d = make_families({{"zeta", 3}, {"alpha", 3}, {"mid", 3}});
  EXPECT_EQ(top_k_families(d, 2).known_families(), (std::vector<std::string>{"alpha", "mid"}));
}

TEST(StratifiedKFold, TwoFamiliesTwentyEach) {
  const auto d = make_families({{"A", 20}, {"B", 20}});
  const auto plan = stratified_kfold(d, 10, 5);
  ASSERT_EQ(plan.folds.size(), 10u);
  for (const auto& fold : plan.folds) {
    std::map<std::string, int> per_family;
    for (auto i : fold.test) ++per_family[d[i].label.name()];
    EXPECT_EQ(per_family["A"], 2);
    EXPECT_EQ(per_family["B"], 2);
    EXPECT_EQ(fold.train.size(), 36u);
    EXPECT_EQ(fold.calibration, fold.train);
  }
}

TEST(StratifiedKFold, RejectsDegenerateK) {
  const auto d = make_families({{"A", 20}, {"B", 20}});
  EXPECT_THROW(stratified_kfold(d, 1, 0), Error);
  const auto small = make_families({{"A", 20}, {"B", 9}});
  try {
    stratified_kfold(small, 10, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("min-count"), std::string::npos);
  }
}

TEST(StratifiedKFold, DeterministicPerSeed) {
  const auto d = make_families({{"A", 23}, {"B", 31}, {"C", 10}});
  const auto a = stratified_kfold(d, 10, 11);
  const auto b = stratified_kfold(d, 10, 11);
  const auto c = stratified_kfold(d, 10, 12);
  bool differs = false;
  for (std::size_t j = 0; j < a.folds.size(); ++j) {
    EXPECT_EQ(a.folds[j].test, b.folds[j].test);
    differs |= a.folds[j].test != c.folds[j].test;
  }
  EXPECT_TRUE(differs);
}

TEST(StratifiedKFold, PartitionAndBalanceProperties) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t k = 2 + rng() % 9;
    std::map<std::string, std::size_t> sizes;
    for (int f = 0; f < 4; ++f) sizes["f" + std::to_string(f)] = k + rng() % 40;
    sizes["others"] = rng() % 7;
    const auto d = make_families(sizes, trial);
    const auto plan = stratified_kfold(d, k, rng());
    const auto others = d.indices_of("others");
    const std::set<std::size_t> others_set(others.begin(), others.end());

    std::multiset<std::size_t> seen;
    std::map<std::string, std::vector<std::size_t>> per_family_counts;
    for (const auto& fold : plan.folds) {
      std::set<std::size_t> test(fold.test.begin(), fold.test.end());
      for (auto i : fold.train) {
        EXPECT_FALSE(test.count(i));
        EXPECT_NE(d[i].label.name(), "others");
      }
      for (auto i : others) EXPECT_TRUE(test.count(i));
      std::map<std::string, std::size_t> counts;
      for (auto i : fold.test) {
        if (others_set.count(i)) continue;
        seen.insert(i);
        ++counts[d[i].label.name()];
      }
      EXPECT_EQ(fold.train.size() + (fold.test.size() - others.size()), d.size() - others.size());
      for (const auto& family : d.known_families()) per_family_counts[family].push_back(counts[family]);
    }
    EXPECT_EQ(seen.size(), d.size() - others.size());
    EXPECT_EQ(std::set<std::size_t>(seen.begin(), seen.end()).size(), seen.size());
    for (const auto& [family, counts] : per_family_counts) {
      const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
      EXPECT_LE(*hi - *lo, 1u) << family;
    }
  }
}

TEST(LeaveOneClassOut, IterationsExcludeHeldOutFamily) {
  const auto d = make_families({{"A", 10}, {"B", 10}, {"C", 10}, {"others", 4}});
  const auto plan = leave_one_class_out(d, 10, 1);
  ASSERT_EQ(plan.folds.size(), 30u);
  std::set<std::string> held;
  for (const auto& fold : plan.folds) {
    ASSERT_TRUE(fold.held_out.has_value());
    held.insert(*fold.held_out);
    std::set<std::string> train_families;
    for (auto i : fold.train) train_families.insert(d[i].label.name());
    EXPECT_EQ(train_families.size(), 2u);
    EXPECT_FALSE(train_families.count(*fold.held_out));
    EXPECT_FALSE(train_families.count("others"));
    std::size_t novel = 0;
    for (auto i : fold.test) {
      EXPECT_NE(d[i].label.name(), "others");
      novel += test_truth(d, fold, i).is_novel();
    }
    EXPECT_EQ(novel, 10u);
  }
  EXPECT_EQ(held, (std::set<std::string>{"A", "B", "C"}));
}

TEST(LeaveOneClassOut, NeedsTwoFamilies) {
  EXPECT_THROW(leave_one_class_out(make_families({{"A", 20}}), 10, 0), Error);
}

TEST(HoldOutCalibration, SplitsTrainingFoldWithoutOverlap) {
  const auto d = make_families({{"A", 40}, {"B", 40}});
  const auto plan = hold_out_calibration(d, stratified_kfold(d, 5, 3), 0.25, 3);
  for (const auto& fold : plan.folds) {
    EXPECT_TRUE(fold.external_calibration);
    std::set<std::size_t> train(fold.train.begin(), fold.train.end());
    for (auto i : fold.calibration) EXPECT_FALSE(train.count(i));
    EXPECT_EQ(fold.train.size() + fold.calibration.size(), 64u);
    EXPECT_EQ(fold.calibration.size(), 16u);
  }
}

}  // namespace
}  // namespace malkit
