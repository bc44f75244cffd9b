#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <map>
#include <set>

#include "dehaze/dataset.hpp"
#include "dehaze/split.hpp"

using namespace dehaze;

namespace {

std::vector<LabeledImage> fake_items(const std::vector<int>& per_class) {
  std::vector<LabeledImage> items;
  for (std::size_t c = 0; c < per_class.size(); ++c)
    for (int i = 0; i < per_class[c]; ++i) {
      char key[64];
      std::snprintf(key, sizeof(key), "c%02zu/i%05d", c, i);
      items.push_back({key, std::string("/nowhere/") + key, static_cast<int>(c)});
    }
  return items;
}

}  // namespace

TEST_CASE("single class splits to the exact fraction") {
  auto items = fake_items({100});
  auto s = build_split(items, 0.2, 1);
  CHECK(s.train.size() == 80);
  CHECK(s.validation.size() == 20);
  CHECK(s.test.empty());
}

TEST_CASE("zero validation fraction leaves validation empty") {
  auto items = fake_items({10, 10});
  auto s = build_split(items, 0.0, 1);
  CHECK(s.validation.empty());
  CHECK(s.train.size() == 20);
}

TEST_CASE("fixed-protocol counts with a given train/test boundary") {
  // 5994 training and 5794 testing items; validation carved from the
  // training pool only, 20% per class.
  auto items = fake_items({2997 + 2897, 2997 + 2897});
  std::set<std::string> fixed_test;
  for (const auto& it : items)
    if (it.key.substr(4) >= "i02997") fixed_test.insert(it.key);
  REQUIRE(fixed_test.size() == 5794);
  auto s = build_split(items, 0.2, 7, 0.0, fixed_test);
  CHECK(s.test.size() == 5794);
  CHECK(s.train.size() + s.validation.size() == 5994);
  CHECK(s.validation.size() == 2 * 599);
  const auto idx = s.index();
  CHECK(idx.size() == s.size());
}

TEST_CASE("per-class carve of 60 training items mirrors the fixed-count protocol") {
  // 60 per class to the training pool, remainder test: expressed through
  // test_fraction = (n-60)/n per class on an equal-sized class.
  auto items = fake_items({100, 100});
  auto s = build_split(items, 0.2, 3, 0.4);
  // per class: 40 test, floor(0.2*60)=12 validation, 48 train
  CHECK(s.test.size() == 80);
  CHECK(s.validation.size() == 24);
  CHECK(s.train.size() == 96);
}

TEST_CASE("split is deterministic in the seed and insensitive to input order") {
  auto items = fake_items({30, 30, 30});
  auto a = build_split(items, 0.25, 11, 0.1);
  std::reverse(items.begin(), items.end());
  auto b = build_split(items, 0.25, 11, 0.1);
  CHECK(a.train == b.train);
  CHECK(a.validation == b.validation);
  CHECK(a.test == b.test);
  auto c = build_split(items, 0.25, 12, 0.1);
  CHECK(a.train != c.train);
}

TEST_CASE("split preserves per-class counts and is disjoint") {
  auto items = fake_items({17, 23, 9});
  auto s = build_split(items, 0.2, 5, 0.25);
  std::map<std::string, int> label_of;
  for (const auto& it : items) label_of[it.key] = it.label;
  std::map<int, std::size_t> counts;
  std::set<std::string> seen;
  for (const auto* part : {&s.train, &s.validation, &s.test})
    for (const auto& k : *part) {
      CHECK(seen.insert(k).second);
      counts[label_of[k]]++;
    }
  CHECK(counts[0] == 17);
  CHECK(counts[1] == 23);
  CHECK(counts[2] == 9);
}

TEST_CASE("empty classes and bad fractions are rejected") {
  CHECK_THROWS_AS(build_split({}, 0.2, 1), DatasetError);
  auto items = fake_items({3});
  CHECK_THROWS_AS(build_split(items, 1.0, 1), InvalidParameterError);
  // every item of one class pinned to test -> zero training items
  auto two = fake_items({3, 3});
  std::set<std::string> fixed_test;
  for (const auto& it : two)
    if (it.label == 1) fixed_test.insert(it.key);
  CHECK_THROWS_AS(build_split(two, 0.2, 1, 0.0, fixed_test), DatasetError);
}

TEST_CASE("pairing enforcement passes when hazy images inherit partitions") {
  auto items = fake_items({8, 8});
  auto s = build_split(items, 0.25, 2, 0.25);
  std::vector<PairedSample> pairs;
  for (const auto& it : items) {
    PairedSample p;
    p.key = it.key;
    p.label = it.label;
    pairs.push_back(p);
  }
  auto validated = enforce_pairing(s, pairs);
  CHECK(validated.size() == items.size());
}

TEST_CASE("a constructed cross-partition pair fails closed") {
  auto items = fake_items({8, 8});
  auto s = build_split(items, 0.25, 2, 0.25);
  std::vector<PairedSample> pairs;
  for (const auto& it : items) {
    PairedSample p;
    p.key = it.key;
    pairs.push_back(p);
  }
  REQUIRE(!s.test.empty());
  std::map<std::string, Partition> assignment{{s.test.front(), Partition::Train}};
  CHECK_THROWS_AS(enforce_pairing(s, pairs, assignment), LeakageError);

  // unknown keys also count as violations
  std::vector<PairedSample> stray = pairs;
  PairedSample ghost;
  ghost.key = "unknown/key";
  stray.push_back(ghost);
  CHECK_THROWS_AS(enforce_pairing(s, stray), LeakageError);
}

TEST_CASE("epoch batches partition the dataset with a short tail") {
  auto batches = epoch_batches(10, 3, 4, 0);
  REQUIRE(batches.size() == 4);
  CHECK(batches[0].size() == 3);
  CHECK(batches[3].size() == 1);
  std::set<std::size_t> seen;
  for (const auto& b : batches)
    for (auto i : b) CHECK(seen.insert(i).second);
  CHECK(seen.size() == 10);
}

TEST_CASE("epoch batches repeat under the same seed and differ across epochs") {
  auto a = epoch_batches(32, 8, 9, 3);
  auto b = epoch_batches(32, 8, 9, 3);
  CHECK(a == b);
  auto c = epoch_batches(32, 8, 9, 4);
  CHECK(a != c);
  CHECK_THROWS_AS(epoch_batches(0, 4, 1, 0), DatasetError);
}

TEST_CASE("tiny dataset generation is reproducible and labeled per folder") {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "dehaze_test_tiny";
  fs::remove_all(root);
  auto items = generate_tiny_dataset((root / "d1").string(), 3, 4, 64, 5);
  CHECK(items.size() == 12);
  auto again = generate_tiny_dataset((root / "d2").string(), 3, 4, 64, 5);
  for (std::size_t i = 0; i < items.size(); ++i) {
    Image a = read_ppm(items[i].path);
    Image b = read_ppm(again[i].path);
    CHECK(a.data == b.data);
    CHECK(image_in_unit_range(a));
  }
  auto loaded = load_labeled_folders((root / "d1").string());
  CHECK(loaded.size() == items.size());
  CHECK(loaded.front().label == 0);
  CHECK(loaded.back().label == 2);
  fs::remove_all(root);
}

TEST_CASE("split files round trip") {
  namespace fs = std::filesystem;
  auto items = fake_items({6, 6});
  auto s = build_split(items, 0.25, 2, 0.25);
  const std::string path = (fs::temp_directory_path() / "dehaze_test_split.json").string();
  save_split(path, s);
  auto back = load_split(path);
  CHECK(back.train == s.train);
  CHECK(back.validation == s.validation);
  CHECK(back.test == s.test);
  fs::remove(path);
}
