#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dehaze/common.hpp"
#include "dehaze/dataset.hpp"
#include "dehaze/rng.hpp"

namespace dehaze {

enum class Partition { Train, Validation, Test };

inline const char* partition_name(Partition p) {
  switch (p) {
    case Partition::Train: return "train";
    case Partition::Validation: return "validation";
    default: return "test";
  }
}

struct DatasetSplit {
  std::vector<std::string> train, validation, test;

  std::map<std::string, Partition> index() const {
    std::map<std::string, Partition> m;
    for (const auto& k : train) m.emplace(k, Partition::Train);
    for (const auto& k : validation) m.emplace(k, Partition::Validation);
    for (const auto& k : test) m.emplace(k, Partition::Test);
    return m;
  }

  std::size_t size() const { return train.size() + validation.size() + test.size(); }
};

// Stratified split. Keys named in `fixed_test` go straight to the test
// partition (protocols with a published train/test boundary). Per class, the
// remaining keys are sorted, shuffled with a class-derived stream, then
// carved test-first: floor(test_fraction * n) keys to test, followed by
// floor(val_fraction * remaining) to validation, the rest to train. A pure
// function of (key set, seed, fractions, fixed_test) -- insertion order of
// `samples` does not matter.
inline DatasetSplit build_split(const std::vector<LabeledImage>& samples, double val_fraction,
                                std::uint64_t seed, double test_fraction = 0.0,
                                const std::set<std::string>& fixed_test = {}) {
  if (samples.empty()) throw DatasetError("cannot split an empty dataset");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0))
    throw InvalidParameterError("val_fraction must lie in [0,1)");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0))
    throw InvalidParameterError("test_fraction must lie in [0,1)");

  std::map<int, std::vector<std::string>> by_class;
  std::set<std::string> seen;
  DatasetSplit split;
  for (const auto& s : samples) {
    if (!seen.insert(s.key).second) throw DatasetError("duplicate identity key: " + s.key);
    if (fixed_test.count(s.key))
      split.test.push_back(s.key);
    else
      by_class[s.label].push_back(s.key);
  }

  for (auto& [label, keys] : by_class) {
    std::sort(keys.begin(), keys.end());
    auto eng = rng::engine(rng::derive(seed, 0x5B117ULL, static_cast<std::uint64_t>(label)));
    rng::shuffle(keys, eng);
    const std::size_t n = keys.size();
    const std::size_t n_test = static_cast<std::size_t>(test_fraction * static_cast<double>(n));
    const std::size_t n_val =
        static_cast<std::size_t>(val_fraction * static_cast<double>(n - n_test));
    if (n - n_test - n_val == 0)
      throw DatasetError("class " + std::to_string(label) + " has zero training items");
    for (std::size_t i = 0; i < n; ++i) {
      if (i < n_test)
        split.test.push_back(keys[i]);
      else if (i < n_test + n_val)
        split.validation.push_back(keys[i]);
      else
        split.train.push_back(keys[i]);
    }
  }
  // classes present only in the pinned test list never see training
  std::set<int> trainable;
  for (const auto& [label, keys] : by_class) trainable.insert(label);
  for (const auto& s : samples)
    if (!trainable.count(s.label))
      throw DatasetError("class " + std::to_string(s.label) + " has zero training items");
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

// Validates that hazy images inherit their clear source's partition.
// `pre_assignment`, when non-empty, gives the partition some caller already
// put each hazy image in; any disagreement with the clear source is leakage
// and fails closed.
inline DatasetSplit enforce_pairing(
    const DatasetSplit& split, const std::vector<PairedSample>& pairs,
    const std::map<std::string, Partition>& pre_assignment = {}) {
  const auto idx = split.index();
  if (idx.size() != split.size())
    throw LeakageError("split partitions are not disjoint by identity key");
  std::size_t violations = 0;
  std::string first;
  for (const auto& p : pairs) {
    auto it = idx.find(p.key);
    if (it == idx.end()) {
      ++violations;
      if (first.empty()) first = p.key + " (not in any partition)";
      continue;
    }
    auto pre = pre_assignment.find(p.key);
    if (pre != pre_assignment.end() && pre->second != it->second) {
      ++violations;
      if (first.empty())
        first = p.key + " (clear in " + partition_name(it->second) + ", hazy assigned to " +
                partition_name(pre->second) + ")";
    }
  }
  if (violations > 0)
    throw LeakageError("cross-partition pairing: " + std::to_string(violations) +
                       " violation(s), first: " + first);
  return split;
}

// One epoch of batches: a seeded permutation of [0, n), cut into batch_size
// pieces (last one may be short). Same (seed, epoch) -> same order.
inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                           std::uint64_t seed,
                                                           std::uint64_t epoch) {
  if (n == 0) throw DatasetError("empty partition");
  if (batch_size < 1) throw InvalidParameterError("batch_size must be >= 1");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  auto eng = rng::engine(rng::derive(seed, 0xba7c4, epoch));
  rng::shuffle(order, eng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

inline void save_split(const std::string& path, const DatasetSplit& split) {
  nlohmann::json j{{"train", split.train}, {"validation", split.validation},
                   {"test", split.test}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write split file: " + path);
  out << j.dump(2) << "\n";
}

inline DatasetSplit load_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open split file: " + path);
  nlohmann::json j;
  in >> j;
  DatasetSplit s;
  s.train = j.at("train").get<std::vector<std::string>>();
  s.validation = j.at("validation").get<std::vector<std::string>>();
  s.test = j.at("test").get<std::vector<std::string>>();
  return s;
}

}  // namespace dehaze
