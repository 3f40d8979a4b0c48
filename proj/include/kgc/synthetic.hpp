#pragma once

#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "kgc/tensor.hpp"
#include "kgc/triples.hpp"

namespace kgc {

// Deterministic synthetic graphs used by tests, diagnostics and the
// acceptance suite.

// Rule-generated KG: 200 entities in 40 groups of 5. Two base relations act
// as random permutations on groups over random source-group subsets; three
// more are their compositions (r2 = r1 o r0, r3 = r0 o r0, r4 = r1 o r1)
// restricted to where the compositions are derivable. Every triple
// consistent with a rule is present, so filtered ranking has no false
// negatives and the generating rules are recoverable: an ideal model
// reaches MRR 1. Roughly 2,000 triples; split 80/10/10.
inline TripleStore make_rule_kg(std::uint64_t seed) {
  constexpr std::size_t kGroups = 40;
  constexpr std::size_t kGroupSize = 5;
  constexpr std::size_t kEntities = kGroups * kGroupSize;
  constexpr std::size_t kSources = 24;

  Rng rng(mix_seed(seed, "rule_kg"));
  auto random_permutation = [&]() {
    std::vector<std::size_t> p(kGroups);
    std::iota(p.begin(), p.end(), std::size_t{0});
    rng.shuffle(p);
    return p;
  };
  auto random_sources = [&]() {
    std::vector<std::size_t> ids(kGroups);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    rng.shuffle(ids);
    std::vector<char> in(kGroups, 0);
    for (std::size_t i = 0; i < kSources; ++i) in[ids[i]] = 1;
    return in;
  };

  auto pi0 = random_permutation();
  auto pi1 = random_permutation();
  auto s0 = random_sources();
  auto s1 = random_sources();

  struct Rule {
    std::vector<std::size_t> pi;
    std::vector<char> sources;
  };
  std::vector<Rule> rules;
  rules.push_back({pi0, s0});
  rules.push_back({pi1, s1});
  auto compose = [&](const Rule& first, const Rule& second) {
    // second o first: g -> second.pi[first.pi[g]], derivable where the
    // intermediate group is a source of the second rule.
    Rule r;
    r.pi.resize(kGroups);
    r.sources.assign(kGroups, 0);
    for (std::size_t g = 0; g < kGroups; ++g) {
      r.pi[g] = second.pi[first.pi[g]];
      r.sources[g] = first.sources[g] && second.sources[first.pi[g]];
    }
    return r;
  };
  rules.push_back(compose(rules[0], rules[1]));  // r2 = r1 o r0
  rules.push_back(compose(rules[0], rules[0]));  // r3 = r0 o r0
  rules.push_back(compose(rules[1], rules[1]));  // r4 = r1 o r1

  std::vector<Triple> all;
  for (std::size_t rel = 0; rel < rules.size(); ++rel) {
    const Rule& rule = rules[rel];
    for (std::size_t g = 0; g < kGroups; ++g) {
      if (!rule.sources[g]) continue;
      std::size_t tg = rule.pi[g];
      for (std::size_t hi = 0; hi < kGroupSize; ++hi) {
        for (std::size_t ti = 0; ti < kGroupSize; ++ti) {
          all.push_back({g * kGroupSize + hi, rel, tg * kGroupSize + ti});
        }
      }
    }
  }
  rng.shuffle(all);
  std::size_t n_valid = all.size() / 10;
  std::size_t n_test = all.size() / 10;
  std::size_t n_train = all.size() - n_valid - n_test;
  std::vector<Triple> train(all.begin(), all.begin() + n_train);
  std::vector<Triple> valid(all.begin() + n_train, all.begin() + n_train + n_valid);
  std::vector<Triple> test(all.begin() + n_train + n_valid, all.end());
  return TripleStore::from_triples(kEntities, rules.size(), std::move(train), std::move(valid),
                                   std::move(test));
}

// Two dense communities joined by a handful of bridge edges; single
// relation, everything in the train split. Used by the over-smoothing
// diagnostic, which only runs forward passes.
inline TripleStore make_two_community_store(std::size_t per_community, double p_intra,
                                            std::size_t bridges, std::uint64_t seed) {
  Rng rng(mix_seed(seed, "two_community"));
  std::vector<Triple> train;
  std::size_t n = 2 * per_community;
  for (std::size_t block = 0; block < 2; ++block) {
    std::size_t off = block * per_community;
    for (std::size_t i = 0; i < per_community; ++i) {
      for (std::size_t j = i + 1; j < per_community; ++j) {
        if (rng.uniform01() < p_intra) {
          bool flip = rng.below(2) == 1;
          train.push_back({off + (flip ? j : i), 0, off + (flip ? i : j)});
        }
      }
    }
  }
  for (std::size_t b = 0; b < bridges; ++b) {
    std::size_t u = rng.below(per_community);
    std::size_t v = per_community + rng.below(per_community);
    train.push_back({u, 0, v});
  }
  // Dedupe bridge collisions against intra edges.
  std::vector<Triple> unique;
  TripleSet seen;
  for (const Triple& t : train) {
    if (seen.insert(t).second) unique.push_back(t);
  }
  return TripleStore::from_triples(n, 1, std::move(unique), {}, {});
}

// Writes the three splits in the standard head<TAB>relation<TAB>tail text
// format, using the store's dictionary names.
inline void write_split_files(const TripleStore& store, const std::string& dir) {
  std::filesystem::create_directories(dir);
  auto dump = [&](const char* file, const std::vector<Triple>& split) {
    std::ofstream out(dir + "/" + file);
    if (!out) throw IoError(std::string("cannot write ") + dir + "/" + file);
    for (const Triple& t : split) {
      out << store.entity_names[t.head] << '\t' << store.relation_names[t.relation] << '\t'
          << store.entity_names[t.tail] << '\n';
    }
  };
  dump("train.txt", store.train);
  dump("valid.txt", store.valid);
  dump("test.txt", store.test);
}

}  // namespace kgc
