#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kgc/error.hpp"
#include "kgc/tensor.hpp"

namespace kgc {

struct Triple {
  std::size_t head = 0;
  std::size_t relation = 0;
  std::size_t tail = 0;

  bool operator==(const Triple& o) const {
    return head == o.head && relation == o.relation && tail == o.tail;
  }
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const {
    std::uint64_t h = t.head * 0x9e3779b97f4a7c15ull;
    h ^= t.relation + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    h ^= t.tail + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

using TripleSet = std::unordered_set<Triple, TripleHash>;

// Entity/relation dictionaries plus the three splits and the known-true
// filter set (union of all splits). Immutable once built.
struct TripleStore {
  std::vector<std::string> entity_names;
  std::vector<std::string> relation_names;
  std::vector<Triple> train;
  std::vector<Triple> valid;
  std::vector<Triple> test;
  TripleSet known_true;

  std::size_t num_entities() const { return entity_names.size(); }
  std::size_t num_relations() const { return relation_names.size(); }

  bool is_known_true(const Triple& t) const { return known_true.count(t) > 0; }

  // Builds a store from in-memory splits. Entity/relation counts may exceed
  // the ids referenced by the triples (entities that appear in no triple
  // still take part in ranking).
  static TripleStore from_triples(std::size_t n_entities, std::size_t n_relations,
                                  std::vector<Triple> train, std::vector<Triple> valid,
                                  std::vector<Triple> test) {
    TripleStore s;
    s.entity_names.reserve(n_entities);
    for (std::size_t i = 0; i < n_entities; ++i) s.entity_names.push_back("e" + std::to_string(i));
    for (std::size_t i = 0; i < n_relations; ++i) {
      s.relation_names.push_back("r" + std::to_string(i));
    }
    s.train = std::move(train);
    s.valid = std::move(valid);
    s.test = std::move(test);
    for (const auto* split : {&s.train, &s.valid, &s.test}) {
      for (const Triple& t : *split) {
        if (t.head >= n_entities || t.tail >= n_entities || t.relation >= n_relations) {
          throw Error("from_triples: triple references id outside the dictionaries");
        }
        s.known_true.insert(t);
      }
    }
    return s;
  }
};

namespace detail {

struct DictBuilder {
  std::unordered_map<std::string, std::size_t> ids;
  std::vector<std::string> names;

  std::size_t intern(const std::string& name) {
    auto it = ids.find(name);
    if (it != ids.end()) return it->second;
    std::size_t id = names.size();
    ids.emplace(name, id);
    names.push_back(name);
    return id;
  }
};

inline void read_split(const std::string& path, DictBuilder& entities, DictBuilder& relations,
                       std::vector<Triple>& out) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open triple file: " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t tab1 = line.find('\t');
    std::size_t tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
    std::size_t tab3 = tab2 == std::string::npos ? std::string::npos : line.find('\t', tab2 + 1);
    if (tab1 == std::string::npos || tab2 == std::string::npos || tab3 != std::string::npos) {
      throw IoError("malformed triple line (" + path + ":" + std::to_string(lineno) +
                    "): expected head<TAB>relation<TAB>tail");
    }
    Triple t;
    t.head = entities.intern(line.substr(0, tab1));
    t.relation = relations.intern(line.substr(tab1 + 1, tab2 - tab1 - 1));
    t.tail = entities.intern(line.substr(tab2 + 1));
    out.push_back(t);
  }
  if (out.empty()) throw IoError("empty triple file: " + path);
}

}  // namespace detail

// Ids are assigned in first-appearance order scanning train, then valid,
// then test, so ingestion is deterministic without external vocab files.
// Splits must be pairwise disjoint as triple sets; repeats within one split
// are tolerated (they count once in the filter set).
inline TripleStore load_triples(const std::string& train_path, const std::string& valid_path,
                                const std::string& test_path) {
  detail::DictBuilder entities;
  detail::DictBuilder relations;
  TripleStore s;
  detail::read_split(train_path, entities, relations, s.train);
  detail::read_split(valid_path, entities, relations, s.valid);
  detail::read_split(test_path, entities, relations, s.test);
  s.entity_names = std::move(entities.names);
  s.relation_names = std::move(relations.names);
  for (const auto* split : {&s.train, &s.valid, &s.test}) {
    TripleSet own;
    for (const Triple& t : *split) {
      if (s.known_true.count(t) && !own.count(t)) {
        throw IoError("splits are not disjoint: (" + s.entity_names[t.head] + ", " +
                      s.relation_names[t.relation] + ", " + s.entity_names[t.tail] +
                      ") appears in more than one split");
      }
      own.insert(t);
    }
    for (const Triple& t : own) s.known_true.insert(t);
  }
  return s;
}

inline void export_dictionaries(const TripleStore& s, const std::string& dir) {
  std::filesystem::create_directories(dir);
  auto dump = [&](const std::string& file, const std::vector<std::string>& names) {
    std::ofstream out(dir + "/" + file);
    if (!out) throw IoError("cannot write dictionary: " + dir + "/" + file);
    for (std::size_t i = 0; i < names.size(); ++i) out << i << '\t' << names[i] << '\n';
  };
  dump("entities.dict", s.entity_names);
  dump("relations.dict", s.relation_names);
}

// ---- adjacency ----

enum class EdgeDir : std::uint8_t { forward, inverse, self };

struct AdjEntry {
  std::size_t neighbor;  // message source
  std::size_t relation;  // id in the extended 2|R|+1 space
  EdgeDir dir;
};

// Per-entity incoming-message lists over the extended relation id space:
// forward r stays r, inverse edges use r + |R|, the shared self-loop uses
// 2|R|. Messages flow toward the node whose list they appear in.
struct AdjacencyIndex {
  std::vector<std::vector<AdjEntry>> neighbors;
  std::size_t num_relations_extended = 0;

  std::size_t self_relation() const { return num_relations_extended - 1; }
};

inline AdjacencyIndex build_adjacency(const TripleStore& store) {
  AdjacencyIndex adj;
  std::size_t r = store.num_relations();
  adj.num_relations_extended = 2 * r + 1;
  adj.neighbors.resize(store.num_entities());
  for (const Triple& t : store.train) {
    adj.neighbors[t.tail].push_back({t.head, t.relation, EdgeDir::forward});
    adj.neighbors[t.head].push_back({t.tail, t.relation + r, EdgeDir::inverse});
  }
  for (std::size_t e = 0; e < store.num_entities(); ++e) {
    adj.neighbors[e].push_back({e, 2 * r, EdgeDir::self});
  }
  return adj;
}

// ---- negative sampling ----

enum class CorruptMode { head, tail, both };

// Uniform corruption of head or tail. With filtering (the default), samples
// are redrawn until the corruption is not a known-true triple; after 100
// failed attempts the last sample is kept (saturated neighborhoods exist in
// dense toy graphs).
inline std::vector<Triple> sample_negatives(const Triple& triple, std::size_t n, CorruptMode mode,
                                            std::uint64_t seed, const TripleStore& store,
                                            bool filtered = true) {
  if (n < 1) throw Error("sample_negatives: n must be >= 1");
  if (store.num_entities() <= 1) {
    throw Error("sample_negatives: need at least 2 entities to corrupt");
  }
  Rng rng(seed);
  std::vector<Triple> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    bool corrupt_head = mode == CorruptMode::head || (mode == CorruptMode::both && rng.below(2) == 0);
    Triple neg = triple;
    for (int attempt = 0; attempt < 100; ++attempt) {
      std::size_t candidate = rng.below(store.num_entities());
      if (corrupt_head) {
        neg.head = candidate;
      } else {
        neg.tail = candidate;
      }
      if (!filtered || !store.is_known_true(neg)) break;
    }
    out.push_back(neg);
  }
  return out;
}

}  // namespace kgc
