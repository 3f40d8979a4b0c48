#pragma once

#include <thread>
#include <vector>

#include "kgc/scoring.hpp"
#include "kgc/triples.hpp"

namespace kgc {

// Filtered entity-ranking evaluation. For each test triple both directions
// are ranked: candidates completing a known-true triple (other than the
// query's own answer) are removed, and ties are resolved with the mean rank
// of the tie group, so ranks may be fractional.

struct RankingReport {
  std::vector<double> tail_ranks;
  std::vector<double> head_ranks;
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
  std::size_t n_queries = 0;
};

// rank = 1 + #{survivors scoring strictly higher} + half the ties.
inline double rank_from_scores(const std::vector<double>& scores, std::size_t true_id,
                               const std::vector<char>& filtered) {
  double s_true = scores[true_id];
  std::size_t above = 0, ties = 0;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (c == true_id || filtered[c]) continue;
    if (scores[c] > s_true) {
      ++above;
    } else if (scores[c] == s_true) {
      ++ties;
    }
  }
  return 1.0 + static_cast<double>(above) + 0.5 * static_cast<double>(ties);
}

inline double rank_query_tail(const EvalModel& model, const Triple& q, const TripleStore& store) {
  std::vector<double> scores;
  model.score_tails(q.head, q.relation, scores);
  std::vector<char> filtered(store.num_entities(), 0);
  for (std::size_t c = 0; c < filtered.size(); ++c) {
    if (c != q.tail && store.is_known_true({q.head, q.relation, c})) filtered[c] = 1;
  }
  return rank_from_scores(scores, q.tail, filtered);
}

inline double rank_query_head(const EvalModel& model, const Triple& q, const TripleStore& store) {
  std::vector<double> scores;
  model.score_heads(q.relation, q.tail, scores);
  std::vector<char> filtered(store.num_entities(), 0);
  for (std::size_t c = 0; c < filtered.size(); ++c) {
    if (c != q.head && store.is_known_true({c, q.relation, q.tail})) filtered[c] = 1;
  }
  return rank_from_scores(scores, q.head, filtered);
}

// Metric arithmetic over already-computed ranks.
inline RankingReport aggregate_ranks(std::vector<double> tail_ranks,
                                     std::vector<double> head_ranks) {
  RankingReport r;
  r.tail_ranks = std::move(tail_ranks);
  r.head_ranks = std::move(head_ranks);
  double rr = 0.0, h1 = 0.0, h3 = 0.0, h10 = 0.0;
  std::size_t n = 0;
  for (const auto* ranks : {&r.tail_ranks, &r.head_ranks}) {
    for (double rank : *ranks) {
      rr += 1.0 / rank;
      if (rank <= 1.0) ++h1;
      if (rank <= 3.0) ++h3;
      if (rank <= 10.0) ++h10;
      ++n;
    }
  }
  if (n == 0) throw Error("aggregate_ranks: no ranks");
  r.n_queries = n;
  r.mrr = rr / static_cast<double>(n);
  r.hits1 = h1 / static_cast<double>(n);
  r.hits3 = h3 / static_cast<double>(n);
  r.hits10 = h10 / static_cast<double>(n);
  return r;
}

// Ranks both directions of every triple in the split. Queries are
// independent; with threads > 1 they are scored in parallel chunks into
// disjoint slots, so the result does not depend on the thread count.
inline RankingReport evaluate(const EvalModel& model, const TripleStore& store,
                              const std::vector<Triple>& split, std::size_t threads = 1) {
  if (split.empty()) throw Error("evaluate: empty split");
  std::vector<double> tail_ranks(split.size());
  std::vector<double> head_ranks(split.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      tail_ranks[i] = rank_query_tail(model, split[i], store);
      head_ranks[i] = rank_query_head(model, split[i], store);
    }
  };
  if (threads <= 1 || split.size() < 2 * threads) {
    work(0, split.size());
  } else {
    std::vector<std::thread> pool;
    std::size_t chunk = (split.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      std::size_t begin = t * chunk;
      std::size_t end = std::min(split.size(), begin + chunk);
      if (begin >= end) break;
      pool.emplace_back(work, begin, end);
    }
    for (auto& th : pool) th.join();
  }
  return aggregate_ranks(std::move(tail_ranks), std::move(head_ranks));
}

}  // namespace kgc
