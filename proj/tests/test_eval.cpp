#include <catch2/catch.hpp>

#include <algorithm>
#include <cmath>

#include "kgc/ranking.hpp"
#include "kgc/synthetic.hpp"

using namespace kgc;

namespace {

// Brute-force oracle: enumerate survivors, sort by score, locate the true
// answer with mean-rank tie handling.
double oracle_rank(const std::vector<double>& scores, std::size_t true_id,
                   const std::vector<char>& filtered) {
  struct Cand {
    double score;
    std::size_t id;
  };
  std::vector<Cand> pool;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (c == true_id || !filtered[c]) pool.push_back({scores[c], c});
  }
  std::sort(pool.begin(), pool.end(), [](const Cand& a, const Cand& b) {
    return a.score > b.score;
  });
  double s_true = scores[true_id];
  std::size_t first = 0;
  while (pool[first].score > s_true) ++first;
  std::size_t last = first;
  while (last + 1 < pool.size() && pool[last + 1].score == s_true) ++last;
  // positions are 1-based; mean over the tie block
  return (static_cast<double>(first + 1) + static_cast<double>(last + 1)) / 2.0;
}

EvalModel random_model(const TripleStore& store, std::uint64_t seed) {
  EvalModel m;
  m.config.decoder = Decoder::bilinear;
  m.config.variant = Variant::base;
  m.entity_states = xavier_normal_init(store.num_entities(), 6, mix_seed(seed, "states"));
  m.decoder_rel = xavier_normal_init(store.num_relations(), 6, mix_seed(seed, "rel"));
  return m;
}

}  // namespace

TEST_CASE("true answer scoring strictly highest ranks first") {
  std::vector<double> scores{0.1, 0.9, 0.3, 0.2};
  std::vector<char> filtered(4, 0);
  REQUIRE(rank_from_scores(scores, 1, filtered) == 1.0);
}

TEST_CASE("hand-set scores with filtered candidates match the oracle") {
  // 10 candidates, two filtered, scores with deliberate ties
  std::vector<double> scores{0.5, 0.7, 0.5, 0.9, 0.1, 0.7, 0.5, 0.3, 0.9, 0.0};
  std::vector<char> filtered(10, 0);
  filtered[3] = 1;  // drops one 0.9
  filtered[5] = 1;  // drops one 0.7
  for (std::size_t true_id = 0; true_id < 10; ++true_id) {
    if (filtered[true_id]) continue;
    REQUIRE(rank_from_scores(scores, true_id, filtered) ==
            Approx(oracle_rank(scores, true_id, filtered)));
  }
}

TEST_CASE("all-tied candidates get the mean rank") {
  std::vector<double> scores(7, 0.42);
  std::vector<char> filtered(7, 0);
  REQUIRE(rank_from_scores(scores, 2, filtered) == Approx(1.0 + 6.0 / 2.0));
}

TEST_CASE("metric arithmetic on fixed ranks") {
  RankingReport r = aggregate_ranks({1.0, 2.0, 4.0}, {});
  REQUIRE(r.mrr == Approx((1.0 + 0.5 + 0.25) / 3.0).margin(1e-6));
  REQUIRE(r.mrr == Approx(0.583333).margin(1e-6));
  REQUIRE(r.hits1 == Approx(1.0 / 3.0));
  REQUIRE(r.hits3 == Approx(2.0 / 3.0));
  REQUIRE(r.hits10 == Approx(1.0));
  REQUIRE(r.n_queries == 3);

  RankingReport perfect = aggregate_ranks({1.0, 1.0}, {1.0});
  REQUIRE(perfect.mrr == 1.0);
  REQUIRE(perfect.hits1 == 1.0);
  REQUIRE(perfect.hits10 == 1.0);
}

TEST_CASE("rank_query agrees with the enumerate-filter-sort oracle") {
  // 12-entity KG; 20 random score assignments from a coarse grid to force ties
  std::vector<Triple> train, valid, test;
  Rng gen(12);
  for (int i = 0; i < 25; ++i) {
    Triple t{gen.below(12), gen.below(2), gen.below(12)};
    if (std::find(train.begin(), train.end(), t) == train.end()) train.push_back(t);
  }
  test.push_back(train.back());
  train.pop_back();
  valid.push_back(train.back());
  train.pop_back();
  TripleStore store = TripleStore::from_triples(12, 2, train, valid, test);

  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    // discrete grid scores, assigned through a rank-one bilinear model is
    // not expressive enough for ties, so score through a lookup model:
    // entity_states row e = one-hot(e), decoder_rel = random grid matrix.
    EvalModel m;
    m.config.decoder = Decoder::bilinear;
    m.config.variant = Variant::base;
    m.entity_states = Tensor::eye(12);
    m.decoder_rel = Tensor({2, 12});
    for (double& v : m.decoder_rel.data) v = 0.25 * static_cast<double>(rng.below(4));

    // with one-hot states, score(h,r,t) = rel[r][t] if h==t ... verify the
    // oracle against the model's own per-candidate scores instead
    for (const auto* split : {&store.valid, &store.test}) {
      for (const Triple& q : *split) {
        std::vector<double> scores;
        m.score_tails(q.head, q.relation, scores);
        std::vector<char> filtered(12, 0);
        for (std::size_t c = 0; c < 12; ++c) {
          if (c != q.tail && store.is_known_true({q.head, q.relation, c})) filtered[c] = 1;
        }
        REQUIRE(rank_query_tail(m, q, store) ==
                Approx(oracle_rank(scores, q.tail, filtered)));

        std::vector<double> hscores;
        m.score_heads(q.relation, q.tail, hscores);
        std::vector<char> hfiltered(12, 0);
        for (std::size_t c = 0; c < 12; ++c) {
          if (c != q.head && store.is_known_true({c, q.relation, q.tail})) hfiltered[c] = 1;
        }
        REQUIRE(rank_query_head(m, q, store) ==
                Approx(oracle_rank(hscores, q.head, hfiltered)));
      }
    }
  }
}

TEST_CASE("filtering never removes the true answer") {
  TripleStore store = make_rule_kg(3);
  EvalModel m = random_model(store, 8);
  // heavily saturated queries still rank the true answer somewhere
  for (std::size_t i = 0; i < std::min<std::size_t>(20, store.test.size()); ++i) {
    double r = rank_query_tail(m, store.test[i], store);
    REQUIRE(r >= 1.0);
    REQUIRE(r <= static_cast<double>(store.num_entities()));
  }
}

TEST_CASE("hits are monotone and evaluate matches its own rank lists") {
  TripleStore store = make_rule_kg(5);
  EvalModel m = random_model(store, 9);
  std::vector<Triple> sample(store.test.begin(), store.test.begin() + 30);
  RankingReport r = evaluate(m, store, sample);
  REQUIRE(r.hits1 <= r.hits3);
  REQUIRE(r.hits3 <= r.hits10);
  REQUIRE(r.n_queries == 60);
  RankingReport again = aggregate_ranks(r.tail_ranks, r.head_ranks);
  REQUIRE(again.mrr == r.mrr);

  REQUIRE_THROWS_AS(evaluate(m, store, {}), Error);
}

TEST_CASE("threaded evaluation matches single-threaded") {
  TripleStore store = make_rule_kg(7);
  EvalModel m = random_model(store, 10);
  std::vector<Triple> sample(store.test.begin(), store.test.begin() + 40);
  RankingReport one = evaluate(m, store, sample, 1);
  RankingReport four = evaluate(m, store, sample, 4);
  REQUIRE(one.mrr == four.mrr);
  REQUIRE(one.tail_ranks == four.tail_ranks);
  REQUIRE(one.head_ranks == four.head_ranks);
}
