#include <catch2/catch.hpp>

#include <cmath>

#include "kgc/gradcheck.hpp"
#include "kgc/ranking.hpp"
#include "kgc/scoring.hpp"

using namespace kgc;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.normal();
  return t;
}

// Minimal frozen model over explicit states, no APIM.
EvalModel plain_eval_model(Tensor states, Tensor rel, Decoder d) {
  EvalModel m;
  m.config.decoder = d;
  m.config.variant = Variant::base;
  m.entity_states = std::move(states);
  m.decoder_rel = std::move(rel);
  return m;
}

}  // namespace

TEST_CASE("decoder closed forms") {
  REQUIRE(base_score(Tensor::vec({1, 0}), Tensor::vec({0, 1}), Tensor::vec({1, 1}),
                     Decoder::translational) == Approx(0.0));
  REQUIRE(base_score(Tensor::vec({1, 1}), Tensor::vec({1, 1}), Tensor::vec({1, 1}),
                     Decoder::bilinear) == Approx(2.0));
  REQUIRE(base_score(Tensor::vec({1, 0}), Tensor::vec({0.3, 0.7}), Tensor::vec({0, 1}),
                     Decoder::bilinear) == Approx(0.0));
  REQUIRE_THROWS_AS(
      base_score(Tensor::vec({1, 0}), Tensor::vec({1.0}), Tensor::vec({0, 1}), Decoder::bilinear),
      ShapeError);
}

TEST_CASE("graph and plain decoders agree") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    Tensor h = random_tensor({4}, rng), r = random_tensor({4}, rng), t = random_tensor({4}, rng);
    for (Decoder d : {Decoder::translational, Decoder::bilinear}) {
      REQUIRE(base_score(Var(h), Var(r), Var(t), d).value().value() ==
              Approx(base_score(h, r, t, d)).margin(1e-12));
    }
  }
}

TEST_CASE("base loss values") {
  REQUIRE(base_loss({0.0}, {1}) == Approx(std::log(2.0)));
  REQUIRE(base_loss({100.0}, {1}) < 1e-40);
  REQUIRE(base_loss({0.0, 0.0}, {1, 0}) == Approx(std::log(2.0)));
  REQUIRE_THROWS_AS(base_loss(std::vector<double>{}, std::vector<int>{}), Error);
}

TEST_CASE("combined loss arithmetic") {
  REQUIRE(combined_loss(0.37, 5.0, 0.0) == Approx(0.37));
  REQUIRE(combined_loss(0.5, 0.2, 1.0) == Approx(0.7));
  REQUIRE(combined_loss(0.0, 0.2, 0.5) == Approx(0.1));  // apim-only assembly
  REQUIRE_THROWS_AS(combined_loss(0.0, 0.0, -1.0), Error);
}

TEST_CASE("model score without APIM equals the decoder score") {
  Rng rng(4);
  Tensor states = random_tensor({3, 4}, rng);
  Tensor rel = random_tensor({2, 4}, rng);
  EvalModel m = plain_eval_model(states, rel, Decoder::bilinear);
  for (std::size_t h = 0; h < 3; ++h) {
    for (std::size_t t = 0; t < 3; ++t) {
      Tensor hv = m.entity_row(h), tv = m.entity_row(t);
      Tensor rv({4});
      for (std::size_t j = 0; j < 4; ++j) rv.data[j] = rel.at(1, j);
      REQUIRE(m.score({h, 1, t}) == Approx(base_score(hv, rv, tv, Decoder::bilinear)));
    }
  }
}

TEST_CASE("zero-masked signatures contribute nothing") {
  Rng rng(5);
  EvalModel m = plain_eval_model(random_tensor({3, 4}, rng), random_tensor({1, 4}, rng),
                                 Decoder::bilinear);
  EvalModel with_apim = m;
  with_apim.config.variant = Variant::apim;
  with_apim.config.lambda_apim = 1.0;
  with_apim.config.apim.mode_count = 5;
  with_apim.masked_signatures = Tensor::zeros({3, 5});
  with_apim.transitions.assign(1, random_tensor({5, 5}, rng));
  for (std::size_t h = 0; h < 3; ++h) {
    for (std::size_t t = 0; t < 3; ++t) {
      REQUIRE(with_apim.score({h, 0, t}) == m.score({h, 0, t}));
    }
  }
}

TEST_CASE("three-entity bilinear plus APIM fixture, hand expanded") {
  EvalModel m;
  m.config.decoder = Decoder::bilinear;
  m.config.variant = Variant::apim;
  m.config.lambda_apim = 0.5;
  m.config.apim.mode_count = 2;
  m.entity_states = Tensor::matrix(3, 2, {1, 0,
                                          0, 1,
                                          1, 1});
  m.decoder_rel = Tensor::matrix(1, 2, {2, 3});
  m.masked_signatures = Tensor::matrix(3, 2, {0.5, 0.0,
                                              0.0, 0.5,
                                              0.5, 0.5});
  Tensor p = Tensor::matrix(2, 2, {0.1, 0.2, 0.3, 0.4});
  m.transitions = {p};

  // decoder: sum_j h_j r_j t_j = 1*2*1 = 2 for (0, r0, 2)
  // apim: [0.5,0]^T P [0.5,0.5] = 0.5*(0.1*0.5 + 0.2*0.5) = 0.075
  REQUIRE(m.score({0, 0, 2}) == Approx(2.0 + 0.5 * 0.075));
}

TEST_CASE("candidate batch scoring agrees with per-triple scoring") {
  Rng rng(6);
  for (Decoder d : {Decoder::bilinear, Decoder::translational}) {
    EvalModel m;
    m.config.decoder = d;
    m.config.variant = Variant::apim;
    m.config.lambda_apim = 0.7;
    m.config.apim.mode_count = 4;
    m.entity_states = random_tensor({6, 3}, rng);
    m.decoder_rel = random_tensor({2, 3}, rng);
    m.masked_signatures = Tensor({6, 4});
    for (std::size_t e = 0; e < 6; ++e) {
      Tensor sig = topk_mask_signature(
          signature(m.entity_row(e), random_tensor({4, 3}, rng)), 2);
      for (std::size_t j = 0; j < 4; ++j) m.masked_signatures.at(e, j) = sig.data[j];
    }
    m.transitions = {transition(random_tensor({4, 4}, rng)),
                     transition(random_tensor({4, 4}, rng))};

    std::vector<double> tails, heads;
    m.score_tails(2, 1, tails);
    m.score_heads(1, 3, heads);
    for (std::size_t c = 0; c < 6; ++c) {
      REQUIRE(tails[c] == Approx(m.score({2, 1, c})).margin(1e-12));
      REQUIRE(heads[c] == Approx(m.score({c, 1, 3})).margin(1e-12));
    }
  }
}

TEST_CASE("ranking is invariant under a constant score shift") {
  Rng rng(7);
  std::vector<double> scores;
  for (int i = 0; i < 10; ++i) scores.push_back(rng.below(5) * 0.5);  // force ties
  std::vector<char> filtered(10, 0);
  filtered[3] = filtered[7] = 1;
  for (std::size_t true_id = 0; true_id < 10; ++true_id) {
    if (filtered[true_id]) continue;
    double base = rank_from_scores(scores, true_id, filtered);
    std::vector<double> shifted = scores;
    for (double& s : shifted) s += 123.25;
    REQUIRE(rank_from_scores(shifted, true_id, filtered) == base);
  }
}

TEST_CASE("with lambda_apim zero the apim variant scores like its base") {
  ModelConfig base_cfg;
  base_cfg.decoder = Decoder::bilinear;
  base_cfg.variant = Variant::base;
  base_cfg.embedding_dim = 6;

  ModelConfig apim_cfg = base_cfg;
  apim_cfg.variant = Variant::apim;
  apim_cfg.lambda_apim = 0.0;
  apim_cfg.apim.mode_count = 8;
  apim_cfg.apim.retained_k = 3;

  Model mb = make_model(base_cfg, 5, 2, 99);
  Model ma = make_model(apim_cfg, 5, 2, 99);
  EvalModel eb = freeze(mb, nullptr);
  EvalModel ea = freeze(ma, nullptr);

  for (std::size_t h = 0; h < 5; ++h) {
    for (std::size_t r = 0; r < 2; ++r) {
      for (std::size_t t = 0; t < 5; ++t) {
        REQUIRE(ea.score({h, r, t}) == eb.score({h, r, t}));  // bitwise
      }
    }
  }
}

TEST_CASE("encoder variants also collapse to base with lambda zero and no distillation") {
  TripleStore s = TripleStore::from_triples(4, 1, {{0, 0, 1}, {1, 0, 2}, {2, 0, 3}}, {}, {});
  AdjacencyIndex adj = build_adjacency(s);

  EncoderConfig enc;
  enc.flavor = EncoderFlavor::compositional;
  enc.layers = 2;
  enc.input_dim = 3;
  enc.hidden_dim = 4;

  ModelConfig base_cfg;
  base_cfg.decoder = Decoder::bilinear;
  base_cfg.variant = Variant::base;
  base_cfg.encoder = enc;

  ModelConfig apim_cfg = base_cfg;
  apim_cfg.variant = Variant::apim;
  apim_cfg.lambda_apim = 0.0;
  apim_cfg.apim.mode_count = 5;
  apim_cfg.apim.retained_k = 2;

  EvalModel eb = freeze(make_model(base_cfg, 4, 1, 31), &adj);
  EvalModel ea = freeze(make_model(apim_cfg, 4, 1, 31), &adj);
  for (std::size_t h = 0; h < 4; ++h) {
    for (std::size_t t = 0; t < 4; ++t) {
      REQUIRE(ea.score({h, 0, t}) == eb.score({h, 0, t}));
    }
  }
}

TEST_CASE("grad_check of the embedding-model joint objective") {
  // decoder BCE plus weighted APIM loss, the pure-embedding composition
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed + 500);
    std::map<std::string, Tensor> inputs{
        {"h", random_tensor({3}, rng)},   {"r", random_tensor({3}, rng)},
        {"t", random_tensor({3}, rng)},   {"w_a", random_tensor({4, 3}, rng)},
        {"theta", random_tensor({4, 4}, rng)}};
    Expr f = [](const VarMap& in) {
      Var score = base_score(in.at("h"), in.at("r"), in.at("t"), Decoder::bilinear);
      Var base = base_loss(concat({score}), Tensor::vec({1.0}));
      Var sig_h = topk_mask_signature(signature(in.at("h"), in.at("w_a")), 2);
      Var sig_t = topk_mask_signature(signature(in.at("t"), in.at("w_a")), 2);
      Var p = transition(in.at("theta"));
      Var apim = apim_loss(concat({apim_score(sig_h, p, sig_t)}), Tensor::vec({1.0}), {p}, 0.01);
      return combined_loss(base, apim, 0.7);
    };
    GradReport rep = grad_check(f, inputs, 1e-5, 1e-4);
    INFO("seed " << seed << " max_rel_error " << rep.max_rel_error);
    REQUIRE(rep.pass);
  }
}

TEST_CASE("grad_check of the translational decoder objective") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed + 900);
    std::map<std::string, Tensor> inputs{{"h", random_tensor({4}, rng)},
                                         {"r", random_tensor({4}, rng)},
                                         {"t", random_tensor({4}, rng)}};
    Expr f = [](const VarMap& in) {
      Var score = base_score(in.at("h"), in.at("r"), in.at("t"), Decoder::translational);
      return base_loss(concat({score}), Tensor::vec({1.0}));
    };
    GradReport rep = grad_check(f, inputs, 1e-5, 1e-4);
    REQUIRE(rep.pass);
  }
}

TEST_CASE("model config validation") {
  ModelConfig c;
  c.decoder = Decoder::none;
  c.variant = Variant::base;
  REQUIRE_THROWS_AS(validate_model_config(c), ConfigError);

  c.variant = Variant::dist;  // distillation without an encoder
  REQUIRE_THROWS_AS(validate_model_config(c), ConfigError);

  c.decoder = Decoder::bilinear;
  c.variant = Variant::apim;
  c.lambda_apim = -0.1;
  REQUIRE_THROWS_AS(validate_model_config(c), ConfigError);
}
