#include <catch2/catch.hpp>

#include <cmath>

#include "kgc/apim.hpp"
#include "kgc/gradcheck.hpp"

using namespace kgc;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.normal();
  return t;
}

// Independent bilinear-form oracle for the expectation score.
double bilinear_oracle(const Tensor& h, const Tensor& p, const Tensor& t) {
  double acc = 0.0;
  for (std::size_t i = 0; i < h.numel(); ++i) {
    for (std::size_t j = 0; j < t.numel(); ++j) acc += h.data[i] * p.at(i, j) * t.data[j];
  }
  return acc;
}

}  // namespace

TEST_CASE("signature of zero projector is all one-half") {
  Tensor w_a = Tensor::zeros({4, 3});
  Tensor a = signature(Tensor::vec({1.0, -2.0, 0.5}), w_a);
  for (double v : a.data) REQUIRE(v == Approx(0.5));
}

TEST_CASE("signature closed form") {
  Tensor w_a = Tensor::matrix(1, 2, {1.0, 0.0});
  Tensor a = signature(Tensor::vec({std::log(3.0), 42.0}), w_a);
  REQUIRE(a.data[0] == Approx(0.75));
}

TEST_CASE("signatures stay strictly inside (0,1)") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    Tensor w_a = random_tensor({6, 4}, rng);
    Tensor a = signature(random_tensor({4}, rng), w_a);
    for (double v : a.data) {
      REQUIRE(v > 0.0);
      REQUIRE(v < 1.0);
    }
  }
}

TEST_CASE("top-k signature masking") {
  Tensor a = Tensor::vec({0.9, 0.1, 0.5, 0.7});
  REQUIRE(topk_mask_signature(a, 2).data == std::vector<double>{0.9, 0.0, 0.0, 0.7});
  REQUIRE(topk_mask_signature(a, 4).data == a.data);
  REQUIRE(topk_mask_signature(Tensor::vec({0.5, 0.5, 0.2}), 1).data ==
          std::vector<double>{0.5, 0.0, 0.0});
}

TEST_CASE("transition matrix is tanh-bounded") {
  REQUIRE(transition(Tensor::zeros({2, 2})).data == std::vector<double>{0, 0, 0, 0});

  Tensor big = Tensor::full({2, 2}, 10.0);
  for (double v : transition(big).data) {
    REQUIRE(v == Approx(1.0).margin(1e-8));
    REQUIRE(v < 1.0);
  }

  Tensor anti = Tensor::matrix(2, 2, {0.0, 0.7, -0.7, 0.0});
  Tensor p = transition(anti);
  REQUIRE(p.at(0, 1) == Approx(-p.at(1, 0)));
  REQUIRE(p.at(0, 0) == 0.0);
}

TEST_CASE("expectation score on one-hot signatures selects one transition entry") {
  Tensor h = Tensor::vec({1.0, 0.0, 0.0});
  Tensor t = Tensor::vec({0.0, 1.0, 0.0});
  Tensor p = Tensor::zeros({3, 3});
  p.at(0, 1) = 0.3;
  REQUIRE(apim_score(h, p, t) == Approx(0.3));

  REQUIRE(apim_score(Tensor::zeros({3}), p, t) == 0.0);
  REQUIRE(apim_score(h, p, Tensor::zeros({3})) == 0.0);
}

TEST_CASE("expectation score, hand expanded") {
  Tensor h = Tensor::vec({0.5, 0.5, 0.0, 0.0});
  Tensor t = Tensor::vec({0.0, 0.5, 0.5, 0.0});
  Tensor p = Tensor::full({4, 4}, 1.0);
  REQUIRE(apim_score(h, p, t) == Approx(1.0));
  REQUIRE(apim_score(h, p, t) == Approx(bilinear_oracle(h, p, t)));
}

TEST_CASE("graph and plain score agree on random inputs") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    Tensor h = random_tensor({5}, rng);
    Tensor t = random_tensor({5}, rng);
    Tensor p = random_tensor({5, 5}, rng);
    double plain = apim_score(h, p, t);
    Var graph = apim_score(Var(h), Var(p), Var(t));
    REQUIRE(graph.value().value() == Approx(plain).margin(1e-12));
    REQUIRE(plain == Approx(bilinear_oracle(h, p, t)).margin(1e-12));
  }
}

TEST_CASE("apim loss basics") {
  REQUIRE(apim_loss({0.0}, {1}, {}, 0.0) == Approx(std::log(2.0)));
  REQUIRE(apim_loss({0.0}, {0}, {}, 0.0) == Approx(std::log(2.0)));

  // perfect scores: BCE vanishes, only the Frobenius penalty remains
  double loss = apim_loss({100.0, -100.0}, {1, 0}, {Tensor::eye(2)}, 0.1);
  REQUIRE(loss == Approx(0.2).margin(1e-12));

  REQUIRE_THROWS_AS(apim_loss(std::vector<double>{}, std::vector<int>{}, {}, 0.0), Error);
  REQUIRE_THROWS_AS(apim_loss(std::vector<double>{1.0}, std::vector<int>{1, 0}, {}, 0.0), Error);
}

TEST_CASE("graph apim loss matches the plain formula") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    std::vector<double> scores;
    std::vector<int> labels;
    Tensor label_tensor({4});
    std::vector<Var> score_vars;
    for (std::size_t i = 0; i < 4; ++i) {
      scores.push_back(rng.normal());
      labels.push_back(static_cast<int>(rng.below(2)));
      label_tensor.data[i] = labels.back();
      score_vars.push_back(Var(Tensor::scalar(scores.back())));
    }
    Tensor p1 = random_tensor({3, 3}, rng);
    Tensor p2 = random_tensor({3, 3}, rng);
    double plain = apim_loss(scores, labels, {p1, p2}, 0.05);
    Var graph = apim_loss(concat(score_vars), label_tensor, {Var(p1), Var(p2)}, 0.05);
    REQUIRE(graph.value().value() == Approx(plain).margin(1e-12));
  }
}

TEST_CASE("score bound from signature and transition ranges") {
  // |f| <= retained_k^2 since masked entries are in (0,1) and P in (-1,1)
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    std::size_t k_modes = 6;
    std::size_t retained = 1 + rng.below(k_modes);
    Tensor w_a = random_tensor({k_modes, 4}, rng);
    Tensor h = topk_mask_signature(signature(random_tensor({4}, rng), w_a), retained);
    Tensor t = topk_mask_signature(signature(random_tensor({4}, rng), w_a), retained);
    Tensor p = transition(random_tensor({k_modes, k_modes}, rng));
    double f = apim_score(h, p, t);
    REQUIRE(std::fabs(f) <= static_cast<double>(retained * retained));
  }
}

TEST_CASE("mask keeps at most the energy it is given") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    std::size_t k_modes = 8;
    std::size_t retained = 1 + rng.below(k_modes);
    Tensor a = signature(random_tensor({5}, rng), random_tensor({k_modes, 5}, rng));
    Tensor masked = topk_mask_signature(a, retained);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < k_modes; ++i) {
      num += std::fabs(masked.data[i]);
      den += std::fabs(a.data[i]);
    }
    double ratio = num / den;
    REQUIRE(ratio > 0.0);
    REQUIRE(ratio <= 1.0 + 1e-12);
    if (retained == k_modes) REQUIRE(ratio == Approx(1.0));
    if (retained < k_modes) REQUIRE(ratio < 1.0);  // sigmoid outputs are never zero
  }
}

TEST_CASE("loss is monotone in a positive triple's score") {
  double prev = apim_loss({-3.0}, {1}, {}, 0.0);
  for (double f : {-1.0, 0.0, 1.0, 3.0, 8.0}) {
    double cur = apim_loss({f}, {1}, {}, 0.0);
    REQUIRE(cur < prev);
    prev = cur;
  }
}

TEST_CASE("masked signature entries get zero gradient through the loss") {
  Rng rng(31);
  Tensor w_a = random_tensor({5, 3}, rng);
  Tensor h = random_tensor({3}, rng);
  Tensor theta = random_tensor({5, 5}, rng);

  Var vsig_raw = signature(Var(h), Var(w_a, true));
  Var vsig = topk_mask_signature(vsig_raw, 2);
  Var vp = transition(Var(theta));
  Var score = apim_score(vsig, vp, vsig);
  backward(apim_loss(concat({score}), Tensor::vec({1.0}), {}, 0.0));

  // gradient at the raw-signature node: zero exactly where the mask dropped
  const Tensor& raw = vsig_raw.value();
  auto mask = topk_select(raw.data, 2, false);
  const Tensor& g = vsig_raw.node()->grad;
  for (std::size_t i = 0; i < raw.numel(); ++i) {
    if (!mask[i]) {
      REQUIRE(g.data[i] == 0.0);
    } else {
      REQUIRE(g.data[i] != 0.0);
    }
  }
}

TEST_CASE("grad_check of the expectation score on random four-mode signatures") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    std::map<std::string, Tensor> inputs{{"w_a", random_tensor({4, 3}, rng)},
                                         {"h", random_tensor({3}, rng)},
                                         {"t", random_tensor({3}, rng)},
                                         {"theta", random_tensor({4, 4}, rng)}};
    Expr f = [](const VarMap& in) {
      Var sig_h = topk_mask_signature(signature(in.at("h"), in.at("w_a")), 2);
      Var sig_t = topk_mask_signature(signature(in.at("t"), in.at("w_a")), 2);
      return apim_score(sig_h, transition(in.at("theta")), sig_t);
    };
    GradReport rep = grad_check(f, inputs, 1e-5, 1e-4);
    INFO("seed " << seed << " max_rel_error " << rep.max_rel_error);
    REQUIRE(rep.pass);
  }
}

TEST_CASE("grad_check of the regularized loss on one positive triple") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed + 100);
    std::map<std::string, Tensor> inputs{{"w_a", random_tensor({4, 3}, rng)},
                                         {"h", random_tensor({3}, rng)},
                                         {"t", random_tensor({3}, rng)},
                                         {"theta", random_tensor({4, 4}, rng)}};
    Expr f = [](const VarMap& in) {
      Var sig_h = topk_mask_signature(signature(in.at("h"), in.at("w_a")), 2);
      Var sig_t = topk_mask_signature(signature(in.at("t"), in.at("w_a")), 2);
      Var p = transition(in.at("theta"));
      Var score = apim_score(sig_h, p, sig_t);
      return apim_loss(concat({score}), Tensor::vec({1.0}), {p}, 0.01);
    };
    GradReport rep = grad_check(f, inputs, 1e-5, 1e-4);
    INFO("seed " << seed << " max_rel_error " << rep.max_rel_error);
    REQUIRE(rep.pass);
  }
}
