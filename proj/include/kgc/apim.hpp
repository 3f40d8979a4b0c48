#pragma once

#include <cstddef>
#include <vector>

#include "kgc/autodiff.hpp"
#include "kgc/params.hpp"
#include "kgc/tensor.hpp"

namespace kgc {

// Abstract probabilistic interaction modeling. Each entity gets a signature
// in (0,1)^K over K latent interaction modes; each relation a tanh-bounded
// K x K transition matrix; a triple's score is the bilinear expectation of
// mode-mediated interactions between the (sparsified) signatures.
//
// Plain-tensor functions below are the reference surface; Var overloads
// build the same math into the autodiff graph for training. Unit tests pin
// both routes to each other.

struct ApimConfig {
  std::size_t mode_count = 100;  // K
  std::size_t retained_k = 20;
  double lambda_frob = 1e-4;
};

inline void validate_apim_config(const ApimConfig& c) {
  if (c.mode_count < 1) throw ConfigError("apim: mode_count must be >= 1");
  if (c.retained_k < 1 || c.retained_k > c.mode_count) {
    throw ConfigError("apim: retained_k must be in [1, mode_count]");
  }
  if (c.lambda_frob < 0.0) throw ConfigError("apim: lambda_frob must be >= 0");
}

struct ApimParams {
  ApimConfig config;
  Var w_a;                 // K x d signature projector
  std::vector<Var> theta;  // per-relation K x K pre-activation matrix
};

// Xavier init goes to the trainable pre-activation Theta_r; the transition
// matrix P_r = tanh(Theta_r) is derived, never stored.
inline ApimParams make_apim_params(const ApimConfig& config, std::size_t entity_dim,
                                   std::size_t n_relations, std::uint64_t seed,
                                   ParamSet& params) {
  validate_apim_config(config);
  ApimParams p;
  p.config = config;
  p.w_a = params.add("apim.w_a",
                     xavier_normal_init(config.mode_count, entity_dim, mix_seed(seed, "apim.w_a")));
  p.theta.reserve(n_relations);
  for (std::size_t r = 0; r < n_relations; ++r) {
    std::string name = "apim.theta" + std::to_string(r);
    p.theta.push_back(params.add(
        name, xavier_normal_init(config.mode_count, config.mode_count, mix_seed(seed, name))));
  }
  return p;
}

// ---- signatures ----

// a_e = sigmoid(W_a h_e), entrywise in (0,1).
inline Tensor signature(const Tensor& h_e, const Tensor& w_a) {
  if (!w_a.is_matrix() || w_a.shape[1] != h_e.numel()) {
    throw ShapeError("signature: projector " + w_a.shape_str() + " does not accept " +
                     h_e.shape_str());
  }
  std::size_t k = w_a.shape[0], d = w_a.shape[1];
  Tensor a({k});
  for (std::size_t i = 0; i < k; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += w_a.at(i, j) * h_e.data[j];
    a.data[i] = detail::sigmoid_stable(s);
  }
  return a;
}

inline Var signature(const Var& h_e, const Var& w_a) { return sigmoid(matmul(w_a, h_e)); }

// Binary mask of the retained_k largest entries (ties toward the lower
// index), applied elementwise. Gradient flows only through retained modes.
inline Tensor topk_mask_signature(const Tensor& a, std::size_t retained_k) {
  auto mask = topk_select(a.data, retained_k, false);
  Tensor out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    if (!mask[i]) out.data[i] = 0.0;
  }
  return out;
}

inline Var topk_mask_signature(const Var& a, std::size_t retained_k) {
  return topk_mask(a, retained_k, false);
}

// ---- transitions ----

// P_r = tanh(Theta_r); entries may be negative (signed interactions), so no
// stochastic-matrix normalization is applied.
inline Tensor transition(const Tensor& theta_r) {
  Tensor p = theta_r;
  for (double& v : p.data) v = std::tanh(v);
  return p;
}

inline Var transition(const Var& theta_r) { return tanh(theta_r); }

// ---- scoring ----

// f = a_h^T P_r a_t over masked signatures.
inline double apim_score(const Tensor& sig_h, const Tensor& p_r, const Tensor& sig_t) {
  std::size_t k = sig_h.numel();
  if (!p_r.is_matrix() || p_r.shape[0] != k || p_r.shape[1] != sig_t.numel()) {
    throw ShapeError("apim_score: transition " + p_r.shape_str() + " does not match signatures " +
                     sig_h.shape_str() + " / " + sig_t.shape_str());
  }
  double f = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    double hi = sig_h.data[i];
    if (hi == 0.0) continue;
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) acc += p_r.at(i, j) * sig_t.data[j];
    f += hi * acc;
  }
  return f;
}

inline Var apim_score(const Var& sig_h, const Var& p_r, const Var& sig_t) {
  return dot(sig_h, matmul(p_r, sig_t));
}

// ---- loss ----

// Mean BCE of sigmoid(score) against the labels, plus lambda_frob times the
// mean squared Frobenius norm over the distinct relations in the batch.
inline double apim_loss(const std::vector<double>& scores, const std::vector<int>& labels,
                        const std::vector<Tensor>& p_batch, double lambda_frob) {
  if (scores.empty() || scores.size() != labels.size()) {
    throw Error("apim_loss: empty or misaligned batch");
  }
  double bce = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    double f = scores[i];
    bce += labels[i] ? detail::softplus_stable(-f) : detail::softplus_stable(f);
  }
  bce /= static_cast<double>(scores.size());
  double frob = 0.0;
  if (!p_batch.empty() && lambda_frob != 0.0) {
    for (const Tensor& p : p_batch) {
      for (double v : p.data) frob += v * v;
    }
    frob /= static_cast<double>(p_batch.size());
  }
  return bce + lambda_frob * frob;
}

// Mean BCE of sigmoid(score) against {0,1} labels; labels enter the graph
// as constants. Stable composition: y*softplus(-f) + (1-y)*softplus(f).
inline Var bce_with_logits(const Var& scores, const Tensor& labels) {
  if (scores.value().numel() == 0 || !scores.value().same_shape(labels)) {
    throw Error("bce_with_logits: empty or misaligned batch");
  }
  Tensor flipped = labels;
  for (double& v : flipped.data) v = 1.0 - v;
  Var y(labels), y_neg(flipped);
  Var per_sample = y * softplus(neg(scores)) + y_neg * softplus(scores);
  return scale(sum(per_sample), 1.0 / static_cast<double>(labels.numel()));
}

inline Var apim_loss(const Var& scores, const Tensor& labels, const std::vector<Var>& p_batch,
                     double lambda_frob) {
  if (scores.value().numel() == 0) throw Error("apim_loss: empty batch");
  Var loss = bce_with_logits(scores, labels);
  if (!p_batch.empty() && lambda_frob != 0.0) {
    Var frob = frobenius_sq(p_batch[0]);
    for (std::size_t i = 1; i < p_batch.size(); ++i) frob = frob + frobenius_sq(p_batch[i]);
    loss = loss + scale(frob, lambda_frob / static_cast<double>(p_batch.size()));
  }
  return loss;
}

}  // namespace kgc
