#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "kgc/apim.hpp"
#include "kgc/encoder.hpp"
#include "kgc/params.hpp"
#include "kgc/triples.hpp"

namespace kgc {

// Base scoring functions (embedding decoders) and the assembly of encoder,
// decoder and APIM head into the four variants:
//   base - decoder only
//   apim - decoder + APIM head, jointly trained
//   dist - distillation inside the encoder
//   merg - both mechanisms
// When APIM is present its score is added to the decoder score at ranking
// time with weight lambda_apim, mirroring the loss weighting.

enum class Decoder { none, translational, bilinear };
enum class Variant { base, apim, dist, merg };

inline bool variant_uses_apim(Variant v) { return v == Variant::apim || v == Variant::merg; }
inline bool variant_uses_distill(Variant v) { return v == Variant::dist || v == Variant::merg; }

// ---- decoders ----

// translational: -||h + r - t||_2; bilinear: sum_j h_j r_j t_j.
inline double base_score(const Tensor& h, const Tensor& r, const Tensor& t, Decoder decoder) {
  if (!h.same_shape(r) || !h.same_shape(t)) {
    throw ShapeError("base_score: shapes " + h.shape_str() + ", " + r.shape_str() + ", " +
                     t.shape_str() + " do not match");
  }
  switch (decoder) {
    case Decoder::translational: {
      double s = 0.0;
      for (std::size_t i = 0; i < h.data.size(); ++i) {
        double d = h.data[i] + r.data[i] - t.data[i];
        s += d * d;
      }
      return -std::sqrt(s);
    }
    case Decoder::bilinear: {
      double s = 0.0;
      for (std::size_t i = 0; i < h.data.size(); ++i) s += h.data[i] * r.data[i] * t.data[i];
      return s;
    }
    case Decoder::none:
      return 0.0;
  }
  return 0.0;
}

inline Var base_score(const Var& h, const Var& r, const Var& t, Decoder decoder) {
  switch (decoder) {
    case Decoder::translational:
      return neg(l2_norm(h + r - t));
    case Decoder::bilinear:
      return sum(h * r * t);
    case Decoder::none:
      return Var(Tensor::scalar(0.0));
  }
  throw Error("base_score: unknown decoder");
}

// Mean BCE of sigmoid(score) against {0,1} labels.
inline double base_loss(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.empty() || scores.size() != labels.size()) {
    throw Error("base_loss: empty or misaligned batch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    s += labels[i] ? detail::softplus_stable(-scores[i]) : detail::softplus_stable(scores[i]);
  }
  return s / static_cast<double>(scores.size());
}

inline Var base_loss(const Var& scores, const Tensor& labels) {
  return bce_with_logits(scores, labels);
}

// Joint objective: base + lambda_apim * apim.
inline double combined_loss(double base, double apim, double lambda_apim) {
  if (lambda_apim < 0.0) throw Error("combined_loss: lambda_apim must be >= 0");
  return base + lambda_apim * apim;
}

inline Var combined_loss(const Var& base, const Var& apim, double lambda_apim) {
  if (lambda_apim < 0.0) throw Error("combined_loss: lambda_apim must be >= 0");
  return base + scale(apim, lambda_apim);
}

// ---- model assembly ----

struct ModelConfig {
  std::optional<EncoderConfig> encoder;  // absent for pure embedding models
  Decoder decoder = Decoder::bilinear;
  Variant variant = Variant::base;
  ApimConfig apim;
  double lambda_apim = 1.0;
  std::size_t embedding_dim = 100;  // == encoder input_dim when an encoder is present

  bool use_apim() const { return variant_uses_apim(variant); }
  bool use_distill() const { return variant_uses_distill(variant); }
  std::size_t final_dim() const { return encoder ? encoder->output_dim() : embedding_dim; }
};

inline void validate_model_config(const ModelConfig& c) {
  if (c.decoder == Decoder::none && !c.use_apim()) {
    throw ConfigError("model: needs a decoder, an APIM head, or both");
  }
  if (c.lambda_apim < 0.0) throw ConfigError("model: lambda_apim must be >= 0");
  if (c.use_distill() && !c.encoder) {
    throw ConfigError("model: variant '" + std::string(c.variant == Variant::dist ? "dist" : "merg") +
                      "' requires an encoder");
  }
  if (c.encoder) {
    validate_encoder_config(*c.encoder);
    if (c.use_distill() && !c.encoder->distill) {
      throw ConfigError("model: distillation variant without a distill schedule");
    }
  }
  if (c.use_apim()) validate_apim_config(c.apim);
}

struct Model {
  ModelConfig config;
  std::size_t n_entities = 0;
  std::size_t n_relations = 0;

  Var entity_emb;   // |E| x embedding_dim
  Var decoder_rel;  // |R| x final_dim, when a decoder is present
  EncoderParams encoder;
  ApimParams apim;
  ParamSet params;
};

inline Model make_model(ModelConfig config, std::size_t n_entities, std::size_t n_relations,
                        std::uint64_t seed) {
  if (config.encoder) {
    // A distillation schedule configured on the encoder is only active for
    // dist/merg variants; drop it otherwise so base/apim runs are clean.
    if (!config.use_distill()) config.encoder->distill.reset();
    config.embedding_dim = config.encoder->input_dim;
  }
  validate_model_config(config);
  Model m;
  m.config = config;
  m.n_entities = n_entities;
  m.n_relations = n_relations;
  m.entity_emb = m.params.add(
      "entity_emb", xavier_normal_init(n_entities, config.embedding_dim, mix_seed(seed, "entity_emb")));
  if (config.decoder != Decoder::none) {
    m.decoder_rel = m.params.add(
        "decoder_rel",
        xavier_normal_init(n_relations, config.final_dim(), mix_seed(seed, "decoder_rel")));
  }
  if (config.encoder) {
    m.encoder = make_encoder_params(*config.encoder, 2 * n_relations + 1, seed, m.params);
  }
  if (config.use_apim()) {
    m.apim = make_apim_params(config.apim, config.final_dim(), n_relations, seed, m.params);
  }
  return m;
}

// ---- frozen view for ranking ----

// Plain-tensor snapshot of a trained model: final entity states, decoder
// relation embeddings, masked signatures and transition matrices. All
// candidate scoring happens here, outside the autodiff graph.
struct EvalModel {
  ModelConfig config;
  Tensor entity_states;              // |E| x final_dim
  Tensor decoder_rel;                // |R| x final_dim
  Tensor masked_signatures;          // |E| x K
  std::vector<Tensor> transitions;   // per relation, K x K

  std::size_t num_entities() const { return entity_states.rows(); }

  Tensor entity_row(std::size_t e) const {
    Tensor t({entity_states.cols()});
    for (std::size_t j = 0; j < t.numel(); ++j) t.data[j] = entity_states.at(e, j);
    return t;
  }

  double decoder_score(std::size_t h, std::size_t r, std::size_t t) const {
    if (config.decoder == Decoder::none) return 0.0;
    std::size_t d = entity_states.cols();
    double s = 0.0;
    if (config.decoder == Decoder::bilinear) {
      for (std::size_t j = 0; j < d; ++j) {
        s += entity_states.at(h, j) * decoder_rel.at(r, j) * entity_states.at(t, j);
      }
      return s;
    }
    for (std::size_t j = 0; j < d; ++j) {
      double diff = entity_states.at(h, j) + decoder_rel.at(r, j) - entity_states.at(t, j);
      s += diff * diff;
    }
    return -std::sqrt(s);
  }

  double apim_part(std::size_t h, std::size_t r, std::size_t t) const {
    if (!config.use_apim()) return 0.0;
    const Tensor& p = transitions[r];
    std::size_t k = masked_signatures.cols();
    double f = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      double hi = masked_signatures.at(h, i);
      if (hi == 0.0) continue;
      double acc = 0.0;
      for (std::size_t j = 0; j < k; ++j) acc += p.at(i, j) * masked_signatures.at(t, j);
      f += hi * acc;
    }
    return f;
  }

  double score(const Triple& t) const {
    return decoder_score(t.head, t.relation, t.tail) +
           config.lambda_apim * apim_part(t.head, t.relation, t.tail);
  }

  // All candidate tails for (h, r, ?) in one pass; shared per-query work is
  // hoisted (h (.) r for bilinear, sig_h^T P_r for APIM).
  void score_tails(std::size_t h, std::size_t r, std::vector<double>& out) const {
    fill_candidates(h, r, /*tail_side=*/true, out);
  }

  void score_heads(std::size_t r, std::size_t t, std::vector<double>& out) const {
    fill_candidates(t, r, /*tail_side=*/false, out);
  }

 private:
  void fill_candidates(std::size_t fixed, std::size_t r, bool tail_side,
                       std::vector<double>& out) const {
    std::size_t n = num_entities();
    std::size_t d = entity_states.cols();
    out.assign(n, 0.0);

    if (config.decoder == Decoder::bilinear) {
      std::vector<double> hr(d);
      for (std::size_t j = 0; j < d; ++j) hr[j] = entity_states.at(fixed, j) * decoder_rel.at(r, j);
      for (std::size_t c = 0; c < n; ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += hr[j] * entity_states.at(c, j);
        out[c] = s;
      }
    } else if (config.decoder == Decoder::translational) {
      std::vector<double> base(d);
      for (std::size_t j = 0; j < d; ++j) {
        double v = decoder_rel.at(r, j);
        base[j] = tail_side ? entity_states.at(fixed, j) + v : v - entity_states.at(fixed, j);
      }
      // tail query: h + r - t; head query: h + r - t with h the candidate.
      for (std::size_t c = 0; c < n; ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          double diff = tail_side ? base[j] - entity_states.at(c, j)
                                  : entity_states.at(c, j) + base[j];
          s += diff * diff;
        }
        out[c] = -std::sqrt(s);
      }
    }

    if (config.use_apim()) {
      const Tensor& p = transitions[r];
      std::size_t k = masked_signatures.cols();
      std::vector<double> v(k, 0.0);
      if (tail_side) {
        // v = sig_h^T P
        for (std::size_t i = 0; i < k; ++i) {
          double hi = masked_signatures.at(fixed, i);
          if (hi == 0.0) continue;
          for (std::size_t j = 0; j < k; ++j) v[j] += hi * p.at(i, j);
        }
      } else {
        // v = P sig_t
        for (std::size_t i = 0; i < k; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < k; ++j) acc += p.at(i, j) * masked_signatures.at(fixed, j);
          v[i] = acc;
        }
      }
      for (std::size_t c = 0; c < n; ++c) {
        double f = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
          double sj = masked_signatures.at(c, j);
          if (sj != 0.0) f += v[j] * sj;
        }
        out[c] += config.lambda_apim * f;
      }
    }
  }
};

// Free-function form of single-triple scoring.
inline double model_score(const EvalModel& model, const Triple& triple) {
  return model.score(triple);
}

// Runs the encoder (when present) and snapshots everything ranking needs.
// The adjacency argument is required for encoder models.
inline EvalModel freeze(const Model& m, const AdjacencyIndex* adj) {
  EvalModel ev;
  ev.config = m.config;
  if (m.config.encoder) {
    if (adj == nullptr) throw Error("freeze: encoder model needs an adjacency index");
    auto states = encode(*adj, m.entity_emb, m.encoder);
    ev.entity_states = snapshot_layer(states.back());
  } else {
    ev.entity_states = m.entity_emb.value();
  }
  if (m.config.decoder != Decoder::none) ev.decoder_rel = m.decoder_rel.value();
  if (m.config.use_apim()) {
    std::size_t k = m.config.apim.mode_count;
    ev.masked_signatures = Tensor({ev.entity_states.rows(), k});
    for (std::size_t e = 0; e < ev.entity_states.rows(); ++e) {
      Tensor sig = topk_mask_signature(signature(ev.entity_row(e), m.apim.w_a.value()),
                                       m.config.apim.retained_k);
      for (std::size_t j = 0; j < k; ++j) ev.masked_signatures.at(e, j) = sig.data[j];
    }
    ev.transitions.reserve(m.n_relations);
    for (const Var& theta : m.apim.theta) ev.transitions.push_back(transition(theta.value()));
  }
  return ev;
}

}  // namespace kgc
