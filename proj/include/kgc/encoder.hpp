#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kgc/autodiff.hpp"
#include "kgc/distill.hpp"
#include "kgc/params.hpp"
#include "kgc/triples.hpp"

namespace kgc {

// Message-passing encoder stack with three aggregation flavors. These are
// simplified archetypes of the attention / basis-relational / compositional
// encoder families, not reproductions of any published codebase: the point
// is where the distillation operator sits (between aggregation and update).

enum class EncoderFlavor { attention, relational, compositional };

struct EncoderConfig {
  EncoderFlavor flavor = EncoderFlavor::compositional;
  std::size_t layers = 4;
  std::size_t input_dim = 100;
  std::size_t hidden_dim = 200;
  std::optional<DistillSchedule> distill;
  std::size_t bases = 2;  // relational flavor only

  std::size_t layer_in(std::size_t l) const { return l == 0 ? input_dim : hidden_dim; }
  std::size_t output_dim() const { return layers == 0 ? input_dim : hidden_dim; }
};

inline void validate_encoder_config(const EncoderConfig& c) {
  if (c.layers < 1) throw ConfigError("encoder: layers must be >= 1");
  if (c.input_dim < 1 || c.hidden_dim < 1) throw ConfigError("encoder: dims must be >= 1");
  if (c.flavor == EncoderFlavor::relational && c.bases < 1) {
    throw ConfigError("encoder: bases must be >= 1");
  }
  if (c.distill) validate_schedule(*c.distill);
}

struct EncoderLayerWeights {
  Var w_self, w_msg;  // update, out x in

  // compositional: direction-specific transforms of h_j (.) r
  Var w_fwd, w_inv, w_slf;

  // relational: shared bases plus per-extended-relation coefficients
  std::vector<Var> basis;  // each out x in
  Var coeff;               // R_ext x bases

  // attention: message projections and the scoring vector
  Var w_nbr, w_rel;  // out x in
  Var attn;          // out

  // compositional/attention: carries relation embeddings to the next width
  Var w_relproj;  // out x in
};

struct EncoderParams {
  EncoderConfig config;
  std::size_t num_relations_extended = 0;
  Var rel_emb;  // R_ext x input_dim (compositional/attention flavors)
  std::vector<EncoderLayerWeights> layers;
};

inline EncoderParams make_encoder_params(const EncoderConfig& config, std::size_t n_rel_extended,
                                         std::uint64_t seed, ParamSet& params) {
  validate_encoder_config(config);
  EncoderParams p;
  p.config = config;
  p.num_relations_extended = n_rel_extended;
  bool uses_rel_emb = config.flavor != EncoderFlavor::relational;
  auto init = [&](const std::string& name, std::size_t r, std::size_t c) {
    return params.add(name, xavier_normal_init(r, c, mix_seed(seed, name)));
  };
  if (uses_rel_emb) {
    p.rel_emb = init("enc.rel_emb", n_rel_extended, config.input_dim);
  }
  for (std::size_t l = 0; l < config.layers; ++l) {
    std::size_t in = config.layer_in(l);
    std::size_t out = config.hidden_dim;
    std::string prefix = "enc.l" + std::to_string(l) + ".";
    EncoderLayerWeights w;
    w.w_self = init(prefix + "w_self", out, in);
    w.w_msg = init(prefix + "w_msg", out, out);
    switch (config.flavor) {
      case EncoderFlavor::compositional:
        w.w_fwd = init(prefix + "w_fwd", out, in);
        w.w_inv = init(prefix + "w_inv", out, in);
        w.w_slf = init(prefix + "w_slf", out, in);
        w.w_relproj = init(prefix + "w_relproj", out, in);
        break;
      case EncoderFlavor::relational:
        for (std::size_t b = 0; b < config.bases; ++b) {
          w.basis.push_back(init(prefix + "basis" + std::to_string(b), out, in));
        }
        w.coeff = init(prefix + "coeff", n_rel_extended, config.bases);
        break;
      case EncoderFlavor::attention: {
        w.w_nbr = init(prefix + "w_nbr", out, in);
        w.w_rel = init(prefix + "w_rel", out, in);
        Tensor a = xavier_normal_init(out, 1, mix_seed(seed, prefix + "attn"));
        a.shape = {out};
        w.attn = params.add(prefix + "attn", std::move(a));
        w.w_relproj = init(prefix + "w_relproj", out, in);
        break;
      }
    }
    p.layers.push_back(std::move(w));
  }
  return p;
}

// ---- per-edge message functions ----

// W_dir (h_j (.) r): composition by elementwise product, then a
// direction-specific linear map.
inline Var compositional_message(const Var& w_dir, const Var& h_j, const Var& r_emb) {
  return matmul(w_dir, h_j * r_emb);
}

// Basis combination for one extended relation id: sum_b coeff[rel,b] * basis_b.
inline Var combine_bases(const std::vector<Var>& basis, const Var& coeff, std::size_t rel) {
  Var coeff_row = row(coeff, rel);
  Var w = smul(index(coeff_row, 0), basis[0]);
  for (std::size_t b = 1; b < basis.size(); ++b) {
    w = w + smul(index(coeff_row, b), basis[b]);
  }
  return w;
}

inline Var relational_message(const Var& w_rel_combined, const Var& h_j) {
  return matmul(w_rel_combined, h_j);
}

struct AttentionMessage {
  Var msg;
  Var logit;  // unnormalized, one scalar per edge
};

inline AttentionMessage attention_message(const Var& w_nbr, const Var& w_rel, const Var& attn_vec,
                                          const Var& h_j, const Var& r_emb) {
  Var m = matmul(w_nbr, h_j) + matmul(w_rel, r_emb);
  Var logit = dot(attn_vec, tanh(m));
  return {m, logit};
}

// ---- aggregation ----

inline Var aggregate_mean(const std::vector<Var>& messages) {
  if (messages.empty()) throw ShapeError("aggregate: no messages");
  if (messages.size() == 1) return messages[0];
  Var stacked = stack_cols(messages);
  Var w(Tensor::full({messages.size()}, 1.0 / static_cast<double>(messages.size())));
  return matmul(stacked, w);
}

inline Var aggregate_attention(const std::vector<Var>& messages, const std::vector<Var>& logits) {
  if (messages.empty()) throw ShapeError("aggregate: no messages");
  Var weights = softmax(concat(logits));
  return matmul(stack_cols(messages), weights);
}

// ---- node update ----

// h' = relu(W_self h + W_msg m); the final layer omits the rectifier.
inline Var update_node(const Var& w_self, const Var& w_msg, const Var& h_prev, const Var& m,
                       bool rectify) {
  Var pre = matmul(w_self, h_prev) + matmul(w_msg, m);
  return rectify ? relu(pre) : pre;
}

// ---- full forward pass ----

// Returns states for layers 0..L; states[0] are rows of the initial table.
// Per layer and node: messages -> aggregate -> distill (if configured) ->
// update. The whole pass lives in the autodiff graph, so training works
// through it unchanged.
inline std::vector<std::vector<Var>> encode(const AdjacencyIndex& adj, const Var& initial,
                                            const EncoderParams& params) {
  const EncoderConfig& cfg = params.config;
  std::size_t n = adj.neighbors.size();
  if (initial.value().rows() != n || initial.value().cols() != cfg.input_dim) {
    throw ShapeError("encode: initial embeddings " + initial.value().shape_str() +
                     " do not match " + std::to_string(n) + " entities x " +
                     std::to_string(cfg.input_dim));
  }

  std::vector<std::vector<Var>> states;
  states.emplace_back();
  states[0].reserve(n);
  for (std::size_t e = 0; e < n; ++e) states[0].push_back(row(initial, e));

  bool uses_rel_emb = cfg.flavor != EncoderFlavor::relational;
  std::vector<Var> rel_rows;
  if (uses_rel_emb) {
    rel_rows.reserve(params.num_relations_extended);
    for (std::size_t rid = 0; rid < params.num_relations_extended; ++rid) {
      rel_rows.push_back(row(params.rel_emb, rid));
    }
  }

  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const EncoderLayerWeights& w = params.layers[l];
    bool rectify = l + 1 < cfg.layers;

    // Relational flavor: materialize each relation's basis combination once.
    std::vector<Var> rel_weights;
    if (cfg.flavor == EncoderFlavor::relational) {
      rel_weights.reserve(params.num_relations_extended);
      for (std::size_t rid = 0; rid < params.num_relations_extended; ++rid) {
        rel_weights.push_back(combine_bases(w.basis, w.coeff, rid));
      }
    }

    std::vector<Var> next(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& edges = adj.neighbors[i];
      std::vector<Var> messages;
      std::vector<Var> logits;
      messages.reserve(edges.size());
      for (const AdjEntry& e : edges) {
        const Var& h_j = states[l][e.neighbor];
        switch (cfg.flavor) {
          case EncoderFlavor::compositional: {
            const Var& w_dir = e.dir == EdgeDir::forward  ? w.w_fwd
                               : e.dir == EdgeDir::inverse ? w.w_inv
                                                           : w.w_slf;
            messages.push_back(compositional_message(w_dir, h_j, rel_rows[e.relation]));
            break;
          }
          case EncoderFlavor::relational:
            messages.push_back(relational_message(rel_weights[e.relation], h_j));
            break;
          case EncoderFlavor::attention: {
            auto [msg, logit] =
                attention_message(w.w_nbr, w.w_rel, w.attn, h_j, rel_rows[e.relation]);
            messages.push_back(msg);
            logits.push_back(logit);
            break;
          }
        }
      }
      Var aggregated = cfg.flavor == EncoderFlavor::attention
                           ? aggregate_attention(messages, logits)
                           : aggregate_mean(messages);
      if (cfg.distill) aggregated = distill(aggregated, *cfg.distill);
      next[i] = update_node(w.w_self, w.w_msg, states[l][i], aggregated, rectify);
    }
    states.push_back(std::move(next));

    if (uses_rel_emb && l + 1 < cfg.layers) {
      for (auto& r : rel_rows) r = matmul(w.w_relproj, r);
    }
  }
  return states;
}

// Plain-tensor snapshot of one layer's states, |E| x dim.
inline Tensor snapshot_layer(const std::vector<Var>& layer) {
  std::size_t n = layer.size();
  std::size_t d = layer[0].value().numel();
  Tensor out({n, d});
  for (std::size_t e = 0; e < n; ++e) {
    for (std::size_t j = 0; j < d; ++j) out.at(e, j) = layer[e].value().data[j];
  }
  return out;
}

inline std::vector<Tensor> snapshot_states(const std::vector<std::vector<Var>>& states) {
  std::vector<Tensor> out;
  out.reserve(states.size());
  for (const auto& layer : states) out.push_back(snapshot_layer(layer));
  return out;
}

}  // namespace kgc
