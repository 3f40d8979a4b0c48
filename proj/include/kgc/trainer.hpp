#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgc/ranking.hpp"
#include "kgc/scoring.hpp"
#include "kgc/triples.hpp"

namespace kgc {

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  std::size_t negatives_per_positive = 1;
  bool filtered_negatives = true;  // reject known-true corruptions
  std::uint64_t seed = 42;
  std::size_t patience = 20;  // non-improving validation epochs before stopping
  std::size_t threads = 1;    // evaluation workers
};

inline void validate_train_config(const TrainConfig& c) {
  if (c.epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (c.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (c.learning_rate <= 0.0) throw ConfigError("train: learning_rate must be > 0");
  if (c.negatives_per_positive < 1) throw ConfigError("train: negatives_per_positive must be >= 1");
}

// Adaptive moment estimation, the usual constants: beta1 0.9, beta2 0.999,
// eps 1e-8.
class Adam {
 public:
  explicit Adam(double learning_rate) : lr_(learning_rate) {}

  void step(ParamSet& params) {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    if (m_.empty()) {
      for (const auto& [name, v] : params.items()) {
        m_.push_back(Tensor::zeros(v.value().shape));
        v_.push_back(Tensor::zeros(v.value().shape));
      }
    }
    std::size_t idx = 0;
    for (auto& [name, var] : params.items()) {
      Tensor& value = var.mutable_value();
      const Tensor& grad = var.grad();
      Tensor& m = m_[idx];
      Tensor& v = v_[idx];
      for (std::size_t i = 0; i < value.data.size(); ++i) {
        double g = grad.data[i];
        m.data[i] = beta1_ * m.data[i] + (1.0 - beta1_) * g;
        v.data[i] = beta2_ * v.data[i] + (1.0 - beta2_) * g * g;
        double mhat = m.data[i] / bc1;
        double vhat = v.data[i] / bc2;
        value.data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
      ++idx;
    }
  }

 private:
  double lr_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::uint64_t t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_mrr = 0.0;
  std::size_t batches = 0;
};

// Best model snapshot plus enough metadata to rebuild and re-evaluate it.
struct Checkpoint {
  ModelConfig config;
  std::size_t n_entities = 0;
  std::size_t n_relations = 0;
  std::size_t best_epoch = 0;
  double best_val_mrr = 0.0;
  std::vector<std::pair<std::string, Tensor>> parameters;
  std::vector<std::pair<std::string, std::string>> config_echo;
};

namespace detail {

struct BatchSample {
  Triple triple;
  int label;  // 1 positive, 0 negative
};

// One batch's combined loss, built into a fresh autodiff graph. Entity
// states are either rows of the embedding table or the encoder's final
// layer; signatures and transitions are cached per batch so an entity or
// relation appearing repeatedly is computed once.
inline Var batch_loss(Model& model, const AdjacencyIndex* adj,
                      const std::vector<BatchSample>& samples) {
  const ModelConfig& cfg = model.config;

  std::unordered_map<std::size_t, Var> state_cache;
  std::vector<std::vector<Var>> all_states;
  if (cfg.encoder) {
    all_states = encode(*adj, model.entity_emb, model.encoder);
  }
  auto entity_state = [&](std::size_t e) -> Var {
    if (cfg.encoder) return all_states.back()[e];
    auto it = state_cache.find(e);
    if (it != state_cache.end()) return it->second;
    Var v = row(model.entity_emb, e);
    state_cache.emplace(e, v);
    return v;
  };

  Tensor labels({samples.size()});
  for (std::size_t i = 0; i < samples.size(); ++i) labels.data[i] = samples[i].label;

  Var total;
  bool has_base = cfg.decoder != Decoder::none;
  if (has_base) {
    std::vector<Var> scores;
    scores.reserve(samples.size());
    std::unordered_map<std::size_t, Var> rel_cache;
    for (const auto& s : samples) {
      auto it = rel_cache.find(s.triple.relation);
      if (it == rel_cache.end()) {
        it = rel_cache.emplace(s.triple.relation, row(model.decoder_rel, s.triple.relation)).first;
      }
      scores.push_back(base_score(entity_state(s.triple.head), it->second,
                                  entity_state(s.triple.tail), cfg.decoder));
    }
    total = base_loss(concat(scores), labels);
  }

  if (cfg.use_apim()) {
    std::unordered_map<std::size_t, Var> sig_cache;
    auto masked_sig = [&](std::size_t e) -> Var {
      auto it = sig_cache.find(e);
      if (it != sig_cache.end()) return it->second;
      Var sig = topk_mask_signature(signature(entity_state(e), model.apim.w_a),
                                    cfg.apim.retained_k);
      sig_cache.emplace(e, sig);
      return sig;
    };
    std::unordered_map<std::size_t, Var> p_cache;
    std::vector<Var> p_distinct;
    auto transition_of = [&](std::size_t r) -> Var {
      auto it = p_cache.find(r);
      if (it != p_cache.end()) return it->second;
      Var p = transition(model.apim.theta[r]);
      p_cache.emplace(r, p);
      p_distinct.push_back(p);
      return p;
    };
    std::vector<Var> scores;
    scores.reserve(samples.size());
    for (const auto& s : samples) {
      scores.push_back(apim_score(masked_sig(s.triple.head), transition_of(s.triple.relation),
                                  masked_sig(s.triple.tail)));
    }
    Var apim = apim_loss(concat(scores), labels, p_distinct, cfg.apim.lambda_frob);
    total = has_base ? combined_loss(total, apim, cfg.lambda_apim) : scale(apim, cfg.lambda_apim);
  }

  if (!total.defined()) throw Error("batch_loss: model has neither decoder nor APIM head");
  return total;
}

inline std::vector<std::pair<std::string, Tensor>> snapshot_params(const Model& model) {
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(model.params.items().size());
  for (const auto& [name, v] : model.params.items()) out.emplace_back(name, v.value());
  return out;
}

inline void restore_params(Model& model, const std::vector<std::pair<std::string, Tensor>>& snap) {
  auto& items = model.params.items();
  if (items.size() != snap.size()) throw Error("restore_params: parameter count mismatch");
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].first != snap[i].first) {
      throw Error("restore_params: parameter order mismatch at " + snap[i].first);
    }
    items[i].second.mutable_value() = snap[i].second;
  }
}

}  // namespace detail

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
  std::size_t epochs_run = 0;
};

// Minibatch training: shuffled positives with filtered uniform negatives,
// adaptive-moment updates, per-epoch filtered validation MRR, early stop
// on `patience` non-improving epochs. The model is left holding the best
// parameters.
inline TrainResult train(const TripleStore& store, Model& model, const TrainConfig& config,
                         const AdjacencyIndex* adj = nullptr) {
  validate_train_config(config);
  if (model.config.encoder && adj == nullptr) {
    throw Error("train: encoder model needs an adjacency index");
  }
  if (store.train.empty()) throw Error("train: empty training split");

  Adam opt(config.learning_rate);
  TrainResult result;
  double best_mrr = -1.0;
  std::size_t best_epoch = 0;
  std::size_t since_best = 0;
  std::vector<std::pair<std::string, Tensor>> best_params = detail::snapshot_params(model);

  std::vector<std::size_t> order(store.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(config.seed, "shuffle.epoch" + std::to_string(epoch)));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      std::size_t end = std::min(order.size(), begin + config.batch_size);
      std::vector<detail::BatchSample> samples;
      samples.reserve((end - begin) * (1 + config.negatives_per_positive));
      for (std::size_t i = begin; i < end; ++i) {
        const Triple& pos = store.train[order[i]];
        samples.push_back({pos, 1});
        std::uint64_t neg_seed =
            mix_seed(config.seed, "neg.e" + std::to_string(epoch) + "." + std::to_string(order[i]));
        for (const Triple& neg :
             sample_negatives(pos, config.negatives_per_positive, CorruptMode::both, neg_seed,
                              store, config.filtered_negatives)) {
          samples.push_back({neg, 0});
        }
      }

      double loss_value;
      try {
        Var loss = detail::batch_loss(model, adj, samples);
        loss_value = loss.value().value();
        if (!std::isfinite(loss_value)) throw NumericError("loss is not finite");
        backward(loss);
      } catch (const NumericError& e) {
        throw NumericError("train aborted at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batches) + ": " + e.what());
      }
      opt.step(model.params);
      model.params.zero_grads();
      epoch_loss += loss_value;
      ++batches;
    }
    epoch_loss /= static_cast<double>(batches);

    double val_mrr = 0.0;
    if (!store.valid.empty()) {
      EvalModel ev = freeze(model, adj);
      val_mrr = evaluate(ev, store, store.valid, config.threads).mrr;
    }
    result.log.push_back({epoch, epoch_loss, val_mrr, batches});
    result.epochs_run = epoch;

    if (val_mrr > best_mrr) {
      best_mrr = val_mrr;
      best_epoch = epoch;
      since_best = 0;
      best_params = detail::snapshot_params(model);
    } else {
      ++since_best;
      if (since_best > config.patience) break;
    }
  }

  detail::restore_params(model, best_params);
  result.checkpoint.config = model.config;
  result.checkpoint.n_entities = model.n_entities;
  result.checkpoint.n_relations = model.n_relations;
  result.checkpoint.best_epoch = best_epoch;
  result.checkpoint.best_val_mrr = best_mrr < 0.0 ? 0.0 : best_mrr;
  result.checkpoint.parameters = std::move(best_params);
  return result;
}

// ---- checkpoint file format ----
//
// Plain-text header (one item per line) followed by a BLOB marker and the
// raw little-endian doubles of every parameter in registry order. Doubles
// round-trip bitwise.

namespace detail {

inline const char* decoder_name(Decoder d) {
  switch (d) {
    case Decoder::none: return "none";
    case Decoder::translational: return "translational";
    case Decoder::bilinear: return "bilinear";
  }
  return "?";
}

inline Decoder decoder_from(const std::string& s) {
  if (s == "none") return Decoder::none;
  if (s == "translational") return Decoder::translational;
  if (s == "bilinear") return Decoder::bilinear;
  throw IoError("checkpoint: unknown decoder '" + s + "'");
}

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::base: return "base";
    case Variant::apim: return "apim";
    case Variant::dist: return "dist";
    case Variant::merg: return "merg";
  }
  return "?";
}

inline Variant variant_from(const std::string& s) {
  if (s == "base") return Variant::base;
  if (s == "apim") return Variant::apim;
  if (s == "dist") return Variant::dist;
  if (s == "merg") return Variant::merg;
  throw IoError("checkpoint: unknown variant '" + s + "'");
}

inline const char* flavor_name(EncoderFlavor f) {
  switch (f) {
    case EncoderFlavor::attention: return "attention";
    case EncoderFlavor::relational: return "relational";
    case EncoderFlavor::compositional: return "compositional";
  }
  return "?";
}

inline EncoderFlavor flavor_from(const std::string& s) {
  if (s == "attention") return EncoderFlavor::attention;
  if (s == "relational") return EncoderFlavor::relational;
  if (s == "compositional") return EncoderFlavor::compositional;
  throw IoError("checkpoint: unknown encoder flavor '" + s + "'");
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  const ModelConfig& c = ck.config;
  out << "kgc-checkpoint v1\n";
  out << "variant " << detail::variant_name(c.variant) << '\n';
  out << "decoder " << detail::decoder_name(c.decoder) << '\n';
  if (c.encoder) {
    out << "encoder " << detail::flavor_name(c.encoder->flavor) << ' ' << c.encoder->layers << ' '
        << c.encoder->input_dim << ' ' << c.encoder->hidden_dim << ' ' << c.encoder->bases << '\n';
    if (c.encoder->distill) {
      const DistillSchedule& s = *c.encoder->distill;
      char buf[128];
      std::snprintf(buf, sizeof(buf), "distill %s %a %a %a %zu",
                    s.family == DecayFamily::linear ? "linear" : "exponential", s.alpha_start,
                    s.delta, s.gamma, s.rounds);
      out << buf << '\n';
    }
  }
  if (c.use_apim()) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "apim %zu %zu %a", c.apim.mode_count, c.apim.retained_k,
                  c.apim.lambda_frob);
    out << buf << '\n';
  }
  char buf[192];
  std::snprintf(buf, sizeof(buf), "lambda_apim %a", c.lambda_apim);
  out << buf << '\n';
  out << "embedding_dim " << c.embedding_dim << '\n';
  out << "entities " << ck.n_entities << '\n';
  out << "relations " << ck.n_relations << '\n';
  out << "best_epoch " << ck.best_epoch << '\n';
  std::snprintf(buf, sizeof(buf), "best_val_mrr %a", ck.best_val_mrr);
  out << buf << '\n';
  out << "config_echo " << ck.config_echo.size() << '\n';
  for (const auto& [k, v] : ck.config_echo) out << k << " = " << v << '\n';
  out << "params " << ck.parameters.size() << '\n';
  for (const auto& [name, t] : ck.parameters) {
    out << name << ' ' << t.shape.size();
    for (std::size_t d : t.shape) out << ' ' << d;
    out << '\n';
  }
  out << "BLOB\n";
  for (const auto& [name, t] : ck.parameters) {
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
  if (!out) throw IoError("short write on checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::string line;
  auto next_line = [&]() -> std::string& {
    if (!std::getline(in, line)) throw IoError("truncated checkpoint: " + path);
    return line;
  };
  if (next_line() != "kgc-checkpoint v1") throw IoError("not a kgc checkpoint: " + path);

  Checkpoint ck;
  ModelConfig& c = ck.config;
  std::vector<std::pair<std::string, std::vector<std::size_t>>> param_meta;
  while (true) {
    std::istringstream ls(next_line());
    std::string tag;
    ls >> tag;
    if (tag == "variant") {
      std::string v;
      ls >> v;
      c.variant = detail::variant_from(v);
    } else if (tag == "decoder") {
      std::string v;
      ls >> v;
      c.decoder = detail::decoder_from(v);
    } else if (tag == "encoder") {
      std::string flavor;
      EncoderConfig e;
      ls >> flavor >> e.layers >> e.input_dim >> e.hidden_dim >> e.bases;
      e.flavor = detail::flavor_from(flavor);
      c.encoder = e;
    } else if (tag == "distill") {
      if (!c.encoder) throw IoError("checkpoint: distill line without encoder");
      DistillSchedule s;
      std::string family, a, d, g;
      ls >> family >> a >> d >> g >> s.rounds;
      s.family = family == "linear" ? DecayFamily::linear : DecayFamily::exponential;
      s.alpha_start = std::strtod(a.c_str(), nullptr);
      s.delta = std::strtod(d.c_str(), nullptr);
      s.gamma = std::strtod(g.c_str(), nullptr);
      c.encoder->distill = s;
    } else if (tag == "apim") {
      std::string l;
      ls >> c.apim.mode_count >> c.apim.retained_k >> l;
      c.apim.lambda_frob = std::strtod(l.c_str(), nullptr);
    } else if (tag == "lambda_apim") {
      std::string l;
      ls >> l;
      c.lambda_apim = std::strtod(l.c_str(), nullptr);
    } else if (tag == "embedding_dim") {
      ls >> c.embedding_dim;
    } else if (tag == "entities") {
      ls >> ck.n_entities;
    } else if (tag == "relations") {
      ls >> ck.n_relations;
    } else if (tag == "best_epoch") {
      ls >> ck.best_epoch;
    } else if (tag == "best_val_mrr") {
      std::string l;
      ls >> l;
      ck.best_val_mrr = std::strtod(l.c_str(), nullptr);
    } else if (tag == "config_echo") {
      std::size_t n = 0;
      ls >> n;
      for (std::size_t i = 0; i < n; ++i) {
        std::string& echo = next_line();
        std::size_t eq = echo.find(" = ");
        if (eq == std::string::npos) throw IoError("checkpoint: malformed echo line");
        ck.config_echo.emplace_back(echo.substr(0, eq), echo.substr(eq + 3));
      }
    } else if (tag == "params") {
      std::size_t n = 0;
      ls >> n;
      for (std::size_t i = 0; i < n; ++i) {
        std::istringstream ps(next_line());
        std::string name;
        std::size_t rank = 0;
        ps >> name >> rank;
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) ps >> d;
        param_meta.emplace_back(name, shape);
      }
      if (next_line() != "BLOB") throw IoError("checkpoint: missing BLOB marker");
      break;
    } else {
      throw IoError("checkpoint: unknown header line '" + line + "'");
    }
  }
  for (auto& [name, shape] : param_meta) {
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!in) throw IoError("checkpoint blob truncated: " + path);
    ck.parameters.emplace_back(name, std::move(t));
  }
  return ck;
}

// Rebuilds a trainable model holding the checkpoint's parameters.
inline Model model_from_checkpoint(const Checkpoint& ck, std::uint64_t seed = 0) {
  Model m = make_model(ck.config, ck.n_entities, ck.n_relations, seed);
  detail::restore_params(m, ck.parameters);
  return m;
}

}  // namespace kgc
