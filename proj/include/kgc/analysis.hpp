#pragma once

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

#include "kgc/tensor.hpp"

namespace kgc {

// Mode-retention validation (cumulative signature energy and per-relation
// mode importance) plus the over-smoothing diagnostic used to compare
// encoder runs with and without distillation.

struct EnergyReport {
  std::vector<double> mean_energy;  // index k-1 holds E-bar(k)
  std::vector<bool> meets_085;
  std::size_t excluded = 0;  // all-zero signatures skipped

  std::size_t modes() const { return mean_energy.size(); }
};

// Per entity: sort the raw signature descending, E(k) = top-k mass / total
// mass; the report carries the mean over entities for each k.
inline EnergyReport energy_curve(const Tensor& signatures) {
  if (!signatures.is_matrix() || signatures.rows() < 1 || signatures.cols() < 1) {
    throw Error("energy_curve: expected a nonempty |E| x K matrix");
  }
  std::size_t n = signatures.rows(), k_modes = signatures.cols();
  EnergyReport report;
  report.mean_energy.assign(k_modes, 0.0);
  std::size_t counted = 0;
  std::vector<double> sorted(k_modes);
  for (std::size_t e = 0; e < n; ++e) {
    double total = 0.0;
    for (std::size_t j = 0; j < k_modes; ++j) {
      sorted[j] = signatures.at(e, j);
      total += sorted[j];
    }
    if (total == 0.0) {
      ++report.excluded;
      continue;
    }
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    double cum = 0.0;
    for (std::size_t j = 0; j < k_modes; ++j) {
      cum += sorted[j];
      report.mean_energy[j] += cum / total;
    }
    ++counted;
  }
  if (counted == 0) throw Error("energy_curve: every signature is all-zero");
  for (double& v : report.mean_energy) v /= static_cast<double>(counted);
  report.meets_085.reserve(k_modes);
  for (double v : report.mean_energy) report.meets_085.push_back(v >= 0.85);
  return report;
}

struct ImportanceReport {
  Tensor importance;  // |R| x K
};

// I(r,k) = mean over entities of a_e[k] * sum_j P_r[k,j]. Raw (unmasked)
// signatures enter here, and modes keep their native index order.
inline ImportanceReport mode_importance(const Tensor& signatures,
                                        const std::vector<Tensor>& transitions) {
  if (!signatures.is_matrix()) throw ShapeError("mode_importance: signatures must be a matrix");
  std::size_t n = signatures.rows(), k_modes = signatures.cols();
  std::vector<double> mean_sig(k_modes, 0.0);
  for (std::size_t e = 0; e < n; ++e) {
    for (std::size_t j = 0; j < k_modes; ++j) mean_sig[j] += signatures.at(e, j);
  }
  for (double& v : mean_sig) v /= static_cast<double>(n);

  ImportanceReport report;
  report.importance = Tensor({transitions.size(), k_modes});
  for (std::size_t r = 0; r < transitions.size(); ++r) {
    const Tensor& p = transitions[r];
    if (!p.is_matrix() || p.rows() != k_modes || p.cols() != k_modes) {
      throw ShapeError("mode_importance: transition " + p.shape_str() + " does not match K=" +
                       std::to_string(k_modes));
    }
    for (std::size_t k = 0; k < k_modes; ++k) {
      double row_sum = 0.0;
      for (std::size_t j = 0; j < k_modes; ++j) row_sum += p.at(k, j);
      report.importance.at(r, k) = mean_sig[k] * row_sum;
    }
  }
  return report;
}

struct OversmoothingProfile {
  std::vector<double> mean_distance;  // one value per layer state
  std::size_t skipped_pairs = 0;      // pairs with a zero-norm member
};

// Per layer: mean pairwise cosine distance (1 - cos) over entity pairs;
// above 150 entities, 10,000 sampled pairs (seeded) stand in for the full
// quadratic sweep.
inline OversmoothingProfile oversmoothing_profile(const std::vector<Tensor>& layer_states,
                                                  std::uint64_t seed = 0) {
  if (layer_states.empty()) throw Error("oversmoothing_profile: no layer states");
  OversmoothingProfile profile;
  for (const Tensor& states : layer_states) {
    std::size_t n = states.rows(), d = states.cols();
    if (n < 2) throw Error("oversmoothing_profile: need at least 2 entities");
    std::vector<double> norms(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += states.at(i, j) * states.at(i, j);
      norms[i] = std::sqrt(s);
    }
    auto pair_distance = [&](std::size_t a, std::size_t b, double& acc, std::size_t& cnt) {
      if (norms[a] == 0.0 || norms[b] == 0.0) {
        ++profile.skipped_pairs;
        return;
      }
      double dp = 0.0;
      for (std::size_t j = 0; j < d; ++j) dp += states.at(a, j) * states.at(b, j);
      acc += 1.0 - dp / (norms[a] * norms[b]);
      ++cnt;
    };
    double acc = 0.0;
    std::size_t cnt = 0;
    if (n <= 150) {
      for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) pair_distance(a, b, acc, cnt);
      }
    } else {
      Rng rng(seed);
      for (std::size_t s = 0; s < 10000; ++s) {
        std::size_t a = rng.below(n);
        std::size_t b = rng.below(n - 1);
        if (b >= a) ++b;
        pair_distance(a, b, acc, cnt);
      }
    }
    profile.mean_distance.push_back(cnt == 0 ? 0.0 : acc / static_cast<double>(cnt));
  }
  return profile;
}

// ---- CSV emitters (plot-ready, no rendering here) ----

inline void write_energy_csv(const EnergyReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "k,mean_energy,meets_085\n";
  for (std::size_t k = 0; k < r.modes(); ++k) {
    out << (k + 1) << ',' << r.mean_energy[k] << ',' << (r.meets_085[k] ? 1 : 0) << '\n';
  }
}

inline void write_importance_csv(const ImportanceReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "relation_id,k,importance\n";
  for (std::size_t rel = 0; rel < r.importance.rows(); ++rel) {
    for (std::size_t k = 0; k < r.importance.cols(); ++k) {
      out << rel << ',' << (k + 1) << ',' << r.importance.at(rel, k) << '\n';
    }
  }
}

inline void write_oversmoothing_csv(const OversmoothingProfile& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "layer,mad\n";
  for (std::size_t l = 0; l < p.mean_distance.size(); ++l) {
    out << l << ',' << p.mean_distance[l] << '\n';
  }
}

}  // namespace kgc
