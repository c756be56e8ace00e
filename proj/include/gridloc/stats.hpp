#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>

#include "gridloc/corpus.hpp"
#include "gridloc/error.hpp"
#include "gridloc/rng.hpp"

namespace gridloc {

struct StatsConfig {
  int replicates = 1000;
  std::uint64_t seed = 0;

  void validate() const {
    if (replicates < 1) throw Error("bootstrap needs at least one replicate");
  }
};

/// Bootstrap spread of a hit rate: resample the outcome vector with
/// replacement `replicates` times and take the population standard deviation
/// of the replicate means. Each replicate derives its generator from
/// (seed, replicate index), so results are deterministic and replicates are
/// order-independent. Resampling is over tasks (images), not patients.
inline double bootstrap_std(std::span<const std::uint8_t> outcomes,
                            const StatsConfig& cfg) {
  cfg.validate();
  const std::size_t n = outcomes.size();
  if (n == 0) throw Error("bootstrap over an empty outcome list");
  const std::size_t reps = static_cast<std::size_t>(cfg.replicates);
  std::vector<double> means(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    Rng rng(derive_seed(cfg.seed, r));
    std::uint64_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      hits += outcomes[rng.below(n)] ? 1 : 0;
    }
    means[r] = static_cast<double>(hits) / static_cast<double>(n);
  }
  double mean = 0.0;
  for (double m : means) mean += m;
  mean /= static_cast<double>(reps);
  double var = 0.0;
  for (double m : means) var += (m - mean) * (m - mean);
  var /= static_cast<double>(reps);
  return std::sqrt(var);
}

/// Unweighted arithmetic mean over the pathologies present.
inline double macro_average(const std::map<Pathology, double>& rates) {
  if (rates.empty()) throw Error("macro_average over an empty map");
  double sum = 0.0;
  for (const auto& [p, r] : rates) sum += r;
  return sum / static_cast<double>(rates.size());
}

}  // namespace gridloc
