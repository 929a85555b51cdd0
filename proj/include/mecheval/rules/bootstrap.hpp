#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <span>
#include <vector>

#include "mecheval/core/error.hpp"
#include "mecheval/core/parallel.hpp"
#include "mecheval/core/random.hpp"

namespace mecheval {

struct ConfidenceInterval {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;

  bool operator==(const ConfidenceInterval&) const = default;
};

struct BootstrapSettings {
  double confidence = 0.95;
  std::size_t resamples = 10000;
  std::uint64_t seed = 20240601;

  bool operator==(const BootstrapSettings&) const = default;
};

// Mean anchored on the first value so constant inputs come back exactly.
inline double anchored_mean(std::span<const double> values) {
  const double anchor = values.front();
  double acc = 0.0;
  for (double v : values) acc += v - anchor;
  return anchor + acc / static_cast<double>(values.size());
}

// Linear interpolation between order statistics; `sorted` is ascending.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto below = static_cast<std::size_t>(std::floor(pos));
  const std::size_t above = std::min(below + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(below);
  if (frac == 0.0 || sorted[below] == sorted[above]) return sorted[below];
  return sorted[below] + frac * (sorted[above] - sorted[below]);
}

// Percentile bootstrap of the mean. Resample r draws from its own stream
// seeded by (seed, r), so the result is independent of `workers`.
inline ConfidenceInterval bootstrap_ci(std::span<const double> values, double confidence, std::size_t resamples,
                                       std::uint64_t seed, std::size_t workers = 1) {
  require(!values.empty(), ErrorKind::kPipeline, "bootstrap of an empty sample");
  require(confidence > 0.0 && confidence < 1.0, ErrorKind::kConfig, "confidence must lie in (0, 1)");
  require(resamples >= 1, ErrorKind::kConfig, "resamples must be >= 1");

  ConfidenceInterval ci;
  ci.mean = anchored_mean(values);
  const std::size_t n = values.size();
  std::vector<double> means(resamples);
  parallel_for(resamples, workers, [&](std::size_t r) {
    Rng rng({seed, static_cast<std::uint64_t>(r)});
    const double anchor = values[rng.index(n)];
    double acc = 0.0;
    for (std::size_t i = 1; i < n; ++i) acc += values[rng.index(n)] - anchor;
    means[r] = anchor + acc / static_cast<double>(n);
  });
  std::sort(means.begin(), means.end());
  const double tail = (1.0 - confidence) / 2.0;
  ci.lo = std::min(quantile_sorted(means, tail), ci.mean);
  ci.hi = std::max(quantile_sorted(means, 1.0 - tail), ci.mean);
  return ci;
}

inline ConfidenceInterval bootstrap_ci(std::span<const double> values, const BootstrapSettings& s,
                                       std::size_t workers = 1) {
  return bootstrap_ci(values, s.confidence, s.resamples, s.seed, workers);
}

inline void to_json(nlohmann::json& j, const ConfidenceInterval& ci) {
  j = nlohmann::json{{"mean", ci.mean}, {"lo", ci.lo}, {"hi", ci.hi}};
}

inline void from_json(const nlohmann::json& j, ConfidenceInterval& ci) {
  ci.mean = j.at("mean").get<double>();
  ci.lo = j.at("lo").get<double>();
  ci.hi = j.at("hi").get<double>();
}

inline void to_json(nlohmann::json& j, const BootstrapSettings& s) {
  j = nlohmann::json{{"confidence", s.confidence}, {"resamples", s.resamples}, {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, BootstrapSettings& s) {
  BootstrapSettings d;
  s.confidence = j.value("confidence", d.confidence);
  s.resamples = j.value("resamples", d.resamples);
  s.seed = j.value("seed", d.seed);
}

}  // namespace mecheval
