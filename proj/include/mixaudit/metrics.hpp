#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "mixaudit/error.hpp"
#include "mixaudit/format.hpp"
#include "mixaudit/mixture.hpp"

namespace mixaudit {

// The span overloads take raw vectors, e.g. published tables whose rounded
// entries do not sum exactly to one.

inline void require_same_length(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw DataError("metric inputs must have the same non-zero length");
}

// 1 - TV(alpha, pi_hat) = 1 - 0.5 * sum_k |alpha_k - pi_hat_k|
inline double overlap_accuracy(std::span<const double> alpha, std::span<const double> pi_hat) {
  require_same_length(alpha, pi_hat);
  double total = 0.0;
  for (std::size_t k = 0; k < alpha.size(); ++k) total += std::abs(alpha[k] - pi_hat[k]);
  return 1.0 - 0.5 * total;
}

inline double mean_absolute_error(std::span<const double> alpha, std::span<const double> pi_hat) {
  require_same_length(alpha, pi_hat);
  double total = 0.0;
  for (std::size_t k = 0; k < alpha.size(); ++k) total += std::abs(alpha[k] - pi_hat[k]);
  return total / static_cast<double>(alpha.size());
}

// Residuals of pi_hat against alpha over the spread of alpha about its mean.
// Undefined (nullopt) when alpha is constant.
inline std::optional<double> r_squared(std::span<const double> alpha, std::span<const double> pi_hat) {
  require_same_length(alpha, pi_hat);
  if (alpha.size() < 2) throw DataError("r_squared needs at least 2 domains");
  double mean = 0.0;
  for (double a : alpha) mean += a;
  mean /= static_cast<double>(alpha.size());
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    ss_res += (alpha[k] - pi_hat[k]) * (alpha[k] - pi_hat[k]);
    ss_tot += (alpha[k] - mean) * (alpha[k] - mean);
  }
  if (ss_tot == 0.0) return std::nullopt;
  return 1.0 - ss_res / ss_tot;
}

inline double overlap_accuracy(const MixtureVector& alpha, const MixtureVector& pi_hat) {
  require_same_taxonomy(alpha.taxonomy(), pi_hat.taxonomy(), "overlap_accuracy");
  return overlap_accuracy(alpha.values(), pi_hat.values());
}

inline double mean_absolute_error(const MixtureVector& alpha, const MixtureVector& pi_hat) {
  require_same_taxonomy(alpha.taxonomy(), pi_hat.taxonomy(), "mean_absolute_error");
  return mean_absolute_error(alpha.values(), pi_hat.values());
}

inline std::optional<double> r_squared(const MixtureVector& alpha, const MixtureVector& pi_hat) {
  require_same_taxonomy(alpha.taxonomy(), pi_hat.taxonomy(), "r_squared");
  return r_squared(alpha.values(), pi_hat.values());
}

struct MetricReport {
  double overlap_accuracy = 0.0;
  double mae = 0.0;
  std::optional<double> r_squared;
  std::vector<double> per_domain_abs_error;

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

inline MetricReport evaluate(const MixtureVector& alpha, const MixtureVector& pi_hat) {
  require_same_taxonomy(alpha.taxonomy(), pi_hat.taxonomy(), "evaluate");
  MetricReport report;
  report.overlap_accuracy = overlap_accuracy(alpha, pi_hat);
  report.mae = mean_absolute_error(alpha, pi_hat);
  report.r_squared = r_squared(alpha, pi_hat);
  for (std::size_t k = 0; k < alpha.size(); ++k) report.per_domain_abs_error.push_back(std::abs(alpha[k] - pi_hat[k]));
  return report;
}

inline nlohmann::ordered_json metrics_to_json(const MetricReport& m) {
  nlohmann::ordered_json j;
  j["overlap_accuracy"] = round_real(m.overlap_accuracy);
  j["mae"] = round_real(m.mae);
  j["r_squared"] = m.r_squared ? nlohmann::ordered_json(round_real(*m.r_squared)) : nlohmann::ordered_json(nullptr);
  auto errs = nlohmann::ordered_json::array();
  for (double e : m.per_domain_abs_error) errs.push_back(round_real(e));
  j["per_domain_abs_error"] = errs;
  return j;
}

template <typename Json>
MetricReport metrics_from_json(const Json& j) {
  MetricReport m;
  m.overlap_accuracy = j.at("overlap_accuracy").template get<double>();
  m.mae = j.at("mae").template get<double>();
  if (!j.at("r_squared").is_null()) m.r_squared = j.at("r_squared").template get<double>();
  m.per_domain_abs_error = j.at("per_domain_abs_error").template get<std::vector<double>>();
  return m;
}

}  // namespace mixaudit
