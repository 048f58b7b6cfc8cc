#pragma once

#include <cmath>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mixaudit/error.hpp"
#include "mixaudit/format.hpp"
#include "mixaudit/taxonomy.hpp"

namespace mixaudit {

inline constexpr double kSimplexTolerance = 1e-9;

enum class MixtureRole { kGroundTruth, kEffectivePrior, kEstimate, kObservation };

inline std::string to_string(MixtureRole role) {
  switch (role) {
    case MixtureRole::kGroundTruth: return "ground_truth";
    case MixtureRole::kEffectivePrior: return "effective_prior";
    case MixtureRole::kEstimate: return "estimate";
    case MixtureRole::kObservation: return "observation";
  }
  return "unknown";
}

inline MixtureRole parse_role(const std::string& name) {
  if (name == "ground_truth") return MixtureRole::kGroundTruth;
  if (name == "effective_prior") return MixtureRole::kEffectivePrior;
  if (name == "estimate") return MixtureRole::kEstimate;
  if (name == "observation") return MixtureRole::kObservation;
  throw DataError("unknown mixture role '" + name + "'");
}

inline bool on_simplex(std::span<const double> values, double tolerance = kSimplexTolerance) {
  double sum = 0.0;
  for (double v : values) {
    if (!std::isfinite(v) || v < 0.0) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= tolerance;
}

// A point on the probability simplex over a taxonomy's domains.
class MixtureVector {
 public:
  MixtureVector(std::vector<double> values, DomainTaxonomy taxonomy, MixtureRole role)
      : values_(std::move(values)), taxonomy_(std::move(taxonomy)), role_(role) {
    if (values_.size() != taxonomy_.size()) {
      throw DataError("mixture has " + std::to_string(values_.size()) + " values for a taxonomy of " +
                      std::to_string(taxonomy_.size()) + " domains");
    }
    if (!on_simplex(values_)) throw DataError("mixture vector is not on the probability simplex");
  }

  const std::vector<double>& values() const noexcept { return values_; }
  double operator[](std::size_t k) const { return values_.at(k); }
  std::size_t size() const noexcept { return values_.size(); }
  const DomainTaxonomy& taxonomy() const noexcept { return taxonomy_; }
  MixtureRole role() const noexcept { return role_; }

  MixtureVector with_role(MixtureRole role) const {
    MixtureVector copy = *this;
    copy.role_ = role;
    return copy;
  }

  static MixtureVector uniform(const DomainTaxonomy& taxonomy, MixtureRole role) {
    return MixtureVector(std::vector<double>(taxonomy.size(), 1.0 / static_cast<double>(taxonomy.size())),
                         taxonomy, role);
  }

  friend bool operator==(const MixtureVector&, const MixtureVector&) = default;

 private:
  std::vector<double> values_;
  DomainTaxonomy taxonomy_;
  MixtureRole role_;
};

inline nlohmann::ordered_json mixture_to_json(const MixtureVector& m) {
  nlohmann::ordered_json out;
  out["role"] = to_string(m.role());
  out["taxonomy"] = m.taxonomy().labels();
  auto values = nlohmann::ordered_json::array();
  for (double v : m.values()) values.push_back(round_real(v));
  out["values"] = values;
  return out;
}

template <typename Json>
MixtureVector mixture_from_json(const Json& j) {
  try {
    const auto role = j.contains("role") ? parse_role(j.at("role").template get<std::string>())
                                         : MixtureRole::kEstimate;
    return MixtureVector(j.at("values").template get<std::vector<double>>(),
                         DomainTaxonomy(j.at("taxonomy").template get<std::vector<std::string>>()), role);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed mixture JSON: ") + e.what());
  }
}

// Mixture file: JSON object with "taxonomy" (names) and "values"; extra keys ignored.
inline MixtureVector load_mixture(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open mixture file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed mixture file " + path + ": " + e.what());
  }
  return mixture_from_json(j);
}

}  // namespace mixaudit
