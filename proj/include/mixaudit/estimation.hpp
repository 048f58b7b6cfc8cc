#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mixaudit/calibration.hpp"
#include "mixaudit/classifier.hpp"
#include "mixaudit/error.hpp"
#include "mixaudit/format.hpp"
#include "mixaudit/linalg.hpp"
#include "mixaudit/mixture.hpp"

namespace mixaudit {

// Mean classifier output over the observed corpus (fixed pairwise summation order).
inline MixtureVector empirical_mean(const std::vector<std::vector<double>>& predictions,
                                    const DomainTaxonomy& taxonomy) {
  if (predictions.empty()) throw DataError("empirical mean of an empty corpus");
  const std::size_t k = taxonomy.size();
  for (const auto& p : predictions) {
    if (p.size() != k) throw DataError("prediction length does not match taxonomy");
  }
  auto sum = pairwise_sum(0, predictions.size(), k,
                          [&](std::size_t n) -> const std::vector<double>& { return predictions[n]; });
  for (double& v : sum) v /= static_cast<double>(predictions.size());
  return MixtureVector(std::move(sum), taxonomy, MixtureRole::kObservation);
}

inline MixtureVector empirical_mean(const ClassifierModel& model, const std::vector<Document>& corpus) {
  if (corpus.empty()) throw DataError("empirical mean of an empty corpus");
  return empirical_mean(predict_all(model, corpus), model.taxonomy());
}

// Euclidean projection onto the probability simplex (sort-based threshold).
inline std::vector<double> project_to_simplex(std::span<const double> v) {
  if (v.empty()) throw DataError("cannot project an empty vector");
  for (double x : v) {
    if (!std::isfinite(x)) throw DataError("cannot project a vector with non-finite entries");
  }
  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double prefix = 0.0;
  double theta = 0.0;
  for (std::size_t rho = 1; rho <= u.size(); ++rho) {
    prefix += u[rho - 1];
    const double candidate = (prefix - 1.0) / static_cast<double>(rho);
    if (u[rho - 1] - candidate > 0.0) theta = candidate;
  }
  std::vector<double> out(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = std::max(v[k] - theta, 0.0);
  return out;
}

inline MixtureVector project_to_simplex(std::span<const double> v, const DomainTaxonomy& taxonomy,
                                        MixtureRole role = MixtureRole::kEstimate) {
  return MixtureVector(project_to_simplex(v), taxonomy, role);
}

struct SolverOptions {
  double tolerance = 1e-12;  // on the infinity-norm change of the iterate
  std::size_t max_iters = 100000;
  std::uint64_t seed = 0;    // the solver is deterministic; kept for run records
  // When non-zero, the objective is recorded every `trace_every` iterations.
  std::size_t trace_every = 0;
};

struct SolverResult {
  MixtureVector estimate;
  double objective = 0.0;  // ||C^T pi - p||^2
  std::size_t iterations = 0;
  bool converged = false;
  double gap = 0.0;  // infinity norm of the final projected-gradient step
  std::vector<double> objective_trace;
};

inline double reconstruction_objective(const Matrix& c, std::span<const double> pi, std::span<const double> observed) {
  const auto predicted = transpose_times(c, pi);
  double total = 0.0;
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    const double r = predicted[k] - observed[k];
    total += r * r;
  }
  return total;
}

// argmin over the simplex of ||C^T pi - p||^2 by projected gradient descent
// with constant step 1/L, L = 2 * lambda_max(C C^T), started at the uniform vector.
inline SolverResult solve_inverse(const ConfusionMatrix& c, const MixtureVector& observed,
                                  const SolverOptions& options = {}) {
  require_same_taxonomy(c.taxonomy(), observed.taxonomy(), "solve_inverse");
  const Matrix& cm = c.entries();
  const std::size_t k = c.size();
  const double lambda_max = jacobi_eigenvalues(cm * cm.transpose()).back();
  if (!(lambda_max > 0.0) || !std::isfinite(lambda_max)) throw DataError("confusion matrix has no positive eigenvalue");
  const double step = 1.0 / (2.0 * lambda_max);

  const auto& p = observed.values();
  std::vector<double> pi(k, 1.0 / static_cast<double>(k));
  std::vector<double> trial(k);
  SolverResult result{MixtureVector::uniform(c.taxonomy(), MixtureRole::kEstimate)};
  if (options.trace_every > 0) result.objective_trace.push_back(reconstruction_objective(cm, pi, p));

  std::size_t iter = 0;
  double change = 0.0;
  while (iter < options.max_iters) {
    auto residual = transpose_times(cm, pi);
    for (std::size_t j = 0; j < k; ++j) residual[j] -= p[j];
    const auto grad = times(cm, residual);  // half the gradient
    for (std::size_t j = 0; j < k; ++j) trial[j] = pi[j] - step * 2.0 * grad[j];
    auto next = project_to_simplex(trial);
    change = 0.0;
    for (std::size_t j = 0; j < k; ++j) change = std::max(change, std::abs(next[j] - pi[j]));
    pi = std::move(next);
    ++iter;
    if (options.trace_every > 0 && iter % options.trace_every == 0) {
      result.objective_trace.push_back(reconstruction_objective(cm, pi, p));
    }
    if (change <= options.tolerance) {
      result.converged = true;
      break;
    }
  }
  result.objective = reconstruction_objective(cm, pi, p);
  if (!std::isfinite(result.objective)) throw DataError("non-finite objective in solve_inverse");
  result.iterations = iter;
  result.gap = change;
  result.estimate = MixtureVector(std::move(pi), c.taxonomy(), MixtureRole::kEstimate);
  return result;
}

// The uncorrected estimator: the aggregated classifier output taken as is.
inline MixtureVector direct_estimate(const MixtureVector& observed) { return observed.with_role(MixtureRole::kEstimate); }

// ---------------------------------------------------------------------------
// Estimate export
// ---------------------------------------------------------------------------

struct EstimateRecord {
  MixtureVector estimate;
  std::string method;  // "surgeon" or "direct"
  double objective = 0.0;
  std::size_t iterations = 0;
  bool converged = true;
  std::optional<ConditionNumber> condition;
};

inline nlohmann::ordered_json estimate_to_json(const EstimateRecord& rec) {
  auto j = mixture_to_json(rec.estimate);
  j["method"] = rec.method;
  j["objective"] = round_real(rec.objective);
  j["iterations"] = rec.iterations;
  j["converged"] = rec.converged;
  if (rec.condition) {
    j["condition_number"] = rec.condition->singular ? nlohmann::ordered_json(nullptr)
                                                    : nlohmann::ordered_json(round_real(rec.condition->value));
    j["condition_singular"] = rec.condition->singular;
  } else {
    j["condition_number"] = nullptr;
    j["condition_singular"] = nullptr;
  }
  return j;
}

inline void save_estimate(const EstimateRecord& rec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write estimate file: " + path);
  out << estimate_to_json(rec).dump(2) << '\n';
}

}  // namespace mixaudit
