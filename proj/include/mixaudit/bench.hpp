#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mixaudit/baselines.hpp"
#include "mixaudit/calibration.hpp"
#include "mixaudit/classifier.hpp"
#include "mixaudit/corpus.hpp"
#include "mixaudit/error.hpp"
#include "mixaudit/estimation.hpp"
#include "mixaudit/format.hpp"
#include "mixaudit/metrics.hpp"
#include "mixaudit/mixture.hpp"
#include "mixaudit/random.hpp"

namespace mixaudit {

inline constexpr int kReportFormatVersion = 1;

// Held-out documents of one domain; the empirical stand-in for that domain's
// text distribution.
struct DomainPool {
  std::size_t domain = 0;
  std::vector<Document> documents;
};

inline std::vector<DomainPool> make_pools(const std::vector<LabeledDocument>& docs, const DomainTaxonomy& taxonomy) {
  std::vector<DomainPool> pools(taxonomy.size());
  for (std::size_t d = 0; d < pools.size(); ++d) pools[d].domain = d;
  for (const auto& item : docs) {
    if (item.domain >= taxonomy.size()) throw DataError("pool document outside the taxonomy");
    pools[item.domain].documents.push_back(item.doc);
  }
  return pools;
}

struct MixtureSpec {
  MixtureVector alpha;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
};

struct SampledCorpus {
  std::vector<Document> documents;
  std::vector<std::size_t> hidden_labels;

  // Domain frequencies of the drawn labels.
  std::vector<double> label_frequencies(std::size_t num_domains) const {
    std::vector<double> freq(num_domains, 0.0);
    for (auto l : hidden_labels) freq[l] += 1.0;
    for (double& f : freq) f /= static_cast<double>(hidden_labels.size());
    return freq;
  }
};

// N i.i.d. draws: a domain from alpha, then a uniform document (with
// replacement) from that domain's pool.
inline SampledCorpus sample_mixture_corpus(const std::vector<DomainPool>& pools, const MixtureSpec& spec) {
  const std::size_t k = spec.alpha.size();
  if (pools.size() != k) throw DataError("pools do not cover the taxonomy");
  if (spec.n_samples == 0) throw DataError("n_samples must be at least 1");
  std::vector<double> cumulative(k);
  double total = 0.0;
  for (std::size_t d = 0; d < k; ++d) {
    if (pools[d].domain != d) throw DataError("pools must be ordered by domain index");
    if (spec.alpha[d] > 0.0 && pools[d].documents.empty()) {
      throw DataError("empty pool for domain '" + spec.alpha.taxonomy().name(d) + "' with positive mixture weight");
    }
    total += spec.alpha[d];
    cumulative[d] = total;
  }
  Rng rng(spec.seed);
  SampledCorpus out;
  out.documents.reserve(spec.n_samples);
  out.hidden_labels.reserve(spec.n_samples);
  for (std::size_t n = 0; n < spec.n_samples; ++n) {
    // Zero-weight domains sit on flat steps of the cumulative table and are never chosen.
    const std::size_t d = sample_cumulative(cumulative, rng);
    const auto& pool = pools[d].documents;
    out.documents.push_back(pool[uniform_index(rng, pool.size())]);
    out.hidden_labels.push_back(d);
  }
  return out;
}

struct PipelineConfig {
  ClassifierConfig classifier;
  SolverOptions solver;
  double heldout_fraction = 0.2;
  std::uint64_t split_seed = 20240601;
  bool temperature_scaling = false;
  std::optional<double> mia_threshold;
};

// Everything fixed before the observed corpus is seen: the frozen classifier
// and its soft confusion matrix.
struct CalibratedAuditor {
  ClassifierModel model;
  ConfusionMatrix confusion;
  ConditionNumber condition;
  double heldout_accuracy = 0.0;
  std::vector<std::string> warnings;
  std::vector<std::pair<std::string, double>> timings;
};

namespace detail {

class StageTimer {
 public:
  explicit StageTimer(std::vector<std::pair<std::string, double>>& sink) : sink_(sink) {}

  template <typename F>
  auto run(const std::string& stage, F&& body) {
    const auto start = std::chrono::steady_clock::now();
    auto record = [&] {
      const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
      sink_.emplace_back(stage, elapsed.count());
    };
    try {
      if constexpr (std::is_void_v<decltype(body())>) {
        body();
        record();
      } else {
        auto result = body();
        record();
        return result;
      }
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(stage, e.what());
    }
  }

 private:
  std::vector<std::pair<std::string, double>>& sink_;
};

}  // namespace detail

// Split, train, and estimate C on the held-out half.
inline CalibratedAuditor calibrate_auditor(const std::vector<LabeledDocument>& reference, const DomainTaxonomy& taxonomy,
                                           const PipelineConfig& config) {
  std::vector<std::pair<std::string, double>> timings;
  detail::StageTimer timer(timings);
  SplitPair split = timer.run("split", [&] { return stratified_split(reference, config.heldout_fraction, config.split_seed); });
  ClassifierModel model = timer.run("train", [&] { return train_classifier(split, taxonomy, config.classifier); });

  std::vector<LabeledDocument> c_docs = split.heldout;
  if (config.temperature_scaling) {
    model = timer.run("temperature", [&] {
      SplitPair sub = stratified_split(split.heldout, 0.5, config.split_seed ^ 0x5DEECE66DULL);
      c_docs = sub.train;
      return model.with_temperature(fit_temperature(model, sub.heldout));
    });
  }
  ConfusionMatrix confusion = timer.run("calibrate", [&] { return estimate_confusion_matrix(model, c_docs); });
  const ConditionNumber cond = condition_number(confusion);
  const double accuracy = classification_accuracy(model, split.heldout);
  return CalibratedAuditor{std::move(model), std::move(confusion), cond, accuracy, split.warnings, std::move(timings)};
}

struct NamedEstimate {
  std::string name;
  MixtureVector estimate;
  MetricReport metrics;
};

struct BenchReport {
  int version = kReportFormatVersion;
  MixtureSpec spec;
  DomainTaxonomy taxonomy;
  std::vector<NamedEstimate> estimates;  // surgeon, direct, then mia when scores were supplied
  MixtureVector observed;                // mean classifier output over the sampled corpus
  std::vector<double> sampled_frequencies;
  ConditionNumber condition;
  double classifier_heldout_accuracy = 0.0;
  double solver_objective = 0.0;
  std::size_t solver_iterations = 0;
  bool solver_converged = false;
  Matrix confusion;
  std::vector<std::string> warnings;
  std::vector<std::pair<std::string, double>> timings;  // seconds per stage

  const NamedEstimate& find(const std::string& name) const {
    for (const auto& e : estimates)
      if (e.name == name) return e;
    throw DataError("report has no estimate named '" + name + "'");
  }
};

// Sample the observed corpus, aggregate, invert, and score every estimator.
inline BenchReport evaluate_auditor(const CalibratedAuditor& auditor, const std::vector<DomainPool>& pools,
                                    const MixtureSpec& spec, const PipelineConfig& config,
                                    const std::vector<ScoreRecord>* mia_records = nullptr) {
  require_same_taxonomy(spec.alpha.taxonomy(), auditor.model.taxonomy(), "evaluate_auditor");
  BenchReport report{kReportFormatVersion, spec, auditor.model.taxonomy(), {},
                     MixtureVector::uniform(auditor.model.taxonomy(), MixtureRole::kObservation)};
  report.timings = auditor.timings;
  report.warnings = auditor.warnings;
  detail::StageTimer timer(report.timings);

  const SampledCorpus sampled = timer.run("sample", [&] { return sample_mixture_corpus(pools, spec); });
  report.sampled_frequencies = sampled.label_frequencies(spec.alpha.size());
  report.observed = timer.run("aggregate", [&] { return empirical_mean(auditor.model, sampled.documents); });
  const SolverResult solved = timer.run("invert", [&] { return solve_inverse(auditor.confusion, report.observed, config.solver); });
  const MixtureVector direct = direct_estimate(report.observed);

  report.estimates.push_back({"surgeon", solved.estimate, evaluate(spec.alpha, solved.estimate)});
  report.estimates.push_back({"direct", direct, evaluate(spec.alpha, direct)});
  if (mia_records != nullptr) {
    const MixtureVector mia = timer.run("mia", [&] {
      return aggregate_mia_scores(*mia_records, config.mia_threshold, auditor.model.taxonomy());
    });
    report.estimates.push_back({"mia", mia, evaluate(spec.alpha, mia)});
  }
  report.condition = auditor.condition;
  report.classifier_heldout_accuracy = auditor.heldout_accuracy;
  report.solver_objective = solved.objective;
  report.solver_iterations = solved.iterations;
  report.solver_converged = solved.converged;
  report.confusion = auditor.confusion.entries();
  return report;
}

// Full pipeline: optional merge, split, train, calibrate, sample, aggregate,
// invert, direct baseline, optional MIA aggregation, metrics.
inline BenchReport run_end_to_end(const Corpus& train_corpus, const Corpus& eval_pools, const MixtureVector& alpha,
                                  std::size_t n_samples, std::uint64_t sample_seed, const PipelineConfig& config,
                                  const ScoreFile* mia_scores = nullptr, const MergeMapping* merge = nullptr) {
  if (!train_corpus.is_labeled()) throw StageError("load", "training corpus must be labeled");
  if (!eval_pools.is_labeled()) throw StageError("load", "evaluation pools must be labeled");
  if (!(*train_corpus.taxonomy == *eval_pools.taxonomy)) {
    throw StageError("load", "training corpus and evaluation pools use different taxonomies");
  }
  DomainTaxonomy taxonomy = *train_corpus.taxonomy;
  std::vector<LabeledDocument> reference = train_corpus.labeled;
  std::vector<LabeledDocument> pool_docs = eval_pools.labeled;
  MixtureVector truth = alpha.with_role(MixtureRole::kGroundTruth);
  std::vector<ScoreRecord> mia_records;
  if (mia_scores != nullptr) {
    if (!(mia_scores->taxonomy == taxonomy)) throw StageError("load", "score file taxonomy differs from the corpus");
    mia_records = mia_scores->records;
  }
  try {
    require_same_taxonomy(truth.taxonomy(), taxonomy, "ground-truth mixture");
    if (merge != nullptr) {
      require_same_taxonomy(merge->original(), taxonomy, "merge mapping");
      reference = apply_merge(*merge, reference);
      pool_docs = apply_merge(*merge, pool_docs);
      truth = merge_mixture(*merge, truth);
      for (auto& r : mia_records) r.domain = merge->group_of(r.domain);
      taxonomy = merge->merged();
    }
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError("merge", e.what());
  }

  const CalibratedAuditor auditor = calibrate_auditor(reference, taxonomy, config);
  const MixtureSpec spec{truth, n_samples, sample_seed};
  return evaluate_auditor(auditor, make_pools(pool_docs, taxonomy), spec, config,
                          mia_scores != nullptr ? &mia_records : nullptr);
}

inline BenchReport run_end_to_end(const std::string& train_path, const std::string& eval_path,
                                  const MixtureVector& alpha, std::size_t n_samples, std::uint64_t sample_seed,
                                  const PipelineConfig& config, const std::string& mia_scores_path = {},
                                  const std::string& merge_path = {}) {
  Corpus train;
  Corpus eval;
  std::optional<ScoreFile> scores;
  std::optional<MergeMapping> merge;
  try {
    train = load_corpus(train_path);
    if (!train.is_labeled()) throw DataError("training corpus must be labeled");
    eval = load_corpus(eval_path, &*train.taxonomy);
    if (!mia_scores_path.empty()) scores = load_score_csv(mia_scores_path, &*train.taxonomy);
    if (!merge_path.empty()) merge = load_merge_mapping(merge_path, *train.taxonomy);
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError("load", e.what());
  }
  return run_end_to_end(train, eval, alpha, n_samples, sample_seed, config, scores ? &*scores : nullptr,
                        merge ? &*merge : nullptr);
}

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json report_to_json(const BenchReport& r) {
  using oj = nlohmann::ordered_json;
  oj j;
  j["format"] = "mixaudit-bench-report";
  j["version"] = r.version;
  j["taxonomy"] = r.taxonomy.labels();
  j["spec"] = {{"alpha", mixture_to_json(r.spec.alpha)["values"]},
               {"n_samples", r.spec.n_samples},
               {"seed", r.spec.seed}};
  oj estimates = oj::object();
  oj metrics = oj::object();
  for (const auto& e : r.estimates) {
    estimates[e.name] = mixture_to_json(e.estimate)["values"];
    metrics[e.name] = metrics_to_json(e.metrics);
  }
  j["estimates"] = estimates;
  j["metrics"] = metrics;
  j["observed"] = mixture_to_json(r.observed)["values"];
  oj freq = oj::array();
  for (double f : r.sampled_frequencies) freq.push_back(round_real(f));
  j["sampled_frequencies"] = freq;
  j["condition_number"] = r.condition.singular ? oj(nullptr) : oj(round_real(r.condition.value));
  j["condition_singular"] = r.condition.singular;
  j["classifier_heldout_accuracy"] = round_real(r.classifier_heldout_accuracy);
  j["solver"] = {{"objective", round_real(r.solver_objective)},
                 {"iterations", r.solver_iterations},
                 {"converged", r.solver_converged}};
  oj rows = oj::array();
  for (std::size_t i = 0; i < r.confusion.rows(); ++i) {
    oj row = oj::array();
    for (double v : r.confusion.row(i)) row.push_back(round_real(v));
    rows.push_back(row);
  }
  j["confusion"] = rows;
  j["warnings"] = r.warnings;
  oj timings = oj::object();
  for (const auto& [stage, seconds] : r.timings) timings[stage] = round_real(seconds);
  j["timings"] = timings;
  return j;
}

inline BenchReport report_from_json(const nlohmann::ordered_json& j) {
  try {
    if (j.at("format").get<std::string>() != "mixaudit-bench-report") throw DataError("not a bench report");
    const int version = j.at("version").get<int>();
    if (version != kReportFormatVersion) throw DataError("unsupported report version " + std::to_string(version));
    DomainTaxonomy taxonomy(j.at("taxonomy").get<std::vector<std::string>>());
    auto mixture = [&](const nlohmann::ordered_json& values, MixtureRole role) {
      return MixtureVector(values.get<std::vector<double>>(), taxonomy, role);
    };
    const auto& sj = j.at("spec");
    BenchReport r{version,
                  MixtureSpec{mixture(sj.at("alpha"), MixtureRole::kGroundTruth), sj.at("n_samples").get<std::size_t>(),
                              sj.at("seed").get<std::uint64_t>()},
                  taxonomy,
                  {},
                  mixture(j.at("observed"), MixtureRole::kObservation)};
    for (auto it = j.at("estimates").begin(); it != j.at("estimates").end(); ++it) {
      r.estimates.push_back({it.key(), mixture(it.value(), MixtureRole::kEstimate),
                             metrics_from_json(j.at("metrics").at(it.key()))});
    }
    r.sampled_frequencies = j.at("sampled_frequencies").get<std::vector<double>>();
    r.condition.singular = j.at("condition_singular").get<bool>();
    r.condition.value = r.condition.singular ? std::numeric_limits<double>::infinity()
                                             : j.at("condition_number").get<double>();
    r.classifier_heldout_accuracy = j.at("classifier_heldout_accuracy").get<double>();
    r.solver_objective = j.at("solver").at("objective").get<double>();
    r.solver_iterations = j.at("solver").at("iterations").get<std::size_t>();
    r.solver_converged = j.at("solver").at("converged").get<bool>();
    r.confusion = Matrix::from_rows(j.at("confusion").get<std::vector<std::vector<double>>>());
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    for (auto it = j.at("timings").begin(); it != j.at("timings").end(); ++it) {
      r.timings.emplace_back(it.key(), it.value().get<double>());
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed bench report: ") + e.what());
  }
}

inline std::string summary_csv(const BenchReport& r) {
  std::string out = "estimator,overlap_accuracy,mae,r_squared\n";
  for (const auto& e : r.estimates) {
    out += e.name + "," + format_real(e.metrics.overlap_accuracy) + "," + format_real(e.metrics.mae) + "," +
           (e.metrics.r_squared ? format_real(*e.metrics.r_squared) : std::string("undefined")) + "\n";
  }
  return out;
}

// JSON with 12-significant-digit reals and fixed key order; optional summary CSV.
inline void emit_report(const BenchReport& report, const std::string& path, const std::string& summary_path = {}) {
  {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write report file: " + path);
    out << report_to_json(report).dump(2) << '\n';
    if (!out) throw DataError("failed writing report file: " + path);
  }
  if (!summary_path.empty()) {
    std::ofstream out(summary_path);
    if (!out) throw DataError("cannot write summary file: " + summary_path);
    out << summary_csv(report);
  }
}

inline BenchReport load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open report file: " + path);
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed report file " + path + ": " + e.what());
  }
  return report_from_json(j);
}

}  // namespace mixaudit
