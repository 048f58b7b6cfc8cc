#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mixaudit/baselines.hpp"
#include "mixaudit/bench.hpp"
#include "mixaudit/calibration.hpp"
#include "mixaudit/classifier.hpp"
#include "mixaudit/corpus.hpp"
#include "mixaudit/error.hpp"
#include "mixaudit/estimation.hpp"
#include "mixaudit/fixture.hpp"
#include "mixaudit/metrics.hpp"
#include "mixaudit/mixture.hpp"

namespace mixaudit::cli {

inline constexpr std::uint64_t kDefaultSeed = 20240601;
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

// Flags of every subcommand; each field maps to one flag.
struct RunConfig {
  std::string corpus;
  std::string taxonomy;
  std::string model;
  std::string model_out;
  std::string confusion;
  std::string scores;
  std::string truth;
  std::string estimate;
  std::string mapping;
  std::string merge;
  std::string config;
  std::string out;
  std::string summary_csv;
  std::string corpus_out;
  std::string train_out;
  std::string eval_out;
  std::string pools_out;
  std::string alpha_out;
  std::string mia_scores;

  std::uint64_t seed = kDefaultSeed;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::size_t> n_samples;
  std::string kind = "linear";
  int epochs = 10;
  double learning_rate = 0.1;
  std::size_t batch_size = 64;
  std::size_t hidden_size = 256;
  std::size_t max_features = 50000;
  std::size_t min_doc_freq = 2;
  double heldout_fraction = 0.2;
  std::optional<double> heldout_override;
  double tolerance = 1e-12;
  std::size_t max_iters = 100000;
  std::optional<double> threshold;
  bool direct = false;
  bool whole_corpus = false;
  bool temperature_scaling = false;
};

namespace detail {

// Relative output paths land under $MIXAUDIT_OUTPUT_DIR when it is set.
inline std::string output_path(const std::string& path) {
  if (path.empty()) return path;
  const char* dir = std::getenv("MIXAUDIT_OUTPUT_DIR");
  if (dir == nullptr || *dir == '\0' || std::filesystem::path(path).is_absolute()) return path;
  std::filesystem::create_directories(dir);
  return (std::filesystem::path(dir) / path).string();
}

inline ClassifierConfig classifier_config(const RunConfig& rc) {
  ClassifierConfig cfg;
  cfg.kind = parse_classifier_kind(rc.kind);
  cfg.epochs = rc.epochs;
  cfg.learning_rate = rc.learning_rate;
  cfg.batch_size = rc.batch_size;
  cfg.hidden_size = rc.hidden_size;
  cfg.seed = rc.seed;
  cfg.max_features = rc.max_features;
  cfg.min_doc_freq = rc.min_doc_freq;
  return cfg;
}

inline CLI::Validator open_unit_interval() {
  return CLI::Validator(
      [](std::string& input) -> std::string {
        double v = 0.0;
        if (!CLI::detail::lexical_cast(input, v) || !(v > 0.0 && v < 1.0)) return "value " + input + " not in (0, 1)";
        return {};
      },
      "in (0, 1)");
}

inline void add_classifier_flags(CLI::App* cmd, RunConfig& rc) {
  cmd->add_option("--kind", rc.kind, "Classifier kind")->check(CLI::IsMember({"linear", "mlp"}))->capture_default_str();
  cmd->add_option("--epochs", rc.epochs, "Training epochs")->check(CLI::Range(0, 100000))->capture_default_str();
  cmd->add_option("--learning-rate", rc.learning_rate, "Initial learning rate (decays as 1/sqrt(epoch))")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--batch-size", rc.batch_size, "Mini-batch size")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--hidden-size", rc.hidden_size, "Hidden units for --kind mlp")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--max-features", rc.max_features, "Vocabulary size cap")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--min-doc-freq", rc.min_doc_freq, "Minimum document frequency of a term")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

inline void add_solver_flags(CLI::App* cmd, RunConfig& rc) {
  cmd->add_option("--tolerance", rc.tolerance, "Solver stop tolerance on the iterate change")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--max-iters", rc.max_iters, "Solver iteration cap")->check(CLI::PositiveNumber)->capture_default_str();
}

inline SolverOptions solver_options(const RunConfig& rc) {
  SolverOptions opts;
  opts.tolerance = rc.tolerance;
  opts.max_iters = rc.max_iters;
  opts.seed = rc.seed;
  return opts;
}

inline void write_json(const nlohmann::ordered_json& j, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << j.dump(2) << '\n';
    return;
  }
  std::ofstream file(output_path(path));
  if (!file) throw DataError("cannot write " + path);
  file << j.dump(2) << '\n';
}

// Loads a labeled corpus, optionally relabeled through a merge mapping.
inline Corpus load_labeled(const std::string& path, const std::string& taxonomy_path, const std::string& merge_path) {
  std::optional<DomainTaxonomy> taxonomy;
  if (!taxonomy_path.empty()) taxonomy = load_taxonomy(taxonomy_path);
  Corpus corpus = load_corpus(path, taxonomy ? &*taxonomy : nullptr);
  if (!corpus.is_labeled()) throw DataError("corpus must be labeled: " + path);
  if (!merge_path.empty()) {
    const MergeMapping mapping = load_merge_mapping(merge_path, *corpus.taxonomy);
    corpus.labeled = apply_merge(mapping, corpus.labeled);
    corpus.taxonomy = mapping.merged();
  }
  return corpus;
}

inline void report_warnings(const std::vector<std::string>& warnings, std::ostream& err) {
  for (const auto& w : warnings) err << "warning: " << w << '\n';
}

}  // namespace detail

inline int run_train(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const Corpus corpus = detail::load_labeled(rc.corpus, rc.taxonomy, rc.merge);
  const SplitPair split = stratified_split(corpus.labeled, rc.heldout_fraction, rc.seed);
  detail::report_warnings(split.warnings, err);
  const ClassifierModel model = train_classifier(split, *corpus.taxonomy, detail::classifier_config(rc));
  save_model(model, detail::output_path(rc.model));
  out << "trained " << to_string(model.kind()) << " classifier on " << split.train.size() << " documents ("
      << model.vocabulary().size() << " features), final loss " << format_real(model.meta().final_loss)
      << ", held-out accuracy " << format_real(classification_accuracy(model, split.heldout)) << '\n';
  return kExitOk;
}

inline int run_calibrate(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  ClassifierModel model = load_model(rc.model);
  const Corpus corpus = detail::load_labeled(rc.corpus, rc.taxonomy, rc.merge);
  require_same_taxonomy(*corpus.taxonomy, model.taxonomy(), "calibrate");
  std::vector<LabeledDocument> heldout;
  if (rc.whole_corpus) {
    heldout = corpus.labeled;
  } else {
    const double fraction = rc.heldout_override.value_or(model.meta().heldout_fraction);
    const std::uint64_t seed = rc.seed_override.value_or(model.meta().split_seed);
    SplitPair split = stratified_split(corpus.labeled, fraction, seed);
    detail::report_warnings(split.warnings, err);
    heldout = std::move(split.heldout);
  }
  if (rc.temperature_scaling) {
    if (rc.model_out.empty()) throw DataError("--temperature-scaling needs --model-out for the rescaled model");
    SplitPair sub = stratified_split(heldout, 0.5, rc.seed_override.value_or(model.meta().split_seed) ^ 0x5DEECE66DULL);
    model = model.with_temperature(fit_temperature(model, sub.heldout));
    heldout = std::move(sub.train);
    save_model(model, detail::output_path(rc.model_out));
    out << "temperature " << format_real(model.temperature()) << '\n';
  }
  const ConfusionMatrix c = estimate_confusion_matrix(model, heldout);
  save_confusion_csv(c, detail::output_path(rc.out));
  const ConditionNumber cond = condition_number(c);
  out << "confusion matrix from " << heldout.size() << " held-out documents, condition number "
      << (cond.singular ? std::string("inf (singular)") : format_real(cond.value)) << '\n';
  return kExitOk;
}

inline int run_estimate(const RunConfig& rc, std::ostream& out, std::ostream&) {
  const ClassifierModel model = load_model(rc.model);
  const Corpus corpus = load_corpus(rc.corpus);
  const MixtureVector observed = empirical_mean(model, corpus.documents());
  std::optional<ConfusionMatrix> c;
  if (!rc.confusion.empty()) {
    c = load_confusion_csv(rc.confusion);
    require_same_taxonomy(c->taxonomy(), model.taxonomy(), "confusion matrix vs model");
  } else if (!rc.direct) {
    throw DataError("--confusion is required unless --direct is given");
  }
  EstimateRecord rec{direct_estimate(observed), "direct"};
  if (c) rec.condition = condition_number(*c);
  if (rc.direct) {
    rec.objective = c ? reconstruction_objective(c->entries(), observed.values(), observed.values()) : 0.0;
  } else {
    const SolverResult solved = solve_inverse(*c, observed, detail::solver_options(rc));
    rec = EstimateRecord{solved.estimate, "surgeon", solved.objective, solved.iterations, solved.converged,
                         condition_number(*c)};
  }
  detail::write_json(estimate_to_json(rec), rc.out, out);
  return kExitOk;
}

inline int run_mia_aggregate(const RunConfig& rc, std::ostream& out, std::ostream&) {
  std::optional<DomainTaxonomy> taxonomy;
  if (!rc.taxonomy.empty()) taxonomy = load_taxonomy(rc.taxonomy);
  const ScoreFile file = load_score_csv(rc.scores, taxonomy ? &*taxonomy : nullptr);
  const MixtureVector r = aggregate_mia_scores(file.records, rc.threshold, file.taxonomy);
  auto j = mixture_to_json(r);
  j["method"] = "mia";
  j["records"] = file.records.size();
  detail::write_json(j, rc.out, out);
  return kExitOk;
}

inline int run_metrics(const RunConfig& rc, std::ostream& out, std::ostream&) {
  const MixtureVector truth = load_mixture(rc.truth);
  const MixtureVector estimate = load_mixture(rc.estimate);
  auto j = metrics_to_json(evaluate(truth, estimate));
  j["taxonomy"] = truth.taxonomy().labels();
  detail::write_json(j, rc.out, out);
  return kExitOk;
}

inline int run_merge(const RunConfig& rc, std::ostream& out, std::ostream&) {
  const DomainTaxonomy original = load_taxonomy(rc.taxonomy);
  const MergeMapping mapping = load_merge_mapping(rc.mapping, original);
  detail::write_json(nlohmann::ordered_json(mapping.merged().labels()), rc.out, out);
  if (!rc.corpus.empty()) {
    if (rc.corpus_out.empty()) throw DataError("--corpus needs --corpus-out");
    const Corpus corpus = load_corpus(rc.corpus, &original);
    if (!corpus.is_labeled()) throw DataError("only labeled corpora can be merged");
    save_corpus(detail::output_path(rc.corpus_out), apply_merge(mapping, corpus.labeled), mapping.merged());
  }
  return kExitOk;
}

inline int run_fixture(const RunConfig& rc, std::ostream& out, std::ostream&) {
  FixtureConfig cfg = load_fixture_config(rc.config);
  if (rc.seed_override) cfg.seed = *rc.seed_override;
  const Fixture fixture = generate_fixture(cfg);
  save_corpus(detail::output_path(rc.train_out), fixture.reference, fixture.taxonomy);
  if (!rc.pools_out.empty()) save_corpus(detail::output_path(rc.pools_out), fixture.pools, fixture.taxonomy);
  const MixtureVector alpha(cfg.alpha, fixture.taxonomy, MixtureRole::kGroundTruth);
  const auto sampled =
      sample_mixture_corpus(make_pools(fixture.pools, fixture.taxonomy), MixtureSpec{alpha, cfg.n_samples, cfg.seed});
  std::vector<LabeledDocument> observed;
  observed.reserve(sampled.documents.size());
  for (std::size_t i = 0; i < sampled.documents.size(); ++i) {
    observed.push_back({sampled.documents[i], sampled.hidden_labels[i]});
  }
  save_corpus(detail::output_path(rc.eval_out), observed, fixture.taxonomy);
  if (!rc.alpha_out.empty()) detail::write_json(mixture_to_json(alpha), rc.alpha_out, out);
  out << "wrote " << fixture.reference.size() << " reference and " << observed.size() << " sampled documents\n";
  return kExitOk;
}

inline int run_bench(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  FixtureConfig cfg = load_fixture_config(rc.config);
  if (rc.seed_override) cfg.seed = *rc.seed_override;
  if (rc.n_samples) cfg.n_samples = *rc.n_samples;
  const Fixture fixture = generate_fixture(cfg);

  Corpus train;
  train.taxonomy = fixture.taxonomy;
  train.labeled = fixture.reference;
  Corpus eval;
  eval.taxonomy = fixture.taxonomy;
  eval.labeled = fixture.pools;

  PipelineConfig pipeline;
  pipeline.classifier = detail::classifier_config(rc);
  pipeline.classifier.seed = cfg.seed;
  pipeline.solver = detail::solver_options(rc);
  pipeline.heldout_fraction = rc.heldout_fraction;
  pipeline.split_seed = cfg.seed;
  pipeline.temperature_scaling = rc.temperature_scaling;
  pipeline.mia_threshold = rc.threshold;

  std::optional<MergeMapping> merge;
  if (!rc.merge.empty()) {
    merge = load_merge_mapping(rc.merge, fixture.taxonomy);
  } else if (cfg.merge) {
    merge = MergeMapping::from_names(fixture.taxonomy, *cfg.merge);
  }
  std::optional<ScoreFile> scores;
  if (!rc.mia_scores.empty()) scores = load_score_csv(rc.mia_scores, &fixture.taxonomy);

  const MixtureVector alpha(cfg.alpha, fixture.taxonomy, MixtureRole::kGroundTruth);
  const BenchReport report = run_end_to_end(train, eval, alpha, cfg.n_samples, cfg.seed, pipeline,
                                            scores ? &*scores : nullptr, merge ? &*merge : nullptr);
  detail::report_warnings(report.warnings, err);
  emit_report(report, detail::output_path(rc.out), detail::output_path(rc.summary_csv));
  out << summary_csv(report);
  return kExitOk;
}

// Builds the command tree. Exposed so tests can snapshot the help text.
inline void build_app(CLI::App& app, RunConfig& rc, std::string& chosen) {
  app.name("mixaudit");
  app.description("Recover the domain mixture of a text corpus by label-shift inversion of a proxy classifier.");
  app.require_subcommand(1);
  app.get_formatter()->column_width(34);

  auto* train = app.add_subcommand("train", "Train a domain classifier on the train half of a labeled corpus");
  train->add_option("--corpus", rc.corpus, "Labeled corpus (JSON lines)")->required();
  train->add_option("--taxonomy", rc.taxonomy, "Taxonomy file fixing the domain order");
  train->add_option("--merge", rc.merge, "Merge mapping applied before training");
  train->add_option("--model", rc.model, "Output model file (.json for text, otherwise CBOR)")->required();
  train->add_option("--heldout-fraction", rc.heldout_fraction, "Fraction of each domain held out")
      ->check(detail::open_unit_interval())
      ->capture_default_str();
  train->add_option("--seed", rc.seed, "Seed for the split and the classifier")->capture_default_str();
  detail::add_classifier_flags(train, rc);

  auto* calibrate = app.add_subcommand("calibrate", "Estimate the soft confusion matrix on held-out documents");
  calibrate->add_option("--model", rc.model, "Trained model file")->required();
  calibrate->add_option("--corpus", rc.corpus, "Labeled corpus (the held-out half is used)")->required();
  calibrate->add_option("--taxonomy", rc.taxonomy, "Taxonomy file fixing the domain order");
  calibrate->add_option("--merge", rc.merge, "Merge mapping applied before splitting");
  calibrate->add_option("--out", rc.out, "Output confusion matrix CSV")->required();
  calibrate->add_option("--heldout-fraction", rc.heldout_override, "Held-out fraction (default: the model's)")
      ->check(detail::open_unit_interval());
  calibrate->add_option("--seed", rc.seed_override, "Split seed (default: the model's)");
  calibrate->add_flag("--whole-corpus", rc.whole_corpus, "Treat the whole corpus as held-out data");
  calibrate->add_flag("--temperature-scaling", rc.temperature_scaling,
                      "Fit a softmax temperature on half of the held-out data first");
  calibrate->add_option("--model-out", rc.model_out, "Where to write the temperature-scaled model");

  auto* estimate = app.add_subcommand("estimate", "Estimate the mixture of an unlabeled corpus");
  estimate->add_option("--model", rc.model, "Trained model file")->required();
  estimate->add_option("--confusion", rc.confusion, "Confusion matrix CSV");
  estimate->add_option("--corpus", rc.corpus, "Observed corpus (JSON lines; labels ignored)")->required();
  estimate->add_option("--out", rc.out, "Output estimate JSON (default: stdout)");
  estimate->add_flag("--direct", rc.direct, "Report the mean classifier output without inversion");
  estimate->add_option("--seed", rc.seed, "Recorded run seed")->capture_default_str();
  detail::add_solver_flags(estimate, rc);

  auto* mia = app.add_subcommand("mia-aggregate", "Turn membership-inference decisions into a mixture estimate");
  mia->add_option("--scores", rc.scores, "CSV with header domain,score[,decision]")->required();
  mia->add_option("--threshold", rc.threshold, "Decide score > threshold instead of using the decision column");
  mia->add_option("--taxonomy", rc.taxonomy, "Taxonomy file fixing the domain order");
  mia->add_option("--out", rc.out, "Output estimate JSON (default: stdout)");

  auto* metrics = app.add_subcommand("metrics", "Compare an estimate with a ground-truth mixture");
  metrics->add_option("--truth", rc.truth, "Ground-truth mixture JSON")->required();
  metrics->add_option("--estimate", rc.estimate, "Estimated mixture JSON")->required();
  metrics->add_option("--out", rc.out, "Output metric JSON (default: stdout)");

  auto* merge = app.add_subcommand("merge", "Apply a domain merge mapping to a taxonomy");
  merge->add_option("--taxonomy", rc.taxonomy, "Original taxonomy file")->required();
  merge->add_option("--mapping", rc.mapping, "Merge mapping JSON {original: merged}")->required();
  merge->add_option("--out", rc.out, "Output merged taxonomy (default: stdout)");
  merge->add_option("--corpus", rc.corpus, "Labeled corpus to relabel");
  merge->add_option("--corpus-out", rc.corpus_out, "Where to write the relabeled corpus");

  auto* bench = app.add_subcommand("bench", "Run the synthetic end-to-end benchmark");
  bench->add_option("--config", rc.config, "Fixture config JSON")->required();
  bench->add_option("--out", rc.out, "Output report JSON")->required();
  bench->add_option("--summary-csv", rc.summary_csv, "Optional per-estimator summary CSV");
  bench->add_option("--seed", rc.seed_override, "Override the fixture seed");
  bench->add_option("--n-samples", rc.n_samples, "Override the number of sampled documents")
      ->check(CLI::PositiveNumber);
  bench->add_option("--merge", rc.merge, "Merge mapping (overrides the config's)");
  bench->add_option("--heldout-fraction", rc.heldout_fraction, "Fraction of each domain held out")
      ->check(detail::open_unit_interval())
      ->capture_default_str();
  bench->add_flag("--temperature-scaling", rc.temperature_scaling, "Fit a softmax temperature before calibrating");
  bench->add_option("--mia-scores", rc.mia_scores, "Optional membership-inference score CSV");
  bench->add_option("--threshold", rc.threshold, "Score threshold for --mia-scores");
  detail::add_classifier_flags(bench, rc);
  detail::add_solver_flags(bench, rc);

  auto* fixture = app.add_subcommand("fixture", "Write a synthetic fixture's corpora to disk");
  fixture->add_option("--config", rc.config, "Fixture config JSON")->required();
  fixture->add_option("--train-out", rc.train_out, "Output labeled reference corpus")->required();
  fixture->add_option("--eval-out", rc.eval_out, "Output corpus sampled at alpha (true labels kept)")->required();
  fixture->add_option("--pools-out", rc.pools_out, "Output the evaluation pools the sample is drawn from");
  fixture->add_option("--alpha-out", rc.alpha_out, "Output ground-truth mixture JSON");
  fixture->add_option("--seed", rc.seed_override, "Override the fixture seed");

  for (auto* sub : app.get_subcommands({})) {
    sub->callback([&chosen, sub] { chosen = sub->get_name(); });
  }
}

// Exit 0 on success, 1 on usage errors, 2 on data or validation errors.
inline int dispatch(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app;
  RunConfig rc;
  std::string chosen;
  build_app(app, rc, chosen);
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    const auto* failing = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << "error: " << e.what() << "\n\n" << failing->help();
    return kExitUsage;
  }
  try {
    if (chosen == "train") return run_train(rc, out, err);
    if (chosen == "calibrate") return run_calibrate(rc, out, err);
    if (chosen == "estimate") return run_estimate(rc, out, err);
    if (chosen == "mia-aggregate") return run_mia_aggregate(rc, out, err);
    if (chosen == "metrics") return run_metrics(rc, out, err);
    if (chosen == "merge") return run_merge(rc, out, err);
    if (chosen == "bench") return run_bench(rc, out, err);
    if (chosen == "fixture") return run_fixture(rc, out, err);
    err << app.help();
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

inline int dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(std::move(args));
}

}  // namespace mixaudit::cli
