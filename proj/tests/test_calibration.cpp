#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <sstream>

#include "mixaudit/bench.hpp"
#include "mixaudit/calibration.hpp"
#include "test_support.hpp"

namespace mixaudit {
namespace {

// A one-layer network that puts (almost) all mass on the domain named by a
// marker token: "tok0" -> domain 0, and so on.
// Marker tokens are letters only; the tokenizer splits digits from letters.
std::string marker(std::size_t d) { return std::string("tok") + static_cast<char>('a' + d); }

ClassifierModel marker_model(std::size_t k, double logit) {
  std::vector<std::string> terms;
  for (std::size_t d = 0; d < k; ++d) terms.push_back(marker(d));
  Network net;
  net.layers.emplace_back(k, k);
  for (std::size_t d = 0; d < k; ++d) net.layers[0].row(d)[d] = logit;
  std::vector<std::string> names;
  for (std::size_t d = 0; d < k; ++d) names.push_back("d" + std::to_string(d));
  return ClassifierModel(ClassifierKind::kLinear, DomainTaxonomy(names), Vocabulary(terms, std::vector<std::size_t>(k, 1), 2),
                         net, {});
}

TEST(ConfusionMatrix, PerfectClassifierGivesIdentity) {
  // exp(-800) underflows to zero, so the outputs are exactly one-hot.
  const auto model = marker_model(3, 800.0);
  std::vector<LabeledDocument> heldout;
  for (std::size_t d = 0; d < 3; ++d)
    for (int n = 0; n < 4; ++n) heldout.push_back({Document{marker(d)}, d});
  const auto c = estimate_confusion_matrix(model, heldout);
  EXPECT_EQ(c.entries(), Matrix::identity(3));
  EXPECT_EQ(c.per_row_count(), (std::vector<std::size_t>{4, 4, 4}));
}

TEST(ConfusionMatrix, SoftCountsAveragedPerRow) {
  const DomainTaxonomy tax({"a", "b"});
  const auto c = confusion_from_predictions({{0.9, 0.1}, {0.2, 0.8}, {0.7, 0.3}}, {0, 1, 0}, tax);
  EXPECT_NEAR(c(0, 0), 0.8, 1e-15);
  EXPECT_NEAR(c(0, 1), 0.2, 1e-15);
  EXPECT_NEAR(c(1, 0), 0.2, 1e-15);
  EXPECT_NEAR(c(1, 1), 0.8, 1e-15);
  EXPECT_EQ(c.per_row_count(), (std::vector<std::size_t>{2, 1}));
}

TEST(ConfusionMatrix, MissingDomainNamed) {
  const DomainTaxonomy tax({"web", "code", "books"});
  try {
    confusion_from_predictions({{0.5, 0.25, 0.25}}, {0}, tax);
    FAIL() << "expected an error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("code"), std::string::npos) << e.what();
  }
}

TEST(ConfusionMatrix, RejectsNonStochasticRows) {
  const DomainTaxonomy tax({"a", "b"});
  EXPECT_THROW(ConfusionMatrix(Matrix::from_rows({{0.5, 0.6}, {0.5, 0.5}}), tax), DataError);
  EXPECT_THROW(ConfusionMatrix(Matrix::from_rows({{1.2, -0.2}, {0.5, 0.5}}), tax), DataError);
  EXPECT_THROW(ConfusionMatrix(Matrix::identity(3), tax), DataError);
  EXPECT_THROW(ConfusionMatrix(Matrix::identity(2), tax, {3, 0}), DataError);
}

TEST(ConfusionMatrix, RowsStochasticForTrainedModels) {
  for (double overlap : {0.0, 0.5, 0.9}) {
    FixtureConfig cfg = testing::disjoint_config(4, {0.25, 0.25, 0.25, 0.25}, 31);
    for (auto& d : cfg.domains) d.overlap = overlap;
    cfg.reference_docs_per_domain = 150;
    cfg.pool_docs_per_domain = 1;
    const Fixture fx = generate_fixture(cfg);
    const auto split = stratified_split(fx.reference, 0.2, 31);
    const auto model = train_classifier(split, fx.taxonomy, {});
    const auto c = estimate_confusion_matrix(model, split.heldout);
    for (std::size_t i = 0; i < 4; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < 4; ++j) {
        EXPECT_GE(c(i, j), 0.0);
        EXPECT_LE(c(i, j), 1.0);
        sum += c(i, j);
      }
      EXPECT_NEAR(sum, 1.0, 1e-9);
    }
  }
}

// Eigenvalues of the symmetric 2x2 matrix C^T C from its characteristic polynomial.
double two_by_two_condition(double a, double b, double c, double d) {
  const double m00 = a * a + c * c;
  const double m01 = a * b + c * d;
  const double m11 = b * b + d * d;
  const double tr = m00 + m11;
  const double det = m00 * m11 - m01 * m01;
  const double disc = std::sqrt(tr * tr / 4.0 - det);
  return std::sqrt((tr / 2.0 + disc) / (tr / 2.0 - disc));
}

TEST(ConditionNumber, IdentityIsOne) {
  for (std::size_t k : {2u, 5u, 17u}) EXPECT_NEAR(condition_number(Matrix::identity(k)).value, 1.0, 1e-12);
}

TEST(ConditionNumber, RankOneIsFlaggedSingular) {
  const auto cond = condition_number(Matrix::from_rows({{0.5, 0.5}, {0.5, 0.5}}));
  EXPECT_TRUE(cond.singular);
  EXPECT_TRUE(std::isinf(cond.value));
}

TEST(ConditionNumber, TwoByTwoAgainstCharacteristicPolynomial) {
  const auto cond = condition_number(Matrix::from_rows({{0.9, 0.1}, {0.2, 0.8}}));
  EXPECT_FALSE(cond.singular);
  EXPECT_NEAR(cond.value, 1.4560832005096076, 1e-12);
  EXPECT_NEAR(cond.value, two_by_two_condition(0.9, 0.1, 0.2, 0.8), 1e-12);
}

TEST(ConditionNumber, MatchesEigenOnRandomStochasticMatrices) {
  Rng rng(404);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 2 + uniform_index(rng, 10);
    Matrix c(k, k);
    Eigen::MatrixXd e(k, k);
    for (std::size_t i = 0; i < k; ++i) {
      const auto row = testing::random_simplex_point(k, rng);
      for (std::size_t j = 0; j < k; ++j) {
        c(i, j) = 0.6 * (i == j) + 0.4 * row[j];
        e(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c(i, j);
      }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(e.transpose() * e);
    const auto ev = solver.eigenvalues();
    const double expected = std::sqrt(ev.maxCoeff() / ev.minCoeff());
    EXPECT_NEAR(condition_number(c).value, expected, 1e-9 * expected) << "k=" << k;
  }
}

TEST(Merge, GroundTruthMergesBySummation) {
  const DomainTaxonomy tax({"C4", "CC", "code"});
  const auto m = MergeMapping::from_names(tax, {{"C4", "web"}, {"CC", "web"}, {"code", "code"}});
  EXPECT_EQ(m.merged().labels(), (std::vector<std::string>{"web", "code"}));
  const auto merged = merge_mixture(m, MixtureVector({0.4, 0.4, 0.2}, tax, MixtureRole::kGroundTruth));
  EXPECT_NEAR(merged[0], 0.8, 1e-15);
  EXPECT_NEAR(merged[1], 0.2, 1e-15);
  EXPECT_EQ(merged.role(), MixtureRole::kGroundTruth);
}

TEST(Merge, IdentityMappingLeavesLabelsUnchanged) {
  const DomainTaxonomy tax({"a", "b", "c"});
  const auto m = MergeMapping::identity(tax);
  std::vector<LabeledDocument> docs{{Document{"x"}, 2}, {Document{"y"}, 0}, {Document{"z"}, 1}};
  EXPECT_EQ(apply_merge(m, docs), docs);
  EXPECT_EQ(m.merged(), tax);
  const auto by_name = MergeMapping::from_names(tax, {{"a", "a"}, {"b", "b"}, {"c", "c"}});
  EXPECT_EQ(by_name.merged(), tax);
  EXPECT_EQ(by_name.group(), m.group());
}

TEST(Merge, SixDomainsToFive) {
  FixtureConfig cfg = testing::disjoint_config(6, std::vector<double>(6, 1.0 / 6.0), 3);
  cfg.reference_docs_per_domain = 5;
  cfg.pool_docs_per_domain = 1;
  const Fixture fx = generate_fixture(cfg);
  std::map<std::string, std::string> names;
  for (const auto& n : fx.taxonomy.labels()) names[n] = n;
  names["domaina"] = "web";
  names["domainb"] = "web";
  const auto m = MergeMapping::from_names(fx.taxonomy, names);
  EXPECT_EQ(m.merged().size(), 5u);
  const auto relabeled = apply_merge(m, fx.reference);
  ASSERT_EQ(relabeled.size(), fx.reference.size());
  for (std::size_t i = 0; i < relabeled.size(); ++i) {
    EXPECT_LT(relabeled[i].domain, 5u);
    EXPECT_EQ(m.merged().name(relabeled[i].domain), names[fx.taxonomy.name(fx.reference[i].domain)]);
  }
}

TEST(Merge, UncoveredDomainRejected) {
  const DomainTaxonomy tax({"a", "b", "c"});
  EXPECT_THROW(MergeMapping::from_names(tax, {{"a", "x"}, {"b", "x"}}), DataError);
  EXPECT_THROW(MergeMapping::from_names(tax, {{"a", "x"}, {"b", "x"}, {"c", "y"}, {"d", "y"}}), DataError);
  const auto m = MergeMapping::identity(tax);
  EXPECT_THROW(apply_merge(m, {{Document{"t"}, 3}}), DataError);
}

TEST(Merge, MappingFile) {
  testing::TempDir dir;
  const auto m_path = std::string(MIXAUDIT_SOURCE_DIR) + "/fixtures/merge_web.json";
  const DomainTaxonomy tax({"c4", "commoncrawl", "code", "books"});
  const auto m = load_merge_mapping(m_path, tax);
  EXPECT_EQ(m.merged().labels(), (std::vector<std::string>{"web", "code", "books"}));
  EXPECT_EQ(m.group(), (std::vector<std::size_t>{0, 0, 1, 2}));
  testing::write_text(dir.file("bad.json"), "[\"web\"]");
  EXPECT_THROW(load_merge_mapping(dir.file("bad.json"), tax), DataError);
}

// Merging the per-document predictions and labels, then estimating C at K',
// equals merging the K-level C directly.
TEST(Merge, MergeThenEstimateEqualsEstimateThenMerge) {
  FixtureConfig cfg = testing::disjoint_config(5, std::vector<double>(5, 0.2), 17);
  for (auto& d : cfg.domains) d.overlap = 0.6;
  cfg.reference_docs_per_domain = 100;
  cfg.pool_docs_per_domain = 1;
  const Fixture fx = generate_fixture(cfg);
  const auto split = stratified_split(fx.reference, 0.2, 17);
  const auto model = train_classifier(split, fx.taxonomy, {});
  const auto mapping = MergeMapping::from_names(
      fx.taxonomy, {{"domaina", "ab"}, {"domainb", "ab"}, {"domainc", "c"}, {"domaind", "de"}, {"domaine", "de"}});

  const auto c_full = estimate_confusion_matrix(model, split.heldout);
  const auto merged_direct = merge_confusion_matrix(mapping, c_full);

  std::vector<std::vector<double>> merged_preds;
  std::vector<std::size_t> merged_labels;
  for (const auto& item : split.heldout) {
    merged_preds.push_back(merge_values(mapping, model.predict_values(item.doc)));
    merged_labels.push_back(mapping.group_of(item.domain));
  }
  const auto merged_estimated = confusion_from_predictions(merged_preds, merged_labels, mapping.merged());
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(merged_direct(i, j), merged_estimated(i, j), 1e-9);
  EXPECT_EQ(merged_direct.per_row_count(), merged_estimated.per_row_count());
}

TEST(Merge, ConditioningImprovesOnDuplicatedPools) {
  FixtureConfig cfg = testing::duplicated_config();
  cfg.reference_docs_per_domain = 400;
  cfg.pool_docs_per_domain = 1;
  const Fixture fx = generate_fixture(cfg);
  const auto mapping = load_merge_mapping(std::string(MIXAUDIT_SOURCE_DIR) + "/fixtures/merge_web.json", fx.taxonomy);

  PipelineConfig pc;
  const auto before = calibrate_auditor(fx.reference, fx.taxonomy, pc);
  const auto after = calibrate_auditor(apply_merge(mapping, fx.reference), mapping.merged(), pc);
  EXPECT_TRUE(before.condition.singular || before.condition.value > 100.0) << before.condition.value;
  EXPECT_FALSE(after.condition.singular);
  EXPECT_LE(after.condition.value, before.condition.value);
  const auto merged_c = merge_confusion_matrix(mapping, before.confusion);
  EXPECT_LE(condition_number(merged_c).value, before.condition.value);
}

TEST(ConfusionCsv, RoundTripAndFormat) {
  const DomainTaxonomy tax({"web", "code"});
  const ConfusionMatrix c(Matrix::from_rows({{0.9, 0.1}, {1.0 / 3.0, 2.0 / 3.0}}), tax);
  std::stringstream buffer;
  write_confusion_csv(buffer, c);
  const std::string text = buffer.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "true\\predicted,web,code");
  EXPECT_NE(text.find("code,0.333333333333,0.666666666667"), std::string::npos) << text;
  const auto back = read_confusion_csv(buffer);
  EXPECT_EQ(back.taxonomy(), tax);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(back(i, j), c(i, j), 1e-12);
}

TEST(ConfusionCsv, MalformedInput) {
  std::istringstream ragged("true\\predicted,a,b\na,0.5\nb,0.5,0.5\n");
  EXPECT_THROW(read_confusion_csv(ragged), DataError);
  std::istringstream unknown("true\\predicted,a,b\nz,0.5,0.5\na,0.5,0.5\n");
  EXPECT_THROW(read_confusion_csv(unknown), DataError);
  std::istringstream twice("true\\predicted,a,b\na,0.5,0.5\na,0.5,0.5\n");
  EXPECT_THROW(read_confusion_csv(twice), DataError);
  std::istringstream text("true\\predicted,a,b\na,x,0.5\nb,0.5,0.5\n");
  EXPECT_THROW(read_confusion_csv(text), DataError);
  EXPECT_THROW(load_confusion_csv("/nonexistent.csv"), DataError);
}

}  // namespace
}  // namespace mixaudit
