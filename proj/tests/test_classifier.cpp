#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "mixaudit/classifier.hpp"
#include "mixaudit/fixture.hpp"
#include "test_support.hpp"

namespace mixaudit {
namespace {

std::vector<std::vector<std::string>> tokenized(std::initializer_list<const char*> texts) {
  std::vector<std::vector<std::string>> out;
  for (const char* t : texts) out.push_back(tokenize(t));
  return out;
}

TEST(Vocabulary, CountsDocumentFrequency) {
  const auto v = build_vocabulary(tokenized({"a b", "b c"}), 100, 1);
  EXPECT_EQ(v.size(), 3u);
  EXPECT_EQ(v.terms().front(), "b");
  EXPECT_EQ(v.doc_freq("b"), 2u);
  EXPECT_EQ(v.doc_freq("a"), 1u);
  EXPECT_EQ(v.doc_freq("c"), 1u);
  EXPECT_EQ(v.n_docs(), 2u);
}

TEST(Vocabulary, MinDocFreqDropsRareTerms) {
  const auto v = build_vocabulary(tokenized({"a b", "b c"}), 100, 2);
  EXPECT_EQ(v.terms(), (std::vector<std::string>{"b"}));
}

TEST(Vocabulary, TiesBrokenLexicographically) {
  // doc_freq a:3, b:3, c:1
  const auto v = build_vocabulary(tokenized({"b a c", "a b", "b a"}), 2, 1);
  EXPECT_EQ(v.terms(), (std::vector<std::string>{"a", "b"}));
}

TEST(Vocabulary, Errors) {
  EXPECT_THROW(build_vocabulary(tokenized({"a", "b"}), 10, 2), DataError);
  EXPECT_THROW(build_vocabulary(std::vector<std::vector<std::string>>{}, 10, 1), DataError);
  std::vector<LabeledDocument> docs{{Document{"a b"}, 0}, {Document{"c d"}, 1}, {Document{"e"}, 2}};
  EXPECT_THROW(build_vocabulary(docs, 2, 1), DataError);
}

TEST(Featurize, OutOfVocabularyDocumentIsZero) {
  const auto v = build_vocabulary(tokenized({"a b", "b c"}), 100, 1);
  const auto fv = featurize(Document{"zzz yyy"}, v);
  EXPECT_TRUE(fv.is_zero());
  EXPECT_EQ(fv.dimension, 3u);
}

TEST(Featurize, SingleTermNormalizesToOne) {
  const auto v = build_vocabulary(tokenized({"a b", "b c"}), 100, 1);
  const auto fv = featurize(Document{"c c c unknown"}, v);
  ASSERT_EQ(fv.nnz(), 1u);
  EXPECT_EQ(fv.indices[0], *v.find("c"));
  EXPECT_DOUBLE_EQ(fv.weights[0], 1.0);
}

TEST(Featurize, SublinearSmoothedWeight) {
  // tf=2, N=4, df=2: (1 + ln 2) * (ln(5/3) + 1)
  EXPECT_NEAR(tfidf_weight(2, 2, 4), 2.558050145197108, 1e-14);
  const auto v = build_vocabulary(tokenized({"x y", "x z", "y", "z"}), 100, 1);
  ASSERT_EQ(v.doc_freq("x"), 2u);
  const auto fv = featurize(Document{"x x"}, v);
  ASSERT_EQ(fv.nnz(), 1u);
  EXPECT_DOUBLE_EQ(fv.weights[0], 1.0);
}

TEST(Featurize, UnitNormAndIncreasingIndices) {
  const auto v = build_vocabulary(tokenized({"a b c d", "a b", "c d e", "e e f"}), 100, 1);
  const auto fv = featurize(Document{"f e e a a a q d"}, v);
  double norm = 0.0;
  for (double w : fv.weights) norm += w * w;
  EXPECT_NEAR(norm, 1.0, 1e-12);
  EXPECT_TRUE(std::is_sorted(fv.indices.begin(), fv.indices.end()));
  EXPECT_EQ(std::adjacent_find(fv.indices.begin(), fv.indices.end()), fv.indices.end());
}

// Two domains whose documents never share a token.
SplitPair separable_split(std::uint64_t seed = 1) {
  FixtureConfig cfg = testing::disjoint_config(2, {0.5, 0.5}, seed);
  cfg.reference_docs_per_domain = 200;
  cfg.pool_docs_per_domain = 1;
  const Fixture fx = generate_fixture(cfg);
  return stratified_split(fx.reference, 0.2, seed);
}

DomainTaxonomy two_domains() { return DomainTaxonomy({"domaina", "domainb"}); }

TEST(TrainClassifier, SeparableDomainsReachPerfectHeldOutAccuracy) {
  const SplitPair split = separable_split();
  const ClassifierModel model = train_classifier(split, two_domains(), {});
  EXPECT_DOUBLE_EQ(classification_accuracy(model, split.heldout), 1.0);
  for (const auto& item : split.train) {
    EXPECT_EQ(argmax(model.predict_values(item.doc)), item.domain);
  }
  EXPECT_GT(model.meta().final_loss, 0.0);
  EXPECT_EQ(model.meta().train_documents, split.train.size());
}

TEST(TrainClassifier, ZeroEpochsGivesUniformPredictions) {
  const SplitPair split = separable_split();
  ClassifierConfig cfg;
  cfg.epochs = 0;
  const ClassifierModel model = train_classifier(split, two_domains(), cfg);
  for (const auto& item : split.heldout) {
    const auto p = predict_proba(model, item.doc);
    EXPECT_DOUBLE_EQ(p[0], 0.5);
    EXPECT_DOUBLE_EQ(p[1], 0.5);
  }
  cfg.kind = ClassifierKind::kMlp;
  cfg.hidden_size = 8;
  const ClassifierModel mlp = train_classifier(split, two_domains(), cfg);
  for (const auto& item : split.heldout) {
    const auto p = mlp.predict_values(item.doc);
    EXPECT_NEAR(p[0] + p[1], 1.0, 1e-12);
    EXPECT_GE(std::min(p[0], p[1]), 0.0);
  }
}

TEST(TrainClassifier, BitIdenticalAcrossRuns) {
  const SplitPair split = separable_split(3);
  for (auto kind : {ClassifierKind::kLinear, ClassifierKind::kMlp}) {
    ClassifierConfig cfg;
    cfg.kind = kind;
    cfg.hidden_size = 16;
    cfg.epochs = 3;
    const auto a = train_classifier(split, two_domains(), cfg);
    const auto b = train_classifier(split, two_domains(), cfg);
    EXPECT_TRUE(a == b);
    EXPECT_EQ(classification_accuracy(a, split.heldout), classification_accuracy(b, split.heldout));
  }
}

TEST(TrainClassifier, UsesTrainHalfOnly) {
  SplitPair split = separable_split();
  split.heldout.push_back({Document{"onlyinheldout onlyinheldout"}, 0});
  split.heldout.push_back({Document{"onlyinheldout"}, 1});
  ClassifierConfig cfg;
  cfg.min_doc_freq = 1;
  const auto model = train_classifier(split, two_domains(), cfg);
  EXPECT_FALSE(model.vocabulary().find("onlyinheldout").has_value());
}

TEST(TrainClassifier, MissingDomainRejected) {
  SplitPair split = separable_split();
  std::erase_if(split.train, [](const auto& d) { return d.domain == 1; });
  EXPECT_THROW(train_classifier(split, two_domains(), {}), DataError);
}

TEST(TrainClassifier, NonFiniteLossReportsEpoch) {
  const SplitPair split = separable_split();
  ClassifierConfig cfg;
  cfg.kind = ClassifierKind::kMlp;
  cfg.learning_rate = 1e308;
  try {
    train_classifier(split, two_domains(), cfg);
    FAIL() << "expected an error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos) << e.what();
  }
}

TEST(PredictProba, ZeroFeatureVectorGivesSoftmaxOfBias) {
  Network net;
  net.layers.emplace_back(4, 3);
  net.layers[0].bias = {1.0, 2.0, 0.5};
  net.layers[0].weight[5] = 3.0;
  const Vocabulary vocab({"p", "q", "r", "s"}, {1, 1, 1, 1}, 2);
  const ClassifierModel model(ClassifierKind::kLinear, DomainTaxonomy({"x", "y", "z"}), vocab, net, {});
  const auto p = predict_proba(model, Document{"nothing here"});
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(0.5);
  EXPECT_NEAR(p[0], std::exp(1.0) / z, 1e-15);
  EXPECT_NEAR(p[1], std::exp(2.0) / z, 1e-15);
  EXPECT_NEAR(p[2], std::exp(0.5) / z, 1e-15);
}

TEST(PredictProba, SimplexClosureOnRandomDocuments) {
  FixtureConfig cfg = testing::disjoint_config(3, {0.4, 0.3, 0.3}, 5);
  cfg.domains[1].overlap = 0.5;
  cfg.reference_docs_per_domain = 200;
  cfg.pool_docs_per_domain = 334;
  const Fixture fx = generate_fixture(cfg);
  const auto split = stratified_split(fx.reference, 0.2, 5);
  for (auto kind : {ClassifierKind::kLinear, ClassifierKind::kMlp}) {
    ClassifierConfig cc;
    cc.kind = kind;
    cc.hidden_size = 16;
    cc.epochs = 2;
    const auto model = train_classifier(split, fx.taxonomy, cc);
    Rng rng(99);
    for (std::size_t n = 0; n < 1000; ++n) {
      const auto& doc = n < fx.pools.size() ? fx.pools[n].doc : Document{detail::random_word(rng)};
      const auto p = model.predict_values(doc);
      ASSERT_EQ(p.size(), 3u);
      ASSERT_GE(*std::min_element(p.begin(), p.end()), 0.0);
      ASSERT_LE(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0), 1e-9);
    }
  }
}

TEST(PredictProba, ConcurrentCallsAgree) {
  const SplitPair split = separable_split();
  const auto model = train_classifier(split, two_domains(), {});
  const auto expected = predict_all(model, [&] {
    std::vector<Document> docs;
    for (const auto& d : split.heldout) docs.push_back(d.doc);
    return docs;
  }());
  std::vector<int> mismatches(4, 0);
  std::vector<std::thread> workers;
  for (int t = 0; t < 4; ++t) {
    workers.emplace_back([&, t] {
      for (std::size_t i = 0; i < split.heldout.size(); ++i)
        mismatches[t] += model.predict_values(split.heldout[i].doc) != expected[i];
    });
  }
  for (auto& w : workers) w.join();
  for (int m : mismatches) EXPECT_EQ(m, 0);
}

TEST(PredictProba, PermutingTaxonomyPermutesOutputs) {
  FixtureConfig cfg = testing::disjoint_config(3, {0.4, 0.3, 0.3}, 8);
  cfg.domains[0].overlap = 0.6;
  cfg.domains[2].overlap = 0.6;
  cfg.reference_docs_per_domain = 150;
  cfg.pool_docs_per_domain = 10;
  const Fixture fx = generate_fixture(cfg);
  const SplitPair split = stratified_split(fx.reference, 0.2, 8);

  // New index of old domain d is perm[d]; document order is kept.
  const std::vector<std::size_t> perm{2, 0, 1};
  std::vector<std::string> names(3);
  for (std::size_t d = 0; d < 3; ++d) names[perm[d]] = fx.taxonomy.name(d);
  SplitPair permuted = split;
  for (auto& item : permuted.train) item.domain = perm[item.domain];
  for (auto& item : permuted.heldout) item.domain = perm[item.domain];

  ClassifierConfig cc;
  cc.epochs = 3;
  const auto a = train_classifier(split, fx.taxonomy, cc);
  const auto b = train_classifier(permuted, DomainTaxonomy(names), cc);
  for (const auto& item : fx.pools) {
    const auto pa = a.predict_values(item.doc);
    const auto pb = b.predict_values(item.doc);
    for (std::size_t d = 0; d < 3; ++d) EXPECT_NEAR(pa[d], pb[perm[d]], 1e-12);
    EXPECT_EQ(a.taxonomy().name(argmax(pa)), b.taxonomy().name(argmax(pb)));
  }
}

TEST(Gradient, LinearMatchesFiniteDifferences) {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) EXPECT_LE(testing::max_gradient_error(ClassifierKind::kLinear, seed), 1e-4);
}

TEST(Gradient, MlpMatchesFiniteDifferences) {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) EXPECT_LE(testing::max_gradient_error(ClassifierKind::kMlp, seed), 1e-4);
}

TEST(Gradient, FirstLayerIsSparse) {
  const testing::TinyProblem tiny;
  const Network net = testing::randomized_tiny_network(ClassifierKind::kLinear, 4);
  std::vector<const FeatureVector*> one{&tiny.docs[1]};
  std::vector<std::size_t> label{1};
  const auto g = loss_and_gradient(net, one, label);
  EXPECT_EQ(g.layers[0].rows, (std::vector<std::uint32_t>{1}));
}

TEST(ModelFile, JsonAndCborRoundTrip) {
  const SplitPair split = separable_split();
  ClassifierConfig cfg;
  cfg.kind = ClassifierKind::kMlp;
  cfg.hidden_size = 8;
  cfg.epochs = 2;
  const auto model = train_classifier(split, two_domains(), cfg).with_temperature(1.5);
  testing::TempDir dir;
  for (const char* name : {"model.json", "model.bin"}) {
    save_model(model, dir.file(name));
    const auto back = load_model(dir.file(name));
    EXPECT_TRUE(back == model) << name;
    EXPECT_EQ(back.predict_values(split.heldout[0].doc), model.predict_values(split.heldout[0].doc));
  }
  testing::write_text(dir.file("junk.json"), "{\"format\":\"other\"}");
  EXPECT_THROW(load_model(dir.file("junk.json")), DataError);
  EXPECT_THROW(load_model(dir.file("missing.bin")), DataError);
}

TEST(ModelFile, VersionFieldRequired) {
  const SplitPair split = separable_split();
  ClassifierConfig cfg;
  cfg.epochs = 1;
  auto j = model_to_json(train_classifier(split, two_domains(), cfg));
  EXPECT_EQ(j.at("version"), kModelFormatVersion);
  j["version"] = 99;
  EXPECT_THROW(model_from_json(j), DataError);
  j.erase("version");
  EXPECT_THROW(model_from_json(j), DataError);
}

TEST(Temperature, FittedTemperatureDoesNotIncreaseCrossEntropy) {
  FixtureConfig cfg = testing::disjoint_config(3, {0.4, 0.3, 0.3}, 12);
  for (auto& d : cfg.domains) d.overlap = 0.8;
  cfg.reference_docs_per_domain = 200;
  cfg.pool_docs_per_domain = 1;
  const Fixture fx = generate_fixture(cfg);
  const auto split = stratified_split(fx.reference, 0.3, 12);
  const auto model = train_classifier(split, fx.taxonomy, {});
  const double t = fit_temperature(model, split.heldout);
  EXPECT_GE(t, 0.25);
  EXPECT_LE(t, 4.0);
  EXPECT_LE(mean_cross_entropy(model.with_temperature(t), split.heldout),
            mean_cross_entropy(model, split.heldout) + 1e-12);
}

TEST(ClassifierKind, Parsing) {
  EXPECT_EQ(parse_classifier_kind("linear"), ClassifierKind::kLinear);
  EXPECT_EQ(parse_classifier_kind("mlp"), ClassifierKind::kMlp);
  EXPECT_THROW(parse_classifier_kind("bert"), DataError);
}

}  // namespace
}  // namespace mixaudit
