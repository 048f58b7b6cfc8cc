#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mixaudit/corpus.hpp"
#include "mixaudit/error.hpp"
#include "mixaudit/mixture.hpp"
#include "mixaudit/random.hpp"
#include "mixaudit/taxonomy.hpp"

namespace mixaudit {

// ---------------------------------------------------------------------------
// TF-IDF features
// ---------------------------------------------------------------------------

class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> terms, std::vector<std::size_t> doc_freq, std::size_t n_docs)
      : terms_(std::move(terms)), doc_freq_(std::move(doc_freq)), n_docs_(n_docs) {
    if (terms_.size() != doc_freq_.size()) throw DataError("vocabulary term/doc_freq size mismatch");
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      if (doc_freq_[i] < 1 || doc_freq_[i] > n_docs_) {
        throw DataError("vocabulary doc_freq out of range for term '" + terms_[i] + "'");
      }
      if (!index_.emplace(terms_[i], static_cast<std::uint32_t>(i)).second) {
        throw DataError("duplicate vocabulary term '" + terms_[i] + "'");
      }
    }
  }

  std::size_t size() const noexcept { return terms_.size(); }
  std::size_t n_docs() const noexcept { return n_docs_; }
  const std::vector<std::string>& terms() const noexcept { return terms_; }
  const std::vector<std::size_t>& doc_freq() const noexcept { return doc_freq_; }

  std::optional<std::uint32_t> find(const std::string& term) const {
    auto it = index_.find(term);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t doc_freq(const std::string& term) const {
    auto i = find(term);
    return i ? doc_freq_[*i] : 0;
  }

 private:
  std::vector<std::string> terms_;
  std::vector<std::size_t> doc_freq_;
  std::size_t n_docs_ = 0;
  std::unordered_map<std::string, std::uint32_t> index_;
};

// Ranks terms by document frequency (descending, ties lexicographic), drops
// terms below `min_doc_freq`, and keeps the first `max_features`.
inline Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& tokenized_docs,
                                   std::size_t max_features, std::size_t min_doc_freq) {
  if (tokenized_docs.empty()) throw DataError("cannot build a vocabulary from zero documents");
  std::unordered_map<std::string, std::size_t> df;
  for (const auto& tokens : tokenized_docs) {
    std::vector<std::string> unique(tokens);
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    for (auto& t : unique) ++df[t];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [term, count] : df) {
    if (count >= min_doc_freq) ranked.emplace_back(term, count);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (ranked.size() > max_features) ranked.resize(max_features);
  if (ranked.empty()) throw DataError("vocabulary is empty after applying min_doc_freq");
  std::vector<std::string> terms;
  std::vector<std::size_t> freq;
  for (auto& [term, count] : ranked) {
    terms.push_back(term);
    freq.push_back(count);
  }
  return Vocabulary(std::move(terms), std::move(freq), tokenized_docs.size());
}

inline Vocabulary build_vocabulary(const std::vector<LabeledDocument>& train, std::size_t max_features,
                                   std::size_t min_doc_freq) {
  if (train.empty()) throw DataError("cannot build a vocabulary from zero documents");
  std::size_t num_domains = 0;
  std::vector<std::vector<std::string>> tokenized;
  tokenized.reserve(train.size());
  for (const auto& item : train) {
    num_domains = std::max(num_domains, item.domain + 1);
    tokenized.push_back(item.doc.tokens());
  }
  if (max_features < num_domains) {
    throw DataError("max_features (" + std::to_string(max_features) + ") must be at least the number of domains");
  }
  return build_vocabulary(tokenized, max_features, min_doc_freq);
}

struct FeatureVector {
  std::vector<std::uint32_t> indices;  // strictly increasing
  std::vector<double> weights;
  std::size_t dimension = 0;

  std::size_t nnz() const noexcept { return indices.size(); }
  bool is_zero() const noexcept { return indices.empty(); }
};

// Sublinear tf times smoothed idf: (1 + ln tf) * (ln((1 + N) / (1 + df)) + 1).
inline double tfidf_weight(std::size_t tf, std::size_t doc_freq, std::size_t n_docs) {
  const double idf = std::log((1.0 + static_cast<double>(n_docs)) / (1.0 + static_cast<double>(doc_freq))) + 1.0;
  return (1.0 + std::log(static_cast<double>(tf))) * idf;
}

inline FeatureVector featurize(const std::vector<std::string>& tokens, const Vocabulary& vocab) {
  std::vector<std::uint32_t> hits;
  hits.reserve(tokens.size());
  for (const auto& t : tokens) {
    if (auto i = vocab.find(t)) hits.push_back(*i);
  }
  std::sort(hits.begin(), hits.end());
  FeatureVector fv;
  fv.dimension = vocab.size();
  for (std::size_t i = 0; i < hits.size();) {
    std::size_t j = i;
    while (j < hits.size() && hits[j] == hits[i]) ++j;
    fv.indices.push_back(hits[i]);
    fv.weights.push_back(tfidf_weight(j - i, vocab.doc_freq()[hits[i]], vocab.n_docs()));
    i = j;
  }
  double norm = 0.0;
  for (double w : fv.weights) norm += w * w;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (double& w : fv.weights) w /= norm;
  }
  return fv;
}

inline FeatureVector featurize(const Document& doc, const Vocabulary& vocab) {
  return featurize(doc.tokens(), vocab);
}

// ---------------------------------------------------------------------------
// Softmax network
// ---------------------------------------------------------------------------

enum class ClassifierKind { kLinear, kMlp };

inline std::string to_string(ClassifierKind kind) { return kind == ClassifierKind::kLinear ? "linear" : "mlp"; }

inline ClassifierKind parse_classifier_kind(const std::string& name) {
  if (name == "linear" || name == "linear-softmax") return ClassifierKind::kLinear;
  if (name == "mlp") return ClassifierKind::kMlp;
  throw DataError("unknown classifier kind '" + name + "' (expected linear or mlp)");
}

// Dense layer stored one row per input unit, so sparse inputs touch contiguous rows.
struct Layer {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::vector<double> weight;  // inputs x outputs
  std::vector<double> bias;    // outputs

  Layer() = default;
  Layer(std::size_t in, std::size_t out) : inputs(in), outputs(out), weight(in * out, 0.0), bias(out, 0.0) {}

  std::span<double> row(std::size_t i) { return {weight.data() + i * outputs, outputs}; }
  std::span<const double> row(std::size_t i) const { return {weight.data() + i * outputs, outputs}; }

  friend bool operator==(const Layer&, const Layer&) = default;
};

// One layer: linear softmax. Two layers: ReLU hidden layer, then softmax.
struct Network {
  std::vector<Layer> layers;

  friend bool operator==(const Network&, const Network&) = default;
};

struct ForwardPass {
  std::vector<double> hidden_pre;  // empty for the linear kind
  std::vector<double> hidden;
  std::vector<double> probs;
};

inline void softmax_inplace(std::vector<double>& z) {
  const double top = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double& v : z) {
    v = std::exp(v - top);
    total += v;
  }
  for (double& v : z) v /= total;
}

inline ForwardPass forward(const Network& net, const FeatureVector& x, double temperature = 1.0) {
  ForwardPass pass;
  const Layer& first = net.layers.front();
  std::vector<double> z(first.bias);
  for (std::size_t n = 0; n < x.nnz(); ++n) {
    const auto row = first.row(x.indices[n]);
    const double w = x.weights[n];
    for (std::size_t o = 0; o < first.outputs; ++o) z[o] += w * row[o];
  }
  if (net.layers.size() == 2) {
    const Layer& second = net.layers[1];
    pass.hidden_pre = z;
    pass.hidden = z;
    for (double& h : pass.hidden) h = std::max(h, 0.0);
    z = second.bias;
    for (std::size_t i = 0; i < second.inputs; ++i) {
      const double a = pass.hidden[i];
      if (a == 0.0) continue;
      const auto row = second.row(i);
      for (std::size_t o = 0; o < second.outputs; ++o) z[o] += a * row[o];
    }
  }
  if (temperature != 1.0) {
    for (double& v : z) v /= temperature;
  }
  softmax_inplace(z);
  pass.probs = std::move(z);
  return pass;
}

// Gradient of one layer; only the listed rows are non-zero.
struct LayerGradient {
  std::size_t outputs = 0;
  std::vector<std::uint32_t> rows;  // strictly increasing
  std::vector<double> values;       // rows.size() x outputs
  std::vector<double> bias;
};

struct NetworkGradient {
  std::vector<LayerGradient> layers;
  double loss = 0.0;  // mean cross-entropy over the batch
};

// Mean softmax cross-entropy over a batch and its exact gradient. The first
// layer's gradient is sparse over the features present in the batch.
inline NetworkGradient loss_and_gradient(const Network& net, std::span<const FeatureVector* const> batch,
                                         std::span<const std::size_t> labels) {
  const std::size_t batch_size = batch.size();
  const double scale = 1.0 / static_cast<double>(batch_size);
  const Layer& first = net.layers.front();

  NetworkGradient grad;
  grad.layers.resize(net.layers.size());

  LayerGradient& g0 = grad.layers[0];
  g0.outputs = first.outputs;
  g0.bias.assign(first.outputs, 0.0);
  for (const FeatureVector* x : batch) g0.rows.insert(g0.rows.end(), x->indices.begin(), x->indices.end());
  std::sort(g0.rows.begin(), g0.rows.end());
  g0.rows.erase(std::unique(g0.rows.begin(), g0.rows.end()), g0.rows.end());
  g0.values.assign(g0.rows.size() * first.outputs, 0.0);

  if (net.layers.size() == 2) {
    LayerGradient& g1 = grad.layers[1];
    const Layer& second = net.layers[1];
    g1.outputs = second.outputs;
    g1.rows.resize(second.inputs);
    for (std::size_t i = 0; i < second.inputs; ++i) g1.rows[i] = static_cast<std::uint32_t>(i);
    g1.values.assign(second.inputs * second.outputs, 0.0);
    g1.bias.assign(second.outputs, 0.0);
  }

  std::vector<double> delta_first(first.outputs);
  for (std::size_t b = 0; b < batch_size; ++b) {
    const FeatureVector& x = *batch[b];
    const ForwardPass pass = forward(net, x);
    grad.loss -= std::log(std::max(pass.probs[labels[b]], 1e-300)) * scale;

    std::vector<double> delta_out(pass.probs);
    delta_out[labels[b]] -= 1.0;
    for (double& d : delta_out) d *= scale;

    if (net.layers.size() == 2) {
      const Layer& second = net.layers[1];
      LayerGradient& g1 = grad.layers[1];
      for (std::size_t o = 0; o < second.outputs; ++o) g1.bias[o] += delta_out[o];
      for (std::size_t i = 0; i < second.inputs; ++i) {
        const double a = pass.hidden[i];
        const auto row = second.row(i);
        double back = 0.0;
        for (std::size_t o = 0; o < second.outputs; ++o) {
          if (a != 0.0) g1.values[i * second.outputs + o] += a * delta_out[o];
          back += row[o] * delta_out[o];
        }
        delta_first[i] = pass.hidden_pre[i] > 0.0 ? back : 0.0;
      }
    } else {
      delta_first = delta_out;
    }

    for (std::size_t o = 0; o < first.outputs; ++o) g0.bias[o] += delta_first[o];
    for (std::size_t n = 0; n < x.nnz(); ++n) {
      const auto pos = static_cast<std::size_t>(
          std::lower_bound(g0.rows.begin(), g0.rows.end(), x.indices[n]) - g0.rows.begin());
      double* dst = g0.values.data() + pos * first.outputs;
      for (std::size_t o = 0; o < first.outputs; ++o) dst[o] += x.weights[n] * delta_first[o];
    }
  }
  return grad;
}

inline void apply_gradient(Network& net, const NetworkGradient& grad, double step) {
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    Layer& layer = net.layers[l];
    const LayerGradient& g = grad.layers[l];
    for (std::size_t r = 0; r < g.rows.size(); ++r) {
      auto row = layer.row(g.rows[r]);
      const double* src = g.values.data() + r * g.outputs;
      for (std::size_t o = 0; o < g.outputs; ++o) row[o] -= step * src[o];
    }
    for (std::size_t o = 0; o < g.outputs; ++o) layer.bias[o] -= step * g.bias[o];
  }
}

// ---------------------------------------------------------------------------
// Trained model
// ---------------------------------------------------------------------------

struct ClassifierConfig {
  ClassifierKind kind = ClassifierKind::kLinear;
  int epochs = 10;
  double learning_rate = 0.1;  // decays as 1/sqrt(epoch)
  std::size_t batch_size = 64;
  std::size_t hidden_size = 256;
  std::uint64_t seed = 20240601;
  std::size_t max_features = 50000;
  std::size_t min_doc_freq = 2;
};

struct TrainingMeta {
  std::uint64_t seed = 0;
  int epochs = 0;
  double learning_rate = 0.0;
  std::size_t batch_size = 0;
  std::size_t hidden_size = 0;
  std::size_t max_features = 0;
  std::size_t min_doc_freq = 0;
  std::uint64_t split_seed = 0;
  double heldout_fraction = 0.0;
  double final_loss = 0.0;
  std::size_t train_documents = 0;

  friend bool operator==(const TrainingMeta&, const TrainingMeta&) = default;
};

// The frozen proxy classifier. Immutable once trained; safe to share across threads.
class ClassifierModel {
 public:
  ClassifierModel(ClassifierKind kind, DomainTaxonomy taxonomy, Vocabulary vocabulary, Network network,
                  TrainingMeta meta, double temperature = 1.0)
      : kind_(kind),
        taxonomy_(std::move(taxonomy)),
        vocabulary_(std::move(vocabulary)),
        network_(std::move(network)),
        meta_(meta),
        temperature_(temperature) {
    const std::size_t expected_layers = kind_ == ClassifierKind::kLinear ? 1 : 2;
    if (network_.layers.size() != expected_layers) throw DataError("network depth does not match classifier kind");
    if (network_.layers.front().inputs != vocabulary_.size()) throw DataError("network input size != vocabulary size");
    if (network_.layers.back().outputs != taxonomy_.size()) throw DataError("network output size != taxonomy size");
    if (!(temperature_ > 0.0) || !std::isfinite(temperature_)) throw DataError("temperature must be positive");
  }

  ClassifierKind kind() const noexcept { return kind_; }
  const DomainTaxonomy& taxonomy() const noexcept { return taxonomy_; }
  const Vocabulary& vocabulary() const noexcept { return vocabulary_; }
  const Network& network() const noexcept { return network_; }
  const TrainingMeta& meta() const noexcept { return meta_; }
  double temperature() const noexcept { return temperature_; }

  ClassifierModel with_temperature(double temperature) const {
    return ClassifierModel(kind_, taxonomy_, vocabulary_, network_, meta_, temperature);
  }

  std::vector<double> predict_values(const FeatureVector& x) const { return forward(network_, x, temperature_).probs; }
  std::vector<double> predict_values(const Document& doc) const { return predict_values(featurize(doc, vocabulary_)); }

  friend bool operator==(const ClassifierModel& a, const ClassifierModel& b) {
    return a.kind_ == b.kind_ && a.taxonomy_ == b.taxonomy_ && a.vocabulary_.terms() == b.vocabulary_.terms() &&
           a.vocabulary_.doc_freq() == b.vocabulary_.doc_freq() && a.vocabulary_.n_docs() == b.vocabulary_.n_docs() &&
           a.network_ == b.network_ && a.meta_ == b.meta_ && a.temperature_ == b.temperature_;
  }

 private:
  ClassifierKind kind_;
  DomainTaxonomy taxonomy_;
  Vocabulary vocabulary_;
  Network network_;
  TrainingMeta meta_;
  double temperature_;
};

inline MixtureVector predict_proba(const ClassifierModel& model, const Document& doc) {
  return MixtureVector(model.predict_values(doc), model.taxonomy(), MixtureRole::kObservation);
}

// Class-probability vectors for a batch of documents, in input order.
inline std::vector<std::vector<double>> predict_all(const ClassifierModel& model, const std::vector<Document>& docs) {
  std::vector<std::vector<double>> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(model.predict_values(d));
  return out;
}

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline double classification_accuracy(const ClassifierModel& model, const std::vector<LabeledDocument>& docs) {
  if (docs.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& item : docs) {
    if (argmax(model.predict_values(item.doc)) == item.domain) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(docs.size());
}

inline Network init_network(ClassifierKind kind, std::size_t inputs, std::size_t hidden, std::size_t classes,
                            std::uint64_t seed) {
  Network net;
  if (kind == ClassifierKind::kLinear) {
    net.layers.emplace_back(inputs, classes);
    return net;
  }
  if (hidden == 0) throw DataError("mlp hidden_size must be positive");
  Rng rng(seed);
  net.layers.emplace_back(inputs, hidden);
  net.layers.emplace_back(hidden, classes);
  for (auto& layer : net.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.inputs));
    for (double& w : layer.weight) w = (2.0 * uniform_real(rng) - 1.0) * bound;
  }
  return net;
}

// Mini-batch gradient descent on softmax cross-entropy over split.train only.
// Single-threaded and deterministic given the config and data.
inline ClassifierModel train_classifier(const SplitPair& split, const DomainTaxonomy& taxonomy,
                                        const ClassifierConfig& config) {
  if (split.train.empty()) throw DataError("no training documents");
  if (config.epochs < 0) throw DataError("epochs must be non-negative");
  if (!(config.learning_rate > 0.0)) throw DataError("learning_rate must be positive");
  if (config.batch_size == 0) throw DataError("batch_size must be positive");
  std::vector<std::size_t> per_domain(taxonomy.size(), 0);
  for (const auto& item : split.train) {
    if (item.domain >= taxonomy.size()) throw DataError("training label out of taxonomy range");
    ++per_domain[item.domain];
  }
  for (std::size_t d = 0; d < taxonomy.size(); ++d) {
    if (per_domain[d] == 0) throw DataError("domain '" + taxonomy.name(d) + "' has no training documents");
  }

  std::vector<std::vector<std::string>> tokenized;
  tokenized.reserve(split.train.size());
  for (const auto& item : split.train) tokenized.push_back(item.doc.tokens());
  if (config.max_features < taxonomy.size()) throw DataError("max_features must be at least the number of domains");
  Vocabulary vocab = build_vocabulary(tokenized, config.max_features, config.min_doc_freq);

  std::vector<FeatureVector> features;
  std::vector<std::size_t> labels;
  features.reserve(tokenized.size());
  for (std::size_t i = 0; i < tokenized.size(); ++i) {
    features.push_back(featurize(tokenized[i], vocab));
    labels.push_back(split.train[i].domain);
  }
  tokenized.clear();

  Network net = init_network(config.kind, vocab.size(), config.hidden_size, taxonomy.size(), config.seed);
  Rng order_rng(config.seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<std::size_t> order(features.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<const FeatureVector*> batch;
  std::vector<std::size_t> batch_labels;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle(order, order_rng);
    const double step = config.learning_rate / std::sqrt(static_cast<double>(epoch));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      batch_labels.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(&features[order[i]]);
        batch_labels.push_back(labels[order[i]]);
      }
      const NetworkGradient grad = loss_and_gradient(net, batch, batch_labels);
      if (!std::isfinite(grad.loss)) {
        throw DataError("non-finite training loss in epoch " + std::to_string(epoch));
      }
      epoch_loss += grad.loss * static_cast<double>(end - start);
      apply_gradient(net, grad, step);
    }
    if (!std::isfinite(epoch_loss)) throw DataError("non-finite training loss in epoch " + std::to_string(epoch));
  }

  double final_loss = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    final_loss -= std::log(std::max(forward(net, features[i]).probs[labels[i]], 1e-300));
  }
  final_loss /= static_cast<double>(features.size());
  if (!std::isfinite(final_loss)) throw DataError("non-finite training loss after epoch " + std::to_string(config.epochs));

  TrainingMeta meta;
  meta.seed = config.seed;
  meta.epochs = config.epochs;
  meta.learning_rate = config.learning_rate;
  meta.batch_size = config.batch_size;
  meta.hidden_size = config.kind == ClassifierKind::kMlp ? config.hidden_size : 0;
  meta.max_features = config.max_features;
  meta.min_doc_freq = config.min_doc_freq;
  meta.split_seed = split.seed;
  meta.heldout_fraction = split.heldout_fraction;
  meta.final_loss = final_loss;
  meta.train_documents = features.size();
  return ClassifierModel(config.kind, taxonomy, std::move(vocab), std::move(net), meta);
}

// ---------------------------------------------------------------------------
// Temperature scaling
// ---------------------------------------------------------------------------

inline double mean_cross_entropy(const ClassifierModel& model, const std::vector<LabeledDocument>& docs) {
  double total = 0.0;
  for (const auto& item : docs) total -= std::log(std::max(model.predict_values(item.doc)[item.domain], 1e-300));
  return total / static_cast<double>(docs.size());
}

// Single temperature minimizing cross-entropy on `calibration_docs`, by
// golden-section search over [lo, hi].
inline double fit_temperature(const ClassifierModel& model, const std::vector<LabeledDocument>& calibration_docs,
                              double lo = 0.25, double hi = 4.0, int iterations = 60) {
  if (calibration_docs.empty()) throw DataError("temperature fitting needs calibration documents");
  std::vector<FeatureVector> features;
  features.reserve(calibration_docs.size());
  for (const auto& item : calibration_docs) features.push_back(featurize(item.doc, model.vocabulary()));
  auto loss = [&](double t) {
    double total = 0.0;
    for (std::size_t i = 0; i < features.size(); ++i) {
      total -= std::log(std::max(forward(model.network(), features[i], t).probs[calibration_docs[i].domain], 1e-300));
    }
    return total;
  };
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo;
  double b = hi;
  double c = b - ratio * (b - a);
  double d = a + ratio * (b - a);
  double fc = loss(c);
  double fd = loss(d);
  for (int it = 0; it < iterations; ++it) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - ratio * (b - a);
      fc = loss(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + ratio * (b - a);
      fd = loss(d);
    }
  }
  return (a + b) / 2.0;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json model_to_json(const ClassifierModel& model) {
  nlohmann::json j;
  j["format"] = "mixaudit-classifier";
  j["version"] = kModelFormatVersion;
  j["kind"] = to_string(model.kind());
  j["taxonomy"] = model.taxonomy().labels();
  j["temperature"] = model.temperature();
  j["vocabulary"] = {{"terms", model.vocabulary().terms()},
                     {"doc_freq", model.vocabulary().doc_freq()},
                     {"n_docs", model.vocabulary().n_docs()}};
  auto layers = nlohmann::json::array();
  for (const auto& layer : model.network().layers) {
    layers.push_back({{"inputs", layer.inputs}, {"outputs", layer.outputs}, {"weight", layer.weight}, {"bias", layer.bias}});
  }
  j["layers"] = layers;
  const auto& m = model.meta();
  j["training"] = {{"seed", m.seed},
                   {"epochs", m.epochs},
                   {"learning_rate", m.learning_rate},
                   {"batch_size", m.batch_size},
                   {"hidden_size", m.hidden_size},
                   {"max_features", m.max_features},
                   {"min_doc_freq", m.min_doc_freq},
                   {"split_seed", m.split_seed},
                   {"heldout_fraction", m.heldout_fraction},
                   {"final_loss", m.final_loss},
                   {"train_documents", m.train_documents}};
  return j;
}

inline ClassifierModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "mixaudit-classifier") throw DataError("not a classifier model file");
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion) throw DataError("unsupported model version " + std::to_string(version));
    Vocabulary vocab(j.at("vocabulary").at("terms").get<std::vector<std::string>>(),
                     j.at("vocabulary").at("doc_freq").get<std::vector<std::size_t>>(),
                     j.at("vocabulary").at("n_docs").get<std::size_t>());
    Network net;
    for (const auto& lj : j.at("layers")) {
      Layer layer;
      layer.inputs = lj.at("inputs").get<std::size_t>();
      layer.outputs = lj.at("outputs").get<std::size_t>();
      layer.weight = lj.at("weight").get<std::vector<double>>();
      layer.bias = lj.at("bias").get<std::vector<double>>();
      if (layer.weight.size() != layer.inputs * layer.outputs || layer.bias.size() != layer.outputs) {
        throw DataError("layer shape does not match its weights");
      }
      net.layers.push_back(std::move(layer));
    }
    const auto& t = j.at("training");
    TrainingMeta meta;
    meta.seed = t.at("seed").get<std::uint64_t>();
    meta.epochs = t.at("epochs").get<int>();
    meta.learning_rate = t.at("learning_rate").get<double>();
    meta.batch_size = t.at("batch_size").get<std::size_t>();
    meta.hidden_size = t.at("hidden_size").get<std::size_t>();
    meta.max_features = t.at("max_features").get<std::size_t>();
    meta.min_doc_freq = t.at("min_doc_freq").get<std::size_t>();
    meta.split_seed = t.at("split_seed").get<std::uint64_t>();
    meta.heldout_fraction = t.at("heldout_fraction").get<double>();
    meta.final_loss = t.at("final_loss").get<double>();
    meta.train_documents = t.at("train_documents").get<std::size_t>();
    return ClassifierModel(parse_classifier_kind(j.at("kind").get<std::string>()),
                           DomainTaxonomy(j.at("taxonomy").get<std::vector<std::string>>()), std::move(vocab),
                           std::move(net), meta, j.at("temperature").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  }
}

namespace detail {
inline bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}
}  // namespace detail

// Paths ending in ".json" hold text JSON; anything else holds the same document as CBOR.
inline void save_model(const ClassifierModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model file: " + path);
  const auto j = model_to_json(model);
  if (detail::ends_with(path, ".json")) {
    out << j.dump() << '\n';
  } else {
    const auto bytes = nlohmann::json::to_cbor(j);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  if (!out) throw DataError("failed writing model file: " + path);
}

inline ClassifierModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file: " + path);
  try {
    if (detail::ends_with(path, ".json")) return model_from_json(nlohmann::json::parse(in));
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return model_from_json(nlohmann::json::from_cbor(bytes));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed model file " + path + ": " + e.what());
  }
}

}  // namespace mixaudit
