#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mixaudit/corpus.hpp"
#include "mixaudit/error.hpp"
#include "mixaudit/random.hpp"
#include "mixaudit/taxonomy.hpp"

namespace mixaudit {

// Synthetic domains: each domain is an order-1 Markov chain over its own word
// list. `overlap` is the fraction of that list drawn from a pool of words
// shared by all domains; 0 gives disjoint vocabularies. A domain with
// `same_as` reuses another domain's chain and documents verbatim.
struct SyntheticDomain {
  std::string name;
  std::size_t vocab_size = 200;
  double overlap = 0.0;
  std::size_t min_length = 30;
  std::size_t max_length = 80;
  std::optional<std::string> same_as;
};

struct FixtureConfig {
  std::vector<SyntheticDomain> domains;
  std::size_t reference_docs_per_domain = 1000;  // labeled corpus for training + calibration
  std::size_t pool_docs_per_domain = 500;        // evaluation pools for mixture sampling
  std::size_t shared_vocab_size = 0;             // 0 = largest domain vocab_size
  std::vector<double> alpha;
  std::size_t n_samples = 5000;
  std::uint64_t seed = 7;
  std::optional<std::map<std::string, std::string>> merge;  // optional {original: merged}
};

struct Fixture {
  DomainTaxonomy taxonomy;
  std::vector<LabeledDocument> reference;  // classifier training + held-out calibration
  std::vector<LabeledDocument> pools;      // evaluation pools, disjoint from `reference`
};

inline FixtureConfig fixture_config_from_json(const nlohmann::json& j) {
  FixtureConfig cfg;
  try {
    for (const auto& dj : j.at("domains")) {
      SyntheticDomain d;
      d.name = dj.at("name").get<std::string>();
      d.vocab_size = dj.value("vocab_size", d.vocab_size);
      d.overlap = dj.value("overlap", d.overlap);
      if (dj.contains("doc_length")) {
        const auto range = dj.at("doc_length").get<std::vector<std::size_t>>();
        if (range.size() != 2) throw DataError("doc_length must be [min, max]");
        d.min_length = range[0];
        d.max_length = range[1];
      }
      if (dj.contains("same_as") && !dj.at("same_as").is_null()) d.same_as = dj.at("same_as").get<std::string>();
      cfg.domains.push_back(d);
    }
    cfg.reference_docs_per_domain = j.value("reference_docs_per_domain", cfg.reference_docs_per_domain);
    cfg.pool_docs_per_domain = j.value("pool_docs_per_domain", cfg.pool_docs_per_domain);
    cfg.shared_vocab_size = j.value("shared_vocab_size", cfg.shared_vocab_size);
    cfg.alpha = j.at("alpha").get<std::vector<double>>();
    cfg.n_samples = j.value("n_samples", cfg.n_samples);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("merge") && !j.at("merge").is_null()) {
      cfg.merge = j.at("merge").get<std::map<std::string, std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed fixture config: ") + e.what());
  }
  if (cfg.domains.size() < 2) throw DataError("fixture config needs at least 2 domains");
  if (cfg.alpha.size() != cfg.domains.size()) throw DataError("fixture alpha length must equal the number of domains");
  if (cfg.n_samples == 0) throw DataError("n_samples must be at least 1");
  if (cfg.reference_docs_per_domain == 0 || cfg.pool_docs_per_domain == 0) {
    throw DataError("fixture document counts must be positive");
  }
  for (const auto& d : cfg.domains) {
    if (d.vocab_size == 0) throw DataError("domain '" + d.name + "' needs a positive vocab_size");
    if (d.overlap < 0.0 || d.overlap > 1.0) throw DataError("domain '" + d.name + "' overlap must lie in [0, 1]");
    if (d.min_length == 0 || d.min_length > d.max_length) throw DataError("domain '" + d.name + "' has a bad doc_length");
  }
  return cfg;
}

inline FixtureConfig load_fixture_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open fixture config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed fixture config " + path + ": " + e.what());
  }
  return fixture_config_from_json(j);
}

inline DomainTaxonomy fixture_taxonomy(const FixtureConfig& cfg) {
  std::vector<std::string> names;
  for (const auto& d : cfg.domains) names.push_back(d.name);
  return DomainTaxonomy(std::move(names));
}

namespace detail {

class MarkovChain {
 public:
  MarkovChain(std::vector<std::string> words, Rng& rng) : words_(std::move(words)) {
    const std::size_t n = words_.size();
    start_ = skewed_cumulative(n, rng);
    transitions_.reserve(n);
    for (std::size_t i = 0; i < n; ++i) transitions_.push_back(skewed_cumulative(n, rng));
  }

  std::string generate(std::size_t length, Rng& rng) const {
    std::string text;
    std::size_t state = sample_cumulative(start_, rng);
    for (std::size_t t = 0; t < length; ++t) {
      if (t > 0) text.push_back(' ');
      text += words_[state];
      state = sample_cumulative(transitions_[state], rng);
    }
    return text;
  }

 private:
  // Heavy-tailed random weights so each state prefers a few successors.
  static std::vector<double> skewed_cumulative(std::size_t n, Rng& rng) {
    std::vector<double> cumulative(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double u = uniform_real(rng);
      total += u * u * u * u + 1e-3;
      cumulative[i] = total;
    }
    return cumulative;
  }

  std::vector<std::string> words_;
  std::vector<double> start_;
  std::vector<std::vector<double>> transitions_;
};

inline std::string random_word(Rng& rng) {
  const std::size_t length = 3 + uniform_index(rng, 6);
  std::string word;
  for (std::size_t i = 0; i < length; ++i) word.push_back(static_cast<char>('a' + uniform_index(rng, 26)));
  return word;
}

}  // namespace detail

inline Fixture generate_fixture(const FixtureConfig& cfg) {
  Fixture fixture;
  fixture.taxonomy = fixture_taxonomy(cfg);
  const std::size_t k = cfg.domains.size();
  Rng rng(cfg.seed);

  std::set<std::string> used;
  auto fresh_word = [&] {
    for (;;) {
      auto w = detail::random_word(rng);
      if (used.insert(w).second) return w;
    }
  };

  std::size_t shared_size = cfg.shared_vocab_size;
  if (shared_size == 0) {
    for (const auto& d : cfg.domains) shared_size = std::max(shared_size, d.vocab_size);
  }
  std::vector<std::string> shared;
  for (std::size_t i = 0; i < shared_size; ++i) shared.push_back(fresh_word());

  std::vector<std::optional<detail::MarkovChain>> chains(k);
  std::vector<std::optional<std::size_t>> alias(k);
  for (std::size_t d = 0; d < k; ++d) {
    const auto& spec = cfg.domains[d];
    if (spec.same_as) {
      auto target = fixture.taxonomy.find(*spec.same_as);
      if (!target || *target >= d) {
        throw DataError("domain '" + spec.name + "' same_as must name an earlier domain");
      }
      alias[d] = alias[*target] ? alias[*target] : target;
      continue;
    }
    std::vector<std::string> words;
    auto n_shared = static_cast<std::size_t>(std::llround(spec.overlap * static_cast<double>(spec.vocab_size)));
    n_shared = std::min({n_shared, spec.vocab_size, shared.size()});
    std::vector<std::string> pick(shared);
    shuffle(pick, rng);
    words.assign(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(n_shared));
    while (words.size() < spec.vocab_size) words.push_back(fresh_word());
    chains[d].emplace(std::move(words), rng);
  }

  std::vector<std::vector<std::string>> reference_texts(k);
  std::vector<std::vector<std::string>> pool_texts(k);
  for (std::size_t d = 0; d < k; ++d) {
    if (alias[d]) continue;
    const auto& spec = cfg.domains[d];
    auto length = [&] { return spec.min_length + uniform_index(rng, spec.max_length - spec.min_length + 1); };
    for (std::size_t n = 0; n < cfg.reference_docs_per_domain; ++n) {
      reference_texts[d].push_back(chains[d]->generate(length(), rng));
    }
    for (std::size_t n = 0; n < cfg.pool_docs_per_domain; ++n) {
      pool_texts[d].push_back(chains[d]->generate(length(), rng));
    }
  }
  for (std::size_t d = 0; d < k; ++d) {
    const std::size_t source = alias[d] ? *alias[d] : d;
    for (const auto& text : reference_texts[source]) fixture.reference.push_back(LabeledDocument{Document{text}, d});
    for (const auto& text : pool_texts[source]) fixture.pools.push_back(LabeledDocument{Document{text}, d});
  }
  return fixture;
}

}  // namespace mixaudit
