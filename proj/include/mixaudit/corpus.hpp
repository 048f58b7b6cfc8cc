#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mixaudit/error.hpp"
#include "mixaudit/random.hpp"
#include "mixaudit/taxonomy.hpp"
#include "mixaudit/tokenizer.hpp"

namespace mixaudit {

struct Document {
  std::string text;

  std::vector<std::string> tokens() const { return tokenize(text); }

  friend bool operator==(const Document&, const Document&) = default;
};

struct LabeledDocument {
  Document doc;
  std::size_t domain = 0;

  friend bool operator==(const LabeledDocument&, const LabeledDocument&) = default;
};

// A loaded corpus file. Labeled files fill `labeled` and `taxonomy`;
// unlabeled files fill `unlabeled` only.
struct Corpus {
  std::optional<DomainTaxonomy> taxonomy;
  std::vector<LabeledDocument> labeled;
  std::vector<Document> unlabeled;

  bool is_labeled() const noexcept { return taxonomy.has_value(); }

  std::size_t size() const noexcept { return is_labeled() ? labeled.size() : unlabeled.size(); }

  // Every document's text, labeled or not, in file order.
  std::vector<Document> documents() const {
    if (!is_labeled()) return unlabeled;
    std::vector<Document> out;
    out.reserve(labeled.size());
    for (const auto& item : labeled) out.push_back(item.doc);
    return out;
  }
};

namespace detail {

inline bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

inline std::string trim_copy(const std::string& s) {
  auto begin = s.find_first_not_of(" \t\r\n\v\f");
  if (begin == std::string::npos) return {};
  auto end = s.find_last_not_of(" \t\r\n\v\f");
  return s.substr(begin, end - begin + 1);
}

}  // namespace detail

// Reads newline-delimited JSON records {"text": ..., "domain": ...}. When
// `taxonomy` is null and the records are labeled, the taxonomy is built from
// the distinct domains in first-appearance order. Blank lines are skipped.
inline Corpus read_corpus(std::istream& in, const DomainTaxonomy* taxonomy = nullptr,
                          const std::string& source = "<stream>") {
  std::vector<std::pair<std::string, std::optional<std::string>>> records;
  std::string line;
  std::size_t line_no = 0;
  std::optional<bool> labeled;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::blank(line)) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw DataError("malformed record at line " + std::to_string(line_no) + " (" + where + ")");
    }
    if (!rec.is_object() || !rec.contains("text") || !rec["text"].is_string()) {
      throw DataError("malformed record at line " + std::to_string(line_no) +
                      ": missing string field 'text' (" + where + ")");
    }
    std::string text = rec["text"].get<std::string>();
    if (detail::trim_copy(text).empty()) {
      throw DataError("empty text at line " + std::to_string(line_no) + " (" + where + ")");
    }
    std::optional<std::string> domain;
    if (rec.contains("domain") && !rec["domain"].is_null()) {
      if (!rec["domain"].is_string()) {
        throw DataError("malformed record at line " + std::to_string(line_no) +
                        ": 'domain' must be a string (" + where + ")");
      }
      domain = rec["domain"].get<std::string>();
    }
    if (labeled && *labeled != domain.has_value()) {
      throw DataError("line " + std::to_string(line_no) +
                      ": corpus mixes labeled and unlabeled records (" + where + ")");
    }
    labeled = domain.has_value();
    records.emplace_back(std::move(text), std::move(domain));
  }
  if (records.empty()) throw DataError("corpus is empty: " + source);

  Corpus corpus;
  if (!*labeled) {
    corpus.unlabeled.reserve(records.size());
    for (auto& [text, _] : records) corpus.unlabeled.push_back(Document{std::move(text)});
    return corpus;
  }

  if (taxonomy != nullptr) {
    corpus.taxonomy = *taxonomy;
  } else {
    std::vector<std::string> names;
    for (const auto& [_, domain] : records) {
      if (std::find(names.begin(), names.end(), *domain) == names.end()) names.push_back(*domain);
    }
    corpus.taxonomy = DomainTaxonomy(std::move(names));
  }
  corpus.labeled.reserve(records.size());
  for (auto& [text, domain] : records) {
    auto index = corpus.taxonomy->find(*domain);
    if (!index) throw DataError("unknown domain '" + *domain + "' in " + source);
    corpus.labeled.push_back(LabeledDocument{Document{std::move(text)}, *index});
  }
  return corpus;
}

inline Corpus load_corpus(const std::string& path, const DomainTaxonomy* taxonomy = nullptr) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file: " + path);
  return read_corpus(in, taxonomy, path);
}

inline void write_corpus(std::ostream& out, const std::vector<LabeledDocument>& docs,
                         const DomainTaxonomy& taxonomy) {
  for (const auto& item : docs) {
    nlohmann::ordered_json rec;
    rec["text"] = item.doc.text;
    rec["domain"] = taxonomy.name(item.domain);
    out << rec.dump() << '\n';
  }
}

inline void write_corpus(std::ostream& out, const std::vector<Document>& docs) {
  for (const auto& doc : docs) {
    nlohmann::ordered_json rec;
    rec["text"] = doc.text;
    out << rec.dump() << '\n';
  }
}

inline void save_corpus(const std::string& path, const std::vector<LabeledDocument>& docs,
                        const DomainTaxonomy& taxonomy) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write corpus file: " + path);
  write_corpus(out, docs, taxonomy);
}

// Train / held-out partition. Document identity is the position in the input
// list, recorded in the *_ids vectors.
struct SplitPair {
  std::vector<LabeledDocument> train;
  std::vector<LabeledDocument> heldout;
  std::vector<std::size_t> train_ids;
  std::vector<std::size_t> heldout_ids;
  std::uint64_t seed = 0;
  double heldout_fraction = 0.0;
  std::vector<std::string> warnings;
};

// Per-domain shuffle, then ceil(n * heldout_fraction) documents of each domain
// (at least 1 when n >= 2) go to the held-out half. Each domain's shuffle uses
// a generator freshly seeded with `seed`. Output is grouped by domain index.
inline SplitPair stratified_split(const std::vector<LabeledDocument>& docs,
                                  double heldout_fraction, std::uint64_t seed) {
  if (!(heldout_fraction > 0.0 && heldout_fraction < 1.0)) {
    throw DataError("heldout_fraction must lie in (0, 1), got " + std::to_string(heldout_fraction));
  }
  if (docs.empty()) throw DataError("cannot split an empty corpus");

  std::size_t num_domains = 0;
  for (const auto& d : docs) num_domains = std::max(num_domains, d.domain + 1);
  std::vector<std::vector<std::size_t>> by_domain(num_domains);
  for (std::size_t i = 0; i < docs.size(); ++i) by_domain[docs[i].domain].push_back(i);

  SplitPair split;
  split.seed = seed;
  split.heldout_fraction = heldout_fraction;
  for (std::size_t d = 0; d < num_domains; ++d) {
    auto& ids = by_domain[d];
    if (ids.empty()) continue;
    Rng rng(seed);
    shuffle(ids, rng);
    std::size_t n_heldout = 0;
    if (ids.size() >= 2) {
      // The slack keeps products like 10 * 0.7 from rounding up past the integer.
      n_heldout = static_cast<std::size_t>(
          std::ceil(static_cast<double>(ids.size()) * heldout_fraction - 1e-9));
      n_heldout = std::clamp<std::size_t>(n_heldout, 1, ids.size() - 1);
    } else {
      split.warnings.push_back("domain index " + std::to_string(d) +
                               " has a single document; assigned to train only");
    }
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const bool held = k < n_heldout;
      (held ? split.heldout : split.train).push_back(docs[ids[k]]);
      (held ? split.heldout_ids : split.train_ids).push_back(ids[k]);
    }
  }
  return split;
}

}  // namespace mixaudit
