#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mixaudit/classifier.hpp"
#include "mixaudit/corpus.hpp"
#include "mixaudit/error.hpp"
#include "mixaudit/format.hpp"
#include "mixaudit/linalg.hpp"
#include "mixaudit/mixture.hpp"
#include "mixaudit/taxonomy.hpp"

namespace mixaudit {

// Soft confusion matrix: entry (i, j) is the mean probability the classifier
// assigns to domain j over held-out documents whose true domain is i.
class ConfusionMatrix {
 public:
  // per_row_count may be empty for matrices that were not estimated from data
  // (hand-built operators, CSV imports).
  ConfusionMatrix(Matrix entries, DomainTaxonomy taxonomy, std::vector<std::size_t> per_row_count = {})
      : entries_(std::move(entries)), taxonomy_(std::move(taxonomy)), per_row_count_(std::move(per_row_count)) {
    const std::size_t k = taxonomy_.size();
    if (entries_.rows() != k || entries_.cols() != k) throw DataError("confusion matrix shape does not match taxonomy");
    for (std::size_t i = 0; i < k; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const double v = entries_(i, j);
        if (!std::isfinite(v) || v < 0.0 || v > 1.0 + kSimplexTolerance) {
          throw DataError("confusion matrix entry outside [0, 1] in row '" + taxonomy_.name(i) + "'");
        }
        sum += v;
      }
      if (std::abs(sum - 1.0) > kSimplexTolerance) {
        throw DataError("confusion matrix row '" + taxonomy_.name(i) + "' does not sum to 1");
      }
    }
    if (!per_row_count_.empty()) {
      if (per_row_count_.size() != k) throw DataError("per_row_count size does not match taxonomy");
      for (std::size_t i = 0; i < k; ++i) {
        if (per_row_count_[i] == 0) throw DataError("confusion row '" + taxonomy_.name(i) + "' has no documents");
      }
    }
  }

  const Matrix& entries() const noexcept { return entries_; }
  double operator()(std::size_t i, std::size_t j) const { return entries_(i, j); }
  std::size_t size() const noexcept { return taxonomy_.size(); }
  const DomainTaxonomy& taxonomy() const noexcept { return taxonomy_; }
  const std::vector<std::size_t>& per_row_count() const noexcept { return per_row_count_; }

  static ConfusionMatrix identity(const DomainTaxonomy& taxonomy) {
    return ConfusionMatrix(Matrix::identity(taxonomy.size()), taxonomy);
  }

 private:
  Matrix entries_;
  DomainTaxonomy taxonomy_;
  std::vector<std::size_t> per_row_count_;
};

// Builds C from per-document probability vectors and their true labels.
// Row sums use fixed-order pairwise summation by input index.
inline ConfusionMatrix confusion_from_predictions(const std::vector<std::vector<double>>& predictions,
                                                  const std::vector<std::size_t>& labels,
                                                  const DomainTaxonomy& taxonomy) {
  const std::size_t k = taxonomy.size();
  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n] >= k) throw DataError("held-out label out of taxonomy range");
    members[labels[n]].push_back(n);
  }
  Matrix entries(k, k);
  std::vector<std::size_t> counts(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (members[i].empty()) throw DataError("no held-out documents for domain '" + taxonomy.name(i) + "'");
    const auto sum = pairwise_sum(0, members[i].size(), k,
                                  [&](std::size_t m) -> const std::vector<double>& { return predictions[members[i][m]]; });
    counts[i] = members[i].size();
    for (std::size_t j = 0; j < k; ++j) entries(i, j) = sum[j] / static_cast<double>(counts[i]);
  }
  return ConfusionMatrix(std::move(entries), taxonomy, std::move(counts));
}

inline ConfusionMatrix estimate_confusion_matrix(const ClassifierModel& model,
                                                 const std::vector<LabeledDocument>& heldout) {
  std::vector<std::vector<double>> predictions;
  std::vector<std::size_t> labels;
  predictions.reserve(heldout.size());
  labels.reserve(heldout.size());
  for (const auto& item : heldout) {
    predictions.push_back(model.predict_values(item.doc));
    labels.push_back(item.domain);
  }
  return confusion_from_predictions(predictions, labels, model.taxonomy());
}

// sqrt(lambda_max / lambda_min) of C^T C. `singular` is set (and value is
// +inf) when lambda_min < 1e-14 * lambda_max.
struct ConditionNumber {
  double value = 1.0;
  bool singular = false;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
};

inline constexpr double kSingularRatio = 1e-14;

inline ConditionNumber condition_number(const Matrix& c) {
  const auto eig = jacobi_eigenvalues(c.transpose() * c);
  ConditionNumber out;
  out.lambda_min = eig.front();
  out.lambda_max = eig.back();
  if (!(out.lambda_max > 0.0) || out.lambda_min < kSingularRatio * out.lambda_max) {
    out.singular = true;
    out.value = std::numeric_limits<double>::infinity();
  } else {
    out.value = std::sqrt(out.lambda_max / out.lambda_min);
  }
  return out;
}

inline ConditionNumber condition_number(const ConfusionMatrix& c) { return condition_number(c.entries()); }

// ---------------------------------------------------------------------------
// Taxonomy merging
// ---------------------------------------------------------------------------

class MergeMapping {
 public:
  // `group[i]` is the merged index of original domain i.
  MergeMapping(DomainTaxonomy original, DomainTaxonomy merged, std::vector<std::size_t> group)
      : original_(std::move(original)), merged_(std::move(merged)), group_(std::move(group)) {
    if (group_.size() != original_.size()) throw DataError("merge mapping must assign every original domain");
    std::vector<bool> hit(merged_.size(), false);
    for (std::size_t g : group_) {
      if (g >= merged_.size()) throw DataError("merge mapping refers to a group outside the merged taxonomy");
      hit[g] = true;
    }
    for (std::size_t g = 0; g < hit.size(); ++g) {
      if (!hit[g]) throw DataError("merged domain '" + merged_.name(g) + "' receives no original domain");
    }
  }

  // From {original_name: merged_name}. Merged order follows the first
  // appearance of each merged name when walking the original taxonomy.
  static MergeMapping from_names(const DomainTaxonomy& original, const std::map<std::string, std::string>& names) {
    for (const auto& [from, _] : names) {
      if (!original.find(from)) throw DataError("merge mapping names unknown domain '" + from + "'");
    }
    std::vector<std::string> merged_names;
    std::vector<std::size_t> group(original.size());
    for (std::size_t i = 0; i < original.size(); ++i) {
      auto it = names.find(original.name(i));
      if (it == names.end()) throw DataError("merge mapping does not cover domain '" + original.name(i) + "'");
      auto pos = std::find(merged_names.begin(), merged_names.end(), it->second);
      if (pos == merged_names.end()) {
        merged_names.push_back(it->second);
        pos = merged_names.end() - 1;
      }
      group[i] = static_cast<std::size_t>(pos - merged_names.begin());
    }
    return MergeMapping(original, DomainTaxonomy(std::move(merged_names)), std::move(group));
  }

  static MergeMapping identity(const DomainTaxonomy& taxonomy) {
    std::vector<std::size_t> group(taxonomy.size());
    for (std::size_t i = 0; i < group.size(); ++i) group[i] = i;
    return MergeMapping(taxonomy, taxonomy, std::move(group));
  }

  const DomainTaxonomy& original() const noexcept { return original_; }
  const DomainTaxonomy& merged() const noexcept { return merged_; }
  const std::vector<std::size_t>& group() const noexcept { return group_; }
  std::size_t group_of(std::size_t original_index) const { return group_.at(original_index); }

 private:
  DomainTaxonomy original_;
  DomainTaxonomy merged_;
  std::vector<std::size_t> group_;
};

// Merge mapping file: JSON object {original_name: merged_name}.
inline MergeMapping load_merge_mapping(const std::string& path, const DomainTaxonomy& original) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open merge mapping file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed merge mapping file " + path + ": " + e.what());
  }
  if (!j.is_object()) throw DataError("merge mapping must be a JSON object: " + path);
  std::map<std::string, std::string> names;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it.value().is_string()) throw DataError("merge mapping values must be strings: " + path);
    names[it.key()] = it.value().get<std::string>();
  }
  return MergeMapping::from_names(original, names);
}

inline std::vector<LabeledDocument> apply_merge(const MergeMapping& mapping, const std::vector<LabeledDocument>& docs) {
  std::vector<LabeledDocument> out;
  out.reserve(docs.size());
  for (const auto& item : docs) {
    if (item.domain >= mapping.original().size()) {
      throw DataError("document domain index " + std::to_string(item.domain) + " not covered by merge mapping");
    }
    out.push_back(LabeledDocument{item.doc, mapping.group_of(item.domain)});
  }
  return out;
}

// Probabilities merge by summation over each group.
inline std::vector<double> merge_values(const MergeMapping& mapping, std::span<const double> values) {
  if (values.size() != mapping.original().size()) throw DataError("vector length does not match merge mapping");
  std::vector<double> out(mapping.merged().size(), 0.0);
  for (std::size_t i = 0; i < values.size(); ++i) out[mapping.group_of(i)] += values[i];
  return out;
}

inline MixtureVector merge_mixture(const MergeMapping& mapping, const MixtureVector& m) {
  require_same_taxonomy(m.taxonomy(), mapping.original(), "merge_mixture");
  return MixtureVector(merge_values(mapping, m.values()), mapping.merged(), m.role());
}

// Sums the merged columns and averages the merged rows weighted by their
// held-out document counts. Equals estimating C from the merged predictions.
inline ConfusionMatrix merge_confusion_matrix(const MergeMapping& mapping, const ConfusionMatrix& c) {
  require_same_taxonomy(c.taxonomy(), mapping.original(), "merge_confusion_matrix");
  if (c.per_row_count().empty()) throw DataError("merging a confusion matrix needs per-row document counts");
  const std::size_t km = mapping.merged().size();
  Matrix entries(km, km);
  std::vector<std::size_t> counts(km, 0);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const std::size_t gi = mapping.group_of(i);
    counts[gi] += c.per_row_count()[i];
    for (std::size_t j = 0; j < c.size(); ++j) {
      entries(gi, mapping.group_of(j)) += static_cast<double>(c.per_row_count()[i]) * c(i, j);
    }
  }
  for (std::size_t g = 0; g < km; ++g)
    for (std::size_t h = 0; h < km; ++h) entries(g, h) /= static_cast<double>(counts[g]);
  return ConfusionMatrix(std::move(entries), mapping.merged(), std::move(counts));
}

// ---------------------------------------------------------------------------
// CSV export
// ---------------------------------------------------------------------------

// Header row holds the predicted-domain names; each row starts with the true-domain name.
inline void write_confusion_csv(std::ostream& out, const ConfusionMatrix& c) {
  out << "true\\predicted";
  for (const auto& name : c.taxonomy().labels()) out << ',' << name;
  out << '\n';
  for (std::size_t i = 0; i < c.size(); ++i) {
    out << c.taxonomy().name(i);
    for (std::size_t j = 0; j < c.size(); ++j) out << ',' << format_real(c(i, j));
    out << '\n';
  }
}

inline void save_confusion_csv(const ConfusionMatrix& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write confusion matrix file: " + path);
  write_confusion_csv(out, c);
}

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}
}  // namespace detail

inline ConfusionMatrix read_confusion_csv(std::istream& in, const std::string& source = "<stream>") {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty confusion matrix file: " + source);
  auto header = detail::split_csv_line(line);
  if (header.size() < 3) throw DataError("confusion matrix header needs at least 2 domains: " + source);
  DomainTaxonomy taxonomy(std::vector<std::string>(header.begin() + 1, header.end()));
  const std::size_t k = taxonomy.size();
  Matrix entries(k, k);
  std::vector<bool> seen(k, false);
  std::size_t line_no = 1;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::blank(line)) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != k + 1) {
      throw DataError("confusion matrix line " + std::to_string(line_no) + " has the wrong number of cells");
    }
    auto row = taxonomy.find(cells[0]);
    if (!row) throw DataError("confusion matrix row names unknown domain '" + cells[0] + "'");
    if (seen[*row]) throw DataError("duplicate confusion matrix row '" + cells[0] + "'");
    seen[*row] = true;
    for (std::size_t j = 0; j < k; ++j) {
      try {
        std::size_t used = 0;
        entries(*row, j) = std::stod(cells[j + 1], &used);
        if (used != cells[j + 1].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw DataError("bad number '" + cells[j + 1] + "' at confusion matrix line " + std::to_string(line_no));
      }
    }
    ++rows;
  }
  if (rows != k) throw DataError("confusion matrix needs one row per domain: " + source);
  return ConfusionMatrix(std::move(entries), std::move(taxonomy));
}

inline ConfusionMatrix load_confusion_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open confusion matrix file: " + path);
  return read_confusion_csv(in, path);
}

}  // namespace mixaudit
