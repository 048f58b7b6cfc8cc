#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "mixaudit/calibration.hpp"
#include "mixaudit/error.hpp"
#include "mixaudit/mixture.hpp"
#include "mixaudit/taxonomy.hpp"

namespace mixaudit {

// One externally computed membership-inference result.
struct ScoreRecord {
  std::size_t domain = 0;
  std::optional<double> score;  // higher = more member-like
  std::optional<int> decision;  // 0 or 1
};

// Positive count per domain. With a threshold, records carrying a score are
// decided by score > threshold; otherwise the stored decision is used.
inline std::vector<std::size_t> count_positives(const std::vector<ScoreRecord>& records, std::optional<double> threshold,
                                                std::size_t num_domains) {
  std::vector<std::size_t> positives(num_domains, 0);
  for (std::size_t n = 0; n < records.size(); ++n) {
    const auto& r = records[n];
    if (r.domain >= num_domains) throw DataError("score record " + std::to_string(n) + " has an invalid domain");
    bool positive = false;
    if (threshold && r.score) {
      if (!std::isfinite(*r.score)) throw DataError("score record " + std::to_string(n) + " has a non-finite score");
      positive = *r.score > *threshold;
    } else if (r.decision) {
      if (*r.decision != 0 && *r.decision != 1) throw DataError("decisions must be 0 or 1");
      positive = *r.decision == 1;
    } else if (r.score) {
      throw DataError("score record " + std::to_string(n) + " has no decision and no threshold was supplied");
    } else {
      throw DataError("score record " + std::to_string(n) + " carries neither score nor decision");
    }
    if (positive) ++positives[r.domain];
  }
  return positives;
}

// Normalized positive counts: r_c = positives_c / sum_j positives_j.
inline MixtureVector mixture_from_positive_counts(const std::vector<std::size_t>& positives,
                                                  const DomainTaxonomy& taxonomy) {
  if (positives.size() != taxonomy.size()) throw DataError("positive counts do not match taxonomy");
  std::size_t total = 0;
  for (auto c : positives) total += c;
  if (total == 0) throw DataError("no positive predictions");
  std::vector<double> r(positives.size());
  for (std::size_t c = 0; c < r.size(); ++c) r[c] = static_cast<double>(positives[c]) / static_cast<double>(total);
  return MixtureVector(std::move(r), taxonomy, MixtureRole::kEstimate);
}

inline MixtureVector aggregate_mia_scores(const std::vector<ScoreRecord>& records, std::optional<double> threshold,
                                          const DomainTaxonomy& taxonomy) {
  if (records.empty()) throw DataError("no score records");
  return mixture_from_positive_counts(count_positives(records, threshold, taxonomy.size()), taxonomy);
}

// CSV with header `domain,score[,decision]`; empty cells mean absent.
struct ScoreFile {
  DomainTaxonomy taxonomy;
  std::vector<ScoreRecord> records;
};

inline ScoreFile read_score_csv(std::istream& in, const DomainTaxonomy* taxonomy = nullptr,
                                const std::string& source = "<stream>") {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty score file: " + source);
  const auto header = detail::split_csv_line(line);
  const bool has_decision = header.size() == 3 && header[2] == "decision";
  if (header.size() < 2 || header[0] != "domain" || header[1] != "score" || (header.size() == 3 && !has_decision) ||
      header.size() > 3) {
    throw DataError("score file header must be domain,score[,decision]: " + source);
  }
  std::vector<std::pair<std::string, ScoreRecord>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::blank(line)) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size() && !(has_decision && cells.size() == 2)) {
      throw DataError("score file line " + std::to_string(line_no) + " has the wrong number of cells");
    }
    ScoreRecord rec;
    try {
      if (!cells[1].empty()) rec.score = std::stod(cells[1]);
      if (has_decision && cells.size() == 3 && !cells[2].empty()) rec.decision = std::stoi(cells[2]);
    } catch (const std::exception&) {
      throw DataError("bad number at score file line " + std::to_string(line_no));
    }
    if (rec.score && !std::isfinite(*rec.score)) throw DataError("non-finite score at line " + std::to_string(line_no));
    if (!rec.score && !rec.decision) throw DataError("line " + std::to_string(line_no) + " has neither score nor decision");
    rows.emplace_back(cells[0], rec);
  }
  if (rows.empty()) throw DataError("score file has no records: " + source);

  ScoreFile file;
  if (taxonomy != nullptr) {
    file.taxonomy = *taxonomy;
  } else {
    std::vector<std::string> names;
    for (const auto& [name, _] : rows) {
      if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
    }
    file.taxonomy = DomainTaxonomy(std::move(names));
  }
  for (auto& [name, rec] : rows) {
    auto index = file.taxonomy.find(name);
    if (!index) throw DataError("unknown domain '" + name + "' in score file");
    rec.domain = *index;
    file.records.push_back(rec);
  }
  return file;
}

inline ScoreFile load_score_csv(const std::string& path, const DomainTaxonomy* taxonomy = nullptr) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open score file: " + path);
  return read_score_csv(in, taxonomy, path);
}

}  // namespace mixaudit
