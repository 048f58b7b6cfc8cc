#pragma once

#include <cstddef>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "mixaudit/error.hpp"

namespace mixaudit {

// Closed-world label set. Label order fixes the coordinate order of every
// mixture vector and matrix produced under it.
class DomainTaxonomy {
 public:
  DomainTaxonomy() = default;

  explicit DomainTaxonomy(std::vector<std::string> labels) {
    if (labels.size() < 2) {
      throw DataError("taxonomy needs at least 2 domains, got " + std::to_string(labels.size()));
    }
    auto data = std::make_shared<Data>();
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i].empty()) throw DataError("taxonomy contains an empty domain name");
      if (!data->index.emplace(labels[i], i).second) {
        throw DataError("duplicate domain name in taxonomy: " + labels[i]);
      }
    }
    data->labels = std::move(labels);
    data_ = std::move(data);
  }

  std::size_t size() const noexcept { return data_ ? data_->labels.size() : 0; }
  bool empty() const noexcept { return size() == 0; }
  const std::vector<std::string>& labels() const noexcept {
    static const std::vector<std::string> kNone;
    return data_ ? data_->labels : kNone;
  }
  const std::string& name(std::size_t index) const { return labels().at(index); }

  std::optional<std::size_t> find(const std::string& name) const {
    if (!data_) return std::nullopt;
    auto it = data_->index.find(name);
    if (it == data_->index.end()) return std::nullopt;
    return it->second;
  }

  std::size_t index(const std::string& name) const {
    auto found = find(name);
    if (!found) throw DataError("unknown domain '" + name + "'");
    return *found;
  }

  friend bool operator==(const DomainTaxonomy& a, const DomainTaxonomy& b) {
    return a.data_ == b.data_ || a.labels() == b.labels();
  }

 private:
  // Immutable and shared, so copies are cheap.
  struct Data {
    std::vector<std::string> labels;
    std::unordered_map<std::string, std::size_t> index;
  };
  std::shared_ptr<const Data> data_;
};

inline void require_same_taxonomy(const DomainTaxonomy& a, const DomainTaxonomy& b,
                                  const std::string& context) {
  if (!(a == b)) throw DataError(context + ": taxonomy mismatch");
}

// Taxonomy file: JSON array of domain names in index order.
inline DomainTaxonomy load_taxonomy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open taxonomy file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed taxonomy file " + path + ": " + e.what());
  }
  if (!doc.is_array()) throw DataError("taxonomy file must hold a JSON array: " + path);
  std::vector<std::string> labels;
  for (const auto& item : doc) {
    if (!item.is_string()) throw DataError("taxonomy entries must be strings: " + path);
    labels.push_back(item.get<std::string>());
  }
  return DomainTaxonomy(std::move(labels));
}

inline void save_taxonomy(const DomainTaxonomy& taxonomy, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write taxonomy file: " + path);
  out << nlohmann::json(taxonomy.labels()).dump(2) << '\n';
}

}  // namespace mixaudit
