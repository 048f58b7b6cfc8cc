#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <unistd.h>

#include "mixaudit/bench.hpp"
#include "mixaudit/classifier.hpp"
#include "mixaudit/corpus.hpp"
#include "mixaudit/fixture.hpp"
#include "mixaudit/random.hpp"

namespace mixaudit::testing {

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("mixaudit_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Domains with disjoint vocabularies; the default end-to-end fixture.
inline FixtureConfig disjoint_config(std::size_t domains = 3, std::vector<double> alpha = {0.6, 0.3, 0.1},
                                     std::uint64_t seed = 7) {
  FixtureConfig cfg;
  for (std::size_t d = 0; d < domains; ++d) {
    SyntheticDomain sd;
    sd.name = "domain" + std::string(1, static_cast<char>('a' + d));
    sd.vocab_size = 300;
    cfg.domains.push_back(sd);
  }
  cfg.alpha = std::move(alpha);
  cfg.seed = seed;
  return cfg;
}

// Two domains share one pool verbatim.
inline FixtureConfig duplicated_config(std::uint64_t seed = 11) {
  FixtureConfig cfg;
  for (const char* name : {"c4", "commoncrawl", "code", "books"}) {
    SyntheticDomain sd;
    sd.name = name;
    sd.vocab_size = 300;
    cfg.domains.push_back(sd);
  }
  cfg.domains[1].same_as = "c4";
  cfg.alpha = {0.45, 0.15, 0.3, 0.1};
  cfg.seed = seed;
  return cfg;
}

// Random point on the simplex (normalized exponentials).
inline std::vector<double> random_simplex_point(std::size_t k, Rng& rng) {
  std::vector<double> v(k);
  double total = 0.0;
  for (double& x : v) {
    x = -std::log(1.0 - uniform_real(rng));
    total += x;
  }
  for (double& x : v) x /= total;
  return v;
}

inline double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

// Visits every simplex point whose coordinates are multiples of 1/steps.
inline void for_each_grid_point(std::size_t k, int steps, const std::function<void(const std::vector<double>&)>& visit) {
  std::vector<int> counts(k, 0);
  std::vector<double> point(k);
  std::function<void(std::size_t, int)> rec = [&](std::size_t dim, int remaining) {
    if (dim + 1 == k) {
      counts[dim] = remaining;
      for (std::size_t i = 0; i < k; ++i) point[i] = static_cast<double>(counts[i]) / steps;
      visit(point);
      return;
    }
    for (int c = 0; c <= remaining; ++c) {
      counts[dim] = c;
      rec(dim + 1, remaining - c);
    }
  };
  rec(0, steps);
}

// Brute-force minimizer of f over the simplex grid with resolution 1/steps.
inline std::pair<std::vector<double>, double> grid_minimize(
    std::size_t k, int steps, const std::function<double(const std::vector<double>&)>& f) {
  std::vector<double> best;
  double best_value = std::numeric_limits<double>::infinity();
  for_each_grid_point(k, steps, [&](const std::vector<double>& p) {
    const double value = f(p);
    if (value < best_value) {
      best_value = value;
      best = p;
    }
  });
  return {best, best_value};
}

// Exact Euclidean projection by enumerating every support set: on support S
// the minimizer is v_S shifted by a constant; keep the feasible closest one.
inline std::vector<double> projection_by_support_enumeration(const std::vector<double>& v) {
  const std::size_t k = v.size();
  std::vector<double> best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::uint32_t mask = 1; mask < (1u << k); ++mask) {
    double sum = 0.0;
    int size = 0;
    for (std::size_t i = 0; i < k; ++i)
      if (mask & (1u << i)) {
        sum += v[i];
        ++size;
      }
    const double shift = (sum - 1.0) / size;
    std::vector<double> x(k, 0.0);
    bool feasible = true;
    for (std::size_t i = 0; i < k; ++i)
      if (mask & (1u << i)) {
        x[i] = v[i] - shift;
        if (x[i] < -1e-15) feasible = false;
      }
    if (!feasible) continue;
    const double dist = squared_distance(x, v);
    if (dist < best_dist) {
      best_dist = dist;
      best = x;
    }
  }
  return best;
}

// Grid resolution for the brute-force projection oracle: 1e-3 where the grid
// is enumerable, coarser above K = 3.
inline int projection_grid_steps(std::size_t k) { return k <= 3 ? 1000 : (k == 4 ? 100 : 40); }

// Objective slack allowed between the exact projection x* of v and the best
// grid point: some grid point lies within d = K / steps of x* in L2.
inline double projection_grid_slack(std::size_t k, int steps, double optimum) {
  const double d = static_cast<double>(k) / steps;
  return 2.0 * std::sqrt(optimum) * d + d * d;
}

// Random C = 0.7 I + 0.3 R with R row-stochastic.
inline std::vector<std::vector<double>> diagonally_dominant_rows(std::size_t k, Rng& rng) {
  std::vector<std::vector<double>> rows(k);
  for (std::size_t i = 0; i < k; ++i) {
    rows[i] = random_simplex_point(k, rng);
    for (double& x : rows[i]) x *= 0.3;
    rows[i][i] += 0.7;
  }
  return rows;
}

// Published six-class ground truth / prediction pairs, converted from percent.
struct PublishedPair {
  const char* model;
  std::vector<double> truth;
  std::vector<double> predicted;
};

inline std::vector<double> percent(std::initializer_list<double> values) {
  std::vector<double> out;
  for (double v : values) out.push_back(v / 100.0);
  return out;
}

inline PublishedPair olmo_1b() {
  return {"OLMo-1B", percent({81.10, 13.40, 0.10, 0.20, 2.30, 2.90}), percent({83.99, 12.89, 2.04, 0.91, 0.09, 0.08})};
}
inline PublishedPair llama1_7b() {
  return {"LLaMA1-7B", percent({81.59, 4.48, 4.48, 4.48, 2.49, 2.49}), percent({81.58, 8.27, 5.55, 4.47, 0.07, 0.06})};
}
inline PublishedPair amber_13b() {
  return {"Amber-13B", percent({68.50, 23.30, 1.70, 2.30, 2.50, 1.70}), percent({49.69, 41.56, 4.45, 2.98, 0.78, 0.53})};
}
inline PublishedPair llama1_65b() {
  return {"LLaMA1-65B", percent({81.59, 4.48, 4.48, 4.48, 2.49, 2.49}), percent({82.58, 6.48, 3.59, 7.21, 0.08, 0.05})};
}

// The bench pipeline on a generated fixture, seeded the way the CLI seeds it.
inline BenchReport run_fixture_bench(const FixtureConfig& cfg, bool apply_config_merge = true,
                                     PipelineConfig pipeline = {}) {
  const Fixture fx = generate_fixture(cfg);
  Corpus train;
  train.taxonomy = fx.taxonomy;
  train.labeled = fx.reference;
  Corpus eval;
  eval.taxonomy = fx.taxonomy;
  eval.labeled = fx.pools;
  pipeline.classifier.seed = cfg.seed;
  pipeline.split_seed = cfg.seed;
  std::optional<MergeMapping> merge;
  if (apply_config_merge && cfg.merge) merge = MergeMapping::from_names(fx.taxonomy, *cfg.merge);
  const MixtureVector alpha(cfg.alpha, fx.taxonomy, MixtureRole::kGroundTruth);
  return run_end_to_end(train, eval, alpha, cfg.n_samples, cfg.seed, pipeline, nullptr, merge ? &*merge : nullptr);
}

inline std::string source_path(const std::string& relative) { return std::string(MIXAUDIT_SOURCE_DIR) + "/" + relative; }

// Tiny model: V = 6 features, K = 3 classes, 5 documents.
struct TinyProblem {
  std::vector<FeatureVector> docs;
  std::vector<std::size_t> labels{0, 1, 2, 1, 0};
  std::vector<const FeatureVector*> batch;

  TinyProblem() {
    const std::vector<std::vector<std::pair<std::uint32_t, double>>> raw{
        {{0, 0.6}, {2, 0.8}}, {{1, 1.0}}, {{3, 0.48}, {4, 0.64}, {5, 0.6}}, {{0, 0.8}, {5, 0.6}}, {{2, 0.28}, {4, 0.96}}};
    for (const auto& entries : raw) {
      FeatureVector fv;
      fv.dimension = 6;
      for (auto [i, w] : entries) {
        fv.indices.push_back(i);
        fv.weights.push_back(w);
      }
      docs.push_back(fv);
    }
    for (const auto& d : docs) batch.push_back(&d);
  }

  double loss(const Network& net) const { return loss_and_gradient(net, batch, labels).loss; }
};

inline Network randomized_tiny_network(ClassifierKind kind, std::uint64_t seed) {
  Network net = init_network(kind, 6, 5, 3, seed);
  Rng rng(seed + 1);
  for (auto& layer : net.layers) {
    for (double& w : layer.weight) w = 2.0 * uniform_real(rng) - 1.0;
    for (double& b : layer.bias) b = 0.5 * uniform_real(rng) - 0.25;
  }
  return net;
}

// Largest relative error between analytic and central-difference gradients.
inline double max_gradient_error(ClassifierKind kind, std::uint64_t seed) {
  const TinyProblem tiny;
  Network net = randomized_tiny_network(kind, seed);
  const NetworkGradient grad = loss_and_gradient(net, tiny.batch, tiny.labels);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const LayerGradient& g = grad.layers[l];
    std::vector<double> dense(net.layers[l].weight.size(), 0.0);
    for (std::size_t r = 0; r < g.rows.size(); ++r)
      for (std::size_t o = 0; o < g.outputs; ++o) dense[g.rows[r] * g.outputs + o] = g.values[r * g.outputs + o];
    auto check = [&](double& param, double analytic) {
      const double saved = param;
      param = saved + h;
      const double up = tiny.loss(net);
      param = saved - h;
      const double down = tiny.loss(net);
      param = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      worst = std::max(worst, err);
    };
    for (std::size_t i = 0; i < dense.size(); ++i) check(net.layers[l].weight[i], dense[i]);
    for (std::size_t o = 0; o < g.bias.size(); ++o) check(net.layers[l].bias[o], g.bias[o]);
  }
  return worst;
}

}  // namespace mixaudit::testing
