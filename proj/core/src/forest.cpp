#include "engage/forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

namespace engage {

const std::array<double, kLevelCount>& DecisionTree::leaf_distribution(std::span<const double> x) const {
  std::size_t node = 0;
  while (nodes[node].feature >= 0) {
    const auto& n = nodes[node];
    node = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return nodes[node].distribution;
}

namespace {

double gini(const std::array<double, kLevelCount>& counts, double total) {
  if (total <= 0.0) return 0.0;
  double sum = 0.0;
  for (double c : counts) sum += (c / total) * (c / total);
  return 1.0 - sum;
}

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, std::span<const EngagementLevel> y, const ForestParams& params, std::size_t mtry,
              std::uint64_t seed)
      : x_(x), y_(y), params_(params), mtry_(mtry), rng_(seed) {}

  DecisionTree build() {
    const auto n = static_cast<std::size_t>(x_.rows());
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::size_t> sample(n);
    for (auto& s : sample) s = pick(rng_);
    features_.resize(static_cast<std::size_t>(x_.cols()));
    std::iota(features_.begin(), features_.end(), 0);
    grow(sample, 0);
    return std::move(tree_);
  }

 private:
  int grow(std::vector<std::size_t>& sample, std::size_t depth) {
    const int index = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    std::array<double, kLevelCount> counts{0.0, 0.0, 0.0};
    for (auto s : sample) counts[index_of(y_[s])] += 1.0;
    const double total = static_cast<double>(sample.size());
    for (std::size_t l = 0; l < kLevelCount; ++l) tree_.nodes[static_cast<std::size_t>(index)].distribution[l] = counts[l] / total;

    const bool pure = std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0.0; }) <= 1;
    const bool depth_capped = params_.max_depth > 0 && depth >= params_.max_depth;
    if (pure || depth_capped || sample.size() < 2 * params_.min_leaf) return index;

    const auto split = best_split(sample, counts);
    if (split.feature < 0) return index;

    std::vector<std::size_t> left, right;
    for (auto s : sample) {
      (x_(static_cast<Eigen::Index>(s), split.feature) <= split.threshold ? left : right).push_back(s);
    }
    sample.clear();
    sample.shrink_to_fit();
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    auto& node = tree_.nodes[static_cast<std::size_t>(index)];
    node.feature = static_cast<int>(split.feature);
    node.threshold = split.threshold;
    node.left = l;
    node.right = r;
    return index;
  }

  struct Split {
    Eigen::Index feature = -1;
    double threshold = 0.0;
  };

  Split best_split(const std::vector<std::size_t>& sample, const std::array<double, kLevelCount>& counts) {
    Split best;
    double best_impurity = std::numeric_limits<double>::infinity();
    const double total = static_cast<double>(sample.size());
    std::shuffle(features_.begin(), features_.end(), rng_);
    std::vector<std::pair<double, std::size_t>> values(sample.size());
    std::size_t tried = 0;
    // Keep drawing features past mtry until at least one admits a split.
    for (std::size_t fi = 0; fi < features_.size(); ++fi) {
      if (tried >= mtry_ && best.feature >= 0) break;
      const auto feature = static_cast<Eigen::Index>(features_[fi]);
      for (std::size_t k = 0; k < sample.size(); ++k) {
        values[k] = {x_(static_cast<Eigen::Index>(sample[k]), feature), sample[k]};
      }
      std::sort(values.begin(), values.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      ++tried;
      if (values.front().first == values.back().first) continue;
      std::array<double, kLevelCount> left{0.0, 0.0, 0.0};
      for (std::size_t k = 0; k + 1 < values.size(); ++k) {
        left[index_of(y_[values[k].second])] += 1.0;
        if (values[k].first == values[k + 1].first) continue;
        const double nl = static_cast<double>(k + 1);
        const double nr = total - nl;
        if (nl < static_cast<double>(params_.min_leaf) || nr < static_cast<double>(params_.min_leaf)) continue;
        std::array<double, kLevelCount> right{};
        for (std::size_t l = 0; l < kLevelCount; ++l) right[l] = counts[l] - left[l];
        const double impurity = (nl * gini(left, nl) + nr * gini(right, nr)) / total;
        if (impurity < best_impurity) {
          best_impurity = impurity;
          best.feature = feature;
          const double mid = 0.5 * (values[k].first + values[k + 1].first);
          // Midpoint can round onto the upper value; fall back to the lower one.
          best.threshold = mid < values[k + 1].first ? mid : values[k].first;
        }
      }
    }
    return best;
  }

  const Matrix& x_;
  std::span<const EngagementLevel> y_;
  const ForestParams& params_;
  std::size_t mtry_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> features_;
  DecisionTree tree_;
};

}  // namespace

ForestModel fit_random_forest(const Matrix& x, std::span<const EngagementLevel> y, const ForestParams& params,
                              std::uint64_t seed) {
  if (x.rows() == 0) throw Error(ErrorKind::validation, "random forest needs training data");
  if (static_cast<std::size_t>(x.rows()) != y.size()) {
    throw Error(ErrorKind::dimension, "forest samples and labels differ in length");
  }
  if (params.trees == 0) throw Error(ErrorKind::validation, "random forest needs at least one tree");
  const auto d = static_cast<std::size_t>(x.cols());
  std::size_t mtry = params.max_features > 0 ? params.max_features
                                             : static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(d))));
  mtry = std::clamp<std::size_t>(mtry, 1, std::max<std::size_t>(1, d));
  ForestModel model;
  model.dimension = d;
  model.trees.reserve(params.trees);
  for (std::size_t t = 0; t < params.trees; ++t) {
    TreeBuilder builder(x, y, params, mtry, mix_seed(seed, t));
    model.trees.push_back(builder.build());
  }
  return model;
}

LabelDistribution forest_predict(const ForestModel& model, std::span<const double> x) {
  if (x.size() != model.dimension) {
    throw Error(ErrorKind::dimension, "forest input length " + std::to_string(x.size()) + ", model expects " +
                                          std::to_string(model.dimension));
  }
  std::array<double, kLevelCount> sum{0.0, 0.0, 0.0};
  for (const auto& tree : model.trees) {
    const auto& leaf = tree.leaf_distribution(x);
    for (std::size_t l = 0; l < kLevelCount; ++l) sum[l] += leaf[l];
  }
  LabelDistribution out;
  const double count = static_cast<double>(model.trees.size());
  for (std::size_t l = 0; l < kLevelCount; ++l) out.p[l] = sum[l] / count;
  return out;
}

nlohmann::json forest_to_json(const ForestModel& model) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& tree : model.trees) {
    std::vector<int> feature, left, right;
    std::vector<double> threshold, distribution;
    for (const auto& n : tree.nodes) {
      feature.push_back(n.feature);
      left.push_back(n.left);
      right.push_back(n.right);
      threshold.push_back(n.threshold);
      distribution.insert(distribution.end(), n.distribution.begin(), n.distribution.end());
    }
    trees.push_back({{"feature", feature},
                     {"threshold", threshold},
                     {"left", left},
                     {"right", right},
                     {"distribution", distribution}});
  }
  return {{"dimension", model.dimension}, {"trees", trees}};
}

ForestModel forest_from_json(const nlohmann::json& doc) {
  ForestModel model;
  model.dimension = doc.at("dimension").get<std::size_t>();
  for (const auto& t : doc.at("trees")) {
    const auto feature = t.at("feature").get<std::vector<int>>();
    const auto threshold = t.at("threshold").get<std::vector<double>>();
    const auto left = t.at("left").get<std::vector<int>>();
    const auto right = t.at("right").get<std::vector<int>>();
    const auto distribution = t.at("distribution").get<std::vector<double>>();
    const std::size_t n = feature.size();
    if (threshold.size() != n || left.size() != n || right.size() != n || distribution.size() != n * kLevelCount) {
      throw Error(ErrorKind::parse, "inconsistent tree arrays in forest model");
    }
    DecisionTree tree;
    tree.nodes.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto& node = tree.nodes[i];
      node.feature = feature[i];
      node.threshold = threshold[i];
      node.left = left[i];
      node.right = right[i];
      for (std::size_t l = 0; l < kLevelCount; ++l) node.distribution[l] = distribution[i * kLevelCount + l];
      if (node.feature >= 0 && (node.left < 0 || node.right < 0 || static_cast<std::size_t>(node.left) >= n ||
                                static_cast<std::size_t>(node.right) >= n)) {
        throw Error(ErrorKind::parse, "forest node references a missing child");
      }
    }
    model.trees.push_back(std::move(tree));
  }
  return model;
}

}  // namespace engage
