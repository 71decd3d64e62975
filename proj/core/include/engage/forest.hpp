#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "engage/types.hpp"

namespace engage {

struct ForestParams {
  std::size_t trees = 100;
  /// Features tried per split; 0 selects floor(sqrt(d)).
  std::size_t max_features = 0;
  std::size_t min_leaf = 1;
  /// 0 means unlimited depth (grow to purity).
  std::size_t max_depth = 0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::array<double, kLevelCount> distribution{0.0, 0.0, 0.0};
};

/// CART tree; a sample goes left when x[feature] <= threshold.
struct DecisionTree {
  std::vector<TreeNode> nodes;

  const std::array<double, kLevelCount>& leaf_distribution(std::span<const double> x) const;
};

struct ForestModel {
  std::vector<DecisionTree> trees;
  std::size_t dimension = 0;
};

/// Bootstrap-aggregated Gini trees. Tree t is grown from its own generator
/// seeded by mixing `seed` with t, so results do not depend on build order.
ForestModel fit_random_forest(const Matrix& x, std::span<const EngagementLevel> y, const ForestParams& params,
                              std::uint64_t seed);

/// Mean of the per-tree leaf label frequencies.
LabelDistribution forest_predict(const ForestModel& model, std::span<const double> x);

nlohmann::json forest_to_json(const ForestModel& model);
ForestModel forest_from_json(const nlohmann::json& doc);

}  // namespace engage
