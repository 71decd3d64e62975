#include "engage/types.hpp"

#include <cmath>
#include <numeric>

namespace engage {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parse: return "parse";
    case ErrorKind::alignment: return "alignment";
    case ErrorKind::range: return "range";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::shape: return "shape";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::undefined_metric: return "undefined_metric";
    case ErrorKind::unsupported: return "unsupported";
    case ErrorKind::exhausted: return "exhausted";
    case ErrorKind::oracle_unavailable: return "oracle_unavailable";
    case ErrorKind::validation: return "validation";
    case ErrorKind::not_found: return "not_found";
    case ErrorKind::no_data: return "no_data";
  }
  return "unknown";
}

EngagementLevel level_from_index(std::size_t index) {
  if (index >= kLevelCount) {
    throw Error(ErrorKind::range, "engagement level index out of range: " + std::to_string(index));
  }
  return static_cast<EngagementLevel>(index);
}

std::string_view to_string(EngagementLevel level) {
  switch (level) {
    case EngagementLevel::low: return "low";
    case EngagementLevel::medium: return "medium";
    case EngagementLevel::high: return "high";
  }
  return "low";
}

EngagementLevel parse_level(std::string_view text) {
  if (text == "low" || text == "0") return EngagementLevel::low;
  if (text == "medium" || text == "1") return EngagementLevel::medium;
  if (text == "high" || text == "2") return EngagementLevel::high;
  throw Error(ErrorKind::validation, "unknown engagement level '" + std::string(text) + "'");
}

std::string_view to_string(Modality modality) {
  return modality == Modality::attention ? "attention" : "affect";
}

Modality parse_modality(std::string_view text) {
  if (text == "attention") return Modality::attention;
  if (text == "affect") return Modality::affect;
  throw Error(ErrorKind::parse, "unknown modality '" + std::string(text) + "'");
}

EngagementLevel LabelDistribution::argmax() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < kLevelCount; ++i) {
    if (p[i] > p[best]) best = i;
  }
  return level_from_index(best);
}

bool LabelDistribution::is_valid(double tolerance) const {
  double sum = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < -tolerance || v > 1.0 + tolerance) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= tolerance;
}

LabelDistribution LabelDistribution::normalized(std::array<double, kLevelCount> raw) {
  double sum = 0.0;
  for (double& v : raw) {
    if (!std::isfinite(v) || v < 0.0) v = 0.0;
    sum += v;
  }
  LabelDistribution out;
  if (sum <= 0.0) return out;
  for (std::size_t i = 0; i < kLevelCount; ++i) out.p[i] = raw[i] / sum;
  return out;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

LabelDistribution LabelDistribution::point_mass(EngagementLevel level) {
  LabelDistribution out;
  out.p = {0.0, 0.0, 0.0};
  out.p[index_of(level)] = 1.0;
  return out;
}

}  // namespace engage
