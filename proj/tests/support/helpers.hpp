#pragma once

#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "engage/pipeline.hpp"
#include "engage/service.hpp"
#include "engage/svm.hpp"
#include "engage/types.hpp"

namespace engage::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

void write_file(const std::filesystem::path& path, const std::string& text);
std::string read_file(const std::filesystem::path& path);

/// Random valid distribution (Dirichlet(1,1,1)).
LabelDistribution random_distribution(std::mt19937_64& rng);

/// Three Gaussian blobs in `dim` dimensions, one row per sample.
void gaussian_blobs(std::mt19937_64& rng, std::size_t per_class, std::size_t dim, double spread, Matrix& x,
                    std::vector<EngagementLevel>& y);

/// Samples for `students` students with both modalities, class-dependent means.
std::vector<Sample> toy_samples(std::size_t students, std::size_t seconds, std::size_t dim, std::uint64_t seed,
                                double separation = 3.0);

/// A tiny binary soft-margin problem.
struct BinaryProblem {
  std::string name;
  Matrix x;
  std::vector<int> y;  // +1 / -1
  Kernel kernel = Kernel::linear;
  double gamma = 0.0;
  double C = 1.0;
};

/// Fixed battery of problems with at most six points: the named textbook
/// cases (separable, XOR, contradictory duplicates) plus seeded random ones.
std::vector<BinaryProblem> svm_problem_battery();

/// Gram matrix of a problem under its kernel.
Eigen::MatrixXd gram_matrix(const BinaryProblem& problem);

/// Worst complementary-slackness violation of `solution`, recomputed from the
/// Gram matrix without the library's decision function.
double kkt_violation(const BinaryProblem& problem, const BinarySvmSolution& solution);

/// Relative error ||analytic - numeric|| / max(||analytic||, ||numeric||) of
/// the full-loss gradient at a random parameter point (central differences,
/// step 1e-5). `point` selects both the toy data and the parameters.
double mlp_gradient_error(std::uint64_t point);
double lstm_gradient_error(std::uint64_t point);

/// Small, fast classifier settings for tests.
ClassifierSpec fast_spec(Family family, std::uint64_t seed = 0);

/// Registers model "base" (random forest on three toy students) and student
/// "target" with a pool of `pool_size` entries (ids 0..n-1) plus 30
/// evaluation samples.
void populate_manager(SessionManager& manager, std::size_t pool_size = 80);

/// Labels for the pending batch, taken from the stored ground truth.
std::vector<std::pair<PoolId, EngagementLevel>> truth_labels(const SessionState& state, std::size_t pool_size = 80);

/// Replays every ordering of begin_submit/finish_submit steps from 1..max_clients
/// clients submitting the same first batch (each ordering also with one
/// abort), each on a fresh manager, and records any broken invariant: an
/// illegal or inconsistent status transition, a retrain counted other than
/// exactly once, or an unexpected error.
struct InterleavingSummary {
  std::size_t schedules = 0;
  std::vector<std::string> violations;
};
InterleavingSummary check_submit_interleavings(std::size_t max_clients);

}  // namespace engage::testing
