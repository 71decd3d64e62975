#include "helpers.hpp"

#include <algorithm>
#include <functional>
#include <optional>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>

#include "oracles.hpp"

namespace engage::testing {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  std::random_device rd;
  path_ = fs::temp_directory_path() /
          ("engage_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

LabelDistribution random_distribution(std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  return LabelDistribution::normalized({e(rng), e(rng), e(rng)});
}

void gaussian_blobs(std::mt19937_64& rng, std::size_t per_class, std::size_t dim, double spread, Matrix& x,
                    std::vector<EngagementLevel>& y) {
  std::normal_distribution<double> n(0.0, 1.0);
  x.resize(static_cast<Eigen::Index>(3 * per_class), static_cast<Eigen::Index>(dim));
  y.clear();
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      const auto row = static_cast<Eigen::Index>(c * per_class + i);
      for (std::size_t k = 0; k < dim; ++k) {
        const double center = (k % 3 == c) ? 3.0 : 0.0;
        x(row, static_cast<Eigen::Index>(k)) = center + spread * n(rng);
      }
      y.push_back(level_from_index(c));
    }
  }
}

std::vector<Sample> toy_samples(std::size_t students, std::size_t seconds, std::size_t dim, std::uint64_t seed,
                                double separation) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Sample> out;
  for (std::size_t s = 0; s < students; ++s) {
    for (std::size_t t = 0; t < seconds; ++t) {
      Sample sample;
      sample.student_id = "st" + std::to_string(s);
      sample.session_id = "sess";
      sample.second = static_cast<std::int64_t>(t);
      sample.level = level_from_index((t + s) % 3);
      for (int m = 0; m < 2; ++m) {
        Matrix frames(static_cast<Eigen::Index>(kSequenceLength), static_cast<Eigen::Index>(dim));
        for (Eigen::Index f = 0; f < frames.rows(); ++f) {
          for (Eigen::Index k = 0; k < frames.cols(); ++k) {
            const double center = static_cast<std::size_t>(k) % 3 == index_of(sample.level) ? separation : 0.0;
            frames(f, k) = center + n(rng);
          }
        }
        (m == 0 ? sample.attention : sample.affect) = std::move(frames);
      }
      out.push_back(std::move(sample));
    }
  }
  return out;
}

std::vector<BinaryProblem> svm_problem_battery() {
  std::vector<BinaryProblem> out;
  {
    BinaryProblem p{"separable", Matrix(4, 2), {1, 1, -1, -1}, Kernel::linear, 0.0, 1.0};
    p.x << 2, 2, 3, 1, -1, -2, -2, -1;
    out.push_back(p);
  }
  {
    BinaryProblem p{"xor", Matrix(4, 2), {1, 1, -1, -1}, Kernel::rbf, 1.0, 10.0};
    p.x << 0, 0, 1, 1, 0, 1, 1, 0;
    out.push_back(p);
  }
  {
    BinaryProblem p{"contradictory", Matrix(4, 2), {1, -1, 1, -1}, Kernel::linear, 0.0, 1.0};
    p.x << 0.5, 0.5, 0.5, 0.5, 2, 2, -2, -2;
    out.push_back(p);
  }
  {
    BinaryProblem p{"contradictory_rbf", Matrix(5, 1), {1, -1, 1, -1, -1}, Kernel::rbf, 0.5, 2.0};
    p.x << 0, 0, 1, 2, 3;
    out.push_back(p);
  }
  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> n(0.0, 1.0);
  const double cs[] = {0.1, 1.0, 10.0};
  for (int i = 0; i < 60; ++i) {
    BinaryProblem p;
    p.name = "random" + std::to_string(i);
    const int points = 2 + i % 5;
    const int dim = 1 + i % 3;
    p.x.resize(points, dim);
    for (int r = 0; r < points; ++r) {
      p.y.push_back(r % 2 == 0 ? 1 : -1);
      for (int c = 0; c < dim; ++c) p.x(r, c) = n(rng) + (r % 2 == 0 ? 0.7 : -0.7) * (i % 2);
    }
    std::shuffle(p.y.begin(), p.y.end(), rng);
    if (std::count(p.y.begin(), p.y.end(), 1) == 0 || std::count(p.y.begin(), p.y.end(), -1) == 0) {
      p.y[0] = -p.y[1];
    }
    p.kernel = i % 2 == 0 ? Kernel::rbf : Kernel::linear;
    p.gamma = p.kernel == Kernel::rbf ? 0.3 + 0.2 * (i % 4) : 0.0;
    p.C = cs[(i / 2) % 3];
    out.push_back(std::move(p));
  }
  return out;
}

Eigen::MatrixXd gram_matrix(const BinaryProblem& problem) {
  const Eigen::Index n = problem.x.rows();
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::RowVectorXd a = problem.x.row(i), b = problem.x.row(j);
      g(i, j) = problem.kernel == Kernel::linear ? a.dot(b) : std::exp(-problem.gamma * (a - b).squaredNorm());
    }
  }
  return g;
}

namespace {

double relative_error(const Vector& a, const Vector& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-300});
  return (a - b).norm() / scale;
}

Vector jitter(Vector flat, std::mt19937_64& rng, double sd) {
  std::normal_distribution<double> n(0.0, sd);
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat[i] += n(rng);
  return flat;
}

}  // namespace

double mlp_gradient_error(std::uint64_t point) {
  std::mt19937_64 rng(mix_seed(0x6d6c70, point));
  std::normal_distribution<double> n(0.0, 1.0);
  const std::size_t samples = 5, dim = 4, hidden = 6;
  Matrix x(static_cast<Eigen::Index>(samples), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
  std::vector<EngagementLevel> y;
  for (std::size_t i = 0; i < samples; ++i) y.push_back(level_from_index((i + point) % 3));
  MlpWeights w = init_mlp(dim, hidden, point);
  w.assign(jitter(w.flatten(), rng, 0.5));
  Vector analytic;
  mlp_loss_and_gradient(w, x, y, analytic);
  const auto loss = [&](const Eigen::VectorXd& flat) {
    MlpWeights probe = w;
    probe.assign(flat);
    return mlp_loss(probe, x, y);
  };
  return relative_error(analytic, oracle::central_difference(loss, w.flatten(), 1e-5));
}

double lstm_gradient_error(std::uint64_t point) {
  std::mt19937_64 rng(mix_seed(0x6c73746d, point));
  std::normal_distribution<double> n(0.0, 1.0);
  const std::size_t samples = 2, dim = 3;
  LstmParams params;
  params.hidden = 4;
  params.layers = 2;
  params.dense = 5;
  std::vector<Matrix> seqs;
  for (std::size_t s = 0; s < samples; ++s) {
    Matrix m(static_cast<Eigen::Index>(kSequenceLength), static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    seqs.push_back(std::move(m));
  }
  const std::vector<EngagementLevel> y{level_from_index(point % 3), level_from_index((point + 1) % 3)};
  LstmWeights w = init_lstm(dim, params, point);
  w.assign(jitter(w.flatten(), rng, 0.3));
  Vector analytic;
  lstm_loss_and_gradient(w, seqs, y, analytic);
  const auto loss = [&](const Eigen::VectorXd& flat) {
    LstmWeights probe = w;
    probe.assign(flat);
    return lstm_loss(probe, seqs, y);
  };
  return relative_error(analytic, oracle::central_difference(loss, w.flatten(), 1e-5));
}

ClassifierSpec fast_spec(Family family, std::uint64_t seed) {
  ClassifierSpec spec = ClassifierSpec::defaults(family, seed);
  spec.forest.trees = 15;
  spec.mlp.hidden = 16;
  spec.mlp.max_epochs = 30;
  spec.mlp.learning_rate = 0.05;
  spec.lstm.hidden = 8;
  spec.lstm.dense = 8;
  spec.lstm.epochs = 2;
  spec.lstm.learning_rate = 0.01;
  return spec;
}

namespace {

std::vector<Sample> target_samples(std::size_t pool_size) {
  auto personal = toy_samples(1, pool_size + 30, 3, 82, 1.5);
  for (auto& s : personal) s.student_id = "target";
  return personal;
}

}  // namespace

void populate_manager(SessionManager& manager, std::size_t pool_size) {
  manager.register_model("base", PipelineSpec{fast_spec(Family::random_forest, 3), InputSelection::attention},
                         toy_samples(3, 20, 3, 81, 1.5));
  auto personal = target_samples(pool_size);
  std::vector<Sample> evaluation(personal.begin() + static_cast<std::ptrdiff_t>(pool_size), personal.end());
  std::vector<PoolEntry> entries;
  for (std::size_t i = 0; i < pool_size; ++i) {
    entries.push_back(PoolEntry{static_cast<PoolId>(i), personal[i], "clips/target/" + std::to_string(i) + ".mp4"});
  }
  manager.register_student("target", UnlabeledPool(std::move(entries)), std::move(evaluation));
}

std::vector<std::pair<PoolId, EngagementLevel>> truth_labels(const SessionState& state, std::size_t pool_size) {
  const auto personal = target_samples(pool_size);
  std::vector<std::pair<PoolId, EngagementLevel>> out;
  for (const auto& item : state.pending) out.emplace_back(item.pool_id, personal[static_cast<std::size_t>(item.pool_id)].level);
  return out;
}

double kkt_violation(const BinaryProblem& p, const BinarySvmSolution& s) {
  const Eigen::MatrixXd g = gram_matrix(p);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    double f = s.bias;
    for (Eigen::Index j = 0; j < g.cols(); ++j) f += s.alpha[static_cast<std::size_t>(j)] * p.y[static_cast<std::size_t>(j)] * g(j, i);
    const double margin = p.y[static_cast<std::size_t>(i)] * f;
    const double a = s.alpha[static_cast<std::size_t>(i)];
    double r;
    if (a <= 1e-12) {
      r = std::max(0.0, 1.0 - margin);
    } else if (a >= p.C - 1e-12) {
      r = std::max(0.0, margin - 1.0);
    } else {
      r = std::abs(margin - 1.0);
    }
    worst = std::max(worst, r);
  }
  return worst;
}

namespace {

struct Step {
  std::size_t client;
  bool finish;
  bool abort;
};

void enumerate_orders(std::vector<int>& remaining, std::vector<Step>& order, std::size_t abort_slot,
                      const std::function<void(const std::vector<Step>&)>& visit) {
  bool any = false;
  for (std::size_t c = 0; c < remaining.size(); ++c) {
    if (remaining[c] == 0) continue;
    any = true;
    const bool is_abort = c == abort_slot;
    --remaining[c];
    order.push_back({c, !is_abort && remaining[c] == 0, is_abort});
    enumerate_orders(remaining, order, abort_slot, visit);
    order.pop_back();
    ++remaining[c];
  }
  if (!any) visit(order);
}

bool legal_edge(SessionStatus from, SessionStatus to) {
  using S = SessionStatus;
  if (from == S::awaiting_labels && to == S::retraining) return true;
  if (from == S::retraining && (to == S::awaiting_labels || to == S::complete)) return true;
  return to == S::aborted && from != S::complete && from != S::aborted;
}

std::vector<std::string> replay(const std::vector<Step>& steps, std::size_t clients) {
  std::vector<std::string> problems;
  SessionManager manager;
  populate_manager(manager);
  const auto state = manager.create_session({"target", "base"});
  const auto labels = truth_labels(state);
  std::vector<std::pair<SessionStatus, SessionStatus>> transitions;
  manager.set_transition_observer([&](const std::string&, SessionStatus from, SessionStatus to) {
    transitions.emplace_back(from, to);
  });
  std::vector<std::optional<SubmitTicket>> tickets(clients);
  std::size_t committed = 0;
  bool aborted = false;
  const auto expect_conflict = [&](const ApiError& e, const char* what) {
    if (e.code() != ApiErrorCode::conflict) problems.push_back(std::string(what) + " failed with " + std::string(to_string(e.code())));
  };
  for (const auto& step : steps) {
    try {
      if (step.abort) {
        manager.abort_session(state.token);
        aborted = true;
      } else if (!step.finish) {
        tickets[step.client] = manager.begin_submit(state.token, labels);
      } else if (tickets[step.client]) {
        manager.finish_submit(std::move(*tickets[step.client]));
        ++committed;
      }
    } catch (const ApiError& e) {
      expect_conflict(e, step.abort ? "abort" : step.finish ? "finish" : "begin");
    }
  }
  const auto final_state = manager.get_status(state.token);
  const auto runs = manager.training_runs(state.token);
  if (committed > 1) problems.push_back(std::to_string(committed) + " submits committed for one batch");
  if (runs[0] != committed) problems.push_back("training_runs[0] = " + std::to_string(runs[0]));
  for (std::size_t e = 1; e < runs.size(); ++e) {
    if (runs[e] != 0) problems.push_back("episode " + std::to_string(e) + " trained early");
  }
  if (!aborted && committed != 1) problems.push_back("no submit committed without an abort");
  const auto expected_status = aborted ? SessionStatus::aborted : SessionStatus::awaiting_labels;
  if (final_state.status != expected_status) problems.push_back("final status " + std::string(to_string(final_state.status)));
  if (final_state.labels_collected != committed * labels.size()) problems.push_back("label count mismatch");
  SessionStatus current = SessionStatus::awaiting_labels;
  for (const auto& [from, to] : transitions) {
    if (from != current || !legal_edge(from, to)) {
      problems.push_back("transition " + std::string(to_string(from)) + " -> " + std::string(to_string(to)));
    }
    current = to;
  }
  if (current != final_state.status) problems.push_back("observer disagrees with final status");
  return problems;
}

}  // namespace

InterleavingSummary check_submit_interleavings(std::size_t max_clients) {
  InterleavingSummary summary;
  for (std::size_t clients = 1; clients <= max_clients; ++clients) {
    for (bool with_abort : {false, true}) {
      std::vector<int> remaining(clients, 2);
      if (with_abort) remaining.push_back(1);
      std::vector<Step> order;
      enumerate_orders(remaining, order, with_abort ? clients : remaining.size(), [&](const std::vector<Step>& steps) {
        ++summary.schedules;
        for (auto& p : replay(steps, clients)) {
          std::string trace;
          for (const auto& s : steps) trace += s.abort ? "A" : (s.finish ? "F" : "B") + std::to_string(s.client);
          trace += ' ';
          summary.violations.push_back(trace + p);
        }
      });
    }
  }
  return summary;
}

}  // namespace engage::testing
