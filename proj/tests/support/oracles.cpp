#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace engage::oracle {

EigenPairs jacobi_eigen(const Eigen::MatrixXd& symmetric, double tolerance, int max_sweeps) {
  const int n = static_cast<int>(symmetric.rows());
  Eigen::MatrixXd a = symmetric;
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < tolerance * tolerance) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) { return a(i, i) > a(j, j); });
  EigenPairs out;
  for (int i : order) {
    out.values.push_back(a(i, i));
    out.vectors.emplace_back(v.col(i).data(), v.col(i).data() + n);
  }
  return out;
}

QpOptimum svm_dual_exhaustive(const Eigen::MatrixXd& gram, std::span<const int> y, double C) {
  const int n = static_cast<int>(y.size());
  Eigen::MatrixXd q(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) q(i, j) = y[i] * y[j] * gram(i, j);
  const auto objective = [&](const Eigen::VectorXd& a) { return a.sum() - 0.5 * a.dot(q * a); };

  QpOptimum best;
  best.objective = -std::numeric_limits<double>::infinity();
  int combos = 1;
  for (int i = 0; i < n; ++i) combos *= 3;
  for (int code = 0; code < combos; ++code) {
    std::vector<int> state(n);  // 0: alpha=0, 1: alpha=C, 2: free
    for (int i = 0, c = code; i < n; ++i, c /= 3) state[i] = c % 3;
    std::vector<int> free;
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
      if (state[i] == 1) alpha[i] = C;
      if (state[i] == 2) free.push_back(i);
    }
    const int f = static_cast<int>(free.size());
    if (f > 0) {
      // Stationarity on the free set plus the equality constraint:
      //   (Q alpha)_i + b y_i = 1 for i in F,  y^T alpha = 0.
      Eigen::MatrixXd m = Eigen::MatrixXd::Zero(f + 1, f + 1);
      Eigen::VectorXd rhs(f + 1);
      for (int r = 0; r < f; ++r) {
        const int i = free[r];
        double fixed = 0.0;
        for (int j = 0; j < n; ++j)
          if (state[j] == 1) fixed += q(i, j) * C;
        for (int c = 0; c < f; ++c) m(r, c) = q(i, free[c]);
        m(r, f) = y[i];
        rhs[r] = 1.0 - fixed;
      }
      double fixed_y = 0.0;
      for (int j = 0; j < n; ++j)
        if (state[j] == 1) fixed_y += y[j] * C;
      for (int c = 0; c < f; ++c) m(f, c) = y[free[c]];
      rhs[f] = -fixed_y;
      const Eigen::VectorXd sol = m.completeOrthogonalDecomposition().solve(rhs);
      if ((m * sol - rhs).norm() > 1e-8 * (1.0 + rhs.norm())) continue;
      for (int c = 0; c < f; ++c) alpha[free[c]] = sol[c];
    }
    double eq = 0.0;
    for (int i = 0; i < n; ++i) eq += y[i] * alpha[i];
    if (std::abs(eq) > 1e-9) continue;
    bool feasible = true;
    for (int i = 0; i < n; ++i) feasible = feasible && alpha[i] >= -1e-10 && alpha[i] <= C + 1e-10;
    if (!feasible) continue;
    const double obj = objective(alpha);
    if (obj > best.objective) {
      best.objective = obj;
      best.alpha.assign(alpha.data(), alpha.data() + n);
    }
  }
  return best;
}

double auroc_pair_count(std::span<const std::array<double, 3>> scores, std::span<const int> actual) {
  const std::size_t n = actual.size();
  double weighted = 0.0;
  for (int level = 0; level < 3; ++level) {
    double pairs = 0.0, credit = 0.0, positives = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (actual[i] != level) continue;
      positives += 1.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (actual[j] == level) continue;
        pairs += 1.0;
        const double si = scores[i][static_cast<std::size_t>(level)];
        const double sj = scores[j][static_cast<std::size_t>(level)];
        credit += si > sj ? 1.0 : (si == sj ? 0.5 : 0.0);
      }
    }
    if (positives == 0.0) continue;
    weighted += positives / static_cast<double>(n) * credit / pairs;
  }
  return weighted;
}

double platt_negative_log_likelihood(double a, double b, std::span<const double> f, std::span<const int> labels) {
  double pos = 0.0;
  for (int l : labels) pos += l;
  const double neg = static_cast<double>(labels.size()) - pos;
  const double hi = (pos + 1.0) / (pos + 2.0), lo = 1.0 / (neg + 2.0);
  double nll = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double t = labels[i] ? hi : lo;
    const double z = a * f[i] + b;
    // log(1 + e^z) computed stably; p = 1 / (1 + e^z).
    const double log1pexp = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    nll += t * log1pexp + (1.0 - t) * (log1pexp - z);
  }
  return nll;
}

std::pair<double, double> platt_gradient_descent(std::span<const double> f, std::span<const int> labels) {
  double best_a = 0.0, best_b = 0.0, best = std::numeric_limits<double>::infinity();
  for (double a0 : {-4.0, -1.0, 0.0, 1.0}) {
    double a = a0, b = 0.0, step = 1e-2;
    double current = platt_negative_log_likelihood(a, b, f, labels);
    for (int it = 0; it < 200000 && step > 1e-15; ++it) {
      const double h = 1e-7;
      const double ga = (platt_negative_log_likelihood(a + h, b, f, labels) -
                         platt_negative_log_likelihood(a - h, b, f, labels)) / (2 * h);
      const double gb = (platt_negative_log_likelihood(a, b + h, f, labels) -
                         platt_negative_log_likelihood(a, b - h, f, labels)) / (2 * h);
      const double na = a - step * ga, nb = b - step * gb;
      const double next = platt_negative_log_likelihood(na, nb, f, labels);
      if (next < current) {
        a = na;
        b = nb;
        current = next;
        step *= 1.2;
      } else {
        step *= 0.5;
      }
    }
    if (current < best) {
      best = current;
      best_a = a;
      best_b = b;
    }
  }
  return {best_a, best_b};
}

Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& loss,
                                   const Eigen::VectorXd& x, double step) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double up = loss(probe);
    probe[i] = x[i] - step;
    const double down = loss(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

double icc_two_way_random_average(const Eigen::MatrixXd& r) {
  const double n = static_cast<double>(r.rows()), k = static_cast<double>(r.cols());
  const double grand = r.mean();
  double ss_rows = 0.0, ss_cols = 0.0, ss_total = 0.0;
  for (Eigen::Index i = 0; i < r.rows(); ++i) ss_rows += k * std::pow(r.row(i).mean() - grand, 2);
  for (Eigen::Index j = 0; j < r.cols(); ++j) ss_cols += n * std::pow(r.col(j).mean() - grand, 2);
  for (Eigen::Index i = 0; i < r.rows(); ++i)
    for (Eigen::Index j = 0; j < r.cols(); ++j) ss_total += std::pow(r(i, j) - grand, 2);
  const double ss_error = ss_total - ss_rows - ss_cols;
  const double msr = ss_rows / (n - 1.0);
  const double msc = ss_cols / (k - 1.0);
  const double mse = ss_error / ((n - 1.0) * (k - 1.0));
  return (msr - mse) / (msr + (msc - mse) / n);
}

int vote_by_enumeration(std::span<const int> levels, std::span<const std::array<double, 3>> probabilities) {
  std::array<int, 3> votes{};
  for (int l : levels) ++votes[static_cast<std::size_t>(l)];
  const int top = *std::max_element(votes.begin(), votes.end());
  int winner = -1;
  double winner_mass = -1.0;
  for (int level = 0; level < 3; ++level) {
    if (votes[static_cast<std::size_t>(level)] != top) continue;
    double mass = 0.0;
    for (const auto& p : probabilities) mass += p[static_cast<std::size_t>(level)];
    if (winner < 0 || mass > winner_mass) {
      winner = level;
      winner_mass = mass;
    }
  }
  return winner;
}

}  // namespace engage::oracle
