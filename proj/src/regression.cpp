#include "gaware/regression.hpp"

#include "gaware/rng.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gaware {

namespace {

OracleFit constant_fit(const Vector& y) {
  const double mean = y.size() > 0 ? y.mean() : 0.0;
  return {[mean](const Vector&) { return mean; }, true};
}

struct Standardizer {
  Vector mu;
  Vector sd;

  explicit Standardizer(const Matrix& x) {
    mu = x.colwise().mean();
    sd.resize(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double var = (x.col(j).array() - mu[j]).square().mean();
      sd[j] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
  }
  Matrix apply(const Matrix& x) const {
    Matrix z = x;
    for (Eigen::Index j = 0; j < z.cols(); ++j)
      z.col(j) = (z.col(j).array() - mu[j]) / sd[j];
    return z;
  }
  Vector apply(const Vector& x) const {
    return ((x - mu).array() / sd.array()).matrix();
  }
};

Vector ridge_solve(const Matrix& z, const Vector& yc, double penalty) {
  const Eigen::Index p = z.cols();
  Matrix gram = z.transpose() * z;
  gram.diagonal().array() += penalty * static_cast<double>(z.rows());
  return gram.ldlt().solve(z.transpose() * yc);
}

}  // namespace

RegressionOracle ridge_cv_oracle(int cv_folds) {
  return ridge_cv_oracle({1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0}, cv_folds);
}

RegressionOracle ridge_cv_oracle(std::vector<double> penalty_grid, int cv_folds) {
  if (penalty_grid.empty()) throw ValidationError("ridge needs a nonempty penalty grid");
  return [grid = std::move(penalty_grid), cv_folds](const Matrix& x, const Vector& y,
                                                    std::uint64_t seed) -> OracleFit {
    const Eigen::Index n = x.rows();
    if (n < 2) return constant_fit(y);

    const Standardizer std_x(x);
    const Matrix z = std_x.apply(x);
    const double y_mean = y.mean();
    const Vector yc = y.array() - y_mean;

    const int folds = std::min<int>(cv_folds, static_cast<int>(n));
    std::vector<int> fold_of(static_cast<std::size_t>(n));
    {
      std::vector<int> order(static_cast<std::size_t>(n));
      std::iota(order.begin(), order.end(), 0);
      Rng rng(derive_seed(seed, 0x7269646765ULL));
      rng.shuffle(order);
      for (std::size_t i = 0; i < order.size(); ++i)
        fold_of[static_cast<std::size_t>(order[i])] = static_cast<int>(i) % folds;
    }

    double best_mse = std::numeric_limits<double>::infinity();
    double best_penalty = grid.front();
    for (double penalty : grid) {
      double sse = 0.0;
      long n_test = 0;
      for (int f = 0; f < folds; ++f) {
        std::vector<Eigen::Index> train, test;
        for (Eigen::Index i = 0; i < n; ++i)
          (fold_of[static_cast<std::size_t>(i)] == f ? test : train).push_back(i);
        if (train.empty() || test.empty()) continue;
        Matrix zt(static_cast<Eigen::Index>(train.size()), z.cols());
        Vector yt(static_cast<Eigen::Index>(train.size()));
        for (std::size_t i = 0; i < train.size(); ++i) {
          zt.row(static_cast<Eigen::Index>(i)) = z.row(train[i]);
          yt[static_cast<Eigen::Index>(i)] = yc[train[i]];
        }
        const Vector beta = ridge_solve(zt, yt, penalty);
        for (Eigen::Index i : test) {
          const double err = yc[i] - z.row(i).dot(beta);
          sse += err * err;
          ++n_test;
        }
      }
      if (n_test == 0) continue;
      const double mse = sse / static_cast<double>(n_test);
      if (mse < best_mse) {
        best_mse = mse;
        best_penalty = penalty;
      }
    }

    const Vector beta = ridge_solve(z, yc, best_penalty);
    if (!beta.allFinite()) return constant_fit(y);
    return {[std_x, beta, y_mean](const Vector& v) {
              return y_mean + std_x.apply(v).dot(beta);
            },
            false};
  };
}

RegressionOracle knn_oracle(int k) {
  if (k < 1) throw ValidationError("knn needs k >= 1");
  return [k](const Matrix& x, const Vector& y, std::uint64_t) -> OracleFit {
    if (x.rows() == 0) return constant_fit(y);
    const int kk = std::min<int>(k, static_cast<int>(x.rows()));
    return {[x, y, kk](const Vector& v) {
              std::vector<std::pair<double, Eigen::Index>> dist;
              dist.reserve(static_cast<std::size_t>(x.rows()));
              for (Eigen::Index i = 0; i < x.rows(); ++i)
                dist.emplace_back((x.row(i).transpose() - v).squaredNorm(), i);
              std::partial_sort(dist.begin(), dist.begin() + kk, dist.end());
              double sum = 0.0;
              for (int i = 0; i < kk; ++i) sum += y[dist[static_cast<std::size_t>(i)].second];
              return sum / kk;
            },
            false};
  };
}

RegressionOracle constant_oracle() {
  return [](const Matrix&, const Vector& y, std::uint64_t) { return constant_fit(y); };
}

RegressionOracle zero_oracle() {
  return [](const Matrix&, const Vector&, std::uint64_t) -> OracleFit {
    return {[](const Vector&) { return 0.0; }, false};
  };
}

}  // namespace gaware
