#pragma once

// Reference implementations written independently of the library, used as
// test oracles.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

/// Every label sequence of length `len` over `labels`.
inline std::vector<std::vector<int>> all_sequences(std::size_t len, std::size_t labels) {
  std::vector<std::vector<int>> out{{}};
  for (std::size_t l = 0; l < len; ++l) {
    std::vector<std::vector<int>> next;
    for (const auto& prefix : out) {
      for (std::size_t y = 0; y < labels; ++y) {
        auto s = prefix;
        s.push_back(static_cast<int>(y));
        next.push_back(std::move(s));
      }
    }
    out = std::move(next);
  }
  return out;
}

/// START = Y, STOP = Y + 1 in `trans`.
inline double path_score(const Matrix& em, const Matrix& trans, const std::vector<int>& y) {
  const std::size_t labels = em[0].size();
  double s = trans[labels][y[0]] + trans[y.back()][labels + 1];
  for (std::size_t l = 0; l < y.size(); ++l) {
    s += em[l][y[l]];
    if (l > 0) s += trans[y[l - 1]][y[l]];
  }
  return s;
}

inline bool allowed(const std::vector<int>& y, const std::vector<bool>& mask) {
  if (mask.empty()) return true;
  for (int v : y) {
    if (!mask[v]) return false;
  }
  return true;
}

inline double brute_log_partition(const Matrix& em, const Matrix& trans,
                                  const std::vector<bool>& mask = {}) {
  double z = 0.0;
  for (const auto& y : all_sequences(em.size(), em[0].size())) {
    if (allowed(y, mask)) z += std::exp(path_score(em, trans, y));
  }
  return std::log(z);
}

/// First maximal sequence in lexicographic order.
inline std::vector<int> brute_argmax(const Matrix& em, const Matrix& trans,
                                     const std::vector<bool>& mask = {}) {
  double best = -std::numeric_limits<double>::infinity();
  std::vector<int> arg;
  for (const auto& y : all_sequences(em.size(), em[0].size())) {
    if (!allowed(y, mask)) continue;
    const double s = path_score(em, trans, y);
    if (s > best) {
      best = s;
      arg = y;
    }
  }
  return arg;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// One GRU step with scalar loops; weights are input×hidden and hidden×hidden.
inline std::vector<double> gru_step(const std::vector<double>& x, const std::vector<double>& h,
                                    const Matrix& wz, const Matrix& wr, const Matrix& wh,
                                    const Matrix& uz, const Matrix& ur, const Matrix& uh,
                                    const std::vector<double>& bz, const std::vector<double>& br,
                                    const std::vector<double>& bh) {
  const std::size_t n = h.size();
  std::vector<double> z(n), r(n), out(n);
  for (std::size_t j = 0; j < n; ++j) {
    double az = bz[j], ar = br[j];
    for (std::size_t i = 0; i < x.size(); ++i) {
      az += x[i] * wz[i][j];
      ar += x[i] * wr[i][j];
    }
    for (std::size_t i = 0; i < n; ++i) {
      az += h[i] * uz[i][j];
      ar += h[i] * ur[i][j];
    }
    z[j] = sigmoid(az);
    r[j] = sigmoid(ar);
  }
  for (std::size_t j = 0; j < n; ++j) {
    double ah = bh[j];
    for (std::size_t i = 0; i < x.size(); ++i) ah += x[i] * wh[i][j];
    for (std::size_t i = 0; i < n; ++i) ah += r[i] * h[i] * uh[i][j];
    out[j] = (1.0 - z[j]) * h[j] + z[j] * std::tanh(ah);
  }
  return out;
}

/// Central-difference derivative of f at x along coordinate i.
inline double numeric_partial(const std::function<double(const std::vector<double>&)>& f,
                              std::vector<double> x, std::size_t i, double eps = 1e-5) {
  const double saved = x[i];
  x[i] = saved + eps;
  const double up = f(x);
  x[i] = saved - eps;
  const double down = f(x);
  return (up - down) / (2.0 * eps);
}

}  // namespace oracle
