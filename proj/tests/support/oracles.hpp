#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the library's implementation of the quantity being checked.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace oracle {

// Free-space loss written as a single logarithm of the km*MHz product.
inline double fspl_db(double f_mhz, double d_m) {
  return 20.0 * std::log10((d_m / 1000.0) * f_mhz) + 32.44;
}

// Linear RSSI law by direct interpolation: p_min + raw * span / raw_max.
inline double linear_dbm(double p_min, double p_max, int raw_max, int raw) {
  return p_min + raw * (p_max - p_min) / raw_max;
}

using Matrix = std::vector<std::vector<double>>;

inline std::vector<double> column_max(const Matrix& rows) {
  std::vector<double> out = rows.front();
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size(); ++i) out[i] = std::max(out[i], r[i]);
  return out;
}

// EMA in closed form: (1-a)^(n-1) x1 + sum_{k=2..n} a (1-a)^(n-k) x_k.
inline std::vector<double> ema_closed_form(const Matrix& rows, double alpha) {
  const std::size_t n = rows.size();
  std::vector<double> out(rows.front().size(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double acc = std::pow(1.0 - alpha, static_cast<double>(n - 1)) * rows[0][i];
    for (std::size_t k = 1; k < n; ++k)
      acc += alpha * std::pow(1.0 - alpha, static_cast<double>(n - 1 - k)) * rows[k][i];
    out[i] = acc;
  }
  return out;
}

// Wi-Fi channel k in 1..13: mean of 10^(dBm/10) over bins within 11 MHz of
// 2407 + 5k. Returns the lowest k with the minimum score.
inline int wifi_argmin(const std::vector<double>& freqs, const std::vector<double>& avg_dbm) {
  int best = 0;
  double best_score = 0;
  for (int k = 1; k <= 13; ++k) {
    const double c = 2407.0 + 5.0 * k;
    double sum = 0;
    int bins = 0;
    for (std::size_t i = 0; i < freqs.size(); ++i)
      if (freqs[i] >= c - 11.0 && freqs[i] <= c + 11.0) {
        sum += std::pow(10.0, avg_dbm[i] / 10.0);
        ++bins;
      }
    const double score = sum / bins;
    if (best == 0 || score < best_score) {
      best = k;
      best_score = score;
    }
  }
  return best;
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace oracle
