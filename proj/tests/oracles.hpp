// SPDX-License-Identifier: Apache-2.0
// Reference computations for tests. Written independently of the library:
// extended precision, brute force, direct scans. Nothing here calls into
// the code under test.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace oracle {

// Entropy of softmax(logits / T) in nats, long double, explicit probabilities.
inline long double entropy(const std::vector<double>& logits, double temperature) {
  long double max_l = logits[0];
  for (double l : logits) max_l = std::max<long double>(max_l, l);
  std::vector<long double> w(logits.size());
  long double z = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    w[i] = std::exp((static_cast<long double>(logits[i]) - max_l) / temperature);
    z += w[i];
  }
  long double h = 0;
  for (long double wi : w) {
    const long double p = wi / z;
    if (p > 0) h -= p * std::log(p);
  }
  return h;
}

inline long double distance(const std::vector<double>& a, const std::vector<double>& b) {
  long double ss = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const long double d = static_cast<long double>(a[i]) - static_cast<long double>(b[i]);
    ss += d * d;
  }
  return std::sqrt(ss);
}

// Nucleus by threshold: token i is kept iff the mass of tokens strictly more
// probable than i is below p. Quadratic on purpose.
inline std::set<std::size_t> nucleus(const std::vector<double>& probs, double top_p) {
  std::set<std::size_t> keep;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    long double above = 0;
    for (std::size_t j = 0; j < probs.size(); ++j) {
      if (probs[j] > probs[i]) above += probs[j];
    }
    if (above < top_p) keep.insert(i);
  }
  return keep;
}

inline std::vector<double> softmax(const std::vector<double>& logits, double temperature) {
  long double max_l = *std::max_element(logits.begin(), logits.end());
  std::vector<long double> w(logits.size());
  long double z = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    w[i] = std::exp((logits[i] - max_l) / temperature);
    z += w[i];
  }
  std::vector<double> p(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) p[i] = static_cast<double>(w[i] / z);
  return p;
}

// Steps (1-based) at which SCA fires, scanning the attention trajectory with
// the three clauses: below tau, cooldown elapsed, firings left.
inline std::vector<std::size_t> sca_firings(const std::vector<double>& attention, double tau, std::size_t cooldown,
                                            std::size_t max_firings) {
  std::vector<std::size_t> fired;
  for (std::size_t t = 1; t <= attention.size(); ++t) {
    if (!(attention[t - 1] < tau)) continue;
    if (fired.size() >= max_firings) continue;
    if (!fired.empty() && t - fired.back() < cooldown) continue;
    fired.push_back(t);
  }
  return fired;
}

// Risk machine written as a transition table: state x band -> state.
// Bands: 0 below 0.45, 1 [0.45,0.50), 2 [0.50,0.65), 3 [0.65,0.70), 4 >= 0.70.
inline std::vector<std::string> hysteresis(const std::vector<double>& smoothed, std::string start = "SAFE") {
  auto band = [](double s) { return s < 0.45 ? 0 : s < 0.50 ? 1 : s < 0.65 ? 2 : s < 0.70 ? 3 : 4; };
  static const std::string table[3][5] = {
      {"SAFE", "SAFE", "WARN", "WARN", "CRITICAL"},
      {"SAFE", "WARN", "WARN", "WARN", "CRITICAL"},
      {"SAFE", "WARN", "WARN", "CRITICAL", "CRITICAL"},
  };
  std::vector<std::string> out;
  std::string state = std::move(start);
  for (double s : smoothed) {
    const int row = state == "SAFE" ? 0 : state == "WARN" ? 1 : 2;
    state = table[row][band(s)];
    out.push_back(state);
  }
  return out;
}

// Root of f on [lo, hi] by bisection; f must change sign.
inline std::optional<double> bisect(const std::function<double(double)>& f, double lo, double hi) {
  double flo = f(lo);
  if (flo * f(hi) > 0) return std::nullopt;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm < 0) == (flo < 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace oracle
