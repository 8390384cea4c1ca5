#include "mdmf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace mdmf::metrics {

namespace {

void check_inputs(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("metrics: scores and labels differ in length");
  if (scores.empty()) throw std::invalid_argument("metrics: empty input");
  for (double s : scores) {
    if (std::isnan(s)) throw std::invalid_argument("metrics: NaN score");
  }
}

// Indices sorted by score, descending when `descending`.
std::vector<std::size_t> order_by_score(std::span<const double> scores, bool descending) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return descending ? scores[a] > scores[b] : scores[a] < scores[b];
  });
  return idx;
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const Label> labels) {
  check_inputs(scores, labels);
  const auto idx = order_by_score(scores, false);
  // Midranks: a tie group spanning ranks [lo+1, hi] gets (lo + 1 + hi) / 2.
  double rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t lo = 0; lo < idx.size();) {
    std::size_t hi = lo;
    while (hi < idx.size() && scores[idx[hi]] == scores[idx[lo]]) ++hi;
    const double midrank = 0.5 * static_cast<double>(lo + 1 + hi);
    for (std::size_t i = lo; i < hi; ++i) {
      if (labels[idx[i]] == Label::generated) {
        rank_sum += midrank;
        ++positives;
      }
    }
    lo = hi;
  }
  const std::size_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) throw std::invalid_argument("auroc: needs both classes");
  const double p = static_cast<double>(positives);
  const double u = rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

double average_precision(std::span<const double> scores, std::span<const Label> labels) {
  check_inputs(scores, labels);
  const auto total_pos =
      static_cast<std::size_t>(std::count(labels.begin(), labels.end(), Label::generated));
  if (total_pos == 0) throw std::invalid_argument("average_precision: no positives");
  const auto idx = order_by_score(scores, true);
  double acc = 0.0;
  std::size_t tp = 0;
  for (std::size_t lo = 0; lo < idx.size();) {
    std::size_t hi = lo;
    std::size_t group_tp = 0;
    while (hi < idx.size() && scores[idx[hi]] == scores[idx[lo]]) {
      if (labels[idx[hi]] == Label::generated) ++group_tp;
      ++hi;
    }
    tp += group_tp;
    if (group_tp > 0) acc += static_cast<double>(group_tp) * (static_cast<double>(tp) / static_cast<double>(hi));
    lo = hi;
  }
  return acc / static_cast<double>(total_pos);
}

BestAccuracy best_accuracy(std::span<const double> scores, std::span<const Label> labels) {
  check_inputs(scores, labels);
  const auto idx = order_by_score(scores, false);
  const std::size_t n = idx.size();
  const auto total_pos =
      static_cast<std::size_t>(std::count(labels.begin(), labels.end(), Label::generated));

  // Sweep tau upward from -inf. Below the first score everything is
  // predicted generated; each passed tie group flips to real.
  std::size_t correct = total_pos;
  BestAccuracy best{static_cast<double>(correct) / static_cast<double>(n), -std::numeric_limits<double>::infinity()};
  std::size_t best_correct = correct;
  for (std::size_t lo = 0; lo < n;) {
    std::size_t hi = lo;
    while (hi < n && scores[idx[hi]] == scores[idx[lo]]) {
      if (labels[idx[hi]] == Label::generated) {
        --correct;
      } else {
        ++correct;
      }
      ++hi;
    }
    if (correct > best_correct) {
      best_correct = correct;
      if (hi < n) {
        const double a = scores[idx[lo]];
        const double b = scores[idx[hi]];
        const double mid = a + 0.5 * (b - a);
        best.tau = mid < b ? mid : a;  // adjacent doubles
      } else {
        best.tau = std::numeric_limits<double>::infinity();
      }
      best.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    }
    lo = hi;
  }
  return best;
}

}  // namespace mdmf::metrics
