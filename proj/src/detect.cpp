#include "mdmf/detect.hpp"

#include <cmath>
#include <stdexcept>

#include "mdmf/kernel_mmd.hpp"
#include "mdmf/score_csv.hpp"

namespace mdmf::detect {

ReferenceBank::ReferenceBank(Matrix signatures, std::size_t patch_count, std::size_t pfs_dim, double gamma)
    : signatures_(std::move(signatures)), patch_count_(patch_count), pfs_dim_(pfs_dim), gamma_(gamma) {
  if (signatures_.rows() == 0) throw std::invalid_argument("ReferenceBank: no references");
  if (signatures_.cols() != patch_count * pfs_dim) throw std::invalid_argument("ReferenceBank: signature width mismatch");
  const Matrix k = mmd::cross_kernel(signatures_, signatures_, gamma_);
  row_sums_.resize(k.rows());
  double total = 0.0;
  for (std::size_t r = 0; r < k.rows(); ++r) {
    double acc = 0.0;
    for (double v : k.row(r)) acc += v;
    row_sums_[r] = acc;
    total += acc;
  }
  const double rr = static_cast<double>(k.rows());
  self_term_ = total / (rr * rr);
}

ReferenceBank build_reference_bank(const EmbeddingDataset& refs, const PFSParams& params) {
  if (refs.empty()) throw std::invalid_argument("build_reference_bank: empty reference set");
  for (const auto& r : refs.records()) {
    if (r.label != Label::real) throw std::invalid_argument("build_reference_bank: reference '" + r.source_id +
                                                            "' is labeled generated");
  }
  const auto fields = project_all(refs, params);
  return ReferenceBank(mmd::stack_fields(fields), refs.patch_count(), params.output_dim, params.gamma());
}

double mdmf_score(const ReferenceBank& bank, const PFSField& test) {
  if (test.patch_count() != bank.patch_count() || test.dim() != bank.pfs_dim()) {
    throw std::invalid_argument("mdmf_score: test field shape does not match the reference bank");
  }
  const auto z = test.flat();
  const double nz = dot(z, z);
  const double scale = 1.0 / (2.0 * bank.gamma() * bank.gamma());
  double cross = 0.0;
  for (std::size_t r = 0; r < bank.size(); ++r) {
    const auto x = bank.signatures().row(r);
    const double d2 = std::max(0.0, dot(x, x) + nz - 2.0 * dot(x, z));
    cross += std::exp(-d2 * scale);
  }
  // k(y, y) = 1 for the Gaussian kernel.
  const double value = bank.self_term() + 1.0 - 2.0 * cross / static_cast<double>(bank.size());
  return std::max(0.0, value);
}

double mdmf_score(const ReferenceBank& bank, const PatchEmbeddingField& test, const PFSParams& params) {
  return mdmf_score(bank, pfs_forward(test, params, Mode::eval));
}

std::vector<double> leave_one_out_scores(const ReferenceBank& bank) {
  const std::size_t r_count = bank.size();
  if (r_count < 2) throw std::invalid_argument("leave_one_out_scores: needs at least 2 references");
  const auto& rows = bank.kernel_row_sums();
  double total = 0.0;
  for (double v : rows) total += v;
  const double m = static_cast<double>(r_count - 1);
  std::vector<double> out(r_count);
  for (std::size_t r = 0; r < r_count; ++r) {
    // Remove row r and column r (each containing the unit diagonal once).
    const double self = (total - 2.0 * rows[r] + 1.0) / (m * m);
    const double cross = (rows[r] - 1.0) / m;
    out[r] = std::max(0.0, self + 1.0 - 2.0 * cross);
  }
  return out;
}

double calibrate_threshold_real_only(std::span<const double> real_scores, double alpha) {
  if (real_scores.size() < 2) throw std::invalid_argument("calibrate_threshold_real_only: needs at least 2 scores");
  double mean = 0.0;
  for (double s : real_scores) mean += s;
  mean /= static_cast<double>(real_scores.size());
  double ss = 0.0;
  for (double s : real_scores) ss += (s - mean) * (s - mean);
  const double sd = std::sqrt(ss / static_cast<double>(real_scores.size() - 1));
  return mean + alpha * sd;
}

Label classify(double score, double tau) noexcept { return score > tau ? Label::generated : Label::real; }

std::vector<double> score_all(const ReferenceBank& bank, const EmbeddingDataset& tests, const PFSParams& params) {
  std::vector<double> scores(tests.size());
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < tests.size(); ++i) scores[i] = mdmf_score(bank, tests[i].field, params);
  return scores;
}

DetectionReport batch_detect(const ReferenceBank& bank, const EmbeddingDataset& tests, const PFSParams& params,
                             double tau) {
  const auto scores = score_all(bank, tests, params);
  DetectionReport report;
  report.tau = tau;
  report.reference_size = bank.size();
  report.detections.reserve(tests.size());
  for (std::size_t i = 0; i < tests.size(); ++i) {
    report.detections.push_back({tests[i].source_id, scores[i], classify(scores[i], tau)});
  }
  return report;
}

std::string report_to_csv(const DetectionReport& report) {
  std::vector<ScoreRow> rows;
  rows.reserve(report.detections.size());
  for (const auto& d : report.detections) rows.push_back({d.source_id, d.score, d.label});
  return write_score_csv(rows);
}

}  // namespace mdmf::detect
