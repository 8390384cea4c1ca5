#pragma once

#include <span>
#include <string>
#include <vector>

#include "mdmf/embeddings.hpp"
#include "mdmf/matrix.hpp"
#include "mdmf/pfs.hpp"

namespace mdmf::detect {

// Projected real references with the cached V-statistic self term
// (1/R^2) sum_{r,r'} k(x_r, x_r'). Immutable after construction.
class ReferenceBank {
 public:
  // `signatures` holds one flattened PFS field per row.
  ReferenceBank(Matrix signatures, std::size_t patch_count, std::size_t pfs_dim, double gamma);

  std::size_t size() const noexcept { return signatures_.rows(); }
  double self_term() const noexcept { return self_term_; }
  double gamma() const noexcept { return gamma_; }
  std::size_t patch_count() const noexcept { return patch_count_; }
  std::size_t pfs_dim() const noexcept { return pfs_dim_; }
  const Matrix& signatures() const noexcept { return signatures_; }
  // sum_r' k(x_r, x_r') for each reference r.
  const std::vector<double>& kernel_row_sums() const noexcept { return row_sums_; }

 private:
  Matrix signatures_;
  std::size_t patch_count_;
  std::size_t pfs_dim_;
  double gamma_;
  std::vector<double> row_sums_;
  double self_term_ = 0.0;
};

// Projects every reference in eval mode. Rejects empty sets and records
// labeled generated.
ReferenceBank build_reference_bank(const EmbeddingDataset& refs, const PFSParams& params);

// Score of an already projected test field.
double mdmf_score(const ReferenceBank& bank, const PFSField& test);
double mdmf_score(const ReferenceBank& bank, const PatchEmbeddingField& test, const PFSParams& params);

// Score of each reference against the bank with that reference left out.
// Used for real-only threshold calibration. Needs R >= 2.
std::vector<double> leave_one_out_scores(const ReferenceBank& bank);

// mean + alpha * sample standard deviation.
double calibrate_threshold_real_only(std::span<const double> real_scores, double alpha);

// Generated iff score > tau; ties are Real.
Label classify(double score, double tau) noexcept;

struct Detection {
  std::string source_id;
  double score = 0.0;
  Label label = Label::real;
};

struct DetectionReport {
  std::vector<Detection> detections;
  double tau = 0.0;
  std::size_t reference_size = 0;
};

DetectionReport batch_detect(const ReferenceBank& bank, const EmbeddingDataset& tests, const PFSParams& params,
                             double tau);

// Scores only, in input order.
std::vector<double> score_all(const ReferenceBank& bank, const EmbeddingDataset& tests, const PFSParams& params);

// The detections as a score CSV (see score_csv.hpp).
std::string report_to_csv(const DetectionReport& report);

}  // namespace mdmf::detect
