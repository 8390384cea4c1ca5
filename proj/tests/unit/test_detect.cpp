#include <algorithm>
#include <cmath>
#include <omp.h>

#include "doctest.h"
#include "helpers.hpp"
#include "mdmf/detect.hpp"
#include "mdmf/kernel_mmd.hpp"
#include "mdmf/score_csv.hpp"
#include "mdmf/synth.hpp"
#include "mdmf/train.hpp"

using namespace mdmf;
using namespace mdmf::detect;

namespace {

ReferenceBank bank_of(const Matrix& sigs, double gamma = 1.0) { return ReferenceBank(sigs, sigs.cols(), 1, gamma); }

PFSField row_field(const Matrix& m, std::size_t r) {
  return PFSField(Matrix(m.cols(), 1, std::vector<double>(m.row(r).begin(), m.row(r).end())));
}

Matrix drop_row(const Matrix& m, std::size_t skip) {
  Matrix out(m.rows() - 1, m.cols());
  for (std::size_t r = 0, o = 0; r < m.rows(); ++r)
    if (r != skip) std::copy(m.row(r).begin(), m.row(r).end(), out.row(o++).begin());
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST_SUITE("detect") {
  TEST_CASE("self term examples") {
    CHECK(bank_of(testing::random_matrix(1, 3, 1)).self_term() == 1.0);
    Matrix two(2, 3, 0.25);
    CHECK(bank_of(two).self_term() == 1.0);
    const auto x = testing::random_matrix(3, 4, 2);
    double s = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) s += std::exp(-squared_distance(x.row(i), x.row(j)) / (2 * 0.7 * 0.7));
    CHECK(bank_of(x, 0.7).self_term() == doctest::Approx(s / 9.0).epsilon(1e-12));
  }

  TEST_CASE("score examples") {
    const auto x = testing::random_matrix(1, 3, 3);
    const auto bank = bank_of(x, 0.8);
    CHECK(mdmf_score(bank, row_field(x, 0)) == 0.0);

    const double r = 1.3, g = 0.8;
    Matrix y = x;
    y(0, 0) += r;
    CHECK(mdmf_score(bank, row_field(y, 0)) == doctest::Approx(2.0 * (1.0 - std::exp(-r * r / (2 * g * g)))).epsilon(1e-12));
  }

  TEST_CASE("score equals the biased estimate against a singleton") {
    const auto refs = testing::random_matrix(12, 4, 4);
    const auto tests = testing::random_matrix(6, 4, 5, 1.5);
    const auto bank = bank_of(refs, 1.1);
    for (std::size_t t = 0; t < 6; ++t) {
      const Matrix one(1, 4, std::vector<double>(tests.row(t).begin(), tests.row(t).end()));
      const double s = mdmf_score(bank, row_field(tests, t));
      CHECK(s == doctest::Approx(mmd::mmd2_biased(refs, one, 1.1)).epsilon(1e-12));
      CHECK(s >= 0.0);
    }
  }

  TEST_CASE("scores are invariant to reference order") {
    const auto refs = testing::random_matrix(10, 3, 6);
    Matrix rev(10, 3);
    for (std::size_t r = 0; r < 10; ++r) std::copy(refs.row(9 - r).begin(), refs.row(9 - r).end(), rev.row(r).begin());
    const auto tests = testing::random_matrix(5, 3, 7);
    for (std::size_t t = 0; t < 5; ++t)
      CHECK(mdmf_score(bank_of(refs), row_field(tests, t)) ==
            doctest::Approx(mdmf_score(bank_of(rev), row_field(tests, t))).epsilon(1e-12));
  }

  TEST_CASE("leave-one-out scores match rebuilt banks") {
    const auto refs = testing::random_matrix(8, 3, 8);
    const auto loo = leave_one_out_scores(bank_of(refs, 0.9));
    for (std::size_t r = 0; r < 8; ++r)
      CHECK(loo[r] == doctest::Approx(mdmf_score(bank_of(drop_row(refs, r), 0.9), row_field(refs, r))).epsilon(1e-12));
    CHECK_THROWS_AS(leave_one_out_scores(bank_of(testing::random_matrix(1, 3, 1))), std::invalid_argument);
  }

  TEST_CASE("threshold calibration") {
    const std::vector<double> c(5, 0.42);
    CHECK(calibrate_threshold_real_only(c, 3.0) == doctest::Approx(0.42));
    const std::vector<double> two{0.0, 2.0};
    CHECK(calibrate_threshold_real_only(two, 1.0) == doctest::Approx(1.0 + std::sqrt(2.0)).epsilon(1e-15));
    CHECK(calibrate_threshold_real_only(two, 1.0) == doctest::Approx(2.414214).epsilon(1e-6));
    CHECK(calibrate_threshold_real_only(two, 0.0) == 1.0);
    CHECK_THROWS_AS(calibrate_threshold_real_only(std::vector<double>{1.0}, 1.0), std::invalid_argument);
  }

  TEST_CASE("classification boundary") {
    CHECK(classify(0.5, 0.5) == Label::real);
    CHECK(classify(std::nextafter(0.5, 1.0), 0.5) == Label::generated);
    CHECK(classify(0.4, 0.5) == Label::real);
  }

  TEST_CASE("reference bank construction") {
    const auto params = init_params(3, 4, 1, 0);
    EmbeddingDataset empty(2, 3);
    CHECK_THROWS_AS(build_reference_bank(empty, params), std::invalid_argument);
    EmbeddingDataset gen(2, 3);
    gen.add({testing::random_field(2, 3, 1), Label::generated, "g"});
    CHECK_THROWS_AS(build_reference_bank(gen, params), std::invalid_argument);
    CHECK_THROWS_AS(ReferenceBank(Matrix(2, 3), 2, 2, 1.0), std::invalid_argument);
    const auto bank = bank_of(testing::random_matrix(3, 2, 1));
    CHECK_THROWS_AS(mdmf_score(bank, testing::pfs_of({{0.0}})), std::invalid_argument);
  }

  TEST_CASE("batch detection") {
    const auto params = init_params(3, 8, 1, 2);
    EmbeddingDataset refs(4, 3);
    for (std::size_t i = 0; i < 30; ++i) refs.add({testing::random_field(4, 3, 100 + i), Label::real, "r"});
    EmbeddingDataset tests(4, 3);
    for (std::size_t i = 0; i < 25; ++i)
      tests.add({testing::random_field(4, 3, 200 + i, 1.0 + 0.1 * i), Label::real, "t" + std::to_string(i)});
    const auto bank = build_reference_bank(refs, params);

    CHECK(batch_detect(bank, EmbeddingDataset(4, 3), params, 0.1).detections.empty());

    omp_set_num_threads(4);
    const auto report = batch_detect(bank, tests, params, 0.01);
    omp_set_num_threads(1);
    REQUIRE(report.detections.size() == 25);
    CHECK(report.reference_size == 30);
    for (std::size_t i = 0; i < 25; ++i) {
      CHECK(report.detections[i].score == mdmf_score(bank, tests[i].field, params));
      CHECK(report.detections[i].source_id == tests[i].source_id);
      CHECK(report.detections[i].label == classify(report.detections[i].score, 0.01));
    }

    EmbeddingDataset one(4, 3);
    one.add(refs[0]);
    EmbeddingDataset same(4, 3);
    same.add({refs[0].field, Label::real, "same"});
    const auto single = batch_detect(build_reference_bank(one, params), same, params, 1e-6);
    CHECK(single.detections[0].label == Label::real);

    const auto rows = parse_score_csv(report_to_csv(report));
    REQUIRE(rows.size() == 25);
    CHECK(rows[7].score == report.detections[7].score);
  }

  TEST_CASE("median fake score exceeds median real score after training") {
    synth::SyntheticConfig c;
    c.dim = 8;
    c.patch_count = 16;
    c.rho = 0.3;
    c.mu_defect = synth::axis_defect(8, 4.0);
    const rng::Key key(0);
    const auto real = synth::make_dataset(synth::sample_real_fields(c, 1000, rng::derive(key, rng::Tag::real_set)),
                                          Label::real, "r");
    const auto fake = synth::make_dataset(synth::sample_fake_fields(c, 1000, rng::derive(key, rng::Tag::fake_set)),
                                          Label::generated, "f");
    const auto refs = synth::make_dataset(
        synth::sample_real_fields(c, 300, rng::derive(key, rng::Tag::reference_set)), Label::real, "ref");
    const auto tk = rng::derive(key, rng::Tag::test_set);
    const auto test_real =
        synth::make_dataset(synth::sample_real_fields(c, 200, rng::derive(tk, rng::Tag::real_set)), Label::real, "a");
    const auto test_fake = synth::make_dataset(
        synth::sample_fake_fields(c, 200, rng::derive(tk, rng::Tag::fake_set)), Label::generated, "b");

    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.batch_size = 100;
    cfg.learning_rate = 1e-3;
    cfg.dropout_enabled = false;
    const auto params = train(real, fake, cfg, init_params(8, 32, 1, 0, 0.0)).params;
    const auto bank = build_reference_bank(refs, params);
    CHECK(median(score_all(bank, test_fake, params)) > median(score_all(bank, test_real, params)));
  }
}
