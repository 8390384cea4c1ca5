#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "mdmf/baselines.hpp"

using namespace mdmf;
using namespace mdmf::baselines;

namespace {

PatchEmbeddingField scalar_patches(std::vector<double> v) {
  const std::size_t k = v.size();
  return PatchEmbeddingField(Matrix(k, 1, std::move(v)));
}

const PatchClassifier kIdentity{{1.0}, 0.0};

double logit_of(double p) { return std::log(p / (1.0 - p)); }

// Two clouds separated along the first axis.
std::pair<EmbeddingDataset, EmbeddingDataset> separable(std::size_t n) {
  EmbeddingDataset real(4, 3), fake(4, 3);
  rng::Stream s(rng::Key(12));
  for (std::size_t i = 0; i < n; ++i) {
    Matrix a(4, 3), b(4, 3);
    for (std::size_t k = 0; k < 4; ++k) {
      a(k, 0) = -2.0 + 0.5 * s.uniform();
      b(k, 0) = 2.0 - 0.5 * s.uniform();
      for (std::size_t c = 1; c < 3; ++c) {
        a(k, c) = s.normal();
        b(k, c) = s.normal();
      }
    }
    real.add({PatchEmbeddingField(a), Label::real, ""});
    fake.add({PatchEmbeddingField(b), Label::generated, ""});
  }
  return {real, fake};
}

}  // namespace

TEST_SUITE("baselines") {
  TEST_CASE("voting examples") {
    const auto f = scalar_patches({logit_of(0.1), logit_of(0.3), logit_of(0.6), logit_of(0.9)});
    CHECK(voting_score(f, kIdentity, 0.5) == 0.5);
    CHECK(voting_score(f, kIdentity, 0.0) == 1.0);
    CHECK(voting_score(f, kIdentity, 1.0) == 0.0);
    const auto extreme = scalar_patches({-800.0, 800.0});
    CHECK(voting_score(extreme, kIdentity, 0.0) == 1.0);
    CHECK(voting_score(extreme, kIdentity, 1.0) == 0.0);
    CHECK_THROWS_AS(voting_score(f, kIdentity, 1.5), std::invalid_argument);
  }

  TEST_CASE("voting is non-increasing in theta") {
    const auto f = testing::random_field(25, 1, 3, 4.0);
    double prev = 1.0;
    for (double t : dense_theta_grid()) {
      const double v = voting_score(f, kIdentity, t);
      CHECK(v <= prev);
      prev = v;
    }
    CHECK(dense_theta_grid().size() == 99);
  }

  TEST_CASE("pooling examples") {
    const auto f = scalar_patches({1.0, 2.0, 3.0, 4.0});
    CHECK(pooled_score(f, kIdentity, Pooling::mean) == 2.5);
    CHECK(pooled_score(f, kIdentity, Pooling::max) == 4.0);
    CHECK(pooled_score(f, kIdentity, Pooling::topk, 2) == 3.5);
    CHECK(pooled_score(f, kIdentity, Pooling::topk, 4) == 2.5);
    CHECK(pooled_score(f, kIdentity, Pooling::topk, 1) == 4.0);
    CHECK_THROWS_AS(pooled_score(f, kIdentity, Pooling::topk, 5), std::invalid_argument);
    CHECK_THROWS_AS(pooled_score(f, kIdentity, Pooling::topk, 0), std::invalid_argument);
    const auto one = scalar_patches({0.7});
    for (auto m : {Pooling::mean, Pooling::max}) CHECK(pooled_score(one, kIdentity, m) == 0.7);
  }

  TEST_CASE("pooled scores are ordered max >= topk >= mean") {
    const PatchClassifier clf{{0.3, -1.2, 0.8}, 0.1};
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto f = testing::random_field(9, 3, s);
      const double mx = pooled_score(f, clf, Pooling::max);
      const double tk = pooled_score(f, clf, Pooling::topk, 5);
      const double mn = pooled_score(f, clf, Pooling::mean);
      CHECK(mx >= tk);
      CHECK(tk >= mn - 1e-15);
    }
  }

  TEST_CASE("BCE gradient matches finite differences") {
    const auto fields = testing::random_fields(6, 5, 4, 3, 2.0);
    std::vector<const PatchEmbeddingField*> ptr;
    for (const auto& f : fields) ptr.push_back(&f);
    const std::vector<Label> labels{Label::real, Label::generated, Label::generated, Label::real, Label::real,
                                    Label::generated};
    for (std::uint64_t s = 0; s < 10; ++s) {
      PatchClassifier clf{{0, 0, 0, 0}, 0.0};
      rng::Stream st{rng::Key(s)};
      for (auto& w : clf.weight) w = st.normal();
      clf.bias = st.normal();
      std::vector<double> gw;
      double gb = 0.0;
      bce_loss(clf, ptr, labels, &gw, &gb);
      const auto rel = [](double a, double f) { return std::abs(a - f) / std::max({std::abs(a), std::abs(f), 1e-8}); };
      const double h = 1e-6;
      for (std::size_t c = 0; c < 4; ++c) {
        auto up = clf, down = clf;
        up.weight[c] += h;
        down.weight[c] -= h;
        const double fd = (bce_loss(up, ptr, labels) - bce_loss(down, ptr, labels)) / (2 * h);
        CHECK(rel(gw[c], fd) < 1e-4);
      }
      auto up = clf, down = clf;
      up.bias += h;
      down.bias -= h;
      CHECK(rel(gb, (bce_loss(up, ptr, labels) - bce_loss(down, ptr, labels)) / (2 * h)) < 1e-4);
    }
  }

  TEST_CASE("loss falls monotonically on separable clouds") {
    const auto [real, fake] = separable(40);
    TrainConfig cfg;
    cfg.batch_size = 80;
    cfg.learning_rate = 0.01;
    cfg.weight_decay = 0.0;
    double prev = dataset_bce_loss(PatchClassifier{{0, 0, 0}, 0.0}, real, fake);
    for (int e = 1; e <= 15; ++e) {
      cfg.epochs = e;
      const double loss = dataset_bce_loss(train_patch_classifier(real, fake, cfg), real, fake);
      CHECK(loss < prev);
      prev = loss;
    }
  }

  TEST_CASE("zero learning rate keeps the zero initialization") {
    const auto [real, fake] = separable(10);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 4;
    cfg.learning_rate = 0.0;
    const auto clf = train_patch_classifier(real, fake, cfg);
    CHECK(clf.weight == std::vector<double>(3, 0.0));
    CHECK(clf.bias == 0.0);
  }

  TEST_CASE("training is seeded and validates shapes") {
    const auto [real, fake] = separable(20);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 7;
    cfg.learning_rate = 0.01;
    const auto a = train_patch_classifier(real, fake, cfg);
    const auto b = train_patch_classifier(real, fake, cfg);
    CHECK(a.weight == b.weight);
    CHECK(a.bias == b.bias);
    EmbeddingDataset other(4, 2);
    other.add({testing::random_field(4, 2, 1), Label::generated, ""});
    CHECK_THROWS_AS(train_patch_classifier(real, other, cfg), std::invalid_argument);
  }
}
