#include <algorithm>
#include <cmath>
#include <cstring>
#include <omp.h>

#include "doctest.h"
#include "helpers.hpp"
#include "mdmf/adam.hpp"
#include "mdmf/errors.hpp"
#include "mdmf/pfs.hpp"
#include "mdmf/synth.hpp"
#include "mdmf/train.hpp"

using namespace mdmf;

namespace {

PFSParams scalar_net(Activation act) {
  PFSParams p;
  p.input_dim = 1;
  p.hidden_width = 1;
  p.output_dim = 1;
  p.activation = act;
  p.weights = {{1.0}, {0.0}, {1.0}, {0.0}, 0.0};
  return p;
}

struct TaskData {
  EmbeddingDataset real{16, 8};
  EmbeddingDataset fake{16, 8};
};

TaskData reference_task(std::size_t n, std::uint64_t seed) {
  synth::SyntheticConfig c;
  c.dim = 8;
  c.patch_count = 16;
  c.sigma_e = 1.0;
  c.rho = 0.3;
  c.mu_defect = synth::axis_defect(8, 4.0);
  const rng::Key key(seed);
  return {synth::make_dataset(synth::sample_real_fields(c, n, rng::derive(key, rng::Tag::real_set)), Label::real, "r"),
          synth::make_dataset(synth::sample_fake_fields(c, n, rng::derive(key, rng::Tag::fake_set)), Label::generated,
                              "f")};
}

TrainConfig small_train(int epochs) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 32;
  cfg.learning_rate = 1e-3;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_SUITE("pfs") {
  TEST_CASE("initialization") {
    const auto p = init_params(8, 32, 2, 3);
    CHECK(p.gamma() == 1.0);
    CHECK(p.weights.log_gamma == 0.0);
    for (double b : p.weights.b1) CHECK(b == 0.0);
    for (double b : p.weights.b2) CHECK(b == 0.0);
    for (double w : p.weights.w1) CHECK(std::abs(w) <= 1.0 / std::sqrt(8.0));
    for (double w : p.weights.w2) CHECK(std::abs(w) <= 1.0 / std::sqrt(32.0));
    CHECK(p == init_params(8, 32, 2, 3));
    CHECK_FALSE(p.weights == init_params(8, 32, 2, 4).weights);
    CHECK_THROWS_AS(init_params(0, 4, 1, 0), std::invalid_argument);
  }

  TEST_CASE("zero weights project to zero") {
    auto p = init_params(4, 6, 1, 0);
    p.weights = p.zeros_like();
    const auto z = pfs_forward(testing::random_field(5, 4, 1), p, Mode::eval);
    for (double v : z.flat()) CHECK(v == 0.0);
  }

  TEST_CASE("scalar network matches a hand evaluation") {
    const PatchEmbeddingField e(Matrix(1, 1, {0.5}));
    const double gelu = 0.5 * 0.5 * (1.0 + std::erf(0.5 / std::sqrt(2.0)));
    CHECK(pfs_forward(e, scalar_net(Activation::gelu), Mode::eval).flat()[0] ==
          doctest::Approx(std::tanh(gelu)).epsilon(1e-15));
    CHECK(pfs_forward(e, scalar_net(Activation::tanh), Mode::eval).flat()[0] ==
          doctest::Approx(std::tanh(std::tanh(0.5))).epsilon(1e-15));
  }

  TEST_CASE("activation derivatives match differences") {
    for (auto act : {Activation::gelu, Activation::tanh}) {
      for (double x : {-3.0, -0.7, 0.0, 0.4, 2.5}) {
        const double fd = (activate(act, x + 1e-6) - activate(act, x - 1e-6)) / 2e-6;
        CHECK(activate_derivative(act, x) == doctest::Approx(fd).epsilon(1e-8));
      }
    }
  }

  TEST_CASE("eval mode ignores the dropout stream; outputs are bounded") {
    const auto p = init_params(6, 16, 3, 1);
    const auto f = testing::random_field(9, 6, 2, 50.0);
    const auto a = pfs_forward(f, p, Mode::eval, {rng::Key(1), 2, 3});
    CHECK(a == pfs_forward(f, p, Mode::eval, {rng::Key(9), 0, 0}));
    for (double v : a.flat()) {
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
    }
    CHECK_THROWS_AS(pfs_forward(testing::random_field(2, 5, 1), p, Mode::eval), std::invalid_argument);
  }

  TEST_CASE("dropout masks use inverted scaling at the configured rate") {
    const auto p = init_params(4, 256, 1, 1, 0.3);
    ForwardCache cache;
    pfs_forward(testing::random_field(200, 4, 3), p, Mode::train, {rng::Key(4), 0, 0}, &cache);
    std::size_t zeros = 0;
    for (double m : cache.mask.flat()) {
      CHECK((m == 0.0 || m == doctest::Approx(1.0 / 0.7)));
      zeros += m == 0.0;
    }
    const double n = static_cast<double>(cache.mask.size());
    CHECK(std::abs(zeros / n - 0.3) < 5.0 * std::sqrt(0.21 / n));

    auto q = p;
    q.dropout_rate = 0.0;
    const auto f = testing::random_field(3, 4, 5);
    CHECK(pfs_forward(f, q, Mode::train, {rng::Key(4)}) == pfs_forward(f, q, Mode::eval));
  }

  TEST_CASE("checkpoint round trip and corruption") {
    auto p = init_params(5, 7, 2, 8, 0.25);
    p.weights.log_gamma = -0.4;
    p.weights.b1[3] = 0.125;
    const auto bytes = encode_checkpoint(p);
    CHECK(decode_checkpoint(bytes) == p);

    auto bad = bytes;
    bad[1] ^= 0xff;
    CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
    auto cut = bytes;
    cut.pop_back();
    CHECK_THROWS_AS(decode_checkpoint(cut), FormatError);
    auto extra = bytes;
    extra.push_back(1);
    CHECK_THROWS_AS(decode_checkpoint(extra), FormatError);
    auto nan = bytes;
    const double q = std::numeric_limits<double>::quiet_NaN();
    std::memcpy(nan.data() + 28, &q, 8);  // log_gamma
    CHECK_THROWS_AS(decode_checkpoint(nan), FormatError);

    CHECK_THROWS_AS(encode_checkpoint(init_params(2, 2, 1, 0, 0.3, Activation::tanh)), std::invalid_argument);
  }
}

TEST_SUITE("adam") {
  TEST_CASE("one step on a quadratic matches a hand-stepped reference") {
    // f(p) = 0.5 |p|^2, so grad = p.
    AdamConfig cfg{0.01, 0.9, 0.99, 1e-8, 0.1};
    std::vector<double> p{1.0, -2.0, 0.5};
    const std::vector<double> p0 = p;
    AdamW opt(cfg);
    opt.begin_step();
    opt.update(0, p, p0, true);
    for (std::size_t i = 0; i < 3; ++i) {
      const double g = p0[i];
      const double m_hat = (0.1 * g) / (1.0 - 0.9);
      const double v_hat = (0.01 * g * g) / (1.0 - 0.99);
      const double expected = p0[i] * (1.0 - 0.01 * 0.1) - 0.01 * m_hat / (std::sqrt(v_hat) + 1e-8);
      CHECK(std::abs(p[i] - expected) < 1e-12);
    }
  }

  TEST_CASE("two steps with and without decay") {
    AdamConfig cfg{0.05, 0.8, 0.95, 1e-8, 0.2};
    double a = 2.0;
    double b = 2.0;
    double m = 0.0, v = 0.0, ref = 2.0;
    AdamW opt(cfg);
    for (int t = 1; t <= 2; ++t) {
      const double ga = a;
      const double gb = b;
      opt.begin_step();
      opt.update(0, std::span(&a, 1), std::span(&ga, 1), true);
      opt.update(1, std::span(&b, 1), std::span(&gb, 1), false);
      const double g = ref;
      m = 0.8 * m + 0.2 * g;
      v = 0.95 * v + 0.05 * g * g;
      const double step = 0.05 * (m / (1 - std::pow(0.8, t))) / (std::sqrt(v / (1 - std::pow(0.95, t))) + 1e-8);
      ref = ref * (1.0 - 0.05 * 0.2) - step;
      CHECK(std::abs(a - ref) < 1e-12);
    }
    CHECK(b > a);
  }

  TEST_CASE("misuse is rejected") {
    AdamW opt(AdamConfig{});
    std::vector<double> p{1.0};
    const std::vector<double> g{1.0};
    CHECK_THROWS_AS(opt.update(0, p, g, true), std::logic_error);
    opt.begin_step();
    const std::vector<double> g2{1.0, 2.0};
    CHECK_THROWS_AS(opt.update(0, p, g2, true), std::invalid_argument);
  }
}

TEST_SUITE("train") {
  TEST_CASE("keyed permutations are permutations and reproducible") {
    const auto p = keyed_permutation(100, rng::Key(3), 1, 0);
    auto sorted = p;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 100; ++i) CHECK(sorted[i] == i);
    CHECK(p == keyed_permutation(100, rng::Key(3), 1, 0));
    CHECK_FALSE(p == keyed_permutation(100, rng::Key(3), 2, 0));
    CHECK(keyed_permutation(0, rng::Key(1), 0, 0).empty());
  }

  TEST_CASE("training raises the objective on the synthetic task") {
    const auto data = reference_task(512, 21);
    const auto r = train(data.real, data.fake, small_train(6), init_params(8, 32, 1, 5));
    CHECK(r.history.epoch_mean_j(5) > r.history.epoch_mean_j(0));
    REQUIRE(r.history.steps.size() == 6 * 16);
    for (std::size_t i = 1; i < r.history.steps.size(); ++i)
      CHECK(r.history.steps[i].step > r.history.steps[i - 1].step);
  }

  TEST_CASE("zero learning rate without decay returns the initial parameters") {
    const auto data = reference_task(64, 22);
    auto cfg = small_train(1);
    cfg.learning_rate = 0.0;
    cfg.weight_decay = 0.0;
    const auto init = init_params(8, 16, 1, 2);
    CHECK(train(data.real, data.fake, cfg, init).params == init);
    cfg.epochs = 0;
    CHECK_THROWS_AS(train(data.real, data.fake, cfg, init), std::invalid_argument);
  }

  TEST_CASE("training is deterministic across runs and thread counts") {
    const auto data = reference_task(128, 23);
    const auto init = init_params(8, 16, 1, 2);
    omp_set_num_threads(1);
    const auto a = train(data.real, data.fake, small_train(2), init);
    omp_set_num_threads(4);
    const auto b = train(data.real, data.fake, small_train(2), init);
    omp_set_num_threads(1);
    CHECK(a.history == b.history);
    CHECK(a.params == b.params);
    auto other = small_train(2);
    other.seed = 6;
    CHECK_FALSE(train(data.real, data.fake, other, init).history == a.history);
  }

  TEST_CASE("input validation") {
    const auto data = reference_task(16, 24);
    CHECK_THROWS_AS(train(data.real, data.fake, small_train(1), init_params(8, 4, 1, 0)), std::invalid_argument);
    auto cfg = small_train(1);
    cfg.batch_size = 8;
    CHECK_THROWS_AS(train(data.real, data.fake, cfg, init_params(4, 4, 1, 0)), std::invalid_argument);
    CHECK_NOTHROW(train(data.real, data.fake, cfg, init_params(8, 4, 1, 0)));
  }
}
