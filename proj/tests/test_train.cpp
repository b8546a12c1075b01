#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>

#include <cmath>
#include <set>
#include <stdexcept>
#include <string>

#include "ipinf/dataset.hpp"
#include "ipinf/metrics.hpp"
#include "ipinf/model.hpp"
#include "ipinf/train.hpp"

using namespace ipinf;

namespace {

TrainConfig quick_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.learning_rate = 0.3;
  cfg.epochs = 120;
  cfg.batch_size = 32;
  cfg.weight_decay = 0.0;
  cfg.checkpoint_stride = 40;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("initialization is bounded by the fan-in rule and seed-deterministic") {
  const Arch arch = Arch::mlp(4, {8, 3});
  ParamVector a = init_params(arch, 5);
  ParamVector b = init_params(arch, 5);
  ParamVector c = init_params(arch, 6);

  CHECK(a.values == b.values);
  CHECK(a.values != c.values);

  // Widest fan-in in this net is 8, so every draw obeys the loosest bound,
  // and the first layer obeys the 1/sqrt(4) bound.
  const long first_layer = 4 * 8 + 8;
  for (long k = 0; k < first_layer; ++k) CHECK(std::abs(a.values(k)) <= 0.5);
  CHECK(a.values.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(3.0));
}

TEST_CASE("training is bit-reproducible under a fixed seed") {
  auto [train_set, unused] = make_blobs(64, 8, 6.0, 2);
  (void)unused;
  TrainConfig cfg = quick_config(9);

  TrainResult r1 = train(train_set, Arch::linear(2), cfg);
  TrainResult r2 = train(train_set, Arch::linear(2), cfg);
  CHECK(r1.final_params.values == r2.final_params.values);
  REQUIRE(r1.checkpoints.size() == r2.checkpoints.size());
  for (std::size_t i = 0; i < r1.checkpoints.size(); ++i)
    CHECK(r1.checkpoints[i].values == r2.checkpoints[i].values);
}

TEST_CASE("zero epochs returns the initialization as its own checkpoint") {
  auto [train_set, unused] = make_blobs(16, 4, 6.0, 3);
  (void)unused;
  TrainConfig cfg = quick_config(4);
  cfg.epochs = 0;

  TrainResult r = train(train_set, Arch::linear(2), cfg);
  CHECK(r.final_params.values == init_params(Arch::linear(2), 4).values);
  REQUIRE(r.checkpoints.size() == 1);
  CHECK(r.checkpoints[0].values == r.final_params.values);
}

TEST_CASE("checkpoints land on stride multiples plus the final state") {
  auto [train_set, unused] = make_blobs(32, 4, 6.0, 5);
  (void)unused;

  SUBCASE("final epoch off the stride grid appends one extra snapshot") {
    TrainConfig cfg = quick_config(1);
    cfg.epochs = 100;
    cfg.checkpoint_stride = 40;
    TrainResult r = train(train_set, Arch::linear(2), cfg);
    REQUIRE(r.checkpoints.size() == 3);  // epochs 40, 80, 100
    CHECK(r.checkpoints.back().values == r.final_params.values);
  }
  SUBCASE("final epoch on the grid is not duplicated") {
    TrainConfig cfg = quick_config(1);
    cfg.epochs = 80;
    cfg.checkpoint_stride = 40;
    TrainResult r = train(train_set, Arch::linear(2), cfg);
    REQUIRE(r.checkpoints.size() == 2);  // epochs 40, 80
    CHECK(r.checkpoints.back().values == r.final_params.values);
  }
}

TEST_CASE("training reduces the loss and separates the blobs") {
  auto [train_set, test_set] = make_blobs(150, 100, 6.0, 1);
  TrainConfig cfg = quick_config(1);

  TrainResult r = train(train_set, Arch::linear(2), cfg);
  const double before = mean_loss(init_params(Arch::linear(2), cfg.seed), train_set);
  const double after = mean_loss(r.final_params, train_set);
  CHECK(after < before);
  CHECK(accuracy(r.final_params, test_set) >= 0.95);
}

TEST_CASE("unit sample weights reproduce the unweighted run exactly") {
  auto [train_set, unused] = make_blobs(48, 4, 6.0, 6);
  (void)unused;
  TrainConfig cfg = quick_config(7);

  Eigen::VectorXd ones = Eigen::VectorXd::Ones(train_set.n());
  TrainResult weighted = train(train_set, Arch::linear(2), cfg, &ones);
  TrainResult plain = train(train_set, Arch::linear(2), cfg);
  CHECK(weighted.final_params.values == plain.final_params.values);
}

TEST_CASE("weighted mean loss follows the hand formula") {
  auto [ds, unused] = make_blobs(2, 2, 6.0, 8);
  (void)unused;
  ParamVector theta = init_params(Arch::linear(2), 1);

  Eigen::VectorXd w(2);
  w << 2.0, 0.0;
  Eigen::VectorXd x0 = ds.features.row(0), x1 = ds.features.row(1);
  const double expected = 2.0 * loss(theta, x0, ds.labels(0)) / 2.0;
  CHECK(mean_loss(theta, ds, &w) == doctest::Approx(expected).epsilon(1e-12));
  (void)x1;
}

TEST_CASE("weight decay shrinks the parameter norm") {
  auto [train_set, unused] = make_blobs(100, 4, 6.0, 9);
  (void)unused;
  TrainConfig free = quick_config(2);
  TrainConfig damped = quick_config(2);
  damped.weight_decay = 5.0;

  const double n_free = train(train_set, Arch::linear(2), free).final_params.values.norm();
  const double n_damped =
      train(train_set, Arch::linear(2), damped).final_params.values.norm();
  CHECK(n_damped < 0.5 * n_free);
}

TEST_CASE("invalid training inputs are rejected") {
  auto [ds, unused] = make_blobs(10, 4, 6.0, 1);
  (void)unused;
  const Arch arch = Arch::linear(2);
  TrainConfig good = quick_config(1);

  auto expect_throw = [&](auto mutate) {
    TrainConfig cfg = good;
    mutate(cfg);
    CHECK_THROWS_AS(train(ds, arch, cfg), std::invalid_argument);
  };
  expect_throw([](TrainConfig& c) { c.learning_rate = 0.0; });
  expect_throw([](TrainConfig& c) { c.epochs = -1; });
  expect_throw([](TrainConfig& c) { c.batch_size = 0; });
  expect_throw([](TrainConfig& c) { c.weight_decay = -0.1; });
  expect_throw([](TrainConfig& c) { c.checkpoint_stride = 0; });

  CHECK_THROWS_AS(train(ds, Arch::linear(3), good), std::invalid_argument);

  Eigen::VectorXd short_w = Eigen::VectorXd::Ones(ds.n() - 1);
  CHECK_THROWS_AS(train(ds, arch, good, &short_w), std::invalid_argument);
  Eigen::VectorXd neg_w = Eigen::VectorXd::Ones(ds.n());
  neg_w(0) = -1.0;
  CHECK_THROWS_AS(train(ds, arch, good, &neg_w), std::invalid_argument);
}

TEST_CASE("an mlp beats a linear model on half moons") {
  auto [train_set, test_set] = make_half_moons(200, 100, 0.05, 1);

  TrainConfig lin_cfg = quick_config(1);
  lin_cfg.epochs = 300;
  lin_cfg.learning_rate = 0.3;
  TrainConfig mlp_cfg = quick_config(1);
  mlp_cfg.epochs = 300;
  mlp_cfg.learning_rate = 0.1;

  const double lin_acc =
      accuracy(train(train_set, Arch::linear(2), lin_cfg).final_params, test_set);
  const double mlp_acc =
      accuracy(train(train_set, Arch::mlp(2, {16, 16}), mlp_cfg).final_params, test_set);
  CHECK(mlp_acc >= lin_acc + 0.05);
  CHECK(mlp_acc >= 0.9);
}

TEST_CASE("ensemble parameter sets follow their strategy contracts") {
  auto [train_set, unused] = make_blobs(64, 4, 6.0, 3);
  (void)unused;
  TrainConfig cfg = quick_config(11);
  cfg.epochs = 100;
  cfg.checkpoint_stride = 20;
  TrainResult tr = train(train_set, Arch::linear(2), cfg);
  REQUIRE(tr.checkpoints.size() == 5);

  SUBCASE("dropout with zero bounds is a strict no-op") {
    EnsembleSpec spec;
    spec.strategy = EnsembleStrategy::kDropout;
    spec.size = 5;
    spec.dropout_lo = 0.0;
    spec.dropout_hi = 0.0;
    spec.seed = 4;
    auto members = generate_param_sets(tr.final_params, tr.checkpoints, train_set, spec, cfg);
    REQUIRE(members.size() == 5);
    for (const ParamVector& m : members) CHECK(m.values == tr.final_params.values);
  }
  SUBCASE("dropout with a positive rate zeroes some entries deterministically") {
    EnsembleSpec spec;
    spec.strategy = EnsembleStrategy::kDropout;
    spec.size = 8;
    spec.dropout_lo = 0.5;
    spec.dropout_hi = 0.5;
    spec.seed = 4;
    auto a = generate_param_sets(tr.final_params, tr.checkpoints, train_set, spec, cfg);
    auto b = generate_param_sets(tr.final_params, tr.checkpoints, train_set, spec, cfg);
    REQUIRE(a.size() == 8);
    int zeroed = 0;
    for (std::size_t t = 0; t < a.size(); ++t) {
      CHECK(a[t].values == b[t].values);
      for (long k = 0; k < a[t].values.size(); ++k) {
        const double v = a[t].values(k);
        CHECK((v == 0.0 || v == tr.final_params.values(k)));
        zeroed += v == 0.0 && tr.final_params.values(k) != 0.0;
      }
    }
    CHECK(zeroed > 0);
  }
  SUBCASE("dropout bounds are validated") {
    EnsembleSpec spec;
    spec.strategy = EnsembleStrategy::kDropout;
    spec.dropout_lo = 0.4;
    spec.dropout_hi = 0.2;
    CHECK_THROWS_AS(generate_param_sets(tr.final_params, tr.checkpoints, train_set, spec, cfg),
                    std::invalid_argument);
  }
  SUBCASE("checkpoint strategy hands back the most recent snapshots") {
    EnsembleSpec spec;
    spec.strategy = EnsembleStrategy::kCheckpoint;
    spec.size = 3;
    auto members = generate_param_sets(tr.final_params, tr.checkpoints, train_set, spec, cfg);
    REQUIRE(members.size() == 3);
    for (int t = 0; t < 3; ++t)
      CHECK(members[static_cast<std::size_t>(t)].values ==
            tr.checkpoints[static_cast<std::size_t>(t) + 2].values);

    spec.size = 6;  // more than stored
    CHECK_THROWS_AS(generate_param_sets(tr.final_params, tr.checkpoints, train_set, spec, cfg),
                    std::invalid_argument);
  }
  SUBCASE("continued-SGD members are distinct, deterministic snapshots") {
    EnsembleSpec spec;
    spec.strategy = EnsembleStrategy::kExtraSgd;
    spec.size = 3;
    spec.extra_sgd_steps = 24;
    spec.seed = 2;
    auto a = generate_param_sets(tr.final_params, tr.checkpoints, train_set, spec, cfg);
    auto b = generate_param_sets(tr.final_params, tr.checkpoints, train_set, spec, cfg);
    REQUIRE(a.size() == 3);
    std::set<std::string> digests;
    for (std::size_t t = 0; t < a.size(); ++t) {
      CHECK(a[t].values == b[t].values);
      CHECK(a[t].values != tr.final_params.values);
      digests.insert(fingerprint(a[t]));
    }
    CHECK(digests.size() == 3);

    spec.extra_sgd_steps = 2;  // cannot spread 3 snapshots over 2 steps
    CHECK_THROWS_AS(generate_param_sets(tr.final_params, tr.checkpoints, train_set, spec, cfg),
                    std::invalid_argument);
  }
  SUBCASE("non-positive ensemble size is rejected") {
    EnsembleSpec spec;
    spec.size = 0;
    CHECK_THROWS_AS(generate_param_sets(tr.final_params, tr.checkpoints, train_set, spec, cfg),
                    std::invalid_argument);
  }
}
