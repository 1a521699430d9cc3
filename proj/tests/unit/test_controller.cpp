#include <cmath>

#include "doctest.h"

#include "aepo/controller.hpp"
#include "aepo/error.hpp"
#include "helpers.hpp"

using namespace aepo;
using doctest::Approx;

TEST_SUITE("controller") {
  TEST_CASE("batch entropy examples") {
    const Task task(test::copy_spec(4, 3, 2));
    const LogitTable uniform(4, 3);
    std::vector<Rollout> rs;
    for (int i = 0; i < 6; ++i) rs.push_back(test::sampled(uniform, task, i % 2, 1.0, 10 + i));
    const EntropyEstimate est = batch_entropy(rs);
    CHECK(est.value == Approx(std::log(4.0)).epsilon(1e-15));
    CHECK(est.token_count == 18);

    LogitTable det(4, 3);
    test::make_deterministic(det, 0, {1, 2, 3});
    const Rollout r = test::sampled(det, task, 0, 1.0, 1);
    CHECK(batch_entropy(std::vector<Rollout>{r}).value < 1e-20);

    Rollout a, b;
    a.tokens = {0, 0};
    a.token_entropies = {0.1, 0.3};
    b.tokens = {0, 0, 0};
    b.token_entropies = {0.6, 0.6, 0.6};
    CHECK(batch_entropy(std::vector<Rollout>{a, b}).value == Approx(0.4));

    CHECK_THROWS_AS(batch_entropy(std::vector<Rollout>{}), ContractError);
  }

  TEST_CASE("select_temperature threshold rule") {
    ControllerConfig cfg;
    cfg.target_entropy = 0.5;
    CHECK(select_temperature({0.30, 10}, cfg).value() == 1.2);
    CHECK(select_temperature({0.70, 10}, cfg).value() == 0.8);
    CHECK(select_temperature({0.50, 10}, cfg).value() == 0.8);
  }

  TEST_CASE("select_temperature returns only the two configured values") {
    ControllerConfig cfg;
    cfg.target_entropy = 0.9;
    cfg.t_low = 0.7;
    cfg.t_high = 1.5;
    RngStream rng(1, StreamPurpose::kTest);
    for (int i = 0; i < 1000; ++i) {
      const double est = 1.4 * rng.uniform();
      const double t = select_temperature({est, 1}, cfg).value();
      CHECK((t == 0.7 || t == 1.5));
      CHECK((t == 1.5) == (est < 0.9));
    }
  }

  TEST_CASE("deadband keeps the previous choice near the target") {
    ControllerConfig cfg;
    cfg.target_entropy = 0.5;
    cfg.deadband = 0.05;
    CHECK(select_temperature({0.48, 1}, cfg, Temperature(0.8)).value() == 0.8);
    CHECK(select_temperature({0.52, 1}, cfg, Temperature(1.2)).value() == 1.2);
    CHECK(select_temperature({0.40, 1}, cfg, Temperature(0.8)).value() == 1.2);
    CHECK(select_temperature({0.48, 1}, cfg).value() == 1.2);
  }

  TEST_CASE("controller config validation") {
    ControllerConfig cfg;
    CHECK_NOTHROW(cfg.validate(4));
    cfg.target_entropy = std::log(4.0);
    CHECK_THROWS_AS(cfg.validate(4), InvalidInput);
    cfg = ControllerConfig{};
    cfg.t_low = 1.0;
    CHECK_THROWS_AS(cfg.validate(4), InvalidInput);
    cfg = ControllerConfig{};
    cfg.mix_count = 500;
    CHECK_THROWS_AS(cfg.validate(4), InvalidInput);
    cfg = ControllerConfig{};
    cfg.fixed_temperature = 0.0;
    CHECK_THROWS_AS(cfg.validate(4), InvalidInput);
  }

  TEST_CASE("positive collection with no reachable solution spends the budget") {
    const Task task(test::copy_spec(4, 3, 1));
    LogitTable p(4, 3);
    std::vector<Token> wrong = task.query(0).payload;
    wrong[0] = static_cast<Token>((wrong[0] + 1) % 4);
    test::make_deterministic(p, 0, wrong);
    const PositiveBatch b = collect_positive_samples(p, Temperature(1.2), task, 5, 50, 3, 1);
    CHECK(b.rollouts.empty());
    CHECK(b.draws == 50);
  }

  TEST_CASE("mix_count zero draws nothing") {
    const Task task(test::copy_spec(2, 2, 1));
    const PositiveBatch b = collect_positive_samples(LogitTable(2, 2), Temperature(1.2), task, 0, 400, 1, 1);
    CHECK(b.rollouts.empty());
    CHECK(b.draws == 0);
  }

  TEST_CASE("uniform copy policy finds its positives") {
    const Task task(test::copy_spec(2, 2, 1));
    int full = 0;
    for (std::uint64_t step = 1; step <= 200; ++step) {
      const PositiveBatch b = collect_positive_samples(LogitTable(2, 2), Temperature(1.2), task, 10, 400, 7, step);
      if (b.rollouts.size() == 10) ++full;
      for (const Rollout& r : b.rollouts) {
        CHECK(r.reward == 1);
        CHECK(r.sampling_temperature == 1.2);
      }
    }
    CHECK(full == 200);
  }

  TEST_CASE("collection is reproducible for a given step") {
    const Task task(test::multi_spec(3, 3, 6, 4, 2));
    const LogitTable p = test::random_policy(task, 1.0, 3);
    const PositiveBatch a = collect_positive_samples(p, Temperature(0.8), task, 4, 100, 9, 12);
    const PositiveBatch b = collect_positive_samples(p, Temperature(0.8), task, 4, 100, 9, 12);
    REQUIRE(a.rollouts.size() == b.rollouts.size());
    CHECK(a.draws == b.draws);
    for (std::size_t i = 0; i < a.rollouts.size(); ++i) CHECK(a.rollouts[i].tokens == b.rollouts[i].tokens);
  }

  TEST_CASE("regularizer groups carry advantages and the sampling temperature") {
    const Task task(test::multi_spec(3, 2, 3, 2, 1));
    const auto groups = collect_reg_groups(LogitTable(3, 2), Temperature(1.2), task, 3, 4, 5, 2);
    CHECK(groups.size() == 3);
    for (const auto& g : groups) {
      CHECK(g.rollouts.size() == 4);
      CHECK(g.advantages.size() == 4);
      for (const auto& r : g.rollouts) {
        CHECK(r.sampling_temperature == 1.2);
        CHECK(r.reward.has_value());
      }
    }
  }
}
