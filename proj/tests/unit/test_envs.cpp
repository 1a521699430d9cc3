#include <cmath>
#include <set>

#include "doctest.h"

#include "aepo/envs.hpp"
#include "aepo/error.hpp"
#include "helpers.hpp"

using namespace aepo;

TEST_SUITE("envs") {
  TEST_CASE("copy task verification") {
    const Task task(test::copy_spec(4, 3, 1));
    const Query q{0, {3, 1, 2}};
    CHECK(task.verify(q, std::vector<Token>{3, 1, 2}) == 1);
    CHECK(task.verify(q, std::vector<Token>{3, 1, 1}) == 0);
    CHECK(task.verify(q, std::vector<Token>{3, 1}) == 0);
    CHECK_THROWS_AS(task.verify(q, std::vector<Token>{3, 1, 9}), InvalidInput);
  }

  TEST_CASE("mod_sum verification") {
    TaskSpec s = test::copy_spec(6, 1, 4);
    s.kind = TaskKind::kModSum;
    s.modulus = 5;
    const Task task(s);
    const Query q{0, {3, 4}};
    CHECK(task.verify(q, std::vector<Token>{2}) == 1);
    for (Token t : {0, 1, 3, 4, 5}) CHECK(task.verify(q, std::vector<Token>{t}) == 0);

    // Two-digit encodings pad with zeros.
    s.response_len = 2;
    const Task two(s);
    CHECK(two.verify(q, std::vector<Token>{0, 2}) == 1);
    CHECK(two.verify(q, std::vector<Token>{2, 0}) == 0);
  }

  TEST_CASE("each copy and mod_sum query has exactly one accepted response") {
    const Task copy(test::copy_spec(3, 3, 5, 9));
    TaskSpec ms = test::copy_spec(5, 2, 5, 9);
    ms.kind = TaskKind::kModSum;
    ms.modulus = 4;
    const Task mod(ms);
    for (const Task* t : {&copy, &mod}) {
      for (const Query& q : t->queries()) CHECK(t->accepted_set(q).size() == 1);
    }
    for (const Query& q : copy.queries()) CHECK(copy.accepted_set(q).front() == q.payload);
  }

  TEST_CASE("multi_solution accepts exactly k responses per query") {
    for (int k : {1, 4, 13, 27}) {
      const Task task(test::multi_spec(3, 3, k, 6, 17));
      for (const Query& q : task.queries()) CHECK(task.accepted_set(q).size() == static_cast<std::size_t>(k));
    }
  }

  TEST_CASE("multi_solution sets depend on the seed and the query") {
    const Task a(test::multi_spec(4, 3, 6, 4, 1));
    const Task b(test::multi_spec(4, 3, 6, 4, 1));
    const Task c(test::multi_spec(4, 3, 6, 4, 2));
    CHECK(a.accepted_set(a.query(0)) == b.accepted_set(b.query(0)));
    CHECK(a.accepted_set(a.query(0)) != c.accepted_set(c.query(0)));
    CHECK(a.accepted_set(a.query(0)) != a.accepted_set(a.query(1)));
  }

  TEST_CASE("multi_solution with eos rejects responses containing it") {
    TaskSpec s = test::multi_spec(3, 2, 9, 2, 3);
    s.vocab.eos = Token{2};
    const Task task(s);
    const auto acc = task.accepted_set(task.query(0));
    CHECK(acc.size() == 4);
    for (const auto& r : acc) CHECK(std::find(r.begin(), r.end(), Token{2}) == r.end());
  }

  TEST_CASE("verify is pure") {
    const Task task(test::multi_spec(4, 3, 10, 3, 5));
    const std::vector<Token> r{1, 2, 3};
    const int first = task.verify(2u, r);
    for (int i = 0; i < 10; ++i) CHECK(task.verify(2u, r) == first);
  }

  TEST_CASE("enumeration order, size and guard") {
    const Task two(test::copy_spec(2, 2, 1));
    const auto all = two.enumerate_responses(two.query(0));
    CHECK(all == std::vector<std::vector<Token>>{{0, 0}, {0, 1}, {1, 0}, {1, 1}});
    const Task three(test::copy_spec(3, 3, 1));
    CHECK(three.enumerate_responses(three.query(0)).size() == 27);
    const Task big(test::copy_spec(16, 6, 1));
    CHECK_FALSE(big.enumerable());
    CHECK_THROWS_AS(big.enumerate_responses(big.query(0)), CapacityError);
  }

  TEST_CASE("sample_query on pools of size one and eight") {
    const Task one(test::copy_spec(4, 3, 1));
    RngStream r1(1, StreamPurpose::kTest);
    for (int i = 0; i < 20; ++i) CHECK(one.sample_query(r1).id == 0);

    const Task eight(test::copy_spec(4, 3, 8));
    RngStream r8(2, StreamPurpose::kTest);
    std::vector<double> counts(8, 0.0);
    const int n = 10000;
    for (int i = 0; i < n; ++i) counts[eight.sample_query(r8).id] += 1.0;
    const double sigma = std::sqrt(n * (1.0 / 8.0) * (7.0 / 8.0));
    for (double c : counts) CHECK(std::abs(c - n / 8.0) < 3.0 * sigma);

    RngStream a(3, StreamPurpose::kTest, 5);
    RngStream b(3, StreamPurpose::kTest, 5);
    CHECK(eight.sample_query(a).id == eight.sample_query(b).id);
  }

  TEST_CASE("spec validation") {
    TaskSpec s = test::copy_spec(4, 3, 0);
    CHECK_THROWS_AS(Task{s}, InvalidInput);
    s = test::copy_spec(4, 3, 2);
    s.kind = TaskKind::kModSum;
    s.modulus = 4;
    CHECK_THROWS_AS(Task{s}, InvalidInput);
    CHECK_THROWS_AS(Task{test::multi_spec(2, 2, 5, 1)}, InvalidInput);
    CHECK_THROWS_AS(Task{test::multi_spec(2, 2, 0, 1)}, InvalidInput);
    CHECK_THROWS_AS(task_kind_from_string("nope"), InvalidInput);
    CHECK(task_kind_from_string(to_string(TaskKind::kMultiSolution)) == TaskKind::kMultiSolution);
  }

  TEST_CASE("payload tokens lie in the vocabulary") {
    const Task task(test::copy_spec(5, 4, 20, 8));
    for (const Query& q : task.queries()) {
      CHECK(q.payload.size() == 4);
      for (Token t : q.payload) CHECK(t < 5);
    }
  }
}
