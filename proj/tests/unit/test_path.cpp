#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "ssmcde/errors.hpp"
#include "ssmcde/path.hpp"
#include "ssmcde/signature.hpp"

using namespace ssmcde;
using testutil::from_rows;
using testutil::random_path;

namespace {
Path identity_path(std::size_t L) {
  Matrix v(static_cast<Eigen::Index>(L + 1), 1);
  for (std::size_t k = 0; k <= L; ++k) v(static_cast<Eigen::Index>(k), 0) = static_cast<double>(k) / static_cast<double>(L);
  return Path(Grid(L), v);
}
}  // namespace

TEST_CASE("grid") {
  Grid g(4);
  CHECK(g.num_points() == 5);
  CHECK(g.time(0) == 0.0);
  CHECK(g.time(4) == 1.0);
  for (std::size_t k = 1; k <= 4; ++k) CHECK(g.time(k) - g.time(k - 1) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(g.nearest_index(0.125) == 0);  // ties go left
  CHECK(g.nearest_index(0.3) == 1);
  CHECK_THROWS_AS(Grid(0), DomainError);
  CHECK_THROWS_AS(g.aligned_index(0.3), DomainError);
  CHECK_THROWS_AS(g.nearest_index(1.5), DomainError);
}

TEST_CASE("path construction rejects bad values") {
  CHECK_THROWS_AS(Path(Grid(1), Matrix::Ones(2, 1)), DomainError);  // not basepointed
  CHECK_THROWS_AS(Path(Grid(2), Matrix::Zero(2, 1)), DomainError);  // wrong row count
  Matrix v = Matrix::Zero(2, 1);
  v(1, 0) = std::nan("");
  CHECK_THROWS_AS(Path(Grid(1), v), DomainError);
  Matrix s(3, 1);
  s << 2, 3, 1;
  const Path p = Path::from_samples(s);
  CHECK(p.value(2)[0] == -1.0);
}

TEST_CASE("eval_at") {
  CHECK(eval_at(identity_path(10), 0.5)[0] == doctest::Approx(0.5));
  const Path p = random_path(3, 7, 1);
  CHECK(eval_at(p, 0.0).norm() == 0.0);
  const Path hat = from_rows(2, {{0}, {1}, {0}});
  CHECK(eval_at(hat, 0.75)[0] == doctest::Approx(0.5));
  CHECK_THROWS_AS(eval_at(hat, -0.1), DomainError);
  CHECK_THROWS_AS(eval_at(hat, 1.1), DomainError);
  // exact at grid points and affine inside each segment
  for (std::size_t k = 0; k <= 7; ++k) CHECK((eval_at(p, p.grid().time(k)) - p.value(k)).norm() == 0.0);
  for (std::size_t k = 0; k < 7; ++k) {
    const double t0 = p.grid().time(k), h = p.grid().step();
    const Vector s1 = eval_at(p, t0 + 0.5 * h) - eval_at(p, t0 + 0.25 * h);
    const Vector s2 = eval_at(p, t0 + 0.75 * h) - eval_at(p, t0 + 0.5 * h);
    CHECK((s1 - s2).norm() <= 1e-12);
  }
}

TEST_CASE("restrict") {
  const Path p = random_path(2, 8, 2);
  CHECK((restrict(p, 0.0, 1.0).values() - p.values()).norm() == 0.0);
  CHECK(restrict(p, 0.5, 0.5).values().norm() == 0.0);
  const Path r = restrict(identity_path(4), 0.25, 0.75);
  const double expected[] = {0.0, 0.0, 0.25, 0.5, 0.5};
  for (int k = 0; k < 5; ++k) CHECK(r.value(static_cast<std::size_t>(k))[0] == doctest::Approx(expected[k]));
  CHECK_THROWS_AS(restrict(p, 0.75, 0.25), DomainError);
  for (std::size_t a = 0; a <= 8; ++a)
    for (std::size_t b = a; b <= 8; ++b) {
      const double s = a / 8.0, t = b / 8.0;
      const Path q = restrict(p, s, t);
      CHECK(one_variation(q) <= one_variation(p) + 1e-12);
      const auto direct = signature(p, s, t, 3).coeffs();
      const auto via = signature(q, 3).coeffs();
      CHECK(testutil::rel_err(via, direct) <= 1e-12);
    }
}

TEST_CASE("time_augment") {
  const Path p = random_path(1, 5, 3);
  const Path a = time_augment(p, false);
  REQUIRE(a.channels() == 2);
  for (std::size_t k = 0; k <= 5; ++k) CHECK(a.value(k)[0] == p.grid().time(k));
  CHECK(a.values().col(1) == p.values().col(0));
  const Path b = time_augment(p, true);
  REQUIRE(b.channels() == 3);
  for (std::size_t k = 0; k <= 5; ++k) CHECK(b.value(k)[1] == doctest::Approx(p.grid().time(k) * p.grid().time(k)));
  CHECK(time_augment(a, false).channels() == 3);
}

TEST_CASE("one_variation") {
  CHECK(one_variation(identity_path(7)) == doctest::Approx(1.0));
  CHECK(one_variation(Path::zero(Grid(3), 2)) == 0.0);
  CHECK(one_variation(from_rows(2, {{0}, {1}, {0}})) == doctest::Approx(2.0));
  const Path p = random_path(3, 9, 4);
  CHECK(one_variation(reverse(p)) == doctest::Approx(one_variation(p)).epsilon(1e-12));
}

TEST_CASE("concat and reverse") {
  const Path z = Path::zero(Grid(3), 2);
  CHECK(concat(z, z).values().norm() == 0.0);
  CHECK(concat(z, z).num_steps() == 6);
  const Path x = from_rows(1, {{0, 0}, {1, 0}});
  const Path y = from_rows(1, {{0, 0}, {0, 1}});
  CHECK((concat(x, y).values() - testutil::l_shape().values()).norm() == 0.0);
  const Path p = random_path(3, 6, 5);
  CHECK((reverse(reverse(p)).values() - p.values()).norm() <= 1e-14);
  CHECK_THROWS_AS(concat(p, random_path(2, 6, 5)), DomainError);
  // Chen identity across a concatenation
  const Path q = random_path(3, 6, 6);
  const auto lhs = signature(concat(p, q), 4).coeffs();
  const auto rhs = chen_product(signature(p, 4), signature(q, 4)).coeffs();
  CHECK(testutil::rel_err(lhs, rhs) <= 1e-10);
}

TEST_CASE("serialization round trips") {
  const Path p = random_path(3, 5, 7);
  std::stringstream bin;
  write_path_binary(bin, p);
  CHECK(bin.str().size() == 16 + 6 * 3 * 8);
  CHECK(bin.str().substr(0, 8) == "SSMPATH1");
  const Path q = read_path_binary(bin);
  CHECK(q.values() == p.values());
  const Path r = path_from_json(to_json(p));
  CHECK(r.values() == p.values());
  const auto j = to_json(p);
  CHECK(j.at("grid_steps") == 5);
  CHECK(j.at("channels") == 3);
  std::stringstream bad("SSMPATHX0000000000000000");
  CHECK_THROWS(read_path_binary(bad));
}
