#include <catch2/catch.hpp>

#include <cmath>
#include <random>

#include "beamtrack/properties.hpp"
#include "beamtrack/symmat.hpp"

using namespace beamtrack;
using Catch::Matchers::WithinAbs;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (const double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

}  // namespace

TEST_CASE("positive definiteness", "[symmat]") {
  for (int n = 1; n <= 5; ++n) CHECK(is_positive_definite(SymMat::identity(n)));
  CHECK_FALSE(is_positive_definite(SymMat::zero(3)));
  CHECK_FALSE(is_positive_definite(SymMat(mat({{2, 3}, {3, 2}}))));
  CHECK(is_positive_definite(SymMat(mat({{2, 1}, {1, 2}}))));
}

TEST_CASE("construction rejects asymmetric input and symmetrizes round-off", "[symmat]") {
  CHECK_THROWS_AS(SymMat(mat({{1, 2}, {0, 1}})), ValidationError);
  CHECK_THROWS_AS(SymMat(Matrix(2, 3)), ValidationError);
  const SymMat s(mat({{1, 0.5 + 1e-14}, {0.5, 1}}));
  CHECK(s(0, 1) == s(1, 0));
}

TEST_CASE("posterior map examples", "[symmat]") {
  const Matrix c = Matrix::Identity(2, 2);
  const SymMat half = s_map(SymMat::identity(2), c, SymMat::identity(2));
  CHECK((half.matrix() - 0.5 * Matrix::Identity(2, 2)).norm() < 1e-15);

  CHECK(s_map(SymMat::zero(2), c, SymMat::identity(2)).matrix().norm() == 0.0);

  const SymMat iso = s_map(SymMat::scalar(2, 2.0), c, SymMat::scalar(2, 2.0));
  CHECK((iso.matrix() - Matrix::Identity(2, 2)).norm() < 1e-15);
}

TEST_CASE("posterior map shrinks and stays positive definite", "[symmat]") {
  props::Sampler s(11);
  for (int k = 0; k < 200; ++k) {
    const int n = s.dim();
    const SymMat sigma = s.pd(n);
    const Matrix c = s.full_rank_c(n);
    const SymMat r = s.pd(2);
    const SymMat post = s_map(sigma, c, r);
    CHECK(is_positive_definite(post));
    CHECK(props::min_eigenvalue((sigma - post).matrix()) > -1e-12 * sigma.trace());
    // Information form of the same map.
    const Matrix info = (sigma.matrix().inverse() + c.transpose() * r.matrix().inverse() * c).inverse();
    CHECK((info - post.matrix()).norm() <= 1e-9 * post.matrix().norm());
  }
}

TEST_CASE("posterior map rejects mismatched shapes", "[symmat]") {
  CHECK_THROWS_AS(s_map(SymMat::identity(3), Matrix::Identity(2, 2), SymMat::identity(2)), ValidationError);
  CHECK_THROWS_AS(s_map(SymMat::identity(2), Matrix::Identity(2, 2), SymMat::identity(3)), ValidationError);
}

TEST_CASE("2x2 inverse square root", "[symmat]") {
  CHECK((inv_sqrt_2x2(Matrix2(Matrix2::Identity())) - Matrix2::Identity()).norm() < 1e-15);
  Matrix2 d;
  d << 4, 0, 0, 9;
  Matrix2 expect;
  expect << 0.5, 0, 0, 1.0 / 3.0;
  CHECK((inv_sqrt_2x2(d) - expect).norm() < 1e-15);

  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  for (int k = 0; k < 1000; ++k) {
    Matrix2 l;
    l << normal(rng), normal(rng), normal(rng), normal(rng);
    const Matrix2 m = l * l.transpose() + 1e-3 * Matrix2::Identity();
    const Matrix2 x = inv_sqrt_2x2(m);
    CHECK((x * x * m - Matrix2::Identity()).norm() <= 1e-10);
    CHECK((x - x.transpose()).norm() <= 1e-14 * x.norm());
  }
}

TEST_CASE("2x2 inverse square root rejects indefinite input", "[symmat]") {
  Matrix2 m;
  m << 2, 3, 3, 2;
  CHECK_THROWS_AS(inv_sqrt_2x2(m), DomainError);
  CHECK_THROWS_AS(inv_sqrt_2x2(Matrix2(Matrix2::Zero())), DomainError);
}

TEST_CASE("attenuation matrix and factor", "[symmat]") {
  const Matrix c = Matrix::Identity(2, 2);
  const Attenuation none = q_and_Q(SymMat::scalar(2, 3.0), c, 0.0);
  CHECK(none.q == 1.0);
  CHECK((none.Q - Matrix2::Identity()).norm() == 0.0);

  const Attenuation diag = q_and_Q(SymMat(mat({{1, 0}, {0, 3}})), c, 1.0);
  CHECK_THAT(diag.Q(0, 0), WithinAbs(1.0 / std::sqrt(3.0), 1e-15));
  CHECK_THAT(diag.Q(1, 1), WithinAbs(1.0 / std::sqrt(7.0), 1e-15));
  CHECK_THAT(diag.q, WithinAbs(1.0 / std::sqrt(21.0), 1e-15));

  const Attenuation unit = q_and_Q(SymMat::identity(2), c, 0.5);
  CHECK((unit.Q - Matrix2::Identity() / std::sqrt(2.0)).norm() < 1e-15);
  CHECK_THAT(unit.q, WithinAbs(0.5, 1e-15));
}

TEST_CASE("attenuation factor h", "[symmat]") {
  const Matrix c = Matrix::Identity(2, 2);
  CHECK(h(SymMat::zero(2), c, 2.0) == 1.0);
  CHECK_THAT(h(SymMat::identity(2), c, 0.5), WithinAbs(0.5, 1e-15));

  props::Sampler s(3);
  for (int k = 0; k < 100; ++k) {
    const int n = s.dim();
    const SymMat sigma = s.pd(n);
    const Matrix cc = s.full_rank_c(n);
    const double rho = s.rho();
    const double hv = h(sigma, cc, rho);
    const double q = q_and_Q(sigma, cc, rho).q;
    CHECK(std::abs(hv - q) <= 1e-12 * hv);
    CHECK(hv > 0.0);
    CHECK(hv <= 1.0);
  }
}

TEST_CASE("matrix maps are pure", "[symmat]") {
  props::Sampler s(4);
  const SymMat sigma = s.pd(3);
  const Matrix c = s.full_rank_c(3);
  const SymMat r = s.pd(2);
  CHECK(s_map(sigma, c, r) == s_map(sigma, c, r));
  CHECK(h(sigma, c, 0.7) == h(sigma, c, 0.7));
}
