#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "lifegym/cmaes.hpp"
#include "lifegym/errors.hpp"

using namespace lifegym;

namespace {

double sphere(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return -s;
}

std::vector<double> evaluate(const std::vector<std::vector<double>>& xs) {
  std::vector<double> f;
  for (const auto& x : xs) f.push_back(sphere(x));
  return f;
}

}  // namespace

TEST_CASE("default strategy constants") {
  CmaEs es(std::vector<double>(10, 0.0), 1.0);
  CHECK(es.lambda() == 4 + static_cast<int>(std::floor(3 * std::log(10.0))));
  CHECK(es.mu() == es.lambda() / 2);
  double sum = 0.0;
  for (std::size_t i = 0; i < es.weights().size(); ++i) {
    CHECK(es.weights()[i] > 0.0);
    if (i > 0) CHECK(es.weights()[i] < es.weights()[i - 1]);
    sum += es.weights()[i];
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(es.c_1() == doctest::Approx(2.0 / (11.3 * 11.3 + es.mu_eff())));
  CHECK(es.c_1() + es.c_mu() <= 1.0);
}

TEST_CASE("sphere n=10 from (5,...,5) converges") {
  CmaEs es(std::vector<double>(10, 5.0), 1.0, {.seed = 1});
  double best = -INFINITY;
  long gen = 0;
  for (; gen < 2000 && best <= -1e-10; ++gen) {
    const auto xs = es.ask();
    const auto f = evaluate(xs);
    best = std::max(best, *std::max_element(f.begin(), f.end()));
    es.tell(xs, f);
  }
  MESSAGE("generations to reach 1e-10: " << gen);
  CHECK(best > -1e-10);
}

TEST_CASE("tell depends on fitness ranks only") {
  CmaEs a(std::vector<double>(6, 1.0), 0.5, {.seed = 3});
  CmaEs b = a;
  for (int g = 0; g < 30; ++g) {
    const auto xs = a.ask();
    REQUIRE(xs == b.ask());
    const auto f = evaluate(xs);
    std::vector<double> h;
    for (double v : f) h.push_back(std::exp(v / 7.0) * 1000.0 - 3.0);  // strictly increasing
    a.tell(xs, f);
    b.tell(xs, h);
    REQUIRE(a == b);
  }
}

TEST_CASE("equal fitnesses recombine in index order") {
  CmaEs es(std::vector<double>(3, 0.0), 1.0, {.seed = 4});
  const auto xs = es.ask();
  std::vector<double> expect(3, 0.0);
  for (int k = 0; k < es.mu(); ++k)
    for (int i = 0; i < 3; ++i) expect[i] += es.weights()[k] * xs[k][i];
  es.tell(xs, std::vector<double>(xs.size(), 1.0));
  const auto m = es.mean();
  for (int i = 0; i < 3; ++i) CHECK(m[i] == doctest::Approx(expect[i]).epsilon(1e-12));
}

TEST_CASE("tiny sigma collapses candidates onto the mean") {
  CmaEs es({1.0, -2.0, 3.0}, 1e-300, {.seed = 5});
  for (const auto& x : es.ask()) {
    CHECK(x[0] == 1.0);
    CHECK(x[1] == -2.0);
    CHECK(x[2] == 3.0);
  }
}

TEST_CASE("identity covariance samples are isotropic") {
  const double sigma = 0.7;
  CmaEs es(std::vector<double>(4, 2.0), sigma, {.seed = 6});
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(4, 4);
  long count = 0;
  while (count < 100000) {
    for (const auto& x : es.ask()) {
      Eigen::VectorXd d(4);
      for (int i = 0; i < 4; ++i) d[i] = x[i] - 2.0;
      acc += d * d.transpose();
      ++count;
    }
  }
  acc /= static_cast<double>(count);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      const double expect = i == j ? sigma * sigma : 0.0;
      CHECK(std::abs(acc(i, j) - expect) < 0.05 * sigma * sigma);
    }
}

TEST_CASE("fixed seed reproduces candidates") {
  CmaEs a(std::vector<double>(5, 0.0), 1.0, {.seed = 9});
  CmaEs b(std::vector<double>(5, 0.0), 1.0, {.seed = 9});
  CHECK(a.ask() == b.ask());
  std::mt19937_64 r1(2), r2(2);
  CHECK(a.ask(r1) == b.ask(r2));
}

TEST_CASE("covariance stays symmetric and positive") {
  CmaEs es(std::vector<double>(8, 3.0), 2.0, {.seed = 10});
  for (int g = 0; g < 200; ++g) {
    const auto xs = es.ask();
    // ill-conditioned ellipsoid
    std::vector<double> f;
    for (const auto& x : xs) {
      double s = 0.0;
      for (int i = 0; i < 8; ++i) s += std::pow(1e3, i / 7.0) * x[i] * x[i];
      f.push_back(-s);
    }
    es.tell(xs, f);
    const auto& C = es.covariance();
    CHECK((C - C.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(es.sigma() > 0.0);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(es.covariance());
  CHECK(eig.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("mean recombination alone approaches the optimum") {
  int successes = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CmaEs es(std::vector<double>(10, 5.0), 1.0, {.c_sigma = 0, .c_1 = 0, .c_mu = 0, .seed = seed});
    const double start = std::sqrt(-sphere(es.mean()));
    for (int g = 0; g < 20; ++g) {
      const auto xs = es.ask();
      es.tell(xs, evaluate(xs));
    }
    CHECK(es.sigma() == 1.0);
    CHECK(es.covariance() == Eigen::MatrixXd::Identity(10, 10));
    if (std::sqrt(-sphere(es.mean())) < start) ++successes;
  }
  CHECK(successes >= 18);
}

TEST_CASE("checkpoints resume bit-exactly") {
  const auto dir = std::filesystem::temp_directory_path() / "lifegym_test_cmaes";
  std::filesystem::remove_all(dir);
  CmaEs es(std::vector<double>(7, 1.5), 0.8, {.seed = 12});
  for (int g = 0; g < 15; ++g) {
    const auto xs = es.ask();
    es.tell(xs, evaluate(xs));
  }
  es.save(dir / "ckpt");
  auto resumed = CmaEs::load(dir / "ckpt");
  CHECK(resumed == es);
  for (int g = 0; g < 10; ++g) {
    const auto xs = es.ask();
    REQUIRE(resumed.ask() == xs);
    const auto f = evaluate(xs);
    es.tell(xs, f);
    resumed.tell(xs, f);
  }
  CHECK(resumed == es);
  std::filesystem::remove_all(dir);
}

TEST_CASE("error paths") {
  CHECK_THROWS_AS(CmaEs({}, 1.0), InvalidConfig);
  CHECK_THROWS_AS(CmaEs({1.0}, 0.0), InvalidConfig);
  CmaEs es(std::vector<double>(3, 0.0), 1.0);
  auto xs = es.ask();
  auto f = evaluate(xs);
  f[1] = NAN;
  const auto before = es;
  CHECK_THROWS_AS(es.tell(xs, f), NonFiniteFitness);
  CHECK(es == before);
  f.pop_back();
  CHECK_THROWS_AS(es.tell(xs, f), LengthMismatch);
}
