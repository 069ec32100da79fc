#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace lifegym {

/// Strategy overrides. Negative values select the standard defaults.
struct CmaOptions {
  int lambda = 0;  // 0 = 4 + floor(3 ln n)
  double c_sigma = -1;
  double d_sigma = -1;
  double c_c = -1;
  double c_1 = -1;
  double c_mu = -1;
  std::uint64_t seed = 0;
};

/// (mu/mu_w, lambda)-CMA-ES with rank-one and rank-mu covariance updates
/// and cumulative step-size adaptation. Maximises fitness.
class CmaEs {
 public:
  using Vector = Eigen::VectorXd;
  using Matrix = Eigen::MatrixXd;

  /// Throws InvalidConfig on empty mean, sigma <= 0 or lambda < 2.
  CmaEs(const std::vector<double>& mean, double sigma, CmaOptions options = {});

  /// lambda candidates mean + sigma * B D z, z ~ N(0, I), drawn from the internal generator.
  std::vector<std::vector<double>> ask();
  std::vector<std::vector<double>> ask(std::mt19937_64& rng);

  /// Ranks candidates by descending fitness (ties by index) and updates the
  /// distribution. Throws NonFiniteFitness, LengthMismatch, DecompositionFailure.
  void tell(const std::vector<std::vector<double>>& candidates, const std::vector<double>& fitness);

  int dimension() const { return n_; }
  int lambda() const { return lambda_; }
  int mu() const { return mu_; }
  long generation() const { return generation_; }
  double sigma() const { return sigma_; }
  double mu_eff() const { return mueff_; }
  const std::vector<double>& weights() const { return weights_; }
  std::vector<double> mean() const;
  const Matrix& covariance() const { return C_; }
  const Vector& path_sigma() const { return ps_; }
  const Vector& path_c() const { return pc_; }
  double c_sigma() const { return cs_; }
  double d_sigma() const { return damps_; }
  double c_c() const { return cc_; }
  double c_1() const { return c1_; }
  double c_mu() const { return cmu_; }

  /// `<base>.bin` (little-endian float64 arrays) and `<base>.manifest`
  /// (scalars, constants and generator state). Resumes bit-exactly.
  void save(const std::filesystem::path& base) const;
  static CmaEs load(const std::filesystem::path& base);

  bool operator==(const CmaEs& other) const;

 private:
  CmaEs() = default;
  void decompose();

  int n_ = 0;
  int lambda_ = 0;
  int mu_ = 0;
  long generation_ = 0;
  double sigma_ = 1;
  std::vector<double> weights_;
  double mueff_ = 0;
  double cs_ = 0, damps_ = 0, cc_ = 0, c1_ = 0, cmu_ = 0, chi_n_ = 0;
  Vector m_, ps_, pc_, D_;
  Matrix C_, B_;
  std::mt19937_64 rng_;
};

}  // namespace lifegym
