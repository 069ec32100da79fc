#include "lifegym/cmaes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "lifegym/errors.hpp"
#include "lifegym/tensor_io.hpp"

namespace lifegym {

CmaEs::CmaEs(const std::vector<double>& mean, double sigma, CmaOptions options)
    : n_(static_cast<int>(mean.size())), sigma_(sigma), rng_(options.seed) {
  if (n_ == 0) throw InvalidConfig("cma-es: empty mean");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidConfig("cma-es: sigma must be positive");
  const double n = n_;
  lambda_ = options.lambda > 0 ? options.lambda : 4 + static_cast<int>(std::floor(3.0 * std::log(n)));
  if (lambda_ < 2) throw InvalidConfig("cma-es: lambda must be at least 2");
  mu_ = lambda_ / 2;

  weights_.resize(static_cast<std::size_t>(mu_));
  for (int i = 0; i < mu_; ++i) weights_[static_cast<std::size_t>(i)] = std::log((lambda_ + 1) / 2.0) - std::log(i + 1.0);
  const double wsum = std::accumulate(weights_.begin(), weights_.end(), 0.0);
  double w2 = 0.0;
  for (auto& w : weights_) {
    w /= wsum;
    w2 += w * w;
  }
  mueff_ = 1.0 / w2;

  cc_ = options.c_c >= 0 ? options.c_c : (4.0 + mueff_ / n) / (n + 4.0 + 2.0 * mueff_ / n);
  cs_ = options.c_sigma >= 0 ? options.c_sigma : (mueff_ + 2.0) / (n + mueff_ + 5.0);
  c1_ = options.c_1 >= 0 ? options.c_1 : 2.0 / ((n + 1.3) * (n + 1.3) + mueff_);
  cmu_ = options.c_mu >= 0 ? options.c_mu
                           : std::min(1.0 - c1_, 2.0 * (mueff_ - 2.0 + 1.0 / mueff_) / ((n + 2.0) * (n + 2.0) + mueff_));
  damps_ = options.d_sigma >= 0 ? options.d_sigma
                                : 1.0 + 2.0 * std::max(0.0, std::sqrt((mueff_ - 1.0) / (n + 1.0)) - 1.0) + cs_;
  chi_n_ = std::sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));

  m_ = Eigen::Map<const Vector>(mean.data(), n_);
  ps_ = Vector::Zero(n_);
  pc_ = Vector::Zero(n_);
  C_ = Matrix::Identity(n_, n_);
  B_ = Matrix::Identity(n_, n_);
  D_ = Vector::Ones(n_);
}

std::vector<double> CmaEs::mean() const { return {m_.data(), m_.data() + n_}; }

std::vector<std::vector<double>> CmaEs::ask() { return ask(rng_); }

std::vector<std::vector<double>> CmaEs::ask(std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::vector<std::vector<double>> out(static_cast<std::size_t>(lambda_));
  Vector z(n_);
  for (auto& x : out) {
    for (int i = 0; i < n_; ++i) z[i] = normal(rng);
    const Vector y = B_ * D_.cwiseProduct(z);
    x.resize(static_cast<std::size_t>(n_));
    for (int i = 0; i < n_; ++i) x[static_cast<std::size_t>(i)] = m_[i] + sigma_ * y[i];
  }
  return out;
}

void CmaEs::tell(const std::vector<std::vector<double>>& candidates, const std::vector<double>& fitness) {
  if (candidates.size() != static_cast<std::size_t>(lambda_) || fitness.size() != candidates.size()) {
    throw LengthMismatch("cma-es: expected " + std::to_string(lambda_) + " candidates and fitnesses");
  }
  for (std::size_t i = 0; i < fitness.size(); ++i) {
    if (!std::isfinite(fitness[i])) throw NonFiniteFitness("cma-es: fitness of candidate " + std::to_string(i) + " is not finite");
    if (candidates[i].size() != static_cast<std::size_t>(n_)) throw LengthMismatch("cma-es: candidate has wrong dimension");
  }

  std::vector<int> order(static_cast<std::size_t>(lambda_));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return fitness[a] > fitness[b]; });

  const double n = n_;
  Matrix Y(n_, mu_);
  for (int k = 0; k < mu_; ++k) {
    const auto& x = candidates[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])];
    for (int i = 0; i < n_; ++i) Y(i, k) = (x[static_cast<std::size_t>(i)] - m_[i]) / sigma_;
  }
  const Vector w = Eigen::Map<const Vector>(weights_.data(), mu_);
  const Vector yw = Y * w;
  m_ += sigma_ * yw;

  // C^{-1/2} yw = B D^{-1} B^T yw
  const Vector inv_sqrt_yw = B_ * (B_.transpose() * yw).cwiseQuotient(D_);
  ps_ = (1.0 - cs_) * ps_ + std::sqrt(cs_ * (2.0 - cs_) * mueff_) * inv_sqrt_yw;
  const double ps_norm = ps_.norm();
  bool hsig = true;
  if (cs_ > 0.0) {
    const double decay = std::sqrt(1.0 - std::pow(1.0 - cs_, 2.0 * (generation_ + 1)));
    hsig = ps_norm / decay < (1.4 + 2.0 / (n + 1.0)) * chi_n_;
  }
  pc_ = (1.0 - cc_) * pc_;
  if (hsig) pc_ += std::sqrt(cc_ * (2.0 - cc_) * mueff_) * yw;

  const double keep = 1.0 - c1_ - cmu_ + (hsig ? 0.0 : c1_ * cc_ * (2.0 - cc_));
  Matrix rank_mu = Y * w.asDiagonal() * Y.transpose();
  C_ = keep * C_ + c1_ * (pc_ * pc_.transpose()) + cmu_ * rank_mu;
  C_ = 0.5 * (C_ + C_.transpose());

  sigma_ *= std::exp((cs_ / damps_) * (ps_norm / chi_n_ - 1.0));
  if (!(sigma_ > 0.0) || !std::isfinite(sigma_)) throw DecompositionFailure("cma-es: step size degenerated");
  ++generation_;
  decompose();
}

void CmaEs::decompose() {
  if (!C_.allFinite()) throw DecompositionFailure("cma-es: covariance is not finite");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(C_);
  if (eig.info() != Eigen::Success) throw DecompositionFailure("cma-es: eigendecomposition failed");
  Vector values = eig.eigenvalues();
  const double top = values.maxCoeff();
  if (!(top > 0.0) || !std::isfinite(top)) throw DecompositionFailure("cma-es: covariance has no positive eigenvalue");
  const double floor = 1e-20 * top;
  bool repaired = false;
  for (int i = 0; i < n_; ++i) {
    if (values[i] < floor) {
      values[i] = floor;
      repaired = true;
    }
  }
  B_ = eig.eigenvectors();
  D_ = values.cwiseSqrt();
  if (repaired) {
    C_ = B_ * values.asDiagonal() * B_.transpose();
    C_ = 0.5 * (C_ + C_.transpose());
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

void CmaEs::save(const std::filesystem::path& base) const {
  io::Manifest m;
  m.add("format", std::string("lifegym-cmaes"));
  m.add("version", 1);
  m.add("n", n_);
  m.add("lambda", lambda_);
  m.add("mu", mu_);
  m.add("generation", static_cast<long long>(generation_));
  m.add("sigma", sigma_);
  m.add("mu_eff", mueff_);
  m.add("c_sigma", cs_);
  m.add("d_sigma", damps_);
  m.add("c_c", cc_);
  m.add("c_1", c1_);
  m.add("c_mu", cmu_);
  m.add("chi_n", chi_n_);
  std::ostringstream rng;
  rng << rng_;
  m.add("rng", rng.str());
  m.add("layout", std::string("weights mean p_sigma p_c D C B"));
  m.save(base.string() + ".manifest");

  std::vector<double> flat(weights_);
  auto append = [&](const double* p, std::size_t k) { flat.insert(flat.end(), p, p + k); };
  const auto nn = static_cast<std::size_t>(n_);
  append(m_.data(), nn);
  append(ps_.data(), nn);
  append(pc_.data(), nn);
  append(D_.data(), nn);
  append(C_.data(), nn * nn);
  append(B_.data(), nn * nn);
  io::write_f64_le(base.string() + ".bin", flat);
}

CmaEs CmaEs::load(const std::filesystem::path& base) {
  const auto m = io::Manifest::load(base.string() + ".manifest");
  if (m.get("format") != "lifegym-cmaes") throw IoError("not a CMA-ES checkpoint");
  if (m.get_int("version") != 1) throw IoError("unsupported CMA-ES checkpoint version");
  CmaEs s;
  s.n_ = static_cast<int>(m.get_int("n"));
  s.lambda_ = static_cast<int>(m.get_int("lambda"));
  s.mu_ = static_cast<int>(m.get_int("mu"));
  s.generation_ = static_cast<long>(m.get_int("generation"));
  s.sigma_ = m.get_double("sigma");
  s.mueff_ = m.get_double("mu_eff");
  s.cs_ = m.get_double("c_sigma");
  s.damps_ = m.get_double("d_sigma");
  s.cc_ = m.get_double("c_c");
  s.c1_ = m.get_double("c_1");
  s.cmu_ = m.get_double("c_mu");
  s.chi_n_ = m.get_double("chi_n");
  std::istringstream rng(m.get("rng"));
  rng >> s.rng_;
  if (!rng) throw IoError("bad generator state in CMA-ES checkpoint");

  const auto flat = io::read_f64_le(base.string() + ".bin");
  const auto nn = static_cast<std::size_t>(s.n_);
  if (flat.size() != static_cast<std::size_t>(s.mu_) + 4 * nn + 2 * nn * nn) throw IoError("CMA-ES checkpoint size mismatch");
  const double* p = flat.data();
  s.weights_.assign(p, p + s.mu_);
  p += s.mu_;
  auto take_vec = [&](Vector& v) {
    v = Eigen::Map<const Vector>(p, s.n_);
    p += nn;
  };
  auto take_mat = [&](Matrix& a) {
    a = Eigen::Map<const Matrix>(p, s.n_, s.n_);
    p += nn * nn;
  };
  take_vec(s.m_);
  take_vec(s.ps_);
  take_vec(s.pc_);
  take_vec(s.D_);
  take_mat(s.C_);
  take_mat(s.B_);
  return s;
}

bool CmaEs::operator==(const CmaEs& o) const {
  return n_ == o.n_ && lambda_ == o.lambda_ && mu_ == o.mu_ && generation_ == o.generation_ && sigma_ == o.sigma_ &&
         weights_ == o.weights_ && mueff_ == o.mueff_ && cs_ == o.cs_ && damps_ == o.damps_ && cc_ == o.cc_ &&
         c1_ == o.c1_ && cmu_ == o.cmu_ && chi_n_ == o.chi_n_ && m_ == o.m_ && ps_ == o.ps_ && pc_ == o.pc_ &&
         D_ == o.D_ && C_ == o.C_ && B_ == o.B_ && rng_ == o.rng_;
}

}  // namespace lifegym
