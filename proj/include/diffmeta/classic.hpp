#pragma once

// Gradient-free PSO, real-coded GA, DE and CMA-ES.
//
// PSO, GA and DE spend their first generation evaluating the initial
// population, so every generation costs exactly N evaluations.

#include "diffmeta/algorithm.hpp"
#include "diffmeta/problems.hpp"
#include "diffmeta/relax.hpp"

#include <array>
#include <vector>

namespace diffmeta {

// ---- operators --------------------------------------------------------------

/// Best of k distinct uniform draws; ties go to the contestant drawn first.
std::size_t tournament_select(const Vector& fitness, int k, Rng& rng);
/// Rank-proportional draw: the r-th best of N gets weight N - r.
std::size_t roulette_select(const Vector& fitness, Rng& rng);

/// alpha p + (1 - alpha) q
Vector blend_crossover(const Vector& p, const Vector& q, double alpha);
Vector blend_crossover(const Vector& p, const Vector& q, Rng& rng);

/// Log of the SBX base and its sign: beta = exp(log_base / (eta + 1)).
double sbx_log_base(double u);
double sbx_beta(double u, double eta);
/// Child 0.5 [(1 + beta_j) p_j + (1 - beta_j) q_j], one u per coordinate.
Vector sbx_crossover(const Vector& p, const Vector& q, double eta, const Vector& u);
Vector sbx_crossover(const Vector& p, const Vector& q, double eta, const BoxDomain& box,
                     Rng& rng);

/// delta = sign * expm1(log_base / (eta + 1)); u = 1/2 gives 0.
struct PolyTerms {
  double sign;
  double log_base;
};
PolyTerms polynomial_terms(double u);
double polynomial_delta(double u, double eta);
/// Gene j mutates when logistic(gate_u_j) + logit(rate) > 0 (probability
/// `rate`), moving by delta(u_j) * (upper_j - lower_j); clamped to the box.
Vector polynomial_mutation(const Vector& c, double rate, double eta, const BoxDomain& box,
                           const Vector& gate_u, const Vector& u);
Vector polynomial_mutation(const Vector& c, double rate, double eta, const BoxDomain& box,
                           Rng& rng);
Vector gaussian_mutation(const Vector& c, double sigma, Rng& rng);

/// Bernoulli(p) through the logistic threshold shared with the relaxed masks.
bool logistic_gate(double u, double logit_p);

/// Cholesky factor of a symmetric matrix, adding jitter * I on failure. The
/// jitter starts at 1e-12 trace / D and grows 10x per retry, 6 retries.
Matrix cholesky_with_jitter(const Matrix& c, double* jitter_used = nullptr);

// ---- shared noise -----------------------------------------------------------

struct PsoNoise {
  Matrix r1;
  Matrix r2;
  static PsoNoise draw(Eigen::Index n, Eigen::Index d, Rng& rng);
};

enum class DeStrategy { Rand1, CurrentToBest1 };

/// Per target i: three rows of N selection uniforms, D crossover uniforms and
/// the forced coordinate, drawn in that order.
struct DeNoise {
  std::vector<Matrix> select;  // N entries of 3 x N
  Matrix cross;                // N x D
  std::vector<Eigen::Index> jrand;
  static DeNoise draw(Eigen::Index n, Eigen::Index d, Rng& rng);
};

/// Distinct parents for target i: the argmax of the selection noise over
/// indices other than i and the parents already chosen.
std::array<Eigen::Index, 3> de_parents(const Matrix& select_u, Eigen::Index i, int count);

// ---- algorithms -------------------------------------------------------------

struct PsoConfig {
  Eigen::Index population = 100;
  double omega = 0.7298;
  double c1 = 1.49618;
  double c2 = 1.49618;
  /// Velocity bound as a fraction of the box width.
  double vmax_fraction = 0.2;
};

class Pso final : public Algorithm {
 public:
  Pso(Problem& problem, PsoConfig cfg, std::uint64_t seed);
  /// Starts from explicit positions and velocities.
  Pso(Problem& problem, PsoConfig cfg, std::uint64_t seed, Matrix x0, Matrix v0);

  std::string name() const override { return "pso"; }
  bool differentiable() const override { return false; }
  Eigen::Index population_size() const override { return cfg_.population; }
  Var generation() override;
  /// One velocity/position step with the given noise (after initialisation).
  void step(const PsoNoise& noise);
  Rng& rng() override { return rng_; }
  double best_fitness() const override { return gf_; }
  Vector best_solution() const override { return g_; }
  std::uint64_t evaluations() const override { return problem_.evaluations(); }
  std::vector<Hyper> hyperparameters() const override;

  const Matrix& positions() const { return x_; }
  const Matrix& velocities() const { return v_; }
  const Matrix& personal_best() const { return p_; }
  const Vector& personal_fitness() const { return pf_; }
  Vector vmax() const;

 private:
  void evaluate_and_refresh();

  Problem& problem_;
  PsoConfig cfg_;
  Rng rng_;
  Matrix x_, v_, p_;
  Vector pf_, g_;
  double gf_ = INFINITY;
  bool initialized_ = false;
};

enum class GaSelection { Tournament, Roulette };
enum class GaCrossover { Sbx, Blend };
enum class GaMutation { Polynomial, Gaussian };

struct GaConfig {
  Eigen::Index population = 100;
  GaSelection selection = GaSelection::Tournament;
  int tournament = 2;
  GaCrossover crossover = GaCrossover::Sbx;
  double crossover_rate = 0.9;
  GaMutation mutation = GaMutation::Polynomial;
  /// Negative means 1 / D.
  double mutation_rate = -1.0;
  double eta_c = 15.0;
  double eta_m = 20.0;
  /// Gaussian mutation scale as a fraction of the box width.
  double gaussian_sigma = 0.1;
  int elite = 1;
};

class Ga final : public Algorithm {
 public:
  Ga(Problem& problem, GaConfig cfg, std::uint64_t seed);

  std::string name() const override { return "ga"; }
  bool differentiable() const override { return false; }
  Eigen::Index population_size() const override { return cfg_.population; }
  Var generation() override;
  Rng& rng() override { return rng_; }
  double best_fitness() const override { return best_f_; }
  Vector best_solution() const override { return best_; }
  std::uint64_t evaluations() const override { return problem_.evaluations(); }
  std::vector<Hyper> hyperparameters() const override;

  const Matrix& population() const { return x_; }
  const Vector& fitness() const { return f_; }
  double mutation_rate() const { return mutation_rate_; }

 private:
  std::size_t select(Rng& rng) const;
  void refresh_best();

  Problem& problem_;
  GaConfig cfg_;
  double mutation_rate_;
  Rng rng_;
  Matrix x_;
  Vector f_, best_;
  double best_f_ = INFINITY;
  bool initialized_ = false;
};

struct DeConfig {
  Eigen::Index population = 100;
  double F = 0.5;
  double CR = 0.9;
  DeStrategy strategy = DeStrategy::Rand1;
};

class De final : public Algorithm {
 public:
  De(Problem& problem, DeConfig cfg, std::uint64_t seed);
  De(Problem& problem, DeConfig cfg, std::uint64_t seed, Matrix x0);

  std::string name() const override { return "de"; }
  bool differentiable() const override { return false; }
  Eigen::Index population_size() const override { return cfg_.population; }
  Var generation() override;
  void step(const DeNoise& noise);
  Rng& rng() override { return rng_; }
  double best_fitness() const override { return best_f_; }
  Vector best_solution() const override { return best_; }
  std::uint64_t evaluations() const override { return problem_.evaluations(); }
  std::vector<Hyper> hyperparameters() const override;

  const Matrix& population() const { return x_; }
  const Vector& fitness() const { return f_; }

 private:
  void refresh_best();

  Problem& problem_;
  DeConfig cfg_;
  Rng rng_;
  Matrix x_;
  Vector f_, best_;
  double best_f_ = INFINITY;
  bool initialized_ = false;
};

/// Strategy constants of CMA-ES for a given dimension and offspring count.
struct CmaesConstants {
  Eigen::Index dim = 0;
  Eigen::Index lambda = 0;
  Eigen::Index mu = 0;
  Vector weights;  // log-rank recombination weights, length mu
  double mu_eff = 0.0;
  double c_sigma = 0.0;
  double d_sigma = 0.0;
  double c_c = 0.0;
  double c1 = 0.0;
  double c_mu = 0.0;
  double chi_n = 0.0;  // E||N(0, I)||

  /// lambda <= 0 selects 4 + floor(3 ln D); parents <= 0 selects lambda / 2.
  static CmaesConstants standard(Eigen::Index dim, Eigen::Index lambda = 0,
                                 Eigen::Index parents = 0);
};

struct CmaesConfig {
  /// Offspring per generation; <= 0 selects the default 4 + floor(3 ln D).
  Eigen::Index population = 0;
  /// Initial step size as a fraction of the mean box width.
  double sigma0_fraction = 0.3;
  /// Parents per generation; <= 0 selects lambda / 2.
  Eigen::Index parents = 0;
};

class Cmaes final : public Algorithm {
 public:
  Cmaes(Problem& problem, CmaesConfig cfg, std::uint64_t seed);

  std::string name() const override { return "cmaes"; }
  bool differentiable() const override { return false; }
  Eigen::Index population_size() const override { return k_.lambda; }
  Var generation() override;
  /// One generation with explicit standard-normal draws (lambda x D).
  void step(const Matrix& z);
  Rng& rng() override { return rng_; }
  double best_fitness() const override { return best_f_; }
  Vector best_solution() const override { return best_; }
  std::uint64_t evaluations() const override { return problem_.evaluations(); }
  std::vector<Hyper> hyperparameters() const override;

  const CmaesConstants& constants() const { return k_; }
  const Vector& mean() const { return mean_; }
  double sigma() const { return sigma_; }
  const Matrix& covariance() const { return c_; }
  const Matrix& factor() const { return l_; }
  /// Points sampled by the last generation, one per row.
  const Matrix& offspring() const { return offspring_; }
  void set_mean(const Vector& m) { mean_ = m; }
  void set_sigma(double s) { sigma_ = s; }

 private:
  Problem& problem_;
  CmaesConstants k_;
  Rng rng_;
  Vector mean_, ps_, pc_, best_;
  Matrix c_, l_, offspring_;
  double sigma_;
  double best_f_ = INFINITY;
  long generation_ = 0;
};

}  // namespace diffmeta
