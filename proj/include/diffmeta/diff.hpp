#pragma once

// Differentiable PSO, GA, DE and CMA-ES. Populations and hyperparameters are
// trainable tape parameters; every random operator goes through its relaxed
// surrogate, and each generation returns a scalar loss for the outer step.
//
// Protocol per generation: generation() records the candidates and returns
// the loss; the caller backpropagates and steps the parameters; then
// update_state() rebuilds the candidates from the stepped parameters with the
// same noise, applies the selection decided by the evaluated fitness, and
// resets the tape.

#include "diffmeta/algorithm.hpp"
#include "diffmeta/classic.hpp"
#include "diffmeta/problems.hpp"
#include "diffmeta/relax.hpp"

#include <optional>

namespace diffmeta {

enum class LossMode { Min, Mean };

LossMode parse_loss_mode(const std::string& name);

struct DiffConfig {
  Eigen::Index population = 100;
  RelaxConfig relax;
  LossMode loss = LossMode::Min;
};

/// Tape, rng, best-so-far bookkeeping and the staging flag shared by the
/// four algorithms.
class DiffAlgorithm : public Algorithm {
 public:
  DiffAlgorithm(Problem& problem, DiffConfig cfg, std::uint64_t seed);

  bool differentiable() const override { return true; }
  Eigen::Index population_size() const override { return cfg_.population; }
  Tape* tape() override { return &tape_; }
  Rng& rng() override { return rng_; }
  double best_fitness() const override { return best_f_; }
  Vector best_solution() const override { return best_x_; }
  std::uint64_t evaluations() const override { return problem_.evaluations(); }
  const DiffConfig& config() const { return cfg_; }

 protected:
  Var reduce(const Var& fitness) const;
  /// Refreshes the detached best-so-far from evaluated candidates.
  void note(const Matrix& x, const Vector& f);
  void require_staged(const char* who) const;

  Problem& problem_;
  DiffConfig cfg_;
  Tape tape_;
  Rng rng_;
  Vector best_x_;
  double best_f_ = INFINITY;
  bool staged_ = false;
};

// ---- PSO --------------------------------------------------------------------

struct DiffPsoConfig {
  DiffConfig base;
  double omega = 0.7298;
  double c1 = 1.49618;
  double c2 = 1.49618;
  double vmax_fraction = 0.2;
};

class DiffPso final : public DiffAlgorithm {
 public:
  DiffPso(Problem& problem, DiffPsoConfig cfg, std::uint64_t seed);
  DiffPso(Problem& problem, DiffPsoConfig cfg, std::uint64_t seed, Matrix x0, Matrix v0);

  std::string name() const override { return "pso-diff"; }
  Var generation() override;
  /// A post-initialisation generation with explicit noise.
  Var generation(const PsoNoise& noise);
  void update_state() override;
  std::vector<Hyper> hyperparameters() const override;

  bool initialized() const { return initialized_; }
  Matrix positions() const { return x_.value(); }
  const Matrix& velocities() const { return v_; }
  const Matrix& personal_best() const { return p_; }
  const Vector& personal_fitness() const { return pf_; }
  const Param& omega() const { return omega_; }
  const Param& c1() const { return c1_; }
  const Param& c2() const { return c2_; }

  /// (velocity, position) candidates from the current parameters.
  std::pair<Var, Var> candidates(const PsoNoise& noise);

 private:
  void init_params(const Matrix& x0);

  DiffPsoConfig pcfg_;
  Param x_, omega_, c1_, c2_;
  Matrix v_, p_;
  Vector pf_, g_;
  double gf_ = INFINITY;
  bool initialized_ = false;
  // staged
  std::optional<PsoNoise> noise_;
  Matrix staged_x_;
  Vector staged_f_;
};

// ---- GA ---------------------------------------------------------------------

struct GaNoise {
  Matrix select_p;  // N x N
  Matrix select_q;  // N x N
  Matrix cross;     // N x 1
  Matrix sbx;       // N x D
  Matrix gate;      // N x D
  Matrix mutate;    // N x D
  static GaNoise draw(Eigen::Index n, Eigen::Index d, Rng& rng);
};

struct DiffGaConfig {
  DiffConfig base;
  double crossover_rate = 0.9;
  /// Negative means 1 / D.
  double mutation_rate = -1.0;
  double eta_c = 15.0;
  double eta_m = 20.0;
};

class DiffGa final : public DiffAlgorithm {
 public:
  DiffGa(Problem& problem, DiffGaConfig cfg, std::uint64_t seed);

  std::string name() const override { return "ga-diff"; }
  Var generation() override;
  Var generation(const GaNoise& noise);
  void update_state() override;
  std::vector<Hyper> hyperparameters() const override;

  Matrix population() const { return x_.value(); }
  const Vector& fitness() const { return f_; }
  const Param& eta_c() const { return eta_c_; }
  const Param& eta_m() const { return eta_m_; }
  const Param& crossover_logit() const { return cross_; }
  const Param& mutation_logits() const { return mut_; }
  const Param& selection_logits() const { return sel_; }

  /// Records the offspring built from the current parameters.
  Var offspring(const GaNoise& noise);
  /// Detached selection prior, one row per slot: log P(rank r wins a binary
  /// tournament drawn with replacement).
  Matrix rank_prior() const;

 private:

  DiffGaConfig gcfg_;
  Param x_, eta_c_, eta_m_, cross_, mut_, sel_;
  Vector f_;
  bool initialized_ = false;
  std::optional<GaNoise> noise_;
  Vector staged_f_;
};

// ---- DE ---------------------------------------------------------------------

struct DiffDeConfig {
  DiffConfig base;
  double F = 0.5;
  double CR = 0.9;
  DeStrategy strategy = DeStrategy::Rand1;
  /// Hard one-hot parent selection that also masks parents already chosen
  /// for the same target (the classical draw); soft mixtures otherwise.
  bool hard_selection = false;
};

class DiffDe final : public DiffAlgorithm {
 public:
  DiffDe(Problem& problem, DiffDeConfig cfg, std::uint64_t seed);
  DiffDe(Problem& problem, DiffDeConfig cfg, std::uint64_t seed, Matrix x0);

  std::string name() const override { return "de-diff"; }
  Var generation() override;
  Var generation(const DeNoise& noise);
  void update_state() override;
  std::vector<Hyper> hyperparameters() const override;

  Matrix population() const { return x_.value(); }
  const Vector& fitness() const { return f_; }
  const Param& phi() const { return f_param_; }
  const Param& crossover_logit() const { return cross_; }
  const Param& selection_logits() const { return sel_; }

  /// Records the clamped trial vectors built from the current parameters.
  Var trials(const DeNoise& noise);

 private:
  void init_params(const Matrix& x0);

  DiffDeConfig dcfg_;
  Param x_, f_param_, cross_, sel_;
  Vector f_;
  bool initialized_ = false;
  std::optional<DeNoise> noise_;
  Vector staged_f_;
};

// ---- CMA-ES -----------------------------------------------------------------

struct DiffCmaesConfig {
  DiffConfig base{0, {}, LossMode::Min};
  double sigma0_fraction = 0.3;
  /// Softmax temperature on standardised fitness.
  double temperature = 1.0;
};

class DiffCmaes final : public DiffAlgorithm {
 public:
  DiffCmaes(Problem& problem, DiffCmaesConfig cfg, std::uint64_t seed);

  std::string name() const override { return "cmaes-diff"; }
  Var generation() override;
  /// Generation with explicit standard-normal draws (lambda x D).
  Var generation(const Matrix& z);
  void update_state() override;
  std::vector<Hyper> hyperparameters() const override;

  const CmaesConstants& constants() const { return k_; }
  Vector mean() const { return mu_.value(); }
  double sigma() const { return sigma_.value()(0, 0); }
  Matrix factor() const;
  const Vector& weights() const { return staged_w_; }
  const Param& mean_param() const { return mu_; }
  const Param& sigma_param() const { return sigma_; }
  const Param& factor_param() const { return l_; }

  /// Records the clamped samples, one per row.
  Var samples(const Matrix& z);

 private:

  DiffCmaesConfig ccfg_;
  CmaesConstants k_;
  Param mu_, sigma_, l_;
  Vector ps_, pc_;
  long generation_ = 0;
  std::optional<Matrix> noise_;
  Vector staged_w_;
};

// ---- Adam on a single point ---------------------------------------------------

/// Plain gradient descent on one trainable point: the baseline arm of the
/// wine comparison. Each generation costs one evaluation.
class AdamBaseline final : public DiffAlgorithm {
 public:
  AdamBaseline(Problem& problem, std::uint64_t seed);

  std::string name() const override { return "adam"; }
  Var generation() override;
  void update_state() override;
  std::vector<Hyper> hyperparameters() const override { return {}; }

  Matrix point() const { return x_.value(); }

 private:
  Param x_;
};

}  // namespace diffmeta
