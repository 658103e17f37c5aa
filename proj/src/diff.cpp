#include "diffmeta/diff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace diffmeta {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Eigen::Index argmin(const Vector& f) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < f.size(); ++i)
    if (f(i) < f(best)) best = i;
  return best;
}

Eigen::Index argmax(const Vector& f) {
  Eigen::Index worst = 0;
  for (Eigen::Index i = 1; i < f.size(); ++i)
    if (f(i) > f(worst)) worst = i;
  return worst;
}

Var clamp_box(const Var& x, const BoxDomain& box) { return clamp(x, box.lower, box.upper); }

Matrix replicate_row(const Vector& v, Eigen::Index n) { return v.transpose().replicate(n, 1); }

void require_population(Eigen::Index n, Eigen::Index min, const char* who) {
  if (n < min) {
    throw std::invalid_argument(std::string(who) + ": population of " + std::to_string(n) +
                                " is too small (needs " + std::to_string(min) + ")");
  }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

LossMode parse_loss_mode(const std::string& name) {
  if (name == "min") return LossMode::Min;
  if (name == "mean") return LossMode::Mean;
  throw std::invalid_argument("unknown loss mode '" + name + "' (expected min or mean)");
}

// ---- shared -----------------------------------------------------------------

DiffAlgorithm::DiffAlgorithm(Problem& problem, DiffConfig cfg, std::uint64_t seed)
    : problem_(problem), cfg_(cfg), rng_(seed) {
  cfg_.relax.validate();
  require_population(cfg_.population, 1, "differentiable algorithm");
}

Var DiffAlgorithm::reduce(const Var& fitness) const {
  return cfg_.loss == LossMode::Min ? min_with_index(fitness) : mean(fitness);
}

void DiffAlgorithm::note(const Matrix& x, const Vector& f) {
  const Eigen::Index b = argmin(f);
  if (f(b) < best_f_) {
    best_f_ = f(b);
    best_x_ = x.row(b).transpose();
  }
}

void DiffAlgorithm::require_staged(const char* who) const {
  if (!staged_) throw std::logic_error(std::string(who) + ": update_state before a generation");
}

// ---- PSO --------------------------------------------------------------------

DiffPso::DiffPso(Problem& problem, DiffPsoConfig cfg, std::uint64_t seed)
    : DiffAlgorithm(problem, cfg.base, seed), pcfg_(cfg) {
  const Matrix x0 = problem_.domain().sample(cfg_.population, rng_);
  v_ = Matrix::Zero(x0.rows(), x0.cols());
  init_params(x0);
}

DiffPso::DiffPso(Problem& problem, DiffPsoConfig cfg, std::uint64_t seed, Matrix x0, Matrix v0)
    : DiffAlgorithm(problem, cfg.base, seed), pcfg_(cfg), v_(std::move(v0)) {
  cfg_.population = x0.rows();
  if (x0.cols() != problem_.dimension() || v_.rows() != x0.rows() || v_.cols() != x0.cols()) {
    throw std::invalid_argument("pso-diff: initial positions/velocities do not match the problem");
  }
  init_params(x0);
}

void DiffPso::init_params(const Matrix& x0) {
  const Eigen::Index n = x0.rows();
  x_ = Param(tape_, x0, "x");
  omega_ = Param(tape_, Matrix::Constant(n, 1, pcfg_.omega), "omega");
  c1_ = Param(tape_, Matrix::Constant(n, 1, pcfg_.c1), "c1");
  c2_ = Param(tape_, Matrix::Constant(n, 1, pcfg_.c2), "c2");
}

std::pair<Var, Var> DiffPso::candidates(const PsoNoise& z) {
  const Eigen::Index n = cfg_.population;
  const Eigen::Index d = problem_.dimension();
  if (z.r1.rows() != n || z.r1.cols() != d || z.r2.rows() != n || z.r2.cols() != d) {
    throw std::invalid_argument("pso-diff: bad noise shape");
  }
  const Var x = x_.read();
  const Var v = tape_.constant(v_);
  const Var p = tape_.constant(p_);
  const Var g = tape_.constant(replicate_row(g_, n));
  const Var r1 = tape_.constant(z.r1);
  const Var r2 = tape_.constant(z.r2);
  const Var om = broadcast_cols(omega_.read(), d);
  const Var a1 = broadcast_cols(c1_.read(), d);
  const Var a2 = broadcast_cols(c2_.read(), d);
  Var vel = (om * v + (a1 * r1) * (p - x)) + (a2 * r2) * (g - x);
  const Vector vmax = pcfg_.vmax_fraction * problem_.domain().width();
  vel = clamp(vel, Vector(-vmax), vmax);
  const Var pos = clamp_box(x + vel, problem_.domain());
  return {vel, pos};
}

Var DiffPso::generation() {
  if (!initialized_) {
    tape_.reset();
    const Var f = problem_.evaluate(x_.read());
    noise_.reset();
    staged_x_ = x_.value();
    staged_f_ = f.value();
    note(staged_x_, staged_f_);
    staged_ = true;
    return reduce(f);
  }
  return generation(PsoNoise::draw(cfg_.population, problem_.dimension(), rng_));
}

Var DiffPso::generation(const PsoNoise& noise) {
  if (!initialized_) throw std::logic_error("pso-diff: step before the initial evaluation");
  tape_.reset();
  const auto [vel, pos] = candidates(noise);
  const Var f = problem_.evaluate(pos);
  noise_ = noise;
  staged_x_ = pos.value();
  staged_f_ = f.value();
  note(staged_x_, staged_f_);
  staged_ = true;
  return reduce(f);
}

void DiffPso::update_state() {
  require_staged("pso-diff");
  tape_.reset();
  if (noise_) {
    const auto [vel, pos] = candidates(*noise_);
    v_ = vel.value();
    const Matrix next = pos.value();
    for (Eigen::Index i = 0; i < staged_f_.size(); ++i) {
      if (staged_f_(i) < pf_(i)) {
        pf_(i) = staged_f_(i);
        p_.row(i) = staged_x_.row(i);
      }
    }
    x_.raw().set_value(next);
  } else {
    p_ = staged_x_;
    pf_ = staged_f_;
    initialized_ = true;
  }
  const Eigen::Index b = argmin(pf_);
  if (pf_(b) < gf_) {
    gf_ = pf_(b);
    g_ = p_.row(b).transpose();
  }
  tape_.reset();
  staged_ = false;
}

std::vector<Hyper> DiffPso::hyperparameters() const {
  return {{"omega", omega_.value().mean()}, {"c1", c1_.value().mean()}, {"c2", c2_.value().mean()}};
}

// ---- GA ---------------------------------------------------------------------

GaNoise GaNoise::draw(Eigen::Index n, Eigen::Index d, Rng& rng) {
  GaNoise z;
  z.select_p = rng.uniform(n, n);
  z.select_q = rng.uniform(n, n);
  z.cross = rng.uniform(n, 1);
  z.sbx = rng.uniform(n, d);
  z.gate = rng.uniform(n, d);
  z.mutate = rng.uniform(n, d);
  return z;
}

DiffGa::DiffGa(Problem& problem, DiffGaConfig cfg, std::uint64_t seed)
    : DiffAlgorithm(problem, cfg.base, seed), gcfg_(cfg) {
  const Eigen::Index n = cfg_.population;
  const Eigen::Index d = problem_.dimension();
  require_population(n, 2, "ga-diff");
  const double rate = gcfg_.mutation_rate < 0.0 ? 1.0 / static_cast<double>(d) : gcfg_.mutation_rate;
  if (!(rate > 0.0 && rate < 1.0) || !(gcfg_.crossover_rate > 0.0 && gcfg_.crossover_rate < 1.0)) {
    throw std::invalid_argument("ga-diff: rates must lie strictly inside (0, 1)");
  }
  if (!(gcfg_.eta_c > 0.0 && gcfg_.eta_m > 0.0)) {
    throw std::invalid_argument("ga-diff: distribution indices must be positive");
  }
  x_ = Param(tape_, problem_.domain().sample(n, rng_), "x");
  eta_c_ = Param(tape_, Matrix::Constant(1, 1, std::log(gcfg_.eta_c)), "eta_c", Reparam::Exp);
  eta_m_ = Param(tape_, Matrix::Constant(1, 1, std::log(gcfg_.eta_m)), "eta_m", Reparam::Exp);
  cross_ = Param(tape_, Matrix::Constant(1, 1, logit(gcfg_.crossover_rate)), "crossover_logit");
  mut_ = Param(tape_, Matrix::Constant(1, d, logit(rate)), "mutation_logits");
  sel_ = Param(tape_, Matrix::Zero(n, 1), "selection_logits");
}

Matrix DiffGa::rank_prior() const {
  const Eigen::Index n = cfg_.population;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return f_(a) < f_(b); });
  RowVector prior(n);
  const double nn = static_cast<double>(n) * static_cast<double>(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    prior(order[static_cast<std::size_t>(r)]) = std::log((2.0 * static_cast<double>(n - r) - 1.0) / nn);
  }
  return prior.replicate(n, 1);
}

Var DiffGa::offspring(const GaNoise& z) {
  const Eigen::Index n = cfg_.population;
  const Eigen::Index d = problem_.dimension();
  const BoxDomain& box = problem_.domain();
  const Var x = x_.read();
  const RelaxConfig soft{cfg_.relax.tau, false};
  const Var logits = broadcast_rows(sel_.read(), n) + tape_.constant(rank_prior());
  const Var p = matmul(gumbel_softmax(logits, soft, z.select_p), x);
  const Var q = matmul(gumbel_softmax(logits, soft, z.select_q), x);

  const Var gate = broadcast_cols(gumbel_sigmoid(cross_.read(), cfg_.relax, z.cross), d);
  const Var beta =
      exp(tape_.constant(z.sbx.unaryExpr([](double u) { return sbx_log_base(u); })) / (eta_c_.read() + 1.0));
  const Var child = 0.5 * ((1.0 + beta) * p + (1.0 - beta) * q);
  const Var crossed = clamp_box(gate * child + (1.0 - gate) * p, box);

  Matrix sign(n, d), log_base(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const PolyTerms t = polynomial_terms(z.mutate(i, j));
      sign(i, j) = t.sign;
      log_base(i, j) = t.log_base;
    }
  }
  const Var mask = gumbel_sigmoid(broadcast_rows(mut_.read(), n), cfg_.relax, z.gate);
  const Var delta = tape_.constant(sign) * expm1(tape_.constant(log_base) / (eta_m_.read() + 1.0));
  const Var width = tape_.constant(replicate_row(box.width(), n));
  return clamp_box(crossed + mask * delta * width, box);
}

Var DiffGa::generation() {
  if (!initialized_) {
    tape_.reset();
    const Var f = problem_.evaluate(x_.read());
    noise_.reset();
    staged_f_ = f.value();
    note(x_.value(), staged_f_);
    staged_ = true;
    return reduce(f);
  }
  return generation(GaNoise::draw(cfg_.population, problem_.dimension(), rng_));
}

Var DiffGa::generation(const GaNoise& noise) {
  if (!initialized_) throw std::logic_error("ga-diff: step before the initial evaluation");
  tape_.reset();
  const Var c = offspring(noise);
  const Var f = problem_.evaluate(c);
  noise_ = noise;
  staged_f_ = f.value();
  note(c.value(), staged_f_);
  staged_ = true;
  return reduce(f);
}

void DiffGa::update_state() {
  require_staged("ga-diff");
  tape_.reset();
  if (noise_) {
    Matrix next = offspring(*noise_).value();
    f_ = staged_f_;
    const Eigen::Index w = argmax(f_);
    next.row(w) = best_x_.transpose();
    f_(w) = best_f_;
    x_.raw().set_value(next);
  } else {
    f_ = staged_f_;
    initialized_ = true;
  }
  tape_.reset();
  staged_ = false;
}

std::vector<Hyper> DiffGa::hyperparameters() const {
  const Matrix m = mut_.value();
  return {{"eta_c", eta_c_.value()(0, 0)},
          {"eta_m", eta_m_.value()(0, 0)},
          {"crossover_rate", sigmoid(cross_.value()(0, 0))},
          {"mutation_rate", m.unaryExpr([](double a) { return sigmoid(a); }).mean()}};
}

// ---- DE ---------------------------------------------------------------------

DiffDe::DiffDe(Problem& problem, DiffDeConfig cfg, std::uint64_t seed)
    : DiffAlgorithm(problem, cfg.base, seed), dcfg_(cfg) {
  require_population(cfg_.population, dcfg_.strategy == DeStrategy::Rand1 ? 4 : 3, "de-diff");
  init_params(problem_.domain().sample(cfg_.population, rng_));
}

DiffDe::DiffDe(Problem& problem, DiffDeConfig cfg, std::uint64_t seed, Matrix x0)
    : DiffAlgorithm(problem, cfg.base, seed), dcfg_(cfg) {
  cfg_.population = x0.rows();
  require_population(cfg_.population, dcfg_.strategy == DeStrategy::Rand1 ? 4 : 3, "de-diff");
  if (x0.cols() != problem_.dimension()) {
    throw std::invalid_argument("de-diff: initial population does not match the problem");
  }
  init_params(x0);
}

void DiffDe::init_params(const Matrix& x0) {
  if (!(dcfg_.F > 0.0)) throw std::invalid_argument("de-diff: F must be positive");
  if (!(dcfg_.CR > 0.0 && dcfg_.CR < 1.0)) throw std::invalid_argument("de-diff: CR must lie in (0, 1)");
  x_ = Param(tape_, x0, "x");
  f_param_ = Param(tape_, Matrix::Constant(1, 1, std::log(dcfg_.F)), "F", Reparam::Exp);
  cross_ = Param(tape_, Matrix::Constant(1, 1, logit(dcfg_.CR)), "crossover_logit");
  sel_ = Param(tape_, Matrix::Zero(x0.rows(), 1), "selection_logits");
}

Var DiffDe::trials(const DeNoise& z) {
  const Eigen::Index n = cfg_.population;
  const Eigen::Index d = problem_.dimension();
  if (static_cast<Eigen::Index>(z.select.size()) != n || z.cross.rows() != n || z.cross.cols() != d ||
      static_cast<Eigen::Index>(z.jrand.size()) != n) {
    throw std::invalid_argument("de-diff: bad noise shape");
  }
  const bool rand1 = dcfg_.strategy == DeStrategy::Rand1;
  const int count = rand1 ? 3 : 2;
  const Var x = x_.read();
  const Var F = f_param_.read();
  const Var logits = broadcast_rows(sel_.read(), n);
  const RelaxConfig pick{cfg_.relax.tau, dcfg_.hard_selection};

  std::vector<Var> parents;
  Matrix chosen = Matrix::Zero(n, n);  // hard mode: parents already used per target
  for (int k = 0; k < count; ++k) {
    Matrix mask = Matrix::Zero(n, n);
    Matrix u(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      mask(i, i) = kNegInf;
      u.row(i) = z.select[static_cast<std::size_t>(i)].row(k);
    }
    if (dcfg_.hard_selection) mask = (chosen.array() > 0.0).select(kNegInf, mask);
    const Var s = gumbel_softmax(logits + tape_.constant(mask), pick, u);
    if (dcfg_.hard_selection) chosen += s.value();
    parents.push_back(matmul(s, x));
  }

  Var donor;
  if (rand1) {
    donor = parents[0] + F * (parents[1] - parents[2]);
  } else {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < n; ++i)
      if (f_(i) < f_(best)) best = i;
    const Var xb = broadcast_rows(row(x, best), n);
    donor = (x + F * (xb - x)) + F * (parents[0] - parents[1]);
  }

  Matrix forced = Matrix::Zero(n, d);
  for (Eigen::Index i = 0; i < n; ++i) forced(i, z.jrand[static_cast<std::size_t>(i)]) = 1.0;
  const Var m = gumbel_sigmoid(cross_.read(), cfg_.relax, z.cross);
  const Var take = m * tape_.constant(Matrix::Ones(n, d) - forced) + tape_.constant(forced);
  return clamp_box(take * donor + (1.0 - take) * x, problem_.domain());
}

Var DiffDe::generation() {
  if (!initialized_) {
    tape_.reset();
    const Var f = problem_.evaluate(x_.read());
    noise_.reset();
    staged_f_ = f.value();
    note(x_.value(), staged_f_);
    staged_ = true;
    return reduce(f);
  }
  return generation(DeNoise::draw(cfg_.population, problem_.dimension(), rng_));
}

Var DiffDe::generation(const DeNoise& noise) {
  if (!initialized_) throw std::logic_error("de-diff: step before the initial evaluation");
  tape_.reset();
  const Var u = trials(noise);
  const Var f = problem_.evaluate(u);
  noise_ = noise;
  staged_f_ = f.value();
  note(u.value(), staged_f_);
  staged_ = true;
  return reduce(f);
}

void DiffDe::update_state() {
  require_staged("de-diff");
  tape_.reset();
  Matrix next = x_.value();
  if (noise_) {
    const Matrix u = trials(*noise_).value();
    for (Eigen::Index i = 0; i < next.rows(); ++i) {
      if (staged_f_(i) <= f_(i)) {
        next.row(i) = u.row(i);
        f_(i) = staged_f_(i);
      }
    }
  } else {
    f_ = staged_f_;
    initialized_ = true;
  }
  bool present = false;
  for (Eigen::Index i = 0; i < next.rows() && !present; ++i) {
    present = next.row(i) == best_x_.transpose();
  }
  if (!present) {
    const Eigen::Index w = argmax(f_);
    next.row(w) = best_x_.transpose();
    f_(w) = best_f_;
  }
  x_.raw().set_value(next);
  tape_.reset();
  staged_ = false;
}

std::vector<Hyper> DiffDe::hyperparameters() const {
  return {{"F", f_param_.value()(0, 0)}, {"CR", sigmoid(cross_.value()(0, 0))}};
}

// ---- CMA-ES -----------------------------------------------------------------

namespace {

DiffConfig with_population(DiffConfig cfg, Eigen::Index lambda) {
  cfg.population = lambda;
  return cfg;
}

}  // namespace

DiffCmaes::DiffCmaes(Problem& problem, DiffCmaesConfig cfg, std::uint64_t seed)
    : DiffAlgorithm(problem,
                    with_population(cfg.base, CmaesConstants::standard(problem.dimension(),
                                                                       cfg.base.population)
                                                  .lambda),
                    seed),
      ccfg_(cfg),
      k_(CmaesConstants::standard(problem.dimension(), cfg.base.population)) {
  if (!(ccfg_.temperature > 0.0)) throw std::invalid_argument("cmaes-diff: temperature must be positive");
  const Eigen::Index d = problem_.dimension();
  const Vector m0 = problem_.domain().sample(1, rng_).row(0).transpose();
  const double s0 = ccfg_.sigma0_fraction * problem_.domain().width().mean();
  if (!(s0 > 0.0)) throw std::invalid_argument("cmaes-diff: initial sigma must be positive");
  mu_ = Param(tape_, m0, "mean");
  sigma_ = Param(tape_, Matrix::Constant(1, 1, std::log(s0)), "sigma", Reparam::Exp);
  l_ = Param(tape_, Matrix::Identity(d, d), "L");
  ps_ = Vector::Zero(d);
  pc_ = Vector::Zero(d);
}

Matrix DiffCmaes::factor() const { return l_.value().triangularView<Eigen::Lower>(); }

Var DiffCmaes::samples(const Matrix& z) {
  if (z.rows() != k_.lambda || z.cols() != k_.dim) throw std::invalid_argument("cmaes-diff: bad noise shape");
  return clamp_box(pathwise_gaussian(mu_.read(), sigma_.read(), l_.raw(), z), problem_.domain());
}

Var DiffCmaes::generation() { return generation(rng_.normal(k_.lambda, k_.dim)); }

Var DiffCmaes::generation(const Matrix& z) {
  tape_.reset();
  const Var x = samples(z);
  const Var f = problem_.evaluate(x);
  const Var centred = f - diffmeta::mean(f);
  const Var spread = max(sqrt(diffmeta::mean(square(centred))), tape_.constant(1e-300));
  const Var w = softmax(neg(centred / spread) / ccfg_.temperature);
  noise_ = z;
  staged_w_ = w.value();
  note(x.value(), f.value());
  staged_ = true;
  return reduce(f);
}

void DiffCmaes::update_state() {
  require_staged("cmaes-diff");
  tape_.reset();
  const Eigen::Index d = k_.dim;
  const Matrix x = samples(*noise_).value();
  tape_.reset();
  const Vector m = mu_.value();
  const double sigma = this->sigma();
  const Matrix l = factor();
  const Vector& w = staged_w_;

  const Matrix y = (x.rowwise() - m.transpose()) / sigma;
  const Vector yw = y.transpose() * w;
  const Vector m_next = m + sigma * yw;
  const double mu_eff = 1.0 / w.squaredNorm();

  ++generation_;
  const Vector diag = l.diagonal().cwiseAbs();
  Vector white;
  if (l.allFinite() && diag.minCoeff() > 1e-12 * diag.maxCoeff()) {
    white = l.triangularView<Eigen::Lower>().solve(yw);
  } else {
    Matrix c = Matrix::Zero(d, d);
    c.selfadjointView<Eigen::Lower>().rankUpdate(l);
    const Matrix lf = cholesky_with_jitter(c.selfadjointView<Eigen::Lower>());
    white = lf.triangularView<Eigen::Lower>().solve(yw);
  }
  ps_ = (1.0 - k_.c_sigma) * ps_ + std::sqrt(k_.c_sigma * (2.0 - k_.c_sigma) * mu_eff) * white;
  const double norm =
      ps_.norm() / std::sqrt(1.0 - std::pow(1.0 - k_.c_sigma, 2.0 * static_cast<double>(generation_)));
  const double threshold = (1.4 + 2.0 / (static_cast<double>(d) + 1.0)) * k_.chi_n;
  const double hsig = sigmoid((threshold - norm) / (0.1 * k_.chi_n));
  pc_ = (1.0 - k_.c_c) * pc_ + hsig * std::sqrt(k_.c_c * (2.0 - k_.c_c) * mu_eff) * yw;

  Matrix c_old = Matrix::Zero(d, d);
  c_old.selfadjointView<Eigen::Lower>().rankUpdate(l);
  c_old = c_old.selfadjointView<Eigen::Lower>();
  const Matrix rank_mu = y.transpose() * w.asDiagonal() * y;
  Matrix c = (1.0 - k_.c1 - k_.c_mu) * c_old +
             k_.c1 * (pc_ * pc_.transpose() + (1.0 - hsig) * k_.c_c * (2.0 - k_.c_c) * c_old) +
             k_.c_mu * rank_mu;
  c = 0.5 * (c + c.transpose()).eval();
  const double sigma_next = sigma * std::exp((k_.c_sigma / k_.d_sigma) * (ps_.norm() / k_.chi_n - 1.0));
  if (!std::isfinite(sigma_next) || !(sigma_next > 0.0) || !m_next.allFinite()) {
    throw std::runtime_error("cmaes-diff: step size or mean became non-finite");
  }
  const Matrix l_next = cholesky_with_jitter(c);

  mu_.assign(m_next);
  sigma_.assign(Matrix::Constant(1, 1, sigma_next));
  l_.raw().set_value(l_next);
  staged_ = false;
}

std::vector<Hyper> DiffCmaes::hyperparameters() const { return {{"sigma", sigma()}}; }

// ---- Adam baseline ----------------------------------------------------------

AdamBaseline::AdamBaseline(Problem& problem, std::uint64_t seed)
    : DiffAlgorithm(problem, DiffConfig{1, {}, LossMode::Min}, seed) {
  x_ = Param(tape_, problem_.domain().sample(1, rng_), "x");
}

Var AdamBaseline::generation() {
  tape_.reset();
  const Var f = problem_.evaluate(x_.read());
  note(x_.value(), f.value());
  staged_ = true;
  return sum(f);
}

void AdamBaseline::update_state() {
  require_staged("adam");
  tape_.reset();
  staged_ = false;
}

}  // namespace diffmeta
