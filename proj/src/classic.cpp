#include "diffmeta/classic.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace diffmeta {

namespace {

Matrix clamp_rows(const Matrix& x, const BoxDomain& box) {
  return x.cwiseMax(box.lower.transpose().replicate(x.rows(), 1))
      .cwiseMin(box.upper.transpose().replicate(x.rows(), 1));
}

Eigen::Index argmin(const Vector& f) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < f.size(); ++i)
    if (f(i) < f(best)) best = i;
  return best;
}

std::vector<Eigen::Index> ascending_order(const Vector& f) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(f.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return f(a) < f(b); });
  return order;
}

void require_population(Eigen::Index n, Eigen::Index min, const char* who) {
  if (n < min) {
    throw std::invalid_argument(std::string(who) + ": population of " + std::to_string(n) +
                                " is too small (needs " + std::to_string(min) + ")");
  }
}

}  // namespace

// ---- operators --------------------------------------------------------------

std::size_t tournament_select(const Vector& fitness, int k, Rng& rng) {
  const auto n = static_cast<std::size_t>(fitness.size());
  if (n == 0) throw std::invalid_argument("tournament_select: empty population");
  if (k < 2) throw std::invalid_argument("tournament_select: k must be at least 2");
  // Partial Fisher-Yates: k distinct contestants, so k = N returns the best.
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  const std::size_t draws = std::min(n, static_cast<std::size_t>(k));
  std::size_t best = n;
  for (std::size_t d = 0; d < draws; ++d) {
    const std::size_t j = d + rng.index(n - d);
    std::swap(pool[d], pool[j]);
    const std::size_t c = pool[d];
    if (best == n || fitness(c) < fitness(best)) best = c;
  }
  return best;
}

std::size_t roulette_select(const Vector& fitness, Rng& rng) {
  const Eigen::Index n = fitness.size();
  if (n == 0) throw std::invalid_argument("roulette_select: empty population");
  const auto order = ascending_order(fitness);
  const double total = 0.5 * static_cast<double>(n) * static_cast<double>(n + 1);
  double target = rng.uniform() * total;
  for (Eigen::Index r = 0; r < n; ++r) {
    target -= static_cast<double>(n - r);
    if (target <= 0.0) return static_cast<std::size_t>(order[static_cast<std::size_t>(r)]);
  }
  return static_cast<std::size_t>(order.back());
}

Vector blend_crossover(const Vector& p, const Vector& q, double alpha) {
  if (p.size() != q.size()) throw std::invalid_argument("blend_crossover: dimension mismatch");
  return alpha * p + (1.0 - alpha) * q;
}

Vector blend_crossover(const Vector& p, const Vector& q, Rng& rng) {
  return blend_crossover(p, q, rng.uniform());
}

double sbx_log_base(double u) {
  return u <= 0.5 ? std::log(2.0 * u) : -std::log(2.0 * (1.0 - u));
}

double sbx_beta(double u, double eta) { return std::exp(sbx_log_base(u) / (eta + 1.0)); }

Vector sbx_crossover(const Vector& p, const Vector& q, double eta, const Vector& u) {
  if (p.size() != q.size() || p.size() != u.size()) {
    throw std::invalid_argument("sbx_crossover: dimension mismatch");
  }
  if (!(eta > 0.0)) throw std::invalid_argument("sbx_crossover: eta must be positive");
  Vector c(p.size());
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    const double beta = sbx_beta(u(j), eta);
    c(j) = 0.5 * ((1.0 + beta) * p(j) + (1.0 - beta) * q(j));
  }
  return c;
}

Vector sbx_crossover(const Vector& p, const Vector& q, double eta, const BoxDomain& box,
                     Rng& rng) {
  Vector u(p.size());
  for (Eigen::Index j = 0; j < u.size(); ++j) u(j) = rng.uniform();
  return sbx_crossover(p, q, eta, u).cwiseMax(box.lower).cwiseMin(box.upper);
}

PolyTerms polynomial_terms(double u) {
  if (u < 0.5) return {1.0, std::log(2.0 * u)};
  return {-1.0, std::log(2.0 * (1.0 - u))};
}

double polynomial_delta(double u, double eta) {
  const PolyTerms t = polynomial_terms(u);
  return t.sign * std::expm1(t.log_base / (eta + 1.0));
}

bool logistic_gate(double u, double logit_p) { return logistic_noise(u) + logit_p > 0.0; }

Vector polynomial_mutation(const Vector& c, double rate, double eta, const BoxDomain& box,
                           const Vector& gate_u, const Vector& u) {
  if (rate < 0.0 || rate > 1.0) throw std::invalid_argument("polynomial_mutation: rate outside [0, 1]");
  if (!(eta > 0.0)) throw std::invalid_argument("polynomial_mutation: eta must be positive");
  const double lr = logit(rate);
  Vector out = c;
  for (Eigen::Index j = 0; j < c.size(); ++j) {
    if (logistic_gate(gate_u(j), lr)) {
      out(j) = c(j) + polynomial_delta(u(j), eta) * (box.upper(j) - box.lower(j));
    }
  }
  return out.cwiseMax(box.lower).cwiseMin(box.upper);
}

Vector polynomial_mutation(const Vector& c, double rate, double eta, const BoxDomain& box,
                           Rng& rng) {
  Vector gate(c.size()), u(c.size());
  for (Eigen::Index j = 0; j < c.size(); ++j) gate(j) = rng.uniform();
  for (Eigen::Index j = 0; j < c.size(); ++j) u(j) = rng.uniform();
  return polynomial_mutation(c, rate, eta, box, gate, u);
}

Vector gaussian_mutation(const Vector& c, double sigma, Rng& rng) {
  if (sigma < 0.0) throw std::invalid_argument("gaussian_mutation: negative sigma");
  Vector out = c;
  for (Eigen::Index j = 0; j < c.size(); ++j) out(j) += sigma * rng.normal();
  return out;
}

Matrix cholesky_with_jitter(const Matrix& c, double* jitter_used) {
  const Eigen::Index d = c.rows();
  auto attempt = [&](double jitter, Matrix& out) {
    Eigen::LLT<Matrix> llt(c + jitter * Matrix::Identity(d, d));
    if (llt.info() != Eigen::Success) return false;
    out = llt.matrixL();
    return out.allFinite() && (out.diagonal().array() > 0.0).all();
  };
  Matrix l;
  if (attempt(0.0, l)) {
    if (jitter_used) *jitter_used = 0.0;
    return l;
  }
  const double trace = c.trace();
  if (!(trace > 0.0) || !std::isfinite(trace)) {
    throw std::runtime_error("covariance factorization failed: trace is " + std::to_string(trace));
  }
  double jitter = 1e-12 * trace / static_cast<double>(d);
  for (int k = 0; k <= 6; ++k, jitter *= 10.0) {
    if (attempt(jitter, l)) {
      if (jitter_used) *jitter_used = jitter;
      return l;
    }
  }
  throw std::runtime_error("covariance factorization failed after jitter escalation to " +
                           std::to_string(jitter / 10.0));
}

// ---- noise ------------------------------------------------------------------

PsoNoise PsoNoise::draw(Eigen::Index n, Eigen::Index d, Rng& rng) {
  PsoNoise z;
  z.r1 = rng.uniform(n, d);
  z.r2 = rng.uniform(n, d);
  return z;
}

DeNoise DeNoise::draw(Eigen::Index n, Eigen::Index d, Rng& rng) {
  DeNoise z;
  z.select.reserve(static_cast<std::size_t>(n));
  z.cross.resize(n, d);
  z.jrand.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    z.select.push_back(rng.uniform(3, n));
    z.cross.row(i) = rng.uniform(1, d);
    z.jrand.push_back(static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(d))));
  }
  return z;
}

std::array<Eigen::Index, 3> de_parents(const Matrix& select_u, Eigen::Index i, int count) {
  std::array<Eigen::Index, 3> r{-1, -1, -1};
  const Eigen::Index n = select_u.cols();
  for (int k = 0; k < count; ++k) {
    Eigen::Index best = -1;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i || std::find(r.begin(), r.begin() + k, j) != r.begin() + k) continue;
      if (best < 0 || select_u(k, j) > select_u(k, best)) best = j;
    }
    r[static_cast<std::size_t>(k)] = best;
  }
  return r;
}

// ---- PSO --------------------------------------------------------------------

Pso::Pso(Problem& problem, PsoConfig cfg, std::uint64_t seed)
    : problem_(problem), cfg_(cfg), rng_(seed) {
  require_population(cfg_.population, 1, "pso");
  x_ = problem_.domain().sample(cfg_.population, rng_);
  v_ = Matrix::Zero(cfg_.population, problem_.dimension());
}

Pso::Pso(Problem& problem, PsoConfig cfg, std::uint64_t seed, Matrix x0, Matrix v0)
    : problem_(problem), cfg_(cfg), rng_(seed), x_(std::move(x0)), v_(std::move(v0)) {
  cfg_.population = x_.rows();
  if (x_.cols() != problem_.dimension() || v_.rows() != x_.rows() || v_.cols() != x_.cols()) {
    throw std::invalid_argument("pso: initial positions/velocities do not match the problem");
  }
}

Vector Pso::vmax() const { return cfg_.vmax_fraction * problem_.domain().width(); }

void Pso::evaluate_and_refresh() {
  const Vector f = problem_.evaluate(x_);
  if (!initialized_) {
    p_ = x_;
    pf_ = f;
    initialized_ = true;
  } else {
    for (Eigen::Index i = 0; i < f.size(); ++i) {
      if (f(i) < pf_(i)) {
        pf_(i) = f(i);
        p_.row(i) = x_.row(i);
      }
    }
  }
  const Eigen::Index b = argmin(pf_);
  if (pf_(b) < gf_) {
    gf_ = pf_(b);
    g_ = p_.row(b).transpose();
  }
}

Var Pso::generation() {
  if (!initialized_) {
    evaluate_and_refresh();
  } else {
    step(PsoNoise::draw(x_.rows(), x_.cols(), rng_));
  }
  return {};
}

void Pso::step(const PsoNoise& z) {
  if (!initialized_) throw std::logic_error("pso: step before the initial evaluation");
  const Eigen::Index n = x_.rows();
  const Matrix g = g_.transpose().replicate(n, 1);
  Matrix v = ((cfg_.omega * v_.array() + (cfg_.c1 * z.r1.array()) * (p_ - x_).array()) +
              (cfg_.c2 * z.r2.array()) * (g - x_).array())
                 .matrix();
  const Vector vm = vmax();
  BoxDomain vbox{-vm, vm};
  v_ = clamp_rows(v, vbox);
  x_ = clamp_rows(x_ + v_, problem_.domain());
  evaluate_and_refresh();
}

std::vector<Hyper> Pso::hyperparameters() const {
  return {{"omega", cfg_.omega}, {"c1", cfg_.c1}, {"c2", cfg_.c2}};
}

// ---- GA ---------------------------------------------------------------------

Ga::Ga(Problem& problem, GaConfig cfg, std::uint64_t seed)
    : problem_(problem), cfg_(cfg), rng_(seed) {
  require_population(cfg_.population, 2, "ga");
  if (cfg_.elite < 0 || cfg_.elite >= cfg_.population) {
    throw std::invalid_argument("ga: elite count must be in [0, population)");
  }
  mutation_rate_ = cfg_.mutation_rate < 0.0 ? 1.0 / static_cast<double>(problem_.dimension())
                                            : cfg_.mutation_rate;
  x_ = problem_.domain().sample(cfg_.population, rng_);
}

std::size_t Ga::select(Rng& rng) const {
  return cfg_.selection == GaSelection::Tournament ? tournament_select(f_, cfg_.tournament, rng)
                                                   : roulette_select(f_, rng);
}

void Ga::refresh_best() {
  const Eigen::Index b = argmin(f_);
  if (f_(b) < best_f_) {
    best_f_ = f_(b);
    best_ = x_.row(b).transpose();
  }
}

Var Ga::generation() {
  if (!initialized_) {
    f_ = problem_.evaluate(x_);
    initialized_ = true;
    refresh_best();
    return {};
  }
  const Eigen::Index n = x_.rows();
  const Eigen::Index d = x_.cols();
  const BoxDomain& box = problem_.domain();
  const double cr_logit = logit(cfg_.crossover_rate);
  Matrix children(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto a = static_cast<Eigen::Index>(select(rng_));
    const auto b = static_cast<Eigen::Index>(select(rng_));
    const Vector p = x_.row(a).transpose();
    const Vector q = x_.row(b).transpose();
    const bool cross = logistic_gate(rng_.uniform(), cr_logit);
    Vector child;
    if (cfg_.crossover == GaCrossover::Sbx) {
      Vector u(d);
      for (Eigen::Index j = 0; j < d; ++j) u(j) = rng_.uniform();
      child = cross ? sbx_crossover(p, q, cfg_.eta_c, u) : (f_(a) <= f_(b) ? p : q);
    } else {
      const double alpha = rng_.uniform();
      child = cross ? blend_crossover(p, q, alpha) : (f_(a) <= f_(b) ? p : q);
    }
    child = child.cwiseMax(box.lower).cwiseMin(box.upper);
    if (cfg_.mutation == GaMutation::Polynomial) {
      child = polynomial_mutation(child, mutation_rate_, cfg_.eta_m, box, rng_);
    } else {
      const double lr = logit(mutation_rate_);
      for (Eigen::Index j = 0; j < d; ++j) {
        const bool gate = logistic_gate(rng_.uniform(), lr);
        const double step = cfg_.gaussian_sigma * box.width()(j) * rng_.normal();
        if (gate) child(j) += step;
      }
      child = child.cwiseMax(box.lower).cwiseMin(box.upper);
    }
    children.row(i) = child.transpose();
  }
  Vector fc = problem_.evaluate(children);
  // Elites overwrite the worst offspring.
  const auto parents = ascending_order(f_);
  const auto kids = ascending_order(fc);
  for (int e = 0; e < cfg_.elite; ++e) {
    const Eigen::Index worst = kids[kids.size() - 1 - static_cast<std::size_t>(e)];
    const Eigen::Index elite = parents[static_cast<std::size_t>(e)];
    children.row(worst) = x_.row(elite);
    fc(worst) = f_(elite);
  }
  x_ = std::move(children);
  f_ = std::move(fc);
  refresh_best();
  return {};
}

std::vector<Hyper> Ga::hyperparameters() const {
  return {{"crossover_rate", cfg_.crossover_rate},
          {"mutation_rate", mutation_rate_},
          {"eta_c", cfg_.eta_c},
          {"eta_m", cfg_.eta_m}};
}

// ---- DE ---------------------------------------------------------------------

De::De(Problem& problem, DeConfig cfg, std::uint64_t seed)
    : problem_(problem), cfg_(cfg), rng_(seed) {
  require_population(cfg_.population, cfg_.strategy == DeStrategy::Rand1 ? 4 : 3, "de");
  x_ = problem_.domain().sample(cfg_.population, rng_);
}

De::De(Problem& problem, DeConfig cfg, std::uint64_t seed, Matrix x0)
    : problem_(problem), cfg_(cfg), rng_(seed), x_(std::move(x0)) {
  cfg_.population = x_.rows();
  require_population(cfg_.population, cfg_.strategy == DeStrategy::Rand1 ? 4 : 3, "de");
  if (x_.cols() != problem_.dimension()) {
    throw std::invalid_argument("de: initial population does not match the problem");
  }
}

void De::refresh_best() {
  const Eigen::Index b = argmin(f_);
  if (f_(b) < best_f_) {
    best_f_ = f_(b);
    best_ = x_.row(b).transpose();
  }
}

Var De::generation() {
  if (!initialized_) {
    f_ = problem_.evaluate(x_);
    initialized_ = true;
    refresh_best();
  } else {
    step(DeNoise::draw(x_.rows(), x_.cols(), rng_));
  }
  return {};
}

void De::step(const DeNoise& z) {
  if (!initialized_) throw std::logic_error("de: step before the initial evaluation");
  const Eigen::Index n = x_.rows();
  const Eigen::Index d = x_.cols();
  const Eigen::Index best = argmin(f_);
  const double cr_logit = logit(cfg_.CR);
  const bool rand1 = cfg_.strategy == DeStrategy::Rand1;
  Matrix trials(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto r = de_parents(z.select[static_cast<std::size_t>(i)], i, rand1 ? 3 : 2);
    RowVector v;
    if (rand1) {
      v = x_.row(r[0]) + cfg_.F * (x_.row(r[1]) - x_.row(r[2]));
    } else {
      v = (x_.row(i) + cfg_.F * (x_.row(best) - x_.row(i))) +
          cfg_.F * (x_.row(r[0]) - x_.row(r[1]));
    }
    for (Eigen::Index j = 0; j < d; ++j) {
      const bool take = logistic_gate(z.cross(i, j), cr_logit) || j == z.jrand[static_cast<std::size_t>(i)];
      trials(i, j) = take ? v(j) : x_(i, j);
    }
  }
  trials = clamp_rows(trials, problem_.domain());
  const Vector ft = problem_.evaluate(trials);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (ft(i) <= f_(i)) {
      x_.row(i) = trials.row(i);
      f_(i) = ft(i);
    }
  }
  refresh_best();
}

std::vector<Hyper> De::hyperparameters() const { return {{"F", cfg_.F}, {"CR", cfg_.CR}}; }

// ---- CMA-ES -----------------------------------------------------------------

CmaesConstants CmaesConstants::standard(Eigen::Index dim, Eigen::Index lambda,
                                        Eigen::Index parents) {
  if (dim <= 0) throw std::invalid_argument("cmaes: dimension must be positive");
  CmaesConstants k;
  const double n = static_cast<double>(dim);
  k.dim = dim;
  k.lambda = lambda > 0 ? lambda : 4 + static_cast<Eigen::Index>(std::floor(3.0 * std::log(n)));
  if (k.lambda < 2) throw std::invalid_argument("cmaes: needs at least 2 offspring");
  k.mu = parents > 0 ? parents : k.lambda / 2;
  if (k.mu > k.lambda) throw std::invalid_argument("cmaes: more parents than offspring");
  k.weights.resize(k.mu);
  for (Eigen::Index i = 0; i < k.mu; ++i) {
    k.weights(i) = std::log(static_cast<double>(k.mu) + 0.5) - std::log(static_cast<double>(i + 1));
  }
  k.weights /= k.weights.sum();
  k.mu_eff = 1.0 / k.weights.squaredNorm();
  const double me = k.mu_eff;
  k.c_sigma = (me + 2.0) / (n + me + 5.0);
  k.d_sigma = 1.0 + 2.0 * std::max(0.0, std::sqrt((me - 1.0) / (n + 1.0)) - 1.0) + k.c_sigma;
  k.c_c = (4.0 + me / n) / (n + 4.0 + 2.0 * me / n);
  k.c1 = 2.0 / ((n + 1.3) * (n + 1.3) + me);
  k.c_mu = std::min(1.0 - k.c1, 2.0 * (me - 2.0 + 1.0 / me) / ((n + 2.0) * (n + 2.0) + me));
  k.chi_n = std::sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
  return k;
}

Cmaes::Cmaes(Problem& problem, CmaesConfig cfg, std::uint64_t seed)
    : problem_(problem),
      k_(CmaesConstants::standard(problem.dimension(), cfg.population, cfg.parents)),
      rng_(seed) {
  const Eigen::Index d = problem_.dimension();
  mean_ = problem_.domain().sample(1, rng_).row(0).transpose();
  sigma_ = cfg.sigma0_fraction * problem_.domain().width().mean();
  if (!(sigma_ > 0.0)) throw std::invalid_argument("cmaes: initial sigma must be positive");
  c_ = Matrix::Identity(d, d);
  l_ = Matrix::Identity(d, d);
  ps_ = Vector::Zero(d);
  pc_ = Vector::Zero(d);
}

Var Cmaes::generation() {
  step(rng_.normal(k_.lambda, k_.dim));
  return {};
}

void Cmaes::step(const Matrix& z) {
  const Eigen::Index d = k_.dim;
  if (z.rows() != k_.lambda || z.cols() != d) throw std::invalid_argument("cmaes: bad noise shape");
  const Matrix lz = l_.triangularView<Eigen::Lower>() * z.transpose();
  Matrix x = (sigma_ * lz).transpose();
  x.rowwise() += mean_.transpose();
  x = clamp_rows(x, problem_.domain());
  const Vector f = problem_.evaluate(x);
  offspring_ = x;
  const auto order = ascending_order(f);
  if (f(order[0]) < best_f_) {
    best_f_ = f(order[0]);
    best_ = x.row(order[0]).transpose();
  }

  Matrix y(k_.mu, d);
  for (Eigen::Index k = 0; k < k_.mu; ++k) {
    y.row(k) = (x.row(order[static_cast<std::size_t>(k)]) - mean_.transpose()) / sigma_;
  }
  const Vector yw = y.transpose() * k_.weights;
  mean_ += sigma_ * yw;

  ++generation_;
  const Vector white = l_.triangularView<Eigen::Lower>().solve(yw);
  ps_ = (1.0 - k_.c_sigma) * ps_ + std::sqrt(k_.c_sigma * (2.0 - k_.c_sigma) * k_.mu_eff) * white;
  const double norm = ps_.norm() /
                      std::sqrt(1.0 - std::pow(1.0 - k_.c_sigma, 2.0 * static_cast<double>(generation_)));
  const double hsig = norm < (1.4 + 2.0 / (static_cast<double>(d) + 1.0)) * k_.chi_n ? 1.0 : 0.0;
  pc_ = (1.0 - k_.c_c) * pc_ + hsig * std::sqrt(k_.c_c * (2.0 - k_.c_c) * k_.mu_eff) * yw;

  const Matrix rank_mu = y.transpose() * k_.weights.asDiagonal() * y;
  c_ = (1.0 - k_.c1 - k_.c_mu) * c_ +
       k_.c1 * (pc_ * pc_.transpose() + (1.0 - hsig) * k_.c_c * (2.0 - k_.c_c) * c_) +
       k_.c_mu * rank_mu;
  c_ = 0.5 * (c_ + c_.transpose()).eval();
  sigma_ *= std::exp((k_.c_sigma / k_.d_sigma) * (ps_.norm() / k_.chi_n - 1.0));
  l_ = cholesky_with_jitter(c_);
}

std::vector<Hyper> Cmaes::hyperparameters() const { return {{"sigma", sigma_}}; }

}  // namespace diffmeta
