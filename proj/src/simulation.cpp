#include "stratfact/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <ostream>
#include <thread>

#include "stratfact/inference.hpp"

namespace stratfact {

namespace {

Vector contrast(const FactorialDesign& design, const Vector& arm_value) {
  const double scale = std::ldexp(1.0, -(design.k() - 1));
  Vector tau(design.f(), 0.0);
  for (int f = 0; f < design.f(); ++f) {
    double s = 0.0;
    for (int a = 0; a < design.q(); ++a) s += design.sign(f, a) * arm_value[a];
    tau[f] = scale * s;
  }
  return tau;
}

// C S C' with C = 2^{-(K-1)} G; S is Q x Q.
SymMatrix contrast_sandwich(const FactorialDesign& design, const SymMatrix& s) {
  const double scale = std::ldexp(1.0, -2 * (design.k() - 1));
  SymMatrix out(design.f());
  for (int fi = 0; fi < design.f(); ++fi)
    for (int fj = fi; fj < design.f(); ++fj) {
      double acc = 0.0;
      for (int a = 0; a < design.q(); ++a)
        for (int b = 0; b < design.q(); ++b)
          acc += design.sign(fi, a) * s(a, b) * design.sign(fj, b);
      out.set(fi, fj, scale * acc);
    }
  return out;
}

}  // namespace

PotentialPopulation make_population(const FactorialDesign& design,
                                    const std::vector<std::vector<int>>& arm_counts, Matrix y,
                                    Matrix x) {
  PotentialPopulation pop;
  pop.k = design.k();
  pop.q = design.q();
  pop.p = x.cols();
  const int m = static_cast<int>(arm_counts.size());
  if (m == 0) throw ValidationError("population needs at least one stratum");

  int n = 0;
  for (int s = 0; s < m; ++s) {
    if (static_cast<int>(arm_counts[s].size()) != pop.q)
      throw ValidationError("stratum " + std::to_string(s + 1) + ": expected " +
                            std::to_string(pop.q) + " arm counts");
    int size = 0;
    for (int a = 0; a < pop.q; ++a) {
      if (arm_counts[s][a] < 1)
        throw ValidationError("stratum " + std::to_string(s + 1) + ": arm " +
                              std::to_string(a + 1) + " count below 1");
      size += arm_counts[s][a];
    }
    pop.stratum_ids.push_back(std::to_string(s + 1));
    pop.n_m.push_back(size);
    n += size;
  }
  if (y.rows() != n || y.cols() != pop.q)
    throw ValidationError("science table must be n x Q with n matching the arm counts");
  if (x.rows() != n) throw ValidationError("covariate table must have n rows");

  pop.counts = arm_counts;
  pop.y = std::move(y);
  pop.x = std::move(x);
  pop.stratum_of.reserve(n);
  for (int s = 0; s < m; ++s) pop.stratum_of.insert(pop.stratum_of.end(), pop.n_m[s], s);

  pop.pi.resize(m);
  pop.e.assign(m, Vector(pop.q));
  for (int s = 0; s < m; ++s) {
    pop.pi[s] = static_cast<double>(pop.n_m[s]) / n;
    for (int a = 0; a < pop.q; ++a)
      pop.e[s][a] = static_cast<double>(pop.counts[s][a]) / pop.n_m[s];
  }

  pop.tau_m = Matrix(m, design.f());
  pop.tau.assign(design.f(), 0.0);
  int offset = 0;
  for (int s = 0; s < m; ++s) {
    Vector arm_mean(pop.q, 0.0);
    for (int i = offset; i < offset + pop.n_m[s]; ++i)
      for (int a = 0; a < pop.q; ++a) arm_mean[a] += pop.y(i, a);
    for (int a = 0; a < pop.q; ++a) arm_mean[a] /= pop.n_m[s];
    const Vector t = contrast(design, arm_mean);
    for (int f = 0; f < design.f(); ++f) {
      pop.tau_m(s, f) = t[f];
      pop.tau[f] += pop.pi[s] * t[f];
    }
    offset += pop.n_m[s];
  }
  return pop;
}

namespace {

double sample_variance(const Vector& v) {
  const size_t n = v.size();
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(n);
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return acc / static_cast<double>(n - 1);
}

}  // namespace

PotentialPopulation generate_scenario(int case_id, uint64_t seed, std::optional<int> strata,
                                      std::optional<int> stratum_size) {
  if (case_id < 1 || case_id > 4) throw ValidationError("scenario case must be 1..4");
  const FactorialDesign design = build_design(2);
  const int q = design.q();

  int m = 0, nm = 0;
  switch (case_id) {
    case 1: m = strata.value_or(20); nm = stratum_size.value_or(12); break;
    case 2:
    case 3: m = strata.value_or(2); nm = stratum_size.value_or(108); break;
    case 4: m = strata.value_or(10); nm = stratum_size.value_or(40); break;
  }
  if (m < 1) throw ValidationError("number of strata must be positive");
  if (nm < q) throw ValidationError("stratum size must be at least " + std::to_string(q));
  const int n = m * nm;

  std::vector<std::vector<int>> counts(m, std::vector<int>(q, 0));
  std::vector<Vector> props(m, Vector(q, 0.25));
  if (case_id == 4) {
    if (m % 2 != 0) throw ValidationError("case 4 needs an even number of strata");
    for (int s = 0; s < m; ++s) {
      const int rung = s < m / 2 ? s + 1 : s + 1 - m / 2;
      const double frac = static_cast<double>(rung) / (2.0 * m);
      const bool low_first = s < m / 2;
      props[s] = low_first ? Vector{frac, frac, 0.5 - frac, 0.5 - frac}
                           : Vector{0.5 - frac, 0.5 - frac, frac, frac};
    }
  }
  for (int s = 0; s < m; ++s)
    for (int a = 0; a < q; ++a) {
      const double c = props[s][a] * nm;
      const int ci = static_cast<int>(std::llround(c));
      if (std::abs(c - ci) > 1e-9 || ci < 1)
        throw ValidationError("stratum size " + std::to_string(nm) +
                              " gives non-integral arm counts (stratum " + std::to_string(s + 1) +
                              ", arm " + std::to_string(a + 1) + ": " + std::to_string(c) + ")");
      counts[s][a] = ci;
    }

  const int p = case_id == 4 ? 1 : 3;
  SymMatrix sigma_x(p);
  for (int i = 0; i < p; ++i)
    for (int j = i; j < p; ++j) sigma_x.set(i, j, std::pow(0.5, std::abs(i - j)));
  Matrix x = sample_mvn(Vector(p, 0.0), sigma_x, n, hash64(seed, 2));

  Matrix y(n, q);
  std::vector<Matrix> beta1, beta2;
  Vector sigma2(q, 0.0);
  Rng noise(hash64(seed, 3));

  if (case_id == 4) {
    for (int i = 0; i < n; ++i) {
      const int s = i / nm;
      const double xv = x(i, 0);
      y(i, 0) = -10.0 * props[s][0] * xv;
      y(i, 1) = -10.0 * props[s][1] * xv;
      y(i, 2) = 10.0 * props[s][2] * std::exp(props[s][2] * xv);
      y(i, 3) = 10.0 * props[s][3] * std::exp(props[s][3] * xv);
      for (int a = 0; a < q; ++a) y(i, a) += 0.1 * noise.next_normal();
    }
    sigma2.assign(q, 0.01);
  } else {
    Rng coef(hash64(seed, 1));
    const int sets = case_id == 3 ? m : 1;
    beta1.assign(sets, Matrix(q, p));
    beta2.assign(sets, Matrix(q, p));
    for (int s = 0; s < sets; ++s)
      for (int a = 0; a < q; ++a) {
        for (int j = 0; j < p; ++j)
          beta1[s](a, j) = (a ? beta1[s](a - 1, j) : 0.0) + coef.uniform(-1.0, 1.0);
        for (int j = 0; j < p; ++j)
          beta2[s](a, j) = (a ? beta2[s](a - 1, j) : 0.0) + coef.uniform(-0.1, 0.1);
      }
    // signal first, then per-arm noise scaled to a signal-to-noise ratio of 10
    for (int i = 0; i < n; ++i) {
      const int set = case_id == 3 ? i / nm : 0;
      for (int a = 0; a < q; ++a) {
        double lin = 0.0, ex = 0.0;
        for (int j = 0; j < p; ++j) {
          lin += x(i, j) * beta1[set](a, j);
          ex += x(i, j) * beta2[set](a, j);
        }
        y(i, a) = lin + std::exp(ex);
      }
    }
    for (int a = 0; a < q; ++a) {
      Vector signal(n);
      for (int i = 0; i < n; ++i) signal[i] = y(i, a);
      sigma2[a] = sample_variance(signal) / 10.0;
    }
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < q; ++a) y(i, a) += std::sqrt(sigma2[a]) * noise.next_normal();
  }

  PotentialPopulation pop = make_population(design, counts, std::move(y), std::move(x));
  pop.case_id = case_id;
  pop.seed = seed;
  pop.beta_outcome = std::move(beta1);
  pop.beta_exp = std::move(beta2);
  pop.sigma2 = std::move(sigma2);
  return pop;
}

ObservedDataset observe(const PotentialPopulation& pop, const FactorialDesign& design,
                        const std::vector<int>& arms) {
  const int n = pop.n();
  if (static_cast<int>(arms.size()) != n) throw ValidationError("assignment length mismatch");
  std::vector<std::string> labels(n);
  Vector y_obs(n);
  for (int i = 0; i < n; ++i) {
    labels[i] = pop.stratum_ids[pop.stratum_of[i]];
    y_obs[i] = pop.y(i, arms[i] - 1);
  }
  return make_dataset(design, std::move(labels), arms, std::move(y_obs), pop.x);
}

AssignmentPlan plan_from(const PotentialPopulation& pop, uint64_t seed) {
  AssignmentPlan plan;
  plan.seed = seed;
  for (int s = 0; s < pop.m(); ++s)
    plan.strata.push_back({pop.stratum_ids[s], pop.n_m[s], pop.counts[s]});
  return plan;
}

std::string source_name(Source s) {
  switch (s) {
    case Source::y: return "y";
    case Source::epsilon: return "epsilon";
    case Source::eta: return "eta";
    case Source::mu: return "mu";
  }
  return "y";
}

OracleMoments oracle_moments(const PotentialPopulation& pop, const FactorialDesign& design,
                             Source source) {
  const int m = pop.m();
  const int q = pop.q;
  const int p = pop.p;
  const int n = pop.n();
  for (int s = 0; s < m; ++s)
    if (pop.n_m[s] < 2)
      throw ValidationError("population moments need at least two units per stratum");

  // stratum means of potential outcomes and covariates
  std::vector<Vector> y_mean(m, Vector(q, 0.0));
  std::vector<Vector> x_mean(m, Vector(p, 0.0));
  std::vector<int> offset(m + 1, 0);
  for (int s = 0; s < m; ++s) offset[s + 1] = offset[s] + pop.n_m[s];
  for (int i = 0; i < n; ++i) {
    const int s = pop.stratum_of[i];
    for (int a = 0; a < q; ++a) y_mean[s][a] += pop.y(i, a);
    for (int j = 0; j < p; ++j) x_mean[s][j] += pop.x(i, j);
  }
  for (int s = 0; s < m; ++s) {
    for (int a = 0; a < q; ++a) y_mean[s][a] /= pop.n_m[s];
    for (int j = 0; j < p; ++j) x_mean[s][j] /= pop.n_m[s];
  }

  OracleMoments om;
  om.source = source;

  std::vector<SymMatrix> s_xx(m, SymMatrix(p));
  std::vector<std::vector<Vector>> s_xy(m, std::vector<Vector>(q, Vector(p, 0.0)));
  if (source != Source::y && p > 0) {
    for (int i = 0; i < n; ++i) {
      const int s = pop.stratum_of[i];
      Vector dx(p);
      for (int j = 0; j < p; ++j) dx[j] = pop.x(i, j) - x_mean[s][j];
      for (int j = 0; j < p; ++j) {
        for (int l = j; l < p; ++l) s_xx[s].add(j, l, dx[j] * dx[l]);
        for (int a = 0; a < q; ++a) s_xy[s][a][j] += dx[j] * (pop.y(i, a) - y_mean[s][a]);
      }
    }
    for (int s = 0; s < m; ++s) {
      const double div = pop.n_m[s] - 1;
      s_xx[s].scale(1.0 / div);
      for (int a = 0; a < q; ++a)
        for (int j = 0; j < p; ++j) s_xy[s][a][j] /= div;
    }
  }

  // population adjustment vectors for the residual sources
  std::vector<Vector> coef_per_arm(q, Vector(p, 0.0));
  std::vector<std::vector<Vector>> coef_per_cell;
  Vector coef_shared(p, 0.0);
  if (p > 0) {
    switch (source) {
      case Source::y: break;
      case Source::epsilon:
        for (int a = 0; a < q; ++a) {
          SymMatrix gram(p);
          Vector rhs(p, 0.0);
          for (int s = 0; s < m; ++s) {
            const double w = pop.pi[s] * (1.0 - pop.e[s][a]) / pop.e[s][a];
            for (int j = 0; j < p; ++j) {
              rhs[j] += w * s_xy[s][a][j];
              for (int l = j; l < p; ++l) gram.add(j, l, w * s_xx[s](j, l));
            }
          }
          coef_per_arm[a] = solve_spd(gram, rhs);
        }
        om.beta_per_arm = coef_per_arm;
        break;
      case Source::eta: {
        SymMatrix gram(p);
        Vector rhs(p, 0.0);
        for (int s = 0; s < m; ++s) {
          double inv_e_sum = 0.0;
          for (int a = 0; a < q; ++a) {
            const double w = pop.pi[s] / pop.e[s][a];
            inv_e_sum += w;
            for (int j = 0; j < p; ++j) rhs[j] += w * s_xy[s][a][j];
          }
          for (int j = 0; j < p; ++j)
            for (int l = j; l < p; ++l) gram.add(j, l, inv_e_sum * s_xx[s](j, l));
        }
        coef_shared = solve_spd(gram, rhs);
        om.gamma = coef_shared;
        break;
      }
      case Source::mu:
        coef_per_cell.assign(m, std::vector<Vector>(q, Vector(p, 0.0)));
        for (int s = 0; s < m; ++s)
          for (int a = 0; a < q; ++a) coef_per_cell[s][a] = solve_spd(s_xx[s], s_xy[s][a]);
        om.beta_per_cell = coef_per_cell;
        break;
    }
  }

  auto coefficient = [&](int s, int a) -> const Vector& {
    switch (source) {
      case Source::epsilon: return coef_per_arm[a];
      case Source::eta: return coef_shared;
      case Source::mu: return coef_per_cell[s][a];
      default: return coef_shared;  // unused for y
    }
  };

  // residual table and its per-stratum covariance
  Matrix r(n, q);
  for (int i = 0; i < n; ++i) {
    const int s = pop.stratum_of[i];
    for (int a = 0; a < q; ++a) {
      double v = pop.y(i, a);
      if (source != Source::y) {
        v -= y_mean[s][a];
        const Vector& c = coefficient(s, a);
        for (int j = 0; j < p; ++j) v -= (pop.x(i, j) - x_mean[s][j]) * c[j];
      }
      r(i, a) = v;
    }
  }

  om.src_cov.assign(m, SymMatrix(q));
  std::vector<Vector> r_mean(m, Vector(q, 0.0));
  for (int i = 0; i < n; ++i) {
    const int s = pop.stratum_of[i];
    for (int a = 0; a < q; ++a) r_mean[s][a] += r(i, a);
  }
  for (int s = 0; s < m; ++s)
    for (int a = 0; a < q; ++a) r_mean[s][a] /= pop.n_m[s];
  for (int i = 0; i < n; ++i) {
    const int s = pop.stratum_of[i];
    for (int a = 0; a < q; ++a)
      for (int b = a; b < q; ++b)
        om.src_cov[s].add(a, b, (r(i, a) - r_mean[s][a]) * (r(i, b) - r_mean[s][b]));
  }
  for (int s = 0; s < m; ++s) om.src_cov[s].scale(1.0 / (pop.n_m[s] - 1));

  const int f = design.f();
  om.v_n = SymMatrix(f);
  om.s2_tau_weighted = SymMatrix(f);
  om.s2_tau_m.clear();
  const double scale = std::ldexp(1.0, -2 * (design.k() - 1));
  for (int s = 0; s < m; ++s) {
    for (int a = 0; a < q; ++a) {
      const double c = scale * pop.pi[s] * om.src_cov[s](a, a) / pop.e[s][a];
      for (int fi = 0; fi < f; ++fi)
        for (int fj = fi; fj < f; ++fj)
          om.v_n.add(fi, fj, c * design.sign(fi, a) * design.sign(fj, a));
    }
    SymMatrix s2_tau = contrast_sandwich(design, om.src_cov[s]);
    for (int fi = 0; fi < f; ++fi)
      for (int fj = fi; fj < f; ++fj)
        om.s2_tau_weighted.add(fi, fj, pop.pi[s] * s2_tau(fi, fj));
    om.s2_tau_m.push_back(std::move(s2_tau));
  }
  om.v_tilde = SymMatrix(f);
  for (int fi = 0; fi < f; ++fi)
    for (int fj = fi; fj < f; ++fj)
      om.v_tilde.set(fi, fj, om.v_n(fi, fj) - om.s2_tau_weighted(fi, fj));
  return om;
}

SymMatrix stratified_arm_mean_cov(const PotentialPopulation& pop, const OracleMoments& om) {
  const int q = pop.q;
  SymMatrix cov(q);
  for (int s = 0; s < pop.m(); ++s) {
    const double pi2 = pop.pi[s] * pop.pi[s];
    for (int a = 0; a < q; ++a)
      for (int b = a; b < q; ++b) {
        double v = -om.src_cov[s](a, b) / pop.n_m[s];
        if (a == b) v += om.src_cov[s](a, a) / pop.counts[s][a];
        cov.add(a, b, pi2 * v);
      }
  }
  return cov;
}

uint64_t count_assignments(const PotentialPopulation& pop, uint64_t budget) {
  long double log_total = 0.0;
  for (int s = 0; s < pop.m(); ++s) {
    long double lg = std::lgamma(static_cast<long double>(pop.n_m[s]) + 1.0L);
    for (int a = 0; a < pop.q; ++a)
      lg -= std::lgamma(static_cast<long double>(pop.counts[s][a]) + 1.0L);
    log_total += lg;
  }
  if (log_total > std::log(static_cast<long double>(budget)) + 1e-9L) return budget + 1;
  return static_cast<uint64_t>(std::llround(static_cast<double>(std::exp(log_total))));
}

namespace {

// Visits every admissible assignment exactly once: per-stratum blocks cycle
// through the distinct permutations of their arm multiset, odometer-style.
template <typename Callback>
void for_each_assignment(const PotentialPopulation& pop, Callback&& cb) {
  const int m = pop.m();
  std::vector<int> assignment;
  std::vector<std::pair<int, int>> block(m);  // [begin, end) per stratum
  int offset = 0;
  for (int s = 0; s < m; ++s) {
    block[s] = {offset, offset + pop.n_m[s]};
    for (int a = 0; a < pop.q; ++a) assignment.insert(assignment.end(), pop.counts[s][a], a + 1);
    offset += pop.n_m[s];
  }
  for (;;) {
    cb(assignment);
    int s = 0;
    for (; s < m; ++s) {
      if (std::next_permutation(assignment.begin() + block[s].first,
                                assignment.begin() + block[s].second))
        break;
      // wrapped back to the sorted order; carry into the next stratum
    }
    if (s == m) return;
  }
}

}  // namespace

ExactMoments enumerate_exact_stat(const PotentialPopulation& pop,
                                  const std::function<Vector(const std::vector<int>&)>& stat,
                                  int stat_dim, uint64_t budget) {
  const uint64_t count = count_assignments(pop, budget);
  if (count > budget)
    throw ValidationError("exact enumeration would visit more than " + std::to_string(budget) +
                          " assignments; refusing");

  std::vector<long double> sum(stat_dim, 0.0L);
  uint64_t visited = 0;
  for_each_assignment(pop, [&](const std::vector<int>& arms) {
    const Vector v = stat(arms);
    for (int i = 0; i < stat_dim; ++i) sum[i] += v[i];
    ++visited;
  });

  ExactMoments out;
  out.assignment_count = visited;
  out.mean.resize(stat_dim);
  for (int i = 0; i < stat_dim; ++i)
    out.mean[i] = static_cast<double>(sum[i] / static_cast<long double>(visited));

  std::vector<long double> mean_ld(stat_dim);
  for (int i = 0; i < stat_dim; ++i) mean_ld[i] = sum[i] / static_cast<long double>(visited);
  std::vector<long double> acc(static_cast<size_t>(stat_dim) * stat_dim, 0.0L);
  std::vector<long double> dx(stat_dim);
  for_each_assignment(pop, [&](const std::vector<int>& arms) {
    const Vector v = stat(arms);
    for (int i = 0; i < stat_dim; ++i) dx[i] = static_cast<long double>(v[i]) - mean_ld[i];
    for (int i = 0; i < stat_dim; ++i)
      for (int j = i; j < stat_dim; ++j) acc[static_cast<size_t>(i) * stat_dim + j] += dx[i] * dx[j];
  });
  out.cov = SymMatrix(stat_dim);
  for (int i = 0; i < stat_dim; ++i)
    for (int j = i; j < stat_dim; ++j)
      out.cov.set(i, j, static_cast<double>(acc[static_cast<size_t>(i) * stat_dim + j] /
                                            static_cast<long double>(visited)));
  return out;
}

ExactMoments enumerate_exact(const PotentialPopulation& pop, const FactorialDesign& design,
                             Method method, uint64_t budget) {
  return enumerate_exact_stat(
      pop,
      [&](const std::vector<int>& arms) {
        const ObservedDataset data = observe(pop, design, arms);
        return estimate(summarize(data), design, method).tau_hat;
      },
      design.f(), budget);
}

ExactMoments enumerate_arm_means(const PotentialPopulation& pop, const FactorialDesign& design,
                                 uint64_t budget) {
  (void)design;
  const int q = pop.q;
  return enumerate_exact_stat(
      pop,
      [&](const std::vector<int>& arms) {
        std::vector<Vector> cell_sum(pop.m(), Vector(q, 0.0));
        for (int i = 0; i < pop.n(); ++i)
          cell_sum[pop.stratum_of[i]][arms[i] - 1] += pop.y(i, arms[i] - 1);
        Vector means(q, 0.0);
        for (int s = 0; s < pop.m(); ++s)
          for (int a = 0; a < q; ++a)
            means[a] += pop.pi[s] * cell_sum[s][a] / pop.counts[s][a];
        return means;
      },
      q, budget);
}

namespace {

int resolve_threads(int requested, int reps) {
  int t = requested;
  if (t <= 0) {
    if (const char* env = std::getenv("STRATFACT_THREADS")) t = std::atoi(env);
  }
  if (t <= 0) t = static_cast<int>(std::thread::hardware_concurrency());
  if (t < 1) t = 1;
  return std::min(t, reps);
}

struct MethodDraws {
  Method method = Method::unadj;
  bool applicable = true;
  std::string reason;
  Vector tau;      // reps x F
  Vector length;   // reps x F
  std::vector<uint8_t> cover;  // reps x F
  Vector area;     // reps (K = 2 only)
};

}  // namespace

MetricsTable run_monte_carlo(const PotentialPopulation& pop, const FactorialDesign& design,
                             const std::vector<Method>& methods, int reps, double alpha,
                             uint64_t master_seed, const MonteCarloOptions& options) {
  if (reps < 1) throw ValidationError("replication count must be at least 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must be in (0,1)");
  const int f = design.f();
  const bool with_area = design.k() == 2;

  MetricsTable table;
  table.case_id = pop.case_id;
  table.reps = reps;
  table.alpha = alpha;
  table.master_seed = master_seed;
  table.k = design.k();
  table.f = f;
  table.n = pop.n();
  table.m = pop.m();
  table.true_tau = pop.tau;
  table.effect_labels = design.effect_labels();

  int min_count = pop.n_m.empty() ? 0 : pop.counts[0][0];
  for (int s = 0; s < pop.m(); ++s)
    for (int a = 0; a < pop.q; ++a) min_count = std::min(min_count, pop.counts[s][a]);

  std::vector<MethodDraws> draws(methods.size());
  for (size_t i = 0; i < methods.size(); ++i) {
    draws[i].method = methods[i];
    const int needed = methods[i] == Method::inter ? pop.p + 2 : 2;
    if (min_count < needed) {
      draws[i].applicable = false;
      draws[i].reason = method_name(methods[i]) + " requires n_[m]q >= " +
                        (methods[i] == Method::inter ? "p+2" : "2") + "; smallest cell has " +
                        std::to_string(min_count) + " (p = " + std::to_string(pop.p) + ")";
      continue;
    }
    draws[i].tau.assign(static_cast<size_t>(reps) * f, 0.0);
    draws[i].length.assign(static_cast<size_t>(reps) * f, 0.0);
    draws[i].cover.assign(static_cast<size_t>(reps) * f, 0);
    if (with_area) draws[i].area.assign(reps, 0.0);
  }

  auto run_range = [&](int lo, int hi) {
    for (int r = lo; r < hi; ++r) {
      const std::vector<int> arms = assign_treatments(plan_from(pop, hash64(master_seed, r)));
      const ObservedDataset data = observe(pop, design, arms);
      const StratumSummaries summ = summarize(data);
      for (auto& d : draws) {
        if (!d.applicable) continue;
        const EffectEstimate est = estimate(summ, design, d.method);
        const ConfidenceIntervals ci = wald_intervals(est, alpha);
        for (int e = 0; e < f; ++e) {
          d.tau[static_cast<size_t>(r) * f + e] = est.tau_hat[e];
          d.length[static_cast<size_t>(r) * f + e] = ci.intervals[e].hi - ci.intervals[e].lo;
          d.cover[static_cast<size_t>(r) * f + e] =
              ci.intervals[e].lo <= pop.tau[e] && pop.tau[e] <= ci.intervals[e].hi;
        }
        if (with_area) d.area[r] = *wald_region_subset(est, {0, 1}, alpha).area;
      }
    }
  };

  const int threads = resolve_threads(options.threads, reps);
  if (threads == 1) {
    run_range(0, reps);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    const int chunk = (reps + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const int lo = t * chunk;
      const int hi = std::min(reps, lo + chunk);
      if (lo >= hi) continue;
      pool.emplace_back([&, t, lo, hi] {
        try {
          run_range(lo, hi);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (const auto& err : errors)
      if (err) std::rethrow_exception(err);
  }

  // fixed-order aggregation over the replication index
  const MethodDraws* unadj = nullptr;
  for (const auto& d : draws)
    if (d.applicable && d.method == Method::unadj) unadj = &d;

  for (auto& d : draws) {
    MethodMetrics mm;
    mm.method = d.method;
    mm.applicable = d.applicable;
    mm.reason = d.reason;
    if (d.applicable) {
      mm.bias.assign(f, 0.0);
      mm.sd.assign(f, 0.0);
      mm.rmse.assign(f, 0.0);
      mm.cp.assign(f, 0.0);
      mm.ci_length.assign(f, 0.0);
      for (int e = 0; e < f; ++e) {
        double mean = 0.0;
        for (int r = 0; r < reps; ++r) mean += d.tau[static_cast<size_t>(r) * f + e];
        mean /= reps;
        double var = 0.0, mse = 0.0, covers = 0.0, len = 0.0;
        for (int r = 0; r < reps; ++r) {
          const double t = d.tau[static_cast<size_t>(r) * f + e];
          var += (t - mean) * (t - mean);
          mse += (t - pop.tau[e]) * (t - pop.tau[e]);
          covers += d.cover[static_cast<size_t>(r) * f + e];
          len += d.length[static_cast<size_t>(r) * f + e];
        }
        mm.bias[e] = mean - pop.tau[e];
        mm.sd[e] = std::sqrt(var / reps);
        mm.rmse[e] = std::sqrt(mse / reps);
        mm.cp[e] = covers / reps;
        mm.ci_length[e] = len / reps;
      }
      mm.emp_cov = SymMatrix(f);
      {
        Vector mean(f, 0.0);
        for (int e = 0; e < f; ++e) {
          for (int r = 0; r < reps; ++r) mean[e] += d.tau[static_cast<size_t>(r) * f + e];
          mean[e] /= reps;
        }
        for (int e1 = 0; e1 < f; ++e1)
          for (int e2 = e1; e2 < f; ++e2) {
            double acc = 0.0;
            for (int r = 0; r < reps; ++r)
              acc += (d.tau[static_cast<size_t>(r) * f + e1] - mean[e1]) *
                     (d.tau[static_cast<size_t>(r) * f + e2] - mean[e2]);
            mm.emp_cov.set(e1, e2, acc / reps);
          }
      }
      if (with_area) {
        double area = 0.0;
        for (int r = 0; r < reps; ++r) area += d.area[r];
        mm.region_area = area / reps;
      }
      if (unadj) {
        mm.rmse_ratio.assign(f, 0.0);
        mm.length_ratio.assign(f, 0.0);
        for (int e = 0; e < f; ++e) {
          double u_mse = 0.0, u_len = 0.0;
          for (int r = 0; r < reps; ++r) {
            const double t = unadj->tau[static_cast<size_t>(r) * f + e];
            u_mse += (t - pop.tau[e]) * (t - pop.tau[e]);
            u_len += unadj->length[static_cast<size_t>(r) * f + e];
          }
          mm.rmse_ratio[e] = mm.rmse[e] / std::sqrt(u_mse / reps);
          mm.length_ratio[e] = mm.ci_length[e] / (u_len / reps);
        }
        if (with_area && unadj->applicable) {
          double u_area = 0.0;
          for (int r = 0; r < reps; ++r) u_area += unadj->area[r];
          mm.area_ratio = *mm.region_area / (u_area / reps);
        }
      }
    }
    table.methods.push_back(std::move(mm));
  }

  if (options.draws) {
    std::ostream& os = *options.draws;
    os << "rep,method";
    for (int e = 0; e < f; ++e) os << ",tau_" << e + 1;
    os << "\n";
    for (int r = 0; r < reps; ++r)
      for (const auto& d : draws) {
        if (!d.applicable) continue;
        os << r + 1 << "," << method_name(d.method);
        for (int e = 0; e < f; ++e) os << "," << d.tau[static_cast<size_t>(r) * f + e];
        os << "\n";
      }
  }
  return table;
}

}  // namespace stratfact
