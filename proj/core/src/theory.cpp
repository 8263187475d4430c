#include "floe/theory.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "floe/io.hpp"
#include "floe/rng.hpp"

namespace floe {

namespace {

constexpr double kSqrt2 = 1.4142135623730951;
constexpr double kInvSqrt2Pi = 0.3989422804014327;

void check_eta(double eta) {
  if (!(eta > 0.0) || !(eta <= 1.0))
    throw std::runtime_error("eta must be in (0, 1]");
}

void check_shifted_exp(double lambda, double c) {
  if (!(lambda > 0.0) || !(c > 0.0))
    throw std::runtime_error("shifted exponential: lambda and c must be positive");
}

// Rational initializer for the normal quantile (Acklam's coefficients).
double quantile_seed(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;
  if (p < p_low) {
    double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  double q = p - 0.5;
  double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace

double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

double norm_quantile(double p) {
  if (!(p > 0.0) || !(p < 1.0))
    throw std::runtime_error("norm_quantile: p must be in (0, 1)");
  if (p > 0.5) return -norm_quantile(1.0 - p);
  double x = quantile_seed(p);
  // Two Newton polish steps against the erfc-based CDF. For p <= 0.5 the
  // CDF value is a small positive number computed without cancellation.
  for (int i = 0; i < 2; ++i) {
    double err = normal_cdf(x) - p;
    double g = normal_pdf(x);
    if (g <= 0.0) break;
    x -= err / g;
  }
  return x;
}

double gaussian_threshold(double sigma, double eta) {
  if (!(sigma > 0.0)) throw std::runtime_error("sigma must be positive");
  check_eta(eta);
  if (eta == 1.0) return 0.0;
  return sigma * norm_quantile(1.0 - eta / 2.0);
}

double gauss_boundary_term(double eta) {
  check_eta(eta);
  if (eta == 1.0) return 0.0;
  double z = norm_quantile(1.0 - eta / 2.0);
  return 2.0 * z * normal_pdf(z);
}

double gauss_removed_energy(double eta) {
  check_eta(eta);
  return 1.0 - eta - gauss_boundary_term(eta);
}

double neglected_terms_bound(double eta) {
  check_eta(eta);
  return (1.0 - eta) * (5.0 * std::exp(-4.0) - std::log1p(-eta));
}

double gap_lower_bound(double eta) {
  return gauss_boundary_term(eta) - neglected_terms_bound(eta);
}

double shifted_exp_second_moment(double lambda, double c) {
  check_shifted_exp(lambda, c);
  return 2.0 / (lambda * lambda) - 2.0 * c / lambda + c * c;
}

double shifted_exp_threshold(double lambda, double c, double eta) {
  check_shifted_exp(lambda, c);
  check_eta(eta);
  double p = lambda * c;
  if (eta >= std::exp(-2.0 * p)) {
    // Two-sided regime t <= c; written as c*q so the normalized form
    // q = t/c round-trips exactly.
    double q = std::asinh(0.5 * (1.0 - eta) * std::exp(p)) / p;
    return c * q;
  }
  return -std::log(eta) / lambda - c;
}

double shifted_exp_removed_moment(double lambda, double c, double t) {
  check_shifted_exp(lambda, c);
  if (!(t >= 0.0)) throw std::runtime_error("threshold must be non-negative");
  double l2 = 2.0 / (lambda * lambda);
  double upper = std::exp(-lambda * (c + t)) * (l2 + 2.0 * t / lambda + t * t);
  if (t <= c)
    return std::exp(lambda * (t - c)) * (l2 - 2.0 * t / lambda + t * t) - upper;
  return shifted_exp_second_moment(lambda, c) - upper;
}

double shifted_exp_removed_energy(double eta, double p) {
  if (!(p > 0.0)) throw std::runtime_error("p must be positive");
  check_eta(eta);
  if (eta < std::exp(-2.0 * p) * (1.0 - 1e-12))
    throw std::runtime_error(
        "removed energy: eta below the two-sided regime e^{-2p}");
  double q = std::asinh(0.5 * (1.0 - eta) * std::exp(p)) / p;
  double p2 = 2.0 / (p * p);
  double num = std::exp(p * (q - 1.0)) * (p2 - 2.0 * q / p + q * q) -
               std::exp(-p * (1.0 + q)) * (p2 + 2.0 * q / p + q * q);
  double den = p2 - 2.0 / p + 1.0;
  return num / den;
}

double exp_tail_ratio(double p) {
  if (!(p > 0.0)) throw std::runtime_error("p must be positive");
  return std::exp(-2.0 * p) * (2.0 + 2.0 * p + p * p) / (2.0 - 2.0 * p + p * p);
}

double shifted_exp_threshold_approx(double lambda, double c, double eta) {
  check_shifted_exp(lambda, c);
  check_eta(eta);
  return c + std::log1p(-eta) / lambda;
}

double shifted_exp_removed_moment_approx(double lambda, double c, double eta) {
  double t = shifted_exp_threshold(lambda, c, eta);
  return (1.0 - eta) *
         (2.0 / (lambda * lambda) - 2.0 * t / lambda + t * t);
}

QghBounds qgh_bounds(double eta, double p) {
  if (!(p >= 2.0)) throw std::runtime_error("qgh_bounds: requires p >= 2");
  check_eta(eta);
  double edge = std::exp(-2.0 * p);
  if (eta < edge * (1.0 - 1e-12) || eta > 0.5)
    throw std::runtime_error("qgh_bounds: eta outside [e^{-2p}, 0.5]");
  QghBounds r;
  r.q = std::asinh(0.5 * (1.0 - eta) * std::exp(p)) / p;
  r.g = p * (r.q - 1.0);
  r.h = p * (r.q + 1.0);
  r.at_edge = eta <= edge * (1.0 + 1e-12);
  double lo = 1.0 + std::log1p(-eta) / p;
  bool upper_ok = r.at_edge ? (r.q <= 1.0 + 1e-12 && r.g <= 1e-12 &&
                               r.h <= 2.0 * p + 1e-12)
                            : (r.q < 1.0 && r.g < 0.0 && r.h < 2.0 * p);
  r.ok = lo > 0.0 && lo < r.q && std::log1p(-eta) < r.g &&
         2.0 * p + std::log1p(-eta) < r.h && upper_ok;
  return r;
}

namespace {

struct Sums {
  double s = 0.0;
  double s2 = 0.0;
  std::uint64_t n = 0;

  void add(double v) {
    s += v;
    s2 += v * v;
    ++n;
  }
};

McEstimate to_estimate(const Sums &t, double scale) {
  McEstimate e;
  e.n = t.n;
  if (t.n == 0) return e;
  double mean = t.s / static_cast<double>(t.n);
  double var =
      std::max(0.0, t.s2 / static_cast<double>(t.n) - mean * mean);
  e.mean = mean * scale;
  e.se = std::sqrt(var / static_cast<double>(t.n)) * scale;
  return e;
}

// Shards `samples` over the fixed logical shards; fn(rng, count, out) fills
// per-shard sums which merge in shard order, so the result is identical for
// any worker count.
template <typename Fn>
Sums mc_sharded(std::uint64_t samples, std::uint64_t seed, unsigned workers,
                Fn fn) {
  std::vector<Sums> per(kLogicalShards);
  parallel_shards(kLogicalShards, workers, [&](std::uint64_t s) {
    std::uint64_t lo = samples * s / kLogicalShards;
    std::uint64_t hi = samples * (s + 1) / kLogicalShards;
    Rng rng(seed, s);
    fn(rng, hi - lo, per[s]);
  });
  Sums tot;
  for (const Sums &p : per) {
    tot.s += p.s;
    tot.s2 += p.s2;
    tot.n += p.n;
  }
  return tot;
}

}  // namespace

McEstimate mc_gauss_removed_energy(double eta, std::uint64_t samples,
                                   std::uint64_t seed, unsigned workers) {
  double t = gaussian_threshold(1.0, eta);
  Sums sums = mc_sharded(samples, seed, workers,
                         [&](Rng &rng, std::uint64_t n, Sums &out) {
                           for (std::uint64_t i = 0; i < n; ++i) {
                             double a = rng.normal();
                             out.add(std::fabs(a) < t ? a * a : 0.0);
                           }
                         });
  return to_estimate(sums, 1.0);
}

McEstimate mc_shifted_exp_removed_energy(double eta, double lambda, double c,
                                         std::uint64_t samples,
                                         std::uint64_t seed, unsigned workers) {
  double t = shifted_exp_threshold(lambda, c, eta);
  double m2 = shifted_exp_second_moment(lambda, c);
  Sums sums = mc_sharded(samples, seed, workers,
                         [&](Rng &rng, std::uint64_t n, Sums &out) {
                           for (std::uint64_t i = 0; i < n; ++i) {
                             double a = rng.exponential(lambda) - c;
                             out.add(std::fabs(a) < t ? a * a : 0.0);
                           }
                         });
  return to_estimate(sums, 1.0 / m2);
}

McEstimate mc_keep_fraction(double lambda, double c, double eta,
                            std::uint64_t samples, std::uint64_t seed,
                            unsigned workers) {
  double t = shifted_exp_threshold(lambda, c, eta);
  Sums sums = mc_sharded(samples, seed, workers,
                         [&](Rng &rng, std::uint64_t n, Sums &out) {
                           for (std::uint64_t i = 0; i < n; ++i) {
                             double a = rng.exponential(lambda) - c;
                             out.add(std::fabs(a) >= t ? 1.0 : 0.0);
                           }
                         });
  return to_estimate(sums, 1.0);
}

double LossReport::max_se() const {
  return std::max(se_down, std::max(se_up, se_gate));
}

LossReport mc_losses(double sigma_up, double lambda, double c, double eta,
                     std::uint64_t samples, std::uint64_t seed,
                     unsigned workers) {
  if (!(sigma_up > 0.0)) throw std::runtime_error("sigma_up must be positive");
  check_shifted_exp(lambda, c);
  check_eta(eta);
  if (samples == 0) throw std::runtime_error("mc_losses: samples must be positive");

  const double t_up = gaussian_threshold(sigma_up, eta);
  const double t_gate = shifted_exp_threshold(lambda, c, eta);

  // Pass 1: per-shard sample generation. The product magnitudes |d| are kept
  // so the empirical quantile threshold can be taken over the whole pool;
  // the closed-form-threshold losses accumulate immediately.
  struct ShardOut {
    Sums up, gate, silu_sq, gate_marginal;
    std::vector<double> absd;
  };
  std::vector<ShardOut> per(kLogicalShards);
  parallel_shards(kLogicalShards, workers, [&](std::uint64_t s) {
    std::uint64_t lo = samples * s / kLogicalShards;
    std::uint64_t hi = samples * (s + 1) / kLogicalShards;
    Rng rng(seed, s);
    ShardOut &out = per[s];
    out.absd.reserve(hi - lo);
    for (std::uint64_t i = lo; i < hi; ++i) {
      double g = rng.exponential(lambda) - c;
      double u = sigma_up * rng.normal();
      double sg = g / (1.0 + std::exp(-g));
      double d = sg * u;
      double d2 = d * d;
      out.absd.push_back(std::fabs(d));
      out.up.add(std::fabs(u) < t_up ? d2 : 0.0);
      out.gate.add(std::fabs(g) < t_gate ? d2 : 0.0);
      out.silu_sq.add(sg * sg);
      out.gate_marginal.add(std::fabs(g) < t_gate ? g * g : 0.0);
    }
  });

  std::vector<double> absd;
  absd.reserve(samples);
  Sums up, gate, silu_sq, gate_marginal;
  for (ShardOut &o : per) {
    absd.insert(absd.end(), o.absd.begin(), o.absd.end());
    up.s += o.up.s; up.s2 += o.up.s2; up.n += o.up.n;
    gate.s += o.gate.s; gate.s2 += o.gate.s2; gate.n += o.gate.n;
    silu_sq.s += o.silu_sq.s; silu_sq.s2 += o.silu_sq.s2; silu_sq.n += o.silu_sq.n;
    gate_marginal.s += o.gate_marginal.s;
    gate_marginal.s2 += o.gate_marginal.s2;
    gate_marginal.n += o.gate_marginal.n;
    o.absd.clear();
    o.absd.shrink_to_fit();
  }

  // Empirical quantile of |d| at prune fraction 1-eta, matching the
  // calibration rule: rank ceil(k*N), k=0 -> threshold 0.
  double t_down = 0.0;
  double k = 1.0 - eta;
  if (k > 0.0) {
    std::vector<double> sorted = absd;
    std::sort(sorted.begin(), sorted.end());
    std::uint64_t rank = static_cast<std::uint64_t>(
        std::ceil(k * static_cast<double>(sorted.size())));
    if (rank == 0) rank = 1;
    if (rank > sorted.size()) rank = sorted.size();
    t_down = sorted[rank - 1];
  }

  // Pass 2: removed energy under the |d| mask, in the same pooled order.
  Sums down;
  for (double ad : absd) down.add(ad < t_down ? ad * ad : 0.0);

  LossReport r;
  McEstimate e_down = to_estimate(down, 1.0);
  McEstimate e_up = to_estimate(up, 1.0);
  McEstimate e_gate = to_estimate(gate, 1.0);
  McEstimate e_silu = to_estimate(silu_sq, 1.0);
  McEstimate e_marg = to_estimate(gate_marginal, 1.0);
  r.l_down = e_down.mean;
  r.se_down = e_down.se;
  r.l_up = e_up.mean;
  r.se_up = e_up.se;
  r.l_gate = e_gate.mean;
  r.se_gate = e_gate.se;
  r.mean_silu_gate_sq = e_silu.mean;
  r.se_silu_gate_sq = e_silu.se;
  r.gate_marginal_removed = e_marg.mean;
  r.se_gate_marginal = e_marg.se;
  r.n = down.n;
  return r;
}

ProjectionCheck projection_energy_check(std::uint32_t m, std::uint32_t n,
                                        double sigma_w, double sigma_x,
                                        std::uint64_t trials,
                                        std::uint64_t seed, unsigned workers) {
  if (m == 0 || n == 0) throw std::runtime_error("projection: empty dims");
  if (!(sigma_w > 0.0) || !(sigma_x > 0.0))
    throw std::runtime_error("projection: sigmas must be positive");

  // Fixed non-axis-aligned unit vector.
  std::vector<double> x_unit(m);
  double norm = 0.0;
  for (std::uint32_t i = 0; i < m; ++i) {
    x_unit[i] = static_cast<double>(i + 1);
    norm += x_unit[i] * x_unit[i];
  }
  norm = std::sqrt(norm);
  for (double &v : x_unit) v /= norm;

  auto energy = [&](Rng &rng, const std::vector<double> &x) {
    double total = 0.0;
    for (std::uint32_t j = 0; j < n; ++j) {
      double dot = 0.0;
      for (std::uint32_t i = 0; i < m; ++i)
        dot += x[i] * (sigma_w * rng.normal());
      total += dot * dot;
    }
    return total;
  };

  ProjectionCheck out;
  Sums su = mc_sharded(trials, seed, workers,
                       [&](Rng &rng, std::uint64_t cnt, Sums &acc) {
                         for (std::uint64_t i = 0; i < cnt; ++i)
                           acc.add(energy(rng, x_unit));
                       });
  Sums si = mc_sharded(trials, seed + 1, workers,
                       [&](Rng &rng, std::uint64_t cnt, Sums &acc) {
                         std::vector<double> x(m);
                         for (std::uint64_t i = 0; i < cnt; ++i) {
                           for (double &v : x) v = sigma_x * rng.normal();
                           acc.add(energy(rng, x));
                         }
                       });
  out.unit_x = to_estimate(su, 1.0);
  out.iid_x = to_estimate(si, 1.0);
  out.expected_unit = static_cast<double>(n) * sigma_w * sigma_w;
  out.expected_iid =
      static_cast<double>(n) * m * sigma_w * sigma_w * sigma_x * sigma_x;
  return out;
}

McEstimate removed_cross_check(double t, std::uint64_t samples,
                               std::uint64_t seed, unsigned workers) {
  if (!(t > 0.0)) throw std::runtime_error("cross check: t must be positive");
  Sums sums = mc_sharded(samples, seed, workers,
                         [&](Rng &rng, std::uint64_t n, Sums &out) {
                           for (std::uint64_t i = 0; i < n; ++i) {
                             double a = rng.normal();
                             double b = rng.normal();
                             double removed = std::fabs(a) < t ? a : 0.0;
                             out.add(removed * b);
                           }
                         });
  return to_estimate(sums, 1.0);
}

std::vector<double> default_eta_grid() {
  return {std::exp(-4.0), 0.05, 0.1, 0.2, 0.3, 0.5};
}

std::vector<double> default_p_grid() { return {2.0, 3.08, 4.0, 8.0, 11.0}; }

std::string fg_table_csv(const std::vector<double> &etas,
                         const std::vector<double> &ps) {
  Csv csv;
  csv.header = {"eta", "p", "F", "G", "gap"};
  for (double eta : etas) {
    double f = gauss_removed_energy(eta);
    for (double p : ps) {
      double g = shifted_exp_removed_energy(eta, p);
      csv.rows.push_back({format_double(eta), format_double(p),
                          format_double(f), format_double(g),
                          format_double(g - f)});
    }
  }
  return csv.serialize();
}

std::string loss_table_csv(double sigma_up, double lambda, double c,
                           const std::vector<double> &etas,
                           std::uint64_t samples, std::uint64_t seed,
                           unsigned workers) {
  Csv csv;
  csv.header = {"eta", "L_down", "L_up", "L_gate", "se"};
  for (double eta : etas) {
    LossReport r = mc_losses(sigma_up, lambda, c, eta, samples, seed, workers);
    csv.rows.push_back({format_double(eta), format_double(r.l_down),
                        format_double(r.l_up), format_double(r.l_gate),
                        format_double(r.max_se())});
  }
  return csv.serialize();
}

}  // namespace floe
