#ifndef FLOE_THEORY_HPP
#define FLOE_THEORY_HPP

#include <cstdint>
#include <string>
#include <vector>

// Why thresholding the up activation beats thresholding the gate activation:
// closed-form removed-energy fractions for the two activation models
// (Gaussian up, shifted-exponential gate), the auxiliary bounds that order
// them, and seeded Monte-Carlo estimators that check every closed form and
// the end-to-end loss ordering. All estimators shard their sample streams
// over fixed logical shards, so results are identical for any worker count.

namespace floe {

// Standard normal density and quantile. The quantile is a rational
// initializer polished by Newton steps against an erfc-based CDF; the
// result satisfies |Phi(out) - p| <= 1e-9.
double normal_pdf(double x);
double normal_cdf(double x);
double norm_quantile(double p);

// Magnitude threshold keeping fraction eta of a N(0, sigma^2) variable:
// t = sigma * Phi^{-1}(1 - eta/2).
double gaussian_threshold(double sigma, double eta);

// Fraction of second moment removed by zeroing the (1-eta) smallest-
// magnitude mass of a centered Gaussian (sigma cancels).
double gauss_removed_energy(double eta);

// The boundary term 2*z*pdf(z) at z = Phi^{-1}(1 - eta/2); equals
// (1 - eta) - gauss_removed_energy(eta).
double gauss_boundary_term(double eta);

// Upper bound on the neglected pieces in the gap analysis:
// (1-eta)*(5*e^{-4} - ln(1-eta)). gap_lower_bound = boundary term minus
// this; it is positive on eta in [e^{-4}, 0.5], which is what forces the
// gate-side removed energy above the up-side one.
double neglected_terms_bound(double eta);
double gap_lower_bound(double eta);

// Shifted-exponential magnitude model: a = x - c with x ~ Exp(lambda).
// p = lambda*c throughout.
double shifted_exp_second_moment(double lambda, double c);  // E[a^2]
// Threshold keeping fraction eta: two branches, continuous at
// eta = e^{-2*lambda*c} where t = c.
double shifted_exp_threshold(double lambda, double c, double eta);
// E[a^2 * 1{|a| < t}] for t >= 0.
double shifted_exp_removed_moment(double lambda, double c, double t);
// Removed-energy fraction at keep fraction eta, in normalized q = t/c
// units; requires the single-branch regime eta >= e^{-2p}.
double shifted_exp_removed_energy(double eta, double p);

// e^{-2p} * (2 + 2p + p^2) / (2 - 2p + p^2): the removed-moment ratio at
// the branch point t = c; strictly decreasing in p, equals 5e^{-4} at p=2.
double exp_tail_ratio(double p);

// Large-p approximations: t ~= c + ln(1-eta)/lambda, and removed moment
// ~= (1-eta) * (2/l^2 - 2t/l + t^2) at the exact threshold.
double shifted_exp_threshold_approx(double lambda, double c, double eta);
double shifted_exp_removed_moment_approx(double lambda, double c, double eta);

// Normalized threshold q = t/c and the exponents g = p(q-1), h = p(q+1),
// with the bracketing bounds that hold for p >= 2, eta in [e^{-2p}, 0.5]:
// 0 < 1 + ln(1-eta)/p < q < 1, ln(1-eta) < g < 0,
// 2p + ln(1-eta) < h < 2p. At eta = e^{-2p} exactly, q = 1 and the strict
// upper bounds become equalities; at_edge reports that case and the checks
// relax to non-strict there.
struct QghBounds {
  double q = 0.0;
  double g = 0.0;
  double h = 0.0;
  bool at_edge = false;
  bool ok = false;
};
QghBounds qgh_bounds(double eta, double p);

struct McEstimate {
  double mean = 0.0;
  double se = 0.0;
  std::uint64_t n = 0;
};

// Monte-Carlo oracles for the closed forms above. All normalize the same
// way as their closed-form counterparts.
McEstimate mc_gauss_removed_energy(double eta, std::uint64_t samples,
                                   std::uint64_t seed, unsigned workers = 1);
McEstimate mc_shifted_exp_removed_energy(double eta, double lambda, double c,
                                         std::uint64_t samples,
                                         std::uint64_t seed,
                                         unsigned workers = 1);
// Empirical P(|a| >= t_eta) for the shifted-exponential; should equal eta.
McEstimate mc_keep_fraction(double lambda, double c, double eta,
                            std::uint64_t samples, std::uint64_t seed,
                            unsigned workers = 1);

// End-to-end masking losses on the product channel d = silu(g) * u with
// u ~ N(0, sigma_up^2) and g = x - c, x ~ Exp(lambda), independent. Each
// loss is the removed energy E[(d - S(d))^2] when masking at equal kept
// fraction eta on a different statistic: |d| itself (empirical quantile),
// |u| (Gaussian closed-form threshold), |g| (shifted-exponential closed-form
// threshold). The projection factor common to all three is divided out.
struct LossReport {
  double l_down = 0.0, l_up = 0.0, l_gate = 0.0;
  double se_down = 0.0, se_up = 0.0, se_gate = 0.0;
  // Side estimates for consistency checks against the closed forms.
  double mean_silu_gate_sq = 0.0;  // E[silu(g)^2]
  double se_silu_gate_sq = 0.0;
  double gate_marginal_removed = 0.0;  // E[g^2 1{|g| < t_gate}]
  double se_gate_marginal = 0.0;
  std::uint64_t n = 0;

  double max_se() const;
};
LossReport mc_losses(double sigma_up, double lambda, double c, double eta,
                     std::uint64_t samples, std::uint64_t seed,
                     unsigned workers = 1);

// Random-projection energy identity: for W with iid N(0, sigma_w^2) entries,
// E||xW||^2 = n * sigma_w^2 * ||x||^2 for fixed x, and n*m*sigma_w^2*sigma_x^2
// for iid zero-mean x. Estimated over fresh W draws.
struct ProjectionCheck {
  McEstimate unit_x;
  McEstimate iid_x;
  double expected_unit = 0.0;
  double expected_iid = 0.0;
};
ProjectionCheck projection_energy_check(std::uint32_t m, std::uint32_t n,
                                        double sigma_w, double sigma_x,
                                        std::uint64_t trials,
                                        std::uint64_t seed,
                                        unsigned workers = 1);

// E[(a - S_t(a)) * b] for independent a, b ~ N(0,1): the removed part of a
// is uncorrelated with anything independent, so the mean vanishes.
McEstimate removed_cross_check(double t, std::uint64_t samples,
                               std::uint64_t seed, unsigned workers = 1);

// CSV tables for plotting. fg: eta,p,F,G,gap rows over a grid (closed
// forms only). losses: eta,L_down,L_up,L_gate,se rows (se = max of the
// three loss standard errors).
std::vector<double> default_eta_grid();  // {e^-4, 0.05, 0.1, 0.2, 0.3, 0.5}
std::vector<double> default_p_grid();    // {2, 3.08, 4, 8, 11}
std::string fg_table_csv(const std::vector<double> &etas,
                         const std::vector<double> &ps);
std::string loss_table_csv(double sigma_up, double lambda, double c,
                           const std::vector<double> &etas,
                           std::uint64_t samples, std::uint64_t seed,
                           unsigned workers = 1);

}  // namespace floe

#endif
