#include "cohortcal/identifiability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>

#include "cohortcal/errors.hpp"

namespace cohortcal {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double negate_safe(const Objective& log_post, const Eigen::VectorXd& x) {
  try {
    const double v = log_post(x);
    return std::isfinite(v) ? -v : kInf;
  } catch (const SolveError&) {
    return kInf;
  }
}

Eigen::MatrixXd sub_matrix(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& idx) {
  const auto n = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b) out(a, b) = m(idx[a], idx[b]);
  return out;
}

}  // namespace

std::string_view to_string(Identifiability c) {
  switch (c) {
    case Identifiability::identifiable: return "identifiable";
    case Identifiability::practically_non_identifiable: return "practically-non-identifiable";
    case Identifiability::structurally_non_identifiable: return "structurally-non-identifiable";
  }
  return "";
}

long ProfileCurve::total_iterations() const { return std::accumulate(iterations.begin(), iterations.end(), 0L); }

bool ProfileCurve::all_converged() const {
  return std::all_of(converged.begin(), converged.end(), [](bool b) { return b; });
}

double chi_squared_quantile(double p, double df) {
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(df), p);
}

ProfileCurve profile_posterior(const Objective& log_post, const Eigen::VectorXd& theta_map, Eigen::Index i,
                               const ProfileOptions& opt) {
  const Eigen::Index d = theta_map.size();
  if (i < 0 || i >= d) throw ValidationError("profile component out of range");
  if (opt.grid_points < 3 || opt.grid_points % 2 == 0) throw ValidationError("profile grid size must be odd and >= 3");
  if (!(opt.half_width_sd > 0)) throw ValidationError("profile neighbourhood must be positive");
  std::vector<bool> frozen = opt.frozen.empty() ? std::vector<bool>(static_cast<std::size_t>(d), false) : opt.frozen;
  if (static_cast<Eigen::Index>(frozen.size()) != d) throw ValidationError("freeze mask has the wrong length");
  if (frozen[static_cast<std::size_t>(i)]) throw ValidationError("cannot profile a frozen component");

  std::vector<Eigen::Index> free;  // free components, profiled one first
  free.push_back(i);
  for (Eigen::Index k = 0; k < d; ++k)
    if (k != i && !frozen[static_cast<std::size_t>(k)]) free.push_back(k);
  const auto nf = static_cast<Eigen::Index>(free.size());

  auto assemble = [&](const Eigen::VectorXd& u) {
    Eigen::VectorXd x = theta_map;
    for (Eigen::Index k = 0; k < nf; ++k) x[free[k]] = u[k];
    return x;
  };
  const Objective f = [&](const Eigen::VectorXd& u) { return negate_safe(log_post, assemble(u)); };
  Eigen::VectorXd u_map(nf);
  for (Eigen::Index k = 0; k < nf; ++k) u_map[k] = theta_map[free[k]];
  const double f_map = f(u_map);
  if (!std::isfinite(f_map)) throw ValidationError("log posterior is not finite at the MAP");

  Eigen::MatrixXd H;
  if (opt.hessian) {
    if (opt.hessian->rows() != d || opt.hessian->cols() != d) throw ValidationError("MAP Hessian has the wrong shape");
    H = sub_matrix(*opt.hessian, free);
  } else {
    H = richardson_hessian(f, u_map, opt.hessian_options);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(H);
  if (llt.info() != Eigen::Success)
    throw ValidationError("Hessian of the log posterior at the MAP is not negative definite");
  const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(nf, nf));

  ProfileCurve curve;
  curve.component = i;
  curve.map_value = theta_map[i];
  curve.sd = std::sqrt(cov(0, 0));
  curve.half_width_sd = opt.half_width_sd;
  const int G = opt.grid_points;
  const int c = (G - 1) / 2;
  curve.t.resize(static_cast<std::size_t>(G));
  curve.pd.assign(static_cast<std::size_t>(G), 0.0);
  curve.iterations.assign(static_cast<std::size_t>(G), 0);
  curve.converged.assign(static_cast<std::size_t>(G), true);
  for (int j = 0; j < G; ++j)
    curve.t[static_cast<std::size_t>(j)] = curve.map_value + curve.sd * opt.half_width_sd * (j - c) / c;

  const Eigen::Index nn = nf - 1;  // nuisance dimension
  const Eigen::VectorXd g_map = central_gradient(f, u_map, opt.corrector.gradient_step);
  for (int side : {1, -1}) {
    Eigen::VectorXd u_prev = u_map;
    Eigen::VectorXd g_prev = g_map;
    Eigen::MatrixXd B = H;
    for (int step = 1; step <= c; ++step) {
      const auto j = static_cast<std::size_t>(c + side * step);
      const double t = curve.t[j];
      Eigen::VectorXd start = u_prev;
      start[0] = t;
      std::optional<Eigen::MatrixXd> inv;
      if (opt.use_predictor && nn > 0) {
        const Eigen::MatrixXd Bnn = B.bottomRightCorner(nn, nn);
        Eigen::LLT<Eigen::MatrixXd> bl(Bnn);
        if (bl.info() == Eigen::Success) {
          const double dt = t - u_prev[0];
          start.tail(nn) = u_prev.tail(nn) - bl.solve(g_prev.tail(nn) + B.col(0).tail(nn) * dt);
          inv = bl.solve(Eigen::MatrixXd::Identity(nn, nn));
        }
      }
      Eigen::VectorXd u_new = start;
      if (nn > 0) {
        const Objective h = [&](const Eigen::VectorXd& v) {
          Eigen::VectorXd u(nf);
          u << t, v;
          return f(u);
        };
        MinimizeOptions mo = opt.corrector;
        mo.inverse_hessian = inv;
        Eigen::VectorXd v0 = start.tail(nn);
        if (!std::isfinite(h(v0))) {
          v0 = u_prev.tail(nn);
          mo.inverse_hessian.reset();
        }
        MinimizeResult r;
        try {
          r = minimize_bfgs(h, v0, mo);
        } catch (const ValidationError&) {
          curve.pd[j] = std::numeric_limits<double>::quiet_NaN();
          curve.converged[j] = false;
          break;  // the rest of this side is outside the posterior support
        }
        u_new.tail(nn) = r.x;
        curve.iterations[j] = r.iterations;
        curve.converged[j] = r.converged;
      }
      const double fv = f(u_new);
      curve.pd[j] = 2.0 * (fv - f_map);
      if (!std::isfinite(fv)) {
        curve.converged[j] = false;
        break;
      }
      const Eigen::VectorXd g_new = central_gradient(f, u_new, opt.corrector.gradient_step);
      if (opt.use_predictor) sr1_update(B, u_new - u_prev, g_new - g_prev);
      u_prev = u_new;
      g_prev = g_new;
    }
    // points beyond a support violation stay unresolved
    for (int step = 1; step <= c; ++step) {
      const auto j = static_cast<std::size_t>(c + side * step);
      if (!curve.converged[j] && std::isnan(curve.pd[j])) {
        for (int s2 = step; s2 <= c; ++s2) {
          const auto k = static_cast<std::size_t>(c + side * s2);
          curve.pd[k] = kInf;
          curve.converged[k] = false;
        }
        break;
      }
    }
  }
  const int df = opt.total_df > 0 ? opt.total_df : static_cast<int>(d);
  const Classification cls = classify(curve, opt.alpha, df, opt.flat_tolerance);
  curve.classification = cls.kind;
  curve.confidence_level = cls.confidence_level;
  return curve;
}

Classification classify(const ProfileCurve& curve, double alpha, int total_df, double flat_tolerance) {
  if (curve.pd.empty()) throw ValidationError("empty profile curve");
  const double delta = chi_squared_quantile(1.0 - alpha, total_df);
  const std::size_t c = curve.pd.size() / 2;
  auto exceeds = [&](double q, int side) {
    for (std::size_t s = 1; s <= c; ++s) {
      const double v = curve.pd[side > 0 ? c + s : c - s];
      if (v > q) return true;
    }
    return false;
  };
  double peak = 0.0;
  for (double v : curve.pd)
    if (!std::isnan(v)) peak = std::max(peak, v);
  Classification out{Identifiability::identifiable, 0.0};
  if (peak <= flat_tolerance)
    out.kind = Identifiability::structurally_non_identifiable;
  else if (!(exceeds(delta, 1) && exceeds(delta, -1)))
    out.kind = Identifiability::practically_non_identifiable;

  // the CI {PD <= q} stays inside the grid iff both ends exceed q
  auto contained = [&](double level) {
    const double q = chi_squared_quantile(level, total_df);
    return curve.pd.front() > q && curve.pd.back() > q;
  };
  double lo = 1e-4, hi = 1.0 - 1e-4;
  if (!contained(lo)) return out;
  if (contained(hi)) {
    out.confidence_level = hi;
    return out;
  }
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (contained(mid) ? lo : hi) = mid;
  }
  out.confidence_level = lo;
  return out;
}

double silverman_bandwidth(std::span<const double> sample) {
  const std::size_t n = sample.size();
  if (n < 2) throw ValidationError("bandwidth needs at least two points");
  std::vector<double> s(sample.begin(), sample.end());
  std::sort(s.begin(), s.end());
  const double mean = std::accumulate(s.begin(), s.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : s) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (n - 1));
  auto q = [&](double p) {
    const double h = (n - 1) * p;
    const auto k = static_cast<std::size_t>(std::floor(h));
    return k + 1 < n ? s[k] + (h - k) * (s[k + 1] - s[k]) : s[n - 1];
  };
  double spread = std::min(sd, (q(0.75) - q(0.25)) / 1.34);
  if (!(spread > 0)) spread = sd > 0 ? sd : (std::abs(s[0]) > 0 ? std::abs(s[0]) : 1.0);
  return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

double kde(std::span<const double> sample, double bandwidth, double x) {
  const double norm = 1.0 / (std::sqrt(2.0 * M_PI) * bandwidth * static_cast<double>(sample.size()));
  double total = 0.0;
  for (double s : sample) {
    const double z = (x - s) / bandwidth;
    total += std::exp(-0.5 * z * z);
  }
  return total * norm;
}

OverlapResult overlap_result(double statistic, double threshold) { return {statistic, statistic <= threshold}; }

OverlapResult overlap(const PriorMarginal& prior, std::span<const double> posterior_sample, double threshold) {
  if (!prior.proper) throw ValidationError("overlap is undefined for an improper prior");
  if (posterior_sample.size() < 50) throw ValidationError("overlap needs at least 50 posterior draws");
  if (!prior.pdf || !(prior.sd > 0)) throw ValidationError("prior density must be evaluable with a positive scale");
  const double h = silverman_bandwidth(posterior_sample);
  const auto [mn, mx] = std::minmax_element(posterior_sample.begin(), posterior_sample.end());
  const double lo = std::min(*mn - 4.0 * h, prior.mean - 4.0 * prior.sd);
  const double hi = std::max(*mx + 4.0 * h, prior.mean + 4.0 * prior.sd);
  const int n = 512;
  const double w = (hi - lo) / n;
  double total = 0.0;
  for (int k = 0; k < n; ++k) {
    const double x = lo + (k + 0.5) * w;
    total += std::min(prior.pdf(x), kde(posterior_sample, h, x));
  }
  return overlap_result(total * w, threshold);
}

}  // namespace cohortcal
