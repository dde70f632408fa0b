#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace hgp {

enum class SeriesKind { Speed, Heading, X, Y };

inline std::string to_string(SeriesKind k) {
  switch (k) {
    case SeriesKind::Speed: return "speed";
    case SeriesKind::Heading: return "heading";
    case SeriesKind::X: return "x";
    case SeriesKind::Y: return "y";
  }
  return "?";
}

inline SeriesKind series_kind_from_string(const std::string& s) {
  if (s == "speed") return SeriesKind::Speed;
  if (s == "heading") return SeriesKind::Heading;
  if (s == "x") return SeriesKind::X;
  if (s == "y") return SeriesKind::Y;
  throw std::invalid_argument("unknown series kind: " + s);
}

// Hyperparameters of the compound RBF + linear kernel. All strictly positive;
// optimization happens in log space.
struct GpHyperparams {
  double gamma = 1.0;   // RBF length-scale, s
  double alpha1 = 1.0;  // RBF amplitude
  double alpha2 = 1.0;  // linear-kernel amplitude
};

struct TimeSeriesWindow {
  std::vector<double> times;
  std::vector<double> values;
  SeriesKind kind = SeriesKind::Speed;

  std::size_t size() const { return times.size(); }
  double span() const { return times.empty() ? 0.0 : times.back() - times.front(); }
  double mean() const {
    double s = 0.0;
    for (double v : values) s += v;
    return values.empty() ? 0.0 : s / values.size();
  }
  double stddev() const {
    if (values.size() < 2) return 0.0;
    const double m = mean();
    double s = 0.0;
    for (double v : values) s += (v - m) * (v - m);
    return std::sqrt(s / (values.size() - 1));
  }
};

struct PredictiveSeries {
  std::vector<double> times;
  std::vector<double> means;
  std::vector<double> variances;  // clamped at 0
};

struct GpModel {
  SeriesKind kind = SeriesKind::Speed;
  GpHyperparams theta;
  double loo_objective = 0.0;
  double trained_window_span = 0.0;
  bool improved = true;  // false when no restart beat the initial objective
};

class IllConditionedKernelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// kappa(t, t') = a1^2 exp(-(t-t')^2 / (2 g^2)) + a2^2 t t'
inline double kernel(double t, double t_prime, const GpHyperparams& theta) {
  const double d = t - t_prime;
  return theta.alpha1 * theta.alpha1 *
             std::exp(-d * d / (2.0 * theta.gamma * theta.gamma)) +
         theta.alpha2 * theta.alpha2 * t * t_prime;
}

struct JitterPolicy {
  double base = 1e-8;  // scaled by value variance by callers
  double max = 1e-4;
};

inline Eigen::MatrixXd kernel_matrix(const std::vector<double>& a,
                                     const std::vector<double>& b,
                                     const GpHyperparams& theta) {
  Eigen::MatrixXd k(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          kernel(a[i], b[j], theta);
  return k;
}

// K + jitter*I, guaranteed Cholesky-factorizable or throwing after the jitter
// escalation ladder is exhausted. `jitter_used` reports the final diagonal.
inline Eigen::MatrixXd gram_matrix(const std::vector<double>& times,
                                   const GpHyperparams& theta, double jitter,
                                   double max_jitter = 1e-4,
                                   double* jitter_used = nullptr) {
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1]))
      throw std::invalid_argument("gram_matrix: times must be strictly increasing");
  Eigen::MatrixXd k = kernel_matrix(times, times, theta);
  double j = jitter;
  while (true) {
    Eigen::MatrixXd kj = k + j * Eigen::MatrixXd::Identity(k.rows(), k.cols());
    Eigen::LLT<Eigen::MatrixXd> llt(kj);
    if (llt.info() == Eigen::Success) {
      if (jitter_used) *jitter_used = j;
      return kj;
    }
    if (j >= max_jitter)
      throw IllConditionedKernelError("gram_matrix: Cholesky failed at max jitter");
    j *= 10.0;
  }
}

namespace detail {

struct LooWorkspace {
  Eigen::MatrixXd kinv;
  Eigen::VectorXd alpha;  // K^-1 y
  double jitter = 0.0;
};

inline LooWorkspace loo_workspace(const TimeSeriesWindow& w,
                                  const GpHyperparams& theta, double jitter) {
  LooWorkspace ws;
  Eigen::MatrixXd k = gram_matrix(w.times, theta, jitter, 1e-4, &ws.jitter);
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  const Eigen::Index m = k.rows();
  ws.kinv = llt.solve(Eigen::MatrixXd::Identity(m, m));
  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(w.values.data(), m);
  ws.alpha = llt.solve(y);
  return ws;
}

inline double default_jitter(const TimeSeriesWindow& w) {
  const double scale = std::max(w.stddev(), 1e-3);
  return 1e-8 * scale * scale;
}

}  // namespace detail

// Leave-one-out conditional moments of value i given the rest: the standard
// shortcut mu_i = y_i - alpha_i / Kinv_ii, var_i = 1 / Kinv_ii is algebraically
// identical to deleting row/column i and applying the conditional-Gaussian
// formula.
struct LooMoments {
  double mean = 0.0;
  double variance = 0.0;
  bool variance_clamped = false;
};

inline LooMoments loo_moments(const TimeSeriesWindow& window, std::size_t i,
                              const GpHyperparams& theta, double jitter = -1.0) {
  if (window.size() < 2) throw std::invalid_argument("loo: need m >= 2");
  if (i >= window.size()) throw std::invalid_argument("loo: index out of range");
  if (jitter < 0.0) jitter = detail::default_jitter(window);
  auto ws = detail::loo_workspace(window, theta, jitter);
  const auto ii = static_cast<Eigen::Index>(i);
  LooMoments m;
  double prec = ws.kinv(ii, ii);
  double var = 1.0 / prec;
  if (var < ws.jitter) {
    var = ws.jitter;
    m.variance_clamped = true;
  }
  m.mean = window.values[i] - ws.alpha(ii) / prec;
  m.variance = var;
  return m;
}

inline double loo_log_probability(const TimeSeriesWindow& window, std::size_t i,
                                  const GpHyperparams& theta, double jitter = -1.0) {
  const LooMoments m = loo_moments(window, i, theta, jitter);
  const double r = window.values[i] - m.mean;
  return -0.5 * std::log(m.variance) - r * r / (2.0 * m.variance) -
         0.5 * std::log(2.0 * M_PI);
}

// Sum of leave-one-out log probabilities over the window (the training
// objective L).
inline double loo_objective(const TimeSeriesWindow& window, const GpHyperparams& theta,
                            double jitter = -1.0) {
  if (window.size() < 2) throw std::invalid_argument("loo_objective: need m >= 2");
  if (jitter < 0.0) jitter = detail::default_jitter(window);
  auto ws = detail::loo_workspace(window, theta, jitter);
  const Eigen::Index m = ws.kinv.rows();
  double L = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double prec = ws.kinv(i, i);
    double var = 1.0 / prec;
    if (var < ws.jitter) var = ws.jitter;
    const double r = ws.alpha(i) / prec;
    L += -0.5 * std::log(var) - r * r / (2.0 * var) - 0.5 * std::log(2.0 * M_PI);
  }
  return L;
}

// Gradient of L with respect to p = (log gamma, log alpha1, log alpha2).
inline Eigen::Vector3d loo_gradient(const TimeSeriesWindow& window,
                                    const GpHyperparams& theta, double jitter = -1.0) {
  if (jitter < 0.0) jitter = detail::default_jitter(window);
  auto ws = detail::loo_workspace(window, theta, jitter);
  const Eigen::Index m = ws.kinv.rows();

  // dK/dp for the three log-parameters (jitter term is parameter-free).
  const double g2 = theta.gamma * theta.gamma;
  Eigen::MatrixXd dK_g(m, m), dK_a1(m, m), dK_a2(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) {
      const double d = window.times[i] - window.times[j];
      const double rbf =
          theta.alpha1 * theta.alpha1 * std::exp(-d * d / (2.0 * g2));
      dK_a1(i, j) = 2.0 * rbf;
      dK_g(i, j) = rbf * d * d / g2;
      dK_a2(i, j) = 2.0 * theta.alpha2 * theta.alpha2 * window.times[i] * window.times[j];
    }

  Eigen::Vector3d grad = Eigen::Vector3d::Zero();
  const Eigen::MatrixXd* dKs[3] = {&dK_g, &dK_a1, &dK_a2};
  for (int p = 0; p < 3; ++p) {
    const Eigen::MatrixXd z = ws.kinv * (*dKs[p]);
    const Eigen::VectorXd za = z * ws.alpha;
    const Eigen::MatrixXd zk = z * ws.kinv;
    double g = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double prec = ws.kinv(i, i);
      const double ai = ws.alpha(i);
      g += (ai * za(i) - 0.5 * (1.0 + ai * ai / prec) * zk(i, i)) / prec;
    }
    grad(p) = g;
  }
  return grad;
}

// Marginal log-likelihood log p(theta | y, t) used for forecast-time model
// selection: -(n/2) log 2pi - y' K^-1 y / 2 - log det K / 2.
inline double marginal_log_likelihood(const TimeSeriesWindow& window,
                                      const GpHyperparams& theta,
                                      double jitter = -1.0) {
  if (window.size() == 0) throw std::invalid_argument("empty window");
  if (jitter < 0.0) jitter = detail::default_jitter(window);
  Eigen::MatrixXd k = gram_matrix(window.times, theta, jitter);
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  const Eigen::Index n = k.rows();
  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(window.values.data(), n);
  const Eigen::VectorXd a = llt.solve(y);
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * n * std::log(2.0 * M_PI) - 0.5 * y.dot(a) - 0.5 * logdet;
}

// GP posterior at horizon_times: mu* = K1 K2^-1 y, var_j = kappa(t*,t*) -
// k1' K2^-1 k1. No centering here; callers handle mean offsets.
inline PredictiveSeries predict_raw(const TimeSeriesWindow& window,
                                    const GpHyperparams& theta,
                                    const std::vector<double>& horizon_times,
                                    double jitter = -1.0) {
  if (window.size() == 0) throw std::invalid_argument("predict: empty window");
  if (jitter < 0.0) jitter = detail::default_jitter(window);
  const Eigen::Index m = static_cast<Eigen::Index>(window.size());
  Eigen::MatrixXd k2 = gram_matrix(window.times, theta, jitter);
  Eigen::LLT<Eigen::MatrixXd> llt(k2);
  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(window.values.data(), m);
  const Eigen::VectorXd alpha = llt.solve(y);

  PredictiveSeries out;
  out.times = horizon_times;
  out.means.resize(horizon_times.size());
  out.variances.resize(horizon_times.size());
  for (std::size_t j = 0; j < horizon_times.size(); ++j) {
    Eigen::VectorXd k1(m);
    for (Eigen::Index i = 0; i < m; ++i)
      k1(i) = kernel(horizon_times[j], window.times[i], theta);
    out.means[j] = k1.dot(alpha);
    const Eigen::VectorXd v = llt.solve(k1);
    const double var = kernel(horizon_times[j], horizon_times[j], theta) - k1.dot(v);
    out.variances[j] = std::max(var, 0.0);
  }
  return out;
}

// Centered predict: subtracts the window mean before regression and re-adds it
// to the predictive means (zero-mean GP prior on the centered series).
inline PredictiveSeries predict(const TimeSeriesWindow& window, const GpModel& model,
                                const std::vector<double>& horizon_times,
                                double jitter = -1.0) {
  const double offset = window.mean();
  TimeSeriesWindow centered = window;
  for (auto& v : centered.values) v -= offset;
  PredictiveSeries out = predict_raw(centered, model.theta, horizon_times, jitter);
  for (auto& mu : out.means) mu += offset;
  return out;
}

struct FitOptions {
  int restarts = 4;
  int max_iterations = 200;
  double tolerance = 1e-6;
  std::uint64_t seed = 0;
};

namespace detail {

// Polak-Ribiere conjugate gradient ascent with Armijo backtracking, in
// log-parameter space.
inline std::pair<Eigen::Vector3d, double> cg_maximize(
    const TimeSeriesWindow& w, Eigen::Vector3d p, double jitter,
    const FitOptions& opt) {
  auto theta_of = [](const Eigen::Vector3d& p) {
    return GpHyperparams{std::exp(p(0)), std::exp(p(1)), std::exp(p(2))};
  };
  auto eval = [&](const Eigen::Vector3d& p) -> double {
    for (int i = 0; i < 3; ++i)
      if (p(i) < -20.0 || p(i) > 20.0) return -std::numeric_limits<double>::infinity();
    try {
      return loo_objective(w, theta_of(p), jitter);
    } catch (const IllConditionedKernelError&) {
      return -std::numeric_limits<double>::infinity();
    }
  };

  double f = eval(p);
  if (!std::isfinite(f)) return {p, f};
  Eigen::Vector3d g;
  try {
    g = loo_gradient(w, theta_of(p), jitter);
  } catch (const IllConditionedKernelError&) {
    return {p, f};
  }
  Eigen::Vector3d d = g;
  for (int it = 0; it < opt.max_iterations; ++it) {
    if (g.norm() < 1e-9) break;
    if (d.dot(g) <= 0.0) d = g;  // reset to steepest ascent
    double step = 1.0 / std::max(1.0, d.norm());
    double f_new = -std::numeric_limits<double>::infinity();
    Eigen::Vector3d p_new;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      p_new = p + step * d;
      f_new = eval(p_new);
      if (std::isfinite(f_new) && f_new >= f + 1e-4 * step * d.dot(g)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const double df = f_new - f;
    Eigen::Vector3d g_new;
    try {
      g_new = loo_gradient(w, theta_of(p_new), jitter);
    } catch (const IllConditionedKernelError&) {
      p = p_new;
      f = f_new;
      break;
    }
    const double beta =
        std::max(0.0, g_new.dot(g_new - g) / std::max(g.dot(g), 1e-300));
    d = g_new + beta * d;
    p = p_new;
    f = f_new;
    g = g_new;
    if (df < opt.tolerance) break;
  }
  return {p, f};
}

}  // namespace detail

// Multi-start LOO fit on the (centered) window. Deterministic given
// opt.seed. Returns the best hyperparameters and the achieved objective.
inline GpModel fit(const TimeSeriesWindow& window, const FitOptions& opt = {}) {
  if (window.size() < 5) throw std::invalid_argument("fit: need m >= 5");
  TimeSeriesWindow w = window;
  const double offset = w.mean();
  for (auto& v : w.values) v -= offset;

  const double span = std::max(w.span(), 1e-6);
  const double sd = std::max(w.stddev(), 1e-3);
  const double jitter = 1e-8 * sd * sd;

  Eigen::Vector3d p0(std::log(span / 2.0), std::log(sd), std::log(sd / span));
  double f0 = -std::numeric_limits<double>::infinity();
  try {
    f0 = loo_objective(w, {std::exp(p0(0)), std::exp(p0(1)), std::exp(p0(2))},
                       jitter);
  } catch (const IllConditionedKernelError&) {
    // heuristic start can be singular on degenerate windows; the perturbed
    // restarts below still get their chance
  }

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> perturb(0.0, 0.5);

  Eigen::Vector3d best_p = p0;
  double best_f = f0;
  for (int r = 0; r < opt.restarts; ++r) {
    Eigen::Vector3d p = p0;
    if (r > 0)
      for (int i = 0; i < 3; ++i) p(i) += perturb(rng);
    auto [pr, fr] = detail::cg_maximize(w, p, jitter, opt);
    if (fr > best_f) {
      best_f = fr;
      best_p = pr;
    }
  }

  GpModel model;
  model.kind = window.kind;
  model.theta = {std::exp(best_p(0)), std::exp(best_p(1)), std::exp(best_p(2))};
  model.loo_objective = best_f;
  model.trained_window_span = window.span();
  model.improved = best_f > f0;
  return model;
}

// JSON schema: {kind, gamma, alpha1, alpha2, loo_objective, trained_window_span}
inline nlohmann::json to_json(const GpModel& m) {
  return {{"kind", to_string(m.kind)},
          {"gamma", m.theta.gamma},
          {"alpha1", m.theta.alpha1},
          {"alpha2", m.theta.alpha2},
          {"loo_objective", m.loo_objective},
          {"trained_window_span", m.trained_window_span}};
}

inline GpModel gp_model_from_json(const nlohmann::json& j) {
  GpModel m;
  m.kind = series_kind_from_string(j.at("kind").get<std::string>());
  m.theta.gamma = j.at("gamma").get<double>();
  m.theta.alpha1 = j.at("alpha1").get<double>();
  m.theta.alpha2 = j.at("alpha2").get<double>();
  m.loo_objective = j.at("loo_objective").get<double>();
  m.trained_window_span = j.at("trained_window_span").get<double>();
  return m;
}

}  // namespace hgp
