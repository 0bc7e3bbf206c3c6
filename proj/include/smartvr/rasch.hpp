#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "smartvr/domain.hpp"
#include "smartvr/errors.hpp"

namespace smartvr {

inline double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(logistic(x)) without overflow for large |x|.
inline double log_logistic(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Standard normal quantile: rational approximation (Acklam) polished with one
// Halley step against erfc, which brings it to full double precision.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw SchemaError("normal quantile needs p in [0,1]");
  }
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= 1 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    const double q = std::sqrt(-2 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2 * M_PI) * std::exp(x * x / 2);
  return x - u / (1 + x * u / 2);
}

inline constexpr double kAccuracyClamp = 0.01;
inline constexpr double kParamBound = 4.0;

// Sign-inverted probit of clamped accuracy: easy items get negative difficulty.
inline std::map<std::string, double> init_difficulties(const std::map<std::string, double>& accuracies) {
  std::map<std::string, double> out;
  for (const auto& [item, p] : accuracies) {
    if (!std::isfinite(p)) throw SchemaError("accuracy for '" + item + "' is not finite");
    const double clamped = std::clamp(p, kAccuracyClamp, 1.0 - kAccuracyClamp);
    out[item] = -normal_quantile(clamped);
  }
  return out;
}

struct RaschParams {
  std::map<std::string, double> theta;
  std::map<std::string, double> b;

  bool operator==(const RaschParams&) const = default;
};

struct RaschFitOptions {
  int max_iter = 100;
  double tol = 1e-4;
  // When set, every listed user/item must have at least one response.
  std::optional<std::vector<std::string>> users;
  std::optional<std::vector<std::string>> items;
};

struct RaschFitReport {
  int iterations = 0;
  bool converged = false;
  std::vector<double> log_likelihood;  // after each outer iteration
  std::size_t clamp_events = 0;
};

namespace detail {

struct Observation {
  std::size_t other;
  double y;
};

// Log-likelihood of one parameter's observations; sign = +1 for abilities
// (z = x - other), -1 for difficulties (z = other - x).
inline double block_ll(double x, std::span<const Observation> obs, std::span<const double> others, double sign) {
  double ll = 0.0;
  for (const auto& o : obs) {
    const double z = sign * (x - others[o.other]);
    ll += o.y * log_logistic(z) + (1.0 - o.y) * log_logistic(-z);
  }
  return ll;
}

// Newton-Raphson on a 1-D concave log-likelihood with step halving and box
// clamping. Returns the number of clamp hits.
inline std::size_t newton_1d(double& x, std::span<const Observation> obs, std::span<const double> others,
                             double sign) {
  std::size_t clamps = 0;
  for (int it = 0; it < 50; ++it) {
    double grad = 0.0, info = 0.0;
    for (const auto& o : obs) {
      const double p = logistic(sign * (x - others[o.other]));
      grad += sign * (o.y - p);
      info += p * (1.0 - p);
    }
    if (info < 1e-12) info = 1e-12;
    double step = grad / info;
    const double base = block_ll(x, obs, others, sign);
    double candidate = std::clamp(x + step, -kParamBound, kParamBound);
    for (int h = 0; h < 40 && block_ll(candidate, obs, others, sign) < base; ++h) {
      step *= 0.5;
      candidate = std::clamp(x + step, -kParamBound, kParamBound);
    }
    if (block_ll(candidate, obs, others, sign) < base) break;
    if (std::abs(candidate) == kParamBound && std::abs(x + step) > kParamBound) ++clamps;
    const double moved = std::abs(candidate - x);
    x = candidate;
    if (moved < 1e-10) break;
  }
  return clamps;
}

}  // namespace detail

// Joint maximum likelihood for the Rasch model by alternating per-user and
// per-item Newton updates. Abilities are re-centred to mean zero over users
// with non-extreme raw scores after every sweep (item difficulties shift with
// them, so predictions are unchanged), then both blocks are clamped to +-4.
inline RaschParams fit(std::span<const ResponseRecord> responses, const RaschFitOptions& options = {},
                       RaschFitReport* report = nullptr) {
  if (responses.empty()) throw InsufficientDataError("Rasch fit needs at least one response");
  std::map<std::string, std::size_t> user_pos, item_pos;
  for (const auto& r : responses) {
    user_pos.emplace(r.user, 0);
    item_pos.emplace(r.item, 0);
  }
  auto check_roster = [](const std::optional<std::vector<std::string>>& roster,
                         const std::map<std::string, std::size_t>& seen, const char* what) {
    if (!roster) return;
    for (const auto& id : *roster)
      if (seen.count(id) == 0)
        throw InsufficientDataError(std::string(what) + " '" + id + "' has no responses");
  };
  check_roster(options.users, user_pos, "user");
  check_roster(options.items, item_pos, "item");

  std::vector<std::string> users, items;
  for (auto& [id, pos] : user_pos) {
    pos = users.size();
    users.push_back(id);
  }
  for (auto& [id, pos] : item_pos) {
    pos = items.size();
    items.push_back(id);
  }

  std::vector<std::vector<detail::Observation>> by_user(users.size()), by_item(items.size());
  std::vector<double> correct(items.size(), 0.0), seen(items.size(), 0.0);
  std::vector<double> user_correct(users.size(), 0.0);
  for (const auto& r : responses) {
    const std::size_t u = user_pos[r.user], i = item_pos[r.item];
    const double y = r.correct ? 1.0 : 0.0;
    by_user[u].push_back({i, y});
    by_item[i].push_back({u, y});
    correct[i] += y;
    seen[i] += 1.0;
    user_correct[u] += y;
  }
  std::vector<bool> anchor_user(users.size());
  for (std::size_t u = 0; u < users.size(); ++u)
    anchor_user[u] = user_correct[u] > 0.0 && user_correct[u] < static_cast<double>(by_user[u].size());

  std::map<std::string, double> accuracy;
  for (std::size_t i = 0; i < items.size(); ++i) accuracy[items[i]] = correct[i] / seen[i];
  const auto init = init_difficulties(accuracy);
  std::vector<double> b(items.size()), theta(users.size(), 0.0);
  for (std::size_t i = 0; i < items.size(); ++i) b[i] = init.at(items[i]);

  auto total_ll = [&] {
    double ll = 0.0;
    for (std::size_t u = 0; u < users.size(); ++u) ll += detail::block_ll(theta[u], by_user[u], b, +1.0);
    return ll;
  };

  RaschFitReport local;
  RaschFitReport& rep = report ? *report : local;
  rep = {};
  for (int iter = 0; iter < options.max_iter; ++iter) {
    const auto prev_theta = theta;
    const auto prev_b = b;
    for (std::size_t u = 0; u < users.size(); ++u)
      rep.clamp_events += detail::newton_1d(theta[u], by_user[u], b, +1.0);
    for (std::size_t i = 0; i < items.size(); ++i)
      rep.clamp_events += detail::newton_1d(b[i], by_item[i], theta, -1.0);

    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t u = 0; u < users.size(); ++u)
      if (anchor_user[u]) {
        sum += theta[u];
        ++n;
      }
    if (n > 0) {
      const double shift = sum / static_cast<double>(n);
      for (auto& t : theta) t -= shift;
      for (auto& v : b) v -= shift;
    }
    for (auto* block : {&theta, &b})
      for (auto& v : *block)
        if (std::abs(v) > kParamBound) {
          v = std::clamp(v, -kParamBound, kParamBound);
          ++rep.clamp_events;
        }

    double change = 0.0;
    for (std::size_t u = 0; u < users.size(); ++u) change = std::max(change, std::abs(theta[u] - prev_theta[u]));
    for (std::size_t i = 0; i < items.size(); ++i) change = std::max(change, std::abs(b[i] - prev_b[i]));
    rep.iterations = iter + 1;
    rep.log_likelihood.push_back(total_ll());
    if (change < options.tol) {
      rep.converged = true;
      break;
    }
  }

  RaschParams params;
  for (std::size_t u = 0; u < users.size(); ++u) params.theta[users[u]] = theta[u];
  for (std::size_t i = 0; i < items.size(); ++i) params.b[items[i]] = b[i];
  return params;
}

inline double predict_response(const RaschParams& params, const std::string& user, const std::string& item) {
  const auto t = params.theta.find(user);
  if (t == params.theta.end()) throw LookupError("unknown user '" + user + "'");
  const auto d = params.b.find(item);
  if (d == params.b.end()) throw LookupError("unknown item '" + item + "'");
  return logistic(t->second - d->second);
}

// The threshold comparison is inclusive.
inline bool predict_understanding(const RaschParams& params, const std::string& user, double video_difficulty,
                                  double threshold) {
  const auto t = params.theta.find(user);
  if (t == params.theta.end()) throw LookupError("unknown user '" + user + "'");
  if (!std::isfinite(video_difficulty)) throw SchemaError("video difficulty is not finite");
  return logistic(t->second - video_difficulty) >= threshold;
}

inline nlohmann::json to_json(const RaschParams& params) {
  return nlohmann::json{{"theta", params.theta}, {"b", params.b}};
}

inline RaschParams rasch_params_from_json(const nlohmann::json& j) {
  RaschParams p;
  p.theta = j.at("theta").get<std::map<std::string, double>>();
  p.b = j.at("b").get<std::map<std::string, double>>();
  return p;
}

}  // namespace smartvr
