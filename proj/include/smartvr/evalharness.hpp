#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "smartvr/deep_irt.hpp"
#include "smartvr/domain.hpp"
#include "smartvr/featurize.hpp"
#include "smartvr/rasch.hpp"

namespace smartvr {

// A binary record inside a fold: a pretest/trial answer (anchor) or a lecture
// understanding label (stateful).
struct FoldRecord {
  std::string user;
  std::string item;
  bool label = false;
  bool stateful = false;

  bool operator==(const FoldRecord&) const = default;
};

struct Fold {
  std::string held_out;
  std::vector<FoldRecord> train;
  std::vector<FoldRecord> test;
};

inline bool is_anchor_item(const ItemBank& bank, const std::string& item) {
  const auto* it = bank.find(item);
  return it && (it->kind == ItemKind::pretest_question || it->kind == ItemKind::trial_question);
}

// One fold per user. Training holds every user's pretest and trial answers
// (the held-out user's included) plus all other users' lecture labels; the
// test set is the held-out user's lecture labels.
inline std::vector<Fold> loocv_folds(const Dataset& ds) {
  if (ds.sessions.size() < 2) throw ProtocolError("leave-one-out needs at least 2 users");
  std::vector<std::vector<FoldRecord>> anchors(ds.sessions.size()), lectures(ds.sessions.size());
  for (std::size_t u = 0; u < ds.sessions.size(); ++u) {
    const auto& s = ds.sessions[u];
    bool has_pretest = false;
    for (const auto& r : s.responses) {
      if (!is_anchor_item(ds.bank, r.item)) continue;
      has_pretest = has_pretest || ds.bank.at(r.item).kind == ItemKind::pretest_question;
      anchors[u].push_back({s.user, r.item, r.correct, false});
    }
    if (!has_pretest) throw ProtocolError("user '" + s.user + "' has no pretest records");
    for (const auto& l : s.labels) lectures[u].push_back({s.user, l.lecture, l.understood, true});
  }
  std::vector<Fold> folds;
  for (std::size_t h = 0; h < ds.sessions.size(); ++h) {
    Fold fold{ds.sessions[h].user, {}, lectures[h]};
    for (std::size_t u = 0; u < ds.sessions.size(); ++u) {
      fold.train.insert(fold.train.end(), anchors[u].begin(), anchors[u].end());
      if (u != h) fold.train.insert(fold.train.end(), lectures[u].begin(), lectures[u].end());
    }
    folds.push_back(std::move(fold));
  }
  return folds;
}

struct EerResult {
  double threshold = 0.5;
  double gap = 0.0;  // |FPR - FNR|
  double fpr = 0.0;
  double fnr = 0.0;
};

inline std::pair<double, double> error_rates(std::span<const double> scores, const std::vector<bool>& labels,
                                             double threshold) {
  std::size_t pos = 0, neg = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i]) {
      ++pos;
      if (!predicted) ++fn;
    } else {
      ++neg;
      if (predicted) ++fp;
    }
  }
  return {static_cast<double>(fp) / static_cast<double>(neg), static_cast<double>(fn) / static_cast<double>(pos)};
}

// Equal-error-rate threshold by exhaustive scan over the lowest score, the
// midpoints between consecutive distinct scores and a point just above the
// highest score. Prediction is score >= threshold; ties in |FPR - FNR| go to
// the smaller threshold.
inline EerResult eer(std::span<const double> scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
  const auto positives = std::count(labels.begin(), labels.end(), true);
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(labels.size()))
    throw DegenerateLabelsError("equal-error threshold needs both classes");
  std::vector<double> u(scores.begin(), scores.end());
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  std::vector<double> candidates{u.front()};
  for (std::size_t i = 0; i + 1 < u.size(); ++i) candidates.push_back(u[i] + (u[i + 1] - u[i]) / 2.0);
  candidates.push_back(std::nextafter(u.back(), std::numeric_limits<double>::infinity()));

  EerResult best;
  best.gap = std::numeric_limits<double>::infinity();
  for (double c : candidates) {
    const auto [fpr, fnr] = error_rates(scores, labels, c);
    const double gap = std::abs(fpr - fnr);
    if (gap < best.gap) best = {c, gap, fpr, fnr};
  }
  return best;
}

inline double eer_threshold(std::span<const double> scores, const std::vector<bool>& labels) {
  return eer(scores, labels).threshold;
}

// Mann-Whitney AUC with ties counted half; nullopt when a class is absent.
inline std::optional<double> auc(std::span<const double> scores, const std::vector<bool>& labels) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      ++pairs;
      wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
    }
  }
  if (pairs == 0) return std::nullopt;
  return wins / static_cast<double>(pairs);
}

enum class ModelKind { rasch, deep_irt, smart_mlp, smart_tcn };

inline std::string model_name(ModelKind k) {
  switch (k) {
    case ModelKind::rasch: return "rasch";
    case ModelKind::deep_irt: return "deep-irt";
    case ModelKind::smart_mlp: return "smart-mlp";
    case ModelKind::smart_tcn: return "smart-tcn";
  }
  return "?";
}

inline ModelKind parse_model(const std::string& name) {
  for (auto k : {ModelKind::rasch, ModelKind::deep_irt, ModelKind::smart_mlp, ModelKind::smart_tcn})
    if (model_name(k) == name) return k;
  throw ConfigError("unknown model variant '" + name + "' (expected rasch, deep-irt, smart-mlp or smart-tcn)");
}

struct ScoredLabel {
  std::string lecture;
  Difficulty level = Difficulty::medium;
  double score = 0.0;
  bool predicted = false;
  bool truth = false;
};

struct LevelAccuracy {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
  bool operator==(const LevelAccuracy&) const = default;
};

struct FoldResult {
  std::string held_out;
  double threshold = 0.5;
  std::vector<ScoredLabel> records;
  std::size_t skipped = 0;  // test labels without usable features

  double accuracy() const {
    if (records.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto& r : records) hits += r.predicted == r.truth ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(records.size());
  }
};

// Accuracy per content level; levels without test lectures are absent.
inline std::map<Difficulty, LevelAccuracy> difficulty_breakdown(std::span<const FoldResult> folds,
                                                                const ItemBank& bank) {
  std::map<Difficulty, LevelAccuracy> out;
  for (const auto& f : folds)
    for (const auto& r : f.records) {
      const auto* item = bank.find(r.lecture);
      if (item == nullptr) throw SchemaError("test lecture '" + r.lecture + "' has no difficulty level");
      auto& cell = out[item->difficulty];
      ++cell.total;
      if (r.predicted == r.truth) ++cell.correct;
    }
  return out;
}

struct WindowResult {
  int minutes = 0;
  std::vector<FoldResult> folds;
  double accuracy = 0.0;        // pooled over all test labels
  double standard_error = 0.0;  // binomial, sqrt(a(1-a)/n)
  std::size_t n = 0;
  std::optional<double> auc;    // diagnostic only
};

struct SweepReport {
  std::string variant;
  std::vector<WindowResult> windows;
  int breakdown_window = 0;
  std::map<Difficulty, LevelAccuracy> by_difficulty;

  const WindowResult& at(int minutes) const {
    for (const auto& w : windows)
      if (w.minutes == minutes) return w;
    throw LookupError("window " + std::to_string(minutes) + " not in sweep");
  }
};

struct SweepOptions {
  int pool_stride = 1;
  int epochs = 200;
  double lr = 1e-3;
  std::size_t batch_size = 64;
  int threads = 1;
  nn::TcnReadout readout = nn::TcnReadout::last_step;
  bool standardize = true;
  std::optional<int> breakdown_window;  // default: largest window in the sweep
  std::function<void(const std::string&)> progress;
};

namespace detail {

template <typename E>
bool rethrow_as(const Error& e, const std::string& context) {
  if (dynamic_cast<const E*>(&e)) throw E(context + e.what());
  return false;
}

[[noreturn]] inline void rethrow_with_context(const Error& e, const std::string& context) {
  rethrow_as<DivergenceError>(e, context) || rethrow_as<InsufficientDataError>(e, context) ||
      rethrow_as<DegenerateLabelsError>(e, context) || rethrow_as<ProtocolError>(e, context) ||
      rethrow_as<LookupError>(e, context) || rethrow_as<SchemaError>(e, context) ||
      rethrow_as<ShapeError>(e, context) || rethrow_as<InputError>(e, context) ||
      rethrow_as<ConfigError>(e, context) || rethrow_as<IoError>(e, context);
  throw Error(context + e.what());
}

using CellKey = std::pair<std::string, std::string>;

struct FeatureSet {
  std::map<CellKey, std::shared_ptr<const GlobalVector>> global;
  std::map<CellKey, std::shared_ptr<const LocalTensor>> local;
};

inline FeatureSet compute_features(const Dataset& ds, ModelKind kind, const WindowSpec& spec) {
  FeatureSet fs;
  if (kind != ModelKind::smart_mlp && kind != ModelKind::smart_tcn) return fs;
  for (const auto& s : ds.sessions)
    for (const auto& l : s.labels) {
      const auto* stream = s.stream(l.lecture);
      if (stream == nullptr) continue;
      auto local = std::make_shared<LocalTensor>(extract_window(*stream, spec));
      const CellKey key{s.user, l.lecture};
      if (kind == ModelKind::smart_mlp) fs.global[key] = std::make_shared<GlobalVector>(global_stats(*local));
      else fs.local[key] = std::move(local);
    }
  return fs;
}

// z-scores each input dimension with statistics from the training cells only.
inline FeatureSet standardize(const FeatureSet& all, const std::set<CellKey>& train_cells) {
  FeatureSet out;
  if (!all.global.empty()) {
    std::vector<double> mean(kGlobalVectorSize, 0.0), sq(kGlobalVectorSize, 0.0);
    std::size_t n = 0;
    for (const auto& [key, g] : all.global) {
      if (!train_cells.count(key)) continue;
      ++n;
      for (std::size_t k = 0; k < kGlobalVectorSize; ++k) mean[k] += g->stats[k];
    }
    if (n == 0) return all;
    for (auto& m : mean) m /= static_cast<double>(n);
    for (const auto& [key, g] : all.global) {
      if (!train_cells.count(key)) continue;
      for (std::size_t k = 0; k < kGlobalVectorSize; ++k) sq[k] += (g->stats[k] - mean[k]) * (g->stats[k] - mean[k]);
    }
    for (auto& s : sq) s = std::sqrt(s / static_cast<double>(n));
    for (const auto& [key, g] : all.global) {
      auto z = std::make_shared<GlobalVector>();
      for (std::size_t k = 0; k < kGlobalVectorSize; ++k)
        z->stats[k] = sq[k] > 1e-12 ? (g->stats[k] - mean[k]) / sq[k] : 0.0;
      out.global[key] = std::move(z);
    }
  }
  if (!all.local.empty()) {
    constexpr std::size_t C = LocalTensor::cols;
    std::vector<double> mean(C, 0.0), sq(C, 0.0);
    double n = 0.0;
    for (const auto& [key, t] : all.local) {
      if (!train_cells.count(key)) continue;
      n += static_cast<double>(t->rows);
      for (std::size_t r = 0; r < t->rows; ++r)
        for (std::size_t c = 0; c < C; ++c) mean[c] += t->at(r, c);
    }
    if (n == 0.0) return all;
    for (auto& m : mean) m /= n;
    for (const auto& [key, t] : all.local) {
      if (!train_cells.count(key)) continue;
      for (std::size_t r = 0; r < t->rows; ++r)
        for (std::size_t c = 0; c < C; ++c) sq[c] += (t->at(r, c) - mean[c]) * (t->at(r, c) - mean[c]);
    }
    for (auto& s : sq) s = std::sqrt(s / n);
    for (const auto& [key, t] : all.local) {
      auto z = std::make_shared<LocalTensor>(*t);
      for (std::size_t r = 0; r < z->rows; ++r)
        for (std::size_t c = 0; c < C; ++c) {
          double& v = z->data[r * C + c];
          v = sq[c] > 1e-12 ? (v - mean[c]) / sq[c] : 0.0;
        }
      out.local[key] = std::move(z);
    }
  }
  return out;
}

inline std::vector<std::string> model_items(const Dataset& ds) {
  std::set<std::string> items;
  for (const auto& s : ds.sessions) {
    for (const auto& r : s.responses)
      if (is_anchor_item(ds.bank, r.item)) items.insert(r.item);
    for (const auto& l : s.labels) items.insert(l.lecture);
  }
  return {items.begin(), items.end()};
}

inline FoldResult score_fold(const Dataset& ds, const Fold& fold, ModelKind kind, const FeatureSet& features,
                             std::uint64_t seed, const WindowSpec& window, const SweepOptions& opt) {
  FoldResult result;
  result.held_out = fold.held_out;
  std::vector<double> train_scores, test_scores;
  std::vector<bool> train_labels;
  std::vector<const FoldRecord*> test_records;

  if (kind == ModelKind::rasch) {
    std::vector<ResponseRecord> responses;
    for (const auto& r : fold.train) responses.push_back({r.user, r.item, r.label, std::nullopt});
    const auto params = fit(responses);
    for (const auto& r : fold.train)
      if (r.stateful) {
        train_scores.push_back(predict_response(params, r.user, r.item));
        train_labels.push_back(r.label);
      }
    result.threshold = eer_threshold(train_scores, train_labels);
    for (const auto& r : fold.test) {
      const double score = predict_response(params, r.user, r.item);
      const bool predicted = predict_understanding(params, r.user, params.b.at(r.item), result.threshold);
      result.records.push_back({r.item, ds.bank.at(r.item).difficulty, score, predicted, r.label});
    }
    return result;
  }

  const StateBranch branch = kind == ModelKind::smart_mlp   ? StateBranch::mlp
                             : kind == ModelKind::smart_tcn ? StateBranch::tcn
                                                            : StateBranch::none;
  std::set<CellKey> train_cells;
  for (const auto& r : fold.train)
    if (r.stateful) train_cells.insert({r.user, r.item});
  const FeatureSet scaled = opt.standardize ? standardize(features, train_cells) : features;

  auto to_sample = [&](const FoldRecord& r) -> std::optional<Sample> {
    Sample s{r.user, r.item, r.label, r.stateful, nullptr, nullptr};
    if (!r.stateful || branch == StateBranch::none) return s;
    const CellKey key{r.user, r.item};
    if (branch == StateBranch::mlp) {
      auto it = scaled.global.find(key);
      if (it == scaled.global.end()) return std::nullopt;
      s.global = it->second;
    } else {
      auto it = scaled.local.find(key);
      if (it == scaled.local.end()) return std::nullopt;
      s.local = it->second;
    }
    return s;
  };

  std::vector<Sample> train_samples, test_samples;
  for (const auto& r : fold.train)
    if (auto s = to_sample(r)) train_samples.push_back(std::move(*s));
  for (const auto& r : fold.test) {
    if (auto s = to_sample(r)) {
      test_samples.push_back(std::move(*s));
      test_records.push_back(&r);
    } else {
      ++result.skipped;
    }
  }

  std::vector<std::string> users;
  for (const auto& s : ds.sessions) users.push_back(s.user);
  DeepIrtModel model(users, model_items(ds), branch, seed, opt.readout);
  TrainConfig config;
  config.lr = opt.lr;
  config.batch_size = opt.batch_size;
  config.epochs = opt.epochs;
  config.seed = seed;
  config.window = window;
  train(model, train_samples, config);

  for (const auto& s : train_samples)
    if (s.stateful) {
      train_scores.push_back(model.predict(s).p);
      train_labels.push_back(s.label);
    }
  result.threshold = eer_threshold(train_scores, train_labels);
  test_scores = predict_batch(model, test_samples);
  for (std::size_t i = 0; i < test_samples.size(); ++i) {
    const auto& r = *test_records[i];
    result.records.push_back(
        {r.item, ds.bank.at(r.item).difficulty, test_scores[i], test_scores[i] >= result.threshold, r.label});
  }
  return result;
}

inline void summarize(WindowResult& w) {
  std::size_t hits = 0, n = 0;
  std::vector<double> scores;
  std::vector<bool> labels;
  for (const auto& f : w.folds)
    for (const auto& r : f.records) {
      ++n;
      hits += r.predicted == r.truth ? 1 : 0;
      scores.push_back(r.score);
      labels.push_back(r.truth);
    }
  w.n = n;
  w.accuracy = n ? static_cast<double>(hits) / static_cast<double>(n) : 0.0;
  w.standard_error = n ? std::sqrt(w.accuracy * (1.0 - w.accuracy) / static_cast<double>(n)) : 0.0;
  w.auc = auc(scores, labels);
}

}  // namespace detail

// Leave-one-out evaluation of one model variant over a set of window lengths.
// Fold k trains with seed base_seed + k; thresholds come from the fold's own
// training predictions. Variants without a state branch do not depend on the
// window, so their folds are computed once and shared across windows.
inline SweepReport run_sweep(const Dataset& ds, const std::string& variant, std::vector<int> windows,
                             std::uint64_t base_seed, const SweepOptions& opt = {}) {
  const ModelKind kind = parse_model(variant);
  if (windows.empty()) throw ConfigError("sweep needs at least one window length");
  std::sort(windows.begin(), windows.end());
  windows.erase(std::unique(windows.begin(), windows.end()), windows.end());
  for (int w : windows) WindowSpec{w, opt.pool_stride}.validate();
  const auto folds = loocv_folds(ds);
  const bool uses_window = kind == ModelKind::smart_mlp || kind == ModelKind::smart_tcn;

  SweepReport report;
  report.variant = variant;
  std::optional<std::vector<FoldResult>> shared;
  for (int minutes : windows) {
    const WindowSpec spec{minutes, opt.pool_stride};
    WindowResult wr;
    wr.minutes = minutes;
    if (!uses_window && shared) {
      wr.folds = *shared;
    } else {
      if (opt.progress) opt.progress(variant + ": featurizing W=" + std::to_string(minutes));
      detail::FeatureSet features;
      try {
        features = detail::compute_features(ds, kind, spec);
      } catch (const Error& e) {
        detail::rethrow_with_context(e, variant + " W=" + std::to_string(minutes) + ": ");
      }
      wr.folds.resize(folds.size());
      auto run_fold = [&](std::size_t k) {
        if (opt.progress)
          opt.progress(variant + " W=" + std::to_string(minutes) + " fold " + std::to_string(k + 1) + "/" +
                       std::to_string(folds.size()));
        try {
          wr.folds[k] = detail::score_fold(ds, folds[k], kind, features, base_seed + k, spec, opt);
        } catch (const Error& e) {
          detail::rethrow_with_context(e, variant + " W=" + std::to_string(minutes) + " fold " +
                                              folds[k].held_out + ": ");
        }
      };
      const std::size_t threads = static_cast<std::size_t>(std::max(1, opt.threads));
      if (threads == 1) {
        for (std::size_t k = 0; k < folds.size(); ++k) run_fold(k);
      } else {
        for (std::size_t start = 0; start < folds.size(); start += threads) {
          std::vector<std::future<void>> jobs;
          for (std::size_t k = start; k < std::min(folds.size(), start + threads); ++k)
            jobs.push_back(std::async(std::launch::async, run_fold, k));
          for (auto& j : jobs) j.get();
        }
      }
      if (!uses_window) shared = wr.folds;
    }
    detail::summarize(wr);
    report.windows.push_back(std::move(wr));
  }
  report.breakdown_window = opt.breakdown_window.value_or(windows.back());
  report.by_difficulty = difficulty_breakdown(report.at(report.breakdown_window).folds, ds.bank);
  return report;
}

}  // namespace smartvr
