#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "smartvr/domain.hpp"
#include "smartvr/rasch.hpp"

namespace smartvr {

struct SynthConfig {
  int n_users = 10;
  int n_lectures = 10;
  int n_pretest = 10;
  int n_trial = 5;
  double ability_sd = 1.0;
  double state_sd = 0.5;         // sigma_phi
  double signal_strength = 0.0;  // alpha: how strongly phi shows in the facial stream
  double level_scale = 1.0;      // easy/medium/hard difficulties at -s, 0, +s
  int stream_minutes = 8;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_users < 1 || n_lectures < 1 || n_pretest < 0 || n_trial < 0)
      throw ConfigError("synthetic population needs positive user and lecture counts");
    if (!(ability_sd >= 0) || !(state_sd >= 0) || !(signal_strength >= 0) || !(level_scale >= 0))
      throw ConfigError("synthetic spreads and signal strength must be non-negative");
    if (stream_minutes < 1) throw ConfigError("streams must last at least one minute");
  }
};

using Cell = std::pair<std::string, std::string>;  // (user, lecture)

struct SynthTruth {
  std::map<std::string, double> theta;
  std::map<std::string, double> b;  // every item, videos included
  std::map<Cell, double> phi;
  std::map<Cell, bool> outcome;

  double probability(const Cell& cell) const {
    return logistic(theta.at(cell.first) - (b.at(cell.second) + phi.at(cell)));
  }
};

struct SynthDataset {
  Dataset data;
  SynthTruth truth;
};

namespace detail {

// splitmix64 finaliser; decorrelates per-user streams derived from one seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Ten-slot level pattern holding 3 easy, 4 medium and 3 hard entries.
inline Difficulty pattern_level(std::size_t k) {
  static constexpr std::array<Difficulty, 10> pattern = {
      Difficulty::easy,   Difficulty::medium, Difficulty::hard,   Difficulty::medium, Difficulty::easy,
      Difficulty::medium, Difficulty::hard,   Difficulty::medium, Difficulty::easy,   Difficulty::hard};
  return pattern[k % pattern.size()];
}

inline double level_value(Difficulty d, double scale) {
  switch (d) {
    case Difficulty::easy: return -scale;
    case Difficulty::medium: return 0.0;
    case Difficulty::hard: return scale;
  }
  return 0.0;
}

inline std::string numbered(const std::string& prefix, int k) {
  return prefix + (k < 10 ? "0" : "") + std::to_string(k);
}

inline double quantize(double v) { return std::round(v * 1e4) / 1e4; }

}  // namespace detail

// 51 channels at 30 Hz. Every channel is a mean-reverting walk (time constant
// two minutes, stationary sd 0.2) clamped to [0,1]. Channels 0-9 have their
// baseline raised by 0.2*alpha*phi; channel 10 carries 0.5 s pulses to 1.0 at
// (2 + alpha*phi) per minute, floored at 0.2. Values are rounded to 1e-4.
inline FacialStream generate_stream(double phi, int minutes, double alpha, std::uint64_t seed,
                                    const std::string& segment_id = "segment") {
  if (minutes < 1) throw ConfigError("stream must last at least one minute");
  constexpr double kTau = 120.0 * kNominalRate;  // frames
  constexpr double kSd = 0.2;
  constexpr int kPulseFrames = 15;
  const double kappa = 1.0 / kTau;
  const double step_sd = kSd * std::sqrt(2.0 * kappa - kappa * kappa);
  const std::size_t n = static_cast<std::size_t>(minutes) * 1800;

  std::array<double, kFacialChannels> base{};
  for (std::size_t c = 0; c < kFacialChannels; ++c) {
    const double golden = std::fmod(static_cast<double>(c) * 0.6180339887498949, 1.0);
    base[c] = 0.25 + 0.3 * golden;
    if (c < 10) base[c] += 0.2 * alpha * phi;
  }
  base[10] = 0.05;
  const double pulse_rate = std::max(2.0 + alpha * phi, 0.2) / (60.0 * kNominalRate);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::array<double, kFacialChannels> x{};
  for (std::size_t c = 0; c < kFacialChannels; ++c) x[c] = base[c] + (c == 10 ? 0.02 : kSd) * normal(rng);

  FacialStream stream{segment_id, {}, kNominalRate};
  stream.frames.reserve(n);
  int pulse_left = 0;
  for (std::size_t k = 0; k < n; ++k) {
    FacialFrame frame{static_cast<double>(k) / kNominalRate, std::vector<double>(kFacialChannels)};
    for (std::size_t c = 0; c < kFacialChannels; ++c) {
      const double sd = c == 10 ? 0.02 * std::sqrt(2.0 * kappa) : step_sd;
      x[c] += kappa * (base[c] - x[c]) + sd * normal(rng);
      frame.values[c] = detail::quantize(std::clamp(x[c], 0.0, 1.0));
    }
    if (pulse_left == 0 && unit(rng) < pulse_rate) pulse_left = kPulseFrames;
    if (pulse_left > 0) {
      frame.values[10] = 1.0;
      --pulse_left;
    }
    stream.frames.push_back(std::move(frame));
  }
  return stream;
}

// Item bank shared by every synthetic session: trial video V00 with its trial
// questions, pretest questions, and lectures each followed by three questions
// (easy lecture: 2 easy + 1 medium, medium: 3 medium, hard: 2 hard + 1 medium).
inline ItemBank synth_item_bank(const SynthConfig& config) {
  std::vector<Item> items;
  items.push_back({"V00", ItemKind::lecture_video, Difficulty::easy, {"trial"}, std::nullopt});
  for (int k = 1; k <= config.n_trial; ++k)
    items.push_back({detail::numbered("T", k), ItemKind::trial_question, detail::pattern_level(k - 1), {"trial"},
                     std::nullopt});
  for (int k = 1; k <= config.n_pretest; ++k)
    items.push_back({detail::numbered("P", k), ItemKind::pretest_question, detail::pattern_level(k - 1),
                     {"pretest"}, std::nullopt});
  for (int l = 1; l <= config.n_lectures; ++l) {
    const auto video = detail::numbered("L", l);
    const Difficulty level = detail::pattern_level(l - 1);
    items.push_back({video, ItemKind::lecture_video, level, {"lecture"}, std::nullopt});
    for (int q = 1; q <= 3; ++q) {
      Difficulty ql = level;
      if (level != Difficulty::medium && q == 3) ql = Difficulty::medium;
      items.push_back({video + "Q" + std::to_string(q), ItemKind::lecture_question, ql, {"lecture:" + video},
                       video});
    }
  }
  return ItemBank(std::move(items));
}

// Samples a population from logistic(theta - (b + phi)) and renders facial
// streams for every lecture. Question responses inside a lecture are
// resampled until they reproduce the lecture outcome under the 2-of-3 rule.
inline SynthDataset generate(const SynthConfig& config) {
  config.validate();
  SynthDataset out;
  out.data.bank = synth_item_bank(config);
  const auto& bank = out.data.bank;
  for (const auto& [id, item] : bank.items()) out.truth.b[id] = detail::level_value(item.difficulty, config.level_scale);

  std::vector<std::string> trial = bank.ids(ItemKind::trial_question);
  std::vector<std::string> pretest = bank.ids(ItemKind::pretest_question);
  std::vector<std::string> lectures;
  for (const auto& id : bank.ids(ItemKind::lecture_video))
    if (id != "V00") lectures.push_back(id);

  for (int u = 0; u < config.n_users; ++u) {
    const std::string user = detail::numbered("U", u + 1);
    std::mt19937_64 rng(detail::mix_seed(config.seed, static_cast<std::uint64_t>(u)));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto draw = [&](double p) { return unit(rng) < p; };

    const double theta = config.ability_sd * normal(rng);
    out.truth.theta[user] = theta;
    SessionRecord session;
    session.user = user;

    for (const auto* block : {&trial, &pretest})
      for (const auto& q : *block)
        session.responses.push_back({user, q, draw(logistic(theta - out.truth.b.at(q))), std::nullopt});

    for (const auto& video : lectures) {
      const double phi = config.state_sd * normal(rng);
      const Cell cell{user, video};
      out.truth.phi[cell] = phi;
      const bool understood = draw(logistic(theta - (out.truth.b.at(video) + phi)));
      out.truth.outcome[cell] = understood;

      const auto questions = bank.questions_of(video);
      std::vector<ResponseRecord> answers;
      bool consistent = false;
      for (int attempt = 0; attempt < 1000 && !consistent; ++attempt) {
        answers.clear();
        for (const auto& q : questions)
          answers.push_back({user, q, draw(logistic(theta - (out.truth.b.at(q) + phi))), std::nullopt});
        consistent = label_understanding(answers, bank) == understood;
      }
      // Fallback for extreme latents: flip the fewest answers needed.
      for (auto& a : answers) {
        if (label_understanding(answers, bank) == understood) break;
        a.correct = understood;
      }
      for (auto& a : answers) a.response_time = std::round((5.0 + 55.0 * unit(rng)) * 10.0) / 10.0;
      session.responses.insert(session.responses.end(), answers.begin(), answers.end());
      session.labels.push_back({user, video, understood});

      const std::uint64_t stream_seed = rng();
      session.streams[video] = generate_stream(phi, config.stream_minutes, config.signal_strength, stream_seed, video);
    }
    out.data.sessions.push_back(std::move(session));
  }
  out.data.provenance = "synthetic seed=" + std::to_string(config.seed);
  return out;
}

// Expected accuracy of the ideal rule 1[p >= threshold] against outcomes
// redrawn from the true probabilities, estimated by Monte-Carlo. Restricted to
// `cells` when given.
inline double bayes_accuracy(const SynthTruth& truth, double threshold = 0.5, int resamples = 100000,
                             std::uint64_t seed = 0, const std::vector<Cell>* cells = nullptr) {
  std::vector<double> probs;
  if (cells) {
    for (const auto& c : *cells) probs.push_back(truth.probability(c));
  } else {
    for (const auto& [c, phi] : truth.phi) probs.push_back(truth.probability(c));
  }
  if (probs.empty()) throw InsufficientDataError("no cells for the Bayes oracle");
  std::vector<bool> predicted;
  for (double p : probs) predicted.push_back(p >= threshold);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uint64_t hits = 0;
  for (int r = 0; r < resamples; ++r)
    for (std::size_t k = 0; k < probs.size(); ++k) hits += (unit(rng) < probs[k]) == predicted[k] ? 1 : 0;
  return static_cast<double>(hits) / (static_cast<double>(resamples) * static_cast<double>(probs.size()));
}

struct RaschSample {
  std::vector<ResponseRecord> responses;
  std::map<std::string, double> theta;
  std::map<std::string, double> b;
};

// Complete users x items response matrix drawn from the 1PL model, item
// difficulties cycling through the easy/medium/hard levels.
inline RaschSample sample_rasch(int n_users, int n_items, double ability_sd, double level_scale,
                                std::uint64_t seed) {
  if (n_users < 1 || n_items < 1) throw ConfigError("Rasch sample needs users and items");
  RaschSample out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto id = [](char prefix, int k) {
    auto s = std::to_string(k);
    return std::string(1, prefix) + std::string(s.size() < 3 ? 3 - s.size() : 0, '0') + s;
  };
  for (int i = 0; i < n_items; ++i)
    out.b[id('I', i)] = detail::level_value(static_cast<Difficulty>(i % 3), level_scale);
  for (int u = 0; u < n_users; ++u) out.theta[id('S', u)] = ability_sd * normal(rng);
  for (const auto& [user, theta] : out.theta)
    for (const auto& [item, b] : out.b) out.responses.push_back({user, item, unit(rng) < logistic(theta - b), std::nullopt});
  return out;
}

}  // namespace smartvr
