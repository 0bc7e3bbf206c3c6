#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "smartvr/domain.hpp"
#include "smartvr/errors.hpp"

namespace smartvr {

struct WindowSpec {
  int minutes = 8;      // window length W_l, anchored at the end of the segment
  int pool_stride = 1;  // temporal mean-pooling factor

  void validate() const {
    if (minutes < 1 || minutes > 8)
      throw ConfigError("window length must be in 1..8 minutes, got " + std::to_string(minutes));
    if (pool_stride < 1) throw ConfigError("pool stride must be >= 1");
  }

  std::size_t grid_frames() const { return static_cast<std::size_t>(1800 * minutes); }
  std::size_t rows() const { return grid_frames() / static_cast<std::size_t>(pool_stride); }

  bool operator==(const WindowSpec&) const = default;
};

// Row-major T x 51 matrix of regularized frames.
struct LocalTensor {
  std::size_t rows = 0;
  std::vector<double> data;
  WindowSpec spec;

  static constexpr std::size_t cols = kFacialChannels;

  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  bool operator==(const LocalTensor&) const = default;
};

enum class GlobalStat { max, min, mean, std, median, kurtosis, skewness, rate_of_change };
inline constexpr std::size_t kGlobalStats = 8;
inline constexpr std::size_t kGlobalVectorSize = kGlobalStats * kFacialChannels;

// stats[stat * 51 + channel], stat order as in GlobalStat.
struct GlobalVector {
  std::array<double, kGlobalVectorSize> stats{};

  double at(GlobalStat s, std::size_t channel) const {
    return stats[static_cast<std::size_t>(s) * kFacialChannels + channel];
  }

  bool operator==(const GlobalVector&) const = default;
};

// Resamples the final `spec.minutes` of the stream onto a uniform 30 Hz grid
// whose last sample sits on the last frame. Grid points before the first frame
// repeat the first frame; all other points take the nearest frame in time
// (earlier frame on ties). Blocks of pool_stride rows are then averaged.
inline LocalTensor extract_window(const FacialStream& stream, const WindowSpec& spec) {
  spec.validate();
  const auto& frames = stream.frames;
  if (frames.empty())
    throw InsufficientDataError("stream '" + stream.segment_id + "' has no frames");
  if (stream.duration() < 1.0 - 1e-9)
    throw InsufficientDataError("stream '" + stream.segment_id + "' is shorter than one second");
  for (const auto& f : frames)
    if (f.values.size() != kFacialChannels)
      throw ShapeError("stream '" + stream.segment_id + "' has a frame with " +
                       std::to_string(f.values.size()) + " values");

  const std::size_t n = spec.grid_frames();
  const double t_last = frames.back().t;
  std::vector<std::size_t> source(n);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = t_last - static_cast<double>(n - 1 - i) / kNominalRate;
    if (g <= frames.front().t) {
      source[i] = 0;
      continue;
    }
    while (k + 1 < frames.size() && frames[k + 1].t <= g) ++k;
    std::size_t pick = k;
    if (k + 1 < frames.size() && frames[k + 1].t - g < g - frames[k].t) pick = k + 1;
    source[i] = pick;
  }

  const std::size_t stride = static_cast<std::size_t>(spec.pool_stride);
  const std::size_t rows = n / stride;
  const std::size_t skip = n - rows * stride;  // drop the oldest remainder
  LocalTensor out{rows, std::vector<double>(rows * kFacialChannels, 0.0), spec};
  for (std::size_t r = 0; r < rows; ++r) {
    double* dst = out.data.data() + r * kFacialChannels;
    for (std::size_t j = 0; j < stride; ++j) {
      const auto& v = frames[source[skip + r * stride + j]].values;
      for (std::size_t c = 0; c < kFacialChannels; ++c) dst[c] += v[c];
    }
    if (stride > 1)
      for (std::size_t c = 0; c < kFacialChannels; ++c) dst[c] /= static_cast<double>(stride);
  }
  return out;
}

namespace detail {

struct ChannelStats {
  double max, min, mean, std, median, kurtosis, skewness, rate_of_change;
};

inline ChannelStats channel_stats(std::vector<double>& x) {
  const std::size_t n = x.size();
  ChannelStats s{};
  double roc = 0.0;
  for (std::size_t i = 1; i < n; ++i) roc += std::abs(x[i] - x[i - 1]);
  s.rate_of_change = roc / static_cast<double>(n - 1);

  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  s.min = *lo;
  s.max = *hi;
  double sum = 0.0;
  for (double v : x) sum += v;
  s.mean = sum / static_cast<double>(n);

  if (s.max == s.min) {
    s.mean = s.median = s.max;
    s.std = s.kurtosis = s.skewness = 0.0;
    return s;
  }
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double d = v - s.mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= static_cast<double>(n);
  m3 /= static_cast<double>(n);
  m4 /= static_cast<double>(n);
  s.std = std::sqrt(m2);
  s.skewness = m3 / (m2 * s.std);
  s.kurtosis = m4 / (m2 * m2) - 3.0;

  const std::size_t mid = n / 2;
  std::nth_element(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(mid), x.end());
  const double upper = x[mid];
  if (n % 2 == 1) {
    s.median = upper;
  } else {
    const double lower = *std::max_element(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(mid));
    s.median = 0.5 * (lower + upper);
  }
  return s;
}

}  // namespace detail

// Eight per-channel summary statistics. Standard deviation is the population
// value, kurtosis is Fisher excess kurtosis, and constant channels report
// zero spread, skewness and kurtosis.
inline GlobalVector global_stats(const LocalTensor& tensor) {
  if (tensor.rows < 2)
    throw InsufficientDataError("global statistics need at least 2 frames, got " + std::to_string(tensor.rows));
  GlobalVector g;
  std::vector<double> channel(tensor.rows);
  for (std::size_t c = 0; c < kFacialChannels; ++c) {
    for (std::size_t r = 0; r < tensor.rows; ++r) channel[r] = tensor.at(r, c);
    const auto s = detail::channel_stats(channel);
    const double values[kGlobalStats] = {s.max,    s.min,      s.mean,     s.std,
                                         s.median, s.kurtosis, s.skewness, s.rate_of_change};
    for (std::size_t k = 0; k < kGlobalStats; ++k) g.stats[k * kFacialChannels + c] = values[k];
  }
  return g;
}

}  // namespace smartvr
