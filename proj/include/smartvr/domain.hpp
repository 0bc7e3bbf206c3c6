#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "smartvr/errors.hpp"

namespace smartvr {

inline constexpr std::size_t kFacialChannels = 51;
inline constexpr double kNominalRate = 30.0;

struct FacialFrame {
  double t = 0.0;  // seconds since segment start
  std::vector<double> values;  // expression intensities in [0,1]

  bool operator==(const FacialFrame&) const = default;
};

struct FacialStream {
  std::string segment_id;
  std::vector<FacialFrame> frames;
  double nominal_rate = kNominalRate;

  // Covered time span including the last frame's own interval.
  double duration() const {
    if (frames.empty()) return 0.0;
    return frames.back().t - frames.front().t + 1.0 / nominal_rate;
  }

  bool operator==(const FacialStream&) const = default;
};

enum class ItemKind { pretest_question, trial_question, lecture_question, lecture_video };
enum class Difficulty { easy, medium, hard };

inline constexpr bool is_question(ItemKind k) { return k != ItemKind::lecture_video; }

inline std::string_view to_string(ItemKind k) {
  switch (k) {
    case ItemKind::pretest_question: return "pretest_question";
    case ItemKind::trial_question: return "trial_question";
    case ItemKind::lecture_question: return "lecture_question";
    case ItemKind::lecture_video: return "lecture_video";
  }
  return "?";
}

inline std::string_view to_string(Difficulty d) {
  switch (d) {
    case Difficulty::easy: return "easy";
    case Difficulty::medium: return "medium";
    case Difficulty::hard: return "hard";
  }
  return "?";
}

inline ItemKind parse_item_kind(std::string_view s) {
  for (auto k : {ItemKind::pretest_question, ItemKind::trial_question, ItemKind::lecture_question,
                 ItemKind::lecture_video})
    if (to_string(k) == s) return k;
  throw SchemaError("unknown item kind '" + std::string(s) + "'");
}

inline Difficulty parse_difficulty(std::string_view s) {
  for (auto d : {Difficulty::easy, Difficulty::medium, Difficulty::hard})
    if (to_string(d) == s) return d;
  throw SchemaError("unknown difficulty level '" + std::string(s) + "'");
}

struct Item {
  std::string id;
  ItemKind kind = ItemKind::pretest_question;
  Difficulty difficulty = Difficulty::medium;
  std::set<std::string> concept_tags;
  std::optional<std::string> parent_video;  // lecture_question only

  bool operator==(const Item&) const = default;
};

// Items keyed by opaque id. Iteration and index_of() follow lexicographic id
// order, which fixes one-hot positions for the learned models.
class ItemBank {
 public:
  ItemBank() = default;

  explicit ItemBank(std::vector<Item> items) {
    for (auto& item : items) {
      if (item.id.empty()) throw SchemaError("item with empty id");
      auto id = item.id;
      if (!items_.emplace(id, std::move(item)).second)
        throw SchemaError("duplicate item id '" + id + "'");
    }
    for (const auto& [id, item] : items_) {
      const bool needs_parent = item.kind == ItemKind::lecture_question;
      if (needs_parent != item.parent_video.has_value())
        throw SchemaError("item '" + id + "': parent_video must be set exactly for lecture questions");
      if (needs_parent) {
        const auto* parent = find(*item.parent_video);
        if (parent == nullptr || parent->kind != ItemKind::lecture_video)
          throw SchemaError("item '" + id + "': parent '" + *item.parent_video +
                            "' is not a lecture video in the bank");
      }
    }
  }

  const Item* find(const std::string& id) const {
    auto it = items_.find(id);
    return it == items_.end() ? nullptr : &it->second;
  }

  const Item& at(const std::string& id) const {
    if (const auto* item = find(id)) return *item;
    throw LookupError("unknown item '" + id + "'");
  }

  bool contains(const std::string& id) const { return items_.count(id) != 0; }
  std::size_t size() const { return items_.size(); }
  const std::map<std::string, Item>& items() const { return items_; }

  std::vector<std::string> ids(std::optional<ItemKind> kind = std::nullopt) const {
    std::vector<std::string> out;
    for (const auto& [id, item] : items_)
      if (!kind || item.kind == *kind) out.push_back(id);
    return out;
  }

  std::vector<std::string> questions_of(const std::string& video) const {
    std::vector<std::string> out;
    for (const auto& [id, item] : items_)
      if (item.parent_video == video) out.push_back(id);
    return out;
  }

  bool operator==(const ItemBank&) const = default;

 private:
  std::map<std::string, Item> items_;
};

struct ResponseRecord {
  std::string user;
  std::string item;
  bool correct = false;
  std::optional<double> response_time;

  bool operator==(const ResponseRecord&) const = default;
};

struct UnderstandingLabel {
  std::string user;
  std::string lecture;
  bool understood = false;

  bool operator==(const UnderstandingLabel&) const = default;
};

struct SessionRecord {
  std::string user;
  // nullopt marks a segment whose recording is known to be absent.
  std::map<std::string, std::optional<FacialStream>> streams;
  std::vector<ResponseRecord> responses;
  std::vector<UnderstandingLabel> labels;
  // Opaque passthrough for fields the data model does not type.
  std::map<std::string, std::string> metadata;

  const FacialStream* stream(const std::string& segment) const {
    auto it = streams.find(segment);
    if (it == streams.end() || !it->second) return nullptr;
    return &*it->second;
  }

  bool operator==(const SessionRecord&) const = default;
};

struct Dataset {
  std::vector<SessionRecord> sessions;
  ItemBank bank;
  std::string provenance;
  std::map<std::string, std::string> metadata;  // opaque dataset-level fields

  const SessionRecord* session(const std::string& user) const {
    for (const auto& s : sessions)
      if (s.user == user) return &s;
    return nullptr;
  }

  bool operator==(const Dataset&) const = default;
};

// True iff at least two of the three post-lecture questions were answered
// correctly.
inline bool label_understanding(std::span<const ResponseRecord> responses, const ItemBank& bank) {
  if (responses.size() != 3)
    throw SchemaError("understanding label needs exactly 3 responses, got " +
                      std::to_string(responses.size()));
  std::optional<std::string> video;
  int correct = 0;
  for (const auto& r : responses) {
    if (r.user != responses.front().user) throw SchemaError("responses from mixed users");
    const auto* item = bank.find(r.item);
    if (item == nullptr || item->kind != ItemKind::lecture_question)
      throw SchemaError("response to '" + r.item + "' is not a lecture question");
    if (video && *video != *item->parent_video)
      throw SchemaError("responses span lecture videos '" + *video + "' and '" +
                        *item->parent_video + "'");
    video = item->parent_video;
    correct += r.correct ? 1 : 0;
  }
  return correct >= 2;
}

inline double empirical_accuracy(std::span<const ResponseRecord> responses, const std::string& item) {
  std::size_t n = 0, correct = 0;
  for (const auto& r : responses) {
    if (r.item != item) continue;
    ++n;
    if (r.correct) ++correct;
  }
  if (n == 0) throw InsufficientDataError("no responses for item '" + item + "'");
  return static_cast<double>(correct) / static_cast<double>(n);
}

struct Violation {
  std::string code;
  std::string location;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  std::size_t count(std::string_view code) const {
    return static_cast<std::size_t>(std::count_if(violations.begin(), violations.end(),
                                                  [&](const Violation& v) { return v.code == code; }));
  }
};

// Collects every invariant violation instead of stopping at the first one.
inline ValidationReport validate_session(const SessionRecord& session, const ItemBank& bank) {
  ValidationReport report;
  auto add = [&](std::string code, std::string location, std::string message) {
    report.violations.push_back({std::move(code), std::move(location), std::move(message)});
  };
  const std::string& user = session.user;

  std::map<std::string, std::vector<ResponseRecord>> by_video;
  for (std::size_t i = 0; i < session.responses.size(); ++i) {
    const auto& r = session.responses[i];
    const std::string where = user + "/responses[" + std::to_string(i) + "]";
    if (r.user != user) add("user_mismatch", where, "response belongs to user '" + r.user + "'");
    const auto* item = bank.find(r.item);
    if (item == nullptr) {
      add("unknown_item", where, "item '" + r.item + "' is not in the item bank");
      continue;
    }
    if (!is_question(item->kind)) {
      add("not_a_question", where, "item '" + r.item + "' is a lecture video");
      continue;
    }
    if (item->kind == ItemKind::lecture_question) by_video[*item->parent_video].push_back(r);
  }

  std::set<std::string> labelled;
  for (std::size_t i = 0; i < session.labels.size(); ++i) {
    const auto& l = session.labels[i];
    const std::string where = user + "/labels[" + std::to_string(i) + "]";
    if (l.user != user) add("user_mismatch", where, "label belongs to user '" + l.user + "'");
    const auto* item = bank.find(l.lecture);
    if (item == nullptr || item->kind != ItemKind::lecture_video) {
      add("unknown_lecture", where, "'" + l.lecture + "' is not a lecture video");
      continue;
    }
    if (!labelled.insert(l.lecture).second) {
      add("duplicate_label", where, "second label for lecture '" + l.lecture + "'");
      continue;
    }
    const auto& rs = by_video[l.lecture];
    if (rs.size() != 3) {
      add("label_underivable", where,
          "lecture '" + l.lecture + "' has " + std::to_string(rs.size()) + " question responses, expected 3");
      continue;
    }
    if (label_understanding(rs, bank) != l.understood)
      add("label_mismatch", where, "stored label for '" + l.lecture + "' disagrees with its responses");
    if (session.streams.count(l.lecture) == 0)
      add("missing_segment", where, "no stream entry (present or marked missing) for '" + l.lecture + "'");
  }

  for (const auto& [segment, stream] : session.streams) {
    if (!stream) continue;
    const std::string base = user + "/streams/" + segment;
    if (!(stream->nominal_rate > 0.0) || !std::isfinite(stream->nominal_rate))
      add("bad_rate", base, "nominal rate must be positive");
    for (std::size_t f = 0; f < stream->frames.size(); ++f) {
      const auto& frame = stream->frames[f];
      const std::string where = base + "[frame " + std::to_string(f) + "]";
      if (frame.values.size() != kFacialChannels) {
        add("frame_width", where,
            "frame has " + std::to_string(frame.values.size()) + " values, expected 51");
        continue;
      }
      if (!std::isfinite(frame.t) || frame.t < 0.0) add("bad_time", where, "timestamp must be finite and >= 0");
      if (f > 0 && !(frame.t > stream->frames[f - 1].t))
        add("non_monotone_time", where, "timestamp does not increase");
      const bool in_range = std::all_of(frame.values.begin(), frame.values.end(),
                                        [](double v) { return v >= 0.0 && v <= 1.0; });
      if (!in_range) add("value_out_of_range", where, "expression value outside [0,1]");
    }
  }
  return report;
}

}  // namespace smartvr
