#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "smartvr/smartvr.hpp"

namespace testutil {

namespace fs = std::filesystem;
using namespace smartvr;

// Two lectures (V01 easy, V02 hard) with three questions each, two pretest
// questions and one trial question.
inline ItemBank tiny_bank() {
  std::vector<Item> items{
      {"P01", ItemKind::pretest_question, Difficulty::easy, {"pretest"}, std::nullopt},
      {"P02", ItemKind::pretest_question, Difficulty::hard, {"pretest"}, std::nullopt},
      {"T01", ItemKind::trial_question, Difficulty::medium, {"trial"}, std::nullopt},
      {"V01", ItemKind::lecture_video, Difficulty::easy, {"lecture"}, std::nullopt},
      {"V02", ItemKind::lecture_video, Difficulty::hard, {"lecture"}, std::nullopt},
  };
  for (const char* v : {"V01", "V02"})
    for (int q = 1; q <= 3; ++q)
      items.push_back({std::string(v) + "Q" + std::to_string(q), ItemKind::lecture_question, Difficulty::medium,
                       {"lecture"}, std::string(v)});
  return ItemBank(items);
}

inline FacialStream flat_stream(const std::string& id, std::size_t frames, double value = 0.5, double rate = 30.0) {
  FacialStream s{id, {}, rate};
  for (std::size_t f = 0; f < frames; ++f)
    s.frames.push_back({static_cast<double>(f) / rate, std::vector<double>(kFacialChannels, value)});
  return s;
}

// Valid session for the tiny bank; v1/v2 are the three answers per lecture.
inline SessionRecord tiny_session(const std::string& user, std::vector<bool> v1, std::vector<bool> v2,
                                  std::vector<bool> pretest = {true, false}) {
  SessionRecord s;
  s.user = user;
  s.responses.push_back({user, "P01", pretest[0], 12.5});
  s.responses.push_back({user, "P02", pretest[1], std::nullopt});
  s.responses.push_back({user, "T01", true, std::nullopt});
  const ItemBank bank = tiny_bank();
  for (const auto& [video, answers] : {std::pair{std::string("V01"), v1}, std::pair{std::string("V02"), v2}}) {
    std::vector<ResponseRecord> rs;
    for (int q = 0; q < 3; ++q) rs.push_back({user, video + "Q" + std::to_string(q + 1), answers[q], std::nullopt});
    s.responses.insert(s.responses.end(), rs.begin(), rs.end());
    s.labels.push_back({user, video, label_understanding(rs, bank)});
    s.streams[video] = flat_stream(video, 90);
  }
  return s;
}

inline Dataset tiny_dataset() {
  Dataset ds;
  ds.bank = tiny_bank();
  ds.provenance = "hand-built";
  ds.sessions.push_back(tiny_session("alice", {true, true, false}, {false, false, true}));
  ds.sessions.push_back(tiny_session("bob", {true, false, false}, {true, true, true}, {false, true}));
  return ds;
}

// Fresh empty directory under the build tree's temp area.
inline fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("smartvr_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

inline std::string slurp(const fs::path& p) { return dataio::read_file(p); }

}  // namespace testutil
