#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace smartvr;
using namespace testutil;

namespace {

std::string read_tree(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string out;
  for (const auto& f : files) out += fs::relative(f, root).string() + "\n" + slurp(f) + "\n";
  return out;
}

void replace_header(const fs::path& file, const std::string& header) {
  auto text = slurp(file);
  text.replace(0, text.find('\n'), header);
  dataio::write_text(file, text);
}

void replace_all(const fs::path& file, const std::string& from, const std::string& to) {
  auto text = slurp(file);
  for (std::size_t pos = 0; (pos = text.find(from, pos)) != std::string::npos; pos += to.size())
    text.replace(pos, from.size(), to);
  dataio::write_text(file, text);
}

nlohmann::json identity_mapping(const Dataset& ds) {
  nlohmann::json m;
  m["provenance"] = ds.provenance;
  m["items"] = {{"file", "items.csv"},
                {"columns",
                 {{"id", "id"}, {"kind", "kind"}, {"difficulty", "difficulty"}, {"parent_video", "parent_video"},
                  {"concept_tags", "concept_tags"}}}};
  m["responses"] = {{"file", "sessions/{user}/responses.csv"},
                    {"columns", {{"user", "user"}, {"item", "item"}, {"correct", "correct"},
                                 {"response_time", "response_time"}}}};
  m["labels"] = {{"file", "sessions/{user}/labels.csv"}};
  m["streams"] = {{"file", "sessions/{user}/streams/{segment}.csv"},
                  {"time_column", "t"},
                  {"feature_columns", dataio::canonical_feature_columns()}};
  nlohmann::json users = nlohmann::json::array();
  for (const auto& s : ds.sessions) users.push_back(s.user);
  m["users"] = users;
  return m;
}

Dataset short_synthetic(int users) {
  SynthConfig c;
  c.n_users = users;
  c.n_lectures = 3;
  c.stream_minutes = 1;
  c.seed = 77;
  return generate(c).data;
}

}  // namespace

TEST(Csv, QuotingRoundTrip) {
  for (const std::string s : {"plain", "with,comma", "with \"quote\"", ""})
    EXPECT_EQ(dataio::split_csv_line(dataio::csv_field(s) + "," + dataio::csv_field(s)),
              (std::vector<std::string>{s, s}));
}

TEST(Csv, NumbersRoundTripExactly) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int k = 0; k < 1000; ++k) {
    const double v = u(rng);
    EXPECT_EQ(dataio::parse_number(dataio::format_number(v)), v);
  }
  EXPECT_FALSE(dataio::parse_number("1.5x"));
  EXPECT_FALSE(dataio::parse_number(""));
}

TEST(Dataset, RoundTripHandBuilt) {
  const auto dir = scratch_dir("roundtrip_tiny");
  const auto ds = tiny_dataset();
  const auto manifest = dataio::write_dataset(ds, dir / "ds");
  const auto loaded = dataio::load_dataset(manifest);
  EXPECT_EQ(loaded.dataset, ds);
  EXPECT_TRUE(loaded.warnings.empty());
  EXPECT_EQ(loaded.rows_read, loaded.rows_parsed);
}

TEST(Dataset, RoundTripSyntheticIsByteIdempotent) {
  const auto dir = scratch_dir("roundtrip_synth");
  const auto ds = short_synthetic(10);
  const auto first = dataio::write_dataset(ds, dir / "a");
  const auto loaded = dataio::load_dataset(first).dataset;
  EXPECT_EQ(loaded, ds);
  dataio::write_dataset(loaded, dir / "b");
  EXPECT_EQ(read_tree(dir / "a"), read_tree(dir / "b"));
}

TEST(Dataset, MissingStreamSurvivesRoundTrip) {
  const auto dir = scratch_dir("roundtrip_missing");
  auto ds = tiny_dataset();
  ds.sessions[1].streams["V02"] = std::nullopt;
  ds.sessions[0].metadata["device"] = "headset, model \"X\"";
  EXPECT_EQ(dataio::load_dataset(dataio::write_dataset(ds, dir / "ds")).dataset, ds);
}

TEST(Dataset, ShortRowNamesFileAndLine) {
  const auto dir = scratch_dir("short_row");
  const auto manifest = dataio::write_dataset(tiny_dataset(), dir / "ds");
  const auto stream = dir / "ds" / "sessions" / "alice" / "streams" / "V01.csv";
  auto text = slurp(stream);
  // Drop the last value of the fifth data row (file line 6).
  std::size_t pos = 0;
  for (int line = 0; line < 5; ++line) pos = text.find('\n', pos) + 1;
  const std::size_t eol = text.find('\n', pos);
  text.erase(text.rfind(',', eol), eol - text.rfind(',', eol));
  dataio::write_text(stream, text);
  try {
    dataio::load_dataset(manifest);
    FAIL() << "expected a parse error";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("V01.csv:6"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("got 51"), std::string::npos) << e.what();
  }
}

TEST(Dataset, NonNumericValueIsReported) {
  const auto dir = scratch_dir("nonnumeric");
  const auto manifest = dataio::write_dataset(tiny_dataset(), dir / "ds");
  replace_all(dir / "ds" / "sessions" / "bob" / "streams" / "V02.csv", ",0.5\n", ",abc\n");
  EXPECT_THROW(dataio::load_dataset(manifest), IoError);
}

TEST(Dataset, OverwriteNeedsForce) {
  const auto dir = scratch_dir("overwrite");
  const auto ds = tiny_dataset();
  dataio::write_dataset(ds, dir / "ds");
  EXPECT_THROW(dataio::write_dataset(ds, dir / "ds"), IoError);
  EXPECT_NO_THROW(dataio::write_dataset(ds, dir / "ds", true));
  dataio::write_text(dir / "other" / "notes.txt", "keep me");
  EXPECT_THROW(dataio::write_dataset(ds, dir / "other", true), IoError);
  EXPECT_EQ(slurp(dir / "other" / "notes.txt"), "keep me");
}

TEST(Dataset, InvalidDatasetIsNotWritten) {
  const auto dir = scratch_dir("invalid_write");
  auto ds = tiny_dataset();
  ds.sessions[0].labels[0].understood = !ds.sessions[0].labels[0].understood;
  EXPECT_THROW(dataio::write_dataset(ds, dir / "ds"), SchemaError);
  EXPECT_FALSE(fs::exists(dir / "ds"));
}

TEST(Dataset, OutOfRangeValuesAreClampedWithWarning) {
  const auto dir = scratch_dir("clamp");
  const auto manifest = dataio::write_dataset(tiny_dataset(), dir / "ds");
  const auto stream = dir / "ds" / "sessions" / "alice" / "streams" / "V01.csv";
  auto text = slurp(stream);
  const std::size_t row = text.find('\n') + 1;
  text.replace(text.find(",0.5", row), 4, ",1.7");
  dataio::write_text(stream, text);
  const auto loaded = dataio::load_dataset(manifest);
  ASSERT_EQ(loaded.warnings.size(), 1u);
  EXPECT_NE(loaded.warnings[0].find("clamped 1"), std::string::npos);
  EXPECT_EQ(loaded.dataset.session("alice")->streams.at("V01")->frames[0].values[0], 1.0);
}

TEST(Dataset, DurationDeviationWarns) {
  const auto dir = scratch_dir("duration");
  const auto manifest = dataio::write_dataset(tiny_dataset(), dir / "ds");
  auto doc = nlohmann::json::parse(slurp(manifest));
  doc["sessions"]["bob"]["streams"]["V01"]["expected_seconds"] = 3.3;  // 99 frames vs 90 present
  dataio::write_text(manifest, doc.dump());
  const auto loaded = dataio::load_dataset(manifest);
  ASSERT_EQ(loaded.warnings.size(), 1u);
  EXPECT_NE(loaded.warnings[0].find("90 frames"), std::string::npos);
  doc["sessions"]["bob"]["streams"]["V01"]["expected_seconds"] = 3.1;  // within 5%
  dataio::write_text(manifest, doc.dump());
  EXPECT_TRUE(dataio::load_dataset(manifest).warnings.empty());
}

TEST(Dataset, UnknownItemAndBadManifest) {
  const auto dir = scratch_dir("unknown_item");
  const auto manifest = dataio::write_dataset(tiny_dataset(), dir / "ds");
  replace_all(dir / "ds" / "sessions" / "alice" / "responses.csv", "P02", "P99");
  EXPECT_THROW(dataio::load_dataset(manifest), IoError);
  dataio::write_text(manifest, "{ not json");
  EXPECT_THROW(dataio::load_dataset(manifest), IoError);
  EXPECT_THROW(dataio::load_dataset(dir / "nowhere" / "manifest.json"), IoError);
}

TEST(Import, IdentityMappingEqualsDirectLoad) {
  const auto dir = scratch_dir("import_identity");
  const auto ds = tiny_dataset();
  const auto manifest = dataio::write_dataset(ds, dir / "ds");
  const auto imported = dataio::import_external(dir / "ds", identity_mapping(ds));
  EXPECT_EQ(imported.dataset, dataio::load_dataset(manifest).dataset);
  EXPECT_TRUE(imported.warnings.empty());
}

TEST(Import, RenamedColumnsAndValueTables) {
  const auto dir = scratch_dir("import_renamed");
  const auto ds = short_synthetic(3);
  dataio::write_dataset(ds, dir / "src");
  const auto root = dir / "src";
  replace_header(root / "items.csv", "ItemID,Type,Level,Parent,Tags");
  replace_all(root / "items.csv", ",lecture_question,", ",LQ,");
  replace_all(root / "items.csv", ",hard,", ",3,");
  std::vector<std::string> au;
  for (int c = 1; c <= 51; ++c) au.push_back("AU" + std::to_string(c));
  std::string stream_header = "Timestamp";
  for (const auto& a : au) stream_header += "," + a;
  for (const auto& s : ds.sessions) {
    replace_header(root / "sessions" / s.user / "responses.csv", "Student,Question,Score,Seconds");
    for (const auto& [segment, stream] : s.streams) replace_header(root / "sessions" / s.user / "streams" / (segment + ".csv"), stream_header);
  }

  auto m = identity_mapping(ds);
  m["items"]["columns"] = {{"id", "ItemID"}, {"kind", "Type"}, {"difficulty", "Level"}, {"parent_video", "Parent"},
                           {"concept_tags", "Tags"}};
  m["items"]["kind_values"] = {{"LQ", "lecture_question"}};
  m["items"]["difficulty_values"] = {{"3", "hard"}};
  m["responses"]["columns"] = {{"user", "Student"}, {"item", "Question"}, {"correct", "Score"},
                               {"response_time", "Seconds"}};
  m.erase("labels");  // recomputed from the question responses
  m["streams"]["time_column"] = "Timestamp";
  m["streams"]["feature_columns"] = au;
  m["streams"]["segments"] = "lectures";
  const auto imported = dataio::import_external(root, m).dataset;
  EXPECT_EQ(imported, ds);
}

TEST(Import, UnmappedColumnsAreKeptAsMetadata) {
  const auto dir = scratch_dir("import_metadata");
  const auto ds = tiny_dataset();
  dataio::write_dataset(ds, dir / "src");
  const auto root = dir / "src";
  replace_all(root / "items.csv", "concept_tags\n", "concept_tags,author\n");
  {
    auto text = slurp(root / "items.csv");
    std::string out;
    std::size_t pos = text.find('\n') + 1;
    out = text.substr(0, pos);
    while (pos < text.size()) {
      const std::size_t end = text.find('\n', pos);
      out += text.substr(pos, end - pos) + ",kim\n";
      pos = end + 1;
    }
    dataio::write_text(root / "items.csv", out);
  }
  const auto imported = dataio::import_external(root, identity_mapping(ds)).dataset;
  EXPECT_EQ(imported.metadata.at("items:V01:author"), "kim");
  EXPECT_EQ(imported.sessions, ds.sessions);
}

TEST(Import, MissingStreamIsMarkedOrRejected) {
  const auto dir = scratch_dir("import_missing");
  const auto ds = tiny_dataset();
  dataio::write_dataset(ds, dir / "src");
  fs::remove(dir / "src" / "sessions" / "bob" / "streams" / "V02.csv");
  auto m = identity_mapping(ds);
  const auto imported = dataio::import_external(dir / "src", m);
  EXPECT_FALSE(imported.dataset.session("bob")->streams.at("V02").has_value());
  ASSERT_EQ(imported.warnings.size(), 1u);
  m["streams"]["missing"] = "error";
  EXPECT_THROW(dataio::import_external(dir / "src", m), IoError);
}

TEST(Import, MissingMandatoryFieldsAreListed) {
  auto m = identity_mapping(tiny_dataset());
  m["items"]["columns"].erase("difficulty");
  m["streams"].erase("time_column");
  try {
    dataio::import_external(fs::temp_directory_path(), m);
    FAIL() << "expected a schema error";
  } catch (const SchemaError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("items.columns.difficulty"), std::string::npos) << msg;
    EXPECT_NE(msg.find("streams.time_column"), std::string::npos) << msg;
  }
}

TEST(Fixture, ShippedDatasetLoads) {
  const auto loaded = dataio::load_dataset(fs::path(SMARTVR_FIXTURES) / "tiny" / "manifest.json");
  EXPECT_EQ(loaded.dataset.sessions.size(), 2u);
  EXPECT_EQ(loaded.dataset.bank.size(), 21u);
  EXPECT_TRUE(loaded.warnings.empty());
}

TEST(Import, ShippedTemplateDeclaresEveryMandatoryField) {
  const auto mapping = nlohmann::json::parse(slurp(fs::path(SMARTVR_FIXTURES) / ".." / ".." / "data" /
                                                   "smarte_vr_mapping.template.json"));
  EXPECT_EQ(mapping.at("streams").at("feature_columns").size(), 51u);
  // Passes the mapping check and fails only on the missing source files.
  EXPECT_THROW(dataio::import_external(scratch_dir("template_source"), mapping), IoError);
}
