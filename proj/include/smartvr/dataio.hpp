#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"
#include "smartvr/domain.hpp"

namespace smartvr::dataio {

namespace fs = std::filesystem;

inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kFormatTag = "smartvr-dataset";
inline constexpr const char* kFormatVersion = "1";

// Shortest decimal that parses back to the same double.
inline std::string format_number(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw IoError("cannot format number");
  return std::string(buf, end);
}

inline std::optional<double> parse_number(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// ---------------------------------------------------------------------------
// CSV

struct CsvTable {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;  // 1-based source line of each row

  std::string where(std::size_t row) const { return path + ":" + std::to_string(lines[row]); }

  std::optional<std::size_t> column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  }

  std::size_t require_column(std::string_view name) const {
    if (auto c = column(name)) return *c;
    throw IoError(path + ":1: missing column '" + std::string(name) + "'");
  }
};

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Every non-empty row must have as many fields as the header.
inline CsvTable read_csv(const fs::path& path) {
  const std::string text = read_file(path);
  CsvTable table;
  table.path = path.string();
  std::size_t pos = 0, line_no = 0;
  bool have_header = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    pos = end + 1;
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size())
      throw IoError(table.path + ":" + std::to_string(line_no) + ": expected " +
                    std::to_string(table.header.size()) + " columns, got " + std::to_string(fields.size()));
    table.rows.push_back(std::move(fields));
    table.lines.push_back(line_no);
  }
  if (!have_header) throw IoError(table.path + ": empty file (no header)");
  return table;
}

inline void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot write file");
  out << text;
  if (!out) throw IoError(path.string() + ": write failed");
}

// ---------------------------------------------------------------------------
// Row parsers shared by the canonical loader and the importer

inline bool parse_bool(std::string_view s, const std::string& where) {
  if (s == "1" || s == "true" || s == "TRUE" || s == "True") return true;
  if (s == "0" || s == "false" || s == "FALSE" || s == "False") return false;
  throw IoError(where + ": expected a boolean (0/1), got '" + std::string(s) + "'");
}

inline double parse_real(std::string_view s, const std::string& where, std::string_view column) {
  auto v = parse_number(s);
  if (!v || !std::isfinite(*v))
    throw IoError(where + ": column '" + std::string(column) + "' is not numeric ('" + std::string(s) + "')");
  return *v;
}

inline std::set<std::string> split_tags(std::string_view s, char sep = ';') {
  std::set<std::string> tags;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      if (!cur.empty()) tags.insert(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) tags.insert(cur);
  return tags;
}

struct LoadResult {
  Dataset dataset;
  std::vector<std::string> warnings;
  std::size_t rows_read = 0;
  std::size_t rows_parsed = 0;
};

struct StreamReadOptions {
  std::string time_column = "t";
  std::vector<std::string> feature_columns;  // empty: f00..f50
  double time_scale = 1.0;
  bool rebase_time = false;
  double nominal_rate = kNominalRate;
  std::optional<double> expected_seconds;
};

inline std::vector<std::string> canonical_feature_columns() {
  std::vector<std::string> cols;
  for (std::size_t c = 0; c < kFacialChannels; ++c) cols.push_back((c < 10 ? "f0" : "f") + std::to_string(c));
  return cols;
}

// Reads one facial stream; out-of-range intensities are clamped with a warning.
inline FacialStream read_stream(const fs::path& path, const std::string& segment, const StreamReadOptions& opt,
                                LoadResult& result, std::vector<std::string>* unmapped = nullptr) {
  const CsvTable table = read_csv(path);
  const auto names = opt.feature_columns.empty() ? canonical_feature_columns() : opt.feature_columns;
  if (names.size() != kFacialChannels)
    throw IoError(table.path + ": stream mapping lists " + std::to_string(names.size()) + " feature columns, expected 51");
  const std::size_t tcol = table.require_column(opt.time_column);
  std::vector<std::size_t> fcols;
  for (const auto& n : names) fcols.push_back(table.require_column(n));
  if (unmapped) {
    for (std::size_t c = 0; c < table.header.size(); ++c)
      if (c != tcol && std::find(fcols.begin(), fcols.end(), c) == fcols.end()) unmapped->push_back(table.header[c]);
  }

  FacialStream stream{segment, {}, opt.nominal_rate};
  stream.frames.reserve(table.rows.size());
  std::size_t clamped = 0;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    ++result.rows_read;
    const auto& row = table.rows[r];
    FacialFrame frame;
    frame.t = parse_real(row[tcol], table.where(r), opt.time_column) * opt.time_scale;
    frame.values.resize(kFacialChannels);
    for (std::size_t c = 0; c < kFacialChannels; ++c) {
      double v = parse_real(row[fcols[c]], table.where(r), names[c]);
      if (v < 0.0 || v > 1.0) {
        v = std::clamp(v, 0.0, 1.0);
        ++clamped;
      }
      frame.values[c] = v;
    }
    stream.frames.push_back(std::move(frame));
    ++result.rows_parsed;
  }
  if (opt.rebase_time && !stream.frames.empty()) {
    const double t0 = stream.frames.front().t;
    for (auto& f : stream.frames) f.t -= t0;
  }
  if (clamped > 0)
    result.warnings.push_back(table.path + ": clamped " + std::to_string(clamped) + " values into [0,1]");
  if (opt.expected_seconds) {
    const double expected = *opt.expected_seconds * opt.nominal_rate;
    const double got = static_cast<double>(stream.frames.size());
    if (expected > 0 && std::abs(got - expected) > 0.05 * expected)
      result.warnings.push_back(table.path + ": " + std::to_string(stream.frames.size()) + " frames, expected about " +
                                format_number(expected));
  }
  return stream;
}

inline std::string stream_csv(const FacialStream& stream) {
  std::string out = "t";
  for (const auto& n : canonical_feature_columns()) out += "," + n;
  out += '\n';
  out.reserve(stream.frames.size() * kFacialChannels * 8);
  for (const auto& f : stream.frames) {
    out += format_number(f.t);
    for (double v : f.values) {
      out += ',';
      out += format_number(v);
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Canonical dataset layout

inline void check_path_component(const std::string& id, const char* what) {
  if (id.empty() || id == "." || id == ".." || id.find_first_of("/\\") != std::string::npos)
    throw SchemaError(std::string(what) + " id '" + id + "' cannot be used as a file name");
}

inline ItemBank read_items(const CsvTable& table, LoadResult& result) {
  const std::size_t cid = table.require_column("id"), ckind = table.require_column("kind"),
                    cdiff = table.require_column("difficulty"), cparent = table.require_column("parent_video"),
                    ctags = table.require_column("concept_tags");
  std::vector<Item> items;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    ++result.rows_read;
    const auto& row = table.rows[r];
    try {
      Item item{row[cid], parse_item_kind(row[ckind]), parse_difficulty(row[cdiff]), split_tags(row[ctags]),
                std::nullopt};
      if (!row[cparent].empty()) item.parent_video = row[cparent];
      items.push_back(std::move(item));
    } catch (const SchemaError& e) {
      throw IoError(table.where(r) + ": " + e.what());
    }
    ++result.rows_parsed;
  }
  try {
    return ItemBank(std::move(items));
  } catch (const SchemaError& e) {
    throw IoError(table.path + ": " + e.what());
  }
}

inline std::string items_csv(const ItemBank& bank) {
  std::string out = "id,kind,difficulty,parent_video,concept_tags\n";
  for (const auto& [id, item] : bank.items()) {
    std::string tags;
    for (const auto& t : item.concept_tags) tags += (tags.empty() ? "" : ";") + t;
    out += csv_field(id) + "," + std::string(to_string(item.kind)) + "," + std::string(to_string(item.difficulty)) +
           "," + csv_field(item.parent_video.value_or("")) + "," + csv_field(tags) + "\n";
  }
  return out;
}

inline std::string responses_csv(const std::vector<ResponseRecord>& responses) {
  std::string out = "user,item,correct,response_time\n";
  for (const auto& r : responses)
    out += csv_field(r.user) + "," + csv_field(r.item) + "," + (r.correct ? "1" : "0") + "," +
           (r.response_time ? format_number(*r.response_time) : "") + "\n";
  return out;
}

inline std::string labels_csv(const std::vector<UnderstandingLabel>& labels) {
  std::string out = "user,lecture,understood\n";
  for (const auto& l : labels) out += csv_field(l.user) + "," + csv_field(l.lecture) + "," + (l.understood ? "1" : "0") + "\n";
  return out;
}

inline std::string metadata_csv(const std::map<std::string, std::string>& metadata) {
  std::string out = "key,value\n";
  for (const auto& [k, v] : metadata) out += csv_field(k) + "," + csv_field(v) + "\n";
  return out;
}

inline std::map<std::string, std::string> read_metadata(const fs::path& path, LoadResult& result) {
  const auto table = read_csv(path);
  const std::size_t ck = table.require_column("key"), cv = table.require_column("value");
  std::map<std::string, std::string> out;
  for (const auto& row : table.rows) {
    ++result.rows_read;
    out[row[ck]] = row[cv];
    ++result.rows_parsed;
  }
  return out;
}

inline std::vector<ResponseRecord> read_responses(const CsvTable& table, const ItemBank& bank, LoadResult& result) {
  const std::size_t cu = table.require_column("user"), ci = table.require_column("item"),
                    cc = table.require_column("correct"), ct = table.require_column("response_time");
  std::vector<ResponseRecord> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    ++result.rows_read;
    const auto& row = table.rows[r];
    if (!bank.contains(row[ci])) throw IoError(table.where(r) + ": unknown item '" + row[ci] + "'");
    ResponseRecord rec{row[cu], row[ci], parse_bool(row[cc], table.where(r)), std::nullopt};
    if (!row[ct].empty()) rec.response_time = parse_real(row[ct], table.where(r), "response_time");
    out.push_back(std::move(rec));
    ++result.rows_parsed;
  }
  return out;
}

inline std::vector<UnderstandingLabel> read_labels(const CsvTable& table, const ItemBank& bank, LoadResult& result) {
  const std::size_t cu = table.require_column("user"), cl = table.require_column("lecture"),
                    cv = table.require_column("understood");
  std::vector<UnderstandingLabel> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    ++result.rows_read;
    const auto& row = table.rows[r];
    if (!bank.contains(row[cl])) throw IoError(table.where(r) + ": unknown item '" + row[cl] + "'");
    out.push_back({row[cu], row[cl], parse_bool(row[cv], table.where(r))});
    ++result.rows_parsed;
  }
  return out;
}

inline void validate_or_throw(const Dataset& ds) {
  std::set<std::string> users;
  for (const auto& s : ds.sessions) {
    if (!users.insert(s.user).second) throw SchemaError("duplicate session for user '" + s.user + "'");
    const auto report = validate_session(s, ds.bank);
    if (!report.ok()) {
      std::string msg = "session '" + s.user + "' is invalid:";
      for (const auto& v : report.violations) msg += "\n  [" + v.code + "] " + v.location + ": " + v.message;
      throw SchemaError(msg);
    }
  }
}

// Loads and validates a canonical dataset. Out-of-range intensities are
// clamped (warning); any remaining invariant violation is an error.
inline LoadResult load_dataset(const fs::path& manifest_path) {
  const fs::path root = manifest_path.parent_path();
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(manifest_path.string() + ": malformed manifest (" + e.what() + ")");
  }
  LoadResult result;
  try {
    if (manifest.value("format", "") != kFormatTag) throw IoError(manifest_path.string() + ": not a smartvr dataset manifest");
    result.dataset.provenance = manifest.value("provenance", "");
    result.dataset.bank = read_items(read_csv(root / manifest.at("items").get<std::string>()), result);
    if (manifest.contains("metadata"))
      result.dataset.metadata = read_metadata(root / manifest.at("metadata").get<std::string>(), result);
    const auto& bank = result.dataset.bank;
    std::set<std::string> seen;
    for (const auto& user : manifest.at("users")) {
      const auto id = user.get<std::string>();
      if (!seen.insert(id).second) throw IoError(manifest_path.string() + ": duplicate user '" + id + "'");
      const auto& entry = manifest.at("sessions").at(id);
      SessionRecord session;
      session.user = id;
      session.responses = read_responses(read_csv(root / entry.at("responses").get<std::string>()), bank, result);
      session.labels = read_labels(read_csv(root / entry.at("labels").get<std::string>()), bank, result);
      if (entry.contains("metadata")) session.metadata = read_metadata(root / entry.at("metadata").get<std::string>(), result);
      for (const auto& [segment, info] : entry.at("streams").items()) {
        if (info.value("missing", false)) {
          session.streams[segment] = std::nullopt;
          continue;
        }
        StreamReadOptions opt;
        opt.nominal_rate = info.value("nominal_rate", kNominalRate);
        if (info.contains("expected_seconds")) opt.expected_seconds = info.at("expected_seconds").get<double>();
        session.streams[segment] = read_stream(root / info.at("path").get<std::string>(), segment, opt, result);
      }
      result.dataset.sessions.push_back(std::move(session));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(manifest_path.string() + ": malformed manifest (" + e.what() + ")");
  }
  validate_or_throw(result.dataset);
  return result;
}

// Writes the canonical layout and returns the manifest path. An existing
// non-empty directory is replaced only with `force`, and only if it already
// holds a dataset manifest.
inline fs::path write_dataset(const Dataset& ds, const fs::path& dir, bool force = false) {
  validate_or_throw(ds);
  for (const auto& s : ds.sessions) {
    check_path_component(s.user, "user");
    for (const auto& [segment, stream] : s.streams) check_path_component(segment, "segment");
  }
  std::error_code ec;
  if (fs::exists(dir) && !fs::is_empty(dir, ec)) {
    if (!force) throw IoError(dir.string() + ": directory exists and is not empty (use force to overwrite)");
    if (!fs::exists(dir / kManifestName))
      throw IoError(dir.string() + ": refusing to overwrite a directory that does not hold a dataset");
    fs::remove_all(dir);
  }
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir.string() + ": cannot create directory (" + ec.message() + ")");

  nlohmann::json manifest;
  manifest["format"] = kFormatTag;
  manifest["version"] = kFormatVersion;
  manifest["provenance"] = ds.provenance;
  manifest["items"] = "items.csv";
  manifest["users"] = nlohmann::json::array();
  manifest["sessions"] = nlohmann::json::object();
  write_text(dir / "items.csv", items_csv(ds.bank));
  if (!ds.metadata.empty()) {
    manifest["metadata"] = "metadata.csv";
    write_text(dir / "metadata.csv", metadata_csv(ds.metadata));
  }
  for (const auto& s : ds.sessions) {
    const std::string base = "sessions/" + s.user + "/";
    nlohmann::json entry;
    entry["responses"] = base + "responses.csv";
    entry["labels"] = base + "labels.csv";
    write_text(dir / (base + "responses.csv"), responses_csv(s.responses));
    write_text(dir / (base + "labels.csv"), labels_csv(s.labels));
    if (!s.metadata.empty()) {
      entry["metadata"] = base + "metadata.csv";
      write_text(dir / (base + "metadata.csv"), metadata_csv(s.metadata));
    }
    entry["streams"] = nlohmann::json::object();
    for (const auto& [segment, stream] : s.streams) {
      if (!stream) {
        entry["streams"][segment] = {{"missing", true}};
        continue;
      }
      const std::string path = base + "streams/" + segment + ".csv";
      entry["streams"][segment] = {
          {"path", path},
          {"nominal_rate", stream->nominal_rate},
          {"expected_seconds", static_cast<double>(stream->frames.size()) / stream->nominal_rate}};
      write_text(dir / path, stream_csv(*stream));
    }
    manifest["users"].push_back(s.user);
    manifest["sessions"][s.user] = entry;
  }
  const fs::path manifest_path = dir / kManifestName;
  write_text(manifest_path, manifest.dump(2) + "\n");
  return manifest_path;
}

// ---------------------------------------------------------------------------
// Mapping-driven import of external layouts

namespace detail {

inline std::string substitute(std::string pattern, const std::string& user, const std::string& segment = "") {
  auto replace = [&](const std::string& key, const std::string& value) {
    for (std::size_t pos; (pos = pattern.find(key)) != std::string::npos;) pattern.replace(pos, key.size(), value);
  };
  replace("{user}", user);
  replace("{segment}", segment);
  return pattern;
}

inline std::optional<std::string> mapped(const nlohmann::json& section, const char* field) {
  if (!section.contains("columns")) return std::nullopt;
  const auto& cols = section.at("columns");
  if (!cols.contains(field) || !cols.at(field).is_string()) return std::nullopt;
  return cols.at(field).get<std::string>();
}

inline std::string map_value(const nlohmann::json& section, const char* table, const std::string& raw) {
  if (section.contains(table) && section.at(table).contains(raw)) return section.at(table).at(raw).get<std::string>();
  return raw;
}

}  // namespace detail

// Converts an external dataset into the canonical model using a JSON mapping
// (file patterns with {user}/{segment} placeholders, column renames and value
// tables). Columns the mapping does not name are kept as opaque metadata;
// for streams only the unmapped column names are kept.
inline LoadResult import_external(const fs::path& source_dir, const nlohmann::json& mapping) {
  std::vector<std::string> missing;
  auto need = [&](const nlohmann::json& section, const std::string& prefix, const char* field) {
    if (!detail::mapped(section, field)) missing.push_back(prefix + ".columns." + field);
  };
  const auto empty = nlohmann::json::object();
  const auto& items_map = mapping.contains("items") ? mapping.at("items") : empty;
  const auto& resp_map = mapping.contains("responses") ? mapping.at("responses") : empty;
  const auto& stream_map = mapping.contains("streams") ? mapping.at("streams") : empty;
  if (!items_map.contains("file")) missing.push_back("items.file");
  need(items_map, "items", "id");
  need(items_map, "items", "kind");
  need(items_map, "items", "difficulty");
  if (!resp_map.contains("file")) missing.push_back("responses.file");
  need(resp_map, "responses", "item");
  need(resp_map, "responses", "correct");
  if (!stream_map.contains("file")) missing.push_back("streams.file");
  if (!stream_map.contains("time_column")) missing.push_back("streams.time_column");
  if (!stream_map.contains("feature_columns")) missing.push_back("streams.feature_columns");
  if (!mapping.contains("users")) missing.push_back("users");
  if (!missing.empty()) {
    std::string msg = "mapping leaves mandatory fields unmapped:";
    for (const auto& m : missing) msg += " " + m;
    throw SchemaError(msg);
  }

  LoadResult result;
  auto& ds = result.dataset;
  ds.provenance = mapping.value("provenance", "imported from " + source_dir.string());

  // Items
  {
    const auto table = read_csv(source_dir / items_map.at("file").get<std::string>());
    const std::size_t cid = table.require_column(*detail::mapped(items_map, "id"));
    const std::size_t ckind = table.require_column(*detail::mapped(items_map, "kind"));
    const std::size_t cdiff = table.require_column(*detail::mapped(items_map, "difficulty"));
    std::optional<std::size_t> cparent, ctags;
    if (auto c = detail::mapped(items_map, "parent_video")) cparent = table.require_column(*c);
    if (auto c = detail::mapped(items_map, "concept_tags")) ctags = table.require_column(*c);
    const std::string sep = items_map.value("tag_separator", ";");
    std::vector<Item> items;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      ++result.rows_read;
      const auto& row = table.rows[r];
      try {
        Item item{row[cid], parse_item_kind(detail::map_value(items_map, "kind_values", row[ckind])),
                  parse_difficulty(detail::map_value(items_map, "difficulty_values", row[cdiff])), {}, std::nullopt};
        if (cparent && !row[*cparent].empty()) item.parent_video = row[*cparent];
        if (ctags) item.concept_tags = split_tags(row[*ctags], sep.empty() ? ';' : sep.front());
        for (std::size_t c = 0; c < row.size(); ++c)
          if (c != cid && c != ckind && c != cdiff && c != cparent && c != ctags)
            ds.metadata["items:" + row[cid] + ":" + table.header[c]] = row[c];
        items.push_back(std::move(item));
      } catch (const SchemaError& e) {
        throw IoError(table.where(r) + ": " + e.what());
      }
      ++result.rows_parsed;
    }
    try {
      ds.bank = ItemBank(std::move(items));
    } catch (const SchemaError& e) {
      throw IoError(table.path + ": " + e.what());
    }
  }

  // Users
  std::vector<std::string> users;
  const auto& users_spec = mapping.at("users");
  if (users_spec.is_array()) {
    users = users_spec.get<std::vector<std::string>>();
  } else {
    const fs::path udir = source_dir / users_spec.at("directory").get<std::string>();
    if (!fs::is_directory(udir)) throw IoError(udir.string() + ": user directory not found");
    for (const auto& e : fs::directory_iterator(udir))
      if (e.is_directory()) users.push_back(e.path().filename().string());
    std::sort(users.begin(), users.end());
  }

  std::vector<std::string> segments;
  if (stream_map.contains("segments") && stream_map.at("segments").is_array()) {
    segments = stream_map.at("segments").get<std::vector<std::string>>();
  } else if (stream_map.value("segments", "lectures") == "lectures") {
    for (const auto& id : ds.bank.ids(ItemKind::lecture_video))
      if (!ds.bank.questions_of(id).empty()) segments.push_back(id);
  } else {
    throw SchemaError("streams.segments must be a list or \"lectures\"");
  }

  StreamReadOptions sopt;
  sopt.time_column = stream_map.at("time_column").get<std::string>();
  sopt.feature_columns = stream_map.at("feature_columns").get<std::vector<std::string>>();
  sopt.time_scale = stream_map.value("time_scale", 1.0);
  sopt.rebase_time = stream_map.value("rebase_time", false);
  sopt.nominal_rate = stream_map.value("nominal_rate", kNominalRate);
  if (stream_map.contains("expected_seconds")) sopt.expected_seconds = stream_map.at("expected_seconds").get<double>();
  const bool missing_is_error = stream_map.value("missing", "mark") == "error";

  for (const auto& user : users) {
    SessionRecord session;
    session.user = user;

    const auto table = read_csv(source_dir / detail::substitute(resp_map.at("file").get<std::string>(), user));
    const std::size_t ci = table.require_column(*detail::mapped(resp_map, "item"));
    const std::size_t cc = table.require_column(*detail::mapped(resp_map, "correct"));
    std::optional<std::size_t> cu, ct;
    if (auto c = detail::mapped(resp_map, "user")) cu = table.require_column(*c);
    if (auto c = detail::mapped(resp_map, "response_time")) ct = table.require_column(*c);
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      ++result.rows_read;
      const auto& row = table.rows[r];
      if (!ds.bank.contains(row[ci])) throw IoError(table.where(r) + ": unknown item '" + row[ci] + "'");
      ResponseRecord rec{cu ? row[*cu] : user, row[ci],
                         parse_bool(detail::map_value(resp_map, "correct_values", row[cc]), table.where(r)),
                         std::nullopt};
      if (ct && !row[*ct].empty()) rec.response_time = parse_real(row[*ct], table.where(r), table.header[*ct]);
      for (std::size_t c = 0; c < row.size(); ++c)
        if (c != ci && c != cc && c != cu && c != ct)
          session.metadata["responses:" + std::to_string(r + 1) + ":" + table.header[c]] = row[c];
      session.responses.push_back(std::move(rec));
      ++result.rows_parsed;
    }

    if (mapping.contains("labels")) {
      const auto& lab_map = mapping.at("labels");
      const auto lt = read_csv(source_dir / detail::substitute(lab_map.at("file").get<std::string>(), user));
      const std::size_t cl = lt.require_column(detail::mapped(lab_map, "lecture").value_or("lecture"));
      const std::size_t cv = lt.require_column(detail::mapped(lab_map, "understood").value_or("understood"));
      for (std::size_t r = 0; r < lt.rows.size(); ++r) {
        ++result.rows_read;
        if (!ds.bank.contains(lt.rows[r][cl])) throw IoError(lt.where(r) + ": unknown item '" + lt.rows[r][cl] + "'");
        session.labels.push_back({user, lt.rows[r][cl], parse_bool(lt.rows[r][cv], lt.where(r))});
        ++result.rows_parsed;
      }
    } else {
      for (const auto& video : ds.bank.ids(ItemKind::lecture_video)) {
        std::vector<ResponseRecord> answers;
        for (const auto& r : session.responses)
          if (const auto* it = ds.bank.find(r.item); it && it->parent_video == video) answers.push_back(r);
        if (answers.size() == 3) session.labels.push_back({user, video, label_understanding(answers, ds.bank)});
      }
    }

    for (const auto& segment : segments) {
      const fs::path path = source_dir / detail::substitute(stream_map.at("file").get<std::string>(), user, segment);
      if (!fs::exists(path)) {
        if (missing_is_error) throw IoError(path.string() + ": stream file not found");
        session.streams[segment] = std::nullopt;
        result.warnings.push_back(path.string() + ": stream missing, segment marked absent");
        continue;
      }
      std::vector<std::string> unmapped;
      session.streams[segment] = read_stream(path, segment, sopt, result, &unmapped);
      if (!unmapped.empty()) {
        std::string joined;
        for (const auto& u : unmapped) joined += (joined.empty() ? "" : ";") + u;
        session.metadata["streams:" + segment + ":unmapped_columns"] = joined;
      }
    }
    ds.sessions.push_back(std::move(session));
  }
  validate_or_throw(ds);
  return result;
}

}  // namespace smartvr::dataio
