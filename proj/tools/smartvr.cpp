// smartvr command-line driver: simulate | import | evaluate | gradcheck | report.
//
// Every option can also come from a JSON file given with --config; explicit
// flags win over the file, the file wins over built-in defaults. The resolved
// settings are written as resolved_config.json next to the outputs.
//
// Exit codes: 0 ok, 2 configuration, 3 data, 4 numeric failure.

#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "smartvr/smartvr.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace smartvr;

namespace {

constexpr const char* kVersion = "smartvr 1.0.0";

enum Exit { kOk = 0, kConfig = 2, kData = 3, kNumeric = 4 };

// Ties a CLI option to a config-file key so file values apply only where the
// flag was not given.
struct Settings {
  struct Binding {
    CLI::Option* option;
    std::function<void(const json&)> load;
    std::function<json()> dump;
  };
  std::map<std::string, Binding> bindings;
  std::string config_path;

  template <typename T>
  CLI::Option* add(CLI::App* app, const std::string& key, T& value, const std::string& help) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    auto* opt = app->add_option(flag, value, help)->capture_default_str();
    bindings[key] = {opt, [&value, key](const json& j) {
                       try {
                         value = j.get<T>();
                       } catch (const json::exception&) {
                         throw ConfigError("config key '" + key + "' has the wrong type");
                       }
                     },
                     [&value] { return json(value); }};
    return opt;
  }

  void resolve() {
    if (config_path.empty()) return;
    json file;
    try {
      file = json::parse(dataio::read_file(config_path));
    } catch (const json::exception& e) {
      throw ConfigError(config_path + ": invalid JSON (" + e.what() + ")");
    } catch (const IoError& e) {
      throw ConfigError(e.what());
    }
    if (!file.is_object()) throw ConfigError(config_path + ": config must be a JSON object");
    for (const auto& [key, value] : file.items()) {
      auto it = bindings.find(key);
      if (it == bindings.end()) throw ConfigError(config_path + ": unknown config key '" + key + "'");
      if (it->second.option->count() == 0) it->second.load(value);
    }
  }

  json resolved(const std::string& command) const {
    json out = {{"command", command}, {"version", kVersion}};
    for (const auto& [key, b] : bindings) out[key] = b.dump();
    return out;
  }
};

void require(const std::string& value, const std::string& key) {
  if (value.empty()) throw ConfigError("missing required setting '" + key + "'");
}

// An existing non-empty output directory is reused only with --force.
void claim_output(const fs::path& dir, bool force) {
  std::error_code ec;
  if (fs::exists(dir) && !fs::is_empty(dir, ec) && !force)
    throw ConfigError(dir.string() + ": output directory exists and is not empty (pass --force to overwrite)");
}

void write_config(const fs::path& dir, const json& config) {
  dataio::write_text(dir / "resolved_config.json", config.dump(2) + "\n");
}

fs::path manifest_of(const std::string& path) {
  fs::path p(path);
  return fs::is_directory(p) ? p / dataio::kManifestName : p;
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  Settings settings;
  std::string out;
  int users = 10, lectures = 10, pretest = 10, trial = 5, minutes = 8;
  double ability_sd = 1.0, state_sd = 0.5, alpha = 0.0, level_scale = 1.0;
  std::uint64_t seed = 0;
  bool force = false;
};

int run_simulate(SimulateArgs& a) {
  a.settings.resolve();
  require(a.out, "out");
  SynthConfig config;
  config.n_users = a.users;
  config.n_lectures = a.lectures;
  config.n_pretest = a.pretest;
  config.n_trial = a.trial;
  config.ability_sd = a.ability_sd;
  config.state_sd = a.state_sd;
  config.signal_strength = a.alpha;
  config.level_scale = a.level_scale;
  config.stream_minutes = a.minutes;
  config.seed = a.seed;
  config.validate();
  claim_output(a.out, a.force);
  if (config.n_users < 2) std::cerr << "warning: fewer than 2 users; leave-one-out evaluation will be impossible\n";

  const auto synth = generate(config);
  dataio::write_dataset(synth.data, a.out, a.force);

  json truth = {{"theta", synth.truth.theta}, {"b", synth.truth.b}};
  json cells = json::array();
  for (const auto& [cell, phi] : synth.truth.phi)
    cells.push_back({{"user", cell.first},
                     {"lecture", cell.second},
                     {"phi", phi},
                     {"probability", synth.truth.probability(cell)},
                     {"understood", synth.truth.outcome.at(cell)}});
  truth["cells"] = cells;
  truth["bayes_accuracy"] = bayes_accuracy(synth.truth, 0.5, 100000, config.seed);
  dataio::write_text(fs::path(a.out) / "truth.json", truth.dump(2) + "\n");
  write_config(a.out, a.settings.resolved("simulate"));
  std::cout << "wrote " << config.n_users << "-user synthetic dataset to " << a.out << "\n";
  return kOk;
}

struct ImportArgs {
  Settings settings;
  std::string source, mapping, out;
  bool force = false;
};

int run_import(ImportArgs& a) {
  a.settings.resolve();
  require(a.source, "source");
  require(a.mapping, "mapping");
  require(a.out, "out");
  json mapping;
  try {
    mapping = json::parse(dataio::read_file(a.mapping));
  } catch (const json::exception& e) {
    throw ConfigError(a.mapping + ": invalid mapping JSON (" + e.what() + ")");
  }
  claim_output(a.out, a.force);
  auto result = dataio::import_external(a.source, mapping);
  print_warnings(result.warnings);
  dataio::write_dataset(result.dataset, a.out, a.force);
  write_config(a.out, a.settings.resolved("import"));
  std::cout << "imported " << result.dataset.sessions.size() << " users (" << result.rows_parsed << " of "
            << result.rows_read << " rows parsed) into " << a.out << "\n";
  return kOk;
}

struct EvaluateArgs {
  Settings settings;
  std::string dataset, out, readout = "last_step";
  std::vector<std::string> variants{"rasch", "deep-irt", "smart-mlp", "smart-tcn"};
  std::vector<int> windows{1, 2, 3, 4, 5, 6, 7, 8};
  std::uint64_t seed = 0;
  int pool_stride = 1, epochs = 200, threads = 1;
  double lr = 1e-3;
  std::size_t batch_size = 64;
  bool standardize = true;
  bool force = false;
  bool quiet = false;
};

int run_evaluate(EvaluateArgs& a) {
  a.settings.resolve();
  require(a.dataset, "dataset");
  require(a.out, "out");
  if (a.readout != "last_step" && a.readout != "mean") throw ConfigError("readout must be last_step or mean");
  for (const auto& v : a.variants) parse_model(v);
  claim_output(a.out, a.force);

  SweepOptions opt;
  opt.pool_stride = a.pool_stride;
  opt.epochs = a.epochs;
  opt.lr = a.lr;
  opt.batch_size = a.batch_size;
  opt.threads = a.threads;
  opt.readout = a.readout == "mean" ? nn::TcnReadout::mean : nn::TcnReadout::last_step;
  opt.standardize = a.standardize;
  if (!a.quiet) opt.progress = [](const std::string& msg) { std::cerr << msg << "\n"; };
  TrainConfig{a.lr, a.batch_size, a.epochs, a.seed, {}}.validate();

  auto loaded = dataio::load_dataset(manifest_of(a.dataset));
  print_warnings(loaded.warnings);
  std::vector<SweepReport> reports;
  for (const auto& v : a.variants) reports.push_back(run_sweep(loaded.dataset, v, a.windows, a.seed, opt));

  fs::create_directories(a.out);
  report::write_reports(a.out, reports);
  write_config(a.out, a.settings.resolved("evaluate"));
  for (const auto& r : reports) {
    std::cout << r.variant << ":";
    for (const auto& w : r.windows) std::cout << " W" << w.minutes << "=" << dataio::format_number(w.accuracy);
    std::cout << "\n";
  }
  return kOk;
}

struct GradcheckArgs {
  Settings settings;
  std::uint64_t seed = 7;
  double step = 1e-4, tolerance = 1e-4;
  bool corrupt = false;
};

int run_gradcheck(GradcheckArgs& a) {
  a.settings.resolve();
  bool ok = true;
  for (auto branch : {StateBranch::none, StateBranch::mlp, StateBranch::tcn}) {
    const auto report = toy_grad_check(branch, a.seed, a.step, a.corrupt);
    const bool pass = report.max_rel_error < a.tolerance;
    ok = ok && pass;
    std::cout << variant_name(branch) << ": max relative error " << report.max_rel_error
              << (pass ? "  PASS" : "  FAIL") << "\n";
    for (const auto& e : report.entries) std::cout << "  " << e.parameter << "  " << e.max_rel_error << "\n";
  }
  return ok ? kOk : kNumeric;
}

struct ReportArgs {
  Settings settings;
  std::string input;
};

// Re-renders the tables from an evaluation directory's summary.json.
int run_report(ReportArgs& a) {
  a.settings.resolve();
  require(a.input, "input");
  json summary;
  try {
    summary = json::parse(dataio::read_file(fs::path(a.input) / "summary.json"));
  } catch (const json::exception& e) {
    throw IoError(a.input + "/summary.json: malformed (" + e.what() + ")");
  }
  std::ostringstream md;
  try {
    std::vector<int> minutes;
    for (const auto& [name, v] : summary.at("variants").items())
      for (const auto& [w, cell] : v.at("windows").items()) minutes.push_back(std::stoi(w));
    std::sort(minutes.begin(), minutes.end());
    minutes.erase(std::unique(minutes.begin(), minutes.end()), minutes.end());

    md << "## Accuracy by window length\n\n| variant |";
    for (int m : minutes) md << " " << m << " min |";
    md << "\n|---|";
    for (std::size_t i = 0; i < minutes.size(); ++i) md << "---|";
    md << "\n";
    for (const auto& [name, v] : summary.at("variants").items()) {
      md << "| " << name << " |";
      for (int m : minutes) {
        const auto key = std::to_string(m);
        if (v.at("windows").contains(key)) {
          const auto& cell = v.at("windows").at(key);
          char buf[64];
          std::snprintf(buf, sizeof buf, " %.3f ± %.3f |", cell.at("accuracy").get<double>(),
                        cell.at("standard_error").get<double>());
          md << buf;
        } else {
          md << " |";
        }
      }
      md << "\n";
    }
    md << "\n## Accuracy by content difficulty\n\n| variant | window | easy | medium | hard |\n|---|---|---|---|---|\n";
    for (const auto& [name, v] : summary.at("variants").items()) {
      md << "| " << name << " | " << v.at("difficulty_window").get<int>() << " |";
      for (const char* level : {"easy", "medium", "hard"}) {
        if (v.at("difficulty").contains(level)) {
          char buf[32];
          std::snprintf(buf, sizeof buf, " %.3f |", v.at("difficulty").at(level).at("accuracy").get<double>());
          md << buf;
        } else {
          md << " n/a |";
        }
      }
      md << "\n";
    }
  } catch (const json::exception& e) {
    throw SchemaError(a.input + "/summary.json: unexpected layout (" + e.what() + ")");
  }
  dataio::write_text(fs::path(a.input) / "report.md", md.str());
  std::cout << md.str();
  return kOk;
}

int exit_code_for(const Error& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kConfig;
  if (dynamic_cast<const DivergenceError*>(&e)) return kNumeric;
  return kData;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Student understanding estimation from responses and facial streams"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic dataset with known ground truth");
  simulate->add_option("--config", sim.settings.config_path, "JSON settings file");
  sim.settings.add(simulate, "out", sim.out, "Output dataset directory");
  sim.settings.add(simulate, "users", sim.users, "Number of users");
  sim.settings.add(simulate, "lectures", sim.lectures, "Number of lecture videos");
  sim.settings.add(simulate, "pretest", sim.pretest, "Number of pretest questions");
  sim.settings.add(simulate, "trial", sim.trial, "Number of trial-video questions");
  sim.settings.add(simulate, "ability_sd", sim.ability_sd, "Spread of user ability");
  sim.settings.add(simulate, "state_sd", sim.state_sd, "Spread of the per-lecture student state");
  sim.settings.add(simulate, "alpha", sim.alpha, "Strength of the state signal in the facial stream");
  sim.settings.add(simulate, "level_scale", sim.level_scale, "Difficulty offset of easy/hard items");
  sim.settings.add(simulate, "minutes", sim.minutes, "Stream length per lecture in minutes");
  sim.settings.add(simulate, "seed", sim.seed, "Random seed");
  simulate->add_flag("--force", sim.force, "Overwrite an existing dataset directory");

  ImportArgs imp;
  auto* import = app.add_subcommand("import", "Convert an external dataset layout to the canonical format");
  import->add_option("--config", imp.settings.config_path, "JSON settings file");
  imp.settings.add(import, "source", imp.source, "Root directory of the external dataset");
  imp.settings.add(import, "mapping", imp.mapping, "Field mapping JSON");
  imp.settings.add(import, "out", imp.out, "Output dataset directory");
  import->add_flag("--force", imp.force, "Overwrite an existing dataset directory");

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Leave-one-user-out accuracy sweep over window lengths");
  evaluate->add_option("--config", ev.settings.config_path, "JSON settings file");
  ev.settings.add(evaluate, "dataset", ev.dataset, "Dataset directory or manifest.json");
  ev.settings.add(evaluate, "out", ev.out, "Report directory");
  ev.settings.add(evaluate, "variants", ev.variants, "Models: rasch, deep-irt, smart-mlp, smart-tcn");
  ev.settings.add(evaluate, "windows", ev.windows, "Window lengths in minutes (1..8)");
  ev.settings.add(evaluate, "seed", ev.seed, "Base seed; fold k uses seed + k");
  ev.settings.add(evaluate, "pool_stride", ev.pool_stride, "Temporal mean-pooling factor");
  ev.settings.add(evaluate, "epochs", ev.epochs, "Training epochs");
  ev.settings.add(evaluate, "lr", ev.lr, "Adam learning rate");
  ev.settings.add(evaluate, "batch_size", ev.batch_size, "Mini-batch size");
  ev.settings.add(evaluate, "threads", ev.threads, "Folds trained in parallel");
  ev.settings.add(evaluate, "readout", ev.readout, "TCN readout: last_step or mean");
  ev.settings.add(evaluate, "standardize", ev.standardize, "z-score features with training-fold statistics");
  evaluate->add_flag("--force", ev.force, "Write into an existing non-empty directory");
  evaluate->add_flag("--quiet", ev.quiet, "Suppress progress messages");

  GradcheckArgs gc;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of all three architectures");
  gradcheck->add_option("--config", gc.settings.config_path, "JSON settings file");
  gc.settings.add(gradcheck, "seed", gc.seed, "Initialisation seed");
  gc.settings.add(gradcheck, "step", gc.step, "Central-difference step");
  gc.settings.add(gradcheck, "tolerance", gc.tolerance, "Maximum accepted relative error");
  gradcheck->add_flag("--corrupt", gc.corrupt, "Perturb analytic gradients (negative control)");

  ReportArgs rep;
  auto* report_cmd = app.add_subcommand("report", "Render markdown tables from an evaluation directory");
  report_cmd->add_option("--config", rep.settings.config_path, "JSON settings file");
  rep.settings.add(report_cmd, "input", rep.input, "Evaluation output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (simulate->parsed()) return run_simulate(sim);
    if (import->parsed()) return run_import(imp);
    if (evaluate->parsed()) return run_evaluate(ev);
    if (gradcheck->parsed()) return run_gradcheck(gc);
    if (report_cmd->parsed()) return run_report(rep);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kConfig;
}
