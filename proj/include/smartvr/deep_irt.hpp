#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "smartvr/featurize.hpp"
#include "smartvr/nn.hpp"
#include "smartvr/rasch.hpp"

namespace smartvr {

// Source of the student-state term phi.
enum class StateBranch { none, mlp, tcn };

inline std::string variant_name(StateBranch b) {
  switch (b) {
    case StateBranch::none: return "deep-irt";
    case StateBranch::mlp: return "smart-mlp";
    case StateBranch::tcn: return "smart-tcn";
  }
  return "?";
}

inline StateBranch parse_variant(const std::string& name) {
  if (name == "deep-irt") return StateBranch::none;
  if (name == "smart-mlp") return StateBranch::mlp;
  if (name == "smart-tcn") return StateBranch::tcn;
  throw ConfigError("unknown model variant '" + name + "'");
}

// One training or scoring example. Stateless samples (pretest and trial
// anchors) have phi masked to zero even for state-bearing variants.
struct Sample {
  std::string user;
  std::string item;
  bool label = false;
  bool stateful = false;
  std::shared_ptr<const GlobalVector> global;
  std::shared_ptr<const LocalTensor> local;
};

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 64;
  int epochs = 200;
  std::uint64_t seed = 0;
  WindowSpec window;

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (epochs < 0) throw ConfigError("epoch count must be non-negative");
  }
};

// P(understand) = 1 / (1 + exp(-(theta - (b + phi)))).
inline double understanding_probability(double theta, double b, double phi) {
  return logistic(theta - (b + phi));
}

struct Prediction {
  double p = 0.5;
  double theta = 0.0;
  double b = 0.0;
  double phi = 0.0;
};

namespace detail {

inline const nn::LayerSpec kTwinLayers[] = {
    {128, nn::Activation::relu}, {64, nn::Activation::relu}, {1, nn::Activation::tanh}};

inline std::vector<double> one_hot(std::size_t n, std::size_t k) {
  std::vector<double> v(n, 0.0);
  v[k] = 1.0;
  return v;
}

}  // namespace detail

// Twin one-hot MLPs for ability and difficulty plus an optional state branch,
// combined as P = logistic(theta - (b + phi)).
class DeepIrtModel {
 public:
  DeepIrtModel(std::vector<std::string> users, std::vector<std::string> items, StateBranch branch,
               std::uint64_t seed, nn::TcnReadout readout = nn::TcnReadout::last_step)
      : users_(std::move(users)), items_(std::move(items)), branch_(branch), seed_(seed), readout_(readout) {
    if (users_.empty() || items_.empty()) throw ConfigError("model needs at least one user and one item");
    std::sort(users_.begin(), users_.end());
    std::sort(items_.begin(), items_.end());
    for (std::size_t i = 0; i < users_.size(); ++i)
      if (!user_pos_.emplace(users_[i], i).second) throw ConfigError("duplicate user id '" + users_[i] + "'");
    for (std::size_t i = 0; i < items_.size(); ++i)
      if (!item_pos_.emplace(items_[i], i).second) throw ConfigError("duplicate item id '" + items_[i] + "'");

    std::mt19937_64 rng(seed);
    ability_.emplace(users_.size(), detail::kTwinLayers, rng, "ability");
    difficulty_.emplace(items_.size(), detail::kTwinLayers, rng, "difficulty");
    if (branch_ == StateBranch::mlp) {
      state_mlp_.emplace(kGlobalVectorSize, detail::kTwinLayers, rng, "state");
    } else if (branch_ == StateBranch::tcn) {
      nn::TcnSpec spec;
      spec.readout = readout;
      state_tcn_.emplace(spec, rng, "state");
    }
  }

  StateBranch branch() const { return branch_; }
  std::uint64_t seed() const { return seed_; }
  nn::TcnReadout readout() const { return readout_; }
  const std::vector<std::string>& users() const { return users_; }
  const std::vector<std::string>& items() const { return items_; }

  std::size_t user_index(const std::string& id) const {
    auto it = user_pos_.find(id);
    if (it == user_pos_.end()) throw LookupError("user '" + id + "' is not in the model index");
    return it->second;
  }

  std::size_t item_index(const std::string& id) const {
    auto it = item_pos_.find(id);
    if (it == item_pos_.end()) throw LookupError("item '" + id + "' is not in the model index");
    return it->second;
  }

  // Inference without touching the training cache.
  Prediction predict(const Sample& s) const {
    Prediction out;
    out.theta = ability_->apply(detail::one_hot(users_.size(), user_index(s.user))).front();
    out.b = difficulty_->apply(detail::one_hot(items_.size(), item_index(s.item))).front();
    if (state_active(s)) {
      if (state_mlp_) out.phi = state_mlp_->apply(global_input(s)).front();
      else out.phi = state_tcn_->apply(local_input(s));
    }
    out.p = understanding_probability(out.theta, out.b, out.phi);
    return out;
  }

  // Forward pass that records what backward() needs.
  Prediction forward(const Sample& s) {
    Prediction out;
    out.theta = ability_->forward(detail::one_hot(users_.size(), user_index(s.user))).front();
    out.b = difficulty_->forward(detail::one_hot(items_.size(), item_index(s.item))).front();
    cached_state_ = state_active(s);
    if (cached_state_) {
      if (state_mlp_) out.phi = state_mlp_->forward(global_input(s)).front();
      else out.phi = state_tcn_->forward(local_input(s));
    }
    out.p = understanding_probability(out.theta, out.b, out.phi);
    cached_ = true;
    return out;
  }

  // Accumulates gradients given dL/dz for z = theta - b - phi.
  void backward(double dz) {
    if (!cached_) throw StateError("deep-irt: backward called without a forward cache");
    const double up[] = {dz};
    const double down[] = {-dz};
    ability_->backward(up, false);
    difficulty_->backward(down, false);
    if (cached_state_) {
      if (state_mlp_) state_mlp_->backward(down, false);
      else state_tcn_->backward(-dz);
    }
  }

  nn::ParameterRefs parameters() {
    nn::ParameterRefs out = ability_->parameters();
    for (auto* p : difficulty_->parameters()) out.push_back(p);
    if (state_mlp_)
      for (auto* p : state_mlp_->parameters()) out.push_back(p);
    if (state_tcn_)
      for (auto* p : state_tcn_->parameters()) out.push_back(p);
    return out;
  }

  // Input frames the state branch actually reads (all of them for mean readout).
  std::optional<std::size_t> tcn_receptive_field() const {
    if (!state_tcn_ || readout_ != nn::TcnReadout::last_step) return std::nullopt;
    return state_tcn_->receptive_field();
  }

 private:
  bool state_active(const Sample& s) const {
    if (branch_ == StateBranch::none || !s.stateful) return false;
    if (branch_ == StateBranch::mlp && !s.global)
      throw InputError("sample (" + s.user + ", " + s.item + ") lacks global features");
    if (branch_ == StateBranch::tcn && !s.local)
      throw InputError("sample (" + s.user + ", " + s.item + ") lacks local features");
    return true;
  }

  static std::span<const double> global_input(const Sample& s) { return s.global->stats; }

  // With last-step readout only the trailing receptive field can reach the
  // output, so the sequence is cropped to it; the result is identical.
  nn::Tensor local_input(const Sample& s) const {
    const auto& lt = *s.local;
    std::size_t first = 0;
    if (auto rf = tcn_receptive_field(); rf && lt.rows > *rf) first = lt.rows - *rf;
    const std::size_t rows = lt.rows - first;
    std::vector<double> data(lt.data.begin() + static_cast<std::ptrdiff_t>(first * LocalTensor::cols),
                             lt.data.end());
    return nn::Tensor({rows, LocalTensor::cols}, std::move(data));
  }

  std::vector<std::string> users_, items_;
  std::map<std::string, std::size_t> user_pos_, item_pos_;
  StateBranch branch_;
  std::uint64_t seed_;
  nn::TcnReadout readout_;
  std::optional<nn::Mlp> ability_, difficulty_, state_mlp_;
  std::optional<nn::Tcn> state_tcn_;
  bool cached_ = false;
  bool cached_state_ = false;
};

inline DeepIrtModel build_model(std::size_t n_users, std::size_t n_items, StateBranch branch, std::uint64_t seed) {
  if (n_users < 1 || n_items < 1) throw ConfigError("model needs at least one user and one item");
  auto ids = [](const char* prefix, std::size_t n) {
    const std::size_t width = std::to_string(n - 1).size();
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) {
      auto num = std::to_string(i);
      out.push_back(prefix + std::string(width - num.size(), '0') + num);
    }
    return out;
  };
  return DeepIrtModel(ids("user", n_users), ids("item", n_items), branch, seed);
}

struct TrainResult {
  std::vector<double> epoch_loss;  // mean BCE over the epoch's samples
};

// Seeded-shuffle mini-batch Adam on binary cross-entropy. The last partial
// batch of each epoch is kept; batch gradients are sample means.
inline TrainResult train(DeepIrtModel& model, std::span<const Sample> samples, const TrainConfig& config) {
  config.validate();
  if (samples.empty()) throw InsufficientDataError("training set is empty");
  for (const auto& s : samples) {
    model.user_index(s.user);
    model.item_index(s.item);
  }
  auto params = model.parameters();
  nn::AdamState adam;
  adam.lr = config.lr;
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0, batch = 0; start < order.size(); start += config.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      for (auto* p : params) p->zero_grad();
      for (std::size_t k = start; k < end; ++k) {
        const auto& s = samples[order[k]];
        const auto pred = model.forward(s);
        const double loss = nn::bce_loss(pred.p, s.label);
        if (!std::isfinite(loss))
          throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                std::to_string(batch));
        epoch_loss += loss;
        model.backward((pred.p - (s.label ? 1.0 : 0.0)) * scale);
      }
      nn::adam_step(adam, params);
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(samples.size()));
  }
  return result;
}

inline std::vector<double> predict_batch(const DeepIrtModel& model, std::span<const Sample> samples) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(model.predict(s).p);
  return out;
}

inline nn::GradCheckReport grad_check(DeepIrtModel& model, const Sample& sample, double h = 1e-4,
                                      bool corrupt = false) {
  auto loss = [&] { return nn::bce_loss(model.predict(sample).p, sample.label); };
  auto backward = [&] {
    const auto pred = model.forward(sample);
    model.backward(pred.p - (sample.label ? 1.0 : 0.0));
  };
  return nn::grad_check(model.parameters(), loss, backward, h, corrupt);
}

// Gradient check of one architecture at toy size: 3 users, 4 items and, for
// the TCN branch, a 12-frame window; feature values are seeded uniforms.
inline nn::GradCheckReport toy_grad_check(StateBranch branch, std::uint64_t seed, double h = 1e-4,
                                          bool corrupt = false) {
  auto model = build_model(3, 4, branch, seed);
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Sample sample{model.users()[1], model.items()[2], true, branch != StateBranch::none, nullptr, nullptr};
  if (branch == StateBranch::mlp) {
    auto g = std::make_shared<GlobalVector>();
    for (auto& v : g->stats) v = unit(rng);
    sample.global = std::move(g);
  } else if (branch == StateBranch::tcn) {
    auto t = std::make_shared<LocalTensor>();
    t->rows = 12;
    t->data.resize(t->rows * LocalTensor::cols);
    for (auto& v : t->data) v = unit(rng);
    sample.local = std::move(t);
  }
  return grad_check(model, sample, h, corrupt);
}

// Checkpoint document: index maps, variant, seed, config and every parameter
// tensor with its shape.
inline nlohmann::json checkpoint_json(DeepIrtModel& model, const TrainConfig& config) {
  nlohmann::json params = nlohmann::json::array();
  for (auto* p : model.parameters())
    params.push_back({{"name", p->name}, {"shape", p->value.shape}, {"data", p->value.data}});
  return {{"format", "smartvr-deep-irt/1"},
          {"variant", variant_name(model.branch())},
          {"seed", model.seed()},
          {"readout", model.readout() == nn::TcnReadout::last_step ? "last_step" : "mean"},
          {"users", model.users()},
          {"items", model.items()},
          {"train_config",
           {{"lr", config.lr},
            {"batch_size", config.batch_size},
            {"epochs", config.epochs},
            {"seed", config.seed},
            {"window_minutes", config.window.minutes},
            {"pool_stride", config.window.pool_stride}}},
          {"parameters", params}};
}

inline DeepIrtModel model_from_checkpoint(const nlohmann::json& j) {
  if (j.value("format", "") != "smartvr-deep-irt/1") throw SchemaError("not a deep-irt checkpoint");
  const auto readout = j.at("readout").get<std::string>() == "mean" ? nn::TcnReadout::mean : nn::TcnReadout::last_step;
  DeepIrtModel model(j.at("users").get<std::vector<std::string>>(), j.at("items").get<std::vector<std::string>>(),
                     parse_variant(j.at("variant").get<std::string>()), j.at("seed").get<std::uint64_t>(), readout);
  std::map<std::string, const nlohmann::json*> stored;
  for (const auto& p : j.at("parameters")) stored[p.at("name").get<std::string>()] = &p;
  for (auto* p : model.parameters()) {
    auto it = stored.find(p->name);
    if (it == stored.end()) throw SchemaError("checkpoint lacks parameter '" + p->name + "'");
    if (it->second->at("shape").get<std::vector<std::size_t>>() != p->value.shape)
      throw ShapeError("checkpoint shape mismatch for '" + p->name + "'");
    auto data = it->second->at("data").get<std::vector<double>>();
    if (data.size() != p->value.data.size()) throw ShapeError("checkpoint size mismatch for '" + p->name + "'");
    p->value.data = std::move(data);
  }
  return model;
}

}  // namespace smartvr
