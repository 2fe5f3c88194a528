#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pcp/common/errors.hpp"

namespace pcp::trainer {

struct Range {
  double lo = 0.0, hi = 0.0;
  bool valid() const { return lo < hi; }
};

enum class AmplitudeTarget { total_scale, literal };

struct TrainConfig {
  int warmup_epochs = 5;
  int epochs = 100;        // Stage-III
  int stage1_epochs = 50;
  int stage2_epochs = 60;
  int batch_size = 4;
  double learning_rate = 1e-4;
  double editor_learning_rate = 5e-3;  // Stage-II generator
  double weight_decay = 1e-4;
  Range alpha_range{0.0, 2.0};
  Range tau_range{-12.0, 12.0};
  Range rho_range{0.8, 2.0};
  Range nulling_range{-2.0, 0.0};
  int top_K_cells = 8;
  int multiregion_samples = 2;  // cells drawn from the top K per step
  int crop_frames = 128;
  double nuisance_augment = 0.5;  // Stage I and III: probability a crop gets a random flicker or sway
  double edit_strength = 0.004;  // analytic editor strength for a unit-RMS hypothesis
  AmplitudeTarget amplitude_target = AmplitudeTarget::total_scale;
  bool scale_free_losses = true;
  double w_recon = 1.0;  // on MSE / edit_strength^2
  double w_nul = 1.0, w_equ = 1.0, w_forward = 1.0, w_multiregion = 1.0, w_background = 1.0, w_wave = 1.0;
  std::uint64_t seed = 1;

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (epochs <= 0 || stage1_epochs <= 0 || stage2_epochs <= 0) fail("epoch counts must be positive");
    if (warmup_epochs < 0 || warmup_epochs >= epochs) fail("warmup_epochs must satisfy 0 <= warmup_epochs < epochs");
    if (batch_size <= 0) fail("batch_size must be positive");
    if (!(learning_rate > 0.0) || !(editor_learning_rate > 0.0)) fail("learning rates must be positive");
    if (weight_decay < 0.0) fail("weight_decay must be nonnegative");
    if (!alpha_range.valid() || !tau_range.valid() || !rho_range.valid() || !nulling_range.valid()) {
      fail("ranges must satisfy lo < hi");
    }
    if (rho_range.lo <= 0.0) fail("rho_range must be positive");
    if (top_K_cells <= 0 || top_K_cells > 64) fail("top_K_cells must lie in [1, 64]");
    if (multiregion_samples <= 0 || multiregion_samples > top_K_cells) fail("multiregion_samples must lie in [1, top_K_cells]");
    if (crop_frames < 127) fail("crop_frames must be at least 127 (band-pass length)");
    if (!(edit_strength > 0.0)) fail("edit_strength must be positive");
    if (!(nuisance_augment >= 0.0 && nuisance_augment <= 1.0)) fail("nuisance_augment must lie in [0, 1]");
  }
};

namespace cfg_detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline double number(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
  }
  if (trim(v.substr(pos)) != "") throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
  return d;
}

inline int integer(const std::string& key, const std::string& v) {
  const double d = number(key, v);
  if (d != static_cast<double>(static_cast<long long>(d))) throw ConfigError("config key '" + key + "' expects an integer");
  return static_cast<int>(d);
}

inline Range range(const std::string& key, std::string v) {
  for (char& c : v)
    if (c == ',' || c == '[' || c == ']') c = ' ';
  std::istringstream in(v);
  std::vector<std::string> parts;
  for (std::string p; in >> p;) parts.push_back(p);
  if (parts.size() != 2) throw ConfigError("config key '" + key + "' expects two numbers");
  return {number(key, parts[0]), number(key, parts[1])};
}

inline bool boolean(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "' expects true or false");
}

}  // namespace cfg_detail

// Applies one key to the config. Unknown keys are errors.
inline void set_key(TrainConfig& c, const std::string& key, const std::string& v) {
  using namespace cfg_detail;
  if (key == "warmup_epochs") c.warmup_epochs = integer(key, v);
  else if (key == "epochs") c.epochs = integer(key, v);
  else if (key == "stage1_epochs") c.stage1_epochs = integer(key, v);
  else if (key == "stage2_epochs") c.stage2_epochs = integer(key, v);
  else if (key == "batch_size") c.batch_size = integer(key, v);
  else if (key == "learning_rate") c.learning_rate = number(key, v);
  else if (key == "editor_learning_rate") c.editor_learning_rate = number(key, v);
  else if (key == "weight_decay") c.weight_decay = number(key, v);
  else if (key == "alpha_range") c.alpha_range = range(key, v);
  else if (key == "tau_range") c.tau_range = range(key, v);
  else if (key == "rho_range") c.rho_range = range(key, v);
  else if (key == "nulling_range") c.nulling_range = range(key, v);
  else if (key == "top_K_cells") c.top_K_cells = integer(key, v);
  else if (key == "multiregion_samples") c.multiregion_samples = integer(key, v);
  else if (key == "crop_frames") c.crop_frames = integer(key, v);
  else if (key == "nuisance_augment") c.nuisance_augment = number(key, v);
  else if (key == "edit_strength") c.edit_strength = number(key, v);
  else if (key == "amplitude_target") {
    if (v == "total_scale") c.amplitude_target = AmplitudeTarget::total_scale;
    else if (v == "literal") c.amplitude_target = AmplitudeTarget::literal;
    else throw ConfigError("amplitude_target must be total_scale or literal");
  } else if (key == "scale_free_losses") c.scale_free_losses = boolean(key, v);
  else if (key == "w_recon") c.w_recon = number(key, v);
  else if (key == "w_nul") c.w_nul = number(key, v);
  else if (key == "w_equ") c.w_equ = number(key, v);
  else if (key == "w_forward") c.w_forward = number(key, v);
  else if (key == "w_multiregion") c.w_multiregion = number(key, v);
  else if (key == "w_background") c.w_background = number(key, v);
  else if (key == "w_wave") c.w_wave = number(key, v);
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(integer(key, v));
  else throw ConfigError("unknown config key '" + key + "'");
}

// Parses `key = value` lines; '#' starts a comment.
inline TrainConfig parse_config(std::istream& in, const std::string& origin = "run.cfg") {
  TrainConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = cfg_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = cfg_detail::trim(line.substr(0, eq)), value = cfg_detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key or value");
    set_key(c, key, value);
  }
  c.validate();
  return c;
}

inline TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  return parse_config(in, path);
}

inline void write_config(const TrainConfig& c, std::ostream& o) {
  auto r = [](const Range& x) {
    std::ostringstream s;
    s.precision(17);
    s << x.lo << ", " << x.hi;
    return s.str();
  };
  const auto old = o.precision(17);
  o << "warmup_epochs = " << c.warmup_epochs << "\nepochs = " << c.epochs << "\nstage1_epochs = " << c.stage1_epochs
    << "\nstage2_epochs = " << c.stage2_epochs << "\nbatch_size = " << c.batch_size
    << "\nlearning_rate = " << c.learning_rate << "\neditor_learning_rate = " << c.editor_learning_rate << "\nweight_decay = " << c.weight_decay
    << "\nalpha_range = " << r(c.alpha_range) << "\ntau_range = " << r(c.tau_range) << "\nrho_range = " << r(c.rho_range)
    << "\nnulling_range = " << r(c.nulling_range) << "\ntop_K_cells = " << c.top_K_cells
    << "\nmultiregion_samples = " << c.multiregion_samples << "\ncrop_frames = " << c.crop_frames << "\nnuisance_augment = " << c.nuisance_augment
    << "\nedit_strength = " << c.edit_strength << "\namplitude_target = "
    << (c.amplitude_target == AmplitudeTarget::total_scale ? "total_scale" : "literal")
    << "\nscale_free_losses = " << (c.scale_free_losses ? "true" : "false") << "\nw_recon = " << c.w_recon << "\nw_nul = " << c.w_nul
    << "\nw_equ = " << c.w_equ << "\nw_forward = " << c.w_forward << "\nw_multiregion = " << c.w_multiregion
    << "\nw_background = " << c.w_background << "\nw_wave = " << c.w_wave << "\nseed = " << c.seed << "\n";
  o.precision(old);
}

}  // namespace pcp::trainer
