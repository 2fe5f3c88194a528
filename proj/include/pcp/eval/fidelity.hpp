#pragma once

#include <string>
#include <vector>

#include "pcp/editor/backend.hpp"
#include "pcp/editor/metrics.hpp"
#include "pcp/eval/csv.hpp"
#include "pcp/trainer/nulling.hpp"

namespace pcp::eval {

enum class EditMode { null, amplitude, phase, frequency };

inline const char* to_string(EditMode m) {
  switch (m) {
    case EditMode::null: return "null";
    case EditMode::amplitude: return "amplitude";
    case EditMode::phase: return "phase";
    case EditMode::frequency: return "frequency";
  }
  return "?";
}

inline EditMode parse_edit_mode(const std::string& s) {
  if (s == "null") return EditMode::null;
  if (s == "amplitude") return EditMode::amplitude;
  if (s == "phase") return EditMode::phase;
  if (s == "frequency") return EditMode::frequency;
  throw ConfigError("unknown edit mode '" + s + "' (expected null, amplitude, phase or frequency)");
}

inline const std::vector<EditMode>& all_edit_modes() {
  static const std::vector<EditMode> m = {EditMode::null, EditMode::amplitude, EditMode::phase, EditMode::frequency};
  return m;
}

struct EditRequest {
  EditMode mode = EditMode::null;
  double alpha = 1.0;  // amplitude: injects alpha more of the hypothesis
  int tau = 6;         // phase: frame shift
  double rho = 1.4;    // frequency: rate factor
  trainer::Range nulling_range{-2.0, 0.0};
  std::size_t top_k = 8;
};

struct EditOutcome {
  synth::VideoClip clip;
  double alpha_star = 0.0;
  double residual_ratio = 0.0;
  bool degenerate = false;
};

// Hypothesis-driven edit. The nulling search calibrates the gain a = -alpha*
// at which an injection matches the pulse already present; phase and
// frequency edits add the transformed hypothesis back into the nulled clip.
inline EditOutcome apply_edit(const synth::VideoClip& clip, const std::vector<double>& s, const EditRequest& req,
                              const editor::EditorBackend& G) {
  if (!clip.has_mask()) throw DataError("edit: clip carries no skin mask");
  if (s.size() != clip.T) throw DataError("edit: target has " + std::to_string(s.size()) + " samples, clip has " + std::to_string(clip.T));
  const auto H = trainer::prepare_hypothesis(clip, s, req.top_k);
  EditOutcome out;
  if (H.degenerate) {
    out.clip = clip;
    out.degenerate = true;
    return out;
  }
  const auto nr = trainer::nulling_search(clip, H.oriented, G, H.psm, req.nulling_range, trainer::skin_band_probe(clip.mask));
  out.alpha_star = nr.alpha_star;
  out.residual_ratio = nr.residual_ratio();
  const double a = -nr.alpha_star;
  const double fs = clip.fps;
  switch (req.mode) {
    case EditMode::null:
      out.clip = nr.X_nul;
      break;
    case EditMode::amplitude:
      out.clip = G.inject(clip, H.psm, H.oriented, req.alpha * a);
      break;
    case EditMode::phase:
      out.clip = G.inject(nr.X_nul, H.psm, signal::transform_signal({H.oriented, fs}, signal::TransformSpec::phase(req.tau)).samples, a);
      break;
    case EditMode::frequency: {
      const auto spec = signal::TransformSpec::frequency(req.rho, signal::cycle_aligned_period({H.unit, fs}));
      out.clip = G.inject(nr.X_nul, H.psm, signal::transform_signal({H.oriented, fs}, spec).samples, a);
      break;
    }
  }
  return out;
}

struct FidelityRow {
  std::string mode;
  double psnr = 0.0, ssim = 0.0;
  int n_frames = 0;
};

struct FidelityItem {
  synth::VideoClip clip;
  std::vector<double> s;
};

// PSNR/SSIM of each edit mode against the originals, averaged over clips,
// plus an `average` row over the modes.
inline std::vector<FidelityRow> run_fidelity(const std::vector<FidelityItem>& items, const EditRequest& base,
                                             const editor::EditorBackend& G,
                                             const std::vector<EditMode>& modes = all_edit_modes()) {
  if (items.empty()) throw DataError("fidelity: no clips");
  std::vector<FidelityRow> rows;
  FidelityRow avg{"average"};
  for (EditMode m : modes) {
    FidelityRow r{to_string(m)};
    EditRequest req = base;
    req.mode = m;
    for (const auto& it : items) {
      const auto e = apply_edit(it.clip, it.s, req, G);
      r.psnr += editor::psnr(it.clip, e.clip) / static_cast<double>(items.size());
      r.ssim += editor::ssim(it.clip, e.clip) / static_cast<double>(items.size());
      r.n_frames += static_cast<int>(it.clip.T);
    }
    avg.psnr += r.psnr / static_cast<double>(modes.size());
    avg.ssim += r.ssim / static_cast<double>(modes.size());
    avg.n_frames += r.n_frames;
    rows.push_back(r);
  }
  rows.push_back(avg);
  return rows;
}

inline void write_fidelity_rows(const std::vector<FidelityRow>& rows, const std::string& path) {
  Table t;
  t.header = {"mode", "psnr_db", "ssim", "n_frames"};
  for (const auto& r : rows) t.rows.push_back({r.mode, fmt(r.psnr), fmt(r.ssim), std::to_string(r.n_frames)});
  write_csv(t, path);
}

inline std::vector<FidelityRow> read_fidelity_rows(const std::string& path) {
  const Table t = read_csv(path);
  if (t.header != std::vector<std::string>{"mode", "psnr_db", "ssim", "n_frames"}) throw DataError(path + ": not a fidelity file");
  std::vector<FidelityRow> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    out.push_back({t.rows[i][0], t.number(i, "psnr_db"), t.number(i, "ssim"), static_cast<int>(t.number(i, "n_frames"))});
  return out;
}

}  // namespace pcp::eval
