// pcp: dataset synthesis, editing, extraction, training and evaluation.
//
// Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure.

#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pcp/editor/generator.hpp"
#include "pcp/eval/benchmark.hpp"
#include "pcp/eval/dataset.hpp"
#include "pcp/eval/diagnose.hpp"
#include "pcp/eval/fidelity.hpp"
#include "pcp/eval/plot.hpp"
#include "pcp/trainer/stage2.hpp"
#include "pcp/trainer/train.hpp"

namespace {

using namespace pcp;

enum Exit { kOk = 0, kConfig = 2, kData = 3, kNumeric = 4 };

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  bool verbose = false;
};

Globals g_opts;

void note(const std::string& m) {
  if (g_opts.verbose) std::cerr << "pcp: " << m << '\n';
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::unique_ptr<editor::EditorBackend> load_editor(const std::string& spec, std::optional<editor::EditorGenerator>& holder) {
  if (spec.empty() || spec == "analytic") return std::make_unique<editor::AnalyticBackend>();
  holder = editor::EditorGenerator::load(spec);
  if (!holder->trained()) throw DataError(spec + ": editor weights are untrained");
  return std::make_unique<editor::LearnedBackend>(*holder);
}

trainer::TrainConfig train_config() {
  trainer::TrainConfig c = g_opts.config.empty() ? trainer::TrainConfig{} : trainer::load_config(g_opts.config);
  if (g_opts.seed) c.seed = *g_opts.seed;
  c.validate();
  return c;
}

// ---- synth

struct SynthArgs {
  std::string out;
};

int cmd_synth(const SynthArgs& a) {
  auto c = g_opts.config.empty() ? eval::DatasetConfig{} : eval::load_dataset_config(g_opts.config);
  if (g_opts.seed) c.seed = *g_opts.seed;
  c.validate();
  const auto m = eval::make_dataset(c, a.out);
  std::printf("wrote %zu clips to %s\n", m.size(), a.out.c_str());
  return kOk;
}

// ---- edit

struct EditArgs {
  std::string in, signal, mode = "null", out, report, editor = "analytic";
  double alpha = 1.0, rho = 1.4;
  int tau = 6;
};

int cmd_edit(const EditArgs& a) {
  const auto clip = synth::read_clip(a.in);
  const auto s = signal::read_waveform_csv(a.signal);
  eval::EditRequest req;
  req.mode = eval::parse_edit_mode(a.mode);
  req.alpha = a.alpha;
  req.tau = a.tau;
  req.rho = a.rho;
  std::optional<editor::EditorGenerator> holder;
  const auto G = load_editor(a.editor, holder);
  const auto e = eval::apply_edit(clip, s.samples, req, *G);
  if (e.degenerate) std::fprintf(stderr, "pcp: warning: hypothesis has no in-band content, clip left unchanged\n");
  synth::write_clip(e.clip, a.out);
  std::printf("alpha_star %.6g residual_ratio %.6g\n", e.alpha_star, e.residual_ratio);
  if (!a.report.empty()) {
    eval::FidelityRow r{eval::to_string(req.mode), editor::psnr(clip, e.clip), editor::ssim(clip, e.clip), static_cast<int>(clip.T)};
    eval::write_fidelity_rows({r}, a.report);
  }
  return kOk;
}

// ---- extract

struct ExtractArgs {
  std::string in, method = "pos", weights, out;
};

int cmd_extract(const ExtractArgs& a) {
  const auto clip = synth::read_clip(a.in);
  signal::Waveform w;
  if (a.method == "net") {
    if (a.weights.empty()) throw ConfigError("extract --method net needs --weights");
    w = extractor::PhysNet::load(a.weights).extract(clip);
  } else {
    try {
      w = extractor::classical_extract(clip, extractor::parse_classical(a.method));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  signal::write_waveform_csv(w, a.out);
  std::printf("hr_bpm %.4f\n", signal::estimate_hr(w));
  return kOk;
}

// ---- train

struct TrainArgs {
  int stage = 1;
  std::string data, out, log, reference, editor = "analytic", init;
};

int finish_training(const trainer::TrainReport& rep, const std::string& log) {
  if (!log.empty()) trainer::write_metrics_csv(rep, log);
  if (rep.diverged) {
    std::fprintf(stderr, "pcp: training diverged (%s); wrote the last finite checkpoint\n", rep.message.c_str());
    return kNumeric;
  }
  return kOk;
}

int cmd_train(const TrainArgs& a) {
  const auto cfg = train_config();
  const auto d = eval::Dataset::open(a.data);
  const auto train = d.split("train");
  if (train.empty()) throw DataError(a.data + ": no training clips in manifest");
  auto on_epoch = [](const trainer::EpochStats& s) {
    note("epoch " + std::to_string(s.epoch) + " total " + eval::fmt(s.loss.total) + " lr " + eval::fmt(s.lr));
  };
  extractor::ExtractorConfig ec;
  ec.init_seed = cfg.seed;
  if (a.stage == 1) {
    std::vector<trainer::LabeledClip> data;
    for (const auto& e : train) data.push_back(d.labeled(e));
    extractor::PhysNet net = a.init.empty() ? extractor::PhysNet(ec) : extractor::PhysNet::load(a.init);
    const auto rep = trainer::train_stage1(net, data, cfg, on_epoch);
    net.save(a.out);
    return finish_training(rep, a.log);
  }
  if (a.stage == 2) {
    if (a.reference.empty()) throw ConfigError("train --stage 2 needs --reference (Stage-I weights)");
    std::vector<trainer::LabeledClip> data;
    for (const auto& e : train) data.push_back(d.labeled(e));
    auto e_star = extractor::PhysNet::load(a.reference);
    editor::GeneratorConfig gc;
    gc.init_seed = cfg.seed;
    editor::EditorGenerator gen(gc);
    const auto rep = trainer::train_editor(gen, e_star, data, cfg, on_epoch);
    gen.save(a.out);
    return finish_training(rep, a.log);
  }
  // Stage III reads clips only; ground-truth sidecars stay closed.
  std::vector<synth::VideoClip> clips;
  for (const auto& e : train) clips.push_back(d.clip(e));
  std::optional<editor::EditorGenerator> holder;
  const auto G = load_editor(a.editor, holder);
  extractor::PhysNet net = a.init.empty() ? extractor::PhysNet(ec) : extractor::PhysNet::load(a.init);
  const auto rep = trainer::train_stage3(net, clips, *G, cfg, on_epoch);
  net.save(a.out);
  return finish_training(rep, a.log);
}

// ---- benchmark

struct BenchmarkArgs {
  std::string data, methods = "green,chrom,pos", out, details;
};

int cmd_benchmark(const BenchmarkArgs& a) {
  const auto d = eval::Dataset::open(a.data);
  std::vector<eval::Method> methods;
  for (const auto& tok : split_list(a.methods)) {
    methods.push_back(eval::parse_method(tok));
    if (!methods.back().extract) std::fprintf(stderr, "pcp: warning: skipping %s (%s)\n", tok.c_str(), methods.back().unavailable.c_str());
  }
  if (methods.empty()) throw ConfigError("benchmark needs at least one method");
  const auto items = eval::test_items(d);
  if (items.empty()) throw DataError(a.data + ": no test clips in manifest");
  const auto r = eval::run_benchmark(items, methods, eval::default_scenarios(), note, g_opts.seed.value_or(0));
  eval::write_metrics_rows(r.summary, a.out);
  if (!a.details.empty()) eval::write_detail_rows(r.details, a.details);
  for (const auto& m : methods)
    if (m.extract) std::printf("%s avg_delta_mae %.4f\n", m.name.c_str(), r.avg_delta_mae(m.name));
  return kOk;
}

// ---- fidelity

struct FidelityArgs {
  std::string data, modes = "null,amplitude,phase,frequency", out, editor = "analytic";
  double alpha = 1.0, rho = 1.4;
  int tau = 6, clips = 0;
};

int cmd_fidelity(const FidelityArgs& a) {
  const auto d = eval::Dataset::open(a.data);
  std::vector<eval::FidelityItem> items;
  for (const auto& e : d.split("test")) {
    if (a.clips > 0 && static_cast<int>(items.size()) >= a.clips) break;
    auto l = d.labeled(e);
    items.push_back({std::move(l.clip), std::move(l.s_gt.samples)});
  }
  std::vector<eval::EditMode> modes;
  for (const auto& m : split_list(a.modes)) modes.push_back(eval::parse_edit_mode(m));
  if (modes.empty()) throw ConfigError("fidelity needs at least one mode");
  eval::EditRequest req;
  req.alpha = a.alpha;
  req.tau = a.tau;
  req.rho = a.rho;
  std::optional<editor::EditorGenerator> holder;
  const auto G = load_editor(a.editor, holder);
  const auto rows = eval::run_fidelity(items, req, *G, modes);
  eval::write_fidelity_rows(rows, a.out);
  for (const auto& r : rows) std::printf("%s psnr %.3f ssim %.6f\n", r.mode.c_str(), r.psnr, r.ssim);
  return kOk;
}

// ---- plot

struct PlotArgs {
  std::vector<std::string> in;
  std::string out, title = "pcp";
};

int cmd_plot(const PlotArgs& a) {
  eval::write_text(eval::plot_files(a.in, a.title), a.out);
  return kOk;
}

// ---- diagnose

struct FlickerArgs {
  std::string methods = "green,pos", out;
  int clips = 10;
};

int cmd_flicker(const FlickerArgs& a) {
  std::vector<eval::Method> methods;
  for (const auto& tok : split_list(a.methods)) {
    methods.push_back(eval::parse_method(tok));
    if (!methods.back().extract) std::fprintf(stderr, "pcp: warning: skipping %s (%s)\n", tok.c_str(), methods.back().unavailable.c_str());
  }
  eval::FlickerOptions o;
  o.n_clips = a.clips;
  if (g_opts.seed) o.seed = *g_opts.seed;
  const auto rows = eval::flicker_lock(methods, o);
  eval::write_flicker_rows(rows, a.out);
  for (const auto& s : eval::summarize_flicker(rows))
    std::printf("%s nearer_pulse %.2f locked %.2f\n", s.method.c_str(), s.nearer_pulse_fraction, s.locked_fraction);
  return kOk;
}

struct SweepArgs {
  std::string in, signal, alphas = "-3,-1,0,1,3", method = "pos", out, editor = "analytic";
};

int cmd_sweep(const SweepArgs& a) {
  const auto clip = synth::read_clip(a.in);
  const auto s = signal::read_waveform_csv(a.signal);
  std::vector<double> alphas;
  for (const auto& t : split_list(a.alphas)) alphas.push_back(trainer::cfg_detail::number("alphas", t));
  if (alphas.empty()) throw ConfigError("sweep needs at least one alpha");
  const auto m = eval::parse_method(a.method);
  if (!m.extract) throw DataError(m.unavailable);
  std::optional<editor::EditorGenerator> holder;
  const auto G = load_editor(a.editor, holder);
  eval::write_series_csv(eval::amplitude_sweep(clip, s.samples, alphas, m.extract, *G), "t_seconds", a.out);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pcp: causal probing toolkit for remote pulse extraction"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--seed", g_opts.seed, "Seed overriding the config seed");
  app.add_option("--config", g_opts.config, "key = value config file");
  app.add_flag("-v,--verbose", g_opts.verbose, "Progress on stderr");

  std::function<int()> run;

  SynthArgs sy;
  auto* s = app.add_subcommand("synth", "Synthesise a train/test dataset");
  s->add_option("--out", sy.out, "Dataset directory")->required();
  s->callback([&] { run = [&] { return cmd_synth(sy); }; });

  EditArgs ed;
  s = app.add_subcommand("edit", "Apply a hypothesis-driven edit to a clip");
  s->add_option("--in", ed.in, "Input clip (.rpcl)")->required();
  s->add_option("--signal", ed.signal, "Hypothesis waveform CSV")->required();
  s->add_option("--mode", ed.mode, "null, amplitude, phase or frequency");
  s->add_option("--alpha", ed.alpha, "Amplitude gain");
  s->add_option("--tau", ed.tau, "Phase shift in frames");
  s->add_option("--rho", ed.rho, "Frequency factor");
  s->add_option("--editor", ed.editor, "analytic or learned editor weights");
  s->add_option("--out", ed.out, "Edited clip")->required();
  s->add_option("--report", ed.report, "Fidelity CSV");
  s->callback([&] { run = [&] { return cmd_edit(ed); }; });

  ExtractArgs ex;
  s = app.add_subcommand("extract", "Extract a pulse waveform from a clip");
  s->add_option("--in", ex.in, "Input clip (.rpcl)")->required();
  s->add_option("--method", ex.method, "green, chrom, pos or net");
  s->add_option("--weights", ex.weights, "Extractor weights for --method net");
  s->add_option("--out", ex.out, "Waveform CSV")->required();
  s->callback([&] { run = [&] { return cmd_extract(ex); }; });

  TrainArgs tr;
  s = app.add_subcommand("train", "Train an extractor (stages 1, 3) or the editor (stage 2)");
  s->add_option("--stage", tr.stage, "1, 2 or 3")->required()->check(CLI::IsMember({1, 2, 3}));
  s->add_option("--data", tr.data, "Dataset directory")->required();
  s->add_option("--out", tr.out, "Output weights (.rpwt)")->required();
  s->add_option("--log", tr.log, "Per-epoch metrics CSV");
  s->add_option("--reference", tr.reference, "Stage-I weights (stage 2)");
  s->add_option("--editor", tr.editor, "analytic or learned editor weights (stage 3)");
  s->add_option("--init", tr.init, "Initial extractor weights");
  s->callback([&] { run = [&] { return cmd_train(tr); }; });

  BenchmarkArgs bm;
  s = app.add_subcommand("benchmark", "HR error per method and nuisance scenario");
  s->add_option("--data", bm.data, "Dataset directory")->required();
  s->add_option("--methods", bm.methods, "Comma list of green, chrom, pos, name=weights");
  s->add_option("--out", bm.out, "Metrics CSV")->required();
  s->add_option("--details", bm.details, "Per-clip CSV");
  s->callback([&] { run = [&] { return cmd_benchmark(bm); }; });

  FidelityArgs fi;
  s = app.add_subcommand("fidelity", "PSNR/SSIM of edits against the originals");
  s->add_option("--data", fi.data, "Dataset directory")->required();
  s->add_option("--modes", fi.modes, "Comma list of edit modes");
  s->add_option("--alpha", fi.alpha, "Amplitude gain");
  s->add_option("--tau", fi.tau, "Phase shift in frames");
  s->add_option("--rho", fi.rho, "Frequency factor");
  s->add_option("--clips", fi.clips, "Limit on test clips (0 = all)");
  s->add_option("--editor", fi.editor, "analytic or learned editor weights");
  s->add_option("--out", fi.out, "Fidelity CSV")->required();
  s->callback([&] { run = [&] { return cmd_fidelity(fi); }; });

  PlotArgs pl;
  s = app.add_subcommand("plot", "SVG from metrics or waveform CSVs");
  s->add_option("--in", pl.in, "Input CSV (repeatable)")->required();
  s->add_option("--title", pl.title, "Chart title");
  s->add_option("--out", pl.out, "Output SVG")->required();
  s->callback([&] { run = [&] { return cmd_plot(pl); }; });

  auto* dg = app.add_subcommand("diagnose", "Nuisance diagnostics");
  dg->require_subcommand(1);
  FlickerArgs fl;
  s = dg->add_subcommand("flicker", "Pulse plus flicker: which rate does each method follow");
  s->add_option("--methods", fl.methods, "Comma list of methods");
  s->add_option("--clips", fl.clips, "Number of clips")->check(CLI::PositiveNumber);
  s->add_option("--out", fl.out, "Per-clip CSV")->required();
  s->callback([&] { run = [&] { return cmd_flicker(fl); }; });
  SweepArgs sw;
  s = dg->add_subcommand("sweep", "Waveforms after injecting alpha times the hypothesis");
  s->add_option("--in", sw.in, "Input clip (.rpcl)")->required();
  s->add_option("--signal", sw.signal, "Hypothesis waveform CSV")->required();
  s->add_option("--alphas", sw.alphas, "Comma list of gains");
  s->add_option("--method", sw.method, "Extractor: green, chrom, pos or name=weights");
  s->add_option("--editor", sw.editor, "analytic or learned editor weights");
  s->add_option("--out", sw.out, "Series CSV")->required();
  s->callback([&] { run = [&] { return cmd_sweep(sw); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    return run();
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "pcp: config error: %s\n", e.what());
    return kConfig;
  } catch (const DataError& e) {
    std::fprintf(stderr, "pcp: data error: %s\n", e.what());
    return kData;
  } catch (const ad::NumericError& e) {
    std::fprintf(stderr, "pcp: numeric failure: %s\n", e.what());
    return kNumeric;
  } catch (const DegenerateSignal& e) {
    std::fprintf(stderr, "pcp: numeric failure: %s\n", e.what());
    return kNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "pcp: data error: %s\n", e.what());
    return kData;
  }
}
