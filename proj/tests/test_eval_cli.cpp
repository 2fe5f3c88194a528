#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "pcp/eval/benchmark.hpp"
#include "pcp/eval/dataset.hpp"
#include "pcp/eval/diagnose.hpp"
#include "pcp/eval/fidelity.hpp"
#include "pcp/eval/plot.hpp"

using namespace pcp;
using namespace pcp::eval;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("pcp_eval_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int count(const std::string& hay, const std::string& needle) {
  int n = 0;
  for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

DatasetConfig tiny_dataset(int n_train, int n_test) {
  DatasetConfig c;
  c.n_train = n_train;
  c.n_test = n_test;
  return c;
}

synth::SynthConfig clip_cfg(double hr, std::uint64_t seed) {
  synth::SynthConfig c;
  c.hr_bpm = hr;
  c.seed = seed;
  c.base_texture_seed = seed + 500;
  return c;
}

BenchItem item(double hr, std::uint64_t seed) {
  const auto c = clip_cfg(hr, seed);
  const auto s = synth::synth_pulse(c);
  return bench_item("clip" + std::to_string(seed), seed, synth::render_clip(s, c), s);
}

FidelityItem fid_item(double hr, std::uint64_t seed) {
  const auto c = clip_cfg(hr, seed);
  const auto s = synth::synth_pulse(c);
  return {synth::render_clip(s, c), s.samples};
}

// Runs the CLI with its output discarded and returns the exit status.
int run_cli(const std::string& args, const fs::path& dir) {
  const std::string cmd = "cd '" + dir.string() + "' && '" + PCP_CLI_PATH + "' " + args + " > out.txt 2> err.txt";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

}  // namespace

// ---- dataset

TEST(Dataset, DefaultConfigPlansTwentyTrainTenTest) {
  const auto m = plan_dataset(DatasetConfig{});
  ASSERT_EQ(m.size(), 30u);
  EXPECT_EQ(std::count_if(m.begin(), m.end(), [](const ManifestEntry& e) { return e.split == "train"; }), 20);
  EXPECT_EQ(std::count_if(m.begin(), m.end(), [](const ManifestEntry& e) { return e.split == "test"; }), 10);
}

TEST(Dataset, RerunGivesIdenticalManifestHashes) {
  const auto da = scratch("ds_a"), db = scratch("ds_b");
  const auto a = make_dataset(tiny_dataset(1, 2), da.string());
  const auto b = make_dataset(tiny_dataset(1, 2), db.string());
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].hash, b[i].hash);
    EXPECT_EQ(a[i].seed, b[i].seed);
  }
  EXPECT_EQ(slurp(da / "manifest.csv"), slurp(db / "manifest.csv"));
}

TEST(Dataset, HeartRatesCoverTheRangeUniformly) {
  auto c = tiny_dataset(600, 0);
  const auto m = plan_dataset(c);
  std::vector<int> bins(6, 0);
  for (const auto& e : m) {
    ASSERT_GE(e.hr_bpm, 50.0);
    ASSERT_LT(e.hr_bpm, 110.0);
    ++bins[static_cast<std::size_t>((e.hr_bpm - 50.0) / 10.0)];
  }
  for (int b : bins) EXPECT_GE(b, 70) << "expected about 100 per 10 bpm bin";
}

TEST(Dataset, ConfigErrorsAreDistinct) {
  std::istringstream bad_key("n_train = 3\nlanguage = fr\n");
  EXPECT_THROW(parse_dataset_config(bad_key), ConfigError);
  std::istringstream bad_range("hr_range = 120, 60\n");
  EXPECT_THROW(parse_dataset_config(bad_range), ConfigError);
  std::istringstream ok("n_train = 3\nhr_range = 60, 90\nseed = 9\n");
  const auto c = parse_dataset_config(ok);
  EXPECT_EQ(c.n_train, 3);
  EXPECT_DOUBLE_EQ(c.hr_lo, 60.0);
  EXPECT_EQ(c.seed, 9u);
}

TEST(Dataset, OpenReadsBackClipsAndGroundTruth) {
  const auto dir = scratch("ds_open");
  const auto m = make_dataset(tiny_dataset(1, 1), dir.string());
  const auto d = Dataset::open(dir.string());
  ASSERT_EQ(d.entries.size(), 2u);
  EXPECT_EQ(d.entries[1].hash, m[1].hash);
  const auto l = d.labeled(d.split("test")[0]);
  EXPECT_EQ(l.s_gt.size(), l.clip.T);
  EXPECT_TRUE(l.clip.has_mask());
}

TEST(Dataset, UnwritableDirectoryIsADataError) {
  const auto f = scratch("ds_file") / "plain";
  std::ofstream(f) << "x";
  EXPECT_THROW(make_dataset(tiny_dataset(1, 0), (f / "sub").string()), DataError);
}

// ---- csv

TEST(Csv, NumbersRoundTripExactly) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 20) - 10);
    EXPECT_EQ(parse_number(fmt(v), "x"), v);
  }
}

TEST(Csv, RejectsGarbage) {
  EXPECT_THROW(parse_number("1.5x", "col"), DataError);
  EXPECT_THROW(parse_number("", "col"), DataError);
  const auto p = scratch("csv") / "ragged.csv";
  std::ofstream(p) << "a,b\n1,2\n3\n";
  EXPECT_THROW(read_csv(p.string()), DataError);
}

TEST(Csv, MetricsDetailAndFidelityFilesRoundTrip) {
  const auto dir = scratch("csv_rt");
  std::vector<MetricsRow> m = {{"pos", "clean", 0.25, 0.5, 0.99, 10, 0.0, "ok"},
                               {"net", "+illum", 0.0, 0.0, 0.0, 0, 0.0, "skipped: missing weights"}};
  write_metrics_rows(m, (dir / "m.csv").string());
  const auto m2 = read_metrics_rows((dir / "m.csv").string());
  ASSERT_EQ(m2.size(), 2u);
  EXPECT_EQ(m2[0].mae, 0.25);
  EXPECT_EQ(m2[0].r, 0.99);
  EXPECT_EQ(m2[1].status, "skipped: missing weights");

  std::vector<DetailRow> d = {{"pos", "clean", "test_000", 71.123456789, 70.3125}};
  write_detail_rows(d, (dir / "d.csv").string());
  const auto d2 = read_detail_rows((dir / "d.csv").string());
  ASSERT_EQ(d2.size(), 1u);
  EXPECT_EQ(d2[0].hr_gt, 71.123456789);
  EXPECT_EQ(d2[0].clip, "test_000");

  std::vector<FidelityRow> f = {{"null", 58.91, 0.99993, 300}, {"average", 61.5, 0.9999, 1200}};
  write_fidelity_rows(f, (dir / "f.csv").string());
  const auto f2 = read_fidelity_rows((dir / "f.csv").string());
  ASSERT_EQ(f2.size(), 2u);
  EXPECT_EQ(f2[0].psnr, 58.91);
  EXPECT_EQ(f2[1].n_frames, 1200);
}

// ---- benchmark

class BenchmarkTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    for (int i = 0; i < 4; ++i) items_.push_back(item(55.0 + 12.0 * i, 300 + i));
    result_ = run_benchmark(items_, {parse_method("green"), parse_method("pos"), parse_method("ghost=/nonexistent/w.rpwt")});
  }
  static std::vector<BenchItem> items_;
  static BenchmarkResult result_;
};
std::vector<BenchItem> BenchmarkTest::items_;
BenchmarkResult BenchmarkTest::result_;

TEST_F(BenchmarkTest, PosCleanWithinOneBpm) { EXPECT_LE(result_.row("pos", "clean").mae, 1.0); }

TEST_F(BenchmarkTest, GreenCapturedByFlicker) { EXPECT_GE(result_.row("green", "+illum").delta_mae, 10.0); }

TEST_F(BenchmarkTest, RowsSatisfyMetricInvariants) {
  for (const auto& r : result_.summary) {
    if (r.status != "ok") continue;
    EXPECT_GE(r.mae, 0.0);
    EXPECT_GE(r.rmse, r.mae);
    EXPECT_GE(r.r, -1.0);
    EXPECT_LE(r.r, 1.0);
    EXPECT_EQ(r.n_clips, 4);
  }
}

TEST_F(BenchmarkTest, MissingWeightsBecomeSkippedRows) {
  const auto& r = result_.row("ghost", "clean");
  EXPECT_NE(r.status.find("skipped"), std::string::npos);
  for (const auto& d : result_.details) EXPECT_NE(d.method, "ghost");
}

TEST_F(BenchmarkTest, SummaryRecomputesFromDetailFile) {
  const auto dir = scratch("bench");
  write_detail_rows(result_.details, (dir / "d.csv").string());
  write_metrics_rows(result_.summary, (dir / "m.csv").string());
  const auto details = read_detail_rows((dir / "d.csv").string());
  for (const auto& r : read_metrics_rows((dir / "m.csv").string())) {
    if (r.status != "ok") continue;
    const auto again = aggregate(r.method, r.scenario, details);
    EXPECT_NEAR(again.mae, r.mae, 1e-9);
    EXPECT_NEAR(again.rmse, r.rmse, 1e-9);
  }
}

TEST_F(BenchmarkTest, DeltaIsAgainstCleanAndAveraged) {
  const double illum = result_.row("green", "+illum").mae - result_.row("green", "clean").mae;
  const double motion = result_.row("green", "+motion").mae - result_.row("green", "clean").mae;
  EXPECT_DOUBLE_EQ(result_.row("green", "+illum").delta_mae, illum);
  EXPECT_DOUBLE_EQ(result_.avg_delta_mae("green"), 0.5 * (illum + motion));
}

TEST_F(BenchmarkTest, SameSeedSameResult) {
  const auto again = run_benchmark(items_, {parse_method("green"), parse_method("pos")});
  for (const auto& r : again.summary) EXPECT_EQ(r.mae, result_.row(r.method, r.scenario).mae);
}

TEST(Benchmark, UnknownMethodIsAConfigError) {
  EXPECT_THROW(parse_method("ica"), ConfigError);
  EXPECT_THROW(parse_method("=w.rpwt"), ConfigError);
}

// ---- fidelity

TEST(Fidelity, ZeroStrengthEditHitsTheIdentitySentinel) {
  const auto it = fid_item(70.0, 11);
  EditRequest req;
  req.mode = EditMode::amplitude;
  req.alpha = 0.0;
  const auto e = apply_edit(it.clip, it.s, req, editor::AnalyticBackend{});
  EXPECT_GE(editor::psnr(it.clip, e.clip), 99.0);
  EXPECT_DOUBLE_EQ(editor::ssim(it.clip, e.clip), 1.0);
}

TEST(Fidelity, DoublingFrequencyDoublesPosHrAndKeepsFidelity) {
  for (std::uint64_t seed : {21, 22, 23}) {
    const auto it = fid_item(60.0 + 3.0 * static_cast<double>(seed - 21), seed);
    const double hr0 = signal::estimate_hr(extractor::classical_extract(it.clip, extractor::ClassicalMethod::pos));
    EditRequest req;
    req.mode = EditMode::frequency;
    req.rho = 2.0;
    const auto e = apply_edit(it.clip, it.s, req, editor::AnalyticBackend{});
    const double hr1 = signal::estimate_hr(extractor::classical_extract(e.clip, extractor::ClassicalMethod::pos));
    EXPECT_NEAR(hr1, 2.0 * hr0, 3.0) << "seed " << seed;
    EXPECT_GE(editor::psnr(it.clip, e.clip), 55.0) << "seed " << seed;
  }
}

TEST(Fidelity, ReportAveragesOverModes) {
  const std::vector<FidelityItem> items = {fid_item(66.0, 31), fid_item(84.0, 32)};
  const auto rows = run_fidelity(items, EditRequest{}, editor::AnalyticBackend{});
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows.back().mode, "average");
  double p = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    p += rows[i].psnr / 4.0;
    EXPECT_GE(rows[i].ssim, 0.99);
    EXPECT_LE(rows[i].ssim, 1.0);
    EXPECT_EQ(rows[i].n_frames, 600);
  }
  EXPECT_NEAR(rows.back().psnr, p, 1e-9);
}

TEST(Fidelity, TargetLengthMismatchIsADataError) {
  const auto it = fid_item(70.0, 12);
  EXPECT_THROW(apply_edit(it.clip, std::vector<double>(10, 0.0), EditRequest{}, editor::AnalyticBackend{}), DataError);
  EXPECT_THROW(parse_edit_mode("invert"), ConfigError);
}

// ---- plot

TEST(Plot, TwoSeriesGiveTwoPolylines) {
  const auto p = scratch("plot") / "w.csv";
  std::ofstream(p) << "t_seconds,a,b\n0,1,2\n0.5,2,1\n1,3,0\n";
  const auto svg = plot_files({p.string()}, "two");
  EXPECT_EQ(count(svg, "<polyline"), 2);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
}

TEST(Plot, OverlayOfWaveformFiles) {
  const auto dir = scratch("plot_overlay");
  signal::write_waveform_csv({{0.0, 1.0, 0.0, -1.0}, 4.0}, (dir / "a.csv").string());
  signal::write_waveform_csv({{1.0, 0.0, -1.0, 0.0}, 4.0}, (dir / "b.csv").string());
  const auto svg = plot_files({(dir / "a.csv").string(), (dir / "b.csv").string()}, "overlay");
  EXPECT_EQ(count(svg, "<polyline"), 2);
  EXPECT_NE(svg.find(">a<"), std::string::npos);
  EXPECT_NE(svg.find(">b<"), std::string::npos);
}

TEST(Plot, MetricsBecomeBars) {
  const auto p = scratch("plot_bars") / "m.csv";
  write_metrics_rows({{"green", "clean", 0.2, 0.3, 1, 4, 0, "ok"}, {"green", "+illum", 30, 31, 0, 4, 29.8, "ok"}}, p.string());
  const auto svg = plot_files({p.string()}, "bars");
  EXPECT_EQ(count(svg, "<polyline"), 0);
  EXPECT_EQ(count(svg, "<rect"), 2 + 2 + 1);  // background, frame, two bars, one legend swatch
}

TEST(Plot, IdenticalInputsIdenticalBytes) {
  const auto p = scratch("plot_det") / "w.csv";
  std::ofstream(p) << "t_seconds,value\n0,0.1\n0.1,0.3\n0.2,-0.2\n";
  EXPECT_EQ(plot_files({p.string()}, "x"), plot_files({p.string()}, "x"));
}

TEST(Plot, EmptyInputIsAnError) {
  const auto dir = scratch("plot_empty");
  std::ofstream(dir / "empty.csv") << "";
  std::ofstream(dir / "header_only.csv") << "t_seconds,value\n";
  EXPECT_THROW(plot_files({}, "x"), DataError);
  EXPECT_THROW(plot_files({(dir / "empty.csv").string()}, "x"), DataError);
  EXPECT_THROW(plot_files({(dir / "header_only.csv").string()}, "x"), DataError);
  EXPECT_THROW(line_plot_svg({}, "x", "t", "v"), DataError);
}

TEST(Plot, AmplitudeSweepInvertsPhase) {
  const auto it = fid_item(72.0, 41);
  const auto pos = parse_method("pos");
  const auto series = amplitude_sweep(it.clip, it.s, {-3, -1, 0, 1, 3}, pos.extract, editor::AnalyticBackend{});
  ASSERT_EQ(series.size(), 5u);
  EXPECT_LE(signal::pearson(series[1].y, series[3].y), -0.9);
  EXPECT_EQ(count(line_plot_svg(series, "sweep", "t", "v"), "<polyline"), 5);
  const auto p = scratch("sweep") / "sweep.csv";
  write_series_csv(series, "t_seconds", p.string());
  const auto back = series_from_table(read_csv(p.string()));
  ASSERT_EQ(back.size(), 5u);
  EXPECT_EQ(back[3].y, series[3].y);
}

// ---- diagnose

TEST(Diagnose, GreenLocksToFlickerPosFollowsPulse) {
  FlickerOptions o;
  o.n_clips = 5;
  const auto s = summarize_flicker(flicker_lock({parse_method("green"), parse_method("pos")}, o));
  ASSERT_EQ(s.size(), 2u);
  EXPECT_GE(s[0].locked_fraction, 0.8);
  EXPECT_GE(s[1].nearer_pulse_fraction, 0.8);
  EXPECT_EQ(s[1].n_clips, 5);
}

// ---- command line

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = scratch("cli");
    std::ofstream(dir_ / "tiny.cfg") << "n_train = 2\nn_test = 2\n";
    ASSERT_EQ(run_cli("--config tiny.cfg synth --out ds", dir_), 0);
  }
  static fs::path dir_;
};
fs::path CliTest::dir_;

TEST_F(CliTest, SynthHonoursSeed) {
  ASSERT_EQ(run_cli("--config tiny.cfg --seed 1 synth --out ds1", dir_), 0);
  ASSERT_EQ(run_cli("--config tiny.cfg --seed 2 synth --out ds2", dir_), 0);
  EXPECT_EQ(slurp(dir_ / "ds" / "manifest.csv"), slurp(dir_ / "ds1" / "manifest.csv"));
  EXPECT_NE(slurp(dir_ / "ds" / "manifest.csv"), slurp(dir_ / "ds2" / "manifest.csv"));
}

TEST_F(CliTest, ExtractWritesWaveform) {
  ASSERT_EQ(run_cli("extract --in ds/clips/test_000.rpcl --method pos --out w.csv", dir_), 0);
  const auto w = signal::read_waveform_csv((dir_ / "w.csv").string());
  EXPECT_EQ(w.size(), 300u);
  EXPECT_NE(slurp(dir_ / "out.txt").find("hr_bpm"), std::string::npos);
}

TEST_F(CliTest, EditWritesClipAndReport) {
  ASSERT_EQ(run_cli("edit --in ds/clips/test_000.rpcl --signal ds/clips/test_000_gt.csv --mode phase --tau 4 --out e.rpcl --report f.csv",
                    dir_),
            0);
  EXPECT_EQ(synth::read_clip((dir_ / "e.rpcl").string()).T, 300u);
  const auto f = read_fidelity_rows((dir_ / "f.csv").string());
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0].mode, "phase");
}

TEST_F(CliTest, BenchmarkAndPlotAreReproducible) {
  ASSERT_EQ(run_cli("--seed 4 benchmark --data ds --methods green,pos --out m1.csv --details d1.csv", dir_), 0);
  ASSERT_EQ(run_cli("--seed 4 benchmark --data ds --methods green,pos --out m2.csv", dir_), 0);
  EXPECT_EQ(slurp(dir_ / "m1.csv"), slurp(dir_ / "m2.csv"));
  ASSERT_EQ(run_cli("plot --in m1.csv --out a.svg", dir_), 0);
  ASSERT_EQ(run_cli("plot --in m1.csv --out b.svg", dir_), 0);
  EXPECT_EQ(slurp(dir_ / "a.svg"), slurp(dir_ / "b.svg"));
}

TEST_F(CliTest, TrainWritesWeightsAndMetrics) {
  std::ofstream(dir_ / "run.cfg") << "stage1_epochs = 1\nbatch_size = 2\n";
  ASSERT_EQ(run_cli("train --stage 1 --data ds --config run.cfg --out e1.rpwt --log metrics.csv", dir_), 0);
  const auto t = read_csv((dir_ / "metrics.csv").string());
  ASSERT_EQ(t.rows.size(), 1u);
  for (const auto& n : trainer::LossBreakdown::names()) EXPECT_TRUE(t.has_column(n)) << n;
  ASSERT_EQ(run_cli("extract --in ds/clips/test_000.rpcl --method net --weights e1.rpwt --out wn.csv", dir_), 0);
}

TEST_F(CliTest, ExitCodesByFailureClass) {
  EXPECT_EQ(run_cli("", dir_), 2);
  EXPECT_EQ(run_cli("synth", dir_), 2);
  std::ofstream(dir_ / "bad.cfg") << "learning_rate = fast\n";
  EXPECT_EQ(run_cli("train --stage 1 --data ds --config bad.cfg --out x.rpwt", dir_), 2);
  EXPECT_EQ(run_cli("train --stage 4 --data ds --out x.rpwt", dir_), 2);
  EXPECT_EQ(run_cli("extract --in missing.rpcl --out x.csv", dir_), 3);
  EXPECT_EQ(run_cli("extract --in ds/clips/test_000.rpcl --method ica --out x.csv", dir_), 2);
  std::ofstream(dir_ / "empty.csv") << "";
  EXPECT_EQ(run_cli("plot --in empty.csv --out x.svg", dir_), 3);
  EXPECT_NE(slurp(dir_ / "err.txt").find("empty"), std::string::npos);
  signal::write_waveform_csv({std::vector<double>(300, 0.0), 30.0}, (dir_ / "zero.csv").string());
  EXPECT_EQ(run_cli("diagnose sweep --in ds/clips/test_000.rpcl --signal zero.csv --out s.csv", dir_), 4);
}
