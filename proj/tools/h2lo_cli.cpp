#include <Eigen/Core>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "h2lo/baseline.hpp"
#include "h2lo/error.hpp"
#include "h2lo/metrics.hpp"
#include "h2lo/phantom.hpp"
#include "h2lo/report.hpp"
#include "h2lo/trainer.hpp"

#ifndef H2LO_VERSION
#define H2LO_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace h2lo;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kData = 3, kNumerical = 4 };

class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void write_run_record(const fs::path& dir, const std::string& command, std::uint64_t seed, ordered_json config,
                      ordered_json inputs = ordered_json::object()) {
  ordered_json j;
  j["tool"] = "h2lo";
  j["version"] = H2LO_VERSION;
  j["command"] = command;
  j["seed"] = seed;
  j["config"] = std::move(config);
  j["inputs"] = std::move(inputs);
  write_text(dir / "run.json", j.dump(2) + "\n");
}

std::string indexed_name(const char* prefix, int index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%03d.vol", prefix, index);
  return buf;
}

std::vector<int> subset_indices(const Dataset& ds, const std::string& subset) {
  if (subset == "train") return ds.split.train;
  if (subset == "val") return ds.split.val;
  if (subset == "test") return ds.split.test;
  if (subset == "all") {
    std::vector<int> all;
    for (const Subject& s : ds.subjects) all.push_back(s.index);
    return all;
  }
  throw UsageError("unknown subset '" + subset + "' (expected train, val, test or all)");
}

const Subject& subject_at(const Dataset& ds, int index) {
  for (const Subject& s : ds.subjects)
    if (s.index == index) return s;
  throw DataError("dataset has no subject " + std::to_string(index));
}

// Options shared by several subcommands; the config file is read first and
// explicit flags win.
struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;

  json config_file() const { return config_path.empty() ? json::object() : read_json_file(config_path); }
};

void add_common(CLI::App* app, Options& o, bool need_out_dir) {
  app->add_option("--config", o.config_path, "JSON config file")->check(CLI::ExistingFile);
  app->add_option("--seed", o.seed, "Random seed");
  auto* out = app->add_option("--out-dir", o.out_dir, "Output directory");
  if (need_out_dir) out->required();
}

struct EvalFlags {
  std::optional<int> bins;
  std::optional<double> threshold;

  EvalOptions resolve(const json& cfg) const {
    EvalOptions e;
    if (cfg.contains("eval")) {
      e.bins = cfg["eval"].value("bins", e.bins);
      e.threshold = cfg["eval"].value("threshold", e.threshold);
    }
    if (bins) e.bins = *bins;
    if (threshold) e.threshold = *threshold;
    if (e.bins < 1) throw UsageError("--bins must be >= 1");
    return e;
  }
};

void add_eval_flags(CLI::App* app, EvalFlags& f) {
  app->add_option("--bins", f.bins, "Histogram bins on [0, 1]");
  app->add_option("--threshold", f.threshold, "Foreground threshold on the HF volume");
}

ordered_json eval_json(const EvalOptions& e) { return {{"bins", e.bins}, {"threshold", e.threshold}}; }

// ---------------------------------------------------------------------------

struct GenPhantomArgs {
  Options o;
  std::optional<int> n_subjects, n_val, n_test;
  std::vector<int> dims;
};

int cmd_gen_phantom(const GenPhantomArgs& a) {
  const json cfg = a.o.config_file();
  const json ds_cfg = cfg.value("dataset", json::object());
  PhantomSpec spec = phantom_spec_from_json(cfg.value("phantom", json::object()));
  const DegradationSpec dspec = degradation_spec_from_json(cfg.value("degradation", json::object()));
  if (!a.dims.empty()) {
    if (a.dims.size() != 3) throw UsageError("--dims takes three integers");
    spec.dims = {a.dims[0], a.dims[1], a.dims[2]};
    spec.validate();
  }
  const int n = a.n_subjects.value_or(ds_cfg.value("n_subjects", 10));
  const int n_val = a.n_val.value_or(ds_cfg.value("n_val", 1));
  const int n_test = a.n_test.value_or(ds_cfg.value("n_test", 3));
  const std::uint64_t seed = a.o.seed.value_or(ds_cfg.value("seed", std::uint64_t{0}));

  const Dataset ds = gen_dataset(n, spec, dspec, seed, make_split(n, n_val, n_test));
  const fs::path dir(a.o.out_dir);
  write_dataset(ds, dir);
  ordered_json eff;
  eff["dataset"] = {{"n_subjects", n}, {"n_val", n_val}, {"n_test", n_test}, {"seed", seed}};
  eff["phantom"] = to_json(spec);
  eff["degradation"] = to_json(dspec);
  write_run_record(dir, "gen-phantom", seed, eff);
  std::cout << "wrote " << n << " subjects to " << dir.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  Options o;
  std::string data;
  std::optional<int> epochs, n_coords, b_subvols, subvol_size;
  std::optional<double> lr, lr_min, lambda_grad;
  bool ablate_grad = false, ablate_siren = false, quiet = false;
  std::string resume;
  int checkpoint_every = 0;
};

TrainConfig resolve_train_config(const TrainArgs& a, const json& cfg) {
  TrainConfig c = train_config_from_json(cfg.value("train", json::object()));
  if (a.o.seed) c.seed = *a.o.seed;
  if (a.epochs) c.epochs = *a.epochs;
  if (a.lr) c.lr0 = *a.lr;
  if (a.lr_min) c.lr_min = *a.lr_min;
  if (a.lambda_grad) c.loss.lambda_grad = *a.lambda_grad;
  if (a.n_coords) c.loss.n_coords = *a.n_coords;
  if (a.b_subvols) c.loss.b_subvols = *a.b_subvols;
  if (a.subvol_size) c.loss.subvol_size = *a.subvol_size;
  if (a.ablate_grad) c.disable_grad_loss = true;
  if (a.ablate_siren) c.replace_siren_with_relu_mlp = true;
  c.validate();
  return c;
}

std::vector<TrainPair> pairs_of(const Dataset& ds, const std::vector<int>& indices) {
  std::vector<TrainPair> out;
  for (int i : indices) {
    const Subject& s = subject_at(ds, i);
    out.push_back({&s.hf, &s.lf});
  }
  return out;
}

int cmd_train(const TrainArgs& a) {
  const json cfg = a.o.config_file();
  const Dataset ds = read_dataset(a.data);
  const auto train_pairs = pairs_of(ds, ds.split.train);
  const auto val_pairs = pairs_of(ds, ds.split.val);
  const fs::path dir(a.o.out_dir);
  fs::create_directories(dir);

  std::optional<Trainer> trainer;
  if (!a.resume.empty()) {
    trainer.emplace(load_checkpoint(a.resume), train_pairs, val_pairs);
  } else {
    trainer.emplace(resolve_train_config(a, cfg), train_pairs, val_pairs);
  }
  const TrainConfig& c = trainer->config();
  ordered_json inputs = {{"data", a.data}};
  if (!a.resume.empty()) inputs["resume"] = a.resume;
  write_run_record(dir, "train", c.seed, to_json(c), inputs);

  trainer->run(-1, [&](const EpochRecord& r) {
    if (!a.quiet) {
      std::fprintf(stderr, "epoch %d/%d loss %.6f (l1 %.6f grad %.6f) lr %.3g", r.epoch + 1, c.epochs, r.loss, r.l1,
                   r.grad, r.lr);
      if (!std::isnan(r.val_psnr)) std::fprintf(stderr, " val_psnr %.3f val_ssim %.4f", r.val_psnr, r.val_ssim);
      std::fputc('\n', stderr);
    }
    if (a.checkpoint_every > 0 && trainer->epochs_done() % a.checkpoint_every == 0) {
      save_checkpoint(dir / "checkpoint.h2lo", trainer->checkpoint());
    }
  });
  save_checkpoint(dir / "checkpoint.h2lo", trainer->checkpoint());
  write_text(dir / "history.csv", trainer->history().to_csv());
  std::cout << "trained " << c.epochs << " epochs; checkpoint " << (dir / "checkpoint.h2lo").string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct SynthesizeArgs {
  Options o;
  std::string checkpoint, input, output, data, subset = "test", weights = "best";
};

int cmd_synthesize(const SynthesizeArgs& a) {
  if (a.weights != "best" && a.weights != "final") throw UsageError("--weights must be best or final");
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const H2LOModel<float> model = model_from_checkpoint(ckpt, a.weights == "best" ? "best." : "model.");
  ordered_json eff = {{"weights", a.weights}, {"model", to_json(ckpt.config.effective_model())}};

  if (!a.input.empty()) {
    if (a.output.empty()) throw UsageError("--input needs --output");
    if (!a.o.out_dir.empty()) throw UsageError("--out-dir is only used with --data");
    const Volume3D hf = load_volume(a.input);
    save_volume(synthesize_full(model, hf), a.output);
    ordered_json j = {{"tool", "h2lo"}, {"version", H2LO_VERSION}, {"command", "synthesize"},
                      {"seed", ckpt.config.seed}, {"config", eff},
                      {"inputs", {{"checkpoint", a.checkpoint}, {"input", a.input}}}};
    write_text(fs::path(a.output).string() + ".run.json", j.dump(2) + "\n");
    std::cout << "wrote " << a.output << "\n";
    return kOk;
  }
  if (a.data.empty() || a.o.out_dir.empty()) throw UsageError("give --input/--output or --data/--out-dir");
  const Dataset ds = read_dataset(a.data);
  const fs::path dir(a.o.out_dir);
  fs::create_directories(dir);
  eff["subset"] = a.subset;
  write_run_record(dir, "synthesize", ckpt.config.seed, eff, {{"checkpoint", a.checkpoint}, {"data", a.data}});
  for (int i : subset_indices(ds, a.subset)) save_volume(synthesize_full(model, subject_at(ds, i).hf), dir / indexed_name("pred", i));
  std::cout << "wrote predictions to " << dir.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct FitBaselineArgs {
  Options o;
  EvalFlags eval;
  std::string data, subset = "train", predict_subset = "test";
};

int cmd_fit_baseline(const FitBaselineArgs& a) {
  const json cfg = a.o.config_file();
  const EvalOptions e = a.eval.resolve(cfg);
  const json bcfg = cfg.value("baseline", json::object());
  BaselineFitOptions opt;
  opt.seed = a.o.seed.value_or(bcfg.value("seed", opt.seed));
  opt.bins = e.bins;
  opt.grad_weight = bcfg.value("grad_weight", opt.grad_weight);
  opt.max_iterations = bcfg.value("max_iterations", opt.max_iterations);

  const Dataset ds = read_dataset(a.data);
  std::vector<ForegroundMask> masks;
  const auto idx = subset_indices(ds, a.subset);
  if (idx.empty()) throw DataError("fit-baseline: subset '" + a.subset + "' is empty");
  for (int i : idx) masks.push_back(foreground_mask(subject_at(ds, i).hf, e.threshold));
  std::vector<BaselinePair> pairs;
  for (std::size_t n = 0; n < idx.size(); ++n) {
    const Subject& s = subject_at(ds, idx[n]);
    pairs.push_back({&s.hf, &s.lf, &masks[n]});
  }
  const BaselineFit fit = fit_baseline(pairs, opt);

  const fs::path dir(a.o.out_dir);
  fs::create_directories(dir);
  write_text(dir / "baseline.json", to_json(fit).dump(2) + "\n");
  ordered_json eff = {{"eval", eval_json(e)},
                      {"baseline", {{"seed", opt.seed}, {"grad_weight", opt.grad_weight},
                                    {"max_iterations", opt.max_iterations}}},
                      {"subset", a.subset},
                      {"predict_subset", a.predict_subset}};
  write_run_record(dir, "fit-baseline", opt.seed, eff, {{"data", a.data}});
  for (int i : subset_indices(ds, a.predict_subset)) {
    Rng rng(derive_seed(opt.seed, 1000 + static_cast<std::uint64_t>(i)));
    save_volume(apply_baseline(subject_at(ds, i).hf, fit.params, &rng), dir / indexed_name("baseline", i));
  }
  std::printf("sigma_smooth %.4f sigma_noise %.4f scale %.4f offset %.4f objective %.6f\n", fit.params.sigma_smooth,
              fit.params.sigma_noise, fit.params.scale, fit.params.offset, fit.objective_value);
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
  Options o;
  EvalFlags eval;
  std::vector<std::string> pred, ref, hf;
  std::string data, subset = "test", pred_dir, pred_prefix = "pred", label = "method";
};

int cmd_evaluate(const EvaluateArgs& a) {
  const json cfg = a.o.config_file();
  const EvalOptions e = a.eval.resolve(cfg);
  std::vector<MetricsReport> rows;

  if (!a.pred.empty()) {
    if (a.ref.size() != a.pred.size() || a.hf.size() != a.pred.size()) {
      throw UsageError("--pred, --ref and --hf need the same number of files");
    }
    for (std::size_t n = 0; n < a.pred.size(); ++n) {
      MetricsReport r = evaluate_pair(load_volume(a.pred[n]), load_volume(a.ref[n]), load_volume(a.hf[n]), e);
      r.pred_id = fs::path(a.pred[n]).filename().string();
      r.ref_id = fs::path(a.ref[n]).filename().string();
      rows.push_back(r);
    }
  } else {
    if (a.data.empty() || a.pred_dir.empty()) throw UsageError("give --pred/--ref/--hf files or --data with --pred-dir");
    const Dataset ds = read_dataset(a.data);
    for (int i : subset_indices(ds, a.subset)) {
      const Subject& s = subject_at(ds, i);
      const std::string name = indexed_name(a.pred_prefix.c_str(), i);
      MetricsReport r = evaluate_pair(load_volume(fs::path(a.pred_dir) / name), s.lf, s.hf, e);
      r.pred_id = name;
      r.ref_id = indexed_name("lf", i);
      rows.push_back(r);
    }
  }
  if (rows.empty()) throw DataError("evaluate: nothing to evaluate");

  const MetricsSummary sum = summarize(rows);
  std::string csv = metrics_csv_header() + "\n";
  for (const auto& r : rows) csv += to_csv_row(r) + "\n";
  csv += to_csv_summary_row(sum, a.label) + "\n";

  ordered_json j;
  j["rows"] = ordered_json::array();
  for (const auto& r : rows) j["rows"].push_back(to_json(r));
  j["mean"] = to_json(sum.mean);
  j["std"] = to_json(sum.stddev);
  j["mean"].erase("pred");
  j["mean"].erase("ref");
  j["std"].erase("pred");
  j["std"].erase("ref");
  j["n"] = sum.n;

  if (a.o.out_dir.empty()) {
    std::cout << csv;
    return kOk;
  }
  const fs::path dir(a.o.out_dir);
  fs::create_directories(dir);
  write_text(dir / "metrics.csv", csv);
  write_text(dir / "metrics.json", j.dump(2) + "\n");
  ordered_json inputs = {{"pred", a.pred}, {"ref", a.ref}, {"hf", a.hf}};
  if (!a.data.empty()) inputs = {{"data", a.data}, {"subset", a.subset}, {"pred_dir", a.pred_dir}};
  write_run_record(dir, "evaluate", 0, {{"eval", eval_json(e)}}, inputs);
  std::cout << csv;
  return kOk;
}

// ---------------------------------------------------------------------------

struct ReportArgs {
  Options o;
  EvalFlags eval;
  std::string data, checkpoint, baseline, subset = "test";
  double diff_gain = 4.0;
};

int cmd_report(const ReportArgs& a) {
  const json cfg = a.o.config_file();
  const EvalOptions e = a.eval.resolve(cfg);
  const Dataset ds = read_dataset(a.data);
  const auto idx = subset_indices(ds, a.subset);
  if (idx.empty()) throw DataError("report: subset '" + a.subset + "' is empty");

  std::optional<H2LOModel<float>> model;
  if (!a.checkpoint.empty()) model = model_from_checkpoint(load_checkpoint(a.checkpoint));
  std::optional<BaselineParams> bparams;
  if (!a.baseline.empty()) bparams = baseline_params_from_json(read_json_file(a.baseline));
  const std::uint64_t seed = a.o.seed.value_or(BaselineFitOptions{}.seed);

  const fs::path dir(a.o.out_dir);
  fs::create_directories(dir / "slices");
  std::vector<MetricsReport> hf_rows, base_rows, ours_rows;
  std::string pair_csv = "method," + metrics_csv_header() + "\n";
  for (int i : idx) {
    const Subject& s = subject_at(ds, i);
    const std::string ref = indexed_name("lf", i);
    char stem[32];
    std::snprintf(stem, sizeof stem, "subject_%03d", i);
    const Slice lf_slice = mid_slice(s.lf);
    write_pgm(dir / "slices" / (std::string(stem) + "_hf.pgm"), mid_slice(s.hf));
    write_pgm(dir / "slices" / (std::string(stem) + "_lf.pgm"), lf_slice);

    const auto add = [&](const std::string& method, const std::string& tag, const Volume3D& pred,
                         std::vector<MetricsReport>& bucket) {
      MetricsReport r = evaluate_pair(pred, s.lf, s.hf, e);
      r.pred_id = std::string(stem) + "_" + tag;
      r.ref_id = ref;
      bucket.push_back(r);
      pair_csv += method + "," + to_csv_row(r) + "\n";
      if (tag != "hf") {
        const Slice ps = mid_slice(pred);
        write_pgm(dir / "slices" / (std::string(stem) + "_" + tag + ".pgm"), ps);
        write_pgm(dir / "slices" / (std::string(stem) + "_diff_" + tag + ".pgm"), abs_difference(ps, lf_slice),
                  a.diff_gain);
      }
    };
    add("HF Image", "hf", s.hf, hf_rows);
    if (bparams) {
      Rng rng(derive_seed(seed, 1000 + static_cast<std::uint64_t>(i)));
      add("Baseline", "baseline", apply_baseline(s.hf, *bparams, &rng), base_rows);
    }
    if (model) add("H2LO", "h2lo", synthesize_full(*model, s.hf), ours_rows);
  }

  std::vector<MethodRow> table{{"HF Image", summarize(hf_rows)}};
  if (bparams) table.push_back({"Baseline", summarize(base_rows)});
  if (model) table.push_back({"H2LO", summarize(ours_rows)});
  write_text(dir / "report.csv", comparison_csv(table));
  write_text(dir / "report.md", comparison_markdown(table));
  write_text(dir / "report_pairs.csv", pair_csv);
  ordered_json inputs = {{"data", a.data}, {"checkpoint", a.checkpoint}, {"baseline", a.baseline}, {"subset", a.subset}};
  write_run_record(dir, "report", seed, {{"eval", eval_json(e)}, {"diff_gain", a.diff_gain}}, inputs);
  std::cout << comparison_markdown(table);
  return kOk;
}

void apply_thread_limit() {
  const char* env = std::getenv("H2LO_THREADS");
  if (!env || !*env) return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw UsageError("H2LO_THREADS must be a positive integer");
  Eigen::setNbThreads(static_cast<int>(n));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"H2LO: learned high-field to low-field MRI degradation"};
  app.set_version_flag("--version", H2LO_VERSION);
  app.require_subcommand(1);

  GenPhantomArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-phantom", "Generate a paired synthetic phantom dataset");
  add_common(gen_cmd, gen.o, true);
  gen_cmd->add_option("--n-subjects", gen.n_subjects, "Number of subjects");
  gen_cmd->add_option("--n-val", gen.n_val, "Validation subjects");
  gen_cmd->add_option("--n-test", gen.n_test, "Test subjects");
  gen_cmd->add_option("--dims", gen.dims, "Volume extent H W D")->expected(3);

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train the operator on a dataset's training split");
  add_common(train_cmd, tr.o, true);
  train_cmd->add_option("--data", tr.data, "Dataset manifest.json")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--epochs", tr.epochs);
  train_cmd->add_option("--lr", tr.lr, "Initial learning rate");
  train_cmd->add_option("--lr-min", tr.lr_min, "Final learning rate");
  train_cmd->add_option("--lambda-grad", tr.lambda_grad, "Gradient loss weight");
  train_cmd->add_option("--n-coords", tr.n_coords, "Sampled voxels per step");
  train_cmd->add_option("--b-subvols", tr.b_subvols, "Sub-volumes per step");
  train_cmd->add_option("--subvol-size", tr.subvol_size, "Sub-volume edge length");
  train_cmd->add_flag("--ablate-grad-loss", tr.ablate_grad, "Train with L1 only");
  train_cmd->add_flag("--ablate-siren", tr.ablate_siren, "Use a ReLU MLP trunk");
  train_cmd->add_option("--resume", tr.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  train_cmd->add_option("--checkpoint-every", tr.checkpoint_every, "Also checkpoint every N epochs");
  train_cmd->add_flag("--quiet", tr.quiet, "No per-epoch progress");

  SynthesizeArgs sy;
  auto* syn_cmd = app.add_subcommand("synthesize", "Predict LF volumes from HF input");
  add_common(syn_cmd, sy.o, false);
  syn_cmd->add_option("--checkpoint", sy.checkpoint)->required()->check(CLI::ExistingFile);
  syn_cmd->add_option("--input", sy.input, "HF volume (.vol or .nii)")->check(CLI::ExistingFile);
  syn_cmd->add_option("--output", sy.output, "Predicted LF volume (.vol)");
  syn_cmd->add_option("--data", sy.data, "Dataset manifest.json")->check(CLI::ExistingFile);
  syn_cmd->add_option("--subset", sy.subset, "train, val, test or all");
  syn_cmd->add_option("--weights", sy.weights, "best or final");

  FitBaselineArgs fb;
  auto* fb_cmd = app.add_subcommand("fit-baseline", "Fit the 4-parameter baseline simulator");
  add_common(fb_cmd, fb.o, true);
  add_eval_flags(fb_cmd, fb.eval);
  fb_cmd->add_option("--data", fb.data, "Dataset manifest.json")->required()->check(CLI::ExistingFile);
  fb_cmd->add_option("--subset", fb.subset, "Subset to fit on");
  fb_cmd->add_option("--predict-subset", fb.predict_subset, "Subset to write baseline predictions for");

  EvaluateArgs ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "Compute the seven metrics for prediction/reference pairs");
  add_common(ev_cmd, ev.o, false);
  add_eval_flags(ev_cmd, ev.eval);
  ev_cmd->add_option("--pred", ev.pred, "Predicted volumes")->check(CLI::ExistingFile);
  ev_cmd->add_option("--ref", ev.ref, "Reference LF volumes")->check(CLI::ExistingFile);
  ev_cmd->add_option("--hf", ev.hf, "HF volumes for the foreground mask")->check(CLI::ExistingFile);
  ev_cmd->add_option("--data", ev.data, "Dataset manifest.json")->check(CLI::ExistingFile);
  ev_cmd->add_option("--subset", ev.subset);
  ev_cmd->add_option("--pred-dir", ev.pred_dir, "Directory of <prefix>_NNN.vol predictions");
  ev_cmd->add_option("--pred-prefix", ev.pred_prefix);
  ev_cmd->add_option("--label", ev.label, "Label of the summary row");

  ReportArgs rp;
  auto* rp_cmd = app.add_subcommand("report", "Comparison table and mid-slice PGM dumps");
  add_common(rp_cmd, rp.o, true);
  add_eval_flags(rp_cmd, rp.eval);
  rp_cmd->add_option("--data", rp.data, "Dataset manifest.json")->required()->check(CLI::ExistingFile);
  rp_cmd->add_option("--checkpoint", rp.checkpoint)->check(CLI::ExistingFile);
  rp_cmd->add_option("--baseline", rp.baseline, "baseline.json from fit-baseline")->check(CLI::ExistingFile);
  rp_cmd->add_option("--subset", rp.subset);
  rp_cmd->add_option("--diff-gain", rp.diff_gain, "Gain applied to difference slices");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    apply_thread_limit();
    if (*gen_cmd) return cmd_gen_phantom(gen);
    if (*train_cmd) return cmd_train(tr);
    if (*syn_cmd) return cmd_synthesize(sy);
    if (*fb_cmd) return cmd_fit_baseline(fb);
    if (*ev_cmd) return cmd_evaluate(ev);
    if (*rp_cmd) return cmd_report(rp);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "h2lo: usage error: %s\n", e.what());
    return kUsage;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "h2lo: numerical failure: %s\n", e.what());
    return kNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "h2lo: error: %s\n", e.what());
    return kData;
  }
  return kUsage;
}
