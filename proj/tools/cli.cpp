#include "cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "triseg/checkpoint.hpp"
#include "triseg/data.hpp"
#include "triseg/metrics.hpp"
#include "triseg/parallel.hpp"
#include "triseg/pnm.hpp"
#include "triseg/train.hpp"

namespace fs = std::filesystem;

namespace triseg::cli {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RoiChoice {
  std::string mode = "auto";
  fs::path manifest;
};

RoiChoice parse_roi(const std::vector<std::string>& tokens) {
  RoiChoice r;
  if (tokens.empty() || (tokens.size() == 1 && tokens[0] == "auto")) return r;
  if (tokens.size() == 2 && tokens[0] == "manifest") {
    r.mode = "manifest";
    r.manifest = tokens[1];
    return r;
  }
  throw UsageError("--roi expects 'auto' or 'manifest FILE'");
}

RoiOrigin parse_origin(const std::string& s) {
  const auto comma = s.find(',');
  try {
    if (comma == std::string::npos) throw std::invalid_argument(s);
    std::size_t used = 0;
    const long long y = std::stoll(s.substr(0, comma), &used);
    const long long x = std::stoll(s.substr(comma + 1), &used);
    if (y < 0 || x < 0) throw std::invalid_argument(s);
    return RoiOrigin{static_cast<std::size_t>(y), static_cast<std::size_t>(x)};
  } catch (const std::logic_error&) {
    throw UsageError("--roi-origin expects Y,X with non-negative integers, got '" + s + "'");
  }
}

std::vector<Sample> load_samples(const fs::path& data, const RoiChoice& roi, std::size_t window) {
  const auto raw = load_dataset(data);
  if (roi.mode == "manifest") {
    const auto manifest = read_roi_manifest(roi.manifest);
    return preprocess(raw, &manifest, window);
  }
  return preprocess(raw, nullptr, window);
}

void log_line(std::ostream& err, const std::string& msg) { err << "[triseg] " << msg << '\n'; }

// --- synth -------------------------------------------------------------------

struct SynthArgs {
  fs::path out;
  std::size_t n = 0;
  std::size_t size = 512;
  std::uint64_t seed = 1;
  fs::path spec_file;
  std::optional<double> contrast, noise, axis_min, axis_max;
};

int run_synth(const SynthArgs& a, std::ostream& out, std::ostream& err) {
  PhantomSpec spec;
  if (!a.spec_file.empty()) {
    std::ifstream in(a.spec_file);
    if (!in) throw DataError("cannot open phantom spec " + a.spec_file.string());
    std::stringstream ss;
    ss << in.rdbuf();
    spec = PhantomSpec::parse(ss.str());
  }
  spec.image_size = a.size;
  spec.seed = a.seed;
  if (a.contrast) spec.contrast = *a.contrast;
  if (a.noise) spec.noise = *a.noise;
  if (a.axis_min) spec.axis_min = *a.axis_min;
  if (a.axis_max) spec.axis_max = *a.axis_max;
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  log_line(err, "synth: n=" + std::to_string(a.n) + " " + spec.str());
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec || !fs::is_directory(a.out)) throw DataError("cannot create output directory " + a.out.string());
  for (std::size_t i = 0; i < a.n; ++i) write_pair(a.out, render_phantom(spec, i).pair);
  out << "wrote " << a.n << " image/mask pairs to " << a.out.string() << '\n';
  return kOk;
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
  fs::path data, out, log;
  std::size_t epochs = 50;
  std::uint64_t seed = 1;
  std::string loss = "bce";
  std::string optimizer = "adam";
  std::optional<double> lr;
  std::size_t batch = 8;
  std::size_t patience = 10;
  double split_ratio = 0.8;
  std::size_t window = kInputSize;
  std::vector<std::string> roi;
};

int run_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const RoiChoice roi = parse_roi(a.roi);
  TrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch;
  cfg.seed = a.seed;
  cfg.early_stop_patience = a.patience;
  cfg.checkpoint_path = a.out;
  cfg.threads = worker_count();
  try {
    cfg.loss = parse_loss(a.loss);
    cfg.optimizer.kind = parse_optimizer(a.optimizer);
    cfg.optimizer.learning_rate = a.lr.value_or(cfg.optimizer.kind == OptimizerKind::adam ? 1e-3 : 1e-2);
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  nlohmann::ordered_json ctx;
  ctx["split_ratio"] = a.split_ratio;
  ctx["roi"] = roi.mode;
  ctx["window"] = a.window;

  log_line(err, "train config: " + cfg.to_json() + " context: " + ctx.dump() +
                    " threads=" + std::to_string(cfg.threads));
  auto samples = load_samples(a.data, roi, a.window);
  if (samples.size() < 2) throw DataError("dataset " + a.data.string() + " has fewer than 2 samples");
  const auto ds = split(std::move(samples), a.split_ratio, a.seed);
  log_line(err, "split: " + std::to_string(ds.train.size()) + " train / " + std::to_string(ds.test.size()) +
                    " test (seed " + std::to_string(a.seed) + ")");

  const fs::path log_path = a.log.empty() ? fs::path(a.out.string() + ".csv") : a.log;
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw DataError("cannot write epoch log " + log_path.string());
  log << kEpochCsvHeader << '\n';

  const auto result = train(TriChannelNet<float>::build(a.seed), ds, cfg,
                            [&](const EpochReport& r) {
                              log << epoch_csv_line(r) << '\n' << std::flush;
                              log_line(err, "epoch " + epoch_csv_line(r));
                            },
                            TrainContext{ctx.dump()});

  const auto records = evaluate(result.net, ds.test, cfg.threads);
  const auto s = summarize(records);
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "final test: n=%zu best_epoch=%zu mean_iou=%.4f median_iou=%.4f median_tpr=%.4f median_ppv=%.4f\n",
                s.n, result.best_epoch, s.iou.mean, s.iou.median, s.tpr.median, s.ppv.median);
  out << buf;
  return kOk;
}

// --- eval --------------------------------------------------------------------

struct EvalArgs {
  fs::path data, ckpt, out_csv, overlays;
  bool all = false;
  std::vector<std::string> roi;
};

int run_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const auto ck = load_checkpoint(a.ckpt);
  double ratio = 0.8;
  std::size_t window = kInputSize;
  std::string ckpt_roi = "auto";
  try {
    const auto echo = nlohmann::json::parse(ck.meta.config_json);
    if (echo.contains("context")) {
      const auto& c = echo["context"];
      ratio = c.value("split_ratio", ratio);
      window = c.value("window", window);
      ckpt_roi = c.value("roi", ckpt_roi);
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointErrc::corrupt, std::string("config echo: ") + e.what());
  }
  RoiChoice roi = parse_roi(a.roi);
  if (a.roi.empty() && ckpt_roi == "manifest")
    throw UsageError("checkpoint was trained with an ROI manifest; pass --roi manifest FILE");
  log_line(err, "eval: checkpoint epoch " + std::to_string(ck.meta.epoch) + ", seed " +
                    std::to_string(ck.meta.seed) + ", split " + std::to_string(ratio) +
                    (a.all ? ", all samples" : ", test partition"));

  auto samples = load_samples(a.data, roi, window);
  std::vector<Sample> subset;
  if (a.all) {
    subset = std::move(samples);
  } else {
    if (samples.size() < 2) throw DataError("dataset " + a.data.string() + " has fewer than 2 samples");
    subset = split(std::move(samples), ratio, ck.meta.seed).test;
  }
  const auto records = evaluate(ck.net, subset, worker_count());

  std::ofstream csv(a.out_csv, std::ios::trunc);
  if (!csv) throw DataError("cannot write " + a.out_csv.string());
  write_records_csv(csv, records);

  if (!a.overlays.empty()) {
    std::error_code ec;
    fs::create_directories(a.overlays, ec);
    if (ec) throw DataError("cannot create overlay directory " + a.overlays.string());
    for (const auto& s : subset)
      write_ppm(a.overlays / (s.id + ".ppm"), render_overlay(s.image, predict_mask(ck.net, s.image), s.mask));
  }
  if (!records.empty()) out << summary_to_json(summarize(records)) << '\n';
  return kOk;
}

// --- predict -----------------------------------------------------------------

struct PredictArgs {
  fs::path image, ckpt, out;
  bool prob = false;
  std::string roi_origin;
};

int run_predict(const PredictArgs& a, std::ostream& out, std::ostream& err) {
  const auto ck = load_checkpoint(a.ckpt);
  const Tensor full = gray_to_tensor(read_pgm(a.image));
  if (full.height() < kInputSize || full.width() < kInputSize)
    throw DataError("image " + a.image.string() + " is " + full.shape().str() + ", need at least 100x100");
  RoiOrigin origin{(full.height() - kInputSize) / 2, (full.width() - kInputSize) / 2};
  if (!a.roi_origin.empty()) origin = parse_origin(a.roi_origin);
  log_line(err, "predict: roi origin (" + std::to_string(origin.y) + "," + std::to_string(origin.x) + ")" +
                    (a.prob ? ", probability map" : ", binary mask"));
  const Tensor roi = crop_window(full, origin, kInputSize);
  const Tensor prob = predict_probability(ck.net, roi);
  if (a.prob) {
    write_pgm(a.out, tensor_to_gray(prob, 65535));
  } else {
    write_pgm(a.out, tensor_to_gray(binarize(prob, static_cast<float>(kPredictionThreshold))));
  }
  out << "wrote " << a.out.string() << '\n';
  return kOk;
}

// --- report ------------------------------------------------------------------

struct ReportArgs {
  fs::path csv, out;
};

int run_report(const ReportArgs& a, std::ostream& out, std::ostream& err) {
  std::ifstream in(a.csv);
  if (!in) throw DataError("cannot open " + a.csv.string());
  const auto records = read_records_csv(in);
  if (records.empty()) throw DataError("metrics CSV " + a.csv.string() + " has no rows");
  const auto s = summarize(records);
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw DataError("cannot create report directory " + a.out.string());
  {
    std::ofstream j(a.out / "summary.json", std::ios::trunc);
    if (!j) throw DataError("cannot write " + (a.out / "summary.json").string());
    j << summary_to_json(s) << '\n';
  }
  {
    std::ofstream t(a.out / "boxplot.txt", std::ios::trunc);
    if (!t) throw DataError("cannot write " + (a.out / "boxplot.txt").string());
    t << summary_table(s);
  }
  log_line(err, "report: " + std::to_string(records.size()) + " records");
  out << summary_table(s);
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"triseg: three-branch CNN tumour segmentation"};
  app.name("triseg");
  app.require_subcommand(1);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Write a synthetic phantom dataset");
  synth->add_option("--out", synth_args.out, "Output dataset directory")->required();
  synth->add_option("--n", synth_args.n, "Number of image/mask pairs")->required()->check(CLI::Range(1, 1000000));
  synth->add_option("--size", synth_args.size, "Image side length in pixels")->check(CLI::Range(100, 8192));
  synth->add_option("--seed", synth_args.seed, "Generator seed");
  synth->add_option("--spec", synth_args.spec_file, "Phantom spec file (key=value lines)");
  synth->add_option("--contrast", synth_args.contrast, "Tumour intensity step");
  synth->add_option("--noise", synth_args.noise, "Uniform noise amplitude");
  synth->add_option("--axis-min", synth_args.axis_min, "Minimum ellipse semi-axis");
  synth->add_option("--axis-max", synth_args.axis_max, "Maximum ellipse semi-axis");

  TrainArgs train_args;
  auto* tr = app.add_subcommand("train", "Train on a dataset and write the best checkpoint");
  tr->add_option("--data", train_args.data, "Dataset directory")->required();
  tr->add_option("--out", train_args.out, "Checkpoint path")->required();
  tr->add_option("--epochs", train_args.epochs, "Epoch limit")->check(CLI::Range(1, 1000000));
  tr->add_option("--seed", train_args.seed, "Seed for split, shuffling and initialisation");
  tr->add_option("--loss", train_args.loss, "bce or dice")->check(CLI::IsMember({"bce", "dice"}));
  tr->add_option("--optimizer", train_args.optimizer, "adam or sgd")->check(CLI::IsMember({"adam", "sgd"}));
  tr->add_option("--lr", train_args.lr, "Learning rate")->check(CLI::PositiveNumber);
  tr->add_option("--batch", train_args.batch, "Mini-batch size")->check(CLI::Range(1, 100000));
  tr->add_option("--patience", train_args.patience, "Early-stop patience in epochs (0 disables)");
  tr->add_option("--split", train_args.split_ratio, "Training fraction")->check(CLI::Range(0.01, 0.99));
  tr->add_option("--window", train_args.window, "ROI window side before resampling to 100")
      ->check(CLI::Range(100, 8192));
  tr->add_option("--roi", train_args.roi, "auto | manifest FILE")->expected(1, 2);
  tr->add_option("--log", train_args.log, "Epoch CSV path (default: <out>.csv)");

  EvalArgs eval_args;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint and write per-image metrics");
  ev->add_option("--data", eval_args.data, "Dataset directory")->required();
  ev->add_option("--ckpt", eval_args.ckpt, "Checkpoint")->required();
  ev->add_option("--out-csv", eval_args.out_csv, "Metrics CSV output")->required();
  ev->add_option("--overlays", eval_args.overlays, "Directory for TP/FP/FN overlay PPMs");
  ev->add_flag("--all", eval_args.all, "Evaluate every sample instead of the test partition");
  ev->add_option("--roi", eval_args.roi, "auto | manifest FILE")->expected(1, 2);

  PredictArgs predict_args;
  auto* pr = app.add_subcommand("predict", "Segment one image");
  pr->add_option("--image", predict_args.image, "Input PGM")->required();
  pr->add_option("--ckpt", predict_args.ckpt, "Checkpoint")->required();
  pr->add_option("--out", predict_args.out, "Output PGM")->required();
  pr->add_flag("--prob", predict_args.prob, "Write a 16-bit probability map instead of a binary mask");
  pr->add_option("--roi-origin", predict_args.roi_origin, "Window origin Y,X (default: centre crop)");

  ReportArgs report_args;
  auto* rp = app.add_subcommand("report", "Summarise a metrics CSV for box plots");
  rp->add_option("--csv", report_args.csv, "Metrics CSV")->required();
  rp->add_option("--out", report_args.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (synth->parsed()) return run_synth(synth_args, out, err);
    if (tr->parsed()) return run_train(train_args, out, err);
    if (ev->parsed()) return run_eval(eval_args, out, err);
    if (pr->parsed()) return run_predict(predict_args, out, err);
    if (rp->parsed()) return run_report(report_args, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const ShapeError& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}

}  // namespace triseg::cli
