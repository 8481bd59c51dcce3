#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "hgtnet/dataset.hpp"
#include "hgtnet/errors.hpp"
#include "hgtnet/io.hpp"
#include "hgtnet/metrics.hpp"
#include "hgtnet/op_gradcheck.hpp"
#include "hgtnet/verify.hpp"

namespace fs = std::filesystem;

namespace hgt::cli {

void RunConfig::apply(const config::Entry& e) {
  if (config::set_model_field(model, e) || config::set_train_field(train, e) || config::set_augment_field(augment, e))
    return;
  if (e.key == "data.root") data_root = e.value;
  else if (e.key == "data.synth") synth = config::parse_bool(e);
  else if (e.key == "data.per_class") per_class = config::parse_u64(e);
  else if (e.key == "out_dir") out_dir = e.value;
  else throw ConfigError("line " + std::to_string(e.line) + ": unknown key '" + e.key + "'");
}

void RunConfig::apply_text(const std::string& text, const std::string& source) {
  for (const config::Entry& e : config::parse(text, source)) apply(e);
}

void RunConfig::finalize() {
  augment.target_h = augment.target_w = model.image_size;
  model.validate();
  train.validate();
  augment.validate();
  if (per_class < 1) throw ConfigError("data.per_class must be at least 1");
}

std::string RunConfig::to_text() const {
  std::string out = config::model_to_text(model) + config::train_to_text(train) + config::augment_to_text(augment);
  out += "data.root = " + data_root + "\n";
  out += std::string("data.synth = ") + (synth ? "true" : "false") + "\n";
  out += "data.per_class = " + std::to_string(per_class) + "\n";
  out += "out_dir = " + out_dir + "\n";
  return out;
}

namespace {

struct Flags {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::string data_root;
  bool synth = false;
  std::size_t per_class = 0;
  std::size_t image_size = 0;
  std::size_t epochs = 0;
  std::size_t encoder_layers = 0;
  double lr = 0.0;
  std::size_t batch_size = 0;
  std::size_t patience = 0;
  std::size_t eval_threads = 0;
  bool print_config = false;
};

struct Options {
  CLI::Option* seed = nullptr;
  CLI::Option* out = nullptr;
  CLI::Option* data = nullptr;
  CLI::Option* per_class = nullptr;
  CLI::Option* image_size = nullptr;
  CLI::Option* epochs = nullptr;
  CLI::Option* encoder_layers = nullptr;
  CLI::Option* lr = nullptr;
  CLI::Option* batch_size = nullptr;
  CLI::Option* patience = nullptr;
  CLI::Option* eval_threads = nullptr;
};

void add_shared(CLI::App* app, Flags& f, Options& o) {
  app->add_option("--config", f.config_path, "Config file (key = value)")->check(CLI::ExistingFile);
  o.seed = app->add_option("--seed", f.seed, "Random seed");
  o.out = app->add_option("--out", f.out_dir, "Output directory");
  o.data = app->add_option("--data", f.data_root, "Dataset root (<root>/<class>/*.ppm)");
}

void add_model_flags(CLI::App* app, Flags& f, Options& o) {
  app->add_flag("--synth", f.synth, "Use the synthetic texture dataset");
  o.per_class = app->add_option("--per-class", f.per_class, "Synthetic images per class");
  o.image_size = app->add_option("--image-size", f.image_size, "Input size in pixels");
  o.encoder_layers = app->add_option("--encoder-layers", f.encoder_layers, "Transformer encoder layers");
  o.eval_threads = app->add_option("--eval-threads", f.eval_threads, "Worker threads for evaluation");
  app->add_flag("--print-config", f.print_config, "Print the merged configuration and exit");
}

void add_train_flags(CLI::App* app, Flags& f, Options& o) {
  o.epochs = app->add_option("--epochs", f.epochs, "Maximum epochs");
  o.lr = app->add_option("--lr", f.lr, "Adam learning rate");
  o.batch_size = app->add_option("--batch-size", f.batch_size, "Mini-batch size");
  o.patience = app->add_option("--patience", f.patience, "Early-stopping patience in epochs");
}

bool given(const CLI::Option* o) { return o != nullptr && o->count() > 0; }

// Defaults, then the config file, then explicit flags.
RunConfig merge(const Flags& f, const Options& o) {
  RunConfig rc;
  if (!f.config_path.empty()) rc.apply_text(read_file(f.config_path), f.config_path);
  if (given(o.seed)) rc.train.seed = f.seed;
  if (given(o.out)) rc.out_dir = f.out_dir;
  if (given(o.data)) rc.data_root = f.data_root;
  if (f.synth) rc.synth = true;
  if (given(o.per_class)) rc.per_class = f.per_class;
  if (given(o.image_size)) rc.model.image_size = f.image_size;
  if (given(o.epochs)) rc.train.max_epochs = f.epochs;
  if (given(o.encoder_layers)) rc.model.num_encoder_layers = f.encoder_layers;
  if (given(o.lr)) rc.train.learning_rate = f.lr;
  if (given(o.batch_size)) rc.train.batch_size = f.batch_size;
  if (given(o.patience)) rc.train.patience = f.patience;
  if (given(o.eval_threads)) rc.train.eval_threads = f.eval_threads;
  rc.finalize();
  return rc;
}

data::Dataset load_data(const RunConfig& rc) {
  if (rc.synth) {
    return data::synth_dataset(rc.per_class, rc.model.image_size, RngStream(rc.train.seed, stream_key("synth")));
  }
  if (rc.data_root.empty()) throw ConfigError("no dataset: pass --data DIR or --synth");
  return data::load_dataset(rc.data_root);
}

std::string class_label(const std::vector<std::string>& names, std::size_t k) {
  return k < names.size() ? names[k] : "class_" + std::to_string(k);
}

// Writes predictions, confusion, ROC and AUC dumps plus the rendered report;
// returns the report text.
std::string write_eval_artifacts(const fs::path& dir, const std::vector<metrics::PredictionRecord>& records,
                                 std::size_t num_classes, const std::vector<std::string>& names,
                                 bool with_predictions) {
  const metrics::MetricsReport report = metrics::build_report(records, num_classes);
  std::vector<std::string> labels;
  for (std::size_t k = 0; k < num_classes; ++k) labels.push_back(class_label(names, k));
  const std::string text = metrics::render_report(report, labels);
  if (with_predictions) write_file_atomic(dir / "predictions.csv", metrics::predictions_to_csv(records));
  write_file_atomic(dir / "confusion.csv", metrics::confusion_to_csv(report.confusion));
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (!report.roc[k].empty())
      write_file_atomic(dir / ("roc_class_" + std::to_string(k) + ".csv"), metrics::roc_to_csv(report.roc[k]));
  }
  write_file_atomic(dir / "auc.csv", metrics::auc_to_csv(report));
  write_file_atomic(dir / "report.txt", text);
  return text;
}

int cmd_train(const Flags& f, const Options& o, std::ostream& out) {
  RunConfig rc = merge(f, o);
  if (f.print_config) {
    out << rc.to_text();
    return kOk;
  }
  data::Dataset ds = load_data(rc);
  if (rc.model.num_classes != ds.num_classes()) {
    rc.model.num_classes = ds.num_classes();
    rc.finalize();
  }
  data::split_stratified(ds, rc.train.test_fraction, rc.train.seed);
  const auto train_set = ds.split(data::Split::kTrain);
  const auto test_set = ds.split(data::Split::kTest);
  if (train_set.empty() || test_set.empty()) throw DatasetError("split left an empty train or test set");
  const data::DatasetStats stats = data::compute_stats(train_set, rc.model.image_size, rc.model.image_size);

  const fs::path dir = rc.out_dir;
  fs::create_directories(dir);
  write_file_atomic(dir / "run.cfg", rc.to_text());
  train::FitState state = train::start_fit(rc.model, rc.train, stats, ds.class_names);
  train::FitOptions opts;
  opts.out_dir = dir;
  opts.on_epoch = [&](const train::EpochRecord& r) {
    char line[160];
    std::snprintf(line, sizeof line, "epoch %3zu  train_loss %.4f  train_acc %.4f  test_loss %.4f  test_acc %.4f\n",
                  r.epoch, r.train_loss, r.train_acc, r.test_loss, r.test_acc);
    out << line << std::flush;
  };
  train::fit(state, rc.train, train_set, test_set, rc.augment, opts);
  if (state.stopped_early) out << "early stop after epoch " << state.history.size() << "\n";

  const train::Checkpoint best = train::load_checkpoint(dir / "best.ckpt");
  model::HGTNet net(best.model_config, best.train_config.seed);
  train::restore_parameters(net, best);
  const train::EvalResult ev = train::evaluate(net, test_set, best.stats, rc.train.batch_size, rc.train.eval_threads);
  out << "best epoch " << best.epoch << "\n"
      << write_eval_artifacts(dir, ev.records, best.model_config.num_classes, best.class_names, true);
  return kOk;
}

int cmd_eval(const Flags& f, const Options& o, const std::string& ckpt_path, const std::string& split,
             std::ostream& out) {
  RunConfig rc = merge(f, o);
  if (f.print_config) {
    out << rc.to_text();
    return kOk;
  }
  const fs::path path = ckpt_path.empty() ? fs::path(rc.out_dir) / "best.ckpt" : fs::path(ckpt_path);
  const train::Checkpoint ckpt = train::load_checkpoint(path);
  rc.model = ckpt.model_config;
  rc.train.seed = ckpt.train_config.seed;
  rc.train.test_fraction = ckpt.train_config.test_fraction;
  rc.finalize();
  data::Dataset ds = load_data(rc);
  if (ds.class_names != ckpt.class_names)
    throw DatasetError("dataset classes do not match the checkpoint's classes");
  data::split_stratified(ds, rc.train.test_fraction, rc.train.seed);
  std::vector<data::ImageSample> samples;
  if (split == "test") samples = ds.split(data::Split::kTest);
  else if (split == "train") samples = ds.split(data::Split::kTrain);
  else samples = ds.samples;
  if (samples.empty()) throw DatasetError("no samples in the '" + split + "' split");

  model::HGTNet net(ckpt.model_config, ckpt.train_config.seed);
  train::restore_parameters(net, ckpt);
  const train::EvalResult ev = train::evaluate(net, samples, ckpt.stats, rc.train.batch_size, rc.train.eval_threads);
  const fs::path dir = rc.out_dir;
  fs::create_directories(dir);
  out << write_eval_artifacts(dir, ev.records, ckpt.model_config.num_classes, ckpt.class_names, true);
  return kOk;
}

int cmd_metrics(const std::string& predictions, std::size_t classes, const std::string& names_csv,
                const std::string& out_dir, std::ostream& out) {
  const auto records = metrics::predictions_from_csv(read_file(predictions));
  if (records.empty()) throw FormatError("predictions: no rows");
  const std::size_t k = classes > 0 ? classes : records.front().scores.size();
  std::vector<std::string> names;
  if (!names_csv.empty()) {
    std::stringstream ss(names_csv);
    for (std::string item; std::getline(ss, item, ',');) names.push_back(item);
    if (names.size() != k) throw ConfigError("--names lists " + std::to_string(names.size()) + " classes, expected " +
                                             std::to_string(k));
  }
  const fs::path dir = out_dir.empty() ? fs::path("out") : fs::path(out_dir);
  fs::create_directories(dir);
  out << write_eval_artifacts(dir, records, k, names, false);
  return kOk;
}

int cmd_gradcheck(std::uint64_t seed, int instances, const std::string& fault, std::ostream& out) {
  if (instances < 1) throw ConfigError("--instances must be at least 1");
  bool ok = true;
  char line[200];
  OpSuiteOptions ops;
  ops.seed = seed;
  ops.instances = instances;
  if (fault != "model") ops.fault_op = fault;
  if (!fault.empty() && fault != "model") {
    const auto names = op_gradcheck_names();
    if (std::find(names.begin(), names.end(), fault) == names.end())
      throw ConfigError("--inject-fault: unknown op '" + fault + "'");
  }
  double worst = 0.0;
  for (const OpCheckResult& r : run_op_gradchecks(ops)) {
    std::snprintf(line, sizeof line, "%-20s max_rel %.3e  small_abs %.3e  %s\n", r.name.c_str(),
                  r.worst.max_rel_error, r.worst.max_small_abs_error, r.passed ? "ok" : "FAILED");
    out << line;
    if (!r.passed) {
      ok = false;
      out << "gradient check failed: " << r.name << "\n";
    }
    worst = std::max(worst, r.worst.max_rel_error);
  }
  verify::ModelCheckOptions mo;
  mo.seed = seed;
  mo.instances = instances;
  mo.inject_fault = fault == "model";
  const verify::ModelCheckResult m = verify::run_model_gradcheck(mo);
  std::snprintf(line, sizeof line, "%-20s max_rel %.3e  small_abs %.3e  %s\n", "model", m.worst.max_rel_error,
                m.worst.max_small_abs_error, m.passed ? "ok" : "FAILED");
  out << line;
  if (!m.passed) {
    ok = false;
    out << "gradient check failed: model\n";
  }
  std::snprintf(line, sizeof line, "worst op relative error %.3e over %d instances\n", worst, instances);
  out << line;
  return ok ? kOk : kCheckFailed;
}

int cmd_synth(const Flags& f, const Options& o, std::ostream& out) {
  RunConfig rc = merge(f, o);
  const data::Dataset ds =
      data::synth_dataset(rc.per_class, rc.model.image_size, RngStream(rc.train.seed, stream_key("synth")));
  data::write_dataset(rc.out_dir, ds);
  out << "wrote " << ds.samples.size() << " images in " << ds.num_classes() << " classes to " << rc.out_dir << "\n";
  return kOk;
}

int cmd_augment(const Flags& f, const Options& o, const std::string& input, bool no_random, std::ostream& out) {
  RunConfig rc = merge(f, o);
  const data::Image img = data::read_ppm(input);
  const data::AugmentPolicy policy = no_random ? rc.augment.without_randomness() : rc.augment;
  const RngStream rng = data::sample_stream(rc.train.seed, fs::path(input).filename().string(), 0).child("augment");
  const data::Image after = data::augment(img, policy, rng);
  const fs::path dir = rc.out_dir;
  data::write_ppm(dir / "before.ppm", img);
  data::write_ppm(dir / "after.ppm", after);
  out << "wrote " << (dir / "before.ppm").string() << " and " << (dir / "after.ppm").string() << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hybrid graph-transformer classifier: training, evaluation and verification"};
  app.require_subcommand(1);
  Flags f;

  Options train_opts;
  CLI::App* train = app.add_subcommand("train", "Train and write checkpoints, history, predictions and report");
  add_shared(train, f, train_opts);
  add_model_flags(train, f, train_opts);
  add_train_flags(train, f, train_opts);

  Options eval_opts;
  std::string ckpt_path, split = "test";
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_shared(eval, f, eval_opts);
  add_model_flags(eval, f, eval_opts);
  eval->add_option("--checkpoint", ckpt_path, "Checkpoint file (default <out>/best.ckpt)");
  eval->add_option("--split", split, "test, train or all")->check(CLI::IsMember({"test", "train", "all"}));

  std::string predictions, names;
  std::size_t classes = 0;
  CLI::App* metrics_cmd = app.add_subcommand("metrics", "Report metrics for a prediction CSV");
  metrics_cmd->add_option("predictions", predictions, "Prediction CSV")->required();
  metrics_cmd->add_option("--classes", classes, "Number of classes (default: score columns)");
  metrics_cmd->add_option("--names", names, "Comma-separated class names");
  std::string metrics_out;
  metrics_cmd->add_option("--out", metrics_out, "Output directory for ROC dumps");

  std::uint64_t gc_seed = 1;
  int gc_instances = 20;
  std::string fault;
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every op and the model");
  gradcheck->add_option("--seed", gc_seed, "Random seed");
  gradcheck->add_option("--instances", gc_instances, "Random instances per check");
  gradcheck->add_option("--inject-fault", fault, "Corrupt one op's backward (or 'model')");

  Options synth_opts;
  CLI::App* synth = app.add_subcommand("synth", "Write a synthetic PPM dataset tree");
  add_shared(synth, f, synth_opts);
  synth_opts.per_class = synth->add_option("--per-class", f.per_class, "Images per class");
  synth_opts.image_size = synth->add_option("--image-size", f.image_size, "Image size in pixels");

  Options aug_opts;
  std::string input;
  bool no_random = false;
  CLI::App* augment = app.add_subcommand("augment", "Apply the training augmentation to one image");
  add_shared(augment, f, aug_opts);
  augment->add_option("input", input, "Input PPM")->required();
  aug_opts.image_size = augment->add_option("--image-size", f.image_size, "Output size in pixels");
  augment->add_flag("--no-random", no_random, "Disable every random transform");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    for (CLI::App* sub : app.get_subcommands()) out << sub->help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, e2;
    const int code = app.exit(e, o, e2);
    out << o.str();
    err << e2.str();
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*train) return cmd_train(f, train_opts, out);
    if (*eval) return cmd_eval(f, eval_opts, ckpt_path, split, out);
    if (*metrics_cmd) return cmd_metrics(predictions, classes, names, metrics_out, out);
    if (*gradcheck) return cmd_gradcheck(gc_seed, gc_instances, fault, out);
    if (*synth) return cmd_synth(f, synth_opts, out);
    if (*augment) return cmd_augment(f, aug_opts, input, no_random, out);
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return kCheckpointError;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kIoError;
  } catch (const DatasetError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const FormatError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const DegenerateInputError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const ContractError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const Error& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const fs::filesystem_error& e) {
    err << "i/o error: " << e.what() << "\n";
    return kIoError;
  }
  return kConfigError;
}

}  // namespace hgt::cli
