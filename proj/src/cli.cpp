#include "statekit/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "CLI11.hpp"

#include "statekit/eval.hpp"
#include "statekit/fixture.hpp"
#include "statekit/parallel.hpp"

namespace statekit::cli {

using nlohmann::json;
namespace fs = std::filesystem;

int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::dimension: return kConfigError;
    case ErrorKind::data:
    case ErrorKind::format: return kDataError;
    case ErrorKind::numeric: return kNumericAbort;
    case ErrorKind::io: return kIoError;
  }
  return kConfigError;
}

std::size_t default_fc_width(Preset preset) noexcept {
  switch (preset) {
    case Preset::modified_vgg19: return 1024;
    case Preset::original_vgg19: return 4096;
    case Preset::tiny_test: return 32;
  }
  return 1024;
}

ArchitectureSpec RunConfig::architecture() const {
  auto spec = make_architecture(preset, num_classes, fc_width, dropout_rate);
  set_frozen(spec, freeze);
  return spec;
}

namespace {

void reject_unknown(const json& obj, std::initializer_list<std::string_view> allowed,
                    const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : obj.items()) {
    if (std::ranges::find(allowed, key) == allowed.end()) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename V>
void read_opt(const json& obj, const char* key, V& target, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    target = obj.at(key).get<V>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for '" + std::string(key) + "' in " + where);
  }
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  return p.is_relative() ? base / p : p;
}

FreezeSelection parse_freeze(const json& v) {
  if (v.is_array()) {
    std::vector<std::string> names;
    for (const auto& n : v) {
      if (!n.is_string()) throw ConfigError("freeze list must hold layer names");
      names.push_back(n.get<std::string>());
    }
    return FreezeSelection::by_name(std::move(names));
  }
  if (!v.is_string()) throw ConfigError("freeze must be a selector string or a list of names");
  const auto s = v.get<std::string>();
  if (s == "none") return FreezeSelection::none();
  if (s == "all") return FreezeSelection::all();
  if (s == "conv_trunk") return FreezeSelection::conv_trunk();
  throw ConfigError("unknown freeze selector '" + s + "'");
}

json freeze_to_json(const FreezeSelection& f) {
  switch (f.kind) {
    case FreezeSelection::Kind::none: return "none";
    case FreezeSelection::Kind::all: return "all";
    case FreezeSelection::Kind::conv_trunk: return "conv_trunk";
    case FreezeSelection::Kind::by_name: return f.names;
  }
  return "none";
}

std::string read_text(const fs::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(std::string("cannot open ") + what + " '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory '" + dir.string() + "'");
}

std::string grouped(std::uint64_t n) {
  std::string digits = std::to_string(n);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return out;
}

// Runs `body`, turning library errors into a one-line diagnostic and exit code.
template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    err << "statekit: " << to_string(e.kind()) << ": " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::bad_alloc&) {
    err << "statekit: io error: out of memory\n";
    return kIoError;
  } catch (const std::exception& e) {
    err << "statekit: io error: " << e.what() << '\n';
    return kIoError;
  }
}

void print_layer_table(std::ostream& out, const ArchitectureSpec& spec) {
  const auto shapes = validate_architecture(spec);
  out << std::left << std::setw(22) << "layer" << std::setw(14) << "kind" << std::setw(18)
      << "output" << std::right << std::setw(14) << "params" << "  frozen\n";
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    out << std::left << std::setw(22) << l.name << std::setw(14) << to_string(l.kind)
        << std::setw(18) << to_string(shapes[i]) << std::right << std::setw(14)
        << layer_parameter_count(l) << "  " << (l.has_parameters() ? (l.frozen ? "yes" : "no") : "-")
        << '\n';
  }
  const auto total = count_parameters(spec);
  out << "weight layers: " << weight_layer_count(spec) << '\n';
  out << "total parameters: " << total << " (" << grouped(total) << ")\n";
}

}  // namespace

RunConfig parse_run_config(const json& doc, const fs::path& base_dir) {
  reject_unknown(doc,
                 {"preset", "num_classes", "fc_width", "dropout_rate", "freeze", "optimizer", "train",
                  "preprocess", "manifest", "checkpoints", "output_dir", "seed", "deterministic"},
                 "run config");
  RunConfig cfg;
  std::string preset = std::string(to_string(cfg.preset));
  read_opt(doc, "preset", preset, "run config");
  cfg.preset = parse_preset(preset);
  cfg.fc_width = default_fc_width(cfg.preset);
  read_opt(doc, "num_classes", cfg.num_classes, "run config");
  read_opt(doc, "fc_width", cfg.fc_width, "run config");
  read_opt(doc, "dropout_rate", cfg.dropout_rate, "run config");
  if (doc.contains("freeze")) cfg.freeze = parse_freeze(doc.at("freeze"));

  if (doc.contains("optimizer")) {
    const auto& o = doc.at("optimizer");
    reject_unknown(o, {"kind", "learning_rate", "momentum", "beta1", "beta2", "rho", "epsilon"},
                   "optimizer");
    std::string kind = std::string(to_string(cfg.train.optimizer.kind));
    read_opt(o, "kind", kind, "optimizer");
    cfg.train.optimizer.kind = parse_optimizer_kind(kind);
    read_opt(o, "learning_rate", cfg.train.optimizer.learning_rate, "optimizer");
    read_opt(o, "momentum", cfg.train.optimizer.momentum, "optimizer");
    read_opt(o, "beta1", cfg.train.optimizer.beta1, "optimizer");
    read_opt(o, "beta2", cfg.train.optimizer.beta2, "optimizer");
    read_opt(o, "rho", cfg.train.optimizer.rho, "optimizer");
    read_opt(o, "epsilon", cfg.train.optimizer.epsilon, "optimizer");
  }
  if (doc.contains("train")) {
    const auto& t = doc.at("train");
    reject_unknown(t, {"max_epochs", "batch_size", "early_stop_patience", "early_stop_min_delta"},
                   "train");
    read_opt(t, "max_epochs", cfg.train.max_epochs, "train");
    read_opt(t, "batch_size", cfg.train.batch_size, "train");
    read_opt(t, "early_stop_patience", cfg.train.early_stop_patience, "train");
    read_opt(t, "early_stop_min_delta", cfg.train.early_stop_min_delta, "train");
  }
  read_opt(doc, "seed", cfg.train.seed, "run config");
  read_opt(doc, "deterministic", cfg.train.deterministic, "run config");

  const auto arch = make_architecture(cfg.preset, cfg.num_classes, cfg.fc_width, cfg.dropout_rate);
  cfg.preprocess.target_size = arch.input_shape[1];
  if (doc.contains("preprocess")) {
    const auto& p = doc.at("preprocess");
    reject_unknown(p, {"target_size", "channel_means", "channel_stds"}, "preprocess");
    read_opt(p, "target_size", cfg.preprocess.target_size, "preprocess");
    read_opt(p, "channel_means", cfg.preprocess.channel_means, "preprocess");
    read_opt(p, "channel_stds", cfg.preprocess.channel_stds, "preprocess");
  }
  if (cfg.preprocess.target_size != arch.input_shape[1]) {
    throw ConfigError("preprocess.target_size " + std::to_string(cfg.preprocess.target_size) +
                      " does not match preset input " + std::to_string(arch.input_shape[1]));
  }

  std::string manifest;
  read_opt(doc, "manifest", manifest, "run config");
  if (!manifest.empty()) cfg.manifest = resolve(base_dir, manifest);

  std::string output_dir = "out";
  read_opt(doc, "output_dir", output_dir, "run config");
  cfg.output_dir = resolve(base_dir, output_dir);
  if (doc.contains("checkpoints")) {
    const auto& c = doc.at("checkpoints");
    reject_unknown(c, {"init", "init_mode", "best"}, "checkpoints");
    std::string init, mode = "trunk_only", best;
    read_opt(c, "init", init, "checkpoints");
    read_opt(c, "init_mode", mode, "checkpoints");
    read_opt(c, "best", best, "checkpoints");
    if (!init.empty()) cfg.init_checkpoint = resolve(base_dir, init);
    if (mode == "strict") {
      cfg.init_mode = LoadMode::strict;
    } else if (mode == "trunk_only") {
      cfg.init_mode = LoadMode::trunk_only;
    } else {
      throw ConfigError("unknown checkpoints.init_mode '" + mode + "'");
    }
    if (!best.empty()) cfg.best_checkpoint = resolve(base_dir, best);
  }

  validate(cfg.train);
  validate(cfg.preprocess);
  cfg.architecture();  // checks the freeze selector against the layer names
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  const std::string text = read_text(path, "config");
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(doc, path.parent_path());
}

json to_json(const RunConfig& cfg) {
  const auto& o = cfg.train.optimizer;
  json doc = {
      {"preset", to_string(cfg.preset)},
      {"num_classes", cfg.num_classes},
      {"fc_width", cfg.fc_width},
      {"dropout_rate", cfg.dropout_rate},
      {"freeze", freeze_to_json(cfg.freeze)},
      {"optimizer",
       {{"kind", to_string(o.kind)},
        {"learning_rate", o.learning_rate},
        {"momentum", o.momentum},
        {"beta1", o.beta1},
        {"beta2", o.beta2},
        {"rho", o.rho},
        {"epsilon", o.epsilon}}},
      {"train",
       {{"max_epochs", cfg.train.max_epochs},
        {"batch_size", cfg.train.batch_size},
        {"early_stop_patience", cfg.train.early_stop_patience},
        {"early_stop_min_delta", cfg.train.early_stop_min_delta}}},
      {"preprocess",
       {{"target_size", cfg.preprocess.target_size},
        {"channel_means", cfg.preprocess.channel_means},
        {"channel_stds", cfg.preprocess.channel_stds}}},
      {"manifest", cfg.manifest.generic_string()},
      {"output_dir", cfg.output_dir.generic_string()},
      {"seed", cfg.train.seed},
      {"deterministic", cfg.train.deterministic}};
  json checkpoints = json::object();
  if (cfg.init_checkpoint) {
    checkpoints["init"] = cfg.init_checkpoint->generic_string();
    checkpoints["init_mode"] = cfg.init_mode == LoadMode::strict ? "strict" : "trunk_only";
  }
  if (!cfg.best_checkpoint.empty()) checkpoints["best"] = cfg.best_checkpoint.generic_string();
  if (!checkpoints.empty()) doc["checkpoints"] = checkpoints;
  return doc;
}

int cmd_train(const fs::path& config_path, const TrainOverrides& overrides, std::ostream& out,
              std::ostream& err) {
  return guarded(err, [&] {
    RunConfig cfg = load_run_config(config_path);
    if (overrides.seed) cfg.train.seed = *overrides.seed;
    if (overrides.output_dir) cfg.output_dir = *overrides.output_dir;
    if (cfg.manifest.empty()) throw ConfigError("run config has no manifest path");
    const fs::path best_path =
        cfg.best_checkpoint.empty() ? cfg.output_dir / "best.skpt" : cfg.best_checkpoint;

    const Manifest manifest = load_manifest_file(cfg.manifest);
    const fs::path root = cfg.manifest.parent_path();
    const auto train_entries = manifest.split(Split::train);
    const auto val_entries = manifest.split(Split::validation);
    if (train_entries.empty() || val_entries.empty()) {
      throw DataError("manifest '" + cfg.manifest.string() + "' needs train and validation entries");
    }

    Network<float> net(cfg.architecture(), cfg.train.seed);
    if (cfg.init_checkpoint) {
      const auto report = load_checkpoint(net, *cfg.init_checkpoint, cfg.init_mode);
      out << "initialised " << report.loaded.size() << " tensors from "
          << cfg.init_checkpoint->string() << '\n';
    }
    const auto train_data = load_dataset<float>(train_entries, root, cfg.preprocess);
    const auto val_data = load_dataset<float>(val_entries, root, cfg.preprocess);

    ensure_dir(cfg.output_dir);
    write_text(cfg.output_dir / "architecture.json", to_json(net.spec()).dump(2) + "\n");
    std::ofstream metrics(cfg.output_dir / "metrics.csv", std::ios::binary | std::ios::trunc);
    if (!metrics) throw IoError("cannot write '" + (cfg.output_dir / "metrics.csv").string() + "'");
    metrics << kMetricsHeader << '\n' << std::flush;

    TrainHooks<float> hooks;
    hooks.on_epoch = [&](const EpochRecord& r) {
      metrics << format_metrics_row(r) << '\n' << std::flush;
      out << "epoch " << r.epoch << "  train_loss " << r.train_loss << "  train_acc "
          << r.train_accuracy << "  val_loss " << r.val_loss << "  val_acc " << r.val_accuracy
          << '\n';
    };
    hooks.on_new_best = [&](const Network<float>& best, const EpochRecord&) {
      save_checkpoint(best, best_path);
    };
    auto result = train(net, train_data, val_data, cfg.train, hooks);
    metrics.close();

    parallel::ScopedMode mode(cfg.train.deterministic);
    const auto eval = evaluate_epoch(result.best, val_data, cfg.train.batch_size);
    const auto cm = confusion_matrix(val_data.labels, eval.predictions,
                                     class_names_for(cfg.num_classes));
    emit_plots(result.records, cm, cfg.output_dir);
    out << "stopped: " << to_string(result.stop_reason) << " after " << result.records.size()
        << " epochs; best epoch " << result.best_epoch << " (val_loss " << eval.loss
        << ", val_acc " << eval.accuracy << ")\n";
    out << "best checkpoint: " << best_path.string() << '\n';
    return static_cast<int>(kOk);
  });
}

int cmd_make_fixture(const fs::path& dir, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    ensure_dir(dir);
    const Manifest m = make_fixture(dir);
    RunConfig cfg;
    cfg.preset = Preset::tiny_test;
    cfg.fc_width = default_fc_width(cfg.preset);
    cfg.preprocess.target_size = 32;
    cfg.train.optimizer.kind = OptimizerKind::sgd;
    cfg.train.optimizer.learning_rate = 0.01;
    cfg.train.max_epochs = 50;
    cfg.train.batch_size = 16;
    cfg.train.seed = 7;
    cfg.manifest = "manifest.csv";
    cfg.output_dir = "out";
    write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");
    out << "wrote " << m.entries.size() << " images (" << m.split_total(Split::train) << " train, "
        << m.split_total(Split::validation) << " validation, " << m.split_total(Split::test)
        << " test) and config.json to " << dir.string() << '\n';
    return static_cast<int>(kOk);
  });
}

int cmd_evaluate(const fs::path& config_path, const fs::path& checkpoint, const std::string& split,
                 std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig cfg = load_run_config(config_path);
    const Split which = parse_split(split);
    Network<float> net(cfg.architecture(), cfg.train.seed);
    load_checkpoint(net, checkpoint, LoadMode::strict);
    if (cfg.manifest.empty()) throw ConfigError("run config has no manifest path");
    const Manifest manifest = load_manifest_file(cfg.manifest);
    const auto entries = manifest.split(which);
    if (entries.empty()) throw DataError("split '" + split + "' has no entries");
    const auto data = load_dataset<float>(entries, cfg.manifest.parent_path(), cfg.preprocess);

    parallel::ScopedMode mode(cfg.train.deterministic);
    const auto eval = evaluate_epoch(net, data, cfg.train.batch_size);
    const auto cm = confusion_matrix(data.labels, eval.predictions, class_names_for(cfg.num_classes));
    const auto acc = accuracies(cm);
    const fs::path dir = cfg.output_dir / ("eval_" + split);
    emit_confusion_artifacts(cm, dir, "Confusion Matrix (" + split + ")");

    out << "split: " << split << "  samples: " << cm.total() << '\n';
    out << "overall accuracy: " << std::fixed << std::setprecision(4) << acc.overall << '\n';
    out << "mean loss: " << eval.loss << '\n';
    for (std::size_t i = 0; i < cm.num_classes(); ++i) {
      out << "  " << std::left << std::setw(14) << cm.class_names()[i] << std::right << " n="
          << std::setw(5) << cm.row_sum(i) << "  acc=";
      if (acc.per_class[i]) {
        out << *acc.per_class[i] << '\n';
      } else {
        out << "n/a\n";
      }
    }
    const auto report = misclassification_report(cm, data.paths, data.labels, eval.predictions, 3);
    const std::size_t shown = std::min<std::size_t>(report.size(), 5);
    if (shown) out << "top confusions:\n";
    for (std::size_t i = 0; i < shown; ++i) {
      const auto& c = report[i];
      out << "  " << cm.class_names()[c.truth] << " -> " << cm.class_names()[c.predicted] << "  "
          << c.count << " (" << c.rate * 100.0 << "%)";
      for (const auto& p : c.example_paths) out << "  " << p;
      out << '\n';
    }
    out << "wrote " << (dir / "confusion_matrix.csv").string() << '\n';
    out.unsetf(std::ios::floatfield);
    return static_cast<int>(kOk);
  });
}

int cmd_predict(const fs::path& checkpoint, const fs::path& image,
                const std::optional<fs::path>& config_path, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto entries = read_checkpoint_file(checkpoint);
    Network<float> net(infer_architecture(entries));
    load_checkpoint(net, std::span<const CheckpointEntry>(entries), LoadMode::strict);
    PreprocessConfig pre;
    if (config_path) pre = load_run_config(*config_path).preprocess;
    pre.target_size = net.spec().input_shape[1];

    const Image8 img = read_image(image);
    const Tensor<float> x = preprocess<float>(img, pre).reshape(
        {1, 3, pre.target_size, pre.target_size});
    const auto logits = net.forward(x, layers::Mode::infer);
    const std::vector<std::size_t> dummy{0};
    const auto probs = layers::softmax_xent(logits, dummy).probs;

    const auto names = class_names_for(net.spec().num_classes);
    std::vector<std::size_t> order(names.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::ranges::stable_sort(order, [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
    out << "prediction: " << names[order.front()] << '\n';
    for (auto i : order) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", static_cast<double>(probs[i]));
      out << names[i] << '\t' << buf << '\n';
    }
    return static_cast<int>(kOk);
  });
}

int cmd_inspect(const fs::path& target, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const std::string head = read_text(target, "file").substr(0, 4);
    if (head == "SKPT") {
      const auto entries = read_checkpoint_file(target);
      const auto spec = infer_architecture(entries);
      std::uint64_t stored = 0;
      for (const auto& e : entries) stored += element_count(e.dims);
      out << "checkpoint: " << target.string() << " (" << entries.size() << " entries, "
          << stored << " values)\n";
      out << "architecture: " << spec.name << '\n';
      print_layer_table(out, spec);
    } else {
      const RunConfig cfg = load_run_config(target);
      const auto spec = cfg.architecture();
      out << "config: " << target.string() << '\n';
      out << "architecture: " << spec.name << " (num_classes " << spec.num_classes
          << ", fc_width " << spec.fc_width << ")\n";
      print_layer_table(out, spec);
    }
    return static_cast<int>(kOk);
  });
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  try {
    parallel::configure_from_env();
  } catch (const Error& e) {
    err << "statekit: " << to_string(e.kind()) << ": " << e.what() << '\n';
    return exit_code_for(e.kind());
  }

  CLI::App app{"statekit: CNN training and evaluation toolkit for cooking-state classification"};
  app.require_subcommand(1);

  std::string train_config, fixture_dir, train_output;
  std::optional<std::uint64_t> train_seed;
  auto* train_cmd = app.add_subcommand("train", "Train a network from a JSON run config");
  train_cmd->add_option("config", train_config, "Run config (JSON)");
  train_cmd->add_option("--make-fixture", fixture_dir,
                        "Write the synthetic fixture and a matching config.json to DIR, then exit");
  train_cmd->add_option("--seed", train_seed, "Override the config seed");
  train_cmd->add_option("--output-dir", train_output, "Override the config output directory");

  std::string eval_config, eval_checkpoint, eval_split = "validation";
  auto* eval_cmd = app.add_subcommand("evaluate", "Confusion matrix and accuracies for a split");
  eval_cmd->add_option("config", eval_config, "Run config (JSON)")->required();
  eval_cmd->add_option("checkpoint", eval_checkpoint, "Checkpoint to evaluate")->required();
  eval_cmd->add_option("split", eval_split, "train | validation | test");

  std::string pred_checkpoint, pred_image, pred_config;
  auto* pred_cmd = app.add_subcommand("predict", "Classify one PPM/RAWIMG1 image");
  pred_cmd->add_option("checkpoint", pred_checkpoint, "Checkpoint")->required();
  pred_cmd->add_option("image", pred_image, "Image file")->required();
  pred_cmd->add_option("--config", pred_config, "Run config supplying normalization constants");

  std::string inspect_target;
  auto* inspect_cmd = app.add_subcommand("inspect", "Layer table and parameter count");
  inspect_cmd->add_option("target", inspect_target, "Run config or checkpoint")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "statekit: config error: " << e.what() << '\n';
    return kConfigError;
  }

  if (*train_cmd) {
    if (!fixture_dir.empty()) return cmd_make_fixture(fixture_dir, out, err);
    if (train_config.empty()) {
      err << "statekit: config error: train needs a config path or --make-fixture DIR\n";
      return kConfigError;
    }
    TrainOverrides overrides;
    overrides.seed = train_seed;
    if (!train_output.empty()) overrides.output_dir = fs::path(train_output);
    return cmd_train(train_config, overrides, out, err);
  }
  if (*eval_cmd) return cmd_evaluate(eval_config, eval_checkpoint, eval_split, out, err);
  if (*pred_cmd) {
    std::optional<fs::path> cfg;
    if (!pred_config.empty()) cfg = fs::path(pred_config);
    return cmd_predict(pred_checkpoint, pred_image, cfg, out, err);
  }
  return cmd_inspect(inspect_target, out, err);
}

}  // namespace statekit::cli
