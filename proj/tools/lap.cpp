// lap: cost analysis, training, inference, evaluation and gradient checks.

#include "lap/checkpoint.hpp"
#include "lap/cost_model.hpp"
#include "lap/dataset.hpp"
#include "lap/gradcheck.hpp"
#include "lap/image_io.hpp"
#include "lap/metrics.hpp"
#include "lap/train.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <regex>
#include <string>

namespace fs = std::filesystem;
using namespace lap;

namespace {

enum class LogLevel { Info, Debug };

LogLevel log_level() {
  const char* v = std::getenv("LAP_LOG");
  if (!v || std::string(v).empty() || std::string(v) == "info") return LogLevel::Info;
  if (std::string(v) == "debug") return LogLevel::Debug;
  throw ConfigError("LAP_LOG must be 'info' or 'debug', got '" + std::string(v) + "'");
}

void print_resolved(const std::string& title, const std::string& text) {
  std::cerr << "# resolved " << title << "\n" << text;
}

std::string indent_kv(const std::string& key, const std::string& value) { return key + " = " + value + "\n"; }

//------------------------------------------------------------------------------

struct AnalyzeArgs {
  std::string config;
  std::string baseline;
  std::string input_size;
  std::string out = "cost_report.txt";
  bool elementwise = false;
};

std::int64_t enumerate_trainable(const NetworkConfig& cfg) {
  LapNet net(cfg, 0);
  return net.num_trainable();
}

int run_analyze(const AnalyzeArgs& a) {
  cost::CountOptions opts;
  opts.include_elementwise = a.elementwise;
  if (!a.input_size.empty()) {
    std::smatch m;
    if (!std::regex_match(a.input_size, m, std::regex(R"((\d+)x(\d+))"))) {
      throw ConfigError("--input-size must look like HxW, got '" + a.input_size + "'");
    }
    opts.input_h = std::stoll(m[1]);
    opts.input_w = std::stoll(m[2]);
  }
  auto resolve = [&](const std::string& spec) {
    NetworkConfig c = resolve_network_config(spec);
    if (opts.input_h) {
      c.input_h = *opts.input_h;
      c.input_w = *opts.input_w;
      c.validate();
    }
    return c;
  };
  const NetworkConfig ours = resolve(a.config);
  print_resolved("config (" + a.config + ")", ours.to_text());
  std::string report;
  cost::CostReport ours_report = cost::count_network(ours, opts);
  ours_report.label = a.config;
  report += cost::format_table(ours_report);
  report += "enumerated_trainable_params " + std::to_string(enumerate_trainable(ours)) + "\n";
  report += cost::format_records(ours_report);
  if (!a.baseline.empty()) {
    const NetworkConfig base = resolve(a.baseline);
    print_resolved("baseline (" + a.baseline + ")", base.to_text());
    cost::CostReport base_report = cost::count_network(base, opts);
    base_report.label = a.baseline;
    report += "\n" + cost::format_table(base_report);
    report += "enumerated_trainable_params " + std::to_string(enumerate_trainable(base)) + "\n";
    report += cost::format_records(base_report);
    report += "\n" + cost::format_comparison(ours_report, base_report);
    report += "\n" + cost::format_published_check();
  }
  std::cout << report;
  std::ofstream out(a.out);
  out << report;
  if (!out) throw std::runtime_error("cannot write " + a.out);
  std::cerr << "wrote " << a.out << "\n";
  return 0;
}

//------------------------------------------------------------------------------

struct TrainArgs {
  std::string net;
  std::string train;
  std::string data;
  std::string out;
  std::optional<std::uint64_t> seed;
};

ToyDatasetSpec dataset_for(const std::string& path, const NetworkConfig& net) {
  if (!path.empty()) return ToyDatasetSpec::load(path);
  ToyDatasetSpec d;
  d.image_size = net.input_h;
  d.num_keypoints = net.num_keypoints;
  d.validate();
  return d;
}

int run_train(const TrainArgs& a) {
  const NetworkConfig net = resolve_network_config(a.net);
  TrainConfig tc = TrainConfig::load(a.train);
  if (a.seed) tc.seed = *a.seed;
  const ToyDatasetSpec data = dataset_for(a.data, net);
  print_resolved("network", net.to_text());
  print_resolved("training", tc.to_text());
  print_resolved("dataset", data.to_text());
  std::cerr << epoch_log_header() << " seconds\n";
  const TrainResult r = train(net, tc, data, a.out, &std::cerr);
  std::cout << "best_epoch " << r.best_epoch << "\n"
            << format_epoch_line(r.epochs.back()) << "\n";
  std::cerr << "wrote " << a.out << "/{epochs.log,timing.log,best.lapw,last.lapw}\n";
  return 0;
}

//------------------------------------------------------------------------------

struct InferArgs {
  std::string ckpt;
  std::string image;
  std::string out;
};

int run_infer(const InferArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  print_resolved("network (from checkpoint)", ckpt.config.to_text());
  std::unique_ptr<LapNet> net = instantiate(ckpt);
  const Tensord image = read_pnm(a.image);
  const NetworkConfig& cfg = net->config();
  const Shape expected{1, cfg.input_channels, cfg.input_h, cfg.input_w};
  if (image.shape() != expected) {
    throw ShapeError("image " + a.image + " has shape " + image.shape().str() + ", checkpoint expects " +
                     expected.str() + " (N x C x H x W)");
  }
  const KeypointSchema schema = schema_for(cfg.num_keypoints);
  const std::vector<Tensord> outs = net->forward(image, Mode::Eval);
  KeypointSet kps = heatmap_to_image(decode(outs.back()).front(), kOutputStride);
  kps.id = fs::path(a.image).stem().string();

  fs::create_directories(a.out);
  {
    std::ofstream f(fs::path(a.out) / "keypoints.txt");
    write_keypoints(f, schema, {kps}, true);
    if (!f) throw std::runtime_error("cannot write keypoints.txt");
  }
  for (int j = 0; j < schema.size(); ++j) {
    Tensord plane(Shape{1, 1, cfg.heatmap_h(), cfg.heatmap_w()});
    std::copy_n(outs.back().plane(0, j), plane.size(), plane.data());
    write_bytes((fs::path(a.out) / ("heatmap_" + schema.joints[static_cast<std::size_t>(j)] + ".pgm")).string(),
                encode_pgm(plane));
  }
  RgbCanvas canvas = cfg.input_channels == 3 ? RgbCanvas(cfg.input_h, cfg.input_w) : RgbCanvas::from_gray(image);
  if (cfg.input_channels == 3) {
    for (std::int64_t y = 0; y < cfg.input_h; ++y)
      for (std::int64_t x = 0; x < cfg.input_w; ++x)
        canvas.set(x, y,
                   {static_cast<std::uint8_t>(std::lround(std::clamp(image(0, 0, y, x), 0.0, 1.0) * 255)),
                    static_cast<std::uint8_t>(std::lround(std::clamp(image(0, 1, y, x), 0.0, 1.0) * 255)),
                    static_cast<std::uint8_t>(std::lround(std::clamp(image(0, 2, y, x), 0.0, 1.0) * 255))});
  }
  for (const auto& [p, q] : schema.limbs) {
    const Keypoint& u = kps.joints[static_cast<std::size_t>(p)];
    const Keypoint& v = kps.joints[static_cast<std::size_t>(q)];
    canvas.line(u.x, u.y, v.x, v.y, {0, 200, 255});
  }
  for (const Keypoint& k : kps.joints) canvas.disc(k.x, k.y, 1.5, {255, 40, 40});
  write_bytes((fs::path(a.out) / "overlay.ppm").string(), canvas.encode());

  write_keypoints(std::cout, schema, {kps}, true);
  std::cerr << "wrote keypoints.txt, " << schema.size() << " heatmaps and overlay.ppm to " << a.out << "\n";
  return 0;
}

//------------------------------------------------------------------------------

struct EvalArgs {
  std::string ckpt;
  std::string dataset;
  std::string split = "validation";
  std::string export_dir;
};

int run_eval(const EvalArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  std::unique_ptr<LapNet> net = instantiate(ckpt);
  const NetworkConfig& cfg = net->config();
  const ToyDatasetSpec data = dataset_for(a.dataset, cfg);
  print_resolved("network (from checkpoint)", cfg.to_text());
  print_resolved("dataset", data.to_text() + indent_kv("split", a.split));
  if (data.image_size != cfg.input_h || data.image_size != cfg.input_w || data.num_keypoints != cfg.num_keypoints) {
    throw ConfigError("dataset (" + std::to_string(data.image_size) + " px, " + std::to_string(data.num_keypoints) +
                      " keypoints) does not match the checkpoint network");
  }
  if (!a.export_dir.empty()) {
    export_toy_dataset(data, a.export_dir);
    std::cerr << "exported " << data.num_samples << " samples to " << a.export_dir << "\n";
  }
  const SplitIndices split = split_dataset(data.num_samples);
  std::vector<std::int64_t> indices;
  if (a.split == "validation") {
    indices = split.validation;
  } else if (a.split == "train") {
    indices = split.train;
  } else {
    for (std::int64_t i = 0; i < data.num_samples; ++i) indices.push_back(i);
  }
  std::vector<KeypointSet> pred, gt;
  for (std::size_t start = 0; start < indices.size(); start += 16) {
    std::vector<Sample> chunk;
    std::vector<std::int64_t> local;
    for (std::size_t i = start; i < std::min(indices.size(), start + 16); ++i) {
      chunk.push_back(generate_toy_sample(data, indices[i]));
      local.push_back(static_cast<std::int64_t>(i - start));
      gt.push_back(chunk.back().keypoints);
    }
    for (auto& k : predict_keypoints(*net, make_batch(chunk, local).images)) pred.push_back(std::move(k));
  }
  const KeypointSchema schema = toy_schema(data.num_keypoints);
  const EvalResult r = evaluate(pred, gt, schema, static_cast<double>(cfg.input_w), static_cast<double>(cfg.input_h));
  std::cout << format_eval_report(r, schema);
  return 0;
}

//------------------------------------------------------------------------------

int run_gradcheck(const std::string& module, std::uint64_t seed) {
  print_resolved("gradcheck", indent_kv("module", module.empty() ? "all" : module) + indent_kv("seed", std::to_string(seed)));
  const auto results = run_gradchecks(module, seed);
  std::cout << format_gradcheck_table(results);
  int failed = 0;
  for (const auto& r : results) failed += r.passed() ? 0 : 1;
  std::cout << (failed ? "FAILED " + std::to_string(failed) + " of " : "all passed: ") << results.size()
            << " checks\n";
  return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lightweight attention pose network tools"};
  app.require_subcommand(1);

  AnalyzeArgs analyze;
  auto* a = app.add_subcommand("analyze", "Count parameters and FLOPs; compare against a baseline");
  a->add_option("--config", analyze.config, "Config file, or preset name (lap2, hourglass2-standard, toy)")->required();
  a->add_option("--baseline", analyze.baseline, "Baseline config file or preset");
  a->add_option("--input-size", analyze.input_size, "Override input size, HxW");
  a->add_option("--out", analyze.out, "Report file")->capture_default_str();
  a->add_flag("--elementwise", analyze.elementwise, "Also count elementwise ops (activations, sums, gates)");

  TrainArgs tr;
  std::uint64_t seed_value = 0;
  auto* t = app.add_subcommand("train", "Train on the synthetic toy dataset");
  t->add_option("--net", tr.net, "Network config file or preset")->required();
  t->add_option("--train", tr.train, "Training config file")->required()->check(CLI::ExistingFile);
  t->add_option("--out", tr.out, "Output directory")->required();
  auto* seed_opt = t->add_option("--seed", seed_value, "Seed (overrides the training config)");
  t->add_option("--data", tr.data, "Toy dataset spec file (default: built-in spec sized to the network)")
      ->check(CLI::ExistingFile);

  InferArgs inf;
  auto* i = app.add_subcommand("infer", "Predict keypoints for one netpbm image");
  i->add_option("--ckpt", inf.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  i->add_option("--image", inf.image, "Input image (PGM/PPM)")->required()->check(CLI::ExistingFile);
  i->add_option("--out", inf.out, "Output directory")->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on the toy dataset");
  e->add_option("--ckpt", ev.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  e->add_option("--dataset", ev.dataset, "Toy dataset spec file")->required()->check(CLI::ExistingFile);
  e->add_option("--split", ev.split, "validation, train or all")
      ->check(CLI::IsMember({"validation", "train", "all"}))
      ->capture_default_str();
  e->add_option("--export", ev.export_dir, "Also write the dataset as PGM images plus keypoints.txt into this directory");

  std::string gc_module;
  std::uint64_t gc_seed = 1;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  g->add_option("--module", gc_module, "Group (layers, cbam, blocks, hourglass, loss, network) or check-name prefix");
  g->add_option("--seed", gc_seed, "Seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err);
  }

  try {
    if (log_level() == LogLevel::Debug) std::cerr << "# subcommand " << app.get_subcommands().front()->get_name() << "\n";
    if (*a) return run_analyze(analyze);
    if (*t) {
      if (*seed_opt) tr.seed = seed_value;
      return run_train(tr);
    }
    if (*i) return run_infer(inf);
    if (*e) return run_eval(ev);
    if (*g) return run_gradcheck(gc_module, gc_seed);
  } catch (const std::exception& ex) {
    std::cerr << "lap: error: " << ex.what() << "\n";
    return 1;
  }
  return 1;
}
