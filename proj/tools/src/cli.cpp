#include "mdcl/cli.hpp"

#include <filesystem>
#include <optional>

#include "CLI11.hpp"
#include "mdcl/config.hpp"
#include "mdcl/dataset.hpp"
#include "mdcl/errors.hpp"
#include "mdcl/metrics.hpp"
#include "mdcl/trainer.hpp"

namespace fs = std::filesystem;

namespace mdcl::cli {

namespace {

constexpr const char* kToolVersion = MDCL_VERSION;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

KeyValues manifest_header(const std::string& command, int argc, const char* const* argv) {
  KeyValues m;
  m["manifest.tool"] = "mdcl";
  m["manifest.tool_version"] = kToolVersion;
  m["manifest.command"] = command;
  std::string line;
  for (int i = 0; i < argc; ++i) {
    if (i) line += ' ';
    line += argv[i];
  }
  m["manifest.argv"] = line;
  return m;
}

void merge(KeyValues& into, const KeyValues& from, const std::string& prefix = "") {
  for (const auto& [k, v] : from) into[prefix + k] = v;
}

fs::path absolute_path(const fs::path& p) { return fs::weakly_canonical(fs::absolute(p)); }

std::pair<std::string, std::string> split_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("expected key=value, got '" + text + "'");
  return {text.substr(0, eq), text.substr(eq + 1)};
}

// --- make-toy ---------------------------------------------------------------

struct MakeToyArgs {
  std::string out;
  int n = 8;
  int size = 64;
  std::uint64_t seed = 0;
  std::string split = "train";
};

void add_make_toy(CLI::App& app, MakeToyArgs& a) {
  auto* sub = app.add_subcommand("make-toy", "Synthesize a toy HE/IHC dataset with a known recoloring oracle");
  sub->add_option("--out", a.out, "Dataset root to create")->required();
  sub->add_option("--n", a.n, "Number of image pairs")->capture_default_str();
  sub->add_option("--size", a.size, "Side length in pixels")->capture_default_str();
  sub->add_option("--seed", a.seed, "Random seed")->capture_default_str();
  sub->add_option("--split", a.split, "Split directory to fill")
      ->check(CLI::IsMember({"train", "test"}))
      ->capture_default_str();
}

int cmd_make_toy(const MakeToyArgs& a, KeyValues manifest, std::ostream& out) {
  Rng rng(a.seed);
  const Split split = a.split == "test" ? Split::kTest : Split::kTrain;
  make_toy_dataset(a.out, a.n, a.size, rng, split);
  manifest["seed"] = std::to_string(a.seed);
  manifest["toy.n"] = std::to_string(a.n);
  manifest["toy.size"] = std::to_string(a.size);
  manifest["toy.split"] = a.split;
  manifest["path.dataset"] = absolute_path(a.out).string();
  write_key_values(fs::path(a.out) / "manifest.txt", manifest);
  out << "wrote " << a.n << " pairs to " << (fs::path(a.out) / a.split).string() << '\n';
  return kExitOk;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string out;
  std::string config;
  std::string loss_variant;
  bool no_gt_branch = false;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<long> max_iterations;
  std::string resume;
  std::vector<std::string> sets;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* sub = app.add_subcommand("train", "Train generator, discriminator and projector");
  sub->add_option("--data", a.data, "Dataset root containing train/HE and train/IHC")->required();
  sub->add_option("--out", a.out, "Run directory for checkpoints, trace and manifest")->required();
  sub->add_option("--config", a.config, "Flat key = value config file");
  sub->add_option("--loss-variant", a.loss_variant, "Contrastive objective")->check(CLI::IsMember({"mix", "nce"}));
  sub->add_flag("--no-gt-branch", a.no_gt_branch, "Drop the ground-truth contrastive branch");
  sub->add_option("--epochs", a.epochs, "Number of epochs");
  sub->add_option("--seed", a.seed, "Seed for every random stream");
  sub->add_option("--max-iterations", a.max_iterations, "Stop after this many steps (0 = all epochs)");
  sub->add_option("--resume", a.resume, "Continue from a checkpoint using its stored config");
  sub->add_option("--set", a.sets, "Override any config key (key=value), repeatable");
}

bool has_overrides(const TrainArgs& a) {
  return !a.config.empty() || !a.loss_variant.empty() || a.no_gt_branch || a.epochs || a.seed || a.max_iterations ||
         !a.sets.empty();
}

TrainConfig resolve_train_config(const TrainArgs& a) {
  KeyValues kv;
  if (!a.config.empty()) kv = read_key_values(a.config);
  if (!a.loss_variant.empty()) kv["loss_variant"] = a.loss_variant;
  if (a.no_gt_branch) kv["use_gt_branch"] = "false";
  if (a.epochs) kv["epochs"] = std::to_string(*a.epochs);
  if (a.seed) kv["seed"] = std::to_string(*a.seed);
  if (a.max_iterations) kv["max_iterations"] = std::to_string(*a.max_iterations);
  for (const auto& s : a.sets) {
    const auto [k, v] = split_assignment(s);
    kv[k] = v;
  }
  TrainConfig cfg = train_config_from(kv);
  cfg.validate();
  return cfg;
}

void fill_train_manifest(KeyValues& m, const TrainConfig& cfg) {
  merge(m, to_key_values(cfg));
  merge(m, to_key_values(MetricConfig{}));
  m["he_objective"] = he_objective_name(cfg);
  m["gt_objective"] = gt_objective_name(cfg);
}

int cmd_train(const TrainArgs& a, KeyValues manifest, std::ostream& out) {
  std::optional<fs::path> resume;
  TrainConfig cfg;
  if (!a.resume.empty()) {
    if (has_overrides(a)) throw UsageError("--resume uses the checkpoint's stored config; drop the other overrides");
    resume = a.resume;
    cfg = load_checkpoint(*resume).config;
    manifest["path.resume"] = absolute_path(*resume).string();
  } else {
    cfg = resolve_train_config(a);
  }
  fs::create_directories(a.out);
  fill_train_manifest(manifest, cfg);
  manifest["path.dataset"] = absolute_path(a.data).string();
  manifest["path.run"] = absolute_path(a.out).string();
  manifest["path.trace"] = absolute_path(fs::path(a.out) / "trace.tsv").string();
  manifest["path.checkpoints"] = absolute_path(fs::path(a.out) / "checkpoints").string();
  if (!a.config.empty()) manifest["path.config"] = absolute_path(a.config).string();
  const fs::path manifest_path = fs::path(a.out) / "manifest.txt";
  write_key_values(manifest_path, manifest);

  const TrainOutputs result = train(cfg, a.data, a.out, resume);
  manifest["path.final_checkpoint"] = absolute_path(result.final_checkpoint).string();
  manifest["result.iterations"] = std::to_string(result.iterations);
  write_key_values(manifest_path, manifest);
  out << "trained " << result.iterations << " iterations (" << he_objective_name(cfg) << ", gt "
      << gt_objective_name(cfg) << "); checkpoint " << result.final_checkpoint.string() << '\n';
  return kExitOk;
}

// --- translate --------------------------------------------------------------

struct TranslateArgs {
  std::string checkpoint;
  std::string in;
  std::string out;
};

void add_translate(CLI::App& app, TranslateArgs& a) {
  auto* sub = app.add_subcommand("translate", "Translate HE images to virtual IHC with a trained checkpoint");
  sub->add_option("--checkpoint", a.checkpoint, "Checkpoint file")->required();
  sub->add_option("--in", a.in, "Directory of HE images")->required();
  sub->add_option("--out", a.out, "Output directory (same file names)")->required();
}

int cmd_translate(const TranslateArgs& a, KeyValues manifest, std::ostream& out) {
  TrainConfig cfg;
  load_generator(a.checkpoint, &cfg);
  const int written = translate(a.checkpoint, a.in, a.out);
  fill_train_manifest(manifest, cfg);
  manifest["path.checkpoint"] = absolute_path(a.checkpoint).string();
  manifest["path.input"] = absolute_path(a.in).string();
  manifest["path.output"] = absolute_path(a.out).string();
  manifest["result.images"] = std::to_string(written);
  write_key_values(fs::path(a.out) / "manifest.txt", manifest);
  out << "translated " << written << " images into " << a.out << '\n';
  return kExitOk;
}

// --- evaluate ---------------------------------------------------------------

struct EvaluateArgs {
  std::string generated;
  std::string gt;
  std::string report;
  std::string extractor;
  std::optional<double> phv_threshold;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
};

void add_evaluate(CLI::App& app, EvaluateArgs& a) {
  auto* sub = app.add_subcommand("evaluate", "Score generated IHC images against ground truth");
  sub->add_option("--generated", a.generated, "Directory of generated images")->required();
  sub->add_option("--gt", a.gt, "Directory of ground-truth images (paired by stem)")->required();
  sub->add_option("--report", a.report, "Output report file")->required();
  sub->add_option("--extractor", a.extractor, "Feature extractor: tiny-cnn or torchscript:<path>");
  sub->add_option("--phv-threshold", a.phv_threshold, "PHV threshold T");
  sub->add_option("--seed", a.seed, "Seed for KID subset sampling");
  sub->add_option("--set", a.sets, "Override a metric config key (key=value), repeatable");
}

int cmd_evaluate(const EvaluateArgs& a, KeyValues manifest, std::ostream& out) {
  KeyValues kv;
  if (!a.extractor.empty()) kv["extractor_id"] = a.extractor;
  if (a.phv_threshold) kv["phv_threshold"] = std::to_string(*a.phv_threshold);
  if (a.seed) kv["metric_seed"] = std::to_string(*a.seed);
  for (const auto& s : a.sets) {
    const auto [k, v] = split_assignment(s);
    kv[k] = v;
  }
  const MetricConfig cfg = metric_config_from(kv);
  const MetricReport report = evaluate(a.generated, a.gt, cfg);
  write_report(a.report, report);

  merge(manifest, to_key_values(cfg));
  manifest["seed"] = std::to_string(cfg.seed);
  manifest["path.generated"] = absolute_path(a.generated).string();
  manifest["path.gt"] = absolute_path(a.gt).string();
  manifest["path.report"] = absolute_path(a.report).string();
  write_key_values(fs::path(a.report).string() + ".manifest.txt", manifest);
  out << summary_line(report) << '\n';
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mix-domain contrastive H&E to IHC stain translation", "mdcl"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  MakeToyArgs make_toy;
  TrainArgs train_args;
  TranslateArgs translate_args;
  EvaluateArgs evaluate_args;
  add_make_toy(app, make_toy);
  add_train(app, train_args);
  add_translate(app, translate_args);
  add_evaluate(app, evaluate_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  KeyValues manifest = manifest_header(command, argc, argv);
  try {
    if (command == "make-toy") return cmd_make_toy(make_toy, manifest, out);
    if (command == "train") return cmd_train(train_args, manifest, out);
    if (command == "translate") return cmd_translate(translate_args, manifest, out);
    return cmd_evaluate(evaluate_args, manifest, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << e.what() << '\n';
    return kExitFailure;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"mdcl"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace mdcl::cli
