#include <sstream>

#include "mdcl/errors.hpp"
#include "mdcl/trainer.hpp"

namespace mdcl {

namespace {

constexpr const char* kFormat = "mdcl-checkpoint";
constexpr std::int64_t kVersion = 1;

GeneratorOptions generator_options(const TrainConfig& c) {
  return GeneratorOptions{c.gen_width, c.gen_res_blocks, c.gen_downsamples, c.gen_feature_taps};
}

torch::optim::AdamOptions adam_options(const TrainConfig& c) {
  return torch::optim::AdamOptions(c.lr0).betas({c.adam_beta1, c.adam_beta2});
}

std::string read_string(torch::serialize::InputArchive& archive, const std::string& key) {
  c10::IValue value;
  if (!archive.try_read(key, value) || !value.isString()) throw CheckpointFormatError("missing string '" + key + "'");
  return value.toStringRef();
}

std::int64_t read_int(torch::serialize::InputArchive& archive, const std::string& key) {
  c10::IValue value;
  if (!archive.try_read(key, value) || !value.isInt()) throw CheckpointFormatError("missing integer '" + key + "'");
  return value.toInt();
}

torch::serialize::InputArchive open_archive(const std::filesystem::path& path, TrainConfig& config) {
  if (!std::filesystem::is_regular_file(path)) throw CheckpointFormatError("no checkpoint at " + path.string());
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    throw CheckpointFormatError("cannot open " + path.string() + ": " + e.what_without_backtrace());
  }
  if (read_string(archive, "format") != kFormat) throw CheckpointFormatError(path.string() + " is not an mdcl checkpoint");
  if (const auto version = read_int(archive, "version"); version != kVersion) {
    throw CheckpointFormatError("unsupported checkpoint version " + std::to_string(version));
  }
  try {
    config = train_config_from(parse_key_values(read_string(archive, "config")));
    config.validate();
  } catch (const ConfigError& e) {
    throw CheckpointFormatError(std::string("stored config is invalid: ") + e.what());
  }
  return archive;
}

template <typename Loadable>
void read_sub(torch::serialize::InputArchive& archive, const std::string& key, Loadable& target) {
  torch::serialize::InputArchive sub;
  try {
    if (!archive.try_read(key, sub)) throw CheckpointFormatError("missing section '" + key + "'");
    target.load(sub);
  } catch (const c10::Error& e) {
    throw CheckpointFormatError("section '" + key + "' does not match the architecture: " + e.what_without_backtrace());
  }
}

}  // namespace

TrainState make_train_state(const TrainConfig& config) {
  config.validate();
  TrainState state;
  state.config = config;
  torch::manual_seed(config.seed);
  state.generator = GeneratorNet(generator_options(config));
  state.discriminator = DiscriminatorNet(DiscriminatorOptions{config.disc_width, config.disc_layers});
  std::vector<int> channels;
  for (const auto& tap : state.generator->taps()) channels.push_back(tap.channels);
  state.projector = ProjectorNet(ProjectorOptions{config.embed_dim, channels});

  state.optim_g = std::make_unique<torch::optim::Adam>(state.generator->parameters(), adam_options(config));
  state.optim_d = std::make_unique<torch::optim::Adam>(state.discriminator->parameters(), adam_options(config));
  state.optim_p = std::make_unique<torch::optim::Adam>(state.projector->parameters(), adam_options(config));
  state.rng.seed(config.seed);
  return state;
}

void save_checkpoint(const std::filesystem::path& path, const TrainState& state) {
  torch::serialize::OutputArchive archive;
  archive.write("format", c10::IValue(std::string(kFormat)));
  archive.write("version", c10::IValue(kVersion));
  archive.write("config", c10::IValue(format_key_values(to_key_values(state.config))));
  archive.write("epoch", c10::IValue(static_cast<std::int64_t>(state.epoch)));
  archive.write("iteration", c10::IValue(static_cast<std::int64_t>(state.iteration)));
  archive.write("accumulated", c10::IValue(static_cast<std::int64_t>(state.accumulated)));
  std::ostringstream rng;
  rng << state.rng;
  archive.write("rng", c10::IValue(rng.str()));

  auto write_sub = [&](const std::string& key, const auto& saveable) {
    torch::serialize::OutputArchive sub;
    saveable.save(sub);
    archive.write(key, sub);
  };
  write_sub("generator", *state.generator);
  write_sub("discriminator", *state.discriminator);
  write_sub("projector", *state.projector);
  write_sub("optim_g", *state.optim_g);
  write_sub("optim_d", *state.optim_d);
  write_sub("optim_p", *state.optim_p);

  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  try {
    archive.save_to(path.string());
  } catch (const c10::Error& e) {
    throw IoFailure("cannot write checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  TrainConfig config;
  auto archive = open_archive(path, config);
  TrainState state = make_train_state(config);
  state.epoch = static_cast<int>(read_int(archive, "epoch"));
  state.iteration = read_int(archive, "iteration");
  state.accumulated = static_cast<int>(read_int(archive, "accumulated"));
  std::istringstream rng(read_string(archive, "rng"));
  rng >> state.rng;
  if (!rng) throw CheckpointFormatError("corrupt rng state");

  read_sub(archive, "generator", *state.generator);
  read_sub(archive, "discriminator", *state.discriminator);
  read_sub(archive, "projector", *state.projector);
  read_sub(archive, "optim_g", *state.optim_g);
  read_sub(archive, "optim_d", *state.optim_d);
  read_sub(archive, "optim_p", *state.optim_p);
  return state;
}

GeneratorNet load_generator(const std::filesystem::path& path, TrainConfig* config_out) {
  TrainConfig config;
  auto archive = open_archive(path, config);
  GeneratorNet g(generator_options(config));
  read_sub(archive, "generator", *g);
  g->eval();
  if (config_out) *config_out = config;
  return g;
}

}  // namespace mdcl
