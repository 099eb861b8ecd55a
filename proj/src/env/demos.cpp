#include "gridvla/env/demos.hpp"

#include <bit>
#include <cmath>
#include <fstream>

#include "gridvla/common/error.hpp"
#include "gridvla/env/expert.hpp"
#include "json.hpp"

namespace gridvla::env {
namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

constexpr int kDemoFormat = 1;

template <typename T>
void write_array(std::ofstream& out, const std::vector<T>& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <typename T>
void read_array(std::ifstream& in, std::vector<T>& v, const std::filesystem::path& path) {
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
  if (!in) throw IoError("truncated demo data in " + path.string());
}

}  // namespace

std::size_t DemoDataset::transitions() const {
  std::size_t n = 0;
  for (const auto& e : episodes) n += e.steps.size();
  return n;
}

DemoDataset DemoDataset::prefix(std::size_t n) const {
  DemoDataset out;
  out.codec = codec;
  out.env_config = env_config;
  const std::size_t m = std::min(n, episodes.size());
  out.episodes.assign(episodes.begin(), episodes.begin() + static_cast<std::ptrdiff_t>(m));
  for (const auto& e : out.episodes) {
    out.filter_stats.kept += e.steps.size();
    out.filter_stats.dropped += e.dropped;
  }
  return out;
}

std::uint64_t demo_episode_seed(std::uint64_t seed, std::size_t i) { return derive_seed(seed, 0xde30, i); }

bool is_idle(const Action& a, bool gripper_closed, double threshold) {
  const bool moves = std::hypot(a.dx, a.dy) >= threshold;
  const bool closes = a.gripper > 0.0;
  return !moves && closes == gripper_closed;
}

DemoDataset collect_demos(const TaskSpec& task, int n_episodes, double pos_filter_threshold,
                          const policy::ActionCodec& codec, std::uint64_t seed, const EnvConfig& config) {
  if (n_episodes < 1) throw ContractError("collect_demos needs at least one episode");
  codec.validate();
  DemoDataset data;
  data.codec = codec;
  data.env_config = config;
  for (int i = 0; i < n_episodes; ++i) {
    DemoEpisode ep;
    ep.task = task;
    ep.episode_seed = demo_episode_seed(seed, static_cast<std::size_t>(i));
    auto [state, obs] = reset(task, ep.episode_seed, config);
    bool success = false;
    while (!state.done) {
      const Action a = scripted_expert(state);
      const bool idle = is_idle(a, state.gripper_closed, pos_filter_threshold);
      if (idle) {
        ep.dropped += 1;
      } else {
        ep.steps.push_back({obs, a, codec.encode(a)});
      }
      StepResult r = step(state, a);
      obs = std::move(r.observation);
      success = r.success;
    }
    if (!success) {
      data.filter_stats.discarded_episodes += 1;
      continue;
    }
    data.filter_stats.kept += ep.steps.size();
    data.filter_stats.dropped += ep.dropped;
    data.episodes.push_back(std::move(ep));
  }
  return data;
}

void save_demos(const std::filesystem::path& dir, const DemoDataset& data) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create demo directory " + dir.string() + ": " + ec.message());

  const EnvConfig& c = data.env_config;
  const std::size_t pixels = static_cast<std::size_t>(c.grid_h) * c.grid_w * kChannels;
  nlohmann::json manifest;
  manifest["format"] = kDemoFormat;
  manifest["transitions"] = data.transitions();
  manifest["filter_stats"] = {{"kept", data.filter_stats.kept},
                              {"dropped", data.filter_stats.dropped},
                              {"discarded_episodes", data.filter_stats.discarded_episodes}};
  manifest["codec"] = {{"n_bins", data.codec.n_bins}, {"lo", data.codec.lo}, {"hi", data.codec.hi}};
  manifest["env"] = to_json(c);
  manifest["channels"] = kChannels;
  manifest["vocabulary"] = catalog().vocab.words();
  manifest["layout"] = {{"images", "float64 [transitions, grid_h, grid_w, channels]"},
                        {"instructions", "int32 [transitions, " + std::to_string(kMaxInstructionTokens) + "]"},
                        {"actions", "float64 [transitions, 3]"},
                        {"tokens", "int32 [transitions, 3]"}};
  nlohmann::json episodes = nlohmann::json::array();
  std::vector<double> images;
  std::vector<std::int32_t> instructions;
  std::vector<double> actions;
  std::vector<std::int32_t> tokens;
  for (const auto& e : data.episodes) {
    episodes.push_back({{"task", to_json(e.task)},
                        {"episode_seed", e.episode_seed},
                        {"steps", e.steps.size()},
                        {"dropped", e.dropped}});
    for (const auto& s : e.steps) {
      if (s.observation.image.size() != pixels) throw ContractError("demo observation does not match env config");
      images.insert(images.end(), s.observation.image.begin(), s.observation.image.end());
      instructions.insert(instructions.end(), s.observation.instruction.begin(), s.observation.instruction.end());
      actions.insert(actions.end(), {s.action.dx, s.action.dy, s.action.gripper});
      tokens.insert(tokens.end(), s.tokens.begin(), s.tokens.end());
    }
  }
  manifest["episodes"] = std::move(episodes);

  const auto json_path = dir / "demos.json";
  std::ofstream mj(json_path);
  if (!mj) throw IoError("cannot write " + json_path.string());
  mj << manifest.dump(2) << "\n";
  const auto bin_path = dir / "demos.bin";
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw IoError("cannot write " + bin_path.string());
  write_array(bin, images);
  write_array(bin, instructions);
  write_array(bin, actions);
  write_array(bin, tokens);
  if (!bin) throw IoError("failed writing " + bin_path.string());
}

DemoDataset load_demos(const std::filesystem::path& dir) {
  const auto json_path = dir / "demos.json";
  std::ifstream mj(json_path);
  if (!mj) throw IoError("cannot read demo manifest " + json_path.string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(mj);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed demo manifest " + json_path.string() + ": " + e.what());
  }
  if (m.value("format", 0) != kDemoFormat) throw IoError("unsupported demo format in " + json_path.string());

  DemoDataset data;
  data.codec.n_bins = m["codec"]["n_bins"];
  data.codec.lo = m["codec"]["lo"].get<std::vector<double>>();
  data.codec.hi = m["codec"]["hi"].get<std::vector<double>>();
  data.env_config = env_config_from_json(m["env"]);
  data.filter_stats.kept = m["filter_stats"]["kept"];
  data.filter_stats.dropped = m["filter_stats"]["dropped"];
  data.filter_stats.discarded_episodes = m["filter_stats"]["discarded_episodes"];

  const std::size_t n = m["transitions"];
  const EnvConfig& c = data.env_config;
  const std::size_t pixels = static_cast<std::size_t>(c.grid_h) * c.grid_w * kChannels;
  std::vector<double> images(n * pixels);
  std::vector<std::int32_t> instructions(n * kMaxInstructionTokens);
  std::vector<double> actions(n * 3);
  std::vector<std::int32_t> tokens(n * 3);
  const auto bin_path = dir / "demos.bin";
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw IoError("cannot read demo data " + bin_path.string());
  read_array(bin, images, bin_path);
  read_array(bin, instructions, bin_path);
  read_array(bin, actions, bin_path);
  read_array(bin, tokens, bin_path);

  std::size_t t = 0;
  for (const auto& je : m["episodes"]) {
    DemoEpisode e;
    e.task = make_task(parse_variant(je["task"]["variant"].get<std::string>()), je["task"]["seed"]);
    e.episode_seed = je["episode_seed"];
    e.dropped = je["dropped"];
    const std::size_t steps = je["steps"];
    for (std::size_t k = 0; k < steps; ++k, ++t) {
      if (t >= n) throw IoError("demo manifest step counts exceed transitions in " + json_path.string());
      DemoStep s;
      s.observation.height = c.grid_h;
      s.observation.width = c.grid_w;
      s.observation.image.assign(images.begin() + t * pixels, images.begin() + (t + 1) * pixels);
      s.observation.instruction.assign(instructions.begin() + t * kMaxInstructionTokens,
                                       instructions.begin() + (t + 1) * kMaxInstructionTokens);
      s.action = {actions[3 * t], actions[3 * t + 1], actions[3 * t + 2]};
      s.tokens.assign(tokens.begin() + 3 * t, tokens.begin() + 3 * t + 3);
      e.steps.push_back(std::move(s));
    }
    data.episodes.push_back(std::move(e));
  }
  return data;
}

}  // namespace gridvla::env
