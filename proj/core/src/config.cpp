#include "langsurf/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "langsurf/error.hpp"

namespace langsurf {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

double parse_double(const std::string& key, const std::string& text) {
  double x = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), x);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(x)) {
    throw InvalidParameter("config key '" + key + "': expected a number, got '" + text + "'");
  }
  return x;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& text) {
  Int x = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), x);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw InvalidParameter("config key '" + key + "': expected an integer, got '" + text + "'");
  }
  return x;
}

Hierarchy parse_hierarchy(const std::string& key, const std::string& text) {
  if (text.size() != 1) throw InvalidParameter("config key '" + key + "': expected one of s, m, l");
  try {
    return hierarchy_from_letter(text[0]);
  } catch (const Error&) {
    throw InvalidParameter("config key '" + key + "': expected one of s, m, l, got '" + text + "'");
  }
}

struct Field {
  ConfigKey info;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

Field real(std::string key, std::string desc, double TrainConfig::*member) {
  return {{key, std::move(desc)},
          [key, member](TrainConfig& c, const std::string& v) { c.*member = parse_double(key, v); },
          [member](const TrainConfig& c) { return format_double(c.*member); }};
}

Field integer(std::string key, std::string desc, std::int64_t TrainConfig::*member) {
  return {{key, std::move(desc)},
          [key, member](TrainConfig& c, const std::string& v) { c.*member = parse_int<std::int64_t>(key, v); },
          [member](const TrainConfig& c) { return std::to_string(c.*member); }};
}

Field learning_rate(ParamGroup g) {
  const std::string key = "lr_" + std::string(group_name(g));
  const int i = static_cast<int>(g);
  return {{key, "Adam learning rate for " + std::string(group_name(g))},
          [key, i](TrainConfig& c, const std::string& v) { c.lr[i] = parse_double(key, v); },
          [i](const TrainConfig& c) { return format_double(c.lr[i]); }};
}

Field hierarchy(std::string key, std::string desc, Hierarchy TrainConfig::*member) {
  return {{key, std::move(desc)},
          [key, member](TrainConfig& c, const std::string& v) { c.*member = parse_hierarchy(key, v); },
          [member](const TrainConfig& c) { return std::string(1, hierarchy_letter(c.*member)); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(integer("stage1_iterations", "Step 1 iterations (RGB + flatten)", &TrainConfig::stage1_iterations));
    f.push_back(integer("stage2_iterations", "Step 2 iterations (joint geometry + semantics)",
                        &TrainConfig::stage2_iterations));
    f.push_back(integer("stage3_iterations", "Step 3 iterations (instance features)", &TrainConfig::stage3_iterations));
    for (auto g : kAllParamGroups) f.push_back(learning_rate(g));
    f.push_back(real("lambda_rgb", "weight of the L1 color loss", &TrainConfig::lambda_rgb));
    f.push_back(real("lambda_flat", "weight of the min-scale flatten loss", &TrainConfig::lambda_flat));
    f.push_back(real("lambda_geo", "weight of the depth-normal consistency loss", &TrainConfig::lambda_geo));
    f.push_back(real("lambda_sem", "weight of the L2 latent loss", &TrainConfig::lambda_sem));
    f.push_back(real("lambda_sg", "weight of the in-mask grouping loss", &TrainConfig::lambda_sg));
    f.push_back(real("lambda_s3d", "weight of the neighbour KL loss", &TrainConfig::lambda_s3d));
    f.push_back(real("lambda_icd", "weight of the instance margin loss", &TrainConfig::lambda_icd));
    f.push_back(hierarchy("hierarchy", "mask level for semantic targets (s, m, l)", &TrainConfig::hierarchy));
    f.push_back(hierarchy("instance_hierarchy", "mask level for instance means (s, m, l)",
                          &TrainConfig::instance_hierarchy));
    f.push_back(integer("knn_k", "neighbours per Gaussian in the KL loss", &TrainConfig::knn_k));
    f.push_back(real("d_min", "instance margin in latent units", &TrainConfig::d_min));
    f.push_back(integer("pair_cap", "sampled pixel pairs per mask", &TrainConfig::pair_cap));
    f.push_back(integer("knn_refresh", "iterations between neighbour graph rebuilds", &TrainConfig::knn_refresh));
    f.push_back({{"seed", "base seed for view sampling and pair sampling"},
                 [](TrainConfig& c, const std::string& v) { c.seed = parse_int<std::uint64_t>("seed", v); },
                 [](const TrainConfig& c) { return std::to_string(c.seed); }});
    f.push_back(integer("checkpoint_every", "iterations between checkpoints, 0 = off", &TrainConfig::checkpoint_every));
    f.push_back(real("prune_opacity", "Step 1 pruning opacity threshold, 0 = off", &TrainConfig::prune_opacity));
    f.push_back(integer("prune_every", "Step 1 iterations between pruning passes", &TrainConfig::prune_every));
    f.push_back(real("query_threshold", "relevancy threshold for selection", &TrainConfig::query_threshold));
    f.push_back(integer("ae_epochs", "autoencoder gradient-descent epochs", &TrainConfig::ae_epochs));
    f.push_back(real("ae_lr", "autoencoder learning rate", &TrainConfig::ae_lr));
    return f;
  }();
  return table;
}

const Field& field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.info.key == key) return f;
  }
  std::string known;
  for (const auto& f : fields()) known += (known.empty() ? "" : ", ") + f.info.key;
  throw LookupError("unknown config key '" + key + "'; known keys: " + known);
}

}  // namespace

void TrainConfig::use_paper_schedule() {
  stage1_iterations = 7000;
  stage2_iterations = 23000;
  stage3_iterations = 10000;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw InvalidParameter("config: " + what); };
  if (stage1_iterations < 0 || stage2_iterations < 0 || stage3_iterations < 0) fail("iterations must be >= 0");
  for (int g = 0; g < kParamGroupCount; ++g) {
    if (!(lr[g] > 0)) fail("lr_" + std::string(group_name(kAllParamGroups[g])) + " must be > 0");
  }
  for (double w : {lambda_rgb, lambda_flat, lambda_geo, lambda_sem, lambda_sg, lambda_s3d, lambda_icd}) {
    if (!(w >= 0)) fail("loss weights must be >= 0");
  }
  if (knn_k < 1) fail("knn_k must be >= 1");
  if (!(d_min > 0)) fail("d_min must be > 0");
  if (pair_cap < 1) fail("pair_cap must be >= 1");
  if (knn_refresh < 1) fail("knn_refresh must be >= 1");
  if (checkpoint_every < 0) fail("checkpoint_every must be >= 0");
  if (!(prune_opacity >= 0 && prune_opacity < 1)) fail("prune_opacity must be in [0, 1)");
  if (prune_every < 1) fail("prune_every must be >= 1");
  if (!(query_threshold >= 0)) fail("query_threshold must be >= 0");
  if (ae_epochs < 0) fail("ae_epochs must be >= 0");
  if (!(ae_lr > 0)) fail("ae_lr must be > 0");
}

void TrainConfig::set(const std::string& key, const std::string& value) { field(key).set(*this, trim(value)); }

std::string TrainConfig::get(const std::string& key) const { return field(key).get(*this); }

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& f : fields()) k.push_back(f.info);
    return k;
  }();
  return keys;
}

std::pair<std::string, std::string> split_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw InvalidParameter("expected key = value, got '" + text + "'");
  auto key = trim(text.substr(0, eq));
  if (key.empty()) throw InvalidParameter("empty key in '" + text + "'");
  return {key, trim(text.substr(eq + 1))};
}

void apply_config_text(TrainConfig& config, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    try {
      auto [key, value] = split_assignment(line);
      config.set(key, value);
    } catch (const LookupError& e) {
      throw LookupError("line " + std::to_string(number) + ": " + e.what());
    } catch (const InvalidParameter& e) {
      throw InvalidParameter("line " + std::to_string(number) + ": " + e.what());
    }
  }
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidParameter("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  TrainConfig config;
  apply_config_text(config, buf.str());
  config.validate();
  return config;
}

std::string dump_config(const TrainConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.info.key + " = " + f.get(config) + "\n";
  return out;
}

void save_config(const std::filesystem::path& path, const TrainConfig& config) {
  std::ofstream out(path);
  if (!out) throw InvalidParameter("cannot write config " + path.string());
  out << dump_config(config);
}

}  // namespace langsurf
