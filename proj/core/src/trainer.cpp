#include "langsurf/trainer.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "langsurf/error.hpp"
#include "langsurf/kdtree.hpp"
#include "langsurf/losses.hpp"
#include "langsurf/random.hpp"
#include "langsurf/rasterizer.hpp"
#include "langsurf/tensor_io.hpp"

namespace langsurf {
namespace {

constexpr GroupMask kStage1Groups = {true, true, true, true, true, false, false};
constexpr GroupMask kStage2Groups = {true, true, true, true, true, true, false};
constexpr GroupMask kStage3Groups = {false, false, false, false, false, false, true};

std::int64_t stage_length(const TrainConfig& c, int stage) {
  switch (stage) {
    case 1: return c.stage1_iterations;
    case 2: return c.stage2_iterations;
    default: return c.stage3_iterations;
  }
}

FloatImage weighted(const FloatImage& shape, const std::vector<double>& grad, double w) {
  FloatImage out(shape.height, shape.width, shape.channels);
  for (std::size_t i = 0; i < grad.size(); ++i) out.data[i] = w * grad[i];
  return out;
}

void add_weighted(FloatImage& acc, const FloatImage& shape, const std::vector<double>& grad, double w) {
  if (acc.empty()) {
    acc = weighted(shape, grad, w);
    return;
  }
  for (std::size_t i = 0; i < grad.size(); ++i) acc.data[i] += w * grad[i];
}

std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

void check_report(const LossReport& r, std::int64_t iteration) {
  const std::string where = "loss '" + r.name + "' at iteration " + std::to_string(iteration);
  if (!std::isfinite(r.value)) throw NumericError("non-finite value of " + where);
  for (const auto& [key, g] : r.grads) require_finite(g, "gradient '" + key + "' of " + where);
}

void check_views(std::span<const TrainView> views, int stage, const TrainConfig& config) {
  if (views.empty()) throw InvalidParameter("train_stage" + std::to_string(stage) + ": no views");
  for (std::size_t i = 0; i < views.size(); ++i) {
    const auto& v = views[i];
    const std::string tag = "train_stage" + std::to_string(stage) + ": view " + std::to_string(i);
    v.camera.validate();
    if (v.rgb.height != v.camera.height || v.rgb.width != v.camera.width || v.rgb.channels != 3) {
      throw InvalidParameter(tag + " has no RGB target matching its camera");
    }
    if (stage == 2) {
      const auto& lat = v.latent[static_cast<int>(config.hierarchy)];
      if (lat.height != v.rgb.height || lat.width != v.rgb.width || lat.channels != 3) {
        throw InvalidParameter(tag + " is missing its latent target for hierarchy " +
                               std::string(1, hierarchy_letter(config.hierarchy)));
      }
    }
    const Hierarchy needs = stage == 2 ? config.hierarchy : config.instance_hierarchy;
    if (stage >= 2) {
      const auto& masks = v.masks.at(needs);
      if (masks.height != v.rgb.height || masks.width != v.rgb.width) {
        throw InvalidParameter(tag + " is missing masks for hierarchy " + std::string(1, hierarchy_letter(needs)));
      }
    }
  }
}

void prune(TrainState& state, double threshold) {
  std::vector<std::size_t> keep;
  const std::size_t n = state.scene.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (state.scene.opacity(i) >= threshold) keep.push_back(i);
  }
  if (keep.size() == n) return;
  state.scene = state.scene.select(keep);
  state.optimizer.select(keep, n);
  std::vector<std::size_t> origin;
  origin.reserve(keep.size());
  for (auto i : keep) origin.push_back(state.origin[i]);
  state.origin = std::move(origin);
  state.knn_graph.clear();
  state.knn_k = 0;
}

void run_stage(TrainState& state, std::span<const TrainView> views, const TrainConfig& config,
               const TrainHooks& hooks, int stage) {
  config.validate();
  if (state.stage > stage) return;
  if (state.stage < stage) {
    state.stage = stage;
    state.stage_iteration = 0;
  }
  const std::int64_t total = stage_length(config, stage);
  const std::int64_t end = hooks.stop_at >= 0 ? std::min(hooks.stop_at, total) : total;
  if (state.stage_iteration >= end) return;
  check_views(views, stage, config);
  if (stage == 3 && state.stage_iteration == 0) state.scene.f_ins = state.scene.f_lang;
  if (hooks.on_stage_start) hooks.on_stage_start(state);

  const GroupMask& active = stage == 1 ? kStage1Groups : (stage == 2 ? kStage2Groups : kStage3Groups);
  const Channels channels = stage == 1 ? Channels::Color : (stage == 2 ? Channels::Lang : Channels::Ins);
  const int h = static_cast<int>(config.hierarchy);
  const auto k = static_cast<std::size_t>(config.knn_k);

  while (state.stage_iteration < end) {
    const std::int64_t it = state.stage_iteration;
    const std::int64_t step_number = state.iteration + 1;
    const auto& view = views[derive_seed(config.seed, {static_cast<std::uint64_t>(stage),
                                                       static_cast<std::uint64_t>(it)}) %
                             views.size()];
    auto& scene = state.scene;
    std::vector<LossReport> reports;
    std::vector<double> weights;
    auto record = [&](LossReport r, double w) {
      check_report(r, step_number);
      reports.push_back(std::move(r));
      weights.push_back(w);
      return &reports.back();
    };
    reports.reserve(8);

    const RenderOutput out = render(scene, view.camera, channels);
    GradMaps maps;
    std::vector<double> scale_grad, lang_grad;

    if (stage <= 2) {
      if (config.lambda_rgb > 0) {
        auto* r = record(loss_rgb(out.color, view.rgb), config.lambda_rgb);
        maps.color = weighted(out.color, r->grad("rendered"), config.lambda_rgb);
      }
      if (config.lambda_flat > 0 && !scene.empty()) {
        auto* r = record(loss_flat(scene), config.lambda_flat);
        scale_grad = r->grad("log_scale");
        for (auto& g : scale_grad) g *= config.lambda_flat;
      }
    }
    if (stage == 2) {
      if (config.lambda_geo > 0) {
        auto* r = record(loss_geo(out, view.camera), config.lambda_geo);
        maps.normal = weighted(out.normal, r->grad("normal"), config.lambda_geo);
      }
      if (config.lambda_sem > 0) {
        auto* r = record(loss_sem_l2(out.lang, view.latent[h]), config.lambda_sem);
        add_weighted(maps.lang, out.lang, r->grad("rendered"), config.lambda_sem);
      }
      if (config.lambda_sg > 0) {
        const auto seed = derive_seed(config.seed, {0x5347u, static_cast<std::uint64_t>(step_number)});
        auto* r = record(loss_sg(out.lang, view.masks.at(config.hierarchy),
                                 static_cast<std::size_t>(config.pair_cap), seed),
                         config.lambda_sg);
        add_weighted(maps.lang, out.lang, r->grad("rendered"), config.lambda_sg);
      }
      if (config.lambda_s3d > 0) {
        if (k >= scene.size()) {
          throw InvalidParameter("train_stage2: knn_k = " + std::to_string(k) + " needs more than k Gaussians (have " +
                                 std::to_string(scene.size()) + ")");
        }
        if (it % config.knn_refresh == 0 || state.knn_k != config.knn_k ||
            state.knn_graph.size() != scene.size() * k) {
          state.knn_graph = knn_graph(scene.position, k);
          state.knn_k = config.knn_k;
        }
        auto* r = record(loss_s3d(scene, state.knn_graph, k), config.lambda_s3d);
        lang_grad = r->grad("f_lang");
        for (auto& g : lang_grad) g *= config.lambda_s3d;
      }
    }
    if (stage == 3 && config.lambda_icd > 0) {
      auto* r = record(loss_icd_map(out.ins, view.masks.at(config.instance_hierarchy), config.d_min),
                       config.lambda_icd);
      maps.ins = weighted(out.ins, r->grad("rendered"), config.lambda_icd);
    }

    double total_loss = 0.0;
    for (std::size_t i = 0; i < reports.size(); ++i) {
      total_loss += weights[i] * reports[i].value;
      state.history.push_back({step_number, stage, reports[i].name, reports[i].value});
    }
    if (!std::isfinite(total_loss)) throw NumericError("non-finite total loss at iteration " + std::to_string(step_number));
    state.history.push_back({step_number, stage, "total", total_loss});

    SceneGradient grads = render_backward(scene, view.camera, out, maps);
    for (std::size_t i = 0; i < scale_grad.size(); ++i) grads.log_scale[i] += scale_grad[i];
    for (std::size_t i = 0; i < lang_grad.size(); ++i) grads.f_lang[i] += lang_grad[i];
    optimizer_step(scene, state.optimizer, grads, config.lr, active,
                   "merged gradient at iteration " + std::to_string(step_number));

    ++state.iteration;
    ++state.stage_iteration;
    if (stage == 1 && config.prune_opacity > 0 && state.stage_iteration % config.prune_every == 0) {
      prune(state, config.prune_opacity);
    }
    if (config.checkpoint_every > 0 && !hooks.checkpoint_root.empty() &&
        state.stage_iteration % config.checkpoint_every == 0) {
      save_checkpoint(hooks.checkpoint_root / checkpoint_name(state), state, config);
    }
    if (hooks.on_iteration) hooks.on_iteration(state);
  }
}

}  // namespace

TrainState make_train_state(GaussianScene scene) {
  scene.validate();
  TrainState state;
  state.scene = std::move(scene);
  round_to_float(state.scene);
  state.scene.normalize_rotations();
  round_to_float(state.scene);
  state.origin.resize(state.scene.size());
  for (std::size_t i = 0; i < state.origin.size(); ++i) state.origin[i] = i;
  return state;
}

void train_stage1(TrainState& state, std::span<const TrainView> views, const TrainConfig& config,
                  const TrainHooks& hooks) {
  run_stage(state, views, config, hooks, 1);
}

void train_stage2(TrainState& state, std::span<const TrainView> views, const TrainConfig& config,
                  const TrainHooks& hooks) {
  run_stage(state, views, config, hooks, 2);
}

void train_stage3(TrainState& state, std::span<const TrainView> views, const TrainConfig& config,
                  const TrainHooks& hooks) {
  run_stage(state, views, config, hooks, 3);
}

void train_all(TrainState& state, std::span<const TrainView> views, const TrainConfig& config,
               const TrainHooks& hooks) {
  for (int stage = state.stage; stage <= 3; ++stage) {
    run_stage(state, views, config, hooks, stage);
    if (state.stage_iteration < stage_length(config, stage)) return;  // stopped early
  }
}

void write_loss_log(const std::filesystem::path& path, std::span<const LossRecord> history) {
  std::ofstream out(path);
  if (!out) throw InvalidParameter("cannot write loss log " + path.string());
  out << "iteration,stage,loss_name,value\n";
  for (const auto& r : history) out << r.iteration << ',' << r.stage << ',' << r.name << ',' << format_double(r.value) << '\n';
}

std::vector<LossRecord> read_loss_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open loss log " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "iteration,stage,loss_name,value") throw FormatError(path.string() + ": unexpected loss log header");
  std::vector<LossRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string a, b, name, value;
    if (!std::getline(fields, a, ',') || !std::getline(fields, b, ',') || !std::getline(fields, name, ',') ||
        !std::getline(fields, value)) {
      throw FormatError(path.string() + ": malformed row '" + line + "'");
    }
    LossRecord r;
    r.iteration = std::stoll(a);
    r.stage = std::stoi(b);
    r.name = name;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), r.value);
    if (ec != std::errc()) throw FormatError(path.string() + ": bad value in '" + line + "'");
    out.push_back(std::move(r));
  }
  return out;
}

std::string checkpoint_name(const TrainState& state) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "ckpt-%08lld-stage%d", static_cast<long long>(state.iteration), state.stage);
  return buf;
}

void save_checkpoint(const std::filesystem::path& dir, const TrainState& state, const TrainConfig& config) {
  std::filesystem::create_directories(dir);
  save_scene(state.scene, dir / "scene.ply");
  nlohmann::json meta;
  meta["iteration"] = state.iteration;
  meta["stage"] = state.stage;
  meta["stage_iteration"] = state.stage_iteration;
  meta["knn_k"] = state.knn_k;
  meta["origin"] = state.origin;
  meta["adam_steps"] = std::vector<std::int64_t>(state.optimizer.steps.begin(), state.optimizer.steps.end());
  std::vector<std::string> moments;
  for (int g = 0; g < kParamGroupCount; ++g) {
    if (state.optimizer.m[g].empty()) continue;
    const std::string name(group_name(kAllParamGroups[g]));
    moments.push_back(name);
    const auto n = static_cast<std::uint32_t>(state.optimizer.m[g].size());
    write_tensor(dir / ("adam_m_" + name + ".lstf"), make_f32({n}, state.optimizer.m[g]));
    write_tensor(dir / ("adam_v_" + name + ".lstf"), make_f32({n}, state.optimizer.v[g]));
  }
  meta["moments"] = moments;
  if (!state.knn_graph.empty()) {
    std::vector<std::int32_t> graph(state.knn_graph.begin(), state.knn_graph.end());
    write_tensor(dir / "knn_graph.lstf", make_i32({static_cast<std::uint32_t>(graph.size())}, graph));
  }
  std::ofstream(dir / "state.json") << meta.dump(2) << '\n';
  save_config(dir / "config.txt", config);
  write_loss_log(dir / "loss_log.csv", state.history);
}

TrainState load_checkpoint(const std::filesystem::path& dir, TrainConfig* config) {
  std::ifstream in(dir / "state.json");
  if (!in) throw FormatError("checkpoint " + dir.string() + " has no state.json");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint " + dir.string() + ": " + e.what());
  }
  TrainState state;
  state.scene = load_scene(dir / "scene.ply");
  try {
    state.iteration = meta.at("iteration").get<std::int64_t>();
    state.stage = meta.at("stage").get<int>();
    state.stage_iteration = meta.at("stage_iteration").get<std::int64_t>();
    state.knn_k = meta.at("knn_k").get<std::int64_t>();
    state.origin = meta.at("origin").get<std::vector<std::size_t>>();
    const auto steps = meta.at("adam_steps").get<std::vector<std::int64_t>>();
    if (steps.size() != kParamGroupCount) throw FormatError("checkpoint: adam_steps must have 7 entries");
    for (int g = 0; g < kParamGroupCount; ++g) state.optimizer.steps[g] = steps[g];
    for (const auto& name : meta.at("moments").get<std::vector<std::string>>()) {
      const int g = static_cast<int>(group_from_name(name));
      for (auto [prefix, buf] : {std::pair{"adam_m_", &state.optimizer.m[g]}, std::pair{"adam_v_", &state.optimizer.v[g]}}) {
        const Tensor t = read_tensor(dir / (std::string(prefix) + name + ".lstf"));
        if (t.dtype != DType::Float32) throw FormatError("checkpoint: moment tensors must be float32");
        buf->assign(t.f32.begin(), t.f32.end());
        if (buf->size() != state.scene.group(kAllParamGroups[g]).size()) {
          throw FormatError("checkpoint: moment size mismatch for " + name);
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint " + dir.string() + ": " + e.what());
  }
  if (std::filesystem::exists(dir / "knn_graph.lstf")) {
    const Tensor t = read_tensor(dir / "knn_graph.lstf");
    if (t.dtype != DType::Int32) throw FormatError("checkpoint: knn_graph must be int32");
    state.knn_graph.assign(t.i32.begin(), t.i32.end());
  }
  state.history = read_loss_log(dir / "loss_log.csv");
  if (config) *config = load_config(dir / "config.txt");
  return state;
}

}  // namespace langsurf
