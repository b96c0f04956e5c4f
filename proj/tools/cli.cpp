#include "cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "langsurf/camera_io.hpp"
#include "langsurf/config.hpp"
#include "langsurf/edit.hpp"
#include "langsurf/error.hpp"
#include "langsurf/hcam.hpp"
#include "langsurf/pipeline.hpp"
#include "langsurf/ply.hpp"
#include "langsurf/query.hpp"
#include "langsurf/rasterizer.hpp"
#include "langsurf/tensor_io.hpp"
#include "langsurf/trainer.hpp"

namespace langsurf::cli {
namespace {

namespace fs = std::filesystem;

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
};

struct Args {
  Common common;
  // synth
  std::string preset = "two-spheres";
  double noise = 0.05;
  // shared inputs
  std::string data, scene, cameras, autoencoder, codebook, query;
  std::optional<double> threshold;
  // train
  int stage = 0;
  bool paper_schedule = false;
  std::string resume, init;
  // render
  std::string channels = "all";
  // eval
  std::string split = "heldout";
  double tau = 0.05;
  std::string cloud, cloud_labels;
  // add
  std::string src, dst;
  std::vector<double> translate = {0, 0, 0};
  std::vector<double> rotate = {0, 0, 1, 0};
  double scale = 1.0;
};

std::string config_help() {
  std::ostringstream s;
  const TrainConfig defaults;
  s << "\nConfig keys (--config file or --set key=value), with defaults:\n";
  for (const auto& k : config_keys()) {
    char line[256];
    std::snprintf(line, sizeof line, "  %-20s %-10s %s\n", k.key.c_str(), defaults.get(k.key).c_str(),
                  k.description.c_str());
    s << line;
  }
  s << "Environment: LANGSURF_THREADS caps worker threads (0 = auto).\n";
  return s.str();
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "config file of key = value lines")->check(CLI::ExistingFile);
  sub->add_option("--set", c.overrides, "override one config key (key=value), repeatable");
  sub->add_option("--seed", c.seed, "base seed (overrides the config key)");
  sub->add_option("--out-dir", c.out_dir, "directory for all outputs")->capture_default_str();
  sub->footer(config_help());
}

TrainConfig resolve_config(const Args& a, std::ostream& err) {
  TrainConfig config;
  if (!a.common.config_path.empty()) config = load_config(a.common.config_path);
  for (const auto& kv : a.common.overrides) {
    auto [key, value] = split_assignment(kv);
    config.set(key, value);
  }
  if (a.common.seed) config.seed = *a.common.seed;
  if (a.paper_schedule) config.use_paper_schedule();
  config.validate();
  err << "# resolved config\n" << dump_config(config);
  return config;
}

fs::path out_dir(const Args& a) {
  fs::path dir(a.common.out_dir);
  fs::create_directories(dir);
  return dir;
}

fs::path data_file(const Args& a, const std::string& explicit_path, const char* name) {
  if (!explicit_path.empty()) return explicit_path;
  if (a.data.empty()) throw InvalidParameter(std::string("need --") + name + " or --data");
  return fs::path(a.data) / name;
}

Codebook codebook_of(const Args& a) { return load_codebook(data_file(a, a.codebook, "codebook.txt")); }

Autoencoder autoencoder_of(const Args& a) {
  if (a.autoencoder.empty()) throw InvalidParameter("need --autoencoder");
  return load_autoencoder(a.autoencoder);
}

double threshold_of(const Args& a, const TrainConfig& config) {
  return a.threshold ? *a.threshold : config.query_threshold;
}

std::string stem(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03zu", i);
  return buf;
}

Channels parse_channels(const std::string& s) {
  if (s == "color") return Channels::Color;
  if (s == "lang") return Channels::Lang;
  if (s == "ins") return Channels::Ins;
  if (s == "all") return Channels::All;
  throw InvalidParameter("--channels must be color, lang, ins or all");
}

int cmd_synth(const Args& a, std::ostream& err) {
  const TrainConfig config = resolve_config(a, err);
  DatasetOptions opts;
  opts.feature_noise = a.noise;
  opts.seed = config.seed;
  const Dataset ds = make_dataset(a.preset, opts);
  const fs::path dir = out_dir(a);
  save_dataset(dir, ds);
  err << "synth: wrote preset '" << a.preset << "' (" << ds.truth.size() << " Gaussians, " << ds.train.size()
      << " training views, " << ds.heldout.size() << " held-out views) to " << dir.string() << "\n";
  return 0;
}

int cmd_ae_train(const Args& a, std::ostream& err) {
  const TrainConfig config = resolve_config(a, err);
  if (a.data.empty()) throw InvalidParameter("ae-train: need --data");
  const Dataset ds = load_dataset(a.data);
  const Autoencoder ae = fit_autoencoder(ds, config);
  const fs::path path = out_dir(a) / "autoencoder.lstf";
  save_autoencoder(path, ae);
  err << "ae-train: final reconstruction MSE " << ae.final_loss << ", wrote " << path.string() << "\n";
  return 0;
}

int cmd_train(const Args& a, std::ostream& err) {
  TrainConfig config = resolve_config(a, err);
  if (a.data.empty()) throw InvalidParameter("train: need --data");
  if (a.stage < 0 || a.stage > 3) throw InvalidParameter("train: --stage must be 1, 2 or 3");
  const Dataset ds = load_dataset(a.data);
  const fs::path dir = out_dir(a);

  Autoencoder ae;
  if (!a.autoencoder.empty()) {
    ae = load_autoencoder(a.autoencoder);
  } else {
    ae = fit_autoencoder(ds, config);
    save_autoencoder(dir / "autoencoder.lstf", ae);
    err << "train: fitted autoencoder, MSE " << ae.final_loss << "\n";
  }
  const auto views = make_train_views(ds, ae);

  TrainState state;
  if (!a.resume.empty()) {
    state = load_checkpoint(a.resume);
    err << "train: resumed at iteration " << state.iteration << " (stage " << state.stage << ")\n";
  } else {
    state = make_train_state(a.init.empty() ? ds.init : load_scene(a.init));
  }
  save_config(dir / "config.txt", config);

  TrainHooks hooks;
  hooks.checkpoint_root = dir / "checkpoints";
  hooks.on_iteration = [&err](const TrainState& s) {
    if (s.stage_iteration % 100 != 0) return;
    double total = 0;
    for (auto it = s.history.rbegin(); it != s.history.rend(); ++it) {
      if (it->name == "total") {
        total = it->value;
        break;
      }
    }
    err << "train: stage " << s.stage << " iteration " << s.stage_iteration << " total loss " << total << "\n";
  };
  switch (a.stage) {
    case 1: train_stage1(state, views, config, hooks); break;
    case 2: train_stage2(state, views, config, hooks); break;
    case 3: train_stage3(state, views, config, hooks); break;
    default: train_all(state, views, config, hooks); break;
  }
  save_scene(state.scene, dir / "scene.ply");
  write_loss_log(dir / "loss_log.csv", state.history);
  save_checkpoint(dir / "final", state, config);
  err << "train: " << state.scene.size() << " Gaussians after " << state.iteration << " iterations; wrote "
      << (dir / "scene.ply").string() << "\n";
  return 0;
}

int cmd_render(const Args& a, std::ostream& err) {
  resolve_config(a, err);
  const GaussianScene scene = load_scene(a.scene);
  const auto cams = load_cameras(data_file(a, a.cameras, "cameras.json"));
  const Channels ch = parse_channels(a.channels);
  const fs::path dir = out_dir(a);
  for (std::size_t i = 0; i < cams.size(); ++i) {
    const RenderOutput r = render(scene, cams[i], ch);
    const std::string base = (dir / stem(i)).string();
    write_ppm(base + ".ppm", r.color);
    write_image_tensor(base + "_depth.lstf", r.depth);
    write_image_tensor(base + "_normal.lstf", r.normal);
    write_image_tensor(base + "_alpha.lstf", r.alpha);
    if (!r.lang.empty()) write_image_tensor(base + "_lang.lstf", r.lang);
    if (!r.ins.empty()) write_image_tensor(base + "_ins.lstf", r.ins);
  }
  err << "render: " << cams.size() << " views to " << dir.string() << "\n";
  return 0;
}

int cmd_query2d(const Args& a, std::ostream& out, std::ostream& err) {
  const TrainConfig config = resolve_config(a, err);
  const GaussianScene scene = load_scene(a.scene);
  const auto cams = load_cameras(data_file(a, a.cameras, "cameras.json"));
  const Autoencoder ae = autoencoder_of(a);
  const TextQuery q = embed_query(a.query, codebook_of(a));
  const double t = threshold_of(a, config);
  const fs::path dir = out_dir(a);
  for (std::size_t i = 0; i < cams.size(); ++i) {
    const RenderOutput r = render(scene, cams[i], Channels::Lang);
    const FloatImage score = relevancy_2d(r.lang, ae, q);
    const BoolImage mask = segment_2d(score, t);
    const std::string base = (dir / stem(i)).string();
    write_image_tensor(base + "_score.lstf", score);
    write_pgm(base + "_mask.pgm", mask);
    std::size_t on = 0;
    for (auto m : mask.data) on += m;
    out << "view " << i << ": " << on << " of " << mask.data.size() << " pixels >= " << t << "\n";
  }
  return 0;
}

int cmd_query3d(const Args& a, std::ostream& out, std::ostream& err) {
  const TrainConfig config = resolve_config(a, err);
  const GaussianScene scene = load_scene(a.scene);
  const Autoencoder ae = autoencoder_of(a);
  const TextQuery q = embed_query(a.query, codebook_of(a));
  const auto sel = query_3d(scene, ae, q, threshold_of(a, config));
  const fs::path path = out_dir(a) / "selection.ply";
  save_selection_ply(path, scene, sel);
  out << "query '" << q.token << "': " << sel.indices().size() << " of " << scene.size() << " Gaussians selected\n";
  return 0;
}

int cmd_seg_eval(const Args& a, std::ostream& out, std::ostream& err) {
  resolve_config(a, err);
  if (a.data.empty()) throw InvalidParameter("seg-eval: need --data");
  if (a.split != "heldout" && a.split != "train") throw InvalidParameter("seg-eval: --split must be heldout or train");
  const Dataset ds = load_dataset(a.data);
  const GaussianScene scene = load_scene(a.scene);
  const Autoencoder ae = autoencoder_of(a);
  const Codebook cb = a.codebook.empty() ? ds.codebook : load_codebook(a.codebook);
  const EvalReport report = evaluate_2d(scene, a.split == "train" ? ds.train : ds.heldout, cb, ae, ds.name);
  report.write_csv(out_dir(a) / "report_2d.csv");
  report.print_table(out);
  return 0;
}

int cmd_fscore_eval(const Args& a, std::ostream& out, std::ostream& err) {
  const TrainConfig config = resolve_config(a, err);
  const GaussianScene scene = load_scene(a.scene);
  const Autoencoder ae = autoencoder_of(a);
  const Codebook cb = codebook_of(a);
  const auto table = read_ply_vertices(data_file(a, a.cloud, "cloud.ply"));
  std::vector<double> cloud(3 * table.count);
  for (std::size_t i = 0; i < table.count; ++i) {
    cloud[3 * i] = table.column("x")[i];
    cloud[3 * i + 1] = table.column("y")[i];
    cloud[3 * i + 2] = table.column("z")[i];
  }
  const Tensor labels = read_tensor(data_file(a, a.cloud_labels, "cloud_labels.lstf"));
  if (labels.dtype != DType::Int32 || labels.i32.size() != table.count) {
    throw FormatError("fscore-eval: cloud labels must be one int32 per cloud point");
  }
  const std::string name = a.data.empty() ? fs::path(a.scene).stem().string() : fs::path(a.data).filename().string();
  const EvalReport report =
      evaluate_3d(scene, cloud, labels.i32, cb, ae, threshold_of(a, config), a.tau, name);
  report.write_csv(out_dir(a) / "report_3d.csv");
  report.print_table(out);
  return 0;
}

int cmd_remove(const Args& a, std::ostream& out, std::ostream& err) {
  const TrainConfig config = resolve_config(a, err);
  const GaussianScene scene = load_scene(a.scene);
  const Autoencoder ae = autoencoder_of(a);
  const TextQuery q = embed_query(a.query, codebook_of(a));
  const double t = threshold_of(a, config);
  const RemovalResult r = remove_object(scene, ae, q, t);
  const fs::path dir = out_dir(a);
  save_scene(r.scene, dir / "scene.ply");
  save_edit_manifest(dir / "edit.json", {"remove", q.token, t, r.removed, {}, r.used_hull});
  out << "remove '" << q.token << "': selected " << r.selected << ", removed " << r.removed.size() << " of "
      << scene.size() << (r.used_hull ? "" : " (degenerate selection, hull skipped)") << "\n";
  return 0;
}

int cmd_add(const Args& a, std::ostream& out, std::ostream& err) {
  const TrainConfig config = resolve_config(a, err);
  const GaussianScene src = load_scene(a.src);
  const GaussianScene dst = load_scene(a.dst);
  const Autoencoder ae = autoencoder_of(a);
  const TextQuery q = embed_query(a.query, codebook_of(a));
  const double t = threshold_of(a, config);
  const auto selection = query_3d(src, ae, q, t).indices();
  if (selection.empty()) throw NoMatchError("add: query '" + q.token + "' selected nothing in the source scene");
  SimilarityTransform tf;
  tf.translation = Vec3(a.translate[0], a.translate[1], a.translate[2]);
  const Vec3 axis(a.rotate[0], a.rotate[1], a.rotate[2]);
  if (!(axis.norm() > 0)) throw InvalidParameter("add: rotation axis must be nonzero");
  tf.rotation = Eigen::AngleAxisd(a.rotate[3] * 3.14159265358979323846 / 180.0, axis.normalized()).toRotationMatrix();
  tf.scale = a.scale;
  const TransplantResult r = transplant(src, selection, dst, tf);
  const fs::path dir = out_dir(a);
  save_scene(r.scene, dir / "scene.ply");
  save_edit_manifest(dir / "edit.json", {"add", q.token, t, {}, r.added, true});
  out << "add '" << q.token << "': copied " << r.added.size() << " Gaussians; destination now has " << r.scene.size()
      << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"langsurf: language-embedded surface Gaussian fields", "langsurf"};
  app.require_subcommand(1);
  app.footer(config_help());
  Args a;

  auto* synth = app.add_subcommand("synth", "build a preset scene with views, features and masks");
  synth->add_option("--preset", a.preset, "two-spheres, room-plane-boxes or plane")->capture_default_str();
  synth->add_option("--noise", a.noise, "feature noise sigma")->capture_default_str();

  auto* ae = app.add_subcommand("ae-train", "fit the feature autoencoder on pooled training features");
  ae->add_option("--data", a.data, "dataset directory from synth")->required();

  auto* train = app.add_subcommand("train", "run the three training stages");
  train->add_option("--data", a.data, "dataset directory from synth")->required();
  train->add_option("--autoencoder", a.autoencoder, "autoencoder tensor (fitted when omitted)");
  train->add_option("--stage", a.stage, "run a single stage (1, 2 or 3)");
  train->add_flag("--paper-schedule", a.paper_schedule, "7000 / 23000 / 10000 iterations");
  train->add_option("--resume", a.resume, "checkpoint directory to resume from");
  train->add_option("--init", a.init, "starting scene (default: the dataset's init.ply)");

  auto* rend = app.add_subcommand("render", "render maps for every camera");
  rend->add_option("--scene", a.scene, "scene PLY")->required();
  rend->add_option("--cameras", a.cameras, "cameras JSON");
  rend->add_option("--data", a.data, "dataset directory (for cameras.json)");
  rend->add_option("--channels", a.channels, "color, lang, ins or all")->capture_default_str();

  auto* q2 = app.add_subcommand("query2d", "relevancy maps and masks for a text query");
  q2->add_option("--scene", a.scene, "scene PLY")->required();
  q2->add_option("--cameras", a.cameras, "cameras JSON");
  q2->add_option("--data", a.data, "dataset directory (cameras.json, codebook.txt)");
  q2->add_option("--autoencoder", a.autoencoder, "autoencoder tensor")->required();
  q2->add_option("--codebook", a.codebook, "codebook text file");
  q2->add_option("--query", a.query, "query token")->required();
  q2->add_option("--threshold", a.threshold, "score threshold (default: query_threshold)");

  auto* q3 = app.add_subcommand("query3d", "select Gaussians matching a text query");
  q3->add_option("--scene", a.scene, "scene PLY")->required();
  q3->add_option("--data", a.data, "dataset directory (codebook.txt)");
  q3->add_option("--autoencoder", a.autoencoder, "autoencoder tensor")->required();
  q3->add_option("--codebook", a.codebook, "codebook text file");
  q3->add_option("--query", a.query, "query token")->required();
  q3->add_option("--threshold", a.threshold, "score threshold (default: query_threshold)");

  auto* seg = app.add_subcommand("seg-eval", "2D mIoU and localization accuracy");
  seg->add_option("--scene", a.scene, "scene PLY")->required();
  seg->add_option("--data", a.data, "dataset directory")->required();
  seg->add_option("--autoencoder", a.autoencoder, "autoencoder tensor")->required();
  seg->add_option("--codebook", a.codebook, "codebook text file (default: the dataset's)");
  seg->add_option("--split", a.split, "heldout or train")->capture_default_str();

  auto* fs3 = app.add_subcommand("fscore-eval", "3D semantic F-score against a labeled cloud");
  fs3->add_option("--scene", a.scene, "scene PLY")->required();
  fs3->add_option("--data", a.data, "dataset directory (cloud.ply, cloud_labels.lstf, codebook.txt)");
  fs3->add_option("--cloud", a.cloud, "labeled cloud PLY");
  fs3->add_option("--cloud-labels", a.cloud_labels, "int32 label tensor, one per cloud point");
  fs3->add_option("--autoencoder", a.autoencoder, "autoencoder tensor")->required();
  fs3->add_option("--codebook", a.codebook, "codebook text file");
  fs3->add_option("--threshold", a.threshold, "score threshold (default: query_threshold)");
  fs3->add_option("--tau", a.tau, "distance threshold")->capture_default_str();

  auto* rem = app.add_subcommand("remove", "delete the convex hull of a queried object");
  rem->add_option("--scene", a.scene, "scene PLY")->required();
  rem->add_option("--data", a.data, "dataset directory (codebook.txt)");
  rem->add_option("--autoencoder", a.autoencoder, "autoencoder tensor")->required();
  rem->add_option("--codebook", a.codebook, "codebook text file");
  rem->add_option("--query", a.query, "query token")->required();
  rem->add_option("--threshold", a.threshold, "score threshold (default: query_threshold)");

  auto* add = app.add_subcommand("add", "copy a queried object into another scene");
  add->add_option("--src", a.src, "source scene PLY")->required();
  add->add_option("--dst", a.dst, "destination scene PLY")->required();
  add->add_option("--data", a.data, "dataset directory (codebook.txt)");
  add->add_option("--autoencoder", a.autoencoder, "autoencoder tensor")->required();
  add->add_option("--codebook", a.codebook, "codebook text file");
  add->add_option("--query", a.query, "query token")->required();
  add->add_option("--threshold", a.threshold, "score threshold (default: query_threshold)");
  add->add_option("--translate", a.translate, "translation x y z")->expected(3);
  add->add_option("--rotate", a.rotate, "axis x y z and angle in degrees")->expected(4);
  add->add_option("--scale", a.scale, "uniform scale")->capture_default_str();

  for (auto* sub : app.get_subcommands({})) add_common(sub, a.common);

  std::vector<std::string> owned = {"langsurf"};
  owned.insert(owned.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : owned) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return 2;
  }

  const CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    if (name == "synth") return cmd_synth(a, err);
    if (name == "ae-train") return cmd_ae_train(a, err);
    if (name == "train") return cmd_train(a, err);
    if (name == "render") return cmd_render(a, err);
    if (name == "query2d") return cmd_query2d(a, out, err);
    if (name == "query3d") return cmd_query3d(a, out, err);
    if (name == "seg-eval") return cmd_seg_eval(a, out, err);
    if (name == "fscore-eval") return cmd_fscore_eval(a, out, err);
    if (name == "remove") return cmd_remove(a, out, err);
    if (name == "add") return cmd_add(a, out, err);
  } catch (const std::exception& e) {
    const std::string what = e.what();
    err << "error: " << (what.rfind(name + ":", 0) == 0 ? "" : name + ": ") << what << "\n";
    return 1;
  }
  err << app.help();
  return 2;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace langsurf::cli
