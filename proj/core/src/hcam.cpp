#include "langsurf/hcam.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "langsurf/error.hpp"
#include "langsurf/tensor_io.hpp"

namespace langsurf {

char hierarchy_letter(Hierarchy h) {
  switch (h) {
    case Hierarchy::Small: return 's';
    case Hierarchy::Medium: return 'm';
    case Hierarchy::Large: return 'l';
  }
  return '?';
}

Hierarchy hierarchy_from_letter(char c) {
  switch (c) {
    case 's': return Hierarchy::Small;
    case 'm': return Hierarchy::Medium;
    case 'l': return Hierarchy::Large;
    default: throw InvalidParameter(std::string("unknown hierarchy '") + c + "' (expected s, m or l)");
  }
}

LabelImage densify_mask_ids(const LabelImage& ids) {
  std::map<std::int32_t, std::int32_t> remap;
  for (auto v : ids.data) {
    if (v < 0) throw FormatError("mask ids must be non-negative, found " + std::to_string(v));
    if (v > 0) remap.emplace(v, 0);
  }
  std::int32_t next = 1;
  for (auto& [from, to] : remap) to = next++;
  LabelImage out = ids;
  for (auto& v : out.data) {
    if (v > 0) v = remap[v];
  }
  return out;
}

int mask_count(const LabelImage& ids) {
  std::int32_t m = 0;
  for (auto v : ids.data) m = std::max(m, v);
  return m;
}

std::size_t Codebook::index_of(const std::string& token) const {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == token) return i;
  }
  std::string available;
  for (const auto& t : tokens) available += (available.empty() ? "" : ", ") + t;
  throw LookupError("unknown query token '" + token + "'; available: " + available);
}

Codebook load_codebook(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  Codebook cb;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string token;
    if (!(ls >> token)) continue;
    std::vector<double> v;
    std::string word;
    while (ls >> word) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(word, &used));
        if (used != word.size()) throw std::invalid_argument(word);
      } catch (const std::exception&) {
        throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + word + "'");
      }
    }
    if (v.empty()) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": entry has no values");
    if (!cb.vectors.empty() && static_cast<int>(v.size()) != cb.dim()) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(cb.dim()) + " values, got " + std::to_string(v.size()));
    }
    cb.tokens.push_back(token);
    cb.vectors.push_back(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  }
  return cb;
}

void save_codebook(const std::filesystem::path& path, const Codebook& codebook) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out.precision(17);
  for (std::size_t i = 0; i < codebook.size(); ++i) {
    out << codebook.tokens[i];
    for (auto v : codebook.vectors[i]) out << ' ' << v;
    out << '\n';
  }
}

FeatureImage load_feature_image(const std::filesystem::path& path, int expect_h, int expect_w) {
  const Tensor t = read_tensor(path);
  if (t.dtype != DType::Float32) throw FormatError(path.string() + ": feature tensor must be float32");
  if (t.dims.size() != 3) {
    throw FormatError(path.string() + ": feature tensor must have dims (H, W, D), got rank " +
                      std::to_string(t.dims.size()));
  }
  FeatureImage img = read_image_tensor(path);
  if (img.channels < 3) throw FormatError(path.string() + ": feature dim D must be >= 3");
  if ((expect_h > 0 && img.height != expect_h) || (expect_w > 0 && img.width != expect_w)) {
    throw ShapeError(path.string() + ": feature map is " + std::to_string(img.height) + "x" +
                     std::to_string(img.width) + ", paired view is " + std::to_string(expect_h) + "x" +
                     std::to_string(expect_w));
  }
  return img;
}

MaskSet load_mask_set(std::span<const std::filesystem::path> paths, int expect_h, int expect_w) {
  if (paths.size() != 3) throw InvalidParameter("load_mask_set: expected 3 paths (s, m, l)");
  MaskSet set;
  for (std::size_t k = 0; k < 3; ++k) {
    LabelImage raw = read_label_tensor(paths[k]);
    if ((expect_h > 0 && raw.height != expect_h) || (expect_w > 0 && raw.width != expect_w)) {
      throw ShapeError(paths[k].string() + ": mask map size does not match the paired view");
    }
    if (k > 0) require_same_hw(raw, set.levels[0], "load_mask_set");
    set.levels[k] = densify_mask_ids(raw);
  }
  return set;
}

FeatureImage mask_pool(const FeatureImage& feature, const LabelImage& masks) {
  require_same_hw(feature, masks, "mask_pool");
  const int d = feature.channels;
  const int m = mask_count(masks);
  std::vector<double> sums(static_cast<std::size_t>(m + 1) * d, 0.0);
  std::vector<std::size_t> counts(static_cast<std::size_t>(m + 1), 0);
  for (std::size_t p = 0; p < feature.pixel_count(); ++p) {
    const auto id = static_cast<std::size_t>(masks.data[p]);
    if (id == 0) continue;
    ++counts[id];
    const auto px = feature.pixel(p);
    for (int c = 0; c < d; ++c) sums[id * d + c] += px[static_cast<std::size_t>(c)];
  }
  FeatureImage out = feature;
  for (std::size_t p = 0; p < feature.pixel_count(); ++p) {
    const auto id = static_cast<std::size_t>(masks.data[p]);
    if (id == 0) continue;
    auto px = out.pixel(p);
    for (int c = 0; c < d; ++c) px[static_cast<std::size_t>(c)] = sums[id * d + c] / static_cast<double>(counts[id]);
  }
  return out;
}

PooledFeatureImage hierarchical_mask_pool(const FeatureImage& feature, const MaskSet& masks) {
  PooledFeatureImage out;
  for (auto h : kHierarchies) out.pooled[static_cast<int>(h)] = mask_pool(feature, masks.at(h));
  return out;
}

Autoencoder Autoencoder::identity3() {
  Autoencoder ae;
  ae.enc_w = Eigen::MatrixXd::Identity(3, 3);
  ae.dec_w = Eigen::MatrixXd::Identity(3, 3);
  ae.dec_b = Eigen::VectorXd::Zero(3);
  return ae;
}

Autoencoder Autoencoder::zeros(int dim) {
  Autoencoder ae;
  ae.enc_w = Eigen::MatrixXd::Zero(3, dim);
  ae.dec_w = Eigen::MatrixXd::Zero(dim, 3);
  ae.dec_b = Eigen::VectorXd::Zero(dim);
  return ae;
}

namespace {

Eigen::MatrixXd stack_columns(std::span<const Eigen::VectorXd> samples) {
  const auto d = samples.front().size();
  Eigen::MatrixXd x(d, static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].size() != d) throw ShapeError("ae_train: samples differ in dimension");
    x.col(static_cast<Eigen::Index>(i)) = samples[i];
  }
  return x;
}

double mse_of(const Autoencoder& ae, const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd z = (ae.enc_w * x).colwise() + ae.enc_b;
  const Eigen::MatrixXd r = ((ae.dec_w * z).colwise() + ae.dec_b) - x;
  return r.squaredNorm() / static_cast<double>(r.size());
}

void require_dim(const Autoencoder& model, Eigen::Index d, const char* what) {
  if (d != model.dim()) {
    throw ShapeError(std::string(what) + ": feature dim " + std::to_string(d) +
                     " does not match autoencoder dim " + std::to_string(model.dim()));
  }
}

}  // namespace

Autoencoder ae_train(std::span<const Eigen::VectorXd> samples, const AeTrainOptions& options) {
  if (samples.empty()) throw InvalidParameter("ae_train: no samples");
  if (samples.size() < 4) throw InvalidParameter("ae_train: need at least 4 samples");
  if (options.epochs < 0 || !(options.lr > 0)) throw InvalidParameter("ae_train: bad epochs or lr");
  const Eigen::MatrixXd x = stack_columns(samples);
  const auto d = x.rows();
  if (d < 3) throw InvalidParameter("ae_train: feature dim must be >= 3");
  if (!x.allFinite()) throw InvalidParameter("ae_train: non-finite samples");

  Autoencoder ae = Autoencoder::zeros(static_cast<int>(d));
  switch (options.init) {
    case AeInit::Identity:
      if (d != 3) throw InvalidParameter("ae_train: identity init needs D = 3");
      ae = Autoencoder::identity3();
      break;
    case AeInit::Pca: {
      // Uncentered: the zero feature maps to the zero latent, which is what
      // compositing blends against where alpha < 1.
      const Eigen::MatrixXd moment = x * x.transpose() / static_cast<double>(x.cols());
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(moment);
      // Eigenvalues ascend; take the top three directions.
      const Eigen::MatrixXd u = eig.eigenvectors().rightCols(3).rowwise().reverse();
      ae.enc_w = u.transpose();
      ae.dec_w = u;
      break;
    }
    case AeInit::Random: {
      std::mt19937_64 rng(options.seed);
      std::normal_distribution<double> n01(0.0, 1.0);
      const double s = 1.0 / std::sqrt(static_cast<double>(d));
      for (Eigen::Index i = 0; i < ae.enc_w.size(); ++i) ae.enc_w.data()[i] = s * n01(rng);
      for (Eigen::Index i = 0; i < ae.dec_w.size(); ++i) ae.dec_w.data()[i] = s * n01(rng);
      break;
    }
  }

  const double norm = 2.0 / static_cast<double>(x.size());
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    const Eigen::MatrixXd z = (ae.enc_w * x).colwise() + ae.enc_b;
    const Eigen::MatrixXd r = ((ae.dec_w * z).colwise() + ae.dec_b) - x;
    ae.loss_history.push_back(r.squaredNorm() / static_cast<double>(r.size()));
    const Eigen::MatrixXd g_y = norm * r;
    const Eigen::MatrixXd g_z = ae.dec_w.transpose() * g_y;
    const Eigen::MatrixXd g_dec_w = g_y * z.transpose();
    const Eigen::VectorXd g_dec_b = g_y.rowwise().sum();
    const Eigen::MatrixXd g_enc_w = g_z * x.transpose();
    const Eigen::Vector3d g_enc_b = g_z.rowwise().sum();
    ae.dec_w -= options.lr * g_dec_w;
    ae.dec_b -= options.lr * g_dec_b;
    ae.enc_w -= options.lr * g_enc_w;
    ae.enc_b -= options.lr * g_enc_b;
  }
  ae.final_loss = mse_of(ae, x);
  ae.loss_history.push_back(ae.final_loss);
  if (!std::isfinite(ae.final_loss)) throw NumericError("ae_train: loss diverged; lower the learning rate");
  return ae;
}

double ae_reconstruction_mse(const Autoencoder& model, std::span<const Eigen::VectorXd> samples) {
  if (samples.empty()) throw InvalidParameter("ae_reconstruction_mse: no samples");
  const Eigen::MatrixXd x = stack_columns(samples);
  require_dim(model, x.rows(), "ae_reconstruction_mse");
  return mse_of(model, x);
}

Eigen::Vector3d ae_encode(const Autoencoder& model, const Eigen::VectorXd& x) {
  require_dim(model, x.size(), "ae_encode");
  return model.enc_w * x + model.enc_b;
}

Eigen::VectorXd ae_decode(const Autoencoder& model, const Eigen::Vector3d& z) {
  return model.dec_w * z + model.dec_b;
}

FloatImage ae_encode(const Autoencoder& model, const FeatureImage& map) {
  require_dim(model, map.channels, "ae_encode");
  FloatImage out(map.height, map.width, 3);
  for (std::size_t p = 0; p < map.pixel_count(); ++p) {
    const auto px = map.pixel(p);
    const Eigen::Map<const Eigen::VectorXd> v(px.data(), map.channels);
    const Eigen::Vector3d z = model.enc_w * v + model.enc_b;
    for (int c = 0; c < 3; ++c) out.data[3 * p + c] = z[c];
  }
  return out;
}

FeatureImage ae_decode(const Autoencoder& model, const FloatImage& latent) {
  if (latent.channels != 3) throw ShapeError("ae_decode: latent map must have 3 channels");
  const int d = model.dim();
  FeatureImage out(latent.height, latent.width, d);
  for (std::size_t p = 0; p < latent.pixel_count(); ++p) {
    const Eigen::Vector3d z(latent.data[3 * p], latent.data[3 * p + 1], latent.data[3 * p + 2]);
    Eigen::Map<Eigen::VectorXd>(out.data.data() + p * d, d) = model.dec_w * z + model.dec_b;
  }
  return out;
}

void save_autoencoder(const std::filesystem::path& path, const Autoencoder& model) {
  const int d = model.dim();
  std::vector<double> packed;
  packed.reserve(static_cast<std::size_t>(7 * d + 3));
  for (Eigen::Index r = 0; r < 3; ++r)
    for (Eigen::Index c = 0; c < d; ++c) packed.push_back(model.enc_w(r, c));
  for (int k = 0; k < 3; ++k) packed.push_back(model.enc_b[k]);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < 3; ++c) packed.push_back(model.dec_w(r, c));
  for (Eigen::Index r = 0; r < d; ++r) packed.push_back(model.dec_b[r]);
  write_tensor(path, make_f32({static_cast<std::uint32_t>(packed.size())}, packed));
}

Autoencoder load_autoencoder(const std::filesystem::path& path) {
  const Tensor t = read_tensor(path);
  if (t.dtype != DType::Float32 || t.dims.size() != 1 || t.dims[0] < 24 || (t.dims[0] - 3) % 7 != 0) {
    throw FormatError(path.string() + ": not a packed autoencoder tensor (length 7D + 3)");
  }
  const int d = static_cast<int>((t.dims[0] - 3) / 7);
  Autoencoder ae = Autoencoder::zeros(d);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < 3; ++r)
    for (Eigen::Index c = 0; c < d; ++c) ae.enc_w(r, c) = t.f32[k++];
  for (int c = 0; c < 3; ++c) ae.enc_b[c] = t.f32[k++];
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < 3; ++c) ae.dec_w(r, c) = t.f32[k++];
  for (Eigen::Index r = 0; r < d; ++r) ae.dec_b[r] = t.f32[k++];
  return ae;
}

std::vector<std::array<FloatImage, 3>> build_targets(std::span<const FeatureView> views,
                                                     const Autoencoder& model) {
  std::vector<std::array<FloatImage, 3>> out;
  out.reserve(views.size());
  for (const auto& v : views) {
    const PooledFeatureImage pooled = hierarchical_mask_pool(v.feature, v.masks);
    std::array<FloatImage, 3> targets;
    for (int h = 0; h < 3; ++h) targets[static_cast<std::size_t>(h)] = ae_encode(model, pooled.pooled[static_cast<std::size_t>(h)]);
    out.push_back(std::move(targets));
  }
  return out;
}

std::vector<Eigen::VectorXd> pooled_samples(std::span<const FeatureView> views, Hierarchy level,
                                            std::size_t stride) {
  std::vector<Eigen::VectorXd> out;
  stride = std::max<std::size_t>(1, stride);
  for (const auto& v : views) {
    const FeatureImage pooled = mask_pool(v.feature, v.masks.at(level));
    for (std::size_t p = 0; p < pooled.pixel_count(); p += stride) {
      const auto px = pooled.pixel(p);
      out.emplace_back(Eigen::Map<const Eigen::VectorXd>(px.data(), pooled.channels));
    }
  }
  return out;
}

LabelImage connected_components(const LabelImage& ids) {
  LabelImage out(ids.height, ids.width, 1, 0);
  std::int32_t next = 1;
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < ids.height; ++y) {
    for (int x = 0; x < ids.width; ++x) {
      const auto id = ids.at(x, y);
      if (id == 0 || out.at(x, y) != 0) continue;
      const std::int32_t comp = next++;
      out.at(x, y) = comp;
      stack.assign(1, {x, y});
      while (!stack.empty()) {
        const auto [cx, cy] = stack.back();
        stack.pop_back();
        constexpr int kDx[] = {1, -1, 0, 0};
        constexpr int kDy[] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const int nx = cx + kDx[k], ny = cy + kDy[k];
          if (nx < 0 || ny < 0 || nx >= ids.width || ny >= ids.height) continue;
          if (ids.at(nx, ny) != id || out.at(nx, ny) != 0) continue;
          out.at(nx, ny) = comp;
          stack.emplace_back(nx, ny);
        }
      }
    }
  }
  return out;
}

SyntheticFeatureView make_synthetic_features(const GaussianScene& scene,
                                             std::span<const std::int32_t> labels,
                                             std::span<const std::int32_t> object_ids,
                                             const Camera& camera, const Codebook& codebook,
                                             double noise_sigma, std::uint64_t seed) {
  if (labels.size() != scene.size() || object_ids.size() != scene.size()) {
    throw ShapeError("make_synthetic_features: need one label and object id per Gaussian");
  }
  if (codebook.size() == 0) throw InvalidParameter("make_synthetic_features: empty codebook");
  for (auto l : labels) {
    if (l < 1 || static_cast<std::size_t>(l) > codebook.size()) {
      throw LookupError("make_synthetic_features: label " + std::to_string(l) + " missing from codebook");
    }
  }
  const RenderOutput r = render(scene, camera, Channels::Color);
  const int h = camera.height, w = camera.width, d = codebook.dim();
  SyntheticFeatureView out;
  out.label_map = LabelImage(h, w, 1, 0);
  out.object_map = LabelImage(h, w, 1, 0);
  out.feature = FeatureImage(h, w, d);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t p = 0; p < out.label_map.pixel_count(); ++p) {
    const auto top = r.top_index.data[p];
    if (top >= 0 && r.alpha.data[p] >= 0.5) {
      out.label_map.data[p] = labels[static_cast<std::size_t>(top)];
      out.object_map.data[p] = object_ids[static_cast<std::size_t>(top)];
    }
    auto px = out.feature.pixel(p);
    const auto label = out.label_map.data[p];
    for (int c = 0; c < d; ++c) {
      const double base = label > 0 ? codebook.vectors[static_cast<std::size_t>(label - 1)][c] : 0.0;
      px[static_cast<std::size_t>(c)] = base + (noise_sigma > 0 ? noise_sigma * noise(rng) : 0.0);
    }
  }
  out.masks.at(Hierarchy::Small) = connected_components(out.object_map);
  out.masks.at(Hierarchy::Medium) = densify_mask_ids(out.object_map);
  out.masks.at(Hierarchy::Large) = densify_mask_ids(out.label_map);
  return out;
}

}  // namespace langsurf
