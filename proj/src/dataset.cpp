#include "ntmm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ntmm/rng.hpp"
#include "ntmm/serialize.hpp"

namespace ntmm {

namespace {

constexpr std::uint32_t kDatasetMagic = 0x5344544Eu;  // "NTDS"
constexpr std::uint32_t kDatasetVersion = 1;

// Columns of the projection matrix are orthonormalized when the modality
// dimension allows it, so latent distances survive the projection; otherwise
// columns are only normalized.
std::vector<double> projection_matrix(int rows, int cols, Rng& rng) {
  std::vector<std::vector<double>> col(static_cast<std::size_t>(cols), std::vector<double>(static_cast<std::size_t>(rows)));
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) col[static_cast<std::size_t>(c)][static_cast<std::size_t>(r)] = rng.gaussian();
  const bool orthonormalize = rows >= cols;
  for (int c = 0; c < cols; ++c) {
    auto& v = col[static_cast<std::size_t>(c)];
    if (orthonormalize) {
      for (int prev = 0; prev < c; ++prev) {
        const auto& u = col[static_cast<std::size_t>(prev)];
        double dot = 0.0;
        for (int r = 0; r < rows; ++r) dot += v[static_cast<std::size_t>(r)] * u[static_cast<std::size_t>(r)];
        for (int r = 0; r < rows; ++r) v[static_cast<std::size_t>(r)] -= dot * u[static_cast<std::size_t>(r)];
      }
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-12) throw std::runtime_error("generate: degenerate projection column");
    for (double& x : v) x /= norm;
  }
  std::vector<double> flat(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) flat[static_cast<std::size_t>(r) * cols + c] = col[static_cast<std::size_t>(c)][static_cast<std::size_t>(r)];
  return flat;
}

std::vector<double> project(const std::vector<double>& a, int rows, int cols, const std::vector<double>& u) {
  std::vector<double> out(static_cast<std::size_t>(rows), 0.0);
  for (int r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int c = 0; c < cols; ++c) s += a[static_cast<std::size_t>(r) * cols + c] * u[static_cast<std::size_t>(c)];
    out[static_cast<std::size_t>(r)] = s;
  }
  return out;
}

}  // namespace

std::string to_string(LabelNoiseMode mode) {
  switch (mode) {
    case LabelNoiseMode::kNone: return "none";
    case LabelNoiseMode::kSymmetric: return "symmetric";
    case LabelNoiseMode::kAsymmetric: return "asymmetric";
  }
  return "none";
}

LabelNoiseMode label_noise_mode_from_string(const std::string& s) {
  if (s == "none") return LabelNoiseMode::kNone;
  if (s == "symmetric") return LabelNoiseMode::kSymmetric;
  if (s == "asymmetric") return LabelNoiseMode::kAsymmetric;
  throw std::invalid_argument("unknown label noise mode '" + s + "'");
}

void NoiseConfig::validate() const {
  if (label_rate < 0.0 || label_rate > 1.0) throw std::invalid_argument("noise config: label_rate outside [0,1]");
  if (correspondence_rate < 0.0 || correspondence_rate > 1.0)
    throw std::invalid_argument("noise config: correspondence_rate outside [0,1]");
}

void GeneratorConfig::validate() const {
  if (K < 2) throw std::invalid_argument("generator config: K must be >= 2");
  if (per_class < 1) throw std::invalid_argument("generator config: per_class must be >= 1");
  if (d_v < 2 || d_a < 2) throw std::invalid_argument("generator config: modality dims must be >= 2");
  if (class_separation < 0.0) throw std::invalid_argument("generator config: class_separation must be >= 0");
  if (modality_correlation < 0.0 || modality_correlation > 1.0)
    throw std::invalid_argument("generator config: modality_correlation outside [0,1]");
}

MultimodalDataset generate(const GeneratorConfig& config) {
  config.validate();
  Rng rng(config.seed);

  const int L = config.K;  // latent dimension: one axis per class
  // Means at (sep/sqrt(2))*e_k are pairwise class_separation apart with
  // unit within-class std.
  const double mean_scale = config.class_separation / std::sqrt(2.0);
  const double rho = config.modality_correlation;
  const double w_shared = std::sqrt(rho);
  const double w_private = std::sqrt(1.0 - rho);
  const double obs_noise = 0.1;

  const auto A_v = projection_matrix(config.d_v, L, rng);
  const auto A_a = projection_matrix(config.d_a, L, rng);

  MultimodalDataset ds;
  ds.K = config.K;
  ds.d_v = config.d_v;
  ds.d_a = config.d_a;

  std::int64_t next_id = 0;
  auto draw_sample = [&](int k) {
    std::vector<double> latent_v(static_cast<std::size_t>(L));
    std::vector<double> latent_a(static_cast<std::size_t>(L));
    for (int j = 0; j < L; ++j) {
      const double shared = rng.gaussian();
      const double pv = rng.gaussian();
      const double pa = rng.gaussian();
      const double mean_j = (j == k) ? mean_scale : 0.0;
      latent_v[static_cast<std::size_t>(j)] = mean_j + w_shared * shared + w_private * pv;
      latent_a[static_cast<std::size_t>(j)] = mean_j + w_shared * shared + w_private * pa;
    }
    MultimodalSample s;
    s.visual = project(A_v, config.d_v, L, latent_v);
    s.audio = project(A_a, config.d_a, L, latent_a);
    for (double& x : s.visual) x += obs_noise * rng.gaussian();
    for (double& x : s.audio) x += obs_noise * rng.gaussian();
    s.true_label = k;
    s.observed_label = k;
    s.correspondence_clean = true;
    s.id = next_id++;
    return s;
  };

  for (int k = 0; k < config.K; ++k)
    for (int i = 0; i < config.per_class; ++i) ds.train.push_back(draw_sample(k));
  const int per_class_test = std::max(1, config.per_class / 4);
  for (int k = 0; k < config.K; ++k)
    for (int i = 0; i < per_class_test; ++i) ds.test.push_back(draw_sample(k));
  return ds;
}

std::vector<LabelFlip> inject_label_noise(MultimodalDataset& dataset, LabelNoiseMode mode, double rate,
                                          std::uint64_t seed) {
  if (rate < 0.0 || rate > 1.0) throw std::invalid_argument("inject_label_noise: rate outside [0,1]");
  if (mode == LabelNoiseMode::kNone) return {};
  if (dataset.label_noise_applied) throw std::logic_error("inject_label_noise: label noise already applied");
  dataset.label_noise_applied = true;

  const int n = static_cast<int>(dataset.train.size());
  const int flips = static_cast<int>(std::llround(rate * n));
  if (flips == 0) return {};
  if (dataset.K < 2) throw std::invalid_argument("inject_label_noise: need K >= 2 to flip labels");

  Rng rng(seed);
  std::vector<int> selected = rng.sample_without_replacement(n, flips);
  std::sort(selected.begin(), selected.end());

  std::vector<LabelFlip> log;
  log.reserve(selected.size());
  for (int idx : selected) {
    MultimodalSample& s = dataset.train[static_cast<std::size_t>(idx)];
    const int old_label = s.observed_label;
    int new_label;
    if (mode == LabelNoiseMode::kSymmetric) {
      new_label = (old_label + 1 + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(dataset.K - 1)))) %
                  dataset.K;
    } else {
      new_label = (old_label + 1) % dataset.K;
    }
    s.observed_label = new_label;
    log.push_back({s.id, old_label, new_label});
  }
  return log;
}

std::vector<AudioSwap> inject_correspondence_noise(MultimodalDataset& dataset, double rate, std::uint64_t seed,
                                                   const std::vector<std::int64_t>& forbidden) {
  if (rate < 0.0 || rate > 1.0) throw std::invalid_argument("inject_correspondence_noise: rate outside [0,1]");
  if (dataset.correspondence_noise_applied)
    throw std::logic_error("inject_correspondence_noise: correspondence noise already applied");
  dataset.correspondence_noise_applied = true;

  const int n = static_cast<int>(dataset.train.size());
  const int swaps = static_cast<int>(std::llround(rate * n));
  if (swaps == 0) return {};
  if (dataset.K < 2) throw std::invalid_argument("inject_correspondence_noise: no cross-class donor exists with K < 2");

  // Every sample needs at least one sample of another true class to donate.
  std::vector<int> class_counts(static_cast<std::size_t>(dataset.K), 0);
  for (const auto& s : dataset.train) ++class_counts[static_cast<std::size_t>(s.true_label)];
  for (const auto& s : dataset.train) {
    if (class_counts[static_cast<std::size_t>(s.true_label)] == n)
      throw std::invalid_argument("inject_correspondence_noise: no cross-class donor exists");
  }

  Rng rng(seed);
  std::vector<int> eligible;
  if (forbidden.empty()) {
    eligible.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) eligible[static_cast<std::size_t>(i)] = i;
  } else {
    std::vector<char> blocked(static_cast<std::size_t>(n), 0);
    for (std::size_t i = 0; i < dataset.train.size(); ++i) {
      for (std::int64_t id : forbidden)
        if (dataset.train[i].id == id) blocked[i] = 1;
    }
    for (int i = 0; i < n; ++i)
      if (!blocked[static_cast<std::size_t>(i)]) eligible.push_back(i);
  }
  if (static_cast<int>(eligible.size()) < swaps)
    throw std::invalid_argument("inject_correspondence_noise: not enough eligible samples for requested rate");

  rng.shuffle(eligible);
  std::vector<int> selected(eligible.begin(), eligible.begin() + swaps);
  std::sort(selected.begin(), selected.end());

  // Donors always contribute their pre-injection audio so swaps never chain.
  std::vector<std::vector<double>> original_audio;
  original_audio.reserve(dataset.train.size());
  for (const auto& s : dataset.train) original_audio.push_back(s.audio);

  std::vector<AudioSwap> log;
  log.reserve(selected.size());
  for (int idx : selected) {
    MultimodalSample& s = dataset.train[static_cast<std::size_t>(idx)];
    int donor;
    do {
      donor = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(n)));
    } while (dataset.train[static_cast<std::size_t>(donor)].true_label == s.true_label);
    s.audio = original_audio[static_cast<std::size_t>(donor)];
    s.correspondence_clean = false;
    log.push_back({s.id, dataset.train[static_cast<std::size_t>(donor)].id});
  }
  return log;
}

NoiseInjectionLog apply_noise(MultimodalDataset& dataset, const NoiseConfig& config) {
  config.validate();
  NoiseInjectionLog log;
  log.label_flips = inject_label_noise(dataset, config.label_mode, config.label_rate, config.seed);
  std::vector<std::int64_t> forbidden;
  if (!config.allow_overlap)
    for (const auto& f : log.label_flips) forbidden.push_back(f.sample_id);
  if (config.correspondence_rate > 0.0) {
    log.audio_swaps = inject_correspondence_noise(dataset, config.correspondence_rate, config.seed + 1, forbidden);
  }
  return log;
}

NoiseAudit audit_noise(const MultimodalDataset& dataset) {
  NoiseAudit audit;
  for (const auto& s : dataset.train) {
    if (s.observed_label != s.true_label) {
      ++audit.label_flips;
      ++audit.flip_histogram[{s.true_label, s.observed_label}];
    }
    if (!s.correspondence_clean) ++audit.audio_swaps;
  }
  const double n = dataset.train.empty() ? 1.0 : static_cast<double>(dataset.train.size());
  audit.achieved_label_rate = static_cast<double>(audit.label_flips) / n;
  audit.achieved_correspondence_rate = static_cast<double>(audit.audio_swaps) / n;
  return audit;
}

void save(const MultimodalDataset& dataset, const std::filesystem::path& path) {
  BinWriter w;
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(dataset.K));
  w.u32(static_cast<std::uint32_t>(dataset.d_v));
  w.u32(static_cast<std::uint32_t>(dataset.d_a));
  w.boolean(dataset.label_noise_applied);
  w.boolean(dataset.correspondence_noise_applied);
  auto write_split = [&](const std::vector<MultimodalSample>& split) {
    w.u64(split.size());
    for (const auto& s : split) {
      w.i64(s.id);
      w.u32(static_cast<std::uint32_t>(s.true_label));
      w.u32(static_cast<std::uint32_t>(s.observed_label));
      w.boolean(s.correspondence_clean);
      w.f64_vec(s.visual);
      w.f64_vec(s.audio);
    }
  };
  write_split(dataset.train);
  write_split(dataset.test);
  w.write_file(path, kDatasetMagic);
}

MultimodalDataset load(const std::filesystem::path& path) {
  BinReader r(path, kDatasetMagic);
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion) {
    throw std::runtime_error("dataset: unsupported format version " + std::to_string(version) + " in '" +
                             path.string() + "'");
  }
  MultimodalDataset ds;
  ds.K = static_cast<int>(r.u32());
  ds.d_v = static_cast<int>(r.u32());
  ds.d_a = static_cast<int>(r.u32());
  ds.label_noise_applied = r.boolean();
  ds.correspondence_noise_applied = r.boolean();
  auto read_split = [&](std::vector<MultimodalSample>& split) {
    const std::uint64_t count = r.u64();
    split.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      MultimodalSample s;
      s.id = r.i64();
      s.true_label = static_cast<int>(r.u32());
      s.observed_label = static_cast<int>(r.u32());
      s.correspondence_clean = r.boolean();
      s.visual = r.f64_vec();
      s.audio = r.f64_vec();
      if (static_cast<int>(s.visual.size()) != ds.d_v || static_cast<int>(s.audio.size()) != ds.d_a)
        throw std::runtime_error("dataset: sample dims disagree with header in '" + path.string() + "'");
      split.push_back(std::move(s));
    }
  };
  read_split(ds.train);
  read_split(ds.test);
  return ds;
}

Tensor visual_matrix(const std::vector<MultimodalSample>& samples) {
  if (samples.empty()) return Tensor({0, 0});
  const int n = static_cast<int>(samples.size());
  const int d = static_cast<int>(samples[0].visual.size());
  Tensor out({n, d});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out.at(i, j) = samples[static_cast<std::size_t>(i)].visual[static_cast<std::size_t>(j)];
  return out;
}

Tensor audio_matrix(const std::vector<MultimodalSample>& samples) {
  if (samples.empty()) return Tensor({0, 0});
  const int n = static_cast<int>(samples.size());
  const int d = static_cast<int>(samples[0].audio.size());
  Tensor out({n, d});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out.at(i, j) = samples[static_cast<std::size_t>(i)].audio[static_cast<std::size_t>(j)];
  return out;
}

std::vector<int> observed_labels(const std::vector<MultimodalSample>& samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.observed_label);
  return out;
}

std::vector<int> true_labels(const std::vector<MultimodalSample>& samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.true_label);
  return out;
}

}  // namespace ntmm
