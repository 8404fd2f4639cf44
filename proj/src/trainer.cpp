#include "ntmm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ntmm/correction.hpp"
#include "ntmm/rng.hpp"

namespace ntmm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Independent deterministic stream per (seed, epoch, role) so optional
// phases never shift each other's draws.
std::uint64_t stream_seed(std::uint64_t seed, int epoch, int role) {
  return seed ^ (0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(epoch) * 8 + static_cast<std::uint64_t>(role) + 1));
}

Tensor slice_rows(const Tensor& m, const std::vector<int>& idx) {
  Tensor out({static_cast<int>(idx.size()), m.cols()});
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (int c = 0; c < m.cols(); ++c) out.at(static_cast<int>(r), c) = m.at(idx[r], c);
  return out;
}

Tensor batch_matrix(const std::vector<MultimodalSample>& samples, const std::vector<int>& idx, Modality m) {
  const auto& first = (m == Modality::kVisual) ? samples[0].visual : samples[0].audio;
  Tensor out({static_cast<int>(idx.size()), static_cast<int>(first.size())});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto& v = (m == Modality::kVisual) ? samples[static_cast<std::size_t>(idx[r])].visual
                                             : samples[static_cast<std::size_t>(idx[r])].audio;
    for (std::size_t c = 0; c < v.size(); ++c) out.at(static_cast<int>(r), static_cast<int>(c)) = v[c];
  }
  return out;
}

std::vector<int> gather(const std::vector<int>& values, const std::vector<int>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(values[static_cast<std::size_t>(i)]);
  return out;
}

double mean_ce_against(const Tensor& logits, const std::vector<int>& labels) {
  Tape tape;
  return tape.value(tape.mean(tape.ce_rows_labels(tape.constant(logits), labels))).item();
}

// Rank of the true class under (logit desc, class asc); ties are total.
int label_rank(const Tensor& logits, int row, int label) {
  int rank = 0;
  const double ref = logits.at(row, label);
  for (int c = 0; c < logits.cols(); ++c) {
    if (c == label) continue;
    if (logits.at(row, c) > ref || (logits.at(row, c) == ref && c < label)) ++rank;
  }
  return rank;
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kNone: return "none";
    case Variant::kInsOnly: return "ins-only";
    case Variant::kCatOnly: return "cat-only";
    case Variant::kFull: return "full";
  }
  return "full";
}

Variant variant_from_string(const std::string& s) {
  if (s == "none") return Variant::kNone;
  if (s == "ins-only") return Variant::kInsOnly;
  if (s == "cat-only") return Variant::kCatOnly;
  if (s == "full") return Variant::kFull;
  throw std::invalid_argument("unknown variant '" + s + "'");
}

void TrainConfig::validate() const {
  if (epochs < 0 || warmup_epochs < 0) throw std::invalid_argument("train config: negative epoch count");
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (lr <= 0.0) throw std::invalid_argument("train config: lr must be positive");
  if (tau1 <= 0.0 || tau2 <= 0.0) throw std::invalid_argument("train config: temperatures must be positive");
  if (similar_cap < 0) throw std::invalid_argument("train config: similar_cap must be >= 0");
  if (sinkhorn_iterations < 0) throw std::invalid_argument("train config: sinkhorn_iterations must be >= 0");
  if (sinkhorn_reg <= 0.0) throw std::invalid_argument("train config: sinkhorn_reg must be positive");
  if (knn_k < 1) throw std::invalid_argument("train config: knn_k must be >= 1");
  if (gamma.initial < 0.0 || gamma.initial > 1.0 || gamma.final_value < 0.0 || gamma.final_value > 1.0)
    throw std::invalid_argument("train config: gamma values outside [0,1]");
}

EvalResult evaluate(const ModelState& model, const std::vector<MultimodalSample>& split) {
  if (split.empty()) throw std::invalid_argument("evaluate: empty split");
  const Tensor z_v = model.encode(Modality::kVisual, visual_matrix(split));
  const Tensor z_a = model.encode(Modality::kAudio, audio_matrix(split));
  const Tensor logits = model.classify(z_v, z_a);
  const int n = logits.rows();
  EvalResult res;
  res.top5_degenerate = logits.cols() <= 5;
  int hit1 = 0, hit5 = 0;
  for (int i = 0; i < n; ++i) {
    const int truth = split[static_cast<std::size_t>(i)].true_label;
    const int rank = label_rank(logits, i, truth);
    if (rank == 0) ++hit1;
    if (rank < 5) ++hit5;
  }
  res.top1 = static_cast<double>(hit1) / n;
  res.top5 = res.top5_degenerate ? 1.0 : static_cast<double>(hit5) / n;
  return res;
}

Trainer::Trainer(ModelState model, TrainConfig config)
    : model_(std::move(model)),
      cfg_(std::move(config)),
      adam_contrastive_(AdamConfig{cfg_.contrastive_lr(), 0.9, 0.999, 1e-8}),
      adam_supervised_(AdamConfig{cfg_.lr, 0.9, 0.999, 1e-8}) {
  cfg_.validate();
}

Trainer::EpochCache Trainer::compute_cache(const MultimodalDataset& dataset) const {
  EpochCache cache;
  cache.z_v = model_.encode(Modality::kVisual, visual_matrix(dataset.train));
  cache.z_a = model_.encode(Modality::kAudio, audio_matrix(dataset.train));
  const auto sets = similar_sets_all(cache.z_v, cache.z_a, cfg_.eps_v, cfg_.eps_a, cfg_.similar_cap, cfg_.tau1);
  cache.omega = correspondence_weights(cache.z_v, cache.z_a, sets, cfg_.tau1);
  return cache;
}

void Trainer::contrastive_phase(const MultimodalDataset& dataset, const EpochCache& cache, Variant variant,
                                LossBreakdown& sums, int& batches, int& cat_batches) {
  const int n = static_cast<int>(dataset.train.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng shuffle_rng(stream_seed(cfg_.seed, global_epoch_, 1));
  shuffle_rng.shuffle(order);
  Rng proto_rng(stream_seed(cfg_.seed, global_epoch_, 3));

  const bool want_ins = variant == Variant::kFull || variant == Variant::kInsOnly;
  const bool want_cat = variant == Variant::kFull || variant == Variant::kCatOnly;

  for (int start = 0; start < n; start += cfg_.batch_size) {
    const int stop = std::min(n, start + cfg_.batch_size);
    std::vector<int> idx(order.begin() + start, order.begin() + stop);
    const int b = static_cast<int>(idx.size());
    const bool full_batch = b == cfg_.batch_size;
    const bool use_ins = want_ins;
    const bool use_cat = want_cat && full_batch;  // category loss needs the configured width
    if (!use_ins && !use_cat) continue;
    const int batch_index = start / cfg_.batch_size;

    try {
      if (use_ins) normalize_prototype_bank(model_.params()[ModelState::kProtoInstance], proto_rng);
      if (use_cat) normalize_prototype_bank(model_.params()[ModelState::kProtoCategory], proto_rng);

      Tape tape;
      ParamBinding bind(tape, model_.params());
      const Tape::NodeId z_v =
          model_.encode(tape, bind, Modality::kVisual, tape.constant(batch_matrix(dataset.train, idx, Modality::kVisual)));
      const Tape::NodeId z_a =
          model_.encode(tape, bind, Modality::kAudio, tape.constant(batch_matrix(dataset.train, idx, Modality::kAudio)));

      Tape::NodeId total = -1;
      if (use_ins) {
        const Tape::NodeId proto = bind(ModelState::kProtoInstance);
        const Tape::NodeId probs_v = cluster_probs(tape, z_v, proto, cfg_.tau2);
        const Tape::NodeId probs_a = cluster_probs(tape, z_a, proto, cfg_.tau2);
        // Targets come from a separate non-differentiated procedure.
        const Tensor& proto_value = model_.params()[ModelState::kProtoInstance];
        const Tensor q_v = sinkhorn_assign(prototype_scores(tape.value(z_v), proto_value), cfg_.sinkhorn_iterations,
                                           cfg_.sinkhorn_reg, cfg_.sinkhorn_mode);
        const Tensor q_a = sinkhorn_assign(prototype_scores(tape.value(z_a), proto_value), cfg_.sinkhorn_iterations,
                                           cfg_.sinkhorn_reg, cfg_.sinkhorn_mode);
        BatchWeights w;
        for (int i : idx) {
          w.visual.push_back(cache.omega.visual[static_cast<std::size_t>(i)]);
          w.audio.push_back(cache.omega.audio[static_cast<std::size_t>(i)]);
        }
        const Tape::NodeId l_ins = instance_loss(tape, probs_v, probs_a, q_v, q_a, w);
        sums.l_ins += tape.value(l_ins).item();
        total = l_ins;
      }
      if (use_cat) {
        const Tape::NodeId proto = bind(ModelState::kProtoCategory);
        const Tape::NodeId p_v = category_representations(tape, z_v, proto, cfg_.tau2, cfg_.batch_size);
        const Tape::NodeId p_a = category_representations(tape, z_a, proto, cfg_.tau2, cfg_.batch_size);
        const auto [u_v, r_v] = model_.autoencode(tape, bind, p_v);
        const auto [u_a, r_a] = model_.autoencode(tape, bind, p_a);
        (void)u_v;
        (void)u_a;
        const CategoryLossTerms terms = category_loss(tape, p_v, p_a, r_v, r_a, cfg_.tau1);
        sums.l_rv += tape.value(terms.l_rv).item();
        sums.l_ra += tape.value(terms.l_ra).item();
        sums.l_cv += tape.value(terms.l_cv).item();
        sums.l_ca += tape.value(terms.l_ca).item();
        sums.l_cat += tape.value(terms.total).item();
        ++cat_batches;
        total = (total < 0) ? terms.total : contrastive_loss(tape, total, terms.total);
      }

      const double loss_value = tape.value(total).item();
      if (!std::isfinite(loss_value)) throw std::runtime_error("non-finite contrastive loss");
      tape.backward(total);
      adam_contrastive_.step(model_.params(), bind.grads());
      ++batches;
    } catch (const std::exception& e) {
      throw std::runtime_error("contrastive phase aborted at epoch " + std::to_string(global_epoch_) + ", batch " +
                               std::to_string(batch_index) + ": " + e.what());
    }
  }
}

void Trainer::supervised_phase(const MultimodalDataset& dataset, const std::vector<int>& corrected, double gamma,
                               LossBreakdown& sums, int& batches) {
  const int n = static_cast<int>(dataset.train.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng shuffle_rng(stream_seed(cfg_.seed, global_epoch_, 2));
  shuffle_rng.shuffle(order);

  const std::vector<int> observed = observed_labels(dataset.train);

  for (int start = 0; start < n; start += cfg_.batch_size) {
    const int stop = std::min(n, start + cfg_.batch_size);
    std::vector<int> idx(order.begin() + start, order.begin() + stop);
    const int batch_index = start / cfg_.batch_size;
    try {
      Tape tape;
      ParamBinding bind(tape, model_.params());
      const Tape::NodeId z_v =
          model_.encode(tape, bind, Modality::kVisual, tape.constant(batch_matrix(dataset.train, idx, Modality::kVisual)));
      const Tape::NodeId z_a =
          model_.encode(tape, bind, Modality::kAudio, tape.constant(batch_matrix(dataset.train, idx, Modality::kAudio)));
      const Tape::NodeId logits = model_.classify(tape, bind, z_v, z_a);
      const Tape::NodeId loss =
          hybrid_loss(tape, logits, gather(observed, idx), gather(corrected, idx), gamma);
      const double loss_value = tape.value(loss).item();
      if (!std::isfinite(loss_value)) throw std::runtime_error("non-finite supervised loss");
      sums.l_s += loss_value;
      sums.ce_observed += mean_ce_against(tape.value(logits), gather(observed, idx));
      sums.ce_corrected += mean_ce_against(tape.value(logits), gather(corrected, idx));
      tape.backward(loss);
      adam_supervised_.step(model_.params(), bind.grads());
      ++batches;
    } catch (const std::exception& e) {
      throw std::runtime_error("supervised phase aborted at epoch " + std::to_string(global_epoch_) + ", batch " +
                               std::to_string(batch_index) + ": " + e.what());
    }
  }
}

void Trainer::evaluate_epoch(const MultimodalDataset& dataset, const EpochCache* cache,
                             const std::vector<int>* corrected, const LossBreakdown& means, const std::string& phase,
                             double gamma, bool cat_ran) {
  EpochRecord rec;
  rec.epoch = global_epoch_;
  rec.phase = phase;
  rec.gamma = gamma;
  rec.l_ins = means.l_ins;
  rec.l_cat = cat_ran ? means.l_cat : kNaN;
  rec.l_c = means.l_c;
  rec.l_s = means.l_s;
  rec.ce_observed = means.ce_observed;
  rec.ce_corrected = means.ce_corrected;

  // Train-split forward pass for accuracy and the loss-separation diagnostic.
  const Tensor z_v = model_.encode(Modality::kVisual, visual_matrix(dataset.train));
  const Tensor z_a = model_.encode(Modality::kAudio, audio_matrix(dataset.train));
  const Tensor logits = model_.classify(z_v, z_a);
  const int n = logits.rows();

  int hits = 0;
  double ce_clean_sum = 0.0, ce_noisy_sum = 0.0;
  int clean_count = 0, noisy_count = 0;
  report_.per_sample_ce.assign(static_cast<std::size_t>(n), 0.0);
  report_.label_clean.assign(static_cast<std::size_t>(n), 0);
  {
    Tape tape;
    const Tape::NodeId ce =
        tape.ce_rows_labels(tape.constant(logits), observed_labels(dataset.train));
    const Tensor& ce_values = tape.value(ce);
    for (int i = 0; i < n; ++i) {
      const auto& s = dataset.train[static_cast<std::size_t>(i)];
      if (label_rank(logits, i, s.observed_label) == 0) ++hits;
      const double ce_i = ce_values.data()[i];
      report_.per_sample_ce[static_cast<std::size_t>(i)] = ce_i;
      const bool clean = s.observed_label == s.true_label;
      report_.label_clean[static_cast<std::size_t>(i)] = clean ? 1 : 0;
      if (clean) {
        ce_clean_sum += ce_i;
        ++clean_count;
      } else {
        ce_noisy_sum += ce_i;
        ++noisy_count;
      }
    }
  }
  rec.train_top1 = n > 0 ? static_cast<double>(hits) / n : kNaN;
  rec.mean_ce_clean = clean_count > 0 ? ce_clean_sum / clean_count : kNaN;
  rec.mean_ce_noisy = noisy_count > 0 ? ce_noisy_sum / noisy_count : kNaN;

  const EvalResult ev = evaluate(model_, dataset.test);
  rec.test_top1 = ev.top1;
  rec.test_top5 = ev.top5;
  rec.top5_degenerate = ev.top5_degenerate;

  if (corrected != nullptr) {
    int agree = 0;
    for (int i = 0; i < n; ++i)
      if ((*corrected)[static_cast<std::size_t>(i)] == dataset.train[static_cast<std::size_t>(i)].true_label) ++agree;
    rec.corrected_label_acc = n > 0 ? static_cast<double>(agree) / n : kNaN;
    report_.corrected_labels = *corrected;
  } else {
    rec.corrected_label_acc = kNaN;
  }

  if (cache != nullptr) {
    double clean_sum = 0.0, noisy_sum = 0.0;
    int n_clean = 0, n_noisy = 0;
    report_.omega_v = cache->omega.visual;
    report_.omega_a = cache->omega.audio;
    report_.correspondence_clean.assign(static_cast<std::size_t>(n), 1);
    for (int i = 0; i < n; ++i) {
      const bool clean = dataset.train[static_cast<std::size_t>(i)].correspondence_clean;
      report_.correspondence_clean[static_cast<std::size_t>(i)] = clean ? 1 : 0;
      const double w = cache->omega.audio[static_cast<std::size_t>(i)];
      if (clean) {
        clean_sum += w;
        ++n_clean;
      } else {
        noisy_sum += w;
        ++n_noisy;
      }
    }
    rec.mean_omega_clean = n_clean > 0 ? clean_sum / n_clean : kNaN;
    rec.mean_omega_mismatched = n_noisy > 0 ? noisy_sum / n_noisy : kNaN;
  } else {
    rec.mean_omega_clean = kNaN;
    rec.mean_omega_mismatched = kNaN;
  }

  report_.epochs.push_back(std::move(rec));
}

void Trainer::train_epoch(const MultimodalDataset& dataset, Variant variant, bool correction, double gamma,
                          const std::string& phase) {
  if (dataset.train.empty()) throw std::invalid_argument("train: empty training split");

  const EpochCache cache = compute_cache(dataset);

  LossBreakdown sums{};
  int contrastive_batches = 0, cat_batches = 0, supervised_batches = 0;
  if (variant != Variant::kNone) {
    contrastive_phase(dataset, cache, variant, sums, contrastive_batches, cat_batches);
  }

  std::vector<int> corrected;
  if (correction) {
    const Tensor fused = fuse_features(cache.z_v, cache.z_a);
    corrected = knn_correct(fused, observed_labels(dataset.train), cfg_.knn_k).labels;
  } else {
    corrected = observed_labels(dataset.train);
  }

  supervised_phase(dataset, corrected, gamma, sums, supervised_batches);

  LossBreakdown means{};
  const bool ins_ran = contrastive_batches > 0 && (variant == Variant::kFull || variant == Variant::kInsOnly);
  means.l_ins = ins_ran ? sums.l_ins / contrastive_batches : kNaN;
  means.l_cat = cat_batches > 0 ? sums.l_cat / cat_batches : kNaN;
  means.l_c = contrastive_batches > 0
                  ? (sums.l_ins + sums.l_cat) / contrastive_batches
                  : kNaN;
  means.l_s = supervised_batches > 0 ? sums.l_s / supervised_batches : kNaN;
  means.ce_observed = supervised_batches > 0 ? sums.ce_observed / supervised_batches : kNaN;
  means.ce_corrected = supervised_batches > 0 ? sums.ce_corrected / supervised_batches : kNaN;

  evaluate_epoch(dataset, &cache, correction ? &corrected : nullptr, means, phase, gamma, cat_batches > 0);
  ++global_epoch_;
  if (epoch_callback_) epoch_callback_(*this);
}

void Trainer::warmup(const MultimodalDataset& dataset) {
  for (int e = 0; e < cfg_.warmup_epochs; ++e) {
    train_epoch(dataset, Variant::kNone, false, 0.0, "warmup");
  }
}

void Trainer::run(const MultimodalDataset& dataset) {
  for (int e = 0; e < cfg_.epochs; ++e) {
    const double gamma = cfg_.gamma.at(global_epoch_);
    train_epoch(dataset, cfg_.variant, cfg_.correction, gamma, "main");
  }
}

ModelState warmup(ModelState model, const MultimodalDataset& dataset, const TrainConfig& config) {
  Trainer t(std::move(model), config);
  t.warmup(dataset);
  return std::move(t.model());
}

std::pair<ModelState, TrainReport> run(ModelState model, const MultimodalDataset& dataset, const TrainConfig& config) {
  Trainer t(std::move(model), config);
  t.run(dataset);
  return {std::move(t.model()), t.report()};
}

std::pair<ModelState, TrainReport> train_full(ModelState model, const MultimodalDataset& dataset,
                                              const TrainConfig& config) {
  Trainer t(std::move(model), config);
  t.warmup(dataset);
  t.run(dataset);
  return {std::move(t.model()), t.report()};
}

std::map<Variant, TrainReport> ablate(ModelState model, const MultimodalDataset& dataset, const TrainConfig& config) {
  Trainer base(std::move(model), config);
  base.warmup(dataset);
  std::map<Variant, TrainReport> out;
  for (Variant v : {Variant::kNone, Variant::kInsOnly, Variant::kCatOnly, Variant::kFull}) {
    Trainer t = base;
    t.set_variant(v);
    t.run(dataset);
    out.emplace(v, t.report());
  }
  return out;
}

}  // namespace ntmm
