#include "asl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "asl/rng.hpp"

namespace asl {

std::string mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::Baseline: return "baseline";
    case TrainMode::AslCrop: return "asl-crop";
    case TrainMode::AslNegative: return "asl-negative";
    case TrainMode::AslPositive: return "asl-positive";
    case TrainMode::Triplet: return "triplet";
    case TrainMode::AslFull: return "asl-full";
  }
  return "?";
}

std::optional<TrainMode> mode_from_name(const std::string& name) {
  for (TrainMode m : {TrainMode::Baseline, TrainMode::AslCrop,
                      TrainMode::AslNegative, TrainMode::AslPositive,
                      TrainMode::Triplet, TrainMode::AslFull}) {
    if (mode_name(m) == name) return m;
  }
  return std::nullopt;
}

std::vector<std::string> all_mode_names() {
  return {"baseline",     "asl-crop", "asl-negative",
          "asl-positive", "triplet",  "asl-full"};
}

bool uses_crop_ladders(TrainMode mode) {
  return mode == TrainMode::AslCrop || mode == TrainMode::AslNegative ||
         mode == TrainMode::AslPositive || mode == TrainMode::AslFull;
}

bool uses_hard_negatives(TrainMode mode) {
  return mode == TrainMode::AslNegative || mode == TrainMode::AslPositive ||
         mode == TrainMode::AslFull;
}

bool ratio_on_crop_pairs(TrainMode mode) {
  return mode == TrainMode::AslCrop || mode == TrainMode::AslFull;
}

bool ratio_on_hardneg_pairs(TrainMode mode) {
  return uses_hard_negatives(mode);
}

void validate(const TrainConfig& cfg) {
  if (cfg.lr < 0.0) throw ConfigInvalid("lr", "must be >= 0");
  if (cfg.epochs < 1) throw ConfigInvalid("epochs", "must be >= 1");
  if (cfg.batch_size < 2) throw ConfigInvalid("batch-size", "must be >= 2");
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) {
    throw ConfigInvalid("momentum", "must be in [0, 1)");
  }
  if (cfg.weight_decay < 0.0) {
    throw ConfigInvalid("weight-decay", "must be >= 0");
  }
  if (cfg.hardneg_fraction < 0.0 || cfg.hardneg_fraction > 1.0) {
    throw ConfigInvalid("hardneg-fraction", "must be in [0, 1]");
  }
  if (cfg.hidden == 0 || cfg.descriptor_dim == 0) {
    throw ConfigInvalid("dims", "hidden and descriptor dim must be positive");
  }
  validate(cfg.loss);
}

SampleLossPlan loss_plan(TrainMode mode, SampleRelation relation) {
  SampleLossPlan plan;
  switch (relation) {
    case SampleRelation::EditCopy:
      plan.use_triplet = mode == TrainMode::Triplet;
      break;
    case SampleRelation::CropCopy:
      plan.use_ratio = ratio_on_crop_pairs(mode);
      plan.ratio_numerator_is_latter = false;
      break;
    case SampleRelation::HardNegativeDirected:
      plan.use_ratio = ratio_on_hardneg_pairs(mode);
      plan.ratio_numerator_is_latter = true;
      break;
  }
  return plan;
}

std::map<ImageId, std::uint32_t> assign_classes(const DatasetManifest& manifest,
                                                TrainMode mode) {
  const std::set<ImageId> train_set(manifest.train_images.begin(),
                                    manifest.train_images.end());
  std::map<ImageId, ImageId> former_of;  // latter -> former, train pairs only
  for (const RelationLabel& l : manifest.labels) {
    if (l.kind == RelationKind::HardNegativeDirected && train_set.count(l.former) &&
        train_set.count(l.latter)) {
      former_of.emplace(l.latter, l.former);
    }
  }
  const bool share = mode == TrainMode::AslPositive || mode == TrainMode::AslFull;

  std::map<ImageId, std::uint32_t> classes;
  std::uint32_t next = 0;
  for (ImageId id : manifest.train_images) {
    if (share && former_of.count(id)) continue;  // resolved below
    classes[id] = next++;
  }
  if (share) {
    for (const auto& [latter, former] : former_of) {
      classes[latter] = classes.at(former);
    }
  }
  return classes;
}

TrainingPool build_training_pool(const TrainConfig& cfg,
                                 const std::filesystem::path& dataset_dir,
                                 const DatasetManifest& manifest) {
  if (manifest.train_images.empty()) {
    throw ConfigInvalid("dataset", "manifest has no training images");
  }
  TrainingPool pool;
  pool.image_size = manifest.image_size;
  pool.classes = assign_classes(manifest, cfg.mode);
  std::uint32_t max_class = 0;
  for (const auto& [id, c] : pool.classes) max_class = std::max(max_class, c);
  pool.num_classes = max_class + 1;

  const std::set<ImageId> train_set(manifest.train_images.begin(),
                                    manifest.train_images.end());
  std::set<ImageId> paired;
  std::vector<std::pair<ImageId, ImageId>> pair_ids;
  for (const RelationLabel& l : manifest.labels) {
    if (l.kind == RelationKind::HardNegativeDirected && train_set.count(l.former) &&
        train_set.count(l.latter)) {
      pair_ids.emplace_back(l.former, l.latter);
      paired.insert(l.former);
      paired.insert(l.latter);
    }
  }

  for (ImageId id : manifest.train_images) {
    if (!paired.count(id)) {
      pool.base_images.push_back(load_image(dataset_dir, id));
    }
  }
  if (uses_hard_negatives(cfg.mode)) {
    for (const auto& [former, latter] : pair_ids) {
      pool.hard_pairs.emplace_back(load_image(dataset_dir, former),
                                   load_image(dataset_dir, latter));
    }
  }
  return pool;
}

std::vector<TrainSample> sample_batch(SplitMix64& rng,
                                      const TrainingPool& pool,
                                      const TrainConfig& cfg) {
  if (pool.base_images.empty()) {
    throw ConfigInvalid("dataset", "no unpaired training images to sample");
  }
  const bool with_hardneg =
      uses_hard_negatives(cfg.mode) && !pool.hard_pairs.empty();
  const bool with_crops = uses_crop_ladders(cfg.mode);

  std::vector<TrainSample> batch;
  batch.reserve(cfg.batch_size);
  for (std::uint32_t s = 0; s < cfg.batch_size; ++s) {
    TrainSample sample;
    const double kind_draw = rng.uniform();
    if (with_hardneg && kind_draw < cfg.hardneg_fraction) {
      const auto& [former, latter] =
          pool.hard_pairs[rng.uniform_int(pool.hard_pairs.size())];
      sample.former = former;
      sample.latter = latter;
      sample.relation = SampleRelation::HardNegativeDirected;
      sample.class_former = pool.classes.at(former.id);
      sample.class_latter = pool.classes.at(latter.id);
    } else if (with_crops && rng.uniform() < 0.5) {
      // A fresh nested ladder per draw: any (larger, smaller) level pair,
      // anchors never repeat, so per-image norms cannot be memorized.
      const std::size_t b = rng.uniform_int(pool.base_images.size());
      const std::size_t levels = kCropSchedule.size();
      const std::size_t larger = rng.uniform_int(levels - 1);
      const std::size_t smaller =
          larger + 1 + rng.uniform_int(levels - 1 - larger);
      ToyImage level = pool.base_images[b];
      for (std::size_t step = 1; step <= smaller; ++step) {
        if (step == larger + 1) sample.former = level;
        level = crop_copy(level, 0.8, {rng.uniform(), rng.uniform()},
                          rng.next());
      }
      sample.latter = std::move(level);
      sample.relation = SampleRelation::CropCopy;
      sample.former_scale = kCropSchedule[larger];
      sample.latter_scale = kCropSchedule[smaller];
      const std::uint32_t cls = pool.classes.at(pool.base_images[b].id);
      sample.class_former = cls;
      sample.class_latter = cls;
    } else {
      const std::size_t b = rng.uniform_int(pool.base_images.size());
      sample.former = pool.base_images[b];
      sample.latter = basic_edit(sample.former, rng.next());
      sample.relation = SampleRelation::EditCopy;
      const std::uint32_t cls = pool.classes.at(pool.base_images[b].id);
      sample.class_former = cls;
      sample.class_latter = cls;
    }
    batch.push_back(std::move(sample));
  }
  return batch;
}

namespace {

struct ProbePair {
  ToyImage reference;
  ToyImage crop;
};

std::vector<ProbePair> build_probe_pairs(const TrainConfig& cfg,
                                         std::uint32_t image_size) {
  const std::uint64_t probe_seed = derive_seed(cfg.seed, "probe");
  SplitMix64 rng(derive_seed(probe_seed, "draws"));
  std::vector<ProbePair> probe;
  probe.reserve(cfg.probe_pairs);
  for (std::uint32_t i = 0; i < cfg.probe_pairs; ++i) {
    ProbePair pair;
    pair.reference = gen_image(probe_seed, i, image_size);
    const std::size_t step = 1 + rng.uniform_int(kCropSchedule.size() - 1);
    const auto anchor = std::make_pair(rng.uniform(), rng.uniform());
    pair.crop = crop_copy(pair.reference, kCropSchedule[step], anchor,
                          rng.next());
    probe.push_back(std::move(pair));
  }
  return probe;
}

double probe_mean_ratio(const EncoderParams& params,
                        const std::vector<ProbePair>& probe) {
  if (probe.empty()) return 0.0;
  double sum = 0.0;
  for (const ProbePair& pair : probe) {
    const Descriptor ref = forward(params, pair.reference);
    const Descriptor crop = forward(params, pair.crop);
    sum += norm_ratio(ref, crop);
  }
  return sum / static_cast<double>(probe.size());
}

// Momentum buffers share the ParamGrads layout.
void sgd_step(EncoderParams& params, const ParamGrads& grads,
              ParamGrads& velocity, const TrainConfig& cfg) {
  auto update = [&](std::vector<double>& theta, const std::vector<double>& g,
                    std::vector<double>& v, bool decay) {
    const double wd = decay ? cfg.weight_decay : 0.0;
    for (std::size_t k = 0; k < theta.size(); ++k) {
      v[k] = cfg.momentum * v[k] - cfg.lr * (g[k] + wd * theta[k]);
      theta[k] += v[k];
    }
  };
  update(params.w1, grads.w1, velocity.w1, true);
  update(params.b1, grads.b1, velocity.b1, false);
  update(params.w2, grads.w2, velocity.w2, true);
  update(params.b2, grads.b2, velocity.b2, false);
  update(params.proxies, grads.proxies, velocity.proxies, true);
}

}  // namespace

TrainResult train(const TrainConfig& cfg,
                  const std::filesystem::path& dataset_dir,
                  const DatasetManifest& manifest) {
  validate(cfg);
  const TrainingPool pool = build_training_pool(cfg, dataset_dir, manifest);

  EncoderDims dims;
  dims.height = pool.image_size;
  dims.width = pool.image_size;
  dims.hidden = cfg.hidden;
  dims.out = cfg.descriptor_dim;
  dims.classes = pool.num_classes;

  TrainResult result;
  result.params = init_params(derive_seed(cfg.seed, "init"), dims);
  result.classes = pool.classes;

  const std::vector<ProbePair> probe = build_probe_pairs(cfg, pool.image_size);

  ParamGrads grads;
  grads.resize_like(result.params);
  ParamGrads velocity;
  velocity.resize_like(result.params);

  const std::uint32_t steps_per_epoch = std::max<std::uint32_t>(
      1, static_cast<std::uint32_t>((manifest.train_images.size() +
                                     cfg.batch_size - 1) /
                                    cfg.batch_size));
  SplitMix64 batch_rng(derive_seed(cfg.seed, "batches"));

  struct MemberState {
    Descriptor desc;
    Tape tape;
    std::vector<double> d_desc;
  };

  for (std::uint32_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    std::uint64_t epoch_samples = 0;

    for (std::uint32_t step = 0; step < steps_per_epoch; ++step) {
      const std::vector<TrainSample> batch =
          sample_batch(batch_rng, pool, cfg);
      grads.zero();

      // Forward every member first so cross-sample terms (triplet
      // negatives) can reference any descriptor in the batch.
      std::vector<MemberState> former(batch.size());
      std::vector<MemberState> latter(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) {
        former[i].desc = forward(result.params, batch[i].former, &former[i].tape);
        former[i].d_desc.assign(cfg.descriptor_dim, 0.0);
        latter[i].desc = forward(result.params, batch[i].latter, &latter[i].tape);
        latter[i].d_desc.assign(cfg.descriptor_dim, 0.0);
      }

      double batch_loss = 0.0;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const TrainSample& sample = batch[i];
        const SampleLossPlan plan = loss_plan(cfg.mode, sample.relation);
        ++result.counters.samples;
        if (sample.relation == SampleRelation::HardNegativeDirected) {
          ++result.counters.hardneg_samples;
        }
        if (sample.relation == SampleRelation::CropCopy) {
          ++result.counters.crop_samples;
        }

        const double w_mtr = cfg.loss.lambda * 0.5;
        const CosfaceLoss mf = cosface_loss(
            former[i].desc, sample.class_former, result.params.proxies,
            dims.classes, cfg.loss.cosface_scale, cfg.loss.cosface_margin);
        const CosfaceLoss ml = cosface_loss(
            latter[i].desc, sample.class_latter, result.params.proxies,
            dims.classes, cfg.loss.cosface_scale, cfg.loss.cosface_margin);
        double sample_loss = w_mtr * (mf.value + ml.value);
        for (std::uint32_t k = 0; k < cfg.descriptor_dim; ++k) {
          former[i].d_desc[k] += w_mtr * mf.d_x[k];
          latter[i].d_desc[k] += w_mtr * ml.d_x[k];
        }
        for (std::size_t k = 0; k < grads.proxies.size(); ++k) {
          grads.proxies[k] += w_mtr * (mf.d_proxies[k] + ml.d_proxies[k]);
        }

        if (plan.use_ratio) {
          ++result.counters.ratio_evals;
          MemberState& num = plan.ratio_numerator_is_latter ? latter[i] : former[i];
          MemberState& den = plan.ratio_numerator_is_latter ? former[i] : latter[i];
          if (plan.ratio_numerator_is_latter) {
            ++result.counters.ratio_numerator_latter;
          }
          const RatioLoss ratio = ratio_loss(num.desc, den.desc);
          sample_loss += ratio.value;
          for (std::uint32_t k = 0; k < cfg.descriptor_dim; ++k) {
            num.d_desc[k] += ratio.d_x_i[k];
            den.d_desc[k] += ratio.d_x_j[k];
          }
        }

        if (plan.use_triplet) {
          // In-batch negative: the next sample (cyclically) with a
          // different class, anchored on the copy.
          std::size_t neg = batch.size();
          for (std::size_t off = 1; off < batch.size(); ++off) {
            const std::size_t j = (i + off) % batch.size();
            if (batch[j].class_former != sample.class_former) {
              neg = j;
              break;
            }
          }
          if (neg < batch.size()) {
            ++result.counters.triplet_evals;
            const TripletLoss trip =
                triplet_loss(latter[i].desc, former[i].desc, former[neg].desc,
                             cfg.loss.triplet_margin);
            sample_loss += trip.value;
            for (std::uint32_t k = 0; k < cfg.descriptor_dim; ++k) {
              latter[i].d_desc[k] += trip.d_anchor[k];
              former[i].d_desc[k] += trip.d_positive[k];
              former[neg].d_desc[k] += trip.d_negative[k];
            }
          }
        }

        batch_loss += sample_loss;
      }

      if (!std::isfinite(batch_loss)) throw DivergenceDetected(epoch);

      for (std::size_t i = 0; i < batch.size(); ++i) {
        backward(result.params, former[i].tape, former[i].d_desc, grads);
        backward(result.params, latter[i].tape, latter[i].d_desc, grads);
      }
      grads.scale(1.0 / static_cast<double>(batch.size()));
      sgd_step(result.params, grads, velocity, cfg);

      epoch_loss += batch_loss;
      epoch_samples += batch.size();
    }

    TrainLogRow row;
    row.epoch = epoch;
    row.loss = epoch_loss / static_cast<double>(epoch_samples);
    row.mean_ratio_heldout = probe_mean_ratio(result.params, probe);
    if (!std::isfinite(row.loss) || !std::isfinite(row.mean_ratio_heldout)) {
      throw DivergenceDetected(epoch);
    }
    result.log.push_back(row);
  }
  return result;
}

void write_train_log(const std::filesystem::path& path,
                     const std::vector<TrainLogRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "epoch,loss,mean_ratio_heldout\n";
  char buf[96];
  for (const TrainLogRow& row : rows) {
    std::snprintf(buf, sizeof(buf), "%u,%.9g,%.9g\n", row.epoch, row.loss,
                  row.mean_ratio_heldout);
    out << buf;
  }
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace asl
