#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "asl/dataset.hpp"
#include "asl/encoder.hpp"
#include "asl/objectives.hpp"
#include "asl/rng.hpp"

namespace asl {

// Training variants. They differ in which pair kinds are sampled, which
// pairs the ratio term covers, and how hard-negative latters are classed
// for the metric term:
//
//   Baseline     edit pairs only, CosFace only
//   Triplet      edit pairs only, CosFace + triplet (no ratio term)
//   AslCrop      + crop ladders, ratio term on crop pairs
//   AslNegative  + hard-negative pairs, ratio term on them (latter -> former),
//                  latter gets its own class
//   AslPositive  as AslNegative but the latter shares the former's class
//   AslFull      AslPositive's assignment, ratio term on both pair kinds
enum class TrainMode {
  Baseline,
  AslCrop,
  AslNegative,
  AslPositive,
  Triplet,
  AslFull,
};

std::string mode_name(TrainMode mode);
std::optional<TrainMode> mode_from_name(const std::string& name);
std::vector<std::string> all_mode_names();

bool uses_crop_ladders(TrainMode mode);
bool uses_hard_negatives(TrainMode mode);
bool ratio_on_crop_pairs(TrainMode mode);
bool ratio_on_hardneg_pairs(TrainMode mode);

// Nested 0.8-crops: effective scales 1.0, 0.8, 0.64, 0.512, 0.4096.
inline constexpr std::array<double, 5> kCropSchedule = {1.0, 0.8, 0.64, 0.512,
                                                        0.4096};

struct TrainConfig {
  TrainMode mode = TrainMode::AslFull;
  std::uint32_t epochs = 300;
  std::uint32_t batch_size = 16;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
  LossConfig loss;
  double hardneg_fraction = 0.25;  // share of each batch from annotated pairs
  std::uint32_t hidden = 128;
  std::uint32_t descriptor_dim = 32;
  std::uint32_t probe_pairs = 100;  // held-out (reference, crop) pairs
};

void validate(const TrainConfig& cfg);

enum class SampleRelation { EditCopy, CropCopy, HardNegativeDirected };

struct TrainSample {
  ToyImage former;
  ToyImage latter;
  SampleRelation relation = SampleRelation::EditCopy;
  std::uint32_t class_former = 0;
  std::uint32_t class_latter = 0;
  double former_scale = 1.0;
  double latter_scale = 1.0;
};

// Which loss terms apply to a sample under a mode. For hard-negative pairs
// the ratio numerator is the latter (the non-copy), pushing
// R(latter -> former) above 1; for crop pairs it is the former (the larger
// crop).
struct SampleLossPlan {
  bool use_ratio = false;
  bool ratio_numerator_is_latter = false;
  bool use_triplet = false;
};
SampleLossPlan loss_plan(TrainMode mode, SampleRelation relation);

// Every base training image is its own class; crop copies and edit copies
// share their source's class. Hard-negative latters share the former's
// class in AslPositive/AslFull and get distinct classes otherwise.
std::map<ImageId, std::uint32_t> assign_classes(const DatasetManifest& manifest,
                                                TrainMode mode);

struct TrainingPool {
  std::uint32_t image_size = kDefaultImageSize;
  std::vector<ToyImage> base_images;  // train images outside any pair
  std::vector<std::pair<ToyImage, ToyImage>> hard_pairs;  // (former, latter)
  std::map<ImageId, std::uint32_t> classes;
  std::uint32_t num_classes = 0;
};

TrainingPool build_training_pool(const TrainConfig& cfg,
                                 const std::filesystem::path& dataset_dir,
                                 const DatasetManifest& manifest);

// Crop samples are drawn as a fresh nested ladder per draw (seeded anchors,
// consecutive 0.8 steps) with the former at a strictly larger schedule
// scale than the latter; edit samples pair a base image with a fresh
// basic_edit; hard-negative samples replay the annotated pairs.
std::vector<TrainSample> sample_batch(SplitMix64& rng,
                                      const TrainingPool& pool,
                                      const TrainConfig& cfg);

struct DivergenceDetected : Error {
  explicit DivergenceDetected(std::uint32_t epoch)
      : Error("training diverged (non-finite loss) at epoch " +
              std::to_string(epoch)),
        epoch(epoch) {}
  std::uint32_t epoch;
};

struct TrainLogRow {
  std::uint32_t epoch = 0;  // 1-based
  double loss = 0.0;
  double mean_ratio_heldout = 0.0;
};

// Instrumentation for the mode-containment and orientation checks.
struct TrainCounters {
  std::uint64_t samples = 0;
  std::uint64_t hardneg_samples = 0;
  std::uint64_t crop_samples = 0;
  std::uint64_t ratio_evals = 0;
  std::uint64_t ratio_numerator_latter = 0;
  std::uint64_t triplet_evals = 0;
};

struct TrainResult {
  EncoderParams params;
  std::vector<TrainLogRow> log;
  TrainCounters counters;
  std::map<ImageId, std::uint32_t> classes;
};

// SGD with momentum and weight decay over the configured objective; batch
// gradients are reduced in fixed sample order, so the run is bitwise
// reproducible for one (config, dataset, seed) on one platform.
TrainResult train(const TrainConfig& cfg,
                  const std::filesystem::path& dataset_dir,
                  const DatasetManifest& manifest);

// Training log CSV: header "epoch,loss,mean_ratio_heldout".
void write_train_log(const std::filesystem::path& path,
                     const std::vector<TrainLogRow>& rows);

}  // namespace asl
