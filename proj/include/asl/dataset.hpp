#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "asl/core.hpp"
#include "asl/image.hpp"

namespace asl {

struct SynthConfig {
  std::uint64_t seed = 0;
  std::uint32_t image_size = kDefaultImageSize;
  std::uint32_t references = 200;        // total reference images
  std::uint32_t positive_queries = 50;   // edited copies of sampled references
  std::uint32_t easy_negatives = 50;     // independent scenes
  std::uint32_t hard_negatives = 100;    // super-scene queries, <= references
  std::uint32_t train_images = 50;       // unpaired base training images
  // Directed hard-negative training pairs as a fraction of the base count.
  double train_hardneg_fraction = 0.5;
};

// Test-set and train-set structure for one generated dataset. Query ids are
// disjoint from reference ids, and train ids are disjoint from both.
struct DatasetManifest {
  std::uint64_t seed = 0;
  std::uint32_t image_size = kDefaultImageSize;
  std::vector<ImageId> references;
  std::vector<ImageId> queries;
  std::vector<ImageId> train_images;
  std::vector<RelationLabel> labels;
  std::vector<ImageId> hard_negative_query_ids;
};

void validate(const SynthConfig& config);

// Writes images (PGM), manifest.json, gt.csv and train_pairs.csv into
// out_dir and returns the manifest. Everything is a pure function of the
// config: the same config produces byte-identical files.
DatasetManifest build_dataset(const SynthConfig& config,
                              const std::filesystem::path& out_dir);

std::filesystem::path image_path(const std::filesystem::path& dataset_dir,
                                 ImageId id);
ToyImage load_image(const std::filesystem::path& dataset_dir, ImageId id);

void write_manifest(const std::filesystem::path& path,
                    const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

// gt.csv: header "query_id,ref_id", one row per true EditedCopy pair.
void write_gt_csv(const std::filesystem::path& path,
                  const std::vector<RelationLabel>& labels);
std::vector<std::pair<ImageId, ImageId>> read_gt_csv(
    const std::filesystem::path& path);

// train_pairs.csv: header "former_id,latter_id,kind", kind in {copy, hardneg}.
void write_train_pairs_csv(const std::filesystem::path& path,
                           const std::vector<RelationLabel>& labels);
std::vector<RelationLabel> read_train_pairs_csv(
    const std::filesystem::path& path);

}  // namespace asl
