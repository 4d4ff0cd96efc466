#include "asl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "asl/rng.hpp"

namespace asl {

namespace {

using json = nlohmann::json;

std::string kind_name(RelationKind kind) {
  return kind == RelationKind::EditedCopy ? "copy" : "hardneg";
}

RelationKind kind_from_name(const std::string& name, std::size_t line) {
  if (name == "copy") return RelationKind::EditedCopy;
  if (name == "hardneg") return RelationKind::HardNegativeDirected;
  throw ParseError("unknown relation kind '" + name + "'", line);
}

}  // namespace

void validate(const SynthConfig& config) {
  if (config.references < 1) {
    throw ConfigInvalid("refs", "must be >= 1");
  }
  if (config.hard_negatives > config.references) {
    throw ConfigInvalid("hard-neg", "must be <= refs (each hard negative is "
                                    "paired with a dedicated reference)");
  }
  if (config.train_hardneg_fraction < 0.0 ||
      config.train_hardneg_fraction > 1.0) {
    throw ConfigInvalid("train-hardneg-fraction", "must be in [0, 1]");
  }
  if (config.image_size < 16) {
    throw ConfigInvalid("image-size", "must be >= 16");
  }
}

DatasetManifest build_dataset(const SynthConfig& config,
                              const std::filesystem::path& out_dir) {
  validate(config);
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "images").string());

  DatasetManifest m;
  m.seed = config.seed;
  m.image_size = config.image_size;

  const std::uint64_t scene_seed = derive_seed(config.seed, "scenes");
  const std::uint64_t copy_seed = derive_seed(config.seed, "copies");
  const std::uint64_t test_hn_seed = derive_seed(config.seed, "test-hardneg");
  const std::uint64_t train_hn_seed = derive_seed(config.seed, "train-hardneg");

  const std::uint32_t n_refs = config.references;
  const std::uint32_t n_hn = config.hard_negatives;
  const std::uint32_t n_plain_refs = n_refs - n_hn;
  const std::uint32_t n_queries =
      config.positive_queries + config.easy_negatives + n_hn;
  const std::uint32_t n_train_pairs = static_cast<std::uint32_t>(
      std::lround(config.train_hardneg_fraction * config.train_images));

  // Id layout: references, then queries (positive, easy, hard), then train
  // base images, then train pair images (former, latter per pair).
  ImageId next_id = 0;
  for (std::uint32_t i = 0; i < n_refs; ++i) m.references.push_back(next_id++);
  for (std::uint32_t i = 0; i < n_queries; ++i) m.queries.push_back(next_id++);
  for (std::uint32_t i = 0; i < config.train_images; ++i) {
    m.train_images.push_back(next_id++);
  }
  std::vector<std::pair<ImageId, ImageId>> train_pair_ids;
  for (std::uint32_t i = 0; i < n_train_pairs; ++i) {
    const ImageId former = next_id++;
    const ImageId latter = next_id++;
    m.train_images.push_back(former);
    m.train_images.push_back(latter);
    train_pair_ids.emplace_back(former, latter);
  }

  auto save = [&](const ToyImage& img) {
    write_pgm(image_path(out_dir, img.id), img);
  };

  // Plain references are independent scenes; the last n_hn references come
  // from the hard-negative construction together with their queries.
  std::vector<ToyImage> ref_images(n_refs);
  for (std::uint32_t i = 0; i < n_plain_refs; ++i) {
    ref_images[i] = gen_image(scene_seed, m.references[i], config.image_size);
    save(ref_images[i]);
  }
  const ImageId hn_query_base =
      m.queries[config.positive_queries + config.easy_negatives];
  for (std::uint32_t j = 0; j < n_hn; ++j) {
    const ImageId ref_id = m.references[n_plain_refs + j];
    const ImageId query_id = hn_query_base + j;
    HardNegativePair pair = make_hard_negative(derive_seed(test_hn_seed, j),
                                               ref_id, query_id,
                                               config.image_size);
    ref_images[n_plain_refs + j] = pair.reference;
    save(pair.reference);
    save(pair.negative);
    m.labels.push_back(pair.label);
    m.hard_negative_query_ids.push_back(query_id);
  }

  // Positive queries: edited copies (crop or basic edit) of sampled
  // references.
  SplitMix64 pos_rng(copy_seed);
  for (std::uint32_t i = 0; i < config.positive_queries; ++i) {
    const ImageId query_id = m.queries[i];
    const std::uint32_t ref_idx =
        static_cast<std::uint32_t>(pos_rng.uniform_int(n_refs));
    const ToyImage& ref = ref_images[ref_idx];
    ToyImage q;
    if (pos_rng.uniform() < 0.5) {
      const double scale = pos_rng.uniform(0.55, 0.9);
      const auto anchor = std::make_pair(pos_rng.uniform(), pos_rng.uniform());
      q = crop_copy(ref, scale, anchor, pos_rng.next());
    } else {
      q = basic_edit(ref, pos_rng.next());
    }
    q.id = query_id;
    save(q);
    m.labels.push_back(RelationLabel{RelationKind::EditedCopy,
                                     m.references[ref_idx], query_id});
  }

  // Easy negatives: independent scenes, no relation to any reference.
  for (std::uint32_t i = 0; i < config.easy_negatives; ++i) {
    const ImageId query_id = m.queries[config.positive_queries + i];
    save(gen_image(scene_seed, query_id, config.image_size));
  }

  // Train base images.
  for (std::uint32_t i = 0; i < config.train_images; ++i) {
    save(gen_image(scene_seed, m.train_images[i], config.image_size));
  }
  std::vector<RelationLabel> train_labels;
  for (std::uint32_t j = 0; j < n_train_pairs; ++j) {
    const auto [former, latter] = train_pair_ids[j];
    HardNegativePair pair = make_hard_negative(derive_seed(train_hn_seed, j),
                                               former, latter,
                                               config.image_size);
    save(pair.reference);
    save(pair.negative);
    m.labels.push_back(pair.label);
    train_labels.push_back(pair.label);
  }

  write_manifest(out_dir / "manifest.json", m);
  write_gt_csv(out_dir / "gt.csv", m.labels);
  // Only train-side pairs belong in train_pairs.csv; the test-side
  // hard-negative labels stay in the manifest.
  write_train_pairs_csv(out_dir / "train_pairs.csv", train_labels);
  return m;
}

std::filesystem::path image_path(const std::filesystem::path& dataset_dir,
                                 ImageId id) {
  char name[32];
  std::snprintf(name, sizeof(name), "%06llu.pgm",
                static_cast<unsigned long long>(id));
  return dataset_dir / "images" / name;
}

ToyImage load_image(const std::filesystem::path& dataset_dir, ImageId id) {
  return read_pgm(image_path(dataset_dir, id), id);
}

void write_manifest(const std::filesystem::path& path,
                    const DatasetManifest& m) {
  json j;
  j["version"] = 1;
  j["seed"] = m.seed;
  j["image_size"] = m.image_size;
  j["references"] = m.references;
  j["queries"] = m.queries;
  j["train_images"] = m.train_images;
  j["hard_negative_query_ids"] = m.hard_negative_query_ids;
  json labels = json::array();
  for (const RelationLabel& l : m.labels) {
    labels.push_back({{"kind", kind_name(l.kind)},
                      {"former", l.former},
                      {"latter", l.latter}});
  }
  j["labels"] = std::move(labels);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << "\n";
  if (!out) throw IoError("short write to " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("manifest JSON: ") + e.what(), 1);
  }
  DatasetManifest m;
  m.seed = j.at("seed").get<std::uint64_t>();
  m.image_size = j.at("image_size").get<std::uint32_t>();
  m.references = j.at("references").get<std::vector<ImageId>>();
  m.queries = j.at("queries").get<std::vector<ImageId>>();
  m.train_images = j.at("train_images").get<std::vector<ImageId>>();
  m.hard_negative_query_ids =
      j.at("hard_negative_query_ids").get<std::vector<ImageId>>();
  for (const json& l : j.at("labels")) {
    m.labels.push_back(RelationLabel{
        kind_from_name(l.at("kind").get<std::string>(), 1),
        l.at("former").get<ImageId>(), l.at("latter").get<ImageId>()});
  }
  return m;
}

void write_gt_csv(const std::filesystem::path& path,
                  const std::vector<RelationLabel>& labels) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "query_id,ref_id\n";
  for (const RelationLabel& l : labels) {
    if (l.kind == RelationKind::EditedCopy) {
      out << l.latter << ',' << l.former << "\n";
    }
  }
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<std::pair<ImageId, ImageId>> read_gt_csv(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header", 1);
  if (line == "query_id,ref_id\r") line = "query_id,ref_id";
  if (line != "query_id,ref_id") {
    throw ParseError("gt header must be 'query_id,ref_id'", 1);
  }
  std::vector<std::pair<ImageId, ImageId>> gt;
  std::set<std::pair<ImageId, ImageId>> seen;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw ParseError("expected 'query_id,ref_id'", lineno);
    }
    std::string qs = line.substr(0, comma);
    std::string rs = line.substr(comma + 1);
    if (!rs.empty() && rs.back() == '\r') rs.pop_back();
    try {
      const ImageId q = std::stoull(qs);
      const ImageId r = std::stoull(rs);
      if (!seen.insert({q, r}).second) {
        throw ParseError("duplicate ground-truth pair", lineno);
      }
      gt.emplace_back(q, r);
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception&) {
      throw ParseError("expected unsigned integers", lineno);
    }
  }
  return gt;
}

void write_train_pairs_csv(const std::filesystem::path& path,
                           const std::vector<RelationLabel>& labels) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "former_id,latter_id,kind\n";
  for (const RelationLabel& l : labels) {
    if (l.kind == RelationKind::HardNegativeDirected) {
      out << l.former << ',' << l.latter << ',' << kind_name(l.kind) << "\n";
    }
  }
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<RelationLabel> read_train_pairs_csv(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "former_id,latter_id,kind") {
    throw ParseError("train pairs header must be 'former_id,latter_id,kind'",
                     1);
  }
  std::vector<RelationLabel> labels;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 == std::string::npos ? 0 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw ParseError("expected 'former_id,latter_id,kind'", lineno);
    }
    try {
      RelationLabel l;
      l.former = std::stoull(line.substr(0, c1));
      l.latter = std::stoull(line.substr(c1 + 1, c2 - c1 - 1));
      l.kind = kind_from_name(line.substr(c2 + 1), lineno);
      if (l.former == l.latter) {
        throw ParseError("former and latter must differ", lineno);
      }
      labels.push_back(l);
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception&) {
      throw ParseError("expected unsigned integers", lineno);
    }
  }
  return labels;
}

}  // namespace asl
