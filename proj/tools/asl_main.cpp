// asl: command-line pipeline for synthetic image copy detection.
//
// Subcommands: gen-data, train, embed, match, eval, sweep, compare.
// Exit codes: 0 success, 2 config error, 3 IO error, 4 training divergence,
// 5 checkpoint mismatch, 6 parse error.

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "asl/core.hpp"
#include "asl/dataset.hpp"
#include "asl/encoder.hpp"
#include "asl/evaluator.hpp"
#include "asl/matcher.hpp"
#include "asl/trainer.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitDivergence = 4;
constexpr int kExitCheckpoint = 5;
constexpr int kExitParse = 6;

// JSON config files for CLI11: {"train": {"lr": 0.02}, "match": {"k": 5}}.
// Command-line flags override config values.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override {
    return "{}\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      input >> j;
    } catch (const json::parse_error& e) {
      throw CLI::FileError(std::string("config JSON: ") + e.what());
    }
    std::vector<CLI::ConfigItem> items;
    flatten(j, {}, items);
    return items;
  }

 private:
  static void flatten(const json& j, const std::vector<std::string>& parents,
                      std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        auto deeper = parents;
        deeper.push_back(key);
        flatten(value, deeper, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const json& e : value) {
          item.inputs.push_back(e.is_string() ? e.get<std::string>() : e.dump());
        }
      } else {
        item.inputs.push_back(value.is_string() ? value.get<std::string>()
                                                : value.dump());
      }
      items.push_back(std::move(item));
    }
  }
};

struct CheckpointMismatch : asl::Error {
  using Error::Error;
};

// codec_exit: what a CodecError maps to for this command (5 for commands
// whose binary input is a checkpoint, 6 otherwise).
int run_guarded(int codec_exit, const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const asl::ConfigInvalid& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const asl::DivergenceDetected& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const CheckpointMismatch& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const asl::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitParse;
  } catch (const asl::CodecError& e) {
    std::cerr << "codec error: " << e.what() << "\n";
    return codec_exit;
  } catch (const asl::GtMismatch& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const asl::EmptyGroundTruth& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const asl::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const asl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

bool parse_on_off(const std::string& value, const char* flag) {
  if (value == "on") return true;
  if (value == "off") return false;
  throw asl::ConfigInvalid(flag, "must be 'on' or 'off'");
}

struct GenDataArgs {
  std::uint64_t seed = 0;
  std::string out;
  asl::SynthConfig cfg;
};

int cmd_gen_data(const GenDataArgs& args) {
  return run_guarded(kExitParse, [&] {
    asl::SynthConfig cfg = args.cfg;
    cfg.seed = args.seed;
    const asl::DatasetManifest m = asl::build_dataset(cfg, args.out);
    std::cout << "dataset written to " << args.out << "\n"
              << "references   " << m.references.size() << "\n"
              << "queries      " << m.queries.size() << " (pos "
              << cfg.positive_queries << " + easy " << cfg.easy_negatives
              << " + hard " << m.hard_negative_query_ids.size() << ")\n"
              << "train images " << m.train_images.size() << "\n"
              << "labels       " << m.labels.size() << "\n";
  });
}

struct TrainArgs {
  std::string dataset;
  std::string out;
  std::string log;
  std::string mode = "asl-full";
  asl::TrainConfig cfg;
};

int cmd_train(const TrainArgs& args) {
  return run_guarded(kExitParse, [&] {
    asl::TrainConfig cfg = args.cfg;
    const auto mode = asl::mode_from_name(args.mode);
    if (!mode) {
      std::string valid;
      for (const std::string& name : asl::all_mode_names()) {
        valid += valid.empty() ? name : ", " + name;
      }
      throw asl::ConfigInvalid("mode", "unknown mode '" + args.mode +
                                           "'; valid modes: " + valid);
    }
    cfg.mode = *mode;
    const asl::DatasetManifest manifest =
        asl::read_manifest(fs::path(args.dataset) / "manifest.json");
    const asl::TrainResult result = asl::train(cfg, args.dataset, manifest);
    asl::save_params(args.out, result.params);
    const std::string log_path =
        args.log.empty() ? args.out + ".log.csv" : args.log;
    asl::write_train_log(log_path, result.log);
    const asl::TrainLogRow& last = result.log.back();
    std::cout << "checkpoint " << args.out << "\n"
              << "log        " << log_path << "\n"
              << "final loss " << last.loss << "\n"
              << "held-out mean ratio " << last.mean_ratio_heldout << "\n";
  });
}

struct EmbedArgs {
  std::string dataset;
  std::string checkpoint;
  std::string out;
};

int cmd_embed(const EmbedArgs& args) {
  return run_guarded(kExitCheckpoint, [&] {
    asl::EncoderParams params;
    try {
      params = asl::load_params(args.checkpoint);
    } catch (const asl::CodecError& e) {
      throw CheckpointMismatch(e.what());
    }
    const asl::DatasetManifest manifest =
        asl::read_manifest(fs::path(args.dataset) / "manifest.json");
    if (params.dims.height != manifest.image_size ||
        params.dims.width != manifest.image_size) {
      throw CheckpointMismatch(
          "checkpoint expects " + std::to_string(params.dims.width) + "x" +
          std::to_string(params.dims.height) + " images, dataset has " +
          std::to_string(manifest.image_size) + "x" +
          std::to_string(manifest.image_size));
    }
    fs::create_directories(args.out);
    auto embed_split = [&](const std::vector<asl::ImageId>& ids,
                           const fs::path& path) {
      std::vector<asl::Descriptor> descs;
      descs.reserve(ids.size());
      for (asl::ImageId id : ids) {
        descs.push_back(
            asl::forward(params, asl::load_image(args.dataset, id)));
      }
      asl::write_descriptors(path, params.dims.out, descs);
      return descs.size();
    };
    const std::size_t n_refs =
        embed_split(manifest.references, fs::path(args.out) / "refs.asld");
    const std::size_t n_queries =
        embed_split(manifest.queries, fs::path(args.out) / "queries.asld");
    std::cout << "embedded " << n_refs << " references, " << n_queries
              << " queries (dim " << params.dims.out << ")\n";
  });
}

struct MatchArgs {
  std::string queries;
  std::string refs;
  std::string out;
  std::string filter = "on";
  asl::MatchConfig cfg;
};

int cmd_match(const MatchArgs& args) {
  return run_guarded(kExitParse, [&] {
    asl::MatchConfig cfg = args.cfg;
    cfg.filter_enabled = parse_on_off(args.filter, "filter");
    asl::validate(cfg);
    const asl::DescriptorFile queries = asl::read_descriptors(args.queries);
    const asl::DescriptorFile refs = asl::read_descriptors(args.refs);
    if (queries.dim != refs.dim) {
      throw asl::DimensionMismatch("query dim " + std::to_string(queries.dim) +
                                       " vs reference dim " +
                                       std::to_string(refs.dim),
                                   8);
    }
    const asl::RefIndex index = asl::build_index(refs.descriptors);
    const asl::MatchOutput output =
        asl::match_all(queries.descriptors, index, cfg);
    asl::write_predictions(args.out, output.predictions);
    for (const asl::MatchFailure& f : output.failures) {
      std::cerr << "query " << f.query << ": " << f.message << "\n";
    }
    std::cout << "wrote " << output.predictions.size() << " predictions for "
              << queries.descriptors.size() << " queries to " << args.out
              << "\n";
  });
}

struct EvalArgs {
  std::string predictions;
  std::string gt;
  std::string out;
  std::int64_t n = 0;  // 0: number of queries with true matches
};

int cmd_eval(const EvalArgs& args) {
  return run_guarded(kExitParse, [&] {
    const std::vector<asl::Prediction> preds =
        asl::read_predictions(args.predictions);
    const asl::GtPairs gt = asl::read_gt_csv(args.gt);
    std::int64_t n = args.n;
    if (n == 0) {
      std::set<asl::ImageId> queries_with_matches;
      for (const auto& [q, r] : gt) queries_with_matches.insert(q);
      n = static_cast<std::int64_t>(queries_with_matches.size());
    }
    if (n < 1) {
      throw asl::ConfigInvalid("n", "must be >= 1 (no queries with true matches)");
    }
    const asl::EvalReport report = asl::evaluate(preds, gt, n);
    if (!args.out.empty()) asl::write_report_json(args.out, report);
    std::cout << asl::render_report_text(report);
  });
}

struct SweepArgs {
  std::string queries;
  std::string refs;
  std::string manifest;
  std::string gt;
  std::string out;
  std::string svg;
  std::string filter = "off";
  std::vector<double> fractions = {0.0, 0.25, 0.5, 0.75, 1.0};
  asl::MatchConfig cfg;
};

int cmd_sweep(const SweepArgs& args) {
  return run_guarded(kExitParse, [&] {
    asl::MatchConfig cfg = args.cfg;
    cfg.filter_enabled = parse_on_off(args.filter, "filter");
    asl::validate(cfg);
    const asl::DescriptorFile queries = asl::read_descriptors(args.queries);
    const asl::DescriptorFile refs = asl::read_descriptors(args.refs);
    const asl::DatasetManifest manifest = asl::read_manifest(args.manifest);
    const asl::GtPairs gt = asl::read_gt_csv(args.gt);
    const asl::RefIndex index = asl::build_index(refs.descriptors);
    const std::vector<asl::SweepPoint> curve = asl::sweep_hard_negatives(
        queries.descriptors, manifest.hard_negative_query_ids, index, cfg, gt,
        args.fractions);
    asl::write_sweep_csv(args.out, curve);
    if (!args.svg.empty()) asl::write_sweep_svg(args.svg, curve);
    for (const asl::SweepPoint& p : curve) {
      std::cout << "fraction " << p.fraction << "  micro_ap " << p.micro_ap
                << "\n";
    }
  });
}

struct CompareArgs {
  std::string report_a;
  std::string report_b;
  std::string csv;
};

int cmd_compare(const CompareArgs& args) {
  return run_guarded(kExitParse, [&] {
    const asl::EvalReport a = asl::read_report_json(args.report_a);
    const asl::EvalReport b = asl::read_report_json(args.report_b);
    const asl::ReportDelta d = asl::compare_reports(a, b);
    std::cout << asl::render_delta_text(a, b, d);
    if (!args.csv.empty()) {
      std::ofstream out(args.csv, std::ios::trunc);
      if (!out) throw asl::IoError("cannot open " + args.csv + " for writing");
      out << asl::render_delta_csv(a, b, d);
    }
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic image copy-detection pipeline"};
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON config file; flags override its values");

  GenDataArgs gen_args;
  CLI::App* gen = app.add_subcommand(
      "gen-data", "Generate a synthetic dataset (images, manifest, gt)");
  gen->add_option("--seed", gen_args.seed, "Generation seed")->required();
  gen->add_option("--out", gen_args.out, "Output directory")->required();
  gen->add_option("--refs", gen_args.cfg.references, "Reference image count")
      ->capture_default_str();
  gen->add_option("--pos", gen_args.cfg.positive_queries,
                  "Positive (edited copy) query count")
      ->capture_default_str();
  gen->add_option("--easy-neg", gen_args.cfg.easy_negatives,
                  "Easy negative query count")
      ->capture_default_str();
  gen->add_option("--hard-neg", gen_args.cfg.hard_negatives,
                  "Hard negative query count (each pairs with a reference)")
      ->capture_default_str();
  gen->add_option("--train", gen_args.cfg.train_images,
                  "Unpaired training image count")
      ->capture_default_str();
  gen->add_option("--train-hardneg-fraction",
                  gen_args.cfg.train_hardneg_fraction,
                  "Training hard-negative pairs as a fraction of --train")
      ->capture_default_str();
  gen->add_option("--image-size", gen_args.cfg.image_size, "Image side length")
      ->capture_default_str();

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "Train the encoder");
  train->add_option("--dataset", train_args.dataset, "Dataset directory")
      ->required();
  train->add_option("--out", train_args.out, "Checkpoint output path")
      ->required();
  train->add_option("--log", train_args.log,
                    "Training log CSV path (default: <out>.log.csv)");
  train->add_option("--seed", train_args.cfg.seed, "Training seed")->required();
  train
      ->add_option("--mode", train_args.mode,
                   "Objective: baseline, asl-crop, asl-negative, asl-positive, "
                   "triplet, asl-full")
      ->capture_default_str();
  train->add_option("--epochs", train_args.cfg.epochs, "Training epochs")
      ->capture_default_str();
  train->add_option("--batch-size", train_args.cfg.batch_size, "Batch size")
      ->capture_default_str();
  train->add_option("--lr", train_args.cfg.lr, "SGD learning rate")
      ->capture_default_str();
  train->add_option("--momentum", train_args.cfg.momentum, "SGD momentum")
      ->capture_default_str();
  train
      ->add_option("--weight-decay", train_args.cfg.weight_decay,
                   "L2 weight decay on weights and proxies")
      ->capture_default_str();
  train->add_option("--lambda", train_args.cfg.loss.lambda,
                    "Balance between ratio and metric terms")
      ->capture_default_str();
  train->add_option("--cosface-scale", train_args.cfg.loss.cosface_scale,
                    "CosFace logit scale s")
      ->capture_default_str();
  train->add_option("--cosface-margin", train_args.cfg.loss.cosface_margin,
                    "CosFace additive margin m")
      ->capture_default_str();
  train->add_option("--triplet-margin", train_args.cfg.loss.triplet_margin,
                    "Triplet hinge margin")
      ->capture_default_str();
  train
      ->add_option("--hardneg-fraction", train_args.cfg.hardneg_fraction,
                   "Share of each batch drawn from annotated pairs")
      ->capture_default_str();
  train->add_option("--hidden", train_args.cfg.hidden, "Hidden layer width")
      ->capture_default_str();
  train->add_option("--dim", train_args.cfg.descriptor_dim, "Descriptor dimension")
      ->capture_default_str();
  train->add_option("--probe-pairs", train_args.cfg.probe_pairs,
                    "Held-out (reference, crop) pairs for the ratio log")
      ->capture_default_str();

  EmbedArgs embed_args;
  CLI::App* embed = app.add_subcommand(
      "embed", "Embed dataset splits into descriptor files");
  embed->add_option("--dataset", embed_args.dataset, "Dataset directory")
      ->required();
  embed->add_option("--checkpoint", embed_args.checkpoint, "Checkpoint path")
      ->required();
  embed
      ->add_option("--out", embed_args.out,
                   "Output directory for refs.asld / queries.asld")
      ->required();

  MatchArgs match_args;
  CLI::App* match = app.add_subcommand(
      "match", "Two-stage matching: cosine search + norm-ratio filter");
  match->add_option("--queries", match_args.queries, "Query descriptor file")
      ->required();
  match->add_option("--refs", match_args.refs, "Reference descriptor file")
      ->required();
  match->add_option("--out", match_args.out, "Predictions CSV path")
      ->required();
  match->add_option("--k", match_args.cfg.k, "Candidates per query")
      ->capture_default_str();
  match
      ->add_option("--eps", match_args.cfg.distance_threshold,
                   "Minimum cosine similarity to keep a candidate")
      ->capture_default_str();
  match->add_option("--tau", match_args.cfg.ratio_threshold,
                    "Norm-ratio threshold")
      ->capture_default_str();
  match
      ->add_option("--delta", match_args.cfg.ratio_tolerance,
                   "Norm-ratio tolerance (0 = strict > tau rule)")
      ->capture_default_str();
  match->add_option("--filter", match_args.filter, "Ratio filter: on or off")
      ->capture_default_str();

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand(
      "eval", "Score a predictions file against ground truth");
  eval->add_option("--predictions", eval_args.predictions, "Predictions CSV")
      ->required();
  eval->add_option("--gt", eval_args.gt, "Ground-truth CSV")->required();
  eval->add_option("--out", eval_args.out, "Report JSON output path");
  eval->add_option(
      "--n", eval_args.n,
      "Top-N cutoff (default: number of queries with true matches)");

  SweepArgs sweep_args;
  CLI::App* sweep = app.add_subcommand(
      "sweep", "Micro-AP versus hard-negative query fraction");
  sweep->add_option("--queries", sweep_args.queries, "Query descriptor file")
      ->required();
  sweep->add_option("--refs", sweep_args.refs, "Reference descriptor file")
      ->required();
  sweep->add_option("--manifest", sweep_args.manifest, "Dataset manifest.json")
      ->required();
  sweep->add_option("--gt", sweep_args.gt, "Ground-truth CSV")->required();
  sweep->add_option("--out", sweep_args.out, "Sweep CSV output path")
      ->required();
  sweep->add_option("--svg", sweep_args.svg, "Optional SVG plot path");
  sweep
      ->add_option("--fractions", sweep_args.fractions,
                   "Ascending hard-negative fractions in [0,1]")
      ->delimiter(',')
      ->capture_default_str();
  sweep->add_option("--k", sweep_args.cfg.k, "Candidates per query")
      ->capture_default_str();
  sweep
      ->add_option("--eps", sweep_args.cfg.distance_threshold,
                   "Minimum cosine similarity to keep a candidate")
      ->capture_default_str();
  sweep->add_option("--tau", sweep_args.cfg.ratio_threshold,
                    "Norm-ratio threshold")
      ->capture_default_str();
  sweep->add_option("--delta", sweep_args.cfg.ratio_tolerance,
                    "Norm-ratio tolerance")
      ->capture_default_str();
  sweep->add_option("--filter", sweep_args.filter, "Ratio filter: on or off")
      ->capture_default_str();

  CompareArgs compare_args;
  CLI::App* compare =
      app.add_subcommand("compare", "Delta table between two report JSONs");
  compare->add_option("report_a", compare_args.report_a, "First report JSON")
      ->required();
  compare->add_option("report_b", compare_args.report_b, "Second report JSON")
      ->required();
  compare->add_option("--csv", compare_args.csv, "Optional delta CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  if (gen->parsed()) return cmd_gen_data(gen_args);
  if (train->parsed()) return cmd_train(train_args);
  if (embed->parsed()) return cmd_embed(embed_args);
  if (match->parsed()) return cmd_match(match_args);
  if (eval->parsed()) return cmd_eval(eval_args);
  if (sweep->parsed()) return cmd_sweep(sweep_args);
  if (compare->parsed()) return cmd_compare(compare_args);
  return kExitConfig;
}
