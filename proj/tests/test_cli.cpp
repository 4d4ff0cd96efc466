#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include <nlohmann/json.hpp>

namespace {

namespace fs = std::filesystem;

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

fs::path work_root() {
  static const fs::path root = [] {
    const fs::path p = fs::temp_directory_path() / "asl_cli_tests";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

RunResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path out_file = work_root() / ("stdout_" + std::to_string(counter));
  const fs::path err_file = work_root() / ("stderr_" + std::to_string(counter));
  ++counter;
  const std::string cmd = std::string(ASL_CLI_PATH) + " " + args + " >" +
                          out_file.string() + " 2>" + err_file.string();
  const int raw = std::system(cmd.c_str());
  RunResult result;
  result.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  result.out = slurp(out_file);
  result.err = slurp(err_file);
  return result;
}

std::string file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> file_lines(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

// One small dataset + checkpoint + embeddings shared by the pipeline tests.
struct Fixture {
  fs::path dataset;
  fs::path checkpoint;
  fs::path embeddings;
};

const Fixture& fixture() {
  static const Fixture fx = [] {
    Fixture f;
    f.dataset = work_root() / "dataset";
    f.checkpoint = work_root() / "ckpt.aslp";
    f.embeddings = work_root() / "emb";
    RunResult gen = run_cli(
        "gen-data --seed 11 --out " + f.dataset.string() +
        " --image-size 16 --refs 16 --pos 6 --easy-neg 4 --hard-neg 6"
        " --train 8 --train-hardneg-fraction 0.5");
    REQUIRE(gen.exit_code == 0);
    RunResult train = run_cli(
        "train --dataset " + f.dataset.string() + " --out " +
        f.checkpoint.string() +
        " --seed 3 --mode asl-crop --epochs 4 --batch-size 4 --hidden 8"
        " --dim 4 --probe-pairs 5");
    REQUIRE(train.exit_code == 0);
    RunResult embed = run_cli("embed --dataset " + f.dataset.string() +
                              " --checkpoint " + f.checkpoint.string() +
                              " --out " + f.embeddings.string());
    REQUIRE(embed.exit_code == 0);
    return f;
  }();
  return fx;
}

}  // namespace

TEST_CASE("cli: gen-data is byte-identical across reruns") {
  const fs::path dir_a = work_root() / "gen_a";
  const fs::path dir_b = work_root() / "gen_b";
  const std::string flags =
      " --seed 7 --image-size 16 --refs 10 --pos 3 --easy-neg 3 --hard-neg 4"
      " --train 4 --train-hardneg-fraction 0.5";
  CHECK(run_cli("gen-data --out " + dir_a.string() + flags).exit_code == 0);
  CHECK(run_cli("gen-data --out " + dir_b.string() + flags).exit_code == 0);
  for (const char* name : {"manifest.json", "gt.csv", "train_pairs.csv"}) {
    CHECK(file_bytes(dir_a / name) == file_bytes(dir_b / name));
  }
  for (const auto& entry : fs::directory_iterator(dir_a / "images")) {
    CHECK(file_bytes(entry.path()) ==
          file_bytes(dir_b / "images" / entry.path().filename()));
  }
}

TEST_CASE("cli: gen-data prints the query count breakdown") {
  const fs::path dir = work_root() / "gen_counts";
  const RunResult r = run_cli(
      "gen-data --seed 2 --out " + dir.string() +
      " --image-size 16 --refs 10 --pos 3 --easy-neg 4 --hard-neg 5 --train 2"
      " --train-hardneg-fraction 0");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("queries      12 (pos 3 + easy 4 + hard 5)") !=
        std::string::npos);
}

TEST_CASE("cli: gen-data rejects refs = 0 with exit 2") {
  const RunResult r = run_cli("gen-data --seed 1 --out " +
                              (work_root() / "bad").string() + " --refs 0");
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("refs") != std::string::npos);
  CHECK(r.err.find(">= 1") != std::string::npos);
}

TEST_CASE("cli: train rejects unknown modes with exit 2 and lists them") {
  const Fixture& f = fixture();
  const RunResult r = run_cli("train --dataset " + f.dataset.string() +
                              " --out " + (work_root() / "x.aslp").string() +
                              " --seed 1 --mode frobnicate");
  CHECK(r.exit_code == 2);
  for (const char* name : {"baseline", "asl-crop", "asl-negative",
                           "asl-positive", "triplet", "asl-full"}) {
    CHECK(r.err.find(name) != std::string::npos);
  }
}

TEST_CASE("cli: train with lr 0 never moves off the initialization") {
  const Fixture& f = fixture();
  const fs::path ck_short = work_root() / "lr0_short.aslp";
  const fs::path ck_long = work_root() / "lr0_long.aslp";
  const std::string base = "train --dataset " + f.dataset.string() +
                           " --seed 9 --mode baseline --lr 0 --batch-size 4"
                           " --hidden 8 --dim 4 --probe-pairs 2";
  CHECK(run_cli(base + " --epochs 1 --out " + ck_short.string()).exit_code == 0);
  CHECK(run_cli(base + " --epochs 5 --out " + ck_long.string()).exit_code == 0);
  CHECK(file_bytes(ck_short) == file_bytes(ck_long));
}

TEST_CASE("cli: train writes a log row per epoch") {
  const Fixture& f = fixture();
  const fs::path ck = work_root() / "one_epoch.aslp";
  const fs::path log = work_root() / "one_epoch.csv";
  const RunResult r = run_cli(
      "train --dataset " + f.dataset.string() + " --out " + ck.string() +
      " --log " + log.string() +
      " --seed 4 --mode baseline --epochs 1 --batch-size 4 --hidden 8 --dim 4"
      " --probe-pairs 2");
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(ck));
  const auto lines = file_lines(log);
  REQUIRE(lines.size() == 2);  // header + 1 row
  CHECK(lines[0] == "epoch,loss,mean_ratio_heldout");
}

TEST_CASE("cli: embed writes one descriptor per manifest entry, reruns identical") {
  const Fixture& f = fixture();
  const fs::path again = work_root() / "emb_again";
  const RunResult r = run_cli("embed --dataset " + f.dataset.string() +
                              " --checkpoint " + f.checkpoint.string() +
                              " --out " + again.string());
  CHECK(r.exit_code == 0);
  CHECK(file_bytes(f.embeddings / "refs.asld") ==
        file_bytes(again / "refs.asld"));
  CHECK(file_bytes(f.embeddings / "queries.asld") ==
        file_bytes(again / "queries.asld"));
  CHECK(r.out.find("16 references") != std::string::npos);
  CHECK(r.out.find("16 queries") != std::string::npos);  // 6 + 4 + 6
}

TEST_CASE("cli: embed rejects a corrupted checkpoint with exit 5") {
  const Fixture& f = fixture();
  const fs::path bad = work_root() / "bad.aslp";
  std::string bytes = file_bytes(f.checkpoint);
  bytes[0] = 'X';
  std::ofstream(bad, std::ios::binary).write(bytes.data(), bytes.size());
  const RunResult r = run_cli("embed --dataset " + f.dataset.string() +
                              " --checkpoint " + bad.string() + " --out " +
                              (work_root() / "emb_bad").string());
  CHECK(r.exit_code == 5);
}

TEST_CASE("cli: match filter output is a line subset of the unfiltered run") {
  const Fixture& f = fixture();
  const fs::path open_csv = work_root() / "preds_open.csv";
  const fs::path strict_csv = work_root() / "preds_filtered.csv";
  const std::string base = "match --queries " +
                           (f.embeddings / "queries.asld").string() +
                           " --refs " + (f.embeddings / "refs.asld").string() +
                           " --k 5 --eps 0.2";
  CHECK(run_cli(base + " --filter off --out " + open_csv.string()).exit_code == 0);
  CHECK(run_cli(base + " --filter on --out " + strict_csv.string()).exit_code == 0);

  const auto open_lines = file_lines(open_csv);
  const auto strict_lines = file_lines(strict_csv);
  CHECK(strict_lines.size() <= open_lines.size());
  std::size_t cursor = 0;
  for (const std::string& line : strict_lines) {
    bool found = false;
    while (cursor < open_lines.size()) {
      if (open_lines[cursor++] == line) {
        found = true;
        break;
      }
    }
    CHECK(found);  // order-preserving subset
  }
}

TEST_CASE("cli: eval reproduces the hand-built micro-AP fixture") {
  const fs::path preds = work_root() / "fixture_preds.csv";
  const fs::path gt = work_root() / "fixture_gt.csv";
  std::ofstream(preds) << "query_id,ref_id,score\n"
                       << "1,100,0.9\n"
                       << "2,200,0.5\n"
                       << "3,300,0.2\n";
  std::ofstream(gt) << "query_id,ref_id\n"
                    << "1,100\n"
                    << "3,300\n";
  const fs::path report = work_root() / "fixture_report.json";
  const RunResult r = run_cli("eval --predictions " + preds.string() +
                              " --gt " + gt.string() + " --out " +
                              report.string());
  CHECK(r.exit_code == 0);
  nlohmann::json j;
  std::ifstream(report) >> j;
  CHECK(std::abs(j["micro_ap"].get<double>() - 0.833333) < 1e-6);
  CHECK(j["n"].get<int>() == 2);
  CHECK(j["num_gt_pairs"].get<int>() == 2);
}

TEST_CASE("cli: eval rejects malformed predictions with exit 6 and a line number") {
  const fs::path preds = work_root() / "broken_preds.csv";
  const fs::path gt = work_root() / "broken_gt.csv";
  std::ofstream(preds) << "query_id,ref_id,score\n1,100,0.9\n2,not_a_number\n";
  std::ofstream(gt) << "query_id,ref_id\n1,100\n";
  const RunResult r =
      run_cli("eval --predictions " + preds.string() + " --gt " + gt.string());
  CHECK(r.exit_code == 6);
  CHECK(r.err.find("line 3") != std::string::npos);
}

TEST_CASE("cli: missing inputs exit with 3") {
  const RunResult r = run_cli("eval --predictions /nonexistent/p.csv --gt /nonexistent/g.csv");
  CHECK(r.exit_code == 3);
}

TEST_CASE("cli: sweep writes one row per fraction plus the SVG") {
  const Fixture& f = fixture();
  const fs::path csv = work_root() / "sweep.csv";
  const fs::path svg = work_root() / "sweep.svg";
  const RunResult r = run_cli(
      "sweep --queries " + (f.embeddings / "queries.asld").string() +
      " --refs " + (f.embeddings / "refs.asld").string() + " --manifest " +
      (f.dataset / "manifest.json").string() + " --gt " +
      (f.dataset / "gt.csv").string() + " --out " + csv.string() + " --svg " +
      svg.string() + " --fractions 0,0.5,1 --eps 0.2");
  CHECK(r.exit_code == 0);
  const auto lines = file_lines(csv);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == "fraction,micro_ap");
  CHECK(fs::exists(svg));
  CHECK(file_bytes(svg).find("<svg") != std::string::npos);
}

TEST_CASE("cli: compare reports zero deltas against itself") {
  const fs::path report = work_root() / "cmp_report.json";
  std::ofstream(report) << R"({"micro_ap":0.5,"precision_at_n":0.4,"n":10,)"
                        << R"("tp":4,"fp":6,"num_gt_pairs":10,)"
                        << R"("short_list":false})";
  const fs::path csv = work_root() / "cmp.csv";
  const RunResult r = run_cli("compare " + report.string() + " " +
                              report.string() + " --csv " + csv.string());
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("micro_ap") != std::string::npos);
  const auto lines = file_lines(csv);
  REQUIRE(lines.size() >= 2);
  CHECK(lines[0] == "field,a,b,delta");
  CHECK(lines[1] == "micro_ap,0.5,0.5,0");
}

TEST_CASE("cli: config file supplies defaults, flags override") {
  const fs::path cfg = work_root() / "config.json";
  std::ofstream(cfg) << R"({"gen-data": {"refs": 9, "pos": 2, "easy-neg": 2,)"
                     << R"( "hard-neg": 3, "train": 2, "image-size": 16,)"
                     << R"( "train-hardneg-fraction": 0}})";
  const fs::path dir = work_root() / "gen_from_config";
  const RunResult r = run_cli("--config " + cfg.string() + " gen-data --seed 5"
                              " --out " + dir.string() + " --pos 4");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("references   9") != std::string::npos);
  // --pos on the command line wins over the config file's 2.
  CHECK(r.out.find("(pos 4 + easy 2 + hard 3)") != std::string::npos);
}

TEST_CASE("cli: every subcommand answers --help with exit 0") {
  for (const char* sub : {"gen-data", "train", "embed", "match", "eval",
                          "sweep", "compare"}) {
    const RunResult r = run_cli(std::string(sub) + " --help");
    CHECK(r.exit_code == 0);
    CHECK(!r.out.empty());
  }
  // Defaults documented in help match the shipped decision values.
  CHECK(run_cli("match --help").out.find("0.05") != std::string::npos);
  CHECK(run_cli("train --help").out.find("0.01") != std::string::npos);
}
