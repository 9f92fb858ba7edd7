#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "se3diff/backbone.hpp"
#include "se3diff/io.hpp"
#include "se3diff/stats.hpp"

using namespace se3diff;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("se3diff_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("env -u SE3DIFF_TABLE_CACHE ") + SE3DIFF_CLI_PATH + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Header plus rows of a CSV file; non-numeric cells read as NaN.
struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

Csv read_csv(const fs::path& p) {
  std::istringstream in(slurp(p));
  Csv csv;
  std::string line, cell;
  std::getline(in, line);
  std::istringstream h(line);
  while (std::getline(h, cell, ',')) csv.header.push_back(cell);
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::vector<double> v;
    while (std::getline(row, cell, ',')) {
      char* end = nullptr;
      const double x = std::strtod(cell.c_str(), &end);
      v.push_back(end == cell.c_str() + cell.size() && !cell.empty() ? x : std::nan(""));
    }
    EXPECT_EQ(v.size(), csv.header.size()) << p;
    csv.rows.push_back(v);
  }
  return csv;
}

}  // namespace

TEST(CliIgso3, EvalIntegratesToOne) {
  const fs::path dir = scratch_dir("eval");
  ASSERT_EQ(run_cli("igso3 eval --t 0.5 --grid 1000 --out " + (dir / "eval.csv").string()), 0);
  const Csv csv = read_csv(dir / "eval.csv");
  EXPECT_EQ(csv.header, (std::vector<std::string>{"omega", "f", "df"}));
  ASSERT_EQ(csv.rows.size(), 1000u);
  double mass = 0.0;
  for (std::size_t i = 1; i < csv.rows.size(); ++i) {
    const auto& a = csv.rows[i - 1];
    const auto& b = csv.rows[i];
    mass += 0.5 * (b[0] - a[0]) * (a[1] * (1 - std::cos(a[0])) + b[1] * (1 - std::cos(b[0]))) / kPi;
  }
  EXPECT_NEAR(mass, 1.0, 1e-4);
  const json m = json::parse(slurp(dir / "eval.csv.manifest.json"));
  EXPECT_EQ(m["command"], "igso3 eval");
  EXPECT_EQ(m["config"]["t"], "0.5");
  EXPECT_TRUE(m.contains("duration_s"));
}

TEST(CliIgso3, FlatSampleIsUniform) {
  const fs::path dir = scratch_dir("sample");
  ASSERT_EQ(run_cli("igso3 sample --t 50 --n 100000 --seed 3 --out " + (dir / "s.csv").string()), 0);
  const Csv csv = read_csv(dir / "s.csv");
  EXPECT_EQ(csv.header, (std::vector<std::string>{"index", "qa", "qb", "qc", "qd"}));
  std::vector<double> angles;
  for (const auto& r : csv.rows) angles.push_back(2 * std::acos(std::min(1.0, std::abs(r[1]))));
  EXPECT_EQ(angles.size(), 100000u);
  EXPECT_LT(ks_one_sample(angles, [](double w) { return (w - std::sin(w)) / kPi; }), 0.02);
}

TEST(CliIgso3, ScoreAndTableOutputs) {
  const fs::path dir = scratch_dir("score");
  ASSERT_EQ(run_cli("igso3 score --t 0.4 --n 50 --out " + (dir / "score.csv").string()), 0);
  const Csv csv = read_csv(dir / "score.csv");
  EXPECT_EQ(csv.header.size(), 8u);
  EXPECT_EQ(csv.rows.size(), 50u);
  ASSERT_EQ(run_cli("igso3 table --t 0.4 --grid 100 --out " + (dir / "table.csv").string()), 0);
  std::ifstream in(dir / "table.csv");
  const IGSO3Table t = io::read_table(in);
  EXPECT_EQ(t.size(), 100u);
  ASSERT_EQ(run_cli("igso3 table --t 0.4 --grid 100 --cache-dir " + (dir / "cache").string()), 0);
  TruncationConfig small;
  small.angle_grid = 100;
  const fs::path cached = io::table_cache_path(dir / "cache", 0.4, small);
  EXPECT_TRUE(fs::exists(cached));
  EXPECT_TRUE(fs::exists(cached.string() + ".manifest.json"));
  EXPECT_EQ(run_cli("igso3 table --t 0.4"), 1);
}

TEST(CliIgso3, MissingTimeIsUsageError) {
  const fs::path dir = scratch_dir("missing");
  EXPECT_EQ(run_cli("igso3 eval --out " + (dir / "x.csv").string()), 1);
  EXPECT_TRUE(fs::is_empty(dir));
}

TEST(CliIgso3, ExitCodes) {
  const fs::path dir = scratch_dir("codes");
  EXPECT_EQ(run_cli("igso3 eval --t 0.001 --out " + (dir / "x.csv").string()), 2);
  // A regular file standing in for the parent directory makes the write fail even as root.
  std::ofstream(dir / "plain_file") << "x";
  EXPECT_EQ(run_cli("igso3 eval --t 0.5 --out " + (dir / "plain_file" / "x.csv").string()), 3);
  EXPECT_EQ(run_cli("igso3 eval --t 0.5 --bogus 1 --out " + (dir / "x.csv").string()), 1);
  EXPECT_EQ(run_cli("nosuchcommand"), 1);
}

TEST(CliConfig, FileFillsFlagsAndFlagsWin) {
  const fs::path dir = scratch_dir("config");
  std::ofstream(dir / "cfg.json") << R"({"t": 0.5, "grid": 10})";
  ASSERT_EQ(run_cli("igso3 eval --config " + (dir / "cfg.json").string() + " --grid 20 --out " + (dir / "a.csv").string()), 0);
  EXPECT_EQ(read_csv(dir / "a.csv").rows.size(), 20u);
  const json m = json::parse(slurp(dir / "a.csv.manifest.json"));
  EXPECT_EQ(m["config"]["t"], "0.5");
  std::ofstream(dir / "bad.json") << R"({"nope": 1})";
  EXPECT_EQ(run_cli("igso3 eval --config " + (dir / "bad.json").string() + " --t 0.5 --out " + (dir / "b.csv").string()), 1);
}

TEST(CliSchedule, DefaultRows) {
  const fs::path dir = scratch_dir("schedule");
  ASSERT_EQ(run_cli("schedule --out " + (dir / "log.csv").string()), 0);
  ASSERT_EQ(run_cli("schedule --kind linear --out " + (dir / "lin.csv").string()), 0);
  const Csv log = read_csv(dir / "log.csv"), lin = read_csv(dir / "lin.csv");
  EXPECT_EQ(log.header, (std::vector<std::string>{"s", "beta", "G_x", "trans_var", "sigma_r", "rot_var", "g_r"}));
  ASSERT_EQ(log.rows.size(), 101u);
  EXPECT_EQ(log.rows.front()[1], 0.1);
  EXPECT_EQ(log.rows.front()[4], 0.1);
  EXPECT_NEAR(log.rows.back()[5], 2.25, 1e-14);
  EXPECT_GE(log.rows[50][5], lin.rows[50][5]);
  EXPECT_EQ(run_cli("schedule --beta-min 5 --beta-max 1 --out " + (dir / "bad.csv").string()), 1);
}

TEST(CliToy, RunCompareAndDeterminism) {
  const fs::path dir = scratch_dir("toy");
  const std::string common = " --paths 200 --steps 40 --seed 5 --record-every 13";
  ASSERT_EQ(run_cli("toy forward" + common + " --out-dir " + (dir / "f1").string()), 0);
  ASSERT_EQ(run_cli("toy forward" + common + " --threads 3 --out-dir " + (dir / "f2").string()), 0);
  ASSERT_EQ(run_cli("toy reverse" + common + " --out-dir " + (dir / "r").string()), 0);
  const Csv index = read_csv(dir / "f1" / "index.csv");
  ASSERT_EQ(index.rows.size(), 4u);  // grid indices 0, 13, 26, 39
  for (const auto& row : index.rows) {
    const std::string name = io::format("t_%04zu.csv", static_cast<std::size_t>(row[0]));
    EXPECT_EQ(slurp(dir / "f1" / name), slurp(dir / "f2" / name));
    const Csv per_time = read_csv(dir / "f1" / name);
    EXPECT_EQ(per_time.header.size(), 8u);
    EXPECT_EQ(per_time.rows.size(), 200u);
  }
  ASSERT_EQ(run_cli("toy compare --a " + (dir / "f1").string() + " --b " + (dir / "f2").string() + " --out " +
                    (dir / "self.json").string()),
            0);
  const json self = json::parse(slurp(dir / "self.json"));
  EXPECT_EQ(self["max_ks"].get<double>(), 0.0);
  ASSERT_EQ(run_cli("toy compare --a " + (dir / "f1").string() + " --b " + (dir / "r").string() + " --out " +
                    (dir / "fr.json").string()),
            0);
  const json fr = json::parse(slurp(dir / "fr.json"));
  EXPECT_EQ(fr["ks"].size(), 4u);

  ASSERT_EQ(run_cli("toy forward --paths 200 --steps 30 --seed 5 --out-dir " + (dir / "g").string()), 0);
  EXPECT_EQ(run_cli("toy compare --a " + (dir / "f1").string() + " --b " + (dir / "g").string() + " --out " +
                    (dir / "bad.json").string()),
            1);
  EXPECT_TRUE(fs::exists(dir / "f1" / "manifest.json"));
}

TEST(CliToy, DefaultsInManifest) {
  const fs::path dir = scratch_dir("toydefaults");
  ASSERT_EQ(run_cli("toy forward --paths 10 --out-dir " + (dir / "f").string()), 0);
  const json m = json::parse(slurp(dir / "f" / "manifest.json"));
  EXPECT_EQ(m["config"]["T"], "4");
  EXPECT_EQ(m["config"]["steps"], "200");
  EXPECT_EQ(read_csv(dir / "f" / "index.csv").rows.size(), 200u);
}

TEST(CliBackbones, ZeroNoiseIsSeedIndependent) {
  const fs::path dir = scratch_dir("bb0");
  const std::string common = " --n-residues 12 --n-steps 60 --zeta 0 --score fixed-target";
  ASSERT_EQ(run_cli("sample-backbones" + common + " --seed 1 --out " + (dir / "a.pdb").string()), 0);
  ASSERT_EQ(run_cli("sample-backbones" + common + " --seed 2 --out " + (dir / "b.pdb").string()), 0);
  ASSERT_EQ(run_cli("sample-backbones" + common + " --seed 1 --init-seed 4 --out " + (dir / "c.pdb").string()), 0);
  EXPECT_EQ(slurp(dir / "a.pdb"), slurp(dir / "b.pdb"));
  EXPECT_NE(slurp(dir / "a.pdb"), slurp(dir / "c.pdb"));
}

TEST(CliBackbones, PdbParseBackMatchesTrajectory) {
  const fs::path dir = scratch_dir("bb");
  ASSERT_EQ(run_cli("sample-backbones --n-residues 16 --n-steps 80 --score fixed-target --seed 9 --geometry " +
                    (fs::path(SE3DIFF_SOURCE_DIR) / "config" / "ideal_geometry.json").string() + " --out " +
                    (dir / "x.pdb").string() + " --trajectory " + (dir / "traj.csv").string() + " --record-every 20"),
            0);
  std::ifstream in(dir / "x.pdb");
  const auto atoms = io::read_pdb_backbone(in);
  ASSERT_EQ(atoms.size(), 16u);
  const Csv traj = read_csv(dir / "traj.csv");
  EXPECT_EQ(traj.header, (std::vector<std::string>{"t", "chain_id", "residue_index", "qa", "qb", "qc", "qd", "x", "y", "z"}));
  // The last 16 rows hold the final state at t = eps.
  ASSERT_GE(traj.rows.size(), 16u);
  for (std::size_t n = 0; n < 16; ++n) {
    const auto& row = traj.rows[traj.rows.size() - 16 + n];
    EXPECT_NEAR(row[0], 0.01, 1e-12);
    const Rotation expected = rotation_from_quat({row[3], row[4], row[5], row[6]});
    const Frame got = atom2frame(atoms[n]);
    EXPECT_LT(rotation_angle(expected.inverse() * got.rotation), 1e-3);
    EXPECT_LT((got.translation - Vec3(row[7], row[8], row[9])).cwiseAbs().maxCoeff(), 1e-3);
  }
  const json m = json::parse(slurp(dir / "x.pdb.manifest.json"));
  EXPECT_EQ(m["outputs"].size(), 2u);
  EXPECT_EQ(m["config"]["zeta"], "0.1");
  EXPECT_EQ(m["config"]["n-steps"], "80");
}

TEST(CliBackbones, MultipleChainsAndErrors) {
  const fs::path dir = scratch_dir("bbm");
  ASSERT_EQ(run_cli("sample-backbones --n-residues 4 --n-steps 10 --chains 3 --out " + (dir / "m.pdb").string()), 0);
  const std::string pdb = slurp(dir / "m.pdb");
  EXPECT_NE(pdb.find("MODEL        3"), std::string::npos);
  EXPECT_EQ(run_cli("sample-backbones --score neural --out " + (dir / "x.pdb").string()), 1);
  EXPECT_EQ(run_cli("sample-backbones --zeta 2 --out " + (dir / "x.pdb").string()), 1);
  EXPECT_EQ(run_cli("sample-backbones --geometry /nonexistent.json --n-steps 5 --n-residues 2 --out " +
                    (dir / "x.pdb").string()),
            3);
}
