// se3diff command-line driver.
//
//   se3diff igso3 {eval,sample,score,table}   isotropic Gaussian on SO(3)
//   se3diff schedule                           noise-schedule CSV
//   se3diff toy {forward,reverse,run,compare}  discrete-target experiment on SO(3)
//   se3diff sample-backbones                   reverse SE(3)^N walk to PDB
//
// Exit codes: 0 success, 1 usage, 2 numerical domain, 3 I/O.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "se3diff/io.hpp"
#include "se3diff/se3diff.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace se3diff;

namespace {

constexpr const char* kCacheEnv = "SE3DIFF_TABLE_CACHE";

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::string option_key(const CLI::Option* opt) {
  std::string name = opt->get_name();
  while (!name.empty() && name.front() == '-') name.erase(name.begin());
  return name;
}

// Fills options not given on the command line from a JSON object.
void apply_config(CLI::App* app, const std::string& config_path) {
  if (config_path.empty()) return;
  std::ifstream in(config_path);
  if (!in) throw IoError("cannot open config " + config_path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(std::string("bad config JSON: ") + e.what());
  }
  if (!j.is_object()) throw UsageError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    CLI::Option* opt = app->get_option_no_throw("--" + key);
    if (opt == nullptr) throw UsageError("unknown config key '" + key + "'");
    if (opt->count() > 0) continue;
    opt->add_result(value.is_string() ? value.get<std::string>() : value.dump());
    opt->run_callback();
  }
}

json config_snapshot(const CLI::App* app) {
  json snap = json::object();
  for (const CLI::Option* opt : app->get_options()) {
    const std::string key = option_key(opt);
    if (key == "help" || key == "config") continue;
    snap[key] = opt->count() > 0 ? opt->as<std::string>() : opt->get_default_str();
  }
  return snap;
}

struct Manifest {
  std::string command;
  json config;
  std::uint64_t seed = 0;
  std::vector<std::string> outputs;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void write(const fs::path& path) const {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    json j{{"command", command}, {"config", config}, {"seed", seed}, {"outputs", outputs}, {"duration_s", secs}};
    auto out = open_out(path);
    out << j.dump(2) << '\n';
  }
};

void require(double value, const char* flag) {
  if (std::isnan(value)) throw UsageError(std::string("missing required option --") + flag);
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string("missing required option --") + flag);
}

fs::path manifest_path_for(const fs::path& out) { return fs::path(out.string() + ".manifest.json"); }

// ------------------------------------------------------------------ igso3

struct Igso3Opts {
  double t = std::nan("");
  std::size_t grid = 1000;
  int terms = 2000;
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  std::string out;
  std::string cache_dir;

  TruncationConfig trunc() const {
    TruncationConfig c;
    c.angle_grid = grid;
    c.series_terms = terms;
    c.validate();
    return c;
  }

  std::string cache_root() const {
    const char* env = std::getenv(kCacheEnv);
    return !cache_dir.empty() ? cache_dir : (env ? env : "");
  }

  IGSO3Table table() const {
    const std::string dir = cache_root();
    return dir.empty() ? build_table(t, trunc()) : io::cached_table(dir, t, trunc());
  }
};

void run_igso3(const std::string& sub, const Igso3Opts& o, Manifest& m) {
  require(o.t, "t");
  if (sub != "table") require(o.out, "out");
  const TruncationConfig cfg = o.trunc();
  m.seed = o.seed;

  if (sub == "eval") {
    const std::vector<double> grid = uniform_angle_grid(o.grid);
    std::ostringstream body;
    body << "omega,f,df\n";
    for (double w : grid) {
      const SeriesValue s = igso3_series(w, o.t, cfg);
      body << io::format("%.17g,%.17g,%.17g\n", w, s.f, s.df);
    }
    open_out(o.out) << body.str();
  } else if (sub == "sample") {
    const IGSO3Table table = o.table();
    Rng rng = make_stream(o.seed, 0);
    std::ostringstream body;
    body << "index,qa,qb,qc,qd\n";
    for (std::size_t i = 0; i < o.n; ++i) {
      const UnitQuaternion q = quat_from_rotation(sample_igso3(Rotation::identity(), table, rng));
      body << io::format("%zu,%.17g,%.17g,%.17g,%.17g\n", i, q.a, q.b, q.c, q.d);
    }
    open_out(o.out) << body.str();
  } else if (sub == "score") {
    const IGSO3Table table = o.table();
    Rng rng = make_stream(o.seed, 0);
    std::ostringstream body;
    body << "index,qa,qb,qc,qd,s1,s2,s3\n";
    for (std::size_t i = 0; i < o.n; ++i) {
      const Rotation r = sample_igso3(Rotation::identity(), table, rng);
      const Tangent s = conditional_score(Rotation::identity(), r, o.t, cfg);
      const Vec3 c = vee(SkewMat::from_matrix(r.matrix().transpose() * s));
      const UnitQuaternion q = quat_from_rotation(r);
      body << io::format("%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", i, q.a, q.b, q.c, q.d, c.x(), c.y(),
                         c.z());
    }
    open_out(o.out) << body.str();
  } else {  // table
    const IGSO3Table table = o.table();
    if (o.out.empty() && o.cache_dir.empty() && std::getenv(kCacheEnv) == nullptr)
      throw UsageError("table needs --out, --cache-dir or " + std::string(kCacheEnv));
    if (!o.out.empty()) {
      auto out = open_out(o.out);
      io::write_table(out, table);
    } else {
      const fs::path cached = io::table_cache_path(o.cache_root(), o.t, cfg);
      m.outputs.push_back(cached.string());
      m.write(manifest_path_for(cached));
      return;
    }
  }
  if (!o.out.empty()) {
    m.outputs.push_back(o.out);
    m.write(manifest_path_for(o.out));
  }
}

// ------------------------------------------------------------------ schedule

struct ScheduleOpts {
  std::size_t points = 101;
  double beta_min = 0.1, beta_max = 20.0;
  double sigma_min = 0.1, sigma_max = 1.5;
  std::string kind = "logarithmic";
  std::string out;
};

void run_schedule(const ScheduleOpts& o, Manifest& m) {
  require(o.out, "out");
  if (o.points < 2) throw UsageError("--points must be >= 2");
  Schedules sch;
  sch.trans = {o.beta_min, o.beta_max};
  sch.rot = {o.sigma_min, o.sigma_max, parse_sigma_kind(o.kind)};
  sch.trans.validate();
  sch.rot.validate();
  std::ostringstream body;
  body << "s,beta,G_x,trans_var,sigma_r,rot_var,g_r\n";
  for (std::size_t i = 0; i < o.points; ++i) {
    const double s = static_cast<double>(i) / static_cast<double>(o.points - 1);
    const double trans_var = s > 0.0 ? trans_marginal(Vec3::Zero(), s, sch.trans).variance : 0.0;
    body << io::format("%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", s, beta(s, sch.trans), G_x(s, sch.trans),
                       trans_var, sigma_r(s, sch.rot), rot_variance(s, sch.rot), g_r(s, sch.rot));
  }
  open_out(o.out) << body.str();
  m.outputs.push_back(o.out);
  m.write(manifest_path_for(o.out));
}

// ------------------------------------------------------------------ toy

struct ToyOpts {
  std::size_t atoms = 3;
  std::uint64_t atom_seed = 0;
  std::size_t paths = 5000;
  double T = 4.0;
  std::size_t steps = 200;
  std::uint64_t seed = 0;
  std::size_t record_every = 1;
  unsigned threads = 0;
  std::string out_dir;
  std::string a, b, out;  // compare

  ToyRunConfig run_config() const {
    ToyRunConfig c;
    c.n_paths = paths;
    c.T = T;
    c.n_steps = steps;
    c.seed = seed;
    c.threads = threads;
    c.validate();
    if (record_every < 1) throw UsageError("--record-every must be >= 1");
    return c;
  }
};

std::vector<std::size_t> recorded_indices(std::size_t n, std::size_t every) {
  std::vector<std::size_t> idx;
  for (std::size_t j = 0; j < n; j += every) idx.push_back(j);
  if (idx.back() != n - 1) idx.push_back(n - 1);
  return idx;
}

void write_toy_run(const fs::path& dir, const DiscreteTarget& target, const Marginals& marg,
                   const std::vector<std::size_t>& idx, Manifest& m) {
  fs::create_directories(dir);
  {
    auto out = open_out(dir / "atoms.csv");
    out << "atom_id,qa,qb,qc,qd,weight\n";
    for (std::size_t k = 0; k < target.size(); ++k) {
      const UnitQuaternion q = quat_from_rotation(target.atoms[k]);
      out << io::format("%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", k, q.a, q.b, q.c, q.d, target.weights[k]);
    }
    m.outputs.push_back((dir / "atoms.csv").string());
  }
  auto index = open_out(dir / "index.csv");
  index << "time_index,t,file\n";
  for (std::size_t j : idx) {
    const std::string name = io::format("t_%04zu.csv", j);
    index << io::format("%zu,%.17g,%s\n", j, marg.times[j], name.c_str());
    std::ostringstream body;
    body << "path_id,qa,qb,qc,qd";
    for (std::size_t k = 0; k < target.size(); ++k) body << ",angle_to_atom_" << k;
    body << '\n';
    std::vector<std::vector<double>> ang;
    for (const auto& atom : target.atoms) ang.push_back(angles_to_atom(marg.samples[j], atom));
    for (std::size_t p = 0; p < marg.samples[j].size(); ++p) {
      const UnitQuaternion q = quat_from_rotation(marg.samples[j][p]);
      body << io::format("%zu,%.12g,%.12g,%.12g,%.12g", p, q.a, q.b, q.c, q.d);
      for (const auto& a : ang) body << io::format(",%.12g", a[p]);
      body << '\n';
    }
    open_out(dir / name) << body.str();
    m.outputs.push_back((dir / name).string());
  }
  m.outputs.push_back((dir / "index.csv").string());
}

struct ToyRunFiles {
  std::vector<std::pair<std::size_t, double>> times;  // (grid index, t)
  std::vector<std::string> files;
  std::string atoms_csv;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ToyRunFiles read_toy_index(const fs::path& dir) {
  std::istringstream in(slurp(dir / "index.csv"));
  std::string line;
  std::getline(in, line);
  ToyRunFiles r;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t j;
    double t;
    char name[256];
    if (std::sscanf(line.c_str(), "%zu,%lf,%255s", &j, &t, name) != 3) throw IoError("bad index.csv row");
    r.times.emplace_back(j, t);
    r.files.emplace_back(name);
  }
  r.atoms_csv = slurp(dir / "atoms.csv");
  return r;
}

// Angle to the nearest atom for every row of a per-time CSV.
std::vector<double> read_nearest_angles(const fs::path& file) {
  std::istringstream in(slurp(file));
  std::string line;
  std::getline(in, line);
  std::vector<double> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    int col = 0;
    double best = kPi;
    while (std::getline(row, cell, ',')) {
      if (col++ >= 5) best = std::min(best, std::stod(cell));
    }
    if (col < 6) throw IoError("per-time CSV has no angle columns");
    out.push_back(best);
  }
  return out;
}

json compare_runs(const fs::path& a, const fs::path& b) {
  const ToyRunFiles ra = read_toy_index(a), rb = read_toy_index(b);
  if (ra.times != rb.times) throw UsageError("toy runs have mismatched time grids");
  if (ra.atoms_csv != rb.atoms_csv) throw UsageError("toy runs have different target atoms");
  json times = json::array(), ks = json::array();
  double max_ks = 0.0;
  for (std::size_t i = 0; i < ra.times.size(); ++i) {
    const double d = ks_two_sample(read_nearest_angles(a / ra.files[i]), read_nearest_angles(b / rb.files[i]));
    times.push_back(ra.times[i].second);
    ks.push_back(d);
    max_ks = std::max(max_ks, d);
  }
  return {{"times", times}, {"ks", ks}, {"max_ks", max_ks}};
}

void run_toy(const std::string& sub, const ToyOpts& o, Manifest& m) {
  m.seed = o.seed;
  if (sub == "compare") {
    require(o.a, "a");
    require(o.b, "b");
    require(o.out, "out");
    const json result = compare_runs(o.a, o.b);
    open_out(o.out) << result.dump(2) << '\n';
    m.outputs.push_back(o.out);
    m.write(manifest_path_for(o.out));
    return;
  }
  require(o.out_dir, "out-dir");
  const ToyRunConfig cfg = o.run_config();
  if (o.atoms < 1) throw UsageError("--atoms must be >= 1");
  const DiscreteTarget target = DiscreteTarget::random_uniform(o.atoms, o.atom_seed);
  const fs::path dir(o.out_dir);
  const auto idx = recorded_indices(cfg.n_steps, o.record_every);
  if (sub == "forward") {
    write_toy_run(dir, target, run_forward(target, cfg), idx, m);
  } else if (sub == "reverse") {
    write_toy_run(dir, target, run_reverse(target, cfg), idx, m);
  } else {  // run: both directions plus the comparison
    write_toy_run(dir / "forward", target, run_forward(target, cfg), idx, m);
    write_toy_run(dir / "reverse", target, run_reverse(target, cfg), idx, m);
    const json result = compare_runs(dir / "forward", dir / "reverse");
    open_out(dir / "summary.json") << result.dump(2) << '\n';
    m.outputs.push_back((dir / "summary.json").string());
  }
  m.write(dir / "manifest.json");
}

// ------------------------------------------------------------------ sample-backbones

struct BackboneOpts {
  std::size_t n_residues = 64;
  std::size_t n_steps = 500;
  double eps = 0.01;
  double zeta = 0.1;
  std::string score = "prior-only";
  std::size_t chains = 1;
  std::uint64_t seed = 0;
  std::uint64_t init_seed = 0;
  std::string geometry;
  std::string out;
  std::string trajectory;
  std::size_t record_every = 1;
  unsigned threads = 0;
};

// Ideal alpha-helix-like frame set used as the fixed denoising target.
FrameSet helix_target(std::size_t n) {
  constexpr double radius = 0.23, rise = 0.15, turn = 100.0 * kPi / 180.0;
  FrameSet fs;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = turn * static_cast<double>(i);
    Frame f;
    f.rotation = exp_so3(hat(Vec3(0.0, 0.0, a)));
    f.translation = Vec3(radius * std::cos(a), radius * std::sin(a), rise * static_cast<double>(i));
    fs.frames.push_back(f);
  }
  return center(fs);
}

void run_backbones(const BackboneOpts& o, Manifest& m) {
  require(o.out, "out");
  if (o.n_residues < 1) throw UsageError("--n-residues must be >= 1");
  if (o.chains < 1) throw UsageError("--chains must be >= 1");
  m.seed = o.seed;
  SimConfig cfg;
  cfg.n_steps = o.n_steps;
  cfg.eps = o.eps;
  cfg.zeta = o.zeta;
  cfg.record_every = o.trajectory.empty() ? o.n_steps : o.record_every;
  cfg.validate();
  const Schedules sch;
  const IdealGeometry geom = o.geometry.empty() ? IdealGeometry{} : io::load_ideal_geometry(o.geometry);

  ScoreField score;
  if (o.score == "prior-only") {
    score = prior_score();
  } else if (o.score == "fixed-target") {
    score = fixed_target_score(helix_target(o.n_residues), sch);
  } else {
    throw UsageError("--score must be prior-only or fixed-target");
  }

  std::vector<Trajectory> trajs(o.chains);
  parallel_for(
      o.chains,
      [&](std::size_t c) {
        Rng init_rng = make_stream(o.init_seed, c, /*tag=*/4);
        const FrameSet init = sample_reference(o.n_residues, init_rng);
        Rng rng = make_stream(o.seed, c, /*tag=*/3);
        trajs[c] = reverse_walk(init, score, sch, cfg, rng);
      },
      o.threads);

  std::ostringstream pdb;
  const std::vector<Psi> psi(o.n_residues, Psi::from_angle(0.0));
  for (std::size_t c = 0; c < o.chains; ++c) {
    if (o.chains > 1) pdb << io::format("MODEL     %4zu", c + 1) << '\n';
    io::write_pdb(pdb, frames_to_atoms(trajs[c].states.back(), psi, geom));
    if (o.chains > 1) pdb << "ENDMDL\n";
  }
  open_out(o.out) << pdb.str();
  m.outputs.push_back(o.out);

  if (!o.trajectory.empty()) {
    std::ostringstream body;
    body << io::kTrajectoryHeader << '\n';
    for (std::size_t c = 0; c < o.chains; ++c) io::write_trajectory_rows(body, trajs[c], c);
    open_out(o.trajectory) << body.str();
    m.outputs.push_back(o.trajectory);
  }
  m.write(manifest_path_for(o.out));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Score-based diffusion on SO(3) and SE(3)^N"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  std::string config_path;

  Igso3Opts ig;
  auto* igso3 = app.add_subcommand("igso3", "Isotropic Gaussian on SO(3)");
  igso3->require_subcommand(1);
  std::map<std::string, CLI::App*> ig_subs;
  for (const char* name : {"eval", "sample", "score", "table"}) {
    auto* s = igso3->add_subcommand(name);
    s->add_option("--t", ig.t, "Diffusion time (IGSO3 variance)");
    s->add_option("--grid", ig.grid, "Angle grid size");
    s->add_option("--terms", ig.terms, "Series terms");
    s->add_option("--n", ig.n, "Number of draws");
    s->add_option("--seed", ig.seed, "Random seed");
    s->add_option("--out", ig.out, "Output file");
    s->add_option("--cache-dir", ig.cache_dir, std::string("Table cache directory (default $") + kCacheEnv + ")");
    s->add_option("--config", config_path, "JSON config; flags win");
    ig_subs[name] = s;
  }

  ScheduleOpts so;
  auto* schedule = app.add_subcommand("schedule", "Write the noise-schedule CSV");
  schedule->add_option("--points", so.points, "Grid points on [0, 1]");
  schedule->add_option("--beta-min", so.beta_min);
  schedule->add_option("--beta-max", so.beta_max);
  schedule->add_option("--sigma-min", so.sigma_min);
  schedule->add_option("--sigma-max", so.sigma_max);
  schedule->add_option("--kind", so.kind, "Rotation schedule: logarithmic or linear");
  schedule->add_option("--out", so.out, "Output CSV");
  schedule->add_option("--config", config_path, "JSON config; flags win");

  ToyOpts to;
  auto* toy = app.add_subcommand("toy", "Discrete-target experiment on SO(3)");
  toy->require_subcommand(1);
  std::map<std::string, CLI::App*> toy_subs;
  for (const char* name : {"forward", "reverse", "run"}) {
    auto* s = toy->add_subcommand(name);
    s->add_option("--atoms", to.atoms, "Number of target atoms");
    s->add_option("--atom-seed", to.atom_seed, "Seed for the target atoms");
    s->add_option("--paths", to.paths, "Number of paths");
    s->add_option("--T", to.T, "Final time");
    s->add_option("--steps", to.steps, "Grid points on [0, T]");
    s->add_option("--seed", to.seed, "Random seed");
    s->add_option("--record-every", to.record_every, "Write every k-th grid time (the last is always written)");
    s->add_option("--threads", to.threads, "Worker threads (0 = all cores)");
    s->add_option("--out-dir", to.out_dir, "Output directory");
    s->add_option("--config", config_path, "JSON config; flags win");
    toy_subs[name] = s;
  }
  auto* compare = toy->add_subcommand("compare", "KS statistics between two toy runs");
  compare->add_option("--a", to.a, "First run directory");
  compare->add_option("--b", to.b, "Second run directory");
  compare->add_option("--out", to.out, "Output JSON");
  compare->add_option("--config", config_path, "JSON config; flags win");
  toy_subs["compare"] = compare;

  BackboneOpts bo;
  auto* bb = app.add_subcommand("sample-backbones", "Reverse SE(3)^N walk written as a PDB backbone");
  bb->add_option("--n-residues", bo.n_residues);
  bb->add_option("--n-steps", bo.n_steps);
  bb->add_option("--eps", bo.eps, "Reverse-time truncation");
  bb->add_option("--zeta", bo.zeta, "Noise scale in [0, 1]");
  bb->add_option("--score", bo.score, "prior-only or fixed-target");
  bb->add_option("--chains", bo.chains, "Independent samples");
  bb->add_option("--seed", bo.seed, "Seed for the walk noise");
  bb->add_option("--init-seed", bo.init_seed, "Seed for the reference draw that starts each chain");
  bb->add_option("--geometry", bo.geometry, "Ideal geometry JSON");
  bb->add_option("--out", bo.out, "Output PDB");
  bb->add_option("--trajectory", bo.trajectory, "Optional trajectory CSV");
  bb->add_option("--record-every", bo.record_every, "Trajectory stride");
  bb->add_option("--threads", bo.threads, "Worker threads (0 = all cores)");
  bb->add_option("--config", config_path, "JSON config; flags win");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    Manifest m;
    if (igso3->parsed()) {
      for (auto& [name, s] : ig_subs) {
        if (!s->parsed()) continue;
        apply_config(s, config_path);
        m.command = "igso3 " + name;
        m.config = config_snapshot(s);
        run_igso3(name, ig, m);
      }
    } else if (schedule->parsed()) {
      apply_config(schedule, config_path);
      m.command = "schedule";
      m.config = config_snapshot(schedule);
      run_schedule(so, m);
    } else if (toy->parsed()) {
      for (auto& [name, s] : toy_subs) {
        if (!s->parsed()) continue;
        apply_config(s, config_path);
        m.command = "toy " + name;
        m.config = config_snapshot(s);
        run_toy(name, to, m);
      }
    } else if (bb->parsed()) {
      apply_config(bb, config_path);
      m.command = "sample-backbones";
      m.config = config_snapshot(bb);
      run_backbones(bo, m);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return 1;
  } catch (const DomainError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 2;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
