#pragma once

// File formats: PDB ATOM records for backbones, IGSO3 table cache records,
// ideal-geometry JSON and trajectory CSV rows.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "se3diff/backbone.hpp"
#include "se3diff/errors.hpp"
#include "se3diff/igso3.hpp"
#include "se3diff/lie_so3.hpp"
#include "se3diff/se3_process.hpp"

namespace se3diff::io {

// printf-style formatting into a std::string.
template <typename... Args>
std::string format(const char* fmt, Args... args) {
  const int n = std::snprintf(nullptr, 0, fmt, args...);
  std::string s(static_cast<std::size_t>(n), '\0');
  std::snprintf(s.data(), s.size() + 1, fmt, args...);
  return s;
}

// ---------------------------------------------------------------- PDB

// Fixed-column ATOM record, coordinates in angstroms:
// 1-6 record, 7-11 serial, 13-16 name, 18-20 residue, 22 chain, 23-26 resSeq,
// 31-54 x/y/z (8.3f each), 55-60 occupancy, 61-66 B-factor, 77-78 element.
inline std::string pdb_atom_record(int serial, const char* name, const char* res_name, char chain,
                                   int res_seq, const Vec3& nm, const char* element) {
  const Vec3 a = nm * 10.0;
  for (int i = 0; i < 3; ++i)
    if (!std::isfinite(a[i]) || std::abs(a[i]) >= 9999.9995) throw IoError("coordinate does not fit PDB columns");
  if (serial < 0 || serial > 99999 || res_seq < -999 || res_seq > 9999)
    throw IoError("serial or residue number does not fit PDB columns");
  return format("ATOM  %5d %-4s %3s %c%4d    %8.3f%8.3f%8.3f%6.2f%6.2f          %2s", serial, name, res_name,
                chain, res_seq, a.x(), a.y(), a.z(), 1.0, 0.0, element);
}

inline void write_pdb(std::ostream& os, const std::vector<ResidueAtoms>& residues, char chain = 'A') {
  static const char* kNames[4] = {" N  ", " CA ", " C  ", " O  "};
  static const char* kElements[4] = {"N", "C", "C", "O"};
  int serial = 1;
  for (std::size_t n = 0; n < residues.size(); ++n) {
    const auto atoms = residues[n].as_array();
    for (int a = 0; a < 4; ++a)
      os << pdb_atom_record(serial++, kNames[a], "GLY", chain, static_cast<int>(n + 1), atoms[a], kElements[a])
         << '\n';
  }
  os << format("TER   %5d      %3s %c%4d", serial, "GLY", chain, static_cast<int>(residues.size())) << '\n';
  os << "END\n";
  if (!os) throw IoError("failed writing PDB stream");
}

namespace detail {
inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(' ');
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(' ') - b + 1);
}
inline double column_double(const std::string& line, std::size_t begin, std::size_t len) {
  const std::string f = trim(line.substr(begin, len));
  try {
    std::size_t used = 0;
    const double v = std::stod(f, &used);
    if (used != f.size()) throw IoError("bad number '" + f + "'");
    return v;
  } catch (const std::logic_error&) {
    throw IoError("bad number '" + f + "' in PDB record");
  }
}
}  // namespace detail

// Reads N, CA, C, O of each residue (by chain and residue number) back into nm.
inline std::vector<ResidueAtoms> read_pdb_backbone(std::istream& is) {
  std::map<std::pair<char, int>, std::map<std::string, Vec3>> residues;
  std::vector<std::pair<char, int>> order;
  std::string line;
  while (std::getline(is, line)) {
    if (line.rfind("ATOM  ", 0) != 0 && line.rfind("HETATM", 0) != 0) continue;
    if (line.size() < 54) throw IoError("truncated ATOM record");
    const std::string name = detail::trim(line.substr(12, 4));
    const char chain = line[21];
    const int seq = static_cast<int>(detail::column_double(line, 22, 4));
    const Vec3 xyz(detail::column_double(line, 30, 8), detail::column_double(line, 38, 8),
                   detail::column_double(line, 46, 8));
    const auto key = std::make_pair(chain, seq);
    if (!residues.count(key)) order.push_back(key);
    residues[key][name] = xyz / 10.0;
  }
  std::vector<ResidueAtoms> out;
  for (const auto& key : order) {
    const auto& atoms = residues[key];
    for (const char* need : {"N", "CA", "C", "O"})
      if (!atoms.count(need)) throw IoError(std::string("residue missing atom ") + need);
    out.push_back({atoms.at("N"), atoms.at("CA"), atoms.at("C"), atoms.at("O")});
  }
  return out;
}

// ---------------------------------------------------------------- IGSO3 tables

inline void write_table(std::ostream& os, const IGSO3Table& table) {
  os << format("# igso3_table t=%.17g M=%zu L=%d\n", table.t(), table.size(), table.series_terms());
  os << "omega,f,df,cdf\n";
  for (std::size_t i = 0; i < table.size(); ++i)
    os << format("%.17g,%.17g,%.17g,%.17g\n", table.omega_grid()[i], table.f_vals()[i], table.df_vals()[i],
                 table.cdf_vals()[i]);
  if (!os) throw IoError("failed writing IGSO3 table");
}

inline IGSO3Table read_table(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw IoError("empty IGSO3 table stream");
  double t = 0.0;
  std::size_t m = 0;
  int l = 0;
  if (std::sscanf(header.c_str(), "# igso3_table t=%lf M=%zu L=%d", &t, &m, &l) != 3)
    throw IoError("bad IGSO3 table header");
  std::string cols;
  if (!std::getline(is, cols) || cols != "omega,f,df,cdf") throw IoError("bad IGSO3 table columns");
  std::vector<double> grid, f, df, cdf;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    double a, b, c, d;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &a, &b, &c, &d) != 4) throw IoError("bad IGSO3 table row");
    grid.push_back(a);
    f.push_back(b);
    df.push_back(c);
    cdf.push_back(d);
  }
  if (grid.size() != m) throw IoError("IGSO3 table row count does not match header");
  return IGSO3Table(t, l, std::move(grid), std::move(f), std::move(df), std::move(cdf));
}

inline std::filesystem::path table_cache_path(const std::filesystem::path& dir, double t,
                                              const TruncationConfig& cfg) {
  std::uint64_t bits;
  std::memcpy(&bits, &t, sizeof bits);
  return dir / format("igso3_%016llx_M%zu_L%d.csv", static_cast<unsigned long long>(bits), cfg.angle_grid,
                      cfg.series_terms);
}

// Loads the table for (t, cfg) from `dir` if cached there, else builds and stores it.
inline IGSO3Table cached_table(const std::filesystem::path& dir, double t, const TruncationConfig& cfg) {
  const auto path = table_cache_path(dir, t, cfg);
  if (std::filesystem::exists(path)) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return read_table(in);
  }
  IGSO3Table table = build_table(t, cfg);
  std::filesystem::create_directories(dir);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_table(out, table);
  return table;
}

// ---------------------------------------------------------------- geometry JSON

inline nlohmann::json to_json(const IdealGeometry& g) {
  auto v = [](const Vec3& x) { return nlohmann::json::array({x.x(), x.y(), x.z()}); };
  return {{"N", v(g.N_star)}, {"CA", v(g.CA_star)}, {"C", v(g.C_star)}, {"O", v(g.O_star)}};
}

inline IdealGeometry ideal_geometry_from_json(const nlohmann::json& j) {
  auto v = [&](const char* key) {
    if (!j.contains(key) || !j.at(key).is_array() || j.at(key).size() != 3)
      throw IoError(std::string("ideal geometry needs a 3-vector '") + key + "'");
    const auto& a = j.at(key);
    return Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
  };
  IdealGeometry g{v("N"), v("CA"), v("C"), v("O")};
  g.validate();
  return g;
}

inline IdealGeometry load_ideal_geometry(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return ideal_geometry_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad geometry JSON: ") + e.what());
  }
}

// ---------------------------------------------------------------- trajectories

inline constexpr const char* kTrajectoryHeader = "t,chain_id,residue_index,qa,qb,qc,qd,x,y,z";

inline void write_trajectory_rows(std::ostream& os, const Trajectory& traj, std::size_t chain_id) {
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    const FrameSet& fs = traj.states[k];
    for (std::size_t n = 0; n < fs.size(); ++n) {
      const UnitQuaternion q = quat_from_rotation(fs.frames[n].rotation);
      const Vec3& x = fs.frames[n].translation;
      os << format("%.9g,%zu,%zu,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g\n", traj.times[k], chain_id, n, q.a, q.b,
                   q.c, q.d, x.x(), x.y(), x.z());
    }
  }
  if (!os) throw IoError("failed writing trajectory");
}

}  // namespace se3diff::io
