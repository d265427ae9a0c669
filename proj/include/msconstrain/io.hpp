// Configuration parsing and the on-disk output bundle: snapshot CSV (or flat
// binary), diagnostics CSV and a metadata document naming every file.
#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "msconstrain/experiments.hpp"

namespace msconstrain {

inline constexpr const char* tool_version = "1.0.0";

class IoError : public Error {
 public:
  using Error::Error;
};

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Number formatting

/// Shortest decimal of at most 17 significant digits; reads back exactly.
inline std::string format_double(double x) {
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x,
                                 std::chars_format::general, 17);
  if (ec != std::errc()) throw IoError("cannot format number");
  return std::string(buf.data(), end);
}

inline double parse_double(std::string_view s) {
  double x = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || end != s.data() + s.size())
    throw IoError("malformed number '" + std::string(s) + "'");
  return x;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Configuration

namespace detail {

inline Boundary boundary_from(const std::string& s) {
  if (s == "periodic") return Boundary::periodic;
  if (s == "neumann") return Boundary::neumann;
  throw ConfigError("unknown boundary '" + s + "'");
}

template <typename T>
T get(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

inline void reject_unknown(const json& j, std::initializer_list<std::string_view> keys,
                           const std::string& where) {
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (auto key : keys) known = known || key == k;
    if (!known) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

inline Grid grid_from(const json& j) {
  if (!j.is_object()) throw ConfigError("grid must be an object");
  reject_unknown(j, {"dim", "points", "length", "boundary", "origin"}, "grid");
  const int dim = j.contains("dim") ? get<int>(j, "dim") : 1;
  if (dim != 1 && dim != 2) throw ConfigError("grid dimension must be 1 or 2");
  auto axes = [&](const char* key, auto fallback) {
    using V = decltype(fallback);
    std::array<V, 2> out{fallback, fallback};
    if (!j.contains(key)) return out;
    const json& a = j.at(key);
    if (!a.is_array()) {
      out[0] = out[1] = get<V>(j, key);
      return out;
    }
    if (a.size() != static_cast<std::size_t>(dim))
      throw ConfigError(std::string("grid.") + key + " needs one entry per axis");
    for (int k = 0; k < dim; ++k) {
      try {
        out[k] = a[k].get<V>();
      } catch (const json::exception& e) {
        throw ConfigError(std::string("grid.") + key + ": " + e.what());
      }
    }
    return out;
  };
  if (!j.contains("points")) throw ConfigError("grid.points is required");
  const auto points = axes("points", std::size_t{0});
  const auto length = axes("length", dim == 1 ? 1.0 : two_pi);
  const auto bnames = axes("boundary", std::string("periodic"));
  const auto origin = axes("origin", 0.0);
  return Grid(dim, points, length, {boundary_from(bnames[0]), boundary_from(bnames[1])},
              origin);
}

inline Constraint constraint_from(const json& j) {
  if (j.is_string()) return constraint_from(json{{"type", j}});
  if (!j.is_object()) throw ConfigError("constraint must be a string or an object");
  reject_unknown(j, {"type", "signature", "n", "mode", "tolerance", "max_iterations"},
                 "constraint");
  const auto type = get<std::string>(j, "type");
  if (type == "circle") return QuadricConstraint{BilinearForm::euclidean(2)};
  if (type == "sphere") return QuadricConstraint{BilinearForm::euclidean(3)};
  if (type == "hyperboloid") return QuadricConstraint{BilinearForm::minkowski(3)};
  if (type == "quadric") return QuadricConstraint{BilinearForm(get<std::vector<int>>(j, "signature"))};
  if (type == "cp") {
    ProjectiveConstraint p;
    if (j.contains("n")) p.n = get<int>(j, "n");
    if (p.n < 1) throw ConfigError("CP^n needs n >= 1");
    if (j.contains("mode")) p.mode = cp_mode_from_string(get<std::string>(j, "mode"));
    if (j.contains("tolerance")) p.tolerance = get<double>(j, "tolerance");
    if (j.contains("max_iterations")) p.max_iterations = get<int>(j, "max_iterations");
    return p;
  }
  throw ConfigError("unknown constraint type '" + type + "'");
}

}  // namespace detail

/// Extra knobs of the convergence subcommand.
struct ConvergenceSettings {
  std::vector<std::size_t> ns{16, 32, 64, 128};
};

struct LoadedConfig {
  RunConfig run;
  ConvergenceSettings convergence;
};

/// Parses a JSON configuration. `experiment` selects the registry defaults;
/// every other key overrides one field. Unknown keys are rejected.
inline LoadedConfig parse_config(const json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  detail::reject_unknown(j,
                         {"experiment", "grid", "courant", "dt", "final_time", "constraint",
                          "potential", "initial", "params", "snapshot_every",
                          "diagnostics_every", "binary_snapshots", "convergence"},
                         "configuration");
  LoadedConfig out;
  RunConfig& c = out.run;
  if (j.contains("experiment")) {
    const auto name = detail::get<std::string>(j, "experiment");
    c = name == "custom" ? RunConfig{} : experiment_config(name);
  }
  if (j.contains("grid")) c.grid = detail::grid_from(j.at("grid"));
  if (j.contains("courant")) c.courant = detail::get<double>(j, "courant");
  if (j.contains("dt")) c.dt = detail::get<double>(j, "dt");
  if (j.contains("final_time")) c.final_time = detail::get<double>(j, "final_time");
  if (j.contains("constraint")) c.constraint = detail::constraint_from(j.at("constraint"));
  if (j.contains("potential")) c.potential = detail::get<std::string>(j, "potential");
  if (j.contains("initial")) c.initial = detail::get<std::string>(j, "initial");
  if (j.contains("params")) {
    if (!j.at("params").is_object()) throw ConfigError("params must be an object");
    for (const auto& [k, v] : j.at("params").items()) {
      if (!v.is_number()) throw ConfigError("param '" + k + "' must be a number");
      c.params[k] = v.get<double>();
    }
  }
  if (j.contains("snapshot_every"))
    c.snapshot_every = detail::get<std::size_t>(j, "snapshot_every");
  if (j.contains("diagnostics_every"))
    c.diagnostics_every = detail::get<std::size_t>(j, "diagnostics_every");
  if (j.contains("binary_snapshots"))
    c.binary_snapshots = detail::get<bool>(j, "binary_snapshots");
  if (j.contains("convergence")) {
    const json& cv = j.at("convergence");
    detail::reject_unknown(cv, {"ns"}, "convergence");
    if (cv.contains("ns")) out.convergence.ns = detail::get<std::vector<std::size_t>>(cv, "ns");
  }

  if (!(c.courant > 0.0)) throw ConfigError("courant must be positive");
  if (c.dt && !(*c.dt > 0.0)) throw ConfigError("dt must be positive");
  if (!(c.final_time >= 0.0)) throw ConfigError("final_time must be non-negative");
  potential_by_id(c.potential);
  return out;
}

inline LoadedConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed config '" + path.string() + "': " + e.what());
  }
  return parse_config(j);
}

inline json to_json(const Grid& g) {
  json points = json::array(), length = json::array(), boundary = json::array(),
       origin = json::array(), spacing = json::array();
  for (int a = 0; a < g.dim(); ++a) {
    points.push_back(g.points(a));
    length.push_back(g.length(a));
    boundary.push_back(to_string(g.boundary(a)));
    origin.push_back(g.origin(a));
    spacing.push_back(g.spacing(a));
  }
  return {{"dim", g.dim()}, {"points", points}, {"length", length},
          {"boundary", boundary}, {"origin", origin}, {"spacing", spacing}};
}

inline json to_json(const Constraint& c) {
  if (const auto* q = std::get_if<QuadricConstraint>(&c)) {
    const auto sig = q->form.signature();
    return {{"type", "quadric"}, {"signature", std::vector<int>(sig.begin(), sig.end())}};
  }
  const auto& p = std::get<ProjectiveConstraint>(c);
  return {{"type", "cp"}, {"n", p.n}, {"mode", to_string(p.mode)},
          {"tolerance", p.tolerance}, {"max_iterations", p.max_iterations}};
}

// ---------------------------------------------------------------------------
// Snapshots

inline constexpr std::string_view snapshot_header = "# msconstrain snapshot v1";

/// Writes the current level of a state: one row `index,x[,y],u0,...` per node.
inline void write_snapshot(std::ostream& out, const Grid& g, const Field& u) {
  check_on_grid(u, g);
  out << snapshot_header << '\n';
  std::string row;
  for (std::size_t n = 0; n < u.nodes(); ++n) {
    row = std::to_string(n);
    for (int a = 0; a < g.dim(); ++a) row += ',' + format_double(g.coordinate(n, a));
    for (double x : u[n]) row += ',' + format_double(x);
    out << row << '\n';
  }
}

struct SnapshotTable {
  std::vector<std::size_t> index;
  std::vector<std::array<double, 2>> coords;
  Field values;
};

/// Reads a CSV snapshot whose rows carry `dim` coordinates.
inline SnapshotTable read_snapshot(std::istream& in, int dim) {
  std::string line;
  if (!std::getline(in, line) || line != snapshot_header)
    throw IoError("not a msconstrain snapshot");
  SnapshotTable t;
  std::vector<double> values;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() < static_cast<std::size_t>(dim) + 2)
      throw IoError("snapshot row too short");
    const std::size_t w = cells.size() - 1 - static_cast<std::size_t>(dim);
    if (width == 0) width = w;
    if (w != width) throw IoError("snapshot rows differ in width");
    t.index.push_back(static_cast<std::size_t>(parse_double(cells[0])));
    std::array<double, 2> xy{0.0, 0.0};
    for (int a = 0; a < dim; ++a) xy[a] = parse_double(cells[1 + a]);
    t.coords.push_back(xy);
    for (std::size_t k = 1 + dim; k < cells.size(); ++k) values.push_back(parse_double(cells[k]));
  }
  t.values = Field(t.index.size(), width);
  t.values.data() = std::move(values);
  return t;
}

// Flat binary layout, all little-endian: 8-byte magic "MSCSNAP1", then
// uint64 dim, n1, n2, width, step, then float64 time, then nodes*width
// float64 values, node-major.
inline constexpr std::array<char, 8> binary_magic{'M', 'S', 'C', 'S', 'N', 'A', 'P', '1'};

namespace detail {

template <typename T>
void put_le(std::ostream& out, T v) {
  static_assert(sizeof(T) == 8);
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  out.write(reinterpret_cast<const char*>(&bits), 8);
}

template <typename T>
T get_le(std::istream& in) {
  std::uint64_t bits;
  if (!in.read(reinterpret_cast<char*>(&bits), 8)) throw IoError("truncated binary snapshot");
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  T v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace detail

inline void write_binary_snapshot(std::ostream& out, const Grid& g, const Field& u,
                                  std::size_t step, double time) {
  check_on_grid(u, g);
  out.write(binary_magic.data(), binary_magic.size());
  detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(g.dim()));
  detail::put_le<std::uint64_t>(out, g.points(0));
  detail::put_le<std::uint64_t>(out, g.dim() == 2 ? g.points(1) : 1);
  detail::put_le<std::uint64_t>(out, u.width());
  detail::put_le<std::uint64_t>(out, step);
  detail::put_le<double>(out, time);
  for (double x : u.data()) detail::put_le<double>(out, x);
}

struct BinarySnapshot {
  int dim = 1;
  std::array<std::size_t, 2> points{0, 1};
  std::size_t step = 0;
  double time = 0.0;
  Field values;
};

inline BinarySnapshot read_binary_snapshot(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != binary_magic)
    throw IoError("not a msconstrain binary snapshot");
  BinarySnapshot s;
  s.dim = static_cast<int>(detail::get_le<std::uint64_t>(in));
  s.points[0] = detail::get_le<std::uint64_t>(in);
  s.points[1] = detail::get_le<std::uint64_t>(in);
  const auto width = detail::get_le<std::uint64_t>(in);
  s.step = detail::get_le<std::uint64_t>(in);
  s.time = detail::get_le<double>(in);
  s.values = Field(s.points[0] * s.points[1], width);
  for (double& x : s.values.data()) x = detail::get_le<double>(in);
  return s;
}

// ---------------------------------------------------------------------------
// Diagnostics

/// Optional columns; fixed for a whole file.
struct DiagnosticsColumns {
  bool trace_residual = false;
  bool center_z = false;
  bool momentum_2 = false;

  static DiagnosticsColumns for_run(const RunConfig& c) {
    DiagnosticsColumns cols;
    cols.trace_residual = std::holds_alternative<ProjectiveConstraint>(c.constraint);
    cols.center_z = std::holds_alternative<QuadricConstraint>(c.constraint) &&
                    ambient_width(c.constraint) == 3 && c.grid.dim() == 2;
    cols.momentum_2 = c.grid.dim() == 2;
    return cols;
  }

  std::string header() const {
    std::string h = "step,time,energy,momentum,constraint_residual";
    if (trace_residual) h += ",trace_residual";
    if (center_z) h += ",center_z";
    if (momentum_2) h += ",momentum_2";
    return h;
  }
};

inline std::string diagnostics_row(const DiagnosticsRecord& r, const DiagnosticsColumns& cols) {
  std::string row = std::to_string(r.step);
  for (double x : {r.time, r.energy, r.momentum[0], r.constraint_residual})
    row += ',' + format_double(x);
  auto optional_cell = [&](const std::optional<double>& v) {
    row += ',';
    row += v ? format_double(*v) : std::string("nan");
  };
  if (cols.trace_residual) optional_cell(r.trace_residual);
  if (cols.center_z) optional_cell(r.center_z);
  if (cols.momentum_2) row += ',' + format_double(r.momentum[1]);
  return row;
}

/// Parses a diagnostics CSV written by this library.
inline std::vector<DiagnosticsRecord> read_diagnostics(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty diagnostics file");
  std::vector<std::string> names;
  for (auto n : split_csv(line)) names.emplace_back(n);
  const std::vector<std::string_view> required{"step", "time", "energy", "momentum",
                                               "constraint_residual"};
  if (names.size() < required.size() ||
      !std::equal(required.begin(), required.end(), names.begin()))
    throw IoError("diagnostics header does not match");
  std::vector<DiagnosticsRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != names.size()) throw IoError("diagnostics row has wrong length");
    DiagnosticsRecord r;
    r.step = static_cast<std::size_t>(parse_double(cells[0]));
    r.time = parse_double(cells[1]);
    r.energy = parse_double(cells[2]);
    r.momentum[0] = parse_double(cells[3]);
    r.constraint_residual = parse_double(cells[4]);
    for (std::size_t k = 5; k < names.size(); ++k) {
      const auto v = cells[k] == "nan" ? std::optional<double>() : parse_double(cells[k]);
      if (names[k] == "trace_residual") r.trace_residual = v;
      else if (names[k] == "center_z") r.center_z = v;
      else if (names[k] == "momentum_2") r.momentum[1] = v.value_or(0.0);
      else throw IoError("unknown diagnostics column '" + names[k] + "'");
    }
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Output bundle

/// Resolves the run directory. A relative path is taken below MSCONSTRAIN_OUT
/// when that variable is set.
inline std::filesystem::path resolve_output_dir(const std::filesystem::path& requested) {
  const char* root = std::getenv("MSCONSTRAIN_OUT");
  if (root && *root && requested.is_relative()) return std::filesystem::path(root) / requested;
  return requested;
}

/// Writes snapshots and diagnostics of a run into one directory and records
/// them in metadata.json. Files are flushed after every record, so a failed
/// run leaves a readable partial bundle.
class OutputBundle {
 public:
  OutputBundle(std::filesystem::path dir, const RunConfig& config, double dt)
      : dir_(std::move(dir)), config_(config), dt_(dt),
        columns_(DiagnosticsColumns::for_run(config)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_ / "snapshots", ec);
    if (ec) throw IoError("cannot create output directory '" + dir_.string() + "': " + ec.message());
    diagnostics_.open(dir_ / "diagnostics.csv", std::ios::binary | std::ios::trunc);
    if (!diagnostics_) throw IoError("cannot write to '" + dir_.string() + "'");
    diagnostics_ << columns_.header() << '\n' << std::flush;
    write_metadata();
  }

  RunSinks sinks() {
    RunSinks s;
    s.snapshot = [this](const SimState& st) { snapshot(st); };
    if (config_.diagnostics_every > 0)
      s.diagnostics = [this](const DiagnosticsRecord& r) { diagnostics(r); };
    return s;
  }

  void snapshot(const SimState& s) {
    char name[48];
    std::snprintf(name, sizeof name, "snap_%08zu.%s", s.step,
                  config_.binary_snapshots ? "bin" : "csv");
    const auto rel = std::filesystem::path("snapshots") / name;
    std::ofstream out(dir_ / rel, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write snapshot '" + rel.string() + "'");
    if (config_.binary_snapshots)
      write_binary_snapshot(out, s.grid, s.curr, s.step, s.time());
    else
      write_snapshot(out, s.grid, s.curr);
    if (!out) throw IoError("failed writing snapshot '" + rel.string() + "'");
    snapshots_.push_back({{"file", rel.generic_string()}, {"step", s.step}, {"time", s.time()}});
  }

  void diagnostics(const DiagnosticsRecord& r) {
    diagnostics_ << diagnostics_row(r, columns_) << '\n' << std::flush;
    if (!diagnostics_) throw IoError("failed writing diagnostics");
  }

  /// Final metadata; `failure` describes an aborted run.
  void finish(const RunResult& result) {
    status_ = result.failure ? "numerical-failure" : "ok";
    steps_taken_ = result.steps_taken;
    if (result.failure)
      failure_ = json{{"message", result.failure->what()},
                      {"node", result.failure->node()},
                      {"time", result.failure->time()}};
    write_metadata();
  }

  const std::filesystem::path& dir() const { return dir_; }

 private:
  void write_metadata() const {
    json files = json::array({"diagnostics.csv"});
    for (const auto& s : snapshots_) files.push_back(s["file"]);
    json params = json::object();
    for (const auto& [k, v] : config_.params) params[k] = v;
    json m = {
        {"tool", "msconstrain"},
        {"tool_version", tool_version},
        {"experiment", config_.experiment},
        {"grid", to_json(config_.grid)},
        {"dt", dt_},
        {"dx", config_.grid.spacing(0)},
        {"final_time", config_.final_time},
        {"constraint", to_json(config_.constraint)},
        {"potential", config_.potential},
        {"initial", config_.initial},
        {"params", params},
        {"snapshot_format", config_.binary_snapshots ? "binary-v1" : "csv-v1"},
        {"diagnostics", {{"file", "diagnostics.csv"}, {"columns", columns_.header()}}},
        {"snapshots", snapshots_},
        {"files", files},
        {"status", status_},
        {"steps_taken", steps_taken_},
    };
    if (!failure_.is_null()) m["failure"] = failure_;
    std::ofstream out(dir_ / "metadata.json", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write metadata.json");
    out << m.dump(2) << '\n';
  }

  std::filesystem::path dir_;
  RunConfig config_;
  double dt_;
  DiagnosticsColumns columns_;
  std::ofstream diagnostics_;
  json snapshots_ = json::array();
  std::string status_ = "running";
  std::size_t steps_taken_ = 0;
  json failure_;
};

/// Runs a configuration into a bundle directory.
inline RunResult run_to_directory(const RunConfig& c, const std::filesystem::path& dir,
                                  std::ostream* warn = &std::cerr) {
  const double dt = resolve_steps(c).first;
  OutputBundle bundle(dir, c, dt);
  RunResult result = run(c, bundle.sinks(), warn);
  bundle.finish(result);
  return result;
}

}  // namespace msconstrain
