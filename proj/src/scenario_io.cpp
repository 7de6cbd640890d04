#include "fdot/scenario_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fdot {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ValidationError(where.empty() ? "<root>" : where, "expected an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ValidationError(where.empty() ? key : where + "." + key, "unknown key");
  }
}

std::string join(const std::string& where, const std::string& key) {
  return where.empty() ? key : where + "." + key;
}

const json& require(const json& obj, const std::string& where, const char* key) {
  if (!obj.contains(key)) throw ValidationError(join(where, key), "required");
  return obj.at(key);
}

double as_number(const json& v, const std::string& field) {
  if (!v.is_number()) throw ValidationError(field, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ValidationError(field, "must be finite");
  return x;
}

int as_int(const json& v, const std::string& field) {
  if (!v.is_number_integer()) throw ValidationError(field, "expected an integer");
  const auto x = v.get<std::int64_t>();
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
    throw ValidationError(field, "out of range");
  }
  return static_cast<int>(x);
}

bool as_bool(const json& v, const std::string& field) {
  if (!v.is_boolean()) throw ValidationError(field, "expected true or false");
  return v.get<bool>();
}

std::vector<double> as_numbers(const json& v, const std::string& field) {
  if (!v.is_array()) throw ValidationError(field, "expected an array of numbers");
  std::vector<double> out;
  out.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_number(v[i], field + "[" + std::to_string(i) + "]"));
  return out;
}

// A number or an array of numbers.
std::vector<double> as_scalar_or_numbers(const json& v, const std::string& field) {
  if (v.is_number()) return {as_number(v, field)};
  return as_numbers(v, field);
}

std::pair<int, int> as_int_pair(const json& v, const std::string& field) {
  if (!v.is_array() || v.size() != 2) throw ValidationError(field, "expected [a, b]");
  return {as_int(v[0], field + "[0]"), as_int(v[1], field + "[1]")};
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void parse_solver(const json& s, SolverSettings& out) {
  const std::string w = "solver";
  check_keys(s, w,
             {"beta", "gamma", "eta", "tol_primal", "tol_obj", "max_iters", "newton_iters", "newton_tol",
              "rho_floor", "record_history", "fd_coupling", "threads", "direct_max_edges", "pcg_tol"});
  auto num = [&](const char* key, double& target) {
    if (s.contains(key)) target = as_number(s.at(key), join(w, key));
  };
  auto integer = [&](const char* key, int& target) {
    if (s.contains(key)) target = as_int(s.at(key), join(w, key));
  };
  num("beta", out.beta);
  num("gamma", out.gamma);
  num("eta", out.eta);
  num("tol_primal", out.tol_primal);
  num("tol_obj", out.tol_obj);
  integer("max_iters", out.max_iters);
  integer("newton_iters", out.newton_iters);
  num("newton_tol", out.newton_tol);
  num("rho_floor", out.rho_floor);
  if (s.contains("record_history")) out.record_history = as_bool(s.at("record_history"), "solver.record_history");
  if (s.contains("fd_coupling")) {
    if (!s.at("fd_coupling").is_string()) throw ValidationError("solver.fd_coupling", "expected a string");
    out.coupling = coupling_from_string(s.at("fd_coupling").get<std::string>());
  }
  integer("threads", out.threads);
  integer("direct_max_edges", out.direct_max_edges);
  num("pcg_tol", out.pcg_tol);
}

FdSpec parse_fd(const json& f) {
  const std::string w = "fd";
  check_keys(f, w, {"v0", "rho_hat", "v0_steps", "rho_hat_steps", "edges", "enforce"});
  FdSpec spec;
  spec.v0 = as_number(require(f, w, "v0"), "fd.v0");
  spec.rho_hat = as_number(require(f, w, "rho_hat"), "fd.rho_hat");
  if (f.contains("v0_steps")) spec.v0_steps = as_numbers(f.at("v0_steps"), "fd.v0_steps");
  if (f.contains("rho_hat_steps")) spec.rho_hat_steps = as_numbers(f.at("rho_hat_steps"), "fd.rho_hat_steps");
  if (f.contains("enforce")) {
    const auto& e = f.at("enforce");
    if (!e.is_string() || (e != "interior" && e != "all")) {
      throw ValidationError("fd.enforce", "expected \"interior\" or \"all\"");
    }
    spec.enforcement = e == "all" ? Enforcement::AllSteps : Enforcement::InteriorSteps;
  }
  if (f.contains("edges")) {
    const auto& list = f.at("edges");
    if (!list.is_array()) throw ValidationError("fd.edges", "expected an array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string fw = "fd.edges[" + std::to_string(i) + "]";
      const auto& item = list[i];
      check_keys(item, fw, {"edge", "v0", "rho_hat"});
      FdEdgeOverride ov;
      const auto [t, h] = as_int_pair(require(item, fw, "edge"), fw + ".edge");
      ov.edge = Edge{t, h};
      if (item.contains("v0")) ov.v0 = as_scalar_or_numbers(item.at("v0"), fw + ".v0");
      if (item.contains("rho_hat")) ov.rho_hat = as_scalar_or_numbers(item.at("rho_hat"), fw + ".rho_hat");
      spec.overrides.push_back(std::move(ov));
    }
  }
  return spec;
}

std::pair<int, int> line_column(const std::string& text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

ordered_json settings_json(const SolverSettings& s) {
  ordered_json j;
  j["beta"] = s.beta;
  j["gamma"] = s.gamma;
  j["eta"] = s.eta;
  j["tol_primal"] = s.tol_primal;
  j["tol_obj"] = s.tol_obj;
  j["max_iters"] = s.max_iters;
  j["newton_iters"] = s.newton_iters;
  j["newton_tol"] = s.newton_tol;
  j["rho_floor"] = s.rho_floor;
  j["record_history"] = s.record_history;
  j["fd_coupling"] = to_string(s.coupling);
  j["threads"] = s.threads;
  j["direct_max_edges"] = s.direct_max_edges;
  j["pcg_tol"] = s.pcg_tol;
  return j;
}

// Thread count does not change the result, so it is left out of the hash.
ordered_json hashed_settings_json(const SolverSettings& s) {
  auto j = settings_json(s);
  j.erase("threads");
  return j;
}

double parse_double(const std::string& tok, const std::string& where) {
  double x = 0.0;
  const auto* first = tok.data();
  const auto* last = tok.data() + tok.size();
  const auto res = std::from_chars(first, last, x);
  if (res.ec != std::errc() || res.ptr != last) throw IoError(where + ": bad number \"" + tok + "\"");
  return x;
}

int parse_int(const std::string& tok, const std::string& where) {
  int x = 0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), x);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    throw IoError(where + ": bad integer \"" + tok + "\"");
  }
  return x;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

// Rows of a CSV file whose header must equal `header`.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path, const std::string& header) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header) throw IoError(path.string() + ": expected header \"" + header + "\", got \"" + line + "\"");
  std::vector<std::vector<std::string>> rows;
  const auto width = split(header, ',').size();
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto row = split(line, ',');
    if (row.size() != width) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(width) + " fields");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

Scenario parse_scenario(const std::string& text, const std::string& source) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_column(text, e.byte > 0 ? e.byte - 1 : 0);
    std::string what = e.what();
    const auto pos = what.find("parse error");
    throw ParseError(source, line, col, pos == std::string::npos ? what : what.substr(pos));
  }

  check_keys(root, "", {"description", "graph", "marginals", "k", "fd", "solver"});
  Scenario s;

  const auto& g = require(root, "", "graph");
  check_keys(g, "graph", {"n_vertices", "edges", "coordinates", "allow_disconnected", "allow_parallel"});
  s.n_vertices = as_int(require(g, "graph", "n_vertices"), "graph.n_vertices");
  const auto& edges = require(g, "graph", "edges");
  if (!edges.is_array()) throw ValidationError("graph.edges", "expected an array of [a, b] pairs");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    s.pairs.push_back(as_int_pair(edges[i], "graph.edges[" + std::to_string(i) + "]"));
  }
  if (g.contains("coordinates")) {
    const auto& c = g.at("coordinates");
    if (!c.is_array()) throw ValidationError("graph.coordinates", "expected an array of [x, y]");
    std::vector<Point2> pts;
    for (std::size_t i = 0; i < c.size(); ++i) {
      const auto xy = as_numbers(c[i], "graph.coordinates[" + std::to_string(i) + "]");
      if (xy.size() != 2) throw ValidationError("graph.coordinates[" + std::to_string(i) + "]", "expected [x, y]");
      pts.push_back({xy[0], xy[1]});
    }
    s.coordinates = std::move(pts);
  }
  if (g.contains("allow_disconnected")) {
    s.graph_options.allow_disconnected = as_bool(g.at("allow_disconnected"), "graph.allow_disconnected");
  }
  if (g.contains("allow_parallel")) {
    s.graph_options.allow_parallel = as_bool(g.at("allow_parallel"), "graph.allow_parallel");
  }

  const auto& mg = require(root, "", "marginals");
  check_keys(mg, "marginals", {"rho0", "rhok"});
  s.rho0 = to_vector(as_numbers(require(mg, "marginals", "rho0"), "marginals.rho0"));
  s.rhok = to_vector(as_numbers(require(mg, "marginals", "rhok"), "marginals.rhok"));

  s.k = as_int(require(root, "", "k"), "k");
  if (root.contains("fd") && !root.at("fd").is_null()) s.fd = parse_fd(root.at("fd"));
  if (root.contains("solver")) parse_solver(root.at("solver"), s.settings);

  finalize(s);
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  return parse_scenario(read_file(path), path.string());
}

std::string scenario_to_json(const Scenario& s) {
  ordered_json root;
  ordered_json g;
  g["n_vertices"] = s.n_vertices;
  g["edges"] = ordered_json::array();
  for (const auto& [a, b] : s.pairs) g["edges"].push_back({a, b});
  if (s.coordinates) {
    g["coordinates"] = ordered_json::array();
    for (const auto& p : *s.coordinates) g["coordinates"].push_back({p[0], p[1]});
  }
  if (s.graph_options.allow_disconnected) g["allow_disconnected"] = true;
  if (s.graph_options.allow_parallel) g["allow_parallel"] = true;
  root["graph"] = std::move(g);
  root["marginals"]["rho0"] = std::vector<double>(s.rho0.data(), s.rho0.data() + s.rho0.size());
  root["marginals"]["rhok"] = std::vector<double>(s.rhok.data(), s.rhok.data() + s.rhok.size());
  root["k"] = s.k;
  if (s.fd) {
    ordered_json f;
    f["v0"] = s.fd->v0;
    f["rho_hat"] = s.fd->rho_hat;
    if (!s.fd->v0_steps.empty()) f["v0_steps"] = s.fd->v0_steps;
    if (!s.fd->rho_hat_steps.empty()) f["rho_hat_steps"] = s.fd->rho_hat_steps;
    f["enforce"] = s.fd->enforcement == Enforcement::AllSteps ? "all" : "interior";
    if (!s.fd->overrides.empty()) {
      f["edges"] = ordered_json::array();
      for (const auto& ov : s.fd->overrides) {
        ordered_json o;
        o["edge"] = {ov.edge.tail, ov.edge.head};
        if (ov.v0.size() == 1) o["v0"] = ov.v0[0];
        else if (!ov.v0.empty()) o["v0"] = ov.v0;
        if (ov.rho_hat.size() == 1) o["rho_hat"] = ov.rho_hat[0];
        else if (!ov.rho_hat.empty()) o["rho_hat"] = ov.rho_hat;
        f["edges"].push_back(std::move(o));
      }
    }
    root["fd"] = std::move(f);
  }
  root["solver"] = settings_json(s.settings);
  return root.dump(2) + "\n";
}

void save_scenario(const Scenario& scenario, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_file(path, scenario_to_json(scenario));
}

std::uint64_t settings_hash(const SolverSettings& settings) {
  const std::string text = hashed_settings_json(settings).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void save_trajectory(const Trajectory& t, const Scenario& scenario, const std::filesystem::path& dir) {
  if (!t.rho.snapshots.allFinite() || !t.momentum.steps.allFinite()) {
    throw IoError("refusing to save a trajectory with non-finite entries");
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const auto& g = scenario.graph;

  std::string out = "step,vertex,density\n";
  for (int j = 0; j <= t.rho.k(); ++j) {
    for (VertexId v = 0; v < t.rho.n_vertices(); ++v) {
      out += std::to_string(j) + "," + std::to_string(v) + "," + format_double(t.rho.snapshots(v, j)) + "\n";
    }
  }
  write_file(dir / "density.csv", out);

  out = "step,tail,head,momentum\n";
  for (int i = 1; i <= t.momentum.k(); ++i) {
    for (EdgeId e = 0; e < t.momentum.n_edges(); ++e) {
      const auto& ed = g.edge(e);
      out += std::to_string(i) + "," + std::to_string(ed.tail) + "," + std::to_string(ed.head) + "," +
             format_double(t.momentum.steps(e, i - 1)) + "\n";
    }
  }
  write_file(dir / "momentum.csv", out);

  if (!t.history.empty()) {
    out = "iteration,objective,continuity_residual,consensus_residual,midpoint_residual,newton_steps\n";
    for (const auto& r : t.history) {
      out += std::to_string(r.iteration) + "," + format_double(r.objective) + "," +
             format_double(r.continuity_residual) + "," + format_double(r.consensus_residual) + "," +
             format_double(r.midpoint_residual) + "," + std::to_string(r.newton_steps) + "\n";
    }
    write_file(dir / "convergence.csv", out);
  }

  ordered_json sum;
  sum["objective"] = t.objective;
  sum["iterations"] = t.iterations;
  sum["converged"] = t.converged;
  sum["residuals"]["continuity"] = t.continuity_residual;
  sum["residuals"]["consensus"] = t.consensus_residual;
  sum["residuals"]["midpoint"] = t.midpoint_residual;
  sum["n_vertices"] = g.n_vertices();
  sum["n_edges"] = g.n_edges();
  sum["k"] = t.rho.k();
  sum["fd_active"] = t.fd_active;
  sum["line_search_failures"] = t.line_search_failures;
  sum["settings"] = settings_json(t.settings);
  char hash[17];
  std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(settings_hash(t.settings)));
  sum["settings_hash"] = hash;
  const auto& p = scenario.provenance;
  sum["provenance"]["mass0"] = p.mass0;
  sum["provenance"]["massk"] = p.massk;
  sum["provenance"]["renormalized"] = p.renormalized;
  sum["provenance"]["rho_floor"] = p.rho_floor;
  sum["provenance"]["lifted_entries"] = p.lifted_entries;
  sum["provenance"]["max_floor_perturbation"] = p.max_floor_perturbation;
  sum["provenance"]["warnings"] = p.warnings;
  if (scenario.coordinates) {
    sum["coordinates"] = ordered_json::array();
    for (const auto& c : *scenario.coordinates) sum["coordinates"].push_back({c[0], c[1]});
  }
  write_file(dir / "summary.json", sum.dump(2) + "\n");
}

SavedTrajectory load_trajectory(const std::filesystem::path& dir) {
  SavedTrajectory out;
  json sum;
  try {
    sum = json::parse(read_file(dir / "summary.json"));
    out.n_vertices = sum.at("n_vertices").get<int>();
    out.k = sum.at("k").get<int>();
    out.objective = sum.at("objective").get<double>();
    out.converged = sum.at("converged").get<bool>();
    out.iterations = sum.at("iterations").get<int>();
    if (sum.contains("coordinates")) {
      std::vector<Point2> pts;
      for (const auto& c : sum.at("coordinates")) pts.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
      out.coordinates = std::move(pts);
    }
  } catch (const json::exception& e) {
    throw IoError((dir / "summary.json").string() + ": " + e.what());
  }
  const int n = out.n_vertices, k = out.k;
  const int ne = sum.at("n_edges").get<int>();

  const auto dpath = (dir / "density.csv").string();
  const auto drows = read_csv(dir / "density.csv", "step,vertex,density");
  if (drows.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(k + 1)) {
    throw IoError(dpath + ": expected " + std::to_string(n * (k + 1)) + " rows");
  }
  out.rho.snapshots.resize(n, k + 1);
  for (const auto& r : drows) {
    const int j = parse_int(r[0], dpath), v = parse_int(r[1], dpath);
    if (j < 0 || j > k || v < 0 || v >= n) throw IoError(dpath + ": index out of range");
    out.rho.snapshots(v, j) = parse_double(r[2], dpath);
  }

  const auto mpath = (dir / "momentum.csv").string();
  const auto mrows = read_csv(dir / "momentum.csv", "step,tail,head,momentum");
  if (mrows.size() != static_cast<std::size_t>(ne) * static_cast<std::size_t>(k)) {
    throw IoError(mpath + ": expected " + std::to_string(ne * k) + " rows");
  }
  out.momentum.steps.resize(ne, k);
  for (std::size_t row = 0; row < mrows.size(); ++row) {
    const auto& r = mrows[row];
    const int i = parse_int(r[0], mpath);
    const auto e = static_cast<int>(row % static_cast<std::size_t>(ne));
    if (i < 1 || i > k || static_cast<std::size_t>(i - 1) != row / static_cast<std::size_t>(ne)) {
      throw IoError(mpath + ": rows out of order");
    }
    const Edge ed{parse_int(r[1], mpath), parse_int(r[2], mpath)};
    if (i == 1) {
      out.edges.push_back(ed);
    } else if (out.edges[static_cast<std::size_t>(e)].tail != ed.tail ||
               out.edges[static_cast<std::size_t>(e)].head != ed.head) {
      throw IoError(mpath + ": edge order differs between steps");
    }
    out.momentum.steps(e, i - 1) = parse_double(r[3], mpath);
  }
  return out;
}

std::vector<IterationRecord> load_history(const std::filesystem::path& dir) {
  const auto path = dir / "convergence.csv";
  if (!std::filesystem::exists(path)) throw IoError(path.string() + " not found");
  const auto rows = read_csv(
      path, "iteration,objective,continuity_residual,consensus_residual,midpoint_residual,newton_steps");
  std::vector<IterationRecord> out;
  out.reserve(rows.size());
  const auto where = path.string();
  for (const auto& r : rows) {
    IterationRecord rec;
    rec.iteration = parse_int(r[0], where);
    rec.objective = parse_double(r[1], where);
    rec.continuity_residual = parse_double(r[2], where);
    rec.consensus_residual = parse_double(r[3], where);
    rec.midpoint_residual = parse_double(r[4], where);
    rec.newton_steps = parse_int(r[5], where);
    out.push_back(rec);
  }
  return out;
}

Scenario import_graph_csv(const std::filesystem::path& nodes, const std::filesystem::path& edges, int k) {
  std::istringstream probe(read_file(nodes));
  std::string header;
  std::getline(probe, header);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  const bool with_marginals = header == "id,x,y,rho0,rhok";
  const auto nrows = read_csv(nodes, with_marginals ? "id,x,y,rho0,rhok" : "id,x,y");
  const auto where = nodes.string();

  Scenario s;
  s.n_vertices = static_cast<VertexId>(nrows.size());
  std::vector<Point2> pts(nrows.size());
  std::vector<char> seen(nrows.size(), 0);
  s.rho0 = Eigen::VectorXd::Constant(s.n_vertices, 1.0 / std::max(1, s.n_vertices));
  s.rhok = s.rho0;
  for (const auto& r : nrows) {
    const int id = parse_int(r[0], where);
    if (id < 0 || id >= s.n_vertices || seen[static_cast<std::size_t>(id)]) {
      throw IoError(where + ": vertex ids must be a permutation of 0.." + std::to_string(s.n_vertices - 1));
    }
    seen[static_cast<std::size_t>(id)] = 1;
    pts[static_cast<std::size_t>(id)] = {parse_double(r[1], where), parse_double(r[2], where)};
    if (with_marginals) {
      s.rho0[id] = parse_double(r[3], where);
      s.rhok[id] = parse_double(r[4], where);
    }
  }
  s.coordinates = std::move(pts);
  const auto erows = read_csv(edges, "a,b");
  for (const auto& r : erows) s.pairs.emplace_back(parse_int(r[0], edges.string()), parse_int(r[1], edges.string()));
  s.k = k;
  finalize(s);
  return s;
}

}  // namespace fdot
