#include "stcox/io.hpp"

#include "json.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace stcox::io {

using nlohmann::json;

std::string format_double(double x) {
  if (!std::isfinite(x)) throw std::invalid_argument("cannot serialize a non-finite value");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << contents;
  out.flush();
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

namespace {

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

bool is_scalar(const json& j) { return !j.is_object() && !j.is_array(); }

// Keys sorted (nlohmann::json is map-backed), floats at 17 digits, scalar arrays on one line.
void emit(const json& j, std::string& out, int indent) {
  const std::string pad(static_cast<std::size_t>(indent + 2), ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (const auto& [k, v] : j.items()) {
        if (!first) out += ",\n";
        first = false;
        out += pad + json(k).dump() + ": ";
        emit(v, out, indent + 2);
      }
      out += "\n" + std::string(static_cast<std::size_t>(indent), ' ') + "}";
      return;
    }
    case json::value_t::array: {
      if (std::all_of(j.begin(), j.end(), is_scalar)) {
        out += "[";
        for (std::size_t i = 0; i < j.size(); ++i) {
          if (i) out += ", ";
          emit(j[i], out, indent);
        }
        out += "]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ",\n";
        out += pad;
        emit(j[i], out, indent + 2);
      }
      out += "\n" + std::string(static_cast<std::size_t>(indent), ' ') + "]";
      return;
    }
    case json::value_t::number_float:
      out += format_double(j.get<double>());
      return;
    default:
      out += j.dump();
  }
}

std::string canonical(const json& j) {
  std::string out;
  emit(j, out, 0);
  out += "\n";
  return out;
}

json vec_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json columns_json(const Matrix& m) {
  json a = json::array();
  for (Eigen::Index c = 0; c < m.cols(); ++c) a.push_back(vec_json(m.col(c)));
  return a;
}

json rows_json(const Matrix& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(vec_json(m.row(r).transpose()));
  return a;
}

// Typed access with the JSON pointer of every field in the error message.
class Reader {
 public:
  Reader(std::string source, std::string unknown_hint) : source_(std::move(source)), hint_(std::move(unknown_hint)) {}

  [[noreturn]] void fail(const std::string& ptr, const std::string& what) const {
    throw FormatError(source_ + ": " + (ptr.empty() ? "/" : ptr) + ": " + what);
  }

  void object(const json& j, const std::string& ptr, const std::set<std::string>& allowed,
              const std::set<std::string>& required = {}) const {
    if (!j.is_object()) fail(ptr, "expected an object");
    for (const auto& [k, v] : j.items())
      if (!allowed.count(k))
        fail(ptr + "/" + k, "unknown field" + hint_);
    for (const auto& k : required)
      if (!j.contains(k)) fail(ptr + "/" + k, "missing field");
  }

  double number(const json& j, const std::string& ptr) const {
    if (!j.is_number()) fail(ptr, "expected a number");
    const double x = j.get<double>();
    if (!std::isfinite(x)) fail(ptr, "non-finite number");
    return x;
  }
  long long integer(const json& j, const std::string& ptr) const {
    if (!j.is_number_integer()) fail(ptr, "expected an integer");
    return j.get<long long>();
  }
  std::uint64_t unsigned_integer(const json& j, const std::string& ptr) const {
    if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0))
      fail(ptr, "expected a non-negative integer");
    return j.get<std::uint64_t>();
  }
  int small_int(const json& j, const std::string& ptr) const {
    const long long v = integer(j, ptr);
    if (v < -1000000000LL || v > 1000000000LL) fail(ptr, "integer out of range");
    return static_cast<int>(v);
  }
  bool boolean(const json& j, const std::string& ptr) const {
    if (!j.is_boolean()) fail(ptr, "expected true or false");
    return j.get<bool>();
  }
  std::string string(const json& j, const std::string& ptr) const {
    if (!j.is_string()) fail(ptr, "expected a string");
    return j.get<std::string>();
  }
  Vector vector(const json& j, const std::string& ptr, long expected = -1) const {
    if (!j.is_array()) fail(ptr, "expected an array of numbers");
    if (expected >= 0 && static_cast<long>(j.size()) != expected)
      fail(ptr, "expected " + std::to_string(expected) + " entries, found " + std::to_string(j.size()));
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = number(j[i], ptr + "/" + std::to_string(i));
    return v;
  }
  // array of `outer` arrays with `inner` numbers each
  Matrix nested(const json& j, const std::string& ptr, long outer, long inner, bool columns) const {
    if (!j.is_array()) fail(ptr, "expected an array of arrays");
    if (static_cast<long>(j.size()) != outer)
      fail(ptr, "expected " + std::to_string(outer) + " entries, found " + std::to_string(j.size()));
    Matrix m = columns ? Matrix(inner, outer) : Matrix(outer, inner);
    for (long k = 0; k < outer; ++k) {
      const Vector v = vector(j[static_cast<std::size_t>(k)], ptr + "/" + std::to_string(k), inner);
      if (columns)
        m.col(k) = v;
      else
        m.row(k) = v.transpose();
    }
    return m;
  }

 private:
  std::string source_;
  std::string hint_;
};

json domain_json(const BasisSpec& b) {
  json t = {{"t_lower", b.temporal_domain.t_lower}, {"t_upper", b.temporal_domain.t_upper}};
  json poly = json::array();
  for (const auto& p : b.spatial_domain.polygon) poly.push_back(json::array({p.x, p.y}));
  json s = {{"x_lower", b.spatial_domain.x_lower},
            {"x_upper", b.spatial_domain.x_upper},
            {"y_lower", b.spatial_domain.y_lower},
            {"y_upper", b.spatial_domain.y_upper},
            {"polygon", poly}};
  return {{"temporal", t}, {"spatial", s}};
}

json basis_json(const BasisSpec& b) {
  json t = {{"n_interior_knots", b.temporal.n_interior_knots},
            {"periodic", b.temporal.periodic},
            {"n_quad", b.temporal.n_quad}};
  json s = {{"centroids_x", b.spatial.centroids_x},
            {"centroids_y", b.spatial.centroids_y},
            {"bandwidth_factor", b.spatial.bandwidth_factor},
            {"n_quad_per_axis", b.spatial.n_quad_per_axis}};
  return {{"temporal", t}, {"spatial", s}};
}

void read_domain(const Reader& r, const json& j, const std::string& ptr, BasisSpec& b) {
  r.object(j, ptr, {"temporal", "spatial"});
  if (j.contains("temporal")) {
    const json& t = j["temporal"];
    const std::string p = ptr + "/temporal";
    r.object(t, p, {"t_lower", "t_upper"});
    if (t.contains("t_lower")) b.temporal_domain.t_lower = r.number(t["t_lower"], p + "/t_lower");
    if (t.contains("t_upper")) b.temporal_domain.t_upper = r.number(t["t_upper"], p + "/t_upper");
  }
  if (j.contains("spatial")) {
    const json& s = j["spatial"];
    const std::string p = ptr + "/spatial";
    r.object(s, p, {"x_lower", "x_upper", "y_lower", "y_upper", "polygon"});
    if (s.contains("x_lower")) b.spatial_domain.x_lower = r.number(s["x_lower"], p + "/x_lower");
    if (s.contains("x_upper")) b.spatial_domain.x_upper = r.number(s["x_upper"], p + "/x_upper");
    if (s.contains("y_lower")) b.spatial_domain.y_lower = r.number(s["y_lower"], p + "/y_lower");
    if (s.contains("y_upper")) b.spatial_domain.y_upper = r.number(s["y_upper"], p + "/y_upper");
    if (s.contains("polygon")) {
      const json& poly = s["polygon"];
      if (!poly.is_array()) r.fail(p + "/polygon", "expected an array of [x, y] pairs");
      b.spatial_domain.polygon.clear();
      for (std::size_t i = 0; i < poly.size(); ++i) {
        const Vector xy = r.vector(poly[i], p + "/polygon/" + std::to_string(i), 2);
        b.spatial_domain.polygon.push_back({xy[0], xy[1]});
      }
    }
  }
  try {
    b.temporal_domain.validate();
    b.spatial_domain.validate();
  } catch (const std::exception& e) {
    r.fail(ptr, e.what());
  }
}

void read_basis(const Reader& r, const json& j, const std::string& ptr, BasisSpec& b) {
  r.object(j, ptr, {"temporal", "spatial"});
  if (j.contains("temporal")) {
    const json& t = j["temporal"];
    const std::string p = ptr + "/temporal";
    r.object(t, p, {"n_interior_knots", "periodic", "n_quad"});
    if (t.contains("n_interior_knots")) b.temporal.n_interior_knots = r.small_int(t["n_interior_knots"], p + "/n_interior_knots");
    if (t.contains("periodic")) b.temporal.periodic = r.boolean(t["periodic"], p + "/periodic");
    if (t.contains("n_quad")) b.temporal.n_quad = r.small_int(t["n_quad"], p + "/n_quad");
  }
  if (j.contains("spatial")) {
    const json& s = j["spatial"];
    const std::string p = ptr + "/spatial";
    r.object(s, p, {"centroids_x", "centroids_y", "bandwidth_factor", "n_quad_per_axis"});
    if (s.contains("centroids_x")) b.spatial.centroids_x = r.small_int(s["centroids_x"], p + "/centroids_x");
    if (s.contains("centroids_y")) b.spatial.centroids_y = r.small_int(s["centroids_y"], p + "/centroids_y");
    if (s.contains("bandwidth_factor")) b.spatial.bandwidth_factor = r.number(s["bandwidth_factor"], p + "/bandwidth_factor");
    if (s.contains("n_quad_per_axis")) b.spatial.n_quad_per_axis = r.small_int(s["n_quad_per_axis"], p + "/n_quad_per_axis");
  }
}

json parse_json(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(source + ": not valid JSON (" + e.what() + ")");
  }
}

json model_json(const ModelFile& m) {
  const ModelParameters& p = m.params;
  if (p.p1() < 1 || p.p2() < 1) throw std::invalid_argument("model files require p1 >= 1 and p2 >= 1");
  json theta = {{"tau", p.tau},
                {"sigma_z2", p.sigma_z2},
                {"c0", vec_json(p.c0)},
                {"C", columns_json(p.C)},
                {"sigma_u2", vec_json(p.sigma_u2)},
                {"d0", vec_json(p.d0)},
                {"D", columns_json(p.D)},
                {"sigma_v2", vec_json(p.sigma_v2)},
                {"sigma_zu", vec_json(p.sigma_zu)},
                {"sigma_zv", vec_json(p.sigma_zv)},
                {"Sigma_uv", rows_json(p.Sigma_uv)}};
  json doc = {{"format", "stcox-model"},
              {"format_version", kModelFormatVersion},
              {"domain", domain_json(m.basis)},
              {"basis", basis_json(m.basis)},
              {"p1", p.p1()},
              {"p2", p.p2()},
              {"theta", theta},
              {"provenance",
               {{"seed", m.provenance.seed},
                {"config_hash", m.provenance.config_hash},
                {"command", m.provenance.command}}}};
  if (m.fit) {
    doc["fit"] = {{"xi", json::array({m.fit->xi[0], m.fit->xi[1], m.fit->xi[2], m.fit->xi[3]})},
                  {"penalized_loglik", m.fit->penalized_loglik},
                  {"iterations", m.fit->iterations},
                  {"converged", m.fit->converged}};
  }
  return doc;
}

std::string checksum_of(const json& doc) { return "fnv1a64:" + hex64(fnv1a64(canonical(doc))); }

json config_json(const RunConfig& c) {
  const FitConfig& f = c.fit;
  return {{"p1", f.p1},
          {"p2", f.p2},
          {"xi", json::array({f.xi[0], f.xi[1], f.xi[2], f.xi[3]})},
          {"em_tol", f.em_tol},
          {"em_max_iter", f.em_max_iter},
          {"newton_tol", f.newton_tol},
          {"newton_max_iter", f.newton_max_iter},
          {"seed", f.seed},
          {"threads", f.threads},
          {"domain", domain_json(c.basis)},
          {"basis", basis_json(c.basis)}};
}

bool valid_id(const std::string& id) {
  return !id.empty() && id.find_first_of(",\"\r\n") == std::string::npos;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

bool parse_double(std::string_view s, double& out) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

}  // namespace

std::string sidecar_path(const std::string& events_path) { return events_path + ".replicates"; }

std::vector<PointPattern> read_events(const std::string& path, const TemporalDomain& tdom,
                                      const SpatialDomain& sdom) {
  const std::string side = sidecar_path(path);
  std::ifstream sin(side);
  if (!sin) throw FormatError(path + ": missing replicate sidecar '" + side + "'");
  std::vector<PointPattern> patterns;
  std::map<std::string, std::size_t> index;
  std::string line;
  for (int ln = 1; std::getline(sin, line); ++ln) {
    line = strip_cr(line);
    if (line.empty()) continue;
    if (!valid_id(line)) throw FormatError(side + ": line " + std::to_string(ln) + ": invalid replicate id");
    if (!index.emplace(line, patterns.size()).second)
      throw FormatError(side + ": line " + std::to_string(ln) + ": duplicate replicate id '" + line + "'");
    patterns.push_back({line, {}});
  }

  std::ifstream in(path);
  if (!in) throw FormatError("cannot open events file '" + path + "'");
  if (!std::getline(in, line)) throw FormatError(path + ": empty file (expected header replicate_id,t,s1,s2)");
  if (strip_cr(line) != "replicate_id,t,s1,s2")
    throw FormatError(path + ": line 1: header must be exactly 'replicate_id,t,s1,s2'");
  for (int ln = 2; std::getline(in, line); ++ln) {
    line = strip_cr(line);
    if (line.empty()) continue;
    const std::string where = path + ": line " + std::to_string(ln) + ": ";
    std::vector<std::string_view> f;
    std::string_view rest(line);
    for (;;) {
      const auto c = rest.find(',');
      f.push_back(rest.substr(0, c));
      if (c == std::string_view::npos) break;
      rest.remove_prefix(c + 1);
    }
    if (f.size() != 4) throw FormatError(where + "expected 4 columns, found " + std::to_string(f.size()));
    const auto it = index.find(std::string(f[0]));
    if (it == index.end()) throw FormatError(where + "unknown replicate_id '" + std::string(f[0]) + "'");
    Event e;
    if (!parse_double(f[1], e.t)) throw FormatError(where + "t is not a number");
    if (!parse_double(f[2], e.x)) throw FormatError(where + "s1 is not a number");
    if (!parse_double(f[3], e.y)) throw FormatError(where + "s2 is not a number");
    if (!tdom.contains(e.t))
      throw FormatError(where + "t = " + format_double(e.t) + " outside [" + format_double(tdom.t_lower) + ", " +
                        format_double(tdom.t_upper) + "]");
    if (!sdom.contains(e.x, e.y))
      throw FormatError(where + "(s1, s2) = (" + format_double(e.x) + ", " + format_double(e.y) +
                        ") outside the spatial domain");
    patterns[it->second].events.push_back(e);
  }
  return patterns;
}

void write_events(const std::string& path, const std::vector<PointPattern>& patterns) {
  std::string csv = "replicate_id,t,s1,s2\n", side;
  std::set<std::string> seen;
  for (const auto& p : patterns) {
    if (!valid_id(p.id)) throw std::invalid_argument("replicate id '" + p.id + "' is empty or contains , \" or newline");
    if (!seen.insert(p.id).second) throw std::invalid_argument("duplicate replicate id '" + p.id + "'");
    side += p.id + "\n";
    for (const auto& e : p.events)
      csv += p.id + "," + format_double(e.t) + "," + format_double(e.x) + "," + format_double(e.y) + "\n";
  }
  write_file(path, csv);
  write_file(sidecar_path(path), side);
}

std::string model_to_string(const ModelFile& model) {
  json doc = model_json(model);
  doc["checksum"] = checksum_of(doc);
  return canonical(doc);
}

ModelFile model_from_string(const std::string& text, const std::string& source) {
  json doc = parse_json(text, source);
  const Reader r(source, " (this build reads format_version " + std::to_string(kModelFormatVersion) + " model files)");
  if (!doc.is_object()) r.fail("", "expected a JSON object");
  if (!doc.contains("format_version")) r.fail("/format_version", "missing field");
  const long long version = r.integer(doc["format_version"], "/format_version");
  if (version > kModelFormatVersion)
    r.fail("/format_version", "file has format_version " + std::to_string(version) + "; this build reads up to " +
                                  std::to_string(kModelFormatVersion) + ", upgrade to read it");
  if (version < 1) r.fail("/format_version", "unsupported format_version " + std::to_string(version));
  r.object(doc, "",
           {"format", "format_version", "domain", "basis", "p1", "p2", "theta", "provenance", "fit", "checksum"},
           {"format", "domain", "basis", "p1", "p2", "theta", "provenance", "checksum"});
  if (r.string(doc["format"], "/format") != "stcox-model") r.fail("/format", "not an stcox model file");

  ModelFile m;
  read_domain(r, doc["domain"], "/domain", m.basis);
  read_basis(r, doc["basis"], "/basis", m.basis);
  const int p1 = r.small_int(doc["p1"], "/p1");
  const int p2 = r.small_int(doc["p2"], "/p2");
  if (p1 < 1) r.fail("/p1", "must be at least 1");
  if (p2 < 1) r.fail("/p2", "must be at least 1");

  const json& t = doc["theta"];
  const std::set<std::string> keys = {"tau", "sigma_z2", "c0", "C", "sigma_u2", "d0", "D", "sigma_v2",
                                      "sigma_zu", "sigma_zv", "Sigma_uv"};
  r.object(t, "/theta", keys, keys);
  ModelParameters& p = m.params;
  p.tau = r.number(t["tau"], "/theta/tau");
  p.sigma_z2 = r.number(t["sigma_z2"], "/theta/sigma_z2");
  p.c0 = r.vector(t["c0"], "/theta/c0");
  p.d0 = r.vector(t["d0"], "/theta/d0");
  p.C = r.nested(t["C"], "/theta/C", p1, static_cast<long>(p.c0.size()), true);
  p.D = r.nested(t["D"], "/theta/D", p2, static_cast<long>(p.d0.size()), true);
  p.sigma_u2 = r.vector(t["sigma_u2"], "/theta/sigma_u2", p1);
  p.sigma_v2 = r.vector(t["sigma_v2"], "/theta/sigma_v2", p2);
  p.sigma_zu = r.vector(t["sigma_zu"], "/theta/sigma_zu", p1);
  p.sigma_zv = r.vector(t["sigma_zv"], "/theta/sigma_zv", p2);
  p.Sigma_uv = r.nested(t["Sigma_uv"], "/theta/Sigma_uv", p1, p2, false);

  const json& pv = doc["provenance"];
  r.object(pv, "/provenance", {"seed", "config_hash", "command"}, {"seed", "config_hash", "command"});
  m.provenance.seed = r.unsigned_integer(pv["seed"], "/provenance/seed");
  m.provenance.config_hash = r.string(pv["config_hash"], "/provenance/config_hash");
  m.provenance.command = r.string(pv["command"], "/provenance/command");

  if (doc.contains("fit")) {
    const json& f = doc["fit"];
    r.object(f, "/fit", {"xi", "penalized_loglik", "iterations", "converged"},
             {"xi", "penalized_loglik", "iterations", "converged"});
    FitSummary s;
    const Vector xi = r.vector(f["xi"], "/fit/xi", 4);
    for (int k = 0; k < 4; ++k) s.xi[k] = xi[k];
    s.penalized_loglik = r.number(f["penalized_loglik"], "/fit/penalized_loglik");
    s.iterations = r.small_int(f["iterations"], "/fit/iterations");
    s.converged = r.boolean(f["converged"], "/fit/converged");
    m.fit = s;
  }

  // fields first so that a damaged value is reported by its path
  const std::string stored = r.string(doc["checksum"], "/checksum");
  json body = doc;
  body.erase("checksum");
  if (stored != checksum_of(body))
    r.fail("/checksum", "checksum mismatch (file modified or corrupted): stored " + stored + ", computed " +
                            checksum_of(body));
  return m;
}

void write_model(const std::string& path, const ModelFile& model) { write_file(path, model_to_string(model)); }

ModelFile read_model(const std::string& path) { return model_from_string(read_file(path), path); }

void check_model_shapes(const ModelParameters& p, const BasisSystem& basis, const std::string& source) {
  auto bad = [&](const std::string& what) { throw FormatError(source + ": " + what); };
  if (p.c0.size() != basis.q1() || p.C.rows() != basis.q1())
    bad("temporal coefficients have " + std::to_string(p.c0.size()) + " rows but the basis has q1 = " +
        std::to_string(basis.q1()));
  if (p.d0.size() != basis.q2() || p.D.rows() != basis.q2())
    bad("spatial coefficients have " + std::to_string(p.d0.size()) + " rows but the basis has q2 = " +
        std::to_string(basis.q2()));
}

std::string config_to_string(const RunConfig& config) { return canonical(config_json(config)); }

RunConfig config_from_string(const std::string& text, const std::string& source) {
  const json doc = parse_json(text, source);
  const Reader r(source, "");
  r.object(doc, "",
           {"p1", "p2", "xi", "em_tol", "em_max_iter", "newton_tol", "newton_max_iter", "seed", "threads", "domain",
            "basis"});
  RunConfig c;
  FitConfig& f = c.fit;
  if (doc.contains("p1")) f.p1 = r.small_int(doc["p1"], "/p1");
  if (doc.contains("p2")) f.p2 = r.small_int(doc["p2"], "/p2");
  if (doc.contains("xi")) {
    const Vector xi = r.vector(doc["xi"], "/xi", 4);
    for (int k = 0; k < 4; ++k) f.xi[k] = xi[k];
  }
  if (doc.contains("em_tol")) f.em_tol = r.number(doc["em_tol"], "/em_tol");
  if (doc.contains("em_max_iter")) f.em_max_iter = r.small_int(doc["em_max_iter"], "/em_max_iter");
  if (doc.contains("newton_tol")) f.newton_tol = r.number(doc["newton_tol"], "/newton_tol");
  if (doc.contains("newton_max_iter")) f.newton_max_iter = r.small_int(doc["newton_max_iter"], "/newton_max_iter");
  if (doc.contains("seed")) f.seed = r.unsigned_integer(doc["seed"], "/seed");
  if (doc.contains("threads")) f.threads = r.small_int(doc["threads"], "/threads");
  if (doc.contains("domain")) read_domain(r, doc["domain"], "/domain", c.basis);
  if (doc.contains("basis")) read_basis(r, doc["basis"], "/basis", c.basis);
  try {
    f.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(source + ": " + e.what());
  }
  return c;
}

RunConfig read_config(const std::string& path) { return config_from_string(read_file(path), path); }

std::string config_hash(const RunConfig& config) { return hex64(fnv1a64(config_to_string(config))); }

void write_trace(const std::string& path, const std::vector<FitIteration>& trace) {
  std::string out = "iteration,penalized_loglik,flagged\n";
  for (const auto& it : trace)
    out += std::to_string(it.iteration) + "," + format_double(it.penalized_loglik) + "," + (it.flagged ? "1" : "0") + "\n";
  write_file(path, out);
}

}  // namespace stcox::io
