#include "doctest.h"
#include "test_util.hpp"

#include "stcox/io.hpp"
#include "stcox/simulate.hpp"

#include <filesystem>

using namespace stcox;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / ("stcox_io_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string tmp(const std::string& name) { return (scratch_dir() / name).string(); }

const BasisSystem& basis() {
  static const BasisSystem b{BasisSpec{}};
  return b;
}

io::ModelFile sample_model(int p1 = 2, int p2 = 2) {
  std::mt19937_64 rng(5);
  io::ModelFile m;
  m.params = testutil::random_theta(basis(), p1, p2, rng);
  m.provenance = {42, "0123456789abcdef", "fit --events x.csv"};
  m.fit = io::FitSummary{{1e-5, 2e-5, 3e-5, 0.1}, -123.456, 17, true};
  return m;
}

std::string replace_once(std::string s, const std::string& from, const std::string& to) {
  const auto at = s.find(from);
  REQUIRE(at != std::string::npos);
  return s.replace(at, from.size(), to);
}

}  // namespace

TEST_CASE("doubles are written with 17 significant digits") {
  CHECK(io::format_double(0.1) == "0.10000000000000001");
  CHECK(io::format_double(1.0) == "1");
  CHECK(io::format_double(-1.0 / 3.0) == "-0.33333333333333331");
  CHECK(io::format_double(2.5e-300) == "2.5e-300");
  CHECK_THROWS_AS(io::format_double(std::nan("")), std::invalid_argument);
  CHECK(io::fnv1a64("") == 14695981039346656037ull);
  CHECK(io::fnv1a64("a") == 0xaf63dc4c8601ec8cull);
}

TEST_CASE("events round trip with empty replicates") {
  std::vector<PointPattern> pats = {{"day1", {{0.25, 0.5, 0.5}, {0.75, 0.1, 0.9}}}, {"day2", {}}, {"day3", {{1.0 / 3.0, 0.2, 0.3}}}};
  const std::string path = tmp("events.csv");
  io::write_events(path, pats);
  CHECK(io::read_file(path).substr(0, 21) == "replicate_id,t,s1,s2\n");
  CHECK(io::read_file(io::sidecar_path(path)) == "day1\nday2\nday3\n");
  const auto back = io::read_events(path, TemporalDomain{}, SpatialDomain{});
  REQUIRE(back.size() == 3);
  CHECK(back[0].size() == 2);
  CHECK(back[1].size() == 0);
  CHECK(back[2].events[0].t == 1.0 / 3.0);
  io::write_events(tmp("events2.csv"), back);
  CHECK(io::read_file(tmp("events2.csv")) == io::read_file(path));

  CHECK_THROWS_AS(io::write_events(tmp("bad.csv"), {{"a,b", {}}}), std::invalid_argument);
  CHECK_THROWS_AS(io::write_events(tmp("bad.csv"), {{"a", {}}, {"a", {}}}), std::invalid_argument);
}

TEST_CASE("events reader groups rows and rejects bad input") {
  const std::string path = tmp("in.csv");
  io::write_file(io::sidecar_path(path), "b\na\nquiet\n");
  SUBCASE("grouping follows the sidecar") {
    io::write_file(path, "replicate_id,t,s1,s2\na,0.1,0.2,0.3\nb,0.5,0.5,0.5\na,0.9,0.1,0.1\n");
    const auto p = io::read_events(path, TemporalDomain{}, SpatialDomain{});
    REQUIRE(p.size() == 3);
    CHECK(p[0].id == "b");
    CHECK(p[1].id == "a");
    CHECK(p[1].size() == 2);
    CHECK(p[1].events[1].t == 0.9);
    CHECK(p[2].size() == 0);
  }
  auto error_of = [&](const std::string& body) {
    io::write_file(path, body);
    try {
      io::read_events(path, TemporalDomain{}, SpatialDomain{});
    } catch (const io::FormatError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(error_of("replicate_id,t,s1,s2\na,1.5,0.2,0.3\n").find("line 2: t = 1.5 outside [0, 1]") != std::string::npos);
  CHECK(error_of("replicate_id,t,s1,s2\na,0.5,0.2,0.3\na,0.5,1.2,0.3\n").find("line 3") != std::string::npos);
  CHECK(error_of("replicate_id,t,s1,s2\nzzz,0.5,0.2,0.3\n").find("unknown replicate_id 'zzz'") != std::string::npos);
  CHECK(error_of("replicate_id,t,s1,s2\na,0.5,0.2\n").find("expected 4 columns") != std::string::npos);
  CHECK(error_of("replicate_id,t,s1,s2\na,0.5x,0.2,0.3\n").find("t is not a number") != std::string::npos);
  CHECK(error_of("id,t,x,y\n").find("header") != std::string::npos);
  CHECK(error_of("").find("empty file") != std::string::npos);
  fs::remove(io::sidecar_path(path));
  CHECK(error_of("replicate_id,t,s1,s2\n").find("missing replicate sidecar") != std::string::npos);

  SpatialDomain tri;
  tri.polygon = {{0, 0}, {1, 0}, {0, 1}};
  io::write_file(io::sidecar_path(path), "a\n");
  io::write_file(path, "replicate_id,t,s1,s2\na,0.5,0.9,0.9\n");
  CHECK_THROWS_AS(io::read_events(path, TemporalDomain{}, tri), io::FormatError);
}

TEST_CASE("model files round trip byte for byte") {
  const io::ModelFile m = sample_model();
  const std::string a = tmp("model.json"), b = tmp("model2.json");
  io::write_model(a, m);
  const io::ModelFile back = io::read_model(a);
  io::write_model(b, back);
  CHECK(io::read_file(a) == io::read_file(b));
  CHECK(back.params.tau == m.params.tau);
  CHECK(back.params.C == m.params.C);
  CHECK(back.params.D == m.params.D);
  CHECK(back.params.Sigma_uv == m.params.Sigma_uv);
  CHECK(back.params.sigma_v2 == m.params.sigma_v2);
  CHECK(back.provenance.seed == 42);
  REQUIRE(back.fit.has_value());
  CHECK(back.fit->xi[3] == 0.1);
  CHECK(back.fit->iterations == 17);

  // the basis rebuilt from the stored spec is the one the model was fitted with
  const BasisSystem rebuilt(back.basis);
  CHECK(rebuilt.temporal().gram() == basis().temporal().gram());
  CHECK(rebuilt.spatial().penalty() == basis().spatial().penalty());
  CHECK_NOTHROW(io::check_model_shapes(back.params, rebuilt, a));

  SUBCASE("polygon domains survive") {
    io::ModelFile mm = m;
    mm.basis.spatial_domain.polygon = {{0, 0}, {1, 0}, {1, 1}, {0.3, 0.8}};
    const auto again = io::model_from_string(io::model_to_string(mm));
    CHECK(again.basis.spatial_domain.polygon.size() == 4);
    CHECK(again.basis.spatial_domain.polygon[3].y == 0.8);
    CHECK(io::model_to_string(again) == io::model_to_string(mm));
  }
}

TEST_CASE("model files are validated") {
  const std::string text = io::model_to_string(sample_model());
  auto error_of = [](const std::string& s) {
    try {
      io::model_from_string(s, "m.json");
    } catch (const io::FormatError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  SUBCASE("corrupted numbers") {
    const std::string tau = "\"tau\": ";
    const auto at = text.find(tau) + tau.size();
    std::string bad = text;
    bad.insert(at, "\"");
    bad.insert(text.find('\n', at) + 1, "\"");
    CHECK(error_of(bad).find("m.json: /theta/tau: expected a number") != std::string::npos);
    std::string garbled = text;
    garbled.insert(at + 2, "x");
    CHECK(error_of(garbled).find("m.json: not valid JSON") != std::string::npos);
  }
  SUBCASE("checksum") {
    const std::string tau = "\"tau\": ";
    const auto at = text.find(tau) + tau.size();
    std::string bad = text;
    bad[at + 1] = bad[at + 1] == '9' ? '8' : '9';
    CHECK(error_of(bad).find("checksum mismatch") != std::string::npos);
  }
  SUBCASE("future versions and unknown fields") {
    CHECK(error_of(replace_once(text, "\"format_version\": 1", "\"format_version\": 2"))
              .find("format_version 2; this build reads up to 1") != std::string::npos);
    const std::string extra = replace_once(text, "\"format_version\": 1", "\"format_version\": 1,\n  \"novel\": 3");
    CHECK(error_of(extra).find("/novel: unknown field (this build reads format_version 1") != std::string::npos);
  }
  SUBCASE("shape errors") {
    CHECK(error_of(replace_once(text, "\"p1\": 2", "\"p1\": 3")).find("/theta/C") != std::string::npos);
    CHECK(error_of(replace_once(text, "\"p1\": 2", "\"p1\": 0")).find("/p1: must be at least 1") != std::string::npos);
    BasisSpec small;
    small.temporal.n_interior_knots = 4;
    CHECK_THROWS_AS(io::check_model_shapes(sample_model().params, BasisSystem(small), "m.json"), io::FormatError);
  }
  SUBCASE("p1 = 0 cannot be written") {
    io::ModelFile m = sample_model();
    m.params = ModelParameters::zeros(basis().q1(), basis().q2(), 0, 2);
    CHECK_THROWS_AS(io::model_to_string(m), std::invalid_argument);
  }
}

TEST_CASE("config files") {
  io::RunConfig c;
  c.fit.p1 = 3;
  c.fit.xi = {1e-4, 0.0, 2.0, 1e-9};
  c.fit.seed = 18446744073709551615ull;
  c.basis.temporal.periodic = true;
  c.basis.temporal_domain.t_upper = 24.0;
  const std::string s = io::config_to_string(c);
  const io::RunConfig back = io::config_from_string(s);
  CHECK(io::config_to_string(back) == s);
  CHECK(back.fit.seed == c.fit.seed);
  CHECK(back.basis.temporal.periodic);
  CHECK(io::config_hash(back) == io::config_hash(c));
  CHECK(io::config_hash(io::RunConfig{}) != io::config_hash(c));

  const io::RunConfig partial = io::config_from_string(R"({"p1": 1, "xi": [0, 0, 0, 0]})");
  CHECK(partial.fit.p1 == 1);
  CHECK(partial.fit.p2 == 2);
  CHECK(partial.fit.em_max_iter == FitConfig{}.em_max_iter);
  CHECK_THROWS_WITH_AS(io::config_from_string(R"({"p3": 1})", "c.json"), doctest::Contains("c.json: /p3: unknown field"),
                       io::FormatError);
  CHECK_THROWS_AS(io::config_from_string(R"({"p1": 0})"), io::FormatError);
  CHECK_THROWS_AS(io::config_from_string(R"({"domain": {"temporal": {"t_lower": 2, "t_upper": 1}}})"), io::FormatError);
}

TEST_CASE("trace file") {
  io::write_trace(tmp("trace.csv"), {{0, -10.5, false}, {1, -9.25, true}});
  CHECK(io::read_file(tmp("trace.csv")) == "iteration,penalized_loglik,flagged\n0,-10.5,0\n1,-9.25,1\n");
}
