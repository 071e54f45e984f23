#ifndef STCOX_IO_HPP
#define STCOX_IO_HPP

#include "stcox/estimate.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace stcox::io {

/// Malformed or inconsistent input. The message names the file and the row or field.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kModelFormatVersion = 1;

/// 17 significant digits, enough to round-trip any double.
std::string format_double(double x);

/// Sidecar listing the replicate ids, one per line: `<events path>.replicates`.
std::string sidecar_path(const std::string& events_path);

/// Reads `replicate_id,t,s1,s2` rows plus the sidecar. Patterns come out in sidecar
/// order; ids listed without rows become empty patterns.
std::vector<PointPattern> read_events(const std::string& path, const TemporalDomain& tdom,
                                      const SpatialDomain& sdom);
void write_events(const std::string& path, const std::vector<PointPattern>& patterns);

struct Provenance {
  std::uint64_t seed = 0;
  std::string config_hash;  // FNV-1a of the canonical config JSON
  std::string command;
};

struct FitSummary {
  Xi xi{};
  double penalized_loglik = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct ModelFile {
  BasisSpec basis;
  ModelParameters params;
  Provenance provenance;
  std::optional<FitSummary> fit;
};

std::string model_to_string(const ModelFile& model);
/// `source` is used in error messages.
ModelFile model_from_string(const std::string& text, const std::string& source = "<model>");
void write_model(const std::string& path, const ModelFile& model);
ModelFile read_model(const std::string& path);

/// Throws FormatError when the coefficient shapes do not match the basis.
void check_model_shapes(const ModelParameters& params, const BasisSystem& basis, const std::string& source);

/// Fit configuration file: FitConfig fields plus the domain and basis, all optional.
struct RunConfig {
  FitConfig fit;
  BasisSpec basis;
};

std::string config_to_string(const RunConfig& config);
RunConfig config_from_string(const std::string& text, const std::string& source = "<config>");
RunConfig read_config(const std::string& path);
/// Hex FNV-1a 64 of the canonical serialization.
std::string config_hash(const RunConfig& config);

void write_trace(const std::string& path, const std::vector<FitIteration>& trace);

std::uint64_t fnv1a64(const std::string& bytes);
/// Both throw std::runtime_error naming the path when the file cannot be opened.
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace stcox::io

#endif  // STCOX_IO_HPP
