#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "eigenscope/eup.hpp"
#include "eigenscope/hilbert.hpp"
#include "eigenscope/rng.hpp"

namespace eigenscope {

inline constexpr const char* kVersion = "1.0.0";

/// Thrown for malformed configs and unknown names or keys (exit code 1).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Settings for one run. Negative integers and empty strings mean "use the
/// experiment default"; `resolve` fills them in.
struct ExperimentConfig {
  std::string experiment;
  std::int64_t N = -1;
  int K = -1;
  int n = -1;  // word length, defaults to the Ehrenfest time
  int n_o = -1;
  int m = -1;
  int T = -1;
  int G = -1;
  double delta_prime = -1.0;
  double gamma = -1.0;
  double eta = -1.0;
  double Lambda = -1.0;  // 0 means 10λ
  std::optional<double> theta;
  std::uint64_t seed = 42;
  std::string out_dir = ".";
  int count = -1;
  // extras
  std::string measure;  // classical-entropy: lebesgue[:res] | periodic:q,p/den | fixed
  double q0 = -1.0;
  double p0 = -1.0;
  int state = -2;  // husimi: eigenstate index, -1 for the coherent state at (q0, p0)
  int resolution = -1;

  /// key=value lines; '#' starts a comment.
  static ExperimentConfig parse_file(const std::string& path);
  void set(const std::string& key, const std::string& value);
  void resolve();
  nlohmann::ordered_json to_json() const;
};

const std::vector<std::string>& experiment_names();
const std::vector<std::string>& config_keys();

struct Check {
  std::string name;
  double value = 0.0;
  double bound = 0.0;
  bool ok = false;
};

struct RunOutcome {
  int exit_code = 0;
  std::string message;
  std::vector<std::string> files;
  nlohmann::ordered_json report;
  std::vector<Check> checks;
};

/// Runs a resolved config and writes `<experiment>.report.json` plus series
/// files under out_dir. Nothing is left behind when the run fails.
RunOutcome run_experiment(ExperimentConfig config);

/// Plot-ready CSVs next to each report. Returns the written paths; throws
/// ConfigError for an empty list or unreadable reports.
std::vector<std::string> emit_plot_data(const std::vector<std::string>& reports);

/// One instance of the random EUP sweep, drawn from stream `index` of `seed`.
struct EupInstance {
  Index N = 0;
  int K = 0;
  Matrix U;
  QuantumPartition pi;
  WeightFamily alpha;
  WeightFamily beta;
  OperatorHandle O;
  double eps = 0.0;
  StateVector psi;
};

EupInstance random_eup_instance(std::uint64_t seed, std::uint64_t index);
Matrix haar_unitary(Index n, CounterRng& rng);

}  // namespace eigenscope
