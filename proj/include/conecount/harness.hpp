#pragma once
// Batch experiment driver: flat key=value configs, seeded target generation,
// and CSV reports for the counting / volume / flow commands.
//
// Contracts
//   - Determinism: identical effective config (file + overrides) and seed
//     produce byte-identical output.  Timing columns are written as 0 unless
//     the `timing` key is set, because wall-clock values would break this.
//   - Schema stability: each command declares one column list; every row has
//     exactly those columns (empty string = not applicable).
//   - Exit codes: 0 all checks pass, 1 invariant violation, 2 config error.
//
// Config keys (comma-separated lists where plural):
//   n, seed, c, T, out, threads, timing, alpha_mode (random|explicit),
//   alpha_count, alpha / alpha.K (unit target, normalized), direction /
//   direction.K (see parse_direction), lattice (integer | rotated:TAG |
//   general:TAG — TAG names a seed substream), kappa, r (orbit shell),
//   samples (MC), steps (orbit quadrature cells, 0 = skip).

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "conecount/counting.hpp"

namespace conecount::harness {

// Bad configuration: exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Failed mathematical check at runtime: exit code 1.
struct InvariantError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat ordered key -> raw value map (later duplicates overwrite).
struct KeyValues {
  std::vector<std::pair<std::string, std::string>> items;

  void set(const std::string& key, const std::string& value);
  const std::string* find(const std::string& key) const;
  bool has(const std::string& key) const { return find(key) != nullptr; }
};

// Parses `key = value` lines; '#' starts a comment, blanks skipped.
KeyValues parse_config_text(const std::string& text);
KeyValues load_config_file(const std::string& path);

// Canonical form (keys sorted, "key=value\n") and its FNV-1a 64 hash; the
// hash is echoed in every CSV header so runs can be matched to configs.
std::string canonical_text(const KeyValues& kv);
uint64_t config_hash(const KeyValues& kv);

// Direction-set spec grammar (n = direction dimension):
//   full
//   hemisphere:v1,...,vn           axis, normalized
//   cap:RADIUS@v1,...,vn           geodesic radius in (0, pi)
//   orthant:SIGNS                  SIGNS over {+,-,0}, length n
//   complement:SPEC                complement of a nested spec
DirectionSet parse_direction(const std::string& spec, int n);

std::vector<double> parse_double_list(const std::string& text);

struct ExperimentConfig {
  int n = 2;
  std::vector<double> c_list{1.0};
  std::vector<double> T_grid;
  bool alpha_random = true;
  int alpha_count = 1;
  std::vector<Vec> alpha_explicit;
  uint64_t seed = 1729;
  LatticeDescriptor lattice = LatticeDescriptor::integer_lattice(2);
  std::vector<DirectionSet> direction_sets;
  std::string output_path;  // empty = stdout
  std::optional<double> kappa;
  double r = 1.0;
  int64_t samples = 1'000'000;
  int64_t steps = 0;
  int threads = 1;
  bool timing = false;
};

// Validates and resolves a key-value set; throws ConfigError.
ExperimentConfig make_experiment_config(const KeyValues& kv);

// integer | rotated:TAG | general:TAG, randomness from substream(seed, TAG).
LatticeDescriptor make_lattice(const std::string& spec, int n, uint64_t seed);

// The resolved target list: explicit vectors (normalized) or alpha_count
// seeded uniform points on S^n.
std::vector<Vec> experiment_targets(const ExperimentConfig& cfg);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  bool ok = false;  // >= 2 points with distinct abscissae
};
LinearFit fit_line(std::span<const double> x, std::span<const double> y);

std::string csv_num(double v);  // shortest round-trip decimal (%.17g trim)

// Command bodies; rows go to `out` (metadata header included).  Return exit
// code 0/1; config problems throw ConfigError.
int cmd_count(const ExperimentConfig& cfg, const KeyValues& kv, std::ostream& out);
int cmd_sweep(const ExperimentConfig& cfg, const KeyValues& kv, std::ostream& out);
int cmd_spiral(const ExperimentConfig& cfg, const KeyValues& kv, std::ostream& out);
int cmd_volume(const ExperimentConfig& cfg, const KeyValues& kv, std::ostream& out);
int cmd_orbit(const ExperimentConfig& cfg, const KeyValues& kv, std::ostream& out);
int cmd_calibrate(const ExperimentConfig& cfg, const KeyValues& kv, std::ostream& out);
int cmd_selftest(const ExperimentConfig& cfg, const KeyValues& kv, std::ostream& out);

// Full pipeline: resolve config, open output_path (or stdout), dispatch.
// Returns the process exit code (0/1/2); error text goes to `err`.
int run_command(const std::string& command, const KeyValues& kv, std::ostream& err);

}  // namespace conecount::harness
