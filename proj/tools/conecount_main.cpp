// Command-line driver: flat key=value config files with flag overrides, CSV
// reports on stdout or --out.  Exit codes: 0 ok, 1 invariant violation,
// 2 configuration error.
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "conecount/harness.hpp"

using conecount::harness::ConfigError;
using conecount::harness::KeyValues;

int main(int argc, char** argv) {
  CLI::App app{"conecount: counting lattice points near rays on the light cone"};
  app.require_subcommand(1);

  std::string config_path, seed, n, c_list, T_list, out, threads, alpha_mode, alpha_count;
  std::string lattice, r, kappa, samples, steps;
  std::vector<std::string> alphas, directions;
  bool timing = false;

  struct SubDesc {
    const char* name;
    const char* help;
  };
  const SubDesc subs[] = {
      {"count", "solution counts per (target, c, T) cell"},
      {"sweep", "least-squares growth slopes of counts vs T"},
      {"spiral", "direction-set fractions among counted solutions"},
      {"volume", "region volumes, closed form and Monte Carlo"},
      {"orbit", "flow-average integrals and their sandwich chains"},
      {"calibrate", "fit the density constant from counts"},
      {"selftest", "deterministic invariant suite (nonzero exit on failure)"},
  };
  for (const SubDesc& d : subs) {
    CLI::App* sub = app.add_subcommand(d.name, d.help);
    sub->add_option("--config", config_path, "key=value config file");
    sub->add_option("--seed", seed, "master seed (unsigned 64-bit)");
    sub->add_option("--n", n, "sphere dimension, 1..3");
    sub->add_option("--c", c_list, "comma-separated c values");
    sub->add_option("--T", T_list, "comma-separated increasing T grid");
    sub->add_option("--out", out, "output CSV path (default stdout)");
    sub->add_option("--threads", threads, "worker threads");
    sub->add_option("--alpha", alphas, "explicit unit target, comma-separated components")
        ->take_all();
    sub->add_option("--alpha-mode", alpha_mode, "random | explicit");
    sub->add_option("--alpha-count", alpha_count, "number of random targets");
    sub->add_option("--direction", directions,
                    "direction set: full | hemisphere:V | cap:R@V | orthant:S | complement:SPEC")
        ->take_all();
    sub->add_option("--lattice", lattice, "integer | rotated:TAG | general:TAG");
    sub->add_option("--r", r, "flow shell length");
    sub->add_option("--kappa", kappa, "density constant for volume scaling");
    sub->add_option("--samples", samples, "Monte Carlo sample count");
    sub->add_option("--steps", steps, "flow quadrature cells (0 = skip)");
    sub->add_flag("--timing", timing, "record wall-clock columns (breaks byte determinism)");
  }

  CLI11_PARSE(app, argc, argv);
  CLI::App* sub = app.get_subcommands().front();

  KeyValues kv;
  try {
    if (sub->count("--config")) kv = conecount::harness::load_config_file(config_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  auto override_key = [&](const char* flag, const char* key, const std::string& value) {
    if (sub->count(flag)) kv.set(key, value);
  };
  auto drop_indexed = [&](const std::string& base) {
    std::erase_if(kv.items, [&](const std::pair<std::string, std::string>& item) {
      const std::string& k = item.first;
      return k == base || (k.size() > base.size() + 1 &&
                           k.compare(0, base.size(), base) == 0 && k[base.size()] == '.');
    });
  };

  override_key("--seed", "seed", seed);
  override_key("--n", "n", n);
  override_key("--c", "c", c_list);
  override_key("--T", "T", T_list);
  override_key("--out", "out", out);
  override_key("--threads", "threads", threads);
  override_key("--alpha-mode", "alpha_mode", alpha_mode);
  override_key("--alpha-count", "alpha_count", alpha_count);
  override_key("--lattice", "lattice", lattice);
  override_key("--r", "r", r);
  override_key("--kappa", "kappa", kappa);
  override_key("--samples", "samples", samples);
  override_key("--steps", "steps", steps);
  if (sub->count("--alpha")) {
    drop_indexed("alpha");
    for (size_t i = 0; i < alphas.size(); ++i)
      kv.set("alpha." + std::to_string(i + 1), alphas[i]);
  }
  if (sub->count("--direction")) {
    drop_indexed("direction");
    for (size_t i = 0; i < directions.size(); ++i)
      kv.set("direction." + std::to_string(i + 1), directions[i]);
  }
  if (timing) kv.set("timing", "1");

  return conecount::harness::run_command(sub->get_name(), kv, std::cerr);
}
