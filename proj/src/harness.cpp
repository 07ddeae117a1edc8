#include "conecount/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "conecount/dynamics.hpp"
#include "conecount/measure.hpp"
#include "conecount/rational_points.hpp"
#include "conecount/sampling.hpp"

namespace conecount::harness {

namespace {

constexpr int kCsvVersion = 1;

std::string trim(std::string_view s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  size_t e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

double parse_double(const std::string& text, const std::string& what) {
  std::string t = trim(text);
  char* end = nullptr;
  double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size() || !std::isfinite(v))
    throw ConfigError("bad number for " + what + ": '" + text + "'");
  return v;
}

int64_t parse_int(const std::string& text, const std::string& what) {
  std::string t = trim(text);
  char* end = nullptr;
  long long v = std::strtoll(t.c_str(), &end, 10);
  if (t.empty() || end != t.c_str() + t.size())
    throw ConfigError("bad integer for " + what + ": '" + text + "'");
  return v;
}

uint64_t parse_u64(const std::string& text, const std::string& what) {
  std::string t = trim(text);
  if (t.empty() || t[0] == '-') throw ConfigError("bad seed for " + what + ": '" + text + "'");
  char* end = nullptr;
  unsigned long long v = std::strtoull(t.c_str(), &end, 10);
  if (end != t.c_str() + t.size())
    throw ConfigError("bad integer for " + what + ": '" + text + "'");
  return v;
}

bool parse_bool(const std::string& text, const std::string& what) {
  std::string t = trim(text);
  if (t == "1" || t == "true" || t == "yes") return true;
  if (t == "0" || t == "false" || t == "no") return false;
  throw ConfigError("bad boolean for " + what + ": '" + text + "'");
}

Vec normalized_target(Vec v, int n) {
  if (static_cast<int>(v.size()) != n + 1)
    throw ConfigError("target must have " + std::to_string(n + 1) + " components");
  double nn = norm(v);
  if (!(nn > 0.0)) throw ConfigError("target must be nonzero");
  for (double& e : v) e /= nn;
  return v;
}

// Indexed keys "base" then "base.1", "base.2", ... in numeric order.
std::vector<std::string> collect_indexed(const KeyValues& kv, const std::string& base) {
  std::vector<std::string> out;
  if (const std::string* v = kv.find(base)) out.push_back(*v);
  std::vector<std::pair<long, std::string>> indexed;
  for (const auto& [k, v] : kv.items) {
    if (k.size() > base.size() + 1 && k.compare(0, base.size(), base) == 0 &&
        k[base.size()] == '.') {
      std::string suffix = k.substr(base.size() + 1);
      char* end = nullptr;
      long idx = std::strtol(suffix.c_str(), &end, 10);
      if (end != suffix.c_str() + suffix.size() || idx < 1)
        throw ConfigError("bad indexed key: " + k);
      indexed.emplace_back(idx, v);
    }
  }
  std::sort(indexed.begin(), indexed.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (auto& [idx, v] : indexed) out.push_back(std::move(v));
  return out;
}

bool known_key(const std::string& k) {
  static const char* simple[] = {"n",       "seed",    "c",     "T",       "out",
                                 "threads", "timing",  "alpha_mode", "alpha_count",
                                 "lattice", "kappa",   "r",     "samples", "steps"};
  for (const char* s : simple)
    if (k == s) return true;
  for (const char* base : {"alpha", "direction"}) {
    std::string b(base);
    if (k == b) return true;
    if (k.size() > b.size() + 1 && k.compare(0, b.size(), b) == 0 && k[b.size()] == '.')
      return true;
  }
  return false;
}

struct Stopwatch {
  bool enabled = false;
  std::chrono::steady_clock::time_point t0;
  explicit Stopwatch(bool on) : enabled(on), t0(std::chrono::steady_clock::now()) {}
  double ms() const {
    if (!enabled) return 0.0;
    auto dt = std::chrono::steady_clock::now() - t0;
    return std::chrono::duration<double, std::milli>(dt).count();
  }
};

void put_row(std::ostream& out, const std::vector<std::string>& cells) {
  for (size_t i = 0; i < cells.size(); ++i) {
    if (i) out << ',';
    out << cells[i];
  }
  out << '\n';
}

void write_meta(std::ostream& out, const std::string& command, const ExperimentConfig& cfg,
                const KeyValues& kv, const std::vector<std::string>& cols) {
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(config_hash(kv)));
  out << "# conecount csv " << kCsvVersion << "\n";
  out << "# command=" << command << "\n";
  out << "# seed=" << cfg.seed << "\n";
  out << "# config_hash=" << hash << "\n";
  put_row(out, cols);
}

std::string fmt_i(int64_t v) { return std::to_string(v); }
std::string fmt_u(uint64_t v) { return std::to_string(v); }

const DirectionSet* first_set(const ExperimentConfig& cfg) {
  return cfg.direction_sets.empty() ? nullptr : &cfg.direction_sets.front();
}

std::string set_label(const DirectionSet* A) { return A == nullptr ? "full" : A->label(); }

CountOptions count_options(const ExperimentConfig& cfg) {
  CountOptions opt;
  opt.threads = cfg.threads;
  return opt;
}

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

void KeyValues::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : items)
    if (k == key) {
      v = value;
      return;
    }
  items.emplace_back(key, value);
}

const std::string* KeyValues::find(const std::string& key) const {
  for (const auto& [k, v] : items)
    if (k == key) return &v;
  return nullptr;
}

KeyValues parse_config_text(const std::string& text) {
  KeyValues kv;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (size_t hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::string t = trim(line);
    if (t.empty()) continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    kv.set(key, value);
  }
  return kv;
}

KeyValues load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string canonical_text(const KeyValues& kv) {
  auto items = kv.items;
  // The destination path is plumbing, not experiment identity: runs that
  // differ only in `out` must produce byte-identical rows and hash.
  std::erase_if(items, [](const auto& item) { return item.first == "out"; });
  std::sort(items.begin(), items.end());
  std::string out;
  for (const auto& [k, v] : items) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

uint64_t config_hash(const KeyValues& kv) {
  std::string text = canonical_text(kv);
  uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::string norm = text;
  std::replace(norm.begin(), norm.end(), ',', ' ');
  std::stringstream ss(norm);
  std::string tok;
  while (ss >> tok) out.push_back(parse_double(tok, "list entry"));
  return out;
}

DirectionSet parse_direction(const std::string& spec, int n) {
  std::string t = trim(spec);
  if (t == "full") return DirectionSet::full(n);
  size_t colon = t.find(':');
  if (colon == std::string::npos)
    throw ConfigError("bad direction spec: '" + spec + "'");
  std::string kind = t.substr(0, colon), rest = trim(t.substr(colon + 1));
  try {
    if (kind == "hemisphere") {
      Vec axis = parse_double_list(rest);
      if (static_cast<int>(axis.size()) != n)
        throw ConfigError("hemisphere axis needs " + std::to_string(n) + " components");
      return DirectionSet::hemisphere(std::move(axis));
    }
    if (kind == "cap") {
      size_t at = rest.find('@');
      if (at == std::string::npos)
        throw ConfigError("cap spec needs RADIUS@center");
      double radius = parse_double(rest.substr(0, at), "cap radius");
      Vec center = parse_double_list(rest.substr(at + 1));
      if (static_cast<int>(center.size()) != n)
        throw ConfigError("cap center needs " + std::to_string(n) + " components");
      return DirectionSet::cap(std::move(center), radius);
    }
    if (kind == "orthant") {
      std::vector<int> signs;
      for (char ch : rest) {
        if (ch == '+') signs.push_back(1);
        else if (ch == '-') signs.push_back(-1);
        else if (ch == '0') signs.push_back(0);
        else if (ch != ' ') throw ConfigError("orthant signs must be +, -, or 0");
      }
      if (static_cast<int>(signs.size()) != n)
        throw ConfigError("orthant needs " + std::to_string(n) + " signs");
      return DirectionSet::orthant(std::move(signs));
    }
    if (kind == "complement") return DirectionSet::complement(parse_direction(rest, n));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("bad direction spec: ") + e.what());
  }
  throw ConfigError("unknown direction kind: '" + kind + "'");
}

LatticeDescriptor make_lattice(const std::string& spec, int n, uint64_t seed) {
  std::string t = trim(spec);
  if (t.empty() || t == "integer") return LatticeDescriptor::integer_lattice(n);
  size_t colon = t.find(':');
  std::string kind = colon == std::string::npos ? t : t.substr(0, colon);
  std::string tag = colon == std::string::npos ? "1" : trim(t.substr(colon + 1));
  if (tag.empty()) throw ConfigError("lattice spec needs a tag after ':'");
  std::mt19937_64 rng = substream(seed, "lattice:" + tag);
  if (kind == "rotated") {
    GroupElement k = embed_K(random_rotation(n + 1, rng));
    return LatticeDescriptor::transformed(k, "rotated:" + tag);
  }
  if (kind == "general") {
    Vec y = random_in_ball(n, 0.8, rng);
    std::uniform_real_distribution<double> ud(-0.75, 0.75);
    GroupElement g = make_u_y(y) * make_g_t(n, ud(rng)) * embed_K(random_rotation(n + 1, rng));
    return LatticeDescriptor::transformed(g, "general:" + tag);
  }
  throw ConfigError("unknown lattice kind: '" + spec + "'");
}

ExperimentConfig make_experiment_config(const KeyValues& kv) {
  for (const auto& [k, v] : kv.items)
    if (!known_key(k)) throw ConfigError("unknown config key: '" + k + "'");

  ExperimentConfig cfg;
  if (const std::string* v = kv.find("n")) {
    int64_t n = parse_int(*v, "n");
    if (n < kMinSphereDim || n > kMaxSphereDim)
      throw ConfigError("n must be 1, 2, or 3");
    cfg.n = static_cast<int>(n);
  }
  if (const std::string* v = kv.find("seed")) cfg.seed = parse_u64(*v, "seed");
  if (const std::string* v = kv.find("c")) cfg.c_list = parse_double_list(*v);
  if (cfg.c_list.empty()) throw ConfigError("c list must be nonempty");
  for (double c : cfg.c_list)
    if (!(c > 0.0)) throw ConfigError("c values must be positive");
  if (const std::string* v = kv.find("T")) cfg.T_grid = parse_double_list(*v);
  for (size_t i = 0; i < cfg.T_grid.size(); ++i) {
    if (!(cfg.T_grid[i] > 0.0)) throw ConfigError("T values must be positive");
    if (i > 0 && !(cfg.T_grid[i] > cfg.T_grid[i - 1]))
      throw ConfigError("T grid must be strictly increasing");
  }

  std::string mode = "random";
  if (const std::string* v = kv.find("alpha_mode")) mode = trim(*v);
  std::vector<std::string> alpha_raw = collect_indexed(kv, "alpha");
  if (mode == "explicit" || (!alpha_raw.empty() && !kv.has("alpha_mode"))) {
    if (alpha_raw.empty()) throw ConfigError("alpha_mode=explicit needs alpha keys");
    cfg.alpha_random = false;
    for (const std::string& raw : alpha_raw)
      cfg.alpha_explicit.push_back(normalized_target(parse_double_list(raw), cfg.n));
    cfg.alpha_count = static_cast<int>(cfg.alpha_explicit.size());
  } else if (mode == "random") {
    if (!alpha_raw.empty())
      throw ConfigError("alpha keys conflict with alpha_mode=random");
    cfg.alpha_random = true;
    if (const std::string* v = kv.find("alpha_count")) {
      int64_t cnt = parse_int(*v, "alpha_count");
      if (cnt < 1 || cnt > 100000) throw ConfigError("alpha_count must be in [1, 100000]");
      cfg.alpha_count = static_cast<int>(cnt);
    }
  } else {
    throw ConfigError("alpha_mode must be random or explicit");
  }
  if (!cfg.alpha_random && kv.has("alpha_count"))
    throw ConfigError("alpha_count conflicts with explicit targets");

  std::string lattice_spec = "integer";
  if (const std::string* v = kv.find("lattice")) lattice_spec = *v;
  cfg.lattice = make_lattice(lattice_spec, cfg.n, cfg.seed);

  for (const std::string& raw : collect_indexed(kv, "direction"))
    cfg.direction_sets.push_back(parse_direction(raw, cfg.n));

  if (const std::string* v = kv.find("out")) cfg.output_path = trim(*v);
  if (const std::string* v = kv.find("kappa")) {
    double kappa = parse_double(*v, "kappa");
    if (!(kappa > 0.0)) throw ConfigError("kappa must be positive");
    cfg.kappa = kappa;
  }
  if (const std::string* v = kv.find("r")) {
    cfg.r = parse_double(*v, "r");
    if (!(cfg.r > 0.0)) throw ConfigError("r must be positive");
  }
  if (const std::string* v = kv.find("samples")) {
    cfg.samples = parse_int(*v, "samples");
    if (cfg.samples < 1) throw ConfigError("samples must be >= 1");
  }
  if (const std::string* v = kv.find("steps")) {
    cfg.steps = parse_int(*v, "steps");
    if (cfg.steps < 0) throw ConfigError("steps must be >= 0");
  }
  if (const std::string* v = kv.find("threads")) {
    int64_t th = parse_int(*v, "threads");
    if (th < 1 || th > 256) throw ConfigError("threads must be in [1, 256]");
    cfg.threads = static_cast<int>(th);
  }
  if (const std::string* v = kv.find("timing")) cfg.timing = parse_bool(*v, "timing");
  return cfg;
}

std::vector<Vec> experiment_targets(const ExperimentConfig& cfg) {
  if (!cfg.alpha_random) return cfg.alpha_explicit;
  std::mt19937_64 rng = substream(cfg.seed, "targets");
  std::vector<Vec> out;
  out.reserve(static_cast<size_t>(cfg.alpha_count));
  for (int i = 0; i < cfg.alpha_count; ++i)
    out.push_back(random_unit_vector(cfg.n + 1, rng));
  return out;
}

LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
  LinearFit fit;
  if (x.size() != y.size() || x.size() < 2) return fit;
  double mx = mean_of(x), my = mean_of(y);
  double sxx = 0.0, sxy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) return fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0, ss_tot = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    double e = y[i] - (fit.intercept + fit.slope * x[i]);
    ss_res += e * e;
    ss_tot += (y[i] - my) * (y[i] - my);
  }
  fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  fit.ok = true;
  return fit;
}

std::string csv_num(double v) {
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

int cmd_count(const ExperimentConfig& cfg, const KeyValues& kv, std::ostream& out) {
  std::vector<std::string> cols = {"n", "c", "T"};
  for (int i = 1; i <= cfg.n + 1; ++i) cols.push_back("alpha_" + std::to_string(i));
  for (const char* s : {"total", "primitive_total", "polar", "boundary_hits", "elapsed_ms"})
    cols.emplace_back(s);
  write_meta(out, "count", cfg, kv, cols);

  std::vector<Vec> targets = experiment_targets(cfg);
  CountOptions opt = count_options(cfg);
  for (size_t ai = 0; ai < targets.size(); ++ai) {
    for (double c : cfg.c_list) {
      for (double T : cfg.T_grid) {
        Stopwatch sw(cfg.timing);
        CountReport rep = count_N(targets[ai], make_window(T, c), cfg.lattice, nullptr, opt);
        std::vector<std::string> row = {fmt_i(cfg.n), csv_num(c), csv_num(T)};
        for (double a : targets[ai]) row.push_back(csv_num(a));
        row.push_back(fmt_i(rep.total));
        row.push_back(fmt_i(rep.primitive_total));
        row.push_back(fmt_i(rep.polar));
        row.push_back(fmt_u(rep.boundary_hits));
        row.push_back(csv_num(sw.ms()));
        put_row(out, row);
      }
    }
  }
  return 0;
}

int cmd_sweep(const ExperimentConfig& cfg, const KeyValues& kv, std::ostream& out) {
  std::vector<std::string> cols = {"row_type", "n",  "c",      "alpha_id", "slope",
                                   "intercept", "r2", "rel_sd", "status"};
  write_meta(out, "sweep", cfg, kv, cols);

  std::vector<Vec> targets = experiment_targets(cfg);
  size_t nc = cfg.c_list.size(), nt = cfg.T_grid.size();
  // counts[ai][ci][ti]
  std::vector<std::vector<std::vector<int64_t>>> counts(
      targets.size(), std::vector<std::vector<int64_t>>(nc, std::vector<int64_t>(nt, 0)));
  CountOptions opt = count_options(cfg);
  for (size_t ai = 0; ai < targets.size(); ++ai) {
    if (cfg.lattice.kind == LatticeDescriptor::Kind::integer) {
      GridResult gr = count_grid(targets[ai], cfg.c_list, cfg.T_grid, nullptr, cfg.threads);
      for (size_t ci = 0; ci < nc; ++ci)
        for (size_t ti = 0; ti < nt; ++ti) counts[ai][ci][ti] = gr.cell(ci, ti).total;
    } else {
      for (size_t ci = 0; ci < nc; ++ci)
        for (size_t ti = 0; ti < nt; ++ti)
          counts[ai][ci][ti] =
              count_N(targets[ai], make_window(cfg.T_grid[ti], cfg.c_list[ci]), cfg.lattice,
                      nullptr, opt)
                  .total;
    }
  }

  std::vector<std::vector<double>> slopes(nc);  // usable fits per c
  for (size_t ai = 0; ai < targets.size(); ++ai) {
    for (size_t ci = 0; ci < nc; ++ci) {
      std::vector<double> ys(nt);
      bool all_zero = nt > 0;
      for (size_t ti = 0; ti < nt; ++ti) {
        ys[ti] = static_cast<double>(counts[ai][ci][ti]);
        all_zero = all_zero && counts[ai][ci][ti] == 0;
      }
      LinearFit fit = fit_line(cfg.T_grid, ys);
      std::vector<std::string> row = {"target", fmt_i(cfg.n), csv_num(cfg.c_list[ci]),
                                      fmt_i(static_cast<int64_t>(ai + 1))};
      if (fit.ok) {
        row.push_back(csv_num(fit.slope));
        row.push_back(csv_num(fit.intercept));
        row.push_back(csv_num(fit.r2));
        row.emplace_back();
        row.emplace_back(all_zero ? "flagged_zero" : "ok");
        if (!all_zero) slopes[ci].push_back(fit.slope);
      } else {
        row.emplace_back();
        row.emplace_back();
        row.emplace_back();
        row.emplace_back();
        row.emplace_back("flagged_undefined");
      }
      put_row(out, row);
    }
  }
  for (size_t ci = 0; ci < nc; ++ci) {
    std::vector<std::string> row = {"aggregate", fmt_i(cfg.n), csv_num(cfg.c_list[ci]), ""};
    if (slopes[ci].empty()) {
      row.emplace_back();
      row.emplace_back();
      row.emplace_back();
      row.emplace_back();
      row.emplace_back("flagged_undefined");
    } else {
      double m = mean_of(slopes[ci]);
      row.push_back(csv_num(m));
      row.emplace_back();
      row.emplace_back();
      row.push_back(m != 0.0 ? csv_num(sd_of(slopes[ci]) / std::fabs(m)) : std::string());
      row.emplace_back(slopes[ci].size() == targets.size() ? "ok" : "flagged_partial");
    }
    put_row(out, row);
  }
  return 0;
}

int cmd_spiral(const ExperimentConfig& cfg, const KeyValues& kv, std::ostream& out) {
  if (cfg.direction_sets.empty())
    throw ConfigError("spiral needs at least one direction set");
  if (cfg.T_grid.empty()) throw ConfigError("spiral needs a T grid");
  std::vector<std::string> cols = {"n",       "c",        "T",       "alpha_id", "set_id",
                                   "set",     "fraction", "measure", "counted",  "total_nonpolar"};
  write_meta(out, "spiral", cfg, kv, cols);

  std::vector<Vec> targets = experiment_targets(cfg);
  CountOptions opt = count_options(cfg);
  DirectionSet everything = DirectionSet::full(cfg.n);
  for (size_t ai = 0; ai < targets.size(); ++ai) {
    for (double c : cfg.c_list) {
      for (double T : cfg.T_grid) {
        Window w = make_window(T, c);
        int64_t total = count_N(targets[ai], w, cfg.lattice, &everything, opt).total;
        for (size_t si = 0; si < cfg.direction_sets.size(); ++si) {
          const DirectionSet& A = cfg.direction_sets[si];
          int64_t counted = count_N(targets[ai], w, cfg.lattice, &A, opt).total;
          std::vector<std::string> row = {fmt_i(cfg.n),
                                          csv_num(c),
                                          csv_num(T),
                                          fmt_i(static_cast<int64_t>(ai + 1)),
                                          fmt_i(static_cast<int64_t>(si + 1)),
                                          A.label(),
                                          total > 0 ? csv_num(static_cast<double>(counted) /
                                                              static_cast<double>(total))
                                                    : std::string(),
                                          csv_num(A.measure()),
                                          fmt_i(counted),
                                          fmt_i(total)};
          put_row(out, row);
        }
      }
    }
  }
  return 0;
}

int cmd_volume(const ExperimentConfig& cfg, const KeyValues& kv, std::ostream& out) {
  if (cfg.T_grid.empty()) throw ConfigError("volume needs a T grid");
  std::vector<std::string> cols = {"region", "n",      "c",      "T",    "A_kind",
                                   "value",  "stderr", "method", "seed"};
  write_meta(out, "volume", cfg, kv, cols);

  MeasureConfig mc;
  mc.kappa = cfg.kappa.value_or(1.0);
  mc.samples = cfg.samples;
  mc.seed = cfg.seed;
  mc.threads = cfg.threads;

  std::vector<const DirectionSet*> sets;
  if (cfg.direction_sets.empty()) sets.push_back(nullptr);
  for (const DirectionSet& A : cfg.direction_sets) sets.push_back(&A);

  auto emit = [&](const char* region, double c, double T, const DirectionSet* A,
                  const VolumeResult& res) {
    put_row(out, {region, fmt_i(cfg.n), csv_num(c), csv_num(T), set_label(A),
                  csv_num(res.value), csv_num(res.se), res.method, fmt_u(cfg.seed)});
  };
  for (double c : cfg.c_list) {
    for (double T : cfg.T_grid) {
      Window w = make_window(T, c);
      for (const DirectionSet* A : sets) {
        emit("F", c, T, A, volume_F(cfg.n, w, A, mc, false));
        emit("F", c, T, A, volume_F(cfg.n, w, A, mc, true));
        emit("E", c, T, A, volume_E(cfg.n, w, A, mc));
      }
    }
  }
  return 0;
}

int cmd_orbit(const ExperimentConfig& cfg, const KeyValues& kv, std::ostream& out) {
  if (cfg.T_grid.empty()) throw ConfigError("orbit needs a T grid");
  std::vector<std::string> cols = {"n",           "c",        "r",           "T",
                                   "lattice_desc", "A_kind",  "count_inner", "integral",
                                   "count_outer", "slope"};
  write_meta(out, "orbit", cfg, kv, cols);

  bool all_ok = true;
  std::string detail;
  for (double c : cfg.c_list) {
    for (double T : cfg.T_grid) {
      OrbitConfig oc;
      oc.r = cfg.r;
      oc.w = make_window(T, c);
      oc.lattice = cfg.lattice;
      if (const DirectionSet* A = first_set(cfg)) oc.A = *A;
      oc.threads = cfg.threads;
      OrbitChainReport rep = orbit_chain_check(oc);
      double slope = rep.integral_T / (cfg.r * T);
      if (!(rep.chain_flow_ok && rep.chain_count_ok)) {
        all_ok = false;
        detail = "chain inequalities violated at c=" + csv_num(c) + " T=" + csv_num(T);
      }
      if (cfg.steps > 0) {
        // Opt-in quadrature cross-check of the exact orbit integral.  The
        // integrand is a step function with two jumps per lattice point, so
        // the midpoint rule is off by at most ~2 npts dt in the worst case;
        // allow that plus the acceptance-grade relative tolerance.
        double quad = quadrature_orbit_integral(oc, cfg.steps);
        double dt = T / static_cast<double>(cfg.steps);
        double tol = 1e-3 * std::max(1.0, std::fabs(rep.integral_T)) +
                     2.0 * static_cast<double>(rep.count_F_T_plus_r + 1) * dt;
        if (std::fabs(quad - rep.integral_T) > tol) {
          all_ok = false;
          detail = "quadrature disagrees with the exact integral at c=" + csv_num(c) +
                   " T=" + csv_num(T);
        }
      }
      put_row(out, {fmt_i(cfg.n), csv_num(c), csv_num(cfg.r), csv_num(T), cfg.lattice.label,
                    set_label(first_set(cfg)), fmt_i(rep.count_shell_diff),
                    csv_num(rep.integral_T), fmt_i(rep.count_F_T_plus_r), csv_num(slope)});
    }
  }
  if (!all_ok) throw InvariantError("orbit: " + detail);
  return 0;
}

int cmd_calibrate(const ExperimentConfig& cfg, const KeyValues& kv, std::ostream& out) {
  if (cfg.T_grid.empty()) throw ConfigError("calibrate needs a T grid");
  if (cfg.alpha_count < 5) throw ConfigError("calibrate needs alpha_count >= 5");
  std::vector<std::string> cols = {"row_type", "n",         "c",      "T",          "targets",
                                   "seed",     "kappa_hat", "rel_sd", "cross_delta"};
  write_meta(out, "calibrate", cfg, kv, cols);

  double T = cfg.T_grid.back();
  MeasureConfig mc;
  mc.kappa = cfg.kappa.value_or(1.0);
  mc.samples = cfg.samples;
  mc.seed = cfg.seed;
  mc.threads = cfg.threads;

  std::vector<double> hats;
  for (double c : cfg.c_list) {
    CalibrationResult res = calibrate_kappa(cfg.n, cfg.alpha_count, make_window(T, c), mc);
    hats.push_back(res.kappa_hat);
    double rel = res.kappa_hat != 0.0 ? sd_of(res.per_target) / std::fabs(res.kappa_hat) : 0.0;
    put_row(out, {"c", fmt_i(cfg.n), csv_num(c), csv_num(T),
                  fmt_i(static_cast<int64_t>(res.per_target.size())), fmt_u(cfg.seed),
                  csv_num(res.kappa_hat), csv_num(rel), ""});
  }
  double m = mean_of(hats);
  double cross = 0.0;
  for (double h : hats) cross = std::max(cross, std::fabs(h - m));
  put_row(out, {"summary", fmt_i(cfg.n), "", csv_num(T),
                fmt_i(static_cast<int64_t>(cfg.alpha_count)), fmt_u(cfg.seed), csv_num(m), "",
                m != 0.0 ? csv_num(cross / std::fabs(m)) : ""});
  return 0;
}

int cmd_selftest(const ExperimentConfig& cfg, const KeyValues& kv, std::ostream& out) {
  std::vector<std::string> cols = {"check", "result", "detail"};
  write_meta(out, "selftest", cfg, kv, cols);
  int failures = 0;
  auto report = [&](const std::string& name, bool ok, const std::string& detail = "") {
    put_row(out, {name, ok ? "ok" : "FAIL", ok ? "" : detail});
    if (!ok) ++failures;
  };
  uint64_t seed = cfg.seed;

  {  // group laws: inverse, associativity-by-evaluation, Iwasawa round trip
    std::mt19937_64 rng = substream(seed, "selftest:group");
    bool ok = true;
    std::string detail;
    for (int n = 1; n <= 3 && ok; ++n) {
      Vec y = random_in_ball(n, 1.0, rng);
      std::uniform_real_distribution<double> ud(-1.0, 1.0);
      GroupElement g =
          make_u_y(y) * make_g_t(n, ud(rng)) * embed_K(random_rotation(n + 1, rng));
      Mat prod = (g * g.inverse()).matrix();
      double err = prod.max_abs_diff(Mat::identity(n + 2));
      if (err > 1e-9) {
        ok = false;
        detail = "g g^-1 off identity by " + csv_num(err);
      }
      IwasawaFactors f = iwasawa_decompose(g);
      GroupElement re = make_u_y(f.y) * make_g_t(n, f.t) * f.k;
      double rerr = re.matrix().max_abs_diff(g.matrix());
      if (rerr > 1e-8 * (1.0 + g.matrix().max_abs())) {
        ok = false;
        detail = "iwasawa rebuild off by " + csv_num(rerr);
      }
    }
    report("group_laws", ok, detail);
  }
  {  // flow scales the bracket by e^{-t}
    std::mt19937_64 rng = substream(seed, "selftest:flow");
    bool ok = true;
    std::string detail;
    for (int n = 1; n <= 3 && ok; ++n) {
      Vec sigma = random_unit_vector(n, rng);
      std::uniform_real_distribution<double> ud(0.1, 2.0);
      double s = ud(rng), axis = ud(rng) - 1.0;
      double h = std::sqrt(s * s + axis * axis);
      Vec x(n + 2);
      for (int i = 0; i < n; ++i) x[i] = s * sigma[i];
      x[n] = axis;
      x[n + 1] = h;
      double t = ud(rng);
      Vec moved = make_g_t(n, t).apply(x);
      double want = std::exp(-t) * bracket(x);
      if (std::fabs(bracket(moved) - want) > 1e-9 * (1.0 + std::fabs(want))) {
        ok = false;
        detail = "bracket scaling off at n=" + std::to_string(n);
      }
    }
    report("flow_bracket_scaling", ok, detail);
  }
  {  // distance identity |q a - p|^2 = 2q(q - <a,p>) on enumerated points
    std::mt19937_64 rng = substream(seed, "selftest:norm");
    Vec a = random_unit_vector(3, rng);
    bool ok = true;
    std::string detail;
    enumerate_all(2, 50, [&](const RationalApproximate& pt) {
      auto qd = static_cast<double>(pt.q);
      double d2 = 0.0, dot_ap = 0.0;
      for (size_t i = 0; i < pt.p.size(); ++i) {
        double diff = qd * a[i] - static_cast<double>(pt.p[i]);
        d2 += diff * diff;
        dot_ap += a[i] * static_cast<double>(pt.p[i]);
      }
      double rhs = 2.0 * qd * (qd - dot_ap);
      if (std::fabs(d2 - rhs) > 1e-7 * (1.0 + std::fabs(rhs))) {
        ok = false;
        detail = "mismatch at q=" + std::to_string(pt.q);
      }
    });
    report("distance_identity", ok, detail);
  }
  {  // localized scan vs exhaustive filter
    std::mt19937_64 rng = substream(seed, "selftest:enum");
    bool ok = true;
    std::string detail;
    for (int n = 1; n <= 2 && ok; ++n) {
      Vec a = random_unit_vector(n + 1, rng);
      double c = 0.8, T = 6.0;
      CountReport rep = count_N(a, make_window(T, c), LatticeDescriptor::integer_lattice(n));
      int64_t brute = 0;
      int64_t q_max = height_limit(T);
      enumerate_all(n, q_max, [&](const RationalApproximate& pt) {
        auto qd = static_cast<double>(pt.q);
        double d2 = 0.0;
        for (size_t i = 0; i < pt.p.size(); ++i) {
          double diff = qd * a[i] - static_cast<double>(pt.p[i]);
          d2 += diff * diff;
        }
        if (d2 < c * c) ++brute;
      });
      if (rep.total != brute) {
        ok = false;
        detail = "scan=" + std::to_string(rep.total) + " brute=" + std::to_string(brute);
      }
    }
    report("scan_vs_exhaustive", ok, detail);
  }
  {  // grid engine vs single counts
    std::mt19937_64 rng = substream(seed, "selftest:grid");
    Vec a = random_unit_vector(2, rng);
    std::vector<double> cs = {0.4, 0.9}, Ts = {3.0, 5.0, 7.0};
    GridResult gr = count_grid(a, cs, Ts);
    bool ok = true;
    std::string detail;
    for (size_t ci = 0; ci < cs.size() && ok; ++ci)
      for (size_t ti = 0; ti < Ts.size() && ok; ++ti) {
        CountReport rep =
            count_N(a, make_window(Ts[ti], cs[ci]), LatticeDescriptor::integer_lattice(1));
        if (rep.total != gr.cell(ci, ti).total) {
          ok = false;
          detail = "cell (" + std::to_string(ci) + "," + std::to_string(ti) + ")";
        }
      }
    report("grid_vs_single", ok, detail);
  }
  {  // region sandwich on every small point
    double c = 0.6, T = 5.0;
    SandwichConstants sc = SandwichConstants::make(c, 4);
    std::vector<RationalApproximate> pts =
        collect_all(2, static_cast<int64_t>(std::cosh(T + sc.r0)) + 2);
    SandwichOutcome res = sandwich_check(pts, T, sc);
    report("region_sandwich", res.violations.empty(),
           res.violations.empty() ? ""
                                  : std::to_string(res.violations.size()) + " violations");
  }
  {  // orbit chains and quadrature agreement
    OrbitConfig oc;
    oc.r = 0.8;
    oc.w = make_window(6.0, 0.7);
    oc.lattice = LatticeDescriptor::integer_lattice(2);
    OrbitChainReport rep = orbit_chain_check(oc);
    double exact = exact_orbit_integral(oc);
    double quad = quadrature_orbit_integral(oc, 100000);
    bool ok = rep.chain_flow_ok && rep.chain_count_ok &&
              std::fabs(exact - quad) <= 1e-3 * std::max(1.0, std::fabs(exact));
    report("orbit_chains", ok,
           ok ? "" : "exact=" + csv_num(exact) + " quad=" + csv_num(quad));
  }
  {  // direction partition: hemisphere counts + complement = all non-polar
    std::mt19937_64 rng = substream(seed, "selftest:dir");
    Vec a = random_unit_vector(3, rng);
    Window w = make_window(6.0, 0.9);
    LatticeDescriptor lat = LatticeDescriptor::integer_lattice(2);
    DirectionSet whole = DirectionSet::full(2);
    DirectionSet hemi = DirectionSet::hemisphere({1.0, 0.0});
    DirectionSet comp = DirectionSet::complement(hemi);
    int64_t all = count_N(a, w, lat, &whole).total;
    int64_t lo = count_N(a, w, lat, &hemi).total;
    int64_t hi = count_N(a, w, lat, &comp).total;
    report("direction_partition", lo + hi == all,
           "hemi=" + std::to_string(lo) + " comp=" + std::to_string(hi) +
               " all=" + std::to_string(all));
  }
  {  // closed-form F volume vs generic chart MC (strictly larger box)
    Window w = make_window(2.0, 0.8);
    MeasureConfig mc;
    mc.samples = 200000;
    mc.seed = seed;
    VolumeResult closed = volume_F(2, w, nullptr, mc, false);
    ChartBox box{1.1, 0.5, 1.6 * std::exp(2.0)};
    VolumeResult generic = region_mass(
        2, box,
        [&](std::span<const double> x) {
          double s = std::hypot(x[0], x[1]);
          return s < 0.8 && x[3] + x[2] >= 1.0 && x[3] + x[2] < std::exp(2.0);
        },
        mc.samples, mc.seed);
    double diff = std::fabs(closed.value - generic.value);
    report("volume_closed_vs_mc", diff <= 5.0 * std::max(generic.se, 1e-12),
           "closed=" + csv_num(closed.value) + " mc=" + csv_num(generic.value) +
               " se=" + csv_num(generic.se));
  }
  if (failures > 0) throw InvariantError(std::to_string(failures) + " selftest checks failed");
  return 0;
}

int run_command(const std::string& command, const KeyValues& kv, std::ostream& err) {
  try {
    ExperimentConfig cfg = make_experiment_config(kv);
    std::ofstream file;
    std::ostream* out = &std::cout;
    if (!cfg.output_path.empty()) {
      file.open(cfg.output_path, std::ios::binary);
      if (!file) throw ConfigError("cannot open output file: " + cfg.output_path);
      out = &file;
    }
    int code = 0;
    try {
      if (command == "count") code = cmd_count(cfg, kv, *out);
      else if (command == "sweep") code = cmd_sweep(cfg, kv, *out);
      else if (command == "spiral") code = cmd_spiral(cfg, kv, *out);
      else if (command == "volume") code = cmd_volume(cfg, kv, *out);
      else if (command == "orbit") code = cmd_orbit(cfg, kv, *out);
      else if (command == "calibrate") code = cmd_calibrate(cfg, kv, *out);
      else if (command == "selftest") code = cmd_selftest(cfg, kv, *out);
      else throw ConfigError("unknown command: " + command);
    } catch (...) {
      out->flush();
      throw;
    }
    out->flush();
    if (file.is_open() && !file.good())
      throw ConfigError("write failed: " + cfg.output_path);
    return code;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const InvariantError& e) {
    err << "invariant violation: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::range_error& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace conecount::harness
