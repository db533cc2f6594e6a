#pragma once

// Experiment runner behind the corrmem CLI.
//
// One JSON config describes one experiment. run() validates it, executes the
// requested kind, writes CSV data files plus summary.json into the output
// directory and returns the process exit code.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "corrmem/adversarial.hpp"
#include "corrmem/bounds.hpp"
#include "corrmem/code_memory.hpp"
#include "corrmem/csv.hpp"
#include "corrmem/errors.hpp"
#include "corrmem/field_model.hpp"
#include "corrmem/hidden_channel.hpp"
#include "corrmem/parallel.hpp"
#include "corrmem/rng.hpp"
#include "corrmem/stats.hpp"

#ifndef CORRMEM_VERSION
#define CORRMEM_VERSION "0.0.0"
#endif

namespace corrmem::harness {

using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitResource = 3;
inline constexpr int kExitViolation = 4;

enum class Kind { mixing, covariance, adversarial_scan, retention, tails, scaling, verify_all };

inline constexpr std::pair<Kind, const char*> kKindNames[] = {
    {Kind::mixing, "mixing"},     {Kind::covariance, "covariance"},
    {Kind::adversarial_scan, "adversarial-scan"}, {Kind::retention, "retention"},
    {Kind::tails, "tails"},       {Kind::scaling, "scaling"},
    {Kind::verify_all, "verify-all"},
};

inline const char* to_string(Kind k) {
  for (const auto& [kind, name] : kKindNames)
    if (kind == k) return name;
  return "?";
}

inline std::optional<Kind> parse_kind(std::string_view s) {
  for (const auto& [kind, name] : kKindNames)
    if (s == name) return kind;
  return std::nullopt;
}

/// A config problem, prefixed with the JSON path of the offending field.
class ConfigError : public ValidationError {
 public:
  ConfigError(const std::string& path, const std::string& what)
      : ValidationError("config: " + (path.empty() ? std::string("<root>") : path) + ": " + what) {}
};

inline std::string join_path(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}
inline std::string join_path(const std::string& path, std::size_t index) {
  return path + "[" + std::to_string(index) + "]";
}

/// Typed access to the config tree. Every default that gets applied is
/// recorded so the summary lists it next to the raw config.
class Reader {
 public:
  json defaults = json::object();

  static const json* find(const json& obj, const std::string& key) {
    const auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
  }

  static const json& object(const json& j, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path, "expected an object");
    return j;
  }

  static void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
    for (const auto& item : obj.items()) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || item.key() == a;
      if (!ok) throw ConfigError(join_path(path, item.key()), "unknown field");
    }
  }

  static const json& need(const json& obj, const std::string& path, const std::string& key) {
    const json* v = find(obj, key);
    if (!v) throw ConfigError(join_path(path, key), "missing required field");
    return *v;
  }

  static double number(const json& j, const std::string& path) {
    if (!j.is_number()) throw ConfigError(path, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) throw ConfigError(path, "must be finite");
    return v;
  }

  static std::uint64_t count(const json& j, const std::string& path) {
    if (j.is_number_unsigned()) return j.get<std::uint64_t>();
    if (j.is_number_integer()) {
      if (j.get<std::int64_t>() < 0) throw ConfigError(path, "must be >= 0");
      return static_cast<std::uint64_t>(j.get<std::int64_t>());
    }
    throw ConfigError(path, "expected a non-negative integer");
  }

  static std::string text(const json& j, const std::string& path) {
    if (!j.is_string()) throw ConfigError(path, "expected a string");
    return j.get<std::string>();
  }

  static std::vector<double> numbers(const json& j, const std::string& path, bool allow_empty = false) {
    if (!j.is_array()) throw ConfigError(path, "expected a list of numbers");
    if (j.empty() && !allow_empty) throw ConfigError(path, "list must not be empty");
    std::vector<double> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], join_path(path, i)));
    return out;
  }

  static std::vector<std::uint64_t> counts(const json& j, const std::string& path) {
    if (!j.is_array()) throw ConfigError(path, "expected a list of integers");
    if (j.empty()) throw ConfigError(path, "list must not be empty");
    std::vector<std::uint64_t> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(count(j[i], join_path(path, i)));
    return out;
  }

  static std::vector<std::vector<double>> matrix(const json& j, const std::string& path) {
    if (!j.is_array() || j.empty()) throw ConfigError(path, "expected a non-empty list of rows");
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(numbers(j[i], join_path(path, i)));
    return out;
  }

  std::uint64_t count_or(const json& obj, const std::string& path, const std::string& key, std::uint64_t dflt) {
    if (const json* v = find(obj, key)) return count(*v, join_path(path, key));
    defaults[join_path(path, key)] = dflt;
    return dflt;
  }

  std::string text_or(const json& obj, const std::string& path, const std::string& key, const std::string& dflt) {
    if (const json* v = find(obj, key)) return text(*v, join_path(path, key));
    defaults[join_path(path, key)] = dflt;
    return dflt;
  }
};

/// Records every stream seed handed to the library.
class SeedTree {
 public:
  explicit SeedTree(std::uint64_t master) : master_(master) {}

  std::uint64_t stream(const std::string& label, std::uint64_t index) {
    const std::uint64_t s = derive_seed(master_, label, index);
    streams_.push_back({{"label", label}, {"index", index}, {"seed", s}});
    return s;
  }

  std::uint64_t master() const { return master_; }

  json to_json() const {
    return {{"master", master_},
            {"rule", "stream = derive_seed(master, label, index); trial t of a stream uses "
                     "derive_seed(stream, trial_label, t)"},
            {"streams", streams_}};
  }

 private:
  std::uint64_t master_;
  json streams_ = json::array();
};

// ---- model blocks -------------------------------------------------------

inline Kernel parse_kernel(const json& j, const std::string& path, std::size_t states) {
  const auto rows = Reader::matrix(j, path);
  if (rows.size() != states)
    throw ConfigError(path, "kernel has " + std::to_string(rows.size()) + " rows, alphabet size is " +
                                std::to_string(states));
  std::vector<double> flat;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != states)
      throw ConfigError(join_path(path, r), "row has " + std::to_string(rows[r].size()) + " entries, expected " +
                                                std::to_string(states));
    flat.insert(flat.end(), rows[r].begin(), rows[r].end());
  }
  return {states, std::move(flat)};
}

/// With n_override the size comes from the caller (scaling grids) and the
/// block must not pin per-bond data.
inline MarkovFieldSpec parse_field(const json& j, const std::string& path,
                                   std::optional<std::size_t> n_override = std::nullopt) {
  Reader::object(j, path);
  Reader::check_keys(j, path, {"n", "alphabet", "initial", "kernel", "kernels", "iid"});
  std::size_t n = 0;
  if (n_override) {
    if (Reader::find(j, "n")) throw ConfigError(join_path(path, "n"), "must be omitted; sizes come from grid.n");
    if (Reader::find(j, "kernels"))
      throw ConfigError(join_path(path, "kernels"), "per-bond kernels cannot be resized; use 'kernel' or 'iid'");
    n = *n_override;
  } else {
    n = Reader::count(Reader::need(j, path, "n"), join_path(path, "n"));
  }
  if (n < 1) throw ConfigError(join_path(path, "n"), "must be >= 1");

  MarkovFieldSpec spec;
  if (const json* iid = Reader::find(j, "iid")) {
    for (const char* k : {"initial", "kernel", "kernels"})
      if (Reader::find(j, k)) throw ConfigError(join_path(path, k), "not allowed together with 'iid'");
    spec = MarkovFieldSpec::iid(n, Reader::numbers(*iid, join_path(path, "iid")));
  } else {
    const auto initial = Reader::numbers(Reader::need(j, path, "initial"), join_path(path, "initial"));
    const std::size_t states = initial.size();
    const json* one = Reader::find(j, "kernel");
    const json* many = Reader::find(j, "kernels");
    if (!one == !many) throw ConfigError(path, "give exactly one of 'kernel' or 'kernels'");
    if (one) {
      spec = MarkovFieldSpec::homogeneous(n, initial, parse_kernel(*one, join_path(path, "kernel"), states));
    } else {
      const std::string kp = join_path(path, "kernels");
      if (!many->is_array()) throw ConfigError(kp, "expected a list of kernels");
      if (many->size() != n - 1)
        throw ConfigError(kp, "expected n-1 = " + std::to_string(n - 1) + " kernels, got " +
                                  std::to_string(many->size()));
      spec = MarkovFieldSpec{n, states, initial, {}};
      for (std::size_t i = 0; i < many->size(); ++i)
        spec.kernels.push_back(parse_kernel((*many)[i], join_path(kp, i), states));
    }
  }
  if (const json* a = Reader::find(j, "alphabet")) {
    if (Reader::count(*a, join_path(path, "alphabet")) != spec.alphabet)
      throw ConfigError(join_path(path, "alphabet"), "does not match the length of the initial law");
  }
  try {
    spec.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(path, e.what());
  }
  return spec;
}

inline std::vector<std::vector<double>> per_site_tables(const json& j, const std::string& path, std::size_t n,
                                                        bool resizable) {
  const json* one = Reader::find(j, "table");
  const json* many = Reader::find(j, "tables");
  if (!one == !many) throw ConfigError(path, "give exactly one of 'table' or 'tables'");
  if (one) return std::vector<std::vector<double>>(n, Reader::numbers(*one, join_path(path, "table")));
  if (resizable) throw ConfigError(join_path(path, "tables"), "per-site tables cannot be resized; use 'table'");
  const auto rows = Reader::matrix(*many, join_path(path, "tables"));
  if (rows.size() != n)
    throw ConfigError(join_path(path, "tables"), "expected " + std::to_string(n) + " tables, got " +
                                                     std::to_string(rows.size()));
  return rows;
}

inline ConditionalChannelSpec parse_channel(const json& j, const std::string& path, std::size_t n, bool resizable) {
  Reader::object(j, path);
  const std::string type = Reader::text(Reader::need(j, path, "type"), join_path(path, "type"));
  if (type == "per_site") {
    Reader::check_keys(j, path, {"type", "table", "tables"});
    return PerSiteChannel{per_site_tables(j, path, n, resizable)};
  }
  if (type == "window") {
    Reader::check_keys(j, path, {"type", "radius", "table", "tables"});
    const auto radius = Reader::count(Reader::need(j, path, "radius"), join_path(path, "radius"));
    return WindowChannel{static_cast<std::size_t>(radius), per_site_tables(j, path, n, resizable)};
  }
  if (type == "global_threshold") {
    Reader::check_keys(j, path, {"type", "threshold"});
    return GlobalThresholdChannel{Reader::number(Reader::need(j, path, "threshold"), join_path(path, "threshold"))};
  }
  throw ConfigError(join_path(path, "type"), "unknown channel type '" + type +
                                                 "' (per_site, window, global_threshold)");
}

inline HiddenErrorModel parse_hidden_model(const json& j, const std::string& path,
                                           std::optional<std::size_t> n_override = std::nullopt) {
  Reader::object(j, path);
  Reader::check_keys(j, path, {"field", "channel"});
  HiddenErrorModel model;
  model.field = parse_field(Reader::need(j, path, "field"), join_path(path, "field"), n_override);
  model.channel = parse_channel(Reader::need(j, path, "channel"), join_path(path, "channel"), model.field.n,
                                n_override.has_value());
  try {
    model.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(path, e.what());
  }
  return model;
}

inline ThresholdModelSpec parse_threshold(const json& j, const std::string& path,
                                          std::optional<std::size_t> n_override = std::nullopt) {
  Reader::object(j, path);
  Reader::check_keys(j, path, {"n", "eps", "cn", "a", "b_n"});
  ThresholdModelSpec spec;
  if (n_override) {
    if (Reader::find(j, "n")) throw ConfigError(join_path(path, "n"), "must be omitted; sizes come from grid.n");
    spec.n = *n_override;
  } else {
    spec.n = Reader::count(Reader::need(j, path, "n"), join_path(path, "n"));
  }
  spec.eps = Reader::number(Reader::need(j, path, "eps"), join_path(path, "eps"));
  int schedules = 0;
  if (const json* v = Reader::find(j, "cn")) {
    spec.schedule = ExplicitCn{Reader::number(*v, join_path(path, "cn"))};
    ++schedules;
  }
  if (const json* v = Reader::find(j, "a")) {
    spec.schedule = ParametricCn{Reader::number(*v, join_path(path, "a"))};
    ++schedules;
  }
  if (const json* v = Reader::find(j, "b_n")) {
    spec.schedule = ExplicitThreshold{Reader::number(*v, join_path(path, "b_n"))};
    ++schedules;
  }
  if (schedules != 1) throw ConfigError(path, "give exactly one of 'cn', 'a' or 'b_n'");
  try {
    spec.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(path, e.what());
  }
  return spec;
}

/// The error source of a config object: exactly one of "model" or "threshold".
inline ErrorSource parse_source(const json& obj, const std::string& path,
                                std::optional<std::size_t> n_override = std::nullopt) {
  const json* model = Reader::find(obj, "model");
  const json* threshold = Reader::find(obj, "threshold");
  if (model && threshold) throw ConfigError(path, "give only one of 'model' or 'threshold'");
  if (model) return parse_hidden_model(*model, join_path(path, "model"), n_override);
  if (threshold) return parse_threshold(*threshold, join_path(path, "threshold"), n_override);
  throw ConfigError(join_path(path, "model"), "missing required field (or give 'threshold')");
}

inline DecodingMode parse_mode(const std::string& s, const std::string& path) {
  if (s == "half_distance") return DecodingMode::half_distance;
  if (s == "paper_distance") return DecodingMode::paper_distance;
  if (s == "explicit_tau") return DecodingMode::explicit_tau;
  throw ConfigError(path, "unknown decoding mode '" + s + "' (half_distance, paper_distance, explicit_tau)");
}

inline const char* to_string(DecodingMode m) {
  switch (m) {
    case DecodingMode::half_distance: return "half_distance";
    case DecodingMode::paper_distance: return "paper_distance";
    default: return "explicit_tau";
  }
}

inline CodeModel parse_code(Reader& rd, const json& j, const std::string& path, std::size_t n) {
  Reader::object(j, path);
  Reader::check_keys(j, path, {"k", "d", "tau", "mode"});
  const auto k = rd.count_or(j, path, "k", 1);
  const auto d = Reader::count(Reader::need(j, path, "d"), join_path(path, "d"));
  const DecodingMode mode = parse_mode(rd.text_or(j, path, "mode", "half_distance"), join_path(path, "mode"));
  const json* tau = Reader::find(j, "tau");
  try {
    if (mode == DecodingMode::explicit_tau) {
      if (!tau) throw ConfigError(join_path(path, "tau"), "required when mode is explicit_tau");
      return CodeModel::with_tau(n, k, d, Reader::count(*tau, join_path(path, "tau")));
    }
    if (tau) throw ConfigError(join_path(path, "tau"), "only allowed when mode is explicit_tau");
    return CodeModel::from_distance(n, k, d, mode);
  } catch (const ConfigError&) {
    throw;
  } catch (const ValidationError& e) {
    throw ConfigError(path, e.what());
  }
}

inline BoundInputs parse_bound_inputs(const json* j, const std::string& path) {
  BoundInputs in;
  if (!j) return in;
  Reader::object(*j, path);
  Reader::check_keys(*j, path, {"eps", "lipschitz", "m_n"});
  if (const json* v = Reader::find(*j, "eps")) in.eps = Reader::number(*v, join_path(path, "eps"));
  if (const json* v = Reader::find(*j, "lipschitz")) in.lipschitz = Reader::number(*v, join_path(path, "lipschitz"));
  if (const json* v = Reader::find(*j, "m_n")) in.m_n = Reader::number(*v, join_path(path, "m_n"));
  return in;
}

// ---- run ---------------------------------------------------------------

struct RunRequest {
  std::string kind;
  std::filesystem::path config;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;  // 0 = hardware concurrency
};

struct Experiment {
  Kind kind;
  json config;
  Reader reader;
  SeedTree seeds;
  Workers workers;
  std::filesystem::path out_dir;
  json outputs = json::array();
  json results = json::object();
  bool violation = false;

  std::ofstream open(const std::string& name) {
    std::ofstream os(out_dir / name, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + (out_dir / name).string());
    outputs.push_back(name);
    return os;
  }

  const json& budget() const {
    static const json empty = json::object();
    const json* b = Reader::find(config, "budget");
    return b ? Reader::object(*b, "budget") : empty;
  }

  const json& grid() const {
    return Reader::object(Reader::need(config, "", "grid"), "grid");
  }
};

inline json fit_to_json(const LinearFit& f) {
  return {{"slope", f.slope}, {"intercept", f.intercept}, {"r_squared", f.r_squared}, {"points", f.points}};
}

inline void check_budget_keys(const Experiment& ex) {
  Reader::check_keys(ex.budget(), "budget", {"trials", "max_epochs", "min_failures"});
}

inline void run_mixing(Experiment& ex) {
  const json& model = Reader::object(Reader::need(ex.config, "", "model"), "model");
  Reader::check_keys(model, "model", {"field", "channel"});
  const MarkovFieldSpec field = parse_field(Reader::need(model, "model", "field"), "model.field");
  const MixingProfile prof = mixing_profile(field);
  {
    auto os = ex.open("mixing.csv");
    csv::Writer w(os, {"bond", "theta"});
    for (std::size_t i = 0; i < prof.theta.size(); ++i) w.row(i, prof.theta[i]);
  }
  ex.results["m_n"] = prof.m_n;
  if (field.alphabet != 2) {
    ex.results["decay"] = "skipped: correlation decay is reported for binary fields only";
    return;
  }
  std::vector<std::uint64_t> sites{0};
  if (const json* g = Reader::find(ex.config, "grid")) {
    Reader::check_keys(Reader::object(*g, "grid"), "grid", {"sites"});
    if (const json* s = Reader::find(*g, "sites")) sites = Reader::counts(*s, "grid.sites");
  } else {
    ex.reader.defaults["grid.sites"] = sites;
  }
  auto os = ex.open("decay.csv");
  csv::Writer w(os, {"site", "k", "decay", "theta_product"});
  for (std::size_t gi = 0; gi < sites.size(); ++gi) {
    if (sites[gi] >= field.n) throw ConfigError(join_path("grid.sites", gi), "site out of range");
    const auto site = static_cast<std::size_t>(sites[gi]);
    const auto decay = correlation_decay_profile(field, site);
    double prod = 1.0;
    for (std::size_t off = 0; off < decay.size(); ++off) {
      prod *= prof.theta[site + off];
      w.row(site, site + off + 1, decay[off], prod);
    }
  }
}

inline void run_covariance(Experiment& ex) {
  check_budget_keys(ex);
  const ErrorSource src = parse_source(ex.config, "");
  const HiddenErrorModel model = std::holds_alternative<HiddenErrorModel>(src)
                                     ? std::get<HiddenErrorModel>(src)
                                     : as_hidden_model(std::get<ThresholdModelSpec>(src));
  const std::uint64_t trials = ex.reader.count_or(ex.budget(), "budget", "trials", 0);
  const CovarianceMode mode = trials == 0 ? CovarianceMode::exact : CovarianceMode::monte_carlo;
  const std::uint64_t seed = mode == CovarianceMode::exact ? 0 : ex.seeds.stream("covariance", 0);
  const CovarianceMatrix m = covariance_matrix(model, mode, trials, seed, ex.workers);
  auto os = ex.open("covariance.csv");
  csv::Writer w(os, {"i", "j", "cov", "stderr"});
  for (std::size_t i = 0; i < m.n; ++i)
    for (std::size_t j = 0; j < m.n; ++j) w.row(i, j, m.at(i, j), m.se(i, j));
  ex.results["mode"] = m.exact ? "exact" : "monte_carlo";
  ex.results["trials"] = m.trials;
}

inline void run_adversarial_scan(Experiment& ex) {
  const json& grid = ex.grid();
  Reader::check_keys(grid, "grid", {"n", "a", "eps"});
  std::vector<double> eps_list;
  if (const json* e = Reader::find(grid, "eps")) {
    eps_list = Reader::numbers(*e, "grid.eps");
  } else {
    const json& t = Reader::object(Reader::need(ex.config, "", "threshold"), "threshold");
    Reader::check_keys(t, "threshold", {"eps"});
    eps_list = {Reader::number(Reader::need(t, "threshold", "eps"), "threshold.eps")};
  }
  const auto ns = Reader::counts(Reader::need(grid, "grid", "n"), "grid.n");
  const auto as = Reader::numbers(Reader::need(grid, "grid", "a"), "grid.a");
  for (std::size_t i = 0; i < ns.size(); ++i)
    if (ns[i] < 2) throw ConfigError(join_path("grid.n", i), "must be >= 2");

  auto os = ex.open("adversarial.csv");
  csv::Writer w(os, {"n", "eps", "a", "C_n", "B_n", "P_A", "cov12", "retention_bound"});
  json fits = json::array();
  for (double eps : eps_list) {
    for (double a : as) {
      std::vector<double> logn, logcov;
      bool all_positive = true;
      for (auto n : ns) {
        ThresholdModelSpec spec = ThresholdModelSpec::parametric(n, eps, a);
        try {
          spec.validate();
        } catch (const ValidationError& e) {
          throw ConfigError("grid", e.what());
        }
        const SignedLog cov = log_covariance(spec);
        w.row(n, eps, a, spec.c_n(), spec.b_n(), prob_A(spec), cov.value(), retention_upper_bound(spec));
        all_positive = all_positive && cov.sign > 0;
        logn.push_back(std::log(static_cast<double>(n)));
        logcov.push_back(cov.log_abs);
      }
      json f = {{"eps", eps}, {"a", a}, {"log_cov", logcov}};
      if (all_positive && ns.size() >= 2) {
        try {
          f["log_cov_vs_log_n"] = fit_to_json(least_squares(logn, logcov));
        } catch (const ValidationError&) {
          f["log_cov_vs_log_n"] = nullptr;
        }
      }
      fits.push_back(std::move(f));
    }
  }
  ex.results["fits"] = std::move(fits);
}

inline void run_retention(Experiment& ex) {
  check_budget_keys(ex);
  const ErrorSource src = parse_source(ex.config, "");
  const CodeModel code = parse_code(ex.reader, Reader::need(ex.config, "", "code"), "code", source_sites(src));
  const auto trials = Reader::count(Reader::need(ex.budget(), "budget", "trials"), "budget.trials");
  const auto max_epochs = Reader::count(Reader::need(ex.budget(), "budget", "max_epochs"), "budget.max_epochs");
  if (trials == 0) throw ConfigError("budget.trials", "must be >= 1");
  if (max_epochs == 0) throw ConfigError("budget.max_epochs", "must be >= 1");
  const RetentionEstimate est =
      simulate_retention(src, code, max_epochs, trials, ex.seeds.stream("retention", 0), ex.workers);
  {
    auto os = ex.open("retention.csv");
    csv::Writer w(os, {"trial", "failure_epoch", "censored"});
    for (std::size_t t = 0; t < est.trials; ++t) w.row(t, est.failure_epochs[t], unsigned{est.censored[t]});
  }
  json& r = ex.results;
  r["tau"] = code.tau;
  r["censored"] = est.censored_count;
  r["mean"] = std::isnan(est.mean) ? json(nullptr) : json(est.mean);
  r["standard_error"] = std::isnan(est.standard_error) ? json(nullptr) : json(est.standard_error);
  r["restricted_mean"] = est.restricted_mean();
  if (const auto* t = std::get_if<ThresholdModelSpec>(&src)) {
    r["p_a"] = prob_A(*t);
    r["retention_upper_bound"] = retention_upper_bound(*t);
  }
  try {
    const double p = per_epoch_failure_prob_exact(src, code).value;
    r["per_epoch_failure_prob"] = p;
    if (p > 0.0 && est.censored_count == 0) {
      const double d = ks_statistic_geometric(est.failure_epochs, p);
      const double crit = ks_critical_value(est.failure_epochs.size(), 0.01);
      r["ks"] = {{"statistic", d}, {"critical_value_1pct", crit}, {"pass", d <= crit}};
    }
  } catch (const ResourceLimitError&) {
    r["per_epoch_failure_prob"] = "not enumerable";
  }
}

inline void write_tail_row(csv::Writer& w, const TailReport& t) {
  w.row(t.model_id, t.n, t.eps, t.delta, t.c, t.m_n, t.empirical.estimate, t.empirical.ci.lo, t.empirical.ci.hi,
        t.bound, to_string(t.verdict));
}

inline json tail_to_json(const TailReport& t) {
  return {{"model_id", t.model_id}, {"delta", t.delta},     {"threshold", t.threshold},
          {"kr_exponent_constant", t.kr_exponent_constant}, {"hits", t.empirical.hits},
          {"trials", t.empirical.trials}, {"exact", t.empirical.exact}, {"verdict", to_string(t.verdict)},
          {"vacuous", t.vacuous}};
}

inline const std::vector<std::string> kTailHeader = {"model_id", "n",     "eps",   "delta", "c",      "m_n",
                                                     "empirical", "ci_lo", "ci_hi", "bound", "verdict"};

/// One tails entry: a source, a delta grid and optional bound overrides.
/// `stream` is the first stream index; returns the next free one.
inline std::uint64_t run_tail_entry(Experiment& ex, const json& entry, const std::string& path,
                                    const std::string& id, std::uint64_t trials, std::uint64_t stream,
                                    csv::Writer& w, json& rows) {
  const ErrorSource src = parse_source(entry, path);
  const auto deltas = Reader::numbers(Reader::need(entry, path, "delta"), join_path(path, "delta"));
  const BoundInputs in = parse_bound_inputs(Reader::find(entry, "bounds"), join_path(path, "bounds"));
  for (std::size_t i = 0; i < deltas.size(); ++i)
    if (!(deltas[i] > 0.0)) throw ConfigError(join_path(join_path(path, "delta"), i), "must be > 0");
  for (double delta : deltas) {
    const std::uint64_t seed = trials == 0 ? 0 : ex.seeds.stream("tails", stream);
    ++stream;
    const TailReport t = verify_bound(src, delta, in, trials, seed, ex.workers, id);
    write_tail_row(w, t);
    rows.push_back(tail_to_json(t));
    ex.violation = ex.violation || t.verdict == Verdict::violated;
  }
  return stream;
}

inline std::uint64_t tail_trials(Experiment& ex) {
  const std::uint64_t trials = ex.reader.count_or(ex.budget(), "budget", "trials", 0);
  if (trials != 0 && trials < kMinTailTrials) throw ConfigError("budget.trials", "must be 0 (exact) or >= 1000");
  return trials;
}

inline void run_tails(Experiment& ex) {
  check_budget_keys(ex);
  const std::uint64_t trials = tail_trials(ex);
  const json& grid = ex.grid();
  Reader::check_keys(grid, "grid", {"delta"});
  json entry = {{"delta", Reader::need(grid, "grid", "delta")}};
  for (const char* k : {"model", "threshold", "bounds"})
    if (const json* v = Reader::find(ex.config, k)) entry[k] = *v;
  const std::string id = ex.reader.text_or(ex.config, "", "id", "model");
  auto os = ex.open("tails.csv");
  csv::Writer w(os, kTailHeader);
  json rows = json::array();
  run_tail_entry(ex, entry, "", id, trials, 0, w, rows);
  ex.results["rows"] = std::move(rows);
  ex.results["violations"] = ex.violation;
}

inline void run_verify_all(Experiment& ex) {
  check_budget_keys(ex);
  const std::uint64_t trials = tail_trials(ex);
  const json& suite = Reader::need(ex.config, "", "suite");
  if (!suite.is_array() || suite.empty()) throw ConfigError("suite", "expected a non-empty list of models");
  auto os = ex.open("tails.csv");
  csv::Writer w(os, kTailHeader);
  json rows = json::array();
  std::uint64_t stream = 0;
  std::size_t violated = 0;
  for (std::size_t i = 0; i < suite.size(); ++i) {
    const std::string path = join_path("suite", i);
    const json& entry = Reader::object(suite[i], path);
    Reader::check_keys(entry, path, {"id", "model", "threshold", "delta", "bounds"});
    const std::string id = Reader::text(Reader::need(entry, path, "id"), join_path(path, "id"));
    const bool before = ex.violation;
    ex.violation = false;
    stream = run_tail_entry(ex, entry, path, id, trials, stream, w, rows);
    if (ex.violation) ++violated;
    ex.violation = ex.violation || before;
  }
  ex.results["rows"] = std::move(rows);
  ex.results["models_with_violations"] = violated;
}

inline void run_scaling(Experiment& ex) {
  check_budget_keys(ex);
  const json& grid = ex.grid();
  Reader::check_keys(grid, "grid", {"n"});
  const auto ns = Reader::counts(Reader::need(grid, "grid", "n"), "grid.n");
  const json& code = Reader::object(Reader::need(ex.config, "", "code"), "code");
  Reader::check_keys(code, "code", {"b", "mode"});
  ScalingConfig cfg;
  for (auto n : ns) cfg.sizes.push_back(static_cast<std::size_t>(n));
  cfg.b = Reader::number(Reader::need(code, "code", "b"), "code.b");
  cfg.mode = parse_mode(ex.reader.text_or(code, "code", "mode", "half_distance"), "code.mode");
  cfg.trials = ex.reader.count_or(ex.budget(), "budget", "trials", 0);
  cfg.min_failures = ex.reader.count_or(ex.budget(), "budget", "min_failures", 10);
  cfg.seed = cfg.trials == 0 ? 0 : ex.seeds.stream("scaling", 0);
  cfg.workers = ex.workers;
  const json& config = ex.config;
  const ScalingReport rep = scaling_experiment(
      [&config](std::size_t n) { return parse_source(config, "", n); }, cfg);
  {
    auto os = ex.open("scaling.csv");
    csv::Writer w(os, {"n", "b", "trials", "failures", "p_fail", "ci_lo", "ci_hi"});
    for (const auto& r : rep.rows) w.row(r.n, cfg.b, r.trials, r.failures, r.p_fail, r.ci.lo, r.ci.hi);
  }
  json rows = json::array();
  for (const auto& r : rep.rows) {
    const LifetimeBound lb = lifetime_lower_bound(r.n, cfg.b);
    rows.push_back({{"n", r.n},
                    {"d", r.d},
                    {"tau", r.tau},
                    {"resolved", r.resolved},
                    {"lifetime_lower_bound", lb.epochs},
                    {"lifetime_degenerate", lb.degenerate}});
  }
  ex.results["rows"] = std::move(rows);
  ex.results["fit_log_p_vs_n"] = rep.fit ? fit_to_json(*rep.fit) : json(nullptr);
  ex.results["status"] = to_string(rep.status);
}

inline json read_config(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("", "cannot open config file '" + path.string() + "'");
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("malformed JSON in '") + path.string() + "': " + e.what());
  }
}

/// Executes one experiment and returns the exit code. Diagnostics go to `log`.
inline int run(const RunRequest& req, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  try {
    const auto kind = parse_kind(req.kind);
    if (!kind) throw ConfigError("kind", "unknown experiment kind '" + req.kind + "'");
    json config = read_config(req.config);
    Reader::object(config, "");
    Reader::check_keys(config, "", {"kind", "description", "seed", "id", "output", "model", "threshold", "code",
                                    "grid", "budget", "bounds", "suite"});
    if (const json* k = Reader::find(config, "kind")) {
      if (Reader::text(*k, "kind") != req.kind)
        throw ConfigError("kind", "config is for '" + k->get<std::string>() + "', not '" + req.kind + "'");
    }
    Reader reader;
    std::uint64_t master = 0;
    if (req.seed) {
      master = *req.seed;
    } else {
      master = reader.count_or(config, "", "seed", 0);
    }
    std::filesystem::path out_dir;
    if (req.out) {
      out_dir = *req.out;
    } else if (const json* o = Reader::find(config, "output")) {
      Reader::object(*o, "output");
      Reader::check_keys(*o, "output", {"dir"});
      out_dir = Reader::text(Reader::need(*o, "output", "dir"), "output.dir");
    } else {
      out_dir = "corrmem-out";
      reader.defaults["output.dir"] = out_dir.string();
    }
    std::filesystem::create_directories(out_dir);

    Experiment ex{*kind, config, std::move(reader), SeedTree(master), Workers{req.threads}, out_dir};
    switch (*kind) {
      case Kind::mixing: run_mixing(ex); break;
      case Kind::covariance: run_covariance(ex); break;
      case Kind::adversarial_scan: run_adversarial_scan(ex); break;
      case Kind::retention: run_retention(ex); break;
      case Kind::tails: run_tails(ex); break;
      case Kind::scaling: run_scaling(ex); break;
      case Kind::verify_all: run_verify_all(ex); break;
    }

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    json summary = {
        {"tool", "corrmem"},
        {"version", CORRMEM_VERSION},
        {"kind", to_string(*kind)},
        {"config_path", req.config.string()},
        {"config", config},
        {"defaults_applied", ex.reader.defaults},
        {"seeds", ex.seeds.to_json()},
        {"workers", ex.workers.resolved()},
        {"outputs", ex.outputs},
        {"results", ex.results},
        {"bound_violation", ex.violation},
        {"wall_time_seconds", wall},
    };
    std::ofstream os(out_dir / "summary.json", std::ios::binary | std::ios::trunc);
    os << summary.dump(2) << '\n';
    if (!os) throw std::runtime_error("cannot write " + (out_dir / "summary.json").string());
    if (ex.violation) {
      log << "corrmem: bound violation detected; see " << (out_dir / "tails.csv").string() << '\n';
      return *kind == Kind::verify_all ? kExitViolation : kExitOk;
    }
    return kExitOk;
  } catch (const ResourceLimitError& e) {
    log << "corrmem: resource limit: " << e.what() << '\n';
    return kExitResource;
  } catch (const ValidationError& e) {
    log << "corrmem: " << e.what() << '\n';
    return kExitConfig;
  } catch (const json::exception& e) {
    log << "corrmem: config: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    log << "corrmem: error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace corrmem::harness
