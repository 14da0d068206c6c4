#include "harp/experiment.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace harp {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

struct Entry {
  std::string section;
  std::string key;
  std::string value;
  std::string where;
};

class Field {
 public:
  explicit Field(const Entry& e) : e_(e) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError(e_.where + ": [" + e_.section + "] " + e_.key + ": " + what);
  }

  const std::string& text() const { return e_.value; }

  double number() const {
    try {
      std::size_t used = 0;
      const double v = std::stod(e_.value, &used);
      if (used != e_.value.size() || !std::isfinite(v)) fail("expected a finite number, got '" + e_.value + "'");
      return v;
    } catch (const std::logic_error&) {
      fail("expected a number, got '" + e_.value + "'");
    }
  }

  std::uint64_t count() const {
    const std::string& s = e_.value;
    if (s.empty() || !std::all_of(s.begin(), s.end(), [](unsigned char ch) { return std::isdigit(ch); }))
      fail("expected a nonnegative integer, got '" + s + "'");
    try {
      return std::stoull(s);
    } catch (const std::logic_error&) {
      fail("integer out of range: '" + s + "'");
    }
  }

  bool boolean() const {
    if (e_.value == "true" || e_.value == "1" || e_.value == "yes" || e_.value == "on") return true;
    if (e_.value == "false" || e_.value == "0" || e_.value == "no" || e_.value == "off") return false;
    fail("expected true or false, got '" + e_.value + "'");
  }

  Rational rational() const {
    try {
      return Rational::parse(e_.value);
    } catch (const ConfigError& err) {
      fail(err.what());
    }
  }

  Vector vector() const {
    const auto parts = split(e_.value, ',');
    Vector v(static_cast<Index>(parts.size()));
    for (std::size_t i = 0; i < parts.size(); ++i) v[static_cast<Index>(i)] = Field(with(parts[i])).number();
    if (v.size() == 0) fail("expected a comma-separated list of numbers");
    return v;
  }

  Matrix matrix() const {
    const auto rows = split(e_.value, ';');
    Matrix m;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const Vector row = Field(with(rows[r])).vector();
      if (r == 0) m.resize(static_cast<Index>(rows.size()), row.size());
      if (row.size() != m.cols()) fail("matrix rows have different lengths");
      m.row(static_cast<Index>(r)) = row.transpose();
    }
    return m;
  }

 private:
  Entry with(const std::string& v) const {
    Entry copy = e_;
    copy.value = v;
    return copy;
  }

  const Entry& e_;
};

class SectionReader {
 public:
  SectionReader(std::string name, std::vector<Entry> entries) : name_(std::move(name)), entries_(std::move(entries)) {}

  // Later entries (overrides) win.
  const Entry* find(const std::string& key) {
    const Entry* hit = nullptr;
    for (const auto& e : entries_) {
      if (e.key == key) hit = &e;
    }
    if (hit) used_.insert(key);
    return hit;
  }

  template <class F>
  void get(const std::string& key, F&& apply) {
    if (const Entry* e = find(key)) apply(Field(*e));
  }

  void reject_unknown() const {
    for (const auto& e : entries_) {
      if (!used_.count(e.key)) throw ConfigError(e.where + ": unknown key '" + e.key + "' in [" + name_ + "]");
    }
  }

  const std::string& name() const { return name_; }

 private:
  std::string name_;
  std::vector<Entry> entries_;
  std::set<std::string> used_;
};

std::vector<Entry> read_entries(std::istream& in, const std::string& source, std::vector<std::string>& order) {
  std::vector<Entry> entries;
  std::string line, section;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string where = source + ":" + std::to_string(number);
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError(where + ": empty section name");
      if (std::find(order.begin(), order.end(), section) == order.end()) order.push_back(section);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    if (section.empty()) throw ConfigError(where + ": key outside of any section");
    Entry e{section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), where};
    if (e.key.empty()) throw ConfigError(where + ": empty key");
    entries.push_back(std::move(e));
  }
  return entries;
}

Entry parse_override(const std::string& text, std::vector<std::string>& order) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + text + "': expected key=value");
  const std::string path = trim(text.substr(0, eq));
  const auto dot = path.rfind('.');
  Entry e;
  e.where = "override '" + text + "'";
  e.value = trim(text.substr(eq + 1));
  if (dot == std::string::npos) {
    e.section = "experiment";
    e.key = path;
  } else {
    e.section = path.substr(0, dot);
    e.key = path.substr(dot + 1);
  }
  if (e.key.empty() || e.section.empty()) throw ConfigError(e.where + ": malformed key");
  if (std::find(order.begin(), order.end(), e.section) == order.end()) order.push_back(e.section);
  return e;
}

void read_experiment(SectionReader& s, ExperimentConfig& cfg, std::optional<std::size_t>& dimension) {
  ProblemSpec& p = cfg.problem;
  RunConfig& r = cfg.run;
  s.get("problem", [&](const Field& f) {
    if (f.text() != "skew_quartic" && f.text() != "quadratic" && f.text() != "finite_sum")
      f.fail("unknown problem '" + f.text() + "' (expected skew_quartic, quadratic or finite_sum)");
    p.name = f.text();
  });
  s.get("dimension", [&](const Field& f) { dimension = f.count(); });
  s.get("noise", [&](const Field& f) {
    try {
      p.noise = parse_noise_mode(f.text());
    } catch (const ConfigError& e) {
      f.fail(e.what());
    }
  });
  s.get("sigma", [&](const Field& f) { p.sigma = f.number(); });
  s.get("hessian", [&](const Field& f) { p.hessian = f.matrix(); });
  s.get("hessian_diagonal", [&](const Field& f) { p.hessian = Matrix(f.vector().asDiagonal()); });
  s.get("components", [&](const Field& f) { p.components = f.count(); });
  s.get("subsample", [&](const Field& f) { p.subsample = f.count(); });
  s.get("kappa", [&](const Field& f) { p.kappa = f.number(); });
  s.get("problem_seed", [&](const Field& f) { p.problem_seed = f.count(); });
  s.get("curvature_max", [&](const Field& f) { p.synthetic.curvature_max = f.number(); });
  s.get("curvature_min", [&](const Field& f) { p.synthetic.curvature_min = f.number(); });
  s.get("offset_scale", [&](const Field& f) { p.synthetic.offset_scale = f.number(); });
  s.get("margin_weight", [&](const Field& f) { p.synthetic.margin_weight = f.number(); });
  s.get("margin_sharpness", [&](const Field& f) { p.synthetic.margin_sharpness = f.number(); });
  s.get("iterations", [&](const Field& f) { r.iterations = f.count(); });
  s.get("replicates", [&](const Field& f) { r.replicates = f.count(); });
  s.get("seed", [&](const Field& f) { r.master_seed = f.count(); });
  s.get("init_low", [&](const Field& f) { r.init.low = f.number(); });
  s.get("init_high", [&](const Field& f) { r.init.high = f.number(); });
  s.get("init", [&](const Field& f) { r.init.point = f.vector(); });
  s.get("output_dir", [&](const Field& f) { cfg.output_dir = f.text(); });
  s.get("threads", [&](const Field& f) { cfg.threads = f.count(); });
  s.get("rate_window", [&](const Field& f) {
    const auto parts = split(f.text(), ':');
    if (parts.size() != 2) f.fail("expected begin:end");
    try {
      cfg.rate_begin = std::stoull(parts[0]);
      cfg.rate_end = std::stoull(parts[1]);
    } catch (const std::logic_error&) {
      f.fail("expected begin:end with integer bounds");
    }
    if (cfg.rate_begin < 1 || cfg.rate_end < cfg.rate_begin) f.fail("window must satisfy 1 <= begin <= end");
  });
  s.get("record_every", [&](const Field& f) {
    cfg.record_every = f.count();
    if (cfg.record_every < 1) f.fail("must be at least 1");
  });
  s.reject_unknown();
}

AlgorithmSpec read_algorithm(SectionReader& s, const std::string& label, std::size_t iterations) {
  AlgorithmSpec a;
  a.label = label;
  std::string kind_text = label;
  s.get("kind", [&](const Field& f) { kind_text = f.text(); });
  try {
    a.kind = parse_perturbation_kind(kind_text);
  } catch (const ConfigError& e) {
    throw ConfigError("[" + s.name() + "]: " + e.what() + "; set 'kind' for custom labels");
  }
  a.queries = a.kind == PerturbationKind::harp ? 4 : 2;
  GainSchedule::Params g;
  std::optional<double> a_fraction;
  s.get("a", [&](const Field& f) { g.a = f.number(); });
  s.get("A", [&](const Field& f) { g.A = f.number(); });
  s.get("A_fraction", [&](const Field& f) { a_fraction = f.number(); });
  s.get("alpha", [&](const Field& f) { a.alpha = f.rational(); });
  s.get("c", [&](const Field& f) { g.c = f.number(); });
  s.get("gamma", [&](const Field& f) { a.gamma = f.rational(); });
  s.get("ctilde_ratio", [&](const Field& f) { g.ctilde_ratio = f.number(); });
  s.get("w_exponent", [&](const Field& f) { g.w_exponent = f.number(); });
  s.get("w_offset", [&](const Field& f) { g.w_offset = f.number(); });
  s.get("eps0", [&](const Field& f) { g.eps0 = f.number(); });
  s.get("eps_exponent", [&](const Field& f) { g.eps_exponent = f.number(); });
  s.get("queries", [&](const Field& f) {
    const auto q = f.count();
    if (q != 2 && q != 4) f.fail("queries per iteration must be 2 or 4");
    if (a.kind == PerturbationKind::harp && q != 4) f.fail("HARP always uses 4 queries per iteration");
    a.queries = static_cast<int>(q);
  });
  s.get("freeze_hessian", [&](const Field& f) { a.loop.freeze_hessian = f.boolean(); });
  s.get("condition_ceiling", [&](const Field& f) { a.loop.condition_ceiling = f.number(); });
  s.reject_unknown();
  if (a_fraction) g.A = *a_fraction * static_cast<double>(iterations);
  g.alpha = a.alpha.value();
  g.gamma = a.gamma.value();
  try {
    a.schedule = GainSchedule(g);
  } catch (const ConfigError& e) {
    throw ConfigError("[" + s.name() + "]: " + e.what());
  }
  return a;
}

void read_predict(SectionReader& s, PredictSpec& p) {
  int gains = 0;
  s.get("a", [&](const Field& f) { p.gains.a = f.number(); ++gains; });
  s.get("c", [&](const Field& f) { p.gains.c = f.number(); ++gains; });
  s.get("alpha", [&](const Field& f) { p.gains.alpha = f.rational(); ++gains; });
  s.get("gamma", [&](const Field& f) { p.gains.gamma = f.rational(); ++gains; });
  s.get("epsilon", [&](const Field& f) {
    p.epsilon = f.number();
    if (!(p.epsilon > 0.0)) f.fail("must be positive");
  });
  s.get("q", [&](const Field& f) {
    p.q = static_cast<int>(f.count());
    if (p.q < 1) f.fail("must be positive");
  });
  s.get("mc_samples", [&](const Field& f) { p.mc_samples = f.count(); });
  s.get("seed", [&](const Field& f) { p.seed = f.count(); });
  s.reject_unknown();
  if (gains != 0 && gains != 4) throw ConfigError("[predict]: give all of a, c, alpha, gamma or none");
  p.has_gains = gains == 4;
  if (p.has_gains && !(p.gains.a > 0.0 && p.gains.c > 0.0)) throw ConfigError("[predict]: a and c must be positive");
}

}  // namespace

ExperimentConfig parse_config(std::istream& in, const std::string& source, const std::vector<std::string>& overrides) {
  std::vector<std::string> order;
  std::vector<Entry> entries = read_entries(in, source, order);
  for (const auto& o : overrides) entries.push_back(parse_override(o, order));

  auto section = [&](const std::string& name) {
    std::vector<Entry> mine;
    for (const auto& e : entries) {
      if (e.section == name) mine.push_back(e);
    }
    return SectionReader(name, std::move(mine));
  };

  ExperimentConfig cfg;
  std::optional<std::size_t> dimension;
  {
    SectionReader s = section("experiment");
    read_experiment(s, cfg, dimension);
  }

  for (const auto& name : order) {
    if (name == "experiment") continue;
    if (name == "predict") {
      SectionReader s = section(name);
      read_predict(s, cfg.predict);
      continue;
    }
    const std::string prefix = "algorithm.";
    if (name.rfind(prefix, 0) != 0 || name.size() == prefix.size())
      throw ConfigError(source + ": unknown section [" + name + "] (expected experiment, predict or algorithm.<label>)");
    SectionReader s = section(name);
    AlgorithmSpec a = read_algorithm(s, name.substr(prefix.size()), cfg.run.iterations);
    a.loop.record_every = cfg.record_every;
    cfg.algorithms.push_back(std::move(a));
  }

  if (cfg.problem.name == "quadratic") {
    if (!cfg.problem.hessian) throw ConfigError(source + ": quadratic problem needs 'hessian' or 'hessian_diagonal'");
    const auto n = static_cast<std::size_t>(cfg.problem.hessian->rows());
    if (dimension && *dimension != n)
      throw ConfigError(source + ": dimension " + std::to_string(*dimension) + " does not match the " +
                        std::to_string(n) + "x" + std::to_string(n) + " Hessian");
    dimension = n;
  } else if (cfg.problem.hessian) {
    throw ConfigError(source + ": 'hessian' only applies to the quadratic problem");
  }
  if (!dimension) throw ConfigError(source + ": [experiment] dimension is required");
  cfg.run.dimension = *dimension;
  cfg.run.noise_mode = cfg.problem.noise;
  if (cfg.run.init.point && static_cast<std::size_t>(cfg.run.init.point->size()) != *dimension)
    throw ConfigError(source + ": init has " + std::to_string(cfg.run.init.point->size()) + " entries, expected " +
                      std::to_string(*dimension));
  if (!(cfg.run.init.low <= cfg.run.init.high)) throw ConfigError(source + ": init_low must not exceed init_high");
  if (cfg.run.iterations < 1) throw ConfigError(source + ": iterations must be at least 1");
  if (cfg.run.replicates < 1) throw ConfigError(source + ": replicates must be at least 1");

  if (cfg.output_dir.empty()) {
    const char* env = std::getenv(kOutputDirEnv);
    cfg.output_dir = (env && *env) ? std::filesystem::path(env) : std::filesystem::path("harp_output");
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  return parse_config(in, path.string(), overrides);
}

ProblemPtr build_problem(const ProblemSpec& spec, Index dimension) {
  if (spec.name == "skew_quartic") return make_skew_quartic(dimension, spec.noise, spec.sigma);
  if (spec.name == "quadratic") {
    if (!spec.hessian) throw ConfigError("quadratic problem needs a Hessian");
    if (spec.hessian->rows() != dimension) throw ConfigError("quadratic Hessian does not match the dimension");
    return make_quadratic(*spec.hessian, spec.noise, spec.sigma);
  }
  if (spec.name == "finite_sum") {
    RandomStream rng = spawn_rng(spec.problem_seed, 0, StreamTag::init);
    auto parts = synthetic_components(spec.components, dimension, rng, spec.synthetic);
    return make_finite_sum(std::move(parts), spec.subsample, spec.kappa, dimension, spec.noise);
  }
  throw ConfigError("unknown problem '" + spec.name + "'");
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  if (config.algorithms.empty()) throw ConfigError("no [algorithm.<label>] sections configured");
  ExperimentResult result;
  result.problem = build_problem(config.problem, static_cast<Index>(config.run.dimension));
  const std::size_t reps = config.run.replicates;
  for (const auto& a : config.algorithms) {
    AlgorithmResult ar;
    ar.spec = a;
    ar.replicates.resize(reps);
    result.algorithms.push_back(std::move(ar));
  }

  const std::size_t jobs = config.algorithms.size() * reps;
  std::size_t workers = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, jobs);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto work = [&] {
    for (;;) {
      const std::size_t job = next.fetch_add(1);
      if (job >= jobs) return;
      const std::size_t ai = job / reps, rep = job % reps;
      const AlgorithmSpec& spec = config.algorithms[ai];
      ReplicateOutcome& out = result.algorithms[ai].replicates[rep];
      out.replicate = rep;
      RunConfig rc = config.run;
      rc.queries_per_iteration = spec.queries;
      try {
        out.record = run_algorithm(spec.kind, *result.problem, spec.schedule, rc, rep, spec.loop);
        out.terminal_components = result.problem->loss_components(out.record.terminal);
      } catch (const NumericalError& e) {
        out.diverged = true;
        out.diverged_at = e.iteration();
        out.message = e.what();
        out.record = RunRecord{};
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(jobs);
      }
    }
  };

  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return result;
}

std::vector<SummaryRow> summarize(const ExperimentResult& result) {
  std::vector<SummaryRow> rows;
  for (const auto& ar : result.algorithms) {
    SummaryRow row;
    row.algorithm = ar.spec.label;
    row.replicates = ar.replicates.size();
    std::vector<double> losses, dists, l1, l2;
    for (const auto& rep : ar.replicates) {
      if (rep.diverged) {
        ++row.diverged;
        continue;
      }
      losses.push_back(rep.record.loss.back());
      dists.push_back(rep.record.normalized_distance.back());
      if (rep.terminal_components) {
        l1.push_back(rep.terminal_components->first);
        l2.push_back(rep.terminal_components->second);
      }
      row.queries_per_replicate = rep.record.cumulative_queries.back();
    }
    auto mean = [](const std::vector<double>& v) {
      double s = 0.0;
      for (double x : v) s += x;
      return s / static_cast<double>(v.size());
    };
    if (!losses.empty()) {
      row.mean_terminal_loss = mean(losses);
      row.mean_terminal_normalized_distance = mean(dists);
    } else {
      row.mean_terminal_loss = std::nan("");
      row.mean_terminal_normalized_distance = std::nan("");
    }
    if (losses.size() >= 2) {
      double ss = 0.0;
      for (double x : losses) ss += (x - row.mean_terminal_loss) * (x - row.mean_terminal_loss);
      row.sd_terminal_loss = std::sqrt(ss / static_cast<double>(losses.size() - 1));
    }
    if (!l1.empty() && l1.size() == losses.size()) {
      row.mean_terminal_l1 = mean(l1);
      row.mean_terminal_l2 = mean(l2);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<CurveRow> aggregate_curves(const ExperimentResult& result) {
  std::vector<CurveRow> rows;
  for (const auto& ar : result.algorithms) {
    std::vector<const RunRecord*> used;
    for (const auto& rep : ar.replicates) {
      if (!rep.diverged) used.push_back(&rep.record);
    }
    if (used.empty()) continue;
    const std::size_t n = used.front()->size();
    for (std::size_t i = 0; i < n; ++i) {
      CurveRow row;
      row.algorithm = ar.spec.label;
      row.iteration = used.front()->iteration[i];
      row.cumulative_queries = used.front()->cumulative_queries[i];
      double sum = 0.0, sq = 0.0;
      for (const RunRecord* r : used) {
        sum += r->normalized_distance[i];
        sq += r->distance[i] * r->distance[i];
      }
      row.mean_normalized_distance = sum / static_cast<double>(used.size());
      row.rms_distance = std::sqrt(sq / static_cast<double>(used.size()));
      row.replicates_used = used.size();
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

namespace {

std::string format_optional(const std::optional<double>& v) { return v && std::isfinite(*v) ? format_number(*v) : ""; }

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  return out;
}

std::vector<double> curve_iterations(const std::vector<CurveRow>& rows, const std::string& label,
                                     std::vector<double>& rms) {
  std::vector<double> k;
  rms.clear();
  for (const auto& r : rows) {
    if (r.algorithm != label) continue;
    k.push_back(static_cast<double>(r.iteration));
    rms.push_back(r.rms_distance);
  }
  return k;
}

RateFit fit_with_window(const std::vector<double>& k, const std::vector<double>& rms, std::size_t begin,
                        std::size_t end) {
  if (k.empty()) throw ConfigError("no curve points");
  const auto last = static_cast<std::size_t>(k.back());
  if (end == 0) end = last;
  if (begin == 0) begin = std::max<std::size_t>(1, last / 10);
  return fit_rate(k, rms, begin, end);
}

}  // namespace

void write_outputs(const ExperimentConfig& config, const ExperimentResult& result) {
  std::error_code ec;
  std::filesystem::create_directories(config.output_dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + config.output_dir.string() + "': " + ec.message());

  for (const auto& ar : result.algorithms) {
    auto out = open_output(config.output_dir / ("iterations_" + ar.spec.label + ".csv"));
    out << "replicate,iteration,cumulative_queries,loss,distance,normalized_distance\n";
    for (const auto& rep : ar.replicates) {
      if (rep.diverged) continue;
      const RunRecord& r = rep.record;
      for (std::size_t i = 0; i < r.size(); ++i) {
        out << rep.replicate << ',' << r.iteration[i] << ',' << r.cumulative_queries[i] << ','
            << format_number(r.loss[i]) << ',' << format_number(r.distance[i]) << ','
            << format_number(r.normalized_distance[i]) << '\n';
      }
    }
  }

  {
    auto out = open_output(config.output_dir / "replicates.csv");
    out << "algorithm,replicate,status,diverged_at,terminal_iteration,cumulative_queries,terminal_loss,"
           "terminal_distance,terminal_normalized_distance,terminal_l1,terminal_l2\n";
    for (const auto& ar : result.algorithms) {
      for (const auto& rep : ar.replicates) {
        out << ar.spec.label << ',' << rep.replicate << ',';
        if (rep.diverged) {
          out << "diverged," << (rep.diverged_at ? std::to_string(*rep.diverged_at) : "") << ",,,,,,,\n";
          continue;
        }
        const RunRecord& r = rep.record;
        out << "ok,," << r.iteration.back() << ',' << r.cumulative_queries.back() << ',' << format_number(r.loss.back())
            << ',' << format_number(r.distance.back()) << ',' << format_number(r.normalized_distance.back()) << ','
            << (rep.terminal_components ? format_number(rep.terminal_components->first) : "") << ','
            << (rep.terminal_components ? format_number(rep.terminal_components->second) : "") << '\n';
      }
    }
  }

  const auto curves = aggregate_curves(result);
  {
    auto out = open_output(config.output_dir / "curves.csv");
    out << "algorithm,iteration,cumulative_queries,mean_normalized_distance,rms_distance,replicates_used\n";
    for (const auto& c : curves) {
      out << c.algorithm << ',' << c.iteration << ',' << c.cumulative_queries << ','
          << format_number(c.mean_normalized_distance) << ',' << format_number(c.rms_distance) << ','
          << c.replicates_used << '\n';
    }
  }

  const auto rows = summarize(result);
  {
    auto out = open_output(config.output_dir / "summary.csv");
    out << "algorithm,replicates,diverged,mean_terminal_loss,sd_terminal_loss,mean_terminal_l1,mean_terminal_l2,"
           "mean_terminal_normalized_distance,queries_per_replicate\n";
    for (const auto& r : rows) {
      out << r.algorithm << ',' << r.replicates << ',' << r.diverged << ','
          << format_optional(r.mean_terminal_loss) << ',' << format_optional(r.sd_terminal_loss) << ','
          << format_optional(r.mean_terminal_l1) << ',' << format_optional(r.mean_terminal_l2) << ','
          << format_optional(r.mean_terminal_normalized_distance) << ',' << r.queries_per_replicate << '\n';
    }
  }

  {
    std::vector<CurveFit> fits;
    std::ostringstream failures;
    for (const auto& ar : result.algorithms) {
      std::vector<double> rms;
      const auto k = curve_iterations(curves, ar.spec.label, rms);
      try {
        fits.push_back({ar.spec.label, fit_with_window(k, rms, config.rate_begin, config.rate_end)});
      } catch (const ConfigError& e) {
        failures << ar.spec.label << ": rate fit unavailable (" << e.what() << ")\n";
      }
    }
    auto out = open_output(config.output_dir / "rate_fit.txt");
    out << rate_fit_report(fits) << failures.str();
  }
}

std::string summary_table(const std::vector<SummaryRow>& rows) {
  std::ostringstream out;
  out << std::left << std::setw(14) << "algorithm" << std::right << std::setw(6) << "R" << std::setw(6) << "div"
      << std::setw(16) << "E[L]" << std::setw(16) << "sd[L]" << std::setw(16) << "E[norm dist]" << std::setw(12)
      << "queries" << '\n';
  for (const auto& r : rows) {
    auto cell = [](const std::optional<double>& v) {
      if (!v || !std::isfinite(*v)) return std::string("-");
      std::ostringstream s;
      s << std::setprecision(6) << *v;
      return s.str();
    };
    out << std::left << std::setw(14) << r.algorithm << std::right << std::setw(6) << r.replicates << std::setw(6)
        << r.diverged << std::setw(16) << cell(r.mean_terminal_loss) << std::setw(16) << cell(r.sd_terminal_loss)
        << std::setw(16) << cell(r.mean_terminal_normalized_distance) << std::setw(12) << r.queries_per_replicate
        << '\n';
    if (r.mean_terminal_l1)
      out << std::setw(20) << "" << "E[L1] = " << cell(r.mean_terminal_l1) << "  E[L2] = " << cell(r.mean_terminal_l2)
          << '\n';
  }
  return out.str();
}

std::vector<CurveFit> fit_curves_csv(const std::filesystem::path& path, std::size_t begin, std::size_t end) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open curves file '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path.string() + ": empty file");
  const auto header = split(trim(line), ',');
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ConfigError(path.string() + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t ca = column("algorithm"), ck = column("iteration"), cr = column("rms_distance");
  std::vector<std::string> order;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> series;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    line = trim(line);
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != header.size())
      throw ConfigError(path.string() + ":" + std::to_string(number) + ": expected " + std::to_string(header.size()) +
                        " fields");
    double k = 0.0, rms = 0.0;
    try {
      k = std::stod(cells[ck]);
      rms = std::stod(cells[cr]);
    } catch (const std::logic_error&) {
      throw ConfigError(path.string() + ":" + std::to_string(number) + ": non-numeric iteration or rms_distance");
    }
    if (!series.count(cells[ca])) order.push_back(cells[ca]);
    series[cells[ca]].first.push_back(k);
    series[cells[ca]].second.push_back(rms);
  }
  if (order.empty()) throw ConfigError(path.string() + ": no data rows");
  std::vector<CurveFit> fits;
  for (const auto& name : order) {
    const auto& s = series[name];
    fits.push_back({name, fit_with_window(s.first, s.second, begin, end)});
  }
  return fits;
}

std::string rate_fit_report(const std::vector<CurveFit>& fits) {
  std::ostringstream out;
  out << std::setprecision(6);
  for (const auto& f : fits) {
    out << f.algorithm << ": slope " << f.fit.slope << " +/- " << f.fit.standard_error << " over k in ["
        << f.fit.window_begin << ", " << f.fit.window_end << "] (" << f.fit.points << " points)\n";
  }
  return out.str();
}

std::string predict_report(const ExperimentConfig& config) {
  const ProblemPtr problem = build_problem(config.problem, static_cast<Index>(config.run.dimension));
  const PredictSpec& ps = config.predict;
  AsymptoticsSpec spec = ps.gains;
  if (!ps.has_gains) {
    if (config.algorithms.empty()) throw ConfigError("predict needs a [predict] section or an algorithm section");
    const auto& a = config.algorithms.front();
    spec.a = a.schedule.params().a;
    spec.c = a.schedule.params().c;
    spec.alpha = a.alpha;
    spec.gamma = a.gamma;
  }
  const Vector& opt = problem->optimum();
  const auto h = problem->hessian(opt);
  if (!h) throw ConfigError("predict needs an analytic Hessian at the optimum");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(*h);
  const Vector lambda = eig.eigenvalues();
  const double lmin = lambda.minCoeff();
  if (!(lmin > 0.0)) throw NumericalError("Hessian at the optimum is not positive definite");

  // Under CRN the scaling exponent is alpha rather than tau, and the bias
  // term vanishes in the limit because alpha < 4 gamma is required.
  const bool crn = problem->noise_mode() == NoiseMode::crn;
  const double tau = crn ? spec.alpha.value() : spec.tau().value();
  const double tp = crn ? spec.alpha_plus() : spec.tau_plus();
  if (crn && (spec.alpha - Rational(4) * spec.gamma).num() >= 0) throw ConfigError("CRN predictions need alpha < 4 gamma");
  const double threshold = tp / (2.0 * lmin);
  if (!(spec.a > threshold)) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "unstable gains: a = " << spec.a << " must exceed tau_plus / (2 lambda_min) = " << threshold;
    throw NumericalError(msg.str());
  }
  const Matrix gamma = spec.a * *h;
  const Index d = problem->dimension();

  std::ostringstream out;
  out << std::setprecision(10);
  out << "problem: " << problem->name() << " (d = " << d << ", noise = " << to_string(problem->noise_mode()) << ")\n";
  out << "gains: a = " << spec.a << ", c = " << spec.c << ", alpha = " << spec.alpha.str()
      << ", gamma = " << spec.gamma.str() << "\n";
  out << "tau = " << spec.tau().value() << "\ntau_plus = " << spec.tau_plus() << "\nalpha_plus = " << spec.alpha_plus() << "\n";
  if (crn) out << "CRN scaling: k^(alpha/2), Lyapunov shift alpha_plus\n";
  out << "lambda(H*) = [" << lambda.transpose() << "]\n";
  out << "stability threshold: a > " << threshold << "\n";

  auto bias_mean = [&](const Matrix& sigma, std::uint64_t tag) -> std::pair<Vector, Vector> {
    if (crn || !spec.alpha_is_six_gamma()) return {Vector::Zero(d), Vector::Zero(d)};
    if (!problem->third_derivative(opt, opt, opt, opt))
      throw ConfigError("alpha = 6 gamma needs an analytic third derivative for the bias vector");
    RandomStream rng = spawn_rng(ps.seed, tag, StreamTag::monte_carlo);
    const MonteCarloVector t = compute_bias_vector(*problem, sigma, spec, ps.mc_samples, rng);
    return {asymptotic_mean(gamma, tp, t.value), t.value};
  };

  const Matrix identity = Matrix::Identity(d, d);
  struct Case {
    std::string name;
    Matrix sigma;
  };
  const std::vector<Case> cases = {{"Sigma = I", identity}, {"Sigma = H(theta*)", *h}};

  std::optional<Matrix> crn_rhs;
  if (problem->noise_mode() == NoiseMode::crn) {
    RandomStream rng = spawn_rng(ps.seed, 0, StreamTag::monte_carlo);
    const MonteCarloMatrix s = crn_covariance_rhs(*problem, ps.mc_samples, rng);
    crn_rhs = spec.a * spec.a * s.value;
    out << "crn noise matrix diagonal = [" << s.value.diagonal().transpose() << "]\n";
  }
  const std::optional<double> var = problem->noise_variance_at_optimum();
  if (!crn_rhs && !var) throw ConfigError("predict needs Var[l(theta*, omega)] for IID problems");

  std::uint64_t tag = 1;
  for (const auto& cs : cases) {
    const auto [mu, t] = bias_mean(cs.sigma, tag++);
    const Matrix rhs = crn_rhs ? *crn_rhs : iid_covariance_rhs(spec.a, spec.c, *var, cs.sigma);
    const Matrix B = solve_lyapunov(gamma, tp, rhs);
    const Complexity cx = complexity(ps.epsilon, tau, mu, B, ps.q);
    out << "[" << cs.name << "]\n";
    out << "  t = [" << t.transpose() << "]\n";
    out << "  mu = [" << mu.transpose() << "]\n";
    out << "  tr(B) = " << B.trace() << "\n";
    out << "  iterations(eps = " << ps.epsilon << ") = " << cx.iterations << "\n";
    out << "  queries(eps = " << ps.epsilon << ", q = " << ps.q << ") = " << cx.queries << "\n";
  }
  if (!crn_rhs) {
    out << "trace, identity covariance = " << trace_identity_cov(spec.a, spec.c, *var, tp, lambda) << "\n";
    out << "trace, HARP covariance = " << trace_harp_cov(spec.a, spec.c, *var, tp, lambda) << "\n";
    out << "trace, identity covariance (unit prefactor) = "
        << trace_identity_cov(spec.a, 1.0, 2.0 / (spec.a * spec.a), tp, lambda) << "\n";
    out << "trace, HARP covariance (unit prefactor) = "
        << trace_harp_cov(spec.a, 1.0, 2.0 / (spec.a * spec.a), tp, lambda) << "\n";
  }
  return out.str();
}

}  // namespace harp
