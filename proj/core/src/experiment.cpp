#include "bae/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "bae/data.hpp"

namespace bae {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void bad_config(const std::string& what) { fail(ErrorKind::invalid_argument, "config: " + what); }

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) bad_config(where + " must be an object");
  for (const auto& [key, _] : obj.items())
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      bad_config("unknown key '" + key + "' in " + where);
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    bad_config("bad value for '" + std::string(key) + "' in " + where);
  }
}

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt17(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json plan_to_json(const TrainingPlan& p) {
  return {{"algorithm", to_string(p.algorithm)},
          {"w_nn", p.w_nn},
          {"w_ae", p.w_ae},
          {"epochs", p.epochs},
          {"lr", p.lr},
          {"batch_size", p.batch_size},
          {"task_loss", nn::to_string(p.task_loss)},
          {"recon_loss", nn::to_string(p.recon_loss)},
          {"eval_metric", to_string(p.eval_metric)},
          {"phases_per_epoch", to_string(p.phases)}};
}

/// Applies the keys present in j on top of base.
TrainingPlan plan_from_json(const json& j, TrainingPlan base, const std::string& where) {
  check_keys(j, {"algorithm", "w_nn", "w_ae", "epochs", "lr", "batch_size", "task_loss", "recon_loss", "eval_metric",
                 "phases_per_epoch"},
             where);
  std::string s;
  if (j.contains("algorithm")) {
    read(j, "algorithm", s, where);
    base.algorithm = algorithm_from_string(s);
  }
  read(j, "w_nn", base.w_nn, where);
  read(j, "w_ae", base.w_ae, where);
  read(j, "epochs", base.epochs, where);
  read(j, "lr", base.lr, where);
  read(j, "batch_size", base.batch_size, where);
  if (j.contains("task_loss")) {
    read(j, "task_loss", s, where);
    base.task_loss = nn::loss_kind_from_string(s);
  }
  if (j.contains("recon_loss")) {
    read(j, "recon_loss", s, where);
    base.recon_loss = nn::loss_kind_from_string(s);
  }
  if (j.contains("eval_metric")) {
    read(j, "eval_metric", s, where);
    base.eval_metric = eval_metric_from_string(s);
  }
  if (j.contains("phases_per_epoch")) {
    read(j, "phases_per_epoch", s, where);
    base.phases = phase_schedule_from_string(s);
  }
  return base;
}

template <class T>
void require_axis(const std::vector<T>& axis, const char* name) {
  if (axis.empty()) bad_config(std::string(name) + " must not be empty");
  if (std::set<T>(axis.begin(), axis.end()).size() != axis.size())
    bad_config(std::string(name) + " has duplicate values");
}

/// Display order for algorithm columns: baselines first.
int family_rank(Algorithm a) {
  switch (a) {
    case Algorithm::plain_nn: return 0;
    case Algorithm::uae_then_nn: return 1;
    case Algorithm::bae_type0: return 2;
    case Algorithm::bae_type1: return 3;
    case Algorithm::bae_type2: return 4;
  }
  return 5;
}

/// Splits "bae_type2_nu5" into (bae_type2, 5); "plain_nn" gives nu 0.
std::pair<Algorithm, int> parse_label(const std::string& label) {
  const auto pos = label.rfind("_nu");
  if (pos != std::string::npos) {
    int nu = 0;
    const char* first = label.data() + pos + 3;
    const char* last = label.data() + label.size();
    const auto res = std::from_chars(first, last, nu);
    if (res.ec == std::errc() && res.ptr == last) return {algorithm_from_string(label.substr(0, pos)), nu};
  }
  return {algorithm_from_string(label), 0};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::io, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + p.string());
  out << text;
  require(static_cast<bool>(out), ErrorKind::io, "write failed for " + p.string());
}

void write_summaries(const fs::path& dir, const std::vector<SummaryRow>& summary, const std::vector<RunRow>& rows) {
  write_file(dir / "summary.csv", summary_csv(summary));
  write_file(dir / "summary.json", summary_json(summary, rows));
  write_file(dir / "tables.md", tables_markdown(summary));
}

}  // namespace

void ExperimentConfig::validate() const {
  if (name.empty()) bad_config("name must not be empty");
  if (output.empty()) bad_config("output must not be empty");
  require_axis(seeds, "seeds");
  require_axis(algorithms, "algorithms");
  const bool needs_ae = std::any_of(algorithms.begin(), algorithms.end(),
                                    [](Algorithm a) { return a != Algorithm::plain_nn; });
  if (needs_ae) require_axis(bottleneck, "bottleneck");
  for (int nu : bottleneck)
    if (nu < 1) bad_config("bottleneck widths must be positive");
  if (hidden < 1) bad_config("hidden must be positive");
  if (kind == DatasetKind::simulated) {
    const auto& g = simulated;
    require_axis(g.d, "simulated.d");
    require_axis(g.nu_star, "simulated.nu_star");
    require_axis(g.n, "simulated.n");
    require_axis(g.sigma, "simulated.sigma");
    for (int n : g.n)
      if (n < 2) bad_config("simulated.n values must be at least 2");
    for (int d : g.d)
      if (d < 1) bad_config("simulated.d values must be positive");
    for (int v : g.nu_star)
      if (v < 1) bad_config("simulated.nu_star values must be positive");
    for (double s : g.sigma)
      if (!(s >= 0.0) || !std::isfinite(s)) bad_config("simulated.sigma values must be non-negative");
    if (!(g.train_fraction > 0.0 && g.train_fraction < 1.0)) bad_config("simulated.train_fraction must lie in (0, 1)");
  } else {
    const auto& g = images;
    if (g.name.empty()) bad_config("images.name must not be empty");
    if (g.train_size < 1 || g.test_size < 1) bad_config("images train_size and test_size must be positive");
    require_axis(g.noise, "images.noise");
    for (double s : g.noise)
      if (!(s >= 0.0) || !std::isfinite(s)) bad_config("images.noise values must be non-negative");
  }
  for (Algorithm a : algorithms) {
    const TrainingPlan p = plan_for(a);
    p.validate();
    if (kind == DatasetKind::simulated) {
      if (p.task_loss != nn::LossKind::mse || p.recon_loss != nn::LossKind::mse)
        bad_config("simulated runs use mse task and reconstruction losses (linear outputs)");
    } else if (p.task_loss != nn::LossKind::categorical_cross_entropy) {
      bad_config("image runs use the cce task loss (softmax output)");
    }
  }
}

TrainingPlan ExperimentConfig::plan_for(Algorithm a) const {
  auto it = per_algorithm.find(a);
  TrainingPlan p = it == per_algorithm.end() ? training : it->second;
  p.algorithm = a;
  return p;
}

ExperimentConfig ExperimentConfig::simulated_defaults() {
  ExperimentConfig c;
  c.name = "simulated";
  c.bottleneck = {1, 10};
  return c;
}

ExperimentConfig ExperimentConfig::image_defaults() {
  ExperimentConfig c;
  c.name = "images";
  c.kind = DatasetKind::images;
  c.bottleneck = {32};
  c.hidden = 128;
  c.algorithms = {Algorithm::plain_nn, Algorithm::bae_type2};
  c.training.epochs = 15;
  c.training.task_loss = nn::LossKind::categorical_cross_entropy;
  c.training.recon_loss = nn::LossKind::binary_cross_entropy;
  c.training.eval_metric = EvalMetric::accuracy;
  c.seeds = {0, 1, 2};
  return c;
}

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["version"] = kConfigVersion;
  j["name"] = c.name;
  if (c.kind == DatasetKind::simulated) {
    const auto& g = c.simulated;
    j["dataset"] = {{"kind", "simulated"}, {"d", g.d},         {"nu_star", g.nu_star},
                    {"n", g.n},            {"sigma", g.sigma}, {"train_fraction", g.train_fraction}};
  } else {
    const auto& g = c.images;
    j["dataset"] = {{"kind", "images"},         {"name", g.name},   {"data_dir", g.data_dir},
                    {"train_size", g.train_size}, {"test_size", g.test_size}, {"noise", g.noise},
                    {"clip", g.clip}};
  }
  j["model"] = {{"bottleneck", c.bottleneck}, {"hidden", c.hidden}};
  json algs = json::array();
  for (Algorithm a : c.algorithms) algs.push_back(to_string(a));
  j["algorithms"] = algs;
  json base = plan_to_json(c.training);
  base.erase("algorithm");
  j["training"] = base;
  json per = json::object();
  for (const auto& [a, p] : c.per_algorithm) {
    json pj = plan_to_json(p);
    pj.erase("algorithm");
    per[to_string(a)] = pj;
  }
  j["per_algorithm"] = per;
  j["seeds"] = c.seeds;
  j["output"] = c.output;
  return j.dump(2) + "\n";
}

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    bad_config(std::string("not valid JSON: ") + e.what());
  }
  check_keys(j, {"version", "name", "dataset", "model", "algorithms", "training", "per_algorithm", "seeds", "output"},
             "config");
  if (!j.contains("version") || !j["version"].is_number_integer() || j["version"].get<int>() != kConfigVersion)
    bad_config("version must be " + std::to_string(kConfigVersion));

  std::string kind = "simulated";
  if (j.contains("dataset")) {
    const json& d = j["dataset"];
    if (!d.is_object()) bad_config("dataset must be an object");
    read(d, "kind", kind, "dataset");
  }
  ExperimentConfig c = kind == "images" ? ExperimentConfig::image_defaults() : ExperimentConfig::simulated_defaults();
  if (kind != "images" && kind != "simulated") bad_config("dataset.kind must be 'simulated' or 'images'");

  read(j, "name", c.name, "config");
  if (j.contains("dataset")) {
    const json& d = j["dataset"];
    if (c.kind == DatasetKind::simulated) {
      check_keys(d, {"kind", "d", "nu_star", "n", "sigma", "train_fraction"}, "dataset");
      read(d, "d", c.simulated.d, "dataset");
      read(d, "nu_star", c.simulated.nu_star, "dataset");
      read(d, "n", c.simulated.n, "dataset");
      read(d, "sigma", c.simulated.sigma, "dataset");
      read(d, "train_fraction", c.simulated.train_fraction, "dataset");
    } else {
      check_keys(d, {"kind", "name", "data_dir", "train_size", "test_size", "noise", "clip"}, "dataset");
      read(d, "name", c.images.name, "dataset");
      read(d, "data_dir", c.images.data_dir, "dataset");
      read(d, "train_size", c.images.train_size, "dataset");
      read(d, "test_size", c.images.test_size, "dataset");
      read(d, "noise", c.images.noise, "dataset");
      read(d, "clip", c.images.clip, "dataset");
    }
  }
  if (j.contains("model")) {
    check_keys(j["model"], {"bottleneck", "hidden"}, "model");
    read(j["model"], "bottleneck", c.bottleneck, "model");
    read(j["model"], "hidden", c.hidden, "model");
  }
  if (j.contains("algorithms")) {
    std::vector<std::string> names;
    read(j, "algorithms", names, "config");
    c.algorithms.clear();
    for (const auto& n : names) c.algorithms.push_back(algorithm_from_string(n));
  }
  if (j.contains("training")) {
    if (j["training"].contains("algorithm")) bad_config("training must not name an algorithm");
    c.training = plan_from_json(j["training"], c.training, "training");
  }
  if (j.contains("per_algorithm")) {
    const json& per = j["per_algorithm"];
    if (!per.is_object()) bad_config("per_algorithm must be an object");
    for (const auto& [name, pj] : per.items()) {
      const Algorithm a = algorithm_from_string(name);
      if (pj.contains("algorithm")) bad_config("per_algorithm entries must not name an algorithm");
      TrainingPlan p = plan_from_json(pj, c.training, "per_algorithm." + name);
      p.algorithm = a;
      c.per_algorithm[a] = p;
    }
  }
  read(j, "seeds", c.seeds, "config");
  read(j, "output", c.output, "config");
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::invalid_argument, "config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  auto number = [&](std::string_view s) {
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
      fail(ErrorKind::invalid_argument, "seeds: cannot parse '" + std::string(s) + "'");
    return v;
  };
  std::string_view rest(text);
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const std::string_view item = rest.substr(0, comma);
    rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    if (const auto dots = item.find(".."); dots != std::string_view::npos) {
      const auto lo = number(item.substr(0, dots));
      const auto hi = number(item.substr(dots + 2));
      require(lo <= hi, ErrorKind::invalid_argument, "seeds: empty range '" + std::string(item) + "'");
      for (auto s = lo; s <= hi; ++s) out.push_back(s);
    } else {
      out.push_back(number(item));
    }
  }
  require(!out.empty(), ErrorKind::invalid_argument, "seeds: empty list");
  return out;
}

std::vector<RunSpec> expand(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<std::string> grids;
  if (cfg.kind == DatasetKind::simulated) {
    const auto& g = cfg.simulated;
    for (int d : g.d)
      for (int v : g.nu_star)
        for (int n : g.n)
          for (double s : g.sigma)
            grids.push_back("d" + std::to_string(d) + "_nustar" + std::to_string(v) + "_n" + std::to_string(n) +
                            "_sigma" + shortest(s));
  } else {
    for (double s : cfg.images.noise) grids.push_back("noise" + shortest(s));
  }
  std::vector<RunSpec> runs;
  for (std::size_t gi = 0; gi < grids.size(); ++gi)
    for (Algorithm a : cfg.algorithms) {
      const std::vector<int> widths = a == Algorithm::plain_nn ? std::vector<int>{0} : cfg.bottleneck;
      for (int nu : widths) {
        const std::string label = nu == 0 ? to_string(a) : std::string(to_string(a)) + "_nu" + std::to_string(nu);
        for (auto seed : cfg.seeds) runs.push_back({grids[gi], label, a, nu, seed, gi});
      }
    }
  return runs;
}

void sort_rows(std::vector<RunRow>& rows) {
  auto key = [](const RunRow& r) {
    const auto [a, nu] = parse_label(r.algorithm);
    return std::make_tuple(std::cref(r.grid), family_rank(a), nu, r.seed);
  };
  std::stable_sort(rows.begin(), rows.end(), [&](const RunRow& x, const RunRow& y) { return key(x) < key(y); });
}

std::vector<SummaryRow> aggregate(std::vector<RunRow> rows) {
  sort_rows(rows);
  std::vector<SummaryRow> out;
  for (std::size_t i = 0; i < rows.size();) {
    std::size_t j = i;
    SummaryRow s;
    s.grid = rows[i].grid;
    s.algorithm = rows[i].algorithm;
    s.metric = rows[i].metric;
    std::vector<double> values;
    for (; j < rows.size() && rows[j].grid == s.grid && rows[j].algorithm == s.algorithm; ++j) {
      require(rows[j].metric == s.metric, ErrorKind::invalid_argument,
              "aggregate: mixed metrics in " + s.grid + "/" + s.algorithm);
      ++s.runs;
      if (rows[j].failed) ++s.failures;
      if (std::isfinite(rows[j].best)) values.push_back(rows[j].best);
    }
    s.counted = static_cast<int>(values.size());
    if (values.empty()) {
      s.mean = s.std = s.min = s.max = std::nan("");
    } else {
      double sum = 0.0;
      for (double v : values) sum += v;
      s.mean = sum / static_cast<double>(values.size());
      double ss = 0.0;
      for (double v : values) ss += (v - s.mean) * (v - s.mean);
      s.std = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
      s.min = *std::min_element(values.begin(), values.end());
      s.max = *std::max_element(values.begin(), values.end());
    }
    out.push_back(s);
    i = j;
  }
  return out;
}

std::string summary_csv(const std::vector<SummaryRow>& summary) {
  std::string out = "grid,algorithm,metric,runs,failures,counted,mean,std,min,max\n";
  for (const auto& s : summary)
    out += s.grid + "," + s.algorithm + "," + s.metric + "," + std::to_string(s.runs) + "," +
           std::to_string(s.failures) + "," + std::to_string(s.counted) + "," + fmt17(s.mean) + "," + fmt17(s.std) +
           "," + fmt17(s.min) + "," + fmt17(s.max) + "\n";
  return out;
}

std::string summary_json(const std::vector<SummaryRow>& summary, const std::vector<RunRow>& rows) {
  json groups = json::array();
  for (const auto& s : summary)
    groups.push_back({{"grid", s.grid},
                      {"algorithm", s.algorithm},
                      {"metric", s.metric},
                      {"runs", s.runs},
                      {"failures", s.failures},
                      {"counted", s.counted},
                      {"mean", number_or_null(s.mean)},
                      {"std", number_or_null(s.std)},
                      {"min", number_or_null(s.min)},
                      {"max", number_or_null(s.max)}});
  std::vector<RunRow> sorted = rows;
  sort_rows(sorted);
  json runs = json::array();
  for (const auto& r : sorted)
    runs.push_back({{"grid", r.grid},
                    {"algorithm", r.algorithm},
                    {"seed", r.seed},
                    {"metric", r.metric},
                    {"best_test_metric", number_or_null(r.best)},
                    {"best_epoch", r.best_epoch},
                    {"failed", r.failed}});
  return json{{"summary", groups}, {"runs", runs}}.dump(2) + "\n";
}

std::string tables_markdown(const std::vector<SummaryRow>& summary) {
  std::string out;
  char buf[128];
  for (std::size_t i = 0; i < summary.size();) {
    std::size_t j = i;
    while (j < summary.size() && summary[j].grid == summary[i].grid) ++j;
    out += "### " + summary[i].grid + " (best test " + summary[i].metric + ")\n\n|";
    std::string rule = "|", values = "|", counts = "|";
    for (std::size_t k = i; k < j; ++k) {
      const auto& s = summary[k];
      out += " " + s.algorithm + " |";
      rule += "---|";
      if (s.counted == 0)
        std::snprintf(buf, sizeof buf, " n/a |");
      else
        std::snprintf(buf, sizeof buf, " %.3f ± %.3f |", s.mean, s.std);
      values += buf;
      std::snprintf(buf, sizeof buf, " %d runs, %d failed |", s.runs, s.failures);
      counts += buf;
    }
    out += "\n" + rule + "\n" + values + "\n" + counts + "\n\n";
    i = j;
  }
  return out;
}

std::string run_row_to_json(const RunRow& row, const MetricTrace& trace, const TrainingPlan& plan) {
  json j{{"grid", row.grid},
         {"algorithm", row.algorithm},
         {"seed", row.seed},
         {"metric", row.metric},
         {"best_test_metric", number_or_null(row.best)},
         {"best_epoch", row.best_epoch},
         {"failed", row.failed},
         {"failure", row.failure},
         {"records", trace.records.size()},
         {"plan", plan_to_json(plan)}};
  return j.dump(2) + "\n";
}

RunRow run_row_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
    RunRow r;
    r.grid = j.at("grid").get<std::string>();
    r.algorithm = j.at("algorithm").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.metric = j.at("metric").get<std::string>();
    r.best = j.at("best_test_metric").is_null() ? std::nan("") : j.at("best_test_metric").get<double>();
    r.best_epoch = j.at("best_epoch").get<int>();
    r.failed = j.at("failed").get<bool>();
    r.failure = j.value("failure", "");
    parse_label(r.algorithm);
    return r;
  } catch (const json::exception& e) {
    fail(ErrorKind::io, std::string("run file: ") + e.what());
  }
}

namespace {

struct PreparedData {
  Dataset train, test;
};

PreparedData simulated_data(const ExperimentConfig& cfg, std::size_t grid_index, std::uint64_t seed) {
  const auto& g = cfg.simulated;
  std::size_t idx = grid_index;
  const double sigma = g.sigma[idx % g.sigma.size()];
  idx /= g.sigma.size();
  const int n = g.n[idx % g.n.size()];
  idx /= g.n.size();
  const int nu_star = g.nu_star[idx % g.nu_star.size()];
  idx /= g.nu_star.size();
  const int d = g.d[idx];
  SimulatedSpec spec;
  spec.d = d;
  spec.nu_star = nu_star;
  spec.n = n;
  spec.sigma = sigma;
  spec.seed = seed;
  Rng split_rng = Rng(seed).derive(Stream::split);
  auto [train, test] = split(generate_simulated(spec), g.train_fraction, split_rng);
  return {std::move(train), std::move(test)};
}

PreparedData image_data(const ExperimentConfig& cfg, const Dataset& full_train, const Dataset& full_test,
                        std::size_t grid_index, std::uint64_t seed) {
  const auto& g = cfg.images;
  const Rng base(seed);
  Rng sub_train = base.derive(Stream::subset).derive_index(0);
  Rng sub_test = base.derive(Stream::subset).derive_index(1);
  PreparedData out{stratified_subset(full_train, static_cast<std::size_t>(g.train_size), sub_train),
                   stratified_subset(full_test, static_cast<std::size_t>(g.test_size), sub_test)};
  const NoiseSpec noise{g.noise[grid_index], g.clip};
  Rng noise_train = base.derive(Stream::noise).derive_index(0);
  Rng noise_test = base.derive(Stream::noise).derive_index(1);
  out.train = add_noise(out.train, noise, noise_train);
  out.test = add_noise(out.test, noise, noise_test);
  return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunnerOptions& opts) {
  const auto runs = expand(cfg);
  require(opts.jobs >= 1, ErrorKind::invalid_argument, "runner: jobs must be at least 1");

  Dataset full_train, full_test;
  if (cfg.kind == DatasetKind::images) {
    const auto files = image_files(resolve_data_dir(cfg.images.data_dir), cfg.images.name);
    require(files.exist(), ErrorKind::io,
            "images: IDX files not found under " + fs::path(files.train_images).parent_path().string() +
                " (set --data-dir or BAE_DATA_DIR)");
    full_train = load_idx(files.train_images, files.train_labels);
    full_test = load_idx(files.test_images, files.test_labels);
  }

  const fs::path out_dir(cfg.output);
  const std::string config_text = config_to_json(cfg);
  if (fs::exists(out_dir / "config.json"))
    require(read_file(out_dir / "config.json") == config_text, ErrorKind::invalid_argument,
            "runner: " + cfg.output + " holds runs from a different config; choose another --out or remove it");
  std::vector<RunRow> rows(runs.size());
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr error;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= runs.size()) return;
      {
        std::lock_guard lock(mu);
        if (error) return;
      }
      try {
        const RunSpec& r = runs[i];
        const PreparedData data = cfg.kind == DatasetKind::simulated
                                      ? simulated_data(cfg, r.grid_index, r.seed)
                                      : image_data(cfg, full_train, full_test, r.grid_index, r.seed);
        const int nu = r.nu == 0 ? cfg.bottleneck.front() : r.nu;
        const nn::NetworkSpec spec =
            cfg.kind == DatasetKind::simulated
                ? simulated_architecture(data.train.n_features(), nu, cfg.hidden)
                : image_architecture(data.train.n_features(), nu, data.train.n_targets(), cfg.hidden);
        const TrainingPlan plan = cfg.plan_for(r.alg);
        const TrainResult result = train(spec, data.train, data.test, plan, Rng(r.seed));

        RunRow row{r.grid, r.algorithm, r.seed, to_string(plan.eval_metric), result.trace.best_test_metric,
                   result.trace.best_epoch, result.trace.failed, result.trace.failure};
        const fs::path base = out_dir / r.grid / r.algorithm / std::to_string(r.seed);
        write_file(base.string() + ".csv", result.trace.to_csv());
        write_file(base.string() + ".json", run_row_to_json(row, result.trace, plan));
        rows[i] = row;
        if (opts.on_run) {
          std::lock_guard lock(mu);
          opts.on_run(r, row);
        }
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };

  const int threads = std::min<int>(opts.jobs, static_cast<int>(runs.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);

  ExperimentResult res;
  res.rows = rows;
  sort_rows(res.rows);
  res.summary = aggregate(res.rows);
  write_file(out_dir / "config.json", config_text);
  write_summaries(out_dir, res.summary, res.rows);
  return res;
}

ExperimentResult report(const std::string& dir) {
  const fs::path root(dir);
  require(fs::is_directory(root), ErrorKind::invalid_argument, "report: no such directory " + dir);
  std::vector<fs::path> files;
  for (const auto& grid : fs::directory_iterator(root)) {
    if (!grid.is_directory()) continue;
    for (const auto& alg : fs::directory_iterator(grid.path())) {
      if (!alg.is_directory()) continue;
      for (const auto& f : fs::directory_iterator(alg.path()))
        if (f.is_regular_file() && f.path().extension() == ".json") files.push_back(f.path());
    }
  }
  require(!files.empty(), ErrorKind::invalid_argument, "report: no run files under " + dir);
  std::sort(files.begin(), files.end());
  ExperimentResult res;
  for (const auto& f : files) res.rows.push_back(run_row_from_json(read_file(f)));
  sort_rows(res.rows);
  res.summary = aggregate(res.rows);
  write_summaries(root, res.summary, res.rows);
  return res;
}

}  // namespace bae
