#include "bae/problem.hpp"

#include <json.hpp>

namespace bae {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& what) { fail(ErrorKind::invalid_argument, what); }

json parse(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    bad(std::string(what) + ": not valid JSON: " + e.what());
  }
}

Matrix matrix_of(const json& j, const char* what) {
  if (!j.is_array() || j.empty()) bad(std::string(what) + ": expected a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].is_array() ? j[0].size() : 0);
  if (cols == 0) bad(std::string(what) + ": rows must be non-empty arrays");
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      bad(std::string(what) + ": ragged rows");
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!row[static_cast<std::size_t>(c)].is_number()) bad(std::string(what) + ": entries must be numbers");
      m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
  }
  return m;
}

Vector vector_of(const json& j, const char* what) {
  if (!j.is_array()) bad(std::string(what) + ": expected an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) bad(std::string(what) + ": entries must be numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

UtilityDescription utility_of(const json& j) {
  if (!j.is_object()) bad("utility: expected an object");
  UtilityDescription u;
  u.kind = j.value("kind", "");
  if (u.kind != "quadratic" && u.kind != "neg_quadratic" && u.kind != "radial")
    bad("utility: kind must be quadratic, neg_quadratic or radial");
  if (!j.contains("H")) bad("utility: missing H");
  u.H = matrix_of(j["H"], "utility.H");
  if (u.H.rows() != u.H.cols()) bad("utility: H must be square");
  u.h = j.contains("h") ? vector_of(j["h"], "utility.h") : Vector::Zero(u.H.rows());
  if (u.h.size() != u.H.rows()) bad("utility: h must match H");
  if (u.kind == "radial") {
    u.profile = j.value("profile", "");
    u.power = j.value("p", 1.0);
    u.negate = j.value("negate", false);
    profiles::by_name(u.profile, u.power);  // validates the name
  }
  u.build();  // validates H symmetry and shapes
  return u;
}

Matrix sample_of(const json& j) {
  if (!j.is_object()) bad("sample: expected an object");
  if (j.contains("rows")) return matrix_of(j["rows"], "sample.rows");
  if (j.contains("shells")) {
    const json& sh = j["shells"];
    const int n = sh.value("n", 0);
    const int dim = sh.value("dim", 0);
    if (n < 1 || dim < 1) bad("sample.shells: n and dim must be positive");
    const Vector radii = sh.contains("radii") ? vector_of(sh["radii"], "sample.shells.radii") : Vector::Ones(1);
    if (radii.size() == 0 || (radii.array() <= 0.0).any()) bad("sample.shells: radii must be positive");
    Rng rng = Rng(sh.value("seed", std::uint64_t{0})).derive(Stream::data);
    Matrix x(n * radii.size(), dim);
    for (int i = 0; i < n; ++i) {
      Vector u(dim);
      for (auto& v : u) v = rng.normal();
      u /= u.norm();
      for (Eigen::Index r = 0; r < radii.size(); ++r) x.row(r * n + i) = radii(r) * u.transpose();
    }
    return x;
  }
  if (!j.contains("gaussian")) bad("sample: expected 'rows', 'gaussian' or 'shells'");
  const json& g = j["gaussian"];
  const int n = g.value("n", 0);
  const int dim = g.value("dim", 0);
  if (n < 1 || dim < 1) bad("sample.gaussian: n and dim must be positive");
  Vector scale = g.contains("scale") ? vector_of(g["scale"], "sample.gaussian.scale") : Vector::Ones(dim);
  if (scale.size() != dim) bad("sample.gaussian: scale must have dim entries");
  Rng rng = Rng(g.value("seed", std::uint64_t{0})).derive(Stream::data);
  Matrix x(n, dim);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  x = (x.array().rowwise() * scale.transpose().array()).matrix();
  if (g.contains("reflect")) {
    const Vector signs = vector_of(g["reflect"], "sample.gaussian.reflect");
    if (signs.size() != dim) bad("sample.gaussian: reflect must have dim entries");
    Matrix both(2 * n, dim);
    both.topRows(n) = x;
    both.bottomRows(n) = (x.array().rowwise() * signs.transpose().array()).matrix();
    return both;
  }
  return x;
}

/// Maps nlohmann type errors (wrong value types in a document) onto
/// validation errors.
template <class F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    bad(std::string(what) + ": " + e.what());
  }
}

json check_json(const CheckReport& c) {
  return {{"name", c.name}, {"ok", c.ok}, {"worst_value", c.worst_value}, {"evaluated", c.evaluated},
          {"detail", c.detail}};
}

json matrix_json(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(row);
  }
  return out;
}

}  // namespace

UtilityFunction UtilityDescription::build() const {
  if (kind == "quadratic") return UtilityFunction::quadratic(H, h);
  if (kind == "neg_quadratic") return UtilityFunction::neg_quadratic(H, h);
  return UtilityFunction::radial(*radial_profile(), H);
}

std::optional<RadialProfile> UtilityDescription::radial_profile() const {
  if (kind != "radial") return std::nullopt;
  RadialProfile p = profiles::by_name(profile, power);
  return negate ? profiles::negated(p) : p;
}

bool UtilityDescription::isotropic_radial() const {
  return kind == "radial" && H.isIdentity(0.0);
}

UtilityDescription utility_from_json(const std::string& text) {
  return guarded("utility", [&] { return utility_of(parse(text, "utility")); });
}

Matrix sample_from_json(const std::string& text) {
  return guarded("sample", [&] { return sample_of(parse(text, "sample")); });
}

SolveInstance solve_instance_from_json(const std::string& text) {
  return guarded("instance", [&] {
    const json j = parse(text, "instance");
    if (!j.is_object() || !j.contains("utility") || !j.contains("sample"))
      bad("instance: needs 'utility' and 'sample'");
    SolveInstance s{utility_of(j["utility"]), sample_of(j["sample"]), {}, 0};
    s.options.k = j.value("k", s.options.k);
    s.options.restarts = j.value("restarts", s.options.restarts);
    s.options.max_iters = j.value("max_iters", s.options.max_iters);
    s.seed = j.value("seed", std::uint64_t{0});
    if (s.sample.cols() != s.utility.H.rows()) bad("instance: sample width does not match the utility");
    s.options.validate();
    return s;
  });
}

VerifyInstance verify_instance_from_json(const std::string& text) {
  return guarded("verify", [&] {
    const json j = parse(text, "verify");
    if (!j.is_object() || !j.contains("utility") || !j.contains("sample") || !j.contains("policy"))
      bad("verify: needs 'utility', 'policy' and 'sample'");
    VerifyInstance v;
    v.utility = utility_of(j["utility"]);
    v.sample = sample_of(j["sample"]);
    v.probes = j.contains("probes") ? sample_of(j["probes"]) : v.sample;
    const json& p = j["policy"];
    if (!p.is_object()) bad("policy: expected an object");
    v.policy = p.value("kind", "");
    if (v.policy != "quadratic" && v.policy != "sphere" && v.policy != "identity" && v.policy != "pooling" &&
        v.policy != "kfinite")
      bad("policy: kind must be quadratic, sphere, identity, pooling or kfinite");
    if (p.contains("sigma")) v.sigma = matrix_of(p["sigma"], "policy.sigma");
    if (p.contains("mean")) v.mean = vector_of(p["mean"], "policy.mean");
    v.k = p.value("k", v.k);
    v.restarts = p.value("restarts", v.restarts);
    if (j.contains("options")) {
      const json& o = j["options"];
      v.options.tol = o.value("tol", v.options.tol);
      v.options.maximal_tol = o.value("maximal_tol", v.options.maximal_tol);
      v.options.max_image_points = o.value("max_image_points", v.options.max_image_points);
      v.options.max_pairs = o.value("max_pairs", v.options.max_pairs);
      v.options.seed = o.value("seed", v.options.seed);
    }
    if (j.contains("sphere_check")) {
      v.radius_bound = j["sphere_check"].value("radius_bound", 0.0);
      v.grid = j["sphere_check"].value("grid", v.grid);
    }
    const auto dim = v.utility.H.rows();
    if (v.sample.cols() != dim || v.probes.cols() != dim) bad("verify: sample width does not match the utility");
    return v;
  });
}

VerifyOutcome run_verify(const VerifyInstance& inst) {
  const UtilityFunction w = inst.utility.build();
  VerifyOutcome out;
  out.policy = inst.policy;
  Policy policy;
  std::optional<SpherePolicy> sphere;
  std::optional<PartitionPolicy> partition;
  if (inst.policy == "quadratic") {
    require(inst.utility.kind == "quadratic" && inst.utility.h.isZero(0.0), ErrorKind::invalid_argument,
            "verify: the quadratic policy needs a quadratic utility without linear term");
    if (inst.sigma.size() > 0) {
      const Vector mean = inst.mean.size() > 0 ? inst.mean : Vector::Zero(inst.sigma.rows());
      out.quadratic = quadratic_policy(inst.utility.H, inst.sigma, mean);
    } else {
      out.quadratic = quadratic_policy(inst.utility.H, inst.sample);
    }
    policy = out.quadratic->as_policy();
  } else if (inst.policy == "sphere") {
    sphere = sphere_policy(inst.sample);
    out.beta = sphere->beta;
    policy = sphere->as_policy();
  } else if (inst.policy == "identity") {
    policy = [](const Vector& x) { return x; };
  } else if (inst.policy == "pooling") {
    const Vector mean = inst.sample.colwise().mean().transpose();
    policy = [mean](const Vector&) { return mean; };
  } else {
    SolveOptions so;
    so.k = inst.k;
    so.restarts = inst.restarts;
    Rng rng(inst.options.seed);
    partition = solve(w, inst.sample, so, rng);
    policy = as_policy(*partition, w);
  }
  out.report = verify_policy(w, policy, inst.sample, inst.probes, inst.options);
  out.ok = out.report.ok;
  if (sphere && inst.utility.isotropic_radial()) {
    const double bound = inst.radius_bound > 0.0 ? inst.radius_bound : 4.0 * sphere->beta;
    out.sphere = check_sphere_condition(*inst.utility.radial_profile(), sphere->beta, bound, inst.grid);
    out.ok = out.ok && out.sphere->ok;
  }
  return out;
}

std::string verify_outcome_to_json(const VerifyOutcome& o) {
  json checks = json::array();
  for (const auto& c : o.report.checks) checks.push_back(check_json(c));
  json j{{"ok", o.ok},
         {"policy", o.policy},
         {"checks", checks},
         {"expected_w_policy", o.report.expected_w_policy},
         {"expected_w_data", o.report.expected_w_data},
         {"w_of_mean", o.report.w_of_mean},
         {"se_policy", o.report.se_policy},
         {"se_data", o.report.se_data},
         {"image_points", o.report.image_points}};
  if (o.quadratic) {
    j["A"] = matrix_json(o.quadratic->A);
    j["rank"] = o.quadratic->rank;
  }
  if (o.policy == "sphere") j["beta"] = o.beta;
  if (o.sphere)
    j["sphere_condition"] = {{"ok", o.sphere->ok},
                             {"max_value", o.sphere->max_value},
                             {"argmax_radius", o.sphere->argmax_radius},
                             {"evaluated", o.sphere->evaluated}};
  return j.dump(2) + "\n";
}

std::string partition_to_json(const PartitionPolicy& p) {
  std::vector<std::size_t> sizes(p.actions.size(), 0);
  for (int l : p.labels) ++sizes[static_cast<std::size_t>(l)];
  json j{{"objective", p.objective},
         {"actions", matrix_json(p.actions.points())},
         {"cell_sizes", sizes},
         {"cell_weights", p.cell_weights},
         {"labels", p.labels},
         {"bregman_consistent", p.bregman_consistent},
         {"k_reduced", p.k_reduced},
         {"best_restart", p.best_restart},
         {"iterations", p.iterations}};
  return j.dump(2) + "\n";
}

}  // namespace bae
