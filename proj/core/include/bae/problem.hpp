#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "bae/closed_form.hpp"
#include "bae/kfinite.hpp"
#include "bae/utility.hpp"

namespace bae {

// JSON descriptions of utilities, samples and policies for the `solve` and
// `verify` commands.
//
// utility: {"kind": "quadratic" | "neg_quadratic", "H": [[...]], "h": [...]}
//          {"kind": "radial", "profile": "sqrt", "p": 1.0, "H": [[...]]}
//          "negate": true flips the sign of a radial profile.
// sample:  {"rows": [[...], ...]}
//          {"gaussian": {"n": 1000, "dim": 2, "seed": 0, "scale": [...],
//                        "reflect": [1, -1]}}
//          "reflect" appends every draw multiplied componentwise by the
//          given signs, so the sample holds n mirrored pairs.
//          {"shells": {"n": 100, "dim": 2, "seed": 0, "radii": [0.5, 1, 2]}}
//          n random unit directions, each repeated at every radius. With
//          power-of-two radii the normalized rows agree bit for bit, so the
//          sphere policy's action groups are exact.

struct UtilityDescription {
  std::string kind;
  Matrix H;
  Vector h;
  std::string profile;
  double power = 1.0;
  bool negate = false;

  UtilityFunction build() const;
  /// The radial profile when kind is "radial".
  std::optional<RadialProfile> radial_profile() const;
  /// True for a radial utility whose H is the identity, where W depends on
  /// ||a|| only and the sphere condition applies.
  bool isotropic_radial() const;
};

UtilityDescription utility_from_json(const std::string& text);
Matrix sample_from_json(const std::string& text);

struct SolveInstance {
  UtilityDescription utility;
  Matrix sample;
  SolveOptions options;
  std::uint64_t seed = 0;
};

/// {"utility": ..., "sample": ..., "k": 2, "restarts": 50, "seed": 0}
SolveInstance solve_instance_from_json(const std::string& text);

/// policy: {"kind": "quadratic"} (second moment estimated from the sample)
///         {"kind": "quadratic", "sigma": [[...]], "mean": [...]}
///         {"kind": "sphere"} | {"kind": "identity"} | {"kind": "pooling"}
///         {"kind": "kfinite", "k": 4, "restarts": 20}
struct VerifyInstance {
  UtilityDescription utility;
  std::string policy = "identity";
  Matrix sigma;  // optional known second moment for the quadratic policy
  Vector mean;
  int k = 2;
  int restarts = 20;
  Matrix sample;
  Matrix probes;  // defaults to the sample
  VerifyOptions options;
  double radius_bound = 0.0;  // sphere check; 0 means 4 beta
  int grid = 4000;
};

/// {"utility": ..., "policy": ..., "sample": ..., "probes": ...,
///  "options": {"tol", "maximal_tol", "max_image_points", "max_pairs", "seed"},
///  "sphere_check": {"radius_bound", "grid"}}
VerifyInstance verify_instance_from_json(const std::string& text);

struct VerifyOutcome {
  bool ok = true;
  std::string policy;
  VerifyReport report;
  std::optional<SphereConditionReport> sphere;  // sphere policy on an isotropic radial W
  double beta = 0.0;
  std::optional<QuadraticPolicy> quadratic;
};

VerifyOutcome run_verify(const VerifyInstance& inst);
std::string verify_outcome_to_json(const VerifyOutcome& out);
std::string partition_to_json(const PartitionPolicy& p);

}  // namespace bae
