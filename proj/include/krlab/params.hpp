#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "krlab/activation.hpp"
#include "krlab/numerics.hpp"

namespace krlab {

/// One attention head: output weight c, feed-forward weight U, attention weight W.
struct HeadParams {
  double c = 0.0;
  Eigen::VectorXd U;
  Eigen::MatrixXd W;
};

using HeadList = std::vector<HeadParams>;

/// m heads plus an immutable snapshot of the heads at initialization.
///
/// Copies share the snapshot, so iterates of a training run are cheap to copy
/// and always know the point they were initialized at.
class ModelParams {
 public:
  ModelParams() = default;
  /// Parameters without an initialization snapshot.
  ModelParams(HeadList heads, int d);

  /// Parameters whose snapshot is a copy of `heads`.
  static ModelParams at_init(HeadList heads, int d);

  int m() const { return static_cast<int>(heads.size()); }
  int d() const { return d_; }

  bool has_snapshot() const { return snapshot_ != nullptr; }
  /// Throws InvalidState when the snapshot is absent.
  const HeadList& init_snapshot() const;
  std::shared_ptr<const HeadList> snapshot_ptr() const { return snapshot_; }

  /// New parameters with the given heads and this object's snapshot.
  ModelParams with_heads(HeadList new_heads) const;

  HeadList heads;

 private:
  int d_ = 0;
  std::shared_ptr<const HeadList> snapshot_;
};

/// Projection radii (ρ_c, ρ_u, ρ_w); all strictly positive.
struct Radii {
  double rho_c = 0.0;
  double rho_u = 0.0;
  double rho_w = 0.0;

  void validate() const;
};

/// Ω_ρ: per head, |c - c0| ≤ ρ_c/√m, ‖U - U0‖ ≤ ρ_u/√m, ‖W - W0‖_F ≤ ρ_w/√m.
struct Neighborhood {
  std::shared_ptr<const HeadList> center;
  Radii radii;

  static Neighborhood around_init(const ModelParams& params, const Radii& radii);
};

/// Paired initialization: the second half copies (U, W) of the first half with c negated.
ModelParams symmetric_init(int m, int d, std::uint64_t seed);

/// Exact Euclidean projection onto the neighborhood, block by block.
ModelParams project(const ModelParams& params, const Neighborhood& nbhd);

/// Whether a point lies in the neighborhood, with additive slack.
bool in_neighborhood(const ModelParams& params, const Neighborhood& nbhd, double slack = 1e-12);

struct EventU {
  bool holds = false;
  double B_U = 0.0;
};

/// max_i ‖U_i⁰‖ ≤ √d + √(2 log(m/(2δ'))), plus B_U = that threshold + ρ_u/√m.
EventU check_event_u(const ModelParams& params, double delta_prime, double rho_u);

struct LipschitzConstants {
  double L1 = 0.0;
  double L2 = 0.0;
};

LipschitzConstants lipschitz_constants(double B_U, const ActivationSpec& act);

/// Heads flattened as (c, U, vec W) per head, W in row-major order.
Eigen::VectorXd flatten(const HeadList& heads);

// Binary layout: "KRLB", u32 version, u32 m, u32 d, heads (c, U, W row-major),
// then the snapshot in the same layout. Little-endian f64 throughout.
void save_params(std::ostream& out, const ModelParams& params);
ModelParams load_params(std::istream& in);
void save_params(const std::string& path, const ModelParams& params);
ModelParams load_params(const std::string& path);

namespace binio {
void write_u32(std::ostream& out, std::uint32_t v);
void write_f64(std::ostream& out, double v);
std::uint32_t read_u32(std::istream& in);
double read_f64(std::istream& in);
void expect_magic(std::istream& in, const char (&magic)[5]);
}  // namespace binio

}  // namespace krlab
