#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mam/rng.hpp"

namespace mam {

// Unnormalized target distribution over {0..K-1}^D, known pointwise through
// log f(x).
class TargetDistribution {
 public:
  virtual ~TargetDistribution() = default;
  virtual int dim() const = 0;
  virtual int alphabet() const = 0;
  virtual double log_f(const std::vector<int>& x) const = 0;

  // log f over all K values of site i with the rest of x held fixed; the
  // default evaluates log_f K times, subclasses may specialize.
  virtual std::vector<double> site_log_f(const std::vector<int>& x, int i) const;
};

struct Temperature {
  double tau = 1.0;

  Temperature() = default;
  explicit Temperature(double t);
};

// log f(x) = r(x) / tau on top of a base target's log f.
class TemperedTarget : public TargetDistribution {
 public:
  TemperedTarget(std::shared_ptr<const TargetDistribution> base, Temperature temperature);

  int dim() const override { return base_->dim(); }
  int alphabet() const override { return base_->alphabet(); }
  double log_f(const std::vector<int>& x) const override;
  std::vector<double> site_log_f(const std::vector<int>& x, int i) const override;

 private:
  std::shared_ptr<const TargetDistribution> base_;
  Temperature temperature_;
};

// Ising model on the N x N torus with spins s = 2x - 1:
//   log f(x) = s' J s + biasField' s,   J = coupling * A,
// where A is the 0/1 adjacency matrix of the cyclic lattice (neighbor pairs
// deduplicated, so N = 2 sites have degree 2 instead of 4).
class IsingTarget : public TargetDistribution {
 public:
  IsingTarget(int side, double coupling, double bias);
  IsingTarget(int side, double coupling, std::vector<double> bias_field);

  int dim() const override { return side_ * side_; }
  int alphabet() const override { return 2; }
  int side() const { return side_; }
  double coupling() const { return coupling_; }
  const std::vector<double>& bias_field() const { return bias_field_; }
  const std::vector<std::vector<int>>& neighbors() const { return neighbors_; }
  std::size_t edge_count() const { return edges_.size(); }

  double log_f(const std::vector<int>& x) const override;
  std::vector<double> site_log_f(const std::vector<int>& x, int i) const override;

  // log f(x with x_i = 1) - log f(x with x_i = 0).
  double flip_delta(const std::vector<int>& x, int i) const;

 private:
  int side_;
  double coupling_;
  std::vector<double> bias_field_;
  std::vector<std::pair<int, int>> edges_;      // each undirected edge once
  std::vector<std::vector<int>> neighbors_;     // per-site adjacency
};

// 2-D checkerboard over [-4,4]^2 discretized to 32 bits (16 per coordinate).
// Bit layout per coordinate, most significant first: sign bit, then a 15-bit
// magnitude m giving the value (-1)^sign * m * 4 / 32768. Cells are 2.0 wide;
// the cell is determined exactly by the top two bits of each coordinate, so
// no floating-point boundary cases arise. Mass is 1 on dark cells and 1e-10
// on light cells; with dark_parity_even (the default) the cell covering
// [0,2) x [0,2) is dark.
class CheckerboardTarget : public TargetDistribution {
 public:
  explicit CheckerboardTarget(bool dark_parity_even = true);

  int dim() const override { return 32; }
  int alphabet() const override { return 2; }

  double log_f(const std::vector<int>& x) const override;

  // Exact cell index along one axis from its 16 bits: one of {0, 1, -1, -2},
  // identifying [0,2), [2,4), [-2,0), [-4,-2).
  static int cell_index(const int* coord_bits);
  static double decode_coordinate(const int* coord_bits);
  bool is_dark(const std::vector<int>& x) const;

  // I.i.d. uniform draws over dark-cell bit strings (exact, rejection-free).
  std::vector<std::vector<int>> sample_data(Rng& rng, std::size_t n) const;

  static constexpr double kLightLogMass = -23.025850929940457;  // ln(1e-10)

 private:
  bool dark_parity_even_;
};

// Explicit unnormalized mass per state, for oracle testing. States are
// indexed little-endian base K (see state_index).
class TableTarget : public TargetDistribution {
 public:
  TableTarget(int d, int k, std::vector<double> mass);

  static TableTarget random(int d, int k, Rng& rng, double log_std = 1.0);
  // One line per state: "<state digits>\t<mass>". Requires K <= 10.
  static TableTarget load(const std::string& path);
  void save(const std::string& path) const;

  int dim() const override { return d_; }
  int alphabet() const override { return k_; }
  double log_f(const std::vector<int>& x) const override;
  const std::vector<double>& mass() const { return mass_; }

 private:
  int d_;
  int k_;
  std::vector<double> mass_;
};

}  // namespace mam
