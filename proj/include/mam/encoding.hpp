#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mam/rng.hpp"
#include "mam/tensor.hpp"

namespace mam {

// Sentinel for marginalized-out positions.
inline constexpr int kMask = -1;

// Length-D vector over {0..K-1} plus the mask symbol. The unified input space
// for both networks: a full assignment is the special case with no masks.
struct AugmentedVector {
  std::vector<int> entries;  // kMask or a value in [0, K)
  int k = 2;

  AugmentedVector() = default;
  AugmentedVector(std::vector<int> entries, int k);

  static AugmentedVector all_mask(int d, int k);
  static AugmentedVector full(const std::vector<int>& x, int k);

  int dim() const { return static_cast<int>(entries.size()); }
  bool is_masked(int i) const { return entries[static_cast<std::size_t>(i)] == kMask; }
  int unmasked_count() const;
  bool fully_assigned() const { return unmasked_count() == dim(); }

  bool operator==(const AugmentedVector& other) const = default;
};

// Permutation of positions 0..D-1. perm[d] is the position generated at the
// (d+1)-th step.
struct Ordering {
  std::vector<int> perm;

  Ordering() = default;
  explicit Ordering(std::vector<int> perm);

  static Ordering identity(int d);

  int dim() const { return static_cast<int>(perm.size()); }
  int at(int d) const { return perm[static_cast<std::size_t>(d)]; }
};

// Keeps x at the indices in `keep`, masks everything else.
AugmentedVector augment(const std::vector<int>& x, std::span<const int> keep, int k);

// Keeps exactly the first d positions of sigma: augment(x, {sigma(1..d)}).
AugmentedVector prefix(const std::vector<int>& x, const Ordering& sigma, int d, int k);

// Uniform over all D! permutations (Fisher-Yates).
Ordering sample_ordering(int d, Rng& rng);

// Network input features: per position a one-hot block over K+1 channels
// (K values + mask), plus one trailing scalar channel holding the fraction of
// unmasked entries.
struct EncodedInput {
  std::vector<double> features;
};

inline std::size_t encoded_width(int d, int k) {
  return static_cast<std::size_t>(d) * static_cast<std::size_t>(k + 1) + 1;
}

EncodedInput encode(const AugmentedVector& v);

// Stacks encodings into a [batch, width] tensor.
Tensor encode_batch(std::span<const AugmentedVector> batch);

// Writes the encoding of v into `row` (length encoded_width(D, K)).
void encode_into(const AugmentedVector& v, double* row);

// Little-endian base-K index of a full assignment: sum of x[d] * K^d.
std::size_t state_index(std::span<const int> x, int k);
std::vector<int> state_from_index(std::size_t index, int d, int k);

}  // namespace mam
