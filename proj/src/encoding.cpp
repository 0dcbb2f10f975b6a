#include "mam/encoding.hpp"

#include <algorithm>

#include "mam/errors.hpp"

namespace mam {

AugmentedVector::AugmentedVector(std::vector<int> entries_in, int k_in)
    : entries(std::move(entries_in)), k(k_in) {
  if (entries.empty()) throw DomainError("AugmentedVector: dimension must be >= 1");
  if (k < 2) throw DomainError("AugmentedVector: alphabet size must be >= 2");
  for (const int e : entries) {
    if (e != kMask && (e < 0 || e >= k)) {
      throw DomainError("AugmentedVector: entry " + std::to_string(e) + " outside [0, " +
                        std::to_string(k) + ")");
    }
  }
}

AugmentedVector AugmentedVector::all_mask(int d, int k) {
  return AugmentedVector(std::vector<int>(static_cast<std::size_t>(d), kMask), k);
}

AugmentedVector AugmentedVector::full(const std::vector<int>& x, int k) {
  return AugmentedVector(x, k);
}

int AugmentedVector::unmasked_count() const {
  int n = 0;
  for (const int e : entries) n += (e != kMask);
  return n;
}

Ordering::Ordering(std::vector<int> perm_in) : perm(std::move(perm_in)) {
  const int d = dim();
  std::vector<bool> seen(static_cast<std::size_t>(d), false);
  for (const int p : perm) {
    if (p < 0 || p >= d || seen[static_cast<std::size_t>(p)]) {
      throw DomainError("Ordering: not a permutation of 0.." + std::to_string(d - 1));
    }
    seen[static_cast<std::size_t>(p)] = true;
  }
}

Ordering Ordering::identity(int d) {
  std::vector<int> perm(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) perm[static_cast<std::size_t>(i)] = i;
  return Ordering(std::move(perm));
}

AugmentedVector augment(const std::vector<int>& x, std::span<const int> keep, int k) {
  const int d = static_cast<int>(x.size());
  std::vector<int> entries(x.size(), kMask);
  for (const int i : keep) {
    if (i < 0 || i >= d) {
      throw DomainError("augment: index " + std::to_string(i) + " outside [0, " +
                        std::to_string(d) + ")");
    }
    entries[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)];
  }
  return AugmentedVector(std::move(entries), k);
}

AugmentedVector prefix(const std::vector<int>& x, const Ordering& sigma, int d, int k) {
  if (sigma.dim() != static_cast<int>(x.size())) {
    throw DomainError("prefix: ordering dimension " + std::to_string(sigma.dim()) +
                      " does not match vector dimension " + std::to_string(x.size()));
  }
  if (d < 0 || d > sigma.dim()) {
    throw DomainError("prefix: step " + std::to_string(d) + " outside [0, " +
                      std::to_string(sigma.dim()) + "]");
  }
  return augment(x, std::span<const int>(sigma.perm.data(), static_cast<std::size_t>(d)), k);
}

Ordering sample_ordering(int d, Rng& rng) {
  std::vector<int> perm(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) perm[static_cast<std::size_t>(i)] = i;
  for (int i = d - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_below(static_cast<std::uint64_t>(i) + 1));
    std::swap(perm[static_cast<std::size_t>(i)], perm[j]);
  }
  return Ordering(std::move(perm));
}

void encode_into(const AugmentedVector& v, double* row) {
  const int d = v.dim();
  const int k = v.k;
  const std::size_t width = encoded_width(d, k);
  std::fill(row, row + width, 0.0);
  for (int i = 0; i < d; ++i) {
    const int e = v.entries[static_cast<std::size_t>(i)];
    const std::size_t channel = e == kMask ? static_cast<std::size_t>(k)
                                           : static_cast<std::size_t>(e);
    row[static_cast<std::size_t>(i) * static_cast<std::size_t>(k + 1) + channel] = 1.0;
  }
  row[width - 1] = static_cast<double>(v.unmasked_count()) / static_cast<double>(d);
}

EncodedInput encode(const AugmentedVector& v) {
  EncodedInput out;
  out.features.resize(encoded_width(v.dim(), v.k));
  encode_into(v, out.features.data());
  return out;
}

std::size_t state_index(std::span<const int> x, int k) {
  std::size_t index = 0;
  std::size_t base = 1;
  for (const int v : x) {
    if (v < 0 || v >= k) {
      throw DomainError("state_index: value " + std::to_string(v) + " outside [0, " +
                        std::to_string(k) + ")");
    }
    index += static_cast<std::size_t>(v) * base;
    base *= static_cast<std::size_t>(k);
  }
  return index;
}

std::vector<int> state_from_index(std::size_t index, int d, int k) {
  std::vector<int> x(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) {
    x[static_cast<std::size_t>(i)] = static_cast<int>(index % static_cast<std::size_t>(k));
    index /= static_cast<std::size_t>(k);
  }
  return x;
}

Tensor encode_batch(std::span<const AugmentedVector> batch) {
  if (batch.empty()) throw DomainError("encode_batch: empty batch");
  const std::size_t width = encoded_width(batch[0].dim(), batch[0].k);
  Tensor t = Tensor::zeros({batch.size(), width});
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (encoded_width(batch[i].dim(), batch[i].k) != width) {
      throw ShapeError("encode_batch: mixed dimensions in batch");
    }
    encode_into(batch[i], t.data.data() + i * width);
  }
  return t;
}

}  // namespace mam
