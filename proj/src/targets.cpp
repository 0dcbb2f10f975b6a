#include "mam/targets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "mam/encoding.hpp"
#include "mam/errors.hpp"

namespace mam {

std::vector<double> TargetDistribution::site_log_f(const std::vector<int>& x, int i) const {
  std::vector<int> y = x;
  std::vector<double> out(static_cast<std::size_t>(alphabet()));
  for (int v = 0; v < alphabet(); ++v) {
    y[static_cast<std::size_t>(i)] = v;
    out[static_cast<std::size_t>(v)] = log_f(y);
  }
  return out;
}

Temperature::Temperature(double t) : tau(t) {
  if (!(t > 0.0)) throw DomainError("Temperature: tau must be strictly positive");
}

TemperedTarget::TemperedTarget(std::shared_ptr<const TargetDistribution> base,
                               Temperature temperature)
    : base_(std::move(base)), temperature_(temperature) {}

double TemperedTarget::log_f(const std::vector<int>& x) const {
  return base_->log_f(x) / temperature_.tau;
}

std::vector<double> TemperedTarget::site_log_f(const std::vector<int>& x, int i) const {
  std::vector<double> out = base_->site_log_f(x, i);
  for (double& v : out) v /= temperature_.tau;
  return out;
}

IsingTarget::IsingTarget(int side, double coupling, double bias)
    : IsingTarget(side, coupling,
                  std::vector<double>(static_cast<std::size_t>(side) *
                                          static_cast<std::size_t>(side),
                                      bias)) {}

IsingTarget::IsingTarget(int side, double coupling, std::vector<double> bias_field)
    : side_(side), coupling_(coupling), bias_field_(std::move(bias_field)) {
  if (side_ < 1) throw DomainError("IsingTarget: lattice side must be >= 1");
  const int d = side_ * side_;
  if (bias_field_.size() != static_cast<std::size_t>(d)) {
    throw DomainError("IsingTarget: bias field has " + std::to_string(bias_field_.size()) +
                      " entries for " + std::to_string(d) + " sites");
  }
  std::set<std::pair<int, int>> edge_set;
  auto site = [&](int r, int c) {
    return ((r + side_) % side_) * side_ + ((c + side_) % side_);
  };
  for (int r = 0; r < side_; ++r) {
    for (int c = 0; c < side_; ++c) {
      const int a = site(r, c);
      for (const int b : {site(r + 1, c), site(r, c + 1)}) {
        if (a == b) continue;  // side 1 has no edges
        edge_set.insert({std::min(a, b), std::max(a, b)});
      }
    }
  }
  edges_.assign(edge_set.begin(), edge_set.end());
  neighbors_.assign(static_cast<std::size_t>(d), {});
  for (const auto& [a, b] : edges_) {
    neighbors_[static_cast<std::size_t>(a)].push_back(b);
    neighbors_[static_cast<std::size_t>(b)].push_back(a);
  }
}

double IsingTarget::log_f(const std::vector<int>& x) const {
  const int d = dim();
  if (x.size() != static_cast<std::size_t>(d)) {
    throw DomainError("IsingTarget: state has " + std::to_string(x.size()) +
                      " entries, expected " + std::to_string(d));
  }
  auto spin = [&](int i) { return 2.0 * static_cast<double>(x[static_cast<std::size_t>(i)]) - 1.0; };
  double quad = 0.0;
  for (const auto& [a, b] : edges_) quad += spin(a) * spin(b);
  double linear = 0.0;
  for (int i = 0; i < d; ++i) linear += bias_field_[static_cast<std::size_t>(i)] * spin(i);
  // s'Js counts every ordered pair, hence twice the edge sum.
  return coupling_ * 2.0 * quad + linear;
}

double IsingTarget::flip_delta(const std::vector<int>& x, int i) const {
  double nbr = 0.0;
  for (const int j : neighbors_[static_cast<std::size_t>(i)]) {
    nbr += 2.0 * static_cast<double>(x[static_cast<std::size_t>(j)]) - 1.0;
  }
  return 4.0 * coupling_ * nbr + 2.0 * bias_field_[static_cast<std::size_t>(i)];
}

std::vector<double> IsingTarget::site_log_f(const std::vector<int>& x, int i) const {
  std::vector<int> y = x;
  y[static_cast<std::size_t>(i)] = 0;
  const double f0 = log_f(y);
  return {f0, f0 + flip_delta(x, i)};
}

CheckerboardTarget::CheckerboardTarget(bool dark_parity_even)
    : dark_parity_even_(dark_parity_even) {}

int CheckerboardTarget::cell_index(const int* coord_bits) {
  const int sign = coord_bits[0];
  const int high = coord_bits[1];
  if (sign == 0) return high == 0 ? 0 : 1;
  return high == 0 ? -1 : -2;
}

double CheckerboardTarget::decode_coordinate(const int* coord_bits) {
  long magnitude = 0;
  for (int i = 1; i < 16; ++i) magnitude = (magnitude << 1) | coord_bits[i];
  const double value = static_cast<double>(magnitude) * 4.0 / 32768.0;
  return coord_bits[0] == 0 ? value : -value;
}

bool CheckerboardTarget::is_dark(const std::vector<int>& x) const {
  if (x.size() != 32) {
    throw DomainError("CheckerboardTarget: state has " + std::to_string(x.size()) +
                      " entries, expected 32");
  }
  const int c1 = cell_index(x.data());
  const int c2 = cell_index(x.data() + 16);
  const bool even = ((c1 + c2) % 2 + 2) % 2 == 0;
  return even == dark_parity_even_;
}

double CheckerboardTarget::log_f(const std::vector<int>& x) const {
  return is_dark(x) ? 0.0 : kLightLogMass;
}

std::vector<std::vector<int>> CheckerboardTarget::sample_data(Rng& rng, std::size_t n) const {
  // Dark cells are exactly the (c1, c2) pairs with matching parity; each cell
  // contains the same number (2^28) of bit strings, so sampling a cell then
  // uniform low bits is exact.
  std::vector<std::pair<int, int>> dark_cells;
  const int cells[4] = {0, 1, -1, -2};
  for (const int c1 : cells) {
    for (const int c2 : cells) {
      const bool even = ((c1 + c2) % 2 + 2) % 2 == 0;
      if (even == dark_parity_even_) dark_cells.emplace_back(c1, c2);
    }
  }
  auto cell_bits = [](int cell, int* bits) {
    bits[0] = cell < 0 ? 1 : 0;
    bits[1] = (cell == 1 || cell == -2) ? 1 : 0;
  };
  std::vector<std::vector<int>> out;
  out.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    const auto& [c1, c2] = dark_cells[rng.uniform_below(dark_cells.size())];
    std::vector<int> x(32);
    cell_bits(c1, x.data());
    cell_bits(c2, x.data() + 16);
    for (const int base : {0, 16}) {
      for (int i = 2; i < 16; ++i) {
        x[static_cast<std::size_t>(base + i)] = static_cast<int>(rng.uniform_below(2));
      }
    }
    out.push_back(std::move(x));
  }
  return out;
}

TableTarget::TableTarget(int d, int k, std::vector<double> mass)
    : d_(d), k_(k), mass_(std::move(mass)) {
  if (d_ < 1 || k_ < 2) throw DomainError("TableTarget: need D >= 1 and K >= 2");
  double states = 1.0;
  for (int i = 0; i < d_; ++i) states *= static_cast<double>(k_);
  if (states > static_cast<double>(1 << 24)) {
    throw DomainError("TableTarget: state space K^D exceeds 2^24");
  }
  if (mass_.size() != static_cast<std::size_t>(states)) {
    throw DomainError("TableTarget: " + std::to_string(mass_.size()) + " masses for " +
                      std::to_string(static_cast<std::size_t>(states)) + " states");
  }
  bool any_positive = false;
  for (const double m : mass_) {
    if (m < 0.0 || !std::isfinite(m)) throw DomainError("TableTarget: masses must be >= 0");
    any_positive |= m > 0.0;
  }
  if (!any_positive) throw DomainError("TableTarget: all masses are zero");
}

TableTarget TableTarget::random(int d, int k, Rng& rng, double log_std) {
  std::size_t states = 1;
  for (int i = 0; i < d; ++i) states *= static_cast<std::size_t>(k);
  std::vector<double> mass(states);
  for (double& m : mass) m = std::exp(log_std * rng.normal());
  return TableTarget(d, k, std::move(mass));
}

double TableTarget::log_f(const std::vector<int>& x) const {
  if (x.size() != static_cast<std::size_t>(d_)) {
    throw DomainError("TableTarget: state has " + std::to_string(x.size()) +
                      " entries, expected " + std::to_string(d_));
  }
  const double m = mass_[state_index(x, k_)];
  return std::log(m);  // -inf for zero-mass states
}

TableTarget TableTarget::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("TableTarget: cannot open " + path);
  std::vector<std::pair<std::string, double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw IoError("TableTarget: missing tab separator in line '" + line + "'");
    }
    double m = 0.0;
    try {
      m = std::stod(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw IoError("TableTarget: bad mass in line '" + line + "'");
    }
    rows.emplace_back(line.substr(0, tab), m);
  }
  if (rows.empty()) throw IoError("TableTarget: empty table file " + path);
  const int d = static_cast<int>(rows[0].first.size());
  // K is determined by the line count: exactly K^D states must be present.
  int k = 0;
  for (int cand = 2; cand <= 10; ++cand) {
    std::size_t states = 1;
    bool overflow = false;
    for (int i = 0; i < d; ++i) {
      states *= static_cast<std::size_t>(cand);
      if (states > rows.size()) {
        overflow = true;
        break;
      }
    }
    if (!overflow && states == rows.size()) {
      k = cand;
      break;
    }
  }
  if (k == 0) {
    throw IoError("TableTarget: " + std::to_string(rows.size()) +
                  " lines is not K^D for any K in [2,10] with D=" + std::to_string(d));
  }
  for (const auto& [digits, m] : rows) {
    for (const char c : digits) {
      if (c < '0' || c >= '0' + k) {
        throw IoError("TableTarget: state digit out of range in '" + digits + "'");
      }
    }
  }
  std::vector<double> mass(rows.size(), -1.0);
  for (const auto& [digits, m] : rows) {
    if (static_cast<int>(digits.size()) != d) {
      throw IoError("TableTarget: inconsistent state length in '" + digits + "'");
    }
    std::vector<int> x(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) x[static_cast<std::size_t>(i)] = digits[static_cast<std::size_t>(i)] - '0';
    const std::size_t idx = state_index(x, k);
    if (mass[idx] >= 0.0) throw IoError("TableTarget: duplicate state '" + digits + "'");
    mass[idx] = m;
  }
  return TableTarget(d, k, std::move(mass));
}

void TableTarget::save(const std::string& path) const {
  if (k_ > 10) throw DomainError("TableTarget: text format supports K <= 10");
  std::ofstream out(path);
  if (!out) throw IoError("TableTarget: cannot write " + path);
  char buf[64];
  for (std::size_t idx = 0; idx < mass_.size(); ++idx) {
    const std::vector<int> x = state_from_index(idx, d_, k_);
    std::string digits(static_cast<std::size_t>(d_), '0');
    for (int i = 0; i < d_; ++i) {
      digits[static_cast<std::size_t>(i)] = static_cast<char>('0' + x[static_cast<std::size_t>(i)]);
    }
    std::snprintf(buf, sizeof(buf), "%.17g", mass_[idx]);
    out << digits << '\t' << buf << '\n';
  }
  if (!out) throw IoError("TableTarget: write failed for " + path);
}

}  // namespace mam
