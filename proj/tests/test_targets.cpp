#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "mam/targets.hpp"
#include "mam/encoding.hpp"
#include "mam/errors.hpp"

using namespace mam;

namespace {

// Independent double-loop energy: build the torus adjacency from scratch and
// evaluate s'Js + h's directly.
double naive_ising_log_f(int n, double coupling, double bias, const std::vector<int>& x) {
  const int d = n * n;
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(d),
                                    std::vector<int>(static_cast<std::size_t>(d), 0));
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const int a = r * n + c;
      const int right = r * n + (c + 1) % n;
      const int down = ((r + 1) % n) * n + c;
      if (a != right) adj[a][right] = adj[right][a] = 1;
      if (a != down) adj[a][down] = adj[down][a] = 1;
    }
  }
  auto s = [&](int i) { return 2.0 * x[static_cast<std::size_t>(i)] - 1.0; };
  double quad = 0.0;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) quad += adj[i][j] * s(i) * s(j);
  }
  double linear = 0.0;
  for (int i = 0; i < d; ++i) linear += bias * s(i);
  return coupling * quad + linear;
}

std::vector<int> coordinate_bits(double value) {
  std::vector<int> bits(16, 0);
  bits[0] = value < 0.0 ? 1 : 0;
  const long magnitude = std::lround(std::abs(value) * 32768.0 / 4.0);
  for (int i = 0; i < 15; ++i) bits[15 - i] = static_cast<int>((magnitude >> i) & 1);
  return bits;
}

std::vector<int> point_bits(double x, double y) {
  std::vector<int> bits = coordinate_bits(x);
  const std::vector<int> ybits = coordinate_bits(y);
  bits.insert(bits.end(), ybits.begin(), ybits.end());
  return bits;
}

}  // namespace

TEST_CASE("3x3 torus, all spins up: 18 edges, log f = 5.4") {
  IsingTarget target(3, 0.1, 0.2);
  CHECK(target.edge_count() == 18);
  const std::vector<int> up(9, 1);
  CHECK(target.log_f(up) == doctest::Approx(5.4).epsilon(1e-12));
}

TEST_CASE("null couplings give zero energy; global spin flip is a symmetry at zero bias") {
  IsingTarget null_target(3, 0.0, 0.0);
  IsingTarget nobias(3, 0.7, 0.0);
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> x(9), flipped(9);
    for (int i = 0; i < 9; ++i) {
      x[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_below(2));
      flipped[static_cast<std::size_t>(i)] = 1 - x[static_cast<std::size_t>(i)];
    }
    CHECK(null_target.log_f(x) == 0.0);
    CHECK(nobias.log_f(x) == doctest::Approx(nobias.log_f(flipped)).epsilon(1e-12));
  }
}

TEST_CASE("ising_log_f agrees with a naive double-loop implementation") {
  Rng rng(2);
  for (const int n : {2, 3, 4}) {
    IsingTarget target(n, 0.13, -0.4);
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<int> x(static_cast<std::size_t>(n * n));
      for (auto& v : x) v = static_cast<int>(rng.uniform_below(2));
      CHECK(target.log_f(x) ==
            doctest::Approx(naive_ising_log_f(n, 0.13, -0.4, x)).epsilon(1e-12));
    }
  }
}

TEST_CASE("site_log_f matches brute-force flips") {
  IsingTarget target(3, 0.2, 0.1);
  Rng rng(3);
  std::vector<int> x(9);
  for (auto& v : x) v = static_cast<int>(rng.uniform_below(2));
  for (int site = 0; site < 9; ++site) {
    const std::vector<double> fast = target.site_log_f(x, site);
    std::vector<int> y = x;
    y[static_cast<std::size_t>(site)] = 0;
    const double f0 = target.log_f(y);
    y[static_cast<std::size_t>(site)] = 1;
    const double f1 = target.log_f(y);
    CHECK(fast[0] == doctest::Approx(f0).epsilon(1e-12));
    CHECK(fast[1] == doctest::Approx(f1).epsilon(1e-12));
  }
}

TEST_CASE("ising rejects wrong-length states and bad construction") {
  IsingTarget target(3, 0.1, 0.2);
  CHECK_THROWS_AS(target.log_f(std::vector<int>(4, 0)), DomainError);
  CHECK_THROWS_AS(IsingTarget(0, 0.1, 0.2), DomainError);
}

TEST_CASE("checkerboard anchor cells match the documented bit layout") {
  CheckerboardTarget target;
  // (1.0, 1.0) sits in [0,2) x [0,2): dark
  CHECK(target.log_f(point_bits(1.0, 1.0)) == 0.0);
  // (1.0, 3.0) flips one cell: light
  CHECK(target.log_f(point_bits(1.0, 3.0)) ==
        doctest::Approx(std::log(1e-10)).epsilon(1e-12));
  CHECK(CheckerboardTarget::kLightLogMass == doctest::Approx(std::log(1e-10)).epsilon(1e-12));

  // the string 0001111111111111 decodes to ~1.0
  std::vector<int> bits = {0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1};
  CHECK(CheckerboardTarget::decode_coordinate(bits.data()) == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(CheckerboardTarget::cell_index(bits.data()) == 0);

  // top-two-bit cell map: (0,b2) -> [0,2),[2,4); (1,b2) -> [-2,0),[-4,-2)
  const std::vector<int> c10 = coordinate_bits(-1.0);
  CHECK(CheckerboardTarget::cell_index(c10.data()) == -1);
  const std::vector<int> c11 = coordinate_bits(-3.0);
  CHECK(CheckerboardTarget::cell_index(c11.data()) == -2);
  const std::vector<int> c01 = coordinate_bits(3.0);
  CHECK(CheckerboardTarget::cell_index(c01.data()) == 1);
}

TEST_CASE("translating a point by one square side flips dark/light") {
  CheckerboardTarget target;
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const double x = rng.uniform01() * 1.9;  // keep x and x+2 in range
    const double y = rng.uniform01() * 7.8 - 3.9;
    const bool base = target.is_dark(point_bits(x, y));
    CHECK(target.is_dark(point_bits(x + 2.0, y)) == !base);
  }
}

TEST_CASE("parity flag flips the dark cell assignment") {
  CheckerboardTarget even(true), odd(false);
  const std::vector<int> p = point_bits(1.0, 1.0);
  CHECK(even.is_dark(p));
  CHECK(!odd.is_dark(p));
}

TEST_CASE("coordinate decode is a bijection on 16-bit strings (exhaustive)") {
  std::set<std::uint64_t> seen;
  std::vector<int> bits(16);
  for (std::uint32_t code = 0; code < 65536; ++code) {
    for (int i = 0; i < 16; ++i) bits[static_cast<std::size_t>(i)] = (code >> (15 - i)) & 1;
    const double value = CheckerboardTarget::decode_coordinate(bits.data());
    CHECK(std::abs(value) <= 4.0);
    std::uint64_t pattern;
    std::memcpy(&pattern, &value, sizeof(pattern));  // +0.0 and -0.0 differ here
    seen.insert(pattern);
  }
  CHECK(seen.size() == 65536);
}

TEST_CASE("dark-cell sampler: every draw is dark, cells uniform, entropy 31 bits") {
  CheckerboardTarget target;
  Rng rng(5);
  const std::size_t n = 80000;
  const auto samples = target.sample_data(rng, n);
  std::map<std::pair<int, int>, int> cell_counts;
  for (const auto& x : samples) {
    CHECK(target.log_f(x) == 0.0);
    cell_counts[{CheckerboardTarget::cell_index(x.data()),
                 CheckerboardTarget::cell_index(x.data() + 16)}] += 1;
  }
  CHECK(cell_counts.size() == 8);
  const double p = 1.0 / 8.0;
  const double three_sigma = 3.0 * std::sqrt(p * (1 - p) / static_cast<double>(n));
  for (const auto& [cell, count] : cell_counts) {
    CHECK(std::abs(static_cast<double>(count) / static_cast<double>(n) - p) < three_sigma);
  }

  // 8 dark cells x 2^28 interior bit patterns each
  int dark_cells = 0;
  for (const int c1 : {0, 1, -1, -2}) {
    for (const int c2 : {0, 1, -1, -2}) {
      std::vector<int> x(32, 0);
      x[0] = c1 < 0;
      x[1] = (c1 == 1 || c1 == -2);
      x[16] = c2 < 0;
      x[17] = (c2 == 1 || c2 == -2);
      dark_cells += target.is_dark(x);
    }
  }
  CHECK(dark_cells == 8);
  const double entropy_bits = std::log2(static_cast<double>(dark_cells) * std::pow(2.0, 28));
  CHECK(entropy_bits == doctest::Approx(31.0).epsilon(1e-12));
}

TEST_CASE("table target validation and file round trip") {
  CHECK_THROWS_AS(TableTarget(2, 2, {1.0, 2.0, 3.0}), DomainError);       // wrong count
  CHECK_THROWS_AS(TableTarget(2, 2, {0.0, 0.0, 0.0, 0.0}), DomainError);  // all zero
  CHECK_THROWS_AS(TableTarget(2, 2, {1.0, -1.0, 0.0, 0.0}), DomainError); // negative

  TableTarget t(2, 2, {0.5, 0.0, 1.25, 0.25});
  CHECK(t.log_f({0, 0}) == doctest::Approx(std::log(0.5)));
  CHECK(t.log_f({0, 1}) == doctest::Approx(std::log(1.25)));  // little-endian index
  CHECK(t.log_f({1, 0}) == -std::numeric_limits<double>::infinity());

  const std::string path = std::filesystem::temp_directory_path() / "mam_table_test.tsv";
  t.save(path);
  const TableTarget loaded = TableTarget::load(path);
  CHECK(loaded.dim() == 2);
  CHECK(loaded.alphabet() == 2);
  CHECK(loaded.mass() == t.mass());
  std::filesystem::remove(path);
}

TEST_CASE("table file errors are typed") {
  namespace fs = std::filesystem;
  const std::string path = fs::temp_directory_path() / "mam_table_bad.tsv";
  auto write = [&](const std::string& text) {
    std::ofstream out(path);
    out << text;
  };
  write("00 1.0\n01\t1\n10\t1\n11\t1\n");  // missing tab
  CHECK_THROWS_AS(TableTarget::load(path), IoError);
  write("00\t1\n01\t1\n10\t1\n");  // not K^D lines
  CHECK_THROWS_AS(TableTarget::load(path), IoError);
  write("00\t1\n00\t1\n10\t1\n11\t1\n");  // duplicate state
  CHECK_THROWS_AS(TableTarget::load(path), IoError);
  CHECK_THROWS_AS(TableTarget::load("/nonexistent/nope.tsv"), IoError);
  fs::remove(path);
}

TEST_CASE("temperature scales log f and must be positive") {
  CHECK_THROWS_AS(Temperature(0.0), DomainError);
  CHECK_THROWS_AS(Temperature(-1.0), DomainError);
  auto base = std::make_shared<IsingTarget>(2, 0.5, 0.1);
  TemperedTarget scaled(base, Temperature(2.0));
  const std::vector<int> x = {1, 0, 1, 1};
  CHECK(scaled.log_f(x) == doctest::Approx(base->log_f(x) / 2.0).epsilon(1e-12));
}
