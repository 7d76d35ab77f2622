#include "steerlab/common.hpp"
#include "steerlab/parallel.hpp"
#include "steerlab/rng.hpp"
#include "steerlab/tensor_store.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>

using namespace steerlab;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("core");

TEST_CASE("rng streams are deterministic and seed-sensitive") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const uint64_t va = a.next();
    CHECK(va == b.next());
  }
  bool differs = false;
  Rng a2(42);
  for (int i = 0; i < 100; ++i) differs = differs || (a2.next() != c.next());
  CHECK(differs);
}

TEST_CASE("normal draws have sane moments") {
  Rng rng(7);
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal();
    sum += v;
    sq += v * v;
  }
  CHECK(std::abs(sum / n) < 0.05);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("seed_mix separates label streams") {
  CHECK(seed_mix({1, 2}) != seed_mix({2, 1}));
  CHECK(seed_mix({1, 2}) == seed_mix({1, 2}));
  CHECK(seed_mix({1}) != seed_mix({1, 0}));
}

TEST_CASE("parallel_for result does not depend on worker count") {
  std::vector<double> out1(100), out4(100);
  auto body = [](std::vector<double>& out) {
    return [&out](int i) { out[static_cast<size_t>(i)] = std::sqrt(static_cast<double>(i)); };
  };
  parallel_for(100, 1, body(out1));
  parallel_for(100, 4, body(out4));
  CHECK(out1 == out4);
}

TEST_CASE("parallel_for propagates exceptions") {
  CHECK_THROWS_AS(parallel_for(8, 2,
                               [](int i) {
                                 if (i == 3) throw ContractViolation("boom");
                               }),
                  ContractViolation);
}

TEST_CASE("tensor container round trip with checksums") {
  const fs::path dir = fs::temp_directory_path() / "steerlab-test-container";
  fs::remove_all(dir);
  Matf m(3, 4);
  Rng rng(5);
  fill_normal(m, rng);
  Vecf v(7);
  for (int i = 0; i < 7; ++i) v(i) = static_cast<float>(i) * 0.5f;
  nlohmann::json meta;
  meta["note"] = "test";
  write_container(dir, {NamedTensor::from_matrix("m", m), NamedTensor::from_vector("v", v)},
                  meta);

  nlohmann::json meta_out;
  TensorMap tensors = read_container(dir, &meta_out);
  CHECK(meta_out.at("note") == "test");
  CHECK(tensors.at("m").to_matrix() == m);
  CHECK(tensors.at("v").to_vector() == v);

  SUBCASE("corruption is detected") {
    std::fstream f(dir / "t0000.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    const uint32_t garbage = 0xdeadbeef;
    f.write(reinterpret_cast<const char*>(&garbage), 4);
    f.close();
    CHECK_THROWS_AS(read_container(dir), IntegrityError);
  }
  fs::remove_all(dir);
}

TEST_CASE("float formatting round-trips float32") {
  for (float v : {1.0f, -0.33333334f, 6.9077554e0f, 1e-7f, 123456.78f}) {
    const std::string s = fmt_float(v);
    CHECK(std::stof(s) == v);
  }
}

TEST_SUITE_END();
