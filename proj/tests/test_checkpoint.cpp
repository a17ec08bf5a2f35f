#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "twostage/checkpoint.hpp"
#include "twostage/vae.hpp"

using namespace twostage;

namespace {

std::string tmp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::vector<char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

void write_bytes(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
  VaeModel m = vae_init(7, 3, {5, 4}, 99);
  m.log_gamma.data[0] = -2.75;
  const std::string path = tmp_path("ckpt_roundtrip.ckpt");
  checkpoint_save(m, path);
  VaeModel r = checkpoint_load(path);

  CHECK(r.kappa == m.kappa);
  CHECK(r.ambient_dim == m.ambient_dim);
  CHECK(r.log_gamma.data[0] == m.log_gamma.data[0]);
  auto nets = {&VaeModel::encoder_mu, &VaeModel::encoder_logvar,
               &VaeModel::decoder_mu};
  for (auto net : nets) {
    CHECK((r.*net).layer_dims == (m.*net).layer_dims);
    REQUIRE((r.*net).weights.size() == (m.*net).weights.size());
    for (std::size_t l = 0; l < (m.*net).weights.size(); ++l) {
      CHECK((r.*net).weights[l].data == (m.*net).weights[l].data);
      CHECK((r.*net).biases[l].data == (m.*net).biases[l].data);
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("checkpoint file starts with the magic") {
  VaeModel m = vae_init(2, 2, {3}, 1);
  const std::string path = tmp_path("ckpt_magic.ckpt");
  checkpoint_save(m, path);
  auto bytes = read_bytes(path);
  REQUIRE(bytes.size() > 8);
  CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "2SVAE001");
  std::remove(path.c_str());
}

TEST_CASE("bad magic is rejected") {
  VaeModel m = vae_init(2, 2, {3}, 1);
  const std::string path = tmp_path("ckpt_badmagic.ckpt");
  checkpoint_save(m, path);
  auto bytes = read_bytes(path);
  bytes[0] = 'X';
  write_bytes(path, bytes);
  CHECK_THROWS_AS(checkpoint_load(path), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("truncation reported with byte position") {
  VaeModel m = vae_init(3, 2, {4}, 2);
  const std::string path = tmp_path("ckpt_trunc.ckpt");
  checkpoint_save(m, path);
  auto bytes = read_bytes(path);
  bytes.resize(bytes.size() / 2);
  write_bytes(path, bytes);
  try {
    checkpoint_load(path);
    FAIL("expected truncation error");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find(std::to_string(bytes.size())) != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("missing file rejected") {
  CHECK_THROWS_AS(checkpoint_load(tmp_path("ckpt_does_not_exist.ckpt")),
                  std::runtime_error);
}

TEST_CASE("load then sample reproduces the original model") {
  VaeModel m = vae_init(4, 2, {6}, 77);
  m.log_gamma.data[0] = -1.5;
  const std::string path = tmp_path("ckpt_sample.ckpt");
  checkpoint_save(m, path);
  VaeModel r = checkpoint_load(path);
  Tensor a = sample_ancestral(m, 50, 5, false);
  Tensor b = sample_ancestral(r, 50, 5, false);
  CHECK(a.data == b.data);
  std::remove(path.c_str());
}
