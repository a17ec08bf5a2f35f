#include "twostage/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace twostage {

namespace {

constexpr char kMagic[8] = {'2', 'S', 'V', 'A', 'E', '0', '0', '1'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("checkpoint_save: cannot open " + path);
  }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void raw(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  void finish(const std::string& path) {
    out_.flush();
    if (!out_) throw std::runtime_error("checkpoint_save: write failed: " + path);
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw std::runtime_error("checkpoint_load: cannot open " + path);
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, sizeof v);
    return v;
  }
  double f64() {
    double v;
    raw(&v, sizeof v);
    return v;
  }
  void raw(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n))
      throw std::runtime_error("checkpoint_load: truncated file at byte " +
                               std::to_string(pos_ + in_.gcount()));
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::ifstream in_;
  std::size_t pos_ = 0;
};

void write_mlp_dims(Writer& w, const MlpParams& p) {
  w.u32(static_cast<std::uint32_t>(p.layer_dims.size()));
  for (auto d : p.layer_dims) w.u32(static_cast<std::uint32_t>(d));
}

void write_mlp_params(Writer& w, const MlpParams& p) {
  for (std::size_t l = 0; l < p.n_layers(); ++l) {
    for (double v : p.weights[l].data) w.f64(v);
    for (double v : p.biases[l].data) w.f64(v);
  }
}

std::vector<std::size_t> read_mlp_dims(Reader& r) {
  const std::uint32_t n = r.u32();
  if (n < 2 || n > 64)
    throw std::runtime_error("checkpoint_load: implausible layer count at byte " +
                             std::to_string(r.pos()));
  std::vector<std::size_t> dims(n);
  for (auto& d : dims) d = r.u32();
  return dims;
}

void read_mlp_params(Reader& r, MlpParams& p) {
  for (std::size_t l = 0; l < p.n_layers(); ++l) {
    for (double& v : p.weights[l].data) v = r.f64();
    for (double& v : p.biases[l].data) v = r.f64();
  }
}

}  // namespace

void checkpoint_save(const VaeModel& model, const std::string& path) {
  Writer w(path);
  w.raw(kMagic, sizeof kMagic);
  w.u32(static_cast<std::uint32_t>(model.kappa));
  w.u32(static_cast<std::uint32_t>(model.ambient_dim));
  write_mlp_dims(w, model.encoder_mu);
  write_mlp_dims(w, model.encoder_logvar);
  write_mlp_dims(w, model.decoder_mu);
  write_mlp_params(w, model.encoder_mu);
  write_mlp_params(w, model.encoder_logvar);
  write_mlp_params(w, model.decoder_mu);
  w.f64(model.log_gamma.data[0]);
  w.finish(path);
}

VaeModel checkpoint_load(const std::string& path) {
  Reader r(path);
  char magic[8];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw std::runtime_error("checkpoint_load: bad magic at byte 0 in " + path);

  VaeModel m;
  m.kappa = r.u32();
  m.ambient_dim = r.u32();
  const auto dims_mu = read_mlp_dims(r);
  const auto dims_lv = read_mlp_dims(r);
  const auto dims_dec = read_mlp_dims(r);
  // Shapes come from the dims; values are overwritten below.
  m.encoder_mu = mlp_init(dims_mu, Activation::kTanh, 0);
  m.encoder_logvar = mlp_init(dims_lv, Activation::kTanh, 0);
  m.decoder_mu = mlp_init(dims_dec, Activation::kTanh, 0);
  read_mlp_params(r, m.encoder_mu);
  read_mlp_params(r, m.encoder_logvar);
  read_mlp_params(r, m.decoder_mu);
  m.log_gamma = Tensor::scalar(r.f64());

  if (m.encoder_mu.in_dim() != m.ambient_dim ||
      m.encoder_mu.out_dim() != m.kappa ||
      m.decoder_mu.in_dim() != m.kappa ||
      m.decoder_mu.out_dim() != m.ambient_dim)
    throw std::runtime_error("checkpoint_load: inconsistent dimensions in " +
                             path);
  return m;
}

}  // namespace twostage
