#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "twostage/checkpoint.hpp"
#include "twostage/diagnostics.hpp"
#include "twostage/manifold.hpp"
#include "twostage/pipeline.hpp"
#include "twostage/vae.hpp"

using json = nlohmann::json;
using namespace twostage;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + std::string(e.what()));
  }
}

TrainConfig parse_train(const json& j, const TrainConfig& defaults) {
  TrainConfig cfg = defaults;
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.base_lr = j.value("base_lr", cfg.base_lr);
  cfg.lr_half_every = j.value("lr_half_every", cfg.lr_half_every);
  cfg.gamma_trainable = j.value("gamma_trainable", cfg.gamma_trainable);
  cfg.fixed_gamma = j.value("fixed_gamma", cfg.fixed_gamma);
  return cfg;
}

ManifoldSpec parse_preset(const json& j) {
  if (!j.contains("preset"))
    throw ConfigError("config: missing field \"preset\"");
  const std::string name = j["preset"].get<std::string>();
  try {
    return manifold_preset(name);
  } catch (const std::invalid_argument&) {
    throw ConfigError("config: unknown value for field \"preset\": " + name);
  }
}

std::filesystem::path prepare_out(const std::string& out) {
  std::filesystem::path dir(out);
  std::filesystem::create_directories(dir);
  return dir;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  f << text;
  if (!f) throw std::runtime_error("cannot write " + path.string());
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void append_trace(std::ostringstream& csv, int stage, const TrainTrace& t) {
  for (const EpochRecord& e : t.epochs)
    csv << stage << ',' << e.epoch << ',' << format_double(e.neg_elbo) << ','
        << format_double(e.recon_mse) << ',' << format_double(e.kl) << ','
        << format_double(e.log_gamma) << '\n';
}

int cmd_two_stage(const std::string& config_path, const std::string& out) {
  const json j = load_config(config_path);
  ManifoldSpec spec = parse_preset(j);

  PipelineConfig cfg;
  cfg.stage1 = parse_train(j.value("stage1", json::object()), cfg.stage1);
  cfg.stage2 = parse_train(j.value("stage2", json::object()), cfg.stage2);
  cfg.stage1_hidden =
      j.value("stage1_hidden", std::vector<std::size_t>{64, 64});
  cfg.stage2_hidden =
      j.value("stage2_hidden", std::vector<std::size_t>{64, 64, 64});
  cfg.kappa = j.value("kappa", std::size_t{5});
  cfg.n_eval = j.value("n_eval", std::size_t{2000});
  if (cfg.kappa < 1) throw ConfigError("config: field \"kappa\" must be >= 1");
  const std::size_t n_train = j.value("n_train", std::size_t{2000});
  const std::uint64_t seed = j.value("seed", std::uint64_t{0});

  const auto dir = prepare_out(out);
  Tensor data = make_manifold_dataset(spec, n_train, seed);
  Tensor holdout = make_manifold_dataset(spec, cfg.n_eval, seed + 1);
  PipelineResult result = run_pipeline(data, cfg, seed, &spec, &holdout);

  std::ostringstream csv;
  csv << "stage,epoch,neg_elbo,recon_mse,kl,log_gamma\n";
  append_trace(csv, 1, result.trace_stage1);
  append_trace(csv, 2, result.trace_stage2);
  write_text(dir / "traces.csv", csv.str());
  write_text(dir / "report.json", result.report.to_json());
  checkpoint_save(result.model.stage1, (dir / "stage1.ckpt").string());
  checkpoint_save(result.model.stage2, (dir / "stage2.ckpt").string());

  if (result.report.failed || result.trace_stage1.diverged ||
      result.trace_stage2.diverged) {
    std::fprintf(stderr, "two-stage: numerical failure (%s)\n",
                 result.report.failure_message.c_str());
    return kExitNumerical;
  }
  return kExitOk;
}

int cmd_oracle_theorem1(const std::string& config_path,
                        const std::string& out) {
  const json j = load_config(config_path);
  if (!j.contains("density"))
    throw ConfigError("config: missing field \"density\"");
  const std::string name = j["density"].get<std::string>();
  Density1D density;
  try {
    density = density_preset(name);
  } catch (const std::invalid_argument&) {
    throw ConfigError("config: unknown value for field \"density\": " + name);
  }
  const std::vector<double> gammas =
      j.value("gammas", std::vector<double>{1e-2, 1e-3, 1e-4});
  const std::size_t ks_n = j.value("ks_samples", std::size_t{100000});
  const std::uint64_t seed = j.value("seed", std::uint64_t{0});

  const auto dir = prepare_out(out);
  CdfTable table = build_cdf(density);
  json rows = json::array();
  for (double gamma : gammas) {
    if (!(gamma > 0.0))
      throw ConfigError("config: field \"gammas\" entries must be > 0");
    DensityCurve curve = theorem1_density(table, gamma);
    rows.push_back({{"gamma", gamma},
                    {"tv", tv_distance(curve, table)},
                    {"posterior_kl", theorem1_posterior_kl(table, gamma)},
                    {"density_integral", curve_integral(curve)}});
  }
  json report = {{"density", name},
                 {"rows", rows},
                 {"ks_statistic", ks_statistic_pushforward(table, ks_n, seed)},
                 {"ks_samples", ks_n}};
  write_text(dir / "oracle_report.json", report.dump(2) + "\n");
  return kExitOk;
}

int cmd_kappa_sweep(const std::string& config_path, const std::string& out) {
  const json j = load_config(config_path);
  ManifoldSpec spec = parse_preset(j);
  const std::vector<std::size_t> kappas =
      j.value("kappas", std::vector<std::size_t>{1, 2, 4, 8, 16});
  if (kappas.empty())
    throw ConfigError("config: field \"kappas\" must be nonempty");
  const std::size_t n_train = j.value("n_train", std::size_t{2000});
  const std::uint64_t seed = j.value("seed", std::uint64_t{0});

  PipelineConfig base;
  base.stage1 = parse_train(j.value("stage1", json::object()), base.stage1);
  base.stage2 = parse_train(j.value("stage2", json::object()), base.stage2);
  base.stage1_hidden =
      j.value("stage1_hidden", std::vector<std::size_t>{64, 64});
  base.stage2_hidden =
      j.value("stage2_hidden", std::vector<std::size_t>{64, 64, 64});
  base.n_eval = j.value("n_eval", std::size_t{2000});

  const auto dir = prepare_out(out);
  Tensor data = make_manifold_dataset(spec, n_train, seed);
  Tensor holdout = make_manifold_dataset(spec, base.n_eval, seed + 1);

  std::ostringstream csv;
  csv << "kappa,recon_mse,active_dim_estimate,energy_distance_1stage,"
         "energy_distance_2stage\n";
  bool any_failure = false;
  for (std::size_t kappa : kappas) {
    if (kappa < 1)
      throw ConfigError("config: field \"kappas\" entries must be >= 1");
    PipelineConfig cfg = base;
    cfg.kappa = kappa;
    PipelineResult r = run_pipeline(data, cfg, seed, &spec, &holdout);
    any_failure = any_failure || r.report.failed;
    csv << kappa << ',' << format_double(r.report.recon_mse) << ','
        << r.report.active_dim_estimate << ','
        << format_double(r.report.sample_energy_distance_1stage) << ','
        << format_double(r.report.sample_energy_distance_2stage) << '\n';
  }
  write_text(dir / "sweep.csv", csv.str());
  return any_failure ? kExitNumerical : kExitOk;
}

int cmd_diagnose(const std::string& ckpt_path, const std::string& preset,
                 std::size_t n, std::uint64_t seed, const std::string& out) {
  VaeModel model;
  try {
    model = checkpoint_load(ckpt_path);
  } catch (const std::runtime_error& e) {
    throw ConfigError(std::string("checkpoint: ") + e.what());
  }
  ManifoldSpec spec;
  try {
    spec = manifold_preset(preset);
  } catch (const std::invalid_argument&) {
    throw ConfigError("unknown value for option --preset: " + preset);
  }
  if (spec.ambient_dim != model.ambient_dim)
    throw ConfigError("checkpoint ambient dim " +
                      std::to_string(model.ambient_dim) +
                      " does not match preset \"" + preset + "\"");

  const auto dir = prepare_out(out);
  Tensor data = make_manifold_dataset(spec, n, seed);
  PosteriorEigHistogram hist = posterior_eig_histogram(model, data);
  EncodeResult enc = encode(model, data);
  Tensor recon = decode(model, enc.mu);
  double mse = 0.0;
  for (std::size_t i = 0; i < data.numel(); ++i) {
    const double r = recon.data[i] - data.data[i];
    mse += r * r;
  }
  mse /= static_cast<double>(data.numel());
  Tensor samples = sample_ancestral(model, n, seed + 1);

  json report = {
      {"checkpoint", ckpt_path},
      {"preset", preset},
      {"kappa", model.kappa},
      {"ambient_dim", model.ambient_dim},
      {"log_gamma", model.log_gamma.data[0]},
      {"recon_mse", mse},
      {"posterior_mean_variance", hist.mean_variance},
      {"posterior_eig_histogram", hist.bins},
      {"active_dim_estimate", hist.active_dim_estimate},
      {"singular_spectrum", singular_spectrum(enc.mu)},
      {"sample_energy_distance", energy_distance(samples, data)}};
  write_text(dir / "report.json", report.dump(2) + "\n");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-stage VAE experiment harness"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", ckpt_path, preset = "tanh-embed-2-10";
  std::size_t diag_n = 2000;
  std::uint64_t diag_seed = 0;

  auto* two_stage = app.add_subcommand("two-stage", "train the full pipeline");
  two_stage->add_option("--config", config_path, "JSON config")->required();
  two_stage->add_option("--out", out_dir, "output directory");

  auto* oracle = app.add_subcommand("oracle-theorem1",
                                    "analytic construction oracle");
  oracle->add_option("--config", config_path, "JSON config")->required();
  oracle->add_option("--out", out_dir, "output directory");

  auto* sweep = app.add_subcommand("kappa-sweep", "latent dimension sweep");
  sweep->add_option("--config", config_path, "JSON config")->required();
  sweep->add_option("--out", out_dir, "output directory");

  auto* diagnose = app.add_subcommand("diagnose", "inspect a checkpoint");
  diagnose->add_option("checkpoint", ckpt_path, "checkpoint file")->required();
  diagnose->add_option("--preset", preset, "manifold preset for probe data");
  diagnose->add_option("--n", diag_n, "probe dataset size");
  diagnose->add_option("--seed", diag_seed, "probe seed");
  diagnose->add_option("--out", out_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (two_stage->parsed()) return cmd_two_stage(config_path, out_dir);
    if (oracle->parsed()) return cmd_oracle_theorem1(config_path, out_dir);
    if (sweep->parsed()) return cmd_kappa_sweep(config_path, out_dir);
    if (diagnose->parsed())
      return cmd_diagnose(ckpt_path, preset, diag_n, diag_seed, out_dir);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumerical;
  }
  return kExitConfig;
}
