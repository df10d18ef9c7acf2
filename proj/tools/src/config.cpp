#include "jumpsae_cli/config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace jumpsae::cli {

const std::vector<KeySpec>& config_keys() {
  static const std::vector<KeySpec> keys = {
      {"seed", "0", "master seed for every random stream"},
      // synthetic task
      {"n", "64", "input dimension of the synthetic task"},
      {"num_features", "256", "ground-truth dictionary size M*"},
      {"expected_l0", "20", "expected number of active ground-truth features"},
      {"noise_std", "0.01", "isotropic Gaussian noise added to synthetic inputs"},
      {"magnitude_mean", "1.0", "mean of active feature magnitudes"},
      {"magnitude_std", "0.5", "std of active feature magnitudes (clipped at 0)"},
      {"calibration_size", "20000", "samples used to fit the normaliser"},
      {"count", "100000", "rows written by datagen"},
      {"data_out", "activations.act1", "datagen output (ground truth goes to <data_out>.gt.json)"},
      {"data_in", "", "ACT1 file to train/evaluate on instead of the synthetic task"},
      {"gt_in", "", "ground-truth sidecar for recovery scores on data_in"},
      // model and loss
      {"arch", "jumprelu", "relu | jumprelu | gated | gated_ril1 | topk"},
      {"loss", "", "loss kind; empty picks the architecture's default"},
      {"lambda", "0.01", "sparsity coefficient"},
      {"l0_target", "20", "target L0 for the target_l0 loss"},
      {"k", "20", "active features per example for topk"},
      {"k_aux", "512", "AuxK features for topk"},
      {"aux_alpha", "0.03125", "AuxK coefficient"},
      {"bandwidth", "0.001", "KDE bandwidth epsilon of the threshold pseudo-derivatives"},
      {"kernel", "rectangle", "rectangle | triangular | gaussian | epanechnikov"},
      {"pre_enc_bias", "true", "subtract b_dec before the encoder"},
      {"width", "256", "SAE width M"},
      {"theta_init", "0.001", "initial JumpReLU threshold"},
      {"gated_ril1_decoder_norm", "0.1", "initial decoder column norm for gated_ril1"},
      // optimisation
      {"steps", "1000", "training steps"},
      {"batch_size", "4096", "examples per step"},
      {"lr", "7e-5", "Adam learning rate after warmup"},
      {"lr_warmup_steps", "1000", "cosine learning-rate warmup length"},
      {"lambda_warmup_steps", "10000", "linear lambda warmup length (ignored for topk)"},
      {"adam_beta1", "0", "Adam beta1"},
      {"adam_beta2", "0.999", "Adam beta2"},
      {"adam_eps", "1e-8", "Adam epsilon"},
      {"resample", "false", "periodically re-initialise dead features"},
      {"resample_every", "2000", "steps between resampling passes"},
      {"dead_window", "1000", "batches without firing before a feature counts as dead in training"},
      // evaluation and outputs
      {"eval_every", "500", "metrics-log cadence in steps"},
      {"eval_size", "10000", "eval examples behind each metrics-log record"},
      {"final_eval_size", "1000000", "eval examples for eval and sweep reports"},
      {"eval_chunk", "10000", "batch size used while streaming evaluation"},
      {"probe", "true", "score r_L0 against a random linear probe"},
      {"checkpoint_out", "sae.ckpt", "checkpoint written by train"},
      {"log_out", "metrics.jsonl", "JSON-lines metrics log written by train"},
      {"checkpoint_in", "sae.ckpt", "checkpoint read by eval"},
      {"report_out", "report.json", "JSON report written by eval and verify"},
      // sweep
      {"axis", "lambda", "sweep axis: lambda | k | l0_target"},
      {"values", "", "comma-separated sweep values"},
      {"csv_out", "sweep.csv", "pareto CSV written by sweep"},
      // verify
      {"verify_large_n", "1000000", "Monte-Carlo sample size for the consistency checks"},
      {"verify_replicates", "200", "replicates in the variance check"},
  };
  return keys;
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, const std::string& value, std::string_view want) {
  throw ConfigError("key '" + std::string(key) + "': expected " + std::string(want) + ", got '" +
                    value + "'");
}

double parse_double(std::string_view key, const std::string& s) {
  double v = 0.0;
  const auto t = trim(s);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) bad_value(key, s, "a number");
  return v;
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& k : config_keys()) values_.emplace(std::string(k.name), std::string(k.default_value));
}

void RunConfig::set(std::string_view key, std::string value) {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  it->second = std::move(value);
}

void RunConfig::load_text(std::string_view text, std::string_view origin) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::set<std::string, std::less<>> seen;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    std::string_view body = line;
    if (const auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
    body = trim(body);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = std::string(origin) + ":" + std::to_string(lineno);
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key(trim(body.substr(0, eq)));
    if (!values_.contains(key)) throw ConfigError(where + ": unknown config key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + ": key '" + key + "' set twice");
    set(key, std::string(trim(body.substr(eq + 1))));
  }
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  load_text(text.str(), path);
}

const std::string& RunConfig::str(std::string_view key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw std::logic_error("no config key '" + std::string(key) + "'");
  return it->second;
}

double RunConfig::number(std::string_view key) const { return parse_double(key, str(key)); }

std::uint64_t RunConfig::u64(std::string_view key) const {
  const std::string& s = str(key);
  const auto t = trim(s);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    bad_value(key, s, "a non-negative integer");
  }
  return v;
}

std::size_t RunConfig::count(std::string_view key) const { return static_cast<std::size_t>(u64(key)); }

bool RunConfig::flag(std::string_view key) const {
  const std::string& s = str(key);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  bad_value(key, s, "true or false");
}

std::vector<double> RunConfig::numbers(std::string_view key) const {
  std::vector<double> out;
  const std::string& s = str(key);
  std::string_view rest = s;
  while (!trim(rest).empty()) {
    const auto comma = rest.find(',');
    const std::string item(trim(rest.substr(0, comma)));
    if (item.empty()) bad_value(key, s, "a comma-separated list of numbers");
    out.push_back(parse_double(key, item));
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return out;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : values_) j[k] = v;
  return j;
}

TrainConfig train_config(const RunConfig& cfg) {
  TrainConfig t;
  try {
    t.arch = parse_arch(cfg.str("arch"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("key 'arch': " + std::string(e.what()));
  }
  try {
    t.loss.kind = cfg.str("loss").empty() ? default_loss_for(t.arch) : parse_loss_kind(cfg.str("loss"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("key 'loss': " + std::string(e.what()));
  }
  try {
    t.loss.kernel = parse_kernel(cfg.str("kernel"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("key 'kernel': " + std::string(e.what()));
  }
  try {
    t.loss.bandwidth = Bandwidth(cfg.number("bandwidth"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("key 'bandwidth': " + std::string(e.what()));
  }
  t.loss.lambda = cfg.number("lambda");
  if (!(t.loss.lambda >= 0.0)) throw ConfigError("key 'lambda': must be >= 0");
  t.loss.l0_target = cfg.number("l0_target");
  if (t.loss.kind == LossKind::TargetL0 && !(t.loss.l0_target > 0.0)) {
    throw ConfigError("key 'l0_target': must be > 0");
  }
  t.loss.k_aux = cfg.count("k_aux");
  t.loss.aux_alpha = cfg.number("aux_alpha");
  t.loss.use_pre_enc_bias = cfg.flag("pre_enc_bias");
  t.width = cfg.count("width");
  t.k = t.arch == Arch::TopK ? cfg.count("k") : 0;
  t.steps = cfg.count("steps");
  t.schedule.base_lr = cfg.number("lr");
  t.schedule.batch_size = cfg.count("batch_size");
  t.schedule.lr_warmup_steps = cfg.count("lr_warmup_steps");
  t.schedule.lambda_warmup_steps = cfg.count("lambda_warmup_steps");
  t.adam.beta1 = cfg.number("adam_beta1");
  t.adam.beta2 = cfg.number("adam_beta2");
  t.adam.epsilon = cfg.number("adam_eps");
  if (!(t.adam.beta1 >= 0.0 && t.adam.beta1 < 1.0)) throw ConfigError("key 'adam_beta1': must lie in [0, 1)");
  if (!(t.adam.beta2 >= 0.0 && t.adam.beta2 < 1.0)) throw ConfigError("key 'adam_beta2': must lie in [0, 1)");
  if (!(t.adam.epsilon > 0.0)) throw ConfigError("key 'adam_eps': must be > 0");
  t.theta_init = cfg.number("theta_init");
  t.gated_ril1_decoder_norm = cfg.number("gated_ril1_decoder_norm");
  t.resample = cfg.flag("resample");
  t.resample_every = cfg.count("resample_every");
  t.dead_window = cfg.count("dead_window");
  t.eval_every = cfg.count("eval_every");
  t.seed = cfg.u64("seed");
  try {
    check_config(t);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return t;
}

void require_writable(const RunConfig& cfg, std::string_view key) {
  namespace fs = std::filesystem;
  const std::string& path = cfg.str(key);
  if (path.empty()) throw ConfigError("key '" + std::string(key) + "': path is empty");
  const fs::path p(path);
  const fs::path dir = p.has_parent_path() ? p.parent_path() : fs::path(".");
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) {
    throw ConfigError("key '" + std::string(key) + "': directory '" + dir.string() +
                      "' does not exist");
  }
  if (fs::is_directory(p, ec)) {
    throw ConfigError("key '" + std::string(key) + "': '" + path + "' is a directory");
  }
}

}  // namespace jumpsae::cli
