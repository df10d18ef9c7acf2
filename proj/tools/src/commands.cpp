#include "jumpsae_cli/commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "jumpsae/grad_verify.hpp"

namespace jumpsae::cli {

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

nlohmann::json provenance(const RunConfig& cfg, std::string_view command) {
  return nlohmann::json{{"command", command}, {"seed", cfg.u64("seed")}, {"config", cfg.to_json()}};
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

ActivationBatch leading_rows(const Matrix& data, std::size_t count, const NormStats& norm) {
  const std::size_t take = std::min(count, data.rows());
  ActivationBatch b;
  b.x = Matrix(take, data.cols());
  for (std::size_t s = 0; s < take; ++s) {
    auto src = data.row(s);
    std::copy(src.begin(), src.end(), b.x.row(s).begin());
  }
  norm.apply_in_place(b);
  return b;
}

}  // namespace

Dataset::Dataset(const RunConfig& cfg) : cfg_(cfg), seed_(cfg.u64("seed")) {
  const std::size_t calibration = cfg.count("calibration_size");
  if (calibration == 0) throw ConfigError("key 'calibration_size': must be >= 1");
  const std::string& data_in = cfg.str("data_in");
  if (data_in.empty()) {
    GroundTruth gt;
    try {
      RngStream rng(seed_, StreamId::GroundTruth);
      gt = make_ground_truth(cfg.count("n"), cfg.count("num_features"), cfg.number("expected_l0"),
                             cfg.number("noise_std"), rng);
      gt.magnitude_mean = cfg.number("magnitude_mean");
      gt.magnitude_std = cfg.number("magnitude_std");
      if (!(gt.magnitude_std >= 0.0)) throw std::invalid_argument("magnitude_std must be >= 0");
      check_ground_truth(gt);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("synthetic task: ") + e.what());
    }
    RngStream cal(seed_, StreamId::Calibration);
    norm_ = fit_normalizer(generate(gt, calibration, cal).batch);
    dim_ = gt.input_dim();
    gt_ = std::move(gt);
  } else {
    rows_ = load_activations(data_in);
    dim_ = rows_->cols();
    norm_ = fit_normalizer(leading_rows(*rows_, calibration, NormStats{}));
    if (!cfg.str("gt_in").empty()) {
      std::ifstream in(cfg.str("gt_in"));
      if (!in) throw ConfigError("key 'gt_in': cannot read '" + cfg.str("gt_in") + "'");
      const nlohmann::json j = nlohmann::json::parse(in);
      gt_ = ground_truth_from_json(j.at("ground_truth"));
      if (gt_->input_dim() != dim_) {
        throw ConfigError("key 'gt_in': ground-truth dimension does not match data_in");
      }
    }
  }
}

std::unique_ptr<BatchSource> Dataset::training_stream() const {
  if (rows_) return std::make_unique<MatrixSource>(*rows_, norm_);
  return std::make_unique<SyntheticSource>(*gt_, RngStream(seed_, StreamId::TrainData), norm_);
}

ActivationBatch Dataset::log_eval_set() const {
  const std::size_t count = cfg_.count("eval_size");
  if (count == 0) throw ConfigError("key 'eval_size': must be >= 1");
  if (rows_) return leading_rows(*rows_, count, norm_);
  RngStream rng = RngStream(seed_, StreamId::EvalData).substream(1);
  ActivationBatch b = generate(*gt_, count, rng).batch;
  norm_.apply_in_place(b);
  return b;
}

EvalReport Dataset::final_eval(const SaeParams& params) const {
  if (params.input_dim() != dim_) {
    throw std::runtime_error("checkpoint input dimension " + std::to_string(params.input_dim()) +
                             " does not match data dimension " + std::to_string(dim_));
  }
  EvalOptions opts;
  opts.use_pre_enc_bias = cfg_.flag("pre_enc_bias");
  if (cfg_.flag("probe")) {
    RngStream rng(seed_, StreamId::Probe);
    opts.probe.resize(dim_);
    for (double& v : opts.probe) v = rng.normal();
  }
  if (gt_) opts.dictionary = gt_->dictionary;
  const std::size_t chunk = cfg_.count("eval_chunk");
  if (chunk == 0) throw ConfigError("key 'eval_chunk': must be >= 1");
  if (rows_) {
    MatrixSource src(*rows_, norm_);
    return evaluate(params, src, rows_->rows(), chunk, opts);
  }
  const std::size_t total = cfg_.count("final_eval_size");
  if (total == 0) throw ConfigError("key 'final_eval_size': must be >= 1");
  SyntheticSource src(*gt_, RngStream(seed_, StreamId::EvalData), norm_);
  return evaluate(params, src, total, chunk, opts);
}

int cmd_datagen(const RunConfig& cfg) {
  if (!cfg.str("data_in").empty()) {
    throw ConfigError("key 'data_in': datagen only produces synthetic data; leave it empty");
  }
  require_writable(cfg, "data_out");
  const std::size_t count = cfg.count("count");
  if (count == 0) throw ConfigError("key 'count': must be >= 1");
  const Dataset ds(cfg);
  RngStream rng(cfg.u64("seed"), StreamId::TrainData);
  const SyntheticBatch data = generate(*ds.ground_truth(), count, rng);
  save_activations(cfg.str("data_out"), data.batch.x);
  nlohmann::json sidecar = provenance(cfg, "datagen");
  sidecar["ground_truth"] = to_json(*ds.ground_truth());
  sidecar["rows"] = count;
  write_text(cfg.str("data_out") + ".gt.json", sidecar.dump(1) + "\n");
  std::cout << "wrote " << count << " x " << ds.dim() << " activations to " << cfg.str("data_out")
            << "\n";
  return kExitOk;
}

int cmd_train(const RunConfig& cfg) {
  require_writable(cfg, "checkpoint_out");
  require_writable(cfg, "log_out");
  const TrainConfig tc = train_config(cfg);
  const Dataset ds(cfg);
  const ActivationBatch eval_set = ds.log_eval_set();
  auto source = ds.training_stream();

  nlohmann::json sidecar = provenance(cfg, "train");
  sidecar["input_dim"] = ds.dim();
  sidecar["norm_scale"] = ds.norm().scale;
  try {
    const TrainResult r = train(tc, *source, eval_set);
    save_checkpoint(cfg.str("checkpoint_out"), r.params);
    write_text(cfg.str("log_out"), metrics_log_text(r.log));
    sidecar["decoder_redraws"] = r.decoder_redraws;
    sidecar["resampled_features"] = r.resampled_features;
    if (!r.log.empty()) sidecar["final"] = to_json(r.log.back());
    write_text(cfg.str("checkpoint_out") + ".json", sidecar.dump(1) + "\n");
    if (!r.log.empty()) std::cout << to_json(r.log.back()).dump() << "\n";
  } catch (const TrainingDiverged& e) {
    save_checkpoint(cfg.str("checkpoint_out"), e.last_good());
    sidecar["diverged_at_step"] = e.step();
    sidecar["error"] = e.what();
    write_text(cfg.str("checkpoint_out") + ".json", sidecar.dump(1) + "\n");
    throw std::runtime_error(std::string("training diverged: ") + e.what() +
                             " (last good parameters saved)");
  }
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg) {
  require_writable(cfg, "report_out");
  const SaeParams params = load_checkpoint(cfg.str("checkpoint_in"));
  const Dataset ds(cfg);
  const EvalReport report = ds.final_eval(params);
  nlohmann::json j = to_json(report);
  j["provenance"] = provenance(cfg, "eval");
  j["checkpoint"] = cfg.str("checkpoint_in");
  j["arch"] = to_string(params.arch);
  write_text(cfg.str("report_out"), j.dump(1) + "\n");
  std::cout << "mean_l0 " << format_number(report.mean_l0) << "  fvu " << format_number(report.fvu)
            << "  dead_frac " << format_number(report.dead_frac) << "\n";
  return kExitOk;
}

std::vector<SweepRow> run_sweep(const RunConfig& cfg, std::ostream* progress) {
  const std::string& axis = cfg.str("axis");
  if (axis != "lambda" && axis != "k" && axis != "l0_target") {
    throw ConfigError("key 'axis': expected lambda, k or l0_target, got '" + axis + "'");
  }
  const std::vector<double> values = cfg.numbers("values");
  if (values.empty()) throw ConfigError("key 'values': a sweep needs at least one value");

  std::vector<SweepRow> rows;
  for (double v : values) {
    RunConfig point = cfg;
    if (axis == "k") {
      if (!(v >= 1.0) || v != std::floor(v)) throw ConfigError("key 'values': k must be a positive integer");
      point.set("k", std::to_string(static_cast<std::size_t>(v)));
    } else {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      point.set(axis, buf);
      if (axis == "l0_target" && point.str("loss").empty()) point.set("loss", "target_l0");
    }
    const TrainConfig tc = train_config(point);
    if (axis == "k" && tc.arch != Arch::TopK) throw ConfigError("key 'axis': k sweeps need arch = topk");
    const Dataset ds(point);
    auto source = ds.training_stream();
    const TrainResult r = train(tc, *source, ds.log_eval_set());
    SweepRow row{std::string(to_string(tc.arch)), v, ds.final_eval(r.params)};
    if (progress != nullptr) {
      *progress << row.arch << " " << axis << "=" << format_number(v) << " mean_l0 "
                << format_number(row.report.mean_l0) << " fvu " << format_number(row.report.fvu)
                << " dead_frac " << format_number(row.report.dead_frac) << "\n";
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string sweep_csv_header() {
  return "arch,lambda_or_K,mean_l0,fvu,dead_frac,hf10,hf1,r_l0_mean,recovery\n";
}

std::string sweep_csv_rows(const std::vector<SweepRow>& rows) {
  std::string out;
  for (const auto& r : rows) {
    const EvalReport& e = r.report;
    out += r.arch + "," + format_number(r.axis_value) + "," + format_number(e.mean_l0) + "," +
           format_number(e.fvu) + "," + format_number(e.dead_frac) + "," +
           format_number(e.high_freq_frac_10pct) + "," + format_number(e.high_freq_frac_1pct) + "," +
           (e.r_l0_mean ? format_number(*e.r_l0_mean) : "") + "," +
           (e.recovery ? format_number(*e.recovery) : "") + "\n";
  }
  return out;
}

int cmd_sweep(const RunConfig& cfg) {
  require_writable(cfg, "csv_out");
  const std::vector<SweepRow> rows = run_sweep(cfg, &std::cerr);
  write_text(cfg.str("csv_out"), sweep_csv_header() + sweep_csv_rows(rows));
  write_text(cfg.str("csv_out") + ".json", provenance(cfg, "sweep").dump(1) + "\n");
  std::cout << "wrote " << rows.size() << " rows to " << cfg.str("csv_out") << "\n";
  return kExitOk;
}

int cmd_verify(const RunConfig& cfg) {
  require_writable(cfg, "report_out");
  VerifyOptions opts;
  opts.seed = cfg.u64("seed");
  opts.large_n = cfg.count("verify_large_n");
  opts.variance_replicates = cfg.count("verify_replicates");
  if (opts.large_n < 1000) throw ConfigError("key 'verify_large_n': must be >= 1000");
  if (opts.variance_replicates < 2) throw ConfigError("key 'verify_replicates': must be >= 2");
  const std::vector<CheckResult> results = run_verification(opts);
  nlohmann::json j = to_json(results);
  j["provenance"] = provenance(cfg, "verify");
  write_text(cfg.str("report_out"), j.dump(1) + "\n");
  bool ok = true;
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << "  measured " << format_number(r.measured)
              << "  tolerance " << format_number(r.tolerance) << "\n";
    ok = ok && r.passed;
  }
  return ok ? kExitOk : kExitVerifyFailed;
}

}  // namespace jumpsae::cli
