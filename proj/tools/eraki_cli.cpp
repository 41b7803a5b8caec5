// eraki command-line driver: phantom, mask, maps, recon, metrics, fit, bench.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "eraki/bench.hpp"
#include "eraki/bundle.hpp"
#include "eraki/config.hpp"
#include "eraki/espirit.hpp"
#include "eraki/hash.hpp"
#include "eraki/parallel.hpp"
#include "eraki/quantmap.hpp"
#include "eraki/recon.hpp"

#ifndef ERAKI_VERSION
#define ERAKI_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace eraki;

namespace {

// Flags shared by the commands that read a run configuration.
struct Common {
  std::string config;
  std::vector<std::string> sets;
  long long seed = -1;
};

struct Manifest {
  explicit Manifest(std::string cmd) : command(std::move(cmd)) {}
  std::string command;
  json config;
  json inputs = json::object();
  std::vector<std::string> outputs;
};

void log(const std::string& msg) { std::cerr << "eraki: " << msg << "\n"; }

json read_json_file(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw ConfigError("cannot open " + p.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(p.string() + ": " + e.what());
  }
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
  if (!f) throw DataError("cannot write " + p.string());
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

// `--set a.b=value`: value is parsed as JSON, falling back to a plain string.
void apply_set(json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key.path=value, got \"" + assignment + "\"");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &cfg;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    json& next = (*node)[parts[i]];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) throw ConfigError("--set " + path + ": " + parts[i] + " is not a section");
    node = &next;
  }
  (*node)[parts.back()] = value;
}

// Defaults, then the file, then flags.
RunConfig load_config(const Common& c, json* raw_out = nullptr) {
  json raw = c.config.empty() ? json::object() : read_json_file(c.config);
  if (!raw.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& s : c.sets) apply_set(raw, s);
  if (c.seed >= 0) raw["seed"] = c.seed;
  // Only a config file must name its seed; bare flag runs use 0.
  if (c.config.empty() && !raw.contains("seed")) raw["seed"] = 0;
  if (raw_out) *raw_out = raw;
  return run_config_from_json(raw);
}

void add_common(CLI::App* cmd, Common& c, bool config_required) {
  auto* opt = cmd->add_option("--config", c.config, "JSON run configuration")->check(CLI::ExistingFile);
  if (config_required) opt->required();
  cmd->add_option("--set", c.sets, "override a config field, key.path=value (repeatable)");
  cmd->add_option("--seed", c.seed, "override the config seed");
}

// A bundle argument is either a stem (`dir/name`) or a directory holding
// `<fallback>.json`.
fs::path resolve_bundle(const std::string& arg, const std::string& fallback) {
  const fs::path p(arg);
  if (fs::is_directory(p) && fs::exists(bundle_header_path(p / fallback))) return p / fallback;
  if (p.extension() == ".json" || p.extension() == ".bin") return fs::path(p).replace_extension();
  return p;
}

void record_input(Manifest& m, const std::string& name, const fs::path& stem) {
  m.inputs[name] = {{"path", stem.string()},
                    {"header_sha256", sha256_file(bundle_header_path(stem))},
                    {"payload_sha256", sha256_file(bundle_payload_path(stem))}};
}

Bundle load_input(Manifest& m, const std::string& name, const std::string& arg, const std::string& fallback) {
  const fs::path stem = resolve_bundle(arg, fallback);
  Bundle b = read_bundle(stem);
  record_input(m, name, stem);
  return b;
}

void prepare_out(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw DataError("cannot create output directory " + out.string());
}

void save(Manifest& m, const fs::path& out, const std::string& name, const CTensor& x, const json& meta = json::object()) {
  save_bundle(x, out / name, meta);
  m.outputs.push_back(name);
}

void finish(const Manifest& m, const fs::path& out, const Common& c) {
  json j = {{"tool", "eraki"},
            {"version", ERAKI_VERSION},
            {"command", m.command},
            {"seed", m.config.is_object() && m.config.contains("seed") ? m.config["seed"] : json(nullptr)},
            {"threads", thread_count()},
            {"config", m.config},
            {"inputs", m.inputs},
            {"outputs", m.outputs}};
  if (!c.config.empty()) j["config_file"] = {{"path", c.config}, {"sha256", sha256_file(c.config)}};
  if (!c.sets.empty()) j["overrides"] = c.sets;
  write_json(out / "manifest.json", j);
  log("wrote " + (out / "manifest.json").string());
}

// Pattern extents of the configured phantom, for masks made without data.
std::array<std::size_t, 2> phantom_pattern_extents(const RunConfig& cfg) {
  std::array<std::size_t, 2> e{};
  for (int i = 0; i < 2; ++i) {
    switch (cfg.mask.axes[i]) {
      case Axis::kx: e[i] = cfg.phantom.extents[0]; break;
      case Axis::ky: e[i] = cfg.phantom.extents[1]; break;
      case Axis::kz: e[i] = cfg.phantom.extents[2]; break;
      case Axis::echo:
      case Axis::t: e[i] = cfg.phantom.te_ms.size(); break;
      default: throw ConfigError("mask.axes: unsupported axis " + std::string(axis_name(cfg.mask.axes[i])));
    }
  }
  return e;
}

std::array<std::size_t, 2> data_pattern_extents(const CTensor& k, const std::array<Axis, 2>& axes) {
  for (Axis a : axes)
    if (!k.has_axis(a)) throw DataError("data lack the mask axis " + std::string(axis_name(a)));
  return {k.extent(axes[0]), k.extent(axes[1])};
}

SamplingMask load_mask(Manifest& m, const std::string& arg) {
  const Bundle b = load_input(m, "mask", arg, "mask");
  if (!b.meta.contains("descriptor")) throw DataError("mask bundle lacks a descriptor");
  return SamplingMask::from_descriptor(b.meta["descriptor"], &b.tensor);
}

std::vector<Axis> calibration_axes(const CTensor& acs, const std::array<Axis, 2>& mask_axes) {
  std::vector<Axis> cal;
  for (Axis a : mask_axes)
    if ((a == Axis::kx || a == Axis::ky || a == Axis::kz) && acs.has_axis(a)) cal.push_back(a);
  if (cal.empty()) throw DataError("no spatial calibration axes in the ACS data");
  return cal;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--te: cannot parse \"" + item + "\"");
    }
  }
  return out;
}

int cmd_phantom(const Common& c, const fs::path& out) {
  Manifest m("phantom");
  const RunConfig cfg = load_config(c);
  m.config = to_json(cfg);
  prepare_out(out);
  log("simulating phantom");
  const Phantom ph = build_phantom(cfg);
  const json meta = {{"te_ms", cfg.phantom.te_ms}, {"echo_type", m.config["phantom"]["echo_type"]}};
  save(m, out, "kspace", ph.kspace, meta);
  save(m, out, "images", ph.images, meta);
  save(m, out, "combined", ph.combined, meta);
  save(m, out, "sens_true", ph.sens_true);
  save(m, out, "t2_true", ph.t2_true);
  save(m, out, "t2star_true", ph.t2star_true);
  save(m, out, "support", ph.support);
  finish(m, out, c);
  return 0;
}

int cmd_mask(const Common& c, const std::string& data_arg, const fs::path& out) {
  Manifest m("mask");
  const RunConfig cfg = load_config(c);
  m.config = to_json(cfg);
  std::optional<Bundle> data;
  if (!data_arg.empty()) data = load_input(m, "data", data_arg, "kspace");
  const auto ext = data ? data_pattern_extents(data->tensor, cfg.mask.axes) : phantom_pattern_extents(cfg);
  const SamplingMask mask = build_mask(cfg.mask, ext);
  prepare_out(out);
  const json d = mask.descriptor();
  save(m, out, "mask", mask.to_tensor(), {{"descriptor", d}});
  const json summary = {{"descriptor", d},
                        {"sampled", mask.sampled_count()},
                        {"acquirable", mask.acquirable_count()},
                        {"net_acceleration", net_acceleration(mask)}};
  write_json(out / "descriptor.json", summary);
  m.outputs.push_back("descriptor.json");
  if (data) {
    save(m, out, "masked", apply_mask(data->tensor, mask), data->meta);
    if (!mask.acs().empty()) save(m, out, "acs", extract_acs(data->tensor, mask), data->meta);
  }
  log("mask " + std::to_string(mask.sampled_count()) + "/" + std::to_string(mask.total()) + " sampled");
  finish(m, out, c);
  return 0;
}

int cmd_maps(const Common& c, const std::string& acs_arg, const std::string& data_arg, const std::string& mask_arg,
             bool full_res, const fs::path& out) {
  Manifest m("maps");
  const RunConfig cfg = load_config(c);
  m.config = to_json(cfg);
  CTensor acs;
  ExtentMap ext;
  std::array<Axis, 2> axes = cfg.mask.axes;
  if (!acs_arg.empty()) {
    if (full_res) throw ConfigError("--full-res needs --data and --mask");
    acs = load_input(m, "acs", acs_arg, "acs").tensor;
  } else {
    if (data_arg.empty() || mask_arg.empty()) throw ConfigError("maps needs --acs, or --data with --mask");
    const CTensor k = load_input(m, "data", data_arg, "kspace").tensor;
    const SamplingMask mask = load_mask(m, mask_arg);
    axes = mask.axes();
    acs = extract_acs(k, mask);
    if (full_res || cfg.recon.full_res_maps)
      for (Axis a : spatial_axes(k)) ext[a] = k.extent(a);
  }
  prepare_out(out);
  log("estimating coil maps");
  const SensitivityMaps s = espirit_maps(acs, calibration_axes(acs, axes), cfg.espirit, ext);
  save(m, out, "maps", s.maps);
  save(m, out, "eigval", s.eigval);
  finish(m, out, c);
  return 0;
}

int cmd_recon(const Common& c, std::string method, const std::string& data_arg, const std::string& mask_arg,
              const std::string& maps_arg, const fs::path& out) {
  Manifest m("recon");
  json raw;
  RunConfig cfg = load_config(c, &raw);
  if (!method.empty()) cfg.recon.method = method;
  if (std::find(std::begin(kMethods), std::end(kMethods), cfg.recon.method) == std::end(kMethods))
    throw ConfigError("recon.method: unknown method \"" + cfg.recon.method + "\"");
  m.config = to_json(cfg);
  const Bundle data = load_input(m, "data", data_arg, "kspace");
  const SamplingMask mask = load_mask(m, mask_arg);
  CTensor maps;
  if (!maps_arg.empty()) maps = load_input(m, "maps", maps_arg, "maps").tensor;
  // Masking is idempotent, so fully sampled and pre-masked data both work.
  const CTensor k = mask_for_method(data.tensor, mask, cfg.recon.method);
  log("reconstructing with " + cfg.recon.method);
  MethodOutput r = run_method(cfg.recon.method, k, mask, cfg, maps);
  prepare_out(out);
  save(m, out, "kspace", r.kspace, data.meta);
  save(m, out, "image", r.image, data.meta);
  json report = {{"method", cfg.recon.method},
                 {"models", r.models},
                 {"split_models", r.split_models},
                 {"details", r.details},
                 {"timing",
                  {{"learning_seconds", r.learn_seconds},
                   {"inference_seconds", r.infer_seconds},
                   {"maps_seconds", r.maps_seconds}}}};
  write_json(out / "report.json", report);
  m.outputs.push_back("report.json");
  finish(m, out, c);
  return 0;
}

int cmd_metrics(const std::string& recon_arg, const std::string& ref_arg, std::size_t margin, const std::string& out) {
  Manifest m("metrics");
  const CTensor img = load_input(m, "recon", recon_arg, "image").tensor;
  const CTensor ref = load_input(m, "ref", ref_arg, "combined").tensor;
  const ImageMetrics im = image_metrics(img, ref, margin);
  const json j = {{"nrmse", im.nrmse}, {"psnr", im.psnr}, {"voxels", im.voxels}, {"margin", margin},
                  {"inputs", m.inputs}};
  if (out.empty()) std::cout << j.dump(2) << "\n";
  else write_json(out, j);
  return 0;
}

int cmd_fit(const Common& c, const std::string& echoes_arg, const std::string& te_arg, double threshold,
            const fs::path& out) {
  Manifest m("fit");
  json raw = json::object();
  RunConfig cfg;
  if (!c.config.empty() || c.seed >= 0 || !c.sets.empty()) {
    cfg = load_config(c, &raw);
    m.config = to_json(cfg);
  }
  const Bundle b = load_input(m, "echoes", echoes_arg, "image");
  std::vector<double> te = te_arg.empty() ? cfg.fit.te_ms : parse_list(te_arg);
  if (te.empty() && b.meta.contains("te_ms")) te = b.meta["te_ms"].get<std::vector<double>>();
  if (te.empty()) throw ConfigError("fit.te_ms is empty; pass --te");
  if (threshold < 0) threshold = cfg.fit.threshold;
  if (m.config.is_null()) m.config = {{"fit", {{"te_ms", te}, {"threshold", threshold}}}};
  else {
    m.config["fit"]["te_ms"] = te;
    m.config["fit"]["threshold"] = threshold;
  }
  log("fitting decay over " + std::to_string(te.size()) + " echoes");
  const FitResult r = fit_decay(b.tensor, te, threshold);
  prepare_out(out);
  save(m, out, "t2", r.t2, {{"unit", "ms"}});
  save(m, out, "s0", r.s0);
  save(m, out, "r2", r.r2);
  save(m, out, "valid", r.valid);
  finish(m, out, c);
  return 0;
}

int cmd_bench(const Common& c, const fs::path& out, bool table) {
  Manifest m("bench");
  const RunConfig cfg = load_config(c);
  m.config = to_json(cfg);
  log("running benchmark");
  const json report = run_bench(cfg);
  prepare_out(out);
  write_json(out / "report.json", report);
  const std::string text = bench_table(report);
  write_text(out / "table.txt", text);
  m.outputs = {"report.json", "table.txt"};
  if (table) std::cout << text;
  finish(m, out, c);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"eRAKI reconstruction toolkit"};
  app.set_version_flag("--version", ERAKI_VERSION);
  app.require_subcommand(1);
  unsigned threads = 0;
  app.add_option("--threads", threads, "worker threads (default: ERAKI_THREADS or 1)")->check(CLI::PositiveNumber);

  Common c;
  std::string out, data, mask, maps, acs, method, recon, ref, echoes, te, metrics_out;
  bool full_res = false, table = false;
  double threshold = -1;
  std::size_t margin = 2;

  auto* phantom = app.add_subcommand("phantom", "simulate multi-coil multi-echo k-space");
  add_common(phantom, c, false);
  phantom->add_option("--out", out, "output directory")->required();

  auto* mask_cmd = app.add_subcommand("mask", "build a sampling mask");
  add_common(mask_cmd, c, false);
  mask_cmd->add_option("--data", data, "k-space bundle; also writes masked data and its ACS");
  mask_cmd->add_option("--out", out, "output directory")->required();

  auto* maps_cmd = app.add_subcommand("maps", "estimate ESPIRiT coil maps");
  add_common(maps_cmd, c, false);
  maps_cmd->add_option("--acs", acs, "ACS bundle");
  maps_cmd->add_option("--data", data, "k-space bundle (with --mask)");
  maps_cmd->add_option("--mask", mask, "mask bundle (with --data)");
  maps_cmd->add_flag("--full-res", full_res, "maps on the full data grid");
  maps_cmd->add_option("--out", out, "output directory")->required();

  auto* recon_cmd = app.add_subcommand("recon", "reconstruct undersampled k-space");
  add_common(recon_cmd, c, false);
  recon_cmd->add_option("--method", method, "zerofill|grappa|raki|eraki|eraki-joint|eraki-kyt");
  recon_cmd->add_option("--data", data, "k-space bundle")->required();
  recon_cmd->add_option("--mask", mask, "mask bundle")->required();
  recon_cmd->add_option("--maps", maps, "coil map bundle");
  recon_cmd->add_option("--out", out, "output directory")->required();

  auto* metrics_cmd = app.add_subcommand("metrics", "NRMSE and PSNR against a reference");
  metrics_cmd->add_option("--recon", recon, "reconstructed image bundle")->required();
  metrics_cmd->add_option("--ref", ref, "reference image bundle")->required();
  metrics_cmd->add_option("--margin", margin, "voxels excluded at each spatial edge");
  metrics_cmd->add_option("--out", metrics_out, "write JSON here instead of stdout");

  auto* fit_cmd = app.add_subcommand("fit", "mono-exponential decay maps");
  add_common(fit_cmd, c, false);
  fit_cmd->add_option("--echoes", echoes, "multi-echo image bundle")->required();
  fit_cmd->add_option("--te", te, "echo times in ms, comma separated");
  fit_cmd->add_option("--threshold", threshold, "minimum first-echo magnitude");
  fit_cmd->add_option("--out", out, "output directory")->required();

  auto* bench_cmd = app.add_subcommand("bench", "learning and reconstruction time benchmark");
  add_common(bench_cmd, c, false);
  bench_cmd->add_option("--scenario", c.config, "scenario configuration")->check(CLI::ExistingFile);
  bench_cmd->add_option("--out", out, "output directory")->required();
  bench_cmd->add_flag("--table", table, "print the text table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (threads) set_thread_count(threads);
    if (*phantom) return cmd_phantom(c, out);
    if (*mask_cmd) return cmd_mask(c, data, out);
    if (*maps_cmd) return cmd_maps(c, acs, data, mask, full_res, out);
    if (*recon_cmd) return cmd_recon(c, method, data, mask, maps, out);
    if (*metrics_cmd) return cmd_metrics(recon, ref, margin, metrics_out);
    if (*fit_cmd) return cmd_fit(c, echoes, te, threshold, out);
    if (*bench_cmd) return cmd_bench(c, out, table);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
