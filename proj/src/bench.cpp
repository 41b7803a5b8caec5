#include "eraki/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "eraki/grappa.hpp"
#include "eraki/hash.hpp"
#include "eraki/parallel.hpp"

namespace eraki {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Published ME-MPRAGE learning times (32 coils, GPU); context only.
constexpr double kPublishedRakiSeconds = 25600;
constexpr double kPublishedErakiSeconds = 30;

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

ReconMode learned_mode(const std::string& m) {
  if (m == "raki") return ReconMode::raki_percoil;
  if (m == "eraki") return ReconMode::eraki;
  if (m == "eraki-joint") return ReconMode::eraki_joint;
  if (m == "eraki-kyt") return ReconMode::eraki_kyt;
  throw ConfigError("unknown method \"" + m + "\"");
}

std::array<std::size_t, 2> pattern_extents(const CTensor& k, const std::array<Axis, 2>& axes) {
  for (Axis a : axes)
    if (!k.has_axis(a)) throw DataError("data lack the mask axis " + std::string(axis_name(a)));
  return {k.extent(axes[0]), k.extent(axes[1])};
}

std::string fmt(double v, int prec = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

}  // namespace

ImageMetrics image_metrics(const CTensor& image, const CTensor& ref, std::size_t margin) {
  if (image.shape() != ref.shape() || image.axes() != ref.axes())
    throw DataError("image and reference geometries differ");
  const Shape strides = ref.strides();
  std::vector<bool> spatial(ref.rank());
  for (std::size_t d = 0; d < ref.rank(); ++d) {
    const Axis a = ref.axes()[d];
    spatial[d] = (a == Axis::kx || a == Axis::ky || a == Axis::kz) && ref.shape()[d] > 2 * margin;
  }
  double num = 0, den = 0, peak = 0;
  ImageMetrics m;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    bool inside = true;
    for (std::size_t d = 0; d < ref.rank() && inside; ++d) {
      if (!spatial[d]) continue;
      const std::size_t c = (i / strides[d]) % ref.shape()[d];
      inside = c >= margin && c < ref.shape()[d] - margin;
    }
    if (!inside) continue;
    const double r = std::abs(ref[i]);
    const double e = std::abs(image[i]) - r;
    num += e * e;
    den += r * r;
    peak = std::max(peak, r);
    ++m.voxels;
  }
  if (m.voxels == 0 || den == 0) throw DataError("metric mask or reference is empty");
  m.nrmse = std::sqrt(num / den);
  const double mse = num / static_cast<double>(m.voxels);
  m.psnr = mse > 0 ? 10.0 * std::log10(peak * peak / mse) : std::numeric_limits<double>::infinity();
  return m;
}

CTensor mask_for_method(const CTensor& kspace_full, const SamplingMask& mask, const std::string& method) {
  if (method != "eraki-joint" || !kspace_full.has_axis(Axis::echo)) return apply_mask(kspace_full, mask);
  const std::size_t ne = kspace_full.extent(Axis::echo);
  const auto masks = echo_shifted_masks(mask, ne);
  std::vector<CTensor> parts;
  for (std::size_t e = 0; e < ne; ++e) parts.push_back(apply_mask(slice(kspace_full, Axis::echo, e), masks[e]));
  return stack(parts, Axis::echo, kspace_full.axis_index(Axis::echo));
}

MethodOutput run_method(const std::string& method, const CTensor& k, const SamplingMask& mask, const RunConfig& cfg,
                        const CTensor& maps) {
  MethodOutput out;
  out.method = method;
  const std::vector<Axis> sp = spatial_axes(k);
  if (method == "zerofill") {
    const auto t0 = Clock::now();
    out.kspace = k;
    out.image = zero_filled_image(k, maps);
    out.infer_seconds = since(t0);
    return out;
  }
  if (method == "grappa") {
    const bool echoes = k.has_axis(Axis::echo);
    const std::size_t ne = echoes ? k.extent(Axis::echo) : 1;
    std::vector<CTensor> parts;
    for (std::size_t e = 0; e < ne; ++e) {
      const CTensor ke = echoes ? slice(k, Axis::echo, e) : k;
      auto t0 = Clock::now();
      const GrappaKernel kernel = grappa_calibrate(extract_acs(ke, mask), mask, cfg.recon.grappa, cfg.recon.grappa_lambda);
      out.learn_seconds += since(t0);
      t0 = Clock::now();
      parts.push_back(grappa_apply(ke, mask, kernel));
      out.infer_seconds += since(t0);
      out.details["calibration_windows"].push_back(kernel.windows);
    }
    out.kspace = echoes ? stack(parts, Axis::echo, k.axis_index(Axis::echo)) : parts[0];
    out.models = ne;
    out.split_models = ne;
    const auto t0 = Clock::now();
    out.image = combine_images(ifftc(out.kspace, std::span<const Axis>(sp)), maps);
    out.infer_seconds += since(t0);
    return out;
  }
  ReconProblem p;
  p.kspace = k;
  p.mask = mask;
  p.mode = learned_mode(method);
  p.train = cfg.train;
  p.espirit = cfg.espirit;
  p.full_res_maps = cfg.recon.full_res_maps;
  if (!maps.empty()) p.maps = maps;
  ReconResult r = reconstruct(p);
  out.kspace = std::move(r.kspace);
  out.image = std::move(r.image);
  out.models = r.models.size();
  out.split_models = r.report["split_models"].get<std::size_t>();
  out.learn_seconds = r.train_seconds;
  out.infer_seconds = r.infer_seconds;
  out.maps_seconds = r.maps_seconds;
  out.details = std::move(r.report);
  return out;
}

std::string cpu_model() {
  std::ifstream f("/proc/cpuinfo");
  std::string line;
  while (std::getline(f, line))
    if (line.rfind("model name", 0) == 0) {
      const auto c = line.find(':');
      if (c != std::string::npos) return line.substr(line.find_first_not_of(' ', c + 1));
    }
  return "unknown";
}

json strip_timing(json j) {
  if (j.is_object()) {
    j.erase("timing");
    for (auto& [k, v] : j.items()) v = strip_timing(v);
  } else if (j.is_array()) {
    for (auto& v : j) v = strip_timing(v);
  }
  return j;
}

json run_bench(const RunConfig& cfg) {
  for (const auto& m : cfg.bench.methods)
    if (std::find(std::begin(kMethods), std::end(kMethods), m) == std::end(kMethods))
      throw ConfigError("bench.methods: unknown method \"" + m + "\"");
  const json effective = to_json(cfg);
  const Phantom ph = build_phantom(cfg);
  const SamplingMask mask = build_mask(cfg.mask, pattern_extents(ph.kspace, cfg.mask.axes));
  const CTensor masked = apply_mask(ph.kspace, mask);

  // Maps once, shared by every method; their time is its own row.
  std::vector<Axis> cal;
  for (Axis a : mask.axes())
    if (a == Axis::kx || a == Axis::ky || a == Axis::kz) cal.push_back(a);
  ExtentMap full;
  if (cfg.recon.full_res_maps)
    for (Axis a : spatial_axes(masked)) full[a] = masked.extent(a);
  auto t0 = Clock::now();
  const CTensor maps = espirit_maps(extract_acs(masked, mask), cal, cfg.espirit, full).maps;
  const double maps_seconds = since(t0);

  if (cfg.bench.warmup) {
    RunConfig w = cfg;
    w.train.iterations = 1;
    const std::string m = mask.axes()[0] == Axis::t ? "eraki-kyt" : "eraki";
    try {
      run_method(m, masked, mask, w, maps);
    } catch (const Error&) {
      // The timed runs report the failure.
    }
  }

  json methods = json::array();
  std::map<std::string, MethodOutput> done;
  for (const auto& name : cfg.bench.methods) {
    json row = {{"method", name}};
    try {
      const CTensor k = name == "eraki-joint" ? mask_for_method(ph.kspace, mask, name) : masked;
      std::vector<double> learn, infer;
      MethodOutput first;
      for (std::size_t r = 0; r < cfg.bench.repeats; ++r) {
        MethodOutput o = run_method(name, k, mask, cfg, maps);
        learn.push_back(o.learn_seconds);
        infer.push_back(o.infer_seconds);
        if (r == 0) first = std::move(o);
      }
      const ImageMetrics im = image_metrics(first.image, ph.combined, cfg.recon.metric_margin);
      first.learn_seconds = median(learn);
      first.infer_seconds = median(infer);
      row["ok"] = true;
      row["models"] = first.models;
      row["split_models"] = first.split_models;
      row["nrmse"] = im.nrmse;
      row["psnr"] = im.psnr;
      if (first.details.is_object() && first.details.contains("model_details"))
        row["model_details"] = first.details["model_details"];
      row["timing"] = {{"learning_seconds", first.learn_seconds},
                       {"inference_seconds", first.infer_seconds},
                       {"learning_runs", learn},
                       {"inference_runs", infer}};
      done.emplace(name, std::move(first));
    } catch (const Error& e) {
      row["ok"] = false;
      row["error"] = e.what();
    }
    methods.push_back(row);
  }

  json report = {{"config_hash", sha256_hex(effective.dump())},
                 {"config", effective},
                 {"environment", {{"cpu", cpu_model()}, {"threads", thread_count()}}},
                 {"methods", methods},
                 {"published_reference",
                  {{"raki_learning_seconds", kPublishedRakiSeconds},
                   {"eraki_learning_seconds", kPublishedErakiSeconds},
                   {"learning_ratio", kPublishedRakiSeconds / kPublishedErakiSeconds},
                   {"note", "ME-MPRAGE, 32 coils, GPU; not comparable in absolute terms"}}}};
  json timing = {{"maps_seconds", maps_seconds}};
  if (done.count("raki") && done.count("eraki")) {
    const auto& a = done.at("raki");
    const auto& b = done.at("eraki");
    report["model_ratio"] = {{"implemented", static_cast<double>(a.models) / static_cast<double>(b.models)},
                             {"split",
                              static_cast<double>(a.split_models) / static_cast<double>(b.split_models)}};
    timing["learning_ratio_raki_over_eraki"] = b.learn_seconds > 0 ? a.learn_seconds / b.learn_seconds : 0.0;
    const double ta = a.learn_seconds + a.infer_seconds, tb = b.learn_seconds + b.infer_seconds;
    timing["total_ratio_raki_over_eraki"] = tb > 0 ? ta / tb : 0.0;
  }
  report["timing"] = timing;
  return report;
}

std::string bench_table(const json& report) {
  std::ostringstream o;
  char line[256];
  std::snprintf(line, sizeof line, "%-14s %7s %9s %13s %14s %9s\n", "method", "models", "split", "learning [s]",
                "inference [s]", "NRMSE");
  o << line;
  std::snprintf(line, sizeof line, "%-14s %7s %9s %13s %14s %9s\n", "ESPIRiT maps", "-", "-",
                fmt(report["timing"]["maps_seconds"].get<double>()).c_str(), "-", "-");
  o << line;
  for (const auto& m : report["methods"]) {
    const std::string name = m["method"];
    if (!m["ok"].get<bool>()) {
      o << name << "  FAILED: " << m["error"].get<std::string>() << "\n";
      continue;
    }
    std::snprintf(line, sizeof line, "%-14s %7zu %9zu %13s %14s %9s\n", name.c_str(), m["models"].get<std::size_t>(),
                  m["split_models"].get<std::size_t>(),
                  fmt(m["timing"]["learning_seconds"].get<double>()).c_str(),
                  fmt(m["timing"]["inference_seconds"].get<double>()).c_str(), fmt(m["nrmse"].get<double>(), 4).c_str());
    o << line;
  }
  if (report.contains("model_ratio")) {
    o << "RAKI:eRAKI models " << fmt(report["model_ratio"]["implemented"].get<double>(), 0) << ":1 (split real/imag "
      << fmt(report["model_ratio"]["split"].get<double>(), 0) << ":1)\n";
    o << "RAKI/eRAKI learning time " << fmt(report["timing"]["learning_ratio_raki_over_eraki"].get<double>(), 2)
      << "x\n";
  }
  const auto& p = report["published_reference"];
  o << "published (ME-MPRAGE, GPU): RAKI " << fmt(p["raki_learning_seconds"].get<double>(), 0) << " s vs eRAKI "
    << fmt(p["eraki_learning_seconds"].get<double>(), 0) << " s learning (" << fmt(p["learning_ratio"].get<double>(), 0)
    << "x)\n";
  return o.str();
}

}  // namespace eraki
