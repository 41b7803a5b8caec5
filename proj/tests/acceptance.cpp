// Acceptance run: one PASS/FAIL line per criterion. Exits nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "json.hpp"

#include "eraki/bench.hpp"
#include "eraki/config.hpp"
#include "eraki/espirit.hpp"
#include "eraki/grappa.hpp"
#include "eraki/nn.hpp"
#include "eraki/phantom.hpp"
#include "eraki/quantmap.hpp"
#include "eraki/recon.hpp"
#include "eraki/sampling.hpp"

#ifndef ERAKI_CLI
#define ERAKI_CLI "eraki"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace eraki;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// A1 ------------------------------------------------------------------------

Volume random_volume(std::size_t c, Ext3 e, std::mt19937_64& rng) {
  Volume v(c, e);
  std::normal_distribution<double> g(0.0, 1.0);
  for (Eigen::Index i = 0; i < v.v.size(); ++i) v.v.data()[i] = g(rng);
  return v;
}

double total_loss(const ModelWeights& m, const std::vector<Sample>& samples, const TrainConfig& cfg) {
  std::vector<Volume> preds;
  for (auto& s : samples) preds.push_back(forward(m, s.input));
  return loss(m, preds, samples, cfg).total;
}

Verdict gradients() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0, 1);
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    std::array<std::size_t, 4> widths;
    for (auto& w : widths) w = 1 + rng() % 3;
    const std::size_t out = 2 * (1 + rng() % 2);
    ModelWeights m = init_model(2 * (1 + rng() % 2), eraki_architecture(out, widths), rng());
    for (auto& l : m.layers)
      for (Eigen::Index i = 0; i < l.b.size(); ++i) l.b(i) = 0.2 * (u(rng) - 0.3);
    TrainConfig cfg;
    cfg.alpha = u(rng);
    cfg.beta = 0.3 * u(rng);
    cfg.l2_squared = trial % 4 == 3;
    cfg.reg_norm = trial % 2 ? "mean" : "sum";
    const Ext3 rf = m.receptive_field();
    std::vector<Sample> samples;
    for (std::size_t extra : {1, 2}) {
      Sample s;
      s.input = random_volume(m.in_channels(), {rf[0] + extra, rf[1] + 1, rf[2] + extra}, rng);
      s.target = random_volume(m.out_channels(), {extra + 1, 2, extra + 1}, rng);
      s.mask = Eigen::MatrixXd::Ones(s.target.v.rows(), s.target.v.cols());
      for (Eigen::Index i = 0; i < s.mask.size(); ++i)
        if (u(rng) < 0.2) s.mask.data()[i] = 0;
      s.mask(0, 0) = 1;
      samples.push_back(std::move(s));
    }
    const Gradient g = backward(m, samples, cfg);
    const double h = 1e-5;
    for (std::size_t li = 0; li < m.layers.size(); ++li) {
      auto check = [&](double& p, double analytic) {
        const double keep = p;
        p = keep + h;
        const double up = total_loss(m, samples, cfg);
        p = keep - h;
        const double dn = total_loss(m, samples, cfg);
        p = keep;
        const double fd = (up - dn) / (2 * h);
        worst = std::max(worst, std::abs(analytic - fd) / std::max(1.0, std::abs(analytic)));
      };
      auto& l = m.layers[li];
      for (Eigen::Index i = 0; i < l.w.size(); ++i) check(l.w.data()[i], g.grad.layers[li].w.data()[i]);
      for (Eigen::Index i = 0; i < l.b.size(); ++i) check(l.b.data()[i], g.grad.layers[li].b.data()[i]);
    }
  }
  return {worst < 1e-5, fmt("worst relative gradient error %.2e over 20 five-layer models (limit 1e-5)", worst)};
}

// A2, A3 ----------------------------------------------------------------------

Phantom compact_phantom() {
  PhantomSpec spec;
  spec.extents = {1, 64, 64};
  spec.ellipsoids = default_ellipsoids(spec.extents);
  spec.coils = 8;
  spec.coil.model = CoilModel::compact;
  spec.coil.support = 3;
  spec.seed = 9;
  return make_phantom(spec);
}

Verdict grappa_exact() {
  const CTensor truth = squeeze_axis(compact_phantom().kspace, Axis::echo);
  GrappaGeometry geom;
  geom.blocks0 = geom.blocks1 = 4;
  std::string detail;
  bool ok = true;
  for (auto [r1, r2] : {std::pair<std::size_t, std::size_t>{2, 1}, {2, 2}}) {
    const auto mask = make_uniform_mask({64, 64}, r1, r2, 0, centered_acs({64, 64}, {24, 24}));
    const double e = nrmse(grappa_recon(apply_mask(truth, mask), mask, geom), truth);
    ok = ok && e < 1e-6;
    detail += fmt("R=%zux%zu NRMSE %.2e; ", r1, r2, e);
  }
  return {ok, detail + "limit 1e-6"};
}

Verdict espirit_fidelity() {
  const Phantom ph = compact_phantom();
  const auto mask = make_uniform_mask({64, 64}, 1, 1, 0, centered_acs({64, 64}, {24, 24}));
  const CTensor acs = extract_acs(squeeze_axis(ph.kspace, Axis::echo), mask);
  const SensitivityMaps sm = espirit_maps(acs, {Axis::ky, Axis::kz}, {}, {{Axis::ky, 64}, {Axis::kz, 64}});
  const std::size_t vox = 64 * 64, nc = 8;
  double align = 1.0, norm_dev = 0.0;
  for (std::size_t v = 0; v < vox; ++v) {
    double ss = 0;
    for (std::size_t c = 0; c < nc; ++c) ss += std::norm(sm.maps[c * vox + v]);
    norm_dev = std::max(norm_dev, std::min(std::abs(ss), std::abs(ss - 1.0)));
    if (ph.support[v].real() == 0) continue;
    cplx dot{};
    for (std::size_t c = 0; c < nc; ++c) dot += std::conj(sm.maps[c * vox + v]) * ph.sens_true[c * vox + v];
    align = std::min(align, std::abs(dot));
  }

  // Coil combination as a k-space convolution with the conjugate-map spectra.
  const std::size_t n = 16, ncc = 4;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  CTensor x({Axis::coil, Axis::ky, Axis::kz}, {ncc, n, n}), cm({Axis::coil, Axis::ky, Axis::kz}, {ncc, n, n});
  for (auto& v : x.data()) v = cplx(g(rng), g(rng));
  for (auto& v : cm.data()) v = cplx(g(rng), g(rng));
  const CTensor lhs = fftc(coil_combine(ifftc(x, {Axis::ky, Axis::kz}), cm), {Axis::ky, Axis::kz});
  CTensor conjc = cm;
  for (auto& v : conjc.data()) v = std::conj(v);
  const CTensor kern = fftc(conjc, {Axis::ky, Axis::kz});
  CTensor rhs({Axis::ky, Axis::kz}, {n, n});
  const long ln = static_cast<long>(n), ctr = ln / 2;
  for (long k0 = 0; k0 < ln; ++k0)
    for (long k1 = 0; k1 < ln; ++k1) {
      cplx acc{};
      for (std::size_t ch = 0; ch < ncc; ++ch)
        for (long d0 = -ctr; d0 < ln - ctr; ++d0)
          for (long d1 = -ctr; d1 < ln - ctr; ++d1)
            acc += kern.at({ch, static_cast<std::size_t>(ctr + d0), static_cast<std::size_t>(ctr + d1)}) *
                   x.at({ch, static_cast<std::size_t>(((k0 - d0) % ln + ln) % ln),
                         static_cast<std::size_t>(((k1 - d1) % ln + ln) % ln)});
      rhs.at({static_cast<std::size_t>(k0), static_cast<std::size_t>(k1)}) = acc / static_cast<double>(n);
    }
  const double conv = relative_error(lhs, rhs);
  return {align >= 0.999 && norm_dev <= 1e-10 && conv < 1e-8,
          fmt("min alignment %.6f (>= 0.999), max |sum|C|^2 - {0,1}| %.1e (<= 1e-10), convolution error %.1e (< 1e-8)",
              align, norm_dev, conv)};
}

// A4, A5 ----------------------------------------------------------------------

Verdict eraki_quality() {
  const RunConfig cfg = run_config_from_json({{"seed", 1},
                                              {"phantom", {{"extents", {32, 96, 96}}, {"coils", 8}, {"te_ms", {10}}}},
                                              {"mask", {{"r1", 3}, {"r2", 3}, {"acs", {24, 24}}}},
                                              {"train",
                                               {{"iterations", 1000},
                                                {"beta", 0.0},
                                                {"lr", 3e-3},
                                                {"train_bias", false}}}});
  const Phantom ph = build_phantom(cfg);
  const SamplingMask mask = build_mask(cfg.mask, {96, 96});
  const CTensor k = apply_mask(ph.kspace, mask);
  const CTensor maps = espirit_maps(extract_acs(k, mask), {Axis::ky, Axis::kz}, cfg.espirit).maps;
  double e[3];
  const char* names[3] = {"zerofill", "grappa", "eraki"};
  for (int i = 0; i < 3; ++i)
    e[i] = image_metrics(run_method(names[i], k, mask, cfg, maps).image, ph.combined, cfg.recon.metric_margin).nrmse;
  const bool ok = e[2] < e[0] / 3 && e[2] <= 1.5 * e[1];
  return {ok, fmt("NRMSE zero-filled %.4f, GRAPPA %.4f, eRAKI %.4f; need eRAKI < %.4f and <= %.4f", e[0], e[1], e[2],
                  e[0] / 3, 1.5 * e[1])};
}

Verdict channel_laws() {
  PhantomSpec spec;
  spec.extents = {16, 36, 36};
  spec.ellipsoids = default_ellipsoids(spec.extents);
  spec.coils = 4;
  spec.te_ms = {10, 20, 30};
  const Phantom ph = make_phantom(spec);
  const SamplingMask mask = make_uniform_mask({36, 36}, 3, 3, 0, centered_acs({36, 36}, {24, 24}));
  TrainConfig quick;
  quick.iterations = 1;
  quick.widths = {4, 4, 4, 4};

  ReconProblem single;
  single.kspace = apply_mask(insert_axis(slice(ph.kspace, Axis::echo, 0), Axis::echo, 1), mask);
  single.mask = mask;
  single.train = quick;
  const ReconResult a = reconstruct(single);

  ReconProblem joint;
  joint.kspace = mask_for_method(ph.kspace, mask, "eraki-joint");
  joint.mask = mask;
  joint.mode = ReconMode::eraki_joint;
  joint.train = quick;
  const ReconResult b = reconstruct(joint);
  const std::size_t ca = a.models.at(0).weights.out_channels(), cb = b.models.at(0).weights.out_channels();
  return {a.models.size() == 1 && b.models.size() == 1 && ca == 18 && cb == 54,
          fmt("R=9 single echo: %zu output channels (18); 3-echo joint: %zu (54)", ca, cb)};
}

// A6 ------------------------------------------------------------------------

Verdict speedup() {
  const RunConfig cfg = run_config_from_json({{"seed", 2},
                                              {"phantom", {{"extents", {16, 48, 48}}, {"coils", 8}, {"te_ms", {10}}}},
                                              {"mask", {{"r1", 3}, {"r2", 3}, {"acs", {24, 24}}}},
                                              {"train", {{"iterations", 150}, {"beta", 0.0}, {"lr", 3e-3}}},
                                              {"bench", {{"methods", {"raki", "eraki"}}}}});
  const json r = run_bench(cfg);
  std::printf("%s", bench_table(r).c_str());
  for (const auto& m : r["methods"])
    if (!m["ok"].get<bool>()) return {false, m["method"].get<std::string>() + " failed: " + m["error"].get<std::string>()};
  const double ratio = r["timing"]["learning_ratio_raki_over_eraki"].get<double>();
  const double split = r["model_ratio"]["split"].get<double>();
  return {ratio >= 4.0 && split == 16.0,
          fmt("Nc=8, 150 iterations per model: RAKI/eRAKI learning time %.2fx (>= 4), split real/imag models %.0f:1 "
              "(16:1); published reference 25600 s vs 30 s",
              ratio, split)};
}

// A7, A8, A9 --------------------------------------------------------------------

Verdict elliptical() {
  const auto full = make_uniform_mask({192, 192}, 1, 1, 0);
  const auto ell = make_elliptical_mask({192, 192}, 1, 1, 0);
  const double extra = static_cast<double>(full.sampled_count()) / static_cast<double>(ell.sampled_count());
  const double dev = std::abs(extra / (4.0 / std::numbers::pi) - 1.0);
  const double net = net_acceleration(make_elliptical_mask({192, 192}, 1, 7, 3, centered_acs({192, 192}, {24, 24})));
  const double dev9 = std::abs(net / 9.0 - 1.0);
  return {dev < 0.02 && dev9 < 0.05,
          fmt("extra acceleration %.4f vs 4/pi %.4f (%.2f%%, < 2%%); 1x7(3) elliptical net R %.3f (%.2f%% from 9, < 5%%)",
              extra, 4.0 / std::numbers::pi, 100 * dev, net, 100 * dev9)};
}

Verdict kyt() {
  const auto m = make_kyt_mask(64, 4, 4, 1);
  bool once = true;
  for (std::size_t ky = 0; ky < 64; ++ky) {
    int hits = 0;
    for (std::size_t t = 0; t < 4; ++t) hits += m.sampled(t, ky);
    once = once && hits == 1;
  }

  // Frames that differ by a complex scale share one set of GRAPPA weights, so
  // shared-kernel ky-t GRAPPA without temporal taps must equal per-frame 2D GRAPPA.
  PhantomSpec spec;
  spec.extents = {12, 48, 1};
  spec.ellipsoids = default_ellipsoids(spec.extents);
  spec.coils = 4;
  spec.te_ms = {10};
  const CTensor frame = squeeze_axis(squeeze_axis(make_phantom(spec).kspace, Axis::echo), Axis::kz);  // [coil, kx, ky]
  const std::vector<cplx> scale{{1, 0}, {0.5, 0.2}, {-1.2, 0.3}, {0.1, -0.9}};
  const std::size_t nt = scale.size(), nc = 4, nx = 12, ny = 48;
  CTensor full({Axis::coil, Axis::kx, Axis::ky, Axis::t}, {nc, nx, ny, nt});
  for (std::size_t c = 0; c < nc; ++c)
    for (std::size_t x = 0; x < nx; ++x)
      for (std::size_t y = 0; y < ny; ++y)
        for (std::size_t t = 0; t < nt; ++t) full.at({c, x, y, t}) = scale[t] * frame.at({c, x, y});
  const std::size_t acs0 = center_window_start(ny, 24);
  const auto mask = make_kyt_mask(ny, nt, 2, 0, AcsBox{{0, acs0}, {nt, 24}});
  GrappaGeometry g3;
  g3.blocks0 = 1;
  g3.blocks1 = 4;
  const CTensor joint = grappa_kyt(apply_mask(full, mask), mask, g3);

  GrappaGeometry g2;
  g2.blocks0 = 4;
  g2.blocks1 = 1;
  const auto m2 = make_uniform_mask({ny, 1}, 2, 1, 0, AcsBox{{acs0, 0}, {24, 1}});
  double worst = 0;
  for (std::size_t t = 0; t < nt; ++t) {
    const CTensor ft = insert_axis(slice(full, Axis::t, t), Axis::kz, 3);  // [coil, kx, ky, kz=1]
    const CTensor single = squeeze_axis(grappa_recon(apply_mask(ft, m2), m2, g2), Axis::kz);
    worst = std::max(worst, relative_error(slice(joint, Axis::t, t), single));
  }
  return {once && worst < 1e-10,
          fmt("R=4 shift 1 covers every ky once per period: %s; ky-t vs per-frame 2D GRAPPA max error %.1e (< 1e-10)",
              once ? "yes" : "no", worst)};
}

Verdict t2() {
  PhantomSpec spec;
  spec.extents = {1, 64, 64};
  spec.ellipsoids = default_ellipsoids(spec.extents);
  spec.coils = 2;
  spec.te_ms = {10, 40, 70};
  const Phantom ph = make_phantom(spec);
  const FitResult r = fit_decay(ph.combined, spec.te_ms);
  double worst = 0;
  std::size_t regions = 0;
  for (double want : {30.0, 50.0, 80.0}) {
    std::size_t n = 0;
    for (std::size_t v = 0; v < ph.t2_true.size(); ++v) {
      if (ph.t2_true[v].real() != want || ph.support[v].real() == 0) continue;
      ++n;
      worst = std::max(worst, std::abs(r.t2[v].real() - want) / want);
    }
    regions += n > 0;
  }
  CTensor two({Axis::echo, Axis::kx}, {2, 1});
  two[0] = 1.0;
  two[1] = 0.5;
  const double exact = std::abs(fit_decay(two, {0, 10}).t2[0].real() - 10.0 / std::log(2.0));
  return {regions == 3 && worst < 0.01 && exact < 1e-9,
          fmt("worst regional T2 error %.3f%% over %zu regions (< 1%%); two-point error %.1e ms (< 1e-9)", 100 * worst,
              regions, exact)};
}

// A10 -----------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void run_pipeline(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "c.json") << json{{"seed", 4},
                                        {"phantom", {{"extents", {16, 36, 36}}, {"coils", 4}, {"te_ms", {10, 40, 70}}}},
                                        {"mask", {{"r1", 2}, {"r2", 2}, {"acs", {16, 16}}}},
                                        {"train", {{"iterations", 30}, {"widths", {8, 8, 8, 8}}, {"beta", 0.0}}}}
                                       .dump();
  const std::string e = std::string("\"") + ERAKI_CLI + "\"";
  const std::vector<std::string> steps{
      "phantom --config c.json --out ph",
      "mask --config c.json --data ph --out m",
      "maps --acs m/acs --out s",
      "recon --method eraki --data ph --mask m --maps s --config c.json --out r",
      "recon --method grappa --data ph --mask m --maps s --config c.json --out g",
      "metrics --recon r --ref ph/combined --out metrics.json",
      "fit --echoes ph/combined --out t2"};
  for (const auto& s : steps) {
    const std::string cmd = "cd \"" + dir.string() + "\" && " + e + " " + s + " 2>/dev/null";
    if (std::system(cmd.c_str()) != 0) throw DataError("pipeline step failed: " + s);
  }
}

Verdict determinism() {
  const fs::path base = fs::temp_directory_path() / ("eraki_accept_" + std::to_string(::getpid()));
  run_pipeline(base / "a");
  run_pipeline(base / "b");
  std::size_t files = 0;
  std::vector<std::string> diffs;
  for (const auto& entry : fs::recursive_directory_iterator(base / "a")) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), base / "a");
    ++files;
    std::string x = slurp(entry.path()), y = slurp(base / "b" / rel);
    if (rel.filename() == "report.json") {
      x = strip_timing(json::parse(x)).dump();
      y = strip_timing(json::parse(y)).dump();
    }
    if (x != y) diffs.push_back(rel.string());
  }
  fs::remove_all(base);
  std::string detail = fmt("%zu files compared across two CLI runs, %zu differ outside time fields", files, diffs.size());
  for (const auto& d : diffs) detail += " " + d;
  return {diffs.empty() && files > 20, detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"A1", gradients},   {"A2", grappa_exact}, {"A3", espirit_fidelity}, {"A4", eraki_quality},
      {"A5", channel_laws}, {"A6", speedup},     {"A7", elliptical},       {"A8", kyt},
      {"A9", t2},          {"A10", determinism}};
  int failed = 0;
  for (const auto& [id, run] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %s %s [%.1f s]\n", id, v.pass ? "PASS" : "FAIL", v.detail.c_str(), s);
    std::fflush(stdout);
    failed += !v.pass;
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed ? 1 : 0;
}
