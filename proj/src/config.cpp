#include "eraki/config.hpp"

#include <set>

#include "eraki/error.hpp"

namespace eraki {

using nlohmann::json;

namespace {

// Reads fields from one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be a JSON object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(path_ + "." + key + " has the wrong type");
    }
  }

  void axis(const char* key, Axis& out) {
    std::string s;
    get(key, s);
    if (!s.empty()) out = parse_or_throw(key, s);
  }

  void axes(const char* key, std::array<Axis, 2>& out) {
    std::vector<std::string> s;
    get(key, s);
    if (s.empty()) return;
    if (s.size() != 2) throw ConfigError(path_ + "." + key + " must name two axes");
    out = {parse_or_throw(key, s[0]), parse_or_throw(key, s[1])};
  }

  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown key " + path_ + "." + it.key());
  }

 private:
  Axis parse_or_throw(const char* key, const std::string& s) const {
    try {
      return parse_axis(s);
    } catch (const Error&) {
      throw ConfigError(path_ + "." + key + ": unknown axis \"" + s + "\"");
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string coil_model_name(CoilModel m) { return m == CoilModel::smooth ? "smooth" : "compact"; }

void read_phantom(const json& j, RunConfig& c) {
  Section s(j, "phantom");
  PhantomSpec& p = c.phantom;
  s.get("extents", p.extents);
  s.get("coils", p.coils);
  std::string model = coil_model_name(p.coil.model);
  s.get("coil_model", model);
  if (model == "smooth") p.coil.model = CoilModel::smooth;
  else if (model == "compact") p.coil.model = CoilModel::compact;
  else throw ConfigError("phantom.coil_model must be \"smooth\" or \"compact\"");
  s.get("coil_support", p.coil.support);
  s.get("coil_radius", p.coil.radius);
  s.get("coil_width", p.coil.width);
  s.get("coil_phase_ramp", p.coil.phase_ramp);
  s.get("te_ms", p.te_ms);
  std::string echo = p.echo_type == EchoType::spin ? "spin" : "gradient";
  s.get("echo_type", echo);
  if (echo == "spin") p.echo_type = EchoType::spin;
  else if (echo == "gradient") p.echo_type = EchoType::gradient;
  else throw ConfigError("phantom.echo_type must be \"spin\" or \"gradient\"");
  s.get("noise_sigma", p.noise_sigma);
  s.get("echo_as_time", c.echo_as_time);
  s.finish();
}

void read_mask(const json& j, MaskConfig& m) {
  Section s(j, "mask");
  s.get("kind", m.kind);
  if (m.kind != "uniform" && m.kind != "elliptical" && m.kind != "kyt")
    throw ConfigError("mask.kind must be uniform, elliptical or kyt");
  if (m.kind == "kyt") m.axes = {Axis::t, Axis::ky};
  s.axes("axes", m.axes);
  s.get("r1", m.r1);
  s.get("r2", m.r2);
  s.get("shift", m.shift);
  s.get("acs", m.acs);
  std::array<std::size_t, 2> e{0, 0};
  s.get("extents", e);
  if (e[0] && e[1]) m.extents = e;
  s.finish();
}

void read_espirit(const json& j, RunConfig& c) {
  Section s(j, "espirit");
  s.get("kernel", c.espirit.kernel);
  s.get("tau", c.espirit.tau);
  s.get("gamma", c.espirit.gamma);
  s.get("full_res", c.recon.full_res_maps);
  s.finish();
}

void read_recon(const json& j, ReconConfig& r) {
  Section s(j, "recon");
  s.get("method", r.method);
  s.get("grappa_blocks0", r.grappa.blocks0);
  s.get("grappa_blocks1", r.grappa.blocks1);
  s.get("grappa_read_taps", r.grappa.read_taps);
  s.get("grappa_lambda", r.grappa_lambda);
  s.get("metric_margin", r.metric_margin);
  s.finish();
}

void read_bench(const json& j, BenchConfig& b) {
  Section s(j, "bench");
  s.get("methods", b.methods);
  s.get("repeats", b.repeats);
  s.get("warmup", b.warmup);
  s.finish();
  if (b.repeats < 1) throw ConfigError("bench.repeats must be at least 1");
}

void read_fit(const json& j, FitConfig& f) {
  Section s(j, "fit");
  s.get("te_ms", f.te_ms);
  s.get("threshold", f.threshold);
  s.finish();
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  Section top(j, "config");
  RunConfig c;
  if (!top.has("seed")) throw ConfigError("config.seed is mandatory");
  top.get("seed", c.seed);
  c.phantom.seed = c.seed;
  c.train.seed = c.seed;
  if (top.has("phantom")) read_phantom(top.raw("phantom"), c);
  if (top.has("mask")) read_mask(top.raw("mask"), c.mask);
  if (top.has("espirit")) read_espirit(top.raw("espirit"), c);
  if (top.has("train")) {
    try {
      c.train = train_config_from_json(top.raw("train"), c.train);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("train: ") + e.what());
    }
  }
  if (top.has("recon")) read_recon(top.raw("recon"), c.recon);
  if (top.has("bench")) read_bench(top.raw("bench"), c.bench);
  if (top.has("fit")) read_fit(top.raw("fit"), c.fit);
  top.finish();
  if (c.phantom.ellipsoids.empty()) c.phantom.ellipsoids = default_ellipsoids(c.phantom.extents);
  c.train.validate();
  return c;
}

json to_json(const RunConfig& c) {
  const PhantomSpec& p = c.phantom;
  json mask = {{"kind", c.mask.kind},
               {"axes", {axis_name(c.mask.axes[0]), axis_name(c.mask.axes[1])}},
               {"r1", c.mask.r1},
               {"r2", c.mask.r2},
               {"shift", c.mask.shift},
               {"acs", c.mask.acs}};
  if (c.mask.extents) mask["extents"] = *c.mask.extents;
  return {{"seed", c.seed},
          {"phantom",
           {{"extents", p.extents},
            {"coils", p.coils},
            {"coil_model", coil_model_name(p.coil.model)},
            {"coil_support", p.coil.support},
            {"coil_radius", p.coil.radius},
            {"coil_width", p.coil.width},
            {"coil_phase_ramp", p.coil.phase_ramp},
            {"te_ms", p.te_ms},
            {"echo_type", p.echo_type == EchoType::spin ? "spin" : "gradient"},
            {"noise_sigma", p.noise_sigma},
            {"echo_as_time", c.echo_as_time}}},
          {"mask", mask},
          {"espirit",
           {{"kernel", c.espirit.kernel},
            {"tau", c.espirit.tau},
            {"gamma", c.espirit.gamma},
            {"full_res", c.recon.full_res_maps}}},
          {"train", to_json(c.train)},
          {"recon",
           {{"method", c.recon.method},
            {"grappa_blocks0", c.recon.grappa.blocks0},
            {"grappa_blocks1", c.recon.grappa.blocks1},
            {"grappa_read_taps", c.recon.grappa.read_taps},
            {"grappa_lambda", c.recon.grappa_lambda},
            {"metric_margin", c.recon.metric_margin}}},
          {"bench", {{"methods", c.bench.methods}, {"repeats", c.bench.repeats}, {"warmup", c.bench.warmup}}},
          {"fit", {{"te_ms", c.fit.te_ms}, {"threshold", c.fit.threshold}}}};
}

SamplingMask build_mask(const MaskConfig& c, const std::array<std::size_t, 2>& data_extents) {
  const auto ext = c.extents.value_or(data_extents);
  AcsBox acs;
  if (c.kind != "kyt" && c.acs[0] && c.acs[1]) {
    if (c.acs[0] > ext[0] || c.acs[1] > ext[1])
      throw ConfigError("mask.acs " + std::to_string(c.acs[0]) + "x" + std::to_string(c.acs[1]) +
                        " exceeds the pattern extents " + std::to_string(ext[0]) + "x" + std::to_string(ext[1]));
    acs = centered_acs(ext, c.acs);
  }
  if (c.kind == "kyt") {
    // r2 is the ky acceleration; the ACS spans all time points.
    if (c.acs[1]) {
      if (c.acs[1] > ext[1]) throw ConfigError("mask.acs exceeds the ky extent " + std::to_string(ext[1]));
      acs = AcsBox{{0, center_window_start(ext[1], c.acs[1])}, {ext[0], c.acs[1]}};
    }
    return make_kyt_mask(ext[1], ext[0], c.r2, c.shift, acs);
  }
  if (c.kind == "elliptical") return make_elliptical_mask(ext, c.r1, c.r2, c.shift, acs, c.axes);
  return make_uniform_mask(ext, c.r1, c.r2, c.shift, acs, c.axes);
}

Phantom build_phantom(const RunConfig& c) {
  Phantom ph = make_phantom(c.phantom);
  if (!c.echo_as_time) return ph;
  if (c.phantom.extents[2] != 1) throw ConfigError("phantom.echo_as_time needs a unit kz extent");
  auto relabel = [](const CTensor& x) {
    AxisList axes;
    Shape shape;
    for (std::size_t i = 0; i < x.rank(); ++i) {
      if (x.axes()[i] == Axis::kz) continue;
      axes.push_back(x.axes()[i] == Axis::echo ? Axis::t : x.axes()[i]);
      shape.push_back(x.shape()[i]);
    }
    return CTensor(axes, shape, x.storage());
  };
  ph.kspace = relabel(ph.kspace);
  ph.images = relabel(ph.images);
  ph.combined = relabel(ph.combined);
  ph.sens_true = relabel(ph.sens_true);
  ph.t2_true = relabel(ph.t2_true);
  ph.t2star_true = relabel(ph.t2star_true);
  ph.support = relabel(ph.support);
  return ph;
}

}  // namespace eraki
