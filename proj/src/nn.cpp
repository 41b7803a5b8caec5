#include "eraki/nn.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "eraki/error.hpp"
#include "eraki/parallel.hpp"

namespace eraki {

using nlohmann::json;

namespace {

constexpr std::size_t kChunk = 2048;

Ext3 out_extent(const ConvLayer& l, const Ext3& in) {
  return {in[0] - l.k[0] + 1, in[1] - l.k[1] + 1, in[2] - l.k[2] + 1};
}

std::string ext_str(const Ext3& e) {
  return std::to_string(e[0]) + "x" + std::to_string(e[1]) + "x" + std::to_string(e[2]);
}

// Rows ((a*k1 + b)*k2 + c)*C + ci of column (p - p0) get input channel ci at
// output position p shifted by (a, b, c).
void im2col(const ConvLayer& l, const Volume& x, const Ext3& oe, std::size_t p0, std::size_t p1,
            Eigen::MatrixXd& cols) {
  const std::size_t c = x.channels;
  const std::size_t run = l.k[2] * c;
  const double* src = x.v.data();
  for (std::size_t p = p0; p < p1; ++p) {
    const std::size_t i = p / (oe[1] * oe[2]);
    const std::size_t j = (p / oe[2]) % oe[1];
    const std::size_t r = p % oe[2];
    double* dst = cols.col(static_cast<Eigen::Index>(p - p0)).data();
    for (std::size_t a = 0; a < l.k[0]; ++a)
      for (std::size_t b = 0; b < l.k[1]; ++b) {
        const std::size_t q = x.pos(i + a, j + b, r);
        std::memcpy(dst + (a * l.k[1] + b) * run, src + q * c, run * sizeof(double));
      }
  }
}

void col2im_add(const ConvLayer& l, Volume& dx, const Ext3& oe, std::size_t p0, std::size_t p1,
                const Eigen::MatrixXd& dcols) {
  const std::size_t c = dx.channels;
  const std::size_t run = l.k[2] * c;
  double* dst = dx.v.data();
  for (std::size_t p = p0; p < p1; ++p) {
    const std::size_t i = p / (oe[1] * oe[2]);
    const std::size_t j = (p / oe[2]) % oe[1];
    const std::size_t r = p % oe[2];
    const double* src = dcols.col(static_cast<Eigen::Index>(p - p0)).data();
    for (std::size_t a = 0; a < l.k[0]; ++a)
      for (std::size_t b = 0; b < l.k[1]; ++b) {
        const std::size_t q = dx.pos(i + a, j + b, r);
        double* d = dst + q * c;
        const double* s = src + (a * l.k[1] + b) * run;
        for (std::size_t t = 0; t < run; ++t) d[t] += s[t];
      }
  }
}

Volume conv_forward(const ConvLayer& l, const Volume& x) {
  const Ext3 oe = out_extent(l, x.ext);
  Volume y(l.out, oe);
  const std::size_t np = y.positions();
  const std::size_t chunks = (np + kChunk - 1) / kChunk;
  const std::size_t rows = l.taps() * l.in;
  parallel_for(chunks, [&](std::size_t cb, std::size_t ce) {
    Eigen::MatrixXd cols(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(kChunk));
    for (std::size_t ch = cb; ch < ce; ++ch) {
      const std::size_t p0 = ch * kChunk, p1 = std::min(np, p0 + kChunk);
      const auto n = static_cast<Eigen::Index>(p1 - p0);
      im2col(l, x, oe, p0, p1, cols);
      auto out = y.v.middleCols(static_cast<Eigen::Index>(p0), n);
      out.noalias() = l.w * cols.leftCols(n);
      out.colwise() += l.b;
      if (l.relu) out = out.cwiseMax(0.0);
    }
  });
  return y;
}

double theta_sq(const ModelWeights& m) {
  double s = 0;
  for (auto& l : m.layers) s += l.w.squaredNorm() + l.b.squaredNorm();
  return s;
}

void check_forward_input(const ModelWeights& m, const Volume& x) {
  m.check();
  if (x.channels != m.in_channels())
    throw DataError("input has " + std::to_string(x.channels) + " channels, model expects " +
                    std::to_string(m.in_channels()));
  const Ext3 rf = m.receptive_field();
  for (int d = 0; d < 3; ++d)
    if (x.ext[d] < rf[d])
      throw DataError("input extent " + ext_str(x.ext) + " is smaller than the receptive field " + ext_str(rf));
}

}  // namespace

Volume::Volume(std::size_t c, Ext3 e) : channels(c), ext(e) {
  v = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(e[0] * e[1] * e[2]));
}

Ext3 ModelWeights::receptive_field() const {
  Ext3 rf{1, 1, 1};
  for (auto& l : layers)
    for (int d = 0; d < 3; ++d) rf[d] += l.k[d] - 1;
  return rf;
}

std::size_t ModelWeights::parameter_count() const {
  std::size_t n = 0;
  for (auto& l : layers) n += static_cast<std::size_t>(l.w.size() + l.b.size());
  return n;
}

void ModelWeights::check() const {
  if (layers.empty()) throw DataError("model has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.w.rows() != static_cast<Eigen::Index>(l.out) || l.w.cols() != static_cast<Eigen::Index>(l.taps() * l.in) ||
        l.b.size() != static_cast<Eigen::Index>(l.out))
      throw DataError("layer " + std::to_string(i) + " has inconsistent parameter shapes");
    if (i > 0 && layers[i - 1].out != l.in)
      throw DataError("layer " + std::to_string(i) + " expects " + std::to_string(l.in) + " channels, previous emits " +
                      std::to_string(layers[i - 1].out));
  }
}

std::vector<LayerShape> eraki_architecture(std::size_t out, const std::array<std::size_t, 4>& widths) {
  return {{{3, 3, 7}, widths[0], true},
          {{1, 1, 5}, widths[1], true},
          {{1, 1, 3}, widths[2], true},
          {{1, 1, 1}, widths[3], true},
          {{1, 1, 1}, out, false}};
}

ModelWeights init_model(std::size_t in, const std::vector<LayerShape>& shape, std::uint64_t seed) {
  if (in == 0) throw ConfigError("model needs at least one input channel");
  std::mt19937_64 rng(seed);
  ModelWeights m;
  std::size_t cin = in;
  for (auto& s : shape) {
    if (s.out == 0 || s.k[0] == 0 || s.k[1] == 0 || s.k[2] == 0) throw ConfigError("layer shapes must be positive");
    ConvLayer l;
    l.in = cin;
    l.out = s.out;
    l.k = s.k;
    l.relu = s.relu;
    const double fan_in = static_cast<double>(l.taps() * cin);
    const double bound = std::sqrt(2.0 / fan_in);
    std::uniform_real_distribution<double> u(-bound, bound);
    l.w.resize(static_cast<Eigen::Index>(l.out), static_cast<Eigen::Index>(l.taps() * cin));
    for (Eigen::Index c = 0; c < l.w.cols(); ++c)
      for (Eigen::Index r = 0; r < l.w.rows(); ++r) l.w(r, c) = u(rng);
    l.b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(l.out));
    m.layers.push_back(std::move(l));
    cin = s.out;
  }
  return m;
}

Volume forward(const ModelWeights& m, const Volume& x) {
  check_forward_input(m, x);
  Volume a = conv_forward(m.layers[0], x);
  for (std::size_t i = 1; i < m.layers.size(); ++i) a = conv_forward(m.layers[i], a);
  return a;
}

void TrainConfig::validate() const {
  if (!(alpha >= 0 && alpha <= 1)) throw ConfigError("alpha must lie in [0, 1]");
  if (!(beta >= 0)) throw ConfigError("beta must be non-negative");
  if (!(lr > 0)) throw ConfigError("learning rate must be positive");
  if (!(lr_final >= 0)) throw ConfigError("lr_final must be non-negative");
  if (iterations < 1) throw ConfigError("iterations must be at least 1");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0)) throw ConfigError("Adam epsilon must be positive");
  for (auto w : widths)
    if (w == 0) throw ConfigError("hidden widths must be positive");
  if (reg_norm != "sum" && reg_norm != "mean") throw ConfigError("reg_norm must be \"sum\" or \"mean\"");
}

json to_json(const TrainConfig& c) {
  return {{"alpha", c.alpha},         {"beta", c.beta},
          {"lr", c.lr},               {"lr_final", c.lr_final},
          {"iterations", c.iterations},
          {"adam_beta1", c.adam_beta1}, {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},   {"seed", c.seed},
          {"widths", c.widths},       {"l2_squared", c.l2_squared},
          {"reg_norm", c.reg_norm},   {"train_bias", c.train_bias}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      if (k == "alpha") c.alpha = it->get<double>();
      else if (k == "beta") c.beta = it->get<double>();
      else if (k == "lr") c.lr = it->get<double>();
      else if (k == "lr_final") c.lr_final = it->get<double>();
      else if (k == "iterations") c.iterations = it->get<std::size_t>();
      else if (k == "adam_beta1") c.adam_beta1 = it->get<double>();
      else if (k == "adam_beta2") c.adam_beta2 = it->get<double>();
      else if (k == "adam_eps") c.adam_eps = it->get<double>();
      else if (k == "seed") c.seed = it->get<std::uint64_t>();
      else if (k == "widths") c.widths = it->get<std::array<std::size_t, 4>>();
      else if (k == "l2_squared") c.l2_squared = it->get<bool>();
      else if (k == "reg_norm") c.reg_norm = it->get<std::string>();
      else if (k == "train_bias") c.train_bias = it->get<bool>();
      else throw ConfigError("unknown training key \"" + k + "\"");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad training config: ") + e.what());
  }
  c.validate();
  return c;
}

LossParts loss(const ModelWeights& m, const std::vector<Volume>& preds, const std::vector<Sample>& samples,
               const TrainConfig& cfg) {
  if (preds.size() != samples.size()) throw DataError("prediction and sample counts differ");
  LossParts lp;
  double abs_sum = 0, sq_sum = 0;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto& t = samples[s];
    if (preds[s].v.rows() != t.target.v.rows() || preds[s].v.cols() != t.target.v.cols())
      throw DataError("prediction extent " + ext_str(preds[s].ext) + " differs from target " + ext_str(t.target.ext));
    const Eigen::ArrayXXd e = (preds[s].v - t.target.v).array() * t.mask.array();
    abs_sum += e.abs().sum();
    sq_sum += e.square().sum();
    lp.valid += static_cast<std::size_t>((t.mask.array() != 0).count());
  }
  if (lp.valid == 0) throw DataError("loss has no valid elements");
  const double n = static_cast<double>(lp.valid);
  lp.l1 = abs_sum / n;
  lp.l2 = cfg.l2_squared ? sq_sum / n : std::sqrt(sq_sum / n);
  double r = theta_sq(m);
  if (cfg.reg_norm == "mean") r /= static_cast<double>(m.parameter_count());
  lp.reg = cfg.l2_squared ? r : std::sqrt(r);
  lp.total = cfg.alpha * lp.l1 + (1 - cfg.alpha) * lp.l2 + cfg.beta * lp.reg;
  return lp;
}

Gradient backward(const ModelWeights& m, const std::vector<Sample>& samples, const TrainConfig& cfg) {
  const std::size_t nl = m.layers.size();
  std::vector<std::vector<Volume>> acts(samples.size());
  std::vector<Volume> preds;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    check_forward_input(m, samples[s].input);
    auto& a = acts[s];
    a.push_back(conv_forward(m.layers[0], samples[s].input));
    for (std::size_t i = 1; i < nl; ++i) a.push_back(conv_forward(m.layers[i], a.back()));
    preds.push_back(a.back());
  }

  Gradient g;
  g.loss = loss(m, preds, samples, cfg);
  g.grad = m;
  for (auto& l : g.grad.layers) l.w.setZero(), l.b.setZero();

  const double n = static_cast<double>(g.loss.valid);
  double sq_sum = 0;
  for (std::size_t s = 0; s < samples.size(); ++s)
    sq_sum += ((preds[s].v - samples[s].target.v).array() * samples[s].mask.array()).square().sum();
  const double rms = std::sqrt(sq_sum / n);

  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto& smp = samples[s];
    const Eigen::ArrayXXd e = (preds[s].v - smp.target.v).array() * smp.mask.array();
    Eigen::MatrixXd d = (cfg.alpha / n) * e.sign().matrix();
    if (cfg.l2_squared) {
      d += (2.0 * (1 - cfg.alpha) / n) * e.matrix();
    } else if (rms > 0) {
      d += ((1 - cfg.alpha) / (n * rms)) * e.matrix();
    }

    for (std::size_t li = nl; li-- > 0;) {
      const ConvLayer& l = m.layers[li];
      ConvLayer& gl = g.grad.layers[li];
      const Volume& y = acts[s][li];
      const Volume& x = li == 0 ? smp.input : acts[s][li - 1];
      if (l.relu) d = (y.v.array() > 0).select(d.array(), 0.0).matrix();
      gl.b += d.rowwise().sum();
      const Ext3 oe = y.ext;
      const std::size_t np = y.positions();
      const std::size_t rows = l.taps() * l.in;
      Eigen::MatrixXd cols(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(std::min(np, kChunk)));
      Volume dx;
      if (li > 0) dx = Volume(l.in, x.ext);
      for (std::size_t p0 = 0; p0 < np; p0 += kChunk) {
        const std::size_t p1 = std::min(np, p0 + kChunk);
        const auto w = static_cast<Eigen::Index>(p1 - p0);
        im2col(l, x, oe, p0, p1, cols);
        const auto dchunk = d.middleCols(static_cast<Eigen::Index>(p0), w);
        gl.w.noalias() += dchunk * cols.leftCols(w).transpose();
        if (li > 0) {
          const Eigen::MatrixXd dcols = l.w.transpose() * dchunk;
          col2im_add(l, dx, oe, p0, p1, dcols);
        }
      }
      if (li > 0) d = std::move(dx.v);
    }
  }

  double r = theta_sq(m);
  const double count = static_cast<double>(m.parameter_count());
  if (cfg.reg_norm == "mean") r /= count;
  double scale = 0;
  if (cfg.l2_squared) {
    scale = 2.0 * cfg.beta;
  } else if (r > 0) {
    scale = cfg.beta / std::sqrt(r);
  }
  if (cfg.reg_norm == "mean") scale /= count;
  if (scale != 0)
    for (std::size_t i = 0; i < nl; ++i) {
      g.grad.layers[i].w += scale * m.layers[i].w;
      g.grad.layers[i].b += scale * m.layers[i].b;
    }
  return g;
}

double step_lr(const TrainConfig& cfg, std::size_t step) {
  if (cfg.lr_final <= 0 || cfg.iterations < 2) return cfg.lr;
  const double f = static_cast<double>(step) / static_cast<double>(cfg.iterations - 1);
  return cfg.lr * std::pow(cfg.lr_final / cfg.lr, f);
}

TrainResult train(ModelWeights model, const std::vector<Sample>& samples, const TrainConfig& cfg,
                  const std::function<void(std::size_t, double)>& progress) {
  cfg.validate();
  model.check();
  const auto t0 = std::chrono::steady_clock::now();
  struct Moments {
    Eigen::MatrixXd mw, vw;
    Eigen::VectorXd mb, vb;
  };
  std::vector<Moments> mom;
  for (auto& l : model.layers)
    mom.push_back({Eigen::MatrixXd::Zero(l.w.rows(), l.w.cols()), Eigen::MatrixXd::Zero(l.w.rows(), l.w.cols()),
                   Eigen::VectorXd::Zero(l.b.size()), Eigen::VectorXd::Zero(l.b.size())});
  TrainResult res;
  res.history.reserve(cfg.iterations);
  double p1 = 1, p2 = 1;
  for (std::size_t step = 0; step < cfg.iterations; ++step) {
    const Gradient g = backward(model, samples, cfg);
    if (!std::isfinite(g.loss.total))
      throw NumericalError("training loss became non-finite at step " + std::to_string(step));
    res.history.push_back(g.loss.total);
    p1 *= cfg.adam_beta1;
    p2 *= cfg.adam_beta2;
    const double c1 = 1.0 / (1.0 - p1), c2 = 1.0 / (1.0 - p2);
    const double lr = step_lr(cfg, step);
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
      auto& l = model.layers[i];
      auto& mo = mom[i];
      const auto& gw = g.grad.layers[i].w;
      const auto& gb = g.grad.layers[i].b;
      mo.mw = cfg.adam_beta1 * mo.mw + (1 - cfg.adam_beta1) * gw;
      mo.vw = cfg.adam_beta2 * mo.vw + (1 - cfg.adam_beta2) * gw.cwiseAbs2();
      mo.mb = cfg.adam_beta1 * mo.mb + (1 - cfg.adam_beta1) * gb;
      mo.vb = cfg.adam_beta2 * mo.vb + (1 - cfg.adam_beta2) * gb.cwiseAbs2();
      l.w.array() -= lr * (mo.mw.array() * c1) / ((mo.vw.array() * c2).sqrt() + cfg.adam_eps);
      if (cfg.train_bias) l.b.array() -= lr * (mo.mb.array() * c1) / ((mo.vb.array() * c2).sqrt() + cfg.adam_eps);
    }
    if (progress) progress(step, g.loss.total);
  }
  res.model = std::move(model);
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

namespace {

void put_le(std::ofstream& f, double d) {
  std::uint64_t v = std::bit_cast<std::uint64_t>(d);
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  f.write(buf, 8);
}

double get_le(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<double>(v);
}

}  // namespace

void save_model(const ModelWeights& m, const std::string& stem, const json& extra) {
  m.check();
  json man;
  man["format"] = "eraki-model";
  man["dtype"] = "float64";
  man["byte_order"] = "little";
  man["in_channels"] = m.in_channels();
  man["out_channels"] = m.out_channels();
  man["receptive_field"] = m.receptive_field();
  man["layers"] = json::array();
  const std::string base = std::filesystem::path(stem).filename().string();
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const auto& l = m.layers[i];
    const std::string file = stem + ".layer" + std::to_string(i) + ".bin";
    std::ofstream f(file, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + file);
    for (std::size_t o = 0; o < l.out; ++o)
      for (std::size_t ci = 0; ci < l.in; ++ci)
        for (std::size_t a = 0; a < l.k[0]; ++a)
          for (std::size_t b = 0; b < l.k[1]; ++b)
            for (std::size_t c = 0; c < l.k[2]; ++c)
              put_le(f, l.w(static_cast<Eigen::Index>(o),
                            static_cast<Eigen::Index>(((a * l.k[1] + b) * l.k[2] + c) * l.in + ci)));
    for (std::size_t o = 0; o < l.out; ++o) put_le(f, l.b(static_cast<Eigen::Index>(o)));
    if (!f) throw DataError("short write on " + file);
    man["layers"].push_back({{"in", l.in},
                             {"out", l.out},
                             {"kernel", l.k},
                             {"relu", l.relu},
                             {"file", base + ".layer" + std::to_string(i) + ".bin"}});
  }
  man["extra"] = extra.is_null() ? json::object() : extra;
  std::ofstream h(stem + ".json", std::ios::trunc);
  if (!h) throw DataError("cannot write " + stem + ".json");
  h << man.dump(2) << '\n';
}

ModelWeights load_model(const std::string& stem, json* extra) {
  std::ifstream h(stem + ".json");
  if (!h) throw DataError("cannot read " + stem + ".json");
  json man;
  try {
    man = json::parse(h);
  } catch (const json::exception& e) {
    throw DataError("malformed model manifest " + stem + ".json: " + e.what());
  }
  ModelWeights m;
  try {
    if (man.at("format") != "eraki-model") throw DataError("not a model manifest: " + stem + ".json");
    const std::filesystem::path dir = std::filesystem::path(stem).parent_path();
    for (auto& jl : man.at("layers")) {
      ConvLayer l;
      l.in = jl.at("in").get<std::size_t>();
      l.out = jl.at("out").get<std::size_t>();
      l.k = jl.at("kernel").get<Ext3>();
      l.relu = jl.at("relu").get<bool>();
      const std::string file = (dir / jl.at("file").get<std::string>()).string();
      std::ifstream f(file, std::ios::binary);
      if (!f) throw DataError("cannot read " + file);
      std::vector<char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
      const std::size_t nw = l.out * l.in * l.taps();
      if (buf.size() != 8 * (nw + l.out))
        throw DataError(file + " holds " + std::to_string(buf.size()) + " bytes, expected " +
                        std::to_string(8 * (nw + l.out)));
      l.w.resize(static_cast<Eigen::Index>(l.out), static_cast<Eigen::Index>(l.taps() * l.in));
      l.b.resize(static_cast<Eigen::Index>(l.out));
      std::size_t idx = 0;
      for (std::size_t o = 0; o < l.out; ++o)
        for (std::size_t ci = 0; ci < l.in; ++ci)
          for (std::size_t a = 0; a < l.k[0]; ++a)
            for (std::size_t b = 0; b < l.k[1]; ++b)
              for (std::size_t c = 0; c < l.k[2]; ++c)
                l.kernel(o, ci, a, b, c) = get_le(buf.data() + 8 * idx++);
      for (std::size_t o = 0; o < l.out; ++o) l.b(static_cast<Eigen::Index>(o)) = get_le(buf.data() + 8 * idx++);
      m.layers.push_back(std::move(l));
    }
    if (extra) *extra = man.value("extra", json::object());
  } catch (const json::exception& e) {
    throw DataError("malformed model manifest " + stem + ".json: " + e.what());
  }
  m.check();
  return m;
}

}  // namespace eraki
