#include "arc/arc_model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "arc/error.hpp"
#include "arc/serialize.hpp"

namespace arc {

const Tensor& present(int t, const Tensor& x_a, const Tensor& x_b, int total_steps) {
  if (t < 0 || t >= total_steps) {
    throw std::out_of_range("present: step " + std::to_string(t) + " outside [0, " +
                            std::to_string(total_steps) + ")");
  }
  return t % 2 == 0 ? x_a : x_b;
}

ArcModel::ArcModel(ArcConfig cfg, std::uint64_t seed)
    : cfg_(cfg), att_(cfg.image_side, cfg.glimpse_side) {
  if (cfg.glimpses < 1 || cfg.hidden < 1) {
    throw config_error("arc model: glimpses and hidden size must be positive");
  }
  Rng rng(mix_seed(seed));
  const int nn = cfg.glimpse_side * cfg.glimpse_side;
  cell = LstmCell(nn, cfg.hidden, rng);
  proj = GlimpseProjection(cfg.hidden, rng, cfg.proj_bias);
  // zero head: an untrained model scores every pair at exactly 0.5
  head_w = Tensor::zeros({1, cfg.hidden});
  head_b = Tensor::zeros({1});
  head_w.set_requires_grad(true);
  head_b.set_requires_grad(true);
}

ComparisonResult ArcModel::compare(const Tensor& x_a, const Tensor& x_b, bool with_trace) const {
  const int s = cfg_.image_side;
  for (const Tensor* img : {&x_a, &x_b}) {
    if (img->rank() != 2 || img->dim(0) != s || img->dim(1) != s) {
      throw dim_error("compare: image shape " + shape_str(img->shape()) + " does not match S=" +
                      std::to_string(s));
    }
    for (double v : img->values()) {
      if (!std::isfinite(v)) throw numeric_error("compare: non-finite image value");
    }
  }
  const int total = cfg_.total_steps();
  ComparisonResult result;
  if (with_trace) result.trace.emplace();
  LstmState st = cell.zero_state();
  for (int t = 0; t < total; ++t) {
    Tensor omega = proj(st.h);
    GlimpseParams p = att_.unpack(omega);
    Tensor glimpse = att_.attend(present(t, x_a, x_b, total), att_.filterbanks(p));
    st = cell.step(glimpse, st);
    if (with_trace) {
      GlimpseRecord rec;
      rec.step = t;
      rec.attended = t % 2;
      rec.x_hat = p.x_hat.value();
      rec.y_hat = p.y_hat.value();
      rec.delta_hat = p.delta_hat.value();
      rec.x = p.x.value();
      rec.y = p.y.value();
      rec.delta = p.delta.value();
      rec.gamma = p.gamma.value();
      result.trace->steps.push_back(rec);
      result.trace->hidden.push_back(st.h.values());
    }
  }
  result.similarity = sigmoid(matmul(head_w, st.h) + head_b);
  result.embedding = st.h;
  if (with_trace) result.trace->similarity = result.similarity.value();
  return result;
}

double ArcModel::similarity(const Tensor& x_a, const Tensor& x_b) const {
  return compare(x_a, x_b).similarity.value();
}

double ArcModel::symmetrized_similarity(const Tensor& x_a, const Tensor& x_b) const {
  return 0.5 * (similarity(x_a, x_b) + similarity(x_b, x_a));
}

std::vector<std::vector<double>> ArcModel::probe_states(const Tensor& x_a,
                                                        const Tensor& x_b) const {
  ComparisonResult r = compare(x_a, x_b, true);
  std::vector<std::vector<double>> probes;
  for (int t = 1; t < cfg_.total_steps(); t += 2) {
    probes.push_back(r.trace->hidden[static_cast<std::size_t>(t)]);
  }
  return probes;
}

std::vector<std::pair<std::string, Tensor>> ArcModel::named_params() const {
  auto out = cell.named_params("lstm");
  for (auto& p : proj.named_params("proj")) out.push_back(p);
  out.emplace_back("head.w", head_w);
  out.emplace_back("head.b", head_b);
  return out;
}

std::vector<Tensor> ArcModel::params() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_params()) {
    (void)name;
    out.push_back(t);
  }
  return out;
}

void save_model(std::ostream& os, const ArcModel& model) {
  const ArcConfig& c = model.config();
  auto named = model.named_params();
  os << "arc-model v1\n";
  os << "S=" << c.image_side << " N=" << c.glimpse_side << " g=" << c.glimpses
     << " H=" << c.hidden << " proj_bias=" << (c.proj_bias ? 1 : 0) << "\n";
  os << "params=" << named.size() << "\n";
  for (auto& [name, t] : named) {
    os << name << "\n";
    write_tensor(os, t);
  }
  if (!os) throw io_error("model write failed");
}

void save_model(const std::string& path, const ArcModel& model) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open for write: " + path);
  save_model(f, model);
}

ArcModel load_model(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "arc-model v1") {
    throw io_error("bad model header: " + line);
  }
  if (!std::getline(is, line)) throw io_error("truncated model header");
  ArcConfig cfg;
  int bias = 0;
  if (std::sscanf(line.c_str(), "S=%d N=%d g=%d H=%d proj_bias=%d", &cfg.image_side,
                  &cfg.glimpse_side, &cfg.glimpses, &cfg.hidden, &bias) != 5) {
    throw io_error("bad model config line: " + line);
  }
  cfg.proj_bias = bias != 0;
  if (!std::getline(is, line) || line.rfind("params=", 0) != 0) {
    throw io_error("bad model params line");
  }
  const std::size_t count = std::stoul(line.substr(7));
  ArcModel model(cfg, 0);
  auto named = model.named_params();
  if (count != named.size()) {
    throw io_error("checkpoint has " + std::to_string(count) + " params, model expects " +
                   std::to_string(named.size()));
  }
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(is, line)) throw io_error("truncated checkpoint");
    Tensor t = read_tensor(is);
    bool found = false;
    for (auto& [name, param] : named) {
      if (name != line) continue;
      if (t.shape() != param.shape()) {
        throw io_error("checkpoint tensor " + name + " has shape " + shape_str(t.shape()) +
                       ", expected " + shape_str(param.shape()));
      }
      param.values_mut() = t.values();
      found = true;
      break;
    }
    if (!found) throw io_error("unknown checkpoint tensor: " + line);
  }
  return model;
}

ArcModel load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open for read: " + path);
  return load_model(f);
}

}  // namespace arc
