#include "lgn/network.hpp"

#include <algorithm>
#include <stdexcept>

namespace lgn {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

template <typename T>
Network<T>::Network(ModelSpec spec, std::uint64_t seed)
    : spec_(std::move(spec)), seed_(seed), input_shape_(spec_.input_shape()) {
  const auto shapes = propagate_shapes(spec_);
  head_.classes = spec_.classes;
  head_.tau = spec_.tau;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const Shape in = shapes[i];
    const auto& layer = spec_.layers[i];
    const std::uint64_t layer_seed = mix_seed(seed, i);
    if (const auto* c = std::get_if<TreeConvSpec>(&layer)) {
      auto table = sample_connections(layer_seed, in.channels, c->receptive, c->receptive,
                                      c->kernels, c->depth, c->channel_restriction, c->groups);
      TreeConvLayer<T> conv(std::move(table), in.height, in.width, c->padding);
      const bool pool = i + 1 < spec_.layers.size() &&
                        std::holds_alternative<OrPoolSpec>(spec_.layers[i + 1]);
      stages_.emplace_back(std::in_place_type<ConvBlock<T>>, std::move(conv), pool);
      if (pool) ++i;
    } else if (std::holds_alternative<OrPoolSpec>(layer)) {
      stages_.emplace_back(PoolStage{in, or_pool_output_shape(in)});
    } else {
      const auto& r = std::get<RandomSpec>(layer);
      stages_.emplace_back(std::in_place_type<RandomLayer<T>>,
                           sample_random_wiring(layer_seed, static_cast<int>(in.size()),
                                                r.outputs));
    }
  }
}

template <typename T>
std::vector<GateParams<T>*> Network<T>::gate_params() {
  std::vector<GateParams<T>*> out;
  for (auto& s : stages_) {
    if (auto* c = std::get_if<ConvBlock<T>>(&s)) out.push_back(&c->params());
    if (auto* r = std::get_if<RandomLayer<T>>(&s)) out.push_back(&r->params());
  }
  return out;
}

template <typename T>
std::vector<const GateParams<T>*> Network<T>::gate_params() const {
  std::vector<const GateParams<T>*> out;
  for (const auto& s : stages_) {
    if (const auto* c = std::get_if<ConvBlock<T>>(&s)) out.push_back(&c->params());
    if (const auto* r = std::get_if<RandomLayer<T>>(&s)) out.push_back(&r->params());
  }
  return out;
}

template <typename T>
std::size_t Network<T>::node_count() const {
  std::size_t n = 0;
  for (const auto* p : gate_params()) n += p->size();
  return n;
}

template <typename T>
void Network<T>::init(InitScheme scheme, T residual_strength, std::mt19937_64& rng) {
  for (auto* p : gate_params()) {
    if (scheme == InitScheme::kResidual) {
      p->init_residual(residual_strength);
    } else {
      p->init_gaussian(rng);
    }
  }
}

template <typename T>
void Network<T>::prepare() {
  for (auto* p : gate_params()) p->prepare();
}

template <typename T>
void Network<T>::prepare_hard() {
  for (auto* p : gate_params()) p->prepare_hard();
}

template <typename T>
std::vector<T> Network<T>::parameters() const {
  std::vector<T> flat;
  flat.reserve(parameter_count());
  for (const auto* p : gate_params()) {
    flat.insert(flat.end(), p->logits().begin(), p->logits().end());
  }
  return flat;
}

template <typename T>
void Network<T>::set_parameters(std::span<const T> flat) {
  if (flat.size() != parameter_count()) {
    throw std::invalid_argument("parameter count mismatch: got " + std::to_string(flat.size()) +
                                ", network has " + std::to_string(parameter_count()));
  }
  std::size_t off = 0;
  for (auto* p : gate_params()) {
    auto dst = p->logits();
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), dst.size(), dst.begin());
    off += dst.size();
    p->prepare();
  }
}

template <typename T>
typename Network<T>::Workspace Network<T>::make_workspace() const {
  Workspace ws;
  ws.acts.emplace_back(input_size());
  for (const auto& s : stages_) {
    std::size_t out = 0;
    std::size_t idx = 0;
    if (const auto* c = std::get_if<ConvBlock<T>>(&s)) {
      out = c->output_shape().size();
      idx = c->pooled() ? out : 0;
    } else if (const auto* p = std::get_if<PoolStage>(&s)) {
      out = p->out.size();
      idx = out;
    } else {
      out = static_cast<std::size_t>(std::get<RandomLayer<T>>(s).output_size());
    }
    ws.acts.emplace_back(out);
    ws.argmax.emplace_back(idx);
  }
  ws.grads.resize(ws.acts.size());
  for (std::size_t i = 0; i < ws.acts.size(); ++i) ws.grads[i].resize(ws.acts[i].size());
  ws.scores.resize(static_cast<std::size_t>(head_.classes));
  head_.group_size(ws.acts.back().size());
  return ws;
}

template <typename T>
void Network<T>::Gradients::clear() {
  for (auto& v : dcoef) std::fill(v.begin(), v.end(), GateCoeffs<T>{});
}

template <typename T>
void Network<T>::Gradients::add(const Gradients& other) {
  for (std::size_t l = 0; l < dcoef.size(); ++l) {
    auto& dst = dcoef[l];
    const auto& src = other.dcoef[l];
    for (std::size_t i = 0; i < dst.size(); ++i) {
      dst[i].c0 += src[i].c0;
      dst[i].c1 += src[i].c1;
      dst[i].c2 += src[i].c2;
      dst[i].c3 += src[i].c3;
    }
  }
}

template <typename T>
typename Network<T>::Gradients Network<T>::make_gradients() const {
  Gradients g;
  for (const auto* p : gate_params()) g.dcoef.emplace_back(p->size());
  return g;
}

template <typename T>
void Network<T>::forward(std::span<const T> input, Workspace& ws) const {
  if (input.size() != input_size()) {
    throw ShapeError("network input has " + std::to_string(input.size()) + " values, expected " +
                     std::to_string(input_size()));
  }
  std::copy(input.begin(), input.end(), ws.acts[0].begin());
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const std::span<const T> in = ws.acts[i];
    const std::span<T> out = ws.acts[i + 1];
    const auto& s = stages_[i];
    if (const auto* c = std::get_if<ConvBlock<T>>(&s)) {
      c->forward(in, out, ws.argmax[i]);
    } else if (const auto* p = std::get_if<PoolStage>(&s)) {
      or_pool_forward<T>(p->in, in, out, ws.argmax[i]);
    } else {
      std::get<RandomLayer<T>>(s).forward(in, out);
    }
  }
  head_.forward<T>(ws.acts.back(), ws.scores);
}

template <typename T>
void Network<T>::backward(Workspace& ws, std::span<const T> grad_scores,
                          Gradients& grads) const {
  auto& last = ws.grads.back();
  std::fill(last.begin(), last.end(), T(0));
  head_.backward<T>(grad_scores, last);
  std::size_t param_index = 0;
  for (const auto& s : stages_) {
    if (!std::holds_alternative<PoolStage>(s)) ++param_index;
  }
  for (std::size_t i = stages_.size(); i-- > 0;) {
    std::span<T> grad_in;
    if (i > 0) {
      std::fill(ws.grads[i].begin(), ws.grads[i].end(), T(0));
      grad_in = ws.grads[i];
    }
    const std::span<const T> in = ws.acts[i];
    const std::span<const T> grad_out = ws.grads[i + 1];
    const auto& s = stages_[i];
    if (const auto* c = std::get_if<ConvBlock<T>>(&s)) {
      --param_index;
      c->backward(in, ws.argmax[i], grad_out, grad_in, grads.dcoef[param_index]);
    } else if (const auto* p = std::get_if<PoolStage>(&s)) {
      if (!grad_in.empty()) or_pool_backward<T>(p->in, ws.argmax[i], grad_out, grad_in);
    } else {
      --param_index;
      std::get<RandomLayer<T>>(s).backward(in, grad_out, grad_in, grads.dcoef[param_index]);
    }
  }
}

template <typename T>
void Network<T>::logit_gradients(const Gradients& grads, std::span<T> dlogits) const {
  if (dlogits.size() != parameter_count()) throw ShapeError("logit gradient size mismatch");
  std::fill(dlogits.begin(), dlogits.end(), T(0));
  std::size_t off = 0;
  const auto params = gate_params();
  for (std::size_t l = 0; l < params.size(); ++l) {
    const std::size_t n = params[l]->size() * kNumGates;
    params[l]->accumulate_logit_grad(grads.dcoef[l], dlogits.subspan(off, n));
    off += n;
  }
}

template class Network<float>;
template class Network<double>;

}  // namespace lgn
