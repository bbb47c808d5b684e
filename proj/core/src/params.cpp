#include "hfsda/params.hpp"

#include <cmath>

#include "hfsda/errors.hpp"

namespace hfsda {

Tensor& ParamStore::add(const std::string& name, Tensor value) {
  if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
  index_[name] = tensors_.size();
  names_.push_back(name);
  tensors_.push_back(std::move(value));
  return tensors_.back();
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return tensors_[it->second];
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return tensors_[it->second];
}

std::size_t ParamStore::count_scalars() const {
  std::size_t n = 0;
  for (const Tensor& t : tensors_) n += t.size();
  return n;
}

std::size_t ParamStore::count_scalars(const std::string& prefix) const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i].rfind(prefix, 0) == 0) n += tensors_[i].size();
  return n;
}

ag::Var Context::param(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  ag::Var v = ag::Var::leaf(params_->get(name));
  bound_.emplace(name, v);
  return v;
}

std::vector<Tensor> Context::gradients() const {
  std::vector<Tensor> out;
  out.reserve(params_->size());
  for (std::size_t i = 0; i < params_->size(); ++i) {
    const std::string& name = params_->names()[i];
    auto it = bound_.find(name);
    out.push_back(it == bound_.end() ? Tensor(params_->tensors()[i].shape()) : it->second.grad());
  }
  return out;
}

namespace init {

Tensor xavier_uniform(int fan_in, int fan_out, Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.values()) v = rng.uniform(-a, a);
  return t;
}

Tensor normal(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = stddev * rng.normal();
  return t;
}

}  // namespace init

}  // namespace hfsda
