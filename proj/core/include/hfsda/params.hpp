#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hfsda/autograd.hpp"
#include "hfsda/random.hpp"
#include "hfsda/tensor.hpp"

namespace hfsda {

// Ordered collection of named trainable tensors. Iteration order is
// registration order, which is also the checkpoint order.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;

  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  std::size_t count_scalars() const;
  std::size_t count_scalars(const std::string& prefix) const;

  std::vector<Tensor>& tensors() { return tensors_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::map<std::string, std::size_t> index_;
};

// Per-forward-pass state: leaf variables bound to the parameter store, the
// training flag and the dropout stream.
class Context {
 public:
  Context(const ParamStore& params, bool training, std::uint64_t dropout_seed = 0)
      : params_(&params), training_(training), rng_(dropout_seed) {}

  // Leaf bound to the named parameter; created once per context.
  ag::Var param(const std::string& name);
  bool training() const { return training_; }
  Rng& rng() { return rng_; }

  // Gradients of every parameter touched during this pass, in store order;
  // untouched parameters get zeros.
  std::vector<Tensor> gradients() const;

 private:
  const ParamStore* params_;
  bool training_;
  Rng rng_;
  std::map<std::string, ag::Var> bound_;
};

namespace init {

Tensor xavier_uniform(int fan_in, int fan_out, Shape shape, Rng& rng);
Tensor normal(Shape shape, double stddev, Rng& rng);

}  // namespace init

}  // namespace hfsda
