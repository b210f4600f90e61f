#pragma once

#include <map>
#include <string>
#include <vector>

#include "iaqcast/rng.hpp"
#include "iaqcast/tensor.hpp"

namespace iaq {

struct Param {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

// Named parameter store with a stable order; the order defines optimizer
// state alignment and the checkpoint layout.
class ModelParams {
 public:
  Param& add(const std::string& name, Shape shape, std::vector<double> data);
  Param& add_zeros(const std::string& name, Shape shape);
  // uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))
  Param& add_linear(const std::string& name, Shape shape, std::size_t fan_in, Rng& rng);

  const Param& at(const std::string& name) const;
  Param& at(const std::string& name);
  bool has(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<Param>& all() { return params_; }
  const std::vector<Param>& all() const { return params_; }
  std::size_t count() const { return params_.size(); }
  std::size_t total_size() const;

  Tensor bind(Graph& g, const std::string& name) const;

 private:
  std::vector<Param> params_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace iaq
