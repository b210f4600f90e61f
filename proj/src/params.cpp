#include "iaqcast/params.hpp"

#include <cmath>

namespace iaq {

Param& ModelParams::add(const std::string& name, Shape shape, std::vector<double> data) {
  if (index_.count(name)) throw Error::internal("duplicate parameter '" + name + "'");
  if (shape_numel(shape) != data.size())
    throw Error::internal("parameter '" + name + "': data does not match shape");
  index_.emplace(name, params_.size());
  params_.push_back({name, std::move(shape), std::move(data)});
  return params_.back();
}

Param& ModelParams::add_zeros(const std::string& name, Shape shape) {
  std::vector<double> z(shape_numel(shape), 0.0);
  return add(name, std::move(shape), std::move(z));
}

Param& ModelParams::add_linear(const std::string& name, Shape shape, std::size_t fan_in,
                               Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return add(name, std::move(shape), std::move(v));
}

const Param& ModelParams::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error::internal("unknown parameter '" + name + "'");
  return params_[it->second];
}

Param& ModelParams::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error::internal("unknown parameter '" + name + "'");
  return params_[it->second];
}

std::size_t ModelParams::total_size() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.data.size();
  return n;
}

Tensor ModelParams::bind(Graph& g, const std::string& name) const {
  const Param& p = at(name);
  return g.leaf(p.name, p.shape, p.data);
}

}  // namespace iaq
