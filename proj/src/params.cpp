#include "crowdhg/params.hpp"

#include <cmath>

#include "crowdhg/error.hpp"

namespace crowdhg {

void ParamStore::add(const std::string& name, Tensor value) {
  if (!params_.emplace(name, std::move(value)).second) {
    throw ValidationError("duplicate parameter '" + name + "'");
  }
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ValidationError("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ValidationError("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParamStore::total_size() const noexcept {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.size();
  return n;
}

ParamStore ParamStore::zeros_like() const {
  ParamStore out;
  for (const auto& [name, t] : params_) out.add(name, Tensor(t.shape(), 0.0));
  return out;
}

bool ParamStore::same_layout(const ParamStore& other) const {
  if (params_.size() != other.params_.size()) return false;
  auto it = other.params_.begin();
  for (const auto& [name, t] : params_) {
    if (it->first != name || it->second.shape() != t.shape()) return false;
    ++it;
  }
  return true;
}

void ParamStore::add_scaled(const ParamStore& other, double s) {
  if (!same_layout(other)) throw ValidationError("add_scaled: parameter layout mismatch");
  auto it = other.params_.begin();
  for (auto& [_, t] : params_) {
    const auto& o = it->second;
    for (std::size_t i = 0; i < t.size(); ++i) t[i] += s * o[i];
    ++it;
  }
}

double ParamStore::l2_norm() const {
  double s = 0.0;
  for (const auto& [_, t] : params_)
    for (double v : t.values()) s += v * v;
  return std::sqrt(s);
}

bool ParamStore::all_finite() const {
  for (const auto& [_, t] : params_)
    if (!t.all_finite()) return false;
  return true;
}

Var ParamBinder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Var v = graph_.leaf(store_.at(name), true);
  bound_.emplace(name, v);
  return v;
}

ParamStore ParamBinder::gradients(const Gradients& grads) const {
  ParamStore out;
  for (const auto& [name, t] : store_) {
    auto it = bound_.find(name);
    if (it == bound_.end()) {
      out.add(name, Tensor(t.shape(), 0.0));
    } else {
      out.add(name, grads.of(it->second).reshaped(t.shape()));
    }
  }
  return out;
}

nlohmann::json params_to_json(const ParamStore& store) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, t] : store) {
    j[name] = {{"shape", t.shape()}, {"values", std::vector<double>(t.values().begin(), t.values().end())}};
  }
  return j;
}

ParamStore params_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("parameter block must be a JSON object");
  ParamStore store;
  for (const auto& [name, entry] : j.items()) {
    try {
      auto shape = entry.at("shape").get<std::vector<std::size_t>>();
      auto values = entry.at("values").get<std::vector<double>>();
      store.add(name, Tensor(std::move(shape), std::move(values)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("parameter '" + name + "': " + e.what());
    } catch (const ValidationError& e) {
      throw FormatError("parameter '" + name + "': " + e.what());
    }
  }
  return store;
}

}  // namespace crowdhg
