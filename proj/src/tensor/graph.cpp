#include "selfaug/tensor/graph.hpp"

#include "selfaug/errors.hpp"

#include <fmt/format.h>

namespace selfaug {

std::size_t ParamStore::add(std::string name, Tensor value) {
    Tensor grad = Tensor::zeros_like(value);
    params_.push_back(Parameter{std::move(name), std::move(value), std::move(grad)});
    return params_.size() - 1;
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

const Parameter* ParamStore::find(std::string_view name) const {
    for (const auto& p : params_) {
        if (p.name == name) return &p;
    }
    return nullptr;
}

void ParamStore::zero_grad() {
    for (auto& p : params_) p.grad.fill(0.0);
}

bool ParamStore::same_values(const ParamStore& other) const {
    if (other.size() != size()) return false;
    for (std::size_t i = 0; i < size(); ++i) {
        if (params_[i].name != other.params_[i].name || params_[i].value != other.params_[i].value) return false;
    }
    return true;
}

Var Graph::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Tensor value) {
    Node n;
    n.op = "constant";
    n.value = std::move(value);
    return push(std::move(n));
}

Var Graph::leaf(Tensor value, bool requires_grad) {
    Node n;
    n.op = "leaf";
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    return push(std::move(n));
}

Var Graph::param(Parameter& p) {
    Node n;
    n.op = "param";
    n.value = p.value;
    n.requires_grad = true;
    n.param = &p;
    return push(std::move(n));
}

Var Graph::record(std::string op, Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
    Node n;
    n.op = std::move(op);
    n.value = std::move(value);
    n.inputs.reserve(inputs.size());
    for (const auto& in : inputs) {
        if (in.graph_ != this) throw std::logic_error(fmt::format("{}: input belongs to another graph", n.op));
        n.inputs.push_back(in.id());
        n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(backward);
    return push(std::move(n));
}

Tensor* Graph::grad_sink(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return nullptr;
    if (n.grad.empty()) n.grad = Tensor::zeros_like(n.value);
    return &n.grad;
}

void Graph::backward(Var loss) {
    if (loss.graph_ != this) throw std::logic_error("backward: loss belongs to another graph");
    const Node& root = nodes_[loss.id()];
    if (root.value.size() != 1) {
        throw DimensionError(fmt::format("backward needs a scalar loss, got shape {}", to_string(root.value.shape())));
    }
    visits_.clear();
    if (!root.requires_grad) return;
    grad_sink(loss.id())->values()[0] += 1.0;

    for (std::size_t k = loss.id() + 1; k-- > 0;) {
        Node& n = nodes_[k];
        if (n.grad.empty()) continue;
        if (n.backward) {
            visits_.push_back(k);
            n.backward(*this, k);
        }
        if (n.param != nullptr) {
            if (n.param->grad.shape() != n.value.shape()) n.param->grad = Tensor::zeros_like(n.value);
            n.param->grad.add_inplace(n.grad);
        }
    }
}

} // namespace selfaug
