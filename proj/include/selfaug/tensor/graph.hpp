#pragma once

#include "selfaug/tensor/tensor.hpp"

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace selfaug {

// A trainable array that outlives any single graph. Graphs accumulate into `grad`
// with +=; callers reset it between optimizer steps.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
};

// Ordered collection of parameters. Indices are stable, so layers refer to their
// weights by index and a store can be copied wholesale (model copies, snapshots).
class ParamStore {
public:
    std::size_t add(std::string name, Tensor value);

    Parameter& operator[](std::size_t i) { return params_[i]; }
    const Parameter& operator[](std::size_t i) const { return params_[i]; }
    std::size_t size() const { return params_.size(); }
    std::size_t scalar_count() const;

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    const Parameter* find(std::string_view name) const;
    void zero_grad();
    bool same_values(const ParamStore& other) const;

private:
    std::vector<Parameter> params_;
};

class Graph;

// Handle to a node of a Graph. Cheap to copy; only valid while its graph lives.
// References returned by value() dangle once the graph records another node.
class Var {
public:
    Var() = default;

    Graph& graph() const { return *graph_; }
    std::size_t id() const { return id_; }
    bool valid() const { return graph_ != nullptr; }
    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }

private:
    friend class Graph;
    Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
};

// Append-only tape of operation records. Inputs always precede the nodes that use
// them, so reverse index order is a valid reverse topological order.
class Graph {
public:
    using BackwardFn = std::function<void(Graph&, std::size_t self)>;

    struct Node {
        std::string op;
        std::vector<std::size_t> inputs;
        Tensor value;
        Tensor grad; // empty until some gradient reaches this node
        bool requires_grad = false;
        BackwardFn backward;
        Parameter* param = nullptr;
    };

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;
    Graph(Graph&&) = default;
    Graph& operator=(Graph&&) = default;

    Var constant(Tensor value);
    Var leaf(Tensor value, bool requires_grad = true);
    // Leaf whose gradient is added into `p.grad` by backward().
    Var param(Parameter& p);

    // Record an operation output. `backward` is dropped when no input needs a gradient.
    Var record(std::string op, Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

    // Seeds d(loss)/d(loss) = 1 and propagates in reverse order. Gradients accumulate.
    void backward(Var loss);

    std::size_t size() const { return nodes_.size(); }
    const Node& node(std::size_t id) const { return nodes_.at(id); }
    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

    // Accumulated gradient of a node; empty tensor if none reached it.
    const Tensor& grad(Var v) const { return nodes_.at(v.id()).grad; }

    // For backward functions: the incoming gradient of `self` and the buffer to
    // accumulate into for an input (nullptr when the input does not need one).
    const Tensor& out_grad(std::size_t self) const { return nodes_[self].grad; }
    Tensor* grad_sink(std::size_t id);

    // Node ids whose backward function ran during the last backward(), in visit order.
    const std::vector<std::size_t>& last_backward_visits() const { return visits_; }

private:
    Var push(Node node);

    std::vector<Node> nodes_;
    std::vector<std::size_t> visits_;
};

inline const Tensor& Var::value() const { return graph_->value(id_); }

} // namespace selfaug
