#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "encore/tensor.hpp"

namespace encore {

/// Reverse-mode gradient tape. Ops append nodes during the forward pass;
/// backward() replays them in exact reverse order, accumulating (+=) into the
/// grad buffers of every tensor on the path, so shared parameters pick up
/// contributions from every use site.
template <class S>
class TapeT {
 public:
  using BackwardFn = std::function<void()>;

  void record(const char* op, std::vector<const void*> inputs,
              const TensorT<S>& output, BackwardFn fn) {
    nodes_.push_back(Node{op, std::move(inputs), output, std::move(fn)});
  }

  void backward(TensorT<S>& loss) {
    check<ShapeError>(loss.numel() == 1,
                      "backward: loss must be scalar, got shape ",
                      shape_str(loss.shape()));
    bool on_tape = false;
    for (const Node& n : nodes_) {
      if (n.output.id() == loss.id()) {
        on_tape = true;
        break;
      }
    }
    check<ShapeError>(on_tape, "backward: loss tensor was not produced on this tape");
    loss.grad()[0] += S(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (!it->output.has_grad()) continue;  // zero upstream, nothing to do
      it->fn();
    }
  }

  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    const char* op;
    std::vector<const void*> inputs;
    TensorT<S> output;
    BackwardFn fn;
  };
  std::vector<Node> nodes_;
};

using Tape = TapeT<float>;
using TapeD = TapeT<double>;

}  // namespace encore
