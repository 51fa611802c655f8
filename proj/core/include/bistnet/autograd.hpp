#pragma once

#include <functional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "bistnet/tensor.hpp"

namespace bistnet {

enum class OpKind {
  conv2d,
  relu,
  softmax_rows,
  matmul,
  transpose,
  bilinear_resample,
  flow_warp,
  concat,
  slice,
  reshape,
  pad_replicate,
  add,
  sub,
  mul,
  scalar_mul,
  scalar_add,
  mean,
  sum,
  abs,
  square,
  sqrt,
  clamp,
};

std::string_view op_name(OpKind kind);

// Writes one gradient per input that needs it; `needs[i]` is false for inputs
// outside the differentiated graph and their slot must stay undefined.
using BackwardFn =
    std::function<void(const Tensor& grad_out, std::span<const bool> needs, std::span<Tensor> grad_in)>;

struct TapeEntry {
  OpKind kind;
  std::vector<Tensor> inputs;
  Tensor output;
  BackwardFn backward;
};

class GradientMap {
 public:
  bool contains(const Tensor& t) const { return grads_.count(t.id()) != 0; }
  // Throws if `t` received no gradient.
  const Tensor& at(const Tensor& t) const;
  // Zeros shaped like `t` when absent.
  Tensor get_or_zeros(const Tensor& t) const;
  std::size_t size() const { return grads_.size(); }

 private:
  friend class Tape;
  std::unordered_map<NodeId, Tensor> grads_;
};

// Records primitive ops executed on this thread while alive. Tapes nest; the
// innermost one receives the records. Not shareable across threads.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current();

  std::span<const TapeEntry> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  // Reverse-mode accumulation from a scalar loss. Entries are kept, so
  // backward can be called again with another root on the same tape.
  GradientMap backward(const Tensor& loss) const;

  void push(TapeEntry entry) { entries_.push_back(std::move(entry)); }

 private:
  std::vector<TapeEntry> entries_;
  Tape* previous_;
};

// Suspends recording on this thread.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool recording_enabled();

// When on, every op verifies that finite inputs produced finite outputs.
// Defaults to on in debug builds.
void set_finite_checks(bool on);
bool finite_checks();

// Attaches `out` to the current tape when any input requires grad. Returns
// the (possibly re-marked) output.
Tensor record(OpKind kind, std::vector<Tensor> inputs, Tensor out, BackwardFn backward);

// Max over checked coordinates of |analytic - central difference| / max(1, |analytic|).
// `f` must map `x` to a scalar; `x` must be f64. When `coords` is non-empty only
// those flat indices are perturbed.
double finite_difference_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                               double eps, std::span<const std::size_t> coords = {});

}  // namespace bistnet
