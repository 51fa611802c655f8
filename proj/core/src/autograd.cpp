#include "bistnet/autograd.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace bistnet {

namespace {

thread_local Tape* g_current_tape = nullptr;
thread_local bool g_recording = true;

#ifdef NDEBUG
std::atomic<bool> g_finite_checks{false};
#else
std::atomic<bool> g_finite_checks{true};
#endif

bool all_finite(const Tensor& t) {
  return visit_dtype(t.dtype(), [&](auto tag) {
    using T = decltype(tag);
    for (T v : t.values<T>()) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  });
}

Tensor add_raw(const Tensor& a, const Tensor& b) {
  return visit_dtype(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto x = a.values<T>();
    auto y = b.values<T>();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
    return Tensor::adopt(a.shape(), std::move(out));
  });
}

}  // namespace

Tensor mark_recorded(Tensor t) {
  t.requires_grad_ = true;
  return t;
}

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::conv2d: return "conv2d";
    case OpKind::relu: return "relu";
    case OpKind::softmax_rows: return "softmax_rows";
    case OpKind::matmul: return "matmul";
    case OpKind::transpose: return "transpose";
    case OpKind::bilinear_resample: return "bilinear_resample";
    case OpKind::flow_warp: return "flow_warp";
    case OpKind::concat: return "concat";
    case OpKind::slice: return "slice";
    case OpKind::reshape: return "reshape";
    case OpKind::pad_replicate: return "pad_replicate";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scalar_mul: return "scalar_mul";
    case OpKind::scalar_add: return "scalar_add";
    case OpKind::mean: return "mean";
    case OpKind::sum: return "sum";
    case OpKind::abs: return "abs";
    case OpKind::square: return "square";
    case OpKind::sqrt: return "sqrt";
    case OpKind::clamp: return "clamp";
  }
  return "unknown";
}

const Tensor& GradientMap::at(const Tensor& t) const {
  auto it = grads_.find(t.id());
  if (it == grads_.end()) throw Error("autograd: no gradient recorded for node " + std::to_string(t.id()));
  return it->second;
}

Tensor GradientMap::get_or_zeros(const Tensor& t) const {
  auto it = grads_.find(t.id());
  if (it == grads_.end()) return Tensor::zeros(t.shape(), t.dtype());
  return it->second;
}

Tape::Tape() : previous_(g_current_tape) { g_current_tape = this; }

Tape::~Tape() { g_current_tape = previous_; }

Tape* Tape::current() { return g_current_tape; }

GradientMap Tape::backward(const Tensor& loss) const {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (entries_.empty()) throw Error("backward: tape is empty");

  NoGradGuard no_grad;
  GradientMap result;
  result.grads_.emplace(loss.id(), Tensor::full(loss.shape(), 1.0, loss.dtype()));

  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    auto found = result.grads_.find(it->output.id());
    if (found == result.grads_.end()) continue;
    const Tensor grad_out = found->second;

    // std::vector<bool> is not contiguous, so a plain array backs the span.
    std::unique_ptr<bool[]> needs(new bool[it->inputs.size()]);
    bool any = false;
    for (std::size_t i = 0; i < it->inputs.size(); ++i) {
      needs[i] = it->inputs[i].requires_grad();
      any = any || needs[i];
    }
    if (!any) continue;

    std::vector<Tensor> grad_in(it->inputs.size());
    it->backward(grad_out, std::span<const bool>(needs.get(), it->inputs.size()), grad_in);

    for (std::size_t i = 0; i < it->inputs.size(); ++i) {
      if (!needs[i] || !grad_in[i].defined()) continue;
      const Tensor& input = it->inputs[i];
      if (grad_in[i].shape() != input.shape()) {
        throw ShapeError("backward: " + std::string(op_name(it->kind)) + " produced gradient " +
                         shape_str(grad_in[i].shape()) + " for input " + shape_str(input.shape()));
      }
      auto [slot, inserted] = result.grads_.try_emplace(input.id(), grad_in[i]);
      if (!inserted) slot->second = add_raw(slot->second, grad_in[i]);
    }
  }
  return result;
}

NoGradGuard::NoGradGuard() : previous_(g_recording) { g_recording = false; }

NoGradGuard::~NoGradGuard() { g_recording = previous_; }

bool recording_enabled() { return g_recording && g_current_tape != nullptr; }

void set_finite_checks(bool on) { g_finite_checks.store(on); }

bool finite_checks() { return g_finite_checks.load(); }

Tensor record(OpKind kind, std::vector<Tensor> inputs, Tensor out, BackwardFn backward) {
  if (finite_checks() && !all_finite(out)) {
    const bool inputs_finite =
        std::all_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return all_finite(t); });
    if (inputs_finite) {
      throw NumericError(std::string(op_name(kind)) + ": non-finite output from finite inputs");
    }
  }
  if (!recording_enabled()) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return out;
  out = mark_recorded(std::move(out));
  g_current_tape->push(TapeEntry{kind, std::move(inputs), out, std::move(backward)});
  return out;
}

double finite_difference_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                               double eps, std::span<const std::size_t> coords) {
  if (!(eps > 0.0)) throw Error("finite_difference_check: eps must be positive");
  if (x.dtype() != DType::f64) throw DTypeError("finite_difference_check: x must be f64");

  Tensor analytic;
  {
    Tape tape;
    Tensor leaf = x.with_grad();
    Tensor loss = f(leaf);
    if (loss.numel() != 1) {
      throw ShapeError("finite_difference_check: f must be scalar, got " + shape_str(loss.shape()));
    }
    analytic = tape.size() == 0 ? Tensor::zeros(x.shape(), DType::f64)
                                : tape.backward(loss).get_or_zeros(leaf);
  }

  std::vector<std::size_t> all;
  if (coords.empty()) {
    all.resize(x.numel());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    coords = all;
  }

  const auto base = x.values<double>();
  const auto grad = analytic.values<double>();
  double worst = 0.0;
  std::vector<double> probe(base.begin(), base.end());
  for (std::size_t i : coords) {
    if (i >= probe.size()) throw ShapeError("finite_difference_check: coordinate out of range");
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double up = f(Tensor::adopt(x.shape(), probe)).item();
    probe[i] = orig - eps;
    const double down = f(Tensor::adopt(x.shape(), probe)).item();
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * eps);
    const double err = std::abs(grad[i] - numeric) / std::max(1.0, std::abs(grad[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace bistnet
