#ifndef NNPM_TENSOR_HPP
#define NNPM_TENSOR_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "nnpm/errors.hpp"
#include "nnpm/rng.hpp"

namespace nnpm {

// Dense row-major tensor of 64-bit floats. Gradient storage lives next to
// the data and is allocated lazily; accumulation is additive and callers
// zero gradients explicitly between backward passes.
class Tensor {
  public:
    Tensor() = default;
    Tensor(std::vector<size_t> shape_in, bool requires_grad_in);

    std::vector<size_t> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until ensure_grad(); same length as data after
    bool requires_grad = false;

    size_t size() const { return data.size(); }
    bool is_scalar() const { return data.size() == 1; }

    // 2-D accessors; most linear algebra in the encoder is rank-2.
    size_t rows() const;
    size_t cols() const;
    double& at(size_t r, size_t c) { return data[r * cols() + c]; }
    double at(size_t r, size_t c) const { return data[r * cols() + c]; }

    void ensure_grad();
    void zero_grad();

    std::string shape_str() const;
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr make_tensor(std::vector<size_t> shape, bool requires_grad = false);
TensorPtr make_tensor(std::vector<size_t> shape, std::vector<double> data,
                      bool requires_grad = false);
TensorPtr make_scalar(double value, bool requires_grad = false);
TensorPtr zeros_like(const Tensor& t);

// Xavier-uniform fill: limit = sqrt(6 / (fan_in + fan_out)).
void fill_xavier_uniform(Tensor& t, size_t fan_in, size_t fan_out, Rng& rng);

size_t numel(const std::vector<size_t>& shape);

// Define-by-run tape. Operations append nodes in execution order, which is
// a topological order by construction; backward() walks the tape once in
// reverse. Recording can be switched off for pure inference passes.
class Graph {
  public:
    explicit Graph(bool recording = true) : recording_(recording) {}

    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    bool recording() const { return recording_; }
    void set_recording(bool on) { recording_ = on; }
    size_t node_count() const { return nodes_.size(); }

    // backward_fn may assume out->grad is allocated.
    void record(TensorPtr out, std::vector<TensorPtr> inputs, std::function<void()> backward_fn);

    // Seeds d(loss)/d(loss) = 1 and propagates through the tape in reverse.
    // loss must be a scalar produced by this graph's recorded operations.
    void backward(const TensorPtr& loss);

    void clear();

  private:
    struct Node {
        TensorPtr out;
        std::vector<TensorPtr> inputs;
        std::function<void()> backward_fn;
    };

    std::vector<Node> nodes_;
    bool recording_ = true;
};

// ---- recorded operations ------------------------------------------------

// c[m,p] = a[m,k] * b[k,p]
TensorPtr matmul(Graph& g, const TensorPtr& a, const TensorPtr& b);

TensorPtr transpose(Graph& g, const TensorPtr& x);

// Cross-correlation with zero padding over a [C,H,W] input and
// [O,C,kh,kw] kernel bank. bias (length O) may be null.
TensorPtr conv2d(Graph& g, const TensorPtr& input, const TensorPtr& kernels,
                 const TensorPtr& bias, size_t stride, size_t padding);

// Max over non-overlapping windows of length `pool` along the H axis of a
// [C,H,W] tensor; trailing remainder frames are dropped. Gradient routes to
// the recorded argmax.
TensorPtr maxpool_temporal(Graph& g, const TensorPtr& input, size_t pool);

TensorPtr relu(Graph& g, const TensorPtr& x);
TensorPtr tanh_op(Graph& g, const TensorPtr& x);
TensorPtr sigmoid(Graph& g, const TensorPtr& x);

TensorPtr add(Graph& g, const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(Graph& g, const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(Graph& g, const TensorPtr& a, const TensorPtr& b);  // elementwise
TensorPtr scale(Graph& g, const TensorPtr& x, double c);
TensorPtr add_scalar(Graph& g, const TensorPtr& x, double c);

// Max-shifted softmax along `axis` (0 or 1) of a 2-D tensor.
TensorPtr softmax(Graph& g, const TensorPtr& x, size_t axis);

// log(max(x, floor)); derivative is zero in the clamped region.
TensorPtr log_clamped(Graph& g, const TensorPtr& x, double floor);

TensorPtr sum_all(Graph& g, const TensorPtr& x);
TensorPtr mean_all(Graph& g, const TensorPtr& x);

// Stack 2-D tensors with equal column counts along the row axis.
TensorPtr concat_rows(Graph& g, const std::vector<TensorPtr>& parts);
// Join two 2-D tensors with equal row counts along the column axis.
TensorPtr concat_cols(Graph& g, const TensorPtr& a, const TensorPtr& b);
TensorPtr slice_cols(Graph& g, const TensorPtr& x, size_t start, size_t len);
TensorPtr slice_rows(Graph& g, const TensorPtr& x, size_t start, size_t len);

// Pick columns of a [1,n] tensor; used to split positive/negative slot scores.
TensorPtr gather_cols(Graph& g, const TensorPtr& x, const std::vector<size_t>& indices);

// out[i,0] = x[i, index[i]]; used for per-example class probability lookup.
TensorPtr gather_per_row(Graph& g, const TensorPtr& x, const std::vector<size_t>& indices);

// Row vector scaled to unit l2 norm, with the exact Jacobian
// (I - u u^T) / |x| on the backward path.
TensorPtr l2_normalize_row(Graph& g, const TensorPtr& x);

TensorPtr reshape(Graph& g, const TensorPtr& x, std::vector<size_t> new_shape);

// [C,H,W] -> [H, C*W]: one row per time step, channels-major features.
TensorPtr to_time_major(Graph& g, const TensorPtr& x);

// Inverted dropout: keep with probability 1-p and scale kept values by
// 1/(1-p) so inference needs no rescaling. Identity when train_mode is off.
TensorPtr dropout(Graph& g, const TensorPtr& x, double p, Rng& rng, bool train_mode);

}  // namespace nnpm

#endif
