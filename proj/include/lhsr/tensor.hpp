#ifndef LHSR_TENSOR_HPP
#define LHSR_TENSOR_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lhsr {

/// Dense row-major tensor of doubles, rank <= 4, layout N x C x H x W.
/// Lower-rank tensors are stored with implicit leading extents of 1.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape, double fill = 0.0);
    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

    // Extents in the canonical N,C,H,W view (missing leading dims read as 1).
    int n() const { return dim_from_back(3); }
    int c() const { return dim_from_back(2); }
    int h() const { return dim_from_back(1); }
    int w() const { return dim_from_back(0); }

    double& at(int n, int c, int y, int x) {
        return data_[((static_cast<std::int64_t>(n) * this->c() + c) * h() + y) * w() + x];
    }
    double at(int n, int c, int y, int x) const {
        return data_[((static_cast<std::int64_t>(n) * this->c() + c) * h() + y) * w() + x];
    }
    double& operator[](std::int64_t i) { return data_[i]; }
    double operator[](std::int64_t i) const { return data_[i]; }

    std::span<double> flat() { return data_; }
    std::span<const double> flat() const { return data_; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;
    std::string shape_str() const;

private:
    int dim_from_back(int k) const {
        const int r = rank();
        return k < r ? shape_[r - 1 - k] : 1;
    }
    std::vector<int> shape_;
    std::vector<double> data_;
};

/// Parameters of one (possibly transposed) 2-D convolution layer.
/// kernel layout: outChannels x inChannels x kH x kW.  For transposed=true
/// the operation maps outChannels-channel inputs to inChannels-channel
/// outputs (exact adjoint of the forward convolution with the same kernel),
/// and bias has length inChannels.
struct ConvSpec {
    Tensor kernel;   // O x I x kH x kW
    Tensor bias;     // length = output channels of the op
    int stride = 1;
    int padding = 0;
    bool transposed = false;

    int out_channels() const { return transposed ? kernel.c() : kernel.n(); }
    int in_channels() const { return transposed ? kernel.n() : kernel.c(); }
    void validate() const;
};

Tensor conv2d(const Tensor& input, const ConvSpec& spec);
Tensor transposed_conv2d(const Tensor& input, const ConvSpec& spec);

struct ConvGrads {
    Tensor input;
    Tensor kernel;
    Tensor bias;
};

ConvGrads conv2d_backward(const Tensor& input, const ConvSpec& spec,
                          const Tensor& upstream);
ConvGrads transposed_conv2d_backward(const Tensor& input, const ConvSpec& spec,
                                     const Tensor& upstream);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& upstream);

Tensor elementwise_div(const Tensor& num, const Tensor& den, double epsilon);
/// Gradients of sum(upstream * num/(den+eps)) w.r.t. num and den.
std::pair<Tensor, Tensor> elementwise_div_backward(const Tensor& num,
                                                   const Tensor& den,
                                                   double epsilon,
                                                   const Tensor& upstream);

void sgd_step(std::span<Tensor*> params, std::span<const Tensor* const> grads,
              double lr);
void sgd_step(Tensor& param, const Tensor& grad, double lr);

double dot(const Tensor& a, const Tensor& b);

} // namespace lhsr

#endif
