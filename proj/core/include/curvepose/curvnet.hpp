#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "curvepose/image.hpp"
#include "curvepose/nn.hpp"

namespace curvepose {

enum class NetVariant { Small, Large };
enum class LossKind { Huber, Mse };

/// Layer geometry of the curvature regressor:
/// 3 x (conv valid + ReLU + maxpool 2x2), flatten, fc + ReLU, fc -> scalar.
struct NetConfig {
    NetVariant variant = NetVariant::Small;
    std::vector<int> conv_channels{32, 64, 64};
    std::vector<int> conv_kernels{5, 3, 4};
    int embedding_dim = 64;
    int input_height = 60;
    int input_width = 60;
    int input_channels = 3;
    LossKind loss = LossKind::Huber;
    double huber_delta = 0.4;

    static NetConfig small();
    static NetConfig large();
    static NetConfig for_variant(NetVariant v);

    /// Throws ConfigError when the layer geometry differs from the variant's
    /// canonical shape or the feature maps vanish.
    void validate() const;

    /// Flattened size after the convolution stack.
    int flatten_size() const;
};

std::string to_string(NetVariant v);
std::string to_string(LossKind k);
NetVariant parse_variant(const std::string& s);
LossKind parse_loss(const std::string& s);

/// Parameter count implied by a configuration (independent of any network object).
std::size_t expected_parameter_count(const NetConfig& cfg);

template <typename T>
class CurvNetT {
public:
    using Tensor = nn::Tensor<T>;

    /// Intermediate activations kept for the backward pass.
    struct Cache {
        std::vector<Tensor> conv_in;
        std::vector<Tensor> conv_out;    // pre-ReLU
        std::vector<Tensor> relu_out;
        std::vector<std::vector<std::size_t>> pool_argmax;
        Tensor flat;
        Tensor fc1_out;                  // pre-ReLU
        Tensor embedding;
    };

    explicit CurvNetT(NetConfig cfg);

    const NetConfig& config() const { return config_; }

    /// Order: conv1.w, conv1.b, conv2.w, conv2.b, conv3.w, conv3.b, fc1.w, fc1.b, fc2.w, fc2.b.
    std::vector<Tensor>& parameters() { return params_; }
    const std::vector<Tensor>& parameters() const { return params_; }
    std::size_t parameter_count() const;

    /// He-uniform weights, zero biases.
    void initialize(std::uint64_t seed);

    /// Input is (C, H, W) with the configured size.
    T forward(const Tensor& input) const;
    T forward(const Tensor& input, Cache& cache) const;

    /// Adds d(loss)/d(param) to `grads` (same layout as parameters()).
    void backward(const Cache& cache, T dloss_dout, std::vector<Tensor>& grads) const;

    /// Zero tensors shaped like parameters().
    std::vector<Tensor> zero_gradients() const;

    template <typename U>
    CurvNetT<U> cast() const {
        CurvNetT<U> out(config_);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& dst = out.parameters()[i].data;
            for (std::size_t j = 0; j < dst.size(); ++j) {
                dst[j] = static_cast<U>(params_[i].data[j]);
            }
        }
        return out;
    }

private:
    NetConfig config_;
    std::vector<Tensor> params_;
};

extern template class CurvNetT<float>;
extern template class CurvNetT<double>;

using CurvNet = CurvNetT<float>;

/// Validates the configuration and returns a zero-initialised network.
CurvNet build_net(const NetConfig& cfg);

/// One regression example: preprocessed crop and diameter target (HoI).
struct CropSample {
    nn::Tensor<float> input;
    float target = 0.0f;
};

/// Side of the square network crop relative to the longer side of the label box.
inline constexpr double kCropContext = 2.2;

/// Square crop centred on the label box, kCropContext times its longer side.
BBox context_box(const BBox& box);

/// Crops context_box(box), resizes to the network input and scales to [0, 1];
/// pixels outside the image are black. Throws ShapeError for an empty box or
/// one entirely outside the image.
nn::Tensor<float> preprocess_crop(const RgbImage& image, const BBox& box, const NetConfig& cfg);

/// Diameter (HoI) predicted for the labelled region `box` of `image`.
double predict_curvature(const CurvNet& net, const RgbImage& image, const BBox& box);

struct AdamParams {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct TrainConfig {
    int max_epochs = 50;
    int patience = 4;
    int batch_size = 32;
    AdamParams adam;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Adam state over a parameter list.
template <typename T>
class Adam {
public:
    Adam(const std::vector<nn::Tensor<T>>& params, AdamParams p);
    void step(std::vector<nn::Tensor<T>>& params, const std::vector<nn::Tensor<T>>& grads);

private:
    AdamParams p_;
    std::vector<std::vector<T>> m_;
    std::vector<std::vector<T>> v_;
    long t_ = 0;
};

extern template class Adam<float>;
extern template class Adam<double>;

/// Stops when `patience` consecutive epochs fail to set a new minimum.
class EarlyStopping {
public:
    explicit EarlyStopping(int patience);

    /// Feeds the next epoch's validation loss; returns true when training should stop.
    bool update(double val_loss);
    /// Whether the most recent update set a new minimum.
    bool improved() const { return improved_; }
    int best_epoch() const { return best_epoch_; }
    double best_loss() const { return best_loss_; }
    int epochs_seen() const { return epoch_; }

private:
    int patience_;
    int epoch_ = 0;
    int best_epoch_ = 0;
    int since_best_ = 0;
    bool improved_ = false;
    double best_loss_ = 0.0;
};

struct EpochStats {
    int epoch = 0;
    double train_huber = 0.0;
    double val_huber = 0.0;
    double train_mse = 0.0;
    double val_mse = 0.0;
};

struct TrainResult {
    CurvNet best_net;
    std::vector<EpochStats> history;
    /// 1-based epoch with the lowest monitored validation loss.
    int best_epoch = 0;
};

/// Mean Huber(delta) and MSE of `net` over a set.
EpochStats evaluate_losses(const CurvNet& net, const std::vector<CropSample>& set);

/// Mini-batch Adam with early stopping on the validation loss of the
/// configured loss kind. Throws NumericError naming the epoch on divergence.
TrainResult train(const CurvNet& initial, const std::vector<CropSample>& train_set,
                  const std::vector<CropSample>& val_set, const TrainConfig& cfg);

/// Writes epoch,train_huber,val_huber,train_mse,val_mse.
void write_history_csv(const std::vector<EpochStats>& history, const std::filesystem::path& path);

/// Binary model: magic, config block, then float32 little-endian parameters.
void save_model(const CurvNet& net, const std::filesystem::path& path);
CurvNet load_model(const std::filesystem::path& path);

}  // namespace curvepose
