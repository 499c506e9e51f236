#include "curvepose/curvnet.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "curvepose/errors.hpp"
#include "curvepose/random.hpp"

namespace curvepose {

namespace {

constexpr char kModelMagic[8] = {'C', 'V', 'N', 'E', 'T', 'v', '0', '1'};

template <typename T>
void add_into(nn::Tensor<T>& dst, const nn::Tensor<T>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst.data[i] += src.data[i];
    }
}

template <typename U>
void put_le(std::ostream& out, U value) {
    using Bits = std::conditional_t<sizeof(U) == 8, std::uint64_t, std::uint32_t>;
    const auto bits = std::bit_cast<Bits>(value);
    char bytes[sizeof(Bits)];
    for (std::size_t i = 0; i < sizeof(Bits); ++i) {
        bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    }
    out.write(bytes, sizeof(bytes));
}

template <typename U>
U get_le(std::istream& in, const std::filesystem::path& path) {
    using Bits = std::conditional_t<sizeof(U) == 8, std::uint64_t, std::uint32_t>;
    unsigned char bytes[sizeof(Bits)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(bytes))) {
        throw IoError("truncated model file " + path.string());
    }
    Bits bits = 0;
    for (std::size_t i = 0; i < sizeof(Bits); ++i) {
        bits |= static_cast<Bits>(bytes[i]) << (8 * i);
    }
    return std::bit_cast<U>(bits);
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

NetConfig NetConfig::small() {
    return {};
}

NetConfig NetConfig::large() {
    NetConfig c;
    c.variant = NetVariant::Large;
    c.conv_channels = {32, 64, 128};
    c.conv_kernels = {5, 3, 3};
    c.embedding_dim = 128;
    c.input_height = 64;
    c.input_width = 64;
    return c;
}

NetConfig NetConfig::for_variant(NetVariant v) {
    return v == NetVariant::Small ? small() : large();
}

void NetConfig::validate() const {
    const NetConfig ref = for_variant(variant);
    if (conv_channels != ref.conv_channels || conv_kernels != ref.conv_kernels ||
        embedding_dim != ref.embedding_dim || input_height != ref.input_height ||
        input_width != ref.input_width || input_channels != ref.input_channels) {
        throw ConfigError("net config does not match the " + to_string(variant) + " variant layout");
    }
    if (loss == LossKind::Huber && !(huber_delta > 0.0)) {
        throw ConfigError("huber delta must be positive");
    }
    if (flatten_size() <= 0) {
        throw ConfigError("net config: feature maps vanish before the dense layers");
    }
}

int NetConfig::flatten_size() const {
    int h = input_height;
    int w = input_width;
    for (const int k : conv_kernels) {
        h = (h - k + 1) / 2;
        w = (w - k + 1) / 2;
        if (h <= 0 || w <= 0) {
            return 0;
        }
    }
    return h * w * conv_channels.back();
}

std::string to_string(NetVariant v) {
    return v == NetVariant::Small ? "small" : "large";
}

std::string to_string(LossKind k) {
    return k == LossKind::Huber ? "huber" : "mse";
}

NetVariant parse_variant(const std::string& s) {
    if (s == "small") return NetVariant::Small;
    if (s == "large") return NetVariant::Large;
    throw ConfigError("unknown net variant '" + s + "' (expected small|large)");
}

LossKind parse_loss(const std::string& s) {
    if (s == "huber") return LossKind::Huber;
    if (s == "mse") return LossKind::Mse;
    throw ConfigError("unknown loss '" + s + "' (expected huber|mse)");
}

std::size_t expected_parameter_count(const NetConfig& cfg) {
    std::size_t n = 0;
    int in_c = cfg.input_channels;
    for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
        const std::size_t k = static_cast<std::size_t>(cfg.conv_kernels[i]);
        n += k * k * in_c * cfg.conv_channels[i] + cfg.conv_channels[i];
        in_c = cfg.conv_channels[i];
    }
    n += static_cast<std::size_t>(cfg.flatten_size()) * cfg.embedding_dim + cfg.embedding_dim;
    n += static_cast<std::size_t>(cfg.embedding_dim) + 1;
    return n;
}

// ---------------------------------------------------------------------------
// Network

template <typename T>
CurvNetT<T>::CurvNetT(NetConfig cfg) : config_(std::move(cfg)) {
    int in_c = config_.input_channels;
    for (std::size_t i = 0; i < config_.conv_channels.size(); ++i) {
        const int k = config_.conv_kernels[i];
        const int out_c = config_.conv_channels[i];
        params_.emplace_back(std::vector<int>{out_c, in_c, k, k});
        params_.emplace_back(std::vector<int>{out_c});
        in_c = out_c;
    }
    params_.emplace_back(std::vector<int>{config_.embedding_dim, config_.flatten_size()});
    params_.emplace_back(std::vector<int>{config_.embedding_dim});
    params_.emplace_back(std::vector<int>{1, config_.embedding_dim});
    params_.emplace_back(std::vector<int>{1});
}

template <typename T>
std::size_t CurvNetT<T>::parameter_count() const {
    return std::accumulate(params_.begin(), params_.end(), std::size_t{0},
                           [](std::size_t acc, const Tensor& t) { return acc + t.size(); });
}

template <typename T>
void CurvNetT<T>::initialize(std::uint64_t seed) {
    auto rng = make_rng(seed, 0x1417);
    for (std::size_t i = 0; i < params_.size(); i += 2) {
        Tensor& w = params_[i];
        const std::size_t fan_in = w.size() / static_cast<std::size_t>(w.dim(0));
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (auto& v : w.data) {
            v = static_cast<T>(dist(rng));
        }
        std::fill(params_[i + 1].data.begin(), params_[i + 1].data.end(), T(0));
    }
}

template <typename T>
T CurvNetT<T>::forward(const Tensor& input) const {
    Cache cache;
    return forward(input, cache);
}

template <typename T>
T CurvNetT<T>::forward(const Tensor& input, Cache& cache) const {
    const std::vector<int> expected{config_.input_channels, config_.input_height, config_.input_width};
    if (input.shape != expected) {
        throw ShapeError("curvnet: input shape does not match the network configuration");
    }
    const std::size_t n_conv = config_.conv_channels.size();
    cache.conv_in.resize(n_conv);
    cache.conv_out.resize(n_conv);
    cache.relu_out.resize(n_conv);
    cache.pool_argmax.resize(n_conv);
    Tensor x = input;
    for (std::size_t i = 0; i < n_conv; ++i) {
        cache.conv_in[i] = std::move(x);
        cache.conv_out[i] = nn::conv2d_forward(cache.conv_in[i], params_[2 * i], params_[2 * i + 1]);
        cache.relu_out[i] = nn::relu_forward(cache.conv_out[i]);
        auto pooled = nn::maxpool2x2_forward(cache.relu_out[i]);
        cache.pool_argmax[i] = std::move(pooled.argmax);
        x = std::move(pooled.output);
    }
    const std::size_t fc = 2 * n_conv;
    cache.flat = nn::flatten(x);
    cache.fc1_out = nn::fc_forward(cache.flat, params_[fc], params_[fc + 1]);
    cache.embedding = nn::relu_forward(cache.fc1_out);
    return nn::fc_forward(cache.embedding, params_[fc + 2], params_[fc + 3])[0];
}

template <typename T>
void CurvNetT<T>::backward(const Cache& cache, T dloss_dout, std::vector<Tensor>& grads) const {
    const std::size_t n_conv = config_.conv_channels.size();
    const std::size_t fc = 2 * n_conv;
    Tensor g_out({1}, dloss_dout);

    auto g2 = nn::fc_backward(cache.embedding, params_[fc + 2], g_out);
    add_into(grads[fc + 2], g2.weight);
    add_into(grads[fc + 3], g2.bias);
    const Tensor g_fc1 = nn::relu_backward(cache.fc1_out, g2.input);
    auto g1 = nn::fc_backward(cache.flat, params_[fc], g_fc1);
    add_into(grads[fc], g1.weight);
    add_into(grads[fc + 1], g1.bias);

    Tensor g = std::move(g1.input);
    for (std::size_t ii = n_conv; ii-- > 0;) {
        const auto& relu_shape = cache.relu_out[ii].shape;
        g.shape = {relu_shape[0], relu_shape[1] / 2, relu_shape[2] / 2};
        const Tensor g_relu = nn::maxpool2x2_backward(relu_shape, cache.pool_argmax[ii], g);
        const Tensor g_conv = nn::relu_backward(cache.conv_out[ii], g_relu);
        auto gc = nn::conv2d_backward(cache.conv_in[ii], params_[2 * ii], g_conv, ii > 0);
        add_into(grads[2 * ii], gc.weight);
        add_into(grads[2 * ii + 1], gc.bias);
        g = std::move(gc.input);
    }
}

template <typename T>
std::vector<nn::Tensor<T>> CurvNetT<T>::zero_gradients() const {
    std::vector<Tensor> g;
    g.reserve(params_.size());
    for (const auto& p : params_) {
        g.emplace_back(p.shape);
    }
    return g;
}

template class CurvNetT<float>;
template class CurvNetT<double>;

CurvNet build_net(const NetConfig& cfg) {
    cfg.validate();
    CurvNet net(cfg);
    if (net.parameter_count() != expected_parameter_count(cfg)) {
        throw ConfigError("build_net: parameter count mismatch");
    }
    return net;
}

BBox context_box(const BBox& box) {
    const double side = kCropContext * std::max(box.w, box.h);
    return {box.x + 0.5 * box.w - 0.5 * side, box.y + 0.5 * box.h - 0.5 * side, side, side};
}

nn::Tensor<float> preprocess_crop(const RgbImage& image, const BBox& box, const NetConfig& cfg) {
    if (box.empty() || clip_to_image(box, image.width(), image.height()).empty()) {
        throw ShapeError("preprocess_crop: empty bounding box");
    }
    nn::Tensor<float> t({cfg.input_channels, cfg.input_height, cfg.input_width});
    const std::vector<float> pixels = crop_resize_chw(image, context_box(box), cfg.input_width, cfg.input_height);
    t.data.assign(pixels.begin(), pixels.end());
    return t;
}

double predict_curvature(const CurvNet& net, const RgbImage& image, const BBox& box) {
    return net.forward(preprocess_crop(image, box, net.config()));
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
    if (max_epochs < 1 || patience < 1 || batch_size < 1) {
        throw ConfigError("train config: epochs, patience and batch size must be >= 1");
    }
    if (!(adam.learning_rate > 0.0)) {
        throw ConfigError("train config: learning rate must be positive");
    }
}

template <typename T>
Adam<T>::Adam(const std::vector<nn::Tensor<T>>& params, AdamParams p) : p_(p) {
    for (const auto& t : params) {
        m_.emplace_back(t.size(), T(0));
        v_.emplace_back(t.size(), T(0));
    }
}

template <typename T>
void Adam<T>::step(std::vector<nn::Tensor<T>>& params, const std::vector<nn::Tensor<T>>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(p_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(p_.beta2, static_cast<double>(t_));
    const T lr = static_cast<T>(p_.learning_rate * std::sqrt(c2) / c1);
    const T b1 = static_cast<T>(p_.beta1);
    const T b2 = static_cast<T>(p_.beta2);
    const T eps = static_cast<T>(p_.epsilon * std::sqrt(c2));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& m = m_[i];
        auto& v = v_[i];
        auto& w = params[i].data;
        const auto& g = grads[i].data;
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = b1 * m[j] + (T(1) - b1) * g[j];
            v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
            w[j] -= lr * m[j] / (std::sqrt(v[j]) + eps);
        }
    }
}

template class Adam<float>;
template class Adam<double>;

EarlyStopping::EarlyStopping(int patience) : patience_(patience) {
    if (patience < 1) {
        throw ConfigError("early stopping: patience must be >= 1");
    }
}

bool EarlyStopping::update(double val_loss) {
    ++epoch_;
    improved_ = epoch_ == 1 || val_loss < best_loss_;
    if (improved_) {
        best_loss_ = val_loss;
        best_epoch_ = epoch_;
        since_best_ = 0;
        return false;
    }
    ++since_best_;
    return since_best_ >= patience_;
}

EpochStats evaluate_losses(const CurvNet& net, const std::vector<CropSample>& set) {
    EpochStats s;
    if (set.empty()) {
        return s;
    }
    const double delta = net.config().huber_delta;
    std::vector<float> preds(set.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(set.size()); ++i) {
        preds[i] = net.forward(set[i].input);
    }
    for (std::size_t i = 0; i < set.size(); ++i) {
        s.val_huber += nn::huber_loss(preds[i], set[i].target, delta).loss;
        s.val_mse += nn::mse_loss(preds[i], set[i].target).loss;
    }
    s.val_huber /= static_cast<double>(set.size());
    s.val_mse /= static_cast<double>(set.size());
    return s;
}

TrainResult train(const CurvNet& initial, const std::vector<CropSample>& train_set,
                  const std::vector<CropSample>& val_set, const TrainConfig& cfg) {
    cfg.validate();
    if (train_set.empty() || val_set.empty()) {
        throw ConfigError("train: training and validation sets must be non-empty");
    }
    const NetConfig& net_cfg = initial.config();
    const double delta = net_cfg.huber_delta;

    TrainResult result{initial, {}, 0};
    CurvNet net = initial;
    Adam<float> adam(net.parameters(), cfg.adam);
    EarlyStopping stopper(cfg.patience);

    const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
    std::vector<std::vector<nn::Tensor<float>>> sample_grads(batch);
    for (auto& g : sample_grads) {
        g = net.zero_gradients();
    }
    std::vector<nn::Tensor<float>> total = net.zero_gradients();
    std::vector<double> sample_huber(batch);
    std::vector<double> sample_mse(batch);

    std::vector<std::size_t> order(train_set.size());
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        auto rng = make_rng(cfg.seed, static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), rng);

        double sum_huber = 0.0;
        double sum_mse = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t n = std::min(batch, order.size() - start);
            // Per-sample gradients, summed in sample order below.
#pragma omp parallel for schedule(dynamic)
            for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(n); ++b) {
                const CropSample& s = train_set[order[start + b]];
                CurvNet::Cache cache;
                const double pred = net.forward(s.input, cache);
                const auto h = nn::huber_loss(pred, s.target, delta);
                const auto m = nn::mse_loss(pred, s.target);
                sample_huber[b] = h.loss;
                sample_mse[b] = m.loss;
                const double g = net_cfg.loss == LossKind::Huber ? h.grad : m.grad;
                for (auto& t : sample_grads[b]) {
                    std::fill(t.data.begin(), t.data.end(), 0.0f);
                }
                net.backward(cache, static_cast<float>(g / static_cast<double>(n)), sample_grads[b]);
            }
            for (auto& t : total) {
                std::fill(t.data.begin(), t.data.end(), 0.0f);
            }
            for (std::size_t b = 0; b < n; ++b) {
                for (std::size_t p = 0; p < total.size(); ++p) {
                    add_into(total[p], sample_grads[b][p]);
                }
                sum_huber += sample_huber[b];
                sum_mse += sample_mse[b];
            }
            if (!std::isfinite(sum_huber) || !std::isfinite(sum_mse)) {
                throw NumericError("train: non-finite training loss in epoch " + std::to_string(epoch));
            }
            adam.step(net.parameters(), total);
        }

        EpochStats stats = evaluate_losses(net, val_set);
        stats.epoch = epoch;
        stats.train_huber = sum_huber / static_cast<double>(order.size());
        stats.train_mse = sum_mse / static_cast<double>(order.size());
        if (!std::isfinite(stats.val_huber) || !std::isfinite(stats.val_mse)) {
            throw NumericError("train: non-finite validation loss in epoch " + std::to_string(epoch));
        }
        result.history.push_back(stats);

        const double monitored = net_cfg.loss == LossKind::Huber ? stats.val_huber : stats.val_mse;
        const bool stop = stopper.update(monitored);
        if (stopper.improved()) {
            result.best_net = net;
            result.best_epoch = epoch;
        }
        if (stop) {
            break;
        }
    }
    return result;
}

void write_history_csv(const std::vector<EpochStats>& history, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << "epoch,train_huber,val_huber,train_mse,val_mse\n";
    out.precision(9);
    for (const auto& e : history) {
        out << e.epoch << ',' << e.train_huber << ',' << e.val_huber << ',' << e.train_mse << ',' << e.val_mse << '\n';
    }
}

// ---------------------------------------------------------------------------
// Serialization

void save_model(const CurvNet& net, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write model " + path.string());
    }
    const NetConfig& c = net.config();
    out.write(kModelMagic, sizeof(kModelMagic));
    put_le<std::uint32_t>(out, c.variant == NetVariant::Small ? 0u : 1u);
    put_le<std::uint32_t>(out, c.loss == LossKind::Huber ? 0u : 1u);
    put_le<double>(out, c.huber_delta);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.input_channels));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.input_height));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.input_width));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.conv_channels.size()));
    for (std::size_t i = 0; i < c.conv_channels.size(); ++i) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.conv_channels[i]));
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.conv_kernels[i]));
    }
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.embedding_dim));
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(net.parameter_count()));
    for (const auto& t : net.parameters()) {
        for (const float v : t.data) {
            put_le<float>(out, v);
        }
    }
    if (!out) {
        throw IoError("failed writing model " + path.string());
    }
}

CurvNet load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open model " + path.string());
    }
    char magic[sizeof(kModelMagic)];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kModelMagic, sizeof(magic)) != 0) {
        throw IoError("not a curvnet model file: " + path.string());
    }
    NetConfig c;
    const auto variant = get_le<std::uint32_t>(in, path);
    const auto loss = get_le<std::uint32_t>(in, path);
    if (variant > 1 || loss > 1) {
        throw IoError("corrupt model header in " + path.string());
    }
    c = NetConfig::for_variant(variant == 0 ? NetVariant::Small : NetVariant::Large);
    c.loss = loss == 0 ? LossKind::Huber : LossKind::Mse;
    c.huber_delta = get_le<double>(in, path);
    c.input_channels = static_cast<int>(get_le<std::uint32_t>(in, path));
    c.input_height = static_cast<int>(get_le<std::uint32_t>(in, path));
    c.input_width = static_cast<int>(get_le<std::uint32_t>(in, path));
    const auto n_conv = get_le<std::uint32_t>(in, path);
    if (n_conv > 16) {
        throw IoError("corrupt model header in " + path.string());
    }
    c.conv_channels.assign(n_conv, 0);
    c.conv_kernels.assign(n_conv, 0);
    for (std::uint32_t i = 0; i < n_conv; ++i) {
        c.conv_channels[i] = static_cast<int>(get_le<std::uint32_t>(in, path));
        c.conv_kernels[i] = static_cast<int>(get_le<std::uint32_t>(in, path));
    }
    c.embedding_dim = static_cast<int>(get_le<std::uint32_t>(in, path));
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
    CurvNet net(c);
    const auto count = get_le<std::uint64_t>(in, path);
    if (count != net.parameter_count()) {
        throw IoError(path.string() + ": parameter count does not match configuration");
    }
    for (auto& t : net.parameters()) {
        for (auto& v : t.data) {
            v = get_le<float>(in, path);
        }
    }
    return net;
}

}  // namespace curvepose
