#include "rhsim/qnn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "rhsim/errors.hpp"
#include "rhsim/kernels.hpp"
#include "rhsim/rng.hpp"

namespace rhsim {

namespace {

constexpr char kCkpMagic[6] = {'Q', 'N', 'N', 'C', 'K', 'P'};
constexpr char kDatMagic[6] = {'Q', 'N', 'N', 'D', 'A', 'T'};
constexpr uint16_t kFormatVersion = 1;

void read_exact(std::ifstream& f, void* dst, std::size_t bytes, const char* what) {
    f.read(static_cast<char*>(dst), std::streamsize(bytes));
    if (!f) throw FileFormatError(std::string("truncated file while reading ") + what);
}

template <typename T>
T read_le(std::ifstream& f, const char* what) {
    unsigned char buf[sizeof(T)];
    read_exact(f, buf, sizeof(T), what);
    uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= uint64_t(buf[i]) << (8 * i);
    T out;
    std::memcpy(&out, &v, sizeof(T));
    return out;
}

template <typename T>
void write_le(std::ofstream& f, T value) {
    uint64_t v = 0;
    std::memcpy(&v, &value, sizeof(T));
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = (v >> (8 * i)) & 0xff;
    f.write(reinterpret_cast<char*>(buf), sizeof(T));
}

// im2col for stride-1 valid convolution: [n, c, h, w] -> [n*p, c*kh*kw]
void im2col(const double* x, std::size_t n, const Layer& l, std::vector<double>& cols) {
    const std::size_t p = std::size_t(l.out_h()) * l.out_w();
    const std::size_t f = std::size_t(l.in_c) * l.kh * l.kw;
    cols.assign(n * p * f, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
        const double* img = x + s * l.input_size();
        for (uint32_t i = 0; i < l.out_h(); ++i) {
            for (uint32_t j = 0; j < l.out_w(); ++j) {
                double* dst = &cols[(s * p + std::size_t(i) * l.out_w() + j) * f];
                for (uint32_t c = 0; c < l.in_c; ++c)
                    for (uint32_t ki = 0; ki < l.kh; ++ki)
                        for (uint32_t kj = 0; kj < l.kw; ++kj)
                            *dst++ = img[(std::size_t(c) * l.in_h + i + ki) * l.in_w + j + kj];
            }
        }
    }
}

void col2im(const std::vector<double>& dcols, std::size_t n, const Layer& l, double* dx) {
    const std::size_t p = std::size_t(l.out_h()) * l.out_w();
    const std::size_t f = std::size_t(l.in_c) * l.kh * l.kw;
    std::fill(dx, dx + n * l.input_size(), 0.0);
    for (std::size_t s = 0; s < n; ++s) {
        double* img = dx + s * l.input_size();
        for (uint32_t i = 0; i < l.out_h(); ++i) {
            for (uint32_t j = 0; j < l.out_w(); ++j) {
                const double* src = &dcols[(s * p + std::size_t(i) * l.out_w() + j) * f];
                for (uint32_t c = 0; c < l.in_c; ++c)
                    for (uint32_t ki = 0; ki < l.kh; ++ki)
                        for (uint32_t kj = 0; kj < l.kw; ++kj)
                            img[(std::size_t(c) * l.in_h + i + ki) * l.in_w + j + kj] += *src++;
            }
        }
    }
}

}  // namespace

std::size_t Layer::input_size() const {
    return kind == LayerKind::Dense ? in : std::size_t(in_c) * in_h * in_w;
}

std::size_t Layer::output_size() const {
    return kind == LayerKind::Dense ? out : std::size_t(out_c) * out_h() * out_w();
}

Dataset Dataset::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FileFormatError("cannot open dataset file: " + path);
    char magic[6];
    read_exact(f, magic, 6, "magic");
    if (std::memcmp(magic, kDatMagic, 6) != 0)
        throw FileFormatError("not a dataset file: " + path);
    if (read_le<uint16_t>(f, "version") != kFormatVersion)
        throw FileFormatError("unsupported dataset format version in " + path);
    Dataset d;
    d.n = read_le<uint32_t>(f, "n");
    d.features = read_le<uint32_t>(f, "features");
    d.num_classes = read_le<uint32_t>(f, "classes");
    d.x.resize(d.n * d.features);
    for (auto& v : d.x) v = double(read_le<float>(f, "sample"));
    d.labels.resize(d.n);
    read_exact(f, d.labels.data(), d.n, "labels");
    for (uint8_t y : d.labels)
        if (y >= d.num_classes) throw FileFormatError("label out of range in " + path);
    return d;
}

Batch Dataset::all() const {
    Batch b;
    b.n = n;
    b.features = features;
    b.x = x;
    b.labels = labels;
    return b;
}

Batch Dataset::sample(std::size_t size, uint64_t seed) const {
    if (size > n) throw ConfigError("sample size exceeds dataset size");
    std::vector<uint32_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = uint32_t(i);
    Rng rng = Rng::substream(seed, /*tag=*/0xba7c);
    for (std::size_t i = 0; i < size; ++i) {
        std::size_t j = i + rng.below(n - i);
        std::swap(idx[i], idx[j]);
    }
    Batch b;
    b.n = size;
    b.features = features;
    b.x.resize(size * features);
    b.labels.resize(size);
    for (std::size_t i = 0; i < size; ++i) {
        std::copy_n(&x[idx[i] * features], features, &b.x[i * features]);
        b.labels[i] = labels[idx[i]];
    }
    return b;
}

QuantizedModel QuantizedModel::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FileFormatError("cannot open checkpoint file: " + path);
    char magic[6];
    read_exact(f, magic, 6, "magic");
    if (std::memcmp(magic, kCkpMagic, 6) != 0)
        throw FileFormatError("not a checkpoint file: " + path);
    if (read_le<uint16_t>(f, "version") != kFormatVersion)
        throw FileFormatError("unsupported checkpoint format version in " + path);

    QuantizedModel m;
    uint32_t num_layers = read_le<uint32_t>(f, "num_layers");
    m.num_classes_ = read_le<uint32_t>(f, "num_classes");
    m.input_size_ = read_le<uint32_t>(f, "input_size");
    if (num_layers == 0 || m.num_classes_ == 0)
        throw FileFormatError("checkpoint must have layers and classes");

    std::size_t expect_in = m.input_size_;
    for (uint32_t li = 0; li < num_layers; ++li) {
        Layer l;
        uint8_t kind = read_le<uint8_t>(f, "kind");
        uint8_t act = read_le<uint8_t>(f, "activation");
        read_le<uint16_t>(f, "reserved");
        if (kind > 1 || act > 1) throw FileFormatError("bad layer descriptor");
        l.kind = LayerKind(kind);
        l.activation = Activation(act);
        std::size_t count;
        if (l.kind == LayerKind::Dense) {
            l.in = read_le<uint32_t>(f, "in");
            l.out = read_le<uint32_t>(f, "out");
            count = std::size_t(l.in) * l.out;
        } else {
            l.in_c = read_le<uint32_t>(f, "in_c");
            l.out_c = read_le<uint32_t>(f, "out_c");
            l.kh = read_le<uint32_t>(f, "kh");
            l.kw = read_le<uint32_t>(f, "kw");
            l.in_h = read_le<uint32_t>(f, "in_h");
            l.in_w = read_le<uint32_t>(f, "in_w");
            if (l.kh == 0 || l.kw == 0 || l.kh > l.in_h || l.kw > l.in_w)
                throw FileFormatError("bad conv kernel shape");
            count = std::size_t(l.out_c) * l.in_c * l.kh * l.kw;
        }
        if (l.input_size() != expect_in)
            throw FileFormatError("layer " + std::to_string(li) + " input size mismatch");
        expect_in = l.output_size();
        l.scale = read_le<double>(f, "scale");
        if (!(l.scale > 0.0) || !std::isfinite(l.scale))
            throw FileFormatError("layer scale must be positive and finite");
        l.codes.resize(count);
        read_exact(f, l.codes.data(), count, "codes");
        l.weights.resize(count);
        for (std::size_t i = 0; i < count; ++i) l.weights[i] = l.scale * double(l.codes[i]);
        m.layers_.push_back(std::move(l));
    }
    if (expect_in != m.num_classes_)
        throw FileFormatError("final layer width must equal num_classes");
    return m;
}

void QuantizedModel::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FileFormatError("cannot write checkpoint file: " + path);
    f.write(kCkpMagic, 6);
    write_le<uint16_t>(f, kFormatVersion);
    write_le<uint32_t>(f, uint32_t(layers_.size()));
    write_le<uint32_t>(f, num_classes_);
    write_le<uint32_t>(f, input_size_);
    for (const Layer& l : layers_) {
        write_le<uint8_t>(f, uint8_t(l.kind));
        write_le<uint8_t>(f, uint8_t(l.activation));
        write_le<uint16_t>(f, 0);
        if (l.kind == LayerKind::Dense) {
            write_le<uint32_t>(f, l.in);
            write_le<uint32_t>(f, l.out);
        } else {
            write_le<uint32_t>(f, l.in_c);
            write_le<uint32_t>(f, l.out_c);
            write_le<uint32_t>(f, l.kh);
            write_le<uint32_t>(f, l.kw);
            write_le<uint32_t>(f, l.in_h);
            write_le<uint32_t>(f, l.in_w);
        }
        write_le<double>(f, l.scale);
        f.write(reinterpret_cast<const char*>(l.codes.data()),
                std::streamsize(l.codes.size()));
    }
    if (!f) throw FileFormatError("write failed: " + path);
}

QuantizedModel QuantizedModel::quantize(std::vector<Layer> layers, uint32_t num_classes,
                                        uint32_t input_size) {
    QuantizedModel m;
    m.num_classes_ = num_classes;
    m.input_size_ = input_size;
    for (Layer& l : layers) {
        double max_abs = 0.0;
        for (double w : l.weights) max_abs = std::max(max_abs, std::fabs(w));
        l.scale = max_abs > 0.0 ? max_abs / 127.0 : 1.0;
        l.codes.resize(l.weights.size());
        for (std::size_t i = 0; i < l.weights.size(); ++i) {
            long code = std::lround(l.weights[i] / l.scale);
            code = std::clamp(code, -127L, 127L);
            l.codes[i] = int8_t(code);
            l.weights[i] = l.scale * double(code);
        }
        m.layers_.push_back(std::move(l));
    }
    return m;
}

struct QuantizedModel::ForwardCache {
    // inputs[i] feeds layer i; inputs[L] holds the logits
    std::vector<std::vector<double>> inputs;
    std::vector<std::vector<double>> zs;    // pre-activation, conv in [n*p, out_c] layout
    std::vector<std::vector<double>> cols;  // conv im2col buffers
    std::size_t n = 0;
};

void QuantizedModel::run_forward(const Batch& batch, ForwardCache& cache) const {
    if (batch.features != input_size_)
        throw ShapeError("input has " + std::to_string(batch.features) + " features, model expects " +
                         std::to_string(input_size_));
    const std::size_t n = batch.n;
    cache.n = n;
    cache.inputs.assign(layers_.size() + 1, {});
    cache.zs.assign(layers_.size(), {});
    cache.cols.assign(layers_.size(), {});
    cache.inputs[0] = batch.x;

    for (std::size_t li = 0; li < layers_.size(); ++li) {
        const Layer& l = layers_[li];
        const std::vector<double>& x = cache.inputs[li];
        std::vector<double>& z = cache.zs[li];
        std::vector<double>& y = cache.inputs[li + 1];
        if (l.kind == LayerKind::Dense) {
            z.assign(n * l.out, 0.0);
            kernels::matmul_nt(x.data(), l.weights.data(), z.data(), n, l.out, l.in);
            y.resize(z.size());
            if (l.activation == Activation::Relu)
                kernels::relu(z.data(), y.data(), z.size());
            else
                y = z;
        } else {
            const std::size_t p = std::size_t(l.out_h()) * l.out_w();
            const std::size_t f = std::size_t(l.in_c) * l.kh * l.kw;
            im2col(x.data(), n, l, cache.cols[li]);
            z.assign(n * p * l.out_c, 0.0);
            kernels::matmul_nt(cache.cols[li].data(), l.weights.data(), z.data(), n * p,
                               l.out_c, f);
            // emit channel-major features [n, out_c, p]
            y.assign(n * l.out_c * p, 0.0);
            for (std::size_t s = 0; s < n; ++s)
                for (std::size_t pi = 0; pi < p; ++pi)
                    for (uint32_t oc = 0; oc < l.out_c; ++oc) {
                        double v = z[(s * p + pi) * l.out_c + oc];
                        if (l.activation == Activation::Relu && v < 0.0) v = 0.0;
                        y[(s * l.out_c + oc) * p + pi] = v;
                    }
        }
    }
}

std::vector<double> QuantizedModel::forward(const Batch& batch) const {
    ForwardCache cache;
    run_forward(batch, cache);
    return cache.inputs.back();
}

namespace {

// Mean cross-entropy over the batch; fills dlogits with (softmax - onehot)/n
// when non-null.
double softmax_cross_entropy(const std::vector<double>& logits,
                             const std::vector<uint8_t>& labels, std::size_t n,
                             std::size_t classes, std::vector<double>* dlogits) {
    double total = 0.0;
    if (dlogits) dlogits->assign(n * classes, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
        const double* row = &logits[s * classes];
        double mx = row[0];
        for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
        double denom = 0.0;
        for (std::size_t c = 0; c < classes; ++c) denom += std::exp(row[c] - mx);
        const double log_denom = std::log(denom);
        total += log_denom - (row[labels[s]] - mx);
        if (dlogits) {
            for (std::size_t c = 0; c < classes; ++c) {
                double p = std::exp(row[c] - mx) / denom;
                (*dlogits)[s * classes + c] = (p - (c == labels[s] ? 1.0 : 0.0)) / double(n);
            }
        }
    }
    return total / double(n);
}

}  // namespace

double QuantizedModel::loss(const Batch& batch) const {
    ForwardCache cache;
    run_forward(batch, cache);
    return softmax_cross_entropy(cache.inputs.back(), batch.labels, batch.n, num_classes_,
                                 nullptr);
}

LossAndGrad QuantizedModel::loss_and_weight_grad(const Batch& batch) const {
    for (uint8_t y : batch.labels)
        if (y >= num_classes_) throw ShapeError("label out of range");
    ForwardCache cache;
    run_forward(batch, cache);

    LossAndGrad result;
    result.grads.resize(layers_.size());
    std::vector<double> dy;
    result.loss = softmax_cross_entropy(cache.inputs.back(), batch.labels, batch.n,
                                        num_classes_, &dy);

    const std::size_t n = batch.n;
    for (std::size_t li = layers_.size(); li-- > 0;) {
        const Layer& l = layers_[li];
        std::vector<double>& dw = result.grads[li];
        dw.assign(l.weight_count(), 0.0);
        if (l.kind == LayerKind::Dense) {
            if (l.activation == Activation::Relu)
                kernels::relu_backward(dy.data(), cache.zs[li].data(), dy.size());
            kernels::matmul_tn(dy.data(), cache.inputs[li].data(), dw.data(), l.out, l.in, n);
            if (li > 0) {
                std::vector<double> dx(n * l.in, 0.0);
                kernels::matmul_nn(dy.data(), l.weights.data(), dx.data(), n, l.in, l.out);
                dy = std::move(dx);
            }
        } else {
            const std::size_t p = std::size_t(l.out_h()) * l.out_w();
            const std::size_t f = std::size_t(l.in_c) * l.kh * l.kw;
            // dy arrives channel-major [n, out_c, p]; regroup to [n*p, out_c]
            std::vector<double> dz(n * p * l.out_c, 0.0);
            for (std::size_t s = 0; s < n; ++s)
                for (uint32_t oc = 0; oc < l.out_c; ++oc)
                    for (std::size_t pi = 0; pi < p; ++pi)
                        dz[(s * p + pi) * l.out_c + oc] = dy[(s * l.out_c + oc) * p + pi];
            if (l.activation == Activation::Relu)
                kernels::relu_backward(dz.data(), cache.zs[li].data(), dz.size());
            kernels::matmul_tn(dz.data(), cache.cols[li].data(), dw.data(), l.out_c, f, n * p);
            if (li > 0) {
                std::vector<double> dcols(n * p * f, 0.0);
                kernels::matmul_nn(dz.data(), l.weights.data(), dcols.data(), n * p, f,
                                   l.out_c);
                std::vector<double> dx(n * l.input_size(), 0.0);
                col2im(dcols, n, l, dx.data());
                dy = std::move(dx);
            }
        }
    }
    return result;
}

double QuantizedModel::accuracy(const Batch& batch) const {
    std::vector<double> logits = forward(batch);
    std::size_t correct = 0;
    for (std::size_t s = 0; s < batch.n; ++s) {
        const double* row = &logits[s * num_classes_];
        std::size_t best = 0;
        for (std::size_t c = 1; c < num_classes_; ++c)
            if (row[c] > row[best]) best = c;
        if (best == batch.labels[s]) ++correct;
    }
    return batch.n == 0 ? 0.0 : double(correct) / double(batch.n);
}

std::optional<AscentInfo> ascent_flip(int8_t code, uint8_t bit, double grad, double scale) {
    const bool bit_set = (uint8_t(code) >> bit) & 1u;
    // Code delta caused by flipping this bit; bit 7 carries -128.
    const double place = bit == 7 ? -128.0 : double(1u << bit);
    const double dw = scale * (bit_set ? -place : place);
    if (grad * dw <= 0.0) return std::nullopt;
    return AscentInfo{bit_set ? FlipDirection::OneToZero : FlipDirection::ZeroToOne,
                      std::fabs(grad) * scale * double(1u << bit)};
}

std::vector<BitGradient> QuantizedModel::bit_gradients(const Batch& batch) const {
    LossAndGrad lg = loss_and_weight_grad(batch);
    std::vector<BitGradient> out;
    for (uint32_t li = 0; li < layers_.size(); ++li) {
        const Layer& l = layers_[li];
        for (uint32_t wi = 0; wi < l.weight_count(); ++wi) {
            const double g = lg.grads[li][wi];
            if (g == 0.0) continue;
            for (uint8_t b = 0; b < 8; ++b) {
                auto info = ascent_flip(l.codes[wi], b, g, l.scale);
                if (info)
                    out.push_back({BitLocation{li, wi, b}, info->magnitude,
                                   info->direction});
            }
        }
    }
    std::sort(out.begin(), out.end(), [](const BitGradient& a, const BitGradient& b) {
        if (a.magnitude != b.magnitude) return a.magnitude > b.magnitude;
        return a.location < b.location;
    });
    return out;
}

void QuantizedModel::check_location(const BitLocation& loc) const {
    if (loc.layer >= layers_.size() || loc.weight_index >= layers_[loc.layer].weight_count() ||
        loc.bit > 7)
        throw AddressError("bit location out of range");
}

void QuantizedModel::flip_bit(const BitLocation& loc) {
    check_location(loc);
    Layer& l = layers_[loc.layer];
    l.codes[loc.weight_index] = int8_t(uint8_t(l.codes[loc.weight_index]) ^ (1u << loc.bit));
    l.weights[loc.weight_index] = l.scale * double(l.codes[loc.weight_index]);
}

int8_t QuantizedModel::code(uint32_t layer, uint32_t weight_index) const {
    check_location({layer, weight_index, 0});
    return layers_[layer].codes[weight_index];
}

std::size_t QuantizedModel::total_weights() const {
    std::size_t total = 0;
    for (const Layer& l : layers_) total += l.weight_count();
    return total;
}

std::vector<int8_t> QuantizedModel::codes_snapshot() const {
    std::vector<int8_t> out;
    out.reserve(total_weights());
    for (const Layer& l : layers_) out.insert(out.end(), l.codes.begin(), l.codes.end());
    return out;
}

void QuantizedModel::restore_codes(const std::vector<int8_t>& snapshot) {
    if (snapshot.size() != total_weights())
        throw ShapeError("snapshot size does not match model");
    std::size_t pos = 0;
    for (Layer& l : layers_) {
        std::copy_n(&snapshot[pos], l.weight_count(), l.codes.begin());
        pos += l.weight_count();
        for (std::size_t i = 0; i < l.weight_count(); ++i)
            l.weights[i] = l.scale * double(l.codes[i]);
    }
}

void QuantizedModel::nudge_weight(uint32_t layer, uint32_t weight_index, double delta) {
    check_location({layer, weight_index, 0});
    layers_[layer].weights[weight_index] += delta;
}

BitLocation QuantizedModel::bit_from_flat(std::size_t flat_bit) const {
    if (flat_bit >= total_bits()) throw AddressError("flat bit index out of range");
    std::size_t weight = flat_bit / 8;
    for (uint32_t li = 0; li < layers_.size(); ++li) {
        if (weight < layers_[li].weight_count())
            return {li, uint32_t(weight), uint8_t(flat_bit % 8)};
        weight -= layers_[li].weight_count();
    }
    throw AddressError("unreachable");
}

std::size_t hamming_distance(const QuantizedModel& a, const QuantizedModel& b) {
    std::vector<int8_t> ca = a.codes_snapshot();
    std::vector<int8_t> cb = b.codes_snapshot();
    if (ca.size() != cb.size()) throw ShapeError("models differ in shape");
    std::size_t dist = 0;
    for (std::size_t i = 0; i < ca.size(); ++i)
        dist += std::size_t(__builtin_popcount(uint8_t(ca[i]) ^ uint8_t(cb[i])));
    return dist;
}

}  // namespace rhsim
