#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace rhsim {

enum class LayerKind : uint8_t { Dense = 0, Conv2d = 1 };
enum class Activation : uint8_t { None = 0, Relu = 1 };

// A single weight bit. Bit 7 is the sign bit of the two's-complement code.
struct BitLocation {
    uint32_t layer = 0;
    uint32_t weight_index = 0;
    uint8_t bit = 0;
    auto operator<=>(const BitLocation&) const = default;
};

struct BitLocationHash {
    std::size_t operator()(const BitLocation& b) const {
        return (std::size_t(b.layer) << 40) ^ (std::size_t(b.weight_index) << 8) ^ b.bit;
    }
};

enum class FlipDirection : uint8_t { ZeroToOne = 0, OneToZero = 1 };

struct BitGradient {
    BitLocation location;
    double magnitude = 0.0;  // |dL/dw| * scale * 2^bit
    FlipDirection ascent_flip_direction = FlipDirection::ZeroToOne;
};

struct Layer {
    LayerKind kind = LayerKind::Dense;
    Activation activation = Activation::None;
    // dense: weights[out][in]
    uint32_t in = 0, out = 0;
    // conv2d (stride 1, valid): weights[out_c][in_c*kh*kw]
    uint32_t in_c = 0, out_c = 0, kh = 0, kw = 0, in_h = 0, in_w = 0;

    double scale = 1.0;
    std::vector<int8_t> codes;
    std::vector<double> weights;  // dequantized mirror, scale * code

    uint32_t out_h() const { return in_h - kh + 1; }
    uint32_t out_w() const { return in_w - kw + 1; }
    std::size_t weight_count() const { return codes.size(); }
    std::size_t input_size() const;
    std::size_t output_size() const;
};

struct Batch {
    std::size_t n = 0;
    std::size_t features = 0;
    std::vector<double> x;        // n * features, row-major
    std::vector<uint8_t> labels;  // n
};

// Held-out evaluation samples, loaded from the committed .qds file.
struct Dataset {
    std::size_t n = 0;
    std::size_t features = 0;
    uint32_t num_classes = 0;
    std::vector<double> x;
    std::vector<uint8_t> labels;

    static Dataset load(const std::string& path);
    Batch all() const;
    // Seeded sample of `size` rows without replacement.
    Batch sample(std::size_t size, uint64_t seed) const;
};

struct LossAndGrad {
    double loss = 0.0;
    // per layer, same shape as Layer::weights
    std::vector<std::vector<double>> grads;
};

// 8-bit two's-complement weight network. Codes are the source of truth;
// `weights` mirrors scale*code and is rebuilt whenever a code changes.
class QuantizedModel {
  public:
    static QuantizedModel load(const std::string& path);
    void save(const std::string& path) const;
    // Quantizes float weights with per-layer scale max|w|/127. The layer
    // descriptions carry shapes; weight values are taken from `weights`.
    static QuantizedModel quantize(std::vector<Layer> layers, uint32_t num_classes,
                                   uint32_t input_size);

    std::vector<double> forward(const Batch& batch) const;  // n * num_classes logits
    double loss(const Batch& batch) const;
    LossAndGrad loss_and_weight_grad(const Batch& batch) const;
    double accuracy(const Batch& batch) const;

    // All loss-ascending bit flips, ranked by magnitude descending, ties by
    // (layer, weight_index, bit) ascending. Zero-gradient weights yield none.
    std::vector<BitGradient> bit_gradients(const Batch& batch) const;

    void flip_bit(const BitLocation& loc);

    int8_t code(uint32_t layer, uint32_t weight_index) const;
    const std::vector<Layer>& layers() const { return layers_; }
    uint32_t num_classes() const { return num_classes_; }
    uint32_t input_size() const { return input_size_; }
    std::size_t total_weights() const;
    std::size_t total_bits() const { return total_weights() * 8; }

    std::vector<int8_t> codes_snapshot() const;
    void restore_codes(const std::vector<int8_t>& snapshot);

    // Measurement hook: perturbs the dequantized view of one weight without
    // touching its code (used by finite-difference gradient checks).
    void nudge_weight(uint32_t layer, uint32_t weight_index, double delta);

    BitLocation bit_from_flat(std::size_t flat_bit) const;

  private:
    struct ForwardCache;
    void run_forward(const Batch& batch, ForwardCache& cache) const;
    void check_location(const BitLocation& loc) const;

    std::vector<Layer> layers_;
    uint32_t num_classes_ = 0;
    uint32_t input_size_ = 0;
};

// Direction a flip must take to increase loss to first order, given the
// current code bit and the weight gradient; nullopt when not ascending.
struct AscentInfo {
    FlipDirection direction;
    double magnitude;
};
std::optional<AscentInfo> ascent_flip(int8_t code, uint8_t bit, double grad, double scale);

std::size_t hamming_distance(const QuantizedModel& a, const QuantizedModel& b);

}  // namespace rhsim
