#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "psmt/kernels.hpp"
#include "psmt/tensor.hpp"

namespace psmt {

// Structural description shared by the student and both teachers.
struct ArchDescriptor {
    int in_channels = 3;
    int num_classes = 4;
    std::vector<int> encoder_widths{16, 32, 32};
    std::vector<int> encoder_strides{2, 2, 1};
    int decoder_hidden = 32;  // 0: projection layer only
    bool batch_norm = false;

    [[nodiscard]] int downsample_factor() const;
    [[nodiscard]] int feature_dim() const { return encoder_widths.back(); }
    void validate() const;

    friend bool operator==(const ArchDescriptor&, const ArchDescriptor&) = default;
};

void to_json(nlohmann::json& j, const ArchDescriptor& a);
void from_json(const nlohmann::json& j, ArchDescriptor& a);

inline constexpr int kMinImageSide = 16;

struct ParamSlice {
    std::string name;   // e.g. "enc.stage1.conv.weight"
    std::string layer;  // e.g. "enc.stage1"
    std::size_t offset = 0;
    std::size_t size = 0;
};

enum class Mode { eval, train };

// Activations recorded by a forward pass, consumed by the matching backward.
struct EncoderTrace {
    Mode mode = Mode::eval;
    std::vector<Tensor> inputs;   // conv input of each stage
    std::vector<Tensor> outputs;  // post-ReLU output of each stage
    std::vector<Tensor> xhat;     // normalised conv output (batch norm only)
    std::vector<std::vector<double>> inv_std;
    std::vector<std::vector<double>> batch_mean;
    std::vector<std::vector<double>> batch_var;
};

struct DecoderTrace {
    Tensor input;
    Tensor hidden;      // post-ReLU hidden activation (empty without hidden layer)
    Tensor low_logits;  // projection output before upsampling
};

// Encoder h (strided 3x3 conv stages) followed by decoder g (optional 3x3
// hidden conv, 1x1 projection to class logits, bilinear upsampling back to
// the input resolution). All parameters live in one flat vector: the
// encoder block first, then the decoder block.
class SegModel {
public:
    SegModel() = default;
    // He fan-in initialisation from `seed`.
    SegModel(ArchDescriptor arch, std::uint64_t seed);

    static SegModel zeros(ArchDescriptor arch);

    [[nodiscard]] const ArchDescriptor& arch() const { return arch_; }
    [[nodiscard]] const std::vector<ParamSlice>& layout() const { return layout_; }
    [[nodiscard]] const std::vector<ParamSlice>& buffer_layout() const { return buffer_layout_; }
    [[nodiscard]] std::vector<std::string> layer_names() const;

    [[nodiscard]] std::span<double> params() { return params_; }
    [[nodiscard]] std::span<const double> params() const { return params_; }
    [[nodiscard]] std::span<double> encoder_params();
    [[nodiscard]] std::span<const double> encoder_params() const;
    [[nodiscard]] std::span<double> decoder_params();
    [[nodiscard]] std::span<const double> decoder_params() const;
    // Batch-norm running statistics (empty without batch norm).
    [[nodiscard]] std::span<double> buffers() { return buffers_; }
    [[nodiscard]] std::span<const double> buffers() const { return buffers_; }

    void set_params(std::span<const double> values);
    void set_buffers(std::span<const double> values);
    [[nodiscard]] const ParamSlice& slice(const std::string& name) const;

    // Input shape check; throws ConfigError naming both shapes.
    void check_image(const Shape& x) const;
    [[nodiscard]] Shape feature_shape(const Shape& image) const;

    Tensor encode(const Tensor& x, Mode mode = Mode::eval, EncoderTrace* trace = nullptr) const;
    Tensor decode(const Tensor& z, DecoderTrace* trace = nullptr) const;
    [[nodiscard]] Tensor logits(const Tensor& x) const;
    [[nodiscard]] Tensor predict_probs(const Tensor& x) const;

    // Returns dL/dz. Decoder parameter gradients are accumulated into
    // `grad` (full parameter-vector length) unless it is empty.
    Tensor decode_backward(const DecoderTrace& trace, const Tensor& dlogits,
                           std::span<double> grad) const;
    // Accumulates encoder parameter gradients into `grad`.
    void encode_backward(const EncoderTrace& trace, const Tensor& dz, std::span<double> grad) const;

    // Folds the batch statistics of a training-mode trace into the running
    // statistics (no-op without batch norm).
    void update_running_stats(const EncoderTrace& trace, double momentum);

    [[nodiscard]] bool same_layout(const SegModel& other) const {
        return arch_ == other.arch_ && params_.size() == other.params_.size();
    }

private:
    void build_layout();
    [[nodiscard]] kernels::ConvGeometry stage_geometry(std::size_t stage) const;
    [[nodiscard]] std::span<const double> view(const std::string& name) const;
    [[nodiscard]] std::span<double> grad_view(std::span<double> grad, const std::string& name) const;

    ArchDescriptor arch_;
    std::vector<ParamSlice> layout_;
    std::vector<ParamSlice> buffer_layout_;
    std::size_t encoder_size_ = 0;
    std::vector<double> params_;
    std::vector<double> buffers_;
};

// Pixel-wise softmax over the channel axis.
Tensor softmax_channels(const Tensor& logits);

// Per-pixel argmax over channels; ties resolve to the lowest class index.
LabelMap argmax_channels(const Tensor& scores);

}  // namespace psmt
