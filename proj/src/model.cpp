#include "psmt/model.hpp"

#include <algorithm>
#include <cmath>

#include "psmt/error.hpp"
#include "psmt/rng.hpp"

namespace psmt {

namespace {

constexpr double kBnEps = 1e-5;

std::string stage_name(std::size_t i) { return "enc.stage" + std::to_string(i + 1); }

void relu_inplace(Tensor& t) {
    for (double& v : t.values()) v = v > 0.0 ? v : 0.0;
}

// dy *= (out > 0)
void relu_backward_inplace(Tensor& dy, const Tensor& out) {
    auto g = dy.values();
    auto o = out.values();
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (o[i] <= 0.0) g[i] = 0.0;
    }
}

}  // namespace

// ---------------------------------------------------------------- arch

int ArchDescriptor::downsample_factor() const {
    int f = 1;
    for (int s : encoder_strides) f *= s;
    return f;
}

void ArchDescriptor::validate() const {
    if (in_channels < 1) throw ConfigError("arch: in_channels must be >= 1");
    if (num_classes < 2) throw ConfigError("arch: num_classes must be >= 2");
    if (encoder_widths.empty() || encoder_widths.size() != encoder_strides.size()) {
        throw ConfigError("arch: encoder_widths and encoder_strides must be non-empty and equal length");
    }
    for (int w : encoder_widths) {
        if (w < 1) throw ConfigError("arch: encoder widths must be >= 1");
    }
    for (int s : encoder_strides) {
        if (s != 1 && s != 2) throw ConfigError("arch: encoder strides must be 1 or 2");
    }
    if (decoder_hidden < 0) throw ConfigError("arch: decoder_hidden must be >= 0");
}

void to_json(nlohmann::json& j, const ArchDescriptor& a) {
    j = nlohmann::json{{"in_channels", a.in_channels},
                       {"num_classes", a.num_classes},
                       {"encoder_widths", a.encoder_widths},
                       {"encoder_strides", a.encoder_strides},
                       {"decoder_hidden", a.decoder_hidden},
                       {"batch_norm", a.batch_norm}};
}

void from_json(const nlohmann::json& j, ArchDescriptor& a) {
    j.at("in_channels").get_to(a.in_channels);
    j.at("num_classes").get_to(a.num_classes);
    j.at("encoder_widths").get_to(a.encoder_widths);
    j.at("encoder_strides").get_to(a.encoder_strides);
    j.at("decoder_hidden").get_to(a.decoder_hidden);
    j.at("batch_norm").get_to(a.batch_norm);
}

// ---------------------------------------------------------------- layout

SegModel::SegModel(ArchDescriptor arch, std::uint64_t seed) : arch_(std::move(arch)) {
    arch_.validate();
    build_layout();
    Rng rng = Rng::derive(seed, {stream::init});
    for (const auto& s : layout_) {
        auto dst = std::span<double>(params_).subspan(s.offset, s.size);
        const bool is_weight = s.name.ends_with(".weight");
        const bool is_gamma = s.name.ends_with(".gamma");
        if (is_weight) {
            std::size_t fan_in = 0;
            if (s.name.starts_with("enc.stage")) {
                const std::size_t i = std::stoul(s.name.substr(9)) - 1;
                fan_in = stage_geometry(i).patch();
            } else if (s.name.starts_with("dec.hidden")) {
                fan_in = static_cast<std::size_t>(arch_.feature_dim()) * 9;
            } else {
                fan_in = static_cast<std::size_t>(arch_.decoder_hidden > 0 ? arch_.decoder_hidden
                                                                          : arch_.feature_dim());
            }
            const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
            for (double& v : dst) v = stddev * rng.normal();
        } else if (is_gamma) {
            std::fill(dst.begin(), dst.end(), 1.0);
        }
    }
}

SegModel SegModel::zeros(ArchDescriptor arch) {
    SegModel m;
    m.arch_ = std::move(arch);
    m.arch_.validate();
    m.build_layout();
    return m;
}

void SegModel::build_layout() {
    layout_.clear();
    buffer_layout_.clear();
    std::size_t offset = 0;
    auto add = [&offset, this](const std::string& layer, const std::string& name, std::size_t size) {
        layout_.push_back({layer + "." + name, layer, offset, size});
        offset += size;
    };
    std::size_t boffset = 0;
    auto add_buffer = [&boffset, this](const std::string& layer, const std::string& name,
                                       std::size_t size) {
        buffer_layout_.push_back({layer + "." + name, layer, boffset, size});
        boffset += size;
    };

    for (std::size_t i = 0; i < arch_.encoder_widths.size(); ++i) {
        const auto g = stage_geometry(i);
        const auto width = static_cast<std::size_t>(g.out_channels);
        add(stage_name(i), "conv.weight", g.weight_size());
        if (arch_.batch_norm) {
            add(stage_name(i), "bn.gamma", width);
            add(stage_name(i), "bn.beta", width);
            add_buffer(stage_name(i), "bn.running_mean", width);
            add_buffer(stage_name(i), "bn.running_var", width);
        } else {
            add(stage_name(i), "conv.bias", width);
        }
    }
    encoder_size_ = offset;
    const auto z = static_cast<std::size_t>(arch_.feature_dim());
    const auto y = static_cast<std::size_t>(arch_.num_classes);
    std::size_t proj_in = z;
    if (arch_.decoder_hidden > 0) {
        const auto hdim = static_cast<std::size_t>(arch_.decoder_hidden);
        add("dec.hidden", "weight", hdim * z * 9);
        add("dec.hidden", "bias", hdim);
        proj_in = hdim;
    }
    add("dec.proj", "weight", y * proj_in);
    add("dec.proj", "bias", y);

    params_.assign(offset, 0.0);
    buffers_.assign(boffset, 0.0);
    for (const auto& b : buffer_layout_) {
        if (b.name.ends_with("running_var")) {
            std::fill_n(buffers_.begin() + static_cast<std::ptrdiff_t>(b.offset), b.size, 1.0);
        }
    }
}

kernels::ConvGeometry SegModel::stage_geometry(std::size_t stage) const {
    const int in = stage == 0 ? arch_.in_channels : arch_.encoder_widths[stage - 1];
    return {in, arch_.encoder_widths[stage], 3, arch_.encoder_strides[stage], 1};
}

std::vector<std::string> SegModel::layer_names() const {
    std::vector<std::string> names;
    for (const auto& s : layout_) {
        if (names.empty() || names.back() != s.layer) names.push_back(s.layer);
    }
    return names;
}

std::span<double> SegModel::encoder_params() {
    return std::span<double>(params_).first(encoder_size_);
}
std::span<const double> SegModel::encoder_params() const {
    return std::span<const double>(params_).first(encoder_size_);
}
std::span<double> SegModel::decoder_params() {
    return std::span<double>(params_).subspan(encoder_size_);
}
std::span<const double> SegModel::decoder_params() const {
    return std::span<const double>(params_).subspan(encoder_size_);
}

void SegModel::set_params(std::span<const double> values) {
    if (values.size() != params_.size()) {
        throw ConfigError("set_params: expected " + std::to_string(params_.size()) +
                          " values, got " + std::to_string(values.size()));
    }
    std::copy(values.begin(), values.end(), params_.begin());
}

void SegModel::set_buffers(std::span<const double> values) {
    if (values.size() != buffers_.size()) {
        throw ConfigError("set_buffers: expected " + std::to_string(buffers_.size()) +
                          " values, got " + std::to_string(values.size()));
    }
    std::copy(values.begin(), values.end(), buffers_.begin());
}

const ParamSlice& SegModel::slice(const std::string& name) const {
    for (const auto& s : layout_) {
        if (s.name == name) return s;
    }
    for (const auto& s : buffer_layout_) {
        if (s.name == name) return s;
    }
    throw ConfigError("unknown parameter '" + name + "'");
}

std::span<const double> SegModel::view(const std::string& name) const {
    for (const auto& s : layout_) {
        if (s.name == name) return std::span<const double>(params_).subspan(s.offset, s.size);
    }
    for (const auto& s : buffer_layout_) {
        if (s.name == name) return std::span<const double>(buffers_).subspan(s.offset, s.size);
    }
    throw ConfigError("unknown parameter '" + name + "'");
}

std::span<double> SegModel::grad_view(std::span<double> grad, const std::string& name) const {
    const auto& s = slice(name);
    return grad.subspan(s.offset, s.size);
}

// ---------------------------------------------------------------- shapes

void SegModel::check_image(const Shape& x) const {
    const int f = arch_.downsample_factor();
    if (x.n < 1 || x.c != arch_.in_channels || x.h < kMinImageSide || x.w < kMinImageSide ||
        x.h % f != 0 || x.w % f != 0) {
        throw ConfigError("image shape " + to_string(x) + " incompatible with model expecting Nx" +
                          std::to_string(arch_.in_channels) + "xHxW, H,W >= " +
                          std::to_string(kMinImageSide) + " and divisible by " +
                          std::to_string(f));
    }
}

Shape SegModel::feature_shape(const Shape& image) const {
    const int f = arch_.downsample_factor();
    return {image.n, arch_.feature_dim(), image.h / f, image.w / f};
}

// ---------------------------------------------------------------- forward

Tensor SegModel::encode(const Tensor& x, Mode mode, EncoderTrace* trace) const {
    check_image(x.shape());
    if (trace) {
        *trace = EncoderTrace{};
        trace->mode = mode;
    }
    Tensor cur = x;
    for (std::size_t i = 0; i < arch_.encoder_widths.size(); ++i) {
        const auto g = stage_geometry(i);
        const auto& s = cur.shape();
        Tensor out({s.n, g.out_channels, g.out_size(s.h), g.out_size(s.w)});
        const std::string name = stage_name(i);
        kernels::conv2d_forward(g, cur, view(name + ".conv.weight"),
                                arch_.batch_norm ? std::span<const double>{}
                                                 : view(name + ".conv.bias"),
                                out);
        if (arch_.batch_norm) {
            const auto& os = out.shape();
            const auto gamma = view(name + ".bn.gamma");
            const auto beta = view(name + ".bn.beta");
            const std::size_t plane = os.plane();
            const double count = static_cast<double>(os.n) * static_cast<double>(plane);
            std::vector<double> mean(static_cast<std::size_t>(os.c));
            std::vector<double> var(static_cast<std::size_t>(os.c));
            if (mode == Mode::train) {
                for (int c = 0; c < os.c; ++c) {
                    double sum = 0.0;
                    for (int n = 0; n < os.n; ++n) {
                        const double* p = out.data() + (static_cast<std::size_t>(n) * os.c + c) * plane;
                        for (std::size_t k = 0; k < plane; ++k) sum += p[k];
                    }
                    const double m = sum / count;
                    double sq = 0.0;
                    for (int n = 0; n < os.n; ++n) {
                        const double* p = out.data() + (static_cast<std::size_t>(n) * os.c + c) * plane;
                        for (std::size_t k = 0; k < plane; ++k) sq += (p[k] - m) * (p[k] - m);
                    }
                    mean[static_cast<std::size_t>(c)] = m;
                    var[static_cast<std::size_t>(c)] = sq / count;
                }
            } else {
                const auto rm = view(name + ".bn.running_mean");
                const auto rv = view(name + ".bn.running_var");
                std::copy(rm.begin(), rm.end(), mean.begin());
                std::copy(rv.begin(), rv.end(), var.begin());
            }
            std::vector<double> inv_std(static_cast<std::size_t>(os.c));
            for (std::size_t c = 0; c < inv_std.size(); ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + kBnEps);
            Tensor xhat(os);
            for (int n = 0; n < os.n; ++n) {
                for (int c = 0; c < os.c; ++c) {
                    const auto ci = static_cast<std::size_t>(c);
                    const std::size_t base = (static_cast<std::size_t>(n) * os.c + ci) * plane;
                    for (std::size_t k = 0; k < plane; ++k) {
                        const double nv = (out.data()[base + k] - mean[ci]) * inv_std[ci];
                        xhat.data()[base + k] = nv;
                        out.data()[base + k] = gamma[ci] * nv + beta[ci];
                    }
                }
            }
            if (trace) {
                trace->xhat.push_back(std::move(xhat));
                trace->inv_std.push_back(std::move(inv_std));
                trace->batch_mean.push_back(std::move(mean));
                trace->batch_var.push_back(std::move(var));
            }
        }
        relu_inplace(out);
        if (trace) {
            trace->inputs.push_back(std::move(cur));
            trace->outputs.push_back(out);
        }
        cur = std::move(out);
    }
    return cur;
}

Tensor SegModel::decode(const Tensor& z, DecoderTrace* trace) const {
    const auto& zs = z.shape();
    if (zs.c != arch_.feature_dim() || zs.n < 1 || zs.h < 1 || zs.w < 1) {
        throw ConfigError("feature shape " + to_string(zs) + " incompatible with decoder expecting Nx" +
                          std::to_string(arch_.feature_dim()) + "xH'xW'");
    }
    const Tensor* proj_in = &z;
    Tensor hidden;
    if (arch_.decoder_hidden > 0) {
        const kernels::ConvGeometry g{arch_.feature_dim(), arch_.decoder_hidden, 3, 1, 1};
        hidden = Tensor({zs.n, arch_.decoder_hidden, zs.h, zs.w});
        kernels::conv2d_forward(g, z, view("dec.hidden.weight"), view("dec.hidden.bias"), hidden);
        relu_inplace(hidden);
        proj_in = &hidden;
    }
    const kernels::ConvGeometry pg{proj_in->shape().c, arch_.num_classes, 1, 1, 0};
    Tensor low({zs.n, arch_.num_classes, zs.h, zs.w});
    kernels::conv2d_forward(pg, *proj_in, view("dec.proj.weight"), view("dec.proj.bias"), low);
    const int f = arch_.downsample_factor();
    Tensor out({zs.n, arch_.num_classes, zs.h * f, zs.w * f});
    kernels::resize_bilinear(low, out);
    if (trace) {
        trace->input = z;
        trace->hidden = std::move(hidden);
        trace->low_logits = std::move(low);
    }
    return out;
}

Tensor SegModel::logits(const Tensor& x) const { return decode(encode(x)); }

Tensor SegModel::predict_probs(const Tensor& x) const { return softmax_channels(logits(x)); }

// ---------------------------------------------------------------- backward

Tensor SegModel::decode_backward(const DecoderTrace& trace, const Tensor& dlogits,
                                 std::span<double> grad) const {
    const bool want_params = !grad.empty();
    const auto& zs = trace.input.shape();
    Tensor dlow(trace.low_logits.shape());
    kernels::resize_bilinear_backward(dlogits, dlow);

    const bool has_hidden = arch_.decoder_hidden > 0;
    const Tensor& proj_in = has_hidden ? trace.hidden : trace.input;
    const kernels::ConvGeometry pg{proj_in.shape().c, arch_.num_classes, 1, 1, 0};
    if (want_params) {
        kernels::conv2d_backward_params(pg, proj_in, dlow, grad_view(grad, "dec.proj.weight"),
                                        grad_view(grad, "dec.proj.bias"));
    }
    Tensor dproj_in(proj_in.shape());
    kernels::conv2d_backward_input(pg, dlow, view("dec.proj.weight"), dproj_in);
    if (!has_hidden) return dproj_in;

    relu_backward_inplace(dproj_in, trace.hidden);
    const kernels::ConvGeometry hg{arch_.feature_dim(), arch_.decoder_hidden, 3, 1, 1};
    if (want_params) {
        kernels::conv2d_backward_params(hg, trace.input, dproj_in,
                                        grad_view(grad, "dec.hidden.weight"),
                                        grad_view(grad, "dec.hidden.bias"));
    }
    Tensor dz(zs);
    kernels::conv2d_backward_input(hg, dproj_in, view("dec.hidden.weight"), dz);
    return dz;
}

void SegModel::encode_backward(const EncoderTrace& trace, const Tensor& dz,
                               std::span<double> grad) const {
    Tensor dcur = dz;
    for (std::size_t ii = arch_.encoder_widths.size(); ii-- > 0;) {
        const auto g = stage_geometry(ii);
        const std::string name = stage_name(ii);
        relu_backward_inplace(dcur, trace.outputs[ii]);
        if (arch_.batch_norm) {
            const auto& os = dcur.shape();
            const std::size_t plane = os.plane();
            const double count = static_cast<double>(os.n) * static_cast<double>(plane);
            const auto gamma = view(name + ".bn.gamma");
            auto dgamma = grad_view(grad, name + ".bn.gamma");
            auto dbeta = grad_view(grad, name + ".bn.beta");
            const Tensor& xhat = trace.xhat[ii];
            const auto& inv_std = trace.inv_std[ii];
            for (int c = 0; c < os.c; ++c) {
                const auto ci = static_cast<std::size_t>(c);
                double sum_dy = 0.0;
                double sum_dy_xhat = 0.0;
                for (int n = 0; n < os.n; ++n) {
                    const std::size_t base = (static_cast<std::size_t>(n) * os.c + ci) * plane;
                    for (std::size_t k = 0; k < plane; ++k) {
                        sum_dy += dcur.data()[base + k];
                        sum_dy_xhat += dcur.data()[base + k] * xhat.data()[base + k];
                    }
                }
                dgamma[ci] += sum_dy_xhat;
                dbeta[ci] += sum_dy;
                for (int n = 0; n < os.n; ++n) {
                    const std::size_t base = (static_cast<std::size_t>(n) * os.c + ci) * plane;
                    for (std::size_t k = 0; k < plane; ++k) {
                        double& d = dcur.data()[base + k];
                        if (trace.mode == Mode::train) {
                            d = gamma[ci] * inv_std[ci] *
                                (d - sum_dy / count - xhat.data()[base + k] * sum_dy_xhat / count);
                        } else {
                            d = gamma[ci] * inv_std[ci] * d;
                        }
                    }
                }
            }
        }
        kernels::conv2d_backward_params(
            g, trace.inputs[ii], dcur, grad_view(grad, name + ".conv.weight"),
            arch_.batch_norm ? std::span<double>{} : grad_view(grad, name + ".conv.bias"));
        if (ii == 0) break;
        Tensor dprev(trace.inputs[ii].shape());
        kernels::conv2d_backward_input(g, dcur, view(name + ".conv.weight"), dprev);
        dcur = std::move(dprev);
    }
}

void SegModel::update_running_stats(const EncoderTrace& trace, double momentum) {
    if (!arch_.batch_norm || trace.mode != Mode::train) return;
    for (std::size_t i = 0; i < trace.batch_mean.size(); ++i) {
        const std::string name = stage_name(i);
        const auto& ms = slice(name + ".bn.running_mean");
        const auto& vs = slice(name + ".bn.running_var");
        const auto& os = trace.outputs[i].shape();
        const double count = static_cast<double>(os.n) * static_cast<double>(os.plane());
        const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
        for (std::size_t c = 0; c < ms.size; ++c) {
            double& rm = buffers_[ms.offset + c];
            double& rv = buffers_[vs.offset + c];
            rm = (1.0 - momentum) * rm + momentum * trace.batch_mean[i][c];
            rv = (1.0 - momentum) * rv + momentum * trace.batch_var[i][c] * unbias;
        }
    }
}

// ---------------------------------------------------------------- softmax

Tensor softmax_channels(const Tensor& logits) {
    const auto& s = logits.shape();
    Tensor out(s);
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
        const double* in = logits.sample(n).data();
        double* o = out.sample(n).data();
        for (std::size_t p = 0; p < plane; ++p) {
            double mx = in[p];
            for (int c = 1; c < s.c; ++c) mx = std::max(mx, in[c * plane + p]);
            double sum = 0.0;
            for (int c = 0; c < s.c; ++c) {
                const double e = std::exp(in[c * plane + p] - mx);
                o[c * plane + p] = e;
                sum += e;
            }
            const double inv = 1.0 / sum;
            for (int c = 0; c < s.c; ++c) o[c * plane + p] *= inv;
        }
    }
    return out;
}

LabelMap argmax_channels(const Tensor& scores) {
    const auto& s = scores.shape();
    LabelMap out(s.n, s.h, s.w);
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
        const double* in = scores.sample(n).data();
        for (std::size_t p = 0; p < plane; ++p) {
            int best = 0;
            double bv = in[p];
            for (int c = 1; c < s.c; ++c) {
                if (in[c * plane + p] > bv) {
                    bv = in[c * plane + p];
                    best = c;
                }
            }
            out.values[static_cast<std::size_t>(n) * plane + p] = best;
        }
    }
    return out;
}

}  // namespace psmt
