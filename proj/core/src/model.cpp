#include "sril/model.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace sril {

namespace {

constexpr int kMlpWidth = 64;
// Hidden units are grouped into channels of spatial extent 4 for the tap
// view. A per-channel normalization over a single scalar would be piecewise
// constant (zero gradient almost everywhere), so width-1 "channels" would
// make any normalized feature penalty inert on this backbone.
constexpr int kMlpChannels = 16;
constexpr int kMlpSpatial = kMlpWidth / kMlpChannels;
constexpr int kConvChannels[3] = {16, 32, 64};

Tensor init_normal(Shape shape, double stddev, RngStream& rng, bool requires_grad = true) {
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
    for (double& x : v) x = stddev * rng.normal();
    return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

}  // namespace

Backbone::Backbone(BackboneConfig cfg, RngStream& rng) : cfg_(std::move(cfg)) {
    if (cfg_.arch == "mlp-s") {
        int fan_in = cfg_.input_dim;
        for (int s = 0; s < 3; ++s) {
            params_.push_back(init_normal({fan_in, kMlpWidth}, std::sqrt(2.0 / fan_in), rng));
            params_.push_back(Tensor::zeros({kMlpWidth}, true));
            fan_in = kMlpWidth;
        }
    } else if (cfg_.arch == "conv-s") {
        int cin = cfg_.in_channels;
        for (int s = 0; s < 3; ++s) {
            const int f = kConvChannels[s];
            params_.push_back(init_normal({f, cin, 3, 3}, std::sqrt(2.0 / (cin * 9.0)), rng));
            params_.push_back(Tensor::zeros({f}, true));
            cin = f;
        }
    } else {
        throw TensorError("unknown backbone architecture: " + cfg_.arch);
    }
}

int Backbone::stage_channels(int stage) const {
    return cfg_.arch == "mlp-s" ? kMlpChannels : kConvChannels[stage];
}

int Backbone::stage_spatial(int stage) const {
    if (cfg_.arch == "mlp-s") return kMlpSpatial;
    int h = cfg_.height, w = cfg_.width;
    for (int s = 0; s <= stage; ++s) {
        h /= 2;
        w /= 2;
    }
    return h * w;
}

int Backbone::embed_dim() const {
    return stage_channels(2) * stage_spatial(2);
}

std::pair<Tensor, std::vector<FeatureTap>> Backbone::forward_with_taps(const Tensor& batch) const {
    std::vector<FeatureTap> taps;
    Tensor x = batch;
    if (cfg_.arch == "mlp-s") {
        if (x.shape().size() != 2 || x.shape()[1] != cfg_.input_dim)
            throw TensorError("mlp-s forward: expected (B," + std::to_string(cfg_.input_dim) +
                              "), got " + shape_str(x.shape()));
        const int B = x.shape()[0];
        for (int s = 0; s < 3; ++s) {
            Tensor h = relu(add_bias(matmul(x, params_[2 * s]), params_[2 * s + 1]));
            Tensor tap = reshape(h, {B, kMlpChannels, kMlpSpatial});
            taps.push_back({"stage" + std::to_string(s), tap});
            x = reshape(tap, {B, kMlpWidth});
        }
        return {l2_normalize_lastdim(x), std::move(taps)};
    }
    if (x.shape().size() != 4 || x.shape()[1] != cfg_.in_channels || x.shape()[2] != cfg_.height ||
        x.shape()[3] != cfg_.width)
        throw TensorError("conv-s forward: expected (B," + std::to_string(cfg_.in_channels) + "," +
                          std::to_string(cfg_.height) + "," + std::to_string(cfg_.width) + "), got " +
                          shape_str(x.shape()));
    const int B = x.shape()[0];
    int h = cfg_.height, w = cfg_.width;
    for (int s = 0; s < 3; ++s) {
        Tensor y = avg_pool2(relu(conv2d(x, params_[2 * s], params_[2 * s + 1])));
        h /= 2;
        w /= 2;
        const int C = kConvChannels[s];
        Tensor tap = reshape(y, {B, C, h * w});
        taps.push_back({"stage" + std::to_string(s), tap});
        x = reshape(tap, {B, C, h, w});
    }
    return {l2_normalize_lastdim(reshape(x, {B, embed_dim()})), std::move(taps)};
}

Tensor Backbone::forward_from_tap(int stage, const Tensor& tap_value) const {
    const int B = tap_value.shape()[0];
    Tensor x;
    if (cfg_.arch == "mlp-s") {
        x = reshape(tap_value, {B, kMlpWidth});
        for (int s = stage + 1; s < 3; ++s)
            x = relu(add_bias(matmul(x, params_[2 * s]), params_[2 * s + 1]));
        return l2_normalize_lastdim(x);
    }
    int h = cfg_.height, w = cfg_.width;
    for (int s = 0; s <= stage; ++s) {
        h /= 2;
        w /= 2;
    }
    x = reshape(tap_value, {B, kConvChannels[stage], h, w});
    for (int s = stage + 1; s < 3; ++s) {
        x = avg_pool2(relu(conv2d(x, params_[2 * s], params_[2 * s + 1])));
        h /= 2;
        w /= 2;
    }
    return l2_normalize_lastdim(reshape(x, {B, embed_dim()}));
}

Backbone Backbone::clone() const {
    Backbone b;
    b.cfg_ = cfg_;
    for (const auto& p : params_) b.params_.push_back(p.clone());
    return b;
}

void LSCHead::renormalize_proxies() {
    auto& d = proxies.mutable_data();
    for (int r = 0; r < num_classes * K; ++r) {
        double s = 0.0;
        for (int j = 0; j < embed_dim; ++j) s += d[r * embed_dim + j] * d[r * embed_dim + j];
        const double nrm = std::sqrt(s);
        if (nrm < kNormalizeEps) continue;
        for (int j = 0; j < embed_dim; ++j) d[r * embed_dim + j] /= nrm;
    }
}

LSCHead LSCHead::clone() const {
    LSCHead h = *this;
    h.proxies = proxies.clone();
    h.eta_raw = eta_raw.clone();
    return h;
}

LSCHead make_lsc_head(int num_classes, int K, int embed_dim, double margin, RngStream& rng) {
    LSCHead head;
    head.K = K;
    head.num_classes = 0;
    head.embed_dim = embed_dim;
    head.margin = margin;
    head.proxies = Tensor::from({0, embed_dim}, {}, true);
    // Cosine-similarity scores live in [-1, 1]; a small temperature makes the
    // hinged NCA objective nearly flat at log(C-1) and the optimizer parks
    // eta at the degenerate zero minimum. Start sharp enough that correct
    // classifications can actually close the hinge.
    head.eta_raw = Tensor::scalar(10.0, true);
    expand_head(head, num_classes, rng);
    return head;
}

void expand_head(LSCHead& head, int new_class_count, RngStream& rng) {
    if (new_class_count < 1) throw TensorError("expand_head: new_class_count must be >= 1");
    const int old_rows = head.num_classes * head.K;
    const int add_rows = new_class_count * head.K;
    std::vector<double> data = head.proxies.data();
    data.resize(static_cast<std::size_t>(old_rows + add_rows) * head.embed_dim);
    for (int r = old_rows; r < old_rows + add_rows; ++r) {
        double s = 0.0;
        for (int j = 0; j < head.embed_dim; ++j) {
            const double v = rng.normal();
            data[static_cast<std::size_t>(r) * head.embed_dim + j] = v;
            s += v * v;
        }
        const double nrm = std::sqrt(s);
        if (nrm < kNormalizeEps) continue;
        for (int j = 0; j < head.embed_dim; ++j) data[static_cast<std::size_t>(r) * head.embed_dim + j] /= nrm;
    }
    const bool rg = head.proxies.requires_grad();
    head.num_classes += new_class_count;
    head.proxies = Tensor::from({old_rows + add_rows, head.embed_dim}, std::move(data), rg);
}

Tensor lsc_logits(const LSCHead& head, const Tensor& z) {
    if (z.shape().size() != 2 || z.shape()[1] != head.embed_dim)
        throw TensorError("lsc_logits: expected (B," + std::to_string(head.embed_dim) + "), got " +
                          shape_str(z.shape()));
    const int B = z.shape()[0];
    Tensor sims = reshape(matmul_nt(z, head.proxies), {B, head.num_classes, head.K});
    Tensor weights = softmax_lastdim(sims);
    return sum_lastdim(mul(weights, sims));
}

std::vector<Tensor> Model::parameters() {
    std::vector<Tensor> ps = backbone.params();
    ps.push_back(head.proxies);
    ps.push_back(head.eta_raw);
    return ps;
}

std::vector<Tensor> Model::parameters() const {
    std::vector<Tensor> ps = backbone.params();
    ps.push_back(head.proxies);
    ps.push_back(head.eta_raw);
    return ps;
}

Model Model::clone() const {
    Model m;
    m.backbone = backbone.clone();
    m.head = head.clone();
    return m;
}

void Model::set_requires_grad(bool v) {
    for (auto& p : parameters()) p.set_requires_grad(v);
}

Tensor Model::logits(const Tensor& batch) const {
    return lsc_logits(head, backbone.forward_with_taps(batch).first);
}

Model make_model(const BackboneConfig& cfg, int num_classes, int K, double margin, RngStream& rng) {
    Model m;
    m.backbone = Backbone(cfg, rng);
    m.head = make_lsc_head(num_classes, K, m.backbone.embed_dim(), margin, rng);
    return m;
}

Model snapshot(const Model& m) {
    Model s = m.clone();
    s.set_requires_grad(false);
    return s;
}

namespace {

void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void write_i32(std::ostream& os, std::int32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void write_f64(std::ostream& os, double v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void write_str(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
void write_array(std::ostream& os, const std::string& name, const Tensor& t) {
    write_str(os, name);
    write_u32(os, static_cast<std::uint32_t>(t.shape().size()));
    for (int d : t.shape()) write_i32(os, d);
    os.write(reinterpret_cast<const char*>(t.data().data()),
             static_cast<std::streamsize>(t.data().size() * 8));
}

std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
std::int32_t read_i32(std::istream& is) {
    std::int32_t v;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
double read_f64(std::istream& is) {
    double v;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
std::string read_str(std::istream& is) {
    std::string s(read_u32(is), '\0');
    is.read(s.data(), static_cast<std::streamsize>(s.size()));
    return s;
}
std::pair<std::string, Tensor> read_array(std::istream& is) {
    std::string name = read_str(is);
    Shape shape(read_u32(is));
    for (int& d : shape) d = read_i32(is);
    std::vector<double> data(static_cast<std::size_t>(shape_numel(shape)));
    is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * 8));
    return {std::move(name), Tensor::from(std::move(shape), std::move(data))};
}

constexpr char kCkptMagic[8] = {'S', 'R', 'I', 'L', 'C', 'K', 'P', '1'};

}  // namespace

void save_checkpoint(const std::string& path, const Model& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw TensorError("cannot open checkpoint for writing: " + path);
    os.write(kCkptMagic, 8);
    const auto& cfg = m.backbone.config();
    write_str(os, cfg.arch);
    write_i32(os, cfg.input_dim);
    write_i32(os, cfg.in_channels);
    write_i32(os, cfg.height);
    write_i32(os, cfg.width);
    write_i32(os, m.head.num_classes);
    write_i32(os, m.head.K);
    write_f64(os, m.head.margin);
    const auto& bb = m.backbone.params();
    write_u32(os, static_cast<std::uint32_t>(bb.size()) + 2);
    for (std::size_t i = 0; i < bb.size(); ++i) write_array(os, "bb." + std::to_string(i), bb[i]);
    write_array(os, "proxies", m.head.proxies);
    write_array(os, "eta_raw", m.head.eta_raw);
    if (!os) throw TensorError("failed writing checkpoint: " + path);
}

Model load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw TensorError("cannot open checkpoint: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kCkptMagic, 8) != 0)
        throw TensorError("bad checkpoint magic in " + path);
    BackboneConfig cfg;
    cfg.arch = read_str(is);
    cfg.input_dim = read_i32(is);
    cfg.in_channels = read_i32(is);
    cfg.height = read_i32(is);
    cfg.width = read_i32(is);
    const int num_classes = read_i32(is);
    const int K = read_i32(is);
    const double margin = read_f64(is);

    RngStream scratch(0);
    Model m = make_model(cfg, num_classes, K, margin, scratch);
    const std::uint32_t count = read_u32(is);
    auto& bb = m.backbone.params();
    for (std::uint32_t i = 0; i < count; ++i) {
        auto [name, t] = read_array(is);
        Tensor* dst = nullptr;
        if (name.rfind("bb.", 0) == 0) {
            const std::size_t idx = std::stoul(name.substr(3));
            if (idx >= bb.size()) throw TensorError("checkpoint has unexpected array " + name);
            dst = &bb[idx];
        } else if (name == "proxies") {
            dst = &m.head.proxies;
        } else if (name == "eta_raw") {
            dst = &m.head.eta_raw;
        } else {
            throw TensorError("checkpoint has unknown array " + name);
        }
        if (dst->shape() != t.shape())
            throw TensorError("checkpoint array " + name + " has shape " + shape_str(t.shape()) +
                              ", expected " + shape_str(dst->shape()));
        dst->mutable_data() = t.data();
    }
    if (!is) throw TensorError("truncated checkpoint: " + path);
    return m;
}

std::uint64_t param_hash(const Model& m) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& p : m.parameters())
        for (double v : p.data()) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, 8);
            for (int b = 0; b < 8; ++b) {
                h ^= (bits >> (8 * b)) & 0xff;
                h *= 1099511628211ULL;
            }
        }
    return h;
}

}  // namespace sril
