#include "mt3d/weights.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include "mt3d/io.hpp"
#include "mt3d/rng.hpp"

namespace mt3d {

void PipelineWeights::validate(const Config& cfg) const {
    tokenizer.validate(cfg);
    if (mask_embed.w.size() != cfg.channels || mask_embed.b.size() != cfg.channels)
        throw Error(ErrorKind::ShapeMismatch, "mask embedding must have C entries");
    gfem.validate(cfg.channels);
    mip.validate(cfg);
    head.validate(cfg.channels);
    if (static_cast<int>(bissm.layers.size()) != cfg.ssm_layers)
        throw Error(ErrorKind::ShapeMismatch, "unexpected Bi-SSM layer count");
    for (const auto& layer : bissm.layers) {
        layer.fwd.validate();
        layer.bwd.validate();
        if (layer.fwd.channels() != cfg.channels || layer.fwd.state_dim() != cfg.state_dim ||
            layer.bwd.channels() != cfg.channels || layer.bwd.state_dim() != cfg.state_dim)
            throw Error(ErrorKind::ShapeMismatch, "Bi-SSM layer dims disagree with config");
        if (layer.norm_scale.size() != cfg.channels)
            throw Error(ErrorKind::ShapeMismatch, "norm scale must have C entries");
    }
}

std::vector<TensorSpec> required_tensors(const Config& cfg) {
    const int c = cfg.channels;
    const int c2 = cfg.half_channels();
    const int d = cfg.state_dim;
    std::vector<TensorSpec> out;
    out.push_back({"tokenizer.w1", {c2, 3}});
    out.push_back({"tokenizer.b1", {c2}});
    out.push_back({"tokenizer.w2", {c, c2}});
    out.push_back({"tokenizer.b2", {c}});
    out.push_back({"mask_embed.w", {c}});
    out.push_back({"mask_embed.b", {c}});
    for (const char* g : {"g1", "g2"}) {
        const std::string base = std::string("gfem.") + g + ".";
        out.push_back({base + "wq", {c2, c2}});
        out.push_back({base + "wk", {c2, c2}});
        out.push_back({base + "wv", {c2, c2}});
        out.push_back({base + "bq", {c2}});
        out.push_back({base + "bk", {c2}});
        out.push_back({base + "bv", {c2}});
    }
    out.push_back({"mip.proj_w", {c, 2 * c}});
    out.push_back({"mip.proj_b", {c}});
    out.push_back({"mip.alpha", {c}});
    out.push_back({"mip.beta", {c}});
    for (int i = 0; i < cfg.ssm_layers; ++i) {
        for (const char* dir : {"fwd", "bwd"}) {
            const std::string base =
                "bissm." + std::to_string(i) + "." + dir + ".";
            out.push_back({base + "a", {c, d}});
            out.push_back({base + "wb", {d, c}});
            out.push_back({base + "wc", {d, c}});
            out.push_back({base + "wdelta", {c, c}});
            out.push_back({base + "bdelta", {c}});
            out.push_back({base + "wgate", {c, c}});
            out.push_back({base + "bgate", {c}});
        }
        out.push_back({"bissm." + std::to_string(i) + ".norm_scale", {c}});
    }
    out.push_back({"head.mask_w", {c}});
    out.push_back({"head.mask_b", {1}});
    out.push_back({"head.vote_w", {3, c}});
    out.push_back({"head.vote_b", {3}});
    out.push_back({"head.vq_w", {c}});
    out.push_back({"head.vq_b", {1}});
    out.push_back({"head.box_w", {4, c}});
    out.push_back({"head.box_b", {4}});
    out.push_back({"head.bq_w", {c}});
    out.push_back({"head.bq_b", {1}});
    return out;
}

static bool ends_with(const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

static Mat init_tensor(const TensorSpec& spec, std::uint64_t seed) {
    const int rows = spec.shape[0];
    const int cols = spec.shape.size() > 1 ? spec.shape[1] : 1;
    Mat t = Mat::Zero(rows, cols);
    Rng rng(derive_seed(seed, fnv1a64(spec.name.data(), spec.name.size())));

    if (ends_with(spec.name, ".norm_scale") || spec.name == "mip.alpha") {
        t.setOnes();
        return t;
    }
    if (spec.name == "mip.beta") return t;
    if (spec.name.rfind("bissm.", 0) == 0 && ends_with(spec.name, ".a")) {
        // Real diagonal state init: channel-shared -(1 + j).
        for (int r = 0; r < rows; ++r)
            for (int j = 0; j < cols; ++j) t(r, j) = -(1.0 + j);
        return t;
    }
    if (ends_with(spec.name, ".bdelta")) {
        // Place softplus(bdelta) log-uniformly in [1e-3, 0.1].
        for (int r = 0; r < rows; ++r) {
            const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(0.1)));
            t(r, 0) = std::log(std::expm1(dt));
        }
        return t;
    }
    int fan_in = 0;
    if (spec.shape.size() > 1) {
        fan_in = cols;
    } else if (spec.name == "mask_embed.w") {
        fan_in = 1;
    } else if (spec.name == "head.mask_w" || spec.name == "head.vq_w" ||
               spec.name == "head.bq_w") {
        fan_in = rows;  // C-vector heads contract over the channels
    }
    if (fan_in == 0) return t;  // biases stay zero
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j < cols; ++j) t(r, j) = rng.uniform(-bound, bound);
    return t;
}

std::map<std::string, Mat> weights_to_tensors(const Config& cfg, const PipelineWeights& w) {
    std::map<std::string, Mat> t;
    auto vec = [](const Vec& v) { return Mat(v); };
    auto scalar = [](double s) { return Mat::Constant(1, 1, s); };

    t["tokenizer.w1"] = w.tokenizer.w1;
    t["tokenizer.b1"] = vec(w.tokenizer.b1);
    t["tokenizer.w2"] = w.tokenizer.w2;
    t["tokenizer.b2"] = vec(w.tokenizer.b2);
    t["mask_embed.w"] = vec(w.mask_embed.w);
    t["mask_embed.b"] = vec(w.mask_embed.b);
    const GFEMGroup* groups[2] = {&w.gfem.g1, &w.gfem.g2};
    const char* gname[2] = {"g1", "g2"};
    for (int g = 0; g < 2; ++g) {
        const std::string base = std::string("gfem.") + gname[g] + ".";
        t[base + "wq"] = groups[g]->wq;
        t[base + "wk"] = groups[g]->wk;
        t[base + "wv"] = groups[g]->wv;
        t[base + "bq"] = vec(groups[g]->bq);
        t[base + "bk"] = vec(groups[g]->bk);
        t[base + "bv"] = vec(groups[g]->bv);
    }
    t["mip.proj_w"] = w.mip.proj_w;
    t["mip.proj_b"] = vec(w.mip.proj_b);
    t["mip.alpha"] = vec(w.mip.alpha);
    t["mip.beta"] = vec(w.mip.beta);
    for (int i = 0; i < static_cast<int>(w.bissm.layers.size()); ++i) {
        const BiSSMLayer& layer = w.bissm.layers[i];
        const SelectiveParams* dirs[2] = {&layer.fwd, &layer.bwd};
        const char* dname[2] = {"fwd", "bwd"};
        for (int k = 0; k < 2; ++k) {
            const std::string base =
                "bissm." + std::to_string(i) + "." + dname[k] + ".";
            t[base + "a"] = dirs[k]->a;
            t[base + "wb"] = dirs[k]->wb;
            t[base + "wc"] = dirs[k]->wc;
            t[base + "wdelta"] = dirs[k]->wdelta;
            t[base + "bdelta"] = vec(dirs[k]->bdelta);
            t[base + "wgate"] = dirs[k]->wgate;
            t[base + "bgate"] = vec(dirs[k]->bgate);
        }
        t["bissm." + std::to_string(i) + ".norm_scale"] = vec(layer.norm_scale);
    }
    t["head.mask_w"] = vec(w.head.mask_w);
    t["head.mask_b"] = scalar(w.head.mask_b);
    t["head.vote_w"] = w.head.vote_w;
    t["head.vote_b"] = vec(w.head.vote_b);
    t["head.vq_w"] = vec(w.head.vq_w);
    t["head.vq_b"] = scalar(w.head.vq_b);
    t["head.box_w"] = w.head.box_w;
    t["head.box_b"] = vec(w.head.box_b);
    t["head.bq_w"] = vec(w.head.bq_w);
    t["head.bq_b"] = scalar(w.head.bq_b);
    (void)cfg;
    return t;
}

PipelineWeights weights_from_tensors(const Config& cfg,
                                     const std::map<std::string, Mat>& tensors) {
    auto get = [&](const std::string& name) -> const Mat& {
        auto it = tensors.find(name);
        if (it == tensors.end())
            throw Error(ErrorKind::MissingTensor, "missing tensor: " + name);
        return it->second;
    };
    auto vec = [&](const std::string& name) -> Vec { return get(name).col(0); };
    auto scalar = [&](const std::string& name) -> double { return get(name)(0, 0); };

    PipelineWeights w;
    w.tokenizer.w1 = get("tokenizer.w1");
    w.tokenizer.b1 = vec("tokenizer.b1");
    w.tokenizer.w2 = get("tokenizer.w2");
    w.tokenizer.b2 = vec("tokenizer.b2");
    w.mask_embed.w = vec("mask_embed.w");
    w.mask_embed.b = vec("mask_embed.b");
    GFEMGroup* groups[2] = {&w.gfem.g1, &w.gfem.g2};
    const char* gname[2] = {"g1", "g2"};
    for (int g = 0; g < 2; ++g) {
        const std::string base = std::string("gfem.") + gname[g] + ".";
        groups[g]->wq = get(base + "wq");
        groups[g]->wk = get(base + "wk");
        groups[g]->wv = get(base + "wv");
        groups[g]->bq = vec(base + "bq");
        groups[g]->bk = vec(base + "bk");
        groups[g]->bv = vec(base + "bv");
    }
    w.mip.proj_w = get("mip.proj_w");
    w.mip.proj_b = vec("mip.proj_b");
    w.mip.alpha = vec("mip.alpha");
    w.mip.beta = vec("mip.beta");
    w.bissm.layers.resize(cfg.ssm_layers);
    for (int i = 0; i < cfg.ssm_layers; ++i) {
        BiSSMLayer& layer = w.bissm.layers[i];
        SelectiveParams* dirs[2] = {&layer.fwd, &layer.bwd};
        const char* dname[2] = {"fwd", "bwd"};
        for (int k = 0; k < 2; ++k) {
            const std::string base =
                "bissm." + std::to_string(i) + "." + dname[k] + ".";
            dirs[k]->a = get(base + "a");
            dirs[k]->wb = get(base + "wb");
            dirs[k]->wc = get(base + "wc");
            dirs[k]->wdelta = get(base + "wdelta");
            dirs[k]->bdelta = vec(base + "bdelta");
            dirs[k]->wgate = get(base + "wgate");
            dirs[k]->bgate = vec(base + "bgate");
        }
        layer.norm_scale = vec("bissm." + std::to_string(i) + ".norm_scale");
    }
    w.head.mask_w = vec("head.mask_w");
    w.head.mask_b = scalar("head.mask_b");
    w.head.vote_w = get("head.vote_w");
    w.head.vote_b = vec("head.vote_b");
    w.head.vq_w = vec("head.vq_w");
    w.head.vq_b = scalar("head.vq_b");
    w.head.box_w = get("head.box_w");
    w.head.box_b = vec("head.box_b");
    w.head.bq_w = vec("head.bq_w");
    w.head.bq_b = scalar("head.bq_b");
    w.validate(cfg);
    return w;
}

PipelineWeights init_weights(const Config& cfg, std::uint64_t seed) {
    cfg.validate();
    std::map<std::string, Mat> tensors;
    for (const TensorSpec& spec : required_tensors(cfg))
        tensors[spec.name] = init_tensor(spec, seed);
    return weights_from_tensors(cfg, tensors);
}

namespace {

constexpr std::uint32_t kWeightsVersion = 1;

void put_u32(std::string& s, std::uint32_t v) {
    s.push_back(static_cast<char>(v & 0xff));
    s.push_back(static_cast<char>((v >> 8) & 0xff));
    s.push_back(static_cast<char>((v >> 16) & 0xff));
    s.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32(std::string& s, float f) {
    std::uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32(s, v);
}

struct ByteReader {
    const std::string& buf;
    std::size_t pos = 0;

    explicit ByteReader(const std::string& b) : buf(b) {}

    void need(std::size_t n) const {
        if (pos + n > buf.size())
            throw Error(ErrorKind::Io, "truncated weights file");
    }
    std::uint32_t u32() {
        need(4);
        const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + pos);
        pos += 4;
        return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
               (static_cast<std::uint32_t>(p[2]) << 16) |
               (static_cast<std::uint32_t>(p[3]) << 24);
    }
    float f32() {
        const std::uint32_t v = u32();
        float f;
        std::memcpy(&f, &v, 4);
        return f;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string out = buf.substr(pos, n);
        pos += n;
        return out;
    }
};

}  // namespace

void save_weights(const std::string& path, const Config& cfg, const PipelineWeights& w) {
    w.validate(cfg);
    const auto specs = required_tensors(cfg);
    const auto tensors = weights_to_tensors(cfg, w);

    std::string buf;
    buf += "MT3D";
    put_u32(buf, kWeightsVersion);
    const std::string cfg_json = config_to_json(cfg).dump();
    put_u32(buf, static_cast<std::uint32_t>(cfg_json.size()));
    buf += cfg_json;
    put_u32(buf, static_cast<std::uint32_t>(specs.size()));
    for (const TensorSpec& spec : specs) {
        put_u32(buf, static_cast<std::uint32_t>(spec.name.size()));
        buf += spec.name;
        put_u32(buf, static_cast<std::uint32_t>(spec.shape.size()));
        for (int dim : spec.shape) put_u32(buf, static_cast<std::uint32_t>(dim));
        const Mat& t = tensors.at(spec.name);
        for (int r = 0; r < t.rows(); ++r)
            for (int c = 0; c < t.cols(); ++c)
                put_f32(buf, static_cast<float>(t(r, c)));
    }
    const auto crc =
        crc32(crc32(0L, Z_NULL, 0),
              reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size()));
    put_u32(buf, static_cast<std::uint32_t>(crc));
    write_text_file(path, buf);
}

LoadedWeights load_weights(const std::string& path) {
    const std::string buf = read_text_file(path);
    if (buf.size() < 12) throw Error(ErrorKind::Io, "weights file too small: " + path);

    const std::size_t body = buf.size() - 4;
    const auto want = crc32(crc32(0L, Z_NULL, 0),
                            reinterpret_cast<const Bytef*>(buf.data()),
                            static_cast<uInt>(body));
    const auto* tail = reinterpret_cast<const unsigned char*>(buf.data() + body);
    const std::uint32_t stored = static_cast<std::uint32_t>(tail[0]) |
                                 (static_cast<std::uint32_t>(tail[1]) << 8) |
                                 (static_cast<std::uint32_t>(tail[2]) << 16) |
                                 (static_cast<std::uint32_t>(tail[3]) << 24);
    if (static_cast<std::uint32_t>(want) != stored)
        throw Error(ErrorKind::ChecksumMismatch, "weights checksum mismatch: " + path);

    ByteReader rd(buf);
    if (rd.bytes(4) != "MT3D")
        throw Error(ErrorKind::Io, "bad magic in weights file: " + path);
    const std::uint32_t version = rd.u32();
    if (version != kWeightsVersion)
        throw Error(ErrorKind::Io, "unsupported weights version " + std::to_string(version));
    const std::uint32_t cfg_len = rd.u32();
    Config cfg;
    try {
        cfg = config_from_json(json::parse(rd.bytes(cfg_len)));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Io, std::string("bad config echo: ") + e.what());
    }

    const auto specs = required_tensors(cfg);
    std::map<std::string, const TensorSpec*> by_name;
    for (const auto& s : specs) by_name[s.name] = &s;

    const std::uint32_t count = rd.u32();
    std::map<std::string, Mat> tensors;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = rd.u32();
        const std::string name = rd.bytes(name_len);
        const std::uint32_t ndim = rd.u32();
        std::vector<int> dims(ndim);
        std::size_t total = 1;
        for (auto& d : dims) {
            d = static_cast<int>(rd.u32());
            total *= static_cast<std::size_t>(d);
        }
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw Error(ErrorKind::Io, "unexpected tensor in weights file: " + name);
        if (dims != it->second->shape)
            throw Error(ErrorKind::ShapeMismatch, "tensor shape mismatch: " + name);
        const int rows = dims[0];
        const int cols = dims.size() > 1 ? dims[1] : 1;
        Mat t(rows, cols);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) t(r, c) = static_cast<double>(rd.f32());
        (void)total;
        tensors[name] = std::move(t);
    }

    LoadedWeights out;
    out.config = cfg;
    out.weights = weights_from_tensors(cfg, tensors);  // throws MissingTensor if short
    return out;
}

}  // namespace mt3d
