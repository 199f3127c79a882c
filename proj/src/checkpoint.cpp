#include "lulc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "lulc/text.hpp"

static_assert(std::endian::native == std::endian::little,
              "container blobs are written as raw little-endian scalars");

namespace lulc {

// --------------------------------------------------------------------------
// Container codec

std::string encode_container(const Container& c) {
    std::string head = "LULC-CONTAINER 1 " + c.kind + "\n";
    for (const auto& line : c.manifest) head += line + "\n";
    std::string payload;
    for (const auto& b : c.blobs) {
        head += "blob " + b.name + " " + dtype_name(b.dtype) + " " +
                std::to_string(b.shape.size());
        for (int e : b.shape) head += " " + std::to_string(e);
        head += " " + std::to_string(payload.size()) + " " + std::to_string(b.bytes.size()) + "\n";
        payload += b.bytes;
    }
    head += "END\n";
    return head + payload;
}

Container decode_container(const std::string& bytes) {
    std::size_t pos = 0;
    auto next_line = [&]() -> std::string {
        std::size_t nl = bytes.find('\n', pos);
        if (nl == std::string::npos) throw FormatError("container: unterminated manifest");
        std::string line = bytes.substr(pos, nl - pos);
        pos = nl + 1;
        return line;
    };

    Container c;
    {
        const std::string header = next_line();
        auto tok = split(header, ' ');
        if (tok.size() != 3 || tok[0] != "LULC-CONTAINER")
            throw FormatError("container: bad header line '" + header + "'");
        if (tok[1] != "1")
            throw FormatError("container: unsupported format version '" + std::string(tok[1]) +
                              "' (expected 1)");
        c.kind = std::string(tok[2]);
    }

    struct PendingBlob {
        ContainerBlob blob;
        std::size_t offset = 0;
        std::size_t nbytes = 0;
    };
    std::vector<PendingBlob> pending;
    for (;;) {
        const std::string line = next_line();
        if (line == "END") break;
        if (line.rfind("blob ", 0) == 0) {
            auto tok = split(line, ' ');
            if (tok.size() < 5) throw FormatError("container: bad blob line '" + line + "'");
            PendingBlob p;
            p.blob.name = std::string(tok[1]);
            if (tok[2] == "f32")
                p.blob.dtype = Dtype::f32;
            else if (tok[2] == "f64")
                p.blob.dtype = Dtype::f64;
            else
                throw FormatError("container: unknown dtype '" + std::string(tok[2]) +
                                  "' for blob " + p.blob.name);
            const std::size_t rank = static_cast<std::size_t>(parse_int(tok[3], "blob rank"));
            if (tok.size() != 4 + rank + 2)
                throw FormatError("container: bad blob line '" + line + "'");
            for (std::size_t i = 0; i < rank; ++i)
                p.blob.shape.push_back(static_cast<int>(parse_int(tok[4 + i], "blob extent")));
            p.offset = static_cast<std::size_t>(parse_int(tok[4 + rank], "blob offset"));
            p.nbytes = static_cast<std::size_t>(parse_int(tok[5 + rank], "blob size"));
            pending.push_back(std::move(p));
        } else {
            c.manifest.push_back(line);
        }
    }

    const std::size_t payload_size = bytes.size() - pos;
    for (auto& p : pending) {
        std::int64_t count = 1;
        for (int e : p.blob.shape) count *= e;
        const std::size_t elem = p.blob.dtype == Dtype::f32 ? 4 : 8;
        if (p.nbytes != static_cast<std::size_t>(count) * elem)
            throw FormatError("container: blob '" + p.blob.name + "' declares " +
                              std::to_string(p.nbytes) + " bytes but shape " +
                              shape_str(p.blob.shape) + " needs " +
                              std::to_string(count * static_cast<std::int64_t>(elem)));
        if (p.offset + p.nbytes > payload_size)
            throw FormatError("container: truncated data for blob '" + p.blob.name + "'");
        p.blob.bytes = bytes.substr(pos + p.offset, p.nbytes);
        c.blobs.push_back(std::move(p.blob));
    }
    return c;
}

void save_container(const Container& c, const std::filesystem::path& path) {
    const std::string bytes = encode_container(c);
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw IoError("short write to " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string());
}

Container load_container(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return decode_container(ss.str());
}

// --------------------------------------------------------------------------
// Layer desc <-> manifest line

namespace {

std::string size2_str(Size2 s) { return std::to_string(s.h) + "x" + std::to_string(s.w); }

Size2 parse_size2(std::string_view s, std::string_view what) {
    auto parts = split(s, 'x');
    if (parts.size() != 2) throw FormatError("bad extent pair for " + std::string(what));
    return {static_cast<int>(parse_int(parts[0], what)),
            static_cast<int>(parse_int(parts[1], what))};
}

Activation parse_activation(std::string_view s) {
    if (s == "relu") return Activation::relu;
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "none") return Activation::none;
    throw FormatError("unknown activation '" + std::string(s) + "'");
}

std::map<std::string, std::string> kv_pairs(const std::vector<std::string_view>& toks,
                                            std::size_t from) {
    std::map<std::string, std::string> kv;
    for (std::size_t i = from; i < toks.size(); ++i) {
        auto eq = toks[i].find('=');
        if (eq == std::string_view::npos)
            throw FormatError("bad key=value token '" + std::string(toks[i]) + "'");
        kv.emplace(std::string(toks[i].substr(0, eq)), std::string(toks[i].substr(eq + 1)));
    }
    return kv;
}

const std::string& want(const std::map<std::string, std::string>& kv, const std::string& key,
                        const std::string& line) {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("missing '" + key + "' in layer line '" + line + "'");
    return it->second;
}

}  // namespace

std::string layer_desc_line(const LayerDesc& d) {
    std::string s = "layer " + d.name + " " + layer_kind_name(d.kind);
    switch (d.kind) {
        case LayerKind::conv:
            s += " out=" + std::to_string(d.out_channels) + " kernel=" + size2_str(d.kernel) +
                 " stride=" + size2_str(d.stride) + " pad=" + size2_str(d.pad) +
                 " act=" + activation_name(d.act) + " lr_mult=" + fmt(d.lr_mult);
            break;
        case LayerKind::pool:
            s += " window=" + size2_str(d.kernel) + " stride=" + size2_str(d.stride) +
                 " pad=" + size2_str(d.pad);
            break;
        case LayerKind::lrn:
            s += " n=" + std::to_string(d.lrn.n) + " alpha=" + fmt(d.lrn.alpha) +
                 " beta=" + fmt(d.lrn.beta) + " k=" + fmt(d.lrn.k);
            break;
        case LayerKind::fc:
            s += " units=" + std::to_string(d.units) + " act=" + activation_name(d.act) +
                 " lr_mult=" + fmt(d.lr_mult);
            break;
        case LayerKind::inception:
            s += " b1=" + std::to_string(d.inception.b1) +
                 " b3r=" + std::to_string(d.inception.b3_reduce) +
                 " b3=" + std::to_string(d.inception.b3) +
                 " b5r=" + std::to_string(d.inception.b5_reduce) +
                 " b5=" + std::to_string(d.inception.b5) +
                 " bp=" + std::to_string(d.inception.pool_proj) + " lr_mult=" + fmt(d.lr_mult);
            break;
    }
    return s;
}

LayerDesc parse_layer_desc_line(const std::string& line) {
    auto toks = split(line, ' ');
    if (toks.size() < 3 || toks[0] != "layer")
        throw FormatError("bad layer line '" + line + "'");
    LayerDesc d;
    d.name = std::string(toks[1]);
    const std::string kind(toks[2]);
    auto kv = kv_pairs(toks, 3);
    if (kind == "conv") {
        d.kind = LayerKind::conv;
        d.out_channels = static_cast<int>(parse_int(want(kv, "out", line), "out"));
        d.kernel = parse_size2(want(kv, "kernel", line), "kernel");
        d.stride = parse_size2(want(kv, "stride", line), "stride");
        d.pad = parse_size2(want(kv, "pad", line), "pad");
        d.act = parse_activation(want(kv, "act", line));
        d.lr_mult = parse_float(want(kv, "lr_mult", line), "lr_mult");
    } else if (kind == "pool") {
        d.kind = LayerKind::pool;
        d.kernel = parse_size2(want(kv, "window", line), "window");
        d.stride = parse_size2(want(kv, "stride", line), "stride");
        d.pad = parse_size2(want(kv, "pad", line), "pad");
    } else if (kind == "lrn") {
        d.kind = LayerKind::lrn;
        d.lrn.n = static_cast<int>(parse_int(want(kv, "n", line), "n"));
        d.lrn.alpha = parse_double(want(kv, "alpha", line), "alpha");
        d.lrn.beta = parse_double(want(kv, "beta", line), "beta");
        d.lrn.k = parse_double(want(kv, "k", line), "k");
    } else if (kind == "fc") {
        d.kind = LayerKind::fc;
        d.units = static_cast<int>(parse_int(want(kv, "units", line), "units"));
        d.act = parse_activation(want(kv, "act", line));
        d.lr_mult = parse_float(want(kv, "lr_mult", line), "lr_mult");
    } else if (kind == "inception") {
        d.kind = LayerKind::inception;
        d.inception.b1 = static_cast<int>(parse_int(want(kv, "b1", line), "b1"));
        d.inception.b3_reduce = static_cast<int>(parse_int(want(kv, "b3r", line), "b3r"));
        d.inception.b3 = static_cast<int>(parse_int(want(kv, "b3", line), "b3"));
        d.inception.b5_reduce = static_cast<int>(parse_int(want(kv, "b5r", line), "b5r"));
        d.inception.b5 = static_cast<int>(parse_int(want(kv, "b5", line), "b5"));
        d.inception.pool_proj = static_cast<int>(parse_int(want(kv, "bp", line), "bp"));
        d.lr_mult = parse_float(want(kv, "lr_mult", line), "lr_mult");
    } else {
        throw FormatError("unknown layer kind '" + kind + "' in '" + line + "'");
    }
    return d;
}

// --------------------------------------------------------------------------
// Checkpoints

Checkpoint make_checkpoint(const Network<float>& net, CheckpointMeta meta) {
    return Checkpoint{net.spec, net.blobs, meta};
}

Network<float> to_network(const Checkpoint& ckpt) {
    auto units = learnable_units(ckpt.spec);
    std::size_t expected = 0;
    for (const auto& u : units) {
        expected += 2;
        auto wit = ckpt.blobs.find(u.name + ".weights");
        if (wit == ckpt.blobs.end())
            throw FormatError("checkpoint is missing blob '" + u.name + ".weights'");
        if (wit->second.shape() != u.weight_shape)
            throw FormatError("checkpoint blob '" + u.name + ".weights' has shape " +
                              shape_str(wit->second.shape()) + ", spec wants " +
                              shape_str(u.weight_shape));
        auto bit = ckpt.blobs.find(u.name + ".bias");
        if (bit == ckpt.blobs.end())
            throw FormatError("checkpoint is missing blob '" + u.name + ".bias'");
        if (bit->second.shape() != std::vector<int>{u.bias_len})
            throw FormatError("checkpoint blob '" + u.name + ".bias' has shape " +
                              shape_str(bit->second.shape()) + ", spec wants [" +
                              std::to_string(u.bias_len) + "]");
    }
    if (ckpt.blobs.size() != expected)
        throw FormatError("checkpoint holds " + std::to_string(ckpt.blobs.size()) +
                          " blobs, spec wants " + std::to_string(expected));
    return Network<float>{ckpt.spec, ckpt.blobs};
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    validate_spec(ckpt.spec);
    Container c;
    c.kind = "checkpoint";
    c.manifest.push_back("meta iterations " + std::to_string(ckpt.meta.iterations));
    c.manifest.push_back("meta mean " + fmt(ckpt.meta.mean[0]) + " " + fmt(ckpt.meta.mean[1]) +
                         " " + fmt(ckpt.meta.mean[2]));
    c.manifest.push_back("input " + std::to_string(ckpt.spec.input_shape[0]) + " " +
                         std::to_string(ckpt.spec.input_shape[1]) + " " +
                         std::to_string(ckpt.spec.input_shape[2]));
    c.manifest.push_back("classes " + std::to_string(ckpt.spec.num_classes));
    for (const auto& l : ckpt.spec.layers) c.manifest.push_back(layer_desc_line(l));
    for (const auto& [name, t] : ckpt.blobs) {
        ContainerBlob b;
        b.name = name;
        b.dtype = Dtype::f32;
        b.shape = t.shape();
        b.bytes.resize(static_cast<std::size_t>(t.size()) * 4);
        std::memcpy(b.bytes.data(), t.data(), b.bytes.size());
        c.blobs.push_back(std::move(b));
    }
    save_container(c, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    Container c = load_container(path);
    if (c.kind != "checkpoint")
        throw FormatError(path.string() + ": container holds '" + c.kind +
                          "', expected 'checkpoint'");
    Checkpoint ckpt;
    for (const auto& line : c.manifest) {
        auto toks = split(line, ' ');
        if (toks.empty()) continue;
        if (toks[0] == "meta") {
            if (toks.size() >= 3 && toks[1] == "iterations")
                ckpt.meta.iterations = parse_int(toks[2], "iterations");
            else if (toks.size() >= 5 && toks[1] == "mean")
                ckpt.meta.mean = {parse_double(toks[2], "mean"), parse_double(toks[3], "mean"),
                                  parse_double(toks[4], "mean")};
            else
                throw FormatError("bad meta line '" + line + "'");
        } else if (toks[0] == "input") {
            if (toks.size() != 4) throw FormatError("bad input line '" + line + "'");
            ckpt.spec.input_shape = {static_cast<int>(parse_int(toks[1], "input C")),
                                     static_cast<int>(parse_int(toks[2], "input H")),
                                     static_cast<int>(parse_int(toks[3], "input W"))};
        } else if (toks[0] == "classes") {
            if (toks.size() != 2) throw FormatError("bad classes line '" + line + "'");
            ckpt.spec.num_classes = static_cast<int>(parse_int(toks[1], "classes"));
        } else if (toks[0] == "layer") {
            ckpt.spec.layers.push_back(parse_layer_desc_line(line));
        } else {
            throw FormatError("unknown manifest line '" + line + "'");
        }
    }
    for (const auto& b : c.blobs) {
        if (b.dtype != Dtype::f32)
            throw FormatError("checkpoint blob '" + b.name + "' must be f32");
        std::int64_t count = 1;
        for (int e : b.shape) count *= e;
        std::vector<float> data(static_cast<std::size_t>(count));
        std::memcpy(data.data(), b.bytes.data(), b.bytes.size());
        ckpt.blobs.emplace(b.name, Tensor<float>(b.shape, std::move(data)));
    }
    to_network(ckpt);  // validates blob set against the spec
    return ckpt;
}

Checkpoint replace_head(const Checkpoint& ckpt, int new_num_classes, float head_lr_mult,
                        float body_lr_mult, std::uint64_t init_seed,
                        std::vector<std::string>* warnings) {
    validate_spec(ckpt.spec);
    if (new_num_classes < 2)
        throw ParamError("replace_head needs new_num_classes >= 2, got " +
                         std::to_string(new_num_classes));
    const LayerDesc& last = ckpt.spec.layers.back();
    if (last.kind != LayerKind::fc)
        throw BuildError("head surgery requires a fully-connected final layer, '" + last.name +
                         "' is " + layer_kind_name(last.kind));
    if (head_lr_mult <= body_lr_mult && warnings)
        warnings->push_back("head lr_mult " + fmt(head_lr_mult) +
                            " is not greater than body lr_mult " + fmt(body_lr_mult) +
                            "; the head usually learns faster than the body");

    Checkpoint out;
    out.spec = ckpt.spec;
    out.spec.num_classes = new_num_classes;
    for (auto& l : out.spec.layers) {
        if (l.kind == LayerKind::conv || l.kind == LayerKind::fc ||
            l.kind == LayerKind::inception)
            l.lr_mult = body_lr_mult;
    }
    LayerDesc& head = out.spec.layers.back();
    head.units = new_num_classes;
    head.lr_mult = head_lr_mult;

    out.blobs = ckpt.blobs;
    out.blobs.erase(head.name + ".weights");
    out.blobs.erase(head.name + ".bias");
    auto units = learnable_units(out.spec);
    Network<float> scratch{out.spec, std::move(out.blobs)};
    for (const auto& u : units)
        if (u.name == head.name) init_unit(scratch, u, init_seed, "surgery.");
    out.blobs = std::move(scratch.blobs);

    out.meta = ckpt.meta;
    out.meta.iterations = 0;  // fresh fine-tune; the stored mean is kept
    return out;
}

}  // namespace lulc
